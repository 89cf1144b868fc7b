"""``arithtree`` command line.

Every command accepts ``--config FILE`` (a JSON object whose keys are option
names, e.g. ``{"steps": 1000}``); explicit flags override it.  Runs that
take ``--log`` write JSON lines whose first record is a provenance header
with the resolved configuration.  Exit status is 1 for failures inside a
command and 2 for usage errors.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import tempfile
from pathlib import Path

from . import __version__
from .adder_search import SearchConfig, SearchMode, optimize_levels, run_search
from .codesign import CodesignConfig, MultiplierDesign, run_codesign
from .cost_eval import (
    CacheStore,
    cached,
    external_eval,
    pareto_front,
    proxy_eval_adder,
    proxy_eval_multiplier,
    theoretical_eval,
    two_level_retrieval,
)
from .exceptions import ArithTreeError, ParseError
from .hdl_netlist import (
    Exhaustive,
    Random,
    build_adder_netlist,
    build_multiplier_netlist,
    emit_verilog,
    verify,
)
from .prefix_tree import Family, PrefixTree, deserialize, generate_seed, metrics, serialize, theory_size_bound

logger = logging.getLogger("arithtree")


class UsageError(Exception):
    pass


# ------------------------------------------------------------------ helpers


def load_design(path: str | Path) -> PrefixTree | MultiplierDesign:
    """Read a prefix-tree file or a multiplier bundle, by content."""
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        try:
            return MultiplierDesign.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}: {exc}") from None
    return deserialize(text)


def _netlist(design):
    if isinstance(design, PrefixTree):
        return build_adder_netlist(design)
    return build_multiplier_netlist(design.state, design.tree)


def _proxy(design):
    if isinstance(design, PrefixTree):
        return proxy_eval_adder(design)
    return proxy_eval_multiplier(design.state, design.tree)


def _canonical(design) -> str:
    if isinstance(design, PrefixTree):
        return serialize(design)
    return json.dumps({k: v for k, v in design.to_dict().items() if k in ("actions", "prefixtree")}, sort_keys=True)


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


class _RunLog:
    """JSON-lines log; a no-op when no path is given."""

    def __init__(self, path: str | None, command: str, args: argparse.Namespace):
        self.fh = open(path, "w", encoding="utf-8") if path else None
        if self.fh:
            self.write({"type": "header", "command": command, "version": __version__, "config": _resolved(args)})

    def write(self, record: dict) -> None:
        if self.fh:
            self.fh.write(json.dumps(record, sort_keys=True) + "\n")

    def close(self) -> None:
        if self.fh:
            self.fh.close()


def _resolved(args: argparse.Namespace) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}


# ----------------------------------------------------------------- commands


def cmd_gen(args) -> int:
    tree = generate_seed(args.family, args.bits)
    _write_text(args.out, serialize(tree))
    m = metrics(tree)
    print(f"{args.family} width={args.bits} level={m.level} size={m.size}", file=sys.stderr)
    return 0


def cmd_optimize_adder(args) -> int:
    log = _RunLog(args.log, "optimize-adder", args)
    try:
        if args.objective == "size":
            if args.bits & (args.bits - 1):
                raise UsageError("--objective size starts from Sklansky and needs a power-of-two --bits")
            base = SearchConfig(beta=args.beta, c=args.c, rng_seed=args.seed)
            stages = optimize_levels(args.bits, args.steps, args.extra_levels, config=base, log=bool(args.log))
            rows = []
            for st in stages:
                for rec in st.result.records:
                    log.write({"type": "eval", "level_bound": st.level, **rec})
                bound = theory_size_bound(args.bits, st.level)
                rows.append({"level": st.level, "size": st.size, "theory_bound": bound, "steps": st.steps_run})
                log.write({"type": "stage", **rows[-1]})
                if args.design_dir:
                    Path(args.design_dir).mkdir(parents=True, exist_ok=True)
                    (Path(args.design_dir) / f"level_{st.level}.pt").write_text(serialize(st.tree), encoding="utf-8")
            _write_csv(args.out, ["level", "size", "theory_bound", "steps"], rows)
        else:
            seed = load_design(args.seed_design) if args.seed_design else generate_seed(args.family, args.bits)
            if not isinstance(seed, PrefixTree):
                raise UsageError("--seed-design must be a prefix-tree file")
            cfg = SearchConfig(
                beta=args.beta,
                c=args.c,
                alpha=args.alpha,
                mode=SearchMode.PRACTICAL,
                step_budget=args.steps,
                rng_seed=args.seed,
                level_bound=args.level_bound,
            )
            res = run_search(seed, cfg, log=bool(args.log))
            for rec in res.records:
                log.write({"type": "eval", **rec})
            rows = []
            for tree, ev in res.pareto:
                m = metrics(tree)
                rows.append({"level": m.level, "size": m.size, "delay": ev.delay, "area": ev.area})
            rows.sort(key=lambda r: (r["area"], r["delay"]))
            _write_csv(args.out, ["level", "size", "delay", "area"], rows)
            if args.design_dir:
                Path(args.design_dir).mkdir(parents=True, exist_ok=True)
                (Path(args.design_dir) / "best.pt").write_text(serialize(res.best_tree), encoding="utf-8")
    finally:
        log.close()
    return 0


def cmd_optimize_multiplier(args) -> int:
    cfg = CodesignConfig(
        width=args.bits,
        rounds=args.rounds,
        compressor_steps=args.compressor_steps,
        prefix_steps=args.prefix_steps,
        alpha=args.alpha,
        rng_seed=args.seed,
    )
    log = _RunLog(args.log, "optimize-multiplier", args)
    try:
        design = run_codesign(cfg, log=lambda rec: log.write({"type": "phase", **rec}))
        log.write({"type": "result", "delay": design.eval.delay, "area": design.eval.area})
    finally:
        log.close()
    _write_text(args.out, design.to_json())
    print(f"delay={design.eval.delay:g} area={design.eval.area:g}", file=sys.stderr)
    return 0


def cmd_emit_verilog(args) -> int:
    design = load_design(args.design)
    _write_text(args.out, emit_verilog(_netlist(design), args.module))
    return 0


def cmd_verify(args) -> int:
    design = load_design(args.design)
    mode = Random(args.random, args.seed) if args.random else Exhaustive()
    report = verify(_netlist(design), mode, name=str(args.design))
    _write_text(args.out, report.to_json() + "\n")
    return 0 if report.passed else 1


def cmd_eval(args) -> int:
    designs = [load_design(p) for p in args.design]
    cache = CacheStore(args.cache) if args.cache else None

    def external(design):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "design.v"
            path.write_text(emit_verilog(_netlist(design), args.module), encoding="utf-8")
            return external_eval(path, args.external_cmd, timeout=args.timeout, cache=cache)

    if args.theoretical:
        if not all(isinstance(d, PrefixTree) for d in designs):
            raise UsageError("--theoretical applies to prefix-tree designs only")
        fast = theoretical_eval
    else:
        fast = _proxy
    if cache is not None:
        fast = cached(fast, cache, _canonical)

    out = []
    if args.external_cmd and len(designs) > 1:
        for rec in two_level_retrieval(designs, fast, external, args.fraction, jobs=args.jobs):
            row = {"design": args.design[rec.index], "stage": rec.stage}
            row.update(rec.result.to_dict() if rec.result else {"error": rec.error})
            out.append(row)
    else:
        fn = external if args.external_cmd else fast
        for path, design in zip(args.design, designs):
            out.append({"design": path, **fn(design).to_dict()})
    _write_text(args.out, "".join(json.dumps(r, sort_keys=True) + "\n" for r in out))
    if cache is not None:
        print(f"cache hits={cache.hits} misses={cache.misses}", file=sys.stderr)
    return 1 if any("error" in r for r in out) else 0


def _read_points(path: str) -> list[dict]:
    points = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if isinstance(rec, dict) and "delay" in rec and "area" in rec and rec.get("type") != "header":
                points.append(rec)
    if not points:
        raise ParseError(f"{path}: no records with delay and area")
    return points


def _write_csv(path: str | None, fields: list[str], rows: list[dict]) -> None:
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="", encoding="utf-8")
    try:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def cmd_pareto(args) -> int:
    points = _read_points(args.log)
    front = set(pareto_front([(p["area"], p["delay"]) for p in points]).tolist())
    rows = []
    for section, keep in (("front", True), ("all", None)):
        for k, p in enumerate(points):
            if keep is None or k in front:
                rows.append({"section": section, "index": k, "area": p["area"], "delay": p["delay"], "design": " ".join(str(p.get("design", "")).split())})
    front_rows = [r for r in rows if r["section"] == "front"]
    front_rows.sort(key=lambda r: (r["area"], r["delay"], r["index"]))
    rows = front_rows + [r for r in rows if r["section"] == "all"]
    _write_csv(args.out, ["section", "index", "area", "delay", "design"], rows)
    return 0


# ------------------------------------------------------------------- parser


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults")
    common.add_argument("--jobs", type=_positive_int, default=1, help="worker cap for parallel evaluation")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="arithtree", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", parents=[common], help="write a classic prefix-tree design")
    p.add_argument("--family", choices=[f.value for f in Family], default="sklansky")
    p.add_argument("--bits", type=_positive_int, required=True)
    p.add_argument("--out", help="design file (default stdout)")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("optimize-adder", parents=[common], help="MCTS prefix-tree search")
    p.add_argument("--bits", type=_positive_int, required=True)
    p.add_argument("--objective", choices=["size", "delay"], default="size")
    p.add_argument("--steps", type=_nonneg_int, default=400_000, help="MCTS iterations (per level for size)")
    p.add_argument("--extra-levels", type=_nonneg_int, default=4, help="levels above log2(bits) to sweep")
    p.add_argument("--family", choices=[f.value for f in Family], default="sklansky", help="seed for --objective delay")
    p.add_argument("--seed-design", help="seed prefix-tree file for --objective delay")
    p.add_argument("--level-bound", type=_positive_int)
    p.add_argument("--alpha", type=float, default=0.001)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--c", type=float, default=10 * math.sqrt(2))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV table (default stdout)")
    p.add_argument("--design-dir", help="directory for the best design files")
    p.add_argument("--log", help="JSON-lines run log")
    p.set_defaults(func=cmd_optimize_adder)

    p = sub.add_parser("optimize-multiplier", parents=[common], help="compressor/prefix co-design")
    p.add_argument("--bits", type=_positive_int, required=True)
    p.add_argument("--rounds", type=_positive_int, default=3)
    p.add_argument("--compressor-steps", type=_nonneg_int, default=900)
    p.add_argument("--prefix-steps", type=_nonneg_int, default=100)
    p.add_argument("--alpha", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="design bundle (default stdout)")
    p.add_argument("--log", help="JSON-lines run log")
    p.set_defaults(func=cmd_optimize_multiplier)

    p = sub.add_parser("emit-verilog", parents=[common], help="structural Verilog for a design")
    p.add_argument("--design", required=True)
    p.add_argument("--module", default="top")
    p.add_argument("--out")
    p.set_defaults(func=cmd_emit_verilog)

    p = sub.add_parser("verify", parents=[common], help="check a design against integer arithmetic")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--exhaustive", action="store_true", help="all input pairs (default)")
    g.add_argument("--random", type=_positive_int, metavar="COUNT", help="seeded random vectors")
    p.add_argument("--design", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="JSON report (default stdout)")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("eval", parents=[common], help="score designs")
    p.add_argument("--design", required=True, nargs="+")
    p.add_argument("--theoretical", action="store_true", help="level/size instead of the proxy")
    p.add_argument("--external-cmd", help="command template with a {design} placeholder")
    p.add_argument("--fraction", type=float, default=0.1, help="share sent to the external stage")
    p.add_argument("--timeout", type=float, default=600.0)
    p.add_argument("--module", default="top")
    p.add_argument("--cache", help="JSON-lines cache journal")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pareto", parents=[common], help="export the delay/area front of a log")
    p.add_argument("--log", required=True)
    p.add_argument("--out", help="CSV (default stdout)")
    p.set_defaults(func=cmd_pareto)
    return parser


def _prescan(argv: list[str], commands) -> tuple[str | None, str | None]:
    command = next((a for a in argv if a in commands), None)
    for k, a in enumerate(argv):
        if a == "--config" and k + 1 < len(argv):
            return command, argv[k + 1]
        if a.startswith("--config="):
            return command, a.split("=", 1)[1]
    return command, None


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    """Parse ``argv`` with option defaults taken from ``--config`` when given.

    The file is read before parsing so it can also satisfy required options.
    """
    subparsers = parser._subparsers._group_actions[0].choices  # noqa: SLF001
    command, path = _prescan(argv, subparsers)
    if path is not None and command is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read --config {path}: {exc}")
        if not isinstance(overrides, dict):
            parser.error("--config must hold a JSON object")
        overrides = {k.replace("-", "_"): v for k, v in overrides.items()}
        sub = subparsers[command]
        actions = {a.dest: a for a in sub._actions}  # noqa: SLF001
        unknown = sorted(set(overrides) - set(actions) - {"help"})
        if unknown:
            parser.error(f"unknown keys in --config: {', '.join(unknown)}")
        for key in overrides:
            actions[key].required = False
        sub.set_defaults(**overrides)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except BrokenPipeError:
        return 0
    except UsageError as exc:
        print(f"arithtree {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (ArithTreeError, ValueError, OSError) as exc:
        print(f"arithtree {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
