"""Exception hierarchy shared by every arithtree module."""


class ArithTreeError(Exception):
    """Base class for all errors raised by arithtree."""


class UnsupportedWidth(ArithTreeError, ValueError):
    pass


class IllegalTree(ArithTreeError, ValueError):
    pass


class IllegalAction(ArithTreeError, ValueError):
    pass


class LevelTooSmall(ArithTreeError, ValueError):
    pass


class ParseError(ArithTreeError, ValueError):
    pass


class WidthMismatch(ArithTreeError, ValueError):
    pass


class NoEvaluations(ArithTreeError, RuntimeError):
    pass


class UnvisitedNode(ArithTreeError, RuntimeError):
    pass


class TerminalState(ArithTreeError, RuntimeError):
    pass


class NotTerminal(ArithTreeError, RuntimeError):
    pass


class NonFiniteInput(ArithTreeError, ValueError):
    pass


class NonFiniteGradient(ArithTreeError, FloatingPointError):
    pass


class EpisodeAborted(ArithTreeError, RuntimeError):
    pass


class CommandFailed(ArithTreeError, RuntimeError):
    pass


class EvaluatorTimeout(ArithTreeError, TimeoutError):
    pass


class ConflictingValue(ArithTreeError, ValueError):
    """Same cache key stored with two different results."""


class UnboundInput(ArithTreeError, KeyError):
    pass


class InvalidModuleName(ArithTreeError, ValueError):
    pass
