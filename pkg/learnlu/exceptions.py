"""
Error types for learnlu, and tools to attach context to errors.

Every error raised on purpose by the library derives from `LearnLUError`
and carries an `exit_code`, which the command-line front end uses as the
process exit status.
"""
import contextlib


class LearnLUError(Exception):
    "Base class of all learnlu errors."
    exit_code = 1


class ConfigError(LearnLUError, ValueError):
    "An invalid configuration value, flag, or missing input field."
    exit_code = 2


class SparseStructureError(LearnLUError, ValueError):
    "A sparse matrix or vector whose structure violates a kernel's contract."
    exit_code = 2


class DataIOError(LearnLUError, IOError):
    "A dataset, model, or report file that cannot be read or written."
    exit_code = 3


class NumericalBreakdownError(LearnLUError, ArithmeticError):
    "A numerical kernel that cannot continue (singular pivot, no convergence)."
    exit_code = 4


class SingularFactorError(NumericalBreakdownError):
    """
    A triangular factor with a zero or missing diagonal entry.

    The offending row is available as `row`.
    """

    def __init__(self, message, row=None):
        super(SingularFactorError, self).__init__(message)
        self.row = row


class DenseCapError(NumericalBreakdownError):
    "A dense expansion was requested for a matrix above the dense size cap."


class TrainingDivergenceError(LearnLUError, ArithmeticError):
    """
    Training produced a non-finite value.

    The epochs completed before the failure are available as `history` so
    callers can still persist them.
    """
    exit_code = 5

    def __init__(self, message, history=None):
        super(TrainingDivergenceError, self).__init__(message)
        self.history = list(history or [])


class GenerationError(LearnLUError, RuntimeError):
    "The dataset generator could not produce a valid problem."
    exit_code = 6


class TapeError(LearnLUError, RuntimeError):
    "Misuse of a differentiation tape, e.g. running backward twice."


def error_prefix(msg_prefix):
    """
    Non-lazy version of `lazy_error_prefix`. The `msg_prefix` argument
    should be a string.
    """
    return lazy_error_prefix(lambda: msg_prefix)


@contextlib.contextmanager
def lazy_error_prefix(msg_prefix_f):
    """
    Create an error context manager that attaches a prefix to the exception
    message and then re-raises it (type and traceback are preserved).

    The `msg_prefix_f` argument should be a callable taking no arguments and
    returning the prefix; it only runs when an error actually happens, so
    it is fine for it to do some formatting work.
    """
    try:
        yield
    except Exception as e:
        msg_prefix = msg_prefix_f()
        if len(e.args) == 0:
            e.args = (msg_prefix, )
        else:
            e.args = tuple(
                ["%s:\n%s" % (msg_prefix, e.args[0])] + [a for a in e.args[1:]]
            )
        raise
