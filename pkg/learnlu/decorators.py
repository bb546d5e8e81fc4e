"""
Decorators used by the commands and the dataset I/O: error context built
from call arguments, and post-mortem debugging for `--debug`.
"""
import logging
import time
import traceback

import wrapt

from .exceptions import lazy_error_prefix
from .inspectcall import get_callargs

log = logging.getLogger(__name__)


def _format_context(template, wrapped, args, kwargs):
    fields = get_callargs(wrapped, *args, **kwargs)
    try:
        return template.format(**fields)
    except (KeyError, IndexError, ValueError, AttributeError):
        return '%s\n(context not formatted for args=%r kwargs=%r)' % (
            template, args, kwargs)


def error_prefix_from_args(context_message):
    """
    Decorator attaching `context_message`, formatted with the call's
    arguments, to any error the target raises.

    PARAMETERS
    ----------
    context_message : str
        A `str.format` template. Its fields are the parameter names of the
        target, defaults included. It is only formatted on error; if that
        fails, the raw template and the call arguments are used instead.

    RETURNS
    -------
    decorator : function

    EXAMPLE
    -------

    >>> @error_prefix_from_args("while loading the {split} split")
    >>> def load_split(directory, split): ...

    >>> load_split('data', 'val')
    # DataIOError: while loading the val split:
    #    could not read vector file data/val/val-0000.b.vec: ...

    The exception keeps its type, fields and traceback. Put this decorator
    innermost if other decorators hide the target's signature.
    """

    @wrapt.decorator
    def wrapper(wrapped, instance, args, kwargs):
        with lazy_error_prefix(
                lambda: _format_context(context_message, wrapped, args,
                                        kwargs)):
            return wrapped(*args, **kwargs)

    return wrapper


def debug(debug=True, delay=0, use_debugger=None):
    """
    Decorator that opens a post-mortem debugger when the target raises.

    PARAMETERS
    ----------
    debug : bool, optional
        When false the target runs undecorated in effect, so `--debug` can
        be a plain flag.
    delay : {float, int}, optional
        Seconds to wait after printing the traceback, leaving time for a
        keyboard interrupt.
    use_debugger : object, optional
        Anything with `post_mortem(tb)`. Defaults to `pudb` when it is
        installed, else `pdb`.

    RETURNS
    -------
    decorator : function
        The wrapped call returns None once the debugger exits.
    """
    @wrapt.decorator
    def wrapper(wrapped, instance, args, kwargs):
        try:
            return wrapped(*args, **kwargs)
        except Exception as e:
            if not debug:
                raise
            traceback.print_exc()
            if delay:
                log.info("entering the debugger in %s seconds, C-c to quit",
                         delay)
                time.sleep(delay)
            debugger = use_debugger or _default_debugger()
            debugger.post_mortem(e.__traceback__)

    return wrapper


def _default_debugger():
    try:
        import pudb as debugger
    except ImportError:
        log.info("pudb is not installed, using pdb")
        import pdb as debugger
    return debugger
