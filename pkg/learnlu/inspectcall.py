"Tools for using reflection to inspect function calls."
import inspect

_POSITIONAL_KINDS = (
    inspect.Parameter.POSITIONAL_ONLY,
    inspect.Parameter.POSITIONAL_OR_KEYWORD,
)


def get_callargs(f, *call_args, **call_kwargs):
    """
    Return a dictionary mapping the names of the parameters of `f`,
    including `*packed_varargs` and `**packed_kwargs` style parameters,
    to their values in the call `f(*call_args, **call_kwargs)`.

    This is used when formatting error context messages, so it must never
    raise: that is what separates it from `inspect.Signature.bind`.

    PARAMETERS
    ----------
    f : callable
        The function being called. Decorators built with `wrapt` keep the
        signature visible; `functools.wraps`-style decorators usually do
        too on python 3.
    call_args : tuple
        The positional arguments in a call to `f`.
    call_kwargs : dict
        The keyword arguments in a call to `f`.

    RETURNS
    -------
    arguments : dict
        Every regular parameter of `f` is present. Parameters missing from
        the call and without a default map to `"__missing_argument_<name>__"`.
        A varargs parameter maps to a (possibly empty) tuple, a packed
        kwargs parameter to a (possibly empty) dict. If the signature of
        `f` cannot be read, the result is empty.

    EXAMPLES
    --------
    >>> def solve(A, b, tol=1e-8, *extra, **options): pass

    >>> get_callargs(solve, 'A', tol=1e-6, kmax=10)
    # {'A': 'A',
    #  'b': '__missing_argument_b__',
    #  'tol': 1e-06,
    #  'extra': (),
    #  'options': {'kmax': 10}}

    """
    try:
        signature = inspect.signature(f)
    except (TypeError, ValueError):
        return {}
    return callargs_from_signature(signature, *call_args, **call_kwargs)


def callargs_from_signature(signature, *call_args, **call_kwargs):
    """
    Like `get_callargs` (see that function for docs) except that it takes
    an `inspect.Signature` instead of the callable.

    Extra positional or keyword arguments that would make the call
    illegal are ignored rather than reported.
    """
    arguments = {}
    positional = list(call_args)
    named = set(signature.parameters)
    for name, param in signature.parameters.items():
        if param.kind == inspect.Parameter.VAR_POSITIONAL:
            arguments[name] = tuple(positional)
            positional = []
        elif param.kind == inspect.Parameter.VAR_KEYWORD:
            arguments[name] = {
                k: v for k, v in call_kwargs.items() if k not in named
            }
        elif param.kind in _POSITIONAL_KINDS and positional:
            arguments[name] = positional.pop(0)
        elif name in call_kwargs:
            arguments[name] = call_kwargs[name]
        elif param.default is not inspect.Parameter.empty:
            arguments[name] = param.default
        else:
            arguments[name] = '__missing_argument_{}__'.format(name)
    return arguments
