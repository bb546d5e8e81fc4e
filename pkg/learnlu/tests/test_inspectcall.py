import inspect

from ..inspectcall import callargs_from_signature, get_callargs


def solve(A, b, tol=1e-8, *extra, **options):
    pass


def test_get_callargs_defaults_and_packing():
    assert get_callargs(solve, 'A', tol=1e-6, kmax=10) == {
        'A': 'A',
        'b': '__missing_argument_b__',
        'tol': 1e-6,
        'extra': (),
        'options': {'kmax': 10},
    }


def test_get_callargs_varargs():
    out = get_callargs(solve, 'A', 'b', 1e-4, 'x', 'y')
    assert out['tol'] == 1e-4
    assert out['extra'] == ('x', 'y')
    assert out['options'] == {}


def test_get_callargs_ignores_illegal_extras():
    def f(x):
        pass

    assert get_callargs(f, 1, 2, y=3) == {'x': 1}


def test_get_callargs_keyword_only():
    def f(x, *, split='test'):
        pass

    assert get_callargs(f, 'data') == {'x': 'data', 'split': 'test'}
    assert get_callargs(f, 'data', split='val') == {'x': 'data',
                                                    'split': 'val'}


def test_get_callargs_unreadable_signature():
    class Opaque(object):
        __signature__ = 'not a signature'

        def __call__(self):
            pass

    assert get_callargs(Opaque()) == {}


def test_callargs_from_signature():
    signature = inspect.signature(solve)
    assert callargs_from_signature(signature, b='b', A='A')['b'] == 'b'
