import pytest
from ..exceptions import (
    ConfigError, DataIOError, DenseCapError, GenerationError, LearnLUError,
    NumericalBreakdownError, SingularFactorError, SparseStructureError,
    TapeError, TrainingDivergenceError, error_prefix, lazy_error_prefix,
)


def f(x, y):
    "Function that raises an error"
    raise ValueError("an error")


def test_lazy_error_prefix():
    prefix = 'my error context'
    with pytest.raises(ValueError) as excinfo:
        with lazy_error_prefix(lambda: prefix):
            f(1, 2)
    e = excinfo.value
    assert e.args[0].startswith(prefix)


def test_lazy_error_prefix_only_formats_on_error():
    calls = []

    def prefix():
        calls.append(1)
        return 'context'

    with lazy_error_prefix(prefix):
        pass
    assert calls == []


def test_error_prefix():
    prefix = 'my error context'
    with pytest.raises(ValueError) as excinfo:
        with error_prefix(prefix):
            f(1, 2)
    e = excinfo.value
    assert e.args[0] == 'my error context:\nan error'


def test_error_prefix_without_message():
    with pytest.raises(TapeError) as excinfo:
        with error_prefix('context'):
            raise TapeError()
    assert excinfo.value.args == ('context',)


@pytest.mark.parametrize('error, code', [
    (LearnLUError('x'), 1),
    (ConfigError('x'), 2),
    (SparseStructureError('x'), 2),
    (DataIOError('x'), 3),
    (NumericalBreakdownError('x'), 4),
    (SingularFactorError('x', row=0), 4),
    (DenseCapError('x'), 4),
    (TrainingDivergenceError('x'), 5),
    (GenerationError('x'), 6),
])
def test_exit_codes(error, code):
    assert isinstance(error, LearnLUError)
    assert error.exit_code == code


def test_builtin_bases():
    assert isinstance(ConfigError('x'), ValueError)
    assert isinstance(DataIOError('x'), IOError)
    assert isinstance(SingularFactorError('x'), ArithmeticError)


def test_error_fields():
    assert SingularFactorError('x', row=7).row == 7
    assert SingularFactorError('x').row is None
    assert TrainingDivergenceError('x').history == []
    history = [(1, 0.5, 3.0)]
    e = TrainingDivergenceError('x', history=history)
    assert e.history == history
    assert e.history is not history
