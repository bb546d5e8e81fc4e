import numpy as np
import pytest

from ..exceptions import TapeError
from ..sparse import csr_from_coo
from ..tape import Tape, backward

rng = np.random.default_rng(42)


def check_gradient(build, values, h=1e-6, rtol=1e-5, atol=1e-7):
    """
    Compare tape gradients of the scalar `build(tape, variables)` against
    central finite differences, entry by entry.
    """
    tape = Tape()
    variables = {k: tape.parameter(k, v) for k, v in values.items()}
    grads = tape.backward(build(tape, variables))

    def evaluate(name, value):
        shifted = dict(values)
        shifted[name] = value
        off = Tape(record=False)
        variables = {k: off.parameter(k, v) for k, v in shifted.items()}
        return float(build(off, variables).value)

    for name, value in values.items():
        value = np.asarray(value, dtype=np.float64)
        fd = np.zeros_like(value)
        for idx in np.ndindex(*value.shape):
            plus, minus = value.copy(), value.copy()
            plus[idx] += h
            minus[idx] -= h
            fd[idx] = (evaluate(name, plus) - evaluate(name, minus)) / (2 * h)
        assert grads[name].shape == value.shape
        assert np.allclose(grads[name], fd, rtol=rtol, atol=atol), name


def away_from_zero(shape, low=0.1):
    x = rng.uniform(low, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


# primitives ---------------

def test_affine_gradient():
    check_gradient(
        lambda t, v: t.sum_squares(t.affine(v['x'], v['W'], v['b'])),
        {'x': rng.standard_normal((3, 2)), 'W': rng.standard_normal((2, 4)),
         'b': rng.standard_normal(4)})


def test_affine_quadratic_closed_form():
    x = rng.standard_normal((5, 3))
    W = rng.standard_normal((3, 2))
    b = rng.standard_normal(2)
    tape = Tape()
    out = tape.sum_squares(tape.affine(x, tape.parameter('W', W), b))
    grads = tape.backward(out)
    assert np.allclose(grads['W'], 2 * x.T @ (x @ W + b))


def test_relu_and_tanh_gradients():
    check_gradient(lambda t, v: t.sum_squares(t.relu(v['x'])),
                   {'x': away_from_zero((4, 3))})
    check_gradient(lambda t, v: t.sum_squares(t.tanh(v['x'])),
                   {'x': rng.standard_normal((4, 3))})


def test_zeta_gradient():
    x = np.array([0.5, -0.3, 0.05, -0.02, 0.2])
    check_gradient(lambda t, v: t.sum_squares(t.zeta(v['x'], 0.1)), {'x': x})
    tape = Tape(record=False)
    assert tape.zeta(np.array([0.0, 0.05, -0.05, 0.5]), 0.1).value.tolist() == [
        0.1, 0.1, -0.1, 0.5]


def test_zeta_relaxed_gradient():
    check_gradient(lambda t, v: t.sum_squares(t.zeta_relaxed(v['x'], 0.1)),
                   {'x': away_from_zero(6, low=0.01)})


def test_concat_gradient():
    check_gradient(
        lambda t, v: t.sum_squares(t.scale(t.concat([v['a'], v['b']]), 3.0)),
        {'a': rng.standard_normal((3, 2)), 'b': rng.standard_normal((3, 1))})


def test_gather_gradient():
    index = np.array([0, 2, 2, 1, 0])
    check_gradient(lambda t, v: t.sum_squares(t.gather(v['x'], index)),
                   {'x': rng.standard_normal((3, 2))})
    rows = np.array([1, 1, 0])
    check_gradient(lambda t, v: t.sum_squares(t.gather(v['x'], (rows, 0))),
                   {'x': rng.standard_normal((2, 3))})


def test_segment_gradients():
    segments = np.array([0, 0, 2, 2, 2])
    check_gradient(
        lambda t, v: t.sum_squares(t.segment_mean(v['x'], segments, 4)),
        {'x': rng.standard_normal((5, 2))})
    check_gradient(
        lambda t, v: t.sum_squares(t.segment_sum(v['x'], segments, 3)),
        {'x': rng.standard_normal((5, 2))})


def test_segment_mean_values():
    tape = Tape(record=False)
    x = np.array([[1.0], [3.0], [5.0]])
    out = tape.segment_mean(x, [0, 0, 2], 3).value
    assert out.tolist() == [[2.0], [0.0], [5.0]]


def test_scatter_gradient():
    fill = (np.array([0, 4]), 1.0)
    check_gradient(
        lambda t, v: t.sum_squares(t.scatter(
            6, [(v['a'], [1, 2]), (v['b'], [3, 5])], fill=fill)),
        {'a': rng.standard_normal(2), 'b': rng.standard_normal((2, 1))})
    tape = Tape(record=False)
    out = tape.scatter(4, [([2.0], [1])], fill=([3], 1.0)).value
    assert out.tolist() == [0.0, 2.0, 0.0, 1.0]


def test_spmv_gradient():
    pattern = csr_from_coo([(0, 0, 1.0), (0, 2, 1.0), (1, 1, 1.0),
                            (2, 0, 1.0), (2, 2, 1.0)], 3)
    check_gradient(
        lambda t, v: t.sum_squares(t.spmv(pattern, v['values'], v['x'])),
        {'values': rng.standard_normal(5), 'x': rng.standard_normal(3)})


def test_add_sub_scale_gradient():
    check_gradient(
        lambda t, v: t.sum_squares(t.sub(t.add(v['a'], t.scale(v['b'], -2.0)),
                                         v['a'])),
        {'a': rng.standard_normal(3), 'b': rng.standard_normal(3)})


def test_shared_input_accumulates():
    tape = Tape()
    x = tape.parameter('x', [3.0])
    grads = tape.backward(tape.sum_squares(tape.add(x, x)))
    assert grads['x'].tolist() == [24.0]


# bookkeeping ---------------

def test_backward_twice():
    tape = Tape()
    x = tape.parameter('x', [1.0])
    out = tape.sum_squares(x)
    backward(tape, output=out)
    with pytest.raises(TapeError):
        tape.backward(out)


def test_parameter_registered_twice():
    tape = Tape()
    tape.parameter('w', 1.0)
    with pytest.raises(TapeError):
        tape.parameter('w', 2.0)


def test_constant_output_gives_zero_gradients():
    tape = Tape()
    tape.parameter('w', np.ones((2, 2)))
    out = tape.sum_squares(tape.constant([1.0, 2.0]))
    assert not out.requires_grad
    grads = tape.backward(out)
    assert np.array_equal(grads['w'], np.zeros((2, 2)))


def test_unused_parameter_gets_zeros():
    tape = Tape()
    x = tape.parameter('x', [2.0])
    tape.parameter('unused', [5.0, 6.0])
    grads = tape.backward(tape.sum_squares(x), seed=0.5)
    assert grads['x'].tolist() == [2.0]
    assert grads['unused'].tolist() == [0.0, 0.0]


def test_inference_tape_records_nothing():
    tape = Tape(record=False)
    x = tape.parameter('x', [1.0, 2.0])
    out = tape.sum_squares(tape.tanh(x))
    assert len(tape) == 0
    assert not out.requires_grad
    assert tape.backward(out) == {}
