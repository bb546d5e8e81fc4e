"""
A reverse-mode differentiation tape for the fixed set of operations the
factorization network and its losses need.

Every primitive computes its value eagerly and, when any input depends on
a parameter, records a closure mapping the output gradient to input
gradients (a vector-Jacobian product). `Tape.backward` replays those
closures in exact reverse order.

A tape created with `record=False` registers parameters as constants, so
the same model code runs for inference without bookkeeping.
"""
from __future__ import annotations

import numpy as np

from .exceptions import TapeError


class Variable(object):
    """
    A value on a tape. `index` is None for constants (no gradient path).
    """
    __slots__ = ('value', 'index')

    def __init__(self, value, index=None):
        self.value = value
        self.index = index

    @property
    def requires_grad(self):
        return self.index is not None

    @property
    def shape(self):
        return np.shape(self.value)

    def __repr__(self):
        return 'Variable(shape=%r, index=%r)' % (self.shape, self.index)


class Tape(object):

    def __init__(self, record=True):
        self.record = record
        self._vjps = []
        self._parents = []
        self._parameters = {}
        self._consumed = False

    def __len__(self):
        return len(self._vjps)

    # leaves ------------------

    def constant(self, value):
        return Variable(np.asarray(value, dtype=np.float64))

    def parameter(self, name, value):
        value = np.asarray(value, dtype=np.float64)
        if not self.record:
            return Variable(value)
        if name in self._parameters:
            raise TapeError("parameter %r registered twice" % name)
        var = self._push(value, (), None)
        self._parameters[name] = var
        return var

    def _lift(self, x):
        return x if isinstance(x, Variable) else self.constant(x)

    def _push(self, value, parents, vjp):
        var = Variable(value, len(self._vjps))
        self._vjps.append(vjp)
        self._parents.append(tuple(parents))
        return var

    def _op(self, value, inputs, vjp):
        """
        Record `value` as the result of `inputs` if any of them needs a
        gradient; `vjp(g)` returns one gradient per input (None allowed).
        """
        if not self.record or not any(v.requires_grad for v in inputs):
            return Variable(value)
        return self._push(value, inputs, vjp)

    # primitives ------------------

    def affine(self, x, W, b):
        "x @ W + b for x (m, p), W (p, q), b (q,)."
        x, W, b = self._lift(x), self._lift(W), self._lift(b)
        value = x.value @ W.value + b.value

        def vjp(g):
            return g @ W.value.T, x.value.T @ g, g.sum(axis=0)
        return self._op(value, (x, W, b), vjp)

    def relu(self, x):
        x = self._lift(x)
        active = x.value > 0

        def vjp(g):
            return (g * active,)
        return self._op(np.where(active, x.value, 0.0), (x,), vjp)

    def tanh(self, x):
        x = self._lift(x)
        value = np.tanh(x.value)

        def vjp(g):
            return (g * (1.0 - value ** 2),)
        return self._op(value, (x,), vjp)

    def zeta(self, x, eps):
        """
        Guarded diagonal activation: x where |x| > eps, else +eps for
        0 <= x <= eps and -eps for -eps <= x < 0.
        """
        x = self._lift(x)
        v = x.value
        passthrough = np.abs(v) > eps
        value = np.where(passthrough, v, np.where(v >= 0, eps, -eps))

        def vjp(g):
            return (g * passthrough,)
        return self._op(value, (x,), vjp)

    def zeta_relaxed(self, x, eps):
        "Continuous relaxation x * (1 + exp(-|4x/eps| + 2))."
        x = self._lift(x)
        v = x.value
        bump = np.exp(-np.abs(4.0 * v / eps) + 2.0)
        value = v * (1.0 + bump)

        def vjp(g):
            return (g * (1.0 + bump * (1.0 - 4.0 * np.abs(v) / eps)),)
        return self._op(value, (x,), vjp)

    def concat(self, parts):
        "Concatenate 2-d values along columns."
        parts = [self._lift(p) for p in parts]
        value = np.concatenate([p.value for p in parts], axis=1)
        bounds = np.cumsum([0] + [p.value.shape[1] for p in parts])

        def vjp(g):
            return tuple(g[:, lo:hi] for lo, hi in zip(bounds[:-1], bounds[1:]))
        return self._op(value, parts, vjp)

    def gather(self, x, index):
        """
        `x[index]`. A tuple `index` selects elements, e.g. `(rows, 0)`
        pulls column 0 of the given rows out as a vector.
        """
        x = self._lift(x)
        if not isinstance(index, tuple):
            index = np.asarray(index)
        shape = x.value.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, index, g)
            return (out,)
        return self._op(x.value[index], (x,), vjp)

    def segment_mean(self, x, segments, n_segments):
        """
        Mean of the rows of x per segment id; empty segments give 0.
        """
        return self._segment_reduce(x, segments, n_segments, mean=True)

    def segment_sum(self, x, segments, n_segments):
        return self._segment_reduce(x, segments, n_segments, mean=False)

    def _segment_reduce(self, x, segments, n_segments, mean):
        x = self._lift(x)
        segments = np.asarray(segments)
        sums = np.zeros((n_segments,) + x.value.shape[1:])
        np.add.at(sums, segments, x.value)
        if mean:
            counts = np.bincount(segments, minlength=n_segments)
            scale = 1.0 / np.maximum(counts, 1)
        else:
            scale = np.ones(n_segments)
        scale = scale.reshape((-1,) + (1,) * (x.value.ndim - 1))
        value = sums * scale

        def vjp(g):
            return ((g * scale)[segments],)
        return self._op(value, (x,), vjp)

    def scatter(self, size, parts, fill=None):
        """
        Assemble a vector of length `size`: each `(variable, positions)`
        in `parts` is flattened into its positions; `fill` is an optional
        `(positions, constant values)` pair. Everything else is 0.
        """
        parts = [(self._lift(v), np.asarray(pos)) for v, pos in parts]
        value = np.zeros(size)
        if fill is not None:
            value[np.asarray(fill[0])] = fill[1]
        for var, pos in parts:
            value[pos] = np.ravel(var.value)

        def vjp(g):
            return tuple(g[pos].reshape(var.value.shape) for var, pos in parts)
        return self._op(value, [v for v, _ in parts], vjp)

    def spmv(self, pattern, values, x):
        """
        y = A x where A has the pattern of the `CsrMatrix` `pattern` and
        the (possibly differentiable) stored `values`.
        """
        values, x = self._lift(values), self._lift(x)
        rows, cols, n = pattern.row_idx, pattern.col_idx, pattern.n
        value = np.bincount(rows, weights=values.value * x.value[cols],
                            minlength=n)

        def vjp(g):
            g_rows = g[rows]
            g_values = g_rows * x.value[cols] if values.requires_grad else None
            g_x = (np.bincount(cols, weights=values.value * g_rows, minlength=n)
                   if x.requires_grad else None)
            return g_values, g_x
        return self._op(value, (values, x), vjp)

    def add(self, a, b):
        a, b = self._lift(a), self._lift(b)

        def vjp(g):
            return g, g
        return self._op(a.value + b.value, (a, b), vjp)

    def sub(self, a, b):
        a, b = self._lift(a), self._lift(b)

        def vjp(g):
            return g, -g
        return self._op(a.value - b.value, (a, b), vjp)

    def scale(self, a, c):
        "c * a for a python scalar c."
        a = self._lift(a)
        c = float(c)

        def vjp(g):
            return (c * g,)
        return self._op(c * a.value, (a,), vjp)

    def sum_squares(self, a):
        "||a||^2 as a 0-d value."
        a = self._lift(a)
        value = np.asarray(np.dot(np.ravel(a.value), np.ravel(a.value)))

        def vjp(g):
            return (2.0 * g * a.value,)
        return self._op(value, (a,), vjp)

    # reverse pass ------------------

    def backward(self, output=None, seed=1.0):
        """
        Reverse-mode gradients of a scalar `output` (default: the last
        recorded value) with respect to every registered parameter.

        RETURNS
        -------
        grads : dict
            Parameter name to gradient array; parameters the output does
            not depend on get zeros. A tape can only be replayed once.
        """
        if self._consumed:
            raise TapeError("tape has already been consumed by backward")
        self._consumed = True
        grads = [None] * len(self._vjps)
        if output is None and self._vjps:
            output = Variable(None, len(self._vjps) - 1)
        if output is not None and output.requires_grad:
            grads[output.index] = np.asarray(seed, dtype=np.float64)
            for i in range(output.index, -1, -1):
                g = grads[i]
                vjp = self._vjps[i]
                if g is None or vjp is None:
                    continue
                for parent, g_parent in zip(self._parents[i], vjp(g)):
                    if g_parent is None or not parent.requires_grad:
                        continue
                    j = parent.index
                    grads[j] = g_parent if grads[j] is None else grads[j] + g_parent
        out = {}
        for name, var in self._parameters.items():
            g = grads[var.index]
            out[name] = (np.zeros_like(var.value) if g is None
                         else np.array(g, dtype=np.float64))
        return out


def backward(tape, seed=1.0, output=None):
    "Module-level alias of `Tape.backward`."
    return tape.backward(output=output, seed=seed)
