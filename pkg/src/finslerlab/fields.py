"""Evaluatable pi-tensor fields: components as functions of (x, y).

Fields supply their components as MultiDual jets so covariant derivatives of
a field use exact partials rather than numeric differencing.  A field is any
object with ``index_signature`` and a ``jets(metric, point, order)`` method
returning an object ndarray of MultiDuals (0-d for scalars).
"""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .expressions import compile_expression


def _seed_env(n, p, order):
    space = dc.taylor_space(2 * n, max(order, 1))
    return space, *space.lift_point(p.x, p.y)


class ExpressionField:
    """Components given as expression strings; rank inferred from nesting."""

    def __init__(self, components, n, index_signature=None):
        self.n = n
        arr = np.asarray(components, dtype=object)
        self.shape = arr.shape
        rank = arr.ndim
        if index_signature is None:
            index_signature = ("con",) * rank
        if len(index_signature) != rank:
            raise ValueError("index signature does not match component nesting")
        self.index_signature = tuple(index_signature)
        if any(s != n for s in arr.shape):
            raise ValueError("each component axis must have length n")
        self.exprs = np.empty(arr.shape, dtype=object)
        for idx in np.ndindex(*arr.shape) if rank else [()]:
            self.exprs[idx] = compile_expression(str(arr[idx]), n)

    def jets(self, metric, p, order=1):
        space, xs, ys = _seed_env(self.n, p, order)
        out = np.empty(self.shape, dtype=object)
        for idx in np.ndindex(*self.shape) if self.exprs.ndim else [()]:
            val = self.exprs[idx](xs, ys)
            if not isinstance(val, dc.MultiDual):
                val = space.constant(float(val))
            out[idx] = val
        return out

    def values(self, metric, p):
        jets = self.jets(metric, p, order=1)
        return np.array([j.value for j in jets.ravel()]).reshape(self.shape)


class PolynomialField:
    """Vector field with affine components c + A x + B y (deterministic
    probe fields for derivative identities)."""

    index_signature = ("con",)

    def __init__(self, const, lin_x, lin_y):
        self.const = np.asarray(const, dtype=float)
        self.lin_x = np.asarray(lin_x, dtype=float)
        self.lin_y = np.asarray(lin_y, dtype=float)
        self.n = self.const.size
        self.shape = (self.n,)

    @classmethod
    def random(cls, n, rng, scale=1.0):
        return cls(scale * rng.standard_normal(n),
                   scale * rng.standard_normal((n, n)),
                   scale * rng.standard_normal((n, n)))

    def jets(self, metric, p, order=1):
        space, xs, ys = _seed_env(self.n, p, order)
        out = np.empty(self.n, dtype=object)
        for i in range(self.n):
            acc = space.constant(self.const[i])
            for j in range(self.n):
                acc = acc + self.lin_x[i, j] * xs[j] + self.lin_y[i, j] * ys[j]
            out[i] = acc
        return out

    def values(self, metric, p):
        return self.const + self.lin_x @ p.x + self.lin_y @ p.y


class ConstantField:
    """A y- and x-independent vector field."""

    index_signature = ("con",)

    def __init__(self, values):
        self.vals = np.asarray(values, dtype=float)
        self.n = self.vals.size
        self.shape = (self.n,)

    def jets(self, metric, p, order=1):
        space, _, _ = _seed_env(self.n, p, order)
        out = np.empty(self.n, dtype=object)
        for i in range(self.n):
            out[i] = space.constant(self.vals[i])
        return out

    def values(self, metric, p):
        return self.vals.copy()
