"""Exact higher-order partial derivatives via truncated Taylor arithmetic.

Scalar functions of the combined block (x^1..x^n, y^1..y^n) are evaluated on
``MultiDual`` numbers: dense multivariate Taylor expansions truncated at a
fixed order (at most 4).  Sums, products, quotients and the elementary
functions propagate all mixed partial derivatives exactly, so a single
function evaluation yields every derivative up to the truncation order.

A central finite-difference oracle with Richardson extrapolation
(``fd_check``) provides an independent error signal for any derivative the
rest of the package consumes.
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

from .errors import DomainEvalError

MAX_ORDER = 4

# Default finite-difference steps, indexed by total derivative order.
# Chosen so that Richardson-extrapolated central differences balance
# truncation against rounding for smooth O(1) integrands.
_FD_STEPS = {1: 1e-3, 2: 2e-3, 3: 8e-3, 4: 2e-2}


class TaylorSpace:
    """Index bookkeeping for dense truncated Taylor series in ``nvars``
    variables at truncation ``order``.

    Instances are cached; use :func:`taylor_space` instead of constructing
    directly.
    """

    def __init__(self, nvars: int, order: int):
        if nvars < 1:
            raise ValueError("need at least one variable")
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"order must be between 0 and {MAX_ORDER}")
        self.nvars = nvars
        self.order = order

        exps = []
        for total in range(order + 1):
            for combo in itertools.combinations_with_replacement(range(nvars), total):
                e = [0] * nvars
                for v in combo:
                    e[v] += 1
                exps.append(tuple(e))
        self.exponents = np.array(exps, dtype=np.int64)
        self.ncoef = len(exps)
        self.degree = self.exponents.sum(axis=1)
        self._index = {e: i for i, e in enumerate(exps)}
        # var_lin[v]: position of the first-order coefficient of variable v
        self.var_lin = np.array(
            [self._index[tuple(int(j == v) for j in range(nvars))] for v in range(nvars)]
            if order >= 1
            else [],
            dtype=np.int64,
        )
        # factorial(alpha) per multi-index, for coefficient -> derivative
        self.fact = np.array(
            [math.prod(math.factorial(int(a)) for a in e) for e in exps], dtype=float
        )

        self._mul_tables = {}
        self._deriv_tables = {}

    def index_of(self, counts) -> int:
        return self._index[tuple(int(c) for c in counts)]

    def mul_table(self, cap: int):
        """Index triples (ia, ib, io) with deg(ia)+deg(ib) <= cap."""
        cap = min(cap, self.order)
        tab = self._mul_tables.get(cap)
        if tab is None:
            ia, ib, io = [], [], []
            by_deg = [np.nonzero(self.degree == d)[0] for d in range(self.order + 1)]
            for da in range(cap + 1):
                for db in range(cap + 1 - da):
                    for i in by_deg[da]:
                        ea = self.exponents[i]
                        for j in by_deg[db]:
                            ia.append(i)
                            ib.append(j)
                            io.append(self._index[tuple(ea + self.exponents[j])])
            tab = (
                np.array(ia, dtype=np.int64),
                np.array(ib, dtype=np.int64),
                np.array(io, dtype=np.int64),
            )
            self._mul_tables[cap] = tab
        return tab

    def deriv_table(self, var: int):
        """Pairs (src, dst, factor) implementing d/d(var) on coefficients."""
        tab = self._deriv_tables.get(var)
        if tab is None:
            src, dst, fac = [], [], []
            ev = np.zeros(self.nvars, dtype=np.int64)
            ev[var] = 1
            for i, e in enumerate(self.exponents):
                if self.degree[i] >= self.order:
                    continue
                j = self._index[tuple(e + ev)]
                src.append(j)
                dst.append(i)
                fac.append(float(e[var] + 1))
            tab = (
                np.array(src, dtype=np.int64),
                np.array(dst, dtype=np.int64),
                np.array(fac, dtype=float),
            )
            self._deriv_tables[var] = tab
        return tab

    def constant(self, value: float) -> "MultiDual":
        coef = np.zeros(self.ncoef)
        coef[0] = float(value)
        return MultiDual(self, coef, self.order)

    def variable(self, var: int, value: float) -> "MultiDual":
        if not 0 <= var < self.nvars:
            raise ValueError(f"variable index {var} out of range")
        coef = np.zeros(self.ncoef)
        coef[0] = float(value)
        if self.order >= 1:
            coef[self.var_lin[var]] = 1.0
        return MultiDual(self, coef, self.order)

    def lift_point(self, x, y):
        """Seed MultiDual variables for a combined (x, y) point.

        Variables are ordered x^1..x^n, y^1..y^n; returns the two lists.
        """
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        n = x.size
        if 2 * n != self.nvars:
            raise ValueError("point dimension does not match the space")
        xs = [self.variable(i, x[i]) for i in range(n)]
        ys = [self.variable(n + i, y[i]) for i in range(n)]
        return xs, ys


@lru_cache(maxsize=None)
def taylor_space(nvars: int, order: int = MAX_ORDER) -> TaylorSpace:
    return TaylorSpace(nvars, order)


class MultiDual:
    """A truncated multivariate Taylor expansion around a point.

    ``coef`` stores one coefficient per multi-index of the owning
    :class:`TaylorSpace`; coefficients of degree above ``valid`` are zero and
    carry no information (they arise when a quantity is only known to a lower
    order than the space truncation, e.g. after differentiation).
    """

    __slots__ = ("space", "coef", "valid")

    def __init__(self, space: TaylorSpace, coef: np.ndarray, valid: int):
        self.space = space
        self.coef = coef
        self.valid = valid

    # -- basic access -------------------------------------------------

    @property
    def value(self) -> float:
        return float(self.coef[0])

    def partial(self, multi_index) -> float:
        """Mixed partial derivative for a sequence of variable slots.

        ``multi_index`` lists variable positions with repetition, e.g.
        ``(0, 0)`` is the second derivative in variable 0.
        """
        counts = _as_counts(multi_index, self.space.nvars)
        total = int(counts.sum())
        if total > self.valid:
            raise ValueError(
                f"derivative order {total} exceeds the valid order {self.valid}"
            )
        i = self.space.index_of(counts)
        return float(self.coef[i] * self.space.fact[i])

    def derivative(self, var: int) -> "MultiDual":
        """Partial derivative in one variable, valid to one order less."""
        if self.valid < 1:
            raise ValueError("derivative order exhausted for this MultiDual")
        src, dst, fac = self.space.deriv_table(var)
        coef = np.zeros(self.space.ncoef)
        coef[dst] = self.coef[src] * fac
        out = MultiDual(self.space, coef, self.valid - 1)
        out._truncate()
        return out

    def _truncate(self):
        mask = self.space.degree > self.valid
        if mask.any():
            self.coef[mask] = 0.0

    def isfinite(self) -> bool:
        return bool(np.all(np.isfinite(self.coef)))

    # -- ring operations ----------------------------------------------

    def _coerce(self, other):
        if isinstance(other, MultiDual):
            if other.space is not self.space:
                raise ValueError("MultiDual operands belong to different spaces")
            return other
        if isinstance(other, (int, float, np.integer, np.floating)):
            return self.space.constant(float(other))
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        out = MultiDual(self.space, self.coef + o.coef, min(self.valid, o.valid))
        out._truncate()
        return out

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        out = MultiDual(self.space, self.coef - o.coef, min(self.valid, o.valid))
        out._truncate()
        return out

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o.__sub__(self)

    def __neg__(self):
        return MultiDual(self.space, -self.coef, self.valid)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.integer, np.floating)):
            return MultiDual(self.space, self.coef * float(other), self.valid)
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        cap = min(self.valid, o.valid)
        ia, ib, io = self.space.mul_table(cap)
        coef = np.bincount(
            io, weights=self.coef[ia] * o.coef[ib], minlength=self.space.ncoef
        )
        return MultiDual(self.space, coef, cap)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, (int, float, np.integer, np.floating)):
            if other == 0:
                raise DomainEvalError("division by zero")
            return MultiDual(self.space, self.coef / float(other), self.valid)
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is None:
            return NotImplemented
        return o * self.reciprocal()

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)) or (
            isinstance(p, float) and float(p).is_integer()
        ):
            k = int(p)
            if k < 0:
                return self.reciprocal() ** (-k)
            out = self.space.constant(1.0)
            base = self
            while k:
                if k & 1:
                    out = out * base
                base = base * base if k > 1 else base
                k >>= 1
            return out
        return (self.log() * float(p)).exp()

    # -- analytic functions -------------------------------------------

    def _compose(self, derivs):
        """Evaluate phi(self) given derivatives of phi at self.value.

        ``derivs[p]`` is the p-th derivative of phi at the base value,
        p = 0..valid.  Uses the Taylor composition with the nilpotent part.
        """
        k = self.valid
        u = MultiDual(self.space, self.coef.copy(), k)
        u.coef[0] = 0.0
        acc = self.space.constant(derivs[k] / math.factorial(k))
        acc = MultiDual(acc.space, acc.coef, k)
        for p in range(k - 1, -1, -1):
            acc = acc * u + self.space.constant(derivs[p] / math.factorial(p))
            acc = MultiDual(acc.space, acc.coef, k)
        return acc

    def reciprocal(self):
        v = self.value
        if v == 0.0:
            raise DomainEvalError("division by a quantity whose value is zero")
        derivs = [(-1.0) ** p * math.factorial(p) / v ** (p + 1) for p in range(self.valid + 1)]
        return self._compose(derivs)

    def sqrt(self):
        v = self.value
        if v <= 0.0:
            raise DomainEvalError("square root of a non-positive value")
        derivs = []
        for p in range(self.valid + 1):
            c = 1.0
            for i in range(p):
                c *= 0.5 - i
            derivs.append(c * v ** (0.5 - p))
        return self._compose(derivs)

    def exp(self):
        e = math.exp(self.value)
        return self._compose([e] * (self.valid + 1))

    def log(self):
        v = self.value
        if v <= 0.0:
            raise DomainEvalError("logarithm of a non-positive value")
        derivs = [math.log(v)]
        for p in range(1, self.valid + 1):
            derivs.append((-1.0) ** (p - 1) * math.factorial(p - 1) / v**p)
        return self._compose(derivs)

    def sin(self):
        v = self.value
        cycle = [math.sin(v), math.cos(v), -math.sin(v), -math.cos(v)]
        return self._compose([cycle[p % 4] for p in range(self.valid + 1)])

    def cos(self):
        v = self.value
        cycle = [math.cos(v), -math.sin(v), -math.cos(v), math.sin(v)]
        return self._compose([cycle[p % 4] for p in range(self.valid + 1)])

    def __repr__(self):
        return f"MultiDual(value={self.value!r}, valid={self.valid})"


# ---------------------------------------------------------------------------
# generic elementary functions: work on MultiDual, ndarray and plain floats
# ---------------------------------------------------------------------------

def sqrt(v):
    return v.sqrt() if isinstance(v, MultiDual) else np.sqrt(v)


def exp(v):
    return v.exp() if isinstance(v, MultiDual) else np.exp(v)


def log(v):
    return v.log() if isinstance(v, MultiDual) else np.log(v)


def sin(v):
    return v.sin() if isinstance(v, MultiDual) else np.sin(v)


def cos(v):
    return v.cos() if isinstance(v, MultiDual) else np.cos(v)


# ---------------------------------------------------------------------------
# the two public operations
# ---------------------------------------------------------------------------

def _as_counts(multi_index, nvars) -> np.ndarray:
    """Normalize a sequence of variable slots to a counts vector."""
    counts = np.zeros(nvars, dtype=np.int64)
    for v in multi_index:
        v = int(v)
        if not 0 <= v < nvars:
            raise ValueError(f"variable slot {v} out of range for {nvars} variables")
        counts[v] += 1
    return counts


def derive(f, x, y, multi_index, order=None) -> float:
    """Mixed partial of ``f(x, y)`` at a point, exact for composed arithmetic.

    ``f`` receives two lists of MultiDual seeds (one per x and y component)
    and must be built from arithmetic plus the module-level sqrt/exp/sin/cos.
    ``multi_index`` is a sequence of variable slots over (x^1..x^n, y^1..y^n),
    repetition meaning higher order; at most 4 entries.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = x.size
    slots = tuple(int(v) for v in multi_index)
    k = len(slots)
    if k > MAX_ORDER:
        raise ValueError(f"derivative order {k} exceeds the supported maximum {MAX_ORDER}")
    if order is None:
        order = k
    if not k <= order <= MAX_ORDER:
        raise ValueError(f"order must lie between {k} and {MAX_ORDER}")
    space = taylor_space(2 * n, order)
    xs, ys = space.lift_point(x, y)
    val = f(xs, ys)
    if not isinstance(val, MultiDual):
        # constant w.r.t. the seeds: all derivatives vanish
        return float(val) if k == 0 else 0.0
    if not val.isfinite():
        raise DomainEvalError("non-finite value produced by f at the evaluation point")
    return val.partial(slots)


def _stencil_1d(m: int):
    """Central-difference offsets and weights for the m-th derivative."""
    if m == 0:
        return (0,), (1.0,)
    if m == 1:
        return (-1, 1), (-0.5, 0.5)
    if m == 2:
        return (-1, 0, 1), (1.0, -2.0, 1.0)
    if m == 3:
        return (-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)
    if m == 4:
        return (-2, -1, 0, 1, 2), (1.0, -4.0, 6.0, -4.0, 1.0)
    raise ValueError(f"unsupported stencil order {m}")


def _fd_single(f, x, y, counts, h) -> float:
    """One central-difference evaluation at step h (no extrapolation)."""
    n = x.size
    vars_used = np.nonzero(counts)[0]
    stencils = [_stencil_1d(int(counts[v])) for v in vars_used]
    total = int(counts.sum())
    acc = 0.0
    for combo in itertools.product(*[range(len(s[0])) for s in stencils]):
        xs = x.copy()
        ys = y.copy()
        w = 1.0
        for (v, (offs, wts)), c in zip(zip(vars_used, stencils), combo):
            w *= wts[c]
            if v < n:
                xs[v] += offs[c] * h
            else:
                ys[v - n] += offs[c] * h
        acc += w * float(f(xs, ys))
    return acc / h**total


def fd_derivative(f, x, y, multi_index, h=None, richardson=True) -> float:
    """Central finite-difference estimate of a mixed partial of f.

    With ``richardson`` the estimates at steps h and h/2 are combined to
    cancel the leading O(h^2) truncation term.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    counts = _as_counts(multi_index, 2 * x.size)
    total = int(counts.sum())
    if total == 0:
        return float(f(x, y))
    if h is None:
        h = _FD_STEPS[min(total, 4)]
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    d_h = _fd_single(f, x, y, counts, h)
    if not richardson:
        return d_h
    d_h2 = _fd_single(f, x, y, counts, h / 2.0)
    return (4.0 * d_h2 - d_h) / 3.0


def fd_check(f, x, y, multi_index, h=None):
    """Compare the exact derivative against the finite-difference oracle.

    Returns ``(ad_value, fd_value, rel_error)`` with
    ``rel_error = |ad - fd| / max(1, |ad|)``.
    """
    ad = derive(f, x, y, multi_index)
    fd = fd_derivative(f, x, y, multi_index, h=h)
    rel = abs(ad - fd) / max(1.0, abs(ad))
    return ad, fd, rel
