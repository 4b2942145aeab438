"""Finsler metric families and the zeroth tensor layer.

A :class:`MetricModel` is an evaluatable Finsler function L(x, y) with a
declared admissible domain.  From the square L^2 the layer-zero tensors are
derived at a :class:`JetPoint`:

* fundamental tensor  g_ij = (1/2) d^2 L^2 / dy^i dy^j
* normalized form     ell_i = g_ij y^j / L
* angular metric      hbar = g - ell (x) ell
* Cartan tensor       T_ijk = (1/4) d^3 L^2 / dy^i dy^j dy^k
* contracted torsion  C_i = g^{jk} T_ijk, its vector Cbar and C^2 = C(Cbar)

All intrinsic objects are realized in natural local coordinates; this is the
single global convention of the package.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .errors import AdmissibilityError, ConfigError
from .expressions import Expression, compile_expression

FAMILIES = ("euclidean", "riemannian", "randers", "expression")


class JetPoint:
    """A base point x and direction y (y != 0) with cached derivative data.

    The cache holds the L^2 Taylor expansions and derived per-metric frames,
    keyed by metric identity, so repeated tensor queries at the same point do
    not recompute jets.
    """

    __slots__ = ("x", "y", "_cache")

    def __init__(self, x, y):
        self.x = np.array(x, dtype=float).reshape(-1)
        self.y = np.array(y, dtype=float).reshape(-1)
        if self.x.shape != self.y.shape:
            raise ValueError("x and y must have the same dimension")
        if not np.any(self.y):
            raise ValueError("the direction y must be non-zero")
        self._cache = {}

    @property
    def n(self) -> int:
        return self.x.size

    def cache_get(self, key):
        return self._cache.get(key)

    def cache_set(self, key, value):
        self._cache[key] = value
        return value

    def __repr__(self):
        return f"JetPoint(x={self.x.tolist()}, y={self.y.tolist()})"


@dataclass
class PointTensor:
    """Dense coordinate components of a pi-tensor at a JetPoint.

    ``index_signature`` marks each slot 'cov' or 'con'.  Declared symmetries
    are verified on construction to 1e-10 absolute.
    """

    components: np.ndarray
    index_signature: tuple
    at: JetPoint
    symmetries: tuple = ()

    _SYM_TOL = 1e-10

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        rank = len(self.index_signature)
        if self.components.ndim != rank:
            raise ValueError("component rank does not match the index signature")
        n = self.at.n
        if self.components.size != n**rank:
            raise ValueError("component count must equal n^rank")
        for kind, axes in self.symmetries:
            perm = list(range(rank))
            perm[axes[0]], perm[axes[1]] = perm[axes[1]], perm[axes[0]]
            swapped = np.transpose(self.components, perm)
            target = swapped if kind == "sym" else -swapped
            if np.max(np.abs(self.components - target)) > self._SYM_TOL:
                raise ValueError(f"declared {kind} symmetry on axes {axes} violated")

    @property
    def rank(self) -> int:
        return len(self.index_signature)


class MetricModel:
    """A Finsler metric family member of dimension n.

    Use the classmethod constructors; ``x_box`` declares the admissible
    sampling box for base points as an (n, 2) array of [lo, hi] rows.
    """

    def __init__(self, name, family, n, x_box=None, a_exprs=None, b_exprs=None,
                 l_expr=None):
        if family not in FAMILIES:
            raise ConfigError(f"unknown metric family '{family}'")
        if n < 2:
            raise ConfigError("dimension must be at least 2")
        self.name = name
        self.family = family
        self.n = int(n)
        self.x_box = _normalize_box(x_box, self.n)
        self.a_exprs = a_exprs
        self.b_exprs = b_exprs
        self.l_expr = l_expr

    # -- constructors ---------------------------------------------------

    @classmethod
    def euclidean(cls, n, name="euclidean", x_box=None):
        return cls(name, "euclidean", n, x_box=x_box)

    @classmethod
    def riemannian(cls, n, a, name="riemannian", x_box=None):
        return cls(name, "riemannian", n, x_box=x_box, a_exprs=_compile_matrix(a, n))

    @classmethod
    def randers(cls, n, a, b, name="randers", x_box=None):
        a_exprs = _compile_matrix(a, n)
        b_exprs = [compile_expression(t, n, allow_y=False) for t in b]
        if len(b_exprs) != n:
            raise ConfigError("randers one-form must have n components")
        return cls(name, "randers", n, x_box=x_box, a_exprs=a_exprs, b_exprs=b_exprs)

    @classmethod
    def from_expression(cls, n, l_text, name="expression", x_box=None):
        return cls(name, "expression", n,
                   x_box=x_box, l_expr=compile_expression(l_text, n))

    # -- evaluation -------------------------------------------------------

    def a_matrix(self, x):
        """Riemannian part a_ij(x); entries may be floats, arrays or jets."""
        return [[self.a_exprs[i][j](x) for j in range(self.n)] for i in range(self.n)]

    def lagrangian_sq(self, x, y):
        """L^2(x, y); works on floats, batched arrays and MultiDual seeds."""
        n = self.n
        if self.family == "euclidean":
            acc = y[0] * y[0]
            for i in range(1, n):
                acc = acc + y[i] * y[i]
            return acc
        if self.family == "riemannian":
            a = self.a_matrix(x)
            acc = None
            for i in range(n):
                for j in range(n):
                    term = a[i][j] * y[i] * y[j]
                    acc = term if acc is None else acc + term
            return acc
        if self.family == "randers":
            a = self.a_matrix(x)
            quad = None
            for i in range(n):
                for j in range(n):
                    term = a[i][j] * y[i] * y[j]
                    quad = term if quad is None else quad + term
            lin = None
            for i in range(n):
                term = self.b_exprs[i](x) * y[i]
                lin = term if lin is None else lin + term
            l_val = dc.sqrt(quad) + lin
            return l_val * l_val
        l_val = self.l_expr(x, y)
        return l_val * l_val

    def lagrangian(self, x, y):
        return dc.sqrt(self.lagrangian_sq(x, y))

    def l2_jet(self, p: JetPoint, order: int = 4) -> dc.MultiDual:
        """Taylor expansion of L^2 at p, cached at the highest order seen."""
        key = ("l2_jet", id(self))
        cached = p.cache_get(key)
        if cached is not None and cached.valid >= order:
            return cached
        space = dc.taylor_space(2 * self.n, max(order, 4))
        xs, ys = space.lift_point(p.x, p.y)
        jet = self.lagrangian_sq(xs, ys)
        if not isinstance(jet, dc.MultiDual):
            jet = space.constant(float(jet))
        if not jet.isfinite():
            raise AdmissibilityError(
                f"L^2 is not finite at {p!r} for metric '{self.name}'")
        return p.cache_set(key, jet)

    def admissible(self, p: JetPoint):
        """Check L > 0 and positive-definite g; returns (ok, reason)."""
        try:
            l2 = self.l2_jet(p, order=2)
        except Exception as err:
            return False, str(err)
        if l2.value <= 0.0:
            return False, "non-positive L^2"
        g = _g_from_jet(l2, self.n)
        try:
            eigs = np.linalg.eigvalsh(g)
        except np.linalg.LinAlgError:
            return False, "eigenvalue computation failed"
        if eigs[0] <= 0.0:
            return False, f"fundamental tensor not positive definite (min eig {eigs[0]:.3e})"
        return True, ""

    def __repr__(self):
        return f"MetricModel({self.name!r}, family={self.family!r}, n={self.n})"


def _normalize_box(x_box, n):
    if x_box is None:
        x_box = (0.3, 1.0)
    arr = np.asarray(x_box, dtype=float)
    if arr.ndim == 1 and arr.size == 2:
        arr = np.tile(arr, (n, 1))
    if arr.shape != (n, 2) or np.any(arr[:, 0] >= arr[:, 1]):
        raise ConfigError("x_box must be [lo, hi] or an (n, 2) list of ranges")
    return arr


def _compile_matrix(a, n):
    if isinstance(a, str):
        if a == "identity":
            a = [["1" if i == j else "0" for j in range(n)] for i in range(n)]
        else:
            raise ConfigError(f"unknown matrix shorthand '{a}'")
    elif isinstance(a, dict):
        if set(a) == {"conformal"}:
            expr = a["conformal"]
            a = [[expr if i == j else "0" for j in range(n)] for i in range(n)]
        elif set(a) == {"diag"}:
            diag = a["diag"]
            if len(diag) != n:
                raise ConfigError("diag shorthand needs n entries")
            a = [[diag[i] if i == j else "0" for j in range(n)] for i in range(n)]
        else:
            raise ConfigError("matrix shorthand must be 'identity', {conformal: ...} or {diag: [...]}")
    if len(a) != n or any(len(row) != n for row in a):
        raise ConfigError("metric matrix must be n x n")
    # symmetry of the entries is enforced numerically in validate_model
    return [[compile_expression(str(a[i][j]), n, allow_y=False) for j in range(n)]
            for i in range(n)]


def _g_from_jet(l2_jet: dc.MultiDual, n: int) -> np.ndarray:
    g = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            g[i, j] = g[j, i] = 0.5 * l2_jet.partial((n + i, n + j))
    return g


# ---------------------------------------------------------------------------
# layer-zero tensors
# ---------------------------------------------------------------------------

def fundamental_tensor(m: MetricModel, p: JetPoint) -> PointTensor:
    """g_ij at p; symmetric and positive definite on the admissible cone."""
    g = _g_from_jet(m.l2_jet(p, order=2), m.n)
    eigs = np.linalg.eigvalsh(g)
    if eigs[0] <= 0.0:
        raise AdmissibilityError(
            f"fundamental tensor of '{m.name}' is not positive definite at {p!r} "
            f"(min eigenvalue {eigs[0]:.3e})")
    return PointTensor(g, ("cov", "cov"), p, symmetries=(("sym", (0, 1)),))


def normalized_form(m: MetricModel, p: JetPoint) -> PointTensor:
    """ell_i = g_ij y^j / L."""
    g = fundamental_tensor(m, p).components
    l_val = np.sqrt(m.l2_jet(p, order=2).value)
    return PointTensor(g @ p.y / l_val, ("cov",), p)


def angular_metric(m: MetricModel, p: JetPoint) -> PointTensor:
    """hbar = g - ell (x) ell; degenerate along y, positive transverse."""
    g = fundamental_tensor(m, p).components
    ell = normalized_form(m, p).components
    return PointTensor(g - np.outer(ell, ell), ("cov", "cov"), p,
                       symmetries=(("sym", (0, 1)),))


def cartan_tensor(m: MetricModel, p: JetPoint) -> PointTensor:
    """Totally symmetric T_ijk with T_ijk y^k = 0."""
    n = m.n
    jet = m.l2_jet(p, order=3)
    t = np.empty((n, n, n))
    for i in range(n):
        for j in range(i, n):
            for k in range(j, n):
                v = 0.25 * jet.partial((n + i, n + j, n + k))
                for perm in itertools.permutations((i, j, k)):
                    t[perm] = v
    return PointTensor(t, ("cov",) * 3, p,
                       symmetries=(("sym", (0, 1)), ("sym", (1, 2))))


def contracted_torsion(m: MetricModel, p: JetPoint):
    """C_i = g^{jk} T_ijk, the associated vector Cbar and C^2 = C(Cbar)."""
    g = fundamental_tensor(m, p).components
    ginv = np.linalg.inv(g)
    t = cartan_tensor(m, p).components
    c = np.einsum("jk,ijk->i", ginv, t)
    cbar = ginv @ c
    c2 = float(c @ cbar)
    return (PointTensor(c, ("cov",), p),
            PointTensor(cbar, ("con",), p),
            c2)


# ---------------------------------------------------------------------------
# admissible sampling
# ---------------------------------------------------------------------------

def sample_points(m: MetricModel, count: int, rng: np.random.Generator,
                  x_box=None, max_tries: int = 200):
    """Draw admissible JetPoints: x uniform in the box, y uniform on the unit
    sphere then rescaled so that L(x, y) = 1 (positive homogeneity makes this
    exact).  Inadmissible draws are retried a bounded number of times.
    """
    box = m.x_box if x_box is None else _normalize_box(x_box, m.n)
    points = []
    tries = 0
    budget = max_tries * max(count, 1)
    while len(points) < count:
        if tries >= budget:
            raise AdmissibilityError(
                f"could not sample {count} admissible points for '{m.name}' "
                f"within {budget} attempts")
        tries += 1
        x = box[:, 0] + (box[:, 1] - box[:, 0]) * rng.random(m.n)
        y = rng.standard_normal(m.n)
        norm = np.linalg.norm(y)
        if norm < 1e-12:
            continue
        y = y / norm
        try:
            l_val = float(np.sqrt(m.lagrangian_sq(x, y)))
        except Exception:
            continue
        if not np.isfinite(l_val) or l_val <= 0.0:
            continue
        p = JetPoint(x, y / l_val)
        ok, _ = m.admissible(p)
        if ok:
            points.append(p)
    return points


def validate_model(m: MetricModel, rng: np.random.Generator, samples: int = 12):
    """Spot-check the model invariants on random admissible points.

    Returns the worst residuals; raises AdmissibilityError on violations of
    positivity, homogeneity (rel 1e-9 at lambda in {0.5, 2, 3}) or positive
    definiteness, and on an asymmetric Riemannian matrix.
    """
    pts = sample_points(m, samples, rng)
    worst = {"homogeneity": 0.0, "min_eig": np.inf, "randers_b_norm": 0.0}
    for p in pts:
        l_val = float(np.sqrt(m.lagrangian_sq(p.x, p.y)))
        for lam in (0.5, 2.0, 3.0):
            scaled = float(np.sqrt(m.lagrangian_sq(p.x, lam * p.y)))
            rel = abs(scaled - lam * l_val) / (lam * l_val)
            worst["homogeneity"] = max(worst["homogeneity"], rel)
            if rel >= 1e-9:
                raise AdmissibilityError(
                    f"'{m.name}' is not positively homogeneous: rel residual "
                    f"{rel:.3e} at lambda={lam}")
        g = fundamental_tensor(m, p).components
        worst["min_eig"] = min(worst["min_eig"], float(np.linalg.eigvalsh(g)[0]))
        if m.family in ("riemannian", "randers"):
            a = np.array([[float(e(p.x)) for e in row] for row in m.a_exprs])
            if np.max(np.abs(a - a.T)) > 1e-12:
                raise AdmissibilityError(f"'{m.name}': a_ij(x) is not symmetric")
            if m.family == "randers":
                b = np.array([float(e(p.x)) for e in m.b_exprs])
                bnorm = float(np.sqrt(b @ np.linalg.solve(a, b)))
                worst["randers_b_norm"] = max(worst["randers_b_norm"], bnorm)
                if bnorm >= 1.0:
                    raise AdmissibilityError(
                        f"'{m.name}': ||b||_a = {bnorm:.4f} >= 1 at a sampled x; "
                        "the fundamental tensor degenerates")
    return worst
