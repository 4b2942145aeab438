"""Geodesic spray, nonlinear connection, Cartan and Berwald connections.

The central object is the per-point :class:`Frame`: every derived quantity
(fundamental tensor, spray, nonlinear connection, connection coefficients)
is carried as a truncated Taylor expansion of the appropriate remaining
order, so first partials of the connection coefficients, needed by the
curvature layer, are still exact.

Local formulas, stated once here and used everywhere:

    G^i    = 1/4 g^{il} ( y^k d^2 L^2/dy^l dx^k - d L^2/dx^l )
    N^i_j  = dG^i/dy^j
    delta_j = d/dx^j - N^m_j d/dy^m
    F^i_jk = 1/2 g^{il} ( delta_j g_lk + delta_k g_jl - delta_l g_jk )
    C^i_jk = g^{il} T_ljk                       (vertical coefficients)
    G^i_jk = dN^i_j/dy^k                        (Berwald coefficients)

The Cartan connection is (F, N, C); the Berwald connection is (G^i_jk, N, 0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .errors import AdmissibilityError, FinslerError
from .metric import JetPoint, MetricModel, PointTensor

_CONSTRUCTION_TOL = 1e-6


# ---------------------------------------------------------------------------
# jet-array helpers (object ndarrays of MultiDual)
# ---------------------------------------------------------------------------

def jet_values(arr):
    out = np.empty(arr.shape)
    for idx in np.ndindex(*arr.shape):
        out[idx] = arr[idx].value
    return out


def jet_partials(arr, space):
    """First partials of every entry, stacked along a trailing axis of
    length 2n.  Entries must be valid to order >= 1."""
    out = np.empty(arr.shape + (space.nvars,))
    lin = space.var_lin
    for idx in np.ndindex(*arr.shape):
        out[idx] = arr[idx].coef[lin]
    return out


def jet_matrix_inverse(gjets, space):
    """Exact jet inverse of a matrix of MultiDuals via Newton iteration.

    The value-level inverse seeds the iteration; each step squares the
    nilpotent error, so a couple of iterations reach the truncation order.
    """
    n = gjets.shape[0]
    g0 = jet_values(gjets)
    x0 = np.linalg.inv(g0)
    valid = min(j.valid for j in gjets.ravel())
    inv = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            inv[i, j] = space.constant(x0[i, j])
    steps = 1
    while (1 << steps) < valid + 1:
        steps += 1
    two_id = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            two_id[i, j] = space.constant(2.0 if i == j else 0.0)
    for _ in range(steps):
        ax = _jet_matmul(gjets, inv, space)
        inner = two_id - ax
        inv = _jet_matmul(inv, inner, space)
    return inv


def _jet_matmul(a, b, space):
    n = a.shape[0]
    out = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            acc = a[i, 0] * b[0, j]
            for k in range(1, n):
                acc = acc + a[i, k] * b[k, j]
            out[i, j] = acc
    return out


# ---------------------------------------------------------------------------
# the per-point frame
# ---------------------------------------------------------------------------

class Frame:
    """All jet-level geometry of a metric at one JetPoint."""

    def __init__(self, m: MetricModel, p: JetPoint):
        self.metric = m
        self.point = p
        n = self.n = m.n
        self.space = dc.taylor_space(2 * n, 4)
        jl2 = m.l2_jet(p, order=4)
        self.jl2 = jl2
        self.l2 = jl2.value
        if self.l2 <= 0.0:
            raise AdmissibilityError(f"non-positive L^2 at {p!r}")
        self.lval = float(np.sqrt(self.l2))

        # fundamental tensor as order-2 jets
        dy = [jl2.derivative(n + i) for i in range(n)]
        self.g = np.empty((n, n), dtype=object)
        for i in range(n):
            for j in range(i, n):
                gij = dy[i].derivative(n + j) * 0.5
                self.g[i, j] = gij
                if j != i:
                    self.g[j, i] = gij
        self.g0 = jet_values(self.g)
        eigs = np.linalg.eigvalsh(self.g0)
        if eigs[0] <= 0.0:
            raise AdmissibilityError(
                f"fundamental tensor of '{m.name}' not positive definite at {p!r}")
        self.ginv = jet_matrix_inverse(self.g, self.space)
        self.ginv0 = jet_values(self.ginv)

        # Cartan tensor (lowered) as order-1 jets
        self.t_low = np.empty((n, n, n), dtype=object)
        for i in range(n):
            for j in range(i, n):
                dij = dy[i].derivative(n + j)
                for k in range(j, n):
                    tijk = dij.derivative(n + k) * 0.25
                    for a, b, c in ((i, j, k), (i, k, j), (j, i, k),
                                    (j, k, i), (k, i, j), (k, j, i)):
                        self.t_low[a, b, c] = tijk
        self.t0 = jet_values(self.t_low)

        # contracted torsion form C_i = g^{jk} T_ijk
        self.c_form = np.empty(n, dtype=object)
        for i in range(n):
            acc = None
            for j in range(n):
                for k in range(n):
                    term = self.ginv[j, k] * self.t_low[i, j, k]
                    acc = term if acc is None else acc + term
            self.c_form[i] = acc
        self.c0 = jet_values(self.c_form)
        self.cbar0 = self.ginv0 @ self.c0
        self.c2 = float(self.c0 @ self.cbar0)

        # normalized form and angular metric (values)
        self.ell0 = self.g0 @ p.y / self.lval
        self.hbar0 = self.g0 - np.outer(self.ell0, self.ell0)

        # geodesic spray as order-2 jets
        ys = [self.space.variable(n + i, p.y[i]) for i in range(n)]
        self.spray = np.empty(n, dtype=object)
        for i in range(n):
            acc = None
            for l in range(n):
                inner = None
                for k in range(n):
                    term = dy[l].derivative(k) * ys[k]
                    inner = term if inner is None else inner + term
                inner = inner - jl2.derivative(l)
                term = self.ginv[i, l] * inner
                acc = term if acc is None else acc + term
            self.spray[i] = acc * 0.25
        self.spray0 = jet_values(self.spray)

        # nonlinear connection as order-1 jets; Berwald coefficients as values
        self.nconn = np.empty((n, n), dtype=object)
        for i in range(n):
            for j in range(n):
                self.nconn[i, j] = self.spray[i].derivative(n + j)
        self.n0 = jet_values(self.nconn)
        self.gb0 = np.empty((n, n, n))
        for i in range(n):
            for j in range(n):
                for k in range(j, n):
                    v = self.nconn[i, k].derivative(n + j).value
                    self.gb0[i, j, k] = self.gb0[i, k, j] = v

        # delta_k g_ij as order-1 jets
        dg = np.empty((n, n, n), dtype=object)
        for i in range(n):
            for j in range(i, n):
                dxg = [self.g[i, j].derivative(k) for k in range(n)]
                dyg = [self.g[i, j].derivative(n + k) for k in range(n)]
                for k in range(n):
                    acc = dxg[k]
                    for m_ in range(n):
                        acc = acc - self.nconn[m_, k] * dyg[m_]
                    dg[i, j, k] = acc
                    if j != i:
                        dg[j, i, k] = acc
        self._dg = dg

        # Cartan horizontal coefficients as order-1 jets
        self.f = np.empty((n, n, n), dtype=object)
        for i in range(n):
            for j in range(n):
                for k in range(j, n):
                    acc = None
                    for l in range(n):
                        inner = dg[l, k, j] + dg[j, l, k] - dg[j, k, l]
                        term = self.ginv[i, l] * inner
                        acc = term if acc is None else acc + term
                    val = acc * 0.5
                    self.f[i, j, k] = val
                    self.f[i, k, j] = val
        self.f0 = jet_values(self.f)

        # Cartan vertical coefficients as order-1 jets
        self.cv = np.empty((n, n, n), dtype=object)
        for i in range(n):
            for j in range(n):
                for k in range(j, n):
                    acc = None
                    for l in range(n):
                        term = self.ginv[i, l] * self.t_low[l, j, k]
                        acc = term if acc is None else acc + term
                    self.cv[i, j, k] = acc
                    self.cv[i, k, j] = acc
        self.cv0 = jet_values(self.cv)

        self._partials = {}

    # -- derivative-value access ---------------------------------------

    def partials(self, name):
        """First partials (trailing axis of length 2n) of a jet tensor."""
        cached = self._partials.get(name)
        if cached is None:
            arr = {"g": self.g, "t_low": self.t_low, "c_form": self.c_form,
                   "spray": self.spray, "nconn": self.nconn, "f": self.f,
                   "cv": self.cv}[name]
            cached = self._partials[name] = jet_partials(arr, self.space)
        return cached

    def delta_of(self, dvals):
        """Convert plain partials (..., 2n) into horizontal derivatives
        delta_l = d_l - N^m_l d-dot_m, trailing axis of length n."""
        n = self.n
        return dvals[..., :n] - np.einsum("...m,ml->...l", dvals[..., n:], self.n0)

    def delta_l2(self):
        """delta_k L^2 (vanishes for the metric spray's N)."""
        n = self.n
        dl2 = np.array([self.jl2.derivative(k).value for k in range(2 * n)])
        return dl2[:n] - self.n0.T @ dl2[n:]


def frame(m: MetricModel, p: JetPoint) -> Frame:
    key = ("frame", id(m))
    got = p.cache_get(key)
    if got is None:
        got = p.cache_set(key, Frame(m, p))
    return got


# ---------------------------------------------------------------------------
# public data container and operations
# ---------------------------------------------------------------------------

@dataclass
class ConnectionData:
    """Connection coefficients at a JetPoint.

    spray: G^i, nconn: N^i_j, cartan_h: F^i_jk, cartan_v: C^i_jk,
    berwald_h: G^i_jk.  Construction validates the structural symmetries and
    the deflection identities.
    """

    spray: np.ndarray
    nconn: np.ndarray
    cartan_h: np.ndarray
    cartan_v: np.ndarray
    berwald_h: np.ndarray
    at: JetPoint

    def __post_init__(self):
        y = self.at.y
        scale = max(1.0, float(np.max(np.abs(self.cartan_h))),
                    float(np.max(np.abs(self.nconn))))
        checks = {
            "horizontal coefficients not symmetric":
                np.max(np.abs(self.cartan_h - self.cartan_h.transpose(0, 2, 1))),
            "Berwald coefficients not symmetric":
                np.max(np.abs(self.berwald_h - self.berwald_h.transpose(0, 2, 1))),
            "deflection failed (F.y != N)":
                np.max(np.abs(np.einsum("ijk,j->ik", self.cartan_h, y) - self.nconn)),
            "Berwald contraction failed (G.y != N)":
                np.max(np.abs(np.einsum("ijk,k->ij", self.berwald_h, y) - self.nconn)),
        }
        for msg, res in checks.items():
            if res > _CONSTRUCTION_TOL * scale:
                raise FinslerError(f"ConnectionData: {msg} (residual {res:.3e})")


def spray_and_nonlinear(m: MetricModel, p: JetPoint):
    fr = frame(m, p)
    return fr.spray0.copy(), fr.n0.copy()


def cartan_coefficients(m: MetricModel, p: JetPoint) -> ConnectionData:
    fr = frame(m, p)
    return ConnectionData(fr.spray0.copy(), fr.n0.copy(), fr.f0.copy(),
                          fr.cv0.copy(), fr.gb0.copy(), p)


def cartan_axiom_residuals(m: MetricModel, p: JetPoint) -> dict:
    """Residuals of the defining properties of the two connections.

    Keys: h_metricity, v_metricity, f_symmetry, t_symmetry, deflection,
    berwald_symmetry, berwald_contraction, berwald_h_l, plus hv_torsion
    (vertical coefficients against the Cartan tensor).
    """
    fr = frame(m, p)
    n = m.n
    dgv = fr.delta_of(fr.partials("g"))       # delta_l g_ij, axis l last
    h_metric = dgv - np.einsum("lik,lj->ijk", fr.f0, fr.g0) \
                   - np.einsum("ljk,il->ijk", fr.f0, fr.g0)
    dyg = fr.partials("g")[..., n:]
    v_metric = dyg - 2.0 * fr.t0
    t_sym = max(
        float(np.max(np.abs(fr.t0 - fr.t0.transpose(1, 0, 2)))),
        float(np.max(np.abs(fr.t0 - fr.t0.transpose(0, 2, 1)))),
    )
    return {
        "h_metricity": float(np.max(np.abs(h_metric))),
        "v_metricity": float(np.max(np.abs(v_metric))),
        "f_symmetry": float(np.max(np.abs(fr.f0 - fr.f0.transpose(0, 2, 1)))),
        "t_symmetry": t_sym,
        "deflection": float(np.max(np.abs(
            np.einsum("ijk,j->ik", fr.f0, p.y) - fr.n0))),
        "berwald_symmetry": float(np.max(np.abs(
            fr.gb0 - fr.gb0.transpose(0, 2, 1)))),
        "berwald_contraction": float(np.max(np.abs(
            np.einsum("ijk,k->ij", fr.gb0, p.y) - fr.n0))),
        "berwald_h_l": float(np.max(np.abs(fr.delta_l2()))),
        "hv_torsion": float(np.max(np.abs(
            np.einsum("ia,ajk->ijk", fr.g0, fr.cv0) - fr.t0))),
    }


def _cov_derive_values(fr: Frame, wjets, signature, vertical: bool,
                       berwald: bool = False):
    n = fr.n
    dvals = jet_partials(wjets, fr.space) if wjets.dtype == object else None
    if dvals is None:
        raise TypeError("field jets expected")
    if vertical:
        base = dvals[..., n:]
        coeff = None if berwald else fr.cv0
    else:
        base = fr.delta_of(dvals)
        coeff = fr.gb0 if berwald else fr.f0
    out = base.copy()
    if coeff is not None:
        for axis, var in enumerate(signature):
            if var == "con":
                corr = np.tensordot(jet_values(wjets), coeff, axes=([axis], [1]))
                out = out + np.moveaxis(corr, -2, axis)
            else:
                corr = np.tensordot(jet_values(wjets), coeff, axes=([axis], [0]))
                out = out - np.moveaxis(corr, -2, axis)
    return out


def h_cov_derive(m: MetricModel, p: JetPoint, field) -> PointTensor:
    """Cartan h-covariant derivative; the derivative slot is appended last."""
    fr = frame(m, p)
    w = field.jets(m, p, order=1)
    vals = _cov_derive_values(fr, w, field.index_signature, vertical=False)
    return PointTensor(vals, tuple(field.index_signature) + ("cov",), p)


def v_cov_derive(m: MetricModel, p: JetPoint, field,
                 connection: str = "cartan") -> PointTensor:
    """Vertical covariant derivative, 'cartan' or 'berwald' flavor.

    The Berwald vertical derivative is the plain fiber derivative."""
    if connection not in ("cartan", "berwald"):
        raise ValueError("connection must be 'cartan' or 'berwald'")
    fr = frame(m, p)
    w = field.jets(m, p, order=1)
    vals = _cov_derive_values(fr, w, field.index_signature, vertical=True,
                              berwald=(connection == "berwald"))
    return PointTensor(vals, tuple(field.index_signature) + ("cov",), p)


def berwald_h_derive(m: MetricModel, p: JetPoint, field) -> PointTensor:
    fr = frame(m, p)
    w = field.jets(m, p, order=1)
    vals = _cov_derive_values(fr, w, field.index_signature, vertical=False,
                              berwald=True)
    return PointTensor(vals, tuple(field.index_signature) + ("cov",), p)


def berwald_bridge_check(m: MetricModel, p: JetPoint, field) -> dict:
    """Residuals of the two Berwald-Cartan bridge identities for a vector
    field W:

      vertical:   D0_v W = Cartan-v W - T(., W)
      horizontal: D0_h W = Cartan-h W + Phat(., W)
    """
    from .curvature import curvatures  # local import; curvature builds on us

    fr = frame(m, p)
    if tuple(field.index_signature) != ("con",):
        raise ValueError("the bridge check expects a vector field")
    w = field.jets(m, p, order=1)
    wv = jet_values(w)

    lhs_v = _cov_derive_values(fr, w, ("con",), vertical=True, berwald=True)
    cart_v = _cov_derive_values(fr, w, ("con",), vertical=True)
    torsion = np.einsum("ika,a->ik", fr.cv0, wv)   # T(e_k, W)^i
    res_v = float(np.max(np.abs(lhs_v - (cart_v - torsion))))

    lhs_h = _cov_derive_values(fr, w, ("con",), vertical=False, berwald=True)
    cart_h = _cov_derive_values(fr, w, ("con",), vertical=False)
    phat = curvatures(m, p).phat                    # Phat^i_{jk} = Phat(e_j, e_k)^i
    res_h = float(np.max(np.abs(lhs_h - (cart_h + np.einsum("ika,a->ik", phat, wv)))))
    return {"vertical": res_v, "horizontal": res_h}


# ---------------------------------------------------------------------------
# metric-backed fields (usable with the covariant-derivative operations)
# ---------------------------------------------------------------------------

class MetricTensorField:
    """Layer-zero tensors exposed as derivable fields.

    kind is one of 'g' (fundamental tensor), 'T' (lowered Cartan tensor),
    'C' (contracted torsion form), 'L' (the Finsler function, a scalar) or
    'eta' (the fundamental vector field y)."""

    _SIGNATURES = {"g": ("cov", "cov"), "T": ("cov", "cov", "cov"),
                   "C": ("cov",), "L": (), "eta": ("con",)}

    def __init__(self, kind):
        if kind not in self._SIGNATURES:
            raise ValueError(f"unknown metric tensor kind '{kind}'")
        self.kind = kind
        self.index_signature = self._SIGNATURES[kind]

    def jets(self, m, p, order=1):
        fr = frame(m, p)
        if self.kind == "g":
            return fr.g
        if self.kind == "T":
            return fr.t_low
        if self.kind == "C":
            return fr.c_form
        if self.kind == "L":
            out = np.empty((), dtype=object)
            out[()] = fr.jl2.sqrt()
            return out
        n = fr.n
        out = np.empty(n, dtype=object)
        for i in range(n):
            out[i] = fr.space.variable(n + i, p.y[i])
        return out

    def values(self, m, p):
        return jet_values(self.jets(m, p))
