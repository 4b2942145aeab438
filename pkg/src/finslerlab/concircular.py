"""Verification and fitting of concircular vector-field candidates.

A candidate field zeta is concircular (with respect to the Cartan
connection) when

    h-nabla zeta = alpha (x) zeta + psi * Id      (horizontal condition)
    v-nabla zeta = 0                              (vertical condition)

for a closed horizontal 1-form alpha and a nowhere-zero scalar psi(x); it is
concurrent when additionally alpha = 0 and psi = -1.  Per sample point the
horizontal condition is an overdetermined linear system in (alpha_j, psi)
solved by least squares; the verdict aggregates every sampled point.

``consequence_battery`` then checks the full set of identities a verified
field must satisfy: the algebraic curvature contractions, the derivative
identities (through the finite-difference curvature layer), the behaviour of
the associated 1-form omega = g(zeta, .), directional independence, and
agreement between the Cartan-side and Berwald-side verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from .connection import frame, jet_partials, jet_values
from .curvature import (BatteryReport, cov_derivative_curvature, curvatures,
                        h_nabla_t_low, v_nabla_t_low)
from .errors import FinslerError
from .expressions import compile_expression
from .metric import JetPoint, MetricModel
from .tolerances import TolerancePolicy

_FD_ITEM_FACTOR = 50.0   # looser gate for identities using the FD layer
_OMEGA_FLOOR = 1e-10


class CandidateField:
    """A candidate pi-vector field given by component expressions.

    ``psi`` and ``alpha`` optionally declare closed forms for the expected
    scaling function and 1-form; when present, their derivatives enter the
    battery exactly, otherwise finite differences of per-point fits are used
    and flagged as lower precision.
    """

    index_signature = ("con",)

    def __init__(self, name, components, n, y_independent=False,
                 psi=None, alpha=None):
        self.name = name
        self.n = n
        if len(components) != n:
            raise FinslerError(
                f"candidate '{name}': expected {n} components, got {len(components)}")
        self.exprs = [compile_expression(str(t), n) for t in components]
        self.declared_y_independent = bool(y_independent)
        if y_independent and any(e.uses_y for e in self.exprs):
            raise FinslerError(
                f"candidate '{name}' declared y-independent but components use y")
        self.psi_expr = compile_expression(str(psi), n) if psi is not None else None
        self.alpha_exprs = ([compile_expression(str(t), n, allow_y=False) for t in alpha]
                            if alpha is not None else None)

    def jets(self, metric, p: JetPoint, order=1):
        space = dc.taylor_space(2 * self.n, 4)
        xs, ys = space.lift_point(p.x, p.y)
        out = np.empty(self.n, dtype=object)
        for i, e in enumerate(self.exprs):
            v = e(xs, ys)
            out[i] = v if isinstance(v, dc.MultiDual) else space.constant(float(v))
        return out

    def values(self, metric, p):
        return np.array([float(e(p.x, p.y)) for e in self.exprs])


@dataclass
class ConcircularData:
    """Derived scalars and forms of a candidate at one point."""

    omega: np.ndarray          # omega_i = g_ij zeta^j
    b_scalar: float            # B = g(zeta, eta)
    m_field: np.ndarray        # m = zeta - (B / L^2) eta
    hbar_zz: float             # angular metric on (zeta, zeta)
    mu_form: np.ndarray        # mu_i = horizontal derivative of psi
    a_form: np.ndarray         # A = mu - psi alpha
    lambda_ratio: float | None
    mu_method: str             # 'exact' or 'fd'
    alpha_form: np.ndarray = None   # closed-form alpha when declared
    hmu: np.ndarray = None          # h-covariant derivative of mu (exact only)
    halpha: np.ndarray = None       # h-covariant derivative of alpha


@dataclass
class PointFit:
    point: JetPoint
    zeta: np.ndarray
    psi_hat: float
    alpha_hat: np.ndarray
    residual_fit: float
    residual_v: float
    rank_deficient: bool
    data: ConcircularData


@dataclass
class ConcircularReport:
    metric: str
    candidate: str
    points: list = field(default_factory=list)
    residual_h: float = 0.0
    residual_v: float = 0.0
    concircular: bool = False
    concurrent: bool = False
    indeterminate: bool = False
    psi_min_ok: bool = True
    berwald: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    def psi_values(self):
        return np.array([pf.psi_hat for pf in self.points])


def _fit_at_point(n, deriv, zeta):
    """Least-squares (alpha, psi) for deriv^i_j = alpha_j zeta^i + psi d^i_j."""
    rows = n * n
    a = np.zeros((rows, n + 1))
    rhs = np.zeros(rows)
    r = 0
    for i in range(n):
        for j in range(n):
            a[r, j] = zeta[i]
            if i == j:
                a[r, n] = 1.0
            rhs[r] = deriv[i, j]
            r += 1
    sol, _, rank, _ = np.linalg.lstsq(a, rhs, rcond=None)
    residual = float(np.max(np.abs(a @ sol - rhs)))
    return sol[:n], float(sol[n]), residual, rank < n + 1


def _h_deriv_vector(fr, zjets):
    dz = jet_partials(zjets, fr.space)
    zv = jet_values(zjets)
    base = fr.delta_of(dz)
    return base + np.einsum("iaj,a->ij", fr.f0, zv), zv


def _v_deriv_vector(fr, zjets, berwald=False):
    dz = jet_partials(zjets, fr.space)[..., fr.n:]
    if berwald:
        return dz
    zv = jet_values(zjets)
    return dz + np.einsum("iaj,a->ij", fr.cv0, zv)


def _mu_alpha_at(m, cand, p, fr, psi_hat, alpha_hat, fd_step=1e-5):
    """(mu, alpha, h-nabla mu, h-nabla alpha, method) at one point.

    Exact when the candidate declares closed forms; otherwise horizontal
    finite differences of per-point fits, flagged 'fd'.
    """
    n = m.n
    if cand.psi_expr is not None:
        space = fr.space
        xs, ys = space.lift_point(p.x, p.y)
        psij = cand.psi_expr(xs, ys)
        if not isinstance(psij, dc.MultiDual):
            psij = space.constant(float(psij))
        # mu_i = delta_i psi as jets (valid to order 1)
        mu_jets = np.empty(n, dtype=object)
        for i in range(n):
            acc = psij.derivative(i)
            for mm in range(n):
                acc = acc - fr.nconn[mm, i] * psij.derivative(n + mm)
            mu_jets[i] = acc
        mu = jet_values(mu_jets)
        dmu = jet_partials(mu_jets, space)
        hmu = fr.delta_of(dmu) - np.einsum("a,ail->il", mu, fr.f0)
        if cand.alpha_exprs is not None:
            al_jets = np.empty(n, dtype=object)
            for i, e in enumerate(cand.alpha_exprs):
                v = e(xs)
                al_jets[i] = v if isinstance(v, dc.MultiDual) else space.constant(float(v))
            alpha = jet_values(al_jets)
            dal = jet_partials(al_jets, space)
            halpha = fr.delta_of(dal) - np.einsum("a,ail->il", alpha, fr.f0)
        else:
            alpha = alpha_hat.copy()
            halpha = np.zeros((n, n))
        return mu, alpha, hmu, halpha, "exact"

    # finite-difference fallback on the fitted psi
    def fitted(x, y):
        q = JetPoint(x, y)
        fq = frame(m, q)
        deriv, zv = _h_deriv_vector(fq, cand.jets(m, q, order=1))
        al, ps, _, _ = _fit_at_point(n, deriv, zv)
        return ps, al

    h = fd_step
    dpsi = np.zeros(2 * n)
    for v in range(n):
        xp, xm = p.x.copy(), p.x.copy()
        xp[v] += h
        xm[v] -= h
        dpsi[v] = (fitted(xp, p.y)[0] - fitted(xm, p.y)[0]) / (2 * h)
        yp, ym = p.y.copy(), p.y.copy()
        yp[v] += h
        ym[v] -= h
        dpsi[n + v] = (fitted(p.x, yp)[0] - fitted(p.x, ym)[0]) / (2 * h)
    mu = dpsi[:n] - fr.n0.T @ dpsi[n:]
    return mu, alpha_hat.copy(), np.full((n, n), np.nan), np.full((n, n), np.nan), "fd"


def fit_and_verify(m: MetricModel, cand: CandidateField, corpus,
                   policy: TolerancePolicy = None) -> ConcircularReport:
    """Fit (alpha, psi) per point and aggregate the concircularity verdict."""
    policy = policy or TolerancePolicy()
    if not corpus:
        raise FinslerError("empty corpus")
    n = m.n
    rep = ConcircularReport(metric=m.name, candidate=cand.name)
    thr = policy.threshold(1.0)

    berwald_psis, berwald_alphas = [], []
    berwald_res_h = berwald_res_v = 0.0
    for p in corpus:
        fr = frame(m, p)
        zjets = cand.jets(m, p, order=1)
        deriv, zv = _h_deriv_vector(fr, zjets)
        alpha_hat, psi_hat, res_fit, deficient = _fit_at_point(n, deriv, zv)
        res_v = float(np.max(np.abs(_v_deriv_vector(fr, zjets))))

        omega = fr.g0 @ zv
        b_scalar = float(omega @ p.y)
        mfield = zv - (b_scalar / fr.l2) * p.y
        hbar_zz = float(zv @ fr.hbar0 @ zv)
        mu, alpha_used, hmu, halpha, mu_method = _mu_alpha_at(
            m, cand, p, fr, psi_hat, alpha_hat)
        a_form = mu - psi_hat * alpha_used
        om_n2 = float(omega @ fr.ginv0 @ omega)
        lam = (float((a_form @ fr.ginv0 @ omega) / om_n2)
               if om_n2 > _OMEGA_FLOOR else None)
        rep.points.append(PointFit(
            p, zv, psi_hat, alpha_hat, res_fit, res_v, deficient,
            ConcircularData(omega, b_scalar, mfield, hbar_zz, mu,
                            a_form, lam, mu_method,
                            alpha_form=alpha_used, hmu=hmu, halpha=halpha)))

        bderiv = fr.delta_of(jet_partials(zjets, fr.space)) \
            + np.einsum("iaj,a->ij", fr.gb0, zv)
        b_alpha, b_psi, b_res, _ = _fit_at_point(n, bderiv, zv)
        berwald_psis.append(b_psi)
        berwald_alphas.append(b_alpha)
        berwald_res_h = max(berwald_res_h, b_res)
        berwald_res_v = max(berwald_res_v, float(np.max(np.abs(
            _v_deriv_vector(fr, zjets, berwald=True)))))

    rep.residual_h = max(pf.residual_fit for pf in rep.points)
    rep.residual_v = max(pf.residual_v for pf in rep.points)
    rep.indeterminate = any(pf.rank_deficient for pf in rep.points)
    rep.psi_min_ok = all(abs(pf.psi_hat) > policy.psi_min for pf in rep.points)
    residual_ok = rep.residual_h < thr and rep.residual_v < thr
    rep.concircular = bool(residual_ok and rep.psi_min_ok and not rep.indeterminate)
    rep.concurrent = bool(
        rep.concircular
        and all(abs(pf.psi_hat + 1.0) < thr for pf in rep.points)
        and all(np.max(np.abs(pf.alpha_hat)) < thr for pf in rep.points))

    b_psi_ok = all(abs(ps) > policy.psi_min for ps in berwald_psis)
    b_concircular = bool(berwald_res_h < thr and berwald_res_v < thr and b_psi_ok
                         and not rep.indeterminate)
    rep.berwald = {
        "residual_h": berwald_res_h,
        "residual_v": berwald_res_v,
        "concircular": b_concircular,
        "agrees": b_concircular == rep.concircular,
        "max_psi_diff": max(abs(b - pf.psi_hat)
                            for b, pf in zip(berwald_psis, rep.points)),
        "max_alpha_diff": max(float(np.max(np.abs(b - pf.alpha_hat)))
                              for b, pf in zip(berwald_alphas, rep.points)),
    }
    if rep.indeterminate:
        rep.notes.append("least-squares system rank deficient at some point")
    return rep


# ---------------------------------------------------------------------------
# consequence battery
# ---------------------------------------------------------------------------

def consequence_battery(m: MetricModel, cand: CandidateField, corpus,
                        policy: TolerancePolicy = None,
                        fit_report: ConcircularReport = None,
                        require_verified: bool = True) -> BatteryReport:
    """Residuals of every identity a verified concircular field satisfies.

    Identities whose left side differentiates a curvature tensor go through
    the finite-difference layer and get a proportionally looser gate.
    """
    policy = policy or TolerancePolicy()
    if fit_report is None:
        fit_report = fit_and_verify(m, cand, corpus, policy)
    if require_verified and not fit_report.concircular:
        raise FinslerError(
            f"candidate '{cand.name}' is not a verified concircular field on "
            f"'{m.name}'")

    worst = {}
    fd_items = set()

    def acc(name, arr, fd=False):
        r = float(np.max(np.abs(arr)))
        worst[name] = max(worst.get(name, 0.0), r)
        if fd:
            fd_items.add(name)

    mu_estimated = False
    for pf in fit_report.points:
        p = pf.point
        fr = frame(m, p)
        cd = curvatures(m, p)
        n = m.n
        y = p.y
        g = fr.g0
        zjets = cand.jets(m, p, order=1)
        zv = jet_values(zjets)
        psi = pf.psi_hat
        alpha = pf.alpha_hat
        mu, alpha_cf, hmu, halpha, mu_method = _mu_alpha_at(
            m, cand, p, fr, psi, alpha)
        if mu_method == "fd":
            mu_estimated = True
        alpha = alpha_cf
        t_low = fr.t0
        t_vec = fr.cv0
        a_form = mu - psi * alpha

        # --- algebraic identities (exact layer) -------------------------
        acc("v_curvature_on_field",
            np.einsum("imjk,m->ijk", cd.s_op, zv))
        acc("v_curvature_lowered_on_field",
            np.einsum("xyzw,w->xyz", cd.s4, zv))
        acc("hv_curvature_reduces_to_torsion",
            np.einsum("imjk,m->ijk", cd.p_op, zv) - psi * t_vec)
        acc("hv_curvature_lowered_reduces_to_torsion",
            np.einsum("xyzw,w->xyz", cd.p4, zv) + psi * t_low)
        rhs_i = (np.einsum("k,ij->ijk", mu - psi * alpha, np.eye(n))
                 - np.einsum("j,ik->ijk", mu - psi * alpha, np.eye(n)))
        acc("h_curvature_on_field",
            np.einsum("imjk,m->ijk", cd.r_op, zv) - rhs_i)
        rhs_j = (np.einsum("j,km->jkm", a_form, g)
                 - np.einsum("k,jm->jkm", a_form, g))
        acc("h_curvature_lowered_on_field",
            np.einsum("xyzw,w->xyz", cd.r4, zv) - rhs_j)

        # --- omega layer -------------------------------------------------
        om_jets = np.empty(n, dtype=object)
        for i in range(n):
            acci = fr.g[i, 0] * zjets[0]
            for j in range(1, n):
                acci = acci + fr.g[i, j] * zjets[j]
            om_jets[i] = acci
        om = jet_values(om_jets)
        dom = jet_partials(om_jets, fr.space)
        h_om = fr.delta_of(dom) - np.einsum("a,ail->il", om, fr.f0)
        # (nabla_{beta e_l} omega)(e_i) = alpha_l omega_i + psi g_{l i}
        acc("omega_h_derivative", h_om - (np.outer(om, alpha) + psi * g.T))
        v_om = dom[..., n:] - np.einsum("a,ail->il", om, fr.cv0)
        acc("omega_v_derivative", v_om)

        # --- directional independence ------------------------------------
        dz = jet_partials(zjets, fr.space)[..., n:]
        acc("field_y_independent", dz)
        acc("omega_y_independent", dom[..., n:])

        # --- torsion contractions ----------------------------------------
        acc("torsion_kills_field", np.einsum("xyz,z->xy", t_low, zv))
        acc("hv_torsion_kills_field", np.einsum("ijk,k->ij", cd.phat, zv))
        acc("hv_curvature_vertical_slot_kills_field",
            np.einsum("imjk,k->imj", cd.p_op, zv))
        acc("hv_curvature_horizontal_slot_kills_field",
            np.einsum("imjk,j->imk", cd.p_op, zv))
        acc("form_alternation_vanishes",
            np.outer(om, a_form) - np.outer(a_form, om))
        acc("mu_alpha_on_torsion",
            np.einsum("i,ixy->xy", mu, t_vec)
            - psi * np.einsum("i,ixy->xy", alpha, t_vec))

        # --- derivative identities (finite-difference layer) -------------
        hS = cov_derivative_curvature(m, p, "S", "h")
        vS = cov_derivative_curvature(m, p, "S", "v")
        hP = cov_derivative_curvature(m, p, "P", "h")
        vP = cov_derivative_curvature(m, p, "P", "v")
        hR = cov_derivative_curvature(m, p, "R", "h")
        vR = cov_derivative_curvature(m, p, "R", "v")
        hT = h_nabla_t_low(fr)
        vT = v_nabla_t_low(fr)

        acc("v_deriv_v_curvature_on_field",
            np.einsum("xyzwl,z->xywl", vS, zv), fd=True)
        acc("h_deriv_v_curvature_reduction",
            np.einsum("xyzwl,z->xywl", hS, zv)
            + psi * np.einsum("xylw->xywl", cd.s4), fd=True)
        acc("h_deriv_v_curvature_along_field",
            np.einsum("xyzwl,z,l->xyw", hS, zv, zv), fd=True)
        acc("v_deriv_hv_curvature_reduction",
            np.einsum("xyzwl,z->xywl", vP, zv) - psi * vT, fd=True)
        rhs_g = (np.einsum("l,xyw->xywl", mu - psi * alpha, t_low)
                 + psi * hT
                 - psi * np.einsum("xylw->xywl", cd.p4))
        acc("h_deriv_hv_curvature_expansion",
            np.einsum("xyzwl,z->xywl", hP, zv) - rhs_g, fd=True)
        rhs_h = ((float(mu @ zv) - psi * float(alpha @ zv) - psi**2) * t_low
                 + psi * np.einsum("xywl,l->xyw", hT, zv))
        acc("h_deriv_hv_curvature_along_field",
            np.einsum("xyzwl,z,l->xyw", hP, zv, zv) - rhs_h, fd=True)

        mt = np.einsum("i,ily->ly", mu, t_vec)      # mu(T(e_l, e_y))
        at = np.einsum("i,ily->ly", alpha, t_vec)
        coeff_k = mt - at
        rhs_k = (np.einsum("ly,xw->xywl", coeff_k, g)
                 - np.einsum("lx,yw->xywl", coeff_k, g))
        acc("v_deriv_h_curvature_reduction",
            np.einsum("xyzwl,z->xywl", vR, zv) - rhs_k, fd=True)

        coeff_l = hmu - psi * halpha + psi * np.outer(alpha, alpha).T \
            - np.outer(alpha, mu).T - np.outer(mu, alpha).T
        # coeff_l[y, l]: (h-nabla mu)(y; l) - psi (h-nabla alpha)(y; l)
        #               + psi alpha_l alpha_y - mu_l alpha_y - alpha_l mu_y
        rhs_l = (np.einsum("yl,xw->xywl", coeff_l, g)
                 - np.einsum("xl,yw->xywl", coeff_l, g)
                 - psi * np.einsum("xylw->xywl", cd.r4))
        if mu_method == "exact":
            acc("h_deriv_h_curvature_expansion",
                np.einsum("xyzwl,z->xywl", hR, zv) - rhs_l, fd=True)
            muz = float(mu @ zv)
            alz = float(alpha @ zv)
            coeff_m = (hmu @ zv) - psi * (halpha @ zv) \
                - (muz * alpha + alz * mu) \
                + psi * alz * alpha - psi * mu + psi**2 * alpha
            rhs_m = (np.einsum("y,xw->xyw", coeff_m, g)
                     - np.einsum("x,yw->xyw", coeff_m, g))
            acc("h_deriv_h_curvature_along_field",
                np.einsum("xyzwl,z,l->xyw", hR, zv, zv) - rhs_m, fd=True)

        if fit_report.concurrent:
            acc("concurrent_hv_curvature_is_torsion",
                np.einsum("imjk,m->ijk", cd.p_op, zv) + t_vec)
            acc("concurrent_h_curvature_kills_field",
                np.einsum("imjk,m->ijk", cd.r_op, zv))
            acc("concurrent_h_deriv_h_curvature",
                np.einsum("xyzwl,z->xywl", hR, zv)
                - np.einsum("xylw->xywl", cd.r4), fd=True)

    report = BatteryReport()
    base = policy.threshold(1.0)
    for name, r in worst.items():
        tol = base * (_FD_ITEM_FACTOR if name in fd_items else 1.0)
        report.add(name, r, tol)
    report.items["berwald_cartan_agreement"] = {
        "residual": float(max(fit_report.berwald["max_psi_diff"],
                              fit_report.berwald["max_alpha_diff"])),
        "tolerance": float(base),
        "pass": bool(fit_report.berwald["agrees"]
                     and fit_report.berwald["max_psi_diff"] < base),
    }
    report.mu_estimated = mu_estimated
    return report
