"""Curvature tensors of the Cartan connection and the identity battery.

Sign convention, fixed once for the whole package: the classical curvature
of a connection D on the pulled-back bundle is taken as

    K(U, V) Z = -D_U D_V Z + D_V D_U Z + D_[U,V] Z ,

so that on a Riemannian constant-curvature space the horizontal curvature
satisfies R(X, Y)Z = k0 ( g(X,Z) Y - g(Y,Z) X ) with k0 the classical
sectional curvature.  The three tensors are

    R(X,Y)Z = K(BX, BY)Z,   P(X,Y)Z = K(BX, vY)Z,   S(X,Y)Z = K(vX, vY)Z

(B/v horizontal/vertical lifts).  In coordinates, with delta the horizontal
derivative, F/C the Cartan coefficients and Gb the Berwald coefficients:

    Rhat^i_jk  = delta_k N^i_j - delta_j N^i_k
    R^i_mjk    = delta_k F^i_mj - delta_j F^i_mk
                 + F^a_mj F^i_ak - F^a_mk F^i_aj + C^i_mb Rhat^b_jk
    P^i_mjk    = ddot_k F^i_mj - delta_j C^i_mk
                 + F^a_mj C^i_ak - C^a_mk F^i_aj + C^i_mb Gb^b_kj
    S^i_mjk    = ddot_k C^i_mj - ddot_j C^i_mk
                 + C^a_mj C^i_ak - C^a_mk C^i_aj

Lowered arrays are stored in argument order: X4[x, y, z, w] = g(K(e_x,e_y)e_z, e_w).
Contractions with the fundamental vector field give the hat tensors
(the (v)h-, (v)hv- and (v)v-torsions).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .connection import Frame, frame
from .errors import FinslerError
from .metric import JetPoint, MetricModel
from .tolerances import TolerancePolicy

_STRUCT_TOL = 1e-9
_FD_STEP = 2e-5


@dataclass
class CurvatureData:
    """Curvature component arrays at a JetPoint.

    r4/p4/s4 are the metric-lowered rank-4 arrays in argument order;
    r_op/p_op/s_op hold (K(e_j,e_k)e_m)^i as [i, m, j, k]; rhat/phat/shat
    are the eta-contractions [i, j, k]; ric_v the vertical Ricci tensor and
    sc_v the vertical scalar curvature.
    """

    r4: np.ndarray
    p4: np.ndarray
    s4: np.ndarray
    r_op: np.ndarray
    p_op: np.ndarray
    s_op: np.ndarray
    rhat: np.ndarray
    phat: np.ndarray
    shat: np.ndarray
    ric_v: np.ndarray
    sc_v: float
    at: JetPoint

    def __post_init__(self):
        scale = max(1.0, float(np.max(np.abs(self.r4))),
                    float(np.max(np.abs(self.s4))))
        checks = {
            "S not antisymmetric in the first pair":
                np.max(np.abs(self.s4 + self.s4.transpose(1, 0, 2, 3))),
            "S not antisymmetric in the last pair":
                np.max(np.abs(self.s4 + self.s4.transpose(0, 1, 3, 2))),
            "R not antisymmetric in the last pair":
                np.max(np.abs(self.r4 + self.r4.transpose(0, 1, 3, 2))),
            "Shat does not vanish":
                np.max(np.abs(self.shat)),
        }
        for msg, res in checks.items():
            if res > _STRUCT_TOL * scale:
                raise FinslerError(f"CurvatureData: {msg} (residual {res:.3e})")


def _assemble(fr: Frame, f0=None):
    """Curvature arrays from a frame; f0 may override the horizontal
    coefficient values (fault injection in tests)."""
    n = fr.n
    y = fr.point.y
    F = fr.f0 if f0 is None else f0
    Cv = fr.cv0
    Gb = fr.gb0

    dN = fr.partials("nconn")
    deltaN = fr.delta_of(dN)                      # [b, j, l] = delta_l N^b_j
    rhat = deltaN - deltaN.transpose(0, 2, 1)     # Rhat^b_jk = delta_k N^b_j - delta_j N^b_k

    dF = fr.partials("f")
    deltaF = fr.delta_of(dF)                      # [i, m, a, l] = delta_l F^i_ma
    dyF = dF[..., n:]                             # [i, m, a, k] = ddot_k F^i_ma
    dCv = fr.partials("cv")
    deltaCv = fr.delta_of(dCv)
    dyCv = dCv[..., n:]

    r_op = (deltaF
            - deltaF.transpose(0, 1, 3, 2)
            + np.einsum("amj,iak->imjk", F, F)
            - np.einsum("amk,iaj->imjk", F, F)
            + np.einsum("imb,bjk->imjk", Cv, rhat))
    p_op = (dyF
            - deltaCv.transpose(0, 1, 3, 2)
            + np.einsum("amj,iak->imjk", F, Cv)
            - np.einsum("amk,iaj->imjk", Cv, F)
            + np.einsum("imb,bkj->imjk", Cv, Gb))
    s_op = (dyCv
            - dyCv.transpose(0, 1, 3, 2)
            + np.einsum("amj,iak->imjk", Cv, Cv)
            - np.einsum("amk,iaj->imjk", Cv, Cv))

    g = fr.g0
    r4 = np.einsum("imjk,iw->jkmw", r_op, g)
    p4 = np.einsum("imjk,iw->jkmw", p_op, g)
    s4 = np.einsum("imjk,iw->jkmw", s_op, g)
    phat = np.einsum("imjk,m->ijk", p_op, y)
    shat = np.einsum("imjk,m->ijk", s_op, y)
    ric_v = np.einsum("kyxk->xy", s_op)
    sc_v = float(np.einsum("xy,yx->", ric_v, fr.ginv0))
    return r4, p4, s4, r_op, p_op, s_op, rhat, phat, shat, ric_v, sc_v


def curvatures(m: MetricModel, p: JetPoint) -> CurvatureData:
    key = ("curvature", id(m))
    got = p.cache_get(key)
    if got is None:
        fr = frame(m, p)
        got = p.cache_set(key, CurvatureData(*_assemble(fr), p))
    return got


# ---------------------------------------------------------------------------
# exact covariant derivatives of the torsion layer
# ---------------------------------------------------------------------------

def h_nabla_t_low(fr: Frame) -> np.ndarray:
    """(0,3) h-covariant derivative of the lowered Cartan tensor,
    [x, y, z, l] with the derivative slot last."""
    dT = fr.partials("t_low")
    out = fr.delta_of(dT)
    F = fr.f0
    T = fr.t0
    out = out - np.einsum("ayz,axl->xyzl", T, F)
    out = out - np.einsum("xaz,ayl->xyzl", T, F)
    out = out - np.einsum("xya,azl->xyzl", T, F)
    return out


def v_nabla_t_low(fr: Frame) -> np.ndarray:
    dT = fr.partials("t_low")[..., fr.n:]
    Cv = fr.cv0
    T = fr.t0
    out = dT - np.einsum("ayz,axl->xyzl", T, Cv)
    out = out - np.einsum("xaz,ayl->xyzl", T, Cv)
    out = out - np.einsum("xya,azl->xyzl", T, Cv)
    return out


def h_nabla_c_form(fr: Frame) -> np.ndarray:
    """h-covariant derivative of the contracted-torsion form, [i, l]."""
    dC = fr.partials("c_form")
    out = fr.delta_of(dC)
    return out - np.einsum("a,ail->il", fr.c0, fr.f0)


def phat_from_torsion(fr: Frame) -> np.ndarray:
    """Lowered (v)hv-torsion via the torsion derivative along eta, [j,k,c]."""
    ht = h_nabla_t_low(fr)
    return np.einsum("jkcl,l->jkc", ht, fr.point.y)


# ---------------------------------------------------------------------------
# finite-difference layer: partial derivatives of curvature components
# ---------------------------------------------------------------------------

class CurvatureJacobian:
    """Central-difference partials of the lowered curvature arrays.

    dx[...] and dy[...] stack the derivative direction on the first axis.
    The curvature layer itself is exact; only this extra differentiation
    layer is numeric, with step ``h``.
    """

    def __init__(self, m: MetricModel, p: JetPoint, h: float = _FD_STEP):
        self.h = h
        n = m.n
        names = ("r4", "p4", "s4")
        self.dx = {k: np.empty((n,) + (n,) * 4) for k in names}
        self.dy = {k: np.empty((n,) + (n,) * 4) for k in names}
        for v in range(n):
            for store, idx in ((self.dx, 0), (self.dy, 1)):
                plus = [p.x.copy(), p.y.copy()]
                minus = [p.x.copy(), p.y.copy()]
                plus[idx][v] += h
                minus[idx][v] -= h
                cp = curvatures(m, JetPoint(*plus))
                cm = curvatures(m, JetPoint(*minus))
                for k in names:
                    store[k][v] = (getattr(cp, k) - getattr(cm, k)) / (2.0 * h)


def curvature_jacobian(m: MetricModel, p: JetPoint, h: float = _FD_STEP):
    key = ("curvjac", id(m), h)
    got = p.cache_get(key)
    if got is None:
        got = p.cache_set(key, CurvatureJacobian(m, p, h))
    return got


def cov_derivative_curvature(m: MetricModel, p: JetPoint, tensor: str,
                             direction: str, h: float = _FD_STEP) -> np.ndarray:
    """Covariant derivative of a lowered curvature array, [x,y,z,w,l].

    tensor in {'R','P','S'}, direction 'h' (horizontal) or 'v' (vertical).
    The curvature partials come from the finite-difference layer; the
    connection corrections are exact.
    """
    fr = frame(m, p)
    jac = curvature_jacobian(m, p, h)
    key = {"R": "r4", "P": "p4", "S": "s4"}[tensor]
    x4 = getattr(curvatures(m, p), key)
    dx = np.moveaxis(jac.dx[key], 0, -1)
    dy = np.moveaxis(jac.dy[key], 0, -1)
    if direction == "h":
        base = dx - np.einsum("xyzwm,ml->xyzwl", dy, fr.n0)
        coeff = fr.f0
    elif direction == "v":
        base = dy
        coeff = fr.cv0
    else:
        raise ValueError("direction must be 'h' or 'v'")
    out = base.copy()
    out -= np.einsum("ayzw,axl->xyzwl", x4, coeff)
    out -= np.einsum("xazw,ayl->xyzwl", x4, coeff)
    out -= np.einsum("xyaw,azl->xyzwl", x4, coeff)
    out -= np.einsum("xyza,awl->xyzwl", x4, coeff)
    return out


def v_derivative_r_along_eta(m: MetricModel, p: JetPoint,
                             h: float = 1e-3) -> np.ndarray:
    """(nabla_{v eta} R) on the operator form, via a ray difference.

    The fiber derivative along y is taken by rescaling the direction, which
    is cheap and well conditioned; the vertical connection corrections are
    exact.
    """
    y = p.y
    cp = curvatures(m, JetPoint(p.x, (1.0 + h) * y)).r_op
    cm = curvatures(m, JetPoint(p.x, (1.0 - h) * y)).r_op
    ray = (cp - cm) / (2.0 * h)     # y^b ddot_b R^i_mjk
    fr = frame(m, p)
    cv_y = np.einsum("iab,b->ia", fr.cv0, y)    # C^i_{a b} y^b  (vanishes)
    r_op = curvatures(m, p).r_op
    out = ray + np.einsum("amjk,ia->imjk", r_op, cv_y)
    out -= np.einsum("iajk,am->imjk", r_op, cv_y)
    out -= np.einsum("imak,aj->imjk", r_op, cv_y)
    out -= np.einsum("imja,ak->imjk", r_op, cv_y)
    return out


# ---------------------------------------------------------------------------
# identity battery
# ---------------------------------------------------------------------------

@dataclass
class BatteryReport:
    """Per-identity max residuals over a corpus."""

    items: dict = field(default_factory=dict)
    mu_estimated: bool = False  # scaling-form derivatives came from FD fits

    def add(self, name, residual, tolerance):
        self.items[name] = {
            "residual": float(residual),
            "tolerance": float(tolerance),
            "pass": bool(residual < tolerance),
        }

    @property
    def passed(self) -> bool:
        return all(v["pass"] for v in self.items.values())

    def residual(self, name) -> float:
        return self.items[name]["residual"]


def _battery_residuals_at(m: MetricModel, p: JetPoint, f_perturbation=None):
    """Residuals of the unconditional curvature identities at one point.

    ``f_perturbation`` adds a (j,k)-symmetric array to the horizontal
    coefficients before assembling the curvature (fault injection)."""
    fr = frame(m, p)
    y = p.y
    if f_perturbation is None:
        cd = curvatures(m, p)
        r4, p4, s4 = cd.r4, cd.p4, cd.s4
        r_op, p_op = cd.r_op, cd.p_op
        rhat, phat, shat = cd.rhat, cd.phat, cd.shat
    else:
        arrays = _assemble(fr, f0=fr.f0 + f_perturbation)
        r4, p4, s4, r_op, p_op, _, rhat, phat, shat, _, _ = arrays

    g = fr.g0
    ht = h_nabla_t_low(fr)
    t = fr.t0
    phat_low = np.einsum("ijk,ic->jkc", phat, g)

    res = {}
    res["p_skew_last_pair"] = np.max(np.abs(p4 + p4.transpose(0, 1, 3, 2)))
    res["phat_is_torsion_derivative_along_eta"] = np.max(np.abs(
        phat_low - np.einsum("jkcl,l->jkc", ht, y)))
    res["p_vertical_eta_slot"] = np.max(np.abs(np.einsum("imjk,k->imj", p_op, y)))
    res["r_skew_last_pair"] = np.max(np.abs(r4 + r4.transpose(0, 1, 3, 2)))
    res["torsion_eta_contraction"] = np.max(np.abs(np.einsum("ijk,k->ij", t, y)))
    res["shat_vanishes"] = np.max(np.abs(shat))
    res["rhat_consistency"] = np.max(np.abs(
        np.einsum("imjk,m->ijk", r_op, y) - rhat))

    # full expansion of P in torsion derivatives and the hv-torsion
    term1 = np.transpose(ht, (0, 1, 3, 2))        # hT[x,y,w,z]
    term2 = ht                                     # hT[x,y,z,w]
    term3 = np.einsum("xwb,bzy->xyzw", t, phat)
    term4 = np.einsum("xzb,bwy->xyzw", t, phat)
    rhs = term1 - term2 - term3 + term4
    res["p_expansion_in_torsion"] = np.max(np.abs(p4 - rhs))

    sym = max(np.max(np.abs(ht - ht.transpose(1, 0, 2, 3))),
              np.max(np.abs(ht - ht.transpose(0, 2, 1, 3))))
    res["torsion_derivative_symmetry"] = sym

    vr = v_derivative_r_along_eta(m, p)
    res["r_vertical_derivative_along_eta"] = np.max(np.abs(vr))
    return res


def identity_battery(m: MetricModel, corpus, policy: TolerancePolicy = None
                     ) -> BatteryReport:
    """Run the unconditional identity suite over a corpus of JetPoints."""
    policy = policy or TolerancePolicy()
    worst = {}
    for p in corpus:
        for name, r in _battery_residuals_at(m, p).items():
            worst[name] = max(worst.get(name, 0.0), float(r))
    report = BatteryReport()
    for name, r in worst.items():
        report.add(name, r, policy.threshold(1.0))
    return report
