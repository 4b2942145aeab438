"""Special-space predicates, recurrence fitting and the implication harness.

Every predicate is residual based: the defining form of the space is
evaluated with its determined quantities (contracted torsion, angular
metric, vertical scalar curvature, the derived 1-form of P-reducibility)
while genuinely free scalars/forms (the semi-reducibility weight, the
hv-form of the P2 condition, the isotropy scalar, recurrence forms) are
fitted per point by least squares; the residual is the defect of the best
fit.

Verdict semantics:
  pass / fail      residual against the tolerance policy
  vacuous          the defining tensor vanishes identically on the corpus,
                   so a fitted form is undetermined (trivially satisfied)
  not-applicable   dimension gate or a required non-degeneracy (e.g. the
                   contracted-torsion square) fails

A predicate whose defining tensor vanishes never reports "fail"; direct
residual predicates (Riemannian, Berwald, Landsberg) and the isotropy fit
report "pass" with the ``trivial`` flag in that situation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .concircular import CandidateField, ConcircularReport, fit_and_verify
from .connection import frame, jet_values
from .curvature import (cov_derivative_curvature, curvatures, h_nabla_c_form,
                        h_nabla_t_low, v_nabla_t_low)
from .errors import FinslerError
from .metric import JetPoint, MetricModel
from .tolerances import TolerancePolicy

RECURRENCE_KINDS = ("T", "S", "P", "R")

# hypotheses are tested strictly tighter than conclusions so implication
# instances do not flap at the tolerance boundary
_HYPOTHESIS_FACTOR = 0.1


@dataclass
class PredicateResult:
    name: str
    residual: float
    tolerance: float
    verdict: str                  # pass | fail | vacuous | not-applicable
    trivial: bool = False         # defining tensor vanishes on the corpus
    fitted: dict = field(default_factory=dict)
    note: str = ""

    @property
    def holds(self) -> bool:
        """Truth value for implication purposes (vacuous counts as true)."""
        return self.verdict in ("pass", "vacuous")

    def holds_at(self, factor: float) -> bool:
        if self.verdict in ("vacuous",):
            return True
        if self.verdict == "not-applicable":
            return False
        return self.residual < self.tolerance * factor

    def to_dict(self) -> dict:
        out = {"residual": self.residual, "tolerance": self.tolerance,
               "verdict": self.verdict, "trivial": self.trivial}
        public = {k: v for k, v in self.fitted.items() if not k.startswith("_")}
        if public:
            out["fitted"] = public
        if self.note:
            out["note"] = self.note
        return out


@dataclass
class ClassificationReport:
    metric: str
    n_points: int
    predicates: dict = field(default_factory=dict)

    def __getitem__(self, name) -> PredicateResult:
        return self.predicates[name]

    def to_dict(self) -> dict:
        return {name: p.to_dict() for name, p in self.predicates.items()}


def _sym_cycle_hc(h, c):
    """Cyclic symmetrization  h(X,Y)C(Z) + h(Y,Z)C(X) + h(Z,X)C(Y)."""
    return (np.einsum("xy,z->xyz", h, c)
            + np.einsum("yz,x->xyz", h, c)
            + np.einsum("zx,y->xyz", h, c))


def classify_special(m: MetricModel, corpus, policy: TolerancePolicy = None
                     ) -> ClassificationReport:
    """Run every special-space predicate over a corpus of JetPoints."""
    policy = policy or TolerancePolicy()
    tol = policy.threshold(1.0)
    n = m.n
    rep = ClassificationReport(metric=m.name, n_points=len(corpus))

    worst = {k: 0.0 for k in
             ("riemannian", "berwald", "landsberg", "c2_like", "c_reducible",
              "semi_c_reducible", "s3_like", "p2_like", "p_reducible",
              "h_isotropic")}
    norms = {k: 0.0 for k in ("T", "hT", "Phat", "S", "P", "R", "C2")}
    sc_mus, k0s, phis = [], [], []

    for p in corpus:
        fr = frame(m, p)
        cd = curvatures(m, p)
        t = fr.t0
        hbar = fr.hbar0
        c = fr.c0
        c2 = fr.c2
        ht = h_nabla_t_low(fr)
        phat_low = np.einsum("ijk,ic->jkc", cd.phat, fr.g0)

        norms["T"] = max(norms["T"], float(np.max(np.abs(t))))
        norms["hT"] = max(norms["hT"], float(np.max(np.abs(ht))))
        norms["Phat"] = max(norms["Phat"], float(np.max(np.abs(phat_low))))
        norms["S"] = max(norms["S"], float(np.max(np.abs(cd.s4))))
        norms["P"] = max(norms["P"], float(np.max(np.abs(cd.p4))))
        norms["R"] = max(norms["R"], float(np.max(np.abs(cd.r4))))
        norms["C2"] = max(norms["C2"], abs(c2))

        worst["riemannian"] = norms["T"]
        worst["berwald"] = norms["hT"]
        worst["landsberg"] = norms["Phat"]

        # C2-like:  T = C (x) C (x) C / C^2
        if c2 > tol:
            form = np.einsum("x,y,z->xyz", c, c, c) / c2
            worst["c2_like"] = max(worst["c2_like"], float(np.max(np.abs(t - form))))

        # C-reducible:  T = sym{ hbar (x) C } / (n+1)
        if n >= 3:
            form = _sym_cycle_hc(hbar, c) / (n + 1.0)
            worst["c_reducible"] = max(worst["c_reducible"],
                                       float(np.max(np.abs(t - form))))

        # semi-C-reducible: T = mu/(n+1) sym{hbar C} + (1-mu)/C^2 C^3
        if n >= 3 and c2 > tol:
            u = _sym_cycle_hc(hbar, c) / (n + 1.0)
            v = np.einsum("x,y,z->xyz", c, c, c) / c2
            dd = u - v
            den = float(np.sum(dd * dd))
            mu_hat = float(np.sum((t - v) * dd) / den) if den > tol else np.nan
            if np.isfinite(mu_hat):
                fit = mu_hat * u + (1.0 - mu_hat) * v
                worst["semi_c_reducible"] = max(
                    worst["semi_c_reducible"], float(np.max(np.abs(t - fit))))
                sc_mus.append(mu_hat)

        # S3-like: S = Sc^v / ((n-1)(n-2)) (hbar ^ hbar)
        if n >= 4:
            wedge = (np.einsum("xz,yw->xyzw", hbar, hbar)
                     - np.einsum("xw,yz->xyzw", hbar, hbar))
            form = cd.sc_v / ((n - 1.0) * (n - 2.0)) * wedge
            worst["s3_like"] = max(worst["s3_like"],
                                   float(np.max(np.abs(cd.s4 - form))))

        # P2-like: P(X,Y,Z,W) = phi(Z) T(X,Y,W) - phi(W) T(X,Y,Z)
        if n >= 3 and float(np.max(np.abs(t))) > tol:
            basis = np.stack([
                np.einsum("z,xyw->xyzw", np.eye(n)[l], t)
                - np.einsum("w,xyz->xyzw", np.eye(n)[l], t)
                for l in range(n)])
            gram = np.einsum("aijkl,bijkl->ab", basis, basis)
            rhs = np.einsum("aijkl,ijkl->a", basis, cd.p4)
            phi_hat, *_ = np.linalg.lstsq(gram, rhs, rcond=None)
            fit = np.einsum("a,aijkl->ijkl", phi_hat, basis)
            worst["p2_like"] = max(worst["p2_like"],
                                   float(np.max(np.abs(cd.p4 - fit))))
            phis.append(phi_hat)

        # P-reducible: Phat(X,Y,Z) = sym over the three slots of
        # delta(X) hbar(Y,Z), with delta = (nabla_{B eta} C) / (n+1)
        if n >= 3:
            hc = h_nabla_c_form(fr)
            delta_form = (hc @ p.y) / (n + 1.0)
            form = (np.einsum("x,yz->xyz", delta_form, hbar)
                    + np.einsum("y,xz->xyz", delta_form, hbar)
                    + np.einsum("z,xy->xyz", delta_form, hbar))
            worst["p_reducible"] = max(worst["p_reducible"],
                                       float(np.max(np.abs(phat_low - form))))

        # h-isotropic: R(X,Y)Z = k0 ( g(X,Z) Y - g(Y,Z) X )
        if n >= 3:
            g = fr.g0
            pattern = (np.einsum("xz,yw->xyzw", g, g)
                       - np.einsum("yz,xw->xyzw", g, g))
            den = float(np.sum(pattern * pattern))
            k0 = float(np.sum(cd.r4 * pattern) / den)
            k0s.append(k0)
            worst["h_isotropic"] = max(worst["h_isotropic"],
                                       float(np.max(np.abs(cd.r4 - k0 * pattern))))

    def direct(name, defining_norm):
        res = worst[name]
        return PredicateResult(name, res, tol,
                               "pass" if res < tol else "fail",
                               trivial=defining_norm < tol)

    rep.predicates["riemannian"] = direct("riemannian", norms["T"])
    rep.predicates["berwald"] = direct("berwald", norms["hT"])
    rep.predicates["landsberg"] = direct("landsberg", norms["Phat"])

    def form_fit(name, defining_norm, gate_ok=True, gate_note="", fitted=None):
        if not gate_ok:
            return PredicateResult(name, 0.0, tol, "not-applicable", note=gate_note)
        if defining_norm < tol:
            return PredicateResult(name, 0.0, tol, "vacuous", trivial=True,
                                   note="defining tensor vanishes on the corpus")
        res = worst[name]
        return PredicateResult(name, res, tol,
                               "pass" if res < tol else "fail",
                               fitted=fitted or {})

    rep.predicates["c2_like"] = form_fit(
        "c2_like", norms["T"], gate_ok=norms["C2"] > tol,
        gate_note="contracted-torsion square below tolerance")
    rep.predicates["c_reducible"] = form_fit(
        "c_reducible", norms["T"], gate_ok=n >= 3, gate_note="requires n >= 3",
        fitted={"max_abs_c": float(np.max(np.abs(c)))})
    rep.predicates["semi_c_reducible"] = form_fit(
        "semi_c_reducible", norms["T"],
        gate_ok=(n >= 3 and norms["C2"] > tol),
        gate_note="requires n >= 3 and nonzero contracted-torsion square",
        fitted=({"mu": float(np.mean(sc_mus)), "tau": float(1 - np.mean(sc_mus))}
                if sc_mus else {}))
    rep.predicates["s3_like"] = form_fit(
        "s3_like", norms["S"], gate_ok=n >= 4, gate_note="requires n >= 4")
    if n >= 3 and norms["T"] <= tol:
        # the P2 form collapses to P = 0 when the Cartan tensor vanishes
        verdict = "vacuous" if norms["P"] < tol else "fail"
        rep.predicates["p2_like"] = PredicateResult(
            "p2_like", norms["P"], tol, verdict, trivial=norms["P"] < tol,
            note="Cartan tensor vanishes; form degenerates")
    else:
        phi_spread = (float(np.max(np.std(np.array(phis), axis=0)))
                      if len(phis) > 1 else 0.0)
        rep.predicates["p2_like"] = form_fit(
            "p2_like", max(norms["P"], norms["T"]), gate_ok=n >= 3,
            gate_note="requires n >= 3",
            fitted={"phi_spread_over_corpus": phi_spread,
                    "_phi_per_point": [list(map(float, ph)) for ph in phis]})
    rep.predicates["p_reducible"] = form_fit(
        "p_reducible", norms["Phat"], gate_ok=n >= 3, gate_note="requires n >= 3")

    if n < 3:
        rep.predicates["h_isotropic"] = PredicateResult(
            "h_isotropic", 0.0, tol, "not-applicable", note="requires n >= 3")
    elif norms["R"] < tol:
        rep.predicates["h_isotropic"] = PredicateResult(
            "h_isotropic", worst["h_isotropic"], tol, "pass", trivial=True,
            fitted={"k0": 0.0})
    else:
        res = worst["h_isotropic"]
        rep.predicates["h_isotropic"] = PredicateResult(
            "h_isotropic", res, tol, "pass" if res < tol else "fail",
            fitted={"k0": float(np.mean(k0s)),
                    "k0_spread": float(np.std(k0s))})
    return rep


def quasi_c_reducible_residual(m: MetricModel, corpus, a_field,
                               policy: TolerancePolicy = None):
    """Defect of T = sym{ A (x) C } for a user-supplied symmetric 2-form A
    with A(., eta) = 0.  Supported only in this synthetic direction; fitting
    an arbitrary A to the cyclic form is rank deficient.
    """
    policy = policy or TolerancePolicy()
    tol = policy.threshold(1.0)
    worst, tnorm = 0.0, 0.0
    for p in corpus:
        fr = frame(m, p)
        a = np.asarray(a_field.values(m, p), dtype=float)
        if np.max(np.abs(a - a.T)) > tol:
            raise FinslerError("quasi-C form requires a symmetric 2-tensor")
        if np.max(np.abs(a @ p.y)) > policy.threshold(float(np.max(np.abs(a)))):
            raise FinslerError("quasi-C form requires A(., eta) = 0")
        form = (np.einsum("xy,z->xyz", a, fr.c0)
                + np.einsum("yz,x->xyz", a, fr.c0)
                + np.einsum("zx,y->xyz", a, fr.c0))
        worst = max(worst, float(np.max(np.abs(fr.t0 - form))))
        tnorm = max(tnorm, float(np.max(np.abs(fr.t0))))
    if tnorm < tol:
        return PredicateResult("quasi_c_reducible", 0.0, tol, "vacuous",
                               trivial=True)
    return PredicateResult("quasi_c_reducible", worst, tol,
                           "pass" if worst < tol else "fail")


# ---------------------------------------------------------------------------
# recurrence fitting
# ---------------------------------------------------------------------------

@dataclass
class RecurrenceResult:
    kind: str
    direction: str
    residual: float
    tolerance: float
    verdict: str            # pass | fail | vacuous
    trivial: bool
    lam: list = field(default_factory=list)   # fitted recurrence form per point
    note: str = ""

    @property
    def holds(self) -> bool:
        return self.verdict in ("pass", "vacuous")

    def lam_max(self) -> float:
        return max((float(np.max(np.abs(l))) for l in self.lam), default=0.0)

    def to_dict(self) -> dict:
        return {"residual": self.residual, "tolerance": self.tolerance,
                "verdict": self.verdict, "trivial": self.trivial,
                "lambda_max": self.lam_max(), "note": self.note}


def _recurrence_arrays(m, p, kind, direction):
    fr = frame(m, p)
    if kind == "T":
        tensor = fr.t0
        deriv = h_nabla_t_low(fr) if direction == "h" else v_nabla_t_low(fr)
    else:
        cd = curvatures(m, p)
        tensor = {"S": cd.s4, "P": cd.p4, "R": cd.r4}[kind]
        deriv = cov_derivative_curvature(m, p, kind, direction)
    return tensor, deriv


def fit_recurrence(m: MetricModel, corpus, kind: str, direction: str,
                   policy: TolerancePolicy = None) -> RecurrenceResult:
    """Least-squares recurrence form: cov-deriv(tensor) = lambda (x) tensor.

    kind in {T, S, P, R}; direction 'h' or 'v'.  A corpus-wide zero tensor
    yields the verdict 'vacuous' (trivially recurrent).
    """
    if kind not in RECURRENCE_KINDS:
        raise ValueError(f"kind must be one of {RECURRENCE_KINDS}")
    policy = policy or TolerancePolicy()
    tol = policy.threshold(1.0)
    worst = 0.0
    tensor_norm = 0.0
    lams = []
    for p in corpus:
        tensor, deriv = _recurrence_arrays(m, p, kind, direction)
        tnorm = float(np.max(np.abs(tensor)))
        tensor_norm = max(tensor_norm, tnorm)
        den = float(np.sum(tensor * tensor))
        if den < tol**2:
            lams.append(np.zeros(m.n))
            continue
        axes = tuple(range(tensor.ndim))
        lam = np.tensordot(tensor, deriv, axes=(axes, axes)) / den
        fit = tensor[..., None] * lam
        worst = max(worst, float(np.max(np.abs(deriv - fit))))
        lams.append(lam)
    # derivative layer for S/P/R is finite-difference based; widen the gate
    gate = tol if kind == "T" else tol * 50.0
    if tensor_norm < tol:
        return RecurrenceResult(kind, direction, 0.0, gate, "vacuous", True,
                                lams, note="trivially recurrent (zero tensor)")
    verdict = "pass" if worst < gate else "fail"
    return RecurrenceResult(kind, direction, worst, gate, verdict, False, lams)


# ---------------------------------------------------------------------------
# theorem harness
# ---------------------------------------------------------------------------

@dataclass
class Instance:
    name: str
    metric: str
    candidate: str
    status: str                 # satisfied | vacuous | violated | not_applicable
    non_vacuous: bool = False
    hypotheses: dict = field(default_factory=dict)
    conclusion: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"name": self.name, "metric": self.metric,
                "candidate": self.candidate, "status": self.status,
                "non_vacuous": self.non_vacuous,
                "hypotheses": self.hypotheses, "conclusion": self.conclusion,
                "details": self.details}


@dataclass
class HarnessReport:
    instances: list = field(default_factory=list)

    def summary(self) -> dict:
        out = {"satisfied": 0, "satisfied_non_vacuous": 0, "vacuous": 0,
               "violated": 0, "not_applicable": 0}
        for inst in self.instances:
            out[inst.status if inst.status != "satisfied" else "satisfied"] += 1
            if inst.status == "satisfied" and inst.non_vacuous:
                out["satisfied_non_vacuous"] += 1
        return out

    @property
    def violated(self) -> list:
        return [i for i in self.instances if i.status == "violated"]


def _hyp_entry(pred, factor=_HYPOTHESIS_FACTOR):
    return {"verdict": pred.verdict, "residual": pred.residual,
            "holds": pred.holds_at(factor) or pred.verdict == "vacuous",
            "trivial": pred.trivial}


def _mk_instance(name, metric, candidate, hyp_preds, provisos, concl_pass,
                 concl_residual, details=None):
    """Assemble one implication instance.

    hyp_preds: list of (label, PredicateResult-like with holds_at/trivial).
    provisos: list of (label, bool) non-degeneracy requirements; a failed
    proviso makes the instance vacuous, never violated.
    """
    hyps = {}
    all_hold = True
    any_trivial = False
    for label, pred in hyp_preds:
        entry = _hyp_entry(pred)
        hyps[label] = entry
        all_hold = all_hold and entry["holds"]
        any_trivial = any_trivial or entry["trivial"] or pred.verdict == "vacuous"
    for label, ok in provisos:
        hyps[label] = {"verdict": "pass" if ok else "fail", "holds": bool(ok),
                       "trivial": False, "residual": 0.0}
        if not ok:
            all_hold = False
    conclusion = {"pass": bool(concl_pass), "residual": float(concl_residual)}
    if not all_hold:
        status = "vacuous"
    elif concl_pass:
        status = "satisfied"
    else:
        status = "violated"
    return Instance(name, metric, candidate, status,
                    non_vacuous=(status == "satisfied" and not any_trivial),
                    hypotheses=hyps, conclusion=conclusion,
                    details=details or {})


class _BoolPred:
    """Adapter: a plain boolean as an implication hypothesis."""

    def __init__(self, ok, residual=0.0, trivial=False):
        self.verdict = "pass" if ok else "fail"
        self.residual = residual
        self.trivial = trivial

    def holds_at(self, factor):
        return self.verdict == "pass"


def _equivalence_instance(name, metric, candidate, guard_preds, sides, details=None):
    """All listed sides must share one truth value (given the guards)."""
    hyps = {}
    guards_ok = True
    for label, pred in guard_preds:
        entry = _hyp_entry(pred)
        hyps[label] = entry
        guards_ok = guards_ok and entry["holds"]
    truths = {label: bool(val) for label, val in sides}
    agree = len(set(truths.values())) <= 1
    if not guards_ok:
        status = "vacuous"
    elif agree:
        status = "satisfied"
    else:
        status = "violated"
    return Instance(name, metric, candidate, status,
                    non_vacuous=False,
                    hypotheses=hyps,
                    conclusion={"pass": agree, "residual": 0.0,
                                "sides": truths},
                    details=details or {})


def theorem_harness(entries, policy: TolerancePolicy = None) -> HarnessReport:
    """Instantiate every implication theorem over (metric, candidate, corpus)
    entries.  Each entry is a dict with keys 'metric', 'candidate', 'corpus'
    and optionally 'a_field' (for the quasi-reducibility implication) and a
    precomputed 'fit_report'.

    A violated instance signals an implementation bug, given that every
    implication holds mathematically; vacuous instances (failed hypotheses)
    are first-class outcomes.
    """
    policy = policy or TolerancePolicy()
    tol = policy.threshold(1.0)
    report = HarnessReport()

    for entry in entries:
        m: MetricModel = entry["metric"]
        cand: CandidateField = entry["candidate"]
        corpus = entry["corpus"]
        n = m.n
        conc: ConcircularReport = entry.get("fit_report") or fit_and_verify(
            m, cand, corpus, policy)
        cls = classify_special(m, corpus, policy)
        rec = {(k, d): fit_recurrence(m, corpus, k, d, policy)
               for k in RECURRENCE_KINDS for d in ("h", "v")}
        conc_pred = _BoolPred(conc.concircular, residual=conc.residual_h)
        concurrent_pred = _BoolPred(conc.concurrent, residual=conc.residual_h)
        mname, cname = m.name, cand.name

        norms = _corpus_norms(m, corpus)

        # Landsberg + concircular -> Riemannian
        report.instances.append(_mk_instance(
            "landsberg_concircular_riemannian", mname, cname,
            [("landsberg", cls["landsberg"]), ("concircular", conc_pred)], [],
            cls["riemannian"].holds, cls["riemannian"].residual))

        # quasi-C-reducible (with supplied A, A(zeta,zeta) != 0) -> Riemannian
        a_field = entry.get("a_field")
        if a_field is None or n < 3:
            report.instances.append(Instance(
                "quasi_c_reducible_riemannian", mname, cname, "not_applicable",
                details={"reason": "no symmetric form supplied" if n >= 3
                         else "requires n >= 3"}))
        else:
            qpred = quasi_c_reducible_residual(m, corpus, a_field, policy)
            azz_ok = _azz_ok(m, corpus, a_field, cand, tol)
            report.instances.append(_mk_instance(
                "quasi_c_reducible_riemannian", mname, cname,
                [("quasi_c_reducible", qpred), ("concircular", conc_pred)],
                [("a_zeta_zeta_nonzero", azz_ok)],
                cls["riemannian"].holds, cls["riemannian"].residual))

        # C-reducible + concircular -> Riemannian
        if n >= 3:
            report.instances.append(_mk_instance(
                "c_reducible_riemannian", mname, cname,
                [("c_reducible", cls["c_reducible"]), ("concircular", conc_pred)],
                [], cls["riemannian"].holds, cls["riemannian"].residual))

            # semi-C-reducible + concircular -> C2-like
            semi = cls["semi_c_reducible"]
            if semi.verdict == "not-applicable":
                report.instances.append(Instance(
                    "semi_c_reducible_c2_like", mname, cname, "not_applicable",
                    details={"reason": semi.note}))
            else:
                report.instances.append(_mk_instance(
                    "semi_c_reducible_c2_like", mname, cname,
                    [("semi_c_reducible", semi), ("concircular", conc_pred)],
                    [], cls["c2_like"].holds, cls["c2_like"].residual))

        # S3-like + concircular -> S = 0
        if n >= 4:
            report.instances.append(_mk_instance(
                "s3_like_v_curvature_vanishes", mname, cname,
                [("s3_like", cls["s3_like"]), ("concircular", conc_pred)],
                [], norms["S"] < tol, norms["S"]))

        if n >= 3:
            # P2-like + concircular (phi(zeta) != psi) -> Riemannian
            p2 = cls["p2_like"]
            report.instances.append(_mk_instance(
                "p2_like_riemannian", mname, cname,
                [("p2_like", p2), ("concircular", conc_pred)],
                [("phi_of_field_differs_from_psi",
                  _phi_proviso(p2, conc, tol))],
                cls["riemannian"].holds, cls["riemannian"].residual))

            # P-reducible + concircular -> Landsberg
            report.instances.append(_mk_instance(
                "p_reducible_landsberg", mname, cname,
                [("p_reducible", cls["p_reducible"]), ("concircular", conc_pred)],
                [], cls["landsberg"].holds, cls["landsberg"].residual))

            # h-isotropic + concircular -> closed form for the scalar
            hi = cls["h_isotropic"]
            ok, res, detail = _isotropy_scalar_check(m, conc, policy)
            report.instances.append(_mk_instance(
                "h_isotropic_scalar_formula", mname, cname,
                [("h_isotropic", hi), ("concircular", conc_pred)], [],
                ok, res, details=detail))

            # concurrent + h-isotropic -> R = 0
            report.instances.append(_mk_instance(
                "concurrent_h_isotropic_flat", mname, cname,
                [("concurrent", concurrent_pred), ("h_isotropic", hi)], [],
                norms["R"] < tol, norms["R"]))

        # torsion h-recurrent + concircular (lambda1(zeta) != 0) -> Riemannian
        th = rec[("T", "h")]
        lam_zeta_ok = _lam_on_field_nonzero(th, conc, tol)
        report.instances.append(_mk_instance(
            "torsion_h_recurrent_riemannian", mname, cname,
            [("torsion_h_recurrent", _rec_pred(th)), ("concircular", conc_pred)],
            [("lambda1_on_field_nonzero", lam_zeta_ok)],
            cls["riemannian"].holds, cls["riemannian"].residual))

        report.instances.append(_equivalence_instance(
            "torsion_recurrence_coincides", mname, cname,
            [("concircular", conc_pred),
             ("lambda1_on_field_nonzero", _BoolPred(lam_zeta_ok))],
            [("torsion_h_recurrent", th.holds),
             ("torsion_v_recurrent", rec[("T", "v")].holds),
             ("riemannian", cls["riemannian"].holds)]))

        # S-recurrence
        report.instances.append(_mk_instance(
            "s_h_recurrent_v_curvature_vanishes", mname, cname,
            [("s_h_recurrent", _rec_pred(rec[("S", "h")])),
             ("concircular", conc_pred)], [],
            norms["S"] < tol, norms["S"]))
        report.instances.append(_equivalence_instance(
            "s_recurrence_equivalences", mname, cname,
            [("concircular", conc_pred)],
            [("s_h_recurrent", rec[("S", "h")].holds),
             ("s_v_recurrent", rec[("S", "v")].holds),
             ("v_curvature_vanishes", norms["S"] < tol)]))

        # P-recurrence
        ph = rec[("P", "h")]
        dich_ok, dich_res, dich_detail = _p_dichotomy(m, conc, th_lam=ph,
                                                      cls=cls, tol=tol)
        report.instances.append(_mk_instance(
            "p_h_recurrent_dichotomy", mname, cname,
            [("p_h_recurrent", _rec_pred(ph)), ("concircular", conc_pred)], [],
            dich_ok, dich_res, details=dich_detail))
        report.instances.append(_mk_instance(
            "p_v_recurrent_hv_curvature_vanishes", mname, cname,
            [("p_v_recurrent", _rec_pred(rec[("P", "v")]))], [],
            norms["P"] < tol, norms["P"]))
        report.instances.append(_equivalence_instance(
            "p_recurrence_equivalences", mname, cname,
            [("concircular", conc_pred),
             ("dichotomy_scalar_nonzero",
              _BoolPred(not dich_detail.get("scalar_vanishes", False)))],
            [("p_h_recurrent", ph.holds),
             ("p_v_recurrent", rec[("P", "v")].holds),
             ("riemannian", cls["riemannian"].holds)]))

        # R-recurrence
        rh = rec[("R", "h")]
        if n >= 3:
            iso_ok, iso_res, iso_detail = _r_recurrent_isotropy(
                m, conc, rh, cls, policy)
            report.instances.append(_mk_instance(
                "r_h_recurrent_h_isotropic", mname, cname,
                [("r_h_recurrent", _rec_pred(rh)), ("concircular", conc_pred)],
                [], iso_ok, iso_res, details=iso_detail))
        rv = rec[("R", "v")]
        lam2_eta_ok = _lam_on_eta_nonzero(rv, conc, tol)
        report.instances.append(_mk_instance(
            "r_v_recurrent_h_curvature_vanishes", mname, cname,
            [("r_v_recurrent", _rec_pred(rv))],
            [("lambda2_on_eta_nonzero", lam2_eta_ok)],
            norms["R"] < tol, norms["R"]))

    return report


def _corpus_norms(m, corpus):
    out = {"S": 0.0, "P": 0.0, "R": 0.0}
    for p in corpus:
        cd = curvatures(m, p)
        out["S"] = max(out["S"], float(np.max(np.abs(cd.s4))))
        out["P"] = max(out["P"], float(np.max(np.abs(cd.p4))))
        out["R"] = max(out["R"], float(np.max(np.abs(cd.r4))))
    return out


def _rec_pred(recres: RecurrenceResult):
    pred = _BoolPred(recres.holds, residual=recres.residual,
                     trivial=recres.trivial)
    pred.verdict = recres.verdict if recres.verdict != "vacuous" else "vacuous"
    return pred


def _azz_ok(m, corpus, a_field, cand, tol):
    for p in corpus:
        a = np.asarray(a_field.values(m, p), dtype=float)
        z = cand.values(m, p)
        if abs(float(z @ a @ z)) <= tol:
            return False
    return True


def _phi_proviso(p2: PredicateResult, conc: ConcircularReport, tol):
    """phi(zeta) != psi at every point, from the fitted P2 form."""
    phis = p2.fitted.get("_phi_per_point")
    if p2.verdict != "pass" or p2.trivial or not phis or not conc.points:
        return False
    for phi, pf in zip(phis, conc.points):
        if abs(float(np.asarray(phi) @ pf.zeta) - pf.psi_hat) <= tol:
            return False
    return True


def _lam_on_field_nonzero(recres: RecurrenceResult, conc, tol):
    if recres.trivial or not conc.points:
        return False
    vals = [abs(float(np.asarray(lam) @ pf.zeta))
            for lam, pf in zip(recres.lam, conc.points)]
    return bool(vals and min(vals) > tol)


def _lam_on_eta_nonzero(recres: RecurrenceResult, conc, tol):
    if recres.trivial or not conc.points:
        return False
    vals = [abs(float(np.asarray(lam) @ pf.point.y))
            for lam, pf in zip(recres.lam, conc.points)]
    return bool(vals and min(vals) > tol)


def _isotropy_scalar_check(m, conc: ConcircularReport, policy):
    """Closed-form isotropy scalar  k0 = -A(m)/g(m, zeta)  against the fit."""
    tol_floor = policy.threshold(1.0)
    worst = 0.0
    k0_fit, k0_formula = [], []
    for pf in conc.points:
        p = pf.point
        fr = frame(m, p)
        cd = curvatures(m, p)
        g = fr.g0
        pattern = (np.einsum("xz,yw->xyzw", g, g)
                   - np.einsum("yz,xw->xyzw", g, g))
        k0 = float(np.sum(cd.r4 * pattern) / np.sum(pattern * pattern))
        mfield = pf.data.m_field
        gmz = float(mfield @ g @ pf.zeta)
        if abs(gmz) < tol_floor:
            continue
        k0f = -float(pf.data.a_form @ mfield) / gmz
        k0_fit.append(k0)
        k0_formula.append(k0f)
        worst = max(worst, abs(k0 - k0f) / max(1.0, abs(k0f)))
    ok = worst < policy.threshold(1.0)
    return ok, worst, {"k0_fitted": k0_fit[:3], "k0_formula": k0_formula[:3]}


def _p_dichotomy(m, conc: ConcircularReport, th_lam: RecurrenceResult, cls,
                 tol):
    """Either Riemannian or (mu - psi alpha - psi lambda1)(eta) = 0."""
    if cls["riemannian"].holds:
        return True, cls["riemannian"].residual, {"branch": "riemannian"}
    worst = 0.0
    for lam, pf in zip(th_lam.lam, conc.points):
        scalar = float((pf.data.a_form - pf.psi_hat * np.asarray(lam))
                       @ pf.point.y)
        worst = max(worst, abs(scalar))
    ok = worst < tol
    return ok, worst, {"branch": "scalar_identity",
                       "scalar_vanishes": bool(ok)}


def _r_recurrent_isotropy(m, conc: ConcircularReport, rh: RecurrenceResult,
                          cls, policy):
    """h-isotropy with scalar phi0 / n from the recurrence data."""
    tol = policy.threshold(1.0)
    hi = cls["h_isotropic"]
    if hi.verdict not in ("pass",):
        return False, hi.residual, {"reason": "isotropy fit failed"}
    worst = 0.0
    pairs = []
    for lam, pf in zip(rh.lam, conc.points):
        if pf.data.mu_method != "exact" or pf.data.hmu is None \
                or not np.all(np.isfinite(pf.data.hmu)):
            return True, 0.0, {"reason": "no exact scaling-form derivatives",
                               "checked": False}
        p = pf.point
        fr = frame(m, p)
        cd = curvatures(m, p)
        g = fr.g0
        pattern = (np.einsum("xz,yw->xyzw", g, g)
                   - np.einsum("yz,xw->xyzw", g, g))
        k0 = float(np.sum(cd.r4 * pattern) / np.sum(pattern * pattern))
        psi = pf.psi_hat
        alpha = pf.data.alpha_form
        mu = pf.data.mu_form
        a_form = pf.data.a_form
        # (nabla_{B e_y} A)(e_x) = hmu[x,y] - mu_y alpha_x - psi halpha[x,y]
        h_a = pf.data.hmu - np.outer(alpha, mu) - psi * pf.data.halpha
        lam = np.asarray(lam)
        # psi phi(X, Y) = alpha(Y) A(X) + lambda1(Y) A(X) - (nabla_{B Y} A)(X)
        phi = (np.einsum("y,x->xy", alpha, a_form)
               + np.einsum("y,x->xy", lam, a_form) - h_a) / psi
        phi0 = float(np.einsum("xy,xy->", fr.ginv0, phi))
        k0f = phi0 / m.n
        pairs.append((k0, k0f))
        worst = max(worst, abs(k0 - k0f) / max(1.0, abs(k0f)))
    ok = worst < tol
    return ok, worst, {"k0_pairs": pairs[:3], "checked": True}
