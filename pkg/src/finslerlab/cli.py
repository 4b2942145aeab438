"""Batch front door: run configured checks and emit a structured report.

    finsler-lab run <config.yaml> [--tol-abs F] [--tol-rel F] [--seed N]
                                  [--points N] [--out PATH]
    finsler-lab families

Exit codes: 0 every requested check passed (or was vacuous), 1 at least one
check failed, 2 configuration or admissibility error.  Classification
verdicts and concircularity verdicts are observations, not checks: a Randers
metric failing the "riemannian" predicate is a correct result, so it never
affects the exit code.  What must hold are the structural identities, the
consequence battery on verified candidates, and the absence of violated
implication instances.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

import numpy as np

from . import __version__
from .classify import (RECURRENCE_KINDS, classify_special, fit_recurrence,
                       theorem_harness)
from .concircular import consequence_battery, fit_and_verify
from .config import RunConfig, load_config
from .connection import (MetricTensorField, berwald_bridge_check,
                         cartan_axiom_residuals, frame, h_cov_derive,
                         v_cov_derive)
from .curvature import identity_battery
from .errors import AdmissibilityError, ConfigError, FinslerError
from .fields import PolynomialField
from .metric import sample_points, validate_model
from .report import config_hash, render, stable_stream_key

_FAMILIES_HELP = [
    ("euclidean", "flat norm |y|; no parameters"),
    ("riemannian", "L^2 = a_ij(x) y^i y^j; 'a' is an n x n expression matrix "
                   "(shorthands: 'identity', {conformal: expr}, {diag: [...]})"),
    ("randers", "L = sqrt(a_ij y^i y^j) + b_i(x) y^i; needs 'a' and 'b' with "
                "||b||_a < 1 on the sampling box"),
    ("expression", "L given directly as an expression in x1..xn, y1..yn"),
]


def _rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng([seed, stable_stream_key(label)])


def _check(residual: float, tolerance: float) -> dict:
    return {"residual": float(residual), "tolerance": float(tolerance),
            "pass": bool(residual < tolerance)}


def _tensors_task(cfg: RunConfig, corpora) -> dict:
    out = {}
    policy = cfg.tolerances
    tol = policy.threshold(1.0)
    for m in cfg.metrics:
        corpus = corpora[m.name]
        worst = {}

        def bump(name, value):
            worst[name] = max(worst.get(name, 0.0), float(value))

        probe = PolynomialField.random(m.n, _rng(cfg.seed, f"probe:{m.name}"),
                                       scale=0.5)
        for p in corpus:
            fr = frame(m, p)
            l_val = fr.lval
            scaled = float(np.sqrt(m.lagrangian_sq(p.x, 2.0 * p.y)))
            bump("l_homogeneity", abs(scaled - 2.0 * l_val) / (2.0 * l_val))
            bump("metric_on_eta", abs(float(p.y @ fr.g0 @ p.y) - fr.l2) / fr.l2)
            dyg = fr.partials("g")[..., m.n:]
            bump("fiber_derivative_of_metric_vs_torsion",
                 np.max(np.abs(dyg - 2.0 * fr.t0)))
            bump("angular_metric_eta_kernel", np.max(np.abs(fr.hbar0 @ p.y)))
            bump("normalized_form_on_eta", abs(float(fr.ell0 @ p.y) - l_val))
            bump("torsion_eta_contraction",
                 np.max(np.abs(np.einsum("ijk,k->ij", fr.t0, p.y))))
            bump("contracted_torsion_on_eta", abs(float(fr.c0 @ p.y)))
            for name, res in cartan_axiom_residuals(m, p).items():
                bump(name, res)
            hg = h_cov_derive(m, p, MetricTensorField("g")).components
            bump("h_nabla_metric", np.max(np.abs(hg)))
            vg = v_cov_derive(m, p, MetricTensorField("g")).components
            bump("v_nabla_metric_cartan", np.max(np.abs(vg)))
            veta = v_cov_derive(m, p, MetricTensorField("eta")).components
            bump("v_nabla_eta_vs_identity", np.max(np.abs(veta - np.eye(m.n))))
            hl = h_cov_derive(m, p, MetricTensorField("L")).components
            bump("h_nabla_l", np.max(np.abs(hl)))
            br = berwald_bridge_check(m, p, probe)
            bump("bridge_vertical", br["vertical"])
            bump("bridge_horizontal", br["horizontal"])
        for p in corpus[:5]:
            fr = frame(m, p)
            from .metric import JetPoint
            fr2 = frame(m, JetPoint(p.x, 2.0 * p.y))
            scale = max(1.0, float(np.max(np.abs(fr.spray0))))
            bump("spray_degree_two",
                 np.max(np.abs(fr2.spray0 - 4.0 * fr.spray0)) / scale)
            bump("nonlinear_connection_degree_one",
                 np.max(np.abs(fr2.n0 - 2.0 * fr.n0)) / scale)
        out[m.name] = {"samples": len(corpus),
                       "checks": {k: _check(v, tol) for k, v in sorted(worst.items())}}
    return out


def _battery_task(cfg: RunConfig, corpora) -> dict:
    out = {}
    for m in cfg.metrics:
        rep = identity_battery(m, corpora[m.name], cfg.tolerances)
        out[m.name] = {"identities": rep.items, "pass": rep.passed}
    return out


def _classify_task(cfg: RunConfig, corpora) -> dict:
    out = {}
    for m in cfg.metrics:
        corpus = corpora[m.name]
        cls = classify_special(m, corpus, cfg.tolerances)
        rec = {}
        for kind in RECURRENCE_KINDS:
            for direction in ("h", "v"):
                rr = fit_recurrence(m, corpus, kind, direction, cfg.tolerances)
                rec[f"{kind}.{direction}"] = rr.to_dict()
        out[m.name] = {"n_points": cls.n_points,
                       "predicates": cls.to_dict(),
                       "recurrence": rec}
    return out


def _concircular_task(cfg: RunConfig, corpora) -> dict:
    out = {}
    failures = []
    for m, cand in cfg.pairs:
        corpus = corpora[m.name]
        rep = fit_and_verify(m, cand, corpus, cfg.tolerances)
        psis = rep.psi_values()
        entry = {
            "metric": m.name,
            "candidate": cand.name,
            "residual_h": rep.residual_h,
            "residual_v": rep.residual_v,
            "concircular": rep.concircular,
            "concurrent": rep.concurrent,
            "indeterminate": rep.indeterminate,
            "psi_range": [float(psis.min()), float(psis.max())],
            "max_abs_alpha": float(max(np.max(np.abs(pf.alpha_hat))
                                       for pf in rep.points)),
            "min_abs_b": float(min(abs(pf.data.b_scalar) for pf in rep.points)),
            "min_abs_angular_on_field": float(
                min(abs(pf.data.hbar_zz) for pf in rep.points)),
            "berwald": rep.berwald,
        }
        if rep.notes:
            entry["notes"] = rep.notes
        if rep.concircular:
            bat = consequence_battery(m, cand, corpus, cfg.tolerances,
                                      fit_report=rep)
            entry["battery"] = bat.items
            entry["battery_pass"] = bat.passed
            if not bat.passed:
                failures.append(f"{m.name}/{cand.name}")
        out[f"{m.name}/{cand.name}"] = entry
    return {"pairs": out, "failed_batteries": failures}


def _theorems_task(cfg: RunConfig, corpora) -> dict:
    entries = [{"metric": m, "candidate": c, "corpus": corpora[m.name]}
               for m, c in cfg.pairs]
    rep = theorem_harness(entries, cfg.tolerances)
    return {"summary": rep.summary(),
            "instances": [inst.to_dict() for inst in rep.instances]}


def run(cfg: RunConfig) -> tuple[dict, int]:
    """Execute the configured tasks; returns (report, exit_code)."""
    report = {
        "provenance": {
            "tool": "finsler-lab",
            "version": __version__,
            "config_hash": config_hash(cfg.canonical),
            "seed": cfg.seed,
            "points": cfg.points,
            "tolerances": cfg.tolerances.as_dict(),
        },
        "metrics": {m.name: {"family": m.family, "n": m.n,
                             "x_box": m.x_box.tolist()}
                    for m in cfg.metrics},
        "tasks": {},
    }
    for m in cfg.metrics:
        validate_model(m, _rng(cfg.seed, f"validate:{m.name}"), samples=8)
    corpora = {m.name: sample_points(m, cfg.points,
                                     _rng(cfg.seed, f"corpus:{m.name}"))
               for m in cfg.metrics}

    ok = True
    if "tensors" in cfg.tasks:
        section = _tensors_task(cfg, corpora)
        report["tasks"]["tensors"] = section
        ok &= all(c["pass"] for mm in section.values()
                  for c in mm["checks"].values())
    if "identity-battery" in cfg.tasks:
        section = _battery_task(cfg, corpora)
        report["tasks"]["identity-battery"] = section
        ok &= all(mm["pass"] for mm in section.values())
    if "classify" in cfg.tasks:
        report["tasks"]["classify"] = _classify_task(cfg, corpora)
    if "concircular" in cfg.tasks:
        section = _concircular_task(cfg, corpora)
        report["tasks"]["concircular"] = section
        ok &= not section["failed_batteries"]
    if "verify-theorems" in cfg.tasks:
        section = _theorems_task(cfg, corpora)
        report["tasks"]["verify-theorems"] = section
        ok &= section["summary"]["violated"] == 0

    report["overall"] = {"pass": bool(ok), "exit_code": 0 if ok else 1}
    return report, 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="finsler-lab",
        description="Residual-based checks for Finsler metrics: connections, "
                    "curvature identities, special-space classification and "
                    "concircular field verification.")
    sub = parser.add_subparsers(dest="command", required=True)

    runp = sub.add_parser("run", help="execute a configured batch run")
    runp.add_argument("config", help="path to the YAML run configuration")
    runp.add_argument("--tol-abs", type=float, default=None)
    runp.add_argument("--tol-rel", type=float, default=None)
    runp.add_argument("--seed", type=int, default=None)
    runp.add_argument("--points", type=int, default=None)
    runp.add_argument("--out", default=None,
                      help="write the report here instead of stdout")

    sub.add_parser("families", help="list the shipped metric families")

    args = parser.parse_args(argv)

    if args.command == "families":
        for name, desc in _FAMILIES_HELP:
            print(f"{name:12s} {desc}")
        return 0

    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.points is not None:
            overrides["points"] = args.points
        if overrides or args.tol_abs is not None or args.tol_rel is not None:
            tol = cfg.tolerances
            if args.tol_abs is not None:
                tol = dataclasses.replace(tol, tol_abs=args.tol_abs)
            if args.tol_rel is not None:
                tol = dataclasses.replace(tol, tol_rel=args.tol_rel)
            cfg = dataclasses.replace(cfg, tolerances=tol, **overrides)
            cfg.canonical["cli_overrides"] = {
                "seed": args.seed, "points": args.points,
                "tol_abs": args.tol_abs, "tol_rel": args.tol_rel}
        report, code = run(cfg)
    except (ConfigError, AdmissibilityError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except FinslerError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1

    text = render(report)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"report written to {args.out}")
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
