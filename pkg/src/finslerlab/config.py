"""Run configuration: a single YAML document driving the batch front door."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .concircular import CandidateField
from .errors import ConfigError, ExpressionError, FinslerError
from .metric import MetricModel
from .tolerances import TolerancePolicy

TASKS = ("tensors", "identity-battery", "classify", "concircular",
         "verify-theorems")

_DEF_POINTS = 50
_DEF_SEED = 2026


@dataclass
class RunConfig:
    seed: int
    points: int
    tolerances: TolerancePolicy
    tasks: list
    metrics: list                  # MetricModel, in declaration order
    candidates: list               # CandidateField
    pairs: list                    # (MetricModel, CandidateField)
    canonical: dict = field(default_factory=dict)

    def metric(self, name: str) -> MetricModel:
        for m in self.metrics:
            if m.name == name:
                return m
        raise ConfigError(f"unknown metric '{name}'")

    def candidate(self, name: str) -> CandidateField:
        for c in self.candidates:
            if c.name == name:
                return c
        raise ConfigError(f"unknown candidate '{name}'")


def _require(mapping, key, loc, types=None, default=None, required=False):
    if key not in mapping:
        if required:
            raise ConfigError(f"missing required key '{key}'", loc)
        return default
    val = mapping[key]
    if types is not None and not isinstance(val, types):
        raise ConfigError(
            f"key '{key}' has type {type(val).__name__}, expected "
            f"{'/'.join(t.__name__ for t in types)}", loc)
    return val


def parse_config(doc, source="config") -> RunConfig:
    """Validate a parsed YAML document and resolve all declarations."""
    if not isinstance(doc, dict):
        raise ConfigError("top level must be a mapping", source)

    seed = _require(doc, "seed", source, (int,), default=_DEF_SEED)
    points = _require(doc, "points", source, (int,), default=_DEF_POINTS)
    if points < 1:
        raise ConfigError("points must be positive", f"{source}.points")

    tol_doc = _require(doc, "tolerances", source, (dict,), default={})
    try:
        policy = TolerancePolicy(
            tol_abs=float(tol_doc.get("tol_abs", TolerancePolicy.tol_abs)),
            tol_rel=float(tol_doc.get("tol_rel", TolerancePolicy.tol_rel)),
            psi_min=float(tol_doc.get("psi_min", TolerancePolicy.psi_min)))
    except (TypeError, ValueError) as err:
        raise ConfigError(str(err), f"{source}.tolerances") from None

    tasks = _require(doc, "tasks", source, (list,), default=list(TASKS))
    for t in tasks:
        if t not in TASKS:
            raise ConfigError(f"unknown task '{t}' (choose from {TASKS})",
                              f"{source}.tasks")

    global_box = doc.get("x_box")

    metrics = []
    decls = _require(doc, "metrics", source, (list,), required=True)
    seen = set()
    for i, md in enumerate(decls):
        loc = f"{source}.metrics[{i}]"
        if not isinstance(md, dict):
            raise ConfigError("metric declaration must be a mapping", loc)
        name = _require(md, "name", loc, (str,), required=True)
        if name in seen:
            raise ConfigError(f"duplicate metric name '{name}'", loc)
        seen.add(name)
        family = _require(md, "family", loc, (str,), required=True)
        n = _require(md, "n", loc, (int,), required=True)
        box = md.get("x_box", global_box)
        try:
            if family == "euclidean":
                metrics.append(MetricModel.euclidean(n, name=name, x_box=box))
            elif family == "riemannian":
                a = _require(md, "a", loc, (str, list, dict), required=True)
                metrics.append(MetricModel.riemannian(n, a, name=name, x_box=box))
            elif family == "randers":
                a = _require(md, "a", loc, (str, list, dict), required=True)
                b = _require(md, "b", loc, (list,), required=True)
                metrics.append(
                    MetricModel.randers(n, a, b, name=name, x_box=box))
            elif family == "expression":
                l_text = _require(md, "L", loc, (str,), required=True)
                metrics.append(
                    MetricModel.from_expression(n, l_text, name=name, x_box=box))
            else:
                raise ConfigError(f"unknown family '{family}'", loc)
        except (ExpressionError, FinslerError) as err:
            raise ConfigError(str(err), loc) from None

    candidates = []
    seen = set()
    for i, cd in enumerate(doc.get("candidates") or []):
        loc = f"{source}.candidates[{i}]"
        if not isinstance(cd, dict):
            raise ConfigError("candidate declaration must be a mapping", loc)
        name = _require(cd, "name", loc, (str,), required=True)
        if name in seen:
            raise ConfigError(f"duplicate candidate name '{name}'", loc)
        seen.add(name)
        comps = _require(cd, "components", loc, (list,), required=True)
        n_cand = _require(cd, "n", loc, (int,), default=len(comps))
        try:
            candidates.append(CandidateField(
                name, comps, n_cand,
                y_independent=bool(cd.get("y_independent", False)),
                psi=cd.get("psi"), alpha=cd.get("alpha")))
        except (ExpressionError, FinslerError) as err:
            raise ConfigError(str(err), loc) from None

    pairs = []
    if doc.get("pairs") is not None:
        for i, pd in enumerate(doc["pairs"]):
            loc = f"{source}.pairs[{i}]"
            if not isinstance(pd, dict) or "metric" not in pd or "candidate" not in pd:
                raise ConfigError(
                    "pair must be a mapping with 'metric' and 'candidate'", loc)
            mname, cname = pd["metric"], pd["candidate"]
            try:
                m = next(m for m in metrics if m.name == mname)
            except StopIteration:
                raise ConfigError(f"pair references unknown metric '{mname}'",
                                  loc) from None
            try:
                c = next(c for c in candidates if c.name == cname)
            except StopIteration:
                raise ConfigError(
                    f"pair references unknown candidate '{cname}'", loc) from None
            if c.n != m.n:
                raise ConfigError(
                    f"candidate '{cname}' has dimension {c.n}, metric "
                    f"'{mname}' has {m.n}", loc)
            pairs.append((m, c))
    else:
        pairs = [(m, c) for m in metrics for c in candidates if c.n == m.n]

    needs_pairs = {"concircular", "verify-theorems"} & set(tasks)
    if needs_pairs and not pairs:
        raise ConfigError(
            f"tasks {sorted(needs_pairs)} need at least one (metric, candidate) "
            "pair", source)

    return RunConfig(seed=seed, points=points, tolerances=policy,
                     tasks=list(tasks), metrics=metrics, candidates=candidates,
                     pairs=pairs, canonical=_canonical(doc))


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}") from None
    except yaml.YAMLError as err:
        raise ConfigError(f"YAML parse error: {err}", str(path)) from None
    return parse_config(doc, source=str(path))


def _canonical(doc):
    """A plain, order-stable copy of the configuration for hashing."""
    if isinstance(doc, dict):
        return {str(k): _canonical(doc[k]) for k in sorted(doc, key=str)}
    if isinstance(doc, (list, tuple)):
        return [_canonical(v) for v in doc]
    if isinstance(doc, (np.floating, float)):
        return float(doc)
    if isinstance(doc, (np.integer, int)) and not isinstance(doc, bool):
        return int(doc)
    return doc
