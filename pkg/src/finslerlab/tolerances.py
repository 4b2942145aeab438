"""Uniform residual semantics for tensor equalities and verdicts."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

DEFAULT_TOL_ABS = 1e-8
DEFAULT_TOL_REL = 1e-7
DEFAULT_PSI_MIN = 1e-6


@dataclass(frozen=True)
class TolerancePolicy:
    """A tensor equality A = B holds when

        max|A - B| < tol_abs + tol_rel * max(1, ||A||, ||B||)

    with the infinity norm.  ``psi_min`` is the floor below which a fitted
    scaling function counts as zero.
    """

    tol_abs: float = DEFAULT_TOL_ABS
    tol_rel: float = DEFAULT_TOL_REL
    psi_min: float = DEFAULT_PSI_MIN

    def threshold(self, *scales: float) -> float:
        biggest = max((1.0, *map(abs, scales)))
        return self.tol_abs + self.tol_rel * biggest

    def residual(self, a, b=None):
        """Max-abs residual of A - B together with the applicable threshold."""
        a = np.asarray(a, dtype=float)
        if b is None:
            diff = a
            scale = float(np.max(np.abs(a))) if a.size else 0.0
            return (scale, self.threshold(1.0))
        b = np.asarray(b, dtype=float)
        diff = a - b
        res = float(np.max(np.abs(diff))) if diff.size else 0.0
        na = float(np.max(np.abs(a))) if a.size else 0.0
        nb = float(np.max(np.abs(b))) if b.size else 0.0
        return (res, self.threshold(na, nb))

    def holds(self, a, b=None) -> bool:
        res, thr = self.residual(a, b)
        return res < thr

    def scaled(self, factor: float) -> "TolerancePolicy":
        return replace(self, tol_abs=self.tol_abs * factor, tol_rel=self.tol_rel * factor)

    def as_dict(self) -> dict:
        return {"tol_abs": self.tol_abs, "tol_rel": self.tol_rel, "psi_min": self.psi_min}
