"""Log-log scaling fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ScalingFit", "fit_scaling"]


@dataclass
class ScalingFit:
    """Least-squares line through ``(log x, log y)``."""

    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    residual: float

    def in_band(self, lo: float = -np.inf, hi: float = np.inf) -> bool:
        return bool(lo <= self.slope <= hi)

    def as_dict(self) -> dict:
        return {"x": [float(v) for v in self.x], "y": [float(v) for v in self.y], "slope": self.slope,
                "intercept": self.intercept, "residual": self.residual}


def fit_scaling(x, y) -> ScalingFit:
    x = np.asarray(x, dtype=float)
    y = np.abs(np.asarray(y, dtype=float))
    if x.size < 3:
        raise ValueError("a scaling fit needs at least three points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    (slope, intercept), res, *_ = np.polyfit(lx, ly, 1, full=True)
    resid = float(np.sqrt(res[0] / x.size)) if res.size else 0.0
    return ScalingFit(x, y, float(slope), float(intercept), resid)
