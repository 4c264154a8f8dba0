"""Non-negative M-spline bases built over per-sensor signal ranges.

Each sensor gets its own order-3 M-spline basis.  Knots are placed at
equally spaced quantiles of the sensor's standardized training values,
with boundary knots repeated order times.  Every basis function is
non-negative and integrates to one over its support.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ORDER = 3


class DegenerateSensorError(ValueError):
    """Sensor signal is constant; no basis can be built over it."""


@dataclass(frozen=True)
class SplineSpec:
    """Knot layout for one order-3 M-spline basis.

    ``m = order + len(interior_knots)`` basis functions are defined on
    ``[boundary[0], boundary[1]]``.
    """

    order: int
    interior_knots: tuple[float, ...]
    boundary: tuple[float, float]

    def __post_init__(self):
        lo, hi = self.boundary
        if not hi > lo:
            raise ValueError("boundary must satisfy min < max")
        ik = np.asarray(self.interior_knots, dtype=float)
        if ik.size and (np.any(np.diff(ik) < 0) or ik[0] <= lo or ik[-1] >= hi):
            raise ValueError("interior knots must be non-decreasing and strictly inside the boundary")

    @property
    def m(self) -> int:
        return self.order + len(self.interior_knots)

    @property
    def knots(self) -> np.ndarray:
        """Full knot vector with boundary knots repeated ``order`` times."""
        lo, hi = self.boundary
        return np.concatenate([
            np.full(self.order, lo),
            np.asarray(self.interior_knots, dtype=float),
            np.full(self.order, hi),
        ])


@dataclass(frozen=True)
class SensorBasis:
    """Evaluated M-spline basis for one sensor, including the z-score
    standardization applied before knotting."""

    spec: SplineSpec
    sensor_id: int
    standardization: tuple[float, float]  # (mean, std) of the raw signal

    def standardize(self, raw: np.ndarray) -> np.ndarray:
        mean, std = self.standardization
        return (np.asarray(raw, dtype=float) - mean) / std

    def design(self, raw: np.ndarray) -> np.ndarray:
        """Basis matrix (len(raw) x m) at the standardized, clamped values."""
        return eval_mspline_matrix(self.spec, self.standardize(raw))


def build_spline_spec(values, n_interior: int) -> SplineSpec:
    """Knot layout from a sample of one sensor's standardized readings.

    Boundary is the sample range; interior knots sit at equally spaced
    quantiles.  A constant signal cannot support a basis and is an error
    (callers drop such sensors).
    """
    values = np.asarray(values, dtype=float)
    if n_interior < 0:
        raise ValueError("n_interior must be >= 0")
    lo, hi = float(np.min(values)), float(np.max(values))
    if not hi > lo or float(np.std(values)) == 0.0:
        raise DegenerateSensorError("degenerate sensor: constant signal")
    if n_interior:
        qs = np.arange(1, n_interior + 1) / (n_interior + 1)
        interior = np.quantile(values, qs)
        # Heavy ties can push a quantile onto the boundary; nudge inward.
        eps = 1e-9 * (hi - lo)
        interior = np.clip(interior, lo + eps, hi - eps)
        interior = np.maximum.accumulate(interior)
    else:
        interior = np.empty(0)
    return SplineSpec(order=ORDER, interior_knots=tuple(interior), boundary=(lo, hi))


def eval_mspline_matrix(spec: SplineSpec, x) -> np.ndarray:
    """Evaluate all m basis functions at each point of ``x``.

    Points outside the boundary are clamped to the nearest boundary (the
    basis is zero outside its support, which would silently erase the
    sensor's effect at predict time).
    """
    t = spec.knots
    lo, hi = spec.boundary
    x = np.clip(np.asarray(x, dtype=float), lo, hi)
    x = np.atleast_1d(x)
    n_knots = t.size

    # Order-1 pieces: 1/(t[i+1]-t[i]) on [t_i, t_{i+1}); the interval
    # ending at the last knot is closed so x == hi is covered.
    width = t[1:] - t[:-1]
    upper_open = x[:, None] < t[None, 1:]
    upper_closed = (x[:, None] <= t[None, 1:]) & (t[None, 1:] == hi)
    in_iv = (x[:, None] >= t[None, :-1]) & (upper_open | upper_closed)
    with np.errstate(divide="ignore"):
        inv_w = np.where(width > 0, 1.0 / np.where(width > 0, width, 1.0), 0.0)
    M = in_iv * inv_w[None, :]

    for k in range(2, spec.order + 1):
        n_b = n_knots - k
        span = t[k:] - t[: n_knots - k]
        left = (x[:, None] - t[None, : n_b]) * M[:, :n_b]
        right = (t[None, k : k + n_b] - x[:, None]) * M[:, 1 : n_b + 1]
        with np.errstate(invalid="ignore"):
            M = np.where(span[None, :] > 0, k * (left + right) / ((k - 1) * np.where(span > 0, span, 1.0)[None, :]), 0.0)
    return M


def eval_mspline(spec: SplineSpec, x: float) -> np.ndarray:
    """Vector of the m basis values at a single point."""
    return eval_mspline_matrix(spec, [x])[0]


def build_sensor_bases(units, n_interior: int, sensor_ids=None) -> list[SensorBasis]:
    """Per-sensor bases from the pooled signal rows of a dataset.

    Sensors are z-scored on the pooled values before knotting, so the
    coefficient magnitudes are comparable across sensors.
    """
    pooled = np.concatenate([u.signals for u in units], axis=0)
    p = pooled.shape[1]
    if sensor_ids is None:
        sensor_ids = list(range(1, p + 1))
    bases = []
    for j in range(p):
        col = pooled[:, j]
        mean, std = float(np.mean(col)), float(np.std(col))
        if std == 0.0:
            raise DegenerateSensorError(f"degenerate sensor: constant signal (sensor {sensor_ids[j]})")
        zed = (col - mean) / std
        spec = build_spline_spec(zed, n_interior)
        bases.append(SensorBasis(spec=spec, sensor_id=sensor_ids[j], standardization=(mean, std)))
    return bases
