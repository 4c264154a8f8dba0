"""Status classification, error-rate reports, the linear-effect baseline,
and accumulated-local-effects curves for fitted models."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .basis import eval_mspline_matrix
from .estimation import FitConfig, FitResult, fit
from .exposure import LOG2
from .likelihood import lev_quantile

logger = logging.getLogger(__name__)


@dataclass
class ClassificationReport:
    unit_ids: list
    u_at_end: np.ndarray
    predicted_status: np.ndarray
    true_status: np.ndarray
    threshold_used: float
    tp: int
    fp: int
    tn: int
    fn: int
    fnr: float
    fpr: float
    no_failed_flag: bool = False

    @property
    def ter(self) -> float:
        return self.fnr + self.fpr


@dataclass
class AleCurve:
    """Centered main-effect curve of one sensor on the damage rate."""

    sensor_id: int
    grid: np.ndarray        # standardized measurement points (bin edges)
    effect: np.ndarray      # accumulated, data-centered effect at the edges
    bin_counts: np.ndarray


def practical_threshold(alpha: float, sigma: float, p: float) -> float:
    """Classification cutoff exp[log(alpha) + z_p * sigma]; slightly below
    the target threshold for small p, equal to it when sigma is 0."""
    if sigma == 0.0:
        return float(alpha)
    z_p = float(lev_quantile(p))
    return math.exp(math.log(alpha) + z_p * sigma)


def classify(dataset, model: FitResult, threshold: float) -> ClassificationReport:
    """Predict failed iff the fitted index at the last observed cycle
    reaches the threshold; report FNR/FPR/TER against the true status."""
    units = list(dataset)
    u_end = model.u_at_end(units)
    truth = np.asarray([u.status for u in units], dtype=int)
    pred = (u_end >= threshold).astype(int)

    tp = int(np.sum((truth == 1) & (pred == 1)))
    fn = int(np.sum((truth == 1) & (pred == 0)))
    fp = int(np.sum((truth == 0) & (pred == 1)))
    tn = int(np.sum((truth == 0) & (pred == 0)))
    n_failed = tp + fn
    n_cens = fp + tn
    no_failed = n_failed == 0
    if no_failed:
        logger.warning("classify: no failed units in truth; FNR reported as 0")
    fnr = fn / n_failed if n_failed else 0.0
    fpr = fp / n_cens if n_cens else 0.0
    return ClassificationReport(
        unit_ids=[u.unit_id for u in units], u_at_end=u_end,
        predicted_status=pred, true_status=truth, threshold_used=float(threshold),
        tp=tp, fp=fp, tn=tn, fn=fn, fnr=fnr, fpr=fpr, no_failed_flag=no_failed)


def fit_linear_variant(dataset, config: FitConfig, sensor_ids=None) -> FitResult:
    """Baseline with one linear coefficient per sensor and adaptive LASSO
    (singleton groups) through the same objective machinery."""
    return fit(dataset, config, linear=True, sensor_ids=sensor_ids)


def damage_level_fn(model: FitResult):
    """Pre-integration damage level as a function of one standardized
    observation row (vectorized over rows)."""
    if model.kind == "spline":
        bases = model.bases
        beta = model.beta

        def f(z_rows: np.ndarray) -> np.ndarray:
            total = np.zeros(z_rows.shape[0])
            for j, b in enumerate(bases):
                total += eval_mspline_matrix(b.spec, z_rows[:, j]) @ beta[j]
            return np.logaddexp(0.0, total) / LOG2
    else:
        beta_flat = np.concatenate(model.beta)

        def f(z_rows: np.ndarray) -> np.ndarray:
            return np.logaddexp(0.0, z_rows @ beta_flat) / LOG2
    return f


def ale_curve(z_rows: np.ndarray, sensor_index: int, f, n_bins: int,
              sensor_id: int | None = None) -> AleCurve:
    """Standard first-order ALE estimator over standardized rows.

    Quantile bins over the target column; within each bin, the target
    function is differenced between the bin edges with the other columns
    held at their observed values; bin-mean differences are accumulated
    and the curve is centered to zero data-weighted mean.
    """
    x = z_rows[:, sensor_index]
    qs = np.linspace(0.0, 1.0, n_bins + 1)
    edges = np.unique(np.quantile(x, qs))
    if edges.size - 1 < n_bins:
        logger.warning("ALE: fewer distinct values than bins for sensor %s; "
                       "merged to %d bins", sensor_index, edges.size - 1)
    if edges.size < 2:
        # constant column: flat curve
        return AleCurve(sensor_id=sensor_id or sensor_index + 1,
                        grid=edges, effect=np.zeros_like(edges),
                        bin_counts=np.array([x.size]))
    n_eff = edges.size - 1
    bin_idx = np.clip(np.searchsorted(edges, x, side="right") - 1, 0, n_eff - 1)

    deltas = np.zeros(n_eff)
    counts = np.zeros(n_eff, dtype=int)
    for b in range(n_eff):
        rows = np.flatnonzero(bin_idx == b)
        counts[b] = rows.size
        if rows.size == 0:
            continue
        hi_rows = z_rows[rows].copy()
        lo_rows = z_rows[rows].copy()
        hi_rows[:, sensor_index] = edges[b + 1]
        lo_rows[:, sensor_index] = edges[b]
        deltas[b] = float(np.mean(f(hi_rows) - f(lo_rows)))

    accum = np.concatenate([[0.0], np.cumsum(deltas)])  # value at each edge
    # center: subtract the data-weighted mean of the mid-bin values
    mids = 0.5 * (accum[:-1] + accum[1:])
    center = float(np.sum(counts * mids) / max(np.sum(counts), 1))
    return AleCurve(sensor_id=sensor_id or sensor_index + 1,
                    grid=edges, effect=accum - center, bin_counts=counts)


def ale_main_effect(model: FitResult, dataset, sensor_index: int, n_bins: int = 40) -> AleCurve:
    """ALE main effect of one sensor on the pre-integration damage level,
    estimated over the pooled observation rows of the dataset."""
    units = list(dataset)
    pooled = np.concatenate([u.signals for u in units], axis=0)
    if model.kind == "spline":
        stats = [b.standardization for b in model.bases]
    else:
        stats = model.standardization
    means = np.asarray([s[0] for s in stats])
    stds = np.asarray([s[1] for s in stats])
    z_rows = (pooled - means) / stds
    sid = model.sensor_ids[sensor_index]
    return ale_curve(z_rows, sensor_index, damage_level_fn(model), n_bins, sensor_id=sid)
