"""Precomputed design matrices for fast repeated objective evaluation.

The optimizer evaluates the objective thousands of times; everything
that does not depend on the coefficients (basis values, integration
weights, unit boundaries) is assembled once here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exposure import LOG2, integration_weights


@dataclass
class DesignMatrix:
    """Pooled per-cycle feature rows for a dataset with unit boundaries.

    ``X`` stacks every unit's cycles; column blocks follow
    ``group_sizes`` (one block per sensor).  ``unit_stats`` returns the
    end-of-history index and rate per unit for a flat coefficient vector.
    """

    X: np.ndarray                 # (total rows, total coefficients)
    weights: np.ndarray           # (total rows,) left-Riemann weights
    starts: np.ndarray            # first row index of each unit
    last: np.ndarray              # last row index of each unit
    status: np.ndarray            # per-unit 0/1
    event_times: np.ndarray       # per-unit event time
    unit_ids: np.ndarray
    group_sizes: tuple[int, ...]

    @property
    def n_units(self) -> int:
        return self.status.size

    @property
    def n_groups(self) -> int:
        return len(self.group_sizes)

    @property
    def group_slices(self) -> list[slice]:
        offsets = np.concatenate([[0], np.cumsum(self.group_sizes)])
        return [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]

    def unit_stats(self, beta_flat: np.ndarray):
        """(u at event, rate at event) per unit for flat coefficients."""
        z = self.X @ beta_flat
        rate = np.logaddexp(0.0, z)
        rate /= LOG2
        u_end = np.add.reduceat(rate * self.weights, self.starts)
        return u_end, rate[self.last]

    def split_beta(self, beta_flat: np.ndarray) -> list[np.ndarray]:
        return [beta_flat[s] for s in self.group_slices]

    def subset(self, unit_indices) -> "DesignMatrix":
        """Restriction to a subset of units (row blocks preserved in the
        given order)."""
        unit_indices = np.asarray(unit_indices, dtype=int)
        row_blocks = []
        starts, last = [], []
        pos = 0
        bounds = np.concatenate([self.starts, [self.X.shape[0]]])
        for ui in unit_indices:
            a, b = int(bounds[ui]), int(bounds[ui + 1])
            row_blocks.append(np.arange(a, b))
            starts.append(pos)
            pos += b - a
            last.append(pos - 1)
        rows = np.concatenate(row_blocks)
        return DesignMatrix(
            X=self.X[rows],
            weights=self.weights[rows],
            starts=np.asarray(starts, dtype=int),
            last=np.asarray(last, dtype=int),
            status=self.status[unit_indices],
            event_times=self.event_times[unit_indices],
            unit_ids=self.unit_ids[unit_indices],
            group_sizes=self.group_sizes,
        )


def build_design(units, bases) -> DesignMatrix:
    """Spline design: one column block of basis values per sensor."""
    blocks, weights, starts, last = [], [], [], []
    pos = 0
    for unit in units:
        row = np.hstack([b.design(unit.signals[:, j]) for j, b in enumerate(bases)])
        blocks.append(row)
        weights.append(integration_weights(unit.cycles))
        starts.append(pos)
        pos += unit.cycles.size
        last.append(pos - 1)
    return DesignMatrix(
        X=np.vstack(blocks),
        weights=np.concatenate(weights),
        starts=np.asarray(starts, dtype=int),
        last=np.asarray(last, dtype=int),
        status=np.asarray([u.status for u in units], dtype=int),
        event_times=np.asarray([u.event_time for u in units], dtype=float),
        unit_ids=np.asarray([u.unit_id for u in units]),
        group_sizes=tuple(b.spec.m for b in bases),
    )


def build_linear_design(units, standardization) -> DesignMatrix:
    """Linear-effect design: one standardized column per sensor."""
    means = np.asarray([s[0] for s in standardization], dtype=float)
    stds = np.asarray([s[1] for s in standardization], dtype=float)
    blocks, weights, starts, last = [], [], [], []
    pos = 0
    for unit in units:
        blocks.append((unit.signals - means) / stds)
        weights.append(integration_weights(unit.cycles))
        starts.append(pos)
        pos += unit.cycles.size
        last.append(pos - 1)
    p = units[0].signals.shape[1]
    return DesignMatrix(
        X=np.vstack(blocks),
        weights=np.concatenate(weights),
        starts=np.asarray(starts, dtype=int),
        last=np.asarray(last, dtype=int),
        status=np.asarray([u.status for u in units], dtype=int),
        event_times=np.asarray([u.event_time for u in units], dtype=float),
        unit_ids=np.asarray([u.unit_id for u in units]),
        group_sizes=tuple([1] * p),
    )
