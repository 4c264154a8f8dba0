"""Monotone degradation index u(t) from sensor histories.

The index is the running integral of a strictly positive damage rate
h(sum of per-sensor spline effects), discretized as a left Riemann sum
over the observed cycle grid.  The segment [0, first cycle] uses the
rate at the first observed cycle (the only causal choice), so with all
coefficients zero and unit-spaced cycles 1..T the index is exactly t.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

LOG2 = float(np.log(2.0))


@dataclass(frozen=True)
class UnitRecord:
    """One unit's sensor matrix over discrete cycles plus its event time
    and failed/censored status (1 = failed, 0 = censored)."""

    unit_id: int
    cycles: np.ndarray          # strictly increasing, event_time == cycles[-1]
    signals: np.ndarray         # (#cycles, p) raw readings
    event_time: float
    status: int

    def __post_init__(self):
        object.__setattr__(self, "cycles", np.asarray(self.cycles, dtype=float))
        object.__setattr__(self, "signals", np.asarray(self.signals, dtype=float))
        if self.cycles.ndim != 1 or self.cycles.size == 0:
            raise ValueError("cycles must be a non-empty 1-d grid")
        if np.any(np.diff(self.cycles) <= 0):
            raise ValueError(f"unit {self.unit_id}: cycles must be strictly increasing")
        if self.signals.shape[0] != self.cycles.size:
            raise ValueError(f"unit {self.unit_id}: signals rows must match cycles")
        if self.event_time != self.cycles[-1]:
            raise ValueError(f"unit {self.unit_id}: event_time must equal the last observed cycle")
        if self.status not in (0, 1):
            raise ValueError(f"unit {self.unit_id}: status must be 0 or 1")

    @property
    def n_sensors(self) -> int:
        return self.signals.shape[1]


@dataclass
class ModelParams:
    """Grouped coefficients (one block per sensor) plus the LEV scale and
    the fixed target failure threshold."""

    beta: list[np.ndarray]
    sigma: float
    alpha: float

    def __post_init__(self):
        self.beta = [np.asarray(b, dtype=float) for b in self.beta]
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self.beta) if self.beta else np.empty(0)


def transform_h(z):
    """Map an arbitrary real effect to a positive rate: log(1+e^z)/log 2.

    Stable for large |z| via logaddexp; h(0) = 1.
    """
    return np.logaddexp(0.0, np.asarray(z, dtype=float)) / LOG2


def _effects_at(unit: UnitRecord, bases, params: ModelParams) -> np.ndarray:
    """Summed spline effects at every observed cycle."""
    total = np.zeros(unit.cycles.size)
    for j, basis in enumerate(bases):
        total += basis.design(unit.signals[:, j]) @ params.beta[j]
    return total


def damage_rate(unit: UnitRecord, bases, params: ModelParams, cycle_index: int) -> float:
    """Instantaneous damage rate u'(t) at one observed cycle."""
    z = 0.0
    for j, basis in enumerate(bases):
        z += (basis.design(unit.signals[cycle_index : cycle_index + 1, j]) @ params.beta[j]).item()
    return float(transform_h(z))


def integration_weights(cycles: np.ndarray) -> np.ndarray:
    """Left-Riemann weights over the cycle grid.

    Row k carries c_{k+1} - c_k; the first row additionally carries the
    initial segment [0, c_1]; the last row carries 0.
    """
    cycles = np.asarray(cycles, dtype=float)
    w = np.zeros(cycles.size)
    if cycles.size > 1:
        w[:-1] = np.diff(cycles)
    w[0] += cycles[0]
    return w


def cumulative_exposure(unit: UnitRecord, bases, params: ModelParams):
    """Degradation-index trajectory for one unit.

    Returns ``(times, u)`` with ``times[0] = 0`` and ``u[0] = 0``; the
    final value is the index at the event time.  Gaps in the cycle grid
    hold the last observed rate across the gap.
    """
    rate = transform_h(_effects_at(unit, bases, params))
    gaps = np.diff(unit.cycles)
    if gaps.size and np.any(gaps > np.min(gaps)):
        logger.debug("unit %s: gaps in cycle grid; rate held across gaps", unit.unit_id)
    u_at_cycles = np.empty(unit.cycles.size)
    u_at_cycles[0] = rate[0] * unit.cycles[0]
    if unit.cycles.size > 1:
        u_at_cycles[1:] = u_at_cycles[0] + np.cumsum(rate[:-1] * np.diff(unit.cycles))
    times = np.concatenate([[0.0], unit.cycles])
    return times, np.concatenate([[0.0], u_at_cycles])
