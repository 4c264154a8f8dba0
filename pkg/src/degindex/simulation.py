"""Synthetic multi-sensor benchmark datasets.

Ten sensor channels are simulated over a 350-cycle horizon as trend
functions plus noise; five of them drive a ground-truth degradation
index through order-3 M-spline effects with 2 interior knots (5
coefficients per sensor, 50 in total), and five have no effect.  Units
are censored by a Weibull time; a unit is failed when the true index
reaches exp(5) by its event time.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import build_sensor_bases
from .design import build_design
from .exposure import UnitRecord

HORIZON = 350
ALPHA = float(np.exp(5.0))
N_SENSORS = 10
N_INTERIOR_KNOTS = 2  # m = 5 bases per sensor

# True coefficients per scenario; column j is the block for sensor j,
# sensors 6..10 are all-zero.
SCENARIO_BETA = {
    "A": [
        [10.61, 1.39, 2.75, 4.35, -0.38],
        [-2.49, 0.24, -4.93, 0.17, -16.67],
        [-18.00, -3.31, -0.47, -1.06, 2.31],
        [-3.07, -16.09, 1.32, -0.13, 7.90],
        [-4.86, 11.55, 1.53, 1.97, -6.59],
    ],
    "B": [
        [2.35, 1.76, 2.04, 1.59, 1.74],
        [0.08, -0.04, -0.18, -0.06, -0.09],
        [0.29, -0.28, 0.30, -0.11, -0.24],
        [-0.12, 0.00, 0.14, -0.08, -0.04],
        [-2.70, -2.09, -2.16, -2.49, -1.72],
    ],
    "C": [
        [-0.06, 0.16, -0.04, 0.11, -0.09],
        [2.42, 1.44, 2.40, 1.32, 1.79],
        [-0.42, 0.48, -0.49, 0.04, 0.47],
        [-2.64, -1.37, -1.59, -2.54, -1.94],
        [0.02, 0.08, 0.10, 0.07, -0.14],
    ],
    "D": [
        [-0.32, -0.46, 0.02, -0.49, -0.47],
        [-0.13, 0.24, -0.55, -0.05, 0.28],
        [3.25, 3.05, 3.68, 2.73, 2.99],
        [-0.75, -0.77, 0.55, -0.18, 0.78],
        [0.79, 0.89, 0.68, 0.63, 0.66],
    ],
}

# Weibull (shape, scale) of the censoring time per scenario, calibrated
# once by pilot simulation to keep the failed fraction in the 60-80%
# band (and always below 90%).
SCENARIO_WEIBULL = {
    "A": (2.0, 130.0),
    "B": (2.0, 310.0),
    "C": (2.0, 286.0),
    "D": (2.0, 50.0),
}


@dataclass(frozen=True)
class ScenarioSpec:
    scenario: str
    n: int
    seed: int = 0
    horizon: int = HORIZON
    alpha: float = ALPHA
    weibull: tuple[float, float] | None = None  # None -> calibrated default

    def __post_init__(self):
        if self.scenario not in SCENARIO_BETA:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose one of A, B, C, D")
        if self.n < 1:
            raise ValueError("n must be positive")

    @property
    def weibull_params(self) -> tuple[float, float]:
        return self.weibull if self.weibull is not None else SCENARIO_WEIBULL[self.scenario]

    @property
    def beta_true(self) -> list[np.ndarray]:
        return scenario_coefficients(self.scenario)


def scenario_coefficients(scenario: str) -> list[np.ndarray]:
    """True coefficient groups: 10 sensors x 5, the last five all-zero."""
    cols = np.asarray(SCENARIO_BETA[scenario], dtype=float)  # rows = coefficient index
    groups = [cols[:, j].copy() for j in range(5)]
    groups += [np.zeros(5) for _ in range(5)]
    return groups


# Trend/noise catalog: (trend function of s = t/horizon, noise kind, noise scale).
# Sensors 1 and 5 are quadratic, 2 and 4 linear, 3 pure noise; 6-10 mix
# constant, log, and linear trends with normal or uniform noise.  The
# trending no-effect channels (7, 8, 10) carry noise comparable to their
# trend range so they are weak proxies of elapsed time; otherwise they
# could stand in for the effective channels and no index model could
# tell the two groups apart.
def _catalog(s: np.ndarray) -> list[tuple[np.ndarray, str, float]]:
    return [
        (1.5 * s ** 2, "normal", 0.195),          # 1 quadratic up
        (s, "normal", 0.104),                     # 2 linear up
        (np.zeros_like(s), "normal", 1.0),        # 3 pure noise
        (-s, "uniform", 0.195),                   # 4 linear down
        (-1.5 * s ** 2, "normal", 0.195),         # 5 quadratic down
        (np.ones_like(s), "normal", 0.2),         # 6 constant
        (np.log1p(5.0 * s) / np.log(6.0), "normal", 1.0),  # 7 log up, noisy
        (0.5 * s, "uniform", 1.0),                # 8 shallow linear, noisy
        (np.full_like(s, -0.5), "uniform", 0.2),  # 9 constant
        (-np.log1p(3.0 * s), "normal", 1.5),      # 10 log down, noisy
    ]


def _unit_rng(seed: int, unit_id: int) -> np.random.Generator:
    return np.random.default_rng([seed, unit_id])


def generate_signals(n: int, horizon: int, seed: int) -> list[np.ndarray]:
    """Per-unit (horizon x 10) signal matrices on cycles 1..horizon.

    Each unit draws from its own seed-derived stream, so generation is
    reproducible and order-independent.
    """
    cycles = np.arange(1, horizon + 1, dtype=float)
    s = cycles / horizon
    catalog = _catalog(s)
    out = []
    for uid in range(1, n + 1):
        rng = _unit_rng(seed, uid)
        sig = np.empty((horizon, N_SENSORS))
        for j, (trend, kind, scale) in enumerate(catalog):
            if kind == "normal":
                noise = rng.normal(0.0, scale, size=horizon)
            else:
                noise = rng.uniform(-scale, scale, size=horizon)
            sig[:, j] = trend + noise
        out.append(sig)
    return out


@dataclass
class SimulatedDataset:
    """Generated units plus the generating truth needed to audit them."""

    units: list[UnitRecord]
    spec: ScenarioSpec
    bases_true: list
    beta_true: list[np.ndarray]
    crossing_u: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def failed_fraction(self) -> float:
        return float(np.mean([u.status for u in self.units]))


def generate_dataset(spec: ScenarioSpec) -> SimulatedDataset:
    """Generate one scenario dataset.

    Bases (2 interior knots) are built on the pooled generated signals;
    the true index is computed with the scenario coefficients; each unit
    is truncated at min(Weibull censoring time, horizon) and marked
    failed when its true index reaches the threshold there.
    """
    signals = generate_signals(spec.n, spec.horizon, spec.seed)
    cycles = np.arange(1, spec.horizon + 1, dtype=float)
    full_units = [
        UnitRecord(unit_id=uid, cycles=cycles, signals=sig,
                   event_time=float(spec.horizon), status=0)
        for uid, sig in enumerate(signals, start=1)
    ]
    bases = build_sensor_bases(full_units, N_INTERIOR_KNOTS)
    beta_true = spec.beta_true
    beta_flat = np.concatenate(beta_true)

    design = build_design(full_units, bases)
    z = design.X @ beta_flat
    rate = np.logaddexp(0.0, z) / np.log(2.0)

    shape, scale = spec.weibull_params
    units = []
    for i, sig in enumerate(signals):
        uid = i + 1
        rng = np.random.default_rng([spec.seed, uid, 1])  # censoring stream
        c = float(scale * rng.weibull(shape))
        t_event = int(min(max(np.ceil(c), 2), spec.horizon))
        r = rate[i * spec.horizon : (i + 1) * spec.horizon]
        # u at cycle k (1-based, unit spacing): r[0]*1 + sum(r[:k-1])
        u_path = r[0] + np.concatenate([[0.0], np.cumsum(r[:-1])])
        u_at_event = float(u_path[t_event - 1])
        status = int(u_at_event >= spec.alpha)
        units.append(UnitRecord(
            unit_id=uid,
            cycles=cycles[:t_event].copy(),
            signals=sig[:t_event].copy(),
            event_time=float(t_event),
            status=status,
        ))

    frac = float(np.mean([u.status for u in units]))
    if frac > 0.9 and spec.n >= 20:
        # with only a handful of units the observed proportion is too lumpy
        # to distinguish calibration failure from sampling noise
        raise ValueError(
            f"calibration failure: failed proportion {frac:.3f} exceeds 0.90 "
            f"for scenario {spec.scenario} with Weibull{spec.weibull_params}")
    return SimulatedDataset(units=units, spec=spec, bases_true=bases, beta_true=beta_true)
