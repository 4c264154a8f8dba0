"""Dataset loading: the whitespace-delimited jet-engine text format, a
generic long CSV schema, constant-channel cleaning, and stratified
train/test splitting."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .exposure import UnitRecord

logger = logging.getLogger(__name__)

CONSTANT_STD_TOL = 1e-8


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class DatasetManifest:
    source: list[str]
    schema: str                      # "jet_engine_text" or "long_csv"
    sensor_names: list[str]
    dropped_sensors: list[str]
    n_units: int
    n_failed: int
    n_censored: int
    split_seed: int | None = None
    split_fractions: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {
            "source": self.source, "schema": self.schema,
            "sensor_names": self.sensor_names, "dropped_sensors": self.dropped_sensors,
            "n_units": self.n_units, "n_failed": self.n_failed,
            "n_censored": self.n_censored, "split_seed": self.split_seed,
            "split_fractions": self.split_fractions,
        }


def _drop_constant_sensors(units: list[UnitRecord], sensor_names: list[str]):
    pooled = np.concatenate([u.signals for u in units], axis=0)
    stds = pooled.std(axis=0)
    keep = np.flatnonzero(stds >= CONSTANT_STD_TOL)
    dropped = [sensor_names[j] for j in np.flatnonzero(stds < CONSTANT_STD_TOL)]
    if dropped:
        logger.info("dropping constant-signal sensors: %s", ", ".join(dropped))
        units = [UnitRecord(unit_id=u.unit_id, cycles=u.cycles, signals=u.signals[:, keep],
                            event_time=u.event_time, status=u.status) for u in units]
    kept_names = [sensor_names[j] for j in keep]
    return units, kept_names, dropped


def load_jet_engine(train_path, truth_path=None):
    """Parse the whitespace-delimited jet-engine format.

    Rows are (unit, cycle, 3 operational settings, 21 sensors); rows may
    arrive in any order.  Event time is each unit's last cycle.  Status
    comes from the truth file: one remaining-life value per unit in unit
    order, zero meaning the unit failed at its last cycle.  Without a
    truth file every unit is treated as failed (run-to-failure data).
    Constant-signal sensors are dropped.
    """
    rows = {}
    with open(train_path) as fh:
        for ln, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 26:
                raise DataError(f"{train_path}:{ln}: expected 26 fields, got {len(parts)}")
            try:
                uid = int(float(parts[0]))
                cyc = float(parts[1])
                vals = [float(v) for v in parts[5:26]]
            except ValueError as exc:
                raise DataError(f"{train_path}:{ln}: malformed row ({exc})") from exc
            rows.setdefault(uid, []).append((cyc, vals))

    truth = None
    if truth_path is not None:
        with open(truth_path) as fh:
            truth = [float(t.strip()) for t in fh if t.strip()]
        if len(truth) != len(rows):
            raise DataError(
                f"truth file lists {len(truth)} units but data has {len(rows)}")

    sensor_names = [f"s{j}" for j in range(1, 22)]
    units = []
    for i, uid in enumerate(sorted(rows)):
        recs = sorted(rows[uid])
        if len(recs) < 2:
            logger.warning("unit %s has < 2 cycles; dropped", uid)
            continue
        cycles = np.asarray([r[0] for r in recs])
        signals = np.asarray([r[1] for r in recs])
        status = 1 if truth is None else int(truth[i] == 0.0)
        units.append(UnitRecord(unit_id=uid, cycles=cycles, signals=signals,
                                event_time=float(cycles[-1]), status=status))
    units, kept, dropped = _drop_constant_sensors(units, sensor_names)
    manifest = DatasetManifest(
        source=[str(train_path)] + ([str(truth_path)] if truth_path else []),
        schema="jet_engine_text", sensor_names=kept, dropped_sensors=dropped,
        n_units=len(units),
        n_failed=sum(u.status for u in units),
        n_censored=sum(1 - u.status for u in units))
    return units, manifest


def load_long_csv(path):
    """Load the long CSV schema: unit_id, cycle, status, sensor_1..p."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        required = {"unit_id", "cycle", "status"}
        missing = required - set(cols)
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        sensor_names = [c for c in cols if c not in required]
        if not sensor_names:
            raise DataError(f"{path}: no sensor columns")
        per_unit: dict = {}
        for ln, row in enumerate(reader, start=2):
            try:
                uid = int(row["unit_id"])
                cyc = float(row["cycle"])
                status = int(row["status"])
                vals = [float(row[c]) for c in sensor_names]
            except (TypeError, ValueError) as exc:
                raise DataError(f"{path}:{ln}: malformed row ({exc})") from exc
            rec = per_unit.setdefault(uid, {"cycles": [], "vals": [], "status": status})
            if cyc in rec["cycles"]:
                raise DataError(f"{path}:{ln}: duplicate (unit, cycle) = ({uid}, {cyc})")
            if rec["status"] != status:
                raise DataError(f"{path}:{ln}: status not constant within unit {uid}")
            rec["cycles"].append(cyc)
            rec["vals"].append(vals)

    units = []
    for uid in sorted(per_unit):
        rec = per_unit[uid]
        order = np.argsort(rec["cycles"])
        cycles = np.asarray(rec["cycles"])[order]
        signals = np.asarray(rec["vals"])[order]
        units.append(UnitRecord(unit_id=uid, cycles=cycles, signals=signals,
                                event_time=float(cycles[-1]), status=rec["status"]))
    manifest = DatasetManifest(
        source=[str(path)], schema="long_csv", sensor_names=sensor_names,
        dropped_sensors=[], n_units=len(units),
        n_failed=sum(u.status for u in units),
        n_censored=sum(1 - u.status for u in units))
    return units, manifest


def write_long_csv(units, path, sensor_names=None):
    """Emit the long CSV schema consumed by ``load_long_csv``."""
    p = units[0].signals.shape[1]
    if sensor_names is None:
        sensor_names = [f"sensor_{j}" for j in range(1, p + 1)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["unit_id", "cycle", "status"] + list(sensor_names))
        for u in units:
            for k in range(u.cycles.size):
                writer.writerow([u.unit_id, repr(float(u.cycles[k])), u.status]
                                + [repr(float(v)) for v in u.signals[k]])


def split(dataset, train_frac: float, seed: int):
    """Stratified train/test split preserving the failed proportion."""
    if not 0.0 < train_frac <= 1.0:
        raise ValueError("train_frac must be in (0, 1]")
    units = list(dataset)
    rng = np.random.default_rng(seed)
    failed = [u for u in units if u.status == 1]
    censored = [u for u in units if u.status == 0]
    train, test = [], []
    for group in (failed, censored):
        idx = rng.permutation(len(group))
        n_train = int(round(train_frac * len(group)))
        train.extend(group[i] for i in idx[:n_train])
        test.extend(group[i] for i in idx[n_train:])
    train.sort(key=lambda u: u.unit_id)
    test.sort(key=lambda u: u.unit_id)
    return train, test
