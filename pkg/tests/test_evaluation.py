import numpy as np
import pytest

from degindex.estimation import FitConfig, OptimizerConfig
from degindex.evaluation import (ale_curve, ale_main_effect, classify,
                                 damage_level_fn, fit_linear_variant,
                                 practical_threshold)
from degindex.likelihood import lev_quantile

from conftest import make_dataset

ALPHA = float(np.exp(5.0))


class TestPracticalThreshold:
    def test_zero_sigma_returns_alpha(self):
        assert practical_threshold(ALPHA, 0.0, 0.01) == ALPHA

    def test_derived_value_at_small_sigma(self):
        # exp[5 + z_{0.01} * 0.01] with z_{0.01} = -log(-log 0.01) ~ -1.52718
        got = practical_threshold(ALPHA, 0.01, 0.01)
        z = -np.log(-np.log(0.01))
        assert got == pytest.approx(float(np.exp(5.0 + z * 0.01)), rel=1e-12)
        assert got == pytest.approx(146.164, abs=0.001)

    def test_below_alpha_for_small_quantile(self):
        for sigma in (0.01, 0.1, 1.0):
            assert practical_threshold(ALPHA, sigma, 0.01) < ALPHA

    def test_median_quantile_sign(self):
        # z_p is positive for p above exp(-1) ~ 0.368
        assert practical_threshold(ALPHA, 0.5, 0.9) > ALPHA
        assert float(lev_quantile(0.9)) > 0


class _StubModel:
    """Minimal stand-in exposing u_at_end for classification tests."""

    def __init__(self, u_end):
        self._u = np.asarray(u_end, dtype=float)

    def u_at_end(self, units):
        return self._u


class TestClassify:
    def _units(self, rng, statuses):
        units = make_dataset(rng, n_units=len(statuses))
        return [type(u)(u.unit_id, u.cycles, u.signals, u.event_time, s)
                for u, s in zip(units, statuses)]

    def test_threshold_below_everything(self, rng):
        units = self._units(rng, [1, 1, 0, 0])
        rep = classify(units, _StubModel([5.0, 6.0, 7.0, 8.0]), 1.0)
        assert rep.fnr == 0.0 and rep.fpr == 1.0

    def test_threshold_above_everything(self, rng):
        units = self._units(rng, [1, 1, 0, 0])
        rep = classify(units, _StubModel([5.0, 6.0, 7.0, 8.0]), 100.0)
        assert rep.fnr == 1.0 and rep.fpr == 0.0

    def test_counts_and_ter_identity(self, rng):
        units = self._units(rng, [1, 1, 1, 0, 0])
        rep = classify(units, _StubModel([10.0, 2.0, 8.0, 9.0, 1.0]), 5.0)
        assert (rep.tp, rep.fn, rep.fp, rep.tn) == (2, 1, 1, 1)
        assert rep.fnr == pytest.approx(1 / 3)
        assert rep.fpr == pytest.approx(1 / 2)
        assert rep.ter == pytest.approx(rep.fnr + rep.fpr)
        assert rep.tp + rep.fn + rep.fp + rep.tn == len(units)

    def test_no_failed_units_sets_flag(self, rng):
        units = self._units(rng, [0, 0, 0])
        rep = classify(units, _StubModel([1.0, 2.0, 3.0]), 2.5)
        assert rep.no_failed_flag and rep.fnr == 0.0

    def test_threshold_monotonicity(self, rng):
        units = self._units(rng, [1, 1, 1, 0, 0, 0])
        u = _StubModel(np.linspace(1, 12, 6))
        prev_fnr, prev_fpr = -1.0, 2.0
        for thr in np.linspace(0.5, 13.0, 25):
            rep = classify(units, u, thr)
            assert rep.fnr >= prev_fnr and rep.fpr <= prev_fpr
            prev_fnr, prev_fpr = rep.fnr, rep.fpr


class TestAleCurve:
    def test_recovers_linear_slope(self, rng):
        # additive target: effect of column 0 is exactly 2x; the ALE curve
        # must be linear with slope 2 regardless of the other columns
        z = rng.normal(size=(4000, 3))

        def f(rows):
            return 2.0 * rows[:, 0] + np.sin(rows[:, 1]) + rows[:, 2] ** 2

        curve = ale_curve(z, 0, f, n_bins=20)
        slope = np.diff(curve.effect) / np.diff(curve.grid)
        assert np.allclose(slope, 2.0, rtol=0.05)

    def test_irrelevant_column_gives_flat_curve(self, rng):
        z = rng.normal(size=(2000, 3))

        def f(rows):
            return np.sin(rows[:, 1]) + rows[:, 2]

        curve = ale_curve(z, 0, f, n_bins=15)
        assert np.allclose(curve.effect, 0.0, atol=1e-12)

    def test_data_weighted_centering(self, rng):
        z = rng.normal(size=(3000, 2))

        def f(rows):
            return rows[:, 0] ** 2

        curve = ale_curve(z, 0, f, n_bins=25)
        mids = 0.5 * (curve.effect[:-1] + curve.effect[1:])
        weighted_mean = np.sum(curve.bin_counts * mids) / curve.bin_counts.sum()
        assert weighted_mean == pytest.approx(0.0, abs=1e-10)

    def test_constant_column_yields_flat_curve(self, rng):
        z = rng.normal(size=(100, 2))
        z[:, 0] = 3.0
        curve = ale_curve(z, 0, lambda rows: rows[:, 1], n_bins=10)
        assert np.all(curve.effect == 0.0)


@pytest.fixture(scope="module")
def linear_model():
    rng = np.random.default_rng(11)
    units = make_dataset(rng, n_units=10, n_cycles=30, p=3, failed_frac=0.5)
    cfg = FitConfig(seed=2, folds=2, lambda_grid=(0.0,),
                    optimizer=OptimizerConfig(max_evals_per_dim=150, restarts=1))
    return units, fit_linear_variant(units, cfg)


class TestModelAle:
    def test_linear_variant_shape(self, linear_model):
        units, model = linear_model
        assert model.kind == "linear"
        assert all(b.size == 1 for b in model.beta)
        assert model.standardization is not None and model.bases is None

    def test_damage_level_matches_formula(self, linear_model):
        units, model = linear_model
        f = damage_level_fn(model)
        z = np.random.default_rng(0).normal(size=(50, 3))
        beta = np.concatenate(model.beta)
        want = np.logaddexp(0.0, z @ beta) / np.log(2.0)
        assert np.allclose(f(z), want, rtol=1e-12)

    def test_main_effect_runs_on_fitted_model(self, linear_model):
        units, model = linear_model
        curve = ale_main_effect(model, units, sensor_index=0, n_bins=10)
        assert curve.sensor_id == model.sensor_ids[0]
        assert curve.grid.size == curve.effect.size
        assert np.all(np.isfinite(curve.effect))
