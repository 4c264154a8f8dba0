"""Monotone degradation-index construction from multi-channel sensor
histories with censored failure times and automatic sensor selection."""

from .basis import (DegenerateSensorError, SensorBasis, SplineSpec,
                    build_sensor_bases, build_spline_spec, eval_mspline,
                    eval_mspline_matrix)
from .estimation import (FitConfig, FitResult, OptimizerConfig,
                         StratificationError, cold_start, cv_tune, fit,
                         optimize, select_lambda_index)
from .evaluation import (AleCurve, ClassificationReport, ale_main_effect,
                         classify, fit_linear_variant, practical_threshold)
from .exposure import (ModelParams, UnitRecord, cumulative_exposure,
                       damage_rate, transform_h)
from .ingestion import (DataError, DatasetManifest, load_jet_engine,
                        load_long_csv, split, write_long_csv)
from .likelihood import (LevParams, PenaltyConfig, adaptive_weights,
                         anchor_penalty, group_penalty, lev_cdf, lev_pdf,
                         lev_quantile, objective, total_loglik, unit_loglik)
from .simulation import (ScenarioSpec, SimulatedDataset, generate_dataset,
                         generate_signals, scenario_coefficients)

__version__ = "0.1.0"
