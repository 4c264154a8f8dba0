"""Two-stage penalized fit: group LASSO initialization, adaptive group
LASSO refit, sigma annealing inside a derivative-free optimizer, and
k-fold cross-validated tuning of the shrinkage parameter.

The scale parameter rides along in the search as log(sigma - sigma_l),
so it decreases smoothly toward its floor instead of being fixed small
from the start (which traps the coefficient search in local optima).
"""

from __future__ import annotations

import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import likelihood
from .basis import SensorBasis, SplineSpec, build_sensor_bases
from .design import DesignMatrix, build_design, build_linear_design
from .exposure import ModelParams, cumulative_exposure
from .likelihood import PenaltyConfig, adaptive_weights, censored_loglik_terms, lev_quantile

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = float(np.exp(5.0))


class StratificationError(ValueError):
    """A CV fold ended up without failed units."""


@dataclass
class OptimizerConfig:
    max_evals_per_dim: int = 2000
    xtol: float = 1e-4
    ftol: float = 1e-6
    restarts: int = 3


@dataclass
class FitConfig:
    alpha: float = DEFAULT_ALPHA
    sigma_lower: float = 0.01
    eta: float = 5.0
    gamma: float = 2.0
    lambda_grid: tuple[float, ...] | None = None  # None -> n-scaled default grid
    folds: int = 5
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0
    n_interior_knots: int = 2
    selection_tol: float = 1e-4
    sigma0: float = 1.0
    classify_quantile: float = 0.01
    cold_start_range: float = 1.0
    cold_start_attempts: int = 200
    # fold fits ride a warm-started lambda path and converge with a
    # fraction of the final fit's evaluation budget
    cv_budget_factor: float = 0.4

    def __post_init__(self):
        if self.sigma_lower <= 0:
            raise ValueError("sigma_lower must be positive")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.lambda_grid is not None:
            self.lambda_grid = tuple(float(v) for v in self.lambda_grid)
            if len(self.lambda_grid) == 0:
                raise ValueError("lambda_grid must be non-empty")

    def resolved_grid(self, n_units: int) -> tuple[float, ...]:
        if self.lambda_grid is not None:
            return self.lambda_grid
        return tuple(n_units * np.logspace(-3.0, 2.0, 10))


def default_lambda_grid(n_units: int, num: int = 10) -> tuple[float, ...]:
    """Log-spaced grid spanning negligible to full shrinkage, scaled by
    the unit count so the penalty tracks the likelihood's magnitude."""
    return tuple(n_units * np.logspace(-3.0, 2.0, num))


def reparam_sigma(sigma: float, sigma_lower: float) -> float:
    """log(sigma*) = log(sigma - sigma_l); keeps sigma above its floor."""
    if sigma <= sigma_lower:
        raise ValueError("sigma must exceed sigma_lower")
    return math.log(sigma - sigma_lower)

def inverse_reparam(logsigma_star: float, sigma_lower: float) -> float:
    return math.exp(logsigma_star) + sigma_lower


@dataclass
class OptimizeOutcome:
    beta: np.ndarray          # full flat coefficient vector, pinned groups zeroed
    sigma: float
    objective: float
    trace: list[float]        # best-so-far values, non-increasing
    n_evals: int
    restarts: int
    converged: bool


def _free_layout(group_slices, weights):
    """Column indices and free-space group slices for finite-weight groups."""
    free_groups = [j for j, w in enumerate(weights) if np.isfinite(w)]
    cols, free_slices = [], []
    pos = 0
    for j in free_groups:
        s = group_slices[j]
        size = s.stop - s.start
        cols.extend(range(s.start, s.stop))
        free_slices.append(slice(pos, pos + size))
        pos += size
    return free_groups, np.asarray(cols, dtype=int), free_slices


def _make_objective(design: DesignMatrix, penalty: PenaltyConfig, alpha: float,
                    sigma_lower: float, sigma0: float, free_groups, cols, free_slices):
    X = np.ascontiguousarray(design.X[:, cols]) if cols.size else np.zeros((design.X.shape[0], 0))
    w_int = design.weights
    starts, last, status = design.starts, design.last, design.status
    weights = penalty.weights[free_groups] if penalty.weights is not None else np.ones(len(free_groups))
    lam, eta = penalty.lam, penalty.eta
    log2 = float(np.log(2.0))

    # sigma is an annealing device that only ever moves down from sigma0;
    # capping it shuts off the degenerate regime where a shrunk-to-zero
    # coefficient vector rides sigma -> inf to flatten the likelihood
    sigma_span = sigma0 - sigma_lower

    def f(x):
        beta = x[:-1]
        s = x[-1]
        sigma = (sigma_span if s > 690.0 else min(math.exp(s), sigma_span)) + sigma_lower
        z = X @ beta if beta.size else np.zeros(X.shape[0])
        rate = np.logaddexp(0.0, z)
        rate /= log2
        u_end = np.add.reduceat(rate * w_int, starts)
        u_end = np.maximum(u_end, 1e-300)
        rate_end = np.maximum(rate[last], 1e-300)
        ll = float(np.sum(censored_loglik_terms(u_end, rate_end, status, sigma, alpha)))
        pen = lam * float(sum(wj * np.linalg.norm(beta[s]) for wj, s in zip(weights, free_slices))) if lam else 0.0
        anch = likelihood.anchor_penalty(status, u_end, alpha, eta) if eta else 0.0
        val = -ll + pen + anch
        return val if np.isfinite(val) else 1e300

    return f


def optimize(design: DesignMatrix, penalty: PenaltyConfig, start_beta, start_sigma: float,
             config: FitConfig) -> OptimizeOutcome:
    """Joint Nelder-Mead over the free coefficients and log(sigma*).

    Groups with infinite penalty weight are pinned at zero and excluded
    from the search.  The evaluation budget is split evenly over the
    initial run and the restarts; each restart rebuilds the simplex
    around the incumbent.
    """
    weights = penalty.weights if penalty.weights is not None else np.ones(design.n_groups)
    free_groups, cols, free_slices = _free_layout(design.group_slices, weights)
    start_beta = np.asarray(start_beta, dtype=float)
    pinned = np.setdiff1d(np.arange(design.X.shape[1]), cols)
    if pinned.size and np.any(start_beta[pinned] != 0):
        start_beta = start_beta.copy()
        start_beta[pinned] = 0.0

    f = _make_objective(design, penalty, config.alpha, config.sigma_lower,
                        config.sigma0, free_groups, cols, free_slices)
    x0 = np.concatenate([start_beta[cols], [reparam_sigma(start_sigma, config.sigma_lower)]])
    f0 = f(x0)
    if not np.isfinite(f0) or f0 >= 1e300:
        raise ValueError("infeasible start: objective is non-finite at the starting point")

    opt = config.optimizer
    dim = x0.size
    total_budget = max(opt.max_evals_per_dim * dim, 50)
    per_run = max(total_budget // (opt.restarts + 1), 25)

    best_x, best_f = x0, f0
    trace = [f0]
    n_evals = 0
    restarts_used = 0
    converged = False
    # Absolute simplex steps: percentage steps collapse on near-zero
    # coefficients and on log(sigma*) ~ 0, stalling the anneal.
    beta_step, sigma_step = 0.25, 0.4
    for run in range(opt.restarts + 1):
        shrink = 0.5 ** run
        simplex = np.tile(best_x, (dim + 1, 1))
        for i in range(dim):
            step = sigma_step if i == dim - 1 else beta_step
            simplex[i + 1, i] += shrink * max(step, 0.05 * abs(best_x[i]))
        res = minimize(f, best_x, method="Nelder-Mead",
                       options={"maxfev": per_run, "xatol": opt.xtol, "fatol": opt.ftol,
                                "adaptive": dim > 10, "disp": False,
                                "initial_simplex": simplex})
        n_evals += res.nfev
        improved = res.fun < best_f - opt.ftol
        if res.fun < best_f:
            best_f, best_x = float(res.fun), np.asarray(res.x)
            trace.append(best_f)
        if run > 0:
            restarts_used += 1
        if res.status == 0:
            converged = True
        if not improved and run > 0:
            break

    # Corner pruning: the group penalty is non-smooth at beta_j = 0, so
    # the simplex hovers near a dead group's corner without landing on it,
    # and simply zeroing a block is never enough because the remaining
    # blocks share the level of u and must re-adjust.  Each candidate
    # block (ascending norm) is therefore zeroed and the rest briefly
    # re-optimized from the incumbent; the exact zero is kept whenever the
    # re-optimized objective does not worsen beyond the convergence
    # tolerance.  A sweep stops after two consecutive rejections, and the
    # total pruning spend is capped at half the main budget.
    if penalty.lam > 0 and len(free_slices) > 1:
        prune_per_attempt = max(total_budget // 8, 200)
        prune_cap = total_budget // 2
        spent = 0
        pruned: list[slice] = []
        changed = True
        while changed and spent < prune_cap:
            changed = False
            order = sorted((s for s in free_slices if best_x[s].any()),
                           key=lambda s: float(np.linalg.norm(best_x[s])))
            misses = 0
            for s in order:
                if spent >= prune_cap:
                    break
                cand = best_x.copy()
                cand[s] = 0.0
                fc = float(f(cand))
                n_evals += 1
                spent += 1
                if fc > best_f + opt.ftol:
                    # re-adjust the surviving coordinates around the corner;
                    # a coordinate that is zero in every vertex stays zero
                    # under Nelder-Mead moves, so zeroing the pruned columns
                    # keeps those blocks pinned during the re-optimization
                    simplex = np.tile(cand, (dim + 1, 1))
                    for i in range(dim):
                        step = sigma_step if i == dim - 1 else beta_step
                        simplex[i + 1, i] += 0.25 * max(step, 0.05 * abs(cand[i]))
                    for dead in [s, *pruned]:
                        simplex[:, dead] = 0.0
                    res = minimize(f, cand, method="Nelder-Mead",
                                   options={"maxfev": prune_per_attempt,
                                            "xatol": opt.xtol, "fatol": opt.ftol,
                                            "adaptive": dim > 10, "disp": False,
                                            "initial_simplex": simplex})
                    n_evals += res.nfev
                    spent += res.nfev
                    fc = float(res.fun)
                    cand = np.asarray(res.x)
                if fc <= best_f + opt.ftol:
                    best_x, best_f = cand, min(fc, best_f)
                    trace.append(best_f)
                    pruned.append(s)
                    changed = True
                    misses = 0
                else:
                    misses += 1
                    if misses >= 2:
                        break

    beta_full = np.zeros(design.X.shape[1])
    if cols.size:
        beta_full[cols] = best_x[:-1]
    sigma = (config.sigma0 if best_x[-1] > 690.0
             else min(inverse_reparam(float(best_x[-1]), config.sigma_lower), config.sigma0))
    return OptimizeOutcome(beta=beta_full, sigma=sigma, objective=best_f, trace=trace,
                           n_evals=n_evals, restarts=restarts_used, converged=converged)


def anneal_ladder(design: DesignMatrix, penalty: PenaltyConfig, start: OptimizeOutcome,
                  config: FitConfig, max_rungs: int = 6) -> OptimizeOutcome:
    """Cooling schedule for the scale after the joint search stalls.

    The joint search reliably anneals sigma partway and then sticks: at the
    incumbent coefficients the profile-optimal sigma is a stationary point,
    and tightening the failed units' u(t_i) toward alpha needs coordinated
    coefficient moves the simplex cannot find while sigma floats.  Each rung
    halves the gap to the floor, re-optimizes the coefficients alone at that
    fixed sigma, then re-profiles sigma in one dimension.  Both steps act on
    the same objective, so an accepted rung is a genuine descent; rungs stop
    when the objective no longer improves or the scale is at the floor.
    """
    from scipy.optimize import minimize_scalar

    weights = penalty.weights if penalty.weights is not None else np.ones(design.n_groups)
    free_groups, cols, free_slices = _free_layout(design.group_slices, weights)
    if not cols.size:
        return start
    f = _make_objective(design, penalty, config.alpha, config.sigma_lower,
                        config.sigma0, free_groups, cols, free_slices)

    beta = np.asarray(start.beta, dtype=float)[cols]
    sigma = min(max(start.sigma, config.sigma_lower * (1 + 1e-9)), config.sigma0)
    if sigma <= config.sigma_lower:
        return start
    best_f = float(f(np.concatenate([beta, [reparam_sigma(sigma, config.sigma_lower)]])))
    trace = list(start.trace)
    n_evals = start.n_evals

    opt = config.optimizer
    dim = beta.size
    rung_budget = max(opt.max_evals_per_dim * (dim + 1) // 3, 200)
    # groups already driven to an exact zero stay pinned on every rung
    dead = [s for s in free_slices if not beta[s].any()]
    s_lo, s_hi = math.log(1e-6), math.log(config.sigma0 - config.sigma_lower)

    for _ in range(max_rungs):
        if sigma - config.sigma_lower <= 1.5 * config.sigma_lower:
            break
        target = config.sigma_lower + 0.5 * (sigma - config.sigma_lower)
        s_fix = reparam_sigma(target, config.sigma_lower)
        g = lambda b: f(np.concatenate([b, [s_fix]]))
        simplex = np.tile(beta, (dim + 1, 1))
        for i in range(dim):
            simplex[i + 1, i] += max(0.25, 0.05 * abs(beta[i]))
        for sdead in dead:
            simplex[:, sdead] = 0.0
        res = minimize(g, beta, method="Nelder-Mead",
                       options={"maxfev": rung_budget, "xatol": opt.xtol,
                                "fatol": opt.ftol, "adaptive": dim > 10,
                                "disp": False, "initial_simplex": simplex})
        n_evals += res.nfev
        cand_beta = np.asarray(res.x)
        prof = minimize_scalar(lambda s: f(np.concatenate([cand_beta, [s]])),
                               bounds=(s_lo, s_hi), method="bounded",
                               options={"xatol": 1e-4})
        n_evals += prof.nfev
        cand_f = float(prof.fun)
        cand_sigma = inverse_reparam(float(prof.x), config.sigma_lower)
        if cand_f >= best_f - opt.ftol:
            break
        beta, sigma, best_f = cand_beta, cand_sigma, cand_f
        trace.append(best_f)

    beta_full = np.zeros(design.X.shape[1])
    beta_full[cols] = beta
    return OptimizeOutcome(beta=beta_full, sigma=sigma, objective=best_f, trace=trace,
                           n_evals=n_evals, restarts=start.restarts,
                           converged=start.converged)


def cold_start(design: DesignMatrix, config: FitConfig, rng: np.random.Generator) -> np.ndarray:
    """Rejection-sample a starting coefficient vector whose index paths
    separate failed from censored units.

    Accepts the first draw for which the smallest log-index among failed
    units exceeds the largest among censored units; on exhaustion the
    best-separating candidate is returned with a warning.
    """
    K = design.X.shape[1]
    c = config.cold_start_range
    failed = design.status == 1
    censored = ~failed
    vacuous = not failed.any() or not censored.any()
    best_beta, best_margin = None, -np.inf
    for _ in range(max(config.cold_start_attempts, 1)):
        beta = rng.uniform(-c, c, size=K)
        if vacuous:
            return beta
        u_end, _ = design.unit_stats(beta)
        u_end = np.maximum(u_end, 1e-300)
        log_u = np.log(u_end)
        margin = float(np.min(log_u[failed]) - np.max(log_u[censored]))
        if margin > 0:
            return beta
        if margin > best_margin:
            best_margin, best_beta = margin, beta
    logger.warning("cold start: separation condition unmet after %d attempts "
                   "(best margin %.3g); using best candidate",
                   config.cold_start_attempts, best_margin)
    return best_beta


def stratified_folds(status, k: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Fold membership preserving the failed/censored proportions."""
    status = np.asarray(status)
    failed = np.flatnonzero(status == 1)
    censored = np.flatnonzero(status == 0)
    if failed.size < k:
        raise StratificationError(
            f"stratification failed: {failed.size} failed units cannot fill {k} folds")
    failed = rng.permutation(failed)
    censored = rng.permutation(censored)
    folds = [np.sort(np.concatenate([failed[i::k], censored[i::k]])) for i in range(k)]
    return folds


def select_lambda_index(fnr, ter) -> int:
    """Tuning rule: take the FNR minimizer unless its total error exceeds
    0.2, in which case take the TER minimizer.  Ties break toward the
    larger (sparser) grid entry."""
    fnr = np.asarray(fnr, dtype=float)
    ter = np.asarray(ter, dtype=float)
    k_f = int(np.flatnonzero(fnr == fnr.min())[-1])
    if ter[k_f] <= 0.2:
        return k_f
    return int(np.flatnonzero(ter == ter.min())[-1])


def _fold_rates(u_end, status, threshold):
    pred_failed = u_end >= threshold
    truth_failed = status == 1
    n_f = int(truth_failed.sum())
    n_c = int((~truth_failed).sum())
    fn = int((truth_failed & ~pred_failed).sum())
    fp = int((~truth_failed & pred_failed).sum())
    fnr = fn / n_f if n_f else 0.0
    fpr = fp / n_c if n_c else 0.0
    return fnr, fpr


def cv_tune(design: DesignMatrix, weights, lambda_grid, start_beta, config: FitConfig,
            rng: np.random.Generator):
    """k-fold tuning of the shrinkage parameter.

    Within each fold the grid is traversed from the smallest value up,
    so the first fit (nearly unpenalized) can anneal the scale and find a
    separating index, and each subsequent fit warm-starts from the
    previous one with a reduced budget.  Held-out units are classified
    with the practical threshold at the configured quantile.
    Returns the selected value, the fold-averaged coefficients at it
    (warm start for the final fit), and the per-lambda rate table.
    """
    grid = np.sort(np.asarray(lambda_grid, dtype=float))
    weights = np.asarray(weights, dtype=float)
    if len(grid) == 1:
        table = [{"lambda": float(grid[0]), "fnr": float("nan"), "fpr": float("nan"),
                  "ter": float("nan")}]
        return float(grid[0]), np.asarray(start_beta, dtype=float), table

    folds = stratified_folds(design.status, config.folds, rng)
    all_idx = np.arange(design.n_units)
    fold_config = dataclasses.replace(
        config,
        optimizer=dataclasses.replace(
            config.optimizer,
            max_evals_per_dim=max(int(config.optimizer.max_evals_per_dim * config.cv_budget_factor), 50)))
    rescue_config = dataclasses.replace(
        fold_config,
        optimizer=dataclasses.replace(
            fold_config.optimizer,
            max_evals_per_dim=2 * fold_config.optimizer.max_evals_per_dim))
    q = config.classify_quantile
    z_p = float(lev_quantile(q))

    n_lam = len(grid)
    fnr = np.zeros((n_lam, config.folds))
    fpr = np.zeros((n_lam, config.folds))
    betas = [[None] * config.folds for _ in range(n_lam)]

    for fi, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(all_idx, test_idx)
        d_train = design.subset(train_idx)
        d_test = design.subset(test_idx)
        # the log-likelihood scales with the number of training units, so
        # the penalty is scaled by the fold's training fraction to probe
        # the same per-unit shrinkage the full-data fit will see
        train_frac = train_idx.size / design.n_units
        current = np.asarray(start_beta, dtype=float)
        current_sigma = config.sigma0
        for li in range(n_lam):
            pen = PenaltyConfig(lam=float(grid[li]) * train_frac, weights=weights,
                                eta=config.eta, gamma=config.gamma)
            # the path's endpoints get the full budget: the first fit must
            # find a separating index from cold, and the most-penalized fit
            # is the furthest from its warm start (heavy re-balancing plus a
            # fresh anneal), so a reduced budget misstates its error rates
            full_budget = li == 0 or li == n_lam - 1
            out = optimize(d_train, pen, current, current_sigma,
                           config if full_budget else fold_config)
            if li > 0 and out.sigma - config.sigma_lower > 0.2:
                # the scale got stranded mid-range while the coefficients
                # shrank; re-anneal from the top around the shrunk solution
                # with a doubled budget (these are the fits whose rates
                # would otherwise misrepresent their grid point)
                rescue = optimize(d_train, pen, out.beta, config.sigma0, rescue_config)
                if rescue.objective < out.objective:
                    out = rescue
            betas[li][fi] = out.beta
            current = out.beta
            # warm-start the scale slightly above the previous optimum so the
            # reduced-budget fits can still descend (or recover) as needed
            current_sigma = float(np.clip(2.0 * out.sigma, 2.0 * config.sigma_lower,
                                          config.sigma0))
            u_test, _ = d_test.unit_stats(out.beta)
            thr = math.exp(math.log(config.alpha) + z_p * out.sigma)
            fnr[li, fi], fpr[li, fi] = _fold_rates(u_test, d_test.status, thr)

    fnr_bar = fnr.mean(axis=1)
    fpr_bar = fpr.mean(axis=1)
    ter_bar = fnr_bar + fpr_bar
    s = select_lambda_index(fnr_bar, ter_bar)
    warm = np.mean(np.stack(betas[s]), axis=0)
    table = [{"lambda": float(grid[i]), "fnr": float(fnr_bar[i]), "fpr": float(fpr_bar[i]),
              "ter": float(ter_bar[i])} for i in range(n_lam)]
    return float(grid[s]), warm, table


@dataclass
class FitResult:
    """Fitted degradation-index model with its feature definitions."""

    kind: str                         # "spline" or "linear"
    beta: list[np.ndarray]
    sigma: float
    alpha: float
    lambda_selected: float
    selected_sensors: list[int]       # 1-based sensor ids with live groups
    sensor_ids: list[int]
    bases: list[SensorBasis] | None   # spline kind
    standardization: list[tuple[float, float]] | None  # linear kind
    cv_tables: dict
    diagnostics: dict
    config: FitConfig

    def group_norms(self) -> np.ndarray:
        return np.asarray([float(np.linalg.norm(b)) for b in self.beta])

    @property
    def params(self) -> ModelParams:
        return ModelParams(beta=self.beta, sigma=self.sigma, alpha=self.alpha)

    def design_for(self, units) -> DesignMatrix:
        if self.kind == "spline":
            return build_design(units, self.bases)
        return build_linear_design(units, self.standardization)

    def u_at_end(self, units) -> np.ndarray:
        """Index value at each unit's last observed cycle."""
        d = self.design_for(units)
        u_end, _ = d.unit_stats(np.concatenate(self.beta))
        return u_end

    def trajectory(self, unit):
        """(times, u) path for one unit, times[0] = 0."""
        if self.kind == "spline":
            return cumulative_exposure(unit, self.bases, self.params)
        d = self.design_for([unit])
        # reuse the linear design row-by-row for the cumulative path
        z = d.X @ np.concatenate(self.beta)
        rate = np.logaddexp(0.0, z) / np.log(2.0)
        u = np.empty(unit.cycles.size)
        u[0] = rate[0] * unit.cycles[0]
        if unit.cycles.size > 1:
            u[1:] = u[0] + np.cumsum(rate[:-1] * np.diff(unit.cycles))
        return np.concatenate([[0.0], unit.cycles]), np.concatenate([[0.0], u])

    def to_dict(self) -> dict:
        d = {
            "format": "degindex-model",
            "version": 1,
            "kind": self.kind,
            "alpha": self.alpha,
            "sigma": self.sigma,
            "lambda_selected": self.lambda_selected,
            "selected_sensors": list(map(int, self.selected_sensors)),
            "sensor_ids": list(map(int, self.sensor_ids)),
            "beta": [b.tolist() for b in self.beta],
            "cv_tables": self.cv_tables,
            "diagnostics": self.diagnostics,
            "config": _config_to_dict(self.config),
        }
        if self.kind == "spline":
            d["bases"] = [{
                "sensor_id": int(b.sensor_id),
                "order": b.spec.order,
                "interior_knots": list(b.spec.interior_knots),
                "boundary": list(b.spec.boundary),
                "standardization": list(b.standardization),
            } for b in self.bases]
        else:
            d["standardization"] = [list(s) for s in self.standardization]
        return d

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        if d.get("format") != "degindex-model" or d.get("version") != 1:
            raise ValueError("unrecognized model file format/version")
        bases = None
        standardization = None
        if d["kind"] == "spline":
            bases = [SensorBasis(
                spec=SplineSpec(order=b["order"], interior_knots=tuple(b["interior_knots"]),
                                boundary=tuple(b["boundary"])),
                sensor_id=b["sensor_id"],
                standardization=tuple(b["standardization"]),
            ) for b in d["bases"]]
        else:
            standardization = [tuple(s) for s in d["standardization"]]
        return cls(
            kind=d["kind"],
            beta=[np.asarray(b, dtype=float) for b in d["beta"]],
            sigma=float(d["sigma"]),
            alpha=float(d["alpha"]),
            lambda_selected=float(d["lambda_selected"]),
            selected_sensors=list(d["selected_sensors"]),
            sensor_ids=list(d["sensor_ids"]),
            bases=bases,
            standardization=standardization,
            cv_tables=d.get("cv_tables", {}),
            diagnostics=d.get("diagnostics", {}),
            config=_config_from_dict(d.get("config", {})),
        )

    @classmethod
    def load(cls, path) -> "FitResult":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _config_to_dict(config: FitConfig) -> dict:
    d = dataclasses.asdict(config)
    if d.get("lambda_grid") is not None:
        d["lambda_grid"] = list(d["lambda_grid"])
    return d


def _config_from_dict(d: dict) -> FitConfig:
    d = dict(d)
    opt = d.pop("optimizer", {})
    known = {f.name for f in dataclasses.fields(FitConfig)} - {"optimizer"}
    kwargs = {k: v for k, v in d.items() if k in known}
    if kwargs.get("lambda_grid") is not None:
        kwargs["lambda_grid"] = tuple(kwargs["lambda_grid"])
    return FitConfig(optimizer=OptimizerConfig(**opt), **kwargs)


def fit(dataset, config: FitConfig, linear: bool = False, sensor_ids=None) -> FitResult:
    """Two-stage adaptive-group-LASSO fit of the degradation index.

    Stage 1 runs the plain group LASSO (unit weights) from a rejection-
    sampled cold start, tunes the shrinkage by CV, and refits on the full
    training set.  Stage 2 turns the stage-1 norms into adaptive weights
    (dead groups are pinned), retunes, and refits.  A single-value grid
    of {0} skips tuning entirely and reduces to the no-selection variant.
    """
    units = list(dataset)
    n = len(units)
    p = units[0].signals.shape[1]
    if sensor_ids is None:
        sensor_ids = list(range(1, p + 1))
    rng = np.random.default_rng(config.seed)

    if linear:
        pooled = np.concatenate([u.signals for u in units], axis=0)
        standardization = [(float(pooled[:, j].mean()), float(pooled[:, j].std()))
                           for j in range(p)]
        for j, (_, s) in enumerate(standardization):
            if s == 0.0:
                raise ValueError(f"degenerate sensor: constant signal (sensor {sensor_ids[j]})")
        bases = None
        design = build_linear_design(units, standardization)
    else:
        bases = build_sensor_bases(units, config.n_interior_knots, sensor_ids)
        standardization = None
        design = build_design(units, bases)

    grid = config.resolved_grid(n)
    diagnostics = {"warnings": [], "stage1": {}, "stage2": {}}

    ones = np.ones(design.n_groups)
    beta0 = cold_start(design, config, rng)

    no_selection = all(v == 0.0 for v in grid)

    anneal_tol = 0.2

    def annealed(out):
        return out.sigma - config.sigma_lower <= anneal_tol

    def attempt(pen, beta_start, sigma_start):
        """A full-budget fit plus annealing continuation: warm restarts from
        the incumbent (a fresh full-size simplex re-opens directions the
        converged one collapsed) while they keep improving the objective,
        then the sigma cooling ladder.  A single Nelder-Mead run reliably
        plateaus; the warm legs are what carry the anneal the rest of the
        way down.
        """
        out = optimize(design, pen, beta_start, sigma_start, config)
        for _ in range(3):
            if annealed(out) and out.sigma - config.sigma_lower <= 0.05:
                break
            nxt = optimize(design, pen, out.beta, out.sigma, config)
            if nxt.objective >= out.objective - config.optimizer.ftol:
                break
            out = nxt
        if annealed(out):
            out = anneal_ladder(design, pen, out, config)
        return out

    def final_fit(weights_vec, lam_chosen, warm_beta):
        """Full-budget fit at the chosen shrinkage, warm start then cold.

        A scale parameter stuck far from its floor marks a failed fit (the
        threshold it implies is useless), so when neither start anneals the
        shrinkage steps down the grid until one does; the lambda actually
        used is returned alongside the fit.
        """
        ladder = sorted((float(v) for v in grid if v <= lam_chosen), reverse=True)
        fallback = None
        for k, lam in enumerate(ladder):
            pen = PenaltyConfig(lam=lam, weights=weights_vec, eta=config.eta,
                                gamma=config.gamma)
            if k == 0:
                out = attempt(pen, warm_beta, config.sigma0)
                if not annealed(out):
                    retry = attempt(pen, beta0, config.sigma0)
                    if annealed(retry) or retry.objective < out.objective:
                        out = retry
                fallback = (lam, out)
            else:
                out = attempt(pen, beta0, config.sigma0)
            if annealed(out):
                if k > 0:
                    diagnostics["warnings"].append(
                        f"scale failed to anneal at lambda={ladder[0]:g}; "
                        f"stepped down to lambda={lam:g}")
                return lam, out
        diagnostics["warnings"].append("scale failed to anneal at any grid value")
        return fallback

    # Stage 1: group LASSO (unit weights)
    lam1, warm1, table1 = cv_tune(design, ones, grid, beta0, config, rng)
    lam1, out1 = final_fit(ones, lam1, warm1)
    diagnostics["stage1"] = {"lambda": lam1, "objective": out1.objective,
                             "n_evals": out1.n_evals, "restarts": out1.restarts,
                             "converged": out1.converged, "trace": out1.trace}
    beta_tilde = design.split_beta(out1.beta)

    if no_selection:
        # lambda = 0 makes the adaptive stage the same landscape; one stage
        # suffices for the no-selection baseline
        final, lam_sel, table2 = out1, 0.0, []
    else:
        # rescale the finite weights to geometric mean 1: the weights enter
        # only through lambda * w_j, so a common scale is absorbed into
        # lambda, and normalizing keeps the shared grid meaningful in stage
        # 2 even when the stage-1 norms are uniformly tiny or large
        w2 = adaptive_weights(beta_tilde, config.gamma)
        finite = w2[np.isfinite(w2) & (w2 > 0)]
        if finite.size:
            w2 = w2 / np.exp(np.mean(np.log(finite)))
        # stage-2 folds restart from the cold start: the stage-1 solution is
        # often too shrunk to satisfy the separation condition, which stalls
        # the anneal and degenerates the fold rate tables
        lam_sel, warm2, table2 = cv_tune(design, w2, grid, beta0, config, rng)
        lam_sel, final = final_fit(w2, lam_sel, warm2)
        diagnostics["stage2"] = {"lambda": lam_sel, "objective": final.objective,
                                 "n_evals": final.n_evals, "restarts": final.restarts,
                                 "converged": final.converged, "trace": final.trace}
        # relaxed refit: the penalty's job ends at selection; the delivered
        # index is rebuilt without shrinkage on the selected sensors so the
        # scale can anneal to its floor instead of carrying shrinkage bias
        live = np.asarray([float(np.linalg.norm(final.beta[sl]))
                           for sl in design.group_slices]) > config.selection_tol
        if lam_sel > 0 and live.any():
            keep = np.where(live, 1.0, np.inf)
            pen0 = PenaltyConfig(lam=0.0, weights=keep, eta=config.eta,
                                 gamma=config.gamma)
            refit = attempt(pen0, final.beta, config.sigma0)
            if annealed(refit):
                final = refit
                diagnostics["stage2"]["relaxed_objective"] = refit.objective
            else:
                diagnostics["warnings"].append(
                    "relaxed refit failed to anneal; keeping the penalized fit")
    if not final.converged:
        diagnostics["warnings"].append("optimizer hit its evaluation budget without converging")

    beta_hat = design.split_beta(final.beta)
    norms = np.asarray([float(np.linalg.norm(b)) for b in beta_hat])
    selected = [sensor_ids[j] for j in range(design.n_groups) if norms[j] > config.selection_tol]

    return FitResult(
        kind="linear" if linear else "spline",
        beta=beta_hat,
        sigma=final.sigma,
        alpha=config.alpha,
        lambda_selected=lam_sel,
        selected_sensors=selected,
        sensor_ids=list(sensor_ids),
        bases=bases,
        standardization=standardization,
        cv_tables={"stage1": table1, "stage2": table2},
        diagnostics=diagnostics,
        config=config,
    )
