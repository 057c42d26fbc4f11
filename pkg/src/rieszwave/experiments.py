"""Monte Carlo studies at desk scale.

Every study draws replicate r from the stream (seed, r), runs the replicates
in index order (optionally in worker processes) and reduces over them in
index order, so a config fully determines its report.
"""
from __future__ import annotations

import enum
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .kernels import (ConstantMode, Diamond, HurstParam, as_hurst, diamond_covariance,
                      diamond_variance, fgn_covariance, qv_limit_constant)
from .noise import (DiamondLatticeSpec, RngStream, aggregate_cell_covariance, sample_diamonds,
                    sample_diamonds_exact, sample_fgn_rows)
from .qvar import estimate_theta, qvar, rate_fit, remainder, riemann_F2
from .wave_sim import LINEAR, DiffusionSpec, march, restrict, simulate_pair


class Study(enum.Enum):
    NOISE_VALIDATE = "noise_validate"
    LINEAR_QV = "linear_qv"
    QV_CONVERGENCE = "qv_convergence"
    REMAINDER_RATE = "remainder_rate"
    ESTIMATOR = "estimator"
    HOLDER = "holder"


class ConfigError(ValueError):
    """Invalid experiment configuration; ``key`` names the offending field."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


@dataclass(frozen=True)
class ExperimentConfig:
    study: Study
    hurst: HurstParam
    diffusion: DiffusionSpec = DiffusionSpec.one_plus_sin(1.0)
    n_sim: int = 128
    n_obs_levels: Tuple[int, ...] = ()
    eps_levels: Tuple[int, ...] = ()
    replicates: int = 100
    seed: int = 0
    backend: str = "exact"
    constant_mode: ConstantMode = ConstantMode.DERIVED_NORMALIZATION

    def __post_init__(self):
        object.__setattr__(self, "study", Study(self.study))
        try:
            object.__setattr__(self, "hurst", as_hurst(self.hurst))
        except ValueError as exc:
            raise ConfigError(str(exc), "hurst") from None
        object.__setattr__(self, "constant_mode", ConstantMode.parse(self.constant_mode))
        object.__setattr__(self, "n_obs_levels", tuple(int(n) for n in self.n_obs_levels))
        object.__setattr__(self, "eps_levels", tuple(int(e) for e in self.eps_levels))
        self.validate()

    @property
    def refinement(self) -> int:
        if self.backend == "exact":
            return 0
        return int(self.backend.split(":", 1)[1]) if ":" in self.backend else 32

    def validate(self) -> None:
        if self.replicates < 1:
            raise ConfigError("must be >= 1", "replicates")
        if self.n_sim < 1:
            raise ConfigError("must be >= 1", "n_sim")
        if not (0 <= self.seed < 2 ** 64):
            raise ConfigError("must be a 64-bit unsigned integer", "seed")
        if self.backend != "exact":
            head, _, tail = self.backend.partition(":")
            if head != "aggregate" or (tail and (not tail.isdigit() or int(tail) < 2)):
                raise ConfigError("must be 'exact' or 'aggregate[:r]' with r >= 2", "backend")
        for n in self.n_obs_levels:
            if n < 1 or self.n_sim % n:
                raise ConfigError(f"level {n} does not divide n_sim={self.n_sim}", "n_obs_levels")
        for e in self.eps_levels:
            if e < 1:
                raise ConfigError("every eps multiple must be >= 1", "eps_levels")
        needs_levels = {Study.LINEAR_QV, Study.QV_CONVERGENCE, Study.ESTIMATOR}
        if self.study in needs_levels and not self.n_obs_levels:
            raise ConfigError("study needs at least one observation level", "n_obs_levels")
        if self.study in (Study.REMAINDER_RATE, Study.HOLDER):
            if not self.eps_levels:
                raise ConfigError("study needs eps levels", "eps_levels")
            if 8 * max(self.eps_levels) > self.n_sim:
                raise ConfigError("eps must stay in the window eps <= n_sim*h/8", "eps_levels")

    def to_dict(self) -> Dict[str, Any]:
        F = self.diffusion
        return {
            "study": self.study.value,
            "hurst": self.hurst.h,
            "f_kind": F.kind.value,
            "f_args": list(F.params),
            "f_theta": F.theta,
            "n_sim": self.n_sim,
            "n_obs_levels": list(self.n_obs_levels),
            "eps_levels": list(self.eps_levels),
            "replicates": self.replicates,
            "seed": self.seed,
            "backend": self.backend,
            "constant_mode": self.constant_mode.value,
        }


@dataclass
class StudyReport:
    config: ExperimentConfig
    levels: List[Dict[str, Any]]
    rate_fits: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    checks: Dict[str, Any] = field(default_factory=dict)
    plots: Dict[str, Tuple[Tuple[str, ...], List[Tuple[Any, ...]]]] = field(default_factory=dict)
    replicate_seeds: List[Tuple[int, int]] = field(default_factory=list)
    wall_time: float = 0.0

    def to_dict(self) -> Dict[str, Any]:
        # wall time is left out so identical configs give identical artifacts
        return {
            "artifact_version": __version__,
            "config": self.config.to_dict(),
            "levels": self.levels,
            "rate_fits": self.rate_fits,
            "checks": self.checks,
            "replicate_seeds": [list(s) for s in self.replicate_seeds],
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"

    @property
    def passed(self) -> Optional[bool]:
        flags = [v for k, v in self.checks.items() if k.endswith("pass")]
        return all(flags) if flags else None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# Replicate machinery
# ---------------------------------------------------------------------------

def _noise(config: ExperimentConfig, rep: int):
    lattice = DiamondLatticeSpec(config.n_sim)
    rng = RngStream(config.seed, rep)
    return sample_diamonds(lattice, config.hurst, rng, "exact" if config.backend == "exact"
                           else "aggregate", config.refinement or 32)


def _run_replicates(fn: Callable[[ExperimentConfig, int], Any], config: ExperimentConfig,
                    workers: int = 1) -> List[Any]:
    reps = range(config.replicates)
    if workers <= 1:
        return [fn(config, r) for r in reps]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, [config] * config.replicates, reps, chunksize=4))


def _level_row(level, samples: np.ndarray, target: Optional[float] = None, **extra) -> Dict[str, Any]:
    x = np.asarray(samples, dtype=float)
    n = x.size
    sd = float(np.std(x, ddof=1)) if n > 1 else 0.0
    row = {"level": level, "n": n, "mean": float(np.mean(x)), "sd": sd,
           "mc_se": sd / math.sqrt(n)}
    if target is None:
        row["l1_err"] = float(np.mean(np.abs(x)))
        row["l2_err"] = float(np.sqrt(np.mean(x * x)))
    else:
        err = x - target
        row["l1_err"] = float(np.mean(np.abs(err)))
        row["l2_err"] = float(np.sqrt(np.mean(err * err)))
    row.update(extra)
    return row


def _fit(levels: Sequence[Tuple[float, float]], target: Optional[float] = None,
         tolerance: Optional[float] = None) -> Dict[str, Any]:
    if len(levels) < 3 or any(e <= 0 or not math.isfinite(e) for _, e in levels):
        return {"slope": None, "status": "undefined (fewer than 3 positive errors)",
                "levels": [list(p) for p in levels], "target": target}
    fit = rate_fit(levels)
    out = {"slope": fit.slope, "intercept": fit.intercept, "r_squared": fit.r_squared,
           "levels": [list(p) for p in fit.levels], "target": target, "status": "ok"}
    if target is not None and tolerance is not None:
        out["tolerance"] = tolerance
        out["pass"] = abs(fit.slope - target) <= tolerance
    return out


def _strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def _eval_nodes(n_sim: int, max_eps: int):
    step = max(max_eps, n_sim // 8)
    nodes = np.arange(max_eps, n_sim - max_eps + 1, step)
    return np.meshgrid(nodes, nodes, indexing="ij")


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------

def _linear_qv_rep(config: ExperimentConfig, rep: int):
    V = march(_noise(config, rep), LINEAR)
    return [qvar(restrict(V, N), config.hurst) for N in config.n_obs_levels]


def run_linear_qv(config: ExperimentConfig, workers: int = 1) -> StudyReport:
    _expect(config, Study.LINEAR_QV)
    t0 = time.perf_counter()
    samples = np.array(_run_replicates(_linear_qv_rep, config, workers))
    c = qv_limit_constant(config.hurst, config.constant_mode)
    levels, sq = [], []
    for k, N in enumerate(config.n_obs_levels):
        row = _level_row(N, samples[:, k], c)
        row["limit_constant"] = c
        row["z_mean"] = (row["mean"] - c) / row["mc_se"] if row["mc_se"] > 0 else None
        row["sq_err"] = row["l2_err"] ** 2
        levels.append(row)
        sq.append((N, row["sq_err"]))
    fits = {"sq_l2_vs_N": _fit(sq, -1.0, 0.4)}
    checks = {"means_within_3se_pass": all(r["z_mean"] is not None and abs(r["z_mean"]) <= 3
                                           for r in levels)}
    if "pass" in fits["sq_l2_vs_N"]:
        checks["rate_pass"] = fits["sq_l2_vs_N"]["pass"]
    return _report(config, levels, fits, checks, {}, t0)


def _qv_conv_rep(config: ExperimentConfig, rep: int):
    F = config.diffusion
    v = march(_noise(config, rep), F)
    c = qv_limit_constant(config.hurst, config.constant_mode)
    truth = F.theta ** 2 * c * riemann_F2(v.square(), F)
    return [truth] + [qvar(restrict(v, N), config.hurst) for N in config.n_obs_levels]


def run_qv_convergence(config: ExperimentConfig, workers: int = 1) -> StudyReport:
    _expect(config, Study.QV_CONVERGENCE)
    t0 = time.perf_counter()
    out = np.array(_run_replicates(_qv_conv_rep, config, workers))
    truth = out[:, 0]
    levels, l1 = [], []
    for k, N in enumerate(config.n_obs_levels):
        q = out[:, k + 1]
        row = _level_row(N, q)
        err = q - truth
        row["l1_err"] = float(np.mean(np.abs(err)))
        row["l2_err"] = float(np.sqrt(np.mean(err * err)))
        row["mean_limit"] = float(np.mean(truth))
        levels.append(row)
        l1.append((N, row["l1_err"]))
    h = config.hurst.h
    fits = {"l1_vs_N": _fit(l1, -h, 0.25)}
    checks = {"l1_decreasing": _strictly_decreasing([e for _, e in l1])}
    if "pass" in fits["l1_vs_N"]:
        checks["rate_pass"] = fits["l1_vs_N"]["pass"]
    return _report(config, levels, fits, checks, {}, t0)


def _remainder_rep(config: ExperimentConfig, rep: int):
    F = config.diffusion
    v, V = simulate_pair(_noise(config, rep), F)
    s = config.n_sim
    I, J = _eval_nodes(s, max(config.eps_levels))
    res = []
    for m in config.eps_levels:
        for sign in (1, -1):
            res.append(remainder(v, V, F, I, J, m, sign).ravel())
    return np.array(res)


def run_remainder_rate(config: ExperimentConfig, workers: int = 1) -> StudyReport:
    _expect(config, Study.REMAINDER_RATE)
    t0 = time.perf_counter()
    out = np.stack(_run_replicates(_remainder_rep, config, workers))  # rep x (eps*sign) x node
    h = 1.0 / config.n_sim
    target = 2 * config.hurst.h + 0.5
    tol = 0.15 if config.hurst.h == 0.5 else 0.2
    levels, plot_rows = [], []
    by_sign = {1: [], -1: []}
    k = 0
    for m in config.eps_levels:
        for sign in (1, -1):
            x = out[:, k, :].ravel()
            k += 1
            l4 = float(np.mean(x ** 4) ** 0.25)
            label = f"{'+' if sign > 0 else '-'}{m}"
            row = _level_row(label, x, None, eps=m * h, sign=sign, l4_err=l4)
            levels.append(row)
            by_sign[sign].append((m * h, row["l2_err"]))
            plot_rows.append((m * h, sign, row["l2_err"], l4))
    fits = {"l2_plus": _fit(by_sign[1], target, tol), "l2_minus": _fit(by_sign[-1], target, tol)}
    checks = {}
    for name, fit in fits.items():
        if "pass" in fit:
            checks[f"{name}_rate_pass"] = fit["pass"]
    plots = {"remainder_norms": (("eps", "sign", "l2", "l4"), plot_rows)}
    return _report(config, levels, fits, checks, plots, t0)


def _estimator_rep(config: ExperimentConfig, rep: int):
    F = config.diffusion
    v = march(_noise(config, rep), F)
    return [estimate_theta(restrict(v, N), F, config.hurst, config.constant_mode).theta_hat
            for N in config.n_obs_levels]


def run_estimator(config: ExperimentConfig, workers: int = 1) -> StudyReport:
    _expect(config, Study.ESTIMATOR)
    t0 = time.perf_counter()
    est = np.array(_run_replicates(_estimator_rep, config, workers))
    theta = config.diffusion.theta
    levels = []
    for k, N in enumerate(config.n_obs_levels):
        row = _level_row(N, est[:, k], theta)
        row["rel_err"] = row["l1_err"] / theta if theta > 0 else None
        levels.append(row)
    abs_err = [r["l1_err"] for r in levels]
    plots = {
        "theta_realization": (("N", "theta_hat"),
                              [(N, float(est[0, k])) for k, N in enumerate(config.n_obs_levels)]),
        "theta_errors": (("N", "mean_theta_hat", "sd", "abs_err", "rel_err"),
                         [(r["level"], r["mean"], r["sd"], r["l1_err"], r["rel_err"]) for r in levels]),
    }
    checks = {"abs_err_decreasing": _strictly_decreasing(abs_err)}
    if theta > 0:
        checks["final_mean_rel_dev"] = abs(levels[-1]["mean"] - theta) / theta
    return _report(config, levels, {}, checks, plots, t0)


def _holder_rep(config: ExperimentConfig, rep: int):
    v = march(_noise(config, rep), config.diffusion)
    I, J = _eval_nodes(config.n_sim, max(config.eps_levels))
    out = []
    for m in config.eps_levels:
        out.append((v(I, J + m) - v(I, J)).ravel())
        out.append((v(I - m, J + m) - v(I, J)).ravel())
    return np.array(out)


def run_holder(config: ExperimentConfig, workers: int = 1) -> StudyReport:
    _expect(config, Study.HOLDER)
    t0 = time.perf_counter()
    out = np.stack(_run_replicates(_holder_rep, config, workers))
    h = 1.0 / config.n_sim
    levels, rot, spat = [], [], []
    k = 0
    for m in config.eps_levels:
        for name, scale, acc in (("lambda", m * h, rot), ("x", math.sqrt(2) * m * h, spat)):
            x = out[:, k, :].ravel()
            k += 1
            row = _level_row(f"{name}:{m}", x, None, eps=scale)
            levels.append(row)
            acc.append((scale, row["l2_err"]))
    H = config.hurst.h
    fits = {"rms_lambda": _fit(rot, H, 0.15), "rms_x": _fit(spat, H, 0.15)}
    checks = {f"{n}_pass": f["pass"] for n, f in fits.items() if "pass" in f}
    return _report(config, levels, fits, checks, {}, t0)


def _z(samples: np.ndarray, target: float) -> Tuple[float, float, float]:
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(samples.size))
    return mean, se, (mean - target) / se if se > 0 else (0.0 if mean == target else math.inf)


def run_noise_validate(config: ExperimentConfig, workers: int = 1) -> StudyReport:
    """Distributional checks of both noise backends against the kernels."""
    _expect(config, Study.NOISE_VALIDATE)
    t0 = time.perf_counter()
    H = config.hurst
    n = config.replicates
    levels: List[Dict[str, Any]] = []
    zs: List[float] = []

    def record(name, samples, target):
        mean, se, z = _z(samples, target)
        levels.append(_level_row(name, samples, target, expected=target, z=z))
        zs.append(z)

    # fGn rows, length 256, unit cells
    rows = sample_fgn_rows(256, 1.0, H, RngStream(config.seed, 0).generator(), n)
    for lag in range(9):
        per_row = np.mean(rows[:, : 256 - lag] * rows[:, lag:], axis=1)
        record(f"fgn_lag{lag}", per_row, fgn_covariance(lag, 1.0, H))

    # exact backend on a small lattice with unit step
    lat = DiamondLatticeSpec(3, 1.0)
    cells = np.stack([sample_diamonds_exact(lat, H, RngStream(config.seed, 1 + r)).cells
                      for r in range(n)])
    s = lat.size

    def cell(i, j):
        return cells[:, i + s, j + s]

    D = lambda i, j: Diamond(float(i), float(j), 1.0)  # noqa: E731
    record("exact_var", cell(0, 0) ** 2, diamond_variance(1.0, H))
    record("exact_lag1_same_antidiagonal", cell(0, 0) * cell(-1, 1),
           diamond_covariance(D(0, 0), D(-1, 1), H))
    record("exact_next_antidiagonal", cell(0, 0) * cell(1, 0), diamond_covariance(D(0, 0), D(1, 0), H))
    record("exact_gap2_antidiagonal", cell(0, 0) * cell(1, 1), 0.0)

    # aggregate backend: exact covariance of the aggregation at r = 32 and 64
    agg = {}
    for r in (32, 64):
        lat2 = DiamondLatticeSpec(2, 1.0)
        cov = aggregate_cell_covariance(lat2, H, r, [(0, 0)], [(0, 0), (-1, 1), (1, 0)])[0]
        agg[r] = {
            "var_rel_diff": abs(cov[0] / diamond_variance(1.0, H) - 1),
            "lag1_abs_diff_rel_var": abs(cov[1] - diamond_covariance(D(0, 0), D(-1, 1), H))
            / diamond_variance(1.0, H),
            "next_abs_diff_rel_var": abs(cov[2] - diamond_covariance(D(0, 0), D(1, 0), H))
            / diamond_variance(1.0, H),
        }
    checks = {
        "max_abs_z": max(abs(z) for z in zs),
        "z_pass": all(abs(z) < 4 for z in zs),
        "aggregate_r32": agg[32],
        "aggregate_r64": agg[64],
        "aggregate_r32_pass": max(agg[32].values()) <= 0.03,
        "aggregate_r64_pass": max(agg[64].values()) <= 0.015,
    }
    return _report(config, levels, {}, checks, {}, t0)


STUDIES: Dict[Study, Callable[..., StudyReport]] = {
    Study.NOISE_VALIDATE: run_noise_validate,
    Study.LINEAR_QV: run_linear_qv,
    Study.QV_CONVERGENCE: run_qv_convergence,
    Study.REMAINDER_RATE: run_remainder_rate,
    Study.ESTIMATOR: run_estimator,
    Study.HOLDER: run_holder,
}


def run_study(config: ExperimentConfig, workers: int = 1) -> StudyReport:
    return STUDIES[config.study](config, workers=workers)


def _expect(config: ExperimentConfig, study: Study) -> None:
    if config.study is not study:
        raise ConfigError(f"expected study {study.value}, got {config.study.value}", "study")


def _report(config, levels, fits, checks, plots, t0) -> StudyReport:
    seeds = [(config.seed, r) for r in range(config.replicates)]
    return StudyReport(config, levels, fits, checks, plots, seeds, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

_SIN1 = DiffusionSpec.one_plus_sin(1.0)
_SIN2 = DiffusionSpec.one_plus_sin(2.0)

PRESETS: Dict[str, ExperimentConfig] = {
    "paper_h05_estimator": ExperimentConfig(Study.ESTIMATOR, HurstParam(0.5), _SIN2, 120,
                                            (20, 40, 60), (), 100, 4305),
    "paper_h055_estimator": ExperimentConfig(Study.ESTIMATOR, HurstParam(0.55), _SIN2, 180,
                                             (30, 45, 60), (), 100, 4355),
    "linear_qv_h05": ExperimentConfig(Study.LINEAR_QV, HurstParam(0.5), LINEAR, 128,
                                      (16, 32, 64, 128), (), 2000, 1105),
    "linear_qv_h075": ExperimentConfig(Study.LINEAR_QV, HurstParam(0.75), LINEAR, 128,
                                       (16, 32, 64, 128), (), 2000, 1175),
    "qv_convergence_h05": ExperimentConfig(Study.QV_CONVERGENCE, HurstParam(0.5), _SIN1, 256,
                                           (16, 32, 64, 128), (), 500, 2105),
    "remainder_h05": ExperimentConfig(Study.REMAINDER_RATE, HurstParam(0.5), _SIN1, 512,
                                      (), (8, 16, 32, 64), 500, 3105),
    "remainder_h075": ExperimentConfig(Study.REMAINDER_RATE, HurstParam(0.75), _SIN1, 512,
                                       (), (8, 16, 32, 64), 500, 3175),
    "noise_validate_h05": ExperimentConfig(Study.NOISE_VALIDATE, HurstParam(0.5), LINEAR, 8,
                                           (), (), 20000, 5105),
    "noise_validate_h075": ExperimentConfig(Study.NOISE_VALIDATE, HurstParam(0.75), LINEAR, 8,
                                            (), (), 20000, 5175),
    "holder_h05": ExperimentConfig(Study.HOLDER, HurstParam(0.5), _SIN1, 512,
                                   (), (4, 8, 16, 32, 64), 200, 6105),
    "holder_h075": ExperimentConfig(Study.HOLDER, HurstParam(0.75), _SIN1, 512,
                                    (), (4, 8, 16, 32, 64), 200, 6175),
}


def preset(name: str, **overrides) -> ExperimentConfig:
    try:
        base = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}", "preset") from None
    return replace(base, **overrides) if overrides else base
