"""Experiment harness: step-size sweeps, convergence-rate studies and
coefficient reports. The CLI in :mod:`srkcd.cli` is a thin layer over
:func:`run_sweep`, :func:`run_converge` and :func:`coeffs_report`.
"""

from __future__ import annotations

import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from functools import lru_cache
from pathlib import Path
from typing import Any

import numpy as np

from .chebyshev import DEFAULT_EPSILON, rkc_coefficients
from .optimizer import OptimizerConfig, StepSchedule, run
from .problems import (
    BatchSampler,
    GradientOracle,
    describe,
    estimate_moment_constants,
    make_problem,
    standard_normal,
)
from .tableau import (
    max_step_bound,
    q_function,
    q_step_limit,
    real_stability_boundary,
    tableau_from_rkc,
    validate_assumption_rk,
)

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "SweepConfig",
    "SweepResult",
    "ConvergeConfig",
    "ConvergeReport",
    "run_sweep",
    "run_converge",
    "coeffs_report",
    "cell_seed",
]

METHOD_ALIASES = {
    "sgd": "sgd",
    "srkcd": "srkcd_recursion",
    "srkcd_recursion": "srkcd_recursion",
    "srkcd-momentum": "srkcd_momentum",
    "srkcd_momentum": "srkcd_momentum",
    "rk": "rk_tableau",
    "rk_tableau": "rk_tableau",
}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def _version() -> str:
    from . import __version__

    return __version__


def canonical_method(name: str) -> str:
    try:
        return METHOD_ALIASES[name]
    except KeyError:
        raise ConfigError(f"unknown method {name!r}; expected one of {sorted(METHOD_ALIASES)}") from None


def _check_method_params(method: str, stages: int, epsilon: float, batch_size: int | None) -> None:
    if batch_size is not None and batch_size < 1:
        raise ConfigError("batch size must be >= 1")
    if method == "sgd":
        return
    try:
        rkc_coefficients(stages, epsilon)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cell_seed(base_seed: int, alpha_index: int, repeat_index: int) -> int:
    """Per-cell run seed; independent of how cells are scheduled."""
    ss = np.random.SeedSequence([int(base_seed), int(alpha_index), int(repeat_index)])
    return int(ss.generate_state(1, np.uint64)[0])


def resolve_w1(value: Any, dim: int) -> np.ndarray:
    """``"ones"``, ``"zeros"``, a number (constant vector) or an explicit list."""
    if isinstance(value, str):
        if value == "ones":
            return np.ones(dim)
        if value == "zeros":
            return np.zeros(dim)
        try:
            return np.full(dim, float(value))
        except ValueError:
            raise ConfigError(f"cannot interpret w1 value {value!r}") from None
    if isinstance(value, (int, float)):
        return np.full(dim, float(value))
    w = np.asarray(value, dtype=np.float64)
    if w.shape != (dim,):
        raise ConfigError(f"w1 has {w.size} entries, problem dimension is {dim}")
    return w


@lru_cache(maxsize=8)
def _cached_problem(kind: str, n: int, dim: int, seed: int) -> GradientOracle:
    return make_problem(kind, n, dim, seed)


def _problem(kind: str, n: int, dim: int, seed: int) -> GradientOracle:
    try:
        return _cached_problem(kind, int(n), int(dim), int(seed))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _method_tableau(method: str, s: int, epsilon: float):
    if method == "sgd":
        return tableau_from_rkc(rkc_coefficients(1, 0.0))
    return tableau_from_rkc(rkc_coefficients(s, epsilon))


def stability_limit(method: str, s: int, epsilon: float, L: float) -> float:
    """b_R / L (2 / L for SGD)."""
    if method == "sgd":
        return 2.0 / L
    return real_stability_boundary(rkc_coefficients(s, epsilon)) / L


# ---------------------------------------------------------------------------
# sweep


@dataclass
class SweepConfig:
    """Step-size sweep. ``alphas`` wins over ``alpha_grid``, whose entries
    are ``(lo, hi, count)`` as fractions of the stability limit; ``lo = 0``
    means the open interval ``(0, hi]``. ``iterations`` wins over ``epochs``.
    ``batch_size=None`` is full batch (GD)."""

    method: str = "sgd"
    stages: int = 1
    epsilon: float = DEFAULT_EPSILON
    problem: str = "quadratic"
    n: int = 1000
    dim: int = 50
    data_seed: int = 0
    batch_size: int | None = 32
    sampling: str = "epoch_shuffle"
    alphas: list[float] | None = None
    alpha_grid: tuple[float, float, int] | None = (0.0, 1.0, 20)
    epochs: float | None = 3
    iterations: int | None = None
    repeats: int = 1
    seed: int = 0
    w1: Any = "ones"
    divergence_threshold: float = 1e12
    best_so_far: bool = False
    workers: int = 1
    out: str | None = None

    def __post_init__(self) -> None:
        self.method = canonical_method(self.method)
        if self.repeats is None or self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats!r}")
        if self.alphas is None and self.alpha_grid is None:
            raise ConfigError("need either explicit step sizes or a step grid")
        if self.iterations is None and self.epochs is None:
            raise ConfigError("need either iterations or epochs")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.alpha_grid is not None:
            self.alpha_grid = tuple(self.alpha_grid)
        _check_method_params(self.method, self.stages, self.epsilon, self.batch_size)

    def optimizer_config(self, alpha: float, iterations: int) -> OptimizerConfig:
        return OptimizerConfig(
            method=self.method,
            s=self.stages,
            epsilon=self.epsilon,
            schedule=StepSchedule.constant(alpha),
            max_iterations=iterations,
            divergence_threshold=self.divergence_threshold,
            record_every=1 if self.best_so_far else iterations + 1,
            batch_size=self.batch_size,
            sampling=self.sampling,
        )


def step_grid(config: SweepConfig, limit: float) -> np.ndarray:
    if config.alphas is not None:
        grid = np.asarray(config.alphas, dtype=np.float64)
    else:
        lo, hi, count = config.alpha_grid
        count = int(count)
        if count < 1 or not hi > lo or lo < 0:
            raise ConfigError(f"bad step grid {config.alpha_grid!r}")
        if lo == 0:
            grid = limit * np.linspace(0.0, hi, count + 1)[1:]
        else:
            grid = limit * np.linspace(lo, hi, count)
    if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0) or np.any(np.diff(grid) <= 0):
        raise ConfigError("step sizes must be strictly positive and increasing")
    return grid


def _iterations(config: SweepConfig, problem: GradientOracle) -> int:
    if config.iterations is not None:
        if config.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        return int(config.iterations)
    per_epoch = BatchSampler(problem.num_samples, config.batch_size or problem.num_samples).batches_per_epoch
    return int(round(config.epochs * per_epoch))


def _sweep_cell(args):
    config, alpha, iterations, ai, ri = args
    problem = _problem(config.problem, config.n, config.dim, config.data_seed)
    w1 = resolve_w1(config.w1, problem.dim)
    rec = run(config.optimizer_config(alpha, iterations), problem, w1, cell_seed(config.seed, ai, ri))
    return ai, ri, rec.final_loss, rec.diverged, rec.best_loss


@dataclass
class SweepResult:
    """Per step size and repeat: final loss (clipped at the divergence
    threshold for diverged runs), divergence flag and best recorded loss."""

    alphas: np.ndarray
    final: np.ndarray
    diverged: np.ndarray
    best: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def mean_final(self) -> np.ndarray:
        return self.final.mean(axis=1)

    @property
    def n_diverged(self) -> np.ndarray:
        return self.diverged.sum(axis=1)

    def csv_text(self, best_so_far: bool = False) -> str:
        reps = self.final.shape[1]
        header = ["alpha", "mean_final_loss", "n_diverged"] + [f"rep_{i}" for i in range(reps)]
        if best_so_far:
            header.append("mean_best_loss")
        buf = io.StringIO()
        buf.write(",".join(header) + "\n")
        for i, a in enumerate(self.alphas):
            row = [repr(float(a)), repr(float(self.mean_final[i])), str(int(self.n_diverged[i]))]
            row += [repr(float(v)) for v in self.final[i]]
            if best_so_far:
                row.append(repr(float(self.best[i].mean())))
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    def write(self, path: str | Path, best_so_far: bool = False) -> tuple[Path, Path]:
        """Write the CSV and a JSON metadata sidecar next to it."""
        path = Path(path)
        sidecar = path.with_suffix(".json")
        path.write_text(self.csv_text(best_so_far))
        sidecar.write_text(json.dumps(self.metadata, indent=2, default=_json_default) + "\n")
        return path, sidecar


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def run_sweep(config: SweepConfig) -> SweepResult:
    """Run ``repeats`` seeded optimizations per step size and aggregate."""
    problem = _problem(config.problem, config.n, config.dim, config.data_seed)
    L = problem.lipschitz_L
    limit = stability_limit(config.method, config.stages, config.epsilon, L)
    grid = step_grid(config, limit)
    iterations = _iterations(config, problem)
    resolve_w1(config.w1, problem.dim)  # fail early on a bad start point

    n_a, reps = grid.size, config.repeats
    final = np.empty((n_a, reps))
    diverged = np.zeros((n_a, reps), dtype=bool)
    best = np.empty((n_a, reps))
    cells = [(config, float(a), iterations, ai, ri) for ai, a in enumerate(grid) for ri in range(reps)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_sweep_cell, cells, chunksize=max(1, len(cells) // (4 * config.workers))))
    else:
        results = [_sweep_cell(c) for c in cells]
    for ai, ri, f, dv, b in results:
        diverged[ai, ri] = dv
        final[ai, ri] = config.divergence_threshold if dv or not math.isfinite(f) else min(f, config.divergence_threshold)
        best[ai, ri] = min(b, config.divergence_threshold)

    meta = {
        "problem": describe(problem),
        "stability_limit": limit,
        "b_R": limit * L,
        "iterations": iterations,
        "config": asdict(config),
        "version": _version(),
    }
    return SweepResult(grid, final, diverged, best, meta)


# ---------------------------------------------------------------------------
# convergence study


@dataclass
class ConvergeConfig:
    """Convergence-rate study with ``alpha_k = beta/(k + gamma)``.

    Missing ``beta``/``gamma`` are filled in from the problem: for the
    convex quadratic ``beta = 2/(c mu)`` and ``gamma`` so that ``alpha_1`` is
    just inside the Q-condition; for other problems ``gamma = 100`` and
    ``beta`` from the same condition. ``alpha`` switches to a constant step.
    """

    method: str = "srkcd"
    stages: int = 5
    epsilon: float = DEFAULT_EPSILON
    problem: str = "quadratic"
    n: int = 1000
    dim: int = 50
    data_seed: int = 0
    batch_size: int | None = 32
    sampling: str = "epoch_shuffle"
    beta: float | None = None
    gamma: float | None = None
    alpha: float | None = None
    iterations: int = 10_000
    repeats: int = 20
    seed: int = 0
    w1: Any = "ones"
    points: int = 60
    fit_from: int = 100
    q_margin: float = 0.99
    divergence_threshold: float = 1e12
    workers: int = 1
    out: str | None = None

    def __post_init__(self) -> None:
        self.method = canonical_method(self.method)
        if self.repeats is None or self.repeats < 1:
            raise ConfigError(f"repeats must be >= 1, got {self.repeats!r}")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.points < 2:
            raise ConfigError("points must be >= 2")
        _check_method_params(self.method, self.stages, self.epsilon, self.batch_size)


@dataclass
class ConvergeReport:
    k: np.ndarray
    mean_error: np.ndarray | None
    mean_grad_norm: np.ndarray
    running_min_grad_norm: np.ndarray
    slope: float | None
    n_diverged: int
    schedule: dict
    q_check: dict
    warnings: list[str]
    metadata: dict

    def to_dict(self) -> dict:
        return {
            "k": self.k.tolist(),
            "mean_error": None if self.mean_error is None else self.mean_error.tolist(),
            "mean_grad_norm": self.mean_grad_norm.tolist(),
            "running_min_grad_norm": self.running_min_grad_norm.tolist(),
            "slope": self.slope,
            "grad_norm_ratio": float(self.running_min_grad_norm[-1] / self.running_min_grad_norm[0])
            if self.running_min_grad_norm[0] > 0 else None,
            "n_diverged": self.n_diverged,
            "schedule": self.schedule,
            "q_check": self.q_check,
            "warnings": self.warnings,
            "metadata": self.metadata,
        }

    def csv_text(self) -> str:
        buf = io.StringIO()
        buf.write("k,mean_error,mean_grad_norm,running_min_grad_norm\n")
        for i, k in enumerate(self.k):
            err = "" if self.mean_error is None else repr(float(self.mean_error[i]))
            buf.write(f"{int(k)},{err},{float(self.mean_grad_norm[i])!r},{float(self.running_min_grad_norm[i])!r}\n")
        return buf.getvalue()

    def write(self, path: str | Path) -> tuple[Path, Path]:
        path = Path(path)
        series = path.with_suffix(".csv")
        path.write_text(json.dumps(self.to_dict(), indent=2, default=_json_default) + "\n")
        series.write_text(self.csv_text())
        return path, series


def log_points(K: int, count: int) -> np.ndarray:
    """Roughly log-spaced iterate indices in [1, K+1]."""
    return np.unique(np.round(np.logspace(0.0, math.log10(K + 1), count)).astype(np.int64))


def _converge_cell(args):
    config, opt, ri = args
    problem = _problem(config.problem, config.n, config.dim, config.data_seed)
    w1 = resolve_w1(config.w1, problem.dim)
    rec = run(opt, problem, w1, cell_seed(config.seed, 0, ri))
    return rec.k, rec.losses, rec.grad_norms, rec.diverged


def run_converge(config: ConvergeConfig) -> ConvergeReport:
    """Average F(w_k) - F(w*) (convex) and ||grad F(w_k)||^2 over seeds.

    The tail slope is a least-squares fit of log mean error against log k
    for ``fit_from <= k <= iterations``.
    """
    problem = _problem(config.problem, config.n, config.dim, config.data_seed)
    L, c = problem.lipschitz_L, problem.convexity_c
    w1 = resolve_w1(config.w1, problem.dim)
    tableau = _method_tableau(config.method, config.stages, config.epsilon)
    warnings: list[str] = []

    # moment constants at w1 and a few random probes
    rng = np.random.Generator(np.random.PCG64(config.seed))
    probes = [w1] + [w1 + standard_normal(rng, problem.dim) for _ in range(8)]
    sampler = BatchSampler(problem.num_samples, config.batch_size or problem.num_samples, config.sampling, rng)
    moments = estimate_moment_constants(problem, sampler, probes)
    mu = moments.mu
    M_G = max(moments.M_G, mu * mu)
    alpha_q = q_step_limit(tableau, L, mu, M_G)

    if config.alpha is not None:
        schedule = StepSchedule.constant(config.alpha)
    else:
        beta, gamma = config.beta, config.gamma
        target = config.q_margin * alpha_q
        if beta is None:
            if c is not None:
                beta = 2.0 / (c * mu)
            else:
                gamma = 100.0 if gamma is None else gamma
                beta = target * (1.0 + gamma)
        if gamma is None:
            gamma = beta / target - 1.0 if beta / target > 1.0 else 1.0
        schedule = StepSchedule.harmonic(beta, gamma)
        if c is not None and not beta > 1.0 / (c * mu):
            msg = f"beta = {beta:.6g} violates beta > 1/(c mu) = {1.0 / (c * mu):.6g}"
            warnings.append(msg)
            log.warning(msg)

    alpha1 = schedule.alpha_at(1)
    q_check: dict[str, Any] = {"alpha_1": alpha1, "q_step_limit": alpha_q, "mu": mu, "M_G": M_G, "L": L}
    if alpha1 > 0:
        q1 = q_function(tableau, alpha1, L, mu, M_G)
        q_check.update(q_alpha_1=q1, passed=bool(q1 < -0.5 * alpha1 * mu))
        if not q_check["passed"]:
            msg = f"alpha_1 = {alpha1:.6g} fails Q(alpha_1) < -alpha_1 mu / 2"
            warnings.append(msg)
            log.warning(msg)
    else:
        q_check.update(q_alpha_1=None, passed=False)

    K = config.iterations
    ks = log_points(K, config.points)
    opt = OptimizerConfig(
        method=config.method, s=config.stages, epsilon=config.epsilon, schedule=schedule,
        max_iterations=K, divergence_threshold=config.divergence_threshold,
        record_every=K + 2, record_at=tuple(int(k) for k in ks),
        batch_size=config.batch_size, sampling=config.sampling,
    )
    cells = [(config, opt, ri) for ri in range(config.repeats)]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_converge_cell, cells))
    else:
        results = [_converge_cell(cell) for cell in cells]

    n_div = sum(int(r[3]) for r in results)
    losses = np.full((len(results), ks.size), np.nan)
    grads = np.full((len(results), ks.size), np.nan)
    for i, (rk, rl, rg, _) in enumerate(results):
        pos = np.searchsorted(ks, rk)
        losses[i, pos] = rl
        grads[i, pos] = rg
    mean_grad = np.nanmean(grads, axis=0) if n_div else grads.mean(axis=0)
    running_min = np.fmin.accumulate(mean_grad)

    mean_error = slope = None
    if c is not None:
        # every built-in convex problem has w* = 0 and F(w*) = 0
        mean_error = np.nanmean(losses, axis=0) if n_div else losses.mean(axis=0)
        sel = (ks >= config.fit_from) & (ks <= K) & (mean_error > 0) & np.isfinite(mean_error)
        if sel.sum() >= 2:
            slope = float(np.polyfit(np.log(ks[sel]), np.log(mean_error[sel]), 1)[0])

    meta = {"problem": describe(problem), "moments": asdict(moments), "config": asdict(config),
            "version": _version()}
    return ConvergeReport(ks, mean_error, mean_grad, running_min, slope, n_div,
                          asdict(schedule), q_check, warnings, meta)


# ---------------------------------------------------------------------------
# coefficients


def coeffs_report(s: int, epsilon: float = DEFAULT_EPSILON, L: float = 1.0, mu: float = 1.0,
                  M_G: float = 1.0) -> dict:
    """Coefficients, tableau, validation, b_R and step bounds for one (s, epsilon)."""
    try:
        coeffs = rkc_coefficients(s, epsilon)
        bound = max_step_bound(L, mu, M_G)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    t = tableau_from_rkc(coeffs)
    report = validate_assumption_rk(t)
    return {
        "s": coeffs.s,
        "epsilon": coeffs.epsilon,
        "omega0": coeffs.omega0,
        "omega1": coeffs.omega1,
        "mu_tilde": coeffs.mu_tilde.tolist(),
        "nu": coeffs.nu.tolist(),
        "a": t.a.tolist(),
        "b": t.b.tolist(),
        "b_R": real_stability_boundary(coeffs),
        "report": report.to_dict(),
        "L": L,
        "mu": mu,
        "M_G": M_G,
        "max_step_bound": bound,
        "q_step_limit": q_step_limit(t, L, mu, M_G) if M_G >= mu * mu else None,
    }


def config_field_names(cls) -> set[str]:
    return {f.name for f in fields(cls)}
