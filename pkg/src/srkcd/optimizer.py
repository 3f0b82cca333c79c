"""Stochastic RKC descent and generic stochastic Runge-Kutta steppers.

Every stepper takes ``g``, a gradient estimator already bound to one batch
realization, so all stages of one outer step see the same data.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .chebyshev import DEFAULT_EPSILON, RkcCoefficients, rkc_coefficients
from .problems import BatchSampler, GradientOracle
from .tableau import ButcherTableau, tableau_from_rkc

__all__ = [
    "DivergenceError",
    "StepSchedule",
    "OptimizerConfig",
    "RunRecord",
    "srkcd_step",
    "rk_step",
    "momentum_step",
    "run",
]

Gradient = Callable[[np.ndarray], np.ndarray]

METHODS = ("srkcd_recursion", "rk_tableau", "srkcd_momentum", "sgd")


class DivergenceError(FloatingPointError):
    """A stage produced a non-finite value."""


def _checked(x: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(x)):
        raise DivergenceError("non-finite stage value")
    return x


def srkcd_step(w: np.ndarray, coeffs: RkcCoefficients, alpha: float, g: Gradient) -> np.ndarray:
    """One SRKCD step through the three-term recursion.

    w_{k,1} = w_k - mu~_1 alpha g(w_k)
    w_{k,j} = (1 - nu_j) w_{k,j-1} + nu_j w_{k,j-2} - mu~_j alpha g(w_{k,j-1})

    Raises :class:`DivergenceError` if a stage is not finite.
    """
    mu, nu = coeffs.mu_tilde, coeffs.nu
    with np.errstate(over="ignore", invalid="ignore"):
        prev = w
        cur = _checked(w - mu[0] * alpha * g(w))
        for j in range(1, coeffs.s):
            prev, cur = cur, _checked((1.0 - nu[j]) * cur + nu[j] * prev - mu[j] * alpha * g(cur))
    return cur


def rk_step(w: np.ndarray, t: ButcherTableau, alpha: float, g: Gradient) -> np.ndarray:
    """One step of a general explicit RK method in tableau form.

    Stage gradients are evaluated once each and reused by later stages.
    """
    grads: list[np.ndarray] = []
    stage = w
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(t.s):
            grads.append(g(stage))
            acc = t.a[i, 0] * grads[0]
            for j in range(1, i + 1):
                acc = acc + t.a[i, j] * grads[j]
            stage = _checked(w - alpha * acc)
    return stage


def momentum_step(w: np.ndarray, coeffs: RkcCoefficients, alpha: float, g: Gradient) -> np.ndarray:
    """SRKCD written as SGD with a stage-dependent momentum term.

    v_{k,j} = eta_j v_{k,j-1} - l_j g(w_{k,j-1}),  w_{k,j} = w_{k,j-1} + v_{k,j}
    with eta_1 = 0, eta_j = -nu_j and l_j = mu~_j alpha. The velocity starts
    from zero at every outer step.
    """
    mu, nu = coeffs.mu_tilde, coeffs.nu
    v = np.zeros_like(w, dtype=np.float64)
    stage = w
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(coeffs.s):
            eta = 0.0 if j == 0 else -nu[j]
            v = eta * v - mu[j] * alpha * g(stage)
            stage = _checked(stage + v)
    return stage


@dataclass(frozen=True)
class StepSchedule:
    """Constant ``alpha`` or harmonic ``beta / (k + gamma)`` for k = 1, 2, ..."""

    kind: str = "constant"
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 1.0

    def __post_init__(self) -> None:
        if self.kind == "constant":
            if not (math.isfinite(self.alpha) and self.alpha >= 0):
                raise ValueError(f"constant step size must be finite and >= 0, got {self.alpha!r}")
        elif self.kind == "harmonic":
            if not (math.isfinite(self.beta) and self.beta >= 0):
                raise ValueError(f"beta must be finite and >= 0, got {self.beta!r}")
            if not (math.isfinite(self.gamma) and self.gamma > 0):
                raise ValueError(f"gamma must be finite and > 0, got {self.gamma!r}")
        else:
            raise ValueError(f"unknown schedule kind {self.kind!r}")

    @classmethod
    def constant(cls, alpha: float) -> "StepSchedule":
        return cls("constant", alpha=float(alpha))

    @classmethod
    def harmonic(cls, beta: float, gamma: float) -> "StepSchedule":
        return cls("harmonic", beta=float(beta), gamma=float(gamma))

    def alpha_at(self, k: int) -> float:
        if k < 1:
            raise ValueError(f"iterations are counted from 1, got k={k!r}")
        if self.kind == "constant":
            return self.alpha
        return self.beta / (k + self.gamma)

    def alphas(self, K: int) -> np.ndarray:
        """Step sizes for k = 1..K."""
        if self.kind == "constant":
            return np.full(K, self.alpha)
        return self.beta / (np.arange(1, K + 1) + self.gamma)


@dataclass(frozen=True)
class OptimizerConfig:
    """What to run. ``batch_size=None`` means full-batch gradients."""

    method: str = "srkcd_recursion"
    s: int = 1
    epsilon: float = DEFAULT_EPSILON
    schedule: StepSchedule = field(default_factory=StepSchedule)
    max_iterations: int = 100
    divergence_threshold: float = 1e12
    record_every: int = 1
    record_at: tuple[int, ...] = ()
    batch_size: int | None = None
    sampling: str = "epoch_shuffle"
    tableau: ButcherTableau | None = None

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if self.method == "sgd":
            object.__setattr__(self, "s", 1)
            object.__setattr__(self, "epsilon", 0.0)
        if self.tableau is not None:
            if self.method != "rk_tableau":
                raise ValueError("an explicit tableau is only used by method 'rk_tableau'")
            object.__setattr__(self, "s", self.tableau.s)
        if int(self.s) != self.s or self.s < 1:
            raise ValueError(f"stage count must be a positive integer, got {self.s!r}")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if not self.divergence_threshold > 0:
            raise ValueError("divergence_threshold must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def coefficients(self) -> RkcCoefficients:
        return rkc_coefficients(self.s, self.epsilon)

    def resolved_tableau(self) -> ButcherTableau:
        return self.tableau if self.tableau is not None else tableau_from_rkc(self.coefficients)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["schedule"] = asdict(self.schedule)
        out["tableau"] = None if self.tableau is None else self.tableau.rows()
        out["record_at"] = list(self.record_at)
        return out


@dataclass(eq=False)
class RunRecord:
    """Trajectory summary. ``losses[i]`` and ``grad_norms[i]`` are F and
    ||grad F||^2 (full data) at iterate ``k[i]``; w_1 is the start point."""

    k: np.ndarray
    losses: np.ndarray
    grad_norms: np.ndarray
    diverged: bool
    final_w: np.ndarray
    seed: int
    iterations: int
    gradient_evaluations: int
    config: OptimizerConfig | None = None

    @property
    def final_loss(self) -> float:
        return float(self.losses[-1])

    @property
    def best_loss(self) -> float:
        finite = self.losses[np.isfinite(self.losses)]
        return float(finite.min()) if finite.size else math.inf

    def to_dict(self) -> dict:
        return {
            "k": self.k.tolist(),
            "losses": self.losses.tolist(),
            "grad_norms": self.grad_norms.tolist(),
            "diverged": self.diverged,
            "final_w": self.final_w.tolist(),
            "seed": self.seed,
            "iterations": self.iterations,
            "gradient_evaluations": self.gradient_evaluations,
            "config": None if self.config is None else self.config.to_dict(),
        }


def _record_mask(config: OptimizerConfig) -> np.ndarray:
    K = config.max_iterations
    mask = np.zeros(K + 2, dtype=np.bool_)
    mask[1:K + 2:config.record_every] = True
    mask[K + 1] = True
    for k in config.record_at:
        if 1 <= k <= K + 1:
            mask[k] = True
    return mask


def _method_stepper(config: OptimizerConfig) -> Callable[[np.ndarray, float, Gradient], np.ndarray]:
    if config.method == "rk_tableau":
        t = config.resolved_tableau()
        return lambda w, a, g: rk_step(w, t, a, g)
    coeffs = config.coefficients
    if config.method == "srkcd_momentum":
        return lambda w, a, g: momentum_step(w, coeffs, a, g)
    return lambda w, a, g: srkcd_step(w, coeffs, a, g)


def run(config: OptimizerConfig, problem: GradientOracle, w1: Sequence[float] | np.ndarray,
        seed: int, backend: str | None = None) -> RunRecord:
    """Run one optimization and record full-data diagnostics.

    One batch is drawn per outer iteration from a sampler owning the run's
    only generator, ``np.random.default_rng(seed)``. F and ||grad F||^2 are
    recorded at k = 1, every ``record_every`` iterations, at ``record_at``
    and at the final iterate. The run stops early, flagged diverged, when a
    stage is non-finite or a recorded loss exceeds the threshold.

    ``backend`` picks the compiled loop (``"numba"``) or the Python loop
    (``"numpy"``); the default comes from ``SRKCD_BACKEND``. Problems that
    do not expose kernel data always use the Python loop.
    """
    w1 = np.array(w1, dtype=np.float64)
    if w1.shape != (problem.dim,):
        raise ValueError(f"initial point has shape {w1.shape}, problem dimension is {problem.dim}")
    backend = _kernels.resolve_backend(backend)
    K = config.max_iterations
    rng = np.random.default_rng(seed)
    sampler = BatchSampler(problem.num_samples, config.batch_size or problem.num_samples,
                           config.sampling, rng)
    alphas = config.schedule.alphas(K)
    mask = _record_mask(config)
    kernel = problem.kernel_data() if backend == "numba" else None

    if kernel is not None:
        code, M, v = kernel
        flat, ptr = sampler.draw(K)
        if config.method == "rk_tableau":
            method, A = _kernels.TABLEAU, np.ascontiguousarray(config.resolved_tableau().a)
            mu = np.ones(A.shape[0])
            nu = np.zeros(A.shape[0])
        else:
            method = _kernels.MOMENTUM if config.method == "srkcd_momentum" else _kernels.RECURSION
            coeffs = config.coefficients
            mu, nu = np.asarray(coeffs.mu_tilde), np.asarray(coeffs.nu)
            A = np.zeros((1, 1))
        w, rk, rF, rG, iters, diverged = _kernels.run_loop(
            code, M, v, w1, method, mu, nu, A, alphas, flat, ptr, mask,
            float(config.divergence_threshold))
        ks, Fs, Gs = rk, rF, rG
    else:
        w, ks, Fs, Gs, iters, diverged = _python_loop(config, problem, w1, sampler, alphas, mask)

    return RunRecord(
        k=np.asarray(ks, dtype=np.int64),
        losses=np.asarray(Fs, dtype=np.float64),
        grad_norms=np.asarray(Gs, dtype=np.float64),
        diverged=bool(diverged),
        final_w=np.asarray(w),
        seed=int(seed),
        iterations=int(iters),
        gradient_evaluations=int(iters) * config.s,
        config=config,
    )


def _python_loop(config, problem, w1, sampler, alphas, mask):
    step = _method_stepper(config)
    threshold = config.divergence_threshold
    K = config.max_iterations
    ks: list[int] = []
    Fs: list[float] = []
    Gs: list[float] = []

    def record(k: int, w: np.ndarray) -> bool:
        with np.errstate(over="ignore", invalid="ignore"):
            F = problem.value(w)
            grad = problem.full_gradient(w)
            G2 = float(grad @ grad)
        ks.append(k)
        Fs.append(F)
        Gs.append(G2)
        return not (math.isfinite(F) and math.isfinite(G2)) or F > threshold

    w = w1.copy()
    iters = 0
    diverged = False
    last = 0
    for k in range(1, K + 2):
        if k > 1:
            batch = sampler.next_batch()
            try:
                w = step(w, alphas[k - 2], lambda u: problem.batch_gradient(batch, u))
            except DivergenceError:
                diverged = True
                break
            iters = k - 1
        if mask[k]:
            last = k
            if record(k, w):
                diverged = True
                break
    if last != iters + 1 and record(iters + 1, w):
        diverged = True
    return w, ks, Fs, Gs, iters, diverged
