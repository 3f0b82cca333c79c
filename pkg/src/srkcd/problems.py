"""Finite-sum objectives F(w) = (1/N) sum_i f(i, w) and mini-batch sampling.

Two concrete problems are provided:

* :class:`QuadraticProblem`: the diagonal quadratic
  ``F(w) = (1/N) sum_i sum_j (x^i_j)^2 w_j^2 / d`` with ``grad F(w) = lam * w``.
* :class:`NonconvexProblem`: robust regression
  ``f(i, w) = log(1 + (x^i . w - y_i)^2)``, smooth, bounded below by 0 and
  not convex.

Random data are built from PCG64 uniform doubles turned into normals with
the Box-Muller transform, so a ``(seed, N, d)`` triple always yields the
same dataset regardless of NumPy's choice of normal sampler.
"""

from __future__ import annotations

import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import numpy.typing as npt

__all__ = [
    "GradientOracle",
    "QuadraticProblem",
    "NonconvexProblem",
    "BatchSampler",
    "MomentEstimates",
    "standard_normal",
    "generate_quadratic",
    "generate_nonconvex",
    "quadratic_optimal_gd_step",
    "estimate_moment_constants",
    "save_dataset",
    "load_dataset",
]

# kernel problem codes, shared with the compiled backend
QUADRATIC = 0
NONCONVEX = 1


def standard_normal(rng: np.random.Generator, shape: int | tuple[int, ...]) -> np.ndarray:
    """Box-Muller normals from the generator's uniform doubles."""
    size = int(np.prod(shape))
    m = (size + 1) // 2
    u1 = 1.0 - rng.random(m)  # (0, 1], keeps log finite
    u2 = rng.random(m)
    r = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * m)
    z[0::2] = r * np.cos(2.0 * np.pi * u2)
    z[1::2] = r * np.sin(2.0 * np.pi * u2)
    return z[:size].reshape(shape)


class GradientOracle(ABC):
    """Finite-sum objective with exact and mini-batch gradients."""

    kind: str = ""

    @property
    @abstractmethod
    def dim(self) -> int: ...

    @property
    @abstractmethod
    def num_samples(self) -> int: ...

    @abstractmethod
    def value(self, w: np.ndarray) -> float: ...

    @abstractmethod
    def full_gradient(self, w: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def batch_gradient(self, batch: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Mean of the per-sample gradients over the index set ``batch``."""

    @property
    def lipschitz_L(self) -> float | None:
        return None

    @property
    def convexity_c(self) -> float | None:
        return None

    def kernel_data(self) -> tuple[int, np.ndarray, np.ndarray] | None:
        """``(code, matrix, vector)`` for the compiled backend, or None."""
        return None


@dataclass(frozen=True, eq=False)
class QuadraticProblem(GradientOracle):
    """Diagonal quadratic built from an ``N x d`` sample matrix.

    ``lam[j] = 2/(N d) sum_i (x^i_j)^2`` is both the Hessian diagonal and
    its spectrum; the minimizer is ``w* = 0`` with ``F(w*) = 0``.
    """

    data: np.ndarray

    kind = "quadratic"

    def __post_init__(self) -> None:
        x = np.array(self.data, dtype=np.float64)
        if x.ndim != 2 or x.size == 0:
            raise ValueError(f"data must be a non-empty N x d matrix, got shape {x.shape}")
        x.setflags(write=False)
        object.__setattr__(self, "data", x)
        # per-sample curvature: grad f(i, w) = curv[i] * w
        curv = 2.0 * x**2 / x.shape[1]
        curv.setflags(write=False)
        object.__setattr__(self, "_curv", curv)
        lam = curv.mean(axis=0)
        lam.setflags(write=False)
        object.__setattr__(self, "lam", lam)

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def num_samples(self) -> int:
        return self.data.shape[0]

    @property
    def lambda_min(self) -> float:
        return float(self.lam.min())

    @property
    def lambda_max(self) -> float:
        return float(self.lam.max())

    @property
    def lipschitz_L(self) -> float:
        return self.lambda_max

    @property
    def convexity_c(self) -> float:
        return self.lambda_min

    def value(self, w: np.ndarray) -> float:
        return float(0.5 * np.dot(self.lam, w * w))

    def full_gradient(self, w: np.ndarray) -> np.ndarray:
        return self.lam * w

    def batch_gradient(self, batch: np.ndarray, w: np.ndarray) -> np.ndarray:
        return self._curv[batch].mean(axis=0) * w

    def kernel_data(self) -> tuple[int, np.ndarray, np.ndarray]:
        return QUADRATIC, self._curv, self.lam


@dataclass(frozen=True, eq=False)
class NonconvexProblem(GradientOracle):
    """Robust regression loss ``mean_i log(1 + (x^i . w - y_i)^2)``."""

    X: np.ndarray
    y: np.ndarray

    kind = "nonconvex"

    def __post_init__(self) -> None:
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.float64)
        if X.ndim != 2 or y.shape != (X.shape[0],) or X.size == 0:
            raise ValueError(f"need X of shape (N, d) and y of shape (N,), got {X.shape}, {y.shape}")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def num_samples(self) -> int:
        return self.X.shape[0]

    @property
    def lipschitz_L(self) -> float:
        # |d^2/dr^2 log(1+r^2)| <= 2, so the Hessian is bounded by 2 X^T X / N
        gram = self.X.T @ self.X / self.num_samples
        return float(2.0 * np.linalg.eigvalsh(gram)[-1])

    def residuals(self, w: np.ndarray) -> np.ndarray:
        return self.X @ w - self.y

    def value(self, w: np.ndarray) -> float:
        return float(np.mean(np.log1p(self.residuals(w) ** 2)))

    def full_gradient(self, w: np.ndarray) -> np.ndarray:
        r = self.residuals(w)
        return self.X.T @ (2.0 * r / (1.0 + r * r)) / self.num_samples

    def batch_gradient(self, batch: np.ndarray, w: np.ndarray) -> np.ndarray:
        Xb = self.X[batch]
        r = Xb @ w - self.y[batch]
        return Xb.T @ (2.0 * r / (1.0 + r * r)) / len(batch)

    def kernel_data(self) -> tuple[int, np.ndarray, np.ndarray]:
        return NONCONVEX, self.X, self.y


def generate_quadratic(N: int, d: int, seed: int) -> QuadraticProblem:
    """Sample ``x^i_j ~ Normal(1 + 10 j/d, 1)`` with coordinate index j = 0..d-1."""
    if N < 1 or d < 1:
        raise ValueError(f"need N >= 1 and d >= 1, got N={N}, d={d}")
    rng = np.random.Generator(np.random.PCG64(seed))
    means = 1.0 + 10.0 * np.arange(d) / d
    return QuadraticProblem(means + standard_normal(rng, (N, d)))


def generate_nonconvex(N: int, d: int, seed: int) -> NonconvexProblem:
    """Standard-normal features and targets for the robust regression loss."""
    if N < 1 or d < 1:
        raise ValueError(f"need N >= 1 and d >= 1, got N={N}, d={d}")
    rng = np.random.Generator(np.random.PCG64(seed))
    X = standard_normal(rng, (N, d))
    y = standard_normal(rng, N)
    return NonconvexProblem(X, y)


def quadratic_optimal_gd_step(p: QuadraticProblem | npt.ArrayLike) -> float:
    """2 / (lam_min + lam_max); accepts a problem or its eigenvalues."""
    lam = p.lam if isinstance(p, QuadraticProblem) else np.asarray(p, dtype=np.float64)
    return float(2.0 / (lam.min() + lam.max()))


class BatchSampler:
    """Draws mini-batch index sets from ``range(N)``.

    ``epoch_shuffle`` walks a fresh permutation per epoch in chunks of
    ``batch_size``; the last, shorter chunk (``N mod batch_size``) is kept.
    ``iid_with_replacement`` draws each batch independently. With
    ``batch_size >= N`` every batch is the full index range in order and
    the generator is never touched.
    """

    MODES = ("epoch_shuffle", "iid_with_replacement")

    def __init__(self, N: int, batch_size: int, mode: str = "epoch_shuffle",
                 rng: np.random.Generator | int | None = None):
        if N < 1 or batch_size < 1:
            raise ValueError(f"need N >= 1 and batch_size >= 1, got {N}, {batch_size}")
        if mode not in self.MODES:
            raise ValueError(f"unknown sampling mode {mode!r}; expected one of {self.MODES}")
        self.N = int(N)
        self.batch_size = int(min(batch_size, N))
        self.mode = mode
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self._perm: np.ndarray | None = None
        self._pos = 0
        self._full = np.arange(self.N)

    @property
    def full_batch(self) -> bool:
        return self.batch_size >= self.N

    @property
    def batches_per_epoch(self) -> int:
        return -(-self.N // self.batch_size)

    def next_batch(self) -> np.ndarray:
        if self.full_batch:
            return self._full
        if self.mode == "iid_with_replacement":
            return self.rng.integers(0, self.N, size=self.batch_size)
        if self._perm is None or self._pos >= self.N:
            self._perm = self.rng.permutation(self.N)
            self._pos = 0
        batch = self._perm[self._pos:self._pos + self.batch_size]
        self._pos += self.batch_size
        return batch

    def draw(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Next ``n`` batches as a flat index array plus offsets (CSR layout).

        Consumes the generator exactly like ``n`` calls to :meth:`next_batch`.
        """
        batches = [self.next_batch() for _ in range(n)]
        ptr = np.zeros(n + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(b) for b in batches])
        flat = np.concatenate(batches).astype(np.int64) if batches else np.zeros(0, np.int64)
        return flat, ptr

    def epoch(self) -> list[np.ndarray]:
        """Batches of one full epoch (a partition of ``range(N)`` when shuffling)."""
        if self.full_batch:
            return [self._full]
        if self.mode == "iid_with_replacement":
            return [self.next_batch() for _ in range(self.batches_per_epoch)]
        perm = self.rng.permutation(self.N)
        return [perm[i:i + self.batch_size] for i in range(0, self.N, self.batch_size)]


@dataclass(frozen=True)
class MomentEstimates:
    mu: float
    mu_G: float
    M: float
    M_G: float


def estimate_moment_constants(p: GradientOracle, sampler: BatchSampler,
                              probe_points: Iterable[np.ndarray]) -> MomentEstimates:
    """Empirical moment constants over the batches of one epoch.

    The batch distribution is weighted by batch size (pick a sample uniformly,
    use its batch), which makes the batch gradient unbiased even with a short
    final batch. ``M_G`` is the least-squares slope of E||g||^2 against
    ||grad F||^2 (floored at mu^2) and ``M`` the smallest intercept putting
    every probe under the line.

    Raises
    ------
    ValueError
        If every probe point is (near-)stationary.
    """
    batches = sampler.epoch()
    weights = np.array([len(b) for b in batches], dtype=np.float64)
    weights /= weights.sum()

    align, ratio, gsq, xsq = [], [], [], []
    for w in probe_points:
        w = np.asarray(w, dtype=np.float64)
        grad = p.full_gradient(w)
        gn2 = float(grad @ grad)
        if gn2 < 1e-24:
            continue
        G = np.stack([p.batch_gradient(b, w) for b in batches])
        mean_g = weights @ G
        align.append(float(grad @ mean_g) / gn2)
        ratio.append(float(np.linalg.norm(mean_g)) / np.sqrt(gn2))
        gsq.append(float(weights @ np.einsum("ij,ij->i", G, G)))
        xsq.append(gn2)
    if not align:
        raise ValueError("all probe points are stationary; moment constants are undetermined")

    mu = min(align)
    x = np.array(xsq)
    y = np.array(gsq)
    if len(x) > 1 and np.ptp(x) > 0:
        slope = float(np.polyfit(x, y, 1)[0])
    else:
        slope = float(y[0] / x[0])
    M_G = max(slope, mu * mu)
    M = max(0.0, float(np.max(y - M_G * x)))
    return MomentEstimates(mu=mu, mu_G=max(ratio), M=M, M_G=M_G)


_BIN_MAGIC = b"SRKCDDS1"


def save_dataset(path: str | Path, data: npt.ArrayLike) -> None:
    """Write an ``N x d`` matrix, one row per sample.

    ``.csv``: comma separated, 17 significant digits. Anything else: the
    8-byte magic ``SRKCDDS1``, ``N`` and ``d`` as little-endian uint64, then
    ``N*d`` little-endian float64 values in row-major order.
    """
    path = Path(path)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2:
        raise ValueError(f"dataset must be 2-D, got shape {data.shape}")
    if path.suffix.lower() == ".csv":
        np.savetxt(path, data, delimiter=",", fmt="%.17g")
        return
    with open(path, "wb") as fh:
        fh.write(_BIN_MAGIC)
        fh.write(struct.pack("<QQ", *data.shape))
        fh.write(data.astype("<f8").tobytes(order="C"))


def load_dataset(path: str | Path) -> np.ndarray:
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return np.loadtxt(path, delimiter=",", ndmin=2)
    raw = path.read_bytes()
    if raw[:8] != _BIN_MAGIC:
        raise ValueError(f"{path} is not a dataset file (bad magic)")
    N, d = struct.unpack("<QQ", raw[8:24])
    values = np.frombuffer(raw, dtype="<f8", offset=24)
    if values.size != N * d:
        raise ValueError(f"{path}: expected {N * d} values, found {values.size}")
    return values.reshape(N, d).astype(np.float64)


def problem_to_dataset(p: GradientOracle) -> np.ndarray:
    """Row-major sample matrix; the nonconvex target is the last column."""
    if isinstance(p, QuadraticProblem):
        return np.array(p.data)
    if isinstance(p, NonconvexProblem):
        return np.column_stack([p.X, p.y])
    raise TypeError(f"no dataset layout for {type(p).__name__}")


def problem_from_dataset(kind: str, data: np.ndarray) -> GradientOracle:
    if kind == "quadratic":
        return QuadraticProblem(data)
    if kind == "nonconvex":
        return NonconvexProblem(data[:, :-1], data[:, -1])
    raise ValueError(f"unknown problem kind {kind!r}")


def make_problem(kind: str, N: int, d: int, seed: int) -> GradientOracle:
    if kind == "quadratic":
        return generate_quadratic(N, d, seed)
    if kind == "nonconvex":
        return generate_nonconvex(N, d, seed)
    raise ValueError(f"unknown problem kind {kind!r}; expected 'quadratic' or 'nonconvex'")


def describe(p: GradientOracle) -> dict:
    """Scalar summary used in experiment metadata."""
    out = {"kind": p.kind, "N": p.num_samples, "d": p.dim, "L": p.lipschitz_L, "c": p.convexity_c}
    if isinstance(p, QuadraticProblem):
        out["lambda_min"] = p.lambda_min
        out["lambda_max"] = p.lambda_max
    return out
