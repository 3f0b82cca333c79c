"""Chebyshev polynomials of the first kind and first-order RKC coefficients.

Everything here goes through the three-term recurrence

    T_0(x) = 1,  T_1(x) = x,  T_n(x) = 2x T_{n-1}(x) - T_{n-2}(x)

and its derivative counterpart. Closed forms (cos/cosh) are backward
unstable for large ``n`` and are only used in the test-suite as oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import numpy.typing as npt

__all__ = [
    "MAX_STAGES",
    "DEFAULT_EPSILON",
    "RkcCoefficients",
    "cheb_T",
    "cheb_T_prime",
    "cheb_table",
    "rkc_coefficients",
]

# T_s(omega0) grows with s; past this point nothing sensible is left to compute.
MAX_STAGES = 1000
DEFAULT_EPSILON = 0.01


def _check_degree(n: int) -> int:
    if isinstance(n, bool) or int(n) != n or n < 0:
        raise ValueError(f"polynomial degree must be a non-negative integer, got {n!r}")
    return int(n)


def cheb_T(n: int, x: npt.ArrayLike) -> np.ndarray | float:
    """Evaluate T_n(x) by the three-term recurrence.

    ``x`` may be a scalar or an array; the result has the same shape.
    """
    n = _check_degree(n)
    x = np.asarray(x, dtype=np.result_type(x, np.float64))
    t_prev = np.ones_like(x)
    if n == 0:
        return t_prev[()]
    t = x.copy()
    for _ in range(n - 1):
        t_prev, t = t, 2.0 * x * t - t_prev
    return t[()]


def cheb_T_prime(n: int, x: npt.ArrayLike) -> np.ndarray | float:
    """Evaluate T_n'(x) via T_n' = 2 T_{n-1} + 2x T_{n-1}' - T_{n-2}'."""
    n = _check_degree(n)
    x = np.asarray(x, dtype=np.result_type(x, np.float64))
    if n == 0:
        return np.zeros_like(x)[()]
    t_prev, t = np.ones_like(x), x.copy()
    dt_prev, dt = np.zeros_like(x), np.ones_like(x)
    for _ in range(n - 1):
        dt_prev, dt = dt, 2.0 * t + 2.0 * x * dt - dt_prev
        t_prev, t = t, 2.0 * x * t - t_prev
    return dt[()]


def cheb_table(n: int, x: float) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(T, dT)`` with ``T[j] = T_j(x)`` and ``dT[j] = T_j'(x)`` for j = 0..n."""
    n = _check_degree(n)
    x = float(x)
    T = np.empty(n + 1)
    dT = np.empty(n + 1)
    T[0], dT[0] = 1.0, 0.0
    if n >= 1:
        T[1], dT[1] = x, 1.0
    for j in range(2, n + 1):
        T[j] = 2.0 * x * T[j - 1] - T[j - 2]
        dT[j] = 2.0 * T[j - 1] + 2.0 * x * dT[j - 1] - dT[j - 2]
    return T, dT


@dataclass(frozen=True, eq=False)
class RkcCoefficients:
    """Coefficients of the damped first-order RKC method with ``s`` stages.

    ``mu_tilde[j-1]`` and ``nu[j-1]`` hold the stage-``j`` scalars, so the
    arrays are index-aligned with stages 1..s. ``nu[0]`` is stored as 0; the
    recursion never reads it.
    """

    s: int
    epsilon: float
    omega0: float
    omega1: float
    mu_tilde: np.ndarray = field(repr=False)
    nu: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        self.mu_tilde.setflags(write=False)
        self.nu.setflags(write=False)

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "epsilon": self.epsilon,
            "omega0": self.omega0,
            "omega1": self.omega1,
            "mu_tilde": self.mu_tilde.tolist(),
            "nu": self.nu.tolist(),
        }


def rkc_coefficients(s: int, epsilon: float = DEFAULT_EPSILON) -> RkcCoefficients:
    """Build (and cache) the RKC coefficients for ``s`` stages and damping ``epsilon``.

    omega0 = 1 + epsilon/s^2, omega1 = T_s(omega0)/T_s'(omega0),
    mu~_1 = omega1/T_1(omega0), mu~_j = 2 omega1 T_{j-1}(omega0)/T_j(omega0),
    nu_j = -T_{j-2}(omega0)/T_j(omega0).

    Raises
    ------
    ValueError
        If ``s`` is not an integer in ``[1, MAX_STAGES]`` or ``epsilon`` is
        negative or not finite.
    """
    if isinstance(s, bool) or int(s) != s or s < 1:
        raise ValueError(f"stage count must be an integer >= 1, got {s!r}")
    if s > MAX_STAGES:
        raise ValueError(f"stage count {s} exceeds the supported maximum {MAX_STAGES}")
    epsilon = float(epsilon)
    if not math.isfinite(epsilon) or epsilon < 0.0:
        raise ValueError(f"epsilon must be finite and >= 0, got {epsilon!r}")
    return _rkc_coefficients(int(s), epsilon)


@lru_cache(maxsize=256)
def _rkc_coefficients(s: int, epsilon: float) -> RkcCoefficients:
    omega0 = 1.0 + epsilon / (s * s)
    T, dT = cheb_table(s, omega0)
    if not (np.all(np.isfinite(T)) and np.isfinite(dT[s])):
        raise ValueError(f"Chebyshev values overflow for s={s}, epsilon={epsilon}")
    omega1 = T[s] / dT[s]

    mu_tilde = np.empty(s)
    nu = np.zeros(s)
    mu_tilde[0] = omega1 / T[1]
    for j in range(2, s + 1):
        mu_tilde[j - 1] = 2.0 * omega1 * T[j - 1] / T[j]
        nu[j - 1] = -T[j - 2] / T[j]
    return RkcCoefficients(s, epsilon, float(omega0), float(omega1), mu_tilde, nu)
