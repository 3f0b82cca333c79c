"""Explicit Runge-Kutta tableaus in gradient-flow form, plus stability tools.

A method with ``s`` stages applied to ``w' = -grad F(w)`` is written as

    w_{k,i}  = w_k - alpha * sum_{j<=i} a[i, j] * g(w_{k,j-1}),   i = 1..s

with ``w_{k,0} = w_k`` and ``w_{k+1} = w_{k,s}``. The last row of ``a`` is
therefore the weight vector ``b``. Indices in docstrings are 1-based; the
arrays are 0-based, so ``a[i-1, j-1]`` stores a_{i,j}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import numpy.typing as npt

from .chebyshev import RkcCoefficients, cheb_table

__all__ = [
    "ButcherTableau",
    "PnPolynomial",
    "ValidationReport",
    "explicit_euler",
    "tableau_from_rkc",
    "brute_force_tableau",
    "validate_assumption_rk",
    "p_polynomial",
    "q_function",
    "q_step_limit",
    "max_step_bound",
    "stability_function",
    "real_stability_boundary",
]

DEFAULT_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class ButcherTableau:
    """Lower-triangular stage coefficients; row ``s`` doubles as the weights."""

    a: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        a = np.array(self.a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise ValueError(f"tableau must be a non-empty square matrix, got shape {a.shape}")
        if np.any(np.triu(a, k=1) != 0.0):
            raise ValueError("tableau entries above the diagonal must be zero")
        if not np.all(np.isfinite(a)):
            raise ValueError("tableau entries must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[float]]) -> "ButcherTableau":
        """Build from ragged rows ``[[a11], [a21, a22], ...]``."""
        s = len(rows)
        a = np.zeros((s, s))
        for i, row in enumerate(rows):
            if len(row) != i + 1:
                raise ValueError(f"row {i + 1} must have {i + 1} entries, got {len(row)}")
            a[i, : i + 1] = row
        return cls(a)

    @property
    def s(self) -> int:
        return self.a.shape[0]

    @property
    def b(self) -> np.ndarray:
        return self.a[-1]

    def rows(self) -> list[list[float]]:
        return [self.a[i, : i + 1].tolist() for i in range(self.s)]


def explicit_euler() -> ButcherTableau:
    return ButcherTableau(np.ones((1, 1)))


def tableau_from_rkc(coeffs: RkcCoefficients) -> ButcherTableau:
    """Expand the RKC three-term recursion into tableau form.

    a_{n,i} = sum_{j=i}^{n} (-1)^{j+i} (prod_{l=i+1}^{j} nu_l) mu~_i, where
    each summand equals the previous one times ``-nu_j``, so every column is
    a cumulative sum of a running product.
    """
    s = coeffs.s
    mu, nu = coeffs.mu_tilde, coeffs.nu
    a = np.zeros((s, s))
    for i in range(s):
        term = mu[i]
        total = term
        a[i, i] = total
        for j in range(i + 1, s):
            term *= -nu[j]
            total += term
            a[j, i] = total
    return ButcherTableau(a)


def brute_force_tableau(coeffs: RkcCoefficients) -> ButcherTableau:
    """Reference expansion obtained by running the recursion on symbols.

    Stage ``n`` is tracked as ``w_0 - alpha * C[n] @ G`` where ``G`` stacks
    the abstract stage gradients. The recursion acts on the coefficient rows
    exactly as it acts on the iterates; the ``w_0`` parts cancel because
    ``(1 - nu_j) + nu_j = 1``.
    """
    s = coeffs.s
    C = np.zeros((s + 1, s))
    C[1, 0] = coeffs.mu_tilde[0]
    for j in range(2, s + 1):
        nu_j = coeffs.nu[j - 1]
        C[j] = (1.0 - nu_j) * C[j - 1] + nu_j * C[j - 2]
        C[j, j - 1] += coeffs.mu_tilde[j - 1]
    return ButcherTableau(C[1:])


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of checking a tableau against the coefficient conditions.

    ``row_abs_sums`` covers rows 0..s; row 0 is the empty stage and is 0.
    """

    weights_sum: float
    weights_sum_ok: bool
    row_abs_sums: tuple[float, ...]
    row_abs_sums_ok: bool
    monotone_row_sums: bool
    all_positive: bool

    @property
    def passed(self) -> bool:
        return self.weights_sum_ok and self.row_abs_sums_ok

    def to_dict(self) -> dict:
        return {
            "weights_sum": self.weights_sum,
            "weights_sum_ok": self.weights_sum_ok,
            "row_abs_sums": list(self.row_abs_sums),
            "row_abs_sums_ok": self.row_abs_sums_ok,
            "monotone_row_sums": self.monotone_row_sums,
            "all_positive": self.all_positive,
            "passed": self.passed,
        }


def validate_assumption_rk(t: ButcherTableau, tol: float = DEFAULT_TOL) -> ValidationReport:
    """Check sum_i b_i = 1 and sum_j |a_{i,j}| <= 1 for every row, within ``tol``.

    Also reports two RKC-specific facts: strictly increasing row sums and
    strictly positive entries on and below the diagonal.
    """
    if not tol > 0:
        raise ValueError(f"tolerance must be positive, got {tol!r}")
    weights_sum = float(np.sum(t.b))
    abs_sums = np.concatenate(([0.0], np.abs(t.a).sum(axis=1)))
    lower = t.a[np.tril_indices(t.s)]
    return ValidationReport(
        weights_sum=weights_sum,
        weights_sum_ok=bool(abs(weights_sum - 1.0) <= tol),
        row_abs_sums=tuple(float(v) for v in abs_sums),
        row_abs_sums_ok=bool(np.all(abs_sums <= 1.0 + tol)),
        monotone_row_sums=bool(np.all(np.diff(abs_sums) > 0.0)),
        all_positive=bool(np.all(lower > 0.0)),
    )


@dataclass(frozen=True, eq=False)
class PnPolynomial:
    """P_n(alpha) = alpha + alpha * sum_{i=1}^{n-1} (alpha L)^i c_{n,i}.

    ``coeffs[i-1]`` stores c_{n,i}. ``n = 0`` is the zero polynomial.
    """

    n: int
    coeffs: np.ndarray = field(repr=False)

    def __call__(self, alpha: npt.ArrayLike, L: float) -> np.ndarray | float:
        alpha = np.asarray(alpha, dtype=np.float64)
        if self.n == 0:
            return np.zeros_like(alpha)[()]
        x = alpha * L
        acc = np.zeros_like(alpha)
        # Horner in (alpha L), constant term 1
        for c in self.coeffs[::-1]:
            acc = (acc + c) * x
        return (alpha * (1.0 + acc))[()]


def _p_coefficient_table(t: ButcherTableau, n: int) -> list[np.ndarray]:
    """c-sequences for P_0..P_n (index m holds c_{m,1..m-1})."""
    absa = np.abs(t.a)
    table: list[np.ndarray] = [np.zeros(0), np.zeros(0)]
    for m in range(2, n + 1):
        row = absa[m - 1]  # |a_{m,i}| at row[i-1]
        c = np.zeros(m - 1)
        c[0] = row[1:m].sum()
        for j in range(2, m):
            # sum_{i=j+1}^{m} |a_{m,i}| c_{i-1,j-1}
            c[j - 1] = sum(row[i - 1] * table[i - 1][j - 2] for i in range(j + 1, m + 1))
        table.append(c)
    return table[: n + 1]


def p_polynomial(t: ButcherTableau, n: int) -> PnPolynomial:
    """Return P_n for tableau ``t`` in coefficient form.

    Raises
    ------
    ValueError
        If ``n`` is outside ``[0, s]``.
    """
    if int(n) != n or not 0 <= n <= t.s:
        raise ValueError(f"polynomial index must lie in [0, {t.s}], got {n!r}")
    n = int(n)
    return PnPolynomial(n, _p_coefficient_table(t, n)[n])


def _check_positive(**values: float) -> None:
    for name, v in values.items():
        if not (math.isfinite(v) and v > 0):
            raise ValueError(f"{name} must be positive and finite, got {v!r}")


def q_function(t: ButcherTableau, alpha: float, L: float, mu: float, M_G: float) -> float:
    """Per-step descent coefficient Q(alpha).

    Q = -alpha mu + L M_G sum_i |b_i| P_{i-1}^2 + (L M_G / 2) P_s^2
        + (alpha^2 L / 4) sum_i |b_i|.
    """
    _check_positive(alpha=alpha, L=L, mu=mu)
    if not M_G >= mu * mu:
        raise ValueError(f"M_G must be >= mu^2 ({mu * mu}), got {M_G!r}")
    table = _p_coefficient_table(t, t.s)
    absb = np.abs(t.b)
    P = np.array([float(PnPolynomial(m, table[m])(alpha, L)) for m in range(t.s + 1)])
    return float(
        -alpha * mu
        + L * M_G * np.dot(absb, P[:-1] ** 2)
        + 0.5 * L * M_G * P[-1] ** 2
        + 0.25 * alpha**2 * L * absb.sum()
    )


def q_step_limit(t: ButcherTableau, L: float, mu: float, M_G: float, rtol: float = 1e-12) -> float:
    """Supremum of step sizes with Q(alpha) < -alpha mu / 2.

    (Q(alpha) + alpha mu/2)/alpha is -mu/2 plus a polynomial with
    non-negative coefficients, so the admissible set is an interval (0, a*)
    and bisection finds its end.
    """
    _check_positive(L=L, mu=mu)

    def ok(alpha: float) -> bool:
        return q_function(t, alpha, L, mu, M_G) < -0.5 * alpha * mu

    lo = max_step_bound(L, mu, M_G)
    # only tableaus violating the coefficient conditions can fail here
    while not ok(lo):
        lo *= 0.5
        if lo < 1e-300:
            return 0.0
    hi = 2.0 * lo
    while ok(hi):
        lo, hi = hi, 2.0 * hi
    while hi - lo > rtol * lo:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def max_step_bound(L: float, mu: float, M_G: float) -> float:
    """Sufficient step size 1/(L m) with m = max(2, (12 M_G + 1/2)/mu).

    With L = mu = M_G = 1 this is 2/25.
    """
    _check_positive(L=L, mu=mu, M_G=M_G)
    m = max(2.0, (12.0 * M_G + 0.5) / mu)
    return 1.0 / (L * m)


def stability_function(t: ButcherTableau, z: npt.ArrayLike) -> np.ndarray | complex:
    """Amplification factor R(z) of one step on y' = lambda y, z = alpha lambda.

    Stages are propagated through the tableau directly, so this works for
    any explicit tableau. Accepts scalars or arrays (real or complex).
    """
    z = np.asarray(z)
    dtype = np.result_type(z, np.float64)
    z = z.astype(dtype, copy=False)
    stages = [np.ones_like(z)]
    for i in range(t.s):
        acc = np.zeros_like(z)
        for j in range(i + 1):
            acc = acc + t.a[i, j] * stages[j]
        stages.append(1.0 + z * acc)
    return stages[-1][()]


def real_stability_boundary(coeffs: RkcCoefficients) -> float:
    """Length b_R of the real stability interval (-b_R, 0): 2 w0 T_s'(w0)/T_s(w0)."""
    T, dT = cheb_table(coeffs.s, coeffs.omega0)
    return float(2.0 * coeffs.omega0 * dT[-1] / T[-1])
