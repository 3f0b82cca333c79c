"""Acceptance criteria, one check per criterion.

Each ``criterion_N`` returns ``(passed, detail)``; the tests print one
PASS/FAIL line per criterion (also shown in pytest's terminal summary) and
then assert. Run ``python tests/test_acceptance.py`` for the lines alone.
"""

import time

import numpy as np
import pytest

from srkcd.chebyshev import cheb_table, rkc_coefficients
from srkcd.experiments import ConvergeConfig, SweepConfig, run_converge, run_sweep
from srkcd.optimizer import momentum_step, rk_step, srkcd_step
from srkcd.problems import generate_quadratic, quadratic_optimal_gd_step
from srkcd.tableau import (
    brute_force_tableau,
    max_step_bound,
    q_function,
    real_stability_boundary,
    stability_function,
    tableau_from_rkc,
    validate_assumption_rk,
)


def _timed(limit):
    def wrap(fn):
        def inner():
            t0 = time.perf_counter()
            ok, detail = fn()
            dt = time.perf_counter() - t0
            return ok and dt < limit, f"{detail}; {dt:.2f}s (limit {limit:g}s)"
        inner.__name__ = fn.__name__
        inner.__doc__ = fn.__doc__
        return inner
    return wrap


@_timed(1.0)
def criterion_1():
    """Chebyshev monotonicity on [1, 2] for n <= 50."""
    violations = 0
    for x in np.linspace(1.0, 2.0, 201):
        T, dT = cheb_table(50, x)
        violations += int(np.sum(T[1:] < T[:-1])) + int(np.sum(T < 1.0))
        violations += int(np.sum(dT[1:] < dT[:-1])) + int(np.sum(dT[2:] < 4.0))
    return violations == 0, f"{violations} violations over 201 x-values"


@_timed(1.0)
def criterion_2():
    """Coefficient conditions for s = 1..20 and four damping values."""
    bad = []
    for s in range(1, 21):
        for eps in (0.0, 0.01, 0.05, 0.1):
            r = validate_assumption_rk(tableau_from_rkc(rkc_coefficients(s, eps)), tol=1e-10)
            if not (r.passed and r.monotone_row_sums and r.all_positive):
                bad.append((s, eps))
    return not bad, f"{80 - len(bad)}/80 tableaus pass" + (f", failing {bad}" if bad else "")


@_timed(1.0)
def criterion_3():
    """Closed-form tableau equals the symbolic expansion for s <= 15."""
    worst = 0.0
    for s in range(1, 16):
        for eps in (0.0, 0.01, 0.05, 0.1):
            c = rkc_coefficients(s, eps)
            worst = max(worst, float(np.max(np.abs(tableau_from_rkc(c).a - brute_force_tableau(c).a))))
    return worst <= 1e-12, f"max abs difference {worst:.2e}"


@_timed(5.0)
def criterion_4():
    """Recursion, tableau and momentum forms give the same trajectory."""
    worst = 0.0
    for s in range(1, 11):
        c = rkc_coefficients(s, 0.01)
        t = tableau_from_rkc(c)
        bR = real_stability_boundary(c)
        for rep in range(3):
            rng = np.random.default_rng([s, rep])
            d = 8
            Q = np.linalg.qr(rng.normal(size=(d, d)))[0]
            A = Q @ np.diag(rng.uniform(0.1, 5.0, d)) @ Q.T
            b = rng.normal(size=d)
            alpha = 0.5 * bR / 5.0
            # one shared noise draw per outer step, reused by every stage
            xi = rng.normal(scale=0.1, size=(100, d))
            w = [np.ones(d), np.ones(d), np.ones(d)]
            for k in range(100):
                g = lambda u, k=k: A @ u - b + xi[k]
                w = [srkcd_step(w[0], c, alpha, g), rk_step(w[1], t, alpha, g),
                     momentum_step(w[2], c, alpha, g)]
            scale = np.linalg.norm(w[0])
            worst = max(worst, np.linalg.norm(w[1] - w[0]) / scale, np.linalg.norm(w[2] - w[0]) / scale)
    return worst <= 1e-8, f"max relative difference at k=100: {worst:.2e}"


@_timed(2.0)
def criterion_5():
    """b_R / s^2 in [1.9, 2.0]; |R| <= 1 inside, > 1 just outside."""
    ratios, worst_inside, outside_ok = [], 0.0, True
    for s in range(3, 21):
        c = rkc_coefficients(s, 0.01)
        t = tableau_from_rkc(c)
        bR = real_stability_boundary(c)
        ratios.append(bR / s**2)
        x = np.linspace(-bR, 0.0, 4001)[1:-1]
        worst_inside = max(worst_inside, float(np.max(np.abs(stability_function(t, x)))))
    for s in range(1, 16):
        c = rkc_coefficients(s, 0.01)
        outside_ok &= abs(stability_function(tableau_from_rkc(c), -1.05 * real_stability_boundary(c))) > 1
    ok = 1.9 <= min(ratios) and max(ratios) <= 2.0 and worst_inside <= 1 + 1e-9 and outside_ok
    return ok, (f"b_R/s^2 in [{min(ratios):.4f}, {max(ratios):.4f}], max |R| inside {worst_inside:.12f}, "
                f"|R(-1.05 b_R)| > 1 for s<=15: {outside_ok}")


GD_GRID = np.arange(1, 31) * 0.05  # fractions of 2/L, up to 1.5


@_timed(30.0)
def criterion_6():
    """GD (full batch, 15 iterations) sweep on the seeded N=1000, d=50 quadratic."""
    p = generate_quadratic(1000, 50, 0)
    lam_ok = 0.06 <= p.lambda_min <= 0.12 and 4.3 <= p.lambda_max <= 5.3
    limit = 2.0 / p.lipschitz_L
    a_star = quadratic_optimal_gd_step(p)
    res = run_sweep(SweepConfig(method="sgd", batch_size=None, iterations=15, alphas=list(GD_GRID * limit),
                                alpha_grid=None, n=1000, dim=50, data_seed=0, w1="ones"))
    best = int(np.argmin(res.mean_final))
    nearest = int(np.argmin(np.abs(res.alphas - a_star)))
    above = res.alphas > limit
    div_ok = bool(np.all(res.n_diverged[above] > 0))
    ok = lam_ok and best == nearest and div_ok
    return ok, (f"lambda_min={p.lambda_min:.4f} lambda_max={p.lambda_max:.4f} (bands ok: {lam_ok}); "
                f"argmin alpha={res.alphas[best]:.4f} vs grid point nearest 2/(lmin+lmax)={a_star:.4f}: "
                f"{res.alphas[nearest]:.4f}; diverged {int(np.sum(res.n_diverged[above] > 0))}/{int(above.sum())} "
                f"grid points above 2/L={limit:.4f}")


def _near_best_width(res) -> tuple[float, int]:
    """Extent of the grid points within 2x of the best mean final loss, one spacing per point."""
    m = res.mean_final
    sel = np.flatnonzero(m <= 2.0 * m.min())
    spacing = res.alphas[1] - res.alphas[0]
    return float(res.alphas[sel[-1]] - res.alphas[sel[0]] + spacing), sel.size


@_timed(120.0)
def criterion_7():
    """SRKCD (s=5) near-best step-size interval vs SGD's, batch 32, 3 epochs."""
    common = dict(n=1000, dim=50, data_seed=0, batch_size=32, epochs=3, repeats=10, seed=0,
                  alpha_grid=None, w1="ones")
    p = generate_quadratic(1000, 50, 0)
    fr = np.arange(1, 21) / 21  # 20 points inside the open interval
    bR = real_stability_boundary(rkc_coefficients(5, 0.01))
    srk = run_sweep(SweepConfig(method="srkcd", stages=5, epsilon=0.01, alphas=list(fr * bR / p.lipschitz_L),
                                **common))
    sgd = run_sweep(SweepConfig(method="sgd", alphas=list(fr * 2.0 / p.lipschitz_L), **common))
    w_srk, n_srk = _near_best_width(srk)
    w_sgd, n_sgd = _near_best_width(sgd)
    # supplementary: step sizes whose mean final loss is below the starting loss
    F1 = p.value(np.ones(p.dim))
    srk_below = srk.alphas[srk.mean_final < F1]
    sgd_below = sgd.alphas[sgd.mean_final < F1]
    return w_srk >= 10 * w_sgd, (
        f"near-best width SRKCD {w_srk:.3f} ({n_srk} pts) vs SGD {w_sgd:.3f} ({n_sgd} pts), "
        f"ratio {w_srk / w_sgd:.1f} (need >= 10); below-start-loss points SRKCD {srk_below.size}/20 "
        f"up to {srk_below.max():.2f}, SGD {sgd_below.size}/20 up to {sgd_below.max():.3f}")


@_timed(120.0)
def criterion_8():
    """O(1/k) rate on the quadratic for s = 1 and s = 5."""
    parts, ok = [], True
    for s in (1, 5):
        rep = run_converge(ConvergeConfig(method="srkcd", stages=s, epsilon=0.01, problem="quadratic",
                                          n=1000, dim=50, data_seed=0, batch_size=32, iterations=10_000,
                                          repeats=20, seed=0, fit_from=100))
        beta_ok = rep.schedule["beta"] > 1.0 / (rep.metadata["problem"]["c"] * rep.q_check["mu"])
        good = beta_ok and rep.q_check["passed"] and rep.slope <= -0.8 and rep.n_diverged == 0
        ok &= good
        parts.append(f"s={s}: slope {rep.slope:.3f}, beta={rep.schedule['beta']:.2f} "
                     f"gamma={rep.schedule['gamma']:.1f}, Q-check {rep.q_check['passed']}")
    return ok, "; ".join(parts)


@_timed(120.0)
def criterion_9():
    """Running-min mean gradient norm on the nonconvex problem, s = 3."""
    rep = run_converge(ConvergeConfig(method="srkcd", stages=3, problem="nonconvex", n=1000, dim=10,
                                      data_seed=0, batch_size=32, gamma=100.0, iterations=10_000,
                                      repeats=10, seed=0))
    rm = rep.running_min_grad_norm
    ratio = rm[-1] / rm[0]
    return ratio < 1e-2 and rep.q_check["passed"], (
        f"running-min ||grad F||^2 ratio {ratio:.2e} (need < 1e-2), alpha_k = {rep.schedule['beta']:.3f}/(k+100)")


@_timed(1.0)
def criterion_10():
    """2/25 step bound and the Q-condition below it on the s=5 tableau."""
    bound = max_step_bound(1.0, 1.0, 1.0)
    t = tableau_from_rkc(rkc_coefficients(5, 0.01))
    grid = np.linspace(0.0, bound, 1001)[1:]
    bad = [a for a in grid if not q_function(t, a, 1.0, 1.0, 1.0) < -a / 2]
    return bound == 2 / 25 and not bad, f"bound={bound!r}, Q-check violations on 1000 grid points: {len(bad)}"


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10]

EXCLUDED = {
    11: "CNN/MNIST stability limits and Hessian eigenvalue statistics need a deep-learning "
        "workload; out of scope for this package",
}


def _line(n, ok, detail):
    return f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.mark.slow
@pytest.mark.parametrize("n", range(1, len(CRITERIA) + 1))
def test_criterion(n, acceptance_log):
    ok, detail = CRITERIA[n - 1]()
    line = _line(n, ok, detail)
    print(line)
    acceptance_log.append(line)
    assert ok, line


def test_criterion_11_excluded(acceptance_log):
    line = f"criterion 11: EXCLUDED  {EXCLUDED[11]}"
    print(line)
    acceptance_log.append(line)
    pytest.skip(EXCLUDED[11])


if __name__ == "__main__":
    for i, fn in enumerate(CRITERIA, start=1):
        print(_line(i, *fn()), flush=True)
    print(f"criterion 11: EXCLUDED  {EXCLUDED[11]}")
