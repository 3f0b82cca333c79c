import numpy as np
import pytest

from srkcd import _kernels
from srkcd.optimizer import OptimizerConfig, StepSchedule, run
from srkcd.problems import GradientOracle
from srkcd.tableau import ButcherTableau

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


@needs_numba
@pytest.mark.parametrize("method", ["srkcd_recursion", "rk_tableau", "srkcd_momentum", "sgd"])
@pytest.mark.parametrize("fixture", ["quad_small", "nonconvex_small"])
def test_backends_agree(method, fixture, request):
    p = request.getfixturevalue(fixture)
    cfg = OptimizerConfig(method=method, s=4, schedule=StepSchedule.harmonic(3.0, 20.0),
                          max_iterations=60, record_every=7, record_at=(2, 3), batch_size=16)
    w1 = np.linspace(-1, 1, p.dim)
    a = run(cfg, p, w1, seed=9, backend="numba")
    b = run(cfg, p, w1, seed=9, backend="numpy")
    np.testing.assert_array_equal(a.k, b.k)
    np.testing.assert_allclose(a.losses, b.losses, rtol=1e-11)
    np.testing.assert_allclose(a.final_w, b.final_w, rtol=1e-11, atol=1e-14)
    assert a.iterations == b.iterations and a.diverged == b.diverged


@needs_numba
def test_backends_agree_on_divergence(quad_small):
    cfg = OptimizerConfig(method="srkcd_recursion", s=3, schedule=StepSchedule.constant(40.0),
                          max_iterations=300, record_every=10, batch_size=32)
    a = run(cfg, quad_small, np.ones(quad_small.dim), seed=1, backend="numba")
    b = run(cfg, quad_small, np.ones(quad_small.dim), seed=1, backend="numpy")
    assert a.diverged and b.diverged
    assert a.iterations == b.iterations
    np.testing.assert_array_equal(a.k, b.k)


@needs_numba
def test_custom_tableau_on_kernel(quad_small):
    t = ButcherTableau.from_rows([[0.3], [0.2, 0.8]])
    cfg = OptimizerConfig(method="rk_tableau", tableau=t, schedule=StepSchedule.constant(0.3),
                          max_iterations=20, batch_size=10)
    a = run(cfg, quad_small, np.ones(quad_small.dim), seed=2, backend="numba")
    b = run(cfg, quad_small, np.ones(quad_small.dim), seed=2, backend="numpy")
    np.testing.assert_allclose(a.losses, b.losses, rtol=1e-12)


def test_env_flag(monkeypatch):
    monkeypatch.setenv("SRKCD_BACKEND", "numpy")
    assert _kernels.default_backend() == "numpy"
    assert _kernels.resolve_backend(None) == "numpy"
    monkeypatch.setenv("SRKCD_BACKEND", "cuda")
    with pytest.raises(ValueError):
        _kernels.default_backend()
    monkeypatch.delenv("SRKCD_BACKEND")
    assert _kernels.default_backend() == ("numba" if _kernels.HAVE_NUMBA else "numpy")


def test_resolve_backend_rejects_unknown():
    with pytest.raises(ValueError):
        _kernels.resolve_backend("fortran")


class _Shifted(GradientOracle):
    """(w - 1)^2 / 2 per coordinate, with no compiled kernel."""

    kind = "shifted"
    dim = 3
    num_samples = 4

    def value(self, w):
        return float(0.5 * np.sum((w - 1) ** 2))

    def full_gradient(self, w):
        return w - 1

    def batch_gradient(self, batch, w):
        return w - 1


def test_problem_without_kernel_uses_python_loop():
    p = _Shifted()
    assert p.kernel_data() is None
    cfg = OptimizerConfig(s=2, schedule=StepSchedule.constant(0.5), max_iterations=50)
    rec = run(cfg, p, np.zeros(3), seed=0, backend="numba" if _kernels.HAVE_NUMBA else "numpy")
    np.testing.assert_allclose(rec.final_w, 1.0, atol=1e-10)
