"""Compiled whole-run loops for the built-in problems.

The numba backend runs an entire optimization (batch gradients, stages,
recording, divergence checks) inside one jitted function. The numpy
backend is the generic Python loop in :mod:`srkcd.optimizer`, driving the
public step functions and the problems' vectorized gradients.

Backend selection: ``SRKCD_BACKEND=numpy`` forces the fallback; the default
is ``numba`` when it can be imported.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


BACKENDS = ("numba", "numpy")

# method codes
RECURSION = 0
TABLEAU = 1
MOMENTUM = 2


def default_backend() -> str:
    name = os.environ.get("SRKCD_BACKEND", "").strip().lower()
    if name and name not in BACKENDS:
        raise ValueError(f"SRKCD_BACKEND must be one of {BACKENDS}, got {name!r}")
    if name == "numpy" or not HAVE_NUMBA:
        return "numpy"
    return "numba"


def resolve_backend(name: str | None) -> str:
    if name is None:
        return default_backend()
    if name not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}, got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    return name


@njit(cache=True)
def _batch_grad(kind, M, v, idx, w, out):
    d = w.size
    nb = idx.size
    for j in range(d):
        out[j] = 0.0
    if kind == 0:
        # quadratic: M holds per-sample curvature, grad f(i, w) = M[i] * w
        for t in range(nb):
            i = idx[t]
            for j in range(d):
                out[j] += M[i, j]
        for j in range(d):
            out[j] = out[j] / nb * w[j]
    else:
        for t in range(nb):
            i = idx[t]
            r = -v[i]
            for j in range(d):
                r += M[i, j] * w[j]
            c = 2.0 * r / (1.0 + r * r)
            for j in range(d):
                out[j] += c * M[i, j]
        for j in range(d):
            out[j] /= nb


@njit(cache=True)
def _full_value_grad(kind, M, v, w, grad):
    """Returns F(w) and writes grad F(w) into ``grad``."""
    d = w.size
    if kind == 0:
        F = 0.0
        for j in range(d):
            grad[j] = v[j] * w[j]
            F += v[j] * w[j] * w[j]
        return 0.5 * F
    N = M.shape[0]
    for j in range(d):
        grad[j] = 0.0
    F = 0.0
    for i in range(N):
        r = -v[i]
        for j in range(d):
            r += M[i, j] * w[j]
        F += np.log1p(r * r)
        c = 2.0 * r / (1.0 + r * r)
        for j in range(d):
            grad[j] += c * M[i, j]
    for j in range(d):
        grad[j] /= N
    return F / N


@njit(cache=True)
def _all_finite(x):
    for j in range(x.size):
        if not np.isfinite(x[j]):
            return False
    return True


@njit(cache=True)
def _step(kind, M, v, idx, w, out, method, mu, nu, A, alpha, S, G, g):
    """One outer step from ``w`` into ``out``. False on a non-finite stage.

    ``S`` (s+1, d) and ``G`` (s, d) are stage scratch buffers, ``g`` (d,).
    """
    s = mu.size
    d = w.size
    if method == 0:
        # three-term recursion; S[j] holds w_{k,j}
        S[0, :] = w
        _batch_grad(kind, M, v, idx, w, g)
        ma = mu[0] * alpha
        for i in range(d):
            S[1, i] = w[i] - ma * g[i]
        if not _all_finite(S[1]):
            return False
        for j in range(2, s + 1):
            _batch_grad(kind, M, v, idx, S[j - 1], g)
            nj = nu[j - 1]
            ma = mu[j - 1] * alpha
            for i in range(d):
                S[j, i] = (1.0 - nj) * S[j - 1, i] + nj * S[j - 2, i] - ma * g[i]
            if not _all_finite(S[j]):
                return False
        out[:] = S[s]
    elif method == 1:
        S[0, :] = w
        for i in range(1, s + 1):
            _batch_grad(kind, M, v, idx, S[i - 1], G[i - 1])
            for c in range(d):
                acc = 0.0
                for j in range(i):
                    acc += A[i - 1, j] * G[j, c]
                S[i, c] = w[c] - alpha * acc
            if not _all_finite(S[i]):
                return False
        out[:] = S[s]
    else:
        # momentum form; S[0] is the running stage, S[1] the velocity
        S[0, :] = w
        for i in range(d):
            S[1, i] = 0.0
        for j in range(1, s + 1):
            eta = 0.0 if j == 1 else -nu[j - 1]
            ell = mu[j - 1] * alpha
            _batch_grad(kind, M, v, idx, S[0], g)
            for i in range(d):
                S[1, i] = eta * S[1, i] - ell * g[i]
                S[0, i] = S[0, i] + S[1, i]
            if not _all_finite(S[0]):
                return False
        out[:] = S[0]
    return True


@njit(cache=True)
def run_loop(kind, M, v, w1, method, mu, nu, A, alphas, flat, ptr, record, threshold):
    """Whole run. ``record`` is a bool mask over k = 0..K+1 (index 0 unused).

    Returns ``(w, rec_k, rec_F, rec_G, iterations, diverged)``.
    """
    d = w1.size
    s = mu.size
    K = alphas.size
    n_max = 0
    for k in range(record.size):
        if record[k]:
            n_max += 1
    n_max += 1
    rec_k = np.empty(n_max, dtype=np.int64)
    rec_F = np.empty(n_max)
    rec_G = np.empty(n_max)

    w = w1.copy()
    nxt = np.empty(d)
    S = np.empty((s + 1, d))
    G = np.empty((s, d))
    g = np.empty(d)
    fg = np.empty(d)

    n = 0
    iters = 0
    diverged = False
    last_rec = 0
    for k in range(1, K + 2):
        if k > 1:
            ok = _step(kind, M, v, flat[ptr[k - 2]:ptr[k - 1]], w, nxt, method,
                       mu, nu, A, alphas[k - 2], S, G, g)
            if not ok:
                diverged = True
                break
            w[:] = nxt
            iters = k - 1
        if record[k]:
            F = _full_value_grad(kind, M, v, w, fg)
            G2 = 0.0
            for j in range(d):
                G2 += fg[j] * fg[j]
            rec_k[n] = k
            rec_F[n] = F
            rec_G[n] = G2
            n += 1
            last_rec = k
            if not (np.isfinite(F) and np.isfinite(G2)) or F > threshold:
                diverged = True
                break
    if last_rec != iters + 1:
        F = _full_value_grad(kind, M, v, w, fg)
        G2 = 0.0
        for j in range(d):
            G2 += fg[j] * fg[j]
        rec_k[n] = iters + 1
        rec_F[n] = F
        rec_G[n] = G2
        n += 1
        if not (np.isfinite(F) and np.isfinite(G2)) or F > threshold:
            diverged = True
    return w, rec_k[:n], rec_F[:n], rec_G[:n], iters, diverged
