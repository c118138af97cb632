"""Hot numeric kernels with optional numba acceleration.

Two inner loops dominate the runtime of the library: complex series
summation on quadrature grids (the Mittag-Leffler style pole expansions)
and the batched tridiagonal solves of the ADI stepper in the PDE oracle.
Both carry a numba ``@njit`` implementation and a pure-numpy fallback.

Backend selection: set ``GRUSHIN_NUMBA=0`` (or ``off``/``numpy``) to force
the numpy path; anything else uses numba when importable.  The selection
happens at import time; ``backend_name()`` reports the active backend.
"""

from __future__ import annotations

import os

import numpy as np

_PI2 = np.pi ** 2

_flag = os.environ.get("GRUSHIN_NUMBA", "auto").strip().lower()
_want_numba = _flag not in ("0", "off", "false", "numpy")

_HAVE_NUMBA = False
if _want_numba:
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - numba is an optional extra
        _HAVE_NUMBA = False


def backend_name() -> str:
    return "numba" if _HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# series summation kernels
#
# pole_sum_f:    sum_{k=2}^{K} (1 - a(-1)^k) * s / (k^2 pi^2 - s)
# pole_sum_psi:  sum_{k=1}^{K} (1 - a(-1)^k) * s / (s + k^2 pi^2)
# pole_sum_fp:   sum_{k=2}^{K} (1 - a(-1)^k) * k^2 pi^2 / (k^2 pi^2 - s)^2
# pole_sum_fpp:  sum_{k=2}^{K} (1 - a(-1)^k) * k^2 pi^2 / (k^2 pi^2 - s)^3
# ---------------------------------------------------------------------------


def _pole_sum_f_np(s, a, K):
    k = np.arange(2, K + 1)
    ck = 1.0 - a * (-1.0) ** k
    return (ck * (s[..., None] / (k * k * _PI2 - s[..., None]))).sum(axis=-1)


def _pole_sum_psi_np(s, a, K):
    k = np.arange(1, K + 1)
    ck = 1.0 - a * (-1.0) ** k
    return (ck * (s[..., None] / (s[..., None] + k * k * _PI2))).sum(axis=-1)


def _pole_sum_fp_np(s, a, K):
    k = np.arange(2, K + 1)
    ck = 1.0 - a * (-1.0) ** k
    kk = k * k * _PI2
    return (ck * kk / (kk - s[..., None]) ** 2).sum(axis=-1)


def _pole_sum_fpp_np(s, a, K):
    k = np.arange(2, K + 1)
    ck = 1.0 - a * (-1.0) ** k
    kk = k * k * _PI2
    return (ck * kk / (kk - s[..., None]) ** 3).sum(axis=-1)


def _thomas_batch_np(lower, diag, upper, rhs):
    """Solve m independent tridiagonal systems, systems along the last axis.

    ``lower[i, 0]`` and ``upper[i, -1]`` are ignored.  Vectorized over the
    batch axis; the recurrence runs along the system axis.
    """
    m, N = rhs.shape
    cp = np.empty((m, N))
    dp = np.empty((m, N))
    cp[:, 0] = upper[:, 0] / diag[:, 0]
    dp[:, 0] = rhs[:, 0] / diag[:, 0]
    for j in range(1, N):
        den = diag[:, j] - lower[:, j] * cp[:, j - 1]
        cp[:, j] = upper[:, j] / den
        dp[:, j] = (rhs[:, j] - lower[:, j] * dp[:, j - 1]) / den
    out = np.empty((m, N))
    out[:, N - 1] = dp[:, N - 1]
    for j in range(N - 2, -1, -1):
        out[:, j] = dp[:, j] - cp[:, j] * out[:, j + 1]
    return out


if _HAVE_NUMBA:

    @njit(cache=True)
    def _pole_sum_f_nb(s, a, K):  # pragma: no cover - exercised via dispatch
        out = np.zeros(s.shape[0], dtype=np.complex128)
        for k in range(2, K + 1):
            ck = 1.0 - a * (-1.0) ** k
            kk = k * k * _PI2
            for i in range(s.shape[0]):
                out[i] += ck * s[i] / (kk - s[i])
        return out

    @njit(cache=True)
    def _pole_sum_psi_nb(s, a, K):  # pragma: no cover
        out = np.zeros(s.shape[0], dtype=np.complex128)
        for k in range(1, K + 1):
            ck = 1.0 - a * (-1.0) ** k
            kk = k * k * _PI2
            for i in range(s.shape[0]):
                out[i] += ck * s[i] / (s[i] + kk)
        return out

    @njit(cache=True)
    def _pole_sum_fp_nb(s, a, K):  # pragma: no cover
        out = np.zeros(s.shape[0], dtype=np.complex128)
        for k in range(2, K + 1):
            ck = 1.0 - a * (-1.0) ** k
            kk = k * k * _PI2
            for i in range(s.shape[0]):
                d = kk - s[i]
                out[i] += ck * kk / (d * d)
        return out

    @njit(cache=True)
    def _pole_sum_fpp_nb(s, a, K):  # pragma: no cover
        out = np.zeros(s.shape[0], dtype=np.complex128)
        for k in range(2, K + 1):
            ck = 1.0 - a * (-1.0) ** k
            kk = k * k * _PI2
            for i in range(s.shape[0]):
                d = kk - s[i]
                out[i] += ck * kk / (d * d * d)
        return out

    @njit(cache=True)
    def _thomas_batch_nb(lower, diag, upper, rhs):  # pragma: no cover
        m, N = rhs.shape
        out = np.empty((m, N))
        cp = np.empty(N)
        dp = np.empty(N)
        for i in range(m):
            cp[0] = upper[i, 0] / diag[i, 0]
            dp[0] = rhs[i, 0] / diag[i, 0]
            for j in range(1, N):
                den = diag[i, j] - lower[i, j] * cp[j - 1]
                cp[j] = upper[i, j] / den
                dp[j] = (rhs[i, j] - lower[i, j] * dp[j - 1]) / den
            out[i, N - 1] = dp[N - 1]
            for j in range(N - 2, -1, -1):
                out[i, j] = dp[j] - cp[j] * out[i, j + 1]
        return out


def _flatten_call(fn_nb, fn_np, s, a, K):
    s = np.asarray(s, dtype=np.complex128)
    if _HAVE_NUMBA:
        return fn_nb(s.ravel(), float(a), int(K)).reshape(s.shape)
    return fn_np(s, float(a), int(K))


def pole_sum_f(s, a, K):
    return _flatten_call(_pole_sum_f_nb if _HAVE_NUMBA else None, _pole_sum_f_np, s, a, K)


def pole_sum_psi(s, a, K):
    return _flatten_call(_pole_sum_psi_nb if _HAVE_NUMBA else None, _pole_sum_psi_np, s, a, K)


def pole_sum_fp(s, a, K):
    return _flatten_call(_pole_sum_fp_nb if _HAVE_NUMBA else None, _pole_sum_fp_np, s, a, K)


def pole_sum_fpp(s, a, K):
    return _flatten_call(_pole_sum_fpp_nb if _HAVE_NUMBA else None, _pole_sum_fpp_np, s, a, K)


def thomas_batch(lower, diag, upper, rhs):
    lower = np.ascontiguousarray(lower, dtype=np.float64)
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    upper = np.ascontiguousarray(upper, dtype=np.float64)
    rhs = np.ascontiguousarray(rhs, dtype=np.float64)
    if _HAVE_NUMBA:
        return _thomas_batch_nb(lower, diag, upper, rhs)
    return _thomas_batch_np(lower, diag, upper, rhs)


# exported for the backend benchmark
numpy_impls = {
    "pole_sum_f": _pole_sum_f_np,
    "pole_sum_psi": _pole_sum_psi_np,
    "thomas_batch": _thomas_batch_np,
}
numba_impls = (
    {
        "pole_sum_f": lambda s, a, K: _pole_sum_f_nb(np.asarray(s, np.complex128).ravel(), a, K),
        "pole_sum_psi": lambda s, a, K: _pole_sum_psi_nb(np.asarray(s, np.complex128).ravel(), a, K),
        "thomas_batch": lambda *args: _thomas_batch_nb(*args),
    }
    if _HAVE_NUMBA
    else {}
)
