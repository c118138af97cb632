"""Scalar special functions of the Grushin kernel machinery.

Everything here is a function of the complex quadratic form ``s = z . z``
(``<z>^2 = sum z_j^2`` for vector arguments), never of ``|z|``: that makes
the holomorphic strip extensions unambiguous.  Public entry points accept
the natural scalar/vector argument and form ``s`` internally.

The three analytic families are

* ``psi(a, z) = z coth z - a z / sinh z`` with its pole expansion, poles at
  ``s = -k^2 pi^2`` (k >= 1), valid on the strip ``|Im z| < pi``;
* the amplitudes ``amplitude_v`` (product over k >= 1, strip ``|Im| < pi``)
  and ``amplitude_v2`` (product over k >= 2, strip ``|Im| < 2 pi``);
* the reduced phase ``f_eval`` with poles at ``s = +k^2 pi^2`` (k >= 2),
  holomorphic for ``|Im| < 2 pi``, plus its gradient/Hessian in the real
  vector argument.

Near poles and near the removable singularity at 0 the closed forms lose
digits to cancellation, so evaluation switches to the pole expansions,
truncated adaptively with Hurwitz-zeta tail corrections (the raw partial
sums converge only like 1/K, far too slowly on their own).
"""

from __future__ import annotations

import numpy as np
from scipy import special as _sp

from . import _accel
from .errors import DomainError, InverseRangeError

PI = np.pi
PI2 = np.pi ** 2

# switch to the series inside this distance of a pole / of s = 0
POLE_SWITCH = 0.1
# wider guard for f_eval near s = pi^2 where two closed-form poles cancel
F_K1_SWITCH = 0.5

_TAIL_ORDERS = 8


class SeriesPolicy:
    """Truncation policy for the pole expansions.

    ``truncation_terms`` caps the number of explicit terms; the adaptive
    choice takes ``K ~ sqrt(max |s|)`` so the tail corrections converge
    geometrically.  ``tail_bound_tolerance`` is the target for the analytic
    tail bound.
    """

    def __init__(self, truncation_terms: int = 4096, tail_bound_tolerance: float = 1e-14):
        if truncation_terms < 1:
            raise ValueError("truncation_terms must be >= 1")
        if tail_bound_tolerance <= 0:
            raise ValueError("tail_bound_tolerance must be > 0")
        self.truncation_terms = int(truncation_terms)
        self.tail_bound_tolerance = float(tail_bound_tolerance)


DEFAULT_POLICY = SeriesPolicy()


def _terms_for(smax: float, policy: SeriesPolicy) -> int:
    # geometric tail factor q = smax / (pi K)^2; q^_TAIL_ORDERS must clear tol
    K = 32
    while K < policy.truncation_terms:
        q = smax / (PI2 * (K + 1) ** 2)
        if q < 0.35 and 2.0 * max(smax, 1.0) * q ** _TAIL_ORDERS < policy.tail_bound_tolerance:
            break
        K *= 2
    return K


def _alt_tail(p: int, K: int) -> float:
    # sum_{k>K} (-1)^k k^{-p}
    return (-1.0) ** (K + 1) * 2.0 ** (-p) * (_sp.zeta(p, (K + 1) / 2) - _sp.zeta(p, (K + 2) / 2))


def _zk_tails(a: float, K: int, orders: int) -> np.ndarray:
    # Z_j = sum_{k>K} (1 - a(-1)^k) k^{-2j}, j = 1..orders
    out = np.empty(orders)
    for j in range(1, orders + 1):
        out[j - 1] = _sp.zeta(2 * j, K + 1) - a * _alt_tail(2 * j, K)
    return out


# ---------------------------------------------------------------------------
# closed forms, analytic in s
# ---------------------------------------------------------------------------


def _as_complex(s):
    return np.asarray(s, dtype=np.complex128)


def sinhc_log(s):
    """Analytic branch of log(sinh(sqrt(s))/sqrt(s)) on C minus (-inf, -pi^2]."""
    s = _as_complex(s)
    w = np.sqrt(s)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-3
    if small.any():
        ss = s[small]
        out[small] = np.log1p(ss / 6 + ss ** 2 / 120 + ss ** 3 / 5040)
    big = ~small
    if big.any():
        wb = w[big]
        out[big] = wb + np.log1p(-np.exp(-2 * wb)) - np.log(2 * wb)
    return out


def x_over_sinh(s):
    """sqrt(s)/sinh(sqrt(s)) as an analytic function of s."""
    return np.exp(-sinhc_log(s))


def x_coth(s):
    """sqrt(s)*coth(sqrt(s)) as an analytic function of s."""
    s = _as_complex(s)
    w = np.sqrt(s)
    out = np.empty_like(w)
    small = np.abs(w) < 1e-3
    if small.any():
        ss = s[small]
        out[small] = 1 + ss / 3 - ss ** 2 / 45 + 2 * ss ** 3 / 945
    big = ~small
    if big.any():
        wb = w[big]
        e = np.exp(-2 * wb)
        out[big] = wb * (1 + e) / (1 - e)
    return out


def _near_psi_singularity(s):
    # poles of psi/V at s = -k^2 pi^2, plus the removable point s = 0
    s = _as_complex(s)
    k = np.maximum(np.rint(np.sqrt(np.maximum(-s.real, 0.0)) / PI), 0.0)
    dist_pole = np.abs(s + k ** 2 * PI2)
    return (np.abs(s) < POLE_SWITCH) | ((k >= 1) & (dist_pole < POLE_SWITCH))


def psi_from_s(a: float, s, policy: SeriesPolicy = DEFAULT_POLICY):
    """psi_a evaluated through the quadratic form s; array-friendly."""
    s = _as_complex(s)
    out = np.empty_like(s)
    near = _near_psi_singularity(s)
    far = ~near
    if far.any():
        sf = s[far]
        out[far] = x_coth(sf) - a * x_over_sinh(sf)
    if near.any():
        out[near] = psi_series_from_s(a, s[near], policy)
    return out


def psi_series_from_s(a: float, s, policy: SeriesPolicy = DEFAULT_POLICY):
    """Pole-expansion evaluation of psi_a with tail corrections."""
    s = _as_complex(s)
    K = _terms_for(float(np.max(np.abs(s), initial=0.0)), policy)
    core = _accel.pole_sum_psi(s, a, K)
    # tail: sum_{k>K} ck s/(s+k^2pi^2) = sum_{m>=1} (-1)^{m-1} s^m pi^{-2m} Z_m
    zs = _zk_tails(a, K, _TAIL_ORDERS)
    tail = np.zeros_like(s)
    term = np.ones_like(s)
    for m in range(1, _TAIL_ORDERS + 1):
        term = term * (s / PI2)
        tail += (-1.0) ** (m - 1) * term * zs[m - 1]
    return 1 - a + 2 * (core + tail)


def psi(a: float, z, policy: SeriesPolicy = DEFAULT_POLICY):
    """psi_a(z) on the strip |Im z| < pi.

    ``z`` may be a real/complex scalar or a real vector (the quadratic form
    of the vector is used).
    """
    _check_a(a)
    s = _quadratic_form(z, strip=PI)
    return _scalarize(psi_from_s(a, s, policy))


def psi_series(a: float, z, policy: SeriesPolicy = DEFAULT_POLICY):
    """Series form of psi_a; independent path used for cross-validation."""
    _check_a(a)
    s = _quadratic_form(z, strip=PI)
    return _scalarize(psi_series_from_s(a, s, policy))


# ---------------------------------------------------------------------------
# mu_a and its inverse
# ---------------------------------------------------------------------------

_MU_SERIES_CUT = 0.5


def _mu_closed(a: float, t):
    st, ct = np.sin(t), np.cos(t)
    return -ct / st + t / st ** 2 + a * (1.0 / st - t * ct / st ** 2)


def _mu_prime_closed(a: float, t):
    st, ct = np.sin(t), np.cos(t)
    return 2 / st ** 2 - 2 * t * ct / st ** 3 + a * (t / st - 2 * ct / st ** 2 + 2 * t * ct ** 2 / st ** 3)


def _mu_series(a: float, t, policy: SeriesPolicy = DEFAULT_POLICY):
    t = np.asarray(t, dtype=float)
    t2 = t * t
    K = _terms_for(float(np.max(t2, initial=0.0)), policy)
    k = np.arange(1, K + 1)
    ck = 1.0 - a * (-1.0) ** k
    kk = k * k * PI2
    core = (ck * kk / (kk - t2[..., None]) ** 2).sum(axis=-1)
    zs = _zk_tails(a, K, _TAIL_ORDERS)
    tail = np.zeros_like(t2)
    term = np.ones_like(t2) / PI2
    for m in range(_TAIL_ORDERS):
        tail += (m + 1) * term * zs[m]
        term = term * (t2 / PI2)
    return 4 * t * (core + tail)


def _mu_prime_series(a: float, t, policy: SeriesPolicy = DEFAULT_POLICY):
    t = np.asarray(t, dtype=float)
    t2 = t * t
    K = _terms_for(float(np.max(t2, initial=0.0)), policy)
    k = np.arange(1, K + 1)
    ck = 1.0 - a * (-1.0) ** k
    kk = k * k * PI2
    core = (ck * kk * (kk + 3 * t2[..., None]) / (kk - t2[..., None]) ** 3).sum(axis=-1)
    zs = _zk_tails(a, K, _TAIL_ORDERS)
    tail = np.zeros_like(t2)
    term = np.ones_like(t2) / PI2
    for m in range(_TAIL_ORDERS):
        tail += (m + 1) * (2 * m + 1) * term * zs[m]
        term = term * (t2 / PI2)
    return 4 * (core + tail)


def _check_a(a) -> None:
    if not (-1.0 <= a <= 1.0):
        raise DomainError(f"a = {a} outside [-1, 1]")


def _check_t(t) -> None:
    if np.any(np.abs(t) >= PI):
        raise DomainError("mu_a is defined on (-pi, pi) only")


def mu(a: float, t):
    """mu_a(t) = -(d/dt) psi_a(i t), strictly increasing and odd on (-pi, pi)."""
    _check_a(a)
    t = np.asarray(t, dtype=float)
    _check_t(t)
    out = np.empty_like(t)
    small = np.abs(t) < _MU_SERIES_CUT
    if small.any():
        out[small] = _mu_series(a, t[small])
    if (~small).any():
        out[~small] = _mu_closed(a, t[~small])
    return _scalarize(out)


def mu_prime(a: float, t):
    """Derivative of mu_a; positive on (-pi, pi)."""
    _check_a(a)
    t = np.asarray(t, dtype=float)
    _check_t(t)
    out = np.empty_like(t)
    small = np.abs(t) < _MU_SERIES_CUT
    if small.any():
        out[small] = _mu_prime_series(a, t[small])
    if (~small).any():
        out[~small] = _mu_prime_closed(a, t[~small])
    return _scalarize(out)


_MU_T_MAX = np.nextafter(PI, 0.0)


def mu_inverse(a: float, s: float, tol: float = 1e-12) -> float:
    """Invert mu_a: the unique t in (-pi, pi) with mu_a(t) = s.

    Bracketed Newton with bisection fallback; converges when
    ``|mu(t) - s| <= tol * max(1, |s|)``.  For ``a == -1`` the range of
    mu is (-pi/2, pi/2): values outside raise :class:`InverseRangeError`
    (the caller must use the vertical distance branch).
    """
    _check_a(a)
    s = float(s)
    if s == 0.0:
        return 0.0
    if a == -1.0 and abs(s) >= PI / 2:
        raise InverseRangeError(f"|s| = {abs(s)} >= pi/2 is outside the range of mu_(-1)")
    sign = 1.0 if s > 0 else -1.0
    s = abs(s)
    lo, hi = 0.0, _MU_T_MAX
    if mu(a, hi) < s:
        # monotone limit saturated by double precision; report the endpoint
        return sign * hi
    t = min(hi, max(1e-8, s / max(mu_prime(a, 0.0), 1e-30)))
    target = tol * max(1.0, s)
    for _ in range(200):
        ft = mu(a, t) - s
        if abs(ft) <= target:
            return sign * t
        if ft > 0:
            hi = t
        else:
            lo = t
        step = ft / mu_prime(a, t)
        t_new = t - step
        if not (lo < t_new < hi):
            t_new = 0.5 * (lo + hi)
        t = t_new
    ft = mu(a, t) - s
    if abs(ft) <= 1e3 * target:
        return sign * t
    raise ArithmeticError(f"mu_inverse failed to converge: a={a}, s={sign*s}")


# ---------------------------------------------------------------------------
# amplitudes V and V2
# ---------------------------------------------------------------------------


def _quadratic_form(z, strip: float):
    """Complex quadratic form of a scalar or real-vector strip argument."""
    z = np.asarray(z)
    if z.ndim == 1 and z.size > 1:
        if np.iscomplexobj(z):
            if np.any(np.abs(np.linalg.norm(z.imag)) >= strip):
                raise DomainError("argument outside the holomorphic strip")
            return np.asarray(z @ z, dtype=complex)
        return np.asarray(z @ z, dtype=complex)
    z = z.astype(complex)
    if np.any(np.abs(z.imag) >= strip):
        raise DomainError("argument outside the holomorphic strip")
    return z * z


def _near_v2_pole(s):
    s = _as_complex(s)
    k = np.maximum(np.rint(np.sqrt(np.maximum(-s.real, 0.0)) / PI), 2.0)
    return np.abs(s + k ** 2 * PI2) < POLE_SWITCH


def amplitude_v_from_s(n: int, s):
    """(sqrt(s)/sinh sqrt(s))^{n/2} via the analytic log; poles s = -k^2 pi^2."""
    s = _as_complex(s)
    if np.any(_near_psi_singularity(s) & (np.abs(s) >= POLE_SWITCH)):
        raise DomainError("amplitude_v evaluated at a product pole")
    return np.exp(-(n / 2) * sinhc_log(s))


def amplitude_v2_from_s(n: int, s, policy: SeriesPolicy = DEFAULT_POLICY):
    """Product over k >= 2: (1 + s/(k^2 pi^2))^{-n/2} on Re s > -4 pi^2."""
    s = _as_complex(s)
    if np.any(_near_v2_pole(s)):
        raise DomainError("amplitude_v2 evaluated at a product pole (k >= 2)")
    out = np.empty_like(s)
    near1 = np.abs(s + PI2) < 1.0
    far = ~near1
    if far.any():
        sf = s[far]
        out[far] = np.exp((n / 2) * (np.log1p(sf / PI2) - sinhc_log(sf)))
    if near1.any():
        # explicit product near the cancelled k=1 factor
        sn = s[near1]
        K = 64
        k = np.arange(2, K + 1)
        lg = np.log1p(sn[..., None] / (k * k * PI2)).sum(axis=-1)
        zs2 = _sp.zeta(2, K + 1)
        zs4 = _sp.zeta(4, K + 1)
        zs6 = _sp.zeta(6, K + 1)
        tail = sn / PI2 * zs2 - sn ** 2 / (2 * PI2 ** 2) * zs4 + sn ** 3 / (3 * PI2 ** 3) * zs6
        out[near1] = np.exp(-(n / 2) * (lg + tail))
    return out


def amplitude_v(n: int, z):
    """V(z) = (sqrt(s)/sinh sqrt(s))^{n/2}, s the quadratic form of z; strip |Im| < pi."""
    s = _quadratic_form(z, strip=PI)
    return _scalarize(amplitude_v_from_s(n, s))


def amplitude_v2(n: int, z):
    """V2(z) = prod_{k>=2}(1 + s/(k^2 pi^2))^{-n/2}; strip |Im| < 2 pi."""
    s = _quadratic_form(z, strip=2 * PI)
    return _scalarize(amplitude_v2_from_s(n, s))


def amplitude_v2_product(n: int, z, terms: int = 10_000):
    """Direct partial-product oracle for V2 with a first-order tail factor."""
    s = _quadratic_form(z, strip=2 * PI)
    k = np.arange(2, terms + 2)
    lg = np.log1p(s[..., None] / (k * k * PI2)).sum(axis=-1)
    tail = s / PI2 * _sp.zeta(2, terms + 2)
    return _scalarize(np.exp(-(n / 2) * (lg + tail)))


def v2_tilde(n: int, z):
    """Scalar-argument V2: argument is one complex number, form s = z^2."""
    z = complex(z)
    if abs(z.imag) >= 2 * PI and abs(z.real) == 0.0:
        raise DomainError("v2_tilde strip is |Im z| < 2 pi")
    return _scalarize(amplitude_v2_from_s(n, np.asarray(z * z)))


# ---------------------------------------------------------------------------
# the reduced phase f and its derivatives
# ---------------------------------------------------------------------------


def _near_f_singularity(s):
    s = _as_complex(s)
    k = np.maximum(np.rint(np.sqrt(np.maximum(s.real, 0.0)) / PI), 2.0)
    near_pole = np.abs(s - k ** 2 * PI2) < POLE_SWITCH
    near_k1 = np.abs(s - PI2) < F_K1_SWITCH
    return near_pole | near_k1 | (np.abs(s) < POLE_SWITCH)


def f_from_s(R2: float, a: float, s, policy: SeriesPolicy = DEFAULT_POLICY):
    """f(R, a; .) through the quadratic form s; poles at s = k^2 pi^2, k >= 2."""
    s = _as_complex(s)
    out = np.empty_like(s)
    near = _near_f_singularity(s)
    far = ~near
    if far.any():
        sf = s[far]
        out[far] = R2 * (psi_from_s(a, -sf, policy) + 2 * sf * (1 + a) / (PI2 - sf))
    if near.any():
        out[near] = f_series_from_s(R2, a, s[near], policy)
    return out


def f_series_from_s(R2: float, a: float, s, policy: SeriesPolicy = DEFAULT_POLICY):
    s = _as_complex(s)
    K = _terms_for(float(np.max(np.abs(s), initial=0.0)), policy)
    core = _accel.pole_sum_f(s, a, K)
    zs = _zk_tails(a, K, _TAIL_ORDERS)
    tail = np.zeros_like(s)
    term = np.ones_like(s)
    for m in range(1, _TAIL_ORDERS + 1):
        term = term * (s / PI2)
        tail += term * zs[m - 1]
    return R2 * (1 - a) - 2 * R2 * (core + tail)


def f_prime_from_s(R2: float, a: float, s, policy: SeriesPolicy = DEFAULT_POLICY):
    """d/ds of f_from_s (term-wise differentiated series)."""
    s = _as_complex(s)
    K = _terms_for(float(np.max(np.abs(s), initial=0.0)), policy)
    core = _accel.pole_sum_fp(s, a, K)
    zs = _zk_tails(a, K, _TAIL_ORDERS + 1)
    tail = np.zeros_like(s)
    term = np.ones_like(s) / PI2
    for m in range(_TAIL_ORDERS):
        tail += (m + 1) * term * zs[m]
        term = term * (s / PI2)
    return -2 * R2 * (core + tail)


def f_second_from_s(R2: float, a: float, s, policy: SeriesPolicy = DEFAULT_POLICY):
    """d^2/ds^2 of f_from_s."""
    s = _as_complex(s)
    K = _terms_for(float(np.max(np.abs(s), initial=0.0)), policy)
    core = _accel.pole_sum_fpp(s, a, K)
    zs = _zk_tails(a, K, _TAIL_ORDERS + 2)
    tail = np.zeros_like(s)
    term = np.ones_like(s) / PI2 ** 2
    for m in range(_TAIL_ORDERS):
        tail += (m + 1) * (m + 2) / 2 * term * zs[m + 1]
        term = term * (s / PI2)
    return -4 * R2 * (core + tail)


def f_eval(R2: float, a: float, z):
    """f(R, a; z) for scalar or vector z within the strip |Im| < 2 pi."""
    if R2 < 0:
        raise DomainError("R2 must be >= 0")
    _check_a(a)
    s = _quadratic_form(z, strip=2 * PI)
    return _scalarize(f_from_s(R2, a, s))


def f_grad(R2: float, a: float, theta: np.ndarray) -> np.ndarray:
    """Gradient of f(R, a; .) at a real vector; grad = 2 f'(s) theta."""
    theta = np.asarray(theta, dtype=float)
    s = np.asarray(theta @ theta, dtype=complex)
    return 2 * f_prime_from_s(R2, a, s).real * theta


def f_hess(R2: float, a: float, theta: np.ndarray) -> np.ndarray:
    """Hessian of f(R, a; .) at a real vector: 2 f'(s) I + 4 f''(s) theta theta^T."""
    theta = np.asarray(theta, dtype=float)
    s = np.asarray(theta @ theta, dtype=complex)
    fp = f_prime_from_s(R2, a, s).real
    fpp = f_second_from_s(R2, a, s).real
    return 2 * fp * np.eye(theta.size) + 4 * fpp * np.outer(theta, theta)


def _scalarize(arr):
    arr = np.asarray(arr)
    if arr.ndim == 0:
        v = arr.item()
        return v
    return arr
