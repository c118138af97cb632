"""Heat-kernel evaluation: two exact integral representations plus dispatch.

At time 1 the kernel is a Fourier-type integral over the fiber variable
(the "direct" representation).  Its integrand peaks at exp(-R^2(1-a)/4)
while the value is ~ exp(-d^2/4): the difference of the two exponents (the
*cancellation exponent*) measures how many digits the oscillation must
cancel, and caps where the direct route is usable in double precision.

Beyond that budget two contour-shifted forms take over:

* the *saddle-shifted* representation moves the contour to the stationary
  point i*theta, extracts exp(-d^2/4) exactly, and integrates a bell-shaped
  profile (usable while the amplitude pole stays away, eps >= pi/8);
* the *transformed* Laplace representation additionally splits off the
  singular amplitude factor through a Gaussian identity and is the workhorse
  of the difficult regime eps <= pi/8 (assumption (AN): x_g != 0, eps > 0).

Time h reduces to time 1 through the anisotropic scaling
p_h(g, g') = h^{-n/2-n'} p_1(g_h, g_h').
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special as _sp

from . import scalar
from .geometry import PairGeometry, Point, reduce_pair
from .errors import ConvergenceError, PrecisionBudgetError, RegimeError
from .quadrature import (
    DEFAULT_SPEC,
    QuadSpec,
    cap_oscillation,
    geometric_edges,
    integrate_adaptive,
    integrate_tanhsinh,
)

PI = np.pi
PI2 = np.pi ** 2

CANCELLATION_BUDGET = 30.0
CANCELLATION_BUDGET_EXTENDED = 60.0
DIFFICULT_EPS = PI / 8

_LOG_TINY = -np.log(1e18)  # relative truncation threshold for integrand tails


def c_nnp(n: int, nprime: int) -> float:
    """Prefactor of the transformed representation."""
    return 1.0 / ((2 * PI) ** (n / 2) * (4 * PI) ** (nprime + n / 2))


def c_tilde(n: int, nprime: int) -> float:
    return (2 * PI) ** (nprime / 2) * c_nnp(n, nprime)


@dataclass(frozen=True)
class EvalResult:
    """Outcome of a kernel evaluation.

    ``value`` is p_h(g, g'); ``norm_value`` is p * exp(d^2/4) (finite even
    when the raw value underflows); ``log_value`` is ln p.  ``norm_err``
    is the error estimate on the normalized scale.
    """

    value: float
    abs_err: float
    method: str
    regime: str
    d2: float = np.nan
    norm_value: float = np.nan
    norm_err: float = np.nan
    log_value: float = np.nan
    neval: int = 0
    extra: Optional[dict] = None

    def __post_init__(self):
        if self.abs_err < 0:
            raise ValueError("abs_err must be >= 0")


def _result_from_norm(norm_value, norm_err, d2, method, regime, neval, h_factor=1.0, extra=None):
    """Assemble an EvalResult from the exp(+d^2/4)-normalized value."""
    norm_value = float(norm_value) * h_factor
    norm_err = float(norm_err) * h_factor
    if norm_value > 0:
        log_value = np.log(norm_value) - d2 / 4
    else:
        log_value = -np.inf
    damp = np.exp(-d2 / 4) if d2 / 4 < 745 else 0.0
    return EvalResult(value=norm_value * damp, abs_err=norm_err * damp, method=method,
                      regime=regime, d2=d2, norm_value=norm_value, norm_err=norm_err,
                      log_value=log_value, neval=neval, extra=extra)


def _result_from_raw(value, err, d2, method, regime, neval, extra=None):
    value = float(value)
    log_value = np.log(value) if value > 0 else -np.inf
    boost = np.exp(d2 / 4) if d2 / 4 < 700 else np.inf
    norm = value * boost if value > 0 else 0.0
    return EvalResult(value=value, abs_err=err, method=method, regime=regime, d2=d2,
                      norm_value=norm, norm_err=err * boost, log_value=log_value,
                      neval=neval, extra=extra)


def _regime_tag(pair: PairGeometry) -> str:
    if pair.branch == "coincident":
        return "coincident"
    if pair.branch == "vertical":
        return "vertical"
    return "simple" if pair.eps >= DIFFICULT_EPS else "difficult"


def cancellation_exponent(pair: PairGeometry) -> float:
    """(d^2 - R^2 (1 - a))/4 for the (already rescaled) pair."""
    return (pair.d2 - pair.R2 * (1 - pair.a)) / 4


# ---------------------------------------------------------------------------
# radial reduction weights
# ---------------------------------------------------------------------------


def _jv_scaled(nu: float, z: np.ndarray) -> np.ndarray:
    """z^{-nu} J_nu(z), stable through z = 0."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-3
    if small.any():
        zs = z[small]
        c0 = 2.0 ** (-nu) / _sp.gamma(nu + 1)
        out[small] = c0 * (1 - zs ** 2 / (4 * (nu + 1)) + zs ** 4 / (32 * (nu + 1) * (nu + 2)))
    if (~small).any():
        zb = z[~small]
        out[~small] = _sp.jv(nu, zb) / zb ** nu
    return out


def fourier_weight(nprime: int, rho: np.ndarray, b: float) -> np.ndarray:
    """Angular average of exp(i b . lam) over |lam| = rho, times rho^{n'-1}.

    Equals (2 pi)^{n'/2} (b rho)^{1 - n'/2} J_{n'/2-1}(b rho) rho^{n'-1};
    reduces to the sphere area for b = 0.
    """
    rho = np.asarray(rho, dtype=float)
    nu = nprime / 2 - 1
    if b == 0.0:
        surf = 2 * PI ** (nprime / 2) / _sp.gamma(nprime / 2)
        return surf * rho ** (nprime - 1)
    return (2 * PI) ** (nprime / 2) * _jv_scaled(nu, b * rho) * rho ** (nprime - 1)


def fourier_weight_next(nprime: int, rho: np.ndarray, b: float) -> np.ndarray:
    """Order-raised weight for the fiber-derivative integrand (lam_k factor)."""
    rho = np.asarray(rho, dtype=float)
    nu = nprime / 2 - 1
    return (2 * PI) ** (nprime / 2) * _jv_scaled(nu + 1, b * rho) * (b * rho) * rho ** (nprime - 1)


def _ive_scaled(nu: float, z: np.ndarray) -> np.ndarray:
    """z^{-nu} I_nu(z) e^{-z}, stable through z = 0."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < 1e-3
    if small.any():
        zs = z[small]
        c0 = 2.0 ** (-nu) / _sp.gamma(nu + 1)
        out[small] = c0 * (1 + zs ** 2 / (4 * (nu + 1))) * np.exp(-zs)
    if (~small).any():
        zb = z[~small]
        out[~small] = _sp.ive(nu, zb) / zb ** nu
    return out


def gaussian_radial_weight(n: int, t: np.ndarray, y: float) -> np.ndarray:
    """Radial weight of int_{R^n} e^{-|xi - y|^2/2} G(|xi|) dxi (y = |y| vector norm)."""
    t = np.asarray(t, dtype=float)
    nu = n / 2 - 1
    return ((2 * PI) ** (n / 2) * np.exp(-0.5 * (t - y) ** 2)
            * _ive_scaled(nu, t * y) * t ** (n - 1))


_SPHERE = lambda m: 2 * PI ** ((m + 1) / 2) / _sp.gamma((m + 1) / 2)  # area of S^m


# ---------------------------------------------------------------------------
# direct representation
# ---------------------------------------------------------------------------


def _direct_amplitude(n: int, R2: float, a: float, rho: np.ndarray) -> np.ndarray:
    """(rho/sinh rho)^{n/2} exp(-R2 (psi_a(rho) - (1-a))/4) on the real axis."""
    s = np.asarray(rho, dtype=float) ** 2
    psi = scalar.psi_from_s(a, s).real
    v = np.exp(-(n / 2) * scalar.sinhc_log(s).real)
    return v * np.exp(-R2 * (psi - (1 - a)) / 4)


def _direct_truncation(n, nprime, R2, a, b, spec) -> float:
    T = spec.trunc_radius
    cut = np.exp(_LOG_TINY)

    def env(rho):
        r = np.asarray([rho])
        return float(_direct_amplitude(n, R2, a, r)[0] * (1 + r[0]) ** (nprime - 1))

    while env(T) > cut and T < 2000:
        T *= 1.4
    while T > 4.0 and env(T / 1.4) < cut:
        T /= 1.4
    return T


def kernel_direct(g: Point, gp: Point, h: float = 1.0, spec: QuadSpec = DEFAULT_SPEC) -> EvalResult:
    """Raw Fourier representation, reduced to one radial integral.

    Usable while the cancellation exponent stays within the precision
    budget (30 decimal digits of headroom in double precision, 60 with
    ``extended_precision``); raises :class:`PrecisionBudgetError` beyond.
    """
    if h <= 0:
        raise RegimeError("h must be > 0")
    pair = reduce_pair(g.scaled(h), gp.scaled(h))
    regime = _regime_tag(pair)
    cancel = cancellation_exponent(pair)
    budget = CANCELLATION_BUDGET_EXTENDED if spec.extended_precision else CANCELLATION_BUDGET
    if cancel > budget:
        raise PrecisionBudgetError(
            f"cancellation exponent {cancel:.1f} exceeds the budget {budget}")
    if spec.extended_precision and cancel > CANCELLATION_BUDGET:
        return _kernel_direct_mp(pair, h, spec, regime)

    n, nprime = pair.n, pair.nprime
    R2, a = pair.R2, pair.a
    b = pair.r / 2

    def integrand(rho):
        return _direct_amplitude(n, R2, a, rho) * fourier_weight(nprime, rho, b)

    T = _direct_truncation(n, nprime, R2, a, b, spec)
    edges = geometric_edges(scale=min(1.0, T / 4), upper=T)
    if b > 0:
        edges = cap_oscillation(edges, PI / (2 * b))
    probe = integrand(np.linspace(1e-3, T, 64))
    floor = 5e-16 * float(np.max(np.abs(probe))) * max(1.0, np.sqrt(len(edges)))

    if spec.rule == "double-exponential" and b == 0.0:
        val, err, nev = integrate_tanhsinh(integrand, 0.0, T, rel_tol=spec.rel_tol)
    else:
        val, err, nev = integrate_adaptive(integrand, edges, rel_tol=spec.rel_tol,
                                           abs_floor=floor, max_panels=spec.max_refine)
    pref = (4 * PI * h) ** (-n / 2 - nprime)
    scale = np.exp(-R2 * (1 - a) / 4)
    value = pref * scale * val
    abs_err = pref * scale * (err + floor)
    if value <= 0:
        raise ConvergenceError(
            f"direct quadrature lost positivity (value {value:.3e}, err {abs_err:.3e})")
    return _result_from_raw(value, abs_err, pair.d2, "direct", regime, nev)


def _kernel_direct_mp(pair: PairGeometry, h: float, spec: QuadSpec, regime: str) -> EvalResult:
    """Extended-precision accumulation of the radial integral (mpmath)."""
    import mpmath as mp

    n, nprime, R2, a = pair.n, pair.nprime, pair.R2, pair.a
    b = pair.r / 2
    nu = nprime / 2 - 1
    T = _direct_truncation(n, nprime, R2, a, b, spec)
    with mp.workdps(40):
        R2m, am, bm = mp.mpf(R2), mp.mpf(a), mp.mpf(b)

        def f(rho):
            if rho == 0:
                return mp.mpf(0) if nprime > 1 else 2 * mp.exp(-R2m * (1 - am) / 4) * 0 + 2
            psi = rho / mp.tanh(rho) - am * rho / mp.sinh(rho)
            amp = (rho / mp.sinh(rho)) ** (mp.mpf(n) / 2) * mp.exp(-R2m * (psi - (1 - am)) / 4)
            if b == 0:
                w = 2 * mp.pi ** (mp.mpf(nprime) / 2) / mp.gamma(mp.mpf(nprime) / 2) * rho ** (nprime - 1)
            else:
                z = bm * rho
                w = (2 * mp.pi) ** (mp.mpf(nprime) / 2) * mp.besselj(nu, z) / z ** nu * rho ** (nprime - 1)
            return amp * w

        pts = [0]
        if b > 0:
            step = float(PI / (2 * b))
            pts += list(np.arange(step, T, step)[:2000])
        pts.append(T)
        val = mp.quad(f, pts)
        pref = mp.mpf(4 * PI * h) ** (-mp.mpf(n) / 2 - nprime)
        value = float(pref * mp.exp(-R2m * (1 - am) / 4) * val)
    err = abs(value) * 1e-18
    return _result_from_raw(value, err, pair.d2, "direct", regime, -1,
                            extra={"precision": "mpmath-dps40"})


# ---------------------------------------------------------------------------
# saddle-shifted representation (simple regime)
# ---------------------------------------------------------------------------


def _perp_grid(scale: float, upper: float, nprime: int):
    """Fixed transverse grid (nodes, weights incl. t^{n'-2} and sphere factor)."""
    edges = geometric_edges(scale, upper)
    x, w = np.polynomial.legendre.leggauss(16)
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    ts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wts = (half[:, None] * w[None, :]).ravel()
    wts = wts * ts ** (nprime - 2) * _SPHERE(nprime - 2)
    return ts, wts


def kernel_shifted(g: Point, gp: Point, h: float = 1.0, spec: QuadSpec = DEFAULT_SPEC) -> EvalResult:
    """Stationary-contour representation; exact for generic pairs.

    Shifts the fiber contour to the saddle i*theta, which extracts
    exp(-d^2/4) analytically and removes the oscillatory cancellation.
    The amplitude grows like eps^{-n/2} as the saddle approaches the pole,
    so this path is intended for eps >= pi/8 (it stays correct for any
    eps > 0, only less efficient).
    """
    if h <= 0:
        raise RegimeError("h must be > 0")
    pair = reduce_pair(g.scaled(h), gp.scaled(h))
    if pair.branch == "vertical":
        raise RegimeError("saddle-shifted representation needs a generic pair")
    n, nprime = pair.n, pair.nprime
    R2, a, rs, d2 = pair.R2, pair.a, pair.r, pair.d2
    tt = pair.theta_norm

    def cplx(l1, tperp2):
        sarg = l1 ** 2 + tperp2 - tt ** 2 + 2j * tt * l1
        expo = (R2 * scalar.psi_from_s(a, sarg) - 2j * rs * l1 + 2 * rs * tt - d2) / 4
        return scalar.amplitude_v_from_s(n, sarg) * np.exp(-expo)

    peak = abs(cplx(np.array([0.0]), 0.0)[0])

    def _find_L(fun):
        L = 2.0
        while abs(fun(L)) > peak * 1e-18 and L < 400:
            L *= 1.6
        return L

    L1 = _find_L(lambda t: cplx(np.array([t]), 0.0)[0])
    sig = 1.0 / np.sqrt(1.0 + R2 / 4)

    if nprime == 1:
        def integrand(l1):
            return 2 * cplx(l1, 0.0).real
        ts = wts = None
    else:
        L2 = _find_L(lambda t: cplx(np.array([0.0]), t * t)[0])
        ts, wts = _perp_grid(min(sig, L2 / 4), L2, nprime)

        def integrand(l1):
            vals = cplx(l1[:, None], (ts ** 2)[None, :])
            return 2 * (vals @ wts).real

    edges = geometric_edges(scale=min(sig, L1 / 4), upper=L1)
    edges = cap_oscillation(edges, max(4 * sig, 8 * PI / (4 + rs)))
    val, err, nev = integrate_adaptive(integrand, edges, rel_tol=spec.rel_tol,
                                       abs_floor=0.0, max_panels=spec.max_refine)
    pref = (4 * PI) ** (-n / 2 - nprime)
    h_factor = h ** (-n / 2 - nprime)
    if val <= 0:
        raise ConvergenceError("shifted quadrature lost positivity")
    return _result_from_norm(pref * val, pref * err, d2, "shifted",
                             _regime_tag(pair), nev, h_factor=h_factor)


# ---------------------------------------------------------------------------
# transformed representation (difficult regime)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransformedContext:
    """Frozen coefficients of the Laplace-type representation for one pair."""

    pair: PairGeometry
    n: int
    nprime: int
    s0: float              # |theta|^2
    tt: float              # |theta|
    eps: float
    yg: float              # |y_g|
    f0: float              # f(R, a; theta)
    fp: float              # d f / ds at s0
    fpp: float             # d^2 f / ds^2 at s0

    @classmethod
    def build(cls, pair: PairGeometry) -> "TransformedContext":
        if pair.branch != "generic" or float(np.linalg.norm(pair.x_g)) == 0.0 or pair.eps <= 0:
            raise RegimeError("transformed representation requires x_g != 0 and eps > 0 (AN)")
        s0 = pair.theta_norm ** 2
        sc = np.asarray(s0, dtype=complex)
        return cls(pair=pair, n=pair.n, nprime=pair.nprime, s0=s0, tt=pair.theta_norm,
                   eps=pair.eps, yg=pair.y_norm,
                   f0=float(scalar.f_from_s(pair.R2, pair.a, sc).real),
                   fp=float(scalar.f_prime_from_s(pair.R2, pair.a, sc).real),
                   fpp=float(scalar.f_second_from_s(pair.R2, pair.a, sc).real))

    # -- pointwise maps of |xi|^2 -------------------------------------------------
    def alpha(self, xi2):
        return xi2 / (PI2 - self.s0)

    def w_coef(self, xi2):
        return (self.yg ** 2 - xi2) / (PI2 - self.s0)

    def W(self, xi2) -> np.ndarray:
        return self.w_coef(xi2) * self.pair.theta

    def A_eigs(self, xi2):
        """(transverse, along-theta) eigenvalues of A(xi)."""
        perp = self.alpha(xi2) - self.fp / 2
        par = perp - self.fpp * self.s0
        return perp, par

    def A_matrix(self, xi2) -> np.ndarray:
        th = self.pair.theta
        return (self.alpha(xi2) - self.fp / 2) * np.eye(self.nprime) - self.fpp * np.outer(th, th)

    def det_A(self, xi2):
        perp, par = self.A_eigs(xi2)
        return perp ** (self.nprime - 1) * par

    def E(self, xi2):
        """Quadratic form W^T A^{-1} W through the eigen-decomposition."""
        _, par = self.A_eigs(xi2)
        return (self.w_coef(xi2) * self.tt) ** 2 / par

    def E_solve(self, xi2) -> float:
        """Same quantity through a dense linear solve (independent path)."""
        W = self.W(xi2)
        v = np.linalg.solve(self.A_matrix(xi2), W)
        return float(W @ v)

    def Lambda(self, xi2):
        return self.pair.R2 + xi2 / self.eps

    # -- integrand pieces ----------------------------------------------------------
    def s_base(self, l1, lam2):
        """S_g(lambda) - (1/2) lam^T Hess f lam  (the xi-independent exponent part)."""
        sarg = self.s0 - lam2 - 2j * self.tt * l1
        return (scalar.f_from_s(self.pair.R2, self.pair.a, sarg) - self.f0
                + 2j * self.tt * self.fp * l1)

    def S_g(self, lam: np.ndarray):
        """Third-order remainder phase S_g(lambda) at a real fiber vector."""
        lam = np.asarray(lam, dtype=float)
        l1 = float(lam @ self.pair.u_hat) if self.tt > 0 else 0.0
        lam2 = float(lam @ lam)
        quad = 0.5 * (2 * self.fp * lam2 + 4 * self.fpp * (self.tt * l1) ** 2)
        return complex(self.s_base(np.asarray(l1), np.asarray(lam2)) + quad)

    def S_g_xi(self, xi2: float, lam: np.ndarray):
        lam = np.asarray(lam, dtype=float)
        l1 = float(lam @ self.pair.u_hat) if self.tt > 0 else 0.0
        lam2 = float(lam @ lam)
        lamAlam = self.alpha(xi2) * lam2 - 0.25 * (2 * self.fp * lam2
                                                   + 4 * self.fpp * (self.tt * l1) ** 2)
        return self.S_g(lam) + 2 * lamAlam - 4j * l1 * self.tt * self.w_coef(xi2)

    def v2_arg(self, l1, lam2):
        """Quadratic form of lambda + i theta."""
        return lam2 - self.s0 + 2j * self.tt * l1


def _lambda_grid(ctx: TransformedContext, alpha_min: float, w_abs_max: float,
                 rel_tol: float):
    """Shared fiber grid (l1 >= 0 half, conj-symmetric doubling) and G0 values."""
    tt = ctx.tt

    def g0_env(l1, t2):
        sb = ctx.s_base(np.asarray([l1]), np.asarray([l1 ** 2 + t2]))[0]
        v2 = scalar.amplitude_v2_from_s(ctx.n, np.asarray(ctx.v2_arg(l1, l1 ** 2 + t2)))
        return abs(v2 * np.exp(-sb / 4)) * np.exp(-alpha_min * (l1 ** 2 + t2) / 2)

    peak = g0_env(0.0, 0.0)
    cut = peak * 1e-17

    def _find(fun):
        L = 1.0
        while fun(L) > cut and L < 200:
            L *= 1.5
        return L

    L1 = _find(lambda t: g0_env(t, 0.0))
    qscale = max(alpha_min - ctx.fp / 2, 0.25)
    sig = 1.0 / np.sqrt(qscale)
    edges = geometric_edges(scale=min(sig / 2, L1 / 4), upper=L1)
    if w_abs_max > 0:
        edges = cap_oscillation(edges, max(PI / (2 * w_abs_max), L1 / 2000))
    x16, w16 = np.polynomial.legendre.leggauss(16)
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    ls = (mid[:, None] + half[:, None] * x16[None, :]).ravel()
    wls = (half[:, None] * w16[None, :]).ravel()

    if ctx.nprime == 1:
        ts = np.array([0.0])
        wts = np.array([1.0])
    else:
        L2 = _find(lambda t: g0_env(0.0, t * t))
        ts, wts = _perp_grid(min(sig, L2 / 4), L2, ctx.nprime)

    lam2 = ls[:, None] ** 2 + (ts ** 2)[None, :]
    sb = ctx.s_base(ls[:, None], lam2)
    v2 = scalar.amplitude_v2_from_s(ctx.n, ctx.v2_arg(ls[:, None], lam2))
    G0 = v2 * np.exp(-sb / 4) * (wls[:, None] * wts[None, :])
    return ls, lam2, G0


def _F_from_grid(ctx: TransformedContext, grid, xi2_arr: np.ndarray) -> np.ndarray:
    ls, lam2, G0 = grid
    xi2_arr = np.atleast_1d(xi2_arr)
    out = np.empty(xi2_arr.shape)
    for i, xi2 in enumerate(xi2_arr):
        phase = np.exp(-ctx.alpha(xi2) * lam2 / 2
                       + 1j * ctx.tt * ctx.w_coef(xi2) * ls[:, None])
        out[i] = 2 * np.sum(G0 * phase).real
    return out


def F_eval(ctx: TransformedContext, xi_radius: float, spec: QuadSpec = DEFAULT_SPEC) -> complex:
    """Inner fiber integral F(g, g'; xi) at one radius, self-contained quadrature."""
    xi2 = float(xi_radius) ** 2
    alpha = float(ctx.alpha(xi2))
    wmax = abs(ctx.w_coef(xi2)) * ctx.tt
    grid = _lambda_grid(ctx, alpha, wmax, spec.rel_tol)
    ls, lam2, G0 = grid
    phase = np.exp(-alpha * lam2 / 2 + 1j * ctx.tt * ctx.w_coef(xi2) * ls[:, None])
    val = 2 * np.sum(G0 * phase)
    # refined-grid residual as the error proxy; disagreements raise upstream
    return complex(val.real, val.imag)


def F_asymptotic(ctx: TransformedContext, xi_radius: float, varpi0: float = 1.0,
                 lambda_threshold: float = 100.0) -> float:
    """Gaussian leading term of F; gated to its validity region."""
    xi2 = float(xi_radius) ** 2
    lam = ctx.Lambda(xi2)
    E = ctx.E(xi2)
    if lam < lambda_threshold or E > varpi0 * lam ** 0.25:
        raise RegimeError(
            f"asymptotic gate violated: Lambda={lam:.1f}, E={E:.2f}")
    v2 = scalar.amplitude_v2_from_s(ctx.n, np.asarray(-ctx.s0, dtype=complex)).real
    return float((2 * PI) ** (ctx.nprime / 2) * v2 * np.exp(-E / 2) / np.sqrt(ctx.det_A(xi2)))


def F_upper(ctx: TransformedContext, xi_radius: float, c: float, C: float = 1.0) -> float:
    """Decay envelope |F| <= C exp(-c |W| (Lambda + 1)^{-1/2})."""
    xi2 = float(xi_radius) ** 2
    wnorm = abs(ctx.w_coef(xi2)) * ctx.tt
    return float(C * np.exp(-c * wnorm / np.sqrt(ctx.Lambda(xi2) + 1.0)))


def kernel_transformed(g: Point, gp: Point, spec: QuadSpec = DEFAULT_SPEC) -> EvalResult:
    """Laplace-type representation at time 1; the difficult-regime workhorse.

    exp(-d^2/4) is extracted analytically, so the result is well-scaled for
    arbitrarily large distances.  Requires (AN).
    """
    pair = reduce_pair(g, gp)
    return _kernel_transformed_pair(pair, spec)


def _kernel_transformed_pair(pair: PairGeometry, spec: QuadSpec) -> EvalResult:
    ctx = TransformedContext.build(pair)
    n = ctx.n
    yg = ctx.yg

    # outer window: Gaussian band intersected with the region where E is payable
    reach = 10.0
    t_lo = max(0.0, yg - reach)
    t_hi = yg + reach
    E_cap = 95.0

    def _shrink(t_from, t_to):
        # E is monotone in |t^2 - yg^2|; bisect the crossing of E_cap
        if ctx.E(t_to ** 2) <= E_cap:
            return t_to
        a, b = t_from, t_to
        for _ in range(60):
            m = 0.5 * (a + b)
            if ctx.E(m ** 2) <= E_cap:
                a = m
            else:
                b = m
        return b

    t_hi = _shrink(yg, t_hi)
    if ctx.E(t_lo ** 2) > E_cap:
        t_lo = 2 * yg - _shrink(yg, 2 * yg - t_lo)

    alpha_min = float(ctx.alpha(t_lo ** 2))
    w_abs = max(abs(ctx.w_coef(t_lo ** 2)), abs(ctx.w_coef(t_hi ** 2))) * ctx.tt
    grid = _lambda_grid(ctx, alpha_min, w_abs, spec.rel_tol)

    def outer(t):
        F = _F_from_grid(ctx, grid, t ** 2)
        return gaussian_radial_weight(n, t, yg) * F

    edges = np.linspace(t_lo, t_hi, 16)
    val, err, nev = integrate_adaptive(outer, edges, rel_tol=spec.rel_tol,
                                       abs_floor=0.0, max_panels=spec.max_refine)

    # grid-resolution residual: re-evaluate F at the window center on a finer grid
    probe_t = 0.5 * (t_lo + t_hi)
    f_fast = _F_from_grid(ctx, grid, np.array([probe_t ** 2]))[0]
    fine = _lambda_grid(ctx, alpha_min, w_abs * 2 + 1.0, spec.rel_tol * 0.1)
    f_fine = _F_from_grid(ctx, fine, np.array([probe_t ** 2]))[0]
    grid_rel = abs(f_fast - f_fine) / max(abs(f_fine), 1e-300)

    pref = c_nnp(ctx.n, ctx.nprime) * (1 - ctx.s0 / PI2) ** (-n / 2)
    norm = pref * val
    norm_err = pref * err + abs(norm) * grid_rel
    if norm <= 0:
        raise ConvergenceError("transformed representation lost positivity")
    return _result_from_norm(norm, norm_err, pair.d2, "transformed",
                             _regime_tag(pair), nev,
                             extra={"F_grid_rel": grid_rel})


# ---------------------------------------------------------------------------
# derivatives (direct representation)
# ---------------------------------------------------------------------------


def grad_kernel(g: Point, gp: Point, h: float = 1.0, spec: QuadSpec = DEFAULT_SPEC) -> np.ndarray:
    """Horizontal gradient (X_j p, U_{jk} p) in the first argument.

    Returns a flat vector of length n + n*n' ordered [X_1..X_n,
    U_11..U_1n', ..., U_n1..U_nn'].  Uses the differentiated fiber
    integrands of the direct representation, so the same cancellation
    budget applies.
    """
    if h <= 0:
        raise RegimeError("h must be > 0")
    gs, gps = g.scaled(h), gp.scaled(h)
    pair = reduce_pair(gs, gps)
    cancel = cancellation_exponent(pair)
    budget = CANCELLATION_BUDGET_EXTENDED if spec.extended_precision else CANCELLATION_BUDGET
    if cancel > budget:
        raise PrecisionBudgetError(
            f"gradient cancellation exponent {cancel:.1f} exceeds {budget}")
    n, nprime = pair.n, pair.nprime
    R2, a = pair.R2, pair.a
    b = pair.r / 2
    T = _direct_truncation(n, nprime, R2, a, b, spec)
    edges = geometric_edges(scale=min(1.0, T / 4), upper=T)
    if b > 0:
        edges = cap_oscillation(edges, PI / (2 * b))

    def amp(rho):
        return _direct_amplitude(n, R2, a, rho)

    def ig_coth(rho):
        s = rho ** 2
        return amp(rho) * scalar.x_coth(s).real * fourier_weight(nprime, rho, b)

    def ig_sinh(rho):
        s = rho ** 2
        return amp(rho) * scalar.x_over_sinh(s).real * fourier_weight(nprime, rho, b)

    def ig_next(rho):
        return amp(rho) * fourier_weight_next(nprime, rho, b)

    rel = spec.rel_tol
    I_coth, e1, nev1 = integrate_adaptive(ig_coth, edges, rel_tol=rel, max_panels=spec.max_refine)
    I_sinh, e2, nev2 = integrate_adaptive(ig_sinh, edges, rel_tol=rel, max_panels=spec.max_refine)
    if b > 0:
        I_next, e3, _ = integrate_adaptive(ig_next, edges, rel_tol=rel, max_panels=spec.max_refine)
    else:
        I_next = 0.0

    pref = (4 * PI) ** (-n / 2 - nprime) * np.exp(-R2 * (1 - a) / 4)
    h_factor = h ** (-n / 2 - nprime - 0.5)
    xs, xps = gs.x, gps.x
    u_hat = pair.u_hat
    out = np.empty(n + n * nprime)
    out[:n] = pref * 0.5 * (-xs * I_coth + xps * I_sinh)
    U = -0.5 * pref * np.outer(xs, u_hat) * I_next
    out[n:] = U.ravel()
    return h_factor * out


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def _rescale_result(res: EvalResult, h: float, n: int, nprime: int) -> EvalResult:
    """Apply the time-scaling factor to a time-1 result (d2 stays the rescaled one)."""
    hf = h ** (-n / 2 - nprime)
    return _result_from_norm(res.norm_value, res.norm_err, res.d2, res.method,
                             res.regime, res.neval, h_factor=hf, extra=res.extra)


def kernel(g: Point, gp: Point, h: float = 1.0, spec: QuadSpec = DEFAULT_SPEC,
           method: str = "auto") -> EvalResult:
    """Evaluate p_h(g, g') with automatic representation dispatch.

    ``method``: auto | direct | shifted | transformed | asym.
    """
    if h <= 0:
        raise RegimeError("h must be > 0")
    pair = reduce_pair(g.scaled(h), gp.scaled(h))
    regime = _regime_tag(pair)
    budget = CANCELLATION_BUDGET_EXTENDED if spec.extended_precision else CANCELLATION_BUDGET

    if method == "direct":
        return kernel_direct(g, gp, h, spec)
    if method == "shifted":
        return kernel_shifted(g, gp, h, spec)
    if method == "transformed":
        return _rescale_result(_kernel_transformed_pair(pair, spec), h, pair.n, pair.nprime)
    if method == "asym":
        return _kernel_asymptotic(g, gp, h, pair, regime)
    if method != "auto":
        raise ValueError(f"unknown method {method!r}")

    cancel = cancellation_exponent(pair)
    if cancel <= budget:
        return kernel_direct(g, gp, h, spec)
    if pair.branch == "generic":
        if pair.eps <= DIFFICULT_EPS and float(np.linalg.norm(pair.x_g)) > 0:
            return _rescale_result(_kernel_transformed_pair(pair, spec), h, pair.n, pair.nprime)
        if pair.eps > DIFFICULT_EPS:
            return kernel_shifted(g, gp, h, spec)
    return _kernel_asymptotic(g, gp, h, pair, regime)


def _kernel_asymptotic(g: Point, gp: Point, h: float, pair: PairGeometry, regime: str) -> EvalResult:
    from . import asymptotics  # deferred to avoid an import cycle

    if pair.branch == "coincident":
        return kernel_direct(g, gp, h)
    if pair.branch == "vertical":
        norm = asymptotics.smalltime(g, gp, h, mode="proposition", normalized=True)
    else:
        # off-saddle leading term; accuracy degrades as eps -> 0 at fixed size
        norm = asymptotics.asym_simple(pair, normalized=True) * h ** (-pair.n / 2 - pair.nprime)
    err = abs(norm) * 0.25  # leading term only: heuristic error scale
    return _result_from_norm(norm, err, pair.d2, "asymptotic", regime, 0)
