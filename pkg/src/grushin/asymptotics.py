"""Closed-form asymptotics and two-sided envelopes for the heat kernel.

Every formula extracts exp(-d^2/4) (or exp(-d^2/4h)) analytically;
``normalized=True`` returns the value without that factor so ratios stay
representable at arbitrary distance.  The implicit constants of the
two-sided bounds are explicit parameters: the library asserts ratio
boundedness/flatness in its tests, never specific constant values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special as _sp

from . import scalar
from .geometry import PairGeometry, Point, ball_volume_comparison, reduce_pair
from .errors import RegimeError
from .kernels import (
    DIFFICULT_EPS,
    TransformedContext,
    c_nnp,
    c_tilde,
    gaussian_radial_weight,
)
from .quadrature import DEFAULT_SPEC, QuadSpec, geometric_edges, integrate_adaptive

PI = np.pi
PI2 = np.pi ** 2


@dataclass(frozen=True)
class Envelope:
    """A two-sided bound [lower, upper] with the constant that produced it."""

    lower: float
    upper: float
    constant_used: float
    formula: str

    def __post_init__(self):
        if not (0 <= self.lower <= self.upper or np.isnan(self.lower)):
            raise ValueError(f"invalid envelope [{self.lower}, {self.upper}]")

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def _exp_factor(d2_over: float, normalized: bool) -> float:
    if normalized:
        return 1.0
    return np.exp(-d2_over) if d2_over < 745 else 0.0


def _require_an(pair: PairGeometry) -> None:
    if pair.branch != "generic" or float(np.linalg.norm(pair.x_g)) == 0.0 or pair.eps <= 0:
        raise RegimeError("requires (AN): generic pair with x_g != 0 and eps > 0")


# ---------------------------------------------------------------------------
# sharp global envelope
# ---------------------------------------------------------------------------


def envelope_main_expression(pair: PairGeometry, normalized: bool = False) -> float:
    """The sharp comparison expression for p(g, g') at time 1."""
    _require_an(pair)
    n, nprime = pair.n, pair.nprime
    d = pair.d
    R = np.sqrt(pair.R2)
    eps, beta = pair.eps, pair.beta
    lead = (1 + d) ** (n / 2) * (1 + d + R) ** (-nprime) / (1 + beta * np.sqrt(eps) * d + eps * d)
    corr = ((1 + beta * np.sqrt(d)) / (1 + beta * np.sqrt(eps) * d + np.sqrt(eps * d))) ** (n - 2)
    return lead * corr * _exp_factor(pair.d2 / 4, normalized)


def envelope_main(pair: PairGeometry, C: float = 10.0, normalized: bool = False) -> Envelope:
    expr = envelope_main_expression(pair, normalized)
    return Envelope(lower=expr / C, upper=expr * C, constant_used=C, formula="sharp-main")


# ---------------------------------------------------------------------------
# simple-regime leading term
# ---------------------------------------------------------------------------


def _mu_over_t(a: float, t: float) -> float:
    if t < 1e-6:
        return float(scalar.mu_prime(a, 0.0))
    return float(scalar.mu(a, t)) / t


def hessian_det_phase(pair: PairGeometry) -> float:
    """det(-Hess phi) at the saddle: R^{2n'} (mu_a(t)/t)^{n'-1} mu_a'(t)."""
    t = pair.theta_norm
    return (pair.R2 ** pair.nprime * _mu_over_t(pair.a, t) ** (pair.nprime - 1)
            * float(scalar.mu_prime(pair.a, t)))


def asym_simple(pair: PairGeometry, normalized: bool = False,
                delta_star: float = DIFFICULT_EPS) -> float:
    """Stationary-phase leading term, valid for eps >= delta_star at time 1."""
    if pair.branch != "generic":
        raise RegimeError("asym_simple needs a generic pair")
    if pair.eps < delta_star * (1 - 1e-12):
        raise RegimeError(f"asym_simple requires eps >= {delta_star:.4f}")
    if pair.R2 == 0:
        raise RegimeError("asym_simple requires R > 0")
    n, nprime = pair.n, pair.nprime
    t = pair.theta_norm
    vi = float(scalar.amplitude_v_from_s(n, np.asarray(-t * t, dtype=complex)).real)
    det = hessian_det_phase(pair)
    coef = (4 * PI) ** (-n / 2 - nprime) * (8 * PI) ** (nprime / 2)
    return coef * vi / np.sqrt(det) * _exp_factor(pair.d2 / 4, normalized)


# ---------------------------------------------------------------------------
# difficult-regime envelopes and leading term
# ---------------------------------------------------------------------------


def envelope_difficult_expression(pair: PairGeometry, normalized: bool = False,
                                  d_min: float = 10.0) -> float:
    _require_an(pair)
    if pair.eps > DIFFICULT_EPS * (1 + 1e-12):
        raise RegimeError("difficult-regime formula needs eps <= pi/8")
    d = pair.d
    if d < d_min:
        raise RegimeError(f"difficult-regime formula gated to d >= {d_min}")
    n, nprime = pair.n, pair.nprime
    eps, a = pair.eps, pair.a
    if 1 + a >= eps ** 2:
        expr = d ** (n - nprime - 1) / (1 + np.sqrt(eps) * d) ** (n - 1)
    else:
        y = pair.y_norm
        expr = (eps ** (-n / 2) * d ** (-nprime)
                * (eps * d / (1 + y + eps * d))
                * ((y ** 2 + eps * d) / (1 + y ** 2 + eps * d)) ** (n / 2 - 1))
    return expr * _exp_factor(pair.d2 / 4, normalized)


def envelope_difficult(pair: PairGeometry, C: float = 10.0, normalized: bool = False,
                       d_min: float = 10.0) -> Envelope:
    expr = envelope_difficult_expression(pair, normalized, d_min)
    case = "1+a>=eps^2" if 1 + pair.a >= pair.eps ** 2 else "1+a<=eps^2"
    return Envelope(lower=expr / C, upper=expr * C, constant_used=C,
                    formula=f"sharp-difficult[{case}]")


def asym_difficult(pair: PairGeometry, spec: QuadSpec = DEFAULT_SPEC,
                   normalized: bool = False, d_min: float = 10.0) -> float:
    """Laplace leading term of the difficult regime at time 1.

    Relative error O(d^{-1/4}) for eps <= pi/8 and d large.
    """
    _require_an(pair)
    if pair.eps > DIFFICULT_EPS * (1 + 1e-12):
        raise RegimeError("asym_difficult needs eps <= pi/8")
    if pair.d < d_min:
        raise RegimeError(f"asym_difficult gated to d >= {d_min}")
    ctx = TransformedContext.build(pair)
    n, nprime = pair.n, pair.nprime
    yg = ctx.yg

    def integrand(t):
        xi2 = t ** 2
        return (gaussian_radial_weight(n, t, yg)
                * np.exp(-ctx.E(xi2) / 2) / np.sqrt(ctx.det_A(xi2)))

    t_lo, t_hi = max(0.0, yg - 10.0), yg + 10.0
    val, err, _ = integrate_adaptive(integrand, np.linspace(t_lo, t_hi, 12),
                                     rel_tol=spec.rel_tol, max_panels=spec.max_refine)
    t = pair.theta_norm
    vi = float(scalar.amplitude_v_from_s(n, np.asarray(-t * t, dtype=complex)).real)
    return c_tilde(n, nprime) * vi * val * _exp_factor(pair.d2 / 4, normalized)


def gaussian_quartic_bracket(pair: PairGeometry, c: float,
                             spec: QuadSpec = DEFAULT_SPEC) -> float:
    """The Gaussian-quartic comparison integral with constant c.

    Equals I_n(|y_g|, eps^2 d^2 / c); brackets p d^{n'} e^{d^2/4} / V(i theta)
    for suitable constants on each side.
    """
    _require_an(pair)
    s = pair.eps ** 2 * pair.d2 / c
    return i_p(pair.y_norm, s, pair.n, spec)


# ---------------------------------------------------------------------------
# the Gaussian-quartic comparison integral
# ---------------------------------------------------------------------------


def i_p(y_norm: float, s: float, p: int, spec: QuadSpec = DEFAULT_SPEC) -> float:
    """I_p(Y, s) = int e^{-|w - Y|^2/2} exp(-(|w|^2-|Y|^2)^2/s) dw over R^p."""
    if s <= 0:
        raise RegimeError("s must be > 0")
    if p < 1:
        raise RegimeError("p must be >= 1")
    y = float(abs(y_norm))

    def integrand(t):
        quart = np.exp(-((t ** 2 - y ** 2) ** 2) / s)
        return gaussian_radial_weight(p, t, y) * quart

    # support: |t - y| <= 10 (Gaussian) intersected with |t^2 - y^2| <= Q (quartic)
    Q = np.sqrt(40.0 * s)
    t_hi = min(y + 10.0, np.sqrt(y * y + Q))
    t_lo = max(0.0, y - 10.0, np.sqrt(max(y * y - Q, 0.0)))
    t_hi = max(t_hi, t_lo + 1e-6)
    val, err, _ = integrate_adaptive(integrand, np.linspace(t_lo, t_hi, 12),
                                     rel_tol=spec.rel_tol, max_panels=spec.max_refine)
    return float(val)


def i_p_estimate(y_norm: float, s: float, p: int) -> float:
    """Closed two-sided comparison expression for I_p."""
    if s <= 0:
        raise RegimeError("s must be > 0")
    y = float(abs(y_norm))
    rs = np.sqrt(s)
    return rs / (1 + y + rs) * ((y * y + rs) / (1 + y * y + rs)) ** (p / 2 - 1)


# ---------------------------------------------------------------------------
# small-time asymptotics
# ---------------------------------------------------------------------------


def _vertical_config(g: Point, gp: Point):
    x, xp = g.x, gp.x
    scale = max(np.max(np.abs(x)), np.max(np.abs(xp)), 1e-300)
    anti = np.allclose(x, -xp, rtol=1e-12, atol=1e-12 * scale)
    r = float(np.linalg.norm(g.u - gp.u))
    return anti, float(x @ x), r


def smalltime_proposition(g: Point, gp: Point, h: float, normalized: bool = False,
                          spec: QuadSpec = DEFAULT_SPEC) -> float:
    """Leading small-time term on the vertical branch, via the radial integral."""
    anti, x2, r = _vertical_config(g, gp)
    if not anti or 2 * r < PI * x2 or r <= 0:
        raise RegimeError("proposition mode needs x = -x' and 2r >= pi |x|^2 > 0")
    n, nprime = g.n, g.nprime
    R2 = 2 * x2
    q = (PI / 4) * (2 * r - PI * x2)
    d2 = 2 * PI * r

    def integrand(t):
        t2 = t ** 2
        Et = (t2 - q) ** 2 / (t2 + PI2 * R2 / 4)
        detA = (t2 / PI2 + R2 / 8) ** (nprime - 1) * (t2 / PI2 + R2 / 4)
        surf = 2 * PI ** (n / 2) / _sp.gamma(n / 2)
        return surf * t ** (n - 1) * np.exp(-Et / (2 * h)) / np.sqrt(detA)

    t0 = np.sqrt(q)
    width = np.sqrt(h * (q + PI2 * R2 / 4)) / max(2 * t0, 1e-9) if q > 0 else np.sqrt(np.sqrt(h))
    t_hi = t0 + max(12 * width, 1.0)
    edges = np.unique(np.concatenate([
        np.linspace(0.0, t_hi, 8),
        np.linspace(max(t0 - 8 * width, 0.0), min(t0 + 8 * width, t_hi), 12),
    ]))
    val, _, _ = integrate_adaptive(integrand, edges, rel_tol=spec.rel_tol,
                                   max_panels=spec.max_refine)
    coef = (2 * PI) ** (nprime / 2) / h ** (nprime / 2 + n) * c_nnp(n, nprime) * 2 ** (n / 2)
    return coef * val * _exp_factor(d2 / (4 * h), normalized)


def _laplace_proposition(g: Point, gp: Point, h: float, normalized: bool = False) -> float:
    """Laplace-method evaluation of the proposition-mode integral (test oracle)."""
    anti, x2, r = _vertical_config(g, gp)
    if not anti or 2 * r <= PI * x2 or r <= 0:
        raise RegimeError("Laplace oracle needs the interior case 2r > pi |x|^2")
    n, nprime = g.n, g.nprime
    R2 = 2 * x2
    q = (PI / 4) * (2 * r - PI * x2)
    t0 = np.sqrt(q)
    Epp = 8 * q / (q + PI2 * R2 / 4)
    detA = (q / PI2 + R2 / 8) ** (nprime - 1) * (q / PI2 + R2 / 4)
    surf = 2 * PI ** (n / 2) / _sp.gamma(n / 2)
    integral = surf * t0 ** (n - 1) / np.sqrt(detA) * np.sqrt(2 * PI * h / Epp)
    coef = (2 * PI) ** (nprime / 2) / h ** (nprime / 2 + n) * c_nnp(n, nprime) * 2 ** (n / 2)
    return coef * integral * _exp_factor(2 * PI * r / (4 * h), normalized)


def smalltime(g: Point, gp: Point, h: float, mode: str = "auto",
              normalized: bool = False, spec: QuadSpec = DEFAULT_SPEC) -> float:
    """Small-time leading term of p_h(g, g') in the requested mode.

    Modes: proposition (vertical branch, radial integral), corollary-i
    (2r = pi |x|^2), corollary-ii (2r > pi |x|^2, x != 0), corollary-iii
    (x = x' = 0, r > 0), off-cut (everything else), auto.
    """
    if h <= 0:
        raise RegimeError("h must be > 0")
    n, nprime = g.n, g.nprime
    anti, x2, r = _vertical_config(g, gp)
    d2_vert = 2 * PI * r

    if mode == "auto":
        mode = "proposition" if (anti and r > 0 and 2 * r >= PI * x2) else "off-cut"

    if mode == "proposition":
        return smalltime_proposition(g, gp, h, normalized, spec)

    if mode == "corollary-i":
        if not (anti and x2 > 0 and abs(2 * r - PI * x2) <= 1e-10 * max(1.0, 2 * r)):
            raise RegimeError("corollary-i needs x = -x' != 0 and 2r = pi |x|^2")
        R = np.sqrt(2 * x2)
        coef = (2.0 ** (-5 * n / 4 - 1.5) * _sp.gamma(n / 4)
                / (PI ** (nprime / 2) * _sp.gamma(n / 2)))
        return (coef * h ** (-0.75 * n - nprime / 2) * R ** (n / 2 - nprime)
                * _exp_factor(d2_vert / (4 * h), normalized))

    if mode == "corollary-ii":
        if not (anti and x2 > 0 and 2 * r > PI * x2):
            raise RegimeError("corollary-ii needs x = -x' != 0 and 2r > pi |x|^2")
        R2 = 2 * x2
        coef = 2.0 ** (-2 * n - nprime + 2) / _sp.gamma(n / 2)
        return (coef * h ** (-n - (nprime - 1) / 2) * (2 * r - PI * R2 / 2) ** (n / 2 - 1)
                * r ** (-(nprime - 1) / 2) * _exp_factor(d2_vert / (4 * h), normalized))

    if mode == "corollary-iii":
        if not (x2 == 0 and float(gp.x @ gp.x) == 0 and r > 0):
            raise RegimeError("corollary-iii needs x = x' = 0 and r > 0")
        coef = 2.0 ** (-1.5 * n - nprime + 1) / _sp.gamma(n / 2)
        return (coef * h ** (-n - (nprime - 1) / 2) * r ** ((n - nprime - 1) / 2)
                * _exp_factor(d2_vert / (4 * h), normalized))

    if mode == "off-cut":
        pair = reduce_pair(g, gp)
        if pair.branch != "generic":
            raise RegimeError("off-cut mode needs a generic pair")
        if pair.R2 == 0:
            raise RegimeError("off-cut mode needs R > 0")
        n_, np_ = pair.n, pair.nprime
        t = pair.theta_norm
        vi = float(scalar.amplitude_v_from_s(n_, np.asarray(-t * t, dtype=complex)).real)
        det = hessian_det_phase(pair)
        coef = (4 * PI) ** (-n_ / 2 - np_) * (8 * PI) ** (np_ / 2)
        return (coef * vi / np.sqrt(det) * h ** (-(n_ + np_) / 2)
                * _exp_factor(pair.d2 / (4 * h), normalized))

    raise ValueError(f"unknown smalltime mode {mode!r}")


# ---------------------------------------------------------------------------
# classical comparison bounds
# ---------------------------------------------------------------------------


def classical_bounds(g: Point, gp: Point, h: float, C: float = 10.0,
                     eps_ly: float = 1.0, normalized: bool = False) -> Envelope:
    """Li-Yau style comparison envelope (volume form upper, Gaussian lower)."""
    if h <= 0:
        raise RegimeError("h must be > 0")
    if not (0 < eps_ly < 4):
        raise RegimeError("eps_ly must lie in (0, 4)")
    d2 = reduce_pair(g, gp).d2
    d = np.sqrt(d2)
    rh = np.sqrt(h)
    r_small = h / (d + rh)
    vol_up = np.sqrt(ball_volume_comparison(g, r_small) * ball_volume_comparison(gp, r_small))
    vol_h = np.sqrt(ball_volume_comparison(g, rh) * ball_volume_comparison(gp, rh))
    if normalized:
        gauss_up, gauss_lo = 1.0, np.exp(-d2 / ((4 - eps_ly) * h) + d2 / (4 * h))
    else:
        gauss_up = _exp_factor(d2 / (4 * h), False)
        gauss_lo = _exp_factor(d2 / ((4 - eps_ly) * h), False)
    upper = C * (1 + d / rh) ** (-1) / vol_up * gauss_up
    lower = (1.0 / C) * gauss_lo / vol_h
    return Envelope(lower=min(lower, upper), upper=upper, constant_used=C,
                    formula=f"classical[eps={eps_ly}]")


def classical_grad_bound(g: Point, gp: Point, h: float, k: int = 1, C: float = 10.0,
                         eps_ly: float = 1.0) -> float:
    """Upper bound for |grad^k p| from the classical estimates."""
    if k < 1:
        raise RegimeError("k must be >= 1")
    if not (0 < eps_ly < 4):
        raise RegimeError("eps_ly must lie in (0, 4)")
    d2 = reduce_pair(g, gp).d2
    rh = np.sqrt(h)
    vol_h = np.sqrt(ball_volume_comparison(g, rh) * ball_volume_comparison(gp, rh))
    bound = C * h ** (-k / 2) * np.exp(-d2 / ((4 + eps_ly) * h)) / vol_h
    if k == 1:
        n, nprime = g.n, g.nprime
        poly = C * ((1 + d2 / h) ** (3 * (n + 2 * nprime) + 1)
                    / (rh * ball_volume_comparison(gp, rh)) * np.exp(-d2 / (4 * h)))
        bound = min(bound, poly)
    return float(bound)
