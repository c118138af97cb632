"""Pair reduction, Carnot-Caratheodory distance, ball-volume comparison.

A pair (g, g') is reduced to the scalar invariants that every kernel
formula consumes: R^2 = |x|^2 + |x'|^2, the alignment a = 2 x.x'/R^2,
the vertical separation r = |u - u'|, the saddle direction theta (found
by inverting mu_a), eps = pi - |theta|, and the derived y_g, beta, d^2.

The distance is the closed formula with two branches: the vertical branch
d^2 = 2 pi r (x = -x', 2r >= pi |x|^2) and the generic branch through the
saddle theta.  ``distance2_sup_oracle`` re-derives d^2 by direct concave
maximization of the variational objective and is kept independent of the
closed-form path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np
from scipy import optimize as _opt

from . import scalar
from .errors import DomainError, InverseRangeError

PI = np.pi
PI2 = np.pi ** 2

_BRANCH_RTOL = 1e-12


@dataclass(frozen=True)
class Point:
    """A configuration g = (x, u) with x in R^n, u in R^n'."""

    x: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)))
        object.__setattr__(self, "u", np.atleast_1d(np.asarray(self.u, dtype=float)))
        if self.x.ndim != 1 or self.u.ndim != 1 or self.x.size < 1 or self.u.size < 1:
            raise DomainError("Point requires 1-D x and u with n, n' >= 1")

    @property
    def n(self) -> int:
        return self.x.size

    @property
    def nprime(self) -> int:
        return self.u.size

    def scaled(self, h: float) -> "Point":
        """Anisotropic dilation (x, u) -> (x/sqrt(h), u/h)."""
        return Point(self.x / np.sqrt(h), self.u / h)


Branch = Literal["vertical", "generic", "coincident"]


@dataclass(frozen=True)
class PairGeometry:
    """Reduced invariants of a pair (g, g')."""

    n: int
    nprime: int
    R2: float
    a: float
    x_g: np.ndarray
    r: float
    theta: np.ndarray
    eps: float
    y_g: Optional[np.ndarray]
    beta: float
    d2: float
    branch: Branch

    @property
    def theta_norm(self) -> float:
        return float(np.linalg.norm(self.theta))

    @property
    def y_norm(self) -> float:
        return float(np.linalg.norm(self.y_g)) if self.y_g is not None else np.inf

    @property
    def d(self) -> float:
        return float(np.sqrt(self.d2))

    @property
    def u_hat(self) -> np.ndarray:
        t = self.theta_norm
        if t > 0:
            return self.theta / t
        e = np.zeros(self.nprime)
        e[0] = 1.0
        return e


def _is_vertical(x: np.ndarray, xp: np.ndarray, r: float) -> bool:
    scale = max(np.max(np.abs(x), initial=0.0), np.max(np.abs(xp), initial=0.0))
    if not np.allclose(x, -xp, rtol=_BRANCH_RTOL, atol=_BRANCH_RTOL * max(scale, 1e-300)):
        return False
    return 2 * r >= PI * float(x @ x) * (1 - _BRANCH_RTOL)


def reduce_pair(g: Point, gp: Point) -> PairGeometry:
    """Reduce (g, g') to its invariants; total over all inputs."""
    if g.n != gp.n or g.nprime != gp.nprime:
        raise DomainError("dimension mismatch between g and g'")
    x, u, xp, up = g.x, g.u, gp.x, gp.u
    n, nprime = g.n, g.nprime
    R2 = float(x @ x + xp @ xp)
    du = u - up
    r = float(np.linalg.norm(du))
    x_g = x + xp

    if R2 == 0.0 and r == 0.0:
        return PairGeometry(n, nprime, 0.0, 0.0, x_g, 0.0, np.zeros(nprime), PI,
                            np.zeros(n), _beta(0.0, PI), 0.0, "coincident")
    if np.array_equal(x, xp) and np.array_equal(u, up):
        a = 1.0 if R2 > 0 else 0.0
        return PairGeometry(n, nprime, R2, a, x_g, 0.0, np.zeros(nprime), PI,
                            x_g.copy(), _beta(a, PI), 0.0, "coincident")

    a = float(2 * (x @ xp) / R2) if R2 > 0 else -1.0
    a = min(1.0, max(-1.0, a))

    if R2 == 0.0 or _is_vertical(x, xp, r):
        theta = PI * (du / r) if r > 0 else np.zeros(nprime)
        return PairGeometry(n, nprime, R2, -1.0, np.zeros(n), r, theta, 0.0,
                            None, 0.0, 2 * PI * r, "vertical")

    if r == 0.0:
        theta = np.zeros(nprime)
        d2 = R2 * (1 - a)
        yg = x_g.copy()
        return PairGeometry(n, nprime, R2, a, x_g, 0.0, theta, PI, yg,
                            _beta(a, PI), d2, "generic")

    try:
        t = scalar.mu_inverse(a, 2 * r / R2)
    except InverseRangeError:
        # x = -x' within rounding but the exact-equality test missed it
        theta = PI * (du / r)
        return PairGeometry(n, nprime, R2, a, x_g, r, theta, 0.0, None, 0.0,
                            2 * PI * r, "vertical")
    tt = abs(t)
    theta = t * (du / r)
    eps = PI - tt
    if tt >= np.nextafter(PI, 0.0):
        # saturated saddle: the generic formula degenerates to the vertical value
        return PairGeometry(n, nprime, R2, a, x_g, r, theta, eps, None,
                            _beta(a, eps), 2 * PI * r, "generic")
    d2 = (tt / np.sin(tt)) ** 2 * R2 * (1 - a * np.cos(tt)) if tt > 0 else R2 * (1 - a)
    y_g = x_g / np.sqrt(1 - tt ** 2 / PI2)
    return PairGeometry(n, nprime, R2, a, x_g, r, theta, eps, y_g,
                        _beta(a, eps), d2, "generic")


def _beta(a: float, eps: float) -> float:
    den = 1 + a + eps ** 2
    return float(np.sqrt(max(1 + a, 0.0) / den)) if den > 0 else 0.0


def distance2(g: Point, gp: Point) -> float:
    """Squared Carnot-Caratheodory distance; total function."""
    return reduce_pair(g, gp).d2


def _t_cot(t: float) -> float:
    if abs(t) < 1e-4:
        return 1 - t * t / 3 - t ** 4 / 45
    return t / np.tan(t)


def _t_csc(t: float) -> float:
    if abs(t) < 1e-4:
        return 1 + t * t / 6 + 7 * t ** 4 / 360
    return t / np.sin(t)


def distance2_sup_oracle(g: Point, gp: Point, xatol: float = 1e-12) -> float:
    """d^2 by concave maximization of the variational objective.

    The objective R^2 (t cot t - a t / sin t) + 2 r t is maximized over
    t in [0, pi); alignment of the maximizer with (u - u') is optimal
    because the t-part is radially decreasing in the orthogonal components.
    Independent of the closed-form branch logic.
    """
    if g.n != gp.n or g.nprime != gp.nprime:
        raise DomainError("dimension mismatch between g and g'")
    x, u, xp, up = g.x, g.u, gp.x, gp.u
    R2 = float(x @ x + xp @ xp)
    r = float(np.linalg.norm(u - up))
    a = float(2 * (x @ xp) / R2) if R2 > 0 else 0.0

    def neg(t):
        return -(R2 * (_t_cot(t) - a * _t_csc(t)) + 2 * r * t)

    hi = PI * (1 - 1e-13)
    res = _opt.minimize_scalar(neg, bounds=(0.0, hi), method="bounded",
                               options={"xatol": xatol})
    best = -res.fun
    # the maximum may sit at the ends; bounded Brent stays interior
    return max(best, -neg(0.0), -neg(hi))


def ball_volume_comparison(g: Point, radius: float) -> float:
    """The two-sided volume comparison quantity r^{n+n'} (r^{n'} + |x|^{n'})."""
    if radius <= 0:
        raise DomainError("radius must be > 0")
    n, nprime = g.n, g.nprime
    xn = float(np.linalg.norm(g.x))
    return radius ** (n + nprime) * (radius ** nprime + xn ** nprime)


def ball_volume_envelope(g: Point, radius: float, C: float = 2.0):
    """Envelope [q/C, C q] around the volume comparison quantity."""
    from .asymptotics import Envelope  # local import to avoid a cycle

    q = ball_volume_comparison(g, radius)
    return Envelope(lower=q / C, upper=q * C, constant_used=C, formula="ball-volume")


def pair_from_invariants(n: int, nprime: int, eps: float, a: float, d: float,
                         u_direction: Optional[np.ndarray] = None) -> tuple[Point, Point]:
    """Construct a pair realizing given (eps, a, d); plumbing for sweeps.

    Solves the closed distance formula for R, then places x, x' with the
    requested alignment and u - u' along ``u_direction``.
    """
    if not (0 < eps <= PI):
        raise DomainError("eps must be in (0, pi]")
    if not (-1 <= a <= 1):
        raise DomainError("a must be in [-1, 1]")
    tt = PI - eps
    if tt > 0:
        R = d * np.sin(tt) / (tt * np.sqrt(1 - a * np.cos(tt)))
    else:
        R = d / np.sqrt(1 - a)
    R2 = R * R
    if n >= 2:
        p = np.sqrt(R2 * (1 + a)) / 2
        q = np.sqrt(R2 * (1 - a)) / 2
        x = np.zeros(n)
        x[0], x[1] = p, q
        xp = np.zeros(n)
        xp[0], xp[1] = p, -q
    else:
        if a == 0:
            t_ratio = 0.0
        else:
            t_ratio = (1 - np.sqrt(1 - a * a)) / a
        s = np.sqrt(R2 / (1 + t_ratio ** 2))
        x = np.array([s])
        xp = np.array([s * t_ratio])
    r = R2 * scalar.mu(a, tt) / 2 if tt > 0 else 0.0
    if u_direction is None:
        u_direction = np.zeros(nprime)
        u_direction[0] = 1.0
    else:
        u_direction = np.asarray(u_direction, dtype=float)
        u_direction = u_direction / np.linalg.norm(u_direction)
    return Point(x, r * u_direction), Point(xp, np.zeros(nprime))
