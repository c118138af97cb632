"""Adaptive panel quadrature used by every integral representation.

The integrator works on vectorized integrands (one call evaluates a flat
array of nodes) and refines panels by bisection, using the parent-versus-
children Gauss-Legendre discrepancy as the local error estimate.  That is
cruder than embedded Kronrod pairs but vectorizes cleanly and is robust
for the analytic, exponentially decaying integrands that arise here.

A double-exponential (tanh-sinh) rule is available for smooth
non-oscillatory profiles via :func:`integrate_tanhsinh`.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
from scipy import integrate as _si

from .errors import ConvergenceError


@dataclass(frozen=True)
class QuadSpec:
    """Quadrature policy.

    rule: "adaptive-panel" (default) or "double-exponential".
    trunc_radius: default truncation radius for half-line integrals.
    max_refine: panel budget for the adaptive integrator.
    rel_tol: relative target for each quadrature.
    extended_precision: enable the mpmath accumulation path where flagged.
    """

    rule: str = "adaptive-panel"
    trunc_radius: float = 40.0
    max_refine: int = 4000
    rel_tol: float = 1e-10
    extended_precision: bool = False

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("rel_tol must be > 0")
        if self.trunc_radius <= 0:
            raise ValueError("trunc_radius must be > 0")
        if self.rule not in ("adaptive-panel", "double-exponential"):
            raise ValueError(f"unknown rule {self.rule!r}")

    def with_tol(self, rel_tol: float) -> "QuadSpec":
        return replace(self, rel_tol=rel_tol)


DEFAULT_SPEC = QuadSpec()


@lru_cache(maxsize=8)
def _gl(npts: int):
    x, w = np.polynomial.legendre.leggauss(npts)
    return x, w


def _panel_values(f, lo, hi, npts):
    """Gauss-Legendre values of many panels at once; returns (vals, nodes_used)."""
    x, w = _gl(npts)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    y = np.asarray(f(nodes.ravel()))
    y = y.reshape(len(lo), npts)
    return half * (y @ w), nodes.size


def integrate_adaptive(f, edges, rel_tol=1e-10, abs_floor=0.0, max_panels=4000, npts=16):
    """Integrate a vectorized callable over [edges[0], edges[-1]].

    Returns ``(value, err_estimate, n_evaluations)``.  Raises
    :class:`ConvergenceError` when the panel budget is exhausted before the
    tolerance is met.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2:
        raise ValueError("need at least two edges")
    lo, hi = edges[:-1], edges[1:]
    vals, nev = _panel_values(f, lo, hi, npts)

    # split every initial panel once to obtain error estimates
    heap = []  # (-err, a, b, value)
    counter = 0

    def _split(a_arr, b_arr, parent_vals):
        nonlocal nev, counter
        mids = 0.5 * (a_arr + b_arr)
        los = np.concatenate([a_arr, mids])
        his = np.concatenate([mids, b_arr])
        child_vals, ne = _panel_values(f, los, his, npts)
        nev += ne
        m = len(a_arr)
        pair_err = np.abs(parent_vals - (child_vals[:m] + child_vals[m:]))
        out = []
        for i in range(m):
            e = 0.5 * pair_err[i]
            out.append((e, a_arr[i], mids[i], child_vals[i]))
            out.append((e, mids[i], b_arr[i], child_vals[m + i]))
        return out

    for e, a, b, v in _split(lo, hi, vals):
        counter += 1
        heapq.heappush(heap, (-e, counter, a, b, v))

    while True:
        total = sum(item[4] for item in heap)
        err = sum(-item[0] for item in heap)
        if err <= max(abs_floor, rel_tol * abs(total)):
            return total, err, nev
        if len(heap) >= max_panels:
            raise ConvergenceError(
                f"adaptive quadrature exhausted {max_panels} panels "
                f"(value ~ {total:.6e}, err ~ {err:.2e})"
            )
        # refine the worst quarter of the queue in one batched call
        nrefine = max(1, len(heap) // 8)
        worst = [heapq.heappop(heap) for _ in range(min(nrefine, len(heap)))]
        a_arr = np.array([it[2] for it in worst])
        b_arr = np.array([it[3] for it in worst])
        p_vals = np.array([it[4] for it in worst])
        for e, a, b, v in _split(a_arr, b_arr, p_vals):
            counter += 1
            heapq.heappush(heap, (-e, counter, a, b, v))


def integrate_tanhsinh(f, a, b, rel_tol=1e-10):
    """Double-exponential rule on a finite interval (vectorized integrand)."""
    res = _si.tanhsinh(f, a, b, rtol=rel_tol)
    if not res.success:
        raise ConvergenceError("tanh-sinh quadrature did not converge")
    return float(res.integral), float(res.error), -1


def geometric_edges(scale, upper, first=None, per_octave=2):
    """Panel edges [0 .. upper] clustered near 0 with geometric growth."""
    if upper <= 0:
        raise ValueError("upper must be positive")
    first = min(scale / 2 if first is None else first, upper / 2)
    edges = [0.0, first]
    while edges[-1] < upper:
        step = edges[-1] * (2.0 ** (1.0 / per_octave) - 1.0)
        edges.append(min(edges[-1] + max(step, first), upper))
    edges[-1] = upper
    return np.array(edges)


def cap_oscillation(edges, max_width):
    """Subdivide edges so no panel exceeds ``max_width`` (oscillation control)."""
    if not np.isfinite(max_width) or max_width <= 0:
        return np.asarray(edges, dtype=float)
    out = [edges[0]]
    for a, b in zip(edges[:-1], edges[1:]):
        k = int(np.ceil((b - a) / max_width))
        if k > 1:
            out.extend(np.linspace(a, b, k + 1)[1:])
        else:
            out.append(b)
    return np.array(out)
