"""Numerical evaluation of the Grushin heat kernel and its sharp asymptotics.

The package evaluates the heat kernel of the degenerate operator
Delta_x + |x|^2 Delta_u through independent integral representations, the
associated Carnot-Caratheodory distance in closed form, the sharp two-sided
envelopes and leading asymptotic terms, and ground-truth oracles (a PDE
solver, brute-force quadrature, finite differences).
"""

from ._accel import backend_name
from .asymptotics import (
    Envelope,
    asym_difficult,
    asym_simple,
    classical_bounds,
    classical_grad_bound,
    envelope_difficult,
    envelope_main,
    i_p,
    i_p_estimate,
    smalltime,
)
from .errors import (
    ConvergenceError,
    DomainError,
    GrushinError,
    InverseRangeError,
    PrecisionBudgetError,
    RegimeError,
)
from .geometry import (
    PairGeometry,
    Point,
    ball_volume_envelope,
    distance2,
    distance2_sup_oracle,
    pair_from_invariants,
    reduce_pair,
)
from .kernels import (
    EvalResult,
    F_asymptotic,
    F_eval,
    F_upper,
    TransformedContext,
    grad_kernel,
    kernel,
    kernel_direct,
    kernel_shifted,
    kernel_transformed,
)
from .oracle import GridSpec, fd_gradient, mc_kernel, pde_kernel, semigroup_residual
from .quadrature import QuadSpec
from .scalar import (
    SeriesPolicy,
    amplitude_v,
    amplitude_v2,
    f_eval,
    f_grad,
    f_hess,
    mu,
    mu_inverse,
    mu_prime,
    psi,
    psi_series,
    v2_tilde,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
