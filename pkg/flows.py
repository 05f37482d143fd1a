"""
Pointwise flows of the FitzHugh-Nagumo reaction terms
Exact flow maps of the nonlinear subsystem (u' = u - u³, v' = β) and of the
linear coupling x' = Bx, their Lie-Trotter compositions φ_τ = φ^L∘φ^NL and
φ̂_τ = φ^NL∘φ^L, and the difference quotients ψ_τ = (φ_τ - id)/τ.

All maps act elementwise, so u and v may be scalars or arrays of equal shape.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from errors import DomainError
from spatial import Field, State, require_grid

# Step-size ceiling used for every explicit constant
TAU_0 = 1.0

# Beyond this |u| the closed form of φ^AC is evaluated in its algebraic limit form
LARGE_U = 1e8

# |γ₂² - 4γ₁| below this uses the series for the repeated-eigenvalue case
REPEATED_EIGENVALUE_TOL = 1e-10


class Point2(NamedTuple):
    u: object
    v: object


@dataclass(frozen=True)
class ModelParams:
    """(γ₁, γ₂, β) and the coupling matrix B = [[0, -1], [γ₁, -γ₂]]"""
    gamma1: float
    gamma2: float
    beta: float
    B: np.ndarray = field(init=False, repr=False, compare=False)
    B_norm: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        B = np.array([[0.0, -1.0], [self.gamma1, -self.gamma2]])
        B.setflags(write=False)
        object.__setattr__(self, 'B', B)
        object.__setattr__(self, 'B_norm', float(np.linalg.norm(B, 2)))


def drift_FNL(p, x):
    return Point2(x.u - x.u ** 3, np.zeros_like(x.v, dtype=float) + p.beta)


def drift_FL(p, x):
    return Point2(-x.v, p.gamma1 * x.u - p.gamma2 * x.v)


def drift_F(p, x):
    """F(x) = (u - u³ - v, γ₁u - γ₂v + β)"""
    return Point2(x.u - x.u ** 3 - x.v, p.gamma1 * x.u - p.gamma2 * x.v + p.beta)


def _scalar_or_array(out):
    return float(out) if np.ndim(out) == 0 else out


def phi_ac(t, u):
    """Exact flow of u' = u - u³: u / sqrt(u² + (1 - u²)e^{-2t})"""
    if t < 0:
        raise DomainError(f"flow time must be >= 0, got {t}")
    u = np.asarray(u, dtype=float)
    decay = np.exp(-2.0 * t)
    with np.errstate(over='ignore', invalid='ignore', divide='ignore'):
        direct = u / np.sqrt(u * u + (1.0 - u * u) * decay)
        limit = np.sign(u) / np.sqrt(1.0 + (1.0 / (u * u) - 1.0) * decay)
    # 0 is a fixed point; the radicand underflows to 0 there once e^{-2t} does
    out = np.where(np.abs(u) > LARGE_U, limit, direct)
    return _scalar_or_array(np.where(u == 0, 0.0, out))


def psi_ac(t, u):
    if t <= 0:
        raise DomainError(f"difference quotient needs t > 0, got {t}")
    return _scalar_or_array((phi_ac(t, u) - np.asarray(u, dtype=float)) / t)


def phi_nl(p, t, x):
    return Point2(phi_ac(t, x.u), x.v + p.beta * t)


def matrix_exp_B(p, t):
    """e^{tB} in closed form.

    With s = trace(B)/2 and M = B - sI one has M² = q·I, q = (γ₂² - 4γ₁)/4,
    so e^{tB} = e^{st}(C(t)·I + S(t)·M) with C, S the cosh/sinh (q > 0),
    cos/sin (q < 0) or series (q ≈ 0) pair.
    """
    s = -0.5 * p.gamma2
    disc = p.gamma2 ** 2 - 4.0 * p.gamma1
    q = 0.25 * disc
    if abs(disc) < REPEATED_EIGENVALUE_TOL:
        qt2 = q * t * t
        c = 1.0 + qt2 / 2.0 + qt2 * qt2 / 24.0
        sn = t * (1.0 + qt2 / 6.0 + qt2 * qt2 / 120.0)
    elif q > 0:
        r = np.sqrt(q)
        c = np.cosh(r * t)
        sn = np.sinh(r * t) / r
    else:
        r = np.sqrt(-q)
        c = np.cos(r * t)
        sn = np.sin(r * t) / r
    M = p.B - s * np.eye(2)
    return np.exp(s * t) * (c * np.eye(2) + sn * M)


def phi_l(p, t, x):
    """Exact flow of x' = Bx"""
    E = matrix_exp_B(p, t)
    return Point2(E[0, 0] * x.u + E[0, 1] * x.v, E[1, 0] * x.u + E[1, 1] * x.v)


def phi_tau(p, tau, x):
    """φ_τ = φ_τ^L ∘ φ_τ^NL"""
    return phi_l(p, tau, phi_nl(p, tau, x))


def phi_tau_hat(p, tau, x):
    """φ̂_τ = φ_τ^NL ∘ φ_τ^L"""
    return phi_nl(p, tau, phi_l(p, tau, x))


def _quotient(flow, p, tau, x):
    if tau <= 0:
        raise DomainError(f"difference quotient needs tau > 0, got {tau}")
    y = flow(p, tau, x)
    return Point2((y.u - x.u) / tau, (y.v - x.v) / tau)


def psi_tau(p, tau, x):
    return _quotient(phi_tau, p, tau, x)


def psi_tau_hat(p, tau, x):
    return _quotient(phi_tau_hat, p, tau, x)


def psi_nl(p, tau, x):
    return _quotient(phi_nl, p, tau, x)


def psi_l(p, tau, x):
    return _quotient(phi_l, p, tau, x)


def identity_flow(p, tau, x):
    """Stand-in for φ_τ that leaves every point where it is"""
    return x


def lipschitz_constant(p, tau):
    """Global Lipschitz constant e^{(1 + ⦀B⦀)τ} of φ_τ and φ̂_τ"""
    return float(np.exp((1.0 + p.B_norm) * tau))


def one_sided_constant(p, tau0=TAU_0):
    """((e^{τ₀⦀B⦀} - 1)/τ₀ + 1)·e^{τ₀}, uniform over τ in (0, τ₀)"""
    return float((np.expm1(tau0 * p.B_norm) / tau0 + 1.0) * np.exp(tau0))


def psi_zero_bound(p, tau0=TAU_0):
    return float(np.exp(tau0 * p.B_norm) * abs(p.beta))


def apply_pointwise(point_map, x):
    """Nemytskii lift of a Point2 map to a State given on the grid"""
    require_grid(x)
    out = point_map(Point2(x.u.values, x.v.values))
    shape = x.u.values.shape
    u = np.broadcast_to(np.asarray(out.u, dtype=float), shape)
    v = np.broadcast_to(np.asarray(out.v, dtype=float), shape)
    return State(Field.on_grid(u), Field.on_grid(v))
