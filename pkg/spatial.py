"""
Spatial discretization of (0, 1) with homogeneous Neumann boundary conditions
Cell-centred grid, Laplacian eigensystem, orthonormal cosine transform pair and
the mode-wise heat semigroup e^{tΔ} and resolvent (I - τΔ)^{-1}.

Arrays may carry leading batch axes; the last axis is always the spatial one.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import fft

from errors import ConfigurationError, DomainError, RepresentationError, ShapeError

logger = logging.getLogger(__name__)

MIN_MODES = 2


class Backend(str, Enum):
    FINITE_DIFFERENCE = 'fd'
    SPECTRAL_GALERKIN = 'spectral'


class Representation(str, Enum):
    GRID = 'grid'
    EIGENBASIS = 'eigen'


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centred grid with N points ζ_i = (i + 1/2)·h"""
    n_modes: int
    backend: Backend = Backend.SPECTRAL_GALERKIN

    def __post_init__(self):
        if int(self.n_modes) != self.n_modes or self.n_modes < MIN_MODES:
            raise ConfigurationError(f"n_modes must be an integer >= {MIN_MODES}, got {self.n_modes}")
        object.__setattr__(self, 'n_modes', int(self.n_modes))
        object.__setattr__(self, 'backend', Backend(self.backend))

    @property
    def h(self):
        return 1.0 / self.n_modes

    @property
    def points(self):
        return (np.arange(self.n_modes) + 0.5) * self.h


@dataclass(frozen=True, eq=False)
class Field:
    """One component (u or v) on the grid or in the cosine eigenbasis"""
    values: np.ndarray
    representation: Representation = Representation.GRID

    @classmethod
    def on_grid(cls, values):
        return cls(np.asarray(values, dtype=float), Representation.GRID)

    @classmethod
    def in_eigenbasis(cls, coeffs):
        return cls(np.asarray(coeffs, dtype=float), Representation.EIGENBASIS)

    @property
    def n_modes(self):
        return self.values.shape[-1]

    @property
    def is_grid(self):
        return self.representation is Representation.GRID


@dataclass(frozen=True, eq=False)
class State:
    """Pair x = (u, v) sharing one grid"""
    u: Field
    v: Field

    def __post_init__(self):
        if self.u.n_modes != self.v.n_modes:
            raise ShapeError(f"u has {self.u.n_modes} modes but v has {self.v.n_modes}")

    @classmethod
    def from_functions(cls, grid, u0, v0):
        zeta = grid.points
        u = np.broadcast_to(np.asarray(u0(zeta), dtype=float), zeta.shape)
        v = np.broadcast_to(np.asarray(v0(zeta), dtype=float), zeta.shape)
        return cls(Field.on_grid(u.copy()), Field.on_grid(v.copy()))

    @classmethod
    def constant(cls, grid, u, v):
        return cls(Field.on_grid(np.full(grid.n_modes, float(u))),
                   Field.on_grid(np.full(grid.n_modes, float(v))))

    @property
    def n_modes(self):
        return self.u.n_modes

    @property
    def is_grid(self):
        return self.u.is_grid and self.v.is_grid

    def is_finite(self):
        return bool(np.all(np.isfinite(self.u.values)) and np.all(np.isfinite(self.v.values)))


def forward_transform(values):
    """Grid values -> eigenbasis coefficients, isometric for the midpoint L² norm"""
    values = np.asarray(values, dtype=float)
    return fft.dct(values, type=2, norm='ortho', axis=-1) / np.sqrt(values.shape[-1])


def inverse_transform(coeffs):
    coeffs = np.asarray(coeffs, dtype=float)
    return fft.idct(coeffs, type=2, norm='ortho', axis=-1) * np.sqrt(coeffs.shape[-1])


def to_eigenbasis(f):
    if f.is_grid:
        return Field.in_eigenbasis(forward_transform(f.values))
    return f


def to_grid(f):
    if f.is_grid:
        return f
    return Field.on_grid(inverse_transform(f.values))


def neumann_eigenvalues(grid):
    """μ_j of -Δ for the chosen backend, μ_0 = 0"""
    j = np.arange(grid.n_modes, dtype=float)
    if grid.backend is Backend.FINITE_DIFFERENCE:
        return (4.0 / grid.h ** 2) * np.sin(j * np.pi / (2.0 * grid.n_modes)) ** 2
    return (j * np.pi) ** 2


def fd_laplacian_matrix(grid):
    """Dense N×N finite difference Neumann Laplacian (reflecting end rows)"""
    n = grid.n_modes
    matrix = (np.diag(np.full(n - 1, 1.0), -1)
              + np.diag(np.full(n, -2.0))
              + np.diag(np.full(n - 1, 1.0), 1))
    matrix[0, 0] = -1.0
    matrix[-1, -1] = -1.0
    return matrix / grid.h ** 2


@dataclass(frozen=True, eq=False)
class SpatialOperator:
    """Diagonalized discrete Neumann Laplacian; immutable and shareable"""
    grid: Grid
    eigenvalues: np.ndarray

    @property
    def n_modes(self):
        return self.grid.n_modes

    def semigroup_factors(self, t):
        if t < 0:
            raise DomainError(f"semigroup time must be >= 0, got {t}")
        return np.exp(-t * self.eigenvalues)

    def resolvent_factors(self, tau):
        if tau <= 0:
            raise DomainError(f"resolvent step must be > 0, got {tau}")
        return 1.0 / (1.0 + tau * self.eigenvalues)

    def check(self, f):
        if f.n_modes != self.n_modes:
            raise ShapeError(f"field has {f.n_modes} modes, operator has {self.n_modes}")
        return f


def build_operator(grid):
    """Eigenvalues and transform for the grid's backend"""
    if grid.n_modes < MIN_MODES:
        raise ConfigurationError(f"n_modes must be >= {MIN_MODES}")
    eigenvalues = neumann_eigenvalues(grid)
    eigenvalues[0] = 0.0
    eigenvalues.setflags(write=False)
    logger.debug("Built %s operator with %d modes, mu_max=%.3e",
                 grid.backend.value, grid.n_modes, eigenvalues[-1])
    return SpatialOperator(grid, eigenvalues)


def _apply_diagonal(op, factors, f):
    op.check(f)
    coeffs = to_eigenbasis(f).values * factors
    out = Field.in_eigenbasis(coeffs)
    return to_grid(out) if f.is_grid else out


def heat_semigroup(op, t, f):
    """e^{tΔ} f, returned in the representation of f"""
    factors = op.semigroup_factors(t)
    if t == 0:
        return op.check(f)
    return _apply_diagonal(op, factors, f)


def resolvent(op, tau, f):
    """(I - τΔ)^{-1} f, returned in the representation of f"""
    return _apply_diagonal(op, op.resolvent_factors(tau), f)


def fractional_laplacian(op, alpha, f):
    """(-Δ)^α f for α >= 0"""
    if alpha < 0:
        raise DomainError(f"fractional power must be >= 0, got {alpha}")
    return _apply_diagonal(op, op.eigenvalues ** alpha, f)


def apply_lambda_semigroup(op, t, x):
    """e^{-tΛ}x = (e^{tΔ}u, v)"""
    return State(heat_semigroup(op, t, x.u), x.v)


def apply_lambda_resolvent(op, tau, x):
    """(I + τΛ)^{-1}x = ((I - τΔ)^{-1}u, v)"""
    return State(resolvent(op, tau, x.u), x.v)


def norm_H(f):
    """Midpoint-rule L² norm; equals the ℓ² norm of the coefficients"""
    if f.is_grid:
        return np.sqrt(np.mean(f.values ** 2, axis=-1))
    return np.sqrt(np.sum(f.values ** 2, axis=-1))


def norm_E(f):
    return np.max(np.abs(to_grid(f).values), axis=-1)


def norm_state_H(x):
    return np.sqrt(norm_H(x.u) ** 2 + norm_H(x.v) ** 2)


def norm_state_E(x):
    return np.maximum(norm_E(x.u), norm_E(x.v))


def require_grid(x):
    if not x.is_grid:
        raise RepresentationError("pointwise maps need the grid representation")
    return x
