"""
Cylindrical Wiener noise in the cosine eigenbasis
Seeded Brownian increments, exact stochastic-convolution increments and the
path table that lets one Brownian path drive every step size of a strong-error
study.

Seeding: trajectory i draws from a Philox stream keyed by
SeedSequence(seed, spawn_key=(i,)), so results do not depend on how
trajectories are spread over workers.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

# Below this τμ the variance uses its first-order expansion
VARIANCE_SERIES_CUTOFF = 1e-8

# Below this τμ the conditional variance of the plain increment uses its series
CONDITIONAL_SERIES_CUTOFF = 1e-2


class NoiseKind(str, Enum):
    PLAIN = 'plain'
    EXACT_CONVOLUTION = 'exact_convolution'


@dataclass(frozen=True, eq=False)
class NoiseIncrement:
    """Eigenbasis coefficients of one step of noise acting on u"""
    coeffs: np.ndarray
    tau: float
    kind: NoiseKind = NoiseKind.PLAIN

    @classmethod
    def zeros(cls, n_modes, tau, kind=NoiseKind.PLAIN):
        return cls(np.zeros(n_modes), tau, NoiseKind(kind))

    @property
    def n_modes(self):
        return self.coeffs.shape[-1]


def make_rng(seed, trajectory=0):
    """Independent counter-based substream for one trajectory"""
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(trajectory),))
    return np.random.Generator(np.random.Philox(sequence))


def _check_tau(tau):
    if tau <= 0:
        raise DomainError(f"noise step must be > 0, got {tau}")


def sample_plain_increment(rng, tau, n_modes):
    """δW over one step: N independent Normal(0, τ) coefficients"""
    _check_tau(tau)
    return NoiseIncrement(np.sqrt(tau) * rng.standard_normal(n_modes), tau, NoiseKind.PLAIN)


def _phi1(x):
    """(1 - e^{-x})/x, continuous at 0"""
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0, x, 1.0)
    return np.where(x > 0, -np.expm1(-safe) / safe, 1.0)


def exact_convolution_variance(mu, tau):
    """Itô-isometry variance (1 - e^{-2τμ})/(2μ) of one mode, τ at μ = 0"""
    _check_tau(tau)
    mu = np.asarray(mu, dtype=float)
    if np.any(mu < 0):
        raise DomainError("eigenvalues must be >= 0")
    x = tau * mu
    series = tau * (1.0 - x)
    closed = tau * _phi1(2.0 * x)
    out = np.where(x < VARIANCE_SERIES_CUTOFF, series, closed)
    return float(out) if out.ndim == 0 else out


def convolution_covariance(mu, tau):
    """Cov(δW_j, ∫ e^{-(τ-s)μ_j} dβ_j) = (1 - e^{-τμ})/μ"""
    _check_tau(tau)
    out = tau * _phi1(tau * np.asarray(mu, dtype=float))
    return float(out) if out.ndim == 0 else out


def _conditional_plain_variance(mu, tau):
    """Var(δW | exact increment) = τ·g(x)/φ1(2x), x = τμ, g(x) = φ1(2x) - φ1(x)²"""
    x = tau * np.asarray(mu, dtype=float)
    series = x * x / 12.0 - x ** 3 / 12.0 + 17.0 * x ** 4 / 360.0
    g = np.where(x < CONDITIONAL_SERIES_CUTOFF, series, _phi1(2.0 * x) - _phi1(x) ** 2)
    return tau * np.maximum(g, 0.0) / _phi1(2.0 * x)


def sample_exact_convolution_increment(rng, op, tau):
    """∫_{t}^{t+τ} e^{(t+τ-s)Δ} dW(s): mode j ~ Normal(0, v(μ_j, τ))"""
    scale = np.sqrt(exact_convolution_variance(op.eigenvalues, tau))
    return NoiseIncrement(scale * rng.standard_normal(op.n_modes), tau, NoiseKind.EXACT_CONVOLUTION)


def sample_increment(rng, op, tau, kind):
    if NoiseKind(kind) is NoiseKind.EXACT_CONVOLUTION:
        return sample_exact_convolution_increment(rng, op, tau)
    return sample_plain_increment(rng, tau, op.n_modes)


@dataclass(frozen=True, eq=False)
class PathTable:
    """Fine-level increments of one Brownian path, both kinds"""
    seed: int
    trajectory: int
    fine_tau: float
    n_fine_steps: int
    levels: int
    eigenvalues: np.ndarray
    plain: np.ndarray
    exact: np.ndarray


def dyadic_levels(n):
    """Number of times n can be halved"""
    levels = 0
    while n > 0 and n % 2 == 0:
        n //= 2
        levels += 1
    return levels


def build_path_table(seed, fine_tau, n_fine_steps, op, trajectory=0):
    """Draw one path at the fine step.

    The exact-convolution increments are drawn first, in the same stream layout
    as fresh LTexact sampling; each plain increment is then drawn conditionally
    on the exact one of its mode and step, so both kinds come from the same
    Brownian motion.
    """
    _check_tau(fine_tau)
    if n_fine_steps < 1:
        raise ConfigurationError(f"path table needs at least one step, got {n_fine_steps}")
    rng = make_rng(seed, trajectory)
    mu = op.eigenvalues
    variance = exact_convolution_variance(mu, fine_tau)
    exact = np.sqrt(variance) * rng.standard_normal((n_fine_steps, op.n_modes))

    regression = convolution_covariance(mu, fine_tau) / variance
    residual = np.sqrt(_conditional_plain_variance(mu, fine_tau))
    plain = regression * exact + residual * rng.standard_normal((n_fine_steps, op.n_modes))

    exact.setflags(write=False)
    plain.setflags(write=False)
    logger.debug("Path table seed=%d trajectory=%d: %d steps x %d modes",
                 seed, trajectory, n_fine_steps, op.n_modes)
    return PathTable(int(seed), int(trajectory), float(fine_tau), int(n_fine_steps),
                     dyadic_levels(n_fine_steps), mu, plain, exact)


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


def coarsen_coefficients(table, factor, kind):
    """(n_fine_steps / factor, N) array of coarse increments"""
    if int(factor) != factor or not _is_power_of_two(int(factor)):
        raise ConfigurationError(f"coarsening factor must be a power of two, got {factor}")
    factor = int(factor)
    if table.n_fine_steps % factor:
        raise ConfigurationError(f"factor {factor} does not divide {table.n_fine_steps} fine steps")
    kind = NoiseKind(kind)
    fine = table.exact if kind is NoiseKind.EXACT_CONVOLUTION else table.plain
    if factor == 1:
        return fine
    blocks = fine.reshape(-1, factor, fine.shape[-1])
    if kind is NoiseKind.PLAIN:
        return blocks.sum(axis=1)
    # increment i of a block is propagated over the remaining (factor - 1 - i) fine steps
    remaining = np.arange(factor - 1, -1, -1, dtype=float)[:, None]
    weights = np.exp(-remaining * table.fine_tau * table.eigenvalues[None, :])
    return np.einsum('bkn,kn->bn', blocks, weights)


def coarsen(table, factor, kind):
    """Coarse increments over steps of factor·fine_tau, driven by the same path"""
    kind = NoiseKind(kind)
    coeffs = coarsen_coefficients(table, factor, kind)
    tau = table.fine_tau * int(factor)
    return [NoiseIncrement(row, tau, kind) for row in coeffs]
