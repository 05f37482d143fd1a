"""
Lie-Trotter splitting schemes and the Euler-Maruyama baseline
One step of every scheme has the unified form

    X_{n+1} = A_τ φ_τ(X_n) + noise

with φ_τ applied pointwise on the grid and A_τ (semigroup or resolvent) applied
mode-wise to u in the eigenbasis. v is never touched by the Laplacian or noise.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from errors import ConfigurationError, ContractError, ShapeError
from flows import TAU_0, Point2, apply_pointwise, drift_F, phi_tau, phi_tau_hat
from noise import NoiseIncrement, NoiseKind, coarsen, make_rng, sample_increment
from spatial import (Field, State, build_operator, forward_transform, inverse_transform,
                     norm_state_E, require_grid)

logger = logging.getLogger(__name__)

# ‖X_n‖_E above this ends the trajectory as a blowup
BLOWUP_THRESHOLD = 1e12

DEFAULT_SNAPSHOTS = 64

EXPONENTIAL = 'exponential'
IMPLICIT = 'implicit'


class SchemeKind(str, Enum):
    LT_EXACT = 'LTexact'
    LT_EXPO = 'LTexpo'
    LT_IMP = 'LTimp'
    LT_EXACT_HAT = 'LTexactHat'
    LT_EXPO_HAT = 'LTexpoHat'
    LT_IMP_HAT = 'LTimpHat'
    EULER_MARUYAMA = 'EulerMaruyama'

    @property
    def is_splitting(self):
        return self is not SchemeKind.EULER_MARUYAMA

    @property
    def hat(self):
        return self.value.endswith('Hat')

    @property
    def noise_kind(self):
        if self in (SchemeKind.LT_EXACT, SchemeKind.LT_EXACT_HAT):
            return NoiseKind.EXACT_CONVOLUTION
        return NoiseKind.PLAIN

    @property
    def propagator(self):
        if self in (SchemeKind.LT_IMP, SchemeKind.LT_IMP_HAT):
            return IMPLICIT
        return EXPONENTIAL


SPLITTING_KINDS = (SchemeKind.LT_EXACT, SchemeKind.LT_EXPO, SchemeKind.LT_IMP)
HAT_KINDS = (SchemeKind.LT_EXACT_HAT, SchemeKind.LT_EXPO_HAT, SchemeKind.LT_IMP_HAT)


def _check_noise(kind, op, noise):
    if noise is None:
        return None
    if noise.n_modes != op.n_modes:
        raise ShapeError(f"noise has {noise.n_modes} modes, operator has {op.n_modes}")
    if NoiseKind(noise.kind) is not kind.noise_kind:
        raise ContractError(f"{kind.value} needs {kind.noise_kind.value} noise, got {noise.kind.value}")
    return noise.coeffs


def _check_state(op, x):
    require_grid(x)
    op.check(x.u)
    return x


def step(kind, op, p, tau, x, noise=None, flow=None):
    """One step of a splitting scheme; noise=None means zero noise.

    flow replaces φ_τ (or φ̂_τ for hat kinds) and must map (p, τ, Point2) to
    Point2.
    """
    kind = SchemeKind(kind)
    if kind is SchemeKind.EULER_MARUYAMA:
        if flow is not None:
            raise ConfigurationError("Euler-Maruyama has no flow to replace")
        return step_euler_maruyama(op, p, tau, x, noise)
    _check_state(op, x)
    dW = _check_noise(kind, op, noise)

    if flow is None:
        flow = phi_tau_hat if kind.hat else phi_tau
    y = apply_pointwise(lambda point: flow(p, tau, point), x)

    coeffs = forward_transform(y.u.values)
    if kind.propagator == IMPLICIT:
        factors = op.resolvent_factors(tau)
    else:
        factors = op.semigroup_factors(tau)
    if dW is None:
        coeffs = factors * coeffs
    elif kind.noise_kind is NoiseKind.EXACT_CONVOLUTION:
        coeffs = factors * coeffs + dW
    else:
        coeffs = factors * (coeffs + dW)

    return State(Field.on_grid(inverse_transform(coeffs)), Field.on_grid(np.array(y.v.values)))


def step_euler_maruyama(op, p, tau, x, noise=None):
    """e^{-τΛ}(X_n + τF(X_n) + δW_n); overflow is left to the blowup check"""
    _check_state(op, x)
    dW = _check_noise(SchemeKind.EULER_MARUYAMA, op, noise)
    with np.errstate(over='ignore', invalid='ignore'):
        F = drift_F(p, Point2(x.u.values, x.v.values))
        coeffs = forward_transform(x.u.values + tau * F.u)
        if dW is not None:
            coeffs = coeffs + dW
        u = inverse_transform(op.semigroup_factors(tau) * coeffs)
        v = x.v.values + tau * F.v
    return State(Field.on_grid(u), Field.on_grid(np.asarray(v, dtype=float)))


@dataclass
class SchemeConfig:
    kind: SchemeKind
    params: object
    tau: float
    n_steps: int
    grid: object
    initial: State
    seed: int = 0
    trajectory: int = 0
    noise: bool = True
    snapshot_stride: int = None

    def __post_init__(self):
        self.kind = SchemeKind(self.kind)
        if not 0 < self.tau < TAU_0:
            raise ConfigurationError(f"tau must lie in (0, {TAU_0}), got {self.tau}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ConfigurationError(f"n_steps must be a non-negative integer, got {self.n_steps}")
        self.n_steps = int(self.n_steps)
        if self.initial.n_modes != self.grid.n_modes:
            raise ShapeError(f"initial state has {self.initial.n_modes} modes, grid has {self.grid.n_modes}")
        if self.snapshot_stride is not None and self.snapshot_stride < 1:
            raise ConfigurationError("snapshot_stride must be >= 1")

    @property
    def T(self):
        return self.tau * self.n_steps

    @property
    def stride(self):
        return self.snapshot_stride or max(1, self.n_steps // DEFAULT_SNAPSHOTS)


@dataclass
class Trajectory:
    kind: SchemeKind
    tau: float
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    e_norms: list = field(default_factory=list)
    blowup: bool = False
    blowup_step: int = None

    @property
    def final(self):
        return self.states[-1]

    def record(self, n, x):
        self.times.append(n * self.tau)
        self.states.append(x)


def _path_increments(config, path):
    factor = config.tau / path.fine_tau
    if not np.isclose(factor, round(factor), rtol=0, atol=1e-9):
        raise ConfigurationError(f"path step {path.fine_tau} does not divide tau={config.tau}")
    factor = int(round(factor))
    if factor * config.n_steps > path.n_fine_steps:
        raise ConfigurationError(
            f"path covers {path.n_fine_steps} fine steps, run needs {factor * config.n_steps}")
    return coarsen(path, factor, config.kind.noise_kind)[:config.n_steps]


def _increment_source(config, op, path):
    """Iterator yielding one NoiseIncrement (or None) per step"""
    if not config.noise:
        return iter([None] * config.n_steps)
    if path is not None:
        return iter(_path_increments(config, path))
    rng = make_rng(config.seed, config.trajectory)
    kind = config.kind.noise_kind
    return (sample_increment(rng, op, config.tau, kind) for _ in range(config.n_steps))


def run_trajectory(config, path=None, flow=None, op=None):
    """Iterate config.n_steps steps from config.initial.

    With a PathTable the increments are the coarsened ones of that path,
    otherwise they are drawn from substream config.trajectory of config.seed.
    A non-finite state or ‖X_n‖_E > BLOWUP_THRESHOLD stops the run and sets
    the blowup flag.
    """
    op = op or build_operator(config.grid)
    x = config.initial
    traj = Trajectory(config.kind, config.tau)
    traj.record(0, x)
    traj.e_norms.append(float(norm_state_E(x)))
    increments = _increment_source(config, op, path)
    stride = config.stride

    with np.errstate(over='ignore', invalid='ignore'):
        for n, noise in zip(range(1, config.n_steps + 1), increments):
            x = step(config.kind, op, config.params, config.tau, x, noise, flow)
            e = float(norm_state_E(x))
            traj.e_norms.append(e)
            if not np.isfinite(e) or e > BLOWUP_THRESHOLD:
                traj.blowup = True
                traj.blowup_step = n
                traj.record(n, x)
                logger.debug("%s blew up at step %d (tau=%g)", config.kind.value, n, config.tau)
                break
            if n % stride == 0 or n == config.n_steps:
                traj.record(n, x)
    return traj
