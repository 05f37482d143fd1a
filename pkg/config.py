"""
Experiment configuration
One validated, immutable model holds every knob of the simulate, strong-error,
moments and verify-ineq runs. Values come from (lowest to highest precedence)
the model defaults, the per-command desk-scale defaults, a flat key=value
config file and command-line flags.
"""

import math
import os
from typing import Literal, Tuple

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator, model_validator

from errors import ConfigurationError
from flows import TAU_0, ModelParams
from schemes import SPLITTING_KINDS, SchemeConfig, SchemeKind
from spatial import Backend, Grid, State

VERSION = '1.0.0'

COMMANDS = ('simulate', 'strong-error', 'moments', 'verify-ineq')

# Desk-scale defaults per command; anything not listed uses the model default
SUBCOMMAND_DEFAULTS = {
    'simulate': {
        'kinds': ('LTexact',),
        'gamma1': 0.08,
        'gamma2': 0.064,
        'beta': 0.7,
        'T': 1.0,
        'tau': 2.0 ** -10,
        'n_samples': 1,
    },
    'strong-error': {
        'kinds': ('LTexact', 'LTexpo', 'LTimp'),
        'T': 0.5,
        'tau_list': tuple(2.0 ** -k for k in range(5, 11)),
        'tau_ref': 2.0 ** -14,
        'n_samples': 64,
    },
    'moments': {
        'kinds': ('LTexact', 'LTexpo', 'LTimp', 'EulerMaruyama'),
        'T': 1.0,
        'tau_list': (2.0 ** -4, 2.0 ** -6, 2.0 ** -8),
        'n_samples': 200,
        'p': 2.0,
    },
    'verify-ineq': {
        'n_max': 10 ** 4,
        'n_z': 10 ** 4,
        'z_min': 1e-6,
        'z_max': 1e3,
    },
}

# Tolerance when checking that T is a whole number of steps
STEP_COUNT_TOL = 1e-9


def parse_number(text):
    """Float from '0.125', '1e-3' or '2^-3'"""
    if isinstance(text, (int, float)):
        return float(text)
    text = str(text).strip()
    if '^' in text:
        base, exponent = text.split('^', 1)
        try:
            return float(base) ** float(exponent)
        except ValueError:
            raise ConfigurationError(f"cannot parse number {text!r}") from None
    try:
        return float(text)
    except ValueError:
        raise ConfigurationError(f"cannot parse number {text!r}") from None


def parse_list(text, item=str):
    if isinstance(text, (list, tuple)):
        return tuple(text)
    return tuple(item(part.strip()) for part in str(text).split(',') if part.strip())


def is_dyadic(x):
    """True when x is an integer power of two"""
    if x <= 0 or not math.isfinite(x):
        return False
    mantissa, _ = math.frexp(x)
    return mantissa == 0.5


def step_count(T, tau):
    """T/tau as an integer, or ConfigurationError"""
    ratio = T / tau
    n = round(ratio)
    if n < 1 or abs(ratio - n) > STEP_COUNT_TOL * max(1.0, ratio):
        raise ConfigurationError(f"T={T} is not a whole number of steps tau={tau}")
    return int(n)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    command: Literal['simulate', 'strong-error', 'moments', 'verify-ineq'] = 'strong-error'
    kinds: Tuple[SchemeKind, ...] = SPLITTING_KINDS

    gamma1: float = 1.0
    gamma2: float = 1.0
    beta: float = 1.0

    n_modes: int = 128
    backend: Backend = Backend.SPECTRAL_GALERKIN

    T: float = 0.5
    tau: float = 2.0 ** -10
    tau_list: Tuple[float, ...] = tuple(2.0 ** -k for k in range(5, 11))
    tau_ref: float = 2.0 ** -14

    n_samples: int = 64
    seed: int = 20240611
    p: float = 2.0
    alpha: float = 0.0

    initial: Literal['cos', 'constant'] = 'cos'
    amplitude: float = 1.0
    noise: bool = True
    error_mode: Literal['terminal', 'sup'] = 'terminal'
    snapshots: int = 64

    moment_slack: float = 0.25
    monotone_slack: float = 0.10
    variance_slack: float = 0.03

    n_max: int = 10 ** 4
    n_z: int = 10 ** 4
    z_min: float = 1e-6
    z_max: float = 1e3

    @field_validator('kinds', mode='before')
    @classmethod
    def _split_kinds(cls, value):
        return parse_list(value)

    @field_validator('tau_list', mode='before')
    @classmethod
    def _split_taus(cls, value):
        return tuple(parse_number(x) for x in parse_list(value))

    @field_validator('T', 'tau', 'tau_ref', 'gamma1', 'gamma2', 'beta', 'p', 'alpha',
                     'amplitude', 'z_min', 'z_max', mode='before')
    @classmethod
    def _number(cls, value):
        return parse_number(value)

    @field_validator('tau_list')
    @classmethod
    def _sorted_taus(cls, value):
        return tuple(sorted(set(value), reverse=True))

    @model_validator(mode='after')
    def _check_constraints(self):
        if not self.kinds:
            raise ConfigurationError("at least one scheme kind is required")
        if self.n_modes < 2:
            raise ConfigurationError(f"n_modes must be >= 2, got {self.n_modes}")
        if self.T <= 0:
            raise ConfigurationError(f"T must be > 0, got {self.T}")
        if self.n_samples < 1:
            raise ConfigurationError("n_samples must be >= 1")
        if self.p < 1:
            raise ConfigurationError(f"moment order p must be >= 1, got {self.p}")
        if not 0 <= self.alpha < 0.25:
            raise ConfigurationError(f"alpha must lie in [0, 1/4), got {self.alpha}")
        if self.snapshots < 1:
            raise ConfigurationError("snapshots must be >= 1")
        for tau in (self.tau, self.tau_ref, *self.tau_list):
            if not 0 < tau < TAU_0:
                raise ConfigurationError(f"step size {tau} violates 0 < tau < tau0 = {TAU_0}")
        if self.command == 'simulate':
            step_count(self.T, self.tau)
        if self.command in ('strong-error', 'moments'):
            if not self.tau_list:
                raise ConfigurationError("tau_list must not be empty")
            for tau in self.tau_list:
                if not is_dyadic(tau):
                    raise ConfigurationError(f"tau_list entry {tau} is not a power of two")
                step_count(self.T, tau)
        if self.command == 'strong-error':
            if not is_dyadic(self.tau_ref):
                raise ConfigurationError(f"tau_ref={self.tau_ref} is not a power of two")
            if self.tau_ref >= min(self.tau_list):
                raise ConfigurationError(f"tau_ref={self.tau_ref} must be below min(tau_list)")
            step_count(self.T, self.tau_ref)
            if self.error_mode == 'sup' and any(not k.is_splitting for k in self.kinds):
                raise ConfigurationError("sup error mode is defined for splitting kinds only")
        if self.command == 'verify-ineq':
            if self.n_max < 1:
                raise ConfigurationError("n_max must be >= 1")
            if not 0 <= self.z_min < self.z_max or self.n_z < 1:
                raise ConfigurationError("z grid needs 0 <= z_min < z_max and n_z >= 1")
        return self

    @property
    def params(self):
        return ModelParams(self.gamma1, self.gamma2, self.beta)

    @property
    def grid(self):
        return Grid(self.n_modes, self.backend)

    def initial_state(self, grid=None):
        grid = grid or self.grid
        if self.initial == 'constant':
            return State.constant(grid, self.amplitude, self.amplitude)
        profile = lambda zeta: self.amplitude * np.cos(2.0 * np.pi * zeta)
        return State.from_functions(grid, profile, profile)

    def n_steps(self, tau):
        return step_count(self.T, tau)

    def scheme_config(self, kind, tau, trajectory=0, snapshot_stride=None):
        grid = self.grid
        return SchemeConfig(
            kind=SchemeKind(kind),
            params=self.params,
            tau=tau,
            n_steps=self.n_steps(tau),
            grid=grid,
            initial=self.initial_state(grid),
            seed=self.seed,
            trajectory=trajectory,
            noise=self.noise,
            snapshot_stride=snapshot_stride,
        )

    @property
    def z_grid(self):
        if self.z_min > 0:
            return np.logspace(np.log10(self.z_min), np.log10(self.z_max), self.n_z)
        return np.linspace(self.z_min, self.z_max, self.n_z)

    @property
    def splitting_kinds(self):
        return tuple(k for k in self.kinds if k.is_splitting)


def _normalize_key(key):
    key = key.strip().lower().replace('-', '_')
    return 'T' if key == 't' else key


def read_config_file(path):
    """Flat key=value file -> dict of raw string values"""
    if not os.path.isfile(path):
        raise ConfigurationError(f"config file not found: {path}")
    values = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            raise ConfigurationError(f"config key {key!r} has no value")
        values[_normalize_key(key)] = value
    return values


def _validation_message(exc):
    messages = []
    for error in exc.errors():
        location = '.'.join(str(part) for part in error['loc'])
        text = error['msg'].removeprefix("Value error, ")
        messages.append(f"{location}: {text}" if location else text)
    return "; ".join(messages)


def build_config(command='strong-error', file_values=None, overrides=None):
    """Merge defaults < command defaults < file values < overrides and validate"""
    if command not in COMMANDS:
        raise ConfigurationError(f"unknown command {command!r}")
    values = dict(SUBCOMMAND_DEFAULTS[command])
    values.update(file_values or {})
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    values['command'] = command
    try:
        return ExperimentConfig(**values)
    except ValidationError as exc:
        raise ConfigurationError(_validation_message(exc)) from None
