"""
Monte Carlo experiments
Coupled strong-error study with rate fits, moment-bound study, evolution
snapshots, the rational-vs-exponential inequality scan and two sanity studies
(temporal Hölder scaling, stochastic convolution moments).

Samples are independent (trajectory i uses substream i of the seed) and can be
spread over worker processes; sums over samples are taken in sample order with
math.fsum so results do not depend on the number of workers.
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from errors import DomainError, ExperimentError
from flows import identity_flow
from noise import build_path_table
from schemes import SchemeKind, run_trajectory
from spatial import Field, State, build_operator, norm_state_H

logger = logging.getLogger(__name__)

CONFIDENCE = 0.95

# Strong rate the splitting schemes are expected to reach; the config lowers it by alpha
RATE_FLOOR = 0.25

# Ceiling asserted on both suprema of the inequality scan
INEQ_CEILING = 2.0

# Rows of n evaluated at once by the inequality scan
INEQ_CHUNK = 256


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    ci_halfwidth: float
    points: tuple

    @property
    def interval(self):
        return self.slope - self.ci_halfwidth, self.slope + self.ci_halfwidth


def fit_rate(points):
    """Least-squares line through (log2 τ, log2 error) with a 95% slope interval"""
    points = tuple((float(tau), float(err)) for tau, err in points)
    if len(points) < 3:
        raise DomainError(f"rate fit needs at least 3 points, got {len(points)}")
    taus = np.array([tau for tau, _ in points])
    errs = np.array([err for _, err in points])
    if np.any(errs <= 0) or np.any(taus <= 0):
        raise DomainError("rate fit needs strictly positive step sizes and errors")
    fit = stats.linregress(np.log2(taus), np.log2(errs))
    quantile = stats.t.ppf(0.5 + CONFIDENCE / 2.0, len(points) - 2)
    return RateFit(float(fit.slope), float(fit.intercept), float(quantile * fit.stderr), points)


def state_distance_H(x, y):
    du = Field.on_grid(x.u.values - y.u.values)
    dv = Field.on_grid(x.v.values - y.v.values)
    return float(norm_state_H(State(du, dv)))


def _executor_map(fn, args, jobs):
    """Ordered map over samples, in-process for jobs <= 1"""
    if jobs <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(fn, *zip(*args)))


# ---------------------------------------------------------------------------
# Strong error
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorRow:
    kind: SchemeKind
    tau: float
    rms_error: float
    stderr: float
    n_samples: int


@dataclass
class ErrorTable:
    rows: list
    fits: dict = field(default_factory=dict)
    blowups: dict = field(default_factory=dict)
    error_mode: str = 'terminal'
    floor: float = RATE_FLOOR

    def rows_for(self, kind):
        kind = SchemeKind(kind)
        return [row for row in self.rows if row.kind is kind]

    def points(self, kind):
        return [(row.tau, row.rms_error) for row in self.rows_for(kind)]

    def meets_floor(self, kind):
        """True/False once the 95% slope interval reaches/misses the floor; None if unjudged.

        Hat kinds are measured only.
        """
        kind = SchemeKind(kind)
        fit = self.fits.get(kind)
        if fit is None or kind.hat:
            return None
        return fit.interval[1] >= self.floor


def coupled_errors(cfg, trajectory, taus=None, op=None):
    """Squared ℋ-errors against the LTexact reference for one sample.

    Returns {(kind, tau): squared error or None on an Euler-Maruyama blowup}.
    Every run is driven by the same fine path table.
    """
    taus = cfg.tau_list if taus is None else taus
    op = op or build_operator(cfg.grid)
    n_ref = cfg.n_steps(cfg.tau_ref)
    table = build_path_table(cfg.seed, cfg.tau_ref, n_ref, op, trajectory)

    sup_mode = cfg.error_mode == 'sup'
    ref_stride = int(round(min(taus) / cfg.tau_ref)) if sup_mode else n_ref
    ref = run_trajectory(cfg.scheme_config(SchemeKind.LT_EXACT, cfg.tau_ref, trajectory,
                                           snapshot_stride=ref_stride), path=table, op=op)
    if ref.blowup:
        logger.error("Reference run blew up on sample %d", trajectory)
        raise ExperimentError(f"LTexact reference blew up on sample {trajectory}")

    out = {}
    for kind in cfg.kinds:
        for tau in taus:
            stride = 1 if sup_mode else cfg.n_steps(tau)
            run = run_trajectory(cfg.scheme_config(kind, tau, trajectory, snapshot_stride=stride),
                                 path=table, op=op)
            if run.blowup:
                if kind.is_splitting:
                    logger.error("%s blew up at tau=%g on sample %d", kind.value, tau, trajectory)
                    raise ExperimentError(f"{kind.value} blew up at tau={tau} on sample {trajectory}")
                logger.info("EulerMaruyama blowup at tau=%g on sample %d", tau, trajectory)
                out[(kind, tau)] = None
                continue
            if sup_mode:
                every = int(round(tau / min(taus)))
                reference = ref.states[::every]
                err = max(state_distance_H(a, b) ** 2 for a, b in zip(reference, run.states))
            else:
                err = state_distance_H(ref.final, run.final) ** 2
            out[(kind, tau)] = err
    logger.debug("Sample %d done", trajectory)
    return out


def _error_row(kind, tau, squared):
    finite = [e for e in squared if e is not None]
    if not finite:
        return ErrorRow(kind, tau, math.inf, math.inf, 0)
    m = len(finite)
    mean = math.fsum(finite) / m
    rms = math.sqrt(mean)
    # delta method for the square root of a sample mean
    stderr = float(np.std(finite) / (2.0 * rms * math.sqrt(m))) if rms > 0 else 0.0
    return ErrorRow(kind, tau, rms, stderr, m)


def strong_error_study(cfg, jobs=1):
    """Coupled strong errors at T (or sup over t_n) and per-kind rate fits"""
    logger.info("Strong error study: %d samples, kinds=%s, tau=%s, tau_ref=%g",
                cfg.n_samples, [k.value for k in cfg.kinds], list(cfg.tau_list), cfg.tau_ref)
    samples = _executor_map(coupled_errors, [(cfg, i) for i in range(cfg.n_samples)], jobs)

    table = ErrorTable(rows=[], error_mode=cfg.error_mode, floor=RATE_FLOOR - cfg.alpha)
    for kind in cfg.kinds:
        for tau in cfg.tau_list:
            squared = [sample[(kind, tau)] for sample in samples]
            table.rows.append(_error_row(kind, tau, squared))
            blown = sum(e is None for e in squared)
            if blown:
                table.blowups[(kind, tau)] = blown
        if kind.is_splitting:
            points = [(tau, err) for tau, err in table.points(kind) if 0 < err < math.inf]
            if len(points) >= 3:
                table.fits[kind] = fit_rate(points)
                logger.info("%s: slope %.3f", kind.value, table.fits[kind].slope)
                if table.meets_floor(kind) is False:
                    logger.warning("%s: slope interval %s stays below the floor %.3f",
                                   kind.value, table.fits[kind].interval, table.floor)
    return table


# ---------------------------------------------------------------------------
# Moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentRow:
    kind: SchemeKind
    tau: float
    p: float
    sup_moment: float
    blowup_fraction: float
    n_samples: int


def _sample_norms(cfg, kind, tau, trajectory):
    run = run_trajectory(cfg.scheme_config(kind, tau, trajectory, snapshot_stride=cfg.n_steps(tau)))
    return np.asarray(run.e_norms), run.blowup


def moment_study(cfg, jobs=1):
    """sup over n of the empirical E‖X_n‖_E^p per (kind, τ), and blowup fractions"""
    rows = []
    for kind in cfg.kinds:
        for tau in cfg.tau_list:
            args = [(cfg, kind, tau, i) for i in range(cfg.n_samples)]
            results = _executor_map(_sample_norms, args, jobs)
            blown = sum(flag for _, flag in results)
            if blown:
                level = logging.ERROR if kind.is_splitting else logging.INFO
                logger.log(level, "%s: %d/%d trajectories blew up at tau=%g",
                           kind.value, blown, cfg.n_samples, tau)
                sup_moment = math.inf
            else:
                powers = np.stack([norms for norms, _ in results]) ** cfg.p
                sup_moment = float(np.max(powers.mean(axis=0)))
            rows.append(MomentRow(kind, tau, cfg.p, sup_moment, blown / cfg.n_samples, cfg.n_samples))
    return rows


def moment_variation(rows, kind, p=None):
    """max/min - 1 of the sup moments of one kind across τ"""
    kind = SchemeKind(kind)
    values = [r.sup_moment for r in rows if r.kind is kind and (p is None or r.p == p)]
    if not values:
        raise DomainError(f"no moment rows for {kind.value}")
    if not all(math.isfinite(v) for v in values):
        return math.inf
    return max(values) / min(values) - 1.0


# ---------------------------------------------------------------------------
# Evolution
# ---------------------------------------------------------------------------

@dataclass
class Evolution:
    kind: SchemeKind
    times: np.ndarray
    zeta: np.ndarray
    u: np.ndarray
    v: np.ndarray
    blowup: bool = False


def evolution_snapshot(cfg, flow=None, trajectory=0):
    """Space-time (u, v) arrays of one run of cfg.kinds[0] at step cfg.tau"""
    kind = cfg.kinds[0]
    n_steps = cfg.n_steps(cfg.tau)
    stride = max(1, n_steps // cfg.snapshots)
    run = run_trajectory(cfg.scheme_config(kind, cfg.tau, trajectory, snapshot_stride=stride), flow=flow)
    return Evolution(
        kind=kind,
        times=np.array(run.times),
        zeta=cfg.grid.points,
        u=np.stack([x.u.values for x in run.states]),
        v=np.stack([x.v.values for x in run.states]),
        blowup=run.blowup,
    )


# ---------------------------------------------------------------------------
# Rational vs exponential decay inequality
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IneqScan:
    sup_weighted: float
    sup_normalized: float
    n_max: int
    n_z: int
    argmax_weighted: tuple
    argmax_normalized: tuple

    @property
    def constants(self):
        return self.sup_weighted, self.sup_normalized


def verify_eq_ineq(n_max, z_grid, ceiling=INEQ_CEILING):
    """Suprema of n·|(1+z)^{-n} - e^{-nz}| and |(1+z)^{-n} - e^{-nz}|/min(1, z)"""
    if n_max < 1:
        raise DomainError(f"n_max must be >= 1, got {n_max}")
    z = np.asarray(z_grid, dtype=float)
    if z.size == 0 or np.any(z < 0):
        raise DomainError("z grid must be non-empty and non-negative")
    log_rational = np.log1p(z)
    scale = np.minimum(1.0, z)
    safe_scale = np.where(scale > 0, scale, 1.0)

    best_w, best_n = -1.0, -1.0
    arg_w = arg_n = (1, float(z[0]))
    for start in range(1, n_max + 1, INEQ_CHUNK):
        n = np.arange(start, min(start + INEQ_CHUNK, n_max + 1), dtype=float)[:, None]
        diff = np.abs(np.exp(-n * log_rational) - np.exp(-n * z))
        weighted = n * diff
        normalized = np.where(scale > 0, diff / safe_scale, 0.0)
        iw = np.unravel_index(np.argmax(weighted), weighted.shape)
        inn = np.unravel_index(np.argmax(normalized), normalized.shape)
        if weighted[iw] > best_w:
            best_w, arg_w = float(weighted[iw]), (int(n[iw[0], 0]), float(z[iw[1]]))
        if normalized[inn] > best_n:
            best_n, arg_n = float(normalized[inn]), (int(n[inn[0], 0]), float(z[inn[1]]))

    scan = IneqScan(best_w, best_n, int(n_max), int(z.size), arg_w, arg_n)
    if not (math.isfinite(best_w) and math.isfinite(best_n)) or max(best_w, best_n) > ceiling:
        raise ExperimentError(f"inequality constants {scan.constants} exceed {ceiling}")
    logger.info("Inequality scan: C1=%.4f at %s, C2=%.4f at %s", best_w, arg_w, best_n, arg_n)
    return scan


# ---------------------------------------------------------------------------
# Sanity studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HolderStudy:
    t0: float
    points: tuple
    fit: RateFit


def _sample_increments(cfg, deltas, t0, trajectory):
    stride = int(round(min(deltas) / cfg.tau_ref))
    run = run_trajectory(cfg.scheme_config(SchemeKind.LT_EXACT, cfg.tau_ref, trajectory,
                                           snapshot_stride=stride))
    if run.blowup:
        raise ExperimentError(f"LTexact blew up on sample {trajectory}")
    step_time = stride * cfg.tau_ref
    i0 = int(round(t0 / step_time))
    base = run.states[i0]
    return [state_distance_H(run.states[i0 + int(round(d / step_time))], base) for d in deltas]


def holder_study(cfg, jobs=1):
    """E‖X(t0+δ) - X(t0)‖_ℋ over δ in tau_list for LTexact at step tau_ref"""
    deltas = tuple(sorted(cfg.tau_list, reverse=True))
    t0 = cfg.T - deltas[0]
    if t0 < 0:
        raise DomainError("T must exceed the largest increment")
    results = _executor_map(_sample_increments,
                            [(cfg, deltas, t0, i) for i in range(cfg.n_samples)], jobs)
    points = tuple((d, math.fsum(r[k] for r in results) / len(results)) for k, d in enumerate(deltas))
    return HolderStudy(t0, points, fit_rate(points))


def _sample_convolution(cfg, tau, trajectory):
    config = cfg.scheme_config(SchemeKind.LT_EXACT, tau, trajectory, snapshot_stride=cfg.n_steps(tau))
    config = replace(config, initial=State.constant(config.grid, 0.0, 0.0))
    return run_trajectory(config, flow=identity_flow).e_norms[-1]


def convolution_study(cfg, jobs=1):
    """(τ, mean ‖Z_N‖_E at T) for the discrete stochastic convolution"""
    rows = []
    for tau in cfg.tau_list:
        norms = _executor_map(_sample_convolution, [(cfg, tau, i) for i in range(cfg.n_samples)], jobs)
        rows.append((tau, math.fsum(norms) / len(norms)))
    return rows
