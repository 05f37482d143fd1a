#!/usr/bin/env python3
"""
FitzHugh-Nagumo splitting experiments
Command-line front end: simulate, strong-error, moments and verify-ineq.
Results go to CSV/JSON files in the output directory, each run alongside a
manifest.json that records the fully resolved configuration.

Usage:
    python cli.py strong-error --samples 32 --jobs 4
    python cli.py simulate --scheme LTexpo --tau 2^-12
    python cli.py moments --config moments.env
    python cli.py verify-ineq --n-max 1000
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime

from dotenv import load_dotenv

from config import VERSION, ExperimentConfig, build_config, read_config_file
from errors import ConfigurationError, DomainError, ExperimentError, OutputError, SplittingError
from experiments import ErrorTable, Evolution, IneqScan, MomentRow, evolution_snapshot, \
    moment_study, moment_variation, strong_error_study, verify_eq_ineq

# Load environment variables from .env file
load_dotenv()

LOG_FORMAT = "[%(asctime)s] %(levelname)s %(name)s: %(message)s"

EXIT_OK = 0
EXIT_OUTPUT = 1
EXIT_USAGE = 2
EXIT_NUMERICAL = 3

MANIFEST_NAME = 'manifest.json'

ERROR_COLUMNS = ('scheme', 'tau', 'rms_error', 'stderr', 'n_samples')
EVOLUTION_COLUMNS = ('t', 'zeta', 'u', 'v')
MOMENT_COLUMNS = ('scheme', 'tau', 'p', 'sup_moment', 'blowup_fraction')

logger = logging.getLogger('cli')

# Flag dest -> ExperimentConfig field
FLAG_FIELDS = {
    'scheme': 'kinds',
    'n_modes': 'n_modes',
    'backend': 'backend',
    'tau': 'tau',
    'tau_list': 'tau_list',
    'tau_ref': 'tau_ref',
    'T': 'T',
    'samples': 'n_samples',
    'seed': 'seed',
    'gamma1': 'gamma1',
    'gamma2': 'gamma2',
    'beta': 'beta',
    'p': 'p',
    'initial': 'initial',
    'amplitude': 'amplitude',
    'noise': 'noise',
    'error_mode': 'error_mode',
    'snapshots': 'snapshots',
    'n_max': 'n_max',
    'n_z': 'n_z',
}


def env_defaults():
    """Operational defaults from the environment (never numerical parameters)"""
    try:
        jobs = int(os.environ.get('FHN_JOBS', '1'))
    except ValueError:
        raise ConfigurationError("FHN_JOBS must be an integer") from None
    return {
        'out_dir': os.environ.get('FHN_OUT_DIR', 'results'),
        'jobs': jobs,
        'log_level': os.environ.get('FHN_LOG_LEVEL', 'INFO').upper(),
    }


def configure_logging(level='INFO'):
    logging.basicConfig(level=getattr(logging, level, logging.INFO), format=LOG_FORMAT, force=True)


# ---------------------------------------------------------------------------
# Arguments and configuration
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="key=value config file, or a manifest.json to re-run")
    common.add_argument('--scheme', help="comma separated scheme kinds, e.g. LTexact,LTimp")
    common.add_argument('--n-modes', type=int)
    common.add_argument('--backend', choices=('fd', 'spectral'))
    common.add_argument('--tau', help="step size, decimal or 2^-k")
    common.add_argument('--tau-list', help="comma separated step sizes")
    common.add_argument('--tau-ref', help="reference step size")
    common.add_argument('--T', help="time horizon")
    common.add_argument('--samples', type=int)
    common.add_argument('--seed', type=int)
    common.add_argument('--gamma1')
    common.add_argument('--gamma2')
    common.add_argument('--beta')
    common.add_argument('--p', help="moment order")
    common.add_argument('--initial', choices=('cos', 'constant'))
    common.add_argument('--amplitude')
    common.add_argument('--no-noise', dest='noise', action='store_const', const=False)
    common.add_argument('--error-mode', choices=('terminal', 'sup'))
    common.add_argument('--snapshots', type=int)
    common.add_argument('--n-max', type=int)
    common.add_argument('--n-z', type=int)
    common.add_argument('--out-dir')
    common.add_argument('--jobs', type=int)

    parser = argparse.ArgumentParser(
        prog='fhn-splitting',
        description="Lie-Trotter splitting schemes for the stochastic FitzHugh-Nagumo system")
    parser.add_argument('--version', action='version', version=f"%(prog)s {VERSION}")
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('simulate', parents=[common], help="space-time snapshots of one trajectory")
    sub.add_parser('strong-error', parents=[common], help="coupled strong errors and rate fits")
    sub.add_parser('moments', parents=[common], help="moment bounds and blowup fractions")
    sub.add_parser('verify-ineq', parents=[common], help="scan the rational/exponential inequality")
    return parser


def config_from_manifest(path):
    try:
        with open(path) as f:
            data = json.load(f)
        return ExperimentConfig(**data['config'])
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ConfigurationError(f"cannot re-run from manifest {path}: {e}") from None


def parse_config(args):
    """CLI flags > config file > command defaults > model defaults"""
    overrides = {FLAG_FIELDS[dest]: getattr(args, dest, None) for dest in FLAG_FIELDS}
    file_values = {}
    if args.config:
        if args.config.endswith('.json'):
            base = config_from_manifest(args.config)
            file_values = base.model_dump(exclude={'command'})
        else:
            file_values = read_config_file(args.config)
    return build_config(args.command, file_values, overrides)


# ---------------------------------------------------------------------------
# Output files
# ---------------------------------------------------------------------------

def _number(x):
    """Round-trip decimal form of a number"""
    if isinstance(x, (bool, int)):
        return str(x)
    return repr(float(x))


def csv_rows(table):
    """(header, rows) for an ErrorTable, list of MomentRow or Evolution"""
    if isinstance(table, ErrorTable):
        rows = [(r.kind.value, _number(r.tau), _number(r.rms_error), _number(r.stderr), str(r.n_samples))
                for r in table.rows]
        return ERROR_COLUMNS, rows
    if isinstance(table, Evolution):
        rows = [(_number(t), _number(z), _number(u), _number(v))
                for t, us, vs in zip(table.times, table.u, table.v)
                for z, u, v in zip(table.zeta, us, vs)]
        return EVOLUTION_COLUMNS, rows
    if isinstance(table, (list, tuple)) and all(isinstance(r, MomentRow) for r in table):
        rows = [(r.kind.value, _number(r.tau), _number(r.p), _number(r.sup_moment), _number(r.blowup_fraction))
                for r in table]
        return MOMENT_COLUMNS, rows
    raise DomainError(f"no CSV layout for {type(table).__name__}")


def emit_csv(table, path):
    header, rows = csv_rows(table)
    if not rows:
        raise DomainError("refusing to write an empty table")
    try:
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    return path


def read_csv(path):
    """Rows of an emitted CSV as dicts of strings"""
    with open(path, newline='') as f:
        return list(csv.DictReader(f))


def _write_json(payload, path):
    try:
        with open(path, 'w', newline="\n") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e
    return path


def emit_rates_json(table, path, manifest=MANIFEST_NAME):
    if not table.fits:
        raise DomainError("error table has no fitted slopes")
    payload = {'manifest': manifest, 'floor': table.floor}
    for kind, fit in table.fits.items():
        payload[kind.value] = {
            'slope': fit.slope,
            'intercept': fit.intercept,
            'ci_halfwidth': fit.ci_halfwidth,
            'meets_floor': table.meets_floor(kind),
            'points': [[tau, err] for tau, err in fit.points],
        }
    return _write_json(payload, path)


def emit_ineq_json(scan, path, manifest=MANIFEST_NAME):
    payload = {
        'manifest': manifest,
        'sup_weighted': scan.sup_weighted,
        'sup_normalized': scan.sup_normalized,
        'argmax_weighted': list(scan.argmax_weighted),
        'argmax_normalized': list(scan.argmax_normalized),
        'n_max': scan.n_max,
        'n_z': scan.n_z,
    }
    return _write_json(payload, path)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str = VERSION
    outputs: list = field(default_factory=list)
    started: str = ""
    finished: str = ""
    jobs: int = 1
    error: str = ''


def write_manifest(manifest, out_dir):
    return _write_json(asdict(manifest), os.path.join(out_dir, MANIFEST_NAME))


def _prepare_out_dir(out_dir):
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create output directory {out_dir}: {e}") from e
    return out_dir


# ---------------------------------------------------------------------------
# Console summaries
# ---------------------------------------------------------------------------

def print_error_table(table):
    print("\n" + '=' * 60)
    print(f"STRONG ERRORS ({table.error_mode})")
    print('=' * 60)
    print(f"\n{'Scheme':<14} {'tau':>12} {'RMS error':>14} {'stderr':>12} {'M':>5}")
    print('-' * 60)
    for r in table.rows:
        print(f"{r.kind.value:<14} {r.tau:>12.3e} {r.rms_error:>14.6e} {r.stderr:>12.3e} {r.n_samples:>5}")
    print('-' * 60)
    for kind, fit in table.fits.items():
        verdict = {True: "meets floor", False: "BELOW floor", None: "measured"}[table.meets_floor(kind)]
        print(f"  {kind.value:<14} slope {fit.slope:.3f} +/- {fit.ci_halfwidth:.3f}  "
              f"({verdict} {table.floor:.3f})")
    for (kind, tau), count in table.blowups.items():
        print(f"  {kind.value} blew up {count} times at tau={tau:g}")


def print_moments(rows):
    print("\n" + '=' * 60)
    print("MOMENT BOUNDS")
    print('=' * 60)
    print(f"\n{'Scheme':<14} {'tau':>12} {'p':>4} {'sup E|X|^p':>14} {'blowup':>8}")
    print('-' * 60)
    for r in rows:
        print(f"{r.kind.value:<14} {r.tau:>12.3e} {r.p:>4g} {r.sup_moment:>14.6e} {r.blowup_fraction:>8.2%}")
    print('-' * 60)
    for kind in dict.fromkeys(r.kind for r in rows):
        print(f"  {kind.value:<14} variation across tau: {moment_variation(rows, kind):.3f}")


def print_evolution(evolution):
    print("\n" + '=' * 60)
    print(f"EVOLUTION ({evolution.kind.value})")
    print('=' * 60)
    print(f"  Snapshots:  {len(evolution.times)} up to t={evolution.times[-1]:g}")
    print(f"  Grid:       {len(evolution.zeta)} points")
    print(f"  max |u|:    {abs(evolution.u).max():.4f}")
    print(f"  max |v|:    {abs(evolution.v).max():.4f}")
    if evolution.blowup:
        print("  Trajectory blew up")


def print_ineq(scan):
    print("\n" + '=' * 60)
    print("INEQUALITY SCAN")
    print('=' * 60)
    print(f"  n <= {scan.n_max}, {scan.n_z} z values")
    print(f"  sup n|(1+z)^-n - e^-nz|          = {scan.sup_weighted:.6f} at (n, z) = {scan.argmax_weighted}")
    print(f"  sup |(1+z)^-n - e^-nz| / min(1,z) = {scan.sup_normalized:.6f} at (n, z) = {scan.argmax_normalized}")


# ---------------------------------------------------------------------------
# Commands: each runner returns (output paths, numerical problem or None)
# ---------------------------------------------------------------------------

def run_simulate(cfg, out_dir, jobs):
    evolution = evolution_snapshot(cfg)
    print_evolution(evolution)
    outputs = [emit_csv(evolution, os.path.join(out_dir, 'evolution.csv'))]
    if evolution.blowup and cfg.kinds[0].is_splitting:
        return outputs, f"{cfg.kinds[0].value} trajectory blew up"
    return outputs, None


def run_strong_error(cfg, out_dir, jobs):
    table = strong_error_study(cfg, jobs=jobs)
    print_error_table(table)
    outputs = [emit_csv(table, os.path.join(out_dir, 'strong_error.csv'))]
    if table.fits:
        outputs.append(emit_rates_json(table, os.path.join(out_dir, 'rates.json')))
    return outputs, None


def run_moments(cfg, out_dir, jobs):
    rows = moment_study(cfg, jobs=jobs)
    print_moments(rows)
    outputs = [emit_csv(rows, os.path.join(out_dir, 'moments.csv'))]
    blown = [(r.kind.value, r.tau) for r in rows if r.kind.is_splitting and r.blowup_fraction > 0]
    if blown:
        return outputs, f"splitting trajectories blew up: {blown}"
    return outputs, None


def run_verify_ineq(cfg, out_dir, jobs):
    scan = verify_eq_ineq(cfg.n_max, cfg.z_grid)
    print_ineq(scan)
    return [emit_ineq_json(scan, os.path.join(out_dir, 'ineq.json'))], None


COMMAND_RUNNERS = {
    'simulate': run_simulate,
    'strong-error': run_strong_error,
    'moments': run_moments,
    'verify-ineq': run_verify_ineq,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else EXIT_USAGE

    try:
        env = env_defaults()
        configure_logging(env['log_level'])
        cfg = parse_config(args)
        out_dir = _prepare_out_dir(args.out_dir or env['out_dir'])
        jobs = args.jobs if args.jobs is not None else env['jobs']
        if jobs < 1:
            raise ConfigurationError(f"jobs must be >= 1, got {jobs}")

        manifest = RunManifest(command=cfg.command, config=cfg.model_dump(mode='json'),
                               seed=cfg.seed, jobs=jobs, started=datetime.now().isoformat())
        logger.info("Running %s into %s", cfg.command, out_dir)
        try:
            outputs, problem = COMMAND_RUNNERS[cfg.command](cfg, out_dir, jobs)
        except ExperimentError as e:
            outputs, problem = [], str(e)
        manifest.outputs = [os.path.basename(p) for p in outputs]
        manifest.finished = datetime.now().isoformat()
        manifest.error = problem or ''
        write_manifest(manifest, out_dir)
        if problem:
            raise ExperimentError(problem)
    except (ConfigurationError, DomainError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ExperimentError as e:
        logger.error("Numerical failure: %s", e)
        return EXIT_NUMERICAL
    except OutputError as e:
        logger.error("%s", e)
        return EXIT_OUTPUT
    except SplittingError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE

    logger.info("Wrote %s", ", ".join(outputs))
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
