"""Command line for the geodesic kernel witness lab.

Exit codes: 0 found/converged, 1 usage or input error, 2 numeric failure,
3 not found within budget (or no canonical loop for the space).
"""
import argparse
import logging
import sys

import numpy as np
import pandas as pd

from config import Config
from database.models import ReportArchive
from services import geodesics
from services.errors import GeoKernelError, InvalidArgument, Unsupported
from services.kernels import KernelSpec, gram, lambda_scan
from services.numerics import psd_check
from services.reports import ReportEnvelope, emit, export
from services.spaces import parse_space, read_distance_file, sample_points, validate_metric
from services.witness import WitnessRequest, canonical_loop, run_witness, witness_on_circle

logger = logging.getLogger('geokernel')

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERIC = 2
EXIT_NOT_FOUND = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text):
    try:
        return [float(tok) for tok in text.split(',') if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f'expected comma-separated numbers, got {text!r}') from exc


def _ints(text):
    try:
        return [int(tok) for tok in text.split(',') if tok.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f'expected comma-separated integers, got {text!r}') from exc


def _common(sub):
    sub.add_argument('--seed', type=int, default=Config.DEFAULT_SEED)
    sub.add_argument('--out', help='write the report here instead of stdout')
    sub.add_argument('--format', choices=('json', 'csv'), default='json')
    sub.add_argument('--archive', default=Config.ARCHIVE_PATH, help='SQLite file that archives reports')
    sub.add_argument('-v', '--verbose', action='store_true')
    sub.add_argument('-q', '--quiet', action='store_true')


def build_parser():
    parser = _Parser(prog=Config.TOOL_NAME, description='Gaussian-kernel positive-definiteness witnesses')
    subs = parser.add_subparsers(dest='command', required=True, parser_class=_Parser)

    p = subs.add_parser('circulant-scan', help='minimal N for equidistributed points on a circle')
    p.add_argument('--lambda', dest='lam', type=float, required=True)
    p.add_argument('--q', type=float, default=2.0)
    p.add_argument('--n-max', type=int, default=Config.DEFAULT_N_MAX)
    p.add_argument('--rho', type=float, default=1.0)
    _common(p)

    p = subs.add_parser('witness', help='search a space for a non-PSD Gram matrix along a closed geodesic')
    p.add_argument('--space', required=True)
    p.add_argument('--lambda', dest='lam', type=float, required=True)
    p.add_argument('--q', type=float, default=2.0)
    p.add_argument('--n-max', type=int, default=Config.DEFAULT_N_MAX)
    p.add_argument('--mode', choices=('direct', 'certified', 'auto'), default='auto')
    _common(p)

    p = subs.add_parser('lambda-scan', help='probe the positive-definiteness range over a lambda grid')
    p.add_argument('--space', required=True)
    grid = p.add_mutually_exclusive_group(required=True)
    grid.add_argument('--grid', type=_floats, help='comma-separated lambdas')
    grid.add_argument('--log-grid', type=_floats, metavar='LO,HI,COUNT', help='log-spaced lambdas')
    p.add_argument('--q', type=float, default=2.0)
    p.add_argument('--n-schedule', type=_ints)
    p.add_argument('--budget', type=int, default=Config.SCAN_BUDGET)
    p.add_argument('--workers', type=int, default=1)
    p.add_argument('--solver', choices=('jacobi', 'lapack'), default=Config.SCAN_SOLVER)
    _common(p)

    p = subs.add_parser('shorten', help='shorten a loop on a torus to a closed geodesic')
    p.add_argument('--loop', required=True, help='loop file')
    p.add_argument('--loop-out', help='write the shortened loop here')
    p.add_argument('--max-iter', type=int, default=Config.SHORTEN_MAX_ITER)
    p.add_argument('--step-tol', type=float, default=Config.SHORTEN_STEP_TOL)
    p.add_argument('--max-move', type=float)
    p.add_argument('--perturb', action='store_true')
    p.add_argument('--single-level', action='store_true')
    _common(p)

    p = subs.add_parser('gram', help='Gram matrix of sampled or loop points and its PSD verdict')
    p.add_argument('--space', required=True)
    p.add_argument('--lambda', dest='lam', type=float, required=True)
    p.add_argument('--q', type=float, default=2.0)
    p.add_argument('--n', type=int, default=16)
    p.add_argument('--on-loop', action='store_true', help='equidistribute on the canonical loop')
    p.add_argument('--solver', choices=('jacobi', 'lapack'), default='jacobi')
    _common(p)

    p = subs.add_parser('validate-metric', help='list triangle-inequality violations of a finite metric file')
    p.add_argument('--metric', required=True)
    p.add_argument('--tol', type=float, default=1e-12)
    _common(p)

    return parser


def _echo(args):
    skip = {'out', 'archive', 'verbose', 'quiet', 'format'}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _archive(args):
    return ReportArchive(args.archive) if args.archive else None


def cmd_circulant_scan(args):
    report = witness_on_circle(args.rho, args.lam, args.n_max, args.q)
    frame = pd.DataFrame(report.trace, columns=['N', 'lambda_min'])
    payload = report.to_dict()
    emit(export(ReportEnvelope(payload, _echo(args)), frame, args.format), args.out)
    if report.found:
        logger.info('minimal N = %d, lambda_min = %.6g', report.N, report.lambda_min)
    return EXIT_OK if report.found else EXIT_NOT_FOUND


def cmd_witness(args):
    space = parse_space(args.space)
    report = run_witness(WitnessRequest(space, args.lam, args.q, args.n_max, args.mode))
    frame = pd.DataFrame(report.trace) if report.trace else None
    emit(export(ReportEnvelope(report.to_dict(), _echo(args)), frame, args.format), args.out)
    archive = _archive(args)
    if archive:
        archive.save_witness(args.space, args.lam, args.q, report)
    return EXIT_OK if report.found else EXIT_NOT_FOUND


def _scan_grid(args):
    if args.grid is not None:
        return args.grid
    if len(args.log_grid) != 3 or args.log_grid[2] != int(args.log_grid[2]):
        raise InvalidArgument('--log-grid takes LO,HI,COUNT')
    lo, hi, count = args.log_grid
    if not 0 < lo <= hi or count < 1:
        raise InvalidArgument('--log-grid needs 0 < LO <= HI and COUNT >= 1')
    return list(np.geomspace(lo, hi, int(count)))


def cmd_lambda_scan(args):
    space = parse_space(args.space)
    report = lambda_scan(
        space, _scan_grid(args), q=args.q, n_schedule=args.n_schedule, seed=args.seed,
        budget=args.budget, workers=args.workers, solver=args.solver,
    )
    emit(export(ReportEnvelope(report.to_dict(), _echo(args)), report.to_frame(), args.format), args.out)
    archive = _archive(args)
    if archive:
        archive.save_scan(report)
    return EXIT_OK if report.witnesses() else EXIT_NOT_FOUND


def cmd_shorten(args):
    loop = geodesics.read_loop(args.loop)
    opts = geodesics.ShorteningOptions(
        max_iter=args.max_iter, step_tol=args.step_tol, max_move=args.max_move,
        multilevel=not args.single_level, perturb=args.perturb,
    )
    final, report = geodesics.shorten_loop(loop, opts)
    if args.loop_out:
        geodesics.write_loop(final, args.loop_out)
    payload = report.to_dict()
    payload['vertices'] = final.lifted[:-1].tolist()
    frame = pd.DataFrame(final.lifted[:-1], columns=[f'x{i}' for i in range(final.lifted.shape[1])])
    emit(export(ReportEnvelope(payload, _echo(args)), frame, args.format), args.out)
    return EXIT_OK if report.converged else EXIT_NOT_FOUND


def cmd_gram(args):
    space = parse_space(args.space)
    kernel = KernelSpec(args.lam, args.q)
    if args.on_loop:
        pts = canonical_loop(space).points(args.n)
        provenance = f'loop:{args.n}'
    else:
        pts = sample_points(space, args.n, args.seed)
        provenance = f'seed:{args.seed}'
    g = gram(space.pairwise(pts), kernel, provenance)
    verdict = psd_check(g.matrix, solver=args.solver)
    payload = {
        'space': args.space,
        'n': g.n,
        'provenance': g.provenance,
        'psd': verdict.psd,
        'lambda_min': verdict.lambda_min,
        'tolerance': verdict.tolerance,
        'gram': g.entries.tolist(),
    }
    emit(export(ReportEnvelope(payload, _echo(args)), pd.DataFrame(g.entries), args.format), args.out)
    return EXIT_OK


def cmd_validate_metric(args):
    matrix, labels = read_distance_file(args.metric)
    violations = validate_metric(matrix, args.tol)
    payload = {'n': matrix.n, 'tol': args.tol, 'valid': not violations,
               'violations': [list(t) for t in violations]}
    frame = pd.DataFrame(violations, columns=['i', 'k', 'j'])
    emit(export(ReportEnvelope(payload, _echo(args)), frame, args.format), args.out)
    if violations:
        logger.error('%d triangle-inequality violations, first %s', len(violations), violations[0])
        return EXIT_USAGE
    return EXIT_OK


COMMANDS = {
    'circulant-scan': cmd_circulant_scan,
    'witness': cmd_witness,
    'lambda-scan': cmd_lambda_scan,
    'shorten': cmd_shorten,
    'gram': cmd_gram,
    'validate-metric': cmd_validate_metric,
}


def _configure_logging(args):
    level = Config.LOG_LEVEL
    if getattr(args, 'verbose', False):
        level = 'DEBUG'
    elif getattr(args, 'quiet', False):
        level = 'WARNING'
    logging.basicConfig(stream=sys.stderr, level=level, format='%(levelname)s %(name)s: %(message)s')
    logging.getLogger().setLevel(level)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f'{parser.prog}: error: {exc}\n')
        return EXIT_USAGE
    except SystemExit as exc:
        return exc.code or EXIT_OK

    _configure_logging(args)
    try:
        return COMMANDS[args.command](args)
    except Unsupported as exc:
        logger.warning('%s', exc)
        sys.stderr.write(f'note: {exc}\n')
        return exc.exit_code
    except GeoKernelError as exc:
        logger.error('%s: %s', type(exc).__name__, exc)
        return exc.exit_code


if __name__ == '__main__':
    sys.exit(main())
