"""
*****
Purpose: Command-line interface for robust subspace fitting

Subcommands:
    fit        fit a CSV data matrix
    batch-fit  batch-wise fit for large p
    simulate   write a synthetic data set and its truth
    bench      reproduce a published experiment table
    pitfall    SVD-reduction pitfall demonstration

Values come from flags first, then from a --config file of 'key = value'
lines named like the flags, then from config.py.

Parameters:
None - Configuration loaded from config.py

Returns:
Process exit code (0 success, 2 I/O or parse error, 3 configuration error)
*****
"""

import os
import sys
import logging
import argparse
from pathlib import Path
from typing import Dict, List, Optional

import config
from batch import BatchPlan, batch_fit, default_plan
from bench import SCENARIOS, SyntheticSpec, generate, load_scenario_file, rav, svd_pitfall_demo
from core_types import (
    ConfigError, DataError, DataMatrix, DimensionError, OrthonormalFrame, RocPcaError, SolverConfig,
    pc_affinity,
)
from csv_io import read_index, read_key_values, read_matrix, write_index, write_json, write_matrix
from rocpca_solver import Problem, fit

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_IO = 2
EXIT_CONFIG = 3


def _int_list(text: str) -> List[int]:
    return [int(v) for v in str(text).split(',') if v.strip()]


def _float_list(text: str) -> List[float]:
    return [float(v) for v in str(text).split(',') if v.strip()]


def _flag(text) -> bool:
    if isinstance(text, bool):
        return text
    return str(text).strip().lower() in ('1', 'true', 'yes', 'on')


# Value parsers for every option that may also come from a --config file
OPTION_TYPES = {
    'rank': int, 'mode': str, 'q': int, 'q_e': int, 'eta': float, 'lam': float, 'rule': str,
    'kappa': float, 'rho': float, 'window_t': int, 'nu': float,
    'm0': int, 'n0': int, 'm1': int,
    'tol_outer': float, 'tol_inner_s': float, 'tol_grad': float, 'tol_rel_f': float,
    'max_outer': int, 'max_inner': int, 'seed': int, 'threads': int, 'no_cooling': _flag,
    'out': str, 'truth': str, 'clean_rows': str, 'plan': _int_list,
    'n': int, 'p': int, 'd': _float_list, 'sigma2': float, 'outliers': int, 'leverage': float,
    'mu': _float_list, 'space': str, 'reps': int, 'format': str, 'epsilon': float,
}


# ============================================================================
# Parser
# ============================================================================

def _add_solver_options(parser: argparse.ArgumentParser):
    group = parser.add_argument_group('solver')
    group.add_argument('--rank', type=int, help='principal subspace dimension r')
    group.add_argument('--mode', choices=['row', 'element'], help='outlier type (default row)')
    group.add_argument('--q', type=int, help='row outlier budget (constrained row form)')
    group.add_argument('--q-e', dest='q_e', type=int, help='element outlier budget (constrained element form)')
    group.add_argument('--lam', type=float, help='penalty level; selects the penalized form')
    group.add_argument('--rule', choices=['soft', 'hard', 'hard_ridge'], help='penalized rule (default hard)')
    group.add_argument('--eta', type=float, help=f'ridge factor (default {config.ETA})')
    group.add_argument('--kappa', type=float, help=f'backtrack factor (default {config.KAPPA})')
    group.add_argument('--rho', type=float, help=f'Armijo slope (default {config.RHO})')
    group.add_argument('--window-t', dest='window_t', type=int, help=f'nonmonotone window (default {config.WINDOW_T})')
    group.add_argument('--nu', type=float, help=f'cooling rate (default {config.NU})')
    group.add_argument('--m0', type=int, help=f'multi-start candidates (default {config.M0})')
    group.add_argument('--n0', type=int, help=f'iterations before the cut (default {config.N0})')
    group.add_argument('--m1', type=int, help=f'candidates kept after the cut (default {config.M1})')
    group.add_argument('--tol-outer', dest='tol_outer', type=float)
    group.add_argument('--tol-inner-s', dest='tol_inner_s', type=float)
    group.add_argument('--tol-grad', dest='tol_grad', type=float)
    group.add_argument('--tol-rel-f', dest='tol_rel_f', type=float)
    group.add_argument('--max-outer', dest='max_outer', type=int)
    group.add_argument('--max-inner', dest='max_inner', type=int)
    group.add_argument('--no-cooling', dest='no_cooling', action='store_const', const=True,
                       help='hold the budget fixed instead of cooling it')


def build_parser() -> argparse.ArgumentParser:
    """
    *****
    Purpose: Build the argument parser with all subcommands

    Parameters:
    None

    Returns:
    argparse.ArgumentParser: configured parser
    *****
    """
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help="file of 'key = value' lines named like the flags")
    common.add_argument('--out', help=f'output directory (default {config.OUTPUT_DIR})')
    common.add_argument('--seed', type=int, help=f'random seed (default {config.SEED})')
    common.add_argument('--threads', type=int, help='worker threads (default: machine parallelism)')
    common.add_argument('--verbose', '-v', action='store_true', help='debug logging')

    parser = argparse.ArgumentParser(
        prog='rocpca',
        description='Robust orthogonal-complement PCA: subspace recovery with outlier detection.',
        epilog='Exit codes: 0 success, 2 I/O or parse error, 3 configuration error.',
    )
    commands = parser.add_subparsers(dest='command', required=True)

    fit_parser = commands.add_parser('fit', parents=[common], help='fit a CSV data matrix')
    fit_parser.add_argument('input', help='CSV data, one observation per line, optional header')
    fit_parser.add_argument('--truth', help='CSV p x r frame to score the fit against')
    fit_parser.add_argument('--clean-rows', dest='clean_rows', help='1-based clean row indices for RAV')
    _add_solver_options(fit_parser)

    batch_parser = commands.add_parser('batch-fit', parents=[common], help='batch-wise fit for large p')
    batch_parser.add_argument('input', help='CSV data, one observation per line, optional header')
    batch_parser.add_argument('--plan', type=_int_list, help='comma-separated batch sizes (default rule of thumb)')
    batch_parser.add_argument('--truth', help='CSV p x r frame to score the fit against')
    _add_solver_options(batch_parser)

    sim_parser = commands.add_parser('simulate', parents=[common], help='write a synthetic data set')
    sim_parser.add_argument('--n', type=int, help='observations')
    sim_parser.add_argument('--p', type=int, help='features')
    sim_parser.add_argument('--rank', type=int, help='principal subspace dimension r')
    sim_parser.add_argument('--d', type=_float_list, help='comma-separated diagonal of D, decreasing')
    sim_parser.add_argument('--sigma2', type=float, help='noise variance (default 1)')
    sim_parser.add_argument('--mode', choices=['row', 'element'], help='outlier type (default row)')
    sim_parser.add_argument('--outliers', type=int, help='outlier rows or entries (default 0)')
    sim_parser.add_argument('--leverage', type=float, help='outlier value (default 0)')
    sim_parser.add_argument('--mu', type=_float_list, help='comma-separated complement mean (default 0)')
    sim_parser.add_argument('--space', choices=['complement', 'observation'],
                            help='plant outliers in complement coordinates or in X itself (default complement)')

    bench_parser = commands.add_parser('bench', parents=[common], help='reproduce an experiment table')
    bench_parser.add_argument('scenario', help=f"one of {', '.join(SCENARIOS)} or a scenario file")
    bench_parser.add_argument('--reps', type=int, help=f'replicates per cell (default {config.DEFAULT_REPS})')
    bench_parser.add_argument('--format', choices=['csv', 'markdown'],
                              help=f'table format (default {config.TABLE_FORMAT})')

    pitfall_parser = commands.add_parser('pitfall', parents=[common], help='SVD-reduction pitfall demo')
    pitfall_parser.add_argument('--p', type=int, help='dimension (default 10001)')
    pitfall_parser.add_argument('--epsilon', type=float, help='contamination level (default 0.1)')
    pitfall_parser.add_argument('--n', type=int, help='observations (default 10)')

    return parser


def resolve_options(args: argparse.Namespace) -> Dict[str, object]:
    """
    *****
    Purpose: Merge flags over --config file values

    Parameters:
    argparse.Namespace args: parsed flags

    Returns:
    Dict[str, object]: option values; unset options are None

    Errors:
    OSError / DataError if the config file cannot be read
    ConfigError on an unknown key or a value of the wrong type
    *****
    """
    options = {name: value for name, value in vars(args).items()}
    if not args.config:
        return options
    for key, raw in read_key_values(args.config).items():
        if key not in OPTION_TYPES:
            raise ConfigError(f"{args.config}: unknown option '{key}'")
        if options.get(key) is not None:
            continue
        try:
            options[key] = OPTION_TYPES[key](raw)
        except ValueError as e:
            raise ConfigError(f"{args.config}: bad value for '{key}': {e}")
    return options


def solver_config_from(options: Dict[str, object]) -> SolverConfig:
    """Build a SolverConfig from resolved options; unset fields take config.py defaults."""
    if options.get('rank') is None:
        raise ConfigError("--rank is required")
    return SolverConfig(
        rank_r=options['rank'], outlier_mode=options.get('mode') or 'row',
        q=options.get('q'), q_e=options.get('q_e'), eta=options.get('eta'), lam=options.get('lam'),
        rule=options.get('rule') or 'hard', kappa=options.get('kappa'), rho=options.get('rho'),
        window_t=options.get('window_t'), nu=options.get('nu'),
        m0=options.get('m0'), n0=options.get('n0'), m1=options.get('m1'),
        tol_outer=options.get('tol_outer'), tol_inner_s=options.get('tol_inner_s'),
        tol_grad=options.get('tol_grad'), tol_rel_f=options.get('tol_rel_f'),
        max_outer=options.get('max_outer'), max_inner=options.get('max_inner'),
        seed=options.get('seed'), threads=options.get('threads'),
        cooling=not options.get('no_cooling'),
    )


def _output_dir(options: Dict[str, object]) -> Path:
    out = Path(options.get('out') or config.OUTPUT_DIR)
    os.makedirs(out, exist_ok=True)
    return out


def _read_truth(path: str) -> OrthonormalFrame:
    """Truth frame as written; re-orthonormalized only when it fails the orthonormality check."""
    matrix = read_matrix(path)
    try:
        return OrthonormalFrame(matrix)
    except DataError:
        logger.warning(f"{path}: columns are not orthonormal, using the Q factor of their QR")
        return OrthonormalFrame.from_matrix(matrix)


# ============================================================================
# Commands
# ============================================================================

def cmd_fit(options: Dict[str, object]) -> int:
    """
    *****
    Purpose: Fit a CSV data matrix and write the estimates

    Writes v_hat.csv, v_perp.csv, mu.csv, s.csv, outliers.csv (1-based) and
    summary.json to the output directory.

    Parameters:
    Dict[str, object] options: resolved options

    Returns:
    int: exit code
    *****
    """
    x = DataMatrix(read_matrix(options['input']))
    solver = solver_config_from(options)
    result = fit(Problem(x, solver))

    out = _output_dir(options)
    write_matrix(out / 'v_hat.csv', result.v_hat.columns)
    write_matrix(out / 'v_perp.csv', result.v_perp.columns)
    write_matrix(out / 'mu.csv', result.mu)
    write_matrix(out / 's.csv', result.s.values)
    if result.outlier_mode == 'row':
        write_index(out / 'outliers.csv', result.flagged_rows, header=['row'])
    else:
        write_index(out / 'outliers.csv', result.flagged_elements, header=['row', 'column'])

    summary = {
        'n': x.n, 'p': x.p, 'rank': solver.rank_r, 'variant': solver.variant,
        'objective': result.objective, 'outer_iterations': result.outer_iterations,
        'stationarity_residual': result.stationarity_residual,
        'candidate_index': result.candidate_index,
        'flagged': len(result.flagged_rows if result.outlier_mode == 'row' else result.flagged_elements),
    }
    if options.get('truth'):
        summary['affinity'] = pc_affinity(result.v_hat, _read_truth(options['truth']))
    if options.get('clean_rows'):
        summary['rav'] = rav(x, result.v_hat, read_index(options['clean_rows']))
    write_json(out / 'summary.json', summary)
    logger.info(f"Wrote fit results to {out}")
    print(f"objective={result.objective:.6g} flagged={summary['flagged']}"
          + (f" affinity={summary['affinity']:.2f}" if 'affinity' in summary else ""))
    return EXIT_OK


def cmd_batch_fit(options: Dict[str, object]) -> int:
    """Batch-wise fit; writes v_hat.csv and summary.json."""
    x = DataMatrix(read_matrix(options['input']))
    solver = solver_config_from(options)
    if options.get('plan'):
        plan = BatchPlan.from_sizes(options['plan'], solver.tol_outer)
    else:
        plan = default_plan(x.p, solver.rank_r, solver.tol_outer)
    frame = batch_fit(x, solver.rank_r, plan, solver)

    out = _output_dir(options)
    write_matrix(out / 'v_hat.csv', frame.columns)
    summary = {'n': x.n, 'p': x.p, 'rank': solver.rank_r, 'plan': list(plan.sizes),
               'tolerances': list(plan.tolerance_schedule)}
    if options.get('truth'):
        summary['affinity'] = pc_affinity(frame, _read_truth(options['truth']))
    write_json(out / 'summary.json', summary)
    logger.info(f"Wrote batch fit results to {out}")
    return EXIT_OK


def cmd_simulate(options: Dict[str, object]) -> int:
    """
    *****
    Purpose: Write a synthetic data set and its truth

    Writes x.csv, truth_v.csv, truth_vperp.csv, truth_s.csv and
    outlier_index.csv (1-based rows, or (row, column) pairs in element mode).

    Parameters:
    Dict[str, object] options: resolved options

    Returns:
    int: exit code
    *****
    """
    for name in ('n', 'p', 'rank', 'd'):
        if options.get(name) is None:
            raise ConfigError(f"--{name} is required")
    seed = options.get('seed')
    spec = SyntheticSpec(
        n=options['n'], p=options['p'], r=options['rank'], d_values=tuple(options['d']),
        sigma2=1.0 if options.get('sigma2') is None else options['sigma2'],
        mu_star=tuple(options['mu']) if options.get('mu') else None,
        outlier_mode=options.get('mode') or 'row',
        num_outliers=options.get('outliers') or 0,
        leverage=options.get('leverage') or 0.0,
        outlier_space=options.get('space') or 'complement',
        seed=config.SEED if seed is None else seed,
    )
    x, truth = generate(spec)

    out = _output_dir(options)
    write_matrix(out / 'x.csv', x.values)
    write_matrix(out / 'truth_v.csv', truth.v_star.columns)
    write_matrix(out / 'truth_vperp.csv', truth.v_perp_star.columns)
    write_matrix(out / 'truth_s.csv', truth.s_star.values)
    if spec.outlier_mode == 'row':
        write_index(out / 'outlier_index.csv', sorted(truth.outlier_rows), header=['row'])
    else:
        write_index(out / 'outlier_index.csv', sorted(truth.outlier_elements), header=['row', 'column'])
    logger.info(f"Wrote {spec.n}x{spec.p} synthetic data set to {out}")
    return EXIT_OK


def cmd_bench(options: Dict[str, object]) -> int:
    """Run a named scenario (or scenario file) and write its table next to the published numbers."""
    name = options['scenario']
    if name in SCENARIOS:
        scenario = SCENARIOS[name]
        label = name
    elif os.path.isfile(name):
        scenario = load_scenario_file(name)
        label = Path(name).stem
    else:
        raise ConfigError(f"Unknown scenario '{name}'; valid names: {', '.join(SCENARIOS)}")

    reps = options.get('reps') or config.DEFAULT_REPS
    seed = config.SEED if options.get('seed') is None else options['seed']
    fmt = options.get('format') or config.TABLE_FORMAT
    table = scenario(reps, seed, threads=options.get('threads'))

    out = _output_dir(options)
    path = out / f"{label}.{'md' if fmt == 'markdown' else 'csv'}"
    table.write(path, fmt)
    logger.info(f"Wrote {len(table)} row(s) to {path}")
    return EXIT_OK


def cmd_pitfall(options: Dict[str, object]) -> int:
    """Run the SVD-reduction pitfall demo and write pitfall.json."""
    seed = options.get('seed')
    report = svd_pitfall_demo(
        p=options.get('p') or 10001,
        epsilon=0.1 if options.get('epsilon') is None else options['epsilon'],
        n=options.get('n') or 10,
        seed=config.SEED if seed is None else seed,
    )
    out = _output_dir(options)
    write_json(out / 'pitfall.json', {
        'p': report.p, 'epsilon': report.epsilon, 'n': report.n,
        'measured_cosine': report.measured_cosine, 'closed_form_cosine': report.closed_form_cosine,
        'reduced_affinity': report.reduced_affinity,
    })
    print(f"cosine={report.measured_cosine:.6f} closed_form={report.closed_form_cosine:.6f} "
          f"affinity_ceiling={100 * report.closed_form_cosine:.2f}")
    return EXIT_OK


COMMANDS = {
    'fit': cmd_fit,
    'batch-fit': cmd_batch_fit,
    'simulate': cmd_simulate,
    'bench': cmd_bench,
    'pitfall': cmd_pitfall,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    *****
    Purpose: Entry point; maps library errors to exit codes

    Parameters:
    List[str] argv: arguments (sys.argv[1:] if None)

    Returns:
    int: 0 success, 2 I/O or parse error, 3 configuration error
    *****
    """
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose or config.DEBUG else logging.INFO,
        format=config.LOG_FORMAT
    )
    try:
        options = resolve_options(args)
        return COMMANDS[args.command](options)
    except ConfigError as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (OSError, DataError, DimensionError) as e:
        logger.error(f"Input error: {e}")
        return EXIT_IO
    except RocPcaError as e:
        logger.error(f"Fit failed: {e}")
        return 1


if __name__ == '__main__':
    sys.exit(main())
