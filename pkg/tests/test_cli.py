"""
*****
Purpose: Tests for the rocpca command line: option resolution, exit
codes and the files each subcommand writes.

Parameters:
None

Returns:
None
*****
"""

import json

import numpy as np
import pytest

from bench import SyntheticSpec, generate
from cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, build_parser, main, resolve_options, solver_config_from
from core_types import ConfigError, SolverConfig, pc_affinity
from csv_io import read_index, read_matrix
from rocpca_solver import Problem, fit


SIMULATE_ARGS = ['simulate', '--n', '40', '--p', '6', '--rank', '2', '--d', '20,10',
                 '--sigma2', '0.05', '--outliers', '3', '--leverage', '8', '--seed', '3']
SIMULATED_SPEC = SyntheticSpec(n=40, p=6, r=2, d_values=(20.0, 10.0), sigma2=0.05, num_outliers=3,
                               leverage=8.0, seed=3)


def simulate_args(**overrides):
    """SIMULATE_ARGS with some flag values replaced, e.g. outliers='0'."""
    args = list(SIMULATE_ARGS)
    for flag, value in overrides.items():
        args[args.index(f'--{flag}') + 1] = value
    return args


@pytest.fixture
def simulated(tmp_path):
    """Directory holding a small simulated data set with three outlier rows."""
    out = tmp_path / "sim"
    assert main(SIMULATE_ARGS + ['--out', str(out)]) == EXIT_OK
    return out


# ===========================================================================
# TestOptions
# ===========================================================================


class TestOptions:
    """
    *****
    Purpose: Verify flags, config files and their precedence

    Parameters:
    None

    Returns:
    None
    *****
    """

    def test_flags_build_solver_config(self):
        args = build_parser().parse_args(['fit', 'x.csv', '--rank', '2', '--q', '4', '--no-cooling',
                                          '--tol-outer', '1e-7'])
        solver = solver_config_from(resolve_options(args))
        assert (solver.rank_r, solver.q, solver.cooling, solver.tol_outer) == (2, 4, False, 1e-7)

    def test_config_file_fills_unset_options(self, tmp_path):
        path = tmp_path / "opts.cfg"
        path.write_text("rank = 3\nq = 9\nm0 = 6\n")
        args = build_parser().parse_args(['fit', 'x.csv', '--config', str(path), '--q', '5'])
        options = resolve_options(args)
        assert (options['rank'], options['q'], options['m0']) == (3, 5, 6)

    def test_unknown_config_key(self, tmp_path):
        path = tmp_path / "opts.cfg"
        path.write_text("colour = blue\n")
        args = build_parser().parse_args(['fit', 'x.csv', '--config', str(path)])
        with pytest.raises(ConfigError):
            resolve_options(args)

    def test_bad_config_value(self, tmp_path):
        path = tmp_path / "opts.cfg"
        path.write_text("rank = two\n")
        args = build_parser().parse_args(['fit', 'x.csv', '--config', str(path)])
        with pytest.raises(ConfigError):
            resolve_options(args)

    def test_rank_required(self):
        args = build_parser().parse_args(['fit', 'x.csv', '--q', '2'])
        with pytest.raises(ConfigError):
            solver_config_from(resolve_options(args))


# ===========================================================================
# TestSimulate
# ===========================================================================


class TestSimulate:
    """
    *****
    Purpose: Verify simulate writes a reproducible data set and its truth

    Parameters:
    None

    Returns:
    None
    *****
    """

    def test_files_written(self, simulated):
        for name in ('x.csv', 'truth_v.csv', 'truth_vperp.csv', 'truth_s.csv', 'outlier_index.csv'):
            assert (simulated / name).is_file(), name
        assert read_matrix(simulated / 'x.csv').shape == (40, 6)
        assert read_index(simulated / 'outlier_index.csv') == [0, 1, 2]

    def test_same_seed_same_bytes(self, simulated, tmp_path):
        again = tmp_path / "again"
        assert main(SIMULATE_ARGS + ['--out', str(again)]) == EXIT_OK
        assert (again / 'x.csv').read_bytes() == (simulated / 'x.csv').read_bytes()

    def test_missing_dimension(self, tmp_path):
        assert main(['simulate', '--n', '40', '--rank', '2', '--d', '5', '--out', str(tmp_path)]) == EXIT_CONFIG

    def test_invalid_spec(self, tmp_path):
        args = ['simulate', '--n', '40', '--p', '6', '--rank', '2', '--d', '5,10', '--out', str(tmp_path)]
        assert main(args) == EXIT_CONFIG

    def test_observation_space(self, simulated, tmp_path):
        out = tmp_path / "observation"
        assert main(SIMULATE_ARGS + ['--space', 'observation', '--out', str(out)]) == EXIT_OK
        assert read_index(out / 'outlier_index.csv') == [0, 1, 2]
        assert read_matrix(out / 'x.csv').shape == (40, 6)
        assert (out / 'x.csv').read_bytes() != (simulated / 'x.csv').read_bytes()


# ===========================================================================
# TestFitCommand
# ===========================================================================


class TestFitCommand:
    """
    *****
    Purpose: Verify fit output files and exit codes

    Parameters:
    None

    Returns:
    None
    *****
    """

    def test_fit_writes_results(self, simulated, tmp_path, capsys):
        out = tmp_path / "fit"
        code = main(['fit', str(simulated / 'x.csv'), '--rank', '2', '--q', '6',
                     '--truth', str(simulated / 'truth_v.csv'), '--out', str(out)])
        assert code == EXIT_OK
        for name in ('v_hat.csv', 'v_perp.csv', 'mu.csv', 's.csv', 'outliers.csv', 'summary.json'):
            assert (out / name).is_file(), name
        summary = json.loads((out / 'summary.json').read_text())
        assert summary['variant'] == 'constrained_row'
        assert summary['affinity'] > 99.0
        assert {0, 1, 2} <= set(read_index(out / 'outliers.csv'))
        assert read_matrix(out / 'v_hat.csv').shape == (6, 2)
        assert "objective=" in capsys.readouterr().out

    def test_affinity_matches_in_process_fit(self, simulated, tmp_path):
        """The written affinity is exactly the one of an in-process fit with the same settings."""
        out = tmp_path / "fit"
        code = main(['fit', str(simulated / 'x.csv'), '--rank', '2', '--q', '6', '--seed', '0',
                     '--truth', str(simulated / 'truth_v.csv'), '--out', str(out)])
        assert code == EXIT_OK
        x, truth = generate(SIMULATED_SPEC)
        assert np.array_equal(read_matrix(simulated / 'x.csv'), x.values)
        expected = pc_affinity(fit(Problem(x, SolverConfig(rank_r=2, q=6, seed=0))).v_hat, truth.v_star)
        assert json.loads((out / 'summary.json').read_text())['affinity'] == expected

    def test_zero_budget_on_clean_data(self, tmp_path):
        sim = tmp_path / "clean"
        assert main(simulate_args(outliers='0') + ['--out', str(sim)]) == EXIT_OK
        out = tmp_path / "fit"
        code = main(['fit', str(sim / 'x.csv'), '--rank', '2', '--q', '0',
                     '--truth', str(sim / 'truth_v.csv'), '--out', str(out)])
        assert code == EXIT_OK
        assert (out / 'outliers.csv').read_text().splitlines() == ['row']
        summary = json.loads((out / 'summary.json').read_text())
        assert summary['flagged'] == 0
        assert summary['affinity'] > 99.0

    def test_fit_with_clean_rows(self, simulated, tmp_path):
        clean = tmp_path / "clean.csv"
        clean.write_text("\n".join(str(i) for i in range(4, 41)) + "\n")
        out = tmp_path / "fit"
        code = main(['fit', str(simulated / 'x.csv'), '--rank', '2', '--q', '6',
                     '--clean-rows', str(clean), '--out', str(out)])
        assert code == EXIT_OK
        summary = json.loads((out / 'summary.json').read_text())
        assert 0.9 < summary['rav'] <= 1.0

    def test_missing_input_file(self, tmp_path):
        assert main(['fit', str(tmp_path / 'absent.csv'), '--rank', '2', '--q', '1']) == EXIT_IO

    def test_non_numeric_input(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("1,2,3\n4,five,6\n7,8,9\n")
        assert main(['fit', str(path), '--rank', '1', '--q', '1']) == EXIT_IO

    def test_zero_rank(self, simulated):
        assert main(['fit', str(simulated / 'x.csv'), '--rank', '0', '--q', '2']) == EXIT_CONFIG

    def test_budget_not_below_n(self, simulated):
        assert main(['fit', str(simulated / 'x.csv'), '--rank', '2', '--q', '40']) == EXIT_CONFIG


# ===========================================================================
# TestOtherCommands
# ===========================================================================


class TestOtherCommands:
    """
    *****
    Purpose: Verify batch-fit, bench and pitfall

    Parameters:
    None

    Returns:
    None
    *****
    """

    def test_batch_fit_with_plan(self, simulated, tmp_path):
        out = tmp_path / "batch"
        code = main(['batch-fit', str(simulated / 'x.csv'), '--rank', '2', '--q', '6', '--plan', '2,2',
                     '--truth', str(simulated / 'truth_v.csv'), '--out', str(out)])
        assert code == EXIT_OK
        summary = json.loads((out / 'summary.json').read_text())
        assert summary['plan'] == [2, 2]
        assert summary['affinity'] > 98.0

    def test_batch_fit_plan_mismatch(self, simulated, tmp_path):
        code = main(['batch-fit', str(simulated / 'x.csv'), '--rank', '2', '--q', '6', '--plan', '3,3',
                     '--out', str(tmp_path)])
        assert code == EXIT_IO

    def test_unknown_scenario(self, tmp_path):
        assert main(['bench', 'nosuch', '--out', str(tmp_path)]) == EXIT_CONFIG

    def test_bench_pitfall_markdown(self, tmp_path):
        assert main(['bench', 'pitfall', '--format', 'markdown', '--out', str(tmp_path)]) == EXIT_OK
        assert (tmp_path / 'pitfall.md').read_text().startswith("| p ")

    def test_bench_defaults_to_configured_directory(self, mock_config):
        assert main(['bench', 'pitfall']) == EXIT_OK
        assert (mock_config / 'pitfall.csv').is_file()

    def test_pitfall_command(self, tmp_path, capsys):
        assert main(['pitfall', '--p', '2', '--epsilon', '1', '--out', str(tmp_path)]) == EXIT_OK
        report = json.loads((tmp_path / 'pitfall.json').read_text())
        assert report['closed_form_cosine'] == pytest.approx(1 / np.sqrt(2))
        assert "closed_form=0.707107" in capsys.readouterr().out
