"""
*****
Purpose: Unit tests for the shared containers, error hierarchy, random
frames and subspace geometry helpers in core_types.

Parameters:
None

Returns:
None
*****
"""

import math

import numpy as np
import pytest

from core_types import (
    ConfigError,
    DataError,
    DataMatrix,
    DimensionError,
    FitResult,
    OrthonormalFrame,
    OutlierMatrix,
    RocPcaError,
    SolverConfig,
    complement_basis,
    derive_seed,
    largest_canonical_angle_cosine,
    orthonormalize,
    pc_affinity,
    projector_distance,
    random_orthonormal_frame,
)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

FLOAT_TOLERANCE = 1e-8
"""Tolerance used for floating-point comparisons in this module."""


def assert_close(actual, expected, tolerance=FLOAT_TOLERANCE):
    """
    *****
    Purpose: Assert that two floats are within a given tolerance

    Parameters:
    float actual: the value produced by the code under test
    float expected: the value the test expects
    float tolerance: maximum allowed absolute difference (default FLOAT_TOLERANCE)

    Returns:
    None
    *****
    """
    assert abs(actual - expected) < tolerance, (
        f"Expected {expected} +/- {tolerance}, got {actual}"
    )


def make_frame(columns):
    return OrthonormalFrame(np.asarray(columns, dtype=float))


# ===========================================================================
# TestDataMatrix
# ===========================================================================


class TestDataMatrix:
    """
    *****
    Purpose: Verify DataMatrix validation of shape and finiteness

    Parameters:
    None

    Returns:
    None
    *****
    """

    def test_dimensions(self):
        x = DataMatrix(np.zeros((4, 3)))
        assert (x.n, x.p) == (4, 3)

    def test_values_are_read_only_copy(self):
        source = np.ones((3, 2))
        x = DataMatrix(source)
        source[0, 0] = 99.0
        assert x.values[0, 0] == 1.0
        with pytest.raises(ValueError):
            x.values[0, 0] = 5.0

    def test_single_row_rejected(self):
        with pytest.raises(DimensionError):
            DataMatrix(np.zeros((1, 3)))

    def test_one_dimensional_rejected(self):
        with pytest.raises(DimensionError):
            DataMatrix(np.zeros(5))

    def test_nan_names_row_and_column(self):
        """
        *****
        Purpose: A NaN at (row 2, column 3) is reported 1-based

        Parameters:
        None

        Returns:
        None
        *****
        """
        values = np.zeros((3, 4))
        values[1, 2] = np.nan
        with pytest.raises(DataError, match="row 2, column 3"):
            DataMatrix(values)

    def test_errors_share_base_class(self):
        with pytest.raises(RocPcaError):
            DataMatrix(np.array([[np.inf, 0.0], [0.0, 0.0]]))


# ===========================================================================
# TestOrthonormalFrame
# ===========================================================================


class TestOrthonormalFrame:
    """
    *****
    Purpose: Verify the orthonormality and width invariants of frames

    Parameters:
    None

    Returns:
    None
    *****
    """

    def test_identity_columns_accepted(self):
        frame = make_frame(np.eye(4)[:, :2])
        assert (frame.p, frame.d) == (4, 2)
        assert frame.orthonormality_error() == 0.0

    def test_vector_becomes_single_column(self):
        frame = OrthonormalFrame(np.array([0.6, 0.8]))
        assert (frame.p, frame.d) == (2, 1)

    def test_non_orthonormal_rejected(self):
        with pytest.raises(DataError):
            make_frame([[1.0, 1.0], [0.0, 1.0]])

    def test_too_wide_rejected(self):
        with pytest.raises(DimensionError):
            OrthonormalFrame(np.ones((2, 3)))

    def test_projector_is_idempotent(self, rng):
        frame = random_orthonormal_frame(6, 2, rng)
        projector = frame.projector()
        assert np.allclose(projector @ projector, projector, atol=1e-12)

    def test_from_matrix_orthonormalizes(self):
        frame = OrthonormalFrame.from_matrix(np.array([[2.0, 1.0], [0.0, 1.0], [0.0, 0.0]]))
        assert frame.orthonormality_error() < 1e-12


# ===========================================================================
# TestOutlierMatrix
# ===========================================================================


class TestOutlierMatrix:
    """
    *****
    Purpose: Verify the cached supports agree with the stored values

    Parameters:
    None

    Returns:
    None
    *****
    """

    def test_supports(self):
        s = OutlierMatrix(np.array([[0.0, 0.0], [1.5, 0.0], [0.0, -2.0]]))
        assert s.row_support == frozenset({1, 2})
        assert s.element_support == frozenset({(1, 0), (2, 1)})
        assert np.allclose(s.row_norms, [0.0, 1.5, 2.0])

    def test_zeros_have_empty_support(self):
        s = OutlierMatrix.zeros(5, 3)
        assert s.shape == (5, 3)
        assert s.row_support == frozenset()


# ===========================================================================
# TestFitResult
# ===========================================================================


class TestFitResult:
    """
    *****
    Purpose: Verify FitResult enforces orthogonality of v_hat and v_perp
    and serializes to plain Python

    Parameters:
    None

    Returns:
    None
    *****
    """

    def _result(self, v_hat_columns):
        eye = np.eye(3)
        return FitResult(
            v_perp=make_frame(eye[:, 2:]), mu=np.array([0.5]),
            s=OutlierMatrix(np.array([[0.0], [3.0]])), v_hat=make_frame(v_hat_columns),
            objective=1.25, outer_iterations=4, stationarity_residual=1e-9,
        )

    def test_flagged_rows_and_dict(self):
        result = self._result(np.eye(3)[:, :2])
        assert result.flagged_rows == (1,)
        payload = result.to_dict()
        assert payload['flagged_rows'] == [1]
        assert payload['objective'] == 1.25
        assert payload['mu'] == [0.5]

    def test_overlapping_frames_rejected(self):
        with pytest.raises(DataError):
            self._result(np.eye(3)[:, 1:])


# ===========================================================================
# TestSolverConfig
# ===========================================================================


class TestSolverConfig:
    """
    *****
    Purpose: Verify SolverConfig range checks and variant naming

    Parameters:
    None

    Returns:
    None
    *****
    """

    def test_constrained_row_variant(self):
        cfg = SolverConfig(rank_r=3, q=8)
        assert cfg.variant == 'constrained_row'
        assert cfg.budget == 8
        assert not cfg.penalized

    def test_penalized_element_variant(self):
        cfg = SolverConfig(rank_r=2, outlier_mode='element', lam=1.5)
        assert cfg.variant == 'penalized_element'
        assert cfg.budget is None

    def test_missing_budget_rejected(self):
        with pytest.raises(ConfigError):
            SolverConfig(rank_r=2)

    @pytest.mark.parametrize("overrides", [
        {'kappa': 1.0}, {'kappa': 0.0}, {'rho': 0.0}, {'window_t': 0}, {'eta': -1.0},
        {'nu': 0.0}, {'m1': 20}, {'seed': -1}, {'seed': 2 ** 64}, {'rank_r': 0},
        {'outlier_mode': 'column'}, {'rule': 'scad'}, {'threads': 0},
    ])
    def test_out_of_range_rejected(self, overrides):
        options = {'rank_r': 2, 'q': 3}
        options.update(overrides)
        with pytest.raises(ConfigError):
            SolverConfig(**options)

    def test_validate_against_data(self):
        cfg = SolverConfig(rank_r=3, q=10)
        cfg.validate(n=11, p=4)
        with pytest.raises(ConfigError):
            cfg.validate(n=10, p=4)
        with pytest.raises(ConfigError):
            cfg.validate(n=20, p=3)

    def test_validate_element_budget(self):
        cfg = SolverConfig(rank_r=1, outlier_mode='element', q_e=10)
        cfg.validate(n=4, p=4)
        with pytest.raises(ConfigError):
            cfg.validate(n=5, p=3)

    def test_config_error_is_value_error(self):
        with pytest.raises(ValueError):
            SolverConfig(rank_r=2, q=3, kappa=2.0)


# ===========================================================================
# TestRandomFrames
# ===========================================================================


class TestRandomFrames:
    """
    *****
    Purpose: Verify seeded Haar frames are orthonormal and reproducible

    Parameters:
    None

    Returns:
    None
    *****
    """

    def test_square_frame_is_orthogonal(self):
        frame = random_orthonormal_frame(3, 3, np.random.default_rng(11))
        assert np.max(np.abs(frame.columns.T @ frame.columns - np.eye(3))) <= 1e-12

    def test_same_seed_same_frame(self):
        a = random_orthonormal_frame(5, 2, np.random.default_rng(7))
        b = random_orthonormal_frame(5, 2, np.random.default_rng(7))
        assert np.array_equal(a.columns, b.columns)

    def test_gram_check(self):
        frame = random_orthonormal_frame(4, 2, np.random.default_rng(1))
        assert frame.orthonormality_error() <= 1e-12

    def test_too_wide_rejected(self, rng):
        with pytest.raises(DimensionError):
            random_orthonormal_frame(2, 3, rng)

    def test_orthonormalize_fixes_signs(self):
        q = orthonormalize(np.array([[-2.0, 0.0], [0.0, -3.0], [0.0, 0.0]]))
        assert np.allclose(q[:2], np.eye(2))

    def test_derive_seed_is_stable_and_distinct(self):
        assert derive_seed(5, 1) == derive_seed(5, 1)
        assert derive_seed(5, 1) != derive_seed(5, 2)
        assert 0 <= derive_seed(5, 1) < 2 ** 64


# ===========================================================================
# TestSubspaceGeometry
# ===========================================================================


class TestSubspaceGeometry:
    """
    *****
    Purpose: Verify canonical-angle cosines, affinity and projector distance

    Parameters:
    None

    Returns:
    None
    *****
    """

    def test_identical_frames(self, rng):
        frame = random_orthonormal_frame(5, 2, rng)
        assert_close(largest_canonical_angle_cosine(frame, frame), 1.0)

    def test_orthogonal_lines(self):
        assert_close(largest_canonical_angle_cosine(make_frame([[1.0], [0.0]]), make_frame([[0.0], [1.0]])), 0.0)

    def test_forty_five_degrees(self):
        a = make_frame([[1.0], [0.0], [0.0]])
        b = make_frame([[1 / math.sqrt(2)], [1 / math.sqrt(2)], [0.0]])
        assert_close(largest_canonical_angle_cosine(a, b), 1 / math.sqrt(2), 1e-6)
        assert_close(projector_distance(a, b), 1 / math.sqrt(2), 1e-6)

    def test_projector_identity_on_random_pairs(self, rng):
        """
        *****
        Purpose: ||P_A - P_B||_2^2 + cos^2 theta = 1 on random equal-width pairs

        Parameters:
        np.random.Generator rng: shared seeded generator

        Returns:
        None
        *****
        """
        for _ in range(100):
            a = random_orthonormal_frame(6, 2, rng)
            b = random_orthonormal_frame(6, 2, rng)
            cosine = largest_canonical_angle_cosine(a, b)
            assert_close(projector_distance(a, b) ** 2 + cosine ** 2, 1.0)

    def test_affinity_ignores_basis_rotation(self, rng):
        a = random_orthonormal_frame(7, 3, rng)
        b = random_orthonormal_frame(7, 3, rng)
        rotation = random_orthonormal_frame(3, 3, rng).columns
        rotated = OrthonormalFrame(b.columns @ rotation)
        assert_close(pc_affinity(a, b), pc_affinity(a, rotated), 1e-8)

    def test_mismatched_widths_rejected(self, rng):
        with pytest.raises(DimensionError):
            largest_canonical_angle_cosine(random_orthonormal_frame(4, 1, rng), random_orthonormal_frame(4, 2, rng))

    def test_complement_basis(self, rng):
        frame = random_orthonormal_frame(6, 2, rng)
        basis = complement_basis(frame)
        assert basis.shape == (6, 4)
        assert np.max(np.abs(basis.T @ frame.columns)) < 1e-12
        assert np.max(np.abs(basis.T @ basis - np.eye(4))) < 1e-12

    def test_full_frame_has_no_complement(self):
        with pytest.raises(DimensionError):
            complement_basis(make_frame(np.eye(3)))
