"""
*****
Purpose: Shared data model for robust subspace recovery

Holds the validated containers every other module passes around (data
matrix, orthonormal frames, outlier matrix, fit result, solver
configuration), the error hierarchy, seeded random frame generation and
the subspace geometry helpers (canonical angles, projector distance,
orthogonal complements).

Parameters:
None

Returns:
Types and helper functions for subspace estimation
*****
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Tuple

import numpy as np
from scipy import linalg

import config

logger = logging.getLogger(__name__)

OUTLIER_MODES = ("row", "element")
PENALTY_RULES = ("soft", "hard", "hard_ridge")


# ============================================================================
# Errors
# ============================================================================

class RocPcaError(Exception):
    """Base class for all library errors."""


class DimensionError(RocPcaError, ValueError):
    """Shapes or frame widths do not line up."""


class DataError(RocPcaError, ValueError):
    """Input values are unusable (non-finite, unparsable, not orthonormal)."""


class ConfigError(RocPcaError, ValueError):
    """A tuning constant, budget, plan or simulation spec is out of range."""


class FeasibilityError(RocPcaError):
    """An outlier matrix violates the budget of a constrained objective."""


class RuleArityError(RocPcaError, TypeError):
    """A whole-matrix (quantile) rule was applied to a single scalar."""


class StepFailure(RocPcaError):
    """The Cayley system is singular for the trial step; shrink the step."""


class PhaseStall(RocPcaError):
    """No acceptable step exists; the V-phase is treated as converged."""


# ============================================================================
# Containers
# ============================================================================

def _frozen_copy(values) -> np.ndarray:
    """Copy into a read-only float64 array."""
    array = np.array(values, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """
    *****
    Purpose: Validated n x p observation matrix (rows = observations)

    Parameters:
    np.ndarray values: real matrix, n >= 2 rows and p >= 2 columns, all finite

    Returns:
    DataMatrix instance
    *****
    """
    values: np.ndarray

    def __post_init__(self):
        array = _frozen_copy(self.values)
        if array.ndim != 2:
            raise DimensionError(f"Data must be a 2-D matrix, got {array.ndim} dimension(s)")
        n, p = array.shape
        if n < 2 or p < 2:
            raise DimensionError(f"Data must have at least 2 rows and 2 columns, got {n}x{p}")
        if not np.all(np.isfinite(array)):
            bad_row, bad_col = np.argwhere(~np.isfinite(array))[0]
            raise DataError(f"Non-finite value at row {bad_row + 1}, column {bad_col + 1}")
        object.__setattr__(self, "values", array)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class OrthonormalFrame:
    """
    *****
    Purpose: p x d matrix with orthonormal columns (a point on the Stiefel manifold)

    Parameters:
    np.ndarray columns: p x d matrix with V^T V = I to config.ORTHO_TOL, 1 <= d <= p

    Returns:
    OrthonormalFrame instance
    *****
    """
    columns: np.ndarray

    def __post_init__(self):
        array = _frozen_copy(self.columns)
        if array.ndim == 1:
            array = _frozen_copy(array.reshape(-1, 1))
        if array.ndim != 2:
            raise DimensionError(f"Frame must be a 2-D matrix, got {array.ndim} dimension(s)")
        p, d = array.shape
        if not 1 <= d <= p:
            raise DimensionError(f"Frame width must satisfy 1 <= d <= p, got p={p}, d={d}")
        object.__setattr__(self, "columns", array)
        self.check()

    @property
    def p(self) -> int:
        return self.columns.shape[0]

    @property
    def d(self) -> int:
        return self.columns.shape[1]

    def orthonormality_error(self) -> float:
        """Return max |V^T V - I|."""
        gram = self.columns.T @ self.columns
        return float(np.max(np.abs(gram - np.eye(self.d))))

    def check(self, tol: float = None):
        """
        *****
        Purpose: Re-check the orthonormality invariant

        Parameters:
        float tol: allowed max-norm deviation (uses config.ORTHO_TOL if None)

        Returns:
        None

        Errors:
        DataError if the columns drifted off the manifold
        *****
        """
        if tol is None:
            tol = config.ORTHO_TOL
        error = self.orthonormality_error()
        if error > tol:
            raise DataError(f"Frame columns are not orthonormal (max |V^T V - I| = {error:.3e} > {tol:.0e})")

    def projector(self) -> np.ndarray:
        """Return the p x p orthogonal projector V V^T."""
        return self.columns @ self.columns.T

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "OrthonormalFrame":
        """Orthonormalize an arbitrary full-column-rank matrix into a frame."""
        return cls(orthonormalize(matrix))


@dataclass(frozen=True, eq=False)
class OutlierMatrix:
    """
    *****
    Purpose: n x d outlier matrix S with cached row and element supports

    Stored dense; sparsity is a property of the values, not of the storage.

    Parameters:
    np.ndarray values: real n x d matrix

    Returns:
    OutlierMatrix instance
    *****
    """
    values: np.ndarray

    def __post_init__(self):
        array = _frozen_copy(self.values)
        if array.ndim != 2:
            raise DimensionError(f"Outlier matrix must be 2-D, got {array.ndim} dimension(s)")
        object.__setattr__(self, "values", array)

    @classmethod
    def zeros(cls, n: int, d: int) -> "OutlierMatrix":
        return cls(np.zeros((n, d)))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @cached_property
    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    @cached_property
    def row_support(self) -> frozenset:
        """Row indices (0-based) with any nonzero entry."""
        return frozenset(int(i) for i in np.flatnonzero(np.any(self.values != 0, axis=1)))

    @cached_property
    def element_support(self) -> frozenset:
        """(row, column) pairs (0-based) holding a nonzero entry."""
        return frozenset((int(i), int(j)) for i, j in np.argwhere(self.values != 0))


@dataclass(frozen=True, eq=False)
class FitResult:
    """
    *****
    Purpose: Container for a finished robust subspace fit

    Parameters:
    OrthonormalFrame v_perp: estimated orthogonal-complement frame (p x d)
    np.ndarray mu: estimated mean of the OC coordinates (length d)
    OutlierMatrix s: estimated outlier matrix (n x d)
    OrthonormalFrame v_hat: principal directions (p x r), orthogonal to v_perp
    float objective: final objective value
    int outer_iterations: outer alternations run by the winning candidate
    float stationarity_residual: max-norm of the generalized M-estimating equations
    str outlier_mode: 'row' or 'element'
    int candidate_index: which multi-start candidate won

    Returns:
    FitResult instance
    *****
    """
    v_perp: OrthonormalFrame
    mu: np.ndarray
    s: OutlierMatrix
    v_hat: OrthonormalFrame
    objective: float
    outer_iterations: int
    stationarity_residual: float
    outlier_mode: str = "row"
    candidate_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mu", _frozen_copy(self.mu))
        if self.v_hat.p != self.v_perp.p:
            raise DimensionError(f"v_hat has p={self.v_hat.p} but v_perp has p={self.v_perp.p}")
        overlap = float(np.max(np.abs(self.v_hat.columns.T @ self.v_perp.columns)))
        if overlap > 1e-6:
            raise DataError(f"v_hat is not orthogonal to v_perp (max |V^T V_perp| = {overlap:.3e})")

    @property
    def flagged_rows(self) -> Tuple[int, ...]:
        return tuple(sorted(self.s.row_support))

    @property
    def flagged_elements(self) -> Tuple[Tuple[int, int], ...]:
        return tuple(sorted(self.s.element_support))

    def to_dict(self) -> dict:
        """Plain-python serialization (floats keep their exact value through json)."""
        return {
            'outlier_mode': self.outlier_mode,
            'objective': float(self.objective),
            'outer_iterations': int(self.outer_iterations),
            'stationarity_residual': float(self.stationarity_residual),
            'candidate_index': int(self.candidate_index),
            'v_perp': self.v_perp.columns.tolist(),
            'v_hat': self.v_hat.columns.tolist(),
            'mu': self.mu.tolist(),
            's': self.s.values.tolist(),
            'flagged_rows': list(self.flagged_rows),
            'flagged_elements': [list(pair) for pair in self.flagged_elements],
        }


@dataclass(frozen=True)
class SolverConfig:
    """
    *****
    Purpose: Every tuning constant of the solver

    Fields left as None are filled from config.py when the instance is built,
    so site overrides and test monkeypatches flow through.

    Parameters:
    int rank_r: principal subspace dimension r (1 <= r < p)
    str outlier_mode: 'row' (r-Type) or 'element' (e-Type)
    int q: row budget for the constrained row form
    int q_e: element budget for the constrained element form
    float eta: ridge factor
    float lam: penalty level; when set the penalized form is solved
    str rule: scalar rule of the penalized form ('soft', 'hard', 'hard_ridge')
    float kappa: backtrack factor
    float rho: Armijo slope
    int window_t: nonmonotone window
    float nu: cooling rate
    int m0, n0, m1: multi-start sizes
    float tol_outer, tol_inner_s, tol_grad, tol_rel_f: tolerances
    int max_outer, max_inner: iteration caps
    int seed: non-negative 64-bit seed
    int threads: worker threads for multi-start candidates
    bool cooling: drive constrained budgets by progressive cooling

    Returns:
    SolverConfig instance
    *****
    """
    rank_r: int
    outlier_mode: str = "row"
    q: Optional[int] = None
    q_e: Optional[int] = None
    eta: Optional[float] = None
    lam: Optional[float] = None
    rule: str = "hard"
    kappa: Optional[float] = None
    rho: Optional[float] = None
    window_t: Optional[int] = None
    nu: Optional[float] = None
    m0: Optional[int] = None
    n0: Optional[int] = None
    m1: Optional[int] = None
    tol_outer: Optional[float] = None
    tol_inner_s: Optional[float] = None
    tol_grad: Optional[float] = None
    tol_rel_f: Optional[float] = None
    max_outer: Optional[int] = None
    max_inner: Optional[int] = None
    seed: Optional[int] = None
    threads: Optional[int] = None
    cooling: bool = True

    def __post_init__(self):
        defaults = {
            'eta': config.ETA, 'kappa': config.KAPPA, 'rho': config.RHO,
            'window_t': config.WINDOW_T, 'nu': config.NU,
            'm0': config.M0, 'n0': config.N0, 'm1': config.M1,
            'tol_outer': config.TOL_OUTER, 'tol_inner_s': config.TOL_INNER_S,
            'tol_grad': config.TOL_GRAD, 'tol_rel_f': config.TOL_REL_F,
            'max_outer': config.MAX_OUTER, 'max_inner': config.MAX_INNER,
            'seed': config.SEED, 'threads': config.THREADS,
        }
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
        self._check_ranges()

    def _check_ranges(self):
        if self.rank_r < 1:
            raise ConfigError(f"rank_r must be >= 1, got {self.rank_r}")
        if self.outlier_mode not in OUTLIER_MODES:
            raise ConfigError(f"outlier_mode must be one of {OUTLIER_MODES}, got '{self.outlier_mode}'")
        if self.rule not in PENALTY_RULES:
            raise ConfigError(f"rule must be one of {PENALTY_RULES}, got '{self.rule}'")
        if self.lam is None and self.budget is None:
            name = 'q' if self.outlier_mode == 'row' else 'q_e'
            raise ConfigError(f"Constrained {self.outlier_mode} form needs {name} (or set lam for the penalized form)")
        if self.lam is not None and self.lam < 0:
            raise ConfigError(f"lam must be >= 0, got {self.lam}")
        if self.budget is not None and self.budget < 0:
            raise ConfigError(f"Outlier budget must be >= 0, got {self.budget}")
        if not 0 < self.kappa < 1:
            raise ConfigError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.rho <= 0:
            raise ConfigError(f"rho must be > 0, got {self.rho}")
        if self.window_t < 1:
            raise ConfigError(f"window_t must be >= 1, got {self.window_t}")
        if self.eta < 0:
            raise ConfigError(f"eta must be >= 0, got {self.eta}")
        if self.nu <= 0:
            raise ConfigError(f"nu must be > 0, got {self.nu}")
        if self.m0 < 1 or not 1 <= self.m1 <= self.m0 or self.n0 < 0:
            raise ConfigError(f"Multi-start sizes need m0 >= 1, 1 <= m1 <= m0, n0 >= 0; got "
                              f"m0={self.m0}, n0={self.n0}, m1={self.m1}")
        for name in ('tol_outer', 'tol_inner_s', 'tol_grad', 'tol_rel_f'):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ConfigError(f"Iteration caps must be >= 1, got max_outer={self.max_outer}, "
                              f"max_inner={self.max_inner}")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError(f"seed must be a non-negative 64-bit integer, got {self.seed}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    @property
    def penalized(self) -> bool:
        return self.lam is not None

    @property
    def budget(self) -> Optional[int]:
        """The active quantile budget: q in row mode, q_e in element mode."""
        return self.q if self.outlier_mode == 'row' else self.q_e

    @property
    def variant(self) -> str:
        form = 'penalized' if self.penalized else 'constrained'
        return f"{form}_{self.outlier_mode}"

    def validate(self, n: int, p: int):
        """
        *****
        Purpose: Check the configuration against concrete data dimensions

        Parameters:
        int n: number of observations
        int p: number of features

        Returns:
        None

        Errors:
        ConfigError if r >= p or the budget does not leave clean data to fit
        *****
        """
        if self.rank_r >= p:
            raise ConfigError(f"rank_r must be < p, got r={self.rank_r}, p={p}")
        if self.penalized:
            return
        if self.outlier_mode == 'row' and self.q >= n:
            raise ConfigError(f"q must be < n, got q={self.q}, n={n}")
        if self.outlier_mode == 'element':
            cells = n * (p - self.rank_r)
            if self.q_e >= cells:
                raise ConfigError(f"q_e must be < n*d = {cells}, got q_e={self.q_e}")


# ============================================================================
# Random frames and seeds
# ============================================================================

def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 64-bit child seed for (seed, keys...)."""
    state = np.random.SeedSequence([int(seed), *[int(k) for k in keys]]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def spawn_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator stream for (seed, keys...)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))


def orthonormalize(matrix: np.ndarray) -> np.ndarray:
    """
    *****
    Purpose: Q factor of a thin QR, signs fixed so diag(R) >= 0

    Parameters:
    np.ndarray matrix: p x d matrix of full column rank

    Returns:
    np.ndarray: p x d matrix with orthonormal columns spanning the same space
    *****
    """
    q_factor, r_factor = linalg.qr(np.asarray(matrix, dtype=float), mode='economic')
    signs = np.sign(np.diag(r_factor))
    signs[signs == 0] = 1.0
    return q_factor * signs


def random_orthonormal_frame(p: int, d: int, rng: np.random.Generator) -> OrthonormalFrame:
    """
    *****
    Purpose: Haar-distributed random p x d frame

    Parameters:
    int p: ambient dimension
    int d: frame width, 1 <= d <= p
    np.random.Generator rng: seeded generator (consumed, never global state)

    Returns:
    OrthonormalFrame: sign-normalized Q factor of a Gaussian p x d matrix

    Errors:
    DimensionError if d > p or d < 1
    *****
    """
    if not 1 <= d <= p:
        raise DimensionError(f"Frame width must satisfy 1 <= d <= p, got p={p}, d={d}")
    return OrthonormalFrame(orthonormalize(rng.standard_normal((p, d))))


# ============================================================================
# Subspace geometry
# ============================================================================

def _check_comparable(a: OrthonormalFrame, b: OrthonormalFrame):
    if a.p != b.p or a.d != b.d:
        raise DimensionError(f"Frames must share ambient dimension and width, got "
                             f"{a.p}x{a.d} and {b.p}x{b.d}")


def largest_canonical_angle_cosine(a: OrthonormalFrame, b: OrthonormalFrame) -> float:
    """
    *****
    Purpose: Cosine of the largest canonical angle between span(a) and span(b)

    Parameters:
    OrthonormalFrame a: first frame
    OrthonormalFrame b: second frame, same p and d

    Returns:
    float: smallest singular value of a^T b, in [0, 1]

    Errors:
    DimensionError on mismatched shapes
    *****
    """
    _check_comparable(a, b)
    singular_values = linalg.svdvals(a.columns.T @ b.columns)
    return float(np.clip(singular_values.min(), 0.0, 1.0))


def pc_affinity(a: OrthonormalFrame, b: OrthonormalFrame) -> float:
    """PC affinity: 100 x cosine of the largest canonical angle."""
    return 100.0 * largest_canonical_angle_cosine(a, b)


def projector_distance(a: OrthonormalFrame, b: OrthonormalFrame) -> float:
    """Spectral norm of P_a - P_b."""
    _check_comparable(a, b)
    return float(linalg.norm(a.projector() - b.projector(), 2))


def complement_basis(frame: OrthonormalFrame) -> np.ndarray:
    """
    *****
    Purpose: Orthonormal basis of the orthogonal complement of a frame

    Parameters:
    OrthonormalFrame frame: p x d frame with d < p

    Returns:
    np.ndarray: p x (p - d) matrix B with B^T B = I and B^T frame = 0

    Errors:
    DimensionError if the frame already spans the whole space
    *****
    """
    if frame.d >= frame.p:
        raise DimensionError(f"A {frame.p}x{frame.d} frame has no orthogonal complement")
    q_factor, _ = linalg.qr(frame.columns, mode='full')
    return q_factor[:, frame.d:]
