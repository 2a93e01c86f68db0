"""
*****
Purpose: Synthetic benchmarks for robust subspace recovery

Generates data from the low-rank-plus-complement-outlier model
X = U D V^T + (1 mu^T + S) V_perp^T + E (or with outliers planted in the
observation space, X = U D V^T + S + E), scores fits (PC affinity,
masking, swamping, joint detection, robust adjusted variance) and runs
the published experiment grids: q sensitivity, method comparison, batch
versus full fitting, error decay in n and the SVD-reduction pitfall.

Parameters:
None

Returns:
Generators, metrics, experiment runners and the scenario registry
*****
"""

import math
import time
import logging
import dataclasses
from dataclasses import dataclass, field
from multiprocessing.pool import ThreadPool
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.optimize import linear_sum_assignment

import config
from batch import BatchPlan, batch_fit, default_plan
from core_types import (
    OUTLIER_MODES, ConfigError, DataMatrix, DimensionError, FitResult, OrthonormalFrame,
    OutlierMatrix, SolverConfig, derive_seed, pc_affinity, random_orthonormal_frame,
)
from csv_io import read_key_values, write_table
from rocpca_solver import Problem, fit
from thresholding import universal_threshold

logger = logging.getLogger(__name__)

OUTLIER_SPACES = ("complement", "observation")


# ============================================================================
# Published numbers, printed next to reproduced tables
# ============================================================================

# (L, O, alpha) -> (affinity, masking, swamping, joint detection)
PUBLISHED_TABLE1 = {
    (4.5, 4, 0.8): (96, 0.250, 0.000, 0.000), (4.5, 10, 0.8): (72, 0.378, 0.020, 0.000),
    (4.5, 16, 0.8): (24, 0.650, 0.076, 0.000),
    (4.5, 4, 1.0): (97, 0.000, 0.000, 1.000), (4.5, 10, 1.0): (95, 0.018, 0.002, 0.980),
    (4.5, 16, 1.0): (93, 0.034, 0.006, 0.960),
    (4.5, 4, 1.5): (97, 0.000, 0.021, 1.000), (4.5, 10, 1.5): (97, 0.000, 0.056, 1.000),
    (4.5, 16, 1.5): (95, 0.016, 0.098, 0.980),
    (4.5, 4, 2.0): (97, 0.000, 0.042, 1.000), (4.5, 10, 2.0): (96, 0.000, 0.111, 1.000),
    (4.5, 16, 2.0): (95, 0.000, 0.190, 1.000),
    (4.5, 4, 2.5): (96, 0.000, 0.063, 1.000), (4.5, 10, 2.5): (96, 0.000, 0.167, 1.000),
    (4.5, 16, 2.5): (93, 0.000, 0.286, 1.000),
    (4.5, 4, 3.0): (97, 0.000, 0.083, 1.000), (4.5, 10, 3.0): (96, 0.000, 0.222, 1.000),
    (4.5, 16, 3.0): (92, 0.000, 0.381, 1.000),
    (4.5, 4, 3.5): (96, 0.000, 0.104, 1.000), (4.5, 10, 3.5): (95, 0.000, 0.278, 1.000),
    (4.5, 16, 3.5): (89, 0.000, 0.476, 1.000),
    (4.5, 4, 4.0): (96, 0.000, 0.125, 1.000), (4.5, 10, 4.0): (94, 0.000, 0.333, 1.000),
    (4.5, 16, 4.0): (82, 0.000, 0.571, 1.000),
    (3.5, 4, 0.8): (95, 0.265, 0.001, 0.000), (3.5, 10, 0.8): (85, 0.288, 0.010, 0.000),
    (3.5, 16, 0.8): (37, 0.621, 0.071, 0.000),
    (3.5, 4, 1.0): (97, 0.000, 0.000, 1.000), (3.5, 10, 1.0): (95, 0.030, 0.003, 0.880),
    (3.5, 16, 1.0): (72, 0.248, 0.047, 0.540),
    (3.5, 4, 1.5): (97, 0.000, 0.021, 1.000), (3.5, 10, 1.5): (95, 0.018, 0.058, 0.960),
    (3.5, 16, 1.5): (93, 0.028, 0.100, 0.940),
    (3.5, 4, 2.0): (97, 0.000, 0.042, 1.000), (3.5, 10, 2.0): (96, 0.000, 0.111, 1.000),
    (3.5, 16, 2.0): (92, 0.028, 0.196, 0.960),
    (3.5, 4, 2.5): (97, 0.000, 0.063, 1.000), (3.5, 10, 2.5): (96, 0.000, 0.167, 1.000),
    (3.5, 16, 2.5): (93, 0.001, 0.286, 0.980),
    (3.5, 4, 3.0): (96, 0.000, 0.083, 1.000), (3.5, 10, 3.0): (95, 0.000, 0.222, 1.000),
    (3.5, 16, 3.0): (93, 0.000, 0.381, 1.000),
    (3.5, 4, 3.5): (96, 0.000, 0.104, 1.000), (3.5, 10, 3.5): (94, 0.000, 0.278, 1.000),
    (3.5, 16, 3.5): (88, 0.000, 0.476, 1.000),
    (3.5, 4, 4.0): (96, 0.000, 0.125, 1.000), (3.5, 10, 4.0): (91, 0.016, 0.335, 0.980),
    (3.5, 16, 4.0): (86, 0.009, 0.573, 0.980),
}

# (n, p, sigma2, O) -> (plain PCA affinity, ROC-PCA affinity), row outliers of 10s, q = 2 O
PUBLISHED_TABLE2 = {
    (100, 50, 0.5, 4): (0, 96), (100, 50, 0.5, 10): (0, 96), (100, 50, 0.5, 16): (0, 95),
    (100, 50, 1.0, 4): (3, 92), (100, 50, 1.0, 10): (1, 92), (100, 50, 1.0, 16): (0, 90),
    (50, 100, 0.5, 2): (1, 94), (50, 100, 0.5, 5): (0, 93), (50, 100, 0.5, 8): (2, 92),
    (50, 100, 1.0, 2): (1, 87), (50, 100, 1.0, 5): (0, 85), (50, 100, 1.0, 8): (1, 84),
    (450, 15, 0.001, 2): (0, 100),
}

# (sigma2, O^e) -> (plain PCA affinity, ROC-PCA affinity), element outliers of 15s, q_e = 2 O^e
PUBLISHED_TABLE4 = {
    (0.5, 60): (16, 100), (0.5, 120): (9, 99),
    (1.0, 60): (20, 99), (1.0, 120): (9, 99),
}

# (p, O) -> (plain PCA affinity, ROC-PCA affinity), outliers planted in the observation space;
# p = 50 are rows of 10s, p = 18 the three element settings
PUBLISHED_OBSERVATION = {
    (50, 4): (14, 92), (50, 10): (10, 91), (50, 16): (11, 89),
    (18, 144): (75, 95), (18, 12): (99, 99), (18, 72): (79, 79),
}

# p -> (full affinity, full seconds, batch affinity, batch seconds)
PUBLISHED_TABLE8 = {
    100: (98, 4.5, 98, 3.9),
    300: (95, 77.1, 93, 32.8),
    500: (92, 265.2, 89, 95.9),
    1000: (88, 2624.4, 84, 816.8),
}


# ============================================================================
# Data model
# ============================================================================

@dataclass(frozen=True)
class SyntheticSpec:
    """
    *****
    Purpose: Parameters of one simulated data set

    Parameters:
    int n: observations
    int p: features
    int r: principal subspace dimension
    Tuple[float, ...] d_values: strictly decreasing positive diagonal of D
    float sigma2: noise variance
    Tuple[float, ...] mu_star: complement-coordinate mean (zeros if None)
    str outlier_mode: 'row' or 'element'
    int num_outliers: outlier rows (row) or entries (element)
    float leverage: value of every planted outlier coordinate
    int seed: generator seed
    str outlier_space: 'complement' (S lives in V_perp coordinates) or 'observation' (n x p S added to X)
    bool axis_aligned: use V = I[:, :r] instead of a random frame
    int outlier_columns: restrict element outliers to the first k columns of S

    Returns:
    SyntheticSpec instance
    *****
    """
    n: int
    p: int
    r: int
    d_values: Tuple[float, ...]
    sigma2: float
    mu_star: Optional[Tuple[float, ...]] = None
    outlier_mode: str = "row"
    num_outliers: int = 0
    leverage: float = 0.0
    seed: int = 0
    outlier_space: str = "complement"
    axis_aligned: bool = False
    outlier_columns: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "d_values", tuple(float(v) for v in self.d_values))
        if self.mu_star is not None:
            object.__setattr__(self, "mu_star", tuple(float(v) for v in self.mu_star))
        if self.n < 2 or not 1 <= self.r < self.p:
            raise ConfigError(f"Need n >= 2 and 1 <= r < p, got n={self.n}, p={self.p}, r={self.r}")
        if self.r > self.n:
            raise ConfigError(f"r={self.r} exceeds n={self.n}")
        if len(self.d_values) != self.r:
            raise ConfigError(f"Need {self.r} d_values, got {len(self.d_values)}")
        if any(v <= 0 for v in self.d_values) or any(b >= a for a, b in zip(self.d_values, self.d_values[1:])):
            raise ConfigError(f"d_values must be positive and strictly decreasing, got {list(self.d_values)}")
        if self.sigma2 < 0:
            raise ConfigError(f"sigma2 must be >= 0, got {self.sigma2}")
        if self.mu_star is not None and len(self.mu_star) != self.d:
            raise ConfigError(f"mu_star needs {self.d} entries, got {len(self.mu_star)}")
        if self.outlier_mode not in OUTLIER_MODES:
            raise ConfigError(f"outlier_mode must be one of {OUTLIER_MODES}, got '{self.outlier_mode}'")
        if self.outlier_space not in OUTLIER_SPACES:
            raise ConfigError(f"outlier_space must be one of {OUTLIER_SPACES}, got '{self.outlier_space}'")
        full_width = self.d if self.outlier_space == 'complement' else self.p
        if self.outlier_columns is not None and not 1 <= self.outlier_columns <= full_width:
            raise ConfigError(f"outlier_columns must lie in [1, {full_width}], got {self.outlier_columns}")
        limit = self.n if self.outlier_mode == 'row' else self.n * self.planted_width
        if not 0 <= self.num_outliers <= limit:
            raise ConfigError(f"num_outliers must lie in [0, {limit}], got {self.num_outliers}")

    @property
    def d(self) -> int:
        return self.p - self.r

    @property
    def planted_width(self) -> int:
        """Columns of S that element outliers may occupy."""
        if self.outlier_columns is not None:
            return self.outlier_columns
        return self.d if self.outlier_space == 'complement' else self.p

    def with_seed(self, seed: int) -> "SyntheticSpec":
        return dataclasses.replace(self, seed=seed)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """
    *****
    Purpose: Truth behind a simulated data set

    Parameters:
    OrthonormalFrame v_star: p x r principal directions
    OrthonormalFrame v_perp_star: p x d complement directions
    OutlierMatrix s_star: planted outliers in complement coordinates (S V_perp for observation outliers)
    frozenset outlier_rows: planted rows (0-based)
    frozenset outlier_elements: planted (row, column) entries (0-based), in the coordinates of outlier_space
    str outlier_space: where the outliers were planted

    Returns:
    GroundTruth instance
    *****
    """
    v_star: OrthonormalFrame
    v_perp_star: OrthonormalFrame
    s_star: OutlierMatrix
    outlier_rows: frozenset = frozenset()
    outlier_elements: frozenset = frozenset()
    outlier_space: str = "complement"

    def __post_init__(self):
        if self.outlier_space not in OUTLIER_SPACES:
            raise ConfigError(f"outlier_space must be one of {OUTLIER_SPACES}, got '{self.outlier_space}'")
        joint = np.hstack([self.v_star.columns, self.v_perp_star.columns])
        if joint.shape[0] != joint.shape[1]:
            raise DimensionError(f"v_star and v_perp_star must together be square, got {joint.shape}")
        error = float(np.max(np.abs(joint.T @ joint - np.eye(joint.shape[1]))))
        if error > 1e-8:
            raise DimensionError(f"[v_star, v_perp_star] is not orthonormal (error {error:.2e})")


@dataclass
class EvalReport:
    """Scores of one fit against its ground truth; joint_detection is 1 iff masking is 0."""
    affinity: float
    masking: float
    swamping: float
    joint_detection: int
    rav: Optional[float] = None
    wall_time_seconds: float = 0.0

    def __post_init__(self):
        if self.joint_detection != int(self.masking == 0):
            raise ValueError(f"joint_detection={self.joint_detection} inconsistent with masking={self.masking}")


@dataclass
class ResultTable:
    """Rows of an experiment, written as CSV or markdown."""
    columns: Tuple[str, ...]
    rows: List[tuple] = field(default_factory=list)

    def append(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"Row has {len(values)} values, table has {len(self.columns)} columns")
        self.rows.append(tuple(values))

    def column(self, name: str) -> list:
        index = self.columns.index(name)
        return [row[index] for row in self.rows]

    def write(self, path, fmt: str = None):
        write_table(path, self.columns, self.rows, fmt or config.TABLE_FORMAT)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class PitfallReport:
    p: int
    epsilon: float
    n: int
    measured_cosine: float
    closed_form_cosine: float
    reduced_affinity: float


# ============================================================================
# Generation and scoring
# ============================================================================

def generate(spec: SyntheticSpec) -> Tuple[DataMatrix, GroundTruth]:
    """
    *****
    Purpose: Draw X = U D V^T + (1 mu^T + S) V_perp^T + E

    Draw order is fixed (U, then [V, V_perp], then element positions when
    needed, then E) so a seed always gives the same matrix. Row outliers
    are the first O rows set to `leverage` in every coordinate of S;
    element outliers are O positions sampled without replacement from the
    first `planted_width` columns. With outlier_space='observation' S is
    n x p and enters as X = U D V^T + 1 mu^T V_perp^T + S + E.

    Parameters:
    SyntheticSpec spec: simulation parameters

    Returns:
    Tuple[DataMatrix, GroundTruth]: data and the truth behind it
    *****
    """
    rng = np.random.default_rng(spec.seed)
    n, p, r, d = spec.n, spec.p, spec.r, spec.d
    u = random_orthonormal_frame(n, r, rng).columns
    full = random_orthonormal_frame(p, p, rng).columns
    if spec.axis_aligned:
        full = np.eye(p)
    v_star, v_perp = full[:, :r], full[:, r:]

    observation = spec.outlier_space == 'observation'
    s = np.zeros((n, p if observation else d))
    rows, elements = frozenset(), frozenset()
    if spec.outlier_mode == 'row':
        s[:spec.num_outliers] = spec.leverage
        rows = frozenset(range(spec.num_outliers))
    else:
        width = spec.planted_width
        positions = rng.choice(n * width, size=spec.num_outliers, replace=False)
        elements = frozenset((int(i) // width, int(i) % width) for i in positions)
        for i, j in elements:
            s[i, j] = spec.leverage
        rows = frozenset(i for i, _ in elements)

    noise = math.sqrt(spec.sigma2) * rng.standard_normal((n, p))
    mu = np.zeros(d) if spec.mu_star is None else np.asarray(spec.mu_star)
    low_rank = (u * np.asarray(spec.d_values)) @ v_star.T
    if observation:
        x = low_rank + mu[None, :] @ v_perp.T + s + noise
        s_star = s @ v_perp
    else:
        x = low_rank + (mu[None, :] + s) @ v_perp.T + noise
        s_star = s

    truth = GroundTruth(v_star=OrthonormalFrame(v_star), v_perp_star=OrthonormalFrame(v_perp),
                        s_star=OutlierMatrix(s_star), outlier_rows=rows, outlier_elements=elements,
                        outlier_space=spec.outlier_space)
    return DataMatrix(x), truth


def rav(x, v_hat: OrthonormalFrame, clean_rows: Sequence[int]) -> float:
    """
    *****
    Purpose: Robust adjusted variance ||X0 P_V||_F^2 / ||X0||_F^2 over clean rows X0

    Parameters:
    DataMatrix | np.ndarray x: n x p data
    OrthonormalFrame v_hat: p x r directions
    Sequence[int] clean_rows: 0-based indices of the clean observations

    Returns:
    float: fraction in [0, 1]
    *****
    """
    values = x.values if isinstance(x, DataMatrix) else np.asarray(x, dtype=float)
    clean = values[sorted(clean_rows)]
    total = float(np.vdot(clean, clean))
    if total == 0:
        return 0.0
    projected = clean @ v_hat.columns
    return float(np.vdot(projected, projected)) / total


def _detection_rates(flagged: frozenset, planted: frozenset, universe: int) -> Tuple[float, float]:
    masking = len(planted - flagged) / len(planted) if planted else 0.0
    clean = universe - len(planted)
    swamping = len(flagged - planted) / clean if clean > 0 else 0.0
    return masking, swamping


def match_complement_columns(fitted: OrthonormalFrame, truth: OrthonormalFrame) -> np.ndarray:
    """
    *****
    Purpose: Pair each fitted complement column with a true one

    A complement frame is identified only up to rotation, so column j of
    the fit carries no fixed meaning. The pairing maximizes the total
    |cosine| between matched columns of fitted^T truth.

    Parameters:
    OrthonormalFrame fitted: p x d fitted frame
    OrthonormalFrame truth: p x d true frame

    Returns:
    np.ndarray: mapping with mapping[j] the true column matched to fitted column j

    Errors:
    DimensionError on mismatched shapes
    *****
    """
    if fitted.p != truth.p or fitted.d != truth.d:
        raise DimensionError(f"Cannot match a {fitted.p}x{fitted.d} frame to a {truth.p}x{truth.d} frame")
    rows, cols = linear_sum_assignment(np.abs(fitted.columns.T @ truth.columns), maximize=True)
    mapping = np.empty(fitted.d, dtype=int)
    mapping[rows] = cols
    return mapping


def evaluate(result: FitResult, truth: GroundTruth, clean_rows: Sequence[int] = None,
             x=None, wall_time: float = 0.0) -> EvalReport:
    """
    *****
    Purpose: Score a fit against its ground truth

    Masking is the fraction of planted outliers not flagged, swamping the
    fraction of clean rows (entries in element mode) flagged. Flagged
    entries are moved to the true complement columns their fitted columns
    match before comparing. Observation-space truths are scored on rows,
    since their entries live in different coordinates. RAV needs both `x`
    and `clean_rows`.

    Parameters:
    FitResult result: finished fit
    GroundTruth truth: simulation truth
    Sequence[int] clean_rows: 0-based clean rows for RAV
    DataMatrix x: the fitted data, for RAV
    float wall_time: seconds spent fitting

    Returns:
    EvalReport: affinity, masking, swamping, joint detection and RAV
    *****
    """
    affinity = pc_affinity(result.v_hat, truth.v_star)
    n, d = result.s.shape
    if result.outlier_mode == 'row' or truth.outlier_space == 'observation':
        masking, swamping = _detection_rates(frozenset(result.flagged_rows), truth.outlier_rows, n)
    else:
        mapping = match_complement_columns(result.v_perp, truth.v_perp_star)
        flagged = frozenset((i, int(mapping[j])) for i, j in result.flagged_elements)
        masking, swamping = _detection_rates(flagged, truth.outlier_elements, n * d)
    rav_value = None
    if clean_rows is not None and x is not None:
        rav_value = rav(x, result.v_hat, clean_rows)
    return EvalReport(affinity=affinity, masking=masking, swamping=swamping,
                      joint_detection=int(masking == 0), rav=rav_value, wall_time_seconds=wall_time)


def plain_pca(x, r: int) -> OrthonormalFrame:
    """Top-r right singular vectors of the column-centred data."""
    values = x.values if isinstance(x, DataMatrix) else np.asarray(x, dtype=float)
    _, _, vt = linalg.svd(values - values.mean(axis=0), full_matrices=False)
    return OrthonormalFrame(vt[:r].T)


# ============================================================================
# Experiment runners
# ============================================================================

def solver_config_for(spec: SyntheticSpec, budget: int, seed: int, threads: int = 1,
                      **overrides) -> SolverConfig:
    """Constrained configuration matching a spec's outlier mode."""
    key = 'q' if spec.outlier_mode == 'row' else 'q_e'
    options = {'rank_r': spec.r, 'outlier_mode': spec.outlier_mode, key: budget,
               'seed': seed, 'threads': threads}
    options.update(overrides)
    return SolverConfig(**options)


def universal_config_for(spec: SyntheticSpec, seed: int, threads: int = 1) -> SolverConfig:
    """l0-penalized element configuration: hard rule at sigma sqrt(2 log(n d))."""
    lam = universal_threshold(math.sqrt(spec.sigma2), spec.n, spec.d)
    return SolverConfig(rank_r=spec.r, outlier_mode='element', lam=lam, rule='hard',
                        seed=seed, threads=threads)


def _timed(function: Callable, *args):
    start = time.perf_counter()
    value = function(*args)
    return value, time.perf_counter() - start


def _map_replicates(work: Callable[[int], object], reps: int, threads: int = None) -> list:
    """Run work(rep) for rep in range(reps); results keep replicate order."""
    if threads is None:
        threads = config.THREADS
    workers = min(threads, reps)
    if workers <= 1:
        return [work(rep) for rep in range(reps)]
    with ThreadPool(processes=workers) as pool:
        return pool.map(work, range(reps))


def _check_reps(reps: int):
    if reps < 1:
        raise ConfigError(f"reps must be >= 1, got {reps}")


def _fit_and_score(spec: SyntheticSpec, budget: int) -> EvalReport:
    x, truth = generate(spec)
    result, seconds = _timed(fit, Problem(x, solver_config_for(spec, budget, spec.seed)))
    return evaluate(result, truth, wall_time=seconds)


def run_q_sensitivity(base: SyntheticSpec, alphas: Sequence[float], reps: int,
                      leverages: Sequence[float] = None, outlier_counts: Sequence[int] = None,
                      threads: int = None) -> ResultTable:
    """
    *****
    Purpose: Mean affinity and detection rates over the (L, O, alpha) grid with q = round(alpha O)

    Replicate k of every cell uses seed derive_seed(base.seed, k), so all
    alphas of an (L, O) pair see the same data sets. Cells with q >= n are
    skipped with a warning.

    Parameters:
    SyntheticSpec base: row-mode spec supplying n, p, r, D, sigma2
    Sequence[float] alphas: budget multipliers
    int reps: replicates per cell
    Sequence[float] leverages: L values (base.leverage if None)
    Sequence[int] outlier_counts: O values (base.num_outliers if None)
    int threads: concurrent replicates (config.THREADS if None)

    Returns:
    ResultTable: L, O, alpha, q, affinity, masking, swamping, joint_detection
    *****
    """
    _check_reps(reps)
    table = ResultTable(('L', 'O', 'alpha', 'q', 'affinity', 'masking', 'swamping', 'joint_detection'))
    for leverage in leverages or [base.leverage]:
        for count in outlier_counts or [base.num_outliers]:
            for alpha in alphas:
                q = int(round(alpha * count))
                if q >= base.n:
                    logger.warning(f"Skipping cell L={leverage}, O={count}, alpha={alpha}: q={q} >= n={base.n}")
                    continue
                cell = dataclasses.replace(base, leverage=leverage, num_outliers=count)

                def work(rep, cell=cell, q=q):
                    return _fit_and_score(cell.with_seed(derive_seed(base.seed, rep)), q)

                reports = _map_replicates(work, reps, threads)
                table.append(float(leverage), int(count), float(alpha), q,
                             float(np.mean([e.affinity for e in reports])),
                             float(np.mean([e.masking for e in reports])),
                             float(np.mean([e.swamping for e in reports])),
                             float(np.mean([e.joint_detection for e in reports])))
                logger.info(f"Cell L={leverage}, O={count}, alpha={alpha}: affinity={table.rows[-1][4]:.1f}")
    return table


def run_comparison(specs: Sequence[SyntheticSpec], reps: int, include_plain_pca: bool = True,
                   alpha: float = 2.0, threads: int = None, include_universal: bool = False) -> ResultTable:
    """
    *****
    Purpose: Mean affinity and wall time of ROC-PCA (and plain PCA) per spec

    Parameters:
    Sequence[SyntheticSpec] specs: simulation settings
    int reps: replicates per spec
    bool include_plain_pca: add the plain PCA baseline
    float alpha: budget multiplier, q = round(alpha O)
    int threads: concurrent replicates
    bool include_universal: add the l0-penalized element fit at the universal threshold ('rocpca_l0')

    Returns:
    ResultTable: n, p, sigma2, O, method, affinity, seconds
    *****
    """
    _check_reps(reps)
    table = ResultTable(('n', 'p', 'sigma2', 'O', 'method', 'affinity', 'seconds'))
    for spec in specs:
        budget = int(round(alpha * spec.num_outliers))

        def work(rep, spec=spec, budget=budget):
            x, truth = generate(spec.with_seed(derive_seed(spec.seed, rep)))
            seed = derive_seed(spec.seed, rep)
            result, seconds = _timed(fit, Problem(x, solver_config_for(spec, budget, seed)))
            scores = {'rocpca': (pc_affinity(result.v_hat, truth.v_star), seconds)}
            if include_universal:
                result, seconds = _timed(fit, Problem(x, universal_config_for(spec, seed)))
                scores['rocpca_l0'] = (pc_affinity(result.v_hat, truth.v_star), seconds)
            if include_plain_pca:
                frame, seconds = _timed(plain_pca, x, spec.r)
                scores['pca'] = (pc_affinity(frame, truth.v_star), seconds)
            return scores

        outcomes = _map_replicates(work, reps, threads)
        for method in outcomes[0]:
            table.append(spec.n, spec.p, spec.sigma2, spec.num_outliers, method,
                         float(np.mean([o[method][0] for o in outcomes])),
                         float(np.mean([o[method][1] for o in outcomes])))
        logger.info(f"Compared methods on n={spec.n}, p={spec.p}, sigma2={spec.sigma2}, O={spec.num_outliers}")
    return table


def run_batch_comparison(specs: Sequence[SyntheticSpec], reps: int, alpha: float = 2.0,
                         plans: Dict[int, Sequence[int]] = None, threads: int = None) -> ResultTable:
    """
    *****
    Purpose: Full versus batch fitting, affinity and wall time per p

    Replicates run one at a time so the timings are comparable; `threads`
    caps the multi-start workers inside each fit.

    Parameters:
    Sequence[SyntheticSpec] specs: row-mode settings, one per p
    int reps: replicates per spec
    float alpha: budget multiplier, q = round(alpha O)
    Dict[int, Sequence[int]] plans: batch sizes by p (default_plan if missing)
    int threads: multi-start workers per fit (config.THREADS if None)

    Returns:
    ResultTable: p, method, affinity, seconds
    *****
    """
    _check_reps(reps)
    if threads is None:
        threads = config.THREADS
    table = ResultTable(('p', 'method', 'affinity', 'seconds'))
    for spec in specs:
        budget = int(round(alpha * spec.num_outliers))
        if plans and spec.p in plans:
            plan = BatchPlan.from_sizes(plans[spec.p])
        else:
            plan = default_plan(spec.p, spec.r)
        scores = {'rocpca': [], 'batch': []}
        for rep in range(reps):
            seed = derive_seed(spec.seed, rep)
            x, truth = generate(spec.with_seed(seed))
            solver = solver_config_for(spec, budget, seed, threads=threads)
            result, seconds = _timed(fit, Problem(x, solver))
            scores['rocpca'].append((pc_affinity(result.v_hat, truth.v_star), seconds))
            frame, seconds = _timed(batch_fit, x, spec.r, plan, solver)
            scores['batch'].append((pc_affinity(frame, truth.v_star), seconds))
        for method, values in scores.items():
            table.append(spec.p, method, float(np.mean([v[0] for v in values])),
                         float(np.mean([v[1] for v in values])))
        logger.info(f"Batch comparison p={spec.p}, plan {list(plan.sizes)} done")
    return table


def subspace_error(estimate: OrthonormalFrame, truth: OrthonormalFrame) -> float:
    """||P_hat - P_star||_F^2 / 2."""
    diff = estimate.projector() - truth.projector()
    return 0.5 * float(np.vdot(diff, diff))


def run_error_decay(ns: Sequence[int] = (50, 100, 200, 400), p: int = 10, r: int = 3,
                    q_ratio: float = 0.04, reps: int = None, seed: int = 0,
                    d_values: Sequence[float] = (60.0, 40.0, 20.0), sigma2: float = 2.0,
                    leverage: float = 4.5, threads: int = None) -> ResultTable:
    """
    *****
    Purpose: Mean squared subspace error as n grows at a fixed q / n

    Each n plants O = q / 2 outlier rows and fits with q = round(q_ratio n).

    Parameters:
    Sequence[int] ns: sample sizes
    int p, r: dimensions
    float q_ratio: budget per observation
    int reps: replicates per n (config.DEFAULT_REPS if None)
    int seed: base seed
    Sequence[float] d_values: diagonal of D
    float sigma2: noise variance
    float leverage: outlier value
    int threads: concurrent replicates

    Returns:
    ResultTable: n, q, mean_error, std_error (standard error of the mean)
    *****
    """
    if reps is None:
        reps = config.DEFAULT_REPS
    _check_reps(reps)
    table = ResultTable(('n', 'q', 'mean_error', 'std_error'))
    for n in ns:
        q = int(round(q_ratio * n))
        spec = SyntheticSpec(n=n, p=p, r=r, d_values=tuple(d_values), sigma2=sigma2,
                             num_outliers=q // 2, leverage=leverage, seed=seed)

        def work(rep, spec=spec, q=q):
            rep_seed = derive_seed(seed, n, rep)
            x, truth = generate(spec.with_seed(rep_seed))
            result = fit(Problem(x, solver_config_for(spec, q, rep_seed)))
            return subspace_error(result.v_hat, truth.v_star)

        errors = np.array(_map_replicates(work, reps, threads))
        std_error = float(errors.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
        table.append(n, q, float(errors.mean()), std_error)
        logger.info(f"Error decay n={n}: mean error {errors.mean():.4g}")
    return table


def svd_pitfall_demo(p: int, epsilon: float, n: int = 10, seed: int = 0) -> PitfallReport:
    """
    *****
    Purpose: Show that an SVD reduction caps the attainable affinity

    Rows are a_i [1, eps, ..., eps] with a_i ~ N(0, 1) and the true direction
    is e_1. The row space is spanned by [1, eps, ..., eps], whose cosine with
    e_1 is 1 / sqrt(1 + eps^2 (p - 1)); PCA after a rank-n SVD reduction
    cannot do better.

    Parameters:
    int p: dimension, >= 2
    float epsilon: contamination level, > 0
    int n: observations, >= 2
    int seed: generator seed

    Returns:
    PitfallReport: measured and closed-form cosines and the reduced-PCA affinity
    *****
    """
    if p < 2 or n < 2 or not epsilon > 0:
        raise ConfigError(f"Need p >= 2, n >= 2 and epsilon > 0, got p={p}, n={n}, epsilon={epsilon}")
    rng = np.random.default_rng(seed)
    direction = np.full(p, float(epsilon))
    direction[0] = 1.0
    x = np.outer(rng.standard_normal(n), direction)

    _, _, vt = linalg.svd(x, full_matrices=False)
    measured = abs(float(vt[0, 0]))
    reduced = x @ vt.T
    _, _, reduced_vt = linalg.svd(reduced - reduced.mean(axis=0), full_matrices=False)
    recovered = vt.T @ reduced_vt[0]
    reduced_affinity = 100.0 * abs(float(recovered[0])) / float(np.linalg.norm(recovered))
    closed_form = 1.0 / math.sqrt(1.0 + epsilon ** 2 * (p - 1))
    logger.info(f"SVD pitfall p={p}, epsilon={epsilon}: cosine {measured:.6f} (closed form {closed_form:.6f})")
    return PitfallReport(p=p, epsilon=float(epsilon), n=n, measured_cosine=measured,
                         closed_form_cosine=closed_form, reduced_affinity=reduced_affinity)


# ============================================================================
# Scenarios
# ============================================================================

TABLE1_BASE = dict(n=100, p=10, r=3, d_values=(60.0, 40.0, 20.0), sigma2=2.0)
TABLE1_ALPHAS = (0.8, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0)


def scenario_table1(reps: int, seed: int, threads: int = None) -> ResultTable:
    base = SyntheticSpec(**TABLE1_BASE, leverage=4.5, num_outliers=4, seed=seed)
    table = run_q_sensitivity(base, TABLE1_ALPHAS, reps, leverages=(4.5, 3.5),
                              outlier_counts=(4, 10, 16), threads=threads)
    out = ResultTable(table.columns + ('published_affinity', 'published_masking', 'published_swamping', 'published_jd'))
    for row in table.rows:
        out.append(*row, *PUBLISHED_TABLE1.get((row[0], row[1], row[2]), (None,) * 4))
    return out


def scenario_table2(reps: int, seed: int, threads: int = None) -> ResultTable:
    specs = []
    for n, p, sigma2, count in PUBLISHED_TABLE2:
        specs.append(SyntheticSpec(n=n, p=p, r=3, d_values=(100.0, 60.0, 20.0), sigma2=sigma2,
                                   num_outliers=count, leverage=10.0, seed=seed))
    table = run_comparison(specs, reps, include_plain_pca=True, threads=threads)
    return _with_published_affinity(table, lambda row: PUBLISHED_TABLE2.get((row[0], row[1], row[2], row[3])))


def scenario_table4(reps: int, seed: int, threads: int = None) -> ResultTable:
    specs = [SyntheticSpec(n=100, p=18, r=3, d_values=(80.0, 60.0, 40.0), sigma2=sigma2,
                           outlier_mode='element', num_outliers=count, leverage=15.0, seed=seed)
             for sigma2, count in PUBLISHED_TABLE4]
    table = run_comparison(specs, reps, include_plain_pca=True, threads=threads)
    return _with_published_affinity(table, lambda row: PUBLISHED_TABLE4.get((row[2], row[3])))


def _with_published_affinity(table: ResultTable, lookup: Callable) -> ResultTable:
    out = ResultTable(table.columns + ('published_affinity',))
    for row in table.rows:
        published = lookup(row)
        value = None
        column = {'pca': 0, 'rocpca': 1}.get(row[4])
        if published is not None and column is not None:
            value = published[column]
        out.append(*row, value)
    return out


OBSERVATION_ROW_BASE = dict(n=100, p=50, r=3, d_values=(100.0, 60.0, 20.0), sigma2=1.0)
OBSERVATION_ELEMENT_BASE = dict(n=100, p=18, r=3, d_values=(80.0, 60.0, 40.0), sigma2=1.0)
OBSERVATION_ELEMENT_SETTINGS = (
    dict(num_outliers=144, leverage=15.0),
    dict(num_outliers=12, leverage=5.0, axis_aligned=True, outlier_columns=3),
    dict(num_outliers=72, leverage=20.0),
)


def scenario_observation(reps: int, seed: int, threads: int = None) -> ResultTable:
    """Row and element outliers planted in the observation space; element settings add the l0 fit."""
    row_specs = [SyntheticSpec(**OBSERVATION_ROW_BASE, num_outliers=count, leverage=10.0,
                               outlier_space='observation', seed=seed) for count in (4, 10, 16)]
    element_specs = [SyntheticSpec(**OBSERVATION_ELEMENT_BASE, outlier_mode='element',
                                   outlier_space='observation', seed=seed, **setting)
                     for setting in OBSERVATION_ELEMENT_SETTINGS]
    table = run_comparison(row_specs, reps, include_plain_pca=True, threads=threads)
    elements = run_comparison(element_specs, reps, include_plain_pca=True, threads=threads,
                              include_universal=True)
    table.rows.extend(elements.rows)
    return _with_published_affinity(table, lambda row: PUBLISHED_OBSERVATION.get((row[1], row[3])))


def scenario_table8(reps: int, seed: int, threads: int = None, ps: Sequence[int] = (100, 300)) -> ResultTable:
    specs = [SyntheticSpec(n=40, p=p, r=3, d_values=(80.0, 60.0, 40.0), sigma2=1.5,
                           num_outliers=4, leverage=5.0, seed=seed) for p in ps]
    table = run_batch_comparison(specs, reps, threads=threads)
    out = ResultTable(table.columns + ('published_affinity', 'published_seconds'))
    for p, method, affinity, seconds in table.rows:
        published = PUBLISHED_TABLE8.get(p)
        if published is None:
            out.append(p, method, affinity, seconds, None, None)
        else:
            offset = 0 if method == 'rocpca' else 2
            out.append(p, method, affinity, seconds, published[offset], published[offset + 1])
    return out


def scenario_pitfall(reps: int, seed: int, threads: int = None) -> ResultTable:
    table = ResultTable(('p', 'epsilon', 'measured_cosine', 'closed_form_cosine', 'reduced_affinity'))
    for p, epsilon in ((10001, 0.1), (2, 1.0), (101, 1.0)):
        report = svd_pitfall_demo(p, epsilon, n=10, seed=seed)
        table.append(p, epsilon, report.measured_cosine, report.closed_form_cosine, report.reduced_affinity)
    return table


def scenario_decay(reps: int, seed: int, threads: int = None) -> ResultTable:
    return run_error_decay(reps=reps, seed=seed, threads=threads)


SCENARIOS: Dict[str, Callable[..., ResultTable]] = {
    'table1': scenario_table1,
    'table2': scenario_table2,
    'table4': scenario_table4,
    'table8': scenario_table8,
    'observation': scenario_observation,
    'pitfall': scenario_pitfall,
    'decay': scenario_decay,
}


def _floats(text: str) -> Tuple[float, ...]:
    return tuple(float(v) for v in text.split(',') if v.strip())


def load_scenario_file(path) -> Callable[..., ResultTable]:
    """
    *****
    Purpose: Build a scenario from a 'key = value' file

    Required keys: kind ('q_sensitivity' or 'comparison'), n, p, rank, d.
    Optional: sigma2, mode, outliers, leverage, alphas (comma list),
    leverages, outlier_counts, alpha, plain_pca.

    Parameters:
    PathLike path: scenario file

    Returns:
    Callable: scenario function taking (reps, seed, threads)

    Errors:
    ConfigError on a missing or unknown key value
    *****
    """
    values = read_key_values(path)
    try:
        kind = values['kind']
        spec = SyntheticSpec(n=int(values['n']), p=int(values['p']), r=int(values['rank']),
                             d_values=_floats(values['d']), sigma2=float(values.get('sigma2', 1.0)),
                             outlier_mode=values.get('mode', 'row'),
                             num_outliers=int(values.get('outliers', 0)),
                             leverage=float(values.get('leverage', 0.0)))
    except KeyError as e:
        raise ConfigError(f"{path}: missing key {e}")
    except ValueError as e:
        raise ConfigError(f"{path}: {e}")

    if kind == 'q_sensitivity':
        def scenario(reps, seed, threads=None):
            leverages = _floats(values['leverages']) if 'leverages' in values else None
            counts = tuple(int(c) for c in _floats(values['outlier_counts'])) if 'outlier_counts' in values else None
            return run_q_sensitivity(spec.with_seed(seed), _floats(values.get('alphas', '2')), reps,
                                     leverages=leverages, outlier_counts=counts, threads=threads)
        return scenario
    if kind == 'comparison':
        def scenario(reps, seed, threads=None):
            plain = values.get('plain_pca', 'true').lower() in ('1', 'true', 'yes')
            return run_comparison([spec.with_seed(seed)], reps, include_plain_pca=plain,
                                  alpha=float(values.get('alpha', 2.0)), threads=threads)
        return scenario
    raise ConfigError(f"{path}: unknown scenario kind '{kind}' (expected q_sensitivity or comparison)")
