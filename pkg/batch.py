"""
*****
Purpose: Batch ROC-PCA for large p

Estimates the orthogonal complement m_k directions at a time. After each
batch the data is projected onto the remaining directions (ordered by
singular value), so later batches run in a smaller ambient dimension and
the fast low-rank Cayley path stays available. Outer tolerances tighten
geometrically from batch to batch. Batches that fit inside the null
space of the data are solved there directly, and batches after the first
real fit start from the clean-row SVD of the reduced data.

Parameters:
None

Returns:
BatchPlan, default_plan, null_dimension, warm_start and batch_fit
*****
"""

import math
import logging
import dataclasses
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import linalg

import config
from core_types import ConfigError, DataMatrix, DimensionError, OrthonormalFrame, SolverConfig
from rocpca_solver import Problem, ordered_complement, fit

logger = logging.getLogger(__name__)

BATCH_MAX = 100
BATCH_MIN = 30
SINGLE_BATCH_LIMIT = 60


@dataclass(frozen=True)
class BatchPlan:
    """
    *****
    Purpose: Batch sizes m_1..m_K and their outer tolerances

    Parameters:
    Tuple[int, ...] sizes: positive batch sizes summing to d = p - r
    Tuple[float, ...] tolerance_schedule: K nonincreasing outer tolerances

    Returns:
    BatchPlan instance
    *****
    """
    sizes: Tuple[int, ...]
    tolerance_schedule: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(m) for m in self.sizes))
        object.__setattr__(self, "tolerance_schedule", tuple(float(t) for t in self.tolerance_schedule))
        if not self.sizes or any(m < 1 for m in self.sizes):
            raise ConfigError(f"Batch sizes must be positive, got {list(self.sizes)}")
        if len(self.tolerance_schedule) != len(self.sizes):
            raise ConfigError(f"Need one tolerance per batch, got {len(self.tolerance_schedule)} "
                              f"for {len(self.sizes)} batches")
        if any(b > a for a, b in zip(self.tolerance_schedule, self.tolerance_schedule[1:])):
            raise ConfigError(f"Tolerances must be nonincreasing, got {list(self.tolerance_schedule)}")

    def validate(self, p: int, r: int):
        """Raise DimensionError unless the sizes sum to p - r."""
        if sum(self.sizes) != p - r:
            raise DimensionError(f"Batch sizes {list(self.sizes)} sum to {sum(self.sizes)}, "
                                 f"expected p - r = {p - r}")

    @classmethod
    def from_sizes(cls, sizes, tol_outer: float = None) -> "BatchPlan":
        """Plan with the geometric tolerance schedule for the given sizes."""
        return cls(tuple(sizes), tolerance_schedule(len(sizes), tol_outer))


def tolerance_schedule(k: int, tol_outer: float = None) -> Tuple[float, ...]:
    """Geometric tolerances from 10 * tol_outer down to tol_outer over k batches."""
    if tol_outer is None:
        tol_outer = config.TOL_OUTER
    if k == 1:
        return (tol_outer,)
    return tuple(10 * tol_outer * 0.1 ** (i / (k - 1)) for i in range(k))


def default_plan(p: int, r: int, tol_outer: float = None) -> BatchPlan:
    """
    *****
    Purpose: Rule-of-thumb batch plan with 30 <= m_k <= 100

    Takes batches of 100 while more than 200 directions remain. The rest is
    split into two or three near-equal batches, sizes rounded up to a
    multiple of five with the last batch absorbing the remainder; 60 or
    fewer remaining directions form a single batch.

    Parameters:
    int p: ambient dimension
    int r: principal subspace dimension
    float tol_outer: final outer tolerance (config.TOL_OUTER if None)

    Returns:
    BatchPlan: plan whose sizes sum to p - r
    *****
    """
    remaining = p - r
    if remaining < 1:
        raise ConfigError(f"p - r must be >= 1, got p={p}, r={r}")
    sizes = []
    while remaining > 2 * BATCH_MAX:
        sizes.append(BATCH_MAX)
        remaining -= BATCH_MAX
    if remaining <= SINGLE_BATCH_LIMIT:
        sizes.append(remaining)
    else:
        k = 3 if remaining >= 3 * BATCH_MIN else 2
        m = 5 * math.ceil(remaining / k / 5)
        sizes.extend([m] * (k - 1) + [remaining - (k - 1) * m])
    return BatchPlan.from_sizes(sizes, tol_outer)


def null_dimension(values: np.ndarray) -> int:
    """Dimension of the null space of the column-centred data, at numerical rank."""
    centered = values - values.mean(axis=0)
    singular = linalg.svdvals(centered)
    if singular.size == 0 or singular[0] == 0:
        return values.shape[1]
    rank = int(np.sum(singular > singular[0] * max(centered.shape) * np.finfo(float).eps))
    return values.shape[1] - rank


def warm_start(values: np.ndarray, m: int, flagged_rows) -> OrthonormalFrame:
    """
    *****
    Purpose: Starting complement frame for a later batch

    The m trailing right singular vectors of the column-centred rows not
    flagged by the previous batch (all rows when fewer than two remain).

    Parameters:
    np.ndarray values: n x p_k reduced data
    int m: frame width
    Sequence[int] flagged_rows: rows the previous batch marked as outliers

    Returns:
    OrthonormalFrame: p_k x m frame
    *****
    """
    clean = np.delete(values, np.asarray(list(flagged_rows), dtype=int), axis=0)
    if clean.shape[0] < 2:
        clean = values
    _, _, vt = linalg.svd(clean - clean.mean(axis=0), full_matrices=True)
    return OrthonormalFrame(vt[-m:].T)


def batch_fit(x: DataMatrix, r: int, plan: BatchPlan, solver_config: SolverConfig) -> OrthonormalFrame:
    """
    *****
    Purpose: Principal directions from a batch-wise complement estimate

    Batch k fits m_k complement directions of X_k, then keeps the remaining
    p_k - m_k directions V_k ordered by singular value and sets
    X_{k+1} = X_k V_k. The product V_1 ... V_K maps back to the original
    coordinates; a final SVD pass orders its r columns.

    A batch no wider than the null space of the centred data starts inside
    that null space, where the objective is already zero. The first batch
    that needs a real fit runs the multi-start and the cooling schedule;
    batches after it start from warm_start, without the rows it flagged,
    at the fixed target budget.

    Parameters:
    DataMatrix x: n x p data
    int r: principal subspace dimension
    BatchPlan plan: batch sizes summing to p - r
    SolverConfig solver_config: row-mode configuration; rank_r and tol_outer are set per batch

    Returns:
    OrthonormalFrame: p x r principal directions

    Errors:
    DimensionError on a plan that does not match (p, r)
    ConfigError for element-mode configurations
    *****
    """
    if not isinstance(x, DataMatrix):
        x = DataMatrix(x)
    plan.validate(x.p, r)
    if solver_config.outlier_mode != 'row':
        raise ConfigError("Batch fitting supports row outliers only")

    current = np.array(x.values)
    product = np.eye(x.p)
    flagged = ()
    screened = False
    for k, (m, tol) in enumerate(zip(plan.sizes, plan.tolerance_schedule)):
        p_k = current.shape[1]
        batch_config = dataclasses.replace(solver_config, rank_r=p_k - m, tol_outer=tol)
        exact = null_dimension(current) >= m
        logger.info(f"Batch {k + 1}/{len(plan.sizes)}: fitting {m} complement direction(s) in dimension {p_k}"
                    + (" inside the data null space" if exact else ""))
        if exact or screened:
            warm = dataclasses.replace(batch_config, cooling=False)
            start = warm_start(current, m, () if exact else flagged)
            result = fit(Problem(DataMatrix(current), warm), initial_frame=start)
        else:
            result = fit(Problem(DataMatrix(current), batch_config))
        if not exact:
            flagged = result.flagged_rows
            screened = True
        kept = ordered_complement(current, result.v_perp)
        current = current @ kept
        product = product @ kept

    _, _, vt = linalg.svd(current, full_matrices=True)
    directions = product @ vt.T[:, :r]
    return OrthonormalFrame(directions)
