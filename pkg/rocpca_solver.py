"""
*****
Purpose: Robust orthogonal-complement PCA solver

Alternates a (mu, S) thresholding loop with a Stiefel-manifold V_perp
phase. Constrained forms drive their quantile budget by progressive
cooling, candidates come from a seeded multi-start, and every fit carries
a stationarity certificate built from the M-estimating equations.

Parameters:
None

Returns:
Problem, CoolingSchedule and the fit functions
*****
"""

import math
import logging
import dataclasses
from dataclasses import dataclass
from multiprocessing.pool import ThreadPool
from typing import List, Optional, Tuple

import numpy as np
from scipy import linalg

from core_types import (
    ConfigError, DataMatrix, DimensionError, FeasibilityError, FitResult, OrthonormalFrame,
    OutlierMatrix, SolverConfig, complement_basis, random_orthonormal_frame, spawn_rng,
)
from stiefel_opt import minimize_on_stiefel
from thresholding import ThresholdRule, implicit_lambda, penalty, psi_residual, threshold

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Problem:
    """
    *****
    Purpose: Data plus solver configuration, validated against each other

    Parameters:
    DataMatrix x: n x p data (an array is wrapped and validated)
    SolverConfig config: solver configuration

    Returns:
    Problem instance
    *****
    """
    x: DataMatrix
    config: SolverConfig

    def __post_init__(self):
        if not isinstance(self.x, DataMatrix):
            object.__setattr__(self, "x", DataMatrix(self.x))
        self.config.validate(self.x.n, self.x.p)

    @property
    def variant(self) -> str:
        return self.config.variant

    @property
    def d(self) -> int:
        """Width of the orthogonal-complement frame, p - r."""
        return self.x.p - self.config.rank_r

    @property
    def rowwise(self) -> bool:
        return self.config.outlier_mode == 'row'

    def threshold_rule(self, budget: Optional[int] = None) -> ThresholdRule:
        """Rule for the S-update: the scalar rule when penalized, else a quantile rule at `budget`."""
        cfg = self.config
        if cfg.penalized:
            return ThresholdRule(kind=cfg.rule, lam=cfg.lam, eta=cfg.eta)
        if budget is None:
            budget = cfg.budget
        return ThresholdRule.quantile(budget, cfg.eta, self.rowwise)

    def cooling_schedule(self) -> Optional["CoolingSchedule"]:
        """Cooling schedule of a constrained fit, None when the budget is fixed."""
        cfg = self.config
        if cfg.penalized or not cfg.cooling:
            return None
        ceiling = self.x.n if self.rowwise else self.x.n * self.d
        return CoolingSchedule(target_q=cfg.budget, ceiling=ceiling, nu=cfg.nu)


@dataclass(frozen=True)
class CoolingSchedule:
    """
    *****
    Purpose: Progressive quantile budget q(k) = max(target, round(2c / (1 + exp(nu k))))

    c is n for row budgets and n d for element budgets, so q(0) = c and
    every row (or entry) is eligible at the start.

    Parameters:
    int target_q: final budget
    int ceiling: starting budget c
    float nu: cooling rate

    Returns:
    CoolingSchedule instance
    *****
    """
    target_q: int
    ceiling: int
    nu: float

    def __post_init__(self):
        if self.nu <= 0:
            raise ConfigError(f"Cooling rate must be > 0, got {self.nu}")
        if not 0 <= self.target_q <= self.ceiling:
            raise ConfigError(f"Cooling target must lie in [0, {self.ceiling}], got {self.target_q}")

    def budget(self, k: int) -> int:
        exponent = min(self.nu * k, 700.0)
        value = 2.0 * self.ceiling / (1.0 + math.exp(exponent))
        return max(self.target_q, min(self.ceiling, int(math.floor(value + 0.5))))

    @property
    def horizon(self) -> int:
        """First k with budget(k) == target_q."""
        arg = 2.0 * self.ceiling / (self.target_q + 0.5) - 1.0
        k = 0 if arg <= 1.0 else int(math.floor(math.log(arg) / self.nu)) + 1
        while k > 0 and self.budget(k - 1) == self.target_q:
            k -= 1
        while self.budget(k) > self.target_q:
            k += 1
        return k


@dataclass
class _Candidate:
    index: int
    frame: OrthonormalFrame
    mu: np.ndarray
    s: OutlierMatrix
    objective: float
    iteration: int = 0
    change: float = math.inf
    done: bool = False


def objective(problem: Problem, v: OrthonormalFrame, mu: np.ndarray, s: OutlierMatrix,
              budget: Optional[int] = None) -> float:
    """
    *****
    Purpose: Evaluate the ROC-PCA objective

    Constrained: 1/2 ||X V - 1 mu^T - S||_F^2 + eta / 2 ||S||_F^2 with S
    within the budget. Penalized: 1/2 ||X V - 1 mu^T - S||_F^2 plus the
    rule's penalty (over row norms in row mode).

    Parameters:
    Problem problem: data and configuration
    OrthonormalFrame v: p x d frame
    np.ndarray mu: length-d mean
    OutlierMatrix s: n x d outliers
    int budget: feasibility budget for constrained forms (configured target if None)

    Returns:
    float: objective value

    Errors:
    FeasibilityError if S has more nonzero rows / entries than the budget
    *****
    """
    cfg = problem.config
    x = problem.x
    mu = np.asarray(mu, dtype=float).ravel()
    if v.p != x.p or s.shape != (x.n, v.d) or mu.shape[0] != v.d:
        raise DimensionError(f"Inconsistent shapes: X {x.n}x{x.p}, V {v.p}x{v.d}, "
                             f"mu {mu.shape[0]}, S {s.shape}")
    residual = x.values @ v.columns - mu[None, :] - s.values
    loss = 0.5 * float(np.vdot(residual, residual))
    if cfg.penalized:
        return loss + penalty(problem.threshold_rule(), s.values, rowwise=problem.rowwise)

    if budget is None:
        budget = cfg.budget
    used = len(s.row_support) if problem.rowwise else len(s.element_support)
    if used > budget:
        unit = 'rows' if problem.rowwise else 'entries'
        raise FeasibilityError(f"S has {used} nonzero {unit}, budget is {budget}")
    return loss + 0.5 * cfg.eta * float(np.vdot(s.values, s.values))


def update_mu_s(x: DataMatrix, v: OrthonormalFrame, s0: OutlierMatrix, rule: ThresholdRule,
                tol: float, max_iter: int, rowwise: bool = False) -> Tuple[np.ndarray, OutlierMatrix]:
    """
    *****
    Purpose: Joint (mu, S) update for a fixed frame

    Iterates S <- Theta((I - 11^T/n) X V + 1 colmean(S)^T) until the max-norm
    change drops to `tol` or `max_iter` is reached, then sets
    mu = colmean(X V - S).

    Parameters:
    DataMatrix x: n x p data
    OrthonormalFrame v: p x d frame
    OutlierMatrix s0: starting S
    ThresholdRule rule: S-update rule
    float tol: max-norm tolerance on S
    int max_iter: iteration cap
    bool rowwise: apply a scalar rule to row norms

    Returns:
    Tuple[np.ndarray, OutlierMatrix]: (mu, S)
    *****
    """
    z = x.values @ v.columns
    if s0.shape != z.shape:
        raise DimensionError(f"S has shape {s0.shape}, expected {z.shape}")
    centered = z - z.mean(axis=0)
    s = np.array(s0.values)
    for _ in range(max_iter):
        s_new = threshold(rule, centered + s.mean(axis=0)[None, :], rowwise=rowwise)
        change = float(np.max(np.abs(s_new - s)))
        s = s_new
        if change <= tol:
            break
    mu = (z - s).mean(axis=0)
    return mu, OutlierMatrix(s)


def _projector_change(old: OrthonormalFrame, new: OrthonormalFrame) -> float:
    """max |P_new - P_old| / p."""
    return float(np.max(np.abs(new.projector() - old.projector()))) / new.p


def ordered_complement(x: np.ndarray, v_perp: OrthonormalFrame) -> np.ndarray:
    """
    *****
    Purpose: Orthonormal basis of span(V_perp)^perp ordered by the singular values of X restricted to it

    Parameters:
    np.ndarray x: n x p data values
    OrthonormalFrame v_perp: p x d frame

    Returns:
    np.ndarray: p x (p - d) matrix; the leading columns are the right singular
    vectors of X (I - V_perp V_perp^T) with the largest singular values
    *****
    """
    basis = complement_basis(v_perp)
    _, _, vt = linalg.svd(x @ basis, full_matrices=True)
    return basis @ vt.T


def _outer_step(problem: Problem, cand: _Candidate, schedule: Optional[CoolingSchedule]) -> _Candidate:
    """One (mu, S) update followed by one V_perp phase."""
    cfg = problem.config
    budget = schedule.budget(cand.iteration) if schedule is not None else cfg.budget
    rule = problem.threshold_rule(budget)
    mu, s = update_mu_s(problem.x, cand.frame, cand.s, rule, cfg.tol_inner_s, cfg.max_inner,
                        rowwise=problem.rowwise)
    frame, _ = minimize_on_stiefel(problem.x, mu, s, cand.frame, cfg)
    cand.change = _projector_change(cand.frame, frame)
    cand.frame, cand.mu, cand.s = frame, mu, s
    cand.objective = objective(problem, frame, mu, s, budget)
    cand.iteration += 1
    logger.debug(f"Candidate {cand.index} iteration {cand.iteration}: budget={budget}, "
                 f"objective={cand.objective:.6g}, projector change={cand.change:.3e}")
    return cand


def _run_candidate(problem: Problem, cand: _Candidate, schedule: Optional[CoolingSchedule],
                   stop_at: int, to_convergence: bool) -> _Candidate:
    while cand.iteration < stop_at:
        _outer_step(problem, cand, schedule)
        cooled = schedule is None or schedule.budget(cand.iteration) == schedule.target_q
        if to_convergence and cooled and cand.change <= problem.config.tol_outer:
            cand.done = True
            break
    return cand


def _map_candidates(problem: Problem, candidates: List[_Candidate], schedule: Optional[CoolingSchedule],
                    stop_at: int, to_convergence: bool) -> List[_Candidate]:
    """Advance candidates independently; results keep the input order."""
    def work(cand):
        return _run_candidate(problem, cand, schedule, stop_at, to_convergence)

    workers = min(problem.config.threads, len(candidates))
    if workers <= 1:
        return [work(cand) for cand in candidates]
    with ThreadPool(processes=workers) as pool:
        return pool.map(work, candidates)


def stationarity_residual(problem: Problem, v: OrthonormalFrame, mu: np.ndarray) -> float:
    """
    *****
    Purpose: Max-norm residual of the generalized M-estimating equations

        1^T psi(X V - 1 mu^T) = 0
        X^T psi(.) - V psi(.)^T X V = 0

    Penalized fits use their own rule. Constrained fits use hard-ridge at
    the threshold level implied by the target budget.

    Parameters:
    Problem problem: data and configuration
    OrthonormalFrame v: fitted frame
    np.ndarray mu: fitted mean

    Returns:
    float: larger of the two max-norms
    *****
    """
    cfg = problem.config
    x = problem.x.values
    shifted = x @ v.columns - np.asarray(mu, dtype=float)[None, :]
    if cfg.penalized:
        rule = problem.threshold_rule()
    else:
        lam = implicit_lambda(shifted, cfg.budget, rowwise=problem.rowwise)
        rule = ThresholdRule(kind='hard_ridge', lam=lam, eta=cfg.eta)
    psi = psi_residual(rule, shifted, rowwise=problem.rowwise)
    location = float(np.max(np.abs(psi.sum(axis=0))))
    frame = float(np.max(np.abs(x.T @ psi - v.columns @ (psi.T @ (x @ v.columns)))))
    return max(location, frame)


def fit(problem: Problem, initial_frame: OrthonormalFrame = None) -> FitResult:
    """
    *****
    Purpose: Fit the robust orthogonal complement of a rank-r principal subspace

    Draws m0 random frames, runs n0 outer iterations on each, keeps the m1
    best by objective at the shared cooled budget and runs those to
    convergence. The winner is the lowest final objective, ties going to
    the lower candidate index, so serial and threaded runs agree. A
    supplied initial frame replaces the multi-start with that single
    candidate.

    Parameters:
    Problem problem: validated data and configuration
    OrthonormalFrame initial_frame: optional p x d warm start

    Returns:
    FitResult: V_perp, mu, S, principal directions and diagnostics

    Errors:
    DimensionError if initial_frame is not p x d
    *****
    """
    cfg = problem.config
    x = problem.x
    n, p, d = x.n, x.p, problem.d
    schedule = problem.cooling_schedule()
    cap = cfg.max_outer
    if schedule is not None:
        cap = max(cap, schedule.horizon + 1)
    if initial_frame is not None and (initial_frame.p, initial_frame.d) != (p, d):
        raise DimensionError(f"Initial frame is {initial_frame.p}x{initial_frame.d}, expected {p}x{d}")
    starts = cfg.m0 if initial_frame is None else 1
    logger.info(f"Fitting {problem.variant} ROC-PCA: n={n}, p={p}, r={cfg.rank_r}, "
                f"budget={cfg.budget}, lam={cfg.lam}, starts={starts}")

    candidates = []
    for index in range(starts):
        if initial_frame is not None:
            frame = initial_frame
        else:
            frame = random_orthonormal_frame(p, d, spawn_rng(cfg.seed, index))
        mu0, s0 = np.zeros(d), OutlierMatrix.zeros(n, d)
        candidates.append(_Candidate(index=index, frame=frame, mu=mu0, s=s0,
                                     objective=objective(problem, frame, mu0, s0)))

    if initial_frame is None:
        candidates = _map_candidates(problem, candidates, schedule, min(cfg.n0, cap), to_convergence=False)
        if cfg.m1 < cfg.m0:
            candidates = sorted(candidates, key=lambda c: (c.objective, c.index))[:cfg.m1]
            logger.info(f"Multi-start cut kept candidates {[c.index for c in candidates]}")

    candidates = _map_candidates(problem, candidates, schedule, cap, to_convergence=True)
    for cand in candidates:
        if not cand.done:
            logger.warning(f"Candidate {cand.index} reached the outer cap ({cap}) "
                           f"with projector change {cand.change:.3e}")

    best = min(candidates, key=lambda c: (c.objective, c.index))
    mu, s = update_mu_s(x, best.frame, best.s, problem.threshold_rule(), cfg.tol_inner_s,
                        cfg.max_inner, rowwise=problem.rowwise)
    final_objective = objective(problem, best.frame, mu, s)
    v_hat = OrthonormalFrame(ordered_complement(x.values, best.frame)[:, :cfg.rank_r])
    result = FitResult(
        v_perp=best.frame, mu=mu, s=s, v_hat=v_hat, objective=final_objective,
        outer_iterations=best.iteration,
        stationarity_residual=stationarity_residual(problem, best.frame, mu),
        outlier_mode=cfg.outlier_mode, candidate_index=best.index,
    )
    logger.info(f"Fit finished: candidate {best.index}, {best.iteration} outer iteration(s), "
                f"objective={final_objective:.6g}, {len(result.flagged_rows)} flagged row(s)")
    return result


def recover_pc_directions(x: DataMatrix, result: FitResult, r: int) -> OrthonormalFrame:
    """
    *****
    Purpose: Top-r right singular vectors of X (I - V_perp V_perp^T)

    Parameters:
    DataMatrix x: data the fit was run on
    FitResult result: finished fit
    int r: number of directions

    Returns:
    OrthonormalFrame: p x r directions, decreasing singular value

    Errors:
    DimensionError if r exceeds p - d
    *****
    """
    available = result.v_perp.p - result.v_perp.d
    if not 1 <= r <= available:
        raise DimensionError(f"Can recover 1..{available} directions from a width-{result.v_perp.d} "
                             f"complement, asked for {r}")
    return OrthonormalFrame(ordered_complement(x.values, result.v_perp)[:, :r])


def sequential_fit(x: DataMatrix, r: int, solver_config: SolverConfig) -> OrthonormalFrame:
    """
    *****
    Purpose: Rank-one fits with deflation X_k = X_{k-1} - X_{k-1} v v^T

    Parameters:
    DataMatrix x: n x p data
    int r: number of directions
    SolverConfig solver_config: configuration (rank_r is replaced by 1)

    Returns:
    OrthonormalFrame: p x r directions [v_1, ..., v_r]
    *****
    """
    if r < 1:
        raise ConfigError(f"r must be >= 1, got {r}")
    if not isinstance(x, DataMatrix):
        x = DataMatrix(x)
    rank_one = dataclasses.replace(solver_config, rank_r=1)
    deflated = np.array(x.values)
    directions = []
    for k in range(r):
        result = fit(Problem(DataMatrix(deflated), rank_one))
        v = np.array(result.v_hat.columns[:, 0])
        for u in directions:
            v -= np.dot(u, v) * u
        v /= np.linalg.norm(v)
        directions.append(v)
        deflated = deflated - np.outer(deflated @ v, v)
        logger.info(f"Sequential fit: direction {k + 1}/{r} found")
    return OrthonormalFrame(np.column_stack(directions))
