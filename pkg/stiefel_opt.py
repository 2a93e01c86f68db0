"""
*****
Purpose: Smooth V-subproblem solver on the Stiefel manifold

Minimizes f(V) = 1/2 ||X V - 1 mu^T - S||_F^2 over p x d frames with
orthonormal columns. Steps move along the Cayley curve of the canonical
Riemannian gradient, step sizes alternate between the two Barzilai-Borwein
formulas, and a nonmonotone backtracking search over the last T function
values keeps the iteration globally convergent.

Parameters:
None

Returns:
Functions for one V-phase of the alternating solver
*****
"""

import logging
import warnings
from collections import deque
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np
from scipy import linalg

import config
from core_types import (
    DataMatrix, DimensionError, OrthonormalFrame, OutlierMatrix, PhaseStall,
    SolverConfig, StepFailure, orthonormalize,
)

logger = logging.getLogger(__name__)


@dataclass
class StiefelState:
    """
    *****
    Purpose: Working state of one V-phase iteration

    The skew matrix W = G V^T - V G^T is kept in factored form W = A1 A2^T
    with A1 = [G, V] and A2 = [V, -G].

    Parameters:
    OrthonormalFrame frame: current iterate V
    np.ndarray euclidean_grad: G at the current iterate
    np.ndarray a1: p x 2d left factor of W
    np.ndarray a2: p x 2d right factor of W
    float f_value: f at the current iterate
    deque f_history: most recent window + 1 accepted f-values
    int iter: iteration counter k

    Returns:
    StiefelState instance
    *****
    """
    frame: OrthonormalFrame
    euclidean_grad: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    f_value: float
    f_history: deque
    iter: int = 0

    @classmethod
    def at(cls, frame: OrthonormalFrame, euclidean_grad: np.ndarray, f_value: float,
           f_history: deque = None, iter: int = 0, window: int = None) -> "StiefelState":
        """Build a state at `frame`; a fresh history holds `window` + 1 values (config.WINDOW_T if None)."""
        if f_history is None:
            if window is None:
                window = config.WINDOW_T
            f_history = deque([f_value], maxlen=window + 1)
        a1, a2 = skew_factors(euclidean_grad, frame.columns)
        return cls(frame=frame, euclidean_grad=euclidean_grad, a1=a1, a2=a2,
                   f_value=f_value, f_history=f_history, iter=iter)

    def skew(self) -> np.ndarray:
        """Dense p x p skew matrix W."""
        return self.a1 @ self.a2.T


@dataclass
class SearchOutcome:
    frame: OrthonormalFrame
    f_new: float
    tau_used: float
    backtracks: int


class SubspaceLoss:
    """
    *****
    Purpose: f(V) = 1/2 ||X V - J||_F^2 with the offset J = 1 mu^T + S held fixed

    Parameters:
    np.ndarray x: n x p data values
    np.ndarray target: n x d offset J

    Returns:
    SubspaceLoss instance
    *****
    """

    def __init__(self, x: np.ndarray, target: np.ndarray):
        self.x = x
        self.target = target

    def residual(self, v: np.ndarray) -> np.ndarray:
        return self.x @ v - self.target

    def value(self, v: np.ndarray) -> float:
        residual = self.residual(v)
        return 0.5 * float(np.vdot(residual, residual))

    def gradient(self, v: np.ndarray) -> np.ndarray:
        return self.x.T @ self.residual(v)


def _offset(x: DataMatrix, d: int, mu: np.ndarray, s: OutlierMatrix) -> np.ndarray:
    mu = np.asarray(mu, dtype=float).ravel()
    if mu.shape[0] != d or s.shape != (x.n, d):
        raise DimensionError(f"Expected mu of length {d} and S of shape {(x.n, d)}, "
                             f"got {mu.shape[0]} and {s.shape}")
    return mu[None, :] + s.values


def euclidean_gradient(x: DataMatrix, v: OrthonormalFrame, mu: np.ndarray, s: OutlierMatrix) -> np.ndarray:
    """
    *****
    Purpose: Euclidean gradient G = X^T (X V - 1 mu^T - S)

    Parameters:
    DataMatrix x: n x p data
    OrthonormalFrame v: p x d frame
    np.ndarray mu: length-d mean
    OutlierMatrix s: n x d outliers

    Returns:
    np.ndarray: p x d gradient

    Errors:
    DimensionError on inconsistent shapes
    *****
    """
    if v.p != x.p:
        raise DimensionError(f"Frame has p={v.p} but data has p={x.p}")
    return SubspaceLoss(x.values, _offset(x, v.d, mu, s)).gradient(v.columns)


def skew_factors(euclidean_grad: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """A1 = [G, V], A2 = [V, -G] so that A1 A2^T = G V^T - V G^T."""
    return np.hstack([euclidean_grad, v]), np.hstack([v, -euclidean_grad])


def riemannian_gradient(state: StiefelState) -> np.ndarray:
    """Canonical-metric gradient W V, evaluated as G - V G^T V."""
    g = state.euclidean_grad
    v = state.frame.columns
    return g - v @ (g.T @ v)


def cayley_step(v: OrthonormalFrame, a1: np.ndarray, a2: np.ndarray, tau: float,
                method: str = "auto") -> OrthonormalFrame:
    """
    *****
    Purpose: Point V(tau) = (I + tau W / 2)^-1 (I - tau W / 2) V on the Cayley curve

    The low-rank form V - tau A1 (I + tau A2^T A1 / 2)^-1 A2^T V needs only a
    2d x 2d solve and is used whenever 2d < p; otherwise the p x p system is
    solved directly. Accumulated round-off beyond config.ORTHO_TOL is removed
    by a QR pass.

    Parameters:
    OrthonormalFrame v: current frame
    np.ndarray a1: p x 2d left factor of W
    np.ndarray a2: p x 2d right factor of W
    float tau: step size, >= 0
    str method: 'auto', 'fast' or 'dense'

    Returns:
    OrthonormalFrame: V(tau)

    Errors:
    StepFailure if the linear system is singular or ill-conditioned
    *****
    """
    columns = v.columns
    p, d = columns.shape
    if method == "auto":
        method = "fast" if 2 * d < p else "dense"
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", linalg.LinAlgWarning)
            moved = _cayley_solve(columns, a1, a2, tau, method)
    except (linalg.LinAlgError, linalg.LinAlgWarning) as e:
        raise StepFailure(f"Cayley system singular at tau={tau:.3e}: {e}") from e
    if not np.all(np.isfinite(moved)):
        raise StepFailure(f"Cayley step produced non-finite values at tau={tau:.3e}")

    drift = float(np.max(np.abs(moved.T @ moved - np.eye(d))))
    if drift > config.ORTHO_TOL:
        logger.debug(f"Re-orthonormalizing Cayley iterate (drift {drift:.2e})")
        moved = orthonormalize(moved)
    return OrthonormalFrame(moved)


def _cayley_solve(columns: np.ndarray, a1: np.ndarray, a2: np.ndarray, tau: float, method: str) -> np.ndarray:
    """Raw V(tau) from the 2d x 2d ('fast') or p x p ('dense') linear system."""
    if method == "fast":
        small = np.eye(a1.shape[1]) + 0.5 * tau * (a2.T @ a1)
        return columns - tau * (a1 @ linalg.solve(small, a2.T @ columns))
    if method == "dense":
        w = a1 @ a2.T
        eye = np.eye(columns.shape[0])
        return linalg.solve(eye + 0.5 * tau * w, (eye - 0.5 * tau * w) @ columns)
    raise ValueError(f"Unknown Cayley method '{method}'")


def curve_derivative_at_zero(state: StiefelState) -> float:
    """
    *****
    Purpose: Slope of f along the Cayley curve at tau = 0, which is -1/2 ||W||_F^2

    ||W||_F^2 = tr((A1^T A1)(A2^T A2)) is read off the 2d x 2d Gram matrices.

    Parameters:
    StiefelState state: current state

    Returns:
    float: f'(0) <= 0
    *****
    """
    gram1 = state.a1.T @ state.a1
    gram2 = state.a2.T @ state.a2
    return -0.5 * float(np.sum(gram1 * gram2))


def bb_stepsize(delta_v: np.ndarray, delta_grad: np.ndarray, iter_parity: int,
                previous_tau: float = 0.5) -> float:
    """
    *****
    Purpose: Alternating Barzilai-Borwein step size

    Even iterations use tr(dV^T dV) / |tr(dV^T dg)|, odd iterations
    |tr(dV^T dg)| / tr(dg^T dg). The result is clamped to
    [config.BB_MIN, config.BB_MAX].

    Parameters:
    np.ndarray delta_v: V_k - V_{k-1}
    np.ndarray delta_grad: grad f(V_k) - grad f(V_{k-1})
    int iter_parity: iteration counter k (only its parity is used)
    float previous_tau: returned unchanged when both differences vanish

    Returns:
    float: step size
    *****
    """
    ss = float(np.vdot(delta_v, delta_v))
    yy = float(np.vdot(delta_grad, delta_grad))
    sy = abs(float(np.vdot(delta_v, delta_grad)))
    if ss == 0.0 and yy == 0.0:
        return previous_tau
    if iter_parity % 2 == 0:
        tau = ss / sy if sy > 0 else config.BB_MAX
    else:
        tau = sy / yy if yy > 0 else config.BB_MAX
    return float(np.clip(tau, config.BB_MIN, config.BB_MAX))


def nonmonotone_search(state: StiefelState, tau0: float, solver_config: SolverConfig,
                       objective: Callable[[np.ndarray], float]) -> SearchOutcome:
    """
    *****
    Purpose: Backtrack tau = kappa^m tau0 until the nonmonotone Armijo test holds

    Accepts the first m with
        f(V(tau)) <= max(recent f-values) + rho * tau * f'(0).

    Parameters:
    StiefelState state: current state (its f_history is the reference window)
    float tau0: initial trial step
    SolverConfig solver_config: supplies kappa and rho
    Callable objective: maps p x d columns to f

    Returns:
    SearchOutcome: accepted frame, its f-value, the step used and the backtrack count

    Errors:
    PhaseStall if f'(0) is not negative or no step is accepted within
    config.MAX_BACKTRACKS backtracks
    *****
    """
    slope = curve_derivative_at_zero(state)
    if not slope < 0:
        raise PhaseStall("Zero Riemannian gradient: no descent direction")
    reference = max(state.f_history)
    tau = tau0
    for backtracks in range(config.MAX_BACKTRACKS + 1):
        try:
            frame = cayley_step(state.frame, state.a1, state.a2, tau)
        except StepFailure as e:
            logger.debug(f"{e}; backtracking")
            tau *= solver_config.kappa
            continue
        f_new = objective(frame.columns)
        if f_new <= reference + solver_config.rho * tau * slope:
            return SearchOutcome(frame=frame, f_new=f_new, tau_used=tau, backtracks=backtracks)
        tau *= solver_config.kappa
    raise PhaseStall(f"No acceptable step after {config.MAX_BACKTRACKS} backtracks")


def minimize_on_stiefel(x: DataMatrix, mu: np.ndarray, s: OutlierMatrix, v0: OrthonormalFrame,
                        solver_config: SolverConfig) -> Tuple[OrthonormalFrame, float]:
    """
    *****
    Purpose: Run one V-phase from v0 with (mu, S) held fixed

    Stops when ||grad f||_F <= tol_grad (1 + |f|), when the relative change
    of f drops below tol_rel_f, when the search stalls, or after max_inner
    iterations. The best iterate seen is returned, so the result never
    exceeds f(v0).

    Parameters:
    DataMatrix x: n x p data
    np.ndarray mu: length-d mean
    OutlierMatrix s: n x d outliers
    OrthonormalFrame v0: starting frame
    SolverConfig solver_config: step and stopping constants

    Returns:
    Tuple[OrthonormalFrame, float]: (best frame, its f-value)
    *****
    """
    if v0.p != x.p:
        raise DimensionError(f"Frame has p={v0.p} but data has p={x.p}")
    loss = SubspaceLoss(x.values, _offset(x, v0.d, mu, s))
    frame = v0
    f = loss.value(frame.columns)
    best_frame, best_f = frame, f
    history = deque([f], maxlen=solver_config.window_t + 1)
    tau = 0.5
    prev_v = prev_rg = None

    k = 0
    for k in range(solver_config.max_inner):
        v = frame.columns
        state = StiefelState.at(frame, loss.gradient(v), f, history, k, window=solver_config.window_t)
        rg = riemannian_gradient(state)
        if np.linalg.norm(rg) <= solver_config.tol_grad * (1.0 + abs(f)):
            break
        if k > 0:
            tau = bb_stepsize(v - prev_v, rg - prev_rg, k, tau)

        try:
            outcome = nonmonotone_search(state, tau, solver_config, loss.value)
        except PhaseStall as e:
            logger.debug(f"V-phase stalled at iteration {k}: {e}")
            break

        prev_v, prev_rg = v, rg
        f_old = f
        frame, f, tau = outcome.frame, outcome.f_new, outcome.tau_used
        if (k + 1) % config.REORTHO_EVERY == 0:
            frame = OrthonormalFrame(orthonormalize(frame.columns))
            f = loss.value(frame.columns)
        history.append(f)
        if f < best_f:
            best_frame, best_f = frame, f
        if abs(f - f_old) <= solver_config.tol_rel_f * abs(f_old):
            break
    else:
        logger.debug(f"V-phase hit max_inner={solver_config.max_inner}")

    logger.debug(f"V-phase finished after {k} iteration(s), f={best_f:.6g}")
    return best_frame, best_f
