"""
*****
Purpose: Thresholding rules and their penalty coupling

Scalar rules (soft, hard, hard-ridge) applied componentwise or to row
norms, the quantile rules that keep a fixed number of entries or rows,
the psi-function residual m - Theta(m) used by the stationarity
certificate, and the penalty values each rule is the proximal map of.

Parameters:
None

Returns:
ThresholdRule and functions operating on real matrices
*****
"""

import math
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from core_types import ConfigError, RuleArityError

logger = logging.getLogger(__name__)

SCALAR_KINDS = ("soft", "hard", "hard_ridge")
QUANTILE_KINDS = ("quantile_element", "quantile_row")


@dataclass(frozen=True)
class ThresholdRule:
    """
    *****
    Purpose: A thresholding rule Theta and its parameters

    Parameters:
    str kind: 'soft', 'hard', 'hard_ridge', 'quantile_element' or 'quantile_row'
    float lam: threshold level (scalar kinds)
    float eta: ridge shrinkage, kept values are divided by 1 + eta (hard_ridge, quantile kinds)
    int budget: number of entries / rows kept (quantile kinds only)

    Returns:
    ThresholdRule instance
    *****
    """
    kind: str
    lam: float = 0.0
    eta: float = 0.0
    budget: Optional[int] = None

    def __post_init__(self):
        if self.kind not in SCALAR_KINDS + QUANTILE_KINDS:
            raise ConfigError(f"Unknown threshold rule '{self.kind}'")
        if self.lam < 0 or self.eta < 0:
            raise ConfigError(f"Threshold parameters must be >= 0, got lam={self.lam}, eta={self.eta}")
        if self.is_quantile and (self.budget is None or self.budget < 0):
            raise ConfigError(f"Quantile rule '{self.kind}' needs a budget >= 0, got {self.budget}")

    @property
    def is_quantile(self) -> bool:
        return self.kind in QUANTILE_KINDS

    @classmethod
    def quantile(cls, budget: int, eta: float, rowwise: bool) -> "ThresholdRule":
        """Quantile rule keeping `budget` rows (rowwise) or entries."""
        kind = 'quantile_row' if rowwise else 'quantile_element'
        return cls(kind=kind, eta=eta, budget=budget)


def _shrink(rule: ThresholdRule, values: np.ndarray) -> np.ndarray:
    """Vectorized scalar rule; |t| == lam maps to zero."""
    magnitude = np.abs(values)
    if rule.kind == 'soft':
        return np.sign(values) * np.maximum(magnitude - rule.lam, 0.0)
    if rule.kind == 'hard':
        return np.where(magnitude > rule.lam, values, 0.0)
    if rule.kind == 'hard_ridge':
        return np.where(magnitude > rule.lam, values / (1.0 + rule.eta), 0.0)
    raise RuleArityError(f"Rule '{rule.kind}' acts on whole matrices, not on single values")


def apply_scalar(rule: ThresholdRule, t: float) -> float:
    """
    *****
    Purpose: Evaluate a scalar thresholding rule at one point

    Parameters:
    ThresholdRule rule: soft, hard or hard_ridge
    float t: input value

    Returns:
    float: Theta(t; lam)

    Errors:
    RuleArityError for quantile kinds
    *****
    """
    return float(_shrink(rule, np.float64(t)))


def apply_elementwise(rule: ThresholdRule, m: np.ndarray) -> np.ndarray:
    """Apply a scalar rule to every entry; shape preserved."""
    return _shrink(rule, np.asarray(m, dtype=float))


def apply_rowwise(rule: ThresholdRule, m: np.ndarray) -> np.ndarray:
    """
    *****
    Purpose: Multivariate version of a scalar rule

    Row s maps to (s / ||s||) * Theta(||s||); zero rows stay zero.

    Parameters:
    ThresholdRule rule: soft, hard or hard_ridge
    np.ndarray m: n x d matrix

    Returns:
    np.ndarray: n x d matrix
    *****
    """
    m = np.asarray(m, dtype=float)
    norms = np.linalg.norm(m, axis=1)
    shrunk = _shrink(rule, norms)
    scale = np.divide(shrunk, norms, out=np.zeros_like(norms), where=norms > 0)
    return m * scale[:, None]


def quantile_threshold_elements(m: np.ndarray, q_e: int, eta: float) -> np.ndarray:
    """
    *****
    Purpose: Keep the q_e largest-magnitude entries divided by (1 + eta), zero the rest

    Ties at the boundary magnitude keep the earlier entry in row-major order.

    Parameters:
    np.ndarray m: real matrix
    int q_e: number of entries kept, 0 <= q_e <= m.size
    float eta: ridge shrinkage

    Returns:
    np.ndarray: matrix with at most q_e nonzeros

    Errors:
    ConfigError if q_e is out of range
    *****
    """
    m = np.asarray(m, dtype=float)
    if not 0 <= q_e <= m.size:
        raise ConfigError(f"Element budget must lie in [0, {m.size}], got {q_e}")
    flat = m.ravel()
    keep = np.argsort(-np.abs(flat), kind='stable')[:q_e]
    out = np.zeros_like(flat)
    out[keep] = flat[keep] / (1.0 + eta)
    return out.reshape(m.shape)


def quantile_threshold_rows(m: np.ndarray, q: int, eta: float) -> np.ndarray:
    """
    *****
    Purpose: Keep the q largest-norm rows divided by (1 + eta), zero the rest

    Ties at the boundary norm keep the smaller row index. A zero row never
    receives mass (pseudoinverse convention for its direction).

    Parameters:
    np.ndarray m: n x d matrix
    int q: number of rows kept, 0 <= q <= n
    float eta: ridge shrinkage

    Returns:
    np.ndarray: n x d matrix with at most q nonzero rows

    Errors:
    ConfigError if q is out of range
    *****
    """
    m = np.asarray(m, dtype=float)
    n = m.shape[0]
    if not 0 <= q <= n:
        raise ConfigError(f"Row budget must lie in [0, {n}], got {q}")
    norms = np.linalg.norm(m, axis=1)
    keep = np.argsort(-norms, kind='stable')[:q]
    out = np.zeros_like(m)
    out[keep] = m[keep] / (1.0 + eta)
    return out


def threshold(rule: ThresholdRule, m: np.ndarray, rowwise: bool = False) -> np.ndarray:
    """
    *****
    Purpose: Apply any rule to a matrix

    Quantile kinds carry their own geometry; scalar kinds act on rows when
    rowwise is set and on entries otherwise.

    Parameters:
    ThresholdRule rule: any rule
    np.ndarray m: n x d matrix
    bool rowwise: use the multivariate form of a scalar rule

    Returns:
    np.ndarray: thresholded matrix
    *****
    """
    if rule.kind == 'quantile_element':
        return quantile_threshold_elements(m, rule.budget, rule.eta)
    if rule.kind == 'quantile_row':
        return quantile_threshold_rows(m, rule.budget, rule.eta)
    if rowwise:
        return apply_rowwise(rule, m)
    return apply_elementwise(rule, m)


def psi_residual(rule: ThresholdRule, m: np.ndarray, rowwise: bool = False) -> np.ndarray:
    """psi(m) = m - Theta(m), the robust residual of the generalized M-estimating equations."""
    m = np.asarray(m, dtype=float)
    return m - threshold(rule, m, rowwise=rowwise)


def penalty_values(rule: ThresholdRule, t: np.ndarray) -> np.ndarray:
    """
    *****
    Purpose: Penalty P(t; lam) whose proximal map is the given scalar rule

    soft:       lam * |t|
    hard:       lam^2 / 2 * 1{t != 0}
    hard_ridge: eta / 2 * t^2 + lam^2 / (2 (1 + eta)) * 1{t != 0}

    Parameters:
    ThresholdRule rule: soft, hard or hard_ridge
    np.ndarray t: values (entries, or row norms for the multivariate form)

    Returns:
    np.ndarray: penalty per value
    *****
    """
    t = np.asarray(t, dtype=float)
    nonzero = (t != 0).astype(float)
    if rule.kind == 'soft':
        return rule.lam * np.abs(t)
    if rule.kind == 'hard':
        return 0.5 * rule.lam ** 2 * nonzero
    if rule.kind == 'hard_ridge':
        return 0.5 * rule.eta * t ** 2 + 0.5 * rule.lam ** 2 / (1.0 + rule.eta) * nonzero
    raise RuleArityError(f"Rule '{rule.kind}' is a constraint, it has no penalty value")


def penalty(rule: ThresholdRule, s: np.ndarray, rowwise: bool = False) -> float:
    """Total penalty of an outlier matrix (over row norms when rowwise)."""
    s = np.asarray(s, dtype=float)
    values = np.linalg.norm(s, axis=1) if rowwise else s
    return float(np.sum(penalty_values(rule, values)))


def implicit_lambda(m: np.ndarray, budget: int, rowwise: bool) -> float:
    """
    *****
    Purpose: Hard threshold level equivalent to a quantile budget on m

    The quantile rule keeping `budget` entries (or rows) coincides with a
    hard-type rule at any level between the budget-th and (budget+1)-th
    largest magnitude; the (budget+1)-th is returned, so it is excluded by
    the strict inequality.

    Parameters:
    np.ndarray m: matrix the quantile rule is applied to
    int budget: entries or rows kept
    bool rowwise: compare row norms instead of entries

    Returns:
    float: threshold level (0.0 when nothing is dropped)
    *****
    """
    m = np.asarray(m, dtype=float)
    magnitudes = np.linalg.norm(m, axis=1) if rowwise else np.abs(m).ravel()
    if budget >= magnitudes.size:
        return 0.0
    return float(np.sort(magnitudes)[::-1][budget])


def universal_threshold(sigma: float, n: int, d: int) -> float:
    """Universal threshold sigma * sqrt(2 log(n d)) for l0-penalized element fits."""
    return sigma * math.sqrt(2.0 * math.log(n * d))
