"""Auxiliary error-variable chain for order-r tracking.

The chain collapses an order-r tracking problem into a single signal by
filtering the error derivative stack with a constant rate k:

    xi_1(z) = z_1,    xi_{i+1}(z) = xi_i(shift(z)) + k * xi_i(z),

where z is a stack of r blocks (value, first derivative, ...) of size m
and shift drops the first block.  This module provides the recursion, an
independent binomial closed form, the matrix between stacked derivatives
and stacked chain values, stage-wise feasibility checks against a funnel,
and the derivative-bound diagnostics used by the gain-existence argument.

Derivative stacks are plain ndarrays of shape (r, m): row j holds the
j-th derivative block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .funnels import FunnelFunction

__all__ = [
    "ErrorChainParams",
    "FeasibilityReport",
    "StageDerivativeBounds",
    "as_stack",
    "left_shift",
    "xi_recursive",
    "xi_binomial",
    "xi_all",
    "xi_matrix",
    "check_feasibility",
    "derivative_bounds",
]

# Binomial weights are exact integers up to this order; no physical plant
# has a relative degree anywhere near it.
MAX_ORDER = 20


@dataclass(frozen=True)
class ErrorChainParams:
    """Chain rate k, relative degree r, output dimension m."""

    k: float
    r: int
    m: int = 1

    def __post_init__(self):
        if self.r < 1 or self.m < 1:
            raise ValueError("r and m must be at least 1")
        if self.r > MAX_ORDER:
            raise ValueError(f"r > {MAX_ORDER} not supported")
        if self.k < 0:
            raise ValueError("chain rate k must be nonnegative")

    def meets_gain_bound(self, alpha):
        """True iff k >= alpha + 2, the gain condition of the main result."""
        return self.k >= alpha + 2.0


def as_stack(z, r, m):
    """Coerce ``z`` to a float array of shape (r, m).

    Accepts (r, m) arrays, flat arrays of length r*m, and length-r
    sequences when m == 1.
    """
    z = np.asarray(z, dtype=float)
    if z.shape == (r, m):
        return z
    if z.ndim == 1 and z.size == r * m:
        return z.reshape(r, m)
    raise ValueError(f"expected stack of shape ({r}, {m}), got {z.shape}")


def left_shift(z):
    """Drop the first block and pad with zeros: (z1,...,zr) -> (z2,...,zr,0)."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    out[:-1] = z[1:]
    out[-1] = 0.0
    return out


def xi_all(params: ErrorChainParams, z):
    """All chain values (xi_1(z), ..., xi_r(z)) as an (r, m) array.

    Evaluates the recursion bottom-up over shifted stacks: level i holds
    xi_i(shift^j(z)) for every shift count j still needed.
    """
    z = as_stack(z, params.r, params.m)
    k = params.k
    level = [z[j] for j in range(params.r)] + [np.zeros(params.m)]
    out = np.empty((params.r, params.m))
    out[0] = level[0]
    for i in range(1, params.r):
        level = [level[j + 1] + k * level[j] for j in range(len(level) - 1)]
        out[i] = level[0]
    return out


def xi_recursive(params: ErrorChainParams, i, z):
    """xi_i(z) by the defining recursion, i in 1..r."""
    if not 1 <= i <= params.r:
        raise ValueError(f"stage {i} out of range 1..{params.r}")
    return xi_all(params, z)[i - 1]


def xi_binomial(params: ErrorChainParams, i, z):
    """Independent closed form: xi_i(z) = sum_j C(i-1,j) k^(i-1-j) z_{j+1}."""
    if not 1 <= i <= params.r:
        raise ValueError(f"stage {i} out of range 1..{params.r}")
    z = as_stack(z, params.r, params.m)
    out = np.zeros(params.m)
    for j in range(i):
        out += math.comb(i - 1, j) * params.k ** (i - 1 - j) * z[j]
    return out


def xi_weights(params: ErrorChainParams, i):
    """Row of binomial weights w with xi_i(z) = w @ z for an (r, m) stack."""
    if not 1 <= i <= params.r:
        raise ValueError(f"stage {i} out of range 1..{params.r}")
    w = np.zeros(params.r)
    for j in range(i):
        w[j] = math.comb(i - 1, j) * params.k ** (i - 1 - j)
    return w


def xi_matrix(params: ErrorChainParams):
    """Unit lower-triangular matrix S with S @ vec(z) = vec(xi_1..xi_r).

    Block (i, j) is C(i-1, j-1) k^(i-j) I_m for j <= i, so det S = 1.
    """
    r, m = params.r, params.m
    lower = np.zeros((r, r))
    for i in range(1, r + 1):
        for j in range(1, i + 1):
            lower[i - 1, j - 1] = math.comb(i - 1, j - 1) * params.k ** (i - j)
    return np.kron(lower, np.eye(m))


@dataclass(frozen=True)
class FeasibilityReport:
    """Stage-wise norms of the chain values against their strict bounds.

    Stage 1 is bounded by psi(t); stages 2..r by the funnel floor
    beta/alpha.  Feasible requires every margin strictly positive.
    """

    t: float
    stage_norms: tuple
    stage_bounds: tuple
    margins: tuple
    feasible: bool

    def to_dict(self):
        return {
            "t": self.t,
            "stage_norms": list(self.stage_norms),
            "stage_bounds": list(self.stage_bounds),
            "margins": list(self.margins),
            "feasible": self.feasible,
        }


def check_feasibility(t, z, funnel: FunnelFunction, params: ErrorChainParams):
    """Membership of the stack in the stage-bound set at time t.

    Infeasibility is a report, not an error: the containment condition is
    sufficient for the tracking guarantee, not necessary.
    """
    xis = xi_all(params, z)
    norms = np.linalg.norm(xis, axis=1)
    bounds = np.full(params.r, funnel.floor())
    bounds[0] = funnel.value(t)
    margins = bounds - norms
    return FeasibilityReport(
        t=float(t),
        stage_norms=tuple(float(v) for v in norms),
        stage_bounds=tuple(float(v) for v in bounds),
        margins=tuple(float(v) for v in margins),
        feasible=bool(np.all(margins > 0)),
    )


@dataclass(frozen=True)
class StageDerivativeBounds:
    """Bounds mu[i][j] on the j-th derivative of stage i, plus the drift
    bound entering the gain-existence argument.

    Row i covers j = 0..r-i and satisfies exactly
    mu[i][j+1] = mu[i+1][j] + k * mu[i][j].
    """

    k: float
    table: tuple  # tuple of tuples, row i-1 has length r-i+1
    drift_bound: float

    def bound(self, i, j):
        return self.table[i - 1][j]

    @property
    def r(self):
        return len(self.table)


def derivative_bounds(params: ErrorChainParams, funnel: FunnelFunction, ref_rth_bound):
    """Fill the stage derivative-bound table and the drift bound.

    Seeds: row 1 starts at sup|psi|, rows 2..r at the floor beta/alpha.
    The drift bound adds the reference's r-th-derivative bound to the
    k-weighted top entry of every row below the last.
    """
    if ref_rth_bound < 0:
        raise ValueError("reference derivative bound must be nonnegative")
    r, k = params.r, params.k
    rows = [[0.0] * (r - i + 1) for i in range(1, r + 1)]
    rows[0][0] = funnel.sup_norm()
    for i in range(1, r):
        rows[i][0] = funnel.floor()
    for j in range(1, r):
        for i in range(r - j):
            rows[i][j] = rows[i + 1][j - 1] + k * rows[i][j - 1]
    drift = float(ref_rth_bound) + sum(k * rows[j - 1][r - j] for j in range(1, r))
    return StageDerivativeBounds(
        k=k, table=tuple(tuple(row) for row in rows), drift_bound=drift
    )
