"""Performance funnel boundaries with certified decay constants.

A funnel is a positive boundary psi(t) that the tracking error must stay
strictly below.  Every funnel instance carries a pair of constants
(alpha, beta) certifying the decay inequality

    psi_dot(t) >= -alpha * psi(t) + beta    for all t >= 0,

which is exactly what the constant-gain controller and the runtime
monitors consume.  Boundaries are closed-form families (not tabulated
signals) so that psi_dot and sup|psi| are exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = ["FunnelFunction", "MembershipReport", "verify_funnel", "default_grid"]

_FAMILIES = ("exponential", "constant")


@dataclass(frozen=True)
class FunnelFunction:
    """Closed-form funnel boundary psi with decay constants (alpha, beta).

    Families:
        ``exponential``  psi(t) = a * exp(-lam * t) + c
        ``constant``     psi(t) = c

    The constants are stored, not inferred: the decay inequality admits
    many valid (alpha, beta) pairs and the chosen pair fixes both the
    controller's minimum gain (k >= alpha + 2) and the stage bound
    beta/alpha used by the feasibility checks.
    """

    family: str
    alpha: float
    beta: float
    a: float = 0.0
    lam: float = 0.0
    c: float = 0.0

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown funnel family {self.family!r}")
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        if not self.c > 0:
            raise ValueError("floor level c must be positive")
        if self.family == "exponential" and not (self.a > 0 and self.lam > 0):
            raise ValueError("exponential family needs amplitude a > 0 and decay lam > 0")

    @classmethod
    def exponential(cls, a, lam, c, alpha=None, beta=None):
        """psi(t) = a*exp(-lam*t) + c.  Defaults alpha=lam, beta=lam*c make
        the decay inequality an identity (residual 0)."""
        if alpha is None:
            alpha = lam
        if beta is None:
            beta = lam * c
        return cls("exponential", alpha, beta, a=a, lam=lam, c=c)

    @classmethod
    def constant(cls, c, alpha=1.0, beta=None):
        """Constant band psi = c.  Default beta = alpha*c/2 keeps the floor
        beta/alpha strictly below the band."""
        if beta is None:
            beta = alpha * c / 2.0
        return cls("constant", alpha, beta, c=c)

    def value(self, t):
        if self.family == "exponential":
            return self.a * np.exp(-self.lam * np.asarray(t, dtype=float)) + self.c
        return np.full_like(np.asarray(t, dtype=float), self.c) if np.ndim(t) else self.c

    def derivative(self, t):
        if self.family == "exponential":
            return -self.a * self.lam * np.exp(-self.lam * np.asarray(t, dtype=float))
        return np.zeros_like(np.asarray(t, dtype=float)) if np.ndim(t) else 0.0

    def evaluate(self, t):
        """Return (psi(t), psi_dot(t)) at a scalar time."""
        if self.family == "exponential":
            decayed = self.a * math.exp(-self.lam * t)
            return decayed + self.c, -self.lam * decayed
        return self.c, 0.0

    def derivatives(self, t, order):
        """psi and its time derivatives up to ``order`` at scalar t."""
        out = np.zeros(order + 1)
        if self.family == "exponential":
            decayed = self.a * math.exp(-self.lam * t)
            out[0] = decayed + self.c
            fac = 1.0
            for j in range(1, order + 1):
                fac *= -self.lam
                out[j] = fac * decayed
        else:
            out[0] = self.c
        return out

    def sup_norm(self):
        """sup of psi over t >= 0 (attained at t = 0 for both families)."""
        if self.family == "exponential":
            return self.a + self.c
        return self.c

    def floor(self):
        """beta/alpha, the bound for stages 2..r of the feasibility set."""
        return self.beta / self.alpha

    def scaled(self, factor):
        """Funnel scaled by ``factor`` > 0; beta scales so the decay
        inequality is preserved with the same alpha."""
        if not factor > 0:
            raise ValueError("scale factor must be positive")
        return replace(
            self, a=self.a * factor, c=self.c * factor, beta=self.beta * factor
        )


@dataclass(frozen=True)
class MembershipReport:
    """Outcome of a grid check of the decay inequality."""

    ok: bool
    worst_residual: float
    worst_t: float
    min_value: float

    def to_dict(self):
        return {
            "ok": self.ok,
            "worst_residual": self.worst_residual,
            "worst_t": self.worst_t,
            "min_value": self.min_value,
        }


def default_grid(t_end, t0=0.0, n=1001):
    """Uniform verification grid over the simulation horizon."""
    return np.linspace(t0, t_end, n)


def verify_funnel(f: FunnelFunction, grid, tol=1e-9) -> MembershipReport:
    """Check psi_dot + alpha*psi - beta >= -tol and psi > 0 on a time grid.

    The residual is reported at its worst grid point; passing at ``tol``
    implies passing at any larger tolerance.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("verification grid must be nonempty")
    if grid[0] < 0 or np.any(np.diff(grid) < 0):
        raise ValueError("verification grid must be sorted and nonnegative")
    psi = f.value(grid)
    residual = f.derivative(grid) + f.alpha * psi - f.beta
    worst = int(np.argmin(residual))
    ok = bool(residual[worst] >= -tol and np.min(psi) > 0)
    return MembershipReport(
        ok=ok,
        worst_residual=float(residual[worst]),
        worst_t=float(grid[worst]),
        min_value=float(np.min(psi)),
    )
