"""Funnel-tracking feedback laws operating on error derivative stacks.

Two designs are provided:

* ``ConstantGainController`` — the low-complexity law: collapse the error
  stack with the constant-rate chain, then scale the final stage by
  N(gamma(||(alpha/beta) e_r||^2)).  Stateless; the only time dependence
  enters through the error stack itself.

* ``TimeVaryingGainController`` — the classical comparison design with
  reciprocal stage gains k_i = 1/(1 - ||e_i||^2/psi_i^2).  Because each
  stage feeds the next through its time derivative, stages are propagated
  as truncated Taylor jets seeded from the stack and the analytic funnel
  derivatives.

Both raise instead of clamping when a gain argument leaves its domain:
masking the singularity would hide exactly the failure mode the theory
rules out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errchain import ErrorChainParams, as_stack, xi_weights
from .funnels import FunnelFunction
from .jets import Jet, jet_lift, squared_norm_jet

__all__ = [
    "GainFunctions",
    "ControlOutput",
    "ConstantGainController",
    "TimeVaryingGainController",
    "GainSingularity",
    "StageSingularity",
]


class GainSingularity(RuntimeError):
    """Final gain argument reached 1, where the reciprocal gain blows up."""

    def __init__(self, t, w, e_r):
        super().__init__(f"gain argument w={w:.6g} >= 1 at t={t:.6g}")
        self.t = t
        self.w = w
        self.e_r = e_r


class StageSingularity(RuntimeError):
    """An intermediate stage reached its funnel boundary."""

    def __init__(self, t, stage, norm, bound):
        super().__init__(
            f"stage {stage} at its funnel boundary at t={t:.6g} "
            f"(|e_{stage}|={norm:.6g}, psi_{stage}={bound:.6g})"
        )
        self.t = t
        self.stage = stage
        self.norm = norm
        self.bound = bound


def _neg_identity(s):
    return -s


def _nussbaum(s):
    return s * math.cos(s)


def _reciprocal(s):
    return 1.0 / (1.0 - s)


@dataclass(frozen=True)
class GainFunctions:
    """Choice of the outer surjection N and the gain bijection gamma.

    ``neg_identity`` (N(s) = -s) is the practical default when the
    high-frequency gain direction is known positive; it is not surjective
    onto the reals.  ``nussbaum`` (N(s) = s cos s) is, and satisfies the
    letter of the existence theorem.  gamma ``reciprocal`` maps [0, 1)
    onto [1, inf) with gamma(0) = 1.
    """

    surjection: str = "neg_identity"
    bijection: str = "reciprocal"

    def __post_init__(self):
        if self.surjection not in ("neg_identity", "nussbaum"):
            raise ValueError(f"unknown surjection {self.surjection!r}")
        if self.bijection != "reciprocal":
            raise ValueError(f"unknown bijection {self.bijection!r}")

    @property
    def surjective(self):
        return self.surjection == "nussbaum"

    @property
    def n_func(self):
        return _nussbaum if self.surjection == "nussbaum" else _neg_identity

    @property
    def gamma_func(self):
        return _reciprocal


@dataclass(frozen=True)
class ControlOutput:
    u: np.ndarray
    e_r: np.ndarray
    w: float
    gain: float
    stage_gains: tuple | None = None


@dataclass(frozen=True)
class ConstantGainController:
    """u = N(gamma(||(alpha/beta) e_r||^2)) e_r with e_r the final chain stage."""

    chain: ErrorChainParams
    alpha: float
    beta: float
    gains: GainFunctions = GainFunctions()

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        object.__setattr__(self, "_weights", xi_weights(self.chain, self.chain.r))
        object.__setattr__(self, "_scale2", (self.alpha / self.beta) ** 2)
        object.__setattr__(self, "_n", self.gains.n_func)
        object.__setattr__(self, "_gamma", self.gains.gamma_func)

    @classmethod
    def for_funnel(cls, funnel: FunnelFunction, r, k=None, m=1, gains=None):
        """Controller for a funnel; k defaults to the minimal compliant
        gain alpha + 2."""
        if k is None:
            k = funnel.alpha + 2.0
        return cls(
            chain=ErrorChainParams(k=k, r=r, m=m),
            alpha=funnel.alpha,
            beta=funnel.beta,
            gains=gains or GainFunctions(),
        )

    @property
    def theorem_compliant(self):
        return self.chain.meets_gain_bound(self.alpha)

    def feedback(self, t, e_stack):
        """Control value only; hot path for the integrator."""
        e_r = self._weights @ e_stack
        w = self._scale2 * float(e_r @ e_r)
        if w >= 1.0:
            raise GainSingularity(t, w, e_r)
        return self._n(self._gamma(w)) * e_r

    def control(self, t, e_stack) -> ControlOutput:
        """Full diagnostics: final stage, gain argument, gain, and input."""
        e_stack = as_stack(e_stack, self.chain.r, self.chain.m)
        if not np.all(np.isfinite(e_stack)):
            raise ValueError("error stack contains non-finite entries")
        e_r = self._weights @ e_stack
        w = self._scale2 * float(e_r @ e_r)
        if w >= 1.0:
            raise GainSingularity(t, w, e_r)
        gain = self._n(self._gamma(w))
        return ControlOutput(u=gain * e_r, e_r=e_r, w=w, gain=gain)


@dataclass(frozen=True)
class TimeVaryingGainController:
    """Comparison design with reciprocal stage gains.

    Stage i carries its own funnel psi_i; its gain is
    k_i = 1/(1 - ||e_i||^2/psi_i(t)^2) and the next stage is
    e_{i+1} = d/dt e_i + k_i e_i, evaluated by jet propagation.  The
    final input is u = N(gamma(||e_r/psi_r(t)||^2)) e_r.
    """

    stage_funnels: tuple
    gains: GainFunctions = GainFunctions()
    output_dim: int = 1

    def __post_init__(self):
        if len(self.stage_funnels) < 1:
            raise ValueError("need at least one stage funnel")
        object.__setattr__(self, "stage_funnels", tuple(self.stage_funnels))

    @classmethod
    def from_base_funnel(cls, funnel: FunnelFunction, r, stage_scale=2.0, gains=None, m=1):
        """Stage funnels psi_i = stage_scale^(i-1) * psi; the widening per
        stage accommodates derivative growth of the recursion."""
        stages = tuple(funnel.scaled(stage_scale**i) for i in range(r))
        return cls(stage_funnels=stages, gains=gains or GainFunctions(), output_dim=m)

    @property
    def relative_degree(self):
        return len(self.stage_funnels)

    def control(self, t, e_stack) -> ControlOutput:
        r = self.relative_degree
        m = self.output_dim
        e_stack = as_stack(e_stack, r, m)
        stage = jet_lift(e_stack, r - 1)
        stage_gains = []
        for i in range(r - 1):
            p = stage[0].order
            psi_jet = Jet(tuple(self.stage_funnels[i].derivatives(t, p)))
            w_jet = squared_norm_jet(stage) / (psi_jet * psi_jet)
            if w_jet.value >= 1.0:
                norm = math.sqrt(squared_norm_jet(stage).value)
                raise StageSingularity(t, i + 1, norm, psi_jet.value)
            gain_jet = (1.0 - w_jet).reciprocal()
            stage_gains.append(gain_jet.value)
            stage = [c.differentiate() + gain_jet * c for c in stage]
        e_r = np.array([c.value for c in stage])
        psi_r = self.stage_funnels[-1].evaluate(t)[0]
        w = float(e_r @ e_r) / psi_r**2
        if w >= 1.0:
            raise GainSingularity(t, w, e_r)
        gain = self.gains.n_func(self.gains.gamma_func(w))
        return ControlOutput(
            u=gain * e_r, e_r=e_r, w=w, gain=gain, stage_gains=tuple(stage_gains)
        )

    def feedback(self, t, e_stack):
        return self.control(t, e_stack).u
