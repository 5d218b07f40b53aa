"""Truncated Taylor jets with raw-derivative coefficients.

A jet stores (f, f', f'', ...) at the current time, unscaled by
factorials, so differentiation is a left shift and products combine with
binomial Leibniz weights.  Binary operations truncate to the shorter
operand's order.  Used to propagate time derivatives through the
gain recursion of the time-varying comparison controller.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["Jet", "jet_lift", "squared_norm_jet"]


@dataclass(frozen=True)
class Jet:
    """Scalar jet; coef[j] is the j-th time derivative."""

    coef: tuple

    def __post_init__(self):
        object.__setattr__(self, "coef", tuple(float(c) for c in self.coef))
        if len(self.coef) == 0:
            raise ValueError("jet needs at least the value coefficient")

    @classmethod
    def constant(cls, x, order):
        return cls((float(x),) + (0.0,) * order)

    @property
    def order(self):
        return len(self.coef) - 1

    @property
    def value(self):
        return self.coef[0]

    def truncated(self, order):
        if order >= self.order:
            return self
        return Jet(self.coef[: order + 1])

    def differentiate(self):
        if self.order == 0:
            raise ValueError("cannot differentiate an order-0 jet")
        return Jet(self.coef[1:])

    def __neg__(self):
        return Jet(tuple(-c for c in self.coef))

    def _coerce(self, other):
        if isinstance(other, Jet):
            return other
        if isinstance(other, (int, float)):
            return Jet.constant(other, self.order)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        p = min(self.order, other.order)
        return Jet(tuple(self.coef[j] + other.coef[j] for j in range(p + 1)))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return Jet(tuple(other * c for c in self.coef))
        if not isinstance(other, Jet):
            return NotImplemented
        p = min(self.order, other.order)
        out = []
        for n in range(p + 1):
            out.append(
                sum(
                    math.comb(n, j) * self.coef[j] * other.coef[n - j]
                    for j in range(n + 1)
                )
            )
        return Jet(tuple(out))

    __rmul__ = __mul__

    def reciprocal(self):
        """1/self, solved triangularly from the Leibniz identity
        (self * result)^(n) = 0 for n >= 1; requires a nonzero value."""
        g = self.coef
        if g[0] == 0.0:
            raise ZeroDivisionError("jet reciprocal of zero value")
        h = [1.0 / g[0]]
        for n in range(1, self.order + 1):
            acc = sum(math.comb(n, j) * g[j] * h[n - j] for j in range(1, n + 1))
            h.append(-acc / g[0])
        return Jet(tuple(h))

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return self * (1.0 / other)
        if not isinstance(other, Jet):
            return NotImplemented
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        if isinstance(other, (int, float)):
            return self.reciprocal() * other
        return NotImplemented


def jet_lift(e_stack, order):
    """Seed one jet per output component from a derivative stack.

    Component jets take coefficient j from block j of the stack; the
    stack must provide at least order+1 blocks.
    """
    e_stack = np.asarray(e_stack, dtype=float)
    if e_stack.ndim == 1:
        e_stack = e_stack.reshape(-1, 1)
    r = e_stack.shape[0]
    if order > r - 1:
        raise ValueError(f"jet order {order} exceeds stack depth {r - 1}")
    return [Jet(tuple(e_stack[: order + 1, comp])) for comp in range(e_stack.shape[1])]


def squared_norm_jet(jets):
    """Jet of the squared Euclidean norm of a list of component jets."""
    out = jets[0] * jets[0]
    for j in jets[1:]:
        out = out + j * j
    return out
