"""Simulable plants: the mass-on-car benchmark and a generic plant built
from a chain of integrators driven through a causal operator.

Operators model internal dynamics, delays, and hysteresis.  They expose a
stateful step API for the integrator (``output`` between commits uses the
memory frozen at the last accepted step; ``commit`` persists it) and a
functional ``replay`` over a sampled input trajectory, which is the
reference semantics used by the causality tests.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "MassOnCarPlant",
    "IntegratorChainPlant",
    "CausalOperator",
    "DelayOperator",
    "PlayOperator",
    "RelayOperator",
    "LinearInternalDynamics",
    "ZeroDisturbance",
    "ConstantDisturbance",
    "SinusoidDisturbance",
    "FiniteEscapeError",
]


class FiniteEscapeError(RuntimeError):
    """Plant dynamics returned a non-finite derivative."""

    def __init__(self, t, detail=""):
        super().__init__(f"non-finite dynamics at t={t:.6g} {detail}".strip())
        self.t = t


# ---------------------------------------------------------------------------
# disturbances

class ZeroDisturbance:
    def value(self, t):
        return np.zeros(1)


@dataclass(frozen=True)
class ConstantDisturbance:
    level: float = 0.0

    def value(self, t):
        return np.atleast_1d(np.asarray(self.level, dtype=float))


@dataclass(frozen=True)
class SinusoidDisturbance:
    amplitude: float = 1.0
    frequency: float = 1.0
    phase: float = 0.0

    def value(self, t):
        return np.array([self.amplitude * math.sin(self.frequency * t + self.phase)])


# ---------------------------------------------------------------------------
# causal operators

class CausalOperator:
    """Base class; subclasses are causal and BIBO on bounded inputs."""

    #: dimension of the continuous state co-integrated with the plant
    state_dim = 0

    def initial_state(self):
        return np.zeros(0)

    def output(self, t, y, eta=None):
        raise NotImplementedError

    def state_deriv(self, t, y, eta):
        return np.zeros(0)

    def commit(self, t, y):
        """Persist discrete memory at an accepted integration step."""

    def reset(self):
        """Restore construction-time memory (fresh run on the same instance)."""

    def replay(self, times, values, t):
        """Output at time t after feeding the sampled trajectory up to t.

        ``times`` must be increasing and cover t; samples after t are
        ignored, which makes causality explicit.
        """
        times = np.asarray(times, dtype=float)
        values = np.asarray(values, dtype=float)
        if times.size == 0 or times[-1] < t - 1e-12:
            raise ValueError("history does not cover the query time")
        self.reset()
        last = None
        for ti, yi in zip(times, values):
            if ti > t + 1e-12:
                break
            self.commit(ti, yi)
            last = yi
        return self.output(t, last)


class DelayOperator(CausalOperator):
    """Pure transport delay: output(t) = input(t - tau).

    ``history`` supplies the input on [0, tau] (callable or a
    (times, values) pair); committed samples extend it.  Lookups between
    samples interpolate linearly; a lookup slightly past the last sample
    (mid-step integrator stages when tau < dt) extrapolates the last
    segment.
    """

    def __init__(self, tau, history, samples=129):
        if not tau > 0:
            raise ValueError("delay tau must be positive")
        self.tau = float(tau)
        if callable(history):
            ts = np.linspace(0.0, self.tau, samples)
            vs = np.array([np.atleast_1d(np.asarray(history(ti), dtype=float)) for ti in ts])
        else:
            ts, vs = history
            ts = np.asarray(ts, dtype=float)
            vs = np.atleast_2d(np.asarray(vs, dtype=float))
            if vs.shape[0] != ts.size:
                vs = vs.T
        self._init_times = [float(x) for x in ts]
        self._init_values = [np.array(v, dtype=float) for v in vs]
        self.reset()

    def reset(self):
        self._times = list(self._init_times)
        self._values = list(self._init_values)

    def commit(self, t, y):
        if t > self._times[-1] + 1e-15:
            self._times.append(float(t))
            self._values.append(np.atleast_1d(np.asarray(y, dtype=float)))

    def output(self, t, y=None, eta=None):
        tq = t - self.tau
        ts = self._times
        if tq < ts[0] - 1e-12:
            raise ValueError(f"delay lookup at t={tq:.6g} precedes stored history")
        idx = bisect.bisect_right(ts, tq)
        if idx >= len(ts):
            idx = len(ts) - 1  # extrapolate the last segment
        if idx == 0:
            return self._values[0].copy()
        t0, t1 = ts[idx - 1], ts[idx]
        v0, v1 = self._values[idx - 1], self._values[idx]
        if t1 == t0:
            return v1.copy()
        frac = (tq - t0) / (t1 - t0)
        return v0 + frac * (v1 - v0)


class PlayOperator(CausalOperator):
    """Play (backlash) hysteresis, applied componentwise.

    The memory w follows the input inside a deadband of half-width sigma:
    each update clamps the previous memory to [y - sigma, y + sigma], so
    |w - y| <= sigma always holds after an update.
    """

    def __init__(self, sigma, w0=0.0):
        if not sigma > 0:
            raise ValueError("deadband half-width sigma must be positive")
        self.sigma = float(sigma)
        self.w0 = np.atleast_1d(np.asarray(w0, dtype=float))
        self.reset()

    def reset(self):
        self._w = self.w0.copy()

    def _memory(self, n):
        if self._w.size != n:
            self._w = np.full(n, float(self.w0[0]))
        return self._w

    def output(self, t, y, eta=None):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        w = self._memory(y.size)
        return np.minimum(np.maximum(w, y - self.sigma), y + self.sigma)

    def commit(self, t, y):
        self._w = self.output(t, y)


class RelayOperator(CausalOperator):
    """Relay with hysteresis, applied componentwise.

    Switches high when the input reaches ``on_level``, low when it falls
    to ``off_level``, and holds in between.
    """

    def __init__(self, on_level, off_level, out_hi=1.0, out_lo=-1.0, state0=False):
        if not on_level > off_level:
            raise ValueError("relay needs on_level > off_level")
        self.on_level = float(on_level)
        self.off_level = float(off_level)
        self.out_hi = float(out_hi)
        self.out_lo = float(out_lo)
        self.state0 = bool(state0)
        self.reset()

    def reset(self):
        self._hi = None

    def _state(self, n):
        if self._hi is None or self._hi.size != n:
            self._hi = np.full(n, self.state0)
        return self._hi

    def _switched(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        hi = self._state(y.size)
        return np.where(y >= self.on_level, True, np.where(y <= self.off_level, False, hi))

    def output(self, t, y, eta=None):
        return np.where(self._switched(y), self.out_hi, self.out_lo)

    def commit(self, t, y):
        self._hi = self._switched(y)


class LinearInternalDynamics(CausalOperator):
    """Stable linear internal dynamics eta' = A eta + B y, out = C eta + D y.

    A must be Hurwitz (all eigenvalue real parts below -1e-9), which makes
    the operator BIBO; checked once at construction.
    """

    HURWITZ_TOL = 1e-9

    def __init__(self, A, B, C, D, eta0=None):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.C = np.atleast_2d(np.asarray(C, dtype=float))
        self.D = np.atleast_2d(np.asarray(D, dtype=float))
        n = self.A.shape[0]
        if self.A.shape != (n, n):
            raise ValueError("A must be square")
        eigs = np.linalg.eigvals(self.A)
        if np.any(eigs.real >= -self.HURWITZ_TOL):
            raise ValueError(
                f"A is not Hurwitz: max Re(eig) = {float(np.max(eigs.real)):.3g}"
            )
        self.eta0 = np.zeros(n) if eta0 is None else np.asarray(eta0, dtype=float)
        if self.eta0.shape != (n,):
            raise ValueError("eta0 dimension mismatch")
        self.state_dim = n

    def initial_state(self):
        return self.eta0.copy()

    def output(self, t, y, eta=None):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if eta is None:
            eta = self.eta0
        return self.C @ eta + self.D @ y

    def state_deriv(self, t, y, eta):
        return self.A @ eta + self.B @ np.atleast_1d(np.asarray(y, dtype=float))

    def replay(self, times, values, t):
        """Reference route: integrate eta over the sample grid (RK4 with
        linear interpolation of the input) and read the output at t."""
        times = np.asarray(times, dtype=float)
        values = np.atleast_2d(np.asarray(values, dtype=float))
        if times.size == 0 or times[-1] < t - 1e-12:
            raise ValueError("history does not cover the query time")
        eta = self.eta0.copy()
        for idx in range(times.size - 1):
            t0, t1 = times[idx], times[idx + 1]
            if t0 >= t - 1e-12:
                break
            t1 = min(t1, t)
            h = t1 - t0
            if h <= 0:
                continue
            y0, y1 = values[idx], values[min(idx + 1, values.shape[0] - 1)]

            def yin(s):
                frac = (s - times[idx]) / (times[idx + 1] - times[idx])
                return y0 + frac * (y1 - y0)

            k1 = self.A @ eta + self.B @ yin(t0)
            k2 = self.A @ (eta + 0.5 * h * k1) + self.B @ yin(t0 + 0.5 * h)
            k3 = self.A @ (eta + 0.5 * h * k2) + self.B @ yin(t0 + 0.5 * h)
            k4 = self.A @ (eta + h * k3) + self.B @ yin(t1)
            eta = eta + (h / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        at = np.searchsorted(times, t)
        yt = values[min(at, values.shape[0] - 1)]
        return self.C @ eta + self.D @ yt


# ---------------------------------------------------------------------------
# plants

@dataclass
class MassOnCarPlant:
    """Spring-damper coupled mass on a ramp mounted on a driven car.

    State is (z, s, z_dot, s_dot): car position, position of the mass
    along the ramp, and their rates.  The control force acts on the car;
    the output is the horizontal position of the mass.  With a flat ramp
    (theta = 0) the input reaches the output after three derivatives,
    otherwise after two.
    """

    m1: float = 4.0
    m2: float = 1.0
    c: float = 2.0
    delta: float = 1.0
    theta: float = 0.0

    def __post_init__(self):
        if not (self.m1 > 0 and self.m2 > 0 and self.c > 0 and self.delta > 0):
            raise ValueError("masses, spring constant, and damping must be positive")
        if not 0 <= self.theta < math.pi / 2:
            raise ValueError("ramp angle must lie in [0, pi/2)")
        ct = math.cos(self.theta)
        det = self.m2 * (self.m1 + self.m2 * math.sin(self.theta) ** 2)
        if det <= 0:  # unreachable for valid parameters; guards the inverse
            raise ValueError("singular mass matrix")
        m2ct = self.m2 * ct
        self._cos_theta = ct
        # inverse of [[m1+m2, m2*ct], [m2*ct, m2]]
        self._inv11 = self.m2 / det
        self._inv12 = -m2ct / det
        self._inv22 = (self.m1 + self.m2) / det

    @property
    def relative_degree(self):
        return 3 if self.theta == 0.0 else 2

    @property
    def output_dim(self):
        return 1

    @property
    def state_dim(self):
        return 4

    def state_labels(self):
        return ("z", "s", "zdot", "sdot")

    def mass_matrix(self):
        m2ct = self.m2 * self._cos_theta
        return np.array([[self.m1 + self.m2, m2ct], [m2ct, self.m2]])

    def rhs(self, t, x, u):
        z, s, zd, sd = x
        uf = u if isinstance(u, (int, float)) else u[0]
        forcing = -(self.c * s + self.delta * sd)
        return np.array(
            [
                zd,
                sd,
                self._inv11 * uf + self._inv12 * forcing,
                self._inv12 * uf + self._inv22 * forcing,
            ]
        )

    def output_stack(self, x):
        """Output and its derivatives up to order r-1, shape (r, 1).

        For theta = 0 the second derivative is input-independent and
        follows from the undriven row of the force balance.
        """
        z, s, zd, sd = x
        ct = self._cos_theta
        if self.theta == 0.0:
            return np.array([[z + s], [zd + sd], [-(self.c * s + self.delta * sd) / self.m2]])
        return np.array([[z + s * ct], [zd + sd * ct]])

    def commit(self, t, x):
        pass

    def reset(self):
        pass


@dataclass
class IntegratorChainPlant:
    """Chain of r integrators closed by user dynamics fed through a causal
    operator: the top derivative is dynamics(d(t), operator output, u).

    The simulated state is the output stack flattened, followed by the
    operator's continuous state (if any).
    """

    order: int
    output_dim: int
    dynamics: object  # callable (d, t_out, u) -> array (m,)
    operator: CausalOperator | None = None
    disturbance: object = field(default_factory=ZeroDisturbance)

    def __post_init__(self):
        if self.order < 1 or self.output_dim < 1:
            raise ValueError("order and output dimension must be at least 1")

    @property
    def relative_degree(self):
        return self.order

    @property
    def state_dim(self):
        extra = self.operator.state_dim if self.operator is not None else 0
        return self.order * self.output_dim + extra

    def state_labels(self):
        labels = [
            f"y{c}" if j == 0 else f"y{c}_d{j}"
            for j in range(self.order)
            for c in range(self.output_dim)
        ]
        extra = self.operator.state_dim if self.operator is not None else 0
        labels += [f"eta{i}" for i in range(extra)]
        return tuple(labels)

    def initial_state(self, y_stack):
        y_stack = np.asarray(y_stack, dtype=float).reshape(-1)
        if y_stack.size != self.order * self.output_dim:
            raise ValueError("initial stack size mismatch")
        if self.operator is not None and self.operator.state_dim:
            return np.concatenate([y_stack, self.operator.initial_state()])
        return y_stack.copy()

    def output_stack(self, x):
        rm = self.order * self.output_dim
        return x[:rm].reshape(self.order, self.output_dim)

    def rhs(self, t, x, u):
        rm = self.order * self.output_dim
        ys = x[:rm]
        eta = x[rm:]
        t_out = self.operator.output(t, ys, eta) if self.operator is not None else np.zeros(0)
        top = np.atleast_1d(
            np.asarray(self.dynamics(self.disturbance.value(t), t_out, np.atleast_1d(u)), dtype=float)
        )
        if not np.all(np.isfinite(top)):
            raise FiniteEscapeError(t, "in user dynamics")
        deriv = np.empty_like(x)
        deriv[: rm - self.output_dim] = ys[self.output_dim :]
        deriv[rm - self.output_dim : rm] = top
        if eta.size:
            deriv[rm:] = self.operator.state_deriv(t, ys, eta)
        return deriv

    def commit(self, t, x):
        if self.operator is not None:
            self.operator.commit(t, x[: self.order * self.output_dim])

    def reset(self):
        if self.operator is not None:
            self.operator.reset()
