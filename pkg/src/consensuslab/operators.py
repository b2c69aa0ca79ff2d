"""First-order consensus operators used as composition stages.

Five kinds are provided. The three *inner-admissible* kinds implement pure
relative feedback (invariant under uniform translation of all agents) and
expose an almost-everywhere time derivative so they can appear at any stage
of a composition. The two delayed kinds break that invariance and are only
admissible as the outermost stage.

History access for the delayed kinds goes through a *history view*: any
callable ``hist(s) -> ndarray`` returning the operator's state vector at a
past time s. Simulation code supplies interpolating views backed by the
integrator's committed samples.
"""

from __future__ import annotations

import math

import numpy as np

from .exceptions import (
    InsufficientHistoryError,
    NumericError,
    OperatorError,
)

INNER_KINDS = ("linear_static", "linear_time_varying", "saturated")
DELAYED_KINDS = ("delayed_relative", "delayed_absolute_velocity")


def _check_finite(z):
    # NaN/Inf anywhere poisons the sum; one reduction keeps the hot path cheap.
    if not math.isfinite(z.sum() if isinstance(z, np.ndarray) else math.fsum(z)):
        raise NumericError("operator input contains NaN or Inf")


def _as_laplacian(L):
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise OperatorError(f"Laplacian must be square, got shape {L.shape}")
    if np.abs(L.sum(axis=1)).max() > 1e-12:
        raise OperatorError("Laplacian rows must sum to zero")
    return L


class ConsensusOperator:
    """Base class; subclasses fill in kind, dimension and evaluation."""

    kind: str = ""
    relative_feedback: bool = True

    @property
    def n(self) -> int:
        raise NotImplementedError

    def evaluate(self, z, t, hist=None) -> np.ndarray:
        raise NotImplementedError

    def ae_derivative(self, z, zdot, t) -> np.ndarray:
        """Almost-everywhere time derivative of t -> op(z(t), t)."""
        raise OperatorError(
            f"{self.kind} has no a.e. derivative; it is outer-stage only"
        )

    def __repr__(self):
        return f"<{type(self).__name__} n={self.n}>"


class LinearStatic(ConsensusOperator):
    """z -> L z for a fixed graph Laplacian L."""

    kind = "linear_static"

    def __init__(self, L):
        self.L = _as_laplacian(L)

    @property
    def n(self):
        return self.L.shape[0]

    def evaluate(self, z, t, hist=None):
        _check_finite(z)
        return self.L @ z

    def ae_derivative(self, z, zdot, t):
        return self.L @ zdot


class LinearTimeVarying(ConsensusOperator):
    """z -> D(t) L z with per-agent gates D_ii(t) = max(sin(w_i t + phi_i), 0).

    Each agent's feedback switches off for half of its own sine period, so
    the instantaneous graph is usually disconnected; connectivity only holds
    integrated over a window.
    """

    kind = "linear_time_varying"

    def __init__(self, L, omega, phi):
        self.L = _as_laplacian(L)
        self.omega = np.asarray(omega, dtype=float)
        self.phi = np.asarray(phi, dtype=float)
        if self.omega.shape != (self.n,) or self.phi.shape != (self.n,):
            raise OperatorError("omega and phi must have one entry per agent")
        if np.any(self.omega == 0):
            raise OperatorError("gate frequencies must be nonzero")

    @property
    def n(self):
        return self.L.shape[0]

    def gates(self, t) -> np.ndarray:
        return np.maximum(np.sin(self.omega * t + self.phi), 0.0)

    def gate_rates(self, t) -> np.ndarray:
        s = np.sin(self.omega * t + self.phi)
        return np.where(s > 0, self.omega * np.cos(self.omega * t + self.phi), 0.0)

    def evaluate(self, z, t, hist=None):
        _check_finite(z)
        return self.gates(t) * (self.L @ z)

    def ae_derivative(self, z, zdot, t):
        return self.gate_rates(t) * (self.L @ z) + self.gates(t) * (self.L @ zdot)


class Saturated(ConsensusOperator):
    """z -> sat(L z), elementwise clamp to [-1, 1].

    The saturation level is fixed at 1; scale L itself for other levels.
    At the boundary |[Lz]_i| = 1 the a.e. derivative uses indicator 0
    (a measure-zero convention).
    """

    kind = "saturated"

    def __init__(self, L):
        self.L = _as_laplacian(L)

    @property
    def n(self):
        return self.L.shape[0]

    def evaluate(self, z, t, hist=None):
        _check_finite(z)
        y = self.L @ z
        np.maximum(y, -1.0, out=y)
        np.minimum(y, 1.0, out=y)
        return y

    def ae_derivative(self, z, zdot, t):
        inside = np.abs(self.L @ z) < 1.0
        return (self.L @ zdot) * inside


class DelayedRelative(ConsensusOperator):
    """Relative feedback where each neighbor state is read with a delay.

    Component i is sum_j w_ij * (z_i(t) - z_j(t - tau_ij(t))). The delayed
    read makes the operator *not* translation invariant (a common ramp added
    to all agents no longer cancels), which is why this kind is restricted
    to the outermost stage of a composition.

    ``delays`` is either a single callable tau(t) shared by every edge or a
    dict {(i, j): tau_fn} with 0-indexed edges j -> i.
    """

    kind = "delayed_relative"
    relative_feedback = False

    def __init__(self, weights, delays, tau_max):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise OperatorError("weights must be a square matrix")
        if np.any(w < 0) or np.any(np.diag(w) != 0):
            raise OperatorError("weights must be nonnegative with zero diagonal")
        self.weights = w
        self.tau_max = float(tau_max)
        edges = [(i, j) for i, j in zip(*np.nonzero(w)) if w[i, j] > 0]
        self.edges = [(int(i), int(j)) for i, j in edges]
        if callable(delays):
            self._delay_of = {e: delays for e in self.edges}
        else:
            self._delay_of = dict(delays)
            missing = [e for e in self.edges if e not in self._delay_of]
            if missing:
                raise OperatorError(f"no delay function for edges {missing}")

    @property
    def n(self):
        return self.weights.shape[0]

    def evaluate(self, z, t, hist=None):
        _check_finite(z)
        if hist is None:
            raise InsufficientHistoryError(
                "delayed_relative needs a history view covering [t - tau_max, t]"
            )
        out = self.weights.sum(axis=1) * z
        read_times = [t - self._delay_of[e](t) for e in self.edges]
        if hasattr(hist, "components"):
            vals = hist.components(read_times, [j for _, j in self.edges])
        else:
            vals = [hist(s)[j] for s, (_, j) in zip(read_times, self.edges)]
        for (i, j), v in zip(self.edges, vals):
            out[i] -= self.weights[i, j] * v
        return out


class DelayedAbsoluteVelocity(ConsensusOperator):
    """Per-agent pull toward a delayed broadcast reference signal.

    Component i is d_i * (z_i(t) - ref(t - tau_i(t))). ``ref`` is the
    reference-signal accessor (e.g. the leader's velocity as a function of
    time); delays model aperiodic measurement arrivals. Absolute feedback:
    not translation invariant, outer stage only.

    ``delays`` is a single callable or a per-agent sequence of callables.
    """

    kind = "delayed_absolute_velocity"
    relative_feedback = False

    def __init__(self, gains, ref, delays, tau_max):
        self.gains = np.asarray(gains, dtype=float)
        if self.gains.ndim != 1 or np.any(self.gains <= 0):
            raise OperatorError("gains must be a vector of positive reals")
        if not callable(ref):
            raise OperatorError("ref must be a callable t -> reference value")
        self.ref = ref
        self.tau_max = float(tau_max)
        if callable(delays):
            self._delays = [delays] * self.n
        else:
            self._delays = list(delays)
            if len(self._delays) != self.n:
                raise OperatorError("need one delay function per agent")
        from .sim import arrival_bank

        self._bank = arrival_bank(self._delays)

    @property
    def n(self):
        return self.gains.shape[0]

    def evaluate(self, z, t, hist=None):
        _check_finite(z)
        if self._bank is not None:
            read_times = self._bank.last_arrivals(t)
        else:
            read_times = [t - d(t) for d in self._delays]
        ref_vals = np.array([self.ref(s) for s in read_times])
        return self.gains * (z - ref_vals)


def check_relative_invariance(op: ConsensusOperator, samples: int, seed: int) -> float:
    """Max deviation of op under uniform translation over random draws.

    Inner kinds are shifted by a constant a * ones; delayed kinds by the
    time-varying ramp a * t applied through history (constant shifts cancel
    trivially in relative-difference terms and would hide the failure mode).
    Returns max over samples of ||op(shifted) - op(base)||_inf.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n = op.n
    worst = 0.0
    for _ in range(samples):
        z = rng.uniform(-5.0, 5.0, size=n)
        t = rng.uniform(0.0, 10.0)
        a = rng.uniform(-10.0, 10.0)
        if op.kind in DELAYED_KINDS:
            base_hist = lambda s, z=z: z
            ramp_hist = lambda s, z=z, a=a: z + a * s
            base = op.evaluate(z, t, base_hist)
            shifted = op.evaluate(z + a * t, t, ramp_hist)
        else:
            base = op.evaluate(z, t)
            shifted = op.evaluate(z + a, t)
        worst = max(worst, float(np.abs(shifted - base).max()))
    return worst


def estimate_lipschitz(op: ConsensusOperator, samples: int, seed: int) -> float:
    """Sampled lower bound on the global Lipschitz constant in the inf norm.

    For linear kinds the exact constant is the induced row-sum norm ||L||_inf;
    this estimate approaches it from below.
    """
    if samples < 2:
        raise ValueError("samples must be >= 2")
    rng = np.random.default_rng(seed)
    n = op.n
    best = 0.0
    for _ in range(samples):
        z1 = rng.uniform(-5.0, 5.0, size=n)
        z2 = rng.uniform(-5.0, 5.0, size=n)
        t = rng.uniform(0.0, 10.0)
        denom = float(np.abs(z1 - z2).max())
        if denom < 1e-12:
            continue
        if op.kind in DELAYED_KINDS:
            f1 = op.evaluate(z1, t, lambda s, z=z1: z)
            f2 = op.evaluate(z2, t, lambda s, z=z2: z)
        else:
            f1 = op.evaluate(z1, t)
            f2 = op.evaluate(z2, t)
        best = max(best, float(np.abs(f1 - f2).max()) / denom)
    return best
