"""Shared domain types and small numeric utilities.

The trajectory container stores the accepted integration nodes together
with the right-hand-side values at those nodes, which is exactly the data
cubic Hermite interpolation needs.  Everything downstream (resampling,
invariant drift reports, Emden-Fowler series) builds on these types.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, Sequence

import numpy as np

__all__ = [
    "DomainError",
    "PolarState",
    "Trajectory",
    "EFPoint",
    "EFSeries",
    "InvariantReport",
    "polar_states",
    "resample",
    "drift_metric",
    "fd_second_derivative",
    "invariant_report",
    "longest_monotone_run",
    "real_power",
]


class DomainError(ValueError):
    """Raised when a value violates a documented domain precondition."""


def real_power(x: float, p: float) -> float:
    """Real-valued x**p; returns nan when no real branch exists.

    Negative bases are allowed only for integer-valued exponents.  A zero
    base with a negative exponent returns inf, and magnitude overflow
    saturates to signed inf instead of raising.
    """
    if x > 0.0:
        try:
            return math.pow(x, p)
        except OverflowError:
            return math.inf
    if x == 0.0:
        if p > 0.0:
            return 0.0
        if p == 0.0:
            return 1.0
        return math.inf
    if p == math.floor(p) and abs(p) < 1e15:
        try:
            return math.pow(x, p)
        except OverflowError:
            return -math.inf if int(p) % 2 != 0 else math.inf
    return math.nan


@dataclass(frozen=True)
class PolarState:
    """Plane-polar kinematic state (r, theta, rdot, thetadot) at time t.

    theta is unwrapped (not reduced mod 2*pi) so angular drift is visible.
    """

    t: float
    r: float
    theta: float
    rdot: float
    thetadot: float

    def __post_init__(self) -> None:
        vals = (self.t, self.r, self.theta, self.rdot, self.thetadot)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError("polar state components must be finite")
        if self.r <= 0.0:
            raise DomainError(f"polar radius must be positive, got {self.r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.r, self.theta, self.rdot, self.thetadot])


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Trajectory:
    """Accepted integration samples of one ODE run.

    t : (n,) strictly increasing sample abscissae (time, angle or J
        depending on the system integrated).
    y : (n, d) state at each sample.
    dy : (n, d) right-hand side at each sample.
    termination : "completed" | "event" | "step-underflow".
    events : tuple of (t_event, name) pairs, in time order.
    meta : read-only mapping with settings echo and step statistics.
    """

    t: np.ndarray
    y: np.ndarray
    dy: np.ndarray
    termination: str = "completed"
    events: tuple = ()
    meta: Mapping = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", _readonly(self.t))
        object.__setattr__(self, "y", _readonly(np.atleast_2d(self.y)))
        object.__setattr__(self, "dy", _readonly(np.atleast_2d(self.dy)))
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))
        if self.t.ndim != 1 or self.y.shape[0] != self.t.size:
            raise DomainError("trajectory arrays have inconsistent shapes")
        if self.y.shape != self.dy.shape:
            raise DomainError("state and derivative arrays must match")
        if self.t.size == 0:
            raise DomainError("trajectory must hold at least one sample")
        if self.t.size > 1 and not np.all(np.diff(self.t) > 0.0):
            raise DomainError("trajectory times must increase strictly")
        if not (np.all(np.isfinite(self.t)) and np.all(np.isfinite(self.y))):
            raise DomainError("trajectory samples must be finite")

    @property
    def n_samples(self) -> int:
        return int(self.t.size)


def polar_states(traj: Trajectory) -> list[PolarState]:
    """View a polar-system trajectory as PolarState records."""
    if traj.y.shape[1] != 4:
        raise DomainError("polar trajectories carry 4 state components")
    return [
        PolarState(t=float(t), r=float(r), theta=float(th), rdot=float(rd), thetadot=float(td))
        for t, (r, th, rd, td) in zip(traj.t, traj.y)
    ]


@dataclass(frozen=True)
class EFPoint:
    """One sample (J, T, T') of an Emden-Fowler curve T(J)."""

    J: float
    T: float
    Tprime: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.J, self.T, self.Tprime)):
            raise DomainError("EF point components must be finite")


@dataclass(frozen=True)
class EFSeries:
    """Monotone-J series of EF points produced by the torque map.

    `scaled` records whether the constant-absorbing rescaling of (J, T)
    has been applied.  J must increase strictly.
    """

    J: np.ndarray
    T: np.ndarray
    Tprime: np.ndarray
    mu: float
    r0: float = 0.0
    scaled: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "J", _readonly(self.J))
        object.__setattr__(self, "T", _readonly(self.T))
        object.__setattr__(self, "Tprime", _readonly(self.Tprime))
        if not (self.J.shape == self.T.shape == self.Tprime.shape) or self.J.ndim != 1:
            raise DomainError("EF series arrays must be 1-d and congruent")
        if self.J.size > 1 and not np.all(np.diff(self.J) > 0.0):
            raise DomainError("EF series requires strictly increasing J")
        for a in (self.J, self.T, self.Tprime):
            if not np.all(np.isfinite(a)):
                raise DomainError("EF series values must be finite")

    @property
    def points(self) -> list[EFPoint]:
        return [EFPoint(float(j), float(t), float(tp)) for j, t, tp in zip(self.J, self.T, self.Tprime)]

    def __len__(self) -> int:
        return int(self.J.size)


@dataclass(frozen=True)
class InvariantReport:
    """Values of one conserved quantity along a run plus its drift metric."""

    name: str
    values: np.ndarray
    drift: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", _readonly(self.values))


def drift_metric(values: Sequence[float]) -> float:
    """max_k |v_k - v_0| / max(1, |v_0|) over a sampled quantity.

    The mixed absolute/relative normalisation keeps the metric meaningful
    when the reference value sits near zero.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("drift metric needs at least one sample")
    v0 = v.flat[0]
    return float(np.max(np.abs(v - v0)) / max(1.0, abs(v0)))


def invariant_report(name: str, values: Sequence[float]) -> InvariantReport:
    vals = np.asarray(values, dtype=float)
    return InvariantReport(name=name, values=vals, drift=drift_metric(vals))


def resample(traj: Trajectory, times: Sequence[float]) -> np.ndarray:
    """States at arbitrary times via per-step cubic Hermite interpolation.

    Each accepted step [t_i, t_{i+1}] carries exact endpoint states and
    derivatives, so the interpolant is O(h^4) accurate and reproduces any
    cubic exactly.  Queries outside the sampled span raise DomainError.
    """
    tq = np.asarray(times, dtype=float)
    t = traj.t
    if tq.size and (tq.min() < t[0] or tq.max() > t[-1]):
        raise DomainError(
            f"resample times must lie within [{t[0]}, {t[-1]}]"
        )
    idx = np.clip(np.searchsorted(t, tq, side="right") - 1, 0, t.size - 2 if t.size > 1 else 0)
    if t.size == 1:
        return np.repeat(traj.y, tq.size, axis=0)
    t0 = t[idx]
    h = t[idx + 1] - t0
    s = (tq - t0) / h
    s2 = s * s
    s3 = s2 * s
    h00 = 2.0 * s3 - 3.0 * s2 + 1.0
    h10 = s3 - 2.0 * s2 + s
    h01 = -2.0 * s3 + 3.0 * s2
    h11 = s3 - s2
    y0 = traj.y[idx]
    y1 = traj.y[idx + 1]
    f0 = traj.dy[idx]
    f1 = traj.dy[idx + 1]
    hh = h[:, None]
    return h00[:, None] * y0 + h10[:, None] * hh * f0 + h01[:, None] * y1 + h11[:, None] * hh * f1


def _fd2(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Three-point second derivative on a nonuniform grid (interior points).

    Exact on quadratics for any spacing; O(h) on general smooth data with
    irregular spacing, O(h^2) when the spacing varies smoothly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("second-derivative stencil needs at least 3 points")
    d = np.diff(x)
    if not (np.all(d > 0.0) or np.all(d < 0.0)):
        raise DomainError("abscissae must be strictly monotone")
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    return 2.0 * (h2 * y[:-2] - (h1 + h2) * y[1:-1] + h1 * y[2:]) / (h1 * h2 * (h1 + h2))


def fd_second_derivative(series: "EFSeries | tuple[Sequence[float], Sequence[float]]") -> np.ndarray:
    """d2T/dJ2 at the interior points of an EF series.

    Accepts an EFSeries or a bare (J, T) pair of sequences.
    """
    if isinstance(series, EFSeries):
        return _fd2(series.J, series.T)
    x, y = series
    return _fd2(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


def longest_monotone_run(values: Sequence[float]) -> slice:
    """Slice of the longest strictly monotone stretch of `values`."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return slice(0, v.size)
    sign = np.sign(np.diff(v))
    best = (0, 1)  # (start, stop) of best run, stop exclusive in diff index
    start = 0
    for i in range(1, sign.size + 1):
        if i == sign.size or sign[i] != sign[start] or sign[i] == 0.0:
            if sign[start] != 0.0 and (i - start) > (best[1] - best[0]):
                best = (start, i)
            start = i
    if best == (0, 1) and sign.size >= 1 and sign[0] == 0.0:
        return slice(0, 1)
    return slice(best[0], best[1] + 1)
