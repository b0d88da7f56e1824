"""Transformation pipeline between polar trajectories and power-law form.

Covers the integrated-torque map (torque_map), the self-similar particular
solution and its coefficient (lambda_coeff, ParticularSolution), the orbit
and time quadratures on that branch (orbit_theta_of_r, time_of_r), seeding
of polar runs from the branch (seed_polar_from_particular), residual
adjudicators for printed-versus-derived formula variants (ef_residual,
drag_map_residual, abel_reduction_residual, scaling_map_residual), the
power-solution root of the third-order reduction (power_solution_y0), and
a self-contained adaptive quadrature (quad_adaptive).

Scale conventions, with n = 2 throughout: a raw series (Jt, Tt) built from
a trajectory via Tt = (r^(mu+2) - r0^(mu+2))/(mu+2), Jt = r^2*thetadot,
Tt' = rdot is rescaled to T = (mu+2)*Tt, J = (mu+2)^(1/4)*Jt,
T' = (mu+2)^(3/4)*Tt', which turns d2Tt/dJt2 = Jt^2 * (r^(mu+2))^m into
T'' = J^2 T^m with m = -(mu+4)/(mu+2).  The rescaling uses fractional
powers of mu+2, so scaled output requires mu > -2; magnitudes |mu+2| are
used in the quadrature prefactors so the mu < -2 comparator cases stay
real-valued.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (
    DomainError,
    EFSeries,
    PolarState,
    Trajectory,
    _fd2,
    longest_monotone_run,
    real_power,
    resample,
)
from .integrate import _hermite

__all__ = [
    "NonRealLambda",
    "NoRoot",
    "QuadratureError",
    "QuadratureResult",
    "ParticularSolution",
    "ResidualStats",
    "DragMapReport",
    "AbelReport",
    "ChainQuadrature",
    "m_from_mu",
    "drag_exponents",
    "lambda_coeff",
    "particular_solution",
    "torque_map",
    "ef_residual",
    "j_of_r",
    "orbit_theta_of_r",
    "time_of_r",
    "seed_polar_from_particular",
    "reparametrize_by_angle",
    "scaling_map_residual",
    "drag_map_residual",
    "abel_reduction_residual",
    "power_solution_y0",
    "quad_adaptive",
]

_N_DEFAULT = 2.0

_rpow = np.vectorize(real_power, otypes=[float])


class NonRealLambda(ValueError):
    """The particular-solution coefficient has no real value for these exponents."""


class NoRoot(RuntimeError):
    """No sign change found when bracketing a root."""


class QuadratureError(RuntimeError):
    """Quadrature failure; carries the best partial value when available."""

    def __init__(self, message: str, partial: float = math.nan):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class QuadratureResult:
    value: float
    abs_error_estimate: float
    evaluations: int

    def __post_init__(self) -> None:
        if self.abs_error_estimate < 0.0:
            raise ValueError("error estimate must be nonnegative")


def m_from_mu(mu: float) -> float:
    """Power-law exponent m = -(mu+4)/(mu+2) of the mapped equation."""
    if mu == -2.0:
        raise ValueError("mu = -2 is excluded: the map divides by mu + 2")
    return -(mu + 4.0) / (mu + 2.0)


def drag_exponents(mu: float, nu: float) -> tuple[float, float, float]:
    """(lambda, sigma, rho) = (-(mu+4)/(mu+2), nu/(mu+2), (nu-mu-1)/(mu+2)).

    lambda and sigma are the exponents of the damped equation as printed;
    rho is the drag exponent produced by direct substitution.
    """
    if mu == -2.0:
        raise ValueError("mu = -2 is excluded: the map divides by mu + 2")
    return (-(mu + 4.0) / (mu + 2.0), nu / (mu + 2.0), (nu - mu - 1.0) / (mu + 2.0))


def lambda_coeff(n: float, m: float) -> float:
    """Coefficient of the particular solution T = Lambda * J^((n+2)/(1-m)).

    Lambda = [(n+2)(n+m+1)/(m-1)^2]^(1/(m-1)).  A zero base gives 0 (the
    solution degenerates to T = 0); a negative base is real only when m-1
    is an odd integer, otherwise NonRealLambda is raised.
    """
    if m == 1.0:
        raise ValueError("m = 1 is excluded: the exponent divides by m - 1")
    base = (n + 2.0) * (n + m + 1.0) / (m - 1.0) ** 2
    if base == 0.0:
        return 0.0
    k = m - 1.0
    if base > 0.0:
        return base ** (1.0 / k)
    if k == math.floor(k) and int(k) % 2 != 0:
        return -((-base) ** (1.0 / k))
    raise NonRealLambda(
        f"(n, m) = ({n}, {m}) gives base {base} < 0 with even or non-integer "
        f"reciprocal exponent {k}; no real coefficient exists")


@dataclass(frozen=True)
class ParticularSolution:
    """Self-similar branch T(J) = Lambda * J^exponent with exponent = (n+2)/(1-m)."""

    n: float
    m: float
    Lambda: float
    exponent: float

    def T(self, J):
        return self.Lambda * _as_pow(J, self.exponent)

    def Tprime(self, J):
        return self.Lambda * self.exponent * _as_pow(J, self.exponent - 1.0)

    def Tsecond(self, J):
        e = self.exponent
        return self.Lambda * e * (e - 1.0) * _as_pow(J, e - 2.0)

    def ode_residual(self, J):
        """T'' - J^n T^m evaluated on the branch; zero when Lambda is exact."""
        return self.Tsecond(J) - _as_pow(J, self.n) * _rpow(self.T(J), self.m)


def _as_pow(x, p):
    arr = np.asarray(x, dtype=float)
    out = _rpow(arr, p)
    if arr.ndim == 0:
        return float(out)
    return out


def particular_solution(n: float, m: float) -> ParticularSolution:
    return ParticularSolution(float(n), float(m), lambda_coeff(n, m),
                              (n + 2.0) / (1.0 - m))


def _r0_power(r0: float, p: float) -> float:
    """r0^p for reference radii, handling the r0 = 0 and r0 = inf conventions."""
    if r0 == 0.0:
        if p > 0.0:
            return 0.0
        raise DomainError(
            f"r0 = 0 is unusable for exponent {p} <= 0; use r0 = inf instead")
    if math.isinf(r0):
        if p < 0.0:
            return 0.0
        raise DomainError(
            f"r0 = inf is unusable for exponent {p} >= 0; use a finite r0")
    if r0 < 0.0:
        raise DomainError(f"reference radius must be nonnegative, got {r0}")
    return r0 ** p


def torque_map(traj: Trajectory, mu: float, r0: float = 0.0,
               apply_scaling: bool = True) -> EFSeries:
    """Map a polar trajectory to the integrated-torque series (J, T, T').

    Raw variables: Tt = (r^(mu+2) - r0^(mu+2))/(mu+2), Jt = r^2*thetadot,
    Tt' = rdot.  With apply_scaling the (mu+2) factors described in the
    module docstring are absorbed, which requires mu > -2.  A non-monotone
    Jt (impossible for the azimuthal power-law family, whose torque is
    r^(mu+1) > 0) is reduced to its longest monotone run with a warning.
    """
    if mu == -2.0:
        raise ValueError("mu = -2 is excluded: the map divides by mu + 2")
    if traj.y.shape[1] != 4:
        raise ValueError("torque_map needs a polar trajectory with 4 state columns")
    r = traj.y[:, 0]
    if np.any(r <= 0.0):
        raise DomainError("torque_map needs r > 0 throughout the trajectory")
    rdot = traj.y[:, 2]
    thetadot = traj.y[:, 3]
    r0p = _r0_power(r0, mu + 2.0)
    t_raw = (r ** (mu + 2.0) - r0p) / (mu + 2.0)
    j_raw = r * r * thetadot
    tp_raw = rdot

    if apply_scaling:
        if mu + 2.0 <= 0.0:
            raise ValueError(
                "scaled output needs mu > -2 (the rescaling takes fractional "
                "powers of mu + 2); pass apply_scaling=False")
        a = mu + 2.0
        T = a * t_raw
        J = a ** 0.25 * j_raw
        Tp = a ** 0.75 * tp_raw
    else:
        T, J, Tp = t_raw, j_raw, tp_raw

    d = np.diff(J)
    if not np.all(d > 0.0):
        run = longest_monotone_run(J)
        kept = run.stop - run.start
        warnings.warn(
            f"torque map: J not strictly increasing; keeping the longest "
            f"monotone run of {kept} of {J.size} samples", stacklevel=2)
        J, T, Tp = J[run], T[run], Tp[run]
        if J.size >= 2 and J[1] < J[0]:
            J, T, Tp = J[::-1], T[::-1], Tp[::-1]
    return EFSeries(J=J.copy(), T=T.copy(), Tprime=Tp.copy(),
                    mu=float(mu), r0=float(r0), scaled=bool(apply_scaling))


@dataclass(frozen=True)
class ResidualStats:
    """FD residual summary; scale is the largest |d2T/dJ2| seen."""

    rms: float
    max_abs: float
    scale: float
    slope_max: float
    count: int


def _residual_stats(fd2: np.ndarray, model: np.ndarray,
                    slope_max: float) -> ResidualStats:
    resid = fd2 - model
    scale = max(float(np.max(np.abs(fd2))), 1e-30)
    return ResidualStats(
        rms=float(np.sqrt(np.mean(resid * resid))),
        max_abs=float(np.max(np.abs(resid))),
        scale=scale,
        slope_max=slope_max,
        count=int(resid.size),
    )


def _slope_consistency(J: np.ndarray, T: np.ndarray, Tp: np.ndarray) -> float:
    """Max deviation of chord slopes from averaged endpoint derivatives."""
    chord = np.diff(T) / np.diff(J)
    avg = 0.5 * (Tp[:-1] + Tp[1:])
    return float(np.max(np.abs(chord - avg)))


def ef_residual(series: EFSeries, n: float, m: float) -> ResidualStats:
    """How well the series satisfies T'' = J^n T^m, by finite differences.

    rms and max_abs are over interior points; slope_max cross-checks the
    recorded T' against chord slopes.  Acceptance-style thresholds should
    be read against .scale (the largest |T''| on the series).
    """
    if len(series) < 3:
        raise ValueError("residual needs at least 3 samples")
    fd2 = _fd2(series.J, series.T)
    model = _rpow(series.J[1:-1], n) * _rpow(series.T[1:-1], m)
    return _residual_stats(fd2, model, _slope_consistency(series.J, series.T,
                                                          series.Tprime))


def j_of_r(r, mu: float, r0: float, n: float, m: float):
    """Invert the particular branch: J = [(r^(mu+2) - r0^(mu+2))/Lambda]^((1-m)/(n+2))."""
    lam = lambda_coeff(n, m)
    if lam == 0.0:
        raise DomainError(
            f"(n, m) = ({n}, {m}) gives Lambda = 0; the branch degenerates "
            "and J(r) is undefined")
    r0p = _r0_power(r0, mu + 2.0)
    rr = np.asarray(r, dtype=float)
    bracket = (rr ** (mu + 2.0) - r0p) / lam
    if np.any(bracket < 0.0):
        raise DomainError("negative bracket: r is outside the branch domain")
    out = bracket ** ((1.0 - m) / (n + 2.0))
    if rr.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class ChainQuadrature:
    """Cumulative quadrature along r with a printed-form comparator.

    values[i] is the integral from r[0] to r[i] of the chain integrand
    (theta or tau, depending on the producer).  printed_ratio[i] is the
    pointwise ratio printed_integrand/chain_integrand at r[i]; a ratio
    identically 1 would mean the printed closed form matches the chain.
    """

    r: np.ndarray
    values: np.ndarray
    printed_ratio: np.ndarray
    abs_error_estimate: float
    evaluations: int


def _check_r_grid(r_grid) -> np.ndarray:
    rg = np.asarray(r_grid, dtype=float)
    if rg.ndim != 1 or rg.size < 1:
        raise ValueError("r_grid must be a one-dimensional sequence")
    if rg.size > 1 and not np.all(np.diff(rg) > 0.0):
        raise ValueError("r_grid must be strictly increasing")
    if np.any(rg <= 0.0):
        raise DomainError("r_grid must be positive")
    return rg


def _cumulative_quadrature(integrand, rg: np.ndarray,
                           tol: float) -> tuple[np.ndarray, float, int]:
    values = np.zeros(rg.size)
    err = 0.0
    evals = 0
    for i in range(1, rg.size):
        res = quad_adaptive(integrand, rg[i - 1], rg[i], tol)
        values[i] = values[i - 1] + res.value
        err += res.abs_error_estimate
        evals += res.evaluations
    return values, err, evals


def orbit_theta_of_r(mu: float, r0: float, r_grid,
                     n: float = _N_DEFAULT, tol: float = 1e-10) -> ChainQuadrature:
    """theta(r) on the particular branch by composing J(r) with dtheta/dr.

    Chain integrand: |mu+2|^(1/2) * J(rho) / (rho^2 * T'(J(rho))) with T'
    taken on the scaled branch.  The |mu+2|^(1/2) factor undoes the J and
    T' rescalings so the chain matches the unscaled kinematics; for
    mu < -2 the magnitude keeps the output real.  The printed closed form
    ((1-m)/(n+2)) * Lambda^(-2(1-m)/(n+2)) * (r^(mu+2)-r0^(mu+2))^(-2(n+m+3)/(n+2))
    is evaluated alongside and reported as a pointwise integrand ratio.
    """
    m = m_from_mu(mu)
    sol = particular_solution(n, m)
    if sol.Lambda <= 0.0:
        raise DomainError(
            f"(n, m) = ({n}, {m}) gives Lambda = {sol.Lambda}; the orbit "
            "quadrature needs a positive coefficient")
    rg = _check_r_grid(r_grid)
    s = math.sqrt(abs(mu + 2.0))
    q = (1.0 - m) / (n + 2.0)
    r0p = _r0_power(r0, mu + 2.0)

    def chain(r: float) -> float:
        d = (r ** (mu + 2.0) - r0p) / sol.Lambda
        J = real_power(d, q)
        tp = sol.Tprime(J)
        return s * J / (r * r * tp)

    def printed(r: float) -> float:
        d = r ** (mu + 2.0) - r0p
        return q * real_power(sol.Lambda, -2.0 * q) \
            * real_power(d, -2.0 * (n + m + 3.0) / (n + 2.0))

    values, err, evals = _cumulative_quadrature(chain, rg, tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.array([printed(r) / chain(r) for r in rg])
    return ChainQuadrature(r=rg, values=values, printed_ratio=ratio,
                           abs_error_estimate=err, evaluations=evals)


def time_of_r(mu: float, r0: float, r_grid, n: float = _N_DEFAULT,
              tau0: float = 0.0, physical_time: bool = False,
              tol: float = 1e-10) -> ChainQuadrature:
    """tau(r) on the particular branch: quadrature of (dJ/dr)/(r * r^mu).

    Differentiating J(r) analytically gives the chain integrand
    q * |mu+2| * Lambda^(-q) * (r^(mu+2)-r0^(mu+2))^(q-1) with
    q = (1-m)/(n+2).  The printed closed form
    q * (mu+2) * Lambda^((n+m+1)/(n+2)) * (...)^(-(n+m+3)/(n+2)) is
    reported as a ratio.  With physical_time the values are multiplied by
    |mu+2|^(-1/(n+2)), which converts tau to the unscaled time variable.
    """
    m = m_from_mu(mu)
    sol = particular_solution(n, m)
    if sol.Lambda <= 0.0:
        raise DomainError(
            f"(n, m) = ({n}, {m}) gives Lambda = {sol.Lambda}; the time "
            "quadrature needs a positive coefficient")
    rg = _check_r_grid(r_grid)
    q = (1.0 - m) / (n + 2.0)
    a = abs(mu + 2.0)
    lam_pow = real_power(sol.Lambda, -q)
    r0p = _r0_power(r0, mu + 2.0)

    def chain(r: float) -> float:
        d = r ** (mu + 2.0) - r0p
        return q * a * lam_pow * real_power(d, q - 1.0)

    def printed(r: float) -> float:
        d = r ** (mu + 2.0) - r0p
        return q * (mu + 2.0) * real_power(sol.Lambda, (n + m + 1.0) / (n + 2.0)) \
            * real_power(d, -(n + m + 3.0) / (n + 2.0))

    values, err, evals = _cumulative_quadrature(chain, rg, tol)
    values = values + tau0
    if physical_time:
        values = values * a ** (-1.0 / (n + 2.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.array([printed(r) / chain(r) for r in rg])
    return ChainQuadrature(r=rg, values=values, printed_ratio=ratio,
                           abs_error_estimate=err, evaluations=evals)


def seed_polar_from_particular(mu: float, r0: float, J1: float,
                               n: float = _N_DEFAULT) -> PolarState:
    """Polar initial state lying on the particular branch at scaled momentum J1.

    Inverts the torque map on the branch: T1 = Lambda*J1^e,
    r1 = (T1 + r0^(mu+2))^(1/(mu+2)), rdot1 = (mu+2)^(-3/4)*T'(J1),
    thetadot1 = (mu+2)^(-1/4)*J1/r1^2, theta1 = 0.  Requires mu > -2 (the
    de-scaling takes fractional powers of mu+2) and J1 > 0.
    """
    if mu + 2.0 <= 0.0:
        raise DomainError("seeding needs mu > -2 (fractional powers of mu + 2)")
    if J1 <= 0.0:
        raise DomainError(f"seeding needs J1 > 0, got {J1}")
    m = m_from_mu(mu)
    sol = particular_solution(n, m)
    if sol.Lambda <= 0.0:
        raise DomainError(
            f"(n, m) = ({n}, {m}) gives Lambda = {sol.Lambda}; there is no "
            "positive branch to seed from")
    a = mu + 2.0
    t1 = sol.T(J1)
    tp1 = sol.Tprime(J1)
    r0p = _r0_power(r0, a) if r0 != 0.0 else 0.0
    r1 = (t1 + r0p) ** (1.0 / a)
    return PolarState(
        t=0.0,
        r=r1,
        theta=0.0,
        rdot=a ** -0.75 * tp1,
        thetadot=a ** -0.25 * J1 / (r1 * r1),
    )


def reparametrize_by_angle(traj: Trajectory,
                           theta_values) -> tuple[np.ndarray, np.ndarray]:
    """Times and states of a polar trajectory at prescribed angles.

    Requires theta strictly increasing along the trajectory.  Each crossing
    time is located by bisection on the cubic Hermite interpolant of the
    theta column, then the full state is resampled there.  Returns
    (times, states) with states of shape (len(theta_values), 4).
    """
    th = traj.y[:, 1]
    if not np.all(np.diff(th) > 0.0):
        raise DomainError("reparametrization needs strictly increasing theta")
    thd = traj.dy[:, 1]
    t = traj.t
    targets = np.asarray(theta_values, dtype=float)
    if np.any(targets < th[0]) or np.any(targets > th[-1]):
        raise DomainError(
            f"angles must lie within [{th[0]}, {th[-1]}]")
    times = np.empty(targets.size)
    for iq, target in enumerate(targets.ravel()):
        k = int(np.searchsorted(th, target, side="right"))
        k = min(max(k, 1), th.size - 1)
        a, b = t[k - 1], t[k]
        ga = th[k - 1] - target
        if ga == 0.0:
            times[iq] = a
            continue
        while (b - a) > 1e-13 * max(1.0, abs(b)):
            mid = 0.5 * (a + b)
            gm = _hermite(t[k - 1], th[k - 1], thd[k - 1],
                          t[k], th[k], thd[k], mid) - target
            if ga * gm <= 0.0:
                b = mid
            else:
                a, ga = mid, gm
        times[iq] = 0.5 * (a + b)
    return times, resample(traj, times)


def scaling_map_residual(traj: Trajectory, alpha: float, beta: float,
                         eps: float, model: Callable[[float, float, float], float],
                         num: int = 1201) -> ResidualStats:
    """Residual of the scaled solution T_eps(J) = e^(alpha*eps) T(e^(beta*eps) J).

    traj must be a second-order scalar run with state (T, T'); model(J, T, T')
    returns the expected T''.  The mapped solution is resampled on a uniform
    grid restricted to the J-window where e^(beta*eps)*J stays inside the
    original span, differentiated twice by finite differences, and compared
    against model.  A residual at roundoff scale confirms the map sends
    solutions to solutions.
    """
    c = math.exp(beta * eps)
    amp = math.exp(alpha * eps)
    t0, t1 = float(traj.t[0]), float(traj.t[-1])
    lo = max(t0, t0 / c)
    hi = min(t1, t1 / c)
    if not (hi > lo):
        raise ValueError("the scaled J-window is empty for this eps")
    grid = np.linspace(lo, hi, num)
    states = resample(traj, grid * c)
    T_hat = amp * states[:, 0]
    Tp_hat = amp * c * states[:, 1]
    fd2 = _fd2(grid, T_hat)
    model_vals = np.array([
        model(float(j), float(tt), float(tp))
        for j, tt, tp in zip(grid[1:-1], T_hat[1:-1], Tp_hat[1:-1])
    ])
    return _residual_stats(fd2, model_vals,
                           _slope_consistency(grid, T_hat, Tp_hat))


@dataclass(frozen=True)
class DragMapReport:
    """Adjudication between the printed and the substitution-derived forms.

    printed form (P):  Tt'' = Tt^lambda Tt' + Jt^2 Tt^sigma
    derived form (D):  Tt'' = Jt^2 W^lambda + W^rho Tt', W = (mu+2) Tt = r^(mu+2)

    Residual statistics are relative to scale = max |Tt''| over interior
    points.  winner names the form with the clearly smaller RMS residual.
    """

    lam: float
    sigma: float
    rho: float
    rms_printed: float
    max_printed: float
    rms_derived: float
    max_derived: float
    scale: float
    count: int
    winner: str


def drag_map_residual(traj: Trajectory, mu: float,
                      nu: float | None = None) -> DragMapReport:
    """FD residuals of the two candidate damped-equation forms on a drag run.

    Maps the trajectory with the unscaled torque variables (r0 = 0
    convention: Tt = r^(mu+2)/(mu+2)) and evaluates both forms at interior
    points.  With nu=None the drag terms are dropped from both forms, which
    reduces (D) to the undamped power-law residual; (P) is then undefined
    (its sigma depends on nu) and reported as NaN.
    """
    if mu == -2.0:
        raise ValueError("mu = -2 is excluded: the map divides by mu + 2")
    if traj.y.shape[1] != 4:
        raise ValueError("drag_map_residual needs a polar trajectory")
    r = traj.y[:, 0]
    if np.any(r <= 0.0):
        raise DomainError("drag_map_residual needs r > 0 throughout")
    rdot = traj.y[:, 2]
    thetadot = traj.y[:, 3]
    t_raw = r ** (mu + 2.0) / (mu + 2.0)
    j_raw = r * r * thetadot
    w = r ** (mu + 2.0)

    d = np.diff(j_raw)
    if not np.all(d > 0.0):
        run = longest_monotone_run(j_raw)
        warnings.warn(
            f"drag map: J not strictly increasing; keeping the longest "
            f"monotone run of {run.stop - run.start} of {j_raw.size} samples",
            stacklevel=2)
        j_raw, t_raw, rdot, w = (j_raw[run], t_raw[run], rdot[run], w[run])
        if j_raw.size >= 2 and j_raw[1] < j_raw[0]:
            j_raw, t_raw, rdot, w = (j_raw[::-1], t_raw[::-1],
                                     rdot[::-1], w[::-1])
    if j_raw.size < 3:
        raise ValueError("residual needs at least 3 samples")

    lam = -(mu + 4.0) / (mu + 2.0)
    rho = (nu - mu - 1.0) / (mu + 2.0) if nu is not None else math.nan
    sigma = nu / (mu + 2.0) if nu is not None else math.nan

    fd2 = _fd2(j_raw, t_raw)
    ji = j_raw[1:-1]
    ti = t_raw[1:-1]
    tpi = rdot[1:-1]
    wi = w[1:-1]
    scale = max(float(np.max(np.abs(fd2))), 1e-30)

    derived = fd2 - ji * ji * _rpow(wi, lam)
    if nu is not None:
        derived = derived - _rpow(wi, rho) * tpi
        printed = fd2 - _rpow(ti, lam) * tpi - ji * ji * _rpow(ti, sigma)
        rms_p = float(np.sqrt(np.mean(printed * printed)))
        max_p = float(np.max(np.abs(printed)))
    else:
        rms_p = math.nan
        max_p = math.nan
    rms_d = float(np.sqrt(np.mean(derived * derived)))
    max_d = float(np.max(np.abs(derived)))

    if math.isnan(rms_p) or rms_d < 0.1 * rms_p:
        winner = "derived"
    elif rms_p < 0.1 * rms_d:
        winner = "printed"
    else:
        winner = "tie"
    return DragMapReport(lam=lam, sigma=sigma, rho=rho,
                         rms_printed=rms_p, max_printed=max_p,
                         rms_derived=rms_d, max_derived=max_d,
                         scale=scale, count=int(fd2.size), winner=winner)


@dataclass(frozen=True)
class AbelReport:
    """Residual of the first-order reduction in the invariants (w, u)."""

    rms: float
    max_abs: float
    scale: float
    count: int


def _fd1(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Three-point first derivative on a nonuniform grid (interior points)."""
    h1 = x[1:-1] - x[:-2]
    h2 = x[2:] - x[1:-1]
    return (-h2 / (h1 * (h1 + h2)) * y[:-2]
            + (h2 - h1) / (h1 * h2) * y[1:-1]
            + h1 / (h2 * (h1 + h2)) * y[2:])


def abel_reduction_residual(lam: float, traj: Trajectory) -> AbelReport:
    """Residual of (lam*u + w) du/dw = (1 + lam(1 + w^lam)) u + lam w^(1+4*lam).

    traj is a damped-equation run with state (T, T') against J; the
    invariants w = J^(1/lam) T and u = J^((lam+1)/lam) T' are formed along
    it and du/dw is taken by finite differences.  Valid for
    sigma = 1 + 4*lam runs; scale is the largest term magnitude seen.
    """
    if lam == 0.0:
        raise ValueError("lambda = 0 is excluded: the invariants use 1/lambda")
    J = traj.t
    if np.any(J <= 0.0):
        raise DomainError("the reduction needs J > 0 along the run")
    T = traj.y[:, 0]
    Tp = traj.y[:, 1]
    w = J ** (1.0 / lam) * T
    u = J ** ((lam + 1.0) / lam) * Tp

    d = np.diff(w)
    if not (np.all(d > 0.0) or np.all(d < 0.0)):
        run = longest_monotone_run(w)
        warnings.warn(
            f"abel reduction: w not monotone; keeping the longest run of "
            f"{run.stop - run.start} of {w.size} samples", stacklevel=2)
        w, u = w[run], u[run]
    if w.size < 3:
        raise ValueError("residual needs at least 3 samples")
    dudw = _fd1(w, u)
    wi = w[1:-1]
    ui = u[1:-1]
    t1 = (lam * ui + wi) * dudw
    t2 = (1.0 + lam * (1.0 + _rpow(wi, lam))) * ui
    t3 = lam * _rpow(wi, 1.0 + 4.0 * lam)
    resid = t1 - t2 - t3
    scale = max(float(np.max(np.abs(t1))), float(np.max(np.abs(t2))),
                float(np.max(np.abs(t3))), 1e-30)
    return AbelReport(rms=float(np.sqrt(np.mean(resid * resid))),
                      max_abs=float(np.max(np.abs(resid))),
                      scale=scale, count=int(resid.size))


def power_solution_y0(lam: float) -> float:
    """Smallest positive Y0 making Y = Y0 * z^(lambda/(1+lambda)) a solution.

    Solves lam^-2 (lam Y0)^(4+4*lam) - (lam Y0)^(1+lam) (1+lam)^(3*lam)
    - (1+lam)^(1+4*lam) = 0 by log-grid scanning and bisection.  lambda = -1
    has the exponential special solution instead and lambda = 0 degenerates;
    both are rejected.
    """
    if lam == -1.0:
        raise ValueError(
            "lambda = -1 has no power solution; use the exponential branch "
            "Y = Y0 * exp(-z)")
    if lam == 0.0:
        raise ValueError("lambda = 0 is excluded: the exponent divides by lambda")

    def g(y: float) -> float:
        return (lam ** -2.0 * real_power(lam * y, 4.0 + 4.0 * lam)
                - real_power(lam * y, 1.0 + lam) * real_power(1.0 + lam, 3.0 * lam)
                - real_power(1.0 + lam, 1.0 + 4.0 * lam))

    ys = np.geomspace(1e-6, 1e6, 481)
    vals = np.array([g(float(y)) for y in ys])
    bracket = None
    for i in range(vals.size - 1):
        a, b = vals[i], vals[i + 1]
        if math.isfinite(a) and math.isfinite(b):
            if a == 0.0:
                return float(ys[i])
            if a * b < 0.0:
                bracket = (float(ys[i]), float(ys[i + 1]))
                break
    if bracket is None:
        raise NoRoot(
            f"no sign change of the power-solution condition for lambda={lam} "
            "in [1e-6, 1e6]")
    lo, hi = bracket
    glo = g(lo)
    while (hi - lo) > 2e-14 * max(1.0, abs(hi)):
        mid = 0.5 * (lo + hi)
        gm = g(mid)
        if glo * gm <= 0.0:
            hi = mid
        else:
            lo, glo = mid, gm
    return 0.5 * (lo + hi)


_QUAD_MAX_DEPTH = 60


class _QuadState:
    __slots__ = ("evals", "err", "depth_failures")

    def __init__(self) -> None:
        self.evals = 0
        self.err = 0.0
        self.depth_failures = 0


def _probe(f, x: float) -> float | None:
    try:
        v = float(f(x))
    except (ZeroDivisionError, ValueError, OverflowError):
        return None
    return v if math.isfinite(v) else None


def _simpson_rec(f, a: float, fa: float, m: float, fm: float, b: float,
                 fb: float, whole: float, depth: int, tol_density: float,
                 state: _QuadState) -> float:
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = _probe(f, lm)
    frm = _probe(f, rm)
    state.evals += 2
    if flm is None or frm is None:
        bad = lm if flm is None else rm
        raise QuadratureError(f"integrand not finite at x = {bad}")
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    s2 = left + right
    delta = s2 - whole
    if abs(delta) <= 15.0 * tol_density * (b - a) or depth >= _QUAD_MAX_DEPTH:
        if abs(delta) > 15.0 * tol_density * (b - a):
            state.depth_failures += 1
        state.err += abs(delta) / 15.0
        return s2 + delta / 15.0
    return (_simpson_rec(f, a, fa, lm, flm, m, fm, left, depth + 1,
                         tol_density, state)
            + _simpson_rec(f, m, fm, rm, frm, b, fb, right, depth + 1,
                           tol_density, state))


def _simpson_panel(f, a: float, b: float, tol_density: float,
                   state: _QuadState) -> float:
    fa = _probe(f, a)
    fb = _probe(f, b)
    m = 0.5 * (a + b)
    fm = _probe(f, m)
    state.evals += 3
    if fa is None or fb is None or fm is None:
        raise QuadratureError(f"integrand not finite inside [{a}, {b}]")
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    return _simpson_rec(f, a, fa, m, fm, b, fb, whole, 0, tol_density, state)


def quad_adaptive(f, a: float, b: float, tol: float = 1e-10) -> QuadratureResult:
    """Adaptive Simpson quadrature with integrable-endpoint handling.

    The local acceptance test is |S_fine - S_coarse| <= 15 * tol * w/(b-a)
    with Richardson correction, so the accumulated error is of order tol.
    Endpoints where f is non-finite (or raises) are offset by
    eps = 1e-12*(b-a) and the missing sliver is estimated as twice the
    integral over the adjacent quarter strip, which is exact for
    inverse-square-root singularities.  More than 60 bisection levels on
    any subinterval raises QuadratureError carrying the partial value.
    """
    a = float(a)
    b = float(b)
    if not (b >= a):
        raise ValueError("quadrature needs b >= a")
    if b == a:
        return QuadratureResult(0.0, 0.0, 0)
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    span = b - a
    state = _QuadState()
    tol_density = tol / span

    fa = _probe(f, a)
    fb = _probe(f, b)
    state.evals += 2
    lo = a
    hi = b
    eps = 1e-12 * span
    tail = 0.0
    if fa is None:
        lo = a + eps
        strip = _simpson_panel(f, a + 0.25 * eps, a + eps, tol_density, state)
        tail += 2.0 * strip
        state.err += abs(strip)
    if fb is None:
        hi = b - eps
        strip = _simpson_panel(f, b - eps, b - 0.25 * eps, tol_density, state)
        tail += 2.0 * strip
        state.err += abs(strip)
    value = _simpson_panel(f, lo, hi, tol_density, state) + tail
    if state.depth_failures:
        raise QuadratureError(
            f"no convergence after {_QUAD_MAX_DEPTH} bisection levels on "
            f"{state.depth_failures} subinterval(s)", partial=value)
    return QuadratureResult(value, state.err, state.evals)
