"""Force fields and ODE right-hand sides for planar curl-force dynamics.

Position-only families (Ermakov, Gorringe-Leach, isotropic azimuthal) and
one velocity-dependent extension (isotropic azimuthal plus radial drag).
Every family exposes analytic force components and the analytic curl
(1/r)[d(r F_theta)/dr - dF_r/dtheta]; curl_fd is the finite-difference
oracle for the same expression.

The *_rhs builders return closures suitable for integrate.integrate.
State conventions:

    polar_rhs        y = (r, theta, rdot, thetadot), independent t
    psi_reduced_rhs  y = (psi, dpsi/dtheta),         independent theta
    orbit_polar_rhs  y = (r, dr/dtheta),             independent theta
    ef_rhs           y = (T, T'),                    independent J
    drag_ef_rhs      y = (T, T'),                    independent J
    geodesic_rhs     y = (T, J, dT/ds, dJ/ds),       independent s
    third_order_rhs  y = (Y, Y', Y''),               independent z

Right-hand sides return NaN outside their domain (r <= 0, vanishing
denominators) so the adaptive stepper rejects the step; controlled
stopping is the job of the event guards at the bottom of this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, real_power
from .integrate import Event

__all__ = [
    "AngleFunction",
    "ErmakovField",
    "GorringeLeachField",
    "IsotropicField",
    "IsotropicDragField",
    "ForceField",
    "eval_force",
    "curl",
    "curl_fd",
    "polar_rhs",
    "psi_reduced_rhs",
    "mu_minus3_rhs",
    "orbit_polar_rhs",
    "ef_rhs",
    "drag_ef_rhs",
    "geodesic_rhs",
    "third_order_rhs",
    "third_order_residual",
    "r_floor_event",
    "t_floor_event",
    "h2_singularity_event",
    "yprime_floor_event",
]

_FAMILIES = ("zero", "constant", "linear_theta", "cos", "sin", "poly")

_NAN2 = np.full(2, np.nan)
_NAN3 = np.full(3, np.nan)
_NAN4 = np.full(4, np.nan)

_vec_real_power = np.vectorize(real_power, otypes=[float])


@dataclass(frozen=True)
class AngleFunction:
    """Angular profile with analytic derivatives up to third order.

    Families: zero, constant (c), linear_theta (c*theta), cos (c*cos(k*theta)),
    sin (c*sin(k*theta)), poly (c0 + c1*theta + c2*theta^2 + c3*theta^3).
    Call with order=0..3 to get the value or a derivative; accepts scalars
    and numpy arrays.
    """

    family: str
    c: float = 0.0
    k: float = 1.0
    coeffs: tuple = (0.0, 0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown angle-function family {self.family!r}")
        coeffs = tuple(float(x) for x in self.coeffs)
        if len(coeffs) != 4:
            raise ValueError("poly family takes exactly four coefficients c0..c3")
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zero(cls) -> "AngleFunction":
        return cls("zero")

    @classmethod
    def constant(cls, c: float) -> "AngleFunction":
        return cls("constant", c=c)

    @classmethod
    def linear_theta(cls, c: float) -> "AngleFunction":
        return cls("linear_theta", c=c)

    @classmethod
    def cos(cls, c: float = 1.0, k: float = 1.0) -> "AngleFunction":
        return cls("cos", c=c, k=k)

    @classmethod
    def sin(cls, c: float = 1.0, k: float = 1.0) -> "AngleFunction":
        return cls("sin", c=c, k=k)

    @classmethod
    def poly(cls, c0: float = 0.0, c1: float = 0.0, c2: float = 0.0,
             c3: float = 0.0) -> "AngleFunction":
        return cls("poly", coeffs=(c0, c1, c2, c3))

    def __call__(self, theta, order: int = 0):
        if order not in (0, 1, 2, 3):
            raise ValueError("derivative order must be 0, 1, 2 or 3")
        th = np.asarray(theta, dtype=float)
        fam = self.family
        if fam == "zero":
            out = np.zeros_like(th)
        elif fam == "constant":
            out = np.full_like(th, self.c if order == 0 else 0.0)
        elif fam == "linear_theta":
            if order == 0:
                out = self.c * th
            elif order == 1:
                out = np.full_like(th, self.c)
            else:
                out = np.zeros_like(th)
        elif fam == "cos":
            amp = self.c * self.k ** order
            phase = self.k * th
            if order == 0:
                out = amp * np.cos(phase)
            elif order == 1:
                out = -amp * np.sin(phase)
            elif order == 2:
                out = -amp * np.cos(phase)
            else:
                out = amp * np.sin(phase)
        elif fam == "sin":
            amp = self.c * self.k ** order
            phase = self.k * th
            if order == 0:
                out = amp * np.sin(phase)
            elif order == 1:
                out = amp * np.cos(phase)
            elif order == 2:
                out = -amp * np.sin(phase)
            else:
                out = -amp * np.cos(phase)
        else:
            c0, c1, c2, c3 = self.coeffs
            if order == 0:
                out = c0 + th * (c1 + th * (c2 + th * c3))
            elif order == 1:
                out = c1 + th * (2.0 * c2 + th * (3.0 * c3))
            elif order == 2:
                out = 2.0 * c2 + 6.0 * c3 * th
            else:
                out = np.full_like(th, 6.0 * c3)
        if np.ndim(theta) == 0:
            return float(out)
        return out


def _require_positive_r(r: float) -> None:
    if not (r > 0.0):
        raise DomainError(f"radius must be positive, got {r}")


@dataclass(frozen=True)
class ErmakovField:
    """F_r = -w^2 r + U(theta)/r^3, F_theta = -V'(theta)/r^3."""

    w: float = 0.0
    U: AngleFunction = AngleFunction.zero()
    V: AngleFunction = AngleFunction.zero()

    def force(self, r: float, theta: float, rdot: float = 0.0) -> tuple[float, float]:
        _require_positive_r(r)
        r3 = r ** 3
        return (-self.w ** 2 * r + self.U(theta) / r3, -self.V(theta, 1) / r3)

    def curl(self, r: float, theta: float) -> float:
        _require_positive_r(r)
        return (2.0 * self.V(theta, 1) - self.U(theta, 1)) / r ** 4


@dataclass(frozen=True)
class GorringeLeachField:
    """F_r = -[(U'' + U)/r^2 + 2 V'/r^(3/2)], F_theta = -V/r^(3/2).

    The curl vanishes identically exactly when U is sinusoidal with period
    2*pi and V is sinusoidal with period 4*pi.
    """

    U: AngleFunction = AngleFunction.zero()
    V: AngleFunction = AngleFunction.zero()

    def force(self, r: float, theta: float, rdot: float = 0.0) -> tuple[float, float]:
        _require_positive_r(r)
        r32 = r ** 1.5
        f_r = -((self.U(theta, 2) + self.U(theta)) / r ** 2
                + 2.0 * self.V(theta, 1) / r32)
        return (f_r, -self.V(theta) / r32)

    def curl(self, r: float, theta: float) -> float:
        _require_positive_r(r)
        return ((self.U(theta, 3) + self.U(theta, 1)) / r ** 3
                + (0.5 * self.V(theta) + 2.0 * self.V(theta, 2)) / r ** 2.5)


@dataclass(frozen=True)
class IsotropicField:
    """Purely azimuthal power-law force F_theta = r^mu."""

    mu: float

    def __post_init__(self) -> None:
        if self.mu == -2.0:
            raise ValueError("mu = -2 is excluded: the torque map divides by mu + 2")
        object.__setattr__(self, "mu", float(self.mu))

    def force(self, r: float, theta: float, rdot: float = 0.0) -> tuple[float, float]:
        _require_positive_r(r)
        return (0.0, r ** self.mu)

    def curl(self, r: float, theta: float) -> float:
        _require_positive_r(r)
        return (self.mu + 1.0) * r ** (self.mu - 1.0)


@dataclass(frozen=True)
class IsotropicDragField:
    """Azimuthal power law plus radial drag: F_r = r^nu * rdot, F_theta = r^mu.

    The drag term is velocity-dependent and carries no position-only curl,
    so curl() reports the azimuthal contribution alone.
    """

    mu: float
    nu: float

    def __post_init__(self) -> None:
        if self.mu == -2.0:
            raise ValueError("mu = -2 is excluded: the torque map divides by mu + 2")
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "nu", float(self.nu))

    def force(self, r: float, theta: float, rdot: float = 0.0) -> tuple[float, float]:
        _require_positive_r(r)
        return (r ** self.nu * rdot, r ** self.mu)

    def curl(self, r: float, theta: float) -> float:
        _require_positive_r(r)
        return (self.mu + 1.0) * r ** (self.mu - 1.0)


ForceField = ErmakovField | GorringeLeachField | IsotropicField | IsotropicDragField


def eval_force(field: ForceField, r: float, theta: float,
               rdot: float = 0.0) -> tuple[float, float]:
    """Radial and transverse force components at (r, theta) with radial velocity rdot."""
    return field.force(r, theta, rdot)


def curl(field: ForceField, r: float, theta: float) -> float:
    """Analytic curl (1/r)[d(r F_theta)/dr - dF_r/dtheta] of the position-only part."""
    return field.curl(r, theta)


def curl_fd(field: ForceField, r: float, theta: float, h: float = 1e-4) -> float:
    """Central finite-difference curl; independent oracle for curl()."""
    if not (r - h > 0.0):
        raise DomainError(f"need r - h > 0, got r={r}, h={h}")
    ft_plus = (r + h) * field.force(r + h, theta)[1]
    ft_minus = (r - h) * field.force(r - h, theta)[1]
    d_rft = (ft_plus - ft_minus) / (2.0 * h)
    fr_plus = field.force(r, theta + h)[0]
    fr_minus = field.force(r, theta - h)[0]
    d_fr = (fr_plus - fr_minus) / (2.0 * h)
    return (d_rft - d_fr) / r


def polar_rhs(field: ForceField):
    """Planar Newtonian motion: y = (r, theta, rdot, thetadot).

    rddot = r*thetadot^2 + F_r, thetaddot = (F_theta - 2*rdot*thetadot)/r.
    """

    def rhs(t, y):
        r = float(y[0])
        if not (r > 0.0):
            return _NAN4
        theta = float(y[1])
        rdot = float(y[2])
        thetadot = float(y[3])
        f_r, f_t = field.force(r, theta, rdot)
        return np.array([
            rdot,
            thetadot,
            r * thetadot * thetadot + f_r,
            (f_t - 2.0 * rdot * thetadot) / r,
        ])

    return rhs


def _variant_factor(variant: str) -> float:
    if variant == "derived":
        return 0.5
    if variant == "as_printed":
        return 1.0
    raise ValueError(f"unknown variant {variant!r}; use 'derived' or 'as_printed'")


def psi_reduced_rhs(I: float, U: AngleFunction, V: AngleFunction,
                    variant: str = "derived"):
    """Reduction to psi(theta) = 1/r with h2(theta) = 2*(I - V(theta)).

    derived:    psi'' + [(h2)'/(2 h2)] psi' + (1 + U/h2) psi = 0
    as_printed: psi'' + [(h2)'/h2]     psi' + (1 + U/h2) psi = 0

    The two differ only in the damping coefficient; the equivalence tests
    against the direct polar simulation adjudicate between them.
    """
    factor = _variant_factor(variant)

    def rhs(theta, y):
        theta = float(theta)
        h2 = 2.0 * (I - V(theta))
        if h2 == 0.0:
            return _NAN2
        h2p = -2.0 * V(theta, 1)
        psi = float(y[0])
        dpsi = float(y[1])
        return np.array([
            dpsi,
            -(factor * h2p / h2) * dpsi - (1.0 + U(theta) / h2) * psi,
        ])

    return rhs


def mu_minus3_rhs(I: float, variant: str = "derived"):
    """psi(theta) equation for the azimuthal r^-3 force.

    Instance of psi_reduced_rhs with U = 0 and V = -theta, h2 = 2*(I + theta):
    derived damping 1/(2*(theta + I)), as_printed damping 1/(theta + I).
    """
    return psi_reduced_rhs(I, AngleFunction.zero(),
                           AngleFunction.linear_theta(-1.0), variant)


def orbit_polar_rhs(I: float):
    """Orbit equation for r(theta): y = (r, dr/dtheta).

    r'' = [2 r'^2 - r*r'*sin(theta)/(2*(I - cos(theta))) + r^2] / r
    """

    def rhs(theta, y):
        theta = float(theta)
        r = float(y[0])
        rp = float(y[1])
        denom = I - math.cos(theta)
        if not (r > 0.0) or denom == 0.0:
            return _NAN2
        a = math.sin(theta) / (2.0 * denom)
        return np.array([rp, (2.0 * rp * rp - r * rp * a + r * r) / r])

    return rhs


def ef_rhs(n: float, m: float):
    """T'' = J^n * T^m with y = (T, T')."""

    def rhs(J, y):
        return np.array([
            float(y[1]),
            real_power(float(J), n) * real_power(float(y[0]), m),
        ])

    return rhs


def drag_ef_rhs(lam: float, sigma: float):
    """T'' = T^lambda * T' + J^2 * T^sigma with y = (T, T')."""

    def rhs(J, y):
        t = float(y[0])
        tp = float(y[1])
        jj = float(J)
        return np.array([
            tp,
            real_power(t, lam) * tp + jj * jj * real_power(t, sigma),
        ])

    return rhs


def geodesic_rhs(lam: float, sigma: float):
    """Autonomous affine-parameter form of the damped equation.

    State y = (T, J, dT/ds, dJ/ds) with

        d2T/ds2 = J^2 * T^sigma * (dJ/ds)^2
        d2J/ds2 = -T^lambda * (dJ/ds)^2

    The minus sign on the J equation is forced by consistency: eliminating s
    through T'' = (T_ss * J_s - T_s * J_ss) / J_s^3 must recover
    T'' = T^lambda T' + J^2 T^sigma, and the sign-free version recovers the
    damping term negated instead.
    """

    def rhs(s, y):
        t = float(y[0])
        j = float(y[1])
        jd = float(y[3])
        jd2 = jd * jd
        return np.array([
            float(y[2]),
            jd,
            j * j * real_power(t, sigma) * jd2,
            -real_power(t, lam) * jd2,
        ])

    return rhs


def third_order_rhs(lam: float, sigma: float):
    """Y''' = [(Y'' + (Y')^(2+lambda)) Y'' + Y^2 (Y')^(sigma+3)] / Y'."""

    def rhs(z, y):
        yy = float(y[0])
        yp = float(y[1])
        ypp = float(y[2])
        if yp == 0.0:
            return _NAN3
        num = (ypp + real_power(yp, 2.0 + lam)) * ypp \
            + yy * yy * real_power(yp, sigma + 3.0)
        return np.array([yp, ypp, num / yp])

    return rhs


def third_order_residual(y, yp, ypp, yppp, lam: float, sigma: float):
    """Residual of the third-order equation multiplied through by Y'.

    Returns Y''' * Y' - [(Y'' + (Y')^(2+lambda)) Y'' + Y^2 (Y')^(sigma+3)]
    elementwise; the multiplied form avoids dividing by small Y'.
    """
    y = np.asarray(y, dtype=float)
    yp = np.asarray(yp, dtype=float)
    ypp = np.asarray(ypp, dtype=float)
    yppp = np.asarray(yppp, dtype=float)
    res = yppp * yp - ((ypp + _vec_real_power(yp, 2.0 + lam)) * ypp
                       + y * y * _vec_real_power(yp, sigma + 3.0))
    if res.ndim == 0:
        return float(res)
    return res


def r_floor_event(threshold: float = 1e-8) -> Event:
    """Stop a polar run when the radius reaches the floor."""
    return Event("r-floor", lambda t, y: float(y[0]) - threshold)


def t_floor_event(threshold: float = 1e-10) -> Event:
    """Stop an EF run when T reaches the floor (negative exponents blow up)."""
    return Event("T-floor", lambda J, y: float(y[0]) - threshold)


def h2_singularity_event(I: float, V: AngleFunction,
                         threshold: float = 1e-6) -> Event:
    """Stop a psi-reduction run when h2 = 2*(I - V(theta)) crosses zero."""
    return Event("h2-singular",
                 lambda theta, y: abs(2.0 * (I - V(float(theta)))) - threshold)


def yprime_floor_event(threshold: float = 1e-10) -> Event:
    """Stop a third-order run when |Y'| collapses (equation divides by Y')."""
    return Event("Yprime-floor", lambda z, y: abs(float(y[1])) - threshold)
