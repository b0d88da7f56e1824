"""Shared trajectory fixtures; session scope keeps the suite under budget."""

from __future__ import annotations

import numpy as np
import pytest

from curlforce import systems
from curlforce.integrate import IntegratorSettings, integrate


@pytest.fixture(scope="session")
def lrr_run():
    """Transverse sin(theta)/r^3 force, the conservation benchmark run."""
    rhs = systems.polar_rhs(systems.ErmakovField(V=systems.AngleFunction.cos()))
    settings = IntegratorSettings(t_span=(0.0, 100.0), rel_tol=1e-10,
                                  abs_tol=1e-12)
    return integrate(rhs, np.array([1.0, 0.0, 0.1, 0.5]), settings)


@pytest.fixture(scope="session")
def ermakov_short_run():
    """Same field, shorter span and tighter tolerance for pointwise checks."""
    rhs = systems.polar_rhs(systems.ErmakovField(V=systems.AngleFunction.cos()))
    settings = IntegratorSettings(t_span=(0.0, 30.0), rel_tol=1e-11,
                                  abs_tol=1e-13)
    return integrate(rhs, np.array([1.0, 0.0, 0.1, 0.5]), settings)


@pytest.fixture(scope="session")
def mu3_run():
    """Azimuthal r^-3 force run used by the linear-reduction checks."""
    rhs = systems.polar_rhs(systems.IsotropicField(-3.0))
    settings = IntegratorSettings(t_span=(0.0, 12.0), rel_tol=1e-11,
                                  abs_tol=1e-13)
    return integrate(rhs, np.array([1.0, 0.0, 0.1, 0.5]), settings)


@pytest.fixture(scope="session")
def iso_m5_traj():
    """mu=-3/2 power-law run on a fixed fine grid (maps to (n,m)=(2,-5))."""
    rhs = systems.polar_rhs(systems.IsotropicField(-1.5))
    settings = IntegratorSettings(method="rk4", h=1e-3, t_span=(0.0, 8.0))
    return integrate(rhs, np.array([1.0, 0.0, 0.1, 0.6]), settings)


@pytest.fixture(scope="session")
def iso_m7_traj():
    """mu=-5/3 power-law run (maps to (n,m)=(2,-7))."""
    rhs = systems.polar_rhs(systems.IsotropicField(-5.0 / 3.0))
    settings = IntegratorSettings(method="rk4", h=1e-3, t_span=(0.0, 8.0))
    return integrate(rhs, np.array([1.0, 0.0, 0.1, 0.6]), settings)


@pytest.fixture(scope="session")
def drag_m4_traj():
    """mu=-4, nu=-2 drag run on a fine fixed grid for the form adjudication."""
    rhs = systems.polar_rhs(systems.IsotropicDragField(-4.0, -2.0))
    settings = IntegratorSettings(method="rk4", h=2e-4, t_span=(0.0, 6.0))
    return integrate(rhs, np.array([1.0, 0.0, 0.05, 0.6]), settings)


@pytest.fixture(scope="session")
def drag_ef_run():
    """Damped power-law run, lambda=1 sigma=5, state (T, T') against J."""
    settings = IntegratorSettings(method="rk4", h=2e-4, t_span=(1.0, 2.0))
    return integrate(systems.drag_ef_rhs(1.0, 5.0), np.array([0.5, 0.0]),
                     settings)


@pytest.fixture(scope="session")
def ef_m5_run():
    settings = IntegratorSettings(t_span=(1.0, 3.0), rel_tol=1e-12,
                                  abs_tol=1e-14)
    return integrate(systems.ef_rhs(2.0, -5.0), np.array([1.0, 0.0]), settings)


@pytest.fixture(scope="session")
def ef_m7_run():
    settings = IntegratorSettings(t_span=(1.0, 3.0), rel_tol=1e-12,
                                  abs_tol=1e-14)
    return integrate(systems.ef_rhs(2.0, -7.0), np.array([1.0, 0.0]), settings)
