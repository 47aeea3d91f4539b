import io
import math

import numpy as np
import pytest

import bfkit
from bfkit import integrals_at, rho1_at, solve_rho1
from bfkit.trajectory import write_csv

# rho1(0.5) from two independent integrators (DOP853 at rtol 1e-13 and
# Richardson-extrapolated RK4 at dt=1e-5), agreeing to 7e-15
RHO1_HALF = 0.301167142228384


def test_initial_condition(traj):
    assert rho1_at(traj, 0.0) == 1.0


def test_initial_slope():
    t = solve_rho1(0.01, 1e-5)
    h = 1e-5
    assert abs((t.rho1[1] - 1.0) / h + 2.0) < 10 * h


def test_against_independent_integrator(traj):
    assert abs(rho1_at(traj, 0.5) - RHO1_HALF) <= 1e-9


def test_grid_points_exact(traj):
    for i in (0, 1, 137, 5000):
        assert rho1_at(traj, traj.t[i]) == traj.rho1[i]


def test_grid_refinement_consistency():
    coarse = solve_rho1(1.2, 1e-4)
    fine = solve_rho1(1.2, 5e-5)
    for t in (1.0, 0.7321, 0.05):
        assert abs(coarse.rho1_at(t) - fine.rho1_at(t)) <= 1e-8


def test_integrals_at_zero(traj):
    assert integrals_at(traj, 0.0) == (0.0, 0.0)


def test_er_mode_analytic(traj_er):
    for t in (0.1, 0.5, 1.0):
        assert abs(traj_er.rho1_at(t) - math.exp(-2 * t)) <= 1e-12
        A, B = traj_er.integrals_at(t)
        assert abs(A - (t - (1 - math.exp(-4 * t)) / 4)) <= 1e-12
        assert abs(B - (1 - math.exp(-2 * t)) / 2) <= 1e-12


def test_exposure_identity(traj):
    # d/dt log rho1 = -2*rho1 - 2*(1 - rho1^2), so rho1 = exp(-2A - 2B)
    for t in (0.25, 0.5, 1.0):
        A, B = integrals_at(traj, t)
        assert abs(math.exp(-2 * A - 2 * B) - rho1_at(traj, t)) <= 1e-8


def test_rk4_refinement_ratio():
    vals = [solve_rho1(1.0, dt).rho1[-1] for dt in (0.04, 0.02, 0.01)]
    ratio = abs(vals[0] - vals[1]) / abs(vals[1] - vals[2])
    assert 12.0 <= ratio <= 20.0


def test_bounds_and_monotonicity(traj):
    assert np.all(np.diff(traj.rho1) < 0)
    assert np.all(traj.rho1 > 0) and np.all(traj.rho1 <= 1.0)
    assert np.all(np.diff(traj.A) >= 0) and np.all(np.diff(traj.B) >= 0)
    assert np.all(traj.A <= traj.t + 1e-12)
    assert np.all(traj.B <= traj.t + 1e-12)


def test_interpolation_between_grid_points_monotone(traj):
    ts = np.linspace(0.0, traj.t_max, 7777)
    vals = traj.rho1_at(ts)
    assert np.all(np.diff(vals) <= 0)


def test_invalid_arguments():
    with pytest.raises(ValueError):
        solve_rho1(0.0, 1e-4)
    with pytest.raises(ValueError):
        solve_rho1(1.0, -1e-4)
    with pytest.raises(ValueError):
        solve_rho1(1.0, 1e-4, mode="nope")


def test_out_of_range_time(traj):
    with pytest.raises(ValueError):
        rho1_at(traj, -0.5)
    with pytest.raises(ValueError):
        rho1_at(traj, traj.t_max + 0.1)


def test_vectorized_eval(traj):
    ts = np.array([0.0, 0.25, 0.5])
    vals = traj.rho1_at(ts)
    assert vals.shape == (3,)
    A, B = traj.integrals_at(ts)
    assert A.shape == (3,) and B.shape == (3,)


def test_csv_export(traj_er):
    buf = io.StringIO()
    write_csv(traj_er, buf, header_lines=["mode=er"])
    lines = [ln for ln in buf.getvalue().splitlines() if not ln.startswith("#")]
    assert lines[0] == "t,rho1,A,B"
    first = lines[1].split(",")
    assert float(first[0]) == 0.0 and float(first[1]) == 1.0
