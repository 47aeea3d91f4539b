"""Isolated-vertex share ODE and its cumulative integrals.

rho1(t) solves  drho1/dt = -2*rho1^2 - 2*(1 - rho1^2)*rho1,  rho1(0) = 1,
the deterministic limit of I_m/n for the two-choice rule. Alongside rho1 we
accumulate

    A(t) = integral_0^t (1 - rho1(s)^2) ds
    B(t) = integral_0^t rho1(s) ds

which are the two kernels every component-density integrand needs. All three
are integrated together with classical RK4 (the quadrature components reuse
the same stage evaluations, so A and B carry Simpson-level accuracy).

In "er" mode the uniform one-choice process applies: rho1(t) = exp(-2t)
analytically, with A and B its exact integrals.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property
from typing import IO, Iterable

import numpy as np
from scipy.interpolate import PchipInterpolator

MODE_BF = "bohman_frieze"
MODE_ER = "er"

_EDGE_TOL = 1e-9  # slack for t_max round-off at the grid edge


def rho1_rate(r):
    """Right-hand side of the isolated-share ODE."""
    return -2.0 * r * r - 2.0 * (1.0 - r * r) * r


@dataclass(frozen=True)
class Trajectory:
    """Immutable grid solution; freely shareable across threads."""

    t_max: float
    dt: float
    mode: str
    t: np.ndarray
    rho1: np.ndarray
    A: np.ndarray
    B: np.ndarray

    @cached_property
    def _rho1_interp(self):
        return PchipInterpolator(self.t, self.rho1, extrapolate=False)

    @cached_property
    def _A_interp(self):
        return PchipInterpolator(self.t, self.A, extrapolate=False)

    @cached_property
    def _B_interp(self):
        return PchipInterpolator(self.t, self.B, extrapolate=False)

    @cached_property
    def mu_cache(self) -> dict:
        # shared memo for per-isomorphism-class density integrals
        return {}

    def _clip(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < -_EDGE_TOL) or np.any(x > self.t_max + _EDGE_TOL):
            raise ValueError(f"time out of range [0, {self.t_max}]")
        return np.clip(x, 0.0, self.t_max)

    def rho1_at(self, t):
        """Monotone-cubic interpolation; exact at grid points."""
        out = self._rho1_interp(self._clip(t))
        return float(out) if np.isscalar(t) or np.ndim(t) == 0 else out

    def integrals_at(self, t):
        """(A(t), B(t)), both nondecreasing in t."""
        x = self._clip(t)
        a, b = self._A_interp(x), self._B_interp(x)
        if np.isscalar(t) or np.ndim(t) == 0:
            return float(a), float(b)
        return a, b


def solve_rho1(t_max: float = 2.0, dt: float = 1e-4, mode: str = MODE_BF) -> Trajectory:
    """Solve on a uniform grid. dt is adjusted to divide t_max exactly."""
    if t_max <= 0 or dt <= 0:
        raise ValueError("t_max and dt must be positive")
    if mode not in (MODE_BF, MODE_ER):
        raise ValueError(f"unknown trajectory mode {mode!r}")
    n_steps = max(1, int(round(t_max / dt)))
    h = t_max / n_steps
    t = np.linspace(0.0, t_max, n_steps + 1)

    if mode == MODE_ER:
        rho = np.exp(-2.0 * t)
        A = t - (1.0 - np.exp(-4.0 * t)) / 4.0
        B = (1.0 - np.exp(-2.0 * t)) / 2.0
        return Trajectory(t_max=t_max, dt=h, mode=mode, t=t, rho1=rho, A=A, B=B)

    rho = np.empty(n_steps + 1)
    A = np.empty(n_steps + 1)
    B = np.empty(n_steps + 1)
    rho[0], A[0], B[0] = 1.0, 0.0, 0.0
    r, a, b = 1.0, 0.0, 0.0
    for i in range(n_steps):
        k1 = rho1_rate(r)
        r2 = r + 0.5 * h * k1
        k2 = rho1_rate(r2)
        r3 = r + 0.5 * h * k2
        k3 = rho1_rate(r3)
        r4 = r + h * k3
        k4 = rho1_rate(r4)
        # A' = 1 - rho^2 and B' = rho, advanced with the same RK4 stages
        a += h / 6.0 * ((1 - r * r) + 2 * (1 - r2 * r2) + 2 * (1 - r3 * r3) + (1 - r4 * r4))
        b += h / 6.0 * (r + 2 * r2 + 2 * r3 + r4)
        r += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        rho[i + 1], A[i + 1], B[i + 1] = r, a, b
    return Trajectory(t_max=t_max, dt=h, mode=mode, t=t, rho1=rho, A=A, B=B)


def rho1_at(traj: Trajectory, t):
    return traj.rho1_at(t)


def integrals_at(traj: Trajectory, t):
    return traj.integrals_at(t)


def write_csv(traj: Trajectory, fh: IO[str], header_lines: Iterable[str] = ()) -> None:
    """Rows (t, rho1, A, B); provenance lines are emitted as '# key=value'."""
    for line in header_lines:
        fh.write(f"# {line}\n")
    w = csv.writer(fh)
    w.writerow(["t", "rho1", "A", "B"])
    for i in range(len(traj.t)):
        w.writerow([f"{traj.t[i]:.10g}", f"{traj.rho1[i]:.12g}",
                    f"{traj.A[i]:.12g}", f"{traj.B[i]:.12g}"])
