"""Continuous-time component-density integrals for trees and forests.

For a forest H with edges arriving at times t_1..t_l <= t, the density of H
appearing as components at time t is the integral over [0,t]^l of

    prod_j gain_j(t_j) * exp(-F(t_1..t_l))

where gain_j = 2*(alpha_j - rho1(t_j)^2) with alpha_j = 2 exactly when both
endpoints of edge j are isolated among the earlier-arriving edges, and

    F = 2k*A(t) + 2 * sum_v B(t_v),   t_v = first arrival incident to v (t if none).

The k-vertex density mu_k is (1/k!) * sum over labeled trees, evaluated once
per isomorphism class. In er mode the uniform process has gain 2 for every
pair and unit exposure rate, so A is replaced by t and B by 0 pointwise.

Two independent evaluation routes are provided: plain Monte Carlo over the
cube, and a deterministic per-arrival-order evaluation over the ordered
simplex (the order-specific integrand factorizes per coordinate, so each
simplex integral is an iterated cumulative integral).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .trajectory import MODE_ER, Trajectory
from .trees import LabeledForest, isomorphism_classes

DEFAULT_MC_SAMPLES = 1_000_000
DEFAULT_QUAD_PANELS = 4096
DEFAULT_QUAD_MAX_EDGES = 4
DEFAULT_K_MAX = 8


class UnsupportedSizeError(ValueError):
    """Deterministic simplex route refused (too many edges)."""


@dataclass(frozen=True)
class ArrivalTimes:
    """One arrival time per edge of the forest, within [0, horizon].

    Ties are legal and broken by edge index during replay (they carry zero
    probability under the continuous model, any fixed rule is correct).
    """

    times: tuple[float, ...]

    def __init__(self, times):
        object.__setattr__(self, "times", tuple(float(x) for x in times))
        if any(x < 0 for x in self.times):
            raise ValueError("arrival times must be nonnegative")


@dataclass(frozen=True)
class MuEstimate:
    value: float
    std_error: float
    method: str  # mc | quad | closed_form_er
    samples: int = 0

    def __post_init__(self):
        if self.value < -1e-12 or self.std_error < 0:
            raise ValueError("density estimates must be nonnegative")


def _exposure_A(traj: Trajectory, t: float) -> float:
    if traj.mode == MODE_ER:
        return float(t)
    return traj.integrals_at(t)[0]


def _exposure_B(traj: Trajectory, x):
    if traj.mode == MODE_ER:
        return np.zeros_like(np.asarray(x, dtype=float))
    return traj._B_interp(np.clip(np.asarray(x, dtype=float), 0.0, traj.t_max))


def _pair_gain(traj: Trajectory, alpha, s):
    if traj.mode == MODE_ER:
        return 2.0 * np.ones_like(np.asarray(s, dtype=float))
    r = traj._rho1_interp(np.clip(np.asarray(s, dtype=float), 0.0, traj.t_max))
    return 2.0 * (np.asarray(alpha, dtype=float) - r * r)


def g_product(H: LabeledForest, arrivals: ArrivalTimes, traj: Trajectory) -> float:
    """Product of per-edge gains, replaying arrivals in time order
    (ties broken by edge index)."""
    times = arrivals.times
    if len(times) != H.n_edges:
        raise ValueError("one arrival time per edge required")
    order = sorted(range(len(times)), key=lambda j: (times[j], j))
    isolated = [True] * H.k
    val = 1.0
    for j in order:
        u, v = H.edges[j]
        alpha = 2 if (isolated[u] and isolated[v]) else 1
        val *= float(_pair_gain(traj, alpha, times[j]))
        isolated[u] = False
        isolated[v] = False
    return val


def f_hat(H: LabeledForest, arrivals: ArrivalTimes, traj: Trajectory, t: float) -> float:
    """Exposure exponent 2k*A(t) + 2*sum_v B(t_v)."""
    times = arrivals.times
    if len(times) != H.n_edges:
        raise ValueError("one arrival time per edge required")
    if any(x > t + 1e-12 for x in times):
        raise ValueError("arrivals must not exceed the horizon t")
    t_v = np.full(H.k, float(t))
    for j, (u, v) in enumerate(H.edges):
        t_v[u] = min(t_v[u], times[j])
        t_v[v] = min(t_v[v], times[j])
    return float(2.0 * H.k * _exposure_A(traj, t) + 2.0 * np.sum(_exposure_B(traj, t_v)))


def mu_graph_mc(H: LabeledForest, t: float, traj: Trajectory,
                samples: int = DEFAULT_MC_SAMPLES, seed: int = 0) -> MuEstimate:
    """Plain Monte Carlo over the arrival cube [0,t]^l.

    The vectorized core marks alpha_j = 2 when t_j attains the minimum
    arrival at both endpoints, which matches the replay rule except on
    exact float ties (probability ~2^-52 per sample, ignorable).
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    ell = H.n_edges
    k = H.k
    if ell == 0:
        # no integration variables; every vertex stays isolated to the horizon
        f0 = 2.0 * k * _exposure_A(traj, t) + 2.0 * k * float(_exposure_B(traj, t))
        return MuEstimate(value=math.exp(-f0), std_error=0.0, method="mc", samples=0)

    rng = np.random.default_rng([seed & 0xFFFFFFFF, H.k, ell])
    incident: list[list[int]] = [[] for _ in range(k)]
    for j, (u, v) in enumerate(H.edges):
        incident[u].append(j)
        incident[v].append(j)
    A_term = 2.0 * k * _exposure_A(traj, t)

    # accumulate over chunks so the working set stays bounded
    chunk = min(samples, 262_144)
    acc = acc_sq = 0.0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        times = rng.random((m, ell)) * t
        vmin = np.full((m, k), float(t))
        for v in range(k):
            if incident[v]:
                vmin[:, v] = times[:, incident[v]].min(axis=1)
        alpha = np.ones((m, ell))
        for j, (u, v) in enumerate(H.edges):
            tj = times[:, j]
            alpha[:, j] += (vmin[:, u] == tj) & (vmin[:, v] == tj)
        vals = _pair_gain(traj, alpha, times).prod(axis=1)
        vals *= np.exp(-(A_term + 2.0 * _exposure_B(traj, vmin).sum(axis=1)))
        acc += float(vals.sum())
        acc_sq += float((vals * vals).sum())
        done += m

    volume = float(t) ** ell
    mean = acc / samples
    if samples > 1:
        var = max(acc_sq - samples * mean * mean, 0.0) / (samples - 1)
        se = math.sqrt(var / samples)
    else:
        se = 0.0
    return MuEstimate(value=mean * volume, std_error=se * volume,
                      method="mc", samples=samples)


def mu_graph_quad(H: LabeledForest, t: float, traj: Trajectory,
                  panels: int = DEFAULT_QUAD_PANELS,
                  max_edges: int = DEFAULT_QUAD_MAX_EDGES) -> MuEstimate:
    """Deterministic evaluation: sum over the l! arrival orders of the
    ordered-simplex integral.

    For a fixed order the integrand is a per-coordinate product
    gain_j(t_j) * exp(-2*c_j*B(t_j)) (c_j = endpoints first touched by the
    j-th arriving edge), so each simplex integral reduces to l nested
    cumulative integrals, done by composite Simpson on a uniform grid.
    """
    ell = H.n_edges
    k = H.k
    if ell > max_edges:
        raise UnsupportedSizeError(
            f"simplex route supports at most {max_edges} edges, got {ell}")
    n_isolated = sum(1 for v in range(k) if all(v not in e for e in H.edges))
    A_t = _exposure_A(traj, t)
    B_t = float(_exposure_B(traj, t))
    prefactor = math.exp(-2.0 * k * A_t - 2.0 * n_isolated * B_t)
    if ell == 0:
        return MuEstimate(value=prefactor, std_error=0.0, method="quad")

    if panels % 2:
        panels += 1
    grid = np.linspace(0.0, float(t), panels + 1)
    h = grid[1] - grid[0]
    gain1 = _pair_gain(traj, 1.0, grid)
    gain2 = _pair_gain(traj, 2.0, grid)
    Bg = _exposure_B(traj, grid)
    iso_weight = (np.ones_like(grid), np.exp(-2.0 * Bg), np.exp(-4.0 * Bg))

    total = 0.0
    for order in itertools.permutations(range(ell)):
        isolated = [True] * k
        psi = np.ones_like(grid)
        for j in order:  # j-th arriving edge, innermost variable first
            u, v = H.edges[j]
            c = int(isolated[u]) + int(isolated[v])
            gain = gain2 if c == 2 else gain1
            psi = cumulative_simpson(gain * iso_weight[c] * psi, dx=h, initial=0.0)
            isolated[u] = False
            isolated[v] = False
        total += float(psi[-1])
    return MuEstimate(value=prefactor * total, std_error=0.0, method="quad")


def er_mode_mu_closed_form(k: int, t: float) -> float:
    """Per-shape-summed density of k-vertex trees in the uniform process:
    k^(k-2) * (2t)^(k-1) * exp(-2kt) / k!."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return float(k) ** (k - 2) * (2.0 * t) ** (k - 1) * math.exp(-2.0 * k * t) / math.factorial(k)


def er_mode_rho_closed_form(k: int, t: float) -> float:
    """Classical uniform-process vertex fraction in k-trees: k * mu_k."""
    return k * er_mode_mu_closed_form(k, t)


def mu_k0(k: int, t: float, traj: Trajectory, method: str = "auto",
          samples: int = DEFAULT_MC_SAMPLES, seed: int = 0,
          panels: int = DEFAULT_QUAD_PANELS,
          quad_max_edges: int = DEFAULT_QUAD_MAX_EDGES,
          k_max: int = DEFAULT_K_MAX) -> MuEstimate:
    """k-vertex tree-component density: (1/k!) * sum over labeled trees.

    Evaluates one representative per isomorphism class (the integral depends
    only on the shape) weighted by class size; per-(shape, t, method) results
    are memoized on the trajectory.
    """
    if not 1 <= k <= k_max:
        raise ValueError(f"k must be in [1, {k_max}]")
    if method == "auto":
        method = "quad" if k - 1 <= quad_max_edges else "mc"
    if method not in ("quad", "mc"):
        raise ValueError(f"unknown method {method!r}")

    total = 0.0
    var = 0.0
    n_samples = 0
    for ci, cls in enumerate(isomorphism_classes(k, k_max=k_max)):
        key = (cls.code, float(t), method, samples if method == "mc" else panels, seed)
        est = traj.mu_cache.get(key)
        if est is None:
            if method == "quad":
                est = mu_graph_quad(cls.representative, t, traj,
                                    panels=panels, max_edges=quad_max_edges)
            else:
                est = mu_graph_mc(cls.representative, t, traj,
                                  samples=samples, seed=seed * 1_000_003 + ci)
            traj.mu_cache[key] = est
        total += cls.count * est.value
        var += (cls.count * est.std_error) ** 2
        n_samples += est.samples
    kfact = math.factorial(k)
    return MuEstimate(value=total / kfact, std_error=math.sqrt(var) / kfact,
                      method=method, samples=n_samples)


def rho_k(k: int, t: float, traj: Trajectory, **kw) -> MuEstimate:
    """Limiting vertex fraction in k-vertex tree components: k * mu_k."""
    est = mu_k0(k, t, traj, **kw)
    return MuEstimate(value=k * est.value, std_error=k * est.std_error,
                      method=est.method, samples=est.samples)


def mu_table(k_max: int, t: float, traj: Trajectory, method: str = "auto",
             **kw) -> list[dict]:
    """Rows (k, t, method, mu, rho_k, std_error) for export."""
    rows = []
    for k in range(1, k_max + 1):
        est = mu_k0(k, t, traj, method=method, k_max=max(k_max, DEFAULT_K_MAX), **kw)
        rows.append({
            "k": k,
            "t": t,
            "method": est.method,
            "mu": est.value,
            "rho_k": k * est.value,
            "std_error": est.std_error,
        })
    return rows
