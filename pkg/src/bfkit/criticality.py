"""Near-critical analytics: tail fits, component-count sums, quantile
predictions, giant-fraction estimates, and the critical-time sweep.

The k -> infinity tree-density tail is modeled as
    rho_k(t) ~= gamma(t) * k^(-3/2) * exp(-delta(t) * k),
with (delta, gamma) obtained by weighted least squares in log space (they
have no closed form for the two-choice rule). Everything downstream
(lambda_K, c(t), extreme-value quantiles, giant fraction) consumes a
FitResult.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .process import RuleSpec, new_process, replica_seed

_REL_SE_FLOOR = 1e-6  # weight cap so exact (quadrature) points stay finite


@dataclass(frozen=True)
class FitResult:
    """Tail fit at fixed time t: rho_k ~= gamma * k^(-3/2) * exp(-delta*k)."""

    t: float
    delta: float
    gamma: float
    k_range: tuple[int, int]
    residual: float  # RMS of log-space residuals

    def rho(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return self.gamma * k ** (-1.5) * np.exp(-self.delta * k)

    def to_dict(self) -> dict:
        return {"t": self.t, "delta": self.delta, "gamma": self.gamma,
                "k_range": list(self.k_range), "residual": self.residual}


def _as_value_se(entry) -> tuple[float, float]:
    if hasattr(entry, "value"):
        return float(entry.value), float(entry.std_error)
    v, se = entry
    return float(v), float(se)


def fit_delta_gamma(rho_table: Mapping[int, object], t: float,
                    k_min: int, k_max: int) -> FitResult:
    """WLS of log rho_k + (3/2) log k against log gamma - delta*k.

    rho_table maps k to (value, std_error) pairs or MuEstimate-likes;
    weights come from relative standard errors.
    """
    if k_min < 3 or k_max <= k_min:
        raise ValueError("need k_max > k_min >= 3")
    if k_max - k_min < 2:
        raise ValueError("degenerate design: need at least 3 distinct k")
    ks, ys, ws = [], [], []
    for k in range(k_min, k_max + 1):
        if k not in rho_table:
            continue
        v, se = _as_value_se(rho_table[k])
        if v <= 0:
            raise ValueError(f"rho_{k} must be positive, got {v}")
        ks.append(float(k))
        ys.append(math.log(v) + 1.5 * math.log(k))
        ws.append(1.0 / max(se / v, _REL_SE_FLOOR) ** 2)
    if len(ks) < 3:
        raise ValueError("degenerate design: need at least 3 usable k")
    ks = np.array(ks)
    ys = np.array(ys)
    ws = np.array(ws)
    if np.ptp(ws) == 0.0:
        ws = np.ones_like(ws)
    sw = np.sqrt(ws)
    X = np.column_stack([np.ones_like(ks), -ks])
    coef, *_ = np.linalg.lstsq(X * sw[:, None], ys * sw, rcond=None)
    log_gamma, delta = float(coef[0]), float(coef[1])
    resid = ys - X @ coef
    return FitResult(t=float(t), delta=delta, gamma=math.exp(log_gamma),
                     k_range=(int(ks[0]), int(ks[-1])),
                     residual=float(np.sqrt(np.mean(resid**2))))


def lambda_K(K: int, n: float, rho_source: Callable[[int], float] | Mapping[int, float],
             fit: FitResult | None = None, k_switch: int | None = None,
             rel_tol: float = 1e-14, max_terms: int = 10_000_000) -> float:
    """Expected number of tree components of size >= K:
    sum_{k>=K} n * rho_k / k, using rho_source below k_switch and the fitted
    tail at and above it."""
    if K < 1 or n < 0:
        raise ValueError("need K >= 1 and n >= 0")
    if k_switch is not None and fit is None:
        raise ValueError("a tail fit is required when k_switch is set")
    if k_switch is None and fit is not None:
        k_switch = K

    total = 0.0
    if callable(rho_source):
        k = K
        streak = 0
        while k_switch is None or k < k_switch:
            term = float(rho_source(k)) / k
            total += term
            k += 1
            if k_switch is None:
                # source-only sum: stop once the terms have gone negligible
                streak = streak + 1 if term <= rel_tol * max(total, 1e-300) else 0
                if streak > 1000:
                    break
                if k - K > max_terms:
                    raise ValueError("direct sum did not converge")
    else:
        hi = math.inf if k_switch is None else k_switch
        for k in sorted(kk for kk in rho_source if K <= kk < hi):
            total += float(rho_source[k]) / k

    if fit is not None:
        if fit.delta <= 0:
            raise ValueError("fitted tail needs delta > 0")
        k = max(K, k_switch)
        while True:
            term = fit.gamma * k ** (-2.5) * math.exp(-fit.delta * k)
            total += term
            k += 1
            if term <= rel_tol * max(total, 1e-300) or k - K > max_terms:
                break
    return n * total


def lambda_K_asymptotic(K: int, n: float, fit: FitResult) -> float:
    """Closed-form tail equivalent n * alpha(t) * K^(-5/2) * exp(-delta*K)
    with alpha = gamma / (1 - exp(-delta)); accurate once delta*K is large."""
    if fit.delta <= 0:
        raise ValueError("needs delta > 0")
    alpha = fit.gamma / (1.0 - math.exp(-fit.delta))
    return n * alpha * float(K) ** (-2.5) * math.exp(-fit.delta * K)


def c_of_t(fit: FitResult, eps: float) -> float:
    """log beta(t), beta = gamma * delta^(5/2) / ((1 - e^-delta) * |eps|^3)."""
    if fit.delta <= 0:
        raise ValueError("singular input: delta must be positive")
    if eps == 0:
        raise ValueError("singular input: eps must be nonzero")
    beta = fit.gamma * fit.delta ** 2.5 / ((1.0 - math.exp(-fit.delta)) * abs(eps) ** 3)
    return math.log(beta)


def predict_L_quantile(n: float, eps: float, fit: FitResult, x: float) -> float:
    """Size quantile delta^-1 * (log(|eps|^3 n) - (5/2) loglog(|eps|^3 n)
    + c(t) + x); the largest component subcritically, the second largest
    supercritically."""
    if fit.delta <= 0:
        raise ValueError("singular input: delta must be positive")
    w = abs(eps) ** 3 * n
    if w <= math.e:
        raise ValueError(f"out of regime: |eps|^3 * n = {w:.3g} must exceed e")
    return (math.log(w) - 2.5 * math.log(math.log(w)) + c_of_t(fit, eps) + x) / fit.delta


@dataclass(frozen=True)
class GiantEstimate:
    value: float       # 1 - head - tail
    head_mass: float   # sum_{k<=k_cut} rho_k
    tail_mass: float   # fitted sum_{k>k_cut} rho_k (truncation estimate)
    k_cut: int


def rho_giant(t: float, k_cut: int,
              rho_source: Callable[[int], float] | Mapping[int, float],
              fit: FitResult | None = None) -> GiantEstimate:
    """Giant-component fraction 1 - sum_k rho_k(t), head summed directly
    and the k > k_cut tail taken from the fit (if supplied)."""
    if k_cut < 1:
        raise ValueError("k_cut must be >= 1")

    def rho_of(k: int) -> float:
        if callable(rho_source):
            return float(rho_source(k))
        return float(rho_source.get(k, 0.0))

    head = sum(rho_of(k) for k in range(1, k_cut + 1))
    tail = 0.0
    if fit is not None and fit.delta > 0:
        k = k_cut + 1
        while True:
            term = fit.gamma * k ** (-1.5) * math.exp(-fit.delta * k)
            tail += term
            k += 1
            if term <= 1e-14 * max(tail, 1e-300) or k > k_cut + 10_000_000:
                break
    return GiantEstimate(value=1.0 - head - tail, head_mass=head,
                         tail_mass=tail, k_cut=k_cut)


@dataclass(frozen=True)
class CriticalityReport:
    tc: float
    tc_ci: tuple[float, float]
    xi: float
    xi_se: float
    t_peaks: dict[int, float]
    config: dict = field(default_factory=dict)
    fits: tuple[FitResult, ...] = ()

    def to_dict(self) -> dict:
        return {
            "tc": self.tc,
            "tc_ci": list(self.tc_ci),
            "xi": self.xi,
            "xi_se": self.xi_se,
            "t_peaks": {str(k): v for k, v in self.t_peaks.items()},
            "fits": [f.to_dict() for f in self.fits],
            "config": self.config,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _sweep_one(n: int, rule: RuleSpec, seed: int, m_grid: np.ndarray):
    state = new_process(n, rule, seed)
    S = np.empty(len(m_grid))
    L1 = np.empty(len(m_grid))
    for i, m in enumerate(m_grid):
        state.run_until(int(m))
        sizes, _ = state.component_table()
        big = float(sizes.max())
        S[i] = (float(np.sum(sizes.astype(np.float64) ** 2)) - big * big) / n
        L1[i] = big
    return S, L1


def _peak_location(t_grid: np.ndarray, mean_S: np.ndarray, window: int) -> float:
    idx = int(np.argmax(mean_S))
    if idx == 0 or idx == len(t_grid) - 1:
        raise ValueError("out of range: sweep grid does not bracket the susceptibility peak")
    half = max(1, window // 2)
    lo = max(0, idx - half)
    hi = min(len(t_grid), idx + half + 1)
    a, b, _c = np.polyfit(t_grid[lo:hi], mean_S[lo:hi], 2)
    if a >= 0:  # no curvature; fall back to the grid argmax
        return float(t_grid[idx])
    vertex = -b / (2.0 * a)
    return float(np.clip(vertex, t_grid[lo], t_grid[hi - 1]))


def estimate_tc(rule: RuleSpec, t_grid: Sequence[float], n_ladder: Sequence[int],
                replicas: int = 32, master_seed: int = 1, threads: int | None = None,
                scaling_exponent: float = 1.0 / 3.0, peak_window: int = 9,
                xi_window: int = 10, bootstrap: int = 200) -> CriticalityReport:
    """Locate the critical time from a susceptibility sweep.

    Per n: mean (over replicas) of S(t) = (sum sizes^2 - L1^2)/n on the grid,
    peak located by a quadratic fit around the argmax. Peak locations are
    extrapolated with t_peak(n) = tc + a * n^(-scaling_exponent); the CI is a
    bootstrap over replicas. xi is the slope of mean L1/n against t - tc on
    the first xi_window grid points above tc (largest n).
    """
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    n_ladder = sorted(int(n) for n in n_ladder)
    if len(t_grid) < peak_window:
        raise ValueError("sweep grid too short")

    curves: dict[int, np.ndarray] = {}
    l1_curves: dict[int, np.ndarray] = {}
    jobs = [(n, r) for n in n_ladder for r in range(replicas)]

    def run_job(job):
        n, r = job
        m_grid = np.floor(t_grid * n).astype(np.int64)
        return _sweep_one(n, rule, replica_seed(master_seed + n, r), m_grid)

    if threads is None or threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run_job, jobs))
    else:
        results = [run_job(j) for j in jobs]
    for (n, r), (S, L1) in zip(jobs, results):
        curves.setdefault(n, np.zeros((replicas, len(t_grid))))[r] = S
        l1_curves.setdefault(n, np.zeros((replicas, len(t_grid))))[r] = L1

    def extrapolate(peaks: dict[int, float]) -> float:
        if len(peaks) == 1:
            return next(iter(peaks.values()))
        xs = np.array([n ** (-scaling_exponent) for n in peaks])
        ys = np.array([peaks[n] for n in peaks])
        slope, intercept = np.polyfit(xs, ys, 1)
        return float(intercept)

    t_peaks = {n: _peak_location(t_grid, curves[n].mean(axis=0), peak_window)
               for n in n_ladder}
    tc = extrapolate(t_peaks)

    rng = np.random.default_rng(master_seed)
    boot = []
    for _ in range(bootstrap):
        try:
            peaks_b = {}
            for n in n_ladder:
                pick = rng.integers(0, replicas, size=replicas)
                peaks_b[n] = _peak_location(t_grid, curves[n][pick].mean(axis=0), peak_window)
            boot.append(extrapolate(peaks_b))
        except ValueError:
            continue
    if boot:
        lo, hi = np.percentile(boot, [2.5, 97.5])
        tc_ci = (float(lo), float(hi))
    else:
        tc_ci = (tc, tc)

    # slope of the giant fraction just above tc, on the largest n
    n_big = n_ladder[-1]
    rho_hat = l1_curves[n_big].mean(axis=0) / n_big
    above = np.where(t_grid > tc)[0][:xi_window]
    if len(above) >= 3:
        x = t_grid[above] - tc
        y = rho_hat[above]
        A = np.column_stack([np.ones_like(x), x])
        coef, res, *_ = np.linalg.lstsq(A, y, rcond=None)
        xi = float(coef[1])
        dof = len(x) - 2
        if dof > 0 and len(res):
            s2 = float(res[0]) / dof
            cov = s2 * np.linalg.inv(A.T @ A)
            xi_se = float(math.sqrt(cov[1, 1]))
        else:
            xi_se = float("nan")
    else:
        xi, xi_se = float("nan"), float("nan")

    return CriticalityReport(
        tc=tc, tc_ci=tc_ci, xi=xi, xi_se=xi_se, t_peaks=t_peaks,
        config={
            "rule": rule.to_dict(),
            "t_grid": [float(t_grid[0]), float(t_grid[-1]), len(t_grid)],
            "n_ladder": n_ladder,
            "replicas": replicas,
            "master_seed": master_seed,
            "scaling_exponent": scaling_exponent,
        })
