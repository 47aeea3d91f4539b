"""Seeded parallel replica experiments and the statistical checks run on them.

Every check returns a CheckReport carrying (statistic, threshold, pass/fail,
seed) plus the regime-guard values of the config, so no check can pass
silently and sub-asymptotic configurations are visible in the report.
Replicas use decorrelated seed streams and results are merged in replica
order, so reports are bit-reproducible regardless of thread scheduling.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.stats import chi2 as _chi2

from .criticality import FitResult, c_of_t
from .measure import MuEstimate
from .process import ComponentCensus, ProcessState, RuleSpec, new_process, replica_seed
from .trajectory import Trajectory

GUARD_LARGE = 10.0  # below this a guard value triggers a warning


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment: n vertices, a rule, a snapshot time, replicas.

    omega is a concrete number standing in for the slowly-growing parameter;
    K defaults to floor(sqrt(n)/omega^2). K1/K2 bound counting windows,
    eps is the (signed) distance to the critical time when a check needs it.
    """

    n: int
    rule: RuleSpec = field(default_factory=RuleSpec.bohman_frieze)
    t: float | None = None
    m: int | None = None
    replicas: int = 100
    master_seed: int = 1
    omega: float = 10.0
    K: int | None = None
    K1: int | None = None
    K2: int | None = None
    x_grid: tuple[float, ...] | None = None
    eps: float | None = None
    times: tuple[float, ...] | None = None
    record_trace: bool = False
    census_top: int = 8

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if (self.t is None) == (self.m is None):
            raise ValueError("give exactly one of t or m")
        if self.omega <= 0:
            raise ValueError("omega must be positive")

    @property
    def m_final(self) -> int:
        if self.m is not None:
            return int(self.m)
        return int(math.floor(self.t * self.n))

    @property
    def t_final(self) -> float:
        return self.m_final / self.n

    def k_threshold(self) -> int:
        return self.K if self.K is not None else int(math.sqrt(self.n) / self.omega**2)

    def snapshot_steps(self) -> list[int]:
        steps = {self.m_final}
        if self.times:
            steps.update(int(math.floor(x * self.n)) for x in self.times)
        return sorted(steps)

    def guards(self) -> dict:
        """Regime-guard values; asymptotic claims are only proven when these
        are large, so reports warn (never fail) on small values."""
        g: dict[str, float | None] = {}
        if self.eps is not None:
            g["abs_eps_n14_logn"] = abs(self.eps) * self.n**0.25 / math.sqrt(math.log(self.n))
            g["eps6_n"] = self.eps**6 * self.n
        else:
            g["abs_eps_n14_logn"] = None
            g["eps6_n"] = None
        K = self.k_threshold()
        g["sqrtn_over_omega_K"] = math.sqrt(self.n) / (self.omega * K) if K > 0 else None
        g["warnings"] = [k for k, v in g.items()
                         if isinstance(v, float) and v < GUARD_LARGE]
        return g

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rule"] = self.rule.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        d = dict(d)
        if "rule" in d and isinstance(d["rule"], Mapping):
            d["rule"] = RuleSpec.from_dict(d["rule"])
        for key in ("x_grid", "times"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class ReplicaResults:
    config: ExperimentConfig
    seeds: tuple[int, ...]
    censuses: tuple[tuple[ComponentCensus, ...], ...]  # [replica][snapshot]
    traces: tuple[np.ndarray, ...] | None = None

    @property
    def replicas(self) -> int:
        return len(self.censuses)

    def final_censuses(self) -> list[ComponentCensus]:
        return [row[-1] for row in self.censuses]

    def at_time(self, t: float) -> list[ComponentCensus]:
        m = int(math.floor(t * self.config.n))
        for i, c in enumerate(self.censuses[0]):
            if c.m == m:
                return [row[i] for row in self.censuses]
        raise KeyError(f"no snapshot at t={t} (m={m})")


def run_replicas(config: ExperimentConfig, threads: int | None = None) -> ReplicaResults:
    """Independent replicas on decorrelated seed streams, merged in order."""
    steps = config.snapshot_steps()
    seeds = tuple(replica_seed(config.master_seed, r) for r in range(config.replicas))

    def one(seed: int):
        state = new_process(config.n, config.rule, seed)
        trace = np.empty(config.m_final, dtype=np.int32) if config.record_trace else None
        censuses = []
        prev = 0
        for m in steps:
            seg = trace[prev:m] if trace is not None else None
            state.run_until(m, trace=seg)
            prev = m
            censuses.append(state.census(largest=config.census_top))
        return tuple(censuses), trace

    if threads is None or threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(one, seeds))
    else:
        rows = [one(s) for s in seeds]
    censuses = tuple(r[0] for r in rows)
    traces = tuple(r[1] for r in rows) if config.record_trace else None
    return ReplicaResults(config=config, seeds=seeds, censuses=censuses, traces=traces)


@dataclass
class CheckReport:
    name: str
    passed: bool
    statistic: dict
    threshold: dict
    seed: int
    guards: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return json.loads(json.dumps({
            "name": self.name, "passed": bool(self.passed),
            "statistic": self.statistic, "threshold": self.threshold,
            "seed": self.seed, "guards": self.guards, "details": self.details,
        }, default=_coerce))

    def summary(self) -> str:
        stats = ", ".join(f"{k}={_fmt(v)}" for k, v in self.statistic.items())
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {stats}"


def _coerce(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not JSON-serializable: {type(x)}")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, dict):
        return "{" + ", ".join(f"{k}: {_fmt(x)}" for k, x in v.items()) + "}"
    return str(v)


def gumbel_cdf(x):
    return np.exp(-np.exp(-np.asarray(x, dtype=float)))


def ks_distance(samples: np.ndarray, cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """One-sample Kolmogorov-Smirnov sup distance to a continuous CDF."""
    xs = np.sort(np.asarray(samples, dtype=float))
    n = len(xs)
    F = cdf(xs)
    upper = np.max(np.arange(1, n + 1) / n - F)
    lower = np.max(F - np.arange(0, n) / n)
    return float(max(upper, lower))


def _counts_by_k(censuses: Sequence[ComponentCensus], k_values: Sequence[int]):
    """(tree, nontree) count arrays of shape [replica][k]."""
    T = np.zeros((len(censuses), len(k_values)))
    C = np.zeros((len(censuses), len(k_values)))
    for i, c in enumerate(censuses):
        for j, k in enumerate(k_values):
            T[i, j] = c.tree_counts.get(k, 0)
            C[i, j] = c.nontree_counts.get(k, 0)
    return T, C


def check_concentration(results: ReplicaResults, traj: Trajectory,
                        omega: float | None = None,
                        min_within: float = 0.99) -> CheckReport:
    """Per replica, sup_m |I_m/n - rho1(m/n)| * sqrt(n) against omega."""
    if results.traces is None:
        raise ValueError("config must set record_trace for the concentration check")
    cfg = results.config
    omega = cfg.omega if omega is None else omega
    n = cfg.n
    M = cfg.m_final
    ts = np.arange(1, M + 1) / n
    rho_grid = traj.rho1_at(ts)
    devs = np.empty(results.replicas)
    for r, trace in enumerate(results.traces):
        devs[r] = np.max(np.abs(trace / n - rho_grid)) * math.sqrt(n)
    within = float(np.mean(devs <= omega))
    return CheckReport(
        name="concentration",
        passed=within >= min_within,
        statistic={"fraction_within": within, "max_dev": float(devs.max()),
                   "mean_dev": float(devs.mean())},
        threshold={"omega": omega, "min_within": min_within},
        seed=cfg.master_seed,
        guards=cfg.guards(),
        details={"n": n, "C": M / n, "replicas": results.replicas},
    )


def check_tree_counts(results: ReplicaResults, mu_table: Mapping[int, MuEstimate],
                      z_max: float = 3.0) -> CheckReport:
    """Mean tree-component counts against n * mu_k from the integrals."""
    cfg = results.config
    censuses = results.final_censuses()
    ks = sorted(mu_table)
    T, _ = _counts_by_k(censuses, ks)
    zs = {}
    for j, k in enumerate(ks):
        est = mu_table[k]
        pred = cfg.n * est.value
        se_pred = cfg.n * est.std_error
        mean = float(T[:, j].mean())
        se_sim = float(T[:, j].std(ddof=1) / math.sqrt(results.replicas))
        denom = math.hypot(se_sim, se_pred)
        if denom == 0.0:  # deterministic snapshot against an exact value
            zs[k] = 0.0 if mean == pred else math.inf
        else:
            zs[k] = (mean - pred) / denom
    worst = max(abs(z) for z in zs.values())
    return CheckReport(
        name="tree_counts",
        passed=worst <= z_max,
        statistic={"z_by_k": {str(k): float(z) for k, z in zs.items()},
                   "max_abs_z": float(worst)},
        threshold={"z_max": z_max},
        seed=cfg.master_seed,
        guards=cfg.guards(),
        details={"n": cfg.n, "t": cfg.t_final, "replicas": results.replicas},
    )


def check_pair_factorization(results: ReplicaResults, mu_table: Mapping[int, MuEstimate],
                             pairs: Sequence[tuple[int, int]] = ((2, 2), (2, 3), (3, 3)),
                             z_max: float = 3.0) -> CheckReport:
    """Ordered-pair counts T_{k1}T_{k2} - [k1=k2] T_{k1} against n^2 mu mu."""
    cfg = results.config
    censuses = results.final_censuses()
    ks = sorted({k for p in pairs for k in p})
    T, _ = _counts_by_k(censuses, ks)
    col = {k: i for i, k in enumerate(ks)}
    zs = {}
    for k1, k2 in pairs:
        prod = T[:, col[k1]] * T[:, col[k2]]
        if k1 == k2:
            prod = prod - T[:, col[k1]]
        m1, m2 = mu_table[k1], mu_table[k2]
        pred = cfg.n**2 * m1.value * m2.value
        se_pred = cfg.n**2 * math.hypot(m1.std_error * m2.value, m2.std_error * m1.value)
        mean = float(prod.mean())
        se_sim = float(prod.std(ddof=1) / math.sqrt(results.replicas))
        denom = math.hypot(se_sim, se_pred)
        if denom == 0.0:
            zs[(k1, k2)] = 0.0 if mean == pred else math.inf
        else:
            zs[(k1, k2)] = (mean - pred) / denom
    worst = max(abs(z) for z in zs.values())
    return CheckReport(
        name="pair_factorization",
        passed=worst <= z_max,
        statistic={"z_by_pair": {f"{a},{b}": float(z) for (a, b), z in zs.items()},
                   "max_abs_z": float(worst)},
        threshold={"z_max": z_max},
        seed=cfg.master_seed,
        guards=cfg.guards(),
        details={"n": cfg.n, "t": cfg.t_final, "replicas": results.replicas},
    )


def check_poisson_window(results: ReplicaResults, K1: int | None = None,
                         K2: int | None = None, lam: float = 1.0,
                         p0_tol: float = 0.05, y_zero_min: float = 0.99) -> CheckReport:
    """Tree count X in [K1,K2) against Poisson(lam): P(X=0) gap, a chi-square
    over {0,1,2,>=3}, and non-tree count Y=0 frequency. The window defaults
    to the config's K1/K2."""
    cfg = results.config
    K1 = cfg.K1 if K1 is None else K1
    K2 = cfg.K2 if K2 is None else K2
    if K1 is None or K2 is None or not (1 <= K1 < K2):
        raise ValueError("need a window 1 <= K1 < K2")
    censuses = results.final_censuses()
    X = np.array([c.count_in(K1, K2, tree=True) for c in censuses])
    Y = np.array([c.count_in(K1, K2, tree=False) for c in censuses])
    R = len(X)
    p0_emp = float(np.mean(X == 0))
    p0_gap = abs(p0_emp - math.exp(-lam))
    probs = [math.exp(-lam), lam * math.exp(-lam), lam**2 / 2 * math.exp(-lam)]
    probs.append(1.0 - sum(probs))
    obs = [int(np.sum(X == 0)), int(np.sum(X == 1)), int(np.sum(X == 2)),
           int(np.sum(X >= 3))]
    chi = sum((o - R * p) ** 2 / (R * p) for o, p in zip(obs, probs) if p > 0)
    y_zero = float(np.mean(Y == 0))
    lam_warn = not (0.25 <= lam <= 4.0)
    return CheckReport(
        name="poisson_window",
        passed=(p0_gap <= p0_tol) and (y_zero >= y_zero_min),
        statistic={"p0_emp": p0_emp, "p0_poisson": math.exp(-lam),
                   "p0_gap": p0_gap, "chi2_cells": float(chi),
                   "chi2_crit_95_df3": float(_chi2.ppf(0.95, 3)),
                   "mean_X": float(X.mean()), "y_zero_fraction": y_zero},
        threshold={"p0_tol": p0_tol, "y_zero_min": y_zero_min, "lambda": lam},
        seed=cfg.master_seed,
        guards=cfg.guards(),
        details={"K1": K1, "K2": K2, "replicas": R,
                 "lambda_out_of_theta1_range": lam_warn,
                 "observed_cells_0_1_2_3plus": obs},
    )


def check_nontree_scarcity(results: ReplicaResults, k_max: int = 5,
                           const: float = 20.0) -> CheckReport:
    """mean C_k / mean T_k <= const * k^2 / n for k = 1..k_max."""
    cfg = results.config
    censuses = results.final_censuses()
    ks = list(range(1, k_max + 1))
    T, C = _counts_by_k(censuses, ks)
    ratios, implied = {}, {}
    ok = True
    for j, k in enumerate(ks):
        t_mean = float(T[:, j].mean())
        c_mean = float(C[:, j].mean())
        if t_mean == 0:
            ratios[k] = float("nan")
            continue
        ratio = c_mean / t_mean
        ratios[k] = ratio
        implied[k] = ratio * cfg.n / k**2
        if ratio > const * k**2 / cfg.n:
            ok = False
    return CheckReport(
        name="nontree_scarcity",
        passed=ok,
        statistic={"ratio_by_k": {str(k): v for k, v in ratios.items()},
                   "implied_const_by_k": {str(k): v for k, v in implied.items()}},
        threshold={"const_k2_over_n": const},
        seed=cfg.master_seed,
        guards=cfg.guards(),
        details={"n": cfg.n, "t": cfg.t_final, "replicas": results.replicas},
    )


def check_gap(results: ReplicaResults, K: int | None = None,
              snapshot_t: float | None = None,
              max_violation_fraction: float = 0.0) -> CheckReport:
    """Fraction of replicas holding any component with size in [K, 3K]."""
    cfg = results.config
    K = cfg.k_threshold() if K is None else K
    censuses = (results.at_time(snapshot_t) if snapshot_t is not None
                else results.final_censuses())
    viol = np.array([c.count_in(K, 3 * K + 1) > 0 for c in censuses])
    frac = float(viol.mean())
    return CheckReport(
        name="gap",
        passed=frac <= max_violation_fraction,
        statistic={"violation_fraction": frac, "violations": int(viol.sum())},
        threshold={"max_violation_fraction": max_violation_fraction, "K": K},
        seed=cfg.master_seed,
        guards=cfg.guards(),
        details={"n": cfg.n, "t": censuses[0].m / cfg.n, "replicas": len(censuses),
                 "window_inclusive": [K, 3 * K]},
    )


def check_small_vertex_mass(results: ReplicaResults, rho_value: float,
                            K: int | None = None, bound_const: float = 10.0,
                            min_within: float = 0.95) -> CheckReport:
    """Vertex-mass split at K: partition identity per replica, and
    |N_{>K} - rho*n| <= bound_const * eps^(-1/2) * n^(3/4) frequency."""
    cfg = results.config
    if cfg.eps is None or cfg.eps <= 0:
        raise ValueError("config.eps must be positive (supercritical) for this check")
    K = cfg.k_threshold() if K is None else K
    censuses = results.final_censuses()
    S_T, S_C, N_gt = [], [], []
    identity_ok = True
    for c in censuses:
        st = sum(k * cnt for k, cnt in c.tree_counts.items() if k <= K)
        sc = sum(k * cnt for k, cnt in c.nontree_counts.items() if k <= K)
        ngt = (sum(k * cnt for k, cnt in c.tree_counts.items() if k > K)
               + sum(k * cnt for k, cnt in c.nontree_counts.items() if k > K))
        if st + sc + ngt != cfg.n:
            identity_ok = False
        S_T.append(st)
        S_C.append(sc)
        N_gt.append(ngt)
    N_gt = np.array(N_gt, dtype=float)
    bound = bound_const * abs(cfg.eps) ** -0.5 * cfg.n**0.75
    within = float(np.mean(np.abs(N_gt - rho_value * cfg.n) <= bound))
    return CheckReport(
        name="small_vertex_mass",
        passed=identity_ok and within >= min_within,
        statistic={"partition_identity": identity_ok,
                   "fraction_within_bound": within,
                   "mean_N_gt_over_n": float(N_gt.mean() / cfg.n),
                   "rho_prediction": rho_value,
                   "mean_S_T": float(np.mean(S_T)), "mean_S_C": float(np.mean(S_C))},
        threshold={"bound": bound, "min_within": min_within,
                   "bound_const": bound_const},
        seed=cfg.master_seed,
        guards=cfg.guards(),
        details={"n": cfg.n, "K": K, "eps": cfg.eps, "replicas": len(censuses)},
    )


def extreme_value_experiment(results: ReplicaResults, fit: FitResult,
                             side: str = "sub", ks_max: float = 0.15,
                             lambda_fn: Callable[[int], float] | None = None) -> CheckReport:
    """Gumbel check of the largest (subcritical) or second largest
    (supercritical) component.

    Each observation L maps to x_hat = delta*L - (log(|eps|^3 n)
    - (5/2) loglog(|eps|^3 n) + c(t)); reports the KS distance of the x_hat
    sample to exp(-exp(-x)). If lambda_fn is given, a diagnostic transform
    -log lambda(L+1) (the exact count route, no loglog truncation) is also
    reported.
    """
    cfg = results.config
    if cfg.eps is None:
        raise ValueError("config.eps is required")
    if side not in ("sub", "super"):
        raise ValueError("side must be 'sub' or 'super'")
    w = abs(cfg.eps) ** 3 * cfg.n
    if w <= math.e:
        raise ValueError(f"out of regime: |eps|^3 * n = {w:.3g} must exceed e")
    censuses = results.final_censuses()
    L = np.array([c.L1 if side == "sub" else c.L2 for c in censuses], dtype=float)
    shift = math.log(w) - 2.5 * math.log(math.log(w)) + c_of_t(fit, cfg.eps)
    x_hat = fit.delta * L - shift
    D = ks_distance(x_hat, gumbel_cdf)
    stats = {"ks": D, "mean_x_hat": float(x_hat.mean()),
             "std_x_hat": float(x_hat.std(ddof=1)),
             "mean_L": float(L.mean()), "std_L": float(L.std(ddof=1))}
    if lambda_fn is not None:
        lam_vals = np.array([lambda_fn(int(l) + 1) for l in L])
        with np.errstate(divide="ignore"):
            x_alt = -np.log(lam_vals)
        finite = np.isfinite(x_alt)
        stats["ks_exact_lambda"] = ks_distance(x_alt[finite], gumbel_cdf)
    details = {"n": cfg.n, "eps": cfg.eps, "replicas": len(L),
               "delta": fit.delta, "gamma": fit.gamma, "shift": shift}
    if cfg.x_grid:
        details["cdf_at_x_grid"] = {
            str(x): {"empirical": float(np.mean(x_hat <= x)),
                     "gumbel": float(gumbel_cdf(x))}
            for x in cfg.x_grid}
    return CheckReport(
        name=f"extreme_value_{side}",
        passed=D <= ks_max,
        statistic=stats,
        threshold={"ks_max": ks_max},
        seed=cfg.master_seed,
        guards=cfg.guards(),
        details=details,
    )


def check_conditional_edge_frequencies(state: ProcessState, trials: int = 10_000_000,
                                       z_max: float = 3.0) -> CheckReport:
    """Selection frequencies at a frozen state against the exact two-draw
    mechanism, split by whether a pair joins two isolated vertices.

    Exact per-pair probabilities: with q = 1/C(n,2) and P_iso = C(I,2)*q,
    an isolated-isolated pair is chosen with probability q*(2 - P_iso) and
    any other pair with q*(1 - P_iso). The asymptotic per-pair forms
    2/n^2*(2 - (I/n)^2) and 2/n^2*(1 - (I/n)^2) are reported alongside.
    """
    n = state.n
    counts = state.sample_candidates(trials)
    iso = np.array([state.is_isolated(v) for v in range(n)])
    pair_iso = np.zeros(len(counts), dtype=bool)
    for u in range(n):
        for v in range(u + 1, n):
            pair_iso[state.pair_index(u, v)] = iso[u] and iso[v]
    I = int(iso.sum())
    npairs = n * (n - 1) // 2
    q = 1.0 / npairs
    p_first_iso = math.comb(I, 2) * q
    exact = {"iso": q * (2.0 - p_first_iso), "other": q * (1.0 - p_first_iso)}
    asym = {"iso": 2.0 / n**2 * (2.0 - (I / n) ** 2),
            "other": 2.0 / n**2 * (1.0 - (I / n) ** 2)}
    zs, freqs = {}, {}
    for label, mask in (("iso", pair_iso), ("other", ~pair_iso)):
        n_class = int(mask.sum())
        if n_class == 0:
            continue
        P = exact[label] * n_class
        obs = int(counts[mask].sum())
        se = math.sqrt(trials * P * max(1.0 - P, 0.0))
        if se == 0.0:  # class covers all pairs: count is deterministic
            zs[label] = 0.0 if obs == round(trials * P) else math.inf
        else:
            zs[label] = (obs - trials * P) / se
        freqs[label] = obs / trials / n_class
    total_ok = int(counts.sum()) == trials
    worst = max(abs(z) for z in zs.values())
    return CheckReport(
        name="conditional_edge_frequencies",
        passed=total_ok and worst <= z_max,
        statistic={"z_by_class": {k: float(v) for k, v in zs.items()},
                   "max_abs_z": float(worst),
                   "per_pair_freq": freqs,
                   "counts_sum_to_trials": total_ok},
        threshold={"z_max": z_max},
        seed=state.seed,
        guards={},
        details={"n": n, "I": I, "trials": trials,
                 "exact_per_pair": exact, "asymptotic_per_pair": asym},
    )


def with_seed(config: ExperimentConfig, master_seed: int) -> ExperimentConfig:
    return replace(config, master_seed=master_seed)
