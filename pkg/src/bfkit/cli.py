"""Command-line front door.

Subcommands: simulate, trajectory, mu, critical, verify. Every run echoes
its fully resolved configuration as JSON on stderr so outputs can be
reproduced exactly; CSV outputs carry "# key=value" provenance lines before
the header row. Exit codes: 0 success, 1 verify-check failure, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from typing import IO

import numpy as np

from . import __version__
from . import criticality, harness, measure, trajectory
from .process import RuleSpec, new_process

SCHEMA = f"bfkit.v1 ({__version__})"


class ConfigError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"bad config file {path}: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return cfg


def _resolve(args: argparse.Namespace, file_cfg: dict, keys: list[str]) -> dict:
    """Flag value if given on the command line, else config file, else default."""
    out = {}
    for key in keys:
        flag_val = getattr(args, key, None)
        if flag_val is not None:
            out[key] = flag_val
        elif key in file_cfg:
            out[key] = file_cfg[key]
    return out


def _make_rule(name) -> RuleSpec:
    if isinstance(name, dict):  # inline rule object from a config file
        return RuleSpec.from_dict(name)
    if name in ("bf", "bohman_frieze"):
        return RuleSpec.bohman_frieze()
    if name in ("er", "er_always_second"):
        return RuleSpec.er_always_second()
    if name.startswith("custom:"):
        path = name.split(":", 1)[1]
        if not os.path.exists(path):
            raise ConfigError(f"rule table file not found: {path}")
        with open(path) as fh:
            return RuleSpec.from_dict(json.load(fh))
    raise ConfigError(f"unknown rule {name!r} (use bf, er, or custom:<file>)")


def _echo_config(cfg: dict) -> None:
    print("config: " + json.dumps(cfg, sort_keys=True, default=str), file=sys.stderr)


def _open_out(path: str | None) -> IO[str]:
    return open(path, "w") if path else sys.stdout


def _write_rows_csv(fh: IO[str], fieldnames: list[str], rows: list[dict], prov: dict) -> None:
    fh.write(f"# schema={SCHEMA}\n")
    for k, v in prov.items():
        fh.write(f"# {k}={json.dumps(v, default=str)}\n")
    w = csv.DictWriter(fh, fieldnames=fieldnames)
    w.writeheader()
    for row in rows:
        w.writerow(row)


def _write_json(fh: IO[str], payload: dict) -> None:
    payload = {"schema": SCHEMA, **payload}
    json.dump(payload, fh, indent=2, default=str)
    fh.write("\n")


def _write_gnuplot_stub(path: str, data_path: str | None, plots: list[tuple[int, int, str]],
                        xlabel: str, ylabel: str, logy: bool = False) -> None:
    """Plotting stays out of process; emit a gnuplot stub next to the data."""
    data = data_path or "data.csv"
    lines = [
        f"# gnuplot stub generated by bfkit ({SCHEMA})",
        "set datafile separator ','",
        "set datafile commentschars '#'",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set key top right",
    ]
    if logy:
        lines.append("set logscale y")
    terms = ", ".join(f"'{data}' using {x}:{y} with lines title '{label}'"
                      for x, y, label in plots)
    lines.append(f"plot {terms}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ---------------------------------------------------------------- commands

def cmd_trajectory(args) -> int:
    file_cfg = _load_config(args.config)
    cfg = {"t_max": 2.0, "dt": 1e-4, "mode": "bohman_frieze",
           "format": "csv", "out": None, "gnuplot": None}
    cfg.update(_resolve(args, file_cfg, list(cfg)))
    _echo_config(cfg)
    traj = trajectory.solve_rho1(cfg["t_max"], cfg["dt"], cfg["mode"])
    if cfg["gnuplot"]:
        _write_gnuplot_stub(cfg["gnuplot"], cfg["out"],
                            [(1, 2, "rho1"), (1, 3, "A"), (1, 4, "B")],
                            xlabel="t", ylabel="value")
    fh = _open_out(cfg["out"])
    try:
        if cfg["format"] == "json":
            _write_json(fh, {"config": cfg, "t": traj.t.tolist(),
                             "rho1": traj.rho1.tolist(),
                             "A": traj.A.tolist(), "B": traj.B.tolist()})
        else:
            trajectory.write_csv(traj, fh, header_lines=[
                f"schema={SCHEMA}", f"config={json.dumps(cfg)}"])
    finally:
        if cfg["out"]:
            fh.close()
    return 0


def cmd_simulate(args) -> int:
    file_cfg = _load_config(args.config)
    cfg = {"n": 10000, "t": None, "m": None, "rule": "bf", "seed": 1,
           "replicas": 1, "omega": 10.0, "times": None, "threads": args.threads,
           "format": "json", "out": None, "ndjson": None}
    cfg.update(_resolve(args, file_cfg, list(cfg)))
    if cfg["t"] is None and cfg["m"] is None:
        cfg["t"] = 0.5
    _echo_config(cfg)
    exp = harness.ExperimentConfig(
        n=int(cfg["n"]), rule=_make_rule(cfg["rule"]), t=cfg["t"],
        m=cfg["m"], replicas=int(cfg["replicas"]), master_seed=int(cfg["seed"]),
        omega=float(cfg["omega"]),
        times=tuple(cfg["times"]) if cfg["times"] else None)
    results = harness.run_replicas(exp, threads=cfg["threads"])
    if cfg["ndjson"]:
        with open(cfg["ndjson"], "w") as fh:
            for row in results.censuses:
                for census in row:
                    fh.write(census.to_json() + "\n")
    fh = _open_out(cfg["out"])
    try:
        if cfg["format"] == "json":
            _write_json(fh, {"config": exp.to_dict(),
                             "replicas": [[c.to_dict() for c in row]
                                          for row in results.censuses]})
        else:
            rows = []
            for r, row in enumerate(results.censuses):
                for c in row:
                    rows.append({
                        "replica": r, "m": c.m, "I": c.isolated_count,
                        "L1": c.L1, "L2": c.L2,
                        "components": sum(c.tree_counts.values())
                        + sum(c.nontree_counts.values()),
                        "tree_components": sum(c.tree_counts.values()),
                    })
            _write_rows_csv(fh, list(rows[0]), rows, {"config": exp.to_dict()})
    finally:
        if cfg["out"]:
            fh.close()
    return 0


def cmd_mu(args) -> int:
    file_cfg = _load_config(args.config)
    cfg = {"k_max": 5, "t": 0.5, "mode": "bohman_frieze", "method": "auto",
           "samples": measure.DEFAULT_MC_SAMPLES, "seed": 0,
           "t_max": None, "dt": 1e-4, "format": "csv", "out": None,
           "gnuplot": None}
    cfg.update(_resolve(args, file_cfg, list(cfg)))
    _echo_config(cfg)
    if cfg["gnuplot"]:
        _write_gnuplot_stub(cfg["gnuplot"], cfg["out"], [(1, 5, "rho_k")],
                            xlabel="k", ylabel="rho_k", logy=True)
    t_max = cfg["t_max"] if cfg["t_max"] else max(2.0, cfg["t"])
    traj = trajectory.solve_rho1(t_max, cfg["dt"], cfg["mode"])
    rows = measure.mu_table(int(cfg["k_max"]), float(cfg["t"]), traj,
                            method=cfg["method"], samples=int(cfg["samples"]),
                            seed=int(cfg["seed"]))
    fh = _open_out(cfg["out"])
    try:
        if cfg["format"] == "json":
            _write_json(fh, {"config": cfg, "rows": rows})
        else:
            _write_rows_csv(fh, list(rows[0]), rows, {"config": cfg})
    finally:
        if cfg["out"]:
            fh.close()
    return 0


def cmd_critical(args) -> int:
    file_cfg = _load_config(args.config)
    cfg = {"rule": "bf", "grid": "0.55:0.65:41", "n_ladder": "50000,100000,200000",
           "replicas": 8, "seed": 1, "threads": args.threads,
           "format": "json", "out": None}
    cfg.update(_resolve(args, file_cfg, list(cfg)))
    _echo_config(cfg)
    try:
        a, b, num = cfg["grid"].split(":")
        grid = np.linspace(float(a), float(b), int(num))
        ladder = [int(x) for x in str(cfg["n_ladder"]).split(",")]
    except ValueError as e:
        raise ConfigError(f"bad grid/n_ladder: {e}") from e
    report = criticality.estimate_tc(
        _make_rule(cfg["rule"]), grid, ladder, replicas=int(cfg["replicas"]),
        master_seed=int(cfg["seed"]), threads=cfg["threads"])
    fh = _open_out(cfg["out"])
    try:
        _write_json(fh, {"config": cfg, "report": report.to_dict()})
    finally:
        if cfg["out"]:
            fh.close()
    return 0


# ----------------------------------------------------------------- verify

def _suite_identities(seed, threads):
    from .measure import ArrivalTimes, LabeledForest, mu_graph_quad, mu_k0
    from .trees import LabeledTree

    traj = trajectory.solve_rho1(1.2, 1e-4)
    reports = []

    devs = []
    for t in (0.25, 0.5, 1.0):
        A, B = traj.integrals_at(t)
        devs.append(abs(math.exp(-2 * A - 2 * B) - traj.rho1_at(t)))
    reports.append(harness.CheckReport(
        name="rho1_exposure_identity", passed=max(devs) <= 1e-8,
        statistic={"max_abs_dev": max(devs)}, threshold={"tol": 1e-8},
        seed=seed, details={"t_checked": [0.25, 0.5, 1.0]}))

    vals = [trajectory.solve_rho1(1.0, d).rho1[-1] for d in (0.04, 0.02, 0.01)]
    ratio = abs(vals[0] - vals[1]) / abs(vals[1] - vals[2])
    reports.append(harness.CheckReport(
        name="rk4_refinement_ratio", passed=12.0 <= ratio <= 20.0,
        statistic={"ratio": ratio}, threshold={"range": [12, 20]}, seed=seed))

    # finite-difference check of the exposure gradient
    from .measure import f_hat
    tree = LabeledTree(3, [(0, 1), (1, 2)])
    arr = (0.21, 0.47)
    h = 1e-6
    worst = 0.0
    for j in range(2):
        up = list(arr)
        dn = list(arr)
        up[j] += h
        dn[j] -= h
        fd = (f_hat(tree, ArrivalTimes(up), traj, 0.8)
              - f_hat(tree, ArrivalTimes(dn), traj, 0.8)) / (2 * h)
        fresh = 2 if j == 0 else 1  # endpoints newly de-isolated by edge j
        worst = max(worst, abs(fd - 2 * fresh * traj.rho1_at(arr[j])))
    reports.append(harness.CheckReport(
        name="exposure_gradient_fd", passed=worst <= 1e-4,
        statistic={"max_abs_err": worst}, threshold={"tol": 1e-4}, seed=seed))

    pair = mu_graph_quad(LabeledForest(2, [(0, 1)]), 0.5, traj)
    two = mu_graph_quad(LabeledForest(4, [(0, 1), (2, 3)]), 0.5, traj)
    mult_err = abs(two.value - pair.value**2)
    reports.append(harness.CheckReport(
        name="forest_multiplicativity", passed=mult_err <= 1e-8,
        statistic={"abs_err": mult_err}, threshold={"tol": 1e-8}, seed=seed))

    worst_z = 0.0
    for k in (2, 3):
        for t in (0.3, 0.6):
            q = mu_k0(k, t, traj, method="quad")
            m = mu_k0(k, t, traj, method="mc", samples=400_000, seed=seed)
            worst_z = max(worst_z, abs(m.value - q.value) / max(m.std_error, 1e-300))
    reports.append(harness.CheckReport(
        name="quad_vs_mc", passed=worst_z <= 3.0,
        statistic={"max_abs_z": worst_z}, threshold={"z_max": 3.0}, seed=seed))
    return reports


def _suite_er_oracle(seed, threads, n=30000, replicas=100):
    from .measure import er_mode_mu_closed_form, mu_k0

    traj = trajectory.solve_rho1(1.0, 1e-4, mode="er")
    reports = []
    t = 0.5

    worst = max(abs(mu_k0(k, t, traj, method="quad").value
                    - er_mode_mu_closed_form(k, t)) for k in (1, 2, 3, 4))
    reports.append(harness.CheckReport(
        name="er_closed_form_quad", passed=worst <= 1e-6,
        statistic={"max_abs_err": worst}, threshold={"tol": 1e-6}, seed=seed))

    worst_z = 0.0
    for k in range(1, 7):
        est = mu_k0(k, t, traj, method="mc", samples=200_000, seed=seed)
        # constant integrand in er mode: floor the band at machine precision
        band = max(est.std_error, 1e-9 / 3)
        worst_z = max(worst_z, abs(est.value - er_mode_mu_closed_form(k, t)) / band)
    reports.append(harness.CheckReport(
        name="er_closed_form_mc", passed=worst_z <= 3.0,
        statistic={"max_abs_z": worst_z}, threshold={"z_max": 3.0}, seed=seed))

    cfgexp = harness.ExperimentConfig(n=n, rule=RuleSpec.er_always_second(),
                                      t=t, replicas=replicas, master_seed=seed)
    results = harness.run_replicas(cfgexp, threads=threads)
    mu_map = {k: measure.MuEstimate(value=er_mode_mu_closed_form(k, t),
                                    std_error=0.0, method="closed_form_er")
              for k in range(1, 6)}
    rep = harness.check_tree_counts(results, mu_map)
    rep.name = "er_simulated_densities"
    reports.append(rep)
    return reports


def _suite_process(seed, threads):
    from .harness import check_conditional_edge_frequencies
    from .process import decide

    reports = []
    a = new_process(1000, RuleSpec.bohman_frieze(), seed)
    b = new_process(1000, RuleSpec.bohman_frieze(), seed)
    ev_a = [a.step() for _ in range(500)]
    ev_b = [b.step() for _ in range(500)]
    a.validate()
    reports.append(harness.CheckReport(
        name="determinism_and_conservation", passed=ev_a == ev_b,
        statistic={"events_equal": ev_a == ev_b}, threshold={}, seed=seed))

    bf = RuleSpec.bohman_frieze()
    table_ok = (decide(bf, (1, 1, 2, 2)) == "first_edge"
                and decide(bf, (1, 2, 1, 1)) == "second_edge"
                and decide(RuleSpec.er_always_second(), (1, 1, 1, 1)) == "second_edge")
    reports.append(harness.CheckReport(
        name="rule_decisions", passed=table_ok,
        statistic={"ok": table_ok}, threshold={}, seed=seed))

    state = new_process(30, RuleSpec.bohman_frieze(), seed)
    state.run_until(12)
    reports.append(check_conditional_edge_frequencies(state, trials=2_000_000))
    return reports


def _suite_concentration(seed, threads, n=100000, replicas=100):
    traj = trajectory.solve_rho1(1.6, 1e-4)
    cfgexp = harness.ExperimentConfig(n=n, rule=RuleSpec.bohman_frieze(), t=1.5,
                                      replicas=replicas, master_seed=seed,
                                      record_trace=True)
    results = harness.run_replicas(cfgexp, threads=threads)
    return [harness.check_concentration(results, traj, omega=10.0)]


def _suite_tree_counts(seed, threads, n=100000, replicas=200):
    t = 0.5
    traj = trajectory.solve_rho1(1.0, 1e-4)
    mu_map = {k: measure.mu_k0(k, t, traj, method="quad") for k in range(1, 6)}
    cfgexp = harness.ExperimentConfig(n=n, rule=RuleSpec.bohman_frieze(), t=t,
                                      replicas=replicas, master_seed=seed)
    results = harness.run_replicas(cfgexp, threads=threads)
    return [harness.check_tree_counts(results, mu_map),
            harness.check_pair_factorization(results, mu_map),
            harness.check_nontree_scarcity(results)]


SUITES = {
    "identities": _suite_identities,
    "er-oracle": _suite_er_oracle,
    "process": _suite_process,
    "concentration": _suite_concentration,
    "tree-counts": _suite_tree_counts,
}


def cmd_verify(args) -> int:
    if args.suite == "all":
        names = list(SUITES)
    elif args.suite in SUITES:
        names = [args.suite]
    else:
        raise ConfigError(f"unknown suite {args.suite!r}; "
                          f"choose from {', '.join(SUITES)} or all")
    _echo_config({"suite": names, "seed": args.seed, "threads": args.threads})
    all_ok = True
    reports = []
    for name in names:
        for rep in SUITES[name](args.seed, args.threads):
            reports.append(rep)
            print(rep.summary())
            all_ok &= rep.passed
    if args.out:
        with open(args.out, "w") as fh:
            _write_json(fh, {"reports": [r.to_dict() for r in reports]})
    return 0 if all_ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bfkit",
                                description="Two-choice graph process toolkit")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run replicas, emit census snapshots")
    sim.add_argument("--n", type=int)
    sim.add_argument("--t", type=float)
    sim.add_argument("--m", type=int)
    sim.add_argument("--rule", type=str)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--replicas", type=int)
    sim.add_argument("--omega", type=float)
    sim.add_argument("--times", type=lambda s: [float(x) for x in s.split(",")])
    sim.add_argument("--ndjson", type=str, help="stream censuses as NDJSON to this path")
    sim.set_defaults(fn=cmd_simulate)

    tr = sub.add_parser("trajectory", help="emit the rho1/A/B grid")
    tr.add_argument("--t-max", dest="t_max", type=float)
    tr.add_argument("--dt", type=float)
    tr.add_argument("--mode", choices=["bohman_frieze", "er"])
    tr.add_argument("--gnuplot", type=str, help="write a gnuplot stub here")
    tr.set_defaults(fn=cmd_trajectory)

    mu = sub.add_parser("mu", help="component-density table (k, t, mu, rho_k)")
    mu.add_argument("--k-max", dest="k_max", type=int)
    mu.add_argument("--t", type=float)
    mu.add_argument("--mode", choices=["bohman_frieze", "er"])
    mu.add_argument("--method", choices=["auto", "quad", "mc"])
    mu.add_argument("--samples", type=int)
    mu.add_argument("--seed", type=int)
    mu.add_argument("--gnuplot", type=str, help="write a gnuplot stub here")
    mu.set_defaults(fn=cmd_mu)

    cr = sub.add_parser("critical", help="susceptibility sweep and tc estimate")
    cr.add_argument("--rule", type=str)
    cr.add_argument("--grid", type=str, help="start:stop:num")
    cr.add_argument("--n-ladder", dest="n_ladder", type=str)
    cr.add_argument("--replicas", type=int)
    cr.add_argument("--seed", type=int)
    cr.set_defaults(fn=cmd_critical)

    ver = sub.add_parser("verify", help="run a named check suite")
    ver.add_argument("--suite", required=True)
    ver.add_argument("--seed", type=int, default=1)
    ver.set_defaults(fn=cmd_verify)

    for s in (sim, tr, mu, cr, ver):
        s.add_argument("--config", type=str, help="JSON config file")
        s.add_argument("--out", type=str, help="output path (default stdout)")
        s.add_argument("--format", choices=["csv", "json"])
        s.add_argument("--threads", type=int, default=os.cpu_count())
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
