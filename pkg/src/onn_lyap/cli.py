"""Experiment runner: strict JSON configs, the sweep protocols, and CSV/JSON
artifact emission.

Config files carry a versioned `schema` key ("onn-lyap/1"); unknown keys are
rejected so a typo cannot silently change a sweep. Artifacts for experiment
NAME land in <outdir>/NAME/ as trajectory.csv / sweep.csv, summary.json, and
config.echo.json; outputs contain no timestamps, so identical configs produce
byte-identical files. The ONN_LYAP_SEED environment variable, when set,
overrides every seed in the config.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import statistics
import sys
from pathlib import Path

import numpy as np

from . import bounds as bounds_mod
from .delay import DelayConfig, dde_run, degraded_rate, fit_decay_rate, tau_max
from .dynamics import RunConfig, SurgeryConfig, OnnState, fit_rate, run
from .errors import ConfigParse, OnnLyapError
from .generators import GenSpec, generate, init_state
from .graph_core import load_graph, spectrum
from .homology import BettiPair, betti, export_diagram_csv, persistence
from .loss import LossConfig, certificate

SCHEMA = "onn-lyap/1"

_TOP_KEYS = {"schema", "name", "generator", "init", "loss", "surgery", "run",
             "delay", "sweep", "certify"}
_GENERATOR_KEYS = {"kind", "n", "k", "communities", "seed", "weight_law"}
_INIT_KEYS = {"d", "law", "seed"}
_LOSS_KEYS = {"ricci_variant", "kappa_min", "lambda_ricci", "lambda_homology",
              "lambda_curv", "rho_curv", "betti_targets", "l1_mode", "lambda_conn"}
_SURGERY_KEYS = {"mode", "p", "delta", "theta", "k_target"}
_RUN_KEYS = {"iterations", "eta", "spectral_every", "seed"}
_DELAY_KEYS = {"tau", "dt", "horizon", "disturbance_bound", "disturbance_kind",
               "disturbance_freq", "seed"}
_SWEEP_KEYS = {"axis", "values", "trials"}
_CERTIFY_KEYS = {"taus", "samples", "radius", "seed"}


def _require_keys(section: dict, allowed: set, where: str) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigParse(f"unknown key {key!r} in {where}")


def load_config(path) -> dict:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise ConfigParse(f"cannot read config {path}: {exc}") from exc
    try:
        cfg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigParse(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigParse("config root must be a JSON object")
    if cfg.get("schema") != SCHEMA:
        raise ConfigParse(f"schema must be {SCHEMA!r}, got {cfg.get('schema')!r}")
    _require_keys(cfg, _TOP_KEYS, "config root")
    for section, allowed in (
        ("generator", _GENERATOR_KEYS), ("init", _INIT_KEYS),
        ("loss", _LOSS_KEYS), ("surgery", _SURGERY_KEYS), ("run", _RUN_KEYS),
        ("delay", _DELAY_KEYS), ("sweep", _SWEEP_KEYS), ("certify", _CERTIFY_KEYS),
    ):
        if section in cfg:
            if not isinstance(cfg[section], dict):
                raise ConfigParse(f"section {section!r} must be an object")
            _require_keys(cfg[section], allowed, f"section {section!r}")

    seed_override = os.environ.get("ONN_LYAP_SEED")
    if seed_override is not None:
        try:
            seed = int(seed_override)
        except ValueError:
            raise ConfigParse(f"ONN_LYAP_SEED must be an integer, got {seed_override!r}")
        for section in ("generator", "init", "run", "delay", "certify"):
            if section in cfg:
                cfg[section]["seed"] = seed
    return cfg


# ---------------------------------------------------------------------------
# Section builders
# ---------------------------------------------------------------------------

def _gen_spec(cfg: dict, k_override=None, seed_shift: int = 0) -> GenSpec:
    section = cfg.get("generator")
    if section is None:
        raise ConfigParse("config requires a 'generator' section")
    try:
        return GenSpec(
            kind=section["kind"],
            n=int(section["n"]),
            k=int(k_override if k_override is not None else section.get("k", 2)),
            communities=int(section.get("communities", 1)),
            seed=int(section.get("seed", 0)) + seed_shift,
            weight_law=tuple(section.get("weight_law", ["unit"])),
        )
    except KeyError as exc:
        raise ConfigParse(f"generator section missing key {exc}") from exc


def _loss_config(cfg: dict, graph) -> LossConfig:
    section = dict(cfg.get("loss", {}))
    targets = section.pop("betti_targets", None)
    if targets is None:
        pair = betti(graph)
    else:
        pair = BettiPair(int(targets[0]), int(targets[1]))
    return LossConfig(
        ricci_variant=section.get("ricci_variant", "hinge_zero"),
        kappa_min=float(section.get("kappa_min", 0.0)),
        lambda_ricci=float(section.get("lambda_ricci", 1.0)),
        lambda_homology=float(section.get("lambda_homology", 1.0)),
        lambda_curv=float(section.get("lambda_curv", 0.0)),
        rho_curv=float(section.get("rho_curv", 1.0)),
        betti_targets=pair,
        l1_mode=section.get("l1_mode", "zero"),
        lambda_conn=float(section.get("lambda_conn", 0.0)),
    )


def _surgery_config(cfg: dict, k_override=None) -> SurgeryConfig:
    section = cfg.get("surgery", {})
    return SurgeryConfig(
        mode=section.get("mode", "rewire"),
        p=float(section.get("p", 0.0)),
        delta=float(section.get("delta", 0.1)),
        theta=float(section.get("theta", 0.0)),
        k_target=float(k_override if k_override is not None
                       else section.get("k_target", 2.0)),
    )


def _run_config(cfg: dict, loss_cfg, surgery_cfg, seed_shift: int = 0) -> RunConfig:
    section = cfg.get("run")
    if section is None:
        raise ConfigParse("config requires a 'run' section")
    eta = section.get("eta", "auto")
    if eta != "auto":
        eta = float(eta)
    try:
        return RunConfig(
            iterations=int(section["iterations"]),
            eta=eta,
            spectral_every=int(section.get("spectral_every", 25)),
            seed=int(section.get("seed", 0)) + seed_shift,
            loss=loss_cfg,
            surgery=surgery_cfg,
        )
    except KeyError as exc:
        raise ConfigParse(f"run section missing key {exc}") from exc


def _initial_state(cfg: dict, spec: GenSpec, seed_shift: int = 0):
    section = cfg.get("init", {})
    return init_state(
        n=spec.n,
        d=int(section.get("d", 2)),
        law=section.get("law", "gaussian"),
        seed=int(section.get("seed", 0)) + seed_shift,
        communities=spec.communities,
    )


def _delay_config(cfg: dict, tau_override=None) -> DelayConfig:
    section = cfg.get("delay")
    if section is None:
        raise ConfigParse("config requires a 'delay' section for tau sweeps")
    return DelayConfig(
        tau=float(tau_override if tau_override is not None else section.get("tau", 0.0)),
        dt=float(section["dt"]),
        horizon=float(section["horizon"]),
        disturbance_bound=float(section.get("disturbance_bound", 0.0)),
        disturbance_kind=section.get("disturbance_kind", "none"),
        disturbance_freq=float(section.get("disturbance_freq", 1.0)),
        seed=int(section.get("seed", 0)),
    )


def _out_dir(cfg: dict, out_root: str) -> Path:
    name = cfg.get("name", "experiment")
    path = Path(out_root) / name
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo_config(cfg: dict, out: Path) -> None:
    (out / "config.echo.json").write_text(
        json.dumps(cfg, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_run(config_path, out_root, quiet: bool = False) -> int:
    cfg = load_config(config_path)
    spec = _gen_spec(cfg)
    graph = generate(spec)
    state = OnnState(s=_initial_state(cfg, spec), g=graph)
    loss_cfg = _loss_config(cfg, graph)
    run_cfg = _run_config(cfg, loss_cfg, _surgery_config(cfg))
    traj = run(state, run_cfg)

    out = _out_dir(cfg, out_root)
    traj.to_csv(out / "trajectory.csv")
    traj.summary_json(out / "summary.json")
    _echo_config(cfg, out)
    if not quiet:
        summary = traj.summary()
        print(f"run complete: {len(traj.rows)} rows -> {out}")
        print(f"  final total loss {summary['final_total']:.6g}, "
              f"mu_emp {summary['mu_emp']}, "
              f"betti stable {summary['beta0_constant'] and summary['beta1_constant']}")
    return 0


def _sweep_point_stats(cfg, value, axis, trials):
    """Mean/stddev statistics for one sweep point over derived-seed trials."""
    mus, r2s, finals, xis = [], [], [], []
    betti_stable = True
    for trial in range(trials):
        spec = _gen_spec(cfg, k_override=value if axis == "k" else None,
                         seed_shift=trial)
        graph = generate(spec)
        loss_cfg = _loss_config(cfg, graph)
        surgery_cfg = _surgery_config(
            cfg, k_override=value if axis == "k" else None)
        if axis == "p":
            surgery_cfg = SurgeryConfig(
                mode=surgery_cfg.mode, p=float(value), delta=surgery_cfg.delta,
                theta=surgery_cfg.theta, k_target=surgery_cfg.k_target)
        run_cfg = _run_config(cfg, loss_cfg, surgery_cfg, seed_shift=trial)
        state = OnnState(s=_initial_state(cfg, spec, seed_shift=trial), g=graph)
        traj = run(state, run_cfg)
        summary = traj.summary()
        if summary["mu_emp"] is not None:
            mus.append(summary["mu_emp"])
            r2s.append(summary["r_squared"])
        finals.append(summary["final_total"])
        betti_stable &= summary["beta0_constant"] and summary["beta1_constant"]
        if summary["xi"] is not None:
            xis.append(summary["xi"])
    def mean(xs):
        return sum(xs) / len(xs) if xs else float("nan")
    def sdev(xs):
        return statistics.stdev(xs) if len(xs) >= 2 else 0.0
    return {
        "value": value,
        "mu_mean": mean(mus), "mu_std": sdev(mus),
        "r2_mean": mean(r2s),
        "final_mean": mean(finals),
        "betti_stable": betti_stable,
        "xi_mean": mean(xis),
    }


def cmd_sweep(config_path, out_root, quiet: bool = False) -> int:
    cfg = load_config(config_path)
    sweep = cfg.get("sweep")
    if not sweep or "axis" not in sweep or "values" not in sweep:
        raise ConfigParse("sweep command requires a 'sweep' section with axis and values")
    axis = sweep["axis"]
    if axis not in ("p", "k", "tau"):
        raise ConfigParse(f"sweep axis must be one of p, k, tau; got {axis!r}")
    values = sweep["values"]
    trials = int(sweep.get("trials", 1))
    out = _out_dir(cfg, out_root)

    if axis == "tau":
        spec = _gen_spec(cfg)
        graph = generate(spec)
        state = _initial_state(cfg, spec)
        rows = []
        for value in values:
            dcfg = _delay_config(cfg, tau_override=value)
            traj = dde_run(state, graph, None, dcfg)
            try:
                rate = fit_decay_rate(traj) if traj.stable else float("nan")
            except OnnLyapError:
                rate = float("nan")
            rows.append({"tau": float(value), "stable": traj.stable,
                         "fitted_rate": rate})
        with (out / "sweep.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "stable", "fitted_rate"])
            for r in rows:
                writer.writerow([repr(r["tau"]), int(r["stable"]), repr(r["fitted_rate"])])
        (out / "summary.json").write_text(
            json.dumps(rows, indent=2, sort_keys=True) + "\n")
    else:
        rows = [_sweep_point_stats(cfg, v, axis, trials) for v in values]
        with (out / "sweep.csv").open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([axis, "mu_mean", "mu_std", "r2_mean",
                             "final_mean", "betti_stable", "xi_mean"])
            for r in rows:
                writer.writerow([
                    repr(float(r["value"])), repr(r["mu_mean"]), repr(r["mu_std"]),
                    repr(r["r2_mean"]), repr(r["final_mean"]),
                    int(r["betti_stable"]), repr(r["xi_mean"]),
                ])
        (out / "summary.json").write_text(
            json.dumps(rows, indent=2, sort_keys=True) + "\n")

    _echo_config(cfg, out)
    if not quiet:
        print(f"sweep over {axis} = {values} complete -> {out}")
    return 0


def cmd_certify(config_path, out_root, quiet: bool = False) -> int:
    cfg = load_config(config_path)
    spec = _gen_spec(cfg)
    graph = generate(spec)
    loss_cfg = _loss_config(cfg, graph)
    section = cfg.get("certify", {})
    cert = certificate(
        graph, loss_cfg,
        samples=int(section.get("samples", 16)),
        radius=float(section.get("radius", 1.0)),
        seed=int(section.get("seed", 0)),
    )
    margin = tau_max(cert.mu, cert.L)
    taus = [float(t) for t in section.get("taus", [0.0])]
    table = [{"tau": t, "mu_tilde": degraded_rate(cert.mu, cert.L, t)}
             for t in taus]
    report = bounds_mod.limit_report(graph, d=int(cfg.get("init", {}).get("d", 2)))

    artifact = {
        "certificate": cert.to_dict(),
        "tau_max": margin,
        "degraded_rates": table,
        "limits": report.to_dict(),
    }
    out = _out_dir(cfg, out_root)
    (out / "certify.json").write_text(
        json.dumps(artifact, indent=2, sort_keys=True) + "\n")
    _echo_config(cfg, out)
    if not quiet:
        print(f"certificate: mu={cert.mu:.6g} L={cert.L:.6g} c_topo={cert.c_topo:.6g}")
        print(f"tau_max = {margin:.6g} s")
        for row in table:
            print(f"  tau={row['tau']:.6g}  mu_tilde={row['mu_tilde']:.6g}")
    return 0


def cmd_persistence(graph_path, out_root, quiet: bool = False) -> int:
    graph = load_graph(graph_path)
    diagram = persistence(graph)
    pair = betti(graph)
    out = Path(out_root)
    out.mkdir(parents=True, exist_ok=True)
    export_diagram_csv(diagram, out / "persistence.csv")
    (out / "betti.json").write_text(json.dumps(
        {"beta0": pair.beta0, "beta1": pair.beta1}, sort_keys=True) + "\n")
    if not quiet:
        print(f"beta0={pair.beta0} beta1={pair.beta1}; "
              f"{len(diagram.dim0)} dim0 pairs, {len(diagram.dim1)} dim1 pairs -> {out}")
    return 0


def cmd_limits(config_path, out_root, quiet: bool = False) -> int:
    cfg = load_config(config_path)
    spec = _gen_spec(cfg)
    graph = generate(spec)
    report = bounds_mod.limit_report(graph, d=int(cfg.get("init", {}).get("d", 2)))
    measured_lambda2 = spectrum(graph, "combinatorial").lambda2
    pair = betti(graph)
    comparison = {
        "lambda2_measured": measured_lambda2,
        "lambda2_lower_bound": report.spectral_lower,
        "edges_measured": graph.edge_count,
        "edges_min": bounds_mod.min_edges(graph.n, pair.beta0, pair.beta1),
        "laman_edges": report.laman_edges,
        "info_iterations": report.info_iterations,
        "oracle_sparse_flops": report.oracle_sparse_flops,
        "oracle_dense_flops": report.oracle_dense_flops,
    }
    out = _out_dir(cfg, out_root)
    (out / "limits.json").write_text(
        json.dumps(comparison, indent=2, sort_keys=True) + "\n")
    _echo_config(cfg, out)
    if not quiet:
        print(f"{'quantity':<24}{'measured':>16}{'bound':>16}")
        print(f"{'lambda2':<24}{measured_lambda2:>16.6g}{report.spectral_lower:>16.6g}")
        print(f"{'edges':<24}{graph.edge_count:>16}{comparison['edges_min']:>16}")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="onn-lyap",
        description="Consensus-surgery dynamics with executable stability certificates.",
    )
    parser.add_argument("command",
                        choices=["run", "sweep", "certify", "persistence", "limits"])
    parser.add_argument("--config", help="path to the JSON experiment config")
    parser.add_argument("--graph", help="edge-list file for the persistence command")
    parser.add_argument("--out", default="out", help="output directory root")
    parser.add_argument("--threads", type=int, default=1,
                        help="worker count (sweep points are independent; 1 keeps "
                             "outputs in deterministic order)")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2

    try:
        if args.command == "persistence":
            if not args.graph:
                print("error: persistence requires --graph", file=sys.stderr)
                return 2
            return cmd_persistence(args.graph, args.out, args.quiet)
        if not args.config:
            print(f"error: {args.command} requires --config", file=sys.stderr)
            return 2
        if args.command == "run":
            return cmd_run(args.config, args.out, args.quiet)
        if args.command == "sweep":
            return cmd_sweep(args.config, args.out, args.quiet)
        if args.command == "certify":
            return cmd_certify(args.config, args.out, args.quiet)
        return cmd_limits(args.config, args.out, args.quiet)
    except ConfigParse as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OnnLyapError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
