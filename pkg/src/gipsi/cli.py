"""Command-line front end: single simulations, mean-field reports, parameter
sweeps, and step-size checks, all emitting CSV/JSON artifacts.

Configs are JSON documents (see README for the schemas); seeds are mandatory
so every run is reproducible. The GIPSI_LOG environment variable (error, info,
debug) controls logging verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import experiments, meanfield
from .core import (
    MarketNetwork,
    ModelParams,
    ShockSpec,
    apply_shock,
    load_network,
)
from .engine import (
    IntegratorConfig,
    Terminal,
    halve_step_check,
    integrate,
    write_events_json,
    write_trajectory_csv,
)
from .experiments import (
    SweepSpec,
    SyntheticNetworkSpec,
    extract_boundary,
    order_parameter,
    relaxation_time,
    run_sweep,
    write_boundary_csv,
    write_phase_map_csv,
)

log = logging.getLogger("gipsi")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_DIVERGED = 2


class ConfigError(Exception):
    pass


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError(f"{where}: missing required field '{key}'")
    return doc[key]


def _load_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc


def _parse_params(doc: dict) -> ModelParams:
    p = _require(doc, "params", "config")
    try:
        return ModelParams(
            alpha=float(_require(p, "alpha", "params")),
            beta=float(_require(p, "beta", "params")),
            tau_a=float(p.get("tau_a", 1.0)),
            tau_b=float(p.get("tau_b", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from exc


def _parse_network(doc: dict):
    net = _require(doc, "network", "config")
    kind = _require(net, "kind", "network")
    if kind == "file":
        path = _require(net, "path", "network")
        try:
            return load_network(path)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"network.path: {exc}") from exc
    if kind == "synthetic":
        try:
            return SyntheticNetworkSpec(
                n_investors=int(_require(net, "n_investors", "network")),
                n_assets=int(_require(net, "n_assets", "network")),
                density=float(_require(net, "density", "network")),
                weight_scale=float(_require(net, "weight_scale", "network")),
                leverage=float(_require(net, "leverage", "network")),
                seed=int(_require(net, "seed", "network")),
                fixed_weights=bool(net.get("fixed_weights", False)),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"network: {exc}") from exc
    raise ConfigError(f"network.kind: expected 'synthetic' or 'file', got {kind!r}")


def _parse_shock(doc: dict) -> ShockSpec:
    s = _require(doc, "shock", "config")
    try:
        return ShockSpec(
            investor=int(_require(s, "investor", "shock")),
            magnitude=float(_require(s, "magnitude", "shock")),
        )
    except ValueError as exc:
        raise ConfigError(f"shock: {exc}") from exc


def _parse_integrator(doc: dict) -> IntegratorConfig:
    cfg = doc.get("integrator", {})
    try:
        return IntegratorConfig(
            dt=float(cfg.get("dt", 0.01)),
            substeps=int(cfg.get("substeps", 1)),
            t_max=float(cfg.get("t_max", 69.0)),
            bankrupt_eps=float(cfg.get("bankrupt_eps", 1e-9)),
            price_floor_eps=float(cfg.get("price_floor_eps", 1e-9)),
            divergence_cap=float(cfg.get("divergence_cap", 1e9)),
        )
    except ValueError as exc:
        raise ConfigError(f"integrator: {exc}") from exc


def _materialize(network) -> MarketNetwork:
    return network.build() if isinstance(network, SyntheticNetworkSpec) else network


def _out_dir(doc: dict, args) -> Path:
    out = args.out or doc.get("output_dir")
    if out is None:
        raise ConfigError("config: missing 'output_dir' (or pass --out)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def cmd_simulate(args) -> int:
    doc = _load_json(args.config)
    params = _parse_params(doc)
    network = _materialize(_parse_network(doc))
    shock = _parse_shock(doc)
    config = _parse_integrator(doc)
    out = _out_dir(doc, args)
    emit = doc.get("emit", {})

    state = apply_shock(network, shock, params)
    trajectory = integrate(state, params, config)
    relax = relaxation_time(trajectory)

    full = args.full or bool(emit.get("full_state", False))
    if emit.get("trajectory", True):
        write_trajectory_csv(trajectory, out / "trajectory.csv", full=full)
    if emit.get("events", True):
        write_events_json(trajectory, out / "events.json")
    summary = {
        "terminal": trajectory.terminal.value,
        "order_param": order_parameter(trajectory),
        "relax_time": relax.time,
        "relax_censored": relax.censored,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    log.info("simulate: terminal=%s, %d samples, %d events",
             trajectory.terminal.value, len(trajectory.samples), len(trajectory.events))
    return EXIT_DIVERGED if trajectory.terminal is Terminal.DIVERGED else EXIT_OK


def cmd_meanfield(args) -> int:
    try:
        params = ModelParams(args.alpha, args.beta, args.tau_a, args.tau_b)
        if args.f0 <= -1:
            raise ValueError(f"f0 must be > -1, got {args.f0}")
        doc = meanfield.report(params, args.f0)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(json.dumps(doc, indent=2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc = _load_json(args.config)
    try:
        spec = SweepSpec(
            alpha_grid=np.asarray(_require(doc, "alpha_grid", "config"), dtype=float),
            beta_grid=np.asarray(_require(doc, "beta_grid", "config"), dtype=float),
            shock=_parse_shock(doc),
            network=_parse_network(doc),
            integrator=_parse_integrator(doc),
            tau_a=float(doc.get("tau_a", 1.0)),
            tau_b=float(doc.get("tau_b", 1.0)),
            repeats=int(doc.get("repeats", 1)),
            collapse_threshold=float(doc.get("collapse_threshold", 0.1)),
            relax_tol=float(doc.get("relax_tol", 1e-6)),
        )
    except ValueError as exc:
        raise ConfigError(f"config: {exc}") from exc
    out = _out_dir(doc, args)

    phase_map = run_sweep(spec, jobs=args.jobs)
    write_phase_map_csv(phase_map, out / "phase_map.csv")
    write_boundary_csv(extract_boundary(phase_map), out / "boundary.csv")
    n_failed = int(np.sum(phase_map.label == experiments.LABEL_FAILED))
    log.info("sweep: %d cells, %d failed", phase_map.order_param.size, n_failed)
    return EXIT_OK if n_failed == 0 else EXIT_ERROR


def cmd_check(args) -> int:
    doc = _load_json(args.config)
    params = _parse_params(doc)
    network = _materialize(_parse_network(doc))
    shock = _parse_shock(doc)
    config = _parse_integrator(doc)
    state = apply_shock(network, shock, params)
    report = halve_step_check(state, params, config)
    print(
        json.dumps(
            {
                "max_rel_deviation": report.max_rel_deviation,
                "n_samples_compared": report.n_samples_compared,
                "terminal_coarse": report.terminal_coarse.value,
                "terminal_fine": report.terminal_fine.value,
            },
            indent=2,
        )
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gipsi",
        description="Simulate shock response on bipartite investor-asset networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one shock + integration from a JSON config")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", default=None, help="output directory (overrides config)")
    sim.add_argument("--full", action="store_true", help="emit holdings and velocities too")
    sim.set_defaults(func=cmd_simulate)

    mf = sub.add_parser("meanfield", help="closed-form regime report for one parameter point")
    mf.add_argument("--alpha", type=float, required=True)
    mf.add_argument("--beta", type=float, required=True)
    mf.add_argument("--tau-a", type=float, default=1.0)
    mf.add_argument("--tau-b", type=float, default=1.0)
    mf.add_argument("--f0", type=float, default=0.0)
    mf.set_defaults(func=cmd_meanfield)

    sw = sub.add_parser("sweep", help="phase map over an (alpha, beta) grid")
    sw.add_argument("--config", required=True)
    sw.add_argument("--out", default=None)
    sw.add_argument("--jobs", type=int, default=1)
    sw.set_defaults(func=cmd_sweep)

    chk = sub.add_parser("check", help="step-halving convergence check for a simulate config")
    chk.add_argument("--config", required=True)
    chk.set_defaults(func=cmd_check)
    return parser


def _setup_logging():
    level = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        os.environ.get("GIPSI_LOG", "error").lower(), logging.ERROR
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
