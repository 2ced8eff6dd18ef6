#!/usr/bin/env python3
"""Reproduce the four canonical one-investor, one-asset shock responses:
stable settling (both shock signs), collapse to the price floor, and
exponential divergence. Writes one trajectory CSV plus a summary per run."""

import argparse
import json
from pathlib import Path

from gipsi import (
    IntegratorConfig,
    ModelParams,
    ShockSpec,
    apply_shock,
    integrate,
    order_parameter,
    relaxation_time,
    write_events_json,
    write_trajectory_csv,
)
from gipsi.experiments import unit_network_spec

SCENARIOS = [
    ("stable_down", 0.5, 0.5, -0.1),
    ("stable_up", 0.5, 0.5, +0.1),
    ("collapse", 1.5, 1.5, -0.1),
    ("bubble", 1.5, 1.5, +0.1),
]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="artifacts/regimes")
    parser.add_argument("--t-max", type=float, default=69.0)
    parser.add_argument("--dt", type=float, default=0.01)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    net = unit_network_spec().build()
    config = IntegratorConfig(dt=args.dt, t_max=args.t_max)
    for name, alpha, beta, f0 in SCENARIOS:
        params = ModelParams(alpha, beta)
        traj = integrate(apply_shock(net, ShockSpec(0, f0), params), params, config)
        write_trajectory_csv(traj, out / f"{name}.csv")
        write_events_json(traj, out / f"{name}_events.json")
        relax = relaxation_time(traj)
        summary = {
            "alpha": alpha, "beta": beta, "f0": f0,
            "terminal": traj.terminal.value,
            "order_param": order_parameter(traj),
            "relax_time": relax.time, "relax_censored": relax.censored,
        }
        (out / f"{name}_summary.json").write_text(json.dumps(summary, indent=2))
        print(f"{name}: terminal={traj.terminal.value} "
              f"p_end={traj.samples[-1].prices[0]:.6g}")


if __name__ == "__main__":
    main()
