"""Figure builders for the market-simulator artifacts.

Three kinds: trajectory panels (all prices and equities against time), the
order-parameter heatmap, and the relaxation-time heatmap, both heatmaps
optionally overlaying the alpha*beta = 1 curve. Inputs are the simulator's
documented CSV schemas; rendering never modifies them, and saved images embed
no timestamps so a rerun is byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("trajectory", "phase_heatmap", "relax_heatmap")


class SchemaError(Exception):
    """An input file does not match the simulator's documented schema."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str  # trajectory | phase_heatmap | relax_heatmap
    inputs: tuple[str, ...]
    output: str
    gamma_curve: bool = True  # overlay alpha*beta = 1 on heatmaps

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not self.inputs:
            raise ValueError("at least one input path is required")


def _read_csv(path) -> dict[str, list[str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file")
        rows = list(reader)
    return {name: [row[name] for row in rows] for name in reader.fieldnames}


def _require_columns(cols, needed, path):
    for name in needed:
        if name not in cols:
            raise SchemaError(f"{path}: missing column '{name}'")


def load_trajectory(path):
    cols = _read_csv(path)
    _require_columns(cols, ["t"], path)
    prices = sorted((c for c in cols if c.startswith("p_")), key=lambda c: int(c[2:]))
    equities = sorted((c for c in cols if c.startswith("E_")), key=lambda c: int(c[2:]))
    if not prices:
        raise SchemaError(f"{path}: missing column 'p_0'")
    if not equities:
        raise SchemaError(f"{path}: missing column 'E_0'")
    t = np.array(cols["t"], dtype=float)
    p = np.column_stack([np.array(cols[c], dtype=float) for c in prices])
    e = np.column_stack([np.array(cols[c], dtype=float) for c in equities])
    return t, p, e


def load_phase_map(path):
    cols = _read_csv(path)
    _require_columns(
        cols, ["alpha", "beta", "order_param", "relax_time", "censored", "label"], path
    )
    alpha = np.array(cols["alpha"], dtype=float)
    beta = np.array(cols["beta"], dtype=float)
    a_vals = np.unique(alpha)
    b_vals = np.unique(beta)
    if len(a_vals) * len(b_vals) != len(alpha):
        raise SchemaError(f"{path}: rows do not form a full alpha x beta grid")

    def grid(raw, dtype=float):
        out = np.empty((len(a_vals), len(b_vals)), dtype=dtype)
        ai = np.searchsorted(a_vals, alpha)
        bi = np.searchsorted(b_vals, beta)
        out[ai, bi] = raw
        return out

    order = grid(np.array(cols["order_param"], dtype=float))
    relax = grid(np.array(cols["relax_time"], dtype=float))
    censored = grid(np.array([c == "true" for c in cols["censored"]]), dtype=bool)
    return a_vals, b_vals, order, relax, censored


def _edges(centers):
    mids = 0.5 * (centers[1:] + centers[:-1])
    first = centers[0] - (mids[0] - centers[0])
    last = centers[-1] + (centers[-1] - mids[-1])
    return np.concatenate([[first], mids, [last]])


def _overlay_gamma_curve(ax, a_vals, b_vals):
    lo = max(a_vals[0], 1.0 / b_vals[-1])
    hi = min(a_vals[-1], 1.0 / max(b_vals[0], 1e-12))
    if hi <= lo:
        return
    xs = np.linspace(lo, hi, 200)
    ax.plot(xs, 1.0 / xs, "w--", linewidth=1.5, label="alpha*beta = 1")
    ax.legend(loc="upper right", framealpha=0.6)


def build_trajectory_figure(path):
    t, prices, equities = load_trajectory(path)
    fig, (ax_p, ax_e) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    for mu in range(prices.shape[1]):
        ax_p.plot(t, prices[:, mu], label=f"p_{mu}")
    for i in range(equities.shape[1]):
        ax_e.plot(t, equities[:, i], label=f"E_{i}")
    ax_p.set_ylabel("price")
    ax_e.set_ylabel("equity")
    ax_e.set_xlabel("t")
    ax_p.legend(loc="best", fontsize="small", ncols=2)
    if equities.shape[1] <= 12:
        ax_e.legend(loc="best", fontsize="small", ncols=2)
    fig.suptitle(Path(path).stem)
    return fig


def build_phase_heatmap(path, gamma_curve=True):
    a_vals, b_vals, order, _, _ = load_phase_map(path)
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    mesh = ax.pcolormesh(_edges(a_vals), _edges(b_vals), order.T, cmap="RdYlBu_r")
    fig.colorbar(mesh, ax=ax, label="order parameter")
    ax.set_xlabel("alpha")
    ax.set_ylabel("beta")
    ax.set_title("final-to-initial price ratio")
    if gamma_curve:
        _overlay_gamma_curve(ax, a_vals, b_vals)
    return fig


def build_relax_heatmap(path, gamma_curve=True):
    a_vals, b_vals, _, relax, censored = load_phase_map(path)
    fig, ax = plt.subplots(figsize=(6.5, 5.5))
    vmax = float(relax.max()) if relax.size else 1.0
    shown = np.where(censored, vmax, relax)
    mesh = ax.pcolormesh(_edges(a_vals), _edges(b_vals), shown.T, cmap="inferno",
                         vmin=0.0, vmax=vmax)
    fig.colorbar(mesh, ax=ax, label="relaxation time")
    if censored.any():
        # censored cells sit at the colormap maximum and carry a hatch
        masked = np.ma.masked_where(~censored.T, shown.T)
        ax.pcolor(_edges(a_vals), _edges(b_vals), masked, hatch="//", alpha=0.0)
    ax.set_xlabel("alpha")
    ax.set_ylabel("beta")
    ax.set_title("time to the new equilibrium")
    if gamma_curve:
        _overlay_gamma_curve(ax, a_vals, b_vals)
    return fig


def render(spec: FigureSpec) -> Path:
    """Build the requested figure and write it to spec.output."""
    if spec.kind == "trajectory":
        fig = build_trajectory_figure(spec.inputs[0])
    elif spec.kind == "phase_heatmap":
        fig = build_phase_heatmap(spec.inputs[0], spec.gamma_curve)
    else:
        fig = build_relax_heatmap(spec.inputs[0], spec.gamma_curve)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    metadata = {"Date": None} if out.suffix == ".svg" else {"Software": None}
    fig.savefig(out, dpi=150, metadata=metadata)
    plt.close(fig)
    return out
