"""Parameter sweeps over the behavioral couplings and phase-map analytics.

A sweep shocks and integrates one identical initial network at every point of
an (alpha, beta) grid, records the order parameter (sum of final-to-initial
price ratios), the relaxation time, and a phase label per cell, and can then
extract the numerical stability boundary by interpolating where the order
parameter crosses half its settled value.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import (
    MarketNetwork,
    ModelParams,
    ShockSpec,
    apply_shock,
    build_synthetic_network,
    load_network,
)
from .engine import FMT, IntegratorConfig, Terminal, Trajectory, integrate_batch

log = logging.getLogger("gipsi.experiments")

LABEL_SETTLED = "Settled"
LABEL_COLLAPSED = "Collapsed"
LABEL_DIVERGED = "Diverged"
LABEL_FAILED = "Failed"


@dataclass(frozen=True)
class SyntheticNetworkSpec:
    """Recipe for a synthetic network; repeats of a sweep shift the seed."""

    n_investors: int
    n_assets: int
    density: float
    weight_scale: float
    leverage: float
    seed: int
    fixed_weights: bool = False

    def build(self, repeat: int = 0) -> MarketNetwork:
        return build_synthetic_network(
            self.n_investors,
            self.n_assets,
            self.density,
            self.weight_scale,
            self.leverage,
            self.seed + repeat,
            self.fixed_weights,
        )


def unit_network_spec() -> SyntheticNetworkSpec:
    """The rescaled one-investor, one-asset system with A = p = E = 1."""
    return SyntheticNetworkSpec(1, 1, 1.0, 1.0, 1.0, 0, fixed_weights=True)


@dataclass
class SweepSpec:
    alpha_grid: np.ndarray
    beta_grid: np.ndarray
    shock: ShockSpec
    network: SyntheticNetworkSpec | MarketNetwork | str | Path
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    tau_a: float = 1.0
    tau_b: float = 1.0
    repeats: int = 1
    collapse_threshold: float = 0.1  # Collapsed when mean OP < threshold * n_assets
    relax_tol: float = 1e-6

    def __post_init__(self):
        self.alpha_grid = np.asarray(self.alpha_grid, dtype=float)
        self.beta_grid = np.asarray(self.beta_grid, dtype=float)
        for name, grid in (("alpha_grid", self.alpha_grid), ("beta_grid", self.beta_grid)):
            if grid.ndim != 1 or grid.size == 0:
                raise ValueError(f"{name} must be a nonempty 1-d list")
            if np.any(np.diff(grid) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass
class PhaseMap:
    """Grid of sweep outcomes; arrays are indexed [alpha_index, beta_index]."""

    alpha_grid: np.ndarray
    beta_grid: np.ndarray
    order_param: np.ndarray
    relax_time: np.ndarray
    relax_censored: np.ndarray
    label: np.ndarray  # strings
    n_assets: int


def order_parameter(trajectory: Trajectory) -> float:
    """Sum over assets of last-sample to first-sample price ratios; for a
    diverged run the last sample with finite prices is used."""
    p0 = trajectory.samples[0].prices
    for s in reversed(trajectory.samples):
        if np.all(np.isfinite(s.prices)):
            return float(np.sum(s.prices / p0))
    raise ValueError("trajectory has no finite price sample")


@dataclass(frozen=True)
class RelaxationResult:
    time: float
    censored: bool


def relaxation_time(trajectory: Trajectory, tol: float = 1e-6) -> RelaxationResult:
    """Earliest sample time from which every |u_mu| and |dE_i/dt|/max(E_i, tol)
    stays below ``tol``. Runs that never settle, diverge, or die out are
    censored at the horizon."""
    if tol <= 0:
        raise ValueError("tol must be > 0")
    t_hi = trajectory.samples[-1].t
    if trajectory.terminal is not Terminal.REACHED_HORIZON:
        return RelaxationResult(t_hi, censored=True)

    last_violation = None
    for s in trajectory.samples:
        flux = np.einsum("nm,m->n", s.holdings, s.returns) * s.alive
        quiet = np.all(np.abs(s.returns) < tol) and np.all(
            np.abs(flux) / np.maximum(s.equities, tol) < tol
        )
        if not quiet:
            last_violation = s.t
    if last_violation is None:
        return RelaxationResult(0.0, censored=False)
    if last_violation >= t_hi - 1e-12:
        return RelaxationResult(t_hi, censored=True)
    idx = int(np.searchsorted(trajectory.times(), last_violation + 1e-12))
    return RelaxationResult(float(trajectory.samples[idx].t), censored=False)


def _resolve_networks(source, repeats: int) -> list[MarketNetwork]:
    if isinstance(source, SyntheticNetworkSpec):
        return [source.build(r) for r in range(repeats)]
    if isinstance(source, MarketNetwork):
        return [source] * repeats
    return [load_network(source)] * repeats


def _run_block(args):
    """Worker for one chunk of sweep elements (module-level so it pickles)."""
    E0, A0, V0, p0, u0, alphas, betas, tau_a, tau_b, config, relax_tol = args
    return integrate_batch(E0, A0, V0, p0, u0, alphas, betas, tau_a, tau_b, config, relax_tol)


def run_sweep(spec: SweepSpec, jobs: int = 1) -> PhaseMap:
    """Shock and integrate every (alpha, beta) cell of the grid.

    All cells and repeats are stacked into one batched integration (optionally
    split across ``jobs`` processes); every element evolves independently, so
    the result is identical to running the cells one at a time.
    """
    na, nb, reps = len(spec.alpha_grid), len(spec.beta_grid), spec.repeats
    networks = _resolve_networks(spec.network, reps)
    n_assets = networks[0].n_assets
    n, m = networks[0].n_investors, networks[0].n_assets

    B = na * nb * reps
    E0 = np.empty((B, n))
    A0 = np.empty((B, n, m))
    V0 = np.empty((B, n, m))
    p0 = np.empty((B, m))
    u0 = np.zeros((B, m))
    alphas = np.empty(B)
    betas = np.empty(B)

    ok = np.ones(B, dtype=bool)
    e = 0
    for i, a in enumerate(spec.alpha_grid):
        for j, b in enumerate(spec.beta_grid):
            for r in range(reps):
                try:
                    state = apply_shock(
                        networks[r], spec.shock, ModelParams(a, b, spec.tau_a, spec.tau_b)
                    )
                    E0[e], A0[e], V0[e] = state.equities, state.holdings, state.holdings_velocity
                    p0[e], u0[e] = state.prices, state.returns
                except Exception as exc:  # noqa: BLE001 - cell failures must not kill the sweep
                    log.warning("cell (alpha=%g, beta=%g, repeat=%d) failed: %s", a, b, r, exc)
                    ok[e] = False
                    E0[e], A0[e], V0[e], p0[e] = 1.0, 1.0, 0.0, 1.0
                alphas[e], betas[e] = a, b
                e += 1

    if jobs > 1:
        chunks = np.array_split(np.arange(B), jobs)
        payloads = [
            (E0[c], A0[c], V0[c], p0[c], u0[c], alphas[c], betas[c],
             spec.tau_a, spec.tau_b, spec.integrator, spec.relax_tol)
            for c in chunks if len(c)
        ]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_block, payloads))
        terminal = np.concatenate([r.terminal for r in results])
        op = np.concatenate([r.order_param for r in results])
        relax = np.concatenate([r.relax_time for r in results])
        censored = np.concatenate([r.relax_censored for r in results])
    else:
        summary = integrate_batch(
            E0, A0, V0, p0, u0, alphas, betas,
            spec.tau_a, spec.tau_b, spec.integrator, spec.relax_tol,
        )
        terminal, op = summary.terminal, summary.order_param
        relax, censored = summary.relax_time, summary.relax_censored

    op_map = np.empty((na, nb))
    relax_map = np.empty((na, nb))
    cens_map = np.zeros((na, nb), dtype=bool)
    label_map = np.empty((na, nb), dtype=object)
    for i in range(na):
        for j in range(nb):
            sl = slice((i * nb + j) * reps, (i * nb + j + 1) * reps)
            if not ok[sl].all():
                op_map[i, j], relax_map[i, j] = math.nan, spec.integrator.t_max
                cens_map[i, j], label_map[i, j] = True, LABEL_FAILED
                continue
            op_cell = op[sl]
            op_map[i, j] = op_cell.mean()
            cens = censored[sl]
            if cens.all():
                relax_map[i, j], cens_map[i, j] = spec.integrator.t_max, True
            else:
                relax_map[i, j], cens_map[i, j] = relax[sl][~cens].mean(), False
            if any(t is Terminal.DIVERGED for t in terminal[sl]):
                label_map[i, j] = LABEL_DIVERGED
            elif op_map[i, j] < spec.collapse_threshold * n_assets:
                label_map[i, j] = LABEL_COLLAPSED
            else:
                label_map[i, j] = LABEL_SETTLED

    return PhaseMap(
        spec.alpha_grid.copy(), spec.beta_grid.copy(),
        op_map, relax_map, cens_map, label_map, n_assets,
    )


def threshold_crossing(xs: np.ndarray, values: np.ndarray) -> float | None:
    """Interpolated location where a monotone-ish order-parameter profile
    crosses half (falling) or double (rising) its settled value.

    The settled reference is taken from the stable end of the profile. Falling
    profiles (negative shocks: settled -> collapsed) interpolate linearly at
    ref/2; rising profiles (positive shocks: settled -> growing) interpolate
    in log-values at 2*ref. Returns None when there is no crossing.
    """
    values = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(values)):
        return None
    falling = values[0] >= values[-1]
    if falling:
        ref = float(values.max())
        thr = 0.5 * ref
        for j in range(len(values) - 1):
            if values[j] >= thr > values[j + 1]:
                frac = (thr - values[j]) / (values[j + 1] - values[j])
                return float(xs[j] + frac * (xs[j + 1] - xs[j]))
        return None
    ref = float(values[0])
    thr = 2.0 * ref
    if thr <= 0:
        return None
    for j in range(len(values) - 1):
        if values[j] < thr <= values[j + 1]:
            lo, hi = math.log(values[j]), math.log(values[j + 1])
            frac = (math.log(thr) - lo) / (hi - lo)
            return float(xs[j] + frac * (xs[j + 1] - xs[j]))
    return None


def extract_boundary(phase_map: PhaseMap) -> list[tuple[float, float]]:
    """Order-parameter crossing locus: for each alpha row, the interpolated
    beta where the profile crosses half its settled value. Rows without a
    crossing are skipped."""
    points = []
    for i, a in enumerate(phase_map.alpha_grid):
        b_star = threshold_crossing(phase_map.beta_grid, phase_map.order_param[i])
        if b_star is not None:
            points.append((float(a), b_star))
    return points


def relaxation_ridge(xs: np.ndarray, relax: np.ndarray, censored: np.ndarray) -> float | None:
    """Sub-cell location of the critical-slowing-down peak of a relaxation
    profile; the slowdown diverges at the transition, so this localizes the
    phase boundary far more sharply than any order-parameter threshold.

    Censored plateaus (relaxation beyond the horizon) are localized by
    intersecting the two slopes of the V-shaped inverse-relaxation profile
    just outside the plateau; smooth peaks use the parabolic vertex. Returns
    None when the profile peaks at the grid edge or shows no pronounced peak.
    """
    relax = np.asarray(relax, dtype=float)
    n = len(relax)
    j = int(np.argmax(relax))
    if j in (0, n - 1):
        return None
    if relax[j] < 2.0 * relax.min():
        return None
    censored = np.asarray(censored, dtype=bool)
    if censored.any():
        block = np.nonzero(censored)[0]
        jl, jr = int(block[0]), int(block[-1])
        if jl == 0 or jr == n - 1:
            return None
        mid = 0.5 * (xs[jl] + xs[jr])
        if jl - 2 < 0 or jr + 2 >= n:
            return float(mid)
        y = 1.0 / relax
        sl = (y[jl - 1] - y[jl - 2]) / (xs[jl - 1] - xs[jl - 2])
        sr = (y[jr + 2] - y[jr + 1]) / (xs[jr + 2] - xs[jr + 1])
        if sr <= sl:
            return float(mid)
        x_star = (y[jl - 1] - y[jr + 1] + sr * xs[jr + 1] - sl * xs[jl - 1]) / (sr - sl)
        return float(np.clip(x_star, xs[jl - 1], xs[jr + 1]))
    r0, r1, r2 = relax[j - 1], relax[j], relax[j + 1]
    denom = r0 - 2.0 * r1 + r2
    if denom >= 0:
        return float(xs[j])
    h = 0.5 * (xs[j + 1] - xs[j - 1])
    return float(xs[j] + 0.5 * h * (r0 - r2) / denom)


def extract_relaxation_boundary(phase_map: PhaseMap) -> list[tuple[float, float]]:
    """Phase boundary from the relaxation-time ridge: for each alpha row, the
    beta where settling is slowest. Rows whose ridge sits outside the grid
    (or that show no slowdown) are skipped."""
    points = []
    for i, a in enumerate(phase_map.alpha_grid):
        b_star = relaxation_ridge(
            phase_map.beta_grid, phase_map.relax_time[i], phase_map.relax_censored[i]
        )
        if b_star is not None:
            points.append((float(a), b_star))
    return points


def write_phase_map_csv(phase_map: PhaseMap, path: str | Path) -> None:
    lines = ["alpha,beta,order_param,relax_time,censored,label"]
    for i, a in enumerate(phase_map.alpha_grid):
        for j, b in enumerate(phase_map.beta_grid):
            lines.append(
                ",".join(
                    [
                        FMT % a,
                        FMT % b,
                        FMT % phase_map.order_param[i, j],
                        FMT % phase_map.relax_time[i, j],
                        "true" if phase_map.relax_censored[i, j] else "false",
                        str(phase_map.label[i, j]),
                    ]
                )
            )
    Path(path).write_text("\n".join(lines) + "\n")


def write_boundary_csv(points: list[tuple[float, float]], path: str | Path) -> None:
    lines = ["alpha,beta_star"]
    for a, b in points:
        lines.append(f"{FMT % a},{FMT % b}")
    Path(path).write_text("\n".join(lines) + "\n")
