"""Fixed-step integration of the coupled market response equations.

The first-order system integrated here, per investor i and asset mu:

    dE_i/dt  = sum_mu A[i,mu] * u_mu                 (alive investors)
    dA/dt    = V
    dV/dt    = (-V + beta * (dE_i/E_i) * A) / tau_b
    dp_mu/dt = u_mu
    du_mu/dt = (-u_mu + alpha * (dAgg_mu/Agg_mu) * p_mu) / tau_a

where Agg_mu = sum over alive investors of A[i,mu]. Steps are classical
fourth-order Runge-Kutta; after every substep equities at or below
``bankrupt_eps`` kill their investor (velocity row zeroed, holdings frozen),
prices at or below ``price_floor_eps`` absorb at zero with zero return, and
any variable beyond ``divergence_cap`` (or non-finite) aborts the run.

A batched variant integrates many parameter points over stacked state arrays
at once; it applies the identical update rule per element and exists so
parameter sweeps stay fast without changing per-cell results.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .core import MarketState, ModelParams, equity_bookkeeping_residual

FMT = "%.17g"  # all CSV floats carry 17 significant digits


class EvaluationAtSingularity(Exception):
    """Raised when the right-hand side is evaluated at a state where a
    relative-change factor divides by zero (alive investor with E=0, or an
    asset with price dynamics but zero aggregate holdings)."""


class Terminal(str, Enum):
    REACHED_HORIZON = "ReachedHorizon"
    DIVERGED = "Diverged"
    ALL_DEAD = "AllDead"


@dataclass(frozen=True)
class Event:
    t: float
    kind: str  # "Bankruptcy" | "PriceFloor" | "Diverged"
    index: int | None  # investor or asset index; None for Diverged


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 0.01  # output sampling step
    substeps: int = 1  # internal steps per output sample
    t_max: float = 69.0  # horizon, matching the reference trajectory length
    bankrupt_eps: float = 1e-9  # equity threshold for death
    price_floor_eps: float = 1e-9  # price threshold for absorbing at zero
    divergence_cap: float = 1e9  # any |variable| beyond this aborts

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")
        if self.t_max <= 0:
            raise ValueError(f"t_max must be > 0, got {self.t_max}")
        if self.bankrupt_eps < 0 or self.price_floor_eps < 0:
            raise ValueError("bankrupt_eps and price_floor_eps must be >= 0")
        if self.divergence_cap <= 0:
            raise ValueError(f"divergence_cap must be > 0, got {self.divergence_cap}")


@dataclass
class Trajectory:
    """Time-sampled states plus the event log of one integration."""

    samples: list[MarketState]
    events: list[Event]
    terminal: Terminal

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def prices(self) -> np.ndarray:
        return np.stack([s.prices for s in self.samples])

    def returns(self) -> np.ndarray:
        return np.stack([s.returns for s in self.samples])

    def equities(self) -> np.ndarray:
        return np.stack([s.equities for s in self.samples])

    def holdings(self) -> np.ndarray:
        return np.stack([s.holdings for s in self.samples])

    def velocities(self) -> np.ndarray:
        return np.stack([s.holdings_velocity for s in self.samples])


@dataclass(frozen=True)
class Rates:
    """Time derivative of every MarketState field."""

    equities: np.ndarray
    holdings: np.ndarray
    holdings_velocity: np.ndarray
    prices: np.ndarray
    returns: np.ndarray


def _deriv(E, A, V, p, u, alive_f, active_f, alpha, beta, tau_a, tau_b):
    """Vectorized right-hand side; works on single (N,), (N,M), (M,) arrays
    or on batched (B,N), (B,N,M), (B,M) arrays.

    Division guards substitute 0 where a denominator is not positive; the
    exact flow can never reach those states (relative changes keep E and A
    positive), so they only occur as transient Runge-Kutta stage overshoots
    right before an event clamp resolves them.
    """
    u_eff = u * active_f
    dE = np.einsum("...nm,...m->...n", A, u_eff) * alive_f

    e_ok = E > 0
    g = np.where(e_ok, dE / np.where(e_ok, E, 1.0), 0.0)

    dA = V * alive_f[..., None]
    dV = (beta[..., None] * g[..., None] * A - V) / tau_b * alive_f[..., None]

    agg_a = np.einsum("...nm->...m", A * alive_f[..., None])
    agg_v = np.einsum("...nm->...m", V * alive_f[..., None])
    a_ok = agg_a > 0
    pressure = np.where(a_ok, agg_v / np.where(a_ok, agg_a, 1.0), 0.0)

    du = (alpha * pressure * p - u) / tau_a * active_f
    dp = u_eff
    return dE, dA, dV, dp, du


def _check_singular(E, A, V, p, u, alive, absorbed):
    """Strict singularity check used on caller-provided states."""
    bad_e = alive & (E <= 0)
    if np.any(bad_e):
        raise EvaluationAtSingularity(
            f"alive investor {int(np.argmax(bad_e))} has nonpositive equity"
        )
    agg_a = (A * alive[:, None]).sum(axis=0)
    bad_a = ~absorbed & (agg_a <= 0)
    if np.any(bad_a):
        raise EvaluationAtSingularity(
            f"asset {int(np.argmax(bad_a))} has price dynamics but no aggregate holdings"
        )


def rhs(state: MarketState, params: ModelParams) -> Rates:
    """Right-hand side of the first-order system at ``state``.

    External forcing is zero here: shocks enter only through jump initial
    conditions. Dead investors contribute nothing and assets absorbed at the
    price floor stay frozen.
    """
    absorbed = state.prices == 0.0
    _check_singular(
        state.equities,
        state.holdings,
        state.holdings_velocity,
        state.prices,
        state.returns,
        state.alive,
        absorbed,
    )
    alive_f = state.alive.astype(float)
    active_f = (~absorbed).astype(float)
    dE, dA, dV, dp, du = _deriv(
        state.equities,
        state.holdings,
        state.holdings_velocity,
        state.prices,
        state.returns,
        alive_f,
        active_f,
        np.asarray(params.alpha),
        np.asarray(params.beta),
        params.tau_a,
        params.tau_b,
    )
    return Rates(equities=dE, holdings=dA, holdings_velocity=dV, prices=dp, returns=du)


def _rk4_substep(y, h, alive_f, active_f, alpha, beta, tau_a, tau_b):
    k1 = _deriv(*y, alive_f, active_f, alpha, beta, tau_a, tau_b)
    y2 = tuple(a + 0.5 * h * k for a, k in zip(y, k1))
    k2 = _deriv(*y2, alive_f, active_f, alpha, beta, tau_a, tau_b)
    y3 = tuple(a + 0.5 * h * k for a, k in zip(y, k2))
    k3 = _deriv(*y3, alive_f, active_f, alpha, beta, tau_a, tau_b)
    y4 = tuple(a + h * k for a, k in zip(y, k3))
    k4 = _deriv(*y4, alive_f, active_f, alpha, beta, tau_a, tau_b)
    return tuple(
        a + (h / 6.0) * (ka + 2.0 * kb + 2.0 * kc + kd)
        for a, ka, kb, kc, kd in zip(y, k1, k2, k3, k4)
    )


def _guard_step(params: ModelParams, config: IntegratorConfig) -> float:
    h = config.dt / config.substeps
    limit = min(params.tau_a, params.tau_b) / 10.0
    if h > limit * (1.0 + 1e-12):
        raise ValueError(
            f"dt/substeps = {h:g} exceeds the stability guard "
            f"min(tau_a, tau_b)/10 = {limit:g}; decrease dt or raise substeps"
        )
    return h


def integrate(initial: MarketState, params: ModelParams, config: IntegratorConfig) -> Trajectory:
    """Integrate from ``initial`` (normally a post-shock state) to the horizon.

    Samples land at t = 0, dt, 2*dt, ...; the first sample is the initial
    state itself. A run that diverges or loses its last investor ends early
    at the substep where that happened, with that state appended as the final
    sample.
    """
    h = _guard_step(params, config)
    E = initial.equities.copy()
    A = initial.holdings.copy()
    V = initial.holdings_velocity.copy()
    p = initial.prices.copy()
    u = initial.returns.copy()
    alive = initial.alive.copy()
    absorbed = p == 0.0
    _check_singular(E, A, V, p, u, alive, absorbed)

    alpha = np.asarray(params.alpha)
    beta = np.asarray(params.beta)
    n_steps = int(round(config.t_max / config.dt))
    events: list[Event] = []
    samples: list[MarketState] = []

    def emit(t):
        state = MarketState(t, A.copy(), V.copy(), p.copy(), u.copy(), E.copy(), alive.copy())
        _assert_bookkeeping(state)
        samples.append(state)

    emit(float(initial.t))
    for k in range(n_steps):
        t_k = initial.t + k * config.dt
        for s in range(config.substeps):
            alive_f = alive.astype(float)
            active_f = (~absorbed).astype(float)
            E, A, V, p, u = _rk4_substep(
                (E, A, V, p, u), h, alive_f, active_f, alpha, beta, params.tau_a, params.tau_b
            )
            t_sub = t_k + (s + 1) * h

            dead_now = alive & (E <= config.bankrupt_eps)
            for i in np.nonzero(dead_now)[0]:
                events.append(Event(t_sub, "Bankruptcy", int(i)))
            if np.any(dead_now):
                alive &= ~dead_now
                E[dead_now] = 0.0
                V[dead_now, :] = 0.0

            floored_now = ~absorbed & (p <= config.price_floor_eps)
            for mu in np.nonzero(floored_now)[0]:
                events.append(Event(t_sub, "PriceFloor", int(mu)))
            if np.any(floored_now):
                absorbed |= floored_now
                p[floored_now] = 0.0
                u[floored_now] = 0.0

            neg = A < 0
            if np.any(neg):
                A[neg] = 0.0
                V[neg] = 0.0

            if _diverged((E, A, V, p, u), config.divergence_cap):
                events.append(Event(t_sub, "Diverged", None))
                emit(t_sub)
                return Trajectory(samples, events, Terminal.DIVERGED)
            if not alive.any():
                emit(t_sub)
                return Trajectory(samples, events, Terminal.ALL_DEAD)
        emit(initial.t + (k + 1) * config.dt)
    return Trajectory(samples, events, Terminal.REACHED_HORIZON)


def _diverged(arrays, cap) -> bool:
    for a in arrays:
        if not np.all(np.isfinite(a)) or np.any(np.abs(a) > cap):
            return True
    return False


def _assert_bookkeeping(state: MarketState, tol: float = 1e-8) -> None:
    # Cross-check the engine's equity flux against the bookkeeping identity
    # computed along an independent reduction path in core.
    flux = np.einsum("nm,m->n", state.holdings, state.returns)
    rate = np.where(state.alive, flux, 0.0)
    res = equity_bookkeeping_residual(state, equity_rate=rate)
    worst = float(np.max(np.abs(res))) if res.size else 0.0
    if worst > tol:
        raise RuntimeError(f"equity bookkeeping violated at t={state.t}: residual {worst}")


@dataclass(frozen=True)
class StepCheckReport:
    max_rel_deviation: float
    n_samples_compared: int
    terminal_coarse: Terminal
    terminal_fine: Terminal


def halve_step_check(
    initial: MarketState, params: ModelParams, config: IntegratorConfig
) -> StepCheckReport:
    """Integrate at ``substeps`` and 2x ``substeps`` and report the largest
    deviation over common samples, relative to max(1, |a|, |b|). Used to
    certify that the step size is adequate."""
    coarse = integrate(initial, params, config)
    fine = integrate(initial, params, replace(config, substeps=2 * config.substeps))

    worst = 0.0
    count = 0
    for sa, sb in zip(coarse.samples, fine.samples):
        if abs(sa.t - sb.t) > 1e-12:
            break  # early-terminated runs end off-grid at different times
        count += 1
        for a, b in (
            (sa.equities, sb.equities),
            (sa.holdings, sb.holdings),
            (sa.holdings_velocity, sb.holdings_velocity),
            (sa.prices, sb.prices),
            (sa.returns, sb.returns),
        ):
            scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
            worst = max(worst, float(np.max(np.abs(a - b) / scale)))
    return StepCheckReport(worst, count, coarse.terminal, fine.terminal)


# ---------------------------------------------------------------------------
# batched integration (parameter sweeps)


@dataclass
class BatchSummary:
    """Per-element outcome of a batched integration; no stored trajectories."""

    terminal: np.ndarray  # (B,) of Terminal
    order_param: np.ndarray  # (B,) sum of final/initial price ratios
    relax_time: np.ndarray  # (B,)
    relax_censored: np.ndarray  # (B,) bool
    bankruptcies: np.ndarray  # (B,) count
    price_floors: np.ndarray  # (B,) count


def integrate_batch(
    E0: np.ndarray,
    A0: np.ndarray,
    V0: np.ndarray,
    p0: np.ndarray,
    u0: np.ndarray,
    alpha: np.ndarray,
    beta: np.ndarray,
    tau_a: float,
    tau_b: float,
    config: IntegratorConfig,
    relax_tol: float = 1e-6,
) -> BatchSummary:
    """Integrate B independent runs with shared shapes and per-element
    couplings in one vectorized loop.

    Applies exactly the same RK4 substeps and event clamps as ``integrate``;
    elements that diverge or lose all investors freeze in place while the
    rest continue. Tracks the order parameter (against each element's own
    initial prices), the relaxation time (last sample violating the
    quiescence test on |u| and |dE/E|), and event counts.
    """
    _guard_step(ModelParams(1.0, 1.0, tau_a, tau_b), config)
    h = config.dt / config.substeps
    B, N = E0.shape
    M = p0.shape[1]
    E, A, V, p, u = (x.astype(float).copy() for x in (E0, A0, V0, p0, u0))
    alive = np.ones((B, N), dtype=bool)
    absorbed = p == 0.0
    running = np.ones(B, dtype=bool)
    terminal = np.array([Terminal.REACHED_HORIZON] * B, dtype=object)
    alpha = np.asarray(alpha, float).reshape(B, 1)
    beta = np.asarray(beta, float).reshape(B, 1)

    p_start = p.copy()
    last_ok_prices = p.copy()
    last_violation = np.full(B, -1.0)
    bankruptcies = np.zeros(B, dtype=int)
    price_floors = np.zeros(B, dtype=int)
    n_steps = int(round(config.t_max / config.dt))

    def relax_probe(t):
        alive_f = alive.astype(float)
        u_eff = u * (~absorbed)
        dE = np.einsum("bnm,bm->bn", A, u_eff) * alive_f
        rate_ok = np.abs(dE) / np.maximum(E, relax_tol) < relax_tol
        u_ok = np.abs(u_eff) < relax_tol
        quiet = rate_ok.all(axis=1) & u_ok.all(axis=1)
        viol = running & ~quiet
        last_violation[viol] = t

    relax_probe(0.0)
    for k in range(n_steps):
        if not running.any():
            break
        t_k = k * config.dt
        for s in range(config.substeps):
            alive_f = alive.astype(float)
            active_f = (~absorbed).astype(float)
            En, An, Vn, pn, un = _rk4_substep(
                (E, A, V, p, u), h, alive_f, active_f, alpha, beta, tau_a, tau_b
            )
            r1 = running[:, None]
            r2 = running[:, None, None]
            E = np.where(r1, En, E)
            A = np.where(r2, An, A)
            V = np.where(r2, Vn, V)
            p = np.where(r1, pn, p)
            u = np.where(r1, un, u)

            dead_now = alive & (E <= config.bankrupt_eps) & running[:, None]
            if dead_now.any():
                bankruptcies += dead_now.sum(axis=1)
                alive &= ~dead_now
                E = np.where(dead_now, 0.0, E)
                V = np.where(dead_now[:, :, None], 0.0, V)

            floored_now = ~absorbed & (p <= config.price_floor_eps) & running[:, None]
            if floored_now.any():
                price_floors += floored_now.sum(axis=1)
                absorbed |= floored_now
                p = np.where(floored_now, 0.0, p)
                u = np.where(floored_now, 0.0, u)

            neg = (A < 0) & running[:, None, None]
            if neg.any():
                A = np.where(neg, 0.0, A)
                V = np.where(neg, 0.0, V)

            finite_p = np.isfinite(p).all(axis=1)
            last_ok_prices = np.where((running & finite_p)[:, None], p, last_ok_prices)

            div = running & _diverged_rows((E, A, V, p, u), config.divergence_cap)
            if div.any():
                terminal[div] = Terminal.DIVERGED
                running &= ~div
            dead_all = running & ~alive.any(axis=1)
            if dead_all.any():
                terminal[dead_all] = Terminal.ALL_DEAD
                running &= ~dead_all
        relax_probe(t_k + config.dt)

    t_end = n_steps * config.dt
    order_param = (last_ok_prices / p_start).sum(axis=1)
    # n.b. str-enum scalars confuse numpy comparisons; test identity explicitly
    finished = np.array([t is Terminal.REACHED_HORIZON for t in terminal])
    censored = ~finished | (last_violation >= t_end - 1e-12)
    relax = np.where(last_violation < 0, 0.0, last_violation + config.dt)
    relax = np.where(censored, config.t_max, relax)
    return BatchSummary(terminal, order_param, relax, censored, bankruptcies, price_floors)


def _diverged_rows(arrays, cap) -> np.ndarray:
    bad = None
    for a in arrays:
        flat = a.reshape(a.shape[0], -1)
        b = (~np.isfinite(flat) | (np.abs(flat) > cap)).any(axis=1)
        bad = b if bad is None else bad | b
    return bad


# ---------------------------------------------------------------------------
# artifact emission


def write_trajectory_csv(trajectory: Trajectory, path: str | Path, full: bool = False) -> None:
    """CSV of the sampled series: t, prices, equities, and with ``full`` also
    the flattened holdings, holdings velocities, and returns."""
    first = trajectory.samples[0]
    n, m = first.n_investors, first.n_assets
    header = ["t"] + [f"p_{mu}" for mu in range(m)] + [f"E_{i}" for i in range(n)]
    if full:
        header += [f"A_{i}_{mu}" for i in range(n) for mu in range(m)]
        header += [f"V_{i}_{mu}" for i in range(n) for mu in range(m)]
        header += [f"u_{mu}" for mu in range(m)]
    lines = [",".join(header)]
    for s in trajectory.samples:
        row = [s.t, *s.prices, *s.equities]
        if full:
            row += [*s.holdings.reshape(-1), *s.holdings_velocity.reshape(-1), *s.returns]
        lines.append(",".join(FMT % x for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def write_events_json(trajectory: Trajectory, path: str | Path) -> None:
    doc = [{"t": e.t, "kind": e.kind, "index": e.index} for e in trajectory.events]
    Path(path).write_text(json.dumps(doc, indent=2))


def read_trajectory_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Read a trajectory CSV back into column arrays keyed by header name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in row] for row in reader if row]
    data = np.array(rows)
    return {name: data[:, j] for j, name in enumerate(header)}
