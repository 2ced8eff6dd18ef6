"""Closed-form analytics of the one-investor, one-asset reduction.

Eliminating holdings and equity from the 1x1 system leaves a single equation
for the return u = dp/dt:

    tau_A*tau_B*u'' + (tau_A + tau_B)*u' + (1 - gamma*A*p/E)*u
        = tau_B*u*(u + tau_A*u')/p - (tau_B/alpha)*(u + tau_A*u')**2/p

which is a damped oscillator with frequency omega^2 = (1 - gamma*Ap/E) /
(tau_A + tau_B) and time constant 1/tau = 1/tau_A + 1/tau_B, plus quadratic
terms. The identity above is exact; ``reduced_residual`` evaluates it on a
sampled trajectory so the only residual left is finite-difference truncation.
(Note the 1/alpha on the squared term: it follows from eliminating A via the
price equation and is confirmed symbolically and against simulation.)
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ModelParams
from .engine import Trajectory


class Degenerate(Exception):
    """The finite-shock transition curve has no value (1 - beta*f0 = 0)."""


class IllConditioned(Exception):
    """An exponent fit was requested on too little or too small a signal."""


class Phase(str, Enum):
    OSCILLATORY = "Oscillatory"
    STABLE_DECAY = "StableDecay"
    UNSTABLE = "Unstable"


@dataclass(frozen=True)
class ReducedParams:
    """Damped-oscillator parameters of the reduced return equation."""

    tau: float  # tau_a*tau_b / (tau_a + tau_b)
    omega_sq: float  # (1 - gamma*ap_over_e) / (tau_a + tau_b)
    ap_over_e: float  # ratio (A*p)/E at evaluation time


@dataclass(frozen=True)
class PhaseLabel:
    label: Phase
    lambda_plus: complex  # root with the larger real part
    lambda_minus: complex
    marginal: bool = False  # exactly on a regime boundary


def reduce(params: ModelParams, ap_over_e: float = 1.0) -> ReducedParams:
    """Oscillator parameters at a given assets-to-equity ratio.

    Immediately after a shock of size f0 the ratio is 1 + f0; for
    infinitesimal shocks use 1.
    """
    if ap_over_e <= 0:
        raise ValueError(f"ap_over_e must be > 0, got {ap_over_e}")
    tau = params.tau_a * params.tau_b / (params.tau_a + params.tau_b)
    omega_sq = (1.0 - params.gamma() * ap_over_e) / (params.tau_b + params.tau_a)
    return ReducedParams(tau=tau, omega_sq=omega_sq, ap_over_e=ap_over_e)


def eigenvalues(reduced: ReducedParams) -> tuple[complex, complex]:
    """Both roots of tau*lambda^2 + lambda + omega^2 = 0.

    lambda_plus is the root with the larger real part; for a complex pair
    (equal real parts) it is the one with positive imaginary part.
    """
    disc = 1.0 - 4.0 * reduced.tau * reduced.omega_sq
    root = cmath.sqrt(disc)
    lam_plus = (-1.0 + root) / (2.0 * reduced.tau)
    lam_minus = (-1.0 - root) / (2.0 * reduced.tau)
    return lam_plus, lam_minus


def classify(params: ModelParams, ap_over_e: float = 1.0) -> PhaseLabel:
    """Regime of the reduced system: Oscillatory when the discriminant
    1 - 4*tau*omega^2 is negative, Unstable when omega^2 < 0 (one growing
    root), StableDecay otherwise. Exact boundary hits stay StableDecay and
    are flagged marginal."""
    red = reduce(params, ap_over_e)
    lam_plus, lam_minus = eigenvalues(red)
    disc = 1.0 - 4.0 * red.tau * red.omega_sq
    if disc < 0:
        label = Phase.OSCILLATORY
    elif red.omega_sq < 0:
        label = Phase.UNSTABLE
    else:
        label = Phase.STABLE_DECAY
    marginal = disc == 0.0 or red.omega_sq == 0.0
    return PhaseLabel(label, lam_plus, lam_minus, marginal)


def transition_gamma(f0: float, beta: float) -> float:
    """Finite-shock location of the stability boundary,
    gamma* = (1 + f0) / (1 - beta*f0); equals 1 as f0 -> 0."""
    if f0 <= -1.0:
        raise ValueError(f"f0 must be > -1, got {f0}")
    denom = 1.0 - beta * f0
    if denom == 0.0:
        raise Degenerate(f"transition curve degenerate at beta*f0 = 1 (beta={beta}, f0={f0})")
    return (1.0 + f0) / denom


# 7-point central stencils (cubic least-squares fit over the window, second
# order accurate). Deliberately NOT the maximal-order 7-point stencils: those
# push truncation below the 1/h^3 rounding amplification of the third
# derivative, so halving the sampling step makes their residual worse, while
# these stay truncation-dominated and converge as h^2.
_D1 = np.array([22.0, -67.0, -58.0, 0.0, 58.0, 67.0, -22.0]) / 252.0
_D2 = np.array([5.0, 0.0, -3.0, -4.0, -3.0, 0.0, 5.0]) / 42.0
_D3 = np.array([-1.0, 1.0, 1.0, 0.0, -1.0, -1.0, 1.0]) / 6.0


def _stencil(series: np.ndarray, coeffs: np.ndarray, h: float, order: int) -> np.ndarray:
    out = np.convolve(series, coeffs[::-1], mode="valid")
    return out / np.asarray(h, dtype=series.dtype) ** order


def _require_1x1(trajectory: Trajectory) -> None:
    first = trajectory.samples[0]
    if first.n_investors != 1 or first.n_assets != 1:
        raise ValueError("this operation is defined for 1-investor, 1-asset trajectories")


def reduced_residual(trajectory: Trajectory, params: ModelParams) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise residual of the exact reduced return equation along a
    densely sampled 1x1 trajectory.

    Derivatives of p up to third order come from 7-point central stencils,
    so only interior points (three samples in from each edge) are returned.
    The time-varying gamma*A*p/E factor uses the trajectory's own holdings,
    prices, and equities. Returns (times, residuals).
    """
    _require_1x1(trajectory)
    if params.alpha == 0.0:
        raise ValueError("the reduction divides by alpha; alpha=0 decouples prices")
    if len(trajectory.samples) < 7:
        raise ValueError("need at least 7 samples for the interior stencils")
    t = trajectory.times()
    steps = np.diff(t)
    h = steps[0]
    if not np.allclose(steps, h, rtol=1e-9, atol=1e-12):
        raise ValueError("samples must be uniformly spaced")

    p = trajectory.prices()[:, 0]
    A = trajectory.holdings()[:, 0, 0]
    E = trajectory.equities()[:, 0]

    u = _stencil(p, _D1, h, 1)
    du = _stencil(p, _D2, h, 2)
    ddu = _stencil(p, _D3, h, 3)
    pc, Ac, Ec, tc = p[3:-3], A[3:-3], E[3:-3], t[3:-3]

    ta, tb = params.tau_a, params.tau_b
    gamma = params.gamma()
    lhs = ta * tb * ddu + (ta + tb) * du + (1.0 - gamma * Ac * pc / Ec) * u
    damped = u + ta * du
    rhs_nl = tb * u * damped / pc - (tb / params.alpha) * damped**2 / pc
    return tc, lhs - rhs_nl


def reduced_equation_at_start(
    params: ModelParams, f0: float
) -> tuple[float, float]:
    """Both sides of the reduced equation evaluated exactly at the post-shock
    instant of the unit 1x1 system (A=p=1, E=1+f0, u=0).

    Uses the jump conditions to get u' and u'' in closed form, with no finite
    differences. The sides agree identically, which is the precise sense in
    which the reduction is exact at t=0+; note the nonlinear right side is
    itself of order ln(1+f0)^2, not zero.
    """
    ta, tb = params.tau_a, params.tau_b
    a, b = params.alpha, params.beta
    if a == 0.0:
        raise ValueError("the reduction divides by alpha; alpha=0 decouples prices")
    dA = (b / tb) * math.log1p(f0)  # A'(0+)
    up = a * dA / ta  # u'(0+) from the price response at u=0
    # u''(0+): differentiate the price equation once; at t=0 the holdings
    # acceleration is -A'(0)/tau_b because the equity flux A*u vanishes.
    upp = (-up + a * (-dA / tb - dA * dA)) / ta
    lhs = ta * tb * upp + (ta + tb) * up  # the u-term vanishes with u(0)=0
    damped = ta * up  # (u + tau_a*u') at u=0
    rhs_nl = -(tb / a) * damped**2  # the tb*u*damped/p term carries a factor u(0)=0
    return lhs, rhs_nl


_SIGNAL_FLOOR = 1e-12


def fit_dominant_exponent(
    trajectory: Trajectory, variable: str, window: tuple[float, float]
) -> float:
    """Least-squares exponent of a 1x1 series on a time window.

    Fits the slope of log|X - X_ref| against t, with X_ref = 0 for growing
    signals and the final sampled value for decaying ones (the growth/decay
    call is made from the window endpoints).

    Besides the three state series, the rate series ``return`` (dp/dt),
    ``holdings_rate`` (dA/dt), and ``equity_rate`` (A*dp/dt) can be fitted;
    rates carry no constant offset, so on a growth window their log-slope
    isolates the dominant mode exactly while log(X) of a state series only
    approaches it once the mode dwarfs the starting value.
    """
    _require_1x1(trajectory)
    series = {
        "price": lambda: trajectory.prices()[:, 0],
        "equity": lambda: trajectory.equities()[:, 0],
        "holdings": lambda: trajectory.holdings()[:, 0, 0],
        "return": lambda: trajectory.returns()[:, 0],
        "holdings_rate": lambda: trajectory.velocities()[:, 0, 0],
        "equity_rate": lambda: trajectory.holdings()[:, 0, 0] * trajectory.returns()[:, 0],
    }
    if variable not in series:
        raise ValueError(f"variable must be one of {sorted(series)}, got {variable!r}")
    x = series[variable]()
    t = trajectory.times()
    t_lo, t_hi = window
    sel = (t >= t_lo) & (t <= t_hi)
    if sel.sum() < 10:
        raise IllConditioned(f"window [{t_lo}, {t_hi}] spans fewer than 10 samples")

    xw, tw = x[sel], t[sel]
    growing = abs(xw[-1]) >= abs(xw[0])
    x_ref = 0.0 if growing else x[-1]
    signal = np.abs(xw - x_ref)
    usable = signal > _SIGNAL_FLOOR
    if signal.max(initial=0.0) <= _SIGNAL_FLOOR or usable.sum() < 10:
        raise IllConditioned("signal below 1e-12 on the window")
    slope, _ = np.polyfit(tw[usable], np.log(signal[usable]), 1)
    return float(slope)


@dataclass(frozen=True)
class ExponentReport:
    price: float
    equity: float
    holdings: float
    max_spread: float  # largest pairwise |wi - wj| / max(|wi|, |wj|)


def check_equal_exponents(trajectory: Trajectory, window: tuple[float, float]) -> ExponentReport:
    """Fit the dominant exponents of price, equity, and holdings on the same
    window and report the worst pairwise relative spread. Near the transition
    the three variables must share one slow exponent.

    The fits run on the rate series of each variable: every state carries a
    constant part (the mode amplitudes do not), so the rates expose the
    common exponent directly.
    """
    w = {
        v: fit_dominant_exponent(trajectory, v, window)
        for v in ("return", "equity_rate", "holdings_rate")
    }
    vals = list(w.values())
    spread = max(
        abs(a - b) / max(abs(a), abs(b))
        for i, a in enumerate(vals)
        for b in vals[i + 1 :]
    )
    return ExponentReport(w["return"], w["equity_rate"], w["holdings_rate"], spread)


def report(params: ModelParams, f0: float = 0.0) -> dict:
    """JSON-ready summary: oscillator parameters, eigenvalues, regime label,
    and the finite-shock transition point (null when degenerate)."""
    ap = 1.0 + f0
    red = reduce(params, ap)
    lam_plus, lam_minus = eigenvalues(red)
    label = classify(params, ap)
    try:
        gamma_star = transition_gamma(f0, params.beta)
    except Degenerate:
        gamma_star = None
    return {
        "tau": red.tau,
        "omega_sq": red.omega_sq,
        "lambda_plus": {"re": lam_plus.real, "im": lam_plus.imag},
        "lambda_minus": {"re": lam_minus.real, "im": lam_minus.imag},
        "label": label.label.value,
        "marginal": label.marginal,
        "gamma": params.gamma(),
        "gamma_star": gamma_star,
    }
