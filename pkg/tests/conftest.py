import numpy as np
import pytest

from gipsi import (
    IntegratorConfig,
    MarketState,
    ModelParams,
    ShockSpec,
    apply_shock,
    integrate,
)
from gipsi.experiments import unit_network_spec


def unit_network():
    """The rescaled 1-investor, 1-asset system: A = p = E = 1 exactly."""
    return unit_network_spec().build()


def shocked_unit_state(alpha, beta, f0, tau_a=1.0, tau_b=1.0):
    params = ModelParams(alpha, beta, tau_a, tau_b)
    state = apply_shock(unit_network(), ShockSpec(0, f0), params)
    return state, params


def run_unit(alpha, beta, f0, t_max=69.0, dt=0.01, **cfg):
    state, params = shocked_unit_state(alpha, beta, f0)
    config = IntegratorConfig(dt=dt, t_max=t_max, **cfg)
    return integrate(state, params, config)


def oracle_1x1(alpha, beta, f0, t_eval, tau_a=1.0, tau_b=1.0, rtol=1e-12):
    """Independent reference integration of the raw 1x1 equations (LSODA),
    used to certify the engine without sharing any of its code."""
    from scipy.integrate import solve_ivp

    def rhs(t, y):
        E, A, V, p, u = y
        dE = A * u
        dV = (-V + beta * (dE / E) * A) / tau_b
        du = (-u + alpha * (V / A) * p) / tau_a
        return [dE, V, dV, u, du]

    y0 = [1.0 + f0, 1.0, (beta / tau_b) * np.log1p(f0), 1.0, 0.0]
    sol = solve_ivp(
        rhs, (t_eval[0], t_eval[-1]), y0, method="LSODA",
        rtol=rtol, atol=1e-14, t_eval=t_eval,
    )
    assert sol.success
    return sol.y  # rows: E, A, V, p, u


def numerical_jacobian_1x1(params: ModelParams, eps: float = 1e-6) -> np.ndarray:
    """Brute-force Jacobian of the engine right-hand side at the unit 1x1
    equilibrium, by central differences; the linear-algebra oracle for the
    closed-form eigenvalues."""
    from gipsi import rhs

    def f(y):
        E, A, V, p, u = y
        state = MarketState(0.0, [[A]], [[V]], [p], [u], [E])
        r = rhs(state, params)
        return np.array(
            [r.equities[0], r.holdings[0, 0], r.holdings_velocity[0, 0],
             r.prices[0], r.returns[0]]
        )

    y0 = np.array([1.0, 1.0, 0.0, 1.0, 0.0])
    jac = np.zeros((5, 5))
    for j in range(5):
        dy = np.zeros(5)
        dy[j] = eps
        jac[:, j] = (f(y0 + dy) - f(y0 - dy)) / (2 * eps)
    return jac


def to_longdouble(state: MarketState) -> MarketState:
    ld = np.longdouble
    return MarketState(
        state.t,
        state.holdings.astype(ld),
        state.holdings_velocity.astype(ld),
        state.prices.astype(ld),
        state.returns.astype(ld),
        state.equities.astype(ld),
        state.alive.copy(),
    )
