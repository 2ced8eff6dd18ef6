"""Domain types for the bipartite investor-asset market: behavioral parameters,
weighted network construction, delta shocks, and the equity bookkeeping identity.

Conventions: holdings A[i, mu] is the number of shares of asset mu held by
investor i, prices are normalized to 1 at construction, and every quantity is
a nonnegative float. All operations here are pure functions of their inputs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class ModelParams:
    """Behavioral couplings and response times of the market model."""

    alpha: float  # inverse price elasticity (market response strength)
    beta: float  # income elasticity of demand (investor rashness)
    tau_a: float = 1.0  # market price response time, > 0
    tau_b: float = 1.0  # investor portfolio response time, > 0

    def __post_init__(self):
        for name in ("alpha", "beta", "tau_a", "tau_b"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v)):
                raise ValueError(f"{name} must be a finite number, got {v!r}")
        if self.tau_a <= 0:
            raise ValueError(f"tau_a must be > 0, got {self.tau_a}")
        if self.tau_b <= 0:
            raise ValueError(f"tau_b must be > 0, got {self.tau_b}")

    def gamma(self) -> float:
        """Product alpha*beta, the coupling that controls the phase."""
        return self.alpha * self.beta


def _as_float_array(x, name: str, shape: tuple[int, ...]) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if np.any(arr < 0):
        raise ValueError(f"{name} contains negative entries")
    return arr


@dataclass
class MarketNetwork:
    """Weighted bipartite network of investors holding assets.

    Rejects isolated nodes: every investor must hold something and every
    asset must have a holder.
    """

    n_investors: int
    n_assets: int
    holdings: np.ndarray  # [n_investors, n_assets], shares held
    prices: np.ndarray  # [n_assets], normalized so prices are 1 at t=0
    equities: np.ndarray  # [n_investors], net worth

    def __post_init__(self):
        if self.n_investors < 1 or self.n_assets < 1:
            raise ValueError("n_investors and n_assets must be >= 1")
        n, m = self.n_investors, self.n_assets
        self.holdings = _as_float_array(self.holdings, "holdings", (n, m))
        self.prices = _as_float_array(self.prices, "prices", (m,))
        self.equities = _as_float_array(self.equities, "equities", (n,))
        row_deg = (self.holdings > 0).sum(axis=1)
        col_deg = (self.holdings > 0).sum(axis=0)
        if np.any(row_deg == 0):
            raise ValueError(f"investor {int(np.argmin(row_deg))} holds no assets")
        if np.any(col_deg == 0):
            raise ValueError(f"asset {int(np.argmin(col_deg))} has no holder")

    def portfolio_values(self) -> np.ndarray:
        """(A @ p)_i, the market value of each investor's holdings."""
        return self.holdings @ self.prices

    def copy(self) -> "MarketNetwork":
        return MarketNetwork(
            self.n_investors,
            self.n_assets,
            self.holdings.copy(),
            self.prices.copy(),
            self.equities.copy(),
        )


@dataclass
class MarketState:
    """All dynamical variables at one instant.

    ``holdings_velocity`` is the time derivative of holdings and ``returns``
    the time derivative of prices; both are state variables because the
    response equations are second order in holdings and prices.
    """

    t: float
    holdings: np.ndarray  # [n_investors, n_assets]
    holdings_velocity: np.ndarray  # [n_investors, n_assets]
    prices: np.ndarray  # [n_assets]
    returns: np.ndarray  # [n_assets]
    equities: np.ndarray  # [n_investors]
    alive: np.ndarray = field(default=None)  # [n_investors] bool, False once bankrupt

    def __post_init__(self):
        # floating dtypes pass through (extended precision is allowed for
        # high-accuracy certification runs); anything else becomes float64
        def _floats(x):
            arr = np.asarray(x)
            return arr if np.issubdtype(arr.dtype, np.floating) else arr.astype(float)

        self.holdings = _floats(self.holdings)
        if self.holdings.ndim != 2:
            raise ValueError("holdings must be a 2-d matrix")
        n, m = self.holdings.shape
        self.holdings_velocity = _floats(self.holdings_velocity)
        self.prices = _floats(self.prices)
        self.returns = _floats(self.returns)
        self.equities = _floats(self.equities)
        if self.alive is None:
            self.alive = np.ones(n, dtype=bool)
        self.alive = np.asarray(self.alive, dtype=bool)
        shapes = {
            "holdings_velocity": (self.holdings_velocity.shape, (n, m)),
            "prices": (self.prices.shape, (m,)),
            "returns": (self.returns.shape, (m,)),
            "equities": (self.equities.shape, (n,)),
            "alive": (self.alive.shape, (n,)),
        }
        for name, (got, want) in shapes.items():
            if got != want:
                raise ValueError(f"{name} must have shape {want}, got {got}")

    @property
    def n_investors(self) -> int:
        return self.holdings.shape[0]

    @property
    def n_assets(self) -> int:
        return self.holdings.shape[1]

    def copy(self) -> "MarketState":
        return MarketState(
            self.t,
            self.holdings.copy(),
            self.holdings_velocity.copy(),
            self.prices.copy(),
            self.returns.copy(),
            self.equities.copy(),
            self.alive.copy(),
        )


@dataclass(frozen=True)
class ShockSpec:
    """A delta shock: one investor's equity jumps by the fraction ``magnitude``."""

    investor: int
    magnitude: float  # f0, must stay above -1 so equity cannot jump below zero

    def __post_init__(self):
        if not math.isfinite(self.magnitude):
            raise ValueError("magnitude must be finite")
        if self.magnitude <= -1.0:
            raise ValueError(f"magnitude must be > -1, got {self.magnitude}")
        if self.investor < 0:
            raise ValueError("investor index must be >= 0")


def build_synthetic_network(
    n_investors: int,
    n_assets: int,
    density: float,
    weight_scale: float,
    leverage: float,
    seed: int,
    fixed_weights: bool = False,
) -> MarketNetwork:
    """Random weighted bipartite network with controlled leverage.

    Edges are placed Bernoulli(density); edge weights are uniform in
    (0, weight_scale], or exactly weight_scale when ``fixed_weights``.
    Prices start at 1 and equities are set so that (A @ p)_i equals
    leverage * E_i for every investor. Isolated investors/assets are
    repaired with one uniformly random edge each. Deterministic for a
    fixed seed.
    """
    if n_investors < 1 or n_assets < 1:
        raise ValueError("n_investors and n_assets must be >= 1")
    if not (0.0 < density <= 1.0):
        raise ValueError(f"density must be in (0, 1], got {density}")
    if weight_scale <= 0:
        raise ValueError(f"weight_scale must be > 0, got {weight_scale}")
    if leverage <= 0:
        raise ValueError(f"leverage must be > 0, got {leverage}")
    if density * n_investors * n_assets < max(n_investors, n_assets):
        raise ValueError(
            "density too low for connectivity: need "
            "density*n_investors*n_assets >= max(n_investors, n_assets)"
        )

    rng = np.random.default_rng(seed)
    mask = rng.random((n_investors, n_assets)) < density
    if fixed_weights:
        weights = np.full((n_investors, n_assets), weight_scale)
    else:
        # 1 - U maps [0, 1) draws onto (0, 1] so no edge gets weight zero
        weights = weight_scale * (1.0 - rng.random((n_investors, n_assets)))
    holdings = np.where(mask, weights, 0.0)

    def _edge_weight():
        return weight_scale if fixed_weights else weight_scale * (1.0 - rng.random())

    for i in np.nonzero(holdings.sum(axis=1) == 0)[0]:
        holdings[i, rng.integers(n_assets)] = _edge_weight()
    for mu in np.nonzero(holdings.sum(axis=0) == 0)[0]:
        holdings[rng.integers(n_investors), mu] = _edge_weight()

    prices = np.ones(n_assets)
    equities = (holdings @ prices) / leverage
    return MarketNetwork(n_investors, n_assets, holdings, prices, equities)


def apply_shock(network: MarketNetwork, shock: ShockSpec, params: ModelParams) -> MarketState:
    """Post-shock state at t=0+ for a delta shock to one investor's equity.

    The shock is realized as jump initial conditions rather than a forcing
    pulse: the shocked investor's equity becomes E*(1+f0), its holdings
    velocity jumps to (beta/tau_b)*A*ln(1+f0), and all returns start at 0.
    Everything else is copied unchanged.
    """
    i = shock.investor
    if not (0 <= i < network.n_investors):
        raise ValueError(
            f"shock investor {i} out of range for {network.n_investors} investors"
        )
    f0 = shock.magnitude

    equities = network.equities.copy()
    equities[i] *= 1.0 + f0
    velocity = np.zeros_like(network.holdings)
    velocity[i, :] = (params.beta / params.tau_b) * network.holdings[i, :] * math.log1p(f0)
    return MarketState(
        t=0.0,
        holdings=network.holdings.copy(),
        holdings_velocity=velocity,
        prices=network.prices.copy(),
        returns=np.zeros(network.n_assets),
        equities=equities,
        alive=np.ones(network.n_investors, dtype=bool),
    )


def equity_bookkeeping_residual(
    state: MarketState,
    external_force: np.ndarray | None = None,
    equity_rate: np.ndarray | None = None,
) -> np.ndarray:
    """Residual of the bookkeeping identity dE_i/dt = sum_mu A[i,mu]*u_mu + f_i.

    ``equity_rate`` is the reported dE/dt to check (the engine passes its own
    evaluation); when omitted it is recomputed here, which makes the residual
    a pure consistency check of the alive/dead masking. Dead investors report
    exactly 0.
    """
    n = state.n_investors
    if external_force is None:
        external_force = np.zeros(n)
    external_force = np.asarray(external_force, dtype=float)
    if external_force.shape != (n,):
        raise ValueError(f"external_force must have shape ({n},)")

    flux = np.array([np.dot(state.holdings[i], state.returns) for i in range(n)])
    if equity_rate is None:
        equity_rate = np.where(state.alive, flux + external_force, 0.0)
    equity_rate = np.asarray(equity_rate, dtype=float)
    if equity_rate.shape != (n,):
        raise ValueError(f"equity_rate must have shape ({n},)")

    residual = equity_rate - flux - external_force
    return np.where(state.alive, residual, 0.0)


def save_network(network: MarketNetwork, path: str | Path) -> None:
    """Write a network as JSON with row-major holdings and full float precision."""
    doc = {
        "n_investors": network.n_investors,
        "n_assets": network.n_assets,
        "holdings": network.holdings.reshape(-1).tolist(),
        "prices": network.prices.tolist(),
        "equities": network.equities.tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_network(path: str | Path) -> MarketNetwork:
    doc = json.loads(Path(path).read_text())
    try:
        n, m = int(doc["n_investors"]), int(doc["n_assets"])
        holdings = np.asarray(doc["holdings"], dtype=float).reshape(n, m)
        prices = np.asarray(doc["prices"], dtype=float)
        equities = np.asarray(doc["equities"], dtype=float)
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed network file {path}: {exc}") from exc
    return MarketNetwork(n, m, holdings, prices, equities)
