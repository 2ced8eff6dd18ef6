import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gipsi import (
    EvaluationAtSingularity,
    IntegratorConfig,
    MarketState,
    ModelParams,
    ShockSpec,
    Terminal,
    apply_shock,
    build_synthetic_network,
    equity_bookkeeping_residual,
    halve_step_check,
    integrate,
    rhs,
)
from gipsi.engine import integrate_batch, read_trajectory_csv, write_trajectory_csv
from conftest import oracle_1x1, run_unit, shocked_unit_state, unit_network


class TestRhs:
    def test_equilibrium_is_stationary(self):
        state = MarketState(0.0, [[1.0]], [[0.0]], [1.0], [0.0], [1.0])
        rates = rhs(state, ModelParams(1.0, 1.0))
        for arr in (rates.equities, rates.holdings, rates.holdings_velocity,
                    rates.prices, rates.returns):
            assert np.all(arr == 0.0)

    def test_post_shock_return_acceleration(self):
        # hand evaluation of the price response term at the post-shock state:
        # du/dt = alpha * (V/A) * p / tau_a = ln(1.1)
        state = MarketState(0.0, [[1.0]], [[math.log(1.1)]], [1.0], [0.0], [1.1])
        rates = rhs(state, ModelParams(1.0, 1.0, 1.0, 1.0))
        assert rates.returns[0] == pytest.approx(0.0953102, abs=1e-7)
        assert rates.holdings[0, 0] == pytest.approx(math.log(1.1))

    def test_alpha_zero_decouples_prices(self):
        state, params = shocked_unit_state(0.0, 1.0, -0.2)
        traj = integrate(state, params, IntegratorConfig(dt=0.01, t_max=5.0))
        assert np.all(traj.prices() == 1.0)
        assert np.all(traj.returns() == 0.0)

    def test_singularity_alive_with_zero_equity(self):
        state = MarketState(0.0, [[1.0]], [[0.0]], [1.0], [0.1], [0.0])
        with pytest.raises(EvaluationAtSingularity, match="investor 0"):
            rhs(state, ModelParams(1.0, 1.0))

    def test_singularity_active_asset_without_holdings(self):
        state = MarketState(
            0.0, [[0.0, 1.0]], [[0.0, 0.0]], [1.0, 1.0], [0.0, 0.0], [1.0],
        )
        with pytest.raises(EvaluationAtSingularity, match="asset 0"):
            rhs(state, ModelParams(1.0, 1.0))

    def test_dead_investor_contributes_nothing(self):
        state = MarketState(
            0.0, [[1.0], [1.0]], [[0.0], [0.5]], [1.0], [0.2], [1.0, 0.0],
            alive=[True, False],
        )
        rates = rhs(state, ModelParams(1.0, 1.0))
        assert rates.equities[1] == 0.0
        assert np.all(rates.holdings_velocity[1] == 0.0)
        # aggregate excludes the dead row: pressure = (0)/(1), not (0.5)/(2)
        assert rates.returns[0] == pytest.approx(-0.2 + 0.0)


class TestIntegrateRegimes:
    def test_stable_negative_shock_settles_between_zero_and_one(self):
        traj = run_unit(0.5, 0.5, -0.1)
        assert traj.terminal is Terminal.REACHED_HORIZON
        assert traj.events == []
        p_inf = traj.samples[-1].prices[0]
        assert 0.0 < p_inf < 1.0
        # frozen reference from a tenfold-substep Richardson run and LSODA
        assert p_inf == pytest.approx(0.963367815983, abs=1e-9)

    def test_stable_against_independent_oracle(self):
        traj = run_unit(0.5, 0.5, -0.1, t_max=20.0)
        y = oracle_1x1(0.5, 0.5, -0.1, traj.times())
        assert np.max(np.abs(traj.prices()[:, 0] - y[3])) < 1e-9
        assert np.max(np.abs(traj.equities()[:, 0] - y[0])) < 1e-9
        assert np.max(np.abs(traj.holdings()[:, 0, 0] - y[1])) < 1e-9

    def test_unstable_positive_shock_diverges(self):
        traj = run_unit(1.5, 1.5, 0.1)
        assert traj.terminal is Terminal.DIVERGED
        assert traj.events[-1].kind == "Diverged"
        assert traj.samples[-1].t < 69.0

    def test_unstable_negative_shock_price_absorbed(self):
        traj = run_unit(1.5, 1.5, -0.1)
        floors = [e for e in traj.events if e.kind == "PriceFloor"]
        assert len(floors) == 1 and floors[0].index == 0
        assert traj.samples[-1].prices[0] == 0.0
        # absorbing: returns stay zero afterwards
        t_floor = floors[0].t
        after = traj.returns()[traj.times() >= t_floor + 0.01]
        assert np.all(after == 0.0)

    def test_zero_shock_constant_trajectory(self):
        net = build_synthetic_network(5, 3, 0.6, 1.0, 1.0, seed=5)
        params = ModelParams(1.2, 0.8)
        state = apply_shock(net, ShockSpec(0, 0.0), params)
        traj = integrate(state, params, IntegratorConfig(dt=0.01, t_max=3.0))
        assert traj.terminal is Terminal.REACHED_HORIZON
        for s in traj.samples:
            assert np.array_equal(s.prices, net.prices)
            assert np.array_equal(s.equities, net.equities)
            assert np.array_equal(s.holdings, net.holdings)

    def test_contrarian_oscillates_and_recovers(self):
        traj = run_unit(-10.0, 10.0, -0.1)
        u = traj.returns()[:, 0]
        nonzero = u[np.abs(u) > 1e-12]
        sign_changes = int(np.sum(np.diff(np.sign(nonzero)) != 0))
        assert sign_changes >= 3
        assert traj.samples[-1].prices[0] == pytest.approx(1.0, abs=0.2)

    def test_first_sample_is_post_shock_state_with_zero_returns(self):
        traj = run_unit(0.7, 0.7, 0.3, t_max=1.0)
        first = traj.samples[0]
        assert first.t == 0.0
        assert np.all(first.returns == 0.0)
        assert first.equities[0] == pytest.approx(1.3)

    def test_sample_times_strictly_increasing(self):
        traj = run_unit(1.5, 1.5, 0.1)
        assert np.all(np.diff(traj.times()) > 0)


class TestEvents:
    def test_monotone_death_and_bankruptcy_event(self):
        # two investors, harsh collapse: at least one equity hits the floor
        net = build_synthetic_network(2, 2, 1.0, 1.0, 4.0, seed=3)
        params = ModelParams(2.0, 2.0)
        state = apply_shock(net, ShockSpec(0, -0.9), params)
        traj = integrate(state, params, IntegratorConfig(dt=0.01, t_max=69.0))
        deaths = [e for e in traj.events if e.kind == "Bankruptcy"]
        assert deaths, "expected at least one bankruptcy in this scenario"
        alive_count = np.array([s.alive.sum() for s in traj.samples])
        assert np.all(np.diff(alive_count) <= 0)
        dead = traj.samples[-1].alive == False  # noqa: E712
        assert np.all(traj.samples[-1].equities[dead] == 0.0)
        assert np.all(traj.samples[-1].holdings_velocity[dead] == 0.0)

    def test_beta_zero_velocity_decays_in_closed_form(self):
        state, params = shocked_unit_state(1.0, 0.0, 0.2, tau_b=0.5)
        # beta enters the shock jump; rebuild velocity by hand so it is nonzero
        state.holdings_velocity[0, 0] = 0.3
        traj = integrate(state, params, IntegratorConfig(dt=0.01, t_max=3.0))
        t = traj.times()
        v = traj.velocities()[:, 0, 0]
        assert np.max(np.abs(v - 0.3 * np.exp(-t / 0.5))) < 1e-9

    def test_divergence_cap_honored(self):
        traj = run_unit(1.5, 1.5, 0.1, divergence_cap=1e6)
        assert traj.terminal is Terminal.DIVERGED
        pre = traj.samples[-2]
        for arr in (pre.equities, pre.holdings, pre.prices, pre.returns):
            assert np.all(np.abs(arr) <= 1e6)


class TestContrarianSymmetry:
    def test_opposite_sign_couplings_agree_for_small_shock(self):
        # (a, -a) and (-a, a) share the linearized return dynamics; for a
        # small shock the quadratic asymmetry sits below 1e-3
        t1 = run_unit(-10.0, 10.0, -1e-3)
        t2 = run_unit(10.0, -10.0, -1e-3)
        assert np.max(np.abs(t1.prices() - t2.prices())) < 1e-3


class TestStepHalving:
    def test_stable_run_converged(self):
        state, params = shocked_unit_state(0.5, 0.5, -0.1)
        report = halve_step_check(state, params, IntegratorConfig(dt=0.01, t_max=69.0))
        assert report.max_rel_deviation < 1e-6

    def test_zero_shock_is_exact(self):
        net = build_synthetic_network(3, 2, 0.8, 1.0, 1.0, seed=1)
        params = ModelParams(1.0, 1.0)
        state = apply_shock(net, ShockSpec(0, 0.0), params)
        report = halve_step_check(state, params, IntegratorConfig(dt=0.01, t_max=2.0))
        assert report.max_rel_deviation == 0.0

    def test_unstable_run_compared_up_to_divergence(self):
        state, params = shocked_unit_state(1.5, 1.5, 0.1)
        report = halve_step_check(state, params, IntegratorConfig(dt=0.01, t_max=69.0))
        assert report.terminal_coarse is Terminal.DIVERGED
        assert report.max_rel_deviation < 1e-4


class TestInvariantsOnRandomNetworks:
    @given(seed=st.integers(0, 200))
    @settings(max_examples=15, deadline=None)
    def test_nonnegativity_and_bookkeeping(self, seed):
        rng = np.random.default_rng(seed)
        n, m = int(rng.integers(2, 9)), int(rng.integers(2, 6))
        net = build_synthetic_network(n, m, 0.9, 1.0, float(rng.uniform(0.5, 3.0)), seed=seed)
        params = ModelParams(float(rng.uniform(-1.5, 1.8)), float(rng.uniform(-1.5, 1.8)))
        shock = ShockSpec(int(rng.integers(n)), float(rng.uniform(-0.6, 0.6)))
        state = apply_shock(net, shock, params)
        traj = integrate(state, params, IntegratorConfig(dt=0.01, t_max=3.0))
        for s in traj.samples:
            assert np.all(s.holdings >= 0)
            assert np.all(s.prices >= 0)
            assert np.all(s.equities >= 0)
            flux = np.einsum("nm,m->n", s.holdings, s.returns)
            res = equity_bookkeeping_residual(s, equity_rate=np.where(s.alive, flux, 0.0))
            assert np.max(np.abs(res)) < 1e-8

    def test_determinism_bit_identical(self):
        def one():
            net = build_synthetic_network(6, 4, 0.5, 1.0, 1.5, seed=77)
            params = ModelParams(1.1, 0.9)
            state = apply_shock(net, ShockSpec(2, -0.3), params)
            return integrate(state, params, IntegratorConfig(dt=0.01, t_max=5.0))

        a, b = one(), one()
        assert a.terminal == b.terminal
        for sa, sb in zip(a.samples, b.samples):
            assert np.array_equal(sa.prices, sb.prices)
            assert np.array_equal(sa.equities, sb.equities)
            assert np.array_equal(sa.holdings, sb.holdings)


class TestBatchMatchesSingle:
    def test_batched_integration_identical_to_single_runs(self):
        net = build_synthetic_network(4, 3, 0.8, 1.0, 1.0, seed=13)
        cfg = IntegratorConfig(dt=0.01, t_max=10.0)
        cells = [(0.5, 0.5), (1.5, 1.5), (0.9, 1.2)]
        E0, A0, V0, p0, u0 = [], [], [], [], []
        singles = []
        for a, b in cells:
            params = ModelParams(a, b)
            st_ = apply_shock(net, ShockSpec(0, -0.2), params)
            E0.append(st_.equities); A0.append(st_.holdings)
            V0.append(st_.holdings_velocity); p0.append(st_.prices); u0.append(st_.returns)
            singles.append(integrate(st_, params, cfg))
        batch = integrate_batch(
            np.stack(E0), np.stack(A0), np.stack(V0), np.stack(p0), np.stack(u0),
            np.array([c[0] for c in cells]), np.array([c[1] for c in cells]),
            1.0, 1.0, cfg,
        )
        from gipsi.experiments import order_parameter, relaxation_time

        for k, traj in enumerate(singles):
            assert batch.terminal[k] is traj.terminal
            assert batch.order_param[k] == pytest.approx(order_parameter(traj), rel=1e-12)
            r = relaxation_time(traj, 1e-6)
            assert batch.relax_censored[k] == r.censored
            if not r.censored:
                assert batch.relax_time[k] == pytest.approx(r.time, abs=1e-9)


class TestTrajectoryCsv:
    def test_round_trip_and_17_digit_precision(self, tmp_path):
        traj = run_unit(0.5, 0.5, -0.1, t_max=1.0)
        path = tmp_path / "traj.csv"
        write_trajectory_csv(traj, path, full=True)
        cols = read_trajectory_csv(path)
        assert set(cols) == {"t", "p_0", "E_0", "A_0_0", "V_0_0", "u_0"}
        assert np.array_equal(cols["p_0"], traj.prices()[:, 0])
        assert np.array_equal(cols["E_0"], traj.equities()[:, 0])
        assert np.array_equal(cols["u_0"], traj.returns()[:, 0])
