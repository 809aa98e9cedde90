import math

import numpy as np
import pytest

import celldim
from celldim.performance import SolverConfig, solve_loads
from celldim.units import dbm_to_watts

from conftest import small_network, three_station_network


class TestTrafficModel:
    def test_density_is_the_product(self):
        model = celldim.TrafficModel(gamma_per_km2_s=0.05, mean_volume_bits=8e6)
        assert model.density_bps_km2 == pytest.approx(4e5)

    def test_from_density(self):
        assert celldim.TrafficModel.from_density(1234.0).density_bps_km2 == 1234.0

    def test_validation(self):
        with pytest.raises(ValueError):
            celldim.TrafficModel(-1.0, 1.0)
        with pytest.raises(ValueError):
            celldim.TrafficModel(1.0, 0.0)


class TestCellFormulas:
    def test_cell_traffic(self):
        assert celldim.cell_traffic(600e3, 0.87) == pytest.approx(522e3)
        with pytest.raises(ValueError):
            celldim.cell_traffic(-1.0, 1.0)

    def test_critical_traffic_harmonic(self):
        # rates R and 2R on equal surfaces give capacity (4/3) R
        rho_c = celldim.critical_traffic([1e6, 2e6], [0.5, 0.5])
        assert rho_c == pytest.approx(4e6 / 3.0, rel=1e-12)

    def test_critical_traffic_zero_rate_collapses(self):
        assert celldim.critical_traffic([1e6, 0.0], [0.5, 0.5]) == 0.0

    def test_cell_metrics_regular(self):
        m = celldim.cell_metrics(rho=300e3, rho_c=900e3)
        assert m.theta == pytest.approx(1.0 / 3.0)
        assert m.r == pytest.approx(600e3)
        assert m.n_users == pytest.approx(0.5)
        assert m.p_busy == pytest.approx(1.0 / 3.0)

    def test_cell_metrics_idle(self):
        m = celldim.cell_metrics(rho=0.0, rho_c=500e3)
        assert (m.r, m.n_users, m.theta, m.p_busy) == (500e3, 0.0, 0.0, 0.0)

    def test_cell_metrics_overloaded(self):
        m = celldim.cell_metrics(rho=1.2e6, rho_c=1e6)
        assert m.r == 0.0
        assert m.n_users == math.inf
        assert m.theta == pytest.approx(1.2)
        assert m.p_busy == 1.0


class TestSolveLoads:
    def test_single_station_closed_form(self, plain_model):
        window = celldim.Window(2.0)
        deployment = celldim.place_deterministic([[0.0, 0.0]], window)
        grid = celldim.EvalGrid(window, 100.0)
        prepared = celldim.prepare_network(deployment, plain_model, grid)
        rate = celldim.RateModel.three_g(5e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(5e6, 11.0))
        density = 100e3
        sol = solve_loads(prepared, rate, noise, density)
        assert sol.converged
        # no interference: theta = density * integral of 1/R(g/noise)
        rates = rate.rate(prepared.serving_gain_w / noise)
        expected = density * float(np.sum(grid.node_weight_km2 / rates))
        assert sol.load[0] == pytest.approx(expected, rel=1e-12)

    def test_zero_traffic(self, plain_model):
        prepared = three_station_network(plain_model)
        rate = celldim.RateModel.four_g(10e6)
        sol = solve_loads(prepared, rate, 1e-13, 0.0)
        assert sol.converged
        np.testing.assert_array_equal(sol.load, np.zeros(3))
        assert np.all(sol.inv_rate_integral > 0)

    def test_straight_loop_oracle(self, plain_model):
        # transcription of the sweep as explicit python loops
        prepared = three_station_network(plain_model, resolution_m=200.0)
        rate = celldim.RateModel.four_g(10e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(10e6, 11.0))
        density = 2e6
        sweeps = 10
        sol = solve_loads(prepared, rate, noise, density,
                          SolverConfig(tol=1e-15, max_iter=sweeps),
                          record_iterates=True)
        g = prepared.gain_w
        serving = prepared.partition.serving_index
        w = prepared.grid.node_weight_km2
        theta = [1.0, 1.0, 1.0]
        for k in range(sweeps):
            phi = [min(t, 1.0) for t in theta]
            integ = [0.0, 0.0, 0.0]
            for n in range(g.shape[1]):
                total = 0.0
                for s in range(3):
                    total += phi[s] * g[s, n]
                s0 = int(serving[n])
                interference = total - phi[s0] * g[s0, n]
                sinr = g[s0, n] / (noise + interference)
                integ[s0] += w / (1.12 * 10e6 * math.log2(1.0 + sinr / 3.0))
            theta = [density * j for j in integ]
            assert np.max(np.abs(sol.iterates[k] - np.array(theta))) < 1e-12

    def test_iterates_monotone_from_all_one(self, plain_model):
        prepared = small_network(plain_model, seed=3)
        rate = celldim.RateModel.three_g(5e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(5e6, 11.0))
        sol = solve_loads(prepared, rate, noise, 400e3, record_iterates=True)
        assert sol.converged
        previous = np.ones(prepared.deployment.n_stations)
        for it in sol.iterates:
            assert np.all(it <= previous + 1e-12)
            previous = it

    def test_fixed_point_is_stationary(self, plain_model):
        prepared = small_network(plain_model, seed=5)
        rate = celldim.RateModel.four_g(10e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(10e6, 11.0))
        solver = SolverConfig(tol=1e-10, max_iter=500)
        sol = solve_loads(prepared, rate, noise, 1e6, solver)
        assert sol.converged
        from celldim.performance import _sweep
        again, _ = _sweep(prepared, rate, noise, 1e6, np.minimum(sol.load, 1.0))
        assert np.max(np.abs(again - sol.load)) < 1e-9

    def test_rejects_negative_density(self, plain_model):
        prepared = three_station_network(plain_model, resolution_m=400.0)
        with pytest.raises(ValueError):
            solve_loads(prepared, celldim.RateModel.four_g(1e6), 1e-13, -1.0)

    def test_solver_config_validation(self):
        with pytest.raises(ValueError):
            SolverConfig(tol=0.0)
        with pytest.raises(ValueError):
            SolverConfig(damping=1.5)
        with pytest.raises(ValueError):
            SolverConfig(init="zeros")


class TestMeanCell:
    def test_network_average_identities(self, plain_model):
        prepared = small_network(plain_model, seed=11)
        rate = celldim.RateModel.three_g(5e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(5e6, 11.0))
        density = 500e3
        sol = solve_loads(prepared, rate, noise, density)
        cell = celldim.network_average(prepared, sol, density)
        idx = prepared.interior
        assert cell.rho_bar == pytest.approx(
            density * prepared.partition.surface_km2[idx].mean(), rel=1e-12)
        assert cell.theta_bar == pytest.approx(sol.load[idx].mean(), rel=1e-12)
        assert cell.rho_c_bar == pytest.approx(cell.rho_bar / cell.theta_bar,
                                               rel=1e-12)
        assert cell.r_bar == pytest.approx(max(cell.rho_c_bar - cell.rho_bar, 0.0),
                                           rel=1e-12)
        assert cell.n_bar == pytest.approx(cell.rho_bar / cell.r_bar, rel=1e-12)

    def test_pooling_matches_concatenation(self):
        surf = np.array([0.8, 1.1, 0.9, 1.3])
        load = np.array([0.2, 0.4, 0.1, 0.5])
        integ = np.array([1e-6, 2e-6, 1.5e-6, 3e-6])
        whole = celldim.mean_cell_from_cells(surf, load, integ, 300e3)
        split = celldim.mean_cell_from_cells(
            np.concatenate([surf[:2], surf[2:]]),
            np.concatenate([load[:2], load[2:]]),
            np.concatenate([integ[:2], integ[2:]]), 300e3)
        assert whole == split

    def test_zero_traffic_capacity_ratio(self):
        surf = np.array([1.0, 2.0])
        integ = np.array([2e-6, 3e-6])
        cell = celldim.mean_cell_from_cells(surf, np.zeros(2), integ, 0.0)
        assert cell.rho_c_bar == pytest.approx(1.5 / 2.5e-6, rel=1e-12)
        assert cell.r_bar == cell.rho_c_bar
        assert cell.n_bar == 0.0

    def test_inconsistent_zero_load_raises(self):
        with pytest.raises(ValueError):
            celldim.mean_cell_from_cells([1.0], [0.0], [1e-6], 100.0)

    def test_empty_pool_raises(self):
        with pytest.raises(ValueError):
            celldim.mean_cell_from_cells([], [], [], 0.0)


class TestMeanCellAnalytic:
    def test_zero_traffic(self, plain_model):
        rate = celldim.RateModel.three_g(5e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(5e6, 11.0))
        config = celldim.MeanCellConfig(samples=500, window_factor=15.0)
        cell, info = celldim.mean_cell_analytic(1.0, 0.0, plain_model, rate,
                                                noise, config, seed=1)
        assert info["converged"]
        assert cell.theta_bar == 0.0
        assert cell.n_bar == 0.0
        assert 0.0 < cell.rho_c_bar < math.inf
        assert cell.r_bar == cell.rho_c_bar

    def test_single_station_universe_closed_form(self, plain_model):
        # degenerate sampler: one station at 0.3 km, no interference
        rate = celldim.RateModel.three_g(5e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(5e6, 11.0))

        def sampler(rng):
            return np.array([[0.3, 0.0]]), None

        r0 = rate.rate(dbm_to_watts(60.0)
                       / celldim.path_loss(plain_model.pathloss, 0.3) / noise)
        density = 0.4 * r0  # rho_bar at intensity 1
        config = celldim.MeanCellConfig(samples=64, tol=1e-12)
        cell, info = celldim.mean_cell_analytic(1.0, density, plain_model, rate,
                                                noise, config, seed=0,
                                                station_sampler=sampler)
        assert info["converged"]
        assert cell.theta_bar == pytest.approx(0.4, rel=1e-9)
        assert cell.rho_c_bar == pytest.approx(r0, rel=1e-9)
        assert cell.n_bar == pytest.approx(0.4 / 0.6, rel=1e-9)

    def test_light_traffic_slope(self, plain_model):
        rate = celldim.RateModel.three_g(5e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(5e6, 11.0))
        config = celldim.MeanCellConfig(samples=2000, window_factor=20.0,
                                        tol=1e-12)
        idle, _ = celldim.mean_cell_analytic(1.0, 0.0, plain_model, rate, noise,
                                             config, seed=4)
        # 200 bit/s per cell keeps the interferer activity far below the point
        # where received interference rivals thermal noise, so the load is
        # linear in traffic to a few percent (and above the linear prediction,
        # since interference only slows users down)
        light, _ = celldim.mean_cell_analytic(1.0, 200.0, plain_model, rate,
                                              noise, config, seed=4)
        linear = light.rho_bar / idle.rho_c_bar
        assert light.theta_bar >= linear
        assert light.theta_bar == pytest.approx(linear, rel=0.05)

    def test_deterministic_given_seed(self, plain_model):
        rate = celldim.RateModel.four_g(10e6)
        config = celldim.MeanCellConfig(samples=200)
        a, _ = celldim.mean_cell_analytic(1.0, 1e5, plain_model, rate, 1e-13,
                                          config, seed=9)
        b, _ = celldim.mean_cell_analytic(1.0, 1e5, plain_model, rate, 1e-13,
                                          config, seed=9)
        assert a == b
