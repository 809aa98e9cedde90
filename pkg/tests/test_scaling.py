import dataclasses

import numpy as np
import pytest

import celldim
from celldim.scaling import ZoneCurve, _pooled_sweep
from celldim.units import dbm_to_watts

from conftest import three_station_network


def _bundle(model, density=1e6, seed=7, shadow=False):
    window = celldim.Window(4.0, 4.0, 1.0)
    deployment = celldim.sample_ppp(1.5, window, seed)
    grid = celldim.EvalGrid(window, 200.0)
    if shadow:
        model = dataclasses.replace(
            model, shadowing=celldim.ShadowingConfig(mode="iid", sigma_db=6.0,
                                                     seed=seed))
    extra = model.realize_extra_gain(deployment, grid)
    return celldim.NetworkBundle(deployment, grid, model.pathloss, density,
                                 extra), model


class TestRescale:
    def test_field_arithmetic(self, plain_model):
        bundle, _ = _bundle(plain_model)
        scaled = celldim.rescale(bundle, 2.0)
        np.testing.assert_allclose(scaled.deployment.positions,
                                   2.0 * bundle.deployment.positions)
        assert scaled.grid.window.width_km == 8.0
        assert scaled.pathloss.K == bundle.pathloss.K / 2.0
        assert scaled.pathloss.beta == bundle.pathloss.beta
        assert scaled.pathloss.min_distance_km == pytest.approx(0.02)
        assert scaled.density_bps_km2 == bundle.density_bps_km2 / 4.0
        assert scaled.extra_gain is bundle.extra_gain

    def test_identity_alpha(self, plain_model):
        bundle, _ = _bundle(plain_model)
        same = celldim.rescale(bundle, 1.0)
        assert same.deployment is bundle.deployment
        assert same.pathloss == bundle.pathloss

    def test_rejects_nonpositive_alpha(self, plain_model):
        bundle, _ = _bundle(plain_model)
        with pytest.raises(ValueError):
            celldim.rescale(bundle, 0.0)
        with pytest.raises(ValueError):
            celldim.ScalingTransform(-2.0)


class TestVerifyScaling:
    def test_alpha_one_is_exact(self, plain_model):
        bundle, model = _bundle(plain_model)
        rate = celldim.RateModel.three_g(5e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(5e6, 11.0))
        report = celldim.verify_scaling(bundle, model, rate, noise, 1.0)
        assert report.max_rel_deviation == 0.0
        assert report.partition_mismatches == 0

    def test_dilation_invariance(self, plain_model):
        bundle, model = _bundle(plain_model, density=2e6)
        rate = celldim.RateModel.four_g(10e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(10e6, 11.0))
        reports = celldim.verify_scaling(bundle, model, rate, noise, (2.0, 5.0))
        for report in reports:
            assert all(report.converged)
            assert report.partition_mismatches == 0
            assert report.overload_flags_equal
            assert report.max_rel_deviation < 1e-9

    def test_invariance_with_realized_shadowing(self, plain_model):
        # the carried extra-gain matrix is the dilated field node-for-node
        bundle, model = _bundle(plain_model, shadow=True)
        rate = celldim.RateModel.three_g(5e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(5e6, 11.0))
        report = celldim.verify_scaling(bundle, model, rate, noise, 3.0)
        assert report.partition_mismatches == 0
        assert report.max_rel_deviation < 1e-9

    def test_scalar_alpha_returns_single_report(self, plain_model):
        bundle, model = _bundle(plain_model)
        rate = celldim.RateModel.three_g(5e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(5e6, 11.0))
        single = celldim.verify_scaling(bundle, model, rate, noise, 2.0)
        assert isinstance(single, celldim.ScalingReport)
        listed = celldim.verify_scaling(bundle, model, rate, noise, [2.0])
        assert listed[0].max_rel_theta == single.max_rel_theta


class TestZoneSpec:
    def test_intensity_and_product(self, urban_pathloss):
        zone = celldim.ZoneSpec("urban", urban_pathloss, 0.5)
        assert zone.intensity == pytest.approx(4.0)
        assert zone.kd_product == pytest.approx(urban_pathloss.K * 0.5)

    def test_from_cost_hata(self):
        zone = celldim.ZoneSpec.from_cost_hata("u", 133.1, 33.8, 1.0)
        assert zone.pathloss.K == pytest.approx(10.0 ** (133.1 / 33.8))
        assert zone.pathloss.beta == pytest.approx(3.38)

    def test_rescaled_preserves_product(self, urban_pathloss):
        base = celldim.ZoneSpec("urban", urban_pathloss, 1.0)
        double = celldim.ZoneSpec.rescaled(base, 2.0)
        assert double.kd_product == base.kd_product
        assert double.pathloss.min_distance_km == pytest.approx(0.02)
        odd = celldim.ZoneSpec.rescaled(base, 1.7, name="odd")
        assert odd.name == "odd"
        assert odd.kd_product == pytest.approx(base.kd_product, rel=1e-14)

    def test_validation(self, urban_pathloss):
        with pytest.raises(ValueError):
            celldim.ZoneSpec("bad", urban_pathloss, 0.0)

    def test_kd_spread_hand_value(self, urban_pathloss):
        a = celldim.ZoneSpec("a", dataclasses.replace(urban_pathloss, K=8.0), 1.0)
        b = celldim.ZoneSpec("b", dataclasses.replace(urban_pathloss, K=10.0), 1.0)
        assert celldim.kd_spread([a, b]) == pytest.approx(1.0 / 9.0)

    def test_reference_zones_nearly_equivalent(self):
        zones = [celldim.ZoneSpec.from_cost_hata("urban", 133.1, 33.8, 1.0),
                 celldim.ZoneSpec.from_cost_hata("suburban", 102.0, 31.8, 5.0),
                 celldim.ZoneSpec.from_cost_hata("rural", 97.0, 31.8, 8.0)]
        assert celldim.kd_spread(zones) < 0.10


class TestQosHomogeneity:
    @staticmethod
    def _curve(name, r, theta):
        n = len(r)
        return ZoneCurve(zone=name, rho_bar_bps=np.ones(n),
                                 theta_bar=np.asarray(theta, dtype=float),
                                 rho_c_bar_bps=np.ones(n),
                                 r_bar_bps=np.asarray(r, dtype=float),
                                 n_bar=np.ones(n),
                                 converged=np.ones(n, dtype=bool))

    def test_single_zone_is_trivially_homogeneous(self):
        gaps = celldim.qos_homogeneity({"a": self._curve("a", [1.0], [0.1])})
        assert gaps["r_bar_gap"] == 0.0

    def test_identical_curves(self):
        c = self._curve("a", [2.0, 1.0], [0.2, 0.5])
        d = self._curve("b", [2.0, 1.0], [0.2, 0.5])
        gaps = celldim.qos_homogeneity({"a": c, "b": d})
        assert gaps["r_bar_gap"] == 0.0
        assert gaps["theta_bar_gap"] == 0.0

    def test_hand_computed_spread(self):
        gaps = celldim.qos_homogeneity({
            "a": self._curve("a", [1.0, 2.0, 0.0], [0.1, 0.1, 0.1]),
            "b": self._curve("b", [3.0, 2.0, 0.0], [0.1, 0.3, 0.1]),
        })
        # first point: span 2, mean 2; zero-everywhere point contributes 0
        assert gaps["r_bar_gap"] == pytest.approx(1.0)
        assert gaps["theta_bar_gap"] == pytest.approx(1.0)


class TestBuildComposite:
    def test_axis_validation(self, plain_model, urban_pathloss):
        zone = celldim.ZoneSpec("urban", urban_pathloss, 1.0)
        rate = celldim.RateModel.three_g(5e6)
        window = celldim.Window(6.0, 6.0, 2.0)
        with pytest.raises(ValueError):
            celldim.build_composite([zone], plain_model, rate, 1e-13, [],
                                    window, 250.0)
        with pytest.raises(ValueError):
            celldim.build_composite([zone], plain_model, rate, 1e-13,
                                    [2e5, 1e5], window, 250.0)

    def test_single_zone_matches_plain_sweep(self, plain_model, urban_pathloss):
        zone = celldim.ZoneSpec("urban", urban_pathloss, 1.0)
        rate = celldim.RateModel.three_g(5e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(5e6, 11.0))
        window = celldim.Window(6.0, 6.0, 2.0)
        axis = np.array([1e5, 4e5])
        result = celldim.build_composite([zone], plain_model, rate, noise, axis,
                                         window, 250.0, realizations=2, seed=42)
        seed_seq = np.random.SeedSequence(42).spawn(1)[0]
        direct = _pooled_sweep(zone.intensity, window,
                               celldim.EvalGrid(window, 250.0), plain_model,
                               rate, noise, axis * zone.intensity, 2, seed_seq,
                               celldim.SolverConfig(), 1)
        curve = result.curves["urban"]
        np.testing.assert_array_equal(curve.theta_bar, direct["theta_bar"])
        np.testing.assert_array_equal(curve.r_bar_bps, direct["r_bar_bps"])
        assert result.warnings == []
        np.testing.assert_array_equal(result.traffic_per_cell_bps, axis)

    def test_equivalent_zones_close_curves(self, plain_model, urban_pathloss):
        # same K*D, different spacing: mean-cell curves agree up to the
        # Monte Carlo noise of independent draws
        base = celldim.ZoneSpec("one", urban_pathloss, 1.0)
        other = celldim.ZoneSpec.rescaled(base, 1.5, name="wide")
        rate = celldim.RateModel.three_g(5e6)
        noise = dbm_to_watts(celldim.noise_power_dbm(5e6, 11.0))
        window = celldim.Window(8.0, 8.0, 2.5)
        result = celldim.build_composite([base, other], plain_model, rate,
                                         noise, [2e5], window, 250.0,
                                         realizations=6, seed=3)
        assert result.warnings == []
        assert result.gaps["r_bar_gap"] < 0.15

    def test_mismatched_zones_warn(self, plain_model):
        zones = [celldim.ZoneSpec.from_cost_hata("urban", 133.1, 33.8, 1.0),
                 celldim.ZoneSpec.from_cost_hata("suburban", 102.0, 31.8, 5.0)]
        rate = celldim.RateModel.three_g(5e6)
        window = celldim.Window(6.0, 6.0, 2.0)
        result = celldim.build_composite(zones, plain_model, rate, 1e-13,
                                         [1e5], window, 500.0, seed=1,
                                         kd_tolerance=0.01)
        assert len(result.warnings) == 1
        assert "tolerance" in result.warnings[0]
