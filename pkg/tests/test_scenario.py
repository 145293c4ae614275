import json
import math

import numpy as np
import pytest

from mimoplace import (ArrayGeometry, OutOfCoverage, ParseError,
                       PlacementConstraints, RadarConfig, SchemaError,
                       Scenario, TargetParams, ZeroRange,
                       cartesian_from_params, dump_scenario, load_scenario,
                       params_from_cartesian, validate_scenario)

RADAR = RadarConfig(powers=(1.0, 1.0))


class TestParamsFromCartesian:
    def test_outer_cell_edge(self):
        cell, theta, beta, r = params_from_cartesian((90.0, 0.0), RADAR)
        assert cell == 3
        assert beta == 1.0
        assert theta == 0.0
        assert r == 90.0

    def test_inner_cell_edge(self):
        eps = 1e-9
        cell, _, beta, _ = params_from_cartesian((60.0 + eps, 0.0), RADAR)
        assert cell == 3
        assert beta < 1e-9

    def test_reference_target(self):
        # frozen evaluation of the conversion formulas at (410, -710)
        cell, theta, beta, r = params_from_cartesian((410.0, -710.0), RADAR)
        assert cell == 28
        assert r == pytest.approx(819.8780397107853, rel=1e-12)
        assert beta == pytest.approx(0.32926799035950793, rel=1e-10)
        assert theta == pytest.approx(-1.0471116657986534, rel=1e-12)
        # matches the nominal description: bearing -pi/3, ratio .33
        assert theta == pytest.approx(-math.pi / 3, abs=2e-4)
        assert beta == pytest.approx(0.33, abs=1e-3)

    def test_zero_range(self):
        with pytest.raises(ZeroRange):
            params_from_cartesian((0.0, 0.0), RADAR)

    def test_out_of_coverage(self):
        with pytest.raises(OutOfCoverage):
            params_from_cartesian((6000.0, 0.0), RADAR)


class TestCartesianFromParams:
    def test_outer_edge(self):
        xy = cartesian_from_params(
            TargetParams(cell=1, theta=0.0, beta=1.0, xi=1, zeta=0), RADAR)
        assert np.allclose(xy, [30.0, 0.0])

    def test_reference_roundtrip_values(self):
        xy = cartesian_from_params(
            TargetParams(cell=28, theta=-math.pi / 3, beta=0.3313,
                         xi=3, zeta=3), RADAR)
        assert xy[0] == pytest.approx(409.97, abs=0.01)
        assert xy[1] == pytest.approx(-710.09, abs=0.01)

    def test_north_target(self):
        xy = cartesian_from_params(
            TargetParams(cell=2, theta=math.pi / 2, beta=0.5, xi=1, zeta=0),
            RADAR)
        assert xy[0] == pytest.approx(0.0, abs=1e-12)
        assert xy[1] == pytest.approx(45.0, rel=1e-12)

    def test_round_trip_many(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            cell = int(rng.integers(1, 160))
            t = TargetParams(cell=cell,
                             theta=float(rng.uniform(-np.pi * 0.999, np.pi)),
                             beta=float(rng.uniform(1e-6, 1.0)),
                             xi=1.0, zeta=0.0)
            xy = cartesian_from_params(t, RADAR)
            cell2, theta2, beta2, _ = params_from_cartesian(xy, RADAR)
            r1 = (t.cell - 1 + t.beta) * RADAR.bin_width
            r2 = (cell2 - 1 + beta2) * RADAR.bin_width
            assert r2 == pytest.approx(r1, rel=1e-12)
            assert theta2 == pytest.approx(t.theta, rel=1e-9, abs=1e-12)

    def test_beta_monotone_in_range(self):
        radii = np.linspace(60.0 + 1e-6, 90.0, 50)
        betas = [params_from_cartesian((r, 0.0), RADAR)[2] for r in radii]
        assert all(b2 > b1 for b1, b2 in zip(betas, betas[1:]))

    def test_cell_partition(self):
        rng = np.random.default_rng(1)
        for _ in range(2000):
            r = float(rng.uniform(1e-6, 4999.0))
            cell, _, beta, _ = params_from_cartesian((r, 0.0), RADAR)
            assert (cell - 1) * 30.0 < r <= cell * 30.0
            assert 0.0 < beta <= 1.0


class TestValidate:
    def scenario(self, targets, geom=None):
        geom = geom or ArrayGeometry.transceiver([[-0.15, 0], [0.15, 0]])
        return Scenario(radar=RADAR, array=geom,
                        constraints=PlacementConstraints(d=0.3, e=0.6),
                        targets=tuple(targets))

    def test_well_formed(self):
        s = self.scenario([TargetParams(28, -1.0, 0.33, 3, 3)])
        assert validate_scenario(s) == []

    def test_ratio_out_of_range(self):
        s = self.scenario([TargetParams(28, -1.0, 1.5, 3, 3)])
        codes = [v.code for v in validate_scenario(s)]
        assert "RatioOutOfRange" in codes

    def test_mode_mismatch(self):
        geom = ArrayGeometry([[-0.15, 0], [0.15, 0]], [[0.0, 0.2], [0.1, 0]],
                             mode="transceiver")
        s = self.scenario([TargetParams(28, -1.0, 0.33, 3, 3)], geom=geom)
        codes = [v.code for v in validate_scenario(s)]
        assert "ModeMismatch" in codes

    def test_geometry_binding(self):
        geom = ArrayGeometry.transceiver([[-0.01, 0], [0.01, 0]])
        s = self.scenario([TargetParams(28, -1.0, 0.33, 3, 3)], geom=geom)
        assert validate_scenario(s) == []
        codes = [v.code for v in validate_scenario(s, geometry_binding=True)]
        assert "RingViolation" in codes

    def test_radar_invariants_enforced(self):
        with pytest.raises(ValueError):
            RadarConfig(wavelength=-1.0)
        with pytest.raises(ValueError):
            RadarConfig(noise_var=0.0)
        with pytest.raises(ValueError):
            RadarConfig(powers=(1.0, -2.0))


class TestScenarioFile:
    def minimal(self):
        return {
            "array": {"mode": "transceiver",
                      "tx": [[-0.15, 0.0], [0.15, 0.0]]},
            "targets": [{"x_m": 410.0, "y_m": -710.0, "xi": 3.0,
                         "zeta": 3.0}],
        }

    def test_minimal_document(self):
        s = load_scenario(json.dumps(self.minimal()))
        assert s.array.num_tx == 2 and s.array.num_rx == 2
        assert s.num_targets == 1
        assert s.targets[0].cell == 28

    def test_radar_defaults(self):
        s = load_scenario(json.dumps(self.minimal()))
        assert s.radar.wavelength == 0.3
        assert s.radar.bin_width == 30.0
        assert s.radar.snapshots == 128
        assert s.radar.scatter_var == 1e-4
        assert s.radar.noise_var == 1.0
        assert s.radar.powers == (1.0, 1.0)

    def test_constraint_defaults(self):
        s = load_scenario(json.dumps(self.minimal()))
        assert s.constraints.d == pytest.approx(0.3)
        assert s.constraints.e == pytest.approx(0.6)

    def test_malformed_numeric_field(self):
        doc = self.minimal()
        doc["radar"] = {"lambda_m": "oops"}
        with pytest.raises(ParseError, match="lambda_m"):
            load_scenario(json.dumps(doc))

    def test_unknown_key_rejected(self):
        doc = self.minimal()
        doc["extra"] = 1
        with pytest.raises(SchemaError, match="extra"):
            load_scenario(json.dumps(doc))

    def test_missing_targets(self):
        doc = self.minimal()
        del doc["targets"]
        with pytest.raises(SchemaError, match="targets"):
            load_scenario(json.dumps(doc))

    def test_invalid_json_reports_line(self):
        with pytest.raises(ParseError, match="line"):
            load_scenario("{not json")

    def test_parametric_target_form(self):
        doc = self.minimal()
        doc["targets"] = [{"cell": 5, "theta_rad": 0.3, "beta": 0.4,
                           "xi": 1.0, "zeta": -1.0}]
        s = load_scenario(json.dumps(doc))
        assert s.targets[0].cell == 5
        assert s.targets[0].beta == 0.4

    def test_pair_override_one_based(self):
        doc = self.minimal()
        doc["array"]["mode"] = "separate"
        doc["array"]["rx"] = [[0.0, 0.3]]
        doc["constraints"] = {"d_m": 0.3, "e_m": 0.6,
                              "pairs": [{"n": 1, "m": 2, "d_m": 0.2,
                                         "e_m": 0.9}]}
        s = load_scenario(json.dumps(doc))
        assert s.constraints.bounds_for(0, 1) == (0.2, 0.9)
        assert s.constraints.bounds_for(0, 0) == (0.3, 0.6)

    def test_dump_round_trip(self):
        s1 = load_scenario(json.dumps(self.minimal()))
        s2 = load_scenario(dump_scenario(s1))
        assert s1.radar == s2.radar
        assert np.allclose(s1.array.tx, s2.array.tx)
        assert s1.targets[0].cell == s2.targets[0].cell
        assert s1.targets[0].beta == pytest.approx(s2.targets[0].beta,
                                                   rel=1e-12)


class TestScenarioOrdering:
    def test_targets_sorted_cell_major(self):
        t_outer = TargetParams(5, 0.1, 0.5, 1, 1)
        t_inner = TargetParams(2, 0.2, 0.5, 1, 1)
        s = Scenario(radar=RADAR,
                     array=ArrayGeometry.transceiver([[0.1, 0], [-0.1, 0]]),
                     constraints=PlacementConstraints(d=0.3, e=0.6),
                     targets=(t_outer, t_inner))
        assert [t.cell for t in s.targets] == [2, 5]
        assert s.cell_span == 5
        assert s.cell_counts() == {2: 1, 5: 1}

    def test_parameter_vector_round_trip(self):
        t = TargetParams(3, 0.4, 0.6, 1.5, -2.0)
        s = Scenario(radar=RADAR,
                     array=ArrayGeometry.transceiver([[0.1, 0], [-0.1, 0]]),
                     constraints=PlacementConstraints(d=0.3, e=0.6),
                     targets=(t,))
        vec = s.parameter_vector()
        assert np.allclose(vec, [0.4, 0.6, 1.5, -2.0])
        s2 = s.with_parameter_vector(vec + 0.25)
        assert s2.targets[0].theta == pytest.approx(0.65)

    def test_immutable_positions(self):
        geom = ArrayGeometry.transceiver([[0.1, 0], [-0.1, 0]])
        with pytest.raises(ValueError):
            geom.tx[0, 0] = 5.0
