"""Configuration bundle and JSON loading."""

import json

import numpy as np
import pytest

from standopt import presets
from standopt.config import (ModelConfig, base_case, config_fingerprint,
                             config_from_dict, config_to_dict, load_config)
from standopt.dynamics import ConfigurationError
from standopt.fitness import model_fingerprint, npv_finite
from standopt.schedule import ScheduleBounds, parse_schedule


def write_config(tmp_path, payload):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(payload))
    return path


class TestDefaults:
    def test_empty_object_is_base_case(self, tmp_path):
        cfg = load_config(write_config(tmp_path, {}))
        base = base_case()
        assert cfg.econ == base.econ
        assert cfg.growth == base.growth
        assert cfg.ga == base.ga
        assert cfg.nlp == base.nlp
        assert cfg.bounds == base.bounds
        np.testing.assert_array_equal(cfg.initial_state, base.initial_state)
        np.testing.assert_array_equal(cfg.size_classes.d, base.size_classes.d)

    def test_none_path_is_base_case(self):
        cfg = load_config(None)
        assert cfg.econ.r == presets.ECON_DEFAULTS["r"]

    def test_base_initial_state_is_first_named_state(self):
        cfg = base_case()
        np.testing.assert_array_equal(
            cfg.initial_state, np.array(presets.INITIAL_STATES["x1"], float))

    def test_base_case_table_has_twelve_classes(self):
        assert base_case().size_classes.n == 12


class TestOverrides:
    def test_econ_rate_override_keeps_other_defaults(self, tmp_path):
        cfg = load_config(write_config(tmp_path, {"econ": {"r": 0.04}}))
        assert cfg.econ.r == 0.04
        assert cfg.econ.p1 == presets.ECON_DEFAULTS["p1"]
        assert cfg.econ.Cf == presets.ECON_DEFAULTS["Cf"]
        assert cfg.growth == base_case().growth

    def test_named_initial_state(self, tmp_path):
        cfg = load_config(write_config(tmp_path, {"initial_state": "x3"}))
        np.testing.assert_array_equal(
            cfg.initial_state, np.array(presets.INITIAL_STATES["x3"], float))

    def test_explicit_initial_state(self, tmp_path):
        counts = [100.0] + [0.0] * 11
        cfg = load_config(write_config(tmp_path, {"initial_state": counts}))
        np.testing.assert_array_equal(cfg.initial_state, np.array(counts))

    def test_nested_ga_and_bounds_override(self, tmp_path):
        payload = {"ga": {"population": 10, "seed": 7},
                   "bounds": {"t_min": 2, "t_max": 6, "s_min": 1, "s_max": 3}}
        cfg = load_config(write_config(tmp_path, payload))
        assert cfg.ga.population == 10
        assert cfg.ga.seed == 7
        assert cfg.bounds == ScheduleBounds(2, 6, 1, 3)
        assert cfg.ga.bounds == cfg.bounds

    def test_nlp_override(self, tmp_path):
        cfg = load_config(write_config(tmp_path, {"nlp": {"multistarts": 5}}))
        assert cfg.nlp.multistarts == 5
        assert cfg.nlp.constraint_tol == presets.NLP_DEFAULTS["constraint_tol"]

    def test_size_class_rows_override(self, tmp_path):
        rows = [[0.01, 50, 0.0, 0.0], [0.05, 150, 0.1, 0.05]]
        cfg = load_config(write_config(
            tmp_path, {"size_classes": rows, "initial_state": [10.0, 5.0]}))
        assert cfg.size_classes.n == 2
        np.testing.assert_array_equal(cfg.size_classes.d, [50.0, 150.0])
        assert cfg.initial_state.shape == (2,)


class TestValidation:
    def test_negative_fixed_cost_names_field_path(self, tmp_path):
        with pytest.raises(ConfigurationError, match=r"econ\.Cf"):
            load_config(write_config(tmp_path, {"econ": {"Cf": -1.0}}))

    def test_bad_growth_parameter_names_field_path(self):
        with pytest.raises(ConfigurationError, match=r"growth\.S1"):
            config_from_dict({"growth": {"S1": -5.0}})

    def test_unknown_field_names_path(self):
        with pytest.raises(ConfigurationError, match=r"econ\.sawmill"):
            config_from_dict({"econ": {"sawmill": 1.0}})

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown section"):
            config_from_dict({"prices": {}})

    def test_non_numeric_value_rejected(self):
        with pytest.raises(ConfigurationError, match=r"econ\.r"):
            config_from_dict({"econ": {"r": "high"}})

    def test_bool_is_not_a_number(self):
        with pytest.raises(ConfigurationError, match=r"ga\.population"):
            config_from_dict({"ga": {"population": True}})

    def test_unknown_state_name_lists_choices(self):
        with pytest.raises(ConfigurationError, match="x1"):
            config_from_dict({"initial_state": "x9"})

    def test_wrong_state_length(self):
        with pytest.raises(ConfigurationError, match="initial_state"):
            config_from_dict({"initial_state": [1.0, 2.0]})

    def test_negative_state_rejected(self):
        state = [-1.0] + [0.0] * 11
        with pytest.raises(ConfigurationError, match="initial_state"):
            config_from_dict({"initial_state": state})

    def test_invalid_json_reports_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError, match="invalid JSON"):
            load_config(path)

    def test_ga_bounds_key_rejected_inside_ga_section(self):
        # The schedule box lives in its own top-level section.
        with pytest.raises(ConfigurationError, match=r"ga\.bounds"):
            config_from_dict({"ga": {"bounds": {}}})


class TestRoundTrip:
    def test_dict_round_trip_preserves_fingerprint(self, tmp_path):
        cfg = load_config(write_config(
            tmp_path, {"econ": {"r": 0.02}, "initial_state": "x2",
                       "ga": {"seed": 3}}))
        clone = config_from_dict(config_to_dict(cfg))
        assert config_fingerprint(clone) == config_fingerprint(cfg)

    def test_fingerprint_sensitive_to_solver_knobs(self):
        cfg = base_case()
        other = config_from_dict({"nlp": {"multistarts": 4}})
        assert config_fingerprint(cfg) != config_fingerprint(other)

    def test_fingerprint_stable_across_instances(self):
        assert config_fingerprint(base_case()) == config_fingerprint(base_case())


class TestFitnessCompatibility:
    def test_config_feeds_fitness_api(self):
        cfg = base_case()
        genotype = parse_schedule("00001|10000")
        from standopt.fitness import random_initial_controls
        controls = random_initial_controls(cfg, genotype, seed=0)
        value, trajectory, harvests = npv_finite(cfg, genotype, controls)
        assert np.isfinite(value)
        assert trajectory.shape == (genotype.t1 + 1, 12)
        assert harvests.shape == (genotype.t1, 12)

    def test_model_fingerprint_accepts_config(self):
        cfg = base_case()
        assert model_fingerprint(cfg) == model_fingerprint(base_case())
