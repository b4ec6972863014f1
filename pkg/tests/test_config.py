"""Tests for experiment configuration loading and validation."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from slq_heat import ConfigError, InvalidArgumentError, config_from_dict, load_config
from slq_heat._config import DEFAULT_SIGMA, DEFAULT_TARGET, EXPERIMENT_IDS
from slq_heat.api import Profile


class TestDefaults:
    def test_time_sweep(self) -> None:
        spec = config_from_dict({"experiment": "forward-time"})
        assert spec.sweep == "time"
        assert spec.ladder == (8, 16, 32, 64)
        assert spec.reference == 512
        assert spec.n_cells == 16
        assert spec.expected_order == 1

    def test_space_sweep(self) -> None:
        spec = config_from_dict({"experiment": "slq-space"})
        assert spec.sweep == "space"
        assert spec.ladder == (8, 16, 32, 64)
        assert spec.reference == 256
        assert spec.n_steps == 16
        assert spec.expected_order == 2

    def test_bspde_sweep_is_chosen_in_the_config(self) -> None:
        assert config_from_dict({"experiment": "bspde-y"}).sweep == "time"
        spec = config_from_dict({"experiment": "bspde-z", "sweep": "space"})
        assert spec.sweep == "space"
        assert spec.reference == 256

    def test_gd_and_crosscheck(self) -> None:
        gd = config_from_dict({"experiment": "gd-contraction"})
        assert (gd.n_cells, gd.n_steps, gd.max_iters) == (8, 16, 50)
        assert gd.sweep == "none"
        crosscheck = config_from_dict({"experiment": "oracle-crosscheck"})
        assert (crosscheck.n_cells, crosscheck.n_steps) == (4, 4)

    def test_profile_defaults(self) -> None:
        spec = config_from_dict({"experiment": "forward-time"})
        assert spec.sigma == DEFAULT_SIGMA
        assert spec.target == DEFAULT_TARGET
        assert spec.backend == "chaos"
        mid = np.array([0.5])
        np.testing.assert_allclose(spec.x0.at(0.0, 1.0)(mid), [1.0])
        np.testing.assert_allclose(spec.sigma.at(1.0, 1.0)(mid), [np.exp(-1.0)])
        np.testing.assert_allclose(spec.target.at(1.0, 1.0)(mid), [2.0])
        np.testing.assert_allclose(spec.target.at(0.5, 1.0)(mid), [1.5])

    @pytest.mark.parametrize("experiment", EXPERIMENT_IDS)
    def test_every_experiment_resolves(self, experiment: str) -> None:
        spec = config_from_dict({"experiment": experiment})
        assert config_from_dict(dict(spec.to_config())) == spec


class TestValidation:
    @pytest.mark.parametrize(
        "raw",
        [
            {},
            {"experiment": "heat"},
            {"experiment": "forward-time", "colour": "red"},
            {"experiment": "forward-time", "sweep": "space"},
            {"experiment": "gd-contraction", "sweep": "time"},
            {"experiment": "bspde-y", "sweep": "diagonal"},
            {"experiment": "forward-time", "ladder": [8, 16]},
            {"experiment": "forward-time", "ladder": [8, 24, 48]},
            {"experiment": "forward-time", "ladder": [16, 8, 4]},
            {"experiment": "forward-time", "ladder": [8, 16, 32], "reference": 32},
            {"experiment": "forward-time", "ladder": [8, 16, 32], "reference": 96},
            {"experiment": "forward-space", "ladder": [1, 2, 4], "reference": 8},
            {"experiment": "forward-time", "T": 4.0, "ladder": [2, 4, 8]},
            {"experiment": "forward-time", "ladder": "8,16,32"},
            {"experiment": "forward-time", "n_cells": 1},
            {"experiment": "forward-time", "n_paths": 0},
            {"experiment": "forward-time", "seed": -1},
            {"experiment": "forward-time", "seed": 1.5},
            {"experiment": "forward-time", "alpha": True},
            {"experiment": "forward-time", "alpha": -1.0},
            {"experiment": "forward-time", "backend": "gpu"},
            {"experiment": "slq-time", "backend": "paths"},
            {"experiment": "oracle-crosscheck", "n_steps": 13},
            {"experiment": "gd-contraction", "kappa": 0.0},
            {"experiment": "gd-contraction", "max_iters": 0},
            {"experiment": "oracle-crosscheck", "basis_degree": 3},
        ],
    )
    def test_rejected(self, raw: dict[str, Any]) -> None:
        with pytest.raises(ConfigError):
            config_from_dict(raw)

    def test_not_an_object(self) -> None:
        with pytest.raises(ConfigError):
            config_from_dict([1, 2])  # type: ignore[arg-type]

    def test_config_error_is_an_argument_error(self) -> None:
        with pytest.raises(InvalidArgumentError):
            config_from_dict({"experiment": "heat"})


class TestProfiles:
    def test_override(self) -> None:
        spec = config_from_dict(
            {
                "experiment": "forward-time",
                "sigma": {"space": "bubble", "coefficients": [2.0], "time": "poly"},
            }
        )
        assert spec.sigma == Profile(space="bubble", coefficients=(2.0,), time="poly")
        shape = spec.sigma.at(0.3, 1.0)
        np.testing.assert_allclose(shape(np.array([0.5])), [0.5])

    def test_missing_keys_fall_back_to_the_default(self) -> None:
        spec = config_from_dict(
            {"experiment": "forward-time", "target": {"coefficients": [3.0]}}
        )
        assert spec.target.space == DEFAULT_TARGET.space
        assert spec.target.time == "poly"
        assert spec.target.coefficients == (3.0,)

    def test_exponential_time_factor(self) -> None:
        profile = Profile(
            space="sine", coefficients=(1.0,), time="exp", time_coefficients=(2.0, -1.0)
        )
        value = profile.at(1.0, 1.0)(np.array([0.5]))
        np.testing.assert_allclose(value, [2.0 * np.exp(-1.0)])

    @pytest.mark.parametrize(
        "profile",
        [
            {"space": "gaussian"},
            {"time": "sawtooth"},
            {"coefficients": ["a"]},
            {"colour": "red"},
            "sine",
        ],
    )
    def test_invalid(self, profile: Any) -> None:
        with pytest.raises(ConfigError):
            config_from_dict({"experiment": "forward-time", "x0": profile})


class TestOverrides:
    def test_cli_overrides(self) -> None:
        spec = config_from_dict({"experiment": "forward-time"})
        updated = spec.with_overrides(seed=7, output="out.csv", threads=2)
        assert (updated.seed, updated.output, updated.threads) == (7, "out.csv", 2)
        assert spec.with_overrides() == spec

    def test_overrides_are_validated(self) -> None:
        spec = config_from_dict({"experiment": "forward-time"})
        with pytest.raises(ConfigError):
            spec.with_overrides(threads=0)

    def test_to_config_echoes_optional_keys(self) -> None:
        spec = config_from_dict({"experiment": "gd-contraction", "kappa": 4.0})
        config = spec.to_config()
        assert config["kappa"] == 4.0
        assert "output" not in config
        assert config["ladder"] == []


class TestLoadConfig:
    def test_round_trip_through_a_file(self, tmp_path: Path) -> None:
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps({"experiment": "slq-time", "alpha": 2}))
        spec = load_config(path)
        assert spec.alpha == 2.0
        assert isinstance(spec.alpha, float)

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "missing.json")

    def test_invalid_json(self, tmp_path: Path) -> None:
        path = tmp_path / "broken.json"
        path.write_text("{experiment: slq-time")
        with pytest.raises(ConfigError, match="not valid JSON"):
            load_config(path)
