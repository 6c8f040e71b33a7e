"""
A pytest module to test the run configuration and its hash.
"""

import json

import pytest

import smsdiff


def test_defaults():
    config = smsdiff.RunConfig()
    assert (config.sim.ny, config.sim.nx, config.sim.nc, config.sim.mb) == (320, 320, 8, 3)
    assert config.sim.caipi_fraction == "1/3"
    assert (config.sim.accel, config.sim.acs_lines) == (3, 32)
    assert (config.calib.kh, config.calib.kw) == (5, 5)
    assert config.diffusion.n_steps == 200
    assert config.sampler.n_corrector == 1
    assert config.metrics.ssim_window == 11
    assert smsdiff.load_config() == config


def test_derived_objects():
    config = smsdiff.override(smsdiff.RunConfig(), "sim", ny=16, nx=12, acs_lines=8)
    spec = config.acquisition_spec()
    assert (spec.mb, spec.accel, spec.acs_lines) == (3, 3, 8)
    schedule = config.schedule()
    assert schedule.shape == (16, 12)
    assert schedule.n_steps == 200
    assert config.train_config().seed == config.seed


def test_config_from_dict():
    config = smsdiff.config_from_dict({"sim": {"ny": 64, "noise_sigma": 0}, "seed": 3})
    assert config.sim.ny == 64
    assert config.sim.nx == 320
    assert config.sim.noise_sigma == 0.0 and isinstance(config.sim.noise_sigma, float)
    assert config.seed == 3


@pytest.mark.parametrize(
    "data",
    [
        {"simulation": {}},
        {"sim": {"size": 3}},
        {"sim": {"ny": 3.5}},
        {"sim": {"ny": True}},
        {"sampler": {"consistency": 1}},
        {"sim": {"accel": 0}},
        {"sim": {"caipi_fraction": "a third"}},
        {"sim": []},
        {"seed": -1},
        [],
    ],
)
def test_config_from_dict_exceptions(data):
    with pytest.raises(smsdiff.ConfigError):
        smsdiff.config_from_dict(data)


def test_config_error_is_value_error():
    assert issubclass(smsdiff.ConfigError, ValueError)


def test_load_config(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"sim": {"nc": 4}}))
    assert smsdiff.load_config(path).sim.nc == 4
    path.write_text("{")
    with pytest.raises(smsdiff.ConfigError):
        smsdiff.load_config(path)


def test_override():
    config = smsdiff.override(smsdiff.RunConfig(), seed=5)
    assert config.seed == 5
    with pytest.raises(smsdiff.ConfigError):
        smsdiff.override(config, "nope", ny=3)
    with pytest.raises(smsdiff.ConfigError):
        smsdiff.override(config, "sim", accel=0)
    with pytest.raises(smsdiff.ConfigError):
        smsdiff.override(config, "sim", unknown=1)


def test_config_hash():
    config = smsdiff.RunConfig()
    assert len(smsdiff.config_hash(config)) == 64
    assert smsdiff.config_hash(config) == smsdiff.config_hash(smsdiff.override(config, out="elsewhere"))
    assert smsdiff.config_hash(config) != smsdiff.config_hash(smsdiff.override(config, seed=1))
    assert smsdiff.config_hash(config) != smsdiff.config_hash(smsdiff.override(config, "sampler", snr=0.2))


def test_write_read_roundtrip(tmp_path):
    config = smsdiff.override(smsdiff.RunConfig(), "sim", ny=64, nx=64)
    path = smsdiff.write_config(config, tmp_path)
    document = json.loads(path.read_text())
    assert document["config_hash"] == smsdiff.config_hash(config)
    assert "out" not in document["config"]

    loaded = smsdiff.read_run_config(tmp_path)
    assert loaded == smsdiff.override(config, out=str(tmp_path))


def test_read_rejects_tampered_config(tmp_path):
    path = smsdiff.write_config(smsdiff.RunConfig(), tmp_path)
    document = json.loads(path.read_text())
    document["config"]["seed"] = 9
    path.write_text(json.dumps(document))
    with pytest.raises(smsdiff.ConfigError):
        smsdiff.read_run_config(tmp_path)
