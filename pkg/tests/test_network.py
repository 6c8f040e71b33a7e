"""
A pytest module to test the score network, its training loss and its serialization.
"""

import json
import warnings

import numpy as np
import pytest
import torch

import smsdiff
from smsdiff._diffusion._network import coil_project_torch


@pytest.fixture(scope="module")
def tiny_dataset():
    images = smsdiff.make_phantom(16, 16, 4, seed=9)
    maps = smsdiff.simulate_coils(16, 16, 2, seed=9)
    items = [smsdiff.fft2c(maps.expand(image)) for image in images]
    return items, maps


class AffineDenoiser(torch.nn.Module):
    """A three-parameter stand-in network, h(z, t) = (a + i c + b t) z."""

    def __init__(self):
        super().__init__()
        self.a = torch.nn.Parameter(torch.tensor(0.7, dtype=torch.float64))
        self.b = torch.nn.Parameter(torch.tensor(-0.3, dtype=torch.float64))
        self.c = torch.nn.Parameter(torch.tensor(0.2, dtype=torch.float64))

    def forward(self, z_t, t, maps):
        gain = torch.complex(self.a + self.b * t, self.c * torch.ones_like(t))
        return gain.reshape(-1, 1, 1, 1) * z_t


def test_untrained_network_is_coil_projection(tiny_dataset):
    items, maps = tiny_dataset
    network = smsdiff.ScoreNetwork(width=4)
    z = torch.as_tensor(np.stack(items[:2]) + 0.1, dtype=torch.complex64)
    smaps = torch.as_tensor(maps.maps, dtype=torch.complex64)
    with torch.no_grad():
        out = network(z, torch.tensor([0.2, 0.8]), smaps)
    assert out.shape == z.shape
    assert torch.allclose(out, coil_project_torch(z, smaps), atol=1e-5)
    expected = smsdiff.coil_project(np.stack(items[:2]) + 0.1, maps)
    assert np.allclose(out.numpy(), expected, atol=1e-4)


def test_loss_gradient_matches_finite_differences(tiny_dataset):
    items, maps = tiny_dataset
    schedule = smsdiff.make_schedule(16, 16, n_steps=10)
    z0 = torch.as_tensor(np.stack(items[:2]), dtype=torch.complex128)
    rng = np.random.default_rng(0)
    z_t = z0 + torch.as_tensor(0.1 * rng.standard_normal(z0.shape), dtype=torch.complex128)
    t = torch.tensor([0.3, 0.7], dtype=torch.float64)
    smaps = torch.as_tensor(maps.maps, dtype=torch.complex128)

    model = AffineDenoiser()
    loss = smsdiff.score_matching_loss(model, z0, z_t, t, schedule, smaps)
    loss.backward()

    eps = 1e-6
    for name, param in model.named_parameters():
        with torch.no_grad():
            param += eps
            upper = float(smsdiff.score_matching_loss(model, z0, z_t, t, schedule, smaps))
            param -= 2 * eps
            lower = float(smsdiff.score_matching_loss(model, z0, z_t, t, schedule, smaps))
            param += eps
        numeric = (upper - lower) / (2 * eps)
        assert np.isclose(float(param.grad), numeric, rtol=1e-4), name


def test_loss_is_zero_for_perfect_denoiser(tiny_dataset):
    items, maps = tiny_dataset
    schedule = smsdiff.make_schedule(16, 16, n_steps=10)
    z0 = torch.as_tensor(np.stack(items[:2]), dtype=torch.complex128)
    smaps = torch.as_tensor(maps.maps, dtype=torch.complex128)

    class Oracle(torch.nn.Module):
        def forward(self, z_t, t, maps):
            return z0

    loss = smsdiff.score_matching_loss(Oracle(), z0, z0, torch.tensor([0.1, 0.9], dtype=torch.float64), schedule, smaps)
    assert float(loss) == 0


def test_train_config_exceptions():
    with pytest.raises(ValueError):
        smsdiff.TrainConfig(steps=-1)
    with pytest.raises(ValueError):
        smsdiff.TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        smsdiff.TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        smsdiff.TrainConfig(momentum=1)
    with pytest.raises(ValueError):
        smsdiff.TrainConfig(t_min=1)
    with pytest.raises(ValueError):
        smsdiff.TrainConfig(min_reduction=1)


def test_train_reduces_held_out_loss(tiny_dataset):
    items, maps = tiny_dataset
    schedule = smsdiff.make_schedule(16, 16, n_steps=10)
    config = smsdiff.TrainConfig(steps=200, batch_size=4, width=8, log_every=50, seed=1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = smsdiff.train_score(items, maps, schedule, config)

    assert len(model.history) == 200
    assert np.all(np.isfinite(model.history))
    initial, final = model.held_out
    assert final < initial
    assert model.converged == (final <= 0.5 * initial)
    assert model.train_config == config


def test_train_reports_convergence(tiny_dataset):
    items, maps = tiny_dataset
    schedule = smsdiff.make_schedule(16, 16, n_steps=10)
    with pytest.warns(RuntimeWarning):
        model = smsdiff.train_score(items, maps, schedule, smsdiff.TrainConfig(steps=0, width=4))
    initial, final = model.held_out
    assert initial == final > 0
    assert model.converged is False

    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        model = smsdiff.train_score(items, maps, schedule, smsdiff.TrainConfig(steps=0, width=4, min_reduction=0))
    assert model.converged is True

    untrained = smsdiff.NetworkScoreModel(smsdiff.ScoreNetwork(width=2), schedule)
    assert untrained.converged is None


def test_train_fits_single_image():
    image = np.ones((16, 16), dtype=complex)
    maps = smsdiff.simulate_coils(16, 16, 2, seed=9)
    item = smsdiff.fft2c(maps.expand(image))
    schedule = smsdiff.make_schedule(16, 16, n_steps=10)
    config = smsdiff.TrainConfig(steps=200, batch_size=2, width=8, seed=2)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = smsdiff.train_score([item, item], maps, schedule, config)

    t = schedule.t_grid[1]
    z_t = smsdiff.forward_perturb(item, t, schedule, maps, seed=0)
    estimate = maps.combine(smsdiff.ifft2c(model.denoise(z_t, t, maps)))
    assert smsdiff.nmse(image, estimate) < 0.1


def test_train_is_reproducible(tiny_dataset):
    items, maps = tiny_dataset
    schedule = smsdiff.make_schedule(16, 16, n_steps=10)
    config = smsdiff.TrainConfig(steps=5, batch_size=2, width=4, seed=3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        a = smsdiff.train_score(items, maps, schedule, config)
        b = smsdiff.train_score(items, maps, schedule, config)
    assert a.history == b.history
    for pa, pb in zip(a.network.parameters(), b.network.parameters()):
        assert torch.equal(pa, pb)


def test_train_exceptions(tiny_dataset):
    items, maps = tiny_dataset
    schedule = smsdiff.make_schedule(16, 16, n_steps=10)
    with pytest.raises(ValueError):
        smsdiff.train_score([], maps, schedule)
    with pytest.raises(ValueError):
        smsdiff.train_score([items[0][:, :8]], maps, schedule)
    with pytest.raises(ValueError):
        smsdiff.train_score(items, [maps], schedule)


def test_train_diverges_on_non_finite_data(tiny_dataset):
    items, maps = tiny_dataset
    schedule = smsdiff.make_schedule(16, 16, n_steps=10)
    bad = [np.full_like(items[0], np.inf)] * 3
    with pytest.raises(smsdiff.TrainingDivergedError) as info:
        smsdiff.train_score(bad, maps, schedule, smsdiff.TrainConfig(steps=3, batch_size=1, width=2))
    assert info.value.step == 0


def test_network_model_tweedie():
    maps = smsdiff.simulate_coils(16, 16, 1)
    image = smsdiff.make_phantom(16, 16, seed=2)[0]
    schedule = smsdiff.make_schedule(16, 16, n_steps=10)
    torch.manual_seed(0)
    network = smsdiff.ScoreNetwork(width=4)
    for param in network.parameters():
        torch.nn.init.normal_(param, std=0.05)
    model = smsdiff.NetworkScoreModel(network, schedule)

    z = smsdiff.fft2c(maps.expand(image + 0.05))
    t = 0.3
    z0_hat = model.denoise(z, t, maps)
    tweedie = (z + schedule.sigma_at(t) ** 2 * model.score(z, t, maps)) / schedule.atten_at(t)
    assert np.allclose(z0_hat, tweedie, rtol=1e-3, atol=1e-4)


def test_save_load_roundtrip(tiny_dataset, tmp_path):
    items, maps = tiny_dataset
    schedule = smsdiff.make_schedule(16, 16, n_steps=10)
    config = smsdiff.TrainConfig(steps=3, batch_size=2, width=4)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = smsdiff.train_score(items, maps, schedule, config)

    path = smsdiff.save_score_model(model, tmp_path / "model")
    assert path.name == "manifest.json"
    loaded = smsdiff.load_score_model(tmp_path / "model")

    assert loaded.schedule.digest() == schedule.digest()
    assert loaded.train_config == config
    state, loaded_state = model.network.state_dict(), loaded.network.state_dict()
    assert state.keys() == loaded_state.keys()
    for key in state:
        assert torch.equal(state[key], loaded_state[key])
    assert np.array_equal(model.denoise(items[0], 0.5, maps), loaded.denoise(items[0], 0.5, maps))


def test_load_rejects_tampered_manifest(tiny_dataset, tmp_path):
    _, maps = tiny_dataset
    schedule = smsdiff.make_schedule(16, 16, n_steps=10)
    model = smsdiff.NetworkScoreModel(smsdiff.ScoreNetwork(width=2), schedule)
    path = smsdiff.save_score_model(model, tmp_path)

    manifest = json.loads(path.read_text())
    manifest["schedule"]["n_steps"] = 11
    path.write_text(json.dumps(manifest))
    with pytest.raises(smsdiff.ArrayFormatError):
        smsdiff.load_score_model(tmp_path)

    del manifest["parameters"]
    path.write_text(json.dumps(manifest))
    with pytest.raises(smsdiff.ArrayFormatError):
        smsdiff.load_score_model(tmp_path)
