"""
A module containing the desk-scale convolutional score network, its score-matching training and its serialization.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import pathlib
import warnings
from typing import Sequence

import numpy as np
import torch
from tqdm.auto import tqdm

from .._calib import coil_project
from .._errors import ArrayFormatError, TrainingDivergedError
from .._helper import export, verify_isinstance
from .._io import read_array, write_array
from .._options import get_options
from .._sim import CoilSensitivities
from .._tensor import as_complex
from ..typing import ArrayLike, MapsLike
from ._schedule import DiffusionSchedule
from ._score import ScoreModel

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = "smsdiff-score-model"


def fft2c_torch(x: torch.Tensor) -> torch.Tensor:
    dims = (-2, -1)
    return torch.fft.fftshift(torch.fft.fft2(torch.fft.ifftshift(x, dim=dims), norm="ortho"), dim=dims)


def ifft2c_torch(x: torch.Tensor) -> torch.Tensor:
    dims = (-2, -1)
    return torch.fft.fftshift(torch.fft.ifft2(torch.fft.ifftshift(x, dim=dims), norm="ortho"), dim=dims)


def coil_project_torch(x: torch.Tensor, maps: torch.Tensor) -> torch.Tensor:
    image = torch.sum(maps.conj() * ifft2c_torch(x), dim=-3, keepdim=True)
    return fft2c_torch(maps * image)


@export
class ScoreNetwork(torch.nn.Module):
    r"""
    A shallow convolutional residual denoiser $h_\theta(z_t, t)$ predicting the clean k-space.

    The network coil-combines $z_t$ to an image, feeds its real and imaginary parts and a constant channel holding
    $t$ through three circular-padded 3x3 convolutions, adds the result to the image and re-expands it onto the
    coils. The last convolution starts at zero, so the untrained network is the coil projection.

    Arguments:
        width: The number of hidden channels.

    Group:
        diffusion
    """

    def __init__(self, width: int = 16):
        super().__init__()
        self.width = width
        self.body = torch.nn.Sequential(
            torch.nn.Conv2d(3, width, 3, padding=1, padding_mode="circular"),
            torch.nn.ReLU(),
            torch.nn.Conv2d(width, width, 3, padding=1, padding_mode="circular"),
            torch.nn.ReLU(),
            torch.nn.Conv2d(width, 2, 3, padding=1, padding_mode="circular"),
        )
        torch.nn.init.zeros_(self.body[-1].weight)
        torch.nn.init.zeros_(self.body[-1].bias)

    def forward(self, z_t: torch.Tensor, t: torch.Tensor, maps: torch.Tensor) -> torch.Tensor:
        """
        Maps `z_t` `(B, nc, ny, nx)` at times `t` `(B,)` to the clean k-space estimate, with `maps` `(nc, ny, nx)` or
        `(B, nc, ny, nx)`.
        """
        image = torch.sum(maps.conj() * ifft2c_torch(z_t), dim=-3)
        t_channel = t.reshape(-1, 1, 1).to(image.real.dtype).expand_as(image.real)
        features = torch.stack([image.real, image.imag, t_channel], dim=1)
        residual = self.body(features)
        image = image + torch.complex(residual[:, 0], residual[:, 1])
        return fft2c_torch(maps * image[:, None])


def _attenuation(schedule: DiffusionSchedule, t: torch.Tensor, dtype: torch.dtype) -> torch.Tensor:
    masks = np.stack([schedule.atten_at(float(value)) for value in t.detach().cpu().numpy()])
    return torch.as_tensor(masks, dtype=dtype)


@export
def score_matching_loss(
    network: torch.nn.Module,
    z0: torch.Tensor,
    z_t: torch.Tensor,
    t: torch.Tensor,
    schedule: DiffusionSchedule,
    maps: torch.Tensor,
) -> torch.Tensor:
    r"""
    Computes the weighted denoising score-matching loss with unit time weighting.

    Arguments:
        network: Any module mapping `(z_t, t, maps)` to a clean k-space estimate.
        z0: The clean k-space with shape `(B, nc, ny, nx)`.
        z_t: The perturbed k-space.
        t: The diffusion times with shape `(B,)`.
        schedule: The schedule supplying $A_t$.
        maps: The coil sensitivities as a complex tensor.

    Returns:
        The batch mean of $\|\bar{S}^*(A_t \odot (h_\theta(z_t, t) - z_0))\|^2 / (n_y n_x)$.

    Group:
        diffusion
    """
    verify_isinstance(schedule, DiffusionSchedule)
    prediction = network(z_t, t, maps)
    atten = _attenuation(schedule, t, prediction.real.dtype)
    weighted = atten[:, None] * (prediction - z0)
    combined = torch.sum(maps.conj() * ifft2c_torch(weighted), dim=-3)
    ny, nx = schedule.shape
    return torch.mean(torch.sum(torch.abs(combined) ** 2, dim=(-2, -1))) / (ny * nx)


@export
@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """
    The score-network training hyperparameters.

    Group:
        diffusion
    """

    steps: int = 500
    batch_size: int = 4
    learning_rate: float = 1e-2
    momentum: float = 0.9
    width: int = 16
    t_min: float = 1e-3
    log_every: int = 50
    seed: int = 0
    min_reduction: float = 0.5

    def __post_init__(self):
        if not self.steps >= 0:
            raise ValueError(f"Argument 'steps' must be non-negative, not {self.steps}.")
        if not self.batch_size >= 1:
            raise ValueError(f"Argument 'batch_size' must be at least 1, not {self.batch_size}.")
        if not self.learning_rate > 0:
            raise ValueError(f"Argument 'learning_rate' must be positive, not {self.learning_rate}.")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"Argument 'momentum' must be in [0, 1), not {self.momentum}.")
        if not self.width >= 1:
            raise ValueError(f"Argument 'width' must be at least 1, not {self.width}.")
        if not 0 <= self.t_min < 1:
            raise ValueError(f"Argument 't_min' must be in [0, 1), not {self.t_min}.")
        if not self.log_every >= 1:
            raise ValueError(f"Argument 'log_every' must be at least 1, not {self.log_every}.")
        if not 0 <= self.min_reduction < 1:
            raise ValueError(f"Argument 'min_reduction' must be in [0, 1), not {self.min_reduction}.")


@export
class NetworkScoreModel(ScoreModel):
    r"""
    A score model backed by a trained :obj:`~smsdiff.ScoreNetwork`.

    The denoiser is the network, $\hat{z}_0 = h_\theta(z_t, t)$, and the score follows from Tweedie's formula,
    $\nabla \log p_t(z_t) = \bar{S}\bar{S}^* (A_t \odot \hat{z}_0 - z_t) / \sigma(t)^2$.

    Arguments:
        network: The network.
        schedule: The schedule it was trained on.
        train_config: The training hyperparameters, kept for the manifest.
        history: The training loss per step.
        held_out: The held-out loss before and after training.

    Group:
        diffusion
    """

    def __init__(
        self,
        network: ScoreNetwork,
        schedule: DiffusionSchedule,
        train_config: TrainConfig | None = None,
        history: Sequence[float] = (),
        held_out: tuple[float, float] | None = None,
    ):
        super().__init__(schedule)
        verify_isinstance(network, ScoreNetwork)
        verify_isinstance(train_config, TrainConfig, optional=True)
        self._network = network.eval()
        self._train_config = train_config
        self._history = list(history)
        self._held_out = held_out

    def __repr__(self) -> str:
        n_params = sum(p.numel() for p in self._network.parameters())
        return f"<NetworkScoreModel: width={self._network.width}, parameters={n_params}>"

    def denoise(self, z_t: ArrayLike, t: float, maps: CoilSensitivities) -> np.ndarray:
        z_t = as_complex(z_t, "z_t")
        real_dtype = next(self._network.parameters()).dtype
        complex_dtype = torch.complex128 if real_dtype == torch.float64 else torch.complex64

        batch = z_t.reshape(-1, *z_t.shape[-3:])
        with torch.no_grad():
            out = self._network(
                torch.as_tensor(batch, dtype=complex_dtype),
                torch.full((batch.shape[0],), float(t), dtype=real_dtype),
                torch.as_tensor(maps.maps, dtype=complex_dtype),
            )

        return out.numpy().astype(np.complex128).reshape(z_t.shape)

    def score(self, z_t: ArrayLike, t: float, maps: CoilSensitivities) -> np.ndarray:
        z_t = as_complex(z_t, "z_t")
        z0_hat = self.denoise(z_t, t, maps)
        return coil_project((self.schedule.atten_at(t) * z0_hat - z_t) / self.schedule.sigma_at(t) ** 2, maps)

    @property
    def network(self) -> ScoreNetwork:
        return self._network

    @property
    def train_config(self) -> TrainConfig | None:
        return self._train_config

    @property
    def history(self) -> list[float]:
        return list(self._history)

    @property
    def held_out(self) -> tuple[float, float] | None:
        """
        The held-out loss `(initial, final)` measured by :func:`~smsdiff.train_score`, or `None` for a loaded model.
        """
        return self._held_out

    @property
    def converged(self) -> bool | None:
        """
        Indicates whether the held-out loss fell by at least `train_config.min_reduction` of its initial value, or
        `None` when no held-out loss was measured.
        """
        if self._held_out is None or self._train_config is None:
            return None
        initial, final = self._held_out
        return bool(final <= (1 - self._train_config.min_reduction) * initial)


def _perturb_torch(
    z0: torch.Tensor, maps: torch.Tensor, t: torch.Tensor, schedule: DiffusionSchedule, generator: torch.Generator
) -> torch.Tensor:
    real_dtype = z0.real.dtype
    shape = tuple(z0.shape)
    noise = torch.complex(
        torch.randn(shape, generator=generator, dtype=real_dtype), torch.randn(shape, generator=generator, dtype=real_dtype)
    ) / np.sqrt(2)
    atten = _attenuation(schedule, t, real_dtype)[:, None]
    sigma = torch.as_tensor(schedule.sigma_at(t.detach().cpu().numpy()), dtype=real_dtype).reshape(-1, 1, 1, 1)
    return atten * z0 + sigma * coil_project_torch(noise, maps)


@export
def train_score(
    dataset: Sequence[ArrayLike],
    maps_per_item: MapsLike,
    schedule: DiffusionSchedule,
    train_config: TrainConfig | None = None,
) -> NetworkScoreModel:
    r"""
    Trains a :obj:`~smsdiff.ScoreNetwork` by denoising score matching on single-slice multi-coil k-space.

    Arguments:
        dataset: The clean k-space items, each with shape `(nc, ny, nx)`.
        maps_per_item: Coil sensitivities shared by all items, or one set per item.
        schedule: The schedule.
        train_config: The hyperparameters. The default is :obj:`~smsdiff.TrainConfig()`.

    Returns:
        The trained score model.

    Raises:
        TrainingDivergedError: If the loss becomes non-finite.

    Notes:
        Each step draws a batch of items and times $t \sim U(t_{min}, 1)$, perturbs the items with the forward process
        and takes one SGD-with-momentum step on :func:`score_matching_loss` divided by the initial held-out loss, so
        `learning_rate` does not depend on the scale of the data. The last item is held out (unless there is only one)
        and its loss at fixed times and noise is logged before and after training. When it falls by less than
        `train_config.min_reduction` a :obj:`RuntimeWarning` is emitted and the returned model has
        `converged == False`. All randomness comes from generators seeded by `train_config.seed`.

    Group:
        diffusion
    """
    verify_isinstance(schedule, DiffusionSchedule)
    config = TrainConfig() if train_config is None else train_config
    verify_isinstance(config, TrainConfig)

    items = [as_complex(item, "dataset") for item in dataset]
    if len(items) == 0:
        raise ValueError("Argument 'dataset' must contain at least one item.")
    shape = items[0].shape
    if not (len(shape) == 3 and shape[-2:] == schedule.shape):
        raise ValueError(f"Dataset items must have shape (nc, {schedule.shape[0]}, {schedule.shape[1]}), not {shape}.")
    for item in items:
        if not item.shape == shape:
            raise ValueError(f"All dataset items must have the same shape, not {shape} and {item.shape}.")
    if isinstance(maps_per_item, CoilSensitivities):
        maps_per_item = [maps_per_item] * len(items)
    maps_per_item = list(maps_per_item)
    if not len(maps_per_item) == len(items):
        raise ValueError(f"Expected {len(items)} sets of coil sensitivities, one per item, not {len(maps_per_item)}.")

    data = torch.as_tensor(np.stack(items), dtype=torch.complex64)
    smaps = torch.as_tensor(np.stack([m.maps for m in maps_per_item]), dtype=torch.complex64)
    holdout = len(items) - 1
    train_idx = torch.arange(max(len(items) - 1, 1))

    generator = torch.Generator().manual_seed(config.seed)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(config.seed)
        network = ScoreNetwork(config.width)
    optimizer = torch.optim.SGD(network.parameters(), lr=config.learning_rate, momentum=config.momentum)

    n_held = 8
    held_t = torch.linspace(max(config.t_min, 1e-3), 1.0, n_held, dtype=torch.float64)
    held_z0 = data[holdout].expand(n_held, *shape)
    held_maps = smaps[holdout].expand(n_held, *shape)
    held_zt = _perturb_torch(held_z0, held_maps, held_t, schedule, generator)

    def held_out_loss() -> float:
        with torch.no_grad():
            return float(score_matching_loss(network, held_z0, held_zt, held_t.float(), schedule, held_maps))

    initial = held_out_loss()
    scale = initial if initial > 0 else 1.0
    history = []
    network.train()
    for step in tqdm(range(config.steps), desc="Training", disable=not get_options()["progress"]):
        idx = train_idx[torch.randint(len(train_idx), (config.batch_size,), generator=generator)]
        t = config.t_min + (1 - config.t_min) * torch.rand(config.batch_size, generator=generator, dtype=torch.float64)
        z0, maps = data[idx], smaps[idx]
        z_t = _perturb_torch(z0, maps, t, schedule, generator)

        loss = score_matching_loss(network, z0, z_t, t.float(), schedule, maps)
        if not torch.isfinite(loss):
            raise TrainingDivergedError(f"The score-matching loss is not finite at step {step}.", step=step)

        optimizer.zero_grad()
        (loss / scale).backward()
        torch.nn.utils.clip_grad_norm_(network.parameters(), 1.0)
        optimizer.step()
        history.append(float(loss))

        if (step + 1) % config.log_every == 0:
            logger.info("step %d/%d: loss %.4e", step + 1, config.steps, history[-1])

    final = held_out_loss()
    logger.info("Held-out loss %.4e -> %.4e", initial, final)
    model = NetworkScoreModel(network, schedule, config, history, held_out=(initial, final))
    if not model.converged:
        logger.warning("The held-out loss did not fall by %g (%.4e -> %.4e)", config.min_reduction, initial, final)
        warnings.warn(
            f"The held-out score-matching loss fell from {initial:.4e} to {final:.4e}, "
            f"less than the required reduction of {config.min_reduction:g}.",
            RuntimeWarning,
            stacklevel=2,
        )

    return model


###############################################################################
# Serialization
###############################################################################


def _parameter_file(key: str) -> str:
    return "param_" + key.replace(".", "_")


@export
def save_score_model(model: NetworkScoreModel, directory: str | pathlib.Path) -> pathlib.Path:
    """
    Writes a network score model to a directory: one interchange-format array per parameter and a `manifest.json`.

    Arguments:
        model: The model.
        directory: The output directory, created if missing.

    Returns:
        The path of the manifest.

    Group:
        diffusion
    """
    verify_isinstance(model, NetworkScoreModel)
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    parameters = {}
    for key, value in model.network.state_dict().items():
        array = value.detach().cpu().numpy().astype(np.float32)
        write_array(directory / _parameter_file(key), array)
        parameters[key] = {"file": _parameter_file(key), "shape": list(array.shape)}

    manifest = {
        "format": MANIFEST_FORMAT,
        "width": model.network.width,
        "parameters": parameters,
        "schedule": model.schedule.to_dict(),
        "schedule_digest": model.schedule.digest(),
        "train_config": None if model.train_config is None else dataclasses.asdict(model.train_config),
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")

    return path


@export
def load_score_model(directory: str | pathlib.Path) -> NetworkScoreModel:
    """
    Reads a network score model written by :func:`save_score_model`. Parameters are restored bit-exactly.

    Raises:
        ArrayFormatError: If the manifest is missing fields, its schedule digest does not match or a parameter has the
            wrong shape.

    Group:
        diffusion
    """
    directory = pathlib.Path(directory)
    path = directory / "manifest.json"
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ArrayFormatError(path, f"not valid JSON ({e})") from None
    for field in ("format", "width", "parameters", "schedule", "schedule_digest"):
        if field not in manifest:
            raise ArrayFormatError(path, f"missing field {field!r}")
    if not manifest["format"] == MANIFEST_FORMAT:
        raise ArrayFormatError(path, f"unsupported format {manifest['format']!r}")

    try:
        schedule = DiffusionSchedule(**manifest["schedule"])
    except (TypeError, ValueError) as e:
        raise ArrayFormatError(path, f"invalid schedule ({e})") from None
    if not schedule.digest() == manifest["schedule_digest"]:
        raise ArrayFormatError(path, "schedule digest does not match the schedule parameters")

    network = ScoreNetwork(int(manifest["width"]))
    state = {}
    for key, entry in manifest["parameters"].items():
        if not ("file" in entry and "shape" in entry):
            raise ArrayFormatError(path, f"parameter {key!r} needs the fields 'file' and 'shape'")
        array = read_array(directory / entry["file"])
        if not list(array.shape) == entry["shape"]:
            raise ArrayFormatError(directory / entry["file"], f"shape {list(array.shape)} != manifest {entry['shape']}")
        state[key] = torch.from_numpy(np.ascontiguousarray(array, dtype=np.float32))
    try:
        network.load_state_dict(state)
        train_config = manifest.get("train_config")
        train_config = None if train_config is None else TrainConfig(**train_config)
    except (RuntimeError, TypeError, ValueError) as e:
        raise ArrayFormatError(path, f"parameters do not match the network ({e})") from None

    return NetworkScoreModel(network, schedule, train_config)
