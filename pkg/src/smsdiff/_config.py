"""
A module containing the run configuration of the command-line pipeline: typed sections, a strict JSON loader and the
canonical configuration hash.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import pathlib
from fractions import Fraction
from typing import Any

from ._diffusion import DiffusionSchedule, TrainConfig
from ._errors import ConfigError
from ._helper import export
from ._sim import AcquisitionSpec


def _check(condition: bool, section: str, message: str):
    if not condition:
        raise ConfigError(f"[{section}] {message}")


@dataclasses.dataclass(frozen=True)
class SimConfig:
    ny: int = 320
    nx: int = 320
    nc: int = 8
    mb: int = 3
    caipi_fraction: str = "1/3"
    accel: int = 3
    acs_lines: int = 32
    noise_sigma: float = 0.0

    def __post_init__(self):
        _check(self.ny >= 1 and self.nx >= 1, "sim", f"ny and nx must be at least 1, not {self.ny} and {self.nx}")
        _check(self.nc >= 1, "sim", f"nc must be at least 1, not {self.nc}")
        _check(self.mb >= 1, "sim", f"mb must be at least 1, not {self.mb}")
        _check(1 <= self.accel <= self.ny, "sim", f"accel must be in [1, ny], not {self.accel}")
        _check(0 <= self.acs_lines <= self.ny, "sim", f"acs_lines must be in [0, ny], not {self.acs_lines}")
        _check(self.noise_sigma >= 0, "sim", f"noise_sigma must be non-negative, not {self.noise_sigma}")
        try:
            Fraction(self.caipi_fraction)
        except (ValueError, ZeroDivisionError):
            raise ConfigError(f"[sim] caipi_fraction must be a fraction such as '1/3', not {self.caipi_fraction!r}") from None


@dataclasses.dataclass(frozen=True)
class CalibConfig:
    kh: int = 5
    kw: int = 5
    tikhonov: float = 1e-6
    pattern_aware: bool = False
    spirit_kh: int = 5
    spirit_kw: int = 5
    spirit_tikhonov: float = 1e-6
    spirit_iters: int = 100

    def __post_init__(self):
        for name in ("kh", "kw", "spirit_kh", "spirit_kw"):
            value = getattr(self, name)
            _check(value >= 1 and value % 2 == 1, "calib", f"{name} must be a positive odd integer, not {value}")
        _check(self.tikhonov >= 0, "calib", f"tikhonov must be non-negative, not {self.tikhonov}")
        _check(self.spirit_tikhonov >= 0, "calib", f"spirit_tikhonov must be non-negative, not {self.spirit_tikhonov}")
        _check(self.spirit_iters >= 0, "calib", f"spirit_iters must be non-negative, not {self.spirit_iters}")


@dataclasses.dataclass(frozen=True)
class DiffusionConfig:
    n_steps: int = 200
    sigma_min: float = 0.01
    sigma_max: float = 1.0
    rho: float = 0.125
    n_train: int = 50
    train_steps: int = 500
    batch_size: int = 4
    learning_rate: float = 1e-2
    momentum: float = 0.9
    width: int = 16
    t_min: float = 1e-3
    log_every: int = 50

    def __post_init__(self):
        _check(self.n_steps >= 1, "diffusion", f"n_steps must be at least 1, not {self.n_steps}")
        _check(0 < self.sigma_min < self.sigma_max, "diffusion", "sigma_min and sigma_max must satisfy 0 < min < max")
        _check(self.rho > 0, "diffusion", f"rho must be positive, not {self.rho}")
        _check(self.n_train >= 1, "diffusion", f"n_train must be at least 1, not {self.n_train}")
        _check(self.train_steps >= 0, "diffusion", f"train_steps must be non-negative, not {self.train_steps}")
        _check(self.batch_size >= 1, "diffusion", f"batch_size must be at least 1, not {self.batch_size}")
        _check(self.learning_rate > 0, "diffusion", f"learning_rate must be positive, not {self.learning_rate}")
        _check(0 <= self.momentum < 1, "diffusion", f"momentum must be in [0, 1), not {self.momentum}")
        _check(self.width >= 1, "diffusion", f"width must be at least 1, not {self.width}")
        _check(0 <= self.t_min < 1, "diffusion", f"t_min must be in [0, 1), not {self.t_min}")
        _check(self.log_every >= 1, "diffusion", f"log_every must be at least 1, not {self.log_every}")


@dataclasses.dataclass(frozen=True)
class SamplerConfig:
    n_corrector: int = 1
    snr: float = 0.16
    consistency: bool = True
    corrector_first: bool = True
    dc_weight: float = 1.0
    include_acs: bool = True

    def __post_init__(self):
        _check(self.n_corrector >= 0, "sampler", f"n_corrector must be non-negative, not {self.n_corrector}")
        _check(self.snr > 0, "sampler", f"snr must be positive, not {self.snr}")
        _check(0 <= self.dc_weight <= 1, "sampler", f"dc_weight must be in [0, 1], not {self.dc_weight}")


@dataclasses.dataclass(frozen=True)
class MetricsConfig:
    ssim_window: int = 11

    def __post_init__(self):
        _check(self.ssim_window >= 3 and self.ssim_window % 2 == 1, "metrics", "ssim_window must be an odd integer >= 3")


SECTIONS = {
    "sim": SimConfig,
    "calib": CalibConfig,
    "diffusion": DiffusionConfig,
    "sampler": SamplerConfig,
    "metrics": MetricsConfig,
}


@export
@dataclasses.dataclass(frozen=True)
class RunConfig:
    """
    The configuration of a command-line run.

    The sections `sim`, `calib`, `diffusion`, `sampler` and `metrics` hold the parameters of each pipeline stage.
    `seed` drives every random draw and `out` names the run directory.

    Examples:
        .. ipython:: python

            config = smsdiff.RunConfig()
            config.sim.ny, config.sim.mb, config.sim.acs_lines
            smsdiff.config_hash(config)[:16]

    Group:
        config
    """

    sim: SimConfig = dataclasses.field(default_factory=SimConfig)
    calib: CalibConfig = dataclasses.field(default_factory=CalibConfig)
    diffusion: DiffusionConfig = dataclasses.field(default_factory=DiffusionConfig)
    sampler: SamplerConfig = dataclasses.field(default_factory=SamplerConfig)
    metrics: MetricsConfig = dataclasses.field(default_factory=MetricsConfig)
    seed: int = 0
    out: str = "run"

    def __post_init__(self):
        _check(self.seed >= 0, "run", f"seed must be non-negative, not {self.seed}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def acquisition_spec(self) -> AcquisitionSpec:
        """
        Returns the acquisition described by the `sim` section.
        """
        sim = self.sim
        return AcquisitionSpec(sim.mb, sim.caipi_fraction, sim.accel, sim.acs_lines, sim.noise_sigma, self.seed)

    def schedule(self) -> DiffusionSchedule:
        """
        Returns the diffusion schedule of the `diffusion` section.
        """
        d = self.diffusion
        return DiffusionSchedule(self.sim.ny, self.sim.nx, d.n_steps, d.sigma_min, d.sigma_max, d.rho)

    def train_config(self) -> TrainConfig:
        """
        Returns the training hyperparameters of the `diffusion` section.
        """
        d = self.diffusion
        return TrainConfig(d.train_steps, d.batch_size, d.learning_rate, d.momentum, d.width, d.t_min, d.log_every, self.seed)


def _coerce(section: str, name: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, str)
    if not ok:
        raise ConfigError(f"[{section}] {name} must be of type {type(default).__name__}, not {value!r}")
    return value


def _build_section(section: str, cls: type, data: Any):
    if not isinstance(data, dict):
        raise ConfigError(f"[{section}] must be a JSON object, not {type(data).__name__}")
    defaults = {field.name: field.default for field in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(defaults))
    if unknown:
        raise ConfigError(f"[{section}] unknown keys {unknown}, expected a subset of {sorted(defaults)}")
    kwargs = {name: _coerce(section, name, value, defaults[name]) for name, value in data.items()}
    return cls(**kwargs)


@export
def config_from_dict(data: dict) -> RunConfig:
    """
    Builds a run configuration from a JSON document. Missing keys take their defaults.

    Raises:
        ConfigError: If a section or key is unknown, a value has the wrong type or is out of range.

    Group:
        config
    """
    if not isinstance(data, dict):
        raise ConfigError(f"The configuration must be a JSON object, not {type(data).__name__}")
    unknown = sorted(set(data) - set(SECTIONS) - {"seed", "out"})
    if unknown:
        raise ConfigError(f"Unknown top-level keys {unknown}, expected {sorted([*SECTIONS, 'seed', 'out'])}")

    kwargs = {name: _build_section(name, cls, data.get(name, {})) for name, cls in SECTIONS.items()}
    if "seed" in data:
        kwargs["seed"] = _coerce("run", "seed", data["seed"], 0)
    if "out" in data:
        kwargs["out"] = _coerce("run", "out", data["out"], "")

    return RunConfig(**kwargs)


@export
def load_config(path: str | pathlib.Path | None = None) -> RunConfig:
    """
    Reads a run configuration from a JSON file, or returns the defaults when `path` is `None`.

    Raises:
        ConfigError: If the file is not valid JSON or does not match the schema.

    Group:
        config
    """
    if path is None:
        return RunConfig()
    path = pathlib.Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    return config_from_dict(data)


@export
def override(config: RunConfig, section: str | None = None, **changes) -> RunConfig:
    """
    Returns a copy of `config` with top-level values, or the values of one section, replaced.

    Group:
        config
    """
    try:
        if section is None:
            return dataclasses.replace(config, **changes)
        if section not in SECTIONS:
            raise ConfigError(f"Unknown section {section!r}")
        return dataclasses.replace(config, **{section: dataclasses.replace(getattr(config, section), **changes)})
    except TypeError as e:
        raise ConfigError(str(e)) from None


def canonical_json(config: RunConfig) -> str:
    """
    Returns the canonical JSON (sorted keys, compact separators) of the configuration without its output directory.
    """
    data = config.to_dict()
    data.pop("out")
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


@export
def config_hash(config: RunConfig) -> str:
    """
    Returns the SHA-256 digest of the canonical JSON of a run configuration.

    The output directory is excluded, so the same run written to two directories has one hash.

    Group:
        config
    """
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


@export
def write_config(config: RunConfig, directory: str | pathlib.Path) -> pathlib.Path:
    """
    Writes the resolved configuration and its hash to `directory/config.json`.

    Group:
        config
    """
    directory = pathlib.Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    data = config.to_dict()
    data.pop("out")
    document = {"config": data, "config_hash": config_hash(config)}
    path = directory / "config.json"
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")
    return path


@export
def read_run_config(directory: str | pathlib.Path) -> RunConfig:
    """
    Reads the configuration written by :func:`write_config` back, with `out` set to `directory`.

    Raises:
        ConfigError: If the stored hash does not match the stored configuration.

    Group:
        config
    """
    directory = pathlib.Path(directory)
    path = directory / "config.json"
    try:
        document = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: not valid JSON ({e})") from None
    if not (isinstance(document, dict) and "config" in document and "config_hash" in document):
        raise ConfigError(f"{path}: expected the keys 'config' and 'config_hash'")

    config = config_from_dict({**document["config"], "out": str(directory)})
    if not config_hash(config) == document["config_hash"]:
        raise ConfigError(f"{path}: the stored hash does not match the stored configuration")

    return config
