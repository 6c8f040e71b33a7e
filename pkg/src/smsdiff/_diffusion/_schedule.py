"""
A module containing the heat-diffusion schedule and the forward perturbation.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from .._calib import coil_project
from .._helper import export, verify_isinstance
from .._sim import CoilSensitivities
from .._tensor import as_complex, centered_frequencies, complex_normal, make_rng
from ..typing import ArrayLike, SeedLike


@export
class DiffusionSchedule:
    r"""
    The discretized attenuation masks and noise levels of the k-space heat diffusion.

    The forward process at time $t \in [0, 1]$ attenuates k-space by $A_t(k) = e^{-t \|k\|^2 / \rho^2}$, with $k$ in
    cycles per sample, and adds coil-projected noise of level $\sigma(t) = \sigma_{min} (\sigma_{max} / \sigma_{min})^t$.
    The grid has `n_steps + 1` uniformly spaced times $0 = t_0 < t_1 < \dots < t_N = 1$; sampling walks it from $t_N$
    down to $t_0$.

    Arguments:
        ny: The number of phase-encode lines.
        nx: The number of readout columns.
        n_steps: The number of reverse steps $N$.
        sigma_min: The noise level at $t = 0$.
        sigma_max: The noise level at $t = 1$.
        rho: The attenuation radius in cycles per sample. The Nyquist radius is 0.5.

    See Also:
        make_schedule

    Group:
        diffusion
    """

    def __init__(
        self,
        ny: int,
        nx: int,
        n_steps: int = 200,
        sigma_min: float = 0.01,
        sigma_max: float = 1.0,
        rho: float = 0.125,
    ):
        verify_isinstance(ny, (int, np.integer))
        verify_isinstance(nx, (int, np.integer))
        verify_isinstance(n_steps, (int, np.integer))
        verify_isinstance(sigma_min, (float, int))
        verify_isinstance(sigma_max, (float, int))
        verify_isinstance(rho, (float, int))
        if not (ny >= 1 and nx >= 1):
            raise ValueError(f"Arguments 'ny' and 'nx' must be at least 1, not {ny} and {nx}.")
        if not n_steps >= 1:
            raise ValueError(f"Argument 'n_steps' must be at least 1, not {n_steps}.")
        if not 0 < sigma_min < sigma_max:
            raise ValueError(f"Arguments must satisfy 0 < sigma_min < sigma_max, not {sigma_min} and {sigma_max}.")
        if not rho > 0:
            raise ValueError(f"Argument 'rho' must be positive, not {rho}.")

        self._shape = (int(ny), int(nx))
        self._n_steps = int(n_steps)
        self._sigma_min = float(sigma_min)
        self._sigma_max = float(sigma_max)
        self._rho = float(rho)

        self._t_grid = np.linspace(0.0, 1.0, self._n_steps + 1)
        self._sigmas = self.sigma_at(self._t_grid)
        ky = centered_frequencies(ny) / ny
        kx = centered_frequencies(nx) / nx
        self._k2 = ky[:, None] ** 2 + kx[None, :] ** 2

        for array in (self._t_grid, self._sigmas, self._k2):
            array.setflags(write=False)

    def __repr__(self) -> str:
        return (
            f"DiffusionSchedule(ny={self.shape[0]}, nx={self.shape[1]}, n_steps={self.n_steps}, "
            f"sigma_min={self.sigma_min}, sigma_max={self.sigma_max}, rho={self.rho})"
        )

    def atten(self, i: int) -> np.ndarray:
        """
        Returns the cumulative attenuation mask $A_{t_i}$ with shape `(ny, nx)`.
        """
        if not 0 <= i <= self.n_steps:
            raise ValueError(f"Argument 'i' must be in [0, {self.n_steps}], not {i}.")
        return self.atten_at(self._t_grid[i])

    def atten_at(self, t: float) -> np.ndarray:
        """
        Returns the attenuation mask $A_t$ at an arbitrary time.
        """
        return np.exp(-t * self._k2 / self._rho**2)

    def sigma_at(self, t: float | np.ndarray) -> float | np.ndarray:
        r"""
        Returns the noise level $\sigma(t)$.
        """
        return self._sigma_min * (self._sigma_max / self._sigma_min) ** t

    def to_dict(self) -> dict:
        """
        Returns the constructor arguments, enough to rebuild the schedule exactly.
        """
        return {
            "ny": self.shape[0],
            "nx": self.shape[1],
            "n_steps": self.n_steps,
            "sigma_min": self.sigma_min,
            "sigma_max": self.sigma_max,
            "rho": self.rho,
        }

    def digest(self) -> str:
        """
        Returns the SHA-256 digest of the canonical JSON of :meth:`to_dict`.
        """
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()

    @property
    def shape(self) -> tuple[int, int]:
        return self._shape

    @property
    def n_steps(self) -> int:
        return self._n_steps

    @property
    def t_grid(self) -> np.ndarray:
        """
        The times $t_0 = 0 < \\dots < t_N = 1$.
        """
        return self._t_grid

    @property
    def sigmas(self) -> np.ndarray:
        """
        The noise levels $\\sigma(t_i)$, strictly increasing.
        """
        return self._sigmas

    @property
    def sigma_min(self) -> float:
        return self._sigma_min

    @property
    def sigma_max(self) -> float:
        return self._sigma_max

    @property
    def rho(self) -> float:
        return self._rho


@export
def make_schedule(
    ny: int,
    nx: int,
    n_steps: int = 200,
    sigma_min: float = 0.01,
    sigma_max: float = 1.0,
    rho: float = 0.125,
) -> DiffusionSchedule:
    """
    Creates a heat-diffusion schedule.

    The defaults suit data normalized to a unit maximum image magnitude. `rho=0.125` is a quarter of the Nyquist
    radius, so the k-space edge is attenuated by $e^{-16}$ at $t = 1$.

    Examples:
        .. ipython:: python

            schedule = smsdiff.make_schedule(8, 8, n_steps=10)
            schedule.atten(10)[0, 4], np.exp(-16)

    Group:
        diffusion
    """
    return DiffusionSchedule(ny, nx, n_steps, sigma_min, sigma_max, rho)


@export
def forward_perturb(
    z0: ArrayLike,
    t: float,
    schedule: DiffusionSchedule,
    maps: CoilSensitivities,
    seed: SeedLike = None,
) -> np.ndarray:
    r"""
    Draws $z_t = A_t \odot z_0 + \sigma(t) \bar{S} \bar{S}^* n$ from the forward marginal.

    Arguments:
        z0: Clean multi-coil k-space with shape `(..., nc, ny, nx)`.
        t: The diffusion time in $[0, 1]$.
        schedule: The schedule.
        maps: The coil sensitivities of the projector.
        seed: The noise source, see :obj:`~smsdiff.typing.SeedLike`.

    Group:
        diffusion
    """
    verify_isinstance(schedule, DiffusionSchedule)
    z0 = as_complex(z0, "z0")
    if not 0 <= t <= 1:
        raise ValueError(f"Argument 't' must be in [0, 1], not {t}.")
    if not z0.shape[-2:] == schedule.shape:
        raise ValueError(f"Argument 'z0' must end in the schedule shape {schedule.shape}, not {z0.shape}.")

    rng = make_rng(seed)
    noise = coil_project(complex_normal(rng, z0.shape), maps)

    return schedule.atten_at(t) * z0 + schedule.sigma_at(t) * noise
