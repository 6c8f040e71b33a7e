"""
A module containing the score model interface and the closed-form Gaussian score.
"""

from __future__ import annotations

import abc

import numpy as np

from .._calib import coil_project
from .._helper import export, verify_isinstance
from .._sim import CoilSensitivities
from .._tensor import as_complex
from ..typing import ArrayLike
from ._schedule import DiffusionSchedule


@export
class ScoreModel(abc.ABC):
    r"""
    An abstract model of the score of the noised k-space distribution.

    .. abstract::

        :obj:`~smsdiff.ScoreModel` is an abstract base class for :obj:`~smsdiff.AnalyticGaussianScore` and
        :obj:`~smsdiff.NetworkScoreModel` and cannot be instantiated directly.

    The score is the gradient with respect to the complex conjugate, $\partial \log p_t / \partial \bar{z}$, so a
    circular Gaussian $\mathcal{CN}(\mu, v)$ has score $-(z - \mu) / v$. The two queries are related by Tweedie's
    formula $\hat{z}_0 = z_t / A_t + (\sigma(t)^2 / A_t) \bar{S} \bar{S}^* \nabla \log p_t(z_t)$.

    Group:
        diffusion
    """

    def __init__(self, schedule: DiffusionSchedule):
        verify_isinstance(schedule, DiffusionSchedule)
        self._schedule = schedule

    @abc.abstractmethod
    def score(self, z_t: ArrayLike, t: float, maps: CoilSensitivities) -> np.ndarray:
        """
        Returns the score at `z_t`, with the shape of `z_t`.
        """

    @abc.abstractmethod
    def denoise(self, z_t: ArrayLike, t: float, maps: CoilSensitivities) -> np.ndarray:
        """
        Returns the estimate of the clean k-space $\\hat{z}_0$, with the shape of `z_t`.
        """

    @property
    def schedule(self) -> DiffusionSchedule:
        return self._schedule


@export
class AnalyticGaussianScore(ScoreModel):
    r"""
    The exact score of a Gaussian prior $z_0 \sim \mathcal{CN}(\mu, v I)$ pushed through the forward process.

    Arguments:
        mean: The prior mean $\mu$ with shape `(nc, ny, nx)`.
        var: The prior variance $v > 0$ per k-space sample.
        schedule: The schedule.

    Notes:
        The marginal at time $t$ has mean $A_t \odot \mu$ and variance $A_t^2 v + \sigma(t)^2$ per sample, so

        $$\nabla \log p_t(z) = -\bar{S}\bar{S}^* \frac{z - A_t \odot \mu}{A_t^2 v + \sigma(t)^2}, \qquad
        \hat{z}_0 = \frac{A_t v z + \sigma(t)^2 \mu}{A_t^2 v + \sigma(t)^2}.$$

        Both are exact for a single coil with unit sensitivity, where the projector is the identity. The denoiser
        satisfies Tweedie's formula exactly whenever $z$ and $\mu$ lie in the projector range.

    See Also:
        analytic_gaussian_score

    Group:
        diffusion
    """

    def __init__(self, mean: ArrayLike, var: float, schedule: DiffusionSchedule):
        super().__init__(schedule)
        mean = as_complex(mean, "mean")
        if not mean.shape[-2:] == schedule.shape:
            raise ValueError(f"Argument 'mean' must end in the schedule shape {schedule.shape}, not {mean.shape}.")
        if not var > 0:
            raise ValueError(f"Argument 'var' must be positive, not {var}.")

        self._mean = mean.copy()
        self._mean.setflags(write=False)
        self._var = float(var)

    def __repr__(self) -> str:
        return f"<AnalyticGaussianScore: shape={self._mean.shape}, var={self.var}>"

    def _marginal(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        atten = self.schedule.atten_at(t)
        variance = atten**2 * self._var + self.schedule.sigma_at(t) ** 2
        return atten, variance

    def score(self, z_t: ArrayLike, t: float, maps: CoilSensitivities) -> np.ndarray:
        z_t = as_complex(z_t, "z_t")
        atten, variance = self._marginal(t)
        return coil_project(-(z_t - atten * self._mean) / variance, maps)

    def denoise(self, z_t: ArrayLike, t: float, maps: CoilSensitivities) -> np.ndarray:
        z_t = as_complex(z_t, "z_t")
        atten, variance = self._marginal(t)
        return (atten * self._var * z_t + self.schedule.sigma_at(t) ** 2 * self._mean) / variance

    @property
    def mean(self) -> np.ndarray:
        return self._mean

    @property
    def var(self) -> float:
        return self._var


@export
def analytic_gaussian_score(
    mean: ArrayLike, var: float, schedule: DiffusionSchedule, maps: CoilSensitivities | None = None
) -> AnalyticGaussianScore:
    """
    Creates the closed-form score model of a circular Gaussian prior.

    Arguments:
        mean: The prior mean with shape `(nc, ny, nx)`.
        var: The prior variance per k-space sample.
        schedule: The schedule.
        maps: The coil sensitivities of the slice. When given, the mean is projected onto their range first, so the
            model describes k-spaces these coils can produce.

    Returns:
        The score model.

    Examples:
        At the mode of the noised marginal the score vanishes.

        .. ipython:: python

            schedule = smsdiff.make_schedule(8, 8, n_steps=10)
            maps = smsdiff.simulate_coils(8, 8, 1)
            model = smsdiff.analytic_gaussian_score(np.ones((1, 8, 8)), 0.1, schedule, maps)
            z = schedule.atten_at(0.5) * model.mean
            np.abs(model.score(z, 0.5, maps)).max()

    Group:
        diffusion
    """
    verify_isinstance(maps, CoilSensitivities, optional=True)
    if maps is not None:
        mean = as_complex(mean, "mean")
        if not mean.shape == maps.maps.shape:
            raise ValueError(f"Argument 'mean' must have the coil map shape {maps.maps.shape}, not {mean.shape}.")
        mean = coil_project(mean, maps)
    return AnalyticGaussianScore(mean, var, schedule)
