"""
A module containing the reverse heat-diffusion update, the Langevin corrector and the single-chain sampler.
"""

from __future__ import annotations

import logging
from typing import Callable

import numpy as np
from tqdm.auto import tqdm

from .._calib import coil_project
from .._errors import NumericalError
from .._helper import export, verify_isinstance
from .._options import get_options
from .._sim import CoilSensitivities
from .._tensor import as_complex, complex_normal, make_rng
from ..typing import ArrayLike, SeedLike
from ._schedule import DiffusionSchedule, forward_perturb
from ._score import ScoreModel

logger = logging.getLogger(__name__)


def _item_norm(x: np.ndarray) -> np.ndarray:
    # One norm per chain, over the coil and k-space axes
    return np.sqrt(np.sum(np.abs(x) ** 2, axis=(-3, -2, -1), keepdims=True))


@export
def predictor_step(
    z_next: ArrayLike,
    i: int,
    schedule: DiffusionSchedule,
    score_model: ScoreModel,
    maps: CoilSensitivities,
    seed: SeedLike = None,
    z0_hat: ArrayLike | None = None,
) -> np.ndarray:
    r"""
    Takes one reverse heat-diffusion step from $t_{i+1}$ to $t_i$.

    Arguments:
        z_next: The iterate $z_{i+1}$ with shape `(..., nc, ny, nx)`.
        i: The target step index, $0 \le i < N$.
        schedule: The schedule.
        score_model: The score model, queried at $t_{i+1}$.
        maps: The coil sensitivities of the projector $P = \bar{S}\bar{S}^*$.
        seed: The noise source, see :obj:`~smsdiff.typing.SeedLike`.
        z0_hat: An estimate of the clean k-space to use instead of `score_model.denoise(z_next)`. The SMS sampler
            passes its data-consistent estimate here.

    Returns:
        $$z_i = z_{i+1} - P\big((A_{i+1} - A_i) \odot \hat{z}_0\big) + (\sigma_{i+1}^2 - \sigma_i^2) P \nabla
        \log p_{t_{i+1}}(z_{i+1}) + \sqrt{\sigma_{i+1}^2 - \sigma_i^2}\, P n.$$

    Raises:
        NumericalError: If the result is not finite.

    Notes:
        The attenuation increment is projected as well, so an iterate in the range of $P$ stays there. With a single
        unit-sensitivity coil $P$ is the identity.

    Group:
        diffusion
    """
    verify_isinstance(schedule, DiffusionSchedule)
    verify_isinstance(score_model, ScoreModel)
    if not 0 <= i < schedule.n_steps:
        raise ValueError(f"Argument 'i' must be in [0, {schedule.n_steps}), not {i}.")
    z_next = as_complex(z_next, "z_next")
    t_next = schedule.t_grid[i + 1]

    if z0_hat is None:
        z0_hat = score_model.denoise(z_next, t_next, maps)
    else:
        z0_hat = as_complex(z0_hat, "z0_hat")
    score = score_model.score(z_next, t_next, maps)

    d_atten = schedule.atten(i + 1) - schedule.atten(i)
    d_var = schedule.sigmas[i + 1] ** 2 - schedule.sigmas[i] ** 2
    noise = complex_normal(make_rng(seed), z_next.shape)

    z = z_next + coil_project(-d_atten * z0_hat + d_var * score + np.sqrt(d_var) * noise, maps)

    if not np.all(np.isfinite(z)):
        raise NumericalError(f"The predictor produced a non-finite iterate at step {i}.", step=i)

    return z


@export
def corrector_step(
    z: ArrayLike,
    i: int,
    schedule: DiffusionSchedule,
    score_model: ScoreModel,
    maps: CoilSensitivities,
    snr: float = 0.16,
    seed: SeedLike = None,
) -> np.ndarray:
    r"""
    Takes one annealed Langevin step at noise level $t_i$.

    Arguments:
        z: The iterate at level $t_i$ with shape `(..., nc, ny, nx)`.
        i: The step index of the iterate, $0 \le i \le N$.
        schedule: The schedule.
        score_model: The score model.
        maps: The coil sensitivities of the projector.
        snr: The target signal-to-noise ratio of the step.
        seed: The noise source, see :obj:`~smsdiff.typing.SeedLike`.

    Returns:
        $z + \epsilon P g + \sqrt{2 \epsilon} P n$ with $\epsilon = 2 (\mathrm{snr} \|P n\| / \|P g\|)^2$ per chain.
        Chains whose score norm is zero are returned unchanged.

    Group:
        diffusion
    """
    verify_isinstance(schedule, DiffusionSchedule)
    verify_isinstance(score_model, ScoreModel)
    if not 0 <= i <= schedule.n_steps:
        raise ValueError(f"Argument 'i' must be in [0, {schedule.n_steps}], not {i}.")
    if not snr > 0:
        raise ValueError(f"Argument 'snr' must be positive, not {snr}.")
    z = as_complex(z, "z")

    grad = coil_project(score_model.score(z, schedule.t_grid[i], maps), maps)
    noise = coil_project(complex_normal(make_rng(seed), z.shape), maps)

    grad_norm = _item_norm(grad)
    moving = grad_norm > 0
    step = np.where(moving, 2 * (snr * _item_norm(noise) / np.where(moving, grad_norm, 1)) ** 2, 0)
    z_new = np.where(moving, z + step * grad + np.sqrt(2 * step) * noise, z)

    if not np.all(np.isfinite(z_new)):
        raise NumericalError(f"The corrector produced a non-finite iterate at step {i}.", step=i)

    return z_new


@export
def reverse_diffusion(
    z_init: ArrayLike,
    schedule: DiffusionSchedule,
    score_model: ScoreModel,
    maps: CoilSensitivities,
    n_corrector: int = 1,
    snr: float = 0.16,
    seed: SeedLike = None,
    corrector_first: bool = True,
    z0_fn: Callable[[np.ndarray, int], np.ndarray] | None = None,
) -> np.ndarray:
    r"""
    Runs one predictor-corrector chain from $t = 1$ down to $t = 0$.

    Arguments:
        z_init: The starting k-space with shape `(..., nc, ny, nx)`. Leading axes are independent chains sharing one
            noise source.
        schedule: The schedule.
        score_model: The score model.
        maps: The coil sensitivities of the projector.
        n_corrector: The number of corrector steps per predictor step.
        snr: The corrector signal-to-noise ratio.
        seed: The noise source, see :obj:`~smsdiff.typing.SeedLike`.
        corrector_first: Run the corrector steps before the predictor of each step (at $t_{i+1}$) instead of after it
            (at $t_i$).
        z0_fn: An optional map `(z0_hat, i) -> z0_hat` applied to the denoised estimate before each predictor step.

    Returns:
        The final iterate $z_0$.

    Notes:
        The chain starts from the projection of `forward_perturb(z_init, 1)`. The order of random draws (start
        noise, then the corrector and predictor draws of each step) matches :func:`~smsdiff.sms_reconstruct`, so a
        slice chain without data consistency reproduces this function bit-exactly.

    Group:
        diffusion
    """
    verify_isinstance(schedule, DiffusionSchedule)
    verify_isinstance(score_model, ScoreModel)
    verify_isinstance(n_corrector, (int, np.integer))
    verify_isinstance(corrector_first, bool)
    if not n_corrector >= 0:
        raise ValueError(f"Argument 'n_corrector' must be non-negative, not {n_corrector}.")

    rng = make_rng(seed)
    z = coil_project(forward_perturb(z_init, 1.0, schedule, maps, rng), maps)

    steps = range(schedule.n_steps - 1, -1, -1)
    for i in tqdm(steps, desc="Sampling", disable=not get_options()["progress"]):
        if corrector_first:
            for _ in range(n_corrector):
                z = corrector_step(z, i + 1, schedule, score_model, maps, snr, rng)

        z0_hat = None
        if z0_fn is not None:
            z0_hat = z0_fn(score_model.denoise(z, schedule.t_grid[i + 1], maps), i)
        z = predictor_step(z, i, schedule, score_model, maps, rng, z0_hat=z0_hat)

        if not corrector_first:
            for _ in range(n_corrector):
                z = corrector_step(z, i, schedule, score_model, maps, snr, rng)

    logger.debug("Reverse diffusion finished %d steps with %d corrector steps each", schedule.n_steps, n_corrector)

    return z
