"""
A module containing coil-sensitivity estimation from ACS data and the coil projection operator.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.signal

from .._helper import export, verify_isinstance, verify_ndim
from .._sim import CoilSensitivities
from .._tensor import as_complex, fft2c, ifft2c, rss
from ..typing import ArrayLike

logger = logging.getLogger(__name__)


@export
def estimate_sensitivities(acs: ArrayLike, ny: int, nx: int, threshold: float = 0.02) -> CoilSensitivities:
    r"""
    Estimates coil sensitivities from a fully sampled central k-space block.

    Arguments:
        acs: The calibration block with shape `(nc, acs_lines, nx)`.
        ny: The number of phase-encode lines of the full k-space.
        nx: The number of readout columns.
        threshold: Pixels whose low-resolution root-sum-of-squares is below `threshold` times its maximum are outside
            the support and get zero sensitivity.

    Returns:
        The maps, with $\sum_c |S_c|^2 = 1$ inside the support and 0 outside.

    Notes:
        The block is zero-padded to `(ny, nx)`, apodized with a separable Hann window, transformed to the image
        domain and every coil image is divided by the root-sum-of-squares. The maps carry the low-resolution phase
        of the object, which cancels in :func:`coil_project` and in SENSE unfolding.

    Group:
        calibration
    """
    acs = as_complex(acs, "acs")
    verify_ndim(acs, 3, "acs")
    nc, n_acs, n_cols = acs.shape
    if not (n_acs <= ny and n_cols == nx):
        raise ValueError(f"Argument 'acs' with shape {acs.shape} does not fit in a {(ny, nx)} k-space.")
    if not np.any(acs):
        raise ValueError("Argument 'acs' is all zero, coil sensitivities cannot be estimated.")
    if not 0 <= threshold < 1:
        raise ValueError(f"Argument 'threshold' must be in [0, 1), not {threshold}.")

    window = np.outer(scipy.signal.windows.hann(n_acs + 2)[1:-1], scipy.signal.windows.hann(nx + 2)[1:-1])
    start = ny // 2 - n_acs // 2
    padded = np.zeros((nc, ny, nx), dtype=np.complex128)
    padded[:, start : start + n_acs, :] = acs * window

    low_res = ifft2c(padded)
    norm = rss(low_res)
    support = norm > threshold * norm.max()
    maps = np.where(support, low_res / np.where(support, norm, 1), 0)
    logger.debug("Estimated %d coil maps, support %.1f%% of the image", nc, 100 * np.mean(support))

    return CoilSensitivities(maps)


@export
def coil_project(ksp: ArrayLike, maps: CoilSensitivities) -> np.ndarray:
    r"""
    Projects multi-coil k-space onto the range of the coil sensitivities, $\bar{S} \bar{S}^*$.

    Arguments:
        ksp: The multi-coil k-space with shape `(..., nc, ny, nx)`.
        maps: Normalized coil sensitivities.

    Returns:
        $F S (\sum_c \bar{S}_c F^{-1} x_c)$, the k-space of the coil-combined image re-expanded onto the coils. The
        operator is linear, idempotent and self-adjoint for normalized maps.

    Examples:
        .. ipython:: python

            maps = smsdiff.simulate_coils(16, 16, 4)
            x = np.random.default_rng(0).standard_normal((4, 16, 16))
            p = smsdiff.coil_project(x, maps)
            np.allclose(smsdiff.coil_project(p, maps), p)

    Group:
        calibration
    """
    verify_isinstance(maps, CoilSensitivities)
    ksp = as_complex(ksp, "ksp")
    verify_ndim(ksp, 3, "ksp", at_least=True)
    if not ksp.shape[-3:] == maps.maps.shape:
        raise ValueError(f"Argument 'ksp' must end in shape {maps.maps.shape}, not {ksp.shape}.")

    return fft2c(maps.expand(maps.combine(ifft2c(ksp))))
