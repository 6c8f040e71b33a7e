"""
A module containing the classical baseline reconstructions: SENSE unfolding, iterative SPIRiT and the composite
Slice-GRAPPA + SENSE pipeline.
"""

from __future__ import annotations

import logging
import warnings

import numpy as np

from ._calib import SliceGrappaKernels, SpiritKernel, apply_slice_grappa
from ._errors import DivergenceError, NumericalError
from ._helper import export, verify_isinstance, verify_ndim
from ._kernels import correlate
from ._sim import AcquisitionSpec, CoilSensitivities, SamplingMask, caipi_shift, per_slice_maps
from ._tensor import as_complex, fftc, ifft2c, ifftc
from .typing import ArrayLike, MapsLike

logger = logging.getLogger(__name__)


###############################################################################
# SENSE
###############################################################################


def aliasing_response(pattern: np.ndarray) -> np.ndarray:
    """
    Returns the phase-encode point-spread function `h` of a line pattern, indexed by cyclic row offset.

    Zero-filled reconstruction of the pattern maps a column `x` to `sum_d h[d] * x[y - d]`.
    """
    n = pattern.size
    delta = np.zeros(n, dtype=np.complex128)
    delta[n // 2] = 1
    response = ifftc(np.where(pattern, fftc(delta, axis=0), 0), axis=0)
    return np.roll(response, -(n // 2))


def _pinv_batched(E: np.ndarray, rcond: float) -> tuple[np.ndarray, np.ndarray]:
    """
    Truncated pseudo-inverses of a stack of matrices and a flag for each ill-conditioned one. Systems with fewer
    equations than unknowns are always flagged.
    """
    U, s, Vh = np.linalg.svd(E, full_matrices=False)
    cutoff = rcond * s[..., :1]
    s_inv = np.where(s > cutoff, 1 / np.where(s > 0, s, 1), 0)
    pinv = np.conj(np.swapaxes(Vh, -1, -2)) @ (s_inv[..., None] * np.conj(np.swapaxes(U, -1, -2)))
    with np.errstate(divide="ignore", invalid="ignore"):
        flagged = (s[..., 0] > 0) & (~(s[..., -1] >= rcond * s[..., 0]) | (E.shape[-2] < E.shape[-1]))
    return pinv, flagged


@export
def sense_unfold(ksp_undersampled: ArrayLike, maps: CoilSensitivities, accel: int, rcond: float = 1e-8) -> np.ndarray:
    r"""
    Unfolds uniformly undersampled multi-coil k-space with SENSE.

    Arguments:
        ksp_undersampled: The k-space with shape `(nc, ny, nx)`. Only every `accel`-th line, starting at line 0, is
            used; other lines (such as ACS) are ignored.
        maps: The coil sensitivities.
        accel: The uniform acceleration factor.
        rcond: Singular values below `rcond` times the largest one are truncated. Pixel groups with a condition number
            above `1 / rcond` are flagged with a :obj:`RuntimeWarning`.

    Returns:
        The unfolded image with shape `(ny, nx)`. With `accel=1` it is the coil combination $\sum_c \bar{S}_c x_c$ of
        normalized maps.

    Notes:
        When `ny` is a multiple of `accel` every image pixel folds with `accel - 1` others spaced `ny / accel` rows
        apart, and each group is an `nc x accel` system. Otherwise the aliasing is solved per readout column as an
        `nc * ny x ny` system.

    Examples:
        .. ipython:: python

            spec = smsdiff.AcquisitionSpec(mb=1, accel=2, acs_lines=0)
            truth, maps, ksp, acs, mask = smsdiff.simulate_scene(32, 32, 4, spec)
            x = smsdiff.sense_unfold(ksp, maps[0], 2)
            smsdiff.nmse(np.abs(truth[0]), np.abs(x))

    Group:
        reconstruction
    """
    verify_isinstance(maps, CoilSensitivities)
    verify_isinstance(accel, (int, np.integer))
    ksp = as_complex(ksp_undersampled, "ksp_undersampled")
    verify_ndim(ksp, 3, "ksp_undersampled")
    if not ksp.shape == maps.maps.shape:
        raise ValueError(f"Argument 'ksp_undersampled' must have shape {maps.maps.shape}, not {ksp.shape}.")
    nc, ny, nx = ksp.shape
    if not 1 <= accel <= ny:
        raise ValueError(f"Argument 'accel' must be in [1, {ny}], not {accel}.")

    pattern = np.zeros(ny, dtype=bool)
    pattern[::accel] = True
    aliased = ifft2c(np.where(pattern[:, None], ksp, 0))
    h = aliasing_response(pattern)
    S = maps.maps

    if ny % accel == 0:
        L = ny // accel
        phases = h[(-np.arange(accel) * L) % ny]
        E = S.reshape(nc, accel, L, nx).transpose(2, 3, 0, 1) * phases  # (L, nx, nc, accel)
        E_inv, flagged = _pinv_batched(E, rcond)
        x = (E_inv @ aliased[:, :L, :].transpose(1, 2, 0)[..., None])[..., 0]
        image = x.transpose(2, 0, 1).reshape(ny, nx)
        n_flagged, n_groups = int(np.count_nonzero(flagged)), L * nx
    else:
        H = h[(np.arange(ny)[:, None] - np.arange(ny)[None, :]) % ny]
        image = np.zeros((ny, nx), dtype=np.complex128)
        n_flagged, n_groups = 0, nx
        for col in range(nx):
            E = (H[None, :, :] * S[:, None, :, col]).reshape(nc * ny, ny)
            E_inv, flagged = _pinv_batched(E, rcond)
            image[:, col] = E_inv @ aliased[:, :, col].reshape(nc * ny)
            n_flagged += int(flagged)

    if n_flagged > 0:
        logger.warning("SENSE: %d of %d pixel groups are ill-conditioned (accel=%d)", n_flagged, n_groups, accel)
        warnings.warn(
            f"{n_flagged} of {n_groups} SENSE pixel groups have a condition number above {1 / rcond:g}, "
            "their truncated pseudo-inverse was used.",
            RuntimeWarning,
            stacklevel=2,
        )

    return image


###############################################################################
# SPIRiT
###############################################################################


def acquired_support(mask: SamplingMask | ArrayLike, shape: tuple[int, ...]) -> np.ndarray:
    """
    Broadcasts a sampling mask, or a boolean line pattern or k-space mask, to `shape`.
    """
    if isinstance(mask, SamplingMask):
        mask = mask.pattern
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        mask = mask[:, None]
    try:
        return np.broadcast_to(mask, shape)
    except ValueError:
        raise ValueError(f"The sampling mask with shape {mask.shape} does not match k-space shape {shape}.") from None


@export
def spirit_recon(
    ksp: ArrayLike,
    kernel: SpiritKernel,
    mask: SamplingMask | ArrayLike,
    iters: int = 100,
    tol: float = 1e-6,
) -> np.ndarray:
    r"""
    Fills the missing k-space of one slice by projected SPIRiT iterations.

    Arguments:
        ksp: The undersampled multi-coil k-space with shape `(nc, ny, nx)`.
        kernel: The SPIRiT kernel.
        mask: The acquired locations, a :obj:`~smsdiff.SamplingMask`, a boolean line pattern of length `ny` or a
            boolean array broadcastable to `ksp`.
        iters: The maximum number of iterations.
        tol: The iteration stops once the relative update $\|x_{k+1} - x_k\| / \|x_{k+1}\|$ drops below `tol`.

    Returns:
        The completed k-space. Acquired entries equal the input bit-exactly.

    Raises:
        DivergenceError: If the update norm grows tenfold over ten iterations.
        NumericalError: If an iterate stops being finite.

    Notes:
        Each iteration applies $x \leftarrow M \odot y + (1 - M) \odot G x$, where $G$ is the kernel correlation and
        $M$ the mask. An all-false mask returns the input unchanged with a :obj:`RuntimeWarning`.

    Group:
        reconstruction
    """
    verify_isinstance(kernel, SpiritKernel)
    verify_isinstance(iters, (int, np.integer))
    ksp = as_complex(ksp, "ksp")
    verify_ndim(ksp, 3, "ksp")
    if not ksp.shape[0] == kernel.nc:
        raise ValueError(f"The kernel has {kernel.nc} coils, argument 'ksp' has shape {ksp.shape}.")
    if not iters >= 0:
        raise ValueError(f"Argument 'iters' must be non-negative, not {iters}.")
    acquired = acquired_support(mask, ksp.shape)

    if not np.any(acquired):
        logger.warning("SPIRiT called with an empty sampling mask, returning the input")
        warnings.warn("The sampling mask acquires nothing, the input is returned unchanged.", RuntimeWarning, stacklevel=2)
        return ksp.copy()

    x = np.where(acquired, ksp, 0)
    updates = []
    relative = np.inf
    for it in range(iters):
        x_new = np.where(acquired, ksp, correlate(x, kernel.weights))
        if not np.all(np.isfinite(x_new)):
            raise NumericalError(f"SPIRiT iterate {it} is not finite.", step=it)

        update = float(np.linalg.norm(x_new - x))
        norm = float(np.linalg.norm(x_new))
        relative = update / norm if norm > 0 else 0.0
        updates.append(update)
        x = x_new

        if it >= 10 and updates[it - 10] > 0 and update > 10 * updates[it - 10]:
            raise DivergenceError(f"SPIRiT diverged at iteration {it}, the update grew tenfold in 10 iterations.", it)
        if relative < tol:
            break

    logger.debug("SPIRiT stopped after %d iterations, relative update %.3e", len(updates), relative)

    return x


###############################################################################
# Slice-GRAPPA + SENSE
###############################################################################


@export
def sg_sense_pipeline(
    sms_ksp: ArrayLike,
    kernels: SliceGrappaKernels,
    maps_per_slice: MapsLike,
    mask: SamplingMask,
    spec: AcquisitionSpec,
) -> np.ndarray:
    """
    Reconstructs an SMS acquisition with Slice-GRAPPA slice separation followed by per-slice SENSE.

    Arguments:
        sms_ksp: The measured collapsed k-space with shape `(nc, ny, nx)`.
        kernels: The Slice-GRAPPA kernels.
        maps_per_slice: The coil sensitivities of each slice, in the unshifted frame.
        mask: The sampling mask. Its acceleration sets the SENSE unfolding factor.
        spec: The acquisition.

    Returns:
        The complex slice images with shape `(mb, ny, nx)`.

    Group:
        reconstruction
    """
    verify_isinstance(mask, SamplingMask)
    verify_isinstance(spec, AcquisitionSpec)
    maps = per_slice_maps(maps_per_slice, spec.mb)

    separated = apply_slice_grappa(kernels, sms_ksp)
    images = np.zeros((spec.mb, *separated.shape[-2:]), dtype=np.complex128)
    for s in range(spec.mb):
        ksp_s = caipi_shift(separated[s], s, spec, invert=True)
        images[s] = sense_unfold(ksp_s, maps[s], mask.accel)

    return images
