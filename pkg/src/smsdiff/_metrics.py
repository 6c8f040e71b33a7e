"""
A module containing the image-domain quality metrics: NMSE, PSNR, SSIM and error maps.
"""

from __future__ import annotations

import numpy as np
import skimage.metrics

from ._helper import export, verify_same_shape
from .typing import ArrayLike


def _magnitudes(ref: ArrayLike, test: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    ref = np.abs(np.asarray(ref)).astype(np.float64)
    test = np.abs(np.asarray(test)).astype(np.float64)
    verify_same_shape(ref, test)
    if ref.size == 0:
        raise ValueError("The images must not be empty.")
    return ref, test


def _peak(ref: np.ndarray) -> float:
    peak = float(np.max(ref))
    if not peak > 0:
        raise ValueError("The reference image must not be identically zero.")
    return peak


@export
def nmse(ref: ArrayLike, test: ArrayLike) -> float:
    r"""
    Computes the normalized mean squared error $\|t - r\|^2 / \|r\|^2$ between magnitude images.

    Arguments:
        ref: The reference image. Complex images are converted by magnitude.
        test: The test image with the same shape.

    Raises:
        ValueError: If the reference is identically zero.

    Examples:
        .. ipython:: python

            smsdiff.nmse([1, 2], [1, 3])

    Group:
        metrics
    """
    ref, test = _magnitudes(ref, test)
    energy = float(np.sum(ref**2))
    if not energy > 0:
        raise ValueError("The reference image must not be identically zero.")
    return float(np.sum((test - ref) ** 2)) / energy


@export
def psnr(ref: ArrayLike, test: ArrayLike) -> float:
    r"""
    Computes the peak signal-to-noise ratio $10 \log_{10}(\max|r|^2 / \mathrm{MSE})$ in dB.

    Returns:
        The PSNR, or `inf` when the images are equal.

    Examples:
        .. ipython:: python

            ref = np.zeros(100); ref[0] = 1
            smsdiff.psnr(ref, ref + 0.1)

    Group:
        metrics
    """
    ref, test = _magnitudes(ref, test)
    mse = float(np.mean((test - ref) ** 2))
    if mse == 0:
        return float("inf")
    return float(10 * np.log10(_peak(ref) ** 2 / mse))


@export
def ssim(
    ref: ArrayLike,
    test: ArrayLike,
    window: int = 11,
    sigma: float = 1.5,
    k1: float = 0.01,
    k2: float = 0.03,
    dynamic_range: float | None = None,
) -> float:
    """
    Computes the mean structural similarity index of two magnitude images with a Gaussian window.

    Arguments:
        ref: The reference image with shape `(ny, nx)`.
        test: The test image.
        window: The side of the Gaussian window. It must be odd.
        sigma: The standard deviation of the Gaussian window.
        k1: The luminance stabilization constant.
        k2: The contrast stabilization constant.
        dynamic_range: The dynamic range $L$ of the images. The default is the peak magnitude of `ref`.

    Returns:
        The mean of the local SSIM map, in $[-1, 1]$.

    Raises:
        ValueError: If either side of the images is smaller than `window`.

    Notes:
        The local statistics use population (not sample) covariances, as in the original definition of the index.

    Group:
        metrics
    """
    ref, test = _magnitudes(ref, test)
    if not ref.ndim == 2:
        raise ValueError(f"SSIM is defined for 2-D images, not shape {ref.shape}.")
    if not (window >= 3 and window % 2 == 1):
        raise ValueError(f"Argument 'window' must be an odd integer of at least 3, not {window}.")
    if not min(ref.shape) >= window:
        raise ValueError(f"The images with shape {ref.shape} are smaller than the {window}x{window} window.")
    if dynamic_range is None:
        dynamic_range = _peak(ref)

    return float(
        skimage.metrics.structural_similarity(
            ref,
            test,
            data_range=dynamic_range,
            gaussian_weights=True,
            sigma=sigma,
            win_size=window,
            use_sample_covariance=False,
            K1=k1,
            K2=k2,
        )
    )


@export
def error_map(ref: ArrayLike, test: ArrayLike) -> np.ndarray:
    """
    Returns the absolute magnitude difference `| |test| - |ref| |` normalized by the reference peak.

    Group:
        metrics
    """
    ref, test = _magnitudes(ref, test)
    return np.abs(test - ref) / _peak(ref)
