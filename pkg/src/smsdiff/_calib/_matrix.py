"""
A module containing the calibration matrix (im2row) construction and the regularized least-squares solver shared by
the Slice-GRAPPA and SPIRiT fits.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg

from .._helper import export, verify_isinstance, verify_ndim
from .._tensor import as_complex
from ..typing import ArrayLike

logger = logging.getLogger(__name__)


def verify_kernel_size(kh: int, kw: int, dilation: int = 1):
    verify_isinstance(kh, (int, np.integer))
    verify_isinstance(kw, (int, np.integer))
    verify_isinstance(dilation, (int, np.integer))
    if not (kh >= 1 and kh % 2 == 1 and kw >= 1 and kw % 2 == 1):
        raise ValueError(f"Kernel sizes must be odd and positive, not kh={kh} and kw={kw}.")
    if not dilation >= 1:
        raise ValueError(f"Argument 'dilation' must be at least 1, not {dilation}.")


@export
def grappa_matrix(src: ArrayLike, kh: int, kw: int, dilation: int = 1) -> np.ndarray:
    r"""
    Builds the calibration matrix of a block of fully sampled k-space.

    Arguments:
        src: The source k-space block with shape `(nc, rows, cols)`.
        kh: The odd kernel height, in taps.
        kw: The odd kernel width, in taps.
        dilation: The phase-encode spacing between kernel taps.

    Returns:
        A matrix with one row per kernel position that fits entirely inside the block, and `nc * kh * kw` columns
        ordered `(coil, tap row, tap column)`. Rows are ordered by the kernel center, row-major. Row $r$ holds the
        neighbors that :func:`~smsdiff.apply_slice_grappa` multiplies with the weights when it synthesizes the sample
        under the kernel center.

    Examples:
        .. ipython:: python

            acs = np.arange(2 * 4 * 4).reshape(2, 4, 4)
            smsdiff.grappa_matrix(acs, 3, 3).shape

    Group:
        calibration
    """
    src = as_complex(src, "src")
    verify_ndim(src, 3, "src")
    verify_kernel_size(kh, kw, dilation)
    nc, n_rows, n_cols = src.shape
    span = (kh - 1) * dilation + 1
    if not (n_rows >= span and n_cols >= kw):
        raise ValueError(
            f"The calibration block with shape {(n_rows, n_cols)} is smaller than the kernel footprint {(span, kw)}."
        )

    windows = np.lib.stride_tricks.sliding_window_view(src, (span, kw), axis=(-2, -1))
    windows = windows[..., ::dilation, :]  # (nc, n_y, n_x, kh, kw)
    n_y, n_x = windows.shape[1:3]

    return np.ascontiguousarray(windows.transpose(1, 2, 0, 3, 4)).reshape(n_y * n_x, nc * kh * kw)


def calibration_targets(tgt: np.ndarray, kh: int, kw: int, dilation: int = 1) -> np.ndarray:
    """
    Returns the samples under the kernel centers of :func:`grappa_matrix`, with shape `(positions, n_out)`.
    """
    hy, hx = (kh // 2) * dilation, kw // 2
    n_out, n_rows, n_cols = tgt.shape
    center = tgt[:, hy : n_rows - hy, hx : n_cols - hx]
    return center.reshape(n_out, -1).T


def solve_regularized(A: np.ndarray, B: np.ndarray, tikhonov: float) -> tuple[np.ndarray, float]:
    r"""
    Minimizes $\|A w - b\|^2 + \lambda \|w\|^2$ for every column $b$ of `B`.

    The absolute $\lambda$ is `tikhonov` times the mean diagonal of $A^H A$, so the regularization does not depend on
    the data scale. With `tikhonov=0` the minimum-norm least-squares solution is returned.

    Returns:
        The weights with shape `(A.shape[1], B.shape[1])` and the absolute $\lambda$.
    """
    if tikhonov == 0:
        W = scipy.linalg.lstsq(A, B)[0]
        return W, 0.0

    AhA = A.conj().T @ A
    lam = float(tikhonov * np.real(np.trace(AhA)) / AhA.shape[0])
    if lam == 0:
        # All-zero calibration data, fall back to the minimum-norm solution
        return scipy.linalg.lstsq(A, B)[0], 0.0
    W = scipy.linalg.solve(AhA + lam * np.eye(AhA.shape[0]), A.conj().T @ B, assume_a="pos")

    return W, lam


def relative_residual(A: np.ndarray, W: np.ndarray, B: np.ndarray) -> float:
    norm = np.linalg.norm(B)
    if norm == 0:
        return 0.0
    return float(np.linalg.norm(A @ W - B) / norm)
