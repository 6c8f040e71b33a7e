"""
A module containing SPIRiT kernel calibration.
"""

from __future__ import annotations

import logging

import numpy as np

from .._helper import export, verify_ndim
from .._tensor import as_complex
from ..typing import ArrayLike
from ._matrix import calibration_targets, grappa_matrix, relative_residual, solve_regularized, verify_kernel_size

logger = logging.getLogger(__name__)


@export
class SpiritKernel:
    """
    A SPIRiT self-consistency kernel.

    Arguments:
        weights: The weights with shape `(nc, nc, kh, kw)`. Entry `[c]` synthesizes coil `c` from the neighborhood of
            every coil. The center tap of coil `c` in its own kernel must be exactly zero.
        tikhonov: The relative regularization used at fit time.
        fit_residual: The largest relative calibration residual over target coils.

    Group:
        calibration
    """

    def __init__(self, weights: ArrayLike, tikhonov: float = 0.0, fit_residual: float = float("nan")):
        weights = as_complex(weights, "weights")
        verify_ndim(weights, 4, "weights")
        nc, nc_src, kh, kw = weights.shape
        if not nc == nc_src:
            raise ValueError(f"Argument 'weights' must map nc coils onto nc coils, not shape {weights.shape}.")
        verify_kernel_size(kh, kw)
        if not np.all(np.isfinite(weights)):
            raise ValueError("Argument 'weights' must be finite.")
        idx = np.arange(nc)
        if not np.all(weights[idx, idx, kh // 2, kw // 2] == 0):
            raise ValueError("The center tap of each coil's own kernel must be zero.")

        self._weights = weights.copy()
        self._weights.setflags(write=False)
        self._tikhonov = float(tikhonov)
        self._fit_residual = float(fit_residual)

    def __repr__(self) -> str:
        return f"<SpiritKernel: nc={self.nc}, kernel={self.kh}x{self.kw}, tikhonov={self.tikhonov}>"

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def nc(self) -> int:
        return self._weights.shape[0]

    @property
    def kh(self) -> int:
        return self._weights.shape[2]

    @property
    def kw(self) -> int:
        return self._weights.shape[3]

    @property
    def tikhonov(self) -> float:
        return self._tikhonov

    @property
    def fit_residual(self) -> float:
        return self._fit_residual


@export
def calibrate_spirit(acs: ArrayLike, kh: int = 5, kw: int = 5, tikhonov: float = 1e-6) -> SpiritKernel:
    r"""
    Fits a SPIRiT kernel on one slice's ACS block.

    Arguments:
        acs: The fully sampled calibration block with shape `(nc, acs_lines, nx)`.
        kh: The odd kernel height.
        kw: The odd kernel width.
        tikhonov: The relative Tikhonov regularization, see :func:`~smsdiff.calibrate_slice_grappa`.

    Returns:
        The kernel. For each target coil $c$ the column of $A$ holding coil $c$'s own center sample is removed before
        the fit and its weight is set to zero.

    Examples:
        .. ipython:: python

            kernel = smsdiff.calibrate_spirit(np.ones((1, 8, 8)), kh=3, kw=3)
            kernel.weights[0, 0].real.round(4)

    Group:
        calibration
    """
    acs = as_complex(acs, "acs")
    verify_ndim(acs, 3, "acs")
    verify_kernel_size(kh, kw)
    if not tikhonov >= 0:
        raise ValueError(f"Argument 'tikhonov' must be non-negative, not {tikhonov}.")
    nc = acs.shape[0]

    A = grappa_matrix(acs, kh, kw)
    B = calibration_targets(acs, kh, kw)
    taps = kh * kw
    center = (kh // 2) * kw + kw // 2

    W = np.zeros((nc * taps, nc), dtype=np.complex128)
    residual = 0.0
    for c in range(nc):
        self_tap = c * taps + center
        A_c = np.delete(A, self_tap, axis=1)
        w, lam = solve_regularized(A_c, B[:, c : c + 1], tikhonov)
        W[:, c] = np.insert(w[:, 0], self_tap, 0)
        residual = max(residual, relative_residual(A_c, w, B[:, c : c + 1]))
        logger.debug("SPIRiT fit coil %d: lambda=%.3e", c, lam)

    logger.debug("SPIRiT fit: A %s, worst relative residual %.3e", A.shape, residual)

    return SpiritKernel(W.T.reshape(nc, nc, kh, kw), tikhonov, residual)
