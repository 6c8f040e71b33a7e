"""
A module containing Slice-GRAPPA kernel calibration, application and the slice-leakage (L-factor) measurement.
"""

from __future__ import annotations

import logging

import numpy as np

from .._helper import export, verify_isinstance, verify_ndim
from .._kernels import correlate
from .._sim import AcquisitionSpec, caipi_shift, collapse_sms, per_slice_maps
from .._tensor import as_complex, fft2c
from ..typing import ArrayLike, MapsLike
from ._matrix import calibration_targets, grappa_matrix, relative_residual, solve_regularized, verify_kernel_size

logger = logging.getLogger(__name__)


@export
class SliceGrappaKernels:
    r"""
    Slice-specific GRAPPA kernels that separate collapsed multiband k-space into single-slice k-spaces.

    Arguments:
        weights: The kernel weights with shape `(mb, nc, nc, kh, kw)`. Entry `[s, c]` is the `(nc, kh, kw)` kernel that
            synthesizes coil `c` of slice `s` from all coils of the collapsed data.
        tikhonov: The relative regularization used at fit time.
        dilation: The phase-encode spacing between kernel taps.
        fit_residual: The relative calibration residual $\|A W - B\| / \|B\|$.

    Notes:
        The kernels reproduce each slice in its CAIPIRINHA frame (the frame of the acquisition). Undo the shift with
        :func:`~smsdiff.caipi_shift` and `invert=True` to compare against unshifted data.

    Group:
        calibration
    """

    def __init__(self, weights: ArrayLike, tikhonov: float = 0.0, dilation: int = 1, fit_residual: float = float("nan")):
        weights = as_complex(weights, "weights")
        verify_ndim(weights, 5, "weights")
        mb, nc, nc_src, kh, kw = weights.shape
        if not nc == nc_src:
            raise ValueError(f"Argument 'weights' must map nc coils onto nc coils, not shape {weights.shape}.")
        verify_kernel_size(kh, kw, dilation)
        if not np.all(np.isfinite(weights)):
            raise ValueError("Argument 'weights' must be finite.")
        if not tikhonov >= 0:
            raise ValueError(f"Argument 'tikhonov' must be non-negative, not {tikhonov}.")

        self._weights = weights.copy()
        self._weights.setflags(write=False)
        self._tikhonov = float(tikhonov)
        self._dilation = int(dilation)
        self._fit_residual = float(fit_residual)

    def __repr__(self) -> str:
        return (
            f"<SliceGrappaKernels: mb={self.mb}, nc={self.nc}, kernel={self.kh}x{self.kw}, dilation={self.dilation}, "
            f"tikhonov={self.tikhonov}>"
        )

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def mb(self) -> int:
        return self._weights.shape[0]

    @property
    def nc(self) -> int:
        return self._weights.shape[1]

    @property
    def kh(self) -> int:
        return self._weights.shape[3]

    @property
    def kw(self) -> int:
        return self._weights.shape[4]

    @property
    def tikhonov(self) -> float:
        return self._tikhonov

    @property
    def dilation(self) -> int:
        return self._dilation

    @property
    def fit_residual(self) -> float:
        return self._fit_residual


@export
def kernel_geometry(spec: AcquisitionSpec, kh: int = 5, pattern_aware: bool = False) -> tuple[int, int]:
    r"""
    Chooses the Slice-GRAPPA kernel height and phase-encode tap spacing for an acquisition.

    Arguments:
        spec: The acquisition.
        kh: The requested odd kernel height.
        pattern_aware: Space the taps by the in-plane acceleration, so a kernel applied to undersampled data only reads
            acquired lines. With `False` (the default) the taps are contiguous.

    Returns:
        The kernel height, reduced to the largest odd height whose footprint fits in the ACS block, and the tap
        spacing.

    Notes:
        Taps spaced by `accel` rows see the CAIPIRINHA ramp of slice $s$ advance by $s f \cdot accel$ cycles per tap.
        When that is a whole number for some pair of slices, as for `mb = accel = 3` with $f = 1/3$, the spaced
        kernel cannot tell the slices apart and a :obj:`ValueError` is raised. Spaced kernels also lose accuracy
        quickly at `accel >= 4`, contiguous kernels are the better choice there.

    Group:
        calibration
    """
    verify_isinstance(spec, AcquisitionSpec)
    verify_isinstance(pattern_aware, bool)
    dilation = spec.accel if pattern_aware else 1
    if dilation > 1 and not taps_resolve_slices(spec, dilation):
        raise ValueError(
            f"Phase-encode taps spaced by {dilation} rows cannot separate {spec.mb} slices with a CAIPIRINHA fraction "
            f"of {spec.caipi_fraction}, use contiguous taps (pattern_aware=False)."
        )
    while kh > 1 and (kh - 1) * dilation + 1 > spec.acs_lines:
        kh -= 2
    return kh, dilation


def taps_resolve_slices(spec: AcquisitionSpec, dilation: int) -> bool:
    """
    Indicates whether the CAIPIRINHA ramps of every pair of slices differ between taps spaced by `dilation` rows.
    """
    return all((ds * spec.caipi_fraction * dilation) % 1 != 0 for ds in range(1, spec.mb))


@export
def calibrate_slice_grappa(
    acs_per_slice: ArrayLike,
    spec: AcquisitionSpec,
    kh: int = 5,
    kw: int = 5,
    tikhonov: float = 1e-6,
    dilation: int = 1,
) -> SliceGrappaKernels:
    r"""
    Fits slice-specific GRAPPA kernels from per-slice calibration scans.

    Arguments:
        acs_per_slice: The unshifted single-slice ACS blocks with shape `(mb, nc, acs_lines, nx)`.
        spec: The acquisition. Its CAIPIRINHA shifts are applied before the blocks are summed into the source.
        kh: The odd kernel height.
        kw: The odd kernel width.
        tikhonov: The relative Tikhonov regularization. The absolute $\lambda$ is `tikhonov` times the mean diagonal of
            $A^H A$. With 0 the minimum-norm least-squares solution is used.
        dilation: The phase-encode spacing between kernel taps, see :func:`kernel_geometry`.

    Returns:
        The fitted kernels.

    Notes:
        The source matrix $A$ is built from the collapsed block $\sum_s \mathrm{caipi\_shift}(a_s, s)$ and the targets
        are the shifted single-slice blocks. For every slice $s$ and coil $c$ the weights solve
        $(A^H A + \lambda I) w = A^H b_{s,c}$. All $mb \cdot nc$ targets share one factorization.

    Examples:
        .. ipython:: python

            spec = smsdiff.AcquisitionSpec(mb=3, accel=1, acs_lines=16)
            truth, maps, sms, acs, mask = smsdiff.simulate_scene(32, 32, 4, spec)
            smsdiff.calibrate_slice_grappa(acs, spec, kh=3, kw=3)

    Group:
        calibration
    """
    verify_isinstance(spec, AcquisitionSpec)
    acs_per_slice = as_complex(acs_per_slice, "acs_per_slice")
    verify_ndim(acs_per_slice, 4, "acs_per_slice")
    verify_kernel_size(kh, kw, dilation)
    if not acs_per_slice.shape[0] == spec.mb:
        raise ValueError(f"Argument 'acs_per_slice' must have {spec.mb} slices, not shape {acs_per_slice.shape}.")
    if not tikhonov >= 0:
        raise ValueError(f"Argument 'tikhonov' must be non-negative, not {tikhonov}.")
    mb, nc = acs_per_slice.shape[:2]

    source = collapse_sms(acs_per_slice, spec)
    targets = np.concatenate([caipi_shift(acs_per_slice[s], s, spec) for s in range(mb)])

    A = grappa_matrix(source, kh, kw, dilation)
    B = calibration_targets(targets, kh, kw, dilation)
    W, lam = solve_regularized(A, B, tikhonov)
    residual = relative_residual(A, W, B)
    logger.debug("Slice-GRAPPA fit: A %s, lambda=%.3e, relative residual %.3e", A.shape, lam, residual)

    weights = W.T.reshape(mb, nc, nc, kh, kw)

    return SliceGrappaKernels(weights, tikhonov, dilation, residual)


@export
def apply_slice_grappa(kernels: SliceGrappaKernels, sms_ksp: ArrayLike) -> np.ndarray:
    """
    Separates collapsed multiband k-space into single-slice k-spaces.

    Arguments:
        kernels: The Slice-GRAPPA kernels.
        sms_ksp: The collapsed k-space with shape `(nc, ny, nx)`, fully or uniformly undersampled.

    Returns:
        The single-slice k-spaces, in their CAIPIRINHA frames, with shape `(mb, nc, ny, nx)`. Each output is the
        circular cross-coil correlation of `sms_ksp` with that slice's kernels. Undersampled input keeps its in-plane
        gaps: only the slice aliasing is resolved.

    Group:
        calibration
    """
    verify_isinstance(kernels, SliceGrappaKernels)
    sms_ksp = as_complex(sms_ksp, "sms_ksp")
    verify_ndim(sms_ksp, 3, "sms_ksp")
    if not sms_ksp.shape[0] == kernels.nc:
        raise ValueError(f"The kernels have {kernels.nc} coils, argument 'sms_ksp' has shape {sms_ksp.shape}.")
    mb, nc = kernels.mb, kernels.nc

    weights = kernels.weights.reshape(mb * nc, nc, kernels.kh, kernels.kw)
    out = correlate(sms_ksp, weights, kernels.dilation)

    return out.reshape(mb, nc, *sms_ksp.shape[1:])


@export
class LFactorReport:
    """
    The slice-leakage matrix of a set of Slice-GRAPPA kernels.

    Entry `(i, j)` is the fraction of the energy of slice `j` that the kernels place into reconstructed slice `i`.

    Group:
        calibration
    """

    def __init__(self, matrix: ArrayLike):
        matrix = np.asarray(matrix, dtype=np.float64)
        verify_ndim(matrix, 2, "matrix")
        if not matrix.shape[0] == matrix.shape[1]:
            raise ValueError(f"Argument 'matrix' must be square, not shape {matrix.shape}.")
        self._matrix = matrix.copy()
        self._matrix.setflags(write=False)

    def __repr__(self) -> str:
        return f"<LFactorReport: mb={self.mb}, diagonal={np.round(self.diagonal, 4).tolist()}>"

    def __str__(self) -> str:
        lines = ["slice | " + " ".join(f"{j:>10d}" for j in range(self.mb))]
        for i in range(self.mb):
            lines.append(f"{i:>5d} | " + " ".join(f"{v:>10.4e}" for v in self._matrix[i]))
        return "\n".join(lines)

    def is_diagonally_dominant(self) -> bool:
        """
        Indicates whether every diagonal entry exceeds each off-diagonal entry in its row.
        """
        off = self._matrix.copy()
        np.fill_diagonal(off, -np.inf)
        return bool(np.all(self.diagonal > off.max(axis=1)))

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def mb(self) -> int:
        return self._matrix.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self._matrix).copy()


@export
def leakage_lfactor(
    kernels: SliceGrappaKernels,
    maps: MapsLike,
    spec: AcquisitionSpec,
    probe_images: ArrayLike,
) -> LFactorReport:
    r"""
    Measures slice leakage by encoding one slice at a time and separating it with the kernels.

    Arguments:
        kernels: The Slice-GRAPPA kernels.
        maps: Coil sensitivities shared by all slices, or one set per slice.
        spec: The acquisition.
        probe_images: The probe slices with shape `(mb, ny, nx)`.

    Returns:
        The leakage matrix, entry $(i, j) = \|G_i(E_j)\|^2 / \|E_j\|^2$ where $E_j$ is the collapsed, fully sampled
        k-space of probe slice $j$ alone and $G_i$ the kernels of slice $i$.

    Group:
        calibration
    """
    verify_isinstance(kernels, SliceGrappaKernels)
    verify_isinstance(spec, AcquisitionSpec)
    probe_images = as_complex(probe_images, "probe_images")
    verify_ndim(probe_images, 3, "probe_images")
    if not probe_images.shape[0] == spec.mb == kernels.mb:
        raise ValueError(
            f"Expected {kernels.mb} probe slices for the kernels and spec (mb={spec.mb}), not shape {probe_images.shape}."
        )
    maps = per_slice_maps(maps, spec.mb)

    matrix = np.zeros((spec.mb, spec.mb))
    for j in range(spec.mb):
        encoded = caipi_shift(fft2c(maps[j].expand(probe_images[j])), j, spec)
        energy = np.sum(np.abs(encoded) ** 2)
        if energy == 0:
            raise ValueError(f"Probe slice {j} is all zero.")
        separated = apply_slice_grappa(kernels, encoded)
        matrix[:, j] = np.sum(np.abs(separated) ** 2, axis=(1, 2, 3)) / energy

    logger.debug("L-factor matrix:\n%s", matrix)

    return LFactorReport(matrix)
