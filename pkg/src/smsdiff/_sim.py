"""
A module containing the synthetic ground truth and the simultaneous multi-slice acquisition model: phantoms, coil
sensitivities, CAIPIRINHA shifts, multiband collapse and uniform in-plane undersampling with ACS.
"""

from __future__ import annotations

import logging
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy.special import expit

from ._helper import export, verify_isinstance, verify_ndim
from ._tensor import as_complex, centered_frequencies, complex_normal, fft2c, ifft2c, make_rng, rss
from .typing import ArrayLike, MapsLike, SeedLike

logger = logging.getLogger(__name__)


###############################################################################
# Domain types
###############################################################################


@export
class AcquisitionSpec:
    r"""
    The parameters of a simultaneous multi-slice acquisition.

    Arguments:
        mb: The multiband factor, the number of simultaneously excited slices.
        caipi_fraction: The CAIPIRINHA shift per slice step in units of the field of view. Slice $s$ is shifted by
            $s \cdot$ `caipi_fraction` $\cdot$ FOV along the phase-encode axis. Floats and strings such as `"1/3"`
            are converted to :obj:`~fractions.Fraction`.
        accel: The in-plane acceleration factor $R$.
        acs_lines: The number of fully sampled central phase-encode lines.
        noise_sigma: The standard deviation of the complex receiver noise, $E|n|^2 = \sigma^2$.
        seed: The seed of the receiver-noise generator.

    Examples:
        The acquisition of the reference experiment: three slices, a third of the FOV per slice step (the last slice
        moves by two thirds), 32 ACS lines.

        .. ipython:: python

            smsdiff.AcquisitionSpec(mb=3, caipi_fraction="1/3", accel=3, acs_lines=32)

    Group:
        simulation
    """

    def __init__(
        self,
        mb: int = 3,
        caipi_fraction: Fraction | float | str = Fraction(1, 3),
        accel: int = 3,
        acs_lines: int = 32,
        noise_sigma: float = 0.0,
        seed: int = 0,
    ):
        verify_isinstance(mb, (int, np.integer))
        verify_isinstance(caipi_fraction, (Fraction, float, int, str))
        verify_isinstance(accel, (int, np.integer))
        verify_isinstance(acs_lines, (int, np.integer))
        verify_isinstance(noise_sigma, (float, int))
        verify_isinstance(seed, (int, np.integer))

        if isinstance(caipi_fraction, str):
            caipi_fraction = Fraction(caipi_fraction)
        elif not isinstance(caipi_fraction, Fraction):
            caipi_fraction = Fraction(caipi_fraction).limit_denominator(1_000_000)

        if not mb >= 1:
            raise ValueError(f"Argument 'mb' must be at least 1, not {mb}.")
        if not 0 <= caipi_fraction < 1:
            raise ValueError(f"Argument 'caipi_fraction' must be in [0, 1), not {caipi_fraction}.")
        if not accel >= 1:
            raise ValueError(f"Argument 'accel' must be at least 1, not {accel}.")
        if not acs_lines >= 0:
            raise ValueError(f"Argument 'acs_lines' must be non-negative, not {acs_lines}.")
        if not noise_sigma >= 0:
            raise ValueError(f"Argument 'noise_sigma' must be non-negative, not {noise_sigma}.")

        self._mb = int(mb)
        self._caipi_fraction = caipi_fraction
        self._accel = int(accel)
        self._acs_lines = int(acs_lines)
        self._noise_sigma = float(noise_sigma)
        self._seed = int(seed)

    def __repr__(self) -> str:
        return (
            f"AcquisitionSpec(mb={self.mb}, caipi_fraction={str(self.caipi_fraction)!r}, accel={self.accel}, "
            f"acs_lines={self.acs_lines}, noise_sigma={self.noise_sigma}, seed={self.seed})"
        )

    def shift_rows(self, slice_idx: int, ny: int) -> Fraction:
        """
        The image-domain cyclic shift, in rows, of slice `slice_idx` for `ny` phase-encode lines.
        """
        return slice_idx * self.caipi_fraction * ny

    @property
    def mb(self) -> int:
        return self._mb

    @property
    def caipi_fraction(self) -> Fraction:
        return self._caipi_fraction

    @property
    def accel(self) -> int:
        return self._accel

    @property
    def acs_lines(self) -> int:
        return self._acs_lines

    @property
    def noise_sigma(self) -> float:
        return self._noise_sigma

    @property
    def seed(self) -> int:
        return self._seed


@export
class SamplingMask:
    """
    A phase-encode line sampling pattern.

    Arguments:
        pattern: A boolean vector with one entry per phase-encode line.
        accel: The in-plane acceleration factor the pattern was built with.
        acs_lines: The number of centered ACS lines in the pattern.

    See Also:
        make_uniform_mask

    Group:
        simulation
    """

    def __init__(self, pattern: ArrayLike, accel: int, acs_lines: int):
        pattern = np.asarray(pattern, dtype=bool)
        verify_ndim(pattern, 1, "pattern")
        if not np.any(pattern):
            raise ValueError("Argument 'pattern' must have at least one acquired line.")

        self._pattern = pattern.copy()
        self._pattern.setflags(write=False)
        self._accel = int(accel)
        self._acs_lines = int(acs_lines)

    def __repr__(self) -> str:
        return f"<SamplingMask: ny={self.ny}, accel={self.accel}, acs_lines={self.acs_lines}, acquired={self.n_acquired}>"

    def apply(self, ksp: ArrayLike) -> np.ndarray:
        """
        Zeros every phase-encode line outside the pattern. Acquired lines pass through unchanged.
        """
        ksp = as_complex(ksp, "ksp")
        if not ksp.shape[-2] == self.ny:
            raise ValueError(f"Argument 'ksp' must have {self.ny} phase-encode lines, not shape {ksp.shape}.")
        return np.where(self._pattern[:, None], ksp, 0)

    def uniform_only(self) -> SamplingMask:
        """
        Returns the pattern with only the every-`accel`-th lines, without the ACS block.
        """
        pattern = np.zeros(self.ny, dtype=bool)
        pattern[:: self.accel] = True
        return SamplingMask(pattern, self.accel, 0)

    @property
    def ny(self) -> int:
        return self._pattern.size

    @property
    def pattern(self) -> np.ndarray:
        return self._pattern

    @property
    def accel(self) -> int:
        return self._accel

    @property
    def acs_lines(self) -> int:
        return self._acs_lines

    @property
    def acs_start(self) -> int:
        """
        The index of the first ACS line.
        """
        return self.ny // 2 - self.acs_lines // 2

    @property
    def n_acquired(self) -> int:
        return int(np.count_nonzero(self._pattern))


@export
class CoilSensitivities:
    r"""
    Per-coil complex spatial sensitivity maps $S$.

    Arguments:
        maps: A complex array with shape `(nc, ny, nx)`. Normalized maps satisfy $\sum_c |S_c|^2 = 1$ wherever a coil
            is nonzero.

    Notes:
        The maps are stored read-only, so one instance can be shared between threads and slices.

    Group:
        simulation
    """

    def __init__(self, maps: ArrayLike):
        maps = as_complex(maps, "maps")
        verify_ndim(maps, 3, "maps")

        self._maps = maps.copy()
        self._maps.setflags(write=False)

    def __repr__(self) -> str:
        return f"<CoilSensitivities: nc={self.nc}, shape={self.shape}>"

    def expand(self, image: ArrayLike) -> np.ndarray:
        """
        Returns the coil images $S_c x$ with shape `(..., nc, ny, nx)`.
        """
        image = as_complex(image, "image")
        return self._maps * image[..., None, :, :]

    def combine(self, coil_images: ArrayLike) -> np.ndarray:
        r"""
        Returns the coil combination $\sum_c \bar{S}_c x_c$ with shape `(..., ny, nx)`.
        """
        coil_images = as_complex(coil_images, "coil_images")
        return np.sum(np.conj(self._maps) * coil_images, axis=-3)

    def shifted(self, slice_idx: int, spec: AcquisitionSpec) -> CoilSensitivities:
        """
        Returns the maps in the CAIPIRINHA frame of slice `slice_idx`.

        Integer row shifts are exact cyclic rolls. Fractional shifts use the k-space phase ramp followed by
        renormalization.
        """
        rows = spec.shift_rows(slice_idx, self.shape[0])
        if rows.denominator == 1:
            return CoilSensitivities(np.roll(self._maps, int(rows), axis=-2))

        maps = ifft2c(caipi_shift(fft2c(self._maps), slice_idx, spec))
        norm = rss(maps)
        support = norm > 1e-6 * norm.max()
        maps = np.where(support, maps / np.where(support, norm, 1), 0)
        return CoilSensitivities(maps)

    @property
    def maps(self) -> np.ndarray:
        return self._maps

    @property
    def nc(self) -> int:
        return self._maps.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self._maps.shape[1:]


def per_slice_maps(maps: MapsLike, mb: int) -> list[CoilSensitivities]:
    """
    Expands shared coil sensitivities to one entry per slice and verifies the count.
    """
    if isinstance(maps, CoilSensitivities):
        return [maps] * mb
    maps = list(maps)
    for item in maps:
        verify_isinstance(item, CoilSensitivities)
    if not len(maps) == mb:
        raise ValueError(f"Expected {mb} sets of coil sensitivities, one per slice, not {len(maps)}.")
    return maps


###############################################################################
# Ground truth
###############################################################################


def _grid(ny: int, nx: int) -> tuple[np.ndarray, np.ndarray]:
    y = (np.arange(ny) - ny // 2) / (ny / 2)
    x = (np.arange(nx) - nx // 2) / (nx / 2)
    return np.meshgrid(y, x, indexing="ij")


def _ellipse(yy, xx, cy, cx, ay, ax, angle, edge):
    c, s = np.cos(angle), np.sin(angle)
    u = (xx - cx) * c + (yy - cy) * s
    v = -(xx - cx) * s + (yy - cy) * c
    r = np.sqrt((u / ax) ** 2 + (v / ay) ** 2)
    return expit((1 - r) / edge)


@export
def make_phantom(ny: int, nx: int, n_slices: int = 1, seed: int = 0) -> np.ndarray:
    """
    Generates smooth synthetic brain-like slices.

    Arguments:
        ny: The number of phase-encode rows, at least 8.
        nx: The number of readout columns, at least 8.
        n_slices: The number of distinct slices.
        seed: The seed. Slice `s` draws from the stream `(seed, s)`, so slices differ and are reproducible.

    Returns:
        A complex array with shape `(n_slices, ny, nx)`. Magnitudes lie in $[0, 1]$ with a maximum of 1 per slice,
        phases are smooth.

    Notes:
        Each slice is a soft-edged elliptical head filled with randomly placed soft ellipses and Gaussian blobs.
        Soft edges keep local k-space correlations realistic for kernel calibration.

    Examples:
        .. ipython:: python

            x = smsdiff.make_phantom(64, 64, 3, seed=0)
            x.shape, np.abs(x).max()

    Group:
        simulation
    """
    verify_isinstance(ny, (int, np.integer))
    verify_isinstance(nx, (int, np.integer))
    verify_isinstance(n_slices, (int, np.integer))
    verify_isinstance(seed, (int, np.integer))
    if not (ny >= 8 and nx >= 8):
        raise ValueError(f"Arguments 'ny' and 'nx' must be at least 8, not {ny} and {nx}.")
    if not n_slices >= 1:
        raise ValueError(f"Argument 'n_slices' must be at least 1, not {n_slices}.")

    yy, xx = _grid(ny, nx)
    slices = np.zeros((n_slices, ny, nx), dtype=np.complex128)

    for s in range(n_slices):
        rng = np.random.default_rng((int(seed), s))

        head = _ellipse(yy, xx, 0.04 * rng.uniform(-1, 1), 0.04 * rng.uniform(-1, 1),
                        0.82 + 0.06 * rng.uniform(), 0.68 + 0.06 * rng.uniform(), 0.1 * rng.uniform(-1, 1), 0.03)
        magnitude = np.full((ny, nx), 0.35 + 0.15 * rng.uniform())

        for _ in range(rng.integers(4, 8)):
            radius, theta = 0.45 * np.sqrt(rng.uniform()), 2 * np.pi * rng.uniform()
            magnitude += rng.uniform(-0.25, 0.45) * _ellipse(
                yy, xx, radius * np.sin(theta), radius * np.cos(theta),
                rng.uniform(0.08, 0.3), rng.uniform(0.08, 0.3), np.pi * rng.uniform(), 0.08,
            )  # fmt: skip

        for _ in range(6):
            radius, theta = 0.55 * np.sqrt(rng.uniform()), 2 * np.pi * rng.uniform()
            width = rng.uniform(0.05, 0.15)
            d2 = (yy - radius * np.sin(theta)) ** 2 + (xx - radius * np.cos(theta)) ** 2
            magnitude += rng.uniform(0.1, 0.3) * np.exp(-d2 / (2 * width**2))

        magnitude = np.clip(head * magnitude, 0, None)
        magnitude /= magnitude.max()

        c = rng.uniform(-1, 1, size=3)
        phase = 0.4 * np.pi * (c[0] * xx + c[1] * yy) + 0.3 * np.pi * c[2] * xx * yy

        slices[s] = magnitude * np.exp(1j * phase)

    return slices


@export
def simulate_coils(ny: int, nx: int, nc: int, seed: int = 0, rotation: float = 0.0) -> CoilSensitivities:
    r"""
    Simulates smooth, pixelwise-normalized receive coil sensitivities.

    Arguments:
        ny: The number of phase-encode rows.
        nx: The number of readout columns.
        nc: The number of coils.
        seed: The seed for the coil position jitter and phases.
        rotation: A rotation of the whole coil array in radians. Different slices of one excitation see the array from
            slightly different angles.

    Returns:
        Coil sensitivities with $\sum_c |S_c|^2 = 1$ at every pixel. A single coil is the constant map 1.

    Notes:
        Coils sit on a circle outside the field of view. Each sensitivity is a broad Gaussian falloff with a smooth
        phase, so nearly all of the map energy lies below half the k-space band.

    Group:
        simulation
    """
    verify_isinstance(nc, (int, np.integer))
    if not nc >= 1:
        raise ValueError(f"Argument 'nc' must be at least 1, not {nc}.")
    if nc == 1:
        return CoilSensitivities(np.ones((1, ny, nx), dtype=np.complex128))

    rng = np.random.default_rng(int(seed))
    yy, xx = _grid(ny, nx)
    maps = np.zeros((nc, ny, nx), dtype=np.complex128)

    for c in range(nc):
        angle = 2 * np.pi * c / nc + rotation + 0.1 * rng.uniform(-1, 1)
        cy, cx = 1.4 * np.sin(angle), 1.4 * np.cos(angle)
        d2 = (yy - cy) ** 2 + (xx - cx) ** 2
        magnitude = np.exp(-d2 / (2 * 0.9**2))
        phase = rng.uniform(-np.pi, np.pi) + 0.3 * (xx * np.cos(angle) + yy * np.sin(angle))
        maps[c] = magnitude * np.exp(1j * phase)

    maps /= rss(maps)[None]

    return CoilSensitivities(maps)


###############################################################################
# SMS encoding
###############################################################################


@export
def caipi_shift(ksp_slice: ArrayLike, slice_idx: int, spec: AcquisitionSpec, invert: bool = False) -> np.ndarray:
    r"""
    Applies the CAIPIRINHA phase ramp of one slice along the phase-encode axis.

    Arguments:
        ksp_slice: The single-slice k-space with shape `(..., ny, nx)`. Centered blocks of rows (such as the ACS
            block) are also accepted, since the ramp only depends on the centered frequency of each row.
        slice_idx: The slice index $s$ within the multiband group.
        spec: The acquisition whose `caipi_fraction` $f$ sets the shift.
        invert: Undo the shift instead of applying it.

    Returns:
        The k-space multiplied by $e^{\mp i 2\pi k_y s f}$, equivalent to a cyclic image shift of $s f$ FOV.

    Examples:
        .. ipython:: python

            spec = smsdiff.AcquisitionSpec(mb=3, caipi_fraction="1/3")
            x = np.zeros((9, 4)); x[0, 0] = 1
            np.abs(smsdiff.ifft2c(smsdiff.caipi_shift(smsdiff.fft2c(x), 1, spec))).round(6)[:, 0]

    Group:
        simulation
    """
    verify_isinstance(spec, AcquisitionSpec)
    verify_isinstance(invert, bool)
    if not 0 <= slice_idx < spec.mb:
        raise ValueError(f"Argument 'slice_idx' must be in [0, {spec.mb}), not {slice_idx}.")
    ksp_slice = as_complex(ksp_slice, "ksp_slice")
    verify_ndim(ksp_slice, 2, "ksp_slice", at_least=True)

    if slice_idx == 0 or spec.caipi_fraction == 0:
        return ksp_slice.copy()

    sign = 1 if invert else -1
    ky = centered_frequencies(ksp_slice.shape[-2])
    cycles = (slice_idx * spec.caipi_fraction * ky) % 1  # Exact rational reduction before the float conversion
    ramp = np.exp(sign * 2j * np.pi * cycles.astype(np.float64))

    return ksp_slice * ramp[:, None]


@export
def collapse_sms(slices: ArrayLike, spec: AcquisitionSpec, shifted: bool = False) -> np.ndarray:
    r"""
    Encodes single-slice k-spaces into the collapsed multiband k-space.

    Arguments:
        slices: The single-slice k-spaces with shape `(mb, ..., ny, nx)`.
        spec: The acquisition.
        shifted: Indicates the slices already carry their CAIPIRINHA shift (the acquisition frame used by the Slice-GRAPPA
            outputs) and are only summed.

    Returns:
        $\sum_s \mathrm{caipi\_shift}(x_s, s)$ with shape `(..., ny, nx)`.

    Group:
        simulation
    """
    verify_isinstance(spec, AcquisitionSpec)
    slices = as_complex(slices, "slices")
    if not (slices.ndim >= 3 and slices.shape[0] == spec.mb):
        raise ValueError(f"Argument 'slices' must have {spec.mb} slices along axis 0, not shape {slices.shape}.")

    if shifted:
        return np.sum(slices, axis=0)

    collapsed = np.zeros(slices.shape[1:], dtype=np.complex128)
    for s in range(spec.mb):
        collapsed += caipi_shift(slices[s], s, spec)

    return collapsed


@export
def make_uniform_mask(ny: int, accel: int, acs_lines: int) -> SamplingMask:
    """
    Builds a uniform phase-encode undersampling pattern with a centered ACS block.

    Arguments:
        ny: The number of phase-encode lines.
        accel: Every `accel`-th line is acquired, starting at line 0.
        acs_lines: The number of contiguous centered ACS lines, starting at `ny // 2 - acs_lines // 2`.

    Returns:
        The sampling mask.

    Examples:
        .. ipython:: python

            np.flatnonzero(smsdiff.make_uniform_mask(12, 3, 0).pattern)

    Group:
        simulation
    """
    verify_isinstance(ny, (int, np.integer))
    verify_isinstance(accel, (int, np.integer))
    verify_isinstance(acs_lines, (int, np.integer))
    if not 1 <= accel <= ny:
        raise ValueError(f"Argument 'accel' must be in [1, {ny}], not {accel}.")
    if not 0 <= acs_lines <= ny:
        raise ValueError(f"Argument 'acs_lines' must be in [0, {ny}], not {acs_lines}.")

    pattern = np.zeros(ny, dtype=bool)
    pattern[::accel] = True
    start = ny // 2 - acs_lines // 2
    pattern[start : start + acs_lines] = True

    return SamplingMask(pattern, accel, acs_lines)


@export
def apply_mask(ksp: ArrayLike, mask: SamplingMask) -> np.ndarray:
    """
    Zeros the phase-encode lines of `ksp` that `mask` does not acquire.

    Group:
        simulation
    """
    verify_isinstance(mask, SamplingMask)
    return mask.apply(ksp)


@export
def acquire(
    slices_truth: ArrayLike,
    maps: MapsLike,
    spec: AcquisitionSpec,
) -> tuple[np.ndarray, np.ndarray, SamplingMask]:
    r"""
    Simulates an SMS acquisition with in-plane undersampling and per-slice calibration scans.

    Arguments:
        slices_truth: The ground-truth images with shape `(mb, ny, nx)`.
        maps: Coil sensitivities shared by all slices, or one set per slice.
        spec: The acquisition.

    Returns:
        - The measured collapsed k-space $M \odot (\sum_s \mathrm{caipi\_shift}(F S_s x_s, s) + n)$ with shape
          `(nc, ny, nx)`.
        - The single-slice ACS blocks (unshifted) with shape `(mb, nc, acs_lines, nx)`. Each block is a separate
          calibration scan and gets its own receiver noise.
        - The sampling mask.

    Group:
        simulation
    """
    verify_isinstance(spec, AcquisitionSpec)
    slices_truth = as_complex(slices_truth, "slices_truth")
    verify_ndim(slices_truth, 3, "slices_truth")
    if not slices_truth.shape[0] == spec.mb:
        raise ValueError(f"Argument 'slices_truth' must have {spec.mb} slices, not shape {slices_truth.shape}.")
    maps = per_slice_maps(maps, spec.mb)
    ny, nx = slices_truth.shape[1:]
    for item in maps:
        if not item.shape == (ny, nx):
            raise ValueError(f"Coil sensitivities have shape {item.shape}, the images have shape {(ny, nx)}.")
    nc = maps[0].nc

    ksp = np.stack([fft2c(maps[s].expand(slices_truth[s])) for s in range(spec.mb)])
    collapsed = collapse_sms(ksp, spec)

    mask = make_uniform_mask(ny, spec.accel, spec.acs_lines)
    acs = ksp[:, :, mask.acs_start : mask.acs_start + spec.acs_lines, :].copy()

    if spec.noise_sigma > 0:
        rng = make_rng(spec.seed)
        collapsed = collapsed + spec.noise_sigma * complex_normal(rng, (nc, ny, nx))
        acs = acs + spec.noise_sigma * complex_normal(rng, acs.shape)

    sms_ksp = mask.apply(collapsed)
    logger.debug("Acquired %d of %d lines, mb=%d, nc=%d", mask.n_acquired, ny, spec.mb, nc)

    return sms_ksp, acs, mask


@export
def simulate_scene(
    ny: int,
    nx: int,
    nc: int,
    spec: AcquisitionSpec,
    seed: int = 0,
) -> tuple[np.ndarray, list[CoilSensitivities], np.ndarray, np.ndarray, SamplingMask]:
    """
    Generates phantoms, per-slice coil sensitivities and their SMS acquisition in one call.

    Returns:
        The truth `(mb, ny, nx)`, the per-slice coil sensitivities, the measured collapsed k-space, the per-slice ACS
        blocks and the sampling mask.

    Group:
        simulation
    """
    truth = make_phantom(ny, nx, spec.mb, seed=seed)
    maps = [
        simulate_coils(ny, nx, nc, seed=seed, rotation=2 * np.pi * s / (max(nc, 1) * spec.mb)) for s in range(spec.mb)
    ]
    sms_ksp, acs, mask = acquire(truth, maps, spec)
    return truth, maps, sms_ksp, acs, mask


def slice_seeds(seed: SeedLike, n: int) -> list:
    """
    Returns `n` independent per-slice seeds derived from `seed`.
    """
    if isinstance(seed, (int, np.integer)):
        return [(int(seed), s) for s in range(n)]
    if seed is None:
        return [None] * n
    rng = make_rng(seed)
    return [rng] * n
