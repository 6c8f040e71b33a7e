"""
A module containing the SMS reverse-diffusion reconstruction: initialization, SMS-domain data consistency with
Slice-GRAPPA re-separation, the per-slice predictor-corrector loop and the reconstruction report.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from typing import Sequence, Union

import numpy as np
from tqdm.auto import tqdm

from ._calib import SliceGrappaKernels, apply_slice_grappa, calibrate_spirit, coil_project
from ._diffusion import DiffusionSchedule, ScoreModel, corrector_step, forward_perturb, predictor_step
from ._errors import NumericalError
from ._helper import export, verify_isinstance, verify_ndim
from ._metrics import nmse, psnr, ssim
from ._options import get_options
from ._recon import acquired_support, spirit_recon
from ._sim import AcquisitionSpec, CoilSensitivities, SamplingMask, caipi_shift, collapse_sms, per_slice_maps, slice_seeds
from ._tensor import as_complex, ifft2c, make_rng
from .typing import ArrayLike, MapsLike, SeedLike

logger = logging.getLogger(__name__)


###############################################################################
# Problem definition
###############################################################################


@export
class SmsProblem:
    """
    Everything the SMS sampler needs about one acquisition.

    Arguments:
        sms_ksp: The measured collapsed k-space with shape `(nc, ny, nx)`. Lines the mask does not acquire must be
            exactly zero.
        mask: The sampling mask.
        kernels: The Slice-GRAPPA kernels, used for initialization and inside the data-consistency step.
        maps_per_slice: The coil sensitivities of each slice, in the unshifted frame.
        spec: The acquisition.
        schedule: The diffusion schedule.
        score_model: The per-slice score model.
        acs_per_slice: The single-slice ACS blocks `(mb, nc, acs_lines, nx)` that calibrate the initializing SPIRiT
            kernels. Without them the initialization is the Slice-GRAPPA output alone.

    Group:
        sampler
    """

    def __init__(
        self,
        sms_ksp: ArrayLike,
        mask: SamplingMask,
        kernels: SliceGrappaKernels,
        maps_per_slice: MapsLike,
        spec: AcquisitionSpec,
        schedule: DiffusionSchedule,
        score_model: ScoreModel,
        acs_per_slice: ArrayLike | None = None,
    ):
        verify_isinstance(mask, SamplingMask)
        verify_isinstance(kernels, SliceGrappaKernels)
        verify_isinstance(spec, AcquisitionSpec)
        verify_isinstance(schedule, DiffusionSchedule)
        verify_isinstance(score_model, ScoreModel)
        sms_ksp = as_complex(sms_ksp, "sms_ksp")
        verify_ndim(sms_ksp, 3, "sms_ksp")
        nc, ny, nx = sms_ksp.shape
        maps = per_slice_maps(maps_per_slice, spec.mb)

        if not kernels.mb == spec.mb:
            raise ValueError(f"The kernels separate {kernels.mb} slices, the acquisition has mb={spec.mb}.")
        if not kernels.nc == nc:
            raise ValueError(f"The kernels have {kernels.nc} coils, argument 'sms_ksp' has shape {sms_ksp.shape}.")
        for item in maps:
            if not item.maps.shape == (nc, ny, nx):
                raise ValueError(f"Coil sensitivities have shape {item.maps.shape}, the k-space has {(nc, ny, nx)}.")
        if not mask.ny == ny:
            raise ValueError(f"The mask has {mask.ny} lines, argument 'sms_ksp' has {ny}.")
        if not schedule.shape == (ny, nx):
            raise ValueError(f"The schedule has shape {schedule.shape}, the k-space has {(ny, nx)}.")
        if np.any(sms_ksp[:, ~mask.pattern, :] != 0):
            raise ValueError("Argument 'sms_ksp' has nonzero entries on lines the mask does not acquire.")
        if acs_per_slice is not None:
            acs_per_slice = as_complex(acs_per_slice, "acs_per_slice")
            verify_ndim(acs_per_slice, 4, "acs_per_slice")
            if not (acs_per_slice.shape[:2] == (spec.mb, nc) and acs_per_slice.shape[-1] == nx):
                raise ValueError(f"Argument 'acs_per_slice' has shape {acs_per_slice.shape}, expected (mb, nc, acs, nx).")

        self._sms_ksp = sms_ksp
        self._mask = mask
        self._kernels = kernels
        self._maps = maps
        self._spec = spec
        self._schedule = schedule
        self._score_model = score_model
        self._acs = acs_per_slice
        self._frame_maps = [maps[s].shifted(s, spec) for s in range(spec.mb)]

    def __repr__(self) -> str:
        nc, ny, nx = self._sms_ksp.shape
        return f"<SmsProblem: mb={self.spec.mb}, nc={nc}, shape={(ny, nx)}, accel={self.mask.accel}>"

    @property
    def sms_ksp(self) -> np.ndarray:
        return self._sms_ksp

    @property
    def mask(self) -> SamplingMask:
        return self._mask

    @property
    def kernels(self) -> SliceGrappaKernels:
        return self._kernels

    @property
    def maps_per_slice(self) -> list[CoilSensitivities]:
        return list(self._maps)

    @property
    def frame_maps(self) -> list[CoilSensitivities]:
        """
        The coil sensitivities of each slice in its CAIPIRINHA frame, where the sampler chains live.
        """
        return list(self._frame_maps)

    @property
    def spec(self) -> AcquisitionSpec:
        return self._spec

    @property
    def schedule(self) -> DiffusionSchedule:
        return self._schedule

    @property
    def score_model(self) -> ScoreModel:
        return self._score_model

    @property
    def acs_per_slice(self) -> np.ndarray | None:
        return self._acs


###############################################################################
# Building blocks
###############################################################################


@export
def initialize(problem: SmsProblem, kh: int = 5, kw: int = 5, tikhonov: float = 1e-6, iters: int = 100) -> np.ndarray:
    """
    Builds the starting k-space of every slice: Slice-GRAPPA separation, then SPIRiT per slice.

    Arguments:
        problem: The problem.
        kh: The SPIRiT kernel height, reduced to fit the ACS block if needed.
        kw: The SPIRiT kernel width.
        tikhonov: The SPIRiT calibration regularization.
        iters: The SPIRiT iteration cap.

    Returns:
        The single-slice k-spaces, in their CAIPIRINHA frames, with shape `(mb, nc, ny, nx)`.

    Notes:
        SPIRiT keeps the uniformly acquired lines of each separated slice and fills the rest. ACS lines off the uniform
        grid are taken from the slice's own calibration scan and kept as acquired. With `accel=1` every line is kept
        and the result is the Slice-GRAPPA output.

    Group:
        sampler
    """
    verify_isinstance(problem, SmsProblem)
    spec = problem.spec
    separated = apply_slice_grappa(problem.kernels, problem.sms_ksp)

    if problem.acs_per_slice is None or problem.acs_per_slice.shape[-2] == 0:
        logger.info("No ACS blocks given, initializing with the Slice-GRAPPA output only")
        return separated

    acs_lines = problem.acs_per_slice.shape[-2]
    kh = min(kh, acs_lines if acs_lines % 2 == 1 else acs_lines - 1)
    kw = min(kw, problem.sms_ksp.shape[-1] if problem.sms_ksp.shape[-1] % 2 == 1 else problem.sms_ksp.shape[-1] - 1)
    mask = problem.mask
    uniform = mask.uniform_only().pattern
    start = mask.ny // 2 - acs_lines // 2
    rows = slice(start, start + acs_lines)
    acs_only = np.zeros(mask.ny, dtype=bool)
    acs_only[rows] = ~uniform[rows]

    init = np.empty_like(separated)
    for s in range(spec.mb):
        acs = caipi_shift(problem.acs_per_slice[s], s, spec)
        kernel = calibrate_spirit(acs, kh, kw, tikhonov)
        measured = np.where(uniform[:, None], separated[s], 0)
        measured[:, acs_only] = acs[:, acs_only[rows]]
        init[s] = spirit_recon(measured, kernel, uniform | acs_only, iters=iters)

    return init


def _consistency(
    z0_slices: np.ndarray, problem: SmsProblem, dc_weight: float, include_acs: bool
) -> tuple[np.ndarray, np.ndarray, float]:
    combined = collapse_sms(z0_slices, problem.spec, shifted=True)
    mask = problem.mask if include_acs else problem.mask.uniform_only()
    acquired = acquired_support(mask, combined.shape)

    measured = problem.sms_ksp
    energy = float(np.linalg.norm(measured[acquired]))
    residual = float(np.linalg.norm((combined - measured)[acquired])) / energy if energy > 0 else 0.0

    if dc_weight == 1:
        dc = np.where(acquired, measured, combined)
    else:
        dc = np.where(acquired, (1 - dc_weight) * combined + dc_weight * measured, combined)

    separated = apply_slice_grappa(problem.kernels, dc)

    return separated, dc, residual


@export
def data_consistency_sms(
    z0_slices: ArrayLike,
    problem: SmsProblem,
    return_sms: bool = False,
    dc_weight: float = 1.0,
    include_acs: bool = True,
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    r"""
    Enforces the SMS measurements on per-slice clean-k-space estimates.

    Arguments:
        z0_slices: The per-slice estimates, in their CAIPIRINHA frames, with shape `(mb, nc, ny, nx)`.
        problem: The problem.
        return_sms: Also return the intermediate data-consistent collapsed k-space.
        dc_weight: The relaxation weight $w$ on acquired lines, $w y + (1 - w) \hat{z}$. The default 1 replaces the
            acquired lines exactly.
        include_acs: Treat the ACS lines of the collapsed data as acquired. With `False` only the uniform lines are
            enforced.

    Returns:
        The re-separated slices with shape `(mb, nc, ny, nx)`, and the data-consistent collapsed k-space if
        `return_sms=True`.

    Notes:
        The estimates are summed into the collapsed k-space $\hat{z}_{sms}$, the acquired lines are replaced by the
        measurements and the result is separated again with the Slice-GRAPPA kernels. With `dc_weight=1` the
        intermediate collapsed k-space equals the measurements bit-exactly on acquired lines.

    Group:
        sampler
    """
    verify_isinstance(problem, SmsProblem)
    verify_isinstance(include_acs, bool)
    z0_slices = as_complex(z0_slices, "z0_slices")
    expected = (problem.spec.mb, *problem.sms_ksp.shape)
    if not z0_slices.shape == expected:
        raise ValueError(f"Argument 'z0_slices' must have shape {expected}, not {z0_slices.shape}.")
    if not 0 <= dc_weight <= 1:
        raise ValueError(f"Argument 'dc_weight' must be in [0, 1], not {dc_weight}.")

    separated, dc, _ = _consistency(z0_slices, problem, dc_weight, include_acs)

    if return_sms:
        return separated, dc
    return separated


@export
def finalize_slices(z_slices: ArrayLike, problem: SmsProblem) -> np.ndarray:
    r"""
    Removes the CAIPIRINHA shift of each slice and coil-combines it, $\sum_c \bar{S}_c x_c$.

    Returns:
        The complex slice images with shape `(mb, ny, nx)`.

    Group:
        sampler
    """
    verify_isinstance(problem, SmsProblem)
    z_slices = as_complex(z_slices, "z_slices")
    verify_ndim(z_slices, 4, "z_slices")
    maps = problem.maps_per_slice

    images = np.empty((problem.spec.mb, *z_slices.shape[-2:]), dtype=np.complex128)
    for s in range(problem.spec.mb):
        images[s] = maps[s].combine(ifft2c(caipi_shift(z_slices[s], s, problem.spec, invert=True)))

    return images


###############################################################################
# Run log
###############################################################################


@export
@dataclasses.dataclass
class RunLog:
    """
    A structured record of one sampler run, serializable to JSON.

    Group:
        sampler
    """

    config_hash: str | None = None
    seeds: list = dataclasses.field(default_factory=list)
    n_corrector: int = 0
    consistency: bool = True
    steps: list = dataclasses.field(default_factory=list)
    total_seconds: float = 0.0

    def record(self, step: int, t: float, dc_residual: float | None, seconds: float):
        self.steps.append({"step": step, "t": t, "dc_residual": dc_residual, "seconds": seconds})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=str) + "\n"


###############################################################################
# Sampler
###############################################################################


@export
def sample_slices(
    problem: SmsProblem,
    n_corrector: int = 1,
    seed: SeedLike = 0,
    consistency: bool = True,
    corrector_first: bool = True,
    dc_weight: float = 1.0,
    include_acs: bool = True,
    snr: float = 0.16,
    z_init: ArrayLike | None = None,
    run_log: RunLog | None = None,
) -> np.ndarray:
    """
    Runs the per-slice predictor-corrector chains with SMS data consistency and returns their final k-space.

    Arguments:
        problem: The problem.
        n_corrector: The number of corrector steps per predictor step.
        seed: The base seed. Slice `s` draws from the stream `(seed, s)`.
        consistency: Apply :func:`data_consistency_sms` to the denoised estimates of the predictor. With `False` the
            chains are independent.
        corrector_first: Run the correctors before the predictor of each step.
        dc_weight: The data-consistency weight, see :func:`data_consistency_sms`.
        include_acs: Enforce the ACS lines of the collapsed data.
        snr: The corrector signal-to-noise ratio.
        z_init: The per-slice starting k-space `(mb, nc, ny, nx)` in the CAIPIRINHA frames. The default is
            :func:`initialize`.
        run_log: A record to fill with per-step residuals and timings.

    Returns:
        The per-slice k-spaces with shape `(mb, nc, ny, nx)`, in their CAIPIRINHA frames.

    Notes:
        Each slice chain consumes its own random stream in the same order as :func:`~smsdiff.reverse_diffusion`, so
        without data consistency slice `s` equals `reverse_diffusion(z_init[s], ..., seed=(seed, s))` bit-exactly.
        The data-consistency step joins all slices once per step; the corrector sees no data consistency.

    Group:
        sampler
    """
    verify_isinstance(problem, SmsProblem)
    verify_isinstance(n_corrector, (int, np.integer))
    verify_isinstance(consistency, bool)
    verify_isinstance(corrector_first, bool)
    verify_isinstance(run_log, RunLog, optional=True)
    if not n_corrector >= 0:
        raise ValueError(f"Argument 'n_corrector' must be non-negative, not {n_corrector}.")
    if not 0 <= dc_weight <= 1:
        raise ValueError(f"Argument 'dc_weight' must be in [0, 1], not {dc_weight}.")

    mb = problem.spec.mb
    schedule, model, maps = problem.schedule, problem.score_model, problem.frame_maps
    if z_init is None:
        z_init = initialize(problem)
    z_init = as_complex(z_init, "z_init")
    if not z_init.shape == (mb, *problem.sms_ksp.shape):
        raise ValueError(f"Argument 'z_init' must have shape {(mb, *problem.sms_ksp.shape)}, not {z_init.shape}.")

    seeds = slice_seeds(seed, mb)
    rngs = [make_rng(item) for item in seeds]
    if run_log is not None:
        run_log.seeds = [list(item) if isinstance(item, tuple) else str(item) for item in seeds]
        run_log.n_corrector = int(n_corrector)
        run_log.consistency = consistency

    start = time.perf_counter()
    z = np.stack([coil_project(forward_perturb(z_init[s], 1.0, schedule, maps[s], rngs[s]), maps[s]) for s in range(mb)])

    for i in tqdm(range(schedule.n_steps - 1, -1, -1), desc="SMS sampling", disable=not get_options()["progress"]):
        tick = time.perf_counter()
        t_next = schedule.t_grid[i + 1]

        if corrector_first:
            for s in range(mb):
                for _ in range(n_corrector):
                    z[s] = corrector_step(z[s], i + 1, schedule, model, maps[s], snr, rngs[s])

        z0_hat = np.stack([model.denoise(z[s], t_next, maps[s]) for s in range(mb)])
        residual = None
        if consistency:
            z0_hat, _, residual = _consistency(z0_hat, problem, dc_weight, include_acs)
            if not np.all(np.isfinite(z0_hat)):
                raise NumericalError(f"The data-consistent estimate is not finite at step {i}.", step=i)
            logger.debug("step %d: data-consistency residual %.4e", i, residual)

        for s in range(mb):
            z[s] = predictor_step(z[s], i, schedule, model, maps[s], rngs[s], z0_hat=z0_hat[s])

        if not corrector_first:
            for s in range(mb):
                for _ in range(n_corrector):
                    z[s] = corrector_step(z[s], i, schedule, model, maps[s], snr, rngs[s])

        if run_log is not None:
            run_log.record(i, float(schedule.t_grid[i]), residual, time.perf_counter() - tick)

    elapsed = time.perf_counter() - start
    if run_log is not None:
        run_log.total_seconds = elapsed
    logger.info("Sampled %d slices over %d steps in %.1f s", mb, schedule.n_steps, elapsed)

    return z


@export
def sms_reconstruct(
    problem: SmsProblem,
    n_corrector: int = 1,
    seed: SeedLike = 0,
    consistency: bool = True,
    corrector_first: bool = True,
    dc_weight: float = 1.0,
    include_acs: bool = True,
    snr: float = 0.16,
    z_init: ArrayLike | None = None,
    run_log: RunLog | None = None,
) -> np.ndarray:
    """
    Reconstructs the slices of an SMS acquisition by reverse heat diffusion constrained by Slice-GRAPPA.

    The arguments are those of :func:`sample_slices`.

    Returns:
        The complex slice images, aligned with the unshifted ground truth, with shape `(mb, ny, nx)`. Identical
        problems and seeds give bit-identical images.

    Examples:
        A noiseless single-slice acquisition with a Gaussian prior centered on the truth.

        .. ipython:: python

            spec = smsdiff.AcquisitionSpec(mb=1, accel=1, acs_lines=8)
            truth, maps, sms, acs, mask = smsdiff.simulate_scene(16, 16, 2, spec)
            kernels = smsdiff.calibrate_slice_grappa(acs, spec, kh=1, kw=1, tikhonov=0)
            schedule = smsdiff.make_schedule(16, 16, n_steps=20, sigma_min=1e-3)
            prior = smsdiff.fft2c(maps[0].expand(truth[0]))
            model = smsdiff.analytic_gaussian_score(prior, 1e-6, schedule)
            problem = smsdiff.SmsProblem(sms, mask, kernels, maps, spec, schedule, model, acs)
            recon = smsdiff.sms_reconstruct(problem, seed=0)
            smsdiff.nmse(truth, recon)

    Group:
        sampler
    """
    z = sample_slices(
        problem,
        n_corrector=n_corrector,
        seed=seed,
        consistency=consistency,
        corrector_first=corrector_first,
        dc_weight=dc_weight,
        include_acs=include_acs,
        snr=snr,
        z_init=z_init,
        run_log=run_log,
    )
    return finalize_slices(z, problem)


###############################################################################
# Report
###############################################################################


@export
@dataclasses.dataclass(frozen=True)
class MetricsRow:
    """
    One row of a reconstruction report.

    Group:
        sampler
    """

    method: str
    slice: Union[int, str]
    nmse: float
    psnr: float
    ssim: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@export
def recon_report(truth: ArrayLike, recon: ArrayLike, method: str = "proposed", ssim_window: int = 11) -> list[MetricsRow]:
    """
    Scores each reconstructed slice against the truth on magnitude images.

    Arguments:
        truth: The ground-truth slices with shape `(mb, ny, nx)`.
        recon: The reconstructed slices.
        method: The method label of the rows.
        ssim_window: The SSIM window side.

    Returns:
        One :obj:`MetricsRow` per slice followed by a row with `slice="mean"`.

    Group:
        sampler
    """
    truth = np.abs(as_complex(truth, "truth"))
    recon = np.abs(as_complex(recon, "recon"))
    verify_ndim(truth, 3, "truth")
    if not truth.shape == recon.shape:
        raise ValueError(f"Arguments 'truth' and 'recon' must have matching shapes, not {truth.shape} and {recon.shape}.")

    rows = [
        MetricsRow(method, s, nmse(truth[s], recon[s]), psnr(truth[s], recon[s]), ssim(truth[s], recon[s], ssim_window))
        for s in range(truth.shape[0])
    ]
    rows.append(
        MetricsRow(
            method,
            "mean",
            float(np.mean([r.nmse for r in rows])),
            float(np.mean([r.psnr for r in rows])),
            float(np.mean([r.ssim for r in rows])),
        )
    )

    return rows


@export
def format_table(rows: Sequence[MetricsRow]) -> str:
    """
    Renders report rows as a fixed-width text table with the columns method, slice, NMSE, PSNR (dB) and SSIM.

    Group:
        sampler
    """
    lines = [f"{'method':<12} {'slice':>5} {'NMSE':>10} {'PSNR (dB)':>10} {'SSIM':>8}"]
    for row in rows:
        lines.append(f"{row.method:<12} {str(row.slice):>5} {row.nmse:>10.4f} {row.psnr:>10.4f} {row.ssim:>8.4f}")
    return "\n".join(lines)
