"""
The command-line front end: `smsdiff simulate | calibrate | train | recon | eval`.

All verbs share one run directory (`--out`). Each verb reads the artifacts of the previous ones from it and writes its
own, together with the resolved configuration and its hash in `config.json`.
"""

from __future__ import annotations

import argparse
import json
import logging
import pathlib
import sys
from typing import Sequence

import numpy as np

from . import _calib, _diffusion, _io, _metrics, _recon, _sampler, _sim, _tensor
from ._config import RunConfig, config_hash, load_config, override, read_run_config, write_config
from ._errors import ArrayFormatError, ConfigError, NumericalError
from ._options import set_options

logger = logging.getLogger("smsdiff.cli")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

METHODS = ["sg-sense", "proposed"]


###############################################################################
# Artifact helpers
###############################################################################


def _read_maps(run: pathlib.Path, name: str = "maps") -> list[_sim.CoilSensitivities]:
    maps = _io.read_array(run / name)
    return [_sim.CoilSensitivities(item) for item in maps]


def _read_mask(run: pathlib.Path, config: RunConfig) -> _sim.SamplingMask:
    pattern = _io.read_array(run / "mask")
    if not pattern.shape == (config.sim.ny,):
        raise ArrayFormatError(run / "mask.json", f"shape {pattern.shape} != ({config.sim.ny},)")
    return _sim.SamplingMask(pattern > 0.5, config.sim.accel, config.sim.acs_lines)


def _read_kernels(run: pathlib.Path) -> _calib.SliceGrappaKernels:
    path = run / "kernels_meta.json"
    if not path.is_file():
        raise ArrayFormatError(path, "file not found")
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ArrayFormatError(path, f"not valid JSON ({e})") from None
    for field in ("tikhonov", "dilation", "fit_residual"):
        if field not in meta:
            raise ArrayFormatError(path, f"missing field {field!r}")
    weights = _io.read_array(run / "kernels")
    return _calib.SliceGrappaKernels(weights, meta["tikhonov"], meta["dilation"], meta["fit_residual"])


def _write_json(path: pathlib.Path, document: dict):
    path.write_text(json.dumps(document, indent=2, sort_keys=True) + "\n")


###############################################################################
# Verbs
###############################################################################


def cmd_simulate(args: argparse.Namespace, config: RunConfig, run: pathlib.Path) -> int:
    sim = config.sim
    spec = config.acquisition_spec()
    truth, maps, sms_ksp, acs, mask = _sim.simulate_scene(sim.ny, sim.nx, sim.nc, spec, seed=config.seed)

    _io.write_array(run / "truth", truth)
    _io.write_array(run / "maps", np.stack([m.maps for m in maps]))
    _io.write_array(run / "sms_ksp", sms_ksp)
    _io.write_array(run / "acs", acs)
    _io.write_array(run / "mask", mask.pattern)
    logger.info("Simulated %r, %d of %d lines acquired", spec, mask.n_acquired, sim.ny)

    return EXIT_OK


def cmd_calibrate(args: argparse.Namespace, config: RunConfig, run: pathlib.Path) -> int:
    calib = config.calib
    spec = config.acquisition_spec()
    acs = _io.read_array(run / "acs")
    truth = _io.read_array(run / "truth")
    maps = _read_maps(run)

    kh, dilation = _calib.kernel_geometry(spec, calib.kh, calib.pattern_aware)
    kernels = _calib.calibrate_slice_grappa(acs, spec, kh, calib.kw, calib.tikhonov, dilation)
    _io.write_array(run / "kernels", kernels.weights)
    _write_json(
        run / "kernels_meta.json",
        {"tikhonov": kernels.tikhonov, "dilation": kernels.dilation, "fit_residual": kernels.fit_residual},
    )

    report = _calib.leakage_lfactor(kernels, maps, spec, truth)
    _write_json(
        run / "lfactor.json",
        {"matrix": report.matrix.tolist(), "diagonally_dominant": report.is_diagonally_dominant()},
    )
    logger.info("Slice leakage matrix:\n%s", report)

    estimated = [_calib.estimate_sensitivities(acs[s], config.sim.ny, config.sim.nx) for s in range(spec.mb)]
    _io.write_array(run / "maps_est", np.stack([m.maps for m in estimated]))

    return EXIT_OK


def training_set(config: RunConfig) -> tuple[list[np.ndarray], list[_sim.CoilSensitivities]]:
    """
    Builds the single-slice multi-coil k-space training items from phantoms unseen by `simulate`.
    """
    sim, n = config.sim, config.diffusion.n_train
    phantoms = _sim.make_phantom(sim.ny, sim.nx, n, seed=config.seed + 1)
    items, maps = [], []
    for k in range(n):
        coils = _sim.simulate_coils(sim.ny, sim.nx, sim.nc, seed=config.seed + 1 + k, rotation=2 * np.pi * k / n)
        items.append(_tensor.fft2c(coils.expand(phantoms[k])))
        maps.append(coils)
    return items, maps


def cmd_train(args: argparse.Namespace, config: RunConfig, run: pathlib.Path) -> int:
    items, maps = training_set(config)
    model = _diffusion.train_score(items, maps, config.schedule(), config.train_config())
    _diffusion.save_score_model(model, run / "model")
    initial, final = model.held_out
    _write_json(run / "train_log.json", {"held_out": [initial, final], "converged": model.converged})
    logger.info("Trained %r on %d items, held-out loss %.4e -> %.4e", model, len(items), initial, final)

    return EXIT_OK


def cmd_recon(args: argparse.Namespace, config: RunConfig, run: pathlib.Path) -> int:
    spec = config.acquisition_spec()
    sms_ksp = _io.read_array(run / "sms_ksp")
    mask = _read_mask(run, config)
    maps = _read_maps(run, "maps_est")
    kernels = _read_kernels(run)

    if args.method == "sg-sense":
        images = _recon.sg_sense_pipeline(sms_ksp, kernels, maps, mask, spec)
    else:
        acs = _io.read_array(run / "acs")
        model = _diffusion.load_score_model(run / "model")
        if not model.schedule.digest() == config.schedule().digest():
            raise ConfigError("The trained model's schedule does not match the [diffusion] section of the configuration.")
        problem = _sampler.SmsProblem(sms_ksp, mask, kernels, maps, spec, model.schedule, model, acs)
        calib, sampler = config.calib, config.sampler
        z_init = _sampler.initialize(problem, calib.spirit_kh, calib.spirit_kw, calib.spirit_tikhonov, calib.spirit_iters)
        run_log = _sampler.RunLog(config_hash=config_hash(config))
        images = _sampler.sms_reconstruct(
            problem,
            n_corrector=sampler.n_corrector,
            seed=config.seed,
            consistency=sampler.consistency,
            corrector_first=sampler.corrector_first,
            dc_weight=sampler.dc_weight,
            include_acs=sampler.include_acs,
            snr=sampler.snr,
            z_init=z_init,
            run_log=run_log,
        )
        (run / "run_log.json").write_text(run_log.to_json())

    _io.write_array(run / f"recon_{args.method}", images)
    logger.info("Reconstructed %d slices with %s", images.shape[0], args.method)

    return EXIT_OK


def format_csv(rows: Sequence[_sampler.MetricsRow]) -> str:
    lines = ["method,slice,nmse,psnr_db,ssim"]
    for row in rows:
        lines.append(f"{row.method},{row.slice},{row.nmse:.6g},{row.psnr:.6g},{row.ssim:.6g}")
    return "\n".join(lines) + "\n"


def cmd_eval(args: argparse.Namespace, config: RunConfig, run: pathlib.Path) -> int:
    truth = _io.read_array(run / "truth")
    recon_path = pathlib.Path(args.recon) if args.recon else run / f"recon_{args.method}"
    recon = _io.read_array(recon_path)
    if not recon.shape == truth.shape:
        raise ArrayFormatError(recon_path, f"shape {recon.shape} != truth shape {truth.shape}")

    rows = _sampler.recon_report(truth, recon, args.method, config.metrics.ssim_window)
    (run / f"metrics_{args.method}.csv").write_text(format_csv(rows))
    _write_json(
        run / f"metrics_{args.method}.json",
        {"config_hash": config_hash(config), "rows": [row.to_dict() for row in rows]},
    )
    _io.write_array(run / f"magnitude_{args.method}", np.abs(recon))
    _io.write_array(run / f"error_{args.method}", np.stack([_metrics.error_map(t, r) for t, r in zip(truth, recon)]))
    print(_sampler.format_table(rows))

    return EXIT_OK


###############################################################################
# Parser
###############################################################################


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=pathlib.Path, default=None, help="JSON run configuration")
    common.add_argument("--seed", type=int, default=None, help="override the configuration seed")
    common.add_argument("--threads", type=int, default=None, help="cap the worker threads")
    common.add_argument("--out", type=pathlib.Path, default=None, help="run directory")
    common.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    common.add_argument("--progress", action="store_true", help="show progress bars")

    parser = argparse.ArgumentParser(
        prog="smsdiff", description="Simultaneous multi-slice MRI reconstruction with k-space heat diffusion."
    )
    verbs = parser.add_subparsers(dest="verb", required=True)

    simulate = verbs.add_parser("simulate", parents=[common], help="simulate a phantom SMS acquisition")
    for name in ("ny", "nx", "nc", "mb", "accel"):
        simulate.add_argument(f"--{name}", type=int, default=None, help=f"override sim.{name}")
    simulate.set_defaults(handler=cmd_simulate)

    calibrate = verbs.add_parser("calibrate", parents=[common], help="fit Slice-GRAPPA kernels from the ACS")
    calibrate.set_defaults(handler=cmd_calibrate)

    train = verbs.add_parser("train", parents=[common], help="train the score network on phantom slices")
    train.set_defaults(handler=cmd_train)

    recon = verbs.add_parser("recon", parents=[common], help="reconstruct the SMS acquisition")
    recon.add_argument("--method", choices=METHODS, default="proposed")
    recon.set_defaults(handler=cmd_recon)

    evaluate = verbs.add_parser("eval", parents=[common], help="score a reconstruction against the truth")
    evaluate.add_argument("--method", choices=METHODS, default="proposed")
    evaluate.add_argument("--recon", default=None, help="array to score instead of the method's reconstruction")
    evaluate.set_defaults(handler=cmd_eval)

    return parser


def resolve_config(args: argparse.Namespace) -> tuple[RunConfig, pathlib.Path]:
    """
    Chooses the configuration (`--config`, else the run directory's `config.json`, else the defaults) and applies the
    command-line overrides.
    """
    if args.config is not None:
        config = load_config(args.config)
    elif args.out is not None and (args.out / "config.json").is_file():
        config = read_run_config(args.out)
    else:
        config = RunConfig()

    if args.seed is not None:
        config = override(config, seed=args.seed)
    if args.verb == "simulate":
        changes = {name: getattr(args, name) for name in ("ny", "nx", "nc", "mb", "accel")}
        changes = {name: value for name, value in changes.items() if value is not None}
        if changes:
            config = override(config, "sim", **changes)

    run = args.out if args.out is not None else pathlib.Path(config.out)
    return override(config, out=str(run)), run


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, force=True)

    try:
        if args.threads is not None and not args.threads >= 1:
            raise ConfigError(f"--threads must be at least 1, not {args.threads}")
        set_options(threads=args.threads, progress=args.progress)
        config, run = resolve_config(args)
        write_config(config, run)
        return args.handler(args, config, run)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG
    except ArrayFormatError as e:
        logger.error("Invalid input %s: %s", e.path, e.check)
        return EXIT_IO
    except OSError as e:
        logger.error("I/O error: %s", e)
        return EXIT_IO
    except json.JSONDecodeError as e:
        logger.error("Malformed JSON input: %s", e)
        return EXIT_IO
    except KeyError as e:
        logger.error("Missing field in an input file: %s", e)
        return EXIT_IO
    except ValueError as e:
        logger.error("Invalid parameters: %s", e)
        return EXIT_CONFIG
    except NumericalError as e:
        logger.error("Numerical failure%s: %s", "" if e.step is None else f" at step {e.step}", e)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
