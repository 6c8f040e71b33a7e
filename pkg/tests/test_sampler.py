"""
A pytest module to test the SMS sampler: initialization, data consistency, the slice chains and the report.
"""

import numpy as np
import pytest

import smsdiff


def make_problem(scene, n_steps=5, kh=None, kw=5, tikhonov=1e-4, model=None, with_acs=True):
    spec, maps = scene["spec"], scene["maps"]
    ny, nx = scene["truth"].shape[-2:]
    if kh is None:
        kh, dilation = smsdiff.kernel_geometry(spec, 5)
    else:
        dilation = 1
    kernels = smsdiff.calibrate_slice_grappa(scene["acs"], spec, kh, kw, dilation=dilation, tikhonov=tikhonov)
    schedule = smsdiff.make_schedule(ny, nx, n_steps=n_steps)
    if model is None:
        model = smsdiff.analytic_gaussian_score(np.zeros(scene["sms"].shape), 1.0, schedule)
    acs = scene["acs"] if with_acs else None
    return smsdiff.SmsProblem(scene["sms"], scene["mask"], kernels, maps, spec, schedule, model, acs)


def test_problem_exceptions(scene_mb3):
    problem = make_problem(scene_mb3)
    args = [scene_mb3["sms"], scene_mb3["mask"], problem.kernels, scene_mb3["maps"], scene_mb3["spec"]]
    rest = [problem.schedule, problem.score_model]

    bad = scene_mb3["sms"].copy()
    bad[:, 1, :] = 1
    with pytest.raises(ValueError):
        smsdiff.SmsProblem(bad, *args[1:], *rest)
    with pytest.raises(ValueError):
        smsdiff.SmsProblem(scene_mb3["sms"][:2], *args[1:], *rest)
    with pytest.raises(ValueError):
        smsdiff.SmsProblem(*args[:3], scene_mb3["maps"][:2], args[4], *rest)
    with pytest.raises(ValueError):
        smsdiff.SmsProblem(*args, smsdiff.make_schedule(16, 16), rest[1])
    with pytest.raises(TypeError):
        smsdiff.SmsProblem(*args, rest[0], None)


def test_frame_maps(scene_mb3):
    problem = make_problem(scene_mb3)
    assert len(problem.frame_maps) == 3
    assert np.array_equal(problem.frame_maps[0].maps, scene_mb3["maps"][0].maps)
    for s in (1, 2):
        expected = scene_mb3["maps"][s].shifted(s, scene_mb3["spec"])
        assert np.array_equal(problem.frame_maps[s].maps, expected.maps)


def test_frame_maps_integer_shift():
    spec = smsdiff.AcquisitionSpec(mb=3, accel=2, acs_lines=12)
    truth, maps, sms, acs, mask = smsdiff.simulate_scene(24, 24, 2, spec)
    scene = {"spec": spec, "truth": truth, "maps": maps, "sms": sms, "acs": acs, "mask": mask}
    problem = make_problem(scene)
    assert np.array_equal(problem.frame_maps[1].maps, np.roll(maps[1].maps, 8, axis=-2))
    assert np.array_equal(problem.frame_maps[2].maps, np.roll(maps[2].maps, 16, axis=-2))


def test_hard_consistency_matches_measurements(scene_mb3):
    problem = make_problem(scene_mb3)
    rng = np.random.default_rng(0)
    z0 = rng.standard_normal((3, *scene_mb3["sms"].shape)) + 0j
    separated, dc = smsdiff.data_consistency_sms(z0, problem, return_sms=True)
    pattern = scene_mb3["mask"].pattern
    assert separated.shape == z0.shape
    assert np.array_equal(dc[:, pattern], scene_mb3["sms"][:, pattern])
    assert np.array_equal(dc[:, ~pattern], smsdiff.collapse_sms(z0, scene_mb3["spec"], shifted=True)[:, ~pattern])


def test_consistency_of_zero_estimate_is_slice_grappa(scene_mb3):
    problem = make_problem(scene_mb3)
    z0 = np.zeros((3, *scene_mb3["sms"].shape), dtype=complex)
    separated = smsdiff.data_consistency_sms(z0, problem)
    assert np.array_equal(separated, smsdiff.apply_slice_grappa(problem.kernels, scene_mb3["sms"]))


def test_consistency_uniform_lines_only(scene_mb3):
    problem = make_problem(scene_mb3)
    z0 = np.zeros((3, *scene_mb3["sms"].shape), dtype=complex)
    _, dc = smsdiff.data_consistency_sms(z0, problem, return_sms=True, include_acs=False)
    uniform = scene_mb3["mask"].uniform_only().pattern
    assert np.array_equal(dc[:, uniform], scene_mb3["sms"][:, uniform])
    assert np.all(dc[:, ~uniform] == 0)


def test_consistency_exceptions(scene_mb3):
    problem = make_problem(scene_mb3)
    z0 = np.zeros((3, *scene_mb3["sms"].shape), dtype=complex)
    with pytest.raises(ValueError):
        smsdiff.data_consistency_sms(z0[:2], problem)
    with pytest.raises(ValueError):
        smsdiff.data_consistency_sms(z0, problem, dc_weight=1.5)
    with pytest.raises(TypeError):
        smsdiff.data_consistency_sms(z0, problem, include_acs=1)


def test_initialize_fully_sampled_is_slice_grappa(scene_mb3_full):
    problem = make_problem(scene_mb3_full)
    init = smsdiff.initialize(problem)
    assert np.array_equal(init, smsdiff.apply_slice_grappa(problem.kernels, scene_mb3_full["sms"]))


def test_initialize_keeps_uniform_lines(scene_mb3):
    problem = make_problem(scene_mb3)
    init = smsdiff.initialize(problem)
    separated = smsdiff.apply_slice_grappa(problem.kernels, scene_mb3["sms"])
    uniform = scene_mb3["mask"].uniform_only().pattern
    assert np.array_equal(init[:, :, uniform], separated[:, :, uniform])


def test_initialize_without_acs(scene_mb3):
    problem = make_problem(scene_mb3, with_acs=False)
    assert np.array_equal(smsdiff.initialize(problem), smsdiff.apply_slice_grappa(problem.kernels, scene_mb3["sms"]))


def test_initialize_single_slice(scene_mb1):
    problem = make_problem(scene_mb1, kh=1, kw=1, tikhonov=0)
    images = smsdiff.finalize_slices(smsdiff.initialize(problem), problem)
    assert smsdiff.nmse(scene_mb1["truth"][0], images[0]) < 1e-6


def test_initialize_keeps_acs_lines(scene_mb3):
    problem = make_problem(scene_mb3)
    init = smsdiff.initialize(problem)
    mask, spec = scene_mb3["mask"], scene_mb3["spec"]
    rows = slice(mask.acs_start, mask.acs_start + spec.acs_lines)
    uniform = mask.uniform_only().pattern
    acs_only = ~uniform[rows]
    assert np.any(acs_only)
    for s in range(3):
        acs = smsdiff.caipi_shift(scene_mb3["acs"][s], s, spec)
        assert np.array_equal(init[s][:, rows][:, acs_only], acs[:, acs_only])


def test_initialize_improves_on_slice_grappa():
    spec = smsdiff.AcquisitionSpec(mb=3, accel=4, acs_lines=32)
    truth, maps, sms, acs, mask = smsdiff.simulate_scene(64, 64, 8, spec)
    scene = {"spec": spec, "truth": truth, "maps": maps, "sms": sms, "acs": acs, "mask": mask}
    problem = make_problem(scene)
    init = smsdiff.initialize(problem)
    separated = smsdiff.apply_slice_grappa(problem.kernels, scene["sms"])
    for s in range(3):
        target = smsdiff.caipi_shift(smsdiff.fft2c(maps[s].expand(truth[s])), s, spec)
        baseline = scene["mask"].apply(separated[s])
        err_init = np.linalg.norm(init[s] - target) ** 2 / np.linalg.norm(target) ** 2
        err_baseline = np.linalg.norm(baseline - target) ** 2 / np.linalg.norm(target) ** 2
        assert err_init < err_baseline


def test_finalize_slices(scene_mb3):
    problem = make_problem(scene_mb3)
    spec, truth, maps = scene_mb3["spec"], scene_mb3["truth"], scene_mb3["maps"]
    z = np.stack([smsdiff.caipi_shift(smsdiff.fft2c(maps[s].expand(truth[s])), s, spec) for s in range(3)])
    assert np.allclose(smsdiff.finalize_slices(z, problem), truth)


def test_reconstruct_single_slice_sanity(scene_mb1):
    truth, maps = scene_mb1["truth"], scene_mb1["maps"]
    schedule = smsdiff.make_schedule(32, 32, n_steps=20, sigma_min=1e-3)
    prior = smsdiff.fft2c(maps[0].expand(truth[0]))
    model = smsdiff.analytic_gaussian_score(prior, 1e-6, schedule)
    kernels = smsdiff.calibrate_slice_grappa(scene_mb1["acs"], scene_mb1["spec"], 1, 1, tikhonov=0)
    problem = smsdiff.SmsProblem(
        scene_mb1["sms"], scene_mb1["mask"], kernels, maps, scene_mb1["spec"], schedule, model, scene_mb1["acs"]
    )
    recon = smsdiff.sms_reconstruct(problem, seed=0)
    assert recon.shape == (1, 32, 32)
    assert smsdiff.nmse(truth, recon) < 1e-3


def test_reconstruct_is_deterministic(scene_mb3):
    problem = make_problem(scene_mb3)
    a = smsdiff.sms_reconstruct(problem, seed=4)
    b = smsdiff.sms_reconstruct(problem, seed=4)
    c = smsdiff.sms_reconstruct(problem, seed=5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_independent_chains_match_reverse_diffusion(scene_mb3):
    problem = make_problem(scene_mb3)
    z_init = smsdiff.initialize(problem)
    z = smsdiff.sample_slices(problem, seed=3, consistency=False, z_init=z_init)
    for s in range(3):
        chain = smsdiff.reverse_diffusion(
            z_init[s], problem.schedule, problem.score_model, problem.frame_maps[s], seed=(3, s)
        )
        assert np.array_equal(z[s], chain)


def test_run_log(scene_mb3):
    problem = make_problem(scene_mb3, n_steps=4)
    log = smsdiff.RunLog(config_hash="abc")
    smsdiff.sample_slices(problem, seed=2, run_log=log)
    assert log.seeds == [[2, 0], [2, 1], [2, 2]]
    assert [item["step"] for item in log.steps] == [3, 2, 1, 0]
    assert all(item["dc_residual"] >= 0 for item in log.steps)
    assert log.total_seconds > 0
    assert '"config_hash": "abc"' in log.to_json()

    log = smsdiff.RunLog()
    smsdiff.sample_slices(problem, seed=2, consistency=False, run_log=log)
    assert all(item["dc_residual"] is None for item in log.steps)


def test_sample_exceptions(scene_mb3):
    problem = make_problem(scene_mb3)
    with pytest.raises(ValueError):
        smsdiff.sample_slices(problem, n_corrector=-1)
    with pytest.raises(ValueError):
        smsdiff.sample_slices(problem, dc_weight=-0.1)
    with pytest.raises(ValueError):
        smsdiff.sample_slices(problem, z_init=np.zeros((2, 4, 32, 32)))
    with pytest.raises(TypeError):
        smsdiff.sample_slices(problem, consistency="yes")


def test_recon_report(scene_mb3):
    truth = scene_mb3["truth"]
    rows = smsdiff.recon_report(truth, truth, method="truth")
    assert len(rows) == 4
    assert rows[-1].slice == "mean"
    for row in rows:
        assert row.nmse == 0
        assert row.psnr == np.inf
        assert row.ssim == pytest.approx(1)

    table = smsdiff.format_table(rows)
    lines = table.splitlines()
    assert len(lines) == 5
    assert "NMSE" in lines[0] and "PSNR (dB)" in lines[0]
    assert lines[-1].split()[:2] == ["truth", "mean"]


def test_recon_report_exceptions(scene_mb3):
    truth = scene_mb3["truth"]
    with pytest.raises(ValueError):
        smsdiff.recon_report(truth, truth[:2])
    with pytest.raises(ValueError):
        smsdiff.recon_report(truth[0], truth[0])
