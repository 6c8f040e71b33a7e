"""
A pytest module to test Slice-GRAPPA calibration, application and the L-factor.
"""

import numpy as np
import pytest

import smsdiff
from smsdiff._calib._grappa import taps_resolve_slices
from smsdiff._calib._matrix import calibration_targets


def grappa_matrix_oracle(src, kh, kw, dilation):
    nc, n_rows, n_cols = src.shape
    hy, hx = (kh // 2) * dilation, kw // 2
    rows = []
    for y in range(hy, n_rows - hy):
        for x in range(hx, n_cols - hx):
            row = []
            for c in range(nc):
                for m in range(kh):
                    for n in range(kw):
                        row.append(src[c, y + (m - kh // 2) * dilation, x + n - hx])
            rows.append(row)
    return np.array(rows)


@pytest.mark.parametrize("kh,kw,dilation", [(3, 3, 1), (3, 5, 2), (1, 3, 1), (5, 1, 1)])
def test_grappa_matrix_matches_oracle(acs_block, kh, kw, dilation):
    A = smsdiff.grappa_matrix(acs_block, kh, kw, dilation)
    assert np.array_equal(A, grappa_matrix_oracle(acs_block, kh, kw, dilation))


def test_grappa_matrix_exceptions(acs_block):
    with pytest.raises(ValueError):
        smsdiff.grappa_matrix(acs_block, 4, 3)
    with pytest.raises(ValueError):
        smsdiff.grappa_matrix(acs_block, 7, 3, dilation=2)
    with pytest.raises(ValueError):
        smsdiff.grappa_matrix(acs_block[0], 3, 3)


def test_calibrate_matches_normal_equations(scene_mb3):
    spec, acs = scene_mb3["spec"], scene_mb3["acs"]
    kh, kw, tikhonov = 3, 3, 1e-4
    kernels = smsdiff.calibrate_slice_grappa(acs, spec, kh, kw, tikhonov)
    assert kernels.weights.shape == (3, 4, 4, 3, 3)

    source = smsdiff.collapse_sms(acs, spec)
    A = grappa_matrix_oracle(source, kh, kw, 1)
    AhA = A.conj().T @ A
    lam = tikhonov * np.trace(AhA).real / AhA.shape[0]
    for s in range(3):
        target = smsdiff.caipi_shift(acs[s], s, spec)
        B = calibration_targets(target, kh, kw)
        W = np.linalg.solve(AhA + lam * np.eye(AhA.shape[0]), A.conj().T @ B)
        assert np.allclose(kernels.weights[s].reshape(4, -1), W.T, rtol=1e-6, atol=1e-8)


def test_single_slice_identity_kernel(scene_mb1):
    spec, acs, sms = scene_mb1["spec"], scene_mb1["acs"], scene_mb1["sms"]
    kernels = smsdiff.calibrate_slice_grappa(acs, spec, kh=1, kw=1, tikhonov=0)
    assert np.allclose(kernels.weights[0, :, :, 0, 0], np.eye(4), atol=1e-10)
    assert np.allclose(smsdiff.apply_slice_grappa(kernels, sms)[0], sms, atol=1e-10)


def test_application_agrees_with_calibration_matrix(scene_mb3_full):
    spec, acs = scene_mb3_full["spec"], scene_mb3_full["acs"]
    kernels = smsdiff.calibrate_slice_grappa(acs, spec, kh=5, kw=5)
    source = smsdiff.collapse_sms(acs, spec)
    separated = smsdiff.apply_slice_grappa(kernels, source)

    A = smsdiff.grappa_matrix(source, 5, 5)
    predicted = A @ kernels.weights.reshape(3 * 8, -1).T
    interior = separated[:, :, 2:30, 2:30].reshape(3 * 8, -1).T
    assert np.allclose(interior, predicted)
    assert 0 <= kernels.fit_residual < 1


def test_lfactor_is_diagonally_dominant(scene_mb3_full):
    spec, acs, maps, truth = (scene_mb3_full[key] for key in ("spec", "acs", "maps", "truth"))
    kernels = smsdiff.calibrate_slice_grappa(acs, spec, kh=5, kw=5)
    report = smsdiff.leakage_lfactor(kernels, maps, spec, truth)
    assert report.matrix.shape == (3, 3)
    assert report.is_diagonally_dominant()
    assert np.all(report.diagonal > 0.5)
    assert "slice" in str(report)


def test_kernel_geometry():
    spec = smsdiff.AcquisitionSpec(accel=3, acs_lines=32)
    assert smsdiff.kernel_geometry(spec, 5) == (5, 1)
    spec = smsdiff.AcquisitionSpec(accel=4, acs_lines=16)
    assert smsdiff.kernel_geometry(spec, 5) == (5, 1)
    assert smsdiff.kernel_geometry(spec, 5, pattern_aware=True) == (3, 4)
    spec = smsdiff.AcquisitionSpec(accel=2, acs_lines=0)
    assert smsdiff.kernel_geometry(spec, 5) == (1, 1)
    assert smsdiff.kernel_geometry(spec, 5, pattern_aware=True) == (1, 2)


def test_kernel_geometry_unresolvable_taps():
    # Taps three rows apart see the 1/3 FOV ramps of all three slices in phase
    spec = smsdiff.AcquisitionSpec(mb=3, caipi_fraction="1/3", accel=3, acs_lines=32)
    assert not taps_resolve_slices(spec, 3)
    assert taps_resolve_slices(spec, 1)
    with pytest.raises(ValueError):
        smsdiff.kernel_geometry(spec, 5, pattern_aware=True)

    spec = smsdiff.AcquisitionSpec(mb=2, caipi_fraction="1/2", accel=4, acs_lines=32)
    with pytest.raises(ValueError):
        smsdiff.kernel_geometry(spec, 5, pattern_aware=True)
    spec = smsdiff.AcquisitionSpec(mb=2, caipi_fraction="1/2", accel=3, acs_lines=32)
    assert smsdiff.kernel_geometry(spec, 5, pattern_aware=True) == (5, 3)


def test_calibrate_exceptions(scene_mb3):
    spec, acs = scene_mb3["spec"], scene_mb3["acs"]
    with pytest.raises(ValueError):
        smsdiff.calibrate_slice_grappa(acs[:2], spec)
    with pytest.raises(ValueError):
        smsdiff.calibrate_slice_grappa(acs, spec, kh=4)
    with pytest.raises(ValueError):
        smsdiff.calibrate_slice_grappa(acs, spec, tikhonov=-1)
    with pytest.raises(ValueError):
        smsdiff.calibrate_slice_grappa(acs[:, :, :2], spec, kh=3)


def test_slice_grappa_kernels_exceptions():
    with pytest.raises(ValueError):
        smsdiff.SliceGrappaKernels(np.zeros((2, 3, 4, 1, 1)))
    with pytest.raises(ValueError):
        smsdiff.SliceGrappaKernels(np.full((2, 3, 3, 1, 1), np.nan))
    with pytest.raises(ValueError):
        smsdiff.SliceGrappaKernels(np.zeros((2, 3, 3, 2, 1)))


def test_apply_exceptions(scene_mb3):
    kernels = smsdiff.calibrate_slice_grappa(scene_mb3["acs"], scene_mb3["spec"], kh=3, kw=3)
    with pytest.raises(ValueError):
        smsdiff.apply_slice_grappa(kernels, np.zeros((3, 32, 32)))
