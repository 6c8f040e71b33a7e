"""
A pytest module to test SPIRiT kernel calibration.
"""

import numpy as np
import pytest

import smsdiff
from smsdiff._calib._matrix import calibration_targets


def test_self_tap_is_zero(acs_block):
    kernel = smsdiff.calibrate_spirit(acs_block, 3, 5)
    assert kernel.weights.shape == (4, 4, 3, 5)
    for c in range(4):
        assert kernel.weights[c, c, 1, 2] == 0


def test_calibrate_matches_normal_equations(acs_block):
    kh, kw, tikhonov = 3, 3, 1e-3
    kernel = smsdiff.calibrate_spirit(acs_block, kh, kw, tikhonov)
    A = smsdiff.grappa_matrix(acs_block, kh, kw)
    B = calibration_targets(acs_block, kh, kw)
    for c in range(4):
        self_tap = c * kh * kw + 4
        A_c = np.delete(A, self_tap, axis=1)
        AhA = A_c.conj().T @ A_c
        lam = tikhonov * np.trace(AhA).real / AhA.shape[0]
        w = np.linalg.solve(AhA + lam * np.eye(AhA.shape[0]), A_c.conj().T @ B[:, c])
        assert np.allclose(np.delete(kernel.weights[c].ravel(), self_tap), w, rtol=1e-6, atol=1e-8)


def test_kernel_predicts_calibration_data(acs_block):
    kernel = smsdiff.calibrate_spirit(acs_block, 5, 5)
    assert kernel.fit_residual < 0.1
    assert kernel.tikhonov == 1e-6


def test_calibrate_exceptions(acs_block):
    with pytest.raises(ValueError):
        smsdiff.calibrate_spirit(acs_block, 2, 3)
    with pytest.raises(ValueError):
        smsdiff.calibrate_spirit(acs_block, 3, 3, tikhonov=-1)
    with pytest.raises(ValueError):
        smsdiff.calibrate_spirit(acs_block[0], 3, 3)
    with pytest.raises(ValueError):
        smsdiff.SpiritKernel(np.zeros((2, 3, 3, 3)))
