"""
A pytest module to test the circular multi-coil k-space correlation kernel.
"""

import numpy as np
import pytest

import smsdiff
from smsdiff._kernels import correlate


def correlate_oracle(src, weights, dilation):
    nc, ny, nx = src.shape
    n_out, _, kh, kw = weights.shape
    out = np.zeros((n_out, ny, nx), dtype=complex)
    for o in range(n_out):
        for c in range(nc):
            for m in range(kh):
                for n in range(kw):
                    shifted = np.roll(src[c], (-(m - kh // 2) * dilation, -(n - kw // 2)), axis=(0, 1))
                    out[o] += weights[o, c, m, n] * shifted
    return out


@pytest.mark.parametrize("dilation", [1, 2, 3])
def test_correlate_matches_oracle(dilation):
    rng = np.random.default_rng(dilation)
    src = rng.standard_normal((2, 10, 6)) + 1j * rng.standard_normal((2, 10, 6))
    weights = rng.standard_normal((3, 2, 3, 5)) + 1j * rng.standard_normal((3, 2, 3, 5))
    assert np.allclose(correlate(src, weights, dilation), correlate_oracle(src, weights, dilation))


def test_correlate_identity():
    rng = np.random.default_rng(1)
    src = rng.standard_normal((2, 5, 5)) + 0j
    weights = np.zeros((2, 2, 1, 1), dtype=complex)
    weights[0, 0] = weights[1, 1] = 1
    assert np.allclose(correlate(src, weights), src)


def test_correlate_wraps_edges():
    src = np.arange(8, dtype=complex).reshape(1, 8, 1)
    weights = np.zeros((1, 1, 3, 1), dtype=complex)
    weights[0, 0, 2, 0] = 1
    assert np.allclose(correlate(src, weights, 1), np.roll(src, -1, axis=-2))
    assert np.allclose(correlate(src, weights, 2), np.roll(src, -2, axis=-2))


def test_correlate_exceptions():
    with pytest.raises(ValueError):
        correlate(np.zeros((2, 4, 4)), np.zeros((1, 3, 1, 1)))
    with pytest.raises(ValueError):
        correlate(np.zeros((2, 4, 4)), np.zeros((1, 2, 1, 1)), 0)
    with pytest.raises(ValueError):
        correlate(np.zeros((4, 4)), np.zeros((1, 1, 1, 1)))


@pytest.mark.parametrize("mode", ["jit", "python"])
def test_correlate_read_only_inputs(mode):
    rng = np.random.default_rng(2)
    src = rng.standard_normal((2, 8, 6)) + 1j * rng.standard_normal((2, 8, 6))
    weights = rng.standard_normal((2, 2, 3, 3)) + 1j * rng.standard_normal((2, 2, 3, 3))
    src.setflags(write=False)
    weights.setflags(write=False)
    with smsdiff.options(compile=mode):
        y = correlate(src, weights, 2)
    assert np.allclose(y, correlate_oracle(src, weights, 2))
    assert not weights.flags.writeable


@pytest.mark.parametrize("mode", ["jit", "python"])
def test_apply_frozen_kernels(scene_mb3, mode):
    kernels = smsdiff.calibrate_slice_grappa(scene_mb3["acs"], scene_mb3["spec"], kh=3, kw=3)
    assert not kernels.weights.flags.writeable
    with smsdiff.options(compile=mode):
        separated = smsdiff.apply_slice_grappa(kernels, scene_mb3["sms"])
    assert separated.shape == (3, 4, 32, 32)
    assert np.all(np.isfinite(separated))
