"""
A pytest conftest module that provides calibration blocks.
"""

import numpy as np
import pytest

import smsdiff


@pytest.fixture(scope="session")
def acs_block():
    """
    The fully sampled central 12 lines of one 4-coil, 24x24 slice.
    """
    image = smsdiff.make_phantom(24, 24, seed=3)[0]
    maps = smsdiff.simulate_coils(24, 24, 4, seed=3)
    ksp = smsdiff.fft2c(maps.expand(image))
    return np.ascontiguousarray(ksp[:, 6:18, :])
