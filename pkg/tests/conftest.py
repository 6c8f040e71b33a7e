"""
A pytest conftest module that provides simulated SMS scenes and the switch for the slow reproduction runs.
"""

import numba
import numpy
import pytest
import scipy
import torch

import smsdiff

print("\nTested versions:")
print(f"  smsdiff: {smsdiff.__version__}")
print(f"  numpy: {numpy.__version__}")
print(f"  numba: {numba.__version__}")
print(f"  scipy: {scipy.__version__}")
print(f"  torch: {torch.__version__}")
print()


def pytest_addoption(parser):
    parser.addoption("--run-slow", action="store_true", default=False, help="Run the slow reproduction tests.")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)


###############################################################################
# Helper functions
###############################################################################


def make_scene(ny, nx, nc, mb, accel, acs_lines, noise_sigma=0.0, seed=0):
    spec = smsdiff.AcquisitionSpec(mb=mb, accel=accel, acs_lines=acs_lines, noise_sigma=noise_sigma, seed=seed)
    truth, maps, sms, acs, mask = smsdiff.simulate_scene(ny, nx, nc, spec, seed=seed)
    return {"spec": spec, "truth": truth, "maps": maps, "sms": sms, "acs": acs, "mask": mask}


###############################################################################
# Fixtures for simulated acquisitions
###############################################################################


@pytest.fixture(scope="session")
def scene_mb3():
    """
    A noiseless 32x32, 4-coil, three-slice acquisition at R = 2 with 16 ACS lines.
    """
    return make_scene(32, 32, 4, mb=3, accel=2, acs_lines=16)


@pytest.fixture(scope="session")
def scene_mb1():
    """
    A noiseless 32x32, 4-coil, single-slice, fully sampled acquisition with 8 ACS lines.
    """
    return make_scene(32, 32, 4, mb=1, accel=1, acs_lines=8)


@pytest.fixture(scope="session")
def scene_mb3_full():
    """
    A noiseless 32x32, 8-coil, three-slice acquisition with every line acquired and used for calibration.
    """
    return make_scene(32, 32, 8, mb=3, accel=1, acs_lines=32)
