"""
A pytest module to benchmark the SMS calibration, separation and sampling stages.
"""

import numpy as np
import pytest

import smsdiff
from smsdiff._kernels import correlate


class Base:
    # Placeholder variables
    ny, nx, nc, mb, accel, acs_lines = 64, 64, 8, 3, 3, 24
    n_steps = 10

    def setup_method(self):
        self.spec = smsdiff.AcquisitionSpec(mb=self.mb, accel=self.accel, acs_lines=self.acs_lines)
        self.truth, self.maps, self.sms, self.acs, self.mask = smsdiff.simulate_scene(self.ny, self.nx, self.nc, self.spec)
        kh, self.dilation = smsdiff.kernel_geometry(self.spec, 5)
        self.kh = kh
        self.kernels = smsdiff.calibrate_slice_grappa(self.acs, self.spec, kh, 5, dilation=self.dilation)
        self.schedule = smsdiff.make_schedule(self.ny, self.nx, n_steps=self.n_steps)
        model = smsdiff.analytic_gaussian_score(np.zeros(self.sms.shape), 1.0, self.schedule)
        self.problem = smsdiff.SmsProblem(
            self.sms, self.mask, self.kernels, self.maps, self.spec, self.schedule, model, self.acs
        )
        self.z0 = smsdiff.apply_slice_grappa(self.kernels, self.sms)

    def test_fft2c(self, benchmark):
        benchmark(smsdiff.fft2c, self.sms)

    def test_calibrate_slice_grappa(self, benchmark):
        benchmark(smsdiff.calibrate_slice_grappa, self.acs, self.spec, self.kh, 5, dilation=self.dilation)

    def test_apply_slice_grappa(self, benchmark):
        benchmark(smsdiff.apply_slice_grappa, self.kernels, self.sms)

    def test_sg_sense_pipeline(self, benchmark):
        benchmark(smsdiff.sg_sense_pipeline, self.sms, self.kernels, self.maps, self.mask, self.spec)

    def test_data_consistency_sms(self, benchmark):
        benchmark(smsdiff.data_consistency_sms, self.z0, self.problem)

    def test_sms_reconstruct(self, benchmark):
        benchmark.pedantic(smsdiff.sms_reconstruct, args=(self.problem,), kwargs={"z_init": self.z0}, rounds=3)


@pytest.mark.benchmark(group="SMS mb=3 R=3: 64x64, nc=8")
class TestSmall(Base):
    ny, nx, nc, mb, accel, acs_lines = 64, 64, 8, 3, 3, 24


@pytest.mark.benchmark(group="SMS mb=3 R=4: 128x128, nc=8")
class TestLarge(Base):
    ny, nx, nc, mb, accel, acs_lines = 128, 128, 8, 3, 4, 32


@pytest.mark.benchmark(group="SPIRiT: 64x64, nc=8, R=2")
class TestSpirit:
    def setup_method(self):
        image = smsdiff.make_phantom(64, 64)[0]
        maps = smsdiff.simulate_coils(64, 64, 8)
        self.ksp = smsdiff.fft2c(maps.expand(image))
        self.mask = smsdiff.make_uniform_mask(64, 2, 24)
        self.kernel = smsdiff.calibrate_spirit(self.ksp[:, 20:44], 5, 5)
        self.measured = self.mask.apply(self.ksp)

    def test_calibrate_spirit(self, benchmark):
        benchmark(smsdiff.calibrate_spirit, self.ksp[:, 20:44], 5, 5)

    def test_spirit_recon(self, benchmark):
        benchmark(smsdiff.spirit_recon, self.measured, self.kernel, self.mask, iters=50)


@pytest.mark.benchmark(group="Correlate: 4 coils, 32x32, 3x3 taps")
class TestCorrelate:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.x = rng.standard_normal((4, 32, 32)) + 1j * rng.standard_normal((4, 32, 32))
        self.weights = rng.standard_normal((4, 4, 3, 3)) + 1j * rng.standard_normal((4, 4, 3, 3))

    @pytest.mark.parametrize("mode", ["jit", "python"])
    def test_correlate(self, benchmark, mode):
        with smsdiff.options(compile=mode):
            benchmark(correlate, self.x, self.weights, 2)
