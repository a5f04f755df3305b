import tempfile
from pathlib import Path

import numpy as np

from denoiser.cubes import HsiCube


def fixture_cube(bands=4, height=32, width=32):
    """Smooth analytic cube in [0.1, 0.9]; identical bytes on every call."""
    y, x = np.meshgrid(np.arange(height) / height, np.arange(width) / width, indexing='ij')
    planes = [
        0.5
        + 0.25 * np.sin(2 * np.pi * (x + b / bands)) * np.cos(2 * np.pi * y)
        + 0.1 * np.cos(2 * np.pi * (2 * x + y) + b)
        for b in range(bands)
    ]
    return HsiCube(np.stack(planes).astype(np.float32), (400.0, 700.0))


def random_cube(seed, bands=4, height=8, width=8):
    rng = np.random.default_rng(seed)
    return HsiCube(rng.random((bands, height, width), dtype=np.float32))


class TempDirMixin:
    def make_tempdir(self):
        handle = tempfile.TemporaryDirectory()
        self.addCleanup(handle.cleanup)
        return Path(handle.name)


GOLDEN_DIR = Path(__file__).parent / 'golden'


def ramp_cube():
    """2x4x4 cube of k/32 steps, stored byte for byte in ``golden/ramp_cube.hdc``."""
    data = (np.arange(32, dtype=np.float32) / 32).reshape(2, 4, 4)
    return HsiCube(data, (400.0, 700.0))


def flat_pair():
    """Constant (denoised, reference) cubes; band 1 of the denoised cube sits at half the reference level."""
    reference = np.full((2, 16, 16), 0.5, dtype=np.float32)
    denoised = reference.copy()
    denoised[1] = 0.25
    return HsiCube(denoised), HsiCube(reference)
