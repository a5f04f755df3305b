import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings as hypothesis_settings, strategies as st

from denoiser.choices import BandArtifact, NoisePattern
from denoiser.cubes import HsiCube
from denoiser.exceptions import ConfigError, ShapeError
from denoiser.noise_lab import (
    AUGMENTATIONS, MIXTURE_ARTIFACTS, NoisePlan, NoiseSpec, apply_noise, augment, crop_and_augment, plan_noise,
)

from .fixtures import fixture_cube, random_cube


def flat_cube(bands, height, width, value=0.5):
    return HsiCube(np.full((bands, height, width), value, dtype=np.float32))


class NoiseSpecTest(SimpleTestCase):
    def test_defaults(self):
        spec = NoiseSpec()
        self.assertEqual(spec.pattern, NoisePattern.NONIID_GAUSSIAN)
        self.assertAlmostEqual(spec.affected_band_fraction, 1 / 3)
        self.assertEqual(spec.stripe_offset, 0.25)

    def test_inverted_range_is_rejected(self):
        with self.assertRaises(ConfigError) as ctx:
            NoiseSpec(sigma_range=(0.3, 0.1))
        self.assertIn('sigma_range', ctx.exception.errors)

    def test_fractions_must_be_at_most_one(self):
        for changes in ({'affected_band_fraction': 1.5}, {'impulse_ratio_range': (0.5, 1.2)}):
            with self.subTest(changes=changes), self.assertRaises(ConfigError):
                NoiseSpec(**changes)

    def test_unknown_pattern(self):
        with self.assertRaises(ConfigError):
            NoiseSpec(pattern='speckle')

    def test_zero_detection(self):
        self.assertTrue(NoiseSpec(sigma_range=(0, 0)).is_zero)
        self.assertFalse(NoiseSpec(pattern=NoisePattern.GAUSSIAN_DEADLINE, sigma_range=(0, 0)).is_zero)
        self.assertTrue(
            NoiseSpec(pattern=NoisePattern.GAUSSIAN_STRIPE, sigma_range=(0, 0), stripe_offset=0).is_zero
        )

    def test_dict_roundtrip(self):
        spec = NoiseSpec(pattern=NoisePattern.MIXTURE, seed=11)
        self.assertEqual(NoiseSpec.from_dict(spec.to_dict()), spec)


class PlanNoiseTest(SimpleTestCase):
    def test_noniid_affects_no_band(self):
        plan = plan_noise(31, NoiseSpec(seed=3))
        self.assertEqual(plan.affected_bands, [])
        for band in plan.bands:
            self.assertTrue(10 / 255 <= band.sigma <= 70 / 255)

    def test_mixture_assigns_sub_patterns(self):
        plan = plan_noise(9, NoiseSpec(pattern=NoisePattern.MIXTURE, seed=4))
        self.assertEqual(len(plan.affected_bands), 3)
        for band in plan.bands:
            if band.band in plan.affected_bands:
                self.assertIn(band.artifact, MIXTURE_ARTIFACTS)

    def test_plan_dict_roundtrip(self):
        plan = plan_noise(6, NoiseSpec(pattern=NoisePattern.MIXTURE, seed=5))
        self.assertEqual(NoisePlan.from_dict(plan.to_dict()), plan)

    def test_plan_must_cover_every_band(self):
        plan = plan_noise(3, NoiseSpec())
        with self.assertRaises(ShapeError):
            apply_noise(random_cube(0, bands=4), NoiseSpec(), plan)


class ApplyNoiseTest(SimpleTestCase):
    def test_zero_spec_is_identity_and_warns(self):
        cube = random_cube(1)
        with self.assertLogs('denoiser.noise_lab', 'WARNING'):
            noisy = apply_noise(cube, NoiseSpec(sigma_range=(0, 0)))
        np.testing.assert_array_equal(noisy.data, cube.data)

    def test_full_deadline_zeroes_every_column(self):
        spec = NoiseSpec(
            pattern=NoisePattern.GAUSSIAN_DEADLINE, affected_band_fraction=1.0, column_fraction_range=(1.0, 1.0),
        )
        noisy = apply_noise(random_cube(2, bands=3, height=8, width=10), spec)
        self.assertFalse(np.any(noisy.data))

    def test_deadline_columns_are_exactly_zero(self):
        spec = NoiseSpec(
            pattern=NoisePattern.GAUSSIAN_DEADLINE, affected_band_fraction=1.0,
            column_fraction_range=(0.25, 0.25), seed=8,
        )
        noisy = apply_noise(flat_cube(2, 8, 16), spec).data
        for band in noisy:
            dead = np.all(band == 0.0, axis=0)
            self.assertEqual(int(dead.sum()), 4)

    def test_impulses_are_salt_and_pepper(self):
        spec = NoiseSpec(
            pattern=NoisePattern.GAUSSIAN_IMPULSE, sigma_range=(0, 0), affected_band_fraction=1.0,
            impulse_ratio_range=(0.3, 0.3), seed=9,
        )
        noisy = apply_noise(flat_cube(3, 32, 32), spec).data
        for band in noisy:
            hit = band != np.float32(0.5)
            self.assertTrue(np.all(np.isin(band[hit], [0.0, 1.0])))
            self.assertAlmostEqual(hit.mean(), 0.3, delta=0.03)

    def test_stripes_shift_whole_columns(self):
        spec = NoiseSpec(
            pattern=NoisePattern.GAUSSIAN_STRIPE, sigma_range=(0, 0), affected_band_fraction=1.0,
            column_fraction_range=(0.25, 0.25), seed=10,
        )
        cube = flat_cube(2, 8, 16)
        diff = apply_noise(cube, spec).data.astype(np.float64) - cube.data
        for band in diff:
            shifted = np.any(band != 0.0, axis=0)
            self.assertEqual(int(shifted.sum()), 4)
            np.testing.assert_array_equal(band, np.broadcast_to(band[0], band.shape))
            self.assertLessEqual(np.max(np.abs(band)), 0.25 + 1e-6)

    def test_band_sigma_matches_plan(self):
        spec = NoiseSpec(seed=12)
        cube = flat_cube(31, 64, 64)
        plan = plan_noise(cube.bands, spec)
        noise = apply_noise(cube, spec).data.astype(np.float64) - 0.5
        for band in plan.bands:
            with self.subTest(band=band.band):
                self.assertAlmostEqual(noise[band.band].std() / band.sigma, 1.0, delta=0.05)

    def test_bands_are_uncorrelated(self):
        cube = flat_cube(31, 64, 64)
        noise = (apply_noise(cube, NoiseSpec(seed=13)).data.astype(np.float64) - 0.5).reshape(31, -1)
        correlation = np.corrcoef(noise)
        off_diagonal = np.abs(correlation[~np.eye(31, dtype=bool)])
        self.assertLessEqual(off_diagonal.mean(), 0.05)
        self.assertLessEqual(off_diagonal.max(), 0.1)

    def test_same_seed_same_noise(self):
        cube = fixture_cube()
        spec = NoiseSpec(pattern=NoisePattern.MIXTURE, seed=14)
        np.testing.assert_array_equal(apply_noise(cube, spec).data, apply_noise(cube, spec).data)
        other = apply_noise(cube, spec.replace(seed=15)).data
        self.assertFalse(np.array_equal(apply_noise(cube, spec).data, other))

    def test_keeps_wavelength_metadata(self):
        cube = fixture_cube()
        self.assertEqual(apply_noise(cube, NoiseSpec()).wavelength_nm, (400.0, 700.0))

    def test_unaffected_bands_get_only_gaussian_noise(self):
        spec = NoiseSpec(pattern=NoisePattern.GAUSSIAN_IMPULSE, sigma_range=(0, 0), seed=16)
        cube = flat_cube(6, 16, 16)
        plan = plan_noise(6, spec)
        noisy = apply_noise(cube, spec, plan).data
        for band in plan.bands:
            if band.artifact == BandArtifact.NONE:
                np.testing.assert_array_equal(noisy[band.band], cube.data[band.band])


class PatchTest(SimpleTestCase):
    def test_single_patch_covers_cube(self):
        patches = crop_and_augment(random_cube(0, height=8, width=8), 8, 8)
        self.assertEqual(len(patches), 1)
        self.assertEqual((patches[0].y, patches[0].x), (0, 0))

    def test_overlapping_grid(self):
        cube = random_cube(1, height=16, width=16)
        patches = crop_and_augment(cube, 8, 4)
        self.assertEqual(len(patches), 9)
        self.assertEqual({(d.y, d.x) for d in patches}, {(y, x) for y in (0, 4, 8) for x in (0, 4, 8)})

    def test_without_augmentation_patches_are_plain_crops(self):
        cube = random_cube(2, height=16, width=16)
        patches = crop_and_augment(cube, 8, 4, augment=False)
        for descriptor in patches:
            self.assertEqual(descriptor.augmentation, 'identity')
            np.testing.assert_array_equal(
                patches.extract(cube.data, descriptor),
                cube.data[:, descriptor.y:descriptor.y + 8, descriptor.x:descriptor.x + 8],
            )

    def test_augmentation_tags_are_seeded(self):
        cube = random_cube(3, height=32, width=32)
        first = [d.augmentation for d in crop_and_augment(cube, 8, 4, augment=True, seed=5)]
        second = [d.augmentation for d in crop_and_augment(cube, 8, 4, augment=True, seed=5)]
        self.assertEqual(first, second)
        self.assertTrue(set(first) <= set(AUGMENTATIONS))
        self.assertGreater(len(set(first)), 1)

    def test_augment_matches_numpy(self):
        window = np.arange(2 * 3 * 3.0).reshape(2, 3, 3)
        np.testing.assert_array_equal(augment(window, 'rot90'), np.rot90(window, 1, axes=(1, 2)))
        np.testing.assert_array_equal(augment(window, 'flip_h'), window[:, :, ::-1])
        with self.assertRaises(ValueError):
            augment(window, 'shear')

    def test_patch_larger_than_cube(self):
        with self.assertRaises(ShapeError):
            crop_and_augment(random_cube(4, height=8, width=8), 16, 4)

    def test_extract_checks_source_shape(self):
        patches = crop_and_augment(random_cube(5, height=8, width=8), 4, 4)
        with self.assertRaises(ShapeError):
            patches.extract(np.zeros((4, 8, 9)), patches[0])

    @hypothesis_settings(max_examples=30, deadline=None)
    @given(st.integers(4, 24), st.integers(4, 24), st.integers(1, 4), st.integers(1, 6))
    def test_descriptors_stay_inside_cube(self, height, width, patch_size, stride):
        cube = HsiCube(np.zeros((2, height, width), dtype=np.float32))
        for descriptor in crop_and_augment(cube, patch_size, stride):
            self.assertLessEqual(descriptor.y + patch_size, height)
            self.assertLessEqual(descriptor.x + patch_size, width)

    @hypothesis_settings(max_examples=30, deadline=None)
    @given(st.integers(8, 24), st.integers(8, 24), st.integers(2, 6), st.sampled_from([0.5, 0.75, 1.0]))
    def test_rescaled_windows_stay_inside_cube(self, height, width, patch_size, scale):
        cube = HsiCube(np.zeros((2, height, width), dtype=np.float32))
        for descriptor in crop_and_augment(cube, patch_size, 2, scales=(1.0, scale)):
            self.assertLessEqual(descriptor.y + descriptor.extent, height)
            self.assertLessEqual(descriptor.x + descriptor.extent, width)


class MultiRatioCropTest(SimpleTestCase):
    def test_each_ratio_tiles_its_own_window(self):
        patches = crop_and_augment(random_cube(6, height=16, width=16), 8, 8, scales=(1.0, 0.5))
        full = [d for d in patches if d.scale == 1.0]
        half = [d for d in patches if d.scale == 0.5]
        self.assertEqual(len(full), 4)
        self.assertEqual(len(half), 1)
        self.assertEqual((half[0].y, half[0].x, half[0].extent, half[0].size), (0, 0, 16, 8))

    def test_rescaled_patch_has_patch_size(self):
        cube = flat_cube(3, 16, 16, value=0.25)
        patches = crop_and_augment(cube, 8, 8, scales=(0.5,))
        window = patches.extract(cube.data, patches[0])
        self.assertEqual(window.shape, (3, 8, 8))
        self.assertEqual(window.dtype, np.float32)
        np.testing.assert_allclose(window, 0.25, atol=1e-6)

    def test_ratio_that_does_not_fit_is_skipped(self):
        patches = crop_and_augment(random_cube(7, height=8, width=8), 8, 8, scales=(1.0, 0.5))
        self.assertEqual([d.scale for d in patches], [1.0])

    def test_full_resolution_matches_plain_tiling(self):
        cube = random_cube(8, height=16, width=16)
        self.assertEqual(
            crop_and_augment(cube, 8, 4, augment=True, seed=2).descriptors,
            crop_and_augment(cube, 8, 4, augment=True, seed=2, scales=[1]).descriptors,
        )

    def test_ratios_outside_unit_interval(self):
        cube = random_cube(9, height=8, width=8)
        for scales in ((), (0.0,), (1.5,), (1.0, -0.5)):
            with self.subTest(scales=scales), self.assertRaises(ConfigError):
                crop_and_augment(cube, 4, 4, scales=scales)
