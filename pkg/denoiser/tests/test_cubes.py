import json
import struct

import numpy as np
from django.test import SimpleTestCase

from denoiser.cubes import (
    MAGIC, HsiCube, band_to_uint16, convert_raw, decode_cube, encode_cube, export_pgm, file_sha256, load_cube,
    save_cube,
)
from denoiser.exceptions import (
    BadHeaderError, BadMagicError, ConfigError, DimensionMismatchError, NonFiniteError, NonFinitePayloadError,
    ShapeError, TruncatedPayloadError,
)

from .fixtures import GOLDEN_DIR, TempDirMixin, fixture_cube, ramp_cube, random_cube

RAMP_SHA256 = 'db870bc0b93472e7771deba5eee06d7ac766622a547912d371542921568ddf45'


def container(header, payload=b''):
    header_bytes = json.dumps(header).encode('utf-8')
    return MAGIC + struct.pack('<I', len(header_bytes)) + header_bytes + payload


HEADER = {'bands': 4, 'height': 8, 'width': 8, 'dtype': 'f32', 'wavelength_nm': None}


class HsiCubeTest(SimpleTestCase):
    def test_dimensions(self):
        cube = random_cube(0, bands=3, height=5, width=7)
        self.assertEqual((cube.bands, cube.height, cube.width), (3, 5, 7))
        self.assertEqual(cube.as_batch().shape, (1, 3, 5, 7))

    def test_rejects_bad_input(self):
        with self.assertRaises(ShapeError):
            HsiCube(np.zeros((4, 4)))
        with self.assertRaises(NonFiniteError):
            HsiCube(np.array([[[np.inf]]]))

    def test_checksum_is_stable(self):
        self.assertEqual(fixture_cube().checksum(), fixture_cube().checksum())
        self.assertNotEqual(fixture_cube().checksum(), fixture_cube(bands=5).checksum())

    def test_golden_container_bytes(self):
        golden = GOLDEN_DIR / 'ramp_cube.hdc'
        self.assertEqual(encode_cube(ramp_cube()), golden.read_bytes())
        self.assertEqual(ramp_cube().checksum(), RAMP_SHA256)
        self.assertEqual(file_sha256(golden), RAMP_SHA256)
        decoded = load_cube(golden)
        np.testing.assert_array_equal(decoded.data, ramp_cube().data)
        self.assertEqual(decoded.wavelength_nm, (400.0, 700.0))


class ContainerTest(TempDirMixin, SimpleTestCase):
    def test_roundtrip_is_bit_identical(self):
        cube = HsiCube(random_cube(1).data, (450.0, 650.0))
        raw = encode_cube(cube)
        decoded = decode_cube(raw)
        np.testing.assert_array_equal(decoded.data, cube.data)
        self.assertEqual(decoded.wavelength_nm, (450.0, 650.0))
        self.assertEqual(encode_cube(decoded), raw)

    def test_file_checksum_matches_cube_checksum(self):
        path = save_cube(fixture_cube(), self.make_tempdir() / 'nested' / 'fixture.hdc')
        self.assertEqual(file_sha256(path), fixture_cube().checksum())
        self.assertEqual(load_cube(path).checksum(), fixture_cube().checksum())

    def test_payload_size_mismatch(self):
        raw = container(HEADER, np.zeros(255, dtype='<f4').tobytes())
        with self.assertRaises(DimensionMismatchError) as ctx:
            decode_cube(raw)
        self.assertEqual(ctx.exception.code, 'dimension_mismatch')

    def test_partial_scalar_is_truncation(self):
        raw = container(HEADER, bytes(1021))
        with self.assertRaises(TruncatedPayloadError):
            decode_cube(raw)

    def test_bad_magic(self):
        raw = encode_cube(random_cube(2))
        with self.assertRaises(BadMagicError):
            decode_cube(b'HDCUBE02' + raw[8:])

    def test_file_ending_inside_header(self):
        raw = encode_cube(random_cube(3))
        with self.assertRaises(TruncatedPayloadError):
            decode_cube(raw[:20])
        with self.assertRaises(TruncatedPayloadError):
            decode_cube(MAGIC[:4])

    def test_bad_header(self):
        for header in ({**HEADER, 'dtype': 'f16'}, {**HEADER, 'bands': 0}, [1, 2]):
            with self.subTest(header=header), self.assertRaises(BadHeaderError):
                decode_cube(container(header))
        garbage = MAGIC + struct.pack('<I', 3) + b'{x}'
        with self.assertRaises(BadHeaderError):
            decode_cube(garbage)

    def test_non_finite_payload(self):
        payload = np.zeros(4 * 8 * 8, dtype='<f4')
        payload[5] = np.nan
        with self.assertRaises(NonFinitePayloadError):
            decode_cube(container(HEADER, payload.tobytes()))

    def test_out_of_range_values_are_logged(self):
        cube = HsiCube(np.full((1, 2, 2), 1.5, dtype=np.float32))
        with self.assertLogs('denoiser.cubes', 'WARNING') as logs:
            save_cube(cube, self.make_tempdir() / 'hot.hdc')
        self.assertIn('4 values lie outside [0, 1]', logs.output[0])


class ConvertRawTest(TempDirMixin, SimpleTestCase):
    def setUp(self):
        self.directory = self.make_tempdir()
        self.cube = np.arange(2 * 3 * 4, dtype=np.float64).reshape(2, 3, 4) / 24.0

    def write(self, array, dtype):
        path = self.directory / 'scene.raw'
        path.write_bytes(np.ascontiguousarray(array, dtype=dtype).tobytes())
        return path

    def test_interleaves(self):
        layouts = {
            'bsq': self.cube,
            'bil': self.cube.transpose(1, 0, 2),
            'bip': self.cube.transpose(1, 2, 0),
        }
        for interleave, layout in layouts.items():
            with self.subTest(interleave=interleave):
                path = self.write(layout, '>f8')
                sidecar = {
                    'bands': 2, 'height': 3, 'width': 4, 'dtype': 'f64',
                    'byte_order': 'big', 'interleave': interleave,
                }
                converted = convert_raw(path, sidecar)
                np.testing.assert_array_equal(converted.data, self.cube.astype(np.float32))

    def test_sidecar_file(self):
        path = self.write(self.cube, '<f4')
        sidecar = self.directory / 'scene.json'
        sidecar.write_text(json.dumps({'bands': 2, 'height': 3, 'width': 4, 'wavelength_nm': [400, 1000]}))
        converted = convert_raw(path, sidecar)
        self.assertEqual(converted.wavelength_nm, (400.0, 1000.0))

    def test_invalid_sidecar(self):
        path = self.write(self.cube, '<f4')
        with self.assertRaises(ConfigError) as ctx:
            convert_raw(path, {'bands': 2, 'height': 3, 'width': -4, 'interleave': 'bxq'})
        self.assertEqual(set(ctx.exception.errors), {'width', 'interleave'})
        broken = self.directory / 'broken.json'
        broken.write_text('{bands: 2')
        with self.assertRaises(ConfigError):
            convert_raw(path, broken)

    def test_size_mismatch(self):
        path = self.write(self.cube, '<f4')
        with self.assertRaises(DimensionMismatchError):
            convert_raw(path, {'bands': 3, 'height': 3, 'width': 4})


class PgmExportTest(TempDirMixin, SimpleTestCase):
    def test_band_scaling(self):
        np.testing.assert_array_equal(band_to_uint16(np.array([[0.0, 1.0, 2.0, -1.0]])), [[0, 65535, 65535, 0]])
        np.testing.assert_array_equal(band_to_uint16(np.array([[2.0, 4.0]]), 'minmax'), [[0, 65535]])
        np.testing.assert_array_equal(band_to_uint16(np.full((1, 2), 3.0), 'minmax'), [[0, 0]])
        with self.assertRaises(ConfigError):
            band_to_uint16(np.zeros((1, 1)), 'log')

    def test_writes_one_sixteen_bit_file_per_band(self):
        cube = fixture_cube(bands=3, height=6, width=5)
        paths = export_pgm(cube, self.make_tempdir(), stem='scene')
        self.assertEqual([path.name for path in paths], ['scene_0.pgm', 'scene_1.pgm', 'scene_2.pgm'])
        for index, path in enumerate(paths):
            raw = path.read_bytes()
            header = b'P5\n5 6\n65535\n'
            self.assertTrue(raw.startswith(header))
            pixels = np.frombuffer(raw[len(header):], dtype='>u2').reshape(6, 5)
            np.testing.assert_array_equal(pixels, band_to_uint16(cube.data[index]))
