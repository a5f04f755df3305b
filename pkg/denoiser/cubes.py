"""
Hyperspectral cubes and the HDC1 container.

HDC1 layout: the 8-byte magic ``HDCUBE01``, a little-endian u32 header
length, a UTF-8 JSON header ``{bands, height, width, dtype: "f32",
wavelength_nm}`` and the little-endian f32 payload in band-major order.
"""
import hashlib
import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from django import forms
from PIL import Image

from .exceptions import (
    BadHeaderError, BadMagicError, ConfigError, DimensionMismatchError,
    NonFiniteError, NonFinitePayloadError, ShapeError, TruncatedPayloadError,
)

logger = logging.getLogger(__name__)

MAGIC = b'HDCUBE01'
_LENGTH = struct.Struct('<I')
PAYLOAD_DTYPE = np.dtype('<f4')

RAW_DTYPES = {'f32': 'f4', 'f64': 'f8'}
BYTE_ORDERS = {'little': '<', 'big': '>'}
INTERLEAVES = ('bsq', 'bil', 'bip')


@dataclass(frozen=True, eq=False)
class HsiCube:
    data: np.ndarray
    wavelength_nm: tuple = None

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise ShapeError(f'a cube is [bands, height, width], got shape {data.shape}')
        if not np.issubdtype(data.dtype, np.floating):
            data = data.astype(np.float32)
        if not np.all(np.isfinite(data)):
            raise NonFiniteError('cube')
        object.__setattr__(self, 'data', data)
        if self.wavelength_nm is not None:
            object.__setattr__(self, 'wavelength_nm', tuple(float(v) for v in self.wavelength_nm))

    @property
    def bands(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    @property
    def shape(self):
        return self.data.shape

    def with_data(self, data):
        return HsiCube(data, self.wavelength_nm)

    def as_batch(self, dtype=np.float64):
        return self.data.astype(dtype)[np.newaxis]

    def out_of_range(self):
        return int(np.count_nonzero((self.data < 0.0) | (self.data > 1.0)))

    def checksum(self):
        return hashlib.sha256(encode_cube(self)).hexdigest()

    def __repr__(self):
        return f'HsiCube(bands={self.bands}, height={self.height}, width={self.width})'


def _warn_range(cube, path, action):
    outside = cube.out_of_range()
    if outside:
        logger.warning('%s %s: %d values lie outside [0, 1]', action, path or '<memory>', outside)


# ==================== HDC1 ====================
def encode_cube(cube):
    header = {
        'bands': cube.bands,
        'height': cube.height,
        'width': cube.width,
        'dtype': 'f32',
        'wavelength_nm': list(cube.wavelength_nm) if cube.wavelength_nm else None,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')
    payload = np.ascontiguousarray(cube.data, dtype=PAYLOAD_DTYPE).tobytes()
    return MAGIC + _LENGTH.pack(len(header_bytes)) + header_bytes + payload


def _header_int(header, key, path):
    value = header.get(key)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise BadHeaderError(f'header field "{key}" must be a positive integer, got {value!r}', path)
    return value


def decode_cube(raw, path=None):
    prefix = len(MAGIC) + _LENGTH.size
    if len(raw) < len(MAGIC) or raw[:len(MAGIC)] != MAGIC:
        if len(raw) < len(MAGIC) and MAGIC.startswith(raw):
            raise TruncatedPayloadError('file ends inside the magic', path)
        raise BadMagicError(f'expected magic {MAGIC!r}', path)
    if len(raw) < prefix:
        raise TruncatedPayloadError('file ends inside the header length', path)
    (header_length,) = _LENGTH.unpack_from(raw, len(MAGIC))
    if len(raw) < prefix + header_length:
        raise TruncatedPayloadError(f'header claims {header_length} bytes, file ends early', path)
    try:
        header = json.loads(raw[prefix:prefix + header_length].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise BadHeaderError(f'header is not valid JSON: {exc}', path) from exc
    if not isinstance(header, dict):
        raise BadHeaderError('header must be a JSON object', path)
    if header.get('dtype') != 'f32':
        raise BadHeaderError(f'unsupported dtype {header.get("dtype")!r}', path)
    bands, height, width = (_header_int(header, key, path) for key in ('bands', 'height', 'width'))
    wavelength = header.get('wavelength_nm')
    if wavelength is not None and (not isinstance(wavelength, list) or len(wavelength) != 2):
        raise BadHeaderError('wavelength_nm must be a [lo, hi] pair', path)

    payload = raw[prefix + header_length:]
    if len(payload) % PAYLOAD_DTYPE.itemsize:
        raise TruncatedPayloadError(f'payload of {len(payload)} bytes is not a whole number of f32 scalars', path)
    count = len(payload) // PAYLOAD_DTYPE.itemsize
    expected = bands * height * width
    if count != expected:
        raise DimensionMismatchError(
            f'header claims {bands}x{height}x{width} = {expected} scalars, payload holds {count}', path
        )
    data = np.frombuffer(payload, dtype=PAYLOAD_DTYPE).astype(np.float32).reshape(bands, height, width)
    if not np.all(np.isfinite(data)):
        raise NonFinitePayloadError('payload contains NaN or Inf', path)
    return HsiCube(data, tuple(wavelength) if wavelength else None)


def load_cube(path):
    path = Path(path)
    cube = decode_cube(path.read_bytes(), path)
    _warn_range(cube, path, 'loaded')
    return cube


def save_cube(cube, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    _warn_range(cube, path, 'saving')
    path.write_bytes(encode_cube(cube))
    return path


def file_sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ==================== RAW CONVERTER ====================
class RawSidecarForm(forms.Form):
    bands = forms.IntegerField(min_value=1)
    height = forms.IntegerField(min_value=1)
    width = forms.IntegerField(min_value=1)
    dtype = forms.ChoiceField(choices=[(name, name) for name in RAW_DTYPES], required=False)
    byte_order = forms.ChoiceField(choices=[(name, name) for name in BYTE_ORDERS], required=False)
    interleave = forms.ChoiceField(choices=[(name, name) for name in INTERLEAVES], required=False)

    def validated(self):
        if not self.is_valid():
            raise ConfigError('invalid raw sidecar', {key: list(messages) for key, messages in self.errors.items()})
        return {
            **self.cleaned_data,
            'dtype': self.cleaned_data['dtype'] or 'f32',
            'byte_order': self.cleaned_data['byte_order'] or 'little',
            'interleave': self.cleaned_data['interleave'] or 'bsq',
        }


def convert_raw(raw_path, sidecar):
    """
    Read a flat raw float file described by a JSON sidecar.

    The sidecar holds ``bands``, ``height``, ``width`` and optionally
    ``dtype`` (f32/f64), ``byte_order`` (little/big), ``interleave``
    (bsq/bil/bip) and ``wavelength_nm``.
    """
    if not isinstance(sidecar, dict):
        try:
            sidecar = json.loads(Path(sidecar).read_text(encoding='utf-8'))
        except json.JSONDecodeError as exc:
            raise ConfigError(f'{sidecar}: sidecar is not valid JSON ({exc})') from exc
        if not isinstance(sidecar, dict):
            raise ConfigError('raw sidecar must be a JSON object')
    layout = RawSidecarForm(data=sidecar).validated()
    bands, height, width = layout['bands'], layout['height'], layout['width']
    dtype, interleave = layout['dtype'], layout['interleave']

    raw = Path(raw_path).read_bytes()
    scalar = np.dtype(BYTE_ORDERS[layout['byte_order']] + RAW_DTYPES[dtype])
    if len(raw) % scalar.itemsize:
        raise TruncatedPayloadError(f'{len(raw)} bytes is not a whole number of {dtype} scalars', raw_path)
    values = np.frombuffer(raw, dtype=scalar)
    if values.size != bands * height * width:
        raise DimensionMismatchError(
            f'sidecar claims {bands}x{height}x{width}, file holds {values.size} scalars', raw_path
        )
    if interleave == 'bsq':
        data = values.reshape(bands, height, width)
    elif interleave == 'bil':
        data = values.reshape(height, bands, width).transpose(1, 0, 2)
    else:
        data = values.reshape(height, width, bands).transpose(2, 0, 1)
    data = np.ascontiguousarray(data, dtype=np.float32)
    if not np.all(np.isfinite(data)):
        raise NonFinitePayloadError('raw file contains NaN or Inf', raw_path)
    return HsiCube(data, sidecar.get('wavelength_nm'))


# ==================== PGM EXPORT ====================
def band_to_uint16(band, scale='unit'):
    band = np.asarray(band, dtype=np.float64)
    if scale == 'minmax':
        lo, hi = float(band.min()), float(band.max())
        band = (band - lo) / (hi - lo) if hi > lo else np.zeros_like(band)
    elif scale != 'unit':
        raise ConfigError(f'unknown PGM scale "{scale}"')
    return np.rint(np.clip(band, 0.0, 1.0) * 65535.0).astype(np.uint16)


def export_pgm(cube, out_dir, stem='band', scale='unit'):
    """Write one 16-bit binary PGM (P5) per band; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    digits = len(str(cube.bands - 1))
    paths = []
    for index in range(cube.bands):
        path = out_dir / f'{stem}_{index:0{digits}d}.pgm'
        Image.fromarray(band_to_uint16(cube.data[index], scale)).save(path, format='PPM')
        paths.append(path)
    return paths
