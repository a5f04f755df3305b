"""
Seeded synthetic noise for hyperspectral cubes, and training patch tiling.

Randomness comes from numpy's Philox counter-based generator. The noise plan
(per-band sigma, affected bands and their artifacts) is drawn from
``Philox(key=seed)``; band ``b`` draws its noise field from
``Philox(key=seed).jumped(b + 1)``, so bands can be realised independently.
"""
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from skimage.transform import resize

from .choices import BandArtifact, NoisePattern
from .cubes import HsiCube
from .exceptions import ConfigError, ShapeError

logger = logging.getLogger(__name__)

PATTERN_ARTIFACT = {
    NoisePattern.NONIID_GAUSSIAN: None,
    NoisePattern.GAUSSIAN_STRIPE: BandArtifact.STRIPE,
    NoisePattern.GAUSSIAN_DEADLINE: BandArtifact.DEADLINE,
    NoisePattern.GAUSSIAN_IMPULSE: BandArtifact.IMPULSE,
}
MIXTURE_ARTIFACTS = (BandArtifact.STRIPE, BandArtifact.DEADLINE, BandArtifact.IMPULSE)


def philox(seed, jump=0):
    bit_generator = np.random.Philox(key=int(seed))
    if jump:
        bit_generator = bit_generator.jumped(jump)
    return np.random.Generator(bit_generator)


def _range(value, name, errors, upper=None):
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        errors[name] = ['must be a [lo, hi] pair of numbers']
        return value
    if lo > hi:
        errors[name] = [f'lo = {lo} exceeds hi = {hi}']
    elif lo < 0 or (upper is not None and hi > upper):
        bound = f'[0, {upper}]' if upper is not None else '[0, inf)'
        errors[name] = [f'must lie within {bound}']
    return lo, hi


@dataclass(frozen=True)
class NoiseSpec:
    pattern: str = NoisePattern.NONIID_GAUSSIAN
    sigma_range: tuple = (10 / 255, 70 / 255)
    affected_band_fraction: float = 1 / 3
    column_fraction_range: tuple = (0.05, 0.15)
    impulse_ratio_range: tuple = (0.1, 0.7)
    stripe_offset: float = 0.25
    seed: int = 0

    def __post_init__(self):
        errors = {}
        if self.pattern not in NoisePattern.values:
            errors['pattern'] = [f'must be one of {", ".join(NoisePattern.values)}']
        object.__setattr__(self, 'pattern', str(self.pattern))
        object.__setattr__(self, 'sigma_range', _range(self.sigma_range, 'sigma_range', errors))
        object.__setattr__(
            self, 'column_fraction_range', _range(self.column_fraction_range, 'column_fraction_range', errors, 1.0),
        )
        object.__setattr__(
            self, 'impulse_ratio_range', _range(self.impulse_ratio_range, 'impulse_ratio_range', errors, 1.0),
        )
        if not 0.0 <= self.affected_band_fraction <= 1.0:
            errors['affected_band_fraction'] = ['must lie within [0, 1]']
        if self.stripe_offset < 0:
            errors['stripe_offset'] = ['must be non-negative']
        if not 0 <= int(self.seed) < 2 ** 64:
            errors['seed'] = ['must be a 64-bit unsigned integer']
        if errors:
            raise ConfigError('invalid noise specification', errors)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def to_dict(self):
        data = asdict(self)
        for key in ('sigma_range', 'column_fraction_range', 'impulse_ratio_range'):
            data[key] = list(data[key])
        return data

    def replace(self, **changes):
        values = asdict(self)
        values.update(changes)
        return NoiseSpec(**values)

    @property
    def is_zero(self):
        """True when no realisation of this spec can change a cube."""
        if self.sigma_range[1] > 0:
            return False
        if self.pattern == NoisePattern.NONIID_GAUSSIAN or self.affected_band_fraction == 0:
            return True
        stripes = self.column_fraction_range[1] == 0 or self.stripe_offset == 0
        deadlines = self.column_fraction_range[1] == 0
        impulses = self.impulse_ratio_range[1] == 0
        if self.pattern == NoisePattern.GAUSSIAN_STRIPE:
            return stripes
        if self.pattern == NoisePattern.GAUSSIAN_DEADLINE:
            return deadlines
        if self.pattern == NoisePattern.GAUSSIAN_IMPULSE:
            return impulses
        return stripes and deadlines and impulses


@dataclass(frozen=True)
class BandPlan:
    band: int
    sigma: float
    artifact: str = BandArtifact.NONE
    column_fraction: float = 0.0
    impulse_ratio: float = 0.0


@dataclass(frozen=True)
class NoisePlan:
    pattern: str
    seed: int
    bands: tuple = field(default_factory=tuple)

    @property
    def affected_bands(self):
        return [plan.band for plan in self.bands if plan.artifact != BandArtifact.NONE]

    def to_dict(self):
        return {
            'pattern': self.pattern,
            'seed': self.seed,
            'bands': [
                {**asdict(plan), 'artifact': str(plan.artifact)} for plan in self.bands
            ],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            pattern=data['pattern'],
            seed=int(data['seed']),
            bands=tuple(BandPlan(**band) for band in data['bands']),
        )


def plan_noise(bands, spec):
    """Draw the per-band realisation parameters of ``spec`` for a cube with ``bands`` bands."""
    rng = philox(spec.seed)
    sigmas = rng.uniform(spec.sigma_range[0], spec.sigma_range[1], size=bands)
    affected = set()
    if spec.pattern != NoisePattern.NONIID_GAUSSIAN:
        count = int(round(spec.affected_band_fraction * bands))
        affected = {int(b) for b in rng.choice(bands, size=count, replace=False)}

    plans = []
    for band in range(bands):
        sigma = float(sigmas[band])
        if band not in affected:
            plans.append(BandPlan(band, sigma))
            continue
        artifact = PATTERN_ARTIFACT.get(spec.pattern)
        if artifact is None:
            artifact = MIXTURE_ARTIFACTS[int(rng.integers(len(MIXTURE_ARTIFACTS)))]
        if artifact == BandArtifact.IMPULSE:
            ratio = float(rng.uniform(*spec.impulse_ratio_range))
            plans.append(BandPlan(band, sigma, artifact, impulse_ratio=ratio))
        else:
            fraction = float(rng.uniform(*spec.column_fraction_range))
            plans.append(BandPlan(band, sigma, artifact, column_fraction=fraction))
    return NoisePlan(spec.pattern, int(spec.seed), tuple(plans))


def _noisy_band(values, plan, spec):
    rng = philox(spec.seed, plan.band + 1)
    height, width = values.shape
    noisy = values + rng.standard_normal((height, width)) * plan.sigma
    if plan.artifact in (BandArtifact.STRIPE, BandArtifact.DEADLINE):
        count = int(round(plan.column_fraction * width))
        columns = np.sort(rng.choice(width, size=count, replace=False))
        if plan.artifact == BandArtifact.STRIPE:
            noisy[:, columns] += rng.uniform(-spec.stripe_offset, spec.stripe_offset, size=count)
        else:
            noisy[:, columns] = 0.0
    elif plan.artifact == BandArtifact.IMPULSE:
        count = int(round(plan.impulse_ratio * height * width))
        pixels = rng.choice(height * width, size=count, replace=False)
        salt = rng.random(count) < 0.5
        noisy.reshape(-1)[pixels] = np.where(salt, 1.0, 0.0)
    return noisy


def apply_noise(cube, spec, plan=None):
    """Corrupt ``cube`` according to ``spec``; a pure function of (cube, spec)."""
    if plan is None:
        plan = plan_noise(cube.bands, spec)
    elif len(plan.bands) != cube.bands:
        raise ShapeError(f'noise plan covers {len(plan.bands)} bands, cube has {cube.bands}')
    if spec.is_zero:
        logger.warning('noise spec (pattern %s, seed %s) cannot change the cube', spec.pattern, spec.seed)
    clean = cube.data.astype(np.float64)
    noisy = np.stack([_noisy_band(clean[b], plan.bands[b], spec) for b in range(cube.bands)])
    return cube.with_data(noisy.astype(cube.data.dtype))


# ==================== PATCHES ====================
AUGMENTATIONS = ('identity', 'flip_h', 'flip_v', 'rot90', 'rot180', 'rot270')


@dataclass(frozen=True)
class PatchDescriptor:
    cube_index: int
    band_start: int
    band_stop: int
    y: int
    x: int
    size: int
    augmentation: str = 'identity'
    scale: float = 1.0

    @property
    def extent(self):
        """Side of the source window; it is resampled to ``size`` when ``scale`` is not 1."""
        return max(self.size, int(round(self.size / self.scale)))


def augment(array, name):
    if name == 'identity':
        return array
    if name == 'flip_h':
        return array[..., :, ::-1]
    if name == 'flip_v':
        return array[..., ::-1, :]
    turns = {'rot90': 1, 'rot180': 2, 'rot270': 3}.get(name)
    if turns is None:
        raise ValueError(f'unknown augmentation "{name}"')
    return np.rot90(array, turns, axes=(-2, -1))


@dataclass
class PatchSet:
    descriptors: list
    source_shape: tuple

    def __len__(self):
        return len(self.descriptors)

    def __iter__(self):
        return iter(self.descriptors)

    def __getitem__(self, index):
        return self.descriptors[index]

    def extract(self, data, descriptor):
        """Crop, rescale and augment ``descriptor`` out of a [bands, H, W] array."""
        if tuple(data.shape) != tuple(self.source_shape):
            raise ShapeError(f'patch source has shape {data.shape}, descriptors were cut from {self.source_shape}')
        d = descriptor
        window = data[d.band_start:d.band_stop, d.y:d.y + d.extent, d.x:d.x + d.extent]
        if d.extent != d.size:
            window = resize(
                window, (window.shape[0], d.size, d.size), order=1, mode='reflect',
                anti_aliasing=True, preserve_range=True,
            ).astype(data.dtype)
        return np.ascontiguousarray(augment(window, d.augmentation))


def _starts(extent, size, stride):
    return list(range(0, extent - size + 1, stride))


def crop_and_augment(cube, patch_size, stride, augment=False, seed=0, cube_index=0, scales=(1.0,)):
    """
    Tile ``cube`` into ``patch_size`` training patches once per ratio in ``scales``.

    At ratio ``s`` a window of ``patch_size / s`` pixels, stepped by
    ``stride / s``, is resampled down to ``patch_size``; ratios whose window
    does not fit the cube contribute nothing.
    """
    if patch_size < 1 or stride < 1:
        raise ConfigError('patch_size and stride must be positive')
    if not scales or any(not 0.0 < s <= 1.0 for s in scales):
        raise ConfigError(f'crop scales must lie in (0, 1], got {list(scales)}')
    if patch_size > min(cube.height, cube.width):
        raise ShapeError(f'patch {patch_size} exceeds the {cube.height}x{cube.width} cube')
    rng = philox(seed)
    descriptors = []
    for scale in scales:
        scale = float(scale)
        extent = PatchDescriptor(cube_index, 0, cube.bands, 0, 0, patch_size, scale=scale).extent
        if extent > min(cube.height, cube.width):
            logger.debug('crop ratio %g needs a %d px window, the cube is %dx%d', scale, extent, cube.height, cube.width)
            continue
        step = max(1, int(round(stride / scale)))
        for y in _starts(cube.height, extent, step):
            for x in _starts(cube.width, extent, step):
                tag = AUGMENTATIONS[int(rng.integers(len(AUGMENTATIONS)))] if augment else 'identity'
                descriptors.append(PatchDescriptor(cube_index, 0, cube.bands, y, x, patch_size, tag, scale))
    return PatchSet(descriptors, cube.shape)
