"""
Run configuration: settings defaults, then a JSON config file, then
``--set section.key=value`` overrides, validated section by section.
"""
import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

from django.conf import settings

from .exceptions import ConfigError
from .forms import DataForm, DenoiseForm, EvalForm, InspectForm, ModelConfigForm, NoiseSpecForm, TrainForm

SECTION_DEFAULTS = {
    'model': 'HDST_MODEL_DEFAULTS',
    'data': 'HDST_DATA_DEFAULTS',
    'noise': 'HDST_NOISE_DEFAULTS',
    'train': 'HDST_TRAIN_DEFAULTS',
    'denoise': 'HDST_DENOISE_DEFAULTS',
    'eval': 'HDST_EVAL_DEFAULTS',
    'inspect': 'HDST_INSPECT_DEFAULTS',
}
SEEDED_SECTIONS = ('model', 'noise', 'train')


@dataclass(frozen=True)
class DataSettings:
    clean_cubes: tuple
    noisy_cubes: tuple
    patch_size: int
    stride: int
    augment: bool
    scales: tuple = (1.0,)


@dataclass(frozen=True)
class TrainSettings:
    epochs: int
    batch_size: int
    schedule: object
    seed: int
    checkpoint: Path
    checkpoint_every: int
    resume: bool
    loss_log: Path


@dataclass(frozen=True)
class DenoiseSettings:
    checkpoint: Path
    inputs: tuple
    tile_size: int
    overlap: int


@dataclass(frozen=True)
class EvalSettings:
    denoised: tuple
    reference: tuple
    peak: float
    report: Path


@dataclass(frozen=True)
class InspectSettings:
    height: int
    width: int
    variants: tuple


@dataclass(frozen=True)
class RunConfig:
    model: object
    data: DataSettings
    noise: object
    train: TrainSettings
    denoise: DenoiseSettings
    eval: EvalSettings
    inspect: InspectSettings
    out_dir: Path
    raw: dict = field(default_factory=dict)

    def require_files(self, **paths):
        """Fail with every missing input at once; keyword names label the option."""
        missing = {}
        for option, values in paths.items():
            values = values if isinstance(values, (list, tuple)) else [values]
            absent = [str(p) for p in values if not Path(p).is_file()]
            if absent:
                missing[option.replace('__', '.')] = [f'no such file: {p}' for p in absent]
        if missing:
            raise ConfigError('input files are missing', missing)


def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_override(text):
    """``section.key=value`` with ``value`` parsed as JSON, falling back to a string."""
    target, sep, value = text.partition('=')
    section, dot, key = target.strip().partition('.')
    if not sep or not dot or not key:
        raise ConfigError(f'override "{text}" must look like section.key=value')
    if section not in SECTION_DEFAULTS:
        raise ConfigError(f'override "{text}" names unknown section "{section}"')
    return section, key.strip(), parse_value(value.strip())


def read_config_file(path):
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding='utf-8'))
    except FileNotFoundError as exc:
        raise ConfigError(f'config file not found: {path}') from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f'{path}: not valid JSON ({exc})') from exc
    if not isinstance(data, dict):
        raise ConfigError(f'{path}: top level must be an object of sections')
    return data


def apply_dataset_preset(raw, name):
    """Seed band count, crop size, epochs and schedule from ``HDST_DATASET_PRESETS[name]``."""
    presets = getattr(settings, 'HDST_DATASET_PRESETS', {})
    if name not in presets:
        raise ConfigError(f'unknown dataset preset "{name}"', {'dataset': [f'choose one of {", ".join(presets)}']})
    preset = presets[name]
    raw['model']['bands'] = preset['bands']
    raw['data']['patch_size'] = preset['patch_size']
    raw['data']['stride'] = preset['patch_size'] // 2
    raw['train']['epochs'] = preset['epochs']
    if name in getattr(settings, 'HDST_LR_SCHEDULES', {}):
        raw['train']['lr_schedule'] = name
    if 'crop_scales' in preset:
        raw['data']['scales'] = list(preset['crop_scales'])
    if 'test_crop' in preset:
        raw['denoise']['tile_size'] = preset['test_crop']


def merge_sections(file_data=None, overrides=(), seed=None, dataset=None):
    raw = {name: copy.deepcopy(getattr(settings, key)) for name, key in SECTION_DEFAULTS.items()}
    file_data = dict(file_data or {})
    out_dir = file_data.pop('out_dir', None)
    file_dataset = file_data.pop('dataset', None)
    dataset = dataset or file_dataset
    if dataset is not None:
        apply_dataset_preset(raw, dataset)
        raw['dataset'] = dataset
    for section, values in file_data.items():
        if section not in raw:
            raise ConfigError(f'unknown config section "{section}"')
        if not isinstance(values, dict):
            raise ConfigError(f'config section "{section}" must be an object')
        raw[section].update(copy.deepcopy(values))
    for text in overrides:
        section, key, value = parse_override(text)
        raw[section][key] = value
    if seed is not None:
        for section in SEEDED_SECTIONS:
            raw[section]['seed'] = int(seed)
    if out_dir is not None:
        raw['out_dir'] = out_dir
    return raw


def _paths(values):
    return tuple(Path(v) for v in values)


def build_run_config(raw, out_dir=None):
    out_dir = Path(out_dir or raw.get('out_dir') or '.')
    errors = {}
    cleaned = {}
    for name, form_class in (
        ('data', DataForm), ('train', TrainForm), ('denoise', DenoiseForm),
        ('eval', EvalForm), ('inspect', InspectForm),
    ):
        try:
            cleaned[name] = form_class(data=raw[name]).validated()
        except ConfigError as exc:
            errors.update(exc.errors)
    try:
        model = ModelConfigForm(data=raw['model']).to_config()
    except ConfigError as exc:
        errors.update(exc.errors)
    try:
        noise = NoiseSpecForm(data=raw['noise']).to_spec()
    except ConfigError as exc:
        errors.update(exc.errors)
    if errors:
        raise ConfigError('invalid run configuration', errors)

    data, train, denoise, evaluation, inspect = (
        cleaned['data'], cleaned['train'], cleaned['denoise'], cleaned['eval'], cleaned['inspect'],
    )
    return RunConfig(
        model=model,
        data=DataSettings(
            clean_cubes=_paths(data['clean_cubes']),
            noisy_cubes=_paths(data['noisy_cubes']),
            patch_size=data['patch_size'],
            stride=data['stride'],
            augment=data['augment'],
            scales=tuple(data['scales']),
        ),
        noise=noise,
        train=TrainSettings(
            epochs=train['epochs'],
            batch_size=train['batch_size'],
            schedule=train['lr_schedule'],
            seed=train['seed'],
            checkpoint=out_dir / train['checkpoint'],
            checkpoint_every=train['checkpoint_every'],
            resume=train['resume'],
            loss_log=out_dir / train['loss_log'],
        ),
        denoise=DenoiseSettings(
            checkpoint=Path(denoise['checkpoint']),
            inputs=_paths(denoise['inputs']),
            tile_size=denoise['tile_size'],
            overlap=denoise['overlap'],
        ),
        eval=EvalSettings(
            denoised=_paths(evaluation['denoised']),
            reference=_paths(evaluation['reference']),
            peak=evaluation['peak'],
            report=out_dir / evaluation['report'],
        ),
        inspect=InspectSettings(
            height=inspect['height'], width=inspect['width'], variants=tuple(inspect['variants']),
        ),
        out_dir=out_dir,
        raw=raw,
    )


def load_run_config(path=None, overrides=(), seed=None, out_dir=None, dataset=None):
    file_data = read_config_file(path) if path else {}
    return build_run_config(merge_sections(file_data, overrides, seed, dataset), out_dir)
