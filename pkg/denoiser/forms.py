import dataclasses
import json

from django import forms
from django.conf import settings

from .choices import FppPlacement, NoisePattern, Variant
from .exceptions import ConfigError
from .hdst_net import DTYPES, VARIANT_FLAGS, ModelConfig
from .noise_lab import NoiseSpec
from .optim import LrSchedule


class IntListField(forms.JSONField):
    def clean(self, value):
        value = super().clean(value)
        valid = isinstance(value, list) and value and all(
            isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in value
        )
        if not valid:
            raise forms.ValidationError('Enter a non-empty list of positive integers.')
        return [int(v) for v in value]


class RangeField(forms.JSONField):
    def __init__(self, *, upper=None, **kwargs):
        self.upper = upper
        super().__init__(**kwargs)

    def clean(self, value):
        value = super().clean(value)
        if not isinstance(value, list) or len(value) != 2 or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise forms.ValidationError('Enter a [lo, hi] pair of numbers.')
        lo, hi = float(value[0]), float(value[1])
        if lo > hi:
            raise forms.ValidationError(f'lo = {lo} exceeds hi = {hi}.')
        if lo < 0 or (self.upper is not None and hi > self.upper):
            raise forms.ValidationError(f'Values must lie within [0, {self.upper if self.upper is not None else "inf"}].')
        return [lo, hi]


class ScaleListField(forms.JSONField):
    """Crop ratios in (0, 1]; empty means full resolution only."""

    def clean(self, value):
        value = super().clean(value)
        if value in (None, []):
            return [1.0]
        valid = isinstance(value, list) and all(
            isinstance(v, (int, float)) and not isinstance(v, bool) and 0 < v <= 1 for v in value
        )
        if not valid:
            raise forms.ValidationError('Enter a list of crop ratios in (0, 1].')
        return [float(v) for v in value]


class PathListField(forms.JSONField):
    """A list of paths; a bare string is read as a single path."""

    def to_python(self, value):
        if isinstance(value, str) and not value.lstrip().startswith('['):
            return [value]
        return super().to_python(value)

    def clean(self, value):
        value = super().clean(value)
        if value is None:
            return []
        if not isinstance(value, list) or not all(isinstance(v, str) and v for v in value):
            raise forms.ValidationError('Enter a list of file paths.')
        return value


class ScheduleField(forms.Field):
    """Preset name, constant learning rate, or a list of [epoch, lr] breakpoints."""

    def to_python(self, value):
        if isinstance(value, str) and value.lstrip().startswith('['):
            try:
                value = json.loads(value)
            except json.JSONDecodeError as exc:
                raise forms.ValidationError(f'Invalid JSON: {exc}')
        try:
            return LrSchedule.parse(value, getattr(settings, 'HDST_LR_SCHEDULES', {}))
        except (ConfigError, TypeError, ValueError) as exc:
            raise forms.ValidationError(str(exc))


class PeakField(forms.Field):
    """``ground_truth`` (None) or a positive number."""

    def to_python(self, value):
        if value in (None, '', 'ground_truth'):
            return None
        try:
            peak = float(value)
        except (TypeError, ValueError):
            raise forms.ValidationError('Enter "ground_truth" or a positive number.')
        if not peak > 0:
            raise forms.ValidationError('Peak must be positive.')
        return peak


class SectionForm(forms.Form):
    section = ''

    def clean(self):
        cleaned_data = super().clean()
        unknown = sorted(set(self.data) - set(self.fields))
        if unknown:
            raise forms.ValidationError(f'Unknown option(s): {", ".join(unknown)}.')
        return cleaned_data

    def validated(self):
        if not self.is_valid():
            errors = {
                self.section if key == '__all__' else f'{self.section}.{key}': list(messages)
                for key, messages in self.errors.items()
            }
            raise ConfigError(f'invalid "{self.section}" section', errors)
        return self.cleaned_data


class ModelConfigForm(SectionForm):
    section = 'model'

    variant = forms.ChoiceField(choices=Variant.choices, required=False)
    bands = forms.IntegerField(min_value=1)
    embed_channels = forms.IntegerField(min_value=1)
    n_rtl = forms.IntegerField(min_value=1)
    blocks_per_rtl = forms.IntegerField(min_value=1)
    window_M = forms.IntegerField(min_value=1)
    n_heads = forms.IntegerField(min_value=1)
    head_dim = forms.IntegerField(min_value=1)
    alpha = forms.FloatField()
    fpp_depth = forms.IntegerField(min_value=0)
    fpp_placement = forms.ChoiceField(choices=FppPlacement.choices)
    spatial_dilations = IntListField()
    freq_dilations = IntListField()
    aspp_reference_dilations = IntListField()
    use_reference_aspp = forms.BooleanField(required=False)
    hdms_separable = forms.BooleanField(required=False)
    use_frequency = forms.NullBooleanField(required=False)
    use_dynamic_fusion = forms.NullBooleanField(required=False)
    use_hdms = forms.NullBooleanField(required=False)
    mlp_ratio = forms.IntegerField(min_value=1)
    se_reduction = forms.IntegerField(min_value=1)
    dtype = forms.ChoiceField(choices=[(name, name) for name in DTYPES])
    seed = forms.IntegerField(min_value=0, max_value=2 ** 64 - 1)

    def clean(self):
        cleaned_data = super().clean()
        n_heads = cleaned_data.get('n_heads')
        head_dim = cleaned_data.get('head_dim')
        embed = cleaned_data.get('embed_channels')
        if n_heads and head_dim and embed and n_heads * head_dim != embed:
            self.add_error('n_heads', f'n_heads * head_dim = {n_heads * head_dim} must equal embed_channels = {embed}.')

        depth = cleaned_data.get('fpp_depth')
        blocks = cleaned_data.get('blocks_per_rtl')
        if depth is not None and blocks and depth > blocks:
            self.add_error('fpp_depth', f'fpp_depth cannot exceed blocks_per_rtl = {blocks}.')
        return cleaned_data

    def to_config(self):
        data = dict(self.validated())
        variant = data.pop('variant') or Variant.HDST
        toggles = {key: data.pop(key) for key in ('use_frequency', 'use_dynamic_fusion', 'use_hdms')}
        flags = dataclasses.replace(
            VARIANT_FLAGS[variant], **{key: value for key, value in toggles.items() if value is not None}
        )
        try:
            return ModelConfig(ablation=flags, **data)
        except ConfigError as exc:
            raise ConfigError('invalid "model" section', exc.errors) from exc


class NoiseSpecForm(SectionForm):
    section = 'noise'

    pattern = forms.ChoiceField(choices=NoisePattern.choices)
    sigma_range = RangeField()
    affected_band_fraction = forms.FloatField(min_value=0.0, max_value=1.0)
    column_fraction_range = RangeField(upper=1.0)
    impulse_ratio_range = RangeField(upper=1.0)
    stripe_offset = forms.FloatField(min_value=0.0)
    seed = forms.IntegerField(min_value=0, max_value=2 ** 64 - 1)

    def to_spec(self):
        return NoiseSpec(**self.validated())


class DataForm(SectionForm):
    section = 'data'

    clean_cubes = PathListField(required=False)
    noisy_cubes = PathListField(required=False)
    patch_size = forms.IntegerField(min_value=1)
    stride = forms.IntegerField(min_value=1)
    augment = forms.BooleanField(required=False)
    scales = ScaleListField(required=False)

    def clean(self):
        cleaned_data = super().clean()
        clean_paths = cleaned_data.get('clean_cubes') or []
        noisy_paths = cleaned_data.get('noisy_cubes') or []
        if noisy_paths and len(noisy_paths) != len(clean_paths):
            self.add_error('noisy_cubes', f'{len(noisy_paths)} noisy cubes for {len(clean_paths)} clean cubes.')
        return cleaned_data


class TrainForm(SectionForm):
    section = 'train'

    epochs = forms.IntegerField(min_value=1)
    batch_size = forms.IntegerField(min_value=1)
    lr_schedule = ScheduleField()
    seed = forms.IntegerField(min_value=0, max_value=2 ** 64 - 1)
    checkpoint = forms.CharField()
    checkpoint_every = forms.IntegerField(min_value=1)
    resume = forms.BooleanField(required=False)
    loss_log = forms.CharField()


class DenoiseForm(SectionForm):
    section = 'denoise'

    checkpoint = forms.CharField()
    inputs = PathListField(required=False)
    tile_size = forms.IntegerField(min_value=0)
    overlap = forms.IntegerField(min_value=0)

    def clean(self):
        cleaned_data = super().clean()
        tile = cleaned_data.get('tile_size')
        overlap = cleaned_data.get('overlap')
        if tile and overlap is not None and overlap >= tile:
            self.add_error('overlap', f'overlap must be smaller than tile_size = {tile}.')
        return cleaned_data


class EvalForm(SectionForm):
    section = 'eval'

    denoised = PathListField(required=False)
    reference = PathListField(required=False)
    peak = PeakField(required=False)
    report = forms.CharField()

    def clean(self):
        cleaned_data = super().clean()
        denoised = cleaned_data.get('denoised') or []
        reference = cleaned_data.get('reference') or []
        if len(denoised) != len(reference):
            self.add_error('reference', f'{len(reference)} reference cubes for {len(denoised)} denoised cubes.')
        return cleaned_data


class InspectForm(SectionForm):
    section = 'inspect'

    height = forms.IntegerField(min_value=1)
    width = forms.IntegerField(min_value=1)
    variants = forms.JSONField()

    def clean_variants(self):
        variants = self.cleaned_data.get('variants')
        if not isinstance(variants, list) or not variants or any(v not in Variant.values for v in variants):
            raise forms.ValidationError(f'Choose variants from {", ".join(Variant.values)}.')
        return variants
