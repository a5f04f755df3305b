"""
HDST network: residual transformer stages with hybrid-domain multiscale
blocks and frequency post-processing (FSGF -> FSCA -> dynamic fusion).
"""
import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor_engine as te
from .choices import FppPlacement, Variant
from .exceptions import ConfigError, NonFiniteError, ShapeError
from .layers import Conv2d, LayerNorm, Linear, Module, ModuleList, uniform_init

FPP_PLACEMENTS = tuple(FppPlacement.values)
DTYPES = ('float32', 'float64')


# ==================== CONFIG ====================
@dataclass(frozen=True)
class AblationFlags:
    use_frequency: bool = True
    use_dynamic_fusion: bool = True
    use_hdms: bool = True


VARIANT_FLAGS = {
    Variant.BASELINE: AblationFlags(False, False, False),
    Variant.NET1: AblationFlags(True, False, False),
    Variant.NET2: AblationFlags(True, True, False),
    Variant.NET3: AblationFlags(False, False, True),
    Variant.NET4: AblationFlags(True, False, True),
    Variant.HDST: AblationFlags(True, True, True),
}


def _positive_ints(values, field_name):
    values = tuple(int(v) for v in values)
    if not values or any(v < 1 for v in values):
        raise ConfigError(f'{field_name} must be a non-empty list of positive integers')
    return values


@dataclass(frozen=True)
class ModelConfig:
    bands: int = 31
    embed_channels: int = 16
    n_rtl: int = 3
    blocks_per_rtl: int = 6
    window_M: int = 8
    n_heads: int = 2
    head_dim: int = 8
    alpha: float = 0.5
    fpp_depth: int = 2
    fpp_placement: str = 'per_rtl'
    spatial_dilations: tuple = (2, 4, 8)
    freq_dilations: tuple = (2, 4, 8)
    aspp_reference_dilations: tuple = (6, 12, 18)
    use_reference_aspp: bool = False
    hdms_separable: bool = True
    mlp_ratio: int = 2
    se_reduction: int = 2
    ablation: AblationFlags = field(default_factory=AblationFlags)
    dtype: str = 'float64'
    seed: int = 0

    def __post_init__(self):
        errors = {}
        for name in ('bands', 'embed_channels', 'n_rtl', 'blocks_per_rtl', 'window_M',
                     'n_heads', 'head_dim', 'mlp_ratio', 'se_reduction'):
            if int(getattr(self, name)) < 1:
                errors[name] = ['must be a positive integer']
        if self.n_heads * self.head_dim != self.embed_channels:
            errors['n_heads'] = [
                f'n_heads * head_dim = {self.n_heads * self.head_dim} must equal embed_channels = {self.embed_channels}'
            ]
        if not 0 <= self.fpp_depth <= self.blocks_per_rtl:
            errors['fpp_depth'] = [f'must lie in [0, blocks_per_rtl = {self.blocks_per_rtl}]']
        if self.fpp_placement not in FPP_PLACEMENTS:
            errors['fpp_placement'] = [f'must be one of {", ".join(FPP_PLACEMENTS)}']
        if self.dtype not in DTYPES:
            errors['dtype'] = [f'must be one of {", ".join(DTYPES)}']
        if not math.isfinite(self.alpha):
            errors['alpha'] = ['must be finite']
        if not 0 <= int(self.seed) < 2 ** 64:
            errors['seed'] = ['must be a 64-bit unsigned integer']
        for name in ('spatial_dilations', 'freq_dilations', 'aspp_reference_dilations'):
            try:
                object.__setattr__(self, name, _positive_ints(getattr(self, name), name))
            except (ConfigError, TypeError, ValueError) as exc:
                errors[name] = [str(exc)]
        if isinstance(self.ablation, dict):
            object.__setattr__(self, 'ablation', AblationFlags(**self.ablation))
        if errors:
            raise ConfigError('invalid model configuration', errors)

    @classmethod
    def toy(cls, bands=4, **changes):
        base = dict(
            bands=bands, embed_channels=8, n_rtl=1, blocks_per_rtl=2, window_M=4,
            n_heads=2, head_dim=4, fpp_depth=1,
        )
        base.update(changes)
        return cls(**base)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if 'ablation' in data and isinstance(data['ablation'], dict):
            data['ablation'] = AblationFlags(**data['ablation'])
        return cls(**data)

    def to_dict(self):
        data = dataclasses.asdict(self)
        for name in ('spatial_dilations', 'freq_dilations', 'aspp_reference_dilations'):
            data[name] = list(data[name])
        return data

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def for_variant(self, name):
        if name not in VARIANT_FLAGS:
            raise ConfigError(f'unknown ablation variant "{name}"')
        return self.replace(ablation=VARIANT_FLAGS[name])

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    @property
    def pad_multiple(self):
        return 2 * self.window_M

    def hosts_fpp(self, stage_index, block_index):
        flags = self.ablation
        if not (flags.use_frequency or flags.use_dynamic_fusion) or self.fpp_depth == 0:
            return False
        if self.fpp_placement == 'final_rtl' and stage_index != self.n_rtl - 1:
            return False
        return block_index >= self.blocks_per_rtl - self.fpp_depth


def _ensure_finite(tensor, stage):
    if not np.all(np.isfinite(tensor.data)):
        raise NonFiniteError(stage)
    return tensor


# ==================== WINDOWS & ATTENTION ====================
def window_partition(x, M, inverse=False, image_shape=None):
    """
    Split [B,C,H,W] into non-overlapping windows of M×M (or Mh×Mw) tokens,
    giving [B·(H/Mh)·(W/Mw), Mh·Mw, C]. With ``inverse`` the windows are
    merged back into ``image_shape``.
    """
    window_h, window_w = (M, M) if isinstance(M, int) else M
    if not inverse:
        if x.ndim != 4:
            raise ShapeError(f'window_partition: expected [B,C,H,W], got {x.shape}')
        batch, channels, height, width = x.shape
        if height % window_h or width % window_w:
            raise ShapeError(
                f'window_partition: {height}x{width} is not divisible by window {window_h}x{window_w}'
            )
        grid = te.reshape(x, (batch, channels, height // window_h, window_h, width // window_w, window_w))
        grid = te.transpose(grid, (0, 2, 4, 3, 5, 1))
        return te.reshape(grid, (-1, window_h * window_w, channels))

    if image_shape is None:
        raise ShapeError('window_partition: merging windows needs the image shape')
    batch, channels, height, width = image_shape
    if height % window_h or width % window_w:
        raise ShapeError(f'window_partition: {height}x{width} is not divisible by window {window_h}x{window_w}')
    grid = te.reshape(x, (batch, height // window_h, width // window_w, window_h, window_w, channels))
    grid = te.transpose(grid, (0, 5, 1, 3, 2, 4))
    return te.reshape(grid, (batch, channels, height, width))


def multi_head_attention(q, k, v, n_heads, head_dim):
    """Scaled dot-product attention per head over [N, T, C] token sets."""
    count, tokens, channels = q.shape
    if channels != n_heads * head_dim:
        raise ShapeError(f'attention: {channels} channels cannot be split into {n_heads} heads of {head_dim}')

    def split(t):
        return te.transpose(te.reshape(t, (count, t.shape[1], n_heads, head_dim)), (0, 2, 1, 3))

    logits = te.matmul(split(q), te.transpose(split(k), (0, 1, 3, 2)))
    weights = te.softmax(te.scale(logits, 1.0 / math.sqrt(head_dim)), axis=-1)
    heads = te.matmul(weights, split(v))
    merged = te.reshape(te.transpose(heads, (0, 2, 1, 3)), (count, tokens, channels))
    return merged, weights


def _to_tokens(x):
    batch, channels, height, width = x.shape
    return te.reshape(te.transpose(x, (0, 2, 3, 1)), (batch, height * width, channels))


def _from_tokens(tokens, shape):
    batch, channels, height, width = shape
    return te.transpose(te.reshape(tokens, (batch, height, width, channels)), (0, 3, 1, 2))


# ==================== ASPP ====================
class _DilatedBranch(Module):
    def __init__(self, channels, rate, rng, separable, dtype):
        if separable:
            self.depthwise = Conv2d(channels, channels, 3, rng, dilation=rate, groups=channels, dtype=dtype)
            self.pointwise = Conv2d(channels, channels, 1, rng, dtype=dtype)
        else:
            self.conv = Conv2d(channels, channels, 3, rng, dilation=rate, dtype=dtype)
        self._separable = separable
        self._rate = rate

    @property
    def rate(self):
        return self._rate

    def forward(self, x):
        if self._separable:
            return self.pointwise(self.depthwise(x))
        return self.conv(x)


class AsppBlock(Module):
    """
    Parallel 1×1 and dilated 3×3 branches, an optional global-pooling branch,
    concatenated and fused by a 1×1 convolution back to ``channels``.
    """

    def __init__(self, channels, rates, rng, pooling=False, separable=False, activation=None, dtype=np.float64):
        branches = [Conv2d(channels, channels, 1, rng, dtype=dtype)]
        branches += [_DilatedBranch(channels, rate, rng, separable, dtype) for rate in rates]
        self.branches = ModuleList(branches, label='branch')
        self.pool = Conv2d(channels, channels, 1, rng, dtype=dtype) if pooling else None
        self.fuse = Conv2d(self.branch_count_for(len(rates), pooling) * channels, channels, 1, rng, dtype=dtype)
        self._channels = channels
        self._activation = activation

    @staticmethod
    def branch_count_for(rate_count, pooling):
        return 1 + rate_count + (1 if pooling else 0)

    @property
    def branch_count(self):
        return len(self.branches) + (1 if self.pool is not None else 0)

    def branch_outputs(self, x):
        if x.ndim != 4 or x.shape[1] != self._channels:
            raise ShapeError(f'aspp: expected {self._channels} input channels (dim 1), got shape {x.shape}')
        outputs = [branch(x) for branch in self.branches]
        if self.pool is not None:
            pooled = self.pool(te.mean(x, axis=(2, 3), keepdims=True))
            outputs.append(te.broadcast_to(pooled, x.shape))
        if self._activation == 'gelu':
            outputs = [te.gelu(out) for out in outputs]
        return outputs

    def forward(self, x):
        return self.fuse(te.concat(self.branch_outputs(x), axis=1))


def aspp_forward(x, block):
    return block(x)


# ==================== FREQUENCY POST-PROCESSING ====================
class FsgfBlock(Module):
    """FFT -> ASPP-FFT on concatenated real/imag planes -> gated spatial mix."""

    def __init__(self, config, rng, dtype=np.float64):
        channels = config.embed_channels
        self.aspp_fft = AsppBlock(2 * channels, config.freq_dilations, rng, pooling=False, dtype=dtype)
        self.reconstruct = Conv2d(channels, channels, 3, rng, dtype=dtype)
        self.gate = Conv2d(2 * channels, 2 * channels, 1, rng, bias=False, dtype=dtype)
        self.gate_bias = te.Parameter(np.zeros(channels, dtype=dtype))
        self.alpha = config.alpha
        self._channels = channels

    def _to_spatial(self, planes):
        channels = self._channels
        spectrum = te.ComplexTensor(te.take(planes, 1, 0, channels), te.take(planes, 1, channels, 2 * channels))
        return te.spectral_transform(spectrum, 'inverse')

    def gate_map(self, f_proc):
        logits = self._to_spatial(self.gate(f_proc))
        bias = te.broadcast_to(te.reshape(self.gate_bias, (1, self._channels, 1, 1)), logits.shape)
        return _ensure_finite(te.sigmoid(logits + bias), 'fsgf.gate')

    def forward(self, s):
        if s.ndim != 4 or s.shape[1] != self._channels:
            raise ShapeError(f'fsgf: expected {self._channels} channels (dim 1), got shape {s.shape}')
        spectrum = te.spectral_transform(s, 'forward')
        f_c = te.concat([spectrum.real, spectrum.imag], axis=1)
        f_proc = _ensure_finite(self.aspp_fft(f_c), 'fsgf.aspp_fft')
        s_prime = _ensure_finite(self.reconstruct(self._to_spatial(f_proc)), 'fsgf.reconstruct')
        gate = self.gate_map(f_proc)
        return _ensure_finite(s * gate + self.alpha * s_prime * (1.0 - gate), 'fsgf.mix')


class FscaBlock(Module):
    """Windowed cross attention: queries from S, keys and values from F'."""

    def __init__(self, config, rng, dtype=np.float64):
        channels = config.embed_channels
        self.w_q = te.Parameter(uniform_init(rng, (channels, channels), channels, dtype))
        self.w_k = te.Parameter(uniform_init(rng, (channels, channels), channels, dtype))
        self.w_v = te.Parameter(uniform_init(rng, (channels, channels), channels, dtype))
        self.w_o = te.Parameter(uniform_init(rng, (channels, channels), channels, dtype))
        self._window = config.window_M
        self._heads = config.n_heads
        self._head_dim = config.head_dim

    def attend(self, s, fp):
        if s.shape != fp.shape:
            raise ShapeError(f'fsca: spatial {s.shape} and frequency {fp.shape} features differ')
        if s.shape[1] != self._heads * self._head_dim:
            raise ShapeError(
                f'fsca: {s.shape[1]} channels do not match {self._heads} heads x {self._head_dim} head_dim'
            )
        s_windows = window_partition(s, self._window)
        f_windows = window_partition(fp, self._window)
        merged, weights = multi_head_attention(
            te.linear(s_windows, self.w_q),
            te.linear(f_windows, self.w_k),
            te.linear(f_windows, self.w_v),
            self._heads, self._head_dim,
        )
        h = window_partition(te.linear(merged, self.w_o), self._window, inverse=True, image_shape=s.shape)
        return h, weights

    def forward(self, s, fp):
        return self.attend(s, fp)[0]


class DynamicFusionBlock(Module):
    def __init__(self, config, rng, dtype=np.float64):
        channels = config.embed_channels
        self.expand = Conv2d(channels, channels, 1, rng, dtype=dtype)
        self.smooth = Conv2d(channels, channels, 3, rng, dtype=dtype)
        self.beta = te.Parameter(np.full(1, 0.1, dtype=dtype))

    def fused(self, h):
        return self.smooth(te.gelu(self.expand(h)))

    def forward(self, s, h):
        return s + self.fused(h) * self.beta


class FppUnit(Module):
    def __init__(self, config, rng, dtype=np.float64):
        flags = config.ablation
        self.fsgf = FsgfBlock(config, rng, dtype) if flags.use_frequency else None
        self.fsca = FscaBlock(config, rng, dtype) if flags.use_frequency else None
        self.fusion = DynamicFusionBlock(config, rng, dtype) if flags.use_dynamic_fusion else None

    def forward(self, s):
        h = self.fsca(s, self.fsgf(s)) if self.fsgf is not None else s
        if self.fusion is not None:
            return self.fusion(s, h)
        return s + h


def fsgf_forward(s, block):
    return block(s)


def fsca_forward(s, fp, block):
    return block(s, fp)


def dynamic_fusion_forward(s, h, block):
    return block(s, h)


def fpp_forward(s, blocks):
    return blocks(s)


# ==================== SPATIAL BLOCKS ====================
class HdmsBlock(Module):
    def __init__(self, config, rng, dtype=np.float64):
        self.aspp = AsppBlock(
            config.embed_channels, config.spatial_dilations, rng,
            pooling=False, separable=config.hdms_separable, activation='gelu', dtype=dtype,
        )

    def forward(self, x):
        return x + self.aspp(x)


def hdms_forward(x, block):
    return block(x)


class BackboneBlock(Module):
    """
    Rectangular-window self-attention (M×2M on even blocks, 2M×M on odd ones)
    followed by a GELU MLP whose output is gated by channel squeeze-excitation.
    """

    def __init__(self, config, index, rng, dtype=np.float64):
        channels = config.embed_channels
        hidden = config.mlp_ratio * channels
        squeezed = max(1, channels // config.se_reduction)
        self.norm1 = LayerNorm(channels, dtype=dtype)
        self.q_proj = Linear(channels, channels, rng, bias=False, dtype=dtype)
        self.k_proj = Linear(channels, channels, rng, bias=False, dtype=dtype)
        self.v_proj = Linear(channels, channels, rng, bias=False, dtype=dtype)
        self.out_proj = Linear(channels, channels, rng, dtype=dtype)
        self.norm2 = LayerNorm(channels, dtype=dtype)
        self.mlp_in = Linear(channels, hidden, rng, dtype=dtype)
        self.mlp_out = Linear(hidden, channels, rng, dtype=dtype)
        self.se_reduce = Linear(channels, squeezed, rng, dtype=dtype)
        self.se_expand = Linear(squeezed, channels, rng, dtype=dtype)
        size = config.window_M
        self._window = (size, 2 * size) if index % 2 == 0 else (2 * size, size)
        self._heads = config.n_heads
        self._head_dim = config.head_dim

    @property
    def window(self):
        return self._window

    def forward(self, x):
        tokens = self.norm1(window_partition(x, self._window))
        attended, _ = multi_head_attention(
            self.q_proj(tokens), self.k_proj(tokens), self.v_proj(tokens), self._heads, self._head_dim,
        )
        x = x + window_partition(self.out_proj(attended), self._window, inverse=True, image_shape=x.shape)

        hidden = self.mlp_out(te.gelu(self.mlp_in(self.norm2(_to_tokens(x)))))
        excite = te.sigmoid(self.se_expand(te.gelu(self.se_reduce(te.mean(hidden, axis=1)))))
        batch, _, channels = hidden.shape
        gated = hidden * te.broadcast_to(te.reshape(excite, (batch, 1, channels)), hidden.shape)
        return x + _from_tokens(gated, x.shape)


class StageUnit(Module):
    def __init__(self, config, stage_index, block_index, rng, dtype=np.float64):
        self.backbone = BackboneBlock(config, block_index, rng, dtype)
        self.hdms = HdmsBlock(config, rng, dtype) if config.ablation.use_hdms else None
        self.fpp = FppUnit(config, rng, dtype) if config.hosts_fpp(stage_index, block_index) else None

    def forward(self, x):
        x = self.backbone(x)
        if self.hdms is not None:
            x = self.hdms(x)
        if self.fpp is not None:
            x = self.fpp(x)
        return x


class ResidualTransformerLayer(Module):
    def __init__(self, config, stage_index, rng, dtype=np.float64):
        self.units = ModuleList(
            [StageUnit(config, stage_index, b, rng, dtype) for b in range(config.blocks_per_rtl)],
            label='block',
        )
        self.conv = Conv2d(config.embed_channels, config.embed_channels, 3, rng, dtype=dtype)

    def forward(self, x):
        y = x
        for unit in self.units:
            y = unit(y)
        return x + self.conv(y)


# ==================== MODEL ====================
class HdstModel(Module):
    def __init__(self, config):
        if not isinstance(config, ModelConfig):
            raise ConfigError('HdstModel needs a ModelConfig')
        rng = np.random.Generator(np.random.Philox(key=config.seed))
        dtype = config.np_dtype
        channels = config.embed_channels
        self.head = Conv2d(config.bands, channels, 3, rng, dtype=dtype)
        self.reference_aspp = (
            AsppBlock(channels, config.aspp_reference_dilations, rng, pooling=True, dtype=dtype)
            if config.use_reference_aspp else None
        )
        self.stages = ModuleList(
            [ResidualTransformerLayer(config, s, rng, dtype) for s in range(config.n_rtl)], label='rtl',
        )
        self.body = Conv2d(channels, channels, 3, rng, dtype=dtype)
        self.tail = Conv2d(channels, config.bands, 3, rng, dtype=dtype)
        self._config = config
        self.assign_names()

    @property
    def config(self):
        return self._config

    def forward(self, cube):
        config = self._config
        x = cube if isinstance(cube, te.Tensor) else te.Tensor(cube)
        if x.dtype != config.np_dtype:
            x = te.Tensor(x.data.astype(config.np_dtype))
        if x.ndim != 4 or x.shape[1] != config.bands:
            raise ShapeError(f'hdst: expected [B,{config.bands},H,W] input, got {x.shape}')
        height, width = x.shape[2], x.shape[3]
        pad_h = -height % config.pad_multiple
        pad_w = -width % config.pad_multiple
        if pad_h or pad_w:
            x = te.Tensor(np.pad(x.data, ((0, 0), (0, 0), (0, pad_h), (0, pad_w)), mode='reflect'))

        features = self.head(x)
        if self.reference_aspp is not None:
            features = features + self.reference_aspp(features)
        deep = features
        for stage in self.stages:
            deep = stage(deep)
        deep = features + self.body(deep)
        out = x + self.tail(deep)
        if pad_h or pad_w:
            out = te.take(te.take(out, 2, 0, height), 3, 0, width)
        return out


def hdst_forward(cube, model):
    return model(cube)


# ==================== ACCOUNTING ====================
COMPONENTS = ('reference_aspp', 'backbone', 'hdms', 'fsgf', 'fsca', 'fusion')


def component_of(name):
    parts = name.split('.')
    for part in parts:
        if part in COMPONENTS:
            return part
    if parts[0].startswith('rtl') and len(parts) > 1 and parts[1] == 'conv':
        return 'stage_conv'
    return parts[0]


def count_params(model):
    by_module = {}
    total = 0
    for name, param in model.named_parameters():
        key = component_of(name)
        by_module[key] = by_module.get(key, 0) + param.size
        total += param.size
    return {'total': total, 'by_module': by_module}


def estimate_macs(model, height, width, batch=1):
    """Multiply-accumulates of one forward pass, traced at the given size."""
    config = model.config
    cube = te.Tensor(np.zeros((batch, config.bands, height, width), dtype=config.np_dtype))
    with te.MacCounter() as counter:
        model(cube)
    return {'total': counter.total, 'by_op': dict(counter.by_op)}
