"""
Dense-tensor numerics with reverse-mode gradients.

Primitives compute on numpy arrays. While a ``GradTape`` is active and one of
the inputs requires gradients, each primitive appends a record holding a
closure that maps the output gradient to input gradients; ``backward`` replays
the records in reverse order.
"""
import math
import threading
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy import special

from .exceptions import NonFiniteError, ShapeError

DEFAULT_DTYPE = np.float64

_local = threading.local()


def _stack(name):
    stack = getattr(_local, name, None)
    if stack is None:
        stack = []
        setattr(_local, name, stack)
    return stack


# ==================== TYPES ====================
class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None):
        if dtype is None:
            source = np.asarray(data)
            dtype = source.dtype if np.issubdtype(source.dtype, np.floating) else DEFAULT_DTYPE
        self.data = np.array(data, dtype=dtype)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._recorded = False

    @classmethod
    def _wrap(cls, array, requires_grad=False):
        out = cls.__new__(cls)
        out.data = array
        out.requires_grad = requires_grad
        out.grad = None
        out._recorded = False
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f'Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})'

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return shift(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return shift(self, -other)

    def __rsub__(self, other):
        return shift(scale(self, -1.0), other)

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            if other.size == 1 and self.size != 1:
                return scale(self, other)
            if self.size == 1 and other.size != 1:
                return scale(other, self)
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return scale(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)


class Parameter(Tensor):
    def __init__(self, data, name=None, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self):
        return f'Parameter({self.name!r}, shape={self.shape})'


@dataclass
class ComplexTensor:
    real: Tensor
    imag: Tensor

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ShapeError(
                f'complex tensor planes differ: real {self.real.shape} vs imag {self.imag.shape}'
            )

    @property
    def shape(self):
        return self.real.shape

    def to_numpy(self):
        return self.real.data + 1j * self.imag.data


@dataclass
class _Record:
    op: str
    output: Tensor
    inputs: tuple
    backward: object


class GradTape:
    """Ordered record of the primitives executed while the tape is active."""

    def __init__(self):
        self.records = []

    def __enter__(self):
        _stack('tapes').append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _stack('tapes').pop()
        return False

    def __len__(self):
        return len(self.records)

    def reset(self):
        self.records.clear()


class MacCounter:
    """Accumulates multiply-accumulate counts reported by primitives."""

    def __init__(self):
        self.total = 0
        self.by_op = Counter()

    def __enter__(self):
        _stack('counters').append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _stack('counters').pop()
        return False

    def add(self, op, count):
        self.total += int(count)
        self.by_op[op] += int(count)


def tensor(data, requires_grad=False, dtype=None):
    return Tensor(data, requires_grad=requires_grad, dtype=dtype)


def as_tensor(value, dtype=None):
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=dtype)


def _emit(op, array, inputs, backward_fn):
    tapes = _stack('tapes')
    tape = tapes[-1] if tapes else None
    requires = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor._wrap(array, requires_grad=requires)
    if requires:
        out._recorded = True
        tape.records.append(_Record(op, out, tuple(inputs), backward_fn))
    return out


def _count_macs(op, count):
    counters = _stack('counters')
    if counters:
        counters[-1].add(op, count)


def _require_same_shape(a, b, op):
    if a.shape != b.shape:
        raise ShapeError(f'{op}: operand shapes differ, {a.shape} vs {b.shape}')


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ==================== POINTWISE ====================
def add(a, b):
    _require_same_shape(a, b, 'add')
    return _emit('add', a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    _require_same_shape(a, b, 'sub')
    return _emit('sub', a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    _require_same_shape(a, b, 'mul')
    return _emit('mul', a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def shift(x, constant):
    return _emit('shift', x.data + x.data.dtype.type(constant), (x,), lambda g: (g,))


def scale(x, factor):
    """Multiply by a Python number or by a single-element tensor."""
    if isinstance(factor, Tensor):
        if factor.size != 1:
            raise ShapeError(f'scale: factor must hold one element, got shape {factor.shape}')
        value = factor.data.reshape(())

        def backward(g):
            return g * value, np.sum(g * x.data).reshape(factor.shape)

        return _emit('scale', x.data * value, (x, factor), backward)
    value = x.data.dtype.type(factor)
    return _emit('scale', x.data * value, (x,), lambda g: (g * value,))


def sigmoid(x):
    out = special.expit(x.data)
    return _emit('sigmoid', out, (x,), lambda g: (g * out * (1.0 - out),))


_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu(x):
    """Exact GELU, x·Φ(x) with the Gaussian CDF."""
    cdf = special.ndtr(x.data)
    out = x.data * cdf

    def backward(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        return (g * (cdf + x.data * pdf),)

    return _emit('gelu', out, (x,), backward)


def pointwise(x, kind, other=None):
    if kind == 'sigmoid':
        return sigmoid(x)
    if kind == 'gelu':
        return gelu(x)
    if kind == 'mul':
        return mul(x, other)
    if kind == 'add':
        return add(x, other)
    if kind == 'scale':
        return scale(x, other)
    raise ValueError(f'unknown pointwise kind "{kind}"')


def softmax(x, axis=-1):
    axis = _normalize_axis(axis, x.ndim, 'softmax')
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    exps = np.exp(shifted)
    out = exps / np.sum(exps, axis=axis, keepdims=True)

    def backward(g):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - inner),)

    return _emit('softmax', out, (x,), backward)


def _normalize_axis(axis, ndim, op):
    if not -ndim <= axis < ndim:
        raise ShapeError(f'{op}: axis {axis} out of range for {ndim}-D input')
    return axis % ndim


# ==================== SHAPE ====================
def reshape(x, shape):
    original = x.shape
    return _emit('reshape', x.data.reshape(shape), (x,), lambda g: (g.reshape(original),))


def transpose(x, axes):
    inverse = np.argsort(axes)
    return _emit(
        'transpose', np.ascontiguousarray(np.transpose(x.data, axes)), (x,),
        lambda g: (np.transpose(g, inverse),),
    )


def concat(tensors, axis):
    axis = _normalize_axis(axis, tensors[0].ndim, 'concat')
    sizes = [t.shape[axis] for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    bounds = np.cumsum(sizes)[:-1]
    return _emit('concat', out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)))


def take(x, axis, start, stop):
    """Contiguous slice ``[start:stop]`` along ``axis``."""
    axis = _normalize_axis(axis, x.ndim, 'take')
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def backward(g):
        grad = np.zeros_like(x.data)
        grad[index] = g
        return (grad,)

    return _emit('take', x.data[index].copy(), (x,), backward)


def broadcast_to(x, shape):
    original = x.shape
    out = np.array(np.broadcast_to(x.data, shape))
    return _emit('broadcast_to', out, (x,), lambda g: (_unbroadcast(g, original),))


def tensor_sum(x, axis=None, keepdims=False):
    out = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.array(np.broadcast_to(g, x.shape)),)

    return _emit('sum', np.asarray(out), (x,), backward)


def mean(x, axis=None, keepdims=False):
    count = x.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(tensor_sum(x, axis=axis, keepdims=keepdims), 1.0 / count)


# ==================== LINEAR ALGEBRA ====================
def matmul(a, b):
    if a.ndim < 2 or a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f'matmul: incompatible batch shapes {a.shape} and {b.shape}')
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f'matmul: inner dimensions differ, {a.shape[-1]} vs {b.shape[-2]}')
    out = np.matmul(a.data, b.data)
    _count_macs('matmul', out.size * a.shape[-1])

    def backward(g):
        return np.matmul(g, np.swapaxes(b.data, -1, -2)), np.matmul(np.swapaxes(a.data, -1, -2), g)

    return _emit('matmul', out, (a, b), backward)


def linear(x, weight, bias=None):
    """``x @ weight.T (+ bias)`` over the last axis of ``x``."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(
            f'linear: input features {x.shape[-1]} do not match weight {weight.shape}'
        )
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeError(f'linear: bias shape {bias.shape} != ({weight.shape[0]},)')
    out = np.matmul(x.data, weight.data.T)
    if bias is not None:
        out = out + bias.data
    rows = x.size // x.shape[-1]
    _count_macs('linear', rows * weight.size)

    def backward(g):
        flat_g = g.reshape(-1, weight.shape[0])
        flat_x = x.data.reshape(-1, weight.shape[1])
        grads = (np.matmul(g, weight.data), flat_g.T @ flat_x)
        if bias is not None:
            grads += (flat_g.sum(axis=0),)
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _emit('linear', out, inputs, backward)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalise over the last axis, then apply the affine ``gamma``/``beta``."""
    features = x.shape[-1]
    if gamma.shape != (features,) or beta.shape != (features,):
        raise ShapeError(f'layer_norm: affine parameters must have shape ({features},)')
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    normed = centered * inv_std
    out = normed * gamma.data + beta.data

    def backward(g):
        g_normed = g * gamma.data
        grad_x = inv_std * (
            g_normed
            - g_normed.mean(axis=-1, keepdims=True)
            - normed * (g_normed * normed).mean(axis=-1, keepdims=True)
        )
        flat_g = g.reshape(-1, features)
        return grad_x, (flat_g * normed.reshape(-1, features)).sum(axis=0), flat_g.sum(axis=0)

    return _emit('layer_norm', out, (x, gamma, beta), backward)


# ==================== CONVOLUTION ====================
def same_padding(kernel, dilation):
    total = (kernel - 1) * dilation
    return total // 2, total - total // 2


def conv2d(x, weight, bias=None, dilation=1, groups=1):
    """
    Dilated 2-D cross-correlation with zero "same" padding.

    x is [B, Cin, H, W], weight is [Cout, Cin/groups, kh, kw]; the output keeps
    the spatial size of the input.
    """
    if dilation < 1:
        raise ValueError(f'conv2d: dilation must be >= 1, got {dilation}')
    if groups < 1:
        raise ValueError(f'conv2d: groups must be >= 1, got {groups}')
    if x.ndim != 4:
        raise ShapeError(f'conv2d: input must be 4-D [B,C,H,W], got shape {x.shape}')
    if weight.ndim != 4:
        raise ShapeError(f'conv2d: weight must be 4-D [Cout,Cin/groups,kh,kw], got {weight.shape}')
    batch, cin, height, width = x.shape
    cout, cin_group, kh, kw = weight.shape
    if cin % groups:
        raise ShapeError(f'conv2d: input channels (dim 1) = {cin} not divisible by groups = {groups}')
    if cin // groups != cin_group:
        raise ShapeError(
            f'conv2d: input channels (dim 1) = {cin} but weight expects '
            f'{cin_group} per group x {groups} groups'
        )
    if cout % groups:
        raise ShapeError(f'conv2d: output channels (weight dim 0) = {cout} not divisible by groups = {groups}')
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f'conv2d: bias shape {bias.shape} != ({cout},)')

    top, bottom = same_padding(kh, dilation)
    left, right = same_padding(kw, dilation)
    padded = np.pad(x.data, ((0, 0), (0, 0), (top, bottom), (left, right)))
    cols = np.empty((batch, cin, kh, kw, height, width), dtype=x.data.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, i, j] = padded[:, :, i * dilation:i * dilation + height, j * dilation:j * dilation + width]

    taps = cin_group * kh * kw
    if groups == 1:
        flat_cols = cols.reshape(batch, taps, height * width)
        flat_w = weight.data.reshape(cout, taps)
        out = np.matmul(flat_w, flat_cols).reshape(batch, cout, height, width)
    else:
        grouped_cols = cols.reshape(batch, groups, cin_group, kh, kw, height, width)
        grouped_w = weight.data.reshape(groups, cout // groups, cin_group, kh, kw)
        out = np.einsum('bgcijyx,gocij->bgoyx', grouped_cols, grouped_w).reshape(batch, cout, height, width)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1)
    _count_macs('conv2d', batch * cout * height * width * taps)

    def backward(g):
        if groups == 1:
            flat_g = g.reshape(batch, cout, height * width)
            grad_w = np.matmul(flat_g, np.swapaxes(flat_cols, 1, 2)).sum(axis=0).reshape(weight.shape)
            grad_cols = np.matmul(flat_w.T, flat_g).reshape(cols.shape)
        else:
            grouped_g = g.reshape(batch, groups, cout // groups, height, width)
            grad_w = np.einsum('bgoyx,bgcijyx->gocij', grouped_g, grouped_cols).reshape(weight.shape)
            grad_cols = np.einsum('bgoyx,gocij->bgcijyx', grouped_g, grouped_w).reshape(cols.shape)
        grad_padded = np.zeros_like(padded)
        for i in range(kh):
            for j in range(kw):
                grad_padded[:, :, i * dilation:i * dilation + height, j * dilation:j * dilation + width] += grad_cols[:, :, i, j]
        grads = (grad_padded[:, :, top:top + height, left:left + width], grad_w)
        if bias is not None:
            grads += (g.sum(axis=(0, 2, 3)),)
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _emit('conv2d', out, inputs, backward)


# ==================== SPECTRAL ====================
def _fft_macs(shape):
    planes = int(np.prod(shape[:-2]))
    points = shape[-2] * shape[-1]
    return 2 * planes * points * max(1, math.ceil(math.log2(points)))


def spectral_transform(x, direction='forward'):
    """
    Orthonormal 2-D DFT over the last two axes.

    ``forward`` takes a real Tensor and returns a ComplexTensor; ``inverse``
    takes a ComplexTensor and returns the real part of its inverse transform.
    Both directions scale by 1/sqrt(H*W), so the pair is unitary.
    """
    if direction == 'forward':
        if not isinstance(x, Tensor):
            raise TypeError('spectral_transform(forward) expects a Tensor')
        if x.ndim < 2 or x.shape[-1] < 1 or x.shape[-2] < 1:
            raise ShapeError(f'spectral_transform: need at least 2-D input, got {x.shape}')
        if not np.all(np.isfinite(x.data)):
            raise NonFiniteError('spectral_transform')
        spectrum = np.fft.fft2(x.data, norm='ortho')
        _count_macs('fft', _fft_macs(x.shape))
        dtype = x.data.dtype
        real = _emit(
            'fft_real', spectrum.real.astype(dtype), (x,),
            lambda g: (np.fft.ifft2(g, norm='ortho').real.astype(dtype),),
        )
        imag = _emit(
            'fft_imag', spectrum.imag.astype(dtype), (x,),
            lambda g: ((-np.fft.ifft2(g, norm='ortho').imag).astype(dtype),),
        )
        return ComplexTensor(real, imag)

    if direction == 'inverse':
        if not isinstance(x, ComplexTensor):
            raise TypeError('spectral_transform(inverse) expects a ComplexTensor')
        if not (np.all(np.isfinite(x.real.data)) and np.all(np.isfinite(x.imag.data))):
            raise NonFiniteError('spectral_transform')
        dtype = x.real.data.dtype
        signal = np.fft.ifft2(x.to_numpy(), norm='ortho')
        _count_macs('fft', _fft_macs(x.shape))

        def backward(g):
            grad = np.fft.fft2(g, norm='ortho')
            return grad.real.astype(dtype), grad.imag.astype(dtype)

        return _emit('ifft', signal.real.astype(dtype), (x.real, x.imag), backward)

    raise ValueError(f'unknown transform direction "{direction}"')


def imaginary_residue(spectrum):
    """Largest imaginary magnitude left after inverting ``spectrum``."""
    return float(np.max(np.abs(np.fft.ifft2(spectrum.to_numpy(), norm='ortho').imag), initial=0.0))


# ==================== LOSS & GRADIENTS ====================
def mse_loss(prediction, target):
    diff = sub(prediction, as_tensor(target, dtype=prediction.dtype))
    return mean(mul(diff, diff))


def backward(loss, tape, parameters=None):
    """
    Replay ``tape`` in reverse from the scalar ``loss``.

    Gradients accumulate into ``.grad`` of every leaf tensor that requires
    them. Returns ``{name: grad}`` for ``parameters`` (or for every Parameter
    reached when omitted); parameters off the path get zero gradients.
    """
    if loss.size != 1:
        raise ShapeError(f'backward: loss must be a scalar, got shape {loss.shape}')
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    if not loss._recorded and loss.requires_grad:
        leaves[id(loss)] = loss
    for record in reversed(tape.records):
        grad_out = grads.pop(id(record.output), None)
        if grad_out is None:
            continue
        for source, grad in zip(record.inputs, record.backward(grad_out)):
            if grad is None or not source.requires_grad:
                continue
            key = id(source)
            grads[key] = grads[key] + grad if key in grads else grad
            if not source._recorded:
                leaves[key] = source

    for key, leaf in leaves.items():
        update = np.asarray(grads[key], dtype=leaf.data.dtype).reshape(leaf.shape)
        leaf.grad = update.copy() if leaf.grad is None else leaf.grad + update

    if parameters is None:
        parameters = [leaf for leaf in leaves.values() if isinstance(leaf, Parameter)]
    result = {}
    for index, param in enumerate(parameters):
        if param.grad is None:
            param.grad = np.zeros_like(param.data)
        result[param.name or f'param{index}'] = param.grad
    return result


def finite_diff_check(f, p, eps=1e-5, max_coords=None, seed=0):
    """
    Worst relative discrepancy between ``backward`` and central differences.

    ``f`` maps the parameter to a scalar Tensor. Each checked coordinate is
    perturbed by ±eps; the error uses max(|analytic|, |numeric|, 1e-8) as its
    denominator. ``max_coords`` limits the check to a seeded sample.
    """
    saved = p.grad
    p.grad = None
    with GradTape() as tape:
        loss = f(p)
    backward(loss, tape, [p])
    analytic = p.grad.reshape(-1).copy()
    p.grad = saved

    flat = p.data.reshape(-1)
    if not np.shares_memory(flat, p.data):
        raise ValueError('finite_diff_check needs a contiguous parameter buffer')
    indices = np.arange(flat.size)
    if max_coords is not None and max_coords < flat.size:
        rng = np.random.Generator(np.random.Philox(key=seed))
        indices = np.sort(rng.choice(flat.size, size=max_coords, replace=False))

    worst = 0.0
    for index in indices:
        original = flat[index]
        flat[index] = original + eps
        plus = float(np.sum(f(p).data))
        flat[index] = original - eps
        minus = float(np.sum(f(p).data))
        flat[index] = original
        numeric = (plus - minus) / (2.0 * eps)
        exact = float(analytic[index])
        worst = max(worst, abs(exact - numeric) / max(abs(exact), abs(numeric), 1e-8))
    return worst
