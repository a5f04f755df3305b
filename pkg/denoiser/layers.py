import numpy as np

from . import tensor_engine as te


class Module:
    """Container that walks its attributes to find parameters and sub-modules."""

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def named_parameters(self, prefix=''):
        for name, value in vars(self).items():
            if name.startswith('_'):
                continue
            if isinstance(value, te.Parameter):
                yield f'{prefix}{name}', value
            elif isinstance(value, ModuleList):
                yield from value.named_parameters(prefix)
            elif isinstance(value, Module):
                yield from value.named_parameters(f'{prefix}{name}.')

    def parameters(self):
        return [param for _, param in self.named_parameters()]

    def assign_names(self):
        seen = set()
        for name, param in self.named_parameters():
            if name in seen:
                raise ValueError(f'duplicate parameter name "{name}"')
            seen.add(name)
            param.name = name
        return self


class ModuleList(Module):
    """Ordered modules named ``<label><index>`` in parameter paths."""

    def __init__(self, modules, label):
        self._items = list(modules)
        self._label = label

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, index):
        return self._items[index]

    def named_parameters(self, prefix=''):
        for index, module in enumerate(self._items):
            yield from module.named_parameters(f'{prefix}{self._label}{index}.')


def uniform_init(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv2d(Module):
    def __init__(self, in_channels, out_channels, kernel_size, rng, dilation=1, groups=1, bias=True, dtype=np.float64):
        fan_in = (in_channels // groups) * kernel_size * kernel_size
        shape = (out_channels, in_channels // groups, kernel_size, kernel_size)
        self.weight = te.Parameter(uniform_init(rng, shape, fan_in, dtype))
        self.bias = te.Parameter(np.zeros(out_channels, dtype=dtype)) if bias else None
        self._dilation = dilation
        self._groups = groups

    @property
    def dilation(self):
        return self._dilation

    def forward(self, x):
        return te.conv2d(x, self.weight, self.bias, dilation=self._dilation, groups=self._groups)


class Linear(Module):
    def __init__(self, in_features, out_features, rng, bias=True, dtype=np.float64):
        self.weight = te.Parameter(uniform_init(rng, (out_features, in_features), in_features, dtype))
        self.bias = te.Parameter(np.zeros(out_features, dtype=dtype)) if bias else None

    def forward(self, x):
        return te.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, features, dtype=np.float64):
        self.gamma = te.Parameter(np.ones(features, dtype=dtype))
        self.beta = te.Parameter(np.zeros(features, dtype=dtype))

    def forward(self, x):
        return te.layer_norm(x, self.gamma, self.beta)
