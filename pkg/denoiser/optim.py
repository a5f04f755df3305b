from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, ShapeError


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: dict = field(default_factory=dict)
    second_moment: dict = field(default_factory=dict)


def adam_step(params, grads, state):
    """
    One bias-corrected Adam update, in place.

    ``grads`` maps parameter names to gradient arrays; the learning rate is
    read from ``state.lr`` so a schedule can change it between steps.
    """
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for param in params:
        grad = np.asarray(grads[param.name])
        if grad.shape != param.shape:
            raise ShapeError(f'adam_step: gradient for {param.name} has shape {grad.shape}, expected {param.shape}')
        first = state.first_moment.setdefault(param.name, np.zeros(param.shape, dtype=np.float64))
        second = state.second_moment.setdefault(param.name, np.zeros(param.shape, dtype=np.float64))
        if first.shape != param.shape or second.shape != param.shape:
            raise ShapeError(f'adam_step: moment buffers for {param.name} do not match {param.shape}')
        first *= state.beta1
        first += (1.0 - state.beta1) * grad
        second *= state.beta2
        second += (1.0 - state.beta2) * grad * grad
        update = (first / correction1) / (np.sqrt(second / correction2) + state.eps)
        param.data -= (state.lr * update).astype(param.data.dtype)
    return params, state


@dataclass(frozen=True)
class LrSchedule:
    """Piecewise-constant learning rate given as (start epoch, lr) breakpoints."""

    breakpoints: tuple

    def __post_init__(self):
        points = tuple((int(epoch), float(lr)) for epoch, lr in self.breakpoints)
        if not points:
            raise ConfigError('learning-rate schedule is empty')
        if points[0][0] != 0:
            raise ConfigError('learning-rate schedule must start at epoch 0')
        epochs = [epoch for epoch, _ in points]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ConfigError('learning-rate breakpoints must be strictly increasing in epoch')
        if any(lr < 0 for _, lr in points):
            raise ConfigError('learning rates must be non-negative')
        object.__setattr__(self, 'breakpoints', points)

    @classmethod
    def parse(cls, value, presets=None):
        if isinstance(value, str):
            presets = presets or {}
            if value not in presets:
                raise ConfigError(f'unknown learning-rate schedule "{value}"')
            value = presets[value]
        if isinstance(value, (int, float)):
            value = [[0, value]]
        return cls(tuple(tuple(point) for point in value))

    def lr_at(self, epoch):
        current = self.breakpoints[0][1]
        for start, lr in self.breakpoints:
            if epoch < start:
                break
            current = lr
        return current

    def as_list(self):
        return [[epoch, lr] for epoch, lr in self.breakpoints]
