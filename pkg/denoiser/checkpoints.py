"""
Model checkpoints: a text manifest of ``key = value`` lines plus a raw
little-endian scalar blob next to it (``<manifest>.bin``).

Manifest lines::

    format = hdst-checkpoint/1
    epoch = 12
    config.<field> = <json>
    optimizer.<field> = <json>
    tensor = <kind> <name> <dtype> <shape> <offset> <count>

``kind`` is ``param``, ``moment1`` or ``moment2``; offsets are in bytes.
"""
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import CheckpointError
from .hdst_net import HdstModel, ModelConfig
from .optim import OptimizerState

logger = logging.getLogger(__name__)

FORMAT = 'hdst-checkpoint/1'
TENSOR_KINDS = ('param', 'moment1', 'moment2')
OPTIMIZER_FIELDS = ('lr', 'beta1', 'beta2', 'eps', 'step')


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    optimizer: OptimizerState = None
    epoch: int = 0
    extra: dict = field(default_factory=dict)


def blob_path(path):
    path = Path(path)
    return path.with_name(path.name + '.bin')


def _shape_text(shape):
    return 'x'.join(str(extent) for extent in shape) or 'scalar'


def _parse_shape(text):
    if text == 'scalar':
        return ()
    return tuple(int(extent) for extent in text.split('x'))


def _atomic_write(path, payload):
    tmp = path.with_name(path.name + '.tmp')
    with open(tmp, 'wb') as handle:
        handle.write(payload)
    os.replace(tmp, path)


def save_checkpoint(path, model, optimizer=None, epoch=0, extra=None):
    """Write manifest and blob; both replace any previous checkpoint atomically."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f'format = {FORMAT}', f'epoch = {int(epoch)}']
    for key, value in model.config.to_dict().items():
        lines.append(f'config.{key} = {json.dumps(value, sort_keys=True)}')
    for key, value in sorted((extra or {}).items()):
        lines.append(f'extra.{key} = {json.dumps(value, sort_keys=True)}')

    entries = [('param', name, param.data) for name, param in model.named_parameters()]
    if optimizer is not None:
        for key in OPTIMIZER_FIELDS:
            lines.append(f'optimizer.{key} = {json.dumps(getattr(optimizer, key))}')
        for name in sorted(optimizer.first_moment):
            entries.append(('moment1', name, optimizer.first_moment[name]))
            entries.append(('moment2', name, optimizer.second_moment[name]))

    chunks = []
    offset = 0
    for kind, name, array in entries:
        little = np.ascontiguousarray(array, dtype=array.dtype.newbyteorder('<'))
        raw = little.tobytes()
        lines.append(
            f'tensor = {kind} {name} {array.dtype.name} {_shape_text(array.shape)} {offset} {array.size}'
        )
        chunks.append(raw)
        offset += len(raw)

    _atomic_write(blob_path(path), b''.join(chunks))
    _atomic_write(path, ('\n'.join(lines) + '\n').encode('utf-8'))
    logger.debug('checkpoint written to %s (%d tensors, epoch %d)', path, len(entries), epoch)
    return path


def _parse_manifest(text, path):
    scalars = {}
    tensors = []
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition(' = ')
        if not sep:
            raise CheckpointError(f'{path}:{number}: expected "key = value"')
        if key == 'tensor':
            parts = value.split(' ')
            if len(parts) != 6 or parts[0] not in TENSOR_KINDS:
                raise CheckpointError(f'{path}:{number}: malformed tensor entry')
            kind, name, dtype, shape, offset, count = parts
            tensors.append((kind, name, np.dtype(dtype), _parse_shape(shape), int(offset), int(count)))
        else:
            scalars[key] = value
    if scalars.get('format') != FORMAT:
        raise CheckpointError(f'{path}: unsupported checkpoint format {scalars.get("format")!r}')
    return scalars, tensors


def load_checkpoint(path):
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
        blob = blob_path(path).read_bytes()
    except FileNotFoundError as exc:
        raise CheckpointError(f'checkpoint file missing: {exc.filename}') from exc
    scalars, tensors = _parse_manifest(text, path)

    def section(prefix):
        return {
            key[len(prefix):]: json.loads(value)
            for key, value in scalars.items() if key.startswith(prefix)
        }

    config = ModelConfig.from_dict(section('config.'))
    arrays = {kind: {} for kind in TENSOR_KINDS}
    for kind, name, dtype, shape, offset, count in tensors:
        little = dtype.newbyteorder('<')
        end = offset + count * little.itemsize
        if end > len(blob):
            raise CheckpointError(f'{path}: blob too short for tensor {name}')
        array = np.frombuffer(blob, dtype=little, count=count, offset=offset)
        arrays[kind][name] = array.astype(dtype).reshape(shape)

    optimizer = None
    optimizer_fields = section('optimizer.')
    if optimizer_fields:
        optimizer = OptimizerState(
            first_moment=arrays['moment1'], second_moment=arrays['moment2'], **optimizer_fields,
        )
    return Checkpoint(
        config=config,
        params=arrays['param'],
        optimizer=optimizer,
        epoch=int(scalars.get('epoch', 0)),
        extra=section('extra.'),
    )


def load_parameters(model, params):
    expected = dict(model.named_parameters())
    missing = sorted(set(expected) - set(params))
    unexpected = sorted(set(params) - set(expected))
    if missing or unexpected:
        raise CheckpointError(
            f'checkpoint does not match the model (missing: {missing[:3]}, unexpected: {unexpected[:3]})'
        )
    for name, param in expected.items():
        if params[name].shape != param.shape:
            raise CheckpointError(f'{name}: checkpoint shape {params[name].shape} != model shape {param.shape}')
        param.data[...] = params[name]
    return model


def restore_model(checkpoint):
    return load_parameters(HdstModel(checkpoint.config), checkpoint.params)
