import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.template.loader import render_to_string

from . import tensor_engine as te
from .checkpoints import load_checkpoint, load_parameters, restore_model, save_checkpoint
from .choices import RunStatus, Variant
from .cubes import file_sha256, load_cube, save_cube
from .exceptions import ConfigError, NonFiniteError, ShapeError
from .hdst_net import VARIANT_FLAGS, HdstModel, count_params, estimate_macs
from .models import EpochLoss, EvaluationRecord, SynthesisRun, TrainingRun
from .noise_lab import NoiseSpec, apply_noise, crop_and_augment, philox, plan_noise
from .optim import OptimizerState, adam_step
from .quality_metrics import aggregate_reports, evaluate_pair, render_report_table

logger = logging.getLogger(__name__)

MANIFEST_FORMAT = 'hdst-synthesis/1'
MANIFEST_NAME = 'synthesis_manifest.json'


def _write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return path


# ==================== SYNTHESIS ====================
def synthesize(run_config):
    """Corrupt every ``data.clean_cubes`` entry; cube ``i`` uses ``noise.seed + i``."""
    clean_paths = run_config.data.clean_cubes
    if not clean_paths:
        raise ConfigError('nothing to synthesize', {'data.clean_cubes': ['list at least one clean cube']})
    last_seed = run_config.noise.seed + len(clean_paths) - 1
    if last_seed >= 2 ** 64:
        raise ConfigError(
            f'noise.seed {run_config.noise.seed} leaves no room for {len(clean_paths)} cubes',
            {'noise.seed': [f'cube seeds run up to {last_seed}; keep them below 2**64']},
        )
    run_config.require_files(data__clean_cubes=clean_paths)
    out_dir = run_config.out_dir
    manifest_path = out_dir / MANIFEST_NAME

    entries = []
    for index, clean_path in enumerate(clean_paths):
        spec = run_config.noise.replace(seed=run_config.noise.seed + index)
        clean = load_cube(clean_path)
        plan = plan_noise(clean.bands, spec)
        noisy_path = save_cube(
            apply_noise(clean, spec, plan), out_dir / f'{Path(clean_path).stem}_{spec.pattern}.hdc',
        )
        entries.append({
            'clean': str(clean_path),
            'clean_sha256': file_sha256(clean_path),
            'noisy': str(noisy_path),
            'noisy_sha256': file_sha256(noisy_path),
            'spec': spec.to_dict(),
            'plan': plan.to_dict(),
        })
        logger.info('synthesized %s (%s, seed %d)', noisy_path, spec.pattern, spec.seed)

    _write_json(manifest_path, {'format': MANIFEST_FORMAT, 'cubes': entries})
    SynthesisRun.objects.bulk_create([
        SynthesisRun(
            pattern=entry['spec']['pattern'],
            seed=entry['spec']['seed'],
            clean_path=entry['clean'],
            noisy_path=entry['noisy'],
            manifest_path=str(manifest_path),
            noisy_sha256=entry['noisy_sha256'],
        )
        for entry in entries
    ])
    return manifest_path, entries


def regenerate_from_manifest(manifest_path, out_dir):
    """
    Rebuild every noisy cube listed in a synthesis manifest into ``out_dir``.

    Returns ``(path, matches)`` pairs where ``matches`` compares the rebuilt
    file's digest with the recorded one.
    """
    manifest = json.loads(Path(manifest_path).read_text(encoding='utf-8'))
    if manifest.get('format') != MANIFEST_FORMAT:
        raise ConfigError(f'{manifest_path}: not a synthesis manifest')
    results = []
    for entry in manifest['cubes']:
        if file_sha256(entry['clean']) != entry['clean_sha256']:
            raise ConfigError(f'{entry["clean"]}: clean cube changed since synthesis')
        spec = NoiseSpec.from_dict(entry['spec'])
        clean = load_cube(entry['clean'])
        path = save_cube(apply_noise(clean, spec), Path(out_dir) / Path(entry['noisy']).name)
        results.append((path, file_sha256(path) == entry['noisy_sha256']))
    return results


# ==================== TRAINING ====================
@dataclass
class TrainingOutcome:
    run: TrainingRun
    checkpoint: Path
    loss_log: Path
    losses: list = field(default_factory=list)
    steps: int = 0

    @property
    def initial_loss(self):
        return self.losses[0] if self.losses else None

    @property
    def final_loss(self):
        return self.losses[-1] if self.losses else None


def _training_pairs(run_config):
    data = run_config.data
    config = run_config.model
    if not data.clean_cubes or not data.noisy_cubes:
        raise ConfigError('training needs paired cubes', {'data': ['set both clean_cubes and noisy_cubes']})
    run_config.require_files(data__clean_cubes=data.clean_cubes, data__noisy_cubes=data.noisy_cubes)
    pairs = []
    for index, (noisy_path, clean_path) in enumerate(zip(data.noisy_cubes, data.clean_cubes)):
        noisy, clean = load_cube(noisy_path), load_cube(clean_path)
        if noisy.shape != clean.shape:
            raise ShapeError(f'{noisy_path} has shape {noisy.shape}, {clean_path} has {clean.shape}')
        if clean.bands != config.bands:
            raise ShapeError(f'{clean_path} has {clean.bands} bands, the model expects {config.bands}')
        patches = crop_and_augment(
            clean, data.patch_size, data.stride, data.augment,
            seed=run_config.train.seed + index, cube_index=index, scales=data.scales,
        )
        pairs.append((noisy.data, clean.data, patches))
    return pairs


def _batch(pairs, samples, dtype):
    noisy = np.stack([pairs[i][2].extract(pairs[i][0], d) for i, d in samples]).astype(dtype)
    clean = np.stack([pairs[i][2].extract(pairs[i][1], d) for i, d in samples]).astype(dtype)
    return te.Tensor(noisy), te.Tensor(clean)


def _variant_of(config):
    for name, flags in VARIANT_FLAGS.items():
        if flags == config.ablation:
            return name
    return Variant.HDST


def _trim_loss_log(path, epochs):
    """Keep the header and the rows of epochs before ``epochs``; later rows are re-run."""
    with open(path, newline='', encoding='utf-8') as handle:
        rows = list(csv.reader(handle))
    kept = rows[:1] + [row for row in rows[1:] if row and int(row[0]) < epochs]
    with open(path, 'w', newline='', encoding='utf-8') as handle:
        csv.writer(handle, lineterminator='\n').writerows(kept)


def train(run_config):
    """
    Minimise the mean squared error between the model output on noisy
    patches and the clean patches with Adam under the configured schedule.

    The sample order of epoch ``e`` is drawn from ``Philox(train.seed)``
    jumped ``e + 1`` times, so a resumed run repeats the trajectory of an
    uninterrupted one.
    """
    settings = run_config.train
    config = run_config.model
    pairs = _training_pairs(run_config)
    samples = [(index, d) for index, (_, _, patches) in enumerate(pairs) for d in patches]

    model = HdstModel(config)
    params = model.parameters()
    state = OptimizerState(lr=settings.schedule.lr_at(0))
    start_epoch = 0
    if settings.resume and settings.checkpoint.exists():
        checkpoint = load_checkpoint(settings.checkpoint)
        if checkpoint.config != config:
            raise ConfigError(f'{settings.checkpoint} was trained with a different model configuration')
        load_parameters(model, checkpoint.params)
        state = checkpoint.optimizer or state
        start_epoch = checkpoint.epoch
        logger.info('resuming from %s at epoch %d', settings.checkpoint, start_epoch)

    run = TrainingRun.objects.create(
        variant=_variant_of(config),
        seed=settings.seed,
        config=run_config.raw,
        checkpoint_path=str(settings.checkpoint),
    )
    outcome = TrainingOutcome(run=run, checkpoint=settings.checkpoint, loss_log=settings.loss_log)
    settings.loss_log.parent.mkdir(parents=True, exist_ok=True)
    appending = start_epoch > 0 and settings.loss_log.exists()
    if appending:
        _trim_loss_log(settings.loss_log, start_epoch)

    with open(settings.loss_log, 'a' if appending else 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        if not appending:
            writer.writerow(['epoch', 'lr', 'loss'])
        try:
            for epoch in range(start_epoch, settings.epochs):
                state.lr = settings.schedule.lr_at(epoch)
                order = philox(settings.seed, epoch + 1).permutation(len(samples))
                batch_losses = []
                for start in range(0, len(order), settings.batch_size):
                    noisy, clean = _batch(
                        pairs, [samples[k] for k in order[start:start + settings.batch_size]], config.np_dtype,
                    )
                    with te.GradTape() as tape:
                        loss = te.mse_loss(model(noisy), clean)
                    value = loss.item()
                    if not math.isfinite(value):
                        raise NonFiniteError('loss', f'loss became {value} at epoch {epoch}, step {state.step + 1}')
                    adam_step(params, te.backward(loss, tape, params), state)
                    for param in params:
                        param.zero_grad()
                    batch_losses.append(value)
                    outcome.steps += 1

                epoch_loss = float(np.mean(batch_losses))
                outcome.losses.append(epoch_loss)
                writer.writerow([epoch, state.lr, epoch_loss])
                EpochLoss.objects.create(run=run, epoch=epoch, lr=state.lr, loss=epoch_loss)
                logger.info('epoch %d/%d lr %.3g loss %.6g', epoch + 1, settings.epochs, state.lr, epoch_loss)
                if (epoch + 1) % settings.checkpoint_every == 0 or epoch + 1 == settings.epochs:
                    save_checkpoint(settings.checkpoint, model, state, epoch + 1)
        except NonFiniteError as exc:
            run.status = RunStatus.ABORTED
            run.abort_reason = str(exc)
            run.steps = outcome.steps
            run.epochs_completed = start_epoch + len(outcome.losses)
            run.save()
            logger.warning('training aborted: %s; last good checkpoint kept at %s', exc, settings.checkpoint)
            raise

    if start_epoch >= settings.epochs:
        save_checkpoint(settings.checkpoint, model, state, start_epoch)
    run.status = RunStatus.COMPLETED
    run.initial_loss = outcome.initial_loss
    run.final_loss = outcome.final_loss
    run.steps = outcome.steps
    run.epochs_completed = max(start_epoch, settings.epochs)
    run.save()
    return outcome


# ==================== DENOISING ====================
def tile_starts(extent, tile, overlap):
    if tile >= extent:
        return [0]
    starts = list(range(0, extent - tile, tile - overlap))
    starts.append(extent - tile)
    return starts


def denoise_array(model, data, tile_size=0, overlap=0):
    """
    Run ``model`` over a [bands, H, W] array. Tiles of ``tile_size`` overlap by
    ``overlap`` pixels and are blended by uniform averaging; ``tile_size`` 0
    (or at least the cube size) runs one pass.
    """
    bands, height, width = data.shape
    dtype = model.config.np_dtype
    if bands != model.config.bands:
        raise ShapeError(f'the checkpoint expects {model.config.bands} bands, the cube has {bands}')
    if not tile_size or (tile_size >= height and tile_size >= width):
        return model(te.Tensor(data.astype(dtype)[np.newaxis])).data[0]

    tile_h, tile_w = min(tile_size, height), min(tile_size, width)
    total = np.zeros((bands, height, width), dtype=np.float64)
    counts = np.zeros((1, height, width), dtype=np.float64)
    for y in tile_starts(height, tile_h, overlap):
        for x in tile_starts(width, tile_w, overlap):
            window = data[:, y:y + tile_h, x:x + tile_w].astype(dtype)[np.newaxis]
            total[:, y:y + tile_h, x:x + tile_w] += model(te.Tensor(window)).data[0]
            counts[:, y:y + tile_h, x:x + tile_w] += 1.0
    return total / counts


def denoise(run_config):
    settings = run_config.denoise
    if not settings.inputs:
        raise ConfigError('nothing to denoise', {'denoise.inputs': ['list at least one cube']})
    run_config.require_files(denoise__checkpoint=settings.checkpoint, denoise__inputs=settings.inputs)
    model = restore_model(load_checkpoint(settings.checkpoint))
    outputs = []
    for path in settings.inputs:
        cube = load_cube(path)
        restored = denoise_array(model, cube.data, settings.tile_size, settings.overlap)
        target = save_cube(cube.with_data(restored.astype(np.float32)), run_config.out_dir / f'{Path(path).stem}_denoised.hdc')
        logger.info('denoised %s -> %s', path, target)
        outputs.append(target)
    return outputs


# ==================== EVALUATION ====================
@dataclass
class EvaluationOutcome:
    json_path: Path
    text_path: Path
    reports: list
    aggregate: dict
    table: str


def evaluate(run_config):
    settings = run_config.eval
    if not settings.denoised:
        raise ConfigError('nothing to evaluate', {'eval.denoised': ['list at least one denoised cube']})
    run_config.require_files(eval__denoised=settings.denoised, eval__reference=settings.reference)

    rows = []
    pairs = []
    for denoised_path, reference_path in zip(settings.denoised, settings.reference):
        report = evaluate_pair(load_cube(denoised_path), load_cube(reference_path), settings.peak)
        label = Path(denoised_path).stem
        rows.append((label, report))
        pairs.append({
            'label': label,
            'denoised': str(denoised_path),
            'reference': str(reference_path),
            **report.to_dict(),
        })
        EvaluationRecord.objects.create(
            label=label,
            denoised_path=str(denoised_path),
            reference_path=str(reference_path),
            mean_psnr=report.mean_psnr,
            mean_ssim=report.mean_ssim,
            mean_sam=report.mean_sam,
            data_peak=report.data_peak,
        )

    aggregate = aggregate_reports([report for _, report in rows])
    json_path = _write_json(settings.report.with_suffix('.json'), {'pairs': pairs, 'aggregate': aggregate})
    table = render_report_table(rows, aggregate)
    text_path = settings.report.with_suffix('.txt')
    text_path.write_text(table, encoding='utf-8')
    return EvaluationOutcome(json_path, text_path, [report for _, report in rows], aggregate, table)


# ==================== INSPECTION ====================
def _percent(value, base):
    return f'{100.0 * (value - base) / base:+.1f}%' if base else 'n/a'


def inspect_variants(config, variants, height, width):
    """Parameter and multiply-accumulate counts per ablation variant."""
    rows = []
    for name in variants:
        model = HdstModel(config.for_variant(name))
        rows.append({
            'variant': name,
            'flags': VARIANT_FLAGS[name],
            'params': count_params(model)['total'],
            'macs': estimate_macs(model, height, width)['total'],
        })
    base = next((row for row in rows if row['variant'] == Variant.BASELINE), rows[0])
    for row in rows:
        row['params_delta'] = _percent(row['params'], base['params'])
        row['macs_delta'] = _percent(row['macs'], base['macs'])
    return rows


def render_inspect_table(config, rows, height, width):
    def on(flag):
        return 'yes' if flag else 'no'

    header = (
        f'{"variant":<8}  {"freq":>4}  {"fusion":>6}  {"hdms":>4}  '
        f'{"params":>12}  {"d params":>9}  {"MACs":>16}  {"d MACs":>9}'
    )
    lines = [
        f'{Variant(row["variant"]).label:<8}  {on(row["flags"].use_frequency):>4}  '
        f'{on(row["flags"].use_dynamic_fusion):>6}  {on(row["flags"].use_hdms):>4}  '
        f'{row["params"]:>12,}  {row["params_delta"]:>9}  {row["macs"]:>16,}  {row["macs_delta"]:>9}'
        for row in rows
    ]
    return render_to_string('denoiser/inspect_table.txt', {
        'bands': config.bands,
        'height': height,
        'width': width,
        'embed': config.embed_channels,
        'n_rtl': config.n_rtl,
        'blocks': config.blocks_per_rtl,
        'placement': config.fpp_placement,
        'fpp_depth': config.fpp_depth,
        'header': header,
        'rule': '-' * len(header),
        'rows': lines,
    })
