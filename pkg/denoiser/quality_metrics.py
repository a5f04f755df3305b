"""PSNR, SSIM and SAM scoring of a denoised cube against its ground truth."""
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from django.conf import settings
from django.template.loader import render_to_string
from skimage.metrics import structural_similarity

from .cubes import HsiCube
from .exceptions import MetricError, ShapeError

PSNR_CAP_DB = 100.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5


def _array(cube):
    data = cube.data if isinstance(cube, HsiCube) else np.asarray(cube)
    if data.ndim != 3:
        raise ShapeError(f'expected a [bands, height, width] cube, got shape {data.shape}')
    return data.astype(np.float64)


def _pair(x, y):
    x, y = _array(x), _array(y)
    if x.shape != y.shape:
        raise ShapeError(f'cube shapes differ: {x.shape} vs {y.shape}')
    return x, y


def resolve_peak(y, peak=None):
    """``peak`` or, when omitted, the ground-truth maximum."""
    value = float(np.max(_array(y))) if peak is None else float(peak)
    if not value > 0 or not math.isfinite(value):
        raise MetricError(f'peak must be a positive finite number, got {value}')
    return value


def psnr_cap():
    return float(getattr(settings, 'HDST_PSNR_CAP_DB', PSNR_CAP_DB))


def psnr(x, y, peak=None):
    """Per-band PSNR in dB and its mean; identical bands report the cap."""
    x, y = _pair(x, y)
    peak = resolve_peak(y, peak)
    cap = psnr_cap()
    mse = np.mean((x - y) ** 2, axis=(1, 2))
    per_band = [
        cap if err == 0 else min(cap, 10.0 * math.log10(peak * peak / err))
        for err in mse.tolist()
    ]
    return per_band, float(np.mean(per_band))


def ssim(x, y, peak=None):
    x, y = _pair(x, y)
    peak = resolve_peak(y, peak)
    if min(x.shape[1:]) < SSIM_WINDOW:
        raise MetricError(f'SSIM needs bands of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {x.shape[1]}x{x.shape[2]}')
    per_band = [
        float(structural_similarity(
            xb, yb, data_range=peak, gaussian_weights=True, sigma=SSIM_SIGMA,
            use_sample_covariance=False, win_size=SSIM_WINDOW, K1=0.01, K2=0.03,
        ))
        for xb, yb in zip(x, y)
    ]
    return per_band, float(np.mean(per_band))


def sam(x, y):
    """
    Mean spectral angle in degrees over pixels where both spectra are nonzero.

    Returns ``(mean_degrees, skipped_pixels)``. The angle is evaluated as
    2·atan2(|u − v|, |u + v|) on unit spectra, which equals the clamped
    arccos of their inner product.
    """
    x, y = _pair(x, y)
    spectra_x = x.reshape(x.shape[0], -1).T
    spectra_y = y.reshape(y.shape[0], -1).T
    norm_x = np.linalg.norm(spectra_x, axis=1)
    norm_y = np.linalg.norm(spectra_y, axis=1)
    valid = (norm_x > 0) & (norm_y > 0)
    if not np.any(valid):
        raise MetricError('SAM is undefined: every pixel has a zero spectrum')
    unit_x = spectra_x[valid] / norm_x[valid, None]
    unit_y = spectra_y[valid] / norm_y[valid, None]
    angles = 2.0 * np.arctan2(
        np.linalg.norm(unit_x - unit_y, axis=1), np.linalg.norm(unit_x + unit_y, axis=1),
    )
    return float(np.degrees(np.mean(angles))), int(np.count_nonzero(~valid))


@dataclass(frozen=True)
class MetricReport:
    per_band_psnr: list
    per_band_ssim: list
    mean_psnr: float
    mean_ssim: float
    mean_sam: float
    data_peak: float
    sam_skipped: int = 0

    @property
    def bands(self):
        return len(self.per_band_psnr)

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + '\n'


def evaluate_pair(x, y, peak=None):
    """Score denoised ``x`` against ground truth ``y``."""
    peak = resolve_peak(y, peak)
    per_psnr, mean_psnr = psnr(x, y, peak)
    per_ssim, mean_ssim = ssim(x, y, peak)
    mean_sam, skipped = sam(x, y)
    return MetricReport(per_psnr, per_ssim, mean_psnr, mean_ssim, mean_sam, peak, skipped)


def aggregate_reports(reports):
    if not reports:
        raise MetricError('no reports to aggregate')
    return {
        'pairs': len(reports),
        'mean_psnr': float(np.mean([r.mean_psnr for r in reports])),
        'mean_ssim': float(np.mean([r.mean_ssim for r in reports])),
        'mean_sam': float(np.mean([r.mean_sam for r in reports])),
    }


def render_report_table(rows, aggregate):
    """
    Aligned-column text table. ``rows`` are ``(label, MetricReport)`` pairs.
    """
    width = max([len('pair'), len('mean')] + [len(label) for label, _ in rows])
    context = {
        'width': width,
        'rows': [
            {
                'label': label.ljust(width),
                'psnr': f'{report.mean_psnr:9.4f}',
                'ssim': f'{report.mean_ssim:7.4f}',
                'sam': f'{report.mean_sam:9.4f}',
                'peak': f'{report.data_peak:.6g}',
                'bands': f'{report.bands:5d}',
            }
            for label, report in rows
        ],
        'header': 'pair'.ljust(width),
        'rule': '-' * (width + 44),
        'mean': {
            'label': 'mean'.ljust(width),
            'psnr': f'{aggregate["mean_psnr"]:9.4f}',
            'ssim': f'{aggregate["mean_ssim"]:7.4f}',
            'sam': f'{aggregate["mean_sam"]:9.4f}',
        },
    }
    return render_to_string('denoiser/metric_report.txt', context)
