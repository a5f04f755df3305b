"""
Django settings for hdst_lab project.

The project has no web surface: it is driven through manage.py commands
(synthesize, train, denoise, evaluate, inspect, export_pgm, convert_raw).
The HDST_* dicts below are the defaults every run configuration starts from.
"""

from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = os.environ.get('HDST_SECRET_KEY', 'hdst-lab-local-only')

DEBUG = os.environ.get('HDST_DEBUG', '0') == '1'

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'denoiser',
]

TEMPLATES = [
    {
        'BACKEND': 'django.template.backends.django.DjangoTemplates',
        'DIRS': [],
        'APP_DIRS': True,
        'OPTIONS': {
            'context_processors': [],
        },
    },
]


# Database
# The run ledger uses PostgreSQL when POSTGRES_DB is set, a local sqlite file otherwise.

if os.environ.get('POSTGRES_DB'):
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.postgresql',
            'NAME': os.environ.get('POSTGRES_DB'),
            'USER': os.environ.get('POSTGRES_USER', 'postgres'),
            'PASSWORD': os.environ.get('POSTGRES_PASSWORD', 'postgres'),
            'HOST': os.environ.get('POSTGRES_HOST', 'localhost'),
            'PORT': os.environ.get('POSTGRES_PORT', '5432'),
        }
    }
else:
    DATABASES = {
        'default': {
            'ENGINE': 'django.db.backends.sqlite3',
            'NAME': os.environ.get('HDST_LEDGER_PATH', BASE_DIR / 'hdst_ledger.sqlite3'),
        }
    }


# Internationalization

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# Logging

HDST_LOG_LEVEL = os.environ.get('HDST_LOG_LEVEL', 'INFO')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'denoiser': {
            'handlers': ['console'],
            'level': HDST_LOG_LEVEL,
            'propagate': False,
        },
    },
}


# HDST defaults

HDST_PSNR_CAP_DB = 100.0

HDST_LR_SCHEDULES = {
    # 500 epochs on the 34-band realistic set
    'realistic': [[0, 1e-4], [200, 5e-5], [400, 1e-5]],
    # 100 epochs on 31-band ICVL crops
    'icvl': [[0, 1e-4], [50, 1e-5]],
    'toy': [[0, 1e-3]],
}

HDST_DATASET_PRESETS = {
    'realistic': {'bands': 34, 'wavelength_nm': [400, 700], 'patch_size': 128, 'epochs': 500},
    'icvl': {'bands': 31, 'wavelength_nm': [400, 700], 'patch_size': 64, 'test_crop': 512, 'epochs': 100,
             'crop_scales': [1, 0.5, 0.25]},
}

HDST_MODEL_DEFAULTS = {
    'variant': 'hdst',
    'bands': 31,
    'embed_channels': 16,
    'n_rtl': 3,
    'blocks_per_rtl': 6,
    'window_M': 8,
    'n_heads': 2,
    'head_dim': 8,
    'alpha': 0.5,
    'fpp_depth': 2,
    'fpp_placement': 'per_rtl',
    'spatial_dilations': [2, 4, 8],
    'freq_dilations': [2, 4, 8],
    'aspp_reference_dilations': [6, 12, 18],
    'use_reference_aspp': False,
    'hdms_separable': True,
    'mlp_ratio': 2,
    'se_reduction': 2,
    'dtype': 'float64',
    'seed': 0,
}

HDST_DATA_DEFAULTS = {
    'clean_cubes': [],
    'noisy_cubes': [],
    'patch_size': 64,
    'stride': 32,
    'augment': True,
    'scales': [1.0],
}

HDST_NOISE_DEFAULTS = {
    'pattern': 'noniid_gaussian',
    'sigma_range': [10 / 255, 70 / 255],
    'affected_band_fraction': 1 / 3,
    'column_fraction_range': [0.05, 0.15],
    'impulse_ratio_range': [0.1, 0.7],
    'stripe_offset': 0.25,
    'seed': 0,
}

HDST_TRAIN_DEFAULTS = {
    'epochs': 100,
    'batch_size': 1,
    'lr_schedule': 'icvl',
    'seed': 0,
    'checkpoint': 'model.ckpt',
    'checkpoint_every': 10,
    'resume': False,
    'loss_log': 'loss.csv',
}

HDST_DENOISE_DEFAULTS = {
    'checkpoint': 'model.ckpt',
    'inputs': [],
    'tile_size': 0,
    'overlap': 0,
}

HDST_EVAL_DEFAULTS = {
    'denoised': [],
    'reference': [],
    'peak': 'ground_truth',
    'report': 'report',
}

HDST_INSPECT_DEFAULTS = {
    'height': 32,
    'width': 32,
    'variants': ['baseline', 'net1', 'net2', 'net3', 'net4', 'hdst'],
}
