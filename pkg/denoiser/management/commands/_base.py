from django.core.management.base import BaseCommand, CommandError

from denoiser.exceptions import (
    EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, CheckpointError, ConfigError, CubeFormatError,
    MetricError, NonFiniteError, ShapeError,
)
from denoiser.run_config import load_run_config


class HdstCommand(BaseCommand):
    """
    Shared ``--config/--seed/--out/--set`` options and the mapping of library
    errors onto exit codes: 2 configuration, 3 I/O and file format, 4 numeric.
    """

    def add_arguments(self, parser):
        parser.add_argument('--config', help='JSON run configuration file.')
        parser.add_argument('--seed', type=int, help='Overrides model.seed, noise.seed and train.seed.')
        parser.add_argument('--out', help='Output directory.')
        parser.add_argument('--dataset', help='Dataset preset (HDST_DATASET_PRESETS) applied before the config file.')
        parser.add_argument(
            '--set', action='append', default=[], dest='overrides', metavar='SECTION.KEY=VALUE',
            help='Override one option; VALUE is parsed as JSON, falling back to a string. Repeatable.',
        )

    def load_config(self, options):
        return load_run_config(
            path=options.get('config'),
            overrides=options.get('overrides') or [],
            seed=options.get('seed'),
            out_dir=options.get('out'),
            dataset=options.get('dataset'),
        )

    def handle(self, *args, **options):
        try:
            return self.run(options)
        except (ConfigError, ShapeError) as exc:
            raise CommandError(str(exc), returncode=EXIT_CONFIG) from exc
        except (CubeFormatError, CheckpointError, OSError) as exc:
            raise CommandError(str(exc), returncode=EXIT_IO) from exc
        except (NonFiniteError, MetricError) as exc:
            raise CommandError(str(exc), returncode=EXIT_NUMERIC) from exc

    def run(self, options):
        raise NotImplementedError
