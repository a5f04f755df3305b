from denoiser import services

from ._base import HdstCommand


class Command(HdstCommand):
    help = 'Write noisy copies of data.clean_cubes and a manifest that regenerates them.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument(
            '--from-manifest', dest='manifest',
            help='Rebuild the cubes listed in an existing manifest instead.',
        )

    def run(self, options):
        config = self.load_config(options)
        if options.get('manifest'):
            results = services.regenerate_from_manifest(options['manifest'], config.out_dir)
            for path, matches in results:
                style = self.style.SUCCESS if matches else self.style.WARNING
                self.stdout.write(style(f'{path}: {"identical" if matches else "DIFFERS from manifest"}'))
            return

        if config.noise.is_zero:
            self.stdout.write(self.style.WARNING('noise spec is all zeros: noisy cubes equal the clean ones'))
        manifest, entries = services.synthesize(config)
        for entry in entries:
            self.stdout.write(f'{entry["noisy"]}  sha256 {entry["noisy_sha256"]}')
        self.stdout.write(self.style.SUCCESS(f'{len(entries)} cube(s) synthesized, manifest {manifest}'))
