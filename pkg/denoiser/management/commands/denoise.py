from denoiser import services

from ._base import HdstCommand


class Command(HdstCommand):
    help = 'Denoise cubes with a trained checkpoint.'

    def run(self, options):
        outputs = services.denoise(self.load_config(options))
        for path in outputs:
            self.stdout.write(str(path))
        self.stdout.write(self.style.SUCCESS(f'{len(outputs)} cube(s) denoised'))
