from denoiser import services

from ._base import HdstCommand


class Command(HdstCommand):
    help = 'Score denoised cubes against references (PSNR, SSIM, SAM).'

    def run(self, options):
        outcome = services.evaluate(self.load_config(options))
        self.stdout.write(outcome.table, ending='')
        self.stdout.write(self.style.SUCCESS(f'reports written to {outcome.json_path} and {outcome.text_path}'))
