from denoiser import services

from ._base import HdstCommand


class Command(HdstCommand):
    help = 'Train the denoiser on paired noisy/clean cubes.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('--resume', action='store_true', help='Continue from train.checkpoint if present.')

    def run(self, options):
        if options.get('resume'):
            options['overrides'] = [*options.get('overrides', []), 'train.resume=true']
        outcome = services.train(self.load_config(options))
        if outcome.losses:
            self.stdout.write(
                f'{outcome.steps} steps, loss {outcome.initial_loss:.6g} -> {outcome.final_loss:.6g}'
            )
        self.stdout.write(self.style.SUCCESS(f'checkpoint {outcome.checkpoint}, loss log {outcome.loss_log}'))
