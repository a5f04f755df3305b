from denoiser import services

from ._base import HdstCommand


class Command(HdstCommand):
    help = 'Parameter and multiply-accumulate counts for the ablation variants.'

    def run(self, options):
        config = self.load_config(options)
        settings = config.inspect
        rows = services.inspect_variants(config.model, settings.variants, settings.height, settings.width)
        table = services.render_inspect_table(config.model, rows, settings.height, settings.width)
        self.stdout.write(table, ending='')
        if options.get('out'):
            config.out_dir.mkdir(parents=True, exist_ok=True)
            (config.out_dir / 'inspect.txt').write_text(table, encoding='utf-8')
