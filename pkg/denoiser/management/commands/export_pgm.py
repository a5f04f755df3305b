from pathlib import Path

from denoiser.cubes import export_pgm, load_cube

from ._base import HdstCommand


class Command(HdstCommand):
    help = 'Export every band of a cube as a 16-bit binary PGM.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('cube', help='HDC1 cube file.')
        parser.add_argument('--scale', choices=['unit', 'minmax'], default='unit')

    def run(self, options):
        cube_path = Path(options['cube'])
        out_dir = Path(options.get('out') or cube_path.with_suffix(''))
        paths = export_pgm(load_cube(cube_path), out_dir, stem=cube_path.stem, scale=options['scale'])
        self.stdout.write(self.style.SUCCESS(f'{len(paths)} band image(s) written to {out_dir}'))
