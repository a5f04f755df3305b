from pathlib import Path

from denoiser.cubes import convert_raw, save_cube

from ._base import HdstCommand


class Command(HdstCommand):
    help = 'Convert a flat raw float file with a JSON sidecar into an HDC1 cube.'

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument('raw', help='Raw scalar file.')
        parser.add_argument('--sidecar', help='JSON sidecar (defaults to RAW.json).')
        parser.add_argument('--output', help='Target cube (defaults to RAW with a .hdc suffix).')

    def run(self, options):
        raw = Path(options['raw'])
        sidecar = Path(options.get('sidecar') or raw.with_name(raw.name + '.json'))
        target = Path(options.get('output') or raw.with_suffix('.hdc'))
        cube = convert_raw(raw, sidecar)
        save_cube(cube, target)
        self.stdout.write(self.style.SUCCESS(f'{cube.bands}x{cube.height}x{cube.width} cube written to {target}'))
