# ------------------------------------------------------------------------------
# Copyright (c) 2024 The nightNeRF developers

# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.

# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.

# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.
# ------------------------------------------------------------------------------


"""
Command line entry point.

    nightnerf synth  OUT
    nightnerf train  DATASET OUT [--resume CKPT] [--baseline]
    nightnerf render CHECKPOINT DATASET OUT [--views ...] [--size WxH]
    nightnerf eval   CHECKPOINT DATASET OUT [--views ...]
    nightnerf mask   DATASET OUT
    nightnerf match  DATASET OUT [--backend ground_truth|block]
    nightnerf plot   LOG OUT
"""

import argparse
import logging
import sys

from traits.api import TraitError

from . import utils
from .application import Application
from .errors import NightNeRFError
from .version import __version__

logger = logging.getLogger('nightNeRF')


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, default=0, help='random seed (default 0)')
    common.add_argument('--config', metavar='FILE',
                        help='JSON file with training and degradation settings')
    common.add_argument('--deterministic', action='store_true',
                        help='byte-identical outputs for identical inputs and seed')
    common.add_argument('-v', '--verbose', action='store_true', help='debug logging')

    parser = argparse.ArgumentParser(
        prog='nightnerf', description='Low-light, shaky and noisy radiance fields.')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    commands = parser.add_subparsers(dest='command', metavar='COMMAND')
    commands.required = True

    p = commands.add_parser('synth', parents=[common], help='write a synthetic toy dataset')
    p.add_argument('out')
    p.add_argument('--views', type=int, default=12)
    p.add_argument('--size', default='96x72', help='image size WxH (default 96x72)')

    p = commands.add_parser('train', parents=[common], help='train on a dataset')
    p.add_argument('dataset')
    p.add_argument('out')
    p.add_argument('--iterations', type=int)
    p.add_argument('--batch-size', type=int)
    p.add_argument('--resume', metavar='CHECKPOINT')
    p.add_argument('--baseline', action='store_true',
                   help='ScaleUp + plain NeRF: no blur kernel, noise field or masks')
    p.add_argument('--no-progress', action='store_true')

    p = commands.add_parser('render', parents=[common], help='render views from a checkpoint')
    p.add_argument('checkpoint')
    p.add_argument('dataset')
    p.add_argument('out')
    p.add_argument('--views', help="'all', or comma separated ids (default: eval views)")
    p.add_argument('--size', help='output size WxH (default: dataset size)')

    p = commands.add_parser('eval', parents=[common], help='PSNR / SSIM against clean views')
    p.add_argument('checkpoint')
    p.add_argument('dataset')
    p.add_argument('out')
    p.add_argument('--views', help="'all', or comma separated ids (default: eval views)")

    p = commands.add_parser('mask', parents=[common], help='write trajectory masks')
    p.add_argument('dataset')
    p.add_argument('out')
    p.add_argument('--views', help="'all', or comma separated ids (default: all)")

    p = commands.add_parser('match', parents=[common], help='write match tables of view pairs')
    p.add_argument('dataset')
    p.add_argument('out')
    p.add_argument('--backend', choices=['ground_truth', 'block'], default='ground_truth')
    p.add_argument('--pairs', help="comma separated a:b view pairs (default: neighbours)")

    p = commands.add_parser('plot', parents=[common], help='plot a training log')
    p.add_argument('log')
    p.add_argument('out')
    return parser


def parse_pairs(text):
    if not text:
        return None
    pairs = []
    for item in text.split(','):
        a, b = item.split(':')
        pairs.append((int(a), int(b)))
    return pairs


def run(args):
    overrides = {}
    if getattr(args, 'iterations', None) is not None:
        overrides['n_iterations'] = args.iterations
    if getattr(args, 'batch_size', None) is not None:
        overrides['batch_size'] = args.batch_size

    app = Application(seed=args.seed, config_path=args.config,
                      deterministic=args.deterministic)
    app.configure(overrides)

    if args.command == 'synth':
        width, height = utils.parse_size(args.size)
        app.synth(args.out, n_views=args.views, width=width, height=height)
    elif args.command == 'train':
        app.train(args.dataset, args.out, resume=args.resume, baseline=args.baseline,
                  progress=not args.no_progress)
    elif args.command == 'render':
        size = utils.parse_size(args.size) if args.size else None
        app.render(args.checkpoint, args.dataset, args.out, views=args.views, size=size)
    elif args.command == 'eval':
        app.evaluate(args.checkpoint, args.dataset, args.out, views=args.views)
    elif args.command == 'mask':
        app.mask(args.dataset, args.out, views=args.views)
    elif args.command == 'match':
        app.match(args.dataset, args.out, backend=args.backend, pairs=parse_pairs(args.pairs))
    elif args.command == 'plot':
        app.plot(args.log, args.out)
    return app


def main(argv=None):
    args = build_parser().parse_args(argv)
    utils.configure_logging(args.verbose)
    try:
        run(args)
    except (NightNeRFError, TraitError, ValueError) as exc:
        logger.error('%s', exc)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
