import json
import logging
import sys
from argparse import ArgumentParser
from dataclasses import replace
from pathlib import Path

from mgt import __version__
from mgt.config import load_config
from mgt.data import MOTIFS, generate_motif_dataset, save_dataset
from mgt.exceptions import ConfigException, MGTException
from mgt.shortcuts import PE_KINDS, clusters, encode
from mgt.training import embed, evaluate, train

logger = logging.getLogger(__name__)


def _floats(text: str) -> list:
    try:
        return [float(item) for item in text.split(',') if item.strip()]
    except ValueError as error:
        raise ConfigException(f'expected comma-separated numbers, got "{text}"', '--scales') from error


def _range(text: str) -> tuple:
    try:
        low, high = (int(item) for item in text.split(','))
    except ValueError as error:
        raise ConfigException(f'expected "lo,hi", got "{text}"', '--repeats') from error

    return low, high


def _write_json(document: dict, path: Path | None):
    if path is None:
        json.dump(document, sys.stdout, indent=2)
        sys.stdout.write('\n')
        return

    with open(path, 'w', encoding='utf-8') as output_file:
        json.dump(document, output_file, indent=2)


def command_pe(args):
    with open(args.graph, 'rb') as graph_file:
        document = graph_file.read()

    with open(args.out, 'w', encoding='utf-8') as output_file:
        encode(document, args.kind, output_file, _floats(args.scales), args.steps, args.dim, args.full,
               args.checkpoint)


def command_gen_data(args):
    dataset = generate_motif_dataset(args.seed, args.count, args.motif, _range(args.repeats), args.noise)
    save_dataset(dataset, args.out)


def command_train(args):
    cfg = load_config(args.config)
    if args.epochs is not None:
        cfg = replace(cfg, epochs=args.epochs)

    if args.freeze_wavelets:
        cfg = replace(cfg, freeze_wavelets=True)

    result = train(cfg)
    print(f'best {result.best_metric:.6f} at epoch {result.best_epoch}; checkpoint {result.checkpoint}')


def command_eval(args):
    _write_json(evaluate(args.checkpoint, args.data, args.split), args.out)


def command_clusters(args):
    with open(args.graph, 'rb') as graph_file:
        document = graph_file.read()

    with open(args.out, 'w', encoding='utf-8') as output_file:
        clusters(args.checkpoint, document, output_file)


def command_embed(args):
    with open(args.out, 'w', encoding='utf-8', newline='') as output_file:
        output_file.write(embed(args.checkpoint, args.data))


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog='mgt',
        description='Multiresolution graph transformer with wavelet positional encodings',
    )
    parser.add_argument(
        '-v',
        '--verbose',
        action='count',
        default=0,
        help='-v logs progress, -vv logs debugging details',
    )
    parser.add_argument(
        '--version',
        action='version',
        version=f'v{__version__}',
        help='shows version info of mgt',
    )
    commands = parser.add_subparsers(dest='command', required=True)

    pe = commands.add_parser('pe', help='compute positional encodings of one graph')
    pe.add_argument('kind', choices=PE_KINDS, help='wave: heat-kernel wavelets, rw: random walk, lap: Laplacian')
    pe.add_argument('--graph', required=True, type=Path, help='A graph document')
    pe.add_argument('--scales', default='1,2,3,4,5', help='Wavelet scales, comma-separated')
    pe.add_argument('--steps', default=16, type=int, help='Random-walk steps for "rw"')
    pe.add_argument('--dim', default=8, type=int, help='Number of eigenvectors for "lap"')
    pe.add_argument('--full', action='store_true', help='Also emit the full n×n×k wavelet tensor for "wave"')
    pe.add_argument(
        '--checkpoint',
        type=Path,
        default=None,
        help='Trained checkpoint whose wavelet encoder produces the "wave" rows',
    )
    pe.add_argument('--out', required=True, type=Path, help='A filename for the output JSON')
    pe.set_defaults(handler=command_pe)

    gen = commands.add_parser('gen-data', help='generate a synthetic motif-chain dataset')
    gen.add_argument('--motif', choices=sorted(MOTIFS), default='triangle', help='Repeated substructure')
    gen.add_argument('--count', required=True, type=int, help='Number of graphs')
    gen.add_argument('--seed', default=0, type=int, help='Generator seed')
    gen.add_argument('--repeats', default='1,4', help='Inclusive range of motif copies per graph, "lo,hi"')
    gen.add_argument('--noise', default=0.0, type=float, help='Standard deviation of node feature noise')
    gen.add_argument('--out', required=True, type=Path, help='Output dataset directory')
    gen.set_defaults(handler=command_gen_data)

    train_parser = commands.add_parser('train', help='train a model from a JSON config')
    train_parser.add_argument('--config', required=True, type=Path, help='A training config file')
    train_parser.add_argument('--epochs', type=int, default=None, help='Overrides the configured epoch count')
    train_parser.add_argument(
        '--freeze-wavelets',
        action='store_true',
        help='Excludes the wavelet encoder from optimizer updates',
    )
    train_parser.set_defaults(handler=command_train)

    eval_parser = commands.add_parser('eval', help='evaluate a checkpoint on a dataset split')
    eval_parser.add_argument('--checkpoint', required=True, type=Path)
    eval_parser.add_argument('--data', required=True, type=Path, help='Dataset directory')
    eval_parser.add_argument('--split', default='test', choices=('train', 'val', 'test'))
    eval_parser.add_argument('--out', type=Path, default=None, help='Report file; printed if absent')
    eval_parser.set_defaults(handler=command_eval)

    clusters_parser = commands.add_parser('clusters', help='export the cluster assignment of one graph')
    clusters_parser.add_argument('--checkpoint', required=True, type=Path)
    clusters_parser.add_argument('--graph', required=True, type=Path)
    clusters_parser.add_argument('--out', required=True, type=Path)
    clusters_parser.set_defaults(handler=command_clusters)

    embed_parser = commands.add_parser('embed', help='export graph embeddings as CSV')
    embed_parser.add_argument('--checkpoint', required=True, type=Path)
    embed_parser.add_argument('--data', required=True, type=Path)
    embed_parser.add_argument('--out', required=True, type=Path)
    embed_parser.set_defaults(handler=command_embed)
    return parser


def run(argv=None):
    args = build_parser().parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    try:
        args.handler(args)
    except MGTException as error:
        logger.debug('command failed', exc_info=True)
        print(f'mgt: {error}', file=sys.stderr)
        sys.exit(1)
    except OSError as error:
        print(f'mgt: {error}', file=sys.stderr)
        sys.exit(1)


if __name__ == '__main__':
    run()
