"""Command-line entry point.

    glssbm simulate|fit|select|report|cv|votes --config run.toml [--out DIR]
        [--seed N]

The configuration is TOML. Relative paths are resolved against the config
file's directory. Every output is a deterministic function of the inputs,
the config and the seed.
"""

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import analysis, postprocess, selection
from .model import ModelConfig, ParamState, generate_network, sample_from_prior
from .network import (export_graph, load_edge_list, load_metadata, load_votes,
                      write_edge_list, write_node_list)
from .sampler import SamplerConfig, TraceStore, run_chain

logger = logging.getLogger('glssbm')

COMMANDS = ('simulate', 'fit', 'select', 'report', 'cv', 'votes')

PATH_KEYS = ('edges', 'nodes', 'metadata', 'votes', 'out', 'trace')
MODEL_KEYS = tuple(f.name for f in fields(ModelConfig))
SAMPLER_KEYS = tuple(f.name for f in fields(SamplerConfig))
SECTIONS = {
    'paths': PATH_KEYS,
    'model': MODEL_KEYS,
    'sampler': SAMPLER_KEYS,
    'grid': ('dims', 'blocks'),
    'cv': ('folds', 'seed'),
    'simulate': ('n', 'beta', 'tau', 'pi'),
    'report': ('per_block',),
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    paths: dict = field(default_factory=dict)
    model: ModelConfig = field(default_factory=ModelConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    dims: tuple = (0, 1, 2)
    blocks: tuple = (1, 2, 3)
    folds: int = 10
    cv_seed: int = 0
    simulate: dict = field(default_factory=dict)
    per_block: bool = True


def _flatten(doc, prefix=''):
    for k, v in doc.items():
        if isinstance(v, dict) and not prefix:
            yield from _flatten(v, f'{k}.')
        else:
            yield f'{prefix}{k}', v


def parse_config(path):
    """Read and validate a TOML run configuration."""
    with open(path, 'rb') as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f'{path}: {exc}') from exc
    values = {}
    for key, v in _flatten(doc):
        section, _, name = key.partition('.')
        if section not in SECTIONS or name not in SECTIONS[section]:
            raise ConfigError(f'unknown config key {key!r}')
        values.setdefault(section, {})[name] = v

    base = os.path.dirname(os.path.abspath(path))
    paths = {k: os.path.normpath(os.path.join(base, v))
             for k, v in values.get('paths', {}).items()}
    try:
        model = ModelConfig(**values.get('model', {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f'model: {exc}') from exc
    try:
        sampler = SamplerConfig(**values.get('sampler', {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f'sampler: {exc}') from exc
    grid = values.get('grid', {})
    cv = values.get('cv', {})
    cfg = RunConfig(paths=paths, model=model, sampler=sampler,
                    dims=tuple(grid.get('dims', (0, 1, 2))),
                    blocks=tuple(grid.get('blocks', (1, 2, 3))),
                    folds=int(cv.get('folds', 10)),
                    cv_seed=int(cv.get('seed', 0)),
                    simulate=values.get('simulate', {}),
                    per_block=bool(values.get('report', {}).get('per_block',
                                                                True)))
    if any(d < 0 for d in cfg.dims) or any(k < 1 for k in cfg.blocks):
        raise ConfigError('grid.dims must be >= 0 and grid.blocks >= 1')
    if cfg.folds < 2:
        raise ConfigError('cv.folds must be >= 2')
    return cfg


def _require(cfg, *keys):
    missing = [k for k in keys if k not in cfg.paths]
    if missing:
        raise ConfigError('missing required paths: '
                          + ', '.join(f'paths.{k}' for k in missing))
    return [cfg.paths[k] for k in keys]


def _load_net(cfg):
    edges, nodes = _require(cfg, 'edges', 'nodes')
    return load_edge_list(edges, nodes)


def _write_json(doc, path):
    with open(path, 'w', encoding='utf-8') as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write('\n')


def _trace_dir(cfg, out):
    return cfg.paths.get('trace', os.path.join(out, 'trace'))


def cmd_simulate(cfg, out):
    sim = cfg.simulate
    if 'n' not in sim:
        raise ConfigError('simulate needs simulate.n')
    rng = np.random.default_rng(cfg.sampler.seed)
    state = sample_from_prior(cfg.model, int(sim['n']), rng)
    K = cfg.model.K
    if 'beta' in sim:
        state.beta = np.asarray(sim['beta'], dtype=float).reshape(K)
    if 'pi' in sim:
        state.pi = np.asarray(sim['pi'], dtype=float).reshape(K)
        state.gamma = rng.choice(K, size=state.n, p=state.pi)
        state.Z = (rng.standard_normal(state.Z.shape)
                   * cfg.model.sigma_array[state.gamma][:, None])
    if 'tau' in sim:
        # TOML has no null, so the diagonal entries are placeholders.
        tau = np.array(sim['tau'], dtype=float).reshape(K, K)
        np.fill_diagonal(tau, np.nan)
        state = ParamState(state.gamma, state.Z, state.pi, tau, state.beta)
    state.validate()
    net = generate_network(state, rng,
                           [f'v{i + 1}' for i in range(state.n)])
    write_node_list(net, os.path.join(out, 'nodes.txt'))
    write_edge_list(net, os.path.join(out, 'edges.csv'))
    _write_json({'model': cfg.model.to_dict(), 'state': state.to_json()},
                os.path.join(out, 'truth.json'))


def cmd_fit(cfg, out):
    net = _load_net(cfg)
    trace = run_chain(net, None, cfg.model, cfg.sampler)
    trace.export(_trace_dir(cfg, out))
    if len(trace):
        _write_json(trace.samples[-1].to_json(),
                    os.path.join(out, 'checkpoint.json'))


def cmd_select(cfg, out):
    net = _load_net(cfg)
    result = selection.fit_grid(net, None, cfg.dims, cfg.blocks, cfg.model,
                                cfg.sampler)
    result.to_csv(os.path.join(out, 'waic_grid.csv'))
    d, K = result.best
    with open(os.path.join(out, 'waic_best.txt'), 'w',
              encoding='utf-8') as fh:
        fh.write(f'dimension={d} k={K}\n')


def _summary(cfg, net):
    trace = TraceStore.load(_trace_dir(cfg, cfg.paths['out']))
    if len(trace) == 0:
        raise ConfigError('trace is empty; nothing to summarise')
    trace = postprocess.relabel_trace(trace)
    ref = postprocess.classical_mds(net, trace.samples[0].d)
    trace = postprocess.align_trace(trace, ref, cfg.per_block)
    return postprocess.summarize(trace, net)


def cmd_report(cfg, out):
    net = _load_net(cfg)
    meta = (load_metadata(cfg.paths['metadata'], net)
            if 'metadata' in cfg.paths else
            load_metadata(os.devnull, net))
    summary = _summary(cfg, net)
    report_dir = os.path.join(out, 'report')
    summary.export(report_dir, net.node_ids, meta)
    export_graph(net, meta, os.path.join(report_dir, 'network.graphml'))


def cmd_cv(cfg, out):
    net = _load_net(cfg)
    res = analysis.kfold_dyad_cv(net, cfg.model, cfg.sampler, cfg.folds,
                                 cfg.cv_seed)
    analysis.write_roc(res.roc, os.path.join(out, 'roc.csv'),
                       os.path.join(out, 'auc.txt'))
    with open(os.path.join(out, 'fold_auc.csv'), 'w', encoding='utf-8',
              newline='') as fh:
        w = csv.writer(fh, lineterminator='\n')
        w.writerow(['fold', 'auc'])
        for f, a in enumerate(res.fold_aucs):
            w.writerow([f, repr(float(a))])


def cmd_votes(cfg, out):
    net = _load_net(cfg)
    (votes_path,) = _require(cfg, 'votes')
    votes = load_votes(votes_path, net)
    summary = _summary(cfg, net)
    report = analysis.vote_density_report(summary, votes)
    analysis.write_vote_densities(report, os.path.join(out, 'vote_kde.csv'),
                                  os.path.join(out, 'vote_groups.csv'))


HANDLERS = {'simulate': cmd_simulate, 'fit': cmd_fit, 'select': cmd_select,
            'report': cmd_report, 'cv': cmd_cv, 'votes': cmd_votes}


def run_command(cmd, cfg):
    if cmd not in HANDLERS:
        raise ConfigError(f'unknown command {cmd!r}')
    out = cfg.paths.get('out')
    if out is None:
        raise ConfigError('no output directory (paths.out or --out)')
    os.makedirs(out, exist_ok=True)
    HANDLERS[cmd](cfg, out)
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(prog='glssbm', description=__doc__,
                                     formatter_class=argparse.
                                     RawDescriptionHelpFormatter)
    parser.add_argument('command', choices=COMMANDS)
    parser.add_argument('--config', required=True)
    parser.add_argument('--out')
    parser.add_argument('--seed', type=int)
    parser.add_argument('-v', '--verbose', action='store_true')
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else
                        logging.WARNING, format='%(levelname)s %(message)s')
    try:
        cfg = parse_config(args.config)
        if args.out:
            cfg.paths['out'] = os.path.abspath(args.out)
        if args.seed is not None:
            cfg.sampler = SamplerConfig(**{**asdict(cfg.sampler),
                                           'seed': args.seed})
        return run_command(args.command, cfg)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f'glssbm {args.command}: error: {exc}', file=sys.stderr)
        return 1


if __name__ == '__main__':
    sys.exit(main())
