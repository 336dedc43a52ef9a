import filecmp
import os

import pytest

from glssbm.cli import ConfigError, main, parse_config


def write_config(tmp_path, body, name='run.toml'):
    path = tmp_path / name
    path.write_text(body, encoding='utf-8')
    return str(path)


SIM = """
[paths]
edges = "edges.csv"
nodes = "nodes.txt"
out = "."

[model]
K = 2
d = 1

[sampler]
iterations = 300
burn_in = 100
thin = 10
seed = 7

[simulate]
n = 20

[grid]
dims = [0, 1, 2]
blocks = [1, 2, 3, 4]

[cv]
folds = 3
"""


def test_defaults_applied(tmp_path):
    cfg = parse_config(write_config(tmp_path, '[paths]\nedges = "e.csv"\n'
                                    'nodes = "n.txt"\n'))
    assert cfg.model.T == 10 and cfg.model.sigma_beta == 5
    assert cfg.model.E0 == cfg.model.E1 == 1 and cfg.model.mu_beta == 0
    assert cfg.model.sigma_array[0] ** 2 == pytest.approx(5)
    assert cfg.sampler.delta == 1
    assert cfg.paths['edges'] == os.path.join(str(tmp_path), 'e.csv')


def test_invalid_and_unknown_keys(tmp_path):
    with pytest.raises(ConfigError, match='K must be'):
        parse_config(write_config(tmp_path, '[model]\nK = 0\n'))
    with pytest.raises(ConfigError, match="'model.alpha'"):
        parse_config(write_config(tmp_path, '[model]\nalpha = 1\n'))
    with pytest.raises(ConfigError, match="'extra.x'"):
        parse_config(write_config(tmp_path, '[extra]\nx = 1\n'))
    with pytest.raises(ConfigError, match='burn_in'):
        parse_config(write_config(tmp_path, '[sampler]\niterations = 5\n'
                                  'burn_in = 10\n'))


def test_error_exit_codes(tmp_path, capsys):
    cfg = write_config(tmp_path, '[model]\nK = 0\n')
    assert main(['fit', '--config', cfg]) == 1
    assert 'K must be' in capsys.readouterr().err
    cfg = write_config(tmp_path, '[model]\nK = 2\n', 'ok.toml')
    assert main(['fit', '--config', cfg, '--out', str(tmp_path)]) == 1
    assert 'paths.edges' in capsys.readouterr().err


def run_all(tmp_path, tag):
    d = tmp_path / tag
    d.mkdir()
    cfg = write_config(d, SIM)
    for cmd in ('simulate', 'fit', 'report', 'select', 'cv'):
        assert main([cmd, '--config', cfg]) == 0, cmd
    return d


def test_workflow_outputs_and_determinism(tmp_path):
    a = run_all(tmp_path, 'a')
    b = run_all(tmp_path, 'b')
    expected = ['edges.csv', 'nodes.txt', 'truth.json', 'checkpoint.json',
                'trace/gamma.csv', 'trace/beta.csv', 'trace/pi.csv',
                'trace/tau.csv', 'trace/loglik.csv', 'trace/Z.jsonl',
                'trace/config.json', 'report/tau_mean.csv',
                'report/within_range.csv', 'report/allocation.csv',
                'report/map_labels.csv', 'report/positions.csv',
                'report/edge_prob.csv', 'report/party_block.csv',
                'report/network.graphml', 'waic_grid.csv', 'waic_best.txt',
                'roc.csv', 'auc.txt', 'fold_auc.csv']
    for rel in expected:
        assert (a / rel).is_file(), rel
        assert filecmp.cmp(a / rel, b / rel, shallow=False), rel
    grid = (a / 'waic_grid.csv').read_text().splitlines()
    assert grid[0] == 'dimension,k,pred,penalty,waic' and len(grid) == 13
    assert (a / 'report/positions.csv').read_text().startswith(
        'node,block,x1\n')
    assert (a / 'auc.txt').read_text().startswith('auc=')
    assert len((a / 'nodes.txt').read_text().split()) == 20


def test_seed_override_changes_simulation(tmp_path):
    cfg = write_config(tmp_path, SIM)
    main(['simulate', '--config', cfg, '--out', str(tmp_path / 'x')])
    main(['simulate', '--config', cfg, '--out', str(tmp_path / 'y'),
          '--seed', '8'])
    assert (tmp_path / 'x/edges.csv').read_text() != \
        (tmp_path / 'y/edges.csv').read_text()


def test_simulate_with_fixed_parameters(tmp_path):
    import json
    body = SIM.replace('[simulate]\nn = 20',
                       '[simulate]\nn = 20\nbeta = [50.0, 50.0]\n'
                       'pi = [0.5, 0.5]\ntau = [[0, 0.0], [0.0, 0]]\n')
    cfg = write_config(tmp_path, body)
    assert main(['simulate', '--config', cfg]) == 0
    truth = json.loads((tmp_path / 'truth.json').read_text())
    assert truth['state']['tau'] == [[None, 0.0], [0.0, None]]
    assert truth['state']['beta'] == [50.0, 50.0]


def test_votes_command(tmp_path):
    d = run_all(tmp_path, 'v')
    ids = (d / 'nodes.txt').read_text().split()
    rows = ['id,vote_id,value'] + [f'{v},v1,{"TA" if i % 2 else "NIL"}'
                                   for i, v in enumerate(ids)]
    (d / 'votes.csv').write_text('\n'.join(rows) + '\n')
    cfg = write_config(d, SIM.replace('out = "."',
                                      'out = "."\nvotes = "votes.csv"'))
    assert main(['votes', '--config', cfg]) == 0
    kde = (d / 'vote_kde.csv').read_text().splitlines()
    assert kde[0] == 'vote_id,group,x,density' and len(kde) > 1
    assert (d / 'vote_groups.csv').is_file()
