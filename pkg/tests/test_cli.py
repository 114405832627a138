import json

import numpy as np
import pytest
from pytest import raises

from mgt import __version__
from mgt.cli import run
from mgt.data import load_dataset
from mgt.exceptions import ConfigException
from mgt.graph import dump_graph, load_graph
from mgt.shortcuts import encode, positional_document
from mgt.training import export_wavelet_encoding
from tests.utils import complete_graph, path_graph

MODEL = {
    'embed_dim': 4,
    'positional_dim': 2,
    'atom_layers': 1,
    'substructure_layers': 1,
    'heads': 2,
    'clusters': 2,
    'scales': [1.0, 2.0],
    'dropout': 0.0,
    'attention_dropout': 0.0,
}


@pytest.fixture
def workspace(tmp_path):
    run(['gen-data', '--count', '6', '--seed', '1', '--repeats', '1,2', '--out', str(tmp_path / 'data')])
    config = {'model': MODEL, 'epochs': 1, 'batch_size': 3, 'data': 'data', 'checkpoint': 'model.ckpt',
              'log': 'log.csv'}
    (tmp_path / 'config.json').write_text(json.dumps(config), encoding='utf-8')
    run(['train', '--config', str(tmp_path / 'config.json')])
    return tmp_path


class TestPositionalCommand:
    def test_wave(self, tmp_path):
        (tmp_path / 'g.json').write_bytes(dump_graph(complete_graph(3)))
        run(['pe', 'wave', '--graph', str(tmp_path / 'g.json'), '--scales', '1,2',
             '--out', str(tmp_path / 'pe.json')])
        document = json.loads((tmp_path / 'pe.json').read_text(encoding='utf-8'))
        assert document['kind'] == 'wavepe'
        assert document['n'] == 3
        assert document['k'] == 2
        assert document['scales'] == [1.0, 2.0]
        assert document['rows'][0][0] == pytest.approx(0.482087, abs=1e-6)
        assert 'tensor' not in document

    def test_wave_full_tensor(self, tmp_path):
        (tmp_path / 'g.json').write_bytes(dump_graph(path_graph(4)))
        run(['pe', 'wave', '--graph', str(tmp_path / 'g.json'), '--full', '--out', str(tmp_path / 'pe.json')])
        tensor = np.array(json.loads((tmp_path / 'pe.json').read_text(encoding='utf-8'))['tensor'])
        assert tensor.shape == (4, 4, 5)

    def test_random_walk(self, tmp_path):
        (tmp_path / 'g.json').write_bytes(dump_graph(path_graph(2)))
        run(['pe', 'rw', '--graph', str(tmp_path / 'g.json'), '--steps', '4', '--out', str(tmp_path / 'pe.json')])
        document = json.loads((tmp_path / 'pe.json').read_text(encoding='utf-8'))
        assert document['rows'] == [[0.0, 1.0, 0.0, 1.0], [0.0, 1.0, 0.0, 1.0]]
        assert document['kind'] == 'rwpe'

    def test_laplacian(self, tmp_path):
        (tmp_path / 'g.json').write_bytes(dump_graph(path_graph(5)))
        run(['pe', 'lap', '--graph', str(tmp_path / 'g.json'), '--dim', '2', '--out', str(tmp_path / 'pe.json')])
        document = json.loads((tmp_path / 'pe.json').read_text(encoding='utf-8'))
        assert document['k'] == 2
        assert len(document['rows']) == 5
        assert document['kind'] == 'lappe'

    @pytest.mark.parametrize('kind, name', [('wave', 'wavepe'), ('rw', 'rwpe'), ('lap', 'lappe')])
    def test_document_kind_names(self, kind, name):
        assert json.loads(encode(dump_graph(path_graph(3)), kind))['kind'] == name

    def test_unknown_kind(self):
        with raises(ConfigException):
            positional_document(path_graph(3), 'heat')

    def test_wave_with_checkpoint(self, workspace):
        graph_path = workspace / 'data' / 'graph_0000.json'
        run(['pe', 'wave', '--graph', str(graph_path), '--checkpoint', str(workspace / 'model.ckpt'),
             '--out', str(workspace / 'pe.json')])
        document = json.loads((workspace / 'pe.json').read_text(encoding='utf-8'))
        graph = load_graph(graph_path.read_bytes())
        expected = export_wavelet_encoding(workspace / 'model.ckpt', graph)
        assert document['kind'] == 'wavepe'
        assert document['scales'] == [1.0, 2.0]
        assert document['k'] == 2
        assert document['n'] == graph.n
        np.testing.assert_allclose(document['rows'], expected['rows'], atol=1e-12)
        assert document['rows'] != positional_document(graph, 'wave', scales=[1.0, 2.0])['rows']

    def test_checkpoint_only_for_wave(self, workspace, capsys):
        with raises(SystemExit) as error:
            run(['pe', 'rw', '--graph', str(workspace / 'data' / 'graph_0000.json'), '--checkpoint',
                 str(workspace / 'model.ckpt'), '--out', str(workspace / 'pe.json')])

        assert error.value.code == 1
        assert 'checkpoint' in capsys.readouterr().err

    def test_encode_returns_text_without_stream(self):
        text = encode(dump_graph(path_graph(3)), 'rw', steps=2)
        assert json.loads(text) == positional_document(path_graph(3), 'rw', steps=2)


class TestDataAndTraining:
    def test_gen_data(self, tmp_path):
        run(['gen-data', '--motif', 'square', '--count', '5', '--out', str(tmp_path / 'data')])
        dataset = load_dataset(tmp_path / 'data')
        assert len(dataset) == 5
        assert dataset.node_width == 2

    def test_train_writes_outputs(self, workspace):
        assert (workspace / 'model.ckpt').exists()
        assert (workspace / 'log.csv').read_text(encoding='utf-8').startswith('epoch,total,l1,link,entropy,val_metric')

    def test_eval_prints_report(self, workspace, capsys):
        capsys.readouterr()
        run(['eval', '--checkpoint', str(workspace / 'model.ckpt'), '--data', str(workspace / 'data'),
             '--split', 'train'])
        report = json.loads(capsys.readouterr().out)
        assert report['split'] == 'train'
        assert report['metric'] == 'mae'

    def test_eval_writes_file(self, workspace):
        run(['eval', '--checkpoint', str(workspace / 'model.ckpt'), '--data', str(workspace / 'data'),
             '--split', 'train', '--out', str(workspace / 'report.json')])
        assert 'value' in json.loads((workspace / 'report.json').read_text(encoding='utf-8'))

    def test_clusters(self, workspace):
        run(['clusters', '--checkpoint', str(workspace / 'model.ckpt'), '--graph',
             str(workspace / 'data' / 'graph_0000.json'), '--out', str(workspace / 'clusters.json')])
        document = json.loads((workspace / 'clusters.json').read_text(encoding='utf-8'))
        assert document['clusters'] == 2
        assert len(document['labels']) == document['n']

    def test_embed(self, workspace):
        run(['embed', '--checkpoint', str(workspace / 'model.ckpt'), '--data', str(workspace / 'data'),
             '--out', str(workspace / 'z.csv')])
        lines = (workspace / 'z.csv').read_text(encoding='utf-8').splitlines()
        assert lines[0] == 'graph,split,z0,z1,z2,z3,z4,z5'
        assert len(lines) == 7


class TestErrors:
    def test_invalid_graph(self, tmp_path, capsys):
        (tmp_path / 'g.json').write_text('{"nodes": [[1.0]], "edges": [{"src": 0, "dst": 0}]}', encoding='utf-8')
        with raises(SystemExit) as error:
            run(['pe', 'rw', '--graph', str(tmp_path / 'g.json'), '--out', str(tmp_path / 'pe.json')])

        assert error.value.code == 1
        assert capsys.readouterr().err.startswith('mgt: ')

    def test_missing_file(self, tmp_path):
        with raises(SystemExit) as error:
            run(['pe', 'rw', '--graph', str(tmp_path / 'missing.json'), '--out', str(tmp_path / 'pe.json')])

        assert error.value.code == 1

    def test_invalid_config(self, tmp_path, capsys):
        (tmp_path / 'config.json').write_text('{"epochs": 0}', encoding='utf-8')
        with raises(SystemExit):
            run(['train', '--config', str(tmp_path / 'config.json')])

        assert 'config.epochs' in capsys.readouterr().err

    def test_version(self, capsys):
        with raises(SystemExit):
            run(['--version'])

        assert __version__ in capsys.readouterr().out
