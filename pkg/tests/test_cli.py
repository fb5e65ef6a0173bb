"""
End-to-end runs of the command-line entry point on a small generated dataset.
"""

# stdlib imports
import json
import os

# 3rd-party imports
import pytest

# project imports
from data.contracts import load_contracts, split_contracts
from defs import CONTRACTS_CSV, INTERACTIONS_CSV, STATS_JSON, TRAIN_LOG, ExitCode
from main import main
from models.nbo import NboConfig
import debug


SMALL_RUN = {
    'synthetic': {
        'n_dealers': 20, 'n_vehicles': 400, 'latent_dim': 4, 'user_features': 6, 'item_features': 8,
        'candidates_per_auction': 10,
    },
    'contracts': {'n_contracts': 300, 'n_classes': 10, 'n_occupations': 4, 'n_regions': 3, 'n_fuel_types': 2},
    'sasrec': {'embed_dim': 8, 'blocks': 1, 'heads': 2, 'max_seq_len': 10, 'batch_size': 16},
    'pointwise': {'hidden': [8], 'batch_size': 64},
    'nbo': {'batch_size': 64},
}


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


@pytest.fixture(scope='module')
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp('cli')
    config = root / 'run.json'
    config.write_text(json.dumps(SMALL_RUN))
    data = root / 'data'
    assert main(['gen', '--out', str(data), '--config', str(config), '--seed', '1']) == 0
    return {'root': root, 'config': str(config), 'data': str(data)}


@pytest.fixture(scope='module')
def sasrec_checkpoint(workspace):
    out = workspace['root'] / 'runs'
    code = main(['train', '--model', 'sasrec-auc', '--data', workspace['data'], '--out', str(out),
                 '--config', workspace['config'], '--epochs', '1'])
    assert code == 0
    return str(out / 'sasrec-auc.ckpt')


def test_gen_writes_every_file(workspace):
    for name in (INTERACTIONS_CSV, STATS_JSON, CONTRACTS_CSV, 'dealers.csv', 'vehicles.csv', 'contracts_schema.json'):
        assert os.path.isfile(os.path.join(workspace['data'], name))
    summary = json.loads(open(os.path.join(workspace['data'], STATS_JSON)).read())
    assert summary['users'] == 20
    assert summary['items'] == 400
    assert summary['purchases'] == 400


def test_gen_is_byte_identical_for_a_seed(tmp_path, workspace, capsys):
    code, summary = run(capsys, 'gen', '--out', str(tmp_path), '--config', workspace['config'], '--seed', '1')
    assert code == 0
    assert summary['purchases'] == 400
    for name in (INTERACTIONS_CSV, CONTRACTS_CSV, STATS_JSON):
        with open(os.path.join(workspace['data'], name), 'rb') as a, open(tmp_path / name, 'rb') as b:
            assert a.read() == b.read()


def test_train_writes_checkpoint_and_log(sasrec_checkpoint):
    assert os.path.isfile(sasrec_checkpoint)
    lines = open(os.path.join(os.path.dirname(sasrec_checkpoint), TRAIN_LOG)).read().splitlines()
    assert [json.loads(line)['epoch'] for line in lines] == [0, 1]


def test_eval_checkpoint_echoes_the_protocol(workspace, sasrec_checkpoint, capsys):
    code, report = run(capsys, 'eval', '--model', 'sasrec-auc', '--checkpoint', sasrec_checkpoint,
                       '--data', workspace['data'], '--k', '10', '--k', '20', '--negatives', '50', '--seed', '3')
    assert code == 0
    assert report['model'] == 'sasrec-auc'
    assert report['protocol'] == {'k': [10, 20], 'negatives': 50, 'seed': 3}
    assert set(report['metrics']) == {'hr@10', 'ndcg@10', 'hr@20', 'ndcg@20'}
    assert report['dataset']['users'] == 20


@pytest.mark.parametrize('model', ['random', 'top-popular'])
def test_eval_baselines(workspace, capsys, model):
    code, report = run(capsys, 'eval', '--model', model, '--data', workspace['data'])
    assert code == 0
    assert report['protocol'] == {'k': [20], 'negatives': 103, 'seed': 0}
    assert 0.0 <= report['metrics']['hr@20'] <= 1.0


@pytest.mark.parametrize('model', ['repeat-top-pop', 'knn'])
def test_eval_contract_baselines(workspace, capsys, model):
    code, report = run(capsys, 'eval', '--model', model, '--data', workspace['data'], '--neighbors', '10')
    assert code == 0
    assert report['dataset'] == {'contracts': 300, 'classes': 10, 'test_contracts': 60}
    assert set(report['metrics']) == {'hr@5', 'ndcg@5'}


def test_train_and_eval_nbo(tmp_path, workspace, capsys):
    code, result = run(capsys, 'train', '--model', 'nbo', '--data', workspace['data'], '--out', str(tmp_path),
                       '--config', workspace['config'], '--epochs', '2')
    assert code == 0
    assert set(result['best']) == {'epoch', 'train_loss', 'val_hr5', 'val_ndcg5'}
    code, report = run(capsys, 'eval', '--model', 'nbo', '--checkpoint', result['checkpoint'], '--data', workspace['data'])
    assert code == 0
    assert report['model'] == 'nbo'


def test_contract_commands_fit_on_the_training_split_only(tmp_path, workspace, capsys, fitted_contract_ids):
    code, result = run(capsys, 'train', '--model', 'nbo', '--data', workspace['data'], '--out', str(tmp_path),
                       '--config', workspace['config'], '--epochs', '1')
    assert code == 0
    for argv in (('--model', 'nbo', '--checkpoint', result['checkpoint']), ('--model', 'knn', '--neighbors', '10'),
                 ('--model', 'repeat-top-pop')):
        code, _ = run(capsys, 'eval', *argv, '--data', workspace['data'])
        assert code == 0

    records, _ = load_contracts(workspace['data'])
    defaults = NboConfig()
    train, _, _ = split_contracts(records, defaults.seed, defaults.split_fractions)
    train_ids = {r.contract_id for r in train}
    assert fitted_contract_ids['vocabularies'] == train_ids
    assert fitted_contract_ids['numeric_stats'] == train_ids
    assert fitted_contract_ids['popularity'] == train_ids


def test_recommend(workspace, sasrec_checkpoint, capsys):
    code, ranked = run(capsys, 'recommend', '--checkpoint', sasrec_checkpoint, '--data', workspace['data'],
                       '--dealer', '0', '--k', '1')
    assert code == 0
    assert len(ranked) == 1
    assert set(ranked[0]) == {'vehicle_id', 'score'}


def test_recommend_unknown_dealer(workspace, sasrec_checkpoint, capsys):
    code, _ = run(capsys, 'recommend', '--checkpoint', sasrec_checkpoint, '--data', workspace['data'], '--dealer', '999')
    assert code == ExitCode.ARGUMENT_ERROR


def test_trainable_model_needs_a_checkpoint(workspace, capsys):
    code, _ = run(capsys, 'eval', '--model', 'pointwise', '--data', workspace['data'])
    assert code == ExitCode.ARGUMENT_ERROR


def test_checkpoint_kind_mismatch(workspace, sasrec_checkpoint, capsys):
    code, _ = run(capsys, 'eval', '--model', 'pointwise', '--checkpoint', sasrec_checkpoint, '--data', workspace['data'])
    assert code == ExitCode.ARGUMENT_ERROR


def test_missing_data_directory(tmp_path, capsys):
    code, _ = run(capsys, 'eval', '--model', 'random', '--data', str(tmp_path / 'absent'))
    assert code == ExitCode.IO_FAILURE


def test_bad_arguments(capsys):
    code, _ = run(capsys, 'eval', '--model', 'transformer', '--data', 'x')
    assert code == ExitCode.ARGUMENT_ERROR


def test_k_beyond_the_pool_is_an_argument_error(workspace, capsys):
    code, _ = run(capsys, 'eval', '--model', 'random', '--data', workspace['data'], '--k', '60', '--negatives', '50')
    assert code == ExitCode.ARGUMENT_ERROR


def test_gradcheck_passes(capsys):
    code, payload = run(capsys, 'gradcheck')
    assert code == 0
    assert payload['passed']
    assert all(layer['passed'] for layer in payload['layers'])


def test_gradcheck_fails_with_a_corrupted_layer(monkeypatch, capsys):
    monkeypatch.setattr(debug, 'GRADIENT_FAULT', 'attention')
    code, payload = run(capsys, 'gradcheck')
    assert code == ExitCode.VERIFICATION_FAILURE
    assert not payload['passed']
    failed = [layer['name'] for layer in payload['layers'] if not layer['passed']]
    assert failed == ['attention']
