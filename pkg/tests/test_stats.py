# stdlib imports
import json

# 3rd-party imports
import pytest

# project imports
from stats import TrackerStat, TrainingLog


def test_tracker_stat():
    stat = TrackerStat()
    assert stat.avg == 0.0
    for value in (3.0, 1.0, 2.0):
        stat.add(value)
    assert stat.list == [1.0, 2.0, 2.0, 3.0, 3]


def test_training_log_writes_json_lines(tmp_path):
    path = tmp_path / 'train_log.jsonl'
    log = TrainingLog(str(path))
    log.record(0, None, {'hr@20': 0.1, 'ndcg@20': 0.05})
    log.record(1, 0.7, {'hr@20': 0.3, 'ndcg@20': 0.2})
    log.record(2, 0.6, {'hr@20': 0.2, 'ndcg@20': 0.1})

    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert lines[0] == {'epoch': 0, 'train_loss': None, 'val_hr20': 0.1, 'val_ndcg20': 0.05}
    assert lines[1]['train_loss'] == pytest.approx(0.7)
    assert log.best['epoch'] == 1


def test_training_log_starts_a_fresh_file(tmp_path):
    path = tmp_path / 'train_log.jsonl'
    path.write_text('stale\n')
    TrainingLog(str(path)).record(0, None, None)
    assert json.loads(path.read_text()) == {'epoch': 0, 'train_loss': None, 'val_hr20': None, 'val_ndcg20': None}


def test_custom_metric_names():
    log = TrainingLog(metric_names={'hr@5': 'val_hr5'})
    log.record(0, None, {'hr@5': 0.4, 'hr@20': 0.9})
    assert log.records == [{'epoch': 0, 'train_loss': None, 'val_hr5': 0.4}]
    assert TrainingLog().best is None
