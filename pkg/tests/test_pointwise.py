# 3rd-party imports
import numpy as np
import pytest

# project imports
from data.splits import leave_one_out_split
from defs import Relation
from evaluation import EvalProtocol, build_cases
from exceptions import ConfigError
from models.base import EvalCase
from models.pointwise import (
    PointwiseConfig,
    PointwiseModel,
    PointwiseRanker,
    load_pointwise,
    pair_inputs,
    save_pointwise,
    train_pointwise,
    training_pairs,
)


TINY = dict(hidden=[8], epochs=2, batch_size=64, validation_negatives=103)


def test_pair_inputs_concatenate_a_relation_one_hot():
    inputs = pair_inputs(np.ones((2, 2)), np.zeros((2, 3)), np.array([Relation.PURCHASE, Relation.BID]))
    assert inputs.shape == (2, 7)
    assert inputs[:, -2:].tolist() == [[1.0, 0.0], [0.0, 1.0]]


@pytest.mark.parametrize('hidden', [[], [4, 0]])
def test_invalid_hidden_widths(hidden):
    with pytest.raises(ConfigError):
        PointwiseConfig(hidden=hidden)


def test_training_pairs_follow_the_train_split(toy_dataset):
    pairs = training_pairs(toy_dataset, leave_one_out_split(toy_dataset))
    # 5 + 2 + 1 training interactions for dealers 10, 11, 12
    assert pairs.shape == (8, 3)
    assert pairs[0].tolist() == [0, 0, int(Relation.BID)]


def test_scores_ignore_history(toy_dataset):
    model = PointwiseModel(2, 3, PointwiseConfig(hidden=[4])).eval()
    ranker = PointwiseRanker(model)
    candidates = np.array([103, 104, 108])
    short = EvalCase(0, 10, 0, (), candidates)
    long = EvalCase(1, 10, 0, toy_dataset.history(10), candidates)
    np.testing.assert_array_equal(ranker.score_case(short, toy_dataset), ranker.score_case(long, toy_dataset))


def test_short_training_run_and_reload(tmp_path, small_synthetic):
    split = leave_one_out_split(small_synthetic)
    model = train_pointwise(small_synthetic, split, PointwiseConfig(**TINY))
    path = str(tmp_path / 'pointwise.ckpt')
    save_pointwise(path, model)
    loaded = load_pointwise(path)
    assert loaded.config == model.config

    cases = build_cases(split, small_synthetic, EvalProtocol(k=[20], negatives=103))
    for a, b in zip(PointwiseRanker(model).score_cases(cases, small_synthetic), PointwiseRanker(loaded).score_cases(cases, small_synthetic)):
        np.testing.assert_array_equal(a, b)
