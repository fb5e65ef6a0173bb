# stdlib imports
import json
import math

# 3rd-party imports
import numpy as np
import pytest

# project imports
from data.splits import leave_one_out_split
from evaluation import (
    EvalProtocol,
    build_cases,
    evaluate,
    evaluate_nbo,
    expected_random_hr,
    hr_at_k,
    ndcg_at_k,
    rank_of_positive,
    ranking_metrics,
)
from exceptions import ConfigError, ProtocolError
from models.base import ClassRanker, Ranker, rank_order, top_k
from models.baselines import RandomRanker


def brute_force_rank(scores, positive_index, ids):
    order = sorted(range(len(scores)), key=lambda idx: (-scores[idx], ids[idx]))
    return order.index(positive_index) + 1


def test_rank_and_metrics_match_a_full_sort():
    rng = np.random.default_rng(0)
    ranks, expected = [], []
    for _ in range(1000):
        pool = int(rng.integers(1, 51))
        # few distinct scores so ties are common
        scores = rng.integers(0, 4, size=pool).astype(float)
        ids = rng.permutation(1000)[:pool]
        positive = int(rng.integers(0, pool))
        ranks.append(rank_of_positive(scores, positive, ids))
        expected.append(brute_force_rank(list(scores), positive, list(ids)))
    assert ranks == expected
    for k in (1, 5, 10, 20, 50):
        assert hr_at_k(ranks, k) == pytest.approx(sum(rank <= k for rank in expected) / 1000)
        assert ndcg_at_k(ranks, k) == pytest.approx(sum(1 / math.log2(rank + 1) for rank in expected if rank <= k) / 1000)


class VehicleTableRanker(Ranker):
    def __init__(self, table):
        self.table = table

    def score_case(self, case, dataset):
        return self.table[case.candidate_ids]


def test_evaluate_matches_an_independent_reranking(small_synthetic):
    split = leave_one_out_split(small_synthetic)
    table = np.random.default_rng(1).integers(0, 5, size=small_synthetic.n_vehicles).astype(float)
    interacted = {}
    for interaction in small_synthetic.interactions:
        interacted.setdefault(interaction.dealer_id, set()).add(interaction.vehicle_id)

    all_ranks = []
    for seed in range(60):
        negatives = 5 + seed % 45
        report = evaluate(VehicleTableRanker(table), split, EvalProtocol(k=[1, 5], negatives=negatives, seed=seed), small_synthetic)

        ranks = []
        for case_index, target in enumerate(split.test):
            eligible = np.array(sorted(set(range(small_synthetic.n_vehicles)) - interacted[target.dealer_id]))
            pool = [target.vehicle_id] + np.random.default_rng([seed, case_index]).choice(eligible, size=negatives, replace=False).tolist()
            ranks.append(brute_force_rank([table[v] for v in pool], 0, pool))
        ranks = np.array(ranks)
        assert report.metrics['hr@5'] == pytest.approx(np.mean(ranks <= 5))
        assert report.metrics['ndcg@5'] == pytest.approx(np.mean(np.where(ranks <= 5, 1.0 / np.log2(ranks + 1.0), 0.0)))
        assert report.metrics['hr@1'] == pytest.approx(np.mean(ranks == 1))
        all_ranks.extend(ranks.tolist())
    assert len(all_ranks) >= 1000


def test_rank_order_breaks_ties_by_id():
    ids = np.array([7, 3, 5, 1])
    scores = np.array([1.0, 2.0, 1.0, 2.0])
    assert ids[rank_order(scores, ids)].tolist() == [1, 3, 5, 7]
    assert top_k(ids, scores, 2) == [(1, 2.0), (3, 2.0)]


def test_metrics_by_hand():
    ranks = [1, 3, 25]
    assert hr_at_k(ranks, 20) == pytest.approx(2 / 3)
    assert ndcg_at_k(ranks, 20) == pytest.approx((1.0 + 0.5) / 3)
    assert ranking_metrics([1], [1, 5]) == {'hr@1': 1.0, 'ndcg@1': 1.0, 'hr@5': 1.0, 'ndcg@5': 1.0}


def test_metrics_need_cases():
    with pytest.raises(ProtocolError):
        hr_at_k([], 20)
    with pytest.raises(ProtocolError):
        ndcg_at_k([], 20)


@pytest.mark.parametrize('kwargs', [
    {'k': [], 'negatives': 10},
    {'k': [0], 'negatives': 10},
    {'k': [12], 'negatives': 10},
    {'k': [5], 'negatives': 0},
])
def test_invalid_protocol(kwargs):
    with pytest.raises(ConfigError):
        EvalProtocol(**kwargs)


def test_protocol_accepts_a_single_k():
    assert EvalProtocol(k=10).k == [10]


def test_cases_sample_only_never_interacted_vehicles(toy_dataset):
    split = leave_one_out_split(toy_dataset)
    cases = build_cases(split, toy_dataset, EvalProtocol(k=[3], negatives=5, seed=1))
    assert [(c.dealer_id, int(c.candidate_ids[0])) for c in cases] == [(10, 107), (11, 106)]
    for case in cases:
        negatives = set(case.candidate_ids[1:].tolist())
        assert len(negatives) == 5
        assert not negatives & toy_dataset.interacted_vehicle_ids(case.dealer_id)
        assert all(i.timestamp < case.timestamp for i in case.history)


def test_negatives_depend_only_on_seed_and_case_index(toy_dataset):
    split = leave_one_out_split(toy_dataset)
    cases = build_cases(split, toy_dataset, EvalProtocol(k=[3], negatives=5, seed=9))
    eligible = np.array([103, 104, 106, 108, 109, 110, 111])
    expected = np.random.default_rng([9, 0]).choice(eligible, size=5, replace=False)
    np.testing.assert_array_equal(cases[0].candidate_ids[1:], expected)

    again = build_cases(split, toy_dataset, EvalProtocol(k=[3], negatives=5, seed=9))
    for first, second in zip(cases, again):
        np.testing.assert_array_equal(first.candidate_ids, second.candidate_ids)


def test_too_few_negatives(toy_dataset):
    split = leave_one_out_split(toy_dataset)
    with pytest.raises(ProtocolError, match='dealer 10'):
        build_cases(split, toy_dataset, EvalProtocol(k=[1], negatives=8))


def test_evaluate_reports_protocol_and_dataset(toy_dataset):
    split = leave_one_out_split(toy_dataset)
    report = evaluate(RandomRanker(0), split, EvalProtocol(k=[3], negatives=5), toy_dataset)
    payload = json.loads(report.to_json())
    assert payload['model'] == 'random'
    assert payload['protocol'] == {'k': [3], 'negatives': 5, 'seed': 0}
    assert payload['dataset'] == {'users': 3, 'items': 12, 'purchases': 8, 'bids': 4}
    assert set(payload['metrics']) == {'hr@3', 'ndcg@3'}


class FixedClassRanker(ClassRanker):
    def __init__(self, scores):
        self.scores = np.asarray(scores, dtype=float)

    def class_scores(self, records):
        return self.scores[:len(records)]


class Contract:
    def __init__(self, target_class):
        self.target_class = target_class


def test_evaluate_nbo_ranks_over_every_class():
    ranker = FixedClassRanker([[0.1, 0.9, 0.5], [0.2, 0.2, 0.2]])
    report = evaluate_nbo(ranker, [Contract(2), Contract(1)], n_classes=3, k=[1, 2], seed=4, total_contracts=10)
    # ranks: 2 and 2 (tie with class 0)
    assert report.metrics['hr@1'] == 0.0
    assert report.metrics['hr@2'] == 1.0
    assert report.metrics['ndcg@2'] == pytest.approx(1 / np.log2(3))
    assert report.dataset == {'contracts': 10, 'classes': 3, 'test_contracts': 2}
    assert report.protocol == {'k': [1, 2], 'negatives': 0, 'seed': 4}


def test_evaluate_nbo_rejects_bad_input():
    ranker = FixedClassRanker([[0.0, 1.0]])
    with pytest.raises(ProtocolError):
        evaluate_nbo(ranker, [], n_classes=2)
    with pytest.raises(ConfigError):
        evaluate_nbo(ranker, [Contract(0)], n_classes=2, k=[3])


def test_expected_random_hr():
    assert expected_random_hr(20, 104) == pytest.approx(20 / 104)


def test_nbo_metrics_match_brute_force_reranking():
    rng = np.random.default_rng(0)
    n_cases, n_classes = 1000, 50
    scores = rng.integers(0, 10, size=(n_cases, n_classes)).astype(float)
    targets = rng.integers(0, n_classes, size=n_cases)
    report = evaluate_nbo(FixedClassRanker(scores), [Contract(int(t)) for t in targets], n_classes, k=[5, 20])

    ranks = np.array([brute_force_rank(list(s), int(t), list(range(n_classes))) for s, t in zip(scores, targets)])
    for k in (5, 20):
        assert report.metrics[f'hr@{k}'] == np.mean(ranks <= k)
        assert report.metrics[f'ndcg@{k}'] == np.mean(np.where(ranks <= k, 1.0 / np.log2(ranks + 1.0), 0.0))
