"""
The Entrypoint to the application. Each subcommand maps onto one function that returns the
JSON-serializable result printed to stdout. Progress and errors are logged to stderr.

Summary of program logic:
    * gen:        write the synthetic auction CSVs, stats.json, and the synthetic contracts
    * train:      fit sasrec-auc, pointwise, or nbo and write a checkpoint plus a training log
    * eval:       score a checkpoint or a baseline under the evaluation protocol
    * recommend:  top-K never-interacted vehicles for one dealer from a sasrec-auc checkpoint
    * gradcheck:  finite-difference check of every layer and training loss

Exit codes:
    0 ok, 2 IO / ingestion failure, 3 numeric failure, 4 argument / compatibility / protocol error,
    5 verification failure

Usage:
    python vehiclerec/main.py gen --out data/
    python vehiclerec/main.py train --model sasrec-auc --data data/ --out runs/
    python vehiclerec/main.py eval --model sasrec-auc --checkpoint runs/sasrec-auc.ckpt --data data/
"""

# stdlib imports
import argparse
import json
import logging
import os
import sys
from typing import Any, List, Optional

# 3rd-party imports
import numpy as np

# project imports
from data.contracts import generate_contracts, load_contracts, split_contracts, write_contracts
from data.loading import load_dataset, write_dataset
from data.splits import SPLIT_NAMES, leave_one_out_split
from data.summary import stats
from data.synthetic import generate_synthetic
from defs import (
    AUCTION_TOP_K,
    CHECKPOINT_SUFFIX,
    CONTRACT_KINDS,
    LOG_FORMAT,
    LOG_LEVEL,
    NBO_TOP_K,
    STATS_JSON,
    TRAIN_LOG,
    TRAINABLE_KINDS,
    ExitCode,
    ModelKind,
)
from evaluation import evaluate, evaluate_nbo
from exceptions import (
    ArgumentError,
    IngestionError,
    NumericalError,
    RecommenderError,
    VerificationError,
)
from models.baselines import PopularityIndex, PopularityRanker, RandomRanker
from models.nbo import LOG_METRIC_NAMES, NboRanker, load_nbo, save_nbo, train_nbo
from models.nbo_baselines import DEFAULT_NEIGHBORS, KnnRanker, RandomClassRanker, RepeatTopPopRanker
from models.pointwise import PointwiseRanker, load_pointwise, save_pointwise, train_pointwise
from models.sasrec_auc import SasrecRanker, load_sasrec, recommend, save_sasrec, sequence_filter, train_sasrec
from settings_manager import RunConfig
from stats import TrainingLog
from verification import run_gradcheck_suite, verify_gradients


logger = logging.getLogger('vehiclerec')

MODEL_CHOICES = [kind.value for kind in ModelKind]


class CommandParser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad arguments; bad arguments are exit code 4 here"""
    def error(self, message: str) -> None:
        raise ArgumentError(f'{self.prog}: {message}')


def load_run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig.from_json(args.config) if args.config else RunConfig()


def dump_json(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True)


# Commands
def cmd_gen(args: argparse.Namespace) -> dict:
    """Write dealers/vehicles/interactions CSVs, stats.json, and contracts CSV + schema"""
    config = load_run_config(args)
    config.update_setting('synthetic', 'seed', args.seed)
    config.update_setting('contracts', 'seed', args.seed)
    logger.info('%s', config)

    dataset = generate_synthetic(config.synthetic)
    write_dataset(dataset, args.out)
    summary = stats(dataset)
    with open(os.path.join(args.out, STATS_JSON), 'w', encoding='utf-8') as f:
        f.write(dump_json(summary) + '\n')

    records, schema = generate_contracts(config.contracts)
    write_contracts(records, schema, args.out)
    logger.info('Wrote %r and %d contracts to %s', dataset, len(records), args.out)
    return summary


def cmd_train(args: argparse.Namespace) -> dict:
    config = load_run_config(args)
    kind = ModelKind(args.model)
    os.makedirs(args.out, exist_ok=True)
    checkpoint_path = os.path.join(args.out, f'{kind.value}{CHECKPOINT_SUFFIX}')
    log_path = os.path.join(args.out, TRAIN_LOG)

    if kind == ModelKind.SASREC_AUC:
        config.update_settings('sasrec', {'seed': args.seed, 'epochs': args.epochs, 'bid_loss_weight': args.bid_loss_weight})
        dataset = load_dataset(args.data)
        log = TrainingLog(log_path)
        model = train_sasrec(dataset, leave_one_out_split(dataset), config.sasrec, log=log)
        save_sasrec(checkpoint_path, model)
    elif kind == ModelKind.POINTWISE:
        config.update_settings('pointwise', {'seed': args.seed, 'epochs': args.epochs})
        dataset = load_dataset(args.data)
        log = TrainingLog(log_path)
        model = train_pointwise(dataset, leave_one_out_split(dataset), config.pointwise, log=log)
        save_pointwise(checkpoint_path, model)
    else:
        config.update_settings('nbo', {'seed': args.seed, 'epochs': args.epochs})
        records, schema = load_contracts(args.data)
        train, validation, _ = split_contracts(records, config.nbo.seed, config.nbo.split_fractions)
        log = TrainingLog(log_path, metric_names=LOG_METRIC_NAMES)
        model = train_nbo(train, validation, schema, config.nbo, log=log)
        save_nbo(checkpoint_path, model)

    if args.bid_loss_weight is not None and kind != ModelKind.SASREC_AUC:
        logger.warning('--bid-loss-weight only applies to %s and was ignored', ModelKind.SASREC_AUC.value)

    logger.info('Saved %s checkpoint to %s', kind.value, checkpoint_path)
    return {
        'model': kind.value,
        'checkpoint': checkpoint_path,
        'train_log': log_path,
        'best': log.best,
    }


def _require_checkpoint(args: argparse.Namespace, kind: ModelKind) -> str:
    if kind in TRAINABLE_KINDS and not args.checkpoint:
        raise ArgumentError(f'--model {kind.value} needs --checkpoint')
    if kind not in TRAINABLE_KINDS and args.checkpoint:
        logger.warning('--checkpoint is ignored for the %s baseline', kind.value)
    return args.checkpoint


def eval_auction(args: argparse.Namespace, kind: ModelKind, config: RunConfig) -> dict:
    checkpoint = _require_checkpoint(args, kind)
    config.update_settings('eval', {'k': args.k, 'negatives': args.negatives, 'seed': args.seed})
    protocol = config.eval

    dataset = load_dataset(args.data)
    split = leave_one_out_split(dataset)
    if kind == ModelKind.SASREC_AUC:
        ranker = SasrecRanker(load_sasrec(checkpoint))
    elif kind == ModelKind.POINTWISE:
        ranker = PointwiseRanker(load_pointwise(checkpoint))
    elif kind == ModelKind.TOP_POPULAR:
        ranker = PopularityRanker(PopularityIndex.from_split(split))
    else:
        ranker = RandomRanker(seed=protocol.seed)

    return json.loads(evaluate(ranker, split, protocol, dataset, which=args.split).to_json())


def eval_contracts(args: argparse.Namespace, kind: ModelKind, config: RunConfig) -> dict:
    checkpoint = _require_checkpoint(args, kind)
    if args.negatives is not None:
        logger.warning('--negatives is ignored: next-best-offer evaluation ranks every class')

    split_seed, fractions = config.nbo.seed, config.nbo.split_fractions
    model = None
    if kind == ModelKind.NBO:
        model = load_nbo(checkpoint)
        # the trained model's own split keeps its test contracts unseen
        split_seed, fractions = model.config.seed, model.config.split_fractions

    records, schema = load_contracts(args.data)
    train, validation, test = split_contracts(records, split_seed, fractions)
    held_out = validation if args.split == 'validation' else test
    seed = args.seed if args.seed is not None else config.eval.seed

    if kind == ModelKind.NBO:
        if model.schema != schema:
            raise ArgumentError(f'the checkpoint was trained on a different contract schema than {args.data}')
        ranker = NboRanker(model)
    elif kind == ModelKind.REPEAT_TOP_POP:
        ranker = RepeatTopPopRanker.from_train(train, schema.n_classes)
    elif kind == ModelKind.KNN:
        ranker = KnnRanker(train, schema, k=args.neighbors)
    else:
        ranker = RandomClassRanker(schema.n_classes, seed=seed)

    report = evaluate_nbo(ranker, held_out, schema.n_classes, k=args.k or [NBO_TOP_K], seed=seed, total_contracts=len(records))
    return json.loads(report.to_json())


def cmd_eval(args: argparse.Namespace) -> dict:
    config = load_run_config(args)
    kind = ModelKind(args.model)
    if kind in CONTRACT_KINDS or (kind == ModelKind.RANDOM and args.contracts):
        return eval_contracts(args, kind, config)
    return eval_auction(args, kind, config)


def cmd_recommend(args: argparse.Namespace) -> List[dict]:
    model = load_sasrec(args.checkpoint)
    dataset = load_dataset(args.data)

    history = sequence_filter(dataset.history(args.dealer), model.config.use_bid_inputs)
    seen = dataset.interacted_vehicle_ids(args.dealer)
    candidate_ids = np.array([v for v in dataset.vehicle_ids if int(v) not in seen], dtype=np.int64)
    if len(candidate_ids) == 0:
        raise ArgumentError(f'dealer {args.dealer} has interacted with every vehicle, nothing to recommend')

    ranked = recommend(
        model,
        dataset.features_of(i.vehicle_id for i in history),
        [int(i.relation) for i in history],
        candidate_ids,
        dataset.features_of(candidate_ids),
        k=args.k,
    )
    return [{'vehicle_id': vehicle_id, 'score': score} for vehicle_id, score in ranked]


def cmd_gradcheck(args: argparse.Namespace) -> dict:
    results = run_gradcheck_suite()
    payload = {'layers': [r.to_json() for r in results], 'passed': all(r.passed for r in results)}
    if not payload['passed']:
        # the report still goes to stdout before the failure exit code
        print(dump_json(payload))
        verify_gradients(results)
    return payload


COMMAND_MAP = {
    'gen': cmd_gen,
    'train': cmd_train,
    'eval': cmd_eval,
    'recommend': cmd_recommend,
    'gradcheck': cmd_gradcheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = CommandParser(prog='vehiclerec', description='Vehicle auction and next-best-offer recommenders')
    subparsers = parser.add_subparsers(dest='command', required=True, parser_class=CommandParser)

    gen = subparsers.add_parser('gen', help='generate synthetic auction data and contracts')
    gen.add_argument('--out', required=True, help='output directory')
    gen.add_argument('--config', help='run config JSON')
    gen.add_argument('--seed', type=int, help='overrides the synthetic and contract seeds')

    train = subparsers.add_parser('train', help='train a model and write a checkpoint')
    train.add_argument('--model', required=True, choices=[kind.value for kind in TRAINABLE_KINDS])
    train.add_argument('--data', required=True, help='dataset directory')
    train.add_argument('--out', required=True, help='directory for the checkpoint and training log')
    train.add_argument('--config', help='run config JSON')
    train.add_argument('--seed', type=int)
    train.add_argument('--epochs', type=int)
    train.add_argument('--bid-loss-weight', type=float, dest='bid_loss_weight')

    evaluation = subparsers.add_parser('eval', help='evaluate a checkpoint or a baseline')
    evaluation.add_argument('--model', required=True, choices=MODEL_CHOICES)
    evaluation.add_argument('--checkpoint')
    evaluation.add_argument('--data', required=True, help='dataset directory')
    evaluation.add_argument('--config', help='run config JSON')
    evaluation.add_argument('--k', type=int, action='append', help='cutoff, repeatable')
    evaluation.add_argument('--negatives', type=int)
    evaluation.add_argument('--seed', type=int)
    evaluation.add_argument('--split', choices=SPLIT_NAMES, default='test')
    evaluation.add_argument('--neighbors', type=int, default=DEFAULT_NEIGHBORS, help='k of the knn baseline')
    evaluation.add_argument('--contracts', action='store_true', help='evaluate the random baseline on the contracts')

    recommendation = subparsers.add_parser('recommend', help='top-K vehicles for one dealer')
    recommendation.add_argument('--checkpoint', required=True)
    recommendation.add_argument('--data', required=True, help='dataset directory')
    recommendation.add_argument('--dealer', required=True, type=int)
    recommendation.add_argument('--k', type=int, default=AUCTION_TOP_K)

    subparsers.add_parser('gradcheck', help='finite-difference check of every layer')
    return parser


def exit_code_for(error: Exception) -> ExitCode:
    if isinstance(error, (IngestionError, OSError)):
        return ExitCode.IO_FAILURE
    if isinstance(error, NumericalError):
        return ExitCode.NUMERIC_FAILURE
    if isinstance(error, VerificationError):
        return ExitCode.VERIFICATION_FAILURE
    return ExitCode.ARGUMENT_ERROR


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT, stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        result = COMMAND_MAP[args.command](args)
    except (RecommenderError, OSError) as exc:
        code = exit_code_for(exc)
        logger.error('%s (exit code %d)', exc, int(code))
        return int(code)

    print(dump_json(result))
    return int(ExitCode.OK)


if __name__ == "__main__":
    sys.exit(main())
