"""
This module defines how training progress is tracked and recorded.

TrackerStat keeps running statistics of a value that updates frequently (the per-batch loss).
TrainingLog writes one JSON line per epoch and echoes it to the log.
"""

# stdlib imports
import json
import logging
from typing import Any, Dict, List, Optional, Union


logger = logging.getLogger(__name__)


class TrackerStat:
    """
    Tracks information about a numerical Stat that changes/updates frequently.

    Tracks the following:
        1) Min. value recorded
        2) Avg. of all values recorded
        3) The most recent value recorded
        4) Max. value recorded
        5) Total number of values recorded

    """
    def __init__(self) -> None:
        self.sum = 0.0
        self.last = 0.0
        self.count = 0
        self.min = float('inf')
        self.max = float('-inf')

    @property
    def avg(self) -> float:
        """
        Calculate the average of all tracked values
        """
        if self.count > 0:
            return self.sum / self.count
        else:
            return 0.0

    @property
    def list(self) -> List[Union[int, float]]:
        """
        All tracked values as a List
        """
        return [self.min, self.avg, self.last, self.max, self.count]

    def add(self, val: float) -> None:
        """
        Add a new value to be tracked
        """
        self.last = val
        self.sum += val
        self.count += 1
        if val > self.max:
            self.max = val
        if val < self.min:
            self.min = val

    def __str__(self) -> str:
        return str(self.avg)

    def __repr__(self) -> str:
        return str(f'TrackerStat(Average={self.avg}, Last={self.last} Count={self.count}, Min={self.min}, Max={self.max})')


class TrainingLog:
    """
    Per-epoch training records: {epoch, train_loss, <validation metrics>}.

    `metric_names` maps the evaluation metric keys (e.g. "hr@20") onto log field names
    (e.g. "val_hr20"). With a path, records are written as JSON lines as they arrive.
    """
    def __init__(self, path: Optional[str] = None, metric_names: Dict[str, str] = None) -> None:
        self.path = path
        self.metric_names = metric_names if metric_names is not None else {'hr@20': 'val_hr20', 'ndcg@20': 'val_ndcg20'}
        self.records: List[Dict[str, Any]] = []
        if self.path is not None:
            # start a fresh file on every run
            open(self.path, 'w', encoding='utf-8').close()

    def record(
        self,
        epoch: int,
        train_loss: Optional[float],
        metrics: Optional[Dict[str, float]],
        losses: Optional[TrackerStat] = None,
    ) -> Dict[str, Any]:
        entry = {'epoch': epoch, 'train_loss': train_loss}
        for metric, field_name in self.metric_names.items():
            entry[field_name] = metrics.get(metric) if metrics else None
        self.records.append(entry)

        if self.path is not None:
            with open(self.path, 'a', encoding='utf-8') as f:
                f.write(json.dumps(entry, sort_keys=True) + '\n')

        logger.info('Epoch %s', ' '.join(f'{key}={value}' for key, value in entry.items()))
        if losses is not None and losses.count:
            logger.debug('Epoch %d batch losses: %r', epoch, losses)
        return entry

    @property
    def best(self) -> Optional[Dict[str, Any]]:
        """The record with the highest first validation metric"""
        field_name = next(iter(self.metric_names.values()))
        scored = [r for r in self.records if r[field_name] is not None]
        return max(scored, key=lambda r: r[field_name]) if scored else None
