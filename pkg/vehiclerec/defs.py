"""
This module defines Global Constants and Definitions.

These constants do not have any dependencies and can be used across all files.
"""

# stdlib imports
from enum import Enum, IntEnum
import os


# Interaction relations
class Relation(IntEnum):
    PURCHASE = 0
    BID = 1

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "Relation":
        return cls[label.strip().upper()]


NUM_RELATIONS = len(Relation)


# Model kinds, also used as checkpoint headers
class ModelKind(str, Enum):
    SASREC_AUC = 'sasrec-auc'
    POINTWISE = 'pointwise'
    NBO = 'nbo'
    RANDOM = 'random'
    TOP_POPULAR = 'top-popular'
    REPEAT_TOP_POP = 'repeat-top-pop'
    KNN = 'knn'


TRAINABLE_KINDS = [ModelKind.SASREC_AUC, ModelKind.POINTWISE, ModelKind.NBO]
CONTRACT_KINDS = [ModelKind.NBO, ModelKind.REPEAT_TOP_POP, ModelKind.KNN]


# Process exit codes
class ExitCode(IntEnum):
    OK = 0
    IO_FAILURE = 2
    NUMERIC_FAILURE = 3
    ARGUMENT_ERROR = 4
    VERIFICATION_FAILURE = 5


# Data files
DEALERS_CSV = 'dealers.csv'
VEHICLES_CSV = 'vehicles.csv'
INTERACTIONS_CSV = 'interactions.csv'
CONTRACTS_CSV = 'contracts.csv'
CONTRACTS_SCHEMA = 'contracts_schema.json'
STATS_JSON = 'stats.json'
TRAIN_LOG = 'train_log.jsonl'
CHECKPOINT_SUFFIX = '.ckpt'

FEATURE_PREFIX = 'f'
CSV_FLOAT_FORMAT = '%.9g'


# Evaluation defaults
AUCTION_TOP_K = 20
NBO_TOP_K = 5
DEFAULT_EVAL_NEGATIVES = 103


# Numerics
LAYER_NORM_EPS = 1e-5
EMBEDDING_INIT_STD = 0.02
GRAD_CHECK_EPSILON = 1e-4
GRAD_CHECK_TOLERANCE = 1e-5
INFERENCE_BLOCK_ROWS = 64


# Checkpoints
CHECKPOINT_MAGIC = b'VRECCKPT'
CHECKPOINT_FORMAT_VERSION = 1


# Logging
LOG_LEVEL_ENV_VAR = os.environ.get('VEHICLEREC_LOG_LEVEL')

LOG_LEVEL = 'INFO' if LOG_LEVEL_ENV_VAR is None else LOG_LEVEL_ENV_VAR.upper()
LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'
