"""Weakly supervised text-to-audio grounding on synthetic data.

The package trains a frame-phrase similarity model from clip-level labels
only, with interchangeable pooling strategies, negative phrase samplers, and
teacher-based self-supervision, then scores frame predictions against hidden
strong labels with PSDS and Th-AUC.
"""

from .errors import ConfigError, DataError, SamplingError, TaggroundError
from .estimator import TextAudioGrounder, TrainConfig, train
from .evaluation import EvalConfig, evaluate, psds, roc_points, th_auc
from .model import ModelParams, infer, load_checkpoint, save_checkpoint
from .pooling import audio_pool, text_pool
from .rng import Rng
from .sampling import NegativeSampler, OracleEmbedder, build_pool, kmeans
from .selfsup import Teacher, load_teacher
from .synthdata import SynthConfig, generate, make_short_subset, write_dataset
from .types import ClipRecord, FrameSequence, PhraseQuery

__version__ = "0.1.0"

__all__ = [
    "ClipRecord",
    "ConfigError",
    "DataError",
    "EvalConfig",
    "FrameSequence",
    "ModelParams",
    "NegativeSampler",
    "OracleEmbedder",
    "PhraseQuery",
    "Rng",
    "SamplingError",
    "SynthConfig",
    "TaggroundError",
    "Teacher",
    "TextAudioGrounder",
    "TrainConfig",
    "audio_pool",
    "build_pool",
    "evaluate",
    "generate",
    "infer",
    "kmeans",
    "load_checkpoint",
    "load_teacher",
    "make_short_subset",
    "psds",
    "roc_points",
    "save_checkpoint",
    "text_pool",
    "th_auc",
    "train",
    "write_dataset",
]
