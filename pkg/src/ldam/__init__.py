"""Label-dependent attention model for multimodal risk prediction.

The package couples a small float64 autodiff core (tensor, recurrent,
optim) with the attention network itself (model), data handling and a
planted-signal generator (data), embedding providers (embeddings),
multilabel metrics (metrics), training (training, checkpoint), and
interpretability exports (explain).  ``ldam.cli`` is the command-line
front end.
"""

from .data import (EhrSample, SynthSpec, TaskSchema, default_schema,
                   default_synth_spec, generate_synthetic, load_dataset,
                   save_dataset, split)
from .embeddings import EmbeddingProvider, embed_names, embed_note
from .model import (ForwardOutput, ModelConfig, ModelParams, build_task_embeddings,
                    forward, loss)
from .metrics import MetricsReport, evaluate_predictions, roc_auc
from .tensor import Tensor
from .training import TrainConfig, TrainLog, evaluate, train

__all__ = [
    "EhrSample", "SynthSpec", "TaskSchema", "default_schema", "default_synth_spec",
    "generate_synthetic", "load_dataset", "save_dataset", "split",
    "EmbeddingProvider", "embed_names", "embed_note",
    "ForwardOutput", "ModelConfig", "ModelParams", "build_task_embeddings",
    "forward", "loss",
    "MetricsReport", "evaluate_predictions", "roc_auc",
    "Tensor",
    "TrainConfig", "TrainLog", "evaluate", "train",
]

__version__ = "0.1.0"
