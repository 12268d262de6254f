from .core import (
    ModelConfig,
    init,
    forward,
    loss_and_grads,
    param_count,
    param_names,
    desk_teacher,
    desk_student,
    PRESETS,
)
from .train import TrainConfig, train
from .search import (
    GenerationResult,
    decode_greedy,
    decode_greedy_batch,
    decode_beam,
    greedy_search,
    beam_search,
    sequence_logprob,
)
from .checkpoint import Checkpoint, save_checkpoint, load_checkpoint

__all__ = [
    "ModelConfig",
    "init",
    "forward",
    "loss_and_grads",
    "param_count",
    "param_names",
    "desk_teacher",
    "desk_student",
    "PRESETS",
    "TrainConfig",
    "train",
    "GenerationResult",
    "decode_greedy",
    "decode_greedy_batch",
    "decode_beam",
    "greedy_search",
    "beam_search",
    "sequence_logprob",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
]
