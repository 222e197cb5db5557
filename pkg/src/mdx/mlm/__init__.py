"""Desk-scale masked LM: model, tuning modes, training, verification, I/O."""

from .checkpoint import load_checkpoint, save_checkpoint
from .config import MlmConfig, PeftConfig, TrainConfig, TuningMode
from .gradcheck import grad_check
from .model import ToyMlm, forward_mlm, init_model, mlm_loss
from .peft import PeftState, apply_peft
from .train import LossTrace, encode_corpus, mask_example, train, wrap_ids

__all__ = [
    "MlmConfig",
    "PeftConfig",
    "TrainConfig",
    "TuningMode",
    "ToyMlm",
    "PeftState",
    "LossTrace",
    "init_model",
    "forward_mlm",
    "mlm_loss",
    "apply_peft",
    "train",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
    "encode_corpus",
    "mask_example",
    "wrap_ids",
]
