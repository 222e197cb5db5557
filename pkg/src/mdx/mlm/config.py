"""Configuration records for the desk-scale masked LM and its tuning modes."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class TuningMode(str, Enum):
    FULL = "full"
    ADAPTER = "adapter"
    PREFIX = "prefix"
    PROMPT = "prompt"


@dataclass(frozen=True)
class MlmConfig:
    vocab_size: int = 4000
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    max_seq_len: int = 128
    dropout_rate: float = 0.1
    init_seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_seq_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads


@dataclass(frozen=True)
class PeftConfig:
    adapter_bottleneck_dim: int = 16
    prefix_length: int = 8
    prompt_length: int = 8
    peft_init_seed: int = 0

    def __post_init__(self):
        for name in ("adapter_bottleneck_dim", "prefix_length", "prompt_length"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2
    seed: int = 42
    batch_size: int = 32
    learning_rate: float = 5e-4
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    mask_fraction: float = 0.15
    mask_token_prob: float = 0.8
    random_token_prob: float = 0.1
    keep_prob: float = 0.1

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        total = self.mask_token_prob + self.random_token_prob + self.keep_prob
        if abs(total - 1.0) > 1e-9:
            raise ValueError("mask/random/keep probabilities must sum to 1")
        if not 0.0 < self.mask_fraction <= 1.0:
            raise ValueError("mask_fraction must be in (0, 1]")
