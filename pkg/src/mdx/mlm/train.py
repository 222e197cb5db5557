"""Masked-LM training loop: seeded masking, AdamW over trainable groups."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import torch

from ..errors import TrainingDivergedError
from ..textproc import CLS_ID, CorpusRecord, PAD_ID, SEP_ID, Vocabulary, tokenize_surfaces
from .config import TrainConfig
from .model import ToyMlm, mlm_loss

_UNMASKABLE = (PAD_ID, CLS_ID, SEP_ID)


@dataclass
class LossTrace:
    """Per-step cross-entropy values plus epoch boundaries."""

    losses: list[float] = field(default_factory=list)
    steps_per_epoch: list[int] = field(default_factory=list)

    def epoch_means(self) -> list[float]:
        means, start = [], 0
        for n in self.steps_per_epoch:
            chunk = self.losses[start : start + n]
            means.append(sum(chunk) / len(chunk) if chunk else math.nan)
            start += n
        return means


def wrap_ids(token_ids: Sequence[int], max_seq_len: int) -> list[int]:
    """[CLS] ids [SEP], truncated to fit max_seq_len."""
    body = list(token_ids)[: max_seq_len - 2]
    return [CLS_ID] + body + [SEP_ID]


def encode_corpus(
    corpus: Iterable[CorpusRecord], vocab: Vocabulary, max_seq_len: int
) -> list[list[int]]:
    examples = []
    for record in corpus:
        ids = vocab.encode(tokenize_surfaces(record.text, record.language))
        if ids:
            examples.append(wrap_ids(ids, max_seq_len))
    return examples


def mask_example(
    ids: Sequence[int], rng: random.Random, cfg: TrainConfig, vocab_size: int
) -> Optional[tuple[list[int], list[int], list[int]]]:
    """BERT-style corruption: sample positions, then mask/randomize/keep.

    Specials are never masked. Returns (corrupted ids, positions, gold ids),
    or None when nothing is maskable.
    """
    from ..textproc import MASK_ID

    candidates = [i for i, t in enumerate(ids) if t not in _UNMASKABLE]
    if not candidates:
        return None
    k = max(1, round(cfg.mask_fraction * len(candidates)))
    positions = sorted(rng.sample(candidates, k))
    corrupted = list(ids)
    gold = [ids[p] for p in positions]
    for p in positions:
        r = rng.random()
        if r < cfg.mask_token_prob:
            corrupted[p] = MASK_ID
        elif r < cfg.mask_token_prob + cfg.random_token_prob:
            corrupted[p] = rng.randrange(5, vocab_size)  # any non-special token
        # else: keep the original token
    return corrupted, positions, gold


def train(
    model: ToyMlm,
    corpus: Iterable[CorpusRecord],
    vocab: Vocabulary,
    config: TrainConfig = TrainConfig(),
) -> tuple[ToyMlm, LossTrace]:
    """Train in place and return (model, per-step loss trace).

    Only parameter groups marked trainable receive updates; the freezing
    mask set by apply_peft is respected bit-for-bit. The same (seed, config,
    corpus) always yields the same trace.
    """
    examples = encode_corpus(corpus, vocab, model.config.max_seq_len)
    if not examples:
        raise ValueError("empty corpus")
    if len(vocab) != model.config.vocab_size:
        raise ValueError(
            f"vocab has {len(vocab)} entries but model expects {model.config.vocab_size}"
        )
    torch.manual_seed(config.seed)  # dropout realization
    rng = random.Random(config.seed)  # shuffling and mask sampling
    params = [p for p in model.parameters() if p.requires_grad]
    if not params:
        raise ValueError("no trainable parameters")
    optimizer = torch.optim.AdamW(
        params,
        lr=config.learning_rate,
        betas=config.betas,
        weight_decay=config.weight_decay,
    )
    trace = LossTrace()
    model.train()
    step = 0
    try:
        for epoch in range(config.epochs):
            order = list(range(len(examples)))
            rng.shuffle(order)
            epoch_steps = 0
            for lo in range(0, len(order), config.batch_size):
                chunk = order[lo : lo + config.batch_size]
                batch = []
                for i in chunk:
                    masked = mask_example(examples[i], rng, config, len(vocab))
                    if masked is not None:
                        batch.append(masked)
                if not batch:
                    continue
                loss = mlm_loss(model, batch)
                value = loss.item()
                if not math.isfinite(value):
                    raise TrainingDivergedError(step=step, epoch=epoch, loss=value)
                optimizer.zero_grad()
                loss.backward()
                optimizer.step()
                trace.losses.append(value)
                epoch_steps += 1
                step += 1
            trace.steps_per_epoch.append(epoch_steps)
    finally:
        model.eval()
    return model, trace
