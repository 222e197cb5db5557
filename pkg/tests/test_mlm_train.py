import math
import random

import pytest
import torch

from mdx.errors import TrainingDivergedError
from mdx.mlm import (
    MlmConfig,
    TrainConfig,
    TuningMode,
    apply_peft,
    grad_check,
    init_model,
    mask_example,
    train,
    wrap_ids,
)
from mdx.textproc import CLS_ID, CorpusRecord, MASK_ID, SEP_ID, build_vocab

GRAD_CFG = MlmConfig(
    vocab_size=16, d_model=8, n_layers=1, n_heads=2, d_ff=12, max_seq_len=12,
    dropout_rate=0.0, init_seed=7,
)
GRAD_BATCH = [
    ([5, MASK_ID, 7, 8], [1, 3], [6, 8]),
    ([9, 10, MASK_ID], [2], [11]),
]


def _synthetic_corpus(n=200, seed=0):
    rng = random.Random(seed)
    subjects = ["cat", "dog", "bird", "horse"]
    verbs = ["chased", "found", "saw", "liked"]
    objects = ["ball", "stick", "shadow", "river"]
    return [
        CorpusRecord(
            "EN",
            f"the {rng.choice(subjects)} {rng.choice(verbs)} the {rng.choice(objects)}",
            str(i),
        )
        for i in range(n)
    ]


def test_wrap_ids_adds_specials_and_truncates():
    assert wrap_ids([7, 8, 9], 16) == [CLS_ID, 7, 8, 9, SEP_ID]
    wrapped = wrap_ids(list(range(10, 40)), 8)
    assert len(wrapped) == 8 and wrapped[0] == CLS_ID and wrapped[-1] == SEP_ID


def test_mask_example_never_touches_specials():
    rng = random.Random(0)
    ids = wrap_ids([7, 8, 9, 10, 11, 12], 16)
    for _ in range(50):
        out = mask_example(ids, rng, TrainConfig(), vocab_size=16)
        corrupted, positions, gold = out
        assert 0 not in positions and len(ids) - 1 not in positions
        assert corrupted[0] == CLS_ID and corrupted[-1] == SEP_ID
        for p, g in zip(positions, gold):
            assert g == ids[p]


def test_mask_example_mask_fraction():
    rng = random.Random(1)
    ids = wrap_ids(list(range(5, 105)), 128)  # 100 maskable
    _, positions, _ = mask_example(ids, rng, TrainConfig(), vocab_size=128)
    assert len(positions) == 15


def test_mask_example_all_specials_returns_none():
    rng = random.Random(0)
    assert mask_example([CLS_ID, SEP_ID], rng, TrainConfig(), 16) is None


def test_training_reduces_epoch_mean_loss():
    corpus = _synthetic_corpus()
    vocab = build_vocab(corpus, min_freq=1)
    cfg = MlmConfig(vocab_size=len(vocab), d_model=32, n_layers=2, n_heads=4, d_ff=64,
                    max_seq_len=16, dropout_rate=0.1, init_seed=0)
    model = init_model(cfg)
    _, trace = train(model, corpus, vocab, TrainConfig(epochs=2, seed=42, batch_size=16))
    means = trace.epoch_means()
    assert len(means) == 2
    assert means[1] < means[0]


def test_training_deterministic_given_seed():
    corpus = _synthetic_corpus(80)
    vocab = build_vocab(corpus, min_freq=1)
    cfg = MlmConfig(vocab_size=len(vocab), d_model=16, n_layers=1, n_heads=2, d_ff=32,
                    max_seq_len=16, dropout_rate=0.1, init_seed=3)
    traces = []
    for _ in range(2):
        model = init_model(cfg)
        _, trace = train(model, corpus, vocab, TrainConfig(epochs=1, seed=42, batch_size=16))
        traces.append(trace.losses)
    assert traces[0] == traces[1]


def test_training_seed_changes_trace():
    corpus = _synthetic_corpus(80)
    vocab = build_vocab(corpus, min_freq=1)
    cfg = MlmConfig(vocab_size=len(vocab), d_model=16, n_layers=1, n_heads=2, d_ff=32,
                    max_seq_len=16, dropout_rate=0.1, init_seed=3)
    _, t1 = train(init_model(cfg), corpus, vocab, TrainConfig(epochs=1, seed=1, batch_size=16))
    _, t2 = train(init_model(cfg), corpus, vocab, TrainConfig(epochs=1, seed=2, batch_size=16))
    assert t1.losses != t2.losses


def test_training_rejects_empty_corpus():
    vocab = build_vocab([CorpusRecord("EN", "seed text", "0")], min_freq=1)
    cfg = MlmConfig(vocab_size=len(vocab), d_model=8, n_layers=1, n_heads=2, d_ff=8,
                    max_seq_len=8, dropout_rate=0.0)
    with pytest.raises(ValueError, match="empty corpus"):
        train(init_model(cfg), [], vocab, TrainConfig(epochs=1))


def test_training_aborts_on_nonfinite_loss():
    corpus = _synthetic_corpus(20)
    vocab = build_vocab(corpus, min_freq=1)
    cfg = MlmConfig(vocab_size=len(vocab), d_model=8, n_layers=1, n_heads=2, d_ff=8,
                    max_seq_len=16, dropout_rate=0.0)
    model = init_model(cfg)
    with torch.no_grad():
        model.tok_emb.weight[0, 0] = float("nan")
    with pytest.raises(TrainingDivergedError):
        train(model, corpus, vocab, TrainConfig(epochs=1, batch_size=8))


def test_loss_trace_values_finite_nonnegative():
    corpus = _synthetic_corpus(40)
    vocab = build_vocab(corpus, min_freq=1)
    cfg = MlmConfig(vocab_size=len(vocab), d_model=16, n_layers=1, n_heads=2, d_ff=16,
                    max_seq_len=16, dropout_rate=0.1)
    _, trace = train(init_model(cfg), corpus, vocab, TrainConfig(epochs=1, batch_size=8))
    assert trace.losses and all(math.isfinite(v) and v >= 0 for v in trace.losses)


@pytest.mark.parametrize(
    "mode, group",
    [
        (TuningMode.FULL, "embeddings.token"),
        (TuningMode.FULL, "layer0.attn"),
        (TuningMode.FULL, "layer0.ffn"),
        (TuningMode.FULL, "layer0.norm"),
        (TuningMode.FULL, "embeddings.position"),
        (TuningMode.FULL, "head.bias"),
        (TuningMode.ADAPTER, "peft.adapter.layer0.attn"),
        (TuningMode.ADAPTER, "peft.adapter.layer0.ffn"),
        (TuningMode.PREFIX, "peft.prefix.layer0"),
        (TuningMode.PROMPT, "peft.prompt"),
    ],
)
def test_grad_check_per_group(mode, group):
    model = apply_peft(init_model(GRAD_CFG), mode, peft_grad_cfg())
    err = grad_check(model, GRAD_BATCH, group, n_probes=6, seed=1)
    assert err < 1e-4, f"{group}: {err}"


def peft_grad_cfg():
    from mdx.mlm import PeftConfig

    return PeftConfig(adapter_bottleneck_dim=4, prefix_length=3, prompt_length=3,
                      peft_init_seed=2)


def test_grad_check_rejects_frozen_group():
    model = apply_peft(init_model(GRAD_CFG), TuningMode.ADAPTER, peft_grad_cfg())
    with pytest.raises(ValueError, match="frozen"):
        grad_check(model, GRAD_BATCH, "layer0.attn")


def test_grad_check_rejects_unknown_group():
    model = init_model(GRAD_CFG)
    with pytest.raises(ValueError, match="unknown parameter group"):
        grad_check(model, GRAD_BATCH, "nope")


def test_grad_check_adapter_needs_nonzero_up():
    # at init the up-projection is zero; gradients there are still well-defined
    # and the check must pass, including after a perturbation
    model = apply_peft(init_model(GRAD_CFG), TuningMode.ADAPTER, peft_grad_cfg())
    with torch.no_grad():
        g = torch.Generator().manual_seed(4)
        for adapter in list(model.tuning.adapters_attn) + list(model.tuning.adapters_ffn):
            adapter.up.weight.uniform_(-0.3, 0.3, generator=g)
    err = grad_check(model, GRAD_BATCH, "peft.adapter.layer0.attn", n_probes=8, seed=0)
    assert err < 1e-4
