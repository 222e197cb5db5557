import pytest
import torch

from mdx.mlm import (
    MlmConfig,
    PeftConfig,
    TrainConfig,
    TuningMode,
    apply_peft,
    forward_mlm,
    init_model,
    load_checkpoint,
    mlm_loss,
    save_checkpoint,
    train,
)
from mdx.textproc import CorpusRecord, build_vocab

SMALL_CFG = MlmConfig(
    vocab_size=24, d_model=8, n_layers=2, n_heads=2, d_ff=16, max_seq_len=16,
    dropout_rate=0.0, init_seed=11,
)
PEFT_CFG = PeftConfig(adapter_bottleneck_dim=4, prefix_length=3, prompt_length=3, peft_init_seed=5)

ALL_MODES = [TuningMode.FULL, TuningMode.ADAPTER, TuningMode.PREFIX, TuningMode.PROMPT]


def test_adapter_forward_identical_at_init():
    base = init_model(SMALL_CFG)
    adapted = apply_peft(init_model(SMALL_CFG), TuningMode.ADAPTER, PEFT_CFG)
    ids, positions = [5, 6, 7, 8, 9], [1, 3]
    a = forward_mlm(base, ids, positions)
    b = forward_mlm(adapted, ids, positions)
    assert torch.allclose(a, b, atol=1e-6)


def test_prefix_and_prompt_change_forward():
    base = init_model(SMALL_CFG)
    ids, positions = [5, 6, 7], [1]
    for mode in (TuningMode.PREFIX, TuningMode.PROMPT):
        tuned = apply_peft(init_model(SMALL_CFG), mode, PEFT_CFG)
        assert not torch.allclose(
            forward_mlm(base, ids, positions), forward_mlm(tuned, ids, positions)
        )


def test_full_mode_everything_trainable():
    model = apply_peft(init_model(SMALL_CFG), TuningMode.FULL, PEFT_CFG)
    assert model.trainable_parameter_count() == model.total_parameter_count()


@pytest.mark.parametrize("mode", [TuningMode.ADAPTER, TuningMode.PREFIX, TuningMode.PROMPT])
def test_trainable_fraction_under_five_percent_on_defaults(mode):
    model = apply_peft(init_model(MlmConfig()), mode, PeftConfig())
    fraction = model.trainable_parameter_count() / model.total_parameter_count()
    assert 0 < fraction < 0.05


@pytest.mark.parametrize("mode", [TuningMode.ADAPTER, TuningMode.PREFIX, TuningMode.PROMPT])
def test_base_groups_frozen(mode):
    model = apply_peft(init_model(SMALL_CFG), mode, PEFT_CFG)
    mask = model.trainable_mask()
    for name in model.base_group_names():
        assert mask[name] is False
    for name, params in model.parameter_groups().items():
        for p in params:
            assert p.requires_grad == mask[name]


def test_frozen_groups_receive_no_gradient():
    model = apply_peft(init_model(SMALL_CFG), TuningMode.ADAPTER, PEFT_CFG)
    model.train()
    loss = mlm_loss(model, [([5, 6, 7, 8], [1, 2], [6, 7])])
    loss.backward()
    for name in model.base_group_names():
        for p in model.parameter_groups()[name]:
            assert p.grad is None
    assert model.tuning.adapters_attn[0].down.weight.grad is not None


def test_peft_reapplication_rejected():
    model = apply_peft(init_model(SMALL_CFG), TuningMode.PROMPT, PEFT_CFG)
    with pytest.raises(ValueError, match="already carries"):
        apply_peft(model, TuningMode.ADAPTER, PEFT_CFG)


def test_prompt_shapes_and_output_length():
    model = apply_peft(init_model(SMALL_CFG), TuningMode.PROMPT, PEFT_CFG)
    assert model.tuning.prompt.shape == (PEFT_CFG.prompt_length, SMALL_CFG.d_model)
    out = forward_mlm(model, [5, 6, 7, 8], [0, 3])
    assert out.shape == (2, SMALL_CFG.vocab_size)  # virtual tokens sliced off


def test_prefix_shapes():
    model = apply_peft(init_model(SMALL_CFG), TuningMode.PREFIX, PEFT_CFG)
    for i in range(SMALL_CFG.n_layers):
        k, v = model.tuning.layer_prefix(i, torch.float32)
        assert k.shape == (SMALL_CFG.n_heads, PEFT_CFG.prefix_length, SMALL_CFG.head_dim)
        assert v.shape == k.shape


def _tiny_corpus(n=30):
    words = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta"]
    return [
        CorpusRecord("EN", " ".join(words[i % 6] for i in range(j, j + 5)), str(j))
        for j in range(n)
    ]


@pytest.mark.parametrize("mode", [TuningMode.ADAPTER, TuningMode.PREFIX, TuningMode.PROMPT])
def test_frozen_base_bit_identical_after_training(mode):
    corpus = _tiny_corpus()
    vocab = build_vocab(corpus, min_freq=1)
    cfg = MlmConfig(vocab_size=len(vocab), d_model=8, n_layers=2, n_heads=2, d_ff=16,
                    max_seq_len=16, dropout_rate=0.1, init_seed=0)
    model = apply_peft(init_model(cfg), mode, PEFT_CFG)
    before = {
        name: [p.detach().clone() for p in params]
        for name, params in model.parameter_groups().items()
        if not name.startswith("peft.")
    }
    train(model, corpus, vocab, TrainConfig(epochs=1, seed=42, batch_size=8))
    groups = model.parameter_groups()
    for name, snaps in before.items():
        for snap, now in zip(snaps, groups[name]):
            assert snap.numpy().tobytes() == now.detach().numpy().tobytes(), name
    # and the virtual parameters actually moved
    peft_groups = [n for n in groups if n.startswith("peft.")]
    assert any(
        not torch.equal(groups[n][0], torch.zeros_like(groups[n][0])) for n in peft_groups
    )


def test_checkpoint_round_trip_with_tuning(tmp_path):
    corpus = _tiny_corpus()
    vocab = build_vocab(corpus, min_freq=1)
    cfg = MlmConfig(vocab_size=len(vocab), d_model=8, n_layers=1, n_heads=2, d_ff=16,
                    max_seq_len=16, dropout_rate=0.0, init_seed=2)
    model = apply_peft(init_model(cfg), TuningMode.PREFIX, PEFT_CFG)
    train(model, corpus, vocab, TrainConfig(epochs=1, seed=1, batch_size=8))
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, model, vocab)
    loaded, vocab2 = load_checkpoint(path)
    assert vocab2.surfaces == vocab.surfaces
    assert loaded.tuning.mode is TuningMode.PREFIX
    assert loaded.trainable_mask() == model.trainable_mask()
    for (na, pa), (nb, pb) in zip(model.named_parameters(), loaded.named_parameters()):
        assert na == nb and torch.equal(pa, pb)
    ids, positions = [5, 6, 7], [1]
    assert torch.allclose(
        forward_mlm(model, ids, positions), forward_mlm(loaded, ids, positions)
    )


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint at all")
    with pytest.raises(ValueError, match="magic"):
        load_checkpoint(path)
