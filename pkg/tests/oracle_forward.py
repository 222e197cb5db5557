"""Independent numpy re-implementation of the encoder forward pass.

Used as the arithmetic oracle in tests: reads weights out of a model's
state dict and recomputes log-probabilities step by step in float64,
including the virtual-parameter paths (adapters, prefixes, prompts).
"""

import math

import numpy as np
from scipy.special import erf

from mdx.mlm import TuningMode
from mdx.textproc import MASK_ID

LN_EPS = 1e-5


def _gelu(x):
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def _layer_norm(x, weight, bias):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * weight + bias


def _log_softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def numpy_logits(model, ids):
    """Forward the ids exactly as given; returns [L, V] float64 logits."""
    cfg = model.config
    sd = {k: v.detach().double().numpy() for k, v in model.state_dict().items()}
    mode = model.tuning.mode if model.tuning is not None else None

    emb = sd["tok_emb.weight"]
    x = emb[list(ids)] + sd["pos_emb.weight"][: len(ids)]
    prompt_len = 0
    if mode is TuningMode.PROMPT:
        prompt = sd["tuning.prompt"]
        prompt_len = prompt.shape[0]
        x = np.concatenate([prompt, x], axis=0)

    nh, hd = cfg.n_heads, cfg.head_dim
    for i in range(cfg.n_layers):
        pre = f"layers.{i}."

        def proj(name, h):
            return h @ sd[pre + name + ".weight"].T + sd[pre + name + ".bias"]

        def heads(m):  # [L, d] -> [nh, L, hd]
            return m.reshape(m.shape[0], nh, hd).transpose(1, 0, 2)

        def adapter(kind, h):
            base = f"tuning.adapters_{kind}.{i}."
            down = h @ sd[base + "down.weight"].T + sd[base + "down.bias"]
            return h + _gelu(down) @ sd[base + "up.weight"].T + sd[base + "up.bias"]

        q, k, v = heads(proj("q", x)), heads(proj("k", x)), heads(proj("v", x))
        if mode is TuningMode.PREFIX:
            k = np.concatenate([sd[f"tuning.prefix_k.{i}"], k], axis=1)
            v = np.concatenate([sd[f"tuning.prefix_v.{i}"], v], axis=1)
        ctx = _softmax(q @ k.transpose(0, 2, 1) / math.sqrt(hd)) @ v
        attn = ctx.transpose(1, 0, 2).reshape(x.shape[0], cfg.d_model)
        attn = attn @ sd[pre + "o.weight"].T + sd[pre + "o.bias"]
        if mode is TuningMode.ADAPTER:
            attn = adapter("attn", attn)
        x = _layer_norm(x + attn, sd[pre + "ln1.weight"], sd[pre + "ln1.bias"])

        ffn = _gelu(x @ sd[pre + "w1.weight"].T + sd[pre + "w1.bias"])
        ffn = ffn @ sd[pre + "w2.weight"].T + sd[pre + "w2.bias"]
        if mode is TuningMode.ADAPTER:
            ffn = adapter("ffn", ffn)
        x = _layer_norm(x + ffn, sd[pre + "ln2.weight"], sd[pre + "ln2.bias"])

    if prompt_len:
        x = x[prompt_len:]
    return x @ emb.T + sd["head_bias"]


def numpy_forward_mlm(model, ids, positions):
    """Float64 log-prob rows for `positions`, inputs masked there."""
    masked = list(ids)
    for p in positions:
        masked[p] = MASK_ID
    return _log_softmax(numpy_logits(model, masked)[list(positions)])


def numpy_mlm_loss(model, batch):
    """Mean cross-entropy over all masked positions, recomputed from scratch.

    Matches mlm_loss in eval mode: inputs are used exactly as given (already
    corrupted); only the loss positions are read.
    """
    total, count = 0.0, 0
    for ids, positions, gold in batch:
        rows = _log_softmax(numpy_logits(model, ids)[list(positions)])
        for row, g in zip(rows, gold):
            total -= row[g]
            count += 1
    return total / count
