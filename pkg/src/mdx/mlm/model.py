"""Transformer-encoder masked LM, small enough to train on a laptop.

Post-layer-norm variant: each sublayer output is dropped out, passed through
its adapter when one is attached, added to the residual, then normalized.
The MLM head is tied to the token embeddings plus a per-token bias. All
randomness is owned by explicit seeds; forward never mutates parameters.
"""

from __future__ import annotations

import math
from typing import Iterable, Optional, Sequence

import torch
from torch import Tensor, nn
from torch.nn import functional as F

from ..textproc import MASK_ID
from .config import MlmConfig


def _scaled_uniform_(tensor: Tensor, generator: torch.Generator) -> None:
    """Uniform init with the +-sqrt(6 / (fan_in + fan_out)) bound."""
    fan_out, fan_in = tensor.shape[0], tensor.shape[-1]
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    with torch.no_grad():
        tensor.uniform_(-bound, bound, generator=generator)


class EncoderLayer(nn.Module):
    def __init__(self, cfg: MlmConfig):
        super().__init__()
        d = cfg.d_model
        self.n_heads = cfg.n_heads
        self.head_dim = cfg.head_dim
        self.q = nn.Linear(d, d)
        self.k = nn.Linear(d, d)
        self.v = nn.Linear(d, d)
        self.o = nn.Linear(d, d)
        self.w1 = nn.Linear(d, cfg.d_ff)
        self.w2 = nn.Linear(cfg.d_ff, d)
        self.ln1 = nn.LayerNorm(d)
        self.ln2 = nn.LayerNorm(d)
        self.dropout = nn.Dropout(cfg.dropout_rate)

    def _attention(
        self,
        h: Tensor,
        pad_mask: Optional[Tensor],
        prefix_kv: Optional[tuple[Tensor, Tensor]],
    ) -> Tensor:
        bsz, seq_len, d = h.shape
        nh, hd = self.n_heads, self.head_dim

        def split(x: Tensor) -> Tensor:
            return x.view(bsz, -1, nh, hd).transpose(1, 2)  # [B, nh, L, hd]

        q, k, v = split(self.q(h)), split(self.k(h)), split(self.v(h))
        if prefix_kv is not None:
            pk, pv = prefix_kv  # [nh, P, hd] each
            k = torch.cat([pk.unsqueeze(0).expand(bsz, -1, -1, -1), k], dim=2)
            v = torch.cat([pv.unsqueeze(0).expand(bsz, -1, -1, -1), v], dim=2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(hd)  # [B, nh, L, P + L]
        if pad_mask is not None:
            mask = pad_mask
            extra = k.shape[2] - seq_len
            if extra:
                pad = torch.zeros(bsz, extra, dtype=torch.bool, device=mask.device)
                mask = torch.cat([pad, mask], dim=1)
            scores = scores.masked_fill(mask[:, None, None, :], float("-inf"))
        ctx = torch.softmax(scores, dim=-1) @ v
        return self.o(ctx.transpose(1, 2).reshape(bsz, seq_len, d))

    def forward(
        self,
        h: Tensor,
        pad_mask: Optional[Tensor] = None,
        adapters: Optional[tuple[nn.Module, nn.Module]] = None,
        prefix_kv: Optional[tuple[Tensor, Tensor]] = None,
    ) -> Tensor:
        attn = self.dropout(self._attention(h, pad_mask, prefix_kv))
        if adapters is not None:
            attn = adapters[0](attn)
        h = self.ln1(h + attn)
        ffn = self.dropout(self.w2(F.gelu(self.w1(h))))
        if adapters is not None:
            ffn = adapters[1](ffn)
        return self.ln2(h + ffn)


class ToyMlm(nn.Module):
    """Encoder MLM with named parameter groups and a freezing mask.

    `tuning` is attached by mdx.mlm.peft.apply_peft; when present its virtual
    parameters participate in forward according to the tuning mode.
    """

    def __init__(self, config: MlmConfig):
        super().__init__()
        self.config = config
        self.tok_emb = nn.Embedding(config.vocab_size, config.d_model)
        self.pos_emb = nn.Embedding(config.max_seq_len, config.d_model)
        self.emb_dropout = nn.Dropout(config.dropout_rate)
        self.layers = nn.ModuleList(EncoderLayer(config) for _ in range(config.n_layers))
        self.head_bias = nn.Parameter(torch.zeros(config.vocab_size))
        self.tuning = None  # Optional[PeftState]
        self._trainable: dict[str, bool] = {}
        self._init_parameters(config.init_seed)
        self.set_trainable_groups({name: True for name in self.parameter_groups()})

    # ---- initialization -------------------------------------------------

    def _init_parameters(self, seed: int) -> None:
        g = torch.Generator().manual_seed(seed)
        for name, p in self.named_parameters():
            with torch.no_grad():
                if name.endswith(("ln1.weight", "ln2.weight")):
                    p.fill_(1.0)
                elif name.endswith("bias") or p.dim() == 1:
                    p.zero_()
                else:
                    _scaled_uniform_(p, g)

    # ---- parameter bookkeeping ------------------------------------------

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        groups: dict[str, list[nn.Parameter]] = {
            "embeddings.token": [self.tok_emb.weight],
            "embeddings.position": [self.pos_emb.weight],
            "head.bias": [self.head_bias],
        }
        for i, layer in enumerate(self.layers):
            groups[f"layer{i}.attn"] = [
                layer.q.weight, layer.q.bias, layer.k.weight, layer.k.bias,
                layer.v.weight, layer.v.bias, layer.o.weight, layer.o.bias,
            ]
            groups[f"layer{i}.ffn"] = [
                layer.w1.weight, layer.w1.bias, layer.w2.weight, layer.w2.bias,
            ]
            groups[f"layer{i}.norm"] = [
                layer.ln1.weight, layer.ln1.bias, layer.ln2.weight, layer.ln2.bias,
            ]
        if self.tuning is not None:
            groups.update(self.tuning.parameter_groups())
        return groups

    def base_group_names(self) -> list[str]:
        return [n for n in self.parameter_groups() if not n.startswith("peft.")]

    def set_trainable_groups(self, trainable: dict[str, bool]) -> None:
        groups = self.parameter_groups()
        missing = set(groups) - set(trainable)
        if missing:
            raise ValueError(f"freezing mask missing groups: {sorted(missing)}")
        for name, params in groups.items():
            for p in params:
                p.requires_grad_(trainable[name])
        self._trainable = dict(trainable)

    def trainable_mask(self) -> dict[str, bool]:
        return dict(self._trainable)

    def total_parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def trainable_parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters() if p.requires_grad)

    # ---- forward ---------------------------------------------------------

    def logits(self, ids: Tensor, pad_mask: Optional[Tensor] = None) -> Tensor:
        """[B, L] token ids -> [B, L, V] unnormalized scores.

        pad_mask: [B, L] bool, True at padding positions (excluded as keys).
        """
        bsz, seq_len = ids.shape
        if seq_len > self.config.max_seq_len:
            raise ValueError(
                f"sequence length {seq_len} exceeds max_seq_len {self.config.max_seq_len}"
            )
        positions = torch.arange(seq_len, device=ids.device)
        h = self.tok_emb(ids) + self.pos_emb(positions)[None, :, :]

        state = self.tuning
        prompt_len = 0
        if state is not None and state.prompt is not None:
            prompt = state.prompt.to(h.dtype)
            prompt_len = prompt.shape[0]
            h = torch.cat([prompt.unsqueeze(0).expand(bsz, -1, -1), h], dim=1)
            if pad_mask is not None:
                keep = torch.zeros(bsz, prompt_len, dtype=torch.bool, device=ids.device)
                pad_mask = torch.cat([keep, pad_mask], dim=1)
        h = self.emb_dropout(h)

        for i, layer in enumerate(self.layers):
            adapters = state.layer_adapters(i) if state is not None else None
            prefix_kv = state.layer_prefix(i, h.dtype) if state is not None else None
            h = layer(h, pad_mask, adapters, prefix_kv)

        if prompt_len:
            h = h[:, prompt_len:, :]
        return h @ self.tok_emb.weight.t() + self.head_bias


def init_model(config: MlmConfig) -> ToyMlm:
    """Fresh model with seed-determined parameters."""
    return ToyMlm(config)


def forward_mlm(model: ToyMlm, ids: Sequence[int], positions: Iterable[int]) -> Tensor:
    """Log-probability vectors at the given positions, inputs masked there.

    Evaluation mode: dropout disabled, no gradients. Rows follow the order
    of `positions`.
    """
    positions = list(positions)
    if not positions:
        raise ValueError("positions must be non-empty")
    if len(set(positions)) != len(positions):
        raise ValueError("positions must be unique")
    n = len(ids)
    if any(not 0 <= p < n for p in positions):
        raise ValueError(f"position out of range for length-{n} sequence")
    masked = list(ids)
    for p in positions:
        masked[p] = MASK_ID
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            logits = model.logits(torch.tensor([masked], dtype=torch.long))
            out = F.log_softmax(logits[0, positions, :], dim=-1)
    finally:
        if was_training:
            model.train()
    return out


def mlm_loss(model: ToyMlm, batch: Sequence[tuple[Sequence[int], Sequence[int], Sequence[int]]]) -> Tensor:
    """Mean cross-entropy at the masked positions.

    Each batch item is (input ids, masked positions, gold ids); inputs carry
    whatever mask/random/keep corruption the sampler applied. Respects the
    model's current train/eval mode.
    """
    if not batch:
        raise ValueError("empty batch")
    from ..textproc import PAD_ID

    max_len = max(len(ids) for ids, _, _ in batch)
    bsz = len(batch)
    ids_t = torch.full((bsz, max_len), PAD_ID, dtype=torch.long)
    pad_mask = torch.ones(bsz, max_len, dtype=torch.bool)
    rows, cols, gold_flat = [], [], []
    for b, (ids, positions, gold) in enumerate(batch):
        if len(positions) != len(gold):
            raise ValueError("positions and gold ids must align")
        ids_t[b, : len(ids)] = torch.tensor(ids, dtype=torch.long)
        pad_mask[b, : len(ids)] = False
        rows.extend([b] * len(positions))
        cols.extend(positions)
        gold_flat.extend(gold)
    if not rows:
        raise ValueError("batch has no masked positions")
    logits = model.logits(ids_t, pad_mask)
    picked = logits[torch.tensor(rows), torch.tensor(cols), :]
    return F.cross_entropy(picked, torch.tensor(gold_flat, dtype=torch.long))
