"""Parameter-efficient tuning: adapters, attention prefixes, soft prompts.

All three attach a small trainable parameter set and freeze every base
group. Adapters start as exact identities (zero-initialized up-projection),
so an adapted model's forward equals the base model's until trained.
"""

from __future__ import annotations

import math
from typing import Optional

import torch
from torch import Tensor, nn
from torch.nn import functional as F

from .config import MlmConfig, PeftConfig, TuningMode
from .model import ToyMlm, _scaled_uniform_


class Adapter(nn.Module):
    """Residual bottleneck: x + up(gelu(down(x)))."""

    def __init__(self, d_model: int, bottleneck: int):
        super().__init__()
        self.down = nn.Linear(d_model, bottleneck)
        self.up = nn.Linear(bottleneck, d_model)

    def forward(self, x: Tensor) -> Tensor:
        return x + self.up(F.gelu(self.down(x)))


class PeftState(nn.Module):
    """Virtual parameters for one tuning mode, registered on the model."""

    def __init__(self, mode: TuningMode, peft: PeftConfig, model_cfg: MlmConfig):
        super().__init__()
        self.mode = mode
        self.config = peft
        self.adapters_attn: Optional[nn.ModuleList] = None
        self.adapters_ffn: Optional[nn.ModuleList] = None
        self.prefix_k: Optional[nn.ParameterList] = None
        self.prefix_v: Optional[nn.ParameterList] = None
        self.prompt: Optional[nn.Parameter] = None

        g = torch.Generator().manual_seed(peft.peft_init_seed)
        d, n_layers = model_cfg.d_model, model_cfg.n_layers
        if mode is TuningMode.ADAPTER:
            self.adapters_attn = nn.ModuleList(
                Adapter(d, peft.adapter_bottleneck_dim) for _ in range(n_layers)
            )
            self.adapters_ffn = nn.ModuleList(
                Adapter(d, peft.adapter_bottleneck_dim) for _ in range(n_layers)
            )
            for adapter in list(self.adapters_attn) + list(self.adapters_ffn):
                _scaled_uniform_(adapter.down.weight, g)
                with torch.no_grad():
                    adapter.down.bias.zero_()
                    adapter.up.weight.zero_()  # identity at init
                    adapter.up.bias.zero_()
        elif mode is TuningMode.PREFIX:
            nh, hd, plen = model_cfg.n_heads, model_cfg.head_dim, peft.prefix_length
            bound = math.sqrt(6.0 / (plen + d))
            self.prefix_k = nn.ParameterList()
            self.prefix_v = nn.ParameterList()
            for _ in range(n_layers):
                k = torch.empty(nh, plen, hd).uniform_(-bound, bound, generator=g)
                v = torch.empty(nh, plen, hd).uniform_(-bound, bound, generator=g)
                self.prefix_k.append(nn.Parameter(k))
                self.prefix_v.append(nn.Parameter(v))
        elif mode is TuningMode.PROMPT:
            plen = peft.prompt_length
            bound = math.sqrt(6.0 / (plen + d))
            prompt = torch.empty(plen, d).uniform_(-bound, bound, generator=g)
            self.prompt = nn.Parameter(prompt)
        # FULL attaches no parameters

    def layer_adapters(self, i: int) -> Optional[tuple[nn.Module, nn.Module]]:
        if self.adapters_attn is None:
            return None
        return self.adapters_attn[i], self.adapters_ffn[i]

    def layer_prefix(self, i: int, dtype: torch.dtype) -> Optional[tuple[Tensor, Tensor]]:
        if self.prefix_k is None:
            return None
        return self.prefix_k[i].to(dtype), self.prefix_v[i].to(dtype)

    def parameter_groups(self) -> dict[str, list[nn.Parameter]]:
        groups: dict[str, list[nn.Parameter]] = {}
        if self.adapters_attn is not None:
            for i, (a, f) in enumerate(zip(self.adapters_attn, self.adapters_ffn)):
                groups[f"peft.adapter.layer{i}.attn"] = [
                    a.down.weight, a.down.bias, a.up.weight, a.up.bias,
                ]
                groups[f"peft.adapter.layer{i}.ffn"] = [
                    f.down.weight, f.down.bias, f.up.weight, f.up.bias,
                ]
        if self.prefix_k is not None:
            for i, (k, v) in enumerate(zip(self.prefix_k, self.prefix_v)):
                groups[f"peft.prefix.layer{i}"] = [k, v]
        if self.prompt is not None:
            groups["peft.prompt"] = [self.prompt]
        return groups


def apply_peft(model: ToyMlm, mode: TuningMode, peft: PeftConfig = PeftConfig()) -> ToyMlm:
    """Attach a tuning mode and set the freezing mask accordingly.

    full: everything trainable. Any other mode: only the attached virtual
    parameters train; every base group is frozen. A model can carry at most
    one tuning state.
    """
    if model.tuning is not None:
        raise ValueError(f"model already carries tuning mode {model.tuning.mode.value!r}")
    state = PeftState(mode, peft, model.config)
    model.tuning = state
    trainable = {name: mode is TuningMode.FULL for name in model.base_group_names()}
    trainable.update({name: True for name in state.parameter_groups()})
    model.set_trainable_groups(trainable)
    return model
