"""Versioned binary checkpoint: config header + named float32 tensors + vocab.

Layout: 8-byte magic, little-endian uint32 format version, little-endian
uint64 header length, UTF-8 JSON header, then the raw tensor payload in
header order (row-major float32, little-endian). Tuning state is stored
separately from the base weights, never merged.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from typing import BinaryIO

import numpy as np
import torch

from ..textproc import Vocabulary
from .config import MlmConfig, PeftConfig, TuningMode
from .model import ToyMlm, init_model
from .peft import apply_peft

MAGIC = b"MDXMLM\x00\x01"
FORMAT_VERSION = 1


def save_checkpoint(path, model: ToyMlm, vocab: Vocabulary) -> None:
    state = model.state_dict()
    tensors = [(name, t.detach().to(torch.float32).contiguous()) for name, t in state.items()]
    header = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "tuning": None
        if model.tuning is None
        else {"mode": model.tuning.mode.value, "config": asdict(model.tuning.config)},
        "trainable": model.trainable_mask(),
        "vocab": {"surfaces": list(vocab.surfaces), "min_freq": vocab.min_freq},
        "tensors": [{"name": name, "shape": list(t.shape)} for name, t in tensors],
    }
    blob = json.dumps(header, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for _name, t in tensors:
            array = t.numpy().astype("<f4", copy=False)
            fh.write(array.tobytes(order="C"))


def _read_exact(fh: BinaryIO, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise ValueError("truncated checkpoint")
    return data


def load_checkpoint(path) -> tuple[ToyMlm, Vocabulary]:
    with open(path, "rb") as fh:
        if _read_exact(fh, len(MAGIC)) != MAGIC:
            raise ValueError("not a model checkpoint (bad magic)")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (header_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        header = json.loads(_read_exact(fh, header_len).decode("utf-8"))
        config = MlmConfig(**header["config"])
        model = init_model(config)
        if header["tuning"] is not None:
            mode = TuningMode(header["tuning"]["mode"])
            peft_cfg = PeftConfig(**header["tuning"]["config"])
            apply_peft(model, mode, peft_cfg)
        state = {}
        for spec in header["tensors"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, count * 4)
            array = np.frombuffer(raw, dtype="<f4").reshape(shape)
            state[spec["name"]] = torch.from_numpy(array.copy())
        model.load_state_dict(state, strict=True)
        model.set_trainable_groups(header["trainable"])
        vocab = Vocabulary(
            surfaces=tuple(header["vocab"]["surfaces"]),
            min_freq=header["vocab"]["min_freq"],
        )
        model.eval()
        return model, vocab
