"""Backend-neutral masked scoring: a local toy-model backend, a line-delimited
JSON client for external bridge processes, and the matching serve loop.

Wire format (protocol v1, documented field by field in PROTOCOL.md): one JSON
object per line, UTF-8, newline-terminated, no pretty-printing. The server
speaks first with a handshake line; afterwards requests and responses
alternate strictly.
"""

from __future__ import annotations

import json
import math
import os
import select
import shlex
import subprocess
import time
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import BridgeExitedError, BridgeTimeoutError, ProtocolError
from .mlm.model import ToyMlm, forward_mlm
from .mlm.train import wrap_ids
from .textproc import Vocabulary

PROTOCOL_VERSION = 1
_EXP_SUM_TOLERANCE = 1e-4


@dataclass(frozen=True)
class MaskedScoreRequest:
    request_id: str
    text_tokens: list[str]
    masked_positions: list[int]
    candidates: Optional[dict[int, list[str]]] = None
    return_distribution: bool = False

    def __post_init__(self):
        n = len(self.text_tokens)
        if len(set(self.masked_positions)) != len(self.masked_positions):
            raise ValueError("masked positions must be unique")
        if any(not 0 <= p < n for p in self.masked_positions):
            raise ValueError("masked position out of range")
        if self.candidates is not None:
            unknown = set(self.candidates) - set(self.masked_positions)
            if unknown:
                raise ValueError(f"candidates given for unmasked positions {sorted(unknown)}")


@dataclass(frozen=True)
class PositionScore:
    gold: str
    gold_logprob: float
    candidates: Optional[dict[str, float]] = None
    vocab: Optional[list[str]] = None
    logprobs: Optional[list[float]] = None


@dataclass(frozen=True)
class MaskedScoreResponse:
    request_id: str
    positions: dict[int, PositionScore]


# ---- wire encoding --------------------------------------------------------


def request_to_wire(request: MaskedScoreRequest) -> dict:
    wire: dict = {
        "request_id": request.request_id,
        "text_tokens": list(request.text_tokens),
        "masked_positions": list(request.masked_positions),
    }
    if request.candidates is not None:
        wire["candidates"] = {str(p): list(c) for p, c in request.candidates.items()}
    if request.return_distribution:
        wire["return_distribution"] = True
    return wire


def request_from_wire(wire: dict) -> MaskedScoreRequest:
    try:
        candidates = wire.get("candidates")
        return MaskedScoreRequest(
            request_id=str(wire["request_id"]),
            text_tokens=[str(t) for t in wire["text_tokens"]],
            masked_positions=[int(p) for p in wire["masked_positions"]],
            candidates=None
            if candidates is None
            else {int(p): [str(c) for c in cs] for p, cs in candidates.items()},
            return_distribution=bool(wire.get("return_distribution", False)),
        )
    except (KeyError, TypeError, ValueError) as err:
        raise ProtocolError(f"malformed request: {err}") from err


def response_to_wire(response: MaskedScoreResponse) -> dict:
    positions = {}
    for p, score in response.positions.items():
        entry: dict = {"gold": score.gold, "gold_logprob": score.gold_logprob}
        if score.candidates is not None:
            entry["candidates"] = dict(score.candidates)
        if score.logprobs is not None:
            entry["vocab"] = list(score.vocab or [])
            entry["logprobs"] = [float(v) for v in score.logprobs]
        positions[str(p)] = entry
    return {"request_id": response.request_id, "positions": positions}


def response_from_wire(wire: dict) -> MaskedScoreResponse:
    try:
        positions = {}
        for p, entry in wire["positions"].items():
            positions[int(p)] = PositionScore(
                gold=str(entry["gold"]),
                gold_logprob=float(entry["gold_logprob"]),
                candidates=None
                if "candidates" not in entry
                else {str(s): float(v) for s, v in entry["candidates"].items()},
                vocab=None if "vocab" not in entry else [str(s) for s in entry["vocab"]],
                logprobs=None
                if "logprobs" not in entry
                else [float(v) for v in entry["logprobs"]],
            )
        return MaskedScoreResponse(request_id=str(wire["request_id"]), positions=positions)
    except (KeyError, TypeError, ValueError) as err:
        raise ProtocolError(f"malformed response: {err}") from err


def validate_response(response: MaskedScoreResponse, request: MaskedScoreRequest) -> None:
    """Enforce the response invariants; raises ProtocolError."""
    if response.request_id != request.request_id:
        raise ProtocolError(
            f"response id {response.request_id!r} does not match request {request.request_id!r}"
        )
    missing = set(request.masked_positions) - set(response.positions)
    if missing:
        raise ProtocolError(f"response missing positions {sorted(missing)}")
    for p, score in response.positions.items():
        values = [score.gold_logprob]
        if score.candidates:
            values.extend(score.candidates.values())
        if score.logprobs is not None:
            values.extend(score.logprobs)
        for v in values:
            if not math.isfinite(v) or v > 0:
                raise ProtocolError(f"log-prob {v!r} at position {p} violates finite <= 0")
        if score.logprobs is not None:
            if score.vocab is None or len(score.vocab) != len(score.logprobs):
                raise ProtocolError(f"distribution at position {p} lacks aligned vocabulary")
            total = math.fsum(math.exp(v) for v in score.logprobs)
            if abs(total - 1.0) > _EXP_SUM_TOLERANCE:
                raise ProtocolError(
                    f"distribution at position {p} sums to {total:.6f}, not 1"
                )


# ---- backends --------------------------------------------------------------


class ScoringBackend:
    """Anything that can answer masked-score requests."""

    name: str = "backend"

    def score(self, request: MaskedScoreRequest) -> MaskedScoreResponse:
        raise NotImplementedError

    def close(self) -> None:
        pass


class LocalBackend(ScoringBackend):
    """Scores with an in-process toy model; CLS/SEP framing is added here."""

    def __init__(self, model: ToyMlm, vocab: Vocabulary, name: str = "toy-mlm"):
        if len(vocab) != model.config.vocab_size:
            raise ValueError("vocabulary size does not match the model")
        self.model = model
        self.vocab = vocab
        self.name = name

    def score(self, request: MaskedScoreRequest) -> MaskedScoreResponse:
        ids = self.vocab.encode(request.text_tokens)
        if len(ids) + 2 > self.model.config.max_seq_len:
            raise ValueError(
                f"sequence of {len(ids)} tokens exceeds the model's usable length"
            )
        wrapped = wrap_ids(ids, self.model.config.max_seq_len)
        shifted = [p + 1 for p in request.masked_positions]  # skip [CLS]
        rows = forward_mlm(self.model, wrapped, shifted)
        positions: dict[int, PositionScore] = {}
        for row, p in zip(rows, request.masked_positions):
            gold = request.text_tokens[p]
            gold_logprob = float(row[self.vocab.id_of(gold)])
            candidates = None
            if request.candidates and p in request.candidates:
                candidates = {
                    c: float(row[self.vocab.id_of(c)]) for c in request.candidates[p]
                }
            vocab_listing = logprobs = None
            if request.return_distribution:
                vocab_listing = list(self.vocab.surfaces)
                logprobs = [float(v) for v in row]
            positions[p] = PositionScore(
                gold=gold,
                gold_logprob=gold_logprob,
                candidates=candidates,
                vocab=vocab_listing,
                logprobs=logprobs,
            )
        return MaskedScoreResponse(request_id=request.request_id, positions=positions)


def score_local(
    model: ToyMlm, vocab: Vocabulary, request: MaskedScoreRequest
) -> MaskedScoreResponse:
    return LocalBackend(model, vocab).score(request)


class BridgeConnection:
    """One bridge subprocess with strict request/response alternation."""

    def __init__(self, command: Sequence[str], timeout: float = 60.0):
        self.command = list(command)
        self.timeout = timeout
        self.proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=None,  # bridge diagnostics pass through
        )
        self._buffer = bytearray()
        hello = self._read_json(timeout)
        header = hello.get("hello") if isinstance(hello, dict) else None
        if not isinstance(header, dict):
            raise ProtocolError(f"expected a handshake line, got {hello!r}")
        if header.get("protocol") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"bridge speaks protocol {header.get('protocol')!r}, "
                f"client requires {PROTOCOL_VERSION}"
            )
        self.model_name = str(header.get("model", "unknown"))

    def _read_json(self, timeout: float) -> dict:
        line = self._read_line(timeout)
        try:
            return json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as err:
            raise ProtocolError(f"malformed line from bridge: {err}") from err

    def _read_line(self, timeout: float) -> bytes:
        assert self.proc.stdout is not None
        fd = self.proc.stdout.fileno()
        deadline = time.monotonic() + timeout
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BridgeTimeoutError(f"no response within {timeout:.1f}s")
            ready, _, _ = select.select([fd], [], [], min(remaining, 0.25))
            if not ready:
                if self.proc.poll() is not None:
                    raise BridgeExitedError(
                        f"bridge exited with code {self.proc.returncode}"
                    )
                continue
            chunk = os.read(fd, 65536)
            if not chunk:
                raise BridgeExitedError("bridge closed its output stream")
            self._buffer.extend(chunk)
        line, _, rest = bytes(self._buffer).partition(b"\n")
        self._buffer = bytearray(rest)
        return line

    def send_line(self, obj: dict) -> None:
        assert self.proc.stdin is not None
        data = (json.dumps(obj, ensure_ascii=False) + "\n").encode("utf-8")
        try:
            self.proc.stdin.write(data)
            self.proc.stdin.flush()
        except BrokenPipeError as err:
            raise BridgeExitedError("bridge closed its input stream") from err

    def close(self) -> None:
        for stream in (self.proc.stdin, self.proc.stdout):
            try:
                if stream:
                    stream.close()
            except OSError:
                pass
        self.proc.terminate()
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()


def score_remote(
    connection: BridgeConnection,
    request: MaskedScoreRequest,
    timeout: Optional[float] = None,
) -> MaskedScoreResponse:
    """Send one request and validate the single response line."""
    connection.send_line(request_to_wire(request))
    wire = connection._read_json(connection.timeout if timeout is None else timeout)
    if "error" in wire:
        raise ProtocolError(f"bridge error: {wire['error'].get('message', wire['error'])}")
    response = response_from_wire(wire)
    validate_response(response, request)
    return response


class BridgeBackend(ScoringBackend):
    def __init__(self, command: Sequence[str], timeout: float = 60.0):
        self.connection = BridgeConnection(command, timeout)
        self.name = f"bridge:{self.connection.model_name}"

    def score(self, request: MaskedScoreRequest) -> MaskedScoreResponse:
        return score_remote(self.connection, request)

    def close(self) -> None:
        self.connection.close()


def backend_from_spec(spec: str) -> ScoringBackend:
    """``local:<checkpoint path>`` or ``bridge:<command line>``."""
    kind, _, rest = spec.partition(":")
    if kind == "local" and rest:
        from .mlm.checkpoint import load_checkpoint

        model, vocab = load_checkpoint(rest)
        return LocalBackend(model, vocab, name=f"local:{rest}")
    if kind == "bridge" and rest:
        return BridgeBackend(shlex.split(rest))
    raise ValueError(f"backend spec must be 'local:PATH' or 'bridge:COMMAND', got {spec!r}")


# ---- serve loop (loopback reference server) --------------------------------


def serve_local(model: ToyMlm, vocab: Vocabulary, in_stream, out_stream, model_name="toy-mlm"):
    """Protocol v1 server over the given streams, backed by the toy model.

    Emits the handshake, then one response per request line; malformed lines
    produce an error line and the loop continues. Returns at end of input.
    """
    backend = LocalBackend(model, vocab, name=model_name)

    def emit(obj: dict) -> None:
        out_stream.write(json.dumps(obj, ensure_ascii=False) + "\n")
        out_stream.flush()

    emit({"hello": {"protocol": PROTOCOL_VERSION, "model": model_name}})
    for line in in_stream:
        line = line.strip()
        if not line:
            continue
        request_id = None
        try:
            wire = json.loads(line)
            request_id = wire.get("request_id") if isinstance(wire, dict) else None
            request = request_from_wire(wire)
            emit(response_to_wire(backend.score(request)))
        except Exception as err:  # malformed or failing request: report, continue
            emit({"error": {"message": str(err), "request_id": request_id}})
