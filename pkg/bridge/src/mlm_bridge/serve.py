"""Protocol v1 scoring server wrapping a Hugging Face masked LM.

Reads newline-delimited JSON requests on stdin, answers on stdout; see the
client project's PROTOCOL.md for the wire contract. The bridge owns subword
tokenization: each surface token maps to its model's subword span, and a
masked surface spanning several subwords is scored by iterated masking,
summing the subword log-probabilities left to right. Runs stateless and
single-threaded; parallelism means more bridge processes.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import torch

PROTOCOL_VERSION = 1


@dataclass(frozen=True)
class BridgeConfig:
    model: str
    device: str = "cpu"
    max_seq_len: int = 512


class RequestError(Exception):
    """Client-visible problem with one request; the serve loop continues."""


class MaskedLmScorer:
    def __init__(self, config: BridgeConfig):
        from transformers import AutoModelForMaskedLM, AutoTokenizer

        self.config = config
        self.tokenizer = AutoTokenizer.from_pretrained(config.model)
        self.model = AutoModelForMaskedLM.from_pretrained(config.model)
        self.model.to(config.device)
        self.model.eval()
        self.mask_id = self.tokenizer.mask_token_id
        if self.mask_id is None:
            raise ValueError(f"{config.model} has no mask token; not a masked LM")

    # ---- encoding -----------------------------------------------------------

    def _subword_ids(self, surface: str) -> list[int]:
        ids = self.tokenizer(surface, add_special_tokens=False)["input_ids"]
        if not ids:
            ids = [self.tokenizer.unk_token_id]
        return ids

    def _encode(self, text_tokens: list[str]) -> tuple[list[int], list[tuple[int, int]]]:
        """Full id sequence with special framing plus per-surface spans."""
        ids = [self.tokenizer.cls_token_id]
        spans = []
        for surface in text_tokens:
            sub = self._subword_ids(surface)
            spans.append((len(ids), len(ids) + len(sub)))
            ids.extend(sub)
        ids.append(self.tokenizer.sep_token_id)
        if len(ids) > self.config.max_seq_len:
            raise RequestError(
                f"sequence needs {len(ids)} subword slots, limit {self.config.max_seq_len}"
            )
        return ids, spans

    def _log_probs(self, ids: list[int]) -> torch.Tensor:
        with torch.no_grad():
            tensor = torch.tensor([ids], dtype=torch.long, device=self.config.device)
            logits = self.model(input_ids=tensor).logits[0]
            return torch.log_softmax(logits.float(), dim=-1).cpu()

    # ---- scoring ------------------------------------------------------------

    def _surface_logprob(
        self, ids: list[int], span: tuple[int, int], gold_sub: list[int]
    ) -> float:
        """Sum of subword log-probs under iterated left-to-right unmasking.

        `ids` must already carry masks over this span (and any other masked
        surfaces). Earlier subwords of the span are filled with the gold ids
        as scoring proceeds.
        """
        working = list(ids)
        start, end = span
        assert end - start == len(gold_sub)
        total = 0.0
        for offset, gold_id in enumerate(gold_sub):
            rows = self._log_probs(working)
            value = float(rows[start + offset, gold_id])
            total += min(value, 0.0)
            working[start + offset] = gold_id
        return total

    def score(self, request: dict) -> dict:
        try:
            request_id = str(request["request_id"])
            text_tokens = [str(t) for t in request["text_tokens"]]
            positions = [int(p) for p in request["masked_positions"]]
            candidates = request.get("candidates") or {}
            want_distribution = bool(request.get("return_distribution", False))
        except (KeyError, TypeError, ValueError) as err:
            raise RequestError(f"malformed request: {err}") from err
        if len(set(positions)) != len(positions):
            raise RequestError("masked positions must be unique")
        if any(not 0 <= p < len(text_tokens) for p in positions):
            raise RequestError("masked position out of range")

        ids, spans = self._encode(text_tokens)
        masked_ids = list(ids)
        for p in positions:
            start, end = spans[p]
            masked_ids[start:end] = [self.mask_id] * (end - start)

        out_positions: dict[str, dict] = {}
        for p in positions:
            gold = text_tokens[p]
            gold_sub = self._subword_ids(gold)
            entry: dict = {
                "gold": gold,
                "gold_logprob": self._surface_logprob(masked_ids, spans[p], gold_sub),
            }
            wanted = candidates.get(str(p)) or candidates.get(p)
            if wanted:
                entry["candidates"] = {
                    str(c): self._candidate_logprob(text_tokens, positions, p, str(c))
                    for c in wanted
                }
            if want_distribution:
                rows = self._log_probs(masked_ids)
                row = torch.clamp(rows[spans[p][0]], max=0.0)
                entry["vocab"] = self.tokenizer.convert_ids_to_tokens(
                    list(range(row.shape[0]))
                )
                entry["logprobs"] = [float(v) for v in row]
            out_positions[str(p)] = entry
        return {"request_id": request_id, "positions": out_positions}

    def _candidate_logprob(
        self, text_tokens: list[str], positions: list[int], position: int, candidate: str
    ) -> float:
        """Score an alternative surface at `position`.

        The candidate's own subword span replaces the gold's, so the
        sequence is re-laid-out when the lengths differ.
        """
        replaced = list(text_tokens)
        replaced[position] = candidate
        ids, spans = self._encode(replaced)
        masked_ids = list(ids)
        for p in positions:
            start, end = spans[p]
            masked_ids[start:end] = [self.mask_id] * (end - start)
        return self._surface_logprob(masked_ids, spans[position], self._subword_ids(candidate))


def serve(config: BridgeConfig, in_stream=None, out_stream=None) -> None:
    """Emit the handshake, then answer one line per request line until EOF.

    Model loading happens before the handshake so a load failure exits
    nonzero without ever speaking the protocol.
    """
    in_stream = sys.stdin if in_stream is None else in_stream
    out_stream = sys.stdout if out_stream is None else out_stream
    scorer = MaskedLmScorer(config)

    def emit(obj: dict) -> None:
        out_stream.write(json.dumps(obj, ensure_ascii=False) + "\n")
        out_stream.flush()

    emit({"hello": {"protocol": PROTOCOL_VERSION, "model": config.model}})
    for line in in_stream:
        line = line.strip()
        if not line:
            continue
        request_id = None
        try:
            request = json.loads(line)
            if isinstance(request, dict):
                request_id = request.get("request_id")
            else:
                raise RequestError("request must be a JSON object")
            emit(scorer.score(request))
        except json.JSONDecodeError as err:
            emit({"error": {"message": f"malformed JSON: {err}", "request_id": None}})
        except RequestError as err:
            emit({"error": {"message": str(err), "request_id": request_id}})
        except Exception as err:  # keep serving; the client sees the error line
            emit({"error": {"message": f"internal error: {err}", "request_id": request_id}})


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mlm-bridge",
        description="Serve a Hugging Face masked LM over the v1 scoring protocol.",
    )
    parser.add_argument("--model", required=True,
                        help="model id or local directory (e.g. bert-base-multilingual-cased)")
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--max-seq-len", type=int, default=512)
    args = parser.parse_args(argv)
    try:
        serve(BridgeConfig(model=args.model, device=args.device, max_seq_len=args.max_seq_len))
    except Exception as err:
        print(f"bridge failed to start: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
