"""Scripted scoring backends used as oracles in tests."""

import math

import numpy as np

from mdx.backend import MaskedScoreRequest, MaskedScoreResponse, PositionScore, ScoringBackend
from mdx.textproc import UNK


class ScriptedBackend(ScoringBackend):
    """Answers from a caller-supplied distribution function.

    dist(tokens, position) must return a probability vector over `vocab`
    for the sentence with `position` masked.
    """

    name = "scripted"

    def __init__(self, vocab, dist):
        self.vocab = list(vocab)
        self.dist = dist
        self.calls = 0

    def _index(self, surface):
        if surface in self.vocab:
            return self.vocab.index(surface)
        if UNK in self.vocab:
            return self.vocab.index(UNK)
        raise KeyError(surface)

    def score(self, request: MaskedScoreRequest) -> MaskedScoreResponse:
        self.calls += 1
        positions = {}
        for p in request.masked_positions:
            probs = np.asarray(self.dist(tuple(request.text_tokens), p), dtype=float)
            assert abs(probs.sum() - 1.0) < 1e-9, "scripted distribution must sum to 1"
            with np.errstate(divide="ignore"):
                logs = np.log(probs)
            logs = np.minimum(logs, 0.0)
            gold = request.text_tokens[p]
            candidates = None
            if request.candidates and p in request.candidates:
                candidates = {c: float(logs[self._index(c)]) for c in request.candidates[p]}
            positions[p] = PositionScore(
                gold=gold,
                gold_logprob=float(logs[self._index(gold)]),
                candidates=candidates,
                vocab=list(self.vocab) if request.return_distribution else None,
                logprobs=[float(v) for v in logs] if request.return_distribution else None,
            )
        return MaskedScoreResponse(request_id=request.request_id, positions=positions)


class UnigramBackend(ScriptedBackend):
    """Context-free backend: the same distribution at every position."""

    def __init__(self, probs: dict[str, float]):
        total = math.fsum(probs.values())
        assert abs(total - 1.0) < 1e-9
        vocab = list(probs)
        vector = np.array([probs[s] for s in vocab], dtype=float)
        super().__init__(vocab, lambda _tokens, _p: vector)
        self.probs = probs
