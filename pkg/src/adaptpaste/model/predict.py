"""Confidence-scored inference for both decoder variants."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import torch

from ..anonymizer import AdaptationMapping, parse_target
from ..tokenizer import Vocabulary
from .data import EncodedSample, pad
from .network import AdaptModel, EncodedSource


@dataclass
class PredictedName:
    mask: str
    name: str
    confidence: float | None = None


@dataclass
class PredictionSet:
    entries: list[PredictedName] = field(default_factory=list)
    joint_confidence: float | None = None
    malformed: bool = False
    raw: str = ""

    def as_dict(self) -> dict[str, str]:
        return {e.mask: e.name for e in self.entries}

    def confidence_of(self, mask: str) -> float | None:
        for e in self.entries:
            if e.mask == mask:
                return e.confidence if e.confidence is not None else self.joint_confidence
        return None

    def record(self) -> dict:
        return {
            "entries": [{"mask": e.mask, "name": e.name, "confidence": e.confidence} for e in self.entries],
            "joint_confidence": self.joint_confidence,
            "malformed": self.malformed,
            "raw": self.raw,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "PredictionSet":
        return cls([PredictedName(e["mask"], e["name"], e.get("confidence")) for e in rec["entries"]],
                   rec.get("joint_confidence"), rec.get("malformed", False), rec.get("raw", ""))


def confidence(logprobs: Sequence[float]) -> float:
    """exp of the length-normalised log-probability, in (0, 1]."""
    if not logprobs:
        return 1.0
    value = math.exp(sum(logprobs) / len(logprobs))
    return min(1.0, max(value, math.ulp(0.0)))


@torch.no_grad()
def greedy(model: AdaptModel, enc: EncodedSource, starts: list[int], max_len: int, eos: int):
    """Greedy decoding for a batch of rows sharing one encoder output each.

    Returns per row the generated ids (without the start token and EOS) and
    the log-probability of every emitted token including EOS.
    """
    rows = len(starts)
    seqs = [[s] for s in starts]
    logps: list[list[float]] = [[] for _ in range(rows)]
    alive = list(range(rows))
    for _ in range(max_len - 1):
        if not alive:
            break
        idx = torch.tensor(alive, dtype=torch.long)
        sub = EncodedSource(enc.memory.index_select(0, idx), enc.pad_mask.index_select(0, idx))
        tgt = pad([seqs[r] for r in alive], model.cfg.pad_id)
        logits = model.decode(sub, tgt)
        lengths = [len(seqs[r]) for r in alive]
        last = logits[torch.arange(len(alive)), torch.tensor(lengths) - 1]
        lp = last.log_softmax(-1)
        nxt = lp.index_fill(-1, torch.tensor([model.cfg.pad_id]), -math.inf).argmax(-1)
        still = []
        for k, r in enumerate(alive):
            tok = int(nxt[k])
            logps[r].append(float(lp[k, tok]))
            seqs[r].append(tok)
            if tok != eos:
                still.append(r)
        alive = still
    out = []
    for r in range(rows):
        ids = seqs[r][1:]
        if ids and ids[-1] == eos:
            ids = ids[:-1]
        out.append((ids, logps[r]))
    return out


@torch.no_grad()
def beam(model: AdaptModel, enc: EncodedSource, start: int, max_len: int, eos: int, width: int):
    """Length-normalised beam search for one row of ``enc``."""
    hyps = [([start], [], False)]
    for _ in range(max_len - 1):
        open_hyps = [h for h in hyps if not h[2]]
        if not open_hyps:
            break
        tgt = pad([h[0] for h in open_hyps], model.cfg.pad_id)
        idx = torch.zeros(len(open_hyps), dtype=torch.long)
        logits = model.decode(enc.select(idx), tgt)
        lengths = torch.tensor([len(h[0]) for h in open_hyps]) - 1
        lp = logits[torch.arange(len(open_hyps)), lengths].log_softmax(-1)
        cand = [h for h in hyps if h[2]]
        top = lp.index_fill(-1, torch.tensor([model.cfg.pad_id]), -math.inf).topk(min(width, lp.shape[-1]), dim=-1)
        for k, h in enumerate(open_hyps):
            for v, t in zip(top.values[k].tolist(), top.indices[k].tolist()):
                cand.append((h[0] + [t], h[1] + [v], t == eos))
        cand.sort(key=lambda h: -sum(h[1]) / len(h[1]))
        hyps = cand[:width]
    best = max(hyps, key=lambda h: sum(h[1]) / max(len(h[1]), 1))
    ids = best[0][1:]
    if ids and ids[-1] == eos:
        ids = ids[:-1]
    return ids, best[1]


class Predictor:
    def __init__(self, model: AdaptModel, vocab: Vocabulary, beam_width: int = 1):
        self.model = model.eval()
        self.vocab = vocab
        self.beam_width = beam_width
        self.id_to_mask = {i: s for s, i in vocab.special_ids.items()}

    def _decode_rows(self, enc, starts):
        cfg = self.model.cfg
        if self.beam_width <= 1:
            return greedy(self.model, enc, starts, cfg.max_tgt_len, self.vocab.eos_id)
        return [beam(self.model, enc.select(torch.tensor([r])), s, cfg.max_tgt_len, self.vocab.eos_id,
                     self.beam_width) for r, s in enumerate(starts)]

    @torch.no_grad()
    def predict(self, item: EncodedSample, masks: Sequence[int] | None = None) -> PredictionSet:
        """Predictions for one sample; ``masks`` overrides the mask token ids to decode."""
        src = torch.tensor([item.src], dtype=torch.long)
        enc = self.model.encode(src)
        if self.model.cfg.variant == "uni":
            (ids, lps), = self._decode_rows(enc, [self.vocab.bos_id])
            text = self.vocab.decode(ids)
            mapping = parse_target(text)
            return PredictionSet([PredictedName(m, n) for m, n in mapping.entries], confidence(lps),
                                 bool(mapping.malformed), text)
        masks = list(item.masks if masks is None else masks)
        entries = []
        for m in masks:
            # one decoder pass per mask: no row ever shares a batch with another mask
            (ids, lps), = self._decode_rows(enc, [m])
            entries.append(PredictedName(self.id_to_mask[m], self.vocab.decode(ids).strip(), confidence(lps)))
        return PredictionSet(entries)

    @torch.no_grad()
    def predict_many(self, items: Sequence[EncodedSample], batch_size: int = 32) -> list[PredictionSet]:
        """Batched inference; numerically equivalent to repeated :meth:`predict`."""
        out: list[PredictionSet] = []
        for i in range(0, len(items), batch_size):
            chunk = list(items[i : i + batch_size])
            src = pad([it.src for it in chunk], self.vocab.pad_id)
            enc = self.model.encode(src)
            if self.model.cfg.variant == "uni":
                for ids, lps in self._decode_rows(enc, [self.vocab.bos_id] * len(chunk)):
                    text = self.vocab.decode(ids)
                    mapping = parse_target(text)
                    out.append(PredictionSet([PredictedName(m, n) for m, n in mapping.entries],
                                             confidence(lps), bool(mapping.malformed), text))
                continue
            owner, starts = [], []
            for si, it in enumerate(chunk):
                for m in it.masks:
                    owner.append(si)
                    starts.append(m)
            results = []
            if starts:
                results = self._decode_rows(enc.select(torch.tensor(owner, dtype=torch.long)), starts)
            sets = [PredictionSet() for _ in chunk]
            for si, m, (ids, lps) in zip(owner, starts, results):
                sets[si].entries.append(PredictedName(self.id_to_mask[m], self.vocab.decode(ids).strip(),
                                                      confidence(lps)))
            out.extend(sets)
        return out


def mapping_of(pred: PredictionSet) -> AdaptationMapping:
    return AdaptationMapping([(e.mask, e.name) for e in pred.entries])
