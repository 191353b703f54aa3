"""Turning dataset records into padded id tensors."""

from __future__ import annotations

import random
from dataclasses import dataclass

import torch

from ..anonymizer import AnonymizedSample
from ..tokenizer import Vocabulary


@dataclass
class EncodedSample:
    src: list[int]
    uni_tgt: list[int]  # serialized mapping (or MLM token list), without <s>/</s>
    masks: list[int]  # mask token ids, in target order
    names: list[list[int]]  # name ids per mask, without </s>
    sample: AnonymizedSample | None = None


def _mask_ids(vocab: Vocabulary) -> set[int]:
    return {i for s, i in vocab.special_ids.items() if s.startswith("___v") or s == "[MASK]"
            or s[:4] in ("CLAS", "FUNC", "VAR_")}


def fit_source(ids: list[int], max_len: int, anchors: set[int]) -> list[int]:
    """Crop ``ids`` to ``max_len`` keeping the span of anchor tokens centred."""
    if len(ids) <= max_len:
        return ids
    hits = [i for i, t in enumerate(ids) if t in anchors]
    if not hits:
        return ids[:max_len]
    lo, hi = hits[0], hits[-1] + 1
    if hi - lo >= max_len:
        return ids[lo : lo + max_len]
    slack = max_len - (hi - lo)
    start = max(0, lo - slack // 2)
    start = min(start, len(ids) - max_len)
    return ids[start : start + max_len]


def encode_sample(sample: AnonymizedSample, vocab: Vocabulary, max_src_len: int, max_tgt_len: int) -> EncodedSample:
    src = fit_source(vocab.encode(sample.input_text), max_src_len, _mask_ids(vocab))
    uni = vocab.encode(sample.target_text)[: max_tgt_len - 1]
    present = set(src)
    masks, names = [], []
    for mask, name in sample.target.entries:
        mid = vocab.special_ids.get(mask)
        if mid is None or mid not in present:
            continue
        masks.append(mid)
        names.append(vocab.encode(name)[: max_tgt_len - 2])
    return EncodedSample(src, uni, masks, names, sample)


def pad(rows: list[list[int]], pad_id: int) -> torch.Tensor:
    width = max((len(r) for r in rows), default=1) or 1
    out = torch.full((len(rows), width), pad_id, dtype=torch.long)
    for i, r in enumerate(rows):
        if r:
            out[i, : len(r)] = torch.tensor(r, dtype=torch.long)
    return out


@dataclass
class Batch:
    src: torch.Tensor
    dec_in: torch.Tensor
    dec_out: torch.Tensor
    owner: torch.Tensor | None  # parallel rows -> source index


def make_batch(items: list[EncodedSample], vocab: Vocabulary, variant: str) -> Batch:
    src = pad([it.src for it in items], vocab.pad_id)
    if variant == "uni":
        dec_in = pad([[vocab.bos_id] + it.uni_tgt for it in items], vocab.pad_id)
        dec_out = pad([it.uni_tgt + [vocab.eos_id] for it in items], vocab.pad_id)
        return Batch(src, dec_in, dec_out, None)
    rows_in, rows_out, owner = [], [], []
    for si, it in enumerate(items):
        for m, name in zip(it.masks, it.names):
            rows_in.append([m] + name)
            rows_out.append(name + [vocab.eos_id])
            owner.append(si)
    return Batch(src, pad(rows_in, vocab.pad_id), pad(rows_out, vocab.pad_id),
                 torch.tensor(owner, dtype=torch.long))


def batches(items: list[EncodedSample], batch_size: int, seed: int, epoch: int):
    """Deterministic shuffled batches for one epoch."""
    order = list(range(len(items)))
    random.Random(f"{seed}:{epoch}").shuffle(order)
    for i in range(0, len(order), batch_size):
        yield [items[j] for j in order[i : i + batch_size]]
