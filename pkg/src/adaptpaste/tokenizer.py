"""Byte-level BPE tokenizer with atomic special tokens."""

from __future__ import annotations

import hashlib
import heapq
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .anonymizer import DOBF_KINDS, DOBF_RANGE, MASK_RANGE, MLM_MASK, mask_text

PAD, BOS, EOS = "<pad>", "<s>", "</s>"
SEP_TOKEN = "|"
ELLIPSIS = "..."
HEADER = "#adaptpaste-vocab v1"

# identifiers stand alone (no leading space) so a name is the same token
# wherever it occurs
PRETOKEN_RE = re.compile(r"[^\W\d]\w*|\d+|[^\s\w]+|\s+", re.UNICODE)


class TokenizerError(ValueError):
    pass


def special_tokens() -> list[str]:
    out = [PAD, BOS, EOS, MLM_MASK, SEP_TOKEN, ELLIPSIS]
    out += [mask_text(i) for i in range(MASK_RANGE)]
    for kind in DOBF_KINDS:
        out += [f"{kind}_{i}" for i in range(DOBF_RANGE)]
    return out


def _special_pattern(specials: Sequence[str]) -> re.Pattern:
    fixed = [s for s in specials if not re.fullmatch(r"___v\d+|(CLASS|FUNC|VAR)_\d+", s)]
    alts = [re.escape(s) for s in sorted(fixed, key=len, reverse=True)]
    present = set(specials)
    families = [r"___v(?:[1-9]\d{0,2}|0)"] if mask_text(0) in present else []
    families += [rf"{k}_(?:[1-9]\d{{0,2}}|0)" for k in DOBF_KINDS if f"{k}_0" in present]
    return re.compile("|".join(families + alts) or r"(?!)")


@dataclass
class Vocabulary:
    merges: list[tuple[int, int]]
    tokens: list[bytes | str]  # id -> bytes for regular tokens, str for specials
    specials: list[str] = field(default_factory=special_tokens)

    def __post_init__(self):
        self.special_ids = {s: i for i, s in enumerate(self.tokens) if isinstance(s, str)}
        # layout: specials, the 256 single bytes, then one id per merge
        first_byte = len(self.special_ids)
        self.byte_ids = {bytes([b]): first_byte + b for b in range(256)}
        self.ranks = {pair: r for r, pair in enumerate(self.merges)}
        self.merge_ids = {pair: first_byte + 256 + r for r, pair in enumerate(self.merges)}
        self._pattern = _special_pattern(self.specials)
        self._cache: dict[str, tuple[int, ...]] = {}

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def pad_id(self) -> int:
        return self.special_ids[PAD]

    @property
    def bos_id(self) -> int:
        return self.special_ids[BOS]

    @property
    def eos_id(self) -> int:
        return self.special_ids[EOS]

    def id_of(self, special: str) -> int:
        return self.special_ids[special]

    def is_special(self, token_id: int) -> bool:
        return isinstance(self.tokens[token_id], str)

    # encoding --------------------------------------------------------------
    def _encode_word(self, word: str) -> tuple[int, ...]:
        hit = self._cache.get(word)
        if hit is not None:
            return hit
        ids = [self.byte_ids[bytes([b])] for b in word.encode("utf-8")]
        while len(ids) > 1:
            best = None
            for i in range(len(ids) - 1):
                r = self.ranks.get((ids[i], ids[i + 1]))
                if r is not None and (best is None or r < best[0]):
                    best = (r, i)
            if best is None:
                break
            pair = self.merges[best[0]]
            new = self.merge_ids[pair]
            out = []
            i = 0
            while i < len(ids):
                if i < len(ids) - 1 and (ids[i], ids[i + 1]) == pair:
                    out.append(new)
                    i += 2
                else:
                    out.append(ids[i])
                    i += 1
            ids = out
        result = tuple(ids)
        if len(self._cache) < 200_000:
            self._cache[word] = result
        return result

    def encode(self, text: str) -> list[int]:
        out: list[int] = []
        pos = 0
        for m in self._pattern.finditer(text):
            if m.start() > pos:
                for word in PRETOKEN_RE.findall(text, pos, m.start()):
                    out.extend(self._encode_word(word))
            out.append(self.special_ids[m.group(0)])
            pos = m.end()
        if pos < len(text):
            for word in PRETOKEN_RE.findall(text, pos):
                out.extend(self._encode_word(word))
        return out

    def decode(self, ids: Iterable[int], skip_special: Sequence[str] = ()) -> str:
        buf = bytearray()
        parts = []
        skip = set(skip_special)
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise TokenizerError(f"token id {i} out of range")
            tok = self.tokens[i]
            if isinstance(tok, str):
                if buf:
                    parts.append(buf.decode("utf-8", errors="replace"))
                    buf = bytearray()
                if tok not in skip:
                    parts.append(tok)
            else:
                buf.extend(tok)
        if buf:
            parts.append(buf.decode("utf-8", errors="replace"))
        return "".join(parts)

    def count(self, text: str) -> int:
        return len(self.encode(text))

    # persistence -----------------------------------------------------------
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for t in self.tokens:
            h.update(t.encode() if isinstance(t, str) else b"\x00" + t)
            h.update(b"\x01")
        for a, b in self.merges:
            h.update(f"{a},{b};".encode())
        return h.hexdigest()[:16]

    def save(self, directory: str | Path) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        with open(d / "vocab.txt", "w", encoding="utf-8") as fh:
            fh.write(HEADER + "\n")
            for i, t in enumerate(self.tokens):
                if isinstance(t, str):
                    fh.write(f"{i}\tspecial\t{t}\n")
                else:
                    fh.write(f"{i}\tbytes\t{t.hex()}\n")
        with open(d / "merges.txt", "w", encoding="utf-8") as fh:
            fh.write(HEADER + "\n")
            for a, b in self.merges:
                fh.write(f"{a} {b}\n")

    @classmethod
    def load(cls, directory: str | Path) -> "Vocabulary":
        d = Path(directory)
        tokens: list[bytes | str] = []
        with open(d / "vocab.txt", encoding="utf-8") as fh:
            if fh.readline().rstrip("\n") != HEADER:
                raise TokenizerError("unrecognised vocabulary header")
            for line in fh:
                idx, kind, value = line.rstrip("\n").split("\t", 2)
                if int(idx) != len(tokens):
                    raise TokenizerError("vocabulary ids are not dense")
                tokens.append(value if kind == "special" else bytes.fromhex(value))
        merges = []
        with open(d / "merges.txt", encoding="utf-8") as fh:
            if fh.readline().rstrip("\n") != HEADER:
                raise TokenizerError("unrecognised merges header")
            for line in fh:
                a, b = line.split()
                merges.append((int(a), int(b)))
        specials = [t for t in tokens if isinstance(t, str)]
        return cls(merges, tokens, specials)


def pretokenize(texts: Iterable[str], specials: Sequence[str]) -> Counter:
    pattern = _special_pattern(specials)
    words: Counter = Counter()
    for text in texts:
        for chunk in pattern.split(text):
            words.update(PRETOKEN_RE.findall(chunk))
    return words


def train_bpe(texts: Sequence[str], vocab_size: int = 8000, specials: Sequence[str] | None = None) -> Vocabulary:
    """Learn byte-level merges by repeatedly joining the most frequent pair.

    Ties between equally frequent pairs go to the pair that was first seen
    in corpus order, so training is deterministic for a given input order.
    ``specials`` defaults to the full reserved set of :func:`special_tokens`.
    """
    specials = special_tokens() if specials is None else list(specials)
    if vocab_size <= 256 + len(specials):
        raise TokenizerError(f"vocab_size must exceed {256 + len(specials)}")
    texts = list(texts)
    if not texts or not any(texts):
        raise TokenizerError("cannot train on an empty corpus")

    tokens: list[bytes | str] = list(specials) + [bytes([b]) for b in range(256)]
    base = len(specials)
    counts = pretokenize(texts, specials)
    words = [[base + b for b in w.encode("utf-8")] for w in counts]
    freqs = list(counts.values())

    pair_count: Counter = Counter()
    first_seen: dict[tuple[int, int], int] = {}
    where: dict[tuple[int, int], set[int]] = defaultdict(set)
    step = 0
    for wi, w in enumerate(words):
        for pair in zip(w, w[1:]):
            pair_count[pair] += freqs[wi]
            where[pair].add(wi)
            if pair not in first_seen:
                first_seen[pair] = step
                step += 1

    heap = [(-c, first_seen[p], p) for p, c in pair_count.items()]
    heapq.heapify(heap)
    merges: list[tuple[int, int]] = []
    while len(tokens) < vocab_size and heap:
        negc, _, pair = heapq.heappop(heap)
        if pair_count.get(pair, 0) != -negc or -negc <= 0:
            continue
        new_id = len(tokens)
        tokens.append(tokens[pair[0]] + tokens[pair[1]])
        merges.append(pair)
        touched: set[tuple[int, int]] = set()
        for wi in list(where.pop(pair, ())):
            w = words[wi]
            f = freqs[wi]
            for p in zip(w, w[1:]):
                pair_count[p] -= f
                touched.add(p)
            out = []
            i = 0
            while i < len(w):
                if i < len(w) - 1 and w[i] == pair[0] and w[i + 1] == pair[1]:
                    out.append(new_id)
                    i += 2
                else:
                    out.append(w[i])
                    i += 1
            words[wi] = out
            for p in zip(out, out[1:]):
                pair_count[p] += f
                where[p].add(wi)
                touched.add(p)
                if p not in first_seen:
                    first_seen[p] = step
                    step += 1
        pair_count.pop(pair, None)
        for p in touched:
            c = pair_count.get(p, 0)
            if c > 0:
                heapq.heappush(heap, (-c, first_seen[p], p))
            else:
                pair_count.pop(p, None)
    return Vocabulary(merges, tokens, specials)
