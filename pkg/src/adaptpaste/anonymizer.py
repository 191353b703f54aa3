"""Snippet variable classification and the training-time transforms.

Three transforms build model inputs from a paste instance:

* :func:`anonymize` - the dataflow-aware objective. Every snippet variable is
  renamed to one ``___vNN`` mask across all of its occurrences; the context
  is left untouched.
* :func:`mlm_transform` - masked-token baseline, 80% of snippet tokens become
  ``[MASK]`` regardless of lexical type.
* :func:`dobf_transform` - whole-file deobfuscation baseline with
  ``CLASS_NN`` / ``FUNC_NN`` / ``VAR_NN`` symbols.
"""

from __future__ import annotations

import logging
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .corpus import SourceFile
from .scopes import Occurrence, SymbolTable, VARIABLE_KINDS
from .syntax import PasteInstance, lex

log = logging.getLogger(__name__)

MASK_RANGE = 1000
MASK_RE = re.compile(r"___v(\d+)")
MLM_MASK = "[MASK]"
DOBF_KINDS = ("CLASS", "FUNC", "VAR")
DOBF_RANGE = 256
SEP = " | "


class AnonymizationError(ValueError):
    pass


def mask_text(number: int) -> str:
    return f"___v{number}"


@dataclass(frozen=True)
class SnippetVariable:
    name: str
    occurrences: tuple[int, ...]
    category: str  # bound | free


@dataclass
class AdaptationMapping:
    entries: list[tuple[str, str]] = field(default_factory=list)
    # per mask: True when the name is absent from the context symbols
    fresh: dict[str, bool] = field(default_factory=dict)
    malformed: list[str] = field(default_factory=list)

    def as_dict(self) -> dict[str, str]:
        return dict(self.entries)

    def __len__(self):
        return len(self.entries)

    def __eq__(self, other):
        if not isinstance(other, AdaptationMapping):
            return NotImplemented
        return self.entries == other.entries


@dataclass
class AnonymizedSample:
    input_text: str
    target: AdaptationMapping
    labels: dict[str, str]
    instance: PasteInstance | None = None
    # character offsets of the transformed snippet inside input_text
    snippet_start: int = 0
    snippet_end: int = 0
    transform: str = "adaptive"
    target_text_override: str | None = None
    # mlm queries: for each [MASK] in order, the index of its target entry
    owners: list[int] | None = None

    @property
    def snippet_text(self) -> str:
        return self.input_text[self.snippet_start : self.snippet_end]

    @property
    def target_text(self) -> str:
        if self.target_text_override is not None:
            return self.target_text_override
        return serialize_target(self.target) if self.target.entries else ""

    @property
    def masks(self) -> list[str]:
        return [m for m, _ in self.target.entries]

    def record(self) -> dict:
        meta = {}
        if self.instance is not None:
            meta = {
                "repo_id": self.instance.file.repo_id,
                "path": self.instance.file.relative_path,
                "span": list(self.instance.snippet_span),
            }
        meta["snippet"] = [self.snippet_start, self.snippet_end]
        meta["transform"] = self.transform
        if self.owners is not None:
            meta["owners"] = list(self.owners)
        return {
            "input_text": self.input_text,
            "target_text": self.target_text,
            "labels": dict(self.labels),
            "meta": meta,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "AnonymizedSample":
        meta = rec.get("meta", {})
        transform = meta.get("transform", "adaptive")
        if transform == "mlm":
            mapping = AdaptationMapping()
            override = rec["target_text"]
        else:
            mapping = parse_target(rec["target_text"])
            override = None
        start, end = meta.get("snippet", [0, len(rec["input_text"])])
        return cls(rec["input_text"], mapping, dict(rec.get("labels", {})), None,
                   start, end, transform, override, meta.get("owners"))


# classification ---------------------------------------------------------------

def _snippet_occurrences(instance: PasteInstance, symtab: SymbolTable) -> list[Occurrence]:
    lo, hi = instance.snippet_span
    return symtab.occurrences_in(lo, hi)


def classify_variables(instance: PasteInstance, symtab: SymbolTable) -> list[SnippetVariable]:
    """Snippet variables with their bound/free category, in first-occurrence order.

    Occurrences are grouped by name: a name resolving to several symbols
    inside one snippet (e.g. a comprehension variable shadowing a local) is
    one adaptable unit and is bound when any of its symbols is.
    """
    lo, hi = instance.snippet_span
    by_name: dict[str, list[Occurrence]] = {}
    for occ in _snippet_occurrences(instance, symtab):
        sym = symtab.symbol(occ.symbol)
        if not sym.is_variable:
            continue
        by_name.setdefault(occ.name, []).append(occ)
    out = []
    for name, occs in by_name.items():
        if not all(o.located for o in occs):
            # a position we cannot rewrite would leak the name
            continue
        bound = False
        for ref in {o.symbol for o in occs}:
            sym = symtab.symbol(ref)
            if any(not (lo <= site < hi) for site in sym.sites):
                bound = True
                break
        out.append(SnippetVariable(name, tuple(o.start for o in occs), "bound" if bound else "free"))
    out.sort(key=lambda v: v.occurrences[0])
    return out


def bound_fraction(variables: Iterable[SnippetVariable]) -> tuple[int, int]:
    cats = Counter(v.category for v in variables)
    return cats["bound"], cats["bound"] + cats["free"]


# the dataflow-aware transform -----------------------------------------------------

def _available_masks(file_text: str) -> list[int]:
    taken = {int(m.group(1)) for m in MASK_RE.finditer(file_text)}
    return [n for n in range(MASK_RANGE) if n not in taken]


def _rewrite(data: bytes, lo: int, hi: int, replacements: list[tuple[int, int, str]]) -> str:
    pieces = []
    cursor = lo
    for start, end, text in sorted(replacements):
        pieces.append(data[cursor:start].decode("utf-8"))
        pieces.append(text)
        cursor = end
    pieces.append(data[cursor:hi].decode("utf-8"))
    return "".join(pieces)


def anonymize(instance: PasteInstance, variables: Sequence[SnippetVariable], seed: int = 0) -> AnonymizedSample:
    """Rename every snippet variable to a shuffled ``___vNN`` mask."""
    pool = _available_masks(instance.file.text)
    if len(variables) > len(pool):
        raise AnonymizationError(f"{len(variables)} variables exceed the {len(pool)} free mask symbols")
    rng = random.Random(seed)
    numbers = rng.sample(pool, len(variables))
    data = instance.file.data
    lo, hi = instance.snippet_span
    replacements = []
    entries = []
    labels = {}
    fresh = {}
    for var, num in zip(variables, numbers):
        mask = mask_text(num)
        width = len(var.name.encode("utf-8"))
        for start in var.occurrences:
            replacements.append((start, start + width, mask))
        entries.append((mask, var.name))
        labels[mask] = var.category
        fresh[mask] = var.category == "free"
    snippet = _rewrite(data, lo, hi, replacements)
    prefix = instance.prefix
    text = prefix + snippet + instance.suffix
    mapping = AdaptationMapping(entries, fresh)
    return AnonymizedSample(text, mapping, labels, instance, len(prefix), len(prefix) + len(snippet))


def restore(anonymized_snippet: str, mapping: AdaptationMapping | dict[str, str]) -> str:
    """Substitute mapped names back for their masks."""
    table = mapping.as_dict() if isinstance(mapping, AdaptationMapping) else mapping
    return MASK_RE.sub(lambda m: table.get(m.group(0), m.group(0)), anonymized_snippet)


# target strings ----------------------------------------------------------------

def serialize_target(mapping: AdaptationMapping) -> str:
    if not mapping.entries:
        raise ValueError("cannot serialize an empty mapping")
    return SEP.join(f"{mask} {name}" for mask, name in mapping.entries)


def parse_target(text: str) -> AdaptationMapping:
    """Parse ``"___v3 foo | ___v9 bar"`` back into a mapping.

    Duplicate masks keep their first entry; entries without a mask prefix
    are dropped and reported in ``malformed``.
    """
    mapping = AdaptationMapping()
    seen = set()
    if not text.strip():
        return mapping
    for raw in text.split(SEP):
        entry = raw.strip()
        parts = entry.split(None, 1)
        if len(parts) != 2 or not _is_mask_symbol(parts[0]):
            mapping.malformed.append(raw)
            continue
        mask, name = parts[0], parts[1].strip()
        if mask in seen:
            continue
        seen.add(mask)
        mapping.entries.append((mask, name))
    return mapping


def _is_mask_symbol(text: str) -> bool:
    if MASK_RE.fullmatch(text):
        return True
    return re.fullmatch(r"(CLASS|FUNC|VAR)_\d+", text) is not None


# MLM baseline --------------------------------------------------------------------

def _escape(tok: str) -> str:
    return tok.replace("\\", "\\\\").replace("|", "\\|").replace("\n", "\\n")


def _unescape(tok: str) -> str:
    out = []
    it = iter(tok)
    for ch in it:
        if ch == "\\":
            nxt = next(it, "")
            out.append({"n": "\n", "|": "|", "\\": "\\"}.get(nxt, nxt))
        else:
            out.append(ch)
    return "".join(out)


def serialize_tokens(tokens: Sequence[str]) -> str:
    return SEP.join(_escape(t) for t in tokens)


def parse_tokens(text: str) -> list[str]:
    if not text:
        return []
    return [_unescape(t) for t in text.split(SEP)]


def snippet_lexemes(instance: PasteInstance):
    lo, hi = instance.snippet_span
    return [t for t in lex(instance.file) if lo <= t.start and t.end <= hi and t.kind != "COMMENT"]


def mlm_transform(instance: PasteInstance, mask_fraction: float = 0.8, seed: int = 0) -> AnonymizedSample:
    """Replace a uniform ``mask_fraction`` of snippet tokens with ``[MASK]``.

    The target is the sequence of masked tokens in source order.
    """
    toks = snippet_lexemes(instance)
    k = math.floor(mask_fraction * len(toks) + 0.5)
    rng = random.Random(seed)
    chosen = sorted(rng.sample(range(len(toks)), k))
    return _mask_positions(instance, toks, chosen, "mlm")


def _mask_positions(instance, toks, chosen, transform) -> AnonymizedSample:
    lo, hi = instance.snippet_span
    repl = [(toks[i].start, toks[i].end, MLM_MASK) for i in chosen]
    snippet = _rewrite(instance.file.data, lo, hi, repl)
    prefix = instance.prefix
    text = prefix + snippet + instance.suffix
    targets = [toks[i].text for i in chosen]
    return AnonymizedSample(text, AdaptationMapping(), {}, instance, len(prefix), len(prefix) + len(snippet),
                            transform, serialize_tokens(targets))


def mlm_query(instance: PasteInstance, variables: Sequence[SnippetVariable], mask_fraction: float = 0.0,
              seed: int = 0) -> tuple[AnonymizedSample, list[int]]:
    """MLM-style input where every variable occurrence is masked.

    Further snippet tokens are masked at random until ``mask_fraction`` of
    them are, so the query can match the density seen in training. Returns
    the sample and, for each ``[MASK]`` in order, the index of the variable
    it stands for (-1 for other tokens).
    """
    toks = snippet_lexemes(instance)
    owner = {}
    for vi, var in enumerate(variables):
        for start in var.occurrences:
            owner[start] = vi
    forced = [i for i, t in enumerate(toks) if t.start in owner and t.kind == "NAME"]
    forced_set = set(forced)
    rest = [i for i in range(len(toks)) if i not in forced_set]
    extra = max(0, math.floor(mask_fraction * len(toks) + 0.5) - len(forced))
    chosen = sorted(forced + random.Random(seed).sample(rest, min(extra, len(rest))))
    sample = _mask_positions(instance, toks, chosen, "mlm")
    return sample, [owner[toks[i].start] if i in forced_set else -1 for i in chosen]


def mlm_vote(predicted_tokens: Sequence[str], owners: Sequence[int], n_vars: int) -> list[str | None]:
    """Majority vote of per-position predictions for each variable (ties: earliest)."""
    votes: list[Counter] = [Counter() for _ in range(n_vars)]
    first: list[dict[str, int]] = [{} for _ in range(n_vars)]
    for pos, (tok, vi) in enumerate(zip(predicted_tokens, owners)):
        if vi < 0:
            continue
        votes[vi][tok] += 1
        first[vi].setdefault(tok, pos)
    out = []
    for vi in range(n_vars):
        if not votes[vi]:
            out.append(None)
            continue
        out.append(min(votes[vi], key=lambda t: (-votes[vi][t], first[vi][t])))
    return out


# DOBF baseline -----------------------------------------------------------------

def _dobf_kind(kinds: set[str]) -> str | None:
    if "class" in kinds:
        return "CLASS"
    if "def" in kinds:
        return "FUNC"
    if kinds & (VARIABLE_KINDS - {"import"}):
        return "VAR"
    return None


def dobf_transform(file: SourceFile, seed: int = 0, symtab: SymbolTable | None = None) -> AnonymizedSample:
    """Obfuscate class, function and variable names defined in ``file``.

    Imported names are external and kept; a name is obfuscated only when
    every occurrence can be rewritten in place.
    """
    if symtab is None:
        from .scopes import analyze_scopes
        from .syntax import parse

        symtab = analyze_scopes(file, parse(file))
    kind_of: dict[str, str] = {}
    rank = {"CLASS": 0, "FUNC": 1, "VAR": 2}
    for sym in symtab.symbols():
        kind = _dobf_kind(sym.kinds)
        if kind is None:
            continue
        prev = kind_of.get(sym.name)
        if prev is None or rank[kind] < rank[prev]:
            kind_of[sym.name] = kind
    occs: dict[str, list[Occurrence]] = {}
    for occ in symtab.occurrences:
        if occ.name in kind_of:
            occs.setdefault(occ.name, []).append(occ)
    names = [n for n in sorted(occs, key=lambda n: occs[n][0].start) if all(o.located for o in occs[n])]
    rng = random.Random(seed)
    per_kind: dict[str, list[str]] = {k: [] for k in DOBF_KINDS}
    for n in names:
        per_kind[kind_of[n]].append(n)
    symbol_of = {}
    for kind, members in per_kind.items():
        if len(members) > DOBF_RANGE:
            raise AnonymizationError(f"{len(members)} {kind} names exceed the {DOBF_RANGE} DOBF symbols")
        numbers = list(range(len(members)))
        rng.shuffle(numbers)
        for n, num in zip(members, numbers):
            symbol_of[n] = f"{kind}_{num}"
    repl = [(o.start, o.end, symbol_of[n]) for n in names for o in occs[n]]
    text = _rewrite(file.data, 0, len(file.data), repl)
    entries = [(symbol_of[n], n) for n in names]
    return AnonymizedSample(text, AdaptationMapping(entries), {}, None, 0, len(text), "dobf")
