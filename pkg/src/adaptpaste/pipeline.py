"""Library-level glue between mining, transforms, inference and scoring.

The command line is a thin layer over these functions; tests and library
users call them directly.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

from .anonymizer import (AnonymizedSample, anonymize, classify_variables, dobf_transform, mlm_query, mlm_transform,
                         mlm_vote, parse_tokens)
from .context import BudgetTooSmall, lexical_count, prioritize
from .corpus import SourceFile
from .evaluation import SampleScore, context_names, score, vote_prediction
from .model.data import encode_sample
from .model.network import AdaptModel
from .model.predict import PredictionSet, Predictor
from .scopes import SymbolTable, analyze_scopes
from .syntax import PasteInstance, parse, sample_snippets, samples_per_file
from .tokenizer import Vocabulary

log = logging.getLogger(__name__)


def derived_seed(seed: int, *parts) -> int:
    """Order-independent per-item seed."""
    key = ":".join(str(p) for p in (seed, *parts))
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "big")


@dataclass
class ExtractStats:
    files: int = 0
    skipped: int = 0
    samples: int = 0
    bound: int = 0
    variables: int = 0

    @property
    def bound_fraction(self) -> float | None:
        return self.bound / self.variables if self.variables else None


def mlm_query_sample(instance: PasteInstance, variables, reference: AnonymizedSample,
                     mask_fraction: float = 0.8, seed: int = 0) -> AnonymizedSample:
    """``[MASK]``-query form of ``instance`` scored against ``reference``'s mapping."""
    query, owners = mlm_query(instance, variables, mask_fraction, seed)
    return replace(query, target=reference.target, labels=dict(reference.labels), transform="mlm_query",
                   target_text_override=None, owners=owners)


def instance_samples(
    instance: PasteInstance,
    symtab: SymbolTable,
    transform: str,
    seed: int,
    query: bool = False,
    mlm_fraction: float = 0.8,
    stats: ExtractStats | None = None,
) -> AnonymizedSample:
    """One sample for ``instance``; ``query`` selects the MLM evaluation form."""
    variables = classify_variables(instance, symtab)
    if stats is not None:
        stats.variables += len(variables)
        stats.bound += sum(v.category == "bound" for v in variables)
    adaptive = anonymize(instance, variables, seed)
    if transform == "adaptive":
        return adaptive
    if transform == "mlm":
        if query:
            return mlm_query_sample(instance, variables, adaptive, mlm_fraction, seed)
        return mlm_transform(instance, mlm_fraction, seed)
    raise ValueError(f"unknown transform {transform!r}")


def extract_file(
    file: SourceFile,
    transform: str = "adaptive",
    seed: int = 0,
    max_lines: int = 6,
    cap: int = 8,
    query: bool = False,
    mlm_fraction: float = 0.8,
    budget: int | None = None,
    count: Callable[[str], int] = lexical_count,
    stats: ExtractStats | None = None,
) -> list[AnonymizedSample]:
    """All samples mined from one file. Raises :class:`~adaptpaste.syntax.ParseError`."""
    tree = parse(file)
    symtab = analyze_scopes(file, tree)
    if stats is not None:
        stats.files += 1
    if transform == "dobf":
        out = [dobf_transform(file, derived_seed(seed, file.repo_id, file.relative_path), symtab)]
        if stats is not None:
            stats.samples += 1
        return out
    instances = sample_snippets(tree, file, max_lines=max_lines, count=samples_per_file(file.line_count, cap),
                                seed=derived_seed(seed, file.repo_id, file.relative_path))
    out = []
    for inst in instances:
        s = instance_samples(inst, symtab, transform, derived_seed(seed, file.relative_path, *inst.snippet_span),
                             query, mlm_fraction, stats)
        if budget is not None:
            try:
                ctx = prioritize(s, tree, budget, count)
            except BudgetTooSmall as exc:
                log.warning("%s: %s; sample dropped", file.relative_path, exc)
                continue
            s = _with_context(s, ctx.rendered_text)
        out.append(s)
    if stats is not None:
        stats.samples += len(out)
    return out


def _with_context(sample: AnonymizedSample, rendered: str) -> AnonymizedSample:
    snippet = sample.snippet_text
    start = rendered.find(snippet)
    if start < 0:
        raise AssertionError("rendered context lost the snippet")
    return replace(sample, input_text=rendered, snippet_start=start, snippet_end=start + len(snippet))


# inference and scoring -----------------------------------------------------------

def predict_samples(model: AdaptModel, vocab: Vocabulary, samples: Sequence[AnonymizedSample],
                    beam_width: int = 1, batch_size: int = 32) -> list[PredictionSet]:
    cfg = model.cfg
    items = [encode_sample(s, vocab, cfg.max_src_len, cfg.max_tgt_len) for s in samples]
    preds = Predictor(model, vocab, beam_width).predict_many(items, batch_size)
    out = []
    for s, p in zip(samples, preds):
        if s.transform == "mlm_query" and s.owners is not None:
            votes = mlm_vote(parse_tokens(p.raw), s.owners, len(s.target.entries))
            q = vote_prediction(votes, s.masks)
            q.joint_confidence, q.raw = p.joint_confidence, p.raw
            p = q
        out.append(p)
    return out


def score_samples(samples: Iterable[AnonymizedSample], preds: Iterable[PredictionSet]) -> list[SampleScore]:
    return [score(p, s.target, s.labels, context_names(s)) for s, p in zip(samples, preds)]
