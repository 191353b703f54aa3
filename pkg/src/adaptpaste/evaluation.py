"""Adaptation metrics and confidence-threshold sweeps."""

from __future__ import annotations

import csv
import io
import keyword
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .anonymizer import AdaptationMapping, AnonymizedSample
from .model.predict import PredictedName, PredictionSet

THRESHOLDS = tuple(float(t) for t in np.linspace(0.7, 0.985, 20))
REGIMES = ("exact_match", "valid_paste", "variable")
METRIC_NAMES = ("Accuracy", "ValidPaste", "VarAcc", "VarAcc_bound", "VarAcc_free", "CatAcc_bound", "CatAcc_free",
                "AvgF1Subtoken")

_IDENT = re.compile(r"[^\W\d]\w*")
_CASE_BOUNDARY = re.compile(r"(?<=[a-z])(?=[A-Z])")


@dataclass
class VariableScore:
    mask: str
    correct: bool
    category_truth: str
    category_pred: str
    subtoken_f1: float
    predicted: str | None


@dataclass
class SampleScore:
    exact_match: bool
    valid_paste: bool
    per_var: list[VariableScore]
    missing: list[str] = field(default_factory=list)  # truth masks without a prediction


def subtokens(name: str) -> set[str]:
    """Lower-cased subtokens, split at underscores and lower-to-upper case changes."""
    return {piece.lower() for part in name.split("_") for piece in _CASE_BOUNDARY.split(part) if piece}


def subtoken_f1(pred_name: str, truth_name: str) -> float:
    p, t = subtokens(pred_name), subtokens(truth_name)
    if not p or not t:
        return float(p == t)
    hit = len(p & t)
    if not hit:
        return 0.0
    precision, recall = hit / len(p), hit / len(t)
    return 2 * precision * recall / (precision + recall)


def context_names(sample: AnonymizedSample) -> set[str]:
    """Identifiers visible in the context part of ``sample.input_text``."""
    text = sample.input_text[: sample.snippet_start] + "\n" + sample.input_text[sample.snippet_end :]
    return {m for m in _IDENT.findall(text) if not keyword.iskeyword(m)}


def score(pred: PredictionSet, truth: AdaptationMapping, labels: dict[str, str],
          context_symbols: Iterable[str] = ()) -> SampleScore:
    """Score one sample. A predicted name counts as bound when it occurs in ``context_symbols``."""
    symbols = set(context_symbols)
    predicted = pred.as_dict()
    per_var, missing = [], []
    for mask, name in truth.entries:
        guess = predicted.get(mask)
        if guess is None:
            missing.append(mask)
        cat_truth = labels.get(mask, "free")
        cat_pred = "bound" if guess is not None and guess in symbols else "free"
        f1 = subtoken_f1(guess, name) if guess else 0.0
        per_var.append(VariableScore(mask, guess == name, cat_truth, cat_pred, f1, guess))
    exact = all(v.correct for v in per_var)
    valid = all(v.correct for v in per_var if v.category_truth == "bound")
    return SampleScore(exact, valid, per_var, missing)


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def aggregate(scores: Sequence[SampleScore]) -> dict[str, dict]:
    """Metric name -> {"value": ratio or None, "count": denominator}."""
    if not scores:
        raise ValueError("cannot aggregate an empty score set")
    vars_ = [v for s in scores for v in s.per_var]
    bound = [v for v in vars_ if v.category_truth == "bound"]
    free = [v for v in vars_ if v.category_truth != "bound"]

    def entry(num, den):
        return {"value": _ratio(num, den), "count": den}

    n = len(scores)
    return {
        "Accuracy": entry(sum(s.exact_match for s in scores), n),
        "ValidPaste": entry(sum(s.valid_paste for s in scores), n),
        "VarAcc": entry(sum(v.correct for v in vars_), len(vars_)),
        "VarAcc_bound": entry(sum(v.correct for v in bound), len(bound)),
        "VarAcc_free": entry(sum(v.correct for v in free), len(free)),
        "CatAcc_bound": entry(sum(v.category_pred == "bound" for v in bound), len(bound)),
        "CatAcc_free": entry(sum(v.category_pred == "free" for v in free), len(free)),
        "AvgF1Subtoken": {"value": (sum(v.subtoken_f1 for v in free) / len(free)) if free else None,
                          "count": len(free)},
    }


def per_variable_confidence(pred: PredictionSet, mask: str) -> float:
    """Per-mask confidence, falling back to the joint one (uni decoder)."""
    c = pred.confidence_of(mask)
    if c is None:
        c = pred.joint_confidence
    return 0.0 if c is None else c


def sample_confidence(pred: PredictionSet, masks: Sequence[str]) -> float:
    """Joint confidence when present, else the least confident mask."""
    if pred.joint_confidence is not None:
        return pred.joint_confidence
    values = [per_variable_confidence(pred, m) for m in masks]
    return min(values) if values else 1.0


@dataclass
class SweepRow:
    regime: str
    threshold: float
    kept: int
    total: int
    correct: int
    precision: float | None
    recall: float
    f1: float | None


@dataclass
class ThresholdReport:
    thresholds: tuple[float, ...]
    rows: list[SweepRow]

    def regime(self, name: str) -> list[SweepRow]:
        return [r for r in self.rows if r.regime == name]

    def recall(self, name: str) -> list[float]:
        return [r.recall for r in self.regime(name)]


def _sweep_rows(regime: str, items: list[tuple[float, bool]], thresholds) -> list[SweepRow]:
    total = len(items)
    rows = []
    for t in thresholds:
        kept = [ok for c, ok in items if c >= t]
        correct = sum(kept)
        precision = _ratio(correct, len(kept))
        recall = len(kept) / total if total else 0.0
        f1 = None
        if precision is not None and precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        rows.append(SweepRow(regime, t, len(kept), total, correct, precision, recall, f1))
    return rows


def threshold_sweep(preds: Sequence[PredictionSet], scores: Sequence[SampleScore],
                    thresholds: Sequence[float] = THRESHOLDS) -> ThresholdReport:
    """Filter predictions by confidence at each threshold (kept iff confidence >= t)."""
    if len(preds) != len(scores):
        raise ValueError("predictions and scores differ in length")
    exact, valid, per_var = [], [], []
    for pred, sc in zip(preds, scores):
        conf = sample_confidence(pred, [v.mask for v in sc.per_var])
        exact.append((conf, sc.exact_match))
        valid.append((conf, sc.valid_paste))
        per_var.extend((per_variable_confidence(pred, v.mask), v.correct) for v in sc.per_var)
    rows = (_sweep_rows("exact_match", exact, thresholds) + _sweep_rows("valid_paste", valid, thresholds)
            + _sweep_rows("variable", per_var, thresholds))
    return ThresholdReport(tuple(thresholds), rows)


def vote_prediction(votes: Sequence[str | None], masks: Sequence[str]) -> PredictionSet:
    """PredictionSet from per-variable majority votes of a token-level model."""
    return PredictionSet([PredictedName(m, v) for m, v in zip(masks, votes) if v is not None])


# output -----------------------------------------------------------------------

def _fmt(x) -> str:
    return "" if x is None else f"{x:.6f}"


def metrics_csv(metrics: dict[str, dict], header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["metric", "value", "count"])
    for name in METRIC_NAMES:
        w.writerow([name, _fmt(metrics[name]["value"]), metrics[name]["count"]])
    return buf.getvalue()


def sweep_csv(report: ThresholdReport, header: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["regime", "threshold", "kept", "total", "correct", "precision", "recall", "f1"])
    for r in report.rows:
        w.writerow([r.regime, f"{r.threshold:.4f}", r.kept, r.total, r.correct, _fmt(r.precision),
                    _fmt(r.recall), _fmt(r.f1)])
    return buf.getvalue()


def format_table(metrics: dict[str, dict]) -> str:
    width = max(len(n) for n in METRIC_NAMES)
    lines = [f"{'metric'.ljust(width)}  {'value':>8}  {'n':>6}"]
    for name in METRIC_NAMES:
        v = metrics[name]["value"]
        shown = "n/a" if v is None else f"{100 * v:.1f}%"
        lines.append(f"{name.ljust(width)}  {shown:>8}  {metrics[name]['count']:>6}")
    return "\n".join(lines)
