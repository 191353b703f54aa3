"""Generated paste instances whose bound names are recoverable from context.

Each file defines a short function with four two-word variables. The last
context statement passes one of them to a helper, and the pasted snippet
repeats that call on a masked variable and stores the result in a fresh
temporary, as when a near-duplicate line is pasted under its original. The
right name for the bound mask is the argument of the statement above; the
other three variables are distractors and the temporary is free.
``n_used`` raises the number of bound variables per snippet.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .corpus import SourceFile

WORDS = (
    "alpha", "batch", "cache", "delta", "entry", "frame", "graph", "index", "label", "model",
    "node", "offset", "point", "query", "range", "score", "token", "user", "value", "weight",
    "block", "count", "depth", "field", "group", "layer", "limit", "path", "ratio", "state",
)
KEYS = (
    "red", "green", "blue", "gold", "iron", "jade", "lime", "mint", "navy", "onyx",
    "pink", "ruby", "sand", "teal", "wine", "zinc", "amber", "coral", "ivory", "olive",
)
FREE = ("tmp", "acc", "buf", "res", "out", "part")


@dataclass(frozen=True)
class SyntheticFile:
    file: SourceFile
    snippet_lines: tuple[int, int]  # 1-based inclusive
    bound_names: tuple[str, ...]


def _name(rng: random.Random, taken: set[str]) -> str:
    while True:
        name = "_".join(rng.sample(WORDS, 2))
        if name not in taken:
            taken.add(name)
            return name


def make_file(rng: random.Random, index: int, n_context: int = 4, n_used: int = 1) -> SyntheticFile:
    if not 1 <= n_used <= n_context:
        raise ValueError("need 1 <= n_used <= n_context")
    taken: set[str] = set()
    names = [_name(rng, taken) for _ in range(n_context)]
    used = rng.sample(range(n_context), n_used)
    helper = rng.choice(KEYS)
    free = rng.choice(FREE)
    lines = [f"def task({', '.join(names[:2])}):"]
    for name in names[2:]:
        lines.append(f"    {name} = load()")
    args = ", ".join(names[k] for k in used)
    lines.append(f"    check({helper}({args}))")
    first = len(lines) + 1
    lines.append(f"    {free} = {helper}({args})")
    lines.append(f"    emit({free})")
    last = len(lines)
    lines.append("    return")
    text = "\n".join(lines) + "\n"
    file = SourceFile(f"synth{index % 97}", f"f{index}.py", text)
    return SyntheticFile(file, (first, last), tuple(names[k] for k in used))


def generate(n: int, seed: int = 0, n_context: int = 4, n_used: int = 1) -> list[SyntheticFile]:
    rng = random.Random(seed)
    return [make_file(rng, i, n_context, n_used) for i in range(n)]


def instances(files: list[SyntheticFile]):
    from .scopes import analyze_scopes
    from .syntax import instance_from_lines, parse

    for sf in files:
        tree = parse(sf.file)
        yield instance_from_lines(tree, sf.file, *sf.snippet_lines), analyze_scopes(sf.file, tree)


def samples(files: list[SyntheticFile], transform: str = "adaptive", seed: int = 0):
    """Samples for ``transform``: ``adaptive``, ``mlm`` (training form) or ``mlm_query``."""
    from .anonymizer import anonymize, classify_variables, mlm_transform
    from .pipeline import mlm_query_sample

    if transform not in ("adaptive", "mlm", "mlm_query"):
        raise ValueError(f"unsupported synthetic transform {transform!r}")
    out = []
    for i, (inst, symtab) in enumerate(instances(files)):
        if transform == "mlm":
            out.append(mlm_transform(inst, seed=seed + i))
            continue
        variables = classify_variables(inst, symtab)
        adaptive = anonymize(inst, variables, seed + i)
        out.append(adaptive if transform == "adaptive" else mlm_query_sample(inst, variables, adaptive, seed=seed + i))
    return out
