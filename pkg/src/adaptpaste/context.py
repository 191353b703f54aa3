"""Budgeted, syntax-aware context rendering around a pasted snippet.

Source lines are grouped into atoms (a simple statement, or the header of a
compound statement). Atoms are ranked, then added greedily in rank order
until the first one that no longer fits; because the ranking does not
depend on the budget, a larger budget always yields a superset. Omitted
code between two rendered atoms collapses to a single ``...`` line.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass
from typing import Callable

from .anonymizer import AnonymizedSample
from .syntax import BLOCK_KINDS, CstNode, LineIndex

ELLIPSIS = "..."
DEFAULT_BUDGET = 1024

_LEX_RE = re.compile(r"[A-Za-z_]\w*|\d+|\S")

# rank table; lower is more important
RANK_ENCLOSING_BODY = 1
RANK_ENCLOSING_SIGNATURE = 2
RANK_CLASS_MEMBER = 3
RANK_MODULE_HEADER = 4
RANK_SIBLING_SIGNATURE = 5
RANK_GLOBAL_EXPRESSION = 6
RANK_REST = 7


class BudgetTooSmall(ValueError):
    pass


def lexical_count(text: str) -> int:
    """Default token counter: identifiers, numbers, single symbols, newlines."""
    return len(_LEX_RE.findall(text)) + text.count("\n")


@dataclass(frozen=True)
class HierarchyElement:
    kind: str
    span: tuple[int, int]  # 1-based inclusive line range
    priority: int
    distance: int
    parents: tuple[int, ...] = ()  # indices of header atoms this one needs


@dataclass
class PrioritizedContext:
    rendered_text: str
    token_count: int
    elements: list[HierarchyElement]
    truncated: bool


class _Atoms:
    def __init__(self, tree: CstNode, index: LineIndex):
        self.index = index
        self.atoms: list[dict] = []  # lines, node, kind, parents, block, pos, depth
        self._collect(tree, (), None, 0)

    def _collect(self, node: CstNode, parents: tuple[int, ...], block, depth):
        for pos, child in enumerate(node.children):
            self._statement(child, parents, node, pos, depth)

    def _statement(self, node: CstNode, parents, block, pos, depth):
        if node.kind in BLOCK_KINDS:
            self._collect(node, parents, node, depth)
            return
        if node.kind == "SimpleStatementLine" or not node.children:
            self.atoms.append(dict(lines=node.lines, node=node, header=False, parents=parents,
                                   block=block, pos=pos, depth=depth))
            return
        # compound statement or clause: header atom, then its children
        header_end_line = self.index.line_of(max((node.header_end or node.span[1]) - 1, node.span[0]))
        me = len(self.atoms)
        self.atoms.append(dict(lines=(node.lines[0], header_end_line), node=node, header=True,
                               parents=parents, block=block, pos=pos, depth=depth))
        inner = parents + (me,)
        for cpos, child in enumerate(node.children):
            if child.kind in BLOCK_KINDS:
                self._collect(child, inner, child, depth + 1)
            else:
                self._statement(child, inner, node, cpos, depth + 1)


def _ast_type(atom) -> type | None:
    node = atom["node"]
    if node.kind == "SimpleStatementLine" and node.children:
        return type(node.children[0].ast_node)
    return type(node.ast_node) if node.ast_node is not None else None


def _is_docstring(atom) -> bool:
    node = atom["node"]
    if node.kind != "SimpleStatementLine" or len(node.children) != 1:
        return False
    stmt = node.children[0].ast_node
    return isinstance(stmt, ast.Expr) and isinstance(stmt.value, ast.Constant) and isinstance(stmt.value.value, str)


def prioritize(
    sample: AnonymizedSample,
    tree: CstNode,
    budget: int = DEFAULT_BUDGET,
    count: Callable[[str], int] = lexical_count,
) -> PrioritizedContext:
    """Render ``sample.input_text`` within ``budget`` tokens around its snippet.

    ``tree`` is the parse of the original (pre-anonymization) file; the
    anonymization never changes line structure, so its line ranges address
    ``input_text`` directly.
    """
    text = sample.input_text
    lines = text.split("\n")
    # per-line cost includes its newline
    costs = [count(ln) + 1 for ln in lines]
    snippet = sample.snippet_text
    data = text.encode("utf-8")
    index = LineIndex(data)
    s_line = index.line_of(len(text[: sample.snippet_start].encode("utf-8")))
    e_line = index.line_of(max(len(text[: sample.snippet_end].encode("utf-8")) - 1, 0))
    if budget < count(snippet):
        raise BudgetTooSmall(f"budget {budget} cannot hold the {count(snippet)}-token snippet")

    if sum(costs) - 1 <= budget:
        return PrioritizedContext(text, sum(costs) - 1, [], False)

    atoms = _Atoms(tree, index).atoms
    snippet_lines = set(range(s_line, e_line + 1))

    def overlaps(a):
        lo, hi = a["lines"]
        return lo <= e_line and s_line <= hi

    inside = [i for i, a in enumerate(atoms) if overlaps(a)]
    # enclosing chain: compound headers around the snippet, outermost first
    chain: list[int] = []
    if inside:
        chain = [p for p in atoms[inside[0]]["parents"] if not overlaps(atoms[p])]
    chain_set = set(chain)
    local_root = next((p for p in reversed(chain) if atoms[p]["node"].kind in ("FunctionDef", "ClassDef")), None)
    enclosing_class = next((p for p in reversed(chain) if atoms[p]["node"].kind == "ClassDef"), None)

    elements = []  # (rank, level, line distance, first line, atom index)
    for i, a in enumerate(atoms):
        if i in inside or i in chain_set:
            continue
        parents = a["parents"]
        lo = a["lines"][0]
        line_dist = min(abs(lo - s_line), abs(lo - e_line))
        t = _ast_type(a)
        at_module = not parents
        local = at_module if local_root is None else local_root in parents
        level = 0
        if local:
            rank = RANK_ENCLOSING_BODY
            common = 0
            while common < min(len(parents), len(chain)) and parents[common] == chain[common]:
                common += 1
            level = len(chain) - common
        elif enclosing_class is not None and parents and parents[-1] == enclosing_class \
                and (t in (ast.Assign, ast.AnnAssign) or _is_docstring(a)):
            rank = RANK_CLASS_MEMBER
        elif at_module and t in (ast.Import, ast.ImportFrom, ast.Assign, ast.AnnAssign, ast.AugAssign):
            rank = RANK_MODULE_HEADER
        elif a["header"] and a["node"].kind in ("FunctionDef", "ClassDef") and \
                (at_module or (enclosing_class is not None and parents[-1] == enclosing_class)):
            rank = RANK_SIBLING_SIGNATURE
        elif at_module:
            rank = RANK_GLOBAL_EXPRESSION
        else:
            rank = RANK_REST
        elements.append((rank, level, line_dist, lo, i))
    elements.sort()

    chosen: set[int] = set(inside)
    used = set(snippet_lines)
    for i in inside:
        used.update(range(atoms[i]["lines"][0], atoms[i]["lines"][1] + 1))

    def indent(raw: str) -> str:
        return raw[: len(raw) - len(raw.lstrip())]

    def render(selected: set[int]) -> tuple[str, int]:
        out = []
        total = 0
        gap = None
        for ln in range(1, len(lines) + 1):
            raw = lines[ln - 1]
            if ln in selected:
                if gap is not None:
                    out.append(gap + ELLIPSIS)
                    total += count(gap + ELLIPSIS) + 1
                    gap = None
                out.append(raw)
                total += costs[ln - 1]
            elif raw.strip() and gap is None:
                gap = indent(raw)
        if gap is not None:
            out.append(gap + ELLIPSIS)
            total += count(gap + ELLIPSIS) + 1
        return "\n".join(out), total - 1

    marker = max(count(indent(ln) + ELLIPSIS) + 1 for ln in lines)

    def bound(selected: set[int], n_atoms: int) -> int:
        # n atoms leave at most n + 1 gaps
        return sum(costs[ln - 1] for ln in selected) + (n_atoms + 1) * marker - 1

    n_atoms = len(inside) or 1
    if bound(used, n_atoms) > budget:
        raise BudgetTooSmall(f"budget {budget} cannot hold the snippet lines plus truncation markers")

    # snippet ancestors come first: every other atom sits inside them syntactically
    plan = [(RANK_ENCLOSING_SIGNATURE, 0, 0, atoms[p]["lines"][0], p) for p in reversed(chain)] + elements
    kept: list[HierarchyElement] = []
    for rank, _level, dist, _lo, i in plan:
        need = [j for j in (*atoms[i]["parents"], i) if j not in chosen]
        if not need:
            continue
        trial = set(used)
        for j in need:
            lo, hi = atoms[j]["lines"]
            trial.update(range(lo, hi + 1))
        if bound(trial, n_atoms + len(need)) > budget:
            break
        used = trial
        chosen.update(need)
        n_atoms += len(need)
        kept.append(HierarchyElement(_element_kind(atoms[i], rank), atoms[i]["lines"], rank, dist))

    rendered, total = render(used)
    return PrioritizedContext(rendered, total, kept, True)


def _element_kind(atom, rank) -> str:
    t = _ast_type(atom)
    if rank == RANK_ENCLOSING_BODY:
        return "enclosing_body"
    if rank == RANK_ENCLOSING_SIGNATURE or (atom["header"] and atom["node"].kind == "FunctionDef"):
        return "method_signature"
    if rank == RANK_CLASS_MEMBER:
        return "class_docstring" if _is_docstring(atom) else "class_attribute"
    if t in (ast.Import, ast.ImportFrom):
        return "import"
    if t in (ast.Assign, ast.AnnAssign, ast.AugAssign):
        return "global_assign"
    return "global_expression"
