"""Concrete syntax tree adapter and pastable-snippet sampling.

The tree is built from :mod:`ast` but node kinds follow the LibCST
vocabulary (``SimpleStatementLine``, ``IndentedBlock`` ...), so the block
whitelist used for sampling stays parser-agnostic. All spans are byte
offsets into the UTF-8 encoded source.
"""

from __future__ import annotations

import ast
import bisect
import io
import math
import random
import tokenize
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

from .corpus import SourceFile

BLOCK_KINDS = frozenset({"Module", "IndentedBlock", "SimpleStatementSuite"})

# node kinds under which contiguous statements may be picked as a paste
WHITELIST = frozenset({
    "Module", "SimpleStatementSuite", "SimpleStatementLine", "IndentedBlock",
    "If", "With", "For", "While", "Else", "Try", "Finally", "ExceptHandler",
})

_COMPOUND_KINDS = {
    ast.If: "If",
    ast.For: "For",
    ast.AsyncFor: "For",
    ast.While: "While",
    ast.With: "With",
    ast.AsyncWith: "With",
    ast.Try: "Try",
    ast.FunctionDef: "FunctionDef",
    ast.AsyncFunctionDef: "FunctionDef",
    ast.ClassDef: "ClassDef",
    ast.Match: "Match",
}


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None, column: int | None):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class LineIndex:
    """Maps between (1-based line, byte column) and absolute byte offsets."""

    def __init__(self, data: bytes):
        self.data = data
        self.starts = [0]
        pos = data.find(b"\n")
        while pos != -1:
            self.starts.append(pos + 1)
            pos = data.find(b"\n", pos + 1)

    def offset(self, line: int, col: int) -> int:
        return self.starts[line - 1] + col

    def line_of(self, offset: int) -> int:
        return bisect.bisect_right(self.starts, offset)

    def line_start(self, line: int) -> int:
        return self.starts[line - 1]

    def line_end(self, line: int) -> int:
        """Offset of the newline ending ``line`` (or end of data)."""
        if line < len(self.starts):
            return self.starts[line] - 1
        return len(self.data)

    def char_to_byte_col(self, line: int, char_col: int) -> int:
        start = self.starts[line - 1]
        end = self.line_end(line)
        raw = self.data[start:end]
        if raw.isascii():
            return char_col
        return len(raw.decode("utf-8")[:char_col].encode("utf-8"))


class Lexeme(NamedTuple):
    kind: str
    text: str
    start: int
    end: int


_SIGNIFICANT = {tokenize.NAME, tokenize.OP, tokenize.NUMBER, tokenize.STRING}


@lru_cache(maxsize=64)
def _lex_cached(data: bytes) -> tuple[Lexeme, ...]:
    index = LineIndex(data)
    starts = index.starts
    col = (lambda line, c: c) if data.isascii() else index.char_to_byte_col
    out = []
    reader = io.BytesIO(data).readline
    try:
        for tok in tokenize.tokenize(reader):
            if tok.type not in _SIGNIFICANT and tok.type != tokenize.COMMENT:
                continue
            (sl, sc), (el, ec) = tok.start, tok.end
            start = starts[sl - 1] + col(sl, sc)
            end = starts[el - 1] + col(el, ec)
            out.append(Lexeme(tokenize.tok_name[tok.type], tok.string, start, end))
    except (tokenize.TokenError, IndentationError, SyntaxError) as exc:
        raise ParseError(f"tokenize failed: {exc}", None, None) from exc
    return tuple(out)


def lex(file: SourceFile) -> tuple[Lexeme, ...]:
    """Significant lexical tokens (names, operators, numbers, strings, comments)."""
    return _lex_cached(file.data)


@dataclass(eq=False)
class CstNode:
    kind: str
    span: tuple[int, int]
    children: list["CstNode"] = field(default_factory=list)
    lines: tuple[int, int] = (0, 0)
    # end of the header (up to and including the colon) for compound nodes
    header_end: int | None = None
    ast_node: ast.AST | None = field(default=None, repr=False)

    def walk(self):
        yield self
        for child in self.children:
            yield from child.walk()

    def describe(self) -> tuple:
        """Nested (kind, span, children) tuples, handy for comparisons."""
        return (self.kind, self.span, [c.describe() for c in self.children])


class _TreeBuilder:
    def __init__(self, file: SourceFile):
        self.file = file
        self.index = LineIndex(file.data)
        self.lexemes = lex(file)
        self.lex_starts = [t.start for t in self.lexemes]

    # positions -------------------------------------------------------------
    def start_of(self, node: ast.AST) -> int:
        decorators = getattr(node, "decorator_list", None)
        if decorators:
            line = decorators[0].lineno
            raw = self.file.data[self.index.line_start(line) : self.index.line_end(line)]
            indent = len(raw) - len(raw.lstrip())
            return self.index.line_start(line) + indent
        return self.index.offset(node.lineno, node.col_offset)

    def end_of(self, node: ast.AST) -> int:
        return self.index.offset(node.end_lineno, node.end_col_offset)

    def keyword_between(self, word: str, lo: int, hi: int) -> int:
        i = bisect.bisect_left(self.lex_starts, lo)
        found = None
        while i < len(self.lexemes) and self.lexemes[i].start < hi:
            tok = self.lexemes[i]
            if tok.kind == "NAME" and tok.text == word:
                found = tok.start
            i += 1
        if found is None:
            raise ParseError(f"could not locate '{word}' keyword", self.index.line_of(lo), None)
        return found

    def colon_before(self, hi: int, lo: int) -> int:
        i = bisect.bisect_left(self.lex_starts, hi) - 1
        while i >= 0 and self.lexemes[i].start >= lo:
            tok = self.lexemes[i]
            if tok.kind == "OP" and tok.text == ":":
                return tok.end
            i -= 1
        return hi

    def node(self, kind, start, end, children=(), header_end=None, ast_node=None) -> CstNode:
        end_line = self.index.line_of(max(end - 1, start))
        return CstNode(kind, (start, end), list(children),
                       (self.index.line_of(start), end_line), header_end, ast_node)

    # tree ------------------------------------------------------------------
    def module(self, mod: ast.Module) -> CstNode:
        root = CstNode("Module", (0, len(self.file.data)), self.statements(mod.body),
                       (1, max(self.file.line_count, 1)), None, mod)
        return root

    def statements(self, body: Sequence[ast.stmt]) -> list[CstNode]:
        out: list[CstNode] = []
        group: list[ast.stmt] = []

        def flush():
            if group:
                smalls = [self.small(s) for s in group]
                out.append(self.node("SimpleStatementLine", smalls[0].span[0], smalls[-1].span[1], smalls))
                group.clear()

        for stmt in body:
            if type(stmt) in _COMPOUND_KINDS:
                flush()
                out.append(self.compound(stmt))
            else:
                # simple statements joined by ';' share one line node
                if group and group[-1].end_lineno != stmt.lineno:
                    flush()
                group.append(stmt)
        flush()
        return out

    def small(self, stmt: ast.stmt) -> CstNode:
        return self.node(type(stmt).__name__, self.start_of(stmt), self.end_of(stmt), ast_node=stmt)

    def block(self, body: Sequence[ast.stmt], header_end: int) -> CstNode:
        first = body[0]
        if self.index.line_of(self.start_of(first)) == self.index.line_of(max(header_end - 1, 0)):
            smalls = [self.small(s) for s in body]
            return self.node("SimpleStatementSuite", smalls[0].span[0], smalls[-1].span[1], smalls)
        children = self.statements(body)
        return self.node("IndentedBlock", children[0].span[0], children[-1].span[1], children)

    def clause(self, kind, word, body, lo, end=None) -> CstNode:
        first_start = self.start_of(body[0])
        kw = self.keyword_between(word, lo, first_start)
        colon = self.colon_before(first_start, kw)
        blk = self.block(body, colon)
        return self.node(kind, kw, end if end is not None else blk.span[1], [blk], colon)

    def compound(self, stmt: ast.stmt) -> CstNode:
        kind = _COMPOUND_KINDS[type(stmt)]
        start, end = self.start_of(stmt), self.end_of(stmt)
        if kind == "Match":
            return self.match(stmt, start, end)
        body_start = self.start_of(stmt.body[0])
        colon = self.colon_before(body_start, start)
        children = [self.block(stmt.body, colon)]
        cursor = children[0].span[1]
        if isinstance(stmt, ast.Try):
            for handler in stmt.handlers:
                hstart = self.start_of(handler)
                hcolon = self.colon_before(self.start_of(handler.body[0]), hstart)
                hblock = self.block(handler.body, hcolon)
                children.append(self.node("ExceptHandler", hstart, hblock.span[1], [hblock], hcolon, handler))
                cursor = hblock.span[1]
        orelse = getattr(stmt, "orelse", None)
        if orelse:
            first = orelse[0]
            if kind == "If" and isinstance(first, ast.If) and len(orelse) == 1 and \
                    self.file.data.startswith(b"elif", self.start_of(first)):
                children.append(self.compound(first))
            else:
                children.append(self.clause("Else", "else", orelse, cursor))
            cursor = children[-1].span[1]
        if isinstance(stmt, ast.Try) and stmt.finalbody:
            children.append(self.clause("Finally", "finally", stmt.finalbody, cursor))
        return self.node(kind, start, end, children, colon, stmt)

    def match(self, stmt: ast.Match, start: int, end: int) -> CstNode:
        children = []
        cursor = self.end_of(stmt.subject)
        for case in stmt.cases:
            pstart = self.start_of(case.pattern)
            kw = self.keyword_between("case", cursor, pstart)
            colon = self.colon_before(self.start_of(case.body[0]), pstart)
            blk = self.block(case.body, colon)
            children.append(self.node("MatchCase", kw, blk.span[1], [blk], colon, case))
            cursor = blk.span[1]
        first_colon = self.colon_before(children[0].span[0], start) if children else None
        return self.node("Match", start, end, children, first_colon, stmt)


def parse_module(text: str) -> ast.Module:
    # warnings about the parsed file (invalid escapes and the like) are not ours to report
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ast.parse(text)


def parse(file: SourceFile) -> CstNode:
    """Parse ``file`` into a :class:`CstNode` tree rooted at ``Module``."""
    if "\r" in file.text.replace("\r\n", ""):
        raise ParseError("bare carriage-return line endings are not supported", None, None)
    try:
        mod = parse_module(file.text)
    except SyntaxError as exc:
        raise ParseError(exc.msg or "syntax error", exc.lineno, exc.offset) from exc
    except (ValueError, RecursionError, MemoryError) as exc:
        raise ParseError(str(exc), None, None) from exc
    return _TreeBuilder(file).module(mod)


# sampling ------------------------------------------------------------------

@dataclass(frozen=True)
class PasteInstance:
    file: SourceFile
    snippet_span: tuple[int, int]
    snippet_line_count: int
    block_kind: str = "Module"

    @property
    def snippet(self) -> str:
        s, e = self.snippet_span
        return self.file.data[s:e].decode("utf-8")

    @property
    def prefix(self) -> str:
        return self.file.data[: self.snippet_span[0]].decode("utf-8")

    @property
    def suffix(self) -> str:
        return self.file.data[self.snippet_span[1] :].decode("utf-8")

    @property
    def context(self) -> str:
        return self.prefix + self.suffix

    def record(self) -> dict:
        return {
            "repo_id": self.file.repo_id,
            "path": self.file.relative_path,
            "byte_start": self.snippet_span[0],
            "byte_end": self.snippet_span[1],
            "line_count": self.snippet_line_count,
        }


@dataclass(frozen=True)
class Candidate:
    block: CstNode
    start: int
    length: int
    span: tuple[int, int]
    line_count: int


def eligible_candidates(tree: CstNode, max_lines: int = 6) -> list[Candidate]:
    """Every run of contiguous sibling statements inside a whitelisted block."""
    out = []
    for block in tree.walk():
        if block.kind not in BLOCK_KINDS or block.kind not in WHITELIST:
            continue
        kids = block.children
        for i, first in enumerate(kids):
            for j in range(i, len(kids)):
                lines = kids[j].lines[1] - first.lines[0] + 1
                if lines > max_lines:
                    break
                out.append(Candidate(block, i, j - i + 1, (first.span[0], kids[j].span[1]), lines))
    return out


def samples_per_file(line_count: int, cap: int = 8) -> int:
    return min(cap, math.ceil(line_count / 40))


def sample_snippets(
    tree: CstNode,
    file: SourceFile,
    max_lines: int = 6,
    count: int | None = None,
    seed: int = 0,
) -> list[PasteInstance]:
    """Draw up to ``count`` non-overlapping pastable snippets from ``file``.

    Candidates are visited in a seeded uniform random order and accepted
    greedily when they do not overlap an earlier pick. Results come back in
    source order.
    """
    if count is None:
        count = samples_per_file(file.line_count)
    cands = eligible_candidates(tree, max_lines)
    if not cands or count <= 0:
        return []
    rng = random.Random(seed)
    order = list(range(len(cands)))
    rng.shuffle(order)
    taken: list[Candidate] = []
    seen = set()
    for k in order:
        cand = cands[k]
        if cand.span in seen:
            continue
        if any(cand.span[0] < t.span[1] and t.span[0] < cand.span[1] for t in taken):
            continue
        seen.add(cand.span)
        taken.append(cand)
        if len(taken) == count:
            break
    taken.sort(key=lambda c: c.span)
    return [PasteInstance(file, c.span, c.line_count, c.block.kind) for c in taken]


def instance_from_lines(tree: CstNode, file: SourceFile, first: int, last: int) -> PasteInstance:
    """Paste instance covering the statements on lines ``first..last`` (1-based).

    The range must line up with a run of whole sibling statements.
    """
    if first < 1 or last < first or last > max(file.line_count, 1):
        raise ValueError(f"invalid line range {first}-{last}")
    best = None
    for cand in eligible_candidates(tree, max_lines=last - first + 1):
        kids = cand.block.children
        lo = kids[cand.start].lines[0]
        hi = kids[cand.start + cand.length - 1].lines[1]
        if lo >= first and hi <= last:
            if best is None or (cand.span[1] - cand.span[0]) > (best.span[1] - best.span[0]):
                best = cand
    if best is None:
        raise ValueError(f"lines {first}-{last} do not contain whole statements")
    kids = best.block.children
    lo = kids[best.start].lines[0]
    hi = kids[best.start + best.length - 1].lines[1]
    if (lo, hi) != (first, last):
        raise ValueError(f"lines {first}-{last} do not align with statement boundaries")
    return PasteInstance(file, best.span, best.line_count, best.block.kind)
