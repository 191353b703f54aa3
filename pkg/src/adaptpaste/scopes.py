"""Lexical scope analysis over Python sources.

Resolution follows Python's rules: function-level locality is decided by
any binding in the function body, class bodies are invisible to nested
scopes, ``global``/``nonlocal`` re-point bindings, and the first iterable of
a comprehension is evaluated in the enclosing scope.
"""

from __future__ import annotations

import ast
import bisect
from dataclasses import dataclass, field
from typing import Iterator

from .corpus import SourceFile
from .syntax import CstNode, LineIndex, lex, parse_module

# binding kinds that make a symbol an adaptable variable
VARIABLE_KINDS = frozenset({
    "param", "assign", "for", "with", "except", "comprehension", "import", "match", "walrus",
})


@dataclass
class Symbol:
    name: str
    scope_id: int
    defs: list[int] = field(default_factory=list)
    uses: list[int] = field(default_factory=list)
    kinds: set[str] = field(default_factory=set)

    @property
    def is_variable(self) -> bool:
        return bool(self.kinds & VARIABLE_KINDS)

    @property
    def first_binding(self) -> int | None:
        return min(self.defs) if self.defs else None

    @property
    def sites(self) -> list[int]:
        return sorted(self.defs + self.uses)


@dataclass
class Scope:
    id: int
    kind: str  # module | class | function | comprehension
    name: str
    parent: int | None
    span: tuple[int, int]
    children: list[int] = field(default_factory=list)
    symbols: dict[str, Symbol] = field(default_factory=dict)
    # filled during collection
    bound: dict[str, set[str]] = field(default_factory=dict)
    globals_: set[str] = field(default_factory=set)
    nonlocals: set[str] = field(default_factory=set)


@dataclass(frozen=True)
class Occurrence:
    name: str
    start: int
    end: int
    site_scope: int
    role: str  # def | use | decl
    binding_kind: str | None
    located: bool
    symbol: tuple[int, str] = (0, "")


class SymbolTable:
    def __init__(self, scopes: list[Scope], occurrences: list[Occurrence]):
        self.scopes = scopes
        self.occurrences = sorted(occurrences, key=lambda o: (o.start, o.end))
        self._starts = [o.start for o in self.occurrences]

    @property
    def module(self) -> Scope:
        return self.scopes[0]

    def symbol(self, ref: tuple[int, str]) -> Symbol:
        return self.scopes[ref[0]].symbols[ref[1]]

    def symbols(self) -> Iterator[Symbol]:
        for scope in self.scopes:
            yield from scope.symbols.values()

    def occurrences_in(self, lo: int, hi: int) -> list[Occurrence]:
        i = bisect.bisect_left(self._starts, lo)
        j = bisect.bisect_left(self._starts, hi)
        return [o for o in self.occurrences[i:j] if o.end <= hi]

    def scope_at(self, offset: int) -> Scope:
        """Innermost scope whose span contains ``offset``."""
        scope = self.scopes[0]
        while True:
            for cid in scope.children:
                child = self.scopes[cid]
                if child.span[0] <= offset < child.span[1]:
                    scope = child
                    break
            else:
                return scope

    def names_defined(self) -> set[str]:
        return {s.name for s in self.symbols() if s.defs}

    def resolvable(self, name: str, offset: int) -> bool:
        """Whether ``name`` has a binding visible from ``offset``."""
        scope = self.scope_at(offset)
        ref = resolve(self.scopes, scope.id, name)
        sym = self.scopes[ref[0]].symbols.get(ref[1])
        return sym is not None and bool(sym.defs)


def resolve(scopes: list[Scope], scope_id: int, name: str) -> tuple[int, str]:
    scope = scopes[scope_id]
    if name in scope.globals_:
        return (0, name)
    if name in scope.nonlocals:
        return _enclosing_function_binding(scopes, scope.parent, name)
    if name in scope.bound:
        return (scope.id, name)
    parent = scope.parent
    while parent is not None:
        outer = scopes[parent]
        if outer.kind == "module":
            return (0, name)
        if outer.kind != "class":
            if name in outer.globals_:
                return (0, name)
            if name in outer.nonlocals:
                return _enclosing_function_binding(scopes, outer.parent, name)
            if name in outer.bound:
                return (outer.id, name)
        parent = outer.parent
    return (0, name)


def _enclosing_function_binding(scopes, start, name):
    cur = start
    while cur is not None:
        scope = scopes[cur]
        if scope.kind == "module":
            break
        if scope.kind != "class" and name in scope.bound and name not in scope.nonlocals:
            return (scope.id, name)
        if scope.kind != "class" and name in scope.nonlocals:
            cur = scope.parent
            continue
        cur = scope.parent
    return (0, name)


class _Collector(ast.NodeVisitor):
    def __init__(self, file: SourceFile):
        self.file = file
        self.index = LineIndex(file.data)
        self.names = [t for t in lex(file) if t.kind == "NAME"]
        self.name_starts = [t.start for t in self.names]
        self.scopes: list[Scope] = []
        self.raw: list[tuple] = []  # (name, start, end, site, role, kind, located, owner)
        self.current = self.new_scope("module", "<module>", None, (0, len(file.data)))

    # helpers ---------------------------------------------------------------
    def new_scope(self, kind, name, parent, span) -> int:
        sid = len(self.scopes)
        self.scopes.append(Scope(sid, kind, name, parent, span))
        if parent is not None:
            self.scopes[parent].children.append(sid)
        return sid

    def pos(self, line, col) -> int:
        return self.index.offset(line, col)

    def span_of(self, node) -> tuple[int, int]:
        return (self.pos(node.lineno, node.col_offset), self.pos(node.end_lineno, node.end_col_offset))

    def find_name(self, name: str, lo: int, hi: int, last: bool = False) -> int | None:
        i = bisect.bisect_left(self.name_starts, lo)
        hit = None
        while i < len(self.names) and self.names[i].start < hi:
            if self.names[i].text == name:
                if not last:
                    return self.names[i].start
                hit = self.names[i].start
            i += 1
        return hit

    def record(self, name, start, role, kind=None, owner=None, located=None):
        end = start + len(name.encode("utf-8"))
        if located is None:
            located = self.file.data[start:end] == name.encode("utf-8")
        owner = self.current if owner is None else owner
        if role == "def":
            self.scopes[owner].bound.setdefault(name, set()).add(kind)
        self.raw.append((name, start, end, self.current, role, kind, located, owner))

    def bind_at(self, name, lo, hi, kind, last=False, owner=None):
        start = self.find_name(name, lo, hi, last=last)
        if start is None:
            self.record(name, lo, "def", kind, owner, located=False)
        else:
            self.record(name, start, "def", kind, owner)

    def in_scope(self, sid):
        prev = self.current
        self.current = sid
        return prev

    # targets ---------------------------------------------------------------
    def bind_target(self, node, kind):
        if isinstance(node, ast.Name):
            self.record(node.id, self.pos(node.lineno, node.col_offset), "def", kind)
        elif isinstance(node, (ast.Tuple, ast.List)):
            for elt in node.elts:
                self.bind_target(elt, kind)
        elif isinstance(node, ast.Starred):
            self.bind_target(node.value, kind)
        else:
            # attribute / subscript targets read their base
            self.visit(node)

    # statements ------------------------------------------------------------
    def visit_Name(self, node):
        start = self.pos(node.lineno, node.col_offset)
        if isinstance(node.ctx, ast.Store):
            self.record(node.id, start, "def", "assign")
        elif isinstance(node.ctx, ast.Del):
            self.scopes[self.current].bound.setdefault(node.id, set()).add("del")
            self.record(node.id, start, "use")
        else:
            self.record(node.id, start, "use")

    def visit_Assign(self, node):
        self.visit(node.value)
        for t in node.targets:
            self.bind_target(t, "assign")

    def visit_AugAssign(self, node):
        self.visit(node.value)
        if isinstance(node.target, ast.Name):
            start = self.pos(node.target.lineno, node.target.col_offset)
            self.record(node.target.id, start, "def", "assign")
        else:
            self.visit(node.target)

    def visit_AnnAssign(self, node):
        if node.value is not None:
            self.visit(node.value)
        self.visit(node.annotation)
        self.bind_target(node.target, "assign")

    def visit_NamedExpr(self, node):
        self.visit(node.value)
        owner = self.current
        while self.scopes[owner].kind == "comprehension":
            owner = self.scopes[owner].parent
        t = node.target
        self.record(t.id, self.pos(t.lineno, t.col_offset), "def", "walrus", owner=owner)

    def visit_For(self, node):
        self.visit(node.iter)
        self.bind_target(node.target, "for")
        for stmt in node.body + node.orelse:
            self.visit(stmt)

    visit_AsyncFor = visit_For

    def visit_With(self, node):
        for item in node.items:
            self.visit(item.context_expr)
            if item.optional_vars is not None:
                self.bind_target(item.optional_vars, "with")
        for stmt in node.body:
            self.visit(stmt)

    visit_AsyncWith = visit_With

    def visit_ExceptHandler(self, node):
        if node.type is not None:
            self.visit(node.type)
        if node.name:
            lo = self.pos(node.lineno, node.col_offset)
            hi = self.pos(node.body[0].lineno, node.body[0].col_offset)
            self.bind_at(node.name, lo, hi, "except", last=True)
        for stmt in node.body:
            self.visit(stmt)

    def visit_Import(self, node):
        for alias in node.names:
            lo, hi = self.span_of(alias)
            if alias.asname:
                self.bind_at(alias.asname, lo, hi, "import", last=True)
            else:
                self.bind_at(alias.name.split(".")[0], lo, hi, "import")

    def visit_ImportFrom(self, node):
        for alias in node.names:
            if alias.name == "*":
                continue
            lo, hi = self.span_of(alias)
            if alias.asname:
                self.bind_at(alias.asname, lo, hi, "import", last=True)
            else:
                self.bind_at(alias.name, lo, hi, "import")

    def _declare(self, node, target: str):
        lo, hi = self.span_of(node)
        scope = self.scopes[self.current]
        cursor = lo
        for name in node.names:
            getattr(scope, target).add(name)
            start = self.find_name(name, cursor + 1, hi)
            if start is None:
                self.record(name, lo, "decl", located=False)
            else:
                self.record(name, start, "decl")
                cursor = start

    def visit_Global(self, node):
        self._declare(node, "globals_")

    def visit_Nonlocal(self, node):
        self._declare(node, "nonlocals")

    def _arguments(self, args: ast.arguments):
        # defaults and annotations are evaluated in the enclosing scope
        for d in args.defaults + [d for d in args.kw_defaults if d is not None]:
            self.visit(d)
        every = args.posonlyargs + args.args + args.kwonlyargs
        every += [a for a in (args.vararg, args.kwarg) if a is not None]
        for a in every:
            if a.annotation is not None:
                self.visit(a.annotation)
        return every

    def _bind_params(self, params):
        for a in params:
            self.record(a.arg, self.pos(a.lineno, a.col_offset), "def", "param")

    def visit_FunctionDef(self, node):
        for d in node.decorator_list:
            self.visit(d)
        params = self._arguments(node.args)
        if node.returns is not None:
            self.visit(node.returns)
        start, end = self.span_of(node)
        body_start = self.pos(node.body[0].lineno, node.body[0].col_offset)
        self.bind_at(node.name, start, body_start, "def")
        sid = self.new_scope("function", node.name, self.current, (start, end))
        prev = self.in_scope(sid)
        self._bind_params(params)
        for stmt in node.body:
            self.visit(stmt)
        self.current = prev

    visit_AsyncFunctionDef = visit_FunctionDef

    def visit_Lambda(self, node):
        params = self._arguments(node.args)
        sid = self.new_scope("function", "<lambda>", self.current, self.span_of(node))
        prev = self.in_scope(sid)
        self._bind_params(params)
        self.visit(node.body)
        self.current = prev

    def visit_ClassDef(self, node):
        for d in node.decorator_list:
            self.visit(d)
        for b in node.bases:
            self.visit(b)
        for k in node.keywords:
            self.visit(k.value)
        start, end = self.span_of(node)
        body_start = self.pos(node.body[0].lineno, node.body[0].col_offset)
        self.bind_at(node.name, start, body_start, "class")
        sid = self.new_scope("class", node.name, self.current, (start, end))
        prev = self.in_scope(sid)
        for stmt in node.body:
            self.visit(stmt)
        self.current = prev

    def _comprehension(self, node, elts):
        gens = node.generators
        self.visit(gens[0].iter)
        sid = self.new_scope("comprehension", type(node).__name__, self.current, self.span_of(node))
        prev = self.in_scope(sid)
        for i, gen in enumerate(gens):
            if i:
                self.visit(gen.iter)
            self.bind_target(gen.target, "comprehension")
            for cond in gen.ifs:
                self.visit(cond)
        for e in elts:
            self.visit(e)
        self.current = prev

    def visit_ListComp(self, node):
        self._comprehension(node, [node.elt])

    visit_SetComp = visit_ListComp
    visit_GeneratorExp = visit_ListComp

    def visit_DictComp(self, node):
        self._comprehension(node, [node.key, node.value])

    # structural pattern matching
    def _match_name(self, node, name):
        if name:
            lo, hi = self.span_of(node)
            self.bind_at(name, lo, hi, "match", last=True)

    def visit_MatchAs(self, node):
        if node.pattern is not None:
            self.visit(node.pattern)
        self._match_name(node, node.name)

    def visit_MatchStar(self, node):
        self._match_name(node, node.name)

    def visit_MatchMapping(self, node):
        for k in node.keys:
            self.visit(k)
        for p in node.patterns:
            self.visit(p)
        self._match_name(node, node.rest)


def analyze_scopes(file: SourceFile, tree: CstNode | None = None) -> SymbolTable:
    """Build the symbol table of ``file``.

    ``tree`` is accepted for interface symmetry; the resolver walks the
    underlying :mod:`ast` module held by the tree root when present.
    """
    mod = tree.ast_node if tree is not None and isinstance(tree.ast_node, ast.Module) else parse_module(file.text)
    col = _Collector(file)
    for stmt in mod.body:
        col.visit(stmt)
    scopes = col.scopes
    occurrences = []
    for name, start, end, site, role, kind, located, owner in col.raw:
        if role == "def" and owner != site:
            ref = (owner, name)  # walrus in comprehension
        else:
            ref = resolve(scopes, site, name)
        scope = scopes[ref[0]]
        sym = scope.symbols.get(name)
        if sym is None:
            sym = scope.symbols[name] = Symbol(name, ref[0])
        if role == "def":
            sym.defs.append(start)
            sym.kinds.add(kind)
        else:
            sym.uses.append(start)
        occurrences.append(Occurrence(name, start, end, site, role, kind, located, ref))
    for scope in scopes:
        for name, kinds in scope.bound.items():
            if "del" in kinds and name in scope.symbols:
                scope.symbols[name].kinds.add("del")
    return SymbolTable(scopes, occurrences)
