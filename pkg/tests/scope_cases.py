"""Hand-annotated bound/free cases: (id, source, snippet lines, expected categories)."""

B, F = "bound", "free"

CASES = [
    ("params", """\
def f(a, b):
    c = a + b
    return c
""", (2, 2), {"a": B, "b": B, "c": B}),
    ("free_locals", """\
def f(a):
    t = a * 2
    u = t + 1
    return a
""", (2, 3), {"a": B, "t": F, "u": F}),
    ("global_decl", """\
counter = 0

def bump():
    global counter
    counter += 1
""", (5, 5), {"counter": B}),
    ("nonlocal_decl", """\
def outer():
    n = 0
    def inner():
        nonlocal n
        n = n + 1
    return inner
""", (5, 5), {"n": B}),
    ("shadowing_inner_local", """\
def outer():
    n = 0
    def inner():
        n = 5
        return n
    return n
""", (4, 5), {"n": F}),
    ("comprehension", """\
def f(items):
    squares = [x * x for x in items]
    return squares
""", (2, 2), {"x": F, "items": B, "squares": B}),
    ("comprehension_shadows_param", """\
def f(x):
    ys = [x for x in range(3)]
    return ys
""", (2, 2), {"x": F, "ys": B}),
    ("comprehension_iterable_outer", """\
def f(x):
    ys = [x for x in x]
    return ys
""", (2, 2), {"x": B, "ys": B}),
    ("with_binding", """\
def read(path):
    with open(path) as fh:
        data = fh.read()
    return data
""", (2, 3), {"path": B, "fh": F, "data": B}),
    ("except_binding", """\
def safe(fn):
    try:
        return fn()
    except ValueError as err:
        print(err)
""", (2, 5), {"fn": B, "err": F}),
    ("module_import", """\
import json

def dump(obj):
    text = json.dumps(obj)
    return text
""", (4, 4), {"json": B, "obj": B, "text": B}),
    ("local_import", """\
def f():
    import math
    r = math.sqrt(2)
    return r
""", (2, 3), {"math": F, "r": B}),
    ("for_target", """\
def total(xs):
    s = 0
    for v in xs:
        s += v
    return s
""", (3, 4), {"xs": B, "v": F, "s": B}),
    ("class_scope_hidden_from_method", """\
class C:
    size = 3
    def m(self):
        size = 4
        return size
""", (4, 5), {"size": F}),
    ("class_body", """\
class C:
    size = 3
    double = size * 2
""", (3, 3), {"size": B, "double": F}),
    ("module_level_bound", """\
x = 1
y = x + 1
print(y)
""", (2, 2), {"x": B, "y": B}),
    ("module_level_free", """\
a = 1
b = 2
print(a)
""", (2, 2), {"b": F}),
    ("walrus_escapes_comprehension", """\
def f(data):
    if any((hit := d) > 2 for d in data):
        pass
    return hit
""", (2, 3), {"hit": B, "d": F, "data": B}),
    ("lambda_param", """\
def f(items):
    key = lambda item: item[0]
    return sorted(items, key=key)
""", (2, 2), {"item": F, "key": B}),
    ("default_argument", """\
LIMIT = 10

def f(n=LIMIT):
    return n
""", (3, 4), {"LIMIT": B, "n": F}),
    ("closure_read", """\
def outer(k):
    def inner():
        return k + 1
    return inner
""", (3, 3), {"k": B}),
    ("global_defined_only_in_snippet", """\
def setup():
    global CONFIG
    CONFIG = {}
""", (2, 3), {"CONFIG": F}),
    ("tuple_unpacking", """\
def split_pair(pair):
    head, tail = pair
    return head
""", (2, 2), {"pair": B, "head": B, "tail": F}),
    ("match_capture", """\
def kind(cmd):
    match cmd:
        case [op, arg]:
            return op
    return None
""", (2, 4), {"cmd": B, "op": F, "arg": F}),
    ("star_args", """\
def call(*args, **kwargs):
    result = target(*args, **kwargs)
    return result
""", (2, 2), {"args": B, "kwargs": B, "result": B}),
    ("attributes_are_not_variables", """\
def f(obj):
    obj.value = 3
    n = obj.value
    return n
""", (2, 3), {"obj": B, "n": B}),
    ("loop_rebinds_outer_local", """\
def f():
    i = 0
    for i in range(3):
        pass
    return i
""", (3, 4), {"i": B}),
    ("nested_comprehensions", """\
def f(rows, scale):
    out = [[c * scale for c in r] for r in rows]
    return out
""", (2, 2), {"c": F, "r": F, "rows": B, "scale": B, "out": B}),
    ("later_module_global", """\
def f():
    return sum(v for v in VALUES)

VALUES = [1, 2]
""", (2, 2), {"v": F, "VALUES": B}),
    ("captured_by_later_closure", """\
def f():
    base = 10
    def g():
        return base
    return g
""", (2, 2), {"base": B}),
    ("with_multiple_targets", """\
def f(a, b):
    with a as x, b as y:
        z = x + y
""", (2, 3), {"a": B, "b": B, "x": F, "y": F, "z": F}),
    ("def_and_class_names_excluded", """\
def helper():
    return 1

def f():
    value = helper()
    return value
""", (5, 5), {"value": B}),
]
