import pytest
from hypothesis import given, settings, strategies as st

from adaptpaste.anonymizer import anonymize, classify_variables
from adaptpaste.context import BudgetTooSmall, lexical_count, prioritize
from adaptpaste.corpus import SourceFile
from adaptpaste.scopes import analyze_scopes
from adaptpaste.syntax import instance_from_lines, parse


def _far_attribute_file():
    lines = ["import os", "", "class Trainer:", '    """Runs the optimisation loop."""', "    learning_rate = 0.1", ""]
    for k in range(60):
        lines += [f"    def method_{k}(self, a{k}):", f"        x = a{k} + 1", "        y = x * 2",
                  "        return y", ""]
    lines += ["    def step(self, grad):", "        scale = 2", "        update = grad * self.learning_rate * scale",
              "        return update", ""]
    return "\n".join(lines)


def _sample(text, line, seed=0):
    f = SourceFile("r", "t.py", text)
    tree = parse(f)
    inst = instance_from_lines(tree, f, line, line)
    return anonymize(inst, classify_variables(inst, analyze_scopes(f, tree)), seed), tree


def _target_line(text, needle):
    return text.split("\n").index(needle) + 1


@pytest.fixture(scope="module")
def far():
    text = _far_attribute_file()
    line = _target_line(text, "        update = grad * self.learning_rate * scale")
    assert line > 300
    return _sample(text, line)


def test_small_file_is_verbatim():
    text = "a = 1\nb = a + 1\nprint(b)\n"
    sample, tree = _sample(text, 2)
    ctx = prioritize(sample, tree, budget=512)
    assert ctx.rendered_text == sample.input_text
    assert "..." not in ctx.rendered_text and not ctx.truncated


def test_far_class_attribute_retained(far):
    sample, tree = far
    ctx = prioritize(sample, tree, budget=512)
    assert "    learning_rate = 0.1" in ctx.rendered_text.split("\n")
    assert ctx.rendered_text.count("...") >= 1
    assert ctx.token_count <= 512
    assert sample.snippet_text in ctx.rendered_text


def test_enclosing_signature_survives(far):
    sample, tree = far
    for budget in (40, 64, 128, 512):
        ctx = prioritize(sample, tree, budget=budget)
        lines = ctx.rendered_text.split("\n")
        assert "    def step(self, grad):" in lines
        assert "class Trainer:" in lines


def test_token_count_is_exact_and_bounded(far):
    sample, tree = far
    for budget in (30, 50, 100, 200, 400, 800):
        ctx = prioritize(sample, tree, budget=budget)
        assert ctx.token_count == lexical_count(ctx.rendered_text)
        assert ctx.token_count <= budget


def _kept_lines(rendered):
    return [ln for ln in rendered.split("\n") if ln.strip() != "..."]


def test_monotone_in_budget(far):
    sample, tree = far
    previous = None
    for budget in range(30, 900, 35):
        kept = set(_kept_lines(prioritize(sample, tree, budget=budget).rendered_text))
        if previous is not None:
            assert previous <= kept
        previous = kept


def test_order_preserved_and_markers_single(far):
    sample, tree = far
    original = sample.input_text.split("\n")
    ctx = prioritize(sample, tree, budget=300)
    lines = ctx.rendered_text.split("\n")
    pos = -1
    for ln in lines:
        if ln.strip() == "...":
            continue
        pos = original.index(ln, pos + 1)
    for a, b in zip(lines, lines[1:]):
        assert not (a.strip() == "..." and b.strip() == "...")


def test_rank_one_enclosing_body_before_siblings(far):
    sample, tree = far
    ctx = prioritize(sample, tree, budget=80)
    assert "        scale = 2" in ctx.rendered_text.split("\n")
    assert "method_59" not in ctx.rendered_text


def test_budget_too_small(far):
    sample, tree = far
    with pytest.raises(BudgetTooSmall):
        prioritize(sample, tree, budget=3)


def test_custom_counter(far):
    sample, tree = far
    ctx = prioritize(sample, tree, budget=300, count=len)
    assert len(ctx.rendered_text) <= 300


@settings(max_examples=30, deadline=None)
@given(st.integers(25, 700))
def test_snippet_integrity_any_budget(budget):
    text = _far_attribute_file()
    line = _target_line(text, "        update = grad * self.learning_rate * scale")
    sample, tree = _sample(text, line)
    ctx = prioritize(sample, tree, budget=budget)
    assert sample.snippet_text in ctx.rendered_text
    assert ctx.token_count <= budget
