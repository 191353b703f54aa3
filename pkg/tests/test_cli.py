import json
import re
from pathlib import Path

import pytest

from adaptpaste.cli import EXIT_DATA, EXIT_OK, EXIT_USAGE, adapt_snippet, main
from adaptpaste.config import RunConfig
from adaptpaste.corpus import SourceFile

BODY = """def scale(values, factor):
    out = []
    for v in values:
        out.append(v * factor)
    return out


def total(values):
    acc = 0
    for v in values:
        acc += v
    return acc
"""


def make_repo(root: Path, n_repos=4, per_repo=3):
    for r in range(n_repos):
        for k in range(per_repo):
            d = root / f"repo{r}"
            d.mkdir(parents=True, exist_ok=True)
            (d / f"mod{k}.py").write_text(BODY.replace("scale", f"scale{k}") * (1 + k))


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """Runs every stage once on a tiny corpus with a few training steps."""
    root = tmp_path_factory.mktemp("cli")
    make_repo(root / "src")
    cfg = root / "run.cfg"
    cfg.write_text("seed = 3\nvocab_size = 2300\npreset = tiny\nmax_src_len = 192\nmax_tgt_len = 32\n"
                   "max_steps = 6\neval_every = 3\nbatch_size = 4\nsplit_train = 0.5\nsplit_valid = 0.25\n"
                   "split_test = 0.25\n")
    out = root / "out"
    steps = [
        ("corpus", "--root", root / "src", "--out", out / "manifest.jsonl"),
        ("extract", "--manifest", out / "manifest.jsonl", "--out-dir", out / "data"),
        ("tokenize", "--data", out / "data" / "train.jsonl", out / "data" / "valid.jsonl", "--out", out / "vocab"),
        ("train", "--data", out / "data" / "train.jsonl", "--valid", out / "data" / "valid.jsonl",
         "--vocab", out / "vocab", "--out", out / "model.pt"),
        ("predict", "--data", out / "data" / "test.jsonl", "--checkpoint", out / "model.pt",
         "--vocab", out / "vocab", "--out", out / "pred.jsonl"),
        ("evaluate", "--data", out / "data" / "test.jsonl", "--predictions", out / "pred.jsonl",
         "--out", out / "metrics.csv"),
        ("sweep", "--data", out / "data" / "test.jsonl", "--predictions", out / "pred.jsonl",
         "--out", out / "sweep.csv"),
    ]
    codes = [run("--config", cfg, *step) for step in steps]
    return root, cfg, out, codes


def test_every_stage_succeeds(pipeline):
    _, _, out, codes = pipeline
    assert codes == [EXIT_OK] * 7
    for name in ("manifest.jsonl", "data/train.jsonl", "data/stats.json", "vocab/meta.json", "model.pt",
                 "model.metrics.csv", "model.metrics.png", "pred.jsonl", "metrics.csv", "metrics.png",
                 "sweep.csv", "sweep.png"):
        assert (out / name).is_file(), name
    assert (out / "metrics.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_artifacts_carry_hash_and_seed(pipeline):
    _, cfg, out, _ = pipeline
    h = RunConfig.load(cfg).hash()
    for name in ("manifest.jsonl", "data/train.jsonl", "pred.jsonl"):
        meta = json.loads((out / name).read_text().splitlines()[0])["_meta"]
        assert meta["config_hash"] == h and meta["seed"] == 3
    for name in ("metrics.csv", "sweep.csv"):
        head = (out / name).read_text().splitlines()[:2]
        assert head == [f"# config_hash={h}", "# seed=3"]
    stats = json.loads((out / "data" / "stats.json").read_text())
    assert stats["config_hash"] == h and 0 < stats["bound_fraction"] <= 1


def test_test_split_uses_query_form_for_mlm(pipeline):
    root, cfg, out, _ = pipeline
    assert run("--config", cfg, "extract", "--transform", "mlm", "--manifest", out / "manifest.jsonl",
               "--out-dir", root / "mlm") == EXIT_OK
    rows = [json.loads(x) for x in (root / "mlm" / "test.jsonl").read_text().splitlines()[1:]]
    assert rows and all(r["meta"]["transform"] == "mlm_query" for r in rows)


def test_reruns_are_byte_identical(pipeline):
    root, cfg, out, _ = pipeline
    again = root / "again"
    assert run("--config", cfg, "corpus", "--root", root / "src", "--out", again / "manifest.jsonl") == EXIT_OK
    assert run("--config", cfg, "extract", "--manifest", again / "manifest.jsonl", "--out-dir", again) == EXIT_OK
    assert run("--config", cfg, "evaluate", "--data", out / "data" / "test.jsonl", "--predictions",
               out / "pred.jsonl", "--out", again / "metrics.csv") == EXIT_OK
    assert (again / "manifest.jsonl").read_bytes() == (out / "manifest.jsonl").read_bytes()
    for split in ("train", "valid", "test"):
        assert (again / f"{split}.jsonl").read_bytes() == (out / "data" / f"{split}.jsonl").read_bytes()
    assert (again / "metrics.csv").read_bytes() == (out / "metrics.csv").read_bytes()


def test_flags_override_config_file(pipeline):
    root, cfg, out, _ = pipeline
    dest = root / "seeded.jsonl"
    assert run("--config", cfg, "corpus", "--seed", "9", "--root", root / "src", "--out", dest) == EXIT_OK
    assert json.loads(dest.read_text().splitlines()[0])["_meta"]["seed"] == 9
    # the config may also follow the subcommand
    assert run("corpus", "--config", cfg, "--root", root / "src", "--out", dest) == EXIT_OK
    assert json.loads(dest.read_text().splitlines()[0])["_meta"]["seed"] == 3


def test_empty_manifest_gives_three_empty_files(tmp_path):
    (tmp_path / "src").mkdir()
    assert run("corpus", "--root", tmp_path / "src", "--out", tmp_path / "m.jsonl") == EXIT_OK
    assert run("extract", "--manifest", tmp_path / "m.jsonl", "--out-dir", tmp_path / "d") == EXIT_OK
    for split in ("train", "valid", "test"):
        lines = (tmp_path / "d" / f"{split}.jsonl").read_text().splitlines()
        assert len(lines) == 1 and "_meta" in json.loads(lines[0])


def test_dobf_extract(tmp_path):
    make_repo(tmp_path / "src", 3, 2)
    assert run("corpus", "--root", tmp_path / "src", "--out", tmp_path / "m.jsonl") == EXIT_OK
    assert run("extract", "--transform", "dobf", "--manifest", tmp_path / "m.jsonl", "--out-dir", tmp_path) == 0
    rows = [json.loads(x) for s in ("train", "valid", "test")
            for x in (tmp_path / f"{s}.jsonl").read_text().splitlines()[1:]]
    assert len(rows) == 6
    assert all(re.search(r"\b(CLASS|FUNC|VAR)_\d+\b", r["input_text"]) for r in rows)


@pytest.mark.parametrize("argv, code", [
    ([], EXIT_USAGE),
    (["frobnicate"], EXIT_USAGE),
    (["corpus", "--root", "x"], EXIT_USAGE),
    (["--config", "/nonexistent.cfg", "corpus", "--root", ".", "--out", "/tmp/x.jsonl"], EXIT_USAGE),
    (["corpus", "--seed", "abc", "--root", ".", "--out", "/tmp/x.jsonl"], EXIT_USAGE),
    (["extract", "--manifest", "/nonexistent.jsonl", "--out-dir", "/tmp/ap-none"], EXIT_DATA),
    (["corpus", "--root", "/nonexistent-dir", "--out", "/tmp/x.jsonl"], EXIT_DATA),
])
def test_exit_codes(argv, code):
    assert main(argv) == code


def test_help_exits_zero(capsys):
    assert main(["--help"]) == EXIT_OK


def test_adapt_errors(pipeline, tmp_path):
    _, _, out, _ = pipeline
    f = tmp_path / "a.py"
    f.write_text(BODY)
    common = ["--checkpoint", out / "model.pt", "--vocab", out / "vocab"]
    assert run("adapt", "--file", f, "--lines", "3-1", *common) == EXIT_USAGE
    assert run("adapt", "--file", f, "--lines", "x", *common) == EXIT_USAGE
    assert run("adapt", "--file", f, "--lines", "1-2", *common) == EXIT_DATA  # header without body
    assert run("adapt", "--file", tmp_path / "missing.py", "--lines", "1-1", *common) == EXIT_DATA
    bad = tmp_path / "bad.py"
    bad.write_text("def (:\n")
    assert run("adapt", "--file", bad, "--lines", "1-1", *common) == EXIT_DATA


def test_adapt_without_variables_echoes_input(pipeline, tmp_path, capsys):
    _, _, out, _ = pipeline
    f = tmp_path / "a.py"
    f.write_text("import os\nprint('hi')\nprint(1 + 2)\n")
    capsys.readouterr()
    assert run("adapt", "--file", f, "--lines", "2-3", "--checkpoint", out / "model.pt",
               "--vocab", out / "vocab") == EXIT_OK
    assert capsys.readouterr().out == "print('hi')\nprint(1 + 2)\n"


def test_adapt_floor_leaves_masks(pipeline, tmp_path, capsys):
    _, _, out, _ = pipeline
    f = tmp_path / "a.py"
    f.write_text(BODY)
    capsys.readouterr()
    # an almost untrained model is never 99.9% sure
    assert run("adapt", "--confidence-floor", "0.999", "--file", f, "--lines", "9-11", "--checkpoint",
               out / "model.pt", "--vocab", out / "vocab") == EXIT_OK
    captured = capsys.readouterr()
    assert re.search(r"___v\d+", captured.out)
    assert "confidence" in captured.err


def test_adapt_with_overfit_model_restores_original():
    from adaptpaste.anonymizer import anonymize, classify_variables
    from adaptpaste.model import TrainConfig, encode_sample, preset, train
    from adaptpaste.scopes import analyze_scopes
    from adaptpaste.syntax import instance_from_lines, parse
    from adaptpaste.tokenizer import train_bpe

    file = SourceFile(".", "a.py", BODY)
    tree = parse(file)
    inst = instance_from_lines(tree, file, 9, 11)
    sample = anonymize(inst, classify_variables(inst, analyze_scopes(file, tree)), seed=0)
    vocab = train_bpe([BODY], 2100)
    cfg = preset("desk", vocab_size=vocab.size, variant="parallel", max_src_len=128, max_tgt_len=16)
    # same seed as adapt_snippet so the masks match
    ckpt = train([encode_sample(sample, vocab, 128, 16)], cfg, vocab,
                 TrainConfig(max_steps=150, warmup=10, eval_every=1000, batch_size=1))
    model = ckpt.model(vocab)
    text, report = adapt_snippet(file, 9, 11, model, vocab, floor=0.5, seed=0)
    assert text == inst.snippet
    assert all(orig == chosen for _, orig, chosen, _ in report)
    assert all(c >= 0.5 for *_, c in report)
