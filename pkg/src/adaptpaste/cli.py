"""``adaptpaste`` command line: corpus -> extract -> tokenize -> train -> predict -> evaluate -> sweep, plus adapt."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Iterator

from .config import ConfigError, RunConfig
from .corpus import SPLITS, CorpusError, FilterConfig, SourceFile, ingest, split

log = logging.getLogger("adaptpaste")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class DataError(RuntimeError):
    pass


class UsageError(RuntimeError):
    pass


# artifact I/O ---------------------------------------------------------------------

def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(path: Path, records, cfg: RunConfig, **meta) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dump({"_meta": {**cfg.header(), **meta}}) + "\n")
        for rec in records:
            fh.write(_dump(rec) + "\n")
            n += 1
    return n


def read_jsonl(path: Path) -> tuple[dict, list[dict]]:
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    meta, rows = {}, []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{n}: {exc}") from None
            if n == 1 and "_meta" in rec:
                meta = rec["_meta"]
            else:
                rows.append(rec)
    return meta, rows


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _csv_header(cfg: RunConfig) -> list[str]:
    return [f"config_hash={cfg.hash()}", f"seed={cfg.seed}"]


# commands ---------------------------------------------------------------------------

def cmd_corpus(args, cfg: RunConfig) -> int:
    root = Path(args.root)
    files = ingest(root, FilterConfig(min_lines=cfg.min_lines, repo_depth=cfg.repo_depth))
    assignment = split(files, cfg.ratios, cfg.seed) if files else {}
    records = (
        {"repo_id": f.repo_id, "relative_path": f.relative_path, "split": assignment[f.repo_id].split,
         "line_count": f.line_count}
        for f in files
    )
    n = write_jsonl(Path(args.out), records, cfg, root=str(root.resolve()))
    print(f"{n} files written to {args.out}")
    return EXIT_OK


def _manifest_files(path: Path) -> Iterator[tuple[str, SourceFile]]:
    meta, rows = read_jsonl(path)
    root = Path(meta.get("root", path.parent))
    for rec in rows:
        try:
            text = (root / rec["relative_path"]).read_text(encoding="utf-8")
        except (OSError, UnicodeDecodeError, KeyError) as exc:
            log.warning("skipping manifest entry %s: %s", rec.get("relative_path"), exc)
            continue
        yield rec["split"], SourceFile(rec["repo_id"], rec["relative_path"], text)


def cmd_extract(args, cfg: RunConfig) -> int:
    from .pipeline import ExtractStats, extract_file
    from .syntax import ParseError

    manifest = Path(args.manifest)
    out_dir = Path(args.out_dir)
    count = None
    if args.vocab:
        from .tokenizer import Vocabulary

        count = Vocabulary.load(args.vocab).count
    stats = ExtractStats()
    buckets: dict[str, list[dict]] = {s: [] for s in SPLITS}
    for which, file in _manifest_files(manifest):
        try:
            kwargs = dict(transform=cfg.transform, seed=cfg.seed, max_lines=cfg.max_snippet_lines,
                          cap=cfg.samples_cap, query=which == "test", mlm_fraction=cfg.mlm_fraction,
                          budget=cfg.budget if cfg.prioritize else None, stats=stats)
            if count is not None:
                kwargs["count"] = count
            samples = extract_file(file, **kwargs)
        except (ParseError, RecursionError) as exc:
            stats.skipped += 1
            log.warning("skipping %s: %s", file.relative_path, exc)
            continue
        buckets[which].extend(s.record() for s in samples)
    for which in SPLITS:
        write_jsonl(out_dir / f"{which}.jsonl", buckets[which], cfg, split=which, transform=cfg.transform)
    bf = stats.bound_fraction
    summary = {
        **cfg.header(),
        "files": stats.files, "skipped": stats.skipped, "samples": stats.samples,
        "variables": stats.variables, "bound_variables": stats.bound,
        "bound_fraction": bf,
        "per_split": {s: len(buckets[s]) for s in SPLITS},
    }
    write_text(out_dir / "stats.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    shown = "n/a" if bf is None else f"{100 * bf:.1f}%"
    print(f"{stats.samples} samples from {stats.files} files ({stats.skipped} skipped); bound share {shown}")
    return EXIT_OK


def _load_samples(path: Path):
    from .anonymizer import AnonymizedSample

    meta, rows = read_jsonl(path)
    try:
        return meta, [AnonymizedSample.from_record(r) for r in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed sample record ({exc})") from None


def cmd_tokenize(args, cfg: RunConfig) -> int:
    from .tokenizer import train_bpe

    texts = []
    for data in args.data:
        _, samples = _load_samples(Path(data))
        for s in samples:
            texts.append(s.input_text)
            texts.append(s.target_text)
    if not any(texts):
        raise DataError("no text to train the tokenizer on")
    vocab = train_bpe(texts, cfg.vocab_size)
    out = Path(args.out)
    vocab.save(out)
    write_text(out / "meta.json", json.dumps({**cfg.header(), "size": vocab.size,
                                              "fingerprint": vocab.fingerprint()}, indent=2) + "\n")
    print(f"vocabulary of {vocab.size} tokens written to {out}")
    return EXIT_OK


def _model_config(cfg: RunConfig, vocab):
    from .model.network import PRESETS, preset

    if cfg.preset not in PRESETS:
        raise ConfigError(f"unknown preset {cfg.preset!r}; choose from {', '.join(PRESETS)}")
    return preset(cfg.preset, vocab_size=vocab.size, variant=cfg.variant, max_src_len=cfg.max_src_len,
                  max_tgt_len=cfg.max_tgt_len, seed=cfg.seed, pad_id=vocab.pad_id)


def cmd_train(args, cfg: RunConfig) -> int:
    from .model.data import encode_sample
    from .model.train import TrainConfig, train
    from .tokenizer import Vocabulary

    vocab = Vocabulary.load(args.vocab)
    mcfg = _model_config(cfg, vocab)
    _, train_samples = _load_samples(Path(args.data))
    valid_samples = _load_samples(Path(args.valid))[1] if args.valid else []
    if cfg.transform == "mlm" and cfg.variant != "uni":
        raise ConfigError("the mlm transform trains the uni decoder only")
    enc = [encode_sample(s, vocab, mcfg.max_src_len, mcfg.max_tgt_len) for s in train_samples]
    venc = [encode_sample(s, vocab, mcfg.max_src_len, mcfg.max_tgt_len) for s in valid_samples
            if s.transform != "mlm_query"]
    out = Path(args.out)
    log_path = Path(args.log) if args.log else out.with_suffix(".metrics.csv")
    log_path.parent.mkdir(parents=True, exist_ok=True)
    tcfg = TrainConfig(lr=cfg.lr, batch_size=cfg.batch_size, max_steps=cfg.max_steps, eval_every=cfg.eval_every,
                       patience=cfg.patience, warmup=cfg.warmup, log_path=str(log_path))
    ckpt = train(enc, mcfg, vocab, tcfg, valid_items=venc)
    out.parent.mkdir(parents=True, exist_ok=True)
    ckpt.save(out)
    if ckpt.history:
        from .plotting import plot_training

        plot_training(ckpt.history, log_path.with_suffix(".png"))
    print(f"checkpoint at step {ckpt.step} written to {out}; metrics in {log_path}")
    return EXIT_OK


def _load_model(args):
    from .model.train import Checkpoint
    from .tokenizer import Vocabulary

    vocab = Vocabulary.load(args.vocab)
    path = Path(args.checkpoint)
    if not path.is_file():
        raise DataError(f"{path}: no such checkpoint")
    return Checkpoint.load(path).model(vocab), vocab


def cmd_predict(args, cfg: RunConfig) -> int:
    from .pipeline import predict_samples

    model, vocab = _load_model(args)
    _, samples = _load_samples(Path(args.data))
    preds = predict_samples(model, vocab, samples, cfg.beam_width)
    n = write_jsonl(Path(args.out), (p.record() for p in preds), cfg, data=str(args.data))
    print(f"{n} predictions written to {args.out}")
    return EXIT_OK


def _scored(args):
    from .model.predict import PredictionSet
    from .pipeline import score_samples

    _, samples = _load_samples(Path(args.data))
    _, rows = read_jsonl(Path(args.predictions))
    if len(rows) != len(samples):
        raise DataError(f"{len(rows)} predictions for {len(samples)} samples")
    preds = [PredictionSet.from_record(r) for r in rows]
    return preds, score_samples(samples, preds)


def cmd_evaluate(args, cfg: RunConfig) -> int:
    from .evaluation import aggregate, format_table, metrics_csv
    from .plotting import plot_metrics

    _, scores = _scored(args)
    if not scores:
        raise DataError("no samples to evaluate")
    metrics = aggregate(scores)
    out = Path(args.out)
    write_text(out, metrics_csv(metrics, _csv_header(cfg)))
    plot_metrics(metrics, out.with_suffix(".png"))
    print(format_table(metrics))
    return EXIT_OK


def cmd_sweep(args, cfg: RunConfig) -> int:
    from .evaluation import sweep_csv, threshold_sweep
    from .plotting import plot_sweep

    preds, scores = _scored(args)
    report = threshold_sweep(preds, scores)
    out = Path(args.out)
    write_text(out, sweep_csv(report, _csv_header(cfg)))
    plot_sweep(report, out.with_suffix(".png"))
    print(f"sweep over {len(report.thresholds)} thresholds written to {out}")
    return EXIT_OK


def _line_range(text: str) -> tuple[int, int]:
    try:
        a, _, b = text.partition("-")
        first, last = int(a), int(b or a)
    except ValueError:
        raise UsageError(f"--lines expects FIRST-LAST, got {text!r}") from None
    if first < 1 or last < first:
        raise UsageError(f"invalid line range {text!r}")
    return first, last


def adapt_snippet(file: SourceFile, first: int, last: int, model, vocab, floor: float = 0.0, seed: int = 0,
                  beam_width: int = 1) -> tuple[str, list[tuple[str, str, str, float | None]]]:
    """Adapted snippet text and (mask, original, chosen, confidence) per variable."""
    from .anonymizer import anonymize, classify_variables, restore
    from .pipeline import predict_samples
    from .scopes import analyze_scopes
    from .syntax import instance_from_lines, parse

    tree = parse(file)
    symtab = analyze_scopes(file, tree)
    try:
        inst = instance_from_lines(tree, file, first, last)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    sample = anonymize(inst, classify_variables(inst, symtab), seed)
    if not sample.target.entries:
        return inst.snippet, []
    pred = predict_samples(model, vocab, [sample], beam_width)[0]
    chosen, report = {}, []
    for mask, original in sample.target.entries:
        name = pred.as_dict().get(mask)
        conf = pred.confidence_of(mask)
        if conf is None:
            conf = pred.joint_confidence
        keep = name is not None and name.isidentifier() and (conf is None or conf >= floor)
        chosen[mask] = name if keep else mask
        report.append((mask, original, chosen[mask], conf))
    return restore(sample.snippet_text, chosen), report


def cmd_adapt(args, cfg: RunConfig) -> int:
    from .syntax import ParseError

    path = Path(args.file)
    if not path.is_file():
        raise DataError(f"{path}: no such file")
    first, last = _line_range(args.lines)
    model, vocab = _load_model(args)
    file = SourceFile(".", path.name, path.read_text(encoding="utf-8"))
    try:
        text, report = adapt_snippet(file, first, last, model, vocab, cfg.confidence_floor, cfg.seed,
                                     cfg.beam_width)
    except ParseError as exc:
        raise DataError(f"{path}: {exc}") from None
    sys.stdout.write(text if text.endswith("\n") else text + "\n")
    for mask, original, chosen, conf in report:
        shown = "n/a" if conf is None else f"{conf:.3f}"
        print(f"# {mask}: {chosen} (confidence {shown})", file=sys.stderr)
    return EXIT_OK


# parser --------------------------------------------------------------------------------

_COMMON_KEYS = {f.name for f in fields(RunConfig)}


def _add_config_flags(p: argparse.ArgumentParser, keys: list[str]) -> None:
    for key in keys:
        p.add_argument(f"--{key.replace('_', '-')}", dest=f"cfg_{key}", default=None, metavar="VALUE",
                       help=f"override config key {key}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptpaste", description=__doc__)
    parser.add_argument("--config", help="key = value configuration file; flags take precedence")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, fn, help_, keys):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(fn=fn)
        p.add_argument("--config", dest="sub_config", help=argparse.SUPPRESS)
        _add_config_flags(p, keys)
        return p

    p = command("corpus", cmd_corpus, "ingest a directory tree into a split manifest",
                ["seed", "repo_depth", "min_lines", "split_train", "split_valid", "split_test"])
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)

    p = command("extract", cmd_extract, "mine and transform paste instances",
                ["seed", "transform", "max_snippet_lines", "samples_cap", "mlm_fraction", "prioritize", "budget"])
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--vocab", help="count context tokens with this vocabulary when prioritizing")

    p = command("tokenize", cmd_tokenize, "train a byte-level BPE vocabulary", ["seed", "vocab_size"])
    p.add_argument("--data", required=True, nargs="+")
    p.add_argument("--out", required=True)

    train_keys = ["seed", "transform", "preset", "variant", "max_src_len", "max_tgt_len", "lr", "batch_size",
                  "max_steps", "eval_every", "patience", "warmup"]
    p = command("train", cmd_train, "train an adaptation model", train_keys)
    p.add_argument("--data", required=True)
    p.add_argument("--valid")
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="per-step metrics CSV (default: next to the checkpoint)")

    p = command("predict", cmd_predict, "decode variable names for a dataset", ["seed", "beam_width"])
    for flag in ("--data", "--checkpoint", "--vocab", "--out"):
        p.add_argument(flag, required=True)

    for name, fn, help_ in (("evaluate", cmd_evaluate, "compute adaptation metrics"),
                            ("sweep", cmd_sweep, "confidence threshold sweep")):
        p = command(name, fn, help_, ["seed"])
        for flag in ("--data", "--predictions", "--out"):
            p.add_argument(flag, required=True)

    p = command("adapt", cmd_adapt, "adapt one pasted region of a file",
                ["seed", "confidence_floor", "beam_width"])
    for flag in ("--file", "--checkpoint", "--vocab"):
        p.add_argument(flag, required=True)
    p.add_argument("--lines", required=True, help="FIRST-LAST, 1-based inclusive")
    return parser


def resolve_config(args) -> RunConfig:
    cfg = RunConfig()
    path = getattr(args, "sub_config", None) or args.config
    if path:
        if not Path(path).is_file():
            raise UsageError(f"config file {path} not found")
        cfg = RunConfig.load(path)
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    return cfg.with_overrides(overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return args.fn(args, cfg)
    except (UsageError, ConfigError) as exc:
        print(f"adaptpaste: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CorpusError, OSError, UnicodeDecodeError) as exc:
        print(f"adaptpaste: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        from .model.train import CheckpointMismatch, TrainingError
        from .tokenizer import TokenizerError

        if isinstance(exc, (CheckpointMismatch, TrainingError, TokenizerError)):
            print(f"adaptpaste: {exc}", file=sys.stderr)
            return EXIT_DATA
        log.exception("internal error")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
