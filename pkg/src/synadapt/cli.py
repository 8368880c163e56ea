"""Command-line entry point: ``synadapt <subcommand> --out RUN [...]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, pipeline, toy_corpus_path
from .errors import SynAdaptError
from .training import read_header

log = logging.getLogger("synadapt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--seed", type=int, help="master seed for every random draw")
    p.add_argument("--threads", type=int, help="torch intra-op threads (1 = deterministic)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="synadapt", description="Syntax-aware adapters for source-code encoders.")
    ap.add_argument("--version", action="version", version=f"synadapt {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", help="read a source tree into a corpus manifest and splits")
    _common(p)
    p.add_argument("--root", help="source directory (default: bundled toy corpus)")
    p.add_argument("--languages", help="comma-separated subset of languages")
    p.add_argument("--target-language",
                   help="language for the adapter, fusion and evaluation steps "
                        "(the backbone still sees every ingested language)")

    for name, text in (("label", "type every AST leaf"),
                       ("tokenizer-train", "train byte-level BPE on the train split"),
                       ("encode", "encode typed windows for every split")):
        _common(sub.add_parser(name, help=text))

    p = sub.add_parser("train", help="train one stage")
    _common(p)
    p.add_argument("--stage", required=True,
                   choices=["backbone", "lang-adapter", "ner-adapter", "fusion", "lang", "ner"])
    p.add_argument("--task", choices=["tag-corrupt"], default="tag-corrupt",
                   help="downstream task for the fusion stage")
    p.add_argument("--steps", type=int, help="override the stage's step count")
    p.add_argument("--adapters", default="lang,ner", help="adapters fused by the fusion stage")
    p.add_argument("--name", help="checkpoint name (default: the stage name)")
    p.add_argument("--resume", action="store_true", help="continue from the named checkpoint")

    p = sub.add_parser("eval", help="evaluate on the test split")
    _common(p)
    p.add_argument("--what", required=True, choices=["ner", "task"])
    p.add_argument("--checkpoint", help="checkpoint name under <out>/checkpoints")
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])

    p = sub.add_parser("attention", help="export one attention head as JSON")
    _common(p)
    p.add_argument("--checkpoint", default="ner")
    p.add_argument("--index", type=int, default=0, help="sequence index in the split")
    p.add_argument("--layer", type=int)
    p.add_argument("--head", type=int, default=0)
    p.add_argument("--split", default="test", choices=["train", "valid", "test"])

    p = sub.add_parser("budget", help="trainable/frozen parameter report")
    _common(p)
    p.add_argument("--checkpoint", default="fusion")

    p = sub.add_parser("inspect", help="print the header of any artifact")
    p.add_argument("path")

    p = sub.add_parser("pipeline", help="run every step end to end")
    _common(p)
    p.add_argument("--root", help="source directory (default: bundled toy corpus)")
    p.add_argument("--languages", help="comma-separated subset of languages")
    p.add_argument("--target-language", help="as for ingest")
    p.add_argument("--no-eval", action="store_true")
    return ap


def _overrides(args) -> dict:
    out = {}
    if args.seed is not None:
        out["seed"] = args.seed
    if args.threads is not None:
        out["threads"] = args.threads
    if getattr(args, "languages", None):
        out["languages"] = [x.strip() for x in args.languages.split(",") if x.strip()]
    if getattr(args, "target_language", None):
        out["target_language"] = args.target_language
    return out


def _run(args) -> pipeline.Run:
    """Load the run's stored config (if any) and apply this invocation's overrides."""
    stored = Path(args.out) / "manifest.json"
    base = {}
    if stored.exists():
        base = json.loads(stored.read_text(encoding="utf-8")).get("config", {})
    cfg = pipeline.resolve_config(args.config, pipeline.merge_config(base, _overrides(args)))
    return pipeline.Run(args.out, cfg)


def _metrics_summary(path: Path):
    """Summary of a per-step metrics log, or None if ``path`` is not one."""
    records = []
    for line in path.read_text(encoding="utf-8").splitlines():
        rec = json.loads(line)
        if not isinstance(rec, dict) or not {"step", "stage"} <= set(rec):
            return None
        records.append(rec)
    return {"format": "synadapt-metrics", "records": len(records),
            "last": records[-1] if records else None}


def inspect_artifact(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise SynAdaptError(f"no such file: {path}")
    with open(path, "rb") as fh:
        first = fh.readline()
    if b'"synadapt-checkpoint"' in first:
        return read_header(path)
    try:
        if path.suffix == ".jsonl":
            summary = _metrics_summary(path)
            if summary is not None:
                return summary
            header = json.loads(first)
        else:
            header = json.loads(path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise SynAdaptError(f"{path}: not a synadapt artifact") from None
    if not isinstance(header, dict):
        raise SynAdaptError(f"{path}: not a synadapt artifact")
    if "format" in header:
        # keep the output small: drop bulky payloads
        return {k: v for k, v in header.items()
                if k not in ("merges", "vocab", "outputs", "counts", "backbone", "composite")}
    if "what" in header:
        return {"format": "synadapt-eval", **header}
    raise SynAdaptError(f"{path}: not a synadapt artifact")


def dispatch(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = _execute(args)
    except SynAdaptError as e:
        print(f"synadapt: error: {e}", file=sys.stderr)
        return 2
    print(json.dumps(result, indent=1, sort_keys=True))
    return 0


def _execute(args) -> dict:
    if args.command == "inspect":
        return inspect_artifact(args.path)
    run = _run(args)
    root = getattr(args, "root", None) or toy_corpus_path()
    if args.command == "ingest":
        return pipeline.ingest(run, root)
    if args.command == "label":
        return pipeline.label(run)
    if args.command == "tokenizer-train":
        return pipeline.tokenizer_train(run)
    if args.command == "encode":
        return pipeline.encode(run)
    if args.command == "train":
        adapters = tuple(a.strip() for a in args.adapters.split(",") if a.strip())
        if args.steps is not None and args.steps < 0:
            raise SynAdaptError("--steps must be non-negative")
        return pipeline.train(run, args.stage, steps=args.steps, name=args.name,
                              fusion_adapters=adapters, resume=args.resume)
    if args.command == "eval":
        return pipeline.evaluate(run, args.what, args.checkpoint, args.split)
    if args.command == "attention":
        return pipeline.attention(run, args.checkpoint, args.index, args.layer, args.head,
                                  args.split)
    if args.command == "budget":
        return pipeline.budget(run, args.checkpoint)
    if args.command == "pipeline":
        return pipeline.run_all(run, root, not args.no_eval)
    raise AssertionError(args.command)


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
