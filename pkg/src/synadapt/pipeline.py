"""Run-directory pipeline: each step reads the previous step's artifacts from
``<out>/`` and writes its own. The CLI subcommands are thin wrappers."""

from __future__ import annotations

import copy
import hashlib
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import torch

from . import corpus as corpus_mod
from .adapters import (Stage, fresh_backbone, init_adapter, init_fusion, init_head,
                       wire_stack)
from .core import EncoderConfig
from .errors import ConfigError, SynAdaptError
from .evaluation import (budget_report, classification_metrics, decode_single_corruption,
                         export_attention, majority_baseline, mean_entropy)
from .syntax import IGNORE, TypeVocab, label_corpus, load_labeled, save_labeled
from .tokenizer import BpeModel, encode_windows, load_encoded, save_encoded, train_bpe
from .training import (Checkpoint, ProxyTask, ReplacementTable, StageConfig, StageData, collate,
                       fixed_corruptions, load_checkpoint, most_frequent_identifier_type,
                       run_stage)

log = logging.getLogger(__name__)

STAGE_FILES = {Stage.BACKBONE: "backbone", Stage.LANG: "lang", Stage.NER: "ner",
               Stage.FUSION: "fusion"}

DEFAULT_CONFIG = {
    "seed": 42,
    "threads": 1,
    "languages": list(corpus_mod.LANGUAGES),
    "target_language": None,
    "max_bytes": corpus_mod.DEFAULT_MAX_BYTES,
    "split": [0.8, 0.1, 0.1],
    "tokenizer": {"vocab_size": 4096, "max_len": 128, "min_frequency": 2},
    "encoder": {"hidden": 64, "layers": 4, "heads": 4, "ffn": 256, "dropout": 0.1},
    "adapter_dim": 16,
    "mask_prob": 0.15,
    "log_every": 50,
    "eval_every": 500,
    "stages": {
        "backbone": {"steps": 3000, "batch": 16, "lr": 1e-3},
        "lang": {"steps": 1500, "batch": 16, "lr": 3e-4},
        "ner": {"steps": 1500, "batch": 16, "lr": 3e-4},
        "fusion": {"steps": 1500, "batch": 16, "lr": 3e-4},
    },
}


def merge_config(base: dict, override: dict) -> dict:
    """Recursive dict merge; values in ``override`` win."""
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge_config(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(path=None, overrides: dict | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            cfg = merge_config(cfg, json.loads(Path(path).read_text(encoding="utf-8")))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: malformed config ({e.msg})") from None
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
    cfg = merge_config(cfg, overrides or {})
    unknown = set(cfg) - set(DEFAULT_CONFIG)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def derive_seed(seed: int, label: str) -> int:
    digest = hashlib.blake2b(f"{seed}:{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class Run:
    out: Path
    config: dict

    def __post_init__(self):
        self.out = Path(self.out)
        self.out.mkdir(parents=True, exist_ok=True)
        torch.set_num_threads(max(1, int(self.config.get("threads", 1))))

    def path(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def require(self, *parts) -> Path:
        p = self.out.joinpath(*parts)
        if not p.exists():
            raise SynAdaptError(f"missing {p}; run the earlier pipeline step first")
        return p

    def record(self, step: str, *paths) -> None:
        """Append outputs (with digests) to ``manifest.json``."""
        mpath = self.out / "manifest.json"
        manifest = {"format": "synadapt-run", "version": 1, "config": self.config, "outputs": {}}
        if mpath.exists():
            manifest = json.loads(mpath.read_text(encoding="utf-8"))
            manifest["config"] = self.config
        for p in paths:
            rel = Path(p).relative_to(self.out).as_posix()
            manifest["outputs"][rel] = {"step": step, "sha256": sha256_file(p)}
        tmp = mpath.with_name("manifest.json.tmp")
        tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        os.replace(tmp, mpath)

    # ------------------------------------------------------------ loaders
    def manifest(self) -> corpus_mod.CorpusManifest:
        return corpus_mod.load(self.require("corpus.jsonl"))

    def split_ids(self, name: str) -> tuple[str, ...]:
        return corpus_mod.load(self.require("splits", f"{name}.jsonl")).ids

    def types(self) -> TypeVocab:
        return TypeVocab.load(self.require("types.json"))

    def tokenizer(self) -> BpeModel:
        return BpeModel.load(self.require("tokenizer.json"))

    def encoded(self, name: str):
        return load_encoded(self.require("encoded", f"{name}.jsonl"))

    def encoder_config(self) -> EncoderConfig:
        e = self.config["encoder"]
        return EncoderConfig(vocab_size=self.tokenizer().vocab_size, hidden=e["hidden"],
                             layers=e["layers"], heads=e["heads"], ffn=e["ffn"],
                             max_len=self.config["tokenizer"]["max_len"], dropout=e["dropout"])

    def checkpoint(self, name: str) -> Checkpoint:
        return load_checkpoint(self.require("checkpoints", f"{name}.ckpt"))


# ---------------------------------------------------------------- steps

def ingest(run: Run, root) -> dict:
    cfg = run.config
    manifest = corpus_mod.ingest_dir(root, cfg["languages"], cfg["max_bytes"])
    splits = corpus_mod.split_corpus(manifest, cfg["split"], derive_seed(cfg["seed"], "split"))
    paths = [corpus_mod.persist(manifest, run.path("corpus.jsonl"))]
    for s in splits:
        paths.append(corpus_mod.persist(s, run.path("splits", f"{s.name}.jsonl")))
    run.record("ingest", *paths)
    return {"samples": len(manifest), "counts": manifest.counts, "skipped": manifest.skipped,
            "splits": {s.name: len(s) for s in splits}}


def label(run: Run) -> dict:
    manifest = run.manifest()
    labeled, vocab = label_corpus(list(manifest.samples))
    p1 = save_labeled(labeled, run.path("labeled.jsonl"))
    p2 = vocab.save(run.path("types.json"))
    run.record("label", p1, p2)
    excluded = [s.id for s in labeled if s.excluded]
    return {"samples": len(labeled), "types": len(vocab), "excluded": excluded,
            "unknown_leaves": sum(s.error_leaf_count for s in labeled)}


def _labeled_by_id(run: Run):
    return {s.id: s for s in load_labeled(run.require("labeled.jsonl"), run.types())}


def tokenizer_train(run: Run) -> dict:
    tcfg = run.config["tokenizer"]
    labeled = _labeled_by_id(run)
    words = [w.text for i in run.split_ids("train") for w in labeled[i].words]
    model = train_bpe(words, tcfg["vocab_size"], run.config["seed"], tcfg["min_frequency"])
    run.record("tokenizer-train", model.save(run.path("tokenizer.json")))
    return {"vocab_size": model.vocab_size, "merges": len(model.merges)}


def encode(run: Run) -> dict:
    model = run.tokenizer()
    labeled = _labeled_by_id(run)
    max_len = run.config["tokenizer"]["max_len"]
    out, paths = {}, []
    for name in corpus_mod.SPLIT_NAMES:
        seqs = [s for i in run.split_ids(name) for s in encode_windows(labeled[i], model, max_len)]
        excluded = sorted({i for i in run.split_ids(name) if labeled[i].excluded})
        paths.append(save_encoded(seqs, run.path("encoded", f"{name}.jsonl"),
                                  {"split": name, "excluded": excluded}))
        out[name] = len(seqs)
    run.record("encode", *paths)
    return out


def _target(run: Run, seqs):
    """Sequences of the configured target language (all of them if none is set)."""
    lang = run.config.get("target_language")
    if lang is None:
        return list(seqs)
    if lang not in run.config["languages"]:
        raise ConfigError(f"target_language {lang!r} is not among the ingested languages")
    by_id = {s.id: s.language for s in run.manifest().samples}
    return [s for s in seqs if by_id[s.sample_id] == lang]


def _excluded_ids(run: Run, name: str) -> set[str]:
    with open(run.require("encoded", f"{name}.jsonl"), encoding="utf-8") as fh:
        return set(json.loads(fh.readline()).get("excluded", []))


def proxy_task(run: Run, train_seqs) -> ProxyTask:
    vocab = run.types()
    target = most_frequent_identifier_type(vocab.names, vocab.counts)
    return ProxyTask((target,), ReplacementTable(train_seqs))


def stage_config(run: Run, stage: Stage, steps: int | None = None, seed_label: str = "") -> StageConfig:
    cfg = run.config
    s = cfg["stages"][STAGE_FILES[stage]]
    return StageConfig(steps=s["steps"] if steps is None else steps, batch=s["batch"], lr=s["lr"],
                       seed=derive_seed(cfg["seed"], f"train:{stage.value}{seed_label}"),
                       mask_prob=cfg["mask_prob"], log_every=cfg["log_every"],
                       eval_every=cfg["eval_every"],
                       eval_seed=derive_seed(cfg["seed"], "eval"))


def build_model(run: Run, stage: Stage, fusion_adapters=("lang", "ner"), seed_label: str = ""):
    """Composite for ``stage`` built from earlier stages' checkpoints (or fresh init)."""
    cfg = run.config
    enc = run.encoder_config()
    seed = cfg["seed"]
    if stage is Stage.BACKBONE:
        return wire_stack(enc, fresh_backbone(enc, derive_seed(seed, "init:backbone")), stage)
    backbone = run.checkpoint("backbone").params
    if "head.mlm.bias" not in backbone:
        raise SynAdaptError("backbone checkpoint is not a pretrained backbone")
    d = cfg["adapter_dim"]
    if stage is Stage.LANG:
        ad = init_adapter(enc.hidden, d, enc.layers, derive_seed(seed, "init:lang"), "lang")
        return wire_stack(enc, backbone, stage, {"lang": ad}, adapter_dim=d)
    if stage is Stage.NER:
        ad = init_adapter(enc.hidden, d, enc.layers, derive_seed(seed, "init:ner"), "ner")
        head = init_head(enc.hidden, len(run.types()), "ner", derive_seed(seed, "init:ner-head"))
        return wire_stack(enc, backbone, stage, {"ner": ad}, head=head, adapter_dim=d)
    adapters = {a: run.checkpoint(a).params for a in fusion_adapters}
    fusion = init_fusion(enc.hidden, enc.layers, derive_seed(seed, f"init:fusion{seed_label}"))
    head = init_head(enc.hidden, 2, "task", derive_seed(seed, f"init:task-head{seed_label}"))
    return wire_stack(enc, backbone, stage, adapters, fusion, head, adapter_dim=d)


def _train_seqs(run: Run, stage: Stage):
    seqs = run.encoded("train")
    if stage is not Stage.BACKBONE:
        seqs = _target(run, seqs)
    if stage is Stage.NER:
        bad = _excluded_ids(run, "train")
        seqs = [s for s in seqs if s.sample_id not in bad]
    return seqs


def train(run: Run, stage: Stage | str, steps: int | None = None, name: str | None = None,
          fusion_adapters=("lang", "ner"), seed_label: str = "", resume: bool = False) -> dict:
    stage = Stage.parse(stage)
    name = name or STAGE_FILES[stage]
    previous = run.checkpoint(name) if resume else None
    model = build_model(run, stage, tuple(fusion_adapters), seed_label)
    train_seqs = _train_seqs(run, stage)
    valid = run.encoded("valid")
    if stage is not Stage.BACKBONE:
        valid = _target(run, valid)
    proxy = proxy_task(run, _target(run, run.encoded("train"))) if stage is Stage.FUSION else None
    scfg = stage_config(run, stage, steps, seed_label)
    ckpt_path = run.path("checkpoints", f"{name}.ckpt")
    metrics_path = run.path("metrics", f"{name}.jsonl")
    ckpt, metrics = run_stage(model, StageData(train_seqs, valid, proxy), scfg,
                              run_config=run.config, resume=previous, checkpoint_path=ckpt_path,
                              metrics_path=metrics_path)
    run.record(f"train:{name}", ckpt_path, metrics_path)
    return {"checkpoint": str(ckpt_path), "steps": ckpt.step,
            "last": metrics[-1] if metrics else None}


def evaluate(run: Run, what: str, checkpoint: str | None = None, split: str = "test") -> dict:
    seqs = _target(run, run.encoded(split))
    if what == "ner":
        ckpt = run.checkpoint(checkpoint or "ner")
        if ckpt.stage is not Stage.NER:
            raise SynAdaptError("NER evaluation needs an ner_adapter checkpoint")
        bad = _excluded_ids(run, split)
        seqs = [s for s in seqs if s.sample_id not in bad]
        model = ckpt.model()
        preds, golds = [], []
        with torch.no_grad():
            for i in range(0, len(seqs), 64):
                b = collate(seqs[i:i + 64])
                preds.append(model.forward(b.ids, b.mask).logits.argmax(-1))
                golds.append(b.types)
        pred, gold = torch.cat(preds).numpy(), torch.cat(golds).numpy()
        report = classification_metrics(pred, gold, IGNORE)
        result = {"what": "ner", "split": split, **report.to_dict(run.types().names),
                  "majority_baseline": majority_baseline(gold, IGNORE)}
    elif what == "task":
        ckpt = run.checkpoint(checkpoint or "fusion")
        if ckpt.stage is not Stage.FUSION:
            raise SynAdaptError("task evaluation needs a fusion_task checkpoint")
        model = ckpt.model()
        rec = fixed_corruptions(seqs, proxy_task(run, _target(run, run.encoded("train"))),
                                derive_seed(run.config["seed"], f"eval:{split}"))
        with torch.no_grad():
            logits = torch.cat([model.forward(rec.ids[i:i + 64], rec.mask[i:i + 64]).logits
                                for i in range(0, len(rec.ids), 64)])
        pred = decode_single_corruption(logits, rec.labels)
        report = classification_metrics(pred.numpy(), rec.labels.numpy(), IGNORE)
        pos = report.per_class.get(1, {"precision": 0.0, "recall": 0.0, "f1": 0.0})
        result = {"what": "task", "split": split, "adapters": list(ckpt.adapters),
                  "f1": pos["f1"], "precision": pos["precision"], "recall": pos["recall"],
                  "sequences": int(rec.ids.shape[0]), **report.to_dict()}
    else:
        raise SynAdaptError(f"unknown evaluation target {what!r}")
    name = checkpoint or ("ner" if what == "ner" else "fusion")
    path = run.path("metrics", f"eval_{what}_{name}.json")
    path.write_text(json.dumps(result, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    run.record(f"eval:{what}", path)
    return result


def attention(run: Run, checkpoint: str, index: int = 0, layer: int | None = None,
              head: int = 0, split: str = "test") -> dict:
    """Dump one head for one sequence, with and without the checkpoint's adapters."""
    ckpt = run.checkpoint(checkpoint)
    model = ckpt.model()
    seqs = run.encoded(split)
    if not 0 <= index < len(seqs):
        raise SynAdaptError(f"sequence index {index} out of range ({len(seqs)} in {split})")
    layer = model.config.layers - 1 if layer is None else layer
    tok = run.tokenizer()
    composite = export_attention(model, seqs[index], layer, head, tokenizer=tok)
    backbone = export_attention(model, seqs[index], layer, head, tokenizer=tok,
                                use_adapters=False)
    report = {"format": "synadapt-attention", "version": 1, "checkpoint": checkpoint,
              "backbone": backbone.to_json(), "composite": composite.to_json(),
              "mean_entropy": {"backbone": mean_entropy(backbone),
                               "composite": mean_entropy(composite)}}
    path = run.path("attention", f"{checkpoint}_{split}{index}_l{layer}h{head}.json")
    path.write_text(json.dumps(report) + "\n", encoding="utf-8")
    run.record("attention", path)
    return {"path": str(path), "mean_entropy": report["mean_entropy"],
            "special_share": {"backbone": backbone.special_share,
                              "composite": composite.special_share}}


def budget(run: Run, checkpoint: str) -> dict:
    return budget_report(run.checkpoint(checkpoint).model())


def run_all(run: Run, root, evaluate_outputs: bool = True) -> dict:
    summary = {"ingest": ingest(run, root), "label": label(run),
               "tokenizer": tokenizer_train(run), "encode": encode(run)}
    for stage in (Stage.BACKBONE, Stage.LANG, Stage.NER, Stage.FUSION):
        summary[f"train:{stage.value}"] = train(run, stage)
    if evaluate_outputs:
        summary["eval:ner"] = {k: v for k, v in evaluate(run, "ner").items()
                               if k in ("accuracy", "macro_f1", "majority_baseline")}
        summary["eval:task"] = {k: v for k, v in evaluate(run, "task").items()
                                if k in ("f1", "accuracy")}
    return summary
