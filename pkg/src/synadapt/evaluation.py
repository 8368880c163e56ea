"""Classification metrics, attention exports, and parameter-budget reports."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .errors import SynAdaptError
from .tokenizer import BOS, EOS


@dataclass
class MetricsReport:
    per_class: dict[int, dict[str, float]]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float
    counted: int
    correct: int

    def to_dict(self, class_names=None) -> dict:
        def label(c):
            return class_names[c] if class_names is not None else str(c)
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "counted": self.counted,
            "correct": self.correct,
            "per_class": {label(c): v for c, v in sorted(self.per_class.items())},
        }


def classification_metrics(predictions, golds, ignore_id: int = -100) -> MetricsReport:
    """Per-class and macro precision/recall/F1 plus accuracy.

    Positions whose gold label is ``ignore_id`` are skipped. Classes are every
    label that occurs as a gold or a prediction at counted positions; macro
    averages run over classes with non-zero support.
    """
    pred = np.asarray(predictions).reshape(-1)
    gold = np.asarray(golds).reshape(-1)
    if pred.shape != gold.shape:
        raise ValueError(f"predictions {pred.shape} and golds {gold.shape} differ in shape")
    keep = gold != ignore_id
    pred, gold = pred[keep], gold[keep]
    n = int(gold.size)
    if n == 0:
        raise SynAdaptError("no counted positions to score")
    classes = np.union1d(np.unique(gold), np.unique(pred))
    per_class = {}
    for c in classes.tolist():
        tp = int(np.sum((pred == c) & (gold == c)))
        fp = int(np.sum((pred == c) & (gold != c)))
        fn = int(np.sum((pred != c) & (gold == c)))
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f = 2 * p * r / (p + r) if p + r else 0.0
        per_class[int(c)] = {"precision": p, "recall": r, "f1": f, "support": tp + fn, "tp": tp}
    supported = [v for v in per_class.values() if v["support"] > 0]
    correct = int(np.sum(pred == gold))
    return MetricsReport(
        per_class,
        float(np.mean([v["precision"] for v in supported])),
        float(np.mean([v["recall"] for v in supported])),
        float(np.mean([v["f1"] for v in supported])),
        correct / n, n, correct)


def majority_baseline(golds, ignore_id: int = -100) -> float:
    gold = np.asarray(golds).reshape(-1)
    gold = gold[gold != ignore_id]
    if gold.size == 0:
        raise SynAdaptError("no counted positions")
    return float(np.bincount(gold).max() / gold.size)


def decode_single_corruption(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Tag exactly one position per sequence: the scored position with the
    largest corrupted-vs-clean margin. Unscored positions stay IGNORE-aligned (0)."""
    margin = (logits[..., 1] - logits[..., 0]).masked_fill(labels < 0, float("-inf"))
    pred = torch.zeros_like(labels)
    best = margin.argmax(-1)
    has = torch.isfinite(margin.max(-1).values)
    rows = torch.arange(labels.shape[0])
    pred[rows[has], best[has]] = 1
    return pred


@dataclass
class AttentionDump:
    sample: str
    layer: int
    head: int
    tokens: list[str]
    weights: list[list[float]]
    entropy: list[float]
    special_share: float
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        d = asdict(self)
        d.update(d.pop("extras"))
        return d


def attention_stats(weights: np.ndarray, special_cols) -> tuple[list[float], float]:
    """Per-row entropy (nats) and the mean share of mass on ``special_cols``."""
    w = np.asarray(weights, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        logs = np.where(w > 0, np.log(np.where(w > 0, w, 1.0)), 0.0)
    entropy = [max(0.0, float(-(row * lrow).sum())) for row, lrow in zip(w, logs)]
    share = float(w[:, list(special_cols)].sum(axis=1).mean()) if len(special_cols) else 0.0
    return entropy, share


def export_attention(model, seq, layer: int, head: int, path=None, *, tokenizer=None,
                     use_adapters: bool = True) -> AttentionDump:
    """Attention probabilities of one head over the real tokens of ``seq``."""
    cfg = model.config
    if not 0 <= layer < cfg.layers:
        raise SynAdaptError(f"layer {layer} out of range (model has {cfg.layers})")
    if not 0 <= head < cfg.heads:
        raise SynAdaptError(f"head {head} out of range (model has {cfg.heads})")
    n = sum(seq.attention_mask)
    ids = torch.tensor(seq.token_ids[:n])[None]
    mask = torch.ones_like(ids)
    with torch.no_grad():
        out = model.forward(ids, mask, use_adapters=use_adapters, return_attention=True)
    w = out.attentions[layer][0, head].double().numpy()
    toks = list(seq.token_ids[:n])
    names = [tokenizer.token_str(t) for t in toks] if tokenizer is not None else [str(t) for t in toks]
    special = [i for i, t in enumerate(toks) if t in (BOS, EOS)]
    entropy, share = attention_stats(w, special)
    dump = AttentionDump(seq.sample_id, layer, head, names, w.tolist(), entropy, share)
    if path is not None:
        Path(path).write_text(json.dumps(dump.to_json()) + "\n", encoding="utf-8")
    return dump


def budget_report(model) -> dict:
    trainable, frozen = model.trainable_count(), model.frozen_count()
    return {"stage": model.stage.value, "trainable": trainable, "frozen": frozen,
            "ratio": trainable / (trainable + frozen)}


def mean_entropy(dump: AttentionDump) -> float:
    return math.fsum(dump.entropy) / len(dump.entropy) if dump.entropy else 0.0
