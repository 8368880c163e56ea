"""Losses, batch corruption, Adam, the stage runner, and checkpoint I/O."""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
import torch.nn.functional as F

from .adapters import CompositeModel, Stage
from .core import EncoderConfig, ParamTree, assert_finite, backward, set_trainable
from .errors import ConfigError, FormatError, SynAdaptError
from .evaluation import classification_metrics, decode_single_corruption
from .rng import Xoshiro256
from .syntax import IGNORE
from .tokenizer import MASK, N_SPECIAL, EncodedSequence

log = logging.getLogger(__name__)

CKPT_FORMAT = "synadapt-checkpoint"
CKPT_VERSION = 1
GRAD_CLIP = 1.0
TAIL = 20


# ---------------------------------------------------------------- batches

@dataclass
class Batch:
    ids: torch.Tensor      # B x N
    types: torch.Tensor    # B x N
    mask: torch.Tensor     # B x N


def collate(seqs: Sequence[EncodedSequence]) -> Batch:
    return Batch(torch.tensor([s.token_ids for s in seqs], dtype=torch.long),
                 torch.tensor([s.type_ids for s in seqs], dtype=torch.long),
                 torch.tensor([s.attention_mask for s in seqs], dtype=torch.long))


def eligible_positions(ids: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """Real, non-special positions."""
    return mask.bool() & (ids >= N_SPECIAL)


@dataclass
class MaskedBatch:
    ids: torch.Tensor
    targets: torch.Tensor
    mask: torch.Tensor


def mlm_corrupt(batch: Batch, rng: Xoshiro256, mask_prob: float = 0.15, vocab_size: int = 4096,
                split: tuple[float, float, float] = (0.8, 0.1, 0.1)) -> MaskedBatch:
    """BERT-style corruption: pick each eligible position with ``mask_prob``;
    of those, ``split`` gives the MASK / random-token / unchanged shares."""
    if not 0.0 <= mask_prob < 1.0 + 1e-12:
        raise ValueError("mask_prob must lie in [0, 1]")
    gen = torch.Generator().manual_seed(rng.torch_seed())
    ok = eligible_positions(batch.ids, batch.mask)
    u = torch.rand(batch.ids.shape, generator=gen, dtype=torch.float64)
    branch = torch.rand(batch.ids.shape, generator=gen, dtype=torch.float64)
    rand_tok = torch.randint(N_SPECIAL, vocab_size, batch.ids.shape, generator=gen)
    chosen = ok & (u < mask_prob)
    ids = batch.ids.clone()
    to_mask = chosen & (branch < split[0])
    to_rand = chosen & (branch >= split[0]) & (branch < split[0] + split[1])
    ids[to_mask] = MASK
    ids[to_rand] = rand_tok[to_rand]
    targets = torch.where(chosen, batch.ids, torch.full_like(batch.ids, IGNORE))
    return MaskedBatch(ids, targets, batch.mask)


# ---------------------------------------------------------------- losses

def _cross_entropy(logits: torch.Tensor, targets: torch.Tensor):
    counted = targets != IGNORE
    n = int(counted.sum())
    if n == 0:
        raise SynAdaptError("no counted positions in batch")
    assert_finite(logits, "logits")
    flat = logits.reshape(-1, logits.shape[-1])
    total = F.cross_entropy(flat, targets.reshape(-1), ignore_index=IGNORE, reduction="sum")
    correct = (logits.argmax(-1) == targets) & counted
    return total / n, correct


def ttc_loss(logits: torch.Tensor, type_ids: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
    """Token-type cross-entropy averaged over positions whose type is not IGNORE.

    Also returns per-position correctness flags (False at ignored positions).
    """
    return _cross_entropy(logits, type_ids)


def mlm_loss(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    return _cross_entropy(logits, targets)[0]


# ---------------------------------------------------------------- proxy task

class ReplacementTable:
    """Per-type frequency distribution of token ids, for same-type substitutions."""

    def __init__(self, seqs: Sequence[EncodedSequence]):
        counts: dict[int, dict[int, int]] = {}
        for s in seqs:
            for tok, typ, m in zip(s.token_ids, s.type_ids, s.attention_mask):
                if m and typ != IGNORE and tok >= N_SPECIAL:
                    d = counts.setdefault(typ, {})
                    d[tok] = d.get(tok, 0) + 1
        self.tokens: dict[int, list[int]] = {}
        self.cum: dict[int, list[int]] = {}
        for typ, d in counts.items():
            toks = sorted(d)
            self.tokens[typ] = toks
            self.cum[typ] = list(np.cumsum([d[t] for t in toks]))
        self.totals = {t: int(c[-1]) for t, c in self.cum.items()}

    def sample_other(self, type_id: int, original: int, rng: Xoshiro256,
                     tries: int = 64) -> int | None:
        toks = self.tokens.get(type_id)
        if not toks or (len(toks) == 1 and toks[0] == original):
            return None
        cum, total = self.cum[type_id], self.totals[type_id]
        for _ in range(tries):
            x = rng.below(total)
            tok = toks[int(np.searchsorted(cum, x, side="right"))]
            if tok != original:
                return tok
        others = [t for t in toks if t != original]
        return others[rng.below(len(others))]


def most_frequent_identifier_type(type_names: Sequence[str], counts: Mapping[str, int]) -> int:
    cands = [i for i, n in enumerate(type_names) if "identifier" in n]
    if not cands:
        raise SynAdaptError("no identifier-like type in the vocabulary")
    return min(cands, key=lambda i: (-counts.get(type_names[i], 0), type_names[i]))


@dataclass
class CorruptionRecord:
    ids: torch.Tensor
    labels: torch.Tensor
    mask: torch.Tensor
    skipped: list[bool]
    positions: list[int]


def make_refinement_proxy(batch: Batch, rng: Xoshiro256, type_filter: set[int] | Sequence[int],
                          table: ReplacementTable) -> CorruptionRecord:
    """Substitute one same-type token per sequence and label where it happened."""
    type_filter = set(type_filter)
    if not type_filter:
        raise ValueError("type filter must name at least one type")
    ids = batch.ids.clone()
    ok = eligible_positions(batch.ids, batch.mask)
    labels = torch.where(ok, torch.zeros_like(ids), torch.full_like(ids, IGNORE))
    skipped, positions = [], []
    for b in range(ids.shape[0]):
        cand = [p for p in range(ids.shape[1])
                if ok[b, p] and int(batch.types[b, p]) in type_filter]
        new = None
        while cand and new is None:
            j = rng.below(len(cand))
            p = cand[j]
            new = table.sample_other(int(batch.types[b, p]), int(ids[b, p]), rng)
            if new is None:
                cand.pop(j)
        if new is None:
            skipped.append(True)
            positions.append(-1)
            continue
        ids[b, p] = new
        labels[b, p] = 1
        skipped.append(False)
        positions.append(p)
    return CorruptionRecord(ids, labels, batch.mask, skipped, positions)


@dataclass
class ProxyTask:
    type_filter: tuple[int, ...]
    table: ReplacementTable


def fixed_corruptions(seqs: Sequence[EncodedSequence], task: ProxyTask, seed: int
                      ) -> CorruptionRecord:
    """A reproducible corrupted copy of an evaluation set (skipped rows dropped)."""
    rec = make_refinement_proxy(collate(seqs), Xoshiro256(seed), task.type_filter, task.table)
    keep = torch.tensor([not s for s in rec.skipped])
    return CorruptionRecord(rec.ids[keep], rec.labels[keep], rec.mask[keep],
                            [False] * int(keep.sum()),
                            [p for p, s in zip(rec.positions, rec.skipped) if not s])


# ---------------------------------------------------------------- optimizer

@dataclass
class OptimizerState:
    step: int = 0
    m: dict[str, torch.Tensor] = field(default_factory=dict)
    v: dict[str, torch.Tensor] = field(default_factory=dict)


def adam_step(params: ParamTree, grads: Mapping[str, torch.Tensor], mask: Mapping[str, bool],
              state: OptimizerState, lr: float, betas: tuple[float, float] = (0.9, 0.999),
              eps: float = 1e-8) -> OptimizerState:
    """One bias-corrected Adam update, in place, restricted to mask-true tensors."""
    b1, b2 = betas
    state.step += 1
    t = state.step
    c1, c2 = 1.0 - b1 ** t, 1.0 - b2 ** t
    with torch.no_grad():
        for name, g in grads.items():
            if not mask.get(name, False):
                continue
            m = state.m.setdefault(name, torch.zeros_like(params[name]))
            v = state.v.setdefault(name, torch.zeros_like(params[name]))
            m.mul_(b1).add_(g, alpha=1.0 - b1)
            v.mul_(b2).addcmul_(g, g, value=1.0 - b2)
            params[name].sub_(lr * (m / c1) / ((v / c2).sqrt() + eps))
    return state


def clip_global_norm(grads: dict[str, torch.Tensor], cap: float = GRAD_CLIP) -> float:
    total = math.sqrt(sum(float((g.double() ** 2).sum()) for g in grads.values()))
    if total > cap:
        scale = cap / (total + 1e-12)
        for g in grads.values():
            g.mul_(scale)
    return total


# ---------------------------------------------------------------- checkpoints

@dataclass
class Checkpoint:
    config: dict
    stage: Stage
    step: int
    params: ParamTree
    trainable: dict[str, bool]
    adapters: tuple[str, ...] = ()
    adapter_dim: int = 0
    optimizer: OptimizerState | None = None
    rng_state: list[int] | None = None
    metrics_tail: list[dict] = field(default_factory=list)

    @property
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig.from_dict(self.config["encoder"])

    def model(self) -> CompositeModel:
        return CompositeModel(self.encoder_config, self.stage, self.params, dict(self.trainable),
                              self.adapters, self.adapter_dim)

    @classmethod
    def from_model(cls, model: CompositeModel, config: dict, step: int = 0, **kw) -> "Checkpoint":
        return cls(config, model.stage, step, model.params, dict(model.trainable),
                   model.adapters, model.adapter_dim, **kw)


def _tensor_bytes(t: torch.Tensor) -> bytes:
    return t.detach().to(torch.float32).contiguous().numpy().astype("<f4").tobytes()


def save_checkpoint(ckpt: Checkpoint, path) -> Path:
    """Header JSON line, then ``name\\nshape\\n<little-endian float32>`` sections."""
    path = Path(path)
    sections = [(f"param/{n}", t) for n, t in ckpt.params.items()]
    opt = ckpt.optimizer
    if opt is not None:
        sections += [(f"adam.m/{n}", t) for n, t in opt.m.items()]
        sections += [(f"adam.v/{n}", t) for n, t in opt.v.items()]
    header = {
        "format": CKPT_FORMAT, "version": CKPT_VERSION,
        "config": ckpt.config, "stage": ckpt.stage.value, "step": ckpt.step,
        "adapters": list(ckpt.adapters), "adapter_dim": ckpt.adapter_dim,
        "trainable": sorted(n for n, on in ckpt.trainable.items() if on),
        "optimizer_step": opt.step if opt is not None else None,
        "rng": [format(x, "016x") for x in ckpt.rng_state] if ckpt.rng_state else None,
        "metrics_tail": ckpt.metrics_tail[-TAIL:],
        "sections": len(sections),
    }
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for name, t in sections:
            fh.write(name.encode("utf-8") + b"\n")
            fh.write(json.dumps(list(t.shape)).encode("ascii") + b"\n")
            fh.write(_tensor_bytes(t))
    os.replace(tmp, path)
    return path


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        line = fh.readline()
    try:
        header = json.loads(line)
    except (json.JSONDecodeError, UnicodeDecodeError):
        raise FormatError(f"{path}: not a checkpoint (bad header)") from None
    if not isinstance(header, dict) or header.get("format") != CKPT_FORMAT:
        raise FormatError(f"{path}: not a checkpoint")
    if header.get("version") != CKPT_VERSION:
        raise FormatError(f"{path}: checkpoint version {header.get('version')} "
                          f"is not {CKPT_VERSION}")
    return header


def load_checkpoint(path, expect_config: dict | None = None) -> Checkpoint:
    path = Path(path)
    header = read_header(path)
    if expect_config is not None and header["config"] != expect_config:
        raise ConfigError(
            "checkpoint config does not match the run config\n"
            f"checkpoint: {json.dumps(header['config'], sort_keys=True)}\n"
            f"run:        {json.dumps(expect_config, sort_keys=True)}")
    data = path.read_bytes()
    pos = data.index(b"\n") + 1
    tensors = {}
    for _ in range(header["sections"]):
        try:
            e1 = data.index(b"\n", pos)
            name = data[pos:e1].decode("utf-8")
            e2 = data.index(b"\n", e1 + 1)
            shape = json.loads(data[e1 + 1:e2])
        except (ValueError, UnicodeDecodeError, json.JSONDecodeError):
            raise FormatError(f"{path}: truncated or corrupt section header") from None
        nbytes = 4 * math.prod(shape)
        raw = data[e2 + 1:e2 + 1 + nbytes]
        if len(raw) != nbytes:
            raise FormatError(f"{path}: section {name!r} is truncated")
        arr = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(shape)
        tensors[name] = torch.from_numpy(arr.copy())
        pos = e2 + 1 + nbytes
    if pos != len(data):
        raise FormatError(f"{path}: trailing bytes after the last section")

    params = {n[6:]: t for n, t in tensors.items() if n.startswith("param/")}
    optimizer = None
    if header.get("optimizer_step") is not None:
        optimizer = OptimizerState(
            header["optimizer_step"],
            {n[7:]: t for n, t in tensors.items() if n.startswith("adam.m/")},
            {n[7:]: t for n, t in tensors.items() if n.startswith("adam.v/")})
    trainable_set = set(header["trainable"])
    rng = [int(x, 16) for x in header["rng"]] if header.get("rng") else None
    return Checkpoint(header["config"], Stage(header["stage"]), header["step"], params,
                      {n: n in trainable_set for n in params}, tuple(header["adapters"]),
                      header["adapter_dim"], optimizer, rng, header["metrics_tail"])


def tensor_digests(params: Mapping[str, torch.Tensor]) -> dict[str, str]:
    import hashlib
    return {n: hashlib.sha256(t.detach().contiguous().numpy().tobytes()).hexdigest()
            for n, t in params.items()}


# ---------------------------------------------------------------- stage runner

@dataclass
class StageConfig:
    steps: int = 1500
    batch: int = 16
    lr: float = 3e-4
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    mask_prob: float = 0.15
    log_every: int = 50
    eval_every: int = 500
    eval_seed: int = 1234

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


@dataclass
class StageData:
    train: list[EncodedSequence]
    valid: list[EncodedSequence] = field(default_factory=list)
    proxy: ProxyTask | None = None


def _forward_loss(model: CompositeModel, batch: Batch, rng: Xoshiro256, cfg: StageConfig,
                  data: StageData, gen: torch.Generator | None, drop: float):
    stage = model.stage
    if stage in (Stage.BACKBONE, Stage.LANG):
        for _ in range(100):
            mb = mlm_corrupt(batch, rng, cfg.mask_prob, model.config.vocab_size)
            if (mb.targets != IGNORE).any():
                break
        out = model.forward(mb.ids, mb.mask, drop=drop, generator=gen)
        return mlm_loss(out.logits, mb.targets)
    if stage is Stage.NER:
        out = model.forward(batch.ids, batch.mask, drop=drop, generator=gen)
        return ttc_loss(out.logits, batch.types)[0]
    rec = make_refinement_proxy(batch, rng, data.proxy.type_filter, data.proxy.table)
    out = model.forward(rec.ids, rec.mask, drop=drop, generator=gen)
    return ttc_loss(out.logits, rec.labels)[0]


def evaluate_stage(model: CompositeModel, seqs: Sequence[EncodedSequence], cfg: StageConfig,
                   proxy: ProxyTask | None = None, batch_size: int = 64) -> dict:
    """Dropout-free validation metrics for the model's own objective."""
    if not seqs:
        return {}
    stage = model.stage
    with torch.no_grad():
        if stage is Stage.FUSION:
            rec = fixed_corruptions(seqs, proxy, cfg.eval_seed)
            logits = torch.cat([model.forward(rec.ids[i:i + batch_size],
                                              rec.mask[i:i + batch_size]).logits
                                for i in range(0, len(rec.ids), batch_size)])
            pred = decode_single_corruption(logits, rec.labels)
            rep = classification_metrics(pred.numpy(), rec.labels.numpy(), IGNORE)
            return {"val_f1": rep.per_class.get(1, {}).get("f1", 0.0)}
        rng = Xoshiro256(cfg.eval_seed)
        total, count, preds, golds = 0.0, 0, [], []
        for i in range(0, len(seqs), batch_size):
            b = collate(seqs[i:i + batch_size])
            if stage is Stage.NER:
                logits = model.forward(b.ids, b.mask).logits
                loss, _ = ttc_loss(logits, b.types)
                n = int((b.types != IGNORE).sum())
                preds.append(logits.argmax(-1).numpy())
                golds.append(b.types.numpy())
            else:
                mb = mlm_corrupt(b, rng, cfg.mask_prob, model.config.vocab_size)
                n = int((mb.targets != IGNORE).sum())
                if n == 0:
                    continue
                loss = mlm_loss(model.forward(mb.ids, mb.mask).logits, mb.targets)
            total += float(loss) * n
            count += n
        out = {"val_loss": total / max(count, 1)}
        if stage is Stage.NER:
            rep = classification_metrics(np.concatenate(preds), np.concatenate(golds), IGNORE)
            out.update(val_accuracy=rep.accuracy, val_macro_f1=rep.macro_f1)
        return out


def _resumable(config: dict) -> dict:
    """Config view that must match for a resume (step target and thread count may change)."""
    out = json.loads(json.dumps(config))
    out.get("stage_config", {}).pop("steps", None)
    out.pop("threads", None)
    return out


def run_stage(model: CompositeModel, data: StageData, cfg: StageConfig, *,
              run_config: dict | None = None, resume: Checkpoint | None = None,
              checkpoint_path=None, metrics_path=None) -> tuple[Checkpoint, list[dict]]:
    """Train ``model``'s trainable subset for ``cfg.steps`` total steps.

    Every random draw comes from one xoshiro256** stream seeded with
    ``cfg.seed`` whose state is checkpointed, so resuming continues the exact
    same trajectory.
    """
    if not data.train:
        raise SynAdaptError(f"stage {model.stage.value} has no training data")
    if model.stage is Stage.FUSION and data.proxy is None:
        raise SynAdaptError("the fusion stage needs the corruption-tagging task")
    config = dict(run_config or {})
    config["encoder"] = model.config.to_dict()
    config["stage_config"] = cfg.to_dict()
    config["stage"] = model.stage.value

    rng = Xoshiro256(cfg.seed)
    opt = OptimizerState()
    start, metrics = 0, []
    if resume is not None:
        if _resumable(resume.config) != _resumable(config):
            raise ConfigError(
                "resume checkpoint was produced with a different config\n"
                f"checkpoint: {json.dumps(resume.config, sort_keys=True)}\n"
                f"run:        {json.dumps(config, sort_keys=True)}")
        if set(resume.params) != set(model.params):
            raise ConfigError("resume checkpoint has a different parameter set")
        with torch.no_grad():
            for n, t in resume.params.items():
                model.params[n].copy_(t)
        opt = resume.optimizer or OptimizerState()
        rng = Xoshiro256.from_state(resume.rng_state)
        start = resume.step
        metrics = list(resume.metrics_tail)

    mask = model.trainable
    drop = model.config.dropout
    n_train = len(data.train)
    all_batch = collate(data.train)
    mf = open(metrics_path, "a" if resume else "w", encoding="utf-8") if metrics_path else None

    def emit(rec):
        metrics.append(rec)
        if mf:
            mf.write(json.dumps(rec, sort_keys=True) + "\n")

    try:
        set_trainable(model.params, mask)
        for step in range(start, cfg.steps):
            gen = torch.Generator().manual_seed(rng.torch_seed())
            idx = torch.tensor([rng.below(n_train) for _ in range(cfg.batch)])
            batch = Batch(all_batch.ids[idx], all_batch.types[idx], all_batch.mask[idx])
            loss = _forward_loss(model, batch, rng, cfg, data, gen, drop)
            assert_finite(loss.detach(), "loss")
            grads = backward(loss, model.params, mask)
            clip_global_norm(grads)
            adam_step(model.params, grads, mask, opt, cfg.lr, cfg.betas, cfg.eps)
            if step % cfg.log_every == 0 or step == cfg.steps - 1:
                rec = {"step": step, "stage": model.stage.value, "loss": float(loss.detach())}
                if cfg.eval_every and step and step % cfg.eval_every == 0 and data.valid:
                    rec.update(evaluate_stage(model, data.valid, cfg, data.proxy))
                emit(rec)
        if cfg.steps > start and data.valid:
            emit({"step": cfg.steps, "stage": model.stage.value,
                  **evaluate_stage(model, data.valid, cfg, data.proxy)})
    finally:
        set_trainable(model.params, {})
        if mf:
            mf.close()

    ckpt = Checkpoint.from_model(model, config, max(cfg.steps, start), optimizer=opt,
                                 rng_state=rng.state(), metrics_tail=metrics[-TAIL:])
    if checkpoint_path is not None:
        save_checkpoint(ckpt, checkpoint_path)
    return ckpt, metrics
