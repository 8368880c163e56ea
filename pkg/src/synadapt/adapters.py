"""Bottleneck adapters, AdapterFusion, and the composite model wiring.

Both the language adapter (MLM-trained) and the NER adapter (type-trained)
use the same block: ``U(ReLU(D h + b_D)) + b_U + r``. During the fusion
stage they run side by side on the same inputs and a per-layer attention
(query from the FFN output, keys/values from adapter outputs) mixes them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import torch

from .core import (EncoderConfig, ParamTree, encoder_forward, encoder_param_shapes,
                   init_from_shapes, trunc_normal)
from .rng import Xoshiro256

ADAPTER_KEYS = ("down_w", "down_b", "up_w", "up_b")
FUSION_KEYS = ("query_w", "query_b", "key_w", "key_b", "value_w", "value_b")
ADAPTER_NAMES = ("lang", "ner")


class Stage(str, Enum):
    BACKBONE = "backbone_pretrain"
    LANG = "lang_adapter"
    NER = "ner_adapter"
    FUSION = "fusion_task"

    @classmethod
    def parse(cls, value: "str | Stage") -> "Stage":
        if isinstance(value, Stage):
            return value
        aliases = {"backbone": cls.BACKBONE, "lang": cls.LANG, "lang-adapter": cls.LANG,
                   "ner": cls.NER, "ner-adapter": cls.NER, "fusion": cls.FUSION}
        if value in aliases:
            return aliases[value]
        return cls(value)


def adapter_param_count(hidden: int, dim: int, layers: int) -> int:
    return layers * (hidden * dim + dim + dim * hidden + hidden)


def fusion_param_count(hidden: int, layers: int) -> int:
    return layers * 3 * (hidden * hidden + hidden)


def init_adapter(hidden: int, dim: int, layers: int, seed: int = 0, name: str = "ner",
                 dtype=torch.float32) -> ParamTree:
    """Down-projection ~ truncated N(0, 0.02); up-projection and its bias are zero,
    so a fresh adapter returns its residual input unchanged."""
    if not 0 < dim < hidden:
        raise ValueError("adapter dim must satisfy 0 < d < h")
    gen = torch.Generator().manual_seed(Xoshiro256(seed).torch_seed())
    params = {}
    for l in range(layers):
        p = f"adapter.{name}.{l}."
        params[p + "down_w"] = trunc_normal((hidden, dim), gen, dtype=dtype)
        params[p + "down_b"] = torch.zeros(dim, dtype=dtype)
        params[p + "up_w"] = torch.zeros(dim, hidden, dtype=dtype)
        params[p + "up_b"] = torch.zeros(hidden, dtype=dtype)
    return params


def init_fusion(hidden: int, layers: int, seed: int = 0, dtype=torch.float32) -> ParamTree:
    """Query/Key ~ N(0, 0.02) (truncated), Value = identity, biases zero."""
    gen = torch.Generator().manual_seed(Xoshiro256(seed).torch_seed())
    params = {}
    for l in range(layers):
        p = f"fusion.{l}."
        params[p + "query_w"] = trunc_normal((hidden, hidden), gen, dtype=dtype)
        params[p + "query_b"] = torch.zeros(hidden, dtype=dtype)
        params[p + "key_w"] = trunc_normal((hidden, hidden), gen, dtype=dtype)
        params[p + "key_b"] = torch.zeros(hidden, dtype=dtype)
        params[p + "value_w"] = torch.eye(hidden, dtype=dtype)
        params[p + "value_b"] = torch.zeros(hidden, dtype=dtype)
    return params


def init_head(hidden: int, classes: int, name: str, seed: int = 0,
              dtype=torch.float32) -> ParamTree:
    gen = torch.Generator().manual_seed(Xoshiro256(seed).torch_seed())
    return {f"head.{name}.w": trunc_normal((hidden, classes), gen, dtype=dtype),
            f"head.{name}.b": torch.zeros(classes, dtype=dtype)}


def layer_slice(params: Mapping[str, torch.Tensor], prefix: str) -> dict[str, torch.Tensor]:
    """``{'down_w': ..., ...}`` for names starting with ``prefix``."""
    return {n[len(prefix):]: t for n, t in params.items() if n.startswith(prefix)}


def adapter_forward(theta: Mapping[str, torch.Tensor], h: torch.Tensor,
                    r: torch.Tensor) -> torch.Tensor:
    """``U(ReLU(D h + b_D)) + b_U + r`` applied row-wise."""
    if h.shape != r.shape:
        raise ValueError(f"hidden {tuple(h.shape)} and residual {tuple(r.shape)} differ")
    if theta["down_w"].shape[0] != h.shape[-1] or theta["up_w"].shape[1] != h.shape[-1]:
        raise ValueError("adapter width does not match the hidden size")
    z = torch.relu(h @ theta["down_w"] + theta["down_b"])
    return z @ theta["up_w"] + theta["up_b"] + r


def fusion_forward(phi: Mapping[str, torch.Tensor], query_h: torch.Tensor,
                   adapter_outputs: Sequence[torch.Tensor]) -> tuple[torch.Tensor, torch.Tensor]:
    """Attention over adapter outputs at every position.

    Returns the fused states (same shape as ``query_h``) and the mixing
    weights (``... x n_adapters``, rows sum to one). No extra residual is
    added: each adapter output already carries it.
    """
    if not adapter_outputs:
        raise ValueError("fusion needs at least one adapter output")
    for a in adapter_outputs:
        if a.shape != query_h.shape:
            raise ValueError(f"adapter output {tuple(a.shape)} != query {tuple(query_h.shape)}")
    a = torch.stack(list(adapter_outputs), dim=-2)             # ... x n x h
    q = query_h @ phi["query_w"] + phi["query_b"]              # ... x h
    k = a @ phi["key_w"] + phi["key_b"]                        # ... x n x h
    v = a @ phi["value_w"] + phi["value_b"]
    scores = (k @ q.unsqueeze(-1)).squeeze(-1) / math.sqrt(query_h.shape[-1])
    weights = torch.softmax(scores, dim=-1)
    fused = (weights.unsqueeze(-1) * v).sum(-2)
    return fused, weights


@dataclass
class ModelOutput:
    logits: torch.Tensor
    hidden_states: list[torch.Tensor]
    attentions: list[torch.Tensor] | None = None
    fusion_weights: list[torch.Tensor] = field(default_factory=list)


_STAGE_HEAD = {Stage.BACKBONE: "mlm", Stage.LANG: "lang", Stage.NER: "ner", Stage.FUSION: "task"}


@dataclass
class CompositeModel:
    """Frozen backbone plus the adapters, fusion, and head a stage needs."""

    config: EncoderConfig
    stage: Stage
    params: ParamTree
    trainable: dict[str, bool]
    adapters: tuple[str, ...] = ()
    adapter_dim: int = 16

    @property
    def head(self) -> str:
        return _STAGE_HEAD[self.stage]

    @property
    def n_classes(self) -> int:
        if self.head in ("mlm", "lang"):
            return self.config.vocab_size
        return self.params[f"head.{self.head}.b"].shape[0]

    def trainable_count(self) -> int:
        return sum(t.numel() for n, t in self.params.items() if self.trainable.get(n))

    def frozen_count(self) -> int:
        return sum(t.numel() for n, t in self.params.items() if not self.trainable.get(n))

    def _hook(self, P, fusion_weights):
        if self.stage is Stage.BACKBONE or not self.adapters:
            return None
        if self.stage is Stage.FUSION:
            def hook(l, h, r):
                outs = [adapter_forward(layer_slice(P, f"adapter.{a}.{l}."), h, r)
                        for a in self.adapters]
                fused, w = fusion_forward(layer_slice(P, f"fusion.{l}."), h, outs)
                fusion_weights.append(w)
                return fused
        else:
            name = self.adapters[0]

            def hook(l, h, r):
                return adapter_forward(layer_slice(P, f"adapter.{name}.{l}."), h, r)
        return hook

    def forward(self, ids: torch.Tensor, mask: torch.Tensor, *, params: ParamTree | None = None,
                use_adapters: bool = True, drop: float = 0.0,
                generator: torch.Generator | None = None,
                return_attention: bool = False) -> ModelOutput:
        P = self.params if params is None else params
        fusion_weights: list[torch.Tensor] = []
        hook = self._hook(P, fusion_weights) if use_adapters else None
        enc = encoder_forward(P, ids, mask, self.config, hook, drop=drop, generator=generator,
                              return_attention=return_attention)
        if self.head == "mlm":
            logits = enc.output @ P["backbone.tok_emb"].T + P["head.mlm.bias"]
        elif self.head == "lang":
            logits = enc.output @ P["backbone.tok_emb"].T + P["head.lang.bias"]
        else:
            logits = enc.output @ P[f"head.{self.head}.w"] + P[f"head.{self.head}.b"]
        return ModelOutput(logits, enc.hidden_states, enc.attentions, fusion_weights)

    def state_bytes(self) -> dict[str, bytes]:
        return {n: t.detach().contiguous().numpy().tobytes() for n, t in self.params.items()}


def _layers_in(params: Mapping[str, torch.Tensor], prefix: str) -> int:
    idx = {int(n[len(prefix):].split(".")[0]) for n in params if n.startswith(prefix)}
    if idx != set(range(len(idx))):
        raise ValueError(f"non-contiguous layer indices under {prefix}")
    return len(idx)


def wire_stack(config: EncoderConfig, backbone: ParamTree, stage: Stage | str,
               adapters: Mapping[str, ParamTree] | None = None, fusion: ParamTree | None = None,
               head: ParamTree | None = None, adapter_dim: int | None = None) -> CompositeModel:
    """Assemble a composite model and its trainable mask for ``stage``.

    backbone stage: everything trainable. Adapter stages: exactly one
    adapter plus its head. Fusion stage: fusion and the task head, with the
    backbone and every adapter frozen.
    """
    stage = Stage.parse(stage)
    adapters = dict(adapters or {})
    expected = set(encoder_param_shapes(config))
    missing = expected - set(backbone)
    if missing:
        raise ValueError(f"backbone is missing {sorted(missing)[:3]}...")
    params: ParamTree = {n: backbone[n] for n in encoder_param_shapes(config)}
    if "head.mlm.bias" in backbone:
        params["head.mlm.bias"] = backbone["head.mlm.bias"]

    names = tuple(a for a in ADAPTER_NAMES if a in adapters) + \
        tuple(sorted(a for a in adapters if a not in ADAPTER_NAMES))
    dims = set()
    for a in names:
        tree = {n: t for n, t in adapters[a].items() if n.startswith(f"adapter.{a}.")}
        if _layers_in(tree, f"adapter.{a}.") != config.layers:
            raise ValueError(f"adapter {a!r} has a different layer count than the backbone")
        dims.add(tree[f"adapter.{a}.0.down_w"].shape[1])
        params.update(tree)
    if fusion is not None and _layers_in(fusion, "fusion.") != config.layers:
        raise ValueError("fusion has a different layer count than the backbone")

    if stage is Stage.BACKBONE:
        if names or fusion:
            raise ValueError("the backbone stage takes no adapters or fusion")
        if "head.mlm.bias" not in params:
            params["head.mlm.bias"] = torch.zeros(config.vocab_size,
                                                  dtype=params["backbone.tok_emb"].dtype)
        trainable = {n: True for n in params}
        return CompositeModel(config, stage, params, trainable, (), adapter_dim or 0)

    if stage in (Stage.LANG, Stage.NER):
        want = "lang" if stage is Stage.LANG else "ner"
        if names != (want,):
            raise ValueError(f"stage {stage.value} needs exactly the {want!r} adapter, got {names}")
        if fusion:
            raise ValueError("adapter stages take no fusion parameters")
    else:
        if not names:
            raise ValueError("the fusion stage needs at least one adapter")
        if fusion is None:
            raise ValueError("the fusion stage needs fusion parameters")
        params.update(fusion)

    head_name = _STAGE_HEAD[stage]
    head = dict(head or {})
    if head_name == "lang" and "head.lang.bias" not in head:
        base = params.get("head.mlm.bias")
        head["head.lang.bias"] = base.clone() if base is not None else torch.zeros(
            config.vocab_size, dtype=params["backbone.tok_emb"].dtype)
    head = {n: t for n, t in head.items() if n.startswith(f"head.{head_name}.")}
    if not head:
        raise ValueError(f"stage {stage.value} needs a '{head_name}' head")
    params.update(head)
    params.pop("head.mlm.bias", None)

    trainable = {n: False for n in params}
    for n in params:
        if n.startswith(f"head.{head_name}."):
            trainable[n] = True
        elif stage is Stage.FUSION and n.startswith("fusion."):
            trainable[n] = True
        elif stage is not Stage.FUSION and n.startswith(f"adapter.{names[0]}."):
            trainable[n] = True
    dim = adapter_dim or (dims.pop() if len(dims) == 1 else 0)
    return CompositeModel(config, stage, params, trainable, names, dim)


def fresh_backbone(config: EncoderConfig, seed: int = 0, dtype=torch.float32) -> ParamTree:
    params = init_from_shapes(encoder_param_shapes(config), seed, dtype)
    params["head.mlm.bias"] = torch.zeros(config.vocab_size, dtype=dtype)
    return params
