"""Pre-layer-norm transformer encoder written as plain functions over a
parameter dictionary, plus gradient extraction and a finite-difference checker.

Parameters live in a flat ``dict[str, Tensor]`` keyed by dotted names
(``backbone.layer0.wq``). A trainable mask is a ``dict[str, bool]`` over the
same keys; gradients come back as a dict over the mask-true subset.
Autodiff is torch's reverse mode; float32 for training, float64 for checks.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import torch

from .rng import Xoshiro256

ParamTree = dict[str, torch.Tensor]
LayerHook = Callable[[int, torch.Tensor, torch.Tensor], torch.Tensor]

INIT_STD = 0.02
LN_EPS = 1e-5


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int = 4096
    hidden: int = 64
    layers: int = 4
    heads: int = 4
    ffn: int = 256
    max_len: int = 128
    dropout: float = 0.1

    def __post_init__(self):
        for name in ("vocab_size", "hidden", "layers", "heads", "ffn", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.hidden % self.heads:
            raise ValueError("hidden size must be divisible by the number of heads")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")

    @property
    def head_dim(self) -> int:
        return self.hidden // self.heads

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "EncoderConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def encoder_param_shapes(config: EncoderConfig) -> dict[str, tuple[int, ...]]:
    h, f = config.hidden, config.ffn
    shapes = {
        "backbone.tok_emb": (config.vocab_size, h),
        "backbone.pos_emb": (config.max_len, h),
    }
    for i in range(config.layers):
        p = f"backbone.layer{i}."
        shapes.update({
            p + "ln1_g": (h,), p + "ln1_b": (h,),
            p + "wq": (h, h), p + "bq": (h,),
            p + "wk": (h, h), p + "bk": (h,),
            p + "wv": (h, h), p + "bv": (h,),
            p + "wo": (h, h), p + "bo": (h,),
            p + "ln2_g": (h,), p + "ln2_b": (h,),
            p + "w1": (h, f), p + "b1": (f,),
            p + "w2": (f, h), p + "b2": (h,),
        })
    shapes["backbone.lnf_g"] = (h,)
    shapes["backbone.lnf_b"] = (h,)
    return shapes


def encoder_param_count(config: EncoderConfig) -> int:
    """Closed-form size of the backbone."""
    v, m, h, f, n = config.vocab_size, config.max_len, config.hidden, config.ffn, config.layers
    per_layer = 4 * (h * h + h) + (h * f + f) + (f * h + h) + 4 * h
    return v * h + m * h + n * per_layer + 2 * h


def trunc_normal(shape, generator: torch.Generator, std: float = INIT_STD,
                 dtype=torch.float32) -> torch.Tensor:
    t = torch.empty(shape, dtype=dtype)
    return torch.nn.init.trunc_normal_(t, 0.0, std, -2 * std, 2 * std, generator=generator)


def init_from_shapes(shapes: Mapping[str, tuple[int, ...]], seed: int,
                     dtype=torch.float32) -> ParamTree:
    """Weights ~ truncated N(0, 0.02); biases and LN shifts 0; LN gains 1."""
    gen = torch.Generator().manual_seed(Xoshiro256(seed).torch_seed())
    params = {}
    for name, shape in shapes.items():
        leaf = name.rsplit(".", 1)[1]
        if leaf.endswith("_g"):
            params[name] = torch.ones(shape, dtype=dtype)
        elif len(shape) == 1:
            params[name] = torch.zeros(shape, dtype=dtype)
        else:
            params[name] = trunc_normal(shape, gen, dtype=dtype)
    return params


def init_encoder(config: EncoderConfig, seed: int = 0, dtype=torch.float32) -> ParamTree:
    return init_from_shapes(encoder_param_shapes(config), seed, dtype)


def layer_norm(x: torch.Tensor, gain: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    mu = x.mean(-1, keepdim=True)
    var = ((x - mu) ** 2).mean(-1, keepdim=True)
    return (x - mu) / torch.sqrt(var + LN_EPS) * gain + bias


def gelu(x: torch.Tensor) -> torch.Tensor:
    return 0.5 * x * (1.0 + torch.erf(x / math.sqrt(2.0)))


def dropout(x: torch.Tensor, p: float, generator: torch.Generator | None) -> torch.Tensor:
    if p <= 0.0 or generator is None:
        return x
    keep = torch.rand(x.shape, generator=generator) >= p
    return x * keep.to(x.dtype) / (1.0 - p)


@dataclass
class EncoderOutput:
    hidden_states: list[torch.Tensor]          # L+1 tensors, B x N x h
    output: torch.Tensor                       # final layer norm of the top state
    attentions: list[torch.Tensor] | None = None   # L tensors, B x H x N x N
    extras: dict = field(default_factory=dict)


def encoder_forward(params: Mapping[str, torch.Tensor], ids: torch.Tensor, mask: torch.Tensor,
                    config: EncoderConfig, hook: LayerHook | None = None, *,
                    drop: float = 0.0, generator: torch.Generator | None = None,
                    return_attention: bool = False) -> EncoderOutput:
    """Run the encoder on ``ids`` (B x N) with ``mask`` (B x N, 1 = real token).

    Each block computes ``r = x + MHA(LN(x))`` and ``y = FFN(LN(r))``. Without a
    hook the block output is ``r + y``; with one it is ``hook(layer, y, r + y)``.
    """
    if ids.dim() == 1:
        ids, mask = ids[None], mask[None]
    b, n = ids.shape
    if n > config.max_len:
        raise ValueError(f"sequence length {n} exceeds max_len {config.max_len}")
    P = params
    H, dh = config.heads, config.head_dim
    key_ok = mask.bool()[:, None, None, :]

    x = P["backbone.tok_emb"][ids] + P["backbone.pos_emb"][:n][None]
    x = dropout(x, drop, generator)
    states, attns = [x], []
    for i in range(config.layers):
        p = f"backbone.layer{i}."
        a = layer_norm(x, P[p + "ln1_g"], P[p + "ln1_b"])
        q = (a @ P[p + "wq"] + P[p + "bq"]).view(b, n, H, dh).transpose(1, 2)
        k = (a @ P[p + "wk"] + P[p + "bk"]).view(b, n, H, dh).transpose(1, 2)
        v = (a @ P[p + "wv"] + P[p + "bv"]).view(b, n, H, dh).transpose(1, 2)
        scores = (q @ k.transpose(-1, -2)) / math.sqrt(dh)
        scores = scores.masked_fill(~key_ok, float("-inf"))
        probs = torch.softmax(scores, dim=-1)
        if return_attention:
            attns.append(probs.detach())
        ctx = (dropout(probs, drop, generator) @ v).transpose(1, 2).reshape(b, n, -1)
        r = x + dropout(ctx @ P[p + "wo"] + P[p + "bo"], drop, generator)
        f = layer_norm(r, P[p + "ln2_g"], P[p + "ln2_b"])
        y = dropout(gelu(f @ P[p + "w1"] + P[p + "b1"]) @ P[p + "w2"] + P[p + "b2"],
                    drop, generator)
        x = hook(i, y, r + y) if hook is not None else r + y
        states.append(x)
    out = layer_norm(x, P["backbone.lnf_g"], P["backbone.lnf_b"])
    return EncoderOutput(states, out, attns if return_attention else None)


def set_trainable(params: ParamTree, mask: Mapping[str, bool] | None) -> ParamTree:
    """Flag mask-true tensors for gradient tracking (in place) and return ``params``."""
    for name, t in params.items():
        t.requires_grad_(bool(mask is None or mask.get(name, False)))
    return params


def backward(loss: torch.Tensor, params: Mapping[str, torch.Tensor],
             mask: Mapping[str, bool] | None = None) -> dict[str, torch.Tensor]:
    """Exact gradients of a scalar ``loss`` for every trainable tensor in ``params``."""
    if loss.dim() != 0:
        raise ValueError(f"loss must be a scalar, got shape {tuple(loss.shape)}")
    names = [n for n, t in params.items()
             if (mask is None or mask.get(n, False)) and t.requires_grad]
    if not names:
        return {}
    grads = torch.autograd.grad(loss, [params[n] for n in names], allow_unused=True)
    return {n: (g if g is not None else torch.zeros_like(params[n])).detach()
            for n, g in zip(names, grads)}


def default_group(name: str) -> str:
    parts = name.split(".")
    return ".".join(parts[:2]) if parts[0] in ("adapter", "head") else parts[0]


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: tuple[str, int] | None
    checked: int
    per_group: dict[str, float]
    tolerance: float
    below_resolution: int = 0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def finite_difference_check(loss_fn: Callable[[ParamTree], torch.Tensor], params: ParamTree,
                            mask: Mapping[str, bool] | None = None, epsilon: float = 1e-6,
                            tolerance: float = 1e-4, coords_per_group: int = 200, seed: int = 0,
                            grads: Mapping[str, torch.Tensor] | None = None,
                            group_fn: Callable[[str], str] = default_group,
                            roundoff: float = 8.0) -> GradCheckReport:
    """Compare analytic gradients with central differences.

    Up to ``coords_per_group`` coordinates are drawn (deterministically from
    ``seed``) from each parameter group; groups smaller than that are checked
    exhaustively. Relative error is ``|a - n| / max(1e-8, |a| + |n|)``. When
    both ``a`` and ``n`` lie below the difference quotient's round-off level,
    ``roundoff * eps_mach * (|f+| + |f-|) / (2 * epsilon)``, the gradient is
    zero to the method's resolution (an attention key bias, for one) and the
    coordinate scores 0; these are counted in ``below_resolution``. Pass
    ``grads`` to check externally supplied gradients instead of ``backward``.
    """
    if not 1e-6 <= epsilon <= 1e-2:
        raise ValueError("epsilon must lie in [1e-6, 1e-2]")
    names = [n for n in params if mask is None or mask.get(n, False)]
    for n in names:
        if params[n].dtype != torch.float64:
            raise ValueError(f"finite-difference checks need float64 parameters ({n})")

    with torch.no_grad():
        set_trainable(params, {})
        f0, f1 = loss_fn(params).item(), loss_fn(params).item()
    if f0 != f1:
        raise RuntimeError("loss is not deterministic; disable dropout or pin its seed")
    if grads is None:
        set_trainable(params, {n: True for n in names})
        grads = backward(loss_fn(params), params, {n: True for n in names})
        set_trainable(params, {})

    groups: dict[str, list[tuple[str, int]]] = {}
    for n in names:
        groups.setdefault(group_fn(n), []).extend((n, i) for i in range(params[n].numel()))
    rng = Xoshiro256(seed)
    worst, max_err, per_group, checked, unresolved = None, 0.0, {}, 0, 0
    eps_mach = torch.finfo(torch.float64).eps
    with torch.no_grad():
        for g in sorted(groups):
            coords = groups[g]
            if len(coords) > coords_per_group:
                coords = list(coords)
                for j in range(coords_per_group):   # partial Fisher-Yates
                    k = j + rng.below(len(coords) - j)
                    coords[j], coords[k] = coords[k], coords[j]
                coords = coords[:coords_per_group]
            g_err = 0.0
            for name, idx in coords:
                flat = params[name].view(-1)
                orig = flat[idx].item()
                flat[idx] = orig + epsilon
                fp = loss_fn(params).item()
                flat[idx] = orig - epsilon
                fm = loss_fn(params).item()
                flat[idx] = orig
                num = (fp - fm) / (2 * epsilon)
                ana = grads[name].reshape(-1)[idx].item() if name in grads else 0.0
                resolution = roundoff * eps_mach * (abs(fp) + abs(fm)) / (2 * epsilon)
                if abs(ana) <= resolution and abs(num) <= resolution:
                    err = 0.0   # both zero as far as the difference quotient can tell
                    unresolved += 1
                else:
                    err = abs(ana - num) / max(1e-8, abs(ana) + abs(num))
                checked += 1
                g_err = max(g_err, err)
                if worst is None or err > max_err:
                    max_err, worst = err, (name, idx)
            per_group[g] = g_err
    return GradCheckReport(max_err, worst, checked, per_group, tolerance, unresolved)


def cast(params: Mapping[str, torch.Tensor], dtype) -> ParamTree:
    return {n: t.detach().to(dtype).clone() for n, t in params.items()}


def assert_finite(t: torch.Tensor, what: str) -> torch.Tensor:
    if not torch.isfinite(t).all():
        raise FloatingPointError(f"non-finite values in {what}")
    return t
