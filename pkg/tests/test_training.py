import math

import pytest
import torch

import oracles
from synadapt.adapters import fresh_backbone, init_adapter, init_fusion, init_head, wire_stack
from synadapt.errors import ConfigError, FormatError, SynAdaptError
from synadapt.rng import Xoshiro256
from synadapt.syntax import IGNORE
from synadapt.tokenizer import MASK, N_SPECIAL, EncodedSequence
from synadapt.training import (Batch, Checkpoint, OptimizerState, ProxyTask, ReplacementTable,
                               StageConfig, StageData, adam_step, clip_global_norm, collate,
                               load_checkpoint, make_refinement_proxy, mlm_corrupt, mlm_loss,
                               most_frequent_identifier_type, run_stage, save_checkpoint,
                               tensor_digests, ttc_loss)


def _batch(n_seq=4, n=10, vocab=50, seed=0):
    g = torch.Generator().manual_seed(seed)
    ids = torch.randint(N_SPECIAL, vocab, (n_seq, n), generator=g)
    ids[:, 0] = 0
    return Batch(ids, torch.zeros_like(ids), torch.ones_like(ids))


# ------------------------------------------------------------------ corruption

def test_mask_prob_zero_is_identity():
    b = _batch()
    out = mlm_corrupt(b, Xoshiro256(1), 0.0, 50)
    assert torch.equal(out.ids, b.ids) and torch.all(out.targets == IGNORE)


def test_mask_prob_one_forced_mask_branch():
    b = _batch()
    out = mlm_corrupt(b, Xoshiro256(1), 1.0, 50, split=(1.0, 0.0, 0.0))
    assert torch.all(out.ids[:, 1:] == MASK) and torch.all(out.ids[:, 0] == 0)
    assert torch.equal(out.targets[:, 1:], b.ids[:, 1:])
    assert torch.all(out.targets[:, 0] == IGNORE)


def test_mask_rate_within_binomial_bounds():
    b = _batch(n_seq=100, n=101, seed=3)
    out = mlm_corrupt(b, Xoshiro256(2), 0.15, 50)
    frac = float((out.targets != IGNORE).sum()) / (100 * 100)
    assert 0.13 <= frac <= 0.17


def test_corruption_is_seeded():
    b = _batch()
    a, c = mlm_corrupt(b, Xoshiro256(5)), mlm_corrupt(b, Xoshiro256(5))
    assert torch.equal(a.ids, c.ids) and torch.equal(a.targets, c.targets)


# ------------------------------------------------------------------ losses

def test_uniform_ttc_loss_is_log_k():
    loss, _ = ttc_loss(torch.zeros(2, 3, 3), torch.tensor([[0, 1, 2], [2, IGNORE, 0]]))
    assert loss.item() == pytest.approx(math.log(3), abs=1e-6)
    assert round(math.log(3), 6) == 1.098612


def test_ttc_loss_hand_computed():
    logits = torch.log(torch.tensor([[[0.7, 0.2, 0.1]]], dtype=torch.float64))
    loss, correct = ttc_loss(logits, torch.tensor([[0]]))
    assert loss.item() == pytest.approx(-math.log(0.7), abs=1e-9)
    assert round(-math.log(0.7), 6) == 0.356675 and correct.tolist() == [[True]]


def test_saturated_ttc_loss():
    logits = torch.zeros(1, 4, 5, dtype=torch.float64)
    logits[0, 2, 3] = 30.0
    loss, _ = ttc_loss(logits, torch.tensor([[IGNORE, IGNORE, 3, IGNORE]]))
    assert loss.item() < 1e-9


def test_uniform_mlm_loss():
    targets = torch.full((1, 3), IGNORE)
    targets[0, 1] = 17
    assert mlm_loss(torch.zeros(1, 3, 4096), targets).item() == pytest.approx(8.3178, abs=1e-4)


def test_no_counted_positions_is_an_error():
    with pytest.raises(SynAdaptError):
        mlm_loss(torch.zeros(1, 3, 5), torch.full((1, 3), IGNORE))


def test_losses_match_scalar_oracle():
    g = torch.Generator().manual_seed(4)
    for _ in range(20):
        logits = torch.randn(2, 5, 6, generator=g, dtype=torch.float64) * 3
        targets = torch.randint(0, 6, (2, 5), generator=g)
        targets[torch.rand(2, 5, generator=g) < 0.3] = IGNORE
        targets[0, 0] = 1
        want = oracles.cross_entropy(logits.tolist(), targets.tolist())
        assert ttc_loss(logits, targets)[0].item() == pytest.approx(want, abs=1e-6)
        assert mlm_loss(logits, targets).item() == pytest.approx(want, abs=1e-6)


# ------------------------------------------------------------------ proxy

def _seq(ids, types):
    n = len(ids)
    return EncodedSequence(tuple(ids), tuple(types), (1,) * n, tuple(range(n)))


def test_single_identifier_position_is_always_chosen():
    seqs = [_seq([0, 10, 11, 12, 1], [IGNORE, 5, 0, 5, IGNORE]),
            _seq([0, 13, 11, 14, 1], [IGNORE, 5, 0, 5, IGNORE])]
    table = ReplacementTable(seqs + [_seq([0, 20, 1], [IGNORE, 0, IGNORE])])
    rng = Xoshiro256(0)
    for _ in range(50):
        rec = make_refinement_proxy(collate(seqs), rng, {0}, table)
        assert rec.positions == [2, 2]
        assert rec.labels[0].tolist() == [IGNORE, 0, 1, 0, IGNORE]


def test_replacement_always_differs(tiny_data):
    cfg, vocab, seqs = tiny_data
    target = most_frequent_identifier_type(vocab.names, vocab.counts)
    table = ReplacementTable(seqs)
    batch = collate(seqs[:20])
    rng = Xoshiro256(9)
    changed = 0
    for _ in range(50):
        rec = make_refinement_proxy(batch, rng, {target}, table)
        for b, p in enumerate(rec.positions):
            if p >= 0:
                assert int(rec.ids[b, p]) != int(batch.ids[b, p])
                assert int(batch.types[b, p]) == target
                changed += 1
    assert changed >= 1000


def test_empty_eligible_set_is_skipped():
    seqs = [_seq([0, 10, 1], [IGNORE, 5, IGNORE])]
    rec = make_refinement_proxy(collate(seqs), Xoshiro256(0), {0}, ReplacementTable(seqs))
    assert rec.skipped == [True] and set(rec.labels[0].tolist()) <= {0, IGNORE}


# ------------------------------------------------------------------ optimizer

def test_adam_zero_grad_and_frozen():
    p = {"a": torch.ones(3), "b": torch.ones(3)}
    adam_step(p, {"a": torch.zeros(3), "b": torch.ones(3)}, {"a": True}, OptimizerState(), 0.1)
    assert torch.equal(p["a"], torch.ones(3)) and torch.equal(p["b"], torch.ones(3))


def test_adam_first_step():
    p = {"w": torch.zeros(1, dtype=torch.float64)}
    adam_step(p, {"w": torch.ones(1, dtype=torch.float64)}, {"w": True}, OptimizerState(), 0.1)
    assert p["w"].item() == pytest.approx(-0.1, abs=1e-6)


def test_clip_global_norm():
    g = {"a": torch.tensor([3.0]), "b": torch.tensor([4.0])}
    assert clip_global_norm(g) == pytest.approx(5.0)
    assert math.hypot(g["a"].item(), g["b"].item()) == pytest.approx(1.0, abs=1e-6)


# ------------------------------------------------------------------ stages

def _ner_model(tiny_data, seed=0):
    cfg, vocab, _ = tiny_data
    return wire_stack(cfg, fresh_backbone(cfg, seed), "ner",
                      {"ner": init_adapter(cfg.hidden, 4, cfg.layers, seed + 1, "ner")},
                      head=init_head(cfg.hidden, len(vocab), "ner", seed + 2))


def _scfg(steps, **kw):
    return StageConfig(steps=steps, batch=8, lr=3e-3, seed=5, log_every=10, eval_every=0, **kw)


def test_zero_steps_is_a_no_op(tiny_data, tmp_path):
    m = _ner_model(tiny_data)
    before = {n: t.clone() for n, t in m.params.items()}
    ckpt, metrics = run_stage(m, StageData(tiny_data[2][:20], []), _scfg(0),
                              checkpoint_path=tmp_path / "c.ckpt")
    assert metrics == []
    again = load_checkpoint(tmp_path / "c.ckpt")
    assert all(torch.equal(before[n], again.params[n]) for n in before)


def test_ner_training_lowers_loss_and_keeps_backbone(tiny_data):
    seqs = tiny_data[2][:50]
    m = _ner_model(tiny_data)
    frozen = {n for n, v in m.trainable.items() if not v}
    digests = {n: d for n, d in tensor_digests(m.params).items() if n in frozen}
    b = collate(seqs)

    def full_loss():
        with torch.no_grad():
            return ttc_loss(m.forward(b.ids, b.mask).logits, b.types)[0].item()
    start = full_loss()
    run_stage(m, StageData(seqs, []), _scfg(200))
    assert full_loss() < start
    assert {n: d for n, d in tensor_digests(m.params).items() if n in frozen} == digests


def test_fusion_stage_requires_proxy(tiny_data):
    cfg, vocab, seqs = tiny_data
    bb = fresh_backbone(cfg)
    m = wire_stack(cfg, bb, "fusion", {"lang": init_adapter(cfg.hidden, 4, cfg.layers, 0, "lang")},
                   init_fusion(cfg.hidden, cfg.layers), init_head(cfg.hidden, 2, "task"))
    with pytest.raises(SynAdaptError):
        run_stage(m, StageData(seqs, []), _scfg(1))
    task = ProxyTask((most_frequent_identifier_type(vocab.names, vocab.counts),),
                     ReplacementTable(seqs))
    ckpt, _ = run_stage(m, StageData(seqs, seqs[:8], task), _scfg(3))
    assert ckpt.step == 3


def test_checkpoint_save_load_save_identical(tiny_data, tmp_path):
    m = _ner_model(tiny_data)
    ckpt, _ = run_stage(m, StageData(tiny_data[2][:20], []), _scfg(5))
    a = save_checkpoint(ckpt, tmp_path / "a.ckpt").read_bytes()
    b = save_checkpoint(load_checkpoint(tmp_path / "a.ckpt"), tmp_path / "b.ckpt").read_bytes()
    assert a == b


def test_resume_matches_uninterrupted(tiny_data, tmp_path):
    seqs = tiny_data[2][:30]
    full, _ = run_stage(_ner_model(tiny_data), StageData(seqs, []), _scfg(100))
    half, _ = run_stage(_ner_model(tiny_data), StageData(seqs, []), _scfg(50),
                        checkpoint_path=tmp_path / "h.ckpt")
    resumed, _ = run_stage(_ner_model(tiny_data), StageData(seqs, []), _scfg(100),
                           resume=load_checkpoint(tmp_path / "h.ckpt"))
    assert all(torch.equal(full.params[n], resumed.params[n]) for n in full.params)
    assert full.optimizer.step == resumed.optimizer.step == 100


def test_resume_with_different_config_fails(tiny_data, tmp_path):
    seqs = tiny_data[2][:10]
    run_stage(_ner_model(tiny_data), StageData(seqs, []), _scfg(2),
              checkpoint_path=tmp_path / "c.ckpt")
    other = StageConfig(steps=4, batch=8, lr=1e-2, seed=5, log_every=10, eval_every=0)
    with pytest.raises(ConfigError, match="checkpoint:"):
        run_stage(_ner_model(tiny_data), StageData(seqs, []), other,
                  resume=load_checkpoint(tmp_path / "c.ckpt"))


def test_truncated_checkpoint_is_rejected(tiny_data, tmp_path):
    ckpt = Checkpoint.from_model(_ner_model(tiny_data), {"k": 1}, 0)
    data = save_checkpoint(ckpt, tmp_path / "c.ckpt").read_bytes()
    (tmp_path / "t.ckpt").write_bytes(data[:len(data) // 2])
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "t.ckpt")
    (tmp_path / "x.ckpt").write_bytes(b"garbage\n")
    with pytest.raises(FormatError):
        load_checkpoint(tmp_path / "x.ckpt")


def test_checkpoint_config_mismatch(tiny_data, tmp_path):
    ckpt = Checkpoint.from_model(_ner_model(tiny_data), {"k": 1}, 0)
    save_checkpoint(ckpt, tmp_path / "c.ckpt")
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "c.ckpt", expect_config={"k": 2})
