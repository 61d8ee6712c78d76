import json
import math

import numpy as np
import pytest
import torch

from graphpde.data import generate_dataset
from graphpde.families import FamilySpec
from graphpde.fields import grid_for
from graphpde.model import PdeSurrogate, profile
from graphpde.trainer import (PreparedSet, ScalingReport, TrainConfig, TrainingDiverged, CheckpointError,
                              evaluate, finetune, load_checkpoint, lr_at, nrmse, nrmse_loss,
                              save_checkpoint, scaling_study, train)


@pytest.fixture(scope="module")
def small():
    s, _ = generate_dataset(FamilySpec("advection"), 6, seed=0, grid=grid_for(True, 16, 6))
    return s


def tiny_cfg(**kw):
    base = dict(profile="tiny", batch_size=3, lr=1e-3, warmup_epochs=0.5, iterations=4, n_points=32, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_nrmse_examples():
    u = np.array([1.0, -2.0, 3.0])
    assert nrmse(u, u) == 0.0
    assert np.isclose(nrmse(u, np.zeros(3)), 1.0)
    assert np.isclose(nrmse(u, 2 * u), 1.0)
    with pytest.raises(ValueError):
        nrmse(np.zeros(3), u)
    with pytest.raises(ValueError):
        nrmse(u, u[:2])


def test_nrmse_loss_matches_numpy():
    rng = np.random.default_rng(0)
    lab, pred = rng.normal(size=(4, 1, 20)), rng.normal(size=(4, 1, 20))
    ref = np.mean([nrmse(lab[i], pred[i]) for i in range(4)])
    assert np.isclose(float(nrmse_loss(torch.tensor(pred), torch.tensor(lab))), ref, rtol=1e-12)


def test_lr_schedule_closed_form():
    base, w, total = 1e-3, 10, 110
    assert lr_at(0, base, w, total) == 0.0
    assert np.isclose(lr_at(5, base, w, total), base / 2)
    assert np.isclose(lr_at(w, base, w, total), base)
    assert np.isclose(lr_at(60, base, w, total), base / 2)
    assert abs(lr_at(total, base, w, total)) < 1e-18
    for s in range(w, total):
        expect = 0.5 * base * (1 + math.cos(math.pi * (s - w) / (total - w)))
        assert np.isclose(lr_at(s, base, w, total), expect, rtol=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=-1)
    with pytest.raises(ValueError):
        TrainConfig.from_dict({"learning_rate": 1e-3})


def test_one_adam_step_decreases_loss(small):
    torch.manual_seed(0)
    model = PdeSurrogate(profile("desk"))
    data = PreparedSet(small, model.cfg)
    batch, coords, labels = data.full(list(range(len(small))))[:3]
    opt = torch.optim.Adam(model.parameters(), lr=1e-4)
    before = nrmse_loss(model(batch, coords), labels)
    opt.zero_grad()
    before.backward()
    opt.step()
    with torch.no_grad():
        after = nrmse_loss(model(batch, coords), labels)
    assert float(after) < float(before)


def test_checkpoint_round_trip(tmp_path, small):
    res = train(tiny_cfg(), small, run_dir=tmp_path / "run")
    ck = load_checkpoint(res.checkpoint)
    assert ck.digest == res.digest and ck.step == 4
    for (k, a), (k2, b) in zip(res.model.state_dict().items(), ck.model.state_dict().items()):
        assert k == k2 and torch.equal(a, b)
    assert ck.optimizer_state and len(ck.optimizer_state["state"]) == len(list(res.model.parameters()))
    again = save_checkpoint(tmp_path / "again", ck.model, ck.train_config, ck.step, extra=None)
    assert isinstance(again, str) and len(again) == 64


def test_checkpoint_corruption(tmp_path, small):
    res = train(tiny_cfg(iterations=1), small, run_dir=tmp_path / "run")
    f = tmp_path / "run" / "checkpoint" / "tensors.bin"
    f.write_bytes(f.read_bytes()[:-4])
    with pytest.raises(CheckpointError):
        load_checkpoint(res.checkpoint)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "missing")


def test_training_deterministic(tmp_path, small):
    a = train(tiny_cfg(), small, run_dir=tmp_path / "a")
    b = train(tiny_cfg(), small, run_dir=tmp_path / "b")
    assert a.digest == b.digest
    assert [r["loss"] for r in a.history if r["event"] == "step"] == \
           [r["loss"] for r in b.history if r["event"] == "step"]
    c = train(tiny_cfg(seed=1), small, run_dir=tmp_path / "c")
    assert c.digest != a.digest


def test_metrics_log_written(tmp_path, small):
    train(tiny_cfg(), small, val_set=small[:2], run_dir=tmp_path / "r")
    recs = [json.loads(l) for l in (tmp_path / "r" / "metrics.jsonl").read_text().splitlines()]
    events = {r["event"] for r in recs}
    assert {"step", "val", "done"} <= events
    assert recs[0]["lr"] == 0.0


def test_finetune_zero_steps_is_identity(tmp_path, small):
    base = train(tiny_cfg(), small, run_dir=tmp_path / "base")
    ft = finetune(base.checkpoint, small, {"iterations": 0}, run_dir=tmp_path / "ft")
    for a, b in zip(base.model.parameters(), ft.model.parameters()):
        assert torch.equal(a, b)
    start = [r for r in ft.history if r["event"] == "start"][0]
    assert start["base_digest"] == base.digest
    with pytest.raises(CheckpointError):
        finetune(base.checkpoint, small, {"profile": "desk"})


def test_finetune_changes_weights(tmp_path, small):
    base = train(tiny_cfg(), small, run_dir=tmp_path / "base")
    ft = finetune(base.checkpoint, small, {"iterations": 3, "lr": 1e-2})
    assert any(not torch.equal(a, b) for a, b in zip(base.model.parameters(), ft.model.parameters()))


def test_evaluate_stable(small):
    torch.manual_seed(0)
    model = PdeSurrogate(profile("tiny"))
    model.train()
    a, b = evaluate(model, small), evaluate(model, small)
    assert a.mean == b.mean and a.per_sample == b.per_sample
    assert model.training
    assert np.isclose(a.mean, np.mean(a.per_sample))
    with pytest.raises(ValueError):
        evaluate(model, [])


def test_divergence_saves_last_good(tmp_path, small):
    torch.manual_seed(0)
    model = PdeSurrogate(profile("tiny"))
    with torch.no_grad():
        model.decoder.last.bias.fill_(float("nan"))
    with pytest.raises(TrainingDiverged):
        train(tiny_cfg(), small, run_dir=tmp_path / "d", model=model)
    assert (tmp_path / "d" / "checkpoint-last-good" / "manifest.json").exists()


def test_scaling_study_report(tmp_path, small):
    rep = scaling_study(tiny_cfg(iterations=2), small, small[:2], [2, 4, 6], run_dir=tmp_path / "s")
    assert [r["size"] for r in rep.rows] == [2, 4, 6]
    saved = json.loads((tmp_path / "s" / "scaling_report.json").read_text())
    assert saved == json.loads(json.dumps(rep.as_dict()))
    # identical sizes: no spread, no fit
    same = scaling_study(tiny_cfg(iterations=2), small, small[:2], [3, 3, 3])
    assert math.isnan(same.alpha)
    assert len({r["test_nrmse"] for r in same.rows}) == 1
    with pytest.raises(ValueError):
        scaling_study(tiny_cfg(), small, small, [2, 4])
    with pytest.raises(ValueError):
        scaling_study(tiny_cfg(iterations=None), small, small, [2, 3, 4])


def test_strictly_decreasing():
    rows = [{"size": s, "test_nrmse": e} for s, e in ((100, 0.5), (400, 0.4), (1600, 0.3))]
    assert ScalingReport(rows, 0, 0, 0, 0).strictly_decreasing()
    rows[2]["test_nrmse"] = 0.4
    assert not ScalingReport(rows, 0, 0, 0, 0).strictly_decreasing()


def test_periodic_shift_is_exact_symmetry():
    from graphpde import dsl
    from graphpde.data import DataSample
    from graphpde.solvers import solve_reference
    from graphpde.trainer import periodic_shift

    s = generate_dataset(FamilySpec("advection"), 1, seed=3, grid=grid_for(True, 16, 6))[0][0]
    other = generate_dataset(FamilySpec("dcr", periodic=False), 1, seed=3, grid=grid_for(False, 16, 6))[0][0]
    k, n = 5, 16
    g = s.payloads["g"]
    rolled = {"c": s.payloads["c"], "g": dsl.FieldSamples(g.coords, np.roll(g.values, k))}
    u2 = solve_reference(dsl.parse(s.text, rolled), rolled, s.grid).u
    data = PreparedSet([s, other], profile("tiny"), torch.float64)
    batch, coords, labels, _ = data.full([0, 1])
    delta = torch.tensor([2.0 * k / n, 0.7], dtype=torch.float64)
    b2, c2 = periodic_shift(batch, coords, data.periodic, delta=delta)
    # field samples of the periodic sample are those of the rolled initial value
    own = (b2.field_owner == 0) & b2.field_spatial
    got = sorted(map(tuple, np.round(b2.field_pts[own][0].numpy(), 6)))
    want = sorted(map(tuple, np.round(np.stack([g.coords, np.roll(g.values, k)], -1).astype(float), 6)))
    assert got == want
    # labels at the translated query points match the solution of the rolled problem
    x = s.x.astype(float)
    cols = np.rint((c2[0, :n * 6, 1].numpy() - x[0]) / (2.0 / n)).astype(int) % n
    rows = np.repeat(np.arange(6), n)
    assert np.allclose(labels[0, 0, :n * 6].numpy(), u2[rows, cols], atol=1e-5)
    # the non-periodic sample is untouched
    m = b2.field_owner == 1
    assert torch.equal(b2.field_pts[m], batch.field_pts[m]) and torch.equal(c2[1], coords[1])
