"""Training, evaluation, checkpoints and dataset-size scaling studies."""
from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import torch

from .data import DataSample
from .model import GraphBatch, ModelConfig, PdeSurrogate, collate, prepare_graph, profile

CKPT_SCHEMA = "graphpde-checkpoint"
CKPT_VERSION = 1


class TrainingDiverged(FloatingPointError):
    """Non-finite loss; the last finite state was checkpointed."""


class CheckpointError(RuntimeError):
    pass


def nrmse(label, pred) -> float:
    """Relative L2 error ``||label - pred|| / ||label||`` over all grid points."""
    label = np.asarray(label, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if label.shape != pred.shape:
        raise ValueError(f"shape mismatch {label.shape} vs {pred.shape}")
    den = np.linalg.norm(label)
    if den == 0:
        raise ValueError("nRMSE undefined for an all-zero label")
    return float(np.linalg.norm(label - pred) / den)


def nrmse_loss(pred: torch.Tensor, label: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
    """Per-sample nRMSE averaged over the batch; tensors are (B, ...)."""
    diff = pred - label
    if mask is not None:
        diff, label = diff * mask, label * mask
    num = diff.flatten(1).norm(dim=1)
    den = label.flatten(1).norm(dim=1).clamp_min(1e-12)
    return (num / den).mean()


@dataclass(frozen=True)
class TrainConfig:
    profile: str = "desk"
    batch_size: int = 16
    lr: float = 1e-4
    warmup_epochs: float = 1.0
    epochs: int = 10
    iterations: int | None = None  # overrides epochs when set
    n_points: int = 512  # query points per sample per iteration
    seed: int = 0
    double: bool = False
    val_every: int = 1  # epochs
    # random periodic translation of every periodic sample, an exact symmetry of
    # equations whose x-dependence enters only through coefficient fields
    shift_augment: bool = False

    def __post_init__(self):
        if self.batch_size <= 0 or self.lr <= 0 or self.n_points <= 0:
            raise ValueError("batch_size, lr and n_points must be positive")
        if self.warmup_epochs < 0 or self.epochs < 0 or (self.iterations is not None and self.iterations < 0):
            raise ValueError("warmup, epochs and iterations must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown training keys: {sorted(unknown)}")
        return cls(**d)


def lr_at(step: int, base_lr: float, warmup_steps: int, total_steps: int) -> float:
    """Linear warmup from 0, then cosine decay to 0 at ``total_steps``."""
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    frac = min(max(step - warmup_steps, 0) / span, 1.0)
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * frac))


# ---------------------------------------------------------------------------
# data on the model side


class PreparedSet:
    """Graph inputs, query coordinates and labels for a list of samples."""

    def __init__(self, samples: Sequence[DataSample], cfg: ModelConfig, dtype=torch.float32):
        if len(samples) == 0:
            raise ValueError("empty dataset")
        self.dtype = dtype
        self.graphs = [prepare_graph(s.text, s.payloads, cfg) for s in samples]
        self.coords, self.labels, self.shapes = [], [], []
        self.periodic = torch.tensor([s.grid.periodic for s in samples])
        for s in samples:
            tt, xx = np.meshgrid(s.t, s.x, indexing="ij")
            self.coords.append(torch.as_tensor(np.stack([tt.ravel(), xx.ravel()], -1), dtype=dtype))
            sol = s.solution
            self.labels.append(torch.as_tensor(sol.reshape(sol.shape[0], -1), dtype=dtype))
            self.shapes.append(sol.shape)
        self._batches: dict = {}

    def __len__(self):
        return len(self.graphs)

    def graph_batch(self, idx) -> GraphBatch:
        key = tuple(int(i) for i in idx)
        if key not in self._batches:
            if len(self._batches) > 256:
                self._batches.clear()
            self._batches[key] = collate([self.graphs[i] for i in key], self.dtype)
        return self._batches[key]

    def sampled(self, idx, n_points: int, gen: torch.Generator, shift: bool = False):
        coords, labels = [], []
        for i in idx:
            c, y = self.coords[int(i)], self.labels[int(i)]
            pick = torch.randint(c.shape[0], (n_points,), generator=gen)
            coords.append(c[pick])
            labels.append(y[:, pick])
        batch, coords, labels = self.graph_batch(idx), torch.stack(coords), torch.stack(labels)
        if shift:
            batch, coords = periodic_shift(batch, coords, self.periodic[list(idx)], gen)
        return batch, coords, labels

    def full(self, idx):
        """Whole grids, zero-padded to a common length with a mask."""
        n = max(self.coords[int(i)].shape[0] for i in idx)
        V = self.labels[int(idx[0])].shape[0]
        coords = torch.zeros(len(idx), n, 2, dtype=self.dtype)
        labels = torch.zeros(len(idx), V, n, dtype=self.dtype)
        mask = torch.zeros(len(idx), 1, n, dtype=self.dtype)
        for b, i in enumerate(idx):
            m = self.coords[int(i)].shape[0]
            coords[b, :m] = self.coords[int(i)]
            labels[b, :, :m] = self.labels[int(i)]
            mask[b, :, :m] = 1
        return self.graph_batch(idx), coords, labels, mask


def _wrap(x):
    return torch.remainder(x + 1.0, 2.0) - 1.0


def periodic_shift(batch: GraphBatch, coords: torch.Tensor, periodic: torch.Tensor, gen: torch.Generator | None = None,
                   delta: torch.Tensor | None = None):
    """Translate each periodic sample by a random offset on [-1, 1).

    Query x-coordinates and the x-coordinates of every spatial field sample
    (initial values, coefficient fields) move together, which maps a solution
    to the solution of the translated problem.
    """
    if delta is None:
        delta = torch.rand(coords.shape[0], generator=gen, dtype=coords.dtype) * 2.0
    delta = torch.as_tensor(delta, dtype=coords.dtype)
    coords = coords.clone()
    coords[..., 1] = torch.where(periodic[:, None], _wrap(coords[..., 1] + delta[:, None]), coords[..., 1])
    if batch.field_pts.shape[0]:
        pts = batch.field_pts.clone()
        move = batch.field_spatial & periodic[batch.field_owner]
        d = delta.to(pts.dtype)[batch.field_owner]
        pts[..., 0] = torch.where(move[:, None], _wrap(pts[..., 0] + d[:, None]), pts[..., 0])
        batch = replace(batch, field_pts=pts)
    return batch, coords


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    model: PdeSurrogate
    train_config: dict
    step: int = 0
    optimizer_state: dict | None = None
    digest: str = ""
    extra: dict = field(default_factory=dict)


def _tensor_items(model: PdeSurrogate, opt_state: dict | None):
    for name, t in model.state_dict().items():
        yield f"model/{name}", t
    if opt_state:
        for pid, st in sorted(opt_state["state"].items()):
            for key, t in st.items():
                yield f"adam/{pid}/{key}", torch.as_tensor(t)


def save_checkpoint(path, model: PdeSurrogate, train_config: dict | None = None, step: int = 0,
                    optimizer: torch.optim.Optimizer | None = None, extra: dict | None = None) -> str:
    """Write a checkpoint directory; returns its digest (SHA-256 of the tensor file)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    opt_state = optimizer.state_dict() if optimizer is not None else None
    entries, offset, h = [], 0, hashlib.sha256()
    with open(path / "tensors.bin", "wb") as fh:
        for name, t in _tensor_items(model, opt_state):
            arr = t.detach().cpu().numpy()
            dt = arr.dtype.newbyteorder("<")
            buf = np.ascontiguousarray(arr, dtype=dt).tobytes()
            entries.append({"name": name, "dtype": dt.str, "shape": list(arr.shape), "offset": offset})
            fh.write(buf)
            h.update(buf)
            offset += len(buf)
    manifest = {
        "schema": CKPT_SCHEMA, "version": CKPT_VERSION, "model_config": asdict(model.cfg),
        "train_config": train_config or {}, "step": step, "tensors": entries, "bytes": offset,
        "sha256": h.hexdigest(), "extra": extra or {},
        "param_groups": opt_state["param_groups"] if opt_state else None,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1))
    return manifest["sha256"]


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    mf = path / "manifest.json"
    if not mf.exists():
        raise CheckpointError(f"no checkpoint manifest in {path}")
    m = json.loads(mf.read_text())
    if m.get("schema") != CKPT_SCHEMA:
        raise CheckpointError(f"{path} is not a checkpoint")
    if m.get("version") != CKPT_VERSION:
        raise CheckpointError(f"checkpoint version {m.get('version')} unsupported")
    raw = (path / "tensors.bin").read_bytes()
    if len(raw) != m["bytes"] or hashlib.sha256(raw).hexdigest() != m["sha256"]:
        raise CheckpointError(f"{path / 'tensors.bin'} is truncated or corrupted")
    model = PdeSurrogate(ModelConfig(**m["model_config"]))
    state, adam = {}, {}
    for e in m["tensors"]:
        dt = np.dtype(e["dtype"])
        count = int(np.prod(e["shape"]))
        arr = np.frombuffer(raw, dtype=dt, count=count, offset=e["offset"]).reshape(e["shape"]).copy()
        t = torch.from_numpy(arr)
        kind, _, rest = e["name"].partition("/")
        if kind == "model":
            state[rest] = t
        else:
            pid, key = rest.split("/")
            adam.setdefault(int(pid), {})[key] = t
    float_dtype = next(t.dtype for k, t in state.items() if t.is_floating_point())
    model = model.to(float_dtype)
    model.load_state_dict(state)
    opt_state = {"state": adam, "param_groups": m["param_groups"]} if m["param_groups"] else None
    return Checkpoint(model, m["train_config"], m["step"], opt_state, m["sha256"], m.get("extra", {}))


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalSummary:
    mean: float
    median: float
    per_sample: list

    def as_dict(self):
        return {"mean": self.mean, "median": self.median, "per_sample": self.per_sample}


@torch.no_grad()
def evaluate(model: PdeSurrogate, samples, batch_size: int = 16) -> EvalSummary:
    """nRMSE of the model over whole solution grids; parameters are untouched."""
    data = samples if isinstance(samples, PreparedSet) else None
    if data is None:
        if len(samples) == 0:
            raise ValueError("cannot evaluate on an empty dataset")
        data = PreparedSet(samples, model.cfg, model.dtype)
    was_training = model.training
    model.eval()
    errs = []
    for s in range(0, len(data), batch_size):
        idx = list(range(s, min(s + batch_size, len(data))))
        batch, coords, labels, mask = data.full(idx)
        pred = model(batch, coords) * mask
        num = (pred - labels).flatten(1).norm(dim=1)
        den = labels.flatten(1).norm(dim=1)
        errs += (num / den).tolist()
    model.train(was_training)
    arr = np.asarray(errs)
    return EvalSummary(float(arr.mean()), float(np.median(arr)), errs)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: PdeSurrogate
    history: list
    checkpoint: str | None = None
    digest: str = ""
    seconds: float = 0.0


class MetricsLog:
    """Line-delimited JSON records, optionally echoed to a callback."""

    def __init__(self, path=None, echo=None):
        self.records: list = []
        self.path = Path(path) if path else None
        self.echo = echo
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def __call__(self, **rec):
        self.records.append(rec)
        if self.path:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(rec) + "\n")
        if self.echo:
            self.echo(rec)


def train(cfg: TrainConfig, train_set, val_set=None, run_dir=None, model: PdeSurrogate | None = None,
          echo=None, log_every: int = 1, extra_meta: dict | None = None) -> TrainResult:
    """Adam on the batch-mean nRMSE with warmup + cosine learning rate."""
    torch.manual_seed(cfg.seed)
    dtype = torch.float64 if cfg.double else torch.float32
    if model is None:
        model = PdeSurrogate(profile(cfg.profile)).to(dtype)
    data = train_set if isinstance(train_set, PreparedSet) else PreparedSet(train_set, model.cfg, dtype)
    val = None
    if val_set is not None and len(val_set):
        val = val_set if isinstance(val_set, PreparedSet) else PreparedSet(val_set, model.cfg, dtype)
    run_dir = Path(run_dir) if run_dir else None
    log = MetricsLog(run_dir / "metrics.jsonl" if run_dir else None, echo)
    if extra_meta:
        log(event="start", **extra_meta)

    n = len(data)
    per_epoch = math.ceil(n / cfg.batch_size)
    total = cfg.iterations if cfg.iterations is not None else cfg.epochs * per_epoch
    warmup = int(round(cfg.warmup_epochs * per_epoch))
    opt = torch.optim.Adam(model.parameters(), lr=cfg.lr)
    gen = torch.Generator().manual_seed(cfg.seed)
    model.train()
    t0 = time.time()
    step, epoch = 0, 0
    last_good = {k: v.clone() for k, v in model.state_dict().items()}
    while step < total:
        perm = torch.randperm(n, generator=gen)
        for s in range(0, n, cfg.batch_size):
            if step >= total:
                break
            idx = perm[s:s + cfg.batch_size].tolist()
            lr = lr_at(step, cfg.lr, warmup, total)
            for g in opt.param_groups:
                g["lr"] = lr
            batch, coords, labels = data.sampled(idx, cfg.n_points, gen, cfg.shift_augment)
            loss = nrmse_loss(model(batch, coords), labels)
            if not torch.isfinite(loss):
                model.load_state_dict(last_good)
                path = None
                if run_dir:
                    path = run_dir / "checkpoint-last-good"
                    save_checkpoint(path, model, asdict(cfg), step)
                raise TrainingDiverged(f"non-finite loss at step {step}; last good state saved to {path}")
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            if step % log_every == 0 or step == total - 1:
                log(event="step", step=step, epoch=epoch, loss=loss.item(), lr=lr)
            step += 1
            if step % 50 == 0:
                last_good = {k: v.clone() for k, v in model.state_dict().items()}
        epoch += 1
        if val is not None and cfg.val_every and (epoch % cfg.val_every == 0 or step >= total):
            log(event="val", step=step, epoch=epoch, val_nrmse=evaluate(model, val).mean)
    seconds = time.time() - t0
    ckpt, digest = None, ""
    if run_dir:
        ckpt = str(run_dir / "checkpoint")
        digest = save_checkpoint(ckpt, model, asdict(cfg), step, opt, extra=extra_meta)
        log(event="done", step=step, seconds=seconds, checkpoint=ckpt, digest=digest)
    return TrainResult(model, log.records, ckpt, digest, seconds)


def finetune(base, train_set, overrides: dict | None = None, val_set=None, run_dir=None, echo=None) -> TrainResult:
    """Continue from pretrained weights with a fresh optimizer and a new (shorter) schedule."""
    ck = load_checkpoint(base) if isinstance(base, (str, Path)) else base
    if not isinstance(ck, Checkpoint):
        raise TypeError("finetune expects a checkpoint path or Checkpoint")
    prev = dict(ck.train_config)
    prev.setdefault("epochs", 10)
    cfg_dict = dict(prev)
    cfg_dict.update(overrides or {})
    cfg = TrainConfig.from_dict(cfg_dict)
    if cfg.profile != prev.get("profile", cfg.profile):
        raise CheckpointError("profile override does not match the checkpointed model")
    model = ck.model
    want = torch.float64 if cfg.double else torch.float32
    if model.dtype != want:
        model = model.to(want)
    meta = {"base_checkpoint": str(base) if isinstance(base, (str, Path)) else None, "base_digest": ck.digest}
    return train(cfg, train_set, val_set, run_dir, model=model, echo=echo, extra_meta=meta)


# ---------------------------------------------------------------------------
# scaling study


@dataclass
class ScalingReport:
    rows: list  # dicts: size, profile, seconds, test_nrmse, train_nrmse
    alpha: float
    alpha_residual: float
    beta: float
    beta_residual: float

    def as_dict(self):
        return asdict(self)

    def strictly_decreasing(self) -> bool:
        errs = [r["test_nrmse"] for r in sorted(self.rows, key=lambda r: r["size"])]
        return all(b < a for a, b in zip(errs, errs[1:]))


def _loglog_fit(x, y):
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if np.ptp(x) == 0:
        return float("nan"), float("nan")
    slope, icept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icept)) ** 2)))
    return float(-slope), resid


def scaling_study(cfg: TrainConfig, pool: Sequence[DataSample], test: Sequence[DataSample], sizes: Sequence[int],
                  run_dir=None, echo=None) -> ScalingReport:
    """Train one model per dataset size at a fixed iteration budget.

    ``pool`` must hold at least ``max(sizes)`` samples; each cell uses a prefix.
    Fits ``error ~ size^-alpha`` and ``error ~ seconds^-beta``.
    """
    if len(sizes) < 3:
        raise ValueError("a scaling study needs at least three dataset sizes")
    if max(sizes) > len(pool):
        raise ValueError("pool smaller than the largest requested size")
    if cfg.iterations is None:
        raise ValueError("scaling studies need a fixed iteration budget (TrainConfig.iterations)")
    run_dir = Path(run_dir) if run_dir else None
    rows = []
    for k, size in enumerate(sizes):
        sub = run_dir / f"size-{size}-{k}" if run_dir else None
        res = train(cfg, list(pool[:size]), run_dir=sub, echo=echo)
        ev = evaluate(res.model, test).mean
        tr = evaluate(res.model, list(pool[:min(size, len(test))])).mean
        if not np.isfinite(ev):
            raise TrainingDiverged(f"cell size={size} diverged; scaling fit is degenerate")
        rows.append({"size": int(size), "profile": cfg.profile, "seconds": res.seconds,
                     "test_nrmse": ev, "train_nrmse": tr})
    alpha, ar = _loglog_fit([r["size"] for r in rows], [r["test_nrmse"] for r in rows])
    beta, br = _loglog_fit([r["seconds"] for r in rows], [r["test_nrmse"] for r in rows])
    report = ScalingReport(rows, alpha, ar, beta, br)
    if run_dir:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "scaling_report.json").write_text(json.dumps(report.as_dict(), indent=1))
    return report


def config_replace(cfg: TrainConfig, **kw) -> TrainConfig:
    return replace(cfg, **kw)
