"""End-to-end surrogate: DAG + payloads -> latent codes -> mesh-free solution."""
from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import nn

from . import dsl
from .dag import CORE_TYPES, PATH_CAP, compile_pde, structural_features
from .encoders import FunctionEncoder, ScalarEncoder, node_inputs
from .graphormer import Graphormer, type_index
from .inr import PolyINR


@dataclass(frozen=True)
class ModelConfig:
    d_e: int = 64
    n_layers: int = 2
    n_heads: int = 4
    ffn_dim: int = 64
    n_branch: int = 4
    inr_layers: int = 4  # also the number of modulation nodes per unknown
    inr_width: int = 64
    scalar_hidden: int = 64
    func_hidden: int = 128
    func_pooled: int = 128
    hyper_hidden: int = 64
    hyper_layers: int = 3

    @property
    def n_types(self) -> int:
        return len(CORE_TYPES) + self.n_branch + self.inr_layers


_PAPER_COMMON = dict(scalar_hidden=256, func_hidden=512, func_pooled=512, hyper_hidden=256, n_branch=4)

PROFILES: dict[str, ModelConfig] = {
    "S": ModelConfig(d_e=128, n_layers=4, n_heads=16, ffn_dim=128, inr_layers=4, inr_width=64, **_PAPER_COMMON),
    "M": ModelConfig(d_e=256, n_layers=6, n_heads=32, ffn_dim=256, inr_layers=6, inr_width=128, **_PAPER_COMMON),
    "L": ModelConfig(d_e=512, n_layers=9, n_heads=32, ffn_dim=512, inr_layers=9, inr_width=256, **_PAPER_COMMON),
    "XL": ModelConfig(d_e=768, n_layers=12, n_heads=32, ffn_dim=768, inr_layers=12, inr_width=512, **_PAPER_COMMON),
    "desk": ModelConfig(),
    "tiny": ModelConfig(d_e=8, n_layers=1, n_heads=2, ffn_dim=8, n_branch=2, inr_layers=2, inr_width=8,
                        scalar_hidden=8, func_hidden=8, func_pooled=8, hyper_hidden=8),
}


def profile(name: str, **overrides) -> ModelConfig:
    if name not in PROFILES:
        raise KeyError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
    return replace(PROFILES[name], **overrides)


# ---------------------------------------------------------------------------
# graph inputs


@dataclass
class GraphStructure:
    types: np.ndarray
    in_deg: np.ndarray
    out_deg: np.ndarray
    phi: np.ndarray
    connected: np.ndarray
    mod_index: np.ndarray  # (V, L)


@dataclass
class GraphInput:
    structure: GraphStructure
    scalar_idx: np.ndarray
    scalar_values: np.ndarray
    fields: list  # (J, 2) arrays
    branch_rows: np.ndarray  # (F, N)
    field_spatial: np.ndarray  # (F,) True for x-dependent fields (IC and CF nodes)

    @property
    def n(self) -> int:
        return len(self.structure.types)


def graph_structure(dag) -> GraphStructure:
    feats = structural_features(dag)
    types = np.array([type_index(nd, dag.n_branch, dag.n_mod) for nd in dag.nodes], dtype=np.int64)
    mod_index = np.array([dag.mod_nodes[v] for v in dag.variables], dtype=np.int64)
    return GraphStructure(types, feats.in_deg, feats.out_deg, feats.phi, feats.connected, mod_index)


@lru_cache(maxsize=4096)
def _compiled(text: str, n_branch: int, n_mod: int):
    dag = compile_pde(dsl.parse(text), n_branch, n_mod)
    return dag, graph_structure(dag)


def prepare_graph(defn: dsl.PdeDefinition | str, payloads: Mapping[str, dsl.Payload], cfg: ModelConfig) -> GraphInput:
    text = defn if isinstance(defn, str) else dsl.format(defn)
    dag, structure = _compiled(text, cfg.n_branch, cfg.inr_layers)
    scalar_idx, values, fields, rows = node_inputs(dag, payloads)
    spatial = np.array([dag.nodes[i].type in ("IC", "CF") for i in dag.branch_nodes], dtype=bool)
    return GraphInput(structure, scalar_idx, values, fields, rows, spatial)


@dataclass
class GraphBatch:
    types: torch.Tensor
    in_deg: torch.Tensor
    out_deg: torch.Tensor
    phi: torch.Tensor
    connected: torch.Tensor
    node_mask: torch.Tensor
    scalar_pos: tuple  # (batch index, node index)
    scalar_values: torch.Tensor
    field_pts: torch.Tensor  # (F, Jmax, 2)
    field_mask: torch.Tensor  # (F, Jmax)
    field_pos: tuple  # (batch index (F*N,), node index (F*N,))
    mod_index: torch.Tensor  # (B, V, L)
    field_owner: torch.Tensor  # (F,) batch index of each field
    field_spatial: torch.Tensor  # (F,) bool

    def to(self, dtype):
        return replace(self, scalar_values=self.scalar_values.to(dtype), field_pts=self.field_pts.to(dtype))


def collate(graphs: Sequence[GraphInput], dtype=torch.float32) -> GraphBatch:
    B = len(graphs)
    n_max = max(g.n for g in graphs)
    n_var = {g.structure.mod_index.shape for g in graphs}
    if len(n_var) != 1:
        raise ValueError("graphs in one batch must have the same number of unknowns and modulation nodes")
    types = np.zeros((B, n_max), dtype=np.int64)
    in_deg = np.zeros((B, n_max), dtype=np.int64)
    out_deg = np.zeros((B, n_max), dtype=np.int64)
    phi = np.full((B, n_max, n_max), PATH_CAP, dtype=np.int64)
    connected = np.broadcast_to(np.eye(n_max, dtype=bool), (B, n_max, n_max)).copy()
    node_mask = np.zeros((B, n_max), dtype=bool)
    sb, sn, sv = [], [], []
    fields, fb, fn, owner, spatial = [], [], [], [], []
    for b, g in enumerate(graphs):
        s, n = g.structure, g.n
        types[b, :n], in_deg[b, :n], out_deg[b, :n] = s.types, s.in_deg, s.out_deg
        phi[b, :n, :n] = s.phi
        connected[b, :n, :n] = s.connected
        node_mask[b, :n] = True
        sb.append(np.full(len(g.scalar_idx), b))
        sn.append(g.scalar_idx)
        sv.append(g.scalar_values)
        for pts, rows, sp in zip(g.fields, g.branch_rows, g.field_spatial):
            fields.append(pts)
            owner.append(b)
            spatial.append(bool(sp))
            fb.append(np.full(len(rows), b))
            fn.append(rows)
    j_max = max((len(f) for f in fields), default=1)
    field_pts = np.zeros((len(fields), j_max, 2))
    field_mask = np.zeros((len(fields), j_max), dtype=bool)
    for i, f in enumerate(fields):
        field_pts[i, : len(f)] = f
        field_mask[i, : len(f)] = True
    cat = lambda xs, dt=np.int64: np.concatenate(xs).astype(dt) if xs else np.zeros(0, dt)  # noqa: E731
    t = torch.as_tensor
    return GraphBatch(
        t(types), t(in_deg), t(out_deg), t(phi), t(connected), t(node_mask),
        (t(cat(sb)), t(cat(sn))), t(cat(sv, np.float64), dtype=dtype),
        t(field_pts, dtype=dtype), t(field_mask), (t(cat(fb)), t(cat(fn))),
        t(np.stack([g.structure.mod_index for g in graphs])),
        t(np.asarray(owner, dtype=np.int64)), t(np.asarray(spatial, dtype=bool)),
    )


# ---------------------------------------------------------------------------
# model


class PdeSurrogate(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.scalar_encoder = ScalarEncoder(cfg.d_e, cfg.scalar_hidden)
        self.function_encoder = FunctionEncoder(cfg.d_e, cfg.n_branch, cfg.func_hidden, cfg.func_pooled)
        self.graphormer = Graphormer(cfg.n_types, cfg.d_e, cfg.n_layers, cfg.n_heads, cfg.ffn_dim)
        self.decoder = PolyINR(cfg.d_e, cfg.inr_width, cfg.inr_layers, cfg.hyper_hidden, cfg.hyper_layers)

    @property
    def dtype(self):
        return self.decoder.last.weight.dtype

    def features(self, batch: GraphBatch) -> torch.Tensor:
        B, n = batch.types.shape
        default = self.scalar_encoder(torch.zeros(1, dtype=self.dtype))
        xi = default.expand(B, n, -1)
        if batch.scalar_values.numel():
            xi = xi.index_put(batch.scalar_pos, self.scalar_encoder(batch.scalar_values.to(self.dtype)))
        if batch.field_pts.shape[0]:
            blocks = self.function_encoder(batch.field_pts.to(self.dtype), batch.field_mask)
            xi = xi.index_put(batch.field_pos, blocks.reshape(-1, self.cfg.d_e))
        return xi

    def encode(self, batch: GraphBatch, xi: torch.Tensor | None = None):
        """Returns per-node outputs (B, n, d_e) and latent codes (B, V, L, d_e)."""
        if xi is None:
            xi = self.features(batch)
        h = self.graphormer(batch.types, batch.in_deg, batch.out_deg, xi, batch.phi, batch.connected)
        B = h.shape[0]
        mu = h[torch.arange(B)[:, None, None], batch.mod_index]
        return h, mu

    def forward(self, batch: GraphBatch, coords: torch.Tensor) -> torch.Tensor:
        """coords: (B, P, 2) query points (t, x) -> predictions (B, V, P)."""
        _, mu = self.encode(batch)
        B, V, L, d = mu.shape
        coords = coords.to(self.dtype)
        flat = coords[:, None].expand(B, V, *coords.shape[1:]).reshape(B * V, *coords.shape[1:])
        return self.decoder(mu.reshape(B * V, L, d), flat).reshape(B, V, -1)

    def predict(self, defn, payloads, t, x) -> np.ndarray:
        """Solution of every unknown on the grid ``t x x`` -> (V, n_t, n_x)."""
        batch = collate([prepare_graph(defn, payloads, self.cfg)], self.dtype)
        tt, xx = np.meshgrid(t, x, indexing="ij")
        coords = torch.as_tensor(np.stack([tt.ravel(), xx.ravel()], -1), dtype=self.dtype)[None]
        with torch.no_grad():
            out = self(batch, coords)
        return out[0].reshape(-1, len(t), len(x)).cpu().numpy()


def config_dict(cfg: ModelConfig) -> dict:
    return asdict(cfg)
