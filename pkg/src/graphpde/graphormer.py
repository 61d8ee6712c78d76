"""Graph transformer with degree embeddings and shortest-path attention bias."""
from __future__ import annotations

import math

import torch
from torch import nn

from .dag import CORE_TYPES, MASK_VALUE, PATH_CAP, Node

MAX_DEGREE = 14


def type_index(node: Node, n_branch: int, n_mod: int) -> int:
    if node.type == "Branch":
        if not 1 <= node.index <= n_branch:
            raise ValueError(f"branch index {node.index} outside 1..{n_branch}")
        return len(CORE_TYPES) + node.index - 1
    if node.type == "Mod":
        if not 1 <= node.index <= n_mod:
            raise ValueError(f"mod index {node.index} outside 1..{n_mod}")
        return len(CORE_TYPES) + n_branch + node.index - 1
    return CORE_TYPES.index(node.type)


class GraphormerLayer(nn.Module):
    def __init__(self, d_e: int, n_heads: int, ffn_dim: int):
        super().__init__()
        if d_e % n_heads:
            raise ValueError(f"embedding width {d_e} not divisible by {n_heads} heads")
        self.n_heads = n_heads
        self.ln_attn = nn.LayerNorm(d_e)
        self.ln_ffn = nn.LayerNorm(d_e)
        self.w_q = nn.Linear(d_e, d_e)
        self.w_k = nn.Linear(d_e, d_e)
        self.w_v = nn.Linear(d_e, d_e)
        self.w_o = nn.Linear(d_e, d_e)
        self.ffn = nn.Sequential(nn.Linear(d_e, ffn_dim), nn.GELU(), nn.Linear(ffn_dim, d_e))

    def attention(self, h: torch.Tensor, bias: torch.Tensor):
        """h: (B, n, d); bias: (B, heads, n, n).  Returns output and weights."""
        B, n, d = h.shape
        dh = d // self.n_heads

        def split(x):
            return x.view(B, n, self.n_heads, dh).transpose(1, 2)

        q, k, v = split(self.w_q(h)), split(self.w_k(h)), split(self.w_v(h))
        scores = q @ k.transpose(-1, -2) / math.sqrt(dh) + bias
        weights = torch.softmax(scores, dim=-1)
        out = (weights @ v).transpose(1, 2).reshape(B, n, d)
        return self.w_o(out), weights

    def forward(self, h, bias):
        h_bar = self.attention(self.ln_attn(h), bias)[0] + h
        return self.ffn(self.ln_ffn(h_bar)) + h_bar


class Graphormer(nn.Module):
    def __init__(self, n_types: int, d_e: int, n_layers: int, n_heads: int, ffn_dim: int | None = None):
        super().__init__()
        self.d_e = d_e
        self.n_heads = n_heads
        self.type_emb = nn.Embedding(n_types, d_e)
        self.in_deg_emb = nn.Embedding(MAX_DEGREE + 1, d_e)
        self.out_deg_emb = nn.Embedding(MAX_DEGREE + 1, d_e)
        # path-length bias tables, shared by all layers
        self.bias_fwd = nn.Embedding(PATH_CAP + 1, n_heads)
        self.bias_bwd = nn.Embedding(PATH_CAP + 1, n_heads)
        self.layers = nn.ModuleList(GraphormerLayer(d_e, n_heads, ffn_dim or d_e) for _ in range(n_layers))
        self.final_ln = nn.LayerNorm(d_e)
        for emb in (self.type_emb, self.in_deg_emb, self.out_deg_emb, self.bias_fwd, self.bias_bwd):
            nn.init.normal_(emb.weight, std=0.02)

    def initial_embeddings(self, types, in_deg, out_deg, xi):
        return (self.type_emb(types) + xi
                + self.in_deg_emb(in_deg.clamp(max=MAX_DEGREE))
                + self.out_deg_emb(out_deg.clamp(max=MAX_DEGREE)))

    def attention_bias(self, phi, connected):
        """phi: (B, n, n) long, connected: (B, n, n) bool -> (B, heads, n, n)."""
        phi = phi.clamp(max=PATH_CAP)
        b = self.bias_fwd(phi) + self.bias_bwd(phi.transpose(-1, -2))
        b = b.permute(0, 3, 1, 2)
        return b.masked_fill(~connected[:, None], MASK_VALUE)

    def forward(self, types, in_deg, out_deg, xi, phi, connected):
        h = self.initial_embeddings(types, in_deg, out_deg, xi)
        bias = self.attention_bias(phi, connected)
        for layer in self.layers:
            h = layer(h, bias)
        h = self.final_ln(h)
        if not torch.isfinite(h).all():
            raise FloatingPointError("graph transformer produced non-finite activations")
        return h
