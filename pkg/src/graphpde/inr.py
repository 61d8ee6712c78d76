"""Poly-INR decoder with per-layer scale/shift hypernetworks."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .encoders import mlp

CLIP = 256.0


def leaky_clip(q: torch.Tensor) -> torch.Tensor:
    """Leaky ReLU (negative slope 0.2) clipped to [-256, 256]."""
    return torch.clamp(F.leaky_relu(q, 0.2), -CLIP, CLIP)


class PolyINR(nn.Module):
    """Coordinate network ``(t, x) -> u`` conditioned on a latent code.

    Hidden state starts at all ones; each layer multiplies it elementwise by an
    affine function of the coordinates before the modulated linear map.
    """

    def __init__(self, d_e: int, width: int, n_layers: int, hyper_hidden: int = 256, hyper_layers: int = 3):
        super().__init__()
        self.width = width
        self.n_layers = n_layers
        self.w_in = nn.ModuleList(nn.Linear(2, width) for _ in range(n_layers))
        self.w_h = nn.ModuleList(nn.Linear(width, width) for _ in range(n_layers))
        self.scale_nets = nn.ModuleList(mlp(d_e, hyper_hidden, width, hyper_layers - 1) for _ in range(n_layers))
        self.shift_nets = nn.ModuleList(mlp(d_e, hyper_hidden, width, hyper_layers - 1) for _ in range(n_layers))
        self.last = nn.Linear(width, 1)
        with torch.no_grad():
            for net in self.scale_nets:
                net[-1].bias.add_(1.0)

    def modulations(self, mu: torch.Tensor):
        """mu: (B, L, d_e) -> scale, shift each (B, L, width)."""
        if mu.shape[-2] != self.n_layers:
            raise ValueError(f"latent code has {mu.shape[-2]} rows, decoder has {self.n_layers} layers")
        scale = torch.stack([net(mu[..., l, :]) for l, net in enumerate(self.scale_nets)], dim=-2)
        shift = torch.stack([net(mu[..., l, :]) for l, net in enumerate(self.shift_nets)], dim=-2)
        return scale, shift

    def forward(self, mu: torch.Tensor, coords: torch.Tensor, return_hidden: bool = False):
        """mu: (B, L, d_e); coords: (B, P, 2) ordered (t, x) -> (B, P)."""
        scale, shift = self.modulations(mu)
        h = torch.ones(*coords.shape[:-1], self.width, dtype=coords.dtype, device=coords.device)
        hidden = []
        for l in range(self.n_layers):
            g = self.w_in[l](coords)
            q = scale[:, None, l] * self.w_h[l](h * g) + shift[:, None, l]
            h = leaky_clip(q)
            hidden.append(q)
        out = self.last(h).squeeze(-1)
        return (out, hidden) if return_hidden else out

    def decode_grid(self, mu: torch.Tensor, t: np.ndarray | torch.Tensor, x: np.ndarray | torch.Tensor):
        """Evaluate on the Cartesian product ``t x x`` -> (B, n_t, n_x)."""
        p = self.last.weight
        t = torch.as_tensor(t, dtype=p.dtype, device=p.device)
        x = torch.as_tensor(x, dtype=p.dtype, device=p.device)
        tt, xx = torch.meshgrid(t, x, indexing="ij")
        coords = torch.stack([tt.reshape(-1), xx.reshape(-1)], dim=-1)
        out = self(mu, coords.expand(mu.shape[0], -1, -1))
        return out.reshape(mu.shape[0], len(t), len(x))
