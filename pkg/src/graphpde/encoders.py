"""Numeric encoders producing per-node input features."""
from __future__ import annotations

from typing import Mapping

import numpy as np
import torch
from torch import nn

from . import dsl
from .dag import PdeDag

SCALAR_NODE_TYPES = ("SC", "BvLeft", "BvRight")


def mlp(d_in: int, d_hidden: int, d_out: int, n_hidden: int = 2, variance_preserving: bool = False) -> nn.Sequential:
    layers: list[nn.Module] = []
    d = d_in
    for _ in range(n_hidden):
        layers += [nn.Linear(d, d_hidden), nn.GELU()]
        d = d_hidden
    layers.append(nn.Linear(d, d_out))
    if variance_preserving:
        # fan-in scaled uniform with ReLU gain; the default scaling shrinks the
        # signal ~3x per layer, which leaves the pooled field features nearly
        # input-independent at initialization
        for lin in layers:
            if isinstance(lin, nn.Linear):
                nn.init.kaiming_uniform_(lin.weight, nonlinearity="relu")
                nn.init.zeros_(lin.bias)
    return nn.Sequential(*layers)


class ScalarEncoder(nn.Module):
    """MLP R -> R^{d_e} with two hidden layers."""

    def __init__(self, d_e: int, hidden: int = 256):
        super().__init__()
        self.net = mlp(1, hidden, d_e, variance_preserving=True)

    def forward(self, c: torch.Tensor) -> torch.Tensor:
        if not torch.isfinite(c).all():
            raise ValueError("scalar encoder received a non-finite value")
        return self.net(c.unsqueeze(-1))


class FunctionEncoder(nn.Module):
    """Softmax-weighted set pooling of scattered samples ``(x_j, s_j)``.

    ``psi3( sum_j softmax_j(psi2(x_j, s_j)) * psi1(x_j, s_j) )`` with the
    softmax taken over samples, channel by channel.  The output is split into
    ``n_branch`` rows of width ``d_e``.
    """

    def __init__(self, d_e: int, n_branch: int = 4, hidden: int = 512, pooled: int = 512):
        super().__init__()
        self.d_e = d_e
        self.n_branch = n_branch
        self.psi1 = mlp(2, hidden, pooled, variance_preserving=True)
        self.psi2 = mlp(2, hidden, pooled, variance_preserving=True)
        self.psi3 = mlp(pooled, hidden, n_branch * d_e, variance_preserving=True)

    def forward(self, samples: torch.Tensor, mask: torch.Tensor | None = None) -> torch.Tensor:
        """samples: (B, J, 2); mask: optional (B, J) bool of valid samples."""
        if samples.shape[-2] == 0:
            raise ValueError("function encoder needs at least one sample")
        logits = self.psi2(samples)
        if mask is not None:
            logits = logits.masked_fill(~mask[..., None], float("-inf"))
        logits = logits - logits.amax(dim=-2, keepdim=True)
        w = torch.exp(logits)
        pooled = (w * self.psi1(samples)).sum(-2) / w.sum(-2)
        out = self.psi3(pooled)
        return out.reshape(*out.shape[:-1], self.n_branch, self.d_e)


def field_points(node, payload) -> np.ndarray:
    """(J, 2) array of (coordinate, value) pairs feeding the branch nodes of ``node``."""
    if isinstance(payload, dsl.SeparableSamples):
        payload = payload.time if node.component == "t" else payload.space
    if not isinstance(payload, dsl.FieldSamples):
        raise dsl.UnboundSlotError(f"slot {node.slot!r} needs sampled field data")
    return np.stack([payload.coords, payload.values], axis=-1)


def node_inputs(dag: PdeDag, payloads: Mapping[str, dsl.Payload]):
    """Split the node set into scalar-fed and function-fed rows.

    Returns ``(scalar_idx, scalar_values, fields, branch_rows)``; ``fields`` is
    a list of (J, 2) arrays and ``branch_rows[f]`` lists the node indices of
    field ``f``'s N branch nodes in order.
    """
    scalar_idx, scalar_values = [], []
    for i, nd in enumerate(dag.nodes):
        if nd.type in SCALAR_NODE_TYPES:
            if nd.slot not in payloads:
                raise dsl.UnboundSlotError(f"slot {nd.slot!r} has no payload")
            scalar_idx.append(i)
            scalar_values.append(float(payloads[nd.slot]))
    fields, branch_rows = [], []
    for field_node, rows in dag.branch_nodes.items():
        nd = dag.nodes[field_node]
        if nd.slot not in payloads:
            raise dsl.UnboundSlotError(f"slot {nd.slot!r} has no payload")
        if len(rows) != dag.n_branch:
            raise ValueError(f"field node {field_node} has {len(rows)} branch nodes, expected {dag.n_branch}")
        fields.append(field_points(nd, payloads[nd.slot]))
        branch_rows.append(rows)
    return (np.asarray(scalar_idx, dtype=np.int64), np.asarray(scalar_values),
            fields, np.asarray(branch_rows, dtype=np.int64).reshape(-1, dag.n_branch))


def assemble_features(dag: PdeDag, payloads, scalar_enc: ScalarEncoder, func_enc: FunctionEncoder) -> torch.Tensor:
    """Node feature matrix (n, d_e) aligned with ``dag.nodes``."""
    p = next(scalar_enc.parameters())
    scalar_idx, values, fields, branch_rows = node_inputs(dag, payloads)
    if fields and func_enc.n_branch != dag.n_branch:
        raise ValueError(f"encoder produces {func_enc.n_branch} blocks, graph has {dag.n_branch} branch nodes")
    default = scalar_enc(torch.zeros(1, dtype=p.dtype, device=p.device))
    xi = default.expand(dag.n, -1)
    if len(scalar_idx):
        rows = scalar_enc(torch.as_tensor(values, dtype=p.dtype, device=p.device))
        xi = xi.index_put((torch.as_tensor(scalar_idx),), rows)
    for pts, rows_idx in zip(fields, branch_rows):
        blocks = func_enc(torch.as_tensor(pts, dtype=p.dtype, device=p.device)[None])[0]
        xi = xi.index_put((torch.as_tensor(rows_idx),), blocks)
    return xi
