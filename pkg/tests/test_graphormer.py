import numpy as np
import pytest
import torch

from graphpde import dsl
from graphpde.dag import MASK_VALUE, PATH_CAP, compile_pde, structural_features
from graphpde.families import FamilySpec, sample_pde
from graphpde.fields import grid_for
from graphpde.graphormer import MAX_DEGREE, Graphormer, GraphormerLayer, type_index
from graphpde.model import PROFILES, PdeSurrogate, collate, prepare_graph

from conftest import ADVECTION, fd_gradient_error


def graph_tensors(dag, n_branch=4, n_mod=4):
    sf = structural_features(dag)
    types = torch.tensor([type_index(nd, n_branch, n_mod) for nd in dag.nodes])[None]
    return (types, torch.as_tensor(sf.in_deg)[None], torch.as_tensor(sf.out_deg)[None],
            torch.as_tensor(sf.phi)[None], torch.as_tensor(sf.connected)[None])


def random_dags(n, seed):
    rng = np.random.default_rng(seed)
    specs = [FamilySpec("dcr"), FamilySpec("wave", periodic=False), FamilySpec("dcr", periodic=False)]
    return [compile_pde(sample_pde(specs[i % 3], rng, grid_for(specs[i % 3].periodic, 8, 3)).definition)
            for i in range(n)]


def test_initial_embeddings_formula():
    torch.manual_seed(0)
    gm = Graphormer(24, 8, 1, 2).double()
    dag = compile_pde(dsl.parse(ADVECTION))
    types, ind, outd, phi, conn = graph_tensors(dag)
    xi = torch.randn(1, dag.n, 8, dtype=torch.float64)
    h0 = gm.initial_embeddings(types, ind, outd, xi)
    for i in range(dag.n):
        ref = gm.type_emb.weight[types[0, i]] + xi[0, i] + gm.in_deg_emb.weight[ind[0, i]] \
            + gm.out_deg_emb.weight[outd[0, i]]
        assert torch.allclose(h0[0, i], ref, atol=1e-15)
    with torch.no_grad():
        for emb in (gm.type_emb, gm.in_deg_emb, gm.out_deg_emb):
            emb.weight.zero_()
    assert torch.equal(gm.initial_embeddings(types, ind, outd, xi), xi)
    # identical type/degree rows coincide (Branch nodes share degrees but differ in type)
    mods = [i for i, nd in enumerate(dag.nodes) if nd.type == "Mod"]
    assert len({int(types[0, i]) for i in mods}) == 4


def test_attention_bias_lookup_and_mask():
    torch.manual_seed(0)
    gm = Graphormer(24, 8, 1, 2).double()
    for dag in random_dags(5, 0):
        types, ind, outd, phi, conn = graph_tensors(dag)
        b = gm.attention_bias(phi, conn)[0]
        for i in range(dag.n):
            for j in range(dag.n):
                if conn[0, i, j]:
                    ref = gm.bias_fwd.weight[phi[0, i, j]] + gm.bias_bwd.weight[phi[0, j, i]]
                    assert torch.allclose(b[:, i, j], ref, atol=1e-15)
                else:
                    assert torch.all(b[:, i, j] <= MASK_VALUE)
        # swapping the tables transposes the result
        swapped = Graphormer(24, 8, 1, 2).double()
        with torch.no_grad():
            swapped.bias_fwd.weight.copy_(gm.bias_bwd.weight)
            swapped.bias_bwd.weight.copy_(gm.bias_fwd.weight)
        assert torch.allclose(swapped.attention_bias(phi, conn)[0], b.transpose(-1, -2))


def test_masked_attention_weights():
    torch.manual_seed(0)
    gm = Graphormer(24, 8, 1, 2).double()
    layer = gm.layers[0]
    for dag in random_dags(20, 1):
        types, ind, outd, phi, conn = graph_tensors(dag)
        bias = gm.attention_bias(phi, conn)
        h = torch.randn(1, dag.n, 8, dtype=torch.float64)
        _, w = layer.attention(h, bias)
        dis = ~conn[0]
        if dis.any():
            assert float(w[0][:, dis].max()) < 1e-30
        assert torch.allclose(w.sum(-1), torch.ones_like(w.sum(-1)), atol=1e-12, rtol=0)


def test_single_node_attention_is_value_projection():
    torch.manual_seed(0)
    layer = GraphormerLayer(8, 2, 8).double()
    h = torch.randn(1, 1, 8, dtype=torch.float64)
    out, w = layer.attention(h, torch.zeros(1, 2, 1, 1, dtype=torch.float64))
    assert torch.allclose(out, layer.w_o(layer.w_v(h)), atol=1e-15)


def test_layer_gradient_six_nodes():
    torch.manual_seed(0)
    gm = Graphormer(24, 8, 1, 2).double()
    n = 6
    edges = [(0, 1), (1, 2), (0, 3), (3, 2), (2, 4)]  # node 5 isolated
    phi = torch.full((1, n, n), PATH_CAP)
    conn = torch.eye(n, dtype=torch.bool)[None].clone()
    for i in range(n):
        phi[0, i, i] = 0
    for s, d in edges:
        phi[0, s, d] = 1
    phi[0, 0, 2], phi[0, 1, 4], phi[0, 3, 4] = 2, 2, 2
    phi[0, 0, 4] = 3
    conn[0] = (phi[0] < PATH_CAP) | (phi[0] < PATH_CAP).T
    types = torch.tensor([[0, 8, 9, 10, 15, 1]])
    deg = torch.tensor([[0, 1, 2, 1, 1, 0]])
    xi = torch.randn(1, n, 8, dtype=torch.float64, requires_grad=True)
    w = torch.randn(1, n, 8, dtype=torch.float64)
    loss = lambda: (gm(types, deg, deg, xi, phi, conn) * w).sum()  # noqa: E731
    assert fd_gradient_error(loss, [xi, *gm.parameters()]) <= 1e-4


def _permute(types, ind, outd, phi, conn, perm):
    p = torch.as_tensor(perm)
    return types[:, p], ind[:, p], outd[:, p], phi[:, p][:, :, p], conn[:, p][:, :, p]


def test_node_order_equivariance():
    torch.manual_seed(0)
    gm = Graphormer(24, 8, 2, 2).double()
    rng = np.random.default_rng(3)
    for dag in random_dags(6, 2):
        t = graph_tensors(dag)
        xi = torch.randn(1, dag.n, 8, dtype=torch.float64)
        perm = rng.permutation(dag.n)
        h = gm(*t[:3], xi, *t[3:])
        tp = _permute(*t, perm)
        hp = gm(*tp[:3], xi[:, perm], *tp[3:])
        assert float((hp - h[:, perm]).abs().max()) <= 1e-12
        mods = [i for i, nd in enumerate(dag.nodes) if nd.type == "Mod"]
        inv = np.argsort(perm)
        assert float((hp[0, inv[mods]] - h[0, mods]).abs().max()) <= 1e-12


def test_determinism():
    dag = compile_pde(dsl.parse(ADVECTION))
    outs = []
    for _ in range(2):
        torch.manual_seed(5)
        gm = Graphormer(24, 8, 1, 2)
        t = graph_tensors(dag)
        xi = torch.ones(1, dag.n, 8)
        outs.append(gm(*t[:3], xi, *t[3:]))
    assert torch.equal(outs[0], outs[1])


def test_degree_clamp():
    torch.manual_seed(0)
    gm = Graphormer(24, 8, 1, 2)
    a = gm.in_deg_emb(torch.tensor([MAX_DEGREE]))
    t = torch.tensor([[0]])
    h1 = gm.initial_embeddings(t, torch.tensor([[40]]), torch.tensor([[0]]), torch.zeros(1, 1, 8))
    h2 = gm.initial_embeddings(t, torch.tensor([[MAX_DEGREE]]), torch.tensor([[0]]), torch.zeros(1, 1, 8))
    assert torch.equal(h1, h2) and a.shape == (1, 8)


@pytest.mark.parametrize("name,layers,d_e,heads", [("S", 4, 128, 16), ("M", 6, 256, 32), ("L", 9, 512, 32),
                                                   ("XL", 12, 768, 32)])
def test_paper_scales_run(name, layers, d_e, heads):
    cfg = PROFILES[name]
    assert (cfg.n_layers, cfg.d_e, cfg.n_heads) == (layers, d_e, heads)
    torch.manual_seed(0)
    model = PdeSurrogate(cfg)
    x = np.linspace(-1, 1, 32, endpoint=False)
    g = prepare_graph(ADVECTION, {"c": 0.5, "g": dsl.FieldSamples(x, np.sin(np.pi * x))}, cfg)
    with torch.no_grad():
        out = model(collate([g]), torch.zeros(1, 5, 2))
    assert out.shape == (1, 1, 5) and torch.isfinite(out).all()
