import numpy as np
import torch

from graphpde import dsl
from graphpde.model import PROFILES, PdeSurrogate, collate, prepare_graph, profile
from graphpde.trainer import nrmse_loss

from conftest import ADVECTION, fd_gradient_error


def _instance(cfg, n=12):
    x = np.linspace(-1, 1, n, endpoint=False)
    return prepare_graph(ADVECTION, {"c": 0.6, "g": dsl.FieldSamples(x, np.sin(np.pi * x) + 0.3)}, cfg)


def test_end_to_end_nrmse_gradient():
    cfg = profile("tiny")
    torch.manual_seed(0)
    model = PdeSurrogate(cfg).double()
    batch = collate([_instance(cfg)], torch.float64)
    g = torch.Generator().manual_seed(0)
    coords = torch.rand(1, 6, 2, dtype=torch.float64, generator=g) * 2 - 1
    label = torch.randn(1, 1, 6, dtype=torch.float64, generator=g)
    err = fd_gradient_error(lambda: nrmse_loss(model(batch, coords), label), list(model.parameters()))
    assert err <= 1e-4


def test_desk_profile_shape():
    cfg = PROFILES["desk"]
    assert (cfg.d_e, cfg.n_layers, cfg.n_heads, cfg.inr_layers, cfg.inr_width) == (64, 2, 4, 4, 64)
    torch.manual_seed(0)
    model = PdeSurrogate(cfg)
    x = np.linspace(-1, 1, 16, endpoint=False)
    u = model.predict(ADVECTION, {"c": 0.1, "g": dsl.FieldSamples(x, np.cos(np.pi * x))},
                      np.linspace(0, 1, 5), x)
    assert u.shape == (1, 5, 16) and np.isfinite(u).all()


def test_batched_forward_matches_single():
    cfg = profile("tiny")
    torch.manual_seed(0)
    model = PdeSurrogate(cfg).double()
    a = _instance(cfg)
    b = prepare_graph("dt(u) - dx(k*dx(u)) + a*u = 0\nic u = g\nperiodic",
                      {"k": 0.2, "a": -1.0, "g": dsl.FieldSamples(np.linspace(-1, 1, 7), np.linspace(0, 1, 7))}, cfg)
    coords = torch.rand(2, 5, 2, dtype=torch.float64)
    both = model(collate([a, b], torch.float64), coords)
    for k, gi in enumerate((a, b)):
        single = model(collate([gi], torch.float64), coords[k:k + 1])
        assert torch.allclose(both[k], single[0], atol=1e-12, rtol=0)
