import numpy as np
import pytest
import torch

torch.set_num_threads(1)

ADVECTION = "dt(u) + c*dx(u) = 0\nic u = g\nperiodic"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rel_err(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def fd_gradient_error(loss_fn, params, eps=1e-6, max_entries=None, seed=0):
    """Relative error between autograd and central finite differences.

    ``loss_fn()`` must return a scalar double tensor.  With ``max_entries``
    only a random subset of parameter entries is probed.
    """
    params = [p for p in params if p.requires_grad]
    loss = loss_fn()
    grads = torch.autograd.grad(loss, params, allow_unused=True)
    ad, fd = [], []
    gen = np.random.default_rng(seed)
    for p, g in zip(params, grads):
        g = torch.zeros_like(p) if g is None else g
        flat = p.data.view(-1)
        idx = np.arange(flat.numel())
        if max_entries is not None and len(idx) > max_entries:
            idx = gen.choice(idx, max_entries, replace=False)
        for i in idx:
            old = flat[i].item()
            with torch.no_grad():
                flat[i] = old + eps
                fp = loss_fn().item()
                flat[i] = old - eps
                fm = loss_fn().item()
                flat[i] = old
            fd.append((fp - fm) / (2 * eps))
            ad.append(g.view(-1)[i].item())
    ad, fd = np.array(ad), np.array(fd)
    return float(np.linalg.norm(ad - fd) / max(np.linalg.norm(fd), 1e-300))
