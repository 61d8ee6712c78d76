import numpy as np
import pytest

from graphpde import dsl
from graphpde.dag import compile_pde
from graphpde.families import DCR_BCS, DegenerateDraws, FamilySpec, sample_pde
from graphpde.fields import GridSpec, ICSpec, SinusoidField, gen_initial_condition, grid_for, make_grid, random_field


def test_uniform_grid():
    assert make_grid(GridSpec("uniform-periodic", 4, 2)).tolist() == [-1.0, -0.5, 0.0, 0.5]


def test_cluster_grid_spacing():
    ratios = []
    for n in (16, 64, 256):
        x = make_grid(GridSpec("quadratic-cluster", n, 2))
        d = np.diff(x)
        assert np.all(d > 0) and x[0] > -1 and x[-1] < 1
        assert d[0] < d[n // 2 - 1]
        ratios.append(d[0] / d[n // 2 - 1])
    # endpoint / centre spacing ratio decays like 1/n
    assert 3.0 < ratios[0] / ratios[1] < 5.0 and 3.0 < ratios[1] / ratios[2] < 5.0


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec("chebyshev", 8, 2)
    with pytest.raises(ValueError):
        GridSpec("uniform-periodic", 2, 2)


def test_forced_single_mode():
    f = SinusoidField(np.array([1.0]), np.array([1.0]), np.array([0.0]))
    x = np.linspace(-1, 1, 17)
    assert np.allclose(f(x), np.sin(np.pi * x), atol=1e-15)


def test_fields_are_periodic_without_window():
    rng = np.random.default_rng(0)
    for _ in range(200):
        f = random_field(rng, ICSpec(window_prob=0.0))
        assert abs(f(np.array([-1.0]))[0] - f(np.array([1.0]))[0]) < 1e-12


def test_range_rescale():
    rng = np.random.default_rng(1)
    x = np.linspace(-1, 1, 64, endpoint=False)
    v = gen_initial_condition(rng, x, range_rescale=(1e-3, 1.0))
    assert np.isclose(v.min(), 1e-3) and np.isclose(v.max(), 1.0)


def test_post_op_rates():
    rng = np.random.default_rng(2)
    ops = [random_field(rng).ops for _ in range(10_000)]
    for op in ("abs", "window"):
        rate = np.mean([op in o for o in ops])
        assert abs(rate - 0.10) <= 0.01


def test_zero_coefficient_rate_and_bc_frequencies():
    rng = np.random.default_rng(3)
    spec = FamilySpec("dcr", periodic=False)
    grid = grid_for(False, 8, 2)
    zeros, total, bcs = 0, 0, []
    for _ in range(3000):
        inst = sample_pde(spec, rng, grid)
        vals = list(inst.meta["coefficients"].values())
        zeros += sum(v == 0.0 for v in vals)
        total += len(vals)
        bcs += [inst.meta["bc"]["left"], inst.meta["bc"]["right"]]
    rate = zeros / total
    sigma = np.sqrt(0.25 / total)
    assert abs(rate - 0.5) <= 3 * sigma + 0.002  # redraws of all-zero equations bias slightly low
    n = len(bcs)
    for kind in DCR_BCS:
        p = bcs.count(kind) / n
        assert abs(p - 1 / 3) <= 3 * np.sqrt((1 / 3) * (2 / 3) / n)


def test_trig_family_term_count():
    rng = np.random.default_rng(4)
    spec = FamilySpec("dcr-trig", n_trig=2)
    for _ in range(30):
        inst = sample_pde(spec, rng, grid_for(True, 8, 2))
        dag = compile_pde(inst.definition)
        trig = sum(nd.type in ("Sin", "Cos") for nd in dag.nodes)
        assert trig == 2
        assert inst.meta["J0"] in (0, 1, 2)


def test_degenerate_draws_rejected():
    spec = FamilySpec("dcr", zero_prob=1.0, field_probs=(0.0, 0.0, 1.0))
    with pytest.raises(DegenerateDraws):
        sample_pde(spec, np.random.default_rng(0), grid_for(True, 8, 2), max_attempts=20)


def test_diffusivity_in_range():
    rng = np.random.default_rng(5)
    spec = FamilySpec("dcr", field_probs=(1.0, 0.0, 0.0))
    for _ in range(50):
        inst = sample_pde(spec, rng, grid_for(True, 32, 2))
        k = inst.payloads["k"]
        vals = k.values if isinstance(k, dsl.FieldSamples) else np.array([k])
        assert vals.min() >= 1e-3 - 1e-12 and vals.max() <= 1.0 + 1e-12


def test_wave_family_speed_and_text():
    rng = np.random.default_rng(6)
    spec = FamilySpec("wave", periodic=False)
    for _ in range(30):
        inst = sample_pde(spec, rng, grid_for(False, 16, 2))
        c = inst.payloads["c"].values
        assert c.min() >= 0.3 - 1e-12 and c.max() <= 1.0 + 1e-12
        assert "dt(dt(u))" in inst.text


def test_spec_validation():
    with pytest.raises(ValueError):
        FamilySpec("nope")
    with pytest.raises(ValueError):
        FamilySpec("dcr-trig", periodic=False)
    with pytest.raises(ValueError):
        FamilySpec(zero_prob=1.5)
