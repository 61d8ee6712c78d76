"""Inverse problems: scalar recovery, system identification and field recovery.

Every routine works with any *forward model*: a callable
``forward(text, payloads, grid, t_idx, x_idx) -> values`` returning the first
unknown at grid nodes ``(t[t_idx], x[x_idx])``.  ``ReferenceForward`` wraps
the numerical solvers, ``SurrogateForward`` a trained network.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import torch
from scipy import optimize

from . import dsl
from .fields import GridSpec, ICSpec, grid_for, make_grid, random_field
from .model import PdeSurrogate, _compiled, collate, prepare_graph
from .solvers import solve_reference

SYSID_SLOTS = ("c01", "c02", "c03", "k", "c11", "c12", "c13")
SYSID_TEMPLATE = (
    "dt(u) + c01*u + c02*u^2 + c03*u^3 + dx(c11*u + c12*u^2 + c13*u^3 - k*dx(u)) = 0\n"
    "ic u = g\nperiodic"
)
SYSID_BOUNDS = {"c01": (-3.0, 3.0), "c02": (-3.0, 3.0), "c03": (-3.0, 3.0), "k": (0.0, 1.0),
                "c11": (-3.0, 3.0), "c12": (-3.0, 3.0), "c13": (-3.0, 3.0)}


class RecoveryDiverged(RuntimeError):
    """Gradient descent objective grew over the patience window."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


# ---------------------------------------------------------------------------
# forward models


class ReferenceForward:
    """Numerical solution on the observation grid."""

    differentiable = False

    def __init__(self, **solver_kwargs):
        self.solver_kwargs = solver_kwargs

    def __call__(self, text, payloads, grid, t_idx, x_idx):
        sol = solve_reference(dsl.parse(text, payloads), payloads, grid, **self.solver_kwargs)
        u = sol.u if sol.u.ndim == 2 else sol.u[0]
        return u[t_idx, x_idx]


class SurrogateForward:
    """Trained surrogate queried at the observation points; differentiable in field payloads."""

    differentiable = True

    def __init__(self, model: PdeSurrogate):
        self.model = model.eval()

    def torch_values(self, text, payloads, grid, t_idx, x_idx, overrides: Mapping[str, torch.Tensor] | None = None):
        m = self.model
        batch = collate([prepare_graph(text, payloads, m.cfg)], m.dtype)
        if overrides:
            dag, _ = _compiled(text, m.cfg.n_branch, m.cfg.inr_layers)
            pts = batch.field_pts.clone()
            for f, node in enumerate(dag.branch_nodes):
                slot = dag.nodes[node].slot
                if slot in overrides:
                    vals = overrides[slot].to(m.dtype)
                    pts = pts.index_put((torch.tensor(f), torch.arange(len(vals)), torch.tensor(1)), vals)
            batch = type(batch)(**{**batch.__dict__, "field_pts": pts})
        t, x = grid.times(), make_grid(grid)
        coords = torch.as_tensor(np.stack([t[t_idx], x[x_idx]], -1), dtype=m.dtype)[None]
        return m(batch, coords)[0, 0]

    def __call__(self, text, payloads, grid, t_idx, x_idx):
        with torch.no_grad():
            return self.torch_values(text, payloads, grid, t_idx, x_idx).double().numpy()


# ---------------------------------------------------------------------------
# observations


@dataclass(frozen=True)
class ObservationPlan:
    n_ic: int = 4
    n_locations: int = 8
    mean_times: float = 8.0  # average observation times per location
    obs_noise: float = 0.0  # relative, multiplicative
    ic_noise: float = 0.0  # relative to the IC's RMS, additive
    seed: int = 0

    def __post_init__(self):
        if self.n_ic < 1 or self.n_locations < 1 or self.mean_times < 1:
            raise ValueError("need at least one IC, one location and one time per location")
        if self.obs_noise < 0 or self.ic_noise < 0:
            raise ValueError("noise levels must be non-negative")


@dataclass
class Trial:
    payloads: dict  # everything known to the inverse solver (noisy ICs, fixed coefficients)
    t_idx: np.ndarray
    x_idx: np.ndarray
    values: np.ndarray


@dataclass
class ObservationSet:
    text: str
    grid: GridSpec
    trials: list
    unknowns: tuple
    truth: dict = field(default_factory=dict)

    @property
    def n_obs(self) -> int:
        return sum(len(tr.values) for tr in self.trials)


def _noisy_field(rng, fs: dsl.FieldSamples, level: float) -> dsl.FieldSamples:
    if level == 0:
        return fs
    v = np.asarray(fs.values, dtype=float)
    rms = float(np.sqrt(np.mean(v ** 2)))
    return dsl.FieldSamples(fs.coords, v + level * rms * rng.standard_normal(v.shape))


def make_observations(text: str, truth: Mapping[str, dsl.Payload], plan: ObservationPlan,
                      unknowns: Sequence[str], grid: GridSpec | None = None, forward=None,
                      ic_slots: Sequence[str] = ("g",), ic_spec: ICSpec = ICSpec()) -> ObservationSet:
    """Solve with the true payloads for ``plan.n_ic`` random ICs and sample sparsely.

    Observations are ``u (1 + eps)``, ``eps ~ N(0, obs_noise^2)`` per point; the
    ICs handed to the inverse solver carry additive noise of ``ic_noise`` times
    their RMS.
    """
    grid = grid or grid_for("periodic" in text)
    forward = forward or ReferenceForward()
    rng = np.random.default_rng(plan.seed)
    x = make_grid(grid)
    n_loc = min(plan.n_locations, grid.n_x)
    locs = np.sort(rng.choice(grid.n_x, n_loc, replace=False))
    trials = []
    for _ in range(plan.n_ic):
        ics = {}
        for slot in ic_slots:
            f = random_field(rng, ic_spec)
            ics[slot] = dsl.FieldSamples(x, f(x), function=f)
        full = {**truth, **ics}
        t_idx, x_idx = [], []
        for loc in locs:
            k = min(1 + rng.poisson(plan.mean_times - 1), grid.n_t - 1)
            tt = np.sort(rng.choice(np.arange(1, grid.n_t), k, replace=False))
            t_idx.append(tt)
            x_idx.append(np.full(k, loc))
        t_idx, x_idx = np.concatenate(t_idx), np.concatenate(x_idx)
        clean = np.asarray(forward(text, full, grid, t_idx, x_idx), dtype=float)
        values = clean * (1.0 + plan.obs_noise * rng.standard_normal(clean.shape))
        known = {k: v for k, v in truth.items() if k not in unknowns}
        known.update({k: _noisy_field(rng, v, plan.ic_noise) for k, v in ics.items()})
        trials.append(Trial(known, t_idx, x_idx, values))
    true_vals = {k: truth[k] for k in unknowns if k in truth}
    return ObservationSet(text, grid, trials, tuple(unknowns), true_vals)


def recovery_objective(candidate: Mapping[str, dsl.Payload], forward, obs: ObservationSet) -> float:
    """Relative L2 misfit over all observations; failures map to +inf."""
    num = den = 0.0
    try:
        for tr in obs.trials:
            pred = np.asarray(forward(obs.text, {**tr.payloads, **candidate}, obs.grid, tr.t_idx, tr.x_idx),
                              dtype=float)
            num += float(np.sum((pred - tr.values) ** 2))
            den += float(np.sum(tr.values ** 2))
    except Exception:
        return float("inf")
    val = np.sqrt(num / den) if den > 0 else np.sqrt(num)
    return float(val) if np.isfinite(val) else float("inf")


# ---------------------------------------------------------------------------
# results


@dataclass
class RecoveryResult:
    estimates: dict
    objective: float
    errors: dict | None = None
    trajectory: list = field(default_factory=list)  # best objective per iteration
    positions: list = field(default_factory=list)  # best position per iteration
    status: str = "ok"

    def table(self, truth: Mapping | None = None) -> str:
        """Ground truth / recovered / abs. error rows for scalar unknowns."""
        rows = [f"{'coef':>6} {'truth':>10} {'recovered':>10} {'abs.err':>10}"]
        for k, v in self.estimates.items():
            if np.ndim(v):
                continue
            t = (truth or {}).get(k)
            ts = f"{float(t):10.4f}" if t is not None else f"{'?':>10}"
            es = f"{abs(float(v) - float(t)):10.4f}" if t is not None else f"{'':>10}"
            rows.append(f"{k:>6} {ts} {float(v):10.4f} {es}")
        return "\n".join(rows)


def _errors(estimates, truth):
    if not truth:
        return None
    out = {}
    for k, v in estimates.items():
        if k not in truth:
            continue
        t = truth[k]
        if isinstance(t, dsl.FieldSamples):
            tv = np.asarray(t.values, float)
            out[k] = float(np.linalg.norm(np.asarray(v) - tv) / max(np.linalg.norm(tv), 1e-300))
        else:
            out[k] = abs(float(v) - float(t))
    return out


# ---------------------------------------------------------------------------
# particle swarm


@dataclass(frozen=True)
class PsoConfig:
    swarm: int = 20
    iterations: int = 50
    inertia: float = 0.729
    c1: float = 1.49445
    c2: float = 1.49445
    seed: int = 0

    def __post_init__(self):
        if self.swarm < 1 or self.iterations < 0:
            raise ValueError("swarm must be positive and iterations non-negative")
        if self.inertia < 0 or self.c1 <= 0 or self.c2 <= 0:
            raise ValueError("PSO coefficients must be positive")


def _check_bounds(bounds: Mapping[str, tuple]):
    names = list(bounds)
    lo = np.array([bounds[k][0] for k in names], float)
    hi = np.array([bounds[k][1] for k in names], float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi)) and np.all(hi > lo)):
        raise ValueError("search box must be bounded with lo < hi")
    return names, lo, hi


def pso(f: Callable[[np.ndarray], float], lo, hi, config: PsoConfig = PsoConfig()):
    """Global-best PSO on a box.  Returns (best_x, best_f, gbest log, position log)."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    rng = np.random.default_rng(config.seed)
    d, n = len(lo), config.swarm
    width = hi - lo
    pos = lo + rng.random((n, d)) * width
    vel = (rng.random((n, d)) * 2 - 1) * width
    # evaluated in particle order so the reduction is reproducible
    vals = np.array([f(p) for p in pos])
    pbest, pval = pos.copy(), vals.copy()
    g = int(np.argmin(pval))
    gbest, gval = pbest[g].copy(), float(pval[g])
    log, plog = [gval], [gbest.copy()]
    for _ in range(config.iterations):
        r1, r2 = rng.random((n, d)), rng.random((n, d))
        vel = config.inertia * vel + config.c1 * r1 * (pbest - pos) + config.c2 * r2 * (gbest - pos)
        vel = np.clip(vel, -width, width)
        pos = np.clip(pos + vel, lo, hi)
        vals = np.array([f(p) for p in pos])
        better = vals < pval
        pbest[better], pval[better] = pos[better], vals[better]
        g = int(np.argmin(pval))
        if pval[g] < gval:
            gbest, gval = pbest[g].copy(), float(pval[g])
        log.append(gval)
        plog.append(gbest.copy())
    return gbest, gval, log, plog


def pso_recover(objective: Callable[[dict], float], bounds: Mapping[str, tuple], config: PsoConfig = PsoConfig(),
                truth: Mapping | None = None) -> RecoveryResult:
    """Minimise ``objective(dict of unknowns)`` over the box ``bounds``."""
    names, lo, hi = _check_bounds(bounds)
    best, val, log, plog = pso(lambda p: objective(dict(zip(names, map(float, p)))), lo, hi, config)
    est = dict(zip(names, map(float, best)))
    return RecoveryResult(est, val, _errors(est, truth), log, [dict(zip(names, map(float, p))) for p in plog])


def recover_scalars(obs: ObservationSet, forward, bounds: Mapping[str, tuple],
                    config: PsoConfig = PsoConfig()) -> RecoveryResult:
    return pso_recover(lambda c: recovery_objective(c, forward, obs), bounds, config, obs.truth)


def identify_system(obs: ObservationSet, forward=None, config: PsoConfig = PsoConfig(swarm=30, iterations=60),
                    bounds: Mapping[str, tuple] | None = None, polish: bool = True) -> RecoveryResult:
    """PSO over the full coefficient vector, optionally refined by bounded Nelder-Mead."""
    forward = forward or ReferenceForward()
    bounds = dict(bounds or SYSID_BOUNDS)
    missing = set(SYSID_SLOTS) - set(bounds)
    if missing:
        raise ValueError(f"system identification needs bounds for {sorted(missing)}")
    bounds = {k: bounds[k] for k in SYSID_SLOTS}
    obj = lambda c: recovery_objective(c, forward, obs)  # noqa: E731
    res = pso_recover(obj, bounds, config, obs.truth)
    if polish and np.isfinite(res.objective):
        names, lo, hi = _check_bounds(bounds)
        x0 = np.array([res.estimates[k] for k in names])
        out = optimize.minimize(lambda p: obj(dict(zip(names, map(float, p)))), x0, method="Nelder-Mead",
                                bounds=list(zip(lo, hi)),
                                options={"xatol": 1e-4, "fatol": 1e-7, "maxfev": 400 * len(names)})
        if out.fun < res.objective:
            est = dict(zip(names, map(float, out.x)))
            res = RecoveryResult(est, float(out.fun), _errors(est, obs.truth), res.trajectory + [float(out.fun)],
                                 res.positions + [est], "ok")
    return res


# ---------------------------------------------------------------------------
# field recovery by gradient descent


@dataclass(frozen=True)
class GdConfig:
    steps: int = 200
    lr: float = 0.05
    smooth: float = 0.0  # weight of the squared first-difference penalty
    patience: int = 25
    diverge_tol: float = 0.5  # relative growth over the patience window that counts as divergence
    fd_eps: float = 1e-4

    def __post_init__(self):
        if self.steps < 0 or self.lr <= 0 or self.smooth < 0 or self.patience < 1 or self.fd_eps <= 0:
            raise ValueError("invalid gradient-descent configuration")


def _sq_misfit_np(values, slot, coords, forward, obs, smooth):
    cand = {slot: dsl.FieldSamples(coords, values)}
    r = recovery_objective(cand, forward, obs)
    return r * r + smooth * float(np.sum(np.diff(values) ** 2))


def _sq_misfit_torch(vals, slot, coords, forward: SurrogateForward, obs, smooth):
    num = den = 0.0
    fs = dsl.FieldSamples(coords, vals.detach().double().numpy())
    for tr in obs.trials:
        pred = forward.torch_values(obs.text, {**tr.payloads, slot: fs}, obs.grid, tr.t_idx, tr.x_idx, {slot: vals})
        y = torch.as_tensor(tr.values, dtype=pred.dtype)
        num = num + ((pred - y) ** 2).sum()
        den = den + float((y ** 2).sum())
    return num / den + smooth * (vals[1:] - vals[:-1]).pow(2).sum()


def recover_field(obs: ObservationSet, slot: str, forward, config: GdConfig = GdConfig(),
                  init=None, coords=None) -> RecoveryResult:
    """Adam on the field's sample values (on the spatial grid unless ``coords`` given).

    The descent minimises the squared relative misfit plus the optional
    smoothness penalty; surrogate forwards are differentiated by autograd,
    others by central finite differences.
    """
    coords = make_grid(obs.grid) if coords is None else np.asarray(coords, float)
    if init is None:
        init = np.zeros_like(coords)
    vals = torch.tensor(np.asarray(init, float).copy(), dtype=torch.float64, requires_grad=True)
    opt = torch.optim.Adam([vals], lr=config.lr)
    auto = getattr(forward, "differentiable", False)
    history, positions = [], []
    best_v, best_x = float("inf"), vals.detach().numpy().copy()

    def value_and_grad():
        if auto:
            loss = _sq_misfit_torch(vals, slot, coords, forward, obs, config.smooth)
            g, = torch.autograd.grad(loss, vals)
            return float(loss), g
        x0 = vals.detach().numpy()
        f0 = _sq_misfit_np(x0, slot, coords, forward, obs, config.smooth)
        g = np.zeros_like(x0)
        for i in range(len(x0)):
            e = np.zeros_like(x0)
            e[i] = config.fd_eps
            fp = _sq_misfit_np(x0 + e, slot, coords, forward, obs, config.smooth)
            fm = _sq_misfit_np(x0 - e, slot, coords, forward, obs, config.smooth)
            g[i] = (fp - fm) / (2 * config.fd_eps)
        return f0, torch.as_tensor(g)

    status = "ok"
    for step in range(config.steps + 1):
        f, g = value_and_grad()
        history.append(f)
        if f < best_v:
            best_v, best_x = f, vals.detach().numpy().copy()
        positions.append(vals.detach().numpy().copy())
        k = len(history) - 1 - config.patience
        # growth over the window only counts once the objective is also worse than at the start;
        # Adam's oscillation around a near-zero minimum is not divergence
        grew = k >= 0 and f > (1 + config.diverge_tol) * max(history[k], history[0])
        if not np.isfinite(f) or grew:
            status = "diverged"
            break
        if step == config.steps:
            break
        opt.zero_grad()
        vals.grad = g.to(vals.dtype)
        opt.step()
    est = {slot: best_x}
    res = RecoveryResult(est, float(np.sqrt(max(best_v, 0.0))), _errors(est, obs.truth), history, positions, status)
    if status == "diverged":
        raise RecoveryDiverged(f"objective grew over {config.patience} steps", res)
    return res
