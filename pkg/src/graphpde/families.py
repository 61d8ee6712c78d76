"""Random PDE families: diffusion-convection-reaction, its trigonometric
extension, the damped wave equation, plus plain advection and heat."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dsl
from .fields import GridSpec, ICSpec, SinusoidField, grid_for, make_grid, random_field, random_subinterval

FAMILIES = ("dcr", "dcr-trig", "wave", "advection", "heat")
FIELD_CHOICES = ("field", "scalar", "zero")
DCR_BCS = ("dirichlet", "neumann", "robin")
WAVE_BCS = DCR_BCS + ("mur",)
WAVE_OPERATORS = ("c2uxx", "c(cux)x", "(c2ux)x")
WAVE_SOURCES = ("zero", "scalar", "field", "varying", "separable")


@dataclass(frozen=True)
class FamilySpec:
    family: str = "dcr"
    periodic: bool = True
    zero_prob: float = 0.5
    coef_bound: float = 3.0
    kappa_range: tuple = (1e-3, 1.0)
    field_probs: tuple = (1 / 3, 1 / 3, 1 / 3)  # s(x), kappa(x): random field / scalar / zero
    n_trig: int = 0  # J for the trigonometric family
    ic: ICSpec = ICSpec()
    advection_speed: tuple = (-2.0, 2.0)
    wave_speed: tuple = (0.3, 1.0)
    damping_max: float = 3.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if not 0.0 <= self.zero_prob <= 1.0:
            raise ValueError("zero_prob must lie in [0, 1]")
        if len(self.field_probs) != 3 or not np.isclose(sum(self.field_probs), 1.0) or min(self.field_probs) < 0:
            raise ValueError("field_probs must be three non-negative numbers summing to 1")
        lo, hi = self.kappa_range
        if not 0 < lo < hi:
            raise ValueError("kappa bounds must be positive and ordered")
        lo, hi = self.wave_speed
        if not 0 < lo < hi:
            raise ValueError("wave speed bounds must be positive and ordered")
        if self.n_trig < 0:
            raise ValueError("n_trig must be non-negative")
        if self.family == "dcr-trig" and not self.periodic:
            raise ValueError("the trigonometric family is periodic only")
        if self.coef_bound <= 0:
            raise ValueError("coef_bound must be positive")


@dataclass
class PdeInstance:
    text: str
    definition: dsl.PdeDefinition
    payloads: dict
    grid: GridSpec
    meta: dict = field(default_factory=dict)


class DegenerateDraws(RuntimeError):
    pass


def _fs(f, coords, transform=None) -> dsl.FieldSamples:
    fn = f if transform is None else (lambda y: f(transform(y)))
    return dsl.FieldSamples(coords, fn(coords), function=fn)


def _time_coord(t):
    return 2.0 * np.asarray(t) - 1.0  # [0, 1] -> [-1, 1]


class _Draw:
    """Collects text terms, payloads and audit records for one sample."""

    def __init__(self, rng, spec, x, t):
        self.rng, self.spec, self.x, self.t = rng, spec, x, t
        self.payloads: dict = {}
        self.coefs: dict = {}
        self.ops: list = []

    def coef(self, name, always=False):
        r = self.rng
        zero = (not always) and r.random() < self.spec.zero_prob
        v = 0.0 if zero else float(r.uniform(-self.spec.coef_bound, self.spec.coef_bound))
        if not always:
            self.coefs[name] = v
        if v != 0.0:
            self.payloads[name] = v
        return v

    def scalar(self, name, lo, hi):
        v = float(self.rng.uniform(lo, hi))
        self.payloads[name] = v
        return v

    def field(self, name, rescale=None) -> SinusoidField:
        f = random_field(self.rng, self.spec.ic)
        if rescale is not None:
            f = f.rescaled(*rescale, self.x)
        self.ops.append((name, list(f.ops)))
        self.payloads[name] = _fs(f, self.x)
        return f

    def time_field(self, name) -> SinusoidField:
        f = random_field(self.rng, self.spec.ic)
        self.ops.append((name, list(f.ops)))
        self.payloads[name] = _fs(f, self.t, _time_coord)
        return f

    def choice(self, options, p=None):
        return options[int(self.rng.choice(len(options), p=p))]


def _poly_terms(d: _Draw, prefix: str):
    out = []
    for k in (1, 2, 3):
        name = f"{prefix}{k}"
        if d.coef(name):
            out.append(f"{name}*" + ("u" if k == 1 else f"u^{k}"))
    return out


def _trig_terms(d: _Draw, i: int, count: int):
    out = []
    for j in range(1, count + 1):
        h = d.choice(("sin", "cos"))
        a, b, c = (f"h{i}{j}{m}" for m in "abc")
        for name in (a, b, c):
            d.coef(name, always=True)
        out.append(f"{a}*{h}({b}*u + {c}*u^2)")
    return out


def _boundary_lines(d: _Draw, g: SinusoidField, kinds, h: SinusoidField | None = None, speed=None):
    lines, chosen = [], {}
    for side, xb, tag in (("left", -1.0, "L"), ("right", 1.0, "R")):
        kind = d.choice(kinds)
        chosen[side] = kind
        gb, gxb = float(g(xb)), float(g.derivative(np.array([xb]))[0])
        if kind == "dirichlet":
            lhs, init = "u", gb
        elif kind == "neumann":
            lhs, init = "dx(u)", gxb
        elif kind == "robin":
            theta = d.rng.uniform(0.0, np.pi)
            al, be = float(np.cos(theta)), float(np.sin(theta))
            d.payloads[f"a{tag}"], d.payloads[f"b{tag}"] = al, be
            lhs, init = f"a{tag}*u + b{tag}*dx(u)", al * gb + be * gxb
        else:  # absorbing condition u_t -+ c u_x
            sgn = "-" if side == "left" else "+"
            cb = float(speed(xb))
            lhs = f"dt(u) {sgn} c(x)*dx(u)"
            init = float(h(xb)) + (-cb if side == "left" else cb) * gxb
        gamma_kind = d.choice(("zero", "scalar", "initial"))
        gamma = {"zero": 0.0, "initial": init}.get(gamma_kind)
        if gamma is None:
            gamma = float(d.rng.uniform(-d.spec.coef_bound, d.spec.coef_bound))
        d.payloads[f"g{tag}"] = gamma
        chosen[side + "_value"] = gamma_kind
        lines.append(f"bc {side}: {lhs} = g{tag}")
    return lines, chosen


def _join(terms) -> str:
    s = terms[0]
    for t in terms[1:]:
        s += f" - {t[1:].lstrip()}" if t.startswith("-") else f" + {t}"
    return s


def _dcr(d: _Draw, trig: int):
    spec, meta = d.spec, {}
    g = d.field("g")
    lhs = ["dt(u)"] + _poly_terms(d, "c0")
    flux = _poly_terms(d, "c1")
    if trig:
        j0 = int(d.rng.integers(0, trig + 1))
        lhs += _trig_terms(d, 0, j0)
        flux += _trig_terms(d, 1, trig - j0)
        meta["J0"] = j0
    s_kind = d.choice(FIELD_CHOICES, spec.field_probs)
    k_kind = d.choice(FIELD_CHOICES, spec.field_probs)
    meta.update(s=s_kind, kappa=k_kind)
    if s_kind == "field":
        d.field("s")
        lhs.append("s(x)")
    elif s_kind == "scalar":
        d.scalar("s", -spec.coef_bound, spec.coef_bound)
        lhs.append("s")
    if k_kind == "field":
        d.field("k", rescale=random_subinterval(d.rng, *spec.kappa_range))
        flux.append("-k(x)*dx(u)")
    elif k_kind == "scalar":
        d.scalar("k", *spec.kappa_range)
        flux.append("-k*dx(u)")
    if flux:
        lhs.append(f"dx({_join(flux)})")
    if len(lhs) == 1:
        return None
    lines = [_join(lhs) + " = 0", "ic u = g"]
    if spec.periodic:
        lines.append("periodic")
    else:
        bl, chosen = _boundary_lines(d, g, DCR_BCS)
        lines += bl
        meta["bc"] = chosen
    return lines, meta


def _wave(d: _Draw):
    spec, meta = d.spec, {}
    g, h = d.field("g"), d.field("h")
    c = d.field("c", rescale=random_subinterval(d.rng, *spec.wave_speed))
    lhs = ["dt(dt(u))"]
    if d.rng.random() >= spec.zero_prob:
        d.scalar("mu", 0.0, spec.damping_max)
        lhs.append("mu*dt(u)")
    op = d.choice(WAVE_OPERATORS)
    meta["operator"] = op
    lhs.append({"c2uxx": "-sq(c(x))*dx(dx(u))", "c(cux)x": "-c(x)*dx(c(x)*dx(u))",
                "(c2ux)x": "-dx(sq(c(x))*dx(u))"}[op])
    if d.coef("b"):
        lhs.append("b*dx(u)")
    lhs += _poly_terms(d, "c")
    src = d.choice(WAVE_SOURCES)
    meta["source"] = src
    if src == "scalar":
        d.scalar("s", -spec.coef_bound, spec.coef_bound)
        lhs.append("s")
    elif src == "field":
        d.field("s")
        lhs.append("s(x)")
    elif src == "varying":
        d.time_field("s")
        lhs.append("s(t)")
    elif src == "separable":
        st = d.time_field("s_t")
        sx = d.field("s_x")
        d.payloads.pop("s_t"), d.payloads.pop("s_x")
        d.payloads["s"] = dsl.SeparableSamples(_fs(st, d.t, _time_coord), _fs(sx, d.x))
        lhs.append("s(t,x)")
    lines = [_join(lhs) + " = 0", "ic u = g", "ic dt(u) = h"]
    if spec.periodic:
        lines.append("periodic")
    else:
        bl, chosen = _boundary_lines(d, g, WAVE_BCS, h=h, speed=c)
        lines += bl
        meta["bc"] = chosen
    return lines, meta


def _advection(d: _Draw):
    d.field("g")
    d.scalar("c", *d.spec.advection_speed)
    return ["dt(u) + c*dx(u) = 0", "ic u = g", "periodic"], {}


def _heat(d: _Draw):
    d.field("g")
    d.scalar("k", *d.spec.kappa_range)
    return ["dt(u) - dx(k*dx(u)) = 0", "ic u = g", "periodic"], {}


def sample_pde(spec: FamilySpec, rng: np.random.Generator, grid: GridSpec | None = None,
               max_attempts: int = 1000) -> PdeInstance:
    """Draw one PDE (definition + payloads sampled on ``grid``).

    Degenerate draws with no term besides the time derivative are redrawn.
    """
    if grid is None:
        grid = grid_for(spec.periodic)
    if grid.periodic != spec.periodic:
        raise ValueError("grid kind does not match the family's boundary regime")
    if spec.family in ("advection", "heat", "dcr-trig") and not spec.periodic:
        raise ValueError(f"the {spec.family} family is periodic only")
    x, t = make_grid(grid), grid.times()
    for attempt in range(max_attempts):
        d = _Draw(rng, spec, x, t)
        if spec.family in ("dcr", "dcr-trig"):
            out = _dcr(d, spec.n_trig if spec.family == "dcr-trig" else 0)
        elif spec.family == "wave":
            out = _wave(d)
        elif spec.family == "advection":
            out = _advection(d)
        else:
            out = _heat(d)
        if out is None:
            continue
        lines, meta = out
        defn = dsl.parse("\n".join(lines), d.payloads)
        meta.update(family=spec.family, coefficients=d.coefs, field_ops=d.ops, redraws=attempt)
        return PdeInstance(dsl.format(defn), defn, d.payloads, grid, meta)
    raise DegenerateDraws(f"no non-degenerate equation in {max_attempts} draws")
