"""Reference solvers for single-unknown 1-D PDEs written in the DSL.

Three paths, chosen automatically:

* exact: periodic, linear, constant-coefficient first-order-in-time problems
  are solved in Fourier space (pure advection with a closed-form initial
  value is evaluated directly as ``g(x - c t)``);
* leapfrog: periodic constant-speed wave ``u_tt = c^2 u_xx``;
* method of lines: everything else.  The equation tree is lowered onto a
  finite-volume discretization.  ``dx(F)`` becomes a flux difference, with
  derivative-free parts of ``F`` handled by a Rusanov flux on MUSCL-minmod
  states and the remaining parts evaluated at cell faces.  Boundary
  conditions are probed for their coefficients of ``u``, ``u_x`` and ``u_t``.
  Time integration uses implicit BDF with a banded finite-difference Jacobian.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy import integrate

from . import dsl
from .dsl import Const, Cos, Dt, Dx, FieldCoef, Neg, Pow, Prod, Sin, Square, Sum, Var
from .fields import GridSpec, make_grid

BLOWUP_LIMIT = 10.0


class SolverError(RuntimeError):
    pass


class UnsupportedProblem(SolverError):
    pass


class BlowUp(SolverError):
    """Solution left the admissible range ``|u| <= 10``; the sample is discarded."""


class BudgetExceeded(SolverError):
    pass


@dataclass
class SolutionField:
    t: np.ndarray
    x: np.ndarray
    u: np.ndarray  # (n_t, n_x)
    solver: str
    n_rhs: int = 0


# ---------------------------------------------------------------------------
# helpers


def _has(e, *types) -> bool:
    return any(isinstance(n, types) for n in e.walk())


def _terms(e):
    return e.args if isinstance(e, Sum) else (e,)


def _wrap(x):
    return np.mod(x + 1.0, 2.0) - 1.0


def sample_field(payload, where, periodic: bool) -> np.ndarray:
    """Evaluate a sampled field at ``where`` (closed form when available)."""
    if payload.function is not None:
        return np.asarray(payload.function(where), dtype=float)
    c, v = payload.coords.astype(float), payload.values.astype(float)
    if periodic:
        return np.interp(where, c, v, period=2.0)
    return np.interp(where, c, v)


def _split_time_derivative(eq, var: str):
    """Return (order, rest_terms) for ``dt^k(u) + rest = 0``."""
    lead, rest = [], []
    for term in _terms(eq):
        if isinstance(term, Dt) and isinstance(term.arg, Var) and term.arg.name == var:
            lead.append((1, term))
        elif isinstance(term, Dt) and isinstance(term.arg, Dt) and isinstance(term.arg.arg, Var):
            lead.append((2, term))
        else:
            rest.append(term)
    if len(lead) != 1:
        raise UnsupportedProblem("equation must contain exactly one leading time derivative with unit coefficient")
    order = lead[0][0]
    for term in rest:
        for n in term.walk():
            if isinstance(n, Dt) and not (isinstance(n.arg, Var) and order == 2):
                raise UnsupportedProblem("time derivatives allowed only as the leading term (or u_t in second-order problems)")
    return order, rest


# ---------------------------------------------------------------------------
# exact linear constant-coefficient path


class _Lin:
    """sum_m a[m] d^m u / dx^m + b + sum_j w[j] * field_j(x)"""

    def __init__(self, a=None, b=0.0, f=None):
        self.a = dict(a or {})
        self.b = b
        self.f = dict(f or {})

    @property
    def constant(self):
        return not self.a and not self.f

    def scaled(self, k):
        return _Lin({m: k * v for m, v in self.a.items()}, k * self.b, {s: k * w for s, w in self.f.items()})

    def __add__(self, o):
        a = dict(self.a)
        for m, v in o.a.items():
            a[m] = a.get(m, 0.0) + v
        f = dict(self.f)
        for s, w in o.f.items():
            f[s] = f.get(s, 0.0) + w
        return _Lin(a, self.b + o.b, f)


def _lin(e, payloads, var):
    if isinstance(e, Var):
        return _Lin({0: 1.0})
    if isinstance(e, Const):
        return _Lin(b=float(payloads[e.slot]))
    if isinstance(e, FieldCoef):
        return _Lin(f={e.slot: 1.0}) if e.dependency == "x" else None
    if isinstance(e, Sum):
        out = _Lin()
        for a in e.args:
            la = _lin(a, payloads, var)
            if la is None:
                return None
            out = out + la
        return out
    if isinstance(e, Neg):
        la = _lin(e.arg, payloads, var)
        return None if la is None else la.scaled(-1.0)
    if isinstance(e, Prod):
        parts = [_lin(a, payloads, var) for a in e.args]
        if any(p is None for p in parts):
            return None
        varying = [p for p in parts if not p.constant]
        if len(varying) > 1:
            return None
        k = float(np.prod([p.b for p in parts if p.constant]))
        return varying[0].scaled(k) if varying else _Lin(b=k)
    if isinstance(e, Dx):
        la = _lin(e.arg, payloads, var)
        if la is None or la.f:
            return None
        return _Lin({m + 1: v for m, v in la.a.items()})
    if isinstance(e, (Square, Pow, Sin, Cos)):
        base = e.arg if not isinstance(e, Pow) else e.base
        lb = _lin(base, payloads, var)
        if lb is None or not lb.constant:
            return None
        fn = {Square: lambda v: v * v, Sin: np.sin, Cos: np.cos}.get(type(e))
        return _Lin(b=float(fn(lb.b) if fn else lb.b ** e.exponent))
    return None


def linear_form(defn: dsl.PdeDefinition, payloads) -> tuple[int, _Lin] | None:
    """(time order, spatial operator) for linear constant-coefficient equations, else None."""
    if len(defn.variables) != 1 or len(defn.equations) != 1:
        return None
    var = defn.variables[0]
    try:
        order, rest = _split_time_derivative(defn.equations[0], var)
    except UnsupportedProblem:
        return None
    if any(_has(t, Dt) for t in rest):
        return None
    lin = _Lin()
    for t in rest:
        lt = _lin(t, payloads, var)
        if lt is None:
            return None
        lin = lin + lt
    return order, lin


def _phi1(z):
    small = np.abs(z) < 1e-8
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 + 0.5 * z, np.expm1(zs) / zs)


def spectral_solve(lin: _Lin, u0: np.ndarray, source: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Exact Fourier solution of ``u_t + sum_m a_m d^m u + S(x) = 0`` on a uniform periodic grid."""
    n = len(u0)
    k = np.pi * np.fft.fftfreq(n, d=1.0 / n)  # wavenumbers on a period-2 domain
    lam = np.zeros(n, dtype=complex)
    for m, a in lin.a.items():
        lam -= a * (1j * k) ** m
    u_hat = np.fft.fft(u0)
    s_hat = np.fft.fft(-source)
    z = lam[None, :] * t[:, None]
    out = np.exp(z) * u_hat + s_hat * t[:, None] * _phi1(z)
    return np.fft.ifft(out, axis=-1).real


def advect_exact(g, c: float, t: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.asarray(g(_wrap(x[None, :] - c * t[:, None])), dtype=float)


# ---------------------------------------------------------------------------
# wave: leapfrog and d'Alembert


def leapfrog_wave(c: float, u0: np.ndarray, v0: np.ndarray, h: float, t: np.ndarray, cfl: float = 0.5) -> np.ndarray:
    """Second-order leapfrog for periodic ``u_tt = c^2 u_xx``; ``t`` must be uniformly spaced."""
    spans = np.diff(t)
    if not np.allclose(spans, spans[0]):
        raise ValueError("leapfrog needs uniformly spaced snapshot times")

    def lap(u):
        return (np.roll(u, -1) - 2 * u + np.roll(u, 1)) / h**2

    m = max(1, int(np.ceil(spans[0] * abs(c) / (cfl * h))))
    dt = spans[0] / m
    out = np.empty((len(t), len(u0)))
    out[0] = u0
    prev, cur = None, np.asarray(u0, dtype=float)
    for i in range(1, len(t)):
        for _ in range(m):
            if prev is None:
                nxt = cur + dt * v0 + 0.5 * (c * dt) ** 2 * lap(cur)
            else:
                nxt = 2 * cur - prev + (c * dt) ** 2 * lap(cur)
            prev, cur = cur, nxt
        out[i] = cur
    return out


def dalembert(g, c: float, t, x, h_antiderivative=None) -> np.ndarray:
    """``(g(x-ct) + g(x+ct))/2 + (H(x+ct) - H(x-ct)) / (2c)`` on a periodic domain."""
    t = np.asarray(t)[:, None]
    x = np.asarray(x)[None, :]
    u = 0.5 * (g(_wrap(x - c * t)) + g(_wrap(x + c * t)))
    if h_antiderivative is not None:
        u = u + (h_antiderivative(x + c * t) - h_antiderivative(x - c * t)) / (2 * c)
    return u


# ---------------------------------------------------------------------------
# method of lines


def _minmod(a, b):
    return np.where(a * b > 0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


class _Coef:
    """Multiplier ``scale * prod(exprs)`` built from derivative-free, unknown-free factors."""

    __slots__ = ("scale", "exprs")

    def __init__(self, scale=1.0, exprs=()):
        self.scale = scale
        self.exprs = tuple(exprs)


class MolSystem:
    def __init__(self, defn: dsl.PdeDefinition, payloads: Mapping, x: np.ndarray, periodic: bool):
        if len(defn.variables) != 1 or len(defn.equations) != 1:
            raise UnsupportedProblem("reference solver handles one unknown and one equation")
        if periodic != defn.periodic:
            raise UnsupportedProblem("grid periodicity does not match the boundary conditions")
        self.var = defn.variables[0]
        self.order, self.rest = _split_time_derivative(defn.equations[0], self.var)
        self.payloads = payloads
        self.periodic = periodic
        self.x = x = np.asarray(x, dtype=float)
        n = self.n = len(x)
        if periodic:
            h = 2.0 / n
            if not np.allclose(np.diff(x), h):
                raise UnsupportedProblem("periodic problems need the uniform grid")
            self.xf = x + h / 2
            self.width = np.full(n, h)
        else:
            if x[0] <= -1 or x[-1] >= 1:
                raise UnsupportedProblem("non-periodic grids must keep nodes strictly inside (-1, 1)")
            self.xf = np.concatenate([[-1.0], 0.5 * (x[1:] + x[:-1]), [1.0]])
            self.width = np.diff(self.xf)
            self.xe = np.concatenate([[-1.0], x, [1.0]])
            self.bc = {b.side: b for b in defn.boundary}
        self._cache: dict = {}
        self.t = 0.0
        self.ic = {ic.order: payloads[ic.slot] for ic in defn.initial_conditions if ic.variable == self.var}
        if self.order == 2 and 1 not in self.ic:
            raise UnsupportedProblem("second-order problem needs an initial rate")
        self.n_rhs = 0
        # boundary nodes carrying their own ODE (u_t appears in the condition)
        self.dyn_sides = []
        if not periodic:
            for side in ("left", "right"):
                _, _, tau, _ = self._bc_coeffs(side, 0.0)
                if abs(tau) > 0:
                    self.dyn_sides.append(side)

    # coefficient fields ----------------------------------------------------

    def _field(self, e: FieldCoef, where: str):
        p = self.payloads[e.slot]
        if e.dependency == "t":
            return float(sample_field(p, np.array([self.t]), False)[0])
        if e.dependency == "tx":
            return float(sample_field(p.time, np.array([self.t]), False)[0]) * self._space(e.slot, p.space, where)
        return self._space(e.slot, p, where)

    def _space(self, slot, p, where):
        key = (slot, where)
        if key not in self._cache:
            pts = {"node": self.x, "face": self.xf, "left": np.array([-1.0]), "right": np.array([1.0])}[where]
            self._cache[key] = sample_field(p, pts, self.periodic)
        return self._cache[key]

    # pointwise evaluation ----------------------------------------------------

    def _point(self, e, where, u, ux=None, ut=None):
        """Evaluate without spatial differencing: ``Dx(u)`` maps to ``ux`` and ``Dt(u)`` to ``ut``."""
        rec = lambda a: self._point(a, where, u, ux, ut)  # noqa: E731
        if isinstance(e, Var):
            return u
        if isinstance(e, Const):
            return float(self.payloads[e.slot])
        if isinstance(e, FieldCoef):
            return self._field(e, where)
        if isinstance(e, Sum):
            return sum(rec(a) for a in e.args)
        if isinstance(e, Prod):
            out = 1.0
            for a in e.args:
                out = out * rec(a)
            return out
        if isinstance(e, Neg):
            return -rec(e.arg)
        if isinstance(e, Square):
            v = rec(e.arg)
            return v * v
        if isinstance(e, Pow):
            return rec(e.base) ** e.exponent
        if isinstance(e, Sin):
            return np.sin(rec(e.arg))
        if isinstance(e, Cos):
            return np.cos(rec(e.arg))
        if isinstance(e, Dx) and isinstance(e.arg, Var) and ux is not None:
            return ux
        if isinstance(e, Dt) and isinstance(e.arg, Var) and ut is not None:
            return ut
        raise UnsupportedProblem(f"cannot evaluate {dsl.format_expr(e)!r} pointwise")

    def _coef_values(self, k: _Coef, where):
        out = k.scale
        for e in k.exprs:
            out = out * self._point(e, where, None)
        return out

    # boundary conditions -----------------------------------------------------

    def _bc_coeffs(self, side, t):
        """(alpha, beta, tau, gamma) for ``alpha u + beta u_x + tau u_t = gamma`` at ``side``."""
        b = self.bc[side]
        told, self.t = self.t, t
        try:
            f = lambda U, X, T: float(self._point(b.lhs, side, U, X, T))  # noqa: E731
            f0 = f(0.0, 0.0, 0.0)
            al, be, ta = f(1.0, 0.0, 0.0) - f0, f(0.0, 1.0, 0.0) - f0, f(0.0, 0.0, 1.0) - f0
            if not np.isclose(f(2.0, -1.5, 0.5), f0 + 2 * al - 1.5 * be + 0.5 * ta, rtol=1e-9, atol=1e-9):
                raise UnsupportedProblem(f"{side} boundary condition is not linear in u, u_x, u_t")
        finally:
            self.t = told
        return al, be, ta, float(self.payloads[b.value_slot]) - f0

    def _boundary_values(self, u, ub_dyn):
        """Ghost values at x = -1 and x = 1 (plus their time derivatives for dynamic sides)."""
        out, rates = {}, {}
        for side, d, inner, sgn in (("left", self.x[0] + 1, u[0], -1.0), ("right", 1 - self.x[-1], u[-1], 1.0)):
            al, be, ta, ga = self._bc_coeffs(side, self.t)
            # one-sided gradient: u_x ~ sgn * (ub - inner) / d
            if side in self.dyn_sides:
                ub = ub_dyn[side]
                rates[side] = (ga - al * ub - be * sgn * (ub - inner) / d) / ta
            else:
                den = al + sgn * be / d
                if abs(den) < 1e-12:
                    raise SolverError(f"{side} boundary condition is degenerate on this grid")
                ub = (ga + sgn * be * inner / d) / den
            out[side] = ub
        return out, rates

    # spatial operators --------------------------------------------------------

    def _faces_of(self, u, ub):
        if self.periodic:
            return 0.5 * (u + np.roll(u, -1)), (np.roll(u, -1) - u) / self.width[0]
        ue = np.concatenate([[ub["left"]], u, [ub["right"]]])
        return 0.5 * (ue[1:] + ue[:-1]), np.diff(ue) / np.diff(self.xe)

    def _div(self, F):
        if np.ndim(F) == 0:
            return np.zeros(self.n)
        if self.periodic:
            return (F - np.roll(F, 1)) / self.width
        return np.diff(F) / self.width

    def _states(self):
        """MUSCL-minmod left/right states at every face."""
        u, ub = self.u, self.ub
        if self.periodic:
            h = self.width[0]
            s = _minmod(np.roll(u, -1) - u, u - np.roll(u, 1)) / h
            return u + 0.5 * h * s, np.roll(u - 0.5 * h * s, -1)
        ue = np.concatenate([[ub["left"]], u, [ub["right"]]])
        d = np.diff(ue) / np.diff(self.xe)
        s = _minmod(d[1:], d[:-1])
        uL = np.concatenate([[ub["left"]], u + s * (self.xf[1:] - self.x)])
        uR = np.concatenate([u + s * (self.xf[:-1] - self.x), [ub["right"]]])
        return uL, uR

    def _rusanov(self, terms, k: _Coef):
        def flux(state, where="face"):
            return sum(self._point(t, where, state) for t in terms) * np.ones_like(state)

        uL, uR = self._states()
        kf = self._coef_values(k, "face")
        FL, FR = kf * flux(uL), kf * flux(uR)
        eps = 1e-6 * (1 + np.abs(uL) + np.abs(uR))
        aL = np.abs(kf * (flux(uL + eps) - flux(uL - eps)) / (2 * eps))
        aR = np.abs(kf * (flux(uR + eps) - flux(uR - eps)) / (2 * eps))
        F = 0.5 * (FL + FR) - 0.5 * np.maximum(aL, aR) * (uR - uL)
        out = self._div(F)
        if k.exprs:
            # k dx(f) = dx(k f) - f dx(k)
            out = out - flux(self.u, "node") * self._div(kf * np.ones_like(F))
        return out

    def _divergence(self, arg, k: _Coef):
        conv, other = [], []
        for t in _terms(arg):
            (other if _has(t, Dx, Dt) or not _has(t, Var) else conv).append(t)
        out = np.zeros(self.n)
        if conv:
            out = out + self._rusanov(conv, k)
        if other:
            F = sum(self._face(t) for t in other)
            out = out + self._coef_values(k, "node") * self._div(F)
        return out

    def _face(self, e):
        return self._point(e, "face", self.uf, self.gf, self.vf)

    def _node(self, e, k: _Coef):
        if isinstance(e, Sum):
            return sum(self._node(a, k) for a in e.args)
        if isinstance(e, Neg):
            return self._node(e.arg, _Coef(-k.scale, k.exprs))
        if isinstance(e, Prod):
            pure = [a for a in e.args if not _has(a, Var, Dx, Dt)]
            rest = [a for a in e.args if _has(a, Var, Dx, Dt)]
            if len(rest) == 1:
                consts = [a for a in pure if not _has(a, FieldCoef)]
                fields_ = [a for a in pure if _has(a, FieldCoef)]
                scale = k.scale * float(np.prod([self._point(a, "node", None) for a in consts]))
                return self._node(rest[0], _Coef(scale, k.exprs + tuple(fields_)))
            out = self._coef_values(k, "node")
            for a in e.args:
                out = out * self._node(a, _Coef())
            return out
        if isinstance(e, Dx):
            return self._divergence(e.arg, k)
        if isinstance(e, Dt):
            return self._coef_values(k, "node") * self.v
        return self._coef_values(k, "node") * self._point(e, "node", self.u)

    # ODE right-hand side -------------------------------------------------------

    def unpack(self, y):
        n = self.n
        u = y[:n]
        v = y[n:2 * n] if self.order == 2 else None
        off = n * self.order
        dyn = {side: y[off + i] for i, side in enumerate(self.dyn_sides)}
        return u, v, dyn

    def rhs(self, t, y):
        self.n_rhs += 1
        self.t = t
        u, v, dyn = self.unpack(y)
        self.u, self.v = u, v
        rates = {}
        if self.periodic:
            self.ub = None
            self.vf = None if v is None else 0.5 * (v + np.roll(v, -1))
        else:
            self.ub, rates = self._boundary_values(u, dyn)
            if v is not None:
                self.vf = np.concatenate([[v[0]], 0.5 * (v[1:] + v[:-1]), [v[-1]]])
            else:
                self.vf = None
        self.uf, self.gf = self._faces_of(u, self.ub)
        r = np.zeros(self.n)
        for term in self.rest:
            r = r + self._node(term, _Coef())
        parts = [-r] if self.order == 1 else [v, -r]
        parts += [np.array([rates[s]]) for s in self.dyn_sides]
        return np.concatenate(parts)

    def sparsity(self):
        """Jacobian pattern: stencil half-width 2 within and across the u/v blocks."""
        n, m = self.n, self.n * self.order + len(self.dyn_sides)
        i = np.arange(n)
        band = np.zeros((n, n), dtype=bool)
        for k in range(-2, 3):
            j = i + k
            ok = (j >= 0) & (j < n)
            band[i[ok], j[ok]] = True
            if self.periodic:
                band[i, j % n] = True
        pat = np.zeros((m, m), dtype=bool)
        for a in range(self.order):
            for b in range(self.order):
                pat[a * n:(a + 1) * n, b * n:(b + 1) * n] = band
        pat[n * self.order:, :] = True
        pat[:, n * self.order:] = True
        return pat

    def initial_state(self):
        u0 = sample_field(self.ic[0], self.x, self.periodic)
        parts = [u0]
        if self.order == 2:
            parts.append(sample_field(self.ic[1], self.x, self.periodic))
        for side in self.dyn_sides:
            parts.append(sample_field(self.ic[0], np.array([-1.0 if side == "left" else 1.0]), False))
        return np.concatenate(parts)


def solve_mol(defn, payloads, x, t, periodic, *, rtol=1e-4, atol=1e-6, max_rhs=50_000,
              limit=BLOWUP_LIMIT, method="BDF") -> SolutionField:
    sys_ = MolSystem(defn, payloads, x, periodic)
    n = sys_.n

    def rhs(tt, y):
        with np.errstate(all="ignore"):
            return sys_.rhs(tt, y)

    y0 = sys_.initial_state()
    extra = {"jac_sparsity": sys_.sparsity()} if method in ("BDF", "Radau") else {}
    stepper = getattr(integrate, method)(rhs, t[0], y0, t[-1], rtol=rtol, atol=atol, **extra)
    out = np.empty((len(t), n))
    out[0] = y0[:n]
    j = 1
    while j < len(t):
        msg = stepper.step()
        if stepper.status == "failed":
            raise SolverError(f"integration failed at t={stepper.t:.3g}: {msg}")
        y = stepper.y[:n]
        if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > limit:
            raise BlowUp(f"|u| exceeded {limit} at t={stepper.t:.3g}")
        if sys_.n_rhs > max_rhs:
            raise BudgetExceeded(f"more than {max_rhs} right-hand-side evaluations (t={stepper.t:.3g})")
        if t[j] <= stepper.t:
            dense = stepper.dense_output()
            while j < len(t) and t[j] <= stepper.t:
                out[j] = dense(t[j])[:n]
                j += 1
    return SolutionField(t, x, out, f"mol-{method.lower()}", sys_.n_rhs)


# ---------------------------------------------------------------------------
# dispatcher


def solve_reference(defn: dsl.PdeDefinition, payloads: Mapping, grid: GridSpec, *, method: str = "auto",
                    limit: float = BLOWUP_LIMIT, **mol_kwargs) -> SolutionField:
    """Solve on ``grid``; raises :class:`BlowUp` when ``|u|`` exceeds ``limit``."""
    if grid.periodic != defn.periodic:
        raise UnsupportedProblem("grid kind does not match the boundary conditions")
    x = make_grid(grid)
    t = grid.times()
    sol = None
    if method in ("auto", "exact") and defn.periodic:
        lf = linear_form(defn, payloads)
        if lf is not None:
            sol = _solve_linear(defn, payloads, lf, x, t)
    if sol is None and method == "exact":
        raise UnsupportedProblem("no exact solver for this problem")
    if sol is None:
        sol = solve_mol(defn, payloads, x, t, defn.periodic, limit=limit, **mol_kwargs)
    if not np.all(np.isfinite(sol.u)):
        raise BlowUp("non-finite solution")
    if np.max(np.abs(sol.u)) > limit:
        raise BlowUp(f"|u| exceeded {limit}")
    return sol


def _solve_linear(defn, payloads, lf, x, t):
    order, lin = lf
    ic = {i.order: payloads[i.slot] for i in defn.initial_conditions}
    if order == 1:
        g = ic[0]
        if set(lin.a) <= {1} and lin.b == 0 and not lin.f and g.function is not None:
            return SolutionField(t, x, advect_exact(g.function, lin.a.get(1, 0.0), t, x), "exact-advection")
        u0 = sample_field(g, x, True)
        src = np.full(len(x), lin.b)
        for slot, w in lin.f.items():
            src = src + w * sample_field(payloads[slot], x, True)
        return SolutionField(t, x, spectral_solve(lin, u0, src, t), "exact-spectral")
    if set(lin.a) == {2} and lin.a[2] < 0 and lin.b == 0 and not lin.f:
        c = float(np.sqrt(-lin.a[2]))
        u = leapfrog_wave(c, sample_field(ic[0], x, True), sample_field(ic[1], x, True), x[1] - x[0], t)
        return SolutionField(t, x, u, "leapfrog")
    return None
