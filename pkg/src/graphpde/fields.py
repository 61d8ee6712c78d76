"""Spatial grids and random sinusoid-sum fields."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRID_KINDS = ("uniform-periodic", "quadratic-cluster")


@dataclass(frozen=True)
class GridSpec:
    kind: str = "uniform-periodic"
    n_x: int = 64
    n_t: int = 51
    t_end: float = 1.0

    def __post_init__(self):
        if self.kind not in GRID_KINDS:
            raise ValueError(f"grid kind must be one of {GRID_KINDS}, got {self.kind!r}")
        if self.n_x < 4:
            raise ValueError("n_x must be at least 4")
        if self.n_t < 2:
            raise ValueError("n_t must be at least 2")

    @property
    def periodic(self) -> bool:
        return self.kind == "uniform-periodic"

    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_end, self.n_t)


DESK_GRID = dict(n_x=64, n_t=51)
FULL_GRID = dict(n_x=256, n_t=101)


def make_grid(spec: GridSpec) -> np.ndarray:
    """Spatial nodes on [-1, 1].

    The uniform grid excludes the right endpoint (it coincides with the left
    one under periodicity).  The clustered grid uses the Chebyshev-Gauss
    points ``-cos(pi (k + 1/2) / n)``, whose spacing shrinks quadratically
    toward both ends.
    """
    n = spec.n_x
    k = np.arange(n)
    if spec.kind == "uniform-periodic":
        return -1.0 + 2.0 * k / n
    return -np.cos(np.pi * (k + 0.5) / n)


def grid_for(periodic: bool, n_x: int = 64, n_t: int = 51) -> GridSpec:
    return GridSpec("uniform-periodic" if periodic else "quadratic-cluster", n_x, n_t)


# ---------------------------------------------------------------------------
# random fields


@dataclass(frozen=True)
class ICSpec:
    """Sinusoid-sum generator settings."""

    n_modes: int = 2
    n_max: int = 4  # integer wavenumbers drawn from 1..n_max
    abs_prob: float = 0.1
    window_prob: float = 0.1

    def __post_init__(self):
        for p in (self.abs_prob, self.window_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError("post-op probabilities must lie in [0, 1]")
        if self.n_modes < 1 or self.n_max < 1:
            raise ValueError("need at least one mode and wavenumber")


@dataclass
class SinusoidField:
    """Closed-form random field ``scale * post(sum_i A_i sin(pi n_i x + phi_i)) + offset``."""

    amplitudes: np.ndarray
    wavenumbers: np.ndarray
    phases: np.ndarray
    abs_sign: float = 0.0  # 0: not applied, otherwise +-1
    window: tuple | None = None  # (x_left, x_right)
    scale: float = 1.0
    offset: float = 0.0
    ops: list = field(default_factory=list)

    WINDOW_WIDTH = 0.02

    def raw(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.sum(self.amplitudes * np.sin(np.pi * self.wavenumbers * x[..., None] + self.phases), axis=-1)
        if self.abs_sign:
            u = self.abs_sign * np.abs(u)
        if self.window is not None:
            a, b = self.window
            w = self.WINDOW_WIDTH
            u = u * 0.5 * (np.tanh((x - a) / w) - np.tanh((x - b) / w))
        return u

    def __call__(self, x) -> np.ndarray:
        return self.scale * self.raw(x) + self.offset

    def derivative(self, x, eps: float = 1e-6) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return (self(x + eps) - self(x - eps)) / (2 * eps)

    def rescaled(self, lo: float, hi: float, x_ref) -> "SinusoidField":
        """Affine copy whose range over ``x_ref`` is exactly [lo, hi]."""
        r = self.raw(x_ref)
        rmin, rmax = float(r.min()), float(r.max())
        if rmax - rmin < 1e-12:
            scale, offset = 0.0, 0.5 * (lo + hi)
        else:
            scale = (hi - lo) / (rmax - rmin)
            offset = lo - scale * rmin
        return SinusoidField(self.amplitudes, self.wavenumbers, self.phases, self.abs_sign, self.window,
                             scale, offset, list(self.ops))


def random_field(rng: np.random.Generator, spec: ICSpec = ICSpec()) -> SinusoidField:
    A = rng.uniform(0.0, 1.0, spec.n_modes)
    n = rng.integers(1, spec.n_max + 1, spec.n_modes)
    phi = rng.uniform(0.0, 2 * np.pi, spec.n_modes)
    ops = []
    sign = 0.0
    if rng.random() < spec.abs_prob:
        sign = float(rng.choice([-1.0, 1.0]))
        ops.append("abs")
    window = None
    if rng.random() < spec.window_prob:
        # sub-interval proportions follow the common PDE benchmark recipe
        window = (-1 + 2 * rng.uniform(0.1, 0.45), -1 + 2 * rng.uniform(0.55, 0.9))
        ops.append("window")
    return SinusoidField(A, n.astype(float), phi, sign, window, ops=ops)


def gen_initial_condition(rng: np.random.Generator, x=None, range_rescale=None,
                          spec: ICSpec = ICSpec()):
    """Draw a random field; returns the closed form, or its samples on ``x``.

    ``range_rescale=(lo, hi)`` maps the field affinely onto [lo, hi] over ``x``
    (or a dense reference grid when ``x`` is None).
    """
    f = random_field(rng, spec)
    if range_rescale is not None:
        ref = np.linspace(-1, 1, 513) if x is None else x
        f = f.rescaled(*range_rescale, ref)
    return f if x is None else f(x)


def random_subinterval(rng: np.random.Generator, lo: float, hi: float) -> tuple[float, float]:
    a, b = np.sort(rng.uniform(lo, hi, 2))
    return float(a), float(b)
