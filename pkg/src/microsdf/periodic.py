"""Grid-free periodic implicit fields.

Sums of sine/cosine products evaluate one closed-form expression per query
with no neighbor loops, which makes them the cheapest microstructure
generators in the package (the tracer's evaluation counters make the gap
against grid-based fields measurable). The module also defines the six
named microstructures used by the reconstruction benchmarks, each with its
ground-truth parameter vector, bounds, and a differentiability flag the
fitting pipeline consults before allowing gradient-based configurations.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import hashgrid as hg
from .errors import ConfigError, DomainError
from .fields import ScalarField

# ---------------------------------------------------------------------------
# general sine-cosine formula


@dataclass(frozen=True)
class TrigTerm:
    """One factor A * f(omega * p_d + phase) raised to an integer power."""

    func: str  # "sin" | "cos"
    coord: int  # 0 | 1 | 2
    amplitude: float = 1.0
    frequency: float = 1.0
    phase: float = 0.0
    power: int = 1

    def __post_init__(self):
        if self.func not in ("sin", "cos"):
            raise ConfigError("trig factor must be sin or cos")
        if self.coord not in (0, 1, 2):
            raise ConfigError("coord selects p_x, p_y or p_z")
        if self.power < 0 or int(self.power) != self.power:
            raise ConfigError("powers must be non-negative integers")

    def __call__(self, p):
        f = np.sin if self.func == "sin" else np.cos
        v = self.amplitude * f(self.frequency * p[..., self.coord] + self.phase)
        return v**self.power


@dataclass(frozen=True)
class SCFormula:
    """Sum over u products of v trig factors, plus a width offset."""

    terms: tuple  # tuple of tuples of TrigTerm
    width: float = 0.0

    def __post_init__(self):
        if len(self.terms) < 1 or any(len(t) < 1 for t in self.terms):
            raise ConfigError("need at least one summand with one factor (u, v >= 1)")

    def lipschitz_bound(self):
        total = 0.0
        for product in self.terms:
            amp = math.prod(abs(f.amplitude) ** f.power for f in product)
            rate = sum(f.power * abs(f.frequency) for f in product)
            total += amp * rate
        return max(total, 1e-12)


def sc_eval(formula, p):
    """Exact evaluation of the nested sum of trig products."""
    p = np.asarray(p, dtype=np.float64)
    acc = np.zeros(p.shape[:-1])
    for product in formula.terms:
        term = np.ones(p.shape[:-1])
        for factor in product:
            term = term * factor(p)
        acc = acc + term
    return acc + formula.width


def sc_field(formula):
    """Wrap an SCFormula as a ScalarField with an instrumented counter.

    stats["formula_evals"] counts closed-form evaluations; it advances by
    exactly one per eval call since no neighbor loop exists.
    """
    stats = {"formula_evals": 0}

    def fn(p):
        stats["formula_evals"] += 1
        return sc_eval(formula, p)

    return ScalarField(
        fn, lipschitz=formula.lipschitz_bound(), cost=1, name="sc", stats=stats
    )


# Measured global extrema of the trig sums (scanned over a full period at
# 120^3 resolution, quoted with ~2% headroom). They give far tighter
# Lipschitz declarations than term-counting bounds, which matters because
# the tracer's step length divides by the declared bound.
GYROID_SUM_MAX = 1.52  # sup |sin cos + sin cos + sin cos|
GYROID_GRAD_MAX = 1.76  # sup |grad| of the same sum (sqrt(3) exactly)
GYROID_SQ_GRAD_MAX = 2.65  # sup |grad (sum^2)| = sup 2|sum||grad sum|
SINSIN_SQ_MAX = 9.0  # sup (sin sin + sin sin + sin sin)^2
SINSIN_SQ_GRAD_MAX = 7.2  # sup |grad (sin-sin sum)^2|


# ---------------------------------------------------------------------------
# gyroid family


def _gyroid_sum(x, k=1.0):
    """sin(k x0) cos(k x1) + sin(k x1) cos(k x2) + sin(k x2) cos(k x0)."""
    x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
    return (
        np.sin(k * x0) * np.cos(k * x1)
        + np.sin(k * x1) * np.cos(k * x2)
        + np.sin(k * x2) * np.cos(k * x0)
    )


def gyroid1d(p, eta):
    """Axis-sine microstructure: sum_i sin(p_i * eta) / eta."""
    if eta <= 0:
        raise DomainError("noise scale eta must be positive")
    p = np.asarray(p, dtype=np.float64)
    return np.sum(np.sin(p * eta), axis=-1) / eta


def gyroid3d(p, eta, a, t):
    """Gyroid with cell size a and wall thickness t at noise scale eta."""
    if eta <= 0:
        raise DomainError("noise scale eta must be positive")
    if a == 0:
        raise DomainError("cell size must be nonzero")
    k = 2.0 * np.pi / a
    p = np.asarray(p, dtype=np.float64)
    return (_gyroid_sum(p * eta, k) + t) / eta


def gyroid5d(p, eta, a1, a2, a3, t):
    """Gyroid with independent per-axis cell sizes."""
    if eta <= 0:
        raise DomainError("noise scale eta must be positive")
    if a1 == 0 or a2 == 0 or a3 == 0:
        raise DomainError("cell sizes must be nonzero")
    k1, k2, k3 = (2.0 * np.pi / a for a in (a1, a2, a3))
    x = np.asarray(p, dtype=np.float64) * eta
    x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
    r = (
        np.sin(k1 * x0) * np.cos(k2 * x1)
        + np.sin(k2 * x1) * np.cos(k3 * x2)
        + np.sin(k3 * x2) * np.cos(k1 * x0)
    )
    return (r + t) / eta


# ---------------------------------------------------------------------------
# fibers


def _rot_y(phi):
    c, s = np.cos(phi), np.sin(phi)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def fibers2d(p, eta, phi):
    """Two rotated layered fiber sets, unioned.

    The layering term feeds the splatted y-coordinate (x1, x1, x1) into the
    same squared gyroid expression, exactly as the fiber construction is
    written.
    """
    if eta <= 0:
        raise DomainError("noise scale eta must be positive")

    def u(x):
        return _gyroid_sum(x) ** 2

    x = np.asarray(p, dtype=np.float64) * eta
    R = _rot_y(phi)
    splat = np.repeat(x[..., 1:2], 3, axis=-1)
    branch_a = u(x) + u(splat)
    xr = x @ R.T
    splat_r = splat @ R.T
    branch_b = u(xr) + u(splat_r)
    return np.minimum(branch_a, branch_b) / eta


# ---------------------------------------------------------------------------
# random spheres


_SPHERE_COEFFS = hg.HashCoefficients(n_uniforms=3)


def spheres2d(p, eta, r):
    """Randomly placed spheres on the scaled grid floor(eta * p).

    Centers come from the cell-hash PRNG over the dual window, the radius r
    is shared, and the whole expression divides by eta. Flooring kills the
    derivative in eta and the PRNG is not differentiable, so this field is
    flagged non-smooth and refuses gradient-based fitting configurations.
    """
    if eta <= 0:
        raise DomainError("noise scale eta must be positive")
    if r <= 0:
        raise DomainError("sphere radius must be positive")
    p = np.asarray(p, dtype=np.float64)
    y = p * eta
    base = np.floor(y - 0.5).astype(np.int64)
    best = np.full(y.shape[:-1], np.inf)
    for off in hg.DUAL_OFFSETS:
        q = base + off
        xi = hg.rnd(hg.seed_for_cell(q, _SPHERE_COEFFS), 3)
        c = q + np.stack([xi[0], xi[1], xi[2]], axis=-1)
        best = np.minimum(best, np.linalg.norm(c - y, axis=-1))
    return (best - r) / eta


def spheres2d_centers(cells):
    """Centers generated for given cells (scaled coordinates); test hook."""
    cells = np.asarray(cells, dtype=np.int64)
    xi = hg.rnd(hg.seed_for_cell(cells, _SPHERE_COEFFS), 3)
    return cells + np.stack([xi[0], xi[1], xi[2]], axis=-1)


# ---------------------------------------------------------------------------
# porous


POROUS_EPS = 1e-3


def _vv(x):
    return _gyroid_sum(x) ** 2


def _ww(x):
    x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
    s = np.sin(x0) * np.sin(x1) + np.sin(x1) * np.sin(x2) + np.sin(x2) * np.sin(x0)
    return s**2


def porous28d(p, eta, T):
    """Porous microstructure driven by three 3x3 frequency matrices.

    value = min(eps, v(eta T1 p) + w(eta T2 p) * v(eta T3 p)) / eta with
    v, w squared trig sums and eps a small positive cap.
    """
    if eta <= 0:
        raise DomainError("noise scale eta must be positive")
    T = np.asarray(T, dtype=np.float64).reshape(3, 3, 3)
    p = np.asarray(p, dtype=np.float64)
    a1 = np.einsum("ij,...j->...i", eta * T[0], p)
    a2 = np.einsum("ij,...j->...i", eta * T[1], p)
    a3 = np.einsum("ij,...j->...i", eta * T[2], p)
    return np.minimum(POROUS_EPS, _vv(a1) + _ww(a2) * _vv(a3)) / eta


# ---------------------------------------------------------------------------
# TPMS level sets


def tpms(name, p, cell=2.0 * np.pi, thickness=0.0):
    """Classic triply periodic minimal-surface level sets.

    Supported names: "gyroid", "diamond", "primitive". 2*pi/cell sets the
    spatial frequency; thickness offsets the level set.
    """
    if cell <= 0:
        raise DomainError("cell size must be positive")
    k = 2.0 * np.pi / cell
    x = np.asarray(p, dtype=np.float64) * k
    x0, x1, x2 = x[..., 0], x[..., 1], x[..., 2]
    if name == "gyroid":
        v = _gyroid_sum(np.asarray(p, dtype=np.float64), k)
    elif name == "diamond":
        v = (
            np.sin(x0) * np.sin(x1) * np.sin(x2)
            + np.sin(x0) * np.cos(x1) * np.cos(x2)
            + np.cos(x0) * np.sin(x1) * np.cos(x2)
            + np.cos(x0) * np.cos(x1) * np.sin(x2)
        )
    elif name == "primitive":
        v = np.cos(x0) + np.cos(x1) + np.cos(x2)
    else:
        raise ConfigError(f"unknown periodic surface {name!r}")
    return v + thickness


def tpms_field(name, cell=2.0 * np.pi, thickness=0.0):
    k = 2.0 * np.pi / cell
    bounds = {"gyroid": GYROID_GRAD_MAX, "diamond": GYROID_GRAD_MAX, "primitive": np.sqrt(3.0)}
    if name not in bounds:
        raise ConfigError(f"unknown periodic surface {name!r}")

    def fn(p):
        return tpms(name, p, cell, thickness)

    return ScalarField(fn, lipschitz=bounds[name] * k, cost=1, name=f"tpms-{name}")


# ---------------------------------------------------------------------------
# squared-sine particle lattice and its quadratic local model


def sc_particles(p, omega=1.0, width=0.0):
    """sin^2(w px) + sin^2(w py) + sin^2(w pz) + width.

    Near every lattice point the leading behavior is width + omega^2 |p|^2,
    i.e. a sphere-like quadratic bowl; see the quartic-remainder property
    test for the bound on the next term.
    """
    p = np.asarray(p, dtype=np.float64)
    return np.sum(np.sin(omega * p) ** 2, axis=-1) + width


def sc_particles_quadratic(p, omega=1.0, width=0.0):
    """The local quadratic model width + omega^2 |p|^2 around the origin."""
    p = np.asarray(p, dtype=np.float64)
    return width + omega**2 * np.sum(p * p, axis=-1)


# ---------------------------------------------------------------------------
# microstructure registry


# frozen draw from [-4, 7]^27 (seeded once; ground truth must be concrete)
POROUS_GT_T = np.array(
    [
        [[-1.083, -3.916, 5.515], [2.455, -2.450, -0.331], [-1.177, -1.973, -1.795]],
        [[-0.103, 5.795, 2.065], [-2.631, 4.838, 4.445], [-1.931, -2.190, -0.032]],
        [[-3.059, -2.227, -3.806], [2.853, 5.543, 1.939], [5.626, 5.360, 0.420]],
    ]
)


@dataclass(frozen=True)
class Microstructure:
    """A named parametric field: builder plus parameter-space metadata."""

    name: str
    param_names: tuple
    bounds: tuple
    ground_truth: tuple
    init: tuple
    smooth: bool
    builder: callable
    lipschitz: callable  # params -> declared bound

    def build(self, params):
        params = tuple(float(v) for v in params)
        if len(params) != len(self.param_names):
            raise ConfigError(
                f"{self.name} takes {len(self.param_names)} parameters, got {len(params)}"
            )
        fn = self.builder(params)
        return ScalarField(
            fn,
            lipschitz=self.lipschitz(params),
            cost=8 if not self.smooth else 1,
            smooth=self.smooth,
            params=params,
            name=self.name,
        )


def _registry():
    sqrt3 = math.sqrt(3.0)
    entries = {}

    entries["gyroid1d"] = Microstructure(
        name="gyroid1d",
        param_names=("eta",),
        bounds=((1.0, 500.0),),
        ground_truth=(100.0,),
        init=(300.0,),
        smooth=True,
        builder=lambda ps: (lambda p: gyroid1d(p, ps[0])),
        lipschitz=lambda ps: sqrt3,
    )
    entries["gyroid3d"] = Microstructure(
        name="gyroid3d",
        param_names=("eta", "a", "t"),
        bounds=((1.0, 500.0), (1.0, 20.0), (-5.0, 5.0)),
        ground_truth=(100.0, 7.0, 1.2),
        init=(300.0, 6.0, 0.0),
        smooth=True,
        builder=lambda ps: (lambda p: gyroid3d(p, *ps)),
        lipschitz=lambda ps: GYROID_GRAD_MAX * (2 * np.pi / ps[1]),
    )
    entries["gyroid5d"] = Microstructure(
        name="gyroid5d",
        param_names=("eta", "a1", "a2", "a3", "t"),
        bounds=((1.0, 500.0), (1.0, 20.0), (1.0, 20.0), (1.0, 20.0), (-5.0, 5.0)),
        ground_truth=(100.0, 7.0, 10.0, 15.0, 1.2),
        init=(200.0, 6.0, 6.0, 6.0, 6.0),
        smooth=True,
        builder=lambda ps: (lambda p: gyroid5d(p, *ps)),
        lipschitz=lambda ps: 2.0 * (2 * np.pi / min(ps[1], ps[2], ps[3])) * sqrt3,
    )  # mixed frequencies: per-axis terms pair different k_i, keep 2 sqrt(3) k_max
    entries["fibers2d"] = Microstructure(
        name="fibers2d",
        param_names=("eta", "phi"),
        bounds=((1.0, 500.0), (0.0, np.pi)),
        ground_truth=(100.0, np.pi / 4.0),
        init=(200.0, np.pi),
        smooth=True,
        builder=lambda ps: (lambda p: fibers2d(p, *ps)),
        # branch = u + u(splat): the splat chain multiplies by sqrt(3)
        lipschitz=lambda ps: GYROID_SQ_GRAD_MAX * (1.0 + sqrt3),
    )
    entries["spheres2d"] = Microstructure(
        name="spheres2d",
        param_names=("eta", "r"),
        bounds=((1.0, 500.0), (0.01, 0.5)),
        ground_truth=(30.0, 0.08),
        init=(150.0, 0.2),
        smooth=False,
        builder=lambda ps: (lambda p: spheres2d(p, *ps)),
        lipschitz=lambda ps: 1.0,
    )

    porous_names = ("eta",) + tuple(
        f"T{m}{i}{j}" for m in range(3) for i in range(3) for j in range(3)
    )
    porous_bounds = ((1.0, 100.0),) + ((-4.0, 7.0),) * 27

    def porous_builder(ps):
        eta = ps[0]
        T = np.asarray(ps[1:], dtype=float).reshape(3, 3, 3)
        return lambda p: porous28d(p, eta, T)

    def porous_lipschitz(ps):
        T = np.asarray(ps[1:], dtype=float).reshape(3, 3, 3)
        s = [np.linalg.norm(T[i], ord=2) for i in range(3)]
        return (
            GYROID_SQ_GRAD_MAX * s[0]
            + GYROID_SUM_MAX**2 * SINSIN_SQ_GRAD_MAX * s[1]
            + SINSIN_SQ_MAX * GYROID_SQ_GRAD_MAX * s[2]
        ) + 1e-6

    entries["porous28d"] = Microstructure(
        name="porous28d",
        param_names=porous_names,
        bounds=porous_bounds,
        ground_truth=(30.0,) + tuple(POROUS_GT_T.ravel()),
        init=(50.0,) + (1.5,) * 27,
        smooth=True,
        builder=porous_builder,
        lipschitz=porous_lipschitz,
    )
    return entries


MICROSTRUCTURES = _registry()


def microstructure(name):
    try:
        return MICROSTRUCTURES[name]
    except KeyError:
        raise ConfigError(
            f"unknown microstructure {name!r}; choose from {sorted(MICROSTRUCTURES)}"
        ) from None
