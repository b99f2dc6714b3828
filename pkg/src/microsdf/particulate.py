"""Suspended particulate media on the dual grid.

One particle per grid cell, instantiated deterministically from the cell
hash; a query point only ever sees the 8 dual-neighborhood cells, which is
sufficient because bounding radii are capped at half a cell width. Values
are clamped at w/2 so a sphere-traced ray can never jump past the bounding
sphere of a particle hiding in a farther cell; the tracer's sign-change
backtracking recovers the surfaces this clamp hides.

Cell-scaled convention: a particle's scale s is its bounding diameter in
units of the cell width, so s in [0, 1) always satisfies the radius cap.
Field values are returned in scene units (cell-scaled minimum times w).
"""

from dataclasses import dataclass

import numpy as np

from . import hashgrid as hg
from .errors import ConfigError, DomainError
from .fields import OffsetFunction, ScalarField, WarpFunction

DUAL8 = "dual8"
MOORE27 = "moore27"


@dataclass(frozen=True)
class GridSpec:
    """Cell width w (scene units), scene scale (meters per scene unit),
    hash coefficients, and the neighborhood regime."""

    w: float
    scene_scale: float = 1.0
    coeffs: hg.HashCoefficients = hg.HashCoefficients()
    neighborhood: str = DUAL8

    def __post_init__(self):
        if self.w <= 0:
            raise ConfigError("cell width must be positive")
        if self.scene_scale <= 0:
            raise ConfigError("scene scale must be positive")
        if self.neighborhood not in (DUAL8, MOORE27):
            raise ConfigError(f"unknown neighborhood {self.neighborhood!r}")

    @property
    def physical_cell_width(self):
        return self.scene_scale * self.w

    @property
    def number_density(self):
        """Particles per cubic meter at one particle per cell."""
        return self.physical_cell_width**-3

    def to_dict(self):
        return {
            "w": self.w,
            "scene_scale": self.scene_scale,
            "coeffs": self.coeffs.to_dict(),
            "neighborhood": self.neighborhood,
        }

    @classmethod
    def from_dict(cls, d):
        coeffs = hg.HashCoefficients.from_dict(d["coeffs"]) if "coeffs" in d else hg.HashCoefficients()
        return cls(
            w=float(d["w"]),
            scene_scale=float(d.get("scene_scale", 1.0)),
            coeffs=coeffs,
            neighborhood=d.get("neighborhood", DUAL8),
        )


# ---------------------------------------------------------------------------
# size laws


@dataclass(frozen=True)
class FixedSize:
    s: float
    draws = 0

    def __post_init__(self):
        if not 0.0 <= self.s < 1.0:
            raise ConfigError("fixed size must be in [0, 1)")

    def max_size(self):
        return self.s

    def sample(self, u1=None, u2=None):
        if u1 is None:
            return self.s
        return np.full_like(np.asarray(u1, dtype=float), self.s)


@dataclass(frozen=True)
class UniformSize:
    lo: float
    hi: float
    draws = 1

    def __post_init__(self):
        if not (0.0 <= self.lo <= self.hi < 1.0):
            raise ConfigError("uniform size bounds must satisfy 0 <= lo <= hi < 1")

    def max_size(self):
        return self.hi

    def sample(self, u1, u2=None):
        return self.lo + np.asarray(u1, dtype=float) * (self.hi - self.lo)


@dataclass(frozen=True)
class NormalSize:
    """Gaussian size via Box-Muller, clamped at +-4 sigma and the legal range."""

    mu: float
    sigma: float
    draws = 2

    def __post_init__(self):
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")
        if not 0.0 <= self.mu < 1.0:
            raise ConfigError("mu must lie in [0, 1)")
        if self.max_size() >= 1.0:
            raise ConfigError("mu + 4 sigma exceeds the legal particle size")

    def max_size(self):
        return self.mu + 4.0 * self.sigma

    def sample(self, u1, u2):
        u1 = np.asarray(u1, dtype=float)
        u2 = np.asarray(u2, dtype=float)
        z = np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)
        z = np.clip(z, -4.0, 4.0)
        return np.clip(self.mu + self.sigma * z, 0.0, self.max_size())


def sample_size(law, u1=None, u2=None):
    """Sample one particle scale from a size law and unit uniforms."""
    return law.sample(u1, u2)


# ---------------------------------------------------------------------------
# recipes


@dataclass(frozen=True)
class ParticleRecipe:
    """What to put in each grid cell.

    ``shape`` is one of "sphere", "capsule", "ellipsoid". The acceptance
    function ``accept_g`` (grid coordinates -> [0, 1]) thins cells by
    Russian roulette against the cell's last uniform. ``center_box``
    restricts particle centers to a sub-box of the unit cell.
    """

    shape: str = "sphere"
    size_law: object = UniformSize(0.0, 0.999)
    accept_g: object = None
    center_box: tuple = None  # ((lox, loy, loz), (hix, hiy, hiz)) in [0,1]
    capsule_aspect: float = 0.5  # fraction of the bounding radius in half-length
    ellipsoid_aspect: float = 2.0  # long axis / short axis

    def __post_init__(self):
        if self.shape not in ("sphere", "capsule", "ellipsoid"):
            raise ConfigError(f"unknown particle shape {self.shape!r}")
        if self.shape == "ellipsoid" and self.ellipsoid_aspect < 1.0:
            raise ConfigError("ellipsoid aspect must be >= 1")
        if not 0.0 <= self.capsule_aspect < 1.0:
            raise ConfigError("capsule aspect must be in [0, 1)")
        if self.center_box is not None:
            lo, hi = (np.asarray(v, dtype=float) for v in self.center_box)
            if np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
                raise ConfigError("center box must be a sub-box of the unit cell")

    def orientation_draws(self):
        return 2 if self.shape == "ellipsoid" else 0

    def required_uniforms(self, with_accept=None):
        accept = self.accept_g is not None if with_accept is None else with_accept
        return 3 + self.size_law.draws + self.orientation_draws() + (1 if accept else 0)

    def validate_against(self, grid):
        if self.size_law.max_size() >= (1.0 if grid.neighborhood == DUAL8 else 2.0):
            raise ConfigError("particle bounding radius exceeds the neighborhood cap")
        need = self.required_uniforms()
        if grid.coeffs.n_uniforms < need:
            raise ConfigError(
                f"recipe needs {need} uniforms per cell, grid provides {grid.coeffs.n_uniforms}"
            )


def accept_particle(q, g, xi):
    """Russian roulette: keep the particle of cell q iff xi < g(cell center).

    The center is taken in grid coordinates (q + 1/2). A rejected cell
    contributes +inf to the suspension minimum.
    """
    center = np.asarray(q, dtype=float) + 0.5
    return bool(np.asarray(xi) < g(center)) if np.ndim(xi) == 0 else np.asarray(xi) < g(center)


def modular_correlation_g(n):
    """Acceptance function whose kept cells cluster in (n/2)^3 blocks.

    Accept where every axis satisfies |mod(|p_i|, n)| < n/2; the absolute
    value around the mod is redundant for non-negative arguments but kept
    as specified.
    """
    if n < 2:
        raise DomainError("cluster period n must be >= 2")

    def g(p):
        p = np.asarray(p, dtype=float)
        ok = np.abs(np.mod(np.abs(p), n)) < n / 2.0
        return np.all(ok, axis=-1).astype(float)

    return g


# ---------------------------------------------------------------------------
# per-cell particle distances


def _unit_from_angles(u, v):
    """Map two uniforms to a unit vector (uniform on the sphere)."""
    z = 2.0 * u - 1.0
    phi = 2.0 * np.pi * v
    r = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=-1)


def _cell_particle_distance(pw, q, recipe, coeffs):
    """Distance from cell-scaled query points to cell q's particle.

    pw: (N, 3) cell-scaled points; q: (N, 3) int cells. Returns (N,) values
    in cell units; rejected cells return +inf.
    """
    t = hg.seed_for_cell(q, coeffs)
    xi = hg.rnd(t, coeffs.n_uniforms)
    off = np.stack([xi[0], xi[1], xi[2]], axis=-1)
    if recipe.center_box is not None:
        lo, hi = (np.asarray(v, dtype=float) for v in recipe.center_box)
        off = lo + off * (hi - lo)
    x = q.astype(np.float64) + off

    k = 3
    law = recipe.size_law
    if law.draws == 0:
        s = np.full(pw.shape[0], law.max_size())
    elif law.draws == 1:
        s = law.sample(xi[k])
    else:
        s = law.sample(xi[k], xi[k + 1])
    k += law.draws

    if recipe.shape == "sphere":
        d = np.linalg.norm(pw - x, axis=-1) - 0.5 * s
    elif recipe.shape == "capsule":
        u = np.array([0.0, 1.0, 0.0])
        half = recipe.capsule_aspect * 0.5 * s
        r = (1.0 - recipe.capsule_aspect) * 0.5 * s
        rel = pw - x
        along = np.clip(np.sum(rel * u, axis=-1), -half, half)
        d = np.linalg.norm(rel - along[..., None] * u, axis=-1) - r
    elif recipe.shape == "ellipsoid":
        axis = _unit_from_angles(xi[k], xi[k + 1])
        k += 2
        a_long = 0.5 * s
        a_short = a_long / recipe.ellipsoid_aspect
        rel = pw - x
        par = np.sum(rel * axis, axis=-1)
        perp = np.linalg.norm(rel - par[..., None] * axis, axis=-1)
        raw = np.sqrt((par / a_long) ** 2 + (perp / a_short) ** 2) - 1.0
        d = raw * a_short  # divide by the Lipschitz bound max(1/a_i)
    else:  # pragma: no cover - guarded by recipe validation
        raise ConfigError(recipe.shape)

    if recipe.accept_g is not None:
        xi_accept = xi[coeffs.n_uniforms - 1]
        keep = xi_accept < recipe.accept_g(q.astype(np.float64) + 0.5)
        d = np.where(keep, d, np.inf)
    return d


# ---------------------------------------------------------------------------
# the suspension field


def suspended_sdf(grid, recipe, f=None, h=None):
    """Suspended particulate medium as a scene-unit scalar field.

    eval(p) = min(f(p) + w * min_i d_cell_i((p + h(p)) / w), w / 2)
    over the 8 dual-grid neighbor cells. Deterministic per (grid, recipe).
    """
    recipe.validate_against(grid)
    w = grid.w
    coeffs = grid.coeffs
    f_fn = f if f is not None else None
    h_fn = h if h is not None else None

    def fn(p):
        p = np.asarray(p, dtype=np.float64)
        squeeze = p.ndim == 1
        p = np.atleast_2d(p)
        orig_shape = p.shape[:-1]
        pts = p.reshape(-1, 3)
        warped = pts + h_fn.h(pts) if h_fn is not None else pts
        pw = warped / w
        base = np.floor(pw - 0.5).astype(np.int64)
        best = np.full(pw.shape[0], np.inf)
        for off in hg.DUAL_OFFSETS:
            d = _cell_particle_distance(pw, base + off, recipe, coeffs)
            best = np.minimum(best, d)
        vals = w * best
        if f_fn is not None:
            vals = f_fn.f(pts) + vals
        vals = np.minimum(vals, 0.5 * w)
        return vals.reshape(orig_shape) if not squeeze else vals[0]

    lip = 1.0
    if h_fn is not None:
        lip *= 1.0 + h_fn.lipschitz
    if f_fn is not None:
        lip += f_fn.lipschitz
    return ScalarField(
        fn,
        lipschitz=lip,
        cost=8,
        smooth=False,
        cell_width=w,
        name="suspension",
    )


def cluster_sdf(grid, recipe, n):
    """Particle clusters of size n: fine cloud (width 2w/n) cut by the
    coarse cloud (width w). n == 2 degenerates to the intersection of two
    equal-width clouds."""
    if n <= 0:
        raise DomainError("cluster size must be positive")
    fine = GridSpec(
        w=2.0 * grid.w / n,
        scene_scale=grid.scene_scale,
        coeffs=grid.coeffs,
        neighborhood=grid.neighborhood,
    )
    a = suspended_sdf(fine, recipe)
    b = suspended_sdf(grid, recipe)

    def fn(p):
        return np.maximum(a.fn(p), b.fn(p))

    return ScalarField(
        fn,
        lipschitz=max(a.lipschitz, b.lipschitz),
        cost=a.cost + b.cost,
        smooth=False,
        cell_width=grid.w,
        name="clusters",
    )


# ---------------------------------------------------------------------------
# multi-phase transform


def multiphase_map(amplitude):
    """Point map p -> p . (A D(p)) with D the cyclic sine matrix.

    A is the 3x3 amplitude matrix (entries in [0, 1]); D(p) rows are
    (sin py, sin pz, sin px / sin pz, sin px, sin py / sin px, sin py,
    sin pz). Feeding the mapped point to a particulate field produces
    multi-phase clouds whose local shape varies through the volume.
    """
    A = np.asarray(amplitude, dtype=np.float64)
    if A.shape != (3, 3):
        raise ConfigError("amplitude matrix must be 3x3")
    if np.any(A < 0) or np.any(A > 1):
        raise ConfigError("amplitude entries must lie in [0, 1]")

    def mapped(p):
        p = np.asarray(p, dtype=np.float64)
        sx, sy, sz = np.sin(p[..., 0]), np.sin(p[..., 1]), np.sin(p[..., 2])
        D = np.empty(p.shape[:-1] + (3, 3))
        D[..., 0, 0], D[..., 0, 1], D[..., 0, 2] = sy, sz, sx
        D[..., 1, 0], D[..., 1, 1], D[..., 1, 2] = sz, sx, sy
        D[..., 2, 0], D[..., 2, 1], D[..., 2, 2] = sx, sy, sz
        T = np.einsum("ij,...jk->...ik", A, D)
        return np.einsum("...i,...ik->...k", p, T)

    return mapped


def multiphase_warp(amplitude, lipschitz):
    """The multi-phase transform as a displacement warp h(p) = p.T - p.

    The Lipschitz bound of the map grows with |p|, so the caller declares a
    bound valid on the intended domain.
    """
    mapped = multiphase_map(amplitude)

    def h(p):
        return mapped(p) - np.asarray(p, dtype=np.float64)

    return WarpFunction(h, lipschitz=lipschitz)


# ---------------------------------------------------------------------------
# helpers used by tests and demos


def count_particles(grid, recipe, lo, hi):
    """Number of accepted particles with centers inside a scene-unit box."""
    recipe.validate_against(grid)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    qlo = np.floor(lo / grid.w).astype(np.int64) - 1
    qhi = np.floor(hi / grid.w).astype(np.int64) + 1
    axes = [np.arange(a, b + 1) for a, b in zip(qlo, qhi)]
    qs = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    t = hg.seed_for_cell(qs, grid.coeffs)
    xi = hg.rnd(t, grid.coeffs.n_uniforms)
    off = np.stack([xi[0], xi[1], xi[2]], axis=-1)
    if recipe.center_box is not None:
        blo, bhi = (np.asarray(v, dtype=float) for v in recipe.center_box)
        off = blo + off * (bhi - blo)
    centers = (qs + off) * grid.w
    keep = np.all((centers >= lo) & (centers < hi), axis=-1)
    if recipe.accept_g is not None:
        keep &= xi[grid.coeffs.n_uniforms - 1] < recipe.accept_g(qs + 0.5)
    return int(np.count_nonzero(keep))


def brute_force_distance(grid, recipe, p, block=2):
    """Scene-unit distance to the nearest particle over a (2*block+1)^3
    cell block; the oracle the 8-cell field is checked against."""
    p = np.asarray(p, dtype=np.float64)
    pw = p / grid.w
    base = np.floor(pw).astype(np.int64)
    best = np.inf
    for off in np.ndindex(2 * block + 1, 2 * block + 1, 2 * block + 1):
        q = base + np.asarray(off) - block
        d = _cell_particle_distance(pw[None, :], q[None, :], recipe, grid.coeffs)[0]
        best = min(best, d)
    return grid.w * best
