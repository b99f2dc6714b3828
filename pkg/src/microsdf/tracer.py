"""Sphere tracing and rendering with full evaluation accounting.

The tracer marches rays in lockstep over numpy batches. Every policy
shares the same skeleton: advance t by the entry sign times the scaled
field value, stop when |d| < precision * t, and recover crossings missed
by long steps through sign-change detection plus interval bisection (the
backtrack). Policies differ only in how the step is scaled:

* PureSphere   - value / declared Lipschitz bound, factor 1.
* Fixed        - the same, damped by a constant factor.
* AdaptiveEveryN / AdaptivePoly - renormalize by the last *measured*
  gradient, max(|grad|, delta_min * L), damped by
  lerp(delta_min, 1, clamp(|grad| * 0.5, 0, 1)); the gradient refreshes
  every N steps or where the polynomial gate fires. Where the measured
  gradient sits at the declared bound this reduces exactly to pure sphere
  stepping; in flatter regions it takes longer steps, and the bisection
  backtracking covers occasional overshoot from stale estimates.
* Bijection    - coarse fixed-length scan refined by bisection (an
  interpretation; see README).

TraceStats.sdf_evals counts primitive SDF evaluations: points evaluated
times the field's per-query cost (1 closed form, 8 dual-grid, 27 Moore),
so grid fields are charged for their neighbor loops.
"""

import math
from dataclasses import dataclass, field as dc_field, replace

import numpy as np

from . import hashgrid as hg
from .errors import ConfigError, ContractError, DomainError, FieldEvaluationError
from .fields import ScalarField

# ---------------------------------------------------------------------------
# camera and rays


@dataclass(frozen=True)
class Camera:
    """Pinhole camera: intrinsics K, extrinsics E = [R | t], image size."""

    K: np.ndarray
    E: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        K = np.asarray(self.K, dtype=np.float64)
        E = np.asarray(self.E, dtype=np.float64)
        if K.shape != (3, 3):
            raise ContractError("K must be 3x3")
        if E.shape != (3, 4):
            raise ContractError("E must be 3x4")
        if abs(np.linalg.det(K)) < 1e-12:
            raise ContractError("K must be invertible")
        R = E[:, :3]
        if not np.allclose(R @ R.T, np.eye(3), atol=1e-9):
            raise ContractError("rotation part of E must be orthonormal")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "E", E)

    @classmethod
    def look_at(cls, position, target, up=(0, 1, 0), fov_deg=45.0, width=64, height=64):
        position = np.asarray(position, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        forward = target - position
        forward = forward / np.linalg.norm(forward)
        right = np.cross(np.asarray(up, dtype=np.float64), forward)
        right = right / np.linalg.norm(right)
        down = np.cross(right, forward)
        R = np.stack([right, down, forward])
        t = -R @ position
        f = 0.5 * width / math.tan(math.radians(fov_deg) / 2.0)
        K = np.array([[f, 0.0, width / 2.0], [0.0, f, height / 2.0], [0.0, 0.0, 1.0]])
        return cls(K=K, E=np.hstack([R, t[:, None]]), width=width, height=height)

    @property
    def position(self):
        R, t = self.E[:, :3], self.E[:, 3]
        return -R.T @ t

    def rays(self, jitter=None):
        """Rays through pixel centers (row-major). ``jitter`` optionally
        offsets sample positions inside each pixel, shape (H*W, 2)."""
        H, W = self.height, self.width
        jj, ii = np.meshgrid(np.arange(W), np.arange(H))
        uv = np.stack([jj.ravel() + 0.5, ii.ravel() + 0.5], axis=-1).astype(np.float64)
        if jitter is not None:
            uv = uv + (np.asarray(jitter, dtype=np.float64) - 0.5)
        ones = np.ones((uv.shape[0], 1))
        pix = np.hstack([uv, ones])
        dirs_cam = pix @ np.linalg.inv(self.K).T
        R = self.E[:, :3]
        dirs = dirs_cam @ R  # R.T applied to rows
        dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
        origins = np.broadcast_to(self.position, dirs.shape).copy()
        return origins, dirs

    def to_dict(self):
        return {
            "K": self.K.tolist(),
            "E": self.E.tolist(),
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d):
        if "K" in d:
            return cls(
                K=np.asarray(d["K"], dtype=float),
                E=np.asarray(d["E"], dtype=float),
                width=int(d["width"]),
                height=int(d["height"]),
            )
        return cls.look_at(
            d["position"],
            d.get("look_at", (0, 0, 0)),
            d.get("up", (0, 1, 0)),
            d.get("fov_deg", 45.0),
            int(d.get("width", 64)),
            int(d.get("height", 64)),
        )


@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_min: float = 0.0
    t_max: float = np.inf

    def __post_init__(self):
        o = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.direction, dtype=np.float64)
        if abs(np.linalg.norm(d) - 1.0) > 1e-12:
            raise ContractError("ray direction must be unit length")
        if not self.t_min < self.t_max:
            raise ContractError("t_min must be below t_max")
        object.__setattr__(self, "origin", o)
        object.__setattr__(self, "direction", d)


@dataclass
class TraceStats:
    sdf_evals: int = 0
    gradient_evals: int = 0
    steps: int = 0
    backtracks: int = 0

    def merge(self, other):
        self.sdf_evals += other.sdf_evals
        self.gradient_evals += other.gradient_evals
        self.steps += other.steps
        self.backtracks += other.backtracks
        return self

    def to_dict(self):
        return {
            "sdf_evals": self.sdf_evals,
            "gradient_evals": self.gradient_evals,
            "steps": self.steps,
            "backtracks": self.backtracks,
        }


# ---------------------------------------------------------------------------
# step policies and gradient gates


@dataclass(frozen=True)
class PureSphere:
    kind = "pure"


@dataclass(frozen=True)
class Fixed:
    delta: float = 0.5
    kind = "fixed"

    def __post_init__(self):
        if not 0.0 < self.delta <= 1.0:
            raise ConfigError("fixed step factor must be in (0, 1]")


@dataclass(frozen=True)
class AdaptiveEveryN:
    n: int = 10
    delta_min: float = 0.25
    kind = "every_n"

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("refresh interval must be >= 1")
        if not 0.0 < self.delta_min <= 1.0:
            raise ConfigError("delta_min must be in (0, 1]")


@dataclass(frozen=True)
class AdaptivePoly:
    gate: object = None  # FmCase | ScCase
    delta_min: float = 0.25
    kind = "poly"

    def __post_init__(self):
        if self.gate is None:
            object.__setattr__(self, "gate", FmCase())
        if not 0.0 < self.delta_min <= 1.0:
            raise ConfigError("delta_min must be in (0, 1]")


@dataclass(frozen=True)
class Bijection:
    num_steps: int = 256
    kind = "bijection"

    def __post_init__(self):
        if self.num_steps < 2:
            raise ConfigError("bijection scan needs at least 2 steps")


@dataclass(frozen=True)
class FmCase:
    """Gate fires where a coordinate sits near a multiple of its modulus:
    |fmod(py, n1)| < band or (|fmod(pz, n2)| < band and |fmod(px, n3)| < band).
    Exact float equality would almost never fire, hence the band."""

    n1: float = 11.0
    n2: float = 5.0
    n3: float = 7.0
    band: float = 0.05

    def __post_init__(self):
        if self.band <= 0:
            raise DomainError("gate band must be positive")

    def __call__(self, p):
        p = np.asarray(p, dtype=np.float64)
        a = np.abs(np.fmod(p[..., 1], self.n1)) < self.band
        b = np.abs(np.fmod(p[..., 2], self.n2)) < self.band
        c = np.abs(np.fmod(p[..., 0], self.n3)) < self.band
        return a | (b & c)


@dataclass(frozen=True)
class ScCase:
    """Gate fires near a level set of the unit-frequency gyroid sum."""

    level: float = 0.5
    tol: float = 0.05

    def __post_init__(self):
        if self.tol <= 0:
            raise DomainError("gate tolerance must be positive")

    def __call__(self, p):
        p = np.asarray(p, dtype=np.float64)
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        g = np.sin(x) * np.cos(y) + np.sin(y) * np.cos(z) + np.sin(z) * np.cos(x)
        return np.abs(g - self.level) < self.tol


def d_p_gate(rule, p):
    """Evaluate a step-refresh gate at p (single point or batch)."""
    out = rule(p)
    return bool(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# counting wrapper


def _counted(fld, stats):
    """Clone of the field whose evaluations accumulate into stats."""

    def fn(p):
        p = np.asarray(p, dtype=np.float64)
        n = 1 if p.ndim == 1 else int(np.prod(p.shape[:-1]))
        stats.sdf_evals += n * fld.cost
        v = fld.fn(p)
        return v

    return replace(fld, fn=fn)


def compute_grid_scale(fld, p, eps=0.01, stats=None):
    """Step scale from the local gradient: clamp(|grad d| * 0.5, 0, 1).

    Central differences with step eps (normalized by 2 eps). Returns
    (scale, gradient_magnitude) for single points or batches. ``stats``
    tracks the gradient count; SDF evaluations are charged by the field
    wrapper the tracer installs, so pass an already-counted field when
    evaluation totals matter.
    """
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if stats is not None:
        stats.gradient_evals += p.shape[0]
    sq = np.zeros(p.shape[0])
    for axis in range(3):
        dp = np.zeros(3)
        dp[axis] = eps
        diff = (fld.fn(p + dp) - fld.fn(p - dp)) / (2.0 * eps)
        sq += diff * diff
    grad = np.sqrt(sq)
    scale = np.clip(grad * 0.5, 0.0, 1.0)
    if scale.shape == (1,):
        return float(scale[0]), float(grad[0])
    return scale, grad


def _check_finite(d, ro, rd, t):
    bad = ~np.isfinite(d)
    if np.any(bad):
        # +inf is a legitimate "rejected everything" value, only NaN is fatal
        nan = np.isnan(d)
        if np.any(nan):
            i = int(np.argmax(nan))
            raise FieldEvaluationError(
                "field returned NaN during tracing",
                origin=ro[i].copy(),
                direction=rd[i].copy(),
                t=float(t[i]),
            )


def _bisect(fld, ro, rd, s, t_lo, t_hi, iters=40):
    """Tighten sign-change brackets: s * d(t_lo) > 0 >= s * d(t_hi)."""
    for _ in range(iters):
        mid = 0.5 * (t_lo + t_hi)
        d = fld.fn(ro + mid[:, None] * rd)
        same = (s * d) > 0.0
        t_lo = np.where(same, mid, t_lo)
        t_hi = np.where(same, t_hi, mid)
    return t_hi


def trace_batch(fld, ro, rd, t_min, t_max, policy=PureSphere(), precision=1e-5,
                max_steps=512, stats=None):
    """March a batch of rays; returns (hit_mask, t_hit) plus stats updates.

    Sign handling: the sign of the first sample is stored per ray and the
    march advances by s * d so rays starting inside converge outward; a
    sign change between consecutive samples triggers bisection down to the
    bracket (counted as a backtrack).
    """
    if precision <= 0:
        raise DomainError("precision must be positive")
    stats = stats if stats is not None else TraceStats()
    fld = _counted(fld, stats)
    n = ro.shape[0]
    t = np.array(t_min, dtype=np.float64).copy() if np.ndim(t_min) else np.full(n, float(t_min))
    tmax = np.asarray(t_max, dtype=np.float64) if np.ndim(t_max) else np.full(n, float(t_max))

    if policy.kind == "bijection":
        return _trace_bijection(fld, ro, rd, t, tmax, policy, precision, stats)

    alive = t < tmax
    hit = np.zeros(n, dtype=bool)
    t_hit = np.full(n, np.nan)

    d = np.full(n, np.inf)
    if np.any(alive):
        d[alive] = fld.fn(ro[alive] + t[alive, None] * rd[alive])
    _check_finite(d, ro, rd, t)
    s = np.where(d >= 0.0, 1.0, -1.0)

    L = fld.lipschitz
    adaptive = policy.kind in ("every_n", "poly")
    if adaptive:
        grad_floor = policy.delta_min * L
        scale = np.zeros(n)
        grad = np.full(n, L)
        if np.any(alive):
            sc, gr = compute_grid_scale(fld, ro[alive] + t[alive, None] * rd[alive], stats=stats)
            scale[alive] = sc
            grad[alive] = gr
        inv_norm = 1.0 / np.maximum(grad, grad_floor)
        factor = policy.delta_min + scale * (1.0 - policy.delta_min)
    else:
        inv_norm = np.full(n, 1.0 / L)
        factor = np.full(n, policy.delta if policy.kind == "fixed" else 1.0)

    for step in range(max_steps):
        if not np.any(alive):
            break
        # terminate on proximity (relative precision)
        close = alive & (np.abs(d) / L < precision * np.maximum(t, 1e-12))
        hit |= close
        t_hit = np.where(close, t, t_hit)
        alive &= ~close
        # terminate on escape
        escaped = alive & (t > tmax)
        alive &= ~escaped
        if not np.any(alive):
            break

        prev_t = t.copy()
        stats.steps += int(np.count_nonzero(alive))
        t = np.where(alive, t + s * d * inv_norm * factor, t)
        p = ro + t[:, None] * rd
        nd = d.copy()
        nd[alive] = fld.fn(p[alive])
        _check_finite(nd, ro, rd, t)
        d = nd

        # sign change -> bisect the bracket (backtrack)
        flipped = alive & ((s * d) < 0.0)
        if np.any(flipped):
            stats.backtracks += int(np.count_nonzero(flipped))
            tb = _bisect(
                fld, ro[flipped], rd[flipped], s[flipped], prev_t[flipped], t[flipped]
            )
            t_hit[flipped] = tb
            hit |= flipped
            alive &= ~flipped

        if adaptive and np.any(alive):
            if policy.kind == "every_n":
                refresh = alive if (step + 1) % policy.n == 0 else np.zeros(n, dtype=bool)
            else:
                refresh = np.zeros(n, dtype=bool)
                refresh[alive] = d_p_gate(policy.gate, p[alive])
                refresh &= alive
            if np.any(refresh):
                sc, gr = compute_grid_scale(fld, p[refresh], stats=stats)
                scale[refresh] = sc
                grad[refresh] = gr
                inv_norm = 1.0 / np.maximum(grad, grad_floor)
                factor = policy.delta_min + scale * (1.0 - policy.delta_min)

    return hit, t_hit, stats


def _trace_bijection(fld, ro, rd, t0, tmax, policy, precision, stats):
    """Uniform scan at fixed parameter increments + bisection refinement."""
    n = ro.shape[0]
    hit = np.zeros(n, dtype=bool)
    t_hit = np.full(n, np.nan)
    span = np.where(np.isfinite(tmax), tmax - t0, 0.0)
    dt = span / policy.num_steps
    t = t0.copy()
    d0 = fld.fn(ro + t[:, None] * rd)
    _check_finite(d0, ro, rd, t)
    s = np.where(d0 >= 0.0, 1.0, -1.0)
    alive = (dt > 0) & (t < tmax)
    prev_t = t.copy()
    for _ in range(policy.num_steps):
        if not np.any(alive):
            break
        prev_t = np.where(alive, t, prev_t)
        stats.steps += int(np.count_nonzero(alive))
        t = np.where(alive, t + dt, t)
        d = np.zeros(n)
        d[alive] = fld.fn(ro[alive] + t[alive, None] * rd[alive])
        _check_finite(np.where(alive, d, 0.0), ro, rd, t)
        flipped = alive & ((s * d) < 0.0)
        if np.any(flipped):
            stats.backtracks += int(np.count_nonzero(flipped))
            tb = _bisect(
                fld, ro[flipped], rd[flipped], s[flipped], prev_t[flipped], t[flipped]
            )
            t_hit[flipped] = tb
            hit |= flipped
            alive &= ~flipped
        alive &= t < tmax
    return hit, t_hit, stats


def sphere_trace(fld, ray, policy=PureSphere(), precision=1e-5, max_steps=512):
    """Trace one ray; returns (hit dict or None, TraceStats).

    The hit carries t, position, and the central-difference surface normal.
    """
    stats = TraceStats()
    ro = ray.origin[None, :]
    rd = ray.direction[None, :]
    hit, t_hit, stats = trace_batch(
        fld, ro, rd, ray.t_min, ray.t_max, policy, precision, max_steps, stats
    )
    if not hit[0]:
        return None, stats
    t = float(t_hit[0])
    pos = ray.origin + t * ray.direction
    nrm = _surface_normals(fld, pos[None, :], stats)[0]
    return {"t": t, "position": pos, "normal": nrm}, stats


def _surface_normals(fld, p, stats, eps=None):
    from . import fields as fl

    counted = _counted(fld, stats)
    stats.gradient_evals += p.shape[0]
    return fl.normal(counted, p, eps)


# ---------------------------------------------------------------------------
# shading modes


@dataclass(frozen=True)
class NormalColor:
    background: tuple = (0.0, 0.0, 0.0)
    mode = "normal"


@dataclass(frozen=True)
class Lambert:
    light_dir: tuple = (0.4, -1.0, 0.3)
    light_color: tuple = (1.0, 1.0, 1.0)
    albedo: tuple = (0.8, 0.8, 0.8)
    ambient: tuple = (0.05, 0.05, 0.05)
    background: tuple = (0.0, 0.0, 0.0)
    mode = "lambert"


@dataclass(frozen=True)
class PathTrace:
    spp: int = 4
    max_depth: int = 8
    material: str = "lambert"  # "lambert" | "dielectric"
    albedo: tuple = (0.75, 0.75, 0.75)
    ior: float = 1.31
    absorption: tuple = (0.2, 0.1, 0.05)  # per unit length inside
    sky: tuple = (1.0, 1.0, 1.0)
    rr_start: int = 2
    mode = "path"

    def __post_init__(self):
        if self.spp < 1 or self.max_depth < 0:
            raise ConfigError("spp must be >= 1 and max_depth >= 0")
        if self.material not in ("lambert", "dielectric"):
            raise ConfigError(f"unknown material {self.material!r}")


def _path_rand(seed, pixel, sample, bounce, purpose, n_dims=1):
    """Counter-based uniforms: identical streams regardless of depth caps."""
    base = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    with np.errstate(over="ignore"):
        key = (
            np.asarray(pixel, dtype=np.uint64) * np.uint64(0x9E3779B97F4A7C15)
            + np.uint64(sample) * np.uint64(0xD1342543DE82EF95)
            + np.uint64(bounce) * np.uint64(0xAF251AF3B0F025B5)
            + np.uint64(purpose) * np.uint64(0x9E6C63D0876A9A47)
        )
    out = hg.rnd(hg._mix(base ^ key), n_dims)
    return out


def _cosine_hemisphere(n, u1, u2):
    """Cosine-weighted directions around unit normals n (batch)."""
    r = np.sqrt(u1)
    phi = 2.0 * np.pi * u2
    x = r * np.cos(phi)
    y = r * np.sin(phi)
    z = np.sqrt(np.maximum(0.0, 1.0 - u1))
    # orthonormal basis per normal
    helper = np.where(np.abs(n[:, 2:3]) < 0.9, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    tang = np.cross(helper, n)
    tang /= np.linalg.norm(tang, axis=-1, keepdims=True)
    bitan = np.cross(n, tang)
    return x[:, None] * tang + y[:, None] * bitan + z[:, None] * n


def render(fld, camera, shading=None, policy=PureSphere(), precision=1e-4,
           t_min=1e-3, t_max=50.0, seed=0, max_steps=512, tile_rows=32,
           bound_sphere=None):
    """Render the field; returns (linear RGB image (H, W, 3), TraceStats).

    NormalColor and Lambert are deterministic; PathTrace is deterministic
    for a given seed. Rows are processed in tiles, each merging its own
    statistics, so tiles can safely run on parallel workers.
    """
    shading = shading if shading is not None else NormalColor()
    H, W = camera.height, camera.width
    img = np.zeros((H * W, 3))
    stats = TraceStats()

    if shading.mode == "path":
        _render_path(fld, camera, shading, policy, precision, t_min, t_max,
                     seed, max_steps, img, stats)
        return img.reshape(H, W, 3), stats

    ro_all, rd_all = camera.rays()
    for row0 in range(0, H, tile_rows):
        tile = slice(row0 * W, min(H, row0 + tile_rows) * W)
        tile_stats = TraceStats()
        ro, rd = ro_all[tile], rd_all[tile]
        tmin, tmax = _ray_bounds(ro, rd, t_min, t_max, bound_sphere)
        hit, t_hit, _ = trace_batch(fld, ro, rd, tmin, tmax, policy, precision,
                                    max_steps, tile_stats)
        colors = np.broadcast_to(np.asarray(shading.background, dtype=float),
                                 (ro.shape[0], 3)).copy()
        if np.any(hit):
            pos = ro[hit] + t_hit[hit][:, None] * rd[hit]
            nrm = _surface_normals(fld, pos, tile_stats)
            if shading.mode == "normal":
                colors[hit] = 0.5 * (nrm + 1.0)
            else:
                l = -np.asarray(shading.light_dir, dtype=float)
                l = l / np.linalg.norm(l)
                lam = np.maximum(0.0, nrm @ l)
                colors[hit] = (
                    np.asarray(shading.albedo) * lam[:, None] * np.asarray(shading.light_color)
                    + np.asarray(shading.ambient)
                )
        img[tile] = colors
        stats.merge(tile_stats)
    return img.reshape(H, W, 3), stats


def _ray_bounds(ro, rd, t_min, t_max, bound_sphere):
    n = ro.shape[0]
    tmin = np.full(n, float(t_min))
    tmax = np.full(n, float(t_max))
    if bound_sphere is not None:
        center, radius = np.asarray(bound_sphere[0], dtype=float), float(bound_sphere[1])
        oc = ro - center
        b = np.sum(oc * rd, axis=-1)
        c = np.sum(oc * oc, axis=-1) - radius * radius
        disc = b * b - c
        ok = disc > 0
        sq = np.sqrt(np.maximum(disc, 0.0))
        enter = np.where(ok, -b - sq, np.inf)
        exit_ = np.where(ok, -b + sq, -np.inf)
        tmin = np.maximum(tmin, enter)
        tmax = np.minimum(tmax, exit_)
        tmax = np.where(ok & (exit_ > tmin), tmax, tmin - 1.0)  # force miss
    return tmin, tmax


def _render_path(fld, camera, cfg, policy, precision, t_min, t_max, seed,
                 max_steps, img, stats):
    H, W = camera.height, camera.width
    npix = H * W
    pixels = np.arange(npix, dtype=np.uint64)
    albedo = np.asarray(cfg.albedo, dtype=float)
    sky = np.asarray(cfg.sky, dtype=float)
    sigma = np.asarray(cfg.absorption, dtype=float)

    accum = np.zeros((npix, 3))
    for sample in range(cfg.spp):
        ju = _path_rand(seed, pixels, sample, 0, 101, 2)
        ro, rd = camera.rays(jitter=np.stack([ju[0], ju[1]], axis=-1))
        throughput = np.ones((npix, 3))
        radiance = np.zeros((npix, 3))
        alive = np.ones(npix, dtype=bool)
        t_lo = np.full(npix, float(t_min))

        for bounce in range(cfg.max_depth):
            if not np.any(alive):
                break
            idx = np.flatnonzero(alive)
            sub_stats = TraceStats()
            d_here = _counted(fld, sub_stats).fn(ro[idx])
            inside = d_here < 0.0
            hit, t_hit, _ = trace_batch(
                fld, ro[idx], rd[idx], t_lo[idx], t_max, policy, precision,
                max_steps, sub_stats
            )
            stats.merge(sub_stats)

            missed = idx[~hit]
            radiance[missed] += throughput[missed] * sky
            alive[missed] = False

            hidx = idx[hit]
            if hidx.size == 0:
                continue
            th = t_hit[hit]
            # interior absorption along the traversed segment
            seg_inside = inside[hit]
            if np.any(seg_inside):
                att = np.exp(-np.outer(th[seg_inside], sigma))
                throughput[hidx[seg_inside]] *= att
            pos = ro[hidx] + th[:, None] * rd[hidx]
            sub_stats = TraceStats()
            nrm = _surface_normals(fld, pos, sub_stats)
            stats.merge(sub_stats)
            facing = np.sum(nrm * rd[hidx], axis=-1) < 0.0
            nrm = np.where(facing[:, None], nrm, -nrm)

            if cfg.material == "lambert":
                throughput[hidx] *= albedo
                u = _path_rand(seed, pixels[hidx], sample, bounce, 7, 2)
                newdir = _cosine_hemisphere(nrm, u[0], u[1])
                ro[hidx] = pos + nrm * 1e-4
                rd[hidx] = newdir
            else:
                u = _path_rand(seed, pixels[hidx], sample, bounce, 7, 1)[0]
                cos_i = -np.sum(rd[hidx] * nrm, axis=-1)
                entering = ~inside[hit]
                eta = np.where(entering, 1.0 / cfg.ior, cfg.ior)
                sin2_t = eta**2 * np.maximum(0.0, 1.0 - cos_i**2)
                tir = sin2_t > 1.0
                r0 = ((1 - cfg.ior) / (1 + cfg.ior)) ** 2
                fresnel = r0 + (1 - r0) * (1 - np.abs(cos_i)) ** 5
                reflect = tir | (u < fresnel)
                cos_t = np.sqrt(np.maximum(0.0, 1.0 - sin2_t))
                refl_dir = rd[hidx] + 2.0 * cos_i[:, None] * nrm
                refr_dir = (
                    eta[:, None] * rd[hidx]
                    + (eta * cos_i - cos_t)[:, None] * nrm
                )
                refr_dir /= np.linalg.norm(refr_dir, axis=-1, keepdims=True)
                newdir = np.where(reflect[:, None], refl_dir, refr_dir)
                offset = np.where(reflect[:, None], nrm * 1e-4, -nrm * 1e-4)
                ro[hidx] = pos + offset
                rd[hidx] = newdir

            # Russian roulette on throughput once a couple of bounces in
            if bounce >= cfg.rr_start:
                p_survive = np.clip(np.max(throughput[hidx], axis=-1), 0.05, 0.95)
                u = _path_rand(seed, pixels[hidx], sample, bounce, 13, 1)[0]
                dead = u >= p_survive
                alive[hidx[dead]] = False
                surv = hidx[~dead]
                throughput[surv] /= p_survive[~dead][:, None]
            t_lo[hidx] = 0.0  # after the first segment origins are offset

        accum += radiance
    img[:] = accum / cfg.spp


def mean_intensity(img):
    return float(np.mean(img))


def depth_autocalibrate(render_at_depth, tol=0.01, max_depth=1024):
    """Smallest depth whose mean intensity is within tol of double depth.

    ``render_at_depth`` maps an integer depth to a rendered image; the
    candidate depths are 0, 1, 2, 4, 8, ... up to max_depth.
    """
    if not 0.0 < tol <= 0.1:
        raise DomainError("tolerance must lie in (0, 0.1]")
    cache = {}

    def intensity(d):
        if d not in cache:
            cache[d] = mean_intensity(render_at_depth(d))
        return cache[d]

    depth = 0
    while depth <= max_depth:
        # doubling the depth is degenerate at zero; probe two levels up so
        # a scene that is black at depths 0 and 1 is not declared stable
        probe = 2 * depth if depth > 0 else 2
        a, b = intensity(depth), intensity(probe)
        if abs(b - a) <= tol * max(b, 1e-12):
            return depth
        depth = 1 if depth == 0 else probe
    return max_depth
