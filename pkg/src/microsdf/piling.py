"""Granular media: lattice spheres under rotation and noise deformation.

Spheres of maximal size (radius w/2) sit at every cell center; piles and
grain shapes emerge purely from deforming the query point before the cell
lookup: p' = R_theta(p) p + P(p) N(p), with P a polynomial and N a noise
function. The polynomial-times-noise magnitude drives grains from convex
toward concave without any collision handling.

Includes both noise generators: classic lattice gradient noise with the
fixed reference permutation table (bit-exact across runs) and sparse
convolution noise built on the same hash grid the particle clouds use.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import hashgrid as hg
from .errors import ConfigError, DomainError
from .fields import ScalarField

# Ken Perlin's reference permutation (256 entries, repeated for wraparound).
_PERM = np.array(
    [151, 160, 137, 91, 90, 15, 131, 13, 201, 95, 96, 53, 194, 233, 7, 225,
     140, 36, 103, 30, 69, 142, 8, 99, 37, 240, 21, 10, 23, 190, 6, 148,
     247, 120, 234, 75, 0, 26, 197, 62, 94, 252, 219, 203, 117, 35, 11, 32,
     57, 177, 33, 88, 237, 149, 56, 87, 174, 20, 125, 136, 171, 168, 68, 175,
     74, 165, 71, 134, 139, 48, 27, 166, 77, 146, 158, 231, 83, 111, 229, 122,
     60, 211, 133, 230, 220, 105, 92, 41, 55, 46, 245, 40, 244, 102, 143, 54,
     65, 25, 63, 161, 1, 216, 80, 73, 209, 76, 132, 187, 208, 89, 18, 169,
     200, 196, 135, 130, 116, 188, 159, 86, 164, 100, 109, 198, 173, 186, 3, 64,
     52, 217, 226, 250, 124, 123, 5, 202, 38, 147, 118, 126, 255, 82, 85, 212,
     207, 206, 59, 227, 47, 16, 58, 17, 182, 189, 28, 42, 223, 183, 170, 213,
     119, 248, 152, 2, 44, 154, 163, 70, 221, 153, 101, 155, 167, 43, 172, 9,
     129, 22, 39, 253, 19, 98, 108, 110, 79, 113, 224, 232, 178, 185, 112, 104,
     218, 246, 97, 228, 251, 34, 242, 193, 238, 210, 144, 12, 191, 179, 162, 241,
     81, 51, 145, 235, 249, 14, 239, 107, 49, 192, 214, 31, 181, 199, 106, 157,
     184, 84, 204, 176, 115, 121, 50, 45, 127, 4, 150, 254, 138, 236, 205, 93,
     222, 114, 67, 29, 24, 72, 243, 141, 128, 195, 78, 66, 215, 61, 156, 180],
    dtype=np.int64,
)
_P = np.concatenate([_PERM, _PERM])

# 16 gradient directions (12 edge vectors of a cube, 4 repeated).
_GRAD = np.array(
    [[1, 1, 0], [-1, 1, 0], [1, -1, 0], [-1, -1, 0],
     [1, 0, 1], [-1, 0, 1], [1, 0, -1], [-1, 0, -1],
     [0, 1, 1], [0, -1, 1], [0, 1, -1], [0, -1, -1],
     [1, 1, 0], [0, -1, 1], [-1, 1, 0], [0, -1, -1]],
    dtype=np.float64,
)


def _fade(t):
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def perlin(p):
    """Classic lattice gradient noise, zero at integer lattice points.

    Deterministic (fixed permutation table, period 256 per axis); values
    lie strictly inside [-1, 1].
    """
    p = np.asarray(p, dtype=np.float64)
    pf = np.floor(p)
    cell = pf.astype(np.int64) & 255
    frac = p - pf
    u = _fade(frac)

    def grad_dot(ox, oy, oz):
        h = _P[_P[_P[cell[..., 0] + ox] + cell[..., 1] + oy] + cell[..., 2] + oz] & 15
        g = _GRAD[h]
        rel = frac - np.array([ox, oy, oz], dtype=np.float64)
        return np.sum(g * rel, axis=-1)

    n000 = grad_dot(0, 0, 0)
    n100 = grad_dot(1, 0, 0)
    n010 = grad_dot(0, 1, 0)
    n110 = grad_dot(1, 1, 0)
    n001 = grad_dot(0, 0, 1)
    n101 = grad_dot(1, 0, 1)
    n011 = grad_dot(0, 1, 1)
    n111 = grad_dot(1, 1, 1)

    nx00 = n000 + u[..., 0] * (n100 - n000)
    nx10 = n010 + u[..., 0] * (n110 - n010)
    nx01 = n001 + u[..., 0] * (n101 - n001)
    nx11 = n011 + u[..., 0] * (n111 - n011)
    nxy0 = nx00 + u[..., 1] * (nx10 - nx00)
    nxy1 = nx01 + u[..., 1] * (nx11 - nx01)
    return nxy0 + u[..., 2] * (nxy1 - nxy0)


class SparseConvolutionNoise:
    """Sum of compact-support kernels at hash-grid impulse points.

    One impulse per cell, positioned by the grid PRNG with amplitude
    2*xi4 - 1; support <= half a cell keeps the 8-cell dual window
    sufficient. Passing ``impulses`` pins explicit (position, amplitude)
    pairs instead, which is how the closed-form kernel is tested.
    """

    def __init__(self, coeffs=None, support=0.5, cell_width=1.0, impulses=None):
        if support < 0:
            raise DomainError("kernel support must be non-negative")
        if support > 0.5 * cell_width and impulses is None:
            raise ConfigError("support above half a cell breaks the 8-cell window")
        self.coeffs = coeffs if coeffs is not None else hg.HashCoefficients()
        self.support = float(support)
        self.cell_width = float(cell_width)
        self.impulses = impulses

    @staticmethod
    def kernel(u):
        """Smooth bump (1 - u^2)^3 on u in [0, 1), zero outside."""
        u = np.asarray(u, dtype=np.float64)
        inside = u < 1.0
        v = np.where(inside, 1.0 - u * u, 0.0)
        return v * v * v

    def __call__(self, p):
        p = np.asarray(p, dtype=np.float64)
        shape = p.shape[:-1]
        pts = np.atleast_2d(p.reshape(-1, 3))
        if self.support == 0.0:
            return np.zeros(shape) if shape else 0.0
        out = np.zeros(pts.shape[0])
        if self.impulses is not None:
            for pos, amp in self.impulses:
                r = np.linalg.norm(pts - np.asarray(pos, dtype=float), axis=-1)
                out += amp * self.kernel(r / self.support)
        else:
            pw = pts / self.cell_width
            base = np.floor(pw - 0.5).astype(np.int64)
            for off in hg.DUAL_OFFSETS:
                q = base + off
                xi = hg.rnd(hg.seed_for_cell(q, self.coeffs), 4)
                x = (q + np.stack([xi[0], xi[1], xi[2]], axis=-1)) * self.cell_width
                amp = 2.0 * xi[3] - 1.0
                r = np.linalg.norm(pts - x, axis=-1)
                out += amp * self.kernel(r / self.support)
        return out.reshape(shape) if shape else float(out[0])


def sparse_convolution_noise(p, **kwargs):
    """Functional wrapper around :class:`SparseConvolutionNoise`."""
    return SparseConvolutionNoise(**kwargs)(p)


@dataclass(frozen=True)
class Polynomial3:
    """Real-coefficient polynomial over positions, {(i, j, k): coeff}."""

    monomials: tuple

    def __call__(self, p):
        p = np.asarray(p, dtype=np.float64)
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        acc = np.zeros(p.shape[:-1])
        for (i, j, k), c in self.monomials:
            acc = acc + c * x**i * y**j * z**k
        return acc

    def to_dict(self):
        return {"monomials": [[list(e), float(c)] for e, c in self.monomials]}

    @classmethod
    def from_dict(cls, d):
        return cls(monomials=tuple((tuple(e), float(c)) for e, c in d["monomials"]))


def poly3(monomials):
    return Polynomial3(monomials=tuple(sorted(monomials.items())))


ZERO_POLY = poly3({})


@dataclass
class PilingConfig:
    """Deformation recipe for a pile: rotation angle field, deformation
    polynomial, noise choice, and the sampling box used to estimate the
    deformation's gradient bound (traces outside it are not step-safe)."""

    theta: object = ZERO_POLY  # scalar field p -> radians
    deform: object = ZERO_POLY  # polynomial P(p)
    noise: object = "perlin"  # "perlin" | "sparse" | callable
    rotation_axis: str = "z"  # "x" | "y" | "z" | "xyz"
    estimate_box: tuple = ((-5.0, -5.0, -5.0), (5.0, 5.0, 5.0))
    estimate_samples: int = 10_000

    def noise_fn(self):
        if callable(self.noise):
            return self.noise
        if self.noise == "perlin":
            return perlin
        if self.noise == "sparse":
            return SparseConvolutionNoise()
        raise ConfigError(f"unknown noise selector {self.noise!r}")


def _rotate(p, theta, axis):
    c, s = np.cos(theta), np.sin(theta)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    if axis == "z":
        return np.stack([c * x - s * y, s * x + c * y, z], axis=-1)
    if axis == "y":
        return np.stack([c * x + s * z, y, -s * x + c * z], axis=-1)
    if axis == "x":
        return np.stack([x, c * y - s * z, s * y + c * z], axis=-1)
    if axis == "xyz":
        return _rotate(_rotate(_rotate(p, theta, "x"), theta, "y"), theta, "z")
    raise ConfigError(f"unknown rotation axis {axis!r}")


def piling_map(cfg):
    """The query-point deformation p -> R_theta(p) p + P(p) N(p) (1,1,1)."""
    noise = cfg.noise_fn()

    def mapped(p):
        p = np.asarray(p, dtype=np.float64)
        theta = np.asarray(cfg.theta(p), dtype=np.float64)
        rotated = _rotate(p, theta, cfg.rotation_axis)
        bump = np.asarray(cfg.deform(p) * noise(p), dtype=np.float64)
        return rotated + bump[..., None]

    return mapped


def _estimate_map_lipschitz(mapped, box, samples, eps=1e-4, seed=0):
    """Sampled operator-norm bound of the deformation Jacobian."""
    lo, hi = (np.asarray(v, dtype=float) for v in box)
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(samples, 3))
    cols = []
    for axis in range(3):
        dp = np.zeros(3)
        dp[axis] = eps
        cols.append((mapped(pts + dp) - mapped(pts - dp)) / (2 * eps))
    jac = np.stack(cols, axis=-1)  # (n, 3, 3)
    return float(np.max(np.linalg.norm(jac, ord=2, axis=(1, 2))))


def piling_sdf(grid, cfg=PilingConfig(), f=None):
    """Granular pile: 27-neighbor minimum over maximal lattice spheres of
    the deformed query point, clamped at w/2, in scene units.

    The deformation gradient bound is estimated by sampling once at build
    time and cached into the declared Lipschitz bound (with 10% headroom).
    """
    w = grid.w
    mapped = piling_map(cfg)
    lip_map = _estimate_map_lipschitz(mapped, cfg.estimate_box, cfg.estimate_samples)

    def fn(p):
        p = np.asarray(p, dtype=np.float64)
        squeeze = p.ndim == 1
        p = np.atleast_2d(p)
        shape = p.shape[:-1]
        pts = p.reshape(-1, 3)
        pw = mapped(pts) / w
        base = np.floor(pw).astype(np.int64)
        best = np.full(pw.shape[0], np.inf)
        for off in hg.MOORE_OFFSETS:
            d = np.linalg.norm(pw - (base + off + 0.5), axis=-1) - 0.5
            best = np.minimum(best, d)
        vals = w * best
        if f is not None:
            vals = f.f(pts) + vals
        vals = np.minimum(vals, 0.5 * w)
        return vals.reshape(shape) if not squeeze else vals[0]

    lip = lip_map * 1.1
    if f is not None:
        lip += f.lipschitz
    return ScalarField(
        fn,
        lipschitz=max(lip, 1e-9),
        cost=27,
        smooth=False,
        cell_width=w,
        name="pile",
    )
