"""Deterministic space-filling point distribution on a cubic grid.

Every particle the geometry modules instantiate comes out of this module:
a grid cell index is hashed into a seed, the seed drives a fixed counter
PRNG, and the resulting uniforms place and size one particle per cell.
Everything is a pure function of its arguments, so two processes with the
same configuration produce bit-identical particle streams.

Conventions
-----------
* Cell indices are integer triples with |q_i| <= 2**20 (checked).
* All hash arithmetic wraps in 64-bit unsigned integers.
* The PRNG is a splitmix-style mix-and-advance generator; its constants
  are fixed below and are part of the file-format/reproducibility
  contract.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError

# splitmix64 constants (mix-and-advance generator)
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# xorshift64* constants used by scramble()
_XS_SHIFTS = (12, 25, 27)
_XS_MULT = np.uint64(0x2545F4914F6CDD1D)

# Largest cell coordinate magnitude the exact hash polynomial supports.
MAX_CELL_INDEX = 1 << 20

# First eight primes >= 73, one per (i,j,k) monomial of the cell hash.
DEFAULT_PRIMES = (73, 79, 83, 89, 97, 101, 103, 107)

# Binary corner offsets of the unit cube, i = 0..7 -> (i&1, (i>>1)&1, (i>>2)&1).
DUAL_OFFSETS = np.array(
    [[i & 1, (i >> 1) & 1, (i >> 2) & 1] for i in range(8)], dtype=np.int64
)

# Moore neighborhood offsets {-1,0,1}^3 in fixed lexicographic order.
MOORE_OFFSETS = np.array(
    [[dx, dy, dz] for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)],
    dtype=np.int64,
)


@dataclass(frozen=True)
class HashCoefficients:
    """Coefficients of the multilinear cell hash plus the per-cell draw count.

    ``a[m]`` multiplies the monomial q_x^i q_y^j q_z^k where m = i + 2j + 4k.
    All eight coefficients must be pairwise distinct and > 1; primes kill
    the axis-aligned regularity artifacts cheap coefficients produce.
    """

    a: tuple = DEFAULT_PRIMES
    n_uniforms: int = 4

    def __post_init__(self):
        if len(self.a) != 8:
            raise ConfigError("exactly eight hash coefficients required")
        if len(set(self.a)) != 8 or any(c <= 1 for c in self.a):
            raise ConfigError("hash coefficients must be pairwise distinct and > 1")
        if self.n_uniforms < 1:
            raise ConfigError("n_uniforms must be >= 1")

    def to_dict(self):
        return {"a": list(self.a), "n_uniforms": self.n_uniforms}

    @classmethod
    def from_dict(cls, d):
        return cls(a=tuple(d["a"]), n_uniforms=int(d["n_uniforms"]))


@dataclass
class ParticleInstance:
    """One instantiated particle: position in cell-scaled coordinates,
    scale in [0,1), and any extra uniforms (orientation etc.)."""

    x: np.ndarray
    s: float
    extra: np.ndarray = field(default_factory=lambda: np.empty(0))


def _as_cells(q):
    """Validate and return cell indices as an int64 array (..., 3)."""
    q = np.asarray(q, dtype=np.int64)
    if q.shape[-1] != 3:
        raise DomainError("cell index must have three components")
    if np.any(np.abs(q) > MAX_CELL_INDEX):
        raise DomainError(f"cell index magnitude exceeds 2**20: {q}")
    return q


def seed_for_cell(q, coeffs=HashCoefficients()):
    """Seed t = N * sum_{i,j,k in {0,1}} a_ijk qx^i qy^j qz^k (wrapping u64).

    Accepts a single triple or an (..., 3) array of triples; returns a
    uint64 scalar or array of the same leading shape.
    """
    q = _as_cells(q)
    qx = q[..., 0].astype(np.uint64)
    qy = q[..., 1].astype(np.uint64)
    qz = q[..., 2].astype(np.uint64)
    a = [np.uint64(c) for c in coeffs.a]
    one = np.uint64(1)
    acc = np.zeros(q.shape[:-1], dtype=np.uint64)
    with np.errstate(over="ignore"):  # wrapping modular arithmetic intended
        for m in range(8):
            term = a[m]
            term = term * (qx if m & 1 else one)
            term = term * (qy if m & 2 else one)
            term = term * (qz if m & 4 else one)
            acc = acc + term
        t = np.uint64(coeffs.n_uniforms) * acc
    if t.ndim == 0:
        return np.uint64(t)
    return t


def _mix(z):
    """splitmix64 output function (wrapping u64)."""
    with np.errstate(over="ignore"):
        z = z ^ (z >> np.uint64(30))
        z = z * _MIX1
        z = z ^ (z >> np.uint64(27))
        z = z * _MIX2
        z = z ^ (z >> np.uint64(31))
    return z


def rnd(seed, n):
    """Draw n uniforms in [0,1) from the counter PRNG.

    ``seed`` may be a scalar or an array; the result has shape (n,) for a
    scalar seed and (n,) + seed.shape otherwise. Draw k comes from mixing
    seed + (k+1)*GAMMA, so sequences for different seeds never share state.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    s = np.asarray(seed, dtype=np.uint64)
    with np.errstate(over="ignore"):
        ks = (np.arange(1, n + 1, dtype=np.uint64) * _GAMMA).reshape(
            (n,) + (1,) * s.ndim
        )
        z = _mix(s[None, ...] + ks)
    # top 53 bits -> double in [0,1)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def instantiate(q, coeffs=HashCoefficients(), fixed_size=None):
    """Instantiate the particle of cell q: x = q + (xi1,xi2,xi3), s = xi4.

    With n_uniforms == 3 the size draw is skipped and ``fixed_size`` is
    used instead (all particles share one radius). Extra uniforms beyond
    the fourth are returned for shape parameters such as orientation.
    """
    q = _as_cells(q)
    n = coeffs.n_uniforms
    if n < 3:
        raise ConfigError("instantiation needs at least three uniforms per cell")
    t = seed_for_cell(q, coeffs)
    xi = rnd(t, n)
    x = q.astype(np.float64) + np.moveaxis(xi[:3], 0, -1)
    if n == 3:
        if fixed_size is None:
            raise ConfigError("n_uniforms == 3 requires a fixed particle size")
        s = fixed_size
        extra = np.empty(0)
    else:
        s = xi[3]
        extra = np.moveaxis(xi[4:], 0, -1) if n > 4 else np.empty(0)
    if q.ndim == 1:
        return ParticleInstance(x=x, s=float(s), extra=np.asarray(extra))
    return ParticleInstance(x=x, s=np.asarray(s), extra=np.asarray(extra))


def dual_neighbors(p_w):
    """The 8 grid cells that can hold particles overlapping p_w.

    p_w is a cell-scaled position (or an (..., 3) array). The half-cell
    offset before flooring selects the dual-grid cell, whose 2^3
    intersecting lattice cells are returned in binary-offset order.
    Valid whenever particle bounding radii stay <= half a cell.
    """
    p_w = np.asarray(p_w, dtype=np.float64)
    base = np.floor(p_w - 0.5).astype(np.int64)
    return base[..., None, :] + DUAL_OFFSETS


def moore_neighbors(q):
    """The 27 cells q + {-1,0,1}^3 in fixed lexicographic order."""
    q = _as_cells(q)
    return q[..., None, :] + MOORE_OFFSETS


def pack_cell(q):
    """Pack a cell index into one u64: 21 bits per axis, biased by 2**20.

    The biased value 2**21 (only reached at q_i == +2**20, the very edge of
    the validated range) is masked into lane 0, aliasing with q_i == -2**20.
    """
    q = _as_cells(q)
    bias = np.int64(MAX_CELL_INDEX)
    lane = np.uint64((1 << 21) - 1)
    qx = (q[..., 0] + bias).astype(np.uint64) & lane
    qy = (q[..., 1] + bias).astype(np.uint64) & lane
    qz = (q[..., 2] + bias).astype(np.uint64) & lane
    return qx | (qy << np.uint64(21)) | (qz << np.uint64(42))


def scramble(q):
    """xorshift64* scramble of the packed cell index.

    Deterministic and avalanching: flipping one input bit flips roughly
    half of the 64 output bits on average.
    """
    x = pack_cell(q)
    s1, s2, s3 = (np.uint64(s) for s in _XS_SHIFTS)
    with np.errstate(over="ignore"):
        x = x ^ (x >> s1)
        x = x ^ (x << s2)
        x = x ^ (x >> s3)
        out = x * _XS_MULT
    return out


def scramble_to_unit(q):
    """scramble() mapped to a float in [0,1)."""
    return (scramble(q) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def derive_seed(master, tag):
    """Derive a component sub-seed from one master seed and a string tag.

    Used by the CLI so a single --seed flag controls every subsystem.
    """
    h = np.uint64(master & 0xFFFFFFFFFFFFFFFF)
    for ch in tag.encode("utf8"):
        h = _mix(h ^ np.uint64(ch))
    return int(h)
