"""Particle agglomeration on the full cubic lattice.

Spheres sit in every Moore-neighborhood cell and may grow to radius w, so
neighbors merge into composite structures (fibers, gels, laminae, porous
lattices). A boolean lattice rule decides which cells carry geometry; the
rule is an exact-integer congruence or inequality over polynomials of the
cell index, so the arithmetic never touches floating point.

The rule gate defaults to per-cell inclusion (geometry from cell q enters
the 27-cell minimum iff the rule passes at q), which keeps structures
continuous across rule boundaries. The stricter variant requiring the
whole neighborhood to pass is available as gate="conjunction".
"""

from dataclasses import dataclass

import numpy as np

from . import hashgrid as hg
from .errors import ConfigError, DomainError
from .fields import ScalarField

AND = "and"
OR = "or"


@dataclass(frozen=True)
class IntPolynomial:
    """Multivariate integer polynomial over cell indices.

    ``monomials`` maps exponent triples (i, j, k) to integer coefficients.
    Evaluation is exact: at construction the largest cell extent whose
    int64 evaluation cannot overflow is computed, and every call checks its
    cells against it (raising DomainError rather than wrapping silently).
    """

    monomials: tuple  # ((i, j, k), coeff) pairs

    def __post_init__(self):
        for (i, j, k), c in self.monomials:
            if i < 0 or j < 0 or k < 0:
                raise ConfigError("monomial exponents must be non-negative")
            if i + j + k > 4:
                raise ConfigError("monomials above total degree 4 not supported")

        def bound_at(extent):
            return sum(
                abs(int(c)) * extent ** (i + j + k) for (i, j, k), c in self.monomials
            )

        lo, hi = 1, hg.MAX_CELL_INDEX
        if bound_at(hi) < 2**62:
            extent = hi
        else:
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if bound_at(mid) < 2**62:
                    lo = mid
                else:
                    hi = mid
            extent = lo
        object.__setattr__(self, "_safe_extent", extent)

    def __call__(self, q):
        q = np.asarray(q, dtype=np.int64)
        if np.any(np.abs(q) > self._safe_extent):
            raise DomainError(
                f"cell index magnitude exceeds the exact-arithmetic extent "
                f"{self._safe_extent} of this polynomial"
            )
        qx, qy, qz = q[..., 0], q[..., 1], q[..., 2]
        acc = np.zeros(q.shape[:-1], dtype=np.int64)
        for (i, j, k), c in self.monomials:
            acc = acc + np.int64(c) * qx**i * qy**j * qz**k
        return acc

    def to_dict(self):
        return {"monomials": [[list(e), int(c)] for e, c in self.monomials]}

    @classmethod
    def from_dict(cls, d):
        return cls(monomials=tuple((tuple(e), int(c)) for e, c in d["monomials"]))


def int_poly(monomials):
    """Build an IntPolynomial from a {(i, j, k): coeff} mapping."""
    return IntPolynomial(monomials=tuple(sorted(monomials.items())))


@dataclass(frozen=True)
class LatticeRule:
    """Boolean cell selector D(q) built from integer polynomials.

    Congruence mode: D(q) = outer-reduce_i [ inner-reduce_j over the
    selected classes of polynomial i:  P_i(q) = m_ij (mod m_i) ].
    A class (c_ij, m_ij) participates only when c_ij = +1; a rule whose
    polynomials have no selected classes is false everywhere.

    Inequality mode: the bracket for polynomial i is l_i < P_i(q) < r_i
    (strict), combined by the outer reduction.
    """

    polys: tuple  # callables q -> int array
    moduli: tuple = ()  # one positive modulus per polynomial (congruence)
    classes: tuple = ()  # per polynomial: ((c_ij, m_ij), ...)
    bounds: tuple = ()  # per polynomial: (l_i, r_i) for inequality mode
    inner_op: str = OR
    outer_op: str = OR
    mode: str = "congruence"

    def __post_init__(self):
        if len(self.polys) < 1:
            raise ConfigError("a lattice rule needs at least one polynomial (k1 >= 1)")
        if self.inner_op not in (AND, OR) or self.outer_op not in (AND, OR):
            raise ConfigError("reduction operators must be 'and' or 'or'")
        if self.mode == "congruence":
            if len(self.moduli) != len(self.polys) or len(self.classes) != len(self.polys):
                raise ConfigError("need one modulus and one class list per polynomial")
            for m, cls in zip(self.moduli, self.classes):
                if m < 1:
                    raise ConfigError("moduli must be >= 1")
                if len(cls) > m:
                    raise ConfigError("at most m_i classes per polynomial (k2 <= m_i)")
                for c, mm in cls:
                    if c not in (-1, 1):
                        raise ConfigError("class selectors must be -1 or +1")
                    if not 0 <= mm < m:
                        raise ConfigError("class constants must satisfy 0 <= m_ij < m_i")
        elif self.mode == "inequality":
            if len(self.bounds) != len(self.polys):
                raise ConfigError("need one (l, r) bound per polynomial")
            for lo, rhigh in self.bounds:
                if not lo < rhigh:
                    raise ConfigError("inequality bounds must satisfy l < r")
        else:
            raise ConfigError(f"unknown rule mode {self.mode!r}")

    def __call__(self, q):
        return eval_rule(self, q)


def _reduce(op, parts, shape):
    if not parts:
        return np.zeros(shape, dtype=bool)
    out = parts[0]
    for p in parts[1:]:
        out = (out & p) if op == AND else (out | p)
    return out


def eval_rule(rule, q):
    """Evaluate D(q); q may be a triple or an (..., 3) array of cells.

    Exact integer arithmetic throughout; returns a boolean (array).
    """
    q = np.asarray(q, dtype=np.int64)
    shape = q.shape[:-1]
    outer_parts = []
    for idx, poly in enumerate(rule.polys):
        values = poly(q)
        if rule.mode == "congruence":
            res = np.mod(values, rule.moduli[idx])
            selected = [mm for c, mm in rule.classes[idx] if c == 1]
            inner_parts = [res == mm for mm in selected]
            outer_parts.append(_reduce(rule.inner_op, inner_parts, shape))
        else:
            lo, hi = rule.bounds[idx]
            bracket = np.ones(shape, dtype=bool)
            if np.isfinite(lo):
                bracket &= values > lo
            if np.isfinite(hi):
                bracket &= values < hi
            outer_parts.append(bracket)
    out = _reduce(rule.outer_op, outer_parts, shape)
    return bool(out) if out.ndim == 0 else out


ALWAYS_TRUE = LatticeRule(
    polys=(int_poly({(0, 0, 0): 0}),),
    moduli=(1,),
    classes=(((1, 0),),),
)


def bezier_gel_rule(n1, n2, n, t, t_mode="fixed"):
    """Gel-like agglomerates steered by quadratic curve control points.

    Two polynomials are built from curve evaluations B_x(q), B_y(q) at
    parameter t (per-cell pseudo-random t when t_mode="per_cell"):

        B_x = (1-t)^2 qx + 2(1-t)(qx + n1) + t^2 (qx - n1)
        B_y = (1-t)^2 qy + 2(1-t)(qy + n2) + t^2 (qy - n2)
        P1 = qx + qy + n * round(B_x)
        P2 = qy + qx qy + n * round(B_y)

    and combined as mod(P1, 31) = 7  OR  mod(P2, 11) = 7. B is real-valued
    for fractional t, so it is rounded to the nearest integer before
    entering the congruence.
    """
    if not 0.0 <= t <= 1.0:
        raise DomainError("curve parameter t must lie in [0, 1]")
    if t_mode not in ("fixed", "per_cell"):
        raise ConfigError("t_mode must be 'fixed' or 'per_cell'")

    def curve_terms(q):
        q = np.asarray(q, dtype=np.int64)
        if t_mode == "fixed":
            tv = t
        else:
            tv = hg.scramble_to_unit(q)
        one_m = 1.0 - tv
        qx = q[..., 0].astype(np.float64)
        qy = q[..., 1].astype(np.float64)
        bx = one_m**2 * qx + 2.0 * one_m * (qx + n1) + tv**2 * (qx - n1)
        by = one_m**2 * qy + 2.0 * one_m * (qy + n2) + tv**2 * (qy - n2)
        return np.rint(bx).astype(np.int64), np.rint(by).astype(np.int64)

    def p1(q):
        q = np.asarray(q, dtype=np.int64)
        bx, _ = curve_terms(q)
        return q[..., 0] + q[..., 1] + np.int64(n) * bx

    def p2(q):
        q = np.asarray(q, dtype=np.int64)
        _, by = curve_terms(q)
        return q[..., 1] + q[..., 0] * q[..., 1] + np.int64(n) * by

    return LatticeRule(
        polys=(p1, p2),
        moduli=(31, 11),
        classes=(((1, 7),), ((1, 7),)),
        inner_op=OR,
        outer_op=OR,
    )


# ---------------------------------------------------------------------------
# lattice fields


@dataclass(frozen=True)
class AggloParticle:
    """Sphere placed at relative center c (unit-cell coordinates) with
    radius r in scene units, r <= w."""

    c: tuple = (0.5, 0.5, 0.5)
    r: float = 0.5

    def validate_against(self, grid):
        if self.r <= 0:
            raise ConfigError("particle radius must be positive")
        if self.r > grid.w * (1.0 + 1e-12):
            raise ConfigError("agglomeration requires radius <= cell width")


def _lattice_values(pts, grid, particle, rule, f, h, gate):
    """Shared evaluation core for the Moore-lattice fields."""
    w = grid.w
    warped = pts + h.h(pts) if h is not None else pts
    pw = warped / w
    base = np.floor(pw).astype(np.int64)
    c = np.asarray(particle.c, dtype=np.float64)
    r_cell = particle.r / w

    if gate == "conjunction" and rule is not None:
        all_pass = np.ones(pw.shape[0], dtype=bool)
        for off in hg.MOORE_OFFSETS:
            all_pass &= eval_rule(rule, base + off)
    else:
        all_pass = None

    best = np.full(pw.shape[0], np.inf)
    for off in hg.MOORE_OFFSETS:
        q = base + off
        d = np.linalg.norm(pw - (q + c), axis=-1) - r_cell
        if rule is not None and gate == "per_cell":
            d = np.where(eval_rule(rule, q), d, np.inf)
        best = np.minimum(best, d)

    vals = w * best
    if all_pass is not None:
        vals = np.where(all_pass, vals, np.inf)
    if f is not None:
        vals = f.f(pts) + vals
    return np.minimum(vals, 0.5 * w)


def _make_lattice_field(grid, particle, rule, f, h, gate, name):
    particle.validate_against(grid)
    if grid.w <= 0:
        raise ConfigError("cell width must be positive")

    def fn(p):
        p = np.asarray(p, dtype=np.float64)
        squeeze = p.ndim == 1
        p = np.atleast_2d(p)
        shape = p.shape[:-1]
        vals = _lattice_values(p.reshape(-1, 3), grid, particle, rule, f, h, gate)
        return vals.reshape(shape) if not squeeze else vals[0]

    lip = 1.0
    if h is not None:
        lip *= 1.0 + h.lipschitz
    if f is not None:
        lip += f.lipschitz
    return ScalarField(
        fn,
        lipschitz=lip,
        cost=27,
        smooth=False,
        cell_width=grid.w,
        name=name,
    )


def agglomerate_sdf(grid, particle=AggloParticle(), f=None, h=None):
    """Full-lattice agglomeration: 27-neighbor minimum of cell spheres,
    clamped at w/2 (scene units)."""
    return _make_lattice_field(grid, particle, None, f, h, "per_cell", "agglomerate")


def subset_sdf(grid, particle, rule, f=None, h=None, gate="per_cell"):
    """Lattice subset selected by a boolean rule.

    gate="per_cell" (default) includes each passing cell's geometry in the
    27-cell minimum; gate="conjunction" only yields geometry where the
    entire neighborhood passes (erases structures near rule boundaries).
    Cells failing everywhere give the constant clamp w/2.
    """
    if gate not in ("per_cell", "conjunction"):
        raise ConfigError("gate must be 'per_cell' or 'conjunction'")
    return _make_lattice_field(grid, particle, rule, f, h, gate, "lattice-subset")


def meso_surface_sdf(grid, particle, polys, bounds, f=None, h=None):
    """Mesoscale shell on a macroscopic implicit surface.

    A cell carries geometry iff every polynomial value lies strictly inside
    its (l_i, r_i) band; the band width controls the shell thickness. The
    27-cell minimum runs over passing cells only.
    """
    rule = LatticeRule(
        polys=tuple(polys),
        bounds=tuple(bounds),
        inner_op=AND,
        outer_op=AND,
        mode="inequality",
    )
    return _make_lattice_field(grid, particle, rule, f, h, "per_cell", "meso-surface")
