"""Built-in benchmark and demo scenes.

These are the scenes the bench/calibration subcommands and the test suite
share. They are deliberately constructed rather than loaded from config
files so their geometry is stable across releases; the CLI accepts either
a scene file or one of these names.
"""

import numpy as np

from . import fields as fl
from . import particulate as pt
from . import periodic as pe
from . import agglomerate as ag
from . import tracer as tr
from .errors import ConfigError


def _slab_x(a, b):
    """Distance to the slab a <= x <= b (exact in x, 1-Lipschitz)."""

    def fn(p):
        x = p[..., 0]
        return np.maximum(a - x, x - b)

    return fl.ScalarField(fn, lipschitz=1.0, name=f"slab[{a},{b}]")


def two_scale_gyroid_field():
    """Coarse (eta=10) and fine (eta=200) trig regions joined by union.

    The fine field declares the conservative bound of its parameter family
    (2*sqrt(3)) rather than its tight one, so the union's global bound is
    pessimistic everywhere outside the fine slab -- exactly the situation
    where gradient-informed stepping outruns pure sphere tracing without
    ever overstepping the true local bound.
    """
    sqrt3 = np.sqrt(3.0)

    def coarse(p):
        return np.sum(np.sin(p * 10.0), axis=-1) / 10.0

    def fine(p):
        return np.sum(np.sin(p * 200.0), axis=-1) / 200.0

    coarse_f = fl.ScalarField(coarse, lipschitz=sqrt3, name="gyr10")
    fine_f = fl.ScalarField(fine, lipschitz=2.0 * sqrt3, name="gyr200")
    left = fl.intersection(coarse_f, _slab_x(-2.0, 0.0))
    right = fl.intersection(fine_f, _slab_x(0.0, 2.0))
    return fl.union(left, right)


def two_scale_gyroid_camera(width=64, height=64):
    # fov frozen at 44: at 45 one 64x64 ray grazes a surface inside the
    # relative-precision band, making the proximity hit sample-dependent
    return tr.Camera.look_at(
        (-22.0, 4.0, 2.0), (0.0, 2.0, 1.0), fov_deg=44.0, width=width, height=height
    )


def fibrous_fields(eta):
    """Three constructions of a fibrous volume at noise scale eta.

    periodic: closed-form sine lattice of fibers (no neighbor loop)
    primitive: one capsule per dual-grid cell
    agglomerate: lattice columns selected by a congruence rule
    """
    w = 2.0 * np.pi / eta

    def sine_fibers(p):
        # distance-like field for fibers along y on a periodic lattice:
        # sin(k x) ~ k * (distance to the nearest lattice plane)
        x = np.sin(eta * p[..., 0])
        z = np.sin(eta * p[..., 2])
        return np.sqrt(x * x + z * z) / eta - 0.1 * w

    periodic = fl.ScalarField(
        sine_fibers, lipschitz=1.5, cost=1, name="fibers-periodic"
    )
    grid8 = pt.GridSpec(w=w)
    primitive = pt.suspended_sdf(
        grid8,
        pt.ParticleRecipe(shape="capsule", size_law=pt.FixedSize(0.9), capsule_aspect=0.6),
    )
    grid27 = pt.GridSpec(w=w, neighborhood=pt.MOORE27)
    rule = ag.LatticeRule(
        polys=(ag.int_poly({(1, 0, 0): 1}), ag.int_poly({(0, 0, 1): 1})),
        moduli=(3, 3),
        classes=(((1, 0),), ((1, 0),)),
        inner_op=ag.OR,
        outer_op=ag.AND,
    )
    agglo = ag.subset_sdf(grid27, ag.AggloParticle(r=0.9 * w), rule)
    return {"periodic": periodic, "primitive": primitive, "agglomerate": agglo}


def fibrous_camera(eta, width=48, height=48):
    # frame a patch a few features wide regardless of scale
    d = 40.0 / eta
    return tr.Camera.look_at(
        (-d, 0.3 * d, 0.2 * d), (0, 0, 0), fov_deg=40.0, width=width, height=height
    )


def bubble_cloud_field(w=0.35):
    """Semi-infinite suspended bubble slab for the trace-depth experiments.

    Light enters from the sky above the slab; deep paths multiple-scatter
    inside and must escape upward, so the rendered intensity climbs with
    the allowed trace depth until it plateaus.
    """
    grid = pt.GridSpec(w=w)
    recipe = pt.ParticleRecipe(size_law=pt.UniformSize(0.4, 0.9))
    cloud = pt.suspended_sdf(grid, recipe)
    return fl.intersection(cloud, fl.plane((0, 1, 0), 0.0))  # keep y < 0


def bubble_cloud_camera(width=24, height=24):
    return tr.Camera.look_at(
        (0.0, 2.2, -2.6), (0.0, -0.8, 0.0), fov_deg=45.0, width=width, height=height
    )


def unit_sphere_demo_field():
    return fl.sphere((0.0, 0.0, 0.0), 1.0)


BUILTIN_SCENES = {
    "two-scale-gyroid": (two_scale_gyroid_field, two_scale_gyroid_camera),
    "bubble-cloud": (bubble_cloud_field, bubble_cloud_camera),
    "unit-sphere": (
        unit_sphere_demo_field,
        lambda width=64, height=64: tr.Camera.look_at(
            (0, 0, -3), (0, 0, 0), fov_deg=40, width=width, height=height
        ),
    ),
}


def builtin_scene(name, width=None, height=None):
    """(field, camera) for a named built-in scene."""
    if name.startswith("fibrous-"):
        kind, _, eta = name[len("fibrous-"):].partition("-")
        try:
            eta = float(eta)
        except ValueError:
            raise ConfigError(f"bad fibrous scene name {name!r}") from None
        fields = fibrous_fields(eta)
        if kind not in fields:
            raise ConfigError(f"unknown fibrous variant {kind!r}")
        kw = {}
        if width:
            kw["width"] = width
        if height:
            kw["height"] = height
        return fields[kind], fibrous_camera(eta, **kw)
    if name not in BUILTIN_SCENES:
        raise ConfigError(f"unknown builtin scene {name!r}")
    make_field, make_cam = BUILTIN_SCENES[name]
    kw = {}
    if width:
        kw["width"] = width
    if height:
        kw["height"] = height
    return make_field(), make_cam(**kw)
