"""Parameter reconstruction from SDF samples or rendered images.

Two pipelines, both driven by spectral losses:

* fit_parameters       - evaluate a candidate field on a fixed point set
                         and compare DFT amplitude + phase spectra against
                         the target samples (log mean squared error).
* analysis_by_synthesis - render the candidate bounded by a unit sphere
                         from a fixed camera and compare 2D DFT amplitude
                         spectra of the luminance (translation-invariant).

Gradient-dependent optimizer configurations are refused on fields flagged
non-smooth; that combination returns an explicit "unsupported" report
rather than an exception so batch jobs degrade gracefully.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import fields as fl
from . import periodic as pe
from . import tracer as tr
from .errors import ConfigError, ContractError, DomainError
from .optimize import (
    FitReport,
    ParamSpace,
    basin_hopping,
    cma_es,
    powell,
    validation_error,
)

LOSS_EPS = 1e-12


# ---------------------------------------------------------------------------
# sample geometry


@dataclass(frozen=True)
class SampleSet:
    """Point set (slices of a ball) with optional SDF values at the points."""

    points: np.ndarray
    dims: tuple
    sigma: float = 0.0
    values: np.ndarray = None

    def __post_init__(self):
        d, w, h = self.dims
        if self.points.shape != (d * w * h, 3):
            raise ContractError("points must flatten the (D, W, H) slice layout")

    def with_values(self, values):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (self.points.shape[0],):
            raise ContractError("one value per sample point")
        return SampleSet(self.points, self.dims, self.sigma, values)


def _axis_rot(axis, angle):
    c, s = np.cos(angle), np.sin(angle)
    if axis == 0:
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == 1:
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def default_sample_rotation():
    """Fixed generic rotation for the sampling lattice.

    Aligning the lattice with the field axes lets sampling aliases carve
    spurious minima into the spectral loss (a commensurate lattice can
    resonate with wrong frequencies); a generic rotation smears them out.
    """
    return _axis_rot(0, 0.41) @ _axis_rot(1, 0.73) @ _axis_rot(2, 0.19)


def sample_points(dims=(8, 32, 32), rotation=None, spacing=2.0 / 32, sigma=1e-3,
                  seed=0, fit_unit_sphere=True):
    """Equidistant lattice centered at the origin, rotated and jittered.

    ``rotation`` defaults to the fixed generic basis from
    :func:`default_sample_rotation`; pass np.eye(3) for an axis-aligned
    lattice. The lattice is uniformly rescaled into the unit sphere
    (preserving the point count) when fit_unit_sphere is set; Gaussian
    jitter of standard deviation sigma is applied after rotation.
    """
    if spacing <= 0:
        raise DomainError("spacing must be positive")
    d, w, h = dims
    axes = [
        (np.arange(n) - (n - 1) / 2.0) * spacing
        for n in (d, w, h)
    ]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    rotation = default_sample_rotation() if rotation is None else np.asarray(rotation, dtype=np.float64)
    if rotation.shape != (3, 3):
        raise ContractError("rotation must be 3x3")
    grid = grid @ rotation.T
    if fit_unit_sphere:
        top = np.max(np.linalg.norm(grid, axis=-1))
        if top > 1.0:
            grid = grid / top
    if sigma > 0:
        rng = np.random.default_rng(seed)
        grid = grid + rng.normal(scale=sigma, size=grid.shape)
    return SampleSet(points=grid, dims=tuple(dims), sigma=float(sigma))


# ---------------------------------------------------------------------------
# spectral losses


def _wrap_phase(delta):
    """Wrap phase differences to (-pi, pi]."""
    return np.angle(np.exp(1j * delta))


def loss_ft_3d(values_a, values_b, eps=LOSS_EPS):
    """log of the mean squared amplitude and wrapped-phase spectrum gap.

    Identical inputs attain the floor log(eps) exactly.
    """
    a = np.asarray(values_a, dtype=np.float64).ravel()
    b = np.asarray(values_b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size < 2:
        raise ContractError("value sequences must match and hold >= 2 samples")
    fa = np.fft.fft(a)
    fb = np.fft.fft(b)
    amp = np.abs(fa) - np.abs(fb)
    pha = _wrap_phase(np.angle(fa) - np.angle(fb))
    n = a.size
    return float(np.log(np.sum(amp * amp + pha * pha) / (2.0 * n) + eps))


def luminance(img):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    return 0.2126 * img[..., 0] + 0.7152 * img[..., 1] + 0.0722 * img[..., 2]


def loss_ft_2d(image_a, image_b, eps=LOSS_EPS):
    """log mean squared gap of 2D DFT amplitudes of the luminance.

    Amplitude-only by design, hence exactly invariant under circular
    translations of either image.
    """
    a = luminance(image_a)
    b = luminance(image_b)
    if a.shape != b.shape:
        raise ContractError("images must share dimensions")
    fa = np.abs(np.fft.fft2(a))
    fb = np.abs(np.fft.fft2(b))
    diff = fa - fb
    return float(np.log(np.sum(diff * diff) / diff.size + eps))


# ---------------------------------------------------------------------------
# optimizer configuration


@dataclass(frozen=True)
class OptimizerConfig:
    """Which optimizer to run and with what knobs.

    Defaults follow the regime the pipeline is used in: direct SDF fits
    use larger populations and initial steps than render-in-the-loop
    synthesis fits (where every evaluation costs a full render).
    """

    kind: str = "cma_es"  # "cma_es" | "powell" | "basin_hopping"
    budget: int = 20_000
    seed: int = 0
    population: int = None
    sigma0: float = None
    step_fraction: float = 0.25
    temperature: float = 1e-3
    local_method: str = "nelder-mead"
    uniform_hop_prob: float = 0.0
    f_target: float = None

    def __post_init__(self):
        if self.kind not in ("cma_es", "powell", "basin_hopping"):
            raise ConfigError(f"unknown optimizer {self.kind!r}")

    @property
    def requires_smooth(self):
        return self.kind == "basin_hopping" and self.local_method == "bfgs"

    def to_dict(self):
        return {
            "kind": self.kind,
            "budget": self.budget,
            "seed": self.seed,
            "population": self.population,
            "sigma0": self.sigma0,
            "step_fraction": self.step_fraction,
            "temperature": self.temperature,
            "local_method": self.local_method,
            "uniform_hop_prob": self.uniform_hop_prob,
            "f_target": self.f_target,
        }

    @classmethod
    def from_dict(cls, d):
        known = {k: d[k] for k in (
            "kind", "budget", "seed", "population", "sigma0", "step_fraction",
            "temperature", "local_method", "uniform_hop_prob", "f_target",
        ) if k in d}
        return cls(**known)


def _unsupported(cfg, name):
    return FitReport(
        phi_hat=None,
        status="unsupported",
        message=(
            f"{cfg.kind} with local_method={cfg.local_method!r} depends on "
            f"gradients; {name} is a non-smooth field"
        ),
    )


def _dispatch(cfg, loss, space, phi0, synthesis=False):
    f_target = cfg.f_target if cfg.f_target is not None else np.log(LOSS_EPS) + 1e-9
    if cfg.kind == "cma_es":
        sigma0 = cfg.sigma0
        if sigma0 is None:
            sigma0 = 70.0 if synthesis else 150.0
            sigma0 = min(sigma0, 0.3 * float(np.max(space.spans())))
        population = cfg.population or (8 if synthesis else 40)
        return cma_es(
            loss, space, phi0, sigma0=sigma0, population=population,
            budget=cfg.budget, seed=cfg.seed, f_target=f_target,
        )
    if cfg.kind == "powell":
        return powell(loss, space, phi0, budget=cfg.budget)
    return basin_hopping(
        loss, space, phi0, step=cfg.step_fraction * space.spans(),
        temperature=cfg.temperature, budget=cfg.budget, seed=cfg.seed,
        local_method=cfg.local_method, f_target=f_target,
        uniform_hop_prob=cfg.uniform_hop_prob,
    )


# ---------------------------------------------------------------------------
# pipelines


def microstructure_space(name):
    m = pe.microstructure(name)
    return ParamSpace(bounds=m.bounds, names=m.param_names, smooth=m.smooth)


def make_sdf_target(name, params=None, samples=None):
    """Evaluate a microstructure at ground-truth (or given) parameters on a
    sample set, producing the fitting target."""
    m = pe.microstructure(name)
    params = tuple(params) if params is not None else m.ground_truth
    samples = samples if samples is not None else sample_points()
    values = m.build(params)(samples.points)
    return samples.with_values(values)


def fit_parameters(name, target, cfg=OptimizerConfig(), phi0=None, ground_truth=None):
    """Fit a named microstructure to target SDF samples.

    Returns a FitReport; gradient-requiring configurations on non-smooth
    fields return status "unsupported" without evaluating anything.
    """
    m = pe.microstructure(name)
    if target.values is None:
        raise ContractError("target sample set carries no values")
    if not np.all(np.isfinite(target.values)):
        raise ContractError("target values must be finite")
    if cfg.requires_smooth and not m.smooth:
        return _unsupported(cfg, name)
    space = microstructure_space(name)
    phi0 = np.asarray(phi0 if phi0 is not None else m.init, dtype=float)
    pts = target.points

    def loss(phi):
        return loss_ft_3d(m.build(phi)(pts), target.values)

    report = _dispatch(cfg, loss, space, phi0, synthesis=False)
    if ground_truth is not None and report.phi_hat is not None:
        report.val_error = validation_error(report.phi_hat, ground_truth, space)
    return report


def bounded_by_unit_sphere(field):
    return fl.intersection(field, fl.sphere((0.0, 0.0, 0.0), 1.0))


def render_microstructure(name, params, camera, resolution_scale=1.0, **render_kw):
    """NormalColor render of the unit-sphere-bounded microstructure."""
    m = pe.microstructure(name)
    fld = bounded_by_unit_sphere(m.build(params))
    kw = dict(precision=1e-4, t_min=1e-3, t_max=10.0, max_steps=256)
    kw.update(render_kw)
    img, stats = tr.render(
        fld, camera, tr.NormalColor(), bound_sphere=((0.0, 0.0, 0.0), 1.0), **kw
    )
    return img, stats


def default_abs_camera(width=48, height=48):
    """Fixed view for synthesis fits: zoomed into the bounding ball.

    A tight framing keeps the stripe count of fine microstructures low,
    which widens the spectral loss basin around the true parameters
    (stripes per frame, not absolute frequency, is what the image DFT
    resolves).
    """
    return tr.Camera.look_at(
        (0.0, 0.0, -1.2), (0.0, 0.0, 0.0), fov_deg=25.0, width=width, height=height
    )


def make_image_target(name, params=None, camera=None, **render_kw):
    m = pe.microstructure(name)
    params = tuple(params) if params is not None else m.ground_truth
    camera = camera if camera is not None else default_abs_camera()
    img, _ = render_microstructure(name, params, camera, **render_kw)
    return img, camera


def analysis_by_synthesis(name, target_image, camera, cfg=None, phi0=None,
                          ground_truth=None, **render_kw):
    """Fit a microstructure by rendering candidates and comparing spectra.

    The camera is fixed: the target must have been rendered with the same
    intrinsics/extrinsics (single-view by design).
    """
    m = pe.microstructure(name)
    cfg = cfg if cfg is not None else OptimizerConfig(kind="cma_es", budget=300)
    if cfg.requires_smooth and not m.smooth:
        return _unsupported(cfg, name)
    space = microstructure_space(name)
    phi0 = np.asarray(phi0 if phi0 is not None else m.init, dtype=float)

    def loss(phi):
        img, _ = render_microstructure(name, phi, camera, **render_kw)
        return loss_ft_2d(img, target_image)

    report = _dispatch(cfg, loss, space, phi0, synthesis=True)
    if ground_truth is not None and report.phi_hat is not None:
        report.val_error = validation_error(report.phi_hat, ground_truth, space)
    return report
