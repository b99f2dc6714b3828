"""Procedural multiscale signed-distance-field microstructures.

Synthesis of particulate, agglomerated, piled, and periodic volumes as
procedural scalar fields; an instrumented adaptive sphere tracer with a
small path tracer; and gradient-free reconstruction of procedural
parameters from SDF samples or rendered images.
"""

from .errors import (
    ConfigError,
    ContractError,
    DegenerateNormalError,
    DomainError,
    FieldEvaluationError,
)
from .fields import (
    OffsetFunction,
    ScalarField,
    WarpFunction,
    cylinder,
    ellipsoid,
    intersection,
    max_gradient_estimate,
    normal,
    offset,
    plane,
    smooth_min,
    sphere,
    union,
    warp,
)
from .hashgrid import (
    HashCoefficients,
    ParticleInstance,
    dual_neighbors,
    instantiate,
    moore_neighbors,
    rnd,
    scramble,
    seed_for_cell,
)
from .particulate import (
    FixedSize,
    GridSpec,
    NormalSize,
    ParticleRecipe,
    UniformSize,
    accept_particle,
    cluster_sdf,
    modular_correlation_g,
    multiphase_map,
    multiphase_warp,
    sample_size,
    suspended_sdf,
)
from .agglomerate import (
    AggloParticle,
    IntPolynomial,
    LatticeRule,
    agglomerate_sdf,
    bezier_gel_rule,
    eval_rule,
    int_poly,
    meso_surface_sdf,
    subset_sdf,
)
from .piling import (
    PilingConfig,
    Polynomial3,
    SparseConvolutionNoise,
    perlin,
    piling_sdf,
    poly3,
)
from .periodic import (
    MICROSTRUCTURES,
    Microstructure,
    SCFormula,
    TrigTerm,
    fibers2d,
    gyroid1d,
    gyroid3d,
    gyroid5d,
    microstructure,
    porous28d,
    sc_eval,
    sc_field,
    sc_particles,
    spheres2d,
    tpms,
    tpms_field,
)
from .tracer import (
    AdaptiveEveryN,
    AdaptivePoly,
    Bijection,
    Camera,
    Fixed,
    FmCase,
    Lambert,
    NormalColor,
    PathTrace,
    PureSphere,
    Ray,
    ScCase,
    TraceStats,
    compute_grid_scale,
    d_p_gate,
    depth_autocalibrate,
    render,
    sphere_trace,
    trace_batch,
)
from .optimize import (
    FitReport,
    ParamSpace,
    basin_hopping,
    cma_es,
    metropolis_accept,
    powell,
    validation_error,
)
from .recon import (
    OptimizerConfig,
    SampleSet,
    analysis_by_synthesis,
    fit_parameters,
    loss_ft_2d,
    loss_ft_3d,
    make_image_target,
    make_sdf_target,
    sample_points,
)

__version__ = "0.1.0"
