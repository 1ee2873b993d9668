"""Lorentz-covariant Bohmian trajectories for multi-particle Klein-Gordon
wave functions: currents, guidance dynamics, hypersurface-crossing statistics,
and Monte Carlo ensembles."""

from .errors import (
    AlreadySymmetrized,
    ArityMismatch,
    BadArity,
    ConfigError,
    EmptyExpansion,
    IndexOutOfRange,
    InitialDensityNegative,
    KGBohmError,
    MaxDensityNotFound,
    NodeEncountered,
    NonpositiveMass,
    NonuniformSpacing,
    NotOnSurface,
    PatchMismatch,
    SpeedNotSubluminal,
    TooManyTerms,
    TooManyUnresolved,
)
from .spacetime import (
    METRIC,
    METRIC_SIGNS,
    CausalClass,
    Hypersurface,
    LorentzTransform,
    boost,
    causal_class,
    four_vector,
    lower_index,
    minkowski_dot,
    norm_squared,
    signed_distance,
)
from .wavefunction import (
    Mode,
    ModeTerm,
    WaveFunction,
    gaussian_packet_terms,
    make_wavefunction,
    plane_wave,
    product_wavefunction,
)
from .dynamics import (
    EscapedBounds,
    IntegratorControls,
    ReachedSMax,
    ReachedSurface,
    StepUnderflow,
    SurfaceStop,
    Trajectory,
    TrajectoryPoint,
    VelocityLaw,
    conservation_residual,
    current,
    eom_residual,
    integrate_trajectory,
    polar,
    quantum_potential,
    quantum_potential_gradient,
    trajectory_set_distance,
    velocity_field,
)
from .surface import (
    CellLabel,
    ClassifyControls,
    CrossingEvent,
    MeasurableDistribution,
    Pairing,
    SurfacePartition,
    SurfacePatch,
    classify_patch,
    find_crossings,
    measurable_distribution,
    surface_density,
)
from .ensemble import (
    ComparisonReport,
    EnsembleResult,
    InitialDistribution,
    compare_to_prediction,
    normalize_on_surface,
    propagate_ensemble,
    sample_initial,
    sample_uniform,
)

__version__ = "0.1.0"
