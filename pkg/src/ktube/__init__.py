"""Knudsen stochastic billiards in random tubes.

Tube construction lives in :mod:`ktube.geometry`, ray casting in
:mod:`ktube.raycast`, the cosine law and kernel in :mod:`ktube.cosine`, the
walk in :mod:`ktube.dynamics` and the estimators in :mod:`ktube.estimators`.
"""

__version__ = "0.1.0"

from .cosine import DirectionSample, eval_kernel, gamma_d, sample_cosine  # noqa: E402
from .dynamics import (  # noqa: E402
    Chord,
    Ensemble,
    Trajectory,
    hits_up_to,
    krw_step,
    krw_trajectory,
    ksb_position,
    simulate_ensemble,
)
from .estimators import (  # noqa: E402
    DiffusivityReport,
    diffusivity_report,
    drift_and_moments,
    estimate_mean_chord,
    estimate_sigma2,
    estimate_sigma_hat2,
    hit_histogram,
    induced_chord_stats,
    predicted_rate,
    tail_survival,
)
from .geometry import (  # noqa: E402
    BoundaryPoint,
    SectionInfo,
    TubeModel,
    boundary_point_at,
    build_tube,
    contains,
    profile,
    sample_boundary_uniform,
    section_slice,
    slab_surface_area,
    tube_from_json,
)
from .oracles import b_quadrature  # noqa: E402
from .raycast import RayHit, next_hit  # noqa: E402
from .rng import Stream  # noqa: E402
from .stats import Estimate, normality_check  # noqa: E402
