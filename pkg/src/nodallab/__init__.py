"""Monte Carlo estimation of nodal-component counts for planar Gaussian
fields with atomic spectral measures and for arithmetic random waves."""

from nodallab.measures import (
    MeasureError,
    SpectralMeasure,
    cilleruelo,
    fourier_coefficient,
    is_symmetric,
    mix,
    pair_measure,
    tilted_cilleruelo,
    uniform_circle,
    weak_star_distance,
)
from nodallab.lattice import (
    LatticeSolutionSet,
    in_S,
    r2,
    search_by_angular_target,
    spectral_measure_mu_n,
    sum_two_squares_reps,
)
from nodallab.synthesis import (
    FieldSample,
    covariance_probe,
    covariance_theoretical,
    sample_planar,
    sample_torus,
)
from nodallab.topology import ComponentCount, components_oracle, count_components, count_flips
from nodallab.estimation import (
    EstimateResult,
    SweepResult,
    continuity_path,
    estimate_cns_planar,
    estimate_cns_torus,
    interval_sweep,
    sweep_R,
)

__version__ = "0.1.0"
