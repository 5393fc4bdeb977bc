"""Media-based modulation constellations: open-loop draws, closed-loop
weight shaping, and Monte Carlo error-rate evaluation."""

from .core import (
    Constellation,
    DistanceReport,
    Provenance,
    WeightVector,
    analytic_eta_bound,
    analytic_mean_dmin_bound,
    analytic_qam_rayleigh_dmin,
    apply_weights,
    draw_open_loop,
    min_pairwise_distance,
    reference_psk,
    reference_qam,
)
from .errors import MBMError, NumericError, ParameterError
from .optimizer import (
    BitMapping,
    OptimizationTrace,
    PerturbationSchedule,
    evaluate_metric,
    optimize_bit_mapping,
    optimize_weights,
    optimize_weights_multistart,
)
from .channel import (
    Channel,
    EnergyReference,
    SerCurve,
    SimConfig,
    average_over_channels,
    simulate_ber_uncoded,
    simulate_ser,
)
from .stats import (
    Histogram,
    analytic_do_pdf,
    ks_statistic,
    sample_dmin_distribution,
)

__version__ = "0.1.0"
