"""SPAD event-stream simulation, dead-time-exact likelihoods, and
score-guided flux reconstruction."""

from ._backend import backend_name
from .distributions import (
    RandomStream,
    erlang_cdf,
    erlang_pdf,
    poisson_pmf,
    sample_exponential,
    shifted_exp_pdf,
)
from .eventfile import EventFileError, read_events, write_events
from .likelihood import (
    CaseTag,
    LikelihoodResult,
    MleFlag,
    MleResult,
    classify_case,
    count_pmf,
    count_pmf_array,
    grad_log_likelihood,
    grad_log_likelihood_map,
    log_likelihood,
    max_events,
    mle_flux,
)
from .pgm import read_pgm, write_pgm
from .reconstruction import (
    DomainTransform,
    GaussianPrior,
    MleMap,
    PriorScore,
    ReconstructionError,
    ScheduleSet,
    SmoothnessPrior,
    ancestral_step,
    domain_adapt,
    dps_reconstruct,
    guidance_step,
    inverse_domain,
    mle_reconstruct,
    tweedie_estimate,
)
from .remote_score import RemoteScoreError, RemoteScorePrior
from .simulator import (
    PixelRng,
    SensorConfig,
    effective_rate,
    lux_to_flux,
    simulate_counts,
    simulate_fixed_count,
    simulate_image,
    simulate_image_fixed_count,
    simulate_pixel,
)
from .streams import EventStream, FluxMap, StreamCollection

__version__ = "0.1.0"
