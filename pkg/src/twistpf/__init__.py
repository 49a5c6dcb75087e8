"""Particle filters for hidden Markov models, with twisted proposals and
exact small-model oracles.

The library is organized in layers:

- :mod:`twistpf.windows`, :mod:`twistpf.rng` -- observation indexing and
  counter-based random streams.
- :mod:`twistpf.fkcore`, :mod:`twistpf.models` -- model interfaces, concrete
  models (finite HMM, linear-Gaussian, stochastic volatility), and exact
  references (forward recursion, Kalman).
- :mod:`twistpf.twists` -- twist functions: constant, finite-lookahead,
  Gaussian and volatility approximations, and the time-varying
  eigenfunction with its convergence certificate.
- :mod:`twistpf.filters` -- bootstrap, twisted, auxiliary and
  importance-sampling runs, all returning a :class:`RunTrace`.
- :mod:`twistpf.oracle` -- exact product-space moments, asymptotic variances
  and the growth-rate bound, for validating the samplers.
- :mod:`twistpf.harness` -- replicate experiments, CSV artifacts, manifests.
"""

__version__ = "0.1.0"

from .fkcore import DistributionVector, FiniteFK, FKModel, phi_map, q_apply, q_apply_log
from .filters import (
    RunTrace,
    apf_run,
    bootstrap_run,
    default_test_functions,
    sis_run,
    twisted_run,
    write_runtrace_csv,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    draw_window,
    load_config,
    run_bound,
    run_clt_check,
    run_from_manifest,
    run_oracle_check,
    run_simulate,
    run_single,
    run_unbiasedness,
    run_variance_growth,
)
from .models import (
    FiniteHMMParams,
    LinearGaussianParams,
    SVParams,
    finite_forward,
    kalman_run,
    simulate,
    write_path_csv,
)
from .oracle import (
    BoundReport,
    CltVariances,
    OracleReport,
    SlopeFit,
    build_bold_kernels,
    exact_clt_variances,
    exact_moments,
    fit_slope,
    upsilon_bound,
    upsilon_slope,
    write_oracle_csv,
    write_oracle_summary_csv,
)
from .resampling import multinomial_resample
from .rng import RngStream
from .twists import (
    ConstantTwist,
    ConvergenceError,
    EigenTriple,
    EigenTwist,
    FiniteLagTwist,
    LinearGaussianLagTwist,
    StochasticVolatilityTwist,
    TwistFunction,
    eigen_triple,
    make_twist,
    with_log_offset,
)
from .windows import LookaheadError, ObservationWindow

__all__ = [
    "__version__",
    "ObservationWindow",
    "LookaheadError",
    "RngStream",
    "multinomial_resample",
    "FKModel",
    "FiniteFK",
    "DistributionVector",
    "q_apply",
    "q_apply_log",
    "phi_map",
    "LinearGaussianParams",
    "FiniteHMMParams",
    "SVParams",
    "simulate",
    "kalman_run",
    "finite_forward",
    "write_path_csv",
    "TwistFunction",
    "ConstantTwist",
    "FiniteLagTwist",
    "LinearGaussianLagTwist",
    "StochasticVolatilityTwist",
    "EigenTriple",
    "EigenTwist",
    "eigen_triple",
    "make_twist",
    "with_log_offset",
    "ConvergenceError",
    "RunTrace",
    "bootstrap_run",
    "twisted_run",
    "apf_run",
    "sis_run",
    "default_test_functions",
    "write_runtrace_csv",
    "build_bold_kernels",
    "exact_moments",
    "OracleReport",
    "exact_clt_variances",
    "CltVariances",
    "upsilon_bound",
    "upsilon_slope",
    "BoundReport",
    "SlopeFit",
    "fit_slope",
    "write_oracle_csv",
    "write_oracle_summary_csv",
    "ConfigError",
    "ExperimentConfig",
    "load_config",
    "draw_window",
    "run_variance_growth",
    "run_clt_check",
    "run_unbiasedness",
    "run_oracle_check",
    "run_single",
    "run_simulate",
    "run_bound",
    "run_from_manifest",
]
