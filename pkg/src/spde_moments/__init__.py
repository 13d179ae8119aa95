"""Moment estimates and coercivity audits for SPDEs in Gelfand-triple form.

Submodules: :mod:`gelfand` (discrete triples), :mod:`noise` (Wiener
increments), :mod:`operators` (equation factories), :mod:`coercivity`
(inequality audits), :mod:`simulate` (Euler-Maruyama), :mod:`moments`
(Monte Carlo and exact oracles), :mod:`cli`.
"""

from ._jit import NUMBA_ENABLED, backend_name
from .coercivity import (
    CoercivityReport,
    VectorSampler,
    check_coercivity,
    check_coercivity_pminus1,
    check_growth,
    check_hemicontinuity,
    check_monotonicity,
    coercivity_lhs,
    coercivity_lhs_pminus1,
    ellipticity_min,
    higher_order_check,
    msp_check,
    p_laplace_gamma_bound,
)
from .config import ConfigError, ExperimentConfig, parse_config
from .gelfand import GalerkinSpace, SpaceConfig, build_space, dual_norm, duality_pair, h_inner, h_norm, v_norm
from .moments import (
    MomentEstimate,
    divergence_diagnostic,
    estimate_sup_moment,
    estimate_v_moment,
    exact_spectral_moment,
    truncated_second_moment,
)
from .noise import WienerStream, coarsen, refine, sample_increments
from .operators import (
    OperatorPair,
    apply_A,
    apply_B,
    b_adjoint_v,
    burgers_make,
    heat_dirichlet_make,
    heat_neumann_make,
    higher_order_make,
    navier_stokes_2d_make,
    p_laplace_make,
    spectral_example_make,
    system_make,
)
from .simulate import SchemeConfig, simulate_path, step, strong_convergence_order

__version__ = "0.1.0"
