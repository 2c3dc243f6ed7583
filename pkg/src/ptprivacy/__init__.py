"""Optimal differentially private data collection from prospect-theoretic individuals."""
from .pt_core import (
    DomainError,
    PTParams,
    cost_slope_M,
    privacy_cost,
    prospect_nonparticipation_level,
    prospect_participation_level,
    valuation,
)
from .population import (
    GammaHetero,
    GammaSpec,
    Individual,
    Roster,
    ValuationDist,
    chi_squared_gof,
    count_roster,
    gamma_from_mean_var,
    participate,
    participation_count,
    sample_roster,
)
from .collector import (
    MarketConfig,
    UtilityBreakdown,
    accuracy_penalty,
    benefit,
    collector_utility,
    feasible_upper,
    laplace_noise_demo,
    poly_f,
    poly_f_pos,
    utility_derivative,
)
from .solver import (
    SolveResult,
    SolverError,
    solve_closed_form,
    solve_exhaustive,
    solve_poly_root,
    solve_roster,
)

__version__ = "0.1.0"
