"""Bottleneck commuting with rigid and flextime work schedules, household
(school-then-work) and individual commuters, and agglomeration in output."""

from .errors import ConvergenceError, DomainError, FlexbottleError, ParameterError, SearchError
from .longrun import (
    DiffPair,
    EquilibriumSet,
    StabilityVerdict,
    benefit_diff,
    best_response_path,
    enumerate_equilibria,
    rho_dstar,
    stability_verdict,
)
from .model import GroupCounts, Model, ScheduleSplit, classify_case, group_counts, reference_model, validate
from .optimum import (
    SigmaRegion,
    TBOptimum,
    TCOptimum,
    benefit_gain,
    maximize_total_benefit,
    minimize_total_cost,
    pigouvian_region,
    total_benefit,
    total_cost,
)
from .oracle import NumericEquilibrium, ValidationReport, cross_validate, solve_numeric_equilibrium
from .productivity import OutputPair, output_pair
from .shortrun import CommutePattern, CostQuad, arrival_rates, build_pattern, closed_form_costs

__version__ = "1.0.0"
