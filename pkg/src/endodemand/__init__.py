"""Equilibrium clearing prices and endogenous inverse demand functions.

A numerical library for pricing externally liquidated claims in a market of
utility-maximizing participants: the clearing price solves a tilted-expectation
fixed point, and differentiating the cleared value in the liquidated quantity
yields the market's order-book density and volume-weighted average price, with
full existence/uniqueness/monotonicity/concavity diagnostics.
"""

from .errors import ConvergenceError, DomainError, ValidationError
from .scenario import (
    RandomVariable,
    SamplingConfig,
    ScenarioSpace,
    ess_inf,
    ess_sup,
    expectation,
    is_comonotonic,
    load_scenario_json,
    mix_with_floor,
    sample,
    variance,
)
from .risk_profile import (
    AgentUtility,
    RiskProfile,
    custom_profile,
    custom_utility,
    exponential_utility,
    harmonic_aversion,
    linear_profile,
    log_profile,
    power_utility,
    validate_profile_grid,
)
from .clearing import (
    ClearingProblem,
    ClearingResult,
    bernoulli_ruin_product,
    clear,
    existence_diagnosis,
    find_all_roots,
    h_map,
    ruin_limit_price,
    theta,
    uniqueness_certificates,
)
from .inverse_demand import (
    CrossImpactGrid,
    DemandCurve,
    LiquidationProblem,
    cross_impact_grid,
    demand_curve,
    liquidity_at_zero,
    locate_dom_boundary,
    order_book_density,
    vwap,
)
from .closed_forms import (
    CounterexampleReport,
    EsscherMarket,
    bernoulli_curves,
    discrete_counterexample_report,
    esscher_price,
    gamma_curves,
    normal_curves,
    poisson_curves,
)
from .buhlmann import (
    Agent,
    AgentPopulation,
    AllocationTable,
    EquilibriumSolution,
    integrate_allocations,
    representative_profile,
    solve_equilibrium,
)
from . import discretize

__version__ = "0.1.0"

__all__ = [
    "Agent",
    "AgentPopulation",
    "AgentUtility",
    "AllocationTable",
    "ClearingProblem",
    "ClearingResult",
    "ConvergenceError",
    "CounterexampleReport",
    "CrossImpactGrid",
    "DemandCurve",
    "DomainError",
    "EquilibriumSolution",
    "EsscherMarket",
    "LiquidationProblem",
    "RandomVariable",
    "RiskProfile",
    "SamplingConfig",
    "ScenarioSpace",
    "ValidationError",
    "bernoulli_curves",
    "bernoulli_ruin_product",
    "clear",
    "cross_impact_grid",
    "custom_profile",
    "custom_utility",
    "demand_curve",
    "discrete_counterexample_report",
    "discretize",
    "esscher_price",
    "ess_inf",
    "ess_sup",
    "existence_diagnosis",
    "expectation",
    "exponential_utility",
    "find_all_roots",
    "gamma_curves",
    "h_map",
    "harmonic_aversion",
    "integrate_allocations",
    "is_comonotonic",
    "linear_profile",
    "liquidity_at_zero",
    "load_scenario_json",
    "locate_dom_boundary",
    "log_profile",
    "mix_with_floor",
    "normal_curves",
    "order_book_density",
    "poisson_curves",
    "power_utility",
    "representative_profile",
    "ruin_limit_price",
    "sample",
    "solve_equilibrium",
    "theta",
    "uniqueness_certificates",
    "validate_profile_grid",
    "variance",
    "vwap",
]
