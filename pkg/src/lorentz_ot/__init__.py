"""Optimal transport with the Lorentzian cost l^q on model spacetimes."""

from .extreal import NEG_INF, POS_INF, ExtReal
from .fields import ExpressionField, QuadraticJet, ZeroField
from .spacetime import (
    CausalClass,
    CustomDiagonal,
    Cylinder1p1,
    FLRWExp,
    FLRWPower,
    Minkowski,
    bakry_emery_ricci,
    causal_classify,
    christoffel,
    geodesic_shoot,
    metric_eval,
    ricci,
)
from .lagrangian import (
    hamiltonian_eval,
    lagrangian_eval,
    lagrangian_hessian,
    legendre_forward,
    legendre_inverse,
)
from .lorentz_distance import (
    DistanceResult,
    lorentz_distance,
    lorentz_distance_q,
    midpoint,
    reverse_triangle_residual,
    second_difference_probe,
)
from .transport import (
    Coupling,
    CostMatrix,
    DiscreteMeasure,
    DualPotentials,
    brute_force_oracle,
    c_transform,
    cost_matrix,
    cyclical_monotonicity_check,
    q_separation_check,
    solve_dual,
    solve_primal,
)
from .geodesics import (
    MeasurePath,
    geodesic_scaling_check,
    measure_rti_check,
    monge_mather_ratio,
    no_crossing_check,
    q_geodesic,
    support_containment_check,
)
from .sampling import SampledDensity, sample_ball
from .entropy import (
    ConvexityReport,
    entropy_along_flow,
    entropy_derivatives,
    jacobi_propagate,
    jacobian_log_derivatives,
    kn_convexity_verdict,
    necessity_experiment,
    optimal_map_flow,
    qconvex_jet_check,
)
from .expression import parse_expression, to_text

__version__ = "0.1.0"
