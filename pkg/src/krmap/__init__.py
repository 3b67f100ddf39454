"""Invertible triangular transport maps from unnormalized densities.

The package builds Knothe-Rosenblatt rearrangements whose marginals come from
squared sparse polynomial expansions, composes them into layered maps with
adaptive tempering, and exposes construction, sampling, and diagnostics both
as a library and through the ``krmap`` command line tool.
"""

from .approx import (
    ConstructionResult,
    LsConfig,
    SampleBatch,
    attach_weights,
    basis_rows,
    bulk_chase,
    construct_kr,
    margin_indicators,
    sample_optimal,
    solve_weighted_ls,
)
from .density import SquaredPolyDensity
from .dirt import (
    AdaptiveTempering,
    ComposedMap,
    DataBatching,
    FixedTempering,
    LayeredResult,
    MapLayer,
    TargetProblem,
    hellinger_layer_estimate,
    hellinger_step_estimate,
    importance_diagnostics,
    layered_construct,
    next_beta,
    pullback_potential,
)
from .errors import (
    ArgumentError,
    BudgetExhaustedError,
    ContractError,
    DegenerateEnsembleError,
    DomainError,
    InvalidDensityError,
    KrmapError,
    NumericalError,
)
from .polybasis import (
    BasisFamily,
    DomainMap,
    Family,
    MapKind,
    UnivariatePdf,
    eval_basis,
    sample_reference,
    weight_density,
    weighted_antiderivative,
)
from .problems import (
    AnalyticTarget,
    CsirModel,
    csir_true_parameters,
    quadrature_hellinger,
    rk45_integrate,
    tensor_grid,
)
from .sparse import (
    MultiIndexSet,
    UniqueRowProjection,
    is_downward_closed,
    reduced_margin,
    total_degree_set,
    unique_row_projection,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveTempering", "AnalyticTarget", "ArgumentError", "BasisFamily",
    "BudgetExhaustedError", "ComposedMap", "ConstructionResult",
    "ContractError", "CsirModel", "DataBatching", "DegenerateEnsembleError",
    "DomainError", "DomainMap", "Family", "FixedTempering",
    "InvalidDensityError", "KrmapError", "LayeredResult", "LsConfig",
    "MapKind", "MapLayer", "MultiIndexSet", "NumericalError", "SampleBatch",
    "SquaredPolyDensity", "TargetProblem", "UnivariatePdf",
    "UniqueRowProjection", "attach_weights", "basis_rows", "bulk_chase",
    "construct_kr", "csir_true_parameters", "eval_basis",
    "hellinger_layer_estimate", "hellinger_step_estimate",
    "importance_diagnostics", "is_downward_closed", "layered_construct",
    "margin_indicators", "next_beta", "pullback_potential",
    "quadrature_hellinger", "reduced_margin", "rk45_integrate",
    "sample_optimal", "sample_reference", "solve_weighted_ls", "tensor_grid",
    "total_degree_set", "unique_row_projection", "weight_density",
    "weighted_antiderivative",
]
