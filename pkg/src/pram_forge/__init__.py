"""Choose, apply and evaluate mutual-information-optimal PRAM matrices under alpha-DP."""
from .core import (
    CategoricalDistribution,
    MicrodataColumn,
    PramError,
    PramMatrix,
    frequencies,
    make_column,
    validate_distribution,
)
from .dp_constraints import build_constraint_system, certify, dp_ratio, is_feasible
from .inference import estimate_p_em, estimate_p_inversion, risk_indices
from .info import entropy, marginal_z, mutual_information, plugin_mi
from .mechanism import build_matrix, load_column, privatize, save_column
from .optimizer import local_search, optimize, optimize_binary, optimize_symmetric
from .polytope import (
    enumerate_vertices_oracle,
    enumerate_vertices_prop2,
    prop2_applicable,
    vertex_values,
)

__version__ = "0.1.0"
