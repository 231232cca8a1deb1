"""Benchmark problem generators and reference solvers."""

from .io import instance_from_dict, instance_to_dict, load_instance, save_instance
from .lasso import (LassoInstance, gen_lasso, lasso_local_terms, reference_solve_lasso,
                    spectral_norm)
from .matrix_completion import (MatrixCompletionInstance, MatrixCompletionTerm,
                                gen_matrix_completion, mc_local_terms)

__all__ = [
    "LassoInstance", "MatrixCompletionInstance", "MatrixCompletionTerm", "gen_lasso",
    "gen_matrix_completion", "instance_from_dict", "instance_to_dict", "lasso_local_terms",
    "load_instance", "mc_local_terms", "reference_solve_lasso", "save_instance",
    "spectral_norm",
]
