"""Structured low-rank matrix recovery.

Encodes linear matrix structures (Hankel, block-Hankel, two-fold Hankel)
as sparse constraint/recovery pairs, and minimizes a penalized nuclear
norm objective over the lifted matrix with a factored conditional-gradient
solver.  An APG baseline with singular value thresholding serves as the
dense reference.
"""

from .apps import (ScsConfig, ScsData, SsrConfig, SsrData, recovery_metrics,
                   scs_generate, scs_problem, ssr_generate, ssr_problem)
from .baseline import (ApgConfig, hessian_operator, lipschitz_estimate,
                       solve_apg, solve_apg_homotopy, svt)
from .gcg import (DivergedError, GcgConfig, SolveTrace, TraceRecord, compress,
                  lam_stages, local_search, rank_estimate, recover_y, solve,
                  solve_homotopy, structured_rank)
from .linalg import (LinearOperator, SparseMatrix, dense_svd, spmv, spmv_t,
                     top_eigenvalue, top_singular_pair, unvec, vec)
from .objective import (FactorPair, LineSearchInputs, PenaltyProblem,
                        UnboundedDirectionError, assemble, f_value, factor_svd,
                        grad_f, line_search_theta, phi_value, psi_value)
from .structure import (RecoveryMode, StructureSpec, apply_structure,
                        block_hankel_spec, build_B, build_C, from_json,
                        hankel_spec, project_to_image, read_parameters,
                        to_json, two_fold_hankel_spec)

__version__ = "0.1.0"
