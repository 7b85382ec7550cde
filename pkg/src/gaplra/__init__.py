"""Rank-k approximation with adaptive gap-based shift-and-invert preconditioning."""

__version__ = "0.1.0"

from .approximate import (ApproximationRequest, PartitionPlan, RankKProjection, approximate,
                          deflation_basis_extend, error_report, estimate_mu, plain_power_baseline)
from .errors import (ContractViolation, DegenerateProgress, GapLRAError, IndefiniteShift,
                     MatrixFormatError, NoPreconditioningNeeded, NoUsableGap, OracleScale,
                     RankDeficient, ShiftOutOfRange, ShiftTuningStalled, SolverStalled)
from .matrix import (DeflatedOperator, GramOperator, SparseColumnsMatrix, deflate_apply,
                     gaussian_init, gram_apply, qr_orthonormalize, spmv, spmv_t)
from .partition import (GapBudget, Interval, ShiftState, Strategy, condition_number_witness,
                        detect_additive_gap, detect_multiplicative_gap, find_gap_budget, tune_shift)
from .solvers import (ShiftedInverseOperator, ShiftedSystem, inverse_operator, solve_accelerated_svrg,
                      solve_cg, solve_direct, solve_svrg)
from .subspace import (SpectrumEstimate, SubspaceIterationConfig, estimate_eigenvalues,
                       restricted_projection, subspace_iterate)
from .synthetic import SyntheticSpec, plant
