//! Truncated moment problems on the plane curves `y = q(x)` and `y x^l = 1`.
//!
//! Bivariate data on such a curve is reduced to a univariate, possibly partial,
//! Hankel sequence. Solvability then becomes a Hamburger problem or a positive
//! semidefinite Hankel completion, and atoms found on the line are lifted back
//! to the curve.

mod linalg;
pub mod completion;
pub mod hamburger;
pub mod hankel;
pub mod moments;
pub mod reduction;

pub use moments::{
    apply_alt, apply_polynomial_map, build_moment_matrix, check_column_relation,
    check_curve_relations, riesz_eval, synth_moments, AffineMap, AtomicMeasure2D,
    BivariateMomentSequence, CurveSpec, MomentError, MomentMatrix, Monomial, Poly2,
    ToleranceConfig,
};
pub use completion::{
    atom_bound, complete_feasibility, complete_single_entry, export_sdpa, moment_residual,
    solve_cubic_odd, solve_curve, solve_parabola, summarize_moment_matrix, CompletionError,
    Diagnostics, FeasibilityOutcome, MomentMatrixSummary, SolveReport, SolveStatus,
};
