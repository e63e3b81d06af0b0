//! Dense linear-algebra kernel: the matrix carrier, deterministic
//! SVD/eigendecomposition conventions, and the alignment scoring used
//! throughout the crate.

mod decomp;
mod matrix;
mod score;

pub use decomp::{
    complete_orthonormal, inv_psd_checked, inverse, singular_values, svd, sym_eigen, UsSvd,
};
pub use matrix::{orthonormalize_columns, random_orthonormal, Matrix};
pub use score::{
    adjacent_scores_from_svds, alignment_score, alignment_score_capped, invariance_scores,
    invariance_scores_from_svds, is_diagonal, layer_adjacent_scores, AlignmentScore,
    DEFAULT_RANK_TOL, GROUP_REL_TOL,
};
