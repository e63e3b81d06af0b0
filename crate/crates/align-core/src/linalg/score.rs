//! Alignment and invariance scoring between singular-vector bases.
//!
//! Scores compare two orthonormal column sets position by position under
//! the canonical (descending) singular-value order. Positions whose
//! singular values are degenerate carry rotational freedom, so consecutive
//! near-equal values are merged into groups and each group is compared by
//! the principal angles between the two column subspaces. The group
//! partition is the coarsest one compatible with both sides: a cut is kept
//! only where both spectra separate.

use crate::error::{Error, Result};
use crate::linalg::decomp::{singular_values, svd};
use crate::linalg::matrix::Matrix;
use crate::network::LinearNetwork;

/// Relative gap below which two consecutive singular values are treated as
/// one degenerate group.
pub const GROUP_REL_TOL: f64 = 1e-8;

/// Default relative threshold separating numerically-zero directions from
/// genuine rank.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// A subspace-alignment score in [0, 1] over `matched_rank` directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentScore {
    pub value: f64,
    pub matched_rank: usize,
}

/// Cut positions (in 1..len) where the spectrum separates by more than the
/// relative group tolerance. Values are assumed sorted descending.
fn spectrum_cuts(sigma: &[f64]) -> Vec<usize> {
    let scale = sigma.first().copied().unwrap_or(0.0).abs().max(f64::MIN_POSITIVE);
    let mut cuts = Vec::new();
    for i in 1..sigma.len() {
        if (sigma[i - 1] - sigma[i]).abs() > GROUP_REL_TOL * scale {
            cuts.push(i);
        }
    }
    cuts
}

fn retained_count(sigma: &[f64], rank_tol: f64) -> usize {
    let top = sigma.first().copied().unwrap_or(0.0);
    sigma.iter().take_while(|&&s| s > rank_tol * top && s > 0.0).count()
}

/// Mean cosine of the principal angles between span(left cols) and
/// span(right cols); both blocks have the same width.
fn group_cosine_sum(left: &Matrix, right: &Matrix, lo: usize, hi: usize) -> Result<f64> {
    let lblock = left.col_range(lo, hi);
    let rblock = right.col_range(lo, hi);
    let overlap = lblock.t_matmul(&rblock);
    let cosines = singular_values(&overlap)?;
    Ok(cosines.iter().map(|c| c.clamp(0.0, 1.0)).sum())
}

/// Score two orthonormal column sets whose columns are ordered by their
/// descending singular values, comparing at most `cap` leading directions.
pub fn alignment_score_capped(
    left: &Matrix,
    right: &Matrix,
    sigma_left: &[f64],
    sigma_right: &[f64],
    rank_tol: f64,
    cap: Option<usize>,
) -> Result<AlignmentScore> {
    if left.rows() != right.rows() {
        return Err(Error::ShapeMismatch {
            context: "alignment_score",
            expected: format!("{} rows", left.rows()),
            found: format!("{} rows", right.rows()),
        });
    }
    let mut t = retained_count(sigma_left, rank_tol)
        .min(retained_count(sigma_right, rank_tol))
        .min(left.cols())
        .min(right.cols());
    if let Some(c) = cap {
        t = t.min(c);
    }
    if t == 0 {
        return Err(Error::EmptyRank);
    }

    // Keep a cut only where both spectra separate; within the resulting
    // groups each side is degenerate, so principal angles are well defined
    // and rotation-invariant.
    let cuts_l = spectrum_cuts(&sigma_left[..t]);
    let cuts_r = spectrum_cuts(&sigma_right[..t]);
    let cuts: Vec<usize> = cuts_l.iter().copied().filter(|c| cuts_r.contains(c)).collect();

    let mut total = 0.0;
    let mut lo = 0;
    for &cut in cuts.iter().chain(std::iter::once(&t)) {
        total += group_cosine_sum(left, right, lo, cut)?;
        lo = cut;
    }
    let value = (total / t as f64).clamp(0.0, 1.0);
    Ok(AlignmentScore {
        value,
        matched_rank: t,
    })
}

/// Score two orthonormal column sets over every direction above the rank
/// threshold. See [`alignment_score_capped`].
pub fn alignment_score(
    left: &Matrix,
    right: &Matrix,
    sigma_left: &[f64],
    sigma_right: &[f64],
    rank_tol: f64,
) -> Result<AlignmentScore> {
    alignment_score_capped(left, right, sigma_left, sigma_right, rank_tol, None)
}

/// Adjacent-layer alignment: entry `i` compares the left singular vectors
/// of layer `i` with the right singular vectors of layer `i + 1`.
pub fn layer_adjacent_scores(
    net: &LinearNetwork,
    rank_tol: f64,
) -> Result<Vec<Result<AlignmentScore>>> {
    if net.depth() < 2 {
        return Err(Error::InvalidArgument(
            "adjacent scores need at least two layers".into(),
        ));
    }
    let decs: Vec<_> = net
        .layers()
        .iter()
        .map(svd)
        .collect::<Result<Vec<_>>>()?;
    Ok(adjacent_scores_from_svds(&decs, rank_tol, None))
}

/// Adjacent scores from precomputed layer decompositions. Per-pair failures
/// (for example a zero layer with no retained rank) are returned in place
/// rather than aborting the whole sweep.
pub fn adjacent_scores_from_svds(
    decs: &[crate::linalg::decomp::UsSvd],
    rank_tol: f64,
    cap: Option<usize>,
) -> Vec<Result<AlignmentScore>> {
    (0..decs.len() - 1)
        .map(|i| {
            alignment_score_capped(
                &decs[i].u,
                &decs[i + 1].v,
                &decs[i].sigma,
                &decs[i + 1].sigma,
                rank_tol,
                cap,
            )
        })
        .collect()
}

/// Per-layer invariance scores between a network at time t and at time 0:
/// for each layer, the left-basis score and the right-basis score.
pub fn invariance_scores(
    net_t: &LinearNetwork,
    net_0: &LinearNetwork,
    rank_tol: f64,
) -> Result<Vec<(Result<AlignmentScore>, Result<AlignmentScore>)>> {
    if net_t.dims() != net_0.dims() {
        return Err(Error::ShapeMismatch {
            context: "invariance_scores",
            expected: format!("{:?}", net_0.dims()),
            found: format!("{:?}", net_t.dims()),
        });
    }
    let dec_t: Vec<_> = net_t.layers().iter().map(svd).collect::<Result<Vec<_>>>()?;
    let dec_0: Vec<_> = net_0.layers().iter().map(svd).collect::<Result<Vec<_>>>()?;
    Ok(invariance_scores_from_svds(&dec_t, &dec_0, rank_tol, None))
}

/// Invariance scores from precomputed decompositions.
pub fn invariance_scores_from_svds(
    dec_t: &[crate::linalg::decomp::UsSvd],
    dec_0: &[crate::linalg::decomp::UsSvd],
    rank_tol: f64,
    cap: Option<usize>,
) -> Vec<(Result<AlignmentScore>, Result<AlignmentScore>)> {
    dec_t
        .iter()
        .zip(dec_0)
        .map(|(t, z)| {
            let u = alignment_score_capped(&t.u, &z.u, &t.sigma, &z.sigma, rank_tol, cap);
            let v = alignment_score_capped(&t.v, &z.v, &t.sigma, &z.sigma, rank_tol, cap);
            (u, v)
        })
        .collect()
}

/// True iff every off-diagonal entry is at most `tol * max(1, max-norm)`.
pub fn is_diagonal(m: &Matrix, tol: f64) -> bool {
    let scale = m.max_abs().max(1.0);
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if i != j && m.get(i, j).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}
