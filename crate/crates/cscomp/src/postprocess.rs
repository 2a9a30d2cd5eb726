//! Support pruning and least-squares refitting of solver outputs.

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{CsiMatrix, MeasurementMatrix, SensingMatrix};
use crate::solvers::{least_squares_on_support_detailed, rows_by_norm_desc, SolverResult};

/// Keep the (at most) `s` largest-norm nonzero rows of `x_hat`, refit them
/// by least squares against Y, and zero everything else. Soft-thresholding
/// solvers (FISTA, AMP) return biased estimates on slightly-too-large
/// supports; this recovers an exactly row-sparse X̂ and the unbiased
/// amplitudes. `iterations` is 0 and the single history entry is the
/// refitted residual.
pub fn prune_and_refit(
    x_hat: &CsiMatrix,
    f: &SensingMatrix,
    y: &MeasurementMatrix,
    s: usize,
) -> Result<SolverResult> {
    if s == 0 {
        return Err(Error::Param("target sparsity s must be ≥ 1".into()));
    }
    if f.n() != x_hat.n() {
        return Err(Error::Dimension(format!(
            "F has {} columns but X̂ has {} rows",
            f.n(),
            x_hat.n()
        )));
    }
    if f.m() != y.m() || x_hat.p() != y.p() {
        return Err(Error::Dimension(
            "shapes of F, X̂, and Y disagree".into(),
        ));
    }
    let norms = linalg::row_norms(x_hat.entries());
    let mut support: Vec<usize> = rows_by_norm_desc(x_hat.entries())
        .into_iter()
        .filter(|&i| norms[i] > 0.0)
        .take(s)
        .collect();
    support.sort_unstable();
    if support.is_empty() {
        return Ok(SolverResult {
            estimate: CsiMatrix::zeros(f.n(), y.p()),
            support,
            iterations: 0,
            residual_history: vec![y.norm()],
            converged: true,
            rank_deficient: false,
        });
    }
    let (estimate, rank_deficient) = least_squares_on_support_detailed(f, y, &support)?;
    let residual = linalg::fro_norm(&(y.entries() - &f.apply(estimate.entries())));
    Ok(SolverResult {
        estimate,
        support,
        iterations: 0,
        residual_history: vec![residual],
        converged: true,
        rank_deficient,
    })
}
