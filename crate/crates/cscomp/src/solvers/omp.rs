//! Orthogonal matching pursuit for the MMV problem (Alg. 1).

use ndarray::Axis;

use super::{least_squares_on_support_detailed, SolverResult};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{CsiMatrix, MeasurementMatrix, SensingMatrix};

/// Default selection-score floor ε.
pub const OMP_DEFAULT_EPS: f64 = 1e-12;

/// Greedy MMV recovery: per iteration pick the column with the largest
/// aggregate correlation score Σ_j |F_{:,i}ᴴ R_{:,j}|², refit by least
/// squares on the enlarged support, update the residual. Stops after `s`
/// selections, or early when the best column is already selected or its
/// score falls below `eps`.
pub fn omp_mmv(
    f: &SensingMatrix,
    y: &MeasurementMatrix,
    s: usize,
    eps: f64,
) -> Result<SolverResult> {
    if s < 1 || s > f.m().min(f.n()) {
        return Err(Error::Param(format!(
            "sparsity s={s} outside [1, min(M,N)={}]",
            f.m().min(f.n())
        )));
    }
    if eps < 0.0 {
        return Err(Error::Param("eps must be nonnegative".into()));
    }
    if f.m() != y.m() {
        return Err(Error::Dimension(format!(
            "F has {} rows but Y has {}",
            f.m(),
            y.m()
        )));
    }

    let mut support: Vec<usize> = Vec::with_capacity(s);
    let mut estimate = CsiMatrix::zeros(f.n(), y.p());
    let mut residual: CMat = y.entries().clone();
    let mut history = vec![linalg::fro_norm(&residual)];
    let mut rank_deficient = false;
    let mut early_stop = false;

    for _ in 0..s {
        let g = f.apply_adjoint(&residual);
        let (best_idx, best_score) = g
            .axis_iter(Axis(0))
            .map(|row| row.iter().map(|&z| linalg::abs2(z)).sum::<f64>())
            .enumerate()
            // Strict comparison keeps the first (lowest-index) maximum.
            .fold((0usize, f64::NEG_INFINITY), |acc, (i, sc)| {
                if sc > acc.1 {
                    (i, sc)
                } else {
                    acc
                }
            });
        if support.binary_search(&best_idx).is_ok() || best_score < eps {
            early_stop = true;
            break;
        }
        let pos = support.binary_search(&best_idx).unwrap_err();
        support.insert(pos, best_idx);
        let (x, deficient) = least_squares_on_support_detailed(f, y, &support)?;
        rank_deficient |= deficient;
        residual = y.entries() - &f.apply(x.entries());
        history.push(linalg::fro_norm(&residual));
        estimate = x;
    }

    let iterations = history.len() - 1;
    let converged = early_stop || history.last().unwrap() <= &(1e-10 * history[0].max(1e-300));
    Ok(SolverResult {
        estimate,
        support,
        iterations,
        residual_history: history,
        converged,
        rank_deficient,
    })
}
