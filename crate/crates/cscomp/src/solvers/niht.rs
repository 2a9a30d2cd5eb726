//! Normalized iterative hard thresholding with backtracking (Alg. 2).

use super::{least_squares_on_support_detailed, rows_by_norm_desc, SolverResult};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{MeasurementMatrix, SensingMatrix};
use ndarray::{Array2, Axis};
use num_complex::Complex64;

pub const NIHT_DEFAULT_C: f64 = 0.1;
pub const NIHT_DEFAULT_MAX_ITERS: usize = 500;
pub const NIHT_DEFAULT_TOL: f64 = 1e-8;

/// NIHT: gradient step with the normalized stepsize
/// μ = ‖G|_I‖²/‖F·G|_I‖², hard thresholding to the s largest rows, and
/// stepsize halving whenever the support changes until
/// μ ≤ (1−c)·‖X̃−X‖²/‖F(X̃−X)‖². The support for the first stepsize comes
/// from the s largest rows of FᴴY. The returned estimate is refit by least
/// squares on the final support; that refit is the last history entry.
pub fn niht(
    f: &SensingMatrix,
    y: &MeasurementMatrix,
    s: usize,
    c: f64,
    max_iters: usize,
    tol: f64,
) -> Result<SolverResult> {
    if s < 1 || s > f.n() {
        return Err(Error::Param(format!("sparsity s={s} outside [1, N={}]", f.n())));
    }
    if !(0.0..1.0).contains(&c) || c == 0.0 {
        return Err(Error::Param(format!("backtracking constant c={c} outside (0,1)")));
    }
    if max_iters < 1 {
        return Err(Error::Param("max_iters must be ≥ 1".into()));
    }
    if tol < 0.0 {
        return Err(Error::Param("tol must be nonnegative".into()));
    }
    if f.m() != y.m() {
        return Err(Error::Dimension(format!(
            "F has {} rows but Y has {}",
            f.m(),
            y.m()
        )));
    }

    let (n, p) = (f.n(), y.p());
    // X never holds more than s live rows, so the iterate stays compact:
    // sorted row indices `xr` paired with an |xr|×P block of values `xv`.
    let mut xr: Vec<usize> = Vec::new();
    let mut xv: CMat = Array2::zeros((0, p));
    let mut support: Vec<usize> = {
        let g0 = f.apply_adjoint(y.entries());
        let mut idx: Vec<usize> = rows_by_norm_desc(&g0).into_iter().take(s).collect();
        idx.sort_unstable();
        idx
    };
    let mut residual: CMat = y.entries().clone();
    let mut r_prev = linalg::fro_norm(&residual);
    let mut history = vec![r_prev];
    let mut converged = false;
    let zero = Complex64::new(0.0, 0.0);

    for _ in 0..max_iters {
        let g = f.apply_adjoint(&residual);
        let num: f64 = support
            .iter()
            .map(|&i| g.row(i).iter().map(|&z| linalg::abs2(z)).sum::<f64>())
            .sum();
        let den = {
            let f_sub = f.entries().select(Axis(1), &support);
            let g_sub = g.select(Axis(0), &support);
            linalg::fro_norm_sq(&linalg::zdot(&f_sub, &g_sub))
        };
        if den == 0.0 {
            // Zero gradient on the support: stationary point.
            converged = true;
            break;
        }
        let mut mu = num / den;
        // Thresholded gradient step at stepsize μ: row norms of X + μG via
        // an overlay walk, top-s selection with the same total order as
        // `hard_threshold_rows`, and only the surviving rows materialized.
        let step = |mu: f64| -> (Vec<usize>, CMat) {
            let mut norms_sq = vec![0.0_f64; n];
            let mut cursor = 0usize;
            for i in 0..n {
                let mut acc = 0.0;
                if cursor < xr.len() && xr[cursor] == i {
                    for j in 0..p {
                        acc += linalg::abs2(xv[(cursor, j)] + g[(i, j)] * mu);
                    }
                    cursor += 1;
                } else {
                    for j in 0..p {
                        acc += linalg::abs2(g[(i, j)] * mu);
                    }
                }
                norms_sq[i] = acc;
            }
            let mut idx: Vec<usize> = (0..n).collect();
            if s < n {
                idx.select_nth_unstable_by(s - 1, |&a, &b| {
                    norms_sq[b]
                        .partial_cmp(&norms_sq[a])
                        .expect("row norms are finite")
                        .then(a.cmp(&b))
                });
            }
            idx.truncate(s);
            idx.sort_unstable();
            let mut vals: CMat = Array2::zeros((s, p));
            for (r, &i) in idx.iter().enumerate() {
                let old = xr.binary_search(&i).ok();
                for j in 0..p {
                    let base = old.map_or(zero, |c| xv[(c, j)]);
                    vals[(r, j)] = base + g[(i, j)] * mu;
                }
            }
            let live: Vec<usize> = (0..s)
                .filter(|&r| vals.row(r).iter().any(|&z| z != zero))
                .collect();
            if live.len() < s {
                let rows = live.iter().map(|&r| idx[r]).collect();
                (rows, vals.select(Axis(0), &live))
            } else {
                (idx, vals)
            }
        };
        let (mut xr_new, mut xv_new) = step(mu);
        if xr_new != support {
            loop {
                // Difference X̃−X lives on the support union.
                let mut union: Vec<usize> =
                    xr.iter().chain(xr_new.iter()).copied().collect();
                union.sort_unstable();
                union.dedup();
                let mut dvals: CMat = Array2::zeros((union.len(), p));
                let mut nd = 0.0_f64;
                for (r, &i) in union.iter().enumerate() {
                    let new = xr_new.binary_search(&i).ok();
                    let old = xr.binary_search(&i).ok();
                    for j in 0..p {
                        let a = new.map_or(zero, |c| xv_new[(c, j)]);
                        let b = old.map_or(zero, |c| xv[(c, j)]);
                        let d = a - b;
                        nd += linalg::abs2(d);
                        dvals[(r, j)] = d;
                    }
                }
                if nd == 0.0 {
                    break;
                }
                let live: Vec<usize> = (0..union.len())
                    .filter(|&r| dvals.row(r).iter().any(|&z| z != zero))
                    .collect();
                let fd = if live.len() < union.len() {
                    let rows: Vec<usize> = live.iter().map(|&r| union[r]).collect();
                    let dv = dvals.select(Axis(0), &live);
                    linalg::fro_norm_sq(&linalg::apply_on_rows(f.entries(), &rows, &dv))
                } else {
                    linalg::fro_norm_sq(&linalg::apply_on_rows(f.entries(), &union, &dvals))
                };
                if fd == 0.0 || mu <= (1.0 - c) * nd / fd {
                    break;
                }
                mu *= 0.5;
                (xr_new, xv_new) = step(mu);
            }
        }
        support = xr_new.clone();
        xr = xr_new;
        xv = xv_new;
        residual = y.entries() - &linalg::apply_on_rows(f.entries(), &xr, &xv);
        let r = linalg::fro_norm(&residual);
        history.push(r);
        if !r.is_finite() {
            return Err(Error::Solver(format!(
                "NIHT produced a non-finite residual at iteration {}",
                history.len() - 1
            )));
        }
        if r_prev > 0.0 && (r_prev - r).abs() <= tol * r_prev {
            converged = true;
            break;
        }
        r_prev = r;
    }

    // Eq. (5): terminal least-squares refit on the recovered support.
    let (estimate, rank_deficient) = least_squares_on_support_detailed(f, y, &support)?;
    let final_res = linalg::fro_norm(&(y.entries() - &f.apply(estimate.entries())));
    history.push(final_res);

    Ok(SolverResult {
        estimate,
        support,
        iterations: history.len() - 1,
        residual_history: history,
        converged,
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_na, to_na};
    use crate::model::{build_sensing_matrix, generate_sparse_sample, synthesize_measurements};
    use ndarray::Array2;
    use num_complex::Complex64 as C;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gaussian_f(m: usize, n: usize, seed: u64) -> SensingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = std::f64::consts::FRAC_1_SQRT_2 / (m as f64).sqrt();
        let a = Array2::from_shape_fn((m, n), |_| {
            let re: f64 = rng.sample(rand_distr::StandardNormal);
            let im: f64 = rng.sample(rand_distr::StandardNormal);
            C::new(re, im) * scale
        });
        SensingMatrix::from_entries(a)
    }

    #[test]
    fn orthonormal_recovery_in_one_iteration() {
        let a = gaussian_f(10, 6, 5);
        let q = from_na(&to_na(a.entries()).qr().q());
        let f = SensingMatrix::from_entries(q);
        let x0 = generate_sparse_sample(6, 2, 3, 8).unwrap();
        let y = MeasurementMatrix::from_entries(f.apply(x0.entries()));
        let r = niht(&f, &y, 3, NIHT_DEFAULT_C, NIHT_DEFAULT_MAX_ITERS, NIHT_DEFAULT_TOL).unwrap();
        // μ = 1 under orthonormal columns: the first iterate is already exact.
        assert!(r.residual_history[1] <= 1e-10 * r.residual_history[0]);
        assert_eq!(r.support, x0.support());
        let diff = r.estimate.entries() - x0.entries();
        assert!(linalg::fro_norm(&diff) <= 1e-8);
    }

    #[test]
    fn zero_measurements_converge_immediately() {
        let f = gaussian_f(8, 16, 2);
        let y = MeasurementMatrix::from_entries(Array2::zeros((8, 2)));
        let r = niht(&f, &y, 4, NIHT_DEFAULT_C, 100, NIHT_DEFAULT_TOL).unwrap();
        assert!(r.converged);
        assert!(r.estimate.support().is_empty());
        assert_eq!(r.final_residual(), 0.0);
    }

    #[test]
    fn residual_non_increasing() {
        let f = build_sensing_matrix(1).unwrap();
        for seed in 0..10u64 {
            let x0 = generate_sparse_sample(257, 4, 10, seed).unwrap();
            let y = synthesize_measurements(&f, &x0, Some(15.0), seed + 500).unwrap();
            let r = niht(&f, &y, 10, NIHT_DEFAULT_C, 200, NIHT_DEFAULT_TOL).unwrap();
            for w in r.residual_history.windows(2) {
                assert!(
                    w[1] <= w[0] * (1.0 + 1e-12),
                    "residual increased: {} -> {}",
                    w[0],
                    w[1]
                );
            }
        }
    }

    #[test]
    fn gaussian_recovery_typical() {
        let f = gaussian_f(40, 80, 11);
        let x0 = generate_sparse_sample(80, 4, 5, 12).unwrap();
        let y = MeasurementMatrix::from_entries(f.apply(x0.entries()));
        let r = niht(&f, &y, 5, NIHT_DEFAULT_C, NIHT_DEFAULT_MAX_ITERS, NIHT_DEFAULT_TOL).unwrap();
        assert_eq!(r.support, x0.support());
        assert!(r.final_residual() <= 1e-6);
    }

    #[test]
    fn rejects_bad_parameters() {
        let f = gaussian_f(8, 16, 2);
        let y = MeasurementMatrix::from_entries(Array2::zeros((8, 2)));
        assert!(niht(&f, &y, 0, 0.1, 10, 1e-8).is_err());
        assert!(niht(&f, &y, 17, 0.1, 10, 1e-8).is_err());
        assert!(niht(&f, &y, 4, 0.0, 10, 1e-8).is_err());
        assert!(niht(&f, &y, 4, 1.0, 10, 1e-8).is_err());
        assert!(niht(&f, &y, 4, 0.1, 0, 1e-8).is_err());
    }
}
