//! Classical row-sparse MMV recovery: OMP, NIHT, FISTA with continuation
//! and adaptive restart, AMP and its MMV adaptation, plus the operators
//! they share (row-wise shrinkage, hard thresholding, least squares on a
//! support, Lipschitz estimation).

mod amp;
mod fista;
mod niht;
mod omp;

pub use amp::{amp, amp_mmv, AmpResult};
pub use fista::{fista, fista_fixed_lambda, fista_with_trace, FistaConfig, FistaTrace};
pub use niht::{niht, NIHT_DEFAULT_C, NIHT_DEFAULT_MAX_ITERS, NIHT_DEFAULT_TOL};
pub use omp::{omp_mmv, OMP_DEFAULT_EPS};

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{CsiMatrix, MeasurementMatrix, SensingMatrix};

/// Default number of power-iteration sweeps for [`lipschitz_estimate`].
pub const LIPSCHITZ_DEFAULT_ITERS: usize = 100;

/// CSV header matching [`SolverResult::csv_row`].
pub const SOLVER_CSV_HEADER: &str = "algorithm,s,os,iterations,final_residual,wall_time_ms";

/// Outcome of a recovery run.
#[derive(Debug, Clone)]
pub struct SolverResult {
    /// Recovered X̂ (N×P).
    pub estimate: CsiMatrix,
    /// Row indices of the estimate's support, ascending.
    pub support: Vec<usize>,
    /// Number of iterations performed; `residual_history.len() - 1`.
    /// Terminal least-squares refits count as the final entry.
    pub iterations: usize,
    /// ‖Y − F·X_k‖ per iterate, starting at the initial point.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// True when a least-squares refit hit a rank-deficient restricted
    /// matrix and fell back to the minimum-norm solution.
    pub rank_deficient: bool,
}

impl SolverResult {
    /// Residual at the returned estimate.
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(f64::NAN)
    }

    /// Serialize as `algorithm,s,os,iterations,final_residual,wall_time_ms`.
    pub fn csv_row(&self, algorithm: &str, s: usize, os: usize, wall_time_ms: f64) -> String {
        format!(
            "{},{},{},{},{},{}",
            algorithm,
            s,
            os,
            self.iterations,
            self.final_residual(),
            wall_time_ms
        )
    }
}

/// Row-wise shrinkage (Eq. (7)): row ↦ max(0, ‖row‖−λ)/‖row‖ · row.
/// The proximal operator of λ‖·‖_{2,1}; zero rows stay zero.
pub fn row_shrink(x: &CMat, lambda: f64) -> CMat {
    debug_assert!(lambda >= 0.0);
    let mut out = Array2::zeros(x.dim());
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        let norm = row.iter().map(|&z| linalg::abs2(z)).sum::<f64>().sqrt();
        if norm > lambda {
            let scale = (norm - lambda) / norm;
            for (j, &z) in row.iter().enumerate() {
                out[[i, j]] = z * scale;
            }
        }
    }
    out
}

/// Row indices ordered by descending l2 norm, ties broken by lowest index.
/// Zero-norm rows sort last (still by index).
pub(crate) fn rows_by_norm_desc(x: &CMat) -> Vec<usize> {
    let norms_sq: Vec<f64> = x
        .axis_iter(Axis(0))
        .map(|row| row.iter().map(|&z| linalg::abs2(z)).sum::<f64>())
        .collect();
    let mut idx: Vec<usize> = (0..x.nrows()).collect();
    idx.sort_by(|&a, &b| {
        norms_sq[b]
            .partial_cmp(&norms_sq[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    idx
}

/// Keep the s rows with largest l2 norm verbatim, zero all others
/// (Eqs. (4)–(5) thresholding, values kept). Ties go to the lowest index.
pub fn hard_threshold_rows(x: &CMat, s: usize) -> CMat {
    let s = s.min(x.nrows());
    let norms_sq: Vec<f64> = x
        .axis_iter(Axis(0))
        .map(|row| row.iter().map(|&z| linalg::abs2(z)).sum::<f64>())
        .collect();
    let mut idx: Vec<usize> = (0..x.nrows()).collect();
    if s > 0 && s < idx.len() {
        idx.select_nth_unstable_by(s - 1, |&a, &b| {
            norms_sq[b]
                .partial_cmp(&norms_sq[a])
                .unwrap()
                .then(a.cmp(&b))
        });
    }
    let mut out = Array2::zeros(x.dim());
    for &i in idx.iter().take(s) {
        out.row_mut(i).assign(&x.row(i));
    }
    out
}

/// Least-squares fit of Y on the columns of F indexed by `support`; rows
/// outside the support are zero. Rank-deficient restricted matrices fall
/// back to the minimum-norm solution; the flag in the pair reports that.
pub fn least_squares_on_support_detailed(
    f: &SensingMatrix,
    y: &MeasurementMatrix,
    support: &[usize],
) -> Result<(CsiMatrix, bool)> {
    if f.m() != y.m() {
        return Err(Error::Dimension(format!(
            "F has {} rows but Y has {}",
            f.m(),
            y.m()
        )));
    }
    let mut sup: Vec<usize> = support.to_vec();
    sup.sort_unstable();
    sup.dedup();
    if let Some(&bad) = sup.iter().find(|&&i| i >= f.n()) {
        return Err(Error::Param(format!(
            "support index {bad} out of range for N={}",
            f.n()
        )));
    }
    let mut x: CMat = Array2::zeros((f.n(), y.p()));
    if sup.is_empty() {
        return Ok((CsiMatrix::from_entries(x), false));
    }
    let f_sub = f.entries().select(Axis(1), &sup);
    let (z, deficient) = linalg::lstsq_min_norm(&f_sub, y.entries());
    for (k, &i) in sup.iter().enumerate() {
        x.row_mut(i).assign(&z.row(k));
    }
    Ok((CsiMatrix::from_entries(x), deficient))
}

/// [`least_squares_on_support_detailed`] without the rank flag.
pub fn least_squares_on_support(
    f: &SensingMatrix,
    y: &MeasurementMatrix,
    support: &[usize],
) -> Result<CsiMatrix> {
    least_squares_on_support_detailed(f, y, support).map(|(x, _)| x)
}

/// Largest eigenvalue of FᴴF (= σ_max(F)²) by power iteration; the FISTA
/// stepsize is 1/β. Each of the `iters` sweeps applies the Gram operator
/// twice and the loop stops early once the Rayleigh quotient stagnates.
pub fn lipschitz_estimate(f: &SensingMatrix, iters: usize) -> f64 {
    let n = f.n();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4c49_5053);
    let mut v: CMat = Array2::zeros((n, 1));
    for z in v.iter_mut() {
        use rand::Rng;
        let re: f64 = rng.sample(rand_distr::StandardNormal);
        let im: f64 = rng.sample(rand_distr::StandardNormal);
        *z = num_complex::Complex64::new(re, im);
    }
    let nv = linalg::fro_norm(&v);
    if nv == 0.0 {
        return 0.0;
    }
    v.mapv_inplace(|z| z / nv);

    let gram = |x: &CMat| f.apply_adjoint(&linalg::zdot(f.entries(), x));
    let mut lambda = 0.0_f64;
    for _ in 0..iters.max(1) {
        let u = gram(&v);
        // Rayleigh quotient ⟨v, Gv⟩ for the unit vector v; real for PSD G.
        let new_lambda = linalg::re_inner(&v, &u);
        let u2 = gram(&u);
        let nu2 = linalg::fro_norm(&u2);
        if nu2 == 0.0 {
            return 0.0;
        }
        let done = new_lambda > 0.0 && (new_lambda - lambda).abs() <= 1e-13 * new_lambda;
        lambda = new_lambda;
        if done {
            break;
        }
        v = u2.mapv(|z| z / nu2);
    }
    lambda
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_sensing_matrix;
    use ndarray::array;
    use num_complex::Complex64 as C;
    use rand::Rng;

    fn c(re: f64, im: f64) -> C {
        C::new(re, im)
    }

    fn gaussian_matrix(m: usize, n: usize, scale: f64, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((m, n), |_| {
            let re: f64 = rng.sample(rand_distr::StandardNormal);
            let im: f64 = rng.sample(rand_distr::StandardNormal);
            C::new(re, im) * (scale * std::f64::consts::FRAC_1_SQRT_2)
        })
    }

    #[test]
    fn row_shrink_hand_values() {
        let x = array![[c(3.0, 0.0), c(4.0, 0.0)]];
        let out = row_shrink(&x, 2.0);
        assert!((out[[0, 0]] - c(1.8, 0.0)).norm() < 1e-12);
        assert!((out[[0, 1]] - c(2.4, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn row_shrink_identity_and_clamp() {
        let x = array![
            [c(1.0, -2.0), c(0.5, 0.25)],
            [c(0.0, 0.0), c(0.0, 0.0)],
            [c(0.1, 0.0), c(0.0, 0.1)]
        ];
        let id = row_shrink(&x, 0.0);
        for (a, b) in id.iter().zip(x.iter()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        // λ above every row norm clamps everything to zero.
        let z = row_shrink(&x, 10.0);
        assert!(z.iter().all(|v| v.re == 0.0 && v.im == 0.0));
        // Row norm shrinks by exactly λ on surviving rows.
        let lam = 0.5;
        let sh = row_shrink(&x, lam);
        let n0_in: f64 = x.row(0).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let n0_out: f64 = sh.row(0).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((n0_out - (n0_in - lam)).abs() < 1e-12);
    }

    #[test]
    fn hard_threshold_ordering_and_ties() {
        let x = array![
            [c(5.0, 0.0)],
            [c(1.0, 0.0)],
            [c(3.0, 0.0)]
        ];
        let out = hard_threshold_rows(&x, 2);
        assert_eq!(out[[0, 0]], c(5.0, 0.0));
        assert_eq!(out[[1, 0]], c(0.0, 0.0));
        assert_eq!(out[[2, 0]], c(3.0, 0.0));

        // s = N keeps everything.
        let all = hard_threshold_rows(&x, 3);
        assert_eq!(all, x);

        // Tie at the boundary: row 1 and row 2 have equal norms; the lower
        // index must win.
        let t = array![[c(2.0, 0.0)], [c(1.0, 0.0)], [c(0.0, 1.0)]];
        let out = hard_threshold_rows(&t, 2);
        assert_eq!(out[[1, 0]], c(1.0, 0.0));
        assert_eq!(out[[2, 0]], c(0.0, 0.0));
    }

    #[test]
    fn least_squares_recovers_consistent_system() {
        let f = build_sensing_matrix(1).unwrap();
        let x0 = crate::model::generate_sparse_sample(257, 4, 10, 21).unwrap();
        let y = crate::model::synthesize_measurements(&f, &x0, None, 0).unwrap();
        let (xh, deficient) = least_squares_on_support_detailed(&f, &y, &x0.support()).unwrap();
        assert!(!deficient);
        let diff = xh.entries() - x0.entries();
        let rel = linalg::fro_norm(&diff) / linalg::fro_norm(x0.entries());
        assert!(rel < 1e-10, "relative error {rel}");
        assert_eq!(xh.support(), x0.support());
    }

    #[test]
    fn least_squares_empty_support_and_validation() {
        let f = build_sensing_matrix(1).unwrap();
        let y = MeasurementMatrix::from_entries(Array2::from_elem((52, 3), c(1.0, 0.0)));
        let x = least_squares_on_support(&f, &y, &[]).unwrap();
        assert!(x.support().is_empty());
        assert!(least_squares_on_support(&f, &y, &[300]).is_err());
    }

    #[test]
    fn least_squares_normal_equations_optimality() {
        // Fᴴ(Y − FX̂) restricted to the support must vanish.
        let f = build_sensing_matrix(1).unwrap();
        let x0 = crate::model::generate_sparse_sample(257, 4, 10, 33).unwrap();
        let y = crate::model::synthesize_measurements(&f, &x0, Some(10.0), 77).unwrap();
        let sup = x0.support();
        let xh = least_squares_on_support(&f, &y, &sup).unwrap();
        let resid = y.entries() - &f.apply(xh.entries());
        let corr = f.apply_adjoint(&resid);
        let on_support: f64 = sup
            .iter()
            .map(|&i| corr.row(i).iter().map(|z| z.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            .sqrt();
        let scale = linalg::fro_norm(&f.apply_adjoint(y.entries()));
        assert!(on_support <= 1e-10 * scale, "{on_support} vs {scale}");
    }

    #[test]
    fn least_squares_beats_perturbations() {
        let f = build_sensing_matrix(1).unwrap();
        let x0 = crate::model::generate_sparse_sample(257, 4, 10, 55).unwrap();
        let y = crate::model::synthesize_measurements(&f, &x0, Some(15.0), 5).unwrap();
        let sup = x0.support();
        let xh = least_squares_on_support(&f, &y, &sup).unwrap();
        let base = linalg::fro_norm(&(y.entries() - &f.apply(xh.entries())));
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..50 {
            let mut pert = xh.entries().clone();
            let &row = &sup[rng.gen_range(0..sup.len())];
            for j in 0..pert.ncols() {
                let re: f64 = rng.sample(rand_distr::StandardNormal);
                let im: f64 = rng.sample(rand_distr::StandardNormal);
                pert[[row, j]] += c(re, im) * 0.05;
            }
            let r = linalg::fro_norm(&(y.entries() - &f.apply(&pert)));
            assert!(r >= base - 1e-12);
        }
    }

    #[test]
    fn lipschitz_orthonormal_and_scaled_identity() {
        // Orthonormal columns via a unitary DFT-like construction: use QR of
        // a random square matrix.
        let a = gaussian_matrix(6, 6, 1.0, 4);
        let na = linalg::to_na(&a);
        let qr = na.qr();
        let q = linalg::from_na(&qr.q());
        let f = SensingMatrix::from_entries(q);
        let beta = lipschitz_estimate(&f, LIPSCHITZ_DEFAULT_ITERS);
        assert!((beta - 1.0).abs() <= 1e-6, "beta {beta}");

        let two_i = Array2::from_shape_fn((5, 5), |(i, j)| {
            if i == j { c(2.0, 0.0) } else { c(0.0, 0.0) }
        });
        let f2 = SensingMatrix::from_entries(two_i);
        let beta2 = lipschitz_estimate(&f2, LIPSCHITZ_DEFAULT_ITERS);
        assert!((beta2 - 4.0).abs() <= 1e-6, "beta {beta2}");
    }

    #[test]
    fn lipschitz_matches_svd_oracle() {
        for os in [1usize, 2, 4] {
            let f = build_sensing_matrix(os).unwrap();
            let beta = lipschitz_estimate(&f, LIPSCHITZ_DEFAULT_ITERS);
            let svd = linalg::to_na(f.entries()).svd(false, false);
            let sigma2 = svd.singular_values[0] * svd.singular_values[0];
            assert!(
                (beta - sigma2).abs() <= 1e-6 * sigma2,
                "os={os}: beta {beta} vs σ² {sigma2}"
            );
            assert!(beta >= sigma2 * (1.0 - 1e-6));
        }
    }

    #[test]
    fn csv_row_shape() {
        let r = SolverResult {
            estimate: CsiMatrix::zeros(4, 1),
            support: vec![],
            iterations: 3,
            residual_history: vec![1.0, 0.5, 0.25, 0.125],
            converged: true,
            rank_deficient: false,
        };
        assert_eq!(r.csv_row("omp", 10, 1, 0.0), "omp,10,1,3,0.125,0");
        assert_eq!(r.final_residual(), 0.125);
    }
}
