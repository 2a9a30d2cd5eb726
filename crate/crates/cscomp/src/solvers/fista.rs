//! FISTA for the Eq. (6) relaxation, with geometric λ continuation and
//! gradient-mapping adaptive restart (Alg. 3).

use super::{lipschitz_estimate, row_shrink, SolverResult, LIPSCHITZ_DEFAULT_ITERS};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{CsiMatrix, MeasurementMatrix, SensingMatrix};
use ndarray::{Array2, Zip};

/// Continuation and iteration controls for [`fista`].
#[derive(Debug, Clone, PartialEq)]
pub struct FistaConfig {
    /// λ starts at this fraction of max_i ‖(FᴴY)_{i,:}‖.
    pub lambda_start_factor: f64,
    /// Geometric decay applied to λ after each inner stage.
    pub lambda_decay: f64,
    /// Continuation stops once λ ≤ lambda_min_factor·λ_start.
    pub lambda_min_factor: f64,
    /// Iterations per continuation stage.
    pub inner_iters: usize,
    /// Global iteration cap across all stages.
    pub max_iters: usize,
    /// Relative iterate-change tolerance ending a stage early.
    pub tol: f64,
    pub restart_enabled: bool,
}

impl Default for FistaConfig {
    fn default() -> Self {
        Self {
            lambda_start_factor: 0.9,
            lambda_decay: 0.7,
            lambda_min_factor: 1e-3,
            inner_iters: 50,
            max_iters: 1000,
            tol: 1e-8,
            restart_enabled: true,
        }
    }
}

impl FistaConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| v > 0.0 && v < 1.0;
        if !in_unit(self.lambda_start_factor) {
            return Err(Error::Param("lambda_start_factor must lie in (0,1)".into()));
        }
        if !in_unit(self.lambda_decay) {
            return Err(Error::Param("lambda_decay must lie in (0,1)".into()));
        }
        if self.lambda_min_factor <= 0.0 || self.lambda_min_factor >= 1.0 {
            return Err(Error::Param("lambda_min_factor must lie in (0,1)".into()));
        }
        if self.inner_iters < 1 || self.max_iters < 1 {
            return Err(Error::Param("inner_iters and max_iters must be ≥ 1".into()));
        }
        if self.tol < 0.0 {
            return Err(Error::Param("tol must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Diagnostic trace of a FISTA run.
#[derive(Debug, Clone, Default)]
pub struct FistaTrace {
    /// (stage index, Eq. (6) objective at the restart point) per restart.
    pub restart_events: Vec<(usize, f64)>,
    /// λ of each continuation stage actually entered.
    pub stage_lambdas: Vec<f64>,
}

fn eq6_objective(residual_norm: f64, x: &CMat, lambda: f64) -> f64 {
    let l21: f64 = linalg::row_norms(x).iter().sum();
    0.5 * residual_norm * residual_norm + lambda * l21
}

fn engine(
    f: &SensingMatrix,
    y: &MeasurementMatrix,
    lambdas: &[f64],
    inner_iters: usize,
    max_iters: usize,
    tol: f64,
    restart_enabled: bool,
    mut trace: Option<&mut FistaTrace>,
) -> Result<SolverResult> {
    let beta = lipschitz_estimate(f, LIPSCHITZ_DEFAULT_ITERS);
    if beta <= 0.0 || !beta.is_finite() {
        return Err(Error::Solver("sensing operator has zero or non-finite norm".into()));
    }
    let inv_beta = 1.0 / beta;
    let (n, p) = (f.n(), y.p());
    let mut x: CMat = Array2::zeros((n, p));
    let mut fx: CMat = Array2::zeros((f.m(), p));
    let mut history = vec![linalg::fro_norm(y.entries())];
    let mut total = 0usize;
    let mut hit_cap = false;

    'stages: for (stage, &lam) in lambdas.iter().enumerate() {
        if let Some(tr) = trace.as_deref_mut() {
            tr.stage_lambdas.push(lam);
        }
        let mut z = x.clone();
        let mut fz = fx.clone();
        let mut t = 1.0_f64;
        for _ in 0..inner_iters {
            if total >= max_iters {
                hit_cap = true;
                break 'stages;
            }
            let grad = f.apply_adjoint(&(&fz - y.entries()));
            let w = Zip::from(&z).and(&grad).map_collect(|&zv, &g| zv - g * inv_beta);
            let x_next = row_shrink(&w, lam / beta);
            let fx_next = f.apply(&x_next);
            total += 1;
            let r = linalg::fro_norm(&(y.entries() - &fx_next));
            history.push(r);
            if !r.is_finite() {
                return Err(Error::Solver(format!(
                    "FISTA produced a non-finite residual at iteration {total}"
                )));
            }
            // One pass over (Z, X₊, X): the restart statistic
            // Re⟨Z−X₊, X₊−X⟩ plus the step and anchor norms for the tol test.
            let (mut ip, mut nd, mut nb) = (0.0_f64, 0.0_f64, 0.0_f64);
            Zip::from(&z).and(&x_next).and(&x).for_each(|&zv, &xn, &xo| {
                let dz = zv - xn;
                let dx = xn - xo;
                ip += dz.re * dx.re + dz.im * dx.im;
                nd += dx.re * dx.re + dx.im * dx.im;
                nb += xo.re * xo.re + xo.im * xo.im;
            });
            // Gradient-mapping restart: momentum no longer descent-correlated.
            if restart_enabled && ip > 0.0 {
                t = 1.0;
                z = x_next.clone();
                fz = fx_next.clone();
                if let Some(tr) = trace.as_deref_mut() {
                    tr.restart_events.push((stage, eq6_objective(r, &x_next, lam)));
                }
            } else {
                let t_next = (1.0 + (4.0 * t * t + 1.0).sqrt()) / 2.0;
                let alpha = (t - 1.0) / t_next;
                z = Zip::from(&x_next)
                    .and(&x)
                    .map_collect(|&xn, &xo| xn + (xn - xo) * alpha);
                fz = &fx_next + &(&fx_next - &fx).mapv(|v| v * alpha);
                t = t_next;
            }
            x = x_next;
            fx = fx_next;
            if nd.sqrt() <= tol * nb.sqrt() {
                break;
            }
        }
    }

    let support = linalg::nonzero_rows(&x);
    Ok(SolverResult {
        estimate: CsiMatrix::from_entries(x),
        support,
        iterations: history.len() - 1,
        residual_history: history,
        converged: !hit_cap,
        rank_deficient: false,
    })
}

fn continuation_schedule(f: &SensingMatrix, y: &MeasurementMatrix, cfg: &FistaConfig) -> Vec<f64> {
    let g0 = f.apply_adjoint(y.entries());
    let lam_start = cfg.lambda_start_factor
        * linalg::row_norms(&g0).into_iter().fold(0.0_f64, f64::max);
    let mut lambdas = Vec::new();
    let mut lam = lam_start;
    loop {
        lambdas.push(lam);
        if lam <= cfg.lambda_min_factor * lam_start {
            break;
        }
        lam *= cfg.lambda_decay;
    }
    lambdas
}

/// Solve Eq. (6) with geometric continuation per `cfg`.
pub fn fista(f: &SensingMatrix, y: &MeasurementMatrix, cfg: &FistaConfig) -> Result<SolverResult> {
    fista_with_trace(f, y, cfg).map(|(r, _)| r)
}

/// [`fista`] returning the restart/stage trace as well.
pub fn fista_with_trace(
    f: &SensingMatrix,
    y: &MeasurementMatrix,
    cfg: &FistaConfig,
) -> Result<(SolverResult, FistaTrace)> {
    cfg.validate()?;
    if f.m() != y.m() {
        return Err(Error::Dimension(format!(
            "F has {} rows but Y has {}",
            f.m(),
            y.m()
        )));
    }
    let lambdas = continuation_schedule(f, y, cfg);
    let mut trace = FistaTrace::default();
    let result = engine(
        f,
        y,
        &lambdas,
        cfg.inner_iters,
        cfg.max_iters,
        cfg.tol,
        cfg.restart_enabled,
        Some(&mut trace),
    )?;
    Ok((result, trace))
}

/// FISTA at one fixed λ (no continuation).
pub fn fista_fixed_lambda(
    f: &SensingMatrix,
    y: &MeasurementMatrix,
    lambda: f64,
    max_iters: usize,
    tol: f64,
    restart_enabled: bool,
) -> Result<SolverResult> {
    if lambda < 0.0 {
        return Err(Error::Param("lambda must be nonnegative".into()));
    }
    if max_iters < 1 {
        return Err(Error::Param("max_iters must be ≥ 1".into()));
    }
    if f.m() != y.m() {
        return Err(Error::Dimension(format!(
            "F has {} rows but Y has {}",
            f.m(),
            y.m()
        )));
    }
    engine(f, y, &[lambda], max_iters, max_iters, tol, restart_enabled, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{from_na, fro_norm, row_norms, to_na};
    use crate::model::{
        build_sensing_matrix, generate_offgrid_channel, generate_sparse_sample,
        normalize_measurements, synthesize_measurements,
    };
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
    fn large_fixed_lambda_returns_zero() {
        let f = build_sensing_matrix(1).unwrap();
        let x0 = generate_sparse_sample(257, 4, 10, 1).unwrap();
        let y = synthesize_measurements(&f, &x0, None, 0).unwrap();
        let lam_max = row_norms(&f.apply_adjoint(y.entries()))
            .into_iter()
            .fold(0.0_f64, f64::max);
        let r = fista_fixed_lambda(&f, &y, lam_max * 1.01, 50, 1e-10, true).unwrap();
        assert!(r.support.is_empty());
        assert_eq!(fro_norm(r.estimate.entries()), 0.0);
    }

    #[test]
    fn single_iteration_is_prox_gradient_step() {
        let f = gaussian_f(8, 20, 3);
        let x0 = generate_sparse_sample(20, 2, 3, 4).unwrap();
        let y = MeasurementMatrix::from_entries(f.apply(x0.entries()));
        let beta = lipschitz_estimate(&f, LIPSCHITZ_DEFAULT_ITERS);
        let lam = 0.05;
        let r = fista_fixed_lambda(&f, &y, lam, 1, 0.0, true).unwrap();
        let expected = row_shrink(
            &f.apply_adjoint(y.entries()).mapv(|g| g / beta),
            lam / beta,
        );
        let diff = r.estimate.entries() - &expected;
        assert!(fro_norm(&diff) <= 1e-12);
    }

    #[test]
    fn orthonormal_fixed_point_is_shrunk_correlation() {
        let a = gaussian_f(12, 6, 9);
        let q = from_na(&to_na(a.entries()).qr().q());
        let f = SensingMatrix::from_entries(q);
        let x0 = generate_sparse_sample(6, 1, 2, 10).unwrap();
        let y = MeasurementMatrix::from_entries(f.apply(x0.entries()));
        let lam = 0.1;
        let r = fista_fixed_lambda(&f, &y, lam, 200, 1e-8, true).unwrap();
        let expected = row_shrink(&f.apply_adjoint(y.entries()), lam);
        let diff = r.estimate.entries() - &expected;
        assert!(fro_norm(&diff) <= 1e-8, "distance {} to prox fixed point", fro_norm(&diff));
    }

    #[test]
    fn final_objective_not_above_zero_objective() {
        let f = build_sensing_matrix(2).unwrap();
        let (y_raw, _) = generate_offgrid_channel(8, 6, &f, Some(25.0), 17).unwrap();
        let y = normalize_measurements(&y_raw).unwrap();
        let cfg = FistaConfig::default();
        let (r, trace) = fista_with_trace(&f, &y, &cfg).unwrap();
        let lam_final = *trace.stage_lambdas.last().unwrap();
        let obj_final = eq6_objective(r.final_residual(), r.estimate.entries(), lam_final);
        let obj_zero = eq6_objective(fro_norm(y.entries()), &Array2::zeros((f.n(), y.p())), lam_final);
        assert!(obj_final <= obj_zero, "{obj_final} vs {obj_zero}");
        assert_eq!(r.iterations, r.residual_history.len() - 1);
    }

    #[test]
    fn restart_objectives_decrease_within_stage() {
        let f = build_sensing_matrix(2).unwrap();
        let mut seen_multi = false;
        for seed in 0..4u64 {
            let (y_raw, _) = generate_offgrid_channel(16, 10, &f, None, seed).unwrap();
            let y = normalize_measurements(&y_raw).unwrap();
            let (_, trace) = fista_with_trace(&f, &y, &FistaConfig::default()).unwrap();
            for pair in trace.restart_events.windows(2) {
                let ((s0, o0), (s1, o1)) = (pair[0], pair[1]);
                if s0 == s1 {
                    seen_multi = true;
                    assert!(o1 < o0 * (1.0 + 1e-10), "objective rose across restarts: {o0} -> {o1}");
                }
            }
        }
        assert!(seen_multi, "no stage produced two restart events");
    }

    #[test]
    fn continuation_schedule_spans_decades() {
        let f = build_sensing_matrix(1).unwrap();
        let x0 = generate_sparse_sample(257, 4, 10, 2).unwrap();
        let y = synthesize_measurements(&f, &x0, Some(20.0), 3).unwrap();
        let cfg = FistaConfig::default();
        let lambdas = continuation_schedule(&f, &y, &cfg);
        assert!(lambdas.len() >= 2);
        let first = lambdas[0];
        let last = *lambdas.last().unwrap();
        assert!(last <= cfg.lambda_min_factor * first);
        assert!(lambdas[lambdas.len() - 2] > cfg.lambda_min_factor * first);
        for w in lambdas.windows(2) {
            assert!((w[1] - w[0] * cfg.lambda_decay).abs() <= 1e-15 * w[0]);
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = FistaConfig::default();
        cfg.lambda_decay = 1.0;
        assert!(cfg.validate().is_err());
        cfg = FistaConfig::default();
        cfg.inner_iters = 0;
        assert!(cfg.validate().is_err());
        cfg = FistaConfig::default();
        cfg.lambda_start_factor = 0.0;
        assert!(cfg.validate().is_err());
        assert!(FistaConfig::default().validate().is_ok());
    }
}
