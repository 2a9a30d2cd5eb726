//! Analytic backpropagation through the unrolled L-AMP-MMV network.
//!
//! Gradients with respect to complex quantities are packed as
//! G = ∂L/∂Re + i·∂L/∂Im, so that dL = Re⟨G, dZ⟩ with the Frobenius inner
//! product. Under this convention W = A·Z pulls back as G_Z = Aᴴ·G_W, a real
//! scale W = a·Z as g_a = Re⟨G_W, Z⟩, and the dictionary product U = B·V as
//! G_B = G_U·Vᴴ.
//!
//! row_shrink rows are differentiated only where strictly active
//! (‖u_i‖ > λ); at the kink the subgradient from the zero side (0) is used.
//! The Onsager row count ‖X_t‖_{2,0} is piecewise constant and treated as a
//! constant.

use ndarray::Array2;

use super::{LampModel, LayerState};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::model::{CsiMatrix, MeasurementMatrix};

/// Gradient of the training loss with respect to every model parameter.
/// `alpha`/`beta` are full length T even when backpropagating a partial
/// forward pass (deeper layers get zeros); `b` is packed as
/// ∂L/∂Re(B) + i·∂L/∂Im(B).
#[derive(Debug, Clone)]
pub struct LampGradients {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub b: CMat,
}

impl LampGradients {
    /// Flatten in the same layout as [`LampModel::to_params`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.alpha.len() + 2 * self.b.len());
        out.extend_from_slice(&self.alpha);
        out.extend_from_slice(&self.beta);
        for z in self.b.iter() {
            out.push(z.re);
            out.push(z.im);
        }
        out
    }
}

/// Backward through `s = row_shrink(u, λ)` given the gradient at s.
/// Returns (G_u, g_λ). Active rows (n = ‖u_i‖ > λ):
/// G_{u,i} = (1 − λ/n)·G_{s,i} + h·(λ/n³)·u_i with h = Re⟨G_{s,i}, u_i⟩,
/// and g_λ accumulates −h/n. Inactive rows contribute nothing.
fn shrink_backward(gs: &CMat, u: &CMat, lambda: f64) -> (CMat, f64) {
    let mut gu: CMat = Array2::zeros(gs.raw_dim());
    let mut glambda = 0.0;
    for i in 0..u.nrows() {
        let urow = u.row(i);
        let n = urow.iter().map(|&z| linalg::abs2(z)).sum::<f64>().sqrt();
        if n > lambda {
            let gsrow = gs.row(i);
            let h: f64 = gsrow
                .iter()
                .zip(urow.iter())
                .map(|(a, b)| a.re * b.re + a.im * b.im)
                .sum();
            let gain = 1.0 - lambda / n;
            let coef = h * lambda / (n * n * n);
            let mut gurow = gu.row_mut(i);
            for j in 0..gurow.len() {
                gurow[j] = gsrow[j] * gain + urow[j] * coef;
            }
            glambda -= h / n;
        }
    }
    (gu, glambda)
}

/// Backpropagate the loss (1−γ)‖X_true − X_T‖²_F + γ‖Y − F·X_T‖²_F through
/// the layers recorded in `states` (a full or partial forward pass of
/// `model` on `y`). Returns the loss value and the parameter gradients.
pub fn lamp_backward(
    model: &LampModel,
    y: &MeasurementMatrix,
    x_true: &CsiMatrix,
    states: &[LayerState],
) -> Result<(f64, LampGradients)> {
    let depth = states.len();
    if depth == 0 || depth > model.t_layers {
        return Err(Error::Param(format!(
            "got {depth} layer states for a {}-layer model",
            model.t_layers
        )));
    }
    if y.m() != model.f.m() || x_true.n() != model.f.n() || x_true.p() != y.p() {
        return Err(Error::Dimension(
            "shapes of Y, X_true, and the model's sensing matrix disagree".into(),
        ));
    }
    let gamma = model.gamma;
    let m = model.f.m() as f64;
    let sqrt_m = m.sqrt();

    let x_t = &states[depth - 1].x;
    let rx = x_t - x_true.entries();
    let ry = y.entries() - &model.f.apply(x_t);
    let loss_val = (1.0 - gamma) * linalg::fro_norm_sq(&rx) + gamma * linalg::fro_norm_sq(&ry);

    // Seed: G_{X_T} = 2(1−γ)(X_T − X_true) − 2γ·Fᴴ(Y − F·X_T).
    let mut gx: CMat = rx.mapv(|z| z * (2.0 * (1.0 - gamma)))
        - model.f.apply_adjoint(&ry).mapv(|z| z * (2.0 * gamma));
    let mut gv: CMat = Array2::zeros((model.f.m(), y.p()));

    let mut galpha = vec![0.0; model.t_layers];
    let mut gbeta = vec![0.0; model.t_layers];
    let mut gb: CMat = Array2::zeros(model.b.raw_dim());
    let b_adj = linalg::adjoint(&model.b);

    for t in (0..depth).rev() {
        let st = &states[t];
        let v_in: &CMat = if t == 0 { y.entries() } else { &states[t - 1].v };
        let alpha = model.alpha[t];
        let beta = model.beta[t];

        // V_t = Y − F·X_t + c·V_{t−1} with c = β_t·‖X_t‖_{2,0}/M.
        let c = beta * st.row_count as f64 / m;
        gbeta[t] += (st.row_count as f64 / m) * linalg::re_inner(&gv, v_in);
        let mut gv_in = gv.mapv(|z| z * c);
        let gx_total = &gx - &model.f.apply_adjoint(&gv);

        // X_t = β_t·S_t.
        gbeta[t] += linalg::re_inner(&gx_total, &st.s);
        let gs = gx_total.mapv(|z| z * beta);

        // S_t = row_shrink(U_t, λ_t).
        let (gu, glambda) = shrink_backward(&gs, &st.u, st.lambda);

        // λ_t = (α_t/√M)·‖V_{t−1}‖_F.
        let vnorm = linalg::fro_norm(v_in);
        galpha[t] += glambda * vnorm / sqrt_m;
        if vnorm > 0.0 {
            let scale = glambda * alpha / sqrt_m / vnorm;
            gv_in.zip_mut_with(v_in, |g, &v| *g += v * scale);
        }

        // U_t = X_{t−1} + B·V_{t−1}.
        gb += &linalg::zdot(&gu, &linalg::adjoint(v_in));
        gv_in += &linalg::zdot(&b_adj, &gu);

        gx = gu;
        gv = gv_in;
    }

    Ok((
        loss_val,
        LampGradients {
            alpha: galpha,
            beta: gbeta,
            b: gb,
        },
    ))
}
