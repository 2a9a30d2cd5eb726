//! L-AMP-MMV: the AMP-MMV iteration unrolled into a trainable network.
//!
//! Layer t (1-indexed) with shared dictionary B (N×M) and per-layer scalars
//! α_t, β_t:
//!
//! ```text
//! λ_t = (α_t/√M)·‖V_{t−1}‖_F
//! X_t = β_t · row_shrink(X_{t−1} + B·V_{t−1}, λ_t)
//! V_t = Y − F·X_t + (β_t/M)·‖X_t‖_{2,0} · V_{t−1}
//! ```
//!
//! with X₀ = 0, V₀ = Y. At initialization (B = Fᴴ, α = β = 1) the network
//! reproduces `amp_mmv` exactly, so the update expressions here mirror the
//! ones in `solvers::amp` operation for operation — keep them in sync.

mod grad;
mod train;

pub use grad::{lamp_backward, LampGradients};
pub use train::{train, training_sample, AdamState, TrainConfig, TrainOutcome};

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::{read_exact, read_f64_le, read_u32_le};
use crate::linalg::{self, CMat};
use crate::model::{CsiMatrix, MeasurementMatrix, SensingMatrix};
use crate::solvers::row_shrink;

const MODEL_MAGIC: &[u8; 4] = b"LMP1";

/// Everything a layer computes, retained for backpropagation.
#[derive(Debug, Clone)]
pub struct LayerState {
    /// X_t (after the β scale).
    pub x: CMat,
    /// V_t.
    pub v: CMat,
    /// Pre-shrinkage input U_t = X_{t−1} + B·V_{t−1}.
    pub u: CMat,
    /// row_shrink(U_t, λ_t), before the β scale.
    pub s: CMat,
    pub lambda: f64,
    /// ‖X_t‖_{2,0}.
    pub row_count: usize,
}

/// Unrolled AMP-MMV network with trainable (α_t, β_t) and shared B.
#[derive(Debug, Clone)]
pub struct LampModel {
    t_layers: usize,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    b: CMat,
    f: SensingMatrix,
    gamma: f64,
}

impl LampModel {
    /// Fresh model: B = Fᴴ, all α_t = β_t = 1. `gamma` is the loss mixing
    /// weight this model is meant to be trained with (kept with the model so
    /// benchmark reports can label its rows).
    pub fn new(f: SensingMatrix, t_layers: usize, gamma: f64) -> Result<Self> {
        if t_layers == 0 {
            return Err(Error::Param("t_layers must be ≥ 1".into()));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Param(format!("gamma={gamma} outside [0, 1]")));
        }
        let b = f.adjoint().clone();
        Ok(Self {
            t_layers,
            alpha: vec![1.0; t_layers],
            beta: vec![1.0; t_layers],
            b,
            f,
            gamma,
        })
    }

    pub fn t_layers(&self) -> usize {
        self.t_layers
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    /// The shared dictionary B (N×M).
    pub fn b(&self) -> &CMat {
        &self.b
    }

    pub fn sensing(&self) -> &SensingMatrix {
        &self.f
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// 2T scalars plus the complex N×M dictionary: 2T + 2NM reals.
    pub fn param_count(&self) -> usize {
        2 * self.t_layers + 2 * self.b.len()
    }

    /// Flatten to `[α_1..α_T, β_1..β_T, B row-major as (re, im) pairs]`.
    pub fn to_params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend_from_slice(&self.alpha);
        p.extend_from_slice(&self.beta);
        for z in self.b.iter() {
            p.push(z.re);
            p.push(z.im);
        }
        p
    }

    /// Inverse of [`to_params`](Self::to_params).
    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Param(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let t = self.t_layers;
        self.alpha.copy_from_slice(&params[..t]);
        self.beta.copy_from_slice(&params[t..2 * t]);
        for (i, z) in self.b.iter_mut().enumerate() {
            z.re = params[2 * t + 2 * i];
            z.im = params[2 * t + 2 * i + 1];
        }
        Ok(())
    }

    /// Run all T layers.
    pub fn forward(&self, y: &MeasurementMatrix) -> Result<(CsiMatrix, Vec<LayerState>)> {
        self.forward_partial(y, self.t_layers)
    }

    /// Run only the first `depth` layers (the per-layer training schedule
    /// grows the unrolled depth one stage at a time).
    pub fn forward_partial(
        &self,
        y: &MeasurementMatrix,
        depth: usize,
    ) -> Result<(CsiMatrix, Vec<LayerState>)> {
        if depth == 0 || depth > self.t_layers {
            return Err(Error::Param(format!(
                "depth {depth} outside [1, {}]",
                self.t_layers
            )));
        }
        if self.f.m() != y.m() {
            return Err(Error::Dimension(format!(
                "model expects {} measurements, Y has {}",
                self.f.m(),
                y.m()
            )));
        }
        let m = self.f.m() as f64;
        let sqrt_m = m.sqrt();
        let mut x: CMat = Array2::zeros((self.f.n(), y.p()));
        let mut v: CMat = y.entries().clone();
        let mut states = Vec::with_capacity(depth);
        for t in 0..depth {
            let lambda = self.alpha[t] / sqrt_m * linalg::fro_norm(&v);
            let u = &x + &linalg::zdot(&self.b, &v);
            let s = row_shrink(&u, lambda);
            let beta = self.beta[t];
            let x_next = s.mapv(|z| z * beta);
            let row_count = linalg::nonzero_row_count(&x_next);
            let onsager = beta * row_count as f64 / m;
            let r = y.entries() - &self.f.apply(&x_next);
            let v_next = &r + &v.mapv(|z| z * onsager);
            states.push(LayerState {
                x: x_next.clone(),
                v: v_next.clone(),
                u,
                s,
                lambda,
                row_count,
            });
            x = x_next;
            v = v_next;
        }
        Ok((CsiMatrix::from_entries(x), states))
    }
}

/// Training objective: (1−γ)‖X − X̂‖²_F + γ‖Y − F·X̂‖²_F.
pub fn loss(
    x_hat: &CsiMatrix,
    x_true: &CsiMatrix,
    y: &MeasurementMatrix,
    f: &SensingMatrix,
    gamma: f64,
) -> f64 {
    let ex = x_true.entries() - x_hat.entries();
    let ey = y.entries() - &f.apply(x_hat.entries());
    (1.0 - gamma) * linalg::fro_norm_sq(&ex) + gamma * linalg::fro_norm_sq(&ey)
}

/// Serialize a model to the LMP1 format: magic `LMP1`, then T, N, M as u32
/// little-endian, γ as f64, the T alphas, the T betas, and B in column-major
/// (re, im) f64 pairs. F itself is not stored; loading revalidates against a
/// caller-supplied sensing matrix.
pub fn save_model(path: impl AsRef<Path>, model: &LampModel) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    w.write_all(&(model.t_layers as u32).to_le_bytes())?;
    w.write_all(&(model.f.n() as u32).to_le_bytes())?;
    w.write_all(&(model.f.m() as u32).to_le_bytes())?;
    w.write_all(&model.gamma.to_le_bytes())?;
    for &a in &model.alpha {
        w.write_all(&a.to_le_bytes())?;
    }
    for &b in &model.beta {
        w.write_all(&b.to_le_bytes())?;
    }
    for j in 0..model.b.ncols() {
        for i in 0..model.b.nrows() {
            let z = model.b[[i, j]];
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Load an LMP1 model, pairing it with `f` (must match the stored N, M).
pub fn load_model(path: impl AsRef<Path>, f: SensingMatrix) -> Result<LampModel> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "LMP1 header")?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Format("bad magic, expected LMP1".into()));
    }
    let t_layers = read_u32_le(&mut r, "LMP1 layer count")? as usize;
    let n = read_u32_le(&mut r, "LMP1 row count")? as usize;
    let m = read_u32_le(&mut r, "LMP1 column count")? as usize;
    if t_layers == 0 {
        return Err(Error::Format("LMP1 layer count must be ≥ 1".into()));
    }
    if f.n() != n || f.m() != m {
        return Err(Error::Dimension(format!(
            "model was trained for a {m}×{n} operator, sensing matrix is {}×{}",
            f.m(),
            f.n()
        )));
    }
    let gamma = read_f64_le(&mut r, "LMP1 gamma")?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Format(format!("stored gamma {gamma} outside [0, 1]")));
    }
    let mut alpha = vec![0.0; t_layers];
    for a in alpha.iter_mut() {
        *a = read_f64_le(&mut r, "LMP1 alpha")?;
    }
    let mut beta = vec![0.0; t_layers];
    for b in beta.iter_mut() {
        *b = read_f64_le(&mut r, "LMP1 beta")?;
    }
    let mut b: CMat = Array2::zeros((n, m));
    for j in 0..m {
        for i in 0..n {
            let re = read_f64_le(&mut r, "LMP1 dictionary")?;
            let im = read_f64_le(&mut r, "LMP1 dictionary")?;
            b[[i, j]] = Complex64::new(re, im);
        }
    }
    let mut tail = [0u8; 1];
    if r.read(&mut tail)? != 0 {
        return Err(Error::Format("trailing bytes after LMP1 payload".into()));
    }
    Ok(LampModel {
        t_layers,
        alpha,
        beta,
        b,
        f,
        gamma,
    })
}
