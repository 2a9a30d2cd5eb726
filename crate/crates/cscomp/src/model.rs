//! System model: the partial oversampled-DFT sensing operator and the
//! synthetic data generators.
//!
//! Measurements follow Y = F·X + η where F is M×N with entries
//! (1/√fft_size)·exp(−2πi·f_m·n/(fft_size·os)), X is the row-sparse
//! delay-domain coefficient matrix and η is complex Gaussian noise at a
//! configurable SNR. All generators are pure functions of their inputs and
//! an explicit seed.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};

/// Default FFT size of the underlying OFDM grid.
pub const DEFAULT_FFT_SIZE: usize = 1024;
/// Default number of delay taps spanned by the cyclic prefix.
pub const DEFAULT_MAX_DELAY_TAPS: usize = 256;

/// Every 12th subcarrier of [−312, 311]: the 52 measured pilot positions.
pub fn default_subcarriers() -> Vec<i64> {
    (-312..312).step_by(12).collect()
}

/// Construction parameters of a DFT-grid sensing matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridParams {
    pub os: usize,
    pub fft_size: usize,
    pub max_delay_taps: usize,
    pub subcarriers: Vec<i64>,
}

/// The sensing operator F (M×N complex) with its cached adjoint.
///
/// Matrices built by [`build_sensing_matrix`] carry their [`GridParams`];
/// matrices wrapped from raw entries (e.g. loaded from a CMPX file or random
/// test matrices) do not.
#[derive(Debug, Clone)]
pub struct SensingMatrix {
    entries: CMat,
    adjoint: CMat,
    grid: Option<GridParams>,
}

impl SensingMatrix {
    /// Wrap raw entries as a sensing operator without grid metadata.
    pub fn from_entries(entries: CMat) -> Self {
        let adjoint = linalg::adjoint(&entries);
        Self { entries, adjoint, grid: None }
    }

    /// Number of measurements M (rows).
    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    /// Number of delay-grid points N (columns).
    pub fn n(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    /// The cached conjugate transpose Fᴴ (N×M).
    pub fn adjoint(&self) -> &CMat {
        &self.adjoint
    }

    pub fn grid(&self) -> Option<&GridParams> {
        self.grid.as_ref()
    }

    /// Oversampling factor, if the matrix was built on a DFT grid.
    pub fn os(&self) -> Option<usize> {
        self.grid.as_ref().map(|g| g.os)
    }

    /// F·X for a row-sparse X (gathers only nonzero rows).
    pub fn apply(&self, x: &CMat) -> CMat {
        linalg::apply_rowsparse(&self.entries, x)
    }

    /// Fᴴ·Y.
    pub fn apply_adjoint(&self, y: &CMat) -> CMat {
        linalg::zdot(&self.adjoint, y)
    }
}

/// Delay-domain coefficient matrix X (N×P), row-sparse with common support.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiMatrix {
    entries: CMat,
}

impl CsiMatrix {
    pub fn from_entries(entries: CMat) -> Self {
        Self { entries }
    }

    pub fn zeros(n: usize, p: usize) -> Self {
        Self { entries: Array2::zeros((n, p)) }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn p(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn into_entries(self) -> CMat {
        self.entries
    }

    /// Row indices with at least one nonzero entry, ascending.
    pub fn support(&self) -> Vec<usize> {
        linalg::nonzero_rows(&self.entries)
    }
}

/// Frequency-domain observations Y (M×P).
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementMatrix {
    entries: CMat,
}

impl MeasurementMatrix {
    pub fn from_entries(entries: CMat) -> Self {
        Self { entries }
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn p(&self) -> usize {
        self.entries.ncols()
    }

    pub fn entries(&self) -> &CMat {
        &self.entries
    }

    pub fn into_entries(self) -> CMat {
        self.entries
    }

    /// Frobenius norm ‖Y‖.
    pub fn norm(&self) -> f64 {
        linalg::fro_norm(&self.entries)
    }
}

/// An off-grid channel: continuous delays in (0,1) shared by all P paths,
/// with per-tap complex gains.
#[derive(Debug, Clone, PartialEq)]
pub struct OffGridChannel {
    pub delays: Vec<f64>,
    pub gains: CMat,
    pub snr_db: Option<f64>,
}

impl OffGridChannel {
    /// Noiseless frequency response of this channel on the subcarriers of
    /// `f`: Y_{m,j} = Σ_k gains_{k,j}·(1/√fft)·exp(−2πi·f_m·delays_k·taps/fft).
    ///
    /// Independent of the oversampling factor — the same response is the
    /// shared ground truth for every os.
    pub fn frequency_response(&self, f: &SensingMatrix) -> Result<MeasurementMatrix> {
        let grid = f.grid().ok_or_else(|| {
            Error::Param("frequency_response requires a DFT-grid sensing matrix".into())
        })?;
        let scale = 1.0 / (grid.fft_size as f64).sqrt();
        let p = self.gains.ncols();
        let mut y: CMat = Array2::zeros((grid.subcarriers.len(), p));
        for (m, &fm) in grid.subcarriers.iter().enumerate() {
            for (k, &delay) in self.delays.iter().enumerate() {
                let theta = -2.0 * PI * (fm as f64) * delay * (grid.max_delay_taps as f64)
                    / (grid.fft_size as f64);
                let steer = Complex64::from_polar(scale, theta);
                for j in 0..p {
                    y[[m, j]] += self.gains[[k, j]] * steer;
                }
            }
        }
        Ok(MeasurementMatrix::from_entries(y))
    }
}

/// Build the partial oversampled-DFT sensing matrix with default grid
/// parameters (fft_size 1024, 256 delay taps, 52 pilot subcarriers).
pub fn build_sensing_matrix(os: usize) -> Result<SensingMatrix> {
    build_sensing_matrix_custom(os, DEFAULT_FFT_SIZE, DEFAULT_MAX_DELAY_TAPS, default_subcarriers())
}

/// Build the sensing matrix with explicit grid parameters.
///
/// Entry (m,n) = (1/√fft_size)·exp(−2πi·f_m·n/(fft_size·os)); the delay grid
/// has N = max_delay_taps·os + 1 points.
pub fn build_sensing_matrix_custom(
    os: usize,
    fft_size: usize,
    max_delay_taps: usize,
    subcarriers: Vec<i64>,
) -> Result<SensingMatrix> {
    if os < 1 {
        return Err(Error::Param("oversampling factor must be ≥ 1".into()));
    }
    if fft_size < 1 || max_delay_taps < 1 {
        return Err(Error::Param("fft_size and max_delay_taps must be positive".into()));
    }
    if subcarriers.is_empty() {
        return Err(Error::Param("subcarrier list must be nonempty".into()));
    }
    let half = (fft_size / 2) as i64;
    if let Some(&bad) = subcarriers.iter().find(|&&fm| fm < -half || fm >= half) {
        return Err(Error::Param(format!(
            "subcarrier {bad} outside [-{half}, {half})"
        )));
    }
    let n_cols = max_delay_taps * os + 1;
    let scale = 1.0 / (fft_size as f64).sqrt();
    let denom = (fft_size * os) as f64;
    let mut entries: CMat = Array2::zeros((subcarriers.len(), n_cols));
    for (m, &fm) in subcarriers.iter().enumerate() {
        for n in 0..n_cols {
            let theta = -2.0 * PI * (fm as f64) * (n as f64) / denom;
            entries[[m, n]] = Complex64::from_polar(scale, theta);
        }
    }
    let adjoint = linalg::adjoint(&entries);
    Ok(SensingMatrix {
        entries,
        adjoint,
        grid: Some(GridParams { os, fft_size, max_delay_taps, subcarriers }),
    })
}

/// One standard complex Gaussian draw (variance 1: re and im each N(0, ½)).
fn complex_gaussian(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Generate a row-sparse sample: exactly `s` rows drawn uniformly without
/// replacement are nonzero, entries i.i.d. standard complex Gaussian, all
/// columns sharing the support. Deterministic given `rng_seed`.
pub fn generate_sparse_sample(n: usize, p: usize, s: usize, rng_seed: u64) -> Result<CsiMatrix> {
    if s < 1 || s > n {
        return Err(Error::Param(format!("sparsity s={s} outside [1, n={n}]")));
    }
    if p < 1 {
        return Err(Error::Param("p must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut support = rand::seq::index::sample(&mut rng, n, s).into_vec();
    support.sort_unstable();
    let mut x: CMat = Array2::zeros((n, p));
    for &row in &support {
        for j in 0..p {
            x[[row, j]] = complex_gaussian(&mut rng);
        }
    }
    Ok(CsiMatrix::from_entries(x))
}

/// Add complex Gaussian noise to `clean` so that ‖clean‖²/E‖η‖² = 10^(snr/10).
/// `snr_db = None` leaves the matrix untouched.
fn add_noise(clean: CMat, snr_db: Option<f64>, rng: &mut impl Rng) -> CMat {
    let snr_db = match snr_db {
        None => return clean,
        Some(v) => v,
    };
    let signal_power = linalg::fro_norm_sq(&clean);
    let (m, p) = clean.dim();
    // Per-entry complex noise variance; zero signal degenerates to zero noise.
    let sigma2 = signal_power / (m * p) as f64 / 10f64.powf(snr_db / 10.0);
    let sigma = sigma2.sqrt();
    let mut y = clean;
    for v in y.iter_mut() {
        *v += complex_gaussian(rng) * sigma;
    }
    y
}

/// Y = F·X + η with noise scaled to `snr_db` (None = noiseless).
/// Deterministic given `rng_seed`.
pub fn synthesize_measurements(
    f: &SensingMatrix,
    x: &CsiMatrix,
    snr_db: Option<f64>,
    rng_seed: u64,
) -> Result<MeasurementMatrix> {
    if f.n() != x.n() {
        return Err(Error::Dimension(format!(
            "F has {} columns but X has {} rows",
            f.n(),
            x.n()
        )));
    }
    let clean = f.apply(x.entries());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    Ok(MeasurementMatrix::from_entries(add_noise(clean, snr_db, &mut rng)))
}

/// Draw an off-grid channel: `s` continuous delays uniform in (0,1), sorted
/// strictly increasing; per-tap complex Gaussian gains with an exponential
/// power profile decaying to 1/10 of the first tap at tap `s`; measurements
/// from the continuous frequency response plus noise at `snr_db`.
pub fn generate_offgrid_channel(
    p: usize,
    s: usize,
    f: &SensingMatrix,
    snr_db: Option<f64>,
    rng_seed: u64,
) -> Result<(MeasurementMatrix, OffGridChannel)> {
    if s < 1 || p < 1 {
        return Err(Error::Param("need s ≥ 1 and p ≥ 1".into()));
    }
    if f.grid().is_none() {
        return Err(Error::Param(
            "generate_offgrid_channel requires a DFT-grid sensing matrix".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let delays = loop {
        let mut d: Vec<f64> = (0..s).map(|_| rng.gen::<f64>()).collect();
        d.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if d.windows(2).all(|w| w[0] < w[1]) {
            break d;
        }
    };
    let mut gains: CMat = Array2::zeros((s, p));
    for k in 0..s {
        // Tap powers 10^(−k/(s−1)): tap s−1 carries 1/10 the power of tap 0.
        let power = if s > 1 { 10f64.powf(-(k as f64) / (s as f64 - 1.0)) } else { 1.0 };
        let amp = power.sqrt();
        for j in 0..p {
            gains[[k, j]] = complex_gaussian(&mut rng) * amp;
        }
    }
    let channel = OffGridChannel { delays, gains, snr_db };
    let clean = channel.frequency_response(f)?.into_entries();
    let y = add_noise(clean, snr_db, &mut rng);
    Ok((MeasurementMatrix::from_entries(y), channel))
}

/// Y/‖Y‖ (Frobenius). Zero matrices are rejected.
pub fn normalize_measurements(y: &MeasurementMatrix) -> Result<MeasurementMatrix> {
    let norm = y.norm();
    if norm == 0.0 {
        return Err(Error::DegenerateInput("cannot normalize a zero matrix".into()));
    }
    Ok(MeasurementMatrix::from_entries(y.entries().mapv(|z| z / norm)))
}
