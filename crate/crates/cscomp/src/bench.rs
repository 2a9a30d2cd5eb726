//! Experiment harness: paired solver comparisons over (algorithm, os, s)
//! on a shared off-grid test set, with CSV reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lamp::{load_model, LampModel};
use crate::linalg::{self, CMat};
use crate::model::{build_sensing_matrix, generate_offgrid_channel, MeasurementMatrix, SensingMatrix};
use crate::postprocess::prune_and_refit;
use crate::solvers::{
    amp_mmv, fista, niht, omp_mmv, FistaConfig, SolverResult, NIHT_DEFAULT_C,
    NIHT_DEFAULT_MAX_ITERS, NIHT_DEFAULT_TOL, OMP_DEFAULT_EPS,
};

pub const METRICS_CSV_HEADER: &str =
    "algorithm,os,s,gamma,sample_index,residual,nmse_vs_truth,iterations,wall_time_ms";
pub const SUMMARY_CSV_HEADER: &str = "algorithm,os,s,gamma,samples,mean_residual,\
median_residual,q1_residual,q3_residual,mean_nmse,median_nmse";

/// Solvers the harness can run. The declaration order is the report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Omp,
    Niht,
    Fista,
    AmpMmv,
    Lamp,
}

impl Algorithm {
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Omp => "omp",
            Algorithm::Niht => "niht",
            Algorithm::Fista => "fista",
            Algorithm::AmpMmv => "amp_mmv",
            Algorithm::Lamp => "lamp",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "omp" => Ok(Algorithm::Omp),
            "niht" => Ok(Algorithm::Niht),
            "fista" => Ok(Algorithm::Fista),
            "amp_mmv" => Ok(Algorithm::AmpMmv),
            "lamp" => Ok(Algorithm::Lamp),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?} (expected omp, niht, fista, amp_mmv, or lamp)"
            ))),
        }
    }
}

fn default_gammas() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75]
}

fn default_p() -> usize {
    16
}

fn default_true() -> bool {
    true
}

fn default_amp_iters() -> usize {
    20
}

fn default_amp_alpha() -> f64 {
    1.0
}

/// A benchmark sweep. Duplicate entries in the sweep lists are collapsed;
/// `gamma_values` documents the loss mixes a study covers (the reported γ of
/// a lamp row always comes from the loaded model itself).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub os_values: Vec<usize>,
    pub s_values: Vec<usize>,
    #[serde(default = "default_gammas")]
    pub gamma_values: Vec<f64>,
    pub num_samples: usize,
    #[serde(default = "default_p")]
    pub p: usize,
    /// Measurement SNR of the test set; omit for noiseless.
    #[serde(default)]
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// LMP1 file per oversampling factor (keys are the os values as
    /// strings), required whenever `lamp` is in `algorithms`.
    #[serde(default)]
    pub model_paths: BTreeMap<String, PathBuf>,
    /// Run every estimate through prune_and_refit (default true).
    #[serde(default = "default_true")]
    pub postprocess: bool,
    /// Record wall-clock solve times. Off by default so identical configs
    /// produce byte-identical CSV files.
    #[serde(default)]
    pub measure_time: bool,
    #[serde(default = "default_amp_iters")]
    pub amp_iters: usize,
    #[serde(default = "default_amp_alpha")]
    pub amp_alpha: f64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(Error::Config("algorithms list is empty".into()));
        }
        if self.os_values.is_empty() || self.os_values.iter().any(|&os| os == 0) {
            return Err(Error::Config("os_values must be nonempty, all ≥ 1".into()));
        }
        if self.s_values.is_empty() || self.s_values.iter().any(|&s| s == 0) {
            return Err(Error::Config("s_values must be nonempty, all ≥ 1".into()));
        }
        if self.gamma_values.iter().any(|g| !(0.0..=1.0).contains(g)) {
            return Err(Error::Config("gamma_values must lie in [0, 1]".into()));
        }
        if self.num_samples == 0 {
            return Err(Error::Config("num_samples must be ≥ 1".into()));
        }
        if self.p == 0 {
            return Err(Error::Config("p must be ≥ 1".into()));
        }
        if self.amp_iters == 0 || !(self.amp_alpha > 0.0) {
            return Err(Error::Config("amp_iters must be ≥ 1 and amp_alpha > 0".into()));
        }
        if self.algorithms.contains(&Algorithm::Lamp) {
            for &os in &self.os_values {
                let key = os.to_string();
                let path = self.model_paths.get(&key).ok_or_else(|| {
                    Error::Config(format!("lamp is enabled but model_paths has no entry for os={os}"))
                })?;
                if !path.is_file() {
                    return Err(Error::Config(format!(
                        "model file {} for os={os} does not exist",
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Read a JSON [`ExperimentConfig`].
pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let file = File::open(&path)?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))
}

/// One per-sample measurement of one algorithm in one sweep cell.
#[derive(Debug, Clone)]
pub struct MetricRow {
    pub algorithm: Algorithm,
    pub os: usize,
    pub s: usize,
    /// The trained model's loss mix for lamp rows; None for classical solvers.
    pub gamma: Option<f64>,
    pub sample_index: usize,
    /// ‖Y − F·X̂‖_F on the unit-normalized Y (so directly a relative error).
    pub residual: f64,
    /// ‖F·X̂ − Y_clean‖²_F / ‖Y_clean‖²_F against the noiseless off-grid
    /// response (frequency domain).
    pub nmse_vs_truth: f64,
    pub iterations: usize,
    pub wall_time_ms: f64,
}

impl MetricRow {
    pub fn csv_row(&self) -> String {
        let gamma = self.gamma.map(|g| g.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.algorithm.label(),
            self.os,
            self.s,
            gamma,
            self.sample_index,
            self.residual,
            self.nmse_vs_truth,
            self.iterations,
            self.wall_time_ms
        )
    }

    fn cell_key(&self) -> (Algorithm, usize, usize, u64) {
        let gbits = self.gamma.map(f64::to_bits).unwrap_or(0);
        (self.algorithm, self.os, self.s, gbits)
    }
}

/// Per-cell aggregate of [`MetricRow`]s.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub os: usize,
    pub s: usize,
    pub gamma: Option<f64>,
    pub samples: usize,
    pub mean_residual: f64,
    pub median_residual: f64,
    pub q1_residual: f64,
    pub q3_residual: f64,
    pub mean_nmse: f64,
    pub median_nmse: f64,
}

impl SummaryRow {
    pub fn csv_row(&self) -> String {
        let gamma = self.gamma.map(|g| g.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.algorithm.label(),
            self.os,
            self.s,
            gamma,
            self.samples,
            self.mean_residual,
            self.median_residual,
            self.q1_residual,
            self.q3_residual,
            self.mean_nmse,
            self.median_nmse
        )
    }
}

/// All rows plus per-cell summaries, both in report order.
#[derive(Debug)]
pub struct BenchReport {
    pub rows: Vec<MetricRow>,
    pub summaries: Vec<SummaryRow>,
}

struct TestSample {
    /// Noisy measurements scaled to unit Frobenius norm.
    y: MeasurementMatrix,
    /// Clean off-grid response under the same 1/‖Y_noisy‖ scale.
    truth: CMat,
}

/// Linear-interpolation quantile of an ascending slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn evaluate_sample(
    alg: Algorithm,
    f: &SensingMatrix,
    os: usize,
    model: Option<&LampModel>,
    sample: &TestSample,
    s: usize,
    cfg: &ExperimentConfig,
    sample_index: usize,
) -> Result<MetricRow> {
    let started = Instant::now();
    let (solved, gamma) = match alg {
        Algorithm::Omp => (omp_mmv(f, &sample.y, s, OMP_DEFAULT_EPS)?, None),
        Algorithm::Niht => (
            niht(f, &sample.y, s, NIHT_DEFAULT_C, NIHT_DEFAULT_MAX_ITERS, NIHT_DEFAULT_TOL)?,
            None,
        ),
        Algorithm::Fista => (fista(f, &sample.y, &FistaConfig::default())?, None),
        Algorithm::AmpMmv => (amp_mmv(f, &sample.y, cfg.amp_alpha, cfg.amp_iters)?, None),
        Algorithm::Lamp => {
            let model = model.expect("validated: lamp model present for this os");
            let (x, states) = model.forward(&sample.y)?;
            let residual = linalg::fro_norm(&(sample.y.entries() - &f.apply(x.entries())));
            let support = linalg::nonzero_rows(x.entries());
            let result = SolverResult {
                estimate: x,
                support,
                iterations: states.len(),
                residual_history: vec![residual],
                converged: residual.is_finite(),
                rank_deficient: false,
            };
            (result, Some(model.gamma()))
        }
    };
    let wall_time_ms = if cfg.measure_time {
        started.elapsed().as_secs_f64() * 1e3
    } else {
        0.0
    };
    let (estimate, residual) = if cfg.postprocess {
        let refit = prune_and_refit(&solved.estimate, f, &sample.y, s)?;
        let residual = refit.final_residual();
        (refit.estimate, residual)
    } else {
        let residual = solved.final_residual();
        (solved.estimate, residual)
    };
    let projected = f.apply(estimate.entries());
    let nmse_vs_truth = linalg::fro_norm_sq(&(&projected - &sample.truth))
        / linalg::fro_norm_sq(&sample.truth);
    Ok(MetricRow {
        algorithm: alg,
        os,
        s,
        gamma,
        sample_index,
        residual,
        nmse_vs_truth,
        iterations: solved.iterations,
        wall_time_ms,
    })
}

/// Run the full sweep. One off-grid test set is drawn per sparsity level
/// from the config seed and shared, paired, across every algorithm and
/// oversampling factor (the continuous-delay response does not depend on
/// the grid, so the same Y is simply solved against each os-specific F).
/// Rows come out ordered by (algorithm, os, s, gamma, sample_index) no
/// matter how the parallel evaluation is scheduled.
pub fn run_benchmark(config: &ExperimentConfig) -> Result<BenchReport> {
    config.validate()?;
    let algorithms: BTreeSet<Algorithm> = config.algorithms.iter().copied().collect();
    let os_values: BTreeSet<usize> = config.os_values.iter().copied().collect();
    let s_values: BTreeSet<usize> = config.s_values.iter().copied().collect();

    let mut matrices: BTreeMap<usize, SensingMatrix> = BTreeMap::new();
    for &os in &os_values {
        matrices.insert(os, build_sensing_matrix(os)?);
    }
    let mut models: BTreeMap<usize, LampModel> = BTreeMap::new();
    if algorithms.contains(&Algorithm::Lamp) {
        for &os in &os_values {
            let path = &config.model_paths[&os.to_string()];
            models.insert(os, load_model(path, matrices[&os].clone())?);
        }
    }

    let grid_f = matrices.values().next().expect("validated: at least one os");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut test_sets: BTreeMap<usize, Vec<TestSample>> = BTreeMap::new();
    for &s in &s_values {
        let mut samples = Vec::with_capacity(config.num_samples);
        for _ in 0..config.num_samples {
            let channel_seed = rng.gen::<u64>();
            let (y_noisy, channel) =
                generate_offgrid_channel(config.p, s, grid_f, config.snr_db, channel_seed)?;
            let clean = channel.frequency_response(grid_f)?;
            let norm = y_noisy.norm();
            if norm == 0.0 {
                return Err(Error::DegenerateInput("drew a zero test sample".into()));
            }
            samples.push(TestSample {
                y: MeasurementMatrix::from_entries(y_noisy.entries().mapv(|z| z / norm)),
                truth: clean.entries().mapv(|z| z / norm),
            });
        }
        test_sets.insert(s, samples);
    }

    let mut rows: Vec<MetricRow> = Vec::new();
    for &alg in &algorithms {
        for (&os, f) in &matrices {
            let model = models.get(&os);
            for &s in &s_values {
                let samples = &test_sets[&s];
                let cell: Result<Vec<MetricRow>> = samples
                    .par_iter()
                    .enumerate()
                    .map(|(i, sample)| evaluate_sample(alg, f, os, model, sample, s, config, i))
                    .collect();
                rows.extend(cell?);
            }
        }
    }
    rows.sort_by(|a, b| {
        a.cell_key()
            .cmp(&b.cell_key())
            .then(a.sample_index.cmp(&b.sample_index))
    });

    let mut summaries = Vec::new();
    let mut start = 0;
    while start < rows.len() {
        let key = rows[start].cell_key();
        let mut end = start + 1;
        while end < rows.len() && rows[end].cell_key() == key {
            end += 1;
        }
        let cell = &rows[start..end];
        let mut residuals: Vec<f64> = cell.iter().map(|r| r.residual).collect();
        let mut nmses: Vec<f64> = cell.iter().map(|r| r.nmse_vs_truth).collect();
        residuals.sort_by(f64::total_cmp);
        nmses.sort_by(f64::total_cmp);
        let n = cell.len() as f64;
        summaries.push(SummaryRow {
            algorithm: cell[0].algorithm,
            os: cell[0].os,
            s: cell[0].s,
            gamma: cell[0].gamma,
            samples: cell.len(),
            mean_residual: cell.iter().map(|r| r.residual).sum::<f64>() / n,
            median_residual: quantile(&residuals, 0.5),
            q1_residual: quantile(&residuals, 0.25),
            q3_residual: quantile(&residuals, 0.75),
            mean_nmse: cell.iter().map(|r| r.nmse_vs_truth).sum::<f64>() / n,
            median_nmse: quantile(&nmses, 0.5),
        });
        start = end;
    }

    Ok(BenchReport { rows, summaries })
}

/// Write per-sample rows as CSV (header included).
pub fn write_metrics_csv(path: impl AsRef<Path>, rows: &[MetricRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{METRICS_CSV_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Write per-cell summaries as CSV (header included).
pub fn write_summary_csv(path: impl AsRef<Path>, rows: &[SummaryRow]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{SUMMARY_CSV_HEADER}")?;
    for row in rows {
        writeln!(w, "{}", row.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lamp::{save_model, LampModel};

    fn tmp(name: &str) -> PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("cscomp-bench-{}-{}", std::process::id(), name));
        p
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            algorithms: vec![Algorithm::Omp],
            os_values: vec![1],
            s_values: vec![3],
            gamma_values: default_gammas(),
            num_samples: 3,
            p: 2,
            snr_db: Some(20.0),
            seed: 42,
            model_paths: BTreeMap::new(),
            postprocess: true,
            measure_time: false,
            amp_iters: 20,
            amp_alpha: 1.0,
        }
    }

    #[test]
    fn counting_contract() {
        let report = run_benchmark(&small_config()).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.summaries.len(), 1);
        assert!(report.rows.iter().all(|r| r.residual >= 0.0));
        assert!(report.rows.iter().all(|r| r.wall_time_ms == 0.0));
        assert_eq!(report.summaries[0].samples, 3);
    }

    #[test]
    fn identical_configs_give_identical_bytes() {
        let cfg = small_config();
        let paths = [tmp("det-a.csv"), tmp("det-b.csv")];
        for p in &paths {
            let report = run_benchmark(&cfg).unwrap();
            write_metrics_csv(p, &report.rows).unwrap();
        }
        let a = std::fs::read(&paths[0]).unwrap();
        let b = std::fs::read(&paths[1]).unwrap();
        assert_eq!(a, b);
        for p in &paths {
            std::fs::remove_file(p).ok();
        }
    }

    #[test]
    fn summary_mean_matches_rows() {
        let mut cfg = small_config();
        cfg.algorithms = vec![Algorithm::Omp, Algorithm::Fista];
        let report = run_benchmark(&cfg).unwrap();
        for summary in &report.summaries {
            let cell: Vec<&MetricRow> = report
                .rows
                .iter()
                .filter(|r| {
                    r.algorithm == summary.algorithm && r.os == summary.os && r.s == summary.s
                })
                .collect();
            let mean = cell.iter().map(|r| r.residual).sum::<f64>() / cell.len() as f64;
            assert!((mean - summary.mean_residual).abs() <= 1e-12);
        }
    }

    #[test]
    fn rows_are_sorted_regardless_of_config_order() {
        let mut cfg = small_config();
        cfg.algorithms = vec![Algorithm::Fista, Algorithm::Omp];
        cfg.num_samples = 2;
        let report = run_benchmark(&cfg).unwrap();
        let labels: Vec<&str> = report.rows.iter().map(|r| r.algorithm.label()).collect();
        assert_eq!(labels, ["omp", "omp", "fista", "fista"]);
        assert_eq!(report.rows[0].sample_index, 0);
        assert_eq!(report.rows[1].sample_index, 1);
    }

    #[test]
    fn shared_test_set_is_paired_across_algorithms() {
        let mut cfg = small_config();
        cfg.algorithms = vec![Algorithm::Omp];
        let only_omp = run_benchmark(&cfg).unwrap();
        cfg.algorithms = vec![Algorithm::Omp, Algorithm::Niht];
        let both = run_benchmark(&cfg).unwrap();
        for i in 0..3 {
            assert_eq!(only_omp.rows[i].residual, both.rows[i].residual);
        }
    }

    #[test]
    fn lamp_rows_carry_model_gamma() {
        let f = build_sensing_matrix(1).unwrap();
        let model = LampModel::new(f, 2, 0.25).unwrap();
        let path = tmp("gamma-model.lmp");
        save_model(&path, &model).unwrap();
        let mut cfg = small_config();
        cfg.algorithms = vec![Algorithm::Lamp];
        cfg.num_samples = 2;
        cfg.model_paths.insert("1".into(), path.clone());
        let report = run_benchmark(&cfg).unwrap();
        assert!(report.rows.iter().all(|r| r.gamma == Some(0.25)));
        let row = report.rows[0].csv_row();
        assert!(row.starts_with("lamp,1,3,0.25,0,"), "unexpected row {row}");
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn lamp_without_model_is_rejected_before_compute() {
        let mut cfg = small_config();
        cfg.algorithms = vec![Algorithm::Lamp];
        assert!(matches!(run_benchmark(&cfg), Err(Error::Config(_))));
        cfg.model_paths.insert("1".into(), tmp("missing-model.lmp"));
        assert!(matches!(run_benchmark(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn config_json_round_trips() {
        let cfg = small_config();
        let path = tmp("config.json");
        std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        let loaded = load_config(&path).unwrap();
        assert_eq!(loaded.algorithms, cfg.algorithms);
        assert_eq!(loaded.snr_db, cfg.snr_db);
        assert_eq!(loaded.num_samples, cfg.num_samples);
        std::fs::remove_file(&path).ok();

        let minimal = r#"{"algorithms":["omp","amp_mmv"],"os_values":[1],"s_values":[3],"num_samples":2}"#;
        std::fs::write(&path, minimal).unwrap();
        let loaded = load_config(&path).unwrap();
        assert_eq!(loaded.algorithms, vec![Algorithm::Omp, Algorithm::AmpMmv]);
        assert_eq!(loaded.p, 16);
        assert!(loaded.postprocess);
        assert_eq!(loaded.snr_db, None);
        assert_eq!(loaded.gamma_values, default_gammas());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn header_matches_row_field_count() {
        assert_eq!(METRICS_CSV_HEADER.split(',').count(), 9);
        let row = MetricRow {
            algorithm: Algorithm::Omp,
            os: 1,
            s: 3,
            gamma: None,
            sample_index: 0,
            residual: 0.5,
            nmse_vs_truth: 0.25,
            iterations: 3,
            wall_time_ms: 0.0,
        };
        assert_eq!(row.csv_row().split(',').count(), 9);
        assert_eq!(row.csv_row(), "omp,1,3,,0,0.5,0.25,3,0");
        assert_eq!(SUMMARY_CSV_HEADER.split(',').count(), 11);
    }

    #[test]
    fn validation_catches_bad_configs() {
        let base = small_config();
        let mut c = base.clone();
        c.algorithms.clear();
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.os_values = vec![0];
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.num_samples = 0;
        assert!(c.validate().is_err());
        let mut c = base;
        c.gamma_values = vec![2.0];
        assert!(c.validate().is_err());
    }
}
