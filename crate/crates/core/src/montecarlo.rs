//! Monte Carlo study of the estimator on two bivariate two-regime
//! first-order designs.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};

use crate::error::{GstvarError, Result};
use crate::estimation::{fit, permute_regimes, EstimationConfig};
use crate::model::{simulate, ModelOrder, ParameterVector, RegimeParameters, SeriesMatrix, SimulationInit};
use crate::par;
use crate::seeding::derive_seed;

/// Observations simulated and discarded before each sample.
pub const BURN_IN: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StudyModel {
    Model1,
    Model2,
}

impl StudyModel {
    pub fn params(self) -> ParameterVector {
        let (phi1, a1, phi2, a2) = match self {
            Self::Model1 => ([0.0, 1.0], [0.5, -0.3, 0.2, 0.7], [1.5, 2.0], [-0.1, -0.2, 0.3, 0.5]),
            Self::Model2 => ([0.0, 1.0], [0.8, -0.55, 0.4, 0.9], [0.5, 0.5], [-0.99, -0.2, 0.3, 0.9]),
        };
        let regime = |phi: [f64; 2], a: [f64; 4], omega: [f64; 4]| {
            RegimeParameters::new(
                DVector::from_row_slice(&phi),
                vec![DMatrix::from_row_slice(2, 2, &a)],
                DMatrix::from_row_slice(2, 2, &omega),
            )
            .expect("valid design regime")
        };
        let r1 = regime(phi1, a1, [0.5, 0.2, 0.2, 0.3]);
        let r2 = regime(phi2, a2, [0.8, -0.2, -0.2, 0.5]);
        ParameterVector::new(vec![r1, r2], vec![0.7, 0.3]).expect("valid design")
    }

    pub fn from_number(n: u32) -> Result<Self> {
        match n {
            1 => Ok(Self::Model1),
            2 => Ok(Self::Model2),
            _ => Err(GstvarError::InvalidInput(format!("unknown study model {n}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudySpec {
    pub model: StudyModel,
    pub sample_sizes: Vec<usize>,
    pub replications: usize,
    pub rounds_per_fit: usize,
    pub seed: u64,
    /// Settings for each fit; `rounds` and `seed` are overridden per fit.
    pub estimation: EstimationConfig,
}

impl StudySpec {
    pub fn new(model: StudyModel, sample_sizes: Vec<usize>, replications: usize, rounds_per_fit: usize, seed: u64) -> Self {
        let estimation = EstimationConfig { jsr: None, ..EstimationConfig::default() };
        Self { model, sample_sizes, replications, rounds_per_fit, seed, estimation }
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(GstvarError::InvalidInput("at least one replication is required".into()));
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return Err(GstvarError::InvalidInput("sample sizes must be positive".into()));
        }
        if self.rounds_per_fit == 0 {
            return Err(GstvarError::InvalidInput("rounds per fit must be positive".into()));
        }
        Ok(())
    }
}

/// Error summary for one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyCell {
    pub sample_size: usize,
    pub mean_error: Vec<f64>,
    pub std_dev: Vec<f64>,
    pub successes: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub model: StudyModel,
    pub parameter_names: Vec<String>,
    pub truth: Vec<f64>,
    pub cells: Vec<StudyCell>,
}

impl StudyResult {
    /// Rows are parameters; for every sample size a mean and a standard
    /// deviation column; trailing rows carry success and failure counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("parameter,true_value");
        for c in &self.cells {
            let _ = write!(out, ",mean_error_T{0},std_T{0}", c.sample_size);
        }
        out.push('\n');
        for (k, name) in self.parameter_names.iter().enumerate() {
            let _ = write!(out, "{name},{}", self.truth[k]);
            for c in &self.cells {
                let _ = write!(out, ",{},{}", c.mean_error[k], c.std_dev[k]);
            }
            out.push('\n');
        }
        let counts: [(&str, fn(&StudyCell) -> usize); 2] =
            [("successes", |c| c.successes), ("failures", |c| c.failures)];
        for (label, get) in counts {
            out.push_str(label);
            out.push(',');
            for c in &self.cells {
                let _ = write!(out, ",{},", get(c));
            }
            out.push('\n');
        }
        out
    }
}

/// Simulated sample of `size` effective observations (plus `p` initial
/// values) after the burn-in.
pub fn study_sample(params: &ParameterVector, size: usize, seed: u64) -> Result<SeriesMatrix> {
    let full = simulate(params, BURN_IN + size, &SimulationInit::Regime(0), seed)?;
    full.slice_rows(BURN_IN, full.nrows())
}

/// `θ̂ - θ` under the regime labeling that minimizes the squared error.
pub fn aligned_error(estimate: &ParameterVector, truth: &ParameterVector) -> Vec<f64> {
    let m = truth.order().regimes;
    let target = truth.to_theta();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for perm in permutations(m) {
        let theta = permute_regimes(estimate, &perm).to_theta();
        let err: Vec<f64> = theta.iter().zip(&target).map(|(a, b)| a - b).collect();
        let sse: f64 = err.iter().map(|e| e * e).sum();
        if best.as_ref().map_or(true, |(b, _)| sse < *b) {
            best = Some((sse, err));
        }
    }
    best.expect("at least one permutation").1
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n <= 1 {
        return vec![(0..n).collect()];
    }
    let mut out = Vec::new();
    for perm in permutations(n - 1) {
        for pos in 0..=perm.len() {
            let mut p = perm.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

pub fn run_study(spec: &StudySpec) -> Result<StudyResult> {
    run_study_with(spec, |data, order, config| fit(data, order, config).map(|f| f.params))
}

/// Study with an injected estimator, called once per replication.
pub fn run_study_with<F>(spec: &StudySpec, estimator: F) -> Result<StudyResult>
where
    F: Fn(&SeriesMatrix, ModelOrder, &EstimationConfig) -> Result<ParameterVector> + Sync,
{
    spec.validate()?;
    let truth = spec.model.params();
    let order = truth.order();
    let k = order.param_count();
    let mut cells = Vec::with_capacity(spec.sample_sizes.len());
    for (s, &size) in spec.sample_sizes.iter().enumerate() {
        let size_seed = derive_seed(spec.seed, s as u64);
        let errors: Vec<Option<Vec<f64>>> = par::map_range(spec.replications, |rep| {
            let rep_seed = derive_seed(size_seed, rep as u64);
            let data = match study_sample(&truth, size, rep_seed) {
                Ok(d) => d,
                Err(e) => {
                    log::warn!("T={size} replication {rep}: simulation failed: {e}");
                    return None;
                }
            };
            let config = EstimationConfig {
                rounds: spec.rounds_per_fit,
                seed: derive_seed(rep_seed, u64::MAX),
                ..spec.estimation.clone()
            };
            match estimator(&data, order, &config) {
                Ok(est) => Some(aligned_error(&est, &truth)),
                Err(e) => {
                    log::warn!("T={size} replication {rep}: estimation failed: {e}");
                    None
                }
            }
        });
        let ok: Vec<&Vec<f64>> = errors.iter().flatten().collect();
        let n = ok.len();
        let mut mean_error = vec![f64::NAN; k];
        let mut std_dev = vec![f64::NAN; k];
        if n > 0 {
            for j in 0..k {
                let mean = ok.iter().map(|e| e[j]).sum::<f64>() / n as f64;
                let ss: f64 = ok.iter().map(|e| (e[j] - mean).powi(2)).sum();
                mean_error[j] = mean;
                std_dev[j] = if n > 1 { (ss / (n - 1) as f64).sqrt() } else { 0.0 };
            }
        }
        log::info!("T={size}: {n} of {} replications estimated", spec.replications);
        cells.push(StudyCell { sample_size: size, mean_error, std_dev, successes: n, failures: spec.replications - n });
    }
    Ok(StudyResult { model: spec.model, parameter_names: ParameterVector::theta_names(order), truth: truth.to_theta(), cells })
}
