//! Recursive (lower-Cholesky) identification, structural shocks, Monte Carlo
//! generalized impulse responses and forecast error variance decompositions.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{GstvarError, Result};
use crate::linalg;
use crate::model::{log_likelihood_trace, History, ParameterVector, PreparedModel, Scratch, SeriesMatrix, TransitionWeightSeries};
use crate::par;
use crate::seeding::{derive_seed, mix64, rng_from_seed};

/// Repetitions summed per parallel task; fixed so that results do not depend
/// on the worker count.
const CHUNK: usize = 128;

/// Default weight threshold for regime-conditional histories.
pub const DEFAULT_HISTORY_THRESHOLD: f64 = 0.75;

/// Lower-triangular `B_t` with `B_t B_t' = Ω_{y,t}`.
pub fn impact_matrix(omega_yt: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::cholesky_lower(omega_yt)
}

#[derive(Debug, Clone)]
pub struct RecoveredShocks {
    /// `T x d`, `e_t = B_t^{-1}(y_t - μ_{y,t})`.
    pub shocks: DMatrix<f64>,
    pub weights: TransitionWeightSeries,
}

pub fn recover_shocks(params: &ParameterVector, data: &SeriesMatrix) -> Result<RecoveredShocks> {
    let trace = log_likelihood_trace(params, data)?;
    Ok(RecoveredShocks { shocks: trace.standardized, weights: trace.weights })
}

/// Size of the first-period structural shock in the shocked branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ShockSize {
    Fixed(f64),
    /// The baseline draw itself, so both branches coincide.
    BaselineDraw,
    /// An independent standard-normal draw per repetition.
    RandomDraw,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GirfResult {
    /// `(H+1) x d`.
    pub variable_paths: DMatrix<f64>,
    /// `(H+1) x M`; row 0 is zero because weights are predetermined.
    pub weight_paths: DMatrix<f64>,
    /// Monte Carlo standard errors of `variable_paths`.
    pub variable_se: DMatrix<f64>,
    pub weight_se: DMatrix<f64>,
    pub shock_index: usize,
    /// `None` unless the shock size was fixed.
    pub delta: Option<f64>,
    pub scale_factor: f64,
    pub repetitions: usize,
    pub seed: u64,
    pub origin_index: Option<usize>,
}

impl GirfResult {
    pub fn horizon(&self) -> usize {
        self.variable_paths.nrows() - 1
    }

    /// Rescales every path so that the impact response of `variable` is
    /// `target`.
    pub fn scaled(mut self, variable: usize, target: f64) -> Result<Self> {
        if variable >= self.variable_paths.ncols() {
            return Err(GstvarError::InvalidInput(format!("no variable {}", variable + 1)));
        }
        if target == 0.0 || !target.is_finite() {
            return Err(GstvarError::ScaleDegenerate("scale target must be a non-zero finite number".into()));
        }
        let impact = self.variable_paths[(0, variable)];
        if impact.abs() < 1e-10 {
            return Err(GstvarError::ScaleDegenerate(format!(
                "impact response of variable {} is {impact:e}",
                variable + 1
            )));
        }
        let factor = target / impact;
        self.variable_paths *= factor;
        self.weight_paths *= factor;
        self.variable_se *= factor.abs();
        self.weight_se *= factor.abs();
        self.scale_factor *= factor;
        Ok(self)
    }
}

struct Sums {
    y: Vec<f64>,
    y2: Vec<f64>,
    w: Vec<f64>,
    w2: Vec<f64>,
}

impl Sums {
    fn new(ny: usize, nw: usize) -> Self {
        Self { y: vec![0.0; ny], y2: vec![0.0; ny], w: vec![0.0; nw], w2: vec![0.0; nw] }
    }

    fn add(&mut self, other: &Sums) {
        for (a, b) in [(&mut self.y, &other.y), (&mut self.y2, &other.y2), (&mut self.w, &other.w), (&mut self.w2, &other.w2)] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

/// One step of the model: writes `y = μ + B e` and the weights used.
fn step(prepared: &PreparedModel, s: &mut Scratch, e: &[f64], y: &mut [f64], w: &mut [f64]) -> Result<()> {
    let d = y.len();
    prepared.weights_scratch(s).ok_or(GstvarError::AllDensitiesUnderflow { t: 0 })?;
    prepared.moments_scratch(s);
    if !linalg::chol_in_place(&mut s.cov, d) {
        return Err(GstvarError::NotPositiveDefinite("conditional covariance in GIRF simulation".into()));
    }
    for i in 0..d {
        let mut v = s.mean[i];
        for k in 0..=i {
            v += s.cov[i * d + k] * e[k];
        }
        y[i] = v;
    }
    w.copy_from_slice(&s.weights);
    Ok(())
}

fn push_history(history: &mut [f64], y: &[f64]) {
    let d = y.len();
    history.copy_within(0..history.len() - d, d);
    history[..d].copy_from_slice(y);
}

/// Monte Carlo GIRF: expected difference between a path whose first
/// structural shock has element `shock_index` set to the chosen size and a
/// baseline path, both driven by the same remaining shocks.
pub fn girf(
    params: &ParameterVector,
    shock_index: usize,
    size: ShockSize,
    history: &History,
    horizon: usize,
    repetitions: usize,
    seed: u64,
) -> Result<GirfResult> {
    let order = params.order();
    let (d, m, dp) = (order.dim, order.regimes, order.companion_dim());
    if shock_index >= d {
        return Err(GstvarError::InvalidInput(format!("no shock {}", shock_index + 1)));
    }
    if horizon < 1 || repetitions < 1 {
        return Err(GstvarError::InvalidInput("horizon and repetitions must be at least 1".into()));
    }
    if history.rows.nrows() != order.lags || history.rows.ncols() != d {
        return Err(GstvarError::DimensionMismatch("history shape does not match the model".into()));
    }
    let prepared = PreparedModel::new(params)?;
    let start = history.stacked();
    let n = horizon + 1;
    let chunks = repetitions.div_ceil(CHUNK);

    let partial = par::map_range(chunks, |c| -> Result<Sums> {
        let mut sums = Sums::new(n * d, n * m);
        let mut base = Scratch::new(order);
        let mut shocked = Scratch::new(order);
        let mut e = vec![0.0; n * d];
        let mut e0 = vec![0.0; d];
        let (mut yb, mut ys) = (vec![0.0; d], vec![0.0; d]);
        let (mut wb, mut ws) = (vec![0.0; m], vec![0.0; m]);
        for r in c * CHUNK..((c + 1) * CHUNK).min(repetitions) {
            let mut rng = rng_from_seed(derive_seed(seed, r as u64));
            for v in e.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            e0.copy_from_slice(&e[..d]);
            e0[shock_index] = match size {
                ShockSize::Fixed(delta) => delta,
                ShockSize::BaselineDraw => e[shock_index],
                ShockSize::RandomDraw => rng.sample(StandardNormal),
            };
            base.history[..dp].copy_from_slice(&start);
            shocked.history[..dp].copy_from_slice(&start);
            for h in 0..n {
                let eh = &e[h * d..(h + 1) * d];
                step(&prepared, &mut base, eh, &mut yb, &mut wb)?;
                step(&prepared, &mut shocked, if h == 0 { &e0 } else { eh }, &mut ys, &mut ws)?;
                for i in 0..d {
                    let diff = ys[i] - yb[i];
                    sums.y[h * d + i] += diff;
                    sums.y2[h * d + i] += diff * diff;
                }
                if h > 0 {
                    for k in 0..m {
                        let diff = ws[k] - wb[k];
                        sums.w[h * m + k] += diff;
                        sums.w2[h * m + k] += diff * diff;
                    }
                }
                push_history(&mut base.history, &yb);
                push_history(&mut shocked.history, &ys);
            }
        }
        Ok(sums)
    });
    let mut total = Sums::new(n * d, n * m);
    for p in partial {
        total.add(&p?);
    }
    let rr = repetitions as f64;
    let moments = |sum: &[f64], sq: &[f64], cols: usize| {
        let mean = DMatrix::from_fn(n, cols, |h, i| sum[h * cols + i] / rr);
        let se = DMatrix::from_fn(n, cols, |h, i| {
            if repetitions < 2 {
                return 0.0;
            }
            let mu = sum[h * cols + i] / rr;
            let var = ((sq[h * cols + i] - rr * mu * mu) / (rr - 1.0)).max(0.0);
            (var / rr).sqrt()
        });
        (mean, se)
    };
    let (variable_paths, variable_se) = moments(&total.y, &total.y2, d);
    let (weight_paths, weight_se) = moments(&total.w, &total.w2, m);
    Ok(GirfResult {
        variable_paths,
        weight_paths,
        variable_se,
        weight_se,
        shock_index,
        delta: match size {
            ShockSize::Fixed(delta) => Some(delta),
            _ => None,
        },
        scale_factor: 1.0,
        repetitions,
        seed,
        origin_index: history.origin_index,
    })
}

/// Histories `𝐲_{t-1}` of the data whose weight on `regime` exceeds
/// `threshold` (every history when `threshold <= 0`), annotated with the
/// weights and recovered structural shock at their origin.
pub fn regime_histories(params: &ParameterVector, data: &SeriesMatrix, regime: usize, threshold: f64) -> Result<Vec<History>> {
    let order = params.order();
    if regime >= order.regimes {
        return Err(GstvarError::InvalidInput(format!("model has no regime {}", regime + 1)));
    }
    let all = data_histories(params, data)?;
    let selected: Vec<History> = all
        .into_iter()
        .filter(|h| threshold <= 0.0 || h.weight_at_origin.as_ref().is_some_and(|w| w[regime] > threshold))
        .collect();
    if selected.is_empty() {
        return Err(GstvarError::EmptyHistorySet { regime: regime + 1, threshold });
    }
    Ok(selected)
}

/// Every length-`p` history of the data with its origin annotations.
pub fn data_histories(params: &ParameterVector, data: &SeriesMatrix) -> Result<Vec<History>> {
    let p = params.order().lags;
    let trace = log_likelihood_trace(params, data)?;
    (0..trace.weights.weights.nrows())
        .map(|k| {
            let mut h = History::from_data(data, k + p, p)?;
            h.weight_at_origin = Some(trace.weights.weights.row(k).iter().copied().collect());
            h.shock_at_origin = Some(trace.standardized.row(k).iter().copied().collect());
            Ok(h)
        })
        .collect()
}

/// Histories drawn from the stationary distribution of `regime`.
pub fn stationary_histories(params: &ParameterVector, regime: usize, count: usize, seed: u64) -> Result<Vec<History>> {
    let order = params.order();
    let (d, p) = (order.dim, order.lags);
    (0..count)
        .map(|k| {
            let mut rng = rng_from_seed(derive_seed(seed, k as u64));
            let draw = PreparedModel::draw_stationary_history(params, regime, &mut rng)?;
            History::new(DMatrix::from_row_slice(p, d, &draw))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum HistorySelection {
    /// Data histories with the regime's weight above the threshold.
    Regime { regime: usize, threshold: f64 },
    /// Every data history.
    All,
    /// Draws from a regime's stationary distribution.
    Stationary { regime: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GirfMode {
    /// Shock size equal to the structural shock recovered at the origin.
    DataShock,
    FixedDelta(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GirfCollection {
    pub results: Vec<GirfResult>,
    /// Positions (in selection order) of histories dropped because their
    /// impact response could not be scaled.
    pub excluded: Vec<usize>,
}

pub fn select_histories(
    params: &ParameterVector,
    data: &SeriesMatrix,
    selection: &HistorySelection,
    seed: u64,
) -> Result<Vec<History>> {
    match *selection {
        HistorySelection::Regime { regime, threshold } => regime_histories(params, data, regime, threshold),
        HistorySelection::All => data_histories(params, data),
        HistorySelection::Stationary { regime, count } => {
            stationary_histories(params, regime, count, derive_seed(seed, mix64(u64::MAX)))
        }
    }
}

/// Per-history seed `seed ⊕ hash(origin)`; position is used for histories
/// without a data origin.
fn history_seed(seed: u64, history: &History, position: usize) -> u64 {
    match history.origin_index {
        Some(t) => derive_seed(seed, t as u64),
        None => derive_seed(seed, (1u64 << 63) | position as u64),
    }
}

fn shock_size(history: &History, shock_index: usize, mode: GirfMode) -> Result<ShockSize> {
    match mode {
        GirfMode::FixedDelta(delta) => Ok(ShockSize::Fixed(delta)),
        GirfMode::DataShock => history
            .shock_at_origin
            .as_ref()
            .map(|s| ShockSize::Fixed(s[shock_index]))
            .ok_or_else(|| GstvarError::InvalidInput("data-shock mode needs histories taken from the data".into())),
    }
}

/// GIRFs for a list of histories, optionally scaled so that the impact
/// response of `scale.0` equals `scale.1`.
#[allow(clippy::too_many_arguments)]
pub fn girf_for_histories(
    params: &ParameterVector,
    histories: &[History],
    shock_index: usize,
    horizon: usize,
    repetitions: usize,
    scale: Option<(usize, f64)>,
    seed: u64,
    mode: GirfMode,
) -> Result<GirfCollection> {
    if let Some((_, target)) = scale {
        if target == 0.0 || !target.is_finite() {
            return Err(GstvarError::ScaleDegenerate("scale target must be a non-zero finite number".into()));
        }
    }
    let indexed: Vec<(usize, &History)> = histories.iter().enumerate().collect();
    let outcomes = par::map_slice(&indexed, |&(pos, h)| -> Result<Option<GirfResult>> {
        let size = shock_size(h, shock_index, mode)?;
        let res = girf(params, shock_index, size, h, horizon, repetitions, history_seed(seed, h, pos))?;
        match scale {
            None => Ok(Some(res)),
            Some((var, target)) => match res.scaled(var, target) {
                Ok(r) => Ok(Some(r)),
                Err(GstvarError::ScaleDegenerate(_)) => Ok(None),
                Err(e) => Err(e),
            },
        }
    });
    let mut results = Vec::with_capacity(histories.len());
    let mut excluded = Vec::new();
    for (pos, o) in outcomes.into_iter().enumerate() {
        match o? {
            Some(r) => results.push(r),
            None => excluded.push(pos),
        }
    }
    if results.is_empty() && !histories.is_empty() {
        return Err(GstvarError::ScaleDegenerate(format!("all {} histories have a zero impact response", histories.len())));
    }
    if !excluded.is_empty() {
        log::warn!("{} histories excluded: impact response too small to scale", excluded.len());
    }
    Ok(GirfCollection { results, excluded })
}

#[allow(clippy::too_many_arguments)]
pub fn girf_collection(
    params: &ParameterVector,
    data: &SeriesMatrix,
    shock_index: usize,
    selection: &HistorySelection,
    horizon: usize,
    repetitions: usize,
    scale: Option<(usize, f64)>,
    seed: u64,
    mode: GirfMode,
) -> Result<GirfCollection> {
    let histories = select_histories(params, data, selection, seed)?;
    girf_for_histories(params, &histories, shock_index, horizon, repetitions, scale, seed, mode)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GfevdResult {
    /// One `(H+1) x d` matrix (horizon by shock) per series: the `d`
    /// variables, followed by the `M` transition weights when `M >= 2`.
    /// Weight rows at horizon 0 are NaN.
    pub contributions: Vec<DMatrix<f64>>,
    pub series_names: Vec<String>,
    pub horizon: usize,
    pub histories_used: usize,
}

/// Shares of cumulative squared GIRFs averaged over histories.
pub fn gfevd(
    params: &ParameterVector,
    histories: &[History],
    horizon: usize,
    repetitions: usize,
    seed: u64,
    mode: GirfMode,
) -> Result<GfevdResult> {
    if histories.is_empty() {
        return Err(GstvarError::InvalidInput("no histories".into()));
    }
    let order = params.order();
    let (d, m) = (order.dim, order.regimes);
    let n_weights = if m >= 2 { m } else { 0 };
    let series = d + n_weights;
    let n = horizon + 1;
    let indexed: Vec<(usize, &History)> = histories.iter().enumerate().collect();
    // per history: series x horizon x shock ratios, NaN where undefined
    let per_history = par::map_slice(&indexed, |&(pos, h)| -> Result<Vec<f64>> {
        let hs = history_seed(seed, h, pos);
        let girfs = (0..d)
            .map(|j| girf(params, j, shock_size(h, j, mode)?, h, horizon, repetitions, hs))
            .collect::<Result<Vec<_>>>()?;
        let mut out = vec![f64::NAN; series * n * d];
        for s in 0..series {
            let mut cum = vec![0.0; d];
            for hz in 0..n {
                for (j, g) in girfs.iter().enumerate() {
                    let v = if s < d { g.variable_paths[(hz, s)] } else { g.weight_paths[(hz, s - d)] };
                    cum[j] += v * v;
                }
                if s >= d && hz == 0 {
                    continue;
                }
                let total: f64 = cum.iter().sum();
                if total > 0.0 && total.is_finite() {
                    for j in 0..d {
                        out[(s * n + hz) * d + j] = cum[j] / total;
                    }
                }
            }
        }
        Ok(out)
    });
    let mut sums = vec![0.0; series * n * d];
    let mut counts = vec![0usize; series * n];
    for ratios in per_history {
        let ratios = ratios?;
        for cell in 0..series * n {
            if ratios[cell * d].is_nan() {
                continue;
            }
            counts[cell] += 1;
            for j in 0..d {
                sums[cell * d + j] += ratios[cell * d + j];
            }
        }
    }
    for s in 0..d {
        if (0..n).any(|hz| counts[s * n + hz] == 0) {
            return Err(GstvarError::ZeroDenominator);
        }
    }
    let contributions = (0..series)
        .map(|s| {
            DMatrix::from_fn(n, d, |hz, j| {
                let c = counts[s * n + hz];
                if c == 0 {
                    f64::NAN
                } else {
                    sums[(s * n + hz) * d + j] / c as f64
                }
            })
        })
        .collect();
    let mut series_names: Vec<String> = (1..=d).map(|i| format!("y{i}")).collect();
    series_names.extend((1..=n_weights).map(|k| format!("alpha{k}")));
    Ok(GfevdResult { contributions, series_names, horizon, histories_used: histories.len() })
}
