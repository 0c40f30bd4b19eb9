//! Genetic-algorithm search for starting values.
//!
//! Individuals live in unconstrained coordinates. Crossover exchanges whole
//! regimes, mutation is Gaussian, and every individual is repaired to satisfy
//! the per-regime stability condition with the configured margin by shrinking
//! the AR matrices of offending regimes.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::transform::{from_unconstrained, to_unconstrained};
use super::{least_squares_var, EstimationConfig};
use crate::error::{GstvarError, Result};
use crate::linalg::spectral_radius;
use crate::model::{log_likelihood, ModelOrder, ParameterVector, RegimeParameters, SeriesMatrix};
use crate::par;
use crate::seeding::{rng_from_seed, SimRng};

const TOURNAMENT_SIZE: usize = 3;
const ELITES: usize = 2;
const CROSSOVER_RATE: f64 = 0.7;
const REGIME_REDRAW_RATE: f64 = 0.05;
const MAX_POPULATION: usize = 400;

#[derive(Debug, Clone)]
pub struct GaOutcome {
    pub best: ParameterVector,
    pub fitness: f64,
    /// Best fitness at the start of each generation and after the last one.
    pub trace: Vec<f64>,
}

/// Population size used for a model order.
pub fn population_size(order: ModelOrder, config: &EstimationConfig) -> usize {
    config
        .ga_population
        .unwrap_or_else(|| (2 * order.param_count()).clamp(10, MAX_POPULATION))
}

#[derive(Clone)]
struct Individual {
    x: Vec<f64>,
    fitness: f64,
}

/// Data moments used to draw plausible regimes.
struct DataSummary {
    rows: usize,
    mean: DVector<f64>,
    sd: DVector<f64>,
    ols: Option<RegimeParameters>,
}

impl DataSummary {
    fn new(data: &SeriesMatrix, lags: usize) -> Self {
        let d = data.ncols();
        let n = data.nrows() as f64;
        let mean = DVector::from_fn(d, |j, _| data.column(j).iter().sum::<f64>() / n);
        let sd = DVector::from_fn(d, |j, _| {
            let m = mean[j];
            let v = data.column(j).iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
            v.sqrt().max(1e-8)
        });
        Self { rows: data.nrows(), mean, sd, ols: least_squares_var(data, lags).ok() }
    }
}

struct Layout {
    order: ModelOrder,
}

impl Layout {
    fn intercept(&self, m: usize) -> std::ops::Range<usize> {
        let d = self.order.dim;
        m * d..(m + 1) * d
    }

    fn ar(&self, m: usize) -> std::ops::Range<usize> {
        let (d, p, mm) = (self.order.dim, self.order.lags, self.order.regimes);
        let start = mm * d + m * d * d * p;
        start..start + d * d * p
    }

    fn chol(&self, m: usize) -> std::ops::Range<usize> {
        let (d, p, mm) = (self.order.dim, self.order.lags, self.order.regimes);
        let k = d * (d + 1) / 2;
        let start = mm * (d + d * d * p) + m * k;
        start..start + k
    }

    fn alr(&self) -> std::ops::Range<usize> {
        let n = self.order.param_count();
        n - (self.order.regimes - 1)..n
    }

    fn regime_ranges(&self, m: usize) -> [std::ops::Range<usize>; 3] {
        [self.intercept(m), self.ar(m), self.chol(m)]
    }
}

/// Companion spectral radius from a column-major AR block.
fn ar_block_radius(block: &[f64], d: usize, p: usize) -> f64 {
    let mut comp = DMatrix::zeros(d * p, d * p);
    for lag in 0..p {
        for j in 0..d {
            for i in 0..d {
                comp[(i, lag * d + j)] = block[lag * d * d + j * d + i];
            }
        }
    }
    for k in d..d * p {
        comp[(k, k - d)] = 1.0;
    }
    spectral_radius(&comp).unwrap_or(f64::INFINITY)
}

/// Shrinks AR blocks until every regime's radius is below `1 - margin`.
fn repair(x: &mut [f64], layout: &Layout, margin: f64) -> bool {
    let (d, p) = (layout.order.dim, layout.order.lags);
    let limit = 1.0 - margin;
    for m in 0..layout.order.regimes {
        let range = layout.ar(m);
        for _ in 0..200 {
            let rho = ar_block_radius(&x[range.clone()], d, p);
            if !rho.is_finite() {
                return false;
            }
            if rho < limit {
                break;
            }
            let factor = 0.98 * limit / rho;
            x[range.clone()].iter_mut().for_each(|v| *v *= factor);
        }
        if ar_block_radius(&x[range], d, p) >= limit {
            return false;
        }
    }
    true
}

fn fitness(x: &[f64], order: ModelOrder, data: &SeriesMatrix) -> f64 {
    from_unconstrained(x, order)
        .and_then(|p| log_likelihood(&p, data))
        .ok()
        .filter(|v| v.is_finite())
        .unwrap_or(f64::NEG_INFINITY)
}

fn normal(rng: &mut SimRng) -> f64 {
    rng.sample(StandardNormal)
}

/// A random regime: either a least-squares fit on a random data segment or a
/// perturbation of the full-sample least-squares fit.
fn random_regime(rng: &mut SimRng, data: &SeriesMatrix, summary: &DataSummary, order: ModelOrder) -> RegimeParameters {
    let (d, p) = (order.dim, order.lags);
    let min_len = (3 * (d * p + 1)).max(20);
    if rng.random::<f64>() < 0.5 && summary.rows > 2 * min_len {
        let max_len = (summary.rows / 2).max(min_len + 1);
        let len = rng.random_range(min_len..=max_len);
        let start = rng.random_range(0..=summary.rows - len);
        if let Ok(r) = data.slice_rows(start, start + len).and_then(|seg| least_squares_var(&seg, p)) {
            return r;
        }
    }
    let ar: Vec<DMatrix<f64>> = (0..p)
        .map(|lag| {
            let base = summary.ols.as_ref().map(|o| o.ar[lag].clone()).unwrap_or_else(|| DMatrix::zeros(d, d));
            let shrink = rng.random_range(0.3..1.2);
            DMatrix::from_fn(d, d, |i, j| shrink * base[(i, j)] + 0.15 * normal(rng))
        })
        .collect();
    let omega_base = summary
        .ols
        .as_ref()
        .map(|o| o.omega.clone())
        .unwrap_or_else(|| DMatrix::from_diagonal(&summary.sd.map(|s| s * s)));
    let omega = omega_base * (0.6 * normal(rng)).exp();
    let mu = DVector::from_fn(d, |i, _| summary.mean[i] + summary.sd[i] * normal(rng));
    let mut system = DMatrix::identity(d, d);
    for a in &ar {
        system -= a;
    }
    let intercept = system * mu;
    RegimeParameters { intercept, ar, omega }
}

fn random_individual(
    rng: &mut SimRng,
    data: &SeriesMatrix,
    summary: &DataSummary,
    order: ModelOrder,
) -> Option<Vec<f64>> {
    let regimes: Vec<RegimeParameters> = (0..order.regimes).map(|_| random_regime(rng, data, summary, order)).collect();
    let mut alphas: Vec<f64> = (0..order.regimes).map(|_| 0.2 + rng.random::<f64>()).collect();
    let total: f64 = alphas.iter().sum();
    alphas.iter_mut().for_each(|a| *a /= total);
    let s: f64 = alphas[..order.regimes - 1].iter().sum();
    alphas[order.regimes - 1] = 1.0 - s;
    ParameterVector::new(regimes, alphas).and_then(|p| to_unconstrained(&p)).ok()
}

fn log_alphas(x: &[f64], layout: &Layout) -> Vec<f64> {
    let mut v: Vec<f64> = x[layout.alr()].to_vec();
    v.push(0.0);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    v.iter().map(|z| z - lse).collect()
}

fn regime_distance(a: &[f64], b: &[f64], layout: &Layout, ma: usize, mb: usize) -> f64 {
    let mut dist = 0.0;
    for (ra, rb) in layout.regime_ranges(ma).into_iter().zip(layout.regime_ranges(mb)) {
        dist += a[ra].iter().zip(&b[rb]).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
    }
    dist
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 1 {
        return vec![vec![0]];
    }
    let mut out = Vec::new();
    for perm in permutations(n - 1) {
        for pos in 0..=perm.len() {
            let mut p = perm.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

/// Permutation of `b`'s regimes that best matches `a`'s (identity for M > 4).
fn align(a: &[f64], b: &[f64], layout: &Layout) -> Vec<usize> {
    let m = layout.order.regimes;
    if m == 1 || m > 4 {
        return (0..m).collect();
    }
    permutations(m)
        .into_iter()
        .map(|perm| {
            let cost: f64 = perm.iter().enumerate().map(|(k, &j)| regime_distance(a, b, layout, k, j)).sum();
            (cost, perm)
        })
        .min_by(|x, y| x.0.total_cmp(&y.0).then_with(|| x.1.cmp(&y.1)))
        .map(|(_, p)| p)
        .unwrap()
}

/// Single-point crossover at a regime boundary.
fn crossover(a: &[f64], b: &[f64], layout: &Layout, rng: &mut SimRng) -> Vec<f64> {
    let m = layout.order.regimes;
    if m == 1 {
        return if rng.random::<bool>() { a.to_vec() } else { b.to_vec() };
    }
    let perm = align(a, b, layout);
    let cut = rng.random_range(1..m);
    let mut child = a.to_vec();
    let la = log_alphas(a, layout);
    let lb = log_alphas(b, layout);
    let mut child_log_alpha = la.clone();
    for k in cut..m {
        let src = perm[k];
        for (dst, from) in layout.regime_ranges(k).into_iter().zip(layout.regime_ranges(src)) {
            child[dst].copy_from_slice(&b[from]);
        }
        child_log_alpha[k] = lb[src];
    }
    let alr = layout.alr();
    for (k, idx) in alr.enumerate() {
        child[idx] = child_log_alpha[k] - child_log_alpha[m - 1];
    }
    child
}

fn coordinate_scales(layout: &Layout, summary: &DataSummary) -> Vec<f64> {
    let order = layout.order;
    let d = order.dim;
    let mut scales = vec![0.0; order.param_count()];
    for m in 0..order.regimes {
        for (k, idx) in layout.intercept(m).enumerate() {
            scales[idx] = 0.1 * summary.sd[k];
        }
        for idx in layout.ar(m) {
            scales[idx] = 0.05;
        }
        let mut k = 0;
        let chol = layout.chol(m);
        for j in 0..d {
            scales[chol.start + k] = 0.1;
            k += 1;
            for i in (j + 1)..d {
                scales[chol.start + k] = 0.05 * summary.sd[i];
                k += 1;
            }
        }
    }
    for idx in layout.alr() {
        scales[idx] = 0.3;
    }
    scales
}

fn tournament<'a>(pop: &'a [Individual], rng: &mut SimRng) -> &'a Individual {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..TOURNAMENT_SIZE {
        let c = &pop[rng.random_range(0..pop.len())];
        if c.fitness > best.fitness {
            best = c;
        }
    }
    best
}

/// Runs the genetic algorithm for one estimation round.
pub fn ga_search(data: &SeriesMatrix, order: ModelOrder, config: &EstimationConfig, round_seed: u64) -> Result<GaOutcome> {
    if data.ncols() != order.dim {
        return Err(GstvarError::DimensionMismatch("data columns vs model dimension".into()));
    }
    if data.nrows() < order.lags + 2 {
        return Err(GstvarError::InvalidInput("not enough observations".into()));
    }
    let layout = Layout { order };
    let summary = DataSummary::new(data, order.lags);
    let scales = coordinate_scales(&layout, &summary);
    let pop_size = population_size(order, config);
    let margin = config.stationarity_margin;
    let mut rng = rng_from_seed(round_seed);

    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(pop_size);
    for seed in &config.ga_seeds {
        if seed.order() != order {
            return Err(GstvarError::DimensionMismatch("GA seed has a different model order".into()));
        }
        let mut x = to_unconstrained(seed)?;
        if repair(&mut x, &layout, margin) {
            candidates.push(x);
        }
    }
    if config.ga_seeds.is_empty() {
        if let Some(ols) = &summary.ols {
            let regimes = vec![ols.clone(); order.regimes];
            let alphas = vec![1.0 / order.regimes as f64; order.regimes];
            if let Ok(mut x) = ParameterVector::new(regimes, alphas).and_then(|p| to_unconstrained(&p)) {
                if repair(&mut x, &layout, margin) {
                    candidates.push(x);
                }
            }
        }
    }
    let mut attempts = 0;
    while candidates.len() < pop_size && attempts < 50 * pop_size {
        attempts += 1;
        if let Some(mut x) = random_individual(&mut rng, data, &summary, order) {
            if repair(&mut x, &layout, margin) {
                candidates.push(x);
            }
        }
    }
    candidates.truncate(pop_size);
    if candidates.is_empty() {
        return Err(GstvarError::NoFeasibleIndividual);
    }

    let fits = par::map_slice(&candidates, |x| fitness(x, order, data));
    let mut pop: Vec<Individual> = candidates.into_iter().zip(fits).map(|(x, fitness)| Individual { x, fitness }).collect();
    let mut trace = Vec::with_capacity(config.ga_generations + 1);

    for gen in 0..config.ga_generations {
        pop.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
        trace.push(pop[0].fitness);
        let decay = 1.0 - 0.7 * gen as f64 / config.ga_generations.max(1) as f64;
        let mut next: Vec<Individual> = pop.iter().take(ELITES.min(pop.len())).cloned().collect();
        let mut children = Vec::with_capacity(pop_size);
        while next.len() + children.len() < pop_size {
            let a = tournament(&pop, &mut rng);
            let mut child = if rng.random::<f64>() < CROSSOVER_RATE {
                let b = tournament(&pop, &mut rng);
                crossover(&a.x, &b.x, &layout, &mut rng)
            } else {
                a.x.clone()
            };
            for (v, s) in child.iter_mut().zip(&scales) {
                if rng.random::<f64>() < config.mutation_rate {
                    *v += decay * s * normal(&mut rng);
                }
            }
            if order.regimes > 1 && rng.random::<f64>() < REGIME_REDRAW_RATE {
                let m = rng.random_range(0..order.regimes);
                if let Some(fresh) = random_individual(&mut rng, data, &summary, order) {
                    for r in layout.regime_ranges(m) {
                        child[r.clone()].copy_from_slice(&fresh[r]);
                    }
                }
            }
            if repair(&mut child, &layout, margin) {
                children.push(child);
            }
        }
        let fits = par::map_slice(&children, |x| fitness(x, order, data));
        next.extend(children.into_iter().zip(fits).map(|(x, fitness)| Individual { x, fitness }));
        pop = next;
    }
    pop.sort_by(|a, b| b.fitness.total_cmp(&a.fitness));
    trace.push(pop[0].fitness);
    let best = pop
        .into_iter()
        .find(|ind| ind.fitness.is_finite())
        .ok_or(GstvarError::NoFeasibleIndividual)?;
    Ok(GaOutcome { best: from_unconstrained(&best.x, order)?, fitness: best.fitness, trace })
}
