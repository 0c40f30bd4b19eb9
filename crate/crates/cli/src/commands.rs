//! Subcommand implementations. Each returns the process exit code on
//! success; errors map to exit codes in `main`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use gstvar::diagnostics::{acf_ccf, pacf, qq_points, residuals, squared_std_residual_acf, Correlogram};
use gstvar::estimation::{fit, information_criteria, loglik_hessian, wald_test, EstimationConfig, WaldRestriction};
use gstvar::model::{simulate, SimulationInit};
use gstvar::montecarlo::{run_study, StudyModel, StudySpec};
use gstvar::stationarity::{check_necessary, companion_jsr, DEFAULT_JSR_MAX_PRODUCTS, DEFAULT_JSR_TOLERANCE};
use gstvar::structural::{gfevd, girf_collection, select_histories, GirfMode, HistorySelection, DEFAULT_HISTORY_THRESHOLD};
use gstvar::{ModelOrder, ParameterVector, SeriesMatrix};

use crate::io::{data_csv, read_data, read_model, table_csv, write_atomic, ModelFile};

#[derive(Debug, Parser)]
#[command(name = "gstvar", version, about = "Gaussian smooth transition VAR toolkit")]
pub struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "GSTVAR_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a model by maximum likelihood.
    Fit(FitArgs),
    /// Simulate a path from a model.
    Simulate(SimulateArgs),
    /// Generalized impulse responses over a set of histories.
    Girf(GirfArgs),
    /// Generalized forecast error variance decomposition.
    Gfevd(GfevdArgs),
    /// Residual diagnostics and Wald constancy tests.
    Diagnose(DiagnoseArgs),
    /// Per-regime stability and joint-spectral-radius certificate.
    CheckStationarity(CheckArgs),
    /// Monte Carlo study of the estimator.
    Montecarlo(MonteCarloArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    pub data: PathBuf,
    #[arg(long = "p")]
    pub p: usize,
    #[arg(long = "M", alias = "m")]
    pub m: usize,
    #[arg(long, default_value_t = 16)]
    pub rounds: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.02)]
    pub margin: f64,
    #[arg(long = "min-regime-frac", default_value_t = 0.01)]
    pub min_regime_frac: f64,
    /// GA generations per round.
    #[arg(long)]
    pub generations: Option<usize>,
    #[arg(long = "jsr-tol", default_value_t = DEFAULT_JSR_TOLERANCE)]
    pub jsr_tol: f64,
    #[arg(long = "jsr-max-products", default_value_t = DEFAULT_JSR_MAX_PRODUCTS)]
    pub jsr_max_products: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub model: PathBuf,
    #[arg(long = "T", alias = "t")]
    pub t: usize,
    #[arg(long)]
    pub seed: u64,
    /// Regime (1-based) whose stationary distribution draws the initial values.
    #[arg(long = "init-regime", default_value_t = 1)]
    pub init_regime: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HistoryArgs {
    /// Histories where this regime's (1-based) weight exceeds the threshold.
    #[arg(long, conflicts_with_all = ["all_histories", "stationary_regime"])]
    pub regime: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_HISTORY_THRESHOLD)]
    pub threshold: f64,
    /// Every history of the data.
    #[arg(long = "all-histories", alias = "all")]
    pub all_histories: bool,
    /// Draw histories from this regime's stationary distribution instead.
    #[arg(long = "stationary-regime", conflicts_with = "all_histories")]
    pub stationary_regime: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub draws: usize,
}

impl HistoryArgs {
    fn selection(&self) -> Result<HistorySelection> {
        Ok(match (self.regime, self.all_histories, self.stationary_regime) {
            (Some(m), false, None) => HistorySelection::Regime { regime: one_based(m, "regime")?, threshold: self.threshold },
            (None, true, None) => HistorySelection::All,
            (None, false, Some(m)) => HistorySelection::Stationary { regime: one_based(m, "regime")?, count: self.draws },
            _ => bail!("choose exactly one of --regime, --all-histories or --stationary-regime"),
        })
    }
}

#[derive(Debug, Args)]
pub struct GirfArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    /// Structural shock (1-based).
    #[arg(long)]
    pub shock: usize,
    #[command(flatten)]
    pub histories: HistoryArgs,
    #[arg(long = "H", alias = "h", default_value_t = 36)]
    pub h: usize,
    #[arg(long = "R1", alias = "r1", default_value_t = 2500)]
    pub r1: usize,
    /// Variable (1-based) whose impact response is scaled to --scale-to.
    #[arg(long = "scale-var", requires = "scale_to")]
    pub scale_var: Option<usize>,
    #[arg(long = "scale-to", requires = "scale_var", allow_hyphen_values = true)]
    pub scale_to: Option<f64>,
    /// `data` (recovered structural shock) or `delta=<x>`.
    #[arg(long, default_value = "data")]
    pub mode: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GfevdArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    #[arg(long = "H", alias = "h", default_value_t = 36)]
    pub h: usize,
    #[arg(long = "R1", alias = "r1", default_value_t = 2500)]
    pub r1: usize,
    #[command(flatten)]
    pub histories: HistoryArgs,
    #[arg(long, default_value = "data")]
    pub mode: String,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    #[arg(long = "max-lag", default_value_t = 24)]
    pub max_lag: usize,
    #[arg(long = "out-dir")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    pub model: PathBuf,
    #[arg(long, default_value_t = DEFAULT_JSR_TOLERANCE)]
    pub tol: f64,
    #[arg(long = "max-products", default_value_t = DEFAULT_JSR_MAX_PRODUCTS)]
    pub max_products: usize,
}

#[derive(Debug, Args)]
pub struct MonteCarloArgs {
    /// Design 1 or 2.
    #[arg(long)]
    pub model: u32,
    #[arg(long, default_value_t = 50)]
    pub reps: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [500usize, 2000])]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub rounds: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn one_based(i: usize, what: &str) -> Result<usize> {
    if i == 0 {
        bail!("{what} indices start at 1");
    }
    Ok(i - 1)
}

fn parse_mode(mode: &str) -> Result<GirfMode> {
    if mode == "data" {
        return Ok(GirfMode::DataShock);
    }
    if let Some(x) = mode.strip_prefix("delta=") {
        let delta: f64 = x.parse().with_context(|| format!("invalid delta '{x}'"))?;
        if !delta.is_finite() {
            bail!("delta must be finite");
        }
        return Ok(GirfMode::FixedDelta(delta));
    }
    bail!("mode must be 'data' or 'delta=<x>', got '{mode}'")
}

fn load_model_and_data(model: &Path, data: &Path) -> Result<(ModelFile, ParameterVector, SeriesMatrix)> {
    let file = read_model(model)?;
    let params = file.params()?;
    let data = read_data(data)?;
    if data.ncols() != params.order().dim {
        bail!("data has {} columns but the model has d = {}", data.ncols(), params.order().dim);
    }
    Ok((file, params, data))
}

fn fmt(v: f64) -> String {
    v.to_string()
}

pub fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Girf(a) => cmd_girf(a),
        Command::Gfevd(a) => cmd_gfevd(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::CheckStationarity(a) => cmd_check_stationarity(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
    }
}

pub fn cmd_fit(a: FitArgs) -> Result<u8> {
    let data = read_data(&a.data)?;
    let order = ModelOrder::new(data.ncols(), a.p, a.m)?;
    let mut config = EstimationConfig {
        rounds: a.rounds,
        seed: a.seed,
        stationarity_margin: a.margin,
        min_regime_obs_fraction: a.min_regime_frac,
        jsr: Some((a.jsr_tol, a.jsr_max_products)),
        ..EstimationConfig::default()
    };
    if let Some(g) = a.generations {
        config.ga_generations = g;
    }
    let fitted = fit(&data, order, &config)?;
    let file = ModelFile::from_fit(&fitted, data.names());
    write_atomic(&a.out, &file.to_json()?)?;

    let ic = information_criteria(&fitted);
    println!("loglik {}", fitted.loglik);
    println!("T {}", fitted.data_t);
    println!("aic/T {}  bic/T {}  hqic/T {}", ic.aic, ic.bic, ic.hqic);
    match &fitted.jsr {
        Some(c) => println!(
            "JSR bounds [{}, {}] tolerance {} converged {}{}",
            c.lower,
            c.upper,
            c.tolerance_requested,
            c.converged,
            if c.certifies_stability() { " (stationarity certified)" } else { "" }
        ),
        None => println!("JSR bounds unavailable"),
    }
    for r in &fitted.rounds_summary {
        match r.loglik {
            Some(ll) => println!("round {:>4}  loglik {:>16.6}  {}", r.round, ll, r.status.label()),
            None => println!("round {:>4}  loglik {:>16}  {}", r.round, "-", r.status.label()),
        }
    }
    Ok(0)
}

pub fn cmd_simulate(a: SimulateArgs) -> Result<u8> {
    let file = read_model(&a.model)?;
    let params = file.params()?;
    if a.t == 0 {
        bail!("--T must be at least 1");
    }
    let regime = one_based(a.init_regime, "regime")?;
    let series = simulate(&params, a.t, &SimulationInit::Regime(regime), a.seed)?;
    let names = if file.variable_names.len() == params.order().dim {
        file.variable_names.clone()
    } else {
        series.names().to_vec()
    };
    let series = series.with_names(names)?;
    write_atomic(&a.out, &data_csv(&series)?)?;
    Ok(0)
}

fn series_names(params: &ParameterVector, data: &SeriesMatrix) -> Vec<String> {
    let mut names = data.names().to_vec();
    if params.order().regimes >= 2 {
        names.extend((1..=params.order().regimes).map(|m| format!("alpha{m}")));
    }
    names
}

pub fn cmd_girf(a: GirfArgs) -> Result<u8> {
    let (_, params, data) = load_model_and_data(&a.model, &a.data)?;
    let shock = one_based(a.shock, "shock")?;
    let scale = match (a.scale_var, a.scale_to) {
        (Some(i), Some(c)) => Some((one_based(i, "variable")?, c)),
        _ => None,
    };
    let mode = parse_mode(&a.mode)?;
    let selection = a.histories.selection()?;
    let collection = girf_collection(&params, &data, shock, &selection, a.h, a.r1, scale, a.seed, mode)?;
    let names = series_names(&params, &data);
    let d = params.order().dim;
    let mut rows = Vec::new();
    for (id, g) in collection.results.iter().enumerate() {
        let origin = g.origin_index.map_or(String::new(), |t| t.to_string());
        for h in 0..=a.h {
            for (s, name) in names.iter().enumerate() {
                let (value, se) = if s < d {
                    (g.variable_paths[(h, s)], g.variable_se[(h, s)])
                } else {
                    (g.weight_paths[(h, s - d)], g.weight_se[(h, s - d)])
                };
                rows.push(vec![id.to_string(), origin.clone(), h.to_string(), name.clone(), fmt(value), fmt(se)]);
            }
        }
    }
    let bytes = table_csv(&["history_id", "origin_index", "horizon", "series_name", "value", "mc_se"], rows)?;
    write_atomic(&a.out, &bytes)?;
    eprintln!("{} histories, {} excluded by scaling", collection.results.len(), collection.excluded.len());
    Ok(0)
}

pub fn cmd_gfevd(a: GfevdArgs) -> Result<u8> {
    let (_, params, data) = load_model_and_data(&a.model, &a.data)?;
    let mode = parse_mode(&a.mode)?;
    let selection = a.histories.selection()?;
    let histories = select_histories(&params, &data, &selection, a.seed)?;
    let res = gfevd(&params, &histories, a.h, a.r1, a.seed, mode)?;
    let names = series_names(&params, &data);
    let mut header = vec!["series".to_string(), "horizon".to_string()];
    header.extend(data.names().iter().map(|n| format!("shock_{n}")));
    let mut rows = Vec::new();
    for (s, m) in res.contributions.iter().enumerate() {
        for h in 0..=a.h {
            if m[(h, 0)].is_nan() {
                continue;
            }
            let mut row = vec![names[s].clone(), h.to_string()];
            row.extend((0..m.ncols()).map(|j| fmt(m[(h, j)])));
            rows.push(row);
        }
    }
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    write_atomic(&a.out, &table_csv(&header_refs, rows)?)?;
    eprintln!("{} histories", res.histories_used);
    Ok(0)
}

fn correlogram_rows(c: &Correlogram, names: &[String]) -> Vec<Vec<String>> {
    c.long_rows()
        .into_iter()
        .map(|(lag, i, j, v)| vec![lag.to_string(), names[i].clone(), names[j].clone(), fmt(v), fmt(c.band)])
        .collect()
}

pub fn cmd_diagnose(a: DiagnoseArgs) -> Result<u8> {
    let (_, params, data) = load_model_and_data(&a.model, &a.data)?;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let names = data.names().to_vec();
    let res = residuals(&params, &data)?;
    let acf_header = ["lag", "series_i", "series_j", "value", "band"];

    let resid_acf = acf_ccf(&res.standardized, a.max_lag)?;
    let sq_acf = squared_std_residual_acf(&res, a.max_lag)?;
    let mut pacf_rows = Vec::new();
    let pacf_lag = a.max_lag.min(data.nrows().saturating_sub(1) / 2);
    let band = 1.96 / (data.nrows() as f64).sqrt();
    for (j, name) in names.iter().enumerate() {
        for (l, v) in pacf(&data.column(j), pacf_lag)?.into_iter().enumerate() {
            pacf_rows.push(vec![name.clone(), (l + 1).to_string(), fmt(v), fmt(band)]);
        }
    }
    let mut qq_rows = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let col: Vec<f64> = res.standardized.column(j).iter().copied().collect();
        for (k, (q, x)) in qq_points(&col)?.into_iter().enumerate() {
            qq_rows.push(vec![name.clone(), (k + 1).to_string(), fmt(q), fmt(x)]);
        }
    }
    let mut resid_header = vec!["t".to_string()];
    resid_header.extend(names.iter().map(|n| format!("raw_{n}")));
    resid_header.extend(names.iter().map(|n| format!("std_{n}")));
    let p = params.order().lags;
    let resid_rows = (0..res.raw.nrows()).map(|k| {
        let mut row = vec![data.timestamps().map_or((k + p).to_string(), |ts| ts[k + p].clone())];
        row.extend(res.raw.row(k).iter().map(|v| fmt(*v)));
        row.extend(res.standardized.row(k).iter().map(|v| fmt(*v)));
        row
    });
    let resid_refs: Vec<&str> = resid_header.iter().map(String::as_str).collect();

    let mut outputs = vec![
        ("residual_acf.csv", table_csv(&acf_header, correlogram_rows(&resid_acf, &names))?),
        ("squared_std_residual_acf.csv", table_csv(&acf_header, correlogram_rows(&sq_acf, &names))?),
        ("pacf.csv", table_csv(&["series", "lag", "value", "band"], pacf_rows)?),
        ("qq.csv", table_csv(&["series", "k", "theoretical", "sample"], qq_rows)?),
        ("residuals.csv", table_csv(&resid_refs, resid_rows)?),
    ];
    if params.order().regimes >= 2 {
        let hessian = loglik_hessian(&params, &data)?;
        let mut rows = Vec::new();
        for r in [WaldRestriction::InterceptsAndAr, WaldRestriction::ArOnly] {
            let w = wald_test(&params, &hessian, r)?;
            println!("Wald {}: statistic {} df {} p-value {}", r.name(), w.statistic, w.df, w.p_value);
            rows.push(vec![r.name().to_string(), fmt(w.statistic), w.df.to_string(), fmt(w.p_value)]);
        }
        outputs.push(("wald.csv", table_csv(&["restriction", "statistic", "df", "p_value"], rows)?));
    } else {
        println!("Wald constancy tests not applicable: the model has one regime");
    }
    for (name, bytes) in outputs {
        write_atomic(&a.out_dir.join(name), &bytes)?;
    }
    Ok(0)
}

pub fn cmd_check_stationarity(a: CheckArgs) -> Result<u8> {
    let params = read_model(&a.model)?.params()?;
    let necessary = check_necessary(&params, 0.0)?;
    for (m, r) in necessary.radii.iter().enumerate() {
        println!("regime {} companion spectral radius {}", m + 1, r);
    }
    if !necessary.holds {
        println!("necessary condition violated: some regime is not stable");
        return Ok(4);
    }
    let c = companion_jsr(&params, a.tol, a.max_products)?;
    println!(
        "JSR lower {} upper {} tolerance {} converged {} products {} depth {}",
        c.lower, c.upper, c.tolerance_requested, c.converged, c.products_explored, c.iterations
    );
    if c.converged && c.certifies_stability() {
        println!("certified: joint spectral radius below one");
        Ok(0)
    } else {
        println!("inconclusive: the upper bound does not certify a joint spectral radius below one");
        Ok(3)
    }
}

pub fn cmd_montecarlo(a: MonteCarloArgs) -> Result<u8> {
    let model = StudyModel::from_number(a.model)?;
    let spec = StudySpec::new(model, a.sizes.clone(), a.reps, a.rounds, a.seed);
    let result = run_study(&spec)?;
    write_atomic(&a.out, result.to_csv().as_bytes())?;
    for c in &result.cells {
        eprintln!("T={}: {} fits, {} failures", c.sample_size, c.successes, c.failures);
    }
    Ok(0)
}
