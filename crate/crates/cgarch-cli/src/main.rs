//! Command line surface for the cgarch library.
//!
//! Subcommands map one-to-one onto the library layers: `census` and
//! `simulate` drive the Monte Carlo engine, `mgf` and `diagnose` expose
//! the transform and its pricing integrands, `price` values contracts
//! from a CSV, and `fit` / `evaluate` run the estimation and
//! option-panel scoring workflow. Every run writes its output files plus
//! a JSON manifest recording the resolved configuration, so each
//! artifact is reproducible from the files alone.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use cgarch::estimate::{self, FitConfig, FitResult};
use cgarch::ingest::{self, ReturnSeries};
use cgarch::models::Family;
use cgarch::optim::NelderMeadConfig;
use cgarch::options_eval::{evaluate_panel, ivrmse, IvStatus};
use cgarch::pricing::{
    default_quad_config, integrand_profile, log_grid, price_contracts, OptionKind, PricingError,
};
use cgarch::simulate::{census, simulate_paths, SimConfig};
use cgarch::{fixtures, Contract, ModelSpec, VolState};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

/// Spot and strike of the probe contract behind the diagnostic grids.
const PROBE_LEVEL: f64 = 100.0;

/// Per-day rate of the census and diagnostic grids.
const PROBE_RATE: f64 = 1e-5;

/// Horizons the census table reports.
const CENSUS_DAYS: [u32; 6] = [15, 30, 50, 80, 120, 252];

#[derive(Parser)]
#[command(name = "cgarch", version, about = "Component GARCH option valuation toolkit")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Base seed for every stochastic component.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker thread count; all cores when omitted.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving the output files and the run manifest.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Built-in parameter set; repeat the flag for several.
    #[arg(long, global = true)]
    fixture: Vec<String>,
    /// Encoding of tabular output files.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Tally negative-variance paths across fixtures, vol states, and horizons.
    Census(CensusArgs),
    /// Materialize simulated variance and return paths.
    Simulate(SimulateArgs),
    /// Evaluate the moment generating function over transform arguments.
    Mgf(MgfArgs),
    /// Value European contracts listed in a CSV.
    Price(PriceArgs),
    /// Profile the pricing integrands over the phi grid.
    Diagnose(DiagnoseArgs),
    /// Fit a model family to a returns CSV by maximum likelihood.
    Fit(FitArgs),
    /// Score an option panel by implied-volatility error.
    Evaluate(EvaluateArgs),
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("{}", json!({ "error": format!("{err:#}") }));
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(threads) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("thread pool already configured")?;
    }
    fs::create_dir_all(&cli.global.out_dir)
        .with_context(|| format!("cannot create {}", cli.global.out_dir.display()))?;
    match &cli.command {
        Command::Census(args) => run_census(&cli.global, args),
        Command::Simulate(args) => run_simulate(&cli.global, args),
        Command::Mgf(args) => run_mgf(&cli.global, args),
        Command::Price(args) => run_price(&cli.global, args),
        Command::Diagnose(args) => run_diagnose(&cli.global, args),
        Command::Fit(args) => run_fit(&cli.global, args),
        Command::Evaluate(args) => run_evaluate(&cli.global, args),
    }
}

#[derive(Args)]
struct CensusArgs {
    /// Paths per fixture and volatility state.
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    /// Longest horizon simulated; the table reports the standard cut
    /// points up to it.
    #[arg(long, default_value_t = 252)]
    horizon: u32,
    /// Annualized volatility states in percent; both components start there.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 10.0])]
    vol: Vec<f64>,
    /// Per-day simple rate.
    #[arg(long, default_value_t = PROBE_RATE)]
    rate: f64,
}

/// One wide table: a row per horizon, a proportion column per
/// (volatility state, fixture) pair, volatility-major.
fn run_census(global: &GlobalArgs, args: &CensusArgs) -> Result<()> {
    let names = fixture_list(global, &["cjow08", "cclt23", "op23"]);
    let horizons: Vec<u32> =
        CENSUS_DAYS.iter().copied().filter(|&t| t <= args.horizon).collect();
    if horizons.is_empty() {
        bail!("horizon {} is below the first cut point {}", args.horizon, CENSUS_DAYS[0]);
    }

    let mut columns = vec!["t".to_string()];
    let mut proportions: Vec<Vec<f64>> = Vec::new();
    for &vol in &args.vol {
        for name in &names {
            let spec = load_fixture(name)?;
            let config = SimConfig {
                n_paths: args.paths,
                horizon: args.horizon,
                seed: global.seed,
                rate: args.rate,
                initial: VolState::from_annual_vol_pct(&spec, vol, vol),
            };
            let result = census(&spec, &config)?;
            columns.push(format!("{}_{}", name, vol_label(vol)));
            proportions.push(horizons.iter().map(|&t| result.proportion_by(t)).collect());
        }
    }

    let mut table = Table::new(columns);
    for (row, &t) in horizons.iter().enumerate() {
        let mut cells = vec![Cell::Int(t as i64)];
        cells.extend(proportions.iter().map(|col| Cell::Num(col[row])));
        table.push(cells);
    }
    let out = out_path(&global.out_dir, "census", global.format);
    table.write(&out, global.format)?;
    let config = json!({
        "paths": args.paths,
        "horizon": args.horizon,
        "vol": args.vol,
        "rate": args.rate,
        "cut_points": horizons,
        "format": format_label(global.format),
    });
    write_manifest(global, "census", config, &names, &[&out])
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 8)]
    paths: usize,
    #[arg(long, default_value_t = 252)]
    horizon: u32,
    /// Annualized start volatility in percent for both components.
    #[arg(long, default_value_t = 10.0)]
    vol: f64,
    /// Per-day simple rate.
    #[arg(long, default_value_t = PROBE_RATE)]
    rate: f64,
}

fn run_simulate(global: &GlobalArgs, args: &SimulateArgs) -> Result<()> {
    let name = first_fixture(global, "cpc-p1")?;
    let spec = load_fixture(&name)?;
    let config = SimConfig {
        n_paths: args.paths,
        horizon: args.horizon,
        seed: global.seed,
        rate: args.rate,
        initial: VolState::from_annual_vol_pct(&spec, args.vol, args.vol),
    };
    let set = simulate_paths(&spec, &config)?;

    let mut table = Table::with_headers(&["path", "day", "h", "q", "log_return"]);
    let state_len = set.horizon as usize + 1;
    for path in 0..set.n_paths {
        for day in 0..=set.horizon {
            let q = set.q.as_ref().map(|qs| qs[path * state_len + day as usize]);
            table.push(vec![
                Cell::Int(path as i64),
                Cell::Int(day as i64),
                Cell::Num(set.h_at(path, day)),
                q.map_or(Cell::Empty, Cell::Num),
                if day == 0 { Cell::Empty } else { Cell::Num(set.return_at(path, day)) },
            ]);
        }
    }
    let out = out_path(&global.out_dir, "paths", global.format);
    table.write(&out, global.format)?;
    let config = json!({
        "paths": args.paths,
        "horizon": args.horizon,
        "vol": args.vol,
        "rate": args.rate,
        "format": format_label(global.format),
    });
    write_manifest(global, "simulate", config, &[name], &[&out])
}

#[derive(Args)]
struct MgfArgs {
    /// Real parts of the transform argument.
    #[arg(long = "u-re", value_delimiter = ',', default_values_t = vec![0.5, 1.0, 2.0])]
    u_re: Vec<f64>,
    /// Imaginary part applied to every argument.
    #[arg(long = "u-im", default_value_t = 0.0)]
    u_im: f64,
    /// Horizons in trading days.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5, 20, 60])]
    maturity: Vec<u32>,
    #[arg(long, default_value_t = 100.0)]
    spot: f64,
    /// Annualized state volatility in percent for both components.
    #[arg(long, default_value_t = 10.0)]
    vol: f64,
    /// Per-day simple rate.
    #[arg(long, default_value_t = PROBE_RATE)]
    rate: f64,
    /// Evaluate under the pricing measure instead of the physical one.
    #[arg(long)]
    risk_neutral: bool,
}

fn run_mgf(global: &GlobalArgs, args: &MgfArgs) -> Result<()> {
    let names = fixture_list(global, &["cpc-p1"]);
    let mut table =
        Table::with_headers(&["fixture", "t", "u_re", "u_im", "f_re", "f_im", "steps", "diverged"]);
    for name in &names {
        let mut spec = load_fixture(name)?;
        if args.risk_neutral {
            spec = spec.risk_neutralize();
        }
        let state = VolState::from_annual_vol_pct(&spec, args.vol, args.vol);
        for &t in &args.maturity {
            for &re in &args.u_re {
                let u = Complex::new(re, args.u_im);
                let result = cgarch::mgf::mgf(&spec, u, state, args.spot, t, args.rate)?;
                let value = result.value.unwrap_or(Complex::new(f64::NAN, f64::NAN));
                table.push(vec![
                    Cell::Text(name.clone()),
                    Cell::Int(t as i64),
                    Cell::Num(re),
                    Cell::Num(args.u_im),
                    Cell::Num(value.re),
                    Cell::Num(value.im),
                    Cell::Int(result.steps as i64),
                    Cell::Bool(result.is_diverged()),
                ]);
            }
        }
    }
    let out = out_path(&global.out_dir, "mgf", global.format);
    table.write(&out, global.format)?;
    let config = json!({
        "u_re": args.u_re,
        "u_im": args.u_im,
        "maturity": args.maturity,
        "spot": args.spot,
        "vol": args.vol,
        "rate": args.rate,
        "risk_neutral": args.risk_neutral,
        "format": format_label(global.format),
    });
    write_manifest(global, "mgf", config, &names, &[&out])
}

#[derive(Args)]
struct PriceArgs {
    /// Contracts CSV with columns date, S, K, T_days, kind, r.
    #[arg(long)]
    contracts: PathBuf,
    /// Load the model from a fit report instead of a fixture.
    #[arg(long)]
    fit: Option<PathBuf>,
    /// Annualized state volatility in percent; the stationary mean when
    /// omitted.
    #[arg(long)]
    vol: Option<f64>,
}

fn run_price(global: &GlobalArgs, args: &PriceArgs) -> Result<()> {
    let (physical, names) = resolve_model(global, args.fit.as_deref(), "cpc-p1")?;
    let state = state_for(&physical, args.vol)?;
    let spec = physical.risk_neutralize();

    let rows = read_contracts(&args.contracts)?;
    let contracts: Vec<Contract> = rows
        .iter()
        .map(|r| Contract {
            strike: r.strike,
            maturity: r.t_days,
            kind: r.kind,
            spot: r.spot,
            rate: r.rate,
        })
        .collect();
    let priced = price_contracts(&spec, state, &contracts, default_quad_config());

    let mut table = Table::with_headers(&[
        "date", "S", "K", "T_days", "kind", "r", "price", "floored", "i1", "i2", "evals",
        "status", "detail",
    ]);
    for (row, result) in rows.iter().zip(priced) {
        let mut cells = vec![
            Cell::Text(row.date.to_string()),
            Cell::Num(row.spot),
            Cell::Num(row.strike),
            Cell::Int(row.t_days as i64),
            Cell::Text(kind_label(row.kind).to_string()),
            Cell::Num(row.rate),
        ];
        match result {
            Ok(p) => cells.extend([
                Cell::Num(p.price),
                Cell::Bool(p.floored),
                Cell::Num(p.i1),
                Cell::Num(p.i2),
                Cell::Int(p.evals as i64),
                Cell::Text("ok".to_string()),
                Cell::Empty,
            ]),
            Err(e) => cells.extend([
                Cell::Num(f64::NAN),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Text(pricing_status(&e).to_string()),
                Cell::Text(e.to_string()),
            ]),
        }
        table.push(cells);
    }
    let out = out_path(&global.out_dir, "prices", global.format);
    table.write(&out, global.format)?;
    let config = json!({
        "contracts": args.contracts.display().to_string(),
        "fit": args.fit.as_ref().map(|p| p.display().to_string()),
        "vol": args.vol,
        "format": format_label(global.format),
    });
    write_manifest(global, "price", config, &names, &[&out])
}

#[derive(Args)]
struct DiagnoseArgs {
    /// Horizons in trading days.
    #[arg(long, value_delimiter = ',', default_values_t = vec![15, 30, 50, 80, 120, 252])]
    maturity: Vec<u32>,
    /// Annualized volatility states in percent; both components start there.
    #[arg(long, value_delimiter = ',', default_values_t = vec![5.0, 10.0])]
    vol: Vec<f64>,
    /// Number of log-spaced phi grid points.
    #[arg(long, default_value_t = 2000)]
    points: usize,
    #[arg(long, default_value_t = 1e-3)]
    phi_lo: f64,
    #[arg(long, default_value_t = 3e4)]
    phi_hi: f64,
}

/// Samples `|I1|` and `|I2|` for risk-neutralized fixtures on the
/// at-the-money probe contract with spot and strike [`PROBE_LEVEL`] and
/// rate [`PROBE_RATE`].
fn run_diagnose(global: &GlobalArgs, args: &DiagnoseArgs) -> Result<()> {
    let names = fixture_list(global, &["hn-cjow08", "hn-cclt23", "cjow08", "cclt23", "op23"]);
    let grid: Vec<f64> = log_grid(args.phi_lo, args.phi_hi, args.points);

    let mut table = Table::with_headers(&[
        "model", "params", "vol", "t", "phi", "abs_i1", "abs_i2", "diverged",
    ]);
    for name in &names {
        let spec = load_fixture(name)?.risk_neutralize();
        for &vol in &args.vol {
            let state = VolState::from_annual_vol_pct(&spec, vol, vol);
            for &t in &args.maturity {
                let probe = Contract {
                    strike: PROBE_LEVEL,
                    maturity: t,
                    kind: OptionKind::Call,
                    spot: PROBE_LEVEL,
                    rate: PROBE_RATE,
                };
                let profile = integrand_profile(&spec, state, &probe, &grid)?;
                for i in 0..grid.len() {
                    table.push(vec![
                        Cell::Text(spec.family().name().to_string()),
                        Cell::Text(name.clone()),
                        Cell::Num(vol),
                        Cell::Int(t as i64),
                        Cell::Num(profile.phi[i]),
                        Cell::Num(profile.abs_i1[i]),
                        Cell::Num(profile.abs_i2[i]),
                        Cell::Bool(profile.sample_diverged[i]),
                    ]);
                }
            }
        }
    }
    let out = out_path(&global.out_dir, "diagnose", global.format);
    table.write(&out, global.format)?;
    let config = json!({
        "maturity": args.maturity,
        "vol": args.vol,
        "points": args.points,
        "phi_lo": args.phi_lo,
        "phi_hi": args.phi_hi,
        "spot": PROBE_LEVEL,
        "rate": PROBE_RATE,
        "format": format_label(global.format),
    });
    write_manifest(global, "diagnose", config, &names, &[&out])
}

#[derive(Args)]
struct FitArgs {
    /// Model family: hn, cjow, op, or cpc.
    #[arg(long, value_parser = parse_family)]
    family: Family,
    /// Returns CSV with columns date, rate, and adj_close or log_return.
    #[arg(long)]
    returns: PathBuf,
    /// Optimizer starts across the reparameterized space.
    #[arg(long, default_value_t = 8)]
    starts: usize,
    #[arg(long, default_value_t = 4000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    x_tol: f64,
    #[arg(long, default_value_t = 1e-7)]
    f_tol: f64,
}

fn run_fit(global: &GlobalArgs, args: &FitArgs) -> Result<()> {
    let series = ingest::load_returns::<f64>(&args.returns)
        .with_context(|| format!("cannot load {}", args.returns.display()))?;
    let cfg = FitConfig {
        starts: args.starts,
        seed: global.seed,
        nm: NelderMeadConfig {
            max_iters: args.max_iters,
            x_tol: args.x_tol,
            f_tol: args.f_tol,
            ..NelderMeadConfig::default()
        },
    };
    let fitted = estimate::fit(args.family, &series, &cfg)?;
    let key = family_key(args.family);

    let report = fit_report(&fitted, args.family);
    let report_path = global.out_dir.join(format!("fit_{key}.json"));
    write_json(&report_path, &report)?;

    let filtered_path = out_path(&global.out_dir, &format!("filtered_{key}"), global.format);
    let table = filtered_table(&fitted.spec, &series)?;
    table.write(&filtered_path, global.format)?;

    let config = json!({
        "family": key,
        "returns": args.returns.display().to_string(),
        "starts": args.starts,
        "max_iters": args.max_iters,
        "x_tol": args.x_tol,
        "f_tol": args.f_tol,
        "format": format_label(global.format),
    });
    write_manifest(global, "fit", config, &[], &[&report_path, &filtered_path])
}

#[derive(Args)]
struct EvaluateArgs {
    /// Returns CSV with columns date, rate, and adj_close or log_return.
    #[arg(long)]
    returns: PathBuf,
    /// Raw option panel CSV.
    #[arg(long)]
    panel: PathBuf,
    /// Load the model from a fit report instead of a fixture.
    #[arg(long)]
    fit: Option<PathBuf>,
}

fn run_evaluate(global: &GlobalArgs, args: &EvaluateArgs) -> Result<()> {
    let (spec, names) = resolve_model(global, args.fit.as_deref(), "cpc-p1")?;
    let series = ingest::load_returns::<f64>(&args.returns)
        .with_context(|| format!("cannot load {}", args.returns.display()))?;

    let init = estimate::initial_state(&spec, &series);
    let filtered = estimate::filter(&spec, &series, init)?;
    let log_likelihood = filtered.log_likelihood();
    let k = spec.family().n_params() as f64;
    let n = series.len();
    let aic = 2.0 * k - 2.0 * log_likelihood;
    let bic = k * (n as f64).ln() - 2.0 * log_likelihood;

    // Contracts trading on date t are valued off the variance forecast for
    // day t + 1, the state the transform expects.
    let mut states: HashMap<NaiveDate, VolState> = HashMap::new();
    for t in 0..n {
        let today = if spec.uses_component() {
            VolState::component(filtered.h[t], filtered.q[t])
        } else {
            VolState::single(filtered.h[t])
        };
        let next = spec.step(today, filtered.z[t])?;
        states.insert(series.dates[t], next);
    }

    let rows = ingest::load_panel::<f64>(&args.panel)
        .with_context(|| format!("cannot load {}", args.panel.display()))?;
    let (mut quotes, exclusions) = ingest::filter_panel(&rows);
    ingest::join_rates(&mut quotes, &series)?;

    let records = evaluate_panel(&spec.risk_neutralize(), &states, &quotes, default_quad_config())?;
    let summary = ivrmse(&records)?;

    let mut table = Table::with_headers(&[
        "trade_date", "expiry_date", "kind", "strike", "spot", "maturity_days", "rate", "price",
        "model_price", "iv_market", "iv_model", "status",
    ]);
    for record in &records {
        let q = &record.quote;
        table.push(vec![
            Cell::Text(q.trade_date.to_string()),
            Cell::Text(q.expiry_date.to_string()),
            Cell::Text(kind_label(q.kind).to_string()),
            Cell::Num(q.strike),
            Cell::Num(q.spot),
            Cell::Int(q.maturity_days as i64),
            Cell::Num(q.rate),
            Cell::Num(q.price),
            Cell::Num(record.model_price),
            Cell::Num(record.iv_market),
            Cell::Num(record.iv_model),
            Cell::Text(iv_status_label(record.status).to_string()),
        ]);
    }
    let records_path = out_path(&global.out_dir, "records", global.format);
    table.write(&records_path, global.format)?;

    let summary_path = global.out_dir.join("evaluate.json");
    write_json(
        &summary_path,
        &json!({
            "log_likelihood": log_likelihood,
            "aic": aic,
            "bic": bic,
            "ivrmse": summary.ivrmse,
            "n_total": summary.n_total,
            "n_ok": summary.n_ok,
            "n_diverged": summary.n_diverged,
            "n_unsolvable": summary.n_unsolvable,
            "n_below_floor": summary.n_below_floor,
            "exclusions": exclusions,
        }),
    )?;

    println!("Log-lik. {log_likelihood:.4}");
    println!("AIC      {aic:.4}");
    println!("BIC      {bic:.4}");
    println!("IVRMSE   {:.4}", summary.ivrmse);

    let config = json!({
        "returns": args.returns.display().to_string(),
        "panel": args.panel.display().to_string(),
        "fit": args.fit.as_ref().map(|p| p.display().to_string()),
        "format": format_label(global.format),
    });
    write_manifest(global, "evaluate", config, &names, &[&records_path, &summary_path])
}

/// Serialized summary of a fit, also the model exchange format that
/// `price --fit` and `evaluate --fit` read back.
#[derive(Serialize)]
struct FitReport {
    family: String,
    params: BTreeMap<String, f64>,
    log_likelihood: f64,
    n_obs: usize,
    n_params: usize,
    aic: f64,
    bic: f64,
    std_errors: Option<BTreeMap<String, f64>>,
    hessian_eigenvalues: Option<Vec<f64>>,
    convergence: estimate::Convergence,
}

/// The fields of a fit report needed to rebuild the model.
#[derive(Deserialize)]
struct FitModel {
    family: String,
    params: BTreeMap<String, f64>,
}

fn fit_report(fitted: &FitResult<f64>, family: Family) -> FitReport {
    let names = estimate::param_names(family);
    let values = estimate::param_values(&fitted.spec);
    let named = |values: &[f64]| -> BTreeMap<String, f64> {
        names.iter().map(|n| n.to_string()).zip(values.iter().copied()).collect()
    };
    FitReport {
        family: family_key(family).to_string(),
        params: named(&values),
        log_likelihood: fitted.log_likelihood,
        n_obs: fitted.n_obs,
        n_params: fitted.n_params,
        aic: fitted.aic,
        bic: fitted.bic,
        std_errors: fitted.std_errors.as_deref().map(named),
        hessian_eigenvalues: fitted.hessian_eigenvalues.clone(),
        convergence: fitted.convergence,
    }
}

/// Filtered state table: one row per observation, with the long-run
/// component and its interpretable level `q + hbar` for component models.
fn filtered_table(spec: &ModelSpec, series: &ReturnSeries<f64>) -> Result<Table> {
    let filtered = estimate::filter(spec, series, estimate::initial_state(spec, series))?;
    let hbar = spec.stationary_moments().ok().and_then(|m| m.hbar);
    let mut table = Table::with_headers(&["date", "h", "q", "q_plus_hbar"]);
    for t in 0..series.len() {
        let (q, level) = if spec.uses_component() {
            let q = filtered.q[t];
            (Cell::Num(q), Cell::Num(q + hbar.unwrap_or(f64::NAN)))
        } else {
            (Cell::Empty, Cell::Empty)
        };
        table.push(vec![
            Cell::Text(series.dates[t].to_string()),
            Cell::Num(filtered.h[t]),
            q,
            level,
        ]);
    }
    Ok(table)
}

/// One parsed line of the contracts CSV.
#[derive(Debug)]
struct ContractRow {
    date: NaiveDate,
    spot: f64,
    strike: f64,
    t_days: u32,
    kind: OptionKind,
    rate: f64,
}

fn read_contracts(path: &Path) -> Result<Vec<ContractRow>> {
    let mut reader = csv::Reader::from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let index = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim().eq_ignore_ascii_case(name))
            .ok_or_else(|| anyhow!("contracts file is missing column {name}"))
    };
    let date_idx = index("date")?;
    let spot_idx = index("S")?;
    let strike_idx = index("K")?;
    let days_idx = index("T_days")?;
    let kind_idx = index("kind")?;
    let rate_idx = index("r")?;

    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i + 2;
        let field = |idx: usize, name: &str| -> Result<&str> {
            record
                .get(idx)
                .map(str::trim)
                .ok_or_else(|| anyhow!("line {line}: missing {name}"))
        };
        let parse = |idx: usize, name: &str| -> Result<f64> {
            let raw = field(idx, name)?;
            raw.parse().with_context(|| format!("line {line}: cannot parse {name} from {raw:?}"))
        };
        let kind = match field(kind_idx, "kind")?.to_ascii_lowercase().as_str() {
            "call" => OptionKind::Call,
            "put" => OptionKind::Put,
            other => bail!("line {line}: kind must be call or put, got {other:?}"),
        };
        rows.push(ContractRow {
            date: field(date_idx, "date")?
                .parse()
                .with_context(|| format!("line {line}: cannot parse date"))?,
            spot: parse(spot_idx, "S")?,
            strike: parse(strike_idx, "K")?,
            t_days: parse(days_idx, "T_days")? as u32,
            kind,
            rate: parse(rate_idx, "r")?,
        });
    }
    Ok(rows)
}

/// Provenance record written beside every run's outputs.
#[derive(Serialize)]
struct RunManifest {
    subcommand: String,
    config: Value,
    seed: u64,
    fixtures: Vec<String>,
    version: String,
    outputs: Vec<String>,
}

fn write_manifest(
    global: &GlobalArgs,
    subcommand: &str,
    config: Value,
    fixtures: &[String],
    outputs: &[&Path],
) -> Result<()> {
    let manifest = RunManifest {
        subcommand: subcommand.to_string(),
        config,
        seed: global.seed,
        fixtures: fixtures.to_vec(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write_json(&global.out_dir.join(format!("{subcommand}_manifest.json")), &manifest)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn out_path(dir: &Path, stem: &str, format: Format) -> PathBuf {
    dir.join(format!("{stem}.{}", format_label(format)))
}

fn format_label(format: Format) -> &'static str {
    match format {
        Format::Csv => "csv",
        Format::Json => "json",
    }
}

fn parse_family(s: &str) -> Result<Family, String> {
    match s.to_ascii_lowercase().as_str() {
        "hn" => Ok(Family::Hn),
        "cjow" => Ok(Family::Cjow),
        "op" => Ok(Family::Op),
        "cpc" => Ok(Family::Cpc),
        other => Err(format!("unknown family {other:?}; expected hn, cjow, op, or cpc")),
    }
}

fn family_key(family: Family) -> &'static str {
    match family {
        Family::Hn => "hn",
        Family::Cjow => "cjow",
        Family::Op => "op",
        Family::Cpc => "cpc",
    }
}

fn kind_label(kind: OptionKind) -> &'static str {
    match kind {
        OptionKind::Call => "call",
        OptionKind::Put => "put",
    }
}

fn iv_status_label(status: IvStatus) -> &'static str {
    match status {
        IvStatus::Ok => "ok",
        IvStatus::ModelDiverged => "model_diverged",
        IvStatus::IvUnsolvable => "iv_unsolvable",
    }
}

fn pricing_status(error: &PricingError) -> &'static str {
    match error {
        PricingError::Diverged { .. } => "diverged",
        PricingError::QuadratureFailed { .. } => "quadrature_failed",
        PricingError::InvalidContract { .. } => "invalid_contract",
        PricingError::TooManyDeadPaths { .. } => "dead_paths",
        _ => "model_error",
    }
}

/// Column label for a volatility state, e.g. `5pct` or `7.5pct`.
fn vol_label(vol: f64) -> String {
    if vol.fract() == 0.0 && vol.abs() < 1e9 {
        format!("{}pct", vol as i64)
    } else {
        format!("{vol}pct")
    }
}

fn fixture_list(global: &GlobalArgs, defaults: &[&str]) -> Vec<String> {
    if global.fixture.is_empty() {
        defaults.iter().map(|s| s.to_string()).collect()
    } else {
        global.fixture.clone()
    }
}

fn first_fixture(global: &GlobalArgs, default: &str) -> Result<String> {
    match global.fixture.len() {
        0 => Ok(default.to_string()),
        1 => Ok(global.fixture[0].clone()),
        n => bail!("this subcommand takes one fixture, got {n}"),
    }
}

fn load_fixture(name: &str) -> Result<ModelSpec> {
    fixtures::by_name(name).ok_or_else(|| {
        anyhow!("unknown fixture {name:?}; expected one of {}", fixtures::all_names().join(", "))
    })
}

/// Model for pricing-side subcommands: a fit report when `--fit` is
/// given, otherwise a fixture. Returns the fixture names for the manifest.
fn resolve_model(
    global: &GlobalArgs,
    fit: Option<&Path>,
    default_fixture: &str,
) -> Result<(ModelSpec, Vec<String>)> {
    match fit {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?;
            let model: FitModel = serde_json::from_str(&text)
                .with_context(|| format!("{} is not a fit report", path.display()))?;
            let family = parse_family(&model.family).map_err(|e| anyhow!(e))?;
            let values: Vec<f64> = estimate::param_names(family)
                .iter()
                .map(|&name| {
                    model
                        .params
                        .get(name)
                        .copied()
                        .ok_or_else(|| anyhow!("fit report is missing parameter {name}"))
                })
                .collect::<Result<_>>()?;
            Ok((estimate::spec_from_params(family, &values), Vec::new()))
        }
        None => {
            let name = first_fixture(global, default_fixture)?;
            Ok((load_fixture(&name)?, vec![name]))
        }
    }
}

/// State for pricing-side subcommands: both components at `vol` percent
/// annualized, or the stationary mean when `vol` is absent.
fn state_for(spec: &ModelSpec, vol: Option<f64>) -> Result<VolState> {
    match vol {
        Some(v) => Ok(VolState::from_annual_vol_pct(spec, v, v)),
        None => {
            let moments = spec
                .stationary_moments()
                .context("no stationary state exists; pass --vol explicitly")?;
            Ok(match moments.mean_q {
                Some(q) => VolState::component(moments.mean_h, q),
                None => VolState::single(moments.mean_h),
            })
        }
    }
}

/// One tabular value; `Empty` renders as a blank CSV field and JSON null.
enum Cell {
    Text(String),
    Num(f64),
    Int(i64),
    Bool(bool),
    Empty,
}

impl Cell {
    fn csv_field(&self) -> String {
        match self {
            Cell::Text(s) => s.clone(),
            Cell::Num(n) => format!("{n}"),
            Cell::Int(i) => format!("{i}"),
            Cell::Bool(b) => format!("{b}"),
            Cell::Empty => String::new(),
        }
    }

    /// Non-finite numbers map to null; JSON has no representation for them.
    fn json_value(&self) -> Value {
        match self {
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Num(n) => serde_json::Number::from_f64(*n).map_or(Value::Null, Value::Number),
            Cell::Int(i) => Value::Number((*i).into()),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Empty => Value::Null,
        }
    }
}

/// Column-ordered rows writable as CSV or as a JSON array of objects.
struct Table {
    columns: Vec<String>,
    rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(columns: Vec<String>) -> Self {
        Table { columns, rows: Vec::new() }
    }

    fn with_headers(columns: &[&str]) -> Self {
        Table::new(columns.iter().map(|s| s.to_string()).collect())
    }

    fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width must match the header");
        self.rows.push(row);
    }

    fn write(&self, path: &Path, format: Format) -> Result<()> {
        match format {
            Format::Csv => {
                let mut writer = csv::Writer::from_path(path)
                    .with_context(|| format!("cannot write {}", path.display()))?;
                writer.write_record(&self.columns)?;
                for row in &self.rows {
                    writer.write_record(row.iter().map(|c| c.csv_field()))?;
                }
                writer.flush()?;
                Ok(())
            }
            Format::Json => {
                let objects: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let map: serde_json::Map<String, Value> = self
                            .columns
                            .iter()
                            .cloned()
                            .zip(row.iter().map(|c| c.json_value()))
                            .collect();
                        Value::Object(map)
                    })
                    .collect();
                write_json(path, &objects)
            }
        }
    }
}
