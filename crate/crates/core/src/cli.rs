//! Command-line front end: simulate, train, predict, allocate, benchmark, evaluate.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use clap::{CommandFactory, Parser, Subcommand};
use serde::Serialize;

use crate::domain::{is_feasible, validate_instance, AllocationInstance};
use crate::error::{Error, Result};
use crate::io::{self, InstancePaths};
use crate::optimizer::{
    allocate_exact_flow, default_priority, optimality_gap, solve, Recompute, SolveOptions, SolverKind,
    STATS_SCHEMA,
};
use crate::predictor::{
    evaluate, predict_matrix_on, train_with_report, Activation, LossKind, RevenueScale, SavedModel,
    TrainConfig,
};
use crate::synth::{
    generate_instance, generate_training_data, worked_example_config, GeneratorConfig, RiskMode,
};

#[derive(Debug, Parser)]
#[command(
    name = "fund-alloc",
    version,
    about = "Predict fund revenue per customer and allocate fund exposures"
)]
pub struct Cli {
    /// TOML file supplying flag values; flags given on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic instance, training data and ground truth.
    #[command(args_override_self = true)]
    Simulate(SimulateArgs),
    /// Fit the revenue predictor on a training CSV.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Write a risk-masked expected-revenue CSV from a saved model.
    #[command(args_override_self = true)]
    Predict(PredictArgs),
    /// Assign funds to customers and write the allocation.
    #[command(args_override_self = true)]
    Allocate(AllocateArgs),
    /// Compare HA, the manual baseline and the exact flow solver across scales.
    #[command(args_override_self = true)]
    Benchmark(BenchmarkArgs),
    /// AUC, MSE and MAE of a saved model on a labelled CSV.
    #[command(args_override_self = true)]
    Evaluate(EvaluateArgs),
}

fn parse<T: FromStr<Err = Error>>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Number of customers.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of funds.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub customer_dim: Option<usize>,
    #[arg(long)]
    pub fund_dim: Option<usize>,
    #[arg(long)]
    pub risk_levels: Option<u32>,
    #[arg(long, value_parser = parse::<RiskMode>)]
    pub risk_mode: Option<RiskMode>,
    /// Training samples to draw.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Probability that an intending customer converts within the window.
    #[arg(long)]
    pub q: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write revenue.csv holding the true expected revenue.
    #[arg(long)]
    pub oracle_revenue: bool,
    /// Emit the three-customer worked example, with its revenue matrix, instead of a random instance.
    #[arg(long)]
    pub golden: bool,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Training CSV with cust_feat_*, fund_feat_*, y and R columns.
    #[arg(long)]
    pub data: PathBuf,
    /// Where to write the model JSON.
    #[arg(long, default_value = "model.json")]
    pub out: PathBuf,
    #[arg(long, value_parser = parse::<LossKind>)]
    pub loss: Option<LossKind>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Hidden layer widths, e.g. 64,32.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long, value_parser = parse::<Activation>)]
    pub activation: Option<Activation>,
    #[arg(long)]
    pub sigma_floor: Option<f64>,
    #[arg(long)]
    pub validation_fraction: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl TrainArgs {
    pub fn train_config(&self) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            epsilon: self.epsilon.unwrap_or(d.epsilon),
            learning_rate: self.lr.unwrap_or(d.learning_rate),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
            seed: self.seed,
            loss: self.loss.unwrap_or(d.loss),
            sigma_floor: self.sigma_floor.unwrap_or(d.sigma_floor),
            hidden: self.hidden.clone().unwrap_or(d.hidden),
            activation: self.activation.unwrap_or(d.activation),
            validation_fraction: self.validation_fraction.unwrap_or(d.validation_fraction),
        }
    }
}

/// Instance file locations: `--dir` plus per-file overrides.
#[derive(Debug, clap::Args)]
pub struct InstanceArgs {
    #[arg(long, default_value = ".")]
    pub dir: PathBuf,
    #[arg(long)]
    pub customers: Option<PathBuf>,
    #[arg(long)]
    pub funds: Option<PathBuf>,
}

impl InstanceArgs {
    fn customers_path(&self) -> PathBuf {
        self.customers
            .clone()
            .unwrap_or_else(|| self.dir.join(io::CUSTOMERS_FILE))
    }

    fn funds_path(&self) -> PathBuf {
        self.funds
            .clone()
            .unwrap_or_else(|| self.dir.join(io::FUNDS_FILE))
    }
}

#[derive(Debug, clap::Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long, default_value = "revenue.csv")]
    pub out: PathBuf,
    /// shifted: P_c·exp(μ+σ²/2); unshifted subtracts the +1 label shift.
    #[arg(long, value_parser = parse::<RevenueScale>, default_value = "shifted")]
    pub scale: RevenueScale,
}

#[derive(Debug, clap::Args)]
pub struct AllocateArgs {
    #[command(flatten)]
    pub instance: InstanceArgs,
    #[arg(long)]
    pub revenue: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Defaults to the largest level in the input.
    #[arg(long)]
    pub risk_levels: Option<u32>,
    #[arg(long, value_parser = parse::<SolverKind>, default_value = "ha-eq8")]
    pub solver: SolverKind,
    /// Fund ids in priority order for the manual solver, e.g. f1,f2.
    #[arg(long)]
    pub priority: Option<String>,
    /// Rescore only customers touched by a newly exhausted fund.
    #[arg(long)]
    pub lazy: bool,
    /// Let HA take its top-K funds without checking that everyone else can still be served.
    #[arg(long)]
    pub no_risk_reserve: bool,
    /// Also run the exact flow solver and report the optimality gap.
    #[arg(long)]
    pub with_oracle: bool,
    #[arg(long, default_value = "allocation.csv")]
    pub out: PathBuf,
    /// Stats JSON path; printed to stdout when absent.
    #[arg(long)]
    pub stats: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::InvalidConfig(format!("unknown report format '{s}'"))),
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct BenchmarkArgs {
    /// Customer counts, strictly increasing.
    #[arg(long, value_delimiter = ',', default_value = "1000,5000,20000")]
    pub scales: Vec<usize>,
    #[arg(long, default_value_t = 8)]
    pub m: usize,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Seeded instances per scale.
    #[arg(long, default_value_t = 1)]
    pub instances: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse::<ReportFormat>, default_value = "csv")]
    pub format: ReportFormat,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match with_config_defaults(args) {
        Ok(a) => a,
        Err(e) => return report(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => report(&e),
    }
}

fn report(e: &Error) -> i32 {
    eprintln!("error[{}]: {e}", e.code());
    e.exit_code()
}

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Allocate(a) => cmd_allocate(&a),
        Command::Benchmark(a) => cmd_benchmark(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
    }
}

/// Splices the `--config` file's values in as flags right after the
/// subcommand name, so anything the user typed later overrides them.
/// Top-level keys apply when the subcommand knows the flag; keys under a
/// `[subcommand]` table always apply.
fn with_config_defaults(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut config = None;
    let mut sub_at = None;
    let cmd = Cli::command();
    let mut i = 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            config = args.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(p) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(p));
        } else if sub_at.is_none() && !a.starts_with('-') && cmd.find_subcommand(a.as_ref()).is_some() {
            sub_at = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(sub_at)) = (config, sub_at) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path)?;
    let table: toml::Table = toml::from_str(&text).map_err(|e| {
        let offset = e.span().map_or(0, |s| s.start);
        let before = &text[..offset.min(text.len())];
        Error::Parse {
            line: before.matches('\n').count() as u64 + 1,
            column: before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1,
            message: e.message().to_string(),
        }
    })?;
    let sub_name = args[sub_at].to_string_lossy().into_owned();
    let sub = cmd.find_subcommand(&sub_name).expect("found above");
    let known: Vec<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .collect();

    let mut injected = Vec::new();
    for (key, value) in &table {
        if let toml::Value::Table(_) = value {
            continue;
        }
        let flag = key.replace('_', "-");
        if known.contains(&flag) {
            push_flag(&mut injected, &flag, value)?;
        }
    }
    if let Some(section) = table.get(&sub_name) {
        let toml::Value::Table(section) = section else {
            return Err(Error::InvalidConfig(format!(
                "'{sub_name}' in the config file must be a table"
            )));
        };
        for (key, value) in section {
            push_flag(&mut injected, &key.replace('_', "-"), value)?;
        }
    }
    let mut out = args[..=sub_at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[sub_at + 1..]);
    Ok(out)
}

fn push_flag(out: &mut Vec<OsString>, flag: &str, value: &toml::Value) -> Result<()> {
    let scalar = |v: &toml::Value| -> Result<String> {
        match v {
            toml::Value::String(s) => Ok(s.clone()),
            toml::Value::Integer(i) => Ok(i.to_string()),
            toml::Value::Float(f) => Ok(f.to_string()),
            _ => Err(Error::InvalidConfig(format!(
                "unsupported value for '{flag}' in config file"
            ))),
        }
    };
    match value {
        toml::Value::Boolean(true) => out.push(format!("--{flag}").into()),
        toml::Value::Boolean(false) => {}
        toml::Value::Array(items) => {
            let parts = items.iter().map(scalar).collect::<Result<Vec<_>>>()?;
            out.push(format!("--{flag}").into());
            out.push(parts.join(",").into());
        }
        v => {
            out.push(format!("--{flag}").into());
            out.push(scalar(v)?.into());
        }
    }
    Ok(())
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let base = if a.golden {
        worked_example_config()
    } else {
        GeneratorConfig::default()
    };
    let config = GeneratorConfig {
        n_customers: a.n.unwrap_or(base.n_customers),
        n_funds: a.m.unwrap_or(base.n_funds),
        k: a.k.unwrap_or(base.k),
        customer_dim: a.customer_dim.unwrap_or(base.customer_dim),
        fund_dim: a.fund_dim.unwrap_or(base.fund_dim),
        risk_levels: a.risk_levels.unwrap_or(base.risk_levels),
        risk_mode: a.risk_mode.unwrap_or(base.risk_mode),
        n_samples: a.samples.unwrap_or(base.n_samples),
        conversion_given_intent: a.q.unwrap_or(base.conversion_given_intent),
        seed: a.seed,
        ..base
    };
    config.validate()?;
    let (instance, truth) = generate_instance(&config)?;
    let samples = generate_training_data(&config)?;
    std::fs::create_dir_all(&a.out)?;
    let mut paths = InstancePaths::in_dir(&a.out);
    if !(a.oracle_revenue || a.golden) {
        paths.revenue = None;
    }
    io::write_instance(&instance, &paths)?;
    io::write_training_data(&samples, &a.out.join(io::TRAIN_FILE))?;
    io::write_truth(&truth, &instance, &a.out.join(io::TRUTH_FILE))?;
    println!(
        "simulated {} customers, {} funds, {} training samples into {}",
        instance.n_customers(),
        instance.n_funds(),
        samples.len(),
        a.out.display()
    );
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let config = a.train_config();
    config.validate()?;
    let data = io::read_training_data(&a.data)?;
    let (model, report) = train_with_report(&data, &config)?;
    for (epoch, loss) in report.train_loss.iter().enumerate() {
        match report.validation_loss.get(epoch) {
            Some(v) => println!("epoch {:>3}  train {loss:.6}  validation {v:.6}", epoch + 1),
            None => println!("epoch {:>3}  train {loss:.6}", epoch + 1),
        }
    }
    println!("kept epoch {}", report.best_epoch + 1);
    SavedModel::new(model, config.loss, config.epsilon).save(&a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn cmd_predict(a: &PredictArgs) -> Result<()> {
    let saved = SavedModel::load(&a.model)?;
    let customers = io::read_customers(&a.instance.customers_path())?;
    let funds = io::read_funds(&a.instance.funds_path())?;
    let revenue = predict_matrix_on(&saved.model, &customers, &funds, a.scale)?;
    io::write_revenue(&revenue, &customers, &funds, &a.out)?;
    println!(
        "wrote {} eligible pairs to {}",
        revenue.eligible_count(),
        a.out.display()
    );
    Ok(())
}

/// Fund ids such as `f1,f2` or `1,2` mapped to fund indices.
fn priority_indices(list: &str, instance: &AllocationInstance) -> Result<Vec<usize>> {
    list.split(',')
        .map(|tok| {
            let tok = tok.trim();
            let id = tok
                .strip_prefix('f')
                .unwrap_or(tok)
                .parse::<u64>()
                .map_err(|_| Error::InvalidConfig(format!("bad fund id '{tok}' in priority")))?;
            instance
                .fund_index(id)
                .ok_or_else(|| Error::InvalidConfig(format!("priority names unknown fund {id}")))
        })
        .collect()
}

pub fn cmd_allocate(a: &AllocateArgs) -> Result<()> {
    let paths = InstancePaths {
        customers: a.instance.customers_path(),
        funds: a.instance.funds_path(),
        revenue: Some(
            a.revenue
                .clone()
                .unwrap_or_else(|| a.instance.dir.join(io::REVENUE_FILE)),
        ),
    };
    let instance = io::read_instance(&paths, a.k, a.risk_levels)?;
    let check = validate_instance(&instance);
    if !check.feasible_necessary {
        for v in &check.violations {
            eprintln!("{}: {}", v.code.as_str(), v.message);
        }
        return Err(Error::Infeasible);
    }
    let options = SolveOptions {
        recompute: if a.lazy {
            Recompute::Lazy
        } else {
            Recompute::Strict
        },
        risk_reserve: !a.no_risk_reserve,
        priority: a
            .priority
            .as_deref()
            .map(|p| priority_indices(p, &instance))
            .transpose()?,
    };
    let (result, mut stats) = solve(&instance, a.solver, &options)?;
    if !is_feasible(&result.assignment, &instance) {
        return Err(Error::Infeasible);
    }
    if a.with_oracle {
        let exact = allocate_exact_flow(&instance)?;
        stats = stats.with_gap(exact.objective);
    }
    io::write_result(&result, &instance, &a.out)?;
    let json = stats.to_json();
    match &a.stats {
        Some(p) => {
            std::fs::write(p, json + "\n")?;
            println!(
                "{}: objective {} over {} customers, wrote {}",
                a.solver,
                result.objective,
                instance.n_customers(),
                a.out.display()
            );
        }
        None => println!("{json}"),
    }
    Ok(())
}

/// One benchmark row: a solver at one scale, averaged over the solved instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub scale: usize,
    pub solver: String,
    pub instances: usize,
    pub solved: usize,
    pub mean_objective: Option<f64>,
    pub mean_gap: Option<f64>,
    pub mean_wall_ms: Option<f64>,
}

#[derive(Debug, Serialize)]
struct BenchmarkReport<'a> {
    schema: u32,
    rows: &'a [BenchmarkRow],
}

const BENCH_SOLVERS: [SolverKind; 3] = [SolverKind::HaEq8, SolverKind::Manual, SolverKind::ExactFlow];

pub fn benchmark(a: &BenchmarkArgs) -> Result<Vec<BenchmarkRow>> {
    if a.scales.is_empty() || a.scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig(format!(
            "scales {:?} must be non-empty and strictly increasing",
            a.scales
        )));
    }
    if a.instances == 0 {
        return Err(Error::InvalidConfig("at least one instance per scale".into()));
    }
    let mut rows = Vec::new();
    for &scale in &a.scales {
        // Per solver: objectives, gaps and times of the runs that succeeded.
        let mut runs: Vec<Vec<(f64, Option<f64>, f64)>> = vec![Vec::new(); BENCH_SOLVERS.len()];
        for i in 0..a.instances {
            let config = GeneratorConfig {
                n_customers: scale,
                n_funds: a.m,
                k: a.k,
                n_samples: 0,
                seed: a.seed.wrapping_add(i as u64),
                ..GeneratorConfig::default()
            };
            config.validate()?;
            let (instance, _) = generate_instance(&config)?;
            let outcomes: Vec<Option<(f64, f64)>> = BENCH_SOLVERS
                .iter()
                .map(|&kind| {
                    if kind == SolverKind::ExactFlow && instance.k != 1 {
                        return Ok(None);
                    }
                    let options = SolveOptions {
                        priority: (kind == SolverKind::Manual).then(|| default_priority(&instance)),
                        ..SolveOptions::default()
                    };
                    let start = Instant::now();
                    match solve(&instance, kind, &options) {
                        Ok((r, _)) => Ok(Some((r.objective, start.elapsed().as_secs_f64() * 1e3))),
                        Err(e) if e.exit_code() == 4 => Ok(None),
                        Err(e) => Err(e),
                    }
                })
                .collect::<Result<_>>()?;
            let exact = outcomes[BENCH_SOLVERS.len() - 1].map(|(obj, _)| obj);
            for (slot, outcome) in runs.iter_mut().zip(&outcomes) {
                if let Some((obj, ms)) = *outcome {
                    slot.push((obj, exact.and_then(|e| optimality_gap(obj, e)), ms));
                }
            }
        }
        for (kind, ok) in BENCH_SOLVERS.iter().zip(&runs) {
            let mean =
                |vals: Vec<f64>| (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            let gaps: Vec<f64> = ok.iter().filter_map(|r| r.1).collect();
            rows.push(BenchmarkRow {
                scale,
                solver: kind.name().to_string(),
                instances: a.instances,
                solved: ok.len(),
                mean_objective: mean(ok.iter().map(|r| r.0).collect()),
                mean_gap: if gaps.len() == ok.len() { mean(gaps) } else { None },
                mean_wall_ms: mean(ok.iter().map(|r| r.2).collect()),
            });
        }
    }
    Ok(rows)
}

pub fn format_benchmark(rows: &[BenchmarkRow], format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(&BenchmarkReport {
                schema: STATS_SCHEMA,
                rows,
            })
            .expect("report serializes")
                + "\n"
        }
        ReportFormat::Csv => {
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
            let mut s = String::from("scale,solver,instances,solved,mean_objective,mean_gap,mean_wall_ms\n");
            for r in rows {
                s += &format!(
                    "{},{},{},{},{},{},{}\n",
                    r.scale,
                    r.solver,
                    r.instances,
                    r.solved,
                    opt(r.mean_objective),
                    opt(r.mean_gap),
                    opt(r.mean_wall_ms)
                );
            }
            s
        }
    }
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> Result<()> {
    let text = format_benchmark(&benchmark(a)?, a.format);
    match &a.out {
        Some(p) => {
            std::fs::write(p, text)?;
            println!("wrote {}", p.display());
        }
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

pub fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let saved = SavedModel::load(&a.model)?;
    let data = io::read_training_data(&a.data)?;
    let report = evaluate(&saved.model, &data)?;
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<OsString> {
        list.iter().map(OsString::from).collect()
    }

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn config_values_precede_user_flags() {
        let d = tempfile::tempdir().unwrap();
        let cfg = d.path().join("run.toml");
        std::fs::write(
            &cfg,
            "seed = 3\nlr = 0.5\n[simulate]\nn = 10\noracle_revenue = true\n",
        )
        .unwrap();
        let cfg_s = cfg.to_str().unwrap();
        let out =
            with_config_defaults(args(&["fund-alloc", "--config", cfg_s, "simulate", "--n", "20"])).unwrap();
        let got: Vec<String> = out.iter().map(|s| s.to_string_lossy().into_owned()).collect();
        assert_eq!(
            got,
            [
                "fund-alloc",
                "--config",
                cfg_s,
                "simulate",
                "--seed",
                "3",
                "--n",
                "10",
                "--oracle-revenue",
                "--n",
                "20"
            ]
        );
        let cli = Cli::try_parse_from(out).unwrap();
        match cli.command {
            Command::Simulate(s) => {
                assert_eq!((s.n, s.seed, s.oracle_revenue), (Some(20), 3, true));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_config_reports_position() {
        let d = tempfile::tempdir().unwrap();
        let cfg = d.path().join("run.toml");
        std::fs::write(&cfg, "seed = 3\nn = = 4\n").unwrap();
        let err = with_config_defaults(args(&[
            "fund-alloc",
            "--config",
            cfg.to_str().unwrap(),
            "simulate",
        ]))
        .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn scales_must_increase() {
        let a = BenchmarkArgs {
            scales: vec![100, 100],
            m: 4,
            k: 1,
            instances: 1,
            seed: 0,
            format: ReportFormat::Csv,
            out: None,
        };
        assert!(matches!(benchmark(&a), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn benchmark_shape() {
        let a = BenchmarkArgs {
            scales: vec![40, 80],
            m: 4,
            k: 1,
            instances: 2,
            seed: 1,
            format: ReportFormat::Csv,
            out: None,
        };
        let rows = benchmark(&a).unwrap();
        assert_eq!(rows.len(), 6);
        let exact: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.solver == "exact-flow").collect();
        assert!(exact.iter().all(|r| r.solved == 2 && r.mean_gap == Some(0.0)));
        let csv = format_benchmark(&rows, ReportFormat::Csv);
        assert_eq!(csv.lines().count(), 7);
        let json: serde_json::Value =
            serde_json::from_str(&format_benchmark(&rows, ReportFormat::Json)).unwrap();
        assert_eq!(json["schema"], 1);
        assert_eq!(json["rows"].as_array().unwrap().len(), 6);
    }

    #[test]
    fn priority_accepts_prefixed_ids() {
        let inst = crate::domain::worked_example();
        assert_eq!(priority_indices("f2,f1", &inst).unwrap(), vec![1, 0]);
        assert_eq!(priority_indices("1,2", &inst).unwrap(), vec![0, 1]);
        assert!(priority_indices("f3,f1", &inst).is_err());
    }
}
