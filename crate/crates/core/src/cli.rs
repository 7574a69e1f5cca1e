//! Command-line front end.
//!
//! Exit codes: 0 on success, 2 for bad input, 3 when a computation fails.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::asymptotics::{self, AsymptoticRegime, RegimeKind};
use crate::dist::InterarrivalDistribution;
use crate::error::Error;
use crate::mcoracle;
use crate::model::QueueModel;
use crate::recurrence::{self, LossResult};
use crate::sim::{self, SimConfig, SimEstimate};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Load of the comparison table.
pub const TABLE_RHO: f64 = 0.999;
pub const TABLE_N: [usize; 10] = [10, 15, 20, 25, 30, 35, 40, 45, 50, 100];

#[derive(Debug, Parser)]
#[command(
    name = "lossq",
    version,
    about = "Loss probabilities of GI/M/m/n queues"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact loss probability from the recurrences.
    Exact(ModelArgs),
    /// Asymptotic estimate of the loss probability.
    Asymptotic(AsymptoticArgs),
    /// Loss probability from the embedded Markov chain.
    Oracle(ModelArgs),
    /// Simulated loss probability with a 95% confidence interval.
    Simulate(SimulateArgs),
    /// D/M/1/n and D/M/2/n at load 0.999: heavy-traffic estimate,
    /// simulation and exact values.
    Table(TableArgs),
    /// Exact, oracle and asymptotic values side by side.
    Compare(ModelArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Human,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegimeChoice {
    Auto,
    Heavy,
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value = "human")]
    pub format: Format,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Interarrival distribution, e.g. `det:a=1.0` or `erlang:k=2,rate=2.0`.
    #[arg(long)]
    pub dist: String,
    /// Service rate of each server.
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    /// Number of servers.
    #[arg(long, default_value_t = 1)]
    pub m: usize,
    /// Number of waiting places.
    #[arg(long, default_value_t = 0)]
    pub n: usize,
    /// Rescale the interarrival distribution to this load.
    #[arg(long)]
    pub rho: Option<f64>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct AsymptoticArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_enum, default_value = "auto")]
    pub regime: RegimeChoice,
    /// Heavy-traffic constant `C = εn`; defaults to `(1 - ρ) n`.
    #[arg(long = "C")]
    pub c: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimFlags {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Arrivals per replication, warmup included.
    #[arg(long, default_value_t = sim::DEFAULT_ARRIVALS)]
    pub arrivals: u64,
    #[arg(long, default_value_t = sim::DEFAULT_WARMUP)]
    pub warmup: u64,
    #[arg(long, default_value_t = sim::DEFAULT_REPLICATIONS)]
    pub reps: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sim: SimFlags,
}

#[derive(Debug, Args)]
pub struct TableArgs {
    /// Leave the simulated columns empty.
    #[arg(long)]
    pub no_sim: bool,
    #[command(flatten)]
    pub sim: SimFlags,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub estimate: SimEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub model: QueueModel,
    pub exact: f64,
    pub oracle: f64,
    pub abs_diff: f64,
    pub rel_diff: f64,
    pub regime: RegimeKind,
    /// Fixed-load asymptotic estimate, when the regime defines one.
    pub asymptotic: Option<f64>,
    pub asymptotic_rel_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub n: usize,
    pub theoretical: f64,
    pub sim_m1: f64,
    pub sim_m2: f64,
    pub exact_m1: f64,
    pub exact_m2: f64,
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> i32 {
        match self {
            Failure::Lib(e) if !e.is_usage() => EXIT_NUMERIC,
            _ => EXIT_USAGE,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Lib(e) => write!(f, "{e}"),
            Failure::Io(e) => f.write_str(e),
        }
    }
}

impl ModelArgs {
    pub fn build(&self) -> crate::Result<QueueModel> {
        let dist: InterarrivalDistribution = self.dist.parse()?;
        let model = QueueModel::new(self.m, self.n, self.mu, dist)?;
        match self.rho {
            Some(rho) => model.with_load(rho),
            None => Ok(model),
        }
    }
}

/// D/M/m/n at load 0.999 with `μ = 1`.
pub fn table_model(m: usize, n: usize) -> crate::Result<QueueModel> {
    let dist = InterarrivalDistribution::deterministic(1.0)?;
    QueueModel::new(m, n, 1.0, dist)?.with_load(TABLE_RHO)
}

/// Heavy-traffic estimate for the table row `n`.
pub fn table_theoretical(n: usize) -> crate::Result<f64> {
    let q = table_model(1, n)?;
    let rho2 = q.dist().moments(q.mu())?.rho2;
    asymptotics::theorem2_estimate(rho2, 1.0 - TABLE_RHO, n)
}

/// All table rows, optionally simulating.
pub fn table_rows(sim: Option<&SimFlags>) -> crate::Result<Vec<TableRow>> {
    let n_max = *TABLE_N.iter().max().unwrap();
    let mut exact = Vec::new();
    for m in [1, 2] {
        let ks = crate::kernel::KernelSet::build(&table_model(m, n_max)?)?;
        exact.push(recurrence::loss_curve(&ks)?);
    }
    TABLE_N
        .iter()
        .map(|&n| {
            let simulated = |m: usize| -> crate::Result<f64> {
                match sim {
                    None => Ok(f64::NAN),
                    Some(flags) => {
                        let cfg = sim_config(table_model(m, n)?, flags);
                        Ok(sim::simulate(&cfg)?.p_hat)
                    }
                }
            };
            Ok(TableRow {
                n,
                theoretical: table_theoretical(n)?,
                sim_m1: simulated(1)?,
                sim_m2: simulated(2)?,
                exact_m1: exact[0][n],
                exact_m2: exact[1][n],
            })
        })
        .collect()
}

fn sim_config(model: QueueModel, flags: &SimFlags) -> SimConfig {
    SimConfig {
        model,
        arrivals_total: flags.arrivals,
        warmup_arrivals: flags.warmup,
        replications: flags.reps,
        seed: flags.seed,
    }
}

pub fn compare(model: &QueueModel) -> crate::Result<CompareReport> {
    let exact = recurrence::loss_gimmn(model)?.p;
    let oracle = mcoracle::loss_oracle(model)?.p;
    let regime = AsymptoticRegime::classify(model)?;
    let asymptotic = asymptotics::theorem1_estimate(model, &regime)
        .ok()
        .map(|r| r.p);
    Ok(CompareReport {
        model: model.clone(),
        exact,
        oracle,
        abs_diff: (exact - oracle).abs(),
        rel_diff: (exact - oracle).abs() / oracle,
        regime: regime.kind,
        asymptotic,
        asymptotic_rel_err: asymptotic.map(|a| (a - exact) / exact),
    })
}

fn csv_text(header: &[&str], rows: &[Vec<String>]) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(vec![]);
    let io = |e: csv::Error| Failure::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}

fn json_text<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data");
    s.push('\n');
    s
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn describe(q: &QueueModel) -> String {
    format!(
        "m={} n={} mu={} dist={} rho={}",
        q.m(),
        q.n(),
        q.mu(),
        q.dist(),
        q.load()
    )
}

fn render_loss(r: &LossResult, format: Format) -> Result<String, Failure> {
    Ok(match format {
        Format::Json => json_text(r),
        Format::Csv => csv_text(
            &[
                "dist", "m", "n", "mu", "rho", "method", "p", "pi_log", "ci95",
            ],
            &[vec![
                r.model.dist().to_string(),
                r.model.m().to_string(),
                r.model.n().to_string(),
                r.model.mu().to_string(),
                r.model.load().to_string(),
                r.method.to_string(),
                r.p.to_string(),
                opt(r.pi_log),
                opt(r.diagnostics.ci_halfwidth),
            ]],
        )?,
        Format::Human => {
            let mut s = String::new();
            let _ = writeln!(s, "model    {}", describe(&r.model));
            let _ = writeln!(s, "method   {}", r.method);
            let _ = writeln!(s, "p        {:.10e}", r.p);
            if let Some(ci) = r.diagnostics.ci_halfwidth {
                let _ = writeln!(s, "ci95     ±{ci:.3e}");
            }
            if let Some(reg) = &r.diagnostics.regime {
                let _ = writeln!(s, "regime   {:?}", reg.kind);
                if let Some(sig) = reg.sigma_m {
                    let _ = writeln!(s, "sigma_m  {sig}");
                }
            }
            s
        }
    })
}

fn render_sim(report: &SimReport, format: Format) -> Result<String, Failure> {
    Ok(match format {
        Format::Json => json_text(report),
        Format::Csv => csv_text(
            &sim::CSV_HEADER,
            &[sim::csv_record(&report.config, &report.estimate)],
        )?,
        Format::Human => {
            let e = &report.estimate;
            format!(
                "model    {}\nmethod   simulation\np        {:.6e} ± {:.2e} (95%)\nstderr   {:.3e}\nlosses   {} of {} arrivals\n",
                describe(&report.config.model),
                e.p_hat,
                e.ci95_halfwidth,
                e.stderr,
                e.losses,
                e.arrivals_counted
            )
        }
    })
}

fn render_compare(c: &CompareReport, format: Format) -> Result<String, Failure> {
    Ok(match format {
        Format::Json => json_text(c),
        Format::Csv => csv_text(
            &[
                "dist",
                "m",
                "n",
                "mu",
                "rho",
                "exact",
                "oracle",
                "abs_diff",
                "rel_diff",
                "regime",
                "asymptotic",
                "asymptotic_rel_err",
            ],
            &[vec![
                c.model.dist().to_string(),
                c.model.m().to_string(),
                c.model.n().to_string(),
                c.model.mu().to_string(),
                c.model.load().to_string(),
                c.exact.to_string(),
                c.oracle.to_string(),
                c.abs_diff.to_string(),
                c.rel_diff.to_string(),
                format!("{:?}", c.regime),
                opt(c.asymptotic),
                opt(c.asymptotic_rel_err),
            ]],
        )?,
        Format::Human => {
            let mut s = String::new();
            let _ = writeln!(s, "model       {}", describe(&c.model));
            let _ = writeln!(s, "exact       {:.15e}", c.exact);
            let _ = writeln!(s, "oracle      {:.15e}", c.oracle);
            let _ = writeln!(
                s,
                "difference  {:.3e} (relative {:.3e})",
                c.abs_diff, c.rel_diff
            );
            let _ = writeln!(s, "regime      {:?}", c.regime);
            if let (Some(a), Some(e)) = (c.asymptotic, c.asymptotic_rel_err) {
                let _ = writeln!(s, "asymptotic  {a:.6e} (relative error {e:+.3e})");
            }
            s
        }
    })
}

fn render_table(rows: &[TableRow], format: Format) -> Result<String, Failure> {
    let cell = |x: f64| {
        if x.is_nan() {
            String::new()
        } else {
            format!("{x:.6}")
        }
    };
    Ok(match format {
        Format::Json => json_text(&rows),
        Format::Csv => csv_text(
            &[
                "n",
                "theoretical",
                "sim m=1",
                "sim m=2",
                "exact m=1",
                "exact m=2",
            ],
            &rows
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        format!("{:.4}", r.theoretical),
                        cell(r.sim_m1),
                        cell(r.sim_m2),
                        cell(r.exact_m1),
                        cell(r.exact_m2),
                    ]
                })
                .collect::<Vec<_>>(),
        )?,
        Format::Human => {
            let mut s = format!(
                "{:>4}  {:>11}  {:>9}  {:>9}  {:>9}  {:>9}\n",
                "n", "theoretical", "sim m=1", "sim m=2", "exact m=1", "exact m=2"
            );
            for r in rows {
                let _ = writeln!(
                    s,
                    "{:>4}  {:>11.4}  {:>9}  {:>9}  {:>9}  {:>9}",
                    r.n,
                    r.theoretical,
                    cell(r.sim_m1),
                    cell(r.sim_m2),
                    cell(r.exact_m1),
                    cell(r.exact_m2)
                );
            }
            s
        }
    })
}

fn emit(text: &str, out: &OutputArgs) -> Result<(), Failure> {
    match &out.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Io(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Exact(a) => {
            let q = a.build()?;
            let r = recurrence::loss_gimmn(&q)?;
            emit(&render_loss(&r, a.output.format)?, &a.output)
        }
        Command::Oracle(a) => {
            let q = a.build()?;
            let r = mcoracle::loss_oracle(&q)?;
            emit(&render_loss(&r, a.output.format)?, &a.output)
        }
        Command::Asymptotic(a) => {
            let q = a.model.build()?;
            let regime = match a.regime {
                RegimeChoice::Auto => AsymptoticRegime::classify(&q)?,
                RegimeChoice::Heavy => AsymptoticRegime::heavy_traffic(&q, a.c)?,
            };
            let r = asymptotics::theorem1_estimate(&q, &regime)?;
            emit(&render_loss(&r, a.model.output.format)?, &a.model.output)
        }
        Command::Simulate(a) => {
            let q = a.model.build()?;
            let config = sim_config(q, &a.sim);
            let estimate = sim::simulate(&config)?;
            let report = SimReport { config, estimate };
            emit(
                &render_sim(&report, a.model.output.format)?,
                &a.model.output,
            )
        }
        Command::Table(a) => {
            let rows = table_rows((!a.no_sim).then_some(&a.sim))?;
            emit(&render_table(&rows, a.output.format)?, &a.output)
        }
        Command::Compare(a) => {
            let q = a.build()?;
            let c = compare(&q)?;
            emit(&render_compare(&c, a.output.format)?, &a.output)
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            log::debug!("command failed: {f:?}");
            eprintln!("error: {f}");
            f.code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_all_subcommands() {
        for args in [
            vec!["lossq", "exact", "--dist", "exp:rate=1"],
            vec![
                "lossq", "oracle", "--dist", "det:a=1", "--m", "2", "--n", "3", "--format", "json",
            ],
            vec![
                "lossq",
                "asymptotic",
                "--dist",
                "det:a=1",
                "--regime",
                "heavy",
                "--C",
                "0.01",
            ],
            vec![
                "lossq",
                "simulate",
                "--dist",
                "exp:rate=1",
                "--seed",
                "3",
                "--arrivals",
                "10",
                "--reps",
                "2",
            ],
            vec!["lossq", "table", "--format", "csv", "--out", "t.csv"],
            vec!["lossq", "compare", "--dist", "exp:rate=1", "--rho", "0.5"],
        ] {
            Cli::try_parse_from(&args).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        }
    }

    #[test]
    fn table_theoretical_column() {
        let want = [
            0.0501, 0.0334, 0.0251, 0.0200, 0.0167, 0.0143, 0.0125, 0.0111, 0.0100, 0.0045,
        ];
        for (n, w) in TABLE_N.iter().zip(want) {
            assert!((table_theoretical(*n).unwrap() - w).abs() <= 2e-4, "n={n}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["lossq", "exact", "--dist", "exp:rate=1"]), EXIT_OK);
        assert_eq!(run(["lossq", "exact", "--dist", "nope"]), EXIT_USAGE);
        assert_eq!(
            run(["lossq", "exact", "--dist", "exp:rate=1", "--m", "0"]),
            EXIT_USAGE
        );
        assert_eq!(run(["lossq", "bogus"]), EXIT_USAGE);
        // Critical load with no waiting room has no fixed-load estimate.
        assert_eq!(
            run(["lossq", "asymptotic", "--dist", "exp:rate=1", "--n", "0"]),
            EXIT_USAGE
        );
    }
}
