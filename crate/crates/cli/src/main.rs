//! Command line front end: train solvers, run hedging backtests, merge
//! reports and check the exchange option closed form.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use osm_hedge::closed_form::ExchangeInputs;
use osm_hedge::experiment::{
    self, hedge_stage_from, margrabe_check, margrabe_row, merge_reports, preset, render_markdown, train_stage,
    write_merged_csv, ExperimentConfig, GreeksMode, OutputLayout, CATALOG, MARGRABE_HEADER,
};
use osm_hedge::hedging::{IndexSet, Strategy};
use osm_hedge::risk::{write_report_csv, ReportRow};
use osm_hedge::solver::Scheme;
use osm_hedge::Error;

#[derive(Parser)]
#[command(name = "osm-hedge", version, about = "Deep BSDE Greeks and delta-gamma hedging backtests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the portfolio solver and any instrument solvers.
    Train(TrainArgs),
    /// Run hedging backtests and write report, density and ledger files.
    Hedge(HedgeArgs),
    /// Merge report files into one table.
    Report(ReportArgs),
    /// Print exchange option quotes, or check them against finite differences.
    MargrabeCheck(MargrabeArgs),
    /// Inspect the built-in presets.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// Name and description of every preset.
    List,
    /// Print a preset as a JSON config document.
    Show { name: String },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Osm,
    Rdbdp,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Delta,
    DeltaVega,
    DeltaGamma,
    SecondOrder,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Delta => Strategy::Delta,
            StrategyArg::DeltaVega => Strategy::DeltaVega,
            StrategyArg::DeltaGamma => Strategy::DeltaGamma,
            StrategyArg::SecondOrder => Strategy::DeltaVegaSecondOrder,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum IndexSetArg {
    Empty,
    Diagonal,
    Upper,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum InstrumentsArg {
    /// Drop all hedging instruments.
    None,
    /// Keep the instruments of the config.
    Config,
}

/// Experiment selection and overrides shared by `train` and `hedge`.
#[derive(Args)]
struct ConfigArgs {
    /// Built-in preset name.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// JSON config document.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Experiment seed, overriding the config's.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: the config's, else runs/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Solver grid size N'. Rebalancing frequencies that do not divide it are dropped.
    #[arg(long)]
    grid: Option<usize>,
    /// Training scheme; only osm learns second derivatives.
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    /// Use analytic Black–Scholes Greeks instead of a trained artifact.
    #[arg(long)]
    closed_form_greeks: bool,
    /// Training batch size.
    #[arg(long)]
    paths_per_step: Option<usize>,
    /// SGD iterations at the last time step; earlier steps get a quarter.
    #[arg(long)]
    steps: Option<usize>,
    /// Batch normalization in every network.
    #[arg(long)]
    batch_norm: Option<bool>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct HedgeArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Artifact directory (default: <out>/artifact).
    #[arg(long)]
    artifact: Option<PathBuf>,
    /// Keep only the hedges using this strategy.
    #[arg(long, value_enum)]
    strategy: Option<StrategyArg>,
    /// Comma-separated rebalancing frequencies replacing the configured ones.
    #[arg(long, value_delimiter = ',')]
    rebalances: Option<Vec<usize>>,
    /// Second-order index set replacing the configured one.
    #[arg(long, value_enum)]
    index_set: Option<IndexSetArg>,
    #[arg(long, value_enum)]
    instruments: Option<InstrumentsArg>,
    /// Number of evaluation paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Dump per-path ledgers.
    #[arg(long)]
    record_ledgers: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files or directories searched for report.csv.
    inputs: Vec<PathBuf>,
    /// Merged CSV destination (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Markdown rendering destination.
    #[arg(long)]
    markdown: Option<PathBuf>,
}

#[derive(Args)]
struct MargrabeArgs {
    #[arg(long, default_value_t = 100.0)]
    s_k: f64,
    #[arg(long, default_value_t = 100.0)]
    s_j: f64,
    #[arg(long, default_value_t = 1.0)]
    ratio: f64,
    #[arg(long, default_value_t = 0.25)]
    sigma_k: f64,
    #[arg(long, default_value_t = 0.25)]
    sigma_j: f64,
    #[arg(long, default_value_t = 0.75, allow_negative_numbers = true)]
    rho: f64,
    #[arg(long, default_value_t = 0.02)]
    q_k: f64,
    #[arg(long, default_value_t = 0.02)]
    q_j: f64,
    #[arg(long, default_value_t = 4.0)]
    tau: f64,
    /// Instead of quoting, check this many random draws against finite differences.
    #[arg(long)]
    draws: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn load(args: &ConfigArgs) -> osm_hedge::Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = match (&args.preset, &args.config) {
        (Some(name), None) => preset(name)?,
        (None, Some(path)) => {
            let text = fs::read_to_string(path)?;
            let cfg: ExperimentConfig = serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            cfg
        }
        _ => return Err(Error::Config("pass exactly one of --preset or --config".into())),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.grid {
        cfg.grid_steps = n;
        for plan in &mut cfg.hedges {
            plan.rebalances.retain(|k| *k > 0 && n % k == 0);
        }
        cfg.hedges.retain(|p| !p.rebalances.is_empty());
    }
    if let Some(s) = args.scheme {
        cfg.train.scheme = match s {
            SchemeArg::Osm => Scheme::Osm,
            SchemeArg::Rdbdp => Scheme::Rdbdp,
        };
    }
    if args.closed_form_greeks {
        cfg.greeks = GreeksMode::ClosedForm;
    }
    if let Some(b) = args.paths_per_step {
        cfg.train.batch = b;
    }
    if let Some(s) = args.steps {
        cfg.train.iters_last = s;
        cfg.train.iters = (s / 4).max(1);
    }
    if let Some(bn) = args.batch_norm {
        cfg.train.batch_norm = bn;
    }
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name));
    Ok((cfg, out))
}

fn train(args: TrainArgs) -> osm_hedge::Result<()> {
    let (cfg, out) = load(&args.config)?;
    cfg.validate()?;
    let summary = train_stage(&cfg, &out)?;
    let mut w = io::stdout().lock();
    writeln!(w, "output: {}", out.display())?;
    if let Some(hash) = &summary.content_hash {
        writeln!(w, "artifact: {} ({hash})", OutputLayout::new(&out).artifact().display())?;
    }
    for (name, hash) in &summary.instruments {
        writeln!(w, "instrument {name}: {hash}")?;
    }
    let prices: Vec<String> = summary.initial_prices.iter().map(|p| format!("{p:.6}")).collect();
    writeln!(w, "initial prices: {}", prices.join(" "))?;
    Ok(())
}

fn hedge(args: HedgeArgs) -> osm_hedge::Result<()> {
    let (mut cfg, out) = load(&args.config)?;
    if let Some(s) = args.strategy {
        let s = Strategy::from(s);
        cfg.hedges.retain(|p| p.strategy == s);
        if cfg.hedges.is_empty() {
            return Err(Error::Config(format!("the config has no {} hedge", s.as_str())));
        }
    }
    for plan in &mut cfg.hedges {
        if let Some(r) = &args.rebalances {
            plan.rebalances = r.clone();
        }
        if let Some(i) = args.index_set {
            plan.index_set = match i {
                IndexSetArg::Empty => IndexSet::Empty,
                IndexSetArg::Diagonal => IndexSet::Diagonal,
                IndexSetArg::Upper => IndexSet::Upper,
                IndexSetArg::Full => IndexSet::Full,
            };
        }
        if let Some(InstrumentsArg::None) = args.instruments {
            plan.instruments.clear();
        }
    }
    if let Some(n) = args.paths {
        cfg.evaluation.n_paths = n;
    }
    cfg.evaluation.record_ledgers |= args.record_ledgers;
    let artifact = args.artifact.unwrap_or_else(|| OutputLayout::new(&out).artifact());
    let rows: Vec<ReportRow> = hedge_stage_from(&cfg, &out, &artifact)?;
    write_report_csv(&rows, cfg.seed, &cfg.name, io::stdout().lock())?;
    Ok(())
}

fn report(args: ReportArgs) -> osm_hedge::Result<()> {
    let rows = merge_reports(&args.inputs)?;
    match &args.out {
        Some(p) => write_merged_csv(&rows, BufWriter::new(File::create(p)?))?,
        None => write_merged_csv(&rows, io::stdout().lock())?,
    }
    if let Some(p) = &args.markdown {
        fs::write(p, render_markdown(&rows))?;
    }
    Ok(())
}

fn margrabe(args: MargrabeArgs) -> osm_hedge::Result<bool> {
    let mut w = io::stdout().lock();
    if let Some(draws) = args.draws {
        let c = margrabe_check(draws, args.seed)?;
        writeln!(w, "draws,max_fd_error,max_symmetry_error,max_homogeneity_error,passed")?;
        writeln!(w, "{},{:e},{:e},{:e},{}", c.draws, c.max_fd_error, c.max_symmetry_error, c.max_homogeneity_error, c.passed())?;
        return Ok(c.passed());
    }
    let p = ExchangeInputs {
        s_k: args.s_k,
        s_j: args.s_j,
        ratio: args.ratio,
        sigma_k: args.sigma_k,
        sigma_j: args.sigma_j,
        rho: args.rho,
        q_k: args.q_k,
        q_j: args.q_j,
        tau: args.tau,
    };
    writeln!(w, "{MARGRABE_HEADER}")?;
    writeln!(w, "{}", margrabe_row(&p)?)?;
    Ok(true)
}

fn presets(action: PresetAction) -> osm_hedge::Result<()> {
    let mut w = io::stdout().lock();
    match action {
        PresetAction::List => {
            for (name, about) in CATALOG {
                writeln!(w, "{name:<22} {about}")?;
            }
        }
        PresetAction::Show { name } => writeln!(w, "{}", experiment::preset(&name)?.to_json()?)?,
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numeric() {
        3
    } else if matches!(e, Error::Io(_)) {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Hedge(a) => hedge(a),
        Command::Report(a) => report(a),
        Command::MargrabeCheck(a) => match margrabe(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(3),
            Err(e) => Err(e),
        },
        Command::Presets { action } => presets(action),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
