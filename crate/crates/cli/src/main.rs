mod settings;
mod table;

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fdiv_bounds::config::{KPolicy, Mode, RunConfig};
use fdiv_bounds::experiment::{self, AuditConfig, FigureConfig};
use fdiv_bounds::simulate::SyntheticScm;
use fdiv_bounds::{Divergence, Phi};

use settings::{overlay, ConfigFile, SimulateConfig};

#[derive(Parser)]
#[command(name = "fdiv-bounds", version, about = "Sharp causal bounds from propensity-driven f-divergence radii")]
struct Cli {
    /// Worker threads for the per-divergence jobs.
    #[arg(long, global = true, env = "FDIV_BOUNDS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from the synthetic confounded model.
    Simulate(SimulateArgs),
    /// Estimate bounds for a CSV dataset.
    Bounds(BoundsArgs),
    /// Check the divergence radius and the dual solver against exact oracles.
    Audit(AuditArgs),
    /// Produce the data behind one of the benchmark figures.
    Figure(FigureArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    scm_seed: Option<u64>,
    /// TOML file; keys under [simulate] override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Marginal,
    Conditional,
}

#[derive(Clone, Copy, ValueEnum)]
enum KPolicyArg {
    PerPoint,
    Global,
}

/// Flags mirroring the run settings; a config file given with `--config` overrides them.
#[derive(Args)]
struct RunFlags {
    /// TOML file with run settings; its values take precedence over flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated subset of kl, hellinger, chisq, tv, js.
    #[arg(long, value_delimiter = ',')]
    divergences: Option<Vec<Divergence>>,
    /// `identity` or `indicator:<threshold>`.
    #[arg(long, value_parser = parse_phi)]
    phi: Option<Phi>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    k_policy: Option<KPolicyArg>,
    /// Number of data rows used as query points in conditional mode.
    #[arg(long)]
    query_points: Option<usize>,
    /// Drop the propensity correction from the training risk.
    #[arg(long)]
    no_debias: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    run: RunFlags,
    /// JSON report.
    #[arg(long, default_value = "report.json")]
    report: PathBuf,
    /// Plot-ready CSV of (arm, e_hat, label, lo, up) sorted by e_hat.
    #[arg(long, default_value = "plot.csv")]
    plot: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    /// TOML file; keys under [audit] override the flags.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Random discrete laws per divergence in the duality check.
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Scale applied to every radius; values below one must make the audit fail.
    #[arg(long, hide = true)]
    radius_scale: Option<f64>,
    /// Also write the table as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FigureName {
    Fig2a,
    Fig2b,
    Fig2c,
}

#[derive(Args)]
struct FigureArgs {
    #[arg(value_enum)]
    name: FigureName,
    #[command(flatten)]
    run: RunFlags,
    /// Sample size of the single-run figure.
    #[arg(long)]
    n: Option<usize>,
    /// Comma-separated sample sizes of the multi-run figures.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    mc_draws: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    scm_seed: Option<u64>,
    #[arg(long, short)]
    out: PathBuf,
    /// Per-replicate rows of fig2b.
    #[arg(long)]
    replicates: Option<PathBuf>,
}

fn parse_phi(s: &str) -> Result<Phi, String> {
    match s.split_once(':') {
        None if s == "identity" => Ok(Phi::Identity),
        Some(("indicator", t)) => {
            t.parse().map(|threshold| Phi::Indicator { threshold }).map_err(|_| format!("bad threshold '{t}'"))
        }
        _ => Err(format!("expected 'identity' or 'indicator:<threshold>', got '{s}'")),
    }
}

impl RunFlags {
    /// Flags applied to the defaults, then the config file on top.
    fn resolve(&self) -> Result<(RunConfig, ConfigFile)> {
        let mut cfg = RunConfig::default();
        if let Some(d) = &self.divergences {
            cfg.divergences = d.clone();
        }
        if let Some(p) = &self.phi {
            cfg.phi = p.clone();
        }
        if let Some(m) = self.mode {
            cfg.mode = match m {
                ModeArg::Marginal => Mode::Marginal,
                ModeArg::Conditional => Mode::Conditional,
            };
        }
        if let Some(k) = self.k_policy {
            cfg.k_policy = match k {
                KPolicyArg::PerPoint => KPolicy::PerPoint,
                KPolicyArg::Global => KPolicy::Global,
            };
        }
        cfg.folds = self.folds.unwrap_or(cfg.folds);
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.query_points = self.query_points.unwrap_or(cfg.query_points);
        cfg.debias &= !self.no_debias;
        cfg.optim.epochs = self.epochs.unwrap_or(cfg.optim.epochs);
        cfg.optim.lr = self.lr.unwrap_or(cfg.optim.lr);
        cfg.optim.patience = self.patience.unwrap_or(cfg.optim.patience);
        let file = ConfigFile::load(self.config.as_deref())?;
        let cfg = overlay(&cfg, &file.run)?;
        cfg.validate()?;
        Ok((cfg, file))
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let mut cfg = SimulateConfig::default();
    cfg.n = args.n.unwrap_or(cfg.n);
    cfg.d = args.d.unwrap_or(cfg.d);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.scm_seed = args.scm_seed.unwrap_or(cfg.scm_seed);
    let file = ConfigFile::load(args.config.as_deref())?;
    let cfg: SimulateConfig = overlay(&cfg, &file.section("simulate")?)?;
    if cfg.n == 0 {
        bail!("n must be positive");
    }
    let data = SyntheticScm::new(cfg.d, cfg.scm_seed).generate(cfg.n, cfg.seed);
    table::write_dataset(&args.out, &data)?;
    log::info!("wrote {} rows with {} covariates to {}", cfg.n, cfg.d, args.out.display());
    Ok(())
}

fn bounds(args: BoundsArgs) -> Result<()> {
    let (cfg, _) = args.run.resolve()?;
    let data = table::read_dataset(&args.data)?;
    let report = experiment::run_bounds(&data, &cfg)?;
    table::write_json(&args.report, &report)?;
    table::write_rows(&args.plot, &experiment::plot_rows(&report))?;
    log::info!("wrote {} and {}", args.report.display(), args.plot.display());
    Ok(())
}

fn audit(args: AuditArgs) -> Result<()> {
    let mut cfg = AuditConfig::default();
    cfg.duality_instances = args.instances.unwrap_or(cfg.duality_instances);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.radius_scale = args.radius_scale.unwrap_or(cfg.radius_scale);
    let file = ConfigFile::load(args.config.as_deref())?;
    let cfg: AuditConfig = overlay(&cfg, &file.section("audit")?)?;
    let report = experiment::run_audit(&cfg, &Divergence::ALL)?;
    println!("{:<10} {:>10} {:>10} {:>12} {:>10} {:>12}  result", "divergence", "dpi_checks", "violations", "min_slack", "instances", "max_gap");
    for r in &report.rows {
        println!(
            "{:<10} {:>10} {:>10} {:>12.3e} {:>10} {:>12.3e}  {}",
            r.divergence.name(),
            r.dpi_checks,
            r.dpi_violations,
            r.dpi_min_slack,
            r.duality_checks,
            r.duality_max_gap,
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    if let Some(out) = &args.out {
        table::write_json(out, &report)?;
    }
    if !report.pass {
        bail!("audit failed");
    }
    Ok(())
}

fn figure(args: FigureArgs) -> Result<()> {
    let (mut cfg, file) = args.run.resolve()?;
    let mut fig = FigureConfig::default();
    fig.n = args.n.unwrap_or(fig.n);
    fig.sizes = args.sizes.clone().unwrap_or(fig.sizes);
    fig.replications = args.replications.unwrap_or(fig.replications);
    fig.points = args.points.unwrap_or(fig.points);
    fig.mc_draws = args.mc_draws.unwrap_or(fig.mc_draws);
    fig.d = args.d.unwrap_or(fig.d);
    fig.scm_seed = args.scm_seed.unwrap_or(fig.scm_seed);
    let fig: FigureConfig = overlay(&fig, &file.section("figure")?)?;
    if fig.sizes.is_empty() || fig.replications == 0 || fig.points == 0 {
        bail!("figure runs need at least one size, replicate and point");
    }
    let scm = SyntheticScm::new(fig.d, fig.scm_seed);
    match args.name {
        FigureName::Fig2a => table::write_rows(&args.out, &experiment::fig2a(&scm, &fig, &cfg)?)?,
        FigureName::Fig2b => {
            let reps = experiment::fig2b_replicates(&scm, &fig, &cfg)?;
            if let Some(p) = &args.replicates {
                table::write_rows(p, &reps)?;
            }
            table::write_rows(&args.out, &experiment::fig2b_summary(&reps))?;
        }
        FigureName::Fig2c => {
            // an identity functional has unbounded population bounds here
            if cfg.phi == Phi::Identity {
                log::info!("fig2c uses the indicator functional 1(y <= 1)");
                cfg.phi = Phi::Indicator { threshold: 1.0 };
            }
            table::write_rows(&args.out, &experiment::fig2c(&scm, &fig, &cfg)?)?;
        }
    }
    log::info!("wrote {}", args.out.display());
    Ok(())
}

fn init_threads(threads: Option<usize>) -> Result<()> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        bail!("thread count must be positive");
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot start the worker pool")?;
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    init_threads(cli.threads)?;
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Bounds(a) => bounds(a),
        Command::Audit(a) => audit(a),
        Command::Figure(a) => figure(a),
    }
}
