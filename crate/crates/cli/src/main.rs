use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use carbon_ppi::InfoMode;
use carbon_ppi_cli::commands::{self, Context};
use carbon_ppi_cli::config::{self, PreferenceSpec};
use carbon_ppi_cli::{load_config, CliError, ScenarioConfig};

#[derive(Parser)]
#[command(name = "carbon-ppi", version, about = "Carbon-penalised portfolio insurance under partial information")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Scenario file; the bundled benchmark market is used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    paths: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<InfoMode>,
    /// Replaces the configured preference list (needs --epsilon too, which defaults to 0).
    #[arg(long, global = true)]
    delta: Option<f64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the coefficient ODEs and write them as CSV.
    Solve,
    /// Monte Carlo simulation of the optimal strategy.
    Simulate,
    /// One factor path next to its filter estimate.
    FilterDemo,
    /// Loss of utility over time.
    LossCurve,
    /// Efficiency against carbon aversion.
    EfficiencyCurve,
    /// Sufficient-condition report as JSON.
    Admissibility,
    /// Regenerate a table or figure data set.
    Reproduce {
        #[arg(long, conflicts_with = "figure", required_unless_present = "figure", value_parser = clap::value_parser!(u8).range(3..=4))]
        table: Option<u8>,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=6))]
        figure: Option<u8>,
    },
}

fn parse_mode(s: &str) -> Result<InfoMode, String> {
    match s {
        "full" => Ok(InfoMode::Full),
        "partial" => Ok(InfoMode::Partial),
        _ => Err(format!("expected full or partial, got {s}")),
    }
}

fn configure(g: &Global) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &g.config {
        Some(p) => load_config(p)?,
        None => config::table1(),
    };
    let s = &mut cfg.simulation;
    if let Some(v) = g.seed {
        s.seed = v;
    }
    if let Some(v) = g.paths {
        s.n_paths = v;
    }
    if let Some(v) = g.dt {
        s.dt = v;
    }
    if let Some(v) = g.mode {
        s.modes = vec![v];
    }
    if let Some(v) = &g.out {
        cfg.output.dir = v.clone();
    }
    match (g.delta, g.epsilon) {
        (Some(delta), eps) => {
            cfg.preferences = vec![PreferenceSpec {
                delta,
                epsilon: eps.unwrap_or(0.0),
            }]
        }
        (None, Some(eps)) => cfg.preferences.iter_mut().for_each(|p| p.epsilon = eps),
        (None, None) => {}
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, ctx: &mut Context) -> Result<(), CliError> {
    match &cli.command {
        Command::Solve => commands::solve(ctx),
        Command::Simulate => commands::simulate(ctx),
        Command::FilterDemo => commands::filter_demo(ctx, "filter_demo.csv"),
        Command::LossCurve => commands::loss_curve(ctx),
        Command::EfficiencyCurve => commands::efficiency_curve(ctx),
        Command::Admissibility => {
            for (p, full, partial) in commands::admissibility(ctx)? {
                println!(
                    "delta={} epsilon={}: full information {}, partial information {}",
                    p.delta,
                    p.epsilon,
                    if full { "admissible" } else { "not shown admissible" },
                    if partial { "admissible" } else { "not shown admissible" }
                );
            }
            Ok(())
        }
        Command::Reproduce { table, figure } => match (table, figure) {
            (Some(3), _) => commands::table3(ctx),
            (Some(4), _) => commands::table4(ctx),
            (_, Some(k)) => commands::figure(ctx, *k),
            _ => Err(CliError::Validation("choose --table 3|4 or --figure 1..6".into())),
        },
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match configure(&cli.global) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code());
        }
    };
    let mut ctx = Context::new(cfg);
    match run(&cli, &mut ctx) {
        Ok(()) => {
            for p in ctx.out.written() {
                println!("wrote {}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            ctx.out.discard();
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
