use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use znav_cli::commands::{self, CommandOutput};
use znav_cli::config::{parse_grid, OutputFormat, RunConfig};
use znav_cli::output::emit;
use znav_cli::CliError;

#[derive(Parser)]
#[command(name = "znav", version, about = "Navigation geodesics, curvature and conjugate points on surfaces")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Run configuration (INI).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output format: json or csv.
    #[arg(long, global = true)]
    format: Option<String>,
    /// Write data here instead of standard output.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Quadrature or sampling grid as NX,NY,NT.
    #[arg(long, global = true, allow_hyphen_values = true)]
    grid: Option<String>,
    /// Integration horizon.
    #[arg(long, global = true)]
    tmax: Option<f64>,
    /// Worker thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Args)]
struct StartArgs {
    #[arg(long, allow_negative_numbers = true)]
    theta: Option<f64>,
    #[arg(long = "start-x", allow_negative_numbers = true)]
    start_x: Option<f64>,
    #[arg(long = "start-y", allow_negative_numbers = true)]
    start_y: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one extremal.
    Extremal(StartArgs),
    /// Curvature on a grid of fiber points.
    Curvature,
    /// First conjugate time along one extremal, or a sweep over fiber angles.
    Conjugate {
        #[command(flatten)]
        start: StartArgs,
        /// theta:N
        #[arg(long)]
        sweep: Option<String>,
    },
    /// Construct and certify the dual problem.
    Dualize {
        /// Also write a config that runs the dual problem.
        #[arg(long = "emit-config")]
        emit_config: Option<String>,
    },
    /// Integral identity and inequality over the unit cotangent bundle.
    GaussBonnet,
    /// Run the bundled verification suite.
    Verify,
}

fn apply_overrides(cfg: &mut RunConfig, g: &Global) -> Result<(), CliError> {
    if let Some(f) = &g.format {
        cfg.format = f.parse::<OutputFormat>()?;
    }
    if let Some(o) = &g.out {
        cfg.output_path = Some(o.clone());
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(grid) = &g.grid {
        cfg.grid = parse_grid(grid)?;
    }
    if let Some(t) = g.tmax {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Config(format!("--tmax must be positive, got {t}")));
        }
        cfg.t_max = t;
    }
    Ok(())
}

fn apply_start(cfg: &mut RunConfig, s: &StartArgs) {
    if let Some(v) = s.start_x {
        cfg.start.q.x = v;
    }
    if let Some(v) = s.start_y {
        cfg.start.q.y = v;
    }
    if let Some(v) = s.theta {
        cfg.start.theta = v;
    }
}

fn run(cli: Cli) -> Result<CommandOutput, CliError> {
    let g = &cli.global;
    if let Some(n) = g.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))?;
    }
    let path = g.config.as_ref().ok_or_else(|| CliError::Config("--config PATH is required".into()))?;
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = RunConfig::parse(&text)?;
    apply_overrides(&mut cfg, g)?;
    info!("loaded {}", path.display());
    let out = match &cli.command {
        Command::Extremal(s) => {
            apply_start(&mut cfg, s);
            commands::extremal(&cfg, &cfg.start)?
        }
        Command::Curvature => commands::curvature(&cfg)?,
        Command::Conjugate { start, sweep } => {
            apply_start(&mut cfg, start);
            let n = sweep.as_deref().map(commands::parse_sweep).transpose()?;
            commands::conjugate(&cfg, &cfg.start, n)?
        }
        Command::Dualize { emit_config } => {
            commands::dualize_cmd(&cfg, emit_config.as_deref().map(|p| (p, text.as_str())))?
        }
        Command::GaussBonnet => commands::gauss_bonnet(&cfg)?,
        Command::Verify => commands::verify(&cfg)?,
    };
    emit(&out.data, cfg.output_path.as_deref())?;
    Ok(out)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ZNAV_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(out) => {
            if let Some(s) = &out.summary {
                eprintln!("{s}");
            }
            match out.failure {
                Some(e) => {
                    eprintln!("znav: {e}");
                    ExitCode::from(e.exit_code())
                }
                None => ExitCode::SUCCESS,
            }
        }
        Err(e) => {
            eprintln!("znav: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
