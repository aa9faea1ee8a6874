use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dstc::config::{ModeConfig, ScenarioConfig};
use dstc::{presets, report, Error};

#[derive(Parser)]
#[command(name = "dstc", version, about = "Gravity-triggered reduction of superposed mass configurations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Local,
    Global,
}

#[derive(Args)]
struct Common {
    /// Experiment file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "t-max")]
    t_max: Option<f64>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Pair DP energies and lifetimes.
    Dpenergy(Common),
    /// Analytic report of the first reduction event and the survivor tree.
    Reduce(Common),
    /// Monte-Carlo survivor frequencies.
    Montecarlo(Common),
    /// The sweep declared in the config.
    Sweep(Common),
    /// Energy trace of a two-state experiment.
    Energy {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 201)]
        samples: usize,
    },
    /// Intensity drop of a detuned path against dS/ħ.
    Wavepacket {
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        #[arg(long = "ds-max", default_value_t = 0.3)]
        ds_max: f64,
        #[arg(long, default_value_t = 31)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Writes the bundled experiment files into a directory.
    Examples {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(c: &Common) -> dstc::Result<(ScenarioConfig, dstc::scenario::Experiment)> {
    let src = std::fs::read_to_string(&c.config).map_err(|e| Error::Config(format!("{}: {e}", c.config.display())))?;
    let prefix = |e: Error| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", c.config.display())),
        other => other,
    };
    let mut cfg = ScenarioConfig::parse(&src).map_err(prefix)?;
    if let Some(m) = c.mode {
        cfg.run.mode = match m {
            Mode::Local => ModeConfig::Local,
            Mode::Global => ModeConfig::Global,
        };
    }
    if let Some(t) = c.t_max {
        cfg.run.t_max = Some(t);
    }
    if let Some(n) = c.trials {
        cfg.run.trials = n;
    }
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    let exp = cfg.build(Some(&src)).map_err(prefix)?;
    Ok((cfg, exp))
}

fn emit(out: Option<&Path>, text: &str) -> dstc::Result<()> {
    let io = |e: std::io::Error| Error::Config(format!("cannot write output: {e}"));
    match out {
        Some(p) => std::fs::write(p, text).map_err(io),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(io),
    }
}

fn run(cli: Cli) -> dstc::Result<()> {
    match cli.command {
        Command::Dpenergy(c) => {
            let (cfg, exp) = load(&c)?;
            emit(c.out.as_deref(), &report::dpenergy(&exp, &cfg.engine_options())?)
        }
        Command::Reduce(c) => {
            let (cfg, exp) = load(&c)?;
            emit(c.out.as_deref(), &report::reduce(&exp, &cfg.engine_options())?)
        }
        Command::Montecarlo(c) => {
            let (cfg, exp) = load(&c)?;
            if cfg.run.trials == 0 {
                return Err(Error::Config("trials must be at least 1".into()));
            }
            emit(c.out.as_deref(), &report::montecarlo(&exp, &cfg.engine_options(), cfg.run.trials, cfg.run.seed)?)
        }
        Command::Sweep(c) => {
            let (cfg, exp) = load(&c)?;
            let (text, note) = report::sweep(&cfg, &exp, cfg.run.trials, cfg.run.seed)?;
            if let Some(n) = note {
                eprintln!("{n}");
            }
            emit(c.out.as_deref(), &text)
        }
        Command::Energy { common, samples } => {
            let (cfg, exp) = load(&common)?;
            emit(common.out.as_deref(), &report::energy(&exp, &cfg.engine_options(), common.t_max, samples)?)
        }
        Command::Wavepacket { duration, ds_max, points, out } => {
            emit(out.as_deref(), &report::wavepacket(duration, ds_max, points)?)
        }
        Command::Examples { out } => {
            let mut listing = String::new();
            for c in presets::all() {
                let file = format!("{}.toml", c.name);
                if let Some(dir) = &out {
                    std::fs::create_dir_all(dir).map_err(|e| Error::Config(format!("{}: {e}", dir.display())))?;
                    let p = dir.join(&file);
                    std::fs::write(&p, c.to_toml()?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                }
                listing.push_str(&file);
                listing.push('\n');
            }
            emit(None, &listing)
        }
    }
}

fn init_threads() -> dstc::Result<()> {
    let Ok(v) = std::env::var("DSTC_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("DSTC_THREADS must be a positive integer, got '{v}'")))?;
    if n == 0 {
        return Err(Error::Config("DSTC_THREADS must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::Numerical(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match init_threads().and_then(|_| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
