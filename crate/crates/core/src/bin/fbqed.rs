use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use feedback_qed::cli::{self, RunConfig, SweepParam, SweepSpec};
use feedback_qed::model::parse_config;
use feedback_qed::{CouplingMode, Error};

#[derive(Parser)]
#[command(name = "fbqed", version, about = "Driven two-emitter cavity with delayed coherent feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// `key = value` parameter file
    #[arg(long)]
    config: Option<PathBuf>,
    /// output file (stdout when absent)
    #[arg(long)]
    out: Option<PathBuf>,
    /// feedback | reference
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    nk: Option<usize>,
    /// half width W of the k grid
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// record every n-th step
    #[arg(long)]
    stride: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// time traces with and without feedback
    Trace {
        #[command(flatten)]
        common: Common,
    },
    /// stationary observables against the feedback phase omega0*tau
    SweepTau {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = PI / 10.0)]
        start: f64,
        #[arg(long, default_value_t = 6.0 * PI)]
        stop: f64,
        #[arg(long, default_value_t = 60)]
        count: usize,
    },
    /// stationary observables against the drive strength, no feedback
    SweepDrive {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.01)]
        start: f64,
        #[arg(long, default_value_t = 0.1)]
        stop: f64,
        #[arg(long, default_value_t = 10)]
        count: usize,
    },
    /// dressed-state catalog
    Dressed {
        #[command(flatten)]
        common: Common,
        /// emitter coupling; overrides the config value
        #[arg(long)]
        g: Option<f64>,
    },
    /// compare against the full Hamiltonian
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// grid doubling and integration order
    Converge {
        #[command(flatten)]
        common: Common,
        /// largest accepted relative change under grid doubling
        #[arg(long, default_value_t = 0.01)]
        tolerance: f64,
    },
}

enum Failure {
    Lib(Error),
    Verification(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Lib(e.into())
    }
}

fn load(common: &Common) -> Result<RunConfig, Error> {
    let path = common
        .config
        .as_ref()
        .ok_or_else(|| Error::MissingKey("--config".into()))?;
    let text = std::fs::read_to_string(path)?;
    let mut raw = parse_config(&text)?;
    let mut set = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            raw.insert(k.to_string(), v);
        }
    };
    set("mode", common.mode.clone());
    set("nk", common.nk.map(|v| v.to_string()));
    set("bandwidth", common.bandwidth.map(|v| v.to_string()));
    set("dt", common.dt.map(|v| v.to_string()));
    set("t_end", common.t_end.map(|v| v.to_string()));
    set("stride", common.stride.map(|v| v.to_string()));
    RunConfig::from_raw(raw)
}

fn output(common: &Common) -> Result<Box<dyn Write>, Error> {
    Ok(match &common.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn sweep_spec(cfg: &RunConfig, param: SweepParam, start: f64, stop: f64, count: usize) -> Result<SweepSpec, Error> {
    let (a, b, n) = cfg.sweep.unwrap_or((start, stop, count));
    SweepSpec::linspace(param, a, b, n, cfg.numerics.clone())
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Trace { common } => {
            let cfg = load(&common)?;
            let table = cli::run_trace(&cfg)?;
            let mut w = output(&common)?;
            table.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::SweepTau { common, start, stop, count } => {
            let cfg = load(&common)?;
            let spec = sweep_spec(&cfg, SweepParam::Tau, start, stop, count)?;
            let table = cli::sweep_tau(&cfg, &spec)?;
            let mut w = output(&common)?;
            table.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::SweepDrive { common, start, stop, count } => {
            let cfg = load(&common)?;
            let spec = sweep_spec(&cfg, SweepParam::Epsilon, start, stop, count)?;
            let table = cli::sweep_drive(&cfg, &spec)?;
            let mut w = output(&common)?;
            table.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Dressed { common, g } => {
            let g = match (g, &common.config) {
                (Some(g), _) => g,
                (None, Some(_)) => load(&common)?.params.g1,
                (None, None) => return Err(Error::MissingKey("--g or --config".into()).into()),
            };
            let mut w = output(&common)?;
            write!(w, "{}", cli::dressed_table(g)?)?;
            w.flush()?;
        }
        Command::Verify { common } => {
            let cfg = load(&common)?;
            let report = cli::verify(&cfg)?;
            let mut w = output(&common)?;
            report.write_csv(&mut w)?;
            w.flush()?;
            if !report.passed() {
                let failed: Vec<&str> = report
                    .checks
                    .iter()
                    .filter(|c| !c.passed())
                    .map(|c| c.name.as_str())
                    .collect();
                return Err(Failure::Verification(failed.join(", ")));
            }
        }
        Command::Converge { common, tolerance } => {
            let mut cfg = load(&common)?;
            cfg.mode.get_or_insert(CouplingMode::Feedback);
            let report = cli::converge(&cfg)?;
            let mut w = output(&common)?;
            report.write_csv(&mut w)?;
            w.flush()?;
            let mut bad: Vec<String> = report
                .relative_changes()
                .iter()
                .filter(|(name, rel)| *name != "concurrence" && rel.is_none_or(|r| r > tolerance))
                .map(|(name, _)| name.to_string())
                .collect();
            if (report.order - 4.0).abs() > 0.2 {
                bad.push(format!("order {}", report.order));
            }
            if !bad.is_empty() {
                return Err(Failure::Verification(bad.join(", ")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            // usage errors are configuration errors; --help and --version are not
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(Failure::Verification(what)) => {
            eprintln!("verification failed: {what}");
            ExitCode::from(3)
        }
    }
}
