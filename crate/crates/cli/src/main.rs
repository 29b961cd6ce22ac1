use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use plsgd::Error;
use plsgd_cli::config::{ExperimentConfig, ExperimentKind};
use plsgd_cli::{check, emit_report, figure1_preset, run_experiment, Status};

/// Environment variable selecting the worker thread count.
const THREADS_ENV: &str = "PLSGD_THREADS";

#[derive(Parser)]
#[command(name = "plsgd", version, about = "Run SGD / heavy-ball experiments on PL-type objectives")]
struct Cli {
    /// Worker threads; overrides PLSGD_THREADS.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    n_max: Option<u64>,
    /// Bundle directory; defaults to the config's `output` or `out/<name>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Evaluate the acceptance thresholds and exit with status 3 if any fails.
    #[arg(long)]
    check: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run any experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// Run the eight monomial SGD/SHB presets into <out>/<name>.
    Figure1 {
        #[command(flatten)]
        o: Overrides,
    },
    /// Iterate the deterministic envelope recursion from a config.
    Envelope {
        params: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// Stochastic policy gradient in a sublevel region.
    Rl {
        config: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// Rebuild summary.csv and plot.svg of an existing bundle.
    Report { bundle: PathBuf },
}

enum Failure {
    Config(String),
    Other(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e.to_string()),
            other => Failure::Other(other.to_string()),
        }
    }
}

fn apply(cfg: &mut ExperimentConfig, o: &Overrides) -> Result<(), Failure> {
    if let Some(s) = o.seed {
        cfg.base_seed = s;
    }
    if let Some(r) = o.runs {
        cfg.n_runs = r;
    }
    if let Some(n) = o.n_max {
        cfg.n_max = n;
    }
    cfg.validate()?;
    Ok(())
}

fn bundle_dir(cfg: &ExperimentConfig, o: &Overrides) -> PathBuf {
    o.out
        .clone()
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| Path::new("out").join(cfg.name.as_deref().unwrap_or(cfg.kind.as_str())))
}

fn execute(cfg: &ExperimentConfig, dir: &Path, want_check: bool) -> Result<bool, Failure> {
    let out = run_experiment(cfg, dir)?;
    let m = &out.manifest;
    println!(
        "{}: {} runs, {} diverged, status {:?} -> {}",
        m.name,
        m.n_runs,
        m.n_diverged,
        m.status,
        dir.display()
    );
    for (k, v) in &m.metrics {
        println!("  {k} = {v:e}");
    }
    let mut ok = m.status == Status::Ok;
    if want_check {
        for l in check(cfg, &out)? {
            println!("  check {}: {} ({})", l.name, if l.passed { "PASS" } else { "FAIL" }, l.detail);
            ok &= l.passed;
        }
    }
    Ok(ok || !want_check)
}

fn load(path: &Path, want: Option<ExperimentKind>) -> Result<ExperimentConfig, Failure> {
    let cfg = ExperimentConfig::load(path)?;
    if let Some(k) = want {
        if cfg.kind != k {
            return Err(Failure::Config(format!(
                "config error at `kind`: this subcommand expects \"{}\", got \"{}\"",
                k.as_str(),
                cfg.kind.as_str()
            )));
        }
    }
    Ok(cfg)
}

fn init_threads(flag: Option<usize>) -> Result<(), Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) => Some(
                v.trim()
                    .parse()
                    .map_err(|_| Failure::Config(format!("config error at `{THREADS_ENV}`: not a count: {v:?}")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Other(e.to_string()))?;
    }
    Ok(())
}

fn main_inner(cli: Cli) -> Result<bool, Failure> {
    init_threads(cli.threads)?;
    match cli.command {
        Command::Run { config, o } => {
            let mut cfg = load(&config, None)?;
            apply(&mut cfg, &o)?;
            execute(&cfg, &bundle_dir(&cfg, &o), o.check)
        }
        Command::Envelope { params, o } => {
            let mut cfg = load(&params, Some(ExperimentKind::Envelope))?;
            apply(&mut cfg, &o)?;
            execute(&cfg, &bundle_dir(&cfg, &o), o.check)
        }
        Command::Rl { config, o } => {
            let mut cfg = load(&config, Some(ExperimentKind::Rl))?;
            apply(&mut cfg, &o)?;
            execute(&cfg, &bundle_dir(&cfg, &o), o.check)
        }
        Command::Figure1 { o } => {
            let root = o.out.clone().unwrap_or_else(|| PathBuf::from("out/figure1"));
            let mut all = true;
            for mut cfg in figure1_preset() {
                apply(&mut cfg, &o)?;
                let dir = root.join(cfg.name.as_deref().expect("preset names"));
                all &= execute(&cfg, &dir, o.check)?;
            }
            Ok(all)
        }
        Command::Report { bundle } => {
            let stats = emit_report(&bundle)?;
            println!("{}: {} checkpoints, {} runs used", bundle.display(), stats.checkpoints.len(), stats.n_used);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(Failure::Config(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
