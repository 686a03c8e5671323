//! `spadlab`: characterize detector count-rate data, run attack simulations
//! and sweeps, and histogram click traces.
//!
//! Exit codes: 0 success, 2 input error, 3 empty or indeterminate result.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spadlab_core::characterize::{characterize, read_meta_json, read_rates_csv, CharacterizeOptions};
use spadlab_core::engine::{histogram, read_trace, run_resolved, sweep, write_trace, SessionConfig, SweepConfig};
use spadlab_core::Error;

#[derive(Parser)]
#[command(name = "spadlab", version, about = "Gated single-photon detector attack laboratory")]
struct Cli {
    /// Print only data on stdout and nothing on stderr except errors.
    #[arg(long, global = true)]
    quiet: bool,
    /// Output file. Defaults to stdout, or to a file in SPADLAB_OUT_DIR when
    /// that is set.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, env = "SPADLAB_OUT_DIR", global = true, hide_env_values = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Superlinearity report from a count-rate scan.
    Characterize {
        /// CSV with trigger_shift_ns, mu, rate_hz.
        rates: PathBuf,
        /// JSON with f_hz, theta_ns, F_hz, D_hz.
        meta: PathBuf,
        #[arg(long, default_value_t = spadlab_core::characterize::DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long, default_value_t = spadlab_core::characterize::DEFAULT_DELTA_SAT)]
        delta_sat: f64,
    },
    /// Run one session and print its metrics.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the per-click trace CSV (default trace.csv next to the
        /// output).
        #[arg(long, num_args = 0..=1, default_missing_value = "trace.csv")]
        trace: Option<PathBuf>,
    },
    /// Run a parameter grid; one metrics row per cell.
    Sweep {
        config: PathBuf,
        /// Master seed; cell seeds derive from it.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per (trigger shift, mu) click-time histograms of a trace.
    Histogram {
        trace: PathBuf,
        #[arg(long, default_value_t = 50)]
        bins: usize,
    },
}

enum Failure {
    Input(String),
    Empty(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Indeterminate | Error::UndefinedQber => Failure::Empty(e.to_string()),
            e => Failure::Input(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Input(format!("{}: {e}", path.display()))
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

struct Output {
    out: Option<PathBuf>,
    out_dir: Option<PathBuf>,
}

impl Output {
    fn path(&self, default_name: &str) -> Option<PathBuf> {
        self.out.clone().or_else(|| self.out_dir.as_ref().map(|d| d.join(default_name)))
    }

    /// Where side files such as traces go.
    fn dir(&self) -> Option<PathBuf> {
        match &self.out {
            Some(p) => p.parent().map(Path::to_path_buf),
            None => self.out_dir.clone(),
        }
    }

    fn write(&self, default_name: &str, f: impl FnOnce(&mut dyn Write) -> Result<(), Failure>) -> Result<(), Failure> {
        match self.path(default_name) {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
                }
                let mut w = BufWriter::new(File::create(&p).map_err(io_err(&p))?);
                f(&mut w)?;
                w.flush().map_err(io_err(&p))
            }
            None => {
                let stdout = io::stdout();
                let mut w = stdout.lock();
                f(&mut w)?;
                w.flush().map_err(|e| Failure::Input(e.to_string()))
            }
        }
    }
}

fn write_json<T: serde::Serialize>(w: &mut dyn Write, value: &T) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Failure::Input(e.to_string()))?;
    writeln!(w).map_err(|e| Failure::Input(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    let output = Output {
        out: cli.out,
        out_dir: cli.out_dir,
    };
    let note = |msg: String| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };
    match cli.command {
        Command::Characterize {
            rates,
            meta,
            epsilon,
            delta_sat,
        } => {
            let meta = read_meta_json(&meta)?;
            let records = read_rates_csv(open(&rates)?, &rates.display().to_string(), &meta)?;
            let report = characterize(&records, &meta, CharacterizeOptions { epsilon, delta_sat })?;
            note(format!("superlinear: {} (max S = {:?})", report.verdict, report.max_s.as_ref().map(|m| m.value)));
            output.write("report.json", |w| write_json(w, &report))
        }
        Command::Simulate { config, seed, trace } => {
            let (mut cfg, base) = SessionConfig::from_path(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.trace |= trace.is_some();
            let session = cfg.resolve(base.as_deref())?;
            let out = run_resolved(&session)?;
            let m = &out.metrics;
            note(format!(
                "{} slots, {} registered, {} sifted, QBER {}",
                m.slots,
                m.registered,
                m.sifted,
                m.qber.map_or("undefined".into(), |q| format!("{q:.5}"))
            ));
            if let (Some(path), Some(rows)) = (trace, &out.trace) {
                let path = match output.dir() {
                    Some(d) if path.is_relative() => d.join(path),
                    _ => path,
                };
                let w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
                write_trace(rows, w)?;
                note(format!("trace: {} ({} clicks)", path.display(), rows.len()));
            }
            output.write("metrics.json", |w| write_json(w, m))
        }
        Command::Sweep { config, seed } => {
            let text = std::fs::read_to_string(&config).map_err(io_err(&config))?;
            let sweep_cfg: SweepConfig = serde_json::from_str(&text)
                .map_err(|e| Failure::Input(format!("{}: {e}", config.display())))?;
            let master = seed
                .or_else(|| sweep_cfg.base.get("seed").and_then(|s| s.as_u64()))
                .unwrap_or(0);
            let base = config.parent().filter(|d| !d.as_os_str().is_empty());
            let rows = sweep(&sweep_cfg.base, &sweep_cfg.axes, master, base)?;
            note(format!("{} cells", rows.len()));
            output.write("sweep.json", |w| write_json(w, &rows))
        }
        Command::Histogram { trace, bins } => {
            let rows = read_trace(open(&trace)?, &trace.display().to_string())?;
            let hist = histogram(&rows, bins)?;
            if hist.is_empty() {
                return Err(Failure::Empty(format!("{}: no photon clicks to histogram", trace.display())));
            }
            output.write("histogram.csv", |w| {
                let mut csv = csv::Writer::from_writer(w);
                for r in &hist {
                    csv.serialize(r).map_err(|e| Failure::Input(e.to_string()))?;
                }
                csv.flush().map_err(|e| Failure::Input(e.to_string()))
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Empty(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
