use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use labelshift::crb::{crb_offline, fim_offline};
use labelshift::estimators::{fmapls, AlphaMode, EstimateReport, EstimatorConfig, OnlineEstimatorState};
use labelshift::harness::{
    load_posterior_dump, run_experiment, trace_kl, write_trace_csv, DumpReader, Method, RunConfig,
};
use labelshift::{DirichletParams, Error, Result, SimplexVector};

/// Class-prior estimation under label shift.
#[derive(Debug, Parser)]
#[command(name = "labelshift", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Batch EM over a posterior dump; prints class,pi,alpha as CSV.
    EstimateBatch {
        #[command(flatten)]
        io: EstimateIo,
        #[arg(long, default_value = "lsf")]
        alpha_mode: AlphaMode,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Streaming estimate over a posterior dump or standard input (`-`); prints class,pi,alpha.
    EstimateOnline {
        #[command(flatten)]
        io: EstimateIo,
        #[command(flatten)]
        tuning: Tuning,
    },
    /// Monte Carlo experiment from a config file. Extra `--dotted.key value`
    /// arguments override config entries.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Report path; stdout when neither this nor `output` is set.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
        overrides: Vec<String>,
    },
    /// KL(π_true ‖ π) per iteration or sample for one trial; prints iteration,kl.
    Trace {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "OnlineFMAPLS")]
        method: Method,
        #[arg(long, default_value_t = 0)]
        trial: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
        overrides: Vec<String>,
    },
    /// Offline Cramér–Rao bound; prints class,crb for the first K−1 classes.
    Crb {
        #[command(flatten)]
        io: EstimateIo,
        /// Prior estimate: a file or an inline comma-separated list.
        #[arg(long)]
        pi: String,
        /// Dirichlet hyperparameters: a file or an inline comma-separated list.
        #[arg(long)]
        alpha: String,
    },
}

#[derive(Debug, Args)]
struct EstimateIo {
    /// Posterior dump path, or `-` for standard input.
    #[arg(long)]
    input: PathBuf,
    /// Training prior: a file or an inline comma-separated list.
    #[arg(long)]
    train_prior: String,
}

#[derive(Debug, Args)]
struct Tuning {
    #[arg(long)]
    t_max: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    t_grad: Option<usize>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    c_online: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    q_tol: Option<f64>,
}

impl Tuning {
    fn config(&self) -> EstimatorConfig {
        let d = EstimatorConfig::default();
        EstimatorConfig {
            t_max: self.t_max.unwrap_or(d.t_max),
            mu: self.mu.unwrap_or(d.mu),
            t_grad: self.t_grad.unwrap_or(d.t_grad),
            c: self.c.unwrap_or(d.c),
            c_online: self.c_online.unwrap_or(d.c_online),
            gamma: self.gamma.unwrap_or(d.gamma),
            q_tol: self.q_tol.unwrap_or(d.q_tol),
            ..d
        }
    }
}

/// Reads a vector from a file, or parses the argument itself when no such file exists.
fn read_vector(arg: &str, what: &str) -> Result<Vec<f64>> {
    let text = if Path::new(arg).is_file() { std::fs::read_to_string(arg)? } else { arg.to_string() };
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| Error::InvalidInput(format!("{what}: cannot parse {s:?}"))))
        .collect()
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        Ok(Box::new(io::stdin().lock()))
    } else {
        let file =
            File::open(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
        Ok(Box::new(BufReader::new(file)))
    }
}

/// Splits `--key value` / `--key=value` pairs.
fn parse_overrides(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(arg) = it.next() {
        let key = arg
            .strip_prefix("--")
            .ok_or_else(|| Error::InvalidInput(format!("expected --dotted.key, found {arg:?}")))?;
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let value = it.next().ok_or_else(|| Error::InvalidInput(format!("--{key} needs a value")))?;
                out.push((key.to_string(), value.clone()));
            }
        }
    }
    Ok(out)
}

fn write_estimate(report: &EstimateReport) -> Result<()> {
    let mut out = io::stdout().lock();
    writeln!(out, "class,pi,alpha")?;
    for (j, (p, a)) in report.pi.as_slice().iter().zip(report.alpha.as_slice()).enumerate() {
        writeln!(out, "{j},{p},{a}")?;
    }
    eprintln!("iterations: {}", report.iterations);
    Ok(())
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::EstimateBatch { io, alpha_mode, tuning } => {
            let eps = SimplexVector::new(read_vector(&io.train_prior, "train prior")?)?;
            let (batch, _) = labelshift::harness::read_posterior_dump(open_input(&io.input)?, &io.input)?;
            let cfg = EstimatorConfig { alpha_mode, ..tuning.config() };
            write_estimate(&fmapls(&batch, &eps, &cfg)?)
        }
        Command::EstimateOnline { io, tuning } => {
            let eps = SimplexVector::new(read_vector(&io.train_prior, "train prior")?)?;
            let cfg = tuning.config();
            cfg.validate(eps.dim())?;
            let started = std::time::Instant::now();
            let mut state = OnlineEstimatorState::new(eps.dim());
            for row in DumpReader::new(open_input(&io.input)?, &io.input) {
                let row = row?;
                state.step(&row.probs, &eps, &cfg).map_err(|e| match e {
                    Error::InvalidInput(m) | Error::Domain(m) => {
                        Error::Parse { path: io.input.clone(), line: row.line, message: m }
                    }
                    Error::DimensionMismatch { expected, found } => Error::Parse {
                        path: io.input.clone(),
                        line: row.line,
                        message: format!("expected {expected} probabilities, found {found}"),
                    },
                    other => other,
                })?;
            }
            if state.tau == 0 {
                return Err(Error::InvalidInput("empty stream".into()));
            }
            write_estimate(&EstimateReport {
                iterations: state.tau,
                pi: state.pi,
                alpha: state.alpha,
                q_trace: Vec::new(),
                kl_trace: None,
                elapsed: started.elapsed(),
            })
        }
        Command::Simulate { config, out, overrides } => {
            let mut cfg = RunConfig::from_file(&config, &parse_overrides(&overrides)?)?;
            if out.is_some() {
                cfg.output = out;
            }
            let to_stdout = cfg.output.is_none();
            let report = run_experiment(&cfg)?;
            if to_stdout {
                report.write_csv(&mut io::stdout().lock(), &cfg)?;
            }
            Ok(())
        }
        Command::Trace { config, method, trial, out, overrides } => {
            let cfg = RunConfig::from_file(&config, &parse_overrides(&overrides)?)?;
            let trace = trace_kl(&cfg, trial, method)?;
            let mut w = output_writer(out.as_deref())?;
            write_trace_csv(&mut w, &trace)?;
            w.flush()?;
            Ok(())
        }
        Command::Crb { io, pi, alpha } => {
            let eps = SimplexVector::new(read_vector(&io.train_prior, "train prior")?)?;
            let pi = SimplexVector::new(read_vector(&pi, "pi")?)?;
            let alpha = DirichletParams::new(read_vector(&alpha, "alpha")?)?;
            let (batch, _) = load_posterior_dump(&io.input)?;
            for (name, dim) in [("train prior", eps.dim()), ("pi", pi.dim()), ("alpha", alpha.dim())] {
                if dim != batch.k() {
                    return Err(Error::InvalidInput(format!("{name} has {dim} classes, the dump has {}", batch.k())));
                }
            }
            let crb = crb_offline(&fim_offline(&pi, &alpha, &batch)?)?;
            let mut out = io::stdout().lock();
            writeln!(out, "class,crb")?;
            for (j, v) in crb.diagonal().iter().enumerate() {
                writeln!(out, "{j},{v}")?;
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
