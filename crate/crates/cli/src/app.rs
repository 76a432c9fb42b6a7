//! Command-line front end.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use qwalk_core::analysis::Execution;

use crate::config::{ConfigLayer, ExperimentConfig, ModelKind, OutputFormat};
use crate::experiment::{
    preset_plan, regenerate, run_fit, run_plan, FitKind, FitRequest, Preset, PresetOverrides,
};
use crate::output::{csv_path, read_results, write_file, Bundle, Records, ResultFile};

pub const THREADS_ENV: &str = "QWALK_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "qwalk",
    version,
    about = "Quantum walks on the line under measurement and broken-link decoherence"
)]
pub struct Cli {
    /// Worker threads for ensemble runs. Results do not depend on this value.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a single ensemble.
    Run {
        model: ModelKind,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Fit a stored variance series.
    Fit {
        kind: FitKind,
        /// CSV variance file produced by `run` or `preset`.
        #[arg(long)]
        input: PathBuf,
        /// Fit window as two times, `FROM TO`.
        #[arg(long, num_args = 2, value_names = ["FROM", "TO"])]
        window: Option<Vec<u64>>,
        /// Hold the Brownian prefactor fixed.
        #[arg(long)]
        fixed_c: Option<f64>,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Generate the data behind one of the standard figures.
    Preset {
        name: Preset,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        trajectories: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, allow_negative_numbers = true)]
        theta: Option<f64>,
        /// Output directory for CSV, or bundle file for JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutputFormat>,
    },
    /// Regenerate a result file from the configuration embedded in it.
    Rerun {
        input: PathBuf,
        #[command(flatten)]
        out: OutArgs,
    },
}

#[derive(Debug, Args)]
pub struct OutArgs {
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

#[derive(Debug, Default, Args)]
pub struct RunArgs {
    /// TOML or JSON file with configuration keys; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long)]
    pub trajectories: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Coin angle; the default pi/4 is the Hadamard coin.
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub period: Option<u32>,
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub interval_uniform: Option<Vec<u32>>,
    /// Explicit measurement intervals, repeated cyclically.
    #[arg(long, value_delimiter = ',')]
    pub intervals: Option<Vec<u32>>,
    #[arg(long)]
    pub p: Option<f64>,
    /// Times at which to record the averaged distribution.
    #[arg(long, value_delimiter = ',')]
    pub snapshots: Option<Vec<u64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
}

impl RunArgs {
    fn layer(&self, model: ModelKind) -> ConfigLayer {
        ConfigLayer {
            model: Some(model),
            steps: self.steps,
            trajectories: self.trajectories,
            seed: self.seed,
            theta: self.theta,
            qubit: None,
            period: self.period,
            interval_uniform: self.interval_uniform.as_deref().map(|v| [v[0], v[1]]),
            intervals: self.intervals.clone(),
            p: self.p,
            snapshots: self.snapshots.clone(),
            output_path: self.out.clone(),
            output_format: self.format,
            preset: None,
        }
    }
}

/// Builds the explicit config for `run`: defaults, then the config file, then flags.
pub fn parse_config(model: ModelKind, args: &RunArgs) -> Result<ExperimentConfig> {
    let file = match &args.config {
        Some(path) => ConfigLayer::from_file(path)?,
        None => ConfigLayer::default(),
    };
    Ok(file.merge(args.layer(model)).resolve()?)
}

fn execution() -> Execution {
    if cfg!(feature = "parallel") {
        Execution::Parallel
    } else {
        Execution::Sequential
    }
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    #[cfg(feature = "parallel")]
    if let Some(n) = threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .context("cannot start thread pool")?;
        return Ok(pool.install(f));
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(f())
}

fn print_summary(files: &[ResultFile], to: &mut dyn std::io::Write) {
    for f in files {
        if f.summary.is_empty() {
            continue;
        }
        let items: Vec<String> = f
            .summary
            .iter()
            .map(|s| format!("{}={}", s.name, s.value))
            .collect();
        let _ = writeln!(to, "{}: {}", f.label, items.join(" "));
    }
}

fn print_fit(file: &ResultFile, to: &mut dyn std::io::Write) {
    if let Records::Fit { rows } = &file.records {
        for r in rows {
            match (r.ci_low, r.ci_high) {
                (Some(lo), Some(hi)) => {
                    let _ = writeln!(
                        to,
                        "{}: {} = {} [{}, {}]",
                        file.label, r.parameter, r.value, lo, hi
                    );
                }
                _ => {
                    let _ = writeln!(to, "{}: {} = {}", file.label, r.parameter, r.value);
                }
            }
        }
    }
}

/// Writes result files. CSV goes to one file per series: the first series to
/// `out` itself, the others next to it with the series label appended to the
/// stem. JSON writes a single bundle. Without `out`, data go to stdout.
pub fn emit(
    files: &[ResultFile],
    out: Option<&Path>,
    format: OutputFormat,
    preset: Option<&str>,
) -> Result<()> {
    match (format, out) {
        (OutputFormat::Json, Some(path)) => write_file(
            path,
            &Bundle::new(preset.map(str::to_owned), files.to_vec()).to_json(),
        )?,
        (OutputFormat::Json, None) => {
            print!(
                "{}",
                Bundle::new(preset.map(str::to_owned), files.to_vec()).to_json()
            )
        }
        (OutputFormat::Csv, Some(path)) => {
            let base = &files[0].label;
            for (i, f) in files.iter().enumerate() {
                let target = if i == 0 {
                    path.to_owned()
                } else {
                    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
                    let suffix = f.label.strip_prefix(base.as_str()).unwrap_or(&f.label);
                    path.with_file_name(format!("{stem}{suffix}.csv"))
                };
                write_file(&target, &f.to_csv())?;
            }
        }
        (OutputFormat::Csv, None) => {
            for f in files {
                print!("{}", f.to_csv());
            }
        }
    }
    Ok(())
}

fn format_for(path: Option<&Path>, explicit: Option<OutputFormat>) -> OutputFormat {
    explicit.unwrap_or(match path.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => OutputFormat::Json,
        _ => OutputFormat::Csv,
    })
}

/// Summaries go to stdout when data go to files and to stderr otherwise.
fn report(files: &[ResultFile], data_on_stdout: bool, fits: bool) {
    let mut sink: Box<dyn std::io::Write> = if data_on_stdout {
        Box::new(std::io::stderr())
    } else {
        Box::new(std::io::stdout())
    };
    if fits {
        files.iter().for_each(|f| print_fit(f, &mut *sink));
    } else {
        print_summary(files, &mut *sink);
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads;
    if threads == Some(0) {
        bail!("--threads must be at least 1");
    }
    match cli.command {
        Command::Run { model, args } => {
            let config = parse_config(model, &args)?;
            let label = model.to_string();
            let files = with_threads(threads, || {
                crate::experiment::run_experiment(&config, &label, execution())
            })??;
            emit(&files, config.output_path.as_deref(), config.output_format, None)?;
            report(&files, config.output_path.is_none(), false);
        }
        Command::Preset {
            name,
            steps,
            trajectories,
            seed,
            theta,
            out,
            format,
        } => {
            let plan = preset_plan(
                name,
                PresetOverrides {
                    steps,
                    trajectories,
                    seed,
                    theta,
                },
            )?;
            let files = with_threads(threads, || run_plan(&plan, execution()))??;
            let format = format_for(out.as_deref(), format);
            match format {
                OutputFormat::Json => {
                    let path = out.unwrap_or_else(|| PathBuf::from(format!("{}.json", name.name())));
                    emit(&files, Some(&path), format, Some(name.name()))?;
                }
                OutputFormat::Csv => {
                    let dir = out.unwrap_or_else(|| PathBuf::from(name.name()));
                    for f in &files {
                        write_file(&csv_path(&dir, &f.label), &f.to_csv())?;
                    }
                }
            }
            report(&files, false, false);
        }
        Command::Fit {
            kind,
            input,
            window,
            fixed_c,
            out,
        } => {
            let series = read_results(&input)?;
            let request = FitRequest {
                fit: kind,
                input: input.display().to_string(),
                window: window.map(|w| (w[0], w[1])),
                fixed_c,
            };
            let mut files = Vec::new();
            for s in series
                .iter()
                .filter(|s| matches!(s.records, Records::Variance { .. }))
            {
                files.push(run_fit(&request, s).with_context(|| format!("fitting `{}`", s.label))?);
            }
            if files.is_empty() {
                bail!("{} holds no variance series", input.display());
            }
            let format = format_for(out.out.as_deref(), out.format);
            emit(&files, out.out.as_deref(), format, None)?;
            report(&files, out.out.is_none(), true);
        }
        Command::Rerun { input, out } => {
            let stored = read_results(&input)?;
            let files = with_threads(threads, || {
                stored
                    .iter()
                    .map(|f| regenerate(f, execution()))
                    .collect::<Result<Vec<_>>>()
            })??;
            let changed = stored
                .iter()
                .zip(&files)
                .filter(|(a, b)| a.records != b.records)
                .count();
            let format = format_for(out.out.as_deref(), out.format);
            emit(&files, out.out.as_deref(), format, None)?;
            report(&files, out.out.is_none(), false);
            let mut err = std::io::stderr();
            let _ = writeln!(
                err,
                "{} of {} series reproduced exactly",
                files.len() - changed,
                files.len()
            );
        }
    }
    Ok(())
}
