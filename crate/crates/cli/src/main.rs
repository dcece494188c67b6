//! `plrvo`: accounting, optimization, sampling and a toy DP-SGD run from the
//! command line.
//!
//! Exit codes: 0 success, 1 input or schema error, 2 numerical-domain error,
//! 3 infeasible optimization.

mod jobfile;

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use plrvo::distortion::{gaussian_distortion_report, DistortionReport};
use plrvo::dpsgd::{calibrate_gaussian, calibrate_plrv, train, Hyper, TrainingRun};
use plrvo::io::write_curve_csv;
use plrvo::sampler::{entropy_rng, sample_gaussian_noise, sample_laplace_noise, seeded_rng, NoiseDraw, NoiseRng};
use plrvo::{
    gaussian_distortion, plrv_distortion, sample_plrv_noise, solve, Accountant, AccountingJob, GammaPlrvParams,
    GaussianParams, LambdaSearch, LaplaceParams, Mechanism, PrivacyTarget, SumMode, DEFAULT_LAMBDA_MAX,
};
use serde::Serialize;
use thiserror::Error;

use crate::jobfile::JobFile;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Core(#[from] plrvo::Error),
    #[error("self-test failed: {0}")]
    SelfTest(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Schema(_) | CliError::Io(_) => 1,
            CliError::Core(plrvo::Error::InvalidParameter { .. }) => 1,
            CliError::Core(plrvo::Error::Infeasible { .. }) => 3,
            CliError::Core(_) | CliError::SelfTest(_) => 2,
        }
    }
}

/// Above this model dimension `account` and `sweep-t` default to the
/// accelerated summation.
const EXACT_DEFAULT_MAX_N: u64 = 1_000_000;

#[derive(Parser)]
#[command(
    name = "plrvo",
    version,
    about = "Moments accounting and noise design for PLRV-noised DP-SGD"
)]
struct Cli {
    /// Worker threads: a number, or `max` for all cores.
    #[arg(long, global = true, env = "PLRV_THREADS")]
    threads: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Accelerated,
}

#[derive(Clone, Copy, ValueEnum)]
enum SearchArg {
    Full,
    Coarse,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MechanismArg {
    Plrvo,
    Gaussian,
    Laplace,
}

#[derive(clap::Args)]
struct AccountingFlags {
    /// Summation over coordinates (default: exact up to N = 10^6).
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long, value_enum, default_value = "full")]
    lambda_search: SearchArg,
}

#[derive(Subcommand)]
enum Command {
    /// ε(δ) for one job file.
    Account {
        job_file: PathBuf,
        #[command(flatten)]
        flags: AccountingFlags,
        /// Also write the per-step curve `lambda,alpha_per_step` here.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// ε(δ) for several step counts, as CSV `T,epsilon`.
    SweepT {
        job_file: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        t_values: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        flags: AccountingFlags,
    },
    /// Maximize the SNR `C (k-1) theta` under the job file's constraints.
    Optimize { job_file: PathBuf },
    /// Expected per-coordinate noise magnitude.
    Distortion {
        #[arg(long, value_enum, default_value = "plrvo")]
        mechanism: MechanismArg,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        clip: Option<f64>,
        /// Print `mechanism,l1_per_coord,finite` instead of JSON.
        #[arg(long)]
        csv: bool,
        /// Check the published distortion values and exit.
        #[arg(long)]
        table2: bool,
    },
    /// Draw noise vectors as CSV `draw_index,scale_b,coord_0,...`.
    Sample {
        #[arg(long, value_enum, default_value = "plrvo")]
        mechanism: MechanismArg,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        theta: Option<f64>,
        /// Gaussian noise multiplier; the standard deviation is `clip * sigma`.
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        clip: f64,
        /// Laplace scale.
        #[arg(long)]
        b: Option<f64>,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        draws: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Key the generator from OS entropy instead of `--seed`.
        #[arg(long)]
        secure_rng: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Calibrate noise to (ε, δ), train logistic regression on synthetic
    /// blobs and print the run ledger.
    TrainDemo {
        #[arg(long, value_enum, default_value = "plrvo")]
        mechanism: MechanismArg,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1e-5)]
        delta: f64,
        #[arg(long, default_value_t = 5)]
        epochs: u32,
        #[arg(long, default_value_t = 100)]
        batch: u32,
        #[arg(long, default_value_t = 1.0)]
        clip: f64,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.1)]
        lr: f64,
        #[arg(long, default_value_t = 10_000)]
        train_size: usize,
        #[arg(long, default_value_t = 2_000)]
        test_size: usize,
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are input errors; help and version are not errors.
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let threads = match parse_threads(cli.threads.as_deref()) {
        Ok(t) => t,
        Err(e) => return fail(e),
    };
    if threads.is_some() {
        // A second initialization can only fail if a pool already exists,
        // which cannot happen this early.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.unwrap_or(0))
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

fn fail(e: CliError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code())
}

fn parse_threads(arg: Option<&str>) -> Result<Option<usize>, CliError> {
    match arg {
        None => Ok(None),
        Some("max") => Ok(Some(0)),
        Some(s) => s
            .parse::<usize>()
            .map(Some)
            .map_err(|_| CliError::Schema(format!("--threads expects a number or `max`, got `{s}`"))),
    }
}

fn read_job(path: &Path) -> Result<JobFile, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Schema(format!("cannot read {}: {e}", path.display())))?;
    JobFile::parse(&text)
}

fn print_json<T: Serialize>(value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Schema(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::BufWriter::new(io::stdout().lock())),
    })
}

fn sum_mode(flag: Option<ModeArg>, job: &AccountingJob) -> SumMode {
    match flag {
        Some(ModeArg::Exact) => SumMode::Exact,
        Some(ModeArg::Accelerated) => SumMode::Accelerated,
        None if job.model_dim_n > EXACT_DEFAULT_MAX_N => SumMode::Accelerated,
        None => SumMode::Exact,
    }
}

fn search(flag: SearchArg) -> LambdaSearch {
    match flag {
        SearchArg::Full => LambdaSearch::Full,
        SearchArg::Coarse => LambdaSearch::Coarse,
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Account { job_file, flags, curve } => {
            let file = read_job(&job_file)?;
            let job = file.accounting_job()?;
            let mut acc = Accountant::new(file.mechanism, job, sum_mode(flags.mode, &job))?;
            let report = acc.job_epsilon(search(flags.lambda_search))?;
            if let Some(path) = curve {
                acc.fill()?;
                let mut out = output(Some(&path))?;
                write_curve_csv(&acc.curve()?, &mut out)?;
                out.flush()?;
            }
            print_json(&report)
        }
        Command::SweepT {
            job_file,
            t_values,
            out,
            flags,
        } => {
            let file = read_job(&job_file)?;
            let job = file.accounting_job()?;
            let mut acc = Accountant::new(file.mechanism, job, sum_mode(flags.mode, &job))?;
            let mut w = output(out.as_deref())?;
            writeln!(w, "T,epsilon")?;
            for t in t_values {
                if t == 0 {
                    return Err(CliError::Schema("step counts must be at least 1".into()));
                }
                let r = acc.epsilon(t, job.delta, search(flags.lambda_search))?;
                writeln!(w, "{t},{}", r.epsilon)?;
            }
            w.flush()?;
            Ok(())
        }
        Command::Optimize { job_file } => {
            let file = read_job(&job_file)?;
            if !matches!(file.mechanism, Mechanism::Plrvo(_)) {
                return Err(CliError::Schema("optimize applies to the plrvo mechanism only".into()));
            }
            let cfg = file.feasibility_config()?;
            print_json(&solve(&cfg)?)
        }
        Command::Distortion {
            mechanism,
            k,
            theta,
            sigma,
            clip,
            csv,
            table2,
        } => {
            if table2 {
                return table2_self_test();
            }
            let report = match mechanism {
                MechanismArg::Plrvo => plrv_distortion(&GammaPlrvParams::new(need(k, "k")?, need(theta, "theta")?)?),
                MechanismArg::Gaussian => {
                    gaussian_distortion_report(&GaussianParams::new(need(sigma, "sigma")?)?, need(clip, "clip")?)
                }
                MechanismArg::Laplace => {
                    return Err(CliError::Schema("distortion supports plrvo and gaussian".into()));
                }
            };
            if csv {
                println!("{}", DistortionReport::csv_header());
                println!("{}", report.csv_row());
                Ok(())
            } else {
                print_json(&report)
            }
        }
        Command::Sample {
            mechanism,
            k,
            theta,
            sigma,
            clip,
            b,
            n,
            draws,
            seed,
            secure_rng,
            out,
        } => {
            if n == 0 {
                return Err(CliError::Schema("--n must be at least 1".into()));
            }
            let mut rng: NoiseRng = if secure_rng {
                eprintln!("warning: --secure-rng ignores --seed; output is not reproducible");
                entropy_rng()
            } else {
                seeded_rng(seed, 0)
            };
            enum Source {
                Plrv(GammaPlrvParams),
                Gauss(f64),
                Lap(LaplaceParams),
            }
            let source = match mechanism {
                MechanismArg::Plrvo => Source::Plrv(GammaPlrvParams::new(need(k, "k")?, need(theta, "theta")?)?),
                MechanismArg::Gaussian => Source::Gauss(clip * GaussianParams::new(need(sigma, "sigma")?)?.sigma()),
                MechanismArg::Laplace => Source::Lap(LaplaceParams::new(need(b, "b")?)?),
            };
            let mut w = output(out.as_deref())?;
            writeln!(w, "{}", NoiseDraw::csv_header(n))?;
            for i in 0..draws {
                let draw = match &source {
                    Source::Plrv(p) => sample_plrv_noise(p, n, &mut rng),
                    Source::Gauss(s) => NoiseDraw {
                        scale_b: *s,
                        coords: sample_gaussian_noise(*s, n, &mut rng),
                    },
                    Source::Lap(p) => sample_laplace_noise(p, n, &mut rng),
                };
                writeln!(w, "{}", draw.csv_row(i))?;
            }
            w.flush()?;
            Ok(())
        }
        Command::TrainDemo {
            mechanism,
            epsilon,
            delta,
            epochs,
            batch,
            clip,
            dim,
            seed,
            lr,
            train_size,
            test_size,
            separation,
            out,
        } => {
            let hyper = Hyper {
                learning_rate: lr,
                epochs,
                batch,
                clip,
            };
            let target = PrivacyTarget::new(epsilon, delta)?;
            let mut run = TrainingRun {
                dim,
                train_size,
                test_size,
                separation,
                hyper,
                // Placeholder until calibrated below.
                mechanism: Mechanism::Gaussian(GaussianParams::new(1.0)?),
                delta,
                lambda_max: DEFAULT_LAMBDA_MAX,
                seed,
            };
            run.validate()?;
            let job = run.accounting_job()?;
            run.mechanism = match mechanism {
                MechanismArg::Plrvo => Mechanism::Plrvo(calibrate_plrv(&job, &target)?),
                MechanismArg::Gaussian => Mechanism::Gaussian(calibrate_gaussian(&job, &target)?),
                MechanismArg::Laplace => {
                    return Err(CliError::Schema("train-demo supports plrvo and gaussian".into()));
                }
            };
            let ledger = train(&run)?;
            match out {
                Some(path) => {
                    let text = serde_json::to_string_pretty(&ledger).map_err(|e| CliError::Schema(e.to_string()))?;
                    fs::write(path, text + "\n")?;
                    Ok(())
                }
                None => print_json(&ledger),
            }
        }
    }
}

fn need(v: Option<f64>, name: &str) -> Result<f64, CliError> {
    v.ok_or_else(|| CliError::Schema(format!("--{name} is required for this mechanism")))
}

fn table2_self_test() -> Result<(), CliError> {
    let checks = [
        (
            "plrvo k=141.06 theta=8.32e-4",
            plrv_distortion(&GammaPlrvParams::new(141.06, 8.32e-4)?).per_coordinate_l1,
            8.58,
        ),
        (
            "plrvo k=5242.4 theta=2.08e-5",
            plrv_distortion(&GammaPlrvParams::new(5242.4, 2.08e-5)?).per_coordinate_l1,
            9.17,
        ),
        (
            "gaussian sigma=0.9456 C=5",
            gaussian_distortion(&GaussianParams::new(0.9456)?, 5.0),
            3.77,
        ),
        (
            "gaussian sigma=1.8812 C=15",
            gaussian_distortion(&GaussianParams::new(1.8812)?, 15.0),
            22.51,
        ),
    ];
    let mut failed = Vec::new();
    for (name, got, want) in checks {
        let ok = (got - want).abs() <= 0.01;
        println!(
            "{} {name}: {got:.4} (expected {want} ± 0.01)",
            if ok { "PASS" } else { "FAIL" }
        );
        if !ok {
            failed.push(name);
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::SelfTest(failed.join(", ")))
    }
}
