//! `s2sched`: run experiments, plan ETSU parameters and verify the oracles.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use s2sched::domain::ErrorFunction;
use s2sched::experiments::presets::{fig2, fig3a, fig3b, synth_field};
use s2sched::experiments::{
    csv_string, verify, write_csv_file, ExperimentConfig, ExperimentError, Fig2Params, Fig3aParams,
    Fig3bParams, Row, SynthFieldParams, VerifyOptions,
};
use s2sched::meanfield::{plan, PlanParams};
use s2sched::ContentionModel;

const EXIT_VALIDATION: u8 = 1;
const EXIT_VERIFY: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "s2sched",
    version,
    about = "Status-update scheduling simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run an experiment described by a TOML file.
    Run {
        config: PathBuf,
        /// Overrides the file's `output`; `-` writes to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named experiment.
    Preset {
        name: PresetName,
        /// Node count (fig2, synth-field).
        #[arg(long)]
        n: Option<usize>,
        /// Horizon in slots.
        #[arg(long)]
        t: Option<u64>,
        #[arg(long)]
        reps: Option<u32>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated sweep grid: p_min (fig2), p_e1 (fig3a) or N (fig3b).
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<f64>>,
        /// fig3b: also run ETSU under ideal contention.
        #[arg(long)]
        ideal: bool,
        /// fig3b: contention model for ETSU.
        #[arg(long, value_enum)]
        contention: Option<ContentionArg>,
    },
    /// Solve the mean-field design for one population.
    Plan {
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = 0.5)]
        mu: f64,
        #[arg(long)]
        nu: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 10.0)]
        slot_ratio: f64,
        #[arg(long, value_enum, default_value_t = ErrorArg::Linear)]
        error: ErrorArg,
        #[arg(long, default_value_t = 0.0)]
        p_e: f64,
        /// Append a CSV row to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the oracle verification suite.
    Verify {
        #[arg(long)]
        quick: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetName {
    Fig2,
    Fig3a,
    Fig3b,
    SynthField,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ErrorArg {
    Linear,
    Quadratic,
    Exponential,
    Indicator,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ContentionArg {
    Slotted,
    MiniSlot,
    Ideal,
}

enum Failure {
    Validation(String),
    Verify,
    Io(String),
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Io(e.to_string())
        }
    }
}

fn emit(rows: &[Row], out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) if p != Path::new("-") => {
            write_csv_file(rows, p)?;
            eprintln!("wrote {} rows to {}", rows.len(), p.display());
            Ok(())
        }
        _ => {
            let text = csv_string(rows)?;
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Io(format!("stdout: {e}")))
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run_preset(
    name: PresetName,
    n: Option<usize>,
    t: Option<u64>,
    reps: Option<u32>,
    seed: Option<u64>,
    grid: Option<Vec<f64>>,
    ideal: bool,
    contention: Option<ContentionArg>,
) -> Result<Vec<Row>, Failure> {
    let rows = match name {
        PresetName::Fig2 => {
            let d = Fig2Params::default();
            fig2(&Fig2Params {
                p_min_grid: grid.unwrap_or(d.p_min_grid),
                n: n.unwrap_or(d.n),
                horizon: t.unwrap_or(d.horizon),
                replications: reps.unwrap_or(d.replications),
                seed: seed.unwrap_or(d.seed),
            })?
        }
        PresetName::Fig3a => {
            let d = Fig3aParams::default();
            fig3a(&Fig3aParams {
                pe1_grid: grid.unwrap_or(d.pe1_grid),
                horizon: t.unwrap_or(d.horizon),
                replications: reps.unwrap_or(d.replications),
                seed: seed.unwrap_or(d.seed),
                ..d
            })?
        }
        PresetName::Fig3b => {
            let d = Fig3bParams::default();
            let n_grid = match grid {
                Some(g) => g
                    .iter()
                    .map(|&x| {
                        if x.fract() == 0.0 && x >= 1.0 {
                            Ok(x as usize)
                        } else {
                            Err(Failure::Validation(format!(
                                "N grid value {x} is not a positive integer"
                            )))
                        }
                    })
                    .collect::<Result<_, _>>()?,
                None => d.n_grid,
            };
            fig3b(&Fig3bParams {
                n_grid,
                horizon: t.unwrap_or(d.horizon),
                replications: reps.unwrap_or(d.replications),
                seed: seed.unwrap_or(d.seed),
                include_ideal: ideal,
                contention: match contention {
                    Some(ContentionArg::Slotted) => ContentionModel::Slotted,
                    Some(ContentionArg::Ideal) => ContentionModel::Ideal,
                    Some(ContentionArg::MiniSlot) | None => ContentionModel::MiniSlot,
                },
                ..d
            })?
        }
        PresetName::SynthField => {
            let d = SynthFieldParams::default();
            synth_field(&SynthFieldParams {
                n: n.unwrap_or(d.n),
                horizon: t.unwrap_or(d.horizon),
                replications: reps.unwrap_or(d.replications),
                seed: seed.unwrap_or(d.seed),
                ..d
            })?
        }
    };
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn run_plan(
    lambda: f64,
    mu: f64,
    nu: f64,
    n: usize,
    slot_ratio: f64,
    error: ErrorArg,
    p_e: f64,
    out: Option<PathBuf>,
) -> Result<(), Failure> {
    let error_fn = match error {
        ErrorArg::Linear => ErrorFunction::linear(),
        ErrorArg::Quadratic => ErrorFunction::quadratic(),
        ErrorArg::Exponential => ErrorFunction::exponential(),
        ErrorArg::Indicator => ErrorFunction::indicator(),
    };
    let params = PlanParams {
        lambda,
        mu,
        nu,
        n,
        slot_ratio,
        error: error_fn,
        p_e,
    };
    let sol = plan(&params).map_err(|e| Failure::Validation(e.to_string()))?;
    println!("d_th      {}", sol.d_th);
    println!("raw_root  {}", sol.raw_root);
    println!("i_th      {}", sol.i_th);
    println!("p_tx      {}", sol.p_tx);
    println!("sigma     {}", sol.sigma);
    println!("sigma_raw {}", sol.sigma_raw);
    println!("beta      {}", sol.beta);
    if let Some(path) = out {
        let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", path.display()));
        let fresh = !path.exists();
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io)?;
        if fresh {
            writeln!(
                f,
                "lambda,mu,nu,n,slot_ratio,error,p_e,d_th,raw_root,i_th,p_tx,sigma,sigma_raw,beta"
            )
            .map_err(io)?;
        }
        writeln!(
            f,
            "{lambda},{mu},{nu},{n},{slot_ratio},{},{p_e},{},{},{},{},{},{},{}",
            format!("{error:?}").to_lowercase(),
            sol.d_th,
            sol.raw_root,
            sol.i_th,
            sol.p_tx,
            sol.sigma,
            sol.sigma_raw,
            sol.beta
        )
        .map_err(io)?;
    }
    Ok(())
}

fn run_verify(quick: bool) -> Result<(), Failure> {
    let results = verify(VerifyOptions { quick });
    let mut failed = 0;
    for r in &results {
        let tag = if r.passed { "PASS" } else { "FAIL" };
        println!("{tag} {}: {}", r.name, r.detail);
        failed += usize::from(!r.passed);
    }
    println!(
        "{} of {} checks passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        Err(Failure::Verify)
    } else {
        Ok(())
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let rows = cfg.run()?;
            let target = out.or_else(|| cfg.output.as_ref().map(PathBuf::from));
            emit(&rows, target.as_deref())
        }
        Command::Preset {
            name,
            n,
            t,
            reps,
            seed,
            out,
            grid,
            ideal,
            contention,
        } => {
            let rows = run_preset(name, n, t, reps, seed, grid, ideal, contention)?;
            emit(&rows, out.as_deref())
        }
        Command::Plan {
            lambda,
            mu,
            nu,
            n,
            slot_ratio,
            error,
            p_e,
            out,
        } => run_plan(lambda, mu, nu, n, slot_ratio, error, p_e, out),
        Command::Verify { quick } => run_verify(quick),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Verify) => ExitCode::from(EXIT_VERIFY),
        Err(Failure::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_IO)
        }
    }
}
