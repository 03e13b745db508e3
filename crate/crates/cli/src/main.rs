use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dflm::harness::{
    dt_ladder, evaluate, load_config, paper_scale_config, run_analysis, run_sweep, run_training, AnalysisKind,
    AnalysisParams, BiasField, ConfigFile, DtLadder, HarnessError, SweepSpec,
};
use dflm::trainer::TrainError;

/// Derivative-free martingale loss training for elliptic PDEs.
#[derive(Parser)]
#[command(name = "dflm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network from a flat config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "train_out")]
        output_dir: PathBuf,
        /// 1.5e5 iterations, 3×200 net, 1001-node evaluation grid.
        #[arg(long)]
        paper_scale: bool,
    },
    /// Run the (dt, ns, trial) matrix of a sweep config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Freeze the exact solution instead of training, so losses measure
        /// the target variance alone.
        #[arg(long)]
        bias_mode: bool,
        /// Ten trials plus the full-size training settings.
        #[arg(long)]
        paper_scale: bool,
        /// Replace dt_values with a dyadic ladder: `scaled` (1e-4 · 2^p) or
        /// `literal` (2^p).
        #[arg(long)]
        dt_ladder: Option<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Run one analysis: bias, chebyshev, folded-normal, learning-bound or decay.
    Analyze {
        which: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "analysis_out")]
        output_dir: PathBuf,
        /// Field for the bias analysis: linear or exact.
        #[arg(long, default_value = "linear")]
        field: String,
        #[arg(long)]
        n_outer: Option<usize>,
        #[arg(long)]
        dt_max: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Relative L² error of a checkpoint against sin(2mπx₁)sin(2mπx₂).
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 1001)]
        grid: usize,
        #[arg(long, default_value_t = 1)]
        m: u32,
    },
}

fn usage(msg: String) -> HarnessError {
    HarnessError::Usage(msg)
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::Train {
            config,
            output_dir,
            paper_scale,
        } => {
            let ConfigFile::Train(mut c) = load_config(&config)? else {
                return Err(usage(format!("{} is a sweep config; use `dflm sweep`", config.display())));
            };
            if paper_scale {
                c = paper_scale_config(c);
            }
            let m = run_training(&c, &output_dir)?;
            match m.final_rel_l2 {
                Some(e) => println!("final relative L2 error: {e}"),
                None => println!("training finished"),
            }
            println!("outputs in {}", output_dir.display());
            Ok(true)
        }
        Command::Sweep {
            config,
            bias_mode,
            paper_scale,
            dt_ladder: ladder,
            output_dir,
        } => {
            let mut spec = match load_config(&config)? {
                ConfigFile::Sweep(s) => s,
                ConfigFile::Train(base) => SweepSpec {
                    base,
                    ..SweepSpec::default()
                },
            };
            if paper_scale {
                spec = spec.paper_scale();
            }
            if let Some(l) = ladder {
                spec.dt_values = dt_ladder(l.parse::<DtLadder>()?);
            }
            if let Some(dir) = output_dir {
                spec.output_dir = dir;
            }
            let m = run_sweep(&spec, bias_mode)?;
            println!(
                "{} runs; summary in {}",
                m.runs.len(),
                spec.output_dir.join("summary.csv").display()
            );
            Ok(true)
        }
        Command::Analyze {
            which,
            seed,
            output_dir,
            field,
            n_outer,
            dt_max,
            trials,
            samples,
            grid,
        } => {
            let kind: AnalysisKind = which.parse()?;
            let d = AnalysisParams::default();
            let params = AnalysisParams {
                seed,
                output_dir,
                field: field.parse::<BiasField>()?,
                n_outer: n_outer.unwrap_or(d.n_outer),
                dt_max: dt_max.unwrap_or(d.dt_max),
                trials: trials.unwrap_or(d.trials),
                samples: samples.unwrap_or(d.samples),
                grid: grid.unwrap_or(d.grid),
            };
            let out = run_analysis(kind, &params)?;
            for line in &out.lines {
                println!("{line}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            Ok(out.passed)
        }
        Command::Evaluate { checkpoint, grid, m } => {
            let e = evaluate(&checkpoint, grid, m)?;
            println!("{e}");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(
            e @ (HarnessError::Usage(_)
            | HarnessError::Parse { .. }
            | HarnessError::Invalid { .. }
            | HarnessError::Train(TrainError::InvalidConfig { .. })),
        ) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
