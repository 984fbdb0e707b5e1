use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rpsp_cli::commands::{check_gradients, collect, init_psr};
use rpsp_cli::{compare_runs, format_table, run_experiment, CliError, ExperimentConfig, Overrides};

#[derive(Parser)]
#[command(name = "rpsp", version, about = "Train and compare recurrent predictive state policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an agent for each configured seed.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run a single seed instead of the configured list.
        #[arg(long, conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        agent: Option<String>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        psr_lr: Option<f64>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        psr_init: Option<String>,
        #[arg(long)]
        workers: Option<usize>,
        /// Suppress per-iteration progress lines.
        #[arg(long)]
        quiet: bool,
    },
    /// Rank finished experiments by area under the mean return curve.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
    },
    /// Finite-difference check of the backpropagated gradients.
    CheckGradients {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Initialize a filter by two-stage regression from a trajectory file.
    InitPsr {
        #[arg(long)]
        traj: PathBuf,
        /// Feature settings (d, d_future, k, lambda) are read from this file.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "psr.json")]
        out: PathBuf,
    },
    /// Save a blind-policy exploration batch to a trajectory file.
    Collect {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        env: Option<String>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_or_default(path: Option<&PathBuf>) -> Result<ExperimentConfig, CliError> {
    path.map_or_else(|| Ok(ExperimentConfig::default()), |p| ExperimentConfig::load(p))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train {
            config,
            seed,
            seeds,
            env,
            agent,
            iters,
            out,
            noise,
            lr,
            psr_lr,
            batch,
            psr_init,
            workers,
            quiet,
        } => {
            let mut c = ExperimentConfig::load(&config)?;
            c.apply(&Overrides {
                seeds: seed.map(|s| vec![s]).or(seeds),
                env,
                agent,
                iterations: iters,
                output_dir: out,
                noise_sigma: noise,
                learning_rate: lr,
                psr_learning_rate: psr_lr,
                batch_samples: batch,
                psr_init,
                workers,
            });
            let progress = |seed: u64, m: &rpsp::optim::IterationMetrics| {
                if !quiet {
                    eprintln!(
                        "seed {seed} iter {:>3}  return {:>9.3}  length {:>7.2}  pred {:.4}  kl {:.4}",
                        m.iteration, m.avg_return, m.avg_length, m.pred_loss, m.mean_kl
                    );
                }
            };
            let outcome = run_experiment(&c, &progress)?;
            let last = outcome.summary.iterations.last();
            println!(
                "{} on {}: {} seeds, final mean return {:.3}, AUC {:.3}; results in {}",
                outcome.summary.agent,
                outcome.summary.env,
                outcome.runs.len(),
                last.map_or(f64::NAN, |r| r.mean_return),
                outcome.summary.auc,
                outcome.dir.display()
            );
        }
        Command::Compare { runs } => print!("{}", format_table(&compare_runs(&runs)?)),
        Command::CheckGradients { seed } => match check_gradients(seed) {
            Ok((_, text)) => print!("{text}gradient check passed\n"),
            Err(e) => return Err(e),
        },
        Command::InitPsr { traj, config, seed, out } => {
            let c = load_or_default(config.as_ref())?;
            let r = init_psr(&traj, &c, seed, &out)?;
            println!(
                "initialized from {} trajectories ({} steps): state dim {}, {} parameters, one-step prediction MSE {:.6}; wrote {}",
                r.trajectories,
                r.steps,
                r.d_q,
                r.num_params,
                r.prediction_mse,
                out.display()
            );
        }
        Command::Collect { config, env, noise, samples, seed, out } => {
            let mut c = load_or_default(config.as_ref())?;
            c.apply(&Overrides {
                env,
                noise_sigma: noise,
                ..Overrides::default()
            });
            let n = collect(&c, samples, seed, &out)?;
            println!("wrote {n} trajectories to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
