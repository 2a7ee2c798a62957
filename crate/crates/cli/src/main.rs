use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gp_amis::checks::{run_check, CHECK_NAMES};
use gp_amis::gp::Task;
use gp_amis::harness::{load_config_dataset, run_experiment, run_sweep, write_outputs, write_sweep, ExperimentConfig};

/// Adaptive importance sampling and MCMC for Gaussian-process covariance
/// parameters, benchmarked against cubic-operation counts.
#[derive(Parser, Debug)]
#[command(name = "gp-amis", version)]
struct Cli {
    /// Config file of `section.key = value` lines.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override a config key; repeatable. Applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// Same as `--set run.seed=N`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Same as `--set run.threads=N`.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Output directory; same as `--set run.output=DIR`.
    #[arg(long, short, global = true, env = "GP_AMIS_OUTPUT")]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one sampler over all replicates and write traces, the IQR curve
    /// and a manifest.
    Run,
    /// Run every sampler in `sweep.variants` from one shared initialization.
    Sweep,
    /// Run the oracle checks and print a pass/fail table.
    Check {
        /// Run only the named check.
        #[arg(long)]
        only: Option<String>,
    },
    /// Print a summary of the configured dataset.
    Inspect,
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_text(&text).with_context(|| format!("in config {}", path.display()))?;
    }
    for o in &cli.overrides {
        let Some((k, v)) = o.split_once('=') else {
            bail!("override `{o}` is not of the form KEY=VALUE");
        };
        cfg.set(k, v)?;
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(threads) = cli.threads {
        cfg.threads = threads;
    }
    if let Some(out) = &cli.output {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Run => {
            let cfg = resolve_config(cli)?;
            let out = run_experiment(&cfg)?;
            write_outputs(&cfg.output, &out)?;
            let last = out.curve.last().expect("nonempty curve");
            println!(
                "{}: {} replicates ({} failed), median E‖θ‖ {:.6} [{:.6}, {:.6}] at {} ops; wrote {}",
                out.config.sampler.name(),
                out.traces.len(),
                out.failures.len(),
                last.median,
                last.q1,
                last.q3,
                last.ops,
                cfg.output.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep => {
            let cfg = resolve_config(cli)?;
            let results = run_sweep(&cfg)?;
            write_sweep(&cfg.output, &cfg, &results)?;
            let mut failed = 0;
            for (v, res) in &results {
                match res {
                    Ok(out) => {
                        let last = out.curve.last().expect("nonempty curve");
                        println!("{:<12} median {:.6} [{:.6}, {:.6}]", v.name(), last.median, last.q1, last.q3);
                    }
                    Err(e) => {
                        failed += 1;
                        println!("{:<12} failed: {e}", v.name());
                    }
                }
            }
            println!("wrote {}", cfg.output.display());
            Ok(if failed == results.len() { ExitCode::FAILURE } else { ExitCode::SUCCESS })
        }
        Command::Check { only } => {
            let cfg = resolve_config(cli)?;
            let names: Vec<&str> = match only {
                Some(n) => vec![n.as_str()],
                None => CHECK_NAMES.to_vec(),
            };
            let mut all_ok = true;
            for name in names {
                let outcome = run_check(name, cfg.seed)?;
                all_ok &= outcome.passed;
                println!(
                    "{:<18} {}  {}",
                    outcome.name,
                    if outcome.passed { "PASS" } else { "FAIL" },
                    outcome.detail
                );
            }
            Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Inspect => {
            let cfg = resolve_config(cli)?;
            let data = load_config_dataset(&cfg)?;
            let source = if cfg.data_path.as_os_str().is_empty() {
                "synthetic".to_string()
            } else {
                cfg.data_path.display().to_string()
            };
            println!("source      {source}");
            println!("task        {}", data.task.name());
            println!("points      {}", data.len());
            println!("inputs      {}", data.input_dim());
            match data.task {
                Task::Regression => {
                    let n = data.len() as f64;
                    let sd = (data.y.norm_squared() / n).sqrt();
                    println!("target sd   {sd:.6} (centered)");
                }
                Task::Classification => {
                    let pos = data.y.iter().filter(|&&v| v > 0.0).count();
                    println!("labels      {pos} positive, {} negative", data.len() - pos);
                }
            }
            let params = gp_amis::gp::KernelSpec::new(cfg.kernel, data.input_dim()).n_kernel_params()
                + usize::from(data.task == Task::Regression);
            println!("parameters  {params} ({} kernel)", cfg.kernel.name());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
