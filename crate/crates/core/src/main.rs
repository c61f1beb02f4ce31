use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info, warn};

use kerncollab::harness::{self, ExperimentConfig};
use kerncollab::policy::PolicyKind;
use kerncollab::{Error, Result};

#[derive(Parser)]
#[command(name = "kerncollab", version, about = "Collaborative kernelized bandit experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy and write round tables, a summary and a regret plot.
    Run(Common),
    /// Run several policies on shared instances.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Policies to compare (comma separated); defaults to CEPE and the baselines.
        #[arg(long, value_delimiter = ',')]
        policies: Vec<PolicyKind>,
    },
    /// Trade regret against communication for a list of q0 values.
    SweepInducing {
        #[command(flatten)]
        common: Common,
        /// Inclusion scales to try (comma separated).
        #[arg(long, value_delimiter = ',', required = true)]
        q0: Vec<f64>,
    },
    /// Check a configuration file and print the resolved settings.
    ValidateConfig(Common),
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, env = "KERNCOLLAB_SEED")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    policy: Option<PolicyKind>,
    /// 50 clients, 2000 rounds and a 30 x 30 grid.
    #[arg(long)]
    paper_scale: bool,
    /// Number of Monte Carlo runs.
    #[arg(long)]
    mc_runs: Option<usize>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if self.paper_scale {
            cfg.apply_paper_scale();
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(policy) = self.policy {
            cfg.policy = policy;
        }
        if let Some(n) = self.mc_runs {
            cfg.mc_runs = n;
        }
        for w in cfg.validate()? {
            warn!("{w}");
        }
        Ok(cfg)
    }
}

fn report(paths: &[PathBuf]) {
    for p in paths {
        info!("wrote {}", p.display());
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let cfg = common.resolve()?;
            let record = harness::run_experiment(&cfg)?;
            println!(
                "{}: final regret {:.4} +/- {:.4}, communication {}",
                cfg.policy,
                record.final_regret_mean(),
                record.final_regret_stderr(),
                record.comm_mean()
            );
            report(&harness::write_run_outputs(&record, &cfg.out_dir)?);
        }
        Command::Compare { common, policies } => {
            let base = common.resolve()?;
            let policies = if policies.is_empty() {
                vec![PolicyKind::Cepe, PolicyKind::IgpUcb, PolicyKind::GpEi, PolicyKind::GpPi]
            } else {
                policies
            };
            let configs: Vec<ExperimentConfig> = policies
                .iter()
                .map(|&p| ExperimentConfig { policy: p, ..base.clone() })
                .collect();
            let records = harness::compare(&configs)?;
            for r in &records {
                println!(
                    "{:<8} final regret {:>10.4} +/- {:<8.4} communication {}",
                    r.policy().to_string(),
                    r.final_regret_mean(),
                    r.final_regret_stderr(),
                    r.comm_mean()
                );
            }
            report(&harness::write_comparison_outputs(&records, &base.out_dir)?);
        }
        Command::SweepInducing { common, q0 } => {
            let cfg = common.resolve()?;
            let sweep = harness::sweep_inducing(&cfg, &q0)?;
            println!("CEPE: regret {:.4}, communication {}", sweep.cepe_regret, sweep.cepe_cost);
            for p in &sweep.points {
                println!(
                    "q0 = {:<8} |z| = {:>6.2}  regret ratio {:>6.3}  cost reduction {:>7.2}x",
                    p.q0, p.mean_inducing, p.regret_ratio, p.cost_ratio
                );
            }
            report(&harness::write_sweep_outputs(&sweep, &cfg.out_dir)?);
        }
        Command::ValidateConfig(common) => {
            let cfg = common.resolve()?;
            let text = cfg.to_toml()?;
            println!("{text}");
            println!("# derived: kappa = {}, q0 = {}", cfg.kappa()?, cfg.q0()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            if matches!(e, Error::Config(_) | Error::InvalidParameter { .. }) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
