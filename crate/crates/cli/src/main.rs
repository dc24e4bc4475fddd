use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use tsnac_core::harness::{self, Matrix, RunOptions};
use tsnac_core::scenario::{RealisticCase, Scenario, SyntheticSpec};
use tsnac_core::{CandidateRouteTable, StrategyKind};

#[derive(Parser)]
#[command(name = "tsnac", version, about = "Online admission control for ATS+CBS networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file through the engine and write result files.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "adaptive")]
        strategy: StrategyKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.10)]
        bottleneck_threshold: f64,
        #[arg(long, default_value_t = 50)]
        group_size: usize,
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        /// Write the per-iteration γ search to gamma_trace.csv.
        #[arg(long)]
        gamma_trace: bool,
        /// Check every configuration invariant after each event.
        #[arg(long)]
        verify: bool,
        /// Also save the final configuration as JSON.
        #[arg(long)]
        save_config: Option<PathBuf>,
    },
    /// Generate a scenario file.
    Gen {
        /// Synthetic case, e.g. `sw=22,es=110,p=0.6,flows=800,seed=1`.
        #[arg(long, conflicts_with = "realistic")]
        er: Option<String>,
        /// automotive, space or orion.
        #[arg(long)]
        realistic: Option<RealisticCase>,
        /// Number of requests for a realistic case.
        #[arg(long, default_value_t = 1000)]
        flows: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probability of removing an earlier flow before each add.
        #[arg(long, default_value_t = 0.0)]
        churn: f64,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a comparison matrix and write compare.csv.
    Compare {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Export the candidate route table of a scenario.
    Routes {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Routes per pair; the scenario's value when omitted.
        #[arg(long)]
        k: Option<usize>,
    },
}

fn load_scenario(path: &PathBuf) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Scenario::from_json(&text).with_context(|| format!("loading {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            scenario,
            strategy,
            out,
            bottleneck_threshold,
            group_size,
            warmup,
            gamma_trace,
            verify,
            save_config,
        } => {
            let sc = load_scenario(&scenario)?;
            let options = RunOptions {
                bottleneck_threshold,
                group_size,
                warmup,
                verify,
                gamma_trace,
            };
            let (table, cfg) = harness::prepare(&sc)?;
            let metrics = harness::run_prepared(&sc, &table, cfg.clone(), strategy, &options)?;
            harness::write_outputs(&metrics, &out)?;
            if let Some(path) = save_config {
                let mut engine = tsnac_core::AdmissionEngine::new(cfg, strategy);
                replay(&sc, &table, &mut engine)?;
                fs::write(&path, engine.config().to_json()?)
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            println!(
                "{}: {} of {} admitted, first rejection {}, mean admission {:.1} us",
                strategy,
                metrics.admitted_total,
                metrics.requests,
                metrics
                    .first_rejection_index
                    .map_or("none".to_string(), |i| i.to_string()),
                metrics.admission_time.mean_s * 1e6
            );
        }
        Command::Gen {
            er,
            realistic,
            flows,
            seed,
            churn,
            out,
        } => {
            let mut sc = match (er, realistic) {
                (Some(spec), None) => Scenario::synthetic(&spec.parse::<SyntheticSpec>()?)?,
                (None, Some(case)) => Scenario::realistic(case, flows, seed)?,
                _ => bail!("exactly one of --er or --realistic is required"),
            };
            if churn > 0.0 {
                if !(churn < 1.0) {
                    bail!("--churn must be below 1");
                }
                sc = sc.with_churn(seed, churn);
            }
            let text = sc.to_json()?;
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => println!("{text}"),
            }
        }
        Command::Compare { matrix, out } => {
            let text = fs::read_to_string(&matrix).with_context(|| format!("reading {}", matrix.display()))?;
            let m = Matrix::from_json(&text)?;
            let rows = harness::compare(&m)?;
            let path = harness::write_comparison(&rows, &out)?;
            println!("{} cells written to {}", rows.len(), path.display());
        }
        Command::Routes { scenario, out, k } => {
            let sc = load_scenario(&scenario)?;
            let table = CandidateRouteTable::build(&sc.graph, k.unwrap_or(sc.k), None)?;
            fs::write(&out, table.to_json()?).with_context(|| format!("writing {}", out.display()))?;
            println!("{} pairs written to {}", table.len(), out.display());
        }
    }
    Ok(())
}

fn replay(
    sc: &Scenario,
    table: &CandidateRouteTable,
    engine: &mut tsnac_core::AdmissionEngine,
) -> Result<()> {
    for ev in &sc.events {
        match ev {
            tsnac_core::scenario::Event::Add { flow } => {
                engine.admit(flow.clone(), table)?;
            }
            tsnac_core::scenario::Event::Remove { flow_id } => {
                if engine.config().is_admitted(*flow_id) {
                    engine.remove(*flow_id)?;
                }
            }
        }
    }
    Ok(())
}
