use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mps_sliding::harness::{certify_config, default_out_dir, emit_outputs, run_experiment, RunConfig};
use mps_sliding::network::NetworkModel;
use mps_sliding::Error;

#[derive(Parser)]
#[command(name = "mps-sliding", version, about = "Mirror-prox sliding experiments on simulated networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write trace.csv, summary.toml and plot.dat.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the noise seed of the config.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the inexact-oracle condition on random feasible triples.
    Certify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 10_000)]
        triples: usize,
        /// Check this M instead of the synthesized one.
        #[arg(long)]
        oracle_m: Option<f64>,
        /// Check this delta instead of the synthesized one.
        #[arg(long)]
        oracle_delta: Option<f64>,
    },
    /// Print the gossip-matrix spectrum of the config's network.
    Spectrum {
        #[arg(long)]
        config: PathBuf,
        /// Also write W_tilde.csv and W.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Certification(_) => 3,
        Error::Config(_) | Error::Parse(_) | Error::Parameter(_) | Error::DegenerateNetwork(_) => 2,
        Error::Io { .. } => 2,
        _ => 1,
    }
}

fn load(path: &std::path::Path, seed: Option<u64>) -> Result<RunConfig, Error> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Run { config, seed, out } => {
            let cfg = load(&config, seed)?;
            let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(default_out_dir);
            let exp = run_experiment(&cfg)?;
            emit_outputs(&exp.report, &exp.trace, &dir)?;
            let r = &exp.report;
            println!("N = {}, final gap = {:?}, penalized gap = {:?}", r.n, r.final_gap, r.penalized_gap);
            println!(
                "consensus x = {:e} (bound {:?}), y = {:e} (bound {:?})",
                r.consensus_x, r.consensus_bound_x, r.consensus_y, r.consensus_bound_y
            );
            println!(
                "rounds = {} (predicted {}), H calls per node = {} (predicted {:.0})",
                r.communication_rounds,
                r.predicted.communication_rounds,
                r.h_calls_per_node,
                r.predicted.h_calls_per_node
            );
            println!("outputs written to {}", dir.display());
        }
        Command::Certify {
            config,
            seed,
            triples,
            oracle_m,
            oracle_delta,
        } => {
            let cfg = load(&config, seed)?;
            let rep = certify_config(&cfg, triples, oracle_m, oracle_delta)?;
            println!("certified on {} triples, worst slack {:e}", rep.triples, rep.worst_slack);
        }
        Command::Spectrum { config, out } => {
            let cfg = load(&config, None)?;
            let net = cfg.network.build()?;
            println!("eigenvalues = {:?}", net.eigenvalues());
            println!(
                "lambda_max = {}, lambda_min_plus = {}, chi = {}",
                net.lambda_max(),
                net.lambda_min_plus(),
                net.chi()
            );
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
                    path: dir.clone(),
                    source: e,
                })?;
                for (name, mat) in [("W_tilde.csv", net.gossip_matrix()), ("W.csv", net.sqrt_matrix())] {
                    let path = dir.join(name);
                    let file = std::fs::File::create(&path).map_err(|e| Error::Io {
                        path: path.clone(),
                        source: e,
                    })?;
                    NetworkModel::write_matrix_csv(mat, file)?;
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
