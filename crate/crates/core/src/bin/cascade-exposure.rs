use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use cascade_exposure::experiment::{
    compare_runs, run_experiment, write_comparison, ExperimentSpec,
};
use cascade_exposure::synth::{generate, write_corpus, SynthConfig};
use cascade_exposure::{Algorithm, Error, RewardKind};

#[derive(Parser)]
#[command(
    name = "cascade-exposure",
    version,
    about = "Exposure-aware cascading bandit experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
#[allow(clippy::large_enum_variant)]
enum Command {
    /// Run a grid of simulations and write CSV results.
    Run(RunArgs),
    /// McNemar comparison of two cell directories sharing a user schedule.
    Compare {
        a: PathBuf,
        b: PathBuf,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic MovieLens-style corpus (ratings.csv, items.csv).
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SynthConfig::default().users)]
        users: usize,
        #[arg(long, default_value_t = SynthConfig::default().items)]
        items: usize,
        #[arg(long, default_value_t = SynthConfig::default().seed)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment file with [data], [sim] and [grid] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding ratings.csv and items.csv, a ratings file, or `synthetic`.
    #[arg(long)]
    dataset: Option<String>,
    /// Sampling preset applied before other overrides.
    #[arg(long, value_parser = ["movielens", "amazon"])]
    preset: Option<String>,
    #[arg(long = "algo")]
    algorithms: Vec<Algorithm>,
    #[arg(long = "reward")]
    rewards: Vec<RewardKind>,
    #[arg(long = "T")]
    rounds: Option<usize>,
    #[arg(long = "K")]
    list_size: Option<usize>,
    #[arg(long = "c")]
    c: Vec<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Latent feature dimension.
    #[arg(long = "d")]
    d_latent: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// T=10000, K=10.
    #[arg(long)]
    desk: bool,
    /// One model for all users instead of one per user.
    #[arg(long)]
    shared_model: bool,
    #[arg(long)]
    emit_every: Option<usize>,
}

impl RunArgs {
    fn spec(self) -> Result<ExperimentSpec, Error> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_file(path)?,
            None => ExperimentSpec::default(),
        };
        match self.preset.as_deref() {
            Some("amazon") => spec.data = cascade_exposure::experiment::DataSpec::amazon(),
            Some(_) => spec.data = cascade_exposure::experiment::DataSpec::movielens(),
            None => {}
        }
        if self.desk {
            spec = spec.desk();
        }
        if let Some(d) = &self.dataset {
            spec.data.set_dataset(d);
        }
        if !self.algorithms.is_empty() {
            spec.grid.algorithms = self.algorithms;
        }
        if !self.rewards.is_empty() {
            spec.grid.rewards = self.rewards;
        }
        if !self.c.is_empty() {
            spec.grid.c = self.c;
        }
        if !self.seeds.is_empty() {
            spec.grid.seeds = self.seeds;
        }
        let sim = &mut spec.sim;
        sim.rounds = self.rounds.unwrap_or(sim.rounds);
        sim.list_size = self.list_size.unwrap_or(sim.list_size);
        sim.gamma = self.gamma.unwrap_or(sim.gamma);
        sim.lambda = self.lambda.unwrap_or(sim.lambda);
        sim.d_latent = self.d_latent.unwrap_or(sim.d_latent);
        sim.emit_every = self.emit_every.unwrap_or(sim.emit_every);
        sim.shared_model |= self.shared_model;
        if let Some(out) = self.out {
            spec.out = out;
        }
        Ok(spec)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidParameter(_) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => args
            .spec()
            .and_then(|spec| run_experiment(&spec))
            .map(|report| {
                for b in &report.best {
                    println!(
                        "{:<7} {:<9} c={:<5} clicks={:.1} EO={:.4} EI={:.4} IC={:.4}",
                        b.algorithm.label(),
                        b.reward.label(),
                        b.c,
                        b.clicks,
                        b.eo,
                        b.ei,
                        b.ic
                    );
                }
                if report.failures() > 0 {
                    error!("{} cells failed; see failures.csv", report.failures());
                    3
                } else {
                    0
                }
            }),
        Command::Compare { a, b, out } => compare_runs(&a, &b).and_then(|tests| {
            let path = out.unwrap_or_else(|| PathBuf::from("/dev/stdout"));
            write_comparison(&path, &tests).map(|_| 0)
        }),
        Command::Synth {
            out,
            users,
            items,
            seed,
        } => {
            let cfg = SynthConfig {
                users,
                items,
                seed,
                ..SynthConfig::default()
            };
            generate(&cfg)
                .and_then(|raw| write_corpus(&raw, &out))
                .map(|(r, i)| {
                    println!("{}\n{}", r.display(), i.display());
                    0
                })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
