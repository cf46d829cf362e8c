use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use authds::bench::{run_matrix, BenchConfig, Mode, Structure};
use authds::games::{
    self, GameConfig, GameReport, GuessData, RandomIndex, RandomSubstitution, ReplayData, ReplayIndex, ReplayStack,
};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "authds", version, about = "Benchmarks and integrity games for authenticated containers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Game {
    Collision,
    Stack,
    QueueIndex,
    QueueData,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    Replay,
    Random,
}

#[derive(Subcommand)]
enum Command {
    /// Time authenticated containers against unauthenticated baselines.
    Bench {
        /// Comma-separated list of stack, queue, rbtree.
        #[arg(long, default_value = "stack")]
        structure: String,
        /// Comma-separated list of cmac128, pac32, trunc:<b>.
        #[arg(long, default_value = "cmac128")]
        backend: String,
        /// Insertions per run (followed by as many removals).
        #[arg(long, default_value_t = 500)]
        ops: u64,
        #[arg(long, default_value_t = 10_000)]
        runs: u64,
        #[arg(long, default_value = "auth")]
        mode: String,
        #[arg(long, env = "AUTHDS_SEED", default_value_t = 0)]
        seed: u64,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Play a Monte-Carlo integrity game and print a JSON report.
    Games {
        #[arg(long, value_enum)]
        game: Game,
        #[arg(long, default_value_t = 8)]
        b: u32,
        #[arg(long, default_value_t = 8)]
        q: u64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, env = "AUTHDS_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Strategy::Random)]
        adversary: Strategy,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Bench {
            structure,
            backend,
            ops,
            runs,
            mode,
            seed,
            out,
            format,
        } => {
            let mode: Mode = mode.parse()?;
            let mut configs = Vec::new();
            for s in structure.split(',') {
                let s: Structure = s.trim().parse()?;
                for b in backend.split(',') {
                    configs.push(BenchConfig::new(s, b.trim(), mode, seed).with_size(ops, runs));
                }
            }
            let report = run_matrix(&configs)?;
            let text = match format {
                Format::Json => report.to_json() + "\n",
                Format::Csv => report.to_csv(),
            };
            match out {
                Some(path) => fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
        Command::Games {
            game,
            b,
            q,
            trials,
            seed,
            adversary,
        } => {
            let cfg = GameConfig::new(b, q, trials, seed);
            let report: GameReport = match (game, adversary) {
                (Game::Collision, _) => games::run_mac_collision(&cfg)?,
                (Game::Stack, Strategy::Replay) => games::run_stack_game(&cfg, &ReplayStack::default())?,
                (Game::Stack, Strategy::Random) => games::run_stack_game(&cfg, &RandomSubstitution)?,
                (Game::QueueIndex, Strategy::Replay) => games::run_queue_index_game(&cfg, &ReplayIndex::default())?,
                (Game::QueueIndex, Strategy::Random) => games::run_queue_index_game(&cfg, &RandomIndex)?,
                (Game::QueueData, Strategy::Replay) => games::run_queue_data_game(&cfg, &ReplayData::default())?,
                (Game::QueueData, Strategy::Random) => games::run_queue_data_game(&cfg, &GuessData)?,
            };
            println!("{}", report.to_json());
        }
    }
    Ok(())
}
