//! `mwk`: command-line entry point for the protocol model.
//!
//! Every command prints one JSON document on stdout. Exit status is 0 on
//! success, 1 when the input fails validation and 2 on usage errors.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mwk_core::BackendId;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{CliConfig, Features};

#[derive(Debug, Parser)]
#[command(name = "mwk", version, about = "Idealized MimbleWimble protocol model")]
struct Cli {
    /// Group backend.
    #[arg(long, global = true, env = "MWK_BACKEND", value_parser = parse_backend)]
    backend: Option<BackendId>,
    /// TOML configuration file.
    #[arg(long, global = true, env = "MWK_CONFIG")]
    config: Option<PathBuf>,
    /// RNG seed.
    #[arg(long, global = true, env = "MWK_SEED")]
    seed: Option<u64>,
    /// Machine mode: silence the human-readable log on stderr.
    #[arg(long, global = true, env = "MWK_JSON")]
    json: bool,
    /// Enforce output incubation periods.
    #[arg(long, global = true, env = "MWK_INCUBATION")]
    incubation: bool,
    /// Enable Dandelion stem relaying in simulations.
    #[arg(long, global = true, env = "MWK_DANDELION")]
    dandelion: bool,
    /// Add a zero-value dummy output to each simulated transaction.
    #[arg(long, global = true, env = "MWK_BEAM_DUMMY")]
    beam_dummy: bool,
    #[command(subcommand)]
    command: Command,
}

fn parse_backend(s: &str) -> Result<BackendId, String> {
    s.parse().map_err(|e: mwk_core::GroupError| e.to_string())
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print group parameters and fresh openings with their commitments.
    Keys(commands::KeysArgs),
    #[command(subcommand)]
    Tx(TxCommand),
    #[command(subcommand)]
    Block(BlockCommand),
    #[command(subcommand)]
    Chain(ChainCommand),
    #[command(subcommand)]
    Sim(SimCommand),
    #[command(subcommand)]
    Game(GameCommand),
    #[command(subcommand)]
    Node(NodeCommand),
    #[command(subcommand)]
    Fcr(FcrCommand),
}

#[derive(Debug, Subcommand)]
enum TxCommand {
    /// Build a balanced, signed transaction from openings.
    Build(commands::TxBuildArgs),
    /// Check range proofs, balance and the kernel signature.
    Verify(FileArg),
}

#[derive(Debug, Subcommand)]
enum BlockCommand {
    /// Aggregate transactions, aggregates or blocks into one block.
    Join(commands::JoinArgs),
    /// Cancel outputs spent within the block.
    Cutthrough(FileArg),
    /// Check block validity.
    Verify(FileArg),
}

#[derive(Debug, Subcommand)]
enum ChainCommand {
    /// Write a new chain file holding genesis and an optional grant block.
    Init(commands::ChainInitArgs),
    /// Replay a chain file block by block.
    Validate(commands::ChainValidateArgs),
    /// Validate a transaction or block against a chain and append it.
    Append(commands::ChainAppendArgs),
}

#[derive(Debug, Subcommand)]
enum SimCommand {
    /// Run a scenario and print the report.
    Run(commands::SimRunArgs),
    /// Independent single-transaction runs; stem statistics and fit.
    Stem(commands::SimStemArgs),
}

#[derive(Debug, Subcommand)]
enum GameCommand {
    /// Play a commitment security game against a built-in adversary.
    Run(commands::GameArgs),
}

#[derive(Debug, Subcommand)]
enum NodeCommand {
    /// Apply one local action to a node state file.
    Step(commands::NodeStepArgs),
    /// Deliver a packet to a consensus node state file.
    Rcv(commands::NodeRcvArgs),
    /// Let a consensus node try to mint a block.
    Mint(commands::NodeMintArgs),
}

#[derive(Debug, Subcommand)]
enum FcrCommand {
    /// Check the fork-choice axioms over every short chain.
    Check(commands::FcrArgs),
}

#[derive(Debug, Args)]
struct FileArg {
    file: PathBuf,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> CliError {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn usage(e: impl std::fmt::Display) -> CliError {
        CliError::Usage(e.to_string())
    }
}

/// A command's verdict: the JSON document and whether validation passed.
pub struct Outcome {
    pub ok: bool,
    pub body: Value,
}

impl Outcome {
    pub fn ok(body: Value) -> Outcome {
        Outcome { ok: true, body }
    }

    pub fn fail(body: Value) -> Outcome {
        Outcome { ok: false, body }
    }
}

/// Resolved global settings.
pub struct Ctx {
    pub cfg: CliConfig,
    pub backend: BackendId,
    pub seed: u64,
    pub features: Features,
    pub range_bits: u32,
    pub grant_value: u64,
    pub quiet: bool,
}

impl Ctx {
    pub fn log(&self, msg: impl std::fmt::Display) {
        if !self.quiet {
            eprintln!("mwk: {msg}");
        }
    }
}

fn resolve(cli: &Cli) -> Result<Ctx, CliError> {
    let cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    let f = cfg.features;
    Ok(Ctx {
        backend: cli.backend.or(cfg.backend).unwrap_or(BackendId::Curve),
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        features: Features {
            incubation: cli.incubation || f.incubation,
            dandelion: cli.dandelion || f.dandelion,
            beam_dummy: cli.beam_dummy || f.beam_dummy,
        },
        range_bits: cfg.range_bits.unwrap_or(8),
        grant_value: cfg.grant_value.unwrap_or(200),
        quiet: cli.json,
        cfg,
    })
}

fn dispatch(cli: &Cli, ctx: &Ctx) -> Result<Outcome, CliError> {
    use commands as c;
    match &cli.command {
        Command::Keys(a) => c::keys(ctx, a),
        Command::Tx(TxCommand::Build(a)) => c::tx_build(ctx, a),
        Command::Tx(TxCommand::Verify(a)) => c::tx_verify(ctx, &a.file),
        Command::Block(BlockCommand::Join(a)) => c::block_join(ctx, a),
        Command::Block(BlockCommand::Cutthrough(a)) => c::block_cutthrough(ctx, &a.file),
        Command::Block(BlockCommand::Verify(a)) => c::block_verify(ctx, &a.file),
        Command::Chain(ChainCommand::Init(a)) => c::chain_init(ctx, a),
        Command::Chain(ChainCommand::Validate(a)) => c::chain_validate(ctx, a),
        Command::Chain(ChainCommand::Append(a)) => c::chain_append(ctx, a),
        Command::Sim(SimCommand::Run(a)) => c::sim_run(ctx, a),
        Command::Sim(SimCommand::Stem(a)) => c::sim_stem(ctx, a),
        Command::Game(GameCommand::Run(a)) => c::game_run(ctx, a),
        Command::Node(NodeCommand::Step(a)) => c::node_step(ctx, a),
        Command::Node(NodeCommand::Rcv(a)) => c::node_rcv(ctx, a),
        Command::Node(NodeCommand::Mint(a)) => c::node_mint(ctx, a),
        Command::Fcr(FcrCommand::Check(a)) => c::fcr_check(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|ctx| dispatch(&cli, &ctx));
    let (code, body) = match result {
        Ok(o) => (if o.ok { 0 } else { 1 }, o.body),
        Err(e) => (2, json!({ "ok": false, "error": e.to_string() })),
    };
    println!("{}", serde_json::to_string(&body).expect("json values serialize"));
    ExitCode::from(code)
}
