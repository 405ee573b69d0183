use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use mwk_core::block::{block_aggregate_tx, validate_aggregate, BlockError};
use mwk_core::chain::{first_invalid_block, grant_transaction, rebuild_utxo};
use mwk_core::consensus::{self, fcr, genesis, hashb, ledger, ledger_hash, Proof, VafRule};
use mwk_core::secgames::{
    commitment_images, BindingAdversary, BreakingAdversary, ConstantGuesser, ExhaustiveOpeningAdversary,
    FlakyAdversary, HidingAdversary, HonestAdversary, RandomBindingAdversary, RandomGuesser,
};
use mwk_core::simnet::{self, expected_untraceability, run_seed, stem_chi_square, stem_experiment, Injection};
use mwk_core::{
    commit, cut_through, game_binding, game_dlog, game_hiding, setup, validate_append, validate_block,
    validate_transaction, Action, AggregateTransaction, Addr, Block, CBlock, Chain, ChainConfig, ChainState,
    ConsensusParams, GroupParams, LocState, Opening, Packet, Response, Scalar, Transaction, TxBuilder,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::{CliError, Ctx, Outcome};

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("model types serialize")
}

fn group(ctx: &Ctx) -> Result<GroupParams, CliError> {
    setup(ctx.backend, ctx.cfg.group.curve_seed, &ctx.cfg.group.tiny()).map_err(CliError::usage)
}

fn chain_config(ctx: &Ctx) -> ChainConfig {
    ChainConfig { incubation: ctx.features.incubation, grant_value: Some(ctx.grant_value) }
}

fn rng(ctx: &Ctx) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(ctx.seed)
}

/// `R` as a decimal integer or a hex scalar encoding.
fn parse_scalar(params: &GroupParams, s: &str) -> Result<Scalar, CliError> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(params.scalar(v));
    }
    let r = Scalar::from_hex(s).map_err(|e| CliError::Usage(format!("bad scalar {s:?}: {e}")))?;
    if !params.contains_scalar(&r) {
        return Err(CliError::Usage(format!("scalar {s:?} belongs to another backend")));
    }
    Ok(r)
}

/// `V` or `V:R`; a missing blinding factor is drawn from the RNG.
fn parse_opening(params: &GroupParams, s: &str, rng: &mut ChaCha20Rng) -> Result<Opening, CliError> {
    let (v, r) = match s.split_once(':') {
        Some((v, r)) => (v, Some(r)),
        None => (s, None),
    };
    let v = v.parse::<u64>().map_err(|_| CliError::Usage(format!("bad value in opening {s:?}")))?;
    let r = match r {
        Some(r) => parse_scalar(params, r)?,
        None => params.random_scalar(rng),
    };
    Ok(Opening::new(v, r))
}

/// A transaction, aggregate transaction or block, told apart by its fields.
enum Payload {
    Tx(Transaction),
    Aggregate(AggregateTransaction),
    Block(Block),
}

impl Payload {
    fn read(path: &Path) -> Result<Payload, CliError> {
        let v: Value = read_json(path)?;
        let bad = |e: serde_json::Error| CliError::Usage(format!("{}: {e}", path.display()));
        if v.get("kernel").is_some() {
            serde_json::from_value(v).map(Payload::Tx).map_err(bad)
        } else if v.get("ko").is_some() {
            serde_json::from_value(v).map(Payload::Block).map_err(bad)
        } else {
            serde_json::from_value(v).map(Payload::Aggregate).map_err(bad)
        }
    }

    fn into_block(self) -> Block {
        match self {
            Payload::Tx(t) => Block::from_aggregate(t.into()),
            Payload::Aggregate(a) => Block::from_aggregate(a),
            Payload::Block(b) => b,
        }
    }
}

#[derive(Debug, Args)]
pub struct KeysArgs {
    /// Number of openings to generate.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Value of every opening; random below `2^range_bits` if omitted.
    #[arg(long)]
    value: Option<u64>,
}

pub fn keys(ctx: &Ctx, a: &KeysArgs) -> Result<Outcome, CliError> {
    let p = group(ctx)?;
    let mut rng = rng(ctx);
    let keys: Vec<Value> = (0..a.count)
        .map(|_| {
            let v = a.value.unwrap_or_else(|| rand::Rng::gen_range(&mut rng, 0..1u64 << ctx.range_bits.min(63)));
            let o = Opening::new(v, p.random_scalar(&mut rng));
            json!({ "opening": o, "commitment": commit(&p, &o), "arg": format!("{}:{}", o.v, o.r.to_hex()) })
        })
        .collect();
    Ok(Outcome::ok(json!({ "ok": true, "params": p, "keys": keys })))
}

#[derive(Debug, Args)]
pub struct TxBuildArgs {
    /// Input opening `V:R` (repeatable).
    #[arg(long = "input", value_name = "V:R")]
    inputs: Vec<String>,
    /// Output opening `V[:R]` (repeatable).
    #[arg(long = "output", value_name = "V[:R]")]
    outputs: Vec<String>,
    /// Spend the public mint input worth the configured grant value.
    #[arg(long)]
    grant: bool,
    /// Kernel offset; random if omitted.
    #[arg(long)]
    offset: Option<String>,
    /// Incubation period per output, in blocks (repeatable).
    #[arg(long = "incubation-period", value_name = "BLOCKS")]
    incubation_periods: Vec<u64>,
    /// Range proof bit width; defaults to the configured `range_bits`.
    #[arg(long)]
    range_bits: Option<u32>,
    /// Also write the transaction to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn tx_build(ctx: &Ctx, a: &TxBuildArgs) -> Result<Outcome, CliError> {
    let p = group(ctx)?;
    let mut rng = rng(ctx);
    let mut b = TxBuilder::new(&p).range_bits(a.range_bits.unwrap_or(ctx.range_bits));
    if a.grant {
        b = b.input(Opening::new(ctx.grant_value, p.zero()));
    }
    for s in &a.inputs {
        b = b.input(parse_opening(&p, s, &mut rng)?);
    }
    for s in &a.outputs {
        b = b.output(parse_opening(&p, s, &mut rng)?);
    }
    let offset = match &a.offset {
        Some(s) => parse_scalar(&p, s)?,
        None => p.random_scalar(&mut rng),
    };
    b = b.offset(offset);
    if !a.incubation_periods.is_empty() {
        b = b.incubation(a.incubation_periods.clone());
    }
    let tx = b.build_with_rng(&mut rng).map_err(CliError::usage)?;
    let text = serde_json::to_string(&tx).expect("transactions serialize");
    if let Some(out) = &a.out {
        write_text(out, &text)?;
        ctx.log(format!("wrote {}", out.display()));
    }
    Ok(Outcome::ok(to_value(&tx)))
}

pub fn tx_verify(ctx: &Ctx, file: &Path) -> Result<Outcome, CliError> {
    let p = group(ctx)?;
    let verdict = match Payload::read(file)? {
        Payload::Tx(t) => validate_transaction(&p, &t).map_err(|e| (e.clause(), e.to_string())),
        Payload::Aggregate(t) => validate_aggregate(&p, &t).map_err(|e| (e.clause(), e.to_string())),
        Payload::Block(_) => return Err(CliError::Usage("expected a transaction, got a block".into())),
    };
    Ok(clause_outcome(ctx, verdict))
}

fn clause_outcome(ctx: &Ctx, verdict: Result<(), (&str, String)>) -> Outcome {
    match verdict {
        Ok(()) => Outcome::ok(json!({ "ok": true })),
        Err((clause, why)) => {
            ctx.log(why);
            Outcome::fail(json!({ "ok": false, "clause": clause }))
        }
    }
}

#[derive(Debug, Args)]
pub struct JoinArgs {
    /// Transaction, aggregate or block files.
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Write the block here as well.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn block_join(ctx: &Ctx, a: &JoinArgs) -> Result<Outcome, CliError> {
    let p = group(ctx)?;
    let mut b = Block::empty(&p);
    for f in &a.files {
        let agg = match Payload::read(f)?.into_block() {
            Block { genesis: true, .. } => return Err(CliError::Usage(format!("{}: cannot join genesis", f.display()))),
            blk => AggregateTransaction { inputs: blk.inputs, outputs: blk.outputs, kernels: blk.kernels, tko: blk.ko },
        };
        b = match block_aggregate_tx(&p, &agg, &b) {
            Ok(next) => next,
            Err(e) => {
                ctx.log(format!("{}: {e}", f.display()));
                let mut body = json!({ "ok": false, "file": f, "error": join_error_code(&e) });
                if let Some(c) = join_clause(&e) {
                    body["clause"] = json!(c);
                }
                return Ok(Outcome::fail(body));
            }
        };
    }
    if let Some(out) = &a.out {
        write_text(out, &serde_json::to_string(&b).expect("blocks serialize"))?;
    }
    Ok(Outcome::ok(to_value(&b)))
}

fn join_error_code(e: &BlockError) -> &'static str {
    match e {
        BlockError::InvalidTransaction(_) | BlockError::InvalidAggregate(_) => "invalid-operand",
        BlockError::InvalidBlock(_) => "invalid-block",
        BlockError::GenesisImmutable => "genesis-immutable",
        BlockError::DuplicateOutput(_) => "duplicate-output",
    }
}

fn join_clause(e: &BlockError) -> Option<&'static str> {
    match e {
        BlockError::InvalidTransaction(t) => Some(t.clause()),
        BlockError::InvalidAggregate(b) | BlockError::InvalidBlock(b) => Some(b.clause()),
        _ => None,
    }
}

pub fn block_cutthrough(ctx: &Ctx, file: &Path) -> Result<Outcome, CliError> {
    let b = Payload::read(file)?.into_block();
    let cut = cut_through(&b);
    ctx.log(format!("cancelled {} input/output pairs", b.inputs.len() - cut.inputs.len()));
    Ok(Outcome::ok(to_value(&cut)))
}

pub fn block_verify(ctx: &Ctx, file: &Path) -> Result<Outcome, CliError> {
    let p = group(ctx)?;
    let b = Payload::read(file)?.into_block();
    Ok(clause_outcome(ctx, validate_block(&p, &b).map_err(|e| (e.clause(), e.to_string()))))
}

fn chain_path(ctx: &Ctx, given: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    given
        .or(ctx.cfg.paths.chain.as_ref())
        .cloned()
        .ok_or_else(|| CliError::Usage("no chain file given and paths.chain is not configured".into()))
}

fn read_chain(path: &Path) -> Result<Chain, CliError> {
    Chain::from_jsonl(&read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Args)]
pub struct ChainInitArgs {
    file: Option<PathBuf>,
    /// Grant output `V[:R]` (repeatable); values must add up to the grant value.
    #[arg(long = "grant", value_name = "V[:R]")]
    grants: Vec<String>,
    /// Overwrite an existing file.
    #[arg(long)]
    force: bool,
}

pub fn chain_init(ctx: &Ctx, a: &ChainInitArgs) -> Result<Outcome, CliError> {
    let path = chain_path(ctx, a.file.as_ref())?;
    if path.exists() && !a.force {
        return Err(CliError::Usage(format!("{} exists; pass --force to overwrite", path.display())));
    }
    let p = group(ctx)?;
    let cfg = chain_config(ctx);
    let mut rng = rng(ctx);
    let mut state = ChainState::new(p.clone(), cfg);
    let mut outputs = Vec::new();
    if !a.grants.is_empty() {
        let outs = a.grants.iter().map(|s| parse_opening(&p, s, &mut rng)).collect::<Result<Vec<_>, _>>()?;
        let tx = grant_transaction(&p, &cfg, &outs, ctx.range_bits).map_err(CliError::usage)?;
        let r = state.apply(&Action::SubmitTx { tx });
        if r.is_ok() {
            state.apply(&Action::MineBlock);
        } else {
            return Ok(Outcome::fail(json!({ "ok": false, "response": r })));
        }
        outputs = outs;
    }
    write_text(&path, &state.chain().to_jsonl())?;
    ctx.log(format!("wrote {}", path.display()));
    Ok(Outcome::ok(json!({ "ok": true, "blocks": state.chain().len(), "grants": outputs })))
}

#[derive(Debug, Args)]
pub struct ChainValidateArgs {
    file: Option<PathBuf>,
}

pub fn chain_validate(ctx: &Ctx, a: &ChainValidateArgs) -> Result<Outcome, CliError> {
    let p = group(ctx)?;
    let cfg = chain_config(ctx);
    let chain = read_chain(&chain_path(ctx, a.file.as_ref())?)?;
    Ok(match first_invalid_block(&p, &cfg, &chain) {
        None => {
            let utxo = rebuild_utxo(&p, &cfg, &chain);
            Outcome::ok(json!({ "ok": true, "blocks": chain.len(), "utxos": utxo.len() }))
        }
        Some((i, code)) => Outcome::fail(json!({ "ok": false, "block": i, "error": code })),
    })
}

#[derive(Debug, Args)]
pub struct ChainAppendArgs {
    /// `[CHAIN] TXFILE`; the chain defaults to `paths.chain`.
    #[arg(num_args = 1..=2, required = true)]
    files: Vec<PathBuf>,
    /// Validate only; leave the chain file untouched.
    #[arg(long)]
    dry_run: bool,
}

pub fn chain_append(ctx: &Ctx, a: &ChainAppendArgs) -> Result<Outcome, CliError> {
    let (chain_file, tx_file) = match a.files.as_slice() {
        [c, t] => (chain_path(ctx, Some(c))?, t),
        [t] => (chain_path(ctx, None)?, t),
        _ => unreachable!("clap enforces one or two files"),
    };
    let p = group(ctx)?;
    let cfg = chain_config(ctx);
    let chain = read_chain(&chain_file)?;
    if let Some((i, code)) = first_invalid_block(&p, &cfg, &chain) {
        return Ok(Outcome::fail(json!({ "ok": false, "block": i, "error": code })));
    }
    let block = Payload::read(tx_file)?.into_block();
    match validate_append(&p, &cfg, &chain, &block) {
        Response::Ok => {
            if !a.dry_run {
                let mut text = read_text(&chain_file)?;
                if !text.is_empty() && !text.ends_with('\n') {
                    text.push('\n');
                }
                text.push_str(&serde_json::to_string(&block).expect("blocks serialize"));
                text.push('\n');
                write_text(&chain_file, &text)?;
            }
            Ok(Outcome::ok(json!({ "ok": true, "blocks": chain.len() + 1 })))
        }
        Response::Error(code) => Ok(Outcome::fail(json!({ "ok": false, "error": code }))),
    }
}

#[derive(Debug, Args)]
pub struct SimRunArgs {
    /// JSON array of injections; a standard scenario is used if omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Transactions in the standard scenario.
    #[arg(long, default_value_t = 3)]
    txs: u32,
    /// Ticks between mint rounds in the standard scenario.
    #[arg(long, default_value_t = 20)]
    mint_every: u64,
    /// Mint rounds in the standard scenario.
    #[arg(long, default_value_t = 3)]
    rounds: u32,
}

pub fn sim_run(ctx: &Ctx, a: &SimRunArgs) -> Result<Outcome, CliError> {
    let cfg = ctx.cfg.sim_config(ctx.backend, ctx.seed, ctx.features);
    let scenario: Vec<Injection> = match &a.scenario {
        Some(f) => read_json(f)?,
        None => simnet::standard_scenario(&cfg, a.txs, a.mint_every, a.rounds),
    };
    let report = simnet::run(&cfg, &scenario).map_err(CliError::usage)?;
    let text = serde_json::to_string(&report).expect("reports serialize");
    if let Some(out) = a.report.as_ref().or(ctx.cfg.paths.report.as_ref()) {
        write_text(out, &text)?;
        ctx.log(format!("wrote {}", out.display()));
    }
    ctx.log(format!("converged: {} after {} events", report.converged, report.events));
    Ok(Outcome::ok(to_value(&report)))
}

#[derive(Debug, Args)]
pub struct SimStemArgs {
    /// Independent single-transaction runs.
    #[arg(long, default_value_t = 2000)]
    runs: usize,
    /// Significance level of the goodness-of-fit test.
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
}

pub fn sim_stem(ctx: &Ctx, a: &SimStemArgs) -> Result<Outcome, CliError> {
    let mut cfg = ctx.cfg.sim_config(ctx.backend, ctx.seed, ctx.features);
    cfg.dandelion.enabled = true;
    let e = stem_experiment(&cfg, a.runs).map_err(CliError::usage)?;
    let chi = stem_chi_square(&e.histogram, cfg.dandelion.coin_p, cfg.dandelion.max_stem);
    let mut ok = chi.p_value >= a.alpha;
    let mut body = json!({
        "runs": e.runs,
        "histogram": e.histogram,
        "chi_square": chi,
        "untraceability": e.untraceability,
        "expected_untraceability": expected_untraceability(cfg.n_nodes, cfg.dandelion.coin_p, cfg.dandelion.max_stem),
    });
    if cfg.beam_dummy.enabled {
        let mut bad = 0;
        for (i, (r, t)) in e.records.iter().zip(&e.txs).enumerate() {
            // each run derives its own generators from its seed
            let g = setup(cfg.backend, run_seed(cfg.seed, i as u64), &cfg.tiny).map_err(CliError::usage)?;
            let good = r.dummy.as_ref().is_some_and(|d| {
                d.opening.v == 0
                    && commit(&g, &d.opening) == d.commitment
                    && t.outputs.contains(&d.commitment)
                    && t.kernels.iter().any(|k| k.incubation == [d.incubation])
                    && validate_aggregate(&g, t).is_ok()
            });
            bad += usize::from(!good);
        }
        ok &= bad == 0;
        body["dummies"] = json!({ "checked": e.records.len(), "bad": bad });
    }
    body["ok"] = json!(ok);
    ctx.log(format!("chi-square {:.3} on {} df, p = {:.4}", chi.statistic, chi.df, chi.p_value));
    Ok(Outcome { ok, body })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GameKind {
    Binding,
    Hiding,
    Dlog,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AdversaryKind {
    Breaking,
    Flaky,
    Honest,
    Random,
    Exhaustive,
    Guess,
    Constant,
}

#[derive(Debug, Args)]
pub struct GameArgs {
    #[arg(long, value_enum)]
    game: GameKind,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    /// Defaults to `breaking` for binding and dlog, `exhaustive` for hiding.
    #[arg(long, value_enum)]
    adversary: Option<AdversaryKind>,
    /// Success probability of the flaky adversary.
    #[arg(long, default_value_t = 0.5)]
    p: f64,
}

fn binding_adversary(p: &GroupParams, a: &GameArgs) -> Result<Box<dyn BindingAdversary>, CliError> {
    Ok(match a.adversary.unwrap_or(AdversaryKind::Breaking) {
        AdversaryKind::Breaking => Box::new(BreakingAdversary::new(p).map_err(CliError::usage)?),
        AdversaryKind::Flaky => Box::new(FlakyAdversary::new(p, a.p).map_err(CliError::usage)?),
        AdversaryKind::Honest => Box::new(HonestAdversary),
        AdversaryKind::Random => Box::new(RandomBindingAdversary),
        other => return Err(CliError::Usage(format!("{other:?} is not a binding adversary"))),
    })
}

fn hiding_adversary(p: &GroupParams, a: &GameArgs) -> Result<Box<dyn HidingAdversary>, CliError> {
    Ok(match a.adversary.unwrap_or(AdversaryKind::Exhaustive) {
        AdversaryKind::Exhaustive => Box::new(ExhaustiveOpeningAdversary::new(p).map_err(CliError::usage)?),
        AdversaryKind::Guess | AdversaryKind::Random => Box::new(RandomGuesser),
        AdversaryKind::Constant => Box::new(ConstantGuesser(false)),
        other => return Err(CliError::Usage(format!("{other:?} is not a hiding adversary"))),
    })
}

pub fn game_run(ctx: &Ctx, a: &GameArgs) -> Result<Outcome, CliError> {
    let p = group(ctx)?;
    let body = match a.game {
        GameKind::Binding => {
            let r = game_binding(&p, binding_adversary(&p, a)?.as_mut(), a.trials, ctx.seed);
            json!({ "game": "binding", "result": r })
        }
        GameKind::Dlog => {
            let adv = game_binding(&p, binding_adversary(&p, a)?.as_mut(), a.trials, ctx.seed);
            let inv = game_dlog(&p, binding_adversary(&p, a)?.as_mut(), a.trials, ctx.seed);
            json!({ "game": "dlog", "result": inv, "adversary": adv, "rates_equal": adv.successes == inv.successes })
        }
        GameKind::Hiding => {
            let r = game_hiding(&p, hiding_adversary(&p, a)?.as_mut(), a.trials, ctx.seed).map_err(CliError::usage)?;
            let images_equal = match (commitment_images(&p, 0), commitment_images(&p, 1)) {
                (Ok(x), Ok(y)) => Some(x == y),
                _ => None,
            };
            json!({ "game": "hiding", "result": r, "images_equal": images_equal })
        }
    };
    let mut body = body;
    body["ok"] = json!(true);
    body["backend"] = json!(ctx.backend);
    Ok(Outcome::ok(body))
}

fn state_path(ctx: &Ctx, given: Option<&PathBuf>) -> Result<PathBuf, CliError> {
    given
        .or(ctx.cfg.paths.state.as_ref())
        .cloned()
        .ok_or_else(|| CliError::Usage("no state file given and paths.state is not configured".into()))
}

#[derive(Debug, Args)]
pub struct NodeStepArgs {
    /// `[STATE] ACTION`. A missing state file starts from genesis. ACTION is
    /// an action file, a transaction or block file, or the literal
    /// `mine-block`.
    #[arg(num_args = 1..=2, required = true)]
    args: Vec<PathBuf>,
}

pub fn node_step(ctx: &Ctx, a: &NodeStepArgs) -> Result<Outcome, CliError> {
    let (state_file, action_arg) = match a.args.as_slice() {
        [s, act] => (state_path(ctx, Some(s))?, act),
        [act] => (state_path(ctx, None)?, act),
        _ => unreachable!("clap enforces one or two arguments"),
    };
    let mut state = if state_file.exists() {
        let s: ChainState = read_json(&state_file)?;
        if !s.valid_state() {
            return Err(CliError::Usage(format!("{}: state is inconsistent", state_file.display())));
        }
        s
    } else {
        ChainState::new(group(ctx)?, chain_config(ctx))
    };
    let action = if action_arg.as_os_str() == "mine-block" { Action::MineBlock } else { read_action(action_arg)? };
    let response = state.apply(&action);
    if response.is_ok() {
        write_text(&state_file, &state.snapshot())?;
    }
    let body = json!({
        "ok": response.is_ok(),
        "response": response,
        "blocks": state.chain().len(),
        "mempool": state.mempool().len(),
        "utxos": state.utxo().len(),
    });
    Ok(Outcome { ok: response.is_ok(), body })
}

/// An action file, or a bare transaction (submitted) or block (appended).
fn read_action(path: &Path) -> Result<Action, CliError> {
    let v: Value = read_json(path)?;
    if v.get("action").is_some() {
        return serde_json::from_value(v).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())));
    }
    Ok(match Payload::read(path)? {
        Payload::Tx(t) => Action::SubmitTx { tx: t.into() },
        Payload::Aggregate(tx) => Action::SubmitTx { tx },
        Payload::Block(block) => Action::AppendBlock { block },
    })
}

fn consensus_params(ctx: &Ctx) -> Result<ConsensusParams, CliError> {
    let sim = ctx.cfg.sim_config(ctx.backend, ctx.seed, ctx.features);
    let vaf = sim.vaf.clone().unwrap_or_else(|| VafRule::RoundRobin { schedule: sim.addrs().collect() });
    let mut p = ConsensusParams::new(group(ctx)?, vaf).with_grant(ctx.grant_value);
    p.pool_cap = sim.pool_cap;
    Ok(p)
}

fn load_loc(path: &Path, addr: Option<u32>) -> Result<LocState, CliError> {
    if path.exists() {
        return read_json(path);
    }
    match addr {
        Some(a) => Ok(LocState::new(Addr(a))),
        None => Err(CliError::Usage(format!("{} does not exist; pass --addr to create it", path.display()))),
    }
}

fn loc_outcome(path: &Path, before: &LocState, st: &LocState, out: &BTreeSet<Packet>) -> Result<Outcome, CliError> {
    write_text(path, &serde_json::to_string(st).expect("states serialize"))?;
    Ok(Outcome::ok(json!({ "ok": true, "changed": before != st, "state": st, "out": out })))
}

#[derive(Debug, Args)]
pub struct NodeRcvArgs {
    state: PathBuf,
    /// JSON packet file.
    packet: PathBuf,
    /// Address for a fresh node when the state file does not exist.
    #[arg(long)]
    addr: Option<u32>,
}

pub fn node_rcv(ctx: &Ctx, a: &NodeRcvArgs) -> Result<Outcome, CliError> {
    let params = consensus_params(ctx)?;
    let st = load_loc(&a.state, a.addr)?;
    let packet: Packet = read_json(&a.packet)?;
    let (next, out) = consensus::rcv(&params, &st, &packet);
    ctx.log(format!("{} from {} produced {} packets", packet.msg.kind(), packet.from, out.len()));
    loc_outcome(&a.state, &st, &next, &out)
}

#[derive(Debug, Args)]
pub struct NodeMintArgs {
    state: PathBuf,
    #[arg(long)]
    addr: Option<u32>,
    /// Current time passed to the eligibility check.
    #[arg(long, default_value_t = 0)]
    now: u64,
}

pub fn node_mint(ctx: &Ctx, a: &NodeMintArgs) -> Result<Outcome, CliError> {
    let params = consensus_params(ctx)?;
    let st = load_loc(&a.state, a.addr)?;
    let (next, out) = consensus::mint(&params, &st, a.now);
    let mut o = loc_outcome(&a.state, &st, &next, &out)?;
    let led = ledger(&params, &next.bf);
    o.body["ledger_hash"] = json!(ledger_hash(&led));
    o.body["ledger_height"] = json!(led.len());
    Ok(o)
}

#[derive(Debug, Args)]
pub struct FcrArgs {
    /// Longest chain enumerated.
    #[arg(long, default_value_t = 4)]
    max_len: usize,
    /// Number of distinct blocks chains are drawn from.
    #[arg(long, default_value_t = 3)]
    alphabet: u32,
}

pub fn fcr_check(a: &FcrArgs) -> Result<Outcome, CliError> {
    if a.alphabet == 0 || a.max_len > 6 || (a.alphabet as f64).powi(a.max_len as i32) > 5000.0 {
        return Err(CliError::Usage("chain space too large; keep alphabet^max_len <= 5000 and max_len <= 6".into()));
    }
    let alphabet: Vec<CBlock> = (0..a.alphabet)
        .map(|k| CBlock { prev: hashb(&genesis()), txs: vec![], pf: Proof { minter: Addr(k), height: 1 } })
        .collect();
    let mut chains: Vec<Vec<CBlock>> = vec![vec![]];
    let mut frontier = chains.clone();
    for _ in 0..a.max_len {
        frontier = frontier
            .iter()
            .flat_map(|c| alphabet.iter().map(move |b| [c.as_slice(), std::slice::from_ref(b)].concat()))
            .collect();
        chains.extend(frontier.iter().cloned());
    }
    let n = chains.len();
    let less: Vec<Vec<bool>> = chains.iter().map(|x| chains.iter().map(|y| fcr(x, y)).collect()).collect();
    let mut v = Violations::default();
    for i in 0..n {
        v.irreflexivity += u64::from(less[i][i]);
        for j in 0..n {
            v.totality += u64::from(!(less[i][j] || less[j][i] || i == j));
            v.prefix_order += u64::from(chains[j].starts_with(&chains[i]) && !(less[i][j] || i == j));
            if less[i][j] {
                v.transitivity += (0..n).filter(|&k| less[j][k] && !less[i][k]).count() as u64;
            }
        }
    }
    for x in &chains {
        for y in chains.iter().filter(|y| x.len() + y.len() < a.max_len) {
            for b in &alphabet {
                let ext = [x.as_slice(), y.as_slice(), std::slice::from_ref(b)].concat();
                v.extension += u64::from(!fcr(x, &ext));
            }
        }
    }
    let total = v.irreflexivity + v.totality + v.transitivity + v.prefix_order + v.extension;
    let body = json!({ "ok": total == 0, "chains": n, "violations": total, "by_axiom": v });
    Ok(Outcome { ok: total == 0, body })
}

#[derive(Debug, Default, Serialize)]
struct Violations {
    totality: u64,
    irreflexivity: u64,
    transitivity: u64,
    extension: u64,
    prefix_order: u64,
}
