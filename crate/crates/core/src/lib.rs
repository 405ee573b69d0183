//! An executable model of the MimbleWimble protocol: Pedersen commitments,
//! confidential transactions, blocks with cut-through, chain validation, a
//! consensus node state machine and a deterministic network simulator, plus
//! harnesses for the commitment security games.

pub mod block;
pub mod chain;
pub mod codec;
pub mod commit;
pub mod consensus;
pub mod group;
pub mod secgames;
pub mod simnet;
pub mod tx;

pub use commit::{commit, switch_commit, verify_opening, CommitMode, Commitment, Opening};
pub use group::{brute_force_dlog, scalar_mul, setup, BackendId, GroupElement, GroupError, GroupParams, Scalar, TinyConfig};
pub use tx::{build_transaction, is_balanced, validate_transaction, Transaction, TxBuilder, TxInvalid, TxKernel};
pub use block::{coinjoin, cut_through, validate_block, AggregateTransaction, Block, BlockInvalid};
pub use chain::{valid_chain, validate_append, Action, Chain, ChainConfig, ChainState, ErrorCode, Response, UtxoSet};
pub use consensus::{hashb, hasht, ledger, mint, rcv, Addr, CBlock, ConsensusParams, HashVal, LocState, Msg, Packet};
pub use secgames::{game_binding, game_dlog, game_hiding, inversor_dlog, GameResult};
pub use simnet::{SimConfig, SimReport, Simulator};
