//! Token accounting and the artifact-only memory discipline.
//!
//! Dialogue lives in a [`ShortTermBuffer`] scoped to one interaction unit and
//! is dropped when the unit completes. The only thing that survives a unit is
//! the artifact it produced, kept in the [`LongTermStore`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::scheduler::{Artifact, TranscriptMessage};
use crate::topology::NodeId;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemoryError {
    #[error("node {0} already has a stored artifact")]
    AlreadyWritten(NodeId),
    #[error("node {0} is outside the store")]
    UnknownNode(NodeId),
    #[error("invalid token parameters: {0}")]
    InvalidParams(String),
}

/// Maps text to a token count.
pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

/// Whitespace-delimited words; the token unit used with the mock backend.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceTokenizer;

impl Tokenizer for WhitespaceTokenizer {
    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

pub fn count_tokens(text: &str) -> usize {
    WhitespaceTokenizer.count(text)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CallRecord {
    pub agent: String,
    pub prompt_tokens: u64,
    pub reply_tokens: u64,
}

/// Per-call token log with running per-agent totals of prompt (context)
/// tokens.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TokenLedger {
    pub per_agent_context_tokens: BTreeMap<String, u64>,
    pub per_call: Vec<CallRecord>,
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_call(&mut self, agent: &str, prompt_tokens: u64, reply_tokens: u64) {
        self.per_call.push(CallRecord { agent: agent.to_string(), prompt_tokens, reply_tokens });
        *self.per_agent_context_tokens.entry(agent.to_string()).or_insert(0) += prompt_tokens;
    }

    /// Appends every call of `other`, in order.
    pub fn extend(&mut self, other: &TokenLedger) {
        for call in &other.per_call {
            self.record_call(&call.agent, call.prompt_tokens, call.reply_tokens);
        }
    }

    pub fn total_prompt_tokens(&self) -> u64 {
        self.per_call.iter().map(|c| c.prompt_tokens).sum()
    }

    pub fn total_reply_tokens(&self) -> u64 {
        self.per_call.iter().map(|c| c.reply_tokens).sum()
    }

    pub fn call_count(&self) -> usize {
        self.per_call.len()
    }

    /// CSV with columns `agent_id,call_index,prompt_tokens,reply_tokens`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("agent_id,call_index,prompt_tokens,reply_tokens\n");
        for (i, call) in self.per_call.iter().enumerate() {
            let _ = writeln!(out, "{},{},{},{}", call.agent, i, call.prompt_tokens, call.reply_tokens);
        }
        out
    }
}

/// Ledger shared between concurrent workers.
#[derive(Debug, Default)]
pub struct SharedLedger(Mutex<TokenLedger>);

impl SharedLedger {
    pub fn record_call(&self, agent: &str, prompt_tokens: u64, reply_tokens: u64) {
        self.0.lock().expect("ledger lock").record_call(agent, prompt_tokens, reply_tokens);
    }

    pub fn snapshot(&self) -> TokenLedger {
        self.0.lock().expect("ledger lock").clone()
    }
}

/// At most one artifact per node, written once.
#[derive(Debug, Clone, Default)]
pub struct LongTermStore {
    per_node: Vec<Option<Artifact>>,
}

impl LongTermStore {
    pub fn new(node_count: usize) -> Self {
        Self { per_node: vec![None; node_count] }
    }

    pub fn write(&mut self, node: NodeId, artifact: Artifact) -> Result<(), MemoryError> {
        let slot = self.per_node.get_mut(node.0).ok_or(MemoryError::UnknownNode(node))?;
        if slot.is_some() {
            return Err(MemoryError::AlreadyWritten(node));
        }
        *slot = Some(artifact);
        Ok(())
    }

    pub fn get(&self, node: NodeId) -> Option<&Artifact> {
        self.per_node.get(node.0).and_then(Option::as_ref)
    }

    pub fn written_count(&self) -> usize {
        self.per_node.iter().filter(|a| a.is_some()).count()
    }

    pub fn into_artifacts(self) -> Vec<Option<Artifact>> {
        self.per_node
    }
}

/// Working memory of one interaction unit.
#[derive(Debug, Clone)]
pub struct ShortTermBuffer {
    unit: String,
    messages: Vec<TranscriptMessage>,
}

impl ShortTermBuffer {
    pub fn new(unit: impl Into<String>) -> Self {
        Self { unit: unit.into(), messages: Vec::new() }
    }

    pub fn unit(&self) -> &str {
        &self.unit
    }

    pub fn push(&mut self, message: TranscriptMessage) {
        self.messages.push(message);
    }

    pub fn messages(&self) -> &[TranscriptMessage] {
        &self.messages
    }

    /// Ends the unit: the buffer is consumed and its messages handed to the
    /// transcript, never to another unit's prompts.
    pub fn close(self) -> Vec<TranscriptMessage> {
        self.messages
    }
}

/// Lengths in tokens that parameterize the sink-agent cost model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TokenParams {
    /// Network scale (node count).
    pub n: u64,
    pub task: u64,
    pub profile: u64,
    pub instruction: u64,
    pub artifact: u64,
    /// Maximum exchange rounds per leg.
    pub rounds: u64,
}

impl TokenParams {
    /// All lengths must be positive and the network needs at least two nodes
    /// (the `2(n-2)` aggregation term is negative below that).
    pub fn new(n: u64, task: u64, profile: u64, instruction: u64, artifact: u64, rounds: u64) -> Result<Self, MemoryError> {
        if n < 2 {
            return Err(MemoryError::InvalidParams(format!("n must be at least 2, got {n}")));
        }
        for (name, v) in [("t", task), ("p", profile), ("i", instruction), ("s", artifact), ("m", rounds)] {
            if v == 0 {
                return Err(MemoryError::InvalidParams(format!("{name} must be positive")));
            }
        }
        Ok(Self { n, task, profile, instruction, artifact, rounds })
    }
}

/// Sink-agent context tokens in a mesh of `n` nodes.
///
/// * without memory control: `t + p + s + (2m-1)(i+s)(n(n-1)/2 + 2(n-2))`
/// * with memory control: `t + p + s + m(i+s)((n-1) + 2(n-2))`
pub fn closed_form_tokens(params: &TokenParams, memory_control: bool) -> u64 {
    let TokenParams { n, task, profile, instruction, artifact, rounds } = *params;
    let base = task + profile + artifact;
    let exchange = instruction + artifact;
    if memory_control {
        base + rounds * exchange * ((n - 1) + 2 * (n - 2))
    } else {
        base + (2 * rounds - 1) * exchange * (n * (n - 1) / 2 + 2 * (n - 2))
    }
}

/// Leading coefficients: `C = (2m-1)(i+s)/2` for the quadratic regime and
/// `C̄ = 3m(i+s)` for the linear one.
pub fn asymptotic_constants(params: &TokenParams) -> (f64, f64) {
    let exchange = (params.instruction + params.artifact) as f64;
    let m = params.rounds as f64;
    ((2.0 * m - 1.0) * exchange / 2.0, 3.0 * m * exchange)
}

/// Context tokens charged to one node's actor over a run.
///
/// `base` is task + profile + the first artifact the actor receives;
/// `dialogue` is the interaction history visible to it (its own refinement
/// legs under memory control, the full upstream dialogue otherwise);
/// `aggregation` is what its aggregation folds re-read: the interaction
/// records behind both artifacts of every fold.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NodeContext {
    pub base: u64,
    pub dialogue: u64,
    pub aggregation: u64,
}

impl NodeContext {
    pub fn total(&self) -> u64 {
        self.base + self.dialogue + self.aggregation
    }
}
