use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;

use serde::Serialize;
use thiserror::Error;

use super::interaction::{aggregate_incoming, produce_initial, run_edge_interaction, AggregationMode, EdgeTranscript, UnitContext, UnitOutput};
use super::{Artifact, Schedule};
use crate::agentization::{AgentAssignment, AgentId};
use crate::backend::{Backend, BackendError};
use crate::memory::{count_tokens, NodeContext, TokenLedger};
use crate::topology::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExecuteOptions {
    pub task: String,
    /// Propagate artifacts only; without it every prompt carries the full
    /// upstream dialogue.
    pub memory_control: bool,
    pub honor_approval: bool,
    pub workers: usize,
    pub aggregation: AggregationMode,
}

impl ExecuteOptions {
    pub fn new(task: impl Into<String>) -> Self {
        Self {
            task: task.into(),
            memory_control: true,
            honor_approval: true,
            workers: 1,
            aggregation: AggregationMode::LeftFold,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RunTrace {
    pub sink: NodeId,
    /// Completed units in schedule order.
    pub transcripts: Vec<EdgeTranscript>,
    /// Artifact held by each node once it finished.
    pub node_artifacts: Vec<Option<Artifact>>,
    /// Every artifact produced, including aggregation intermediates.
    pub artifacts: Vec<Artifact>,
    pub final_artifact: Option<Artifact>,
    /// All calls, merged in agent-sequence order.
    pub ledger: TokenLedger,
    pub node_contexts: Vec<Option<NodeContext>>,
}

impl RunTrace {
    pub fn sink_context_tokens(&self) -> Option<u64> {
        self.node_contexts.get(self.sink.0).copied().flatten().map(|c| c.total())
    }

    pub fn exchange_pairs_total(&self) -> u64 {
        self.transcripts.iter().map(|t| u64::from(t.exchange_pairs())).sum()
    }

    pub fn distinct_aspects(&self) -> BTreeSet<String> {
        self.transcripts.iter().flat_map(|t| t.aspects.iter().cloned()).collect()
    }
}

#[derive(Debug, Error)]
pub enum ExecuteError {
    #[error("cannot execute: {0}")]
    Precondition(String),
    #[error("run aborted: {error}")]
    Aborted { error: BackendError, partial: Box<RunTrace> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Job {
    Source(NodeId),
    Unit(usize),
    Finalize(NodeId),
}

#[derive(Debug, Clone)]
struct HistoryEntry {
    line: String,
    tokens: u64,
}

/// Dialogue visible to a node when memory control is off, keyed by
/// (unit order index, message index) so unions stay in a canonical order.
type History = BTreeMap<(usize, usize), HistoryEntry>;

fn render(history: &History) -> String {
    history.values().map(|e| e.line.as_str()).collect::<Vec<_>>().join("\n")
}

enum Input {
    Source,
    Unit { artifact_in: Artifact, history: Option<Arc<History>> },
    Finalize { candidates: Vec<Artifact>, records: Vec<u64>, leg2: u64, first_tokens: u64, histories: Vec<Arc<History>>, own: History },
}

enum Output {
    Node { artifact: Artifact, intermediates: Vec<Artifact>, ledger: TokenLedger, context: NodeContext, history: Option<Arc<History>> },
    Unit(Box<UnitOutput>),
}

struct State {
    ready: BinaryHeap<Reverse<(usize, Job)>>,
    running: usize,
    failure: Option<BackendError>,
    stored: Vec<Option<Artifact>>,
    intermediates: Vec<Vec<Artifact>>,
    histories: Vec<Option<Arc<History>>>,
    node_ledgers: Vec<Option<TokenLedger>>,
    contexts: Vec<Option<NodeContext>>,
    units: Vec<Option<UnitOutput>>,
    pending_in: Vec<usize>,
}

struct Run<'a> {
    schedule: &'a Schedule,
    assignment: &'a AgentAssignment,
    backend: &'a dyn Backend,
    opts: &'a ExecuteOptions,
    unit_of: std::collections::HashMap<(NodeId, NodeId), usize>,
    state: Mutex<State>,
    wake: Condvar,
}

/// Runs every interaction unit of `schedule` and aggregates at convergent
/// nodes, returning the sink's artifact with the full trace.
///
/// Work is dispatched to `opts.workers` threads as dependencies resolve; all
/// results are merged in schedule order so the trace does not depend on the
/// worker count. A backend failure stops dispatching and returns the partial
/// trace inside [`ExecuteError::Aborted`].
pub fn execute(
    schedule: &Schedule,
    assignment: &AgentAssignment,
    backend: &dyn Backend,
    opts: &ExecuteOptions,
) -> Result<RunTrace, ExecuteError> {
    let sinks = schedule.sinks();
    if sinks.len() != 1 {
        return Err(ExecuteError::Precondition(format!(
            "expected exactly one sink, found {sinks:?}; append a final sink first"
        )));
    }
    if opts.task.trim().is_empty() {
        return Err(ExecuteError::Precondition("task must not be empty".into()));
    }
    let n = schedule.node_count();
    for v in 0..n {
        if assignment.actor(NodeId(v)).is_none() {
            return Err(ExecuteError::Precondition(format!("node {v} has no actor")));
        }
    }
    for unit in &schedule.units {
        if assignment.critic(unit.edge).is_none() {
            return Err(ExecuteError::Precondition(format!("edge {}->{} has no critic", unit.edge.0, unit.edge.1)));
        }
    }

    let mut ready = BinaryHeap::new();
    for v in schedule.sources() {
        ready.push(Reverse((schedule.node_priority(v), Job::Source(v))));
    }
    let state = State {
        ready,
        running: 0,
        failure: None,
        stored: vec![None; n],
        intermediates: vec![Vec::new(); n],
        histories: vec![None; n],
        node_ledgers: vec![None; n],
        contexts: vec![None; n],
        units: (0..schedule.units.len()).map(|_| None).collect(),
        pending_in: (0..n).map(|v| schedule.parents(NodeId(v)).len()).collect(),
    };
    let run = Run {
        schedule,
        assignment,
        backend,
        opts,
        unit_of: schedule.unit_positions(),
        state: Mutex::new(state),
        wake: Condvar::new(),
    };

    let workers = opts.workers.max(1);
    if workers == 1 {
        run.work();
    } else {
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| run.work());
            }
        });
    }

    let state = run.state.into_inner().expect("scheduler lock");
    let sink = sinks[0];
    let (trace, failure) = assemble(schedule, sink, state);
    match failure {
        Some(error) => Err(ExecuteError::Aborted { error, partial: Box::new(trace) }),
        None => Ok(trace),
    }
}

impl Run<'_> {
    fn work(&self) {
        loop {
            let (job, input) = {
                let mut state = self.state.lock().expect("scheduler lock");
                loop {
                    if state.failure.is_some() {
                        return;
                    }
                    if let Some(Reverse((_, job))) = state.ready.pop() {
                        state.running += 1;
                        let input = self.gather(&state, job);
                        break (job, input);
                    }
                    if state.running == 0 {
                        return;
                    }
                    state = self.wake.wait(state).expect("scheduler lock");
                }
            };
            let result = self.compute(job, input);
            let mut state = self.state.lock().expect("scheduler lock");
            state.running -= 1;
            match result {
                Ok(output) => self.apply(&mut state, job, output),
                Err(e) => {
                    if state.failure.is_none() {
                        state.failure = Some(e);
                    }
                }
            }
            self.wake.notify_all();
        }
    }

    fn uncontrolled(&self) -> bool {
        !self.opts.memory_control
    }

    fn gather(&self, state: &State, job: Job) -> Input {
        match job {
            Job::Source(_) => Input::Source,
            Job::Unit(pos) => {
                let src = self.schedule.units[pos].edge.0;
                Input::Unit {
                    artifact_in: state.stored[src.0].clone().expect("source artifact stored"),
                    history: state.histories[src.0].clone(),
                }
            }
            Job::Finalize(v) => {
                let mut candidates = Vec::new();
                let mut records = Vec::new();
                let mut leg2 = 0;
                let mut histories = Vec::new();
                let mut own = History::new();
                for &p in self.schedule.parents(v) {
                    let pos = self.unit_of[&(p, v)];
                    let out = state.units[pos].as_ref().expect("incoming unit finished");
                    candidates.push(out.artifact.clone());
                    leg2 += out.transcript.leg2_tokens();
                    if self.uncontrolled() {
                        records.push(out.transcript.generated_tokens());
                        histories.extend(state.histories[p.0].clone());
                        let order = self.schedule.units[pos].order_index;
                        for (k, m) in out.transcript.messages.iter().enumerate().filter(|(_, m)| m.generated) {
                            own.insert((order, k), HistoryEntry { line: format!("[{}] {}", m.speaker, m.text), tokens: m.token_count as u64 });
                        }
                    } else {
                        records.push(out.transcript.leg2_tokens());
                    }
                }
                let first = self.schedule.parents(v)[0];
                let first_tokens = state.stored[first.0].as_ref().map_or(0, |a| a.token_count as u64);
                Input::Finalize { candidates, records, leg2, first_tokens, histories, own }
            }
        }
    }

    fn base_tokens(&self, v: NodeId, received: u64) -> u64 {
        let actor = self.assignment.actor(v).expect("checked");
        (count_tokens(&self.opts.task) + count_tokens(&actor.role_text)) as u64 + received
    }

    fn compute(&self, job: Job, input: Input) -> Result<Output, BackendError> {
        let opts = self.opts;
        match (job, input) {
            (Job::Source(v), Input::Source) => {
                let ctx = UnitContext { task: &opts.task, history: None, honor_approval: opts.honor_approval };
                let (artifact, ledger) = produce_initial(v, self.assignment.actor(v).expect("checked"), self.backend, &ctx)?;
                let context = NodeContext { base: self.base_tokens(v, artifact.token_count as u64), ..NodeContext::default() };
                let history = self.uncontrolled().then(|| Arc::new(History::new()));
                Ok(Output::Node { artifact, intermediates: Vec::new(), ledger, context, history })
            }
            (Job::Unit(pos), Input::Unit { artifact_in, history }) => {
                let unit = &self.schedule.units[pos];
                let (src, dst) = unit.edge;
                let rendered = history.as_deref().map(render);
                let ctx = UnitContext { task: &opts.task, history: rendered.as_deref(), honor_approval: opts.honor_approval };
                let out = run_edge_interaction(
                    unit.edge,
                    &artifact_in,
                    self.assignment.actor(src).expect("checked"),
                    self.assignment.critic(unit.edge).expect("checked"),
                    self.assignment.actor(dst).expect("checked"),
                    self.backend,
                    unit.rounds_budget,
                    &ctx,
                )?;
                Ok(Output::Unit(Box::new(out)))
            }
            (Job::Finalize(v), Input::Finalize { candidates, records, leg2, first_tokens, histories, own }) => {
                let history = if self.uncontrolled() {
                    let mut merged = own;
                    for h in &histories {
                        merged.extend(h.iter().map(|(k, e)| (*k, e.clone())));
                    }
                    Some(Arc::new(merged))
                } else {
                    None
                };
                let rendered = history.as_deref().map(render);
                let ctx = UnitContext { task: &opts.task, history: rendered.as_deref(), honor_approval: opts.honor_approval };
                let agg = aggregate_incoming(&candidates, v, self.assignment.actor(v).expect("checked"), self.backend, opts.aggregation, &ctx)?;
                let dialogue = match &history {
                    Some(h) => h.values().map(|e| e.tokens).sum(),
                    None => leg2,
                };
                let aggregation = agg.folds.iter().map(|f| records[f.left] + records[f.right]).sum();
                let context = NodeContext { base: self.base_tokens(v, first_tokens), dialogue, aggregation };
                Ok(Output::Node { artifact: agg.artifact, intermediates: agg.intermediates, ledger: agg.ledger, context, history })
            }
            _ => unreachable!("job and input are gathered together"),
        }
    }

    fn apply(&self, state: &mut State, job: Job, output: Output) {
        match (job, output) {
            (Job::Source(v) | Job::Finalize(v), Output::Node { artifact, intermediates, ledger, context, history }) => {
                state.stored[v.0] = Some(artifact);
                state.intermediates[v.0] = intermediates;
                state.node_ledgers[v.0] = Some(ledger);
                state.contexts[v.0] = Some(context);
                state.histories[v.0] = history;
                for &c in self.schedule.children(v) {
                    let pos = self.unit_of[&(v, c)];
                    state.ready.push(Reverse((self.schedule.units[pos].order_index, Job::Unit(pos))));
                }
            }
            (Job::Unit(pos), Output::Unit(out)) => {
                state.units[pos] = Some(*out);
                let dst = self.schedule.units[pos].edge.1;
                state.pending_in[dst.0] -= 1;
                if state.pending_in[dst.0] == 0 {
                    state.ready.push(Reverse((self.schedule.node_priority(dst), Job::Finalize(dst))));
                }
            }
            _ => unreachable!("output kind follows the job"),
        }
    }
}

fn assemble(schedule: &Schedule, sink: NodeId, state: State) -> (RunTrace, Option<BackendError>) {
    let State { failure, stored, intermediates, node_ledgers, contexts, units, .. } = state;
    let mut ledger = TokenLedger::new();
    let mut artifacts = Vec::new();
    for agent in schedule.agent_sequence() {
        match agent {
            AgentId::Actor(v) => {
                if let Some(l) = &node_ledgers[v.0] {
                    ledger.extend(l);
                }
                artifacts.extend(intermediates[v.0].iter().cloned());
                if schedule.parents(v).is_empty() {
                    artifacts.extend(stored[v.0].iter().cloned());
                }
            }
            AgentId::Critic(a, b) => {
                let pos = schedule.units.iter().position(|u| u.edge == (a, b)).expect("unit exists");
                if let Some(out) = &units[pos] {
                    ledger.extend(&out.ledger);
                    artifacts.push(out.artifact.clone());
                }
            }
        }
    }
    let transcripts = units.into_iter().flatten().map(|u| u.transcript).collect();
    let final_artifact = if failure.is_none() { stored[sink.0].clone() } else { None };
    let trace = RunTrace {
        sink,
        transcripts,
        node_artifacts: stored,
        artifacts,
        final_artifact,
        ledger,
        node_contexts: contexts,
    };
    (trace, failure)
}
