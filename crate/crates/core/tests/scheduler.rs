use std::sync::Mutex;

use dagnet::agentization::{agentize, default_library};
use dagnet::backend::{Backend, BackendError, ChatMessage, CompletionRequest, MockBackend};
use dagnet::memory::{closed_form_tokens, count_tokens, TokenParams};
use dagnet::scheduler::{compute_schedule, execute, AggregationMode, ExecuteError, ExecuteOptions, RunTrace};
use dagnet::topology::{append_final_sink, generate, NodeId, Topology, TopologyKind};

const TASK: &str = "implement a small tokenizer for arithmetic expressions";

fn run(t: &Topology, backend: &dyn Backend, opts: &ExecuteOptions, rounds: u32) -> Result<RunTrace, ExecuteError> {
    let schedule = compute_schedule(t).unwrap().with_rounds_budget(rounds).unwrap();
    let assignment = agentize(t, &default_library("software"), 0).unwrap();
    execute(&schedule, &assignment, backend, opts)
}

fn forced(memory_control: bool) -> ExecuteOptions {
    ExecuteOptions { memory_control, honor_approval: false, ..ExecuteOptions::new(TASK) }
}

fn params(n: usize, rounds: u64) -> TokenParams {
    let actor = &default_library("software")[0];
    TokenParams::new(n as u64, count_tokens(TASK) as u64, count_tokens(&actor.role_text) as u64, 10, 10, rounds).unwrap()
}

#[test]
fn sink_context_matches_closed_forms_on_mesh() {
    let mock = MockBackend::new(5, 10, 0.125);
    for n in 2..=7 {
        for rounds in 1..=3u32 {
            let t = generate(TopologyKind::Mesh, n, 0).unwrap();
            let p = params(n, u64::from(rounds));
            for control in [true, false] {
                let trace = run(&t, &mock, &forced(control), rounds).unwrap();
                assert_eq!(
                    trace.sink_context_tokens().unwrap(),
                    closed_form_tokens(&p, control),
                    "n={n} m={rounds} control={control}"
                );
            }
        }
    }
}

#[test]
fn balanced_aggregation_has_the_same_fold_cost() {
    let mock = MockBackend::new(5, 10, 0.125);
    let t = generate(TopologyKind::Mesh, 6, 0).unwrap();
    let opts = ExecuteOptions { aggregation: AggregationMode::Balanced, ..forced(true) };
    let trace = run(&t, &mock, &opts, 3).unwrap();
    assert_eq!(trace.sink_context_tokens().unwrap(), closed_form_tokens(&params(6, 3), true));
}

#[test]
fn exchange_pair_bounds() {
    for kind in TopologyKind::GENERATED {
        for n in [2, 5, 9] {
            let t = append_final_sink(&generate(kind, n, 3).unwrap());
            let edges = t.edge_count() as u64;
            for rounds in [1u32, 3] {
                let approving = MockBackend::new(n as u64, 10, 0.4);
                let trace = run(&t, &approving, &ExecuteOptions::new(TASK), rounds).unwrap();
                for tr in &trace.transcripts {
                    assert!((2..=2 * rounds).contains(&tr.exchange_pairs()), "{kind:?} {n} {tr:?}");
                }
                let trace = run(&t, &approving, &forced(true), rounds).unwrap();
                assert_eq!(trace.exchange_pairs_total(), 2 * u64::from(rounds) * edges);
            }
        }
    }
}

#[test]
fn approvals_end_legs_early() {
    let t = generate(TopologyKind::Chain, 4, 0).unwrap();
    let always = MockBackend::new(1, 10, 1.0);
    let trace = run(&t, &always, &ExecuteOptions::new(TASK), 3).unwrap();
    assert!(trace.transcripts.iter().all(|tr| tr.exchange_pairs() == 2 && tr.approved_early));
}

#[test]
fn worker_count_does_not_change_results() {
    let t = generate(TopologyKind::Layer, 12, 0).unwrap();
    let t = append_final_sink(&t);
    let mock = MockBackend::new(77, 10, 0.125);
    let traces: Vec<String> = [1, 2, 8]
        .iter()
        .map(|&w| {
            let opts = ExecuteOptions { workers: w, ..ExecuteOptions::new(TASK) };
            serde_json::to_string(&run(&t, &mock, &opts, 3).unwrap()).unwrap()
        })
        .collect();
    assert_eq!(traces[0], traces[1]);
    assert_eq!(traces[0], traces[2]);
}

/// Records every request it answers, delegating to the mock.
struct Recording {
    inner: MockBackend,
    seen: Mutex<Vec<CompletionRequest>>,
}

impl Backend for Recording {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, BackendError> {
        self.seen.lock().unwrap().push(request.clone());
        self.inner.complete(request)
    }
}

#[test]
fn memory_control_isolates_units() {
    let t = generate(TopologyKind::Mesh, 5, 0).unwrap();
    let backend = Recording { inner: MockBackend::new(3, 10, 0.0), seen: Mutex::new(Vec::new()) };
    let trace = run(&t, &backend, &forced(true), 3).unwrap();
    let seen = backend.seen.into_inner().unwrap();

    for tr in &trace.transcripts {
        let scope = format!("unit:{}-{}", tr.edge.0, tr.edge.1);
        let input = &trace.node_artifacts[tr.edge.0 .0].as_ref().unwrap().content;
        let own: Vec<&str> = tr.messages.iter().map(|m| m.text.as_str()).collect();
        let foreign: Vec<&str> = trace
            .transcripts
            .iter()
            .filter(|other| other.edge != tr.edge)
            .flat_map(|other| other.messages.iter().filter(|m| m.generated).map(|m| m.text.as_str()))
            .filter(|text| !own.contains(text) && *text != input)
            .collect();
        let prompts: Vec<&CompletionRequest> = seen.iter().filter(|r| r.scope == scope).collect();
        assert!(prompts[0].messages[1].content.contains(input.as_str()), "{scope} opened without its input");
        for req in prompts {
            for m in &req.messages {
                for text in &foreign {
                    assert!(!m.content.contains(text), "{scope} saw another unit's dialogue: {text}");
                }
            }
        }
    }
}

#[test]
fn without_memory_control_history_reaches_downstream_prompts() {
    let t = generate(TopologyKind::Chain, 3, 0).unwrap();
    let backend = Recording { inner: MockBackend::new(3, 10, 0.0), seen: Mutex::new(Vec::new()) };
    let trace = run(&t, &backend, &forced(false), 2).unwrap();
    let seen = backend.seen.into_inner().unwrap();
    let upstream = trace.transcripts[0].messages.iter().find(|m| m.generated).unwrap().text.clone();
    assert!(seen
        .iter()
        .filter(|r| r.scope == "unit:1-2")
        .all(|r| r.messages.iter().any(|m| m.content.contains(&upstream))));
}

#[test]
fn single_worker_dispatch_follows_the_agent_sequence() {
    let t = generate(TopologyKind::Tree, 7, 0).unwrap();
    let t = append_final_sink(&t);
    let backend = Recording { inner: MockBackend::new(3, 10, 0.0), seen: Mutex::new(Vec::new()) };
    let trace = run(&t, &backend, &forced(true), 1).unwrap();
    let schedule = compute_schedule(&t).unwrap();
    let seen = backend.seen.into_inner().unwrap();
    let mut last = 0;
    for req in &seen {
        let idx = if let Some(rest) = req.scope.strip_prefix("unit:") {
            let (a, b) = rest.split_once('-').unwrap();
            let edge = (NodeId(a.parse().unwrap()), NodeId(b.parse().unwrap()));
            schedule.units.iter().find(|u| u.edge == edge).unwrap().order_index
        } else {
            let node: usize = req.scope.split(':').nth(1).unwrap().parse().unwrap();
            schedule.agent_sequence().iter().position(|a| a.to_string() == format!("a{node}")).unwrap()
        };
        assert!(idx >= last, "{} dispatched out of order", req.scope);
        last = idx;
    }
    assert_eq!(trace.ledger.call_count(), seen.len());
}

#[test]
fn final_artifact_lineage_reaches_back_to_sources() {
    let t = append_final_sink(&generate(TopologyKind::Star, 4, 0).unwrap());
    let trace = run(&t, &MockBackend::new(1, 10, 0.0), &forced(true), 2).unwrap();
    let fin = trace.final_artifact.unwrap();
    assert_eq!(fin.lineage, vec!["edge:1-4", "edge:2-4", "edge:3-4"]);
    assert!(trace.artifacts.iter().any(|a| a.id == "init:0"));
}

struct FailAfter {
    inner: MockBackend,
    left: Mutex<usize>,
}

impl Backend for FailAfter {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, BackendError> {
        let mut left = self.left.lock().unwrap();
        if *left == 0 {
            return Err(BackendError::Unavailable { attempts: 4, last: "HTTP 503".into() });
        }
        *left -= 1;
        self.inner.complete(request)
    }
}

#[test]
fn backend_failure_returns_partial_trace() {
    let t = generate(TopologyKind::Chain, 4, 0).unwrap();
    let backend = FailAfter { inner: MockBackend::new(1, 10, 0.0), left: Mutex::new(12) };
    match run(&t, &backend, &forced(true), 3) {
        Err(ExecuteError::Aborted { error, partial }) => {
            assert!(matches!(error, BackendError::Unavailable { .. }));
            assert!(partial.final_artifact.is_none());
            assert_eq!(partial.transcripts.len(), 1);
            assert_eq!(partial.ledger.call_count(), 11);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn multiple_sinks_are_rejected() {
    let t = generate(TopologyKind::Star, 4, 0).unwrap();
    let err = run(&t, &MockBackend::new(1, 10, 0.0), &forced(true), 1).unwrap_err();
    assert!(matches!(err, ExecuteError::Precondition(_)));
}

#[test]
fn single_node_run_is_just_the_initial_artifact() {
    let t = generate(TopologyKind::Chain, 1, 0).unwrap();
    let trace = run(&t, &MockBackend::new(1, 10, 0.0), &forced(true), 3).unwrap();
    assert_eq!(trace.final_artifact.unwrap().id, "init:0");
    assert_eq!(trace.ledger.call_count(), 1);
}
