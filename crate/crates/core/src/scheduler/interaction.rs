use serde::{Deserialize, Serialize};

use super::{Artifact, Direction, Producer, TranscriptMessage};
use crate::agentization::{AgentId, AgentProfile};
use crate::backend::{
    aspect_tags, extract_artifact, is_approval, Backend, BackendError, ChatMessage, CompletionRequest,
    ARTIFACT_CLOSE, ARTIFACT_OPEN,
};
use crate::memory::{count_tokens, ShortTermBuffer, TokenLedger};
use crate::topology::{Edge, NodeId};

/// What a unit may see beyond its own input artifact.
#[derive(Debug, Clone, Copy)]
pub struct UnitContext<'a> {
    pub task: &'a str,
    /// Upstream dialogue prepended to every prompt; `None` under memory control.
    pub history: Option<&'a str>,
    /// Stop a leg early when the critic approves.
    pub honor_approval: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EdgeTranscript {
    pub edge: Edge,
    pub messages: Vec<TranscriptMessage>,
    pub leg1_pairs: u32,
    pub leg2_pairs: u32,
    pub approved_early: bool,
    /// An actor reply lacked artifact delimiters and was used whole.
    pub fallback_used: bool,
    pub aspects: Vec<String>,
}

impl EdgeTranscript {
    pub fn exchange_pairs(&self) -> u32 {
        self.leg1_pairs + self.leg2_pairs
    }

    /// Tokens of leg-2 messages: the refinement dialogue the destination
    /// actor took part in.
    pub fn leg2_tokens(&self) -> u64 {
        self.messages.iter().filter(|m| m.leg == 2).map(|m| m.token_count as u64).sum()
    }

    /// Tokens of every message produced by a call inside the unit.
    pub fn generated_tokens(&self) -> u64 {
        self.messages.iter().filter(|m| m.generated).map(|m| m.token_count as u64).sum()
    }
}

#[derive(Debug, Clone)]
pub struct UnitOutput {
    pub artifact: Artifact,
    pub transcript: EdgeTranscript,
    pub ledger: TokenLedger,
}

pub(crate) fn unit_label(edge: Edge) -> String {
    format!("unit:{}-{}", edge.0, edge.1)
}

fn history_block(ctx: &UnitContext<'_>) -> String {
    match ctx.history {
        Some(h) if !h.trim().is_empty() => format!("Conversation history:\n{h}\n\n"),
        _ => String::new(),
    }
}

struct Caller<'a> {
    backend: &'a dyn Backend,
    scope: String,
    ledger: TokenLedger,
}

impl Caller<'_> {
    fn call(&mut self, agent: AgentId, profile: &AgentProfile, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let request = CompletionRequest {
            agent: agent.to_string(),
            template_id: profile.template_id.clone(),
            kind: profile.kind,
            scope: self.scope.clone(),
            messages: messages.to_vec(),
            temperature: profile.temperature,
            max_tokens: profile.max_reply_tokens,
        };
        let reply = self.backend.complete(&request)?.content;
        let prompt: usize = messages.iter().map(|m| count_tokens(&m.content)).sum();
        self.ledger.record_call(&request.agent, prompt as u64, count_tokens(&reply) as u64);
        Ok(reply)
    }
}

fn artifact_or_whole(reply: &str, fallback: &mut bool) -> String {
    extract_artifact(reply).unwrap_or_else(|| {
        *fallback = true;
        reply.trim().to_string()
    })
}

fn wrap_instruction() -> String {
    format!("Wrap the complete artifact in {ARTIFACT_OPEN} and {ARTIFACT_CLOSE}.")
}

/// First artifact of a source node, produced from the task alone.
pub(crate) fn produce_initial(
    node: NodeId,
    actor: &AgentProfile,
    backend: &dyn Backend,
    ctx: &UnitContext<'_>,
) -> Result<(Artifact, TokenLedger), BackendError> {
    let mut caller = Caller { backend, scope: format!("init:{node}"), ledger: TokenLedger::new() };
    let messages = vec![
        ChatMessage::system(&actor.role_text),
        ChatMessage::user(format!("Task: {}\n\nProduce a first version of the artifact. {}", ctx.task, wrap_instruction())),
    ];
    let reply = caller.call(AgentId::Actor(node), actor, &messages)?;
    let mut fallback = false;
    let content = artifact_or_whole(&reply, &mut fallback);
    Ok((Artifact::new(format!("init:{node}"), content, Producer::Node(node), 0, Vec::new()), caller.ledger))
}

/// Runs the two-leg dialogue of one edge.
///
/// Leg 1: the source actor presents `artifact_in`, the critic reviews it and
/// the source actor revises, for up to `rounds` exchange pairs. Leg 2: the
/// critic's last instruction is forwarded verbatim to the destination actor,
/// which refines the artifact, again for up to `rounds` pairs. The final
/// destination reply becomes the unit's output artifact.
#[allow(clippy::too_many_arguments)]
pub fn run_edge_interaction(
    edge: Edge,
    artifact_in: &Artifact,
    src: &AgentProfile,
    critic: &AgentProfile,
    dst: &AgentProfile,
    backend: &dyn Backend,
    rounds: u32,
    ctx: &UnitContext<'_>,
) -> Result<UnitOutput, BackendError> {
    if rounds == 0 {
        return Err(BackendError::InvalidRequest("rounds budget must be positive".into()));
    }
    let label = unit_label(edge);
    let src_id = AgentId::Actor(edge.0);
    let dst_id = AgentId::Actor(edge.1);
    let critic_id = AgentId::Critic(edge.0, edge.1);
    let mut caller = Caller { backend, scope: label.clone(), ledger: TokenLedger::new() };
    let mut buffer = ShortTermBuffer::new(&label);
    let history = history_block(ctx);
    let mut fallback = false;
    let mut approved_early = false;
    let mut aspects = Vec::new();

    let note = |buffer: &mut ShortTermBuffer, leg: u8, round: u32, speaker, direction, text: &str, generated| {
        buffer.push(TranscriptMessage {
            unit: label.clone(),
            leg,
            round,
            speaker,
            direction,
            text: text.to_string(),
            token_count: count_tokens(text),
            generated,
        });
    };

    // Leg 1: source actor and critic.
    let mut src_msgs = vec![
        ChatMessage::system(&src.role_text),
        ChatMessage::user(format!("{history}Task: {}\n\nYour current artifact:\n{}", ctx.task, artifact_in.content)),
    ];
    let mut critic_msgs = vec![
        ChatMessage::system(&critic.role_text),
        ChatMessage::user(format!(
            "{history}Task: {}\n\nReview this artifact and give concrete refinement instructions.\n\nArtifact:\n{}",
            ctx.task, artifact_in.content
        )),
    ];
    let mut current = artifact_in.content.clone();
    note(&mut buffer, 1, 1, src_id, Direction::Request, &current, false);
    let mut instruction = caller.call(critic_id, critic, &critic_msgs)?;
    critic_msgs.push(ChatMessage::assistant(&instruction));
    note(&mut buffer, 1, 1, critic_id, Direction::Reply, &instruction, true);
    aspects.extend(aspect_tags(&instruction));
    let mut leg1_pairs = 1;
    while leg1_pairs < rounds && !(ctx.honor_approval && is_approval(&instruction)) {
        let round = leg1_pairs + 1;
        src_msgs.push(ChatMessage::user(format!("Reviewer feedback:\n{instruction}\n\nRevise the artifact. {}", wrap_instruction())));
        let revision = caller.call(src_id, src, &src_msgs)?;
        src_msgs.push(ChatMessage::assistant(&revision));
        note(&mut buffer, 1, round, src_id, Direction::Request, &revision, true);
        current = artifact_or_whole(&revision, &mut fallback);

        critic_msgs.push(ChatMessage::user(format!("Revised artifact:\n{current}")));
        instruction = caller.call(critic_id, critic, &critic_msgs)?;
        critic_msgs.push(ChatMessage::assistant(&instruction));
        note(&mut buffer, 1, round, critic_id, Direction::Reply, &instruction, true);
        aspects.extend(aspect_tags(&instruction));
        leg1_pairs = round;
    }
    if ctx.honor_approval && is_approval(&instruction) && leg1_pairs < rounds {
        approved_early = true;
    }

    // Leg 2: critic and destination actor.
    let mut dst_msgs = vec![
        ChatMessage::system(&dst.role_text),
        ChatMessage::user(format!(
            "{history}Task: {}\n\nArtifact from the previous agent:\n{current}\n\nReviewer instruction:\n{instruction}\n\n\
             Refine the artifact accordingly. {}",
            ctx.task,
            wrap_instruction()
        )),
    ];
    note(&mut buffer, 2, 1, critic_id, Direction::Request, &instruction, false);
    let mut reply = caller.call(dst_id, dst, &dst_msgs)?;
    dst_msgs.push(ChatMessage::assistant(&reply));
    note(&mut buffer, 2, 1, dst_id, Direction::Reply, &reply, true);
    let mut leg2_pairs = 1;
    while leg2_pairs < rounds {
        let round = leg2_pairs + 1;
        let refined = artifact_or_whole(&reply, &mut fallback);
        critic_msgs.push(ChatMessage::user(format!("Refined artifact from the next agent:\n{refined}")));
        let review = caller.call(critic_id, critic, &critic_msgs)?;
        critic_msgs.push(ChatMessage::assistant(&review));
        note(&mut buffer, 2, round, critic_id, Direction::Request, &review, true);
        aspects.extend(aspect_tags(&review));
        if ctx.honor_approval && is_approval(&review) {
            approved_early = true;
            break;
        }
        dst_msgs.push(ChatMessage::user(format!("Reviewer instruction:\n{review}\n\nRefine the artifact. {}", wrap_instruction())));
        reply = caller.call(dst_id, dst, &dst_msgs)?;
        dst_msgs.push(ChatMessage::assistant(&reply));
        note(&mut buffer, 2, round, dst_id, Direction::Reply, &reply, true);
        leg2_pairs = round;
    }
    let content = artifact_or_whole(&reply, &mut fallback);

    let artifact = Artifact::new(
        format!("edge:{}-{}", edge.0, edge.1),
        content,
        Producer::Node(edge.1),
        artifact_in.version + 1,
        vec![artifact_in.id.clone()],
    );
    aspects.sort();
    aspects.dedup();
    let transcript = EdgeTranscript {
        edge,
        messages: buffer.close(),
        leg1_pairs,
        leg2_pairs,
        approved_early,
        fallback_used: fallback,
        aspects,
    };
    Ok(UnitOutput { artifact, transcript, ledger: caller.ledger })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregationMode {
    /// `((a1 ⊕ a2) ⊕ a3) ⊕ ...`
    LeftFold,
    /// Pairwise rounds: `(a1 ⊕ a2) ⊕ (a3 ⊕ a4)`, an odd one carried over.
    Balanced,
}

impl std::str::FromStr for AggregationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left-fold" | "left" => Ok(Self::LeftFold),
            "balanced" => Ok(Self::Balanced),
            other => Err(format!("unknown aggregation mode {other:?}")),
        }
    }
}

/// One binary merge. Each side is identified by the last input it covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FoldStep {
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone)]
pub struct AggregationOutput {
    pub artifact: Artifact,
    pub folds: Vec<FoldStep>,
    pub intermediates: Vec<Artifact>,
    pub ledger: TokenLedger,
}

/// Merges the candidate artifacts arriving at `node` with the node's actor.
///
/// Candidates are expected in ascending order of their source node. A single
/// candidate is returned unchanged without any call.
pub fn aggregate_incoming(
    artifacts: &[Artifact],
    node: NodeId,
    actor: &AgentProfile,
    backend: &dyn Backend,
    mode: AggregationMode,
    ctx: &UnitContext<'_>,
) -> Result<AggregationOutput, BackendError> {
    let Some(first) = artifacts.first() else {
        return Err(BackendError::InvalidRequest(format!("no artifacts to aggregate at node {node}")));
    };
    if artifacts.len() == 1 {
        return Ok(AggregationOutput {
            artifact: first.clone(),
            folds: Vec::new(),
            intermediates: Vec::new(),
            ledger: TokenLedger::new(),
        });
    }
    let mut caller = Caller { backend, scope: format!("agg:{node}"), ledger: TokenLedger::new() };
    let history = history_block(ctx);
    let version = 1 + artifacts.iter().map(|a| a.version).max().unwrap_or(0);
    let mut folds = Vec::new();
    let mut intermediates = Vec::new();

    let mut merge = |a: &(usize, Artifact), b: &(usize, Artifact), lineage: Vec<String>| -> Result<(usize, Artifact), BackendError> {
        let messages = vec![
            ChatMessage::system(&actor.role_text),
            ChatMessage::user(format!(
                "{history}Task: {}\n\nMerge the strengths of these two artifacts into one improved artifact. {}\n\n\
                 Artifact A:\n{}\n\nArtifact B:\n{}",
                ctx.task,
                wrap_instruction(),
                a.1.content,
                b.1.content
            )),
        ];
        let reply = caller.call(AgentId::Actor(node), actor, &messages)?;
        let mut fallback = false;
        let content = artifact_or_whole(&reply, &mut fallback);
        folds.push(FoldStep { left: a.0, right: b.0 });
        let merged = Artifact::new(format!("agg:{node}:{}", folds.len()), content, Producer::Aggregation(node), version, lineage);
        intermediates.push(merged.clone());
        Ok((b.0, merged))
    };

    let all_ids: Vec<String> = artifacts.iter().map(|a| a.id.clone()).collect();
    let mut level: Vec<(usize, Artifact)> = artifacts.iter().cloned().enumerate().collect();
    let mut covered: Vec<Vec<String>> = artifacts.iter().map(|a| vec![a.id.clone()]).collect();
    let result = match mode {
        AggregationMode::LeftFold => {
            let mut acc = level[0].clone();
            for k in 1..level.len() {
                acc = merge(&acc, &level[k], all_ids[..=k].to_vec())?;
            }
            acc
        }
        AggregationMode::Balanced => {
            while level.len() > 1 {
                let mut next = Vec::with_capacity(level.len().div_ceil(2));
                let mut next_cov = Vec::with_capacity(next.capacity());
                let mut k = 0;
                while k + 1 < level.len() {
                    let lineage = [covered[k].clone(), covered[k + 1].clone()].concat();
                    next.push(merge(&level[k], &level[k + 1], lineage.clone())?);
                    next_cov.push(lineage);
                    k += 2;
                }
                if k < level.len() {
                    next.push(level[k].clone());
                    next_cov.push(covered[k].clone());
                }
                level = next;
                covered = next_cov;
            }
            level.pop().expect("one artifact left")
        }
    };
    Ok(AggregationOutput { artifact: result.1, folds, intermediates, ledger: caller.ledger })
}
