use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{
    Backend, BackendConfig, BackendError, ChatMessage, CompletionRequest, Role, APPROVE_TOKEN,
    ARTIFACT_CLOSE, ARTIFACT_OPEN,
};
use crate::agentization::AgentKind;

const VOCABULARY: [&str; 32] = [
    "module", "parser", "cache", "retry", "schema", "index", "handler", "buffer", "queue", "token",
    "render", "layout", "config", "loader", "stream", "filter", "router", "client", "server", "codec",
    "report", "metric", "sample", "bound", "guard", "limit", "merge", "split", "branch", "commit",
    "review", "patch",
];

/// Aspect names a mock critic draws from with Zipf weights (rank r ∝ 1/r).
const ASPECTS: [&str; 16] = [
    "requirements", "logic", "runtime", "syntax", "naming", "error-handling", "performance",
    "edge-cases", "documentation", "testing", "structure", "security", "concurrency", "portability",
    "accessibility", "localization",
];

/// Deterministic stand-in for a language model.
///
/// A reply is a pure function of the seed, the requesting template and the
/// full message list. Every reply is exactly `reply_tokens` whitespace tokens
/// and starts with `ref:<hex>`, a digest of the latest user message, so the
/// path of an artifact through the network stays observable.
#[derive(Debug, Clone)]
pub struct MockBackend {
    seed: u64,
    reply_tokens: usize,
    approval_rate: f64,
}

impl MockBackend {
    pub fn new(seed: u64, reply_tokens: usize, approval_rate: f64) -> Self {
        Self { seed, reply_tokens: reply_tokens.max(1), approval_rate }
    }

    pub fn from_config(cfg: &BackendConfig) -> Self {
        Self::new(cfg.mock_seed, cfg.mock_reply_tokens as usize, cfg.mock_approval_rate)
    }

    fn reply_for(&self, request: &CompletionRequest) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(request.template_id.as_bytes());
        hasher.update([0x1d, request.kind as u8]);
        for m in &request.messages {
            hasher.update([m.role as u8, 0x1f]);
            hasher.update(m.content.as_bytes());
            hasher.update([0x1e]);
        }
        let digest: [u8; 32] = hasher.finalize().into();
        let mut rng = ChaCha8Rng::from_seed(digest);

        let latest = request
            .messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map_or("", |m| m.content.as_str());
        let reference = Sha256::digest(latest.as_bytes());
        let reference = format!(
            "ref:{:02x}{:02x}{:02x}{:02x}",
            reference[0], reference[1], reference[2], reference[3]
        );

        let mut words: Vec<String> = Vec::with_capacity(self.reply_tokens + 2);
        if request.kind == AgentKind::Critic {
            if rng.random::<f64>() < self.approval_rate {
                words.push(APPROVE_TOKEN.to_string());
            } else {
                words.push(format!("[aspect:{}]", zipf_aspect(&mut rng)));
            }
        }
        words.push(reference);
        while words.len() < self.reply_tokens {
            words.push(VOCABULARY[rng.random_range(0..VOCABULARY.len())].to_string());
        }
        words.truncate(self.reply_tokens);
        let body = words.join(" ");
        match request.kind {
            AgentKind::Actor => format!("{ARTIFACT_OPEN}{body}{ARTIFACT_CLOSE}"),
            AgentKind::Critic => body,
        }
    }
}

fn zipf_aspect(rng: &mut ChaCha8Rng) -> &'static str {
    let total: f64 = (1..=ASPECTS.len()).map(|r| 1.0 / r as f64).sum();
    let mut u = rng.random::<f64>() * total;
    for (i, name) in ASPECTS.iter().enumerate() {
        u -= 1.0 / (i + 1) as f64;
        if u <= 0.0 {
            return name;
        }
    }
    ASPECTS[ASPECTS.len() - 1]
}

impl Backend for MockBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, BackendError> {
        request.check()?;
        Ok(ChatMessage::assistant(self.reply_for(request)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{extract_artifact, is_approval};
    use crate::memory::count_tokens;
    use proptest::prelude::*;

    fn request(kind: AgentKind, body: &str) -> CompletionRequest {
        CompletionRequest {
            agent: "a0".into(),
            template_id: match kind {
                AgentKind::Actor => "actor.generic".into(),
                AgentKind::Critic => "critic.generic".into(),
            },
            kind,
            scope: "unit".into(),
            messages: vec![ChatMessage::system("role"), ChatMessage::user(body)],
            temperature: 0.2,
            max_tokens: 64,
        }
    }

    #[test]
    fn identical_inputs_identical_replies() {
        let mock = MockBackend::new(3, 10, 0.125);
        let req = request(AgentKind::Actor, "task");
        assert_eq!(mock.complete(&req).unwrap(), mock.complete(&req).unwrap());
    }

    #[test]
    fn reply_length_is_exact() {
        for tokens in [1, 2, 10, 50] {
            let mock = MockBackend::new(1, tokens, 0.5);
            for kind in [AgentKind::Actor, AgentKind::Critic] {
                for body in ["a", "b c d", "something longer here"] {
                    let reply = mock.complete(&request(kind, body)).unwrap();
                    assert_eq!(count_tokens(&reply.content), tokens, "{kind:?} {body}");
                }
            }
        }
    }

    #[test]
    fn actor_reply_is_an_artifact() {
        let mock = MockBackend::new(1, 10, 0.125);
        let reply = mock.complete(&request(AgentKind::Actor, "task")).unwrap();
        let artifact = extract_artifact(&reply.content).unwrap();
        assert_eq!(count_tokens(&artifact), 10);
        assert!(artifact.starts_with("ref:"));
    }

    #[test]
    fn template_and_seed_change_the_reply() {
        let a = MockBackend::new(1, 10, 0.125);
        let b = MockBackend::new(2, 10, 0.125);
        let req = request(AgentKind::Actor, "task");
        assert_ne!(a.complete(&req).unwrap(), b.complete(&req).unwrap());
        let mut other = req.clone();
        other.template_id = "actor.other".into();
        assert_ne!(a.complete(&req).unwrap(), a.complete(&other).unwrap());
    }

    #[test]
    fn approval_rate_extremes() {
        let never = MockBackend::new(1, 10, 0.0);
        let always = MockBackend::new(1, 10, 1.0);
        for i in 0..50 {
            let req = request(AgentKind::Critic, &format!("art {i}"));
            assert!(!is_approval(&never.complete(&req).unwrap().content));
            assert!(is_approval(&always.complete(&req).unwrap().content));
        }
    }

    #[test]
    fn approval_frequency_near_one_eighth() {
        let mock = MockBackend::new(2024, 10, 0.125);
        let approvals = (0..10_000)
            .filter(|i| is_approval(&mock.complete(&request(AgentKind::Critic, &format!("artifact {i}"))).unwrap().content))
            .count();
        let rate = approvals as f64 / 10_000.0;
        assert!((rate - 0.125).abs() <= 0.02, "rate {rate}");
    }

    #[test]
    fn rejects_requests_without_system_prompt() {
        let mock = MockBackend::new(1, 10, 0.1);
        let mut req = request(AgentKind::Actor, "x");
        req.messages.remove(0);
        assert!(matches!(mock.complete(&req), Err(BackendError::InvalidRequest(_))));
    }

    proptest! {
        #[test]
        fn mock_is_referentially_transparent(
            seed in any::<u64>(),
            bodies in proptest::collection::vec("[a-z ]{1,40}", 1..5),
            critic in any::<bool>(),
        ) {
            let mock = MockBackend::new(seed, 12, 0.125);
            let kind = if critic { AgentKind::Critic } else { AgentKind::Actor };
            let mut req = request(kind, "seed");
            for b in &bodies {
                req.messages.push(ChatMessage::assistant("prev"));
                req.messages.push(ChatMessage::user(format!("x{b}")));
            }
            let first = mock.complete(&req).unwrap();
            let second = MockBackend::new(seed, 12, 0.125).complete(&req).unwrap();
            prop_assert_eq!(first, second);
        }
    }
}
