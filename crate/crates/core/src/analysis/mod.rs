//! Scale sweeps, the logistic scaling fit and long-tail sampling odds.

mod fit;
mod report;

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::backend::build_backend;
use crate::config::RunConfig;
use crate::scheduler::Artifact;
use crate::seed::derive_seed;
use crate::topology::{generate, metrics, TopologyKind};

pub use fit::{fit_pairs, fit_scaling_curve, tail_probability, ScalingFit, MAX_ITERATIONS, SIMPLEX_TOLERANCE};
pub use report::{read_points_csv, render_svg, rows_to_csv, SweepSummary};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least 4 distinct scales to fit, got {distinct_scales}")]
    InsufficientData { distinct_scales: usize },
    #[error("non-finite scale or quality")]
    NonFinite,
    #[error("scale {0} is below 1")]
    InvalidScale(f64),
    #[error("rank must be at least 1")]
    ZeroRank,
    #[error("sweep needs at least one scale and one kind")]
    EmptySweep,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Input(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalePoint {
    pub kind: TopologyKind,
    pub node_count: usize,
    /// Mean over the replicates that completed.
    pub quality: f64,
    pub replicate_count: usize,
    /// False when every replicate failed; `quality` is then NaN.
    pub valid: bool,
}

/// One replicate of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub kind: TopologyKind,
    pub n: usize,
    pub replicate: usize,
    pub quality: Option<f64>,
    pub tokens_total: u64,
    pub wall_seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub points: Vec<ScalePoint>,
}

/// Artifact length in tokens squashed into `[0, 1)`: `len / (len + 10)`.
pub fn normalized_length(artifact: &Artifact) -> f64 {
    let len = artifact.token_count as f64;
    len / (len + 10.0)
}

/// Refinement-count proxy `v / (v + 1)`, where the version counts the
/// refinements along the artifact's longest lineage.
pub fn refinement_proxy(artifact: &Artifact) -> f64 {
    let v = f64::from(artifact.version);
    v / (v + 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum QualityFn {
    NormalizedLength,
    Refinement,
}

impl QualityFn {
    pub fn score(self, artifact: &Artifact) -> f64 {
        match self {
            QualityFn::NormalizedLength => normalized_length(artifact),
            QualityFn::Refinement => refinement_proxy(artifact),
        }
    }
}

impl std::str::FromStr for QualityFn {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "length" | "normalized-length" => Ok(Self::NormalizedLength),
            "refinement" => Ok(Self::Refinement),
            other => Err(format!("unknown quality function {other:?}")),
        }
    }
}

/// Seed for one replicate, split off the base seed.
pub fn replicate_seed(base: u64, kind: TopologyKind, n: usize, replicate: usize) -> u64 {
    derive_seed(base, &format!("sweep/{}/{n}/{replicate}", kind.as_str()))
}

/// Runs every (kind, scale, replicate) combination and averages replicates.
///
/// Runs execute on up to `workers` threads. A failed run becomes a row with
/// an error and no quality; a point whose replicates all failed is marked
/// invalid.
pub fn sweep(
    base: &RunConfig,
    kinds: &[TopologyKind],
    scales: &[usize],
    replicates: usize,
    quality_fn: &(dyn Fn(&Artifact) -> f64 + Sync),
    workers: usize,
) -> Result<SweepResult, AnalysisError> {
    if kinds.is_empty() || scales.is_empty() || replicates == 0 {
        return Err(AnalysisError::EmptySweep);
    }
    let jobs: Vec<(TopologyKind, usize, usize)> = kinds
        .iter()
        .flat_map(|&k| scales.iter().flat_map(move |&n| (0..replicates).map(move |r| (k, n, r))))
        .collect();

    let one = |&(kind, n, replicate): &(TopologyKind, usize, usize)| -> SweepRow {
        let cfg = RunConfig {
            kind,
            n,
            seed: replicate_seed(base.seed, kind, n, replicate),
            topology_path: None,
            ..base.clone()
        };
        let start = Instant::now();
        let outcome = build_backend(&cfg.backend_config())
            .map_err(|e| e.to_string())
            .and_then(|backend| cfg.run(backend.as_ref()).map_err(|e| e.to_string()));
        let wall_seconds = start.elapsed().as_secs_f64();
        match outcome {
            Ok((_, trace)) => SweepRow {
                kind,
                n,
                replicate,
                quality: trace.final_artifact.as_ref().map(quality_fn),
                tokens_total: trace.ledger.total_prompt_tokens() + trace.ledger.total_reply_tokens(),
                wall_seconds,
                error: None,
            },
            Err(e) => SweepRow { kind, n, replicate, quality: None, tokens_total: 0, wall_seconds, error: Some(e) },
        }
    };

    let rows: Vec<SweepRow> = match rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build() {
        Ok(pool) => pool.install(|| jobs.par_iter().map(one).collect()),
        Err(_) => jobs.iter().map(one).collect(),
    };

    let points = kinds
        .iter()
        .flat_map(|&kind| scales.iter().map(move |&n| (kind, n)))
        .map(|(kind, n)| {
            let qualities: Vec<f64> =
                rows.iter().filter(|r| r.kind == kind && r.n == n).filter_map(|r| r.quality).collect();
            let valid = !qualities.is_empty();
            ScalePoint {
                kind,
                node_count: n,
                quality: if valid { qualities.iter().sum::<f64>() / qualities.len() as f64 } else { f64::NAN },
                replicate_count: qualities.len(),
                valid,
            }
        })
        .collect();
    Ok(SweepResult { rows, points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityRow {
    pub kind: TopologyKind,
    pub n: usize,
    pub density: f64,
}

/// Edge density of each generated kind at each scale.
pub fn sample_density_curve(kinds: &[TopologyKind], scales: &[usize], seed: u64) -> Vec<DensityRow> {
    kinds
        .iter()
        .flat_map(|&kind| scales.iter().map(move |&n| (kind, n)))
        .filter_map(|(kind, n)| {
            let t = generate(kind, n, seed).ok()?;
            Some(DensityRow { kind, n, density: metrics(&t).density })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::random_target_edges;

    #[test]
    fn density_examples() {
        let rows = sample_density_curve(&[TopologyKind::Mesh, TopologyKind::Chain, TopologyKind::Random], &[8], 7);
        assert_eq!(rows[0].density, 1.0);
        assert_eq!(rows[1].density, 0.25);
        assert_eq!(rows[2].density, random_target_edges(8) as f64 / 28.0);
    }

    #[test]
    fn quality_builtins() {
        let a = Artifact::new("x", "one two three four five six seven eight nine ten", crate::topology::NodeId(0).into(), 3, vec![]);
        assert_eq!(normalized_length(&a), 0.5);
        assert_eq!(refinement_proxy(&a), 0.75);
    }
}
