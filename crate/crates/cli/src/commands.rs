use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use serde_json::{json, Value};

use dagnet::analysis::{self, fit_pairs, read_points_csv, render_svg, rows_to_csv, QualityFn, SweepSummary};
use dagnet::backend::{build_backend, BackendMode};
use dagnet::config::{ConfigError, RunConfig};
use dagnet::memory::{asymptotic_constants, closed_form_tokens, TokenParams};
use dagnet::scheduler::{execute, ExecuteError, RunTrace};
use dagnet::topology::{append_final_sink, generate, metrics, reverse, to_dot, to_json, Topology, TopologyKind, TopologyMetrics};

use crate::{FitArgs, Format, RunArgs, RunFlags, SweepArgs, TokensArgs, TopoArgs};

pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

type Outcome = Result<(), Failure>;

fn io(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

fn invalid(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn unavailable(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 3, error: error.into() }
}

fn config_failure(e: ConfigError) -> Failure {
    match e {
        ConfigError::Io { .. } => io(e),
        other => invalid(other),
    }
}

fn write(path: &Path, contents: &str) -> Outcome {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display())).map_err(io)
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())).map_err(io)
}

fn metadata() -> Value {
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    json!({ "timestamp_unix": secs, "version": env!("CARGO_PKG_VERSION") })
}

fn parse_kind(s: &str) -> Result<TopologyKind, Failure> {
    s.parse().map_err(invalid)
}

fn print_metrics(m: &TopologyMetrics) {
    println!("nodes        {}", m.node_count);
    println!("edges        {}", m.edge_count);
    println!("density      {}", m.density);
    match m.avg_path_length {
        Some(l) => println!("avg_path     {l:.4}"),
        None => println!("avg_path     -"),
    }
    println!("clustering   {:.4}", m.clustering_coefficient);
    println!("sources      {}", m.source_count);
    println!("sinks        {}", m.sink_count);
    println!("divergent    {}", m.divergent_node_count);
    println!("convergent   {}", m.convergent_node_count);
}

pub fn topo(args: TopoArgs) -> Outcome {
    let kind = parse_kind(&args.kind)?;
    let mut t = generate(kind, args.n, args.seed).map_err(invalid)?;
    if args.reverse {
        t = reverse(&t);
    }
    if args.append_sink {
        t = append_final_sink(&t);
    }
    let text = match args.format {
        Format::Json => to_json(&t),
        Format::Dot => to_dot(&t),
    };
    match &args.out {
        Some(path) => {
            write(path, &text)?;
            print_metrics(&metrics(&t));
        }
        None => {
            print!("{text}");
            if !text.ends_with('\n') {
                println!();
            }
        }
    }
    Ok(())
}

fn resolve(flags: &RunFlags) -> Result<RunConfig, Failure> {
    let mut cfg = match &flags.config {
        Some(path) => RunConfig::load(path).map_err(config_failure)?,
        None => RunConfig::default(),
    };
    if let Some(task) = &flags.task {
        cfg.task = task.clone();
    }
    if let Some(seed) = flags.seed {
        cfg.seed = seed;
    }
    if let Some(rounds) = flags.rounds {
        cfg.rounds = rounds;
    }
    if flags.no_memory_control {
        cfg.memory_control = false;
    }
    if flags.ignore_approval {
        cfg.honor_approval = false;
    }
    if let Some(workers) = flags.workers {
        cfg.workers = workers;
    }
    if let Some(mode) = &flags.aggregation {
        cfg.aggregation = mode.parse().map_err(|e: String| invalid(anyhow!(e)))?;
    }
    if let Some(domain) = &flags.domain {
        cfg.domain = domain.clone();
    }
    if let Some(path) = &flags.library {
        cfg.library_path = Some(path.clone());
    }
    let backend = &mut cfg.backend;
    if flags.mock {
        backend.mode = BackendMode::Mock;
    }
    if flags.live {
        backend.mode = BackendMode::Live;
    }
    if let Some(url) = &flags.endpoint {
        backend.endpoint_url = Some(url.clone());
    }
    if let Some(model) = &flags.model {
        backend.model_name = Some(model.clone());
    }
    if let Some(var) = &flags.api_key_env {
        backend.api_key_env_var = var.clone();
    }
    if let Some(r) = flags.max_retries {
        backend.max_retries = r;
    }
    if let Some(rpm) = flags.requests_per_minute {
        backend.requests_per_minute = Some(rpm);
    }
    if let Some(tokens) = flags.mock_reply_tokens {
        backend.mock_reply_tokens = tokens;
    }
    if let Some(rate) = flags.mock_approval_rate {
        backend.mock_approval_rate = rate;
    }
    Ok(cfg)
}

fn trace_jsonl(trace: &RunTrace) -> Result<String, Failure> {
    let mut out = String::new();
    let mut line = |v: Value| {
        out.push_str(&v.to_string());
        out.push('\n');
    };
    for tr in &trace.transcripts {
        line(json!({
            "record": "unit",
            "edge": tr.edge,
            "leg1_pairs": tr.leg1_pairs,
            "leg2_pairs": tr.leg2_pairs,
            "approved_early": tr.approved_early,
            "fallback_used": tr.fallback_used,
            "aspects": tr.aspects,
        }));
        for m in &tr.messages {
            let mut v = serde_json::to_value(m).map_err(invalid)?;
            v["record"] = json!("message");
            line(v);
        }
    }
    for a in &trace.artifacts {
        let mut v = serde_json::to_value(a).map_err(invalid)?;
        v["record"] = json!("artifact");
        line(v);
    }
    Ok(out)
}

fn summary(cfg: &RunConfig, t: &Topology, trace: &RunTrace, error: Option<String>) -> Value {
    json!({
        "metadata": metadata(),
        "status": if error.is_none() { "complete" } else { "aborted" },
        "error": error,
        "config": cfg,
        "topology": { "kind": t.kind(), "metrics": metrics(t) },
        "sink": trace.sink,
        "sink_context_tokens": trace.sink_context_tokens(),
        "ledger": {
            "calls": trace.ledger.call_count(),
            "prompt_tokens": trace.ledger.total_prompt_tokens(),
            "reply_tokens": trace.ledger.total_reply_tokens(),
        },
        "exchange_pairs": trace.exchange_pairs_total(),
        "distinct_aspects": trace.distinct_aspects(),
        "final_artifact": trace.final_artifact,
    })
}

fn write_run(dir: &Path, cfg: &RunConfig, t: &Topology, trace: &RunTrace, error: Option<String>) -> Outcome {
    create_dir(dir)?;
    write(&dir.join("trace.jsonl"), &trace_jsonl(trace)?)?;
    let text = serde_json::to_string_pretty(&summary(cfg, t, trace, error)).map_err(invalid)?;
    write(&dir.join("summary.json"), &(text + "\n"))?;
    write(&dir.join("ledger.csv"), &trace.ledger.to_csv())
}

pub fn run(args: RunArgs) -> Outcome {
    let mut cfg = resolve(&args.flags)?;
    if let Some(kind) = &args.kind {
        cfg.kind = parse_kind(kind)?;
    }
    if let Some(n) = args.n {
        cfg.n = n;
    }
    if let Some(path) = &args.topology {
        cfg.topology_path = Some(path.clone());
    }
    if args.reverse {
        cfg.reverse = true;
    }
    cfg.check().map_err(config_failure)?;
    let t = cfg.topology().map_err(config_failure)?;
    let schedule = cfg.schedule(&t).map_err(config_failure)?;
    let assignment = cfg.assignment(&t).map_err(config_failure)?;
    let backend = build_backend(&cfg.backend_config()).map_err(invalid)?;

    match execute(&schedule, &assignment, backend.as_ref(), &cfg.execute_options()) {
        Ok(trace) => {
            write_run(&args.out_dir, &cfg, &t, &trace, None)?;
            if args.print {
                if let Some(a) = &trace.final_artifact {
                    println!("{}", a.content);
                }
            } else {
                println!(
                    "{} nodes, {} edges, {} calls, sink context {} tokens; outputs in {}",
                    t.node_count(),
                    t.edge_count(),
                    trace.ledger.call_count(),
                    trace.sink_context_tokens().unwrap_or(0),
                    args.out_dir.display()
                );
            }
            Ok(())
        }
        Err(ExecuteError::Aborted { error, partial }) => {
            write_run(&args.out_dir, &cfg, &t, &partial, Some(error.to_string()))?;
            Err(unavailable(error))
        }
        Err(e @ ExecuteError::Precondition(_)) => Err(invalid(e)),
    }
}

pub fn sweep(args: SweepArgs) -> Outcome {
    let cfg = resolve(&args.flags)?;
    let base = RunConfig { task: if cfg.task.is_empty() { "sweep".into() } else { cfg.task.clone() }, ..cfg };
    base.check().map_err(config_failure)?;
    let kinds = args.kinds.iter().map(|k| parse_kind(k)).collect::<Result<Vec<_>, _>>()?;
    let quality: QualityFn = args.quality.parse().map_err(|e: String| invalid(anyhow!(e)))?;
    let score = move |a: &dagnet::scheduler::Artifact| quality.score(a);
    let result = analysis::sweep(&base, &kinds, &args.scales, args.replicates, &score, args.sweep_workers).map_err(invalid)?;

    create_dir(&args.out_dir)?;
    write(&args.out_dir.join("sweep.csv"), &rows_to_csv(&result.rows).map_err(invalid)?)?;
    let summary = SweepSummary::new(result.points.clone());
    let text = serde_json::to_string_pretty(&json!({ "metadata": metadata(), "config": base, "summary": summary })).map_err(invalid)?;
    write(&args.out_dir.join("summary.json"), &(text + "\n"))?;
    write(&args.out_dir.join("scaling.svg"), &render_svg(&summary))?;

    println!("kind     n      quality     replicates");
    for p in &result.points {
        let q = if p.valid { format!("{:.6}", p.quality) } else { "invalid".into() };
        println!("{:<8} {:<6} {:<11} {}", p.kind.as_str(), p.node_count, q, p.replicate_count);
    }
    for (kind, fit) in &summary.fits {
        match fit {
            Ok(f) => println!("fit {kind}: alpha={:.6} beta={:.6} gamma={:.6} delta={:.6} sse={:.3e}", f.alpha, f.beta, f.gamma, f.delta, f.residual_sse),
            Err(e) => println!("fit {kind}: {e}"),
        }
    }
    if result.rows.iter().all(|r| r.error.is_some()) {
        let first = result.rows.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(unavailable(anyhow!("every run failed: {first}")));
    }
    Ok(())
}

pub fn fit(args: FitArgs) -> Outcome {
    let file = fs::File::open(&args.points).with_context(|| format!("opening {}", args.points.display())).map_err(io)?;
    let rows = read_points_csv(file).map_err(invalid)?;
    let pairs: Vec<(f64, f64)> = rows
        .into_iter()
        .filter(|(kind, _, _)| args.kind.is_none() || kind.as_deref() == args.kind.as_deref())
        .map(|(_, n, q)| (n, q))
        .collect();
    let f = fit_pairs(&pairs).map_err(invalid)?;
    println!("alpha {}", f.alpha);
    println!("beta  {}", f.beta);
    println!("gamma {}", f.gamma);
    println!("delta {}", f.delta);
    println!("sse   {}", f.residual_sse);
    Ok(())
}

pub fn tokens(args: TokensArgs) -> Outcome {
    let params = TokenParams::new(args.n, args.t, args.p, args.i, args.s, args.m).map_err(invalid)?;
    let (c, c_bar) = asymptotic_constants(&params);
    println!("with memory control:    {}", closed_form_tokens(&params, true));
    println!("without memory control: {}", closed_form_tokens(&params, false));
    println!("leading coefficients:   quadratic {c}, linear {c_bar}");
    Ok(())
}
