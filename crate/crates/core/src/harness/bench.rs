use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{write_lines, ExperimentRecord, RunConfig};
use crate::error::Result;
use crate::rl::{evaluate, train, EvalReport, Policy, ORACLE_GRID_DEG};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub name: String,
    pub eval: Option<EvalReport>,
    /// Training failure, if any; other rows still run.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct RlBenchmark {
    pub record: ExperimentRecord,
    pub rows: Vec<BenchmarkRow>,
}

/// Trains every configured algorithm with the global seed and evaluates each, plus the
/// oracle and a uniform-random policy, on the shared flux set drawn from `env.seed`.
pub fn run_rl_benchmark(cfg: &RunConfig) -> Result<RlBenchmark> {
    cfg.validate()?;
    let start = Instant::now();
    let rl = cfg.rl();
    let grid = rl.grid()?;
    let eval_seed = cfg.env.seed;
    let n = rl.eval_episodes;
    let mut record = ExperimentRecord::new("benchmark-rl", cfg);
    let mut rows = Vec::new();
    for &algo in &cfg.agent.algorithms {
        let name = algo.name().to_string();
        match train(algo, &rl, rl.steps, cfg.seed) {
            Ok((policy, trace)) => {
                record.metrics.insert(format!("{name}.train_i_max"), trace.i_max);
                record.metrics.insert(format!("{name}.train_reward"), trace.reward);
                let eval = evaluate(&policy, &rl.core, &rl.env, n, eval_seed)?;
                rows.push(BenchmarkRow {
                    name,
                    eval: Some(eval),
                    error: None,
                });
            }
            Err(aborted) => {
                record
                    .metrics
                    .insert(format!("{name}.train_i_max"), aborted.record.i_max.clone());
                rows.push(BenchmarkRow {
                    name,
                    eval: None,
                    error: Some(aborted.error.to_string()),
                });
            }
        }
    }
    for (name, policy) in [
        ("oracle", Policy::Oracle {
            grid_deg: ORACLE_GRID_DEG,
        }),
        ("random", Policy::Random { grid }),
    ] {
        rows.push(BenchmarkRow {
            name: name.into(),
            eval: Some(evaluate(&policy, &rl.core, &rl.env, n, eval_seed)?),
            error: None,
        });
    }
    for r in &rows {
        if let Some(e) = &r.eval {
            record.metrics.insert(format!("{}.eval_i_max", r.name), e.i_max.clone());
        }
    }
    record.summary = serde_json::json!(rows
        .iter()
        .map(|r| serde_json::json!({
            "policy": r.name,
            "summary": r.eval.as_ref().map(|e| e.summary),
            "frac_over_rated": r.eval.as_ref().map(|e| e.frac_over_rated),
            "error": r.error,
        }))
        .collect::<Vec<_>>());
    record.wall_clock_s = start.elapsed().as_secs_f64();
    Ok(RlBenchmark { record, rows })
}

/// Long-format per-episode table for box plots.
pub fn write_eval_csv(path: &Path, rows: &[(&str, &EvalReport)]) -> Result<()> {
    let mut lines = Vec::new();
    for (name, e) in rows {
        for (i, ((t, im), r)) in e.theta_deg.iter().zip(&e.i_max).zip(&e.reward).enumerate() {
            lines.push(format!("{name},{i},{t},{im},{r}"));
        }
    }
    write_lines(path, "policy,episode,theta_deg,i_max,reward", lines)
}

pub fn write_summary_csv(path: &Path, rows: &[BenchmarkRow]) -> Result<()> {
    write_lines(
        path,
        "policy,count,mean,std,min,q25,median,q75,max,frac_over_rated,error",
        rows.iter().map(|r| match &r.eval {
            Some(e) => {
                let s = e.summary;
                format!(
                    "{},{},{},{},{},{},{},{},{},{},",
                    r.name, s.count, s.mean, s.std, s.min, s.q25, s.median, s.q75, s.max, e.frac_over_rated
                )
            }
            None => format!(
                "{},0,,,,,,,,,\"{}\"",
                r.name,
                r.error.as_deref().unwrap_or("").replace('"', "'")
            ),
        }),
    )
}
