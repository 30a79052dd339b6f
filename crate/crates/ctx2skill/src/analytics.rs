//! Trace analytics: recomputes the self-play dynamics tables (solved and
//! failed averages, rubric and word-length distributions, skill growth,
//! and the replay selection histogram) from recorded JSONL traces.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::engine::TraceEvent;

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("no trace data to analyze")]
    NoData,
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Count of maximal non-whitespace runs.
pub fn word_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Order statistics over a non-empty integer sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub min: u64,
    pub max: u64,
    pub mean: f64,
    pub median: f64,
}

pub fn stats(samples: &[u64]) -> Option<Stats> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2] as f64
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
    };
    Some(Stats {
        min: sorted[0],
        max: sorted[n - 1],
        mean: sorted.iter().sum::<u64>() as f64 / n as f64,
        median,
    })
}

/// Least-squares slope of `values` against their indices 0, 1, 2, ...
pub fn least_squares_slope(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.len() < 2 {
        return 0.0;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &y) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        num += dx * (y - mean_y);
        den += dx * dx;
    }
    num / den
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationDynamics {
    pub iteration: u32,
    /// Contexts contributing a completed iteration (empty iterations are
    /// excluded from the averages and counted separately).
    pub contexts: u64,
    pub empty_contexts: u64,
    pub avg_solved: f64,
    pub avg_failed: f64,
    pub solved_rate_pct: f64,
    pub rubric_pass_rate_pct: f64,
    pub rubric_counts: Option<Stats>,
    pub task_words: Option<Stats>,
    pub answer_words: Option<Stats>,
    pub reasoner_skill_words: Option<Stats>,
    pub challenger_skill_words: Option<Stats>,
}

/// Descriptive trend flags for the adversarial-collapse signature.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CollapseSignature {
    pub task_length_slope: f64,
    pub task_length_growth: bool,
    pub rubric_pass_slope: f64,
    pub rubric_pass_falling: bool,
    pub solved_rate_slope: f64,
    pub solved_rate_falling: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DynamicsReport {
    pub iterations: Vec<IterationDynamics>,
    pub selection_histogram: BTreeMap<u32, u64>,
    pub selected_skill_words: Option<Stats>,
    pub collapse: CollapseSignature,
}

/// Replay outcome for one context, feeding the selection histogram.
#[derive(Debug, Clone, Copy)]
pub struct SelectionInfo {
    pub selected_iteration: u32,
    pub selected_skill_words: u64,
}

#[derive(Default)]
struct IterationAccumulator {
    contexts: u64,
    empty_contexts: u64,
    solved_total: u64,
    failed_total: u64,
    rubric_passed: u64,
    rubric_total: u64,
    rubric_counts: Vec<u64>,
    task_words: Vec<u64>,
    answer_words: Vec<u64>,
    reasoner_skill_words: Vec<u64>,
    challenger_skill_words: Vec<u64>,
}

/// Aggregates one parsed trace per context into the dynamics report.
pub fn compute_dynamics(
    traces: &[Vec<TraceEvent>],
    selections: &[SelectionInfo],
) -> Result<DynamicsReport, AnalyticsError> {
    if traces.is_empty() {
        return Err(AnalyticsError::NoData);
    }
    let mut acc: BTreeMap<u32, IterationAccumulator> = BTreeMap::new();
    for events in traces {
        let mut seen_routed: BTreeMap<u32, bool> = BTreeMap::new();
        for event in events {
            let a = acc.entry(event.iteration).or_default();
            let p = &event.payload;
            match event.event.as_str() {
                "task_generated" => {
                    if let Some(task) = p.get("task") {
                        let rubrics = task
                            .get("rubrics")
                            .and_then(Value::as_array)
                            .map(|r| r.len() as u64)
                            .unwrap_or(0);
                        if rubrics > 0 {
                            a.rubric_counts.push(rubrics);
                            let text = task.get("text").and_then(Value::as_str).unwrap_or("");
                            a.task_words.push(word_count(text));
                        }
                    }
                }
                "answered" => {
                    let text = p.get("text").and_then(Value::as_str).unwrap_or("");
                    if !text.is_empty() {
                        a.answer_words.push(word_count(text));
                    }
                }
                "judged" => {
                    if let Some(flags) = p.get("per_rubric").and_then(Value::as_array) {
                        a.rubric_total += flags.len() as u64;
                        a.rubric_passed +=
                            flags.iter().filter(|v| v.as_bool() == Some(true)).count() as u64;
                    }
                }
                "routed" => {
                    let len = |key: &str| {
                        p.get(key).and_then(Value::as_array).map(|v| v.len() as u64)
                    };
                    a.solved_total += len("solved").unwrap_or(0);
                    a.failed_total += len("failed").unwrap_or(0);
                    seen_routed.insert(event.iteration, true);
                }
                "skill_applied" => {
                    let words = p.get("word_count").and_then(Value::as_u64).unwrap_or(0);
                    match p.get("side").and_then(Value::as_str) {
                        Some("reasoner") => a.reasoner_skill_words.push(words),
                        Some("challenger") => a.challenger_skill_words.push(words),
                        _ => {}
                    }
                    seen_routed.entry(event.iteration).or_insert(false);
                }
                _ => {}
            }
        }
        for (iteration, routed) in seen_routed {
            let a = acc.entry(iteration).or_default();
            if routed {
                a.contexts += 1;
            } else {
                a.empty_contexts += 1;
            }
        }
    }

    let iterations: Vec<IterationDynamics> = acc
        .into_iter()
        .map(|(iteration, a)| {
            let n = a.contexts.max(1) as f64;
            let avg_solved = a.solved_total as f64 / n;
            let avg_failed = a.failed_total as f64 / n;
            let batch = avg_solved + avg_failed;
            IterationDynamics {
                iteration,
                contexts: a.contexts,
                empty_contexts: a.empty_contexts,
                avg_solved,
                avg_failed,
                solved_rate_pct: if batch > 0.0 {
                    avg_solved / batch * 100.0
                } else {
                    0.0
                },
                rubric_pass_rate_pct: if a.rubric_total > 0 {
                    a.rubric_passed as f64 / a.rubric_total as f64 * 100.0
                } else {
                    0.0
                },
                rubric_counts: stats(&a.rubric_counts),
                task_words: stats(&a.task_words),
                answer_words: stats(&a.answer_words),
                reasoner_skill_words: stats(&a.reasoner_skill_words),
                challenger_skill_words: stats(&a.challenger_skill_words),
            }
        })
        .collect();

    let mut selection_histogram = BTreeMap::new();
    let mut selected_words = Vec::new();
    for s in selections {
        *selection_histogram.entry(s.selected_iteration).or_insert(0u64) += 1;
        selected_words.push(s.selected_skill_words);
    }

    let collapse = collapse_signature(&iterations);
    Ok(DynamicsReport {
        iterations,
        selection_histogram,
        selected_skill_words: stats(&selected_words),
        collapse,
    })
}

/// Trend flags over the per-iteration series; purely descriptive.
pub fn collapse_signature(iterations: &[IterationDynamics]) -> CollapseSignature {
    let series = |f: fn(&IterationDynamics) -> f64| -> Vec<f64> {
        iterations.iter().map(f).collect()
    };
    let task_lengths: Vec<f64> = iterations
        .iter()
        .filter_map(|d| d.task_words.map(|s| s.mean))
        .collect();
    let task_length_slope = least_squares_slope(&task_lengths);
    let rubric_pass_slope = least_squares_slope(&series(|d| d.rubric_pass_rate_pct));
    let solved_rate_slope = least_squares_slope(&series(|d| d.solved_rate_pct));
    CollapseSignature {
        task_length_slope,
        task_length_growth: task_length_slope > 0.0,
        rubric_pass_slope,
        rubric_pass_falling: rubric_pass_slope < 0.0,
        solved_rate_slope,
        solved_rate_falling: solved_rate_slope < 0.0,
    }
}

fn stat_cells(s: &Option<Stats>) -> String {
    match s {
        Some(s) => format!("{} | {} | {:.2} | {:.1}", s.min, s.max, s.mean, s.median),
        None => "- | - | - | -".to_string(),
    }
}

pub fn render_csv(report: &DynamicsReport) -> String {
    let mut out = String::from("iteration,metric,value\n");
    for d in &report.iterations {
        let mut push = |metric: &str, value: f64| {
            out.push_str(&format!("{},{metric},{value}\n", d.iteration));
        };
        push("contexts", d.contexts as f64);
        push("empty_contexts", d.empty_contexts as f64);
        push("avg_solved", d.avg_solved);
        push("avg_failed", d.avg_failed);
        push("solved_rate_pct", d.solved_rate_pct);
        push("rubric_pass_rate_pct", d.rubric_pass_rate_pct);
        for (name, s) in [
            ("rubric_count", &d.rubric_counts),
            ("task_words", &d.task_words),
            ("answer_words", &d.answer_words),
            ("reasoner_skill_words", &d.reasoner_skill_words),
            ("challenger_skill_words", &d.challenger_skill_words),
        ] {
            if let Some(s) = s {
                push(&format!("{name}_min"), s.min as f64);
                push(&format!("{name}_max"), s.max as f64);
                push(&format!("{name}_mean"), s.mean);
                push(&format!("{name}_median"), s.median);
            }
        }
    }
    for (iteration, count) in &report.selection_histogram {
        out.push_str(&format!("{iteration},selection_count,{count}\n"));
    }
    out
}

pub fn render_markdown(report: &DynamicsReport) -> String {
    let mut out = String::from("# Self-play Dynamics\n\n");
    out.push_str("| Iter | Contexts | Avg solved | Avg failed | Solved rate | Rubric pass rate |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for d in &report.iterations {
        out.push_str(&format!(
            "| {} | {} | {:.2} | {:.2} | {:.1}% | {:.1}% |\n",
            d.iteration, d.contexts, d.avg_solved, d.avg_failed, d.solved_rate_pct,
            d.rubric_pass_rate_pct
        ));
    }
    for (title, field) in [
        ("Rubric counts", 0usize),
        ("Task word lengths", 1),
        ("Answer word lengths", 2),
        ("Reasoner skill-set word counts", 3),
        ("Challenger skill-set word counts", 4),
    ] {
        out.push_str(&format!("\n## {title}\n\n"));
        out.push_str("| Iter | Min | Max | Mean | Median |\n|---|---|---|---|---|\n");
        for d in &report.iterations {
            let s = match field {
                0 => &d.rubric_counts,
                1 => &d.task_words,
                2 => &d.answer_words,
                3 => &d.reasoner_skill_words,
                _ => &d.challenger_skill_words,
            };
            out.push_str(&format!("| {} | {} |\n", d.iteration, stat_cells(s)));
        }
    }
    out.push_str("\n## Replay selection histogram\n\n| Iter | Selections |\n|---|---|\n");
    for (iteration, count) in &report.selection_histogram {
        out.push_str(&format!("| {iteration} | {count} |\n"));
    }
    if let Some(s) = &report.selected_skill_words {
        out.push_str(&format!(
            "\nSelected skill-set word counts: min {} max {} mean {:.2} median {:.1}\n",
            s.min, s.max, s.mean, s.median
        ));
    }
    let c = &report.collapse;
    out.push_str("\n## Collapse signature\n\n");
    out.push_str(&format!(
        "- task length growth: {} (slope {:.3})\n- rubric pass rate falling: {} (slope {:.3})\n- solved rate falling: {} (slope {:.3})\n",
        c.task_length_growth, c.task_length_slope,
        c.rubric_pass_falling, c.rubric_pass_slope,
        c.solved_rate_falling, c.solved_rate_slope
    ));
    out
}

/// Writes `dynamics.csv` and `dynamics.md` under `out_dir`.
pub fn write_dynamics(report: &DynamicsReport, out_dir: &Path) -> Result<(), AnalyticsError> {
    std::fs::create_dir_all(out_dir).map_err(|source| AnalyticsError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    for (name, body) in [
        ("dynamics.csv", render_csv(report)),
        ("dynamics.md", render_markdown(report)),
    ] {
        let path = out_dir.join(name);
        std::fs::write(&path, body).map_err(|source| AnalyticsError::Io { path, source })?;
    }
    Ok(())
}
