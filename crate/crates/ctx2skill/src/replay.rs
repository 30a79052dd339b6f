//! Cross-time replay: every archived probe is re-answered under every
//! candidate Reasoner skill version, and the version with the best
//! smoothed hard x easy solve product is selected. Arithmetic is exact
//! rational throughout; floats never decide a selection.

use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, AgentRunner};
use crate::engine::ProbeSets;
use crate::model::{ContextBundle, Task};
use crate::skills::{serialize_skill_set, Side, SkillError, SkillSet, SkillStore};

/// Laplace-smoothed solve rate: (solved + 1) / (total + 1).
pub fn laplace_rate(solved: u64, total: u64) -> Ratio<u64> {
    Ratio::new(solved + 1, total + 1)
}

/// Exact rational serialized as an explicit numerator/denominator pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rational {
    pub num: u64,
    pub den: u64,
}

impl From<Ratio<u64>> for Rational {
    fn from(r: Ratio<u64>) -> Self {
        Rational {
            num: *r.numer(),
            den: *r.denom(),
        }
    }
}

/// Per-candidate probe results feeding the selection rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CandidateCounts {
    pub iteration: u32,
    pub hard_solved: u64,
    pub easy_solved: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CandidateScore {
    pub iteration: u32,
    pub hard_solved: u64,
    pub easy_solved: u64,
    pub hard_rate: Rational,
    pub easy_rate: Rational,
    pub product: Rational,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplayReport {
    pub context_id: String,
    pub hard_probe_count: u64,
    pub easy_probe_count: u64,
    pub candidates: Vec<CandidateScore>,
    pub selected_iteration: u32,
    /// Rows follow `candidates` order; within a row, hard probe verdicts
    /// come first, then easy, both in archive order. `None` marks an
    /// unjudged probe (counted as unsolved).
    pub verdict_matrix: Vec<Vec<Option<bool>>>,
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("no candidate skill versions to score")]
    NoCandidates,
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Scores candidates and picks the winner: highest smoothed product, ties
/// to the earliest iteration. Counts must not exceed the probe set sizes.
pub fn select_skill_set(
    counts: &[CandidateCounts],
    hard_total: u64,
    easy_total: u64,
) -> Result<(u32, Vec<CandidateScore>), ReplayError> {
    if counts.is_empty() {
        return Err(ReplayError::NoCandidates);
    }
    let mut scores = Vec::with_capacity(counts.len());
    let mut best: Option<(Ratio<u64>, u32)> = None;
    for c in counts {
        assert!(c.hard_solved <= hard_total && c.easy_solved <= easy_total);
        let hard_rate = laplace_rate(c.hard_solved, hard_total);
        let easy_rate = laplace_rate(c.easy_solved, easy_total);
        let product = hard_rate * easy_rate;
        scores.push(CandidateScore {
            iteration: c.iteration,
            hard_solved: c.hard_solved,
            easy_solved: c.easy_solved,
            hard_rate: hard_rate.into(),
            easy_rate: easy_rate.into(),
            product: product.into(),
        });
        let better = match best {
            None => true,
            Some((best_product, best_iter)) => {
                product > best_product || (product == best_product && c.iteration < best_iter)
            }
        };
        if better {
            best = Some((product, c.iteration));
        }
    }
    Ok((best.expect("non-empty counts").1, scores))
}

pub struct ReplayRunner<'a> {
    runner: &'a AgentRunner<'a>,
    store: &'a SkillStore,
    workspace: PathBuf,
}

impl<'a> ReplayRunner<'a> {
    pub fn new(runner: &'a AgentRunner<'a>, store: &'a SkillStore, workspace: impl Into<PathBuf>) -> Self {
        ReplayRunner {
            runner,
            store,
            workspace: workspace.into(),
        }
    }

    pub fn report_path(workspace: &Path, context_id: &str) -> PathBuf {
        workspace.join(context_id).join("replay.json")
    }

    pub fn selected_path(workspace: &Path, context_id: &str) -> PathBuf {
        workspace.join(context_id).join("selected.md")
    }

    fn replay_probe(
        &self,
        context: &ContextBundle,
        skills: &SkillSet,
        task: &Task,
        candidate: u32,
    ) -> Result<Option<bool>, ReplayError> {
        let ctx_id = &context.context_id;
        let answer = self.runner.reasoner_answer(
            context,
            skills,
            task,
            &format!("reasoner/{ctx_id}/replay/cand{candidate}/{}", task.task_id),
        )?;
        match self.runner.judge_evaluate(
            task,
            &answer,
            &format!("judge/{ctx_id}/replay/cand{candidate}/{}", task.task_id),
        ) {
            Ok(outcome) => Ok(Some(outcome.verdict.solved)),
            Err(AgentError::Provider(err)) => Err(AgentError::Provider(err).into()),
            Err(err) => {
                log::warn!(
                    "probe {} unjudged under candidate {candidate}, counting as unsolved: {err}",
                    task.task_id
                );
                Ok(None)
            }
        }
    }

    /// Replays all probes under every candidate version 1..=`iterations`
    /// (version 0, the empty set, is not a candidate), writes
    /// `replay.json` and `selected.md`, and returns the report.
    pub fn run(
        &self,
        context: &ContextBundle,
        probes: &ProbeSets,
        iterations: u32,
    ) -> Result<ReplayReport, ReplayError> {
        if iterations == 0 {
            return Err(ReplayError::NoCandidates);
        }
        let ctx_id = &context.context_id;
        let mut counts = Vec::new();
        let mut matrix = Vec::new();
        for candidate in 1..=iterations {
            let skills = self.store.load_version(ctx_id, Side::Reasoner, candidate)?;
            let mut row = Vec::with_capacity(probes.hard.len() + probes.easy.len());
            let mut hard_solved = 0u64;
            let mut easy_solved = 0u64;
            for task in &probes.hard {
                let solved = self.replay_probe(context, &skills, task, candidate)?;
                if solved == Some(true) {
                    hard_solved += 1;
                }
                row.push(solved);
            }
            for task in &probes.easy {
                let solved = self.replay_probe(context, &skills, task, candidate)?;
                if solved == Some(true) {
                    easy_solved += 1;
                }
                row.push(solved);
            }
            counts.push(CandidateCounts {
                iteration: candidate,
                hard_solved,
                easy_solved,
            });
            matrix.push(row);
        }

        let (selected, scores) = select_skill_set(
            &counts,
            probes.hard.len() as u64,
            probes.easy.len() as u64,
        )?;
        let report = ReplayReport {
            context_id: ctx_id.clone(),
            hard_probe_count: probes.hard.len() as u64,
            easy_probe_count: probes.easy.len() as u64,
            candidates: scores,
            selected_iteration: selected,
            verdict_matrix: matrix,
        };

        let report_path = Self::report_path(&self.workspace, ctx_id);
        let body = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(&report_path, body).map_err(|source| ReplayError::Io {
            path: report_path,
            source,
        })?;

        let selected_set = self.store.load_version(ctx_id, Side::Reasoner, selected)?;
        let selected_path = Self::selected_path(&self.workspace, ctx_id);
        std::fs::write(&selected_path, serialize_skill_set(&selected_set)).map_err(|source| {
            ReplayError::Io {
                path: selected_path,
                source,
            }
        })?;
        Ok(report)
    }
}
