//! Self-play orchestration: the per-context iteration loop, routing,
//! skill co-evolution, probe-set accumulation, JSONL trace logging, and
//! resumable checkpoints.

mod trace;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use trace::{payload_hash, read_trace, truncate_to_iteration, TraceError, TraceEvent, TraceWriter};

use crate::agents::{AgentError, AgentRunner, TraceCase};
use crate::model::{rubric_pass_rate, Answer, ContextBundle, Task, Verdict};
use crate::provider::ProviderError;
use crate::skills::{serialize_skill_set, Side, SkillError, SkillProposal, SkillSet, SkillStore};

/// Representative tasks archived during self-play: per iteration, the
/// hardest failure and the easiest success. Full tasks are stored so
/// replay can re-answer them after the originating trace is archived.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ProbeSets {
    pub hard: Vec<Task>,
    pub easy: Vec<Task>,
}

/// Full record of one self-play iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub tasks: Vec<Task>,
    pub answers: Vec<Answer>,
    pub verdicts: Vec<Verdict>,
    pub failed_ids: Vec<String>,
    pub solved_ids: Vec<String>,
    pub unjudged_ids: Vec<String>,
    pub reasoner_proposal: Option<SkillProposal>,
    pub challenger_proposal: Option<SkillProposal>,
    pub reasoner_skill_version: u32,
    pub challenger_skill_version: u32,
    pub hard_pick: Option<String>,
    pub easy_pick: Option<String>,
    pub anomalies: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Checkpoint {
    last_completed_iteration: u32,
    next_seq: u64,
    probes: ProbeSets,
    records: Vec<IterationRecord>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("checkpoint error at {path}: {message}")]
    Checkpoint { path: PathBuf, message: String },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("challenger generation failed for iteration {iteration}: {message}")]
    GenerationAborted { iteration: u32, message: String },
}

/// Picks the probe candidates from one judged batch.
///
/// Hard pick: the failed task with the lowest rubric pass rate; ties go
/// to the fewer absolute rubrics passed, then the lowest batch index.
/// Easy pick: the solved task with the fewest rubrics; ties go to the
/// lowest batch index. Returns batch indices into `tasks`.
pub fn curate_probes(tasks: &[Task], verdicts: &[Verdict]) -> (Option<usize>, Option<usize>) {
    let judged: Vec<(usize, &Verdict)> = tasks
        .iter()
        .enumerate()
        .filter_map(|(idx, task)| {
            verdicts
                .iter()
                .find(|v| v.task_id == task.task_id)
                .map(|v| (idx, v))
        })
        .collect();

    let passed = |v: &Verdict| v.per_rubric.iter().filter(|&&b| b).count() as u64;
    let total = |v: &Verdict| v.per_rubric.len() as u64;

    let hard = judged
        .iter()
        .filter(|(_, v)| !v.solved)
        .min_by(|(ia, va), (ib, vb)| {
            // Exact rate comparison via cross-multiplication.
            let rate = (passed(va) * total(vb)).cmp(&(passed(vb) * total(va)));
            rate.then(passed(va).cmp(&passed(vb))).then(ia.cmp(ib))
        })
        .map(|(idx, _)| *idx);

    let easy = judged
        .iter()
        .filter(|(_, v)| v.solved)
        .min_by(|(ia, va), (ib, vb)| total(va).cmp(&total(vb)).then(ia.cmp(ib)))
        .map(|(idx, _)| *idx);

    (hard, easy)
}

/// Everything a finished (or resumed) context run yields in memory; the
/// durable outputs live in the workspace.
#[derive(Debug)]
pub struct SelfPlayOutcome {
    pub records: Vec<IterationRecord>,
    pub probes: ProbeSets,
    pub completed_iterations: u32,
}

pub struct SelfPlayEngine<'a> {
    runner: &'a AgentRunner<'a>,
    store: SkillStore,
    workspace: PathBuf,
    iterations: u32,
    batch_size: u32,
    deterministic: bool,
    abort_on_generation_error: bool,
    /// Test hook: stop after this iteration completes, leaving a
    /// resumable checkpoint in place.
    pub stop_after: Option<u32>,
}

impl<'a> SelfPlayEngine<'a> {
    pub fn new(
        runner: &'a AgentRunner<'a>,
        workspace: impl Into<PathBuf>,
        iterations: u32,
        batch_size: u32,
        deterministic: bool,
        abort_on_generation_error: bool,
    ) -> Self {
        let workspace = workspace.into();
        SelfPlayEngine {
            runner,
            store: SkillStore::new(&workspace),
            workspace,
            iterations,
            batch_size,
            deterministic,
            abort_on_generation_error,
            stop_after: None,
        }
    }

    pub fn store(&self) -> &SkillStore {
        &self.store
    }

    pub fn trace_path(workspace: &Path, context_id: &str) -> PathBuf {
        workspace.join(context_id).join("trace.jsonl")
    }

    pub fn checkpoint_path(workspace: &Path, context_id: &str) -> PathBuf {
        workspace.join(context_id).join("checkpoint.json")
    }

    fn load_checkpoint(&self, context_id: &str) -> Result<Option<Checkpoint>, EngineError> {
        let path = Self::checkpoint_path(&self.workspace, context_id);
        if !path.exists() {
            return Ok(None);
        }
        let raw = std::fs::read_to_string(&path).map_err(|source| EngineError::Io {
            path: path.clone(),
            source,
        })?;
        serde_json::from_str(&raw)
            .map(Some)
            .map_err(|e| EngineError::Checkpoint {
                path,
                message: e.to_string(),
            })
    }

    fn write_checkpoint(&self, context_id: &str, checkpoint: &Checkpoint) -> Result<(), EngineError> {
        let path = Self::checkpoint_path(&self.workspace, context_id);
        let tmp = path.with_extension("json.tmp");
        let body = serde_json::to_string_pretty(checkpoint).expect("checkpoint serializes");
        std::fs::write(&tmp, body).map_err(|source| EngineError::Io {
            path: tmp.clone(),
            source,
        })?;
        std::fs::rename(&tmp, &path).map_err(|source| EngineError::Io { path, source })
    }

    /// Runs (or resumes) the full self-play loop for one context.
    pub fn run_context(&self, context: &ContextBundle) -> Result<SelfPlayOutcome, EngineError> {
        let ctx_dir = self.workspace.join(&context.context_id);
        std::fs::create_dir_all(&ctx_dir).map_err(|source| EngineError::Io {
            path: ctx_dir.clone(),
            source,
        })?;

        let (mut probes, mut records, start_iteration, next_seq) =
            match self.load_checkpoint(&context.context_id)? {
                Some(cp) => {
                    let trace_path = Self::trace_path(&self.workspace, &context.context_id);
                    let next_seq = truncate_to_iteration(&trace_path, cp.last_completed_iteration)?;
                    (cp.probes, cp.records, cp.last_completed_iteration + 1, next_seq)
                }
                None => {
                    for side in [Side::Reasoner, Side::Challenger] {
                        self.store
                            .persist_version(&context.context_id, &SkillSet::empty(side))?;
                    }
                    (ProbeSets::default(), Vec::new(), 1, 0)
                }
            };

        let mut trace = TraceWriter::new(
            Self::trace_path(&self.workspace, &context.context_id),
            self.deterministic,
            next_seq,
        );

        let mut reasoner_skills = self.store.load_version(
            &context.context_id,
            Side::Reasoner,
            start_iteration - 1,
        )?;
        let mut challenger_skills = self.store.load_version(
            &context.context_id,
            Side::Challenger,
            start_iteration - 1,
        )?;

        for iteration in start_iteration..=self.iterations {
            if let Some(stop) = self.stop_after {
                if iteration > stop {
                    break;
                }
            }
            let record = self.run_iteration(
                context,
                iteration,
                &mut reasoner_skills,
                &mut challenger_skills,
                &mut probes,
                &mut trace,
            )?;
            records.push(record);

            trace.record(
                iteration,
                "checkpoint",
                json!({
                    "iteration": iteration,
                    "reasoner_skill_version": reasoner_skills.iteration,
                    "challenger_skill_version": challenger_skills.iteration,
                    "hard_probe_count": probes.hard.len(),
                    "easy_probe_count": probes.easy.len(),
                }),
            );
            trace.flush()?;
            self.write_checkpoint(
                &context.context_id,
                &Checkpoint {
                    last_completed_iteration: iteration,
                    next_seq: trace.next_seq(),
                    probes: probes.clone(),
                    records: records.clone(),
                },
            )?;
        }

        let completed_iterations = records.last().map(|r| r.iteration).unwrap_or(0);
        Ok(SelfPlayOutcome {
            records,
            probes,
            completed_iterations,
        })
    }

    /// Loads the probe sets persisted by a completed (or partial) run.
    pub fn load_probes(workspace: &Path, context_id: &str) -> Result<ProbeSets, EngineError> {
        let path = Self::checkpoint_path(workspace, context_id);
        let raw = std::fs::read_to_string(&path).map_err(|source| EngineError::Io {
            path: path.clone(),
            source,
        })?;
        let cp: Checkpoint = serde_json::from_str(&raw).map_err(|e| EngineError::Checkpoint {
            path,
            message: e.to_string(),
        })?;
        Ok(cp.probes)
    }

    fn run_iteration(
        &self,
        context: &ContextBundle,
        iteration: u32,
        reasoner_skills: &mut SkillSet,
        challenger_skills: &mut SkillSet,
        probes: &mut ProbeSets,
        trace: &mut TraceWriter,
    ) -> Result<IterationRecord, EngineError> {
        let ctx_id = &context.context_id;
        let mut anomalies = Vec::new();

        // --- Task generation ---
        let batch = match self.runner.challenger_generate(
            context,
            challenger_skills,
            self.batch_size,
            iteration,
            &format!("challenger/{ctx_id}/iter{iteration}"),
        ) {
            Ok(batch) => batch,
            Err(AgentError::Provider(err)) if is_transport(&err) => {
                return Err(AgentError::Provider(err).into());
            }
            Err(err) => {
                if self.abort_on_generation_error {
                    return Err(EngineError::GenerationAborted {
                        iteration,
                        message: err.to_string(),
                    });
                }
                anomalies.push(format!(
                    "iteration {iteration} recorded empty: challenger generation failed ({err})"
                ));
                // Carry both sides forward so every iteration index stays
                // addressable for replay.
                *reasoner_skills = reasoner_skills.carried_forward(iteration);
                *challenger_skills = challenger_skills.carried_forward(iteration);
                for (side, set) in [
                    (Side::Reasoner, &*reasoner_skills),
                    (Side::Challenger, &*challenger_skills),
                ] {
                    self.store.persist_version(ctx_id, set)?;
                    trace.record(iteration, "skill_applied", skill_applied_payload(side, set, true));
                }
                return Ok(IterationRecord {
                    iteration,
                    tasks: vec![],
                    answers: vec![],
                    verdicts: vec![],
                    failed_ids: vec![],
                    solved_ids: vec![],
                    unjudged_ids: vec![],
                    reasoner_proposal: None,
                    challenger_proposal: None,
                    reasoner_skill_version: iteration,
                    challenger_skill_version: iteration,
                    hard_pick: None,
                    easy_pick: None,
                    anomalies,
                });
            }
        };
        anomalies.extend(batch.dropped.iter().cloned());
        let tasks = batch.tasks;
        for task in &tasks {
            trace.record(iteration, "task_generated", json!({ "task": task }));
        }

        // --- Reasoning and judging ---
        let mut answers = Vec::new();
        let mut verdicts = Vec::new();
        let mut unjudged_ids = Vec::new();
        let mut cases = Vec::new();
        for task in &tasks {
            let answer = self.runner.reasoner_answer(
                context,
                reasoner_skills,
                task,
                &format!("reasoner/{ctx_id}/iter{iteration}/{}", task.task_id),
            )?;
            trace.record(
                iteration,
                "answered",
                json!({
                    "task_id": answer.task_id,
                    "skill_version": answer.skill_version,
                    "model_id": answer.model_id,
                    "text": answer.text,
                }),
            );
            if answer.text.is_empty() {
                anomalies.push(format!("empty reasoner output for {}", task.task_id));
            }

            match self.runner.judge_evaluate(
                task,
                &answer,
                &format!("judge/{ctx_id}/iter{iteration}/{}", task.task_id),
            ) {
                Ok(outcome) => {
                    anomalies.extend(outcome.warnings);
                    trace.record(
                        iteration,
                        "judged",
                        json!({
                            "task_id": outcome.verdict.task_id,
                            "per_rubric": outcome.verdict.per_rubric,
                            "solved": outcome.verdict.solved,
                            "rationale": outcome.verdict.rationale,
                        }),
                    );
                    cases.push(TraceCase {
                        task: task.clone(),
                        answer: answer.clone(),
                        verdict: outcome.verdict.clone(),
                    });
                    verdicts.push(outcome.verdict);
                }
                Err(AgentError::Provider(err)) if is_transport(&err) => {
                    return Err(AgentError::Provider(err).into());
                }
                Err(err) => {
                    anomalies.push(format!(
                        "task {} unjudged and excluded from routing: {err}",
                        task.task_id
                    ));
                    trace.record(
                        iteration,
                        "judged",
                        json!({ "task_id": task.task_id, "unjudged": true, "error": err.to_string() }),
                    );
                    unjudged_ids.push(task.task_id.clone());
                }
            }
            answers.push(answer);
        }

        let (failed_set, solved_set) = crate::model::partition_batch(&verdicts)
            .expect("challenger task ids are unique within a batch");
        let failed_ids: Vec<String> = tasks
            .iter()
            .filter(|t| failed_set.contains(&t.task_id))
            .map(|t| t.task_id.clone())
            .collect();
        let solved_ids: Vec<String> = tasks
            .iter()
            .filter(|t| solved_set.contains(&t.task_id))
            .map(|t| t.task_id.clone())
            .collect();
        trace.record(
            iteration,
            "routed",
            json!({
                "failed": failed_ids,
                "solved": solved_ids,
                "unjudged": unjudged_ids,
            }),
        );

        // --- Skill co-evolution: both proposals are computed from the
        // pre-update state, then both applied. ---
        let routed_for = |want_solved: bool| -> Vec<TraceCase> {
            cases
                .iter()
                .filter(|c| c.verdict.solved == want_solved)
                .cloned()
                .collect()
        };
        let reasoner_routed = routed_for(false);
        let challenger_routed = routed_for(true);

        let (new_reasoner, reasoner_proposal) = self.update_side(
            context,
            Side::Reasoner,
            &cases,
            &reasoner_routed,
            reasoner_skills,
            iteration,
            &mut anomalies,
            trace,
        )?;
        let (new_challenger, challenger_proposal) = self.update_side(
            context,
            Side::Challenger,
            &cases,
            &challenger_routed,
            challenger_skills,
            iteration,
            &mut anomalies,
            trace,
        )?;
        *reasoner_skills = new_reasoner;
        *challenger_skills = new_challenger;

        for (side, set) in [
            (Side::Reasoner, &*reasoner_skills),
            (Side::Challenger, &*challenger_skills),
        ] {
            self.store.persist_version(ctx_id, set)?;
            let carried = match side {
                Side::Reasoner => reasoner_proposal.is_none(),
                Side::Challenger => challenger_proposal.is_none(),
            };
            trace.record(iteration, "skill_applied", skill_applied_payload(side, set, carried));
        }

        // --- Probe accumulation ---
        let (hard_idx, easy_idx) = curate_probes(&tasks, &verdicts);
        let hard_pick = hard_idx.map(|i| tasks[i].task_id.clone());
        let easy_pick = easy_idx.map(|i| tasks[i].task_id.clone());
        if let Some(i) = hard_idx {
            probes.hard.push(tasks[i].clone());
            trace.record(
                iteration,
                "probe_added",
                json!({
                    "probe": "hard",
                    "task_id": tasks[i].task_id,
                    "pass_rate": rubric_pass_rate(verdicts.iter().find(|v| v.task_id == tasks[i].task_id).unwrap()),
                }),
            );
        }
        if let Some(i) = easy_idx {
            probes.easy.push(tasks[i].clone());
            trace.record(
                iteration,
                "probe_added",
                json!({
                    "probe": "easy",
                    "task_id": tasks[i].task_id,
                    "rubric_count": tasks[i].rubrics.len(),
                }),
            );
        }

        Ok(IterationRecord {
            iteration,
            tasks,
            answers,
            verdicts,
            failed_ids,
            solved_ids,
            unjudged_ids,
            reasoner_proposal,
            challenger_proposal,
            reasoner_skill_version: iteration,
            challenger_skill_version: iteration,
            hard_pick,
            easy_pick,
            anomalies,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn update_side(
        &self,
        context: &ContextBundle,
        side: Side,
        all_cases: &[TraceCase],
        routed: &[TraceCase],
        current: &SkillSet,
        iteration: u32,
        anomalies: &mut Vec<String>,
        trace: &mut TraceWriter,
    ) -> Result<(SkillSet, Option<SkillProposal>), EngineError> {
        let ctx_id = &context.context_id;
        let carry = |anomalies: &mut Vec<String>, note: String| {
            anomalies.push(note);
            current.carried_forward(iteration)
        };

        if routed.is_empty() {
            let set = carry(
                anomalies,
                format!(
                    "no routed cases for {} at iteration {iteration}; skills carried forward",
                    side.label()
                ),
            );
            return Ok((set, None));
        }

        let proposal = match self.runner.propose_skill(
            side,
            context,
            all_cases,
            routed,
            current,
            iteration,
            self.batch_size,
            &format!("proposer/{}/{ctx_id}/iter{iteration}", side.label()),
        ) {
            Ok((proposal, warnings)) => {
                anomalies.extend(warnings.clone());
                trace.record(
                    iteration,
                    "proposal",
                    json!({ "side": side.label(), "proposal": proposal, "warnings": warnings }),
                );
                proposal
            }
            Err(AgentError::Provider(err)) if is_transport(&err) => {
                return Err(AgentError::Provider(err).into());
            }
            Err(err) => {
                let set = carry(
                    anomalies,
                    format!("{} proposal failed ({err}); skills carried forward", side.label()),
                );
                return Ok((set, None));
            }
        };

        let generated = match self.runner.generate_skill(
            side,
            &proposal,
            current,
            &format!("generator/{}/{ctx_id}/iter{iteration}", side.label()),
        ) {
            Ok(generated) => {
                anomalies.extend(generated.warnings.clone());
                generated
            }
            Err(AgentError::Provider(err)) if is_transport(&err) => {
                return Err(AgentError::Provider(err).into());
            }
            Err(err) => {
                let set = carry(
                    anomalies,
                    format!("{} generation failed ({err}); skills carried forward", side.label()),
                );
                return Ok((set, Some(proposal)));
            }
        };

        match crate::skills::apply_proposal(
            current,
            &proposal,
            &generated.description,
            &generated.body,
            iteration,
        ) {
            Ok(set) => Ok((set, Some(proposal))),
            Err(err) => {
                let set = carry(
                    anomalies,
                    format!(
                        "{} proposal could not be applied ({err}); skills carried forward",
                        side.label()
                    ),
                );
                Ok((set, Some(proposal)))
            }
        }
    }
}

fn is_transport(err: &ProviderError) -> bool {
    matches!(
        err,
        ProviderError::Transport { .. }
            | ProviderError::UnknownModel(_)
            | ProviderError::MissingTranscript { .. }
    )
}

fn skill_applied_payload(side: Side, set: &SkillSet, carried: bool) -> serde_json::Value {
    json!({
        "side": side.label(),
        "version": set.iteration,
        "carried_forward": carried,
        "entry_count": set.entries.len(),
        "word_count": serialize_skill_set(set).split_whitespace().count(),
    })
}
