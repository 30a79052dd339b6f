//! Shared domain types plus the pure scoring and partitioning logic.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Task category labels used for per-category reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    DomainKnowledgeReasoning,
    RuleSystemApplication,
    ProceduralTaskExecution,
    EmpiricalDiscoverySimulation,
    Other,
}

impl Category {
    pub fn label(&self) -> &'static str {
        match self {
            Category::DomainKnowledgeReasoning => "domain_knowledge_reasoning",
            Category::RuleSystemApplication => "rule_system_application",
            Category::ProceduralTaskExecution => "procedural_task_execution",
            Category::EmpiricalDiscoverySimulation => "empirical_discovery_simulation",
            Category::Other => "other",
        }
    }
}

/// One benchmark context: system prompt, context text, and held-out tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub context_id: String,
    pub category: Category,
    pub system_prompt: String,
    pub context_text: String,
    /// Held-out tasks in ingestion order; sequential-task semantics depend on it.
    pub heldout_tasks: Vec<Task>,
}

impl ContextBundle {
    pub fn new(
        context_id: impl Into<String>,
        category: Category,
        system_prompt: impl Into<String>,
        context_text: impl Into<String>,
        heldout_tasks: Vec<Task>,
    ) -> Result<Self, ModelError> {
        let context_text = context_text.into();
        if context_text.is_empty() {
            return Err(ModelError::EmptyContext);
        }
        Ok(ContextBundle {
            context_id: context_id.into(),
            category,
            system_prompt: system_prompt.into(),
            context_text,
            heldout_tasks,
        })
    }

    /// The context as one block of text for prompts that take the whole
    /// conversation: the bundled system prompt (when present) followed by
    /// the conversation body.
    pub fn full_text(&self) -> String {
        if self.system_prompt.is_empty() {
            self.context_text.clone()
        } else {
            format!(
                "System Prompt:\n{}\n\nConversation:\n{}",
                self.system_prompt, self.context_text
            )
        }
    }
}

/// Where a task came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "iteration")]
pub enum TaskOrigin {
    Benchmark,
    Challenger(u32),
}

/// A single binary pass/fail criterion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rubric {
    pub text: String,
}

impl Rubric {
    pub fn new(text: impl Into<String>) -> Result<Self, ModelError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(ModelError::EmptyRubric);
        }
        Ok(Rubric { text })
    }
}

/// One probing task with its rubrics.
///
/// Zero-rubric tasks are rejected at construction; they are excluded from
/// scoring entirely rather than treated as vacuously solved.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    pub task_id: String,
    pub text: String,
    pub rubrics: Vec<Rubric>,
    pub origin: TaskOrigin,
    pub turn_index: u32,
}

impl Task {
    pub fn new(
        task_id: impl Into<String>,
        text: impl Into<String>,
        rubrics: Vec<Rubric>,
        origin: TaskOrigin,
        turn_index: u32,
    ) -> Result<Self, ModelError> {
        if rubrics.is_empty() {
            return Err(ModelError::ZeroRubrics);
        }
        Ok(Task {
            task_id: task_id.into(),
            text: text.into(),
            rubrics,
            origin,
            turn_index,
        })
    }
}

/// A Reasoner answer, tagged with the skill version in effect.
/// Version 0 denotes the empty skill set (baseline, no prepend).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub task_id: String,
    pub text: String,
    pub skill_version: u32,
    pub model_id: String,
}

/// Per-rubric judge outcome for one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub task_id: String,
    /// Pass/fail per rubric, same length and order as the task's rubrics.
    pub per_rubric: Vec<bool>,
    pub rationale: String,
    pub solved: bool,
}

impl Verdict {
    /// Builds a verdict whose `solved` flag is derived from the flags,
    /// upholding the all-or-nothing invariant by construction.
    pub fn from_flags(
        task_id: impl Into<String>,
        per_rubric: Vec<bool>,
        rationale: impl Into<String>,
    ) -> Result<Self, ModelError> {
        if per_rubric.is_empty() {
            return Err(ModelError::ZeroRubrics);
        }
        let solved = per_rubric.iter().all(|&b| b);
        Ok(Verdict {
            task_id: task_id.into(),
            per_rubric,
            rationale: rationale.into(),
            solved,
        })
    }
}

/// Which agent role a model binding or decoding setting applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Challenger,
    Reasoner,
    Judge,
    Proposer,
    Generator,
    QualityEvaluator,
}

impl Role {
    pub fn label(&self) -> &'static str {
        match self {
            Role::Challenger => "challenger",
            Role::Reasoner => "reasoner",
            Role::Judge => "judge",
            Role::Proposer => "proposer",
            Role::Generator => "generator",
            Role::QualityEvaluator => "quality_evaluator",
        }
    }
}

/// Per-role decoding settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub max_output: u32,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            temperature: 1.0,
            max_output: 8192,
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("context_text must be non-empty")]
    EmptyContext,
    #[error("rubric text must be non-empty")]
    EmptyRubric,
    #[error("task admitted to scoring must have at least one rubric")]
    ZeroRubrics,
    #[error("verdict flag list is empty (a zero-rubric task leaked through)")]
    EmptyFlags,
    #[error("duplicate task_id in verdict batch: {0}")]
    DuplicateTaskId(String),
}

/// All-or-nothing solving indicator: 1 iff every rubric flag is true.
pub fn score_task(verdict_flags: &[bool]) -> Result<u8, ModelError> {
    if verdict_flags.is_empty() {
        return Err(ModelError::EmptyFlags);
    }
    Ok(verdict_flags.iter().all(|&b| b) as u8)
}

/// Splits a judged batch into failed and solved task-id sets.
pub fn partition_batch(
    verdicts: &[Verdict],
) -> Result<(BTreeSet<String>, BTreeSet<String>), ModelError> {
    let mut failed = BTreeSet::new();
    let mut solved = BTreeSet::new();
    for v in verdicts {
        let target = if v.solved { &mut solved } else { &mut failed };
        if !target.insert(v.task_id.clone())
            || (v.solved && failed.contains(&v.task_id))
            || (!v.solved && solved.contains(&v.task_id))
        {
            return Err(ModelError::DuplicateTaskId(v.task_id.clone()));
        }
    }
    Ok((failed, solved))
}

/// Fraction of rubrics passed.
pub fn rubric_pass_rate(verdict: &Verdict) -> f64 {
    let passed = verdict.per_rubric.iter().filter(|&&b| b).count();
    passed as f64 / verdict.per_rubric.len() as f64
}
