//! Held-out evaluation: deploy a skill condition on each context's
//! benchmark tasks, run sequential conversations, judge per task, and
//! aggregate per-category and overall solving rates.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, AgentRunner};
use crate::model::{Answer, Category, ContextBundle, Verdict};
use crate::replay::{ReplayReport, ReplayRunner};
use crate::skills::{parse_skill_markdown, Side, SkillError, SkillSet, SkillStore};

/// Which skill file (if any) the Reasoner runs under.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SkillCondition {
    None,
    Selected,
    FixedIteration(u32),
    ExternalFile(PathBuf),
}

impl SkillCondition {
    /// Short token naming the condition in tags and reports.
    pub fn label(&self) -> String {
        match self {
            SkillCondition::None => "none".to_string(),
            SkillCondition::Selected => "selected".to_string(),
            SkillCondition::FixedIteration(k) => format!("iter{k}"),
            SkillCondition::ExternalFile(_) => "file".to_string(),
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error("cannot resolve skill condition for {context_id}: {message}")]
    Condition { context_id: String, message: String },
    #[error("no judged tasks across the evaluation")]
    ZeroJudged,
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One held-out task's result; `verdict` is `None` when judging failed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub task_id: String,
    pub answer: Answer,
    pub verdict: Option<Verdict>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextEval {
    pub context_id: String,
    pub category: Category,
    pub outcomes: Vec<TaskOutcome>,
}

impl ContextEval {
    pub fn judged(&self) -> u64 {
        self.outcomes.iter().filter(|o| o.verdict.is_some()).count() as u64
    }

    pub fn solved(&self) -> u64 {
        self.outcomes
            .iter()
            .filter(|o| o.verdict.as_ref().is_some_and(|v| v.solved))
            .count() as u64
    }

    pub fn unjudged(&self) -> u64 {
        self.outcomes.len() as u64 - self.judged()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CategoryLine {
    pub category: Category,
    pub judged: u64,
    pub solved: u64,
    pub unjudged: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContextLine {
    pub context_id: String,
    pub category: Category,
    pub judged: u64,
    pub solved: u64,
    pub unjudged: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub condition: String,
    pub categories: Vec<CategoryLine>,
    pub contexts: Vec<ContextLine>,
    pub overall_judged: u64,
    pub overall_solved: u64,
    pub overall_unjudged: u64,
}

/// Solving rate in percent, rounded half-up to one decimal. Rounding
/// happens here, at display time only.
pub fn display_rate(solved: u64, judged: u64) -> f64 {
    if judged == 0 {
        return 0.0;
    }
    let pct = solved as f64 / judged as f64 * 100.0;
    (pct * 10.0).round() / 10.0
}

/// Builds the skill set a condition denotes for one context.
pub fn resolve_condition(
    condition: &SkillCondition,
    store: &SkillStore,
    workspace: &Path,
    context_id: &str,
) -> Result<SkillSet, EvalError> {
    let bad = |message: String| EvalError::Condition {
        context_id: context_id.to_string(),
        message,
    };
    match condition {
        SkillCondition::None => Ok(SkillSet::empty(Side::Reasoner)),
        SkillCondition::FixedIteration(k) => {
            Ok(store.load_version(context_id, Side::Reasoner, *k)?)
        }
        SkillCondition::Selected => {
            let path = ReplayRunner::report_path(workspace, context_id);
            let raw = std::fs::read_to_string(&path)
                .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
            let report: ReplayReport = serde_json::from_str(&raw)
                .map_err(|e| bad(format!("malformed replay report: {e}")))?;
            Ok(store.load_version(context_id, Side::Reasoner, report.selected_iteration)?)
        }
        SkillCondition::ExternalFile(path) => {
            let raw = std::fs::read_to_string(path)
                .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
            let parsed = parse_skill_markdown(&raw).map_err(|e| bad(e.to_string()))?;
            let iteration = parsed
                .entries
                .iter()
                .map(|e| e.round_introduced)
                .max()
                .unwrap_or(0);
            Ok(SkillSet {
                side: Side::Reasoner,
                iteration,
                entries: parsed.entries,
            })
        }
    }
}

pub struct EvalHarness<'a> {
    runner: &'a AgentRunner<'a>,
}

impl<'a> EvalHarness<'a> {
    pub fn new(runner: &'a AgentRunner<'a>) -> Self {
        EvalHarness { runner }
    }

    /// Runs one context's held-out tasks as a single sequential
    /// conversation: the context text opens the first user turn, later
    /// turns carry only the task text, and each answer is conditioned on
    /// the model's own prior answers. Each answer is judged independently
    /// against its task's rubrics.
    pub fn evaluate_context(
        &self,
        context: &ContextBundle,
        skills: &SkillSet,
        condition_label: &str,
    ) -> Result<ContextEval, EvalError> {
        let ctx_id = &context.context_id;
        let mut prior_turns: Vec<(String, String)> = Vec::new();
        let mut outcomes = Vec::with_capacity(context.heldout_tasks.len());
        for (idx, task) in context.heldout_tasks.iter().enumerate() {
            let user_content = if idx == 0 {
                format!("{}\n\n{}", context.context_text, task.text)
            } else {
                task.text.clone()
            };
            let answer = self.runner.reasoner_answer_in_conversation(
                context,
                skills,
                task,
                &prior_turns,
                &user_content,
                &format!("reasoner/{ctx_id}/eval/{condition_label}/{}", task.task_id),
            )?;

            let mut notes = Vec::new();
            let verdict = match self.runner.judge_evaluate(
                task,
                &answer,
                &format!("judge/{ctx_id}/eval/{condition_label}/{}", task.task_id),
            ) {
                Ok(outcome) => {
                    notes.extend(outcome.warnings);
                    Some(outcome.verdict)
                }
                Err(AgentError::Provider(err)) => return Err(AgentError::Provider(err).into()),
                Err(err) => {
                    notes.push(format!("task unjudged, excluded from denominator: {err}"));
                    None
                }
            };
            prior_turns.push((user_content, answer.text.clone()));
            outcomes.push(TaskOutcome {
                task_id: task.task_id.clone(),
                answer,
                verdict,
                notes,
            });
        }
        Ok(ContextEval {
            context_id: ctx_id.clone(),
            category: context.category,
            outcomes,
        })
    }
}

/// Rolls per-context results up into category and overall lines.
pub fn aggregate_report(evals: &[ContextEval], condition: &str) -> Result<EvalReport, EvalError> {
    let mut by_category: BTreeMap<Category, CategoryLine> = BTreeMap::new();
    let mut contexts = Vec::with_capacity(evals.len());
    for eval in evals {
        let line = by_category.entry(eval.category).or_insert(CategoryLine {
            category: eval.category,
            judged: 0,
            solved: 0,
            unjudged: 0,
        });
        line.judged += eval.judged();
        line.solved += eval.solved();
        line.unjudged += eval.unjudged();
        contexts.push(ContextLine {
            context_id: eval.context_id.clone(),
            category: eval.category,
            judged: eval.judged(),
            solved: eval.solved(),
            unjudged: eval.unjudged(),
        });
    }
    let overall_judged: u64 = by_category.values().map(|l| l.judged).sum();
    let overall_solved: u64 = by_category.values().map(|l| l.solved).sum();
    let overall_unjudged: u64 = by_category.values().map(|l| l.unjudged).sum();
    if overall_judged == 0 {
        return Err(EvalError::ZeroJudged);
    }
    Ok(EvalReport {
        condition: condition.to_string(),
        categories: by_category.into_values().collect(),
        contexts,
        overall_judged,
        overall_solved,
        overall_unjudged,
    })
}

pub fn render_markdown(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("# Evaluation Report ({})\n\n", report.condition));
    out.push_str("| Category | Judged | Solved | Rate |\n");
    out.push_str("|---|---|---|---|\n");
    for line in &report.categories {
        out.push_str(&format!(
            "| {} | {} | {} | {:.1}% |\n",
            line.category.label(),
            line.judged,
            line.solved,
            display_rate(line.solved, line.judged)
        ));
    }
    out.push_str(&format!(
        "| overall | {} | {} | {:.1}% |\n",
        report.overall_judged,
        report.overall_solved,
        display_rate(report.overall_solved, report.overall_judged)
    ));
    out.push_str("\n## Per context\n\n");
    out.push_str("| Context | Category | Judged | Solved | Unjudged | Rate |\n");
    out.push_str("|---|---|---|---|---|---|\n");
    for line in &report.contexts {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.1}% |\n",
            line.context_id,
            line.category.label(),
            line.judged,
            line.solved,
            line.unjudged,
            display_rate(line.solved, line.judged)
        ));
    }
    out
}

/// Writes `report.json` and `report.md` under `out_dir`.
pub fn write_report(report: &EvalReport, out_dir: &Path) -> Result<(), EvalError> {
    std::fs::create_dir_all(out_dir).map_err(|source| EvalError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let json_path = out_dir.join("report.json");
    let body = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(&json_path, body).map_err(|source| EvalError::Io {
        path: json_path,
        source,
    })?;
    let md_path = out_dir.join("report.md");
    std::fs::write(&md_path, render_markdown(report)).map_err(|source| EvalError::Io {
        path: md_path,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval_with(category: Category, id: &str, verdicts: &[Option<bool>]) -> ContextEval {
        let outcomes = verdicts
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let task_id = format!("{id}-t{i}");
                TaskOutcome {
                    task_id: task_id.clone(),
                    answer: Answer {
                        task_id: task_id.clone(),
                        text: "ans".into(),
                        skill_version: 0,
                        model_id: "m".into(),
                    },
                    verdict: v.map(|solved| {
                        Verdict::from_flags(task_id.clone(), vec![solved], "").unwrap()
                    }),
                    notes: vec![],
                }
            })
            .collect();
        ContextEval {
            context_id: id.into(),
            category,
            outcomes,
        }
    }

    #[test]
    fn rate_two_of_ten() {
        assert_eq!(display_rate(2, 10), 20.0);
    }

    #[test]
    fn overall_sums_categories() {
        let evals = vec![
            eval_with(
                Category::RuleSystemApplication,
                "a",
                &[Some(true), Some(true), Some(false), Some(false), Some(false),
                  Some(false), Some(false), Some(false), Some(false), Some(false)],
            ),
            eval_with(
                Category::DomainKnowledgeReasoning,
                "b",
                &[Some(true), Some(true), Some(true), Some(false), Some(false),
                  Some(false), Some(false), Some(false), Some(false), Some(false)],
            ),
        ];
        let report = aggregate_report(&evals, "none").unwrap();
        assert_eq!(report.overall_judged, 20);
        assert_eq!(report.overall_solved, 5);
        assert_eq!(display_rate(report.overall_solved, report.overall_judged), 25.0);
        let solved_by_cat: u64 = report.categories.iter().map(|l| l.solved).sum();
        assert_eq!(solved_by_cat, report.overall_solved);
    }

    #[test]
    fn unjudged_excluded_from_denominator_but_counted() {
        let evals = vec![eval_with(
            Category::Other,
            "c",
            &[Some(true), None, Some(false)],
        )];
        let report = aggregate_report(&evals, "none").unwrap();
        assert_eq!(report.overall_judged, 2);
        assert_eq!(report.overall_unjudged, 1);
        assert_eq!(report.contexts[0].judged + report.contexts[0].unjudged, 3);
    }

    #[test]
    fn zero_judged_is_an_error() {
        let evals = vec![eval_with(Category::Other, "d", &[None, None])];
        assert!(matches!(
            aggregate_report(&evals, "none"),
            Err(EvalError::ZeroJudged)
        ));
    }

    #[test]
    fn category_sized_denominators() {
        // Category sizes matching the benchmark's published task counts.
        let sizes = [663u64, 566, 471, 199];
        let cats = [
            Category::DomainKnowledgeReasoning,
            Category::RuleSystemApplication,
            Category::ProceduralTaskExecution,
            Category::EmpiricalDiscoverySimulation,
        ];
        let evals: Vec<ContextEval> = sizes
            .iter()
            .zip(cats)
            .map(|(&n, cat)| {
                eval_with(cat, cat.label(), &vec![Some(false); n as usize])
            })
            .collect();
        let report = aggregate_report(&evals, "none").unwrap();
        assert_eq!(report.overall_judged, 1899);
    }

    #[test]
    fn half_up_rounding_at_display() {
        // 1/8 = 12.5%: stays 12.5 at one decimal. 1/16 = 6.25% rounds
        // half-up to 6.3 where round-half-even would give 6.2.
        assert_eq!(display_rate(1, 8), 12.5);
        assert_eq!(display_rate(1, 16), 6.3);
    }

    #[test]
    fn condition_labels() {
        assert_eq!(SkillCondition::None.label(), "none");
        assert_eq!(SkillCondition::FixedIteration(3).label(), "iter3");
        assert_eq!(SkillCondition::Selected.label(), "selected");
    }

    #[test]
    fn external_file_condition_parses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("skills.md");
        std::fs::write(&path, "---\nname: outside-skill\ndescription: d\n---\nBody.\n").unwrap();
        let store = SkillStore::new(dir.path());
        let set = resolve_condition(
            &SkillCondition::ExternalFile(path),
            &store,
            dir.path(),
            "ctx",
        )
        .unwrap();
        assert_eq!(set.entries.len(), 1);
        assert_eq!(set.entries[0].name, "outside-skill");
    }

    #[test]
    fn none_condition_is_empty_version_zero() {
        let dir = tempfile::tempdir().unwrap();
        let store = SkillStore::new(dir.path());
        let set = resolve_condition(&SkillCondition::None, &store, dir.path(), "ctx").unwrap();
        assert!(set.is_empty());
        assert_eq!(set.iteration, 0);
    }

    #[test]
    fn markdown_report_shape() {
        let evals = vec![eval_with(Category::Other, "x", &[Some(true), Some(false)])];
        let report = aggregate_report(&evals, "selected").unwrap();
        let md = render_markdown(&report);
        assert!(md.contains("| overall | 2 | 1 | 50.0% |"));
        assert!(md.contains("| x | other | 2 | 1 | 0 | 50.0% |"));
    }
}
