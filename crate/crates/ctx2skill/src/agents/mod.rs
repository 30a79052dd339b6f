//! Prompt construction, invocation, and output parsing for the agent
//! roles: Challenger, Reasoner, Judge, the two Proposer/Generator pairs,
//! the Skill Quality Evaluator, and the single-pass baseline skill writer.

mod templates;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use templates::{TemplateError, TemplateId, TemplateSet};

use crate::model::{Answer, ContextBundle, Decoding, Role, Rubric, Task, TaskOrigin, Verdict};
use crate::provider::{extract_json_payload, ChatRequest, Gateway, Message, ProviderError};
use crate::skills::{
    is_kebab_case, parse_skill_markdown, serialize_skill_set, ProposalAction, Side, SkillProposal,
    SkillSet,
};

/// Model ids and decoding settings per role.
#[derive(Debug, Clone)]
pub struct RoleBindings {
    pub models: BTreeMap<Role, String>,
    pub decoding: BTreeMap<Role, Decoding>,
}

impl RoleBindings {
    /// Binds every role to one model id with default decoding.
    pub fn uniform(model_id: &str) -> Self {
        let models = [
            Role::Challenger,
            Role::Reasoner,
            Role::Judge,
            Role::Proposer,
            Role::Generator,
            Role::QualityEvaluator,
        ]
        .iter()
        .map(|r| (*r, model_id.to_string()))
        .collect();
        RoleBindings {
            models,
            decoding: BTreeMap::new(),
        }
    }

    pub fn model(&self, role: Role) -> Result<&str, AgentError> {
        self.models
            .get(&role)
            .map(String::as_str)
            .ok_or(AgentError::UnboundRole(role))
    }

    pub fn decoding(&self, role: Role) -> Decoding {
        self.decoding.get(&role).cloned().unwrap_or_else(|| {
            let mut d = Decoding::default();
            if role == Role::Judge {
                // Strict grading runs greedy.
                d.temperature = 0.0;
            }
            d
        })
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("no model bound for role {0:?}")]
    UnboundRole(Role),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("provider failure: {0}")]
    Provider(#[from] ProviderError),
    #[error("challenger payload invalid after retry: {0}")]
    Generation(String),
    #[error("judge output invalid after retry: {0}")]
    Judging(String),
    #[error("proposal payload invalid after retry: {0}")]
    Proposal(String),
    #[error("generated skill content invalid after retry: {0}")]
    SkillGeneration(String),
    #[error("quality evaluation payload invalid after retry: {0}")]
    QualityEval(String),
    #[error("invalid routed cases for {side:?} proposer: {message}")]
    InvalidCases { side: Side, message: String },
}

/// A routed (task, answer, verdict) triple shown to a Proposer.
#[derive(Debug, Clone)]
pub struct TraceCase {
    pub task: Task,
    pub answer: Answer,
    pub verdict: Verdict,
}

#[derive(Debug)]
pub struct ChallengerBatch {
    pub tasks: Vec<Task>,
    /// Trace notes for tasks dropped on ingest (zero rubrics etc.).
    pub dropped: Vec<String>,
}

#[derive(Debug)]
pub struct JudgedOutcome {
    pub verdict: Verdict,
    pub warnings: Vec<String>,
}

/// Parsed Judge reply before verdict normalization.
#[derive(Debug, Clone)]
pub struct JudgeDecision {
    pub rationale: String,
    pub satisfaction: Vec<bool>,
    pub overall: u8,
}

#[derive(Debug)]
pub struct GeneratedSkill {
    pub description: String,
    pub body: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimensionScore {
    pub score: u8,
    pub reason: String,
}

/// Five-dimension 1-5 quality scores for a skill set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QualityScores {
    pub faithfulness: DimensionScore,
    pub reusability: DimensionScore,
    pub effectiveness: DimensionScore,
    pub clarity: DimensionScore,
    pub conciseness: DimensionScore,
    pub summary: String,
}

impl QualityScores {
    /// Linear map of each 1-5 score onto a 0-100 scale.
    pub fn normalized(&self) -> BTreeMap<&'static str, f64> {
        let pct = |d: &DimensionScore| d.score as f64 / 5.0 * 100.0;
        BTreeMap::from([
            ("faithfulness", pct(&self.faithfulness)),
            ("reusability", pct(&self.reusability)),
            ("effectiveness", pct(&self.effectiveness)),
            ("clarity", pct(&self.clarity)),
            ("conciseness", pct(&self.conciseness)),
        ])
    }
}

pub struct AgentRunner<'a> {
    gateway: &'a Gateway,
    templates: TemplateSet,
    bindings: RoleBindings,
}

fn skills_block(skills: &SkillSet) -> String {
    if skills.is_empty() {
        "(none yet)".to_string()
    } else {
        serialize_skill_set(skills)
    }
}

fn numbered_rubrics(rubrics: &[Rubric]) -> String {
    rubrics
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{}. {}", i + 1, r.text))
        .collect::<Vec<_>>()
        .join("\n")
}

impl<'a> AgentRunner<'a> {
    pub fn new(gateway: &'a Gateway, templates: TemplateSet, bindings: RoleBindings) -> Self {
        AgentRunner {
            gateway,
            templates,
            bindings,
        }
    }

    pub fn bindings(&self) -> &RoleBindings {
        &self.bindings
    }

    fn request(&self, role: Role, messages: Vec<Message>, tag: &str) -> Result<ChatRequest, AgentError> {
        let decoding = self.bindings.decoding(role);
        Ok(ChatRequest {
            model_id: self.bindings.model(role)?.to_string(),
            messages,
            temperature: decoding.temperature,
            max_output: decoding.max_output,
            tag: tag.to_string(),
        })
    }

    /// Completes a request and extracts its JSON payload; one re-prompt
    /// with the same messages on a malformed reply, then the error
    /// surfaces to the caller.
    fn complete_json(&self, request: &ChatRequest) -> Result<Value, AgentError> {
        let first = self.gateway.complete(request)?;
        match extract_json_payload(&first.content) {
            Ok(v) => Ok(v),
            Err(first_err) => {
                log::warn!("malformed JSON for {}, re-prompting once: {first_err}", request.tag);
                let second = self.gateway.complete(request)?;
                extract_json_payload(&second.content).map_err(AgentError::from)
            }
        }
    }

    /// Asks the Challenger for up to `m` tasks over the context.
    pub fn challenger_generate(
        &self,
        context: &ContextBundle,
        skills: &SkillSet,
        m: u32,
        iteration: u32,
        tag: &str,
    ) -> Result<ChallengerBatch, AgentError> {
        let prompt = self.templates.render(
            TemplateId::Challenger,
            &BTreeMap::from([
                ("m", m.to_string()),
                ("skills", skills_block(skills)),
                ("context", context.full_text()),
            ]),
        )?;
        let request = self.request(Role::Challenger, vec![Message::user(prompt)], tag)?;
        let payload = self.complete_json(&request)?;
        let raw_tasks = payload
            .get("tasks")
            .and_then(Value::as_array)
            .ok_or_else(|| AgentError::Generation("payload has no `tasks` array".into()))?;

        let mut tasks = Vec::new();
        let mut dropped = Vec::new();
        for (idx, raw) in raw_tasks.iter().enumerate().take(m as usize) {
            let text = raw.get("task").and_then(Value::as_str).unwrap_or_default();
            let rubric_texts: Vec<&str> = raw
                .get("rubrics")
                .and_then(Value::as_array)
                .map(|a| a.iter().filter_map(Value::as_str).collect())
                .unwrap_or_default();
            let rubrics: Vec<Rubric> = rubric_texts
                .iter()
                .filter_map(|t| Rubric::new(*t).ok())
                .collect();
            if text.is_empty() || rubrics.is_empty() {
                dropped.push(format!(
                    "dropped challenger task {idx} at iteration {iteration}: empty task text or zero rubrics"
                ));
                continue;
            }
            let task_id = format!("i{iteration}-t{idx}");
            tasks.push(
                Task::new(
                    task_id,
                    text,
                    rubrics,
                    TaskOrigin::Challenger(iteration),
                    idx as u32,
                )
                .expect("non-empty rubrics checked above"),
            );
        }
        Ok(ChallengerBatch { tasks, dropped })
    }

    /// System message for a Reasoner call: the skill file prepended to the
    /// bundled system prompt with exactly one blank line between them. An
    /// empty skill set leaves the bundled prompt byte-identical.
    pub fn reasoner_system_prompt(skills: &SkillSet, context: &ContextBundle) -> String {
        if skills.is_empty() {
            return context.system_prompt.clone();
        }
        let skill_md = serialize_skill_set(skills);
        let skill_md = skill_md.trim_end_matches('\n');
        if context.system_prompt.is_empty() {
            skill_md.to_string()
        } else {
            format!("{skill_md}\n\n{}", context.system_prompt)
        }
    }

    /// Answers one task in a fresh single-turn conversation.
    pub fn reasoner_answer(
        &self,
        context: &ContextBundle,
        skills: &SkillSet,
        task: &Task,
        tag: &str,
    ) -> Result<Answer, AgentError> {
        let user = format!("{}\n\n{}", context.context_text, task.text);
        self.reasoner_answer_in_conversation(context, skills, task, &[], &user, tag)
    }

    /// Answers one task given prior (task, answer) turns of the same
    /// conversation; `user_content` is this turn's user message.
    pub fn reasoner_answer_in_conversation(
        &self,
        context: &ContextBundle,
        skills: &SkillSet,
        task: &Task,
        prior_turns: &[(String, String)],
        user_content: &str,
        tag: &str,
    ) -> Result<Answer, AgentError> {
        let mut messages = Vec::with_capacity(prior_turns.len() * 2 + 2);
        let system = Self::reasoner_system_prompt(skills, context);
        if !system.is_empty() {
            messages.push(Message::system(system));
        }
        for (user, assistant) in prior_turns {
            messages.push(Message::user(user));
            messages.push(Message::assistant(assistant));
        }
        messages.push(Message::user(user_content.to_string()));
        let request = self.request(Role::Reasoner, messages, tag)?;
        let response = self.gateway.complete(&request)?;
        if response.content.is_empty() {
            log::warn!("empty reasoner output for {tag}");
        }
        Ok(Answer {
            task_id: task.task_id.clone(),
            text: response.content,
            skill_version: skills.iteration,
            model_id: request.model_id,
        })
    }

    fn parse_judge_decision(payload: &Value) -> Result<JudgeDecision, String> {
        let rationale = payload
            .get("Grading Rationale")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let list = payload
            .get("List of Requirement Satisfaction Status")
            .and_then(Value::as_array)
            .ok_or("missing satisfaction status list")?;
        let satisfaction = list
            .iter()
            .map(|v| match v.as_str().map(str::to_ascii_lowercase).as_deref() {
                Some("yes") => Ok(true),
                Some("no") => Ok(false),
                _ => Err(format!("satisfaction entry is not yes/no: {v}")),
            })
            .collect::<Result<Vec<bool>, String>>()?;
        let overall = match payload.get("Overall Score") {
            Some(Value::Number(n)) => n.as_u64().filter(|&x| x <= 1).ok_or("overall not 0/1")? as u8,
            Some(Value::String(s)) => match s.trim() {
                "0" => 0,
                "1" => 1,
                _ => return Err(format!("overall score not 0/1: {s:?}")),
            },
            other => return Err(format!("missing or invalid Overall Score: {other:?}")),
        };
        Ok(JudgeDecision {
            rationale,
            satisfaction,
            overall,
        })
    }

    /// Grades one answer against its task's rubrics.
    ///
    /// Solving is all-or-nothing: solved requires overall = 1 and every
    /// satisfaction entry yes. A reply whose satisfaction list length
    /// disagrees with the rubric count is re-prompted once, then rejected.
    pub fn judge_evaluate(
        &self,
        task: &Task,
        answer: &Answer,
        tag: &str,
    ) -> Result<JudgedOutcome, AgentError> {
        let prompt = self.templates.render(
            TemplateId::Judge,
            &BTreeMap::from([
                ("rubrics", numbered_rubrics(&task.rubrics)),
                ("response", answer.text.clone()),
            ]),
        )?;
        // The Judge runs as a single user message with no system prompt.
        let request = self.request(Role::Judge, vec![Message::user(prompt)], tag)?;

        let mut last_problem = String::new();
        for attempt in 0..2 {
            let payload = if attempt == 0 {
                self.complete_json(&request)?
            } else {
                let retry = self.gateway.complete(&request)?;
                match extract_json_payload(&retry.content) {
                    Ok(v) => v,
                    Err(e) => return Err(AgentError::Judging(e.to_string())),
                }
            };
            match Self::parse_judge_decision(&payload) {
                Ok(decision) if decision.satisfaction.len() == task.rubrics.len() => {
                    return Ok(Self::normalize_decision(task, decision));
                }
                Ok(decision) => {
                    last_problem = format!(
                        "satisfaction list has {} entries for {} rubrics",
                        decision.satisfaction.len(),
                        task.rubrics.len()
                    );
                }
                Err(message) => last_problem = message,
            }
        }
        Err(AgentError::Judging(last_problem))
    }

    fn normalize_decision(task: &Task, decision: JudgeDecision) -> JudgedOutcome {
        let all_yes = decision.satisfaction.iter().all(|&b| b);
        let strict_solved = decision.overall == 1 && all_yes;
        let mut warnings = Vec::new();
        let mut rationale = decision.rationale;
        if (decision.overall == 1) != all_yes {
            let note = format!(
                "judge consistency warning for {}: overall={} but satisfaction all_yes={}; normalized to solved={}",
                task.task_id, decision.overall, all_yes, strict_solved
            );
            warnings.push(note.clone());
            rationale.push_str("\n[consistency warning: overall score disagreed with per-rubric list; stricter reading applied]");
        }
        // Keep per_rubric consistent with the normalized solved flag: when
        // the judge said overall=0 over an all-yes list, no rubric is
        // credited (the list is untrustworthy).
        let per_rubric = if strict_solved || !all_yes {
            decision.satisfaction
        } else {
            vec![false; task.rubrics.len()]
        };
        let verdict = Verdict::from_flags(task.task_id.clone(), per_rubric, rationale)
            .expect("rubrics are non-empty");
        JudgedOutcome { verdict, warnings }
    }

    fn render_cases(cases: &[TraceCase]) -> String {
        let mut out = String::new();
        for case in cases {
            out.push_str(&format!("### Task {}\n\n", case.task.task_id));
            out.push_str(&format!("Task: {}\n\n", case.task.text));
            out.push_str("Rubrics:\n");
            for (i, rubric) in case.task.rubrics.iter().enumerate() {
                let status = if case.verdict.per_rubric[i] { "pass" } else { "fail" };
                out.push_str(&format!("{}. {} [{status}]\n", i + 1, rubric.text));
            }
            out.push_str(&format!("\nReasoner response:\n{}\n\n", case.answer.text));
            out.push_str(&format!("Judge rationale:\n{}\n\n", case.verdict.rationale));
            out.push_str(&format!(
                "Judge score: {}\n\n",
                if case.verdict.solved { 1 } else { 0 }
            ));
        }
        out
    }

    fn render_overview(all_cases: &[TraceCase]) -> String {
        all_cases
            .iter()
            .map(|c| {
                format!(
                    "- {}: {} ({}/{} rubrics passed)",
                    c.task.task_id,
                    if c.verdict.solved { "solved" } else { "failed" },
                    c.verdict.per_rubric.iter().filter(|&&b| b).count(),
                    c.verdict.per_rubric.len()
                )
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Runs one side's Proposer over its routed cases.
    ///
    /// `all_cases` is the whole judged batch (for the overview section);
    /// `routed` holds only this side's cases, in ascending task order.
    /// Returns the validated proposal plus any downgrade warnings.
    #[allow(clippy::too_many_arguments)]
    pub fn propose_skill(
        &self,
        side: Side,
        context: &ContextBundle,
        all_cases: &[TraceCase],
        routed: &[TraceCase],
        current: &SkillSet,
        iteration: u32,
        batch_size: u32,
        tag: &str,
    ) -> Result<(SkillProposal, Vec<String>), AgentError> {
        if routed.is_empty() {
            return Err(AgentError::InvalidCases {
                side,
                message: "no routed cases".into(),
            });
        }
        let expect_solved = side == Side::Challenger;
        if routed.iter().any(|c| c.verdict.solved != expect_solved) {
            return Err(AgentError::InvalidCases {
                side,
                message: "routed case solved flag does not match side".into(),
            });
        }

        let (template, count_key) = match side {
            Side::Reasoner => (TemplateId::ReasonerProposer, "failed_num"),
            Side::Challenger => (TemplateId::ChallengerProposer, "passed_num"),
        };
        let prompt = self.templates.render(
            template,
            &BTreeMap::from([
                ("i", iteration.to_string()),
                ("context", context.full_text()),
                ("overview", Self::render_overview(all_cases)),
                ("m", batch_size.to_string()),
                (count_key, routed.len().to_string()),
                ("traces", Self::render_cases(routed)),
                ("skills", skills_block(current)),
            ]),
        )?;
        let request = self.request(Role::Proposer, vec![Message::user(prompt)], tag)?;
        let payload = self.complete_json(&request)?;
        self.validate_proposal(payload, current)
            .map_err(AgentError::Proposal)
    }

    fn validate_proposal(
        &self,
        payload: Value,
        current: &SkillSet,
    ) -> Result<(SkillProposal, Vec<String>), String> {
        let get_str = |key: &str| {
            payload
                .get(key)
                .and_then(Value::as_str)
                .map(str::to_string)
        };
        let mut warnings = Vec::new();
        let mut action = match get_str("action").as_deref() {
            Some("create") => ProposalAction::Create,
            Some("edit") => ProposalAction::Edit,
            other => return Err(format!("invalid proposal action: {other:?}")),
        };
        let mut target_skill = payload
            .get("target_skill")
            .and_then(Value::as_str)
            .map(str::to_string);
        let mut skill_name = get_str("skill_name").ok_or("missing skill_name")?;
        skill_name = skill_name
            .trim()
            .to_ascii_lowercase()
            .replace([' ', '_'], "-");
        if !is_kebab_case(&skill_name) {
            return Err(format!("skill_name is not kebab-case: {skill_name:?}"));
        }

        if action == ProposalAction::Edit {
            match target_skill.as_deref() {
                Some(target) if current.find(target).is_some() => {}
                other => {
                    warnings.push(format!(
                        "edit of unknown skill {other:?} downgraded to create({skill_name:?})"
                    ));
                    action = ProposalAction::Create;
                    target_skill = None;
                }
            }
        }
        if action == ProposalAction::Create && current.find(&skill_name).is_some() {
            // A create naming an existing skill is the symmetric slip;
            // treat it as an edit of that skill.
            warnings.push(format!(
                "create of existing skill {skill_name:?} treated as edit"
            ));
            action = ProposalAction::Edit;
            target_skill = Some(skill_name.clone());
        }

        Ok((
            SkillProposal {
                action,
                target_skill,
                analysis: get_str("analysis").unwrap_or_default(),
                skill_name,
                skill_description: get_str("skill_description").unwrap_or_default(),
                proposed_skill: get_str("proposed_skill").unwrap_or_default(),
                justification: get_str("justification").unwrap_or_default(),
            },
            warnings,
        ))
    }

    /// Runs one side's Generator, materializing the proposal into a
    /// single parsed skill entry.
    pub fn generate_skill(
        &self,
        side: Side,
        proposal: &SkillProposal,
        current: &SkillSet,
        tag: &str,
    ) -> Result<GeneratedSkill, AgentError> {
        let template = match side {
            Side::Reasoner => TemplateId::ReasonerGenerator,
            Side::Challenger => TemplateId::ChallengerGenerator,
        };
        let prompt = self.templates.render(
            template,
            &BTreeMap::from([
                (
                    "proposal",
                    serde_json::to_string_pretty(proposal).expect("proposal serializes"),
                ),
                ("skills", skills_block(current)),
            ]),
        )?;
        let request = self.request(Role::Generator, vec![Message::user(prompt)], tag)?;
        let payload = self.complete_json(&request)?;
        let content = payload
            .get("skill_content")
            .and_then(Value::as_str)
            .ok_or_else(|| AgentError::SkillGeneration("missing skill_content".into()))?;
        let parsed = parse_skill_markdown(content)
            .map_err(|e| AgentError::SkillGeneration(e.to_string()))?;
        if parsed.entries.len() != 1 {
            return Err(AgentError::SkillGeneration(format!(
                "skill_content holds {} entries, expected exactly 1",
                parsed.entries.len()
            )));
        }
        let entry = parsed.entries.into_iter().next().unwrap();
        let mut warnings = parsed.warnings;
        if entry.name != proposal.skill_name {
            warnings.push(format!(
                "generator named the skill {:?}; keeping proposal name {:?}",
                entry.name, proposal.skill_name
            ));
        }
        Ok(GeneratedSkill {
            description: entry.description,
            body: entry.body,
            warnings,
        })
    }

    /// Scores a non-empty skill set on the five quality dimensions.
    pub fn evaluate_skill_quality(
        &self,
        context: &ContextBundle,
        skills: &SkillSet,
        tag: &str,
    ) -> Result<QualityScores, AgentError> {
        let prompt = self.templates.render(
            TemplateId::QualityEvaluator,
            &BTreeMap::from([
                ("context", context.full_text()),
                ("skill", serialize_skill_set(skills)),
            ]),
        )?;
        let request = self.request(Role::QualityEvaluator, vec![Message::user(prompt)], tag)?;
        let payload = self.complete_json(&request)?;
        let scores = payload
            .get("scores")
            .ok_or_else(|| AgentError::QualityEval("missing scores".into()))?;
        let dim = |key: &str| -> Result<DimensionScore, AgentError> {
            let d = scores
                .get(key)
                .ok_or_else(|| AgentError::QualityEval(format!("missing dimension {key}")))?;
            let score = d
                .get("score")
                .and_then(Value::as_u64)
                .filter(|&s| (1..=5).contains(&s))
                .ok_or_else(|| AgentError::QualityEval(format!("{key} score out of range")))?;
            Ok(DimensionScore {
                score: score as u8,
                reason: d
                    .get("reason")
                    .and_then(Value::as_str)
                    .unwrap_or_default()
                    .to_string(),
            })
        };
        Ok(QualityScores {
            faithfulness: dim("faithfulness")?,
            reusability: dim("reusability")?,
            effectiveness: dim("effectiveness")?,
            clarity: dim("clarity")?,
            conciseness: dim("conciseness")?,
            summary: payload
                .get("summary")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string(),
        })
    }

    /// Single-pass baseline: one completion that writes a whole SKILL.md.
    /// Returns the validated file text.
    pub fn prompting_baseline(
        &self,
        context: &ContextBundle,
        tag: &str,
    ) -> Result<String, AgentError> {
        let prompt = self.templates.render(
            TemplateId::PromptingBaseline,
            &BTreeMap::from([("context", context.full_text())]),
        )?;
        let request = self.request(Role::Generator, vec![Message::user(prompt)], tag)?;
        let response = self.gateway.complete(&request)?;
        let text = response.content;
        parse_skill_markdown(&text).map_err(|e| AgentError::SkillGeneration(e.to_string()))?;
        Ok(text)
    }
}
