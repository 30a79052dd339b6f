//! Shared scripted fixture: a 2-context corpus, the full provider
//! transcript for a 3-iteration, batch-size-2 run (self-play, replay,
//! evaluation, quality, and baseline), and a matching run config.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use serde_json::{json, Value};

pub struct FixturePaths {
    pub corpus: PathBuf,
    pub config: PathBuf,
    pub transcript: PathBuf,
    pub workspace: PathBuf,
}

pub fn corpus_value() -> Value {
    json!({
        "contexts": [
            {
                "context_id": "ctx-a",
                "category": "rule_system_application",
                "system_prompt": "You are the rental desk assistant.",
                "context_text": "User: Here are the rental rules.\nRule 4: deposits are forfeited after damage.\nRule 7: waivers need the manager.",
                "tasks": [
                    {"task_id": "a1", "text": "Summarize rule 4.", "turn_index": 0,
                     "rubrics": ["mentions deposit forfeiture"]},
                    {"task_id": "a2", "text": "Apply it to the earlier scenario.", "turn_index": 1,
                     "rubrics": ["references the summary", "gives the penalty"]},
                    {"task_id": "a3", "text": "Give the final total.", "turn_index": 2,
                     "rubrics": ["states the total"]}
                ]
            },
            {
                "context_id": "ctx-b",
                "category": "domain_knowledge_reasoning",
                "system_prompt": "",
                "context_text": "Notes: The capital is Quillar. Population 120000 (2010) and 135000 (2020).",
                "tasks": [
                    {"task_id": "b1", "text": "State the key fact.", "turn_index": 0,
                     "rubrics": ["names the capital"]}
                ]
            }
        ]
    })
}

fn judge_json(flags: &[bool]) -> String {
    let list: Vec<&str> = flags.iter().map(|&b| if b { "yes" } else { "no" }).collect();
    let overall = flags.iter().all(|&b| b) as u8;
    json!({
        "Grading Rationale": "scripted grading",
        "List of Requirement Satisfaction Status": list,
        "Overall Score": overall
    })
    .to_string()
}

fn challenger_json(tasks: &[(&str, &[&str])]) -> String {
    let tasks: Vec<Value> = tasks
        .iter()
        .map(|(text, rubrics)| json!({"task": text, "rubrics": rubrics}))
        .collect();
    json!({ "tasks": tasks }).to_string()
}

fn proposal_json(action: &str, target: Option<&str>, name: &str, desc: &str) -> String {
    json!({
        "action": action,
        "target_skill": target,
        "analysis": "scripted analysis",
        "skill_name": name,
        "skill_description": desc,
        "proposed_skill": "scripted outline",
        "justification": "scripted justification"
    })
    .to_string()
}

fn generator_json(name: &str, desc: &str, body: &str) -> String {
    json!({
        "skill_content": format!("---\nskill_name: {name}\nskill_description: {desc}\n---\n{body}\n"),
        "reasoning": "scripted reasoning"
    })
    .to_string()
}

fn quality_json() -> String {
    let dim = |s: u64| json!({"score": s, "reason": "scripted"});
    json!({
        "scores": {
            "faithfulness": dim(4),
            "reusability": dim(3),
            "effectiveness": dim(4),
            "clarity": dim(5),
            "conciseness": dim(3)
        },
        "summary": "scripted summary"
    })
    .to_string()
}

pub fn transcript_value() -> Value {
    let mut entries: Vec<(String, String)> = Vec::new();
    let mut add = |key: &str, content: String| entries.push((key.to_string(), content));

    // --- ctx-a self-play ---
    add(
        "challenger/ctx-a/iter1",
        challenger_json(&[
            (
                "Apply the deposit rule to a late return.",
                &["mentions the deposit amount", "cites rule 4"],
            ),
            ("State the late fee for one day.", &["states the fee is 5 dollars"]),
        ]),
    );
    add("reasoner/ctx-a/iter1/i1-t0", "Part of the deposit is kept.".into());
    add("judge/ctx-a/iter1/i1-t0", judge_json(&[true, false]));
    add("reasoner/ctx-a/iter1/i1-t1", "The late fee is 5 dollars.".into());
    add("judge/ctx-a/iter1/i1-t1", judge_json(&[true]));
    add(
        "proposer/reasoner/ctx-a/iter1",
        proposal_json("create", None, "deposit-handling", "Use when deposit rules apply."),
    );
    add(
        "generator/reasoner/ctx-a/iter1",
        generator_json(
            "deposit-handling",
            "Use when deposit rules apply.",
            "RSKILL-A1 check rule 4 before quoting amounts.",
        ),
    );
    add(
        "proposer/challenger/ctx-a/iter1",
        proposal_json("create", None, "probe-fee-edge-cases", "Use to harden fee questions."),
    );
    add(
        "generator/challenger/ctx-a/iter1",
        generator_json(
            "probe-fee-edge-cases",
            "Use to harden fee questions.",
            "CSKILL-A1 ask about combined fee and deposit scenarios.",
        ),
    );

    add(
        "challenger/ctx-a/iter2",
        challenger_json(&[
            (
                "Compute the combined penalty for a three day late return with damage.",
                &["mentions the damage surcharge", "mentions the daily fee", "totals the amounts"],
            ),
            ("Who signs the waiver?", &["names the manager", "cites rule 7"]),
        ]),
    );
    add("reasoner/ctx-a/iter2/i2-t0", "The total is unclear.".into());
    add("judge/ctx-a/iter2/i2-t0", judge_json(&[false, false, false]));
    add("reasoner/ctx-a/iter2/i2-t1", "The manager signs it.".into());
    add("judge/ctx-a/iter2/i2-t1", judge_json(&[true, false]));
    add(
        "proposer/reasoner/ctx-a/iter2",
        proposal_json(
            "edit",
            Some("deposit-handling"),
            "deposit-handling",
            "Use when deposit or penalty rules apply.",
        ),
    );
    add(
        "generator/reasoner/ctx-a/iter2",
        generator_json(
            "deposit-handling",
            "Use when deposit or penalty rules apply.",
            "RSKILL-A2 sum daily fees then surcharges, citing each rule.",
        ),
    );

    add(
        "challenger/ctx-a/iter3",
        challenger_json(&[
            ("Quote rule 4 verbatim.", &["quotes rule 4", "uses quotation marks"]),
            (
                "List the three penalty types.",
                &["lists late fee", "lists damage surcharge", "lists deposit forfeiture"],
            ),
        ]),
    );
    add("reasoner/ctx-a/iter3/i3-t0", "\"Deposits are forfeited after damage.\"".into());
    add("judge/ctx-a/iter3/i3-t0", judge_json(&[true, true]));
    add("reasoner/ctx-a/iter3/i3-t1", "Late fee, damage surcharge, deposit forfeiture.".into());
    add("judge/ctx-a/iter3/i3-t1", judge_json(&[true, true, true]));
    add(
        "proposer/challenger/ctx-a/iter3",
        proposal_json("create", None, "target-unstated-combinations", "Use to pair rules never combined."),
    );
    add(
        "generator/challenger/ctx-a/iter3",
        generator_json(
            "target-unstated-combinations",
            "Use to pair rules never combined.",
            "CSKILL-A3 combine rules the conversation never paired.",
        ),
    );

    // --- ctx-a replay: probes hard=[i1-t0, i2-t0], easy=[i1-t1, i3-t0] ---
    let replay_flags_a: [(&str, Vec<(&str, Vec<bool>)>); 3] = [
        ("cand1", vec![
            ("i1-t0", vec![false, false]),
            ("i2-t0", vec![false, false, false]),
            ("i1-t1", vec![true]),
            ("i3-t0", vec![true, true]),
        ]),
        ("cand2", vec![
            ("i1-t0", vec![true, true]),
            ("i2-t0", vec![false, true, false]),
            ("i1-t1", vec![true]),
            ("i3-t0", vec![false, true]),
        ]),
        ("cand3", vec![
            ("i1-t0", vec![true, true]),
            ("i2-t0", vec![true, true, true]),
            ("i1-t1", vec![false]),
            ("i3-t0", vec![false, false]),
        ]),
    ];
    for (cand, probes) in &replay_flags_a {
        for (task_id, flags) in probes {
            add(
                &format!("reasoner/ctx-a/replay/{cand}/{task_id}"),
                format!("replay answer {cand} {task_id}"),
            );
            add(&format!("judge/ctx-a/replay/{cand}/{task_id}"), judge_json(flags));
        }
    }

    // --- ctx-b self-play ---
    add(
        "challenger/ctx-b/iter1",
        challenger_json(&[
            ("Name the capital discussed.", &["names the capital"]),
            ("Give the population figure.", &["states the figure", "cites the notes"]),
        ]),
    );
    add("reasoner/ctx-b/iter1/i1-t0", "The capital is Quillar.".into());
    add("judge/ctx-b/iter1/i1-t0", judge_json(&[true]));
    add("reasoner/ctx-b/iter1/i1-t1", "135000 as of 2020, per the notes.".into());
    add("judge/ctx-b/iter1/i1-t1", judge_json(&[true, true]));
    add(
        "proposer/challenger/ctx-b/iter1",
        proposal_json("create", None, "raise-difficulty", "Use to demand synthesis."),
    );
    add(
        "generator/challenger/ctx-b/iter1",
        generator_json("raise-difficulty", "Use to demand synthesis.", "CSKILL-B1 require multi-fact synthesis."),
    );

    // Second raw task has zero rubrics and is dropped on ingest.
    add(
        "challenger/ctx-b/iter2",
        challenger_json(&[
            (
                "Synthesize the capital and population into one claim.",
                &["combines both facts", "stays consistent with notes"],
            ),
            ("Malformed task", &[]),
        ]),
    );
    add("reasoner/ctx-b/iter2/i2-t0", "Quillar has people.".into());
    add("judge/ctx-b/iter2/i2-t0", judge_json(&[false, true]));
    add(
        "proposer/reasoner/ctx-b/iter2",
        proposal_json("create", None, "notes-synthesis", "Use when combining facts."),
    );
    add(
        "generator/reasoner/ctx-b/iter2",
        generator_json("notes-synthesis", "Use when combining facts.", "RSKILL-B2 re-read the notes before combining facts."),
    );

    add(
        "challenger/ctx-b/iter3",
        challenger_json(&[
            ("Contrast the two census years.", &["mentions both years", "computes the difference"]),
            ("Name the capital again.", &["names the capital"]),
        ]),
    );
    add("reasoner/ctx-b/iter3/i3-t0", "The population grew.".into());
    add("judge/ctx-b/iter3/i3-t0", judge_json(&[false, false]));
    add("reasoner/ctx-b/iter3/i3-t1", "Quillar.".into());
    add("judge/ctx-b/iter3/i3-t1", judge_json(&[true]));
    add(
        "proposer/reasoner/ctx-b/iter3",
        proposal_json(
            "edit",
            Some("notes-synthesis"),
            "notes-synthesis",
            "Use when combining or contrasting facts.",
        ),
    );
    add(
        "generator/reasoner/ctx-b/iter3",
        generator_json(
            "notes-synthesis",
            "Use when combining or contrasting facts.",
            "RSKILL-B3 quote both years and subtract explicitly.",
        ),
    );
    add(
        "proposer/challenger/ctx-b/iter3",
        proposal_json("create", None, "vary-probe-styles", "Use to diversify question forms."),
    );
    add(
        "generator/challenger/ctx-b/iter3",
        generator_json("vary-probe-styles", "Use to diversify question forms.", "CSKILL-B3 alternate recall and computation probes."),
    );

    // --- ctx-b replay: probes hard=[i2-t0, i3-t0], easy=[i1-t0, i3-t1] ---
    let replay_flags_b: [(&str, Vec<(&str, Vec<bool>)>); 3] = [
        ("cand1", vec![
            ("i2-t0", vec![false, false]),
            ("i3-t0", vec![false, false]),
            ("i1-t0", vec![true]),
            ("i3-t1", vec![true]),
        ]),
        ("cand2", vec![
            ("i2-t0", vec![true, true]),
            ("i3-t0", vec![true, false]),
            ("i1-t0", vec![true]),
            ("i3-t1", vec![true]),
        ]),
        ("cand3", vec![
            ("i2-t0", vec![true, true]),
            ("i3-t0", vec![true, true]),
            ("i1-t0", vec![true]),
            ("i3-t1", vec![false]),
        ]),
    ];
    for (cand, probes) in &replay_flags_b {
        for (task_id, flags) in probes {
            add(
                &format!("reasoner/ctx-b/replay/{cand}/{task_id}"),
                format!("replay answer {cand} {task_id}"),
            );
            add(&format!("judge/ctx-b/replay/{cand}/{task_id}"), judge_json(flags));
        }
    }

    // --- Held-out evaluation under three conditions ---
    let eval_outcomes: [(&str, Vec<(&str, &str, Vec<bool>)>); 3] = [
        ("none", vec![
            ("ctx-a", "a1", vec![false]),
            ("ctx-a", "a2", vec![false, false]),
            ("ctx-a", "a3", vec![true]),
            ("ctx-b", "b1", vec![false]),
        ]),
        ("selected", vec![
            ("ctx-a", "a1", vec![true]),
            ("ctx-a", "a2", vec![true, true]),
            ("ctx-a", "a3", vec![true]),
            ("ctx-b", "b1", vec![false]),
        ]),
        ("iter3", vec![
            ("ctx-a", "a1", vec![true]),
            ("ctx-a", "a2", vec![false, false]),
            ("ctx-a", "a3", vec![true]),
            ("ctx-b", "b1", vec![false]),
        ]),
    ];
    for (cond, tasks) in &eval_outcomes {
        for (ctx, task_id, flags) in tasks {
            add(
                &format!("reasoner/{ctx}/eval/{cond}/{task_id}"),
                format!("eval answer {cond} {task_id}"),
            );
            add(&format!("judge/{ctx}/eval/{cond}/{task_id}"), judge_json(flags));
        }
    }

    // --- Quality scoring and the single-pass baseline ---
    add("quality/ctx-a", quality_json());
    add("quality/ctx-b", quality_json());
    for ctx in ["ctx-a", "ctx-b"] {
        add(
            &format!("prompting/{ctx}"),
            format!("---\nskill_name: quick_start_notes\nskill_description: One-pass summary for {ctx}.\n---\nFollow the context rules closely.\n"),
        );
    }

    let entries: Vec<Value> = entries
        .into_iter()
        .map(|(key, content)| json!({"key": key, "content": content}))
        .collect();
    json!({ "entries": entries })
}

pub fn config_text(iterations: u32) -> String {
    format!(
        "iterations = {iterations}\nbatch_size = 2\nworkspace = \"workspace\"\nprovider = \"scripted\"\ntranscript = \"transcript.json\"\ndefault_model = \"scripted-model\"\n"
    )
}

/// Writes corpus.json, transcript.json, and run.toml under `root` and
/// returns the paths (workspace resolves to `root/workspace`).
pub fn build_fixture(root: &Path) -> FixturePaths {
    std::fs::create_dir_all(root).unwrap();
    let corpus = root.join("corpus.json");
    let transcript = root.join("transcript.json");
    let config = root.join("run.toml");
    std::fs::write(&corpus, serde_json::to_vec_pretty(&corpus_value()).unwrap()).unwrap();
    std::fs::write(&transcript, serde_json::to_vec_pretty(&transcript_value()).unwrap()).unwrap();
    std::fs::write(&config, config_text(3)).unwrap();
    FixturePaths {
        corpus,
        config,
        transcript,
        workspace: root.join("workspace"),
    }
}

use ctx2skill::agents::{AgentRunner, TemplateSet};
use ctx2skill::config::RunConfig;
use ctx2skill::corpus::ingest;
use ctx2skill::engine::SelfPlayEngine;
use ctx2skill::eval::{aggregate_report, resolve_condition, write_report, EvalHarness, SkillCondition};
use ctx2skill::provider::Gateway;
use ctx2skill::replay::ReplayRunner;
use ctx2skill::skills::SkillStore;

pub fn parse_condition(spec: &str) -> SkillCondition {
    match spec {
        "none" => SkillCondition::None,
        "selected" => SkillCondition::Selected,
        other => {
            let k = other.strip_prefix("iter").unwrap().parse().unwrap();
            SkillCondition::FixedIteration(k)
        }
    }
}

/// Drives generate, select, and evaluate over the fixture through the
/// library. `stop_after` limits self-play to that iteration (leaving a
/// resumable checkpoint) and skips the later stages. Returns the gateway
/// so tests can audit the request log.
pub fn run_pipeline(
    paths: &FixturePaths,
    stop_after: Option<u32>,
    conditions: &[&str],
) -> Gateway {
    let config = RunConfig::load(&paths.config).unwrap();
    let corpus = ingest(&paths.corpus).unwrap();
    let gateway = config.build_gateway().unwrap();
    let templates = TemplateSet::builtin();
    let runner = AgentRunner::new(&gateway, templates, config.bindings());
    let mut engine = SelfPlayEngine::new(
        &runner,
        &config.workspace,
        config.iterations,
        config.batch_size,
        config.deterministic(),
        config.abort_on_generation_error,
    );
    engine.stop_after = stop_after;
    for ctx in &corpus.contexts {
        engine.run_context(ctx).unwrap();
    }
    if stop_after.is_some() {
        return gateway;
    }

    let store = SkillStore::new(&config.workspace);
    let replay = ReplayRunner::new(&runner, &store, &config.workspace);
    for ctx in &corpus.contexts {
        let probes = SelfPlayEngine::load_probes(&config.workspace, &ctx.context_id).unwrap();
        replay.run(ctx, &probes, config.iterations).unwrap();
    }

    let harness = EvalHarness::new(&runner);
    for cond in conditions {
        let condition = parse_condition(cond);
        let label = condition.label();
        let mut evals = Vec::new();
        for ctx in &corpus.contexts {
            let skills =
                resolve_condition(&condition, &store, &config.workspace, &ctx.context_id).unwrap();
            evals.push(harness.evaluate_context(ctx, &skills, &label).unwrap());
        }
        let report = aggregate_report(&evals, &label).unwrap();
        write_report(&report, &config.workspace.join("eval").join(&label)).unwrap();
    }
    gateway
}
