//! Acceptance suite: one test per release criterion, each printing a
//! single pass/fail line (visible with `cargo test --test acceptance --
//! --nocapture`).

mod common;

use std::panic::{catch_unwind, resume_unwind, UnwindSafe};
use std::time::Instant;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ctx2skill::analytics;
use ctx2skill::engine::{curate_probes, read_trace, TraceWriter};
use ctx2skill::model::{score_task, Rubric, Task, TaskOrigin, Verdict};
use ctx2skill::replay::{laplace_rate, select_skill_set, CandidateCounts};
use ctx2skill::skills::{
    parse_skill_markdown, serialize_skill_set, Side, SkillEntry, SkillSet,
};

fn criterion(number: u32, name: &str, body: impl FnOnce() + UnwindSafe) {
    let outcome = catch_unwind(body);
    let status = if outcome.is_ok() { "PASS" } else { "FAIL" };
    println!("acceptance criterion {number} ({name}): {status}");
    if let Err(payload) = outcome {
        resume_unwind(payload);
    }
}

#[test]
fn criterion_01_scoring_oracle() {
    criterion(1, "scoring oracle", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        for _ in 0..10_000 {
            let len = rng.gen_range(1..=114);
            let flags: Vec<bool> = (0..len).map(|_| rng.gen_bool(0.6)).collect();
            let oracle = flags.iter().fold(1u8, |acc, &b| acc & (b as u8));
            assert_eq!(score_task(&flags).unwrap(), oracle);
        }
        assert!(started.elapsed().as_secs_f64() < 1.0, "scoring oracle too slow");
    });
}

#[test]
fn criterion_02_replay_selection_oracle() {
    criterion(2, "replay selection oracle", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(202);
        for _ in 0..1_000 {
            let n = rng.gen_range(1..=8u32);
            let hard_total = rng.gen_range(0..=8u64);
            let easy_total = rng.gen_range(0..=8u64);
            let counts: Vec<CandidateCounts> = (1..=n)
                .map(|iteration| CandidateCounts {
                    iteration,
                    hard_solved: rng.gen_range(0..=hard_total),
                    easy_solved: rng.gen_range(0..=easy_total),
                })
                .collect();

            // Independent oracle: recompute every smoothed product, take
            // the maximum, then the first candidate attaining it.
            let products: Vec<Ratio<u64>> = counts
                .iter()
                .map(|c| {
                    Ratio::new(c.hard_solved + 1, hard_total + 1)
                        * Ratio::new(c.easy_solved + 1, easy_total + 1)
                })
                .collect();
            let best = products.iter().max().unwrap();
            let expected = counts[products.iter().position(|p| p == best).unwrap()].iteration;

            let (selected, scores) = select_skill_set(&counts, hard_total, easy_total).unwrap();
            assert_eq!(selected, expected);
            for (score, product) in scores.iter().zip(&products) {
                assert_eq!(score.product.num, *product.numer());
                assert_eq!(score.product.den, *product.denom());
            }
        }
        assert!(started.elapsed().as_secs_f64() < 5.0, "selection oracle too slow");
    });
}

#[test]
fn criterion_03_laplace_edge_cases() {
    criterion(3, "laplace edge cases", || {
        assert_eq!(laplace_rate(0, 0), Ratio::new(1, 1));
        let counts: Vec<CandidateCounts> = (1..=5)
            .map(|iteration| CandidateCounts {
                iteration,
                hard_solved: 0,
                easy_solved: 0,
            })
            .collect();
        let (selected, scores) = select_skill_set(&counts, 0, 0).unwrap();
        for score in &scores {
            assert_eq!(score.hard_rate.num, score.hard_rate.den);
            assert_eq!(score.easy_rate.num, score.easy_rate.den);
            assert_eq!(score.product.num, 1);
            assert_eq!(score.product.den, 1);
        }
        assert_eq!(selected, 1, "empty probe sets must degenerate to the earliest iteration");
    });
}

#[test]
fn criterion_04_end_to_end_determinism() {
    criterion(4, "end-to-end determinism", || {
        let started = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let first = common::build_fixture(&dir.path().join("first"));
        common::run_pipeline(&first, None, &["selected"]);
        let second = common::build_fixture(&dir.path().join("second"));
        common::run_pipeline(&second, None, &["selected"]);
        let resumed = common::build_fixture(&dir.path().join("resumed"));
        common::run_pipeline(&resumed, Some(2), &[]);
        common::run_pipeline(&resumed, None, &["selected"]);

        let compare = |other: &common::FixturePaths, label: &str| {
            for ctx in ["ctx-a", "ctx-b"] {
                let mut files = vec![
                    format!("{ctx}/trace.jsonl"),
                    format!("{ctx}/replay.json"),
                    format!("{ctx}/selected.md"),
                ];
                for side in ["reasoner", "challenger"] {
                    for iter in 0..=3 {
                        files.push(format!("{ctx}/{side}/iter_{iter}.md"));
                    }
                }
                for file in files {
                    let a = std::fs::read(first.workspace.join(&file)).unwrap();
                    let b = std::fs::read(other.workspace.join(&file)).unwrap();
                    assert_eq!(a, b, "{label}: {file} differs");
                }
            }
            let a = std::fs::read(first.workspace.join("eval/selected/report.md")).unwrap();
            let b = std::fs::read(other.workspace.join("eval/selected/report.md")).unwrap();
            assert_eq!(a, b, "{label}: eval report differs");
        };
        compare(&second, "fresh rerun");
        compare(&resumed, "crash-resume");
        assert!(started.elapsed().as_secs_f64() < 10.0, "end-to-end fixture too slow");
    });
}

#[test]
fn criterion_05_collapse_mitigation_scenario() {
    criterion(5, "collapse mitigation scenario", || {
        let hard_solved = [0u64, 1, 2];
        let easy_solved = [3u64, 2, 0];
        let counts: Vec<CandidateCounts> = (0..3)
            .map(|i| CandidateCounts {
                iteration: i as u32 + 1,
                hard_solved: hard_solved[i],
                easy_solved: easy_solved[i],
            })
            .collect();
        let (selected, scores) = select_skill_set(&counts, 2, 3).unwrap();

        // Brute-force oracle over the same counts.
        let products: Vec<Ratio<u64>> = (0..3)
            .map(|i| Ratio::new(hard_solved[i] + 1, 3) * Ratio::new(easy_solved[i] + 1, 4))
            .collect();
        assert_eq!(products, [Ratio::new(1, 3), Ratio::new(1, 2), Ratio::new(1, 4)]);
        let best = products.iter().max().unwrap();
        let expected = products.iter().position(|p| p == best).unwrap() as u32 + 1;
        assert_eq!(selected, expected);
        assert_eq!(selected, 2, "the interior iteration must win");
        assert_eq!((scores[1].product.num, scores[1].product.den), (1, 2));
    });
}

#[test]
fn criterion_06_skill_md_round_trip() {
    criterion(6, "SKILL.md round trip", || {
        let mut rng = ChaCha8Rng::seed_from_u64(606);
        let syllables = ["plan", "check", "cite", "sum", "probe", "rule", "note", "fact"];
        for case in 0..100 {
            let entry_count = rng.gen_range(1..=5);
            let mut round = 1u32;
            let mut entries = Vec::new();
            for idx in 0..entry_count {
                let name = format!(
                    "{}-{}-{idx}",
                    syllables[rng.gen_range(0..syllables.len())],
                    syllables[rng.gen_range(0..syllables.len())]
                );
                let body_lines = rng.gen_range(1..=3);
                let body: String = (0..body_lines)
                    .map(|l| format!("Step {l}: {}.\n", syllables[rng.gen_range(0..syllables.len())]))
                    .collect();
                entries.push(
                    SkillEntry::new(name, format!("Use in case {case}."), body, round).unwrap(),
                );
                round += rng.gen_range(0..=2);
            }
            let set = SkillSet {
                side: Side::Reasoner,
                iteration: round,
                entries,
            };
            let text = serialize_skill_set(&set);
            let parsed = parse_skill_markdown(&text).unwrap();
            assert_eq!(parsed.entries, set.entries, "structural round trip, case {case}");
            let reserialized = serialize_skill_set(&SkillSet {
                side: set.side,
                iteration: set.iteration,
                entries: parsed.entries,
            });
            assert_eq!(reserialized, text, "byte round trip, case {case}");

            // The generator dialect must parse to the same structures.
            let mut dialect = String::new();
            for (idx, entry) in set.entries.iter().enumerate() {
                if idx > 0 {
                    dialect.push_str(&format!("\n## Round {} Update\n\n", entry.round_introduced));
                }
                dialect.push_str(&format!(
                    "---\nskill_name: {}\nskill_description: {}\n---\n{}",
                    entry.name, entry.description, entry.body
                ));
            }
            let parsed_dialect = parse_skill_markdown(&dialect).unwrap();
            assert_eq!(parsed_dialect.entries, set.entries, "dialect parse, case {case}");
        }
    });
}

#[test]
fn criterion_07_probe_curation_exhaustive() {
    criterion(7, "probe curation exhaustive oracle", || {
        // Every 4-task batch with rubric counts in 1..=5 and every
        // per-task passed count: 20^4 = 160000 states.
        let per_task: Vec<(u64, u64)> = (1..=5u64)
            .flat_map(|c| (0..=c).map(move |k| (c, k)))
            .collect();
        assert_eq!(per_task.len(), 20);

        let make_task = |idx: usize, rubric_count: u64| {
            Task::new(
                format!("t{idx}"),
                "task text",
                (0..rubric_count)
                    .map(|r| Rubric::new(format!("r{r}")).unwrap())
                    .collect(),
                TaskOrigin::Challenger(1),
                idx as u32,
            )
            .unwrap()
        };

        let mut states = 0u64;
        for &(c0, k0) in &per_task {
            for &(c1, k1) in &per_task {
                for &(c2, k2) in &per_task {
                    for &(c3, k3) in &per_task {
                        states += 1;
                        let counts = [(c0, k0), (c1, k1), (c2, k2), (c3, k3)];
                        let tasks: Vec<Task> = counts
                            .iter()
                            .enumerate()
                            .map(|(i, &(c, _))| make_task(i, c))
                            .collect();
                        let verdicts: Vec<Verdict> = counts
                            .iter()
                            .enumerate()
                            .map(|(i, &(c, k))| {
                                let flags: Vec<bool> = (0..c).map(|r| r < k).collect();
                                Verdict::from_flags(format!("t{i}"), flags, "").unwrap()
                            })
                            .collect();

                        // Hand-specified oracle: lowest pass rate (exact),
                        // then fewest passed, then lowest index; easiest
                        // success has fewest rubrics, then lowest index.
                        let mut expected_hard: Option<usize> = None;
                        for (i, &(c, k)) in counts.iter().enumerate() {
                            if k == c {
                                continue;
                            }
                            expected_hard = Some(match expected_hard {
                                None => i,
                                Some(j) => {
                                    let (cj, kj) = counts[j];
                                    let rate_i = Ratio::new(k, c);
                                    let rate_j = Ratio::new(kj, cj);
                                    if rate_i < rate_j || (rate_i == rate_j && k < kj) {
                                        i
                                    } else {
                                        j
                                    }
                                }
                            });
                        }
                        let mut expected_easy: Option<usize> = None;
                        for (i, &(c, k)) in counts.iter().enumerate() {
                            if k != c {
                                continue;
                            }
                            expected_easy = Some(match expected_easy {
                                None => i,
                                Some(j) => if c < counts[j].0 { i } else { j },
                            });
                        }

                        let (hard, easy) = curate_probes(&tasks, &verdicts);
                        assert_eq!(hard, expected_hard, "hard pick for {counts:?}");
                        assert_eq!(easy, expected_easy, "easy pick for {counts:?}");
                    }
                }
            }
        }
        assert_eq!(states, 160_000);
    });
}

#[test]
fn criterion_08_dynamics_reproduction() {
    criterion(8, "dynamics reproduction", || {
        // Golden synthetic trace: 2 contexts, one iteration, M = 4.
        let dir = tempfile::tempdir().unwrap();
        let build = |name: &str, solved: usize, task_words: &[&str]| {
            let path = dir.path().join(name);
            let mut w = TraceWriter::new(&path, true, 0);
            let mut solved_ids = Vec::new();
            let mut failed_ids = Vec::new();
            for (i, words) in task_words.iter().enumerate() {
                let id = format!("i1-t{i}");
                w.record(
                    1,
                    "task_generated",
                    serde_json::json!({"task": {"task_id": id, "text": words, "rubrics": ["a", "b"]}}),
                );
                w.record(1, "answered", serde_json::json!({"task_id": id, "text": "four words an answer"}));
                let is_solved = i < solved;
                w.record(
                    1,
                    "judged",
                    serde_json::json!({"task_id": id, "per_rubric": [is_solved, true], "solved": is_solved}),
                );
                if is_solved {
                    solved_ids.push(id);
                } else {
                    failed_ids.push(id);
                }
            }
            w.record(1, "routed", serde_json::json!({"solved": solved_ids, "failed": failed_ids, "unjudged": []}));
            w.record(1, "skill_applied", serde_json::json!({"side": "reasoner", "version": 1, "word_count": 12}));
            w.flush().unwrap();
            read_trace(&path).unwrap()
        };
        let traces = vec![
            build("a.jsonl", 1, &["one", "two words", "three words here", "now four words long"]),
            build("b.jsonl", 2, &["five", "words six", "now seven words", "eight is the word"]),
        ];
        let report = analytics::compute_dynamics(&traces, &[]).unwrap();
        let d = &report.iterations[0];
        assert_eq!(d.contexts, 2);
        assert_eq!(d.avg_solved, 1.5);
        assert_eq!(d.avg_failed, 2.5);
        assert_eq!(d.solved_rate_pct, 37.5);
        // 8 judged tasks x 2 rubrics; passed per context = solved + 4
        // (the second flag is always true), so 11 of 16 overall.
        assert_eq!(d.rubric_pass_rate_pct, 11.0 / 16.0 * 100.0);
        let words = d.task_words.unwrap();
        assert_eq!(words.min, 1);
        assert_eq!(words.max, 4);
        assert_eq!(words.mean, 2.5);
        assert_eq!(words.median, 2.5);
        assert_eq!(d.answer_words.unwrap().mean, 4.0);
        assert_eq!(d.reasoner_skill_words.unwrap().mean, 12.0);

        // Internal consistency on the published iteration-1 pair.
        let avg_solved = 0.91f64;
        let m = 5.0f64;
        let rate = avg_solved / m * 100.0;
        assert!((rate - 18.2).abs() <= 0.05, "avg solved {avg_solved} over M={m} must give 18.2%");
    });
}

#[test]
fn criterion_09_prompt_hermeticity() {
    criterion(9, "prompt hermeticity", || {
        let dir = tempfile::tempdir().unwrap();
        let paths = common::build_fixture(dir.path());
        let gateway = common::run_pipeline(&paths, None, &["none", "selected"]);
        let log = gateway.request_log();
        assert!(!log.is_empty());
        let mut reasoner_bound = 0;
        let mut challenger_bound = 0;
        for request in &log {
            let text: String = request
                .messages
                .iter()
                .map(|m| m.content.as_str())
                .collect::<Vec<_>>()
                .join("\n");
            let tag = request.tag.as_str();
            if tag.starts_with("reasoner/")
                || tag.starts_with("proposer/reasoner/")
                || tag.starts_with("generator/reasoner/")
            {
                reasoner_bound += 1;
                assert!(
                    !text.contains("CSKILL"),
                    "challenger skill text leaked into {tag}"
                );
            }
            if tag.starts_with("challenger/")
                || tag.starts_with("proposer/challenger/")
                || tag.starts_with("generator/challenger/")
            {
                challenger_bound += 1;
                assert!(
                    !text.contains("RSKILL"),
                    "reasoner skill text leaked into {tag}"
                );
            }
            if tag.starts_with("judge/") {
                assert!(
                    !text.contains("CSKILL") && !text.contains("RSKILL"),
                    "skill text leaked into judge prompt {tag}"
                );
            }
        }
        assert!(reasoner_bound > 0 && challenger_bound > 0);
    });
}

#[test]
fn criterion_10_baseline_equivalence() {
    criterion(10, "baseline equivalence", || {
        let dir = tempfile::tempdir().unwrap();
        let paths = common::build_fixture(dir.path());
        let gateway = common::run_pipeline(&paths, None, &["none"]);
        let corpus = ctx2skill::corpus::ingest(&paths.corpus).unwrap();
        let log = gateway.request_log();
        let mut checked = 0;
        for ctx in &corpus.contexts {
            let prefix = format!("reasoner/{}/eval/none/", ctx.context_id);
            for request in log.iter().filter(|r| r.tag.starts_with(&prefix)) {
                checked += 1;
                if ctx.system_prompt.is_empty() {
                    assert!(
                        request.messages.iter().all(|m| !matches!(
                            m.role,
                            ctx2skill::provider::MessageRole::System
                        )),
                        "unexpected system message under {}",
                        request.tag
                    );
                } else {
                    let system = request
                        .messages
                        .iter()
                        .find(|m| matches!(m.role, ctx2skill::provider::MessageRole::System))
                        .expect("system message present");
                    assert_eq!(
                        system.content, ctx.system_prompt,
                        "system prompt drifted under {}",
                        request.tag
                    );
                }
            }
        }
        assert_eq!(checked, 4, "every held-out task is covered by the scan");
    });
}
