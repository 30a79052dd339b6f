//! Corpus ingestion: the benchmark-style JSON file of contexts and
//! held-out tasks, validated into `ContextBundle`s with provenance.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{Category, ContextBundle, Rubric, Task, TaskOrigin};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corpus {path} is not valid JSON: {message}")]
    Json { path: PathBuf, message: String },
    #[error("invalid corpus at {pointer}: {message}")]
    Schema { pointer: String, message: String },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCorpus {
    contexts: Vec<RawContext>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawContext {
    context_id: String,
    category: String,
    #[serde(default)]
    system_prompt: String,
    context_text: String,
    tasks: Vec<RawTask>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    task_id: String,
    text: String,
    turn_index: u32,
    rubrics: Vec<String>,
}

/// A validated corpus plus where it came from.
#[derive(Debug)]
pub struct Corpus {
    pub contexts: Vec<ContextBundle>,
    pub source_path: PathBuf,
    /// Hex SHA-256 of the raw file bytes.
    pub checksum: String,
}

fn parse_category(label: &str) -> Option<Category> {
    Some(match label {
        "domain_knowledge_reasoning" => Category::DomainKnowledgeReasoning,
        "rule_system_application" => Category::RuleSystemApplication,
        "procedural_task_execution" => Category::ProceduralTaskExecution,
        "empirical_discovery_simulation" => Category::EmpiricalDiscoverySimulation,
        "other" => Category::Other,
        _ => return None,
    })
}

/// Loads and validates a corpus file. Schema violations report a JSON
/// pointer to the offending element.
pub fn ingest(path: &Path) -> Result<Corpus, CorpusError> {
    let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let checksum = hex::encode(Sha256::digest(&bytes));
    let raw: RawCorpus = serde_json::from_slice(&bytes).map_err(|e| CorpusError::Json {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;

    let schema = |pointer: String, message: String| CorpusError::Schema { pointer, message };
    let mut seen_contexts = BTreeSet::new();
    let mut contexts = Vec::with_capacity(raw.contexts.len());
    for (ci, rc) in raw.contexts.into_iter().enumerate() {
        let cptr = format!("/contexts/{ci}");
        if rc.context_id.trim().is_empty() {
            return Err(schema(format!("{cptr}/context_id"), "empty context_id".into()));
        }
        if !seen_contexts.insert(rc.context_id.clone()) {
            return Err(schema(
                format!("{cptr}/context_id"),
                format!("duplicate context_id {:?}", rc.context_id),
            ));
        }
        let category = parse_category(&rc.category).ok_or_else(|| {
            schema(
                format!("{cptr}/category"),
                format!("unknown category {:?}", rc.category),
            )
        })?;

        let mut seen_tasks = BTreeSet::new();
        let mut tasks = Vec::with_capacity(rc.tasks.len());
        for (ti, rt) in rc.tasks.into_iter().enumerate() {
            let tptr = format!("{cptr}/tasks/{ti}");
            if rt.task_id.trim().is_empty() {
                return Err(schema(format!("{tptr}/task_id"), "empty task_id".into()));
            }
            if !seen_tasks.insert(rt.task_id.clone()) {
                return Err(schema(
                    format!("{tptr}/task_id"),
                    format!("duplicate task_id {:?}", rt.task_id),
                ));
            }
            if rt.text.trim().is_empty() {
                return Err(schema(format!("{tptr}/text"), "empty task text".into()));
            }
            if rt.turn_index != ti as u32 {
                return Err(schema(
                    format!("{tptr}/turn_index"),
                    format!("turn_index {} breaks the contiguous 0.. order", rt.turn_index),
                ));
            }
            if rt.rubrics.is_empty() {
                return Err(schema(
                    format!("{tptr}/rubrics"),
                    "held-out task has zero rubrics".into(),
                ));
            }
            let mut rubrics = Vec::with_capacity(rt.rubrics.len());
            for (ri, text) in rt.rubrics.iter().enumerate() {
                rubrics.push(Rubric::new(text.clone()).map_err(|e| {
                    schema(format!("{tptr}/rubrics/{ri}"), e.to_string())
                })?);
            }
            tasks.push(
                Task::new(rt.task_id, rt.text, rubrics, TaskOrigin::Benchmark, rt.turn_index)
                    .map_err(|e| schema(tptr.clone(), e.to_string()))?,
            );
        }

        contexts.push(
            ContextBundle::new(rc.context_id, category, rc.system_prompt, rc.context_text, tasks)
                .map_err(|e| schema(cptr.clone(), e.to_string()))?,
        );
    }

    Ok(Corpus {
        contexts,
        source_path: path.to_path_buf(),
        checksum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn write_corpus(value: serde_json::Value) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&value).unwrap()).unwrap();
        (dir, path)
    }

    fn two_context_fixture() -> serde_json::Value {
        json!({
            "contexts": [
                {
                    "context_id": "ctx-a",
                    "category": "rule_system_application",
                    "system_prompt": "You are the rules engine.",
                    "context_text": "User: here are the rules...",
                    "tasks": [
                        {"task_id": "a1", "text": "Apply rule 1.", "turn_index": 0, "rubrics": ["mentions rule 1"]},
                        {"task_id": "a2", "text": "Now rule 2.", "turn_index": 1, "rubrics": ["mentions rule 2", "builds on a1"]}
                    ]
                },
                {
                    "context_id": "ctx-b",
                    "category": "domain_knowledge_reasoning",
                    "system_prompt": "",
                    "context_text": "Background notes.",
                    "tasks": [
                        {"task_id": "b1", "text": "Answer from the notes.", "turn_index": 0, "rubrics": ["cites the notes"]}
                    ]
                }
            ]
        })
    }

    #[test]
    fn two_context_fixture_loads() {
        let (_dir, path) = write_corpus(two_context_fixture());
        let corpus = ingest(&path).unwrap();
        assert_eq!(corpus.contexts.len(), 2);
        assert_eq!(corpus.contexts[0].heldout_tasks.len(), 2);
        assert_eq!(corpus.contexts[1].category, Category::DomainKnowledgeReasoning);
        assert_eq!(corpus.checksum.len(), 64);
    }

    #[test]
    fn duplicate_context_id_rejected() {
        let mut v = two_context_fixture();
        v["contexts"][1]["context_id"] = json!("ctx-a");
        let (_dir, path) = write_corpus(v);
        let err = ingest(&path).unwrap_err();
        assert!(err.to_string().contains("/contexts/1/context_id"));
    }

    #[test]
    fn duplicate_task_id_rejected() {
        let mut v = two_context_fixture();
        v["contexts"][0]["tasks"][1]["task_id"] = json!("a1");
        let (_dir, path) = write_corpus(v);
        let err = ingest(&path).unwrap_err();
        assert!(err.to_string().contains("/contexts/0/tasks/1/task_id"));
    }

    #[test]
    fn zero_rubric_task_rejected() {
        let mut v = two_context_fixture();
        v["contexts"][1]["tasks"][0]["rubrics"] = json!([]);
        let (_dir, path) = write_corpus(v);
        let err = ingest(&path).unwrap_err();
        assert!(err.to_string().contains("/contexts/1/tasks/0/rubrics"));
    }

    #[test]
    fn out_of_order_turn_index_rejected() {
        let mut v = two_context_fixture();
        v["contexts"][0]["tasks"][1]["turn_index"] = json!(5);
        let (_dir, path) = write_corpus(v);
        let err = ingest(&path).unwrap_err();
        assert!(err.to_string().contains("turn_index"));
    }

    #[test]
    fn unknown_category_rejected() {
        let mut v = two_context_fixture();
        v["contexts"][0]["category"] = json!("vibes");
        let (_dir, path) = write_corpus(v);
        assert!(ingest(&path).is_err());
    }

    #[test]
    fn checksum_matches_independent_hash() {
        let (_dir, path) = write_corpus(two_context_fixture());
        let corpus = ingest(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(corpus.checksum, hex::encode(Sha256::digest(&bytes)));
    }
}
