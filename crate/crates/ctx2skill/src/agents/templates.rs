//! Prompt templates with `{placeholder}` substitution.
//!
//! Templates ship as embedded text assets and can be overridden per run
//! from a directory, so any drift in the prompt wording stays auditable.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TemplateId {
    Challenger,
    Judge,
    ReasonerProposer,
    ChallengerProposer,
    ReasonerGenerator,
    ChallengerGenerator,
    QualityEvaluator,
    PromptingBaseline,
}

impl TemplateId {
    pub const ALL: [TemplateId; 8] = [
        TemplateId::Challenger,
        TemplateId::Judge,
        TemplateId::ReasonerProposer,
        TemplateId::ChallengerProposer,
        TemplateId::ReasonerGenerator,
        TemplateId::ChallengerGenerator,
        TemplateId::QualityEvaluator,
        TemplateId::PromptingBaseline,
    ];

    pub fn file_name(&self) -> &'static str {
        match self {
            TemplateId::Challenger => "challenger.txt",
            TemplateId::Judge => "judge.txt",
            TemplateId::ReasonerProposer => "reasoner_proposer.txt",
            TemplateId::ChallengerProposer => "challenger_proposer.txt",
            TemplateId::ReasonerGenerator => "reasoner_generator.txt",
            TemplateId::ChallengerGenerator => "challenger_generator.txt",
            TemplateId::QualityEvaluator => "quality_evaluator.txt",
            TemplateId::PromptingBaseline => "prompting_baseline.txt",
        }
    }

    fn builtin(&self) -> &'static str {
        match self {
            TemplateId::Challenger => include_str!("../../assets/prompts/challenger.txt"),
            TemplateId::Judge => include_str!("../../assets/prompts/judge.txt"),
            TemplateId::ReasonerProposer => {
                include_str!("../../assets/prompts/reasoner_proposer.txt")
            }
            TemplateId::ChallengerProposer => {
                include_str!("../../assets/prompts/challenger_proposer.txt")
            }
            TemplateId::ReasonerGenerator => {
                include_str!("../../assets/prompts/reasoner_generator.txt")
            }
            TemplateId::ChallengerGenerator => {
                include_str!("../../assets/prompts/challenger_generator.txt")
            }
            TemplateId::QualityEvaluator => {
                include_str!("../../assets/prompts/quality_evaluator.txt")
            }
            TemplateId::PromptingBaseline => {
                include_str!("../../assets/prompts/prompting_baseline.txt")
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("template {template:?} references placeholder {{{placeholder}}} with no value bound")]
    Unbound {
        template: &'static str,
        placeholder: String,
    },
    #[error("cannot read template override {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The full set of prompt templates in effect for a run.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    texts: BTreeMap<TemplateId, String>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let texts = TemplateId::ALL
            .iter()
            .map(|id| (*id, id.builtin().to_string()))
            .collect();
        TemplateSet { texts }
    }

    /// Builtin templates, with any file present in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for id in TemplateId::ALL {
            let path = dir.join(id.file_name());
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| TemplateError::Io {
                    path: path.display().to_string(),
                    source: e,
                })?;
                set.texts.insert(id, text);
            }
        }
        Ok(set)
    }

    /// Substitutes every `{placeholder}` in one pass. Values are inserted
    /// verbatim and never rescanned, so braces inside them are inert.
    pub fn render(
        &self,
        id: TemplateId,
        bindings: &BTreeMap<&str, String>,
    ) -> Result<String, TemplateError> {
        let template = &self.texts[&id];
        let re = Regex::new(r"\{([a-z_]+)\}").unwrap();
        let mut out = String::with_capacity(template.len());
        let mut last = 0usize;
        for caps in re.captures_iter(template) {
            let whole = caps.get(0).unwrap();
            let key = caps.get(1).unwrap().as_str();
            let value = bindings.get(key).ok_or_else(|| TemplateError::Unbound {
                template: id.file_name(),
                placeholder: key.to_string(),
            })?;
            out.push_str(&template[last..whole.start()]);
            out.push_str(value);
            last = whole.end();
        }
        out.push_str(&template[last..]);
        Ok(out)
    }
}
