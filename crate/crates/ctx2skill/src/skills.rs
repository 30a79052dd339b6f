//! Skill set data model, SKILL.md serialization/parsing, and versioned
//! persistence under the run workspace.
//!
//! Serialized layout mirrors the deployed artifacts: each entry is a YAML
//! frontmatter block (`name`, `description`) followed by its Markdown body,
//! and entries after the first are introduced by a `## Round <k> Update`
//! header.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Which side of the self-play loop a skill set belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Reasoner,
    Challenger,
}

impl Side {
    pub fn label(&self) -> &'static str {
        match self {
            Side::Reasoner => "reasoner",
            Side::Challenger => "challenger",
        }
    }
}

/// One named skill.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillEntry {
    /// Lowercase kebab-case token.
    pub name: String,
    pub description: String,
    pub body: String,
    pub round_introduced: u32,
}

impl SkillEntry {
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        body: impl Into<String>,
        round_introduced: u32,
    ) -> Result<Self, SkillError> {
        let name = name.into();
        let description = description.into();
        let body = body.into();
        if !is_kebab_case(&name) {
            return Err(SkillError::BadName(name));
        }
        if description.trim().is_empty() || body.trim().is_empty() {
            return Err(SkillError::EmptyField(name));
        }
        if round_introduced == 0 {
            return Err(SkillError::BadRound(name));
        }
        Ok(SkillEntry {
            name,
            description,
            body,
            round_introduced,
        })
    }
}

pub fn is_kebab_case(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
        && !s.starts_with('-')
        && !s.ends_with('-')
}

/// Versioned ordered skill set for one side. Iteration 0 is the empty set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillSet {
    pub side: Side,
    pub iteration: u32,
    pub entries: Vec<SkillEntry>,
}

impl SkillSet {
    pub fn empty(side: Side) -> Self {
        SkillSet {
            side,
            iteration: 0,
            entries: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<&SkillEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    /// Same entries under a new iteration index (no-op iterations still
    /// get an addressable version).
    pub fn carried_forward(&self, iteration: u32) -> Self {
        SkillSet {
            side: self.side,
            iteration,
            entries: self.entries.clone(),
        }
    }
}

/// A Proposer diagnosis: create a new skill or edit an existing one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalAction {
    Create,
    Edit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkillProposal {
    pub action: ProposalAction,
    pub target_skill: Option<String>,
    pub analysis: String,
    pub skill_name: String,
    pub skill_description: String,
    pub proposed_skill: String,
    pub justification: String,
}

#[derive(Debug, Error)]
pub enum SkillError {
    #[error("skill name is not lowercase kebab-case: {0:?}")]
    BadName(String),
    #[error("skill {0:?} has an empty description or body")]
    EmptyField(String),
    #[error("skill {0:?} must be introduced at round >= 1")]
    BadRound(String),
    #[error("skill name already exists: {0:?}")]
    NameConflict(String),
    #[error("no skill named {0:?} in the current set")]
    UnknownTarget(String),
    #[error("edit proposal is missing target_skill")]
    MissingTarget,
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("skill version not found: {side} iteration {iteration}")]
    VersionNotFound { side: &'static str, iteration: u32 },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid skill index at {path}: {message}")]
    BadIndex { path: PathBuf, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> SkillError {
    SkillError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Renders a skill set as a single SKILL.md document. Empty sets render
/// as empty text.
pub fn serialize_skill_set(set: &SkillSet) -> String {
    let mut out = String::new();
    for (idx, entry) in set.entries.iter().enumerate() {
        if idx > 0 {
            out.push_str(&format!("\n## Round {} Update\n\n", entry.round_introduced));
        }
        out.push_str("---\n");
        out.push_str(&format!("name: {}\n", entry.name));
        out.push_str(&format!("description: {}\n", entry.description));
        out.push_str("---\n");
        out.push_str(&entry.body);
        if !entry.body.ends_with('\n') {
            out.push('\n');
        }
    }
    out
}

/// Warnings collected while parsing (unknown frontmatter keys etc.).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedSkills {
    pub entries: Vec<SkillEntry>,
    pub warnings: Vec<String>,
}

/// Parses the SKILL.md format back into entries. Accepts both frontmatter
/// dialects: `name`/`description` and `skill_name`/`skill_description`.
pub fn parse_skill_markdown(text: &str) -> Result<ParsedSkills, SkillError> {
    let mut entries = Vec::new();
    let mut warnings = Vec::new();
    if text.trim().is_empty() {
        return Ok(ParsedSkills { entries, warnings });
    }

    // Split on round headers; the first segment has no header and belongs
    // to round 1 unless the header says otherwise.
    let mut segments: Vec<(u32, &str, usize)> = Vec::new();
    let mut cursor = 0usize;
    let mut current_round = 1u32;
    let mut seg_start = 0usize;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim_end();
        if let Some(round) = parse_round_header(trimmed) {
            if text[seg_start..cursor].trim().len() > 0 {
                segments.push((current_round, &text[seg_start..cursor], seg_start));
            }
            current_round = round;
            seg_start = cursor + line.len();
        }
        cursor += line.len();
    }
    if text[seg_start..].trim().len() > 0 {
        segments.push((current_round, &text[seg_start..], seg_start));
    }

    for (round, segment, base_offset) in segments {
        let entry = parse_entry(segment, base_offset, round, &mut warnings)?;
        entries.push(entry);
    }
    Ok(ParsedSkills { entries, warnings })
}

fn parse_round_header(line: &str) -> Option<u32> {
    let rest = line.strip_prefix("## Round ")?;
    let rest = rest.strip_suffix(" Update")?;
    rest.parse().ok()
}

fn parse_entry(
    segment: &str,
    base_offset: usize,
    round: u32,
    warnings: &mut Vec<String>,
) -> Result<SkillEntry, SkillError> {
    let trimmed = segment.trim_start();
    let lead = segment.len() - trimmed.len();
    if !trimmed.starts_with("---") {
        return Err(SkillError::Parse {
            offset: base_offset + lead,
            message: "expected frontmatter fence `---`".into(),
        });
    }
    let after_open = &trimmed[3..];
    let after_open = after_open.strip_prefix('\n').ok_or(SkillError::Parse {
        offset: base_offset + lead + 3,
        message: "expected newline after opening fence".into(),
    })?;
    let close = after_open.find("\n---").ok_or(SkillError::Parse {
        offset: base_offset + lead,
        message: "missing closing frontmatter fence".into(),
    })?;
    let frontmatter = &after_open[..close];
    let mut body = &after_open[close + 4..];
    if let Some(rest) = body.strip_prefix('\n') {
        body = rest;
    }

    let mut name = None;
    let mut description = None;
    for line in frontmatter.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once(':').ok_or(SkillError::Parse {
            offset: base_offset + lead,
            message: format!("malformed frontmatter line {line:?}"),
        })?;
        let value = value.trim().to_string();
        match key.trim() {
            "name" | "skill_name" => name = Some(value),
            "description" | "skill_description" => description = Some(value),
            other => warnings.push(format!("ignoring unknown frontmatter key {other:?}")),
        }
    }
    let mut name = name.ok_or(SkillError::Parse {
        offset: base_offset + lead,
        message: "frontmatter is missing `name`".into(),
    })?;
    if name.contains('_') {
        // Snake-case names show up in single-pass skill files; normalize.
        warnings.push(format!("normalizing snake_case skill name {name:?}"));
        name = name.replace('_', "-");
    }
    let description = description.ok_or(SkillError::Parse {
        offset: base_offset + lead,
        message: "frontmatter is missing `description`".into(),
    })?;
    SkillEntry::new(name, description, body.trim_end_matches('\n').to_string() + "\n", round)
        .map_err(|e| SkillError::Parse {
            offset: base_offset + lead,
            message: e.to_string(),
        })
}

/// Applies a validated proposal, yielding the next skill set version.
/// Unrelated entries are preserved byte-for-byte.
pub fn apply_proposal(
    set: &SkillSet,
    proposal: &SkillProposal,
    description: &str,
    body: &str,
    round: u32,
) -> Result<SkillSet, SkillError> {
    let mut entries = set.entries.clone();
    match proposal.action {
        ProposalAction::Create => {
            if set.find(&proposal.skill_name).is_some() {
                return Err(SkillError::NameConflict(proposal.skill_name.clone()));
            }
            entries.push(SkillEntry::new(
                proposal.skill_name.clone(),
                description,
                body,
                round,
            )?);
        }
        ProposalAction::Edit => {
            let target = proposal
                .target_skill
                .as_deref()
                .ok_or(SkillError::MissingTarget)?;
            let entry = entries
                .iter_mut()
                .find(|e| e.name == target)
                .ok_or_else(|| SkillError::UnknownTarget(target.to_string()))?;
            entry.description = description.to_string();
            entry.body = body.to_string();
        }
    }
    Ok(SkillSet {
        side: set.side,
        iteration: round,
        entries,
    })
}

/// Versioned on-disk store: `workspace/{context_id}/{side}/iter_{k}.md`
/// plus a JSON index per side.
pub struct SkillStore {
    workspace: PathBuf,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct SideIndex {
    /// Structured entries per iteration; the Markdown file is the
    /// human-inspectable rendering of the same data.
    versions: Vec<IndexedVersion>,
}

#[derive(Debug, Serialize, Deserialize)]
struct IndexedVersion {
    iteration: u32,
    entries: Vec<SkillEntry>,
}

impl SkillStore {
    pub fn new(workspace: impl Into<PathBuf>) -> Self {
        SkillStore {
            workspace: workspace.into(),
        }
    }

    fn side_dir(&self, context_id: &str, side: Side) -> PathBuf {
        self.workspace.join(context_id).join(side.label())
    }

    fn index_path(&self, context_id: &str, side: Side) -> PathBuf {
        self.side_dir(context_id, side).join("index.json")
    }

    pub fn version_path(&self, context_id: &str, side: Side, iteration: u32) -> PathBuf {
        self.side_dir(context_id, side)
            .join(format!("iter_{iteration}.md"))
    }

    pub fn persist_version(&self, context_id: &str, set: &SkillSet) -> Result<(), SkillError> {
        let dir = self.side_dir(context_id, set.side);
        fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        let md_path = self.version_path(context_id, set.side, set.iteration);
        fs::write(&md_path, serialize_skill_set(set)).map_err(|e| io_err(&md_path, e))?;

        let index_path = self.index_path(context_id, set.side);
        let mut index = self.read_index(&index_path)?;
        index.versions.retain(|v| v.iteration != set.iteration);
        index.versions.push(IndexedVersion {
            iteration: set.iteration,
            entries: set.entries.clone(),
        });
        index.versions.sort_by_key(|v| v.iteration);
        let json = serde_json::to_string_pretty(&index).expect("index serializes");
        fs::write(&index_path, json).map_err(|e| io_err(&index_path, e))?;
        Ok(())
    }

    pub fn load_version(
        &self,
        context_id: &str,
        side: Side,
        iteration: u32,
    ) -> Result<SkillSet, SkillError> {
        let index_path = self.index_path(context_id, side);
        let index = self.read_index(&index_path)?;
        let version = index
            .versions
            .into_iter()
            .find(|v| v.iteration == iteration)
            .ok_or(SkillError::VersionNotFound {
                side: side.label(),
                iteration,
            })?;
        Ok(SkillSet {
            side,
            iteration,
            entries: version.entries,
        })
    }

    /// Highest persisted iteration for a side, if any.
    pub fn latest_iteration(&self, context_id: &str, side: Side) -> Result<Option<u32>, SkillError> {
        let index = self.read_index(&self.index_path(context_id, side))?;
        Ok(index.versions.iter().map(|v| v.iteration).max())
    }

    fn read_index(&self, path: &Path) -> Result<SideIndex, SkillError> {
        if !path.exists() {
            return Ok(SideIndex::default());
        }
        let raw = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&raw).map_err(|e| SkillError::BadIndex {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}
