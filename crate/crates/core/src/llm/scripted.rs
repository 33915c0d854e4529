use std::collections::{HashMap, HashSet};
use std::path::Path;

use async_trait::async_trait;
use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{Backend, BackendError, BackendKind, CompletionRequest, Generation, TranscriptEntry};

/// One canned reply. `matcher` is a substring unless `regex` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedRule {
    pub matcher: String,
    pub response: String,
    #[serde(default)]
    pub priority: i32,
    #[serde(default)]
    pub regex: bool,
}

impl ScriptedRule {
    pub fn new(matcher: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            matcher: matcher.into(),
            response: response.into(),
            priority: 0,
            regex: false,
        }
    }

    pub fn with_priority(mut self, priority: i32) -> Self {
        self.priority = priority;
        self
    }
}

enum Matcher {
    Substring(String),
    Pattern(Regex),
}

impl Matcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Substring(s) => prompt.contains(s.as_str()),
            Matcher::Pattern(re) => re.is_match(prompt),
        }
    }
}

/// Deterministic rule-based test double. The highest-priority matching rule
/// answers; a tie at the top priority is an error.
pub struct ScriptedBackend {
    rules: Vec<(Matcher, ScriptedRule)>,
}

impl ScriptedBackend {
    pub fn new(rules: Vec<ScriptedRule>) -> Result<Self, BackendError> {
        let mut seen = HashSet::new();
        let mut compiled = Vec::with_capacity(rules.len());
        for rule in rules {
            if !seen.insert((rule.matcher.clone(), rule.regex, rule.priority)) {
                return Err(BackendError::Script(format!(
                    "duplicate rule for {:?} at priority {}",
                    rule.matcher, rule.priority
                )));
            }
            let matcher = if rule.regex {
                Matcher::Pattern(
                    Regex::new(&rule.matcher).map_err(|e| BackendError::Script(format!("bad pattern: {e}")))?,
                )
            } else {
                Matcher::Substring(rule.matcher.clone())
            };
            compiled.push((matcher, rule));
        }
        Ok(Self { rules: compiled })
    }

    pub fn parse(content: &str) -> Result<Self, BackendError> {
        let rules: Vec<ScriptedRule> =
            serde_json::from_str(content).map_err(|e| BackendError::Script(e.to_string()))?;
        Self::new(rules)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let content = std::fs::read_to_string(path.as_ref())
            .map_err(|e| BackendError::Script(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&content)
    }

    pub fn respond(&self, prompt: &str) -> Result<&str, BackendError> {
        let matching: Vec<&ScriptedRule> = self
            .rules
            .iter()
            .filter(|(m, _)| m.matches(prompt))
            .map(|(_, r)| r)
            .collect();
        let top = matching
            .iter()
            .map(|r| r.priority)
            .max()
            .ok_or(BackendError::NoScriptedResponse)?;
        let winners: Vec<_> = matching.into_iter().filter(|r| r.priority == top).collect();
        match winners.as_slice() {
            [only] => Ok(&only.response),
            many => Err(BackendError::AmbiguousScript {
                priority: top,
                count: many.len(),
            }),
        }
    }
}

#[async_trait]
impl Backend for ScriptedBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    async fn generate(&self, request: &CompletionRequest) -> Result<Generation, BackendError> {
        self.respond(&request.prompt).map(Generation::text)
    }
}

/// Replays a recorded transcript: answers each prompt with the response
/// logged for exactly that prompt.
pub struct ReplayBackend {
    responses: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn from_entries(entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let responses = entries
            .into_iter()
            .filter_map(|e| e.response.map(|r| (e.prompt, r)))
            .collect();
        Self { responses }
    }

    pub fn parse(content: &str) -> Result<Self, BackendError> {
        let entries = content
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<TranscriptEntry>(l).map_err(|e| BackendError::Script(e.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_entries(entries))
    }
}

#[async_trait]
impl Backend for ReplayBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Scripted
    }

    async fn generate(&self, request: &CompletionRequest) -> Result<Generation, BackendError> {
        self.responses
            .get(&request.prompt)
            .map(|r| Generation::text(r.clone()))
            .ok_or(BackendError::NoScriptedResponse)
    }
}
