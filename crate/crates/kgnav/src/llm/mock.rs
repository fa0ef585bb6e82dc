//! Deterministic mock backends. Each is a pure function of the request, so
//! repeated calls are byte-identical and eval runs need no live model.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Backend, CompletionRequest, LlmError};
use crate::prompts::{
    line_after_marker, CANDIDATES_MARKER, KNOWLEDGE_MARKER, QUESTION_MARKER, VARIANT_MARKER,
};

/// Lowercases, splits on non-alphanumerics, and applies light suffix
/// stemming so that surface variants like "write"/"written" and
/// "movie"/"movies" share a stem.
pub fn lexical_stems(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(stem)
        .collect()
}

fn stem(token: &str) -> String {
    let mut t = token.to_owned();
    for suffix in ["ing", "ed", "en", "es", "s", "e"] {
        if t.len() > suffix.len() + 2 && t.ends_with(suffix) {
            t.truncate(t.len() - suffix.len());
            break;
        }
    }
    // collapse a trailing doubled consonant left by suffix stripping
    // ("written" -> "writt" -> "writ")
    let bytes = t.as_bytes();
    if bytes.len() >= 2 && bytes[bytes.len() - 1] == bytes[bytes.len() - 2] {
        t.truncate(t.len() - 1);
    }
    t
}

fn overlap_score(question_stems: &[String], candidate: &str) -> usize {
    let mut cand = lexical_stems(candidate);
    cand.sort();
    cand.dedup();
    cand.iter().filter(|s| question_stems.contains(s)).count()
}

fn parse_count(prompt: &str, before: &str) -> usize {
    // pulls the integer immediately preceding `before`, e.g. "in 2 different"
    prompt
        .split_whitespace()
        .collect::<Vec<_>>()
        .windows(2)
        .find(|w| w[1].starts_with(before))
        .and_then(|w| w[0].parse().ok())
        .unwrap_or(1)
}

fn parse_candidates(prompt: &str) -> Vec<String> {
    line_after_marker(prompt, CANDIDATES_MARKER)
        .map(|line| {
            line.split(';')
                .map(|c| c.trim().to_owned())
                .filter(|c| !c.is_empty())
                .collect()
        })
        .unwrap_or_default()
}

fn knowledge_sentences(prompt: &str) -> Vec<&str> {
    let mut inside = false;
    let mut out = Vec::new();
    for line in prompt.lines() {
        if line == KNOWLEDGE_MARKER {
            inside = true;
            continue;
        }
        if line.starts_with(QUESTION_MARKER) {
            break;
        }
        if inside && !line.trim().is_empty() {
            out.push(line);
        }
    }
    out
}

/// Selects candidates by token-overlap against the question. LLM-free
/// baseline selector; useful for tracked (non-thresholded) eval runs.
pub struct MockLexical;

impl Backend for MockLexical {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let prompt = &req.prompt;
        let question = line_after_marker(prompt, QUESTION_MARKER).unwrap_or("");
        let mut q_stems = lexical_stems(question);
        q_stems.sort();
        q_stems.dedup();

        if prompt.contains(CANDIDATES_MARKER) {
            let mut scored: Vec<(usize, String)> = parse_candidates(prompt)
                .into_iter()
                .map(|c| (overlap_score(&q_stems, &c), c))
                .filter(|(score, _)| *score > 0)
                .collect();
            scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            Ok(scored
                .into_iter()
                .map(|(_, c)| c)
                .collect::<Vec<_>>()
                .join("\n"))
        } else if prompt.contains(VARIANT_MARKER) {
            let m = parse_count(prompt, "different");
            Ok(vec![question; m].join("\n"))
        } else {
            // answer prompt: pick the knowledge sentence whose subject part
            // best overlaps the question, reply with its object part
            let mut best: Option<(usize, &str)> = None;
            for sentence in knowledge_sentences(prompt) {
                let subject = sentence
                    .rsplit_once(": ")
                    .map(|(s, _)| s)
                    .unwrap_or(sentence);
                let score = overlap_score(&q_stems, subject);
                let better = match best {
                    None => true,
                    Some((b, bs)) => score > b || (score == b && sentence < bs),
                };
                if better {
                    best = Some((score, sentence));
                }
            }
            Ok(best
                .map(|(_, s)| {
                    s.rsplit_once(": ")
                        .map(|(_, obj)| obj)
                        .unwrap_or(s)
                        .to_owned()
                })
                .unwrap_or_else(|| "unknown".to_owned()))
        }
    }

    fn tag(&self) -> &str {
        "mock-lexical"
    }
}

/// One sidecar entry: the gold relation path for a question, plus the gold
/// answers used for the final answer completion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleEntry {
    pub question_id: String,
    pub gold_relations: Vec<String>,
    #[serde(default)]
    pub gold_answers: Vec<String>,
}

/// Scripted gold-reasoning-path backend: at hop i it selects the i-th gold
/// relation if present among the candidates.
pub struct MockOracle {
    entries: HashMap<String, OracleEntry>,
}

impl MockOracle {
    pub fn new(entries: impl IntoIterator<Item = OracleEntry>) -> Self {
        Self {
            entries: entries
                .into_iter()
                .map(|e| (e.question_id.clone(), e))
                .collect(),
        }
    }

    pub fn from_sidecar(path: &Path) -> Result<Self, LlmError> {
        let file = std::fs::File::open(path)
            .map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
        let mut entries = Vec::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| LlmError::Cache(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: OracleEntry = serde_json::from_str(&line)
                .map_err(|e| LlmError::Cache(format!("{} line {}: {e}", path.display(), i + 1)))?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    fn entry(&self, req: &CompletionRequest) -> Result<&OracleEntry, LlmError> {
        let id = req
            .question_id
            .as_deref()
            .ok_or_else(|| LlmError::OracleMiss("<no question id on request>".into()))?;
        self.entries
            .get(id)
            .ok_or_else(|| LlmError::OracleMiss(id.to_owned()))
    }
}

impl Backend for MockOracle {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let prompt = &req.prompt;
        if prompt.contains(CANDIDATES_MARKER) {
            let entry = self.entry(req)?;
            let hop = req.hop.unwrap_or(1);
            let candidates = parse_candidates(prompt);
            let matches = |gold: &str| {
                candidates
                    .iter()
                    .find(|c| c.eq_ignore_ascii_case(gold))
                    .cloned()
            };
            // preferred: the gold relation for this hop; fallback: any gold
            // relation present among the candidates
            if let Some(found) = entry
                .gold_relations
                .get(hop.saturating_sub(1))
                .and_then(|g| matches(g))
            {
                return Ok(found);
            }
            for gold in &entry.gold_relations {
                if let Some(found) = matches(gold) {
                    return Ok(found);
                }
            }
            Ok(String::new())
        } else if prompt.contains(VARIANT_MARKER) {
            let question = line_after_marker(prompt, QUESTION_MARKER).unwrap_or("");
            let m = parse_count(prompt, "different");
            Ok(vec![question; m].join("\n"))
        } else {
            let entry = self.entry(req)?;
            Ok(entry.gold_answers.join(", "))
        }
    }

    fn tag(&self) -> &str {
        "mock-oracle"
    }
}

/// Fingerprint -> canned response map; any unknown fingerprint is an error.
#[derive(Default)]
pub struct MockReplay {
    responses: HashMap<String, String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ReplayRecord {
    fingerprint: String,
    response_text: String,
}

impl MockReplay {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, fingerprint: &str, text: &str) {
        self.responses
            .insert(fingerprint.to_owned(), text.to_owned());
    }

    pub fn from_file(path: &Path) -> Result<Self, LlmError> {
        let file = std::fs::File::open(path)
            .map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
        let mut replay = Self::new();
        for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| LlmError::Cache(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: ReplayRecord = serde_json::from_str(&line)
                .map_err(|e| LlmError::Cache(format!("{} line {}: {e}", path.display(), i + 1)))?;
            replay.insert(&record.fingerprint, &record.response_text);
        }
        Ok(replay)
    }
}

impl Backend for MockReplay {
    fn complete(&self, req: &CompletionRequest) -> Result<String, LlmError> {
        let fp = super::fingerprint(req);
        self.responses
            .get(&fp)
            .cloned()
            .ok_or(LlmError::ReplayMiss(fp))
    }

    fn tag(&self) -> &str {
        "mock-replay"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompts;

    #[test]
    fn stems_unify_surface_variants() {
        assert_eq!(stem("write"), stem("written"));
        assert_eq!(stem("movie"), stem("movies"));
        assert_eq!(stem("directed"), stem("directing"));
        assert_ne!(stem("actor"), stem("director"));
    }

    #[test]
    fn lexical_picks_overlapping_candidate() {
        let prompt = prompts::relation_selection_prompt(
            "what movies did X write",
            "X",
            &["birth_year".into(), "written_by".into()],
            1,
            None,
        );
        let req = CompletionRequest::new("mock-lexical", "m", prompt, 64, 0.0);
        let text = MockLexical.complete(&req).unwrap();
        assert!(text.contains("written_by"));
        assert!(!text.contains("birth_year"));
    }

    #[test]
    fn lexical_is_referentially_transparent() {
        let prompt = prompts::relation_selection_prompt(
            "who directed Splash",
            "Splash",
            &[
                "directed_by".into(),
                "starred_actors".into(),
                "written_by".into(),
            ],
            1,
            None,
        );
        let req = CompletionRequest::new("mock-lexical", "m", prompt, 64, 0.0);
        let first = MockLexical.complete(&req).unwrap();
        for _ in 0..100 {
            assert_eq!(MockLexical.complete(&req).unwrap(), first);
        }
    }

    #[test]
    fn lexical_answers_from_knowledge_block() {
        let prompt = prompts::answer_prompt(
            "what movies did Babaloo Mandel write",
            "The written_by of Splash is(are): Babaloo Mandel\n\
             The actors starred in Splash are: Tom Hanks",
            None,
        );
        let req = CompletionRequest::new("mock-lexical", "m", prompt, 64, 0.0);
        assert_eq!(MockLexical.complete(&req).unwrap(), "Babaloo Mandel");
    }

    #[test]
    fn oracle_selects_hop_relation() {
        let oracle = MockOracle::new([OracleEntry {
            question_id: "q1".into(),
            gold_relations: vec!["written_by".into(), "starred_actors".into()],
            gold_answers: vec!["Tom Hanks".into()],
        }]);
        let prompt = prompts::relation_selection_prompt(
            "q",
            "Splash",
            &["starred_actors".into(), "written_by".into()],
            1,
            None,
        );
        let req = CompletionRequest::new("mock-oracle", "m", prompt, 64, 0.0).with_meta("q1", 2);
        assert_eq!(oracle.complete(&req).unwrap(), "starred_actors");
    }

    #[test]
    fn oracle_answers_gold() {
        let oracle = MockOracle::new([OracleEntry {
            question_id: "q1".into(),
            gold_relations: vec![],
            gold_answers: vec!["A".into(), "B".into()],
        }]);
        let prompt = prompts::answer_prompt("q", "none", None);
        let req = CompletionRequest::new("mock-oracle", "m", prompt, 64, 0.0).with_meta("q1", 1);
        assert_eq!(oracle.complete(&req).unwrap(), "A, B");
    }

    #[test]
    fn variant_prompts_echo_question() {
        let prompt = prompts::variant_prompt("what films did Babaloo Mandel write", 2, 1);
        let req = CompletionRequest::new("mock-lexical", "m", prompt, 64, 0.0);
        let text = MockLexical.complete(&req).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert!(lines.iter().all(|l| l.contains("Babaloo Mandel")));
    }
}
