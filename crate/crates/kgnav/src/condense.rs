//! Stage 3: aggregate retrieved triples, verbalize them via templates, build
//! the knowledge-grounded answer prompt, and extract the final answer.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::KnowledgeGraph;
use crate::prompts;
use crate::retrieval::{AnchorSide, RetrievalState};

#[derive(Debug, Error)]
pub enum CondenseError {
    #[error("template must contain {{{0}}} exactly once")]
    BadTemplate(&'static str),
    #[error("template file line {line}: expected `relation<TAB>template`")]
    BadOverrideLine { line: usize },
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
    #[error("budget of {budget} tokens cannot fit the instruction and question")]
    PromptTooSmall { budget: usize },
}

/// A triple at the name level, as fed to aggregation and verbalization.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NamedTriple {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Grouping {
    ByHead,
    ByTail,
}

/// Head- or tail-grouped condensed triple ready for verbalization.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AggregatedFact {
    pub grouping: Grouping,
    /// The shared head (ByHead) or shared tail (ByTail).
    pub fixed_entity: String,
    pub relation: String,
    /// Deduplicated, name-ascending.
    pub grouped: Vec<String>,
}

/// Extracts name-level (triple, anchor) pairs from a retrieval state,
/// deduplicated by triple with the by-head anchor preferred when a triple
/// entered RK from both sides.
pub fn named_rk(state: &RetrievalState, g: &KnowledgeGraph) -> Vec<(NamedTriple, AnchorSide)> {
    let mut by_triple: BTreeMap<NamedTriple, AnchorSide> = BTreeMap::new();
    for entry in state.rk_entries() {
        let t = entry.triple;
        let named = NamedTriple {
            head: g.symbols().entity_name(t.head).unwrap_or("?").to_owned(),
            relation: g
                .symbols()
                .relation_name(t.relation)
                .unwrap_or("?")
                .to_owned(),
            tail: g.symbols().entity_name(t.tail).unwrap_or("?").to_owned(),
        };
        by_triple
            .entry(named)
            .and_modify(|a| {
                if entry.anchor == AnchorSide::Head {
                    *a = AnchorSide::Head;
                }
            })
            .or_insert(entry.anchor);
    }
    by_triple.into_iter().collect()
}

/// Groups triples sharing a head (or tail) entity and relation, following
/// the anchor side through which each triple entered RK. Every input triple
/// lands in exactly one fact.
pub fn aggregate(items: &[(NamedTriple, AnchorSide)]) -> Vec<AggregatedFact> {
    let mut groups: BTreeMap<(Grouping, String, String), Vec<String>> = BTreeMap::new();
    for (t, anchor) in items {
        let (grouping, fixed, member) = match anchor {
            AnchorSide::Head => (Grouping::ByHead, t.head.clone(), t.tail.clone()),
            AnchorSide::Tail => (Grouping::ByTail, t.tail.clone(), t.head.clone()),
        };
        groups
            .entry((grouping, fixed, t.relation.clone()))
            .or_default()
            .push(member);
    }
    groups
        .into_iter()
        .map(|((grouping, fixed_entity, relation), mut grouped)| {
            grouped.sort();
            grouped.dedup();
            AggregatedFact {
                grouping,
                fixed_entity,
                relation,
                grouped,
            }
        })
        .collect()
}

/// Expands facts back to singleton triples (the aggregation inverse).
pub fn flatten(facts: &[AggregatedFact]) -> Vec<(NamedTriple, AnchorSide)> {
    let mut out = Vec::new();
    for f in facts {
        for member in &f.grouped {
            let (t, anchor) = match f.grouping {
                Grouping::ByHead => (
                    NamedTriple {
                        head: f.fixed_entity.clone(),
                        relation: f.relation.clone(),
                        tail: member.clone(),
                    },
                    AnchorSide::Head,
                ),
                Grouping::ByTail => (
                    NamedTriple {
                        head: member.clone(),
                        relation: f.relation.clone(),
                        tail: f.fixed_entity.clone(),
                    },
                    AnchorSide::Tail,
                ),
            };
            out.push((t, anchor));
        }
    }
    out
}

pub const GENERIC_TEMPLATE: &str = "The {relation} of {head} is(are): {tail}";

fn count_placeholder(pattern: &str, name: &str) -> usize {
    pattern.matches(&format!("{{{name}}}")).count()
}

/// Verbalization pattern. The generic pattern must contain {head},
/// {relation} and {tail} exactly once; per-relation overrides may omit
/// {relation} since the relation is fixed by the override key.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    generic: String,
    overrides: BTreeMap<String, String>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            generic: GENERIC_TEMPLATE.to_owned(),
            overrides: BTreeMap::new(),
        }
    }
}

impl TemplateSet {
    pub fn new(generic: &str) -> Result<Self, CondenseError> {
        for name in ["head", "relation", "tail"] {
            if count_placeholder(generic, name) != 1 {
                return Err(CondenseError::BadTemplate(match name {
                    "head" => "head",
                    "relation" => "relation",
                    _ => "tail",
                }));
            }
        }
        Ok(Self {
            generic: generic.to_owned(),
            overrides: BTreeMap::new(),
        })
    }

    pub fn add_override(&mut self, relation: &str, pattern: &str) -> Result<(), CondenseError> {
        if count_placeholder(pattern, "head") != 1 {
            return Err(CondenseError::BadTemplate("head"));
        }
        if count_placeholder(pattern, "tail") != 1 {
            return Err(CondenseError::BadTemplate("tail"));
        }
        if count_placeholder(pattern, "relation") > 1 {
            return Err(CondenseError::BadTemplate("relation"));
        }
        self.overrides
            .insert(relation.to_owned(), pattern.to_owned());
        Ok(())
    }

    /// Loads per-relation overrides: `relation<TAB>template` per line.
    pub fn load_overrides<R: BufRead>(&mut self, reader: R) -> Result<(), CondenseError> {
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let (relation, pattern) = line
                .split_once('\t')
                .ok_or(CondenseError::BadOverrideLine { line: i + 1 })?;
            self.add_override(relation, pattern)
                .map_err(|_| CondenseError::BadOverrideLine { line: i + 1 })?;
        }
        Ok(())
    }

    fn pattern_for(&self, relation: &str) -> &str {
        self.overrides
            .get(relation)
            .map(String::as_str)
            .unwrap_or(&self.generic)
    }
}

/// ", "-joined with a final " and " before the last member when there are
/// two or more.
pub fn join_entities(entities: &[String]) -> String {
    match entities {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {}", init.join(", "), last),
    }
}

pub fn verbalize(fact: &AggregatedFact, templates: &TemplateSet) -> String {
    let joined = join_entities(&fact.grouped);
    let (head, tail) = match fact.grouping {
        Grouping::ByHead => (fact.fixed_entity.clone(), joined),
        Grouping::ByTail => (joined, fact.fixed_entity.clone()),
    };
    templates
        .pattern_for(&fact.relation)
        .replace("{head}", &head)
        .replace("{relation}", &fact.relation)
        .replace("{tail}", &tail)
}

pub const EMPTY_KNOWLEDGE: &str = "No relevant knowledge was retrieved.";

/// A finished answer prompt plus truncation accounting.
#[derive(Debug, Clone)]
pub struct BuiltPrompt {
    pub text: String,
    pub truncated: bool,
    /// Sentences that made it into the knowledge block, in order.
    pub included_sentences: Vec<String>,
}

/// Builds the knowledge-grounded answer prompt. `budget` is a token budget;
/// characters/4 is used as the token proxy. Whole sentences are dropped from
/// the end of the knowledge block until the prompt fits; sentences are never
/// split.
pub fn build_answer_prompt(
    question: &str,
    sentences: &[String],
    few_shot: Option<&str>,
    budget: usize,
) -> Result<BuiltPrompt, CondenseError> {
    let char_budget = budget.saturating_mul(4);
    let mut kept: Vec<String> = sentences.to_vec();
    loop {
        let block = if kept.is_empty() {
            EMPTY_KNOWLEDGE.to_owned()
        } else {
            kept.join("\n")
        };
        let text = prompts::answer_prompt(question, &block, few_shot);
        if text.chars().count() <= char_budget {
            return Ok(BuiltPrompt {
                text,
                truncated: kept.len() < sentences.len(),
                included_sentences: kept,
            });
        }
        if kept.is_empty() {
            return Err(CondenseError::PromptTooSmall { budget });
        }
        kept.pop();
    }
}

/// One extracted answer: display casing plus the normalized matching form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub display: String,
    pub normalized: String,
}

/// Lowercase, trim, collapse internal whitespace.
pub fn normalize_answer(s: &str) -> String {
    s.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

const BOILERPLATE_PREFIXES: &[&str] = &["the answers are", "the answer is", "answers:", "answer:"];

/// Splits a completion into candidate answers: newlines, commas and " and "
/// are separators; boilerplate prefixes are dropped.
pub fn extract_answers(completion: &str) -> Vec<Answer> {
    let mut answers = Vec::new();
    for line in completion.lines() {
        let mut rest = line.trim();
        let lower = rest.to_lowercase();
        for prefix in BOILERPLATE_PREFIXES {
            if lower.starts_with(prefix) {
                rest = rest[prefix.len()..].trim_start_matches([':', ' ']);
                break;
            }
        }
        for part in rest.split(',').flat_map(|p| p.split(" and ")) {
            let cleaned = part.trim().trim_end_matches('.').trim();
            if cleaned.is_empty() {
                continue;
            }
            answers.push(Answer {
                display: cleaned.to_owned(),
                normalized: normalize_answer(cleaned),
            });
        }
    }
    answers
}

/// Raw completion plus extracted answers and prompt accounting for one
/// question.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question_id: String,
    pub raw_completion: String,
    pub answers: Vec<Answer>,
    pub prompt_chars: usize,
    pub truncated: bool,
}
