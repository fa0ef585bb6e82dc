//! Stage 1: topic entity parsing, hop prediction, and weighted
//! similar-question variants.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{CompletionRequest, Gateway, LlmError};
use crate::prompts;

#[derive(Debug, Error)]
pub enum QuestionError {
    #[error("unbalanced brackets in question: {0}")]
    UnbalancedBrackets(String),
    #[error("{file} line {line}: expected `question<TAB>answers`")]
    MalformedQaLine { file: String, line: usize },
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
    #[error("question {0} has no hop label for the oracle predictor")]
    MissingHopLabel(String),
    #[error(transparent)]
    Gateway(#[from] LlmError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    /// Original text with MetaQA bracket markup.
    pub raw: String,
    /// Bracket-free text.
    pub text: String,
    pub topic_entities: Vec<String>,
    pub gold_answers: Vec<String>,
    /// Dataset-supplied hop count, when known (e.g. from the MetaQA split).
    pub hop_label: Option<usize>,
}

/// Extracts topic entities from unnested `[` `]` pairs and strips the
/// brackets, keeping their content in place.
pub fn parse_topic_entities(raw: &str) -> Result<(String, Vec<String>), QuestionError> {
    let mut clean = String::with_capacity(raw.len());
    let mut entities = Vec::new();
    let mut current: Option<String> = None;
    for c in raw.chars() {
        match c {
            '[' => {
                if current.is_some() {
                    return Err(QuestionError::UnbalancedBrackets(raw.to_owned()));
                }
                current = Some(String::new());
            }
            ']' => match current.take() {
                Some(entity) => {
                    clean.push_str(&entity);
                    entities.push(entity);
                }
                None => return Err(QuestionError::UnbalancedBrackets(raw.to_owned())),
            },
            _ => match &mut current {
                Some(entity) => entity.push(c),
                None => clean.push(c),
            },
        }
    }
    if current.is_some() {
        return Err(QuestionError::UnbalancedBrackets(raw.to_owned()));
    }
    Ok((clean, entities))
}

/// Parsed QA file plus the line numbers of gold-less questions that were
/// skipped.
pub struct QaFile {
    pub questions: Vec<Question>,
    pub skipped_lines: Vec<usize>,
}

/// Loads a MetaQA QA file: `question<TAB>answer1|answer2|...` per line, topic
/// entities bracketed in the question text. Question id = file name + line
/// number. Questions without gold answers are skipped.
pub fn load_metaqa_qa<R: BufRead>(
    reader: R,
    file_name: &str,
    hop_label: Option<usize>,
) -> Result<QaFile, QuestionError> {
    let mut questions = Vec::new();
    let mut skipped_lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (raw, answers) = line
            .split_once('\t')
            .ok_or(QuestionError::MalformedQaLine {
                file: file_name.to_owned(),
                line: i + 1,
            })?;
        let gold_answers: Vec<String> = answers
            .split('|')
            .map(str::trim)
            .filter(|a| !a.is_empty())
            .map(str::to_owned)
            .collect();
        if gold_answers.is_empty() {
            skipped_lines.push(i + 1);
            continue;
        }
        let (text, topic_entities) = parse_topic_entities(raw)?;
        questions.push(Question {
            id: format!("{file_name}:{}", i + 1),
            raw: raw.to_owned(),
            text,
            topic_entities,
            gold_answers,
            hop_label,
        });
    }
    Ok(QaFile {
        questions,
        skipped_lines,
    })
}

/// Default cue list for the heuristic hop predictor: each occurrence of a
/// relational cue counts one hop.
pub fn default_hop_cues() -> Vec<String> {
    [
        "written by",
        "direct",
        "starred",
        "acted",
        "release",
        "appear",
        "genre",
        "language",
    ]
    .into_iter()
    .map(str::to_owned)
    .collect()
}

#[derive(Debug, Clone)]
pub enum HopPredictor {
    /// Reads the dataset-supplied hop label.
    Oracle,
    Fixed(usize),
    /// Counts chained relational cue phrases in the question text.
    Heuristic {
        cues: Vec<String>,
    },
}

impl HopPredictor {
    /// Predicts the reasoning depth; always in 1..=max_hops.
    pub fn predict(&self, q: &Question, max_hops: usize) -> Result<usize, QuestionError> {
        let hops = match self {
            HopPredictor::Oracle => q
                .hop_label
                .ok_or_else(|| QuestionError::MissingHopLabel(q.id.clone()))?,
            HopPredictor::Fixed(h) => *h,
            HopPredictor::Heuristic { cues } => {
                let text = q.text.to_lowercase();
                cues.iter()
                    .map(|cue| text.matches(cue.as_str()).count())
                    .sum()
            }
        };
        Ok(hops.clamp(1, max_hops.max(1)))
    }
}

/// Decoding parameters applied to every gateway request a pipeline makes.
#[derive(Debug, Clone)]
pub struct DecodingParams {
    pub model: String,
    pub max_tokens: u32,
    pub temperature: f64,
}

impl DecodingParams {
    pub fn request(&self, gateway: &Gateway, prompt: String) -> CompletionRequest {
        CompletionRequest::new(
            gateway.backend_tag(),
            self.model.clone(),
            prompt,
            self.max_tokens,
            self.temperature,
        )
    }
}

const VARIANT_ATTEMPTS: usize = 2;

/// Generates exactly `m` similar-question variants. A variant is accepted
/// only if it is non-empty and preserves every topic entity verbatim;
/// shortfalls after bounded retries are backfilled with copies of the
/// original question.
pub fn generate_variants(
    gateway: &Gateway,
    params: &DecodingParams,
    q: &Question,
    m: usize,
) -> Result<Vec<String>, QuestionError> {
    if m == 0 {
        return Ok(Vec::new());
    }
    let mut variants: Vec<String> = Vec::new();
    for attempt in 1..=VARIANT_ATTEMPTS {
        let prompt = prompts::variant_prompt(&q.text, m, attempt);
        let req = params.request(gateway, prompt).with_meta(&q.id, 0);
        let response = gateway.complete(&req)?;
        for line in response.text.lines() {
            let line = line.trim();
            let valid =
                !line.is_empty() && q.topic_entities.iter().all(|e| line.contains(e.as_str()));
            if valid && !variants.iter().any(|v| v == line) {
                variants.push(line.to_owned());
                if variants.len() == m {
                    return Ok(variants);
                }
            }
        }
        if variants.len() >= m {
            break;
        }
    }
    while variants.len() < m {
        variants.push(q.text.clone());
    }
    variants.truncate(m);
    Ok(variants)
}

/// Which bundle member cast a ballot; the original question carries double
/// weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MemberSource {
    Original,
    Variant(usize),
}

impl MemberSource {
    pub fn weight(self) -> u32 {
        match self {
            MemberSource::Original => 2,
            MemberSource::Variant(_) => 1,
        }
    }
}

/// Question plus its variant rewrites and predicted hop count.
#[derive(Debug, Clone)]
pub struct QuestionBundle {
    pub question: Question,
    pub variants: Vec<String>,
    pub hops: usize,
}

impl QuestionBundle {
    /// Original first, then the variants in generation order.
    pub fn members(&self) -> impl Iterator<Item = (MemberSource, &str)> {
        std::iter::once((MemberSource::Original, self.question.text.as_str())).chain(
            self.variants
                .iter()
                .enumerate()
                .map(|(i, v)| (MemberSource::Variant(i), v.as_str())),
        )
    }

    pub fn total_weight(&self) -> u32 {
        self.members().map(|(s, _)| s.weight()).sum()
    }
}
