//! Dataset-driven evaluation: Hits@1 plus error bucketing over the
//! four-category taxonomy (relation selection, reasoning, hallucination,
//! other).

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::condense::{normalize_answer, Answer};
use crate::kg::KnowledgeGraph;
use crate::pipeline::{FailureStage, Pipeline, QuestionRun};
use crate::prompts::PROMPT_VERSION;
use crate::question::Question;
use crate::retrieval::TraceRecord;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty dataset: nothing to evaluate")]
    EmptyDataset,
    #[error("trace write failed: {0}")]
    Trace(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ErrorCategory {
    RelationSelectionError,
    ReasoningError,
    Hallucination,
    OtherError,
}

/// First-answer semantics: true iff the first extracted answer, normalized,
/// equals any normalized gold answer.
pub fn hits_at_1(answers: &[Answer], gold: &[String]) -> bool {
    match answers.first() {
        Some(first) => gold.iter().any(|g| normalize_answer(g) == first.normalized),
        None => false,
    }
}

/// Buckets a missed question. Precedence: wrong retrieval (no gold entity
/// anywhere in RK), then ungrounded answer, then interrupted/truncated runs,
/// then reasoning.
pub fn classify_error(run: &QuestionRun, gold: &[String], g: &KnowledgeGraph) -> ErrorCategory {
    let rk_entities: BTreeSet<String> = run
        .state
        .rk_entries()
        .flat_map(|e| [e.triple.head, e.triple.tail])
        .filter_map(|id| g.symbols().entity_name(id))
        .map(normalize_answer)
        .collect();
    if !gold
        .iter()
        .any(|g| rk_entities.contains(&normalize_answer(g)))
    {
        return ErrorCategory::RelationSelectionError;
    }
    // entities present in the knowledge block actually shown to the model
    let included = run.included_sentences.len();
    let knowledge_entities: BTreeSet<String> = run
        .facts
        .iter()
        .take(included)
        .flat_map(|f| std::iter::once(&f.fixed_entity).chain(f.grouped.iter()))
        .map(|e| normalize_answer(e))
        .collect();
    if let Some(first) = run.answer.answers.first() {
        if !knowledge_entities.contains(&first.normalized) {
            return ErrorCategory::Hallucination;
        }
    }
    if run.answer.truncated {
        return ErrorCategory::OtherError;
    }
    ErrorCategory::ReasoningError
}

pub fn classify_failure(stage: FailureStage) -> ErrorCategory {
    match stage {
        FailureStage::RelationSelection => ErrorCategory::RelationSelectionError,
        FailureStage::Setup | FailureStage::Other => ErrorCategory::OtherError,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub question_id: String,
    pub question: String,
    pub hit: bool,
    pub answers: Vec<String>,
    pub gold_answers: Vec<String>,
    pub error: Option<ErrorCategory>,
    pub truncated: bool,
    pub failure: Option<String>,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub prompt_version: String,
    pub question_count: usize,
    pub hits: usize,
    pub hits_at_1: f64,
    pub errors: BTreeMap<ErrorCategory, usize>,
    pub records: Vec<QuestionRecord>,
}

fn empty_histogram() -> BTreeMap<ErrorCategory, usize> {
    [
        (ErrorCategory::RelationSelectionError, 0),
        (ErrorCategory::ReasoningError, 0),
        (ErrorCategory::Hallucination, 0),
        (ErrorCategory::OtherError, 0),
    ]
    .into()
}

/// Runs the full pipeline over every question with `workers` threads. The
/// report is assembled in question-id order, so output is independent of
/// scheduling.
pub fn run_eval(
    dataset: &str,
    questions: &[Question],
    g: &KnowledgeGraph,
    pipeline: &Pipeline,
    workers: usize,
) -> Result<(EvalReport, Vec<TraceRecord>), EvalError> {
    if questions.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    let workers = workers.max(1);
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, QuestionRecord, Vec<TraceRecord>)>> =
        Mutex::new(Vec::with_capacity(questions.len()));

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= questions.len() {
                    break;
                }
                let q = &questions[i];
                let (record, trace) = evaluate_question(q, g, pipeline);
                results
                    .lock()
                    .expect("result lock poisoned")
                    .push((i, record, trace));
            });
        }
    });

    let mut results = results.into_inner().expect("result lock poisoned");
    results.sort_by_key(|(i, _, _)| *i);

    let mut report = EvalReport {
        dataset: dataset.to_owned(),
        prompt_version: PROMPT_VERSION.to_owned(),
        question_count: questions.len(),
        hits: 0,
        hits_at_1: 0.0,
        errors: empty_histogram(),
        records: Vec::with_capacity(questions.len()),
    };
    let mut traces = Vec::new();
    for (_, record, trace) in results {
        if record.hit {
            report.hits += 1;
        } else if let Some(cat) = record.error {
            *report.errors.entry(cat).or_insert(0) += 1;
        }
        report.records.push(record);
        traces.extend(trace);
    }
    report
        .records
        .sort_by(|a, b| a.question_id.cmp(&b.question_id));
    traces.sort_by(|a, b| {
        (&a.question_id, a.hop, &a.entity).cmp(&(&b.question_id, b.hop, &b.entity))
    });
    report.hits_at_1 = report.hits as f64 / report.question_count as f64;
    Ok((report, traces))
}

fn evaluate_question(
    q: &Question,
    g: &KnowledgeGraph,
    pipeline: &Pipeline,
) -> (QuestionRecord, Vec<TraceRecord>) {
    match pipeline.run(g, q) {
        Ok(run) => {
            let hit = hits_at_1(&run.answer.answers, &q.gold_answers);
            let error = (!hit).then(|| classify_error(&run, &q.gold_answers, g));
            let record = QuestionRecord {
                question_id: q.id.clone(),
                question: q.raw.clone(),
                hit,
                answers: run
                    .answer
                    .answers
                    .iter()
                    .map(|a| a.display.clone())
                    .collect(),
                gold_answers: q.gold_answers.clone(),
                error,
                truncated: run.answer.truncated,
                failure: None,
                diagnostics: run
                    .state
                    .diagnostics
                    .iter()
                    .map(|d| format!("{d:?}"))
                    .collect(),
            };
            (record, run.state.trace)
        }
        Err(e) => {
            let record = QuestionRecord {
                question_id: q.id.clone(),
                question: q.raw.clone(),
                hit: false,
                answers: vec![],
                gold_answers: q.gold_answers.clone(),
                error: Some(classify_failure(e.stage)),
                truncated: false,
                failure: Some(e.to_string()),
                diagnostics: vec![],
            };
            (record, vec![])
        }
    }
}
