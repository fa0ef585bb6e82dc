//! End-to-end orchestration for a single question: question analysis,
//! iterative retrieval, condensing, and answer generation.

use thiserror::Error;

use crate::condense::{
    aggregate, build_answer_prompt, extract_answers, named_rk, verbalize, AggregatedFact,
    AnswerRecord, CondenseError, TemplateSet,
};
use crate::kg::KnowledgeGraph;
use crate::llm::Gateway;
use crate::question::{
    generate_variants, DecodingParams, HopPredictor, Question, QuestionBundle, QuestionError,
};
use crate::retrieval::{retrieve, RetrievalConfig, RetrievalError, RetrievalState};

/// Stage at which a question run failed; drives error classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureStage {
    Setup,
    RelationSelection,
    Other,
}

#[derive(Debug, Error)]
#[error("{stage:?} failure: {message}")]
pub struct PipelineError {
    pub stage: FailureStage,
    pub message: String,
}

impl PipelineError {
    fn other(message: impl ToString) -> Self {
        Self {
            stage: FailureStage::Other,
            message: message.to_string(),
        }
    }
}

impl From<QuestionError> for PipelineError {
    fn from(e: QuestionError) -> Self {
        Self::other(e)
    }
}

impl From<RetrievalError> for PipelineError {
    fn from(e: RetrievalError) -> Self {
        let stage = match &e {
            RetrievalError::UnresolvableTopicEntity(_) => FailureStage::Setup,
            RetrievalError::RelationSelection(_) => FailureStage::RelationSelection,
            RetrievalError::Interrupted(_) => FailureStage::Other,
        };
        Self {
            stage,
            message: e.to_string(),
        }
    }
}

impl From<CondenseError> for PipelineError {
    fn from(e: CondenseError) -> Self {
        Self::other(e)
    }
}

/// Everything produced while answering one question.
#[derive(Debug)]
pub struct QuestionRun {
    pub bundle: QuestionBundle,
    pub state: RetrievalState,
    pub facts: Vec<AggregatedFact>,
    /// Verbalized sentences actually included in the answer prompt
    /// (a prefix of the verbalized facts; truncation drops from the end).
    pub included_sentences: Vec<String>,
    pub answer: AnswerRecord,
}

/// Shared, read-only pipeline configuration. Safe to use from many worker
/// threads at once.
pub struct Pipeline {
    pub gateway: Gateway,
    pub params: DecodingParams,
    pub predictor: HopPredictor,
    pub retrieval: RetrievalConfig,
    pub templates: TemplateSet,
    pub answer_few_shot: Option<String>,
    /// Similar questions per question (m).
    pub variants: usize,
    /// Token budget for the answer prompt.
    pub budget: usize,
}

impl Pipeline {
    pub fn run(
        &self,
        g: &KnowledgeGraph,
        question: &Question,
    ) -> Result<QuestionRun, PipelineError> {
        let hops = self.predictor.predict(question, self.retrieval.max_hops)?;
        let variants = generate_variants(&self.gateway, &self.params, question, self.variants)?;
        let bundle = QuestionBundle {
            question: question.clone(),
            variants,
            hops,
        };

        let state = retrieve(g, &self.gateway, &self.params, &bundle, &self.retrieval)?;

        let facts = aggregate(&named_rk(&state, g));
        let sentences: Vec<String> = facts
            .iter()
            .map(|f| verbalize(f, &self.templates))
            .collect();
        let built = build_answer_prompt(
            &bundle.question.text,
            &sentences,
            self.answer_few_shot.as_deref(),
            self.budget,
        )?;
        let prompt_chars = built.text.chars().count();

        let req = self
            .params
            .request(&self.gateway, built.text)
            .with_meta(&bundle.question.id, hops + 1);
        let response = self.gateway.complete(&req).map_err(PipelineError::other)?;
        let answers = extract_answers(&response.text);

        Ok(QuestionRun {
            bundle,
            state,
            facts,
            included_sentences: built.included_sentences,
            answer: AnswerRecord {
                question_id: question.id.clone(),
                raw_completion: response.text,
                answers,
                prompt_chars,
                truncated: built.truncated,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::GraphBuilder;
    use crate::llm::{MockOracle, OracleEntry};
    use crate::question::parse_topic_entities;

    fn question(raw: &str, hops: usize, gold: &[&str]) -> Question {
        let (text, topic_entities) = parse_topic_entities(raw).unwrap();
        Question {
            id: "t:1".into(),
            raw: raw.into(),
            text,
            topic_entities,
            gold_answers: gold.iter().map(|s| s.to_string()).collect(),
            hop_label: Some(hops),
        }
    }

    #[test]
    fn oracle_pipeline_answers_chain_question() {
        let mut b = GraphBuilder::new();
        b.add("a", "r1", "b");
        b.add("b", "r2", "c");
        b.add("a", "noise", "z");
        let g = b.build();

        let pipeline = Pipeline {
            gateway: Gateway::new(Box::new(MockOracle::new([OracleEntry {
                question_id: "t:1".into(),
                gold_relations: vec!["r1".into(), "r2".into()],
                gold_answers: vec!["c".into()],
            }]))),
            params: DecodingParams {
                model: "m".into(),
                max_tokens: 64,
                temperature: 0.0,
            },
            predictor: HopPredictor::Oracle,
            retrieval: RetrievalConfig::default(),
            templates: TemplateSet::default(),
            answer_few_shot: None,
            variants: 2,
            budget: 4096,
        };
        let q = question("two hops from [a]", 2, &["c"]);
        let run = pipeline.run(&g, &q).unwrap();
        assert_eq!(run.bundle.hops, 2);
        assert_eq!(run.bundle.variants.len(), 2);
        assert_eq!(run.state.rk.len(), 2);
        assert_eq!(run.answer.answers[0].normalized, "c");
        assert!(!run.answer.truncated);
    }

    #[test]
    fn setup_failure_for_unknown_topic() {
        let mut b = GraphBuilder::new();
        b.add("a", "r", "b");
        let g = b.build();
        let pipeline = Pipeline {
            gateway: Gateway::new(Box::new(MockOracle::new([]))),
            params: DecodingParams {
                model: "m".into(),
                max_tokens: 64,
                temperature: 0.0,
            },
            predictor: HopPredictor::Fixed(1),
            retrieval: RetrievalConfig::default(),
            templates: TemplateSet::default(),
            answer_few_shot: None,
            variants: 0,
            budget: 4096,
        };
        let q = question("about [ghost]", 1, &["x"]);
        let err = pipeline.run(&g, &q).unwrap_err();
        assert_eq!(err.stage, FailureStage::Setup);
    }
}
