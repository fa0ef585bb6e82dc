//! Multi-hop knowledge graph question answering: iterative LLM-guided
//! relation pruning over an in-memory triple store, weighted voting across
//! question variants, triple aggregation and verbalization, and a
//! knowledge-grounded answer stage with Hits@1 evaluation.

pub mod condense;
pub mod config;
pub mod eval;
pub mod kg;
pub mod llm;
pub mod pipeline;
pub mod prompts;
pub mod question;
pub mod retrieval;

pub use condense::{AggregatedFact, AnswerRecord, TemplateSet};
pub use config::Config;
pub use eval::{hits_at_1, run_eval, ErrorCategory, EvalReport};
pub use kg::{load_metaqa_kb, KnowledgeGraph, Triple};
pub use llm::{fingerprint, CompletionRequest, CompletionResponse, Gateway};
pub use pipeline::Pipeline;
pub use question::{parse_topic_entities, HopPredictor, Question, QuestionBundle};
pub use retrieval::{retrieve, RetrievalConfig, RetrievalState};
