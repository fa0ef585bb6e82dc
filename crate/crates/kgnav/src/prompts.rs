//! Fixed prompt templates. All prompts are deterministic functions of their
//! inputs so that cached and mocked runs are reproducible.

/// Bumped whenever any template text changes; recorded in eval reports so a
/// run can be tied to the exact prompt wording it used.
pub const PROMPT_VERSION: &str = "kgnav-prompts-v1";

/// Marker line prefixes. The deterministic mock backends key off these to
/// recognize what kind of request they are answering.
pub const QUESTION_MARKER: &str = "Question: ";
pub const ENTITY_MARKER: &str = "Entity: ";
pub const CANDIDATES_MARKER: &str = "Candidate relations: ";
pub const VARIANT_MARKER: &str = "Rewrite the question";
pub const KNOWLEDGE_MARKER: &str = "Knowledge:";

pub fn variant_prompt(question: &str, m: usize, attempt: usize) -> String {
    let retry = if attempt > 1 {
        format!(" (attempt {attempt})")
    } else {
        String::new()
    };
    format!(
        "{VARIANT_MARKER} below in {m} different ways while keeping exactly the same \
         meaning{retry}.\nKeep every entity name exactly as written. Output one rewritten \
         question per line and nothing else.\n{QUESTION_MARKER}{question}\n"
    )
}

pub fn relation_selection_prompt(
    question: &str,
    entity: &str,
    candidates: &[String],
    k: usize,
    few_shot: Option<&str>,
) -> String {
    let mut p = String::new();
    p.push_str("Select the relations most relevant to answering the question about the entity.\n");
    if let Some(shots) = few_shot {
        p.push_str(shots.trim_end());
        p.push('\n');
    }
    p.push_str(QUESTION_MARKER);
    p.push_str(question);
    p.push('\n');
    p.push_str(ENTITY_MARKER);
    p.push_str(entity);
    p.push('\n');
    p.push_str(CANDIDATES_MARKER);
    p.push_str(&candidates.join("; "));
    p.push('\n');
    p.push_str(&format!(
        "Answer with exactly {k} relation name{} taken from the candidates, one per line.\n",
        if k == 1 { "" } else { "s" }
    ));
    p
}

/// Grounding clause for the final answer prompt: the model must answer only
/// from the retrieved knowledge.
pub const ANSWER_INSTRUCTION: &str = "Answer the question using only the knowledge provided \
below. Do not use any knowledge of your own. Reply with the answer entities only, separated \
by commas.";

pub fn answer_prompt(question: &str, knowledge_block: &str, few_shot: Option<&str>) -> String {
    let mut p = String::new();
    p.push_str(ANSWER_INSTRUCTION);
    p.push('\n');
    if let Some(shots) = few_shot {
        p.push_str(shots.trim_end());
        p.push('\n');
    }
    p.push_str(KNOWLEDGE_MARKER);
    p.push('\n');
    p.push_str(knowledge_block);
    p.push('\n');
    p.push_str(QUESTION_MARKER);
    p.push_str(question);
    p.push('\n');
    p.push_str("Answer:");
    p
}

/// Pulls the text after `marker` on the first line that starts with it.
pub fn line_after_marker<'a>(prompt: &'a str, marker: &str) -> Option<&'a str> {
    prompt.lines().find_map(|l| l.strip_prefix(marker))
}
