//! Stage 2: iterative, depth-bounded retrieval. Per-entity candidate
//! gathering, per-variant relation selection via the oracle, weighted voting,
//! top-M expansion, and frontier management.

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, Triple};
use crate::llm::{Gateway, LlmError};
use crate::prompts;
use crate::question::{DecodingParams, MemberSource, QuestionBundle};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("topic entity not in graph: {0}")]
    UnresolvableTopicEntity(String),
    #[error("relation selection failed: {0}")]
    RelationSelection(#[source] LlmError),
    #[error("retrieval interrupted: {0}")]
    Interrupted(#[source] LlmError),
}

#[derive(Debug, Clone)]
pub struct RetrievalConfig {
    /// Relations the oracle picks per (variant, entity) ballot.
    pub k: usize,
    /// Relations expanded per entity after voting.
    pub m: usize,
    /// Hop ceiling H.
    pub max_hops: usize,
    /// Max candidate relations listed per prompt.
    pub candidate_cap: usize,
    /// Few-shot block for the relation-selection prompt; off by default.
    pub selection_few_shot: Option<String>,
    /// Test hook: process frontier entities in a seeded pseudo-random order
    /// instead of sorted order. Results must not depend on it.
    pub frontier_shuffle_seed: Option<u64>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            k: 1,
            m: 1,
            max_hops: 3,
            candidate_cap: 50,
            selection_few_shot: None,
            frontier_shuffle_seed: None,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.k < 1 || self.m < 1 || self.max_hops < 1 {
            return Err("K, M and H must all be >= 1".into());
        }
        if self.k > self.candidate_cap {
            return Err(format!(
                "K ({}) exceeds candidate cap ({})",
                self.k, self.candidate_cap
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub source: MemberSource,
    pub entity: EntityId,
    /// Chosen relation names; always a subset of the presented candidates,
    /// at most K.
    pub chosen: Vec<String>,
}

/// Per-entity relation -> integer score tally.
pub type ScoreEntry = BTreeMap<String, u32>;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreBoard(pub BTreeMap<EntityId, ScoreEntry>);

/// Side on which the anchor (frontier) entity sat when the triple entered RK.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnchorSide {
    Head,
    Tail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RkEntry {
    pub triple: Triple,
    pub hop: usize,
    pub anchor: AnchorSide,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagnostic {
    CandidatesTruncated {
        entity: String,
        total: usize,
        cap: usize,
    },
    EmptyBallot {
        entity: String,
        source: MemberSource,
    },
    NoRelations {
        entity: String,
    },
    EarlyTermination {
        hop: usize,
    },
}

/// One trace line per (hop, entity); the substrate for error audits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRecord {
    pub question_id: String,
    pub hop: usize,
    pub entity: String,
    pub candidates: Vec<String>,
    pub ballots: Vec<Ballot>,
    pub scores: ScoreEntry,
    pub selected: Vec<String>,
    pub triples_added: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RetrievalState {
    pub frontier: BTreeSet<EntityId>,
    pub visited: BTreeSet<EntityId>,
    /// (triple, hop) -> anchor side; set semantics over (triple, hop).
    pub rk: BTreeMap<(Triple, usize), AnchorSide>,
    pub hops_executed: usize,
    pub scoreboard: ScoreBoard,
    pub diagnostics: Vec<Diagnostic>,
    pub trace: Vec<TraceRecord>,
}

impl RetrievalState {
    pub fn rk_entries(&self) -> impl Iterator<Item = RkEntry> + '_ {
        self.rk.iter().map(|(&(triple, hop), &anchor)| RkEntry {
            triple,
            hop,
            anchor,
        })
    }

    pub fn rk_triples(&self) -> BTreeSet<Triple> {
        self.rk.keys().map(|&(t, _)| t).collect()
    }
}

/// Deduplicated-by-name candidate list for an entity, capped at
/// `candidate_cap` (prefix of the deterministic name-ascending order).
pub fn gather_candidates(
    g: &KnowledgeGraph,
    entity: EntityId,
    cap: usize,
) -> Result<(Vec<String>, Option<Diagnostic>), RetrievalError> {
    let rels = g
        .relations_of(entity)
        .map_err(|e| RetrievalError::UnresolvableTopicEntity(e.to_string()))?;
    let mut names: Vec<String> = rels
        .iter()
        .filter_map(|d| g.symbols().relation_name(d.relation).map(str::to_owned))
        .collect();
    names.dedup();
    let mut diagnostic = None;
    if names.len() > cap {
        diagnostic = Some(Diagnostic::CandidatesTruncated {
            entity: g.symbols().entity_name(entity).unwrap_or("?").to_owned(),
            total: names.len(),
            cap,
        });
        names.truncate(cap);
    }
    Ok((names, diagnostic))
}

/// Parses an oracle response into chosen relation names: case-insensitive,
/// whitespace-trimmed exact match against the candidates, first `k` matches
/// kept in response order.
fn parse_chosen(response: &str, candidates: &[String], k: usize) -> Vec<String> {
    let mut chosen = Vec::new();
    for line in response.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = candidates.iter().find(|c| c.eq_ignore_ascii_case(line)) {
            if !chosen.contains(c) {
                chosen.push(c.clone());
                if chosen.len() == k {
                    break;
                }
            }
        }
    }
    chosen
}

/// One ballot per bundle member. A response matching no candidate yields an
/// empty ballot plus a diagnostic, never a failure.
#[allow(clippy::too_many_arguments)]
pub fn cast_ballots(
    gateway: &Gateway,
    params: &DecodingParams,
    bundle: &QuestionBundle,
    entity: EntityId,
    entity_name: &str,
    candidates: &[String],
    cfg: &RetrievalConfig,
    hop: usize,
    diagnostics: &mut Vec<Diagnostic>,
) -> Result<Vec<Ballot>, RetrievalError> {
    let mut ballots = Vec::new();
    for (source, text) in bundle.members() {
        let prompt = prompts::relation_selection_prompt(
            text,
            entity_name,
            candidates,
            cfg.k,
            cfg.selection_few_shot.as_deref(),
        );
        let req = params
            .request(gateway, prompt)
            .with_meta(&bundle.question.id, hop);
        let response = gateway
            .complete(&req)
            .map_err(RetrievalError::RelationSelection)?;
        let chosen = parse_chosen(&response.text, candidates, cfg.k);
        if chosen.is_empty() {
            diagnostics.push(Diagnostic::EmptyBallot {
                entity: entity_name.to_owned(),
                source,
            });
        }
        ballots.push(Ballot {
            source,
            entity,
            chosen,
        });
    }
    Ok(ballots)
}

/// Weighted vote tally per Score(r) = sum over ballots of w(source) when r
/// was chosen. Ballots are sorted before counting so the tally is independent
/// of arrival order.
pub fn tally_votes(ballots: &[Ballot]) -> ScoreEntry {
    let mut votes: Vec<(MemberSource, &str)> = ballots
        .iter()
        .flat_map(|b| b.chosen.iter().map(move |r| (b.source, r.as_str())))
        .collect();
    votes.sort();
    let mut entry = ScoreEntry::new();
    for (source, relation) in votes {
        *entry.entry(relation.to_owned()).or_insert(0) += source.weight();
    }
    entry
}

/// Top M relations by (score desc, name asc); zero scores never selected.
pub fn select_top_m(scores: &ScoreEntry, m: usize) -> Vec<String> {
    let mut ranked: Vec<(&String, &u32)> = scores.iter().filter(|(_, &s)| s > 0).collect();
    ranked.sort_by(|a, b| b.1.cmp(a.1).then(a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(m)
        .map(|(name, _)| name.clone())
        .collect()
}

fn order_frontier(frontier: &BTreeSet<EntityId>, seed: Option<u64>) -> Vec<EntityId> {
    let mut entities: Vec<EntityId> = frontier.iter().copied().collect();
    if let Some(seed) = seed {
        entities.sort_by_key(|e| {
            let mut h = DefaultHasher::new();
            (seed, e.0).hash(&mut h);
            h.finish()
        });
    }
    entities
}

/// Iterative depth-bounded retrieval: runs min(h_Q, hops-until-empty-frontier)
/// iterations starting from the topic entities and accumulates RK.
pub fn retrieve(
    g: &KnowledgeGraph,
    gateway: &Gateway,
    params: &DecodingParams,
    bundle: &QuestionBundle,
    cfg: &RetrievalConfig,
) -> Result<RetrievalState, RetrievalError> {
    let mut state = RetrievalState::default();
    for name in &bundle.question.topic_entities {
        let id = g
            .symbols()
            .entity(name)
            .ok_or_else(|| RetrievalError::UnresolvableTopicEntity(name.clone()))?;
        state.frontier.insert(id);
    }

    for hop in 1..=bundle.hops {
        if state.frontier.is_empty() {
            state.diagnostics.push(Diagnostic::EarlyTermination { hop });
            break;
        }
        state.hops_executed = hop;
        let mut endpoints: BTreeSet<EntityId> = BTreeSet::new();
        for entity in order_frontier(&state.frontier, cfg.frontier_shuffle_seed) {
            let entity_name = g.symbols().entity_name(entity).unwrap_or("?").to_owned();
            let (candidates, truncation) = gather_candidates(g, entity, cfg.candidate_cap)?;
            if let Some(d) = truncation {
                state.diagnostics.push(d);
            }
            if candidates.is_empty() {
                state.diagnostics.push(Diagnostic::NoRelations {
                    entity: entity_name,
                });
                continue;
            }
            let ballots = cast_ballots(
                gateway,
                params,
                bundle,
                entity,
                &entity_name,
                &candidates,
                cfg,
                hop,
                &mut state.diagnostics,
            )?;
            let scores = tally_votes(&ballots);
            let selected = select_top_m(&scores, cfg.m);
            let mut triples_added = Vec::new();
            for name in &selected {
                let Some(rel) = g.symbols().relation(name) else {
                    continue;
                };
                for t in g
                    .expand(entity, rel)
                    .map_err(|e| RetrievalError::UnresolvableTopicEntity(e.to_string()))?
                {
                    let anchor = if t.head == entity {
                        AnchorSide::Head
                    } else {
                        AnchorSide::Tail
                    };
                    // on a duplicate (triple, hop), by-head wins regardless of
                    // processing order
                    state
                        .rk
                        .entry((t, hop))
                        .and_modify(|a| {
                            if anchor == AnchorSide::Head {
                                *a = AnchorSide::Head;
                            }
                        })
                        .or_insert(anchor);
                    endpoints.insert(t.head);
                    endpoints.insert(t.tail);
                    triples_added.push(g.display_triple(&t));
                }
            }
            triples_added.sort();
            state.trace.push(TraceRecord {
                question_id: bundle.question.id.clone(),
                hop,
                entity: g.symbols().entity_name(entity).unwrap_or("?").to_owned(),
                candidates,
                ballots: {
                    let mut b = ballots.clone();
                    b.sort_by_key(|x| x.source);
                    b
                },
                scores: scores.clone(),
                selected,
                triples_added,
            });
            state.scoreboard.0.insert(entity, scores);
        }
        let expanded: Vec<EntityId> = state.frontier.iter().copied().collect();
        state.visited.extend(expanded);
        state.frontier = endpoints.difference(&state.visited).copied().collect();
    }
    // trace entries are emitted per entity in processing order; canonicalize
    state
        .trace
        .sort_by(|a, b| (a.hop, &a.entity).cmp(&(b.hop, &b.entity)));
    Ok(state)
}
