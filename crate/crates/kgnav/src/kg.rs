//! In-memory knowledge graph: interned triples with head- and tail-indexed
//! adjacency. Immutable after load; all queries are pure reads.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KgError {
    #[error("line {line}: expected `subject|relation|object`, got {fields} fields")]
    MalformedLine { line: usize, fields: usize },
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
    #[error("unknown entity: {0}")]
    UnknownEntity(String),
    #[error("unknown entity id: {0:?}")]
    UnknownEntityId(EntityId),
    #[error("unknown relation id: {0:?}")]
    UnknownRelationId(RelationId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

/// Bidirectional name <-> dense id maps for entities and relations.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    entity_names: Vec<String>,
    entity_ids: HashMap<String, EntityId>,
    relation_names: Vec<String>,
    relation_ids: HashMap<String, RelationId>,
}

impl SymbolTable {
    pub fn intern_entity(&mut self, name: &str) -> EntityId {
        if let Some(&id) = self.entity_ids.get(name) {
            return id;
        }
        let id = EntityId(self.entity_names.len() as u32);
        self.entity_names.push(name.to_owned());
        self.entity_ids.insert(name.to_owned(), id);
        id
    }

    pub fn intern_relation(&mut self, name: &str) -> RelationId {
        if let Some(&id) = self.relation_ids.get(name) {
            return id;
        }
        let id = RelationId(self.relation_names.len() as u32);
        self.relation_names.push(name.to_owned());
        self.relation_ids.insert(name.to_owned(), id);
        id
    }

    pub fn entity(&self, name: &str) -> Option<EntityId> {
        self.entity_ids.get(name).copied()
    }

    pub fn relation(&self, name: &str) -> Option<RelationId> {
        self.relation_ids.get(name).copied()
    }

    pub fn entity_name(&self, id: EntityId) -> Option<&str> {
        self.entity_names.get(id.0 as usize).map(String::as_str)
    }

    pub fn relation_name(&self, id: RelationId) -> Option<&str> {
        self.relation_names.get(id.0 as usize).map(String::as_str)
    }

    pub fn entity_count(&self) -> usize {
        self.entity_names.len()
    }

    pub fn relation_count(&self) -> usize {
        self.relation_names.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Outgoing,
    Incoming,
}

/// A relation incident to an entity, tagged with the side on which the
/// entity appears. The presentation name shown to the oracle is the bare
/// relation name regardless of direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectedRelation {
    pub relation: RelationId,
    pub direction: Direction,
}

/// Immutable triple store with per-entity outgoing and incoming adjacency.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct KnowledgeGraph {
    triples: HashSet<Triple>,
    out_index: Vec<Vec<(RelationId, EntityId)>>,
    in_index: Vec<Vec<(RelationId, EntityId)>>,
    symbols: SymbolTable,
}

impl KnowledgeGraph {
    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    pub fn entity_count(&self) -> usize {
        self.symbols.entity_count()
    }

    pub fn relation_count(&self) -> usize {
        self.symbols.relation_count()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triples.contains(t)
    }

    pub fn triples(&self) -> impl Iterator<Item = &Triple> {
        self.triples.iter()
    }

    fn check_entity(&self, entity: EntityId) -> Result<(), KgError> {
        if (entity.0 as usize) < self.symbols.entity_count() {
            Ok(())
        } else {
            Err(KgError::UnknownEntityId(entity))
        }
    }

    /// All relations incident to `entity`, deduplicated by (relation,
    /// direction), ordered by relation name ascending with outgoing before
    /// incoming.
    pub fn relations_of(&self, entity: EntityId) -> Result<Vec<DirectedRelation>, KgError> {
        self.check_entity(entity)?;
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for &(rel, _) in &self.out_index[entity.0 as usize] {
            if seen.insert((rel, Direction::Outgoing)) {
                out.push(DirectedRelation {
                    relation: rel,
                    direction: Direction::Outgoing,
                });
            }
        }
        for &(rel, _) in &self.in_index[entity.0 as usize] {
            if seen.insert((rel, Direction::Incoming)) {
                out.push(DirectedRelation {
                    relation: rel,
                    direction: Direction::Incoming,
                });
            }
        }
        out.sort_by(|a, b| {
            let an = self.symbols.relation_name(a.relation).unwrap_or("");
            let bn = self.symbols.relation_name(b.relation).unwrap_or("");
            an.cmp(bn).then(a.direction.cmp(&b.direction))
        });
        Ok(out)
    }

    /// All triples with `relation` where `entity` appears as head, followed
    /// by all where it appears as tail. A self-loop is reported once.
    pub fn expand(&self, entity: EntityId, relation: RelationId) -> Result<Vec<Triple>, KgError> {
        self.check_entity(entity)?;
        if (relation.0 as usize) >= self.symbols.relation_count() {
            return Err(KgError::UnknownRelationId(relation));
        }
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for &(rel, tail) in &self.out_index[entity.0 as usize] {
            if rel == relation {
                let t = Triple {
                    head: entity,
                    relation: rel,
                    tail,
                };
                if seen.insert(t) {
                    out.push(t);
                }
            }
        }
        for &(rel, head) in &self.in_index[entity.0 as usize] {
            if rel == relation {
                let t = Triple {
                    head,
                    relation: rel,
                    tail: entity,
                };
                if seen.insert(t) {
                    out.push(t);
                }
            }
        }
        Ok(out)
    }

    pub fn display_triple(&self, t: &Triple) -> String {
        format!(
            "({}, {}, {})",
            self.symbols.entity_name(t.head).unwrap_or("?"),
            self.symbols.relation_name(t.relation).unwrap_or("?"),
            self.symbols.entity_name(t.tail).unwrap_or("?"),
        )
    }
}

impl fmt::Display for KnowledgeGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} entities, {} relations, {} triples",
            self.entity_count(),
            self.relation_count(),
            self.triple_count()
        )
    }
}

/// Builds a graph incrementally, then freezes it into a [`KnowledgeGraph`].
#[derive(Debug, Default)]
pub struct GraphBuilder {
    symbols: SymbolTable,
    triples: HashSet<Triple>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Interns an entity without any triple (useful for isolated nodes).
    pub fn add_entity(&mut self, name: &str) -> EntityId {
        self.symbols.intern_entity(name)
    }

    pub fn add(&mut self, head: &str, relation: &str, tail: &str) {
        let h = self.symbols.intern_entity(head);
        let r = self.symbols.intern_relation(relation);
        let t = self.symbols.intern_entity(tail);
        self.triples.insert(Triple {
            head: h,
            relation: r,
            tail: t,
        });
    }

    pub fn build(self) -> KnowledgeGraph {
        let n = self.symbols.entity_count();
        let mut out_index = vec![Vec::new(); n];
        let mut in_index = vec![Vec::new(); n];
        for t in &self.triples {
            out_index[t.head.0 as usize].push((t.relation, t.tail));
            in_index[t.tail.0 as usize].push((t.relation, t.head));
        }
        for list in out_index.iter_mut().chain(in_index.iter_mut()) {
            list.sort();
            list.dedup();
        }
        KnowledgeGraph {
            triples: self.triples,
            out_index,
            in_index,
            symbols: self.symbols,
        }
    }
}

/// Loads a MetaQA-style kb file: one `subject|relation|object` per line,
/// UTF-8, duplicate lines collapse. Empty input yields an empty graph.
pub fn load_metaqa_kb<R: BufRead>(reader: R) -> Result<KnowledgeGraph, KgError> {
    let mut builder = GraphBuilder::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 3 {
            return Err(KgError::MalformedLine {
                line: i + 1,
                fields: fields.len(),
            });
        }
        builder.add(fields[0], fields[1], fields[2]);
    }
    Ok(builder.build())
}
