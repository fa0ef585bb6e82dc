//! Shared test fixtures: the case-study mini-graph and synthetic corpus
//! generators whose gold paths exist by construction.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use kgnav::kg::{GraphBuilder, KnowledgeGraph};
use kgnav::llm::OracleEntry;
use kgnav::question::{parse_topic_entities, Question};

/// The Babaloo Mandel mini-graph.
pub fn case_study_graph() -> KnowledgeGraph {
    let mut b = GraphBuilder::new();
    b.add("Babaloo Mandel", "birth_year", "1954");
    b.add("Babaloo Mandel", "birth_place", "USA");
    b.add("Splash", "written_by", "Babaloo Mandel");
    b.add("Parenthood", "written_by", "Babaloo Mandel");
    b.add("Multiplicity", "created_by", "Babaloo Mandel");
    b.add("Splash", "starred_actors", "Tom Hanks");
    b.add("Splash", "starred_actors", "Dary Hannah");
    b.add("Parenthood", "starred_actors", "Dianne Wiest");
    b.add("Parenthood", "starred_actors", "Tom Hanks");
    b.build()
}

pub fn make_question(id: &str, raw: &str, gold: &[String], hops: usize) -> Question {
    let (text, topic_entities) = parse_topic_entities(raw).unwrap();
    Question {
        id: id.to_owned(),
        raw: raw.to_owned(),
        text,
        topic_entities,
        gold_answers: gold.to_vec(),
        hop_label: Some(hops),
    }
}

/// A random KG plus questions whose gold relation paths exist by
/// construction, and the oracle sidecar entries that script them.
pub struct SyntheticCase {
    pub graph: KnowledgeGraph,
    pub questions: Vec<Question>,
    pub sidecar: Vec<OracleEntry>,
}

/// Mirrors the engine's frontier semantics with a plain traversal: at each
/// hop, follow one relation in both directions from the frontier, excluding
/// already-expanded entities.
pub fn gold_path_traversal(
    triples: &[(String, String, String)],
    start: &str,
    path: &[String],
) -> BTreeSet<String> {
    let mut frontier: BTreeSet<String> = [start.to_owned()].into();
    let mut visited: BTreeSet<String> = BTreeSet::new();
    for relation in path {
        let mut endpoints = BTreeSet::new();
        for (h, r, t) in triples {
            if r != relation {
                continue;
            }
            if frontier.contains(h) {
                endpoints.insert(h.clone());
                endpoints.insert(t.clone());
            }
            if frontier.contains(t) {
                endpoints.insert(h.clone());
                endpoints.insert(t.clone());
            }
        }
        visited.extend(frontier.iter().cloned());
        frontier = endpoints.difference(&visited).cloned().collect();
    }
    frontier
}

/// Builds a random graph of 50-200 entities and 5-15 relations, with
/// `questions_per_hop` questions for each hop count 1..=3. Every question
/// has an explicit gold path; its gold answers come from an independent
/// traversal of that path.
pub fn synthetic_case(seed: u64, questions_per_hop: usize) -> SyntheticCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_entities = rng.gen_range(50..=200);
    let n_relations = rng.gen_range(5..=15);
    let entity = |i: usize| format!("ent{i:03}");
    let relation = |i: usize| format!("rel{i:02}");

    let mut triples: BTreeSet<(String, String, String)> = BTreeSet::new();
    // noise edges
    for _ in 0..n_entities * 2 {
        let h = rng.gen_range(0..n_entities);
        let t = rng.gen_range(0..n_entities);
        let r = rng.gen_range(0..n_relations);
        if h != t {
            triples.insert((entity(h), relation(r), entity(t)));
        }
    }

    let mut questions = Vec::new();
    let mut sidecar = Vec::new();
    let mut pending: Vec<(String, Vec<String>, usize, usize)> = Vec::new();
    for hops in 1..=3usize {
        // oversample: a few candidate paths end up with an empty answer set
        // once the noise edges are layered in
        for q in 0..questions_per_hop * 2 {
            // explicit gold path over pairwise-distinct chain nodes
            let start = rng.gen_range(0..n_entities);
            let mut chain = vec![start];
            let mut path = Vec::new();
            for _ in 0..hops {
                let r = rng.gen_range(0..n_relations);
                let mut next = rng.gen_range(0..n_entities);
                while chain.contains(&next) {
                    next = (next + 1) % n_entities;
                }
                triples.insert((entity(*chain.last().unwrap()), relation(r), entity(next)));
                path.push(relation(r));
                chain.push(next);
            }
            pending.push((format!("synthetic:{hops}hop:{q}"), path, hops, start));
        }
    }

    let all_triples: Vec<(String, String, String)> = triples.iter().cloned().collect();
    let mut kept_per_hop = [0usize; 4];
    for (id, path, hops, start) in pending {
        if kept_per_hop[hops] >= questions_per_hop {
            continue;
        }
        let topic = entity(start);
        let answers: Vec<String> = gold_path_traversal(&all_triples, &topic, &path)
            .into_iter()
            .collect();
        if answers.is_empty() {
            continue;
        }
        kept_per_hop[hops] += 1;
        let raw = format!(
            "which entities are reached from [{topic}] following {}",
            path.join(" then ")
        );
        questions.push(make_question(&id, &raw, &answers, hops));
        sidecar.push(OracleEntry {
            question_id: id,
            gold_relations: path,
            gold_answers: answers,
        });
    }
    for (hops, kept) in kept_per_hop.iter().enumerate().skip(1) {
        assert_eq!(
            *kept, questions_per_hop,
            "seed {seed} produced too few viable {hops}-hop questions"
        );
    }

    let mut b = GraphBuilder::new();
    for (h, r, t) in &triples {
        b.add(h, r, t);
    }
    SyntheticCase {
        graph: b.build(),
        questions,
        sidecar,
    }
}

/// A deterministic MetaQA-style movie corpus: kb text plus 1-hop questions
/// phrased so their wording overlaps the gold relation name.
pub struct MovieCorpus {
    pub kb_text: String,
    pub qa_text: String,
}

pub fn movie_corpus(seed: u64, n_questions: usize) -> MovieCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_movies = 40;
    let movie = |i: usize| format!("Movie {i}");
    let directors: Vec<String> = (0..12).map(|i| format!("Director {i}")).collect();
    let writers: Vec<String> = (0..12).map(|i| format!("Writer {i}")).collect();
    let actors: Vec<String> = (0..25).map(|i| format!("Actor {i}")).collect();
    let years: Vec<String> = (1980..2020).map(|y| y.to_string()).collect();
    let languages = ["English", "French", "Spanish", "German"];
    let genres = ["Comedy", "Drama", "Thriller", "Romance"];

    let mut kb = String::new();
    let mut facts: Vec<(usize, &str, Vec<String>)> = Vec::new();
    for m in 0..n_movies {
        let d = directors.choose(&mut rng).unwrap().clone();
        let w = writers.choose(&mut rng).unwrap().clone();
        let mut cast: Vec<String> = actors.choose_multiple(&mut rng, 3).cloned().collect();
        cast.sort();
        let y = years.choose(&mut rng).unwrap().clone();
        let l = languages.choose(&mut rng).unwrap().to_string();
        let g = genres.choose(&mut rng).unwrap().to_string();
        kb.push_str(&format!("{}|directed_by|{d}\n", movie(m)));
        kb.push_str(&format!("{}|written_by|{w}\n", movie(m)));
        for a in &cast {
            kb.push_str(&format!("{}|starred_actors|{a}\n", movie(m)));
        }
        kb.push_str(&format!("{}|release_year|{y}\n", movie(m)));
        kb.push_str(&format!("{}|in_language|{l}\n", movie(m)));
        kb.push_str(&format!("{}|has_genre|{g}\n", movie(m)));
        facts.push((m, "directed_by", vec![d]));
        facts.push((m, "written_by", vec![w]));
        facts.push((m, "starred_actors", cast));
        facts.push((m, "release_year", vec![y]));
        facts.push((m, "in_language", vec![l]));
        facts.push((m, "has_genre", vec![g]));
    }

    let mut qa = String::new();
    for _ in 0..n_questions {
        let (m, relation, gold) = facts.choose(&mut rng).unwrap();
        let text = match *relation {
            "directed_by" => format!("who directed the movie [{}]", movie(*m)),
            "written_by" => format!("which person written by credits appear on [{}]", movie(*m)),
            "starred_actors" => format!("who starred in the movie [{}]", movie(*m)),
            "release_year" => format!("what release year does the movie [{}] have", movie(*m)),
            "in_language" => format!("what language is the movie [{}] in", movie(*m)),
            _ => format!("what genre is the movie [{}]", movie(*m)),
        };
        qa.push_str(&format!("{text}\t{}\n", gold.join("|")));
    }
    MovieCorpus {
        kb_text: kb,
        qa_text: qa,
    }
}
