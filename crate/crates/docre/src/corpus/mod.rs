//! Data model for annotated documents: tokenized sentences, entity mentions,
//! gold relation facts with evidence sets, and sentence-removal views.

mod docred;
mod synth;

pub use docred::{emit_docred_json, load_docred_json, to_raw, RawDocument, RawLabel, RawMention};
pub use synth::{generate_synthetic, SynthConfig};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Reserved vocabulary id for out-of-vocabulary tokens.
pub const UNK_ID: usize = 0;
pub const UNK_SURFACE: &str = "<unk>";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub vocab_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// 0-based position within the document.
    pub index: usize,
    pub tokens: Vec<Token>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub entity_id: usize,
    pub sentence_index: usize,
    /// Half-open token span [start, end) within the sentence.
    pub start: usize,
    pub end: usize,
    pub entity_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: usize,
    pub mentions: Vec<Mention>,
    pub entity_type: String,
}

impl Entity {
    /// Canonical surface name: the first mention's text, used for Ign-F1
    /// matching across documents.
    pub fn name(&self, doc: &Document) -> String {
        let m = &self.mentions[0];
        let sent = &doc.sentences[m.sentence_index];
        sent.tokens[m.start..m.end]
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationFact {
    pub head_entity: usize,
    pub tail_entity: usize,
    pub relation_id: usize,
    /// Gold evidence sentence indices; empty when unknown.
    pub evidence: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
    pub entities: Vec<Entity>,
    pub facts: Vec<RelationFact>,
}

impl Document {
    pub fn sentence_count(&self) -> usize {
        self.sentences.len()
    }

    /// Ordered entity pairs (head != tail), the classification unit.
    pub fn ordered_pairs(&self) -> Vec<(usize, usize)> {
        let n = self.entities.len();
        let mut pairs = Vec::with_capacity(n * n.saturating_sub(1));
        for h in 0..n {
            for t in 0..n {
                if h != t {
                    pairs.push((h, t));
                }
            }
        }
        pairs
    }

    /// Gold label r_ij for one ordered pair: listed facts are 1, absent are 0.
    pub fn gold_labels(&self, pair: (usize, usize), relation_count: usize) -> Vec<f64> {
        let mut r = vec![0.0; relation_count];
        for fact in &self.facts {
            if fact.head_entity == pair.0 && fact.tail_entity == pair.1 {
                r[fact.relation_id] = 1.0;
            }
        }
        r
    }

    /// True iff some sentence contains mentions of both entities.
    pub fn is_intra_pair(&self, head: usize, tail: usize) -> bool {
        let head_sents: BTreeSet<usize> = self.entities[head]
            .mentions
            .iter()
            .map(|m| m.sentence_index)
            .collect();
        self.entities[tail]
            .mentions
            .iter()
            .any(|m| head_sents.contains(&m.sentence_index))
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.sentences.len();
        for (pos, sent) in self.sentences.iter().enumerate() {
            if sent.index != pos {
                return Err(self.invalid(format!("sentence index {} at position {pos}", sent.index)));
            }
            if sent.tokens.is_empty() {
                return Err(self.invalid(format!("sentence {pos} has no tokens")));
            }
        }
        for (pos, ent) in self.entities.iter().enumerate() {
            if ent.id != pos {
                return Err(self.invalid(format!("entity id {} at position {pos} (ids must be gapless)", ent.id)));
            }
            if ent.mentions.is_empty() {
                return Err(self.invalid(format!("entity {pos} has no mentions")));
            }
            for m in &ent.mentions {
                if m.entity_id != ent.id {
                    return Err(self.invalid(format!("mention entity id {} under entity {}", m.entity_id, ent.id)));
                }
                if m.sentence_index >= n {
                    return Err(self.invalid(format!("mention sentence index {} out of range", m.sentence_index)));
                }
                let len = self.sentences[m.sentence_index].tokens.len();
                if m.start >= m.end || m.end > len {
                    return Err(self.invalid(format!(
                        "mention span [{}, {}) out of range for sentence {} of length {len}",
                        m.start, m.end, m.sentence_index
                    )));
                }
            }
        }
        for fact in &self.facts {
            if fact.head_entity == fact.tail_entity {
                return Err(self.invalid(format!("fact with head == tail ({})", fact.head_entity)));
            }
            if fact.head_entity >= self.entities.len() || fact.tail_entity >= self.entities.len() {
                return Err(self.invalid("fact references unknown entity".to_string()));
            }
            if let Some(&ev) = fact.evidence.iter().find(|&&ev| ev >= n) {
                return Err(self.invalid(format!("evidence index {ev} out of range")));
            }
        }
        Ok(())
    }

    fn invalid(&self, msg: String) -> Error {
        Error::Validation {
            doc_id: self.doc_id.clone(),
            msg,
        }
    }
}

/// A document with a designated subset of sentences masked out. Surviving
/// sentences keep their original order and indices; mentions inside removed
/// sentences are hidden from consumers.
#[derive(Debug, Clone)]
pub struct DocumentView<'a> {
    pub base: &'a Document,
    pub removed: BTreeSet<usize>,
}

impl<'a> DocumentView<'a> {
    pub fn surviving_sentences(&self) -> impl Iterator<Item = &'a Sentence> + '_ {
        self.base
            .sentences
            .iter()
            .filter(move |s| !self.removed.contains(&s.index))
    }

    /// Surviving mentions of one entity, in document order.
    pub fn surviving_mentions(&self, entity_id: usize) -> Vec<&'a Mention> {
        self.base.entities[entity_id]
            .mentions
            .iter()
            .filter(|m| !self.removed.contains(&m.sentence_index))
            .collect()
    }
}

/// Builds a masked view of `doc`. `removed` must be a strict subset of the
/// sentence indices.
pub fn make_view(doc: &Document, removed: BTreeSet<usize>) -> Result<DocumentView<'_>> {
    let n = doc.sentence_count();
    if let Some(&bad) = removed.iter().find(|&&idx| idx >= n) {
        return Err(Error::Precondition(format!("removed sentence index {bad} out of range")));
    }
    if removed.len() >= n {
        return Err(Error::Precondition("removing every sentence leaves an empty document".into()));
    }
    Ok(DocumentView { base: doc, removed })
}

/// Sentence indices whose individual removal leaves at least one surviving
/// mention for both pair entities.
pub fn removal_candidates(doc: &Document, pair: (usize, usize)) -> BTreeSet<usize> {
    let mention_sents = |eid: usize| -> BTreeSet<usize> {
        doc.entities[eid].mentions.iter().map(|m| m.sentence_index).collect()
    };
    let head_sents = mention_sents(pair.0);
    let tail_sents = mention_sents(pair.1);
    (0..doc.sentence_count())
        .filter(|n| {
            let survives = |sents: &BTreeSet<usize>| sents.iter().any(|s| s != n);
            survives(&head_sents) && survives(&tail_sents)
        })
        .collect()
}

/// Physically rebuilds a document without the given sentences: surviving
/// sentences are reindexed from zero and mentions inside removed sentences
/// are dropped. Entity ids are preserved (an entity may end up with no
/// mentions). Used to check that masked views behave exactly like documents
/// that never contained the removed sentences.
pub fn rebuild_without(doc: &Document, removed: &BTreeSet<usize>) -> Document {
    let mut index_map = BTreeMap::new();
    let mut sentences = Vec::new();
    for sent in &doc.sentences {
        if removed.contains(&sent.index) {
            continue;
        }
        index_map.insert(sent.index, sentences.len());
        sentences.push(Sentence {
            index: sentences.len(),
            tokens: sent.tokens.clone(),
        });
    }
    let entities = doc
        .entities
        .iter()
        .map(|e| Entity {
            id: e.id,
            mentions: e
                .mentions
                .iter()
                .filter(|m| !removed.contains(&m.sentence_index))
                .map(|m| Mention {
                    sentence_index: index_map[&m.sentence_index],
                    ..m.clone()
                })
                .collect(),
            entity_type: e.entity_type.clone(),
        })
        .collect();
    let facts = doc
        .facts
        .iter()
        .map(|f| RelationFact {
            evidence: f
                .evidence
                .iter()
                .filter_map(|ev| index_map.get(ev).copied())
                .collect(),
            ..f.clone()
        })
        .collect();
    Document {
        doc_id: doc.doc_id.clone(),
        sentences,
        entities,
        facts,
    }
}

/// Token -> id map. Id 0 is reserved for unknown tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub token_to_id: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Builds the vocabulary from the training split only: unique surfaces in
    /// sorted order, ids starting at 1.
    pub fn from_training(train: &[RawDocument]) -> Self {
        let mut surfaces = BTreeSet::new();
        for doc in train {
            for sent in &doc.sents {
                for tok in sent {
                    surfaces.insert(tok.clone());
                }
            }
        }
        let token_to_id = surfaces
            .into_iter()
            .enumerate()
            .map(|(i, s)| (s, i + 1))
            .collect();
        Self { token_to_id }
    }

    pub fn id_of(&self, surface: &str) -> usize {
        self.token_to_id.get(surface).copied().unwrap_or(UNK_ID)
    }

    /// Total id space including the UNK slot.
    pub fn size(&self) -> usize {
        self.token_to_id.len() + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplit {
    pub train: Vec<Document>,
    pub dev: Vec<Document>,
    pub test: Vec<Document>,
    pub vocabulary: Vocabulary,
    /// Relation names in sorted order; `relation_id` indexes this list.
    pub relation_set: Vec<String>,
}

impl CorpusSplit {
    pub fn split(&self, name: &str) -> Result<&[Document]> {
        match name {
            "train" => Ok(&self.train),
            "dev" => Ok(&self.dev),
            "test" => Ok(&self.test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }

    /// (head name, tail name, relation id) triples over the training split,
    /// used for Ign-F1.
    pub fn train_fact_names(&self) -> BTreeSet<(String, String, usize)> {
        let mut out = BTreeSet::new();
        for doc in &self.train {
            for fact in &doc.facts {
                out.insert((
                    doc.entities[fact.head_entity].name(doc),
                    doc.entities[fact.tail_entity].name(doc),
                    fact.relation_id,
                ));
            }
        }
        out
    }

    /// Assembles a corpus from raw per-split documents: builds the vocabulary
    /// from the train split, interns relation names (sorted), and validates
    /// everything.
    pub fn assemble(
        train: Vec<RawDocument>,
        dev: Vec<RawDocument>,
        test: Vec<RawDocument>,
    ) -> Result<Self> {
        let vocabulary = Vocabulary::from_training(&train);
        let mut relation_names = BTreeSet::new();
        for doc in train.iter().chain(&dev).chain(&test) {
            for label in &doc.labels {
                relation_names.insert(label.r.clone());
            }
        }
        let relation_set: Vec<String> = relation_names.into_iter().collect();
        let rel_id: BTreeMap<&str, usize> = relation_set
            .iter()
            .enumerate()
            .map(|(i, r)| (r.as_str(), i))
            .collect();
        let realize = |docs: Vec<RawDocument>| -> Result<Vec<Document>> {
            docs.into_iter()
                .map(|raw| raw.into_document(&vocabulary, &rel_id))
                .collect()
        };
        let split = CorpusSplit {
            train: realize(train)?,
            dev: realize(dev)?,
            test: realize(test)?,
            vocabulary,
            relation_set,
        };
        for doc in split.train.iter().chain(&split.dev).chain(&split.test) {
            doc.validate()?;
        }
        Ok(split)
    }
}
