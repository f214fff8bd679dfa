//! DocRED-format JSON ingestion and emission. The on-disk shape is an array
//! of documents with `title`, `sents`, `vertexSet`, and `labels` fields;
//! emission is byte-stable (fixed key order, UTF-8, trailing newline).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::{Document, Entity, Mention, RelationFact, Sentence, Token, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawMention {
    pub name: String,
    pub sent_id: usize,
    /// [start, end) token span.
    pub pos: [usize; 2],
    #[serde(rename = "type")]
    pub entity_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawLabel {
    pub h: usize,
    pub t: usize,
    pub r: String,
    #[serde(default)]
    pub evidence: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub title: String,
    pub sents: Vec<Vec<String>>,
    #[serde(rename = "vertexSet")]
    pub vertex_set: Vec<Vec<RawMention>>,
    pub labels: Vec<RawLabel>,
}

impl RawDocument {
    pub(super) fn into_document(
        self,
        vocab: &Vocabulary,
        rel_id: &BTreeMap<&str, usize>,
    ) -> Result<Document> {
        let doc_id = self.title.clone();
        let invalid = |msg: String| Error::Validation {
            doc_id: doc_id.clone(),
            msg,
        };
        let sentences: Vec<Sentence> = self
            .sents
            .iter()
            .enumerate()
            .map(|(index, toks)| Sentence {
                index,
                tokens: toks
                    .iter()
                    .map(|s| Token {
                        surface: s.clone(),
                        vocab_id: vocab.id_of(s),
                    })
                    .collect(),
            })
            .collect();
        let entities: Vec<Entity> = self
            .vertex_set
            .iter()
            .enumerate()
            .map(|(id, mentions)| -> Result<Entity> {
                let mentions: Vec<Mention> = mentions
                    .iter()
                    .map(|m| -> Result<Mention> {
                        if m.sent_id >= sentences.len() {
                            return Err(invalid(format!(
                                "mention {:?} references sentence {} of {}",
                                m.name,
                                m.sent_id,
                                sentences.len()
                            )));
                        }
                        let len = sentences[m.sent_id].tokens.len();
                        if m.pos[0] >= m.pos[1] || m.pos[1] > len {
                            return Err(invalid(format!(
                                "mention {:?} span [{}, {}) out of range for sentence {} of length {len}",
                                m.name, m.pos[0], m.pos[1], m.sent_id
                            )));
                        }
                        Ok(Mention {
                            entity_id: id,
                            sentence_index: m.sent_id,
                            start: m.pos[0],
                            end: m.pos[1],
                            entity_type: m.entity_type.clone(),
                        })
                    })
                    .collect::<Result<_>>()?;
                let entity_type = mentions
                    .first()
                    .map(|m| m.entity_type.clone())
                    .unwrap_or_default();
                Ok(Entity {
                    id,
                    mentions,
                    entity_type,
                })
            })
            .collect::<Result<_>>()?;
        let facts: Vec<RelationFact> = self
            .labels
            .iter()
            .map(|l| -> Result<RelationFact> {
                if l.h == l.t {
                    return Err(invalid(format!("label with h == t ({})", l.h)));
                }
                Ok(RelationFact {
                    head_entity: l.h,
                    tail_entity: l.t,
                    relation_id: *rel_id
                        .get(l.r.as_str())
                        .expect("relation interned before realization"),
                    evidence: l.evidence.iter().copied().collect(),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Document {
            doc_id,
            sentences,
            entities,
            facts,
        })
    }
}

/// Converts a realized document back to the raw on-disk shape.
pub fn to_raw(doc: &Document, relation_set: &[String]) -> RawDocument {
    RawDocument {
        title: doc.doc_id.clone(),
        sents: doc
            .sentences
            .iter()
            .map(|s| s.tokens.iter().map(|t| t.surface.clone()).collect())
            .collect(),
        vertex_set: doc
            .entities
            .iter()
            .map(|e| {
                e.mentions
                    .iter()
                    .map(|m| RawMention {
                        name: doc.sentences[m.sentence_index].tokens[m.start..m.end]
                            .iter()
                            .map(|t| t.surface.as_str())
                            .collect::<Vec<_>>()
                            .join(" "),
                        sent_id: m.sentence_index,
                        pos: [m.start, m.end],
                        entity_type: m.entity_type.clone(),
                    })
                    .collect()
            })
            .collect(),
        labels: doc
            .facts
            .iter()
            .map(|f| RawLabel {
                h: f.head_entity,
                t: f.tail_entity,
                r: relation_set[f.relation_id].clone(),
                evidence: f.evidence.iter().copied().collect(),
            })
            .collect(),
    }
}

/// Loads one split file: a JSON array of DocRED documents.
pub fn load_docred_json(path: &Path) -> Result<Vec<RawDocument>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let values: Vec<serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            index: 0,
            msg: e.to_string(),
        })?;
    values
        .into_iter()
        .enumerate()
        .map(|(index, value)| {
            serde_json::from_value(value).map_err(|e| Error::Parse {
                path: path.display().to_string(),
                index,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// Writes one split file byte-stably: pretty JSON with fixed struct key
/// order and a trailing newline.
pub fn emit_docred_json(path: &Path, docs: &[RawDocument]) -> Result<()> {
    let mut text = serde_json::to_string_pretty(docs)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}
