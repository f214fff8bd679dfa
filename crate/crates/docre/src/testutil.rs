//! Shared fixture builders for unit tests.

use crate::corpus::{Document, Entity, Mention, RelationFact, Sentence, Token};

/// Builds a document from raw vocab ids. `mentions[e]` lists
/// (sentence, start, end) spans for entity `e`.
pub(crate) fn build_doc(
    sents: Vec<Vec<usize>>,
    mentions: Vec<Vec<(usize, usize, usize)>>,
    facts: Vec<(usize, usize, usize, Vec<usize>)>,
) -> Document {
    let sentences = sents
        .into_iter()
        .enumerate()
        .map(|(index, ids)| Sentence {
            index,
            tokens: ids
                .into_iter()
                .map(|vocab_id| Token {
                    surface: format!("t{vocab_id}"),
                    vocab_id,
                })
                .collect(),
        })
        .collect();
    let entities = mentions
        .into_iter()
        .enumerate()
        .map(|(id, spans)| Entity {
            id,
            mentions: spans
                .into_iter()
                .map(|(sentence_index, start, end)| Mention {
                    entity_id: id,
                    sentence_index,
                    start,
                    end,
                    entity_type: "PER".into(),
                })
                .collect(),
            entity_type: "PER".into(),
        })
        .collect();
    let facts = facts
        .into_iter()
        .map(|(head_entity, tail_entity, relation_id, ev)| RelationFact {
            head_entity,
            tail_entity,
            relation_id,
            evidence: ev.into_iter().collect(),
        })
        .collect();
    Document {
        doc_id: "fixture".into(),
        sentences,
        entities,
        facts,
    }
}

/// A 4-sentence, 3-entity document with one intra and one inter fact.
/// Every sentence keeps a surviving mention for entities 0 and 1 when any
/// single sentence is removed.
pub(crate) fn fixture_doc() -> Document {
    build_doc(
        vec![vec![1, 2, 3], vec![4, 1, 5], vec![6, 7], vec![2, 5, 3, 6]],
        vec![
            vec![(0, 0, 1), (1, 1, 2)],
            vec![(1, 0, 1), (3, 1, 2)],
            vec![(3, 0, 1)],
        ],
        vec![(0, 1, 0, vec![1]), (1, 2, 1, vec![1, 3])],
    )
}
