//! Synthetic corpus generation with planted evidence. Every fact records
//! exactly the sentences that realize it, so evidence ground truth is known
//! by construction and the evidence-prediction metrics have an exact target.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::config::KvConfig;
use crate::seeds::substream;
use crate::{Error, Result};

use super::{CorpusSplit, RawDocument, RawLabel, RawMention};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub train_docs: usize,
    pub dev_docs: usize,
    pub test_docs: usize,
    pub sentences_min: usize,
    pub sentences_max: usize,
    pub entities_min: usize,
    pub entities_max: usize,
    pub relation_count: usize,
    /// Fraction of sentences per document that carry no fact.
    pub distractor_ratio: f64,
    /// Fraction of facts realized across two bridged sentences.
    pub two_sentence_fraction: f64,
    /// Size of the shared entity-name pool (names recur across documents).
    pub entity_pool: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            train_docs: 200,
            dev_docs: 50,
            test_docs: 50,
            sentences_min: 4,
            sentences_max: 8,
            entities_min: 3,
            entities_max: 6,
            relation_count: 6,
            distractor_ratio: 0.4,
            two_sentence_fraction: 0.3,
            entity_pool: 40,
        }
    }
}

impl SynthConfig {
    /// Consumes the generator's keys from a parsed key=value config.
    pub fn from_kv(cfg: &mut KvConfig) -> Result<Self> {
        let d = Self::default();
        let out = Self {
            seed: cfg.take("seed", d.seed)?,
            train_docs: cfg.take("train_docs", d.train_docs)?,
            dev_docs: cfg.take("dev_docs", d.dev_docs)?,
            test_docs: cfg.take("test_docs", d.test_docs)?,
            sentences_min: cfg.take("sentences_min", d.sentences_min)?,
            sentences_max: cfg.take("sentences_max", d.sentences_max)?,
            entities_min: cfg.take("entities_min", d.entities_min)?,
            entities_max: cfg.take("entities_max", d.entities_max)?,
            relation_count: cfg.take("relation_count", d.relation_count)?,
            distractor_ratio: cfg.take("distractor_ratio", d.distractor_ratio)?,
            two_sentence_fraction: cfg.take("two_sentence_fraction", d.two_sentence_fraction)?,
            entity_pool: cfg.take("entity_pool", d.entity_pool)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.relation_count < 2 {
            return Err(Error::Config("relation_count must be at least 2".into()));
        }
        if self.sentences_min == 0 || self.sentences_min > self.sentences_max {
            return Err(Error::Config("invalid sentences range".into()));
        }
        if self.entities_min < 2 || self.entities_min > self.entities_max {
            return Err(Error::Config("entities range must start at 2 or more".into()));
        }
        if self.entity_pool < self.entities_max {
            return Err(Error::Config("entity_pool smaller than entities_max".into()));
        }
        if !(0.0..=1.0).contains(&self.distractor_ratio) {
            return Err(Error::Config("distractor_ratio must be in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.two_sentence_fraction) {
            return Err(Error::Config("two_sentence_fraction must be in [0, 1]".into()));
        }
        if self.train_docs == 0 {
            return Err(Error::Config("train_docs must be positive".into()));
        }
        Ok(())
    }

    pub fn relation_name(&self, j: usize) -> String {
        format!("rel{j:02}")
    }
}

const ENTITY_TYPES: [&str; 3] = ["PER", "ORG", "LOC"];
const FILLERS: [&str; 8] = [
    "alpha", "beta", "gamma", "delta", "omega", "sigma", "kappa", "theta",
];

/// One planned sentence before indices are assigned: the token surfaces plus
/// (entity id, token position) mention anchors.
struct SentencePlan {
    tokens: Vec<String>,
    mentions: Vec<(usize, usize)>,
    /// Index into the fact list this sentence evidences, if any.
    fact: Option<usize>,
}

struct FactPlan {
    head: usize,
    tail: usize,
    relation: usize,
}

/// Generates a full corpus deterministically from the config seed.
pub fn generate_synthetic(config: &SynthConfig) -> Result<CorpusSplit> {
    config.validate()?;
    let mut rng = substream(config.seed, "generate");
    let pool: Vec<(String, String)> = (0..config.entity_pool)
        .map(|i| {
            (
                format!("ent{i:03}"),
                ENTITY_TYPES[i % ENTITY_TYPES.len()].to_string(),
            )
        })
        .collect();
    let gen_split = |name: &str, count: usize, rng: &mut ChaCha8Rng| -> Vec<RawDocument> {
        (0..count)
            .map(|i| generate_document(config, &pool, format!("{name}-{i:04}"), rng))
            .collect()
    };
    let train = gen_split("train", config.train_docs, &mut rng);
    let dev = gen_split("dev", config.dev_docs, &mut rng);
    let test = gen_split("test", config.test_docs, &mut rng);
    CorpusSplit::assemble(train, dev, test)
}

fn generate_document(
    config: &SynthConfig,
    pool: &[(String, String)],
    doc_id: String,
    rng: &mut ChaCha8Rng,
) -> RawDocument {
    let n_sents = rng.gen_range(config.sentences_min..=config.sentences_max);
    let n_entities = rng.gen_range(config.entities_min..=config.entities_max);
    let entity_pool_ids =
        rand::seq::index::sample(rng, pool.len(), n_entities).into_vec();

    let n_evidence = ((n_sents as f64) * (1.0 - config.distractor_ratio)).round() as usize;
    let n_evidence = n_evidence.clamp(1, n_sents);

    let mut facts: Vec<FactPlan> = Vec::new();
    let mut plans: Vec<SentencePlan> = Vec::new();
    let mut budget = n_evidence;
    let mut attempts = 0;
    while budget > 0 && attempts < 200 {
        attempts += 1;
        let head = rng.gen_range(0..n_entities);
        let tail = rng.gen_range(0..n_entities);
        if head == tail {
            continue;
        }
        let relation = rng.gen_range(0..config.relation_count);
        if facts
            .iter()
            .any(|f| f.head == head && f.tail == tail && f.relation == relation)
        {
            continue;
        }
        let two_sentence = budget >= 2
            && n_entities >= 3
            && rng.gen_bool(config.two_sentence_fraction);
        let fact_idx = facts.len();
        facts.push(FactPlan {
            head,
            tail,
            relation,
        });
        if two_sentence {
            let bridge = loop {
                let b = rng.gen_range(0..n_entities);
                if b != head && b != tail {
                    break b;
                }
            };
            plans.push(SentencePlan {
                tokens: vec![
                    name(pool, &entity_pool_ids, head),
                    format!("lnk{:02}a", relation),
                    name(pool, &entity_pool_ids, bridge),
                ],
                mentions: vec![(head, 0), (bridge, 2)],
                fact: Some(fact_idx),
            });
            plans.push(SentencePlan {
                tokens: vec![
                    name(pool, &entity_pool_ids, bridge),
                    format!("lnk{:02}b", relation),
                    name(pool, &entity_pool_ids, tail),
                ],
                mentions: vec![(bridge, 0), (tail, 2)],
                fact: Some(fact_idx),
            });
            budget -= 2;
        } else {
            let filler = FILLERS[rng.gen_range(0..FILLERS.len())].to_string();
            plans.push(SentencePlan {
                tokens: vec![
                    name(pool, &entity_pool_ids, head),
                    format!("trig{:02}", relation),
                    name(pool, &entity_pool_ids, tail),
                    filler,
                ],
                mentions: vec![(head, 0), (tail, 2)],
                fact: Some(fact_idx),
            });
            budget -= 1;
        }
    }

    // Distractors: half mention unrelated entities with filler verbs, half
    // are pure filler with no mentions at all.
    for _ in plans.len()..n_sents {
        if rng.gen_bool(0.5) {
            let a = rng.gen_range(0..n_entities);
            let b = rng.gen_range(0..n_entities);
            let mut tokens = vec![
                name(pool, &entity_pool_ids, a),
                FILLERS[rng.gen_range(0..FILLERS.len())].to_string(),
            ];
            let mut mentions = vec![(a, 0)];
            if b != a && rng.gen_bool(0.5) {
                mentions.push((b, tokens.len()));
                tokens.push(name(pool, &entity_pool_ids, b));
            }
            tokens.push(FILLERS[rng.gen_range(0..FILLERS.len())].to_string());
            plans.push(SentencePlan {
                tokens,
                mentions,
                fact: None,
            });
        } else {
            let len = rng.gen_range(3..=5);
            let tokens = (0..len)
                .map(|_| FILLERS[rng.gen_range(0..FILLERS.len())].to_string())
                .collect();
            plans.push(SentencePlan {
                tokens,
                mentions: Vec::new(),
                fact: None,
            });
        }
    }

    plans.shuffle(rng);

    // Keep only entities that ended up mentioned, renumbering ids densely.
    let mut used = vec![false; n_entities];
    for plan in &plans {
        for &(eid, _) in &plan.mentions {
            used[eid] = true;
        }
    }
    let mut remap = vec![usize::MAX; n_entities];
    let mut kept = Vec::new();
    for (eid, &u) in used.iter().enumerate() {
        if u {
            remap[eid] = kept.len();
            kept.push(eid);
        }
    }

    let mut vertex_set: Vec<Vec<RawMention>> = vec![Vec::new(); kept.len()];
    let mut evidence: Vec<Vec<usize>> = vec![Vec::new(); facts.len()];
    for (sent_id, plan) in plans.iter().enumerate() {
        for &(eid, pos) in &plan.mentions {
            let (ref nm, ref ty) = pool[entity_pool_ids[eid]];
            vertex_set[remap[eid]].push(RawMention {
                name: nm.clone(),
                sent_id,
                pos: [pos, pos + 1],
                entity_type: ty.clone(),
            });
        }
        if let Some(f) = plan.fact {
            evidence[f].push(sent_id);
        }
    }

    let labels = facts
        .iter()
        .enumerate()
        .map(|(f, fact)| {
            let mut ev = evidence[f].clone();
            ev.sort_unstable();
            RawLabel {
                h: remap[fact.head],
                t: remap[fact.tail],
                r: config.relation_name(fact.relation),
                evidence: ev,
            }
        })
        .collect();

    RawDocument {
        title: doc_id,
        sents: plans.into_iter().map(|p| p.tokens).collect(),
        vertex_set,
        labels,
    }
}

fn name(pool: &[(String, String)], ids: &[usize], eid: usize) -> String {
    pool[ids[eid]].0.clone()
}
