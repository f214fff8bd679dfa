//! Sentence importance estimation and the sentence focusing losses.
//!
//! The importance score compares the predicted probability on the full
//! document with the probability after removing one sentence; sentences
//! scoring below the `beta` threshold are treated as non-evidence, and the
//! focusing losses penalize any prediction change when non-evidence
//! sentences are removed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use rand::Rng;

use crate::corpus::{make_view, removal_candidates, Document};
use crate::model::{backward, forward, GradientAccumulator, ModelState};
use crate::{Error, Result};

/// Subset-enumeration guard for the exact loss: 2^12 views per (pair,
/// relation) is the most we are willing to forward.
pub const EXACT_SUBSET_GUARD: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossVariant {
    ExactSubsets,
    Linearized,
    MonteCarlo,
}

impl std::str::FromStr for LossVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact_subsets" => Ok(Self::ExactSubsets),
            "linearized" => Ok(Self::Linearized),
            "monte_carlo" => Ok(Self::MonteCarlo),
            other => Err(Error::Config(format!("unknown loss_variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetGradient {
    /// Gradient propagates to both the full-document and removed-view terms.
    Both,
    /// The full-document probability is treated as a constant target.
    Detached,
}

impl std::str::FromStr for TargetGradient {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Self::Both),
            "detached" => Ok(Self::Detached),
            other => Err(Error::Config(format!("unknown target_gradient {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonEvidenceSource {
    /// Importance-score thresholding (the default).
    Score,
    /// Random half of the sentences.
    RandHalf,
    /// Sentences without any entity mention.
    NoMention,
    /// Score-based sets, but the removed view learns from groundtruth labels
    /// instead of the soft full-document prediction.
    GtruthTarget,
}

impl std::str::FromStr for NonEvidenceSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "score" => Ok(Self::Score),
            "rand_half" => Ok(Self::RandHalf),
            "no_mention" => Ok(Self::NoMention),
            "gtruth_target" => Ok(Self::GtruthTarget),
            other => Err(Error::Config(format!("unknown nonevidence_source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SiefConfig {
    pub beta: f64,
    pub loss_variant: LossVariant,
    pub target_gradient: TargetGradient,
    pub nonevidence_source: NonEvidenceSource,
}

impl Default for SiefConfig {
    fn default() -> Self {
        Self {
            beta: 0.8,
            loss_variant: LossVariant::MonteCarlo,
            target_gradient: TargetGradient::Both,
            nonevidence_source: NonEvidenceSource::Score,
        }
    }
}

/// Importance of one sentence for one (pair, relation): p * ln(p / p_hat).
/// Strictly decreasing in `p_removed`, zero iff the probabilities agree,
/// negative when removal increases the probability.
pub fn importance_score(p_full: f64, p_removed: f64) -> f64 {
    p_full * (p_full / p_removed).ln()
}

/// Importance scores g[pair][relation][sentence], defined only for removal
/// candidates (and only for scored sentences when the table is partial).
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceTable {
    pub doc_id: String,
    pub relation_count: usize,
    /// pair -> per-relation map from sentence index to score.
    entries: BTreeMap<(usize, usize), Vec<BTreeMap<usize, f64>>>,
    /// pair -> removal candidates.
    candidates: BTreeMap<(usize, usize), BTreeSet<usize>>,
}

impl ImportanceTable {
    pub fn get(&self, pair: (usize, usize), relation: usize, sentence: usize) -> Option<f64> {
        self.entries.get(&pair)?.get(relation)?.get(&sentence).copied()
    }

    pub fn candidates(&self, pair: (usize, usize)) -> Option<&BTreeSet<usize>> {
        self.candidates.get(&pair)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.entries.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().flatten().all(|m| m.is_empty())
    }
}

fn score_pair(
    state: &ModelState,
    doc: &Document,
    pair: (usize, usize),
    only_sentence: Option<usize>,
) -> Result<((usize, usize), Vec<BTreeMap<usize, f64>>, BTreeSet<usize>)> {
    let relation_count = state.config.relation_count;
    let cands = removal_candidates(doc, pair);
    let full_view = make_view(doc, BTreeSet::new())?;
    let (full, _) = forward(state, &full_view, pair)?;
    let mut per_relation: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); relation_count];
    for &n in &cands {
        if let Some(only) = only_sentence {
            if n != only {
                continue;
            }
        }
        let view = make_view(doc, BTreeSet::from([n]))?;
        let (removed, _) = forward(state, &view, pair)?;
        for j in 0..relation_count {
            per_relation[j].insert(n, importance_score(full.probs[j], removed.probs[j]));
        }
    }
    Ok((pair, per_relation, cands))
}

/// Builds the full importance table: one full-document forward plus one
/// forward per removal candidate, for every pair. The evaluation pass
/// carries no gradient. Pairs are scored in parallel when the `parallel`
/// feature is enabled.
pub fn build_importance_table(
    state: &ModelState,
    doc: &Document,
    pairs: &[(usize, usize)],
) -> Result<ImportanceTable> {
    build_table_inner(state, doc, pairs, None, true)
}

/// Sequential variant of [`build_importance_table`]; the tests and benches
/// compare the two.
pub fn build_importance_table_seq(
    state: &ModelState,
    doc: &Document,
    pairs: &[(usize, usize)],
) -> Result<ImportanceTable> {
    build_table_inner(state, doc, pairs, None, false)
}

/// Partial table holding scores for a single sampled sentence, as used by the
/// Monte Carlo training step.
pub fn build_importance_for_sentence(
    state: &ModelState,
    doc: &Document,
    pairs: &[(usize, usize)],
    sentence: usize,
) -> Result<ImportanceTable> {
    build_table_inner(state, doc, pairs, Some(sentence), true)
}

fn build_table_inner(
    state: &ModelState,
    doc: &Document,
    pairs: &[(usize, usize)],
    only_sentence: Option<usize>,
    parallel: bool,
) -> Result<ImportanceTable> {
    let scored: Vec<_> = {
        #[cfg(feature = "parallel")]
        {
            if parallel {
                use rayon::prelude::*;
                pairs
                    .par_iter()
                    .map(|&pair| score_pair(state, doc, pair, only_sentence))
                    .collect::<Result<_>>()?
            } else {
                pairs
                    .iter()
                    .map(|&pair| score_pair(state, doc, pair, only_sentence))
                    .collect::<Result<_>>()?
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            let _ = parallel;
            pairs
                .iter()
                .map(|&pair| score_pair(state, doc, pair, only_sentence))
                .collect::<Result<_>>()?
        }
    };
    let mut entries = BTreeMap::new();
    let mut candidates = BTreeMap::new();
    for (pair, per_relation, cands) in scored {
        entries.insert(pair, per_relation);
        candidates.insert(pair, cands);
    }
    Ok(ImportanceTable {
        doc_id: doc.doc_id.clone(),
        relation_count: state.config.relation_count,
        entries,
        candidates,
    })
}

/// Per (pair, relation) sets of sentences treated as non-evidence.
#[derive(Debug, Clone, PartialEq)]
pub struct NonEvidenceSet {
    /// pair -> per-relation sentence sets.
    sets: BTreeMap<(usize, usize), Vec<BTreeSet<usize>>>,
}

impl NonEvidenceSet {
    /// Builds a set directly from explicit per-(pair, relation) sentence
    /// sets. Callers are responsible for keeping the sets inside the pair's
    /// removal candidates.
    pub fn from_sets(sets: BTreeMap<(usize, usize), Vec<BTreeSet<usize>>>) -> Self {
        Self { sets }
    }

    pub fn get(&self, pair: (usize, usize), relation: usize) -> Option<&BTreeSet<usize>> {
        self.sets.get(&pair)?.get(relation)
    }

    pub fn contains(&self, pair: (usize, usize), relation: usize, sentence: usize) -> bool {
        self.get(pair, relation).is_some_and(|s| s.contains(&sentence))
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.sets.keys().copied()
    }

    /// Builds sets from one shared sentence set per pair (the heuristic
    /// sources), replicated across relations.
    pub fn uniform(
        doc: &Document,
        pairs: &[(usize, usize)],
        relation_count: usize,
        mut per_pair: impl FnMut((usize, usize)) -> BTreeSet<usize>,
    ) -> Self {
        let sets = pairs
            .iter()
            .map(|&pair| {
                let cands = removal_candidates(doc, pair);
                let chosen: BTreeSet<usize> =
                    per_pair(pair).intersection(&cands).copied().collect();
                (pair, vec![chosen; relation_count])
            })
            .collect();
        Self { sets }
    }
}

/// Thresholds the importance table: sentence n is non-evidence for (i, j)
/// iff g < beta.
pub fn nonevidence_sets(table: &ImportanceTable, beta: f64) -> NonEvidenceSet {
    let sets = table
        .entries
        .iter()
        .map(|(&pair, per_relation)| {
            let per_rel_sets = per_relation
                .iter()
                .map(|scores| {
                    scores
                        .iter()
                        .filter(|(_, &g)| g < beta)
                        .map(|(&n, _)| n)
                        .collect()
                })
                .collect();
            (pair, per_rel_sets)
        })
        .collect();
    NonEvidenceSet { sets }
}

/// Heuristic non-evidence selection: `rand_half` draws floor(N/2) sentences
/// uniformly, `no_mention` takes sentences without any entity mention.
/// Both are intersected with the pair's removal candidates downstream.
pub fn heuristic_nonevidence(
    doc: &Document,
    kind: NonEvidenceSource,
    rng: &mut impl Rng,
) -> BTreeSet<usize> {
    match kind {
        NonEvidenceSource::RandHalf => {
            let n = doc.sentence_count();
            rand::seq::index::sample(rng, n, n / 2).into_iter().collect()
        }
        NonEvidenceSource::NoMention => {
            let mentioned: BTreeSet<usize> = doc
                .entities
                .iter()
                .flat_map(|e| e.mentions.iter().map(|m| m.sentence_index))
                .collect();
            (0..doc.sentence_count())
                .filter(|n| !mentioned.contains(n))
                .collect()
        }
        _ => panic!("heuristic_nonevidence called with non-heuristic source"),
    }
}

/// Soft-target binary cross-entropy between the full-document probability
/// (target) and a removed-view probability: value, d/d(p_hat), d/d(p).
pub(crate) fn consistency_term(p: f64, p_hat: f64) -> (f64, f64, f64) {
    let value = -(p * p_hat.ln() + (1.0 - p) * (1.0 - p_hat).ln());
    let d_p_hat = -(p / p_hat - (1.0 - p) / (1.0 - p_hat));
    let d_p = -(p_hat.ln() - (1.0 - p_hat).ln());
    (value, d_p_hat, d_p)
}

/// Relation classification loss (binary cross-entropy against gold facts)
/// over all given pairs, with gradient accumulation.
pub fn relation_loss(
    state: &ModelState,
    doc: &Document,
    pairs: &[(usize, usize)],
    acc: &mut GradientAccumulator,
) -> Result<f64> {
    let relation_count = state.config.relation_count;
    let mut loss = 0.0;
    for &pair in pairs {
        let view = make_view(doc, BTreeSet::new())?;
        let (pred, trace) = forward(state, &view, pair)?;
        let gold = doc.gold_labels(pair, relation_count);
        let mut upstream = vec![0.0; relation_count];
        for j in 0..relation_count {
            let (p, r) = (pred.probs[j], gold[j]);
            loss -= r * p.ln() + (1.0 - r) * (1.0 - p).ln();
            upstream[j] = -(r / p - (1.0 - r) / (1.0 - p));
        }
        backward(state, &trace, &upstream, acc)?;
    }
    Ok(loss)
}

/// Linearized focusing loss: one sentence removed at a time, summed over
/// every candidate sentence, with the below-beta indicator as a constant.
pub fn focusing_loss_linearized(
    state: &ModelState,
    doc: &Document,
    pairs: &[(usize, usize)],
    sets: &NonEvidenceSet,
    target_gradient: TargetGradient,
    acc: &mut GradientAccumulator,
) -> Result<f64> {
    let relation_count = state.config.relation_count;
    let mut loss = 0.0;
    for &pair in pairs {
        let active: BTreeSet<usize> = (0..relation_count)
            .filter_map(|j| sets.get(pair, j))
            .flatten()
            .copied()
            .collect();
        if active.is_empty() {
            continue;
        }
        let full_view = make_view(doc, BTreeSet::new())?;
        let (full, full_trace) = forward(state, &full_view, pair)?;
        let mut full_upstream = vec![0.0; relation_count];
        for &n in &active {
            let view = make_view(doc, BTreeSet::from([n]))?;
            let (removed, trace) = forward(state, &view, pair)?;
            let mut upstream = vec![0.0; relation_count];
            let mut any = false;
            for j in 0..relation_count {
                if !sets.contains(pair, j, n) {
                    continue;
                }
                let (value, d_hat, d_p) = consistency_term(full.probs[j], removed.probs[j]);
                loss += value;
                upstream[j] += d_hat;
                if target_gradient == TargetGradient::Both {
                    full_upstream[j] += d_p;
                }
                any = true;
            }
            if any {
                backward(state, &trace, &upstream, acc)?;
            }
        }
        if full_upstream.iter().any(|&u| u != 0.0) {
            backward(state, &full_trace, &full_upstream, acc)?;
        }
    }
    Ok(loss)
}

/// Monte Carlo focusing loss: the linearized expression restricted to one
/// sampled sentence. Requires exactly two forwards per contributing pair.
pub fn focusing_loss_mc(
    state: &ModelState,
    doc: &Document,
    pairs: &[(usize, usize)],
    sampled_n: usize,
    sets: &NonEvidenceSet,
    target_gradient: TargetGradient,
    acc: &mut GradientAccumulator,
) -> Result<f64> {
    let relation_count = state.config.relation_count;
    let mut loss = 0.0;
    for &pair in pairs {
        if !removal_candidates(doc, pair).contains(&sampled_n) {
            continue;
        }
        let full_view = make_view(doc, BTreeSet::new())?;
        let (full, full_trace) = forward(state, &full_view, pair)?;
        let view = make_view(doc, BTreeSet::from([sampled_n]))?;
        let (removed, trace) = forward(state, &view, pair)?;
        let mut upstream = vec![0.0; relation_count];
        let mut full_upstream = vec![0.0; relation_count];
        let mut any = false;
        for j in 0..relation_count {
            if !sets.contains(pair, j, sampled_n) {
                continue;
            }
            let (value, d_hat, d_p) = consistency_term(full.probs[j], removed.probs[j]);
            loss += value;
            upstream[j] += d_hat;
            if target_gradient == TargetGradient::Both {
                full_upstream[j] += d_p;
            }
            any = true;
        }
        if any {
            backward(state, &trace, &upstream, acc)?;
            if target_gradient == TargetGradient::Both {
                backward(state, &full_trace, &full_upstream, acc)?;
            }
        }
    }
    Ok(loss)
}

/// Exact subset focusing loss: enumerates every subset of each (pair,
/// relation) non-evidence set, including the empty subset. Views are
/// memoized per removed-set so each distinct view is forwarded once.
pub fn focusing_loss_exact(
    state: &ModelState,
    doc: &Document,
    pairs: &[(usize, usize)],
    sets: &NonEvidenceSet,
    target_gradient: TargetGradient,
    acc: &mut GradientAccumulator,
) -> Result<f64> {
    let relation_count = state.config.relation_count;
    let mut loss = 0.0;
    for &pair in pairs {
        let mut memo: BTreeMap<Vec<usize>, SubsetMemo> = BTreeMap::new();
        let full_probs = memo_view(&mut memo, state, doc, pair, &BTreeSet::new())?
            .probs
            .clone();
        let mut full_upstream = vec![0.0; relation_count];
        for j in 0..relation_count {
            let k_set: Vec<usize> = sets
                .get(pair, j)
                .map(|s| s.iter().copied().collect())
                .unwrap_or_default();
            if k_set.len() > EXACT_SUBSET_GUARD {
                return Err(Error::SubsetGuard {
                    size: k_set.len(),
                    max: EXACT_SUBSET_GUARD,
                });
            }
            for mask in 0u32..(1u32 << k_set.len()) {
                let removed: BTreeSet<usize> = k_set
                    .iter()
                    .enumerate()
                    .filter(|(bit, _)| mask & (1 << bit) != 0)
                    .map(|(_, &n)| n)
                    .collect();
                let entry = memo_view(&mut memo, state, doc, pair, &removed)?;
                let (value, d_hat, d_p) = consistency_term(full_probs[j], entry.probs[j]);
                loss += value;
                entry.upstream[j] += d_hat;
                if target_gradient == TargetGradient::Both {
                    full_upstream[j] += d_p;
                }
            }
        }
        if let Some(full_entry) = memo.get_mut(&Vec::new()) {
            for (u, f) in full_entry.upstream.iter_mut().zip(&full_upstream) {
                *u += f;
            }
        }
        for entry in memo.values() {
            if entry.upstream.iter().any(|&u| u != 0.0) {
                backward(state, &entry.trace, &entry.upstream, acc)?;
            }
        }
    }
    Ok(loss)
}

struct SubsetMemo {
    probs: Vec<f64>,
    trace: crate::model::ForwardTrace,
    upstream: Vec<f64>,
}

fn memo_view<'m>(
    memo: &'m mut BTreeMap<Vec<usize>, SubsetMemo>,
    state: &ModelState,
    doc: &Document,
    pair: (usize, usize),
    removed: &BTreeSet<usize>,
) -> Result<&'m mut SubsetMemo> {
    let key: Vec<usize> = removed.iter().copied().collect();
    if !memo.contains_key(&key) {
        let view = make_view(doc, removed.clone())?;
        let (pred, trace) = forward(state, &view, pair).map_err(|e| match e {
            Error::Precondition(msg) => Error::Precondition(format!(
                "subset removal {removed:?} orphans a pair entity: {msg}"
            )),
            other => other,
        })?;
        memo.insert(
            key.clone(),
            SubsetMemo {
                probs: pred.probs,
                trace,
                upstream: vec![0.0; state.config.relation_count],
            },
        );
    }
    Ok(memo.get_mut(&key).unwrap())
}

/// Groundtruth-target ablation: the Monte Carlo structure with the soft
/// target replaced by the hard label r_ij. The target carries no gradient.
pub fn gtruth_loss(
    state: &ModelState,
    doc: &Document,
    pairs: &[(usize, usize)],
    sampled_n: usize,
    sets: &NonEvidenceSet,
    acc: &mut GradientAccumulator,
) -> Result<f64> {
    let relation_count = state.config.relation_count;
    let mut loss = 0.0;
    for &pair in pairs {
        if !removal_candidates(doc, pair).contains(&sampled_n) {
            continue;
        }
        let gold = doc.gold_labels(pair, relation_count);
        let view = make_view(doc, BTreeSet::from([sampled_n]))?;
        let (removed, trace) = forward(state, &view, pair)?;
        let mut upstream = vec![0.0; relation_count];
        let mut any = false;
        for j in 0..relation_count {
            if !sets.contains(pair, j, sampled_n) {
                continue;
            }
            let (p_hat, r) = (removed.probs[j], gold[j]);
            loss -= r * p_hat.ln() + (1.0 - r) * (1.0 - p_hat).ln();
            upstream[j] += -(r / p_hat - (1.0 - r) / (1.0 - p_hat));
            any = true;
        }
        if any {
            backward(state, &trace, &upstream, acc)?;
        }
    }
    Ok(loss)
}

/// Combined objective: the arithmetic mean of the relation loss and the
/// focusing loss.
pub fn total_loss(l_rel: f64, l_sf: f64) -> f64 {
    (l_rel + l_sf) / 2.0
}

/// Exports an importance table as CSV with header
/// `doc_id,head,tail,relation,sentence,g,is_candidate,below_beta`.
/// Non-candidate sentences get an empty score field.
pub fn export_importance_csv(
    table: &ImportanceTable,
    doc: &Document,
    relation_set: &[String],
    beta: f64,
    out: &mut impl Write,
) -> std::io::Result<()> {
    writeln!(out, "doc_id,head,tail,relation,sentence,g,is_candidate,below_beta")?;
    for pair in table.pairs() {
        let cands = table.candidates(pair).cloned().unwrap_or_default();
        for (j, rel) in relation_set.iter().enumerate() {
            for n in 0..doc.sentence_count() {
                let g = table.get(pair, j, n);
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{}",
                    table.doc_id,
                    pair.0,
                    pair.1,
                    rel,
                    n,
                    g.map(|v| format!("{v}")).unwrap_or_default(),
                    cands.contains(&n),
                    g.map(|v| v < beta).unwrap_or(false),
                )?;
            }
        }
    }
    Ok(())
}
