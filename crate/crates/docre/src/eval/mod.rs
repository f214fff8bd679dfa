//! Measurement machinery: thresholded relation decisions, micro / Ign /
//! Intra / Inter F1, evidence prediction quality, removal-robustness
//! diagnostics, the beta sweep, and the method comparison table.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::corpus::{make_view, removal_candidates, CorpusSplit, Document};
use crate::model::{forward, predict_pair, ModelConfig, ModelState};
use crate::sief::{build_importance_table, NonEvidenceSource};
use crate::train::{train, TrainConfig};
use crate::{Error, Result, PROB_EPS};

/// Number of evenly spaced candidate thresholds used when the evidence
/// grid is derived from the observed score range.
pub const EVIDENCE_GRID_POINTS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionThreshold {
    pub value: f64,
    pub tuned_on: String,
    /// Set when no threshold produced a positive prediction with nonzero F1
    /// and the fallback 0.5 was returned.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Counts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        f1_from(self.precision(), self.recall())
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// 2PR/(P+R) with the 0/0 -> 0 convention.
pub fn f1_from(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub micro_f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub ign_f1: f64,
    pub intra_f1: f64,
    pub inter_f1: f64,
    pub overall: Counts,
    pub ign: Counts,
    pub intra: Counts,
    pub inter: Counts,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub threshold: f64,
    pub facts_scored: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub p_full: f64,
    pub p_removed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// (P, P-hat) over removals of sentences outside the gold evidence set.
    pub samples: Vec<ScatterPoint>,
    pub mean_abs_deviation: f64,
    /// Fraction of gold-evidence removals where the probability went up.
    pub violation_rate: f64,
    pub evidence_removals: usize,
}

impl RobustnessReport {
    pub fn from_samples(
        nonevidence: Vec<ScatterPoint>,
        evidence: &[ScatterPoint],
    ) -> Self {
        let mean_abs_deviation = if nonevidence.is_empty() {
            0.0
        } else {
            nonevidence
                .iter()
                .map(|s| (s.p_full - s.p_removed).abs())
                .sum::<f64>()
                / nonevidence.len() as f64
        };
        let violations = evidence
            .iter()
            .filter(|s| s.p_removed > s.p_full)
            .count();
        let violation_rate = ratio(violations, evidence.len());
        Self {
            samples: nonevidence,
            mean_abs_deviation,
            violation_rate,
            evidence_removals: evidence.len(),
        }
    }
}

/// Full-document probabilities for every ordered pair of every document,
/// parallelized across documents when the `parallel` feature is on.
fn score_docs(
    state: &ModelState,
    docs: &[Document],
) -> Result<Vec<Vec<((usize, usize), Vec<f64>)>>> {
    let score_one = |doc: &Document| -> Result<Vec<((usize, usize), Vec<f64>)>> {
        doc.ordered_pairs()
            .into_iter()
            .map(|pair| Ok((pair, predict_pair(state, doc, pair)?.probs)))
            .collect()
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        docs.par_iter().map(score_one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        docs.iter().map(score_one).collect()
    }
}

/// Scans every distinct predicted probability as a candidate threshold and
/// returns the one maximizing micro-F1 on `dev`; ties break toward the
/// larger threshold. If no candidate yields a positive F1, returns 0.5 with
/// the degenerate flag set.
pub fn tune_threshold(state: &ModelState, dev: &[Document]) -> Result<DecisionThreshold> {
    if dev.is_empty() {
        return Err(Error::Precondition("empty dev split for threshold tuning".into()));
    }
    let relation_count = state.config.relation_count;
    let scored = score_docs(state, dev)?;
    let mut samples: Vec<(f64, bool)> = Vec::new();
    let mut gold_total = 0usize;
    for (doc, pairs) in dev.iter().zip(&scored) {
        for (pair, probs) in pairs {
            let gold = doc.gold_labels(*pair, relation_count);
            for j in 0..relation_count {
                let is_gold = gold[j] == 1.0;
                gold_total += usize::from(is_gold);
                samples.push((probs[j], is_gold));
            }
        }
    }
    let distinct = samples
        .iter()
        .map(|s| s.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p), hi.max(p))
        });
    let constant_scores = distinct.0 == distinct.1;
    match best_threshold(&mut samples, gold_total) {
        Some((_, value)) if !constant_scores => Ok(DecisionThreshold {
            value,
            tuned_on: "dev".into(),
            degenerate: false,
        }),
        // Constant scores can't be tuned, and a scan without a single
        // positive-F1 threshold has nothing to prefer; fall back to 0.5.
        _ => Ok(DecisionThreshold {
            value: 0.5,
            tuned_on: "dev".into(),
            degenerate: true,
        }),
    }
}

/// Exhaustive threshold scan over the distinct sample probabilities.
/// Returns the best (micro-F1, threshold), or None when no threshold yields
/// a positive F1. Ties break toward the larger threshold. Reorders
/// `samples`.
pub(crate) fn best_threshold(
    samples: &mut [(f64, bool)],
    gold_total: usize,
) -> Option<(f64, f64)> {
    // Descending by probability; walking the list lowers the threshold one
    // distinct value at a time.
    samples.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best: Option<(f64, f64)> = None;
    let mut tp = 0usize;
    let mut predicted = 0usize;
    let mut i = 0;
    while i < samples.len() {
        let t = samples[i].0;
        while i < samples.len() && samples[i].0 == t {
            predicted += 1;
            tp += usize::from(samples[i].1);
            i += 1;
        }
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, gold_total);
        let f1 = f1_from(precision, recall);
        let better = match best {
            None => f1 > 0.0,
            Some((best_f1, _)) => f1 > best_f1,
        };
        if better {
            best = Some((f1, t));
        }
    }
    best
}

/// Thresholded relation metrics. A predicted triple is positive iff its
/// probability is at least `threshold`. Ign counts drop triples that are
/// predicted, gold, and present in `train_facts` (matched by head name,
/// tail name, relation id). A gold fact is intra iff some sentence mentions
/// both entities.
pub fn relation_metrics(
    state: &ModelState,
    docs: &[Document],
    threshold: f64,
    train_facts: &BTreeSet<(String, String, usize)>,
) -> Result<MetricReport> {
    let relation_count = state.config.relation_count;
    let scored = score_docs(state, docs)?;
    let mut overall = Counts::default();
    let mut ign = Counts::default();
    let mut intra = Counts::default();
    let mut inter = Counts::default();
    for (doc, pairs) in docs.iter().zip(&scored) {
        for (pair, probs) in pairs {
            let gold = doc.gold_labels(*pair, relation_count);
            let is_intra = doc.is_intra_pair(pair.0, pair.1);
            let head_name = doc.entities[pair.0].name(doc);
            let tail_name = doc.entities[pair.1].name(doc);
            for j in 0..relation_count {
                let predicted = probs[j] >= threshold;
                let is_gold = gold[j] == 1.0;
                let in_train = predicted
                    && is_gold
                    && train_facts.contains(&(head_name.clone(), tail_name.clone(), j));
                let bucket = if is_intra { &mut intra } else { &mut inter };
                match (predicted, is_gold) {
                    (true, true) => {
                        overall.tp += 1;
                        bucket.tp += 1;
                        if !in_train {
                            ign.tp += 1;
                        }
                    }
                    (true, false) => {
                        overall.fp += 1;
                        bucket.fp += 1;
                        ign.fp += 1;
                    }
                    (false, true) => {
                        overall.fn_ += 1;
                        bucket.fn_ += 1;
                        ign.fn_ += 1;
                    }
                    (false, false) => {}
                }
            }
        }
    }
    Ok(MetricReport {
        micro_f1: overall.f1(),
        precision: overall.precision(),
        recall: overall.recall(),
        ign_f1: ign.f1(),
        intra_f1: intra.f1(),
        inter_f1: inter.f1(),
        overall,
        ign,
        intra,
        inter,
        threshold,
    })
}

/// Importance tables for every document, parallelized across documents.
fn doc_tables(
    state: &ModelState,
    docs: &[Document],
) -> Result<Vec<crate::sief::ImportanceTable>> {
    let build = |doc: &Document| build_importance_table(state, doc, &doc.ordered_pairs());
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        docs.par_iter().map(build).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        docs.iter().map(build).collect()
    }
}

/// Evidence prediction quality. For each gold fact with annotated evidence,
/// the predicted evidence at threshold `t` is every removal candidate whose
/// importance score is at least `t`, plus the fallback set of non-candidate
/// sentences mentioning the head or tail entity. The threshold is chosen
/// from `grid` to maximize micro-F1 over facts; ties break toward the
/// larger threshold.
pub fn evidence_metrics(
    state: &ModelState,
    docs: &[Document],
    grid: &[f64],
) -> Result<EvidenceReport> {
    if grid.is_empty() {
        return Err(Error::Precondition("empty evidence threshold grid".into()));
    }
    let tables = doc_tables(state, docs)?;
    // (gold evidence, candidate scores, fallback sentences) per fact.
    struct FactRow {
        gold: BTreeSet<usize>,
        scores: Vec<(usize, f64)>,
        fallback: BTreeSet<usize>,
    }
    let mut rows: Vec<FactRow> = Vec::new();
    for (doc, table) in docs.iter().zip(&tables) {
        for fact in &doc.facts {
            if fact.evidence.is_empty() {
                continue;
            }
            let pair = (fact.head_entity, fact.tail_entity);
            let candidates = removal_candidates(doc, pair);
            let mention_sents: BTreeSet<usize> = doc.entities[pair.0]
                .mentions
                .iter()
                .chain(doc.entities[pair.1].mentions.iter())
                .map(|m| m.sentence_index)
                .collect();
            let fallback: BTreeSet<usize> = mention_sents
                .iter()
                .copied()
                .filter(|n| !candidates.contains(n))
                .collect();
            let scores: Vec<(usize, f64)> = candidates
                .iter()
                .filter_map(|&n| table.get(pair, fact.relation_id, n).map(|g| (n, g)))
                .collect();
            rows.push(FactRow {
                gold: fact.evidence.clone(),
                scores,
                fallback,
            });
        }
    }
    if rows.is_empty() {
        return Err(Error::Precondition(
            "no annotated evidence in the given documents".into(),
        ));
    }
    let mut sorted_grid: Vec<f64> = grid.to_vec();
    sorted_grid.sort_by(f64::total_cmp);
    let mut best: Option<(f64, f64, Counts)> = None; // (f1, t, counts)
    for &t in sorted_grid.iter().rev() {
        let mut counts = Counts::default();
        for row in &rows {
            let predicted: BTreeSet<usize> = row
                .scores
                .iter()
                .filter(|&&(_, g)| g >= t)
                .map(|&(n, _)| n)
                .chain(row.fallback.iter().copied())
                .collect();
            counts.tp += predicted.intersection(&row.gold).count();
            counts.fp += predicted.difference(&row.gold).count();
            counts.fn_ += row.gold.difference(&predicted).count();
        }
        let f1 = counts.f1();
        // Scanning from the largest threshold down, strict improvement keeps
        // the larger threshold on ties.
        if best.as_ref().is_none_or(|(bf, _, _)| f1 > *bf) {
            best = Some((f1, t, counts));
        }
    }
    let (f1, threshold, counts) = best.expect("non-empty grid");
    Ok(EvidenceReport {
        precision: counts.precision(),
        recall: counts.recall(),
        f1,
        threshold,
        facts_scored: rows.len(),
    })
}

/// Evidence metrics over a grid of evenly spaced thresholds spanning the
/// observed score range on `docs`.
pub fn evidence_metrics_auto(state: &ModelState, docs: &[Document]) -> Result<EvidenceReport> {
    let tables = doc_tables(state, docs)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (doc, table) in docs.iter().zip(&tables) {
        for pair in table.pairs() {
            let Some(candidates) = table.candidates(pair) else { continue };
            for &n in candidates {
                for j in 0..state.config.relation_count {
                    if let Some(g) = table.get(pair, j, n) {
                        lo = lo.min(g);
                        hi = hi.max(g);
                    }
                }
            }
        }
        let _ = doc;
    }
    let grid: Vec<f64> = if lo.is_finite() && hi > lo {
        (0..EVIDENCE_GRID_POINTS)
            .map(|k| lo + (hi - lo) * k as f64 / (EVIDENCE_GRID_POINTS - 1) as f64)
            .collect()
    } else {
        vec![0.0]
    };
    evidence_metrics(state, docs, &grid)
}

/// Probes probability stability under single-sentence removals. Removals of
/// sentences outside a fact's gold evidence feed the scatter samples and the
/// mean absolute deviation; removals of gold evidence sentences feed the
/// monotonicity-violation rate (fraction where the probability increased).
pub fn robustness_probe(state: &ModelState, docs: &[Document]) -> Result<RobustnessReport> {
    let probe_one = |doc: &Document| -> Result<(Vec<ScatterPoint>, Vec<ScatterPoint>)> {
        let mut nonevidence = Vec::new();
        let mut evidence = Vec::new();
        for fact in &doc.facts {
            let pair = (fact.head_entity, fact.tail_entity);
            let full = predict_pair(state, doc, pair)?;
            let p_full = full.probs[fact.relation_id];
            for n in removal_candidates(doc, pair) {
                let view = make_view(doc, BTreeSet::from([n]))?;
                let (removed, _) = forward(state, &view, pair)?;
                let point = ScatterPoint {
                    p_full,
                    p_removed: removed.probs[fact.relation_id],
                };
                if fact.evidence.contains(&n) {
                    evidence.push(point);
                } else {
                    nonevidence.push(point);
                }
            }
        }
        Ok((nonevidence, evidence))
    };
    let per_doc: Vec<(Vec<ScatterPoint>, Vec<ScatterPoint>)> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            docs.par_iter().map(probe_one).collect::<Result<_>>()?
        }
        #[cfg(not(feature = "parallel"))]
        {
            docs.iter().map(probe_one).collect::<Result<Vec<_>>>()?
        }
    };
    let mut nonevidence = Vec::new();
    let mut evidence = Vec::new();
    for (ne, ev) in per_doc {
        nonevidence.extend(ne);
        evidence.extend(ev);
    }
    Ok(RobustnessReport::from_samples(nonevidence, &evidence))
}

pub fn write_scatter_csv(samples: &[ScatterPoint], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "p_full,p_removed")?;
    for s in samples {
        writeln!(out, "{},{}", s.p_full, s.p_removed)?;
    }
    Ok(())
}

/// Static scatter plot: unit-square axes with a diagonal reference line.
pub fn write_scatter_svg(samples: &[ScatterPoint], out: &mut impl Write) -> std::io::Result<()> {
    const SIZE: f64 = 480.0;
    const MARGIN: f64 = 40.0;
    let span = SIZE - 2.0 * MARGIN;
    let x = |p: f64| MARGIN + p * span;
    let y = |p: f64| MARGIN + (1.0 - p) * span;
    writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\">"
    )?;
    writeln!(
        out,
        "  <rect x=\"{MARGIN}\" y=\"{MARGIN}\" width=\"{span}\" height=\"{span}\" \
         fill=\"none\" stroke=\"black\"/>"
    )?;
    writeln!(
        out,
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"gray\" \
         stroke-dasharray=\"4 4\"/>",
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    )?;
    for s in samples {
        writeln!(
            out,
            "  <circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"2\" fill=\"steelblue\" \
             fill-opacity=\"0.6\"/>",
            x(s.p_full),
            y(s.p_removed)
        )?;
    }
    writeln!(out, "</svg>")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSweepRow {
    /// "base" for the focusing-free row, otherwise the beta value as text.
    pub label: String,
    pub beta: Option<f64>,
    pub dev_micro_f1: f64,
}

/// Trains one model per beta under a shared seed and reports dev micro-F1,
/// plus a beta-independent base row (focusing loss disabled).
pub fn beta_sweep(
    corpus: &CorpusSplit,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    betas: &[f64],
) -> Result<Vec<BetaSweepRow>> {
    if betas.is_empty() {
        return Err(Error::Precondition("empty beta grid".into()));
    }
    let mut rows = Vec::with_capacity(betas.len() + 1);
    let mut base_cfg = train_cfg.clone();
    base_cfg.sief_enabled = false;
    let (_, base_report) = train(corpus, model_cfg, &base_cfg, None)?;
    rows.push(BetaSweepRow {
        label: "base".into(),
        beta: None,
        dev_micro_f1: final_dev_f1(&base_report),
    });
    for &beta in betas {
        let mut cfg = train_cfg.clone();
        cfg.sief_enabled = true;
        cfg.sief.beta = beta;
        let (_, report) = train(corpus, model_cfg, &cfg, None)?;
        rows.push(BetaSweepRow {
            label: format!("{beta}"),
            beta: Some(beta),
            dev_micro_f1: final_dev_f1(&report),
        });
    }
    Ok(rows)
}

fn final_dev_f1(report: &crate::train::TrainReport) -> f64 {
    report.epochs.last().map_or(0.0, |e| e.dev_micro_f1)
}

pub fn write_beta_sweep_csv(rows: &[BetaSweepRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "label,beta,dev_micro_f1")?;
    for row in rows {
        let beta = row.beta.map_or(String::new(), |b| b.to_string());
        writeln!(out, "{},{},{}", row.label, beta, row.dev_micro_f1)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Base,
    Sief,
    Rand,
    Nomention,
    Gtruth,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Base,
        Method::Sief,
        Method::Rand,
        Method::Nomention,
        Method::Gtruth,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Method::Base => "base",
            Method::Sief => "sief",
            Method::Rand => "rand",
            Method::Nomention => "nomention",
            Method::Gtruth => "gtruth",
        }
    }

    /// Applies this method to a copy of the shared training config. All
    /// non-base methods share the loss machinery and differ only in the
    /// non-evidence source.
    pub fn apply(&self, train_cfg: &TrainConfig) -> TrainConfig {
        let mut cfg = train_cfg.clone();
        match self {
            Method::Base => cfg.sief_enabled = false,
            Method::Sief => {
                cfg.sief_enabled = true;
                cfg.sief.nonevidence_source = NonEvidenceSource::Score;
            }
            Method::Rand => {
                cfg.sief_enabled = true;
                cfg.sief.nonevidence_source = NonEvidenceSource::RandHalf;
            }
            Method::Nomention => {
                cfg.sief_enabled = true;
                cfg.sief.nonevidence_source = NonEvidenceSource::NoMention;
            }
            Method::Gtruth => {
                cfg.sief_enabled = true;
                cfg.sief.nonevidence_source = NonEvidenceSource::GtruthTarget;
            }
        }
        cfg
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Self::Base),
            "sief" => Ok(Self::Sief),
            "rand" => Ok(Self::Rand),
            "nomention" => Ok(Self::Nomention),
            "gtruth" => Ok(Self::Gtruth),
            other => Err(Error::Config(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub method: String,
    pub seed: u64,
    pub dev_micro_f1: f64,
    pub ign_f1: f64,
    pub evidence_f1: f64,
    pub robustness_mean_dev: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Mean and sample standard deviation (n-1 denominator; 0 for n < 2).
pub fn mean_std(values: &[f64]) -> MeanStd {
    if values.is_empty() {
        return MeanStd::default();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    MeanStd { mean, std }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareSummary {
    pub method: String,
    pub dev_micro_f1: MeanStd,
    pub ign_f1: MeanStd,
    pub evidence_f1: MeanStd,
    pub robustness_mean_dev: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareTable {
    pub rows: Vec<CompareRow>,
    pub summaries: Vec<CompareSummary>,
}

/// Trains every (method, seed) combination and reports dev micro-F1,
/// Ign-F1, evidence-F1, and robustness mean deviation per run, aggregated
/// as mean plus/minus sample standard deviation per method.
pub fn compare_methods(
    corpus: &CorpusSplit,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    methods: &[Method],
    seeds: &[u64],
) -> Result<CompareTable> {
    if seeds.is_empty() {
        return Err(Error::Precondition("at least one seed required".into()));
    }
    let train_facts = corpus.train_fact_names();
    let mut rows = Vec::with_capacity(methods.len() * seeds.len());
    for &method in methods {
        for &seed in seeds {
            let mut cfg = method.apply(train_cfg);
            cfg.seed = seed;
            let (state, _) = train(corpus, model_cfg, &cfg, None)?;
            let threshold = tune_threshold(&state, &corpus.dev)?;
            let metrics =
                relation_metrics(&state, &corpus.dev, threshold.value, &train_facts)?;
            let evidence = evidence_metrics_auto(&state, &corpus.dev)?;
            let robustness = robustness_probe(&state, &corpus.dev)?;
            rows.push(CompareRow {
                method: method.label().into(),
                seed,
                dev_micro_f1: metrics.micro_f1,
                ign_f1: metrics.ign_f1,
                evidence_f1: evidence.f1,
                robustness_mean_dev: robustness.mean_abs_deviation,
            });
        }
    }
    let summaries = methods
        .iter()
        .map(|method| {
            let of = |get: fn(&CompareRow) -> f64| {
                let values: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.method == method.label())
                    .map(get)
                    .collect();
                mean_std(&values)
            };
            CompareSummary {
                method: method.label().into(),
                dev_micro_f1: of(|r| r.dev_micro_f1),
                ign_f1: of(|r| r.ign_f1),
                evidence_f1: of(|r| r.evidence_f1),
                robustness_mean_dev: of(|r| r.robustness_mean_dev),
            }
        })
        .collect();
    Ok(CompareTable { rows, summaries })
}

pub fn write_compare_csv(table: &CompareTable, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "method,seed,dev_micro_f1,ign_f1,evidence_f1,robustness_mean_dev"
    )?;
    for row in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.method, row.seed, row.dev_micro_f1, row.ign_f1, row.evidence_f1,
            row.robustness_mean_dev
        )?;
    }
    writeln!(out)?;
    writeln!(
        out,
        "method,dev_micro_f1_mean,dev_micro_f1_std,ign_f1_mean,ign_f1_std,\
         evidence_f1_mean,evidence_f1_std,robustness_mean,robustness_std"
    )?;
    for s in &table.summaries {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.method,
            s.dev_micro_f1.mean,
            s.dev_micro_f1.std,
            s.ign_f1.mean,
            s.ign_f1.std,
            s.evidence_f1.mean,
            s.evidence_f1.std,
            s.robustness_mean_dev.mean,
            s.robustness_mean_dev.std
        )?;
    }
    Ok(())
}

/// Asserts the invariant that every exported scatter point stays inside the
/// probability clamp box.
pub fn scatter_in_bounds(samples: &[ScatterPoint]) -> bool {
    samples.iter().all(|s| {
        (PROB_EPS..=1.0 - PROB_EPS).contains(&s.p_full)
            && (PROB_EPS..=1.0 - PROB_EPS).contains(&s.p_removed)
    })
}
