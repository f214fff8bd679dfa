//! Optimization loop combining the relation loss with the configured
//! focusing-loss variant, plus the finite-difference gradient verification
//! harness.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::KvConfig;
use crate::corpus::{make_view, removal_candidates, CorpusSplit, Document};
use crate::model::{
    backward, forward, GradientAccumulator, ModelConfig, ModelState,
};
use crate::seeds::substream;
use crate::sief::{
    build_importance_for_sentence, build_importance_table, consistency_term, focusing_loss_exact,
    focusing_loss_linearized, focusing_loss_mc, heuristic_nonevidence, importance_score,
    nonevidence_sets,
    relation_loss, total_loss, LossVariant, NonEvidenceSet, NonEvidenceSource, SiefConfig,
    TargetGradient,
};
use crate::{Error, Result};

pub const TRAIN_CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(Self::Sgd),
            "adam" => Ok(Self::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub sief_enabled: bool,
    pub sief: SiefConfig,
    pub shuffle: bool,
    /// Write a checkpoint every this many epochs; 0 writes only the final one.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            sief_enabled: true,
            sief: SiefConfig::default(),
            shuffle: true,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Consumes training and sief keys from a parsed key=value config.
    pub fn from_kv(cfg: &mut KvConfig) -> Result<Self> {
        let d = Self::default();
        let out = Self {
            epochs: cfg.take("epochs", d.epochs)?,
            learning_rate: cfg.take("learning_rate", d.learning_rate)?,
            optimizer: cfg.take("optimizer", d.optimizer)?,
            seed: cfg.take("seed", d.seed)?,
            sief_enabled: cfg.take_bool("sief_enabled", d.sief_enabled)?,
            sief: SiefConfig {
                beta: cfg.take("beta", d.sief.beta)?,
                loss_variant: cfg.take("loss_variant", d.sief.loss_variant)?,
                target_gradient: cfg.take("target_gradient", d.sief.target_gradient)?,
                nonevidence_source: cfg.take("nonevidence_source", d.sief.nonevidence_source)?,
            },
            shuffle: cfg.take_bool("shuffle", d.shuffle)?,
            checkpoint_every: cfg.take("checkpoint_every", d.checkpoint_every)?,
        };
        if out.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if out.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(out)
    }
}

/// Per-epoch losses and dev metrics. Wall-clock time is tracked in memory
/// but excluded from serialization so reports stay byte-reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    pub l_rel: f64,
    pub l_sf: f64,
    pub total: f64,
    pub dev_micro_f1: f64,
    pub threshold: f64,
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
    pub final_checkpoint: Option<PathBuf>,
}

impl TrainReport {
    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for epoch in &self.epochs {
            out.push_str(&serde_json::to_string(epoch)?);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AdamMoments {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    adam: Option<AdamMoments>,
}

impl OptimizerState {
    fn new(cfg: &TrainConfig, param_count: usize) -> Self {
        let adam = match cfg.optimizer {
            OptimizerKind::Adam => Some(AdamMoments {
                m: vec![0.0; param_count],
                v: vec![0.0; param_count],
                t: 0,
            }),
            OptimizerKind::Sgd => None,
        };
        Self {
            kind: cfg.optimizer,
            learning_rate: cfg.learning_rate,
            adam,
        }
    }

    fn step(&mut self, state: &mut ModelState, grads: &GradientAccumulator) {
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in state.params_mut().iter_mut().zip(grads.grads()) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                let adam = self.adam.as_mut().expect("adam moments");
                adam.t += 1;
                let t = adam.t as f64;
                let bc1 = 1.0 - ADAM_BETA1.powf(t);
                let bc2 = 1.0 - ADAM_BETA2.powf(t);
                let params = state.params_mut();
                for i in 0..params.len() {
                    let g = grads.grads()[i];
                    adam.m[i] = ADAM_BETA1 * adam.m[i] + (1.0 - ADAM_BETA1) * g;
                    adam.v[i] = ADAM_BETA2 * adam.v[i] + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = adam.m[i] / bc1;
                    let v_hat = adam.v[i] / bc2;
                    params[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// Resume file: model parameters, optimizer moments, and the report so far.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainCheckpoint {
    pub format_version: u32,
    pub next_epoch: usize,
    pub model_config: ModelConfig,
    pub params: Vec<f64>,
    optimizer: OptimizerState,
    pub epochs: Vec<EpochReport>,
}

impl TrainCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let ckpt: Self = serde_json::from_str(&text)?;
        if ckpt.format_version != TRAIN_CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "train checkpoint format version {} unsupported",
                ckpt.format_version
            )));
        }
        Ok(ckpt)
    }
}

/// One optimization step over one document, returning (l_rel, l_sf).
///
/// With the Monte Carlo variant the step is fused so that each pair sees
/// exactly one full-document forward and at most one removed-sentence
/// forward: the full forward serves the relation loss, the importance score,
/// and the focusing target; the removed forward serves the score and the
/// focusing prediction.
fn train_step(
    state: &mut ModelState,
    doc: &Document,
    cfg: &TrainConfig,
    sample_rng: &mut impl Rng,
    heur_rng: &mut impl Rng,
    optimizer: &mut OptimizerState,
) -> Result<(f64, f64)> {
    let pairs = doc.ordered_pairs();
    if pairs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n_sents = doc.sentence_count();
    let mut acc = GradientAccumulator::zeros_like(state);

    let (l_rel, l_sf) = if !cfg.sief_enabled || n_sents < 2 {
        let l_rel = relation_loss(state, doc, &pairs, &mut acc)?;
        (l_rel, 0.0)
    } else {
        let sief = &cfg.sief;
        let sampled_n = sample_rng.gen_range(0..n_sents);
        let heuristic_set = match sief.nonevidence_source {
            NonEvidenceSource::RandHalf | NonEvidenceSource::NoMention => Some(
                heuristic_nonevidence(doc, sief.nonevidence_source, heur_rng),
            ),
            _ => None,
        };
        // The importance entries for an update only cover the sampled
        // sentence, so the monte_carlo and linearized variants coincide here
        // and share the fused two-forward step; only the exact-subset
        // variant needs extra forwards (its subsets are {} and {n}).
        let use_exact = sief.loss_variant == LossVariant::ExactSubsets
            && sief.nonevidence_source != NonEvidenceSource::GtruthTarget;
        if use_exact {
            let mut acc_rel = GradientAccumulator::zeros_like(state);
            let l_rel = relation_loss(state, doc, &pairs, &mut acc_rel)?;
            let sets = match &heuristic_set {
                Some(set) => NonEvidenceSet::uniform(
                    doc,
                    &pairs,
                    state.config.relation_count,
                    |_| set.iter().copied().filter(|&m| m == sampled_n).collect(),
                ),
                None => {
                    let table =
                        build_importance_for_sentence(state, doc, &pairs, sampled_n)?;
                    nonevidence_sets(&table, sief.beta)
                }
            };
            let mut acc_sf = GradientAccumulator::zeros_like(state);
            let l_sf = focusing_loss_exact(
                state, doc, &pairs, &sets, sief.target_gradient, &mut acc_sf,
            )?;
            acc.add_scaled(&acc_rel, 0.5);
            acc.add_scaled(&acc_sf, 0.5);
            (l_rel, l_sf)
        } else {
            fused_mc_step(state, doc, &pairs, sampled_n, sief, heuristic_set.as_ref(), &mut acc)?
        }
    };

    let combined = if cfg.sief_enabled {
        total_loss(l_rel, l_sf)
    } else {
        l_rel
    };
    if !combined.is_finite() {
        return Err(Error::NonFinite(format!(
            "loss on document {} (l_rel={l_rel}, l_sf={l_sf})",
            doc.doc_id
        )));
    }
    optimizer.step(state, &acc);
    Ok((l_rel, l_sf))
}

/// Fused relation + Monte Carlo focusing step; also hosts the
/// groundtruth-target variant (same two-forward structure, hard labels).
/// Gradients are written into `acc` already scaled by the 1/2 of the
/// combined objective.
fn fused_mc_step(
    state: &ModelState,
    doc: &Document,
    pairs: &[(usize, usize)],
    sampled_n: usize,
    sief: &SiefConfig,
    heuristic_set: Option<&BTreeSet<usize>>,
    acc: &mut GradientAccumulator,
) -> Result<(f64, f64)> {
    let relation_count = state.config.relation_count;
    let mut l_rel = 0.0;
    let mut l_sf = 0.0;
    for &pair in pairs {
        let full_view = make_view(doc, BTreeSet::new())?;
        let (full, full_trace) = forward(state, &full_view, pair)?;
        let gold = doc.gold_labels(pair, relation_count);
        let mut full_upstream = vec![0.0; relation_count];
        for j in 0..relation_count {
            let (p, r) = (full.probs[j], gold[j]);
            l_rel -= r * p.ln() + (1.0 - r) * (1.0 - p).ln();
            full_upstream[j] = 0.5 * (-(r / p - (1.0 - r) / (1.0 - p)));
        }

        if removal_candidates(doc, pair).contains(&sampled_n) {
            let view = make_view(doc, BTreeSet::from([sampled_n]))?;
            let (removed, removed_trace) = forward(state, &view, pair)?;
            let mut removed_upstream = vec![0.0; relation_count];
            let mut any = false;
            for j in 0..relation_count {
                let non_evidence = match heuristic_set {
                    Some(set) => set.contains(&sampled_n),
                    None => {
                        importance_score(full.probs[j], removed.probs[j]) < sief.beta
                    }
                };
                if !non_evidence {
                    continue;
                }
                any = true;
                match sief.nonevidence_source {
                    NonEvidenceSource::GtruthTarget => {
                        let (p_hat, r) = (removed.probs[j], gold[j]);
                        l_sf -= r * p_hat.ln() + (1.0 - r) * (1.0 - p_hat).ln();
                        removed_upstream[j] +=
                            0.5 * (-(r / p_hat - (1.0 - r) / (1.0 - p_hat)));
                    }
                    _ => {
                        let (value, d_hat, d_p) =
                            consistency_term(full.probs[j], removed.probs[j]);
                        l_sf += value;
                        removed_upstream[j] += 0.5 * d_hat;
                        if sief.target_gradient == TargetGradient::Both {
                            full_upstream[j] += 0.5 * d_p;
                        }
                    }
                }
            }
            if any {
                backward(state, &removed_trace, &removed_upstream, acc)?;
            }
        }
        backward(state, &full_trace, &full_upstream, acc)?;
    }
    Ok((l_rel, l_sf))
}

/// Trains from a fresh seeded initialization.
pub fn train(
    corpus: &CorpusSplit,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(ModelState, TrainReport)> {
    if corpus.train.is_empty() {
        return Err(Error::Config("empty train split".into()));
    }
    if corpus.dev.is_empty() {
        return Err(Error::Config("empty dev split".into()));
    }
    let mut cfg = model_cfg.clone();
    cfg.seed = train_cfg.seed;
    let state = ModelState::new(cfg)?;
    let optimizer = OptimizerState::new(train_cfg, state.param_count());
    run_epochs(corpus, state, optimizer, train_cfg, 1, Vec::new(), checkpoint_dir)
}

/// Continues training from a resume checkpoint; the resulting report covers
/// all epochs, as if the run had never been interrupted.
pub fn resume(
    corpus: &CorpusSplit,
    ckpt: TrainCheckpoint,
    train_cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(ModelState, TrainReport)> {
    let layout = crate::model::ParamLayout::new(&ckpt.model_config);
    if ckpt.params.len() != layout.total {
        return Err(Error::Config("resume checkpoint parameter shape mismatch".into()));
    }
    let mut state = ModelState::new(ckpt.model_config.clone())?;
    state.params_mut().copy_from_slice(&ckpt.params);
    run_epochs(
        corpus,
        state,
        ckpt.optimizer,
        train_cfg,
        ckpt.next_epoch,
        ckpt.epochs,
        checkpoint_dir,
    )
}

fn run_epochs(
    corpus: &CorpusSplit,
    mut state: ModelState,
    mut optimizer: OptimizerState,
    train_cfg: &TrainConfig,
    start_epoch: usize,
    mut epochs: Vec<EpochReport>,
    checkpoint_dir: Option<&Path>,
) -> Result<(ModelState, TrainReport)> {
    let seed = train_cfg.seed;
    for epoch in start_epoch..=train_cfg.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..corpus.train.len()).collect();
        if train_cfg.shuffle {
            order.shuffle(&mut substream(seed, &format!("shuffle-{epoch}")));
        }
        let mut sample_rng = substream(seed, &format!("sample-{epoch}"));
        let mut heur_rng = substream(seed, &format!("rand-heuristic-{epoch}"));
        let mut sum_rel = 0.0;
        let mut sum_sf = 0.0;
        for &di in &order {
            let (l_rel, l_sf) = train_step(
                &mut state,
                &corpus.train[di],
                train_cfg,
                &mut sample_rng,
                &mut heur_rng,
                &mut optimizer,
            )?;
            sum_rel += l_rel;
            sum_sf += l_sf;
        }
        state.assert_finite()?;
        let threshold = crate::eval::tune_threshold(&state, &corpus.dev)?;
        let train_facts = corpus.train_fact_names();
        let metrics =
            crate::eval::relation_metrics(&state, &corpus.dev, threshold.value, &train_facts)?;
        epochs.push(EpochReport {
            epoch,
            l_rel: sum_rel,
            l_sf: sum_sf,
            total: total_loss(sum_rel, sum_sf),
            dev_micro_f1: metrics.micro_f1,
            threshold: threshold.value,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        });
        if let Some(dir) = checkpoint_dir {
            let every = train_cfg.checkpoint_every;
            if every > 0 && epoch % every == 0 {
                state.save(&dir.join(format!("checkpoint-epoch-{epoch}.json")))?;
                make_train_checkpoint(&state, &optimizer, epoch + 1, &epochs)
                    .save(&dir.join("trainstate.json"))?;
            }
        }
    }
    let mut report = TrainReport {
        epochs,
        final_checkpoint: None,
    };
    if let Some(dir) = checkpoint_dir {
        let final_path = dir.join("model.ckpt");
        state.save(&final_path)?;
        make_train_checkpoint(&state, &optimizer, train_cfg.epochs + 1, &report.epochs)
            .save(&dir.join("trainstate.json"))?;
        report.final_checkpoint = Some(final_path);
    }
    Ok((state, report))
}

fn make_train_checkpoint(
    state: &ModelState,
    optimizer: &OptimizerState,
    next_epoch: usize,
    epochs: &[EpochReport],
) -> TrainCheckpoint {
    TrainCheckpoint {
        format_version: TRAIN_CHECKPOINT_FORMAT_VERSION,
        next_epoch,
        model_config: state.config.clone(),
        params: state.params().to_vec(),
        optimizer: optimizer.clone(),
        epochs: epochs.to_vec(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Rel,
    SfMc,
    SfLinearized,
    SfExact,
    Total,
}

impl std::str::FromStr for LossKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rel" => Ok(Self::Rel),
            "sf_mc" => Ok(Self::SfMc),
            "sf_linearized" => Ok(Self::SfLinearized),
            "sf_exact" => Ok(Self::SfExact),
            "total" => Ok(Self::Total),
            other => Err(Error::Config(format!("unknown loss kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub loss_kind: String,
    pub params_checked: usize,
    pub max_rel_err: f64,
    pub loss_value: f64,
}

const GRADCHECK_MAX_PARAMS: usize = 2048;
const GRADCHECK_STEP: f64 = 1e-5;

/// Verifies analytic gradients of the chosen loss against central finite
/// differences over every parameter. The non-evidence sets are computed
/// once from the unperturbed state and held fixed, mirroring the
/// constant-indicator semantics of the losses. For the exact-subset loss
/// the sets are restricted to mention-free sentences so every subset is a
/// valid removal.
pub fn gradcheck(
    model_cfg: &ModelConfig,
    loss_kind: LossKind,
    doc: &Document,
    sief_cfg: &SiefConfig,
) -> Result<GradCheckReport> {
    if sief_cfg.target_gradient == TargetGradient::Detached {
        return Err(Error::Precondition(
            "finite differences always see the full objective, so only \
             target_gradient=both can be checked; detached gradients are \
             verified against the both-mode accumulator instead"
                .into(),
        ));
    }
    let mut state = ModelState::new(model_cfg.clone())?;
    if state.param_count() > GRADCHECK_MAX_PARAMS {
        return Err(Error::Precondition(format!(
            "{} parameters exceed the finite-difference budget ({GRADCHECK_MAX_PARAMS})",
            state.param_count()
        )));
    }
    let pairs = doc.ordered_pairs();
    if pairs.is_empty() {
        return Err(Error::Precondition("document has no entity pairs".into()));
    }

    // Fixed structural choices (sets, sampled sentence), computed once.
    let table = build_importance_table(&state, doc, &pairs)?;
    let mut sets = nonevidence_sets(&table, sief_cfg.beta);
    if loss_kind == LossKind::SfExact {
        let mentioned: BTreeSet<usize> = doc
            .entities
            .iter()
            .flat_map(|e| e.mentions.iter().map(|m| m.sentence_index))
            .collect();
        sets = NonEvidenceSet::uniform(doc, &pairs, state.config.relation_count, |_| {
            (0..doc.sentence_count())
                .filter(|n| !mentioned.contains(n))
                .collect()
        });
    }
    let sampled_n = (0..doc.sentence_count())
        .find(|&n| pairs.iter().any(|&p| removal_candidates(doc, p).contains(&n)))
        .unwrap_or(0);

    let eval_loss = |state: &ModelState| -> Result<f64> {
        let mut scratch = GradientAccumulator::zeros_like(state);
        let rel = |s: &ModelState, a: &mut GradientAccumulator| relation_loss(s, doc, &pairs, a);
        match loss_kind {
            LossKind::Rel => rel(state, &mut scratch),
            LossKind::SfMc => focusing_loss_mc(
                state, doc, &pairs, sampled_n, &sets, sief_cfg.target_gradient, &mut scratch,
            ),
            LossKind::SfLinearized => focusing_loss_linearized(
                state, doc, &pairs, &sets, sief_cfg.target_gradient, &mut scratch,
            ),
            LossKind::SfExact => focusing_loss_exact(
                state, doc, &pairs, &sets, sief_cfg.target_gradient, &mut scratch,
            ),
            LossKind::Total => {
                let l_rel = rel(state, &mut scratch)?;
                let l_sf = focusing_loss_mc(
                    state, doc, &pairs, sampled_n, &sets, sief_cfg.target_gradient, &mut scratch,
                )?;
                Ok(total_loss(l_rel, l_sf))
            }
        }
    };

    // Analytic gradients.
    let mut acc = GradientAccumulator::zeros_like(&state);
    let loss_value = match loss_kind {
        LossKind::Rel => relation_loss(&state, doc, &pairs, &mut acc)?,
        LossKind::SfMc => focusing_loss_mc(
            &state, doc, &pairs, sampled_n, &sets, sief_cfg.target_gradient, &mut acc,
        )?,
        LossKind::SfLinearized => focusing_loss_linearized(
            &state, doc, &pairs, &sets, sief_cfg.target_gradient, &mut acc,
        )?,
        LossKind::SfExact => focusing_loss_exact(
            &state, doc, &pairs, &sets, sief_cfg.target_gradient, &mut acc,
        )?,
        LossKind::Total => {
            let mut acc_rel = GradientAccumulator::zeros_like(&state);
            let l_rel = relation_loss(&state, doc, &pairs, &mut acc_rel)?;
            let mut acc_sf = GradientAccumulator::zeros_like(&state);
            let l_sf = focusing_loss_mc(
                &state, doc, &pairs, sampled_n, &sets, sief_cfg.target_gradient, &mut acc_sf,
            )?;
            acc.add_scaled(&acc_rel, 0.5);
            acc.add_scaled(&acc_sf, 0.5);
            total_loss(l_rel, l_sf)
        }
    };

    // Central differences, parallelized across parameters when enabled.
    let n = state.param_count();
    let numeric_at = |i: usize, base: &ModelState| -> Result<f64> {
        let mut local = base.clone();
        let orig = local.params()[i];
        local.params_mut()[i] = orig + GRADCHECK_STEP;
        let up = eval_loss(&local)?;
        local.params_mut()[i] = orig - GRADCHECK_STEP;
        let down = eval_loss(&local)?;
        Ok((up - down) / (2.0 * GRADCHECK_STEP))
    };
    let numeric: Vec<f64> = {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            let base = &state;
            (0..n)
                .into_par_iter()
                .map(|i| numeric_at(i, base))
                .collect::<Result<_>>()?
        }
        #[cfg(not(feature = "parallel"))]
        {
            let base = state.clone();
            (0..n)
                .map(|i| numeric_at(i, &base))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let mut max_rel_err = 0.0f64;
    for i in 0..n {
        let a = acc.grads()[i];
        let b = numeric[i];
        let denom = a.abs().max(b.abs()).max(1e-8);
        max_rel_err = max_rel_err.max((a - b).abs() / denom);
    }
    let _ = &mut state;
    Ok(GradCheckReport {
        loss_kind: format!("{loss_kind:?}"),
        params_checked: n,
        max_rel_err,
        loss_value,
    })
}
