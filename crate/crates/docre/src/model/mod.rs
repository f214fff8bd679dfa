//! A compact differentiable multi-label classifier over document views.
//!
//! The same weights score a full document and its sentence-removed views:
//! token representations are computed over surviving sentences only, mention
//! and entity representations average over surviving mentions, and a
//! two-layer tanh classifier maps [head; tail; context] to per-relation
//! probabilities. Gradients are exact and analytic; the finite-difference
//! harness in [`crate::train`] checks every parameter block.

mod backward;
mod forward;

pub use backward::backward;
pub use forward::{forward, forward_call_count, reset_forward_call_count};

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{make_view, Document};
use crate::seeds::substream;
use crate::{Error, Result, PROB_EPS};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    MeanPool,
    SimpleBirnn,
}

impl std::str::FromStr for EncoderKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_pool" => Ok(Self::MeanPool),
            "simple_birnn" => Ok(Self::SimpleBirnn),
            other => Err(Error::Config(format!("unknown encoder_kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub encoder_kind: EncoderKind,
    pub relation_count: usize,
    pub vocab_size: usize,
    pub seed: u64,
    pub init_scale: f64,
}

impl ModelConfig {
    pub fn defaults(relation_count: usize, vocab_size: usize) -> Self {
        Self {
            embedding_dim: 32,
            hidden_dim: 32,
            encoder_kind: EncoderKind::MeanPool,
            relation_count,
            vocab_size,
            seed: 0,
            init_scale: 0.1,
        }
    }

    /// Consumes model keys from a parsed key=value config; `relation_count`
    /// and `vocab_size` come from the corpus, `seed` from the run.
    pub fn from_kv(
        cfg: &mut crate::config::KvConfig,
        relation_count: usize,
        vocab_size: usize,
        seed: u64,
    ) -> Result<Self> {
        let d = Self::defaults(relation_count, vocab_size);
        let out = Self {
            embedding_dim: cfg.take("embedding_dim", d.embedding_dim)?,
            hidden_dim: cfg.take("hidden_dim", d.hidden_dim)?,
            encoder_kind: cfg.take("encoder_kind", d.encoder_kind)?,
            relation_count,
            vocab_size,
            seed,
            init_scale: cfg.take("init_scale", d.init_scale)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Config("model dims must be positive".into()));
        }
        if self.relation_count == 0 {
            return Err(Error::Config("relation_count must be at least 1".into()));
        }
        if self.vocab_size == 0 {
            return Err(Error::Config("vocab_size must be positive".into()));
        }
        Ok(())
    }

    /// Per-token representation width produced by the encoder.
    pub fn rep_dim(&self) -> usize {
        match self.encoder_kind {
            EncoderKind::MeanPool => self.embedding_dim,
            EncoderKind::SimpleBirnn => 2 * self.hidden_dim,
        }
    }
}

/// Byte ranges of each parameter block inside the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub embedding: Range<usize>,
    /// (w, u, b) for the forward recurrence, when the encoder is a birnn.
    pub rnn_fwd: Option<(Range<usize>, Range<usize>, Range<usize>)>,
    pub rnn_bwd: Option<(Range<usize>, Range<usize>, Range<usize>)>,
    pub w1: Range<usize>,
    pub b1: Range<usize>,
    pub w2: Range<usize>,
    pub b2: Range<usize>,
    pub total: usize,
}

impl ParamLayout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut cursor = 0usize;
        let mut block = |len: usize| {
            let r = cursor..cursor + len;
            cursor += len;
            r
        };
        let emb = block(cfg.vocab_size * cfg.embedding_dim);
        let (rnn_fwd, rnn_bwd) = match cfg.encoder_kind {
            EncoderKind::MeanPool => (None, None),
            EncoderKind::SimpleBirnn => {
                let h = cfg.hidden_dim;
                let e = cfg.embedding_dim;
                let fwd = (block(h * e), block(h * h), block(h));
                let bwd = (block(h * e), block(h * h), block(h));
                (Some(fwd), Some(bwd))
            }
        };
        let d_in = 3 * cfg.rep_dim();
        let w1 = block(cfg.hidden_dim * d_in);
        let b1 = block(cfg.hidden_dim);
        let w2 = block(cfg.relation_count * cfg.hidden_dim);
        let b2 = block(cfg.relation_count);
        Self {
            embedding: emb,
            rnn_fwd,
            rnn_bwd,
            w1,
            b1,
            w2,
            b2,
            total: cursor,
        }
    }
}

/// All trainable parameters plus a version counter used to detect stale
/// forward traces.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub layout: ParamLayout,
    params: Vec<f64>,
    version: u64,
}

impl ModelState {
    /// Seeded uniform init in [-init_scale, +init_scale].
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layout = ParamLayout::new(&config);
        let mut rng = substream(config.seed, "init");
        let s = config.init_scale;
        let params = (0..layout.total).map(|_| rng.gen_range(-s..=s)).collect();
        Ok(Self {
            config,
            layout,
            params,
            version: 0,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable access to the parameters; bumps the version so outstanding
    /// traces become stale.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn assert_finite(&self) -> Result<()> {
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} is not finite")));
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = CheckpointFile {
            format_version: CHECKPOINT_FORMAT_VERSION,
            config: self.config.clone(),
            params: self.params.clone(),
        };
        let mut text = serde_json::to_string(&file)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let file: CheckpointFile = serde_json::from_str(&text)?;
        if file.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format version {} unsupported (expected {})",
                file.format_version, CHECKPOINT_FORMAT_VERSION
            )));
        }
        file.config.validate()?;
        let layout = ParamLayout::new(&file.config);
        if file.params.len() != layout.total {
            return Err(Error::Config(format!(
                "checkpoint holds {} parameters, layout expects {}",
                file.params.len(),
                layout.total
            )));
        }
        Ok(Self {
            config: file.config,
            layout,
            params: file.params,
            version: 0,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    config: ModelConfig,
    params: Vec<f64>,
}

/// Per-relation probabilities for one (view, pair).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionVector {
    pub probs: Vec<f64>,
    pub pair: (usize, usize),
    pub doc_id: String,
    pub removed: BTreeSet<usize>,
}

/// Activations cached by one forward pass, sufficient for exact
/// backpropagation against the same state version.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub(crate) version: u64,
    /// Vocab id of each surviving token, in document order.
    pub(crate) token_ids: Vec<usize>,
    /// T x rep_dim token representations.
    /// Hidden states of the forward / backward recurrences (T x hidden each),
    /// present only for the birnn encoder.
    pub(crate) rnn_fwd_h: Vec<f64>,
    pub(crate) rnn_bwd_h: Vec<f64>,
    /// Token positions (into the surviving sequence) of each surviving
    /// mention, for head and tail.
    pub(crate) head_mentions: Vec<Vec<usize>>,
    pub(crate) tail_mentions: Vec<Vec<usize>>,
    /// Classifier input [head; tail; context].
    pub(crate) input: Vec<f64>,
    pub(crate) hidden: Vec<f64>,
    /// Raw sigmoid outputs before clamping, plus the clamp mask.
    pub(crate) raw_probs: Vec<f64>,
    pub(crate) clamped: Vec<bool>,
}

/// Gradient buffer shape-congruent with the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientAccumulator {
    grads: Vec<f64>,
}

impl GradientAccumulator {
    pub fn zeros_like(state: &ModelState) -> Self {
        Self {
            grads: vec![0.0; state.param_count()],
        }
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    pub fn scale(&mut self, factor: f64) {
        for g in &mut self.grads {
            *g *= factor;
        }
    }

    pub fn add_scaled(&mut self, other: &GradientAccumulator, factor: f64) {
        for (g, o) in self.grads.iter_mut().zip(&other.grads) {
            *g += factor * o;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.grads.iter().fold(0.0, |m, g| m.max(g.abs()))
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn clamp_prob(p: f64) -> (f64, bool) {
    if p < PROB_EPS {
        (PROB_EPS, true)
    } else if p > 1.0 - PROB_EPS {
        (1.0 - PROB_EPS, true)
    } else {
        (p, false)
    }
}

/// Convenience wrapper: forward on the full document (removed = empty set).
pub fn predict_pair(
    state: &ModelState,
    doc: &Document,
    pair: (usize, usize),
) -> Result<PredictionVector> {
    let view = make_view(doc, BTreeSet::new())?;
    forward(state, &view, pair).map(|(pred, _)| pred)
}
