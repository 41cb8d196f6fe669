//! The classifier under attack: an embedding layer, a stack of dense tanh
//! layers applied per token, mean pooling and a linear head. Small enough
//! to train on a desk machine in seconds, structured enough to have real
//! hidden layers for representation-level interpolation.

mod checkpoint;
mod grad;
mod loss;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use grad::{backward, batch_loss, train_step, Batch, BatchItem, Gradients};
pub use loss::{ce_loss, kl_loss, LossReport};

use rand::distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::scalar::Scalar;
use crate::seeds;

/// Architecture hyperparameters. The parameter shapes additionally depend
/// on the vocabulary and class counts, which come from the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding and hidden width.
    pub dim: usize,
    /// Number of dense tanh layers; at least two so that interior layers
    /// exist for representation mixing.
    pub layers: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("model.dim must be positive".to_string()));
        }
        if self.layers < 2 {
            return Err(Error::Config(
                "model.layers must be at least 2".to_string(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer<F> {
    /// `dim x dim`, row-major.
    pub weight: Mat<F>,
    pub bias: Vec<F>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<F> {
    /// `vocab x dim`; row `i` is the vector for token id `i`.
    pub embedding: Mat<F>,
    pub layers: Vec<DenseLayer<F>>,
    /// `classes x dim`.
    pub head_weight: Mat<F>,
    pub head_bias: Vec<F>,
}

impl<F: Scalar> ModelParams<F> {
    /// Random initialization from the tagged `"init"` stream of `seed`.
    /// Draw order is fixed: embedding row-major, then each layer's weight
    /// and bias, then the head. All draws happen in `f64` and convert, so
    /// `f32` and `f64` models see the same underlying sequence.
    pub fn init(
        config: &ModelConfig,
        vocab_size: usize,
        class_count: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if vocab_size < 2 {
            return Err(Error::Input(
                "vocabulary must contain the reserved tokens".to_string(),
            ));
        }
        if class_count < 2 {
            return Err(Error::Input("need at least two classes".to_string()));
        }
        let mut rng = seeds::rng_for(seed, "init");
        let emb_scale = 0.5;
        let layer_scale = 1.0 / (config.dim as f64).sqrt();
        let head_scale = 0.5;
        let draw = |scale: f64, n: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<F> {
            let dist = Uniform::new_inclusive(-scale, scale).expect("valid range");
            (0..n).map(|_| F::from_f64_cfg(dist.sample(rng))).collect()
        };

        let d = config.dim;
        let mut embedding = Mat::zeros(vocab_size, d);
        embedding
            .as_mut_slice()
            .copy_from_slice(&draw(emb_scale, vocab_size * d, &mut rng));
        let mut layers = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let mut weight = Mat::zeros(d, d);
            weight
                .as_mut_slice()
                .copy_from_slice(&draw(layer_scale, d * d, &mut rng));
            let bias = draw(layer_scale, d, &mut rng);
            layers.push(DenseLayer { weight, bias });
        }
        let mut head_weight = Mat::zeros(class_count, d);
        head_weight
            .as_mut_slice()
            .copy_from_slice(&draw(head_scale, class_count * d, &mut rng));
        let head_bias = draw(head_scale, class_count, &mut rng);
        Ok(ModelParams {
            embedding,
            layers,
            head_weight,
            head_bias,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.embedding.rows()
    }

    pub fn dim(&self) -> usize {
        self.embedding.cols()
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn class_count(&self) -> usize {
        self.head_weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.segments().iter().map(|s| s.len()).sum()
    }

    /// Consistency check used after loading checkpoints.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if d == 0 || self.vocab_size() < 2 || self.class_count() < 2 || self.layer_count() < 2 {
            return Err(Error::Validation(
                "model dimensions out of range".to_string(),
            ));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            if layer.weight.rows() != d || layer.weight.cols() != d || layer.bias.len() != d {
                return Err(Error::Validation(format!("layer {i} has mismatched shape")));
            }
        }
        if self.head_weight.cols() != d || self.head_bias.len() != self.head_weight.rows() {
            return Err(Error::Validation("head has mismatched shape".to_string()));
        }
        if self.segments().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(Error::Validation(
                "model contains non-finite parameters".to_string(),
            ));
        }
        Ok(())
    }

    /// Parameter storage in a fixed order: embedding, layers (weight then
    /// bias), head weight, head bias. Gradients use the same order.
    pub fn segments(&self) -> Vec<&[F]> {
        let mut segs = vec![self.embedding.as_slice()];
        for layer in &self.layers {
            segs.push(layer.weight.as_slice());
            segs.push(&layer.bias);
        }
        segs.push(self.head_weight.as_slice());
        segs.push(&self.head_bias);
        segs
    }

    pub fn segments_mut(&mut self) -> Vec<&mut [F]> {
        let mut segs = vec![self.embedding.as_mut_slice()];
        for layer in &mut self.layers {
            segs.push(layer.weight.as_mut_slice());
            segs.push(layer.bias.as_mut_slice());
        }
        segs.push(self.head_weight.as_mut_slice());
        segs.push(self.head_bias.as_mut_slice());
        segs
    }

    pub fn get_flat(&self, mut i: usize) -> F {
        for seg in self.segments() {
            if i < seg.len() {
                return seg[i];
            }
            i -= seg.len();
        }
        panic!("flat index out of range");
    }

    pub fn set_flat(&mut self, mut i: usize, v: F) {
        for seg in self.segments_mut() {
            if i < seg.len() {
                seg[i] = v;
                return;
            }
            i -= seg.len();
        }
        panic!("flat index out of range");
    }

    /// Bit-level equality, stricter than `PartialEq` (distinguishes signed
    /// zeros, never equates NaN payload changes away).
    pub fn bits_eq(&self, other: &Self) -> bool {
        let a = self.segments();
        let b = other.segments();
        a.len() == b.len()
            && a.iter().zip(&b).all(|(sa, sb)| {
                sa.len() == sb.len()
                    && sa.iter().zip(sb.iter()).all(|(x, y)| x.bits() == y.bits())
            })
    }
}

/// Every per-token hidden state from one forward pass. `states[0]` is the
/// embedded input, `states[l]` the output of layer `l`, each `T x dim`.
#[derive(Clone, Debug)]
pub struct HiddenStack<F> {
    pub states: Vec<Mat<F>>,
}

impl<F: Scalar> HiddenStack<F> {
    pub fn layer(&self, l: usize) -> &Mat<F> {
        &self.states[l]
    }

    pub fn top(&self) -> &Mat<F> {
        self.states.last().expect("stack is never empty")
    }
}

/// Class distribution produced by the softmax head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction<F> {
    pub probs: Vec<F>,
}

impl<F: Scalar> Prediction<F> {
    /// Index of the largest probability; the first one wins ties, which
    /// pins attack outcomes on degenerate predictions.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    pub fn prob(&self, class: usize) -> F {
        self.probs[class]
    }

    pub fn class_count(&self) -> usize {
        self.probs.len()
    }
}

pub(crate) fn apply_layer<F: Scalar>(layer: &DenseLayer<F>, h: &Mat<F>) -> Mat<F> {
    let mut out = Mat::zeros(h.rows(), h.cols());
    for r in 0..h.rows() {
        let pre = layer.weight.matvec(h.row(r));
        let row = out.row_mut(r);
        for (o, (p, &b)) in row.iter_mut().zip(pre.iter().zip(&layer.bias)) {
            *o = (*p + b).tanh();
        }
    }
    out
}

pub(crate) fn head_distribution<F: Scalar>(params: &ModelParams<F>, pooled: &[F]) -> Prediction<F> {
    let mut logits = params.head_weight.matvec(pooled);
    for (z, &b) in logits.iter_mut().zip(&params.head_bias) {
        *z = *z + b;
    }
    softmax(&logits)
}

/// Numerically stable softmax: shift by the max logit, exponentiate,
/// normalize. Equal logits give the exact uniform distribution.
pub fn softmax<F: Scalar>(logits: &[F]) -> Prediction<F> {
    debug_assert!(!logits.is_empty());
    let mut max = logits[0];
    for &z in &logits[1..] {
        if z > max {
            max = z;
        }
    }
    let mut probs: Vec<F> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: F = probs.iter().copied().sum();
    for p in &mut probs {
        *p = *p / sum;
    }
    Prediction { probs }
}

/// Full forward pass. Fails on an empty token sequence or an id outside
/// the embedding table.
pub fn forward<F: Scalar>(
    params: &ModelParams<F>,
    token_ids: &[usize],
) -> Result<(HiddenStack<F>, Prediction<F>)> {
    if token_ids.is_empty() {
        return Err(Error::Input("cannot run the model on zero tokens".to_string()));
    }
    let d = params.dim();
    let mut h = Mat::zeros(token_ids.len(), d);
    for (r, &id) in token_ids.iter().enumerate() {
        if id >= params.vocab_size() {
            return Err(Error::Input(format!(
                "token id {id} outside vocabulary of {}",
                params.vocab_size()
            )));
        }
        h.row_mut(r).copy_from_slice(params.embedding.row(id));
    }
    let mut states = Vec::with_capacity(params.layer_count() + 1);
    states.push(h);
    for layer in &params.layers {
        let next = apply_layer(layer, states.last().expect("non-empty"));
        states.push(next);
    }
    let stack = HiddenStack { states };
    let pooled = stack.top().mean_rows();
    let pred = head_distribution(params, &pooled);
    Ok((stack, pred))
}

/// Resume the forward pass from a hidden state at `layer` (0 is the
/// embedding output, `L` the top). The rows are treated as token vectors;
/// a single-row matrix represents an already-pooled state, which only
/// matches the full pass exactly when `layer == L` because pooling and the
/// tanh stack do not commute.
///
/// Runs the same per-layer and pooling code as [`forward`], so resuming at
/// layer `l` with `stack.layer(l)` reproduces the original prediction bit
/// for bit.
pub fn forward_from_layer<F: Scalar>(
    params: &ModelParams<F>,
    hidden: &Mat<F>,
    layer: usize,
) -> Result<Prediction<F>> {
    let total = params.layer_count();
    if layer > total {
        return Err(Error::Input(format!(
            "layer {layer} out of range, model has {total} layers"
        )));
    }
    if hidden.cols() != params.dim() {
        return Err(Error::Input(format!(
            "hidden state has width {}, model dimension is {}",
            hidden.cols(),
            params.dim()
        )));
    }
    if hidden.rows() == 0 {
        return Err(Error::Input("hidden state has no rows".to_string()));
    }
    let mut h = hidden.clone();
    for layer in &params.layers[layer..] {
        h = apply_layer(layer, &h);
    }
    let pooled = h.mean_rows();
    Ok(head_distribution(params, &pooled))
}
