//! Hand-rolled reverse-mode gradients for the full training objective:
//! summed cross entropy over plain examples plus summed KL divergence over
//! interpolated virtual examples, with gradients flowing into both parents
//! of every virtual pair.

use super::loss::{ce_loss, kl_loss, LossReport};
use super::{apply_layer, forward, head_distribution, DenseLayer, ModelParams, Prediction};
use crate::corpus::EncodedExample;
use crate::error::{Error, Result};
use crate::linalg::{axpy, Mat};
use crate::mixup::{mix_labels, one_hot, smix, tmix, MixDraw, MixMode};
use crate::scalar::Scalar;

/// One entry of a training batch.
#[derive(Clone, Debug, PartialEq)]
pub enum BatchItem<F> {
    /// An ordinary example scored with cross entropy.
    Plain { token_ids: Vec<usize>, label: usize },
    /// A virtual example: both parents are run to `layer`, interpolated
    /// with weight `lambda`, and the blend is scored with KL against the
    /// interpolated soft label.
    Virtual {
        parent_i: Vec<usize>,
        parent_j: Vec<usize>,
        lambda: F,
        layer: usize,
        mode: MixMode,
        soft_label: Vec<F>,
    },
}

impl<F: Scalar> BatchItem<F> {
    pub fn plain(ex: &EncodedExample) -> Self {
        BatchItem::Plain {
            token_ids: ex.token_ids.clone(),
            label: ex.label,
        }
    }

    /// Build a virtual item from two encoded parents and a mix draw. The
    /// soft label is computed exactly like `mixup::make_virtual_pair_with`.
    pub fn virtual_pair(
        a: &EncodedExample,
        b: &EncodedExample,
        draw: MixDraw,
        mode: MixMode,
        class_count: usize,
    ) -> Self {
        let lambda = F::from_f64_cfg(draw.lambda);
        let soft_label = mix_labels(
            &one_hot::<F>(a.label, class_count),
            &one_hot::<F>(b.label, class_count),
            lambda,
        );
        BatchItem::Virtual {
            parent_i: a.token_ids.clone(),
            parent_j: b.token_ids.clone(),
            lambda,
            layer: draw.layer,
            mode,
            soft_label,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Batch<F> {
    pub items: Vec<BatchItem<F>>,
}

impl<F: Scalar> Batch<F> {
    pub fn new(items: Vec<BatchItem<F>>) -> Self {
        Batch { items }
    }

    pub fn from_plain(examples: &[&EncodedExample]) -> Self {
        Batch {
            items: examples.iter().map(|e| BatchItem::plain(e)).collect(),
        }
    }
}

/// Parameter gradients, stored in the same shapes and flattened order as
/// [`ModelParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<F> {
    pub embedding: Mat<F>,
    pub layers: Vec<DenseLayer<F>>,
    pub head_weight: Mat<F>,
    pub head_bias: Vec<F>,
}

impl<F: Scalar> Gradients<F> {
    pub fn zeros_like(params: &ModelParams<F>) -> Self {
        Gradients {
            embedding: Mat::zeros(params.vocab_size(), params.dim()),
            layers: params
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weight: Mat::zeros(l.weight.rows(), l.weight.cols()),
                    bias: vec![F::zero(); l.bias.len()],
                })
                .collect(),
            head_weight: Mat::zeros(params.head_weight.rows(), params.head_weight.cols()),
            head_bias: vec![F::zero(); params.head_bias.len()],
        }
    }

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

    pub fn get_flat(&self, mut i: usize) -> F {
        for seg in self.segments() {
            if i < seg.len() {
                return seg[i];
            }
            i -= seg.len();
        }
        panic!("flat index out of range");
    }

    pub fn flat_len(&self) -> usize {
        self.segments().iter().map(|s| s.len()).sum()
    }

    fn segments_mut(&mut self) -> Vec<&mut [F]> {
        let mut segs = vec![self.embedding.as_mut_slice()];
        for layer in &mut self.layers {
            segs.push(layer.weight.as_mut_slice());
            segs.push(&mut layer.bias);
        }
        segs.push(self.head_weight.as_mut_slice());
        segs.push(&mut self.head_bias);
        segs
    }

    /// Elementwise `self += other`. Batch gradients accumulate item by item
    /// through this, which keeps the sum exactly linear in repeated items:
    /// adding the same contribution twice doubles it with no rounding.
    fn add_assign(&mut self, other: &Gradients<F>) {
        for (dst, src) in self.segments_mut().iter_mut().zip(other.segments()) {
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + s;
            }
        }
    }
}

/// Gradient of the cross-entropy loss with respect to the logits. The
/// probability floor makes the loss locally constant once the gold
/// probability underflows it, so the gradient is zero there.
fn ce_dlogits<F: Scalar>(pred: &Prediction<F>, label: usize) -> Vec<F> {
    let floor = F::prob_floor();
    if pred.prob(label) <= floor {
        return vec![F::zero(); pred.class_count()];
    }
    let mut d = pred.probs.clone();
    d[label] = d[label] - F::one();
    d
}

/// Gradient of `KL(soft || pred)` with respect to the logits: `pred - soft`
/// in the ordinary case. Entries whose predicted probability sits at the
/// floor contribute nothing, handled by the masked branch.
fn kl_dlogits<F: Scalar>(pred: &Prediction<F>, soft: &[F]) -> Vec<F> {
    let floor = F::prob_floor();
    if pred.probs.iter().all(|&p| p > floor) {
        return pred
            .probs
            .iter()
            .zip(soft)
            .map(|(&p, &s)| p - s)
            .collect();
    }
    let mut active_mass = F::zero();
    for (&p, &s) in pred.probs.iter().zip(soft) {
        if p > floor {
            active_mass = active_mass + s;
        }
    }
    pred.probs
        .iter()
        .zip(soft)
        .map(|(&p, &s)| {
            let own = if p > floor { s } else { F::zero() };
            active_mass * p - own
        })
        .collect()
}

/// Backpropagate through the softmax head. Returns the gradient with
/// respect to the pooled vector.
fn backprop_head<F: Scalar>(
    params: &ModelParams<F>,
    pooled: &[F],
    dlogits: &[F],
    grads: &mut Gradients<F>,
) -> Vec<F> {
    grads.head_weight.add_outer(dlogits, pooled);
    axpy(&mut grads.head_bias, F::one(), dlogits);
    params.head_weight.matvec_transposed(dlogits)
}

/// Spread the pooled gradient back over the rows it was averaged from.
fn backprop_pool<F: Scalar>(dpooled: &[F], rows: usize) -> Mat<F> {
    let n = F::from_usize(rows).expect("row count fits scalar");
    let mut dh = Mat::zeros(rows, dpooled.len());
    for r in 0..rows {
        for (c, &dp) in dpooled.iter().enumerate() {
            dh.set(r, c, dp / n);
        }
    }
    dh
}

/// Backpropagate one dense tanh layer. `h_out = tanh(W h_in + b)` row by
/// row; accumulates into the layer's gradient slot and returns `dh_in`.
fn backprop_layer<F: Scalar>(
    layer: &DenseLayer<F>,
    h_in: &Mat<F>,
    h_out: &Mat<F>,
    dh_out: &Mat<F>,
    grad_layer: &mut DenseLayer<F>,
) -> Mat<F> {
    let mut dh_in = Mat::zeros(h_in.rows(), h_in.cols());
    let mut dpre = vec![F::zero(); h_out.cols()];
    for r in 0..h_out.rows() {
        for c in 0..h_out.cols() {
            let h = h_out.get(r, c);
            dpre[c] = dh_out.get(r, c) * (F::one() - h * h);
        }
        grad_layer.weight.add_outer(&dpre, h_in.row(r));
        axpy(&mut grad_layer.bias, F::one(), &dpre);
        let back = layer.weight.matvec_transposed(&dpre);
        axpy(dh_in.row_mut(r), F::one(), &back);
    }
    dh_in
}

/// Walk gradients from layer `top` down to the embedding output and add
/// the embedding-row contributions. `states[l]` is the hidden state after
/// layer `l`; `dh` is the gradient at `states[top]`.
fn descend_to_embedding<F: Scalar>(
    params: &ModelParams<F>,
    states: &[Mat<F>],
    top: usize,
    mut dh: Mat<F>,
    token_ids: &[usize],
    grads: &mut Gradients<F>,
) {
    for l in (1..=top).rev() {
        dh = backprop_layer(
            &params.layers[l - 1],
            &states[l - 1],
            &states[l],
            &dh,
            &mut grads.layers[l - 1],
        );
    }
    for (r, &id) in token_ids.iter().enumerate() {
        axpy(grads.embedding.row_mut(id), F::one(), dh.row(r));
    }
}

/// Run the embedding and the first `upto` layers, keeping every state.
fn forward_states<F: Scalar>(
    params: &ModelParams<F>,
    token_ids: &[usize],
    upto: usize,
) -> Result<Vec<Mat<F>>> {
    let (stack, _) = forward(params, token_ids)?;
    let mut states = stack.states;
    states.truncate(upto + 1);
    Ok(states)
}

/// Forward-only evaluation of a batch's loss, using the same helpers the
/// backward pass differentiates. Useful on its own and as the function a
/// finite-difference check perturbs.
pub fn batch_loss<F: Scalar>(params: &ModelParams<F>, batch: &Batch<F>) -> Result<LossReport<F>> {
    let mut ce = F::zero();
    let mut kl = F::zero();
    for item in &batch.items {
        match item {
            BatchItem::Plain { token_ids, label } => {
                let (_, pred) = forward(params, token_ids)?;
                ce = ce + ce_loss(&pred, *label);
            }
            BatchItem::Virtual {
                parent_i,
                parent_j,
                lambda,
                layer,
                mode,
                soft_label,
            } => {
                let (sa, _) = forward(params, parent_i)?;
                let (sb, _) = forward(params, parent_j)?;
                let ha = sa.layer(*layer);
                let hb = sb.layer(*layer);
                let pred = match mode {
                    MixMode::Tmix => {
                        let mixed = tmix(ha, hb, *lambda)?;
                        super::forward_from_layer(params, &mixed, *layer)?
                    }
                    MixMode::Smix => {
                        let mixed = smix(&ha.mean_rows(), &hb.mean_rows(), *lambda)?;
                        super::forward_from_layer(params, &Mat::from_row(mixed), *layer)?
                    }
                };
                kl = kl + kl_loss(&pred, soft_label);
            }
        }
    }
    let report = LossReport::new(ce, kl);
    if !report.is_finite() {
        return Err(Error::Training(format!(
            "non-finite loss: ce={} kl={}",
            report.ce, report.kl
        )));
    }
    Ok(report)
}

/// Loss and exact parameter gradients of a batch under sum reduction.
/// Items are processed in order and accumulated sequentially, so the
/// result is bitwise reproducible.
pub fn backward<F: Scalar>(
    params: &ModelParams<F>,
    batch: &Batch<F>,
) -> Result<(LossReport<F>, Gradients<F>)> {
    let mut grads = Gradients::zeros_like(params);
    let mut ce = F::zero();
    let mut kl = F::zero();
    let top = params.layer_count();

    for item in &batch.items {
        // Per-item buffer, folded in once the item is done. Accumulating
        // whole contributions elementwise keeps the batch sum exactly
        // linear in its items; interleaving row-level updates would not.
        let mut item_grads = Gradients::zeros_like(params);
        match item {
            BatchItem::Plain { token_ids, label } => {
                if *label >= params.class_count() {
                    return Err(Error::Input(format!(
                        "label {label} outside {} classes",
                        params.class_count()
                    )));
                }
                let (stack, pred) = forward(params, token_ids)?;
                ce = ce + ce_loss(&pred, *label);
                let pooled = stack.top().mean_rows();
                let dlogits = ce_dlogits(&pred, *label);
                let dpooled = backprop_head(params, &pooled, &dlogits, &mut item_grads);
                let dh = backprop_pool(&dpooled, stack.top().rows());
                descend_to_embedding(params, &stack.states, top, dh, token_ids, &mut item_grads);
            }
            BatchItem::Virtual {
                parent_i,
                parent_j,
                lambda,
                layer,
                mode,
                soft_label,
            } => {
                let l = *layer;
                if l == 0 || l > top {
                    return Err(Error::Input(format!("mix layer {l} outside 1..={top}")));
                }
                if soft_label.len() != params.class_count() {
                    return Err(Error::Input("soft label width mismatch".to_string()));
                }
                let states_a = forward_states(params, parent_i, l)?;
                let states_b = forward_states(params, parent_j, l)?;
                let ha = &states_a[l];
                let hb = &states_b[l];
                let lam = *lambda;
                let one_minus = F::one() - lam;

                // Mix, then ascend the remaining layers keeping states.
                let mixed0 = match mode {
                    MixMode::Tmix => tmix(ha, hb, lam)?,
                    MixMode::Smix => Mat::from_row(smix(&ha.mean_rows(), &hb.mean_rows(), lam)?),
                };
                let mut mixed_states = Vec::with_capacity(top - l + 1);
                mixed_states.push(mixed0);
                for layer_params in &params.layers[l..] {
                    let next = apply_layer(layer_params, mixed_states.last().expect("non-empty"));
                    mixed_states.push(next);
                }
                let mixed_top = mixed_states.last().expect("non-empty");
                let pooled = mixed_top.mean_rows();
                let pred = head_distribution(params, &pooled);
                kl = kl + kl_loss(&pred, soft_label);

                // Head, pool, then the mixed segment of the stack.
                let dlogits = kl_dlogits(&pred, soft_label);
                let dpooled = backprop_head(params, &pooled, &dlogits, &mut item_grads);
                let mut dmix = backprop_pool(&dpooled, mixed_top.rows());
                for k in (1..mixed_states.len()).rev() {
                    dmix = backprop_layer(
                        &params.layers[l + k - 1],
                        &mixed_states[k - 1],
                        &mixed_states[k],
                        &dmix,
                        &mut item_grads.layers[l + k - 1],
                    );
                }

                // Split the blend gradient between the parents. Padding
                // rows were synthetic zeros and send nothing back.
                let (dha, dhb) = match mode {
                    MixMode::Tmix => {
                        let mut dha = Mat::zeros(ha.rows(), ha.cols());
                        let mut dhb = Mat::zeros(hb.rows(), hb.cols());
                        for r in 0..dmix.rows() {
                            if r < ha.rows() {
                                axpy(dha.row_mut(r), lam, dmix.row(r));
                            }
                            if r < hb.rows() {
                                axpy(dhb.row_mut(r), one_minus, dmix.row(r));
                            }
                        }
                        (dha, dhb)
                    }
                    MixMode::Smix => {
                        // dmix is 1 x dim: the mixed pooled vector.
                        let dmixed_pooled = dmix.row(0);
                        let na = F::from_usize(ha.rows()).expect("rows fit scalar");
                        let nb = F::from_usize(hb.rows()).expect("rows fit scalar");
                        let mut dha = Mat::zeros(ha.rows(), ha.cols());
                        let mut dhb = Mat::zeros(hb.rows(), hb.cols());
                        for r in 0..ha.rows() {
                            for (c, &d) in dmixed_pooled.iter().enumerate() {
                                dha.set(r, c, lam * d / na);
                            }
                        }
                        for r in 0..hb.rows() {
                            for (c, &d) in dmixed_pooled.iter().enumerate() {
                                dhb.set(r, c, one_minus * d / nb);
                            }
                        }
                        (dha, dhb)
                    }
                };
                descend_to_embedding(params, &states_a, l, dha, parent_i, &mut item_grads);
                descend_to_embedding(params, &states_b, l, dhb, parent_j, &mut item_grads);
            }
        }
        grads.add_assign(&item_grads);
    }

    let report = LossReport::new(ce, kl);
    if !report.is_finite() {
        return Err(Error::Training(format!(
            "non-finite loss: ce={} kl={}",
            report.ce, report.kl
        )));
    }
    Ok((report, grads))
}

/// One plain SGD step with a fixed learning rate: `p -= lr * g`, applied
/// in the shared flattened order.
pub fn train_step<F: Scalar>(
    params: &mut ModelParams<F>,
    batch: &Batch<F>,
    learning_rate: F,
) -> Result<LossReport<F>> {
    let (report, grads) = backward(params, batch)?;
    let mut p_segs = params.segments_mut();
    let g_segs = grads.segments();
    for (p_seg, g_seg) in p_segs.iter_mut().zip(g_segs) {
        for (p, &g) in p_seg.iter_mut().zip(g_seg) {
            *p = *p - learning_rate * g;
        }
    }
    Ok(report)
}
