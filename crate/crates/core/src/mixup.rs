//! Representation-level interpolation. Two training examples are run to a
//! hidden layer, their states are mixed with a Beta-distributed weight, and
//! the blend continues through the remaining layers against an equally
//! mixed soft label.

use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::corpus::EncodedExample;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::model::{forward, forward_from_layer, ModelParams, Prediction};
use crate::scalar::Scalar;

/// Where the interpolation happens.
///
/// `Tmix` mixes the per-token hidden matrices, zero-padding the shorter
/// sequence. `Smix` mean-pools each parent's hidden state first and mixes
/// the two pooled vectors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MixMode {
    Tmix,
    Smix,
}

impl std::fmt::Display for MixMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MixMode::Tmix => write!(f, "tmix"),
            MixMode::Smix => write!(f, "smix"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixupConfig {
    /// Beta distribution shape; the mixing weight is drawn from
    /// `Beta(alpha, alpha)`.
    pub alpha: f64,
    pub mode: MixMode,
    /// Hidden layers eligible for mixing, each in `1..=L`. One is chosen
    /// uniformly per virtual pair.
    pub layers: Vec<usize>,
    /// Virtual pairs trained on per epoch. Zero disables mixup entirely,
    /// including its random draws.
    pub pairs_per_epoch: usize,
}

impl MixupConfig {
    /// Configuration that turns mixup off.
    pub fn disabled() -> Self {
        MixupConfig {
            alpha: 1.0,
            mode: MixMode::Tmix,
            layers: Vec::new(),
            pairs_per_epoch: 0,
        }
    }

    /// Check against a model with `layer_count` dense layers. The alpha
    /// and layer constraints only matter when pairs are actually drawn.
    pub fn validate(&self, layer_count: usize) -> Result<()> {
        if self.pairs_per_epoch == 0 {
            return Ok(());
        }
        if !(self.alpha > 0.0) {
            return Err(Error::Config("mixup.alpha must be positive".to_string()));
        }
        if self.layers.is_empty() {
            return Err(Error::Config(
                "mixup.layers must list at least one layer".to_string(),
            ));
        }
        for &l in &self.layers {
            if l == 0 || l > layer_count {
                return Err(Error::Config(format!(
                    "mixup layer {l} outside 1..={layer_count}"
                )));
            }
        }
        Ok(())
    }
}

/// Draw the mixing weight from `Beta(alpha, alpha)`.
pub fn sample_lambda<R: Rng>(alpha: f64, rng: &mut R) -> Result<f64> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!(
            "beta shape must be a positive finite number, got {alpha}"
        )));
    }
    let beta = rand_distr::Beta::new(alpha, alpha)
        .map_err(|e| Error::Config(format!("beta({alpha}, {alpha}): {e}")))?;
    Ok(beta.sample(rng))
}

/// One-hot distribution over `class_count` classes.
pub fn one_hot<F: Scalar>(label: usize, class_count: usize) -> Vec<F> {
    assert!(label < class_count, "label out of range");
    let mut v = vec![F::zero(); class_count];
    v[label] = F::one();
    v
}

/// `lambda * yi + (1 - lambda) * yj`, elementwise.
pub fn mix_labels<F: Scalar>(yi: &[F], yj: &[F], lambda: F) -> Vec<F> {
    assert_eq!(yi.len(), yj.len(), "label widths must match");
    let one_minus = F::one() - lambda;
    yi.iter()
        .zip(yj)
        .map(|(&a, &b)| lambda * a + one_minus * b)
        .collect()
}

/// Token-level interpolation of two hidden states with the same width.
/// The shorter sequence is implicitly zero-padded to the longer length, so
/// padded rows hold exact scalar multiples of the longer parent's rows.
pub fn tmix<F: Scalar>(hi: &Mat<F>, hj: &Mat<F>, lambda: F) -> Result<Mat<F>> {
    if hi.cols() != hj.cols() {
        return Err(Error::Input(format!(
            "cannot mix hidden widths {} and {}",
            hi.cols(),
            hj.cols()
        )));
    }
    let rows = hi.rows().max(hj.rows());
    let one_minus = F::one() - lambda;
    let mut out = Mat::zeros(rows, hi.cols());
    for r in 0..rows {
        let row = out.row_mut(r);
        for c in 0..row.len() {
            let a = if r < hi.rows() { hi.get(r, c) } else { F::zero() };
            let b = if r < hj.rows() { hj.get(r, c) } else { F::zero() };
            row[c] = lambda * a + one_minus * b;
        }
    }
    Ok(out)
}

/// Pooled-vector interpolation.
pub fn smix<F: Scalar>(vi: &[F], vj: &[F], lambda: F) -> Result<Vec<F>> {
    if vi.len() != vj.len() {
        return Err(Error::Input(format!(
            "cannot mix pooled widths {} and {}",
            vi.len(),
            vj.len()
        )));
    }
    Ok(mix_labels(vi, vj, lambda))
}

/// Interpolated hidden representation, ready to resume the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub enum MixedRepr<F> {
    /// Per-token state, `max(Ti, Tj) x dim`.
    Tokens(Mat<F>),
    /// Pooled state, length `dim`.
    Pooled(Vec<F>),
}

/// A virtual training example: a mixed representation at some layer plus
/// the matching soft label. Carries everything needed to finish the
/// forward pass and score it with the KL loss.
#[derive(Clone, Debug, PartialEq)]
pub struct VirtualExample<F> {
    pub repr: MixedRepr<F>,
    pub soft_label: Vec<F>,
    pub lambda: F,
    pub layer: usize,
    /// Dataset ids of the two parents, `(i, j)`.
    pub parents: (usize, usize),
}

/// Random choices behind one virtual pair, in draw order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixDraw {
    pub lambda: f64,
    pub layer: usize,
}

/// Draw the mixing weight, then the layer. The order is part of the
/// reproducibility contract.
pub fn sample_mix<R: Rng>(config: &MixupConfig, rng: &mut R) -> Result<MixDraw> {
    let lambda = sample_lambda(config.alpha, rng)?;
    if config.layers.is_empty() {
        return Err(Error::Config(
            "mixup.layers must list at least one layer".to_string(),
        ));
    }
    let layer = config.layers[rng.random_range(0..config.layers.len())];
    Ok(MixDraw { lambda, layer })
}

/// Build one virtual example from two encoded parents using randomness
/// from `rng` (weight first, then layer).
pub fn make_virtual_pair<F: Scalar, R: Rng>(
    params: &ModelParams<F>,
    a: &EncodedExample,
    b: &EncodedExample,
    class_count: usize,
    config: &MixupConfig,
    rng: &mut R,
) -> Result<VirtualExample<F>> {
    let draw = sample_mix(config, rng)?;
    make_virtual_pair_with(params, a, b, class_count, config.mode, draw)
}

/// Deterministic core of [`make_virtual_pair`], reused by the trainer so
/// that the exact same interpolation feeds the backward pass.
pub fn make_virtual_pair_with<F: Scalar>(
    params: &ModelParams<F>,
    a: &EncodedExample,
    b: &EncodedExample,
    class_count: usize,
    mode: MixMode,
    draw: MixDraw,
) -> Result<VirtualExample<F>> {
    if draw.layer == 0 || draw.layer > params.layer_count() {
        return Err(Error::Input(format!(
            "mix layer {} outside 1..={}",
            draw.layer,
            params.layer_count()
        )));
    }
    if a.label >= class_count || b.label >= class_count {
        return Err(Error::Input("parent label outside class count".to_string()));
    }
    let lambda = F::from_f64_cfg(draw.lambda);
    let (stack_a, _) = forward(params, &a.token_ids)?;
    let (stack_b, _) = forward(params, &b.token_ids)?;
    let ha = stack_a.layer(draw.layer);
    let hb = stack_b.layer(draw.layer);
    let repr = match mode {
        MixMode::Tmix => MixedRepr::Tokens(tmix(ha, hb, lambda)?),
        MixMode::Smix => MixedRepr::Pooled(smix(&ha.mean_rows(), &hb.mean_rows(), lambda)?),
    };
    let soft_label = mix_labels(
        &one_hot::<F>(a.label, class_count),
        &one_hot::<F>(b.label, class_count),
        lambda,
    );
    Ok(VirtualExample {
        repr,
        soft_label,
        lambda,
        layer: draw.layer,
        parents: (a.id, b.id),
    })
}

/// Finish the forward pass of a virtual example.
pub fn virtual_prediction<F: Scalar>(
    params: &ModelParams<F>,
    v: &VirtualExample<F>,
) -> Result<Prediction<F>> {
    match &v.repr {
        MixedRepr::Tokens(h) => forward_from_layer(params, h, v.layer),
        MixedRepr::Pooled(p) => {
            forward_from_layer(params, &Mat::from_row(p.clone()), v.layer)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    fn enc(id: usize, ids: Vec<usize>, label: usize) -> EncodedExample {
        EncodedExample {
            id,
            token_ids: ids,
            label,
        }
    }

    fn model(seed: u64) -> ModelParams<f64> {
        ModelParams::init(&crate::model::ModelConfig { dim: 4, layers: 3 }, 10, 2, seed).unwrap()
    }

    fn config(mode: MixMode, layers: Vec<usize>) -> MixupConfig {
        MixupConfig {
            alpha: 0.4,
            mode,
            layers,
            pairs_per_epoch: 4,
        }
    }

    #[test]
    fn mix_labels_hand_value() {
        let mixed = mix_labels(&[1.0f64, 0.0], &[0.0, 1.0], 0.25);
        assert_eq!(mixed, vec![0.25, 0.75]);
    }

    #[test]
    fn one_hot_shape() {
        assert_eq!(one_hot::<f64>(2, 4), vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn tmix_pads_shorter_parent_with_zero_contribution() {
        let a = Mat::from_rows(vec![vec![2.0f64, 4.0]]).unwrap();
        let b = Mat::from_rows(vec![vec![1.0, 1.0], vec![8.0, 2.0]]).unwrap();
        let m = tmix(&a, &b, 0.5).unwrap();
        assert_eq!(m.rows(), 2);
        assert_eq!(m.row(0), &[1.5, 2.5]);
        // Row 1 only sees parent b, scaled by 1 - lambda.
        assert_eq!(m.row(1), &[4.0, 1.0]);
    }

    #[test]
    fn tmix_lambda_one_is_bitwise_identity_when_first_parent_longer() {
        let a = Mat::from_rows(vec![vec![0.1f64, -0.7], vec![0.3, 0.9]]).unwrap();
        let b = Mat::from_rows(vec![vec![0.5, 0.2]]).unwrap();
        let m = tmix(&a, &b, 1.0).unwrap();
        assert!(m.bits_eq(&a));
    }

    #[test]
    fn tmix_rejects_width_mismatch() {
        let a = Mat::zeros(1, 3);
        let b = Mat::zeros(1, 4);
        assert!(tmix::<f64>(&a, &b, 0.5).is_err());
    }

    #[test]
    fn smix_midpoint() {
        let m = smix(&[1.0f64, 3.0], &[3.0, 5.0], 0.5).unwrap();
        assert_eq!(m, vec![2.0, 4.0]);
    }

    #[test]
    fn lambda_draws_stay_in_unit_interval() {
        for alpha in [0.2, 1.0, 8.0] {
            let mut rng = seeds::rng_for(9, "lambda-test");
            for _ in 0..500 {
                let l = sample_lambda(alpha, &mut rng).unwrap();
                assert!((0.0..=1.0).contains(&l), "alpha {alpha} gave {l}");
            }
        }
    }

    #[test]
    fn invalid_alpha_is_a_config_error() {
        let mut rng = seeds::rng_for(9, "lambda-test");
        assert!(sample_lambda(0.0, &mut rng).is_err());
        assert!(sample_lambda(-1.0, &mut rng).is_err());
        assert!(sample_lambda(f64::NAN, &mut rng).is_err());
    }

    #[test]
    fn fixed_seed_reproduces_the_same_virtual_example() {
        let m = model(5);
        let a = enc(0, vec![2, 3, 4], 0);
        let b = enc(1, vec![5, 6], 1);
        let cfg = config(MixMode::Tmix, vec![1, 2, 3]);
        let mut r1 = seeds::rng_for(3, "mix");
        let mut r2 = seeds::rng_for(3, "mix");
        let v1 = make_virtual_pair(&m, &a, &b, 2, &cfg, &mut r1).unwrap();
        let v2 = make_virtual_pair(&m, &a, &b, 2, &cfg, &mut r2).unwrap();
        assert_eq!(v1, v2);
        assert_eq!(v1.parents, (0, 1));
    }

    #[test]
    fn token_mode_lambda_one_reproduces_longer_parent_bitwise() {
        let m = model(5);
        let a = enc(0, vec![2, 3, 4], 0);
        let b = enc(1, vec![5, 6], 1);
        for layer in 1..=3 {
            let v = make_virtual_pair_with(
                &m,
                &a,
                &b,
                2,
                MixMode::Tmix,
                MixDraw { lambda: 1.0, layer },
            )
            .unwrap();
            let (stack, pred_a) = forward(&m, &a.token_ids).unwrap();
            match &v.repr {
                MixedRepr::Tokens(h) => assert!(h.bits_eq(stack.layer(layer))),
                MixedRepr::Pooled(_) => unreachable!(),
            }
            let pred_v = virtual_prediction(&m, &v).unwrap();
            for (x, y) in pred_v.probs.iter().zip(&pred_a.probs) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn pooled_mode_at_top_layer_reproduces_parent_prediction_bitwise() {
        // Pooling commutes with nothing below the top, so the exact
        // identity only holds when mixing at layer L.
        let m = model(5);
        let a = enc(0, vec![2, 3, 4], 0);
        let b = enc(1, vec![5, 6], 1);
        let top = m.layer_count();
        let v = make_virtual_pair_with(
            &m,
            &a,
            &b,
            2,
            MixMode::Smix,
            MixDraw { lambda: 1.0, layer: top },
        )
        .unwrap();
        let (_, pred_a) = forward(&m, &a.token_ids).unwrap();
        let pred_v = virtual_prediction(&m, &v).unwrap();
        for (x, y) in pred_v.probs.iter().zip(&pred_a.probs) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn self_mix_returns_own_representation() {
        let m = model(5);
        let a = enc(0, vec![2, 3, 4], 0);
        for lambda in [0.0, 0.25, 0.37, 0.5, 1.0] {
            let v = make_virtual_pair_with(
                &m,
                &a,
                &a,
                2,
                MixMode::Tmix,
                MixDraw { lambda, layer: 2 },
            )
            .unwrap();
            let (stack, _) = forward(&m, &a.token_ids).unwrap();
            match &v.repr {
                MixedRepr::Tokens(h) => {
                    for r in 0..h.rows() {
                        for c in 0..h.cols() {
                            let diff = (h.get(r, c) - stack.layer(2).get(r, c)).abs();
                            assert!(diff < 1e-12, "lambda {lambda}: diff {diff}");
                        }
                    }
                }
                MixedRepr::Pooled(_) => unreachable!(),
            }
            assert_eq!(v.soft_label, one_hot::<f64>(0, 2));
        }
    }

    #[test]
    fn swap_symmetry_for_dyadic_lambda_is_exact() {
        let m = model(5);
        let a = enc(0, vec![2, 3, 4], 0);
        let b = enc(1, vec![5, 6], 1);
        for lambda in [0.25, 0.5, 0.75] {
            let v_ab = make_virtual_pair_with(
                &m, &a, &b, 2, MixMode::Tmix, MixDraw { lambda, layer: 2 },
            )
            .unwrap();
            let v_ba = make_virtual_pair_with(
                &m, &b, &a, 2, MixMode::Tmix,
                MixDraw { lambda: 1.0 - lambda, layer: 2 },
            )
            .unwrap();
            match (&v_ab.repr, &v_ba.repr) {
                (MixedRepr::Tokens(x), MixedRepr::Tokens(y)) => assert!(x.bits_eq(y)),
                _ => unreachable!(),
            }
            assert_eq!(v_ab.soft_label, v_ba.soft_label);
        }
    }

    #[test]
    fn layer_zero_and_overflow_rejected() {
        let m = model(5);
        let a = enc(0, vec![2], 0);
        for layer in [0, 4] {
            let r = make_virtual_pair_with(
                &m, &a, &a, 2, MixMode::Tmix, MixDraw { lambda: 0.5, layer },
            );
            assert!(r.is_err(), "layer {layer} accepted");
        }
    }

    #[test]
    fn disabled_config_passes_validation_without_layers() {
        assert!(MixupConfig::disabled().validate(3).is_ok());
        let mut bad = MixupConfig::disabled();
        bad.pairs_per_epoch = 1;
        assert!(bad.validate(3).is_err());
    }
}
