// SPDX-License-Identifier: MIT OR Apache-2.0

//! Sparse autoencoder with a pre-encoder bias and unit-norm decoder rows.
//!
//! Activations are centred and rescaled before they reach the encoder so
//! that a single sparsity coefficient behaves the same on every layer;
//! the centring vector and scale travel with the model.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};

use crate::dataset::ActivationSet;
use crate::diffcompute::checkpoint::{u64_words, words_u64};
use crate::diffcompute::ops::{add_bias, add_bias_backward, matmul, matmul_backward};
use crate::diffcompute::{adam_step, AdamConfig, Checkpoint, ParamStore, Scalar, Section, Tensor2D};
use crate::error::{Error, Result};
use crate::rng;

const W_ENC: usize = 0;
const B_ENC: usize = 1;
const W_DEC: usize = 2;
const B_DEC: usize = 3;
const NAMES: [&str; 4] = ["W_enc", "b_enc", "W_dec", "b_dec"];

/// Encoder pre-activations and codes for a batch of (preprocessed) rows.
fn encode_rows<T: Scalar>(p: &ParamStore<T>, x: &Tensor2D<T>) -> Result<(Tensor2D<T>, Tensor2D<T>)> {
    let b_dec = p.value(B_DEC).row(0);
    if x.cols() != b_dec.len() {
        return Err(Error::shape(format!(
            "sae input has {} columns, model expects {}",
            x.cols(),
            b_dec.len()
        )));
    }
    let mut xc = x.clone();
    for r in 0..xc.rows() {
        for (v, &b) in xc.row_mut(r).iter_mut().zip(b_dec) {
            *v -= b;
        }
    }
    let mut pre = matmul(&xc, p.value(W_ENC))?;
    add_bias(&mut pre, p.value(B_ENC))?;
    let h = pre.map(|v| if v > T::ZERO { v } else { T::ZERO });
    Ok((xc, h))
}

fn decode_rows<T: Scalar>(p: &ParamStore<T>, h: &Tensor2D<T>) -> Result<Tensor2D<T>> {
    let mut xhat = matmul(h, p.value(W_DEC))?;
    add_bias(&mut xhat, p.value(B_DEC))?;
    Ok(xhat)
}

/// Mean over rows of `||x - x_hat||^2 + lambda * ||h||_1`.
pub fn sae_loss<T: Scalar>(p: &ParamStore<T>, x: &Tensor2D<T>, lambda: f64) -> Result<f64> {
    let (_, h) = encode_rows(p, x)?;
    let xhat = decode_rows(p, &h)?;
    let n = x.rows().max(1) as f64;
    let mut sq = 0.0;
    for (a, b) in x.data().iter().zip(xhat.data()) {
        let d = a.to_f64() - b.to_f64();
        sq += d * d;
    }
    let l1: f64 = h.data().iter().map(|v| v.to_f64()).sum();
    Ok((sq + lambda * l1) / n)
}

/// [`sae_loss`] plus its gradient, accumulated into the store.
pub fn sae_loss_and_grad<T: Scalar>(p: &mut ParamStore<T>, x: &Tensor2D<T>, lambda: f64) -> Result<f64> {
    let loss = sae_loss(p, x, lambda)?;
    let (xc, h) = encode_rows(p, x)?;
    let xhat = decode_rows(p, &h)?;
    let inv_n = 1.0 / x.rows().max(1) as f64;

    let mut dxhat = xhat;
    for (d, &xv) in dxhat.data_mut().iter_mut().zip(x.data()) {
        *d = T::from_f64(2.0 * inv_n * (d.to_f64() - xv.to_f64()));
    }
    add_bias_backward(&dxhat, p.grad_mut(B_DEC))?;
    let (w, dw) = p.value_and_grad_mut(W_DEC);
    let mut dh = matmul_backward(&h, w, &dxhat, dw)?;

    let l1 = T::from_f64(lambda * inv_n);
    for (g, &hv) in dh.data_mut().iter_mut().zip(h.data()) {
        *g = if hv > T::ZERO { *g + l1 } else { T::ZERO };
    }
    add_bias_backward(&dh, p.grad_mut(B_ENC))?;
    let (w, dw) = p.value_and_grad_mut(W_ENC);
    let dxc = matmul_backward(&xc, w, &dh, dw)?;
    // x_c = x - b_dec
    let mut db = Tensor2D::zeros(1, dxc.cols());
    add_bias_backward(&dxc, &mut db)?;
    for (g, v) in p.grad_mut(B_DEC).data_mut().iter_mut().zip(db.data()) {
        *g -= *v;
    }
    Ok(loss)
}

/// Builds a parameter store in the layout the loss functions expect.
pub fn sae_params<T: Scalar>(
    w_enc: Tensor2D<T>,
    b_enc: Tensor2D<T>,
    w_dec: Tensor2D<T>,
    b_dec: Tensor2D<T>,
) -> Result<ParamStore<T>> {
    let (d_in, d_latent) = w_enc.shape();
    if b_enc.shape() != (1, d_latent) || w_dec.shape() != (d_latent, d_in) || b_dec.shape() != (1, d_in) {
        return Err(Error::shape("sae parameter shapes disagree"));
    }
    let mut p = ParamStore::new();
    for (name, t) in NAMES.iter().zip([w_enc, b_enc, w_dec, b_dec]) {
        p.insert(*name, t)?;
    }
    Ok(p)
}

/// Scales every decoder row (one latent's dictionary direction) to unit
/// length. Zero rows are left alone.
pub fn normalize_decoder<T: Scalar>(p: &mut ParamStore<T>) {
    let w = p.value_mut(W_DEC);
    for r in 0..w.rows() {
        let row = w.row_mut(r);
        let norm = row.iter().map(|v| v.to_f64().powi(2)).sum::<f64>().sqrt();
        if norm > 0.0 {
            for v in row {
                *v = T::from_f64(v.to_f64() / norm);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaeHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub steps: u64,
    /// Fraction of games held out for reconstruction checks.
    pub heldout_fraction: f64,
}

impl Default for SaeHyper {
    fn default() -> Self {
        SaeHyper {
            lr: 1e-3,
            batch_size: 256,
            steps: 4000,
            heldout_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SaeModel {
    params: ParamStore<f32>,
    pub lambda: f64,
    pub seed: u64,
    pub layer: u16,
    /// Subtracted from raw activations before anything else.
    pub center: Vec<f32>,
    /// Multiplies centred activations.
    pub scale: f32,
}

impl SaeModel {
    /// A model with identity preprocessing (no centring, unit scale).
    pub fn from_parts(
        w_enc: Tensor2D<f32>,
        b_enc: Tensor2D<f32>,
        w_dec: Tensor2D<f32>,
        b_dec: Tensor2D<f32>,
        lambda: f64,
    ) -> Result<SaeModel> {
        let d_in = w_enc.rows();
        Ok(SaeModel {
            params: sae_params(w_enc, b_enc, w_dec, b_dec)?,
            lambda,
            seed: 0,
            layer: 0,
            center: vec![0.0; d_in],
            scale: 1.0,
        })
    }

    /// Tied initialisation: random unit decoder rows, encoder equal to
    /// the decoder transpose, zero biases.
    pub fn init(d_in: usize, d_latent: usize, lambda: f64, seed: u64) -> Result<SaeModel> {
        if d_latent < d_in || d_in == 0 {
            return Err(Error::Config(format!(
                "d_latent {d_latent} must be at least d_in {d_in}"
            )));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::Config(format!("lambda {lambda} must be non-negative")));
        }
        let mut r = rng::derived(seed, "sae-init");
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let w_dec = Tensor2D::from_fn(d_latent, d_in, |_, _| normal.sample(&mut r) as f32);
        let mut p = sae_params(
            Tensor2D::zeros(d_in, d_latent),
            Tensor2D::zeros(1, d_latent),
            w_dec,
            Tensor2D::zeros(1, d_in),
        )?;
        normalize_decoder(&mut p);
        *p.value_mut(W_ENC) = p.value(W_DEC).transpose();
        Ok(SaeModel {
            params: p,
            lambda,
            seed,
            layer: 0,
            center: vec![0.0; d_in],
            scale: 1.0,
        })
    }

    pub fn d_in(&self) -> usize {
        self.params.value(W_ENC).rows()
    }

    pub fn d_latent(&self) -> usize {
        self.params.value(W_ENC).cols()
    }

    pub fn params(&self) -> &ParamStore<f32> {
        &self.params
    }

    pub fn w_dec(&self) -> &Tensor2D<f32> {
        self.params.value(W_DEC)
    }

    /// Centred, rescaled copy of raw activation rows.
    pub fn preprocess(&self, x: &Tensor2D<f32>) -> Result<Tensor2D<f32>> {
        if x.cols() != self.d_in() {
            return Err(Error::shape(format!(
                "activation width {} vs sae input {}",
                x.cols(),
                self.d_in()
            )));
        }
        let mut out = x.clone();
        for r in 0..out.rows() {
            for (v, &c) in out.row_mut(r).iter_mut().zip(&self.center) {
                *v = (*v - c) * self.scale;
            }
        }
        Ok(out)
    }

    /// `relu(W_enc (x' - b_dec) + b_enc)` where `x'` is the preprocessed input.
    pub fn encode(&self, x: &[f32]) -> Result<Vec<f32>> {
        let t = Tensor2D::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.encode_batch(&t)?.into_vec())
    }

    pub fn encode_batch(&self, x: &Tensor2D<f32>) -> Result<Tensor2D<f32>> {
        let xp = self.preprocess(x)?;
        Ok(encode_rows(&self.params, &xp)?.1)
    }

    /// `W_dec h + b_dec`, mapped back to raw activation space.
    pub fn decode(&self, h: &[f32]) -> Result<Vec<f32>> {
        if h.len() != self.d_latent() {
            return Err(Error::shape(format!(
                "code of length {} for {} latents",
                h.len(),
                self.d_latent()
            )));
        }
        let t = Tensor2D::from_vec(1, h.len(), h.to_vec())?;
        let xhat = decode_rows(&self.params, &t)?;
        Ok(xhat
            .row(0)
            .iter()
            .zip(&self.center)
            .map(|(&v, &c)| v / self.scale + c)
            .collect())
    }

    /// Loss on raw rows, measured in the preprocessed space.
    pub fn loss(&self, x: &Tensor2D<f32>) -> Result<f64> {
        sae_loss(&self.params, &self.preprocess(x)?, self.lambda)
    }

    /// Mean squared reconstruction error per row in the preprocessed space.
    pub fn reconstruction_mse(&self, x: &Tensor2D<f32>) -> Result<f64> {
        sae_loss(&self.params, &self.preprocess(x)?, 0.0)
    }

    /// Mean fraction of latents that are strictly positive.
    pub fn active_fraction(&self, x: &Tensor2D<f32>) -> Result<f64> {
        let h = self.encode_batch(x)?;
        let active = h.data().iter().filter(|&&v| v > 0.0).count();
        Ok(active as f64 / h.data().len().max(1) as f64)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::from_params(&self.params);
        let [lo, hi] = u64_words(self.seed);
        ck.push(Section::words(
            "meta",
            &[
                u32::from(self.layer),
                lo,
                hi,
                (self.lambda as f32).to_bits(),
                self.scale.to_bits(),
            ],
        ));
        ck.push(Section::vector("center", &self.center));
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<SaeModel> {
        let get = |n: &str| ck.section(n)?.to_tensor();
        let mut m = SaeModel::from_parts(get("W_enc")?, get("b_enc")?, get("W_dec")?, get("b_dec")?, 0.0)?;
        let meta = ck.section("meta")?.as_words();
        if meta.len() != 5 {
            return Err(Error::Format(format!(
                "sae meta has {} words, expected 5",
                meta.len()
            )));
        }
        m.layer = u16::try_from(meta[0]).map_err(|_| Error::Format("sae layer".into()))?;
        m.seed = words_u64(meta[1], meta[2]);
        m.lambda = f64::from(f32::from_bits(meta[3]));
        m.scale = f32::from_bits(meta[4]);
        let center = ck.section("center")?;
        if center.data.len() != m.d_in() {
            return Err(Error::Format("sae centring vector length".into()));
        }
        m.center = center.data.clone();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().write(path)
    }

    pub fn load(path: &Path) -> Result<SaeModel> {
        SaeModel::from_checkpoint(&Checkpoint::read(path)?)
    }
}

/// Per-column mean and the scale that gives centred rows unit mean
/// squared entry.
fn normalisation(x: &Tensor2D<f32>) -> (Vec<f32>, f32) {
    let (n, d) = x.shape();
    let mut mean = vec![0f64; d];
    for r in 0..n {
        for (m, &v) in mean.iter_mut().zip(x.row(r)) {
            *m += f64::from(v);
        }
    }
    mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
    let mut sq = 0f64;
    for r in 0..n {
        for (&m, &v) in mean.iter().zip(x.row(r)) {
            sq += (f64::from(v) - m).powi(2);
        }
    }
    let ms = sq / (n * d).max(1) as f64;
    let scale = if ms > 0.0 { 1.0 / ms.sqrt() } else { 1.0 };
    (mean.iter().map(|&m| m as f32).collect(), scale as f32)
}

/// Game-level split: `true` for held-out games.
pub fn is_heldout_game(game: u32, fraction: f64) -> bool {
    let period = (1.0 / fraction.clamp(1e-6, 1.0)).round().max(1.0) as u32;
    game % period == period - 1
}

pub struct SaeTraining {
    pub model: SaeModel,
    pub init_heldout_mse: f64,
    pub final_heldout_mse: f64,
    pub heldout_active_fraction: f64,
}

/// Adam on the sparse-coding loss with decoder rows renormalised after
/// every step. Games with `is_heldout_game` are kept out of training and
/// used for the reported reconstruction figures.
pub fn train_sae(
    acts: &ActivationSet,
    d_latent: usize,
    lambda: f64,
    hyper: &SaeHyper,
    seed: u64,
) -> Result<SaeTraining> {
    let heldout = acts.filter_games(|g| is_heldout_game(g, hyper.heldout_fraction));
    let train = acts.filter_games(|g| !is_heldout_game(g, hyper.heldout_fraction));
    if train.rows() == 0 || hyper.batch_size == 0 {
        return Err(Error::Config("sae training set is empty".into()));
    }
    let mut model = SaeModel::init(acts.cols(), d_latent, lambda, seed)?;
    model.layer = acts.layer;
    let (center, scale) = normalisation(&train.vectors);
    model.center = center;
    model.scale = scale;
    let x = model.preprocess(&train.vectors)?;
    let held = if heldout.rows() > 0 {
        &heldout.vectors
    } else {
        &train.vectors
    };
    let init_heldout_mse = model.reconstruction_mse(held)?;

    let cfg = AdamConfig {
        lr: hyper.lr,
        ..AdamConfig::default()
    };
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut shuffle = rng::derived(seed, "sae-shuffle");
    let mut cursor = order.len();
    for step in 1..=hyper.steps {
        let mut idx = Vec::with_capacity(hyper.batch_size);
        while idx.len() < hyper.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut shuffle);
                cursor = 0;
            }
            idx.push(order[cursor]);
            cursor += 1;
        }
        let batch = x.select_rows(&idx);
        let loss = sae_loss_and_grad(&mut model.params, &batch, lambda)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteValue(format!("sae loss at step {step}")));
        }
        adam_step(&mut model.params, &cfg, step)?;
        normalize_decoder(&mut model.params);
    }
    Ok(SaeTraining {
        final_heldout_mse: model.reconstruction_mse(held)?,
        heldout_active_fraction: model.active_fraction(held)?,
        init_heldout_mse,
        model,
    })
}

/// Raw codes for every activation row; alignment is unchanged.
pub fn feature_activations(model: &SaeModel, acts: &ActivationSet) -> Result<Tensor2D<f32>> {
    model.encode_batch(&acts.vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::RowRef;

    fn eye(n: usize) -> Tensor2D<f32> {
        Tensor2D::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    fn identity_model() -> SaeModel {
        SaeModel::from_parts(eye(2), Tensor2D::zeros(1, 2), eye(2), Tensor2D::zeros(1, 2), 0.5).unwrap()
    }

    #[test]
    fn hand_encode_decode() {
        let m = identity_model();
        assert_eq!(m.encode(&[3.0, -1.0]).unwrap(), [3.0, 0.0]);
        assert_eq!(m.decode(&[3.0, 0.0]).unwrap(), [3.0, 0.0]);
        assert!(m.encode(&[1.0]).is_err());
    }

    #[test]
    fn pre_bias_zeroes_code() {
        let b = Tensor2D::from_vec(1, 2, vec![0.7, -0.2]).unwrap();
        let m = SaeModel::from_parts(eye(2), Tensor2D::zeros(1, 2), eye(2), b, 0.1).unwrap();
        assert_eq!(m.encode(&[0.7, -0.2]).unwrap(), [0.0, 0.0]);
        assert_eq!(m.decode(&[0.0, 0.0]).unwrap(), [0.7, -0.2]);
    }

    #[test]
    fn loss_arithmetic() {
        // x = (1, 0), x_hat = 0, h = (2), lambda = 0.5 -> 1 + 1.
        let w_enc = Tensor2D::from_vec(2, 1, vec![0.0, 0.0]).unwrap();
        let b_enc = Tensor2D::from_vec(1, 1, vec![2.0]).unwrap();
        let w_dec = Tensor2D::zeros(1, 2);
        let p = sae_params(w_enc, b_enc, w_dec, Tensor2D::zeros(1, 2)).unwrap();
        let x = Tensor2D::from_vec(1, 2, vec![1.0f32, 0.0]).unwrap();
        assert!((sae_loss(&p, &x, 0.5).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = SaeModel::init(4, 8, 0.1, 77).unwrap();
        m.layer = 3;
        m.center = vec![0.5, -1.0, 2.0, 0.0];
        m.scale = 0.25;
        let back = SaeModel::from_checkpoint(&m.to_checkpoint()).unwrap();
        assert_eq!(back.seed, 77);
        assert_eq!(back.layer, 3);
        assert_eq!(back.center, m.center);
        assert_eq!(back.scale, 0.25);
        assert_eq!(back.w_dec(), m.w_dec());
        let x = [0.3, 0.2, -0.7, 1.0];
        assert_eq!(back.encode(&x).unwrap(), m.encode(&x).unwrap());
    }

    fn toy_acts() -> ActivationSet {
        let mut r = rng::seeded(5);
        let normal = Normal::new(0.0, 1.0).unwrap();
        // Sparse combinations of a few fixed directions.
        let dirs: Vec<Vec<f32>> = (0..6)
            .map(|_| (0..8).map(|_| normal.sample(&mut r) as f32).collect())
            .collect();
        let rows = 600;
        let v = Tensor2D::from_fn(rows, 8, |row, c| {
            let a = dirs[row % 6][c] * (1.0 + (row % 5) as f32 * 0.3);
            let b = dirs[(row / 6) % 6][c] * 0.5;
            a + b + 3.0
        });
        let align = (0..rows as u32)
            .map(|i| RowRef {
                game: i / 10,
                timestep: (i % 10) as u16,
            })
            .collect();
        ActivationSet::new(2, v, align).unwrap()
    }

    #[test]
    fn training_is_deterministic_and_keeps_unit_rows() {
        let acts = toy_acts();
        let h = SaeHyper {
            steps: 150,
            batch_size: 32,
            lr: 3e-3,
            ..SaeHyper::default()
        };
        let a = train_sae(&acts, 16, 0.05, &h, 9).unwrap();
        let b = train_sae(&acts, 16, 0.05, &h, 9).unwrap();
        assert_eq!(a.model.w_dec(), b.model.w_dec());
        assert_eq!(a.model.layer, 2);
        for r in 0..16 {
            let n: f64 = a.model.w_dec().row(r).iter().map(|&v| f64::from(v).powi(2)).sum();
            assert!((n.sqrt() - 1.0).abs() < 1e-5);
        }
        assert!(a.final_heldout_mse < a.init_heldout_mse);
        let f = feature_activations(&a.model, &acts).unwrap();
        assert_eq!(f.rows(), acts.rows());
        assert!(f.data().iter().all(|&v| v >= 0.0));
        assert_eq!(f.row(7), a.model.encode(acts.vectors.row(7)).unwrap().as_slice());
    }
}
