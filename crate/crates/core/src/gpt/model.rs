// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pre-norm decoder-only transformer with a hand-written backward pass.

use super::config::GptConfig;
use crate::dataset::{RowRef, TokenSequence, PAD};
use crate::diffcompute::ops::{
    add_bias_backward, cross_entropy, cross_entropy_backward, embedding_backward, embedding_lookup, gelu,
    gelu_backward, layer_norm, layer_norm_backward, linear, matmul, matmul_backward, LayerNormCache,
};
use crate::diffcompute::{
    causal_attention, causal_attention_backward, AttentionCache, ParamStore, Scalar, Tensor2D, INIT_STD,
};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy)]
struct BlockIds {
    ln1_g: usize,
    ln1_b: usize,
    w_qkv: usize,
    b_qkv: usize,
    w_o: usize,
    b_o: usize,
    ln2_g: usize,
    ln2_b: usize,
    w_in: usize,
    b_in: usize,
    w_out: usize,
    b_out: usize,
}

#[derive(Debug, Clone)]
struct Ids {
    tok: usize,
    pos: usize,
    blocks: Vec<BlockIds>,
    lnf_g: usize,
    lnf_b: usize,
    unembed: usize,
}

impl Ids {
    fn resolve<T: Scalar>(cfg: &GptConfig, p: &ParamStore<T>) -> Result<Ids> {
        let d = cfg.d_model;
        let dm = cfg.d_mlp();
        let expect = |name: &str, r: usize, c: usize| -> Result<usize> {
            let id = p.id(name)?;
            let got = p.value(id).shape();
            if got != (r, c) {
                return Err(Error::shape(format!(
                    "parameter {name} is {got:?}, config implies {:?}",
                    (r, c)
                )));
            }
            Ok(id)
        };
        let mut blocks = Vec::with_capacity(cfg.n_layers);
        for i in 0..cfg.n_layers {
            let n = |s: &str| format!("blocks.{i}.{s}");
            blocks.push(BlockIds {
                ln1_g: expect(&n("ln1.gamma"), 1, d)?,
                ln1_b: expect(&n("ln1.beta"), 1, d)?,
                w_qkv: expect(&n("attn.w_qkv"), d, 3 * d)?,
                b_qkv: expect(&n("attn.b_qkv"), 1, 3 * d)?,
                w_o: expect(&n("attn.w_out"), d, d)?,
                b_o: expect(&n("attn.b_out"), 1, d)?,
                ln2_g: expect(&n("ln2.gamma"), 1, d)?,
                ln2_b: expect(&n("ln2.beta"), 1, d)?,
                w_in: expect(&n("mlp.w_in"), d, dm)?,
                b_in: expect(&n("mlp.b_in"), 1, dm)?,
                w_out: expect(&n("mlp.w_out"), dm, d)?,
                b_out: expect(&n("mlp.b_out"), 1, d)?,
            });
        }
        Ok(Ids {
            tok: expect("tok_emb", cfg.vocab, d)?,
            pos: expect("pos_emb", cfg.max_seq_len, d)?,
            blocks,
            lnf_g: expect("ln_f.gamma", 1, d)?,
            lnf_b: expect("ln_f.beta", 1, d)?,
            unembed: expect("w_output", d, cfg.vocab)?,
        })
    }
}

/// Fresh parameters: normal(0, 0.02) weights and embeddings, zero biases,
/// unit layer-norm gains.
pub fn init_params<T: Scalar>(cfg: &GptConfig, seed: u64) -> Result<ParamStore<T>> {
    cfg.validate()?;
    let mut r = rng::derived(seed, "gpt-init");
    let mut p = ParamStore::new();
    let d = cfg.d_model;
    let dm = cfg.d_mlp();
    p.insert_normal("tok_emb", cfg.vocab, d, INIT_STD, &mut r)?;
    p.insert_normal("pos_emb", cfg.max_seq_len, d, INIT_STD, &mut r)?;
    for i in 0..cfg.n_layers {
        let n = |s: &str| format!("blocks.{i}.{s}");
        p.insert_const(n("ln1.gamma"), 1, d, 1.0)?;
        p.insert_const(n("ln1.beta"), 1, d, 0.0)?;
        p.insert_normal(n("attn.w_qkv"), d, 3 * d, INIT_STD, &mut r)?;
        p.insert_const(n("attn.b_qkv"), 1, 3 * d, 0.0)?;
        p.insert_normal(n("attn.w_out"), d, d, INIT_STD, &mut r)?;
        p.insert_const(n("attn.b_out"), 1, d, 0.0)?;
        p.insert_const(n("ln2.gamma"), 1, d, 1.0)?;
        p.insert_const(n("ln2.beta"), 1, d, 0.0)?;
        p.insert_normal(n("mlp.w_in"), d, dm, INIT_STD, &mut r)?;
        p.insert_const(n("mlp.b_in"), 1, dm, 0.0)?;
        p.insert_normal(n("mlp.w_out"), dm, d, INIT_STD, &mut r)?;
        p.insert_const(n("mlp.b_out"), 1, d, 0.0)?;
    }
    p.insert_const("ln_f.gamma", 1, d, 1.0)?;
    p.insert_const("ln_f.beta", 1, d, 0.0)?;
    p.insert_normal("w_output", d, cfg.vocab, INIT_STD, &mut r)?;
    Ok(p)
}

/// `batch` sequences of `seq` positions, flattened row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub inputs: Vec<usize>,
    pub targets: Vec<Option<usize>>,
    pub batch: usize,
    pub seq: usize,
}

impl Batch {
    /// Inputs are `tokens[..seq]`, targets `tokens[1..=seq]` with PAD
    /// targets masked. Every sequence needs at least `seq + 1` tokens.
    pub fn next_token(seqs: &[&TokenSequence], seq: usize) -> Result<Batch> {
        let mut inputs = Vec::with_capacity(seqs.len() * seq);
        let mut targets = Vec::with_capacity(seqs.len() * seq);
        for s in seqs {
            let t = s.tokens();
            if t.len() < seq + 1 {
                return Err(Error::shape(format!(
                    "sequence of {} tokens cannot supply {seq} positions plus a target",
                    t.len()
                )));
            }
            inputs.extend(t[..seq].iter().map(|&x| usize::from(x)));
            targets.extend(t[1..=seq].iter().map(|&x| (x != PAD).then_some(usize::from(x))));
        }
        Ok(Batch {
            inputs,
            targets,
            batch: seqs.len(),
            seq,
        })
    }

    /// A single sequence with no targets.
    pub fn single(tokens: &[u8]) -> Batch {
        Batch {
            inputs: tokens.iter().map(|&t| usize::from(t)).collect(),
            targets: vec![None; tokens.len()],
            batch: 1,
            seq: tokens.len(),
        }
    }
}

struct BlockCache<T: Scalar> {
    ln1: LayerNormCache<T>,
    a: Tensor2D<T>,
    q: Tensor2D<T>,
    k: Tensor2D<T>,
    v: Tensor2D<T>,
    attn: AttentionCache<T>,
    ctx: Tensor2D<T>,
    ln2: LayerNormCache<T>,
    m: Tensor2D<T>,
    h_pre: Tensor2D<T>,
    h: Tensor2D<T>,
}

/// Everything the backward pass needs, plus the residual stream after
/// each block.
pub struct ForwardPass<T: Scalar> {
    pub logits: Tensor2D<T>,
    /// `residuals[l]` is the stream after block `l + 1`'s MLP addition.
    pub residuals: Vec<Tensor2D<T>>,
    blocks: Vec<BlockCache<T>>,
    lnf: LayerNormCache<T>,
    xf: Tensor2D<T>,
}

/// Residual stream captured at one layer (1-based).
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStreamRecord<T: Scalar = f32> {
    pub layer: usize,
    pub vectors: Tensor2D<T>,
    pub alignment: Vec<RowRef>,
}

#[derive(Debug, Clone)]
pub struct Gpt<T: Scalar = f32> {
    cfg: GptConfig,
    params: ParamStore<T>,
    ids: Ids,
}

impl<T: Scalar> Gpt<T> {
    pub fn init(cfg: GptConfig, seed: u64) -> Result<Self> {
        let params = init_params(&cfg, seed)?;
        Gpt::from_params(cfg, params)
    }

    /// Wraps an existing store; names and shapes must match `cfg`.
    pub fn from_params(cfg: GptConfig, params: ParamStore<T>) -> Result<Self> {
        cfg.validate()?;
        let ids = Ids::resolve(&cfg, &params)?;
        Ok(Gpt { cfg, params, ids })
    }

    pub fn config(&self) -> &GptConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn into_params(self) -> ParamStore<T> {
        self.params
    }

    pub fn cast<U: Scalar>(&self) -> Gpt<U> {
        Gpt {
            cfg: self.cfg,
            params: self.params.cast(),
            ids: self.ids.clone(),
        }
    }

    fn check_batch(&self, b: &Batch) -> Result<()> {
        if b.seq == 0 || b.seq > self.cfg.max_seq_len {
            return Err(Error::shape(format!(
                "sequence length {} outside 1..={}",
                b.seq, self.cfg.max_seq_len
            )));
        }
        if b.inputs.len() != b.batch * b.seq || b.targets.len() != b.inputs.len() {
            return Err(Error::shape("batch layout"));
        }
        for (i, &t) in b.inputs.iter().enumerate() {
            if t >= self.cfg.vocab {
                return Err(Error::TokenOutOfRange {
                    token: t,
                    position: i % b.seq,
                    vocab: self.cfg.vocab,
                });
            }
        }
        Ok(())
    }

    pub fn forward(&self, b: &Batch) -> Result<ForwardPass<T>> {
        self.check_batch(b)?;
        let p = &self.params;
        let d = self.cfg.d_model;
        let positions: Vec<usize> = (0..b.inputs.len()).map(|i| i % b.seq).collect();
        let mut x = embedding_lookup(p.value(self.ids.tok), &b.inputs)?;
        x.add_assign(&embedding_lookup(p.value(self.ids.pos), &positions)?)?;

        let mut blocks = Vec::with_capacity(self.cfg.n_layers);
        let mut residuals = Vec::with_capacity(self.cfg.n_layers);
        for ids in &self.ids.blocks {
            let (a, ln1) = layer_norm(&x, p.value(ids.ln1_g), p.value(ids.ln1_b))?;
            let qkv = linear(&a, p.value(ids.w_qkv), p.value(ids.b_qkv))?;
            let (q, k, v) = (qkv.columns(0, d), qkv.columns(d, d), qkv.columns(2 * d, d));
            let (ctx, attn) = causal_attention(&q, &k, &v, b.seq, self.cfg.n_heads)?;
            x.add_assign(&linear(&ctx, p.value(ids.w_o), p.value(ids.b_o))?)?;
            let (m, ln2) = layer_norm(&x, p.value(ids.ln2_g), p.value(ids.ln2_b))?;
            let h_pre = linear(&m, p.value(ids.w_in), p.value(ids.b_in))?;
            let h = gelu(&h_pre);
            x.add_assign(&linear(&h, p.value(ids.w_out), p.value(ids.b_out))?)?;
            residuals.push(x.clone());
            blocks.push(BlockCache {
                ln1,
                a,
                q,
                k,
                v,
                attn,
                ctx,
                ln2,
                m,
                h_pre,
                h,
            });
        }
        let (xf, lnf) = layer_norm(&x, p.value(self.ids.lnf_g), p.value(self.ids.lnf_b))?;
        let logits = matmul(&xf, p.value(self.ids.unembed))?;
        Ok(ForwardPass {
            logits,
            residuals,
            blocks,
            lnf,
            xf,
        })
    }

    /// Accumulates parameter gradients for the given logit gradient.
    pub fn backward(&mut self, b: &Batch, pass: &ForwardPass<T>, dlogits: &Tensor2D<T>) -> Result<()> {
        let ids = self.ids.clone();
        let p = &mut self.params;
        let d = self.cfg.d_model;

        let (wu, dwu) = p.value_and_grad_mut(ids.unembed);
        let dxf = matmul_backward(&pass.xf, wu, dlogits, dwu)?;
        let mut dx = norm_backward(p, &pass.lnf, ids.lnf_g, ids.lnf_b, &dxf)?;

        for (bi, c) in ids.blocks.iter().zip(&pass.blocks).rev() {
            // MLP branch
            add_bias_backward(&dx, p.grad_mut(bi.b_out))?;
            let (w, dw) = p.value_and_grad_mut(bi.w_out);
            let dh = matmul_backward(&c.h, w, &dx, dw)?;
            let dh_pre = gelu_backward(&c.h_pre, &dh)?;
            add_bias_backward(&dh_pre, p.grad_mut(bi.b_in))?;
            let (w, dw) = p.value_and_grad_mut(bi.w_in);
            let dm = matmul_backward(&c.m, w, &dh_pre, dw)?;
            dx.add_assign(&norm_backward(p, &c.ln2, bi.ln2_g, bi.ln2_b, &dm)?)?;

            // attention branch
            add_bias_backward(&dx, p.grad_mut(bi.b_o))?;
            let (w, dw) = p.value_and_grad_mut(bi.w_o);
            let dctx = matmul_backward(&c.ctx, w, &dx, dw)?;
            let (dq, dk, dv) = causal_attention_backward(&c.q, &c.k, &c.v, &c.attn, &dctx)?;
            let mut dqkv = Tensor2D::zeros(dq.rows(), 3 * d);
            dqkv.set_columns(0, &dq);
            dqkv.set_columns(d, &dk);
            dqkv.set_columns(2 * d, &dv);
            add_bias_backward(&dqkv, p.grad_mut(bi.b_qkv))?;
            let (w, dw) = p.value_and_grad_mut(bi.w_qkv);
            let da = matmul_backward(&c.a, w, &dqkv, dw)?;
            dx.add_assign(&norm_backward(p, &c.ln1, bi.ln1_g, bi.ln1_b, &da)?)?;
        }

        let positions: Vec<usize> = (0..b.inputs.len()).map(|i| i % b.seq).collect();
        embedding_backward(&b.inputs, &dx, p.grad_mut(ids.tok))?;
        embedding_backward(&positions, &dx, p.grad_mut(ids.pos))?;
        Ok(())
    }

    /// Mean next-token loss of the batch.
    pub fn loss(&self, b: &Batch) -> Result<f64> {
        let pass = self.forward(b)?;
        token_loss(&pass.logits, &b.targets)
    }

    /// Mean next-token loss; gradients are accumulated into the store.
    pub fn loss_and_grad(&mut self, b: &Batch) -> Result<f64> {
        let pass = self.forward(b)?;
        let (loss, cache) = cross_entropy(&pass.logits, &b.targets)?;
        let dlogits = cross_entropy_backward(&cache, 1.0);
        self.backward(b, &pass, &dlogits)?;
        Ok(loss)
    }

    /// Logits for one sequence and the residual stream after every block.
    /// PAD positions are left out of the records; rows are aligned to
    /// `(game, position)`.
    pub fn forward_tokens(
        &self,
        tokens: &[u8],
        game: u32,
    ) -> Result<(Tensor2D<T>, Vec<ResidualStreamRecord<T>>)> {
        let b = Batch::single(tokens);
        let pass = self.forward(&b)?;
        let keep: Vec<usize> = (0..tokens.len()).filter(|&i| tokens[i] != PAD).collect();
        let alignment: Vec<RowRef> = keep
            .iter()
            .map(|&i| RowRef {
                game,
                timestep: i as u16,
            })
            .collect();
        let records = pass
            .residuals
            .iter()
            .enumerate()
            .map(|(l, r)| ResidualStreamRecord {
                layer: l + 1,
                vectors: r.select_rows(&keep),
                alignment: alignment.clone(),
            })
            .collect();
        Ok((pass.logits, records))
    }
}

fn norm_backward<T: Scalar>(
    p: &mut ParamStore<T>,
    cache: &LayerNormCache<T>,
    g: usize,
    b: usize,
    dy: &Tensor2D<T>,
) -> Result<Tensor2D<T>> {
    let d = dy.cols();
    let mut dg = Tensor2D::zeros(1, d);
    let mut db = Tensor2D::zeros(1, d);
    let dx = layer_norm_backward(cache, p.value(g), dy, &mut dg, &mut db)?;
    p.grad_mut(g).add_assign(&dg)?;
    p.grad_mut(b).add_assign(&db)?;
    Ok(dx)
}

/// Mean negative log-likelihood over unmasked positions.
pub fn token_loss<T: Scalar>(logits: &Tensor2D<T>, targets: &[Option<usize>]) -> Result<f64> {
    Ok(cross_entropy(logits, targets)?.0)
}
