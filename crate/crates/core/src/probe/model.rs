//! Causal Transformer probe with hand-written gradients.
//!
//! ```text
//! note n:   e_n = W_enc x_n + b_enc + R[rule_n]
//! group g:  t_g = mean_{n in g} e_n + P[g]
//! layers:   h = t + Attn(LN1(t)),  t' = h + FFN(LN2(h))      (causal over groups)
//! heads:    z_n = e_n + LN_f(t_L)[g(n)]
//!           class logits = W_cls z_n + b_cls,  correction logit = w_cor z_n + b_cor
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ProbeConfig;
use super::features::{Window, FEATURE_DIM};
use super::tensor::{
    gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, log_sum_exp,
    sigmoid, softmax, softplus, LayerNormCache, Real, Tensor,
};
use crate::corpus::NUM_CLASSES;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub ln1_gamma: Tensor<T>,
    pub ln1_beta: Tensor<T>,
    pub wq: Tensor<T>,
    pub bq: Tensor<T>,
    pub wk: Tensor<T>,
    pub bk: Tensor<T>,
    pub wv: Tensor<T>,
    pub bv: Tensor<T>,
    pub wo: Tensor<T>,
    pub bo: Tensor<T>,
    pub ln2_gamma: Tensor<T>,
    pub ln2_beta: Tensor<T>,
    pub ff1_w: Tensor<T>,
    pub ff1_b: Tensor<T>,
    pub ff2_w: Tensor<T>,
    pub ff2_b: Tensor<T>,
}

const LAYER_FIELDS: [&str; 16] = [
    "ln1.gamma",
    "ln1.beta",
    "attn.q.weight",
    "attn.q.bias",
    "attn.k.weight",
    "attn.k.bias",
    "attn.v.weight",
    "attn.v.bias",
    "attn.out.weight",
    "attn.out.bias",
    "ln2.gamma",
    "ln2.beta",
    "ff1.weight",
    "ff1.bias",
    "ff2.weight",
    "ff2.bias",
];

impl<T: Real> LayerParams<T> {
    fn tensors(&self) -> [&Tensor<T>; 16] {
        [
            &self.ln1_gamma,
            &self.ln1_beta,
            &self.wq,
            &self.bq,
            &self.wk,
            &self.bk,
            &self.wv,
            &self.bv,
            &self.wo,
            &self.bo,
            &self.ln2_gamma,
            &self.ln2_beta,
            &self.ff1_w,
            &self.ff1_b,
            &self.ff2_w,
            &self.ff2_b,
        ]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor<T>; 16] {
        [
            &mut self.ln1_gamma,
            &mut self.ln1_beta,
            &mut self.wq,
            &mut self.bq,
            &mut self.wk,
            &mut self.bk,
            &mut self.wv,
            &mut self.bv,
            &mut self.wo,
            &mut self.bo,
            &mut self.ln2_gamma,
            &mut self.ln2_beta,
            &mut self.ff1_w,
            &mut self.ff1_b,
            &mut self.ff2_w,
            &mut self.ff2_b,
        ]
    }
}

/// All trainable tensors. The same type holds gradients and optimizer
/// moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Params<T> {
    pub enc_w: Tensor<T>,
    pub enc_b: Tensor<T>,
    pub rule_emb: Tensor<T>,
    pub pos_emb: Tensor<T>,
    pub layers: Vec<LayerParams<T>>,
    pub lnf_gamma: Tensor<T>,
    pub lnf_beta: Tensor<T>,
    pub cls_w: Tensor<T>,
    pub cls_b: Tensor<T>,
    pub cor_w: Tensor<T>,
    pub cor_b: Tensor<T>,
}

pub const RULE_EMBEDDING: &str = "rule_embedding";

impl<T: Real> Params<T> {
    /// Random initialization; deterministic in `cfg.seed`. Values are drawn
    /// in `f64` and rounded, so `f32` and `f64` models from one seed agree
    /// up to rounding.
    pub fn init(cfg: &ProbeConfig) -> Self {
        let d = cfg.width;
        let ff = cfg.ff_width();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let small = Normal::new(0.0, 0.02).expect("valid normal");
        let mut uniform = |shape: &[usize], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Tensor::from_fn(shape, || rng.random_range(-bound..bound))
        };
        let enc_w = uniform(&[d, FEATURE_DIM], FEATURE_DIM);
        let layers = (0..cfg.layers)
            .map(|_| LayerParams {
                ln1_gamma: Tensor::filled(&[d], T::one()),
                ln1_beta: Tensor::zeros(&[d]),
                wq: uniform(&[d, d], d),
                bq: Tensor::zeros(&[d]),
                wk: uniform(&[d, d], d),
                bk: Tensor::zeros(&[d]),
                wv: uniform(&[d, d], d),
                bv: Tensor::zeros(&[d]),
                wo: uniform(&[d, d], d),
                bo: Tensor::zeros(&[d]),
                ln2_gamma: Tensor::filled(&[d], T::one()),
                ln2_beta: Tensor::zeros(&[d]),
                ff1_w: uniform(&[ff, d], d),
                ff1_b: Tensor::zeros(&[ff]),
                ff2_w: uniform(&[d, ff], ff),
                ff2_b: Tensor::zeros(&[d]),
            })
            .collect();
        let cls_w = uniform(&[NUM_CLASSES, d], d);
        let cor_w = uniform(&[1, d], d);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let pos_emb = Tensor::from_fn(&[cfg.context_window, d], || small.sample(&mut rng));
        let rule_emb = if cfg.frozen_rule_embedding() {
            Tensor::zeros(&[NUM_CLASSES, d])
        } else {
            Tensor::from_fn(&[NUM_CLASSES, d], || small.sample(&mut rng))
        };
        Params {
            enc_w,
            enc_b: Tensor::zeros(&[d]),
            rule_emb,
            pos_emb,
            layers,
            lnf_gamma: Tensor::filled(&[d], T::one()),
            lnf_beta: Tensor::zeros(&[d]),
            cls_w,
            cls_b: Tensor::zeros(&[NUM_CLASSES]),
            cor_w,
            cor_b: Tensor::zeros(&[1]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = T::zero());
        }
        out
    }

    /// Canonical tensor order, matching [`Params::names`].
    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut out = vec![&self.enc_w, &self.enc_b, &self.rule_emb, &self.pos_emb];
        for layer in &self.layers {
            out.extend(layer.tensors());
        }
        out.extend([
            &self.lnf_gamma,
            &self.lnf_beta,
            &self.cls_w,
            &self.cls_b,
            &self.cor_w,
            &self.cor_b,
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![
            &mut self.enc_w,
            &mut self.enc_b,
            &mut self.rule_emb,
            &mut self.pos_emb,
        ];
        for layer in &mut self.layers {
            out.extend(layer.tensors_mut());
        }
        out.extend([
            &mut self.lnf_gamma,
            &mut self.lnf_beta,
            &mut self.cls_w,
            &mut self.cls_b,
            &mut self.cor_w,
            &mut self.cor_b,
        ]);
        out
    }

    pub fn names(&self) -> Vec<String> {
        let mut out: Vec<String> = ["encoder.weight", "encoder.bias", RULE_EMBEDDING, "positional_embedding"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 0..self.layers.len() {
            out.extend(LAYER_FIELDS.iter().map(|f| format!("layers.{i}.{f}")));
        }
        out.extend(
            [
                "final_norm.gamma",
                "final_norm.beta",
                "class_head.weight",
                "class_head.bias",
                "correction_head.weight",
                "correction_head.bias",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Self) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b);
        }
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        let cast_layer = |l: &LayerParams<T>| LayerParams {
            ln1_gamma: l.ln1_gamma.cast(),
            ln1_beta: l.ln1_beta.cast(),
            wq: l.wq.cast(),
            bq: l.bq.cast(),
            wk: l.wk.cast(),
            bk: l.bk.cast(),
            wv: l.wv.cast(),
            bv: l.bv.cast(),
            wo: l.wo.cast(),
            bo: l.bo.cast(),
            ln2_gamma: l.ln2_gamma.cast(),
            ln2_beta: l.ln2_beta.cast(),
            ff1_w: l.ff1_w.cast(),
            ff1_b: l.ff1_b.cast(),
            ff2_w: l.ff2_w.cast(),
            ff2_b: l.ff2_b.cast(),
        };
        Params {
            enc_w: self.enc_w.cast(),
            enc_b: self.enc_b.cast(),
            rule_emb: self.rule_emb.cast(),
            pos_emb: self.pos_emb.cast(),
            layers: self.layers.iter().map(cast_layer).collect(),
            lnf_gamma: self.lnf_gamma.cast(),
            lnf_beta: self.lnf_beta.cast(),
            cls_w: self.cls_w.cast(),
            cls_b: self.cls_b.cast(),
            cor_w: self.cor_w.cast(),
            cor_b: self.cor_b.cast(),
        }
    }
}

/// Parameter count implied by a configuration.
pub fn param_count(cfg: &ProbeConfig) -> usize {
    let d = cfg.width;
    let ff = cfg.ff_width();
    let per_layer = 2 * d + 4 * (d * d + d) + 2 * d + (ff * d + ff) + (d * ff + d);
    (FEATURE_DIM * d + d)
        + NUM_CLASSES * d
        + cfg.context_window * d
        + cfg.layers * per_layer
        + 2 * d
        + (NUM_CLASSES * d + NUM_CLASSES)
        + (d + 1)
}

struct LayerCache<T> {
    ln1: LayerNormCache<T>,
    a: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// Per head, `[groups, groups]`, zero above the diagonal.
    probs: Vec<Vec<T>>,
    attn: Vec<T>,
    ln2: LayerNormCache<T>,
    b: Vec<T>,
    u: Vec<T>,
    gu: Vec<T>,
}

/// Intermediate values of one forward pass, kept for backpropagation.
pub struct ForwardCache<T> {
    notes: usize,
    groups: usize,
    x: Vec<T>,
    group_of: Vec<usize>,
    group_sizes: Vec<usize>,
    rules: Vec<usize>,
    layers: Vec<LayerCache<T>>,
    lnf: LayerNormCache<T>,
    z: Vec<T>,
    pub logits: Vec<T>,
    pub correction_logits: Vec<T>,
}

/// Per-note probe output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoteOutput {
    pub class_probs: [f64; NUM_CLASSES],
    pub correction_prob: f64,
}

fn causal_attention<T: Real>(
    q: &[T],
    k: &[T],
    v: &[T],
    groups: usize,
    d: usize,
    heads: usize,
) -> (Vec<T>, Vec<Vec<T>>) {
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let mut out = vec![T::zero(); groups * d];
    let mut all_probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let off = h * dh;
        let mut probs = vec![T::zero(); groups * groups];
        for i in 0..groups {
            let qi = &q[i * d + off..i * d + off + dh];
            let scores: Vec<T> = (0..=i)
                .map(|j| {
                    let kj = &k[j * d + off..j * d + off + dh];
                    qi.iter().zip(kj).map(|(a, b)| *a * *b).sum::<T>() * scale
                })
                .collect();
            let p = softmax(&scores);
            let oi = &mut out[i * d + off..i * d + off + dh];
            for (j, &pij) in p.iter().enumerate() {
                probs[i * groups + j] = pij;
                let vj = &v[j * d + off..j * d + off + dh];
                for (o, vv) in oi.iter_mut().zip(vj) {
                    *o += pij * *vv;
                }
            }
        }
        all_probs.push(probs);
    }
    (out, all_probs)
}

#[allow(clippy::too_many_arguments)]
fn causal_attention_backward<T: Real>(
    q: &[T],
    k: &[T],
    v: &[T],
    probs: &[Vec<T>],
    dout: &[T],
    groups: usize,
    d: usize,
    heads: usize,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let dh = d / heads;
    let scale = T::one() / T::lit(dh as f64).sqrt();
    let mut dq = vec![T::zero(); groups * d];
    let mut dk = vec![T::zero(); groups * d];
    let mut dv = vec![T::zero(); groups * d];
    let mut dp = vec![T::zero(); groups];
    for (h, p) in probs.iter().enumerate() {
        let off = h * dh;
        for i in 0..groups {
            let doi = &dout[i * d + off..i * d + off + dh];
            let mut weighted = T::zero();
            for j in 0..=i {
                let vj = &v[j * d + off..j * d + off + dh];
                dp[j] = doi.iter().zip(vj).map(|(a, b)| *a * *b).sum();
                weighted += p[i * groups + j] * dp[j];
                let pij = p[i * groups + j];
                for (dvv, g) in dv[j * d + off..j * d + off + dh].iter_mut().zip(doi) {
                    *dvv += pij * *g;
                }
            }
            for j in 0..=i {
                let ds = p[i * groups + j] * (dp[j] - weighted) * scale;
                if ds == T::zero() {
                    continue;
                }
                for c in 0..dh {
                    dq[i * d + off + c] += ds * k[j * d + off + c];
                    dk[j * d + off + c] += ds * q[i * d + off + c];
                }
            }
        }
    }
    (dq, dk, dv)
}

/// Runs the model on one window, keeping everything backward needs.
pub fn forward_cached<T: Real>(
    params: &Params<T>,
    cfg: &ProbeConfig,
    window: &Window,
) -> Result<ForwardCache<T>> {
    let groups = window.num_groups();
    if groups > cfg.context_window {
        return Err(Error::WindowOverflow {
            got: groups,
            max: cfg.context_window,
        });
    }
    let n = window.num_notes();
    let d = cfg.width;
    let ff = cfg.ff_width();

    let x: Vec<T> = window
        .features
        .iter()
        .flat_map(|f| f.as_slice().iter().map(|v| T::lit(*v)))
        .collect();
    let rules: Vec<usize> = window.rules.iter().map(|l| l.index()).collect();
    let group_of = window.group_of();
    let group_sizes: Vec<usize> = window.groups.iter().map(|r| r.len()).collect();

    let mut e = linear(&x, n, FEATURE_DIM, &params.enc_w.data, &params.enc_b.data, d);
    for (row, &r) in rules.iter().enumerate() {
        for (ev, rv) in e[row * d..(row + 1) * d].iter_mut().zip(params.rule_emb.row(r)) {
            *ev += *rv;
        }
    }

    let mut h = vec![T::zero(); groups * d];
    for (g, range) in window.groups.iter().enumerate() {
        let inv = T::one() / T::lit(range.len() as f64);
        let hg = &mut h[g * d..(g + 1) * d];
        for note in range.clone() {
            for (a, b) in hg.iter_mut().zip(&e[note * d..(note + 1) * d]) {
                *a += *b * inv;
            }
        }
        for (a, b) in hg.iter_mut().zip(params.pos_emb.row(g)) {
            *a += *b;
        }
    }

    let mut layer_caches = Vec::with_capacity(params.layers.len());
    for lp in &params.layers {
        let (a, ln1) = layer_norm(&h, groups, d, &lp.ln1_gamma.data, &lp.ln1_beta.data);
        let q = linear(&a, groups, d, &lp.wq.data, &lp.bq.data, d);
        let k = linear(&a, groups, d, &lp.wk.data, &lp.bk.data, d);
        let v = linear(&a, groups, d, &lp.wv.data, &lp.bv.data, d);
        let (attn, probs) = causal_attention(&q, &k, &v, groups, d, cfg.heads);
        let o = linear(&attn, groups, d, &lp.wo.data, &lp.bo.data, d);
        let mid: Vec<T> = h.iter().zip(&o).map(|(a, b)| *a + *b).collect();
        let (b, ln2) = layer_norm(&mid, groups, d, &lp.ln2_gamma.data, &lp.ln2_beta.data);
        let u = linear(&b, groups, d, &lp.ff1_w.data, &lp.ff1_b.data, ff);
        let gu: Vec<T> = u.iter().map(|v| gelu(*v)).collect();
        let f = linear(&gu, groups, ff, &lp.ff2_w.data, &lp.ff2_b.data, d);
        h = mid.iter().zip(&f).map(|(a, b)| *a + *b).collect();
        layer_caches.push(LayerCache {
            ln1,
            a,
            q,
            k,
            v,
            probs,
            attn,
            ln2,
            b,
            u,
            gu,
        });
    }

    let (c, lnf) = layer_norm(&h, groups, d, &params.lnf_gamma.data, &params.lnf_beta.data);
    let mut z = e;
    for (note, &g) in group_of.iter().enumerate() {
        for (a, b) in z[note * d..(note + 1) * d].iter_mut().zip(&c[g * d..(g + 1) * d]) {
            *a += *b;
        }
    }
    let logits = linear(&z, n, d, &params.cls_w.data, &params.cls_b.data, NUM_CLASSES);
    let correction_logits = linear(&z, n, d, &params.cor_w.data, &params.cor_b.data, 1);

    Ok(ForwardCache {
        notes: n,
        groups,
        x,
        group_of,
        group_sizes,
        rules,
        layers: layer_caches,
        lnf,
        z,
        logits,
        correction_logits,
    })
}

impl<T: Real> ForwardCache<T> {
    pub fn outputs(&self) -> Vec<NoteOutput> {
        (0..self.notes)
            .map(|n| {
                let probs = softmax(&self.logits[n * NUM_CLASSES..(n + 1) * NUM_CLASSES]);
                let mut class_probs = [0.0; NUM_CLASSES];
                for (dst, p) in class_probs.iter_mut().zip(probs) {
                    *dst = p.to_f64_lossless();
                }
                NoteOutput {
                    class_probs,
                    correction_prob: sigmoid(self.correction_logits[n]).to_f64_lossless(),
                }
            })
            .collect()
    }
}

/// Summed per-note loss terms over one window.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub ce: f64,
    pub bce: f64,
    pub notes: usize,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.ce + self.bce
    }

    pub fn mean(&self) -> f64 {
        if self.notes == 0 {
            0.0
        } else {
            self.total() / self.notes as f64
        }
    }

    pub fn add(&mut self, other: &LossParts) {
        self.ce += other.ce;
        self.bce += other.bce;
        self.notes += other.notes;
    }
}

/// Cross-entropy of the class head against the edited label plus binary
/// cross-entropy of the correction head against `1[rule != edited]`.
/// Returns the summed terms and the loss gradients w.r.t. the logits,
/// multiplied by `scale`.
pub fn loss_and_logit_grads<T: Real>(
    cache: &ForwardCache<T>,
    targets: &[crate::corpus::FingerLabel],
    scale: T,
) -> (LossParts, Vec<T>, Vec<T>) {
    let n = cache.notes;
    let mut parts = LossParts {
        notes: n,
        ..LossParts::default()
    };
    let mut dlogits = vec![T::zero(); n * NUM_CLASSES];
    let mut dcor = vec![T::zero(); n];
    for note in 0..n {
        let logits = &cache.logits[note * NUM_CLASSES..(note + 1) * NUM_CLASSES];
        let target = targets[note].index();
        parts.ce += (log_sum_exp(logits) - logits[target]).to_f64_lossless();
        let probs = softmax(logits);
        for (c, p) in probs.into_iter().enumerate() {
            let indicator = if c == target { T::one() } else { T::zero() };
            dlogits[note * NUM_CLASSES + c] = (p - indicator) * scale;
        }
        let c_star = if cache.rules[note] != target {
            T::one()
        } else {
            T::zero()
        };
        let logit = cache.correction_logits[note];
        parts.bce += (softplus(logit) - c_star * logit).to_f64_lossless();
        dcor[note] = (sigmoid(logit) - c_star) * scale;
    }
    (parts, dlogits, dcor)
}

/// Backpropagates logit gradients, accumulating into `grads`. The rule
/// embedding receives no gradient when it is frozen.
pub fn backward<T: Real>(
    params: &Params<T>,
    cfg: &ProbeConfig,
    cache: &ForwardCache<T>,
    dlogits: &[T],
    dcor: &[T],
    grads: &mut Params<T>,
) {
    let n = cache.notes;
    let groups = cache.groups;
    let d = cfg.width;
    let ff = cfg.ff_width();

    let mut dz = linear_backward(
        &cache.z,
        n,
        d,
        &params.cls_w.data,
        NUM_CLASSES,
        dlogits,
        &mut grads.cls_w.data,
        &mut grads.cls_b.data,
    );
    let dz_cor = linear_backward(
        &cache.z,
        n,
        d,
        &params.cor_w.data,
        1,
        dcor,
        &mut grads.cor_w.data,
        &mut grads.cor_b.data,
    );
    for (a, b) in dz.iter_mut().zip(&dz_cor) {
        *a += *b;
    }

    // z = e + c[g(n)]
    let mut dc = vec![T::zero(); groups * d];
    for (note, &g) in cache.group_of.iter().enumerate() {
        for (a, b) in dc[g * d..(g + 1) * d].iter_mut().zip(&dz[note * d..(note + 1) * d]) {
            *a += *b;
        }
    }
    let mut de = dz;

    let mut dh = layer_norm_backward(
        &cache.lnf,
        groups,
        d,
        &params.lnf_gamma.data,
        &dc,
        &mut grads.lnf_gamma.data,
        &mut grads.lnf_beta.data,
    );

    for (li, lc) in cache.layers.iter().enumerate().rev() {
        let lp = &params.layers[li];
        let lg = &mut grads.layers[li];
        // t' = mid + ff2(gelu(ff1(LN2(mid))))
        let dgu = linear_backward(&lc.gu, groups, ff, &lp.ff2_w.data, d, &dh, &mut lg.ff2_w.data, &mut lg.ff2_b.data);
        let du: Vec<T> = dgu.iter().zip(&lc.u).map(|(g, u)| *g * gelu_grad(*u)).collect();
        let db = linear_backward(&lc.b, groups, d, &lp.ff1_w.data, ff, &du, &mut lg.ff1_w.data, &mut lg.ff1_b.data);
        let dmid_ln = layer_norm_backward(&lc.ln2, groups, d, &lp.ln2_gamma.data, &db, &mut lg.ln2_gamma.data, &mut lg.ln2_beta.data);
        let dmid: Vec<T> = dh.iter().zip(&dmid_ln).map(|(a, b)| *a + *b).collect();
        // mid = t + out(attn(LN1(t)))
        let dattn = linear_backward(&lc.attn, groups, d, &lp.wo.data, d, &dmid, &mut lg.wo.data, &mut lg.bo.data);
        let (dq, dk, dv) = causal_attention_backward(&lc.q, &lc.k, &lc.v, &lc.probs, &dattn, groups, d, cfg.heads);
        let mut da = linear_backward(&lc.a, groups, d, &lp.wq.data, d, &dq, &mut lg.wq.data, &mut lg.bq.data);
        let da_k = linear_backward(&lc.a, groups, d, &lp.wk.data, d, &dk, &mut lg.wk.data, &mut lg.bk.data);
        let da_v = linear_backward(&lc.a, groups, d, &lp.wv.data, d, &dv, &mut lg.wv.data, &mut lg.bv.data);
        for i in 0..da.len() {
            da[i] += da_k[i] + da_v[i];
        }
        let dt_ln = layer_norm_backward(&lc.ln1, groups, d, &lp.ln1_gamma.data, &da, &mut lg.ln1_gamma.data, &mut lg.ln1_beta.data);
        dh = dmid.iter().zip(&dt_ln).map(|(a, b)| *a + *b).collect();
    }

    // t_g = mean(e) + P[g]
    for g in 0..groups {
        let src = &dh[g * d..(g + 1) * d];
        for (a, b) in grads.pos_emb.row_mut(g).iter_mut().zip(src) {
            *a += *b;
        }
    }
    for (note, &g) in cache.group_of.iter().enumerate() {
        let inv = T::one() / T::lit(cache.group_sizes[g] as f64);
        for c in 0..d {
            de[note * d + c] += dh[g * d + c] * inv;
        }
    }

    if !cfg.frozen_rule_embedding() {
        for (note, &r) in cache.rules.iter().enumerate() {
            for (a, b) in grads.rule_emb.row_mut(r).iter_mut().zip(&de[note * d..(note + 1) * d]) {
                *a += *b;
            }
        }
    }
    let _ = linear_backward(
        &cache.x,
        n,
        FEATURE_DIM,
        &params.enc_w.data,
        d,
        &de,
        &mut grads.enc_w.data,
        &mut grads.enc_b.data,
    );
}

/// Loss of one window and its gradient, accumulated into `grads` with
/// weight `scale`.
pub fn window_loss_and_grad<T: Real>(
    params: &Params<T>,
    cfg: &ProbeConfig,
    window: &Window,
    scale: T,
    grads: &mut Params<T>,
) -> Result<LossParts> {
    let targets = window
        .targets
        .as_ref()
        .ok_or_else(|| Error::Validation("training window without targets".into()))?;
    let cache = forward_cached(params, cfg, window)?;
    let (parts, dlogits, dcor) = loss_and_logit_grads(&cache, targets, scale);
    backward(params, cfg, &cache, &dlogits, &dcor, grads);
    Ok(parts)
}

/// Loss only, in the model's precision.
pub fn window_loss<T: Real>(params: &Params<T>, cfg: &ProbeConfig, window: &Window) -> Result<LossParts> {
    let targets = window
        .targets
        .as_ref()
        .ok_or_else(|| Error::Validation("training window without targets".into()))?;
    let cache = forward_cached(params, cfg, window)?;
    Ok(loss_and_logit_grads(&cache, targets, T::one()).0)
}
