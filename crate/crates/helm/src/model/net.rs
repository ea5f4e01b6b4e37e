//! Transformer parameters, forward pass, and manual backward pass.
//!
//! Pre-LayerNorm blocks with learned positional embeddings. Attention hides
//! PAD keys from every query except the PAD position itself, which attends to
//! itself so its activations stay finite.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::ModelConfig;
use super::math::{gelu, gelu_grad, linear, linear_backward, Mat};
use super::ModelError;

/// Attention visibility pattern; MLM trains bidirectional, CLM causal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionMode {
    Bidirectional,
    Causal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Mat,
    pub ln1_b: Mat,
    pub wq: Mat,
    pub bq: Mat,
    pub wk: Mat,
    pub bk: Mat,
    pub wv: Mat,
    pub bv: Mat,
    pub wo: Mat,
    pub bo: Mat,
    pub ln2_g: Mat,
    pub ln2_b: Mat,
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tok_emb: Mat,
    pub pos_emb: Mat,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Mat,
    pub lnf_b: Mat,
    pub w_head: Mat,
    pub b_head: Mat,
}

impl Params {
    pub fn zeros(cfg: &ModelConfig) -> Params {
        let h = cfg.hidden_size;
        let layer = || LayerParams {
            ln1_g: Mat::zeros(1, h),
            ln1_b: Mat::zeros(1, h),
            wq: Mat::zeros(h, h),
            bq: Mat::zeros(1, h),
            wk: Mat::zeros(h, h),
            bk: Mat::zeros(1, h),
            wv: Mat::zeros(h, h),
            bv: Mat::zeros(1, h),
            wo: Mat::zeros(h, h),
            bo: Mat::zeros(1, h),
            ln2_g: Mat::zeros(1, h),
            ln2_b: Mat::zeros(1, h),
            w1: Mat::zeros(h, cfg.intermediate_size),
            b1: Mat::zeros(1, cfg.intermediate_size),
            w2: Mat::zeros(cfg.intermediate_size, h),
            b2: Mat::zeros(1, h),
        };
        Params {
            tok_emb: Mat::zeros(cfg.vocab_size, h),
            pos_emb: Mat::zeros(cfg.context_length, h),
            layers: (0..cfg.layers).map(|_| layer()).collect(),
            lnf_g: Mat::zeros(1, h),
            lnf_b: Mat::zeros(1, h),
            w_head: Mat::zeros(h, cfg.vocab_size),
            b_head: Mat::zeros(1, cfg.vocab_size),
        }
    }

    /// Seeded initialization: embeddings Normal(0, 0.02), projection
    /// matrices Uniform(±sqrt(6/(fanIn+fanOut))), biases zero, LN gains one.
    /// All values are quantized to f32 so checkpoints are exact.
    pub fn init(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Params {
        let mut p = Params::zeros(cfg);
        let normal = Normal::new(0.0, 0.02).unwrap();
        let fill_normal = |m: &mut Mat, rng: &mut ChaCha8Rng| {
            for v in &mut m.data {
                *v = normal.sample(rng);
            }
        };
        let fill_uniform = |m: &mut Mat, rng: &mut ChaCha8Rng| {
            let s = (6.0 / (m.rows + m.cols) as f64).sqrt();
            for v in &mut m.data {
                *v = rng.gen_range(-s..s);
            }
        };
        fill_normal(&mut p.tok_emb, rng);
        fill_normal(&mut p.pos_emb, rng);
        for layer in &mut p.layers {
            layer.ln1_g = Mat::filled(1, cfg.hidden_size, 1.0);
            fill_uniform(&mut layer.wq, rng);
            fill_uniform(&mut layer.wk, rng);
            fill_uniform(&mut layer.wv, rng);
            fill_uniform(&mut layer.wo, rng);
            layer.ln2_g = Mat::filled(1, cfg.hidden_size, 1.0);
            fill_uniform(&mut layer.w1, rng);
            fill_uniform(&mut layer.w2, rng);
        }
        p.lnf_g = Mat::filled(1, cfg.hidden_size, 1.0);
        fill_uniform(&mut p.w_head, rng);
        for (_, _, m) in p.tensors_mut() {
            m.quantize_f32();
        }
        p
    }

    /// Named tensors in a fixed order shared by the optimizer and the
    /// checkpoint format. The bool marks weight-decay eligibility.
    pub fn tensors(&self) -> Vec<(String, bool, &Mat)> {
        let mut out: Vec<(String, bool, &Mat)> = vec![
            ("tokEmb".into(), true, &self.tok_emb),
            ("posEmb".into(), false, &self.pos_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let n = |s: &str| format!("layer{i}.{s}");
            out.extend([
                (n("ln1G"), false, &l.ln1_g),
                (n("ln1B"), false, &l.ln1_b),
                (n("wq"), true, &l.wq),
                (n("bq"), false, &l.bq),
                (n("wk"), true, &l.wk),
                (n("bk"), false, &l.bk),
                (n("wv"), true, &l.wv),
                (n("bv"), false, &l.bv),
                (n("wo"), true, &l.wo),
                (n("bo"), false, &l.bo),
                (n("ln2G"), false, &l.ln2_g),
                (n("ln2B"), false, &l.ln2_b),
                (n("w1"), true, &l.w1),
                (n("b1"), false, &l.b1),
                (n("w2"), true, &l.w2),
                (n("b2"), false, &l.b2),
            ]);
        }
        out.extend([
            ("lnfG".into(), false, &self.lnf_g),
            ("lnfB".into(), false, &self.lnf_b),
            ("wHead".into(), true, &self.w_head),
            ("bHead".into(), false, &self.b_head),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, bool, &mut Mat)> {
        let mut out: Vec<(String, bool, &mut Mat)> = vec![
            ("tokEmb".into(), true, &mut self.tok_emb),
            ("posEmb".into(), false, &mut self.pos_emb),
        ];
        for (i, l) in self.layers.iter_mut().enumerate() {
            let n = |s: &str| format!("layer{i}.{s}");
            out.extend([
                (n("ln1G"), false, &mut l.ln1_g),
                (n("ln1B"), false, &mut l.ln1_b),
                (n("wq"), true, &mut l.wq),
                (n("bq"), false, &mut l.bq),
                (n("wk"), true, &mut l.wk),
                (n("bk"), false, &mut l.bk),
                (n("wv"), true, &mut l.wv),
                (n("bv"), false, &mut l.bv),
                (n("wo"), true, &mut l.wo),
                (n("bo"), false, &mut l.bo),
                (n("ln2G"), false, &mut l.ln2_g),
                (n("ln2B"), false, &mut l.ln2_b),
                (n("w1"), true, &mut l.w1),
                (n("b1"), false, &mut l.b1),
                (n("w2"), true, &mut l.w2),
                (n("b2"), false, &mut l.b2),
            ]);
        }
        out.extend([
            ("lnfG".into(), false, &mut self.lnf_g),
            ("lnfB".into(), false, &mut self.lnf_b),
            ("wHead".into(), true, &mut self.w_head),
            ("bHead".into(), false, &mut self.b_head),
        ]);
        out
    }
}

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Mat,
    rstd: Vec<f64>,
}

fn layer_norm(x: &Mat, g: &Mat, b: &Mat) -> (Mat, LnCache) {
    let mut y = Mat::zeros(x.rows, x.cols);
    let mut xhat = Mat::zeros(x.rows, x.cols);
    let mut rstd = Vec::with_capacity(x.rows);
    let n = x.cols as f64;
    for t in 0..x.rows {
        let row = x.row(t);
        let mean = row.iter().sum::<f64>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let r = 1.0 / (var + LN_EPS).sqrt();
        rstd.push(r);
        for j in 0..x.cols {
            let xh = (row[j] - mean) * r;
            *xhat.at_mut(t, j) = xh;
            *y.at_mut(t, j) = g.at(0, j) * xh + b.at(0, j);
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward(
    cache: &LnCache,
    g: &Mat,
    dy: &Mat,
    dg: &mut Mat,
    db: &mut Mat,
) -> Mat {
    let mut dx = Mat::zeros(dy.rows, dy.cols);
    let n = dy.cols as f64;
    for t in 0..dy.rows {
        let mut sum_dxhat = 0.0;
        let mut sum_dxhat_xhat = 0.0;
        for j in 0..dy.cols {
            let d = dy.at(t, j);
            let xh = cache.xhat.at(t, j);
            *dg.at_mut(0, j) += d * xh;
            *db.at_mut(0, j) += d;
            let dxh = d * g.at(0, j);
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh;
        }
        let r = cache.rstd[t];
        for j in 0..dy.cols {
            let dxh = dy.at(t, j) * g.at(0, j);
            *dx.at_mut(t, j) =
                r * (dxh - sum_dxhat / n - cache.xhat.at(t, j) * sum_dxhat_xhat / n);
        }
    }
    dx
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1: LnCache,
    a: Mat,
    q: Mat,
    k: Mat,
    v: Mat,
    /// Per-head T×T attention probabilities.
    att: Vec<Mat>,
    /// Concatenated head outputs before the output projection.
    ctx: Mat,
    ln2: LnCache,
    b: Mat,
    h_pre: Mat,
    h_act: Mat,
}

/// Activations needed for the backward pass of one sequence.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    tokens: Vec<u32>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
    y: Mat,
}

impl ForwardCache {
    /// Final-LayerNorm hidden states (T×H), used for sequence embeddings.
    pub fn final_hidden(&self) -> &Mat {
        &self.y
    }
}

fn check_tokens(cfg: &ModelConfig, tokens: &[u32]) -> Result<(), ModelError> {
    if tokens.is_empty() {
        return Err(ModelError::BadInput("empty token sequence".into()));
    }
    if tokens.len() > cfg.context_length {
        return Err(ModelError::BadInput(format!(
            "sequence length {} exceeds context length {}",
            tokens.len(),
            cfg.context_length
        )));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(ModelError::BadInput(format!(
            "token id {bad} outside vocabulary of size {}",
            cfg.vocab_size
        )));
    }
    Ok(())
}

/// Runs the network over one sequence; returns per-position logits (T×V)
/// and the cache required by [`backward`].
pub fn forward(
    params: &Params,
    cfg: &ModelConfig,
    tokens: &[u32],
    mode: AttentionMode,
) -> Result<(Mat, ForwardCache), ModelError> {
    check_tokens(cfg, tokens)?;
    let t_len = tokens.len();
    let h = cfg.hidden_size;
    let heads = cfg.heads;
    let d = cfg.head_dim();
    let pad = cfg.pad_id();
    let is_pad: Vec<bool> = tokens.iter().map(|&t| t == pad).collect();
    let allowed = |i: usize, j: usize| -> bool {
        j == i || (!is_pad[j] && (mode == AttentionMode::Bidirectional || j <= i))
    };

    let mut x = Mat::zeros(t_len, h);
    for t in 0..t_len {
        let emb = params.tok_emb.row(tokens[t] as usize);
        let pos = params.pos_emb.row(t);
        for j in 0..h {
            *x.at_mut(t, j) = emb[j] + pos[j];
        }
    }

    let mut layer_caches = Vec::with_capacity(cfg.layers);
    for lp in &params.layers {
        let x_in = x.clone();
        let (a, ln1) = layer_norm(&x_in, &lp.ln1_g, &lp.ln1_b);
        let q = linear(&a, &lp.wq, &lp.bq);
        let k = linear(&a, &lp.wk, &lp.bk);
        let v = linear(&a, &lp.wv, &lp.bv);
        let scale = 1.0 / (d as f64).sqrt();
        let mut att = Vec::with_capacity(heads);
        let mut ctx = Mat::zeros(t_len, h);
        for head in 0..heads {
            let off = head * d;
            let mut probs = Mat::zeros(t_len, t_len);
            for i in 0..t_len {
                let qi = &q.row(i)[off..off + d];
                let mut max_s = f64::NEG_INFINITY;
                let mut scores = vec![f64::NEG_INFINITY; t_len];
                for j in 0..t_len {
                    if !allowed(i, j) {
                        continue;
                    }
                    let kj = &k.row(j)[off..off + d];
                    let s = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
                    scores[j] = s;
                    max_s = max_s.max(s);
                }
                let mut denom = 0.0;
                for s in &mut scores {
                    if s.is_finite() {
                        *s = (*s - max_s).exp();
                        denom += *s;
                    } else {
                        *s = 0.0;
                    }
                }
                for j in 0..t_len {
                    let p = scores[j] / denom;
                    *probs.at_mut(i, j) = p;
                    if p != 0.0 {
                        let vj = &v.row(j)[off..off + d];
                        let cr = ctx.row_mut(i);
                        for c in 0..d {
                            cr[off + c] += p * vj[c];
                        }
                    }
                }
            }
            att.push(probs);
        }
        let o = linear(&ctx, &lp.wo, &lp.bo);
        let mut x_mid = x_in.clone();
        for (xm, ov) in x_mid.data.iter_mut().zip(&o.data) {
            *xm += ov;
        }
        let (b, ln2) = layer_norm(&x_mid, &lp.ln2_g, &lp.ln2_b);
        let h_pre = linear(&b, &lp.w1, &lp.b1);
        let mut h_act = h_pre.clone();
        for v in &mut h_act.data {
            *v = gelu(*v);
        }
        let f = linear(&h_act, &lp.w2, &lp.b2);
        let mut x_out = x_mid.clone();
        for (xo, fv) in x_out.data.iter_mut().zip(&f.data) {
            *xo += fv;
        }
        layer_caches.push(LayerCache {
            ln1,
            a,
            q,
            k,
            v,
            att,
            ctx,
            ln2,
            b,
            h_pre,
            h_act,
        });
        x = x_out;
    }

    let x_final = x;
    let (y, lnf) = layer_norm(&x_final, &params.lnf_g, &params.lnf_b);
    let logits = linear(&y, &params.w_head, &params.b_head);
    Ok((
        logits,
        ForwardCache {
            tokens: tokens.to_vec(),
            layers: layer_caches,
            lnf,
            y,
        },
    ))
}

/// Accumulates parameter gradients for one sequence into `grads` given the
/// gradient of the loss with respect to the logits (T×V).
pub fn backward(params: &Params, cfg: &ModelConfig, cache: &ForwardCache, dlogits: &Mat, grads: &mut Params) {
    let t_len = cache.tokens.len();
    let h = cfg.hidden_size;
    let heads = cfg.heads;
    let d = cfg.head_dim();
    let scale = 1.0 / (d as f64).sqrt();

    let dy = linear_backward(
        &cache.y,
        &params.w_head,
        dlogits,
        &mut grads.w_head,
        &mut grads.b_head,
    );
    let mut dx = layer_norm_backward(&cache.lnf, &params.lnf_g, &dy, &mut grads.lnf_g, &mut grads.lnf_b);

    for (li, lc) in cache.layers.iter().enumerate().rev() {
        let lp = &params.layers[li];
        let lg = &mut grads.layers[li];

        // MLP block: x_out = x_mid + gelu(ln2(x_mid)·W1 + b1)·W2 + b2.
        let dh_act = linear_backward(&lc.h_act, &lp.w2, &dx, &mut lg.w2, &mut lg.b2);
        let mut dh_pre = dh_act;
        for (g, pre) in dh_pre.data.iter_mut().zip(&lc.h_pre.data) {
            *g *= gelu_grad(*pre);
        }
        let db = linear_backward(&lc.b, &lp.w1, &dh_pre, &mut lg.w1, &mut lg.b1);
        let dx_mid_ln = layer_norm_backward(&lc.ln2, &lp.ln2_g, &db, &mut lg.ln2_g, &mut lg.ln2_b);
        let mut dx_mid = dx;
        for (m, l) in dx_mid.data.iter_mut().zip(&dx_mid_ln.data) {
            *m += l;
        }

        // Attention block: x_mid = x_in + ctx·Wo + bo.
        let dctx = linear_backward(&lc.ctx, &lp.wo, &dx_mid, &mut lg.wo, &mut lg.bo);
        let mut dq = Mat::zeros(t_len, h);
        let mut dk = Mat::zeros(t_len, h);
        let mut dv = Mat::zeros(t_len, h);
        for head in 0..heads {
            let off = head * d;
            let probs = &lc.att[head];
            for i in 0..t_len {
                let dci = &dctx.row(i)[off..off + d];
                // dp and softmax backward along row i.
                let mut dp = vec![0.0; t_len];
                let mut dot = 0.0;
                for j in 0..t_len {
                    let p = probs.at(i, j);
                    if p == 0.0 {
                        continue;
                    }
                    let vj = &cache.layers[li].v.row(j)[off..off + d];
                    let g = dci.iter().zip(vj).map(|(a, b)| a * b).sum::<f64>();
                    dp[j] = g;
                    dot += p * g;
                    let dvj = &mut dv.row_mut(j)[off..off + d];
                    for c in 0..d {
                        dvj[c] += p * dci[c];
                    }
                }
                for j in 0..t_len {
                    let p = probs.at(i, j);
                    if p == 0.0 {
                        continue;
                    }
                    let ds = p * (dp[j] - dot) * scale;
                    let kj = &lc.k.row(j)[off..off + d];
                    let qi = &lc.q.row(i)[off..off + d];
                    {
                        let dqi = &mut dq.row_mut(i)[off..off + d];
                        for c in 0..d {
                            dqi[c] += ds * kj[c];
                        }
                    }
                    let dkj = &mut dk.row_mut(j)[off..off + d];
                    for c in 0..d {
                        dkj[c] += ds * qi[c];
                    }
                }
            }
        }
        let mut da = linear_backward(&lc.a, &lp.wq, &dq, &mut lg.wq, &mut lg.bq);
        let da_k = linear_backward(&lc.a, &lp.wk, &dk, &mut lg.wk, &mut lg.bk);
        let da_v = linear_backward(&lc.a, &lp.wv, &dv, &mut lg.wv, &mut lg.bv);
        for ((a, b), c) in da.data.iter_mut().zip(&da_k.data).zip(&da_v.data) {
            *a += b + c;
        }
        let dx_in_ln = layer_norm_backward(&lc.ln1, &lp.ln1_g, &da, &mut lg.ln1_g, &mut lg.ln1_b);
        let mut dx_in = dx_mid;
        for (m, l) in dx_in.data.iter_mut().zip(&dx_in_ln.data) {
            *m += l;
        }
        dx = dx_in;
    }

    for t in 0..t_len {
        let tok = cache.tokens[t] as usize;
        let dr = dx.row(t);
        let er = grads.tok_emb.row_mut(tok);
        for j in 0..h {
            er[j] += dr[j];
        }
        let pr = grads.pos_emb.row_mut(t);
        for j in 0..h {
            pr[j] += dr[j];
        }
    }
}
