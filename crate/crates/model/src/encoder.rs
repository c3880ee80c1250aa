//! Post-LN transformer encoder: forward pass with caches and manual backward.

use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::{LayerParams, ModelConfig, ModelError, Params};
use delirium_core::report::PAD_ID;

pub const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Non-pad tokens of a sequence with their original positions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActiveTokens {
    pub ids: Vec<u32>,
    pub positions: Vec<usize>,
}

impl ActiveTokens {
    pub fn new(config: &ModelConfig, token_ids: &[u32]) -> Result<Self, ModelError> {
        if token_ids.len() > config.max_seq_len {
            return Err(ModelError::SequenceTooLong {
                len: token_ids.len(),
                max: config.max_seq_len,
            });
        }
        let mut ids = Vec::with_capacity(token_ids.len());
        let mut positions = Vec::with_capacity(token_ids.len());
        for (p, &id) in token_ids.iter().enumerate() {
            if id as usize >= config.vocab_size {
                return Err(ModelError::TokenOutOfRange {
                    id,
                    vocab_size: config.vocab_size,
                });
            }
            if id != PAD_ID {
                ids.push(id);
                positions.push(p);
            }
        }
        if ids.is_empty() {
            return Err(ModelError::EmptySequence);
        }
        Ok(Self { ids, positions })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Index among active tokens of original position `p`.
    pub fn active_index(&self, p: usize) -> Option<usize> {
        self.positions.binary_search(&p).ok()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut inv_std = Array1::zeros(x.nrows());
    for (mut row, s) in xhat.axis_iter_mut(Axis(0)).zip(inv_std.iter_mut()) {
        let mean = row.sum() / d;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().map(|v| v * v).sum::<f64>() / d;
        *s = 1.0 / (var + LN_EPS).sqrt();
        let k = *s;
        row.mapv_inplace(|v| v * k);
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, inv_std })
}

/// Returns dx and accumulates dgamma, dbeta.
fn layer_norm_backward(
    dy: &Array2<f64>,
    c: &LnCache,
    g: &Array1<f64>,
    dg: &mut Array1<f64>,
    db: &mut Array1<f64>,
) -> Array2<f64> {
    *dg += &(dy * &c.xhat).sum_axis(Axis(0));
    *db += &dy.sum_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * g;
    for ((mut row, xh), &s) in dx
        .axis_iter_mut(Axis(0))
        .zip(c.xhat.axis_iter(Axis(0)))
        .zip(c.inv_std.iter())
    {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        Zip::from(&mut row)
            .and(&xh)
            .for_each(|v, &x| *v = s * (*v - mean_d - x * mean_dx));
    }
    dx
}

/// Inverted-dropout mask, `None` when inactive.
fn dropout_mask(
    rng: Option<&mut ChaCha8Rng>,
    rate: f64,
    shape: (usize, usize),
) -> Option<Array2<f64>> {
    let rng = rng?;
    if rate <= 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - rate);
    Some(Array2::from_shape_simple_fn(shape, || {
        if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        }
    }))
}

fn add_row(m: &mut Array2<f64>, b: &Array1<f64>) {
    *m += &b.view().insert_axis(Axis(0));
}

fn gather_rows(m: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows)
}

#[derive(Debug, Clone)]
pub(crate) struct EmbeddingCache {
    ids: Vec<u32>,
    positions: Vec<usize>,
    ln: LnCache,
    drop: Option<Array2<f64>>,
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache {
    /// Query rows; `None` means every row.
    rows: Option<Vec<usize>>,
    input: Array2<f64>,
    h_rows: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    drop_attn: Option<Array2<f64>>,
    ln1: LnCache,
    u: Array2<f64>,
    a1: Array2<f64>,
    g1: Array2<f64>,
    drop_ffn: Option<Array2<f64>>,
    ln2: LnCache,
}

/// Forward activations kept for backward.
#[derive(Debug, Clone)]
pub(crate) struct Trace {
    /// Layer index the pass started at; the embedding cache exists iff 0.
    pub start: usize,
    pub emb: Option<EmbeddingCache>,
    pub layers: Vec<LayerCache>,
}

pub(crate) fn embed(
    params: &Params,
    tokens: &ActiveTokens,
    dropout: f64,
    rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, EmbeddingCache) {
    let d = params.tok_emb.ncols();
    let mut x = Array2::zeros((tokens.len(), d));
    for (i, (&id, &p)) in tokens.ids.iter().zip(&tokens.positions).enumerate() {
        let mut row = x.row_mut(i);
        row += &params.tok_emb.row(id as usize);
        row += &params.pos_emb.row(p);
        if let Some(v) = &params.value_enc {
            row += &v.row(id as usize);
        }
    }
    let (mut y, ln) = layer_norm(&x, &params.emb_ln_g, &params.emb_ln_b);
    let drop = dropout_mask(rng, dropout, y.dim());
    if let Some(m) = &drop {
        y *= m;
    }
    (
        y,
        EmbeddingCache {
            ids: tokens.ids.clone(),
            positions: tokens.positions.clone(),
            ln,
            drop,
        },
    )
}

fn softmax_rows(s: &mut Array2<f64>) {
    for mut row in s.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

pub(crate) fn layer_forward(
    lp: &LayerParams,
    config: &ModelConfig,
    input: Array2<f64>,
    rows: Option<Vec<usize>>,
    mut rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, LayerCache) {
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let h_rows = match &rows {
        Some(r) => gather_rows(&input, r),
        None => input.clone(),
    };
    let mut q = h_rows.dot(&lp.wq);
    add_row(&mut q, &lp.bq);
    let k = input.dot(&lp.wk);
    let mut v = input.dot(&lp.wv);
    add_row(&mut v, &lp.bv);
    let r = h_rows.nrows();
    let mut ctx = Array2::zeros((r, config.hidden_dim));
    let mut probs = Vec::with_capacity(config.num_heads);
    for h in 0..config.num_heads {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut sc = q.slice(cols).dot(&k.slice(cols).t());
        sc *= scale;
        softmax_rows(&mut sc);
        ctx.slice_mut(cols).assign(&sc.dot(&v.slice(cols)));
        probs.push(sc);
    }
    let mut attn = ctx.dot(&lp.wo);
    add_row(&mut attn, &lp.bo);
    let drop_attn = dropout_mask(rng.as_deref_mut(), config.dropout_rate, attn.dim());
    if let Some(m) = &drop_attn {
        attn *= m;
    }
    let z1 = &h_rows + &attn;
    let (u, ln1) = layer_norm(&z1, &lp.ln1_g, &lp.ln1_b);
    let mut a1 = u.dot(&lp.w1);
    add_row(&mut a1, &lp.b1);
    let g1 = a1.mapv(gelu);
    let mut f = g1.dot(&lp.w2);
    add_row(&mut f, &lp.b2);
    let drop_ffn = dropout_mask(rng, config.dropout_rate, f.dim());
    if let Some(m) = &drop_ffn {
        f *= m;
    }
    let z2 = &u + &f;
    let (out, ln2) = layer_norm(&z2, &lp.ln2_g, &lp.ln2_b);
    (
        out,
        LayerCache {
            rows,
            input,
            h_rows,
            q,
            k,
            v,
            probs,
            ctx,
            drop_attn,
            ln1,
            u,
            a1,
            g1,
            drop_ffn,
            ln2,
        },
    )
}

/// Gradient of one layer. Returns the gradient w.r.t. the layer input when
/// `need_input_grad`.
pub(crate) fn layer_backward(
    lp: &LayerParams,
    gl: &mut LayerParams,
    config: &ModelConfig,
    c: &LayerCache,
    d_out: &Array2<f64>,
    need_input_grad: bool,
) -> Option<Array2<f64>> {
    let dh = config.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let dz2 = layer_norm_backward(d_out, &c.ln2, &lp.ln2_g, &mut gl.ln2_g, &mut gl.ln2_b);
    let mut df = dz2.clone();
    if let Some(m) = &c.drop_ffn {
        df *= m;
    }
    gl.w2 += &c.g1.t().dot(&df);
    gl.b2 += &df.sum_axis(Axis(0));
    let mut da1 = df.dot(&lp.w2.t());
    Zip::from(&mut da1)
        .and(&c.a1)
        .for_each(|g, &a| *g *= gelu_grad(a));
    gl.w1 += &c.u.t().dot(&da1);
    gl.b1 += &da1.sum_axis(Axis(0));
    let du = dz2 + da1.dot(&lp.w1.t());
    let dz1 = layer_norm_backward(&du, &c.ln1, &lp.ln1_g, &mut gl.ln1_g, &mut gl.ln1_b);
    let mut dattn = dz1.clone();
    if let Some(m) = &c.drop_attn {
        dattn *= m;
    }
    gl.wo += &c.ctx.t().dot(&dattn);
    gl.bo += &dattn.sum_axis(Axis(0));
    let dctx = dattn.dot(&lp.wo.t());

    let mut dq = Array2::zeros(c.q.dim());
    let mut dk = Array2::zeros(c.k.dim());
    let mut dv = Array2::zeros(c.v.dim());
    for (h, a) in c.probs.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let dctx_h = dctx.slice(cols);
        dv.slice_mut(cols).assign(&a.t().dot(&dctx_h));
        let da = dctx_h.dot(&c.v.slice(cols).t());
        let mut ds = &da * a;
        let row_dot = ds.sum_axis(Axis(1));
        Zip::from(ds.rows_mut())
            .and(a.rows())
            .and(&row_dot)
            .for_each(|mut r, ar, &rd| Zip::from(&mut r).and(&ar).for_each(|x, &p| *x -= p * rd));
        ds *= scale;
        dq.slice_mut(cols).assign(&ds.dot(&c.k.slice(cols)));
        dk.slice_mut(cols).assign(&ds.t().dot(&c.q.slice(cols)));
    }
    gl.wq += &c.h_rows.t().dot(&dq);
    gl.bq += &dq.sum_axis(Axis(0));
    gl.wk += &c.input.t().dot(&dk);
    gl.wv += &c.input.t().dot(&dv);
    gl.bv += &dv.sum_axis(Axis(0));
    if !need_input_grad {
        return None;
    }
    let mut dinput = dk.dot(&lp.wk.t()) + dv.dot(&lp.wv.t());
    let drows = dq.dot(&lp.wq.t()) + &dz1;
    match &c.rows {
        Some(rows) => {
            for (i, &r) in rows.iter().enumerate() {
                let mut dst = dinput.row_mut(r);
                dst += &drows.row(i);
            }
        }
        None => dinput += &drows,
    }
    Some(dinput)
}

pub(crate) fn embedding_backward(
    params: &Params,
    grads: &mut Params,
    c: &EmbeddingCache,
    d_out: &Array2<f64>,
) {
    let mut dy = d_out.clone();
    if let Some(m) = &c.drop {
        dy *= m;
    }
    let dx = layer_norm_backward(
        &dy,
        &c.ln,
        &params.emb_ln_g,
        &mut grads.emb_ln_g,
        &mut grads.emb_ln_b,
    );
    for (i, (&id, &p)) in c.ids.iter().zip(&c.positions).enumerate() {
        let row = dx.row(i);
        let mut t = grads.tok_emb.row_mut(id as usize);
        t += &row;
        let mut q = grads.pos_emb.row_mut(p);
        q += &row;
    }
}

/// Runs layers `start..L` from `hidden` (the input to layer `start`), with
/// only `query_rows` computed in the last layer.
pub(crate) fn encode_from(
    params: &Params,
    config: &ModelConfig,
    start: usize,
    hidden: Array2<f64>,
    query_rows: &[usize],
    mut rng: Option<&mut ChaCha8Rng>,
    keep_trace: bool,
) -> (Array2<f64>, Vec<LayerCache>) {
    let last = config.num_layers - 1;
    let mut h = hidden;
    let mut caches = Vec::new();
    for l in start..config.num_layers {
        let rows = (l == last).then(|| query_rows.to_vec());
        let (out, cache) = layer_forward(&params.layers[l], config, h, rows, rng.as_deref_mut());
        if keep_trace {
            caches.push(cache);
        }
        h = out;
    }
    (h, caches)
}

/// Full forward from tokens. Output rows correspond to `query_rows`.
pub(crate) fn encode(
    params: &Params,
    config: &ModelConfig,
    tokens: &ActiveTokens,
    query_rows: &[usize],
    mut rng: Option<&mut ChaCha8Rng>,
    keep_trace: bool,
) -> (Array2<f64>, Trace) {
    let (h0, emb) = embed(params, tokens, config.dropout_rate, rng.as_deref_mut());
    let (out, layers) = encode_from(params, config, 0, h0, query_rows, rng, keep_trace);
    (
        out,
        Trace {
            start: 0,
            emb: keep_trace.then_some(emb),
            layers,
        },
    )
}

/// Hidden state entering layer `upto` (all rows), without dropout.
pub(crate) fn hidden_before(
    params: &Params,
    config: &ModelConfig,
    tokens: &ActiveTokens,
    upto: usize,
) -> Array2<f64> {
    let (mut h, _) = embed(params, tokens, 0.0, None);
    for l in 0..upto.min(config.num_layers) {
        h = layer_forward(&params.layers[l], config, h, None, None).0;
    }
    h
}

/// Backpropagates `d_out` through the traced layers down to layer
/// `lowest_trainable`, and into the embeddings when `lowest_trainable == 0`.
pub(crate) fn backward(
    params: &Params,
    config: &ModelConfig,
    trace: &Trace,
    d_out: Array2<f64>,
    lowest_trainable: usize,
    grads: &mut Params,
) {
    let mut d = d_out;
    for (i, cache) in trace.layers.iter().enumerate().rev() {
        let l = trace.start + i;
        if l < lowest_trainable {
            break;
        }
        let need_input = l > lowest_trainable || (l == 0 && trace.emb.is_some());
        match layer_backward(
            &params.layers[l],
            &mut grads.layers[l],
            config,
            cache,
            &d,
            need_input,
        ) {
            Some(dn) => d = dn,
            None => return,
        }
    }
    if lowest_trainable == 0 {
        if let Some(emb) = &trace.emb {
            embedding_backward(params, grads, emb, &d);
        }
    }
}
