use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ModelConfig;

/// Unit of freezing and optimizer bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ParamGroup {
    Embeddings,
    Layer(usize),
    MlmHead,
    ClsHead,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    /// No key bias: it shifts every score of a query row equally and
    /// cancels in the softmax.
    pub wk: Array2<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
}

/// All encoder weights. Gradients and Adam moments reuse this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub emb_ln_g: Array1<f64>,
    pub emb_ln_b: Array1<f64>,
    pub layers: Vec<LayerParams>,
    /// d × vocab
    pub mlm_w: Array2<f64>,
    pub mlm_b: Array1<f64>,
    pub cls_w: Array1<f64>,
    pub cls_b: Array1<f64>,
    /// Fixed vocab × d offsets added to token embeddings; not trained.
    pub value_enc: Option<std::sync::Arc<Array2<f64>>>,
}

/// A named tensor view in checkpoint order.
pub struct TensorRef<'a> {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

// Lists every tensor once, in checkpoint order. `$get` is `as_slice` or
// `as_slice_mut`, `$iter` the matching `iter` or `iter_mut`.
macro_rules! visit {
    ($p:expr, $get:ident, $iter:ident, $f:expr) => {{
        let p = $p;
        let mut f = $f;
        f(
            "tok_emb".to_string(),
            ParamGroup::Embeddings,
            p.tok_emb.shape().to_vec(),
            p.tok_emb.$get().unwrap(),
        );
        f(
            "pos_emb".to_string(),
            ParamGroup::Embeddings,
            p.pos_emb.shape().to_vec(),
            p.pos_emb.$get().unwrap(),
        );
        f(
            "emb_ln.gamma".to_string(),
            ParamGroup::Embeddings,
            p.emb_ln_g.shape().to_vec(),
            p.emb_ln_g.$get().unwrap(),
        );
        f(
            "emb_ln.beta".to_string(),
            ParamGroup::Embeddings,
            p.emb_ln_b.shape().to_vec(),
            p.emb_ln_b.$get().unwrap(),
        );
        for (i, l) in p.layers.$iter().enumerate() {
            let g = ParamGroup::Layer(i);
            macro_rules! t {
                ($name:literal, $field:ident) => {
                    f(
                        format!("layers.{i}.{}", $name),
                        g,
                        l.$field.shape().to_vec(),
                        l.$field.$get().unwrap(),
                    )
                };
            }
            t!("wq", wq);
            t!("bq", bq);
            t!("wk", wk);
            t!("wv", wv);
            t!("bv", bv);
            t!("wo", wo);
            t!("bo", bo);
            t!("ln1.gamma", ln1_g);
            t!("ln1.beta", ln1_b);
            t!("w1", w1);
            t!("b1", b1);
            t!("w2", w2);
            t!("b2", b2);
            t!("ln2.gamma", ln2_g);
            t!("ln2.beta", ln2_b);
        }
        f(
            "mlm.w".to_string(),
            ParamGroup::MlmHead,
            p.mlm_w.shape().to_vec(),
            p.mlm_w.$get().unwrap(),
        );
        f(
            "mlm.b".to_string(),
            ParamGroup::MlmHead,
            p.mlm_b.shape().to_vec(),
            p.mlm_b.$get().unwrap(),
        );
        f(
            "cls.w".to_string(),
            ParamGroup::ClsHead,
            p.cls_w.shape().to_vec(),
            p.cls_w.$get().unwrap(),
        );
        f(
            "cls.b".to_string(),
            ParamGroup::ClsHead,
            p.cls_b.shape().to_vec(),
            p.cls_b.$get().unwrap(),
        );
    }};
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..a))
}

impl Params {
    /// Scaled-uniform matrices, zero biases, unit LayerNorm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (v, s, d, f) = (
            config.vocab_size,
            config.max_seq_len,
            config.hidden_dim,
            config.ffn_dim,
        );
        let tok_emb = xavier(&mut rng, v, d);
        let pos_emb = xavier(&mut rng, s, d);
        let layers = (0..config.num_layers)
            .map(|_| LayerParams {
                wq: xavier(&mut rng, d, d),
                bq: Array1::zeros(d),
                wk: xavier(&mut rng, d, d),
                wv: xavier(&mut rng, d, d),
                bv: Array1::zeros(d),
                wo: xavier(&mut rng, d, d),
                bo: Array1::zeros(d),
                ln1_g: Array1::ones(d),
                ln1_b: Array1::zeros(d),
                w1: xavier(&mut rng, d, f),
                b1: Array1::zeros(f),
                w2: xavier(&mut rng, f, d),
                b2: Array1::zeros(d),
                ln2_g: Array1::ones(d),
                ln2_b: Array1::zeros(d),
            })
            .collect();
        let mlm_w = xavier(&mut rng, d, v);
        let cls_w = xavier(&mut rng, d, 1)
            .into_shape_with_order(d)
            .expect("d x 1");
        Self {
            tok_emb,
            pos_emb,
            emb_ln_g: Array1::ones(d),
            emb_ln_b: Array1::zeros(d),
            layers,
            mlm_w,
            mlm_b: Array1::zeros(v),
            cls_w,
            cls_b: Array1::zeros(1),
            value_enc: None,
        }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.for_each_mut(|_, _, t| t.fill(0.0));
        z
    }

    /// Tensors in checkpoint order.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        visit!(self, as_slice, iter, |name, group, shape, data| out.push(
            TensorRef {
                name,
                group,
                shape,
                data
            }
        ));
        out
    }

    /// Visits every tensor mutably, in checkpoint order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&str, ParamGroup, &mut [f64])) {
        visit!(
            self,
            as_slice_mut,
            iter_mut,
            |name: String, group, _shape: Vec<usize>, data: &mut [f64]| f(&name, group, data)
        );
    }

    /// Pairs every tensor of `self` mutably with the same tensor of `other`.
    pub fn zip_mut(&mut self, other: &Params, mut f: impl FnMut(ParamGroup, &mut [f64], &[f64])) {
        let theirs = other.tensors();
        let mut i = 0;
        self.for_each_mut(|_, group, data| {
            f(group, data, theirs[i].data);
            i += 1;
        });
    }

    pub fn scalar_count(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.data.iter().all(|x| x.is_finite()))
    }
}
