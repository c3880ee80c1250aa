use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{
    bce_with_logit, gelu, gelu_grad, probability, sigmoid, Adam, Container, ModelError, NamedTensor,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub hidden: [usize; 2],
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            hidden: [64, 64],
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Feed-forward net over standardized statistics. Standardizers come from
/// the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub columns: Vec<String>,
    pub config: BaselineConfig,
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w3: Array1<f64>,
    pub b3: Array1<f64>,
    /// Mean training loss after each epoch.
    pub loss_history: Vec<f64>,
}

struct Forward {
    x: Array2<f64>,
    a1: Array2<f64>,
    h1: Array2<f64>,
    a2: Array2<f64>,
    h2: Array2<f64>,
    z: Array1<f64>,
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-a..a))
}

impl BaselineModel {
    fn standardize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.mean.view().insert_axis(Axis(0))) / self.std.view().insert_axis(Axis(0))
    }

    fn forward(&self, x_raw: ArrayView2<f64>) -> Forward {
        let x = self.standardize(x_raw);
        let a1 = x.dot(&self.w1) + self.b1.view().insert_axis(Axis(0));
        let h1 = a1.mapv(gelu);
        let a2 = h1.dot(&self.w2) + self.b2.view().insert_axis(Axis(0));
        let h2 = a2.mapv(gelu);
        let z = h2.dot(&self.w3) + self.b3[0];
        Forward {
            x,
            a1,
            h1,
            a2,
            h2,
            z,
        }
    }

    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array1<f64>, ModelError> {
        if x.ncols() != self.columns.len() {
            return Err(ModelError::LayoutMismatch {
                expected: self.columns.len(),
                got: x.ncols(),
            });
        }
        Ok(self.forward(x).z)
    }

    pub fn loss(&self, x: ArrayView2<f64>, labels: &[bool]) -> Result<f64, ModelError> {
        let z = self.logits(x)?;
        Ok(z.iter()
            .zip(labels)
            .map(|(&z, &y)| bce_with_logit(z, y))
            .sum::<f64>()
            / labels.len().max(1) as f64)
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 6] {
        [
            self.w1.as_slice_mut().expect("contiguous"),
            self.b1.as_slice_mut().expect("contiguous"),
            self.w2.as_slice_mut().expect("contiguous"),
            self.b2.as_slice_mut().expect("contiguous"),
            self.w3.as_slice_mut().expect("contiguous"),
            self.b3.as_slice_mut().expect("contiguous"),
        ]
    }
}

struct Grads {
    w1: Array2<f64>,
    b1: Array1<f64>,
    w2: Array2<f64>,
    b2: Array1<f64>,
    w3: Array1<f64>,
    b3: Array1<f64>,
}

fn backward(model: &BaselineModel, f: &Forward, labels: &[bool]) -> (f64, Grads) {
    let n = labels.len() as f64;
    let mut loss = 0.0;
    let dz: Array1<f64> =
        f.z.iter()
            .zip(labels)
            .map(|(&z, &y)| {
                loss += bce_with_logit(z, y);
                (sigmoid(z) - if y { 1.0 } else { 0.0 }) / n
            })
            .collect();
    let w3 = f.h2.t().dot(&dz);
    let b3 = Array1::from_elem(1, dz.sum());
    let mut da2 = dz
        .view()
        .insert_axis(Axis(1))
        .dot(&model.w3.view().insert_axis(Axis(0)));
    Zip::from(&mut da2)
        .and(&f.a2)
        .for_each(|g, &a| *g *= gelu_grad(a));
    let w2 = f.h1.t().dot(&da2).as_standard_layout().into_owned();
    let b2 = da2.sum_axis(Axis(0));
    let mut da1 = da2.dot(&model.w2.t());
    Zip::from(&mut da1)
        .and(&f.a1)
        .for_each(|g, &a| *g *= gelu_grad(a));
    let w1 = f.x.t().dot(&da1).as_standard_layout().into_owned();
    let b1 = da1.sum_axis(Axis(0));
    (
        loss / n,
        Grads {
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
        },
    )
}

/// Trains with Adam on shuffled minibatches. Fails on a single-class set.
pub fn train_baseline(
    x: ArrayView2<f64>,
    labels: &[bool],
    columns: Vec<String>,
    config: &BaselineConfig,
) -> Result<BaselineModel, ModelError> {
    if x.nrows() != labels.len() || x.ncols() != columns.len() {
        return Err(ModelError::LayoutMismatch {
            expected: columns.len(),
            got: x.ncols(),
        });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == labels.len() {
        return Err(ModelError::SingleClass);
    }
    let f = columns.len();
    let mean = x.mean_axis(Axis(0)).expect("non-empty");
    let std = x
        .var_axis(Axis(0), 0.0)
        .mapv(|v| if v > 0.0 { v.sqrt() } else { 1.0 });
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let [h1, h2] = config.hidden;
    let mut model = BaselineModel {
        columns,
        config: config.clone(),
        mean,
        std,
        w1: xavier(&mut rng, f, h1),
        b1: Array1::zeros(h1),
        w2: xavier(&mut rng, h1, h2),
        b2: Array1::zeros(h2),
        w3: xavier(&mut rng, h2, 1)
            .into_shape_with_order(h2)
            .expect("h2 x 1"),
        b3: Array1::zeros(1),
        loss_history: Vec::new(),
    };
    let mut opt = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..labels.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size.max(1)) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<bool> = chunk.iter().map(|&i| labels[i]).collect();
            let fwd = model.forward(xb.view());
            let (loss, g) = backward(&model, &fwd, &yb);
            if !loss.is_finite() {
                return Err(ModelError::NonFinite(format!("baseline loss {loss}")));
            }
            epoch_loss += loss * chunk.len() as f64;
            let grads: [&[f64]; 6] = [
                g.w1.as_slice().expect("contiguous"),
                g.b1.as_slice().expect("contiguous"),
                g.w2.as_slice().expect("contiguous"),
                g.b2.as_slice().expect("contiguous"),
                g.w3.as_slice().expect("contiguous"),
                g.b3.as_slice().expect("contiguous"),
            ];
            let scale = opt.begin_step();
            for (i, (p, g)) in model.tensors_mut().into_iter().zip(grads).enumerate() {
                opt.update(i, p, g, scale);
            }
        }
        model.loss_history.push(epoch_loss / labels.len() as f64);
    }
    Ok(model)
}

/// Probability in (0, 1) for one raw feature vector.
pub fn score_baseline(model: &BaselineModel, vector: &[f64]) -> Result<f64, ModelError> {
    let x = ArrayView2::from_shape((1, vector.len()), vector).expect("row vector");
    Ok(probability(model.logits(x)?[0]))
}

#[derive(Serialize, Deserialize)]
struct BaselineMeta {
    columns: Vec<String>,
    config: BaselineConfig,
    loss_history: Vec<f64>,
}

fn tensor(name: &str, shape: &[usize], data: &[f64]) -> NamedTensor {
    NamedTensor {
        name: name.into(),
        shape: shape.to_vec(),
        data: data.to_vec(),
    }
}

pub fn save_baseline(path: &Path, model: &BaselineModel) -> Result<(), ModelError> {
    let s = |a: &Array1<f64>| a.as_slice().expect("contiguous").to_vec();
    let c = Container {
        kind: "baseline".into(),
        meta: serde_json::to_value(BaselineMeta {
            columns: model.columns.clone(),
            config: model.config.clone(),
            loss_history: model.loss_history.clone(),
        })?,
        tensors: vec![
            tensor("mean", model.mean.shape(), &s(&model.mean)),
            tensor("std", model.std.shape(), &s(&model.std)),
            tensor(
                "w1",
                model.w1.shape(),
                model.w1.as_slice().expect("contiguous"),
            ),
            tensor("b1", model.b1.shape(), &s(&model.b1)),
            tensor(
                "w2",
                model.w2.shape(),
                model.w2.as_slice().expect("contiguous"),
            ),
            tensor("b2", model.b2.shape(), &s(&model.b2)),
            tensor("w3", model.w3.shape(), &s(&model.w3)),
            tensor("b3", model.b3.shape(), &s(&model.b3)),
        ],
    };
    c.save(path)
}

pub fn load_baseline(path: &Path) -> Result<BaselineModel, ModelError> {
    let c = Container::load(path)?;
    if c.kind != "baseline" {
        return Err(ModelError::Checkpoint(format!(
            "expected a baseline checkpoint, found `{}`",
            c.kind
        )));
    }
    let meta: BaselineMeta = serde_json::from_value(c.meta.clone())?;
    let get = |name: &str| {
        c.tensor(name)
            .ok_or_else(|| ModelError::Checkpoint(format!("tensor `{name}` missing")))
    };
    let v = |name: &str| get(name).map(|t| Array1::from(t.data.clone()));
    let m = |name: &str| {
        get(name).and_then(|t| {
            Array2::from_shape_vec((t.shape[0], t.shape[1]), t.data.clone())
                .map_err(|e| ModelError::Checkpoint(format!("tensor `{name}`: {e}")))
        })
    };
    Ok(BaselineModel {
        columns: meta.columns,
        config: meta.config,
        mean: v("mean")?,
        std: v("std")?,
        w1: m("w1")?,
        b1: v("b1")?,
        w2: m("w2")?,
        b2: v("b2")?,
        w3: v("w3")?,
        b3: v("b3")?,
        loss_history: meta.loss_history,
    })
}
