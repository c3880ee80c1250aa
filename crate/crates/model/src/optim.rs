use serde::{Deserialize, Serialize};

/// Adam over a fixed list of tensors, addressed by position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    #[serde(skip)]
    pub(crate) m: Vec<Vec<f64>>,
    #[serde(skip)]
    pub(crate) v: Vec<Vec<f64>>,
}

/// Bias corrections for the current step.
#[derive(Debug, Clone, Copy)]
pub struct StepScale {
    c1: f64,
    c2: f64,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn begin_step(&mut self) -> StepScale {
        self.step += 1;
        let t = self.step as i32;
        StepScale {
            c1: 1.0 - self.beta1.powi(t),
            c2: 1.0 - self.beta2.powi(t),
        }
    }

    /// Updates tensor `index` in place; moments are created on first use.
    pub fn update(&mut self, index: usize, param: &mut [f64], grad: &[f64], scale: StepScale) {
        if self.m.len() <= index {
            self.m.resize(index + 1, Vec::new());
            self.v.resize(index + 1, Vec::new());
        }
        if self.m[index].is_empty() {
            self.m[index] = vec![0.0; param.len()];
            self.v[index] = vec![0.0; param.len()];
        }
        let (m, v) = (&mut self.m[index], &mut self.v[index]);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (((p, &g), m), v) in param
            .iter_mut()
            .zip(grad)
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / scale.c1;
            let v_hat = *v / scale.c2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    /// First and second moments of tensor `index`, empty if never updated.
    pub fn moments(&self, index: usize) -> (&[f64], &[f64]) {
        match (self.m.get(index), self.v.get(index)) {
            (Some(m), Some(v)) => (m, v),
            _ => (&[], &[]),
        }
    }

    pub(crate) fn set_moments(&mut self, index: usize, m: Vec<f64>, v: Vec<f64>) {
        if self.m.len() <= index {
            self.m.resize(index + 1, Vec::new());
            self.v.resize(index + 1, Vec::new());
        }
        self.m[index] = m;
        self.v[index] = v;
    }
}
