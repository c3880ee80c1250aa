use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Batch, EncoderModel, FreezeSpec, ModelError, Params};

/// Relative error threshold used by [`GradCheckReport::passed`].
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= GRAD_CHECK_TOLERANCE
    }
}

fn perturbed_loss(
    model: &mut EncoderModel,
    batch: &Batch<'_>,
    tensor: usize,
    index: usize,
    delta: f64,
) -> Result<f64, ModelError> {
    let mut original = 0.0;
    let mut t = 0;
    model.params.for_each_mut(|_, _, data| {
        if t == tensor {
            original = data[index];
            data[index] += delta;
        }
        t += 1;
    });
    let loss = model.loss(batch);
    let mut t = 0;
    model.params.for_each_mut(|_, _, data| {
        if t == tensor {
            data[index] = original;
        }
        t += 1;
    });
    loss
}

/// Compares analytic gradients with five-point central differences on
/// `samples` coordinates spread round-robin over the trainable tensors.
/// `corrupt` may tamper with the analytic gradient to test the harness.
pub fn gradient_check(
    model: &EncoderModel,
    batch: &Batch<'_>,
    samples: usize,
    seed: u64,
    corrupt: Option<&dyn Fn(&mut Params)>,
) -> Result<GradCheckReport, ModelError> {
    let objective = batch.objective();
    let freeze = FreezeSpec::all_trainable(model.config.num_layers);
    let (_, mut grads) = model.gradients(batch, 0, None)?;
    if let Some(f) = corrupt {
        f(&mut grads);
    }
    let analytic = grads.tensors();
    let candidates: Vec<usize> = analytic
        .iter()
        .enumerate()
        .filter(|(_, t)| freeze.is_trainable(t.group, objective))
        .map(|(i, _)| i)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let h = 1e-3;
    let mut report = GradCheckReport {
        coordinates: 0,
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
    };
    for k in 0..samples {
        let tensor = candidates[k % candidates.len()];
        let index = rng.random_range(0..analytic[tensor].data.len());
        let mut f = |d| perturbed_loss(&mut probe, batch, tensor, index, d);
        let (p2, p1, m1, m2) = (f(2.0 * h)?, f(h)?, f(-h)?, f(-2.0 * h)?);
        let numeric = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
        let err = (analytic[tensor].data[index] - numeric).abs() / numeric.abs().max(1e-8);
        report.coordinates += 1;
        if err > report.max_relative_error {
            report.max_relative_error = err;
            report.worst_tensor = analytic[tensor].name.clone();
            report.worst_index = index;
        }
    }
    Ok(report)
}
