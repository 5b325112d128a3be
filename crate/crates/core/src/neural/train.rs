use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LstmModel, LstmParams, LstmWeights};
use crate::error::{Error, Result};

const INIT_RANGE: f64 = 0.08;

pub(crate) fn init_uniform(weights: &mut LstmWeights, rng: &mut ChaCha8Rng) {
    for tensor in weights.tensors_mut() {
        for v in tensor.data_mut() {
            *v = rng.gen_range(-INIT_RANGE..=INIT_RANGE);
        }
    }
}

struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    lr: f64,
    step: i32,
    first: LstmWeights,
    second: LstmWeights,
}

impl Adam {
    fn new(shape: &LstmWeights, params: &LstmParams) -> Self {
        let mut first = shape.clone();
        first.fill_zero();
        Adam {
            beta1: params.adam_beta1,
            beta2: params.adam_beta2,
            eps: params.adam_eps,
            lr: params.learning_rate,
            step: 0,
            second: first.clone(),
            first,
        }
    }

    fn update(&mut self, weights: &mut LstmWeights, grads: &LstmWeights) {
        self.step += 1;
        let correction1 = 1.0 - self.beta1.powi(self.step);
        let correction2 = 1.0 - self.beta2.powi(self.step);
        let tensors = weights
            .tensors_mut()
            .into_iter()
            .zip(grads.tensors())
            .zip(self.first.tensors_mut().into_iter().zip(self.second.tensors_mut()));
        for ((w, g), (m, v)) in tensors {
            let parts = w
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut()));
            for ((w, &g), (m, v)) in parts {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / correction1;
                let v_hat = *v / correction2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Mini-batch Adam on binary cross-entropy with full backpropagation
/// through time. Initialization and batch order are drawn from
/// `params.seed`.
pub fn train_lstm(sequences: &[Vec<Vec<f64>>], labels: &[u8], params: &LstmParams) -> Result<LstmModel> {
    params.validate()?;
    if sequences.is_empty() {
        return Err(Error::InsufficientData("no training sequences".into()));
    }
    if labels.len() != sequences.len() {
        return Err(Error::DimensionMismatch {
            expected: sequences.len(),
            found: labels.len(),
        });
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Validation(format!("label {bad} is not binary")));
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::SingleClass);
    }
    let input_dim = sequences[0].first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut model = LstmModel::zeros(input_dim, *params)?;
    for sequence in sequences {
        model.check_sequence(sequence)?;
    }
    init_uniform(&mut model.weights, &mut rng);

    let mut adam = Adam::new(&model.weights, params);
    let mut grads = model.weights.clone();
    let mut order: Vec<usize> = (0..sequences.len()).collect();

    for epoch in 1..=params.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(params.batch_size) {
            grads.fill_zero();
            for &i in batch {
                epoch_loss += model.accumulate_gradients(&sequences[i], labels[i], &mut grads);
            }
            let scale = 1.0 / batch.len() as f64;
            for t in grads.tensors_mut() {
                t.data_mut().iter_mut().for_each(|g| *g *= scale);
            }
            adam.update(&mut model.weights, &grads);
            if !model.weights.all_finite() {
                return Err(Error::NonFiniteLoss { epoch });
            }
        }
        let mean = epoch_loss / sequences.len() as f64;
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        model.history.push(mean);
    }
    Ok(model)
}
