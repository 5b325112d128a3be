use super::{cross_entropy, LstmModel, TENSOR_NAMES};
use crate::error::{Error, Result};

/// Below this magnitude both gradients count as zero and the absolute
/// difference is reported instead of the relative one.
const ABSOLUTE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradientCheckReport {
    /// Largest error over all parameters (relative, or absolute under the floor).
    pub max_error: f64,
    pub worst_tensor: &'static str,
    pub worst_index: usize,
    /// Parameters whose gradients both fell under the floor.
    pub n_absolute: usize,
    pub max_absolute: f64,
    pub n_params: usize,
}

pub fn gradient_check(model: &LstmModel, sequence: &[Vec<f64>], label: u8, epsilon: f64) -> Result<f64> {
    Ok(gradient_check_detailed(model, sequence, label, epsilon)?.max_error)
}

/// Compares backpropagated gradients with central finite differences for
/// every parameter.
pub fn gradient_check_detailed(
    model: &LstmModel,
    sequence: &[Vec<f64>],
    label: u8,
    epsilon: f64,
) -> Result<GradientCheckReport> {
    if !(epsilon > 0.0 && epsilon <= 1e-2) {
        return Err(Error::InvalidParams(format!(
            "epsilon must lie in (0, 1e-2], got {epsilon}"
        )));
    }
    let (_, analytic) = model.gradients(sequence, label)?;
    let sequence = model.truncated(sequence);
    let label = usize::from(label);

    let mut report = GradientCheckReport {
        max_error: 0.0,
        worst_tensor: TENSOR_NAMES[0],
        worst_index: 0,
        n_absolute: 0,
        max_absolute: 0.0,
        n_params: 0,
    };
    let mut record = |tensor: usize, index: usize, analytic: f64, numeric: f64| {
        let scale = analytic.abs().max(numeric.abs());
        let diff = (analytic - numeric).abs();
        let error = if scale < ABSOLUTE_FLOOR {
            report.n_absolute += 1;
            report.max_absolute = report.max_absolute.max(diff);
            diff
        } else {
            diff / scale
        };
        report.n_params += 1;
        if error > report.max_error {
            report.max_error = error;
            report.worst_tensor = TENSOR_NAMES[tensor];
            report.worst_index = index;
        }
    };

    let mut probe = model.clone();

    // Input weights enter the loss only through W x_t, so a perturbation of
    // W[r][c] shifts projection row r by eps * x_t[c].
    let mut projections = probe.project_inputs(sequence);
    let cols = model.input_dim;
    let analytic_input = analytic.lstm_input.data();
    for r in 0..model.weights.lstm_input.rows() {
        for c in 0..cols {
            let saved: Vec<f64> = projections.iter().map(|p| p[r]).collect();
            for (p, x) in projections.iter_mut().zip(sequence) {
                p[r] += epsilon * x[c];
            }
            let plus = cross_entropy(&probe.trace_projected(&projections).logits, label);
            for ((p, x), s) in projections.iter_mut().zip(sequence).zip(&saved) {
                p[r] = s - epsilon * x[c];
            }
            let minus = cross_entropy(&probe.trace_projected(&projections).logits, label);
            for (p, s) in projections.iter_mut().zip(&saved) {
                p[r] = *s;
            }
            let index = r * cols + c;
            record(0, index, analytic_input[index], (plus - minus) / (2.0 * epsilon));
        }
    }

    for tensor in 1..TENSOR_NAMES.len() {
        let len = analytic.tensors()[tensor].len();
        for index in 0..len {
            let original = probe.weights.tensors()[tensor].data()[index];
            probe.weights.tensors_mut()[tensor].data_mut()[index] = original + epsilon;
            let plus = cross_entropy(&probe.trace_projected(&projections).logits, label);
            probe.weights.tensors_mut()[tensor].data_mut()[index] = original - epsilon;
            let minus = cross_entropy(&probe.trace_projected(&projections).logits, label);
            probe.weights.tensors_mut()[tensor].data_mut()[index] = original;
            record(
                tensor,
                index,
                analytic.tensors()[tensor].data()[index],
                (plus - minus) / (2.0 * epsilon),
            );
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::LstmParams;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_case(seed: u64, dim: usize, steps: usize) -> (LstmModel, Vec<Vec<f64>>, u8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = LstmParams {
            hidden_units: 3,
            dense1_units: 4,
            seed,
            ..LstmParams::default()
        };
        let mut model = LstmModel::initialize(dim, params).unwrap();
        for t in model.weights_mut().tensors_mut() {
            for v in t.data_mut() {
                *v = rng.gen_range(-0.8..0.8);
            }
        }
        let seq = (0..steps)
            .map(|_| (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        (model, seq, rng.gen_range(0..=1))
    }

    /// Plain finite differences through the full forward pass, without the
    /// projection shortcut.
    fn brute_force_max_error(model: &LstmModel, seq: &[Vec<f64>], label: u8, eps: f64) -> f64 {
        let (_, analytic) = model.gradients(seq, label).unwrap();
        let mut probe = model.clone();
        let mut worst: f64 = 0.0;
        for tensor in 0..TENSOR_NAMES.len() {
            for index in 0..analytic.tensors()[tensor].len() {
                let original = probe.weights.tensors()[tensor].data()[index];
                probe.weights.tensors_mut()[tensor].data_mut()[index] = original + eps;
                let plus = probe.loss(seq, label).unwrap();
                probe.weights.tensors_mut()[tensor].data_mut()[index] = original - eps;
                let minus = probe.loss(seq, label).unwrap();
                probe.weights.tensors_mut()[tensor].data_mut()[index] = original;
                let a = analytic.tensors()[tensor].data()[index];
                let n = (plus - minus) / (2.0 * eps);
                let scale = a.abs().max(n.abs());
                worst = worst.max(if scale < ABSOLUTE_FLOOR {
                    (a - n).abs()
                } else {
                    (a - n).abs() / scale
                });
            }
        }
        worst
    }

    #[test]
    fn small_models_pass() {
        for seed in 0..5 {
            let (model, seq, label) = random_case(seed, 5, 3);
            let report = gradient_check_detailed(&model, &seq, label, 1e-5).unwrap();
            assert!(report.max_error < 1e-4, "seed {seed}: {report:?}");
            assert_eq!(report.n_params, model.weights().n_params());
            let brute = brute_force_max_error(&model, &seq, label, 1e-5);
            assert!(brute < 1e-4, "seed {seed}: brute force {brute}");
        }
    }

    #[test]
    fn dead_units_fall_back_to_absolute_error() {
        let (mut model, seq, label) = random_case(3, 4, 2);
        // all dense-1 units rectified away: everything upstream has zero gradient
        for v in model.weights_mut().dense1_bias.data_mut() {
            *v = -100.0;
        }
        let report = gradient_check_detailed(&model, &seq, label, 1e-5).unwrap();
        let upstream = ["lstm_input", "lstm_recurrent", "lstm_bias", "dense1", "dense1_bias"];
        let expected: usize = model
            .weights()
            .tensors()
            .iter()
            .zip(TENSOR_NAMES)
            .filter(|(_, name)| upstream.contains(name))
            .map(|(t, _)| t.len())
            .sum();
        assert!(report.n_absolute >= expected);
        assert!(report.max_absolute < 1e-8, "{report:?}");
        assert!(report.max_error < 1e-4);
    }

    #[test]
    fn order_free_and_epsilon_checked() {
        let (model, seq, label) = random_case(8, 3, 2);
        let a = gradient_check(&model, &seq, label, 1e-5).unwrap();
        let b = gradient_check(&model, &seq, label, 1e-5).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
        assert!(gradient_check(&model, &seq, label, 0.0).is_err());
        assert!(gradient_check(&model, &seq, label, 0.1).is_err());
    }
}
