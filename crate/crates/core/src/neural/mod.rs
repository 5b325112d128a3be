//! Small LSTM classifier over per-token encoder embeddings.
//!
//! Architecture: one LSTM layer, a rectified dense layer on the final hidden
//! state, then a two-way softmax head. The loss is the binary cross-entropy
//! of the positive-class probability, `-ln p[label]`.

mod gradcheck;
mod io;
mod matrix;
mod train;

use serde::{Deserialize, Serialize};

pub use gradcheck::{gradient_check, gradient_check_detailed, GradientCheckReport};
pub use matrix::Matrix;
pub use train::train_lstm;

use crate::error::{Error, Result};

pub const TENSOR_NAMES: [&str; 7] = [
    "lstm_input",
    "lstm_recurrent",
    "lstm_bias",
    "dense1",
    "dense1_bias",
    "dense2",
    "dense2_bias",
];

const GATES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmParams {
    pub hidden_units: usize,
    pub dense1_units: usize,
    pub dense2_units: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    pub batch_size: usize,
    /// Sequences longer than this are truncated to their first steps.
    pub max_steps: usize,
}

impl Default for LstmParams {
    fn default() -> Self {
        LstmParams {
            hidden_units: 9,
            dense1_units: 8,
            dense2_units: 2,
            epochs: 45,
            learning_rate: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            batch_size: 32,
            max_steps: 128,
        }
    }
}

impl LstmParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if self.hidden_units < 1 || self.dense1_units < 1 {
            return bad("unit counts must be at least 1");
        }
        if self.dense2_units != 2 {
            return bad("the output layer is a two-class softmax; dense2_units must be 2");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        for beta in [self.adam_beta1, self.adam_beta2] {
            if !(beta > 0.0 && beta < 1.0) {
                return bad("adam betas must lie in (0, 1)");
            }
        }
        if !(self.adam_eps.is_finite() && self.adam_eps > 0.0) {
            return bad("adam_eps must be positive");
        }
        if self.batch_size < 1 || self.max_steps < 1 {
            return bad("batch_size and max_steps must be at least 1");
        }
        Ok(())
    }
}

/// All trainable tensors. LSTM gate rows are stacked input, forget, cell,
/// output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmWeights {
    pub lstm_input: Matrix,
    pub lstm_recurrent: Matrix,
    pub lstm_bias: Matrix,
    pub dense1: Matrix,
    pub dense1_bias: Matrix,
    pub dense2: Matrix,
    pub dense2_bias: Matrix,
}

impl LstmWeights {
    pub fn zeros(input_dim: usize, params: &LstmParams) -> Self {
        let h = params.hidden_units;
        LstmWeights {
            lstm_input: Matrix::zeros(GATES * h, input_dim),
            lstm_recurrent: Matrix::zeros(GATES * h, h),
            lstm_bias: Matrix::zeros(GATES * h, 1),
            dense1: Matrix::zeros(params.dense1_units, h),
            dense1_bias: Matrix::zeros(params.dense1_units, 1),
            dense2: Matrix::zeros(params.dense2_units, params.dense1_units),
            dense2_bias: Matrix::zeros(params.dense2_units, 1),
        }
    }

    pub fn tensors(&self) -> [&Matrix; 7] {
        [
            &self.lstm_input,
            &self.lstm_recurrent,
            &self.lstm_bias,
            &self.dense1,
            &self.dense1_bias,
            &self.dense2,
            &self.dense2_bias,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 7] {
        [
            &mut self.lstm_input,
            &mut self.lstm_recurrent,
            &mut self.lstm_bias,
            &mut self.dense1,
            &mut self.dense1_bias,
            &mut self.dense2,
            &mut self.dense2_bias,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.data().iter().all(|v| v.is_finite()))
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.data_mut().fill(0.0);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    pub(crate) params: LstmParams,
    pub(crate) input_dim: usize,
    pub(crate) weights: LstmWeights,
    pub(crate) history: Vec<f64>,
}

/// Activations kept from a forward pass for backpropagation.
pub(crate) struct ForwardTrace {
    /// Gate activations per step: i, f, g, o stacked (4H).
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    dense1_pre: Vec<f64>,
    dense1_out: Vec<f64>,
    logits: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

// -ln softmax(logits)[label]
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    log_sum - logits[label]
}

impl LstmModel {
    /// Model with every weight set to zero.
    pub fn zeros(input_dim: usize, params: LstmParams) -> Result<Self> {
        params.validate()?;
        if input_dim == 0 {
            return Err(Error::InvalidParams("input dimension must be positive".into()));
        }
        Ok(LstmModel {
            weights: LstmWeights::zeros(input_dim, &params),
            params,
            input_dim,
            history: Vec::new(),
        })
    }

    /// Weights drawn uniformly from [-0.08, 0.08] using `params.seed`.
    pub fn initialize(input_dim: usize, params: LstmParams) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(params.seed);
        let mut model = Self::zeros(input_dim, params)?;
        train::init_uniform(&mut model.weights, &mut rng);
        Ok(model)
    }

    pub fn params(&self) -> &LstmParams {
        &self.params
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn weights(&self) -> &LstmWeights {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut LstmWeights {
        &mut self.weights
    }

    /// Mean training loss per epoch.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    fn check_sequence(&self, sequence: &[Vec<f64>]) -> Result<()> {
        if sequence.is_empty() {
            return Err(Error::Validation("sequence must contain at least one step".into()));
        }
        if let Some(step) = sequence.iter().find(|s| s.len() != self.input_dim) {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                found: step.len(),
            });
        }
        Ok(())
    }

    fn truncated<'s>(&self, sequence: &'s [Vec<f64>]) -> &'s [Vec<f64>] {
        &sequence[..sequence.len().min(self.params.max_steps)]
    }

    /// Class probabilities (benign, hateful).
    pub fn forward(&self, sequence: &[Vec<f64>]) -> Result<Vec<f64>> {
        self.check_sequence(sequence)?;
        let trace = self.trace(self.truncated(sequence));
        Ok(softmax(&trace.logits))
    }

    pub fn predict_proba(&self, sequence: &[Vec<f64>]) -> Result<f64> {
        Ok(self.forward(sequence)?[1])
    }

    pub fn loss(&self, sequence: &[Vec<f64>], label: u8) -> Result<f64> {
        self.check_sequence(sequence)?;
        let trace = self.trace(self.truncated(sequence));
        Ok(cross_entropy(&trace.logits, usize::from(label)))
    }

    /// Input-weight products `W x_t` for each step.
    pub(crate) fn project_inputs(&self, sequence: &[Vec<f64>]) -> Vec<Vec<f64>> {
        sequence.iter().map(|x| self.weights.lstm_input.matvec(x)).collect()
    }

    pub(crate) fn trace(&self, sequence: &[Vec<f64>]) -> ForwardTrace {
        self.trace_projected(&self.project_inputs(sequence))
    }

    pub(crate) fn trace_projected(&self, projections: &[Vec<f64>]) -> ForwardTrace {
        let h = self.params.hidden_units;
        let w = &self.weights;
        let mut gates = Vec::with_capacity(projections.len());
        let mut cells = Vec::with_capacity(projections.len());
        let mut hidden = Vec::with_capacity(projections.len());
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];

        for projected in projections {
            let recurrent = w.lstm_recurrent.matvec(&h_prev);
            let mut act = vec![0.0; GATES * h];
            for r in 0..GATES * h {
                let z = projected[r] + recurrent[r] + w.lstm_bias.data()[r];
                act[r] = if (2 * h..3 * h).contains(&r) {
                    z.tanh()
                } else {
                    sigmoid(z)
                };
            }
            let mut c = vec![0.0; h];
            let mut h_next = vec![0.0; h];
            for j in 0..h {
                let (i_g, f_g, g_g, o_g) = (act[j], act[h + j], act[2 * h + j], act[3 * h + j]);
                c[j] = f_g * c_prev[j] + i_g * g_g;
                h_next[j] = o_g * c[j].tanh();
            }
            gates.push(act);
            cells.push(c.clone());
            hidden.push(h_next.clone());
            h_prev = h_next;
            c_prev = c;
        }

        let mut dense1_pre = w.dense1.matvec(&h_prev);
        for (v, b) in dense1_pre.iter_mut().zip(w.dense1_bias.data()) {
            *v += b;
        }
        let dense1_out: Vec<f64> = dense1_pre.iter().map(|v| v.max(0.0)).collect();
        let mut logits = w.dense2.matvec(&dense1_out);
        for (v, b) in logits.iter_mut().zip(w.dense2_bias.data()) {
            *v += b;
        }
        ForwardTrace {
            gates,
            cells,
            hidden,
            dense1_pre,
            dense1_out,
            logits,
        }
    }

    /// Adds d(loss)/d(weights) for one example into `grads`; returns the loss.
    pub(crate) fn accumulate_gradients(&self, sequence: &[Vec<f64>], label: u8, grads: &mut LstmWeights) -> f64 {
        let sequence = self.truncated(sequence);
        let trace = self.trace(sequence);
        let label = usize::from(label);
        let loss = cross_entropy(&trace.logits, label);
        let h = self.params.hidden_units;
        let w = &self.weights;

        let mut d_logits = softmax(&trace.logits);
        d_logits[label] -= 1.0;
        grads.dense2.add_outer(&d_logits, &trace.dense1_out);
        grads.dense2_bias.add_vec(&d_logits);

        let mut d_dense1 = w.dense2.matvec_transposed(&d_logits);
        for (d, pre) in d_dense1.iter_mut().zip(&trace.dense1_pre) {
            if *pre <= 0.0 {
                *d = 0.0;
            }
        }
        let steps = trace.hidden.len();
        grads.dense1.add_outer(&d_dense1, &trace.hidden[steps - 1]);
        grads.dense1_bias.add_vec(&d_dense1);

        let mut d_hidden = w.dense1.matvec_transposed(&d_dense1);
        let mut d_cell = vec![0.0; h];
        let zeros = vec![0.0; h];
        let mut d_z = vec![0.0; GATES * h];
        for t in (0..steps).rev() {
            let act = &trace.gates[t];
            let c_prev = if t > 0 { &trace.cells[t - 1] } else { &zeros };
            let h_prev = if t > 0 { &trace.hidden[t - 1] } else { &zeros };
            for j in 0..h {
                let (i_g, f_g, g_g, o_g) = (act[j], act[h + j], act[2 * h + j], act[3 * h + j]);
                let tanh_c = trace.cells[t][j].tanh();
                let d_o = d_hidden[j] * tanh_c;
                let dc = d_cell[j] + d_hidden[j] * o_g * (1.0 - tanh_c * tanh_c);
                d_z[j] = dc * g_g * i_g * (1.0 - i_g);
                d_z[h + j] = dc * c_prev[j] * f_g * (1.0 - f_g);
                d_z[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
                d_z[3 * h + j] = d_o * o_g * (1.0 - o_g);
                d_cell[j] = dc * f_g;
            }
            grads.lstm_input.add_outer(&d_z, &sequence[t]);
            grads.lstm_recurrent.add_outer(&d_z, h_prev);
            grads.lstm_bias.add_vec(&d_z);
            d_hidden = w.lstm_recurrent.matvec_transposed(&d_z);
        }
        loss
    }

    /// Loss gradient for a single example.
    pub fn gradients(&self, sequence: &[Vec<f64>], label: u8) -> Result<(f64, LstmWeights)> {
        self.check_sequence(sequence)?;
        let mut grads = LstmWeights::zeros(self.input_dim, &self.params);
        let loss = self.accumulate_gradients(sequence, label, &mut grads);
        Ok((loss, grads))
    }
}
