//! Single-hidden-layer sigmoid perceptron trained by full-batch
//! backpropagation until the training error reaches a target.
//!
//! The objective is the mean squared error over patterns and output
//! units. Weight initialization is the only source of randomness, so the
//! number of epochs needed to reach the target is a deterministic
//! function of the seed: one draw of the runtime `T`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, THYROID_ATTRIBUTES, THYROID_CLASSES};
use crate::runner::LasVegasProcess;

#[derive(Debug, Error, PartialEq)]
pub enum MlpError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dataset has no patterns")]
    EmptyDataset,
    #[error("non-finite gradient or training error")]
    NonFinite,
}

/// Architecture and training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpConfig {
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub n_outputs: usize,
    pub learning_rate: f64,
    /// Heavy-ball momentum coefficient; 0 gives plain gradient descent.
    pub momentum: f64,
    /// Weights and biases start uniform on `[-w, w]`.
    pub init_half_width: f64,
    pub target_error: f64,
    /// Censoring cap on the number of epochs.
    pub max_epochs: u32,
}

impl MlpConfig {
    pub const DEFAULT_LEARNING_RATE: f64 = 0.1;
    pub const DEFAULT_INIT_HALF_WIDTH: f64 = 0.5;
    pub const DEFAULT_TARGET_ERROR: f64 = 0.02;
    pub const DEFAULT_MAX_EPOCHS: u32 = 20_000;

    /// 21-input, 3-output network for the "ann" Thyroid data.
    pub fn thyroid(n_hidden: usize) -> Self {
        Self {
            n_inputs: THYROID_ATTRIBUTES,
            n_hidden,
            n_outputs: THYROID_CLASSES,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
            momentum: 0.0,
            init_half_width: Self::DEFAULT_INIT_HALF_WIDTH,
            target_error: Self::DEFAULT_TARGET_ERROR,
            max_epochs: Self::DEFAULT_MAX_EPOCHS,
        }
    }

    pub fn validate(&self) -> Result<(), MlpError> {
        let bad = |msg: &str| Err(MlpError::InvalidConfig(msg.to_string()));
        if self.n_inputs == 0 || self.n_hidden == 0 || self.n_outputs == 0 {
            return bad("layer sizes must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.init_half_width >= 0.0 && self.init_half_width.is_finite()) {
            return bad("init half-width must be nonnegative");
        }
        if self.target_error.is_nan() || self.target_error <= 0.0 {
            return bad("target error must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be at least 1");
        }
        Ok(())
    }

    fn check_dataset(&self, d: &Dataset) -> Result<(), MlpError> {
        if d.n_features() != self.n_inputs || d.n_classes() != self.n_outputs {
            return Err(MlpError::DimensionMismatch(format!(
                "dataset is {}x{}, network expects {}x{}",
                d.n_features(),
                d.n_classes(),
                self.n_inputs,
                self.n_outputs
            )));
        }
        Ok(())
    }
}

/// Network parameters. Matrices are row-major with one row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpState {
    n_inputs: usize,
    n_hidden: usize,
    n_outputs: usize,
    w_hidden: Vec<f64>,
    b_hidden: Vec<f64>,
    w_out: Vec<f64>,
    b_out: Vec<f64>,
}

impl MlpState {
    pub fn zeros(n_inputs: usize, n_hidden: usize, n_outputs: usize) -> Self {
        Self {
            n_inputs,
            n_hidden,
            n_outputs,
            w_hidden: vec![0.0; n_hidden * n_inputs],
            b_hidden: vec![0.0; n_hidden],
            w_out: vec![0.0; n_outputs * n_hidden],
            b_out: vec![0.0; n_outputs],
        }
    }

    pub fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn n_outputs(&self) -> usize {
        self.n_outputs
    }

    /// `n_hidden x n_inputs`, row-major.
    pub fn w_hidden(&self) -> &[f64] {
        &self.w_hidden
    }

    pub fn b_hidden(&self) -> &[f64] {
        &self.b_hidden
    }

    /// `n_outputs x n_hidden`, row-major.
    pub fn w_out(&self) -> &[f64] {
        &self.w_out
    }

    pub fn b_out(&self) -> &[f64] {
        &self.b_out
    }

    /// Parameter blocks in the order `w_hidden, b_hidden, w_out, b_out`.
    pub fn params(&self) -> [&[f64]; 4] {
        [&self.w_hidden, &self.b_hidden, &self.w_out, &self.b_out]
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 4] {
        [
            &mut self.w_hidden,
            &mut self.b_hidden,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|b| b.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params()
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
    }

    fn fill(&mut self, v: f64) {
        for block in self.params_mut() {
            block.fill(v);
        }
    }
}

/// The value of `T` for one seeded training run, or the cap if censored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub seed: u64,
    pub epochs: u32,
    pub converged: bool,
    pub final_error: f64,
    /// Epoch at which training produced a non-finite gradient or error.
    /// Such runs count as censored.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diverged_at: Option<u32>,
}

impl RunRecord {
    pub fn converged(seed: u64, epochs: u32, final_error: f64) -> Self {
        Self {
            seed,
            epochs,
            converged: true,
            final_error,
            diverged_at: None,
        }
    }

    pub fn censored(seed: u64, cap: u32, final_error: f64) -> Self {
        Self {
            seed,
            epochs: cap,
            converged: false,
            final_error,
            diverged_at: None,
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draws every weight and bias independently from `U[-w, w)`.
///
/// Draw order is `w_hidden`, `b_hidden`, `w_out`, `b_out`, row-major, from
/// a ChaCha8 stream seeded with `seed`.
pub fn init_weights(cfg: &MlpConfig, seed: u64) -> MlpState {
    let mut state = MlpState::zeros(cfg.n_inputs, cfg.n_hidden, cfg.n_outputs);
    let w = cfg.init_half_width;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for block in state.params_mut() {
        for v in block.iter_mut() {
            *v = w * (2.0 * rng.random::<f64>() - 1.0);
        }
    }
    state
}

fn hidden_activations(state: &MlpState, input: &[f64], hidden: &mut [f64]) {
    for (j, h) in hidden.iter_mut().enumerate() {
        let row = &state.w_hidden[j * state.n_inputs..(j + 1) * state.n_inputs];
        let z = state.b_hidden[j] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        *h = sigmoid(z);
    }
}

fn output_activations(state: &MlpState, hidden: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        let row = &state.w_out[k * state.n_hidden..(k + 1) * state.n_hidden];
        let z = state.b_out[k] + row.iter().zip(hidden).map(|(w, h)| w * h).sum::<f64>();
        *o = sigmoid(z);
    }
}

/// Network output for one input vector; every component lies in `(0, 1)`.
pub fn forward(state: &MlpState, input: &[f64]) -> Result<Vec<f64>, MlpError> {
    if input.len() != state.n_inputs {
        return Err(MlpError::DimensionMismatch(format!(
            "input has {} values, network expects {}",
            input.len(),
            state.n_inputs
        )));
    }
    let mut hidden = vec![0.0; state.n_hidden];
    let mut out = vec![0.0; state.n_outputs];
    hidden_activations(state, input, &mut hidden);
    output_activations(state, &hidden, &mut out);
    Ok(out)
}

fn check_state_vs_dataset(state: &MlpState, d: &Dataset) -> Result<(), MlpError> {
    if d.n_features() != state.n_inputs || d.n_classes() != state.n_outputs {
        return Err(MlpError::DimensionMismatch(format!(
            "dataset is {}x{}, network is {}x{}",
            d.n_features(),
            d.n_classes(),
            state.n_inputs,
            state.n_outputs
        )));
    }
    if d.is_empty() {
        return Err(MlpError::EmptyDataset);
    }
    Ok(())
}

/// Reusable per-pattern buffers for the fused error/gradient pass.
struct Scratch {
    hidden: Vec<f64>,
    out: Vec<f64>,
    delta_out: Vec<f64>,
}

impl Scratch {
    fn new(state: &MlpState) -> Self {
        Self {
            hidden: vec![0.0; state.n_hidden],
            out: vec![0.0; state.n_outputs],
            delta_out: vec![0.0; state.n_outputs],
        }
    }
}

/// One pass over the data returning the MSE and, if requested, writing
/// `dE/dparam` into `grad`. Both share a single summation order so the
/// error matches [`training_error`] bit for bit.
fn error_pass(
    state: &MlpState,
    d: &Dataset,
    scratch: &mut Scratch,
    mut grad: Option<&mut MlpState>,
) -> f64 {
    let n_in = state.n_inputs;
    let n_hid = state.n_hidden;
    let n_rows = d.n_rows();
    let scale = 1.0 / (n_rows * state.n_outputs) as f64;
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    let mut sq_sum = 0.0;
    for p in 0..n_rows {
        let x = d.feature_row(p);
        let y = d.target_row(p);
        hidden_activations(state, x, &mut scratch.hidden);
        output_activations(state, &scratch.hidden, &mut scratch.out);
        for ((&o, &t), delta) in scratch.out.iter().zip(y).zip(&mut scratch.delta_out) {
            let r = o - t;
            sq_sum += r * r;
            *delta = 2.0 * scale * r * o * (1.0 - o);
        }
        let Some(g) = grad.as_deref_mut() else {
            continue;
        };
        for k in 0..state.n_outputs {
            let dk = scratch.delta_out[k];
            g.b_out[k] += dk;
            let row = &mut g.w_out[k * n_hid..(k + 1) * n_hid];
            for (gw, h) in row.iter_mut().zip(&scratch.hidden) {
                *gw += dk * h;
            }
        }
        for j in 0..n_hid {
            let back: f64 = (0..state.n_outputs)
                .map(|k| scratch.delta_out[k] * state.w_out[k * n_hid + j])
                .sum();
            let h = scratch.hidden[j];
            let dj = back * h * (1.0 - h);
            g.b_hidden[j] += dj;
            let row = &mut g.w_hidden[j * n_in..(j + 1) * n_in];
            for (gw, xi) in row.iter_mut().zip(x) {
                *gw += dj * xi;
            }
        }
    }
    sq_sum * scale
}

/// Mean over patterns and output units of `(output - target)^2`.
pub fn training_error(state: &MlpState, d: &Dataset) -> Result<f64, MlpError> {
    check_state_vs_dataset(state, d)?;
    Ok(error_pass(state, d, &mut Scratch::new(state), None))
}

/// Gradient of [`training_error`] by backpropagation, laid out like the
/// parameters it differentiates.
pub fn gradient(state: &MlpState, d: &Dataset) -> Result<MlpState, MlpError> {
    check_state_vs_dataset(state, d)?;
    let mut grad = MlpState::zeros(state.n_inputs, state.n_hidden, state.n_outputs);
    error_pass(state, d, &mut Scratch::new(state), Some(&mut grad));
    Ok(grad)
}

fn descend(state: &mut MlpState, grad: &MlpState, lr: f64) {
    for (block, g) in state.params_mut().into_iter().zip(grad.params()) {
        for (w, gw) in block.iter_mut().zip(g) {
            *w -= lr * gw;
        }
    }
}

/// One full-batch gradient descent step `w <- w - lr * dE/dw`.
pub fn train_epoch(state: &MlpState, d: &Dataset, lr: f64) -> Result<MlpState, MlpError> {
    let grad = gradient(state, d)?;
    if !grad.is_finite() {
        return Err(MlpError::NonFinite);
    }
    let mut next = state.clone();
    descend(&mut next, &grad, lr);
    Ok(next)
}

/// Trains from `init_weights(cfg, seed)` until the error after an epoch is
/// at most `cfg.target_error`, or `cfg.max_epochs` epochs have elapsed.
pub fn train_until(cfg: &MlpConfig, d: &Dataset, seed: u64) -> Result<RunRecord, MlpError> {
    train_until_within(cfg, d, seed, cfg.max_epochs)
}

/// As [`train_until`] but censored at `cutoff` epochs instead of the
/// configured cap.
///
/// A run that hits a non-finite value is reported as censored at `cutoff`
/// with `diverged_at` set to the failing epoch and the last finite error.
pub fn train_until_within(
    cfg: &MlpConfig,
    d: &Dataset,
    seed: u64,
    cutoff: u32,
) -> Result<RunRecord, MlpError> {
    cfg.validate()?;
    cfg.check_dataset(d)?;
    if d.is_empty() {
        return Err(MlpError::EmptyDataset);
    }
    if cutoff == 0 {
        return Err(MlpError::InvalidConfig("cutoff must be at least 1".into()));
    }

    let mut state = init_weights(cfg, seed);
    let mut grad = MlpState::zeros(cfg.n_inputs, cfg.n_hidden, cfg.n_outputs);
    let mut velocity =
        (cfg.momentum > 0.0).then(|| MlpState::zeros(cfg.n_inputs, cfg.n_hidden, cfg.n_outputs));
    let mut scratch = Scratch::new(&state);

    // Each pass evaluates the error of the current state (the state after
    // `epochs` updates) and the gradient for the next update.
    let mut epochs = 0u32;
    let mut last_finite = f64::MAX;
    loop {
        let err = error_pass(&state, d, &mut scratch, Some(&mut grad));
        if !err.is_finite() || !grad.is_finite() {
            return Ok(RunRecord {
                diverged_at: Some(epochs),
                ..RunRecord::censored(
                    seed,
                    cutoff,
                    if err.is_finite() { err } else { last_finite },
                )
            });
        }
        last_finite = err;
        if epochs >= 1 && err <= cfg.target_error {
            return Ok(RunRecord::converged(seed, epochs, err));
        }
        if epochs == cutoff {
            return Ok(RunRecord::censored(seed, cutoff, err));
        }
        match velocity.as_mut() {
            None => descend(&mut state, &grad, cfg.learning_rate),
            Some(v) => {
                for ((w, vel), g) in state
                    .params_mut()
                    .into_iter()
                    .zip(v.params_mut())
                    .zip(grad.params())
                {
                    for ((wi, vi), gi) in w.iter_mut().zip(vel.iter_mut()).zip(g) {
                        *vi = cfg.momentum * *vi - cfg.learning_rate * gi;
                        *wi += *vi;
                    }
                }
            }
        }
        epochs += 1;
    }
}

/// MLP training on a fixed dataset as a Las Vegas process.
#[derive(Debug, Clone)]
pub struct MlpProcess {
    cfg: MlpConfig,
    data: Arc<Dataset>,
    description: String,
}

impl MlpProcess {
    pub fn new(
        cfg: MlpConfig,
        data: Arc<Dataset>,
        description: impl Into<String>,
    ) -> Result<Self, MlpError> {
        cfg.validate()?;
        cfg.check_dataset(&data)?;
        if data.is_empty() {
            return Err(MlpError::EmptyDataset);
        }
        Ok(Self {
            cfg,
            data,
            description: description.into(),
        })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.cfg
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }
}

impl LasVegasProcess for MlpProcess {
    fn attempt(&self, seed: u64, cutoff: u32) -> RunRecord {
        train_until_within(&self.cfg, &self.data, seed, cutoff)
            .expect("configuration and dataset validated at construction")
    }

    fn cap(&self) -> u32 {
        self.cfg.max_epochs
    }

    fn describe(&self) -> String {
        let c = &self.cfg;
        format!(
            "mlp hidden={} delta={} lr={} momentum={} init={} max_epochs={} rows={} {}",
            c.n_hidden,
            c.target_error,
            c.learning_rate,
            c.momentum,
            c.init_half_width,
            c.max_epochs,
            self.data.n_rows(),
            self.description
        )
        .trim_end()
        .to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_config(n_in: usize, n_hidden: usize, n_out: usize) -> MlpConfig {
        MlpConfig {
            n_inputs: n_in,
            n_hidden,
            n_outputs: n_out,
            learning_rate: 0.5,
            momentum: 0.0,
            init_half_width: 0.5,
            target_error: 0.02,
            max_epochs: 100,
        }
    }

    fn random_dataset(rng: &mut impl Rng, rows: usize, n_in: usize, n_out: usize) -> Dataset {
        let features: Vec<Vec<f64>> = (0..rows)
            .map(|_| (0..n_in).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..n_out)).collect();
        Dataset::from_labels(&features, &labels, n_out).unwrap()
    }

    /// Forward pass with explicit nested vectors, independent of the flat layout helpers.
    fn naive_forward(state: &MlpState, x: &[f64]) -> Vec<f64> {
        let (ni, nh, no) = (state.n_inputs(), state.n_hidden(), state.n_outputs());
        let wh: Vec<Vec<f64>> = (0..nh)
            .map(|j| state.w_hidden()[j * ni..][..ni].to_vec())
            .collect();
        let wo: Vec<Vec<f64>> = (0..no)
            .map(|k| state.w_out()[k * nh..][..nh].to_vec())
            .collect();
        let mut h = vec![0.0; nh];
        for j in 0..nh {
            let mut z = state.b_hidden()[j];
            for i in 0..ni {
                z += wh[j][i] * x[i];
            }
            h[j] = 1.0 / (1.0 + f64::exp(-z));
        }
        let mut o = vec![0.0; no];
        for k in 0..no {
            let mut z = state.b_out()[k];
            for j in 0..nh {
                z += wo[k][j] * h[j];
            }
            o[k] = 1.0 / (1.0 + f64::exp(-z));
        }
        o
    }

    #[test]
    fn zero_width_init_gives_zero_weights() {
        let mut cfg = tiny_config(4, 3, 2);
        cfg.init_half_width = 0.0;
        let s = init_weights(&cfg, 123);
        assert!(s.params().iter().all(|b| b.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let cfg = MlpConfig::thyroid(3);
        assert_eq!(init_weights(&cfg, 5), init_weights(&cfg, 5));
        assert_ne!(init_weights(&cfg, 5), init_weights(&cfg, 6));
    }

    #[test]
    fn init_draws_follow_the_uniform_law() {
        // 100_000 draws over a 1000x100 hidden layer.
        let cfg = MlpConfig {
            n_inputs: 99,
            n_hidden: 1000,
            n_outputs: 1,
            ..tiny_config(1, 1, 1)
        };
        let s = init_weights(&cfg, 2024);
        let draws: Vec<f64> = s.w_hidden().iter().chain(s.b_hidden()).copied().collect();
        assert_eq!(draws.len(), 100_000);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let min = draws.iter().copied().fold(f64::INFINITY, f64::min);
        let max = draws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((-0.5..=-0.49).contains(&min), "min {min}");
        assert!((0.49..=0.5).contains(&max), "max {max}");
    }

    #[test]
    fn zero_network_outputs_one_half() {
        let s = MlpState::zeros(3, 2, 4);
        assert_eq!(forward(&s, &[1.0, -7.0, 100.0]).unwrap(), vec![0.5; 4]);
    }

    #[test]
    fn saturated_output_bias() {
        let mut s = MlpState::zeros(2, 2, 3);
        s.params_mut()[3][1] = 1000.0;
        let y = forward(&s, &[0.3, 0.4]).unwrap();
        assert!((y[1] - 1.0).abs() <= 1e-9);
        assert_eq!(y[0], 0.5);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let s = MlpState::zeros(3, 2, 1);
        assert!(matches!(
            forward(&s, &[1.0]),
            Err(MlpError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn forward_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let cfg = tiny_config(5, 4, 3);
            let s = init_weights(
                &MlpConfig {
                    init_half_width: 2.0,
                    ..cfg
                },
                trial,
            );
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let fast = forward(&s, &x).unwrap();
            let slow = naive_forward(&s, &x);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() <= 1e-12);
                assert!(*a > 0.0 && *a < 1.0);
            }
        }
    }

    #[test]
    fn error_examples() {
        let d = Dataset::from_labels(&[vec![0.2, 0.1], vec![0.9, 0.4]], &[0, 1], 2).unwrap();
        let zero = MlpState::zeros(2, 3, 2);
        assert_eq!(training_error(&zero, &d).unwrap(), 0.25);

        // Hand computation on two patterns with a 1-hidden-unit network.
        let mut s = MlpState::zeros(2, 1, 2);
        {
            let [wh, bh, wo, bo] = s.params_mut();
            wh.copy_from_slice(&[0.5, -1.0]);
            bh[0] = 0.1;
            wo.copy_from_slice(&[2.0, -3.0]);
            bo.copy_from_slice(&[0.0, 0.5]);
        }
        let sig = |z: f64| 1.0 / (1.0 + (-z).exp());
        let h1 = sig(0.5 * 0.2 - 1.0 * 0.1 + 0.1);
        let h2 = sig(0.5 * 0.9 - 1.0 * 0.4 + 0.1);
        let o11 = sig(2.0 * h1);
        let o12 = sig(-3.0 * h1 + 0.5);
        let o21 = sig(2.0 * h2);
        let o22 = sig(-3.0 * h2 + 0.5);
        let hand = ((o11 - 1.0).powi(2) + o12.powi(2) + o21.powi(2) + (o22 - 1.0).powi(2)) / 4.0;
        assert!((training_error(&s, &d).unwrap() - hand).abs() <= 1e-12);
    }

    #[test]
    fn exact_fit_has_zero_error() {
        // Outputs saturate to exactly 0.0 and 1.0 in f64.
        let d = Dataset::from_labels(&[vec![0.0]], &[1], 2).unwrap();
        let mut s = MlpState::zeros(1, 1, 2);
        s.params_mut()[3].copy_from_slice(&[-1000.0, 1000.0]);
        assert_eq!(training_error(&s, &d).unwrap(), 0.0);
    }

    #[test]
    fn error_on_empty_dataset() {
        let d = Dataset::new(2, 2, vec![], vec![]).unwrap();
        assert_eq!(
            training_error(&MlpState::zeros(2, 1, 2), &d),
            Err(MlpError::EmptyDataset)
        );
    }

    fn finite_difference(state: &MlpState, d: &Dataset, h: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(state.n_params());
        for block in 0..4 {
            for idx in 0..state.params()[block].len() {
                let mut plus = state.clone();
                plus.params_mut()[block][idx] += h;
                let mut minus = state.clone();
                minus.params_mut()[block][idx] -= h;
                let ep = training_error(&plus, d).unwrap();
                let em = training_error(&minus, d).unwrap();
                out.push((ep - em) / (2.0 * h));
            }
        }
        out
    }

    #[test]
    fn backprop_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for trial in 0..10 {
            let rows = rng.random_range(1..=5);
            let d = random_dataset(&mut rng, rows, 4, 3);
            let cfg = MlpConfig {
                init_half_width: 1.5,
                ..tiny_config(4, 3, 3)
            };
            let s = init_weights(&cfg, trial);
            let g = gradient(&s, &d).unwrap();
            let fd = finite_difference(&s, &d, 1e-5);
            let analytic: Vec<f64> = g.params().concat();
            let worst = analytic
                .iter()
                .zip(&fd)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(worst <= 1e-6, "trial {trial}: {worst}");
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let d = Dataset::from_labels(&[vec![0.3, 0.7]], &[0], 2).unwrap();
        let s = init_weights(&tiny_config(2, 2, 2), 9);
        assert_eq!(train_epoch(&s, &d, 0.0).unwrap(), s);
    }

    #[test]
    fn small_steps_do_not_increase_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_dataset(&mut rng, 4, 3, 2);
        let mut s = init_weights(&tiny_config(3, 2, 2), 1);
        let mut prev = training_error(&s, &d).unwrap();
        for _ in 0..50 {
            s = train_epoch(&s, &d, 1e-3).unwrap();
            let e = training_error(&s, &d).unwrap();
            assert!(e <= prev, "{e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn overflowing_gradient_is_reported() {
        // 2 * MAX - 2 * MAX is inf - inf = NaN in the hidden pre-activation.
        let d = Dataset::from_labels(&[vec![f64::MAX, f64::MAX]], &[0], 1).unwrap();
        let mut s = MlpState::zeros(2, 1, 1);
        s.params_mut()[0].copy_from_slice(&[2.0, -2.0]);
        assert_eq!(train_epoch(&s, &d, 0.1), Err(MlpError::NonFinite));
    }

    #[test]
    fn diverged_runs_are_flagged_censored() {
        let d = Dataset::from_labels(&[vec![f64::MAX, f64::MAX]], &[0], 1).unwrap();
        let cfg = MlpConfig {
            init_half_width: 4.0,
            ..tiny_config(2, 2, 1)
        };
        let records: Vec<RunRecord> = (0..20)
            .map(|seed| train_until(&cfg, &d, seed).unwrap())
            .collect();
        let diverged: Vec<&RunRecord> =
            records.iter().filter(|r| r.diverged_at.is_some()).collect();
        assert!(!diverged.is_empty());
        for r in diverged {
            assert!(!r.converged);
            assert_eq!(r.epochs, cfg.max_epochs);
        }
    }

    #[test]
    fn loose_threshold_converges_after_one_epoch() {
        let d = Dataset::from_labels(&[vec![0.1, 0.2], vec![0.5, 0.9]], &[0, 1], 3).unwrap();
        let mut cfg = tiny_config(2, 2, 3);
        cfg.init_half_width = 0.0;
        cfg.target_error = 0.3;
        let r = train_until(&cfg, &d, 0).unwrap();
        assert!(r.converged);
        assert_eq!(r.epochs, 1);
        assert!(r.final_error <= 0.3);
    }

    #[test]
    fn one_epoch_cap_censors() {
        let d = Dataset::from_labels(&[vec![0.1, 0.2], vec![0.5, 0.9]], &[0, 1], 2).unwrap();
        let mut cfg = tiny_config(2, 2, 2);
        cfg.max_epochs = 1;
        cfg.target_error = 1e-9;
        let r = train_until(&cfg, &d, 0).unwrap();
        assert!(!r.converged);
        assert_eq!(r.epochs, 1);
    }

    #[test]
    fn train_until_is_deterministic_and_stops_at_first_crossing() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = random_dataset(&mut rng, 5, 3, 2);
        let cfg = MlpConfig {
            learning_rate: 2.0,
            target_error: 0.15,
            max_epochs: 5000,
            ..tiny_config(3, 3, 2)
        };
        let a = train_until(&cfg, &d, 8).unwrap();
        assert_eq!(a, train_until(&cfg, &d, 8).unwrap());
        assert!(a.converged, "{a:?}");
        assert!(a.final_error <= cfg.target_error);

        // Replaying with train_epoch reproduces the stopping epoch exactly.
        let mut s = init_weights(&cfg, 8);
        let mut errors = Vec::new();
        for _ in 0..a.epochs {
            s = train_epoch(&s, &d, cfg.learning_rate).unwrap();
            errors.push(training_error(&s, &d).unwrap());
        }
        assert_eq!(*errors.last().unwrap(), a.final_error);
        assert!(errors[..errors.len() - 1]
            .iter()
            .all(|&e| e > cfg.target_error));
    }

    #[test]
    fn momentum_changes_the_trajectory() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = random_dataset(&mut rng, 5, 3, 2);
        let base = MlpConfig {
            learning_rate: 2.0,
            target_error: 0.15,
            max_epochs: 5000,
            ..tiny_config(3, 3, 2)
        };
        let plain = train_until(&base, &d, 8).unwrap();
        let heavy = train_until(
            &MlpConfig {
                momentum: 0.9,
                ..base
            },
            &d,
            8,
        )
        .unwrap();
        assert!(heavy.converged);
        assert_ne!(plain.epochs, heavy.epochs);
    }

    #[test]
    fn config_validation() {
        assert!(MlpConfig::thyroid(3).validate().is_ok());
        let bad = [
            MlpConfig {
                n_hidden: 0,
                ..MlpConfig::thyroid(3)
            },
            MlpConfig {
                learning_rate: 0.0,
                ..MlpConfig::thyroid(3)
            },
            MlpConfig {
                target_error: 0.0,
                ..MlpConfig::thyroid(3)
            },
            MlpConfig {
                max_epochs: 0,
                ..MlpConfig::thyroid(3)
            },
            MlpConfig {
                momentum: 1.0,
                ..MlpConfig::thyroid(3)
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
