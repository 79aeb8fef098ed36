//! Discrete-time leaky integrate-and-fire dynamics with dendritic
//! integration, thresholded spiking and a surrogate pseudo-derivative.
//!
//! Per step, with `g = logistic(tau_n)` per neuron and
//! `alpha = exp(-dt/tau_m)`:
//!
//! ```text
//! d(t) = g * d(t-1) + (1 - g) * I(t)
//! m(t) = alpha * m(t-1) + (1 - alpha) * d(t)
//! s(t) = 1  iff  m(t) > v_th,   then m(t) is reset
//! ```

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::network::LayerWeights;
use crate::raster::SpikeRaster;

/// What happens to the membrane after a spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetMode {
    /// Subtract the threshold, preserving residual drive.
    Subtract,
    /// Reset the membrane to zero.
    Zero,
}

/// Per-layer neuron parameters.
#[derive(Debug, Clone)]
pub struct NeuronParams {
    /// Membrane time constant in timesteps; must be > 0.
    pub tau_m: f64,
    /// Update interval in timesteps (fixed 1.0 in this artifact).
    pub dt: f64,
    /// Firing threshold; must be > 0.
    pub v_th: f64,
    /// Learnable dendritic time-constant parameter, one scalar per neuron.
    /// Passed through the logistic function, so any finite value is legal.
    pub tau_n: Array1<f64>,
    pub reset_mode: ResetMode,
}

impl NeuronParams {
    /// Uniform `tau_n` across `neurons` neurons.
    pub fn new(tau_m: f64, v_th: f64, tau_n_init: f64, neurons: usize, reset_mode: ResetMode) -> Self {
        Self {
            tau_m,
            dt: 1.0,
            v_th,
            tau_n: Array1::from_elem(neurons, tau_n_init),
            reset_mode,
        }
    }

    pub fn neurons(&self) -> usize {
        self.tau_n.len()
    }

    /// Membrane decay `alpha = exp(-dt/tau_m)`; lies in (0, 1) for tau_m > 0.
    pub fn alpha(&self) -> f64 {
        (-self.dt / self.tau_m).exp()
    }

    /// Per-neuron dendritic gate `logistic(tau_n)`, strictly inside (0, 1).
    pub fn gates(&self) -> Array1<f64> {
        self.tau_n.mapv(logistic)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.0) {
            return Err(Error::Config(format!("tau_m must be > 0, got {}", self.tau_m)));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if !(self.v_th > 0.0) {
            return Err(Error::Config(format!("v_th must be > 0, got {}", self.v_th)));
        }
        if self.tau_n.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("tau_n contains non-finite entries".into()));
        }
        Ok(())
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Membrane potential and dendritic accumulator, both `(batch, neurons)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MembraneState {
    pub m: Array2<f64>,
    pub d: Array2<f64>,
}

impl MembraneState {
    /// Unbiased start: `m(0) = d(0) = 0`.
    pub fn zeros(batch: usize, neurons: usize) -> Self {
        Self {
            m: Array2::zeros((batch, neurons)),
            d: Array2::zeros((batch, neurons)),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        let s = self.m.shape();
        (s[0], s[1])
    }
}

/// Multi-Gaussian surrogate parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateParams {
    /// Width of the central Gaussian; > 0.
    pub sigma_g: f64,
    /// Side-lobe scale; >= 0.
    pub h_scale: f64,
    /// Side-lobe width multiplier; > 1.
    pub s_ratio: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        Self {
            sigma_g: 0.5,
            h_scale: 0.15,
            s_ratio: 6.0,
        }
    }
}

impl SurrogateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_g > 0.0) {
            return Err(Error::Config(format!("sigma_g must be > 0, got {}", self.sigma_g)));
        }
        if !(self.h_scale >= 0.0) {
            return Err(Error::Config(format!("h_scale must be >= 0, got {}", self.h_scale)));
        }
        if !(self.s_ratio > 1.0) {
            return Err(Error::Config(format!("s_ratio must be > 1, got {}", self.s_ratio)));
        }
        Ok(())
    }
}

fn gaussian_bump(v: f64, mu: f64, sigma: f64) -> f64 {
    let z = (v - mu) / sigma;
    (-0.5 * z * z).exp()
}

/// Pseudo-derivative of the spike threshold at membrane value `v`.
///
/// A tall central bump at `v_th` flanked by two wide subtracted side lobes:
///
/// ```text
/// (1 + h) * N(v; v_th, sigma_g)
///   - h * N(v; v_th - sigma_g*s, sigma_g*s)
///   - h * N(v; v_th + sigma_g*s, sigma_g*s)
/// ```
///
/// with `N` the unnormalized bump `exp(-(v - mu)^2 / (2 sigma^2))`. The
/// forward pass stays a hard threshold; this only shapes backpropagation.
pub fn surrogate_grad(v: f64, params: &SurrogateParams, v_th: f64) -> f64 {
    let wide = params.sigma_g * params.s_ratio;
    (1.0 + params.h_scale) * gaussian_bump(v, v_th, params.sigma_g)
        - params.h_scale * gaussian_bump(v, v_th - wide, wide)
        - params.h_scale * gaussian_bump(v, v_th + wide, wide)
}

/// Advance the membrane one step under input current `(batch, neurons)`.
///
/// Returns the new state and the 0/1 spike matrix for this step.
pub fn step(
    state: &MembraneState,
    input_current: &Array2<f64>,
    params: &NeuronParams,
) -> Result<(MembraneState, Array2<u8>)> {
    params.validate()?;
    let (batch, neurons) = state.shape();
    if state.d.shape() != state.m.shape() {
        return Err(Error::Dimension("membrane state m/d shapes differ".into()));
    }
    if input_current.shape() != [batch, neurons] {
        return Err(Error::Dimension(format!(
            "input current {:?} does not match state ({batch}, {neurons})",
            input_current.shape()
        )));
    }
    if neurons != params.neurons() {
        return Err(Error::Dimension(format!(
            "params cover {} neurons, state has {neurons}",
            params.neurons()
        )));
    }
    if input_current.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("input current contains non-finite entries".into()));
    }

    let alpha = params.alpha();
    let gates = params.gates();
    let mut d = Array2::zeros((batch, neurons));
    let mut m = Array2::zeros((batch, neurons));
    let mut spikes = Array2::zeros((batch, neurons));
    for b in 0..batch {
        for n in 0..neurons {
            let g = gates[n];
            let dn = g * state.d[(b, n)] + (1.0 - g) * input_current[(b, n)];
            let mut mn = alpha * state.m[(b, n)] + (1.0 - alpha) * dn;
            let fired = mn > params.v_th;
            if fired {
                mn = match params.reset_mode {
                    ResetMode::Subtract => mn - params.v_th,
                    ResetMode::Zero => 0.0,
                };
                spikes[(b, n)] = 1u8;
            }
            d[(b, n)] = dn;
            m[(b, n)] = mn;
        }
    }
    Ok((MembraneState { m, d }, spikes))
}

/// Unroll [`step`] over the first `t_steps` slices of `input_spikes` with
/// `I(t) = weights * input_spikes(t)`.
///
/// Returns the output raster `(t_steps, batch, out_neurons)` and the final
/// membrane state. Deterministic given inputs.
pub fn run_layer(
    input_spikes: &SpikeRaster,
    weights: &LayerWeights,
    params: &NeuronParams,
    t_steps: usize,
) -> Result<(SpikeRaster, MembraneState)> {
    let (raster_t, batch, in_neurons) = input_spikes.dims();
    if t_steps < 1 || t_steps > raster_t {
        return Err(Error::Dimension(format!(
            "t_steps {t_steps} out of range for raster with {raster_t} steps"
        )));
    }
    let (out_neurons, w_in) = weights.dims();
    if w_in != in_neurons {
        return Err(Error::Dimension(format!(
            "weight inner dimension {w_in} does not match input neurons {in_neurons}"
        )));
    }
    if out_neurons != params.neurons() {
        return Err(Error::Dimension(format!(
            "weights produce {out_neurons} outputs, params cover {}",
            params.neurons()
        )));
    }

    let mut state = MembraneState::zeros(batch, out_neurons);
    let mut out = SpikeRaster::zeros(t_steps, batch, out_neurons);
    let mut current = Array2::<f64>::zeros((batch, out_neurons));
    for t in 0..t_steps {
        current.fill(0.0);
        let slice = input_spikes.step(t);
        for b in 0..batch {
            for i in 0..in_neurons {
                if slice[(b, i)] != 0 {
                    for o in 0..out_neurons {
                        current[(b, o)] += weights.w[(o, i)];
                    }
                }
            }
        }
        let (next, spikes) = step(&state, &current, params)?;
        state = next;
        for b in 0..batch {
            for o in 0..out_neurons {
                out.set(t, b, o, spikes[(b, o)]);
            }
        }
    }
    Ok((out, state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn params(neurons: usize) -> NeuronParams {
        NeuronParams::new(20.0, 1.0, 0.0, neurons, ResetMode::Subtract)
    }

    #[test]
    fn zero_input_is_a_fixed_point() {
        let p = params(3);
        let state = MembraneState::zeros(2, 3);
        let input = Array2::zeros((2, 3));
        let (next, spikes) = step(&state, &input, &p).unwrap();
        assert_eq!(next.m, Array2::zeros((2, 3)));
        assert_eq!(next.d, Array2::zeros((2, 3)));
        assert_eq!(spikes.sum(), 0);
    }

    #[test]
    fn single_step_matches_hand_calculation() {
        // tau_m = 20, dt = 1, logistic(tau_n) = 0.5, I = 2, v_th = 1:
        // d' = 0.5*0 + 0.5*2 = 1, m' = (1 - e^{-1/20}) * 1 ~= 0.04877.
        let p = params(1);
        let state = MembraneState::zeros(1, 1);
        let input = Array2::from_elem((1, 1), 2.0);
        let (next, spikes) = step(&state, &input, &p).unwrap();
        assert_relative_eq!(next.d[(0, 0)], 1.0, max_relative = 1e-12);
        let expected = 1.0 - (-1.0f64 / 20.0).exp();
        assert_relative_eq!(next.m[(0, 0)], expected, max_relative = 1e-12);
        assert_abs_diff_eq!(next.m[(0, 0)], 0.04877, epsilon = 1e-5);
        assert_eq!(spikes[(0, 0)], 0);
    }

    #[test]
    fn constant_input_converges_to_input_level() {
        // Firing disabled via a huge threshold; both d and m approach c
        // monotonically, geometrically at rate max(alpha, gate).
        let mut p = params(1);
        p.v_th = f64::INFINITY;
        let c = 3.0;
        let input = Array2::from_elem((1, 1), c);
        let mut state = MembraneState::zeros(1, 1);
        let t_steps = 200;
        let mut prev_m = 0.0;
        for _ in 0..t_steps {
            let (next, _) = step(&state, &input, &p).unwrap();
            assert!(next.m[(0, 0)] >= prev_m);
            assert!(next.m[(0, 0)] <= c);
            prev_m = next.m[(0, 0)];
            state = next;
        }
        let alpha = p.alpha();
        let gate = p.gates()[0];
        let rate = alpha.max(gate);
        let bound = (1.0 + t_steps as f64 * (1.0 - alpha)) * rate.powi(t_steps as i32) * c;
        assert!((state.m[(0, 0)] - c).abs() < bound);
        assert!((state.d[(0, 0)] - c).abs() < bound);
    }

    #[test]
    fn leak_contracts_membrane_with_zero_input() {
        let p = params(1);
        let alpha = p.alpha();
        for &m0 in &[0.9, -0.9, 0.1] {
            let state = MembraneState {
                m: Array2::from_elem((1, 1), m0),
                d: Array2::zeros((1, 1)),
            };
            let input = Array2::zeros((1, 1));
            let (next, _) = step(&state, &input, &p).unwrap();
            assert_relative_eq!(next.m[(0, 0)], alpha * m0, max_relative = 1e-12);
            assert!(next.m[(0, 0)].abs() < m0.abs());
        }
    }

    #[test]
    fn reset_modes_differ_after_spike() {
        let mut p = params(1);
        p.tau_n = Array1::from_elem(1, 20.0); // gate ~ 1: d barely moves, so drive I hard
        let state = MembraneState {
            m: Array2::from_elem((1, 1), 0.9),
            d: Array2::from_elem((1, 1), 30.0),
        };
        let input = Array2::from_elem((1, 1), 30.0);
        let (next, spikes) = step(&state, &input, &p).unwrap();
        assert_eq!(spikes[(0, 0)], 1);
        let pre_reset = p.alpha() * 0.9 + (1.0 - p.alpha()) * next.d[(0, 0)];
        assert_relative_eq!(next.m[(0, 0)], pre_reset - 1.0, max_relative = 1e-12);

        p.reset_mode = ResetMode::Zero;
        let (next, spikes) = step(&state, &input, &p).unwrap();
        assert_eq!(spikes[(0, 0)], 1);
        assert_eq!(next.m[(0, 0)], 0.0);
    }

    #[test]
    fn shape_mismatch_and_nonfinite_are_rejected() {
        let p = params(2);
        let state = MembraneState::zeros(1, 2);
        let bad_shape = Array2::zeros((1, 3));
        assert!(matches!(step(&state, &bad_shape, &p), Err(Error::Dimension(_))));
        let bad_value = Array2::from_elem((1, 2), f64::NAN);
        assert!(matches!(step(&state, &bad_value, &p), Err(Error::Numeric(_))));
    }

    #[test]
    fn surrogate_peak_value_at_threshold() {
        let sp = SurrogateParams::default();
        let v_th = 1.0;
        // Central bump contributes 1 + h; each side lobe is evaluated one of
        // its own sigmas away from its center: exp(-1/2).
        let expected = (1.0 + sp.h_scale) - 2.0 * sp.h_scale * (-0.5f64).exp();
        assert_relative_eq!(surrogate_grad(v_th, &sp, v_th), expected, max_relative = 1e-12);
    }

    #[test]
    fn surrogate_decays_to_zero() {
        let sp = SurrogateParams::default();
        assert_abs_diff_eq!(surrogate_grad(1e6, &sp, 1.0), 0.0, epsilon = 1e-300);
        assert_abs_diff_eq!(surrogate_grad(-1e6, &sp, 1.0), 0.0, epsilon = 1e-300);
    }

    #[test]
    fn surrogate_quadrature_matches_analytic_integral() {
        // Simpson over a window wide enough that the tails are negligible.
        let sp = SurrogateParams::default();
        let v_th = 1.0;
        let half_width = 60.0;
        let n = 200_000usize;
        let h = 2.0 * half_width / n as f64;
        let f = |i: usize| surrogate_grad(v_th - half_width + i as f64 * h, &sp, v_th);
        let mut sum = f(0) + f(n);
        for i in 1..n {
            sum += f(i) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        let integral = sum * h / 3.0;
        assert!(integral.is_finite());
        let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
        let analytic =
            sqrt_2pi * sp.sigma_g * ((1.0 + sp.h_scale) - 2.0 * sp.h_scale * sp.s_ratio);
        assert_relative_eq!(integral, analytic, max_relative = 1e-6);
    }

    #[test]
    fn run_layer_zero_input_stays_silent() {
        let raster = SpikeRaster::zeros(5, 2, 3);
        let w = LayerWeights::new(Array2::from_elem((4, 3), 0.7), -1.0, 1.0);
        let p = params(4);
        let (out, _) = run_layer(&raster, &w, &p, 5).unwrap();
        assert_eq!(out.total_spikes(), 0);
    }

    #[test]
    fn strong_single_weight_spikes_same_step() {
        // One input neuron, one output neuron, weight large enough that a
        // single input spike pushes the membrane over threshold immediately.
        let mut raster = SpikeRaster::zeros(4, 1, 1);
        raster.set(2, 0, 0, 1);
        // m' after one spike = (1 - alpha) * (1 - g) * w; need > v_th = 1.
        let w_val = 1.0 / ((1.0 - (-0.05f64).exp()) * 0.5) + 1.0;
        let w = LayerWeights::new(Array2::from_elem((1, 1), w_val), -100.0, 100.0);
        let p = params(1);
        let (out, _) = run_layer(&raster, &w, &p, 4).unwrap();
        assert_eq!(out.get(2, 0, 0), 1);
        assert_eq!(out.get(0, 0, 0), 0);
        assert_eq!(out.get(1, 0, 0), 0);
    }

    #[test]
    fn run_layer_single_step_equals_step() {
        let mut raster = SpikeRaster::zeros(1, 2, 3);
        raster.set(0, 0, 1, 1);
        raster.set(0, 1, 2, 1);
        let w = LayerWeights::new(
            Array2::from_shape_fn((2, 3), |(o, i)| 0.3 * (o + 1) as f64 - 0.1 * i as f64),
            -1.0,
            1.0,
        );
        let p = params(2);
        let (out, state) = run_layer(&raster, &w, &p, 1).unwrap();

        let mut current = Array2::zeros((2, 2));
        for b in 0..2 {
            for i in 0..3 {
                if raster.get(0, b, i) != 0 {
                    for o in 0..2 {
                        current[(b, o)] += w.w[(o, i)];
                    }
                }
            }
        }
        let (expect_state, expect_spikes) = step(&MembraneState::zeros(2, 2), &current, &p).unwrap();
        assert_eq!(state.m, expect_state.m);
        for b in 0..2 {
            for o in 0..2 {
                assert_eq!(out.get(0, b, o), expect_spikes[(b, o)]);
            }
        }
    }

    #[test]
    fn run_layer_is_deterministic() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut raster = SpikeRaster::zeros(6, 3, 5);
        for t in 0..6 {
            for b in 0..3 {
                for n in 0..5 {
                    if rng.gen::<f64>() < 0.3 {
                        raster.set(t, b, n, 1);
                    }
                }
            }
        }
        let w = LayerWeights::new(
            Array2::from_shape_fn((4, 5), |(o, i)| ((o * 5 + i) as f64).sin()),
            -2.0,
            2.0,
        );
        let p = params(4);
        let (a, _) = run_layer(&raster, &w, &p, 6).unwrap();
        let (b, _) = run_layer(&raster, &w, &p, 6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.content_hash(), b.content_hash());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn surrogate_is_symmetric_about_threshold(
                x in -50.0f64..50.0,
                v_th in 0.1f64..5.0,
                sigma_g in 0.1f64..2.0,
                h in 0.0f64..0.5,
                s in 1.5f64..10.0,
            ) {
                let sp = SurrogateParams { sigma_g, h_scale: h, s_ratio: s };
                let left = surrogate_grad(v_th - x, &sp, v_th);
                let right = surrogate_grad(v_th + x, &sp, v_th);
                prop_assert!((left - right).abs() <= 1e-12 * left.abs().max(right.abs()).max(1.0));
            }

            #[test]
            fn surrogate_is_positive_and_maximal_at_threshold(
                v_th in 0.1f64..5.0,
                x in 0.01f64..10.0,
            ) {
                let sp = SurrogateParams::default();
                let peak = surrogate_grad(v_th, &sp, v_th);
                prop_assert!(peak > 0.0);
                prop_assert!(surrogate_grad(v_th + x, &sp, v_th) < peak);
            }

            #[test]
            fn membrane_stays_finite_under_finite_input(
                inputs in proptest::collection::vec(-100.0f64..100.0, 8),
            ) {
                let p = params(2);
                let mut state = MembraneState::zeros(2, 2);
                for chunk in inputs.chunks(4) {
                    let input = Array2::from_shape_vec((2, 2), chunk.to_vec()).unwrap();
                    let (next, _) = step(&state, &input, &p).unwrap();
                    prop_assert!(next.m.iter().all(|v| v.is_finite()));
                    prop_assert!(next.d.iter().all(|v| v.is_finite()));
                    state = next;
                }
            }
        }
    }
}
