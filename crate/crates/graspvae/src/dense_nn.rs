//! Minimal dense-network engine: fully connected layers with configurable
//! activations, reverse-mode gradients, Adam, parameter counting and a
//! finite-difference gradient checker. Double precision throughout; the
//! networks here are tiny and gradient fidelity matters more than speed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const QUAT_GUARD_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Linear,
    /// Normalizes a 4-vector to unit norm; the decoder's orientation head.
    QuaternionNormalizer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.input_width == 0 || self.output_width == 0 {
            return Err(Error::Shape(format!(
                "layer widths must be >= 1, got {}x{}",
                self.input_width, self.output_width
            )));
        }
        if self.activation == Activation::QuaternionNormalizer && self.output_width != 4 {
            return Err(Error::Shape(
                "quaternion_normalizer requires output width 4".to_string(),
            ));
        }
        Ok(())
    }
}

/// One fully connected layer; weights are row-major `[output][input]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub spec: LayerSpec,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNetwork {
    pub layers: Vec<Layer>,
}

/// Intermediates captured by `forward`, sufficient for `backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    inputs: Vec<Vec<f64>>,
    outputs: Vec<Vec<f64>>,
    pub output: Vec<f64>,
    /// Number of quaternion-normalizer inputs that hit the near-zero guard.
    pub quat_guard_hits: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGradients {
    pub layers: Vec<LayerGradients>,
}

impl NetworkGradients {
    pub fn zeros_like(net: &DenseNetwork) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    pub fn accumulate(&mut self, other: &NetworkGradients) {
        for (a, b) in self.layers.iter_mut().zip(other.layers.iter()) {
            for (x, y) in a.weights.iter_mut().zip(b.weights.iter()) {
                *x += y;
            }
            for (x, y) in a.bias.iter_mut().zip(b.bias.iter()) {
                *x += y;
            }
        }
    }
}

impl DenseNetwork {
    /// Builds a network with Glorot-uniform weights and zero biases.
    pub fn new<R: Rng>(specs: &[LayerSpec], rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            spec.validate()?;
            if i > 0 && specs[i - 1].output_width != spec.input_width {
                return Err(Error::Shape(format!(
                    "layer {i} input width {} does not chain with previous output {}",
                    spec.input_width,
                    specs[i - 1].output_width
                )));
            }
            let bound = (6.0 / (spec.input_width + spec.output_width) as f64).sqrt();
            let weights = (0..spec.input_width * spec.output_width)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            layers.push(Layer {
                spec: *spec,
                weights,
                bias: vec![0.0; spec.output_width],
            });
        }
        Ok(Self { layers })
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.spec.input_width)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.spec.output_width)
    }

    /// Exact trainable-parameter count: sum of in*out + out over layers.
    pub fn count_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache> {
        if input.len() != self.input_width() {
            return Err(Error::Shape(format!(
                "input width {} does not match network input {}",
                input.len(),
                self.input_width()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut outputs = Vec::with_capacity(self.layers.len());
        let mut quat_guard_hits = 0;
        let mut current = input.to_vec();
        for layer in &self.layers {
            let (n_in, n_out) = (layer.spec.input_width, layer.spec.output_width);
            let mut pre = layer.bias.clone();
            for (o, p) in pre.iter_mut().enumerate() {
                let row = &layer.weights[o * n_in..(o + 1) * n_in];
                *p += row.iter().zip(current.iter()).map(|(w, x)| w * x).sum::<f64>();
            }
            debug_assert_eq!(pre.len(), n_out);
            let post = match layer.spec.activation {
                Activation::Tanh => pre.iter().map(|x| x.tanh()).collect(),
                Activation::Sigmoid => pre.iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect(),
                Activation::Linear => pre.clone(),
                Activation::QuaternionNormalizer => {
                    let mut v = pre.clone();
                    let mut norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm < QUAT_GUARD_EPS {
                        v[3] += QUAT_GUARD_EPS;
                        norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                        quat_guard_hits += 1;
                    }
                    v.iter().map(|x| x / norm).collect::<Vec<f64>>()
                }
            };
            inputs.push(current);
            // stash the guarded pre-activation so backward sees the same v
            outputs.push(match layer.spec.activation {
                Activation::QuaternionNormalizer => pre,
                _ => post.clone(),
            });
            current = post;
        }
        Ok(ForwardCache {
            inputs,
            outputs,
            output: current,
            quat_guard_hits,
        })
    }

    /// Reverse-mode gradients for a scalar loss with gradient `output_gradient`
    /// at the network output. Returns parameter gradients and the gradient at
    /// the network input.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_gradient: &[f64],
    ) -> Result<(NetworkGradients, Vec<f64>)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::Usage(
                "forward cache does not match this network".to_string(),
            ));
        }
        if output_gradient.len() != self.output_width() {
            return Err(Error::Shape(format!(
                "output gradient width {} does not match network output {}",
                output_gradient.len(),
                self.output_width()
            )));
        }
        let mut grads = NetworkGradients::zeros_like(self);
        let mut upstream = output_gradient.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let (n_in, n_out) = (layer.spec.input_width, layer.spec.output_width);
            let input = &cache.inputs[idx];
            let stashed = &cache.outputs[idx];
            // gradient at the pre-activation
            let d_pre: Vec<f64> = match layer.spec.activation {
                Activation::Tanh => stashed
                    .iter()
                    .zip(upstream.iter())
                    .map(|(y, g)| g * (1.0 - y * y))
                    .collect(),
                Activation::Sigmoid => stashed
                    .iter()
                    .zip(upstream.iter())
                    .map(|(y, g)| g * y * (1.0 - y))
                    .collect(),
                Activation::Linear => upstream.clone(),
                Activation::QuaternionNormalizer => {
                    // exact Jacobian of v/|v|: (I - y yT)/|v|
                    let mut v = stashed.clone();
                    let mut norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if norm < QUAT_GUARD_EPS {
                        v[3] += QUAT_GUARD_EPS;
                        norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    }
                    let y: Vec<f64> = v.iter().map(|x| x / norm).collect();
                    let dot: f64 = y.iter().zip(upstream.iter()).map(|(a, b)| a * b).sum();
                    y.iter()
                        .zip(upstream.iter())
                        .map(|(yi, gi)| (gi - yi * dot) / norm)
                        .collect()
                }
            };
            let lg = &mut grads.layers[idx];
            for o in 0..n_out {
                lg.bias[o] += d_pre[o];
                let row = &mut lg.weights[o * n_in..(o + 1) * n_in];
                for (w, x) in row.iter_mut().zip(input.iter()) {
                    *w += d_pre[o] * x;
                }
            }
            let mut d_in = vec![0.0; n_in];
            for o in 0..n_out {
                let row = &layer.weights[o * n_in..(o + 1) * n_in];
                for (di, w) in d_in.iter_mut().zip(row.iter()) {
                    *di += d_pre[o] * w;
                }
            }
            upstream = d_in;
        }
        Ok((grads, upstream))
    }
}

// ---------------------------------------------------------------------------
// Adam

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first_moment: NetworkGradients,
    second_moment: NetworkGradients,
}

impl AdamState {
    pub fn new(net: &DenseNetwork, config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first_moment: NetworkGradients::zeros_like(net),
            second_moment: NetworkGradients::zeros_like(net),
        }
    }

    /// One Adam update with bias correction; mutates the network in place.
    pub fn step(&mut self, net: &mut DenseNetwork, grads: &NetworkGradients) -> Result<()> {
        for (idx, lg) in grads.layers.iter().enumerate() {
            if lg.weights.iter().chain(lg.bias.iter()).any(|g| !g.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("gradient of layer {idx}"),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for (((layer, lg), m), v) in net
            .layers
            .iter_mut()
            .zip(grads.layers.iter())
            .zip(self.first_moment.layers.iter_mut())
            .zip(self.second_moment.layers.iter_mut())
        {
            let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *p -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
            };
            for i in 0..layer.weights.len() {
                update(&mut layer.weights[i], lg.weights[i], &mut m.weights[i], &mut v.weights[i]);
            }
            for i in 0..layer.bias.len() {
                update(&mut layer.bias[i], lg.bias[i], &mut m.bias[i], &mut v.bias[i]);
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// gradient checking

/// Compares analytic gradients against central finite differences for the
/// scalar loss L = g . f(x). Returns the maximum relative error over all
/// parameters, with relative error |a - n| / max(1e-12, |a| + |n|).
pub fn check_gradients(net: &DenseNetwork, input: &[f64], output_gradient: &[f64], h: f64) -> Result<f64> {
    let cache = net.forward(input)?;
    let (analytic, _) = net.backward(&cache, output_gradient)?;
    let loss = |net: &DenseNetwork| -> Result<f64> {
        let out = net.forward(input)?.output;
        Ok(out.iter().zip(output_gradient.iter()).map(|(y, g)| y * g).sum())
    };
    let mut max_rel = 0.0f64;
    let mut probe = net.clone();
    for li in 0..net.layers.len() {
        for wi in 0..net.layers[li].weights.len() {
            let orig = probe.layers[li].weights[wi];
            probe.layers[li].weights[wi] = orig + h;
            let plus = loss(&probe)?;
            probe.layers[li].weights[wi] = orig - h;
            let minus = loss(&probe)?;
            probe.layers[li].weights[wi] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.layers[li].weights[wi];
            max_rel = max_rel.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12));
        }
        for bi in 0..net.layers[li].bias.len() {
            let orig = probe.layers[li].bias[bi];
            probe.layers[li].bias[bi] = orig + h;
            let plus = loss(&probe)?;
            probe.layers[li].bias[bi] = orig - h;
            let minus = loss(&probe)?;
            probe.layers[li].bias[bi] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.layers[li].bias[bi];
            max_rel = max_rel.max((a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-12));
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spec(i: usize, o: usize, a: Activation) -> LayerSpec {
        LayerSpec {
            input_width: i,
            output_width: o,
            activation: a,
        }
    }

    #[test]
    fn identity_linear_layer_passes_input_through() {
        let mut net = DenseNetwork::new(
            &[spec(2, 2, Activation::Linear)],
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        net.layers[0].weights = vec![1.0, 0.0, 0.0, 1.0];
        let out = net.forward(&[1.0, 2.0]).unwrap().output;
        assert_eq!(out, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_tanh_layer_outputs_zero() {
        let mut net = DenseNetwork::new(
            &[spec(3, 2, Activation::Tanh)],
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        net.layers[0].weights.iter_mut().for_each(|w| *w = 0.0);
        let out = net.forward(&[0.7, -1.3, 4.0]).unwrap().output;
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn quaternion_normalizer_divides_by_norm() {
        let mut net = DenseNetwork::new(
            &[spec(4, 4, Activation::QuaternionNormalizer)],
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        net.layers[0].weights = (0..16)
            .map(|i| if i % 5 == 0 { 1.0 } else { 0.0 })
            .collect();
        let out = net.forward(&[1.0, 1.0, 1.0, 1.0]).unwrap().output;
        for v in out {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn quaternion_guard_counts_near_zero_inputs() {
        let mut net = DenseNetwork::new(
            &[spec(4, 4, Activation::QuaternionNormalizer)],
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        net.layers[0].weights.iter_mut().for_each(|w| *w = 0.0);
        let cache = net.forward(&[0.0; 4]).unwrap();
        assert_eq!(cache.quat_guard_hits, 1);
        assert!((cache.output[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_layer_closed_form_gradients() {
        let mut net = DenseNetwork::new(
            &[spec(2, 2, Activation::Linear)],
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        net.layers[0].weights = vec![0.3, -0.7, 1.1, 0.2];
        net.layers[0].bias = vec![0.1, -0.4];
        let x = [2.0, -1.0];
        let g = [0.5, -2.0];
        let cache = net.forward(&x).unwrap();
        let (grads, d_in) = net.backward(&cache, &g).unwrap();
        // dW = g xT, db = g, dx = WT g
        assert_eq!(grads.layers[0].weights, vec![1.0, -0.5, -4.0, 2.0]);
        assert_eq!(grads.layers[0].bias, vec![0.5, -2.0]);
        assert!((d_in[0] - (0.3 * 0.5 + 1.1 * -2.0)).abs() < 1e-15);
        assert!((d_in[1] - (-0.7 * 0.5 + 0.2 * -2.0)).abs() < 1e-15);
    }

    #[test]
    fn quaternion_jacobian_at_identity() {
        let mut net = DenseNetwork::new(
            &[spec(4, 4, Activation::QuaternionNormalizer)],
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        // identity weights, zero bias: pre-activation equals input
        net.layers[0].weights = (0..16)
            .map(|i| if i % 5 == 0 { 1.0 } else { 0.0 })
            .collect();
        let cache = net.forward(&[0.0, 0.0, 0.0, 1.0]).unwrap();
        let (_, d_in) = net.backward(&cache, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let expected = [1.0, 0.0, 0.0, 0.0];
        for (a, e) in d_in.iter().zip(expected.iter()) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn three_layer_tanh_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = DenseNetwork::new(
            &[
                spec(4, 6, Activation::Tanh),
                spec(6, 5, Activation::Tanh),
                spec(5, 3, Activation::Tanh),
            ],
            &mut rng,
        )
        .unwrap();
        let input: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let rel = check_gradients(&net, &input, &g, 1e-5).unwrap();
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters() {
        let mut net = DenseNetwork::new(
            &[spec(2, 2, Activation::Linear)],
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let before = net.clone();
        let mut state = AdamState::new(&net, AdamConfig::default());
        let grads = NetworkGradients::zeros_like(&net);
        state.step(&mut net, &grads).unwrap();
        assert_eq!(net, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        let mut net = DenseNetwork::new(
            &[spec(1, 1, Activation::Linear)],
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        net.layers[0].weights = vec![0.5];
        let mut state = AdamState::new(&net, AdamConfig::default());
        let mut grads = NetworkGradients::zeros_like(&net);
        grads.layers[0].weights[0] = 1.0;
        state.step(&mut net, &grads).unwrap();
        assert!((net.layers[0].weights[0] - (0.5 - 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn adam_converges_on_quadratic() {
        // minimize (p - 3)^2 from p = 0 via the bias parameter
        let mut net = DenseNetwork::new(
            &[spec(1, 1, Activation::Linear)],
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        net.layers[0].weights = vec![0.0];
        let mut state = AdamState::new(
            &net,
            AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
        );
        for _ in 0..200 {
            let p = net.layers[0].bias[0];
            let mut grads = NetworkGradients::zeros_like(&net);
            grads.layers[0].bias[0] = 2.0 * (p - 3.0);
            state.step(&mut net, &grads).unwrap();
        }
        assert!((net.layers[0].bias[0] - 3.0).abs() < 0.1);
    }

    #[test]
    fn adam_rejects_non_finite_gradients() {
        let mut net = DenseNetwork::new(
            &[spec(1, 1, Activation::Linear)],
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let mut state = AdamState::new(&net, AdamConfig::default());
        let mut grads = NetworkGradients::zeros_like(&net);
        grads.layers[0].weights[0] = f64::NAN;
        assert!(matches!(
            state.step(&mut net, &grads),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn parameter_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = DenseNetwork::new(&[spec(4, 8, Activation::Tanh)], &mut rng).unwrap();
        assert_eq!(net.count_parameters(), 40);
        let empty = DenseNetwork { layers: vec![] };
        assert_eq!(empty.count_parameters(), 0);
    }

    #[test]
    fn shape_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(DenseNetwork::new(&[spec(3, 0, Activation::Tanh)], &mut rng).is_err());
        assert!(DenseNetwork::new(
            &[spec(3, 4, Activation::Tanh), spec(5, 2, Activation::Tanh)],
            &mut rng
        )
        .is_err());
        let net = DenseNetwork::new(&[spec(3, 2, Activation::Tanh)], &mut rng).unwrap();
        assert!(net.forward(&[1.0, 2.0]).is_err());
    }
}
