//! Dense feed-forward networks with a recorded forward pass and exact
//! handwritten backpropagation.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};

static NEXT_PARAM_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_PARAM_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
    /// Only valid on the last layer.
    Softmax,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Tanh => 0,
            Activation::Relu => 1,
            Activation::Identity => 2,
            Activation::Softmax => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Activation::Tanh),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Identity),
            3 => Some(Activation::Softmax),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
            Activation::Softmax => "softmax",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            "softmax" => Some(Activation::Softmax),
            _ => None,
        }
    }

    fn apply(self, z: &mut [f64]) {
        match self {
            Activation::Tanh => z.iter_mut().for_each(|v| *v = v.tanh()),
            Activation::Relu => z.iter_mut().for_each(|v| *v = v.max(0.0)),
            Activation::Identity => {}
            Activation::Softmax => {
                let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for v in z.iter_mut() {
                    *v = (*v - max).exp();
                    total += *v;
                }
                z.iter_mut().for_each(|v| *v /= total);
            }
        }
    }

    /// Turns a gradient w.r.t. the activation output `a` into a gradient
    /// w.r.t. the pre-activation, in place.
    fn backprop(self, a: &[f64], grad: &mut [f64]) {
        match self {
            Activation::Tanh => {
                for (g, &y) in grad.iter_mut().zip(a) {
                    *g *= 1.0 - y * y;
                }
            }
            Activation::Relu => {
                for (g, &y) in grad.iter_mut().zip(a) {
                    if y <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            Activation::Identity => {}
            Activation::Softmax => {
                let dot: f64 = grad.iter().zip(a).map(|(g, p)| g * p).sum();
                for (g, &p) in grad.iter_mut().zip(a) {
                    *g = p * (*g - dot);
                }
            }
        }
    }
}

/// One dense layer, `y = act(W x + b)` with `W` stored row-major (out × in).
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub(crate) inputs: usize,
    pub(crate) outputs: usize,
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
    pub(crate) activation: Activation,
}

impl Layer {
    pub fn new(
        inputs: usize,
        outputs: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::config("layer dimensions must be positive"));
        }
        if weights.len() != inputs * outputs || bias.len() != outputs {
            return Err(Error::config(format!(
                "layer {inputs}->{outputs} got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        Ok(Layer {
            inputs,
            outputs,
            weights,
            bias,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.inputs).zip(&self.bias).map(|(row, b)| {
            let mut acc = *b;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            acc
        }));
    }
}

/// Network parameters. Every instance carries an identity and a mutation
/// counter so a [`Tape`] can be checked against the exact parameters that
/// produced it.
#[derive(Debug)]
pub struct ParamSet {
    layers: Vec<Layer>,
    id: u64,
    version: u64,
}

impl Clone for ParamSet {
    fn clone(&self) -> Self {
        ParamSet {
            layers: self.layers.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

/// Activations recorded by [`ParamSet::forward`]: the input followed by
/// every layer output.
#[derive(Clone, Debug)]
pub struct Tape {
    param_id: u64,
    version: u64,
    activations: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("tape holds the input")
    }

    /// Input to the last layer (the penultimate representation).
    pub fn penultimate(&self) -> &[f64] {
        &self.activations[self.activations.len() - 2]
    }
}

impl ParamSet {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs != pair[1].inputs {
                return Err(Error::config(format!(
                    "layer dims do not chain: {} outputs feed {} inputs",
                    pair[0].outputs, pair[1].inputs
                )));
            }
        }
        if layers[..layers.len() - 1]
            .iter()
            .any(|l| l.activation == Activation::Softmax)
        {
            return Err(Error::config("softmax is only allowed on the output layer"));
        }
        let finite = layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()));
        if !finite {
            return Err(Error::numeric("non-finite parameter"));
        }
        Ok(ParamSet {
            layers,
            id: fresh_id(),
            version: 0,
        })
    }

    /// `sizes` lists every width including input and output; `activations`
    /// has one entry per layer.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        Self::build(sizes, activations, |_, _| 0.0)
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(
        sizes: &[usize],
        activations: &[Activation],
        rng: &mut R,
    ) -> Result<Self> {
        Self::build(sizes, activations, |fan_in, fan_out| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            rng.random_range(-limit..limit)
        })
    }

    fn build(
        sizes: &[usize],
        activations: &[Activation],
        mut init: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::config(format!(
                "{} widths need {} activations, got {}",
                sizes.len(),
                sizes.len().saturating_sub(1),
                activations.len()
            )));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (k, &activation) in activations.iter().enumerate() {
            let (inputs, outputs) = (sizes[k], sizes[k + 1]);
            let weights = (0..inputs * outputs).map(|_| init(inputs, outputs)).collect();
            layers.push(Layer::new(inputs, outputs, weights, vec![0.0; outputs], activation)?);
        }
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Widths including input and output.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.input_dim()];
        sizes.extend(self.layers.iter().map(|l| l.outputs));
        sizes
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::config(format!(
                "input has length {}, network expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
        self.check_input(input)?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.to_vec());
        for layer in &self.layers {
            let mut z = Vec::with_capacity(layer.outputs);
            layer.affine(activations.last().unwrap(), &mut z);
            layer.activation.apply(&mut z);
            activations.push(z);
        }
        let output = activations.last().unwrap().clone();
        if output.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("network produced a non-finite output"));
        }
        let tape = Tape {
            param_id: self.id,
            version: self.version,
            activations,
        };
        Ok((output, tape))
    }

    /// Forward pass without recording a tape.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut current = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.affine(&current, &mut next);
            layer.activation.apply(&mut next);
            std::mem::swap(&mut current, &mut next);
        }
        if current.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric("network produced a non-finite output"));
        }
        Ok(current)
    }

    pub fn backward(&self, tape: &Tape, output_grad: &[f64]) -> Result<GradientSet> {
        let mut grads = GradientSet::zeros_like(self);
        self.backward_add(tape, output_grad, &mut grads)?;
        grads.count = 1;
        Ok(grads)
    }

    /// Adds `∂(output_grad · output)/∂θ` into `into` without touching its
    /// term counter.
    pub fn backward_add(
        &self,
        tape: &Tape,
        output_grad: &[f64],
        into: &mut GradientSet,
    ) -> Result<()> {
        if tape.param_id != self.id || tape.version != self.version {
            return Err(Error::usage(
                "tape was recorded against different or since-modified parameters",
            ));
        }
        if output_grad.len() != self.output_dim() {
            return Err(Error::usage(format!(
                "output gradient has length {}, network outputs {}",
                output_grad.len(),
                self.output_dim()
            )));
        }
        if !into.matches(self) {
            return Err(Error::usage("gradient accumulator shape differs from parameters"));
        }
        let mut delta = output_grad.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            layer.activation.backprop(&tape.activations[k + 1], &mut delta);
            let input = &tape.activations[k];
            let slot = &mut into.layers[k];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                slot.bias[o] += d;
                let row = &mut slot.weights[o * layer.inputs..(o + 1) * layer.inputs];
                for (g, &x) in row.iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if k > 0 {
                let mut upstream = vec![0.0; layer.inputs];
                for (row, &d) in layer.weights.chunks_exact(layer.inputs).zip(&delta) {
                    if d == 0.0 {
                        continue;
                    }
                    for (u, &w) in upstream.iter_mut().zip(row) {
                        *u += w * d;
                    }
                }
                delta = upstream;
            }
        }
        Ok(())
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.num_params() {
            return Err(Error::usage(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                values.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let w = l.weights.len();
            l.weights.copy_from_slice(&values[offset..offset + w]);
            offset += w;
            let b = l.bias.len();
            l.bias.copy_from_slice(&values[offset..offset + b]);
            offset += b;
        }
        self.version += 1;
        Ok(())
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        self.version += 1;
        &mut self.layers
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Stable content hash of the parameter values.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in self.flat() {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// Accumulated parameter gradients. `count` is the number of terms summed
/// in; [`GradientSet::mean`] divides by it.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub(crate) layers: Vec<LayerGrad>,
    pub(crate) count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LayerGrad {
    pub(crate) weights: Vec<f64>,
    pub(crate) bias: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(params: &ParamSet) -> Self {
        GradientSet {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGrad {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            count: 0,
        }
    }

    pub fn matches(&self, params: &ParamSet) -> bool {
        self.layers.len() == params.layers.len()
            && self
                .layers
                .iter()
                .zip(&params.layers)
                .all(|(g, l)| g.weights.len() == l.weights.len() && g.bias.len() == l.bias.len())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn increment_count(&mut self) {
        self.count += 1;
    }

    /// Adds another accumulator elementwise, summing term counts.
    pub fn add(&mut self, other: &GradientSet) -> Result<()> {
        if self.layers.len() != other.layers.len()
            || self
                .layers
                .iter()
                .zip(&other.layers)
                .any(|(a, b)| a.weights.len() != b.weights.len())
        {
            return Err(Error::usage("adding gradient sets of different shapes"));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.bias.iter_mut().zip(&b.bias).for_each(|(x, y)| *x += y);
        }
        self.count += other.count;
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|v| *v *= factor);
        }
    }

    /// Average over accumulated terms; an empty accumulator averages to zero.
    pub fn mean(&self) -> GradientSet {
        let mut out = self.clone();
        if self.count > 1 {
            out.scale(1.0 / self.count as f64);
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|&v| v == 0.0))
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub(crate) fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .flat_map(|l| l.weights.iter_mut().chain(l.bias.iter_mut()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let layer = Layer::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0; 2], Activation::Identity)
            .unwrap();
        let net = ParamSet::new(vec![layer]).unwrap();
        let (out, _) = net.forward(&[1.0, 2.0]).unwrap();
        assert_eq!(out, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_weights_output_activation_of_bias() {
        let layer =
            Layer::new(3, 2, vec![0.0; 6], vec![0.3, -1.2], Activation::Tanh).unwrap();
        let net = ParamSet::new(vec![layer]).unwrap();
        let out = net.predict(&[5.0, -7.0, 11.0]).unwrap();
        assert_eq!(out, vec![0.3f64.tanh(), (-1.2f64).tanh()]);
    }

    #[test]
    fn seeded_two_layer_net_matches_straight_line_arithmetic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net =
            ParamSet::random(&[2, 3, 2], &[Activation::Tanh, Activation::Identity], &mut rng)
                .unwrap();
        let x = [0.5, -0.5];
        let (w1, w2) = (&net.layers()[0], &net.layers()[1]);
        let mut h = [0.0; 3];
        for (j, hj) in h.iter_mut().enumerate() {
            *hj = (w1.weights()[2 * j] * x[0] + w1.weights()[2 * j + 1] * x[1] + w1.bias()[j])
                .tanh();
        }
        let mut expected = [0.0; 2];
        for (i, e) in expected.iter_mut().enumerate() {
            *e = w2.weights()[3 * i] * h[0]
                + w2.weights()[3 * i + 1] * h[1]
                + w2.weights()[3 * i + 2] * h[2]
                + w2.bias()[i];
        }
        let (out, _) = net.forward(&x).unwrap();
        for (a, b) in out.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert_eq!(net.predict(&x).unwrap(), out);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let net = ParamSet::zeros(&[3, 2], &[Activation::Identity]).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Config(_))));
        assert!(ParamSet::zeros(&[3, 2, 2], &[Activation::Identity]).is_err());
    }

    #[test]
    fn linear_layer_gradient_of_first_output() {
        let layer = Layer::new(
            3,
            2,
            vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            vec![0.0; 2],
            Activation::Identity,
        )
        .unwrap();
        let net = ParamSet::new(vec![layer]).unwrap();
        let x = [1.5, -2.0, 0.25];
        let (_, tape) = net.forward(&x).unwrap();
        let g = net.backward(&tape, &[1.0, 0.0]).unwrap();
        assert_eq!(g.layers[0].weights, vec![1.5, -2.0, 0.25, 0.0, 0.0, 0.0]);
        assert_eq!(g.layers[0].bias, vec![1.0, 0.0]);
        assert_eq!(g.count(), 1);
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let net = ParamSet::random(&[4, 5, 3], &[Activation::Tanh, Activation::Identity], &mut rng)
            .unwrap();
        let (_, tape) = net.forward(&[0.1, 0.2, 0.3, 0.4]).unwrap();
        assert!(net.backward(&tape, &[0.0; 3]).unwrap().is_zero());
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net =
            ParamSet::random(&[2, 2], &[Activation::Tanh], &mut rng).unwrap();
        let (_, tape) = net.forward(&[1.0, 1.0]).unwrap();
        let flat = net.flat();
        net.set_flat(&flat).unwrap();
        assert!(matches!(net.backward(&tape, &[1.0, 1.0]), Err(Error::Usage(_))));

        let other = net.clone();
        let (_, tape) = net.forward(&[1.0, 1.0]).unwrap();
        assert!(matches!(other.backward(&tape, &[1.0, 1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = ParamSet::random(&[2, 8, 5], &[Activation::Relu, Activation::Softmax], &mut rng)
            .unwrap();
        let p = net.predict(&[3.0, -1.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(ParamSet::zeros(&[2, 2, 2], &[Activation::Softmax, Activation::Identity]).is_err());
    }
}
