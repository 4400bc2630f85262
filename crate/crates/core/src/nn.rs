//! Fully connected networks with hand-written reverse mode.
//!
//! Weights are stored row-major (`out_dim × in_dim`). Gradients, optimizer
//! accumulators and parameters all share the same [`LayerTensors`] layout so
//! they can be zipped without index juggling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Tanh => 1,
            Activation::Sigmoid => 2,
            Activation::Identity => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        Ok(match tag {
            0 => Activation::Relu,
            1 => Activation::Tanh,
            2 => Activation::Sigmoid,
            3 => Activation::Identity,
            _ => return Err(Error::Format(format!("unknown activation tag {tag}"))),
        })
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => sigmoid(v),
            Activation::Identity => v,
        }
    }

    /// Derivative given the pre-activation and the activation output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// One layer's weight matrix and bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTensors {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerTensors {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        LayerTensors {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn weight(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.in_dim + col]
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.bias)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }

    fn same_shape(&self, other: &LayerTensors) -> bool {
        self.in_dim == other.in_dim && self.out_dim == other.out_dim
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams {
    layers: Vec<LayerTensors>,
    activations: Vec<Activation>,
}

impl MlpParams {
    pub fn new(layers: Vec<LayerTensors>, activations: Vec<Activation>) -> Result<Self> {
        if layers.is_empty() || layers.len() != activations.len() {
            return Err(Error::Config(format!(
                "{} layers but {} activations",
                layers.len(),
                activations.len()
            )));
        }
        for l in &layers {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::Dimension("layer tensor sizes disagree with dims".into()));
            }
            if l.values().any(|v| !v.is_finite()) {
                return Err(Error::Config("non-finite parameter".into()));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::Dimension(format!(
                    "layer output {} does not feed next input {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(MlpParams { layers, activations })
    }

    /// All-zero parameters with the given shape.
    pub fn zeros(layer_dims: &[usize], activations: &[Activation]) -> Result<Self> {
        check_dims(layer_dims, activations)?;
        Self::new(
            layer_dims.windows(2).map(|d| LayerTensors::zeros(d[0], d[1])).collect(),
            activations.to_vec(),
        )
    }

    pub fn layers(&self) -> &[LayerTensors] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerTensors] {
        &mut self.layers
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn dims(&self) -> Vec<usize> {
        let mut dims = vec![self.layers[0].in_dim];
        dims.extend(self.layers.iter().map(|l| l.out_dim));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Flattened parameters, layer by layer, weights before biases.
    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                flat.len()
            )));
        }
        for (dst, src) in self.layers.iter_mut().flat_map(|l| l.values_mut()).zip(flat) {
            *dst = *src;
        }
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.values())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn same_shape(&self, grads: &[LayerTensors]) -> bool {
        self.layers.len() == grads.len() && self.layers.iter().zip(grads).all(|(a, b)| a.same_shape(b))
    }
}

fn check_dims(layer_dims: &[usize], activations: &[Activation]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Config(
            "a network needs at least an input and an output dimension".into(),
        ));
    }
    if activations.len() != layer_dims.len() - 1 {
        return Err(Error::Config(format!(
            "{} dims need {} activations, got {}",
            layer_dims.len(),
            layer_dims.len() - 1,
            activations.len()
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Config("layer dimensions must be positive".into()));
    }
    Ok(())
}

/// Uniform weights on `±sqrt(1/in_dim)`, zero biases.
pub fn init_params(layer_dims: &[usize], activations: &[Activation], seed: u64) -> Result<MlpParams> {
    let mut params = MlpParams::zeros(layer_dims, activations)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for layer in &mut params.layers {
        let bound = (1.0 / layer.in_dim as f64).sqrt();
        for w in &mut layer.weights {
            *w = rng.gen_range(-bound..bound);
        }
    }
    Ok(params)
}

/// Activations cached by [`forward`] for [`backward`].
#[derive(Clone, Debug)]
pub struct Tape {
    dims: Vec<usize>,
    /// `inputs[k]` feeds layer `k`; the final entry is the network output.
    values: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Tape {
    pub fn output(&self) -> &[f64] {
        &self.values[self.values.len() - 1]
    }
}

pub fn forward(p: &MlpParams, input: &[f64]) -> Result<(Vec<f64>, Tape)> {
    if input.len() != p.input_dim() {
        return Err(Error::Dimension(format!(
            "network expects {} inputs, got {}",
            p.input_dim(),
            input.len()
        )));
    }
    let mut values = Vec::with_capacity(p.layers.len() + 1);
    let mut pre = Vec::with_capacity(p.layers.len());
    values.push(input.to_vec());
    for (layer, act) in p.layers.iter().zip(&p.activations) {
        let x = &values[values.len() - 1];
        let z: Vec<f64> = layer
            .weights
            .chunks_exact(layer.in_dim)
            .zip(&layer.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect();
        let a = z.iter().map(|&v| act.apply(v)).collect();
        pre.push(z);
        values.push(a);
    }
    let tape = Tape {
        dims: p.dims(),
        values,
        pre,
    };
    Ok((tape.output().to_vec(), tape))
}

/// Per-parameter partial derivatives plus the gradient w.r.t. the input.
#[derive(Clone, Debug, PartialEq)]
pub struct GradBundle {
    pub layers: Vec<LayerTensors>,
    pub input: Vec<f64>,
}

impl GradBundle {
    pub fn zeros_like(p: &MlpParams) -> Self {
        GradBundle {
            layers: p
                .layers
                .iter()
                .map(|l| LayerTensors::zeros(l.in_dim, l.out_dim))
                .collect(),
            input: vec![0.0; p.input_dim()],
        }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.values().copied()).collect()
    }

    pub fn scale(&mut self, a: f64) {
        for v in self.layers.iter_mut().flat_map(|l| l.values_mut()) {
            *v *= a;
        }
        for v in &mut self.input {
            *v *= a;
        }
    }

    /// `self += other`, parameter gradients only.
    pub fn accumulate(&mut self, other: &GradBundle) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.values_mut().zip(b.values()) {
                *x += y;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().flat_map(|l| l.values()).all(|v| v.is_finite())
    }
}

/// Reverse-mode pass for the scalar whose output gradient is `output_grad`.
pub fn backward(p: &MlpParams, tape: &Tape, output_grad: &[f64]) -> Result<GradBundle> {
    let mut grads = GradBundle::zeros_like(p);
    grads.input = backward_into(p, tape, output_grad, &mut grads)?;
    Ok(grads)
}

/// Like [`backward`] but adds parameter gradients into `acc` and returns the
/// input gradient.
pub fn backward_into(p: &MlpParams, tape: &Tape, output_grad: &[f64], acc: &mut GradBundle) -> Result<Vec<f64>> {
    if tape.dims != p.dims() {
        return Err(Error::Usage(format!(
            "tape recorded for dims {:?}, network has {:?}",
            tape.dims,
            p.dims()
        )));
    }
    if output_grad.len() != p.output_dim() {
        return Err(Error::Dimension(format!(
            "output gradient has {} entries, network outputs {}",
            output_grad.len(),
            p.output_dim()
        )));
    }
    if !p.same_shape(&acc.layers) {
        return Err(Error::Dimension("gradient accumulator shape mismatch".into()));
    }
    let mut delta = output_grad.to_vec();
    for k in (0..p.layers.len()).rev() {
        let layer = &p.layers[k];
        let act = p.activations[k];
        let out = &tape.values[k + 1];
        let pre = &tape.pre[k];
        for i in 0..delta.len() {
            delta[i] *= act.derivative(pre[i], out[i]);
        }
        let input = &tape.values[k];
        let g = &mut acc.layers[k];
        for (i, d) in delta.iter().enumerate() {
            g.bias[i] += d;
            if *d != 0.0 {
                let row = &mut g.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
                for (gw, x) in row.iter_mut().zip(input) {
                    *gw += d * x;
                }
            }
        }
        let mut next = vec![0.0; layer.in_dim];
        for (i, d) in delta.iter().enumerate() {
            if *d != 0.0 {
                let row = &layer.weights[i * layer.in_dim..(i + 1) * layer.in_dim];
                for (n, w) in next.iter_mut().zip(row) {
                    *n += d * w;
                }
            }
        }
        delta = next;
    }
    Ok(delta)
}

/// RMSProp accumulators and hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub accumulators: Vec<LayerTensors>,
    pub learning_rate: f64,
    pub decay: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    pub fn new(p: &MlpParams, learning_rate: f64, decay: f64, epsilon: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("invalid learning rate {learning_rate}")));
        }
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::Config(format!("decay must lie in [0, 1), got {decay}")));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::Config(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(OptimizerState {
            accumulators: p
                .layers
                .iter()
                .map(|l| LayerTensors::zeros(l.in_dim, l.out_dim))
                .collect(),
            learning_rate,
            decay,
            epsilon,
        })
    }
}

/// One RMSProp update. A non-finite gradient leaves both `p` and `s` untouched.
pub fn optimizer_step(p: &mut MlpParams, g: &GradBundle, s: &mut OptimizerState) -> Result<()> {
    if !p.same_shape(&g.layers) || !p.same_shape(&s.accumulators) {
        return Err(Error::Dimension("optimizer shapes disagree with parameters".into()));
    }
    if !g.is_finite() {
        return Err(Error::Training("non-finite gradient, step refused".into()));
    }
    let (lr, decay, eps) = (s.learning_rate, s.decay, s.epsilon);
    for ((layer, grad), acc) in p.layers.iter_mut().zip(&g.layers).zip(&mut s.accumulators) {
        for ((w, gw), a) in layer.values_mut().zip(grad.values()).zip(acc.values_mut()) {
            *a = decay * *a + (1.0 - decay) * gw * gw;
            *w -= lr * gw / (a.sqrt() + eps);
        }
    }
    Ok(())
}

/// Clamps every weight and bias into `[-c, c]`.
pub fn clip_weights(p: &mut MlpParams, c: f64) {
    for v in p.layers.iter_mut().flat_map(|l| l.values_mut()) {
        *v = v.clamp(-c, c);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
    pub max_rel_error: f64,
    /// Flat index of the worst parameter.
    pub worst_index: usize,
    pub passed: bool,
}

/// Denominator floor for the relative error, as a fraction of the largest
/// analytic gradient component. Central differences carry roundoff of about
/// `eps * |loss| / step` in absolute terms, which would otherwise swamp
/// components many orders of magnitude below the rest.
pub const GRAD_CHECK_FLOOR: f64 = 1e-4;

/// Compares `analytic` against central differences of `loss_fn` around `p`.
pub fn grad_check<F>(loss_fn: F, analytic: &GradBundle, p: &MlpParams, step: f64, tol: f64) -> GradCheckReport
where
    F: Fn(&MlpParams) -> f64,
{
    let analytic = analytic.to_flat();
    let base = p.to_flat();
    let mut probe = p.clone();
    let mut flat = base.clone();
    let mut numeric = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        flat[i] = base[i] + step;
        probe.set_flat(&flat).expect("same shape");
        let up = loss_fn(&probe);
        flat[i] = base[i] - step;
        probe.set_flat(&flat).expect("same shape");
        let down = loss_fn(&probe);
        flat[i] = base[i];
        numeric.push((up - down) / (2.0 * step));
    }
    let scale = analytic.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let floor = (GRAD_CHECK_FLOOR * scale).max(1e-10);
    let mut max_rel_error = 0.0;
    let mut worst_index = 0;
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(floor);
        if rel.is_nan() || rel > max_rel_error {
            max_rel_error = rel;
            worst_index = i;
        }
    }
    GradCheckReport {
        passed: max_rel_error < tol,
        analytic,
        numeric,
        max_rel_error,
        worst_index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(w: f64, b: f64) -> MlpParams {
        MlpParams::new(
            vec![LayerTensors {
                in_dim: 1,
                out_dim: 1,
                weights: vec![w],
                bias: vec![b],
            }],
            vec![Activation::Identity],
        )
        .unwrap()
    }

    #[test]
    fn init_shape_and_zero_bias() {
        let p = init_params(&[4, 3], &[Activation::Identity], 1).unwrap();
        assert_eq!(p.layers()[0].weights.len(), 12);
        assert_eq!(p.layers()[0].bias, vec![0.0; 3]);
        assert!(p.max_abs() <= 0.5);
        assert_eq!(p, init_params(&[4, 3], &[Activation::Identity], 1).unwrap());
    }

    #[test]
    fn init_generator_shape() {
        let acts = [Activation::Relu, Activation::Relu, Activation::Identity];
        let p = init_params(&[512, 128, 128, 512], &acts, 0).unwrap();
        assert_eq!(p.dims(), vec![512, 128, 128, 512]);
        assert_eq!(p.num_params(), 512 * 128 + 128 + 128 * 128 + 128 + 128 * 512 + 512);
    }

    #[test]
    fn init_rejects_short_dims() {
        assert!(matches!(init_params(&[4], &[], 0), Err(Error::Config(_))));
        assert!(matches!(
            init_params(&[4, 3], &[Activation::Relu, Activation::Relu], 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn identity_network_passes_input_through() {
        let mut p = MlpParams::zeros(&[3, 3, 3], &[Activation::Identity; 2]).unwrap();
        for l in p.layers_mut() {
            for i in 0..3 {
                l.weights[i * 3 + i] = 1.0;
            }
        }
        let (out, _) = forward(&p, &[1.0, -2.0, 3.5]).unwrap();
        assert_eq!(out, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn scalar_affine() {
        let (out, _) = forward(&single(2.0, 1.0), &[3.0]).unwrap();
        assert_eq!(out, vec![7.0]);
    }

    #[test]
    fn forward_rejects_wrong_length() {
        assert!(matches!(
            forward(&single(1.0, 0.0), &[1.0, 2.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn zero_output_grad_gives_zero_bundle() {
        let p = init_params(&[4, 5, 3], &[Activation::Tanh, Activation::Identity], 3).unwrap();
        let (_, tape) = forward(&p, &[0.1, 0.2, 0.3, 0.4]).unwrap();
        let g = backward(&p, &tape, &[0.0; 3]).unwrap();
        assert!(g.to_flat().iter().all(|&v| v == 0.0));
        assert!(g.input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn weight_gradient_is_outer_product() {
        let p = MlpParams::new(
            vec![LayerTensors {
                in_dim: 2,
                out_dim: 2,
                weights: vec![1.0, 0.0, 0.0, 1.0],
                bias: vec![0.0, 0.0],
            }],
            vec![Activation::Identity],
        )
        .unwrap();
        let (_, tape) = forward(&p, &[3.0, -1.0]).unwrap();
        let g = backward(&p, &tape, &[2.0, 5.0]).unwrap();
        assert_eq!(g.layers[0].weights, vec![6.0, -2.0, 15.0, -5.0]);
        assert_eq!(g.layers[0].bias, vec![2.0, 5.0]);
        assert_eq!(g.input, vec![2.0, 5.0]);
    }

    #[test]
    fn mismatched_tape_is_a_usage_error() {
        let a = init_params(&[4, 3], &[Activation::Identity], 0).unwrap();
        let b = init_params(&[4, 2], &[Activation::Identity], 0).unwrap();
        let (_, tape) = forward(&a, &[0.0; 4]).unwrap();
        assert!(matches!(backward(&b, &tape, &[1.0; 2]), Err(Error::Usage(_))));
    }

    #[test]
    fn rmsprop_scalar_step() {
        let mut p = single(0.0, 0.0);
        let mut s = OptimizerState::new(&p, 0.01, 0.0, 1e-8).unwrap();
        let mut g = GradBundle::zeros_like(&p);
        g.layers[0].weights[0] = 1.0;
        optimizer_step(&mut p, &g, &mut s).unwrap();
        assert!((p.layers()[0].weights[0] + 0.01).abs() < 1e-9);
    }

    #[test]
    fn rmsprop_zero_gradient_decays_accumulator() {
        let mut p = single(0.3, -0.2);
        let mut s = OptimizerState::new(&p, 0.01, 0.9, 1e-8).unwrap();
        s.accumulators[0].weights[0] = 4.0;
        let before = p.clone();
        let g = GradBundle::zeros_like(&p);
        optimizer_step(&mut p, &g, &mut s).unwrap();
        assert_eq!(p, before);
        assert!((s.accumulators[0].weights[0] - 3.6).abs() < 1e-15);
    }

    #[test]
    fn rmsprop_step_converges_to_learning_rate() {
        let mut p = single(0.0, 0.0);
        let mut s = OptimizerState::new(&p, 5e-4, 0.9, 1e-8).unwrap();
        let mut g = GradBundle::zeros_like(&p);
        g.layers[0].weights[0] = 0.37;
        let mut last = 0.0;
        let mut step = 0.0;
        for _ in 0..500 {
            optimizer_step(&mut p, &g, &mut s).unwrap();
            let w = p.layers()[0].weights[0];
            step = last - w;
            last = w;
        }
        assert!((step - 5e-4).abs() < 1e-9, "{step}");
    }

    #[test]
    fn rmsprop_refuses_non_finite() {
        let mut p = single(1.0, 1.0);
        let mut s = OptimizerState::new(&p, 0.1, 0.9, 1e-8).unwrap();
        let mut g = GradBundle::zeros_like(&p);
        g.layers[0].bias[0] = f64::NAN;
        let before = (p.clone(), s.clone());
        assert!(matches!(optimizer_step(&mut p, &g, &mut s), Err(Error::Training(_))));
        assert_eq!((p, s), before);
    }

    #[test]
    fn clipping() {
        let mut p = single(5.0, -0.003);
        clip_weights(&mut p, 0.01);
        assert_eq!(p.layers()[0].weights[0], 0.01);
        assert_eq!(p.layers()[0].bias[0], -0.003);
        let again = {
            let mut q = p.clone();
            clip_weights(&mut q, 0.01);
            q
        };
        assert_eq!(again, p);
    }

    #[test]
    fn grad_check_quadratic() {
        let p = init_params(&[3, 2], &[Activation::Identity], 9).unwrap();
        let loss = |q: &MlpParams| q.to_flat().iter().map(|v| v * v / 2.0).sum::<f64>();
        let mut analytic = GradBundle::zeros_like(&p);
        analytic.layers = p.layers().to_vec();
        let report = grad_check(loss, &analytic, &p, 1e-6, 1e-8);
        assert!(report.passed, "{}", report.max_rel_error);
    }
}
