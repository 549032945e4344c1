//! Fixed-architecture MLP with exact analytic gradients.
//!
//! The network is a stack of ReLU hidden layers followed by a linear logits
//! layer. The "hidden vector" `h(x)` that the detector inspects is the
//! post-activation output of the *last* hidden layer. Gradients are computed
//! by hand-written backprop with respect to both parameters (training) and
//! input pixels (attacks); everything is `f64` so finite-difference checks
//! hold at tight tolerances.
//!
//! Weight layout follows the row-vector convention: a layer mapping `d_in`
//! to `d_out` stores its weight as a `d_in x d_out` tensor and computes
//! `z = x W + b`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor2D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    /// Widths of the hidden layers; the last entry is the dimension of `h`.
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
}

impl Architecture {
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, num_classes: usize) -> Self {
        Architecture {
            input_dim,
            hidden_dims,
            num_classes,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Config("input_dim must be >= 1".into()));
        }
        if self.hidden_dims.is_empty() {
            return Err(Error::Config(
                "at least one hidden layer is required (it defines h)".into(),
            ));
        }
        if self.hidden_dims.iter().any(|&d| d == 0) {
            return Err(Error::Config("hidden dims must all be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        Ok(())
    }

    /// Dimension of the hidden vector `h(x)`.
    pub fn hidden_dim(&self) -> usize {
        *self.hidden_dims.last().expect("validated non-empty")
    }

    /// `(in, out)` for every layer, hidden layers then logits.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &d in &self.hidden_dims {
            dims.push((prev, d));
            prev = d;
        }
        dims.push((prev, self.num_classes));
        dims
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `d_in x d_out`.
    pub weight: Tensor2D,
    /// `1 x d_out`.
    pub bias: Tensor2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub arch: Architecture,
    pub layers: Vec<Layer>,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let dims = self.arch.layer_dims();
        if self.layers.len() != dims.len() {
            return Err(Error::Shape(format!(
                "expected {} layers, got {}",
                dims.len(),
                self.layers.len()
            )));
        }
        for (i, (layer, (d_in, d_out))) in self.layers.iter().zip(dims).enumerate() {
            if layer.weight.rows() != d_in || layer.weight.cols() != d_out {
                return Err(Error::Shape(format!(
                    "layer {i} weight is {}x{}, expected {d_in}x{d_out}",
                    layer.weight.rows(),
                    layer.weight.cols()
                )));
            }
            if layer.bias.len() != d_out {
                return Err(Error::Shape(format!(
                    "layer {i} bias has {} entries, expected {d_out}",
                    layer.bias.len()
                )));
            }
        }
        Ok(())
    }

    pub fn bit_eq(&self, other: &ModelParams) -> bool {
        self.arch == other.arch
            && self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.bit_eq(&b.weight) && a.bias.bit_eq(&b.bias))
    }
}

/// Per-layer forward intermediates.
///
/// `pre` / `post` hold the hidden layers' pre- and post-activations in order;
/// `hidden` is the last post-activation (the vector the detector sees) and
/// `logits` the final linear output.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub pre: Vec<Tensor2D>,
    pub post: Vec<Tensor2D>,
    pub hidden: Tensor2D,
    pub logits: Tensor2D,
}

impl ForwardTrace {
    pub fn predicted_class(&self) -> usize {
        argmax(self.logits.values())
    }
}

#[derive(Debug, Clone)]
pub struct LayerGrads {
    pub weight: Tensor2D,
    pub bias: Tensor2D,
}

#[derive(Debug, Clone)]
pub struct ParamGrads {
    pub layers: Vec<LayerGrads>,
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Initialize a model deterministically from `(arch, seed)`.
///
/// Weights are zero-mean gaussian with standard deviation `1/sqrt(fan_in)`;
/// biases start at zero.
pub fn init_model(arch: &Architecture, seed: u64) -> Result<ModelParams> {
    arch.validate()?;
    let mut rng = seed::rng(seed);
    let mut layers = Vec::new();
    for (d_in, d_out) in arch.layer_dims() {
        let std = 1.0 / (d_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("std is positive and finite");
        let values: Vec<f64> = (0..d_in * d_out).map(|_| normal.sample(&mut rng)).collect();
        layers.push(Layer {
            weight: Tensor2D::new(d_in, d_out, values)?,
            bias: Tensor2D::zeros(1, d_out),
        });
    }
    Ok(ModelParams {
        arch: arch.clone(),
        layers,
    })
}

fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

fn relu_grad(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// `x W + b` for a row vector `x`.
fn affine(x: &[f64], layer: &Layer) -> Vec<f64> {
    let d_in = layer.weight.rows();
    let d_out = layer.weight.cols();
    debug_assert_eq!(x.len(), d_in);
    let mut out = layer.bias.values().to_vec();
    let w = layer.weight.values();
    for i in 0..d_in {
        let xi = x[i];
        if xi == 0.0 {
            continue;
        }
        let row = &w[i * d_out..(i + 1) * d_out];
        for j in 0..d_out {
            out[j] += xi * row[j];
        }
    }
    out
}

/// Pure forward pass; accepts any tensor whose element count matches
/// `input_dim` (images stay `side x side`, the model flattens row-major).
pub fn forward(params: &ModelParams, x: &Tensor2D) -> Result<ForwardTrace> {
    if x.len() != params.arch.input_dim {
        return Err(Error::Shape(format!(
            "input has {} elements, model expects {}",
            x.len(),
            params.arch.input_dim
        )));
    }
    let n_hidden = params.arch.hidden_dims.len();
    let mut pre = Vec::with_capacity(n_hidden);
    let mut post = Vec::with_capacity(n_hidden);
    let mut a: Vec<f64> = x.values().to_vec();
    for layer in &params.layers[..n_hidden] {
        let z = affine(&a, layer);
        a = z.iter().map(|&v| relu(v)).collect();
        pre.push(Tensor2D::row(z)?);
        post.push(Tensor2D::row(a.clone())?);
    }
    let logits = affine(&a, &params.layers[n_hidden]);
    let hidden = post.last().expect("at least one hidden layer").clone();
    Ok(ForwardTrace {
        pre,
        post,
        hidden,
        logits: Tensor2D::row(logits)?,
    })
}

/// Softmax probabilities with max subtraction.
pub fn softmax(logits: &Tensor2D) -> Vec<f64> {
    let vals = logits.values();
    let m = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let exps: Vec<f64> = vals.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// `-log softmax(logits)[y]`, computed as `logsumexp(logits) - logits[y]`.
pub fn xent_loss(logits: &Tensor2D, y: usize) -> Result<f64> {
    let vals = logits.values();
    if y >= vals.len() {
        return Err(Error::Index(format!(
            "label {y} out of range for {} classes",
            vals.len()
        )));
    }
    let m = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let lse = m + vals.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
    Ok(lse - vals[y])
}

/// Backprop state shared by the gradient routines: given `d loss / d a_last`
/// at the top of the hidden stack, walk back to the input, optionally
/// accumulating parameter gradients.
fn backprop_hidden_stack(
    params: &ModelParams,
    trace: &ForwardTrace,
    input: &[f64],
    mut d_post: Vec<f64>,
    mut grads: Option<&mut ParamGrads>,
    scale: f64,
) -> Vec<f64> {
    let n_hidden = params.arch.hidden_dims.len();
    for l in (0..n_hidden).rev() {
        let layer = &params.layers[l];
        let z = trace.pre[l].values();
        let d_z: Vec<f64> = d_post
            .iter()
            .zip(z)
            .map(|(&g, &zv)| g * relu_grad(zv))
            .collect();
        let a_prev: &[f64] = if l == 0 {
            input
        } else {
            trace.post[l - 1].values()
        };
        if let Some(g) = grads.as_deref_mut() {
            accumulate_layer(&mut g.layers[l], a_prev, &d_z, scale);
        }
        d_post = matvec_transposed(layer, &d_z);
    }
    d_post
}

/// `d_z W^T`: gradient with respect to the layer input.
fn matvec_transposed(layer: &Layer, d_z: &[f64]) -> Vec<f64> {
    let d_in = layer.weight.rows();
    let d_out = layer.weight.cols();
    let w = layer.weight.values();
    let mut out = vec![0.0; d_in];
    for i in 0..d_in {
        let row = &w[i * d_out..(i + 1) * d_out];
        let mut acc = 0.0;
        for j in 0..d_out {
            acc += d_z[j] * row[j];
        }
        out[i] = acc;
    }
    out
}

fn accumulate_layer(grads: &mut LayerGrads, a_prev: &[f64], d_z: &[f64], scale: f64) {
    let d_out = d_z.len();
    let w = grads.weight.values_mut();
    for (i, &ai) in a_prev.iter().enumerate() {
        if ai == 0.0 {
            continue;
        }
        let row = &mut w[i * d_out..(i + 1) * d_out];
        for j in 0..d_out {
            row[j] += scale * ai * d_z[j];
        }
    }
    let b = grads.bias.values_mut();
    for j in 0..d_out {
        b[j] += scale * d_z[j];
    }
}

fn zero_grads(params: &ModelParams) -> ParamGrads {
    ParamGrads {
        layers: params
            .layers
            .iter()
            .map(|l| LayerGrads {
                weight: Tensor2D::zeros(l.weight.rows(), l.weight.cols()),
                bias: Tensor2D::zeros(1, l.bias.len()),
            })
            .collect(),
    }
}

/// Exact gradient of mean cross-entropy over a batch with respect to every
/// weight and bias.
pub fn grad_params(params: &ModelParams, batch: &[(&Tensor2D, usize)]) -> Result<ParamGrads> {
    grad_params_with_loss(params, batch).map(|(g, _)| g)
}

/// As [`grad_params`], also returning the mean cross-entropy of the batch
/// (training uses it to detect divergence without a second forward pass).
pub fn grad_params_with_loss(
    params: &ModelParams,
    batch: &[(&Tensor2D, usize)],
) -> Result<(ParamGrads, f64)> {
    if batch.is_empty() {
        return Err(Error::Config("gradient over an empty batch".into()));
    }
    let mut grads = zero_grads(params);
    let scale = 1.0 / batch.len() as f64;
    let n_hidden = params.arch.hidden_dims.len();
    let mut loss_sum = 0.0;
    for &(x, y) in batch {
        let trace = forward(params, x)?;
        if y >= params.arch.num_classes {
            return Err(Error::Index(format!(
                "label {y} out of range for {} classes",
                params.arch.num_classes
            )));
        }
        loss_sum += xent_loss(&trace.logits, y)?;
        // d xent / d logits = softmax - onehot(y)
        let mut d_logits = softmax(&trace.logits);
        d_logits[y] -= 1.0;
        let logits_layer = &params.layers[n_hidden];
        accumulate_layer(
            &mut grads.layers[n_hidden],
            trace.hidden.values(),
            &d_logits,
            scale,
        );
        let d_hidden = matvec_transposed(logits_layer, &d_logits);
        backprop_hidden_stack(
            params,
            &trace,
            x.values(),
            d_hidden,
            Some(&mut grads),
            scale,
        );
    }
    Ok((grads, loss_sum * scale))
}

/// Exact gradient of `xent(f(x), y)` with respect to the input pixels.
/// Returned with the same shape as `x`.
pub fn grad_input_xent(params: &ModelParams, x: &Tensor2D, y: usize) -> Result<Tensor2D> {
    if y >= params.arch.num_classes {
        return Err(Error::Index(format!(
            "label {y} out of range for {} classes",
            params.arch.num_classes
        )));
    }
    let trace = forward(params, x)?;
    let n_hidden = params.arch.hidden_dims.len();
    let mut d_logits = softmax(&trace.logits);
    d_logits[y] -= 1.0;
    let d_hidden = matvec_transposed(&params.layers[n_hidden], &d_logits);
    let d_input = backprop_hidden_stack(params, &trace, x.values(), d_hidden, None, 1.0);
    Tensor2D::new(x.rows(), x.cols(), d_input)
}

/// Gradient of `cos(h(x), phi)` with respect to `h`.
fn d_cosine_d_hidden(hidden: &[f64], phi: &[f64]) -> Result<Vec<f64>> {
    let nh: f64 = hidden.iter().map(|v| v * v).sum::<f64>().sqrt();
    let np: f64 = phi.iter().map(|v| v * v).sum::<f64>().sqrt();
    if np == 0.0 {
        return Err(Error::DegenerateSignature("phi is the zero vector".into()));
    }
    if nh == 0.0 {
        return Err(Error::DegenerateSimilarity(
            "hidden vector is zero; cosine gradient undefined".into(),
        ));
    }
    let dot: f64 = hidden.iter().zip(phi).map(|(a, b)| a * b).sum();
    Ok(hidden
        .iter()
        .zip(phi)
        .map(|(&h, &p)| p / (nh * np) - dot * h / (nh * nh * nh * np))
        .collect())
}

/// Exact gradient of the detection score `sim(h(x), phi)` with respect to
/// the input pixels.
pub fn grad_input_detection(params: &ModelParams, x: &Tensor2D, phi: &Tensor2D) -> Result<Tensor2D> {
    let trace = forward(params, x)?;
    if phi.len() != trace.hidden.len() {
        return Err(Error::Shape(format!(
            "phi has {} entries, hidden vector has {}",
            phi.len(),
            trace.hidden.len()
        )));
    }
    let d_hidden = d_cosine_d_hidden(trace.hidden.values(), phi.values())?;
    let d_input = backprop_hidden_stack(params, &trace, x.values(), d_hidden, None, 1.0);
    Tensor2D::new(x.rows(), x.cols(), d_input)
}

/// `params - lr * grads`, element-wise.
pub fn sgd_step(params: &ModelParams, grads: &ParamGrads, lr: f64) -> Result<ModelParams> {
    if !(lr >= 0.0) || !lr.is_finite() {
        return Err(Error::Config(format!("learning rate {lr} must be finite and >= 0")));
    }
    if grads.layers.len() != params.layers.len() {
        return Err(Error::Shape("gradient/parameter layer count mismatch".into()));
    }
    let mut out = params.clone();
    for (layer, g) in out.layers.iter_mut().zip(&grads.layers) {
        g.weight.check_finite().map_err(|_| {
            Error::Numeric("non-finite weight gradient in sgd_step".into())
        })?;
        g.bias
            .check_finite()
            .map_err(|_| Error::Numeric("non-finite bias gradient in sgd_step".into()))?;
        layer.weight = layer.weight.sub(&g.weight.scale(lr))?;
        layer.bias = layer.bias.sub(&g.bias.scale(lr))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn tiny_arch() -> Architecture {
        Architecture::new(3, vec![4], 2)
    }

    #[test]
    fn init_is_deterministic() {
        let arch = tiny_arch();
        let a = init_model(&arch, 11).unwrap();
        let b = init_model(&arch, 11).unwrap();
        assert!(a.bit_eq(&b));
    }

    #[test]
    fn init_shapes_chain() {
        // hidden [4], 2 classes, input 3 -> (3x4), (4x2) with biases 4 and 2
        let m = init_model(&tiny_arch(), 0).unwrap();
        assert_eq!(m.layers.len(), 2);
        assert_eq!((m.layers[0].weight.rows(), m.layers[0].weight.cols()), (3, 4));
        assert_eq!((m.layers[1].weight.rows(), m.layers[1].weight.cols()), (4, 2));
        assert_eq!(m.layers[0].bias.len(), 4);
        assert_eq!(m.layers[1].bias.len(), 2);
        m.validate().unwrap();
    }

    #[test]
    fn init_seed_sensitivity() {
        let a = init_model(&tiny_arch(), 1).unwrap();
        let b = init_model(&tiny_arch(), 2).unwrap();
        assert!(!a.bit_eq(&b));
    }

    #[test]
    fn init_rejects_zero_dims() {
        let arch = Architecture::new(0, vec![4], 2);
        assert!(matches!(init_model(&arch, 0), Err(Error::Config(_))));
        let arch = Architecture::new(3, vec![], 2);
        assert!(matches!(init_model(&arch, 0), Err(Error::Config(_))));
    }

    #[test]
    fn forward_zero_params_zero_logits() {
        let mut m = init_model(&tiny_arch(), 3).unwrap();
        for l in &mut m.layers {
            l.weight = Tensor2D::zeros(l.weight.rows(), l.weight.cols());
            l.bias = Tensor2D::zeros(1, l.bias.len());
        }
        let x = Tensor2D::row(vec![0.3, -0.1, 0.7]).unwrap();
        let t = forward(&m, &x).unwrap();
        assert!(t.logits.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn relu_clamps_negative() {
        assert_eq!(relu(-1.0), 0.0);
        assert_eq!(relu(2.0), 2.0);
    }

    #[test]
    fn forward_hand_computed_single_hidden_unit() {
        // x = (1, 0.5), W1 = [[0.3], [-0.2]], b1 = [0.1] -> h = 0.3
        // W2 = [[0.5, -1.0]], b2 = [0.05, 0.2] -> logits (0.2, -0.1)
        let arch = Architecture::new(2, vec![1], 2);
        let m = ModelParams {
            arch,
            layers: vec![
                Layer {
                    weight: Tensor2D::new(2, 1, vec![0.3, -0.2]).unwrap(),
                    bias: Tensor2D::row(vec![0.1]).unwrap(),
                },
                Layer {
                    weight: Tensor2D::new(1, 2, vec![0.5, -1.0]).unwrap(),
                    bias: Tensor2D::row(vec![0.05, 0.2]).unwrap(),
                },
            ],
        };
        let x = Tensor2D::row(vec![1.0, 0.5]).unwrap();
        let t = forward(&m, &x).unwrap();
        assert!((t.hidden.values()[0] - 0.3).abs() < 1e-15);
        assert!((t.logits.values()[0] - 0.2).abs() < 1e-15);
        assert!((t.logits.values()[1] + 0.1).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let m = init_model(&tiny_arch(), 0).unwrap();
        let x = Tensor2D::row(vec![1.0, 2.0]).unwrap();
        assert!(matches!(forward(&m, &x), Err(Error::Shape(_))));
    }

    #[test]
    fn forward_is_pure_and_deterministic() {
        let m = init_model(&tiny_arch(), 5).unwrap();
        let x = Tensor2D::row(vec![0.2, 0.8, -0.4]).unwrap();
        let a = forward(&m, &x).unwrap();
        let b = forward(&m, &x).unwrap();
        assert!(a.logits.bit_eq(&b.logits));
        assert!(a.hidden.bit_eq(&b.hidden));
    }

    #[test]
    fn xent_uniform_is_log_c() {
        let logits = Tensor2D::row(vec![0.7, 0.7, 0.7]).unwrap();
        let loss = xent_loss(&logits, 1).unwrap();
        assert!((loss - 1.0986122886681098).abs() < 1e-12);
    }

    #[test]
    fn xent_is_overflow_safe() {
        let logits = Tensor2D::row(vec![1000.0, 0.0]).unwrap();
        let loss = xent_loss(&logits, 0).unwrap();
        assert!(loss.is_finite());
        assert!(loss.abs() < 1e-12);
    }

    #[test]
    fn xent_known_value() {
        let logits = Tensor2D::row(vec![1.0, 2.0, 3.0]).unwrap();
        let loss = xent_loss(&logits, 2).unwrap();
        assert!((loss - 0.4076059644443806).abs() < 1e-12);
    }

    #[test]
    fn xent_rejects_out_of_range_label() {
        let logits = Tensor2D::row(vec![0.0, 1.0]).unwrap();
        assert!(matches!(xent_loss(&logits, 2), Err(Error::Index(_))));
    }

    #[test]
    fn softmax_sums_to_one() {
        for seed in 0..8u64 {
            let mut rng = seed::rng(seed);
            let vals: Vec<f64> = (0..6).map(|_| rng.random_range(-50.0..50.0)).collect();
            let p = softmax(&Tensor2D::row(vals).unwrap());
            let s: f64 = p.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_params_mean_invariance() {
        let m = init_model(&tiny_arch(), 9).unwrap();
        let x = Tensor2D::row(vec![0.5, 0.1, 0.9]).unwrap();
        let single = grad_params(&m, &[(&x, 1)]).unwrap();
        let doubled = grad_params(&m, &[(&x, 1), (&x, 1)]).unwrap();
        for (a, b) in single.layers.iter().zip(&doubled.layers) {
            assert!(a.weight.max_abs_diff(&b.weight).unwrap() < 1e-15);
            assert!(a.bias.max_abs_diff(&b.bias).unwrap() < 1e-15);
        }
    }

    #[test]
    fn grad_params_zero_input_zero_first_layer() {
        let m = init_model(&tiny_arch(), 13).unwrap();
        let x = Tensor2D::row(vec![0.0, 0.0, 0.0]).unwrap();
        let g = grad_params(&m, &[(&x, 0)]).unwrap();
        assert!(g.layers[0].weight.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn grad_params_rejects_empty_batch() {
        let m = init_model(&tiny_arch(), 0).unwrap();
        assert!(matches!(grad_params(&m, &[]), Err(Error::Config(_))));
    }

    #[test]
    fn grad_input_shapes_match_input() {
        let m = init_model(&tiny_arch(), 21).unwrap();
        let x = Tensor2D::row(vec![0.5, 0.2, 0.7]).unwrap();
        let g = grad_input_xent(&m, &x, 0).unwrap();
        assert_eq!(g.len(), 3);
        let phi = Tensor2D::row(vec![1.0, 0.5, -0.2, 0.1]).unwrap();
        let gd = grad_input_detection(&m, &x, &phi).unwrap();
        assert_eq!(gd.len(), 3);
    }

    #[test]
    fn grad_input_xent_linear_region_closed_form() {
        // With all ReLUs active the network is affine: logits = x M + c,
        // M = W1 W2, so d xent / d x = (softmax - onehot) M^T.
        let arch = Architecture::new(2, vec![2], 2);
        let m = ModelParams {
            arch,
            layers: vec![
                Layer {
                    weight: Tensor2D::new(2, 2, vec![0.4, -0.3, 0.2, 0.5]).unwrap(),
                    bias: Tensor2D::row(vec![5.0, 5.0]).unwrap(), // keeps ReLU active
                },
                Layer {
                    weight: Tensor2D::new(2, 2, vec![0.7, -0.1, -0.6, 0.8]).unwrap(),
                    bias: Tensor2D::row(vec![0.0, 0.0]).unwrap(),
                },
            ],
        };
        let x = Tensor2D::row(vec![0.3, -0.2]).unwrap();
        let t = forward(&m, &x).unwrap();
        assert!(t.pre[0].values().iter().all(|&z| z > 0.0));
        let g = grad_input_xent(&m, &x, 0).unwrap();

        let mut d = softmax(&t.logits);
        d[0] -= 1.0;
        // M[i][k] = sum_j W1[i][j] W2[j][k]
        let w1 = &m.layers[0].weight;
        let w2 = &m.layers[1].weight;
        for i in 0..2 {
            let mut expect = 0.0;
            for k in 0..2 {
                let mut mik = 0.0;
                for j in 0..2 {
                    mik += w1.get(i, j) * w2.get(j, k);
                }
                expect += d[k] * mik;
            }
            assert!((g.values()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn grad_detection_scale_invariant_in_phi() {
        let m = init_model(&tiny_arch(), 33).unwrap();
        let x = Tensor2D::row(vec![0.9, 0.4, 0.6]).unwrap();
        let phi = Tensor2D::row(vec![0.3, -0.1, 0.8, 0.2]).unwrap();
        let a = grad_input_detection(&m, &x, &phi).unwrap();
        let b = grad_input_detection(&m, &x, &phi.scale(10.0)).unwrap();
        assert!(a.max_abs_diff(&b).unwrap() < 1e-12);
    }

    #[test]
    fn grad_detection_zero_hidden_errors() {
        // Large negative biases force every hidden unit to zero.
        let arch = Architecture::new(2, vec![2], 2);
        let mut m = init_model(&arch, 0).unwrap();
        m.layers[0].bias = Tensor2D::row(vec![-100.0, -100.0]).unwrap();
        let x = Tensor2D::row(vec![0.1, 0.1]).unwrap();
        let phi = Tensor2D::row(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            grad_input_detection(&m, &x, &phi),
            Err(Error::DegenerateSimilarity(_))
        ));
    }

    #[test]
    fn sgd_step_arithmetic() {
        // single weight 1, grad 2, lr 0.1 -> 0.8
        let arch = Architecture::new(1, vec![1], 2);
        let mut m = init_model(&arch, 0).unwrap();
        m.layers[0].weight = Tensor2D::new(1, 1, vec![1.0]).unwrap();
        let mut g = super::zero_grads(&m);
        g.layers[0].weight.values_mut()[0] = 2.0;
        let out = sgd_step(&m, &g, 0.1).unwrap();
        assert!((out.layers[0].weight.values()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_step_zero_lr_is_identity() {
        let m = init_model(&tiny_arch(), 4).unwrap();
        let x = Tensor2D::row(vec![0.2, 0.4, 0.6]).unwrap();
        let g = grad_params(&m, &[(&x, 1)]).unwrap();
        let out = sgd_step(&m, &g, 0.0).unwrap();
        assert!(out.bit_eq(&m));
    }

    #[test]
    fn sgd_steps_compose_linearly() {
        let m = init_model(&tiny_arch(), 4).unwrap();
        let x = Tensor2D::row(vec![0.2, 0.4, 0.6]).unwrap();
        let g = grad_params(&m, &[(&x, 1)]).unwrap();
        let twice = sgd_step(&sgd_step(&m, &g, 0.05).unwrap(), &g, 0.05).unwrap();
        let once = sgd_step(&m, &g, 0.1).unwrap();
        for (a, b) in twice.layers.iter().zip(&once.layers) {
            assert!(a.weight.max_abs_diff(&b.weight).unwrap() < 1e-14);
        }
    }

    #[test]
    fn sgd_step_rejects_non_finite_grads() {
        let m = init_model(&tiny_arch(), 4).unwrap();
        let mut g = super::zero_grads(&m);
        g.layers[0].weight.values_mut()[0] = f64::INFINITY;
        assert!(matches!(sgd_step(&m, &g, 0.1), Err(Error::Numeric(_))));
    }

    #[test]
    fn hidden_matches_last_post_activation() {
        let arch = Architecture::new(3, vec![5, 4], 3);
        let m = init_model(&arch, 77).unwrap();
        let x = Tensor2D::row(vec![0.1, 0.9, 0.5]).unwrap();
        let t = forward(&m, &x).unwrap();
        assert!(t.hidden.bit_eq(&t.post[1]));
        assert_eq!(t.hidden.len(), 4);
        assert_eq!(t.logits.len(), 3);
    }
}
