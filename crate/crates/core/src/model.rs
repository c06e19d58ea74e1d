//! Minimal differentiable classifier runtime.
//!
//! Supports dense, conv2d (stride 1, no padding), relu, and flatten layers
//! over 64-bit floats. Public interfaces speak pixel units [0, 255]; the
//! engine divides by 255 before the first layer and that factor is part of
//! the differentiated chain, so `input_gradient` is the exact gradient with
//! respect to raw pixels.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{ImageTensor, Tensor};

const INPUT_SCALE: f64 = 1.0 / 255.0;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    /// Fully connected: `weights` is [rows, cols] row-major, `bias` has
    /// length rows. Accepts any incoming shape whose element count is cols.
    Dense {
        weights: Tensor,
        bias: Vec<f64>,
    },
    /// 2-D convolution, stride 1, no padding. `kernels` is
    /// [out_c, in_c, kh, kw]; `bias` has length out_c.
    Conv2d {
        kernels: Tensor,
        bias: Vec<f64>,
    },
    Relu,
    Flatten,
}

impl Layer {
    pub fn dense(weights: Tensor, bias: Vec<f64>) -> Result<Self> {
        if weights.shape.len() != 2 {
            return Err(Error::rejected("dense weights must be 2-D [rows, cols]"));
        }
        if weights.shape[0] != bias.len() {
            return Err(Error::rejected(format!(
                "dense bias length {} does not match weight rows {}",
                bias.len(),
                weights.shape[0]
            )));
        }
        Ok(Layer::Dense { weights, bias })
    }

    pub fn conv2d(kernels: Tensor, bias: Vec<f64>) -> Result<Self> {
        if kernels.shape.len() != 4 {
            return Err(Error::rejected(
                "conv2d kernels must be 4-D [out_c, in_c, kh, kw]",
            ));
        }
        if kernels.shape[0] != bias.len() {
            return Err(Error::rejected(format!(
                "conv2d bias length {} does not match output channels {}",
                bias.len(),
                kernels.shape[0]
            )));
        }
        Ok(Layer::Conv2d { kernels, bias })
    }

    fn name(&self) -> &'static str {
        match self {
            Layer::Dense { .. } => "dense",
            Layer::Conv2d { .. } => "conv2d",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
        }
    }

    /// Shape produced when fed `input` shaped data, or an error when the
    /// chain is inconsistent.
    fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        match self {
            Layer::Dense { weights, .. } => {
                let incoming: usize = input.iter().product();
                if incoming != weights.shape[1] {
                    return Err(Error::rejected(format!(
                        "dense expects {} incoming values, got shape {:?} ({} values)",
                        weights.shape[1], input, incoming
                    )));
                }
                Ok(vec![weights.shape[0]])
            }
            Layer::Conv2d { kernels, .. } => {
                if input.len() != 3 {
                    return Err(Error::rejected(format!(
                        "conv2d expects 3-D input, got shape {input:?}"
                    )));
                }
                let (in_c, kh, kw) = (kernels.shape[1], kernels.shape[2], kernels.shape[3]);
                let (c, h, w) = (input[0], input[1], input[2]);
                if c != in_c {
                    return Err(Error::rejected(format!(
                        "conv2d expects {in_c} input channels, got {c}"
                    )));
                }
                if h < kh || w < kw {
                    return Err(Error::rejected(format!(
                        "conv2d kernel {kh}x{kw} larger than input {h}x{w}"
                    )));
                }
                Ok(vec![kernels.shape[0], h - kh + 1, w - kw + 1])
            }
            Layer::Relu => Ok(input.to_vec()),
            Layer::Flatten => Ok(vec![input.iter().product()]),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    layers: Vec<Layer>,
    input_shape: (usize, usize, usize),
    num_classes: usize,
}

impl Model {
    /// Validates the layer shape chain from `input_shape` to a logits vector
    /// of length `num_classes`.
    pub fn new(
        layers: Vec<Layer>,
        input_shape: (usize, usize, usize),
        num_classes: usize,
    ) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::rejected("num_classes must be positive"));
        }
        let (c, h, w) = input_shape;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::rejected("input shape dimensions must be positive"));
        }
        let mut shape = vec![c, h, w];
        for (i, layer) in layers.iter().enumerate() {
            shape = layer
                .output_shape(&shape)
                .map_err(|e| Error::rejected(format!("layer {i} ({}): {e}", layer.name())))?;
        }
        let out: usize = shape.iter().product();
        if out != num_classes {
            return Err(Error::rejected(format!(
                "layer chain produces {out} outputs, expected {num_classes} classes"
            )));
        }
        Ok(Self {
            layers,
            input_shape,
            num_classes,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    /// Mutable layer access for the trainer. Shape-preserving updates only.
    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    fn check_input(&self, image: &ImageTensor) -> Result<()> {
        if image.shape() != self.input_shape {
            return Err(Error::rejected(format!(
                "image shape {:?} does not match model input shape {:?}",
                image.shape(),
                self.input_shape
            )));
        }
        Ok(())
    }

    /// Logits for `image`. Pixel values are taken as-is (the internal 1/255
    /// rescale is applied before the first layer).
    pub fn forward(&self, image: &ImageTensor) -> Result<Vec<f64>> {
        self.check_input(image)?;
        let cache = self.forward_cached(image);
        Ok(cache.last().unwrap().data.clone())
    }

    /// Argmax class; ties break to the lowest index.
    pub fn predict(&self, image: &ImageTensor) -> Result<usize> {
        Ok(argmax(&self.forward(image)?))
    }

    /// Exact reverse-mode gradient of `ce_loss(forward(image), label)` with
    /// respect to the image pixels.
    pub fn input_gradient(&self, image: &ImageTensor, label: usize) -> Result<ImageTensor> {
        self.check_input(image)?;
        if label >= self.num_classes {
            return Err(Error::rejected(format!(
                "label {label} out of range for {} classes",
                self.num_classes
            )));
        }
        let cache = self.forward_cached(image);
        let logits = &cache.last().unwrap().data;
        let grad_logits = softmax_minus_onehot(logits, label);
        let grad = self.backward(&cache, grad_logits, None);
        let (c, h, w) = self.input_shape;
        // grad is with respect to the scaled input; chain through the 1/255.
        let pixels = grad.data.iter().map(|g| g * INPUT_SCALE).collect();
        ImageTensor::new(c, h, w, pixels)
    }

    /// All intermediate activations: entry 0 is the scaled input, entry i+1
    /// the output of layer i.
    pub(crate) fn forward_cached(&self, image: &ImageTensor) -> Vec<Tensor> {
        let (c, h, w) = self.input_shape;
        let scaled = Tensor {
            shape: vec![c, h, w],
            data: image.pixels().iter().map(|p| p * INPUT_SCALE).collect(),
        };
        let mut cache = Vec::with_capacity(self.layers.len() + 1);
        cache.push(scaled);
        for layer in &self.layers {
            let out = layer_forward(layer, cache.last().unwrap());
            cache.push(out);
        }
        cache
    }

    /// Backpropagate `grad_out` through the layer stack. When `param_grads`
    /// is given, per-layer parameter gradients are accumulated into it
    /// (entries must be pre-sized to match the layers). Returns the gradient
    /// with respect to the scaled input.
    pub(crate) fn backward(
        &self,
        cache: &[Tensor],
        grad_out: Vec<f64>,
        mut param_grads: Option<&mut [ParamGrad]>,
    ) -> Tensor {
        let mut grad = Tensor {
            shape: cache.last().unwrap().shape.clone(),
            data: grad_out,
        };
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache[i];
            let slot = param_grads.as_mut().map(|g| &mut g[i]);
            grad = layer_backward(layer, input, &grad, slot);
        }
        grad
    }
}

/// Per-layer parameter gradient accumulator used by training.
#[derive(Debug, Clone)]
pub(crate) enum ParamGrad {
    Dense { dw: Vec<f64>, db: Vec<f64> },
    Conv2d { dk: Vec<f64>, db: Vec<f64> },
    None,
}

impl ParamGrad {
    pub(crate) fn for_layer(layer: &Layer) -> ParamGrad {
        match layer {
            Layer::Dense { weights, bias } => ParamGrad::Dense {
                dw: vec![0.0; weights.len()],
                db: vec![0.0; bias.len()],
            },
            Layer::Conv2d { kernels, bias } => ParamGrad::Conv2d {
                dk: vec![0.0; kernels.len()],
                db: vec![0.0; bias.len()],
            },
            _ => ParamGrad::None,
        }
    }
}

fn layer_forward(layer: &Layer, input: &Tensor) -> Tensor {
    match layer {
        Layer::Dense { weights, bias } => {
            let rows = weights.shape[0];
            let cols = weights.shape[1];
            let mut out = vec![0.0; rows];
            for r in 0..rows {
                let row = &weights.data[r * cols..(r + 1) * cols];
                let mut acc = bias[r];
                for (wv, xv) in row.iter().zip(&input.data) {
                    acc += wv * xv;
                }
                out[r] = acc;
            }
            Tensor {
                shape: vec![rows],
                data: out,
            }
        }
        Layer::Conv2d { kernels, bias } => {
            let [out_c, in_c, kh, kw] = kernels.shape[..] else {
                unreachable!()
            };
            let (h, w) = (input.shape[1], input.shape[2]);
            let (oh, ow) = (h - kh + 1, w - kw + 1);
            let mut out = vec![0.0; out_c * oh * ow];
            for oc in 0..out_c {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = bias[oc];
                        for ic in 0..in_c {
                            for ky in 0..kh {
                                let in_row = ic * h * w + (y + ky) * w + x;
                                let k_row = ((oc * in_c + ic) * kh + ky) * kw;
                                for kx in 0..kw {
                                    acc += kernels.data[k_row + kx] * input.data[in_row + kx];
                                }
                            }
                        }
                        out[(oc * oh + y) * ow + x] = acc;
                    }
                }
            }
            Tensor {
                shape: vec![out_c, oh, ow],
                data: out,
            }
        }
        Layer::Relu => Tensor {
            shape: input.shape.clone(),
            data: input.data.iter().map(|&v| v.max(0.0)).collect(),
        },
        Layer::Flatten => Tensor {
            shape: vec![input.len()],
            data: input.data.clone(),
        },
    }
}

fn layer_backward(
    layer: &Layer,
    input: &Tensor,
    grad_out: &Tensor,
    param_grad: Option<&mut ParamGrad>,
) -> Tensor {
    match layer {
        Layer::Dense { weights, .. } => {
            let rows = weights.shape[0];
            let cols = weights.shape[1];
            let mut grad_in = vec![0.0; cols];
            for r in 0..rows {
                let g = grad_out.data[r];
                let row = &weights.data[r * cols..(r + 1) * cols];
                for (gi, wv) in grad_in.iter_mut().zip(row) {
                    *gi += g * wv;
                }
            }
            if let Some(ParamGrad::Dense { dw, db }) = param_grad {
                for r in 0..rows {
                    let g = grad_out.data[r];
                    db[r] += g;
                    let dst = &mut dw[r * cols..(r + 1) * cols];
                    for (d, xv) in dst.iter_mut().zip(&input.data) {
                        *d += g * xv;
                    }
                }
            }
            Tensor {
                shape: input.shape.clone(),
                data: grad_in,
            }
        }
        Layer::Conv2d { kernels, .. } => {
            let [out_c, in_c, kh, kw] = kernels.shape[..] else {
                unreachable!()
            };
            let (h, w) = (input.shape[1], input.shape[2]);
            let (oh, ow) = (h - kh + 1, w - kw + 1);
            let mut grad_in = vec![0.0; input.len()];
            let mut pg = param_grad;
            for oc in 0..out_c {
                for y in 0..oh {
                    for x in 0..ow {
                        let g = grad_out.data[(oc * oh + y) * ow + x];
                        if let Some(ParamGrad::Conv2d { db, .. }) = pg.as_deref_mut() {
                            db[oc] += g;
                        }
                        for ic in 0..in_c {
                            for ky in 0..kh {
                                let in_row = ic * h * w + (y + ky) * w + x;
                                let k_row = ((oc * in_c + ic) * kh + ky) * kw;
                                for kx in 0..kw {
                                    grad_in[in_row + kx] += g * kernels.data[k_row + kx];
                                }
                                if let Some(ParamGrad::Conv2d { dk, .. }) = pg.as_deref_mut() {
                                    for kx in 0..kw {
                                        dk[k_row + kx] += g * input.data[in_row + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            Tensor {
                shape: input.shape.clone(),
                data: grad_in,
            }
        }
        Layer::Relu => Tensor {
            shape: input.shape.clone(),
            data: input
                .data
                .iter()
                .zip(&grad_out.data)
                .map(|(&x, &g)| if x > 0.0 { g } else { 0.0 })
                .collect(),
        },
        Layer::Flatten => Tensor {
            shape: input.shape.clone(),
            data: grad_out.data.clone(),
        },
    }
}

/// Cross-entropy of `logits` against `label`: -log softmax(logits)[label].
pub fn ce_loss(logits: &[f64], label: usize) -> Result<f64> {
    if label >= logits.len() {
        return Err(Error::rejected(format!(
            "label {label} out of range for {} logits",
            logits.len()
        )));
    }
    Ok(log_sum_exp(logits) - logits[label])
}

/// Gradient of the cross-entropy with respect to the logits.
pub(crate) fn softmax_minus_onehot(logits: &[f64], label: usize) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    let mut grad: Vec<f64> = logits.iter().map(|&l| (l - lse).exp()).collect();
    grad[label] -= 1.0;
    grad
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let m = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + logits.iter().map(|&l| (l - m).exp()).sum::<f64>().ln()
}

/// Argmax with ties broken by the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Architecture specs: layer shapes without weights, used to build randomly
// initialized models for training.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Dense { out: usize },
    Conv2d { out_channels: usize, kernel: usize },
    Relu,
    Flatten,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub input_shape: (usize, usize, usize),
    pub num_classes: usize,
    pub layers: Vec<LayerSpec>,
}

/// Initial bias for conv layers built from an [`ArchSpec`].
const CONV_BIAS_INIT: f64 = 0.2;

impl ArchSpec {
    /// Flatten + single dense layer (multinomial logistic regression).
    pub fn logistic(input_shape: (usize, usize, usize), num_classes: usize) -> Self {
        Self {
            input_shape,
            num_classes,
            layers: vec![LayerSpec::Flatten, LayerSpec::Dense { out: num_classes }],
        }
    }

    /// Flatten + one hidden relu layer.
    pub fn mlp(input_shape: (usize, usize, usize), hidden: usize, num_classes: usize) -> Self {
        Self {
            input_shape,
            num_classes,
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { out: hidden },
                LayerSpec::Relu,
                LayerSpec::Dense { out: num_classes },
            ],
        }
    }

    /// conv-relu-flatten-dense.
    pub fn conv(
        input_shape: (usize, usize, usize),
        channels: usize,
        kernel: usize,
        num_classes: usize,
    ) -> Self {
        Self {
            input_shape,
            num_classes,
            layers: vec![
                LayerSpec::Conv2d {
                    out_channels: channels,
                    kernel,
                },
                LayerSpec::Relu,
                LayerSpec::Flatten,
                LayerSpec::Dense { out: num_classes },
            ],
        }
    }

    /// Materialize the spec with Glorot-uniform weights drawn from `rng`.
    pub fn build(&self, rng: &mut Rng) -> Result<Model> {
        let (c, h, w) = self.input_shape;
        let mut shape = vec![c, h, w];
        let mut layers = Vec::with_capacity(self.layers.len());
        for spec in &self.layers {
            let layer = match *spec {
                LayerSpec::Dense { out } => {
                    let incoming: usize = shape.iter().product();
                    let bound = (6.0 / (incoming + out) as f64).sqrt();
                    let data: Vec<f64> = (0..out * incoming)
                        .map(|_| rng.uniform(-bound, bound))
                        .collect();
                    Layer::dense(Tensor::new(vec![out, incoming], data)?, vec![0.0; out])?
                }
                LayerSpec::Conv2d {
                    out_channels,
                    kernel,
                } => {
                    if shape.len() != 3 {
                        return Err(Error::rejected("conv2d spec needs 3-D incoming shape"));
                    }
                    let in_c = shape[0];
                    let fan_in = in_c * kernel * kernel;
                    let fan_out = out_channels * kernel * kernel;
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let data: Vec<f64> = (0..out_channels * in_c * kernel * kernel)
                        .map(|_| rng.uniform(-bound, bound))
                        .collect();
                    // Small positive bias keeps relu units initially active;
                    // with zero bias whole channels can start (and stay) dead
                    // under plain gradient descent.
                    Layer::conv2d(
                        Tensor::new(vec![out_channels, in_c, kernel, kernel], data)?,
                        vec![CONV_BIAS_INIT; out_channels],
                    )?
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::Flatten => Layer::Flatten,
            };
            shape = layer.output_shape(&shape)?;
            layers.push(layer);
        }
        Model::new(layers, self.input_shape, self.num_classes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(c: usize, h: usize, w: usize, data: Vec<f64>) -> ImageTensor {
        ImageTensor::new(c, h, w, data).unwrap()
    }

    #[test]
    fn zero_weight_dense_passes_only_bias() {
        let weights = Tensor::new(vec![2, 4], vec![0.0; 8]).unwrap();
        let model = Model::new(
            vec![Layer::dense(weights, vec![1.0, 2.0]).unwrap()],
            (1, 2, 2),
            2,
        )
        .unwrap();
        let logits = model
            .forward(&image(1, 2, 2, vec![9.0, 8.0, 7.0, 6.0]))
            .unwrap();
        assert_eq!(logits, vec![1.0, 2.0]);
    }

    #[test]
    fn identity_dense_applies_input_scaling() {
        let weights = Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let model = Model::new(
            vec![Layer::dense(weights, vec![0.0, 0.0]).unwrap()],
            (1, 1, 2),
            2,
        )
        .unwrap();
        let logits = model.forward(&image(1, 1, 2, vec![0.0, 255.0])).unwrap();
        assert_eq!(logits, vec![0.0, 1.0]);
    }

    #[test]
    fn forward_rejects_shape_mismatch() {
        let weights = Tensor::new(vec![2, 4], vec![0.0; 8]).unwrap();
        let model = Model::new(
            vec![Layer::dense(weights, vec![0.0; 2]).unwrap()],
            (1, 2, 2),
            2,
        )
        .unwrap();
        assert!(model.forward(&image(1, 1, 3, vec![0.0; 3])).is_err());
    }

    #[test]
    fn model_rejects_inconsistent_chain() {
        let weights = Tensor::new(vec![2, 5], vec![0.0; 10]).unwrap();
        let res = Model::new(
            vec![Layer::dense(weights, vec![0.0; 2]).unwrap()],
            (1, 2, 2),
            2,
        );
        assert!(res.is_err());
    }

    #[test]
    fn predict_breaks_ties_to_lowest_index() {
        assert_eq!(argmax(&[1.0, 2.0]), 1);
        assert_eq!(argmax(&[3.0, 3.0]), 0);
        assert_eq!(argmax(&[0.0, 5.0, 5.0]), 1);
    }

    #[test]
    fn ce_loss_matches_uniform_and_saturated_cases() {
        let uniform = ce_loss(&[0.7, 0.7, 0.7, 0.7], 2).unwrap();
        assert!((uniform - 4.0_f64.ln()).abs() < 1e-12);
        let saturated = ce_loss(&[1000.0, 0.0], 0).unwrap();
        assert!(saturated.abs() < 1e-6);
        assert!(ce_loss(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn ce_loss_matches_direct_softmax_evaluation() {
        let logits = [0.3_f64, -1.2, 2.0];
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let expected = -(logits[2].exp() / z).ln();
        let got = ce_loss(&logits, 2).unwrap();
        assert!((got - expected).abs() < 1e-12, "got {got}, want {expected}");
    }

    #[test]
    fn ce_loss_is_nonnegative() {
        let mut rng = Rng::new(5);
        for _ in 0..200 {
            let logits: Vec<f64> = (0..5).map(|_| rng.uniform(-30.0, 30.0)).collect();
            let label = rng.below(5);
            assert!(ce_loss(&logits, label).unwrap() >= 0.0);
        }
    }

    #[test]
    fn constant_model_has_zero_input_gradient() {
        let weights = Tensor::new(vec![3, 4], vec![0.0; 12]).unwrap();
        let model = Model::new(
            vec![Layer::dense(weights, vec![0.5, -0.5, 2.0]).unwrap()],
            (1, 2, 2),
            3,
        )
        .unwrap();
        let grad = model
            .input_gradient(&image(1, 2, 2, vec![4.0, 3.0, 2.0, 1.0]), 1)
            .unwrap();
        assert!(grad.pixels().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_model_gradient_matches_closed_form() {
        // f(x) = W (x/255) + b; dL/dx = W^T (softmax - onehot) / 255.
        let w = vec![0.4, -0.3, 0.9, 0.1, -0.6, 0.2, 0.8, -0.2];
        let weights = Tensor::new(vec![2, 4], w.clone()).unwrap();
        let bias = vec![0.05, -0.1];
        let model = Model::new(
            vec![Layer::dense(weights, bias.clone()).unwrap()],
            (1, 2, 2),
            2,
        )
        .unwrap();
        let img = image(1, 2, 2, vec![12.0, 250.0, 3.0, 77.0]);
        let label = 0;

        let logits = model.forward(&img).unwrap();
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        let p: Vec<f64> = logits.iter().map(|l| l.exp() / z).collect();
        let residual = [p[0] - 1.0, p[1]];
        let mut expected = [0.0; 4];
        for (i, e) in expected.iter_mut().enumerate() {
            *e = (residual[0] * w[i] + residual[1] * w[4 + i]) / 255.0;
        }

        let grad = model.input_gradient(&img, label).unwrap();
        for (g, e) in grad.pixels().iter().zip(expected) {
            assert!((g - e).abs() < 1e-12, "grad {g} vs closed form {e}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences_on_random_model() {
        let mut rng = Rng::new(42);
        let arch = ArchSpec::conv((2, 5, 5), 3, 3, 4);
        let model = arch.build(&mut rng).unwrap();
        let data: Vec<f64> = (0..2 * 5 * 5).map(|_| rng.uniform(0.0, 255.0)).collect();
        let img = image(2, 5, 5, data);
        let label = 2;
        let grad = model.input_gradient(&img, label).unwrap();

        let h = 1e-3;
        for idx in [0, 7, 13, 24, 31, 49] {
            let mut plus = img.clone();
            plus.pixels_mut()[idx] += h;
            let mut minus = img.clone();
            minus.pixels_mut()[idx] -= h;
            let lp = ce_loss(&model.forward(&plus).unwrap(), label).unwrap();
            let lm = ce_loss(&model.forward(&minus).unwrap(), label).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let g = grad.pixels()[idx];
            let denom = fd.abs().max(g.abs()).max(1e-8);
            assert!(
                (fd - g).abs() / denom < 1e-4,
                "coordinate {idx}: analytic {g} vs finite difference {fd}"
            );
        }
    }

    #[test]
    fn conv_dense_forward_matches_nested_loop_oracle() {
        // Oracle: an independent reimplementation of the same arithmetic with
        // plain index bookkeeping, no shared code with the engine.
        let mut rng = Rng::new(42);
        let arch = ArchSpec::conv((2, 4, 4), 2, 3, 3);
        let model = arch.build(&mut rng).unwrap();
        let data: Vec<f64> = (0..2 * 4 * 4).map(|_| rng.uniform(0.0, 255.0)).collect();
        let img = image(2, 4, 4, data.clone());

        let (kernels, kbias) = match &model.layers()[0] {
            Layer::Conv2d { kernels, bias } => (kernels.data.clone(), bias.clone()),
            _ => unreachable!(),
        };
        let (dw, dbias) = match &model.layers()[3] {
            Layer::Dense { weights, bias } => (weights.data.clone(), bias.clone()),
            _ => unreachable!(),
        };

        // conv: 2 in channels, 2 out channels, 3x3 kernel, 4x4 input -> 2x2x2
        let mut conv_out = vec![0.0; 2 * 2 * 2];
        for oc in 0..2 {
            for y in 0..2 {
                for x in 0..2 {
                    let mut acc = kbias[oc];
                    for ic in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let pix = data[ic * 16 + (y + ky) * 4 + (x + kx)] / 255.0;
                                let ker = kernels[oc * 18 + ic * 9 + ky * 3 + kx];
                                acc += pix * ker;
                            }
                        }
                    }
                    conv_out[oc * 4 + y * 2 + x] = acc.max(0.0); // relu
                }
            }
        }
        let mut expected = vec![0.0; 3];
        for (r, e) in expected.iter_mut().enumerate() {
            let mut acc = dbias[r];
            for (c, v) in conv_out.iter().enumerate() {
                acc += dw[r * 8 + c] * v;
            }
            *e = acc;
        }

        let logits = model.forward(&img).unwrap();
        for (l, e) in logits.iter().zip(&expected) {
            let denom = e.abs().max(1e-12);
            assert!((l - e).abs() / denom < 1e-6, "logit {l} vs oracle {e}");
        }
    }

    #[test]
    fn purely_linear_model_is_affine() {
        // forward(a x1 + b x2) = a f(x1) + b f(x2) - (a + b - 1) * bias_term
        let mut rng = Rng::new(9);
        let w1: Vec<f64> = (0..6 * 4).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b1: Vec<f64> = (0..6).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let w2: Vec<f64> = (0..3 * 6).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b2: Vec<f64> = (0..3).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let model = Model::new(
            vec![
                Layer::Flatten,
                Layer::dense(Tensor::new(vec![6, 4], w1).unwrap(), b1).unwrap(),
                Layer::dense(Tensor::new(vec![3, 6], w2).unwrap(), b2).unwrap(),
            ],
            (1, 2, 2),
            3,
        )
        .unwrap();

        let x1 = image(1, 2, 2, vec![10.0, 20.0, 30.0, 40.0]);
        let x2 = image(1, 2, 2, vec![5.0, 100.0, 200.0, 55.0]);
        let (a, b) = (0.7, -1.3);
        let combo_data: Vec<f64> = x1
            .pixels()
            .iter()
            .zip(x2.pixels())
            .map(|(p1, p2)| a * p1 + b * p2)
            .collect();
        let combo = image(1, 2, 2, combo_data);

        let f1 = model.forward(&x1).unwrap();
        let f2 = model.forward(&x2).unwrap();
        let fc = model.forward(&combo).unwrap();
        let bias_term = model.forward(&image(1, 2, 2, vec![0.0; 4])).unwrap();
        for i in 0..3 {
            let expected = a * f1[i] + b * f2[i] - (a + b - 1.0) * bias_term[i];
            assert!(
                (fc[i] - expected).abs() < 1e-9,
                "affine check failed at logit {i}: {} vs {}",
                fc[i],
                expected
            );
        }
    }

    #[test]
    fn forward_is_deterministic() {
        let mut rng = Rng::new(1234);
        let model = ArchSpec::mlp((1, 3, 3), 5, 3).build(&mut rng).unwrap();
        let data: Vec<f64> = (0..9).map(|_| rng.uniform(0.0, 255.0)).collect();
        let img = image(1, 3, 3, data);
        let a = model.forward(&img).unwrap();
        let b = model.forward(&img).unwrap();
        assert_eq!(a, b);
    }
}
