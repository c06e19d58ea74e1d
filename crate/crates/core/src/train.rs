//! Toy training: plain mini-batch gradient descent with a fixed learning
//! rate, enough to produce a well-trained classifier on blob data.

use crate::error::{Error, Result};
use crate::model::{ArchSpec, Layer, Model, ParamGrad};
use crate::rng::Rng;
use crate::tensor::LabeledBatch;

/// Training accuracy a returned model must reach.
pub const REQUIRED_ACCURACY: f64 = 95.0;

#[derive(Debug, Clone)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            epochs: 1000,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Train `arch` on `dataset`. Deterministic given the seed; errors when the
/// final training accuracy falls short of [`REQUIRED_ACCURACY`].
pub fn train_toy(arch: &ArchSpec, dataset: &LabeledBatch, params: &TrainParams) -> Result<Model> {
    if dataset.is_empty() {
        return Err(Error::rejected("training dataset is empty"));
    }
    if params.batch_size == 0 {
        return Err(Error::rejected("batch size must be positive"));
    }
    for (img, label) in dataset.iter() {
        if img.shape() != arch.input_shape {
            return Err(Error::rejected(format!(
                "dataset image shape {:?} does not match architecture input {:?}",
                img.shape(),
                arch.input_shape
            )));
        }
        if label >= arch.num_classes {
            return Err(Error::rejected(format!(
                "label {label} out of range for {} classes",
                arch.num_classes
            )));
        }
    }

    let mut rng = Rng::new(params.seed);
    let mut model = arch.build(&mut rng)?;
    let mut order: Vec<usize> = (0..dataset.len()).collect();

    for _ in 0..params.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(params.batch_size) {
            let mut grads: Vec<ParamGrad> =
                model.layers().iter().map(ParamGrad::for_layer).collect();
            for &i in chunk {
                let cache = model.forward_cached(&dataset.images[i]);
                let logits = &cache.last().unwrap().data;
                let grad_logits = crate::model::softmax_minus_onehot(logits, dataset.labels[i]);
                model.backward(&cache, grad_logits, Some(&mut grads));
            }
            apply_update(
                &mut model,
                &grads,
                params.learning_rate / chunk.len() as f64,
            );
        }
    }

    let acc = accuracy(&model, dataset)?;
    if acc < REQUIRED_ACCURACY {
        return Err(Error::TrainingFailed {
            accuracy: acc,
            required: REQUIRED_ACCURACY,
        });
    }
    Ok(model)
}

/// Percentage of `batch` classified correctly.
pub fn accuracy(model: &Model, batch: &LabeledBatch) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::rejected(
            "cannot evaluate accuracy on an empty batch",
        ));
    }
    let mut correct = 0usize;
    for (img, label) in batch.iter() {
        if model.predict(img)? == label {
            correct += 1;
        }
    }
    Ok(100.0 * correct as f64 / batch.len() as f64)
}

fn apply_update(model: &mut Model, grads: &[ParamGrad], step: f64) {
    for (layer, grad) in model.layers_mut().iter_mut().zip(grads) {
        match (layer, grad) {
            (Layer::Dense { weights, bias }, ParamGrad::Dense { dw, db }) => {
                for (w, d) in weights.data.iter_mut().zip(dw) {
                    *w -= step * d;
                }
                for (b, d) in bias.iter_mut().zip(db) {
                    *b -= step * d;
                }
            }
            (Layer::Conv2d { kernels, bias }, ParamGrad::Conv2d { dk, db }) => {
                for (k, d) in kernels.data.iter_mut().zip(dk) {
                    *k -= step * d;
                }
                for (b, d) in bias.iter_mut().zip(db) {
                    *b -= step * d;
                }
            }
            _ => {}
        }
    }
}
