//! Flat row-major tensors and pixel-unit images.
//!
//! `Tensor` is the activation/weight container used by the model engine.
//! `ImageTensor` is the public image type: channel-height-width layout with
//! pixel values in [0, 255]. An "8-bit" image additionally has all pixels
//! integer-valued; attack inputs and outputs are 8-bit.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::rejected(format!(
                "shape {:?} expects {} elements, got {}",
                shape,
                expected,
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n: usize = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Image in pixel units. Shape is (channels, height, width), data row-major
/// within each channel plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    /// Build from raw pixel values. Values must be finite; range is the
    /// caller's concern (attack iterates are clamped by the attack loop).
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels * height * width != data.len() {
            return Err(Error::rejected(format!(
                "image shape ({channels}, {height}, {width}) expects {} pixels, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::rejected("image contains non-finite pixels"));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    /// Build an image from 8-bit samples.
    pub fn from_u8(channels: usize, height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(
            channels,
            height,
            width,
            bytes.iter().map(|&b| b as f64).collect(),
        )
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn pixels_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// True when every pixel is integer-valued and within [0, 255].
    pub fn is_8bit(&self) -> bool {
        self.data
            .iter()
            .all(|&v| (0.0..=255.0).contains(&v) && v.fract() == 0.0)
    }

    /// Pixels as bytes. Errors when the image is not 8-bit.
    pub fn to_u8(&self) -> Result<Vec<u8>> {
        if !self.is_8bit() {
            return Err(Error::rejected("image is not 8-bit"));
        }
        Ok(self.data.iter().map(|&v| v as u8).collect())
    }

    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.shape() == other.shape()
    }

    /// Max absolute pixel difference, in pixel units.
    pub fn linf_distance(&self, other: &ImageTensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// A set of images with class labels, used for training and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub images: Vec<ImageTensor>,
    pub labels: Vec<usize>,
}

impl LabeledBatch {
    pub fn new(images: Vec<ImageTensor>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::rejected(format!(
                "batch has {} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        Ok(Self { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ImageTensor, usize)> {
        self.images.iter().zip(self.labels.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_rejects_shape_mismatch() {
        assert!(Tensor::new(vec![2, 3], vec![0.0; 5]).is_err());
        assert!(Tensor::new(vec![2, 3], vec![0.0; 6]).is_ok());
    }

    #[test]
    fn image_rejects_non_finite() {
        let err = ImageTensor::new(1, 1, 2, vec![0.0, f64::NAN]);
        assert!(err.is_err());
    }

    #[test]
    fn is_8bit_checks_integrality_and_range() {
        let ok = ImageTensor::new(1, 1, 3, vec![0.0, 128.0, 255.0]).unwrap();
        assert!(ok.is_8bit());
        let frac = ImageTensor::new(1, 1, 3, vec![0.0, 128.5, 255.0]).unwrap();
        assert!(!frac.is_8bit());
        let out = ImageTensor::new(1, 1, 3, vec![0.0, 128.0, 256.0]).unwrap();
        assert!(!out.is_8bit());
    }

    #[test]
    fn linf_distance_is_max_abs_diff() {
        let a = ImageTensor::new(1, 2, 2, vec![0.0, 10.0, 20.0, 30.0]).unwrap();
        let b = ImageTensor::new(1, 2, 2, vec![1.0, 10.0, 17.0, 30.0]).unwrap();
        assert_eq!(a.linf_distance(&b), 3.0);
    }

    #[test]
    fn batch_lengths_must_match() {
        let img = ImageTensor::zeros(1, 2, 2);
        assert!(LabeledBatch::new(vec![img], vec![0, 1]).is_err());
    }
}
