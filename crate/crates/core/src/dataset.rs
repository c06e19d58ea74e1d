//! Synthetic image classification data and the on-disk dataset layout.
//!
//! The generator builds one shared smooth background (a random low-resolution
//! grid, bilinearly upsampled) and adds a small smooth per-class offset to
//! produce each class template; samples are templates plus uniform pixel
//! noise, rounded to 8 bits. `template_spread` bounds the per-pixel offset
//! magnitude, so it directly controls how far apart classes sit in pixel
//! space and therefore how large a perturbation budget an attack needs.
//! Templates must be pairwise distinct in max-norm.
//!
//! On disk a dataset is a directory of netpbm images plus `manifest.csv`
//! with a `filename,label` header; rows keep generation order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::netpbm::{extension_for, load_image, save_image};
use crate::rng::Rng;
use crate::tensor::{ImageTensor, LabeledBatch};

/// Minimum pairwise max-norm distance between class templates, pixel units.
/// Below one pixel level the classes are indistinguishable after rounding.
pub const MIN_TEMPLATE_SEPARATION: f64 = 1.0;

/// Grid resolution for the per-class offset fields: low so offsets stay
/// smooth and large-area (which keeps the learnable signal strong even when
/// the per-pixel spread is tiny).
const OFFSET_GRID: usize = 4;
/// Grid resolution for the shared background: high so the background carries
/// fine structure. Texture-rich backgrounds keep hidden-unit activations
/// diverse across positions, which plain gradient descent needs to escape
/// dead-relu collapse.
const BASE_GRID: usize = 7;
const BASE_LO: f64 = 16.0;
const BASE_HI: f64 = 240.0;
const TEMPLATE_REDRAWS: usize = 64;

#[derive(Debug, Clone)]
pub struct ToyDatasetSpec {
    pub num_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub shape: (usize, usize, usize),
    /// Uniform noise amplitude in pixel units.
    pub noise_scale: f64,
    /// Per-pixel magnitude bound of the class offsets added to the shared
    /// background. Small values put classes only a few pixel levels apart.
    pub template_spread: f64,
    pub seed: u64,
    /// Explicit class templates; random smooth templates when absent.
    pub templates: Option<Vec<ImageTensor>>,
}

impl Default for ToyDatasetSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            train_per_class: 64,
            test_per_class: 64,
            shape: (3, 8, 8),
            noise_scale: 2.0,
            template_spread: 3.0,
            seed: 0,
            templates: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyDataset {
    pub train: LabeledBatch,
    pub test: LabeledBatch,
    pub templates: Vec<ImageTensor>,
}

pub fn generate_toy_dataset(spec: &ToyDatasetSpec) -> Result<ToyDataset> {
    if spec.num_classes < 2 {
        return Err(Error::rejected("need at least 2 classes"));
    }
    if spec.train_per_class == 0 {
        return Err(Error::rejected("need at least 1 training sample per class"));
    }
    let (c, h, w) = spec.shape;
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::rejected("image shape must be nonzero"));
    }
    if !(spec.noise_scale >= 0.0) || !spec.noise_scale.is_finite() {
        return Err(Error::rejected(format!(
            "noise scale must be nonnegative and finite, got {}",
            spec.noise_scale
        )));
    }
    if !(spec.template_spread > 0.0) || !spec.template_spread.is_finite() {
        return Err(Error::rejected(format!(
            "template spread must be positive and finite, got {}",
            spec.template_spread
        )));
    }
    let mut rng = Rng::new(spec.seed);
    let templates = match &spec.templates {
        Some(given) => {
            if given.len() != spec.num_classes {
                return Err(Error::rejected(format!(
                    "{} templates given for {} classes",
                    given.len(),
                    spec.num_classes
                )));
            }
            for t in given {
                if t.shape() != spec.shape {
                    return Err(Error::rejected(format!(
                        "template shape {:?} does not match dataset shape {:?}",
                        t.shape(),
                        spec.shape
                    )));
                }
            }
            check_separation(given)?;
            given.clone()
        }
        None => draw_templates(&mut rng, spec.num_classes, spec.shape, spec.template_spread)?,
    };

    let sample = |rng: &mut Rng, template: &ImageTensor| -> ImageTensor {
        let (c, h, w) = template.shape();
        let data: Vec<f64> = template
            .pixels()
            .iter()
            .map(|&m| {
                (m + rng.uniform(-spec.noise_scale, spec.noise_scale))
                    .clamp(0.0, 255.0)
                    .round()
            })
            .collect();
        ImageTensor::new(c, h, w, data).expect("clamped rounded sample is a valid image")
    };

    let split = |rng: &mut Rng, per_class: usize| -> LabeledBatch {
        let mut images = Vec::with_capacity(per_class * spec.num_classes);
        let mut labels = Vec::with_capacity(per_class * spec.num_classes);
        for (label, template) in templates.iter().enumerate() {
            for _ in 0..per_class {
                images.push(sample(rng, template));
                labels.push(label);
            }
        }
        LabeledBatch::new(images, labels).expect("generated images and labels align")
    };

    let train = split(&mut rng, spec.train_per_class);
    let test = split(&mut rng, spec.test_per_class);
    Ok(ToyDataset {
        train,
        test,
        templates,
    })
}

fn check_separation(templates: &[ImageTensor]) -> Result<()> {
    for i in 0..templates.len() {
        for j in (i + 1)..templates.len() {
            let d = templates[i].linf_distance(&templates[j]);
            if d < MIN_TEMPLATE_SEPARATION {
                return Err(Error::rejected(format!(
                    "class templates {i} and {j} are only {d} apart, need {MIN_TEMPLATE_SEPARATION}"
                )));
            }
        }
    }
    Ok(())
}

fn draw_templates(
    rng: &mut Rng,
    num_classes: usize,
    shape: (usize, usize, usize),
    spread: f64,
) -> Result<Vec<ImageTensor>> {
    for _ in 0..TEMPLATE_REDRAWS {
        let base = smooth_field(rng, shape, BASE_GRID, BASE_LO, BASE_HI);
        let templates: Vec<ImageTensor> = (0..num_classes)
            .map(|_| {
                let offset = smooth_field(rng, shape, OFFSET_GRID, -spread, spread);
                let (c, h, w) = shape;
                let data: Vec<f64> = base
                    .iter()
                    .zip(&offset)
                    .map(|(&b, &o)| (b + o).clamp(0.0, 255.0))
                    .collect();
                ImageTensor::new(c, h, w, data).expect("template has the requested shape")
            })
            .collect();
        if check_separation(&templates).is_ok() {
            return Ok(templates);
        }
    }
    Err(Error::rejected(
        "could not draw sufficiently distinct class templates",
    ))
}

/// Random low-resolution grid per channel, bilinearly upsampled to the
/// image shape, values uniform in [lo, hi].
fn smooth_field(
    rng: &mut Rng,
    shape: (usize, usize, usize),
    grid: usize,
    lo: f64,
    hi: f64,
) -> Vec<f64> {
    let (c, h, w) = shape;
    let gh = grid.min(h);
    let gw = grid.min(w);
    let mut data = Vec::with_capacity(c * h * w);
    for _ in 0..c {
        let grid: Vec<f64> = (0..gh * gw).map(|_| rng.uniform(lo, hi)).collect();
        for y in 0..h {
            let fy = if h > 1 {
                y as f64 * (gh - 1) as f64 / (h - 1) as f64
            } else {
                0.0
            };
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(gh - 1);
            let ty = fy - y0 as f64;
            for x in 0..w {
                let fx = if w > 1 {
                    x as f64 * (gw - 1) as f64 / (w - 1) as f64
                } else {
                    0.0
                };
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(gw - 1);
                let tx = fx - x0 as f64;
                let top = grid[y0 * gw + x0] * (1.0 - tx) + grid[y0 * gw + x1] * tx;
                let bottom = grid[y1 * gw + x0] * (1.0 - tx) + grid[y1 * gw + x1] * tx;
                data.push(top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    data
}

/// A dataset loaded from or about to be written to disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub batch: LabeledBatch,
    pub filenames: Vec<String>,
}

impl Dataset {
    pub fn from_batch(batch: LabeledBatch) -> Self {
        let filenames = batch
            .labels
            .iter()
            .enumerate()
            .map(|(i, label)| {
                let ext = extension_for(&batch.images[i]);
                format!("img_{i:05}_c{label}.{ext}")
            })
            .collect();
        Self { batch, filenames }
    }

    pub fn len(&self) -> usize {
        self.batch.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batch.is_empty()
    }
}

pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::rejected("refusing to save an empty dataset"));
    }
    if dataset.filenames.len() != dataset.batch.len() {
        return Err(Error::rejected("dataset filenames do not match batch size"));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut manifest = String::from("filename,label\n");
    for (i, (image, label)) in dataset.batch.iter().enumerate() {
        let name = &dataset.filenames[i];
        save_image(image, &dir.join(name))?;
        manifest.push_str(&format!("{name},{label}\n"));
    }
    let manifest_path = dir.join("manifest.csv");
    fs::write(&manifest_path, manifest).map_err(|e| Error::io(&manifest_path, e))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join("manifest.csv");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("filename,label") => {}
        Some(other) => {
            return Err(Error::parse(
                "manifest",
                format!("expected header `filename,label`, found `{other}`"),
            ))
        }
        None => return Err(Error::parse("manifest", "empty manifest")),
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut filenames = Vec::new();
    for (row, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (name, label_text) = line
            .split_once(',')
            .ok_or_else(|| Error::parse("manifest", format!("row {}: missing comma", row + 1)))?;
        let label: usize = label_text.trim().parse().map_err(|_| {
            Error::parse(
                "manifest",
                format!("row {}: label `{label_text}` is not a number", row + 1),
            )
        })?;
        let image = load_image(&dir.join(name))?;
        if let Some(first) = images.first() {
            if !image.same_shape(first) {
                return Err(Error::rejected(format!(
                    "dataset images disagree on shape: {name} is {:?}, expected {:?}",
                    image.shape(),
                    first.shape()
                )));
            }
        }
        images.push(image);
        labels.push(label);
        filenames.push(name.to_string());
    }
    if images.is_empty() {
        return Err(Error::rejected(format!(
            "no samples listed in {}",
            manifest_path.display()
        )));
    }
    Ok(Dataset {
        batch: LabeledBatch::new(images, labels)?,
        filenames,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ToyDatasetSpec {
        ToyDatasetSpec {
            num_classes: 3,
            train_per_class: 5,
            test_per_class: 4,
            shape: (1, 6, 6),
            noise_scale: 10.0,
            template_spread: 6.0,
            seed: 11,
            templates: None,
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_toy_dataset(&small_spec()).unwrap();
        let b = generate_toy_dataset(&small_spec()).unwrap();
        assert_eq!(a, b);
        let mut different_seed = small_spec();
        different_seed.seed = 12;
        let c = generate_toy_dataset(&different_seed).unwrap();
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn splits_are_balanced_and_8bit() {
        let data = generate_toy_dataset(&small_spec()).unwrap();
        assert_eq!(data.train.len(), 15);
        assert_eq!(data.test.len(), 12);
        for label in 0..3 {
            assert_eq!(data.train.labels.iter().filter(|&&l| l == label).count(), 5);
            assert_eq!(data.test.labels.iter().filter(|&&l| l == label).count(), 4);
        }
        for (img, _) in data.train.iter().chain(data.test.iter()) {
            assert!(img.is_8bit());
            assert_eq!(img.shape(), (1, 6, 6));
        }
    }

    #[test]
    fn zero_noise_reproduces_rounded_templates() {
        let mut spec = small_spec();
        spec.noise_scale = 0.0;
        let data = generate_toy_dataset(&spec).unwrap();
        for (img, label) in data.train.iter() {
            let rounded: Vec<f64> = data.templates[label]
                .pixels()
                .iter()
                .map(|v| v.round())
                .collect();
            assert_eq!(img.pixels(), rounded.as_slice());
        }
    }

    #[test]
    fn identical_templates_are_rejected() {
        let template = ImageTensor::new(1, 6, 6, vec![100.0; 36]).unwrap();
        let mut spec = small_spec();
        spec.num_classes = 2;
        spec.templates = Some(vec![template.clone(), template]);
        let err = generate_toy_dataset(&spec).unwrap_err();
        assert!(err.to_string().contains("apart"));
    }

    #[test]
    fn template_count_and_shape_are_validated() {
        let template = ImageTensor::new(1, 6, 6, vec![100.0; 36]).unwrap();
        let mut spec = small_spec();
        spec.templates = Some(vec![template]);
        assert!(generate_toy_dataset(&spec).is_err());

        let wrong_shape = ImageTensor::new(1, 2, 2, vec![0.0; 4]).unwrap();
        spec.templates = Some(vec![wrong_shape.clone(); 3]);
        assert!(generate_toy_dataset(&spec).is_err());
    }

    #[test]
    fn degenerate_specs_are_rejected() {
        let mut spec = small_spec();
        spec.num_classes = 1;
        assert!(generate_toy_dataset(&spec).is_err());
        spec = small_spec();
        spec.train_per_class = 0;
        assert!(generate_toy_dataset(&spec).is_err());
        spec = small_spec();
        spec.noise_scale = f64::NAN;
        assert!(generate_toy_dataset(&spec).is_err());
        spec = small_spec();
        spec.template_spread = 0.0;
        assert!(generate_toy_dataset(&spec).is_err());
    }

    #[test]
    fn spread_bounds_template_distance() {
        let mut spec = small_spec();
        spec.template_spread = 2.0;
        let data = generate_toy_dataset(&spec).unwrap();
        for i in 0..data.templates.len() {
            for j in (i + 1)..data.templates.len() {
                let d = data.templates[i].linf_distance(&data.templates[j]);
                assert!(d <= 4.0 + 1e-12, "templates {i},{j} are {d} apart");
                assert!(d >= MIN_TEMPLATE_SEPARATION);
            }
        }
    }

    #[test]
    fn disk_round_trip_preserves_batch_and_order() {
        let data = generate_toy_dataset(&small_spec()).unwrap();
        let dataset = Dataset::from_batch(data.test.clone());
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &dataset).unwrap();
        let loaded = load_dataset(dir.path()).unwrap();
        assert_eq!(loaded, dataset);
    }

    #[test]
    fn rgb_images_round_trip_through_ppm() {
        let mut spec = small_spec();
        spec.shape = (3, 6, 6);
        let data = generate_toy_dataset(&spec).unwrap();
        let dataset = Dataset::from_batch(data.test.clone());
        assert!(dataset.filenames[0].ends_with(".ppm"));
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &dataset).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), dataset);
    }

    #[test]
    fn bad_manifests_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("manifest.csv");

        fs::write(&manifest, "name;label\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());

        fs::write(&manifest, "filename,label\nmissing.pgm,0\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());

        let img = ImageTensor::new(1, 2, 2, vec![0.0; 4]).unwrap();
        save_image(&img, &dir.path().join("a.pgm")).unwrap();
        fs::write(&manifest, "filename,label\na.pgm,not-a-number\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());

        fs::write(&manifest, "filename,label\n").unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }

    #[test]
    fn mixed_shapes_are_rejected_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let a = ImageTensor::new(1, 2, 2, vec![0.0; 4]).unwrap();
        let b = ImageTensor::new(1, 3, 3, vec![0.0; 9]).unwrap();
        save_image(&a, &dir.path().join("a.pgm")).unwrap();
        save_image(&b, &dir.path().join("b.pgm")).unwrap();
        fs::write(
            dir.path().join("manifest.csv"),
            "filename,label\na.pgm,0\nb.pgm,1\n",
        )
        .unwrap();
        assert!(load_dataset(dir.path()).is_err());
    }
}
