//! Sign-gradient attacks over 8-bit images.
//!
//! Four variants share one loop skeleton:
//!
//! * plain PGD: fixed step, projection into the epsilon ball each step,
//!   rounded once at the end;
//! * dss: scheduled steps alpha_t = eta_t * beta summing to epsilon, so no
//!   projection is needed, all T steps run;
//! * aes: fixed step with projection plus a per-step stop check on the
//!   rounded iterate;
//! * dss + aes: scheduled steps with the per-step stop check.
//!
//! The stop check is gated on rounding: it only consults the model once the
//! rounded iterate differs from the original in at least one pixel. Success
//! is always judged on the rounded image, never the float iterate, and the
//! gradient is always taken at the float iterate.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::rng::{fnv1a, Rng};
use crate::schedule::{build_plan, ScheduleKind, StepPlan};
use crate::tensor::{ImageTensor, LabeledBatch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackMode {
    Untargeted,
    Targeted { target: usize },
}

impl AttackMode {
    pub fn is_targeted(&self) -> bool {
        matches!(self, AttackMode::Targeted { .. })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub mode: AttackMode,
    /// Perturbation budget in pixel units.
    pub epsilon: f64,
    /// Iteration count T.
    pub steps: usize,
    /// Coefficient schedule used when `dss` is on.
    pub schedule: ScheduleKind,
    /// Dynamic step size: allocate the budget over steps instead of using a
    /// fixed step with projection.
    pub dss: bool,
    /// Adaptive early stop: halt as soon as the rounded iterate both differs
    /// from the original and fools the model.
    pub aes: bool,
    /// Fixed step for the non-dss variants; defaults to epsilon / 4.
    pub baseline_alpha: Option<f64>,
    /// Start plain PGD from a uniform point in the epsilon ball instead of
    /// the original image. Plain-PGD-only option.
    pub random_init: bool,
    /// Seed for the random init draw; mixed with a hash of the image so each
    /// input gets its own noise while staying reproducible.
    pub init_seed: u64,
}

impl AttackConfig {
    pub fn new(mode: AttackMode, epsilon: f64, steps: usize, schedule: ScheduleKind) -> Self {
        Self {
            mode,
            epsilon,
            steps,
            schedule,
            dss: true,
            aes: true,
            baseline_alpha: None,
            random_init: false,
            init_seed: 0,
        }
    }

    pub fn with_variant(mut self, dss: bool, aes: bool) -> Self {
        self.dss = dss;
        self.aes = aes;
        self
    }

    /// "pgd", "pgd-dss", "pgd-aes", or "pgd-imp".
    pub fn variant_name(&self) -> &'static str {
        variant_name(self.dss, self.aes)
    }

    pub fn effective_baseline_alpha(&self) -> f64 {
        self.baseline_alpha.unwrap_or(self.epsilon / 4.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::rejected(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if self.steps == 0 {
            return Err(Error::rejected("steps must be at least 1"));
        }
        if let Some(a) = self.baseline_alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::rejected(format!(
                    "baseline alpha must be positive and finite, got {a}"
                )));
            }
        }
        if self.random_init && (self.dss || self.aes) {
            return Err(Error::rejected(
                "random init applies only to the plain PGD baseline",
            ));
        }
        Ok(())
    }
}

pub fn variant_name(dss: bool, aes: bool) -> &'static str {
    match (dss, aes) {
        (false, false) => "pgd",
        (true, false) => "pgd-dss",
        (false, true) => "pgd-aes",
        (true, true) => "pgd-imp",
    }
}

/// Parse a variant name into (dss, aes) flags.
pub fn parse_variant(name: &str) -> Result<(bool, bool)> {
    match name {
        "pgd" => Ok((false, false)),
        "pgd-dss" => Ok((true, false)),
        "pgd-aes" => Ok((false, true)),
        "pgd-imp" => Ok((true, true)),
        other => Err(Error::rejected(format!("unknown attack variant `{other}`"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    /// 8-bit adversarial image; always within the epsilon ball of the input.
    pub x_adv: ImageTensor,
    /// Whether the success condition holds on `x_adv`.
    pub success: bool,
    /// Gradient steps actually taken.
    pub iterations_used: usize,
    /// True when the stop check fired before the step budget ran out.
    pub stopped_early: bool,
}

/// Per-step record of the stop machinery, for trace inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    /// L-inf distance of the rounded iterate from the original, pixel units.
    pub rounded_linf: f64,
    /// Whether the rounding gate (>= 1 pixel change) passed.
    pub gate_passed: bool,
    /// Whether the attack stopped at this step.
    pub stopped: bool,
}

/// Round every pixel to the nearest integer, ties away from zero.
pub fn round_to_8bit(image: &ImageTensor) -> ImageTensor {
    let (c, h, w) = image.shape();
    let data: Vec<f64> = image.pixels().iter().map(|v| v.round()).collect();
    debug_assert!(data.iter().all(|&v| (0.0..=255.0).contains(&v)));
    ImageTensor::new(c, h, w, data).expect("rounding preserves shape and finiteness")
}

/// The adaptive stop condition: the rounded iterate must differ from the
/// original by at least one pixel level, and the model must already be
/// fooled. Returns false while the rounded image equals the original, even
/// if the model misclassifies the original itself.
pub fn early_stop_check(
    model: &Model,
    x_now: &ImageTensor,
    x: &ImageTensor,
    y_gt: usize,
    config: &AttackConfig,
) -> Result<bool> {
    if !x_now.same_shape(x) {
        return Err(Error::rejected("early stop check on mismatched shapes"));
    }
    if x_now.linf_distance(x) < 1.0 {
        return Ok(false);
    }
    success_condition(model, x_now, y_gt, &config.mode)
}

fn success_condition(
    model: &Model,
    image: &ImageTensor,
    y_gt: usize,
    mode: &AttackMode,
) -> Result<bool> {
    let predicted = model.predict(image)?;
    Ok(match mode {
        AttackMode::Untargeted => predicted != y_gt,
        AttackMode::Targeted { target } => predicted == *target,
    })
}

fn sign(g: f64) -> f64 {
    if g > 0.0 {
        1.0
    } else if g < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Round the float iterate and clip the integer perturbation to floor(eps)
/// so the returned 8-bit image always satisfies the budget exactly. For
/// integer eps the clip never binds: the float iterate is within eps, so its
/// rounding is too.
fn finalize(
    iterate: &[f64],
    original: &[f64],
    epsilon: f64,
    shape: (usize, usize, usize),
) -> ImageTensor {
    let bound = epsilon.floor();
    let data: Vec<f64> = iterate
        .iter()
        .zip(original)
        .map(|(&v, &o)| v.round().clamp(o - bound, o + bound))
        .collect();
    debug_assert!(data
        .iter()
        .all(|&v| (0.0..=255.0).contains(&v) && v.fract() == 0.0));
    let (c, h, w) = shape;
    ImageTensor::new(c, h, w, data).expect("finalize preserves shape and finiteness")
}

fn validate_attack_inputs(
    model: &Model,
    x: &ImageTensor,
    y_gt: usize,
    config: &AttackConfig,
) -> Result<()> {
    config.validate()?;
    if x.shape() != model.input_shape() {
        return Err(Error::rejected(format!(
            "image shape {:?} does not match model input shape {:?}",
            x.shape(),
            model.input_shape()
        )));
    }
    if !x.is_8bit() {
        return Err(Error::rejected("attack input must be an 8-bit image"));
    }
    if y_gt >= model.num_classes() {
        return Err(Error::rejected(format!(
            "label {y_gt} out of range for {} classes",
            model.num_classes()
        )));
    }
    if let AttackMode::Targeted { target } = config.mode {
        if target >= model.num_classes() {
            return Err(Error::rejected(format!(
                "target {target} out of range for {} classes",
                model.num_classes()
            )));
        }
    }
    Ok(())
}

/// Run the configured attack on one image. Pure given its arguments; the
/// dss variants take no random decisions at all.
pub fn attack_single(
    model: &Model,
    x: &ImageTensor,
    y_gt: usize,
    config: &AttackConfig,
) -> Result<AttackOutcome> {
    Ok(run_attack_loop(model, x, y_gt, config, None)?.0)
}

/// As [`attack_single`], additionally recording the per-step stop machinery.
pub fn attack_single_traced(
    model: &Model,
    x: &ImageTensor,
    y_gt: usize,
    config: &AttackConfig,
) -> Result<(AttackOutcome, Vec<StepRecord>)> {
    let mut trace = Vec::with_capacity(config.steps);
    let (outcome, _) = run_attack_loop(model, x, y_gt, config, Some(&mut trace))?;
    Ok((outcome, trace))
}

fn run_attack_loop(
    model: &Model,
    x: &ImageTensor,
    y_gt: usize,
    config: &AttackConfig,
    mut trace: Option<&mut Vec<StepRecord>>,
) -> Result<(AttackOutcome, ())> {
    validate_attack_inputs(model, x, y_gt, config)?;
    let shape = x.shape();
    let (c, h, w) = shape;
    let original = x.pixels().to_vec();
    let epsilon = config.epsilon;
    let plan: Option<StepPlan> = if config.dss {
        Some(build_plan(config.schedule, config.steps, epsilon)?)
    } else {
        None
    };
    let fixed_alpha = config.effective_baseline_alpha();
    let attack_label = match config.mode {
        AttackMode::Untargeted => y_gt,
        AttackMode::Targeted { target } => target,
    };
    // Eq-style direction: ascend the loss for untargeted, descend for targeted.
    let direction = if config.mode.is_targeted() { -1.0 } else { 1.0 };

    let mut iterate = original.clone();
    if config.random_init {
        let mut rng = Rng::new(config.init_seed ^ image_hash(x));
        for (v, &o) in iterate.iter_mut().zip(&original) {
            let noised = o + rng.uniform(-epsilon, epsilon);
            *v = noised.clamp(o - epsilon, o + epsilon).clamp(0.0, 255.0);
        }
    }

    let mut x_now = finalize(&iterate, &original, epsilon, shape);
    let mut stopped_early = false;
    let mut iterations_used = config.steps;

    for t in 1..=config.steps {
        let grad = {
            let img = ImageTensor::new(c, h, w, iterate.clone())?;
            model.input_gradient(&img, attack_label)?
        };
        let alpha = plan.as_ref().map_or(fixed_alpha, |p| p.alpha_at(t));
        for (v, g) in iterate.iter_mut().zip(grad.pixels()) {
            *v += direction * alpha * sign(*g);
        }
        if !config.dss {
            // Projection into the epsilon ball around the original.
            for (v, &o) in iterate.iter_mut().zip(&original) {
                *v = v.clamp(o - epsilon, o + epsilon);
            }
        }
        for v in iterate.iter_mut() {
            *v = v.clamp(0.0, 255.0);
        }

        x_now = finalize(&iterate, &original, epsilon, shape);

        let gate_passed = x_now.linf_distance(x) >= 1.0;
        let mut stopped = false;
        if config.aes && gate_passed && success_condition(model, &x_now, y_gt, &config.mode)? {
            stopped = true;
        }
        if let Some(rec) = trace.as_deref_mut() {
            rec.push(StepRecord {
                step: t,
                rounded_linf: x_now.linf_distance(x),
                gate_passed,
                stopped,
            });
        }
        if stopped {
            stopped_early = true;
            iterations_used = t;
            break;
        }
    }

    let success = if stopped_early {
        true
    } else {
        success_condition(model, &x_now, y_gt, &config.mode)?
    };
    debug_assert!(x_now.linf_distance(x) <= epsilon);
    Ok((
        AttackOutcome {
            x_adv: x_now,
            success,
            iterations_used,
            stopped_early,
        },
        (),
    ))
}

fn image_hash(x: &ImageTensor) -> u64 {
    fnv1a(x.pixels().iter().map(|&p| p as u8))
}

/// Attack every sample in the batch. Outcomes are bit-identical to mapping
/// [`attack_single`] over the batch in order; samples run independently (a
/// stopped sample does no further gradient work) so the work is distributed
/// across threads.
pub fn attack_batch(
    model: &Model,
    batch: &LabeledBatch,
    config: &AttackConfig,
) -> Result<Vec<AttackOutcome>> {
    batch
        .images
        .par_iter()
        .zip(batch.labels.par_iter())
        .map(|(img, &label)| attack_single(model, img, label, config))
        .collect()
}
