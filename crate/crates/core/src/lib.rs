//! Imperceptible sign-gradient attacks on small image classifiers.
//!
//! The library pairs a minimal differentiable runtime (dense, conv2d, relu,
//! flatten over f64 tensors, with exact input gradients) with an attack
//! family built around two ideas: spend the whole perturbation budget as a
//! schedule of shrinking or growing steps instead of a fixed step with
//! projection, and stop the moment the rounded 8-bit image both differs
//! from the original and fools the model. Together they find perturbations
//! that typically round to a single pixel level.
//!
//! Modules:
//!
//! * [`tensor`], [`model`], [`train`], [`model_io`]: the classifier runtime;
//! * [`schedule`]: budget allocation over iterations;
//! * [`attack`]: the four attack variants and the stop rule;
//! * [`metrics`]: image-pair quality metrics and aggregate reports;
//! * [`dataset`], [`netpbm`]: synthetic data and on-disk formats;
//! * [`harness`]: dataset-level runs, tables, and sweeps.

pub mod attack;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod model_io;
pub mod netpbm;
pub mod rng;
pub mod schedule;
pub mod tensor;
pub mod train;

pub use attack::{
    attack_batch, attack_single, attack_single_traced, early_stop_check, parse_variant,
    round_to_8bit, variant_name, AttackConfig, AttackMode, AttackOutcome, StepRecord,
};
pub use dataset::{
    generate_toy_dataset, load_dataset, save_dataset, Dataset, ToyDataset, ToyDatasetSpec,
};
pub use error::{Error, Result};
pub use harness::{
    aggregate_records, eligible_indices, evaluate_attack, mode_name, run_ablation_table,
    run_attack, run_schedule_table, run_sweep, EvaluatedRun, PerImageRecord, SweepRow,
};
pub use metrics::{aggregate, pair_metrics, ssim, AggregateReport, ImagePairMetrics, SampleResult};
pub use model::{argmax, ce_loss, ArchSpec, Layer, LayerSpec, Model};
pub use model_io::{load_model, save_model};
pub use netpbm::{decode_image, encode_image, load_image, save_image};
pub use rng::Rng;
pub use schedule::{build_plan, describe_plan, plan_to_csv, ScheduleKind, StepPlan};
pub use tensor::{ImageTensor, LabeledBatch, Tensor};
pub use train::{accuracy, train_toy, TrainParams, REQUIRED_ACCURACY};
