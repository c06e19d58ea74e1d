//! Dynamic step size plans: a coefficient sequence eta in (0, 1]^T shaped by
//! a schedule, a scaling factor beta = epsilon / sum(eta), and per-step sizes
//! alpha_t = eta_t * beta whose sum equals the budget exactly.

use std::f64::consts::PI;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScheduleKind {
    Constant,
    Linear,
    LinearReverse,
    Cosine,
    CosineReverse,
}

impl ScheduleKind {
    pub const ALL: [ScheduleKind; 5] = [
        ScheduleKind::Constant,
        ScheduleKind::Linear,
        ScheduleKind::LinearReverse,
        ScheduleKind::Cosine,
        ScheduleKind::CosineReverse,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::Linear => "linear",
            ScheduleKind::LinearReverse => "linear-reverse",
            ScheduleKind::Cosine => "cosine",
            ScheduleKind::CosineReverse => "cosine-reverse",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        match text {
            "constant" => Ok(ScheduleKind::Constant),
            "linear" => Ok(ScheduleKind::Linear),
            "linear-reverse" | "linear_reverse" => Ok(ScheduleKind::LinearReverse),
            "cosine" => Ok(ScheduleKind::Cosine),
            "cosine-reverse" | "cosine_reverse" => Ok(ScheduleKind::CosineReverse),
            other => Err(Error::rejected(format!("unknown schedule `{other}`"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Budget allocation over T steps. Invariants: every eta in (0, 1],
/// beta = epsilon / sum(eta), sum(alpha) = epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPlan {
    pub kind: ScheduleKind,
    pub eta: Vec<f64>,
    pub beta: f64,
    pub alpha: Vec<f64>,
    pub epsilon: f64,
    pub steps: usize,
}

impl StepPlan {
    /// Step size for 1-based step `t`.
    pub fn alpha_at(&self, t: usize) -> f64 {
        self.alpha[t - 1]
    }
}

/// Coefficient formulas. The cosine kinds are floored at 1/(100 T) so that
/// every coefficient stays strictly positive; beta is computed after the
/// floor, which makes the budget identity hold by construction.
pub fn build_plan(kind: ScheduleKind, steps: usize, epsilon: f64) -> Result<StepPlan> {
    if steps == 0 {
        return Err(Error::rejected("step count T must be at least 1"));
    }
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::rejected(format!(
            "epsilon must be a positive finite number, got {epsilon}"
        )));
    }
    let t_f = steps as f64;
    let eta_min = 1.0 / (100.0 * t_f);
    let eta: Vec<f64> = (1..=steps)
        .map(|t| {
            let t = t as f64;
            match kind {
                ScheduleKind::Constant => 1.0,
                ScheduleKind::Linear => t / t_f,
                ScheduleKind::LinearReverse => (t_f - t + 1.0) / t_f,
                ScheduleKind::Cosine => ((1.0 - (PI * t / t_f).cos()) / 2.0).max(eta_min),
                ScheduleKind::CosineReverse => {
                    ((1.0 + (PI * (t - 1.0) / t_f).cos()) / 2.0).max(eta_min)
                }
            }
        })
        .collect();
    let eta_sum: f64 = eta.iter().sum();
    let beta = epsilon / eta_sum;
    let alpha: Vec<f64> = eta.iter().map(|e| e * beta).collect();
    Ok(StepPlan {
        kind,
        eta,
        beta,
        alpha,
        epsilon,
        steps,
    })
}

/// One row of a plan description.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRow {
    pub t: usize,
    pub eta: f64,
    pub alpha: f64,
    pub cumulative: f64,
}

/// Per-step table of the plan: (t, eta_t, alpha_t, running sum of alpha).
pub fn describe_plan(plan: &StepPlan) -> Vec<PlanRow> {
    let mut cumulative = 0.0;
    plan.eta
        .iter()
        .zip(&plan.alpha)
        .enumerate()
        .map(|(i, (&eta, &alpha))| {
            cumulative += alpha;
            PlanRow {
                t: i + 1,
                eta,
                alpha,
                cumulative,
            }
        })
        .collect()
}

/// CSV with header `t,eta,alpha,cumulative`.
pub fn plan_to_csv(plan: &StepPlan) -> String {
    let mut out = String::from("t,eta,alpha,cumulative\n");
    for row in describe_plan(plan) {
        out.push_str(&format!(
            "{},{},{},{}\n",
            row.t, row.eta, row.alpha, row.cumulative
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_plan_splits_evenly() {
        let plan = build_plan(ScheduleKind::Constant, 4, 8.0).unwrap();
        assert_eq!(plan.eta, vec![1.0; 4]);
        assert_eq!(plan.beta, 2.0);
        assert_eq!(plan.alpha, vec![2.0; 4]);
    }

    #[test]
    fn linear_plan_matches_arithmetic_series() {
        let plan = build_plan(ScheduleKind::Linear, 100, 8.0).unwrap();
        // Closed form: sum_{t=1..100} t/100 = 50.5
        let eta_sum: f64 = plan.eta.iter().sum();
        assert!((eta_sum - 50.5).abs() < 1e-12);
        assert!((plan.beta - 8.0 / 50.5).abs() < 1e-12);
        assert!((plan.eta[0] - 0.01).abs() < 1e-15);
        assert_eq!(plan.eta[99], 1.0);
    }

    #[test]
    fn linear_reverse_is_elementwise_reversal_of_linear() {
        let fwd = build_plan(ScheduleKind::Linear, 100, 8.0).unwrap();
        let rev = build_plan(ScheduleKind::LinearReverse, 100, 8.0).unwrap();
        let mut reversed = fwd.alpha.clone();
        reversed.reverse();
        for (a, b) in rev.alpha.iter().zip(&reversed) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        assert!((fwd.beta - rev.beta).abs() <= 1e-12 * fwd.beta);
    }

    #[test]
    fn cosine_pair_reversal_duality() {
        let fwd = build_plan(ScheduleKind::Cosine, 64, 8.0).unwrap();
        let rev = build_plan(ScheduleKind::CosineReverse, 64, 8.0).unwrap();
        let mut reversed = fwd.alpha.clone();
        reversed.reverse();
        for (a, b) in rev.alpha.iter().zip(&reversed) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert!((fwd.beta - rev.beta).abs() <= 1e-12 * fwd.beta);
    }

    #[test]
    fn cosine_budget_sums_to_epsilon() {
        let plan = build_plan(ScheduleKind::Cosine, 100, 8.0).unwrap();
        let total: f64 = plan.alpha.iter().sum();
        assert!((total - 8.0).abs() <= 1e-9 * 8.0);
    }

    #[test]
    fn single_step_degenerates_to_full_budget() {
        for kind in ScheduleKind::ALL {
            let plan = build_plan(kind, 1, 8.0).unwrap();
            assert_eq!(plan.alpha.len(), 1);
            assert!(
                (plan.alpha[0] - 8.0).abs() < 1e-12,
                "{kind}: single step should be epsilon"
            );
        }
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert!(build_plan(ScheduleKind::Linear, 0, 8.0).is_err());
        assert!(build_plan(ScheduleKind::Linear, 10, 0.0).is_err());
        assert!(build_plan(ScheduleKind::Linear, 10, -1.0).is_err());
        assert!(build_plan(ScheduleKind::Linear, 10, f64::NAN).is_err());
    }

    #[test]
    fn describe_plan_cumulative_reaches_epsilon() {
        let plan = build_plan(ScheduleKind::Constant, 4, 8.0).unwrap();
        let rows = describe_plan(&plan);
        let cum: Vec<f64> = rows.iter().map(|r| r.cumulative).collect();
        assert_eq!(cum, vec![2.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn describe_plan_linear_two_steps() {
        let plan = build_plan(ScheduleKind::Linear, 2, 3.0).unwrap();
        let rows = describe_plan(&plan);
        assert_eq!(rows.len(), 2);
        assert!((rows[0].eta - 0.5).abs() < 1e-15);
        assert!((rows[1].eta - 1.0).abs() < 1e-15);
        assert!((plan.beta - 2.0).abs() < 1e-15);
        assert!((rows[0].alpha - 1.0).abs() < 1e-15);
        assert!((rows[1].alpha - 2.0).abs() < 1e-15);
        assert!((rows[0].cumulative - 1.0).abs() < 1e-15);
        assert!((rows[1].cumulative - 3.0).abs() < 1e-15);
    }

    #[test]
    fn plan_csv_has_header_and_t_rows() {
        let plan = build_plan(ScheduleKind::Cosine, 7, 2.0).unwrap();
        let csv = plan_to_csv(&plan);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,eta,alpha,cumulative");
        assert_eq!(lines.len(), 8);
    }

    fn any_kind() -> impl Strategy<Value = ScheduleKind> {
        prop_oneof![
            Just(ScheduleKind::Constant),
            Just(ScheduleKind::Linear),
            Just(ScheduleKind::LinearReverse),
            Just(ScheduleKind::Cosine),
            Just(ScheduleKind::CosineReverse),
        ]
    }

    proptest! {
        #[test]
        fn budget_identity_holds(kind in any_kind(), steps in 1usize..10_000, epsilon in 1e-6f64..64.0) {
            let plan = build_plan(kind, steps, epsilon).unwrap();
            let total: f64 = plan.alpha.iter().sum();
            prop_assert!((total - epsilon).abs() <= 1e-9 * epsilon);
        }

        #[test]
        fn eta_range_is_half_open_unit(kind in any_kind(), steps in 1usize..2_000) {
            let plan = build_plan(kind, steps, 8.0).unwrap();
            let min = plan.eta.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = plan.eta.iter().cloned().fold(0.0, f64::max);
            prop_assert!(min > 0.0);
            prop_assert!(max <= 1.0);
        }

        #[test]
        fn monotonicity_matches_kind(kind in any_kind(), steps in 1usize..500) {
            let plan = build_plan(kind, steps, 4.0).unwrap();
            let pairs = plan.eta.windows(2);
            match kind {
                ScheduleKind::Constant => {
                    for w in pairs { prop_assert_eq!(w[0], w[1]); }
                }
                ScheduleKind::Linear | ScheduleKind::Cosine => {
                    for w in pairs { prop_assert!(w[0] <= w[1]); }
                }
                ScheduleKind::LinearReverse | ScheduleKind::CosineReverse => {
                    for w in pairs { prop_assert!(w[0] >= w[1]); }
                }
            }
        }
    }
}
