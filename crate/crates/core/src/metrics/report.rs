//! The per-sequence metric report and its serialized forms.

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Column names, in the fixed report order. Matches the field order of
/// [`MetricReport`] and the CSV layout.
pub const METRIC_COLUMNS: [&str; 15] = [
    "RRA", "RTA", "AUC30", "ATE", "RPEt", "RPEr", "Rel", "RMSE", "delta1", "Acc", "Comp", "CD",
    "hErr", "vErr", "AUC_FoV",
];

/// All fifteen evaluation numbers for one sequence.
///
/// Fractions (`rra`, `rta`, `auc30`, `delta1`, `auc_fov`) live in `[0, 1]`;
/// everything else is a non-negative error, in scene units except the
/// degree-valued `rpe_r`, `h_err` and `v_err`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rra: f64,
    pub rta: f64,
    pub auc30: f64,
    pub ate: f64,
    pub rpe_t: f64,
    pub rpe_r: f64,
    pub rel: f64,
    pub rmse: f64,
    pub delta1: f64,
    pub acc: f64,
    pub comp: f64,
    pub cd: f64,
    pub h_err: f64,
    pub v_err: f64,
    pub auc_fov: f64,
}

impl MetricReport {
    /// Values in column order.
    pub fn values(&self) -> [f64; 15] {
        [
            self.rra, self.rta, self.auc30, self.ate, self.rpe_t, self.rpe_r, self.rel,
            self.rmse, self.delta1, self.acc, self.comp, self.cd, self.h_err, self.v_err,
            self.auc_fov,
        ]
    }

    pub fn from_values(v: [f64; 15]) -> MetricReport {
        MetricReport {
            rra: v[0],
            rta: v[1],
            auc30: v[2],
            ate: v[3],
            rpe_t: v[4],
            rpe_r: v[5],
            rel: v[6],
            rmse: v[7],
            delta1: v[8],
            acc: v[9],
            comp: v[10],
            cd: v[11],
            h_err: v[12],
            v_err: v[13],
            auc_fov: v[14],
        }
    }

    pub fn csv_header() -> String {
        METRIC_COLUMNS.join(",")
    }

    /// One CSV row; floats use shortest round-trip formatting.
    pub fn csv_row(&self) -> String {
        self.values().map(|v| v.to_string()).join(",")
    }

    /// Per-metric mean across sequences; `None` for an empty slice.
    pub fn mean(reports: &[MetricReport]) -> Option<MetricReport> {
        if reports.is_empty() {
            return None;
        }
        let mut sums = [0.0; 15];
        for r in reports {
            for (s, v) in sums.iter_mut().zip(r.values()) {
                *s += v;
            }
        }
        Some(MetricReport::from_values(sums.map(|s| s / reports.len() as f64)))
    }

    /// Checks the range invariants: fractions in `[0, 1]`, errors finite and
    /// non-negative.
    pub fn validate(&self) -> Result<(), MetricsError> {
        let fractions =
            [("RRA", self.rra), ("RTA", self.rta), ("AUC30", self.auc30),
             ("delta1", self.delta1), ("AUC_FoV", self.auc_fov)];
        for (name, v) in fractions {
            if !(0.0..=1.0).contains(&v) {
                return Err(MetricsError::Degenerate(format!("{name} = {v} outside [0,1]")));
            }
        }
        let errors = [
            ("ATE", self.ate),
            ("RPEt", self.rpe_t),
            ("RPEr", self.rpe_r),
            ("Rel", self.rel),
            ("RMSE", self.rmse),
            ("Acc", self.acc),
            ("Comp", self.comp),
            ("CD", self.cd),
            ("hErr", self.h_err),
            ("vErr", self.v_err),
        ];
        for (name, v) in errors {
            if !v.is_finite() || v < 0.0 {
                return Err(MetricsError::Degenerate(format!("{name} = {v} is not a valid error")));
            }
        }
        Ok(())
    }
}
