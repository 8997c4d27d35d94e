//! Binaural fusion and discrepancy-based window rejection.

use serde::{Deserialize, Serialize};

/// Default discrepancy threshold in CPM.
pub const DEFAULT_TAU_CPM: f64 = 0.52;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub tau_cpm: f64,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tau_cpm: DEFAULT_TAU_CPM,
        }
    }
}

/// Equal-weight fusion of the two ears.
pub fn fuse(rr_left: f64, rr_right: f64) -> f64 {
    rr_left / 2.0 + rr_right / 2.0
}

pub fn discrepancy(rr_left: f64, rr_right: f64) -> f64 {
    (rr_left - rr_right).abs()
}

/// One analysis window joined across ears and ground truth.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowRecord {
    pub window_index: usize,
    pub start_s: f64,
    pub rr_left: Option<f64>,
    pub rr_right: Option<f64>,
    /// Present only when both ears produced an estimate.
    pub rr_fused: Option<f64>,
    pub discrepancy_cpm: Option<f64>,
    pub gt_cpm: Option<f64>,
    pub gt_valid: bool,
    pub accepted: bool,
}

impl WindowRecord {
    /// Builds a record from per-ear estimates. Fused rate and discrepancy
    /// are filled only when both ears are present; `accepted` starts false.
    pub fn from_channels(
        window_index: usize,
        start_s: f64,
        rr_left: Option<f64>,
        rr_right: Option<f64>,
    ) -> Self {
        let (rr_fused, discrepancy_cpm) = match (rr_left, rr_right) {
            (Some(l), Some(r)) => (Some(fuse(l, r)), Some(discrepancy(l, r))),
            _ => (None, None),
        };
        Self {
            window_index,
            start_s,
            rr_left,
            rr_right,
            rr_fused,
            discrepancy_cpm,
            ..Self::default()
        }
    }

    pub fn with_truth(mut self, gt_cpm: Option<f64>, gt_valid: bool) -> Self {
        self.gt_cpm = gt_cpm;
        self.gt_valid = gt_valid && gt_cpm.is_some();
        self
    }

    /// Fused rate, or the single available ear when fusion is unavailable.
    pub fn best_estimate(&self) -> Option<f64> {
        self.rr_fused.or(self.rr_left).or(self.rr_right)
    }

    /// Strict threshold: a window with no discrepancy (one ear missing) is
    /// never accepted.
    pub fn passes(&self, tau_cpm: f64) -> bool {
        self.discrepancy_cpm.is_some_and(|d| d < tau_cpm)
    }
}

/// Sets `accepted` on every record. Records are flagged, never removed.
pub fn reject_outliers(records: &[WindowRecord], tau_cpm: f64) -> Vec<WindowRecord> {
    records
        .iter()
        .map(|r| WindowRecord {
            accepted: r.passes(tau_cpm),
            ..r.clone()
        })
        .collect()
}

/// Fraction of records flagged as accepted; `None` for an empty list.
pub fn retained_fraction(records: &[WindowRecord]) -> Option<f64> {
    if records.is_empty() {
        return None;
    }
    Some(records.iter().filter(|r| r.accepted).count() as f64 / records.len() as f64)
}
