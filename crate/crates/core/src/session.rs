//! End-to-end processing of a two-ear recording.
//!
//! Each ear runs noise suppression followed by rate tracking on its own
//! thread; the ears share nothing until their per-window rates are joined,
//! fused and, when a belt trace is present, matched with ground truth.

use serde::{Deserialize, Serialize};

use crate::dsp::{denoise, AnsConfig, DenoiseMode, LmsConfig};
use crate::error::{param, Error, Result};
use crate::fusion::{reject_outliers, FusionConfig, WindowRecord};
use crate::ground_truth::{ground_truth, GtConfig, GtWindow};
use crate::rr::{track, RrConfig, WindowOutcome};
use crate::signal::SampleBlock;

/// Every tunable of the pipeline, grouped the way the config file is.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub denoise: AnsConfig,
    pub lms: LmsConfig,
    pub estimator: RrConfig,
    pub fusion: FusionConfig,
    pub ground_truth: GtConfig,
}

impl PipelineConfig {
    /// Suppressor settings with the `[lms]` section folded in.
    pub fn ans(&self) -> AnsConfig {
        AnsConfig {
            lms: self.lms,
            ..self.denoise
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.lms.validate()?;
        self.estimator.validate()?;
        if self.denoise.sample_rate_hz != self.estimator.input_rate_hz {
            return param(format!(
                "denoise runs at {} Hz but the estimator expects {} Hz",
                self.denoise.sample_rate_hz, self.estimator.input_rate_hz
            ));
        }
        if !(self.fusion.tau_cpm >= 0.0) {
            return param(format!(
                "tau must be non-negative, got {}",
                self.fusion.tau_cpm
            ));
        }
        Ok(())
    }

    /// Selects the suppressor variant in both `[denoise]` and `[lms]`.
    pub fn set_mode(&mut self, mode: DenoiseMode) {
        self.denoise = self.denoise.with_mode(mode);
        if let Some(m) = mode.lms_mode() {
            self.lms.mode = m;
        }
    }

    /// Sets the analysis window on both the estimator and ground truth.
    pub fn set_window(&mut self, window_s: f64, overlap: f64) {
        self.estimator.window_s = window_s;
        self.estimator.overlap = overlap;
        self.ground_truth.window_s = window_s;
        self.ground_truth.overlap = overlap;
    }
}

/// Lockstep in-ear and outer-ear signals of one ear.
#[derive(Debug, Clone, PartialEq)]
pub struct EarInput {
    pub iem: SampleBlock,
    pub oem: SampleBlock,
}

#[derive(Debug)]
pub struct EarOutput {
    pub cleaned: SampleBlock,
    /// Band-passed in-ear signal, the reference for noise reduction.
    pub filtered_iem: SampleBlock,
    pub windows: Vec<WindowOutcome>,
}

impl EarOutput {
    pub fn rate(&self, window_index: usize) -> Option<f64> {
        self.windows
            .get(window_index)
            .filter(|w| w.window_index == window_index)
            .and_then(|w| w.result.as_ref().ok())
            .map(|p| p.rate_cpm)
    }
}

pub fn process_ear(ear: &EarInput, cfg: &PipelineConfig) -> Result<EarOutput> {
    let out = denoise(&ear.iem, &ear.oem, &cfg.ans())?;
    let windows = track(&out.cleaned, &cfg.estimator)?;
    Ok(EarOutput {
        cleaned: out.cleaned,
        filtered_iem: out.filtered_iem,
        windows,
    })
}

#[derive(Debug)]
pub struct SessionOutput {
    pub left: EarOutput,
    pub right: EarOutput,
    pub truth: Option<Vec<GtWindow>>,
    /// One record per analysis window, flagged with the configured τ.
    pub records: Vec<WindowRecord>,
}

fn check_windows_agree(cfg: &PipelineConfig) -> Result<()> {
    let (e, g) = (&cfg.estimator, &cfg.ground_truth);
    if e.window_s != g.window_s || e.overlap != g.overlap {
        return param(format!(
            "estimator windows ({} s, overlap {}) differ from ground-truth windows ({} s, overlap {})",
            e.window_s, e.overlap, g.window_s, g.overlap
        ));
    }
    Ok(())
}

/// Joins per-ear window outcomes with optional ground truth.
pub fn join_records(
    left: &[WindowOutcome],
    right: &[WindowOutcome],
    truth: Option<&[GtWindow]>,
    tau_cpm: f64,
) -> Vec<WindowRecord> {
    let n = left.len().max(right.len());
    let rate = |ws: &[WindowOutcome], i: usize| {
        ws.get(i)
            .and_then(|w| w.result.as_ref().ok())
            .map(|p| p.rate_cpm)
    };
    let records: Vec<WindowRecord> = (0..n)
        .map(|i| {
            let start_s = left
                .get(i)
                .or_else(|| right.get(i))
                .map_or(0.0, |w| w.start_s);
            let r = WindowRecord::from_channels(i, start_s, rate(left, i), rate(right, i));
            match truth.and_then(|t| t.get(i)) {
                Some(g) => r.with_truth(g.rate_cpm, g.valid),
                None => r,
            }
        })
        .collect();
    reject_outliers(&records, tau_cpm)
}

/// Runs both ears in parallel and joins the results.
pub fn process_session(
    left: &EarInput,
    right: &EarInput,
    belt: Option<&SampleBlock>,
    cfg: &PipelineConfig,
) -> Result<SessionOutput> {
    cfg.validate()?;
    if belt.is_some() {
        check_windows_agree(cfg)?;
    }
    if left.iem.len() != right.iem.len() {
        return Err(Error::Alignment(format!(
            "left ear has {} samples, right ear {}",
            left.iem.len(),
            right.iem.len()
        )));
    }
    let (l, r, truth) = std::thread::scope(|s| {
        let lh = s.spawn(|| process_ear(left, cfg));
        let rh = s.spawn(|| process_ear(right, cfg));
        let truth = belt.map(|b| ground_truth(b, &cfg.ground_truth)).transpose();
        (
            lh.join().expect("left-ear worker panicked"),
            rh.join().expect("right-ear worker panicked"),
            truth,
        )
    });
    let (left, right, truth) = (l?, r?, truth?);
    let records = join_records(
        &left.windows,
        &right.windows,
        truth.as_deref(),
        cfg.fusion.tau_cpm,
    );
    Ok(SessionOutput {
        left,
        right,
        truth,
        records,
    })
}
