//! Orchestration of the higher-level analyses: rolling-window refits,
//! change-point segmented fits, normalized latent association, transition
//! coefficient synchrony, and per-participant summaries.

use serde::Serialize;

use crate::changepoint::SegmentBoundaries;
use crate::error::{Error, Result};
use crate::estimation::{
    compare_models, fit, prepare_sequences, FitOptions, FitResult, SequenceData,
};
use crate::kalman::{kalman_filter, rts_smoother};
use crate::linalg::discrete_lyapunov;
use crate::model::ModelSpec;
use crate::sync::{peak_pick, wcc, PeakSeries, WccMatrix};
use crate::timeseries::{lag_restructure, TimeSeriesTable};

/// Which latent scale normalizes the association coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentScale {
    /// Model-implied stationary standard deviations from the discrete
    /// Lyapunov equation (default).
    Stationary,
    /// Sample standard deviation of the smoothed latent trajectories.
    SmoothedSample,
}

/// Latent-noise association q2 divided by the product of the two latent
/// standard deviations implied by (A, Q). Requires a converged two-latent
/// fit and a stationary transition matrix.
pub fn normalized_association(fit: &FitResult) -> Result<f64> {
    normalized_association_with(fit, LatentScale::Stationary, &[])
}

pub fn normalized_association_with(
    fit: &FitResult,
    scale: LatentScale,
    data: &[SequenceData],
) -> Result<f64> {
    if !fit.converged {
        return Err(Error::NotConverged("normalized association".into()));
    }
    let params = fit.params()?;
    let m = params.transition.nrows();
    if m < 2 {
        return Err(Error::InvalidArgument(
            "association needs two latent variables".into(),
        ));
    }
    let q2 = params.state_noise[(0, 1)];
    let (sd0, sd1) = match scale {
        LatentScale::Stationary => {
            let stat = discrete_lyapunov(&params.transition, &params.state_noise)?;
            (stat[(0, 0)].sqrt(), stat[(1, 1)].sqrt())
        }
        LatentScale::SmoothedSample => {
            let mut acc = [0.0f64; 2];
            let mut sums = [0.0f64; 2];
            let mut count = 0.0f64;
            for seq in data {
                let filter = kalman_filter(&params, &seq.observations, seq.inputs.as_ref())?;
                let smooth = rts_smoother(&params, &filter)?;
                for x in &smooth.smoothed_means {
                    for j in 0..2 {
                        sums[j] += x[j];
                        acc[j] += x[j] * x[j];
                    }
                    count += 1.0;
                }
            }
            if count < 2.0 {
                return Err(Error::TooShort { need: 2, got: 0 });
            }
            let var = |j: usize| (acc[j] - sums[j] * sums[j] / count) / (count - 1.0);
            (var(0).sqrt(), var(1).sqrt())
        }
    };
    if !(sd0 > 0.0 && sd1 > 0.0) {
        return Err(Error::Numerical("degenerate latent scale".into()));
    }
    Ok(q2 / (sd0 * sd1))
}

/// One rolling window's fitted coefficients.
#[derive(Debug, Clone, Serialize)]
pub struct RollingFitEntry {
    pub start_s: f64,
    pub end_s: f64,
    /// Stress transition coefficient (label B.b1).
    pub b1: f64,
    /// Workload transition coefficient (label B.b4).
    pub b4: f64,
    /// Latent association (label Q.q2).
    pub q2: f64,
    pub minus_two_ll: f64,
    pub converged: bool,
}

/// Rolling-window refit series.
#[derive(Debug, Clone, Serialize)]
pub struct RollingFitSeries {
    pub window_s: f64,
    pub step_s: f64,
    pub entries: Vec<RollingFitEntry>,
}

impl RollingFitSeries {
    /// Transition-coefficient series with non-converged windows masked.
    pub fn masked_series(&self) -> (Vec<f64>, Vec<f64>) {
        let b1 = self
            .entries
            .iter()
            .map(|e| if e.converged { e.b1 } else { f64::NAN })
            .collect();
        let b4 = self
            .entries
            .iter()
            .map(|e| if e.converged { e.b4 } else { f64::NAN })
            .collect();
        (b1, b4)
    }
}

fn label_or_nan(fit: &FitResult, label: &str) -> f64 {
    fit.estimate(label).unwrap_or(f64::NAN)
}

/// Options for rolling and segmented fits.
#[derive(Debug, Clone)]
pub struct RefitOptions {
    /// Timestep restructuring stride in rows.
    pub stride: usize,
    pub fit: FitOptions,
    /// Initialize each window from the previous window's estimates.
    pub warm_start: bool,
}

impl Default for RefitOptions {
    fn default() -> Self {
        RefitOptions {
            stride: 10,
            fit: FitOptions::default(),
            warm_start: true,
        }
    }
}

/// Fit the model over sliding windows (`window_s` seconds long, advancing
/// `step_s` seconds). Consecutive windows are warm-started from the
/// previous estimates by default; non-converged windows are flagged, not
/// dropped.
pub fn rolling_fit(
    table: &TimeSeriesTable,
    spec: &ModelSpec,
    window_s: f64,
    step_s: f64,
    opts: &RefitOptions,
) -> Result<RollingFitSeries> {
    let period = table
        .sample_period()
        .ok_or_else(|| Error::InvalidArgument("rolling_fit needs a resampled table".into()))?;
    let window = (window_s / period).round() as usize;
    let step = (step_s / period).round() as usize;
    if window == 0 || step == 0 {
        return Err(Error::InvalidArgument("window and step must be > 0".into()));
    }
    if table.len() < window {
        return Err(Error::TooShort {
            need: window,
            got: table.len(),
        });
    }
    let mut entries = Vec::new();
    let mut warm: Option<crate::model::PackedParams> = None;
    let mut start = 0usize;
    while start + window <= table.len() {
        let slice = table.slice_rows(start, start + window);
        let rs = lag_restructure(&slice, opts.stride)?;
        let data = prepare_sequences(&rs, spec)?;
        let mut fit_opts = opts.fit.clone();
        if opts.warm_start {
            fit_opts.init = warm.clone();
        }
        let result = fit(spec, &data, &fit_opts)?;
        if result.converged && opts.warm_start {
            warm = Some(result.estimates.clone());
        }
        entries.push(RollingFitEntry {
            start_s: table.timestamps()[start],
            end_s: table.timestamps()[start + window - 1] + period,
            b1: label_or_nan(&result, "B.b1"),
            b4: label_or_nan(&result, "B.b4"),
            q2: label_or_nan(&result, "Q.q2"),
            minus_two_ll: result.minus_two_ll,
            converged: result.converged,
        });
        start += step;
    }
    Ok(RollingFitSeries {
        window_s,
        step_s,
        entries,
    })
}

/// One segment's span (rows) and fit.
#[derive(Debug)]
pub struct SegmentFit {
    pub start_row: usize,
    pub end_row: usize,
    pub fit: FitResult,
}

/// Independent fits per change-point segment. Segments shorter than
/// `min_len` rows are merged with their predecessor (the leading segment
/// merges forward).
pub fn segment_fit(
    table: &TimeSeriesTable,
    spec: &ModelSpec,
    boundaries: &SegmentBoundaries,
    min_len: usize,
    opts: &RefitOptions,
) -> Result<Vec<SegmentFit>> {
    let len = table.len();
    if len == 0 {
        return Err(Error::Empty("segment_fit table".into()));
    }
    let mut cuts: Vec<usize> = Vec::new();
    for &b in &boundaries.indices {
        if b == 0 || b >= len {
            return Err(Error::InvalidArgument(format!(
                "boundary {b} outside (0, {len})"
            )));
        }
        cuts.push(b);
    }
    cuts.sort_unstable();
    cuts.dedup();

    // Build spans, merging short ones with their predecessor.
    let mut spans: Vec<(usize, usize)> = Vec::new();
    let mut start = 0usize;
    for &cut in cuts.iter().chain(std::iter::once(&len)) {
        spans.push((start, cut));
        start = cut;
    }
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for span in spans {
        let short = span.1 - span.0 < min_len;
        match merged.last_mut() {
            Some(prev) if short => prev.1 = span.1,
            _ => merged.push(span),
        }
    }
    if let [only] = merged.as_slice() {
        if only.1 - only.0 < min_len {
            return Err(Error::TooShort {
                need: min_len,
                got: only.1 - only.0,
            });
        }
    }
    // A short leading segment merges forward.
    if merged.len() > 1 && merged[0].1 - merged[0].0 < min_len {
        let first = merged.remove(0);
        merged[0].0 = first.0;
    }

    let mut out = Vec::with_capacity(merged.len());
    for (a, b) in merged {
        let slice = table.slice_rows(a, b);
        let rs = lag_restructure(&slice, opts.stride)?;
        let data = prepare_sequences(&rs, spec)?;
        let fit_result = fit(spec, &data, &opts.fit)?;
        out.push(SegmentFit {
            start_row: a,
            end_row: b,
            fit: fit_result,
        });
    }
    Ok(out)
}

/// Synchrony of the two transition-coefficient series from a rolling fit:
/// the WCC matrix, its peak-picked lags, and the per-window lag-zero
/// cross-correlation. Non-converged windows are masked missing.
pub fn transition_coefficient_wcc(
    rolling: &RollingFitSeries,
    window: usize,
    window_inc: usize,
    max_lag: usize,
    lag_inc: usize,
) -> Result<(WccMatrix, PeakSeries, Vec<(usize, f64)>)> {
    let (b1, b4) = rolling.masked_series();
    let n_converged = b1.iter().filter(|v| !v.is_nan()).count();
    if n_converged < window {
        return Err(Error::TooShort {
            need: window,
            got: n_converged,
        });
    }
    let matrix = wcc(&b1, &b4, window, window_inc, max_lag, lag_inc)?;
    if matrix.all_missing() {
        return Err(Error::Numerical(
            "all windowed correlations undefined (degenerate series)".into(),
        ));
    }
    let peaks = peak_pick(&matrix);
    let lag_zero: Vec<(usize, f64)> = matrix
        .window_starts
        .iter()
        .enumerate()
        .map(|(row, &start)| {
            let col = matrix.lags.iter().position(|&l| l == 0).unwrap_or(0);
            (start, matrix.value(row, col))
        })
        .collect();
    Ok((matrix, peaks, lag_zero))
}

/// Cross-participant summary row of the two-model analysis.
#[derive(Debug, Clone, Serialize)]
pub struct ParticipantSummary {
    pub participant: String,
    pub delta_ll: f64,
    pub normalized_association: f64,
    pub road_to_stress: f64,
    pub road_to_workload: f64,
    pub hand_to_stress: f64,
    pub hand_to_workload: f64,
    pub b1: f64,
    pub b4: f64,
}

/// Assemble the per-participant record from a base and a two-latent fit of
/// the same data. Both fits must have converged.
pub fn participant_summary(
    participant: &str,
    base_fit: &FitResult,
    alt_fit: &FitResult,
) -> Result<ParticipantSummary> {
    if !base_fit.converged || !alt_fit.converged {
        return Err(Error::NotConverged("participant summary".into()));
    }
    let cmp = compare_models(base_fit, alt_fit)?;
    Ok(ParticipantSummary {
        participant: participant.to_string(),
        delta_ll: cmp.delta_ll,
        normalized_association: normalized_association(alt_fit)?,
        road_to_stress: label_or_nan(alt_fit, "C.C11"),
        road_to_workload: label_or_nan(alt_fit, "C.C21"),
        hand_to_stress: label_or_nan(alt_fit, "C.C12"),
        hand_to_workload: label_or_nan(alt_fit, "C.C22"),
        b1: label_or_nan(alt_fit, "B.b1"),
        b4: label_or_nan(alt_fit, "B.b4"),
    })
}
