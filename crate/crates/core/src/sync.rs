//! Cross-correlation, windowed cross-correlation (WCC), and peak-picking
//! between two series, used on the stress/workload transition-coefficient
//! signals from rolling fits.
//!
//! Sign convention throughout: a positive lag means the second series is
//! delayed relative to the first, i.e. corr(lag) pairs a[t] with b[t+lag].
//! Missing samples (NaN) drop out of the paired segments.

use crate::error::{Error, Result};

/// Pearson correlation over paired samples, skipping pairs with a missing
/// side. Returns NaN when fewer than 3 pairs remain or either side has
/// zero variance.
fn pearson(pairs: impl Iterator<Item = (f64, f64)>) -> f64 {
    let mut n = 0.0f64;
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (a, b) in pairs {
        if a.is_nan() || b.is_nan() {
            continue;
        }
        n += 1.0;
        sa += a;
        sb += b;
        saa += a * a;
        sbb += b * b;
        sab += a * b;
    }
    if n < 3.0 {
        return f64::NAN;
    }
    let var_a = saa - sa * sa / n;
    let var_b = sbb - sb * sb / n;
    // Relative floor: an exactly-constant segment leaves rounding residue
    // in the two-pass difference.
    let tol_a = 1e-12 * saa.abs().max(1e-300);
    let tol_b = 1e-12 * sbb.abs().max(1e-300);
    if var_a <= tol_a || var_b <= tol_b {
        return f64::NAN;
    }
    let cov = sab - sa * sb / n;
    (cov / (var_a * var_b).sqrt()).clamp(-1.0, 1.0)
}

/// Per-lag Pearson correlation of the overlapping segments of `a` and the
/// lag-shifted `b`, for lags in [-max_lag, +max_lag].
pub fn cross_correlation(a: &[f64], b: &[f64], max_lag: usize) -> Result<Vec<(i64, f64)>> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            what: "cross-correlation series".into(),
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.len() < 3 {
        return Err(Error::TooShort {
            need: 3,
            got: a.len(),
        });
    }
    if max_lag + 2 >= a.len() {
        return Err(Error::InvalidArgument(format!(
            "max_lag {max_lag} too large for series of length {}",
            a.len()
        )));
    }
    let len = a.len() as i64;
    let mut out = Vec::with_capacity(2 * max_lag + 1);
    for lag in -(max_lag as i64)..=max_lag as i64 {
        let r = pearson((0..len).filter_map(|t| {
            let tb = t + lag;
            if tb < 0 || tb >= len {
                None
            } else {
                Some((a[t as usize], b[tb as usize]))
            }
        }));
        out.push((lag, r));
    }
    Ok(out)
}

/// Windowed cross-correlation matrix: rows are window positions, columns
/// are lags. Entries with fewer than 3 overlapping pairs are missing.
#[derive(Debug, Clone)]
pub struct WccMatrix {
    /// Start index of each window row.
    pub window_starts: Vec<usize>,
    /// Lag of each column, in samples.
    pub lags: Vec<i64>,
    /// Row-major correlations; NaN marks missing entries.
    pub values: Vec<f64>,
    pub window: usize,
    pub window_inc: usize,
    pub max_lag: usize,
    pub lag_inc: usize,
}

impl WccMatrix {
    pub fn n_windows(&self) -> usize {
        self.window_starts.len()
    }

    pub fn n_lags(&self) -> usize {
        self.lags.len()
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.lags.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row * self.lags.len()..(row + 1) * self.lags.len()]
    }

    /// True when no entry anywhere is finite.
    pub fn all_missing(&self) -> bool {
        self.values.iter().all(|v| v.is_nan())
    }
}

/// Compute the WCC matrix: for each window position, the Pearson
/// correlation between the window of `a` and the lag-shifted window of
/// `b`, for each lag on the grid.
pub fn wcc(
    a: &[f64],
    b: &[f64],
    window: usize,
    window_inc: usize,
    max_lag: usize,
    lag_inc: usize,
) -> Result<WccMatrix> {
    if a.len() != b.len() {
        return Err(Error::Dimension {
            what: "WCC series".into(),
            expected: a.len(),
            actual: b.len(),
        });
    }
    if window < 4 {
        return Err(Error::InvalidArgument("window must be >= 4".into()));
    }
    if window_inc < 1 || lag_inc < 1 {
        return Err(Error::InvalidArgument("increments must be >= 1".into()));
    }
    if a.len() < window {
        return Err(Error::TooShort {
            need: window,
            got: a.len(),
        });
    }
    let lags: Vec<i64> = {
        let mut v: Vec<i64> = (-(max_lag as i64)..=max_lag as i64)
            .step_by(lag_inc)
            .collect();
        if *v.last().unwrap_or(&0) != max_lag as i64 {
            v.push(max_lag as i64);
        }
        v
    };
    let len = a.len() as i64;
    let mut window_starts = Vec::new();
    let mut values = Vec::new();
    let mut start = 0usize;
    while start + window <= a.len() {
        window_starts.push(start);
        for &lag in &lags {
            let r = pearson((start as i64..(start + window) as i64).filter_map(|t| {
                let tb = t + lag;
                if tb < 0 || tb >= len {
                    None
                } else {
                    Some((a[t as usize], b[tb as usize]))
                }
            }));
            values.push(r);
        }
        start += window_inc;
    }
    Ok(WccMatrix {
        window_starts,
        lags,
        values,
        window,
        window_inc,
        max_lag,
        lag_inc,
    })
}

/// Peak of one WCC row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakEntry {
    pub lag: i64,
    pub r: f64,
    /// False when no interior local maximum existed and the global row
    /// maximum was returned instead.
    pub interior: bool,
}

/// Per-window peak lags; entries are None for all-missing rows.
#[derive(Debug, Clone)]
pub struct PeakSeries {
    pub window_starts: Vec<usize>,
    pub peaks: Vec<Option<PeakEntry>>,
}

/// Prefer higher correlation; break ties toward smaller |lag|, then
/// toward the positive lag.
fn better_peak(current: Option<(i64, f64)>, cand_lag: i64, cand_r: f64) -> bool {
    match current {
        None => true,
        Some((lag, r)) => {
            if cand_r != r {
                cand_r > r
            } else if cand_lag.abs() != lag.abs() {
                cand_lag.abs() < lag.abs()
            } else {
                cand_lag > lag
            }
        }
    }
}

/// Per row, the lag of the maximum correlation restricted to interior
/// local maxima (entries at least as large as both lag-neighbors); when a
/// row has no interior local maximum, the global row maximum is returned
/// and flagged. All-missing rows yield None.
pub fn peak_pick(matrix: &WccMatrix) -> PeakSeries {
    let n_lags = matrix.n_lags();
    let mut peaks = Vec::with_capacity(matrix.n_windows());
    for row_idx in 0..matrix.n_windows() {
        let row = matrix.row(row_idx);
        let mut local: Option<(i64, f64)> = None;
        for c in 1..n_lags.saturating_sub(1) {
            let (prev, cur, next) = (row[c - 1], row[c], row[c + 1]);
            if cur.is_nan() || prev.is_nan() || next.is_nan() {
                continue;
            }
            if cur >= prev && cur >= next && better_peak(local, matrix.lags[c], cur) {
                local = Some((matrix.lags[c], cur));
            }
        }
        let entry = match local {
            Some((lag, r)) => Some(PeakEntry {
                lag,
                r,
                interior: true,
            }),
            None => {
                let mut global: Option<(i64, f64)> = None;
                for (c, &v) in row.iter().enumerate() {
                    if !v.is_nan() && better_peak(global, matrix.lags[c], v) {
                        global = Some((matrix.lags[c], v));
                    }
                }
                global.map(|(lag, r)| PeakEntry {
                    lag,
                    r,
                    interior: false,
                })
            }
        };
        peaks.push(entry);
    }
    PeakSeries {
        window_starts: matrix.window_starts.clone(),
        peaks,
    }
}
