//! Gaze-entropy features over areas of interest, hand-movement activity
//! from wrist IMU, and assembly of the observation/input feature table.

use crate::error::{Error, Result};
use crate::timeseries::{aggregate_seconds, SecondAggregate, TimeSeriesTable};

/// Observation column order of the assembled feature table.
pub const OBSERVATION_COLUMNS: [&str; 10] = [
    "hr", "bcp_mean", "au1", "au2", "au6", "au7", "au12", "au15", "au25", "gte",
];

/// Input column order of the assembled feature table.
pub const INPUT_COLUMNS: [&str; 2] = ["road_users", "hand_activity"];

/// Action units used as stress indicators.
pub const STRESS_AUS: [&str; 4] = ["au1", "au6", "au12", "au15"];

/// Action units used as workload indicators.
pub const WORKLOAD_AUS: [&str; 4] = ["au1", "au2", "au7", "au25"];

/// A rows x cols grid of equally sized areas of interest over the gaze
/// angle plane.
#[derive(Debug, Clone, PartialEq)]
pub struct AoiGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub rows: usize,
    pub cols: usize,
}

impl AoiGrid {
    pub fn new(x_range: (f64, f64), y_range: (f64, f64), rows: usize, cols: usize) -> Result<Self> {
        if !(x_range.1 > x_range.0) || !(y_range.1 > y_range.0) {
            return Err(Error::InvalidArgument(
                "AOI grid ranges must be non-degenerate".into(),
            ));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("AOI grid must have cells".into()));
        }
        Ok(AoiGrid {
            x_min: x_range.0,
            x_max: x_range.1,
            y_min: y_range.0,
            y_max: y_range.1,
            rows,
            cols,
        })
    }

    /// Grid covering the observed range of the session's gaze samples.
    pub fn from_samples(xs: &[f64], ys: &[f64], rows: usize, cols: usize) -> Result<Self> {
        let finite = |vals: &[f64]| {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for &v in vals {
                if v.is_nan() {
                    continue;
                }
                lo = lo.min(v);
                hi = hi.max(v);
            }
            (lo, hi)
        };
        let (x_lo, x_hi) = finite(xs);
        let (y_lo, y_hi) = finite(ys);
        if !x_lo.is_finite() || !y_lo.is_finite() {
            return Err(Error::AllMissing("gaze samples".into()));
        }
        Self::new((x_lo, x_hi), (y_lo, y_hi), rows, cols)
    }

    pub fn n_cells(&self) -> usize {
        self.rows * self.cols
    }

    fn axis_bin(v: f64, lo: f64, hi: f64, n: usize) -> usize {
        // Samples exactly on an interior boundary land in the higher cell;
        // the top edge belongs to the last cell.
        let w = (hi - lo) / n as f64;
        let raw = ((v - lo) / w).floor();
        (raw.max(0.0) as usize).min(n - 1)
    }

    /// Cell index in [0, rows*cols) for a finite sample; None for missing.
    pub fn cell_index(&self, x: f64, y: f64) -> Option<usize> {
        if x.is_nan() || y.is_nan() {
            return None;
        }
        let col = Self::axis_bin(x, self.x_min, self.x_max, self.cols);
        let row = Self::axis_bin(y, self.y_min, self.y_max, self.rows);
        Some(row * self.cols + col)
    }
}

/// Map gaze angle samples to AOI cell indices. Missing samples yield
/// missing entries.
pub fn bin_gaze(gaze_x: &[f64], gaze_y: &[f64], grid: &AoiGrid) -> Result<Vec<Option<usize>>> {
    if gaze_x.is_empty() {
        return Err(Error::Empty("gaze series".into()));
    }
    if gaze_x.len() != gaze_y.len() {
        return Err(Error::Dimension {
            what: "gaze x vs y".into(),
            expected: gaze_x.len(),
            actual: gaze_y.len(),
        });
    }
    Ok(gaze_x
        .iter()
        .zip(gaze_y)
        .map(|(&x, &y)| grid.cell_index(x, y))
        .collect())
}

/// First-order Markov model of an AOI sequence: transition counts, the
/// row-stochastic transition matrix, and empirical occupancy.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    pub n_states: usize,
    /// counts[i * n + j] = observed transitions i -> j.
    pub counts: Vec<u64>,
    /// probs[i * n + j] = p_ij; rows with no departures are all zero.
    pub probs: Vec<f64>,
    /// Empirical occupancy over all non-missing samples.
    pub occupancy: Vec<f64>,
}

impl TransitionModel {
    pub fn prob(&self, i: usize, j: usize) -> f64 {
        self.probs[i * self.n_states + j]
    }

    pub fn row_count(&self, i: usize) -> u64 {
        self.counts[i * self.n_states..(i + 1) * self.n_states]
            .iter()
            .sum()
    }
}

/// Estimate the transition model of an AOI sequence. Consecutive pairs with
/// a missing sample on either side contribute no transition.
pub fn transition_model(aoi: &[Option<usize>], n_states: usize) -> Result<TransitionModel> {
    if n_states == 0 {
        return Err(Error::InvalidArgument("n_states must be >= 1".into()));
    }
    let mut counts = vec![0u64; n_states * n_states];
    let mut occupancy_counts = vec![0u64; n_states];
    let mut total_occ = 0u64;
    let mut transitions = 0u64;
    for &s in aoi {
        if let Some(i) = s {
            if i >= n_states {
                return Err(Error::InvalidArgument(format!(
                    "AOI index {i} out of range for {n_states} states"
                )));
            }
            occupancy_counts[i] += 1;
            total_occ += 1;
        }
    }
    for w in aoi.windows(2) {
        if let (Some(i), Some(j)) = (w[0], w[1]) {
            counts[i * n_states + j] += 1;
            transitions += 1;
        }
    }
    if transitions == 0 {
        return Err(Error::TooShort {
            need: 2,
            got: aoi.iter().filter(|s| s.is_some()).count(),
        });
    }
    let mut probs = vec![0.0; n_states * n_states];
    for i in 0..n_states {
        let row_sum: u64 = counts[i * n_states..(i + 1) * n_states].iter().sum();
        if row_sum > 0 {
            for j in 0..n_states {
                probs[i * n_states + j] = counts[i * n_states + j] as f64 / row_sum as f64;
            }
        }
    }
    let occupancy = occupancy_counts
        .iter()
        .map(|&c| c as f64 / total_occ as f64)
        .collect();
    Ok(TransitionModel {
        n_states,
        counts,
        probs,
        occupancy,
    })
}

/// Stationary gaze entropy in bits: -sum p_i log2 p_i, with 0 log 0 = 0.
pub fn sge(occupancy: &[f64]) -> Result<f64> {
    if occupancy.is_empty() {
        return Err(Error::Empty("occupancy vector".into()));
    }
    let mut sum = 0.0;
    for &p in occupancy {
        if p < -1e-12 || p.is_nan() {
            return Err(Error::InvalidArgument(
                "occupancy entries must be non-negative".into(),
            ));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "occupancy must sum to 1 (got {sum})"
        )));
    }
    Ok(-occupancy
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.log2())
        .sum::<f64>())
}

/// Gaze transition entropy in bits: -sum_i pi_i sum_j p_ij log2 p_ij.
/// Rows with no observed departures contribute zero.
pub fn gte(model: &TransitionModel) -> f64 {
    let n = model.n_states;
    let mut h = 0.0;
    for i in 0..n {
        if model.row_count(i) == 0 {
            continue;
        }
        let mut row_h = 0.0;
        for j in 0..n {
            let p = model.prob(i, j);
            if p > 0.0 {
                row_h += p * p.log2();
            }
        }
        h -= model.occupancy[i] * row_h;
    }
    h
}

/// GTE over sliding windows of the AOI sequence. Each value is timestamped
/// at the window's last sample index; windows with no valid transition are
/// missing.
pub fn windowed_gte(
    aoi: &[Option<usize>],
    n_states: usize,
    window: usize,
    step: usize,
) -> Result<Vec<(usize, Option<f64>)>> {
    if window < 2 {
        return Err(Error::InvalidArgument("window must be >= 2".into()));
    }
    if step < 1 {
        return Err(Error::InvalidArgument("step must be >= 1".into()));
    }
    if window > aoi.len() {
        return Err(Error::TooShort {
            need: window,
            got: aoi.len(),
        });
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + window <= aoi.len() {
        let end = start + window;
        let value = transition_model(&aoi[start..end], n_states)
            .ok()
            .map(|m| gte(&m));
        out.push((end - 1, value));
        start += step;
    }
    Ok(out)
}

/// Euclidean magnitude of a 3-axis sample series.
pub fn magnitude3(x: &[f64], y: &[f64], z: &[f64]) -> Result<Vec<f64>> {
    if x.len() != y.len() || x.len() != z.len() {
        return Err(Error::Dimension {
            what: "3-axis series".into(),
            expected: x.len(),
            actual: y.len().min(z.len()),
        });
    }
    Ok(x.iter()
        .zip(y)
        .zip(z)
        .map(|((&a, &b), &c)| (a * a + b * b + c * c).sqrt())
        .collect())
}

/// 1 where the value strictly exceeds the series mean (over present
/// samples), else 0; missing stays missing.
pub fn above_mean_indicator(values: &[f64]) -> Result<Vec<f64>> {
    let present: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
    if present.is_empty() {
        return Err(Error::Empty("indicator input".into()));
    }
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    Ok(values
        .iter()
        .map(|&v| {
            if v.is_nan() {
                f64::NAN
            } else if v > mean {
                1.0
            } else {
                0.0
            }
        })
        .collect())
}

/// Hand-movement indicator from wrist accelerometer and gyroscope samples:
/// 1 in any second where either sensor's magnitude strictly exceeds its
/// session mean. Aggregated to 1 Hz by per-second max so brief bursts
/// survive at the model's time resolution.
pub fn imu_activity(
    timestamps: &[f64],
    accel: [&[f64]; 3],
    gyro: [&[f64]; 3],
) -> Result<TimeSeriesTable> {
    if timestamps.is_empty() {
        return Err(Error::Empty("IMU samples".into()));
    }
    let accel_mag = magnitude3(accel[0], accel[1], accel[2])?;
    let gyro_mag = magnitude3(gyro[0], gyro[1], gyro[2])?;
    if accel_mag.len() != timestamps.len() || gyro_mag.len() != timestamps.len() {
        return Err(Error::Dimension {
            what: "IMU series vs timestamps".into(),
            expected: timestamps.len(),
            actual: accel_mag.len().min(gyro_mag.len()),
        });
    }
    let accel_ind = above_mean_indicator(&accel_mag)?;
    let gyro_ind = above_mean_indicator(&gyro_mag)?;
    let either: Vec<f64> = accel_ind
        .iter()
        .zip(&gyro_ind)
        .map(|(&a, &g)| {
            if a.is_nan() && g.is_nan() {
                f64::NAN
            } else {
                (a.max(0.0)).max(g.max(0.0))
            }
        })
        .collect();
    let (grid, agg) = aggregate_seconds(timestamps, &either, SecondAggregate::Max)?;
    TimeSeriesTable::new(grid, vec!["hand_activity".to_string()], vec![agg]).map(|mut t| {
        t.set_sample_period(Some(1.0));
        t
    })
}

/// Inputs to [`assemble_feature_table`], all on a shared 1 Hz grid.
pub struct FeatureSeries<'a> {
    pub hr: &'a [f64],
    pub bcp_mean: &'a [f64],
    pub bcp_prob: &'a [f64],
    /// Named AU intensity series; must include exactly the union of
    /// [`STRESS_AUS`] and [`WORKLOAD_AUS`].
    pub au: Vec<(&'a str, &'a [f64])>,
    pub gte: &'a [f64],
    pub road_users: &'a [f64],
    pub hand_activity: &'a [f64],
}

/// Assemble the final observation/input table on the 1 Hz grid:
/// observation columns `hr, bcp_mean, au1, au2, au6, au7, au12, au15,
/// au25, gte` and input columns `road_users, hand_activity`. AU
/// intensities are clamped to [0, 5].
pub fn assemble_feature_table(series: FeatureSeries<'_>) -> Result<TimeSeriesTable> {
    let len = series.hr.len();
    let check = |name: &str, s: &[f64]| -> Result<()> {
        if s.len() != len {
            return Err(Error::GridMismatch(format!(
                "column `{name}` has {} rows, expected {len}",
                s.len()
            )));
        }
        Ok(())
    };
    check("bcp_mean", series.bcp_mean)?;
    check("bcp_prob", series.bcp_prob)?;
    check("gte", series.gte)?;
    check("road_users", series.road_users)?;
    check("hand_activity", series.hand_activity)?;

    let au_order = ["au1", "au2", "au6", "au7", "au12", "au15", "au25"];
    let mut au_cols: Vec<Vec<f64>> = Vec::with_capacity(au_order.len());
    for want in au_order {
        let (_, s) = series
            .au
            .iter()
            .find(|(n, _)| *n == want)
            .ok_or_else(|| Error::MissingColumn(want.to_string()))?;
        check(want, s)?;
        au_cols.push(
            s.iter()
                .map(|&v| if v.is_nan() { v } else { v.clamp(0.0, 5.0) })
                .collect(),
        );
    }

    let timestamps: Vec<f64> = (0..len).map(|i| i as f64).collect();
    let mut names: Vec<String> = vec!["hr".into(), "bcp_mean".into()];
    let mut columns: Vec<Vec<f64>> = vec![series.hr.to_vec(), series.bcp_mean.to_vec()];
    for (name, col) in au_order.iter().zip(au_cols) {
        names.push(name.to_string());
        columns.push(col);
    }
    names.push("gte".into());
    columns.push(series.gte.to_vec());
    names.push("road_users".into());
    columns.push(series.road_users.to_vec());
    names.push("hand_activity".into());
    columns.push(series.hand_activity.to_vec());

    let mut t = TimeSeriesTable::new(timestamps, names, columns)?;
    t.set_sample_period(Some(1.0));
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn seq(states: &[usize]) -> Vec<Option<usize>> {
        states.iter().map(|&s| Some(s)).collect()
    }

    #[test]
    fn corner_cell_and_boundary_tie() {
        let grid = AoiGrid::new((0.0, 4.0), (0.0, 4.0), 4, 4).unwrap();
        assert_eq!(grid.cell_index(0.5, 0.5), Some(0));
        // Interior boundary goes to the higher cell.
        assert_eq!(grid.cell_index(1.0, 0.5), Some(1));
        // Top edge belongs to the last cell.
        assert_eq!(grid.cell_index(4.0, 4.0), Some(15));
    }

    #[test]
    fn diagonal_samples_hand_mapped() {
        let grid = AoiGrid::new((0.0, 4.0), (0.0, 4.0), 4, 4).unwrap();
        let xs = [0.0, 0.8, 1.6, 2.4, 3.2, 4.0];
        let aoi = bin_gaze(&xs, &xs, &grid).unwrap();
        // Hand mapping: cells (r,c) = (0,0),(0,0),(1,1),(2,2),(3,3),(3,3).
        let expect = [0usize, 0, 5, 10, 15, 15];
        let got: Vec<usize> = aoi.iter().map(|s| s.unwrap()).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn bin_gaze_missing_and_errors() {
        let grid = AoiGrid::new((0.0, 4.0), (0.0, 4.0), 4, 4).unwrap();
        let aoi = bin_gaze(&[0.5, f64::NAN], &[0.5, 1.0], &grid).unwrap();
        assert_eq!(aoi[1], None);
        assert!(bin_gaze(&[], &[], &grid).is_err());
        assert!(AoiGrid::new((1.0, 1.0), (0.0, 4.0), 4, 4).is_err());
    }

    #[test]
    fn transition_counts_alternation() {
        let m = transition_model(&seq(&[0, 1, 0, 1, 0]), 2).unwrap();
        assert_eq!(m.prob(0, 1), 1.0);
        assert_eq!(m.prob(1, 0), 1.0);
    }

    #[test]
    fn transition_counts_single_state() {
        let m = transition_model(&seq(&[0, 0, 0, 0]), 1).unwrap();
        assert_eq!(m.prob(0, 0), 1.0);
        assert_eq!(m.occupancy, vec![1.0]);
    }

    #[test]
    fn transition_counts_hand_example() {
        // A,A,B,A,B,B: p(A->A)=1/3, p(A->B)=2/3, p(B->A)=1/2, p(B->B)=1/2.
        let m = transition_model(&seq(&[0, 0, 1, 0, 1, 1]), 2).unwrap();
        assert!((m.prob(0, 0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((m.prob(0, 1) - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.prob(1, 0) - 0.5).abs() < 1e-15);
        assert!((m.prob(1, 1) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn transition_skips_missing_pairs() {
        let aoi = vec![Some(0), None, Some(1), Some(1)];
        let m = transition_model(&aoi, 2).unwrap();
        // Only the 1->1 pair is a valid transition.
        assert_eq!(m.counts, vec![0, 0, 0, 1]);
        assert!(transition_model(&[Some(0), None, Some(1)], 2).is_err());
    }

    #[test]
    fn row_sums_are_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let states: Vec<Option<usize>> = (0..500).map(|_| Some(rng.gen_range(0..5))).collect();
        let m = transition_model(&states, 5).unwrap();
        for i in 0..5 {
            if m.row_count(i) > 0 {
                let s: f64 = (0..5).map(|j| m.prob(i, j)).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
        let occ_sum: f64 = m.occupancy.iter().sum();
        assert!((occ_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sge_fixtures() {
        let uniform16 = vec![1.0 / 16.0; 16];
        assert!((sge(&uniform16).unwrap() - 4.0).abs() < 1e-12);
        let degenerate = vec![1.0, 0.0, 0.0];
        assert!(sge(&degenerate).unwrap().abs() < 1e-12);
        let dyadic = vec![0.5, 0.25, 0.25];
        assert!((sge(&dyadic).unwrap() - 1.5).abs() < 1e-12);
        assert!(sge(&[0.5, 0.6]).is_err());
        assert!(sge(&[-0.1, 1.1]).is_err());
    }

    #[test]
    fn gte_fixtures() {
        // Deterministic alternation: all p in {0,1} -> 0 bits.
        let m = transition_model(&seq(&[0, 1, 0, 1, 0, 1]), 2).unwrap();
        assert!(gte(&m).abs() < 1e-12);
        // Uniform 4-state chain -> 2 bits.
        let n = 4;
        let m = TransitionModel {
            n_states: n,
            counts: vec![1; n * n],
            probs: vec![0.25; n * n],
            occupancy: vec![0.25; n],
        };
        assert!((gte(&m) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn gte_hand_example() {
        // Sequence A,A,B,A,B,B with occupancy (1/2, 1/2).
        let m = transition_model(&seq(&[0, 0, 1, 0, 1, 1]), 2).unwrap();
        let third: f64 = 1.0 / 3.0;
        let expect = -(0.5 * (third * third.log2() + 2.0 * third * (2.0 * third).log2())
            + 0.5 * (0.5f64.log2()));
        assert!((gte(&m) - expect).abs() < 1e-12);
    }

    #[test]
    fn gte_at_most_sge_of_occupancy() {
        // Model level, where pi is the stationary vector of the chain and
        // conditioning reduces entropy exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let n = rng.gen_range(2..6);
            let mut probs = vec![0.0; n * n];
            for i in 0..n {
                let row: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
                let s: f64 = row.iter().sum();
                for j in 0..n {
                    probs[i * n + j] = row[j] / s;
                }
            }
            // Stationary vector by power iteration.
            let mut pi = vec![1.0 / n as f64; n];
            for _ in 0..2000 {
                let mut next = vec![0.0; n];
                for i in 0..n {
                    for j in 0..n {
                        next[j] += pi[i] * probs[i * n + j];
                    }
                }
                pi = next;
            }
            let m = TransitionModel {
                n_states: n,
                counts: vec![1; n * n],
                probs,
                occupancy: pi.clone(),
            };
            let h_cond = gte(&m);
            let h_marg = sge(&pi).unwrap();
            assert!(
                h_cond <= h_marg + 1e-9,
                "GTE {h_cond} > SGE {h_marg} for n={n}"
            );
            // pi is a left fixed point of the transition matrix.
            for j in 0..n {
                let flow: f64 = (0..n).map(|i| pi[i] * m.prob(i, j)).sum();
                assert!((flow - pi[j]).abs() < 1e-8);
            }
        }

        // Empirical sequences: occupancy differs from the source marginal
        // by endpoint effects of order 1/len, so allow that much slack.
        for seed in 0..30 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let n = rng.gen_range(2..6);
            let len = rng.gen_range(20..200);
            let states: Vec<Option<usize>> =
                (0..len).map(|_| Some(rng.gen_range(0..n))).collect();
            let m = transition_model(&states, n).unwrap();
            let h_cond = gte(&m);
            let h_marg = sge(&m.occupancy).unwrap();
            let slack = 4.0 * (n as f64).log2() / len as f64;
            assert!(
                h_cond <= h_marg + slack,
                "GTE {h_cond} > SGE {h_marg} + {slack} for n={n}, len={len}"
            );
            assert!(h_cond >= -1e-12 && h_cond <= (n as f64).log2() + 1e-12);
        }
    }

    #[test]
    fn gte_invariant_under_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let n = 4;
            let len = 100;
            let states: Vec<usize> = (0..len).map(|_| rng.gen_range(0..n)).collect();
            // A fixed permutation of state labels.
            let perm = [2usize, 0, 3, 1];
            let orig = transition_model(&seq(&states), n).unwrap();
            let relabeled: Vec<usize> = states.iter().map(|&s| perm[s]).collect();
            let perm_model = transition_model(&seq(&relabeled), n).unwrap();
            assert!((gte(&orig) - gte(&perm_model)).abs() < 1e-12);
        }
    }

    #[test]
    fn windowed_gte_fixtures() {
        // Stationary alternation: every window deterministic -> 0.
        let alt: Vec<Option<usize>> = (0..40).map(|i| Some(i % 2)).collect();
        let w = windowed_gte(&alt, 2, 10, 5).unwrap();
        assert!(w.iter().all(|(_, v)| v.unwrap().abs() < 1e-12));
        assert_eq!(w[0].0, 9);
        assert_eq!(w[1].0, 14);

        // Full-length window reduces to gte of the whole sequence.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let states: Vec<Option<usize>> = (0..30).map(|_| Some(rng.gen_range(0..3))).collect();
        let w = windowed_gte(&states, 3, 30, 1).unwrap();
        assert_eq!(w.len(), 1);
        let full = gte(&transition_model(&states, 3).unwrap());
        assert!((w[0].1.unwrap() - full).abs() < 1e-12);

        assert!(windowed_gte(&states, 3, 31, 1).is_err());
    }

    #[test]
    fn windowed_gte_rises_after_regime_switch() {
        // Alternation for the first half, near-uniform mixing after.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut states = Vec::new();
        for i in 0..300 {
            states.push(Some(i % 2));
        }
        for _ in 0..300 {
            states.push(Some(rng.gen_range(0..2)));
        }
        let w = windowed_gte(&states, 2, 100, 50).unwrap();
        let first = w.first().unwrap().1.unwrap();
        let last = w.last().unwrap().1.unwrap();
        assert!(first.abs() < 1e-12);
        assert!(last > 0.8, "expected mixing entropy near 1 bit, got {last}");
    }

    #[test]
    fn indicator_hand_example() {
        // Magnitudes (1,1,4): mean 2, indicator (0,0,1).
        let ind = above_mean_indicator(&[1.0, 1.0, 4.0]).unwrap();
        assert_eq!(ind, vec![0.0, 0.0, 1.0]);
        // Constant magnitudes: nothing strictly above the mean.
        let ind = above_mean_indicator(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(ind, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn imu_activity_spike_second() {
        // Flat signal with one spike: indicator 1 only in the spike's second.
        let n = 50;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 * 0.1).collect();
        let mut ax = vec![0.1; n];
        ax[23] = 5.0; // t = 2.3
        let zeros = vec![0.0; n];
        let t = imu_activity(&ts, [&ax, &zeros, &zeros], [&zeros, &zeros, &zeros]).unwrap();
        let col = t.column("hand_activity").unwrap();
        assert_eq!(t.len(), 5);
        for (s, &v) in col.iter().enumerate() {
            if s == 2 {
                assert_eq!(v, 1.0);
            } else {
                assert_eq!(v, 0.0, "second {s}");
            }
        }
    }

    #[test]
    fn assemble_twelve_columns_and_clamp() {
        let len = 100;
        let flat = vec![1.0; len];
        let mut au1 = vec![2.0; len];
        au1[3] = 5.3; // clamped to 5.0
        let series = FeatureSeries {
            hr: &flat,
            bcp_mean: &flat,
            bcp_prob: &flat,
            au: vec![
                ("au1", au1.as_slice()),
                ("au2", &flat),
                ("au6", &flat),
                ("au7", &flat),
                ("au12", &flat),
                ("au15", &flat),
                ("au25", &flat),
            ],
            gte: &flat,
            road_users: &flat,
            hand_activity: &flat,
        };
        let t = assemble_feature_table(series).unwrap();
        assert_eq!(t.len(), len);
        assert_eq!(t.n_columns(), 12);
        assert_eq!(t.column("au1").unwrap()[3], 5.0);
        let expect: Vec<&str> = OBSERVATION_COLUMNS
            .iter()
            .chain(INPUT_COLUMNS.iter())
            .copied()
            .collect();
        let got: Vec<&str> = t.names().iter().map(|s| s.as_str()).collect();
        assert_eq!(got, expect);
    }

    #[test]
    fn assemble_rejects_grid_mismatch() {
        let a = vec![1.0; 100];
        let b = vec![1.0; 99];
        let series = FeatureSeries {
            hr: &a,
            bcp_mean: &a,
            bcp_prob: &a,
            au: vec![
                ("au1", b.as_slice()),
                ("au2", &a),
                ("au6", &a),
                ("au7", &a),
                ("au12", &a),
                ("au15", &a),
                ("au25", &a),
            ],
            gte: &a,
            road_users: &a,
            hand_activity: &a,
        };
        assert!(matches!(
            assemble_feature_table(series),
            Err(Error::GridMismatch(_))
        ));
    }
}
