//! Bayesian change-point analysis of a univariate series under the
//! product-partition model with constant within-segment means, plus
//! rare-event segmentation boundaries derived from it.
//!
//! The sampler follows the classic Gibbs scheme over change indicators:
//! conditional on the other indicators, the odds of a change at position i
//! combine a truncated-uniform prior on the change probability p (U(0, p0))
//! with the marginal likelihood under a truncated-uniform prior on the
//! signal-to-noise parameter w (U(0, w0)), both integrals reducing to
//! incomplete beta functions evaluated in log space.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Sampler settings. The 0.2 truncation of both hyperpriors follows the
/// convention of the reference R implementation.
#[derive(Debug, Clone)]
pub struct BcpParams {
    pub iterations: usize,
    pub burnin: usize,
    pub p0: f64,
    pub w0: f64,
}

impl Default for BcpParams {
    fn default() -> Self {
        BcpParams {
            iterations: 500,
            burnin: 50,
            p0: 0.2,
            w0: 0.2,
        }
    }
}

/// Posterior summaries of the change-point analysis.
///
/// `change_prob[i]` is the posterior probability of a change between
/// indices i and i+1 (the last entry is always 0); `posterior_mean` has
/// the input's length and units.
#[derive(Debug, Clone)]
pub struct BcpResult {
    pub posterior_mean: Vec<f64>,
    pub change_prob: Vec<f64>,
    pub iterations: usize,
    pub burnin: usize,
    pub seed: u64,
}

// ---------------------------------------------------------------------
// Log-space special functions (Lanczos log-gamma, incomplete beta).

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation, g = 7, n = 9.
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for the incomplete beta (Lentz's method).
fn betacf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_IT: usize = 400;
    const EPS: f64 = 1e-14;
    const FPMIN: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_IT {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// log of the unregularized lower incomplete beta
/// B(a, b; x) = integral_0^x u^(a-1) (1-u)^(b-1) du.
fn ln_beta_inc(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if x >= 1.0 {
        return ln_beta(a, b);
    }
    if x < (a + 1.0) / (a + b + 2.0) {
        a * x.ln() + b * (-x).ln_1p() - a.ln() + betacf(a, b, x).ln()
    } else {
        // B(a,b;x) = B(a,b) - B(b,a;1-x), with the complement in its
        // convergent branch.
        let y = 1.0 - x;
        let ln_comp = b * y.ln() + a * (-y).ln_1p() - b.ln() + betacf(b, a, y).ln();
        let ln_full = ln_beta(a, b);
        let ratio = (ln_comp - ln_full).exp();
        ln_full + (-ratio).ln_1p()
    }
}

// ---------------------------------------------------------------------
// Block statistics over prefix sums.

struct BlockStats {
    s1: Vec<f64>,
    s2: Vec<f64>,
    n: usize,
    grand_mean: f64,
    total_ss: f64,
}

impl BlockStats {
    fn new(series: &[f64]) -> Self {
        let n = series.len();
        let mut s1 = vec![0.0; n + 1];
        let mut s2 = vec![0.0; n + 1];
        for (i, &v) in series.iter().enumerate() {
            s1[i + 1] = s1[i] + v;
            s2[i + 1] = s2[i] + v * v;
        }
        let grand_mean = s1[n] / n as f64;
        let total_ss = (s2[n] - s1[n] * s1[n] / n as f64).max(0.0);
        BlockStats {
            s1,
            s2,
            n,
            grand_mean,
            total_ss,
        }
    }

    fn sum(&self, a: usize, b: usize) -> f64 {
        self.s1[b] - self.s1[a]
    }

    fn mean(&self, a: usize, b: usize) -> f64 {
        self.sum(a, b) / (b - a) as f64
    }

    /// Within-block sum of squares of [a, b).
    fn within(&self, a: usize, b: usize) -> f64 {
        let s = self.sum(a, b);
        ((self.s2[b] - self.s2[a]) - s * s / (b - a) as f64).max(0.0)
    }

    /// n_j * mean_j^2 term of the between-block sum of squares.
    fn between_term(&self, a: usize, b: usize) -> f64 {
        let s = self.sum(a, b);
        s * s / (b - a) as f64
    }
}

/// Running partition state: change positions plus total within/between
/// sums of squares.
struct PartitionState {
    changes: BTreeSet<usize>,
    within: f64,
    between_term: f64,
}

impl PartitionState {
    fn recompute(&mut self, stats: &BlockStats) {
        let mut within = 0.0;
        let mut between = 0.0;
        let mut start = 0usize;
        for &pos in &self.changes {
            within += stats.within(start, pos + 1);
            between += stats.between_term(start, pos + 1);
            start = pos + 1;
        }
        within += stats.within(start, stats.n);
        between += stats.between_term(start, stats.n);
        self.within = within;
        self.between_term = between;
    }

    fn between(&self, stats: &BlockStats) -> f64 {
        (self.between_term - stats.n as f64 * stats.grand_mean * stats.grand_mean).max(0.0)
    }
}

struct OddsContext {
    n: usize,
    p0: f64,
    w0: f64,
    tiny: f64,
    /// Cached prior log-integrals by change count.
    prior_cache: Vec<f64>,
}

impl OddsContext {
    fn new(n: usize, p0: f64, w0: f64, total_ss: f64) -> Self {
        OddsContext {
            n,
            p0,
            w0,
            tiny: 1e-12 * total_ss.max(1e-300),
            prior_cache: Vec::new(),
        }
    }

    /// log integral_0^p0 p^c (1-p)^(npos-c) dp, cached by c.
    fn ln_prior_int(&mut self, c: usize) -> f64 {
        let npos = self.n - 1;
        while self.prior_cache.len() <= c {
            let k = self.prior_cache.len() as f64;
            self.prior_cache
                .push(ln_beta_inc(k + 1.0, npos as f64 - k + 1.0, self.p0));
        }
        self.prior_cache[c]
    }

    /// log integral_0^w0 w^e (W + B w)^(-(n-1)/2) dw via the substitution
    /// u = Bw / (W + Bw), which turns it into an incomplete beta.
    fn ln_like_int(&self, e: f64, w_ss: f64, b_ss: f64) -> Option<f64> {
        let c2 = (self.n as f64 - 1.0) / 2.0;
        let beta_b = c2 - e - 1.0;
        if beta_b <= 0.0 {
            return None; // more changes than the marginal supports
        }
        if b_ss <= self.tiny {
            // Flat case: integral = W^(-c2) w0^(e+1) / (e+1).
            return Some(-c2 * w_ss.ln() + (e + 1.0) * self.w0.ln() - (e + 1.0).ln());
        }
        let u0 = b_ss * self.w0 / (w_ss + b_ss * self.w0);
        Some(
            (e + 1.0) * (w_ss.ln() - b_ss.ln()) - c2 * w_ss.ln()
                + ln_beta_inc(e + 1.0, beta_b, u0),
        )
    }

    /// Log odds of a change at a position: split vs merged configuration
    /// with k_other changes elsewhere.
    fn ln_odds(
        &mut self,
        k_other: usize,
        w_split: f64,
        b_split: f64,
        w_merged: f64,
        b_merged: f64,
    ) -> f64 {
        let prior = self.ln_prior_int(k_other + 1) - self.ln_prior_int(k_other);

        let split_zero = w_split <= self.tiny;
        let merged_zero = w_merged <= self.tiny;
        let like = if merged_zero {
            // The merged configuration already fits exactly (constant or
            // piecewise-constant data); an extra change never helps.
            f64::NEG_INFINITY
        } else if split_zero {
            f64::INFINITY // split fits exactly, merged does not
        } else {
            let e1 = (k_other as f64 + 1.0) / 2.0;
            let e0 = k_other as f64 / 2.0;
            match (
                self.ln_like_int(e1, w_split, b_split),
                self.ln_like_int(e0, w_merged, b_merged),
            ) {
                (Some(a), Some(b)) => a - b,
                _ => 0.0, // saturated change count: prior only
            }
        };
        prior + like
    }

    /// Posterior mean of w given the current partition.
    fn w_hat(&mut self, k: usize, w_ss: f64, b_ss: f64) -> f64 {
        if w_ss <= self.tiny {
            if b_ss <= self.tiny {
                return self.w0 / 2.0;
            }
            return 0.0; // exact fit: no shrinkage toward the grand mean
        }
        let e = k as f64 / 2.0;
        match (
            self.ln_like_int(e + 1.0, w_ss, b_ss),
            self.ln_like_int(e, w_ss, b_ss),
        ) {
            (Some(num), Some(den)) => (num - den).exp().clamp(0.0, self.w0),
            _ => self.w0 / 2.0,
        }
    }
}

/// Gibbs-sampled posterior for the constant-mean-within-segment model.
///
/// Requires a complete series of length >= 3 and iterations > burnin.
/// Deterministic for a given (series, params, seed).
pub fn bcp(series: &[f64], params: &BcpParams, seed: u64) -> Result<BcpResult> {
    let n = series.len();
    if n < 3 {
        return Err(Error::TooShort { need: 3, got: n });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::MissingValues("change-point input".into()));
    }
    if params.iterations <= params.burnin {
        return Err(Error::InvalidArgument(
            "iterations must exceed burnin".into(),
        ));
    }
    if !(params.p0 > 0.0 && params.p0 <= 1.0 && params.w0 > 0.0 && params.w0 <= 1.0) {
        return Err(Error::InvalidArgument(
            "p0 and w0 must lie in (0, 1]".into(),
        ));
    }

    let stats = BlockStats::new(series);
    let mut ctx = OddsContext::new(n, params.p0, params.w0, stats.total_ss);
    let mut state = PartitionState {
        changes: BTreeSet::new(),
        within: 0.0,
        between_term: 0.0,
    };
    state.recompute(&stats);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let npos = n - 1;
    let mut change_counts = vec![0u64; npos];
    let mut mean_acc = vec![0.0f64; n];
    let retained = params.iterations - params.burnin;

    for sweep in 0..params.iterations {
        // Refresh the running sums once per sweep to stop rounding drift.
        state.recompute(&stats);
        for i in 0..npos {
            let is_change = state.changes.contains(&i);
            let seg_start = state
                .changes
                .range(..i)
                .next_back()
                .map(|&p| p + 1)
                .unwrap_or(0);
            let seg_end = state
                .changes
                .range(i + 1..)
                .next()
                .map(|&p| p + 1)
                .unwrap_or(n);
            let mid = i + 1;

            let within_merged = stats.within(seg_start, seg_end);
            let between_merged = stats.between_term(seg_start, seg_end);
            let within_split = stats.within(seg_start, mid) + stats.within(mid, seg_end);
            let between_split = stats.between_term(seg_start, mid) + stats.between_term(mid, seg_end);

            let (w_base, b_base) = if is_change {
                (state.within - within_split, state.between_term - between_split)
            } else {
                (state.within - within_merged, state.between_term - between_merged)
            };
            let grand = stats.n as f64 * stats.grand_mean * stats.grand_mean;
            let w1 = (w_base + within_split).max(0.0);
            let b1 = (b_base + between_split - grand).max(0.0);
            let w0_ = (w_base + within_merged).max(0.0);
            let b0 = (b_base + between_merged - grand).max(0.0);
            let k_other = state.changes.len() - usize::from(is_change);

            let ln_odds = ctx.ln_odds(k_other, w1, b1, w0_, b0);
            let p_change = if ln_odds == f64::INFINITY {
                1.0
            } else if ln_odds == f64::NEG_INFINITY {
                0.0
            } else {
                1.0 / (1.0 + (-ln_odds).exp())
            };
            let draw: f64 = rng.gen();
            let new_change = draw < p_change;
            if new_change != is_change {
                if new_change {
                    state.changes.insert(i);
                    state.within = w_base + within_split;
                    state.between_term = b_base + between_split;
                } else {
                    state.changes.remove(&i);
                    state.within = w_base + within_merged;
                    state.between_term = b_base + between_merged;
                }
            }
        }

        if sweep >= params.burnin {
            for &pos in &state.changes {
                change_counts[pos] += 1;
            }
            let w_hat = ctx.w_hat(
                state.changes.len(),
                state.within,
                state.between(&stats),
            );
            let mut start = 0usize;
            let bounds: Vec<usize> = state
                .changes
                .iter()
                .map(|&p| p + 1)
                .chain(std::iter::once(n))
                .collect();
            for end in bounds {
                let block_mean = stats.mean(start, end);
                let shrunk = w_hat * stats.grand_mean + (1.0 - w_hat) * block_mean;
                for slot in mean_acc.iter_mut().take(end).skip(start) {
                    *slot += shrunk;
                }
                start = end;
            }
        }
    }

    let mut change_prob: Vec<f64> = change_counts
        .iter()
        .map(|&c| c as f64 / retained as f64)
        .collect();
    change_prob.push(0.0);
    let posterior_mean: Vec<f64> = mean_acc.iter().map(|&s| s / retained as f64).collect();
    Ok(BcpResult {
        posterior_mean,
        change_prob,
        iterations: params.iterations,
        burnin: params.burnin,
        seed,
    })
}

/// Segmentation boundaries derived from a change-point analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentBoundaries {
    /// Strictly increasing indices in (0, length): each is the first index
    /// of a new segment.
    pub indices: Vec<usize>,
    /// Threshold multiplier applied to the series standard deviation.
    pub threshold_k: f64,
}

fn sample_sd(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 2 {
        return 0.0;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
    var.sqrt()
}

/// Boundaries at positions where the change probability reaches
/// `prob_floor` and the posterior-mean jump across the position exceeds
/// `k` standard deviations of the series. Qualifying positions within
/// 5 samples of each other are merged to the highest-probability one.
pub fn rare_events(
    hr: &[f64],
    bcp_result: &BcpResult,
    k: f64,
    prob_floor: f64,
) -> Result<SegmentBoundaries> {
    if hr.len() != bcp_result.posterior_mean.len() {
        return Err(Error::Dimension {
            what: "series vs change-point result".into(),
            expected: bcp_result.posterior_mean.len(),
            actual: hr.len(),
        });
    }
    if !(k > 0.0) {
        return Err(Error::InvalidArgument("k must be > 0".into()));
    }
    if !(prob_floor > 0.0 && prob_floor < 1.0) {
        return Err(Error::InvalidArgument("prob_floor must lie in (0,1)".into()));
    }
    let threshold = k * sample_sd(hr);
    let mean = &bcp_result.posterior_mean;
    let mut qualifying: Vec<(usize, f64)> = Vec::new();
    for i in 0..hr.len().saturating_sub(1) {
        let jump = (mean[i + 1] - mean[i]).abs();
        if bcp_result.change_prob[i] >= prob_floor && jump > threshold {
            qualifying.push((i, bcp_result.change_prob[i]));
        }
    }
    // Cluster positions within 5 samples; keep each cluster's most
    // probable change.
    let mut indices = Vec::new();
    let mut cluster: Vec<(usize, f64)> = Vec::new();
    let flush = |cluster: &mut Vec<(usize, f64)>, indices: &mut Vec<usize>| {
        if let Some(&(best, _)) = cluster
            .iter()
            .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
        {
            indices.push(best + 1);
        }
        cluster.clear();
    };
    for (pos, prob) in qualifying {
        if let Some(&(last, _)) = cluster.last() {
            if pos - last > 5 {
                flush(&mut cluster, &mut indices);
            }
        }
        cluster.push((pos, prob));
    }
    flush(&mut cluster, &mut indices);
    Ok(SegmentBoundaries {
        indices,
        threshold_k: k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn step_series(seed: u64, len_a: usize, len_b: usize, mu_a: f64, mu_b: f64, sd: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        (0..len_a + len_b)
            .map(|i| {
                let mu = if i < len_a { mu_a } else { mu_b };
                mu + noise.sample(&mut rng)
            })
            .collect()
    }

    #[test]
    fn ln_gamma_matches_known_values() {
        assert!((ln_gamma(1.0)).abs() < 1e-12);
        assert!((ln_gamma(5.0) - 24.0f64.ln()).abs() < 1e-12);
        assert!((ln_gamma(0.5) - 0.5 * std::f64::consts::PI.ln()).abs() < 1e-12);
    }

    #[test]
    fn incomplete_beta_matches_closed_forms() {
        // B(1, b; x) = (1 - (1-x)^b) / b
        let cases: [(f64, f64, f64, f64); 4] = [
            (1.0, 100.0, 0.2, (1.0 - 0.8f64.powi(100)) / 100.0),
            (1.0, 3.0, 0.5, (1.0 - 0.5f64.powi(3)) / 3.0),
            // B(2, 2; x) = x^2/2 - x^3/3
            (2.0, 2.0, 0.3, 0.3f64.powi(2) / 2.0 - 0.3f64.powi(3) / 3.0),
            // B(3, 2; x) = x^3/3 - x^4/4 exercises the symmetric branch
            (3.0, 2.0, 0.9, 0.9f64.powi(3) / 3.0 - 0.9f64.powi(4) / 4.0),
        ];
        for (a, b, x, expect) in cases {
            let got = ln_beta_inc(a, b, x);
            assert!(
                (got - expect.ln()).abs() < 1e-12,
                "a={a} b={b} x={x}: {got} vs {}",
                expect.ln()
            );
        }
        // B(1/2, 1; x) = 2 sqrt(x), a singular-at-zero case.
        let got = ln_beta_inc(0.5, 1.0, 0.04);
        assert!((got - 0.4f64.ln()).abs() < 1e-12);
        // Complete integral reduces to the beta function.
        assert!((ln_beta_inc(2.5, 7.0, 1.0) - ln_beta(2.5, 7.0)).abs() < 1e-12);
    }

    #[test]
    fn too_short_series_rejected() {
        assert!(matches!(
            bcp(&[1.0, 2.0], &BcpParams::default(), 0),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn missing_values_rejected() {
        assert!(matches!(
            bcp(&[1.0, f64::NAN, 2.0], &BcpParams::default(), 0),
            Err(Error::MissingValues(_))
        ));
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let series = step_series(1, 50, 50, 60.0, 90.0, 1.0);
        let a = bcp(&series, &BcpParams::default(), 42).unwrap();
        let b = bcp(&series, &BcpParams::default(), 42).unwrap();
        assert_eq!(a.posterior_mean, b.posterior_mean);
        assert_eq!(a.change_prob, b.change_prob);
    }

    #[test]
    fn constant_series_has_low_change_probability() {
        let series = vec![60.0; 100];
        for seed in 0..5 {
            let r = bcp(&series, &BcpParams::default(), seed).unwrap();
            let max_p = r.change_prob.iter().cloned().fold(0.0, f64::max);
            assert!(max_p < 0.05, "seed {seed}: max change prob {max_p}");
            for &m in &r.posterior_mean {
                assert!((m - 60.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn step_fixture_localizes_change() {
        let series = step_series(7, 100, 100, 60.0, 90.0, 1.0);
        let r = bcp(&series, &BcpParams::default(), 3).unwrap();
        let argmax = r
            .change_prob
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        assert!(
            (argmax as i64 - 99).abs() <= 2,
            "change located at {argmax}, expected near 99"
        );
        // Posterior mean within +-1 of each level away from the jump.
        for i in 0..90 {
            assert!((r.posterior_mean[i] - 60.0).abs() < 1.0, "i={i}");
        }
        for i in 110..200 {
            assert!((r.posterior_mean[i] - 90.0).abs() < 1.0, "i={i}");
        }
        // Posterior mean bounded by the data range.
        let lo = series.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = series.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for &m in &r.posterior_mean {
            assert!(m >= lo - 1e-9 && m <= hi + 1e-9);
        }
    }

    #[test]
    fn affine_equivariance_exact_partitions() {
        let series = step_series(11, 60, 60, 0.0, 2.5, 1.0);
        let scaled: Vec<f64> = series.iter().map(|v| 3.0 * v + 7.0).collect();
        let a = bcp(&series, &BcpParams::default(), 5).unwrap();
        let b = bcp(&scaled, &BcpParams::default(), 5).unwrap();
        assert_eq!(a.change_prob, b.change_prob);
        let sd = sample_sd(&series);
        for (x, y) in a.posterior_mean.iter().zip(&b.posterior_mean) {
            assert!((3.0 * x + 7.0 - y).abs() < 0.05 * 3.0 * sd);
        }
    }

    #[test]
    fn rare_events_flat_series_empty() {
        let series = vec![70.0; 50];
        let r = bcp(&series, &BcpParams::default(), 1).unwrap();
        let b = rare_events(&series, &r, 2.0, 0.5).unwrap();
        assert!(b.indices.is_empty());
    }

    #[test]
    fn rare_events_single_step() {
        // Jump of 4 standard deviations of the noise-free split: the
        // series sd is dominated by the step itself, so use k = 1.
        let series = step_series(21, 100, 100, 60.0, 90.0, 1.0);
        let r = bcp(&series, &BcpParams::default(), 9).unwrap();
        let b = rare_events(&series, &r, 1.0, 0.5).unwrap();
        assert_eq!(b.indices.len(), 1, "boundaries: {:?}", b.indices);
        assert!((b.indices[0] as i64 - 100).abs() <= 2);
    }

    #[test]
    fn rare_events_two_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut series = Vec::new();
        for i in 0..900 {
            let mu = if i < 300 {
                60.0
            } else if i < 600 {
                75.0
            } else {
                60.0
            };
            series.push(mu + noise.sample(&mut rng));
        }
        let r = bcp(&series, &BcpParams::default(), 4).unwrap();
        let b = rare_events(&series, &r, 1.0, 0.5).unwrap();
        assert_eq!(b.indices.len(), 2, "boundaries: {:?}", b.indices);
        assert!((b.indices[0] as i64 - 300).abs() <= 2);
        assert!((b.indices[1] as i64 - 600).abs() <= 2);
    }

    #[test]
    fn rare_events_rejects_length_mismatch() {
        let series = vec![1.0, 2.0, 3.0];
        let r = bcp(&series, &BcpParams::default(), 0).unwrap();
        assert!(rare_events(&[1.0, 2.0], &r, 2.0, 0.5).is_err());
    }
}
