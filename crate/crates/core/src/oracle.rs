//! Brute-force reference implementations used for validation.
//!
//! Everything here is deliberately independent of the production code
//! paths: the state-space reference builds the dense joint Gaussian of all
//! latents and observations and conditions on the observed entries
//! directly, the entropy reference re-counts transitions from scratch, and
//! the stationary covariance is summed as a series rather than solved.
//! Tests compare the fast implementations against these.

use nalgebra::{DMatrix, DVector};

use crate::model::ParamSet;

/// Dense joint-Gaussian reference for a linear-Gaussian state-space model
/// over a short horizon. Time index tau runs 0..=T with tau = 0 the
/// initial state; observation step t (0-based) corresponds to tau = t + 1.
pub struct ReferenceSsm {
    m: usize,
    steps: usize,
    /// mean_x[tau]
    mean_x: Vec<DVector<f64>>,
    /// cov_xx[tau][sig] = Cov(x_tau, x_sig), sig <= tau stored, symmetric.
    cov_xx: Vec<Vec<DMatrix<f64>>>,
    /// Stacked observed entries: (step, obs row, value).
    observed: Vec<(usize, usize, f64)>,
    mean_y: DVector<f64>,
    cov_yy: DMatrix<f64>,
    loading: DMatrix<f64>,
    obs_noise: DMatrix<f64>,
}

impl ReferenceSsm {
    /// Build the joint distribution. `y` is T x n with NaN for missing;
    /// `u` is T x p.
    pub fn new(params: &ParamSet, y: &DMatrix<f64>, u: Option<&DMatrix<f64>>) -> Self {
        let (m, _n, p) = params.dims();
        let steps = y.nrows();

        let mut mean_x: Vec<DVector<f64>> = Vec::with_capacity(steps + 1);
        mean_x.push(params.init_mean.clone());
        for t in 0..steps {
            let u_t = match u {
                Some(u) if p > 0 => u.row(t).transpose(),
                _ => DVector::zeros(p),
            };
            mean_x.push(&params.transition * &mean_x[t] + &params.input_effect * u_t);
        }

        let mut cov_xx: Vec<Vec<DMatrix<f64>>> = Vec::with_capacity(steps + 1);
        cov_xx.push(vec![params.init_cov.clone()]);
        for tau in 1..=steps {
            let mut row: Vec<DMatrix<f64>> = Vec::with_capacity(tau + 1);
            for sig in 0..tau {
                // Cov(x_tau, x_sig) = A Cov(x_{tau-1}, x_sig)
                let prev = if tau - 1 >= sig {
                    cov_xx[tau - 1][sig].clone()
                } else {
                    cov_xx[sig][tau - 1].transpose()
                };
                row.push(&params.transition * prev);
            }
            let diag = &params.transition * &cov_xx[tau - 1][tau - 1]
                * params.transition.transpose()
                + &params.state_noise;
            row.push(diag);
            cov_xx.push(row);
        }

        let mut observed = Vec::new();
        for t in 0..steps {
            for j in 0..y.ncols() {
                if !y[(t, j)].is_nan() {
                    observed.push((t, j, y[(t, j)]));
                }
            }
        }

        let k = observed.len();
        let mut mean_y = DVector::zeros(k);
        for (row, &(t, j, _)) in observed.iter().enumerate() {
            let u_t = match u {
                Some(u) if p > 0 => u.row(t).transpose(),
                _ => DVector::zeros(p),
            };
            let my = &params.loading * &mean_x[t + 1] + &params.direct_effect * u_t;
            mean_y[row] = my[j];
        }
        let cov_between = |a: usize, b: usize| -> DMatrix<f64> {
            if a >= b {
                cov_xx[a][b].clone()
            } else {
                cov_xx[b][a].transpose()
            }
        };
        let mut cov_yy = DMatrix::zeros(k, k);
        for (ra, &(ta, ja, _)) in observed.iter().enumerate() {
            for (rb, &(tb, jb, _)) in observed.iter().enumerate() {
                let base = &params.loading
                    * cov_between(ta + 1, tb + 1)
                    * params.loading.transpose();
                let mut v = base[(ja, jb)];
                if ta == tb {
                    v += params.obs_noise[(ja, jb)];
                }
                cov_yy[(ra, rb)] = v;
            }
        }

        ReferenceSsm {
            m,
            steps,
            mean_x,
            cov_xx,
            observed,
            mean_y,
            cov_yy,
            loading: params.loading.clone(),
            obs_noise: params.obs_noise.clone(),
        }
    }

    fn cov_between(&self, a: usize, b: usize) -> DMatrix<f64> {
        if a >= b {
            self.cov_xx[a][b].clone()
        } else {
            self.cov_xx[b][a].transpose()
        }
    }

    /// Cross covariance Cov(x_tau, y_stack) restricted to observed rows
    /// with step index < limit (or all when limit = steps).
    fn cov_x_y(&self, tau: usize, limit: usize) -> DMatrix<f64> {
        let rows: Vec<usize> = self
            .observed
            .iter()
            .enumerate()
            .filter(|(_, &(t, _, _))| t < limit)
            .map(|(r, _)| r)
            .collect();
        let mut out = DMatrix::zeros(self.m, rows.len());
        for (col, &r) in rows.iter().enumerate() {
            let (t, j, _) = self.observed[r];
            let block = self.cov_between(tau, t + 1) * self.loading.transpose();
            out.set_column(col, &block.column(j));
        }
        out
    }

    fn y_sub(&self, limit: usize) -> (DVector<f64>, DMatrix<f64>, DVector<f64>) {
        let rows: Vec<usize> = self
            .observed
            .iter()
            .enumerate()
            .filter(|(_, &(t, _, _))| t < limit)
            .map(|(r, _)| r)
            .collect();
        let k = rows.len();
        let mut mean = DVector::zeros(k);
        let mut cov = DMatrix::zeros(k, k);
        let mut vals = DVector::zeros(k);
        for (a, &ra) in rows.iter().enumerate() {
            mean[a] = self.mean_y[ra];
            vals[a] = self.observed[ra].2;
            for (b, &rb) in rows.iter().enumerate() {
                cov[(a, b)] = self.cov_yy[(ra, rb)];
            }
        }
        (mean, cov, vals)
    }

    /// -2 log of the joint Gaussian density of all observed entries.
    pub fn minus_two_log_likelihood(&self) -> f64 {
        let k = self.observed.len();
        if k == 0 {
            return 0.0;
        }
        let resid = {
            let mut r = DVector::zeros(k);
            for (row, &(_, _, v)) in self.observed.iter().enumerate() {
                r[row] = v - self.mean_y[row];
            }
            r
        };
        let lu = self.cov_yy.clone().lu();
        let det = lu.determinant();
        let sol = lu.solve(&resid).expect("reference covariance invertible");
        k as f64 * (2.0 * std::f64::consts::PI).ln() + det.ln() + resid.dot(&sol)
    }

    /// E[x_tau | observations with step < limit].
    fn conditional_mean(&self, tau: usize, limit: usize) -> DVector<f64> {
        let (mean_y, cov_yy, vals) = self.y_sub(limit);
        if mean_y.len() == 0 {
            return self.mean_x[tau].clone();
        }
        let cxy = self.cov_x_y(tau, limit);
        let resid = vals - mean_y;
        let sol = cov_yy
            .lu()
            .solve(&resid)
            .expect("reference covariance invertible");
        &self.mean_x[tau] + cxy * sol
    }

    /// E[x_{t+1} | y_1..y_{t+1}]: the filtered mean at observation step t.
    pub fn filtered_mean(&self, t: usize) -> DVector<f64> {
        self.conditional_mean(t + 1, t + 1)
    }

    /// E[x_{t+1} | all data]: the smoothed mean at observation step t.
    pub fn smoothed_mean(&self, t: usize) -> DVector<f64> {
        self.conditional_mean(t + 1, self.steps)
    }

    /// E[x_0 | all data].
    pub fn smoothed_init_mean(&self) -> DVector<f64> {
        self.conditional_mean(0, self.steps)
    }

    /// Cov(x_a, x_b | all data) with tau indices (0 = initial state).
    pub fn smoothed_cross_cov(&self, a: usize, b: usize) -> DMatrix<f64> {
        let (_, cov_yy, _) = self.y_sub(self.steps);
        let prior = self.cov_between(a, b);
        if cov_yy.nrows() == 0 {
            return prior;
        }
        let cay = self.cov_x_y(a, self.steps);
        let cby = self.cov_x_y(b, self.steps);
        let sol = cov_yy
            .lu()
            .solve(&cby.transpose())
            .expect("reference covariance invertible");
        prior - cay * sol
    }

    /// Marginal observation noise used when reconstructing y expectations.
    pub fn obs_noise(&self) -> &DMatrix<f64> {
        &self.obs_noise
    }
}

/// Gaze transition entropy evaluated by direct enumeration: re-count
/// occupancy and transition frequencies with plain maps and sum the
/// weighted conditional-entropy terms.
pub fn gte_enumerate(seq: &[Option<usize>], n_states: usize) -> Option<f64> {
    let mut occupancy = vec![0u64; n_states];
    let mut pairs = vec![0u64; n_states * n_states];
    let mut total = 0u64;
    for s in seq.iter().flatten() {
        occupancy[*s] += 1;
        total += 1;
    }
    let mut n_pairs = 0u64;
    for k in 1..seq.len() {
        if let (Some(i), Some(j)) = (seq[k - 1], seq[k]) {
            pairs[i * n_states + j] += 1;
            n_pairs += 1;
        }
    }
    if n_pairs == 0 || total == 0 {
        return None;
    }
    let mut h = 0.0;
    for i in 0..n_states {
        let departures: u64 = pairs[i * n_states..(i + 1) * n_states].iter().sum();
        if departures == 0 {
            continue;
        }
        let pi = occupancy[i] as f64 / total as f64;
        for j in 0..n_states {
            let c = pairs[i * n_states + j];
            if c == 0 {
                continue;
            }
            let p = c as f64 / departures as f64;
            h -= pi * p * p.log2();
        }
    }
    Some(h)
}

/// Stationary latent covariance by series summation: sum A^k Q A'^k until
/// the increment is negligible. Independent of the Kronecker-solve route.
pub fn stationary_covariance_series(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let _m = a.nrows();
    let mut total = q.clone();
    let mut term = q.clone();
    for _ in 0..100_000 {
        term = a * &term * a.transpose();
        let inc = term.amax();
        total += &term;
        if inc < 1e-14 * total.amax().max(1.0) {
            return Some(total);
        }
    }
    None // not converging: spectral radius too close to 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::discrete_lyapunov;

    #[test]
    fn series_and_kron_lyapunov_agree() {
        let a = DMatrix::from_row_slice(2, 2, &[0.6, 0.1, -0.2, 0.4]);
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
        let s1 = stationary_covariance_series(&a, &q).unwrap();
        let s2 = discrete_lyapunov(&a, &q).unwrap();
        assert!((s1 - s2).amax() < 1e-10);
    }

    #[test]
    fn gte_enumeration_matches_hand_value() {
        let seq: Vec<Option<usize>> = [0, 0, 1, 0, 1, 1].iter().map(|&s| Some(s)).collect();
        let third: f64 = 1.0 / 3.0;
        let expect = -(0.5 * (third * third.log2() + 2.0 * third * (2.0 * third).log2())
            + 0.5 * (0.5f64.log2()));
        assert!((gte_enumerate(&seq, 2).unwrap() - expect).abs() < 1e-12);
    }
}
