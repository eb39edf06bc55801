//! Maximum-likelihood estimation under a [`ModelSpec`] via EM with
//! smoother sufficient statistics, an optional quasi-Newton refinement,
//! numerical-Hessian standard errors, and -2LL model comparison.
//!
//! The M-step handles Free/Fixed/Shared entry constraints exactly. The
//! mean matrices are updated jointly per equation ([A B] and [C D]) by
//! solving the constrained generalized least-squares normal equations in
//! vectorized form; covariance matrices support the patterns used by the
//! model builders: free diagonals with zero off-diagonals (closed form,
//! shared labels pooled) and a fixed diagonal with one symmetric free
//! off-diagonal (one-dimensional maximization). Conditional updates are
//! applied in sequence, so each EM iteration cannot decrease the
//! likelihood; the convergence trace is checked for monotonicity on every
//! fit.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kalman::{kalman_filter, rts_smoother};
use crate::linalg::{kron, pinv, Fnv1a};
use crate::model::{
    from_unconstrained, pack, to_unconstrained, unpack, Constraint, ConstraintMatrix, ModelSpec,
    PackedParams, ParamSet,
};
use crate::timeseries::RestructuredSeries;

/// One observation sequence (a phase of the restructured data): T x n
/// observations with NaN for missing cells and, when the model has inputs,
/// a complete T x p input matrix.
#[derive(Debug, Clone)]
pub struct SequenceData {
    pub observations: DMatrix<f64>,
    pub inputs: Option<DMatrix<f64>>,
}

/// Extract fitting sequences from restructured phases, selecting the
/// spec's observation and input columns by name. Inputs must be complete.
pub fn prepare_sequences(rs: &RestructuredSeries, spec: &ModelSpec) -> Result<Vec<SequenceData>> {
    let mut out = Vec::with_capacity(rs.phases.len());
    for phase in &rs.phases {
        let rows = phase.len();
        let mut y = DMatrix::zeros(rows, spec.n_observations());
        for (j, name) in spec.observations.iter().enumerate() {
            let col = phase.column(name)?;
            for (i, &v) in col.iter().enumerate() {
                y[(i, j)] = v;
            }
        }
        let inputs = if spec.n_inputs() > 0 {
            let mut u = DMatrix::zeros(rows, spec.n_inputs());
            for (j, name) in spec.inputs.iter().enumerate() {
                let col = phase.column(name)?;
                for (i, &v) in col.iter().enumerate() {
                    if v.is_nan() {
                        return Err(Error::MissingValues(format!("input column `{name}`")));
                    }
                    u[(i, j)] = v;
                }
            }
            Some(u)
        } else {
            None
        };
        out.push(SequenceData {
            observations: y,
            inputs,
        });
    }
    Ok(out)
}

/// Stable hash of the data a fit was computed on, used to guard model
/// comparisons.
pub fn data_fingerprint(data: &[SequenceData]) -> u64 {
    let mut h = Fnv1a::new();
    h.write(&(data.len() as u64).to_le_bytes());
    for seq in data {
        h.write(&(seq.observations.nrows() as u64).to_le_bytes());
        h.write(&(seq.observations.ncols() as u64).to_le_bytes());
        for v in seq.observations.iter() {
            h.write_f64(*v);
        }
        if let Some(u) = &seq.inputs {
            h.write(&(u.ncols() as u64).to_le_bytes());
            for v in u.iter() {
                h.write_f64(*v);
            }
        }
    }
    h.finish()
}

/// Fitting options.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence threshold on the -2LL change between EM iterations.
    pub tol: f64,
    /// Polish the EM optimum with a quasi-Newton pass in transformed space.
    pub refine: bool,
    /// Seed for jittered multi-starts (start 0 is unjittered).
    pub seed: u64,
    pub starts: usize,
    /// Explicit starting point; overrides the data-driven initialization.
    pub init: Option<PackedParams>,
    /// Floor applied to free noise variances during M-steps.
    pub variance_floor: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 500,
            tol: 1e-6,
            refine: false,
            seed: 0,
            starts: 1,
            init: None,
            variance_floor: 1e-8,
        }
    }
}

/// Maximum-likelihood fit: estimates with labels, the convergence trace,
/// and (after [`standard_errors`]) per-label uncertainty.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub labels: Vec<String>,
    pub estimates: PackedParams,
    pub std_errors: Vec<Option<f64>>,
    pub conf_intervals: Vec<Option<(f64, f64)>>,
    pub minus_two_ll: f64,
    /// -2LL at the initial parameters and after every EM iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub data_fingerprint: u64,
}

impl FitResult {
    pub fn estimate(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.estimates.values[i])
    }

    pub fn params(&self) -> Result<ParamSet> {
        unpack(&self.estimates, &self.spec)
    }

    pub fn apply_intervals(&mut self, intervals: &[ParamInterval]) {
        for iv in intervals {
            if let Some(i) = self.labels.iter().position(|l| *l == iv.label) {
                self.std_errors[i] = iv.std_error;
                self.conf_intervals[i] = iv.ci();
            }
        }
    }

    /// JSON report mirroring the estimate/SE/CI table layout, with the
    /// notation bridge to common fitting-package matrix names.
    pub fn report_json(&self) -> String {
        #[derive(Serialize)]
        struct Row<'a> {
            label: &'a str,
            estimate: f64,
            std_error: Option<f64>,
            ci_low: Option<f64>,
            ci_high: Option<f64>,
        }
        #[derive(Serialize)]
        struct Report<'a> {
            minus_two_ll: f64,
            converged: bool,
            iterations: usize,
            free_parameters: usize,
            data_fingerprint: String,
            parameters: Vec<Row<'a>>,
            notation_bridge: serde_json::Value,
        }
        let rows: Vec<Row> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| Row {
                label: l,
                estimate: self.estimates.values[i],
                std_error: self.std_errors[i],
                ci_low: self.conf_intervals[i].map(|c| c.0),
                ci_high: self.conf_intervals[i].map(|c| c.1),
            })
            .collect();
        let report = Report {
            minus_two_ll: self.minus_two_ll,
            converged: self.converged,
            iterations: self.iterations,
            free_parameters: self.labels.len(),
            data_fingerprint: format!("{:016x}", self.data_fingerprint),
            parameters: rows,
            notation_bridge: serde_json::json!({
                "transition A": "package B",
                "input_effect B": "package C",
                "loading C": "package Z",
                "state_noise Q": "package Q",
                "obs_noise R": "package R",
            }),
        };
        serde_json::to_string_pretty(&report).expect("report serializes")
    }
}

// -------------------------------------------------------------------
// EM internals.

/// Expected sufficient statistics accumulated over all sequences.
struct EStats {
    /// State equation, z = [x_{t-1}; u_t].
    szz: DMatrix<f64>,
    sxz: DMatrix<f64>,
    sxx: DMatrix<f64>,
    /// Observation equation, zo = [x_t; u_t].
    szozo: DMatrix<f64>,
    syzo: DMatrix<f64>,
    syy: DMatrix<f64>,
    x0_sum: DVector<f64>,
    n_steps: f64,
    n_reps: f64,
    minus_two_ll: f64,
}

impl EStats {
    fn zero(m: usize, n: usize, p: usize) -> Self {
        let k = m + p;
        EStats {
            szz: DMatrix::zeros(k, k),
            sxz: DMatrix::zeros(m, k),
            sxx: DMatrix::zeros(m, m),
            szozo: DMatrix::zeros(k, k),
            syzo: DMatrix::zeros(n, k),
            syy: DMatrix::zeros(n, n),
            x0_sum: DVector::zeros(m),
            n_steps: 0.0,
            n_reps: 0.0,
            minus_two_ll: 0.0,
        }
    }
}

fn e_step(params: &ParamSet, data: &[SequenceData]) -> Result<EStats> {
    let (m, n, p) = params.dims();
    let k = m + p;
    let mut s = EStats::zero(m, n, p);
    for seq in data {
        let filter = kalman_filter(params, &seq.observations, seq.inputs.as_ref())?;
        let smooth = rts_smoother(params, &filter)?;
        let steps = filter.len();
        for t in 0..steps {
            let u_t = match &seq.inputs {
                Some(u) if p > 0 => u.row(t).transpose(),
                _ => DVector::zeros(p),
            };
            let x_t = &smooth.smoothed_means[t];
            let p_t = &smooth.smoothed_covs[t];
            let (x_prev, p_prev) = if t == 0 {
                (&smooth.init_mean_smoothed, &smooth.init_cov_smoothed)
            } else {
                (&smooth.smoothed_means[t - 1], &smooth.smoothed_covs[t - 1])
            };
            let exx_t = p_t + x_t * x_t.transpose();
            let exx_prev = p_prev + x_prev * x_prev.transpose();
            let ex_cross = &smooth.lag_one_covs[t] + x_t * x_prev.transpose();

            // State-equation blocks.
            s.szz.view_mut((0, 0), (m, m)).add_assign_mat(&exx_prev);
            s.sxz.view_mut((0, 0), (m, m)).add_assign_mat(&ex_cross);
            if p > 0 {
                let xu = x_prev * u_t.transpose();
                s.szz.view_mut((0, m), (m, p)).add_assign_mat(&xu);
                s.szz
                    .view_mut((m, 0), (p, m))
                    .add_assign_mat(&xu.transpose());
                s.szz
                    .view_mut((m, m), (p, p))
                    .add_assign_mat(&(&u_t * u_t.transpose()));
                s.sxz
                    .view_mut((0, m), (m, p))
                    .add_assign_mat(&(x_t * u_t.transpose()));
            }
            s.sxx += &exx_t;

            // Observation-equation blocks; missing entries enter through
            // their conditional expectations (valid with uncorrelated
            // observation noise across the missing pattern).
            let row = seq.observations.row(t);
            let any_missing = row.iter().any(|v| v.is_nan());
            let mut y_hat = DVector::zeros(n);
            let mut c_mask = DMatrix::zeros(n, m);
            let model_y = &params.loading * x_t + &params.direct_effect * &u_t;
            for j in 0..n {
                if row[j].is_nan() {
                    y_hat[j] = model_y[j];
                    c_mask.row_mut(j).copy_from(&params.loading.row(j));
                } else {
                    y_hat[j] = row[j];
                }
            }
            let eyx = if any_missing {
                &y_hat * x_t.transpose() + &c_mask * p_t
            } else {
                &y_hat * x_t.transpose()
            };
            s.syzo.view_mut((0, 0), (n, m)).add_assign_mat(&eyx);
            if p > 0 {
                s.syzo
                    .view_mut((0, m), (n, p))
                    .add_assign_mat(&(&y_hat * u_t.transpose()));
            }
            let mut eyy = &y_hat * y_hat.transpose();
            if any_missing {
                eyy += &c_mask * p_t * c_mask.transpose();
                for j in 0..n {
                    if row[j].is_nan() {
                        eyy[(j, j)] += params.obs_noise[(j, j)];
                    }
                }
            }
            s.syy += &eyy;
            s.szozo.view_mut((0, 0), (m, m)).add_assign_mat(&exx_t);
            if p > 0 {
                let xu = x_t * u_t.transpose();
                s.szozo.view_mut((0, m), (m, p)).add_assign_mat(&xu);
                s.szozo
                    .view_mut((m, 0), (p, m))
                    .add_assign_mat(&xu.transpose());
                s.szozo
                    .view_mut((m, m), (p, p))
                    .add_assign_mat(&(&u_t * u_t.transpose()));
            }
        }
        debug_assert_eq!(s.szz.nrows(), k);
        s.x0_sum += &smooth.init_mean_smoothed;
        s.n_steps += steps as f64;
        s.n_reps += 1.0;
        s.minus_two_ll += filter.minus_two_ll;
    }
    Ok(s)
}

trait AddAssignMat {
    fn add_assign_mat(&mut self, other: &DMatrix<f64>);
}

impl AddAssignMat for nalgebra::DMatrixViewMut<'_, f64> {
    fn add_assign_mat(&mut self, other: &DMatrix<f64>) {
        *self += other;
    }
}

/// Linear constraint structure of a horizontally concatenated matrix
/// group ([A B] or [C D]): vec(G) = f + design * beta, column-major.
struct GroupDesign {
    rows: usize,
    cols: usize,
    fixed: DVector<f64>,
    design: DMatrix<f64>,
    /// Packed indices of the group's free labels.
    packed_idx: Vec<usize>,
}

fn build_group(
    mats: &[&ConstraintMatrix],
    labels: &[String],
    group_name: &str,
) -> Result<Option<GroupDesign>> {
    let rows = mats[0].rows;
    let cols: usize = mats.iter().map(|m| m.cols).sum();
    let mut group_labels: Vec<&str> = Vec::new();
    for m in mats {
        for e in &m.entries {
            if let Constraint::Free(l) = e {
                if !group_labels.contains(&l.as_str()) {
                    group_labels.push(l);
                }
            }
        }
    }
    if group_labels.is_empty() {
        // Shared labels without a free declaration inside the group would
        // tie this group to another equation, which the M-step cannot do.
        for m in mats {
            if m.entries
                .iter()
                .any(|e| matches!(e, Constraint::Shared(_)))
            {
                return Err(Error::Unsupported(format!(
                    "{group_name}: shared labels crossing equations"
                )));
            }
        }
        return Ok(None);
    }
    let nb = group_labels.len();
    let mut fixed = DVector::zeros(rows * cols);
    let mut design = DMatrix::zeros(rows * cols, nb);
    let mut col_off = 0usize;
    for m in mats {
        for r in 0..m.rows {
            for c in 0..m.cols {
                let idx = (col_off + c) * rows + r;
                match m.get(r, c) {
                    Constraint::Fixed(v) => fixed[idx] = *v,
                    Constraint::Free(l) | Constraint::Shared(l) => {
                        match group_labels.iter().position(|g| g == l) {
                            Some(b) => design[(idx, b)] = 1.0,
                            None => {
                                return Err(Error::Unsupported(format!(
                                    "{group_name}: label `{l}` shared across equations"
                                )))
                            }
                        }
                    }
                }
            }
        }
        col_off += m.cols;
    }
    let packed_idx = group_labels
        .iter()
        .map(|l| {
            labels
                .iter()
                .position(|x| x == *l)
                .ok_or_else(|| Error::InvalidSpec(format!("unknown label `{l}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Some(GroupDesign {
        rows,
        cols,
        fixed,
        design,
        packed_idx,
    }))
}

/// Weight matrix for a generalized-least-squares update: the inverse of
/// the noise covariance, or its pseudo-inverse when the covariance is
/// singular (range-space weights for degenerate noise).
fn robust_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    match m.clone().cholesky() {
        Some(c) => c.inverse(),
        None => pinv(m),
    }
}

/// Solve the constrained weighted least squares for one equation group:
/// minimize 1/2 vec(G)' (szz kron W) vec(G) - vec(G)' vec(W syz), with
/// vec(G) = f + D beta. Writes the new betas into `packed`.
fn update_group(
    group: &GroupDesign,
    szz: &DMatrix<f64>,
    syz: &DMatrix<f64>,
    weight: &DMatrix<f64>,
    packed: &mut PackedParams,
) {
    let m_big = kron(szz, weight);
    let c = {
        let wm = weight * syz;
        DVector::from_column_slice(wm.as_slice())
    };
    debug_assert_eq!(m_big.nrows(), group.rows * group.cols);
    let rhs = group.design.transpose() * (&c - &m_big * &group.fixed);
    let normal = group.design.transpose() * &m_big * &group.design;
    // Move from the current values along the identified directions only:
    // beta = beta_old + pinv(N)(rhs - N beta_old). Unidentified (null)
    // directions stay where they are, which keeps degenerate-noise models
    // inside their admissible family.
    let beta_old = DVector::from_iterator(
        group.packed_idx.len(),
        group.packed_idx.iter().map(|&idx| packed.values[idx]),
    );
    let residual = &rhs - &normal * &beta_old;
    let delta = pinv(&normal) * residual;
    let beta = beta_old + delta;
    if beta.iter().all(|v| v.is_finite()) {
        for (b, &idx) in group.packed_idx.iter().enumerate() {
            packed.values[idx] = beta[b];
        }
    }
}

/// Covariance constraint patterns the M-step supports.
enum CovPattern {
    AllFixed,
    /// Free/shared labels only on the diagonal; all off-diagonals fixed 0.
    /// label -> diagonal positions.
    DiagFree(Vec<(usize, Vec<usize>)>),
    /// 2x2 with fixed diagonal and one symmetric free off-diagonal.
    FixedDiagFreeOff { label_idx: usize, d1: f64, d2: f64 },
}

fn classify_covariance(
    cm: &ConstraintMatrix,
    labels: &[String],
    what: &str,
) -> Result<CovPattern> {
    let n = cm.rows;
    let any_free = cm
        .entries
        .iter()
        .any(|e| !matches!(e, Constraint::Fixed(_)));
    if !any_free {
        return Ok(CovPattern::AllFixed);
    }
    let off_all_fixed_zero = (0..n).all(|r| {
        (0..n).all(|c| r == c || matches!(cm.get(r, c), Constraint::Fixed(v) if *v == 0.0))
    });
    if off_all_fixed_zero {
        let mut per_label: Vec<(usize, Vec<usize>)> = Vec::new();
        for r in 0..n {
            match cm.get(r, r) {
                Constraint::Fixed(_) => {}
                Constraint::Free(l) | Constraint::Shared(l) => {
                    let idx = labels
                        .iter()
                        .position(|x| x == l)
                        .ok_or_else(|| Error::InvalidSpec(format!("unknown label `{l}`")))?;
                    match per_label.iter_mut().find(|(i, _)| *i == idx) {
                        Some((_, positions)) => positions.push(r),
                        None => per_label.push((idx, vec![r])),
                    }
                }
            }
        }
        return Ok(CovPattern::DiagFree(per_label));
    }
    if n == 2 {
        if let (Constraint::Fixed(d1), Constraint::Fixed(d2)) = (cm.get(0, 0), cm.get(1, 1)) {
            let tied = match (cm.get(0, 1), cm.get(1, 0)) {
                (Constraint::Free(l), Constraint::Shared(l2))
                | (Constraint::Shared(l2), Constraint::Free(l))
                    if l == l2 =>
                {
                    Some(l)
                }
                _ => None,
            };
            if let Some(l) = tied {
                if *d1 > 0.0 && *d2 > 0.0 {
                    let idx = labels
                        .iter()
                        .position(|x| x == l)
                        .ok_or_else(|| Error::InvalidSpec(format!("unknown label `{l}`")))?;
                    return Ok(CovPattern::FixedDiagFreeOff {
                        label_idx: idx,
                        d1: *d1,
                        d2: *d2,
                    });
                }
            }
        }
    }
    Err(Error::Unsupported(format!(
        "{what}: covariance constraint pattern not supported by the M-step"
    )))
}

/// Closed-form diagonal update and 1-D off-diagonal maximization for the
/// supported covariance patterns.
fn update_covariance(
    pattern: &CovPattern,
    s_res: &DMatrix<f64>,
    n_count: f64,
    floor: f64,
    current: &DMatrix<f64>,
    packed: &mut PackedParams,
) {
    match pattern {
        CovPattern::AllFixed => {}
        CovPattern::DiagFree(per_label) => {
            for (idx, positions) in per_label {
                let mut acc = 0.0;
                for &r in positions {
                    acc += s_res[(r, r)];
                }
                let v = (acc / (n_count * positions.len() as f64)).max(floor);
                if v.is_finite() {
                    packed.values[*idx] = v;
                }
            }
        }
        CovPattern::FixedDiagFreeOff { label_idx, d1, d2 } => {
            // Profile objective over the off-diagonal q:
            // f(q) = -(N/2) ln(d1 d2 - q^2)
            //        - (d2 S11 + d1 S22 - 2 q S12) / (2 (d1 d2 - q^2))
            let (s11, s22, s12) = (s_res[(0, 0)], s_res[(1, 1)], 0.5 * (s_res[(0, 1)] + s_res[(1, 0)]));
            let bound = (d1 * d2).sqrt();
            let f = |q: f64| -> f64 {
                let det = d1 * d2 - q * q;
                -(n_count / 2.0) * det.ln() - (d2 * s11 + d1 * s22 - 2.0 * q * s12) / (2.0 * det)
            };
            let lo = -bound * (1.0 - 1e-9);
            let hi = bound * (1.0 - 1e-9);
            let q_cur = current[(0, 1)].clamp(lo, hi);
            // Coarse scan, then golden-section refinement.
            let grid = 201;
            let mut best_q = q_cur;
            let mut best_f = f(q_cur);
            for g in 0..grid {
                let q = lo + (hi - lo) * g as f64 / (grid - 1) as f64;
                let v = f(q);
                if v > best_f {
                    best_f = v;
                    best_q = q;
                }
            }
            let step = (hi - lo) / (grid - 1) as f64;
            let (mut a, mut b) = ((best_q - step).max(lo), (best_q + step).min(hi));
            let phi = 0.5 * (5.0f64.sqrt() - 1.0);
            let mut x1 = b - phi * (b - a);
            let mut x2 = a + phi * (b - a);
            let (mut f1, mut f2) = (f(x1), f(x2));
            for _ in 0..120 {
                if f1 >= f2 {
                    b = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = b - phi * (b - a);
                    f1 = f(x1);
                } else {
                    a = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = a + phi * (b - a);
                    f2 = f(x2);
                }
            }
            let q_new = 0.5 * (a + b);
            if f(q_new) >= f(q_cur) && q_new.is_finite() {
                packed.values[*label_idx] = q_new;
            }
        }
    }
}

/// Precomputed constraint structure for the whole spec.
struct EmMachine {
    state_group: Option<GroupDesign>,
    obs_group: Option<GroupDesign>,
    init_group: Option<GroupDesign>,
    q_pattern: CovPattern,
    r_pattern: CovPattern,
    /// Fixed singular state noise (e.g. perfectly correlated latents)
    /// puts the complete-data density on a subspace; EM steps are then
    /// verified against the actual likelihood and rejected when they do
    /// not improve it, instead of being treated as a bug.
    degenerate_state_noise: bool,
}

impl EmMachine {
    fn new(spec: &ModelSpec) -> Result<Self> {
        let labels = spec.free_labels();
        if spec
            .init_cov
            .entries
            .iter()
            .any(|e| !matches!(e, Constraint::Fixed(_)))
        {
            return Err(Error::Unsupported(
                "free initial covariance entries".into(),
            ));
        }
        let q_pattern = classify_covariance(&spec.state_noise, &labels, "state noise")?;
        let degenerate_state_noise = if matches!(q_pattern, CovPattern::AllFixed) {
            let m = spec.n_latents();
            let mut q = DMatrix::zeros(m, m);
            for r in 0..m {
                for c in 0..m {
                    if let Constraint::Fixed(v) = spec.state_noise.get(r, c) {
                        q[(r, c)] = *v;
                    }
                }
            }
            let eig = nalgebra::SymmetricEigen::new(q.clone());
            eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
                < 1e-9 * q.trace().abs().max(1e-12)
        } else {
            false
        };
        Ok(EmMachine {
            state_group: build_group(
                &[&spec.transition, &spec.input_effect],
                &labels,
                "state equation",
            )?,
            obs_group: build_group(
                &[&spec.loading, &spec.direct_effect],
                &labels,
                "observation equation",
            )?,
            init_group: build_group(&[&spec.init_mean], &labels, "initial mean")?,
            q_pattern,
            r_pattern: classify_covariance(&spec.obs_noise, &labels, "observation noise")?,
            degenerate_state_noise,
        })
    }

    /// One conditional-maximization pass given E-step statistics.
    fn m_step(
        &self,
        spec: &ModelSpec,
        stats: &EStats,
        packed: &PackedParams,
        floor: f64,
    ) -> Result<PackedParams> {
        let mut new_packed = packed.clone();
        let mut params = unpack(&new_packed, spec)?;

        // Observation equation [C D] under the current R weights.
        if let Some(group) = &self.obs_group {
            let w = robust_inverse(&params.obs_noise);
            update_group(group, &stats.szozo, &stats.syzo, &w, &mut new_packed);
            params = unpack(&new_packed, spec)?;
        }
        // R given the updated [C D].
        {
            let h = {
                let n = spec.n_observations();
                let (m, p) = (spec.n_latents(), spec.n_inputs());
                let mut h = DMatrix::zeros(n, m + p);
                h.view_mut((0, 0), (n, m)).copy_from(&params.loading);
                if p > 0 {
                    h.view_mut((0, m), (n, p)).copy_from(&params.direct_effect);
                }
                h
            };
            let s_res = &stats.syy - &h * stats.syzo.transpose() - &stats.syzo * h.transpose()
                + &h * &stats.szozo * h.transpose();
            update_covariance(
                &self.r_pattern,
                &s_res,
                stats.n_steps,
                floor,
                &params.obs_noise,
                &mut new_packed,
            );
            params = unpack(&new_packed, spec)?;
        }
        // State equation [A B] under the current Q weights.
        if let Some(group) = &self.state_group {
            let w = robust_inverse(&params.state_noise);
            update_group(group, &stats.szz, &stats.sxz, &w, &mut new_packed);
            params = unpack(&new_packed, spec)?;
        }
        // Q given the updated [A B].
        {
            let g = {
                let (m, p) = (spec.n_latents(), spec.n_inputs());
                let mut g = DMatrix::zeros(m, m + p);
                g.view_mut((0, 0), (m, m)).copy_from(&params.transition);
                if p > 0 {
                    g.view_mut((0, m), (m, p)).copy_from(&params.input_effect);
                }
                g
            };
            let s_w = &stats.sxx - &g * stats.sxz.transpose() - &stats.sxz * g.transpose()
                + &g * &stats.szz * g.transpose();
            update_covariance(
                &self.q_pattern,
                &s_w,
                stats.n_steps,
                floor,
                &params.state_noise,
                &mut new_packed,
            );
            params = unpack(&new_packed, spec)?;
        }
        // Initial mean.
        if let Some(group) = &self.init_group {
            let w = robust_inverse(&params.init_cov) * stats.n_reps;
            let target = DMatrix::from_column_slice(
                spec.n_latents(),
                1,
                (&stats.x0_sum / stats.n_reps).as_slice(),
            );
            let szz1 = DMatrix::from_element(1, 1, 1.0);
            // Normal equations of sum_reps (x0hat - x0)' P0^-1 (x0hat - x0).
            update_group(group, &szz1, &(&target * 1.0), &w, &mut new_packed);
        }
        Ok(new_packed)
    }
}

/// One EM iteration: expectation over the smoother, then the constrained
/// conditional-maximization updates. Never increases -2LL.
pub fn em_step(
    spec: &ModelSpec,
    current: &PackedParams,
    data: &[SequenceData],
) -> Result<PackedParams> {
    let machine = EmMachine::new(spec)?;
    let params = unpack(current, spec)?;
    let stats = e_step(&params, data)?;
    machine.m_step(spec, &stats, current, FitOptions::default().variance_floor)
}

fn check_missing_support(spec: &ModelSpec, data: &[SequenceData]) -> Result<()> {
    let any_missing = data
        .iter()
        .any(|s| s.observations.iter().any(|v| v.is_nan()));
    if !any_missing {
        return Ok(());
    }
    let n = spec.n_observations();
    for r in 0..n {
        for c in 0..n {
            if r != c && !matches!(spec.obs_noise.get(r, c), Constraint::Fixed(v) if *v == 0.0) {
                return Err(Error::Unsupported(
                    "missing observations require diagonal observation noise".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Data-driven starting point: loadings from a regression of each
/// indicator on the first principal component, transition diagonal 0.5,
/// input effects zero, free noise variances at half the observed variance.
fn default_init(spec: &ModelSpec, data: &[SequenceData]) -> PackedParams {
    let n = spec.n_observations();
    let labels = spec.free_labels();
    let mut packed = PackedParams::zeros(spec);

    // Pooled per-column means/variances over present cells.
    let mut count = vec![0usize; n];
    let mut mean = vec![0.0f64; n];
    for seq in data {
        for j in 0..n {
            for i in 0..seq.observations.nrows() {
                let v = seq.observations[(i, j)];
                if !v.is_nan() {
                    mean[j] += v;
                    count[j] += 1;
                }
            }
        }
    }
    for j in 0..n {
        mean[j] /= count[j].max(1) as f64;
    }
    let mut cov = DMatrix::zeros(n, n);
    let mut rows = 0usize;
    for seq in data {
        for i in 0..seq.observations.nrows() {
            let centered = DVector::from_iterator(
                n,
                (0..n).map(|j| {
                    let v = seq.observations[(i, j)];
                    if v.is_nan() {
                        0.0
                    } else {
                        v - mean[j]
                    }
                }),
            );
            cov += &centered * centered.transpose();
            rows += 1;
        }
    }
    if rows > 1 {
        cov /= (rows - 1) as f64;
    }
    let eig = nalgebra::SymmetricEigen::new(cov.clone());
    let top = eig
        .eigenvalues
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut v = eig.eigenvectors.column(top).clone_owned();
    // Sign convention: largest component positive, for determinism.
    let lead = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().partial_cmp(&b.1.abs()).unwrap())
        .map(|(i, _)| i)
        .unwrap_or(0);
    if v[lead] < 0.0 {
        v = -v;
    }
    let score_var = (v.transpose() * &cov * &v)[(0, 0)].max(1e-12);
    let cv = &cov * &v;

    let loading_init: Vec<f64> = (0..n).map(|j| cv[j] / score_var).collect();

    let assign = |packed: &mut PackedParams, label: &str, value: f64| {
        if let Some(i) = labels.iter().position(|l| l == label) {
            packed.values[i] = value;
        }
    };
    for r in 0..spec.loading.rows {
        for c in 0..spec.loading.cols {
            if let Constraint::Free(l) = spec.loading.get(r, c) {
                assign(&mut packed, l, loading_init[r]);
            }
        }
    }
    for r in 0..spec.transition.rows {
        for c in 0..spec.transition.cols {
            if let Constraint::Free(l) = spec.transition.get(r, c) {
                assign(&mut packed, l, if r == c { 0.5 } else { 0.0 });
            }
        }
    }
    for r in 0..spec.obs_noise.rows {
        if let Constraint::Free(l) = spec.obs_noise.get(r, r) {
            assign(&mut packed, l, (0.5 * cov[(r, r)]).max(0.05));
        }
    }
    for r in 0..spec.state_noise.rows {
        for c in 0..spec.state_noise.cols {
            if let Constraint::Free(l) = spec.state_noise.get(r, c) {
                assign(&mut packed, l, if r == c { 1.0 } else { 0.0 });
            }
        }
    }
    packed
}

fn total_minus_two_ll(spec: &ModelSpec, packed: &PackedParams, data: &[SequenceData]) -> Result<f64> {
    let params = unpack(packed, spec)?;
    let mut total = 0.0;
    for seq in data {
        total += kalman_filter(&params, &seq.observations, seq.inputs.as_ref())?.minus_two_ll;
    }
    Ok(total)
}

/// EM trace tolerance: every recorded trace must be non-increasing within
/// this bound, asserted on every fit.
pub const EM_MONOTONICITY_TOL: f64 = 1e-8;

/// Check a trial parameter vector stays inside the admissible region
/// (positive free variances, correlations inside their bound).
fn trial_admissible(values: &[f64], transforms: &[crate::model::Transform], floor: f64) -> bool {
    values.iter().zip(transforms).all(|(&v, t)| match t {
        crate::model::Transform::Identity => v.is_finite(),
        crate::model::Transform::LogVariance => v.is_finite() && v >= floor,
        crate::model::Transform::Correlation { bound } => {
            v.is_finite() && v.abs() < bound * (1.0 - 1e-9)
        }
    })
}

fn run_em(
    spec: &ModelSpec,
    machine: &EmMachine,
    init: PackedParams,
    data: &[SequenceData],
    opts: &FitOptions,
) -> Result<(PackedParams, Vec<f64>, bool, usize)> {
    let transforms = crate::model::label_transforms(spec);
    let mut packed = init;
    let mut stats = e_step(&unpack(&packed, spec)?, data)?;
    let mut ll = stats.minus_two_ll;
    let mut trace: Vec<f64> = vec![ll];
    let mut converged = false;
    let mut iterations = 0usize;

    while iterations < opts.max_iter {
        let candidate = machine.m_step(spec, &stats, &packed, opts.variance_floor)?;
        let cand_ll = total_minus_two_ll(spec, &candidate, data)?;
        if cand_ll > ll + EM_MONOTONICITY_TOL {
            if machine.degenerate_state_noise {
                // Degenerate-noise models exhaust what the subspace EM
                // update can deliver; stop at the last accepted point.
                converged = true;
                break;
            }
            return Err(Error::Numerical(format!(
                "EM iteration increased -2LL: {ll} -> {cand_ll}"
            )));
        }

        // Step-doubling acceleration along the update direction; each
        // trial is verified against the actual likelihood, so monotonicity
        // is preserved by construction.
        let mut best = candidate.clone();
        let mut best_ll = cand_ll;
        let dir: Vec<f64> = candidate
            .values
            .iter()
            .zip(&packed.values)
            .map(|(n, o)| n - o)
            .collect();
        let mut alpha = 2.0f64;
        while alpha <= 1024.0 {
            let trial_values: Vec<f64> = packed
                .values
                .iter()
                .zip(&dir)
                .map(|(o, d)| o + alpha * d)
                .collect();
            if !trial_admissible(&trial_values, &transforms, opts.variance_floor) {
                break;
            }
            let trial = PackedParams {
                values: trial_values,
            };
            match total_minus_two_ll(spec, &trial, data) {
                Ok(tll) if tll < best_ll => {
                    best = trial;
                    best_ll = tll;
                }
                _ => break,
            }
            alpha *= 2.0;
        }

        packed = best;
        iterations += 1;
        stats = e_step(&unpack(&packed, spec)?, data)?;
        let new_ll = stats.minus_two_ll;
        trace.push(new_ll);
        let improvement = ll - new_ll;
        ll = new_ll;
        if improvement.abs() < opts.tol {
            converged = true;
            break;
        }
    }
    Ok((packed, trace, converged, iterations))
}

/// Quasi-Newton polish of the EM optimum on the transformed parameter
/// space (BFGS with central-difference gradients and backtracking line
/// search). Keeps the EM solution when no improvement is found.
fn refine_bfgs(
    spec: &ModelSpec,
    packed: &PackedParams,
    data: &[SequenceData],
) -> Result<(PackedParams, f64)> {
    let d = packed.values.len();
    let eval = |w: &DVector<f64>| -> f64 {
        let p = from_unconstrained(w.as_slice(), spec);
        total_minus_two_ll(spec, &p, data).unwrap_or(f64::INFINITY)
    };
    let grad = |w: &DVector<f64>, f0: f64| -> DVector<f64> {
        let mut g = DVector::zeros(d);
        for i in 0..d {
            let h = 1e-5 * (1.0 + w[i].abs());
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let (fp, fm) = (eval(&wp), eval(&wm));
            g[i] = if fp.is_finite() && fm.is_finite() {
                (fp - fm) / (2.0 * h)
            } else if fp.is_finite() {
                (fp - f0) / h
            } else if fm.is_finite() {
                (f0 - fm) / h
            } else {
                0.0
            };
        }
        g
    };

    let mut w = DVector::from_vec(to_unconstrained(packed, spec));
    let mut f_cur = eval(&w);
    let f_start = f_cur;
    let mut h_inv = DMatrix::<f64>::identity(d, d);
    let mut g_cur = grad(&w, f_cur);
    for _ in 0..60 {
        let dir = -(&h_inv * &g_cur);
        let slope = g_cur.dot(&dir);
        if slope >= 0.0 || g_cur.norm() < 1e-7 {
            break;
        }
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let w_new = &w + step * &dir;
            let f_new = eval(&w_new);
            if f_new <= f_cur + 1e-4 * step * slope {
                let g_new = grad(&w_new, f_new);
                let s = step * &dir;
                let yv = &g_new - &g_cur;
                let sy = s.dot(&yv);
                if sy > 1e-12 {
                    let rho = 1.0 / sy;
                    let i = DMatrix::<f64>::identity(d, d);
                    let left = &i - rho * &s * yv.transpose();
                    h_inv = &left * h_inv * left.transpose() + rho * &s * s.transpose();
                }
                w = w_new;
                f_cur = f_new;
                g_cur = g_new;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if f_cur < f_start {
        Ok((from_unconstrained(w.as_slice(), spec), f_cur))
    } else {
        Ok((packed.clone(), f_start))
    }
}

/// Maximum-likelihood fit by EM until the -2LL change falls below `tol`
/// or `max_iter` is reached. Deterministic for a given seed; the trace is
/// asserted non-increasing on every run.
pub fn fit(spec: &ModelSpec, data: &[SequenceData], opts: &FitOptions) -> Result<FitResult> {
    if data.is_empty() {
        return Err(Error::Empty("fit data".into()));
    }
    check_missing_support(spec, data)?;
    let machine = EmMachine::new(spec)?;
    let labels = spec.free_labels();

    let base_init = match &opts.init {
        Some(p) => {
            if p.values.len() != labels.len() {
                return Err(Error::Dimension {
                    what: "initial parameter vector".into(),
                    expected: labels.len(),
                    actual: p.values.len(),
                });
            }
            p.clone()
        }
        None => default_init(spec, data),
    };

    let mut best: Option<(PackedParams, Vec<f64>, bool, usize)> = None;
    for start in 0..opts.starts.max(1) {
        let init = if start == 0 {
            base_init.clone()
        } else {
            use rand::{Rng, SeedableRng};
            let mut rng =
                rand_chacha::ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(start as u64));
            let mut jittered = base_init.clone();
            let w = to_unconstrained(&jittered, spec);
            let wj: Vec<f64> = w.iter().map(|v| v + rng.gen_range(-0.3..0.3)).collect();
            jittered = from_unconstrained(&wj, spec);
            jittered
        };
        let run = run_em(spec, &machine, init, data, opts)?;
        let better = match &best {
            None => true,
            Some((_, trace, _, _)) => run.1.last().unwrap() < trace.last().unwrap(),
        };
        if better {
            best = Some(run);
        }
    }
    let (mut packed, mut trace, converged, iterations) = best.unwrap();

    if opts.refine && !trace.is_empty() {
        let (polished, f_pol) = refine_bfgs(spec, &packed, data)?;
        if f_pol < *trace.last().unwrap() - 1e-12 {
            packed = polished;
            trace.push(f_pol);
        }
    }

    let minus_two_ll = *trace.last().unwrap();
    let n_labels = labels.len();
    Ok(FitResult {
        spec: spec.clone(),
        labels,
        estimates: packed,
        std_errors: vec![None; n_labels],
        conf_intervals: vec![None; n_labels],
        minus_two_ll,
        trace,
        converged,
        iterations,
        data_fingerprint: data_fingerprint(data),
    })
}

/// Per-label uncertainty from the observed information matrix.
#[derive(Debug, Clone, Serialize)]
pub struct ParamInterval {
    pub label: String,
    pub estimate: f64,
    pub std_error: Option<f64>,
}

impl ParamInterval {
    pub fn ci(&self) -> Option<(f64, f64)> {
        self.std_error
            .map(|se| (self.estimate - 1.96 * se, self.estimate + 1.96 * se))
    }
}

/// Standard errors from the inverse of the central-difference numerical
/// Hessian of half the -2LL at the ML estimate (step max(1e-4,
/// 1e-4 |theta|) per coordinate); CI = estimate +- 1.96 se. Labels whose
/// inverse-Hessian variance is not positive get a missing standard error.
pub fn standard_errors(fit: &FitResult, data: &[SequenceData]) -> Result<Vec<ParamInterval>> {
    if !fit.converged {
        return Err(Error::NotConverged(
            "standard errors require a converged fit".into(),
        ));
    }
    let spec = &fit.spec;
    let theta = &fit.estimates.values;
    let d = theta.len();
    let h: Vec<f64> = theta.iter().map(|t| (1e-4f64).max(1e-4 * t.abs())).collect();

    let eval = |v: &[f64]| -> Result<f64> {
        total_minus_two_ll(
            spec,
            &PackedParams {
                values: v.to_vec(),
            },
            data,
        )
    };
    let f0 = eval(theta)?;

    // Enumerate all evaluation points, run them in parallel.
    #[derive(Clone, Copy, PartialEq, Eq, Hash)]
    enum Point {
        Single(usize, i8),
        Pair(usize, usize, i8, i8),
    }
    let mut points = Vec::new();
    for i in 0..d {
        points.push(Point::Single(i, 1));
        points.push(Point::Single(i, -1));
    }
    for i in 0..d {
        for j in i + 1..d {
            for (si, sj) in [(1, 1), (1, -1), (-1, 1), (-1, -1)] {
                points.push(Point::Pair(i, j, si, sj));
            }
        }
    }
    let values: Vec<(Point, Result<f64>)> = points
        .par_iter()
        .map(|&p| {
            let mut v = theta.clone();
            match p {
                Point::Single(i, s) => v[i] += s as f64 * h[i],
                Point::Pair(i, j, si, sj) => {
                    v[i] += si as f64 * h[i];
                    v[j] += sj as f64 * h[j];
                }
            }
            (p, eval(&v))
        })
        .collect();
    let mut lookup = std::collections::HashMap::new();
    for (p, v) in values {
        lookup.insert(p, v?);
    }

    // Hessian of (1/2) * -2LL.
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        let fp = lookup[&Point::Single(i, 1)];
        let fm = lookup[&Point::Single(i, -1)];
        hess[(i, i)] = 0.5 * (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
    }
    for i in 0..d {
        for j in i + 1..d {
            let fpp = lookup[&Point::Pair(i, j, 1, 1)];
            let fpm = lookup[&Point::Pair(i, j, 1, -1)];
            let fmp = lookup[&Point::Pair(i, j, -1, 1)];
            let fmm = lookup[&Point::Pair(i, j, -1, -1)];
            let v = 0.5 * (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }

    let cov = match hess.clone().cholesky() {
        Some(c) => c.inverse(),
        None => pinv(&hess),
    };
    let out = fit
        .labels
        .iter()
        .enumerate()
        .map(|(i, label)| {
            let var = cov[(i, i)];
            ParamInterval {
                label: label.clone(),
                estimate: theta[i],
                std_error: if var.is_finite() && var > 0.0 {
                    Some(var.sqrt())
                } else {
                    None
                },
            }
        })
        .collect();
    Ok(out)
}

/// -2LL comparison of two fits of the same data.
#[derive(Debug, Clone, Serialize)]
pub struct ComparisonResult {
    pub base_minus_two_ll: f64,
    pub alt_minus_two_ll: f64,
    /// (-2LL base) - (-2LL alternative): positive favors the alternative.
    pub delta_ll: f64,
    /// "base" or "alternative".
    pub preferred: String,
    pub base_free_params: usize,
    pub alt_free_params: usize,
}

/// Compare two fits computed on identical data (checked by fingerprint).
pub fn compare_models(base_fit: &FitResult, alt_fit: &FitResult) -> Result<ComparisonResult> {
    if base_fit.data_fingerprint != alt_fit.data_fingerprint {
        return Err(Error::DataMismatch);
    }
    let delta_ll = base_fit.minus_two_ll - alt_fit.minus_two_ll;
    Ok(ComparisonResult {
        base_minus_two_ll: base_fit.minus_two_ll,
        alt_minus_two_ll: alt_fit.minus_two_ll,
        delta_ll,
        preferred: if alt_fit.minus_two_ll < base_fit.minus_two_ll {
            "alternative".into()
        } else {
            "base".into()
        },
        base_free_params: base_fit.labels.len(),
        alt_free_params: alt_fit.labels.len(),
    })
}

/// Fit a nested pair: when the richer spec does not reach the nested
/// spec's likelihood from its own start, it is refit from the nested
/// solution embedded into the richer parameter space, which EM can only
/// improve.
pub fn fit_pair(
    nested_spec: &ModelSpec,
    full_spec: &ModelSpec,
    data: &[SequenceData],
    opts: &FitOptions,
) -> Result<(FitResult, FitResult, ComparisonResult)> {
    let nested = fit(nested_spec, data, opts)?;
    let mut full = fit(full_spec, data, opts)?;
    if full.minus_two_ll > nested.minus_two_ll - 1e-9 {
        if let Ok(embedded) = embed_params(&nested, full_spec) {
            let mut warm_opts = opts.clone();
            warm_opts.init = Some(embedded);
            warm_opts.starts = 1;
            if let Ok(refit) = fit(full_spec, data, &warm_opts) {
                if refit.minus_two_ll < full.minus_two_ll {
                    full = refit;
                }
            }
        }
    }
    let comparison = compare_models(&nested, &full)?;
    Ok((nested, full, comparison))
}

/// Map a nested fit's parameters into a richer spec's packed space,
/// nudging boundary correlations inward so EM can move.
fn embed_params(nested: &FitResult, full_spec: &ModelSpec) -> Result<PackedParams> {
    let params = nested.params()?;
    let mut packed = pack(&params, full_spec)?;
    let transforms = crate::model::label_transforms(full_spec);
    for (i, t) in transforms.iter().enumerate() {
        match t {
            crate::model::Transform::Correlation { bound } => {
                let cap = bound * (1.0 - 1e-6);
                packed.values[i] = packed.values[i].clamp(-cap, cap);
            }
            crate::model::Transform::LogVariance => {
                packed.values[i] = packed.values[i].max(1e-8);
            }
            crate::model::Transform::Identity => {}
        }
    }
    Ok(packed)
}
