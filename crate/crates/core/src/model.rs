//! Model structure for linear-Gaussian state-space models with inputs:
//! which observations load on which latents, which inputs perturb which
//! latents, and per-entry parameter constraints.
//!
//! State equation:        x_t = A x_{t-1} + B u_t + w_t,  w ~ N(0, Q)
//! Measurement equation:  y_t = C x_t + D u_t + v_t,      v ~ N(0, R)
//! Initial condition:     x_0 ~ N(x0, P0)
//!
//! Reports emitted from fits carry a notation bridge to the naming used by
//! common fitting packages (their Z = our loading matrix C, their C = our
//! input-effect matrix B, their B = our transition matrix A).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{STRESS_AUS, WORKLOAD_AUS};

/// Constraint on a single matrix entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Pinned to a constant value.
    Fixed(f64),
    /// Estimated; introduces the named free parameter.
    Free(String),
    /// Tied to the free parameter introduced elsewhere under this label.
    Shared(String),
}

/// Row-major matrix of entry constraints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMatrix {
    pub rows: usize,
    pub cols: usize,
    pub entries: Vec<Constraint>,
}

impl ConstraintMatrix {
    pub fn fixed(rows: usize, cols: usize, value: f64) -> Self {
        ConstraintMatrix {
            rows,
            cols,
            entries: vec![Constraint::Fixed(value); rows * cols],
        }
    }

    pub fn fixed_diagonal(n: usize, diag: f64, off: f64) -> Self {
        let mut m = Self::fixed(n, n, off);
        for i in 0..n {
            *m.get_mut(i, i) = Constraint::Fixed(diag);
        }
        m
    }

    pub fn get(&self, r: usize, c: usize) -> &Constraint {
        &self.entries[r * self.cols + c]
    }

    pub fn get_mut(&mut self, r: usize, c: usize) -> &mut Constraint {
        &mut self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, con: Constraint) {
        self.entries[r * self.cols + c] = con;
    }

    fn shape_ok(&self, rows: usize, cols: usize) -> bool {
        self.rows == rows && self.cols == cols && self.entries.len() == rows * cols
    }
}

/// Names of the constrained matrices, in packing order.
pub const MATRIX_NAMES: [&str; 8] = [
    "transition",
    "input_effect",
    "loading",
    "direct_effect",
    "state_noise",
    "obs_noise",
    "init_mean",
    "init_cov",
];

/// Structural description of a state-space model: variable names plus
/// per-entry constraints for every parameter matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub latents: Vec<String>,
    pub observations: Vec<String>,
    pub inputs: Vec<String>,
    /// A (m x m): latent autoregression.
    pub transition: ConstraintMatrix,
    /// B (m x p): input-to-latent effects.
    pub input_effect: ConstraintMatrix,
    /// C (n x m): loadings of observations on latents.
    pub loading: ConstraintMatrix,
    /// D (n x p): input-to-observation effects.
    pub direct_effect: ConstraintMatrix,
    /// Q (m x m): latent noise covariance.
    pub state_noise: ConstraintMatrix,
    /// R (n x n): observation noise covariance.
    pub obs_noise: ConstraintMatrix,
    /// x0 (m x 1): initial latent mean.
    pub init_mean: ConstraintMatrix,
    /// P0 (m x m): initial latent covariance.
    pub init_cov: ConstraintMatrix,
    /// Whether the model expects z-scored observations and inputs.
    pub standardized: bool,
}

impl ModelSpec {
    pub fn n_latents(&self) -> usize {
        self.latents.len()
    }

    pub fn n_observations(&self) -> usize {
        self.observations.len()
    }

    pub fn n_inputs(&self) -> usize {
        self.inputs.len()
    }

    fn matrices(&self) -> [&ConstraintMatrix; 8] {
        [
            &self.transition,
            &self.input_effect,
            &self.loading,
            &self.direct_effect,
            &self.state_noise,
            &self.obs_noise,
            &self.init_mean,
            &self.init_cov,
        ]
    }

    /// Free parameter labels in packing order: matrices in [`MATRIX_NAMES`]
    /// order, row-major within each, first occurrence only.
    pub fn free_labels(&self) -> Vec<String> {
        let mut labels = Vec::new();
        for m in self.matrices() {
            for e in &m.entries {
                if let Constraint::Free(l) = e {
                    if !labels.contains(l) {
                        labels.push(l.clone());
                    }
                }
            }
        }
        labels
    }

    pub fn free_param_count(&self) -> usize {
        self.free_labels().len()
    }

    /// Position of a label in the packed vector.
    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.free_labels().iter().position(|l| l == label)
    }

    /// Serialize to the structured JSON config format.
    pub fn to_config_json(&self) -> String {
        serde_json::to_string_pretty(&SpecConfig::from_spec(self)).expect("spec serializes")
    }

    /// Parse the structured JSON config format.
    pub fn from_config_json(json: &str) -> Result<Self> {
        let cfg: SpecConfig = serde_json::from_str(json)
            .map_err(|e| Error::InvalidSpec(format!("config parse error: {e}")))?;
        cfg.into_spec()
    }
}

/// One observation -> latent edge of the loading matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct LoadingEdge {
    observation: String,
    latent: String,
    constraint: Constraint,
}

/// External JSON layout: variable names, the loading structure as an edge
/// list, and the remaining matrices under `constraints`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SpecConfig {
    latents: Vec<String>,
    observations: Vec<String>,
    inputs: Vec<String>,
    loadings: Vec<LoadingEdge>,
    constraints: ConstraintBlocks,
    standardized: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ConstraintBlocks {
    transition: ConstraintMatrix,
    input_effect: ConstraintMatrix,
    direct_effect: ConstraintMatrix,
    state_noise: ConstraintMatrix,
    obs_noise: ConstraintMatrix,
    init_mean: ConstraintMatrix,
    init_cov: ConstraintMatrix,
}

impl SpecConfig {
    fn from_spec(spec: &ModelSpec) -> Self {
        let mut loadings = Vec::new();
        for r in 0..spec.loading.rows {
            for c in 0..spec.loading.cols {
                match spec.loading.get(r, c) {
                    Constraint::Fixed(v) if *v == 0.0 => {}
                    con => loadings.push(LoadingEdge {
                        observation: spec.observations[r].clone(),
                        latent: spec.latents[c].clone(),
                        constraint: con.clone(),
                    }),
                }
            }
        }
        SpecConfig {
            latents: spec.latents.clone(),
            observations: spec.observations.clone(),
            inputs: spec.inputs.clone(),
            loadings,
            constraints: ConstraintBlocks {
                transition: spec.transition.clone(),
                input_effect: spec.input_effect.clone(),
                direct_effect: spec.direct_effect.clone(),
                state_noise: spec.state_noise.clone(),
                obs_noise: spec.obs_noise.clone(),
                init_mean: spec.init_mean.clone(),
                init_cov: spec.init_cov.clone(),
            },
            standardized: spec.standardized,
        }
    }

    fn into_spec(self) -> Result<ModelSpec> {
        let n = self.observations.len();
        let m = self.latents.len();
        let mut loading = ConstraintMatrix::fixed(n, m, 0.0);
        for edge in &self.loadings {
            let r = self
                .observations
                .iter()
                .position(|o| *o == edge.observation)
                .ok_or_else(|| Error::MissingColumn(edge.observation.clone()))?;
            let c = self
                .latents
                .iter()
                .position(|l| *l == edge.latent)
                .ok_or_else(|| Error::MissingColumn(edge.latent.clone()))?;
            loading.set(r, c, edge.constraint.clone());
        }
        Ok(ModelSpec {
            latents: self.latents,
            observations: self.observations,
            inputs: self.inputs,
            transition: self.constraints.transition,
            input_effect: self.constraints.input_effect,
            loading,
            direct_effect: self.constraints.direct_effect,
            state_noise: self.constraints.state_noise,
            obs_noise: self.constraints.obs_noise,
            init_mean: self.constraints.init_mean,
            init_cov: self.constraints.init_cov,
            standardized: self.standardized,
        })
    }
}

/// Concrete parameter values for every matrix of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub transition: DMatrix<f64>,
    pub input_effect: DMatrix<f64>,
    pub loading: DMatrix<f64>,
    pub direct_effect: DMatrix<f64>,
    pub state_noise: DMatrix<f64>,
    pub obs_noise: DMatrix<f64>,
    pub init_mean: DVector<f64>,
    pub init_cov: DMatrix<f64>,
}

impl ParamSet {
    /// (latents, observations, inputs).
    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.transition.nrows(),
            self.loading.nrows(),
            self.input_effect.ncols(),
        )
    }
}

/// Flat vector of free-parameter values in the spec's label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackedParams {
    pub values: Vec<f64>,
}

impl PackedParams {
    pub fn zeros(spec: &ModelSpec) -> Self {
        PackedParams {
            values: vec![0.0; spec.free_param_count()],
        }
    }
}

fn for_each_entry<'a>(
    spec: &'a ModelSpec,
    mut f: impl FnMut(&'static str, usize, usize, &'a Constraint),
) {
    for (name, m) in MATRIX_NAMES.iter().zip(spec.matrices()) {
        for r in 0..m.rows {
            for c in 0..m.cols {
                f(name, r, c, m.get(r, c));
            }
        }
    }
}

/// Read the free-parameter vector out of concrete matrices.
///
/// Errors if a `Fixed` entry disagrees with the spec or tied entries carry
/// different values. `pack(unpack(v)) == v` exactly.
pub fn pack(params: &ParamSet, spec: &ModelSpec) -> Result<PackedParams> {
    let labels = spec.free_labels();
    let mut values = vec![f64::NAN; labels.len()];
    let get_value = |name: &str, r: usize, c: usize| -> f64 {
        match name {
            "transition" => params.transition[(r, c)],
            "input_effect" => params.input_effect[(r, c)],
            "loading" => params.loading[(r, c)],
            "direct_effect" => params.direct_effect[(r, c)],
            "state_noise" => params.state_noise[(r, c)],
            "obs_noise" => params.obs_noise[(r, c)],
            "init_mean" => params.init_mean[r],
            "init_cov" => params.init_cov[(r, c)],
            _ => unreachable!(),
        }
    };
    let mut err = None;
    for_each_entry(spec, |name, r, c, con| {
        if err.is_some() {
            return;
        }
        let v = get_value(name, r, c);
        match con {
            Constraint::Fixed(fx) => {
                if v != *fx {
                    err = Some(Error::FixedEntryMismatch {
                        matrix: name.to_string(),
                        row: r,
                        col: c,
                        fixed: *fx,
                        actual: v,
                    });
                }
            }
            Constraint::Free(l) => {
                let idx = labels.iter().position(|x| x == l).unwrap();
                values[idx] = v;
            }
            Constraint::Shared(_) => {}
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    // Tied entries must agree with their label's value.
    for_each_entry(spec, |name, r, c, con| {
        if err.is_some() {
            return;
        }
        if let Constraint::Shared(l) = con {
            let idx = labels.iter().position(|x| x == l);
            match idx {
                Some(idx) => {
                    let v = get_value(name, r, c);
                    if v != values[idx] {
                        err = Some(Error::FixedEntryMismatch {
                            matrix: name.to_string(),
                            row: r,
                            col: c,
                            fixed: values[idx],
                            actual: v,
                        });
                    }
                }
                None => {
                    err = Some(Error::InvalidSpec(format!(
                        "shared label `{l}` has no free declaration"
                    )));
                }
            }
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    Ok(PackedParams { values })
}

/// Materialize concrete matrices from a free-parameter vector.
pub fn unpack(packed: &PackedParams, spec: &ModelSpec) -> Result<ParamSet> {
    let labels = spec.free_labels();
    if packed.values.len() != labels.len() {
        return Err(Error::Dimension {
            what: "packed parameter vector".into(),
            expected: labels.len(),
            actual: packed.values.len(),
        });
    }
    let m = spec.n_latents();
    let n = spec.n_observations();
    let p = spec.n_inputs();
    let mut params = ParamSet {
        transition: DMatrix::zeros(m, m),
        input_effect: DMatrix::zeros(m, p),
        loading: DMatrix::zeros(n, m),
        direct_effect: DMatrix::zeros(n, p),
        state_noise: DMatrix::zeros(m, m),
        obs_noise: DMatrix::zeros(n, n),
        init_mean: DVector::zeros(m),
        init_cov: DMatrix::zeros(m, m),
    };
    let mut missing = None;
    for_each_entry(spec, |name, r, c, con| {
        let v = match con {
            Constraint::Fixed(v) => *v,
            Constraint::Free(l) | Constraint::Shared(l) => {
                match labels.iter().position(|x| x == l) {
                    Some(i) => packed.values[i],
                    None => {
                        missing = Some(l.clone());
                        return;
                    }
                }
            }
        };
        match name {
            "transition" => params.transition[(r, c)] = v,
            "input_effect" => params.input_effect[(r, c)] = v,
            "loading" => params.loading[(r, c)] = v,
            "direct_effect" => params.direct_effect[(r, c)] = v,
            "state_noise" => params.state_noise[(r, c)] = v,
            "obs_noise" => params.obs_noise[(r, c)] = v,
            "init_mean" => params.init_mean[r] = v,
            "init_cov" => params.init_cov[(r, c)] = v,
            _ => unreachable!(),
        }
    });
    if let Some(l) = missing {
        return Err(Error::InvalidSpec(format!(
            "shared label `{l}` has no free declaration"
        )));
    }
    Ok(params)
}

/// Spec validation findings. Collected, never fatal.
#[derive(Debug, Clone, PartialEq)]
pub enum SpecViolation {
    DimensionMismatch {
        matrix: String,
        expected: (usize, usize),
        actual: (usize, usize),
    },
    DuplicateLabel(String),
    UnresolvedShared(String),
    ScaleUnidentified(String),
    EmptyModel,
}

impl std::fmt::Display for SpecViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpecViolation::DimensionMismatch {
                matrix,
                expected,
                actual,
            } => write!(
                f,
                "matrix `{matrix}` has shape {actual:?}, expected {expected:?}"
            ),
            SpecViolation::DuplicateLabel(l) => write!(f, "label `{l}` declared free more than once"),
            SpecViolation::UnresolvedShared(l) => {
                write!(f, "shared label `{l}` has no free declaration")
            }
            SpecViolation::ScaleUnidentified(latent) => write!(
                f,
                "latent `{latent}` has free noise variance and no fixed nonzero loading: scale unidentified"
            ),
            SpecViolation::EmptyModel => write!(f, "model needs at least one latent and one observation"),
        }
    }
}

/// Check label uniqueness, dimension consistency, and the presence of a
/// scale identification constraint per latent. Returns all findings.
pub fn validate_spec(spec: &ModelSpec) -> Vec<SpecViolation> {
    let mut out = Vec::new();
    let m = spec.n_latents();
    let n = spec.n_observations();
    let p = spec.n_inputs();
    if m == 0 || n == 0 {
        out.push(SpecViolation::EmptyModel);
        return out;
    }
    let shapes: [(&str, &ConstraintMatrix, (usize, usize)); 8] = [
        ("transition", &spec.transition, (m, m)),
        ("input_effect", &spec.input_effect, (m, p)),
        ("loading", &spec.loading, (n, m)),
        ("direct_effect", &spec.direct_effect, (n, p)),
        ("state_noise", &spec.state_noise, (m, m)),
        ("obs_noise", &spec.obs_noise, (n, n)),
        ("init_mean", &spec.init_mean, (m, 1)),
        ("init_cov", &spec.init_cov, (m, m)),
    ];
    for (name, mat, expected) in shapes {
        if !mat.shape_ok(expected.0, expected.1) {
            out.push(SpecViolation::DimensionMismatch {
                matrix: name.to_string(),
                expected,
                actual: (mat.rows, mat.cols),
            });
        }
    }
    if !out.is_empty() {
        return out;
    }

    let mut seen: Vec<&str> = Vec::new();
    let mut dups: Vec<String> = Vec::new();
    for_each_entry(spec, |_, _, _, con| {
        if let Constraint::Free(l) = con {
            if seen.contains(&l.as_str()) {
                if !dups.contains(l) {
                    dups.push(l.clone());
                }
            } else {
                seen.push(l.as_str());
            }
        }
    });
    for l in dups {
        out.push(SpecViolation::DuplicateLabel(l));
    }

    let mut unresolved: Vec<String> = Vec::new();
    for_each_entry(spec, |_, _, _, con| {
        if let Constraint::Shared(l) = con {
            if !seen.contains(&l.as_str()) && !unresolved.contains(l) {
                unresolved.push(l.clone());
            }
        }
    });
    for l in unresolved {
        out.push(SpecViolation::UnresolvedShared(l));
    }

    for (j, latent) in spec.latents.iter().enumerate() {
        let noise_fixed = matches!(spec.state_noise.get(j, j), Constraint::Fixed(_));
        let loading_fixed = (0..n).any(|i| match spec.loading.get(i, j) {
            Constraint::Fixed(v) => *v != 0.0,
            _ => false,
        });
        if !noise_fixed && !loading_fixed {
            out.push(SpecViolation::ScaleUnidentified(latent.clone()));
        }
    }
    out
}

fn canonical_observation_order(observations: &[String]) -> Result<Vec<String>> {
    let canonical = [
        "hr", "au1", "au2", "au6", "au7", "au12", "au15", "au25", "gte",
    ];
    let missing: Vec<String> = canonical
        .iter()
        .filter(|c| !observations.iter().any(|o| o == *c))
        .map(|c| c.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns(missing));
    }
    let mut ordered: Vec<String> = canonical.iter().map(|s| s.to_string()).collect();
    for o in observations {
        if !ordered.contains(o) {
            ordered.push(o.clone());
        }
    }
    Ok(ordered)
}

fn two_latent_skeleton(observations: &[String], inputs: &[String]) -> Result<ModelSpec> {
    let ordered = canonical_observation_order(observations)?;
    let n = ordered.len();
    let p = inputs.len();
    let m = 2;

    let mut loading = ConstraintMatrix::fixed(n, m, 0.0);
    let stress_set: Vec<&str> = std::iter::once("hr").chain(STRESS_AUS).collect();
    let workload_set: Vec<&str> = WORKLOAD_AUS.iter().copied().chain(["gte"]).collect();
    for (r, obs) in ordered.iter().enumerate() {
        if stress_set.iter().any(|s| s == obs) {
            loading.set(r, 0, Constraint::Free(format!("Z{}1", r + 1)));
        }
        if workload_set.iter().any(|s| s == obs) {
            loading.set(r, 1, Constraint::Free(format!("Z{}2", r + 1)));
        }
    }

    let mut obs_noise = ConstraintMatrix::fixed(n, n, 0.0);
    for (r, obs) in ordered.iter().enumerate() {
        obs_noise.set(r, r, Constraint::Free(format!("R.{obs}")));
    }

    Ok(ModelSpec {
        latents: vec!["stress".into(), "workload".into()],
        observations: ordered,
        inputs: inputs.to_vec(),
        transition: ConstraintMatrix::fixed(m, m, 0.0),
        input_effect: ConstraintMatrix::fixed(m, p, 0.0),
        loading,
        direct_effect: ConstraintMatrix::fixed(n, p, 0.0),
        state_noise: ConstraintMatrix::fixed_diagonal(m, 1.0, 0.0),
        obs_noise,
        init_mean: ConstraintMatrix::fixed(m, 1, 0.0),
        init_cov: ConstraintMatrix::fixed_diagonal(m, 5.0, 0.0),
        standardized: true,
    })
}

/// Two-latent model: stress and workload latents with their literature
/// indicator sets, full free 2x2 transition, free input effects, and a free
/// latent-noise covariance (unit noise variances fix the latent scale).
pub fn build_two_latent_spec(observations: &[String], inputs: &[String]) -> Result<ModelSpec> {
    let mut spec = two_latent_skeleton(observations, inputs)?;
    // Transition labels follow the fitting-package convention, column-major.
    spec.transition.set(0, 0, Constraint::Free("B.b1".into()));
    spec.transition.set(1, 0, Constraint::Free("B.b2".into()));
    spec.transition.set(0, 1, Constraint::Free("B.b3".into()));
    spec.transition.set(1, 1, Constraint::Free("B.b4".into()));
    for j in 0..inputs.len() {
        spec.input_effect
            .set(0, j, Constraint::Free(format!("C.C1{}", j + 1)));
        spec.input_effect
            .set(1, j, Constraint::Free(format!("C.C2{}", j + 1)));
    }
    spec.state_noise.set(0, 1, Constraint::Free("Q.q2".into()));
    spec.state_noise.set(1, 0, Constraint::Shared("Q.q2".into()));
    Ok(spec)
}

/// Base model: the same shape with the two latents made identical — the
/// second latent's transition and input-effect rows are tied to the first's
/// and the latent noises are perfectly correlated — so the comparison to
/// the two-latent model differs only in the removed freedom.
pub fn build_base_spec(observations: &[String], inputs: &[String]) -> Result<ModelSpec> {
    let mut spec = two_latent_skeleton(observations, inputs)?;
    spec.transition.set(0, 0, Constraint::Free("B.b1".into()));
    spec.transition.set(0, 1, Constraint::Free("B.b3".into()));
    spec.transition.set(1, 0, Constraint::Shared("B.b3".into()));
    spec.transition.set(1, 1, Constraint::Shared("B.b1".into()));
    for j in 0..inputs.len() {
        let label = format!("C.C1{}", j + 1);
        spec.input_effect.set(0, j, Constraint::Free(label.clone()));
        spec.input_effect.set(1, j, Constraint::Shared(label));
    }
    spec.state_noise.set(0, 1, Constraint::Fixed(1.0));
    spec.state_noise.set(1, 0, Constraint::Fixed(1.0));
    Ok(spec)
}

/// Transform applied to one packed coordinate to map it onto an
/// unconstrained optimization axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    /// Variance on the log scale.
    LogVariance,
    /// Covariance as atanh of the correlation against fixed diagonals;
    /// `bound` = sqrt(d_i * d_j).
    Correlation { bound: f64 },
}

/// Per-label transforms inferred from where each label sits: covariance
/// diagonals become log-variances, off-diagonals between fixed diagonals
/// become bounded correlations, everything else is unconstrained.
pub fn label_transforms(spec: &ModelSpec) -> Vec<Transform> {
    let labels = spec.free_labels();
    let mut out = vec![Transform::Identity; labels.len()];
    let cov_names = ["state_noise", "obs_noise", "init_cov"];
    for_each_entry(spec, |name, r, c, con| {
        if let Constraint::Free(l) = con {
            if !cov_names.contains(&name) {
                return;
            }
            let idx = labels.iter().position(|x| x == l).unwrap();
            let mat = match name {
                "state_noise" => &spec.state_noise,
                "obs_noise" => &spec.obs_noise,
                _ => &spec.init_cov,
            };
            if r == c {
                out[idx] = Transform::LogVariance;
            } else if let (Constraint::Fixed(di), Constraint::Fixed(dj)) =
                (mat.get(r, r), mat.get(c, c))
            {
                let prod = di * dj;
                if prod > 0.0 {
                    out[idx] = Transform::Correlation { bound: prod.sqrt() };
                }
            }
        }
    });
    out
}

const VARIANCE_FLOOR: f64 = 1e-12;
const CORRELATION_CAP: f64 = 1.0 - 1e-12;

/// Map packed (natural-space) values to the unconstrained optimizer space.
pub fn to_unconstrained(packed: &PackedParams, spec: &ModelSpec) -> Vec<f64> {
    packed
        .values
        .iter()
        .zip(label_transforms(spec))
        .map(|(&v, t)| match t {
            Transform::Identity => v,
            Transform::LogVariance => v.max(VARIANCE_FLOOR).ln(),
            Transform::Correlation { bound } => {
                let rho = (v / bound).clamp(-CORRELATION_CAP, CORRELATION_CAP);
                rho.atanh()
            }
        })
        .collect()
}

/// Inverse of [`to_unconstrained`]; always yields positive free variances
/// and |correlation| < 1, so unpacked covariance patterns stay PSD.
pub fn from_unconstrained(w: &[f64], spec: &ModelSpec) -> PackedParams {
    let values = w
        .iter()
        .zip(label_transforms(spec))
        .map(|(&v, t)| match t {
            Transform::Identity => v,
            Transform::LogVariance => v.exp(),
            Transform::Correlation { bound } => bound * v.tanh(),
        })
        .collect();
    PackedParams { values }
}
