//! Small dense linear-algebra helpers shared by the filtering and
//! estimation code.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Force exact symmetry: (M + M') / 2.
pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (m + m.transpose())
}

/// Kronecker product A (x) B.
pub(crate) fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = DMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = s * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Column-major vectorization.
pub(crate) fn vec_of(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Cholesky with a single jitter retry (1e-10 * mean diagonal added once).
///
/// Returns the factorization or None if the matrix stays indefinite.
pub(crate) fn cholesky_jittered(m: &DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    if let Some(c) = m.clone().cholesky() {
        return Some(c);
    }
    let n = m.nrows();
    if n == 0 {
        return None;
    }
    let jitter = 1e-10 * m.trace().abs().max(1e-300) / n as f64;
    let mut jm = m.clone();
    for i in 0..n {
        jm[(i, i)] += jitter;
    }
    jm.cholesky()
}

/// log(det M) for symmetric positive-definite M via Cholesky.
pub(crate) fn spd_log_det(m: &DMatrix<f64>, time: usize) -> Result<f64> {
    let c = cholesky_jittered(m).ok_or(Error::SingularInnovation { time })?;
    let l = c.l();
    let mut acc = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)];
        if d <= 0.0 || !d.is_finite() {
            return Err(Error::SingularInnovation { time });
        }
        acc += 2.0 * d.ln();
    }
    Ok(acc)
}

/// A factor L with L L' = M for symmetric PSD M (possibly singular).
///
/// Tries Cholesky first; falls back to an eigendecomposition with small
/// negative eigenvalues clamped to zero.
pub(crate) fn psd_factor(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let eig = nalgebra::SymmetricEigen::new(symmetrize(m));
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let tol = 1e-8 * scale.max(1e-300);
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -tol {
            return Err(Error::NotPsd(what.to_string()));
        }
        *v = v.max(0.0).sqrt();
    }
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&vals))
}

/// Moore-Penrose pseudo-inverse via SVD with a relative singular-value
/// cutoff; used where a covariance or normal matrix may be exactly
/// singular (zero process noise, tied parameter directions).
pub(crate) fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return DMatrix::zeros(m.ncols(), m.nrows());
    }
    let svd = m.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let eps = 1e-12 * sigma_max.max(1e-300);
    svd.pseudo_inverse(eps)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// Spectral radius of a square matrix.
pub(crate) fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .fold(0.0f64, |a, c| a.max(c.norm()))
}

/// Solve the discrete Lyapunov equation S = A S A' + Q via Kronecker
/// vectorization: (I - A (x) A) vec(S) = vec(Q).
pub(crate) fn discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = a.nrows();
    let radius = spectral_radius(a);
    if radius >= 1.0 - 1e-9 {
        return Err(Error::NonStationary(radius));
    }
    let sys = DMatrix::identity(m * m, m * m) - kron(a, a);
    let rhs = vec_of(q);
    let sol = sys
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("Lyapunov system singular".into()))?;
    let s = DMatrix::from_column_slice(m, m, sol.as_slice());
    Ok(symmetrize(&s))
}

/// FNV-1a over a byte stream; used for data fingerprints and config hashes.
#[derive(Clone, Copy)]
pub struct Fnv1a(u64);

impl Fnv1a {
    pub fn new() -> Self {
        Fnv1a(0xcbf29ce484222325)
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }

    pub fn write_f64(&mut self, v: f64) {
        // Normalize NaNs so equal missing patterns hash equally.
        let bits = if v.is_nan() {
            f64::NAN.to_bits()
        } else {
            v.to_bits()
        };
        self.write(&bits.to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

impl Default for Fnv1a {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kron_small() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = DMatrix::from_row_slice(1, 2, &[5.0, 6.0]);
        let k = kron(&a, &b);
        assert_eq!(k.shape(), (2, 4));
        assert_eq!(k[(0, 0)], 5.0);
        assert_eq!(k[(0, 1)], 6.0);
        assert_eq!(k[(0, 2)], 10.0);
        assert_eq!(k[(1, 3)], 24.0);
    }

    #[test]
    fn lyapunov_scalar() {
        // s = a^2 s + q  =>  s = q / (1 - a^2)
        let a = DMatrix::from_element(1, 1, 0.5);
        let q = DMatrix::from_element(1, 1, 0.75);
        let s = discrete_lyapunov(&a, &q).unwrap();
        assert!((s[(0, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lyapunov_rejects_unit_root() {
        let a = DMatrix::from_element(1, 1, 1.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        assert!(discrete_lyapunov(&a, &q).is_err());
    }

    #[test]
    fn psd_factor_reconstructs() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let l = psd_factor(&m, "test").unwrap();
        let back = &l * l.transpose();
        assert!((&back - &m).amax() < 1e-12);
        // Singular but PSD.
        let ones = DMatrix::from_element(2, 2, 1.0);
        let l = psd_factor(&ones, "test").unwrap();
        let back = &l * l.transpose();
        assert!((&back - &ones).amax() < 1e-10);
    }
}
