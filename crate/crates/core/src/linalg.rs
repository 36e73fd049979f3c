//! Small dense linear algebra: Cholesky, least squares through the normal
//! equations, and the PSD repair applied to covariance forecasts.
//!
//! Matrices are row-major `Vec<Vec<f64>>`. Sizes here are tiny (at most a
//! handful of regressors or underlyings), so clarity wins over layout.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Designs whose equilibrated normal matrix is worse conditioned than this
/// are rejected. Forming `X'X` squares the condition number of `X`.
pub const MAX_CONDITION: f64 = 1e10;

const SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("singular design: condition number {condition:e} exceeds {max:e}")]
    Singular { condition: f64, max: f64 },
    #[error("matrix is not positive definite at pivot {0}")]
    NotPositiveDefinite(usize),
    #[error("matrix is not symmetric: |a_ij - a_ji| = {0:e}")]
    NotSymmetric(f64),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite input")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

pub fn zeros(n: usize, m: usize) -> Vec<Vec<f64>> {
    vec![vec![0.0; m]; n]
}

pub fn identity(n: usize) -> Vec<Vec<f64>> {
    let mut a = zeros(n, n);
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    a
}

pub fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = b.first().map_or(0, |r| r.len());
    let mut out = zeros(a.len(), m);
    for (i, row) in a.iter().enumerate() {
        for (k, &aik) in row.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            for j in 0..m {
                out[i][j] += aik * b[k][j];
            }
        }
    }
    out
}

pub fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, x)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn trace(a: &[Vec<f64>]) -> f64 {
    a.iter().enumerate().map(|(i, r)| r[i]).sum()
}

pub fn max_asymmetry(a: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..a.len() {
        for j in 0..i {
            worst = worst.max((a[i][j] - a[j][i]).abs());
        }
    }
    worst
}

fn to_nalgebra(a: &[Vec<f64>]) -> DMatrix<f64> {
    let n = a.len();
    let m = a.first().map_or(0, |r| r.len());
    DMatrix::from_fn(n, m, |i, j| a[i][j])
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &[Vec<f64>]) -> Vec<f64> {
    if a.is_empty() {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(to_nalgebra(a)).eigenvalues.iter().copied().collect();
    ev.sort_by(|x, y| x.total_cmp(y));
    ev
}

/// Lower-triangular `L` with `A = L L'`.
pub fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) {
        return Err(LinalgError::Shape("cholesky needs a square matrix".into()));
    }
    let mut l = zeros(n, n);
    for j in 0..n {
        let mut d = a[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) {
            return Err(LinalgError::NotPositiveDefinite(j));
        }
        let djj = d.sqrt();
        l[j][j] = djj;
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L L' x = b` given the factor from [`cholesky`].
pub fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Least-squares fit and diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    /// `RSS / (n - p)` with `p` the number of estimated columns.
    pub residual_variance: f64,
    /// Of the column-equilibrated normal matrix.
    pub condition_number: f64,
    /// Columns dropped because they carry no variation beyond the intercept.
    /// Their coefficient and standard error are reported as 0.
    pub dropped: Vec<usize>,
}

impl OlsFit {
    pub fn predict(&self, row: &[f64]) -> f64 {
        dot(&self.coefficients, row)
    }
}

fn is_constant(col: impl Iterator<Item = f64> + Clone) -> bool {
    let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi - lo <= 1e-12 * hi.abs().max(lo.abs()).max(1e-300)
}

/// Ordinary least squares `min |y - X b|^2` via Cholesky on `X'X`.
///
/// Columns are equilibrated to unit diagonal before the factorization and
/// the condition number of the scaled matrix is checked against
/// [`MAX_CONDITION`]. A constant column after the first constant one (the
/// intercept) is linearly dependent on it and is dropped instead of
/// failing; the same holds for an all-zero column.
pub fn ols_solve(x: &[Vec<f64>], y: &[f64]) -> Result<OlsFit> {
    let n = x.len();
    if n != y.len() {
        return Err(LinalgError::Shape(format!("{n} rows for {} responses", y.len())));
    }
    let p_all = x.first().map_or(0, |r| r.len());
    if p_all == 0 || x.iter().any(|r| r.len() != p_all) {
        return Err(LinalgError::Shape("ragged or empty design".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }

    let mut keep = Vec::with_capacity(p_all);
    let mut dropped = Vec::new();
    let mut seen_constant = false;
    for j in 0..p_all {
        let col = x.iter().map(move |r| r[j]);
        let all_zero = x.iter().all(|r| r[j] == 0.0);
        if all_zero {
            dropped.push(j);
        } else if is_constant(col) {
            if seen_constant {
                dropped.push(j);
            } else {
                seen_constant = true;
                keep.push(j);
            }
        } else {
            keep.push(j);
        }
    }
    let p = keep.len();
    if n < p {
        return Err(LinalgError::Shape(format!("{n} rows for {p} regressors")));
    }

    let mut xtx = zeros(p, p);
    let mut xty = vec![0.0; p];
    for (row, &yi) in x.iter().zip(y) {
        for (a, &ja) in keep.iter().enumerate() {
            let va = row[ja];
            xty[a] += va * yi;
            for (b, &jb) in keep.iter().enumerate().take(a + 1) {
                xtx[a][b] += va * row[jb];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[b][a] = xtx[a][b];
        }
    }

    let scale: Vec<f64> = (0..p).map(|a| 1.0 / xtx[a][a].sqrt()).collect();
    let scaled: Vec<Vec<f64>> = (0..p)
        .map(|a| (0..p).map(|b| xtx[a][b] * scale[a] * scale[b]).collect())
        .collect();
    let ev = symmetric_eigenvalues(&scaled);
    let (lo, hi) = (ev[0], ev[p - 1]);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if condition > MAX_CONDITION {
        return Err(LinalgError::Singular {
            condition,
            max: MAX_CONDITION,
        });
    }
    let l = cholesky(&scaled)?;
    let rhs: Vec<f64> = (0..p).map(|a| xty[a] * scale[a]).collect();
    let z = cholesky_solve(&l, &rhs);
    let beta_kept: Vec<f64> = (0..p).map(|a| z[a] * scale[a]).collect();

    let mut coefficients = vec![0.0; p_all];
    for (a, &j) in keep.iter().enumerate() {
        coefficients[j] = beta_kept[a];
    }
    let residuals: Vec<f64> = x.iter().zip(y).map(|(r, yi)| yi - dot(r, &coefficients)).collect();
    let rss: f64 = residuals.iter().map(|e| e * e).sum();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let dof = n.saturating_sub(p);
    let residual_variance = if dof > 0 { rss / dof as f64 } else { f64::NAN };

    let mut std_errors = vec![0.0; p_all];
    for (a, &j) in keep.iter().enumerate() {
        let mut e = vec![0.0; p];
        e[a] = 1.0;
        let inv_col = cholesky_solve(&l, &e);
        std_errors[j] = (residual_variance * inv_col[a]).sqrt() * scale[a];
    }

    Ok(OlsFit {
        coefficients,
        std_errors,
        residuals,
        r_squared,
        residual_variance,
        condition_number: condition,
        dropped,
    })
}

/// Floors negative eigenvalues of a symmetric matrix at zero and rescales
/// the result so the original diagonal is restored.
///
/// Returns the repaired matrix and whether anything changed. Matrices that
/// are already PSD come back untouched.
pub fn ensure_psd(a: &[Vec<f64>]) -> Result<(Vec<Vec<f64>>, bool)> {
    let n = a.len();
    if a.iter().any(|r| r.len() != n) {
        return Err(LinalgError::Shape("ensure_psd needs a square matrix".into()));
    }
    if a.iter().flatten().any(|v| !v.is_finite()) {
        return Err(LinalgError::NonFinite);
    }
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let asym = max_asymmetry(a);
    if asym > SYMMETRY_TOL * scale.max(1.0) {
        return Err(LinalgError::NotSymmetric(asym));
    }
    if n == 0 || scale == 0.0 {
        return Ok((a.to_vec(), false));
    }
    let mut sym = a.to_vec();
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[i][j] + a[j][i]);
            sym[i][j] = m;
            sym[j][i] = m;
        }
    }
    let eig = SymmetricEigen::new(to_nalgebra(&sym));
    let min_ev = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min_ev >= 0.0 {
        return Ok((sym, false));
    }
    let floored = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let d = rebuilt[(i, i)];
            if d > 0.0 {
                (sym[i][i].max(0.0) / d).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut out = zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = rebuilt[(i, j)] * s[i] * s[j];
            out[i][j] = v;
            out[j][i] = v;
        }
        out[i][i] = sym[i][i].max(0.0);
    }
    Ok((out, true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent least-squares oracle: SVD pseudo-inverse.
    fn pinv_solution(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
        let xm = to_nalgebra(x);
        let yv = nalgebra::DVector::from_column_slice(y);
        let pinv = xm.pseudo_inverse(1e-14).unwrap();
        (pinv * yv).iter().copied().collect()
    }

    #[test]
    fn intercept_only_constant_response() {
        let x = vec![vec![1.0]; 10];
        let y = vec![3.5; 10];
        let fit = ols_solve(&x, &y).unwrap();
        assert!((fit.coefficients[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn exact_line() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![1.0, i as f64 * 0.37 - 2.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[1] + 1.0).collect();
        let fit = ols_solve(&x, &y).unwrap();
        assert!((fit.coefficients[0] - 1.0).abs() < 1e-10);
        assert!((fit.coefficients[1] - 2.0).abs() < 1e-10);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-10));
    }

    #[test]
    fn matches_pseudo_inverse_on_random_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x: Vec<Vec<f64>> = (0..200)
                .map(|_| {
                    let mut r = vec![1.0];
                    r.extend((0..5).map(|_| rng.random_range(-2.0..2.0)));
                    r
                })
                .collect();
            let y: Vec<f64> = x.iter().map(|r| r.iter().sum::<f64>() + rng.random_range(-1.0..1.0)).collect();
            let ours = ols_solve(&x, &y).unwrap().coefficients;
            let oracle = pinv_solution(&x, &y);
            for (a, b) in ours.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn collinear_design_is_rejected() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![1.0, i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..30).map(|i| i as f64).collect();
        assert!(matches!(ols_solve(&x, &y), Err(LinalgError::Singular { .. })));
    }

    #[test]
    fn redundant_constant_column_is_dropped() {
        let x: Vec<Vec<f64>> = (0..30).map(|i| vec![1.0, -4.0, (i as f64).sin()]).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.5 + 3.0 * r[2]).collect();
        let fit = ols_solve(&x, &y).unwrap();
        assert_eq!(fit.dropped, vec![1]);
        assert_eq!(fit.coefficients[1], 0.0);
        assert!((fit.coefficients[0] - 0.5).abs() < 1e-10);
        assert!((fit.coefficients[2] - 3.0).abs() < 1e-10);
    }

    #[test]
    fn cholesky_round_trip() {
        let a = vec![vec![4.0, 2.0, 0.4], vec![2.0, 3.0, 0.5], vec![0.4, 0.5, 1.0]];
        let l = cholesky(&a).unwrap();
        let lt: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| l[j][i]).collect()).collect();
        let back = matmul(&l, &lt);
        for i in 0..3 {
            for j in 0..3 {
                assert!((back[i][j] - a[i][j]).abs() < 1e-14);
            }
        }
        assert!(cholesky(&[vec![1.0, 2.0], vec![2.0, 1.0]]).is_err());
    }

    #[test]
    fn psd_unchanged() {
        let a = vec![vec![2.0, 0.3], vec![0.3, 1.0]];
        let (b, adjusted) = ensure_psd(&a).unwrap();
        assert!(!adjusted);
        assert_eq!(a, b);
    }

    #[test]
    fn psd_repair_of_overshooting_correlation() {
        let a = vec![vec![1.0, 1.2], vec![1.2, 1.0]];
        let (b, adjusted) = ensure_psd(&a).unwrap();
        assert!(adjusted);
        assert!((b[0][0] - 1.0).abs() < 1e-12 && (b[1][1] - 1.0).abs() < 1e-12);
        assert!(b[0][1] <= 1.0 + 1e-12);
        // Flooring the -0.2 eigenvalue leaves 1.1 * ones, rescaled to unit diagonal.
        assert!((b[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psd_zero_matrix() {
        let a = zeros(3, 3);
        let (b, adjusted) = ensure_psd(&a).unwrap();
        assert!(!adjusted);
        assert_eq!(a, b);
    }

    #[test]
    fn psd_rejects_asymmetric() {
        let a = vec![vec![1.0, 0.5], vec![0.4, 1.0]];
        assert!(matches!(ensure_psd(&a), Err(LinalgError::NotSymmetric(_))));
    }

    proptest! {
        #[test]
        fn residuals_orthogonal_to_regressors(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Vec<f64>> = (0..60)
                .map(|_| vec![1.0, rng.random_range(-1.0..1.0), rng.random_range(0.0..5.0)])
                .collect();
            let y: Vec<f64> = (0..60).map(|_| rng.random_range(-3.0..3.0)).collect();
            let fit = ols_solve(&x, &y).unwrap();
            for j in 0..3 {
                let g: f64 = x.iter().zip(&fit.residuals).map(|(r, e)| r[j] * e).sum();
                prop_assert!(g.abs() < 1e-8);
            }
        }

        #[test]
        fn repaired_matrix_is_psd(v in proptest::collection::vec(-1.5f64..1.5, 3)) {
            let a = vec![
                vec![1.0, v[0], v[1]],
                vec![v[0], 1.0, v[2]],
                vec![v[1], v[2], 1.0],
            ];
            let (b, _) = ensure_psd(&a).unwrap();
            prop_assert!(symmetric_eigenvalues(&b)[0] >= -1e-10);
            prop_assert!(max_asymmetry(&b) == 0.0);
            for i in 0..3 {
                prop_assert!((b[i][i] - 1.0).abs() < 1e-12);
            }
        }
    }
}
