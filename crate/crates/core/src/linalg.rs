//! Exact linear algebra: least squares via normal equations, R², quantiles
//! and a small PCA. nalgebra does the factorizations; everything here is
//! deterministic.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

fn to_dmatrix(t: &Tensor2) -> DMatrix<f64> {
    DMatrix::from_row_slice(t.rows(), t.cols(), t.data())
}

fn from_dmatrix(m: &DMatrix<f64>) -> Tensor2 {
    let mut data = Vec::with_capacity(m.nrows() * m.ncols());
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            data.push(m[(r, c)]);
        }
    }
    Tensor2::from_vec(m.nrows(), m.ncols(), data).expect("dmatrix shape")
}

pub struct LstsqFit {
    /// p x k coefficient matrix (one column per target).
    pub coeffs: Tensor2,
    /// True when the normal equations were rank deficient and a ridge term
    /// (1e-8 on the diagonal) was needed.
    pub ridge_fallback: bool,
}

/// Least squares A·C ≈ B by normal equations with Cholesky; rank-deficient
/// systems fall back to ridge with lambda = 1e-8. Deficiency is detected on
/// the Gram spectrum rather than Cholesky pivots, which can squeak through
/// on exactly collinear columns by rounding luck.
pub fn lstsq(a: &Tensor2, b: &Tensor2) -> Result<LstsqFit> {
    if a.rows() != b.rows() {
        return Err(Error::Shape(format!("lstsq: {} design rows vs {} target rows", a.rows(), b.rows())));
    }
    if a.rows() < a.cols() {
        return Err(Error::Config(format!(
            "lstsq needs at least as many rows as columns ({} < {})",
            a.rows(),
            a.cols()
        )));
    }
    let am = to_dmatrix(a);
    let bm = to_dmatrix(b);
    let gram = am.transpose() * &am;
    let rhs = am.transpose() * &bm;

    let eigs = gram.clone().symmetric_eigen().eigenvalues;
    let lam_max = eigs.iter().cloned().fold(0.0, f64::max);
    let lam_min = eigs.iter().cloned().fold(f64::INFINITY, f64::min);
    let full_rank = lam_max > 0.0 && lam_min > lam_max * 1e-12;

    if full_rank {
        if let Some(chol) = gram.clone().cholesky() {
            return Ok(LstsqFit { coeffs: from_dmatrix(&chol.solve(&rhs)), ridge_fallback: false });
        }
    }
    let mut ridged = gram;
    for i in 0..ridged.nrows() {
        ridged[(i, i)] += 1e-8;
    }
    let chol = ridged
        .cholesky()
        .ok_or_else(|| Error::Numeric("normal equations not solvable even with ridge".into()))?;
    Ok(LstsqFit { coeffs: from_dmatrix(&chol.solve(&rhs)), ridge_fallback: true })
}

/// R² over all target columns jointly: 1 - SSR/SST with SST centered per
/// column and summed. Errors when the targets have no variance.
pub fn r2_total(pred: &Tensor2, target: &Tensor2) -> Result<f64> {
    if pred.rows() != target.rows() || pred.cols() != target.cols() {
        return Err(Error::Shape("r2_total: prediction and target shapes differ".into()));
    }
    let n = target.rows();
    if n < 2 {
        return Err(Error::Config("r2_total needs at least 2 rows".into()));
    }
    let means = target.col_sums().iter().map(|s| s / n as f64).collect::<Vec<_>>();
    let mut ssr = 0.0;
    let mut sst = 0.0;
    for r in 0..n {
        for c in 0..target.cols() {
            let t = target.get(r, c);
            let p = pred.get(r, c);
            ssr += (t - p) * (t - p);
            sst += (t - means[c]) * (t - means[c]);
        }
    }
    if sst == 0.0 {
        return Err(Error::Numeric("R² undefined: target variance is zero".into()));
    }
    Ok(1.0 - ssr / sst)
}

/// Appends a column of ones (intercept) to a design matrix.
pub fn with_intercept(a: &Tensor2) -> Tensor2 {
    let mut data = Vec::with_capacity(a.rows() * (a.cols() + 1));
    for r in 0..a.rows() {
        data.extend_from_slice(a.row(r));
        data.push(1.0);
    }
    Tensor2::from_vec(a.rows(), a.cols() + 1, data).expect("intercept shape")
}

/// q-th quantile with linear interpolation; `values` need not be sorted.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Config("quantile of an empty list".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("quantile fraction must be in [0, 1], got {q}")));
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

pub struct Pca {
    /// d x k matrix, one principal direction per column, unit norm. Sign
    /// convention: the entry with the largest magnitude is positive.
    pub components: Tensor2,
    pub mean: Vec<f64>,
    pub explained_variance: Vec<f64>,
}

impl Pca {
    /// Projects rows of `data` onto the k components (centering first).
    pub fn project(&self, data: &Tensor2) -> Result<Tensor2> {
        if data.cols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "pca expects {} columns, got {}",
                self.mean.len(),
                data.cols()
            )));
        }
        let mut centered = data.clone();
        for r in 0..data.rows() {
            for c in 0..data.cols() {
                centered.set(r, c, data.get(r, c) - self.mean[c]);
            }
        }
        Ok(centered.matmul(&self.components))
    }
}

/// Exact PCA through the eigendecomposition of the sample covariance.
pub fn pca(data: &Tensor2, k: usize) -> Result<Pca> {
    let (n, d) = (data.rows(), data.cols());
    if n < 2 {
        return Err(Error::Config("pca needs at least 2 rows".into()));
    }
    if k == 0 || k > d {
        return Err(Error::Config(format!("pca component count must be in 1..={d}, got {k}")));
    }
    let mean: Vec<f64> = data.col_sums().iter().map(|s| s / n as f64).collect();
    let mut centered = to_dmatrix(data);
    for r in 0..n {
        for c in 0..d {
            centered[(r, c)] -= mean[c];
        }
    }
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = cov.symmetric_eigen();
    // sort eigenpairs by descending eigenvalue
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).expect("finite eigenvalues"));
    let mut components = Tensor2::zeros(d, k);
    let mut explained = Vec::with_capacity(k);
    for (out_c, &src) in order.iter().take(k).enumerate() {
        let col = eig.eigenvectors.column(src);
        let lead = (0..d).max_by(|&i, &j| col[i].abs().partial_cmp(&col[j].abs()).expect("finite")).unwrap();
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..d {
            components.set(r, out_c, sign * col[r]);
        }
        explained.push(eig.eigenvalues[src].max(0.0));
    }
    Ok(Pca { components, mean, explained_variance: explained })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn lstsq_recovers_exact_linear_map() {
        let mut rng = Rng::seed_from(1);
        let a = Tensor2::from_vec(50, 3, rng.normal_vec(150)).unwrap();
        let truth = Tensor2::from_vec(3, 2, vec![1.5, -2.0, 0.25, 3.0, 0.0, -1.0]).unwrap();
        let b = a.matmul(&truth);
        let fit = lstsq(&a, &b).unwrap();
        assert!(!fit.ridge_fallback);
        for (est, tru) in fit.coeffs.data().iter().zip(truth.data()) {
            assert!((est - tru).abs() < 1e-10, "{est} vs {tru}");
        }
    }

    #[test]
    fn lstsq_flags_rank_deficiency() {
        // second column duplicates the first
        let mut rng = Rng::seed_from(2);
        let col: Vec<f64> = rng.normal_vec(30);
        let mut data = Vec::new();
        for &v in &col {
            data.push(v);
            data.push(v);
        }
        let a = Tensor2::from_vec(30, 2, data).unwrap();
        let b = Tensor2::from_vec(30, 1, col).unwrap();
        let fit = lstsq(&a, &b).unwrap();
        assert!(fit.ridge_fallback);
        // ridge splits the weight across the duplicated columns
        let sum = fit.coeffs.get(0, 0) + fit.coeffs.get(1, 0);
        assert!((sum - 1.0).abs() < 1e-6, "sum {sum}");
    }

    #[test]
    fn r2_perfect_and_constant() {
        let t = Tensor2::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!((r2_total(&t, &t).unwrap() - 1.0).abs() < 1e-15);
        let mean_pred = Tensor2::filled(4, 1, 2.5);
        assert!(r2_total(&mean_pred, &t).unwrap().abs() < 1e-15);
        let flat = Tensor2::filled(4, 1, 7.0);
        assert!(matches!(r2_total(&flat, &flat), Err(Error::Numeric(_))));
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[1.0, 2.0, 3.0], 0.5).unwrap(), 2.0);
        assert_eq!(quantile(&[3.0, 1.0], 0.5).unwrap(), 2.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 1.0).unwrap(), 4.0);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&[1.0], 1.5).is_err());
    }

    #[test]
    fn pca_finds_the_dominant_direction() {
        // points spread along (1, 1)/sqrt(2) with tiny orthogonal jitter
        let mut rng = Rng::seed_from(3);
        let mut data = Vec::new();
        for _ in 0..400 {
            let s = rng.normal() * 3.0;
            let e = rng.normal() * 0.05;
            data.push(s + e);
            data.push(s - e);
        }
        let m = Tensor2::from_vec(400, 2, data).unwrap();
        let p = pca(&m, 1).unwrap();
        let c = (p.components.get(0, 0), p.components.get(1, 0));
        let inv = 1.0 / 2.0_f64.sqrt();
        assert!((c.0 - inv).abs() < 0.01 && (c.1 - inv).abs() < 0.01, "{c:?}");
        assert!(p.explained_variance[0] > 8.0);
        let proj = p.project(&m).unwrap();
        assert_eq!(proj.cols(), 1);
    }
}
