//! Pseudo-Gaussian benchmark tests `S_N` and `W_N`.
//!
//! Residuals are demeaned and whitened by `Σ̂^{−1/2}` before the
//! cross-covariances are formed; the null model is conjugated accordingly so
//! that the operator matrices describe the whitened series. Both statistics
//! weight every lag by the same fourth-moment block `L`, which makes
//! `S_N(0)` and `W_N(0)` identical.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::rank_tests::{
    block_diag_apply, cross_covariances, lambda_matrix, projected_form, ridge_spd_inverse, Calibration, PreparedTest,
    QuadraticForm, TestKind, TestMeta, TestOutcome,
};
use crate::series::SeriesMatrix;
use crate::var::{build_operator_matrices, fit_constrained_ls, residuals, FitOptions, VarModel};

/// Residual cross-covariances `Γ_{i,N} = (n−i)⁻¹ Σ Z_t Z′_{t−i}` of the
/// whitened residuals together with
/// `L = (n−1)⁻¹ Σ vec(Z_t Z′_{t−1}) vec(Z_t Z′_{t−1})′`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCrossCovStack {
    pub n: usize,
    pub d: usize,
    pub blocks: Vec<DMatrix<f64>>,
    pub l: DMatrix<f64>,
}

/// Symmetric inverse square root of a positive definite matrix.
pub fn inverse_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = s.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    if eig.eigenvalues.iter().any(|&v| !(v > 1e-12 * scale)) {
        return Err(Error::Singular("empirical innovation covariance".into()));
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| 1.0 / v.sqrt()));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// Demeaned residuals and the whitening matrix `W = Σ̂^{−1/2}`.
fn whiten(z: &SeriesMatrix) -> Result<(SeriesMatrix, DMatrix<f64>)> {
    let z = z.demeaned();
    let w = inverse_sqrt(&z.second_moment())?;
    Ok((z.transformed(&w)?, w))
}

fn fourth_moment(z: &SeriesMatrix) -> DMatrix<f64> {
    let (n, d) = (z.n(), z.d());
    let mut l = DMatrix::zeros(d * d, d * d);
    let mut v = vec![0.0; d * d];
    for t in 1..n {
        let (a, b) = (z.row(t), z.row(t - 1));
        for c in 0..d {
            for r in 0..d {
                v[r + d * c] = a[r] * b[c];
            }
        }
        for j in 0..d * d {
            for i in 0..d * d {
                l[(i, j)] += v[i] * v[j];
            }
        }
    }
    l / (n - 1) as f64
}

/// Cross-covariance stack of the whitened residuals of `model`.
pub fn gaussian_cross_cov(x: &SeriesMatrix, model: &VarModel, max_lag: usize) -> Result<GaussianCrossCovStack> {
    let (zw, _) = whiten(&residuals(x, model)?)?;
    let (n, d) = (zw.n(), zw.d());
    if max_lag == 0 || max_lag >= n {
        return Err(Error::invalid(format!("max_lag must lie in 1..={}, got {max_lag}", n - 1)));
    }
    Ok(GaussianCrossCovStack {
        n,
        d,
        blocks: cross_covariances(zw.as_slice(), zw.as_slice(), n, d, max_lag),
        l: fourth_moment(&zw),
    })
}

fn check_level(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("level {alpha} is outside (0, 1)")));
    }
    Ok(())
}

/// `S_N = H′_N (Q′(I⊗L)Q)⁻¹ H_N`.
pub fn prepare_gaussian_specified(x: &SeriesMatrix, theta0: &VarModel) -> Result<PreparedTest> {
    x.check_finite()?;
    let n = x.n();
    let d = x.d();
    let (zw, w) = whiten(&residuals(x, theta0)?)?;
    let ops = build_operator_matrices(&theta0.conjugated(&w)?, n)?;
    let l = fourth_moment(&zw);
    let qlq = ops.q.transpose() * block_diag_apply(&l, &ops.q);
    let winv = ridge_spd_inverse(&qlq, "Q'(I⊗L)Q")?;
    let meta = TestMeta {
        test: TestKind::GaussianSpecified,
        score: None,
        n,
        d,
        p0: theta0.p0,
        p1: theta0.p1,
        lags: ops.horizon,
        calibration: Calibration::Asymptotic,
        theta_hat: None,
    };
    let data = zw.as_slice().to_vec();
    Ok(PreparedTest::new(
        data.clone(),
        data,
        DMatrix::zeros(d, d),
        QuadraticForm { r: ops.q.transpose(), w: winv },
        d * d * theta0.p1,
        meta,
    ))
}

pub fn gaussian_test_specified(x: &SeriesMatrix, theta0: &VarModel, alpha: f64) -> Result<TestOutcome> {
    check_level(alpha)?;
    prepare_gaussian_specified(x, theta0)?.outcome(alpha, Calibration::Asymptotic)
}

/// `W_N` for a VAR(p0) null against VAR(p1), projecting with the blocks of
/// `Λ_N = T(I⊗L)T′`.
pub fn prepare_gaussian_order(x: &SeriesMatrix, p0: usize, p1: usize) -> Result<PreparedTest> {
    if p0 >= p1 {
        return Err(Error::invalid(format!("p0 = {p0} must be smaller than p1 = {p1}")));
    }
    x.check_finite()?;
    if p0 == 0 {
        let mut t = prepare_gaussian_specified(x, &VarModel::white_noise(x.d(), p1)?)?;
        t.meta.test = TestKind::GaussianOrder;
        return Ok(t);
    }
    let n = x.n();
    let d = x.d();
    let theta_hat = fit_constrained_ls(x, p0, p1, FitOptions::default())?;
    let (zw, w) = whiten(&residuals(x, &theta_hat)?)?;
    let ops = build_operator_matrices(&theta_hat.conjugated(&w)?, n)?;
    let l = fourth_moment(&zw);
    let lambda = lambda_matrix(&ops, &l);
    let (r, lstar) = projected_form(&ops, &lambda, &lambda, d * d * p0)?;
    let winv = ridge_spd_inverse(&lstar, "Λ*_II")?;
    let meta = TestMeta {
        test: TestKind::GaussianOrder,
        score: None,
        n,
        d,
        p0,
        p1,
        lags: ops.horizon,
        calibration: Calibration::Asymptotic,
        theta_hat: Some(theta_hat.theta.clone()),
    };
    let data = zw.as_slice().to_vec();
    Ok(PreparedTest::new(
        data.clone(),
        data,
        DMatrix::zeros(d, d),
        QuadraticForm { r, w: winv },
        d * d * (p1 - p0),
        meta,
    ))
}

pub fn gaussian_test_order(x: &SeriesMatrix, p0: usize, p1: usize, alpha: f64) -> Result<TestOutcome> {
    check_level(alpha)?;
    prepare_gaussian_order(x, p0, p1)?.outcome(alpha, Calibration::Asymptotic)
}
