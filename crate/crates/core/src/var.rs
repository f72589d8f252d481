//! VAR models, simulation, residual filtering, least-squares fitting and the
//! operator matrices that turn lagged cross-covariances into central
//! sequences.
//!
//! Coefficients are stacked as `θ = (vec A₁, …, vec A_{p1})` with column-major
//! `vec`. A model of null order `p0` has zero blocks `p0+1..p1`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::SeriesMatrix;

/// Default number of discarded start-up observations in simulations.
pub const DEFAULT_BURN_IN: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarModel {
    pub d: usize,
    pub p0: usize,
    pub p1: usize,
    pub theta: Vec<f64>,
}

impl VarModel {
    pub fn new(d: usize, p0: usize, p1: usize, theta: Vec<f64>) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if p1 == 0 || p0 > p1 {
            return Err(Error::invalid(format!("orders must satisfy 0 <= p0 <= p1, p1 >= 1 (got p0={p0}, p1={p1})")));
        }
        let dd = d * d;
        if theta.len() != p1 * dd {
            return Err(Error::dims(format!("theta has length {}, expected p1*d^2 = {}", theta.len(), p1 * dd)));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta has non-finite entries"));
        }
        if theta[p0 * dd..].iter().any(|&v| v != 0.0) {
            return Err(Error::invalid(format!("coefficient blocks beyond p0 = {p0} must be zero")));
        }
        Ok(Self { d, p0, p1, theta })
    }

    /// The zero model of dimension `d` embedded in order `p1`.
    pub fn white_noise(d: usize, p1: usize) -> Result<Self> {
        Self::new(d, 0, p1, vec![0.0; p1 * d * d])
    }

    /// Builds a model from `A₁, …, A_{p0}`, padded with zero blocks to `p1`.
    pub fn from_coefficients(coefs: &[DMatrix<f64>], p1: usize) -> Result<Self> {
        let d = coefs.first().map_or(0, |a| a.nrows());
        if d == 0 {
            return Err(Error::invalid("at least one coefficient matrix is required"));
        }
        let mut theta = Vec::with_capacity(p1.max(coefs.len()) * d * d);
        for a in coefs {
            if a.nrows() != d || a.ncols() != d {
                return Err(Error::dims("coefficient matrices must all be d x d"));
            }
            theta.extend_from_slice(a.as_slice());
        }
        theta.resize(p1 * d * d, 0.0);
        Self::new(d, coefs.len(), p1, theta)
    }

    /// `A_i` for `i ∈ 1..=p1`.
    pub fn coefficient(&self, i: usize) -> DMatrix<f64> {
        let dd = self.d * self.d;
        DMatrix::from_column_slice(self.d, self.d, &self.theta[(i - 1) * dd..i * dd])
    }

    /// The non-trivial coefficients `A₁, …, A_{p0}`.
    pub fn coefficients(&self) -> Vec<DMatrix<f64>> {
        (1..=self.p0).map(|i| self.coefficient(i)).collect()
    }

    /// Same coefficients viewed inside a different alternative order.
    pub fn with_p1(&self, p1: usize) -> Result<Self> {
        let dd = self.d * self.d;
        let mut theta = self.theta[..self.p0 * dd].to_vec();
        theta.resize(p1 * dd, 0.0);
        Self::new(self.d, self.p0, p1, theta)
    }

    /// Spectral radius of the companion matrix of `A(z)`.
    pub fn spectral_radius(&self) -> f64 {
        let (d, p) = (self.d, self.p0);
        if p == 0 {
            return 0.0;
        }
        let mut c = DMatrix::zeros(d * p, d * p);
        for i in 1..=p {
            c.view_mut((0, (i - 1) * d), (d, d)).copy_from(&self.coefficient(i));
        }
        for k in 0..d * (p - 1) {
            c[(d + k, k)] = 1.0;
        }
        c.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn check_stationary(&self) -> Result<()> {
        let rho = self.spectral_radius();
        if rho < 1.0 && rho.is_finite() {
            Ok(())
        } else {
            Err(Error::NonStationary(rho))
        }
    }

    /// The model of the transformed series `W X_t`: `A_i ↦ W A_i W⁻¹`.
    pub fn conjugated(&self, w: &DMatrix<f64>) -> Result<Self> {
        if self.p0 == 0 {
            return Ok(self.clone());
        }
        let w_inv = w.clone().try_inverse().ok_or_else(|| Error::Singular("transformation matrix".into()))?;
        let coefs: Vec<DMatrix<f64>> = self.coefficients().iter().map(|a| w * a * &w_inv).collect();
        Self::from_coefficients(&coefs, self.p1)
    }

    /// Draws a model whose companion spectral radius is at most `max_radius`
    /// by rescaling Gaussian coefficients.
    pub fn random_stationary<R: Rng + ?Sized>(
        d: usize,
        p0: usize,
        p1: usize,
        max_radius: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let dd = d * d;
        let mut theta: Vec<f64> =
            (0..p1 * dd).map(|k| if k < p0 * dd { StandardNormal.sample(rng) } else { 0.0 }).collect();
        let scale: f64 = 0.5 / (d as f64 * p0.max(1) as f64);
        theta.iter_mut().for_each(|v| *v *= scale);
        let mut model = Self::new(d, p0, p1, theta)?;
        // For a companion matrix, scaling A_i by c^i scales the roots by c.
        let rho = model.spectral_radius();
        if rho > max_radius {
            let c = max_radius / rho * 0.999;
            for i in 1..=p0 {
                let f = c.powi(i as i32);
                model.theta[(i - 1) * dd..i * dd].iter_mut().for_each(|v| *v *= f);
            }
        }
        Ok(model)
    }
}

fn check_dims(x: &SeriesMatrix, model: &VarModel) -> Result<()> {
    if x.d() != model.d {
        return Err(Error::dims(format!("series has dimension {}, model has {}", x.d(), model.d)));
    }
    Ok(())
}

/// `X_t = Σ A_i X_{t−i} + ε_t` from zero initial values, discarding the
/// first `burn_in` rows of the output.
pub fn simulate_var(model: &VarModel, innovations: &SeriesMatrix, burn_in: usize) -> Result<SeriesMatrix> {
    check_dims(innovations, model)?;
    model.check_stationary()?;
    let (n, d) = (innovations.n(), model.d);
    if burn_in >= n {
        return Err(Error::invalid(format!("burn-in {burn_in} leaves no observations out of {n}")));
    }
    let coefs = model.coefficients();
    let mut x = innovations.clone();
    for t in 0..n {
        for (i, a) in coefs.iter().enumerate() {
            let Some(s) = t.checked_sub(i + 1) else { break };
            let lagged = x.row(s).to_vec();
            let row = x.row_mut(t);
            for r in 0..d {
                row[r] += (0..d).map(|c| a[(r, c)] * lagged[c]).sum::<f64>();
            }
        }
    }
    Ok(x.skip_rows(burn_in))
}

/// `Z_t = X_t − Σ_{i≤p0} A_i X_{t−i}` with zero initial values.
pub fn residuals(x: &SeriesMatrix, model: &VarModel) -> Result<SeriesMatrix> {
    check_dims(x, model)?;
    let d = model.d;
    let coefs = model.coefficients();
    let mut z = x.clone();
    for t in 0..x.n() {
        for (i, a) in coefs.iter().enumerate() {
            let Some(s) = t.checked_sub(i + 1) else { break };
            let lagged = x.row(s);
            let row = z.row_mut(t);
            for r in 0..d {
                row[r] -= (0..d).map(|c| a[(r, c)] * lagged[c]).sum::<f64>();
            }
        }
    }
    Ok(z)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Subtract the sample mean before regressing.
    pub demean: bool,
    /// Round `θ̂` to the lattice of pitch `n^{-1/2}/100`.
    pub discretize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { demean: true, discretize: true }
    }
}

/// Least-squares regression of `X_t` on `(X_{t−1}, …, X_{t−p0})` without
/// intercept, returned as a model of null order `p0` inside order `p1`.
pub fn fit_constrained_ls(x: &SeriesMatrix, p0: usize, p1: usize, opts: FitOptions) -> Result<VarModel> {
    let (n, d) = (x.n(), x.d());
    x.check_finite()?;
    if p0 == 0 {
        return VarModel::white_noise(d, p1);
    }
    if p0 > p1 {
        return Err(Error::invalid(format!("p0 = {p0} exceeds p1 = {p1}")));
    }
    if n <= d * p0 + 10 {
        return Err(Error::invalid(format!("n = {n} is too small to fit order {p0} in dimension {d}")));
    }
    let x = if opts.demean { x.demeaned() } else { x.clone() };
    let k = d * p0;
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut cross = DMatrix::<f64>::zeros(d, k);
    let mut reg = vec![0.0; k];
    for t in p0..n {
        for i in 0..p0 {
            reg[i * d..(i + 1) * d].copy_from_slice(x.row(t - i - 1));
        }
        let y = x.row(t);
        for a in 0..k {
            for b in 0..=a {
                gram[(a, b)] += reg[a] * reg[b];
            }
            for r in 0..d {
                cross[(r, a)] += y[r] * reg[a];
            }
        }
    }
    for a in 0..k {
        for b in 0..a {
            gram[(b, a)] = gram[(a, b)];
        }
    }
    let chol = gram.cholesky().ok_or_else(|| Error::Singular("regressor Gram matrix in least-squares fit".into()))?;
    // B = cross · gram⁻¹, solved as gram · B' = cross'.
    let b = chol.solve(&cross.transpose()).transpose();
    let mut coefs: Vec<DMatrix<f64>> = (0..p0).map(|i| b.columns(i * d, d).into_owned()).collect();
    if opts.discretize {
        let pitch = 1.0 / ((n as f64).sqrt() * 100.0);
        for a in &mut coefs {
            a.apply(|v| *v = (*v / pitch).round() * pitch);
        }
    }
    VarModel::from_coefficients(&coefs, p1)
}

/// Green matrices `G_0 = I`, `G_u = Σ_{i≤p0} A_i G_{u−i}` for `u = 0..=horizon`.
pub fn green_matrices(model: &VarModel, horizon: usize) -> Vec<DMatrix<f64>> {
    let d = model.d;
    let coefs = model.coefficients();
    let mut g: Vec<DMatrix<f64>> = Vec::with_capacity(horizon + 1);
    g.push(DMatrix::identity(d, d));
    for u in 1..=horizon {
        let mut next = DMatrix::zeros(d, d);
        for (i, a) in coefs.iter().enumerate().take(u) {
            next += a * &g[u - i - 1];
        }
        g.push(next);
    }
    g
}

/// Choice of fundamental system for the difference operator `D(L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FundamentalSystem {
    /// Identity initial window: the Casorati matrix is `I`, so `P = I`.
    #[default]
    IdentityWindow,
    /// Shifted Green matrices `H_u` of `D(L)`: solution `m` is
    /// `ψ_t = H_{t − (p1 − 2p0 + m)}`. Its Casorati matrix is a block
    /// Hankel array of `H_1, …, H_{2p0−1}`, so `P ≠ I` in general.
    ShiftedGreen,
}

/// The matrices `M`, `P`, `Q` and `T = M′P′Q′`.
///
/// `Q` and `T` are stored up to the lag horizon `L` beyond which the
/// fundamental solutions have decayed below `1e-12`; the omitted block rows
/// of `Q` (columns of `T`) are zero.
#[derive(Debug, Clone)]
pub struct OperatorMatrices {
    pub d: usize,
    pub p0: usize,
    pub p1: usize,
    pub n: usize,
    pub horizon: usize,
    pub greens: Vec<DMatrix<f64>>,
    /// `D₁, …, D_{p0}` of `D(L) = I + Σ D_i L^i`.
    pub d_coefs: Vec<DMatrix<f64>>,
    pub m: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub t: DMatrix<f64>,
}

const PSI_TOL: f64 = 1e-12;

fn kron_identity(a: &DMatrix<f64>, d: usize) -> DMatrix<f64> {
    a.kronecker(&DMatrix::identity(d, d))
}

pub fn build_operator_matrices(model: &VarModel, n: usize) -> Result<OperatorMatrices> {
    build_operator_matrices_with(model, n, FundamentalSystem::IdentityWindow)
}

pub fn build_operator_matrices_with(model: &VarModel, n: usize, system: FundamentalSystem) -> Result<OperatorMatrices> {
    let (d, p0, p1) = (model.d, model.p0, model.p1);
    if n <= p1 + 1 {
        return Err(Error::invalid(format!("n = {n} must exceed p1 + 1 = {}", p1 + 1)));
    }
    model.check_stationary()?;
    let dd = d * d;
    let greens = green_matrices(model, p1.max(p0));

    // M = G′_{p1,p1}: block (r, c) = G′_{r−c} ⊗ I.
    let mut m = DMatrix::zeros(dd * p1, dd * p1);
    for r in 0..p1 {
        for c in 0..=r {
            m.view_mut((r * dd, c * dd), (dd, dd)).copy_from(&kron_identity(&greens[r - c].transpose(), d));
        }
    }

    // [D′_1; …; D′_{p0}] = −G_{Toeplitz}⁻¹ [G_1; …; G_{p0}], unit lower
    // triangular, so forward substitution suffices.
    let mut d_t: Vec<DMatrix<f64>> = Vec::with_capacity(p0);
    for a in 1..=p0 {
        let mut acc = -greens[a].clone();
        for (k, dk) in d_t.iter().enumerate() {
            acc -= &greens[a - k - 1] * dk;
        }
        d_t.push(acc);
    }
    let d_coefs: Vec<DMatrix<f64>> = d_t.iter().map(|x| x.transpose()).collect();

    // Fundamental solutions ψ_t^{(j)}, t = p1−p0+1..=n−1, each d×d; the
    // recursion is ψ_t = −Σ_k D_k ψ_{t−k}.
    let start = p1 - p0 + 1;
    let mut psi: Vec<Vec<DMatrix<f64>>> = Vec::new(); // psi[t - start][j]
    let mut horizon = p1;
    if p0 > 0 {
        let h_needed = 2 * p0;
        let mut h: Vec<DMatrix<f64>> = vec![DMatrix::identity(d, d)];
        for u in 1..=h_needed {
            let mut next = DMatrix::zeros(d, d);
            for (k, dk) in d_coefs.iter().enumerate().take(u) {
                next -= dk * &h[u - k - 1];
            }
            h.push(next);
        }
        for a in 1..=p0 {
            let row: Vec<DMatrix<f64>> = (1..=p0)
                .map(|j| match system {
                    FundamentalSystem::IdentityWindow => {
                        if a == j {
                            DMatrix::identity(d, d)
                        } else {
                            DMatrix::zeros(d, d)
                        }
                    }
                    FundamentalSystem::ShiftedGreen => h[a + p0 - j].clone(),
                })
                .collect();
            psi.push(row);
        }
        let mut small_run = 0;
        for t in (p1 + 1)..n {
            let mut row = Vec::with_capacity(p0);
            for j in 0..p0 {
                let mut next = DMatrix::zeros(d, d);
                for (k, dk) in d_coefs.iter().enumerate() {
                    next -= dk * &psi[t - k - 1 - start][j];
                }
                row.push(next);
            }
            let tiny = row.iter().all(|x| x.amax() < PSI_TOL);
            psi.push(row);
            if tiny {
                small_run += 1;
                if small_run >= p0 {
                    horizon = t - p0;
                    break;
                }
            } else {
                small_run = 0;
                horizon = t;
            }
        }
        // Trailing near-zero rows that did not complete a run are kept as is.
        psi.truncate(horizon + 1 - start);
    }

    // P = diag(I, Ψ_{p1}⁻¹).
    let mut p = DMatrix::identity(dd * p1, dd * p1);
    let mut casorati = DMatrix::zeros(dd * p0, dd * p0);
    for a in 0..p0 {
        for j in 0..p0 {
            casorati.view_mut((a * dd, j * dd), (dd, dd)).copy_from(&kron_identity(&psi[a][j], d));
        }
    }
    if p0 > 0 {
        let inv = casorati
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Singular("Casorati matrix of the fundamental system".into()))?;
        p.view_mut((dd * (p1 - p0), dd * (p1 - p0)), (dd * p0, dd * p0)).copy_from(&inv);
    }

    // Q = diag(I_{d²(p1−p0)}, Ψ_{horizon}).
    let mut q = DMatrix::zeros(dd * horizon, dd * p1);
    for i in 0..(p1 - p0) {
        q.view_mut((i * dd, i * dd), (dd, dd)).fill_with_identity();
    }
    for (r, row) in psi.iter().enumerate() {
        let block_row = start - 1 + r;
        for (j, x) in row.iter().enumerate() {
            q.view_mut((block_row * dd, (p1 - p0 + j) * dd), (dd, dd)).copy_from(&kron_identity(x, d));
        }
    }

    let t = m.transpose() * p.transpose() * q.transpose();
    Ok(OperatorMatrices { d, p0, p1, n, horizon, greens, d_coefs, m, p, q, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn noise(n: usize, d: usize, seed: u64) -> SeriesMatrix {
        let mut r = rng::stream(seed, rng::tag::INNOVATIONS, 0);
        let data = (0..n * d).map(|_| StandardNormal.sample(&mut r)).collect();
        SeriesMatrix::from_row_major(n, d, data).unwrap()
    }

    fn scalar_model(a: &[f64], p1: usize) -> VarModel {
        let coefs: Vec<DMatrix<f64>> = a.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        VarModel::from_coefficients(&coefs, p1).unwrap()
    }

    /// The transfer matrix written out directly: block `(j, i)` is
    /// `G_{i−j} ⊗ I_d` for `i ≥ j`.
    fn direct_transfer(model: &VarModel, horizon: usize) -> DMatrix<f64> {
        let (d, p1) = (model.d, model.p1);
        let dd = d * d;
        let g = green_matrices(model, horizon);
        let mut t = DMatrix::zeros(dd * p1, dd * horizon);
        for j in 1..=p1 {
            for i in j..=horizon {
                t.view_mut(((j - 1) * dd, (i - 1) * dd), (dd, dd)).copy_from(&kron_identity(&g[i - j], d));
            }
        }
        t
    }

    fn padded(t: &DMatrix<f64>, cols: usize) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(t.nrows(), cols);
        let c = t.ncols().min(cols);
        out.columns_mut(0, c).copy_from(&t.columns(0, c));
        out
    }

    #[test]
    fn model_validation() {
        assert!(VarModel::new(2, 1, 2, vec![0.1; 8]).is_err());
        assert!(VarModel::new(2, 1, 2, vec![0.1, 0.0, 0.0, 0.1, 0.0, 0.0, 0.0, 0.0]).is_ok());
        assert!(VarModel::new(2, 2, 1, vec![0.0; 4]).is_err());
        assert!(VarModel::new(2, 0, 1, vec![0.0; 3]).is_err());
        let m = VarModel::new(2, 1, 1, vec![0.05, -0.01, 0.02, 0.05]).unwrap();
        assert_eq!(m.coefficient(1)[(1, 0)], -0.01);
        assert_eq!(m.coefficient(1)[(0, 1)], 0.02);
    }

    #[test]
    fn stationarity() {
        assert!(scalar_model(&[0.5], 1).check_stationary().is_ok());
        assert!(matches!(scalar_model(&[1.2], 1).check_stationary(), Err(Error::NonStationary(_))));
        // x_t = 1.5 x_{t−1} − 0.56 x_{t−2} has roots 0.7 and 0.8.
        assert_abs_diff_eq!(scalar_model(&[1.5, -0.56], 2).spectral_radius(), 0.8, epsilon = 1e-10);
    }

    #[test]
    fn simulation_examples() {
        let e = SeriesMatrix::from_rows(&[vec![1.0], vec![0.0], vec![0.0]]).unwrap();
        let x = simulate_var(&scalar_model(&[0.5], 1), &e, 0).unwrap();
        assert_eq!(x.as_slice(), &[1.0, 0.5, 0.25]);
        let e = noise(50, 2, 1);
        let x = simulate_var(&VarModel::white_noise(2, 1).unwrap(), &e, 0).unwrap();
        assert_eq!(x, e);
        assert_eq!(simulate_var(&VarModel::white_noise(2, 1).unwrap(), &e, 20).unwrap().n(), 30);
        assert!(simulate_var(&scalar_model(&[1.1], 1), &noise(10, 1, 0), 0).is_err());
    }

    #[test]
    fn residual_examples() {
        let x = SeriesMatrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let z = residuals(&x, &scalar_model(&[0.5], 1)).unwrap();
        assert_eq!(z.as_slice(), &[1.0, 0.5, 0.5]);
        let model = VarModel::from_coefficients(
            &[
                DMatrix::from_row_slice(2, 2, &[0.3, 0.12, -0.06, 0.24]),
                DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.05, -0.1]),
            ],
            3,
        )
        .unwrap();
        let e = noise(100, 2, 5);
        let x = simulate_var(&model, &e, 0).unwrap();
        let z = residuals(&x, &model).unwrap();
        for (a, b) in z.as_slice().iter().zip(e.as_slice()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert_eq!(residuals(&x, &VarModel::white_noise(2, 1).unwrap()).unwrap(), x);
    }

    #[test]
    fn lag_one_autocovariance_matches_yule_walker() {
        let a = DMatrix::from_column_slice(2, 2, &[0.05, -0.01, 0.02, 0.05]);
        let model = VarModel::from_coefficients(&[a.clone()], 1).unwrap();
        // Γ0 = A Γ0 A′ + I by fixed-point iteration; Γ1 = A Γ0.
        let mut g0 = DMatrix::<f64>::identity(2, 2);
        for _ in 0..200 {
            g0 = &a * &g0 * a.transpose() + DMatrix::identity(2, 2);
        }
        let g1 = &a * &g0;
        let x = simulate_var(&model, &noise(200_200, 2, 3), DEFAULT_BURN_IN).unwrap();
        let n = x.n();
        let mut s = DMatrix::<f64>::zeros(2, 2);
        for t in 1..n {
            for r in 0..2 {
                for c in 0..2 {
                    s[(r, c)] += x.row(t)[r] * x.row(t - 1)[c];
                }
            }
        }
        s /= (n - 1) as f64;
        for k in 0..4 {
            assert_abs_diff_eq!(s[k], g1[k], epsilon = 0.01);
        }
    }

    #[test]
    fn noise_free_data_recovered_exactly() {
        let a = DMatrix::from_column_slice(2, 2, &[0.30, -0.06, 0.12, 0.24]);
        let model = VarModel::from_coefficients(&[a.clone()], 2).unwrap();
        let mut e = SeriesMatrix::zeros(40, 2);
        e.row_mut(0).copy_from_slice(&[1.0, -2.0]);
        e.row_mut(1).copy_from_slice(&[0.5, 0.7]);
        let x = simulate_var(&model, &e, 0).unwrap();
        let x = x.skip_rows(1);
        let opts = FitOptions { demean: false, discretize: false };
        let fit = fit_constrained_ls(&x, 1, 2, opts).unwrap();
        for (u, v) in fit.theta.iter().zip(&model.theta) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-10);
        }
        assert_eq!(fit.p1, 2);
        assert!(fit.theta[4..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fit_errors_and_trivial_order() {
        let x = noise(15, 2, 0);
        assert!(fit_constrained_ls(&x, 3, 3, FitOptions::default()).is_err());
        let w = fit_constrained_ls(&x, 0, 2, FitOptions::default()).unwrap();
        assert!(w.theta.iter().all(|&v| v == 0.0));
        let flat = SeriesMatrix::from_row_major(30, 1, vec![1.0; 30]).unwrap();
        assert!(matches!(fit_constrained_ls(&flat, 1, 1, FitOptions::default()), Err(Error::Singular(_))));
    }

    #[test]
    fn white_noise_fit_is_root_n_small() {
        let n = 400;
        let mut norms: Vec<f64> = (0..41)
            .map(|s| {
                let f = fit_constrained_ls(&noise(n, 2, 100 + s), 1, 1, FitOptions::default()).unwrap();
                f.theta.iter().map(|v| v * v).sum::<f64>().sqrt()
            })
            .collect();
        norms.sort_by(f64::total_cmp);
        assert!(norms[20] < 3.0 * 2.0 / (n as f64).sqrt());
    }

    #[test]
    fn var1_fit_accuracy() {
        let a = DMatrix::from_column_slice(2, 2, &[0.30, -0.06, 0.12, 0.24]);
        let model = VarModel::from_coefficients(&[a.clone()], 1).unwrap();
        let good = (0..100)
            .filter(|&s| {
                let x = simulate_var(&model, &noise(1000, 2, 500 + s), DEFAULT_BURN_IN).unwrap();
                let f = fit_constrained_ls(&x, 1, 1, FitOptions::default()).unwrap();
                (f.coefficient(1) - &a).norm() < 0.1
            })
            .count();
        assert!(good >= 95, "only {good}/100 fits within 0.1");
    }

    #[test]
    fn lattice_rounding() {
        let x = noise(400, 2, 9);
        let f = fit_constrained_ls(&x, 1, 1, FitOptions::default()).unwrap();
        let pitch = 1.0 / (20.0 * 100.0);
        for v in &f.theta {
            assert_abs_diff_eq!((v / pitch).round() * pitch, *v, epsilon = 1e-15);
        }
    }

    #[test]
    fn green_examples() {
        let g = green_matrices(&scalar_model(&[0.5], 1), 3);
        let g: Vec<f64> = g.iter().map(|m| m[(0, 0)]).collect();
        assert_eq!(g, vec![1.0, 0.5, 0.25, 0.125]);
        let g = green_matrices(&scalar_model(&[0.5, 0.24], 2), 3);
        let g: Vec<f64> = g.iter().map(|m| m[(0, 0)]).collect();
        for (u, v) in g.iter().zip([1.0, 0.5, 0.49, 0.365]) {
            assert_abs_diff_eq!(*u, v, epsilon = 1e-15);
        }
        let g = green_matrices(&VarModel::white_noise(2, 2).unwrap(), 3);
        assert!(g[1..].iter().all(|m| m.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn white_noise_operators() {
        let ops = build_operator_matrices(&VarModel::white_noise(2, 3).unwrap(), 50).unwrap();
        assert_eq!(ops.m, DMatrix::identity(12, 12));
        assert_eq!(ops.p, DMatrix::identity(12, 12));
        assert_eq!(ops.horizon, 3);
        assert_eq!(ops.q, DMatrix::identity(12, 12));
        assert_eq!(ops.t, DMatrix::identity(12, 12));
    }

    #[test]
    fn scalar_ar1_operators() {
        let ops = build_operator_matrices(&scalar_model(&[0.5], 1), 200).unwrap();
        assert_eq!(ops.m[(0, 0)], 1.0);
        assert_abs_diff_eq!(ops.d_coefs[0][(0, 0)], -0.5);
        for t in 0..10 {
            assert_abs_diff_eq!(ops.q[(t, 0)], 0.5f64.powi(t as i32), epsilon = 1e-15);
        }
        assert!(ops.horizon < 50);
        assert!(ops.q[(ops.horizon - 1, 0)] > 0.0);
    }

    #[test]
    fn d_coefficients_are_negated_transposes() {
        let mut r = rng::stream(4, rng::tag::MONTE_CARLO, 0);
        let model = VarModel::random_stationary(3, 3, 4, 0.9, &mut r).unwrap();
        let ops = build_operator_matrices(&model, 300).unwrap();
        for (k, dk) in ops.d_coefs.iter().enumerate() {
            let a = model.coefficient(k + 1);
            assert!((dk + a.transpose()).amax() < 1e-13);
        }
    }

    #[test]
    fn transfer_matrix_equals_direct_expansion() {
        for seed in 0..20u64 {
            let mut r = rng::stream(seed, rng::tag::MONTE_CARLO, 1);
            let d = 1 + (seed as usize % 3);
            let p0 = seed as usize % 4;
            let p1 = p0 + 1 + (seed as usize % 2);
            let model = VarModel::random_stationary(d, p0, p1, 0.9, &mut r).unwrap();
            let n = 400;
            for system in [FundamentalSystem::IdentityWindow, FundamentalSystem::ShiftedGreen] {
                let ops = build_operator_matrices_with(&model, n, system).unwrap();
                let exact = direct_transfer(&model, n - 1);
                let t = padded(&ops.t, exact.ncols());
                let rel = (&t - &exact).norm() / exact.norm();
                assert!(rel < 1e-10, "seed {seed} {system:?}: relative error {rel}");
                assert_eq!(ops.t.clone().rank(1e-9), d * d * p1);
            }
        }
    }

    #[test]
    fn shifted_green_system_has_nontrivial_p() {
        let model = scalar_model(&[0.5, 0.2], 3);
        let ops = build_operator_matrices_with(&model, 100, FundamentalSystem::ShiftedGreen).unwrap();
        assert!((&ops.p - DMatrix::identity(3, 3)).amax() > 1e-3);
    }

    #[test]
    fn operator_preconditions() {
        assert!(build_operator_matrices(&scalar_model(&[0.5], 2), 3).is_err());
        assert!(build_operator_matrices(&scalar_model(&[1.5], 2), 30).is_err());
    }

    proptest! {
        #[test]
        fn green_convolution_identity(seed in any::<u64>(), d in 1usize..4, p0 in 0usize..4) {
            let mut r = rng::stream(seed, rng::tag::MONTE_CARLO, 2);
            let model = VarModel::random_stationary(d, p0, p0 + 1, 0.95, &mut r).unwrap();
            let g = green_matrices(&model, 60);
            let coefs = model.coefficients();
            for u in 1..=60 {
                let mut acc = g[u].clone();
                for (i, a) in coefs.iter().enumerate().take(u) {
                    acc -= a * &g[u - i - 1];
                }
                prop_assert!(acc.amax() < 1e-12);
            }
        }
    }
}
