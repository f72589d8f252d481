//! Score functions, their covariance matrix, the finite-grid centering term
//! and the chi-square distribution.
//!
//! All three scores are spherical: `J(u) = J(‖u‖)·u/‖u‖`, with `J(0) = 0`.
//! The radial parts are `1` (sign), `r` (Spearman) and `√(χ²_d quantile(r))`
//! (van der Waerden).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::BallGrid;
use crate::transport::Coupling;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Sign,
    Spearman,
    Vdw,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 3] = [ScoreKind::Sign, ScoreKind::Spearman, ScoreKind::Vdw];

    /// `σ² = ∫₀¹ J(r)² dr` of the radial part under a uniform radius.
    pub fn radial_second_moment(self, d: usize) -> f64 {
        match self {
            ScoreKind::Sign => 1.0,
            ScoreKind::Spearman => 1.0 / 3.0,
            ScoreKind::Vdw => d as f64,
        }
    }

    /// Radial factor at radius `r ∈ [0, 1)`; zero at the origin.
    pub fn radial(self, r: f64, d: usize) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        match self {
            ScoreKind::Sign => 1.0,
            ScoreKind::Spearman => r,
            ScoreKind::Vdw => chisq_quantile(d as f64, r).map_or(f64::NAN, f64::sqrt),
        }
    }

    /// `J(u)` for an arbitrary point of the open unit ball.
    pub fn eval(self, u: &[f64]) -> Vec<f64> {
        let r = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if r == 0.0 {
            return vec![0.0; u.len()];
        }
        let f = self.radial(r, u.len()) / r;
        u.iter().map(|x| f * x).collect()
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScoreKind::Sign => "sign",
            ScoreKind::Spearman => "spearman",
            ScoreKind::Vdw => "vdw",
        })
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sign" => Ok(ScoreKind::Sign),
            "spearman" => Ok(ScoreKind::Spearman),
            "vdw" | "van-der-waerden" => Ok(ScoreKind::Vdw),
            other => Err(Error::invalid(format!("unknown score '{other}'"))),
        }
    }
}

/// The pair of scores `(J₁, J₂)` applied at times `t` and `t − i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreSpec {
    pub j1: ScoreKind,
    pub j2: ScoreKind,
}

impl ScoreSpec {
    pub fn new(kind: ScoreKind) -> Self {
        Self { j1: kind, j2: kind }
    }

    pub fn pair(j1: ScoreKind, j2: ScoreKind) -> Self {
        Self { j1, j2 }
    }
}

impl From<ScoreKind> for ScoreSpec {
    fn from(k: ScoreKind) -> Self {
        Self::new(k)
    }
}

/// Radial factors indexed by rank `0..=n_R`, so that a gridpoint of rank
/// `j` and sign `s` scores `table[j]·s`.
#[derive(Debug, Clone)]
pub struct RadialTable {
    values: Vec<f64>,
}

impl RadialTable {
    pub fn new(kind: ScoreKind, n_r: usize, d: usize) -> Self {
        let step = 1.0 / (n_r + 1) as f64;
        let values = (0..=n_r).map(|j| kind.radial(j as f64 * step, d)).collect();
        Self { values }
    }

    pub fn get(&self, rank: usize) -> f64 {
        self.values[rank]
    }
}

/// `J(F_t)` for every `t`, as an `n × d` row-major array.
pub fn coupling_scores(kind: ScoreKind, c: &Coupling) -> Vec<f64> {
    let table = RadialTable::new(kind, c.n_r, c.d());
    let d = c.d();
    let mut out = Vec::with_capacity(c.n() * d);
    for t in 0..c.n() {
        let f = table.get(c.ranks[t]);
        out.extend(c.signs.row(t).iter().map(|s| f * s));
    }
    out
}

/// Scores every gridpoint, row-major `n × d`.
pub fn grid_scores(kind: ScoreKind, grid: &BallGrid) -> Vec<f64> {
    let table = RadialTable::new(kind, grid.n_r(), grid.d);
    let mut out = Vec::with_capacity(grid.n() * grid.d);
    for k in 0..grid.n() {
        let p = grid.point(k);
        let r = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if grid.is_origin(k) || r == 0.0 {
            out.extend(std::iter::repeat_n(0.0, grid.d));
        } else {
            let f = table.get(grid.ranks[k]) / r;
            out.extend(p.iter().map(|x| f * x));
        }
    }
    out
}

/// Scores an F-value that must lie on one of the grid radii `j/(n_R+1)`.
pub fn eval_score(kind: ScoreKind, f_value: &[f64], n_r: usize) -> Result<Vec<f64>> {
    let r = f_value.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scaled = r * (n_r + 1) as f64;
    let j = scaled.round();
    if (scaled - j).abs() > 1e-9 * (n_r + 1) as f64 || j > n_r as f64 {
        return Err(Error::invalid(format!("norm {r} is not a grid radius j/{} with j <= {n_r}", n_r + 1)));
    }
    if j == 0.0 {
        return Ok(vec![0.0; f_value.len()]);
    }
    let radial = kind.radial(j / (n_r + 1) as f64, f_value.len());
    Ok(f_value.iter().map(|x| radial * x / r).collect())
}

/// `C = (σ₁²σ₂²/d²)·I_{d²}`.
pub fn score_covariance(spec: ScoreSpec, d: usize) -> DMatrix<f64> {
    let c = spec.j1.radial_second_moment(d) * spec.j2.radial_second_moment(d) / (d * d) as f64;
    DMatrix::identity(d * d, d * d) * c
}

/// One draw from the spherical uniform on the unit ball: a uniform
/// direction times an independent uniform radius.
pub fn sample_spherical_uniform<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            let r: f64 = rng.random();
            return v.into_iter().map(|x| r * x / n).collect();
        }
    }
}

/// Monte Carlo estimate of `C = E[vec(J₁(U₁)J₂(U₂)′) vec(·)′]` for
/// independent spherical uniforms. Also returns the sample mean of `J₁(U₁)`.
pub fn monte_carlo_covariance<R: Rng + ?Sized>(
    spec: ScoreSpec,
    d: usize,
    draws: usize,
    rng: &mut R,
) -> (DMatrix<f64>, Vec<f64>) {
    let dd = d * d;
    let mut acc = DMatrix::<f64>::zeros(dd, dd);
    let mut mean = vec![0.0; d];
    let mut v = vec![0.0; dd];
    for _ in 0..draws {
        let a = spec.j1.eval(&sample_spherical_uniform(d, rng));
        let b = spec.j2.eval(&sample_spherical_uniform(d, rng));
        for (m, x) in mean.iter_mut().zip(&a) {
            *m += x;
        }
        // vec(a b′)[r + d·c] = a_r b_c
        for c in 0..d {
            for r in 0..d {
                v[r + d * c] = a[r] * b[c];
            }
        }
        for j in 0..dd {
            for i in 0..dd {
                acc[(i, j)] += v[i] * v[j];
            }
        }
    }
    let k = draws as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    (acc / k, mean)
}

/// The centering `m = E[J₁(F_t)J₂(F_{t−i})′]` under uniform sampling of
/// distinct gridpoints without replacement.
///
/// Computed in `O(n)` from `[(ΣJ₁)(ΣJ₂)′ − ΣJ₁J₂′]/(n(n−1))`, which equals
/// the average of `J₁(g_k)J₂(g_l)′` over ordered pairs `k ≠ l` of gridpoint
/// indices (origin copies included, where all scores vanish). On an
/// antipodally symmetric grid the first term cancels and `m` reduces to
/// `−ΣJ₁J₂′/(n(n−1))`, which is `O(1/n)` but not zero.
pub fn centering(spec: ScoreSpec, grid: &BallGrid) -> DMatrix<f64> {
    let d = grid.d;
    let n = grid.n();
    let a = grid_scores(spec.j1, grid);
    let b = if spec.j1 == spec.j2 { a.clone() } else { grid_scores(spec.j2, grid) };
    let mut sa = vec![0.0; d];
    let mut sb = vec![0.0; d];
    let mut diag = DMatrix::<f64>::zeros(d, d);
    for k in 0..n {
        let (x, y) = (&a[k * d..(k + 1) * d], &b[k * d..(k + 1) * d]);
        for r in 0..d {
            sa[r] += x[r];
            sb[r] += y[r];
            for c in 0..d {
                diag[(r, c)] += x[r] * y[c];
            }
        }
    }
    let mut m = DMatrix::from_fn(d, d, |r, c| sa[r] * sb[c]) - diag;
    m /= (n * (n - 1)) as f64;
    m
}

// ---------------------------------------------------------------------------
// Chi-square distribution
// ---------------------------------------------------------------------------

/// `ln Γ(x)` for `x > 0` (Lanczos, g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection keeps the series in its accurate range.
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-16 {
            break;
        }
    }
    sum * (-x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    // Modified Lentz evaluation of the continued fraction for Q(a, x).
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma `Q(a, x) = 1 − P(a, x)`.
pub fn reg_upper_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

pub fn chisq_cdf(df: f64, x: f64) -> f64 {
    reg_lower_gamma(df / 2.0, x / 2.0)
}

/// Upper tail `P(χ²_df > x)`, evaluated directly for accuracy near zero.
pub fn chisq_sf(df: f64, x: f64) -> f64 {
    reg_upper_gamma(df / 2.0, x / 2.0)
}

pub fn chisq_pdf(df: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return if df == 2.0 && x == 0.0 { 0.5 } else { 0.0 };
    }
    let k = df / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// Standard normal quantile (Acklam's rational approximation), used for
/// the Wilson–Hilferty starting value.
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -39.696_830_286_653_76,
        220.946_098_424_520_5,
        -275.928_510_446_968_7,
        138.357_751_867_269,
        -30.664_798_066_147_16,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -54.476_098_798_224_06,
        161.585_836_858_040_9,
        -155.698_979_859_886_6,
        66.801_311_887_719_72,
        -13.280_681_552_885_72,
    ];
    const C: [f64; 6] = [
        -0.007_784_894_002_430_293,
        -0.322_396_458_041_136_5,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [0.007_784_695_709_041_462, 0.322_467_129_070_039_8, 2.445_134_137_142_996, 3.754_408_661_907_416];
    let pl = 0.024_25;
    if p < pl {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - pl {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

/// Inverse of the χ²_df distribution function.
///
/// Newton iteration from the Wilson–Hilferty approximation, kept inside a
/// shrinking bracket so that a poor step falls back to bisection. Above the
/// median the upper tail is matched instead of the CDF to keep relative
/// accuracy when `p` is close to one. Converges to `1e-10` absolute.
pub fn chisq_quantile(df: f64, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("probability {p} is outside (0, 1)")));
    }
    if !(df > 0.0) {
        return Err(Error::invalid(format!("degrees of freedom {df} must be positive")));
    }
    let upper = p > 0.5;
    let target = if upper { 1.0 - p } else { p };
    // g(x) is increasing in x in both branches.
    let g = |x: f64| if upper { target - chisq_sf(df, x) } else { chisq_cdf(df, x) - target };

    let z = normal_quantile(p);
    let h = 2.0 / (9.0 * df);
    let mut x = df * (1.0 - h + z * h.sqrt()).powi(3);
    if !(x > 0.0) || !x.is_finite() {
        x = df.max(1e-3) * p;
    }
    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    for _ in 0..200 {
        let gx = g(x);
        if gx > 0.0 {
            hi = hi.min(x);
        } else {
            lo = lo.max(x);
        }
        let dens = chisq_pdf(df, x);
        let mut next = if dens > 0.0 { x - gx / dens } else { f64::NAN };
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * x.max(1.0) };
        }
        if (next - x).abs() < 1e-10 * x.max(1.0) {
            return Ok(next);
        }
        x = next;
    }
    Err(Error::Numerical(format!("chi-square quantile did not converge (df={df}, p={p})")))
}
