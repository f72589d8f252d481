//! Innovation samplers, additive-outlier contamination and the Monte Carlo
//! study engine.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::gaussian::gaussian_test_order;
use crate::grid::{factorize, make_grid, make_sphere_grid, BallGrid};
use crate::order_id::{identify_order, IdentifyOptions, OrderTest};
use crate::rank_tests::{prepare_specified, Calibration};
use crate::rng;
use crate::scores::{ScoreKind, ScoreSpec};
use crate::series::SeriesMatrix;
use crate::var::{simulate_var, VarModel, DEFAULT_BURN_IN};

type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InnovationModel {
    /// `N(0, Σ)`; identity when `sigma` is absent.
    Gaussian {
        #[serde(default)]
        sigma: Option<Matrix>,
    },
    /// Spherical Student `t_ν`.
    Student {
        nu: f64,
    },
    GaussianMixture {
        weights: Vec<f64>,
        means: Vec<Vec<f64>>,
        covariances: Vec<Matrix>,
    },
    /// Azzalini–Capitanio skew-t with location `xi`, scale `sigma`, shape
    /// `alpha` and `nu` degrees of freedom.
    SkewT {
        xi: Vec<f64>,
        sigma: Matrix,
        alpha: Vec<f64>,
        nu: f64,
    },
}

impl InnovationModel {
    pub fn standard_gaussian() -> Self {
        Self::Gaussian { sigma: None }
    }

    /// Trimodal bivariate mixture `3/8 N(μ₁,Σ₁) + 3/8 N(μ₂,Σ₂) + 1/4 N(μ₃,Σ₃)`.
    pub fn bivariate_mixture() -> Self {
        Self::GaussianMixture {
            weights: vec![0.375, 0.375, 0.25],
            means: vec![vec![-5.0, 0.0], vec![5.0, 0.0], vec![0.0, 0.0]],
            covariances: vec![
                vec![vec![7.0, 5.0], vec![5.0, 5.0]],
                vec![vec![7.0, -6.0], vec![-6.0, 6.0]],
                vec![vec![4.0, 0.0], vec![0.0, 3.0]],
            ],
        }
    }

    /// Bivariate skew-t₃ with `Σ = (7,4;4,5)` and `α = (5,2)`.
    pub fn bivariate_skew_t3() -> Self {
        Self::SkewT { xi: vec![0.0, 0.0], sigma: vec![vec![7.0, 4.0], vec![4.0, 5.0]], alpha: vec![5.0, 2.0], nu: 3.0 }
    }

    /// Analytic covariance, when finite.
    pub fn covariance(&self, d: usize) -> Result<Option<DMatrix<f64>>> {
        let sampler = Sampler::new(self, d)?;
        Ok(match (self, &sampler) {
            (Self::Gaussian { .. }, Sampler::Gaussian(l)) => Some(l * l.transpose()),
            (Self::Student { nu }, _) if *nu > 2.0 => Some(DMatrix::identity(d, d) * (nu / (nu - 2.0))),
            (Self::GaussianMixture { weights, .. }, Sampler::Mixture { means, chols, .. }) => {
                let mut mean = DVector::zeros(d);
                let mut second = DMatrix::zeros(d, d);
                for ((w, m), l) in weights.iter().zip(means).zip(chols) {
                    mean += m * *w;
                    second += (l * l.transpose() + m * m.transpose()) * *w;
                }
                Some(second - &mean * mean.transpose())
            }
            _ => None,
        })
    }
}

fn to_matrix(m: &Matrix, d: usize, what: &str) -> Result<DMatrix<f64>> {
    if m.len() != d || m.iter().any(|r| r.len() != d) {
        return Err(Error::invalid(format!("{what} must be {d}×{d}")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| m[i][j]))
}

/// Cholesky factor of `(Σ+Σ′)/2`.
fn spd_factor(m: &Matrix, d: usize, what: &str) -> Result<DMatrix<f64>> {
    let s = to_matrix(m, d, what)?;
    let s = (&s + s.transpose()) * 0.5;
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{what} has non-finite entries")));
    }
    s.cholesky().map(|c| c.l()).ok_or_else(|| Error::invalid(format!("{what} is not positive definite")))
}

fn vector(v: &[f64], d: usize, what: &str) -> Result<DVector<f64>> {
    if v.len() != d || v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{what} must hold {d} finite values")));
    }
    Ok(DVector::from_column_slice(v))
}

fn check_nu(nu: f64) -> Result<ChiSquared<f64>> {
    if !(nu > 0.0 && nu.is_finite()) {
        return Err(Error::invalid(format!("degrees of freedom must be positive, got {nu}")));
    }
    ChiSquared::new(nu).map_err(|e| Error::invalid(e.to_string()))
}

/// Validated model with precomputed factors.
enum Sampler {
    Gaussian(DMatrix<f64>),
    Student { chi: ChiSquared<f64>, nu: f64 },
    Mixture { index: WeightedIndex<f64>, means: Vec<DVector<f64>>, chols: Vec<DMatrix<f64>> },
    SkewT { xi: DVector<f64>, w: DVector<f64>, delta: DVector<f64>, l1: DMatrix<f64>, chi: ChiSquared<f64>, nu: f64 },
}

impl Sampler {
    fn new(model: &InnovationModel, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        Ok(match model {
            InnovationModel::Gaussian { sigma: None } => Self::Gaussian(DMatrix::identity(d, d)),
            InnovationModel::Gaussian { sigma: Some(s) } => Self::Gaussian(spd_factor(s, d, "Σ")?),
            InnovationModel::Student { nu } => Self::Student { chi: check_nu(*nu)?, nu: *nu },
            InnovationModel::GaussianMixture { weights, means, covariances } => {
                let k = weights.len();
                if k == 0 || means.len() != k || covariances.len() != k {
                    return Err(Error::invalid("mixture needs matching weights, means and covariances"));
                }
                if weights.iter().any(|w| !(*w > 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("mixture weights must be positive and sum to one"));
                }
                Self::Mixture {
                    index: WeightedIndex::new(weights).map_err(|e| Error::invalid(e.to_string()))?,
                    means: means.iter().map(|m| vector(m, d, "mixture mean")).collect::<Result<_>>()?,
                    chols: covariances.iter().map(|c| spd_factor(c, d, "mixture covariance")).collect::<Result<_>>()?,
                }
            }
            InnovationModel::SkewT { xi, sigma, alpha, nu } => {
                let l = spd_factor(sigma, d, "skew-t Σ")?;
                let s = &l * l.transpose();
                let w = s.diagonal().map(f64::sqrt);
                let omega = DMatrix::from_fn(d, d, |i, j| s[(i, j)] / (w[i] * w[j]));
                let alpha = vector(alpha, d, "skew-t α")?;
                let oa = &omega * &alpha;
                let delta = &oa / (1.0 + alpha.dot(&oa)).sqrt();
                let resid = &omega - &delta * delta.transpose();
                let l1 = resid
                    .cholesky()
                    .map(|c| c.l())
                    .ok_or_else(|| Error::invalid("skew-t Ω̄ − δδ′ is not positive definite"))?;
                Self::SkewT { xi: vector(xi, d, "skew-t ξ")?, w, delta, l1, chi: check_nu(*nu)?, nu: *nu }
            }
        })
    }

    fn gaussian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(d, |_, _| StandardNormal.sample(rng))
    }

    fn draw<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> DVector<f64> {
        match self {
            Self::Gaussian(l) => l * Self::gaussian(d, rng),
            Self::Student { chi, nu } => {
                let z = Self::gaussian(d, rng);
                let v: f64 = chi.sample(rng);
                z / (v / nu).sqrt()
            }
            Self::Mixture { index, means, chols } => {
                let k = index.sample(rng);
                &means[k] + &chols[k] * Self::gaussian(d, rng)
            }
            Self::SkewT { xi, w, delta, l1, chi, nu } => {
                let u0: f64 = StandardNormal.sample(rng);
                let y = delta * u0.abs() + l1 * Self::gaussian(d, rng);
                let v: f64 = chi.sample(rng);
                let x = y / (v / nu).sqrt();
                xi + w.component_mul(&x)
            }
        }
    }
}

/// `n` i.i.d. draws from `model` using the given stream.
pub fn sample_innovations_with<R: Rng + ?Sized>(
    model: &InnovationModel,
    n: usize,
    d: usize,
    rng: &mut R,
) -> Result<SeriesMatrix> {
    let s = Sampler::new(model, d)?;
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        data.extend(s.draw(d, rng).iter());
    }
    SeriesMatrix::from_row_major(n, d, data)
}

pub fn sample_innovations(model: &InnovationModel, n: usize, d: usize, seed: u64) -> Result<SeriesMatrix> {
    sample_innovations_with(model, n, d, &mut rng::stream(seed, rng::tag::INNOVATIONS, 0))
}

fn default_true() -> bool {
    true
}

/// Additive outliers `s` at equally spaced times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub fraction: f64,
    pub size: Vec<f64>,
    #[serde(default = "default_true")]
    pub demean_after: bool,
}

impl ContaminationSpec {
    /// `⌊nf⌋` indices with spacing `⌊1/f⌋`, starting at `⌊1/(2f)⌋`.
    pub fn positions(&self, n: usize) -> Result<Vec<usize>> {
        let f = self.fraction;
        if !(f >= 0.0 && f < 0.5) {
            return Err(Error::invalid(format!("contamination fraction must lie in [0, 0.5), got {f}")));
        }
        let count = (n as f64 * f).floor() as usize;
        if count == 0 {
            return Ok(Vec::new());
        }
        let spacing = (1.0 / f).floor() as usize;
        let start = (1.0 / (2.0 * f)).floor() as usize;
        Ok((0..count).map(|k| start + k * spacing).filter(|&t| t < n).collect())
    }
}

pub fn contaminate(x: &SeriesMatrix, spec: &ContaminationSpec) -> Result<SeriesMatrix> {
    if spec.size.len() != x.d() {
        return Err(Error::dims(format!("outlier size has {} entries, data has {} columns", spec.size.len(), x.d())));
    }
    let mut out = x.clone();
    for t in spec.positions(x.n())? {
        for (v, s) in out.row_mut(t).iter_mut().zip(&spec.size) {
            *v += s;
        }
    }
    Ok(if spec.demean_after { out.demeaned() } else { out })
}

/// A test column of a study table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StudyTest {
    Gaussian,
    Rank {
        score: ScoreKind,
        /// Permutational critical values.
        corrected: bool,
        /// Sign test on the sphere grid with `n_S = n`.
        sphere: bool,
    },
}

impl fmt::Display for StudyTest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian => f.write_str("gaussian"),
            Self::Rank { score, corrected, sphere } => {
                write!(f, "{score}")?;
                if *sphere {
                    f.write_str("-sphere")?;
                }
                if *corrected {
                    f.write_str("-corrected")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for StudyTest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "gaussian" {
            return Ok(Self::Gaussian);
        }
        let (rest, corrected) = match s.strip_suffix("-corrected") {
            Some(r) => (r, true),
            None => (s, false),
        };
        let (rest, sphere) = match rest.strip_suffix("-sphere") {
            Some(r) => (r, true),
            None => (rest, false),
        };
        let score: ScoreKind = rest.parse().map_err(|_| Error::invalid(format!("unknown test '{s}'")))?;
        if sphere && score != ScoreKind::Sign {
            return Err(Error::invalid(format!("only the sign test runs on the sphere grid, got '{s}'")));
        }
        Ok(Self::Rank { score, corrected, sphere })
    }
}

impl Serialize for StudyTest {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StudyTest {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyDesign {
    /// Tests of white noise against VAR(alt_order); rejection frequencies.
    WhiteNoise,
    /// Sequential order identification; under/correct/over counts.
    Identification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpConfig {
    pub d: usize,
    pub p: usize,
    /// `(vec A_1′, …, vec A_p′)′`, column-major blocks.
    pub theta: Vec<f64>,
    /// Multipliers applied to every coefficient matrix.
    pub ell: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOverride {
    pub n_r: usize,
    pub n_s: usize,
    pub n_0: usize,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_alt_order() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub design: StudyDesign,
    pub dgp: DgpConfig,
    pub innovations: InnovationModel,
    #[serde(default)]
    pub contamination: Option<ContaminationSpec>,
    pub tests: Vec<StudyTest>,
    pub n: usize,
    /// Replications per cell (`N`).
    pub replications: usize,
    /// Permutations for corrected tests (`M`).
    #[serde(default)]
    pub permutations: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub grid: Option<GridOverride>,
    /// Alternative order of white-noise tests.
    #[serde(default = "default_alt_order")]
    pub alt_order: usize,
    /// Cap for identification; `⌊n^{1/3}⌋` when absent.
    #[serde(default)]
    pub max_order: Option<usize>,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let dg = &self.dgp;
        if dg.theta.len() != dg.d * dg.d * dg.p {
            return Err(Error::invalid(format!(
                "dgp.theta needs d²p = {} entries, got {}",
                dg.d * dg.d * dg.p,
                dg.theta.len()
            )));
        }
        if dg.ell.is_empty() || self.tests.is_empty() || self.replications == 0 {
            return Err(Error::invalid("study needs at least one ℓ value, one test and one replication"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        let corrected = self.tests.iter().any(|t| matches!(t, StudyTest::Rank { corrected: true, .. }));
        if corrected && self.permutations == 0 {
            return Err(Error::invalid("corrected tests need permutations > 0"));
        }
        if self.alt_order == 0 {
            return Err(Error::invalid("alt_order must be at least 1"));
        }
        Sampler::new(&self.innovations, dg.d)?;
        for &l in &dg.ell {
            self.model(l)?.check_stationary()?;
        }
        self.regular_grid()?;
        Ok(())
    }

    fn model(&self, ell: f64) -> Result<VarModel> {
        let dg = &self.dgp;
        if dg.p == 0 || ell == 0.0 {
            return VarModel::white_noise(dg.d, 1);
        }
        VarModel::new(dg.d, dg.p, dg.p, dg.theta.iter().map(|v| v * ell).collect())
    }

    fn regular_grid(&self) -> Result<BallGrid> {
        let d = self.dgp.d;
        let user = self.grid.as_ref().map(|g| (g.n_r, g.n_s, g.n_0));
        make_grid(factorize(self.n, d, user)?, d, self.seed)
    }

    fn true_order(&self, ell: f64) -> usize {
        if ell == 0.0 {
            0
        } else {
            self.dgp.p
        }
    }

    /// Simulated (and possibly contaminated) series for one replication,
    /// plus a seed for that replication's permutations.
    fn replicate(&self, ell_index: usize, rep: usize, model: &VarModel) -> Result<(SeriesMatrix, u64)> {
        let index = (ell_index * self.replications + rep) as u64;
        let mut r = rng::stream(self.seed, rng::tag::REPLICATION, index);
        let eps = sample_innovations_with(&self.innovations, self.n + DEFAULT_BURN_IN, self.dgp.d, &mut r)?;
        let mut x = simulate_var(model, &eps, DEFAULT_BURN_IN)?;
        if let Some(c) = &self.contamination {
            x = contaminate(&x, c)?;
        }
        Ok((x, r.random()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionCell {
    pub test: StudyTest,
    pub ell: f64,
    pub replications: usize,
    /// Replications where the test failed numerically.
    pub failures: usize,
    pub rejections: usize,
    /// Rejection frequency among successful replications.
    pub rate: f64,
    /// Binomial standard error of `rate`.
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentificationCell {
    pub test: StudyTest,
    pub ell: f64,
    pub true_order: usize,
    pub replications: usize,
    pub failures: usize,
    pub under: usize,
    pub correct: usize,
    pub over: usize,
    pub correct_rate: f64,
    pub correct_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub config: StudyConfig,
    pub rejection: Vec<RejectionCell>,
    pub identification: Vec<IdentificationCell>,
}

fn binomial_se(p: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

struct Grids {
    regular: BallGrid,
    sphere: Option<BallGrid>,
}

impl Grids {
    fn get(&self, sphere: bool) -> &BallGrid {
        if sphere {
            self.sphere.as_ref().expect("sphere grid built when requested")
        } else {
            &self.regular
        }
    }
}

/// One replication of the white-noise design: decision per test, `None`
/// on failure. Rank tests sharing score and grid share one coupling.
fn white_noise_decisions(cfg: &StudyConfig, grids: &Grids, x: &SeriesMatrix, perm_seed: u64) -> Vec<Option<bool>> {
    let d = cfg.dgp.d;
    let mut out = vec![None; cfg.tests.len()];
    for (i, t) in cfg.tests.iter().enumerate() {
        if out[i].is_some() {
            continue;
        }
        match *t {
            StudyTest::Gaussian => {
                out[i] = gaussian_test_order(x, 0, cfg.alt_order, cfg.alpha).ok().map(|o| o.reject);
            }
            StudyTest::Rank { score, sphere, .. } => {
                let null = VarModel::white_noise(d, cfg.alt_order).expect("valid white noise");
                let Ok(prepared) = prepare_specified(x, &null, ScoreSpec::new(score), grids.get(sphere)) else {
                    continue;
                };
                for (j, u) in cfg.tests.iter().enumerate().skip(i) {
                    if let StudyTest::Rank { score: s2, sphere: g2, corrected } = *u {
                        if s2 == score && g2 == sphere {
                            let cal = if corrected {
                                Calibration::Permutation { m: cfg.permutations, seed: perm_seed }
                            } else {
                                Calibration::Asymptotic
                            };
                            out[j] = prepared.outcome(cfg.alpha, cal).ok().map(|o| o.reject);
                        }
                    }
                }
            }
        }
    }
    out
}

fn identification_orders(cfg: &StudyConfig, grids: &Grids, x: &SeriesMatrix, perm_seed: u64) -> Vec<Option<usize>> {
    cfg.tests
        .iter()
        .map(|t| {
            let (test, grid, perms) = match *t {
                StudyTest::Gaussian => (OrderTest::Gaussian, None, None),
                StudyTest::Rank { score, corrected, sphere } => (
                    OrderTest::Rank { score: ScoreSpec::new(score) },
                    Some(grids.get(sphere)),
                    corrected.then_some(cfg.permutations),
                ),
            };
            let opts =
                IdentifyOptions { alpha: cfg.alpha, max_order: cfg.max_order, permutations: perms, seed: perm_seed };
            identify_order(x, test, grid, opts).ok().map(|tr| tr.selected_order)
        })
        .collect()
}

/// Runs every (ℓ, replication) cell in parallel. The report depends only
/// on the configuration, not on the worker count.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport> {
    cfg.validate()?;
    let needs_sphere = cfg.tests.iter().any(|t| matches!(t, StudyTest::Rank { sphere: true, .. }));
    let grids = Grids {
        regular: cfg.regular_grid()?,
        sphere: if needs_sphere { Some(make_sphere_grid(cfg.n, cfg.dgp.d, cfg.seed)?) } else { None },
    };
    let mut report = StudyReport { config: cfg.clone(), rejection: Vec::new(), identification: Vec::new() };
    for (li, &ell) in cfg.dgp.ell.iter().enumerate() {
        let model = cfg.model(ell)?;
        match cfg.design {
            StudyDesign::WhiteNoise => {
                let rows: Vec<Vec<Option<bool>>> = (0..cfg.replications)
                    .into_par_iter()
                    .map(|rep| match cfg.replicate(li, rep, &model) {
                        Ok((x, s)) => white_noise_decisions(cfg, &grids, &x, s),
                        Err(_) => vec![None; cfg.tests.len()],
                    })
                    .collect();
                for (k, &test) in cfg.tests.iter().enumerate() {
                    let ok: Vec<bool> = rows.iter().filter_map(|r| r[k]).collect();
                    let rejections = ok.iter().filter(|&&b| b).count();
                    let rate = if ok.is_empty() { f64::NAN } else { rejections as f64 / ok.len() as f64 };
                    report.rejection.push(RejectionCell {
                        test,
                        ell,
                        replications: cfg.replications,
                        failures: cfg.replications - ok.len(),
                        rejections,
                        rate,
                        se: binomial_se(rate, ok.len()),
                    });
                }
            }
            StudyDesign::Identification => {
                let rows: Vec<Vec<Option<usize>>> = (0..cfg.replications)
                    .into_par_iter()
                    .map(|rep| match cfg.replicate(li, rep, &model) {
                        Ok((x, s)) => identification_orders(cfg, &grids, &x, s),
                        Err(_) => vec![None; cfg.tests.len()],
                    })
                    .collect();
                let truth = cfg.true_order(ell);
                for (k, &test) in cfg.tests.iter().enumerate() {
                    let ok: Vec<usize> = rows.iter().filter_map(|r| r[k]).collect();
                    let under = ok.iter().filter(|&&p| p < truth).count();
                    let correct = ok.iter().filter(|&&p| p == truth).count();
                    let rate = if ok.is_empty() { f64::NAN } else { correct as f64 / ok.len() as f64 };
                    report.identification.push(IdentificationCell {
                        test,
                        ell,
                        true_order: truth,
                        replications: cfg.replications,
                        failures: cfg.replications - ok.len(),
                        under,
                        correct,
                        over: ok.len() - under - correct,
                        correct_rate: rate,
                        correct_se: binomial_se(rate, ok.len()),
                    });
                }
            }
        }
    }
    Ok(report)
}

fn fmt_rate(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        format!("{v:.3}")
    }
}

impl StudyReport {
    /// Rows are tests. White-noise designs have one rejection-rate column
    /// per ℓ; identification designs have under/correct/over counts per ℓ.
    pub fn to_csv(&self) -> String {
        let ells = &self.config.dgp.ell;
        let mut out = String::from("test");
        match self.config.design {
            StudyDesign::WhiteNoise => {
                for l in ells {
                    out.push_str(&format!(",ell={l}"));
                }
                out.push('\n');
                for t in &self.config.tests {
                    out.push_str(&t.to_string());
                    for l in ells {
                        let cell = self.rejection.iter().find(|c| c.test == *t && c.ell == *l);
                        out.push(',');
                        out.push_str(&cell.map_or("NA".into(), |c| fmt_rate(c.rate)));
                    }
                    out.push('\n');
                }
            }
            StudyDesign::Identification => {
                for l in ells {
                    out.push_str(&format!(",under(ell={l}),correct(ell={l}),over(ell={l})"));
                }
                out.push('\n');
                for t in &self.config.tests {
                    out.push_str(&t.to_string());
                    for l in ells {
                        match self.identification.iter().find(|c| c.test == *t && c.ell == *l) {
                            Some(c) => out.push_str(&format!(",{},{},{}", c.under, c.correct, c.over)),
                            None => out.push_str(",NA,NA,NA"),
                        }
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn rejection_rate(&self, test: StudyTest, ell: f64) -> Option<f64> {
        self.rejection.iter().find(|c| c.test == test && c.ell == ell).map(|c| c.rate)
    }
}
