//! Benchmark and application targets together with their heavy-tailed
//! envelopes `g₀`.

use std::fmt::Debug;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, RngCore};
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mixture_t::{cholesky_with_jitter, forward_solve, sample_index, StudentT, TMixture};
use crate::special::{ln_cauchy_pdf, ln_gamma, ln_ndtr, ln_sigmoid, logsumexp, sigmoid, LN_2PI};

/// A density that can be both evaluated and sampled; used as `g₀`.
pub trait Envelope: Send + Sync + Debug {
    fn dim(&self) -> usize;
    fn ln_pdf(&self, x: &DVector<f64>) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64>;
}

impl Envelope for StudentT {
    fn dim(&self) -> usize {
        StudentT::dim(self)
    }
    fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        StudentT::ln_pdf(self, x)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        StudentT::sample(self, rng)
    }
}

impl Envelope for TMixture {
    fn dim(&self) -> usize {
        TMixture::dim(self)
    }
    fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        TMixture::ln_pdf(self, x)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        TMixture::sample(self, rng)
    }
}

/// A target distribution known up to an additive log constant.
pub trait Target: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn ln_density(&self, x: &DVector<f64>) -> f64;
    /// Heavy-tailed envelope `g₀` with `g₀ ≥ β₀ π`.
    fn envelope(&self) -> &dyn Envelope;
    /// Exact independent draw, when the target admits one.
    fn sample_exact(&self, _rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        None
    }
}

/// Multivariate normal with cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct MvNormal {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl MvNormal {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: cov.nrows() });
        }
        let chol = cholesky_with_jitter(&cov)?;
        let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let log_norm = -0.5 * d as f64 * LN_2PI - 0.5 * log_det;
        Ok(Self { mean, chol, log_norm })
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        let d = self.mean.len();
        let diff: Vec<f64> = (0..d).map(|i| x[i] - self.mean[i]).collect();
        let mut y = vec![0.0; d];
        forward_solve(&self.chol, &diff, &mut y);
        self.log_norm - 0.5 * y.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + &self.chol * u
    }
}

/// Finite mixture of normals.
#[derive(Debug, Clone)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<MvNormal>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<MvNormal>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if weights.len() != components.len() || components.is_empty() || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("invalid normal mixture weights".into()));
        }
        Ok(Self { weights, components })
    }
}

impl Envelope for GaussianMixture {
    fn dim(&self) -> usize {
        self.components[0].mean.len()
    }
    fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        let terms: Vec<f64> = self.weights.iter().zip(&self.components).map(|(w, c)| w.ln() + c.ln_pdf(x)).collect();
        logsumexp(&terms)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        let k = sample_index(&self.weights, rng);
        self.components[k].sample(rng)
    }
}

/// Skew-normal `SN_d(μ, Σ, λ)` with density `2 φ_d(x; μ, Σ) Φ(λ'ω⁻¹(x-μ))`,
/// `ω = diag(√Σ_ii)`.
#[derive(Debug, Clone)]
pub struct SkewNormal {
    normal: MvNormal,
    shape_scaled: DVector<f64>,
    omega: DVector<f64>,
    // Cholesky factor of the (d+1)×(d+1) correlation matrix [[1, δ'], [δ, Ω̄]]
    joint_chol: DMatrix<f64>,
}

impl SkewNormal {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, lambda: DVector<f64>) -> Result<Self> {
        let d = mu.len();
        if lambda.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: lambda.len() });
        }
        let omega = DVector::from_fn(d, |i, _| sigma[(i, i)].sqrt());
        let corr = DMatrix::from_fn(d, d, |i, j| sigma[(i, j)] / (omega[i] * omega[j]));
        let shape_scaled = DVector::from_fn(d, |i, _| lambda[i] / omega[i]);
        let quad = lambda.dot(&(&corr * &lambda));
        let delta = (&corr * &lambda) / (1.0 + quad).sqrt();
        let mut joint = DMatrix::identity(d + 1, d + 1);
        for i in 0..d {
            joint[(0, i + 1)] = delta[i];
            joint[(i + 1, 0)] = delta[i];
            for j in 0..d {
                joint[(i + 1, j + 1)] = corr[(i, j)];
            }
        }
        let joint_chol = cholesky_with_jitter(&joint)?;
        let normal = MvNormal::new(mu, sigma)?;
        Ok(Self { normal, shape_scaled, omega, joint_chol })
    }

    pub fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        let arg: f64 = (0..x.len()).map(|i| self.shape_scaled[i] * (x[i] - self.normal.mean[i])).sum();
        std::f64::consts::LN_2 + self.normal.ln_pdf(x) + ln_ndtr(arg)
    }

    /// The normal density sharing location and scale; `f ≤ 2 φ` pointwise.
    pub fn base_normal(&self) -> &MvNormal {
        &self.normal
    }

    /// Hidden-truncation draw: `(x₀, X)` jointly normal, keep `X` if `x₀ > 0`
    /// else `-X`, then rescale.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.omega.len();
        let u = DVector::from_fn(d + 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = &self.joint_chol * u;
        let sign = if v[0] > 0.0 { 1.0 } else { -1.0 };
        DVector::from_fn(d, |i, _| self.normal.mean[i] + self.omega[i] * sign * v[i + 1])
    }
}

/// Parameters of one skew-normal mixture component.
#[derive(Debug, Clone)]
pub struct SkewNormalParams {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub lambda: DVector<f64>,
}

/// Two-component skew-normal mixture benchmark.
#[derive(Debug)]
pub struct MsnTarget {
    d: usize,
    log_weights: [f64; 2],
    weights: [f64; 2],
    components: [SkewNormal; 2],
    g0: GaussianMixture,
}

impl MsnTarget {
    /// General two-component mixture.
    pub fn new(weights: [f64; 2], params: [SkewNormalParams; 2]) -> Result<Self> {
        let d = params[0].mu.len();
        let [p1, p2] = params;
        let c1 = SkewNormal::new(p1.mu.clone(), p1.sigma.clone(), p1.lambda)?;
        let c2 = SkewNormal::new(p2.mu.clone(), p2.sigma.clone(), p2.lambda)?;
        let g0 = GaussianMixture::new(
            weights.to_vec(),
            vec![MvNormal::new(p1.mu, p1.sigma)?, MvNormal::new(p2.mu, p2.sigma)?],
        )?;
        Ok(Self { d, log_weights: [weights[0].ln(), weights[1].ln()], weights, components: [c1, c2], g0 })
    }

    /// Standard parameters: `μ = ∓5·1`, `Σ = 5(-0.5)^{|i-j|}`, `λ = ∓10·1`, weights 0.6/0.4.
    pub fn standard(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        let sigma = DMatrix::from_fn(d, d, |i, j| 5.0 * (-0.5f64).powi((i as i32 - j as i32).abs()));
        let params = [
            SkewNormalParams {
                mu: DVector::from_element(d, -5.0),
                sigma: sigma.clone(),
                lambda: DVector::from_element(d, -10.0),
            },
            SkewNormalParams { mu: DVector::from_element(d, 5.0), sigma, lambda: DVector::from_element(d, 10.0) },
        ];
        Self::new([0.6, 0.4], params)
    }

    pub fn components(&self) -> &[SkewNormal; 2] {
        &self.components
    }

    pub fn weights(&self) -> [f64; 2] {
        self.weights
    }
}

/// Mixture of two skew-normals with the standard benchmark parameters.
pub fn msn_target(d: usize) -> Result<MsnTarget> {
    MsnTarget::standard(d)
}

impl Target for MsnTarget {
    fn name(&self) -> &str {
        "msn"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn ln_density(&self, x: &DVector<f64>) -> f64 {
        let a = self.log_weights[0] + self.components[0].ln_pdf(x);
        let b = self.log_weights[1] + self.components[1].ln_pdf(x);
        logsumexp(&[a, b])
    }
    fn envelope(&self) -> &dyn Envelope {
        &self.g0
    }
    fn sample_exact(&self, rng: &mut dyn RngCore) -> Option<DVector<f64>> {
        let k = sample_index(&self.weights, rng);
        Some(self.components[k].sample(rng))
    }
}

/// Twisted-Gaussian "banana" target `N_d(φ_b(x); 0, diag(100, 1, …, 1))` with
/// `φ_b(x) = (x₁, x₂ + b x₁² - 100 b, x₃, …)`.
#[derive(Debug)]
pub struct BananaTarget {
    d: usize,
    b: f64,
    g0: StudentT,
}

pub const BANANA_B: f64 = 0.03;

impl BananaTarget {
    pub fn new(d: usize, b: f64) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter("banana target needs d >= 2".into()));
        }
        let mut scale = DMatrix::identity(d, d);
        scale[(0, 0)] = 100.0;
        scale[(1, 1)] = 100.0;
        let g0 = StudentT::new(DVector::zeros(d), scale, 5.0)?;
        Ok(Self { d, b, g0 })
    }

    pub fn curvature(&self) -> f64 {
        self.b
    }
}

/// Banana target with curvature `b = 0.03` and a `t₅` envelope.
pub fn banana_target(d: usize) -> Result<BananaTarget> {
    BananaTarget::new(d, BANANA_B)
}

impl Target for BananaTarget {
    fn name(&self) -> &str {
        "banana"
    }
    fn dim(&self) -> usize {
        self.d
    }
    fn ln_density(&self, x: &DVector<f64>) -> f64 {
        let y2 = x[1] + self.b * x[0] * x[0] - 100.0 * self.b;
        let mut q = x[0] * x[0] / 100.0 + y2 * y2;
        for i in 2..self.d {
            q += x[i] * x[i];
        }
        -0.5 * self.d as f64 * LN_2PI - 0.5 * 100f64.ln() - 0.5 * q
    }
    fn envelope(&self) -> &dyn Envelope {
        &self.g0
    }
}

/// Product of independent centred Cauchy densities.
#[derive(Debug, Clone)]
pub struct CauchyProduct {
    scales: Vec<f64>,
}

impl CauchyProduct {
    pub fn new(scales: Vec<f64>) -> Self {
        Self { scales }
    }
}

impl Envelope for CauchyProduct {
    fn dim(&self) -> usize {
        self.scales.len()
    }
    fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        self.scales.iter().enumerate().map(|(i, s)| ln_cauchy_pdf(x[i], *s)).sum()
    }
    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        DVector::from_iterator(
            self.scales.len(),
            self.scales.iter().map(|s| {
                let u: f64 = rng.random();
                s * (std::f64::consts::PI * (u - 0.5)).tan()
            }),
        )
    }
}

/// Bayesian logistic regression with weakly informative Cauchy priors on
/// predictors standardised to mean 0 and standard deviation 0.5.
#[derive(Debug)]
pub struct LogisticTarget {
    design: DMatrix<f64>,
    labels: Vec<f64>,
    means: Vec<f64>,
    sds: Vec<f64>,
    prior: CauchyProduct,
}

pub const INTERCEPT_PRIOR_SCALE: f64 = 10.0;
pub const COEFFICIENT_PRIOR_SCALE: f64 = 2.5;

impl LogisticTarget {
    /// `design` is `n × p` (no intercept column); `labels` must be 0 or 1.
    pub fn new(design: &DMatrix<f64>, labels: &[f64]) -> Result<Self> {
        let (n, p) = design.shape();
        if labels.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: labels.len() });
        }
        if let Some(y) = labels.iter().find(|y| **y != 0.0 && **y != 1.0) {
            return Err(Error::InvalidParameter(format!("label {y} is not binary")));
        }
        if n > 0 && n < p {
            return Err(Error::InsufficientData { needed: p, got: n });
        }
        let mut means = vec![0.0; p];
        let mut sds = vec![0.5; p];
        if n > 0 {
            for j in 0..p {
                let col = design.column(j);
                let mean = col.mean();
                let var =
                    if n > 1 { col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
                if !(var > 0.0) {
                    return Err(Error::InvalidParameter(format!("predictor column {j} is constant")));
                }
                means[j] = mean;
                sds[j] = var.sqrt();
            }
        }
        let design = DMatrix::from_fn(n, p, |i, j| 0.5 * (design[(i, j)] - means[j]) / sds[j]);
        let mut scales = vec![COEFFICIENT_PRIOR_SCALE; p + 1];
        scales[0] = INTERCEPT_PRIOR_SCALE;
        Ok(Self { design, labels: labels.to_vec(), means, sds, prior: CauchyProduct::new(scales) })
    }

    /// Loads a CSV with a header row; the column named `y` holds the labels.
    pub fn from_csv(path: &Path) -> Result<Self> {
        let (design, labels) = read_labelled_csv(path)?;
        Self::new(&design, &labels)
    }

    pub fn n_obs(&self) -> usize {
        self.labels.len()
    }

    /// Column means and standard deviations used for standardisation.
    pub fn standardization(&self) -> (&[f64], &[f64]) {
        (&self.means, &self.sds)
    }

    pub fn ln_likelihood(&self, theta: &DVector<f64>) -> f64 {
        let eta = self.linear_predictor(theta);
        eta.iter().zip(&self.labels).map(|(e, y)| if *y == 1.0 { ln_sigmoid(*e) } else { ln_sigmoid(-*e) }).sum()
    }

    fn linear_predictor(&self, theta: &DVector<f64>) -> DVector<f64> {
        let p = self.design.ncols();
        let beta = theta.rows(1, p);
        let mut eta = &self.design * beta;
        eta.add_scalar_mut(theta[0]);
        eta
    }

    /// Standardises a raw predictor row with the training statistics.
    pub fn standardize_row(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().enumerate().map(|(j, v)| 0.5 * (v - self.means[j]) / self.sds[j]).collect()
    }

    /// Posterior predictive success probability `μ(x) = E[logit⁻¹(β₀ + x'β)]`
    /// averaged over `draws` (rows of θ on the standardised scale).
    pub fn predictive(&self, draws: &[DVector<f64>], raw: &[f64]) -> f64 {
        let x = self.standardize_row(raw);
        let total: f64 = draws
            .iter()
            .map(|th| {
                let eta = th[0] + x.iter().enumerate().map(|(j, v)| th[j + 1] * v).sum::<f64>();
                sigmoid(eta)
            })
            .sum();
        total / draws.len() as f64
    }
}

/// Logistic regression posterior on standardised predictors.
pub fn logistic_target(design: &DMatrix<f64>, labels: &[f64]) -> Result<LogisticTarget> {
    LogisticTarget::new(design, labels)
}

impl Target for LogisticTarget {
    fn name(&self) -> &str {
        "logistic"
    }
    fn dim(&self) -> usize {
        self.design.ncols() + 1
    }
    fn ln_density(&self, x: &DVector<f64>) -> f64 {
        self.ln_likelihood(x) + self.prior.ln_pdf(x)
    }
    fn envelope(&self) -> &dyn Envelope {
        &self.prior
    }
}

/// Lower triangle of a symmetric matrix, row by row: (0,0), (1,0), (1,1), (2,0), …
pub fn vech(m: &DMatrix<f64>) -> DVector<f64> {
    let p = m.nrows();
    let mut out = Vec::with_capacity(p * (p + 1) / 2);
    for i in 0..p {
        for j in 0..=i {
            out.push(m[(i, j)]);
        }
    }
    DVector::from_vec(out)
}

/// Inverse of [`vech`].
pub fn unvech(v: &DVector<f64>, p: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p, p);
    let mut k = 0;
    for i in 0..p {
        for j in 0..=i {
            m[(i, j)] = v[k];
            m[(j, i)] = v[k];
            k += 1;
        }
    }
    m
}

/// Matrix exponential of a symmetric matrix via its eigendecomposition.
pub fn sym_expm(s: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(s.clone());
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::exp));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

/// Matrix logarithm of a symmetric positive definite matrix.
pub fn spd_logm(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::new(s.clone());
    if eig.eigenvalues.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::NotPositiveDefinite);
    }
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::ln));
    Ok(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}

/// `ln |det J|` of `Σ* ↦ exp(Σ*)` in lower-triangle coordinates, given the
/// eigenvalues of `Σ*`.
pub fn log_expm_jacobian(log_eigs: &[f64]) -> f64 {
    let mut total: f64 = log_eigs.iter().sum();
    for i in 0..log_eigs.len() {
        for j in 0..i {
            let (a, b) = (log_eigs[i].max(log_eigs[j]), log_eigs[i].min(log_eigs[j]));
            let h = a - b;
            // (e^a - e^b)/(a - b) = e^b · expm1(h)/h
            let q = if h < 1e-12 { 1.0 + 0.5 * h } else { h.exp_m1() / h };
            total += b + q.ln();
        }
    }
    total
}

/// Inverse-Wishart `IW(S, ν)` pushed through `Σ ↦ vech(log Σ)`.
#[derive(Debug, Clone)]
pub struct LogInverseWishart {
    p: usize,
    df: f64,
    scale: DMatrix<f64>,
    scale_inv_chol: DMatrix<f64>,
    log_norm: f64,
}

fn ln_multigamma(p: usize, a: f64) -> f64 {
    let pf = p as f64;
    pf * (pf - 1.0) / 4.0 * std::f64::consts::PI.ln() + (0..p).map(|j| ln_gamma(a - 0.5 * j as f64)).sum::<f64>()
}

impl LogInverseWishart {
    pub fn new(scale: DMatrix<f64>, df: f64) -> Result<Self> {
        let p = scale.nrows();
        if !(df > p as f64 - 1.0) {
            return Err(Error::InvalidParameter(format!("inverse-Wishart df {df} too small for p={p}")));
        }
        let chol = cholesky_with_jitter(&scale)?;
        let log_det_s = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let scale_inv = scale.clone().try_inverse().ok_or(Error::NotPositiveDefinite)?;
        let scale_inv_chol = cholesky_with_jitter(&scale_inv)?;
        let log_norm = 0.5 * df * log_det_s - 0.5 * df * p as f64 * std::f64::consts::LN_2 - ln_multigamma(p, 0.5 * df);
        Ok(Self { p, df, scale, scale_inv_chol, log_norm })
    }

    /// Inverse-Wishart log-density at `Σ` given its spectral decomposition.
    fn ln_pdf_sigma(&self, log_eigs: &[f64], vecs: &DMatrix<f64>) -> f64 {
        let p = self.p as f64;
        let log_det: f64 = log_eigs.iter().sum();
        let inv = vecs
            * DMatrix::from_diagonal(&DVector::from_iterator(self.p, log_eigs.iter().map(|l| (-l).exp())))
            * vecs.transpose();
        let tr = (inv * &self.scale).trace();
        self.log_norm - 0.5 * (self.df + p + 1.0) * log_det - 0.5 * tr
    }
}

impl Envelope for LogInverseWishart {
    fn dim(&self) -> usize {
        self.p * (self.p + 1) / 2
    }
    fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        let eig = SymmetricEigen::new(unvech(x, self.p));
        let log_eigs: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        self.ln_pdf_sigma(&log_eigs, &eig.eigenvectors) + log_expm_jacobian(&log_eigs)
    }
    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        // Bartlett: Σ⁻¹ = L A A' L' ~ Wishart(S⁻¹, df)
        let p = self.p;
        let mut a = DMatrix::zeros(p, p);
        for i in 0..p {
            let chi = ChiSquared::new(self.df - i as f64).expect("valid chi-square df");
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        let la = &self.scale_inv_chol * a;
        let precision = &la * la.transpose();
        let eig = SymmetricEigen::new(precision);
        // log Σ shares eigenvectors with Σ⁻¹, eigenvalues negated
        let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|v| -v.ln()));
        vech(&(&eig.eigenvectors * d * eig.eigenvectors.transpose()))
    }
}

/// Posterior of a zero-mean normal covariance matrix under the truncated
/// reference prior, parametrised by the lower triangle of `Σ* = log Σ`.
#[derive(Debug)]
pub struct CovarianceTarget {
    p: usize,
    n_obs: usize,
    scatter: DMatrix<f64>,
    eps: f64,
    include_jacobian: bool,
    g0: LogInverseWishart,
}

impl CovarianceTarget {
    /// `data` is `N × p`; `eps` is the minimum eigenvalue gap.
    pub fn new(data: &DMatrix<f64>, eps: f64, include_jacobian: bool) -> Result<Self> {
        let (n, p) = data.shape();
        if n <= p {
            return Err(Error::InsufficientData { needed: p + 1, got: n });
        }
        let mean = data.row_mean();
        let centred = DMatrix::from_fn(n, p, |i, j| data[(i, j)] - mean[j]);
        let scatter = centred.transpose() * &centred;
        if nalgebra::Cholesky::new(scatter.clone()).is_none() {
            return Err(Error::InvalidParameter("data matrix is rank deficient".into()));
        }
        let g0 = LogInverseWishart::new(scatter.clone(), (n - p + 1) as f64)?;
        Ok(Self { p, n_obs: n, scatter, eps, include_jacobian, g0 })
    }

    pub fn from_csv(path: &Path, eps: f64, include_jacobian: bool) -> Result<Self> {
        let (_, rows) = read_numeric_csv(path)?;
        let p = rows.first().map(|r| r.len()).unwrap_or(0);
        let data = DMatrix::from_fn(rows.len(), p, |i, j| rows[i][j]);
        Self::new(&data, eps, include_jacobian)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    /// Centred scatter matrix `S` of the data.
    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }

    /// Maps a parameter vector to the covariance matrix `exp(Σ*)`.
    pub fn sigma_from_params(&self, x: &DVector<f64>) -> DMatrix<f64> {
        sym_expm(&unvech(x, self.p))
    }

    /// Maps a covariance matrix to the parameter vector `vech(log Σ)`.
    pub fn params_from_sigma(&self, sigma: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(vech(&spd_logm(sigma)?))
    }
}

/// Covariance-matrix posterior with the eigenvalue-gap truncation `eps`.
pub fn covariance_target(data: &DMatrix<f64>, eps: f64) -> Result<CovarianceTarget> {
    CovarianceTarget::new(data, eps, true)
}

impl Target for CovarianceTarget {
    fn name(&self) -> &str {
        "covariance"
    }
    fn dim(&self) -> usize {
        self.p * (self.p + 1) / 2
    }
    fn ln_density(&self, x: &DVector<f64>) -> f64 {
        let eig = SymmetricEigen::new(unvech(x, self.p));
        let log_eigs: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let mut r: Vec<f64> = log_eigs.iter().map(|v| v.exp()).collect();
        r.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
        let mut log_gaps = 0.0;
        for i in 0..r.len() {
            for j in (i + 1)..r.len() {
                let gap = r[i] - r[j];
                if !(gap > self.eps) {
                    return f64::NEG_INFINITY;
                }
                log_gaps += gap.ln();
            }
        }
        // the inverse-Wishart kernel carries exp{-tr(Σ⁻¹S)/2} / |Σ|^{N/2+1}
        let mut lp = self.g0.ln_pdf_sigma(&log_eigs, &eig.eigenvectors) - self.g0.log_norm - log_gaps;
        debug_assert_eq!(self.g0.df as usize + self.p + 1, self.n_obs + 2);
        if self.include_jacobian {
            lp += log_expm_jacobian(&log_eigs);
        }
        lp
    }
    fn envelope(&self) -> &dyn Envelope {
        &self.g0
    }
}

/// Reads a headered numeric CSV into (header, rows).
pub fn read_numeric_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>().map_err(|e| Error::InvalidParameter(format!("bad number {s:?}: {e}"))))
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != header.len() {
            return Err(Error::DimensionMismatch { expected: header.len(), got: row.len() });
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Reads a CSV whose `y` column holds binary labels; other columns are predictors.
pub fn read_labelled_csv(path: &Path) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let (header, rows) = read_numeric_csv(path)?;
    let y_col =
        header.iter().position(|h| h == "y").ok_or_else(|| Error::InvalidParameter("no column named \"y\"".into()))?;
    let p = header.len() - 1;
    let labels: Vec<f64> = rows.iter().map(|r| r[y_col]).collect();
    let design = DMatrix::from_fn(rows.len(), p, |i, j| {
        let src = if j < y_col { j } else { j + 1 };
        rows[i][src]
    });
    Ok((design, labels))
}
