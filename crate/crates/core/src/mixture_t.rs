//! Multivariate Student-t densities and finite mixtures of them.
//!
//! Every density is evaluated in log space. A [`StudentT`] caches the lower
//! Cholesky factor of its scale matrix together with the normalising
//! constant, so repeated evaluation costs one triangular solve.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{digamma, ln_gamma, logsumexp};

/// Lower Cholesky factor of a symmetric positive definite matrix.
///
/// If the plain factorisation fails, a single jitter of `1e-10 * trace / d`
/// is added to the diagonal before giving up.
pub(crate) fn cholesky_with_jitter(sigma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = nalgebra::Cholesky::new(sigma.clone()) {
        return Ok(c.unpack());
    }
    let d = sigma.nrows();
    let jitter = 1e-10 * sigma.trace() / d as f64;
    if jitter.is_finite() && jitter > 0.0 {
        let mut s = sigma.clone();
        for i in 0..d {
            s[(i, i)] += jitter;
        }
        if let Some(c) = nalgebra::Cholesky::new(s) {
            log::warn!("scale matrix required a diagonal jitter of {jitter:e}");
            return Ok(c.unpack());
        }
    }
    Err(Error::NotPositiveDefinite)
}

/// Solves `L y = b` for lower-triangular `L`, returning `y`.
pub(crate) fn forward_solve(l: &DMatrix<f64>, b: &[f64], out: &mut [f64]) {
    let d = b.len();
    for i in 0..d {
        let mut s = b[i];
        for j in 0..i {
            s -= l[(i, j)] * out[j];
        }
        out[i] = s / l[(i, i)];
    }
}

fn check_symmetric(sigma: &DMatrix<f64>) -> Result<()> {
    if !sigma.is_square() {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = sigma.amax().max(1.0);
    for i in 0..sigma.nrows() {
        for j in 0..i {
            if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::NotPositiveDefinite);
            }
        }
    }
    Ok(())
}

/// One multivariate t component `t_d(μ, Σ, ν)`.
#[derive(Debug, Clone)]
pub struct StudentT {
    mu: DVector<f64>,
    sigma: DMatrix<f64>,
    nu: f64,
    chol: DMatrix<f64>,
    log_det: f64,
    log_norm: f64,
}

impl StudentT {
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>, nu: f64) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: sigma.nrows() });
        }
        if !(nu > 0.0) || nu.is_nan() {
            return Err(Error::InvalidParameter(format!("degrees of freedom must be positive, got {nu}")));
        }
        if mu.iter().any(|v| !v.is_finite()) || sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite location or scale".into()));
        }
        check_symmetric(&sigma)?;
        let sigma = (&sigma + sigma.transpose()) * 0.5;
        let chol = cholesky_with_jitter(&sigma)?;
        let log_det = 2.0 * chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let df = d as f64;
        let log_norm = ln_gamma(0.5 * (nu + df))
            - ln_gamma(0.5 * nu)
            - 0.5 * df * (nu * std::f64::consts::PI).ln()
            - 0.5 * log_det;
        Ok(Self { mu, sigma, nu, chol, log_det, log_norm })
    }

    /// Standard multivariate t: location 0, identity scale.
    pub fn standard(d: usize, nu: f64) -> Result<Self> {
        Self::new(DVector::zeros(d), DMatrix::identity(d, d), nu)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Lower Cholesky factor of the scale matrix.
    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn log_det_sigma(&self) -> f64 {
        self.log_det
    }

    /// Squared Mahalanobis distance `(x-μ)'Σ⁻¹(x-μ)`.
    pub fn mahalanobis(&self, x: &DVector<f64>) -> f64 {
        let d = self.dim();
        let mut diff = vec![0.0; d];
        for i in 0..d {
            diff[i] = x[i] - self.mu[i];
        }
        let mut y = vec![0.0; d];
        forward_solve(&self.chol, &diff, &mut y);
        y.iter().map(|v| v * v).sum()
    }

    /// Log-density given a precomputed squared Mahalanobis distance.
    pub fn ln_pdf_from_mahalanobis(&self, maha: f64) -> f64 {
        self.ln_pdf_from_mahalanobis_nu(maha, self.nu)
    }

    /// Log-density with an alternative ν, keeping location and scale fixed.
    pub(crate) fn ln_pdf_from_mahalanobis_nu(&self, maha: f64, nu: f64) -> f64 {
        let df = self.dim() as f64;
        self.log_norm_with_nu(nu) - 0.5 * (nu + df) * (maha / nu).ln_1p()
    }

    /// Log normalising constant with an alternative ν.
    pub(crate) fn log_norm_with_nu(&self, nu: f64) -> f64 {
        if nu == self.nu {
            return self.log_norm;
        }
        let df = self.dim() as f64;
        ln_gamma(0.5 * (nu + df))
            - ln_gamma(0.5 * nu)
            - 0.5 * df * (nu * std::f64::consts::PI).ln()
            - 0.5 * self.log_det
    }

    /// Log-density; the caller guarantees `x.len() == self.dim()`.
    pub fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        debug_assert_eq!(x.len(), self.dim());
        self.ln_pdf_from_mahalanobis(self.mahalanobis(x))
    }

    /// Draw via the Gaussian scale mixture `μ + L u / √g`, `g ~ Gamma(ν/2, rate ν/2)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let d = self.dim();
        let gamma = Gamma::new(0.5 * self.nu, 2.0 / self.nu).expect("valid gamma parameters");
        let g: f64 = gamma.sample(rng);
        let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let scale = 1.0 / g.sqrt();
        &self.mu + (&self.chol * u) * scale
    }

    /// Differential entropy of the distribution.
    pub fn entropy(&self) -> f64 {
        let df = self.dim() as f64;
        let nu = self.nu;
        -ln_gamma(0.5 * (nu + df))
            + ln_gamma(0.5 * nu)
            + 0.5 * df * (nu * std::f64::consts::PI).ln()
            + 0.5 * self.log_det
            + 0.5 * (nu + df) * (digamma(0.5 * (nu + df)) - digamma(0.5 * nu))
    }

    /// Marginal law of the coordinates in `idx` (a t with the same ν).
    pub fn marginal(&self, idx: &[usize]) -> Result<StudentT> {
        let mu = DVector::from_iterator(idx.len(), idx.iter().map(|&i| self.mu[i]));
        let sigma = DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.sigma[(idx[r], idx[c])]);
        StudentT::new(mu, sigma, self.nu)
    }
}

/// `log t_d(x; μ, Σ, ν)` with dimension checking.
pub fn t_logpdf(x: &DVector<f64>, p: &StudentT) -> Result<f64> {
    if x.len() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: x.len() });
    }
    Ok(p.ln_pdf(x))
}

/// One draw from `p`.
pub fn t_sample<R: Rng + ?Sized>(p: &StudentT, rng: &mut R) -> DVector<f64> {
    p.sample(rng)
}

/// Weighted mixture of t components sharing one dimension.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "MixtureDoc", into = "MixtureDoc")]
pub struct TMixture {
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    components: Vec<StudentT>,
}

impl TMixture {
    /// Builds a mixture; weights must be non-negative and sum to one within 1e-9
    /// and are renormalised exactly.
    pub fn new(weights: Vec<f64>, components: Vec<StudentT>) -> Result<Self> {
        if components.is_empty() || weights.len() != components.len() {
            return Err(Error::InvalidParameter(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        let d = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: c.dim() });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter("mixture weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!("mixture weights sum to {total}")));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(Self { weights, log_weights, components })
    }

    pub fn single(component: StudentT) -> Self {
        Self { weights: vec![1.0], log_weights: vec![0.0], components: vec![component] }
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[StudentT] {
        &self.components
    }

    /// Writes `ln ω_k + ln ζ_k(x)` for every component into `out`.
    pub fn weighted_component_ln_pdfs(&self, x: &DVector<f64>, out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.components.iter().zip(&self.log_weights).map(|(c, lw)| lw + c.ln_pdf(x)));
    }

    /// `ln g_M(x)`; the caller guarantees matching dimension.
    pub fn ln_pdf(&self, x: &DVector<f64>) -> f64 {
        let mut buf = Vec::with_capacity(self.len());
        self.weighted_component_ln_pdfs(x, &mut buf);
        logsumexp(&buf)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let k = sample_index(&self.weights, rng);
        self.components[k].sample(rng)
    }
}

/// Draws an index from a probability vector by inversion.
pub(crate) fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left a sliver above the last cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// `ln Σ_k ω_k ζ_k(x)`, stable for widely separated components.
pub fn mixture_logpdf(x: &DVector<f64>, m: &TMixture) -> Result<f64> {
    if x.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: x.len() });
    }
    Ok(m.ln_pdf(x))
}

/// Normalises log-weights into probabilities.
pub(crate) fn normalize_log_weights(lw: &[f64]) -> Result<Vec<f64>> {
    let total = logsumexp(lw);
    if !total.is_finite() {
        return Err(Error::DegeneratePoint);
    }
    let mut p: Vec<f64> = lw.iter().map(|v| (v - total).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    Ok(p)
}

/// Posterior component probabilities `ω(k|x) ∝ ω_k ζ_k(x)`.
pub fn responsibilities(x: &DVector<f64>, m: &TMixture) -> Result<Vec<f64>> {
    if x.len() != m.dim() {
        return Err(Error::DimensionMismatch { expected: m.dim(), got: x.len() });
    }
    let mut buf = Vec::with_capacity(m.len());
    m.weighted_component_ln_pdfs(x, &mut buf);
    normalize_log_weights(&buf)
}

/// Index of the component maximising `ω_k ζ_k(x)`; ties go to the lowest index.
pub fn khat(x: &DVector<f64>, m: &TMixture) -> usize {
    let mut buf = Vec::with_capacity(m.len());
    m.weighted_component_ln_pdfs(x, &mut buf);
    argmax_first(&buf)
}

pub(crate) fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, val) in v.iter().enumerate().skip(1) {
        if *val > v[best] {
            best = i;
        }
    }
    best
}

/// Split of the coordinates into a block `A` that is redrawn and a block `B`
/// held fixed. Indices are zero-based and sorted. `A` is never empty; `B`
/// may be, but conditioning (and therefore a block move) needs `d_B >= 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    index_a: Vec<usize>,
    index_b: Vec<usize>,
}

impl Partition {
    /// Builds the partition with `A = index_a` and `B` its complement in `0..d`.
    pub fn new(mut index_a: Vec<usize>, d: usize) -> Result<Self> {
        index_a.sort_unstable();
        index_a.dedup();
        if index_a.is_empty() {
            return Err(Error::InvalidParameter("block A must be nonempty".into()));
        }
        if let Some(&i) = index_a.iter().find(|&&i| i >= d) {
            return Err(Error::InvalidParameter(format!("index {i} out of range for d={d}")));
        }
        let index_b: Vec<usize> = (0..d).filter(|i| index_a.binary_search(i).is_err()).collect();
        Ok(Self { index_a, index_b })
    }

    pub fn index_a(&self) -> &[usize] {
        &self.index_a
    }

    pub fn index_b(&self) -> &[usize] {
        &self.index_b
    }

    pub fn dim(&self) -> usize {
        self.index_a.len() + self.index_b.len()
    }
}

/// Exact conditional law of `z_A | z_B = x_b` under `t_d(μ, Σ, ν)`:
/// location `μ_A + Σ_AB Σ_BB⁻¹ (x_b - μ_B)`, scale
/// `(ν + δ_B)/(ν + d_B) · (Σ_AA - Σ_AB Σ_BB⁻¹ Σ_BA)` and `ν + d_B` degrees of freedom.
pub fn conditional_t(p: &StudentT, part: &Partition, x_b: &DVector<f64>) -> Result<StudentT> {
    let d = p.dim();
    if part.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, got: part.dim() });
    }
    let a = part.index_a();
    let b = part.index_b();
    if b.is_empty() {
        return Err(Error::InvalidParameter("conditioning block B is empty".into()));
    }
    if x_b.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: b.len(), got: x_b.len() });
    }
    let sigma = p.sigma();
    let s_bb = DMatrix::from_fn(b.len(), b.len(), |r, c| sigma[(b[r], b[c])]);
    let s_ba = DMatrix::from_fn(b.len(), a.len(), |r, c| sigma[(b[r], a[c])]);
    let s_aa = DMatrix::from_fn(a.len(), a.len(), |r, c| sigma[(a[r], a[c])]);
    let chol_bb = nalgebra::Cholesky::new(s_bb).ok_or(Error::NotPositiveDefinite)?;

    let resid_b = DVector::from_fn(b.len(), |i, _| x_b[i] - p.mu()[b[i]]);
    // Σ_BB⁻¹ (x_b - μ_B) and Σ_BB⁻¹ Σ_BA
    let w = chol_bb.solve(&resid_b);
    let k = chol_bb.solve(&s_ba);
    let maha_b = resid_b.dot(&w);
    let loc = DVector::from_fn(a.len(), |i, _| p.mu()[a[i]]) + s_ba.transpose() * &w;
    let schur = &s_aa - s_ba.transpose() * k;
    let nu = p.nu();
    let db = b.len() as f64;
    let scale = schur * ((nu + maha_b) / (nu + db));
    StudentT::new(loc, scale, nu + db)
}

#[derive(Serialize, Deserialize)]
struct ComponentDoc {
    mu: Vec<f64>,
    sigma: Vec<Vec<f64>>,
    nu: f64,
}

#[derive(Serialize, Deserialize)]
struct MixtureDoc {
    weights: Vec<f64>,
    components: Vec<ComponentDoc>,
}

impl From<TMixture> for MixtureDoc {
    fn from(m: TMixture) -> Self {
        let components = m
            .components
            .iter()
            .map(|c| ComponentDoc {
                mu: c.mu.iter().copied().collect(),
                sigma: (0..c.dim()).map(|i| c.sigma.row(i).iter().copied().collect()).collect(),
                nu: c.nu,
            })
            .collect();
        MixtureDoc { weights: m.weights, components }
    }
}

impl TryFrom<MixtureDoc> for TMixture {
    type Error = Error;

    fn try_from(doc: MixtureDoc) -> Result<Self> {
        let components = doc
            .components
            .into_iter()
            .map(|c| {
                let d = c.mu.len();
                if c.sigma.len() != d || c.sigma.iter().any(|r| r.len() != d) {
                    return Err(Error::DimensionMismatch { expected: d, got: c.sigma.len() });
                }
                let sigma = DMatrix::from_fn(d, d, |i, j| c.sigma[i][j]);
                StudentT::new(DVector::from_vec(c.mu), sigma, c.nu)
            })
            .collect::<Result<Vec<_>>>()?;
        TMixture::new(doc.weights, components)
    }
}
