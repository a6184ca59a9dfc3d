//! Fitting mixtures of multivariate t densities to a sample.
//!
//! Each component is fitted through its Gaussian scale-mixture
//! representation: the E-step yields responsibilities `r_ik` and expected
//! precisions `u_ik = (ν_k + d)/(ν_k + δ_ik)`, the M-step updates weights,
//! locations and scales in closed form and then picks each `ν_k` from a grid
//! by profiling the weighted t log-likelihood. The number of components is
//! chosen by greedy split, merge and kill moves scored with a BIC-style
//! penalised log-likelihood.
//!
//! Scales carry a small ridge `c I / N_k`, equivalent to a penalty
//! `-c/2 · tr(Σ_k⁻¹)` on the log-likelihood. With that penalty included the
//! traced objective is exactly monotone between structural moves.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixture_t::{forward_solve, sample_index, StudentT, TMixture};
use crate::special::logsumexp;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_components: usize,
    pub nu_grid: Vec<f64>,
    /// Components lighter than this are removed when `G` is free.
    pub weight_floor: f64,
    /// EM sweeps per convergence run.
    pub max_iters: usize,
    /// Convergence threshold on the objective change per data point.
    pub tol: f64,
    /// Locks the number of components.
    pub fixed_g: Option<usize>,
    /// Components seeded by k-means++ when `G` is free.
    pub init_components: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_components: 8,
            nu_grid: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0],
            weight_floor: 0.02,
            max_iters: 200,
            tol: 1e-6,
            fixed_g: None,
            init_components: 5,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(m.to_string()));
        if self.max_components == 0 {
            return bad("max_components must be at least 1");
        }
        if self.nu_grid.is_empty() || self.nu_grid.iter().any(|v| !(*v > 0.0)) {
            return bad("nu_grid must be a nonempty list of positive values");
        }
        if self.nu_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("nu_grid must be strictly ascending");
        }
        if !(self.weight_floor >= 0.0 && self.weight_floor < 1.0 / self.max_components as f64) {
            return bad("weight_floor must lie in [0, 1/max_components)");
        }
        if self.max_iters == 0 || !(self.tol > 0.0) {
            return bad("max_iters and tol must be positive");
        }
        if self.fixed_g == Some(0) {
            return bad("fixed_g must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MoveKind {
    Split,
    Merge,
    Kill,
}

/// One attempted structural move.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructuralEvent {
    pub kind: MoveKind,
    /// Components involved, indexed in the mixture before the move.
    pub components: Vec<usize>,
    pub objective_before: f64,
    pub objective_after: f64,
    pub accepted: bool,
    /// Position in `objective_trace` where the accepted move's sweeps begin.
    pub trace_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitReport {
    /// Penalised log-likelihood after each EM sweep. This is a surrogate for
    /// a variational lower bound; it includes the scale ridge penalty.
    pub objective_trace: Vec<f64>,
    pub g_selected: usize,
    pub split_merge_log: Vec<StructuralEvent>,
    /// All points identical: a single component with a jittered scale.
    pub degenerate_fallback: bool,
    pub ridge: f64,
    pub n_points: usize,
}

impl FitReport {
    /// Trace positions at which accepted structural moves restart monotone EM.
    pub fn segment_starts(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.split_merge_log.iter().filter(|e| e.accepted).map(|e| e.trace_index).collect();
        s.sort_unstable();
        s
    }
}

/// Number of free parameters per component: location, scale, weight and ν.
fn params_per_component(d: usize) -> f64 {
    (d + d * (d + 1) / 2 + 2) as f64
}

/// BIC-style penalty `½ G (d + d(d+1)/2 + 2) ln n`.
pub fn penalty(g: usize, d: usize, n: usize) -> f64 {
    0.5 * g as f64 * params_per_component(d) * (n as f64).ln()
}

/// `Σ_i ln g_M(x_i) - pen(G)`.
pub fn objective(m: &TMixture, data: &[DVector<f64>]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let ll: f64 = data.iter().map(|x| m.ln_pdf(x)).sum();
    Ok(ll - penalty(m.len(), m.dim(), data.len()))
}

#[derive(Clone)]
struct Params {
    w: Vec<f64>,
    comps: Vec<StudentT>,
}

impl Params {
    fn g(&self) -> usize {
        self.w.len()
    }
}

struct Fitter<'a> {
    data: &'a [DVector<f64>],
    n: usize,
    d: usize,
    ridge: f64,
    cfg: &'a FitConfig,
}

fn maha_with(c: &StudentT, x: &DVector<f64>, diff: &mut [f64], y: &mut [f64]) -> f64 {
    for i in 0..diff.len() {
        diff[i] = x[i] - c.mu()[i];
    }
    forward_solve(c.chol(), diff, y);
    y.iter().map(|v| v * v).sum()
}

impl<'a> Fitter<'a> {
    fn mahalanobis_table(&self, p: &Params) -> Vec<f64> {
        let g = p.g();
        let mut out = vec![0.0; self.n * g];
        let mut diff = vec![0.0; self.d];
        let mut y = vec![0.0; self.d];
        for (i, x) in self.data.iter().enumerate() {
            for (k, c) in p.comps.iter().enumerate() {
                out[i * g + k] = maha_with(c, x, &mut diff, &mut y);
            }
        }
        out
    }

    fn ridge_penalty(&self, p: &Params) -> f64 {
        if self.ridge == 0.0 {
            return 0.0;
        }
        p.comps
            .iter()
            .map(|c| {
                // tr(Σ⁻¹) = ‖L⁻¹‖_F²
                let inv = c
                    .chol()
                    .clone()
                    .solve_lower_triangular(&DMatrix::identity(self.d, self.d))
                    .expect("cholesky factor has a positive diagonal");
                0.5 * self.ridge * inv.norm_squared()
            })
            .sum()
    }

    /// Responsibilities at `p` and the penalised objective there.
    fn e_step(&self, p: &Params) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let g = p.g();
        let maha = self.mahalanobis_table(p);
        let mut resp = vec![0.0; self.n * g];
        let lw: Vec<f64> = p.w.iter().map(|w| w.ln()).collect();
        let mut ll = 0.0;
        let mut row = vec![0.0; g];
        for i in 0..self.n {
            for k in 0..g {
                row[k] = lw[k] + p.comps[k].ln_pdf_from_mahalanobis(maha[i * g + k]);
            }
            let total = logsumexp(&row);
            if !total.is_finite() {
                return Err(Error::DegeneratePoint);
            }
            ll += total;
            for k in 0..g {
                resp[i * g + k] = (row[k] - total).exp();
            }
        }
        let obj = ll - self.ridge_penalty(p) - penalty(g, self.d, self.n);
        Ok((resp, maha, obj))
    }

    fn m_step(&self, p: &Params, resp: &[f64], maha: &[f64]) -> Result<Params> {
        let g = p.g();
        let d = self.d;
        let mut w = Vec::with_capacity(g);
        let mut comps = Vec::with_capacity(g);
        for k in 0..g {
            let nk: f64 = (0..self.n).map(|i| resp[i * g + k]).sum();
            w.push(nk / self.n as f64);
            if nk < 1e-8 {
                comps.push(p.comps[k].clone());
                continue;
            }
            let c = &p.comps[k];
            let nu = c.nu();
            let mut su = 0.0;
            let mut mu = DVector::zeros(d);
            let mut ru = vec![0.0; self.n];
            for i in 0..self.n {
                let u = (nu + d as f64) / (nu + maha[i * g + k]);
                ru[i] = resp[i * g + k] * u;
                su += ru[i];
                mu.axpy(ru[i], &self.data[i], 1.0);
            }
            mu /= su;
            let mut s = DMatrix::from_diagonal_element(d, d, self.ridge);
            for i in 0..self.n {
                let diff = &self.data[i] - &mu;
                s.syger(ru[i], &diff, &diff, 1.0);
            }
            s.fill_upper_triangle_with_lower_triangle();
            s /= nk;
            comps.push(StudentT::new(mu, s, nu)?);
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= total);
        let mut next = Params { w, comps };
        self.nu_step(&mut next, resp)?;
        Ok(next)
    }

    /// Picks each ν_k from the grid (or keeps the current value) to maximise
    /// `Σ_i r_ik ln t(x_i; μ_k, Σ_k, ν)`.
    fn nu_step(&self, p: &mut Params, resp: &[f64]) -> Result<()> {
        let g = p.g();
        let maha = self.mahalanobis_table(p);
        for k in 0..g {
            let c = &p.comps[k];
            let score = |nu: f64| -> f64 {
                let log_norm = c.log_norm_with_nu(nu);
                let half = 0.5 * (nu + self.d as f64);
                (0..self.n)
                    .map(|i| {
                        let r = resp[i * g + k];
                        if r == 0.0 {
                            0.0
                        } else {
                            r * (log_norm - half * (maha[i * g + k] / nu).ln_1p())
                        }
                    })
                    .sum()
            };
            let mut best_nu = c.nu();
            let mut best = score(best_nu);
            for &nu in &self.cfg.nu_grid {
                let s = score(nu);
                if s > best {
                    best = s;
                    best_nu = nu;
                }
            }
            if best_nu != c.nu() {
                p.comps[k] = StudentT::new(c.mu().clone(), c.sigma().clone(), best_nu)?;
            }
        }
        Ok(())
    }

    /// EM to convergence (or `max_sweeps`), appending objectives to `trace`.
    fn em(&self, mut p: Params, max_sweeps: usize, trace: &mut Vec<f64>) -> Result<(Params, Vec<f64>, f64)> {
        let mut prev: Option<f64> = None;
        let mut sweeps = 0;
        loop {
            let (resp, maha, obj) = self.e_step(&p)?;
            trace.push(obj);
            let converged = prev.is_some_and(|pv| (obj - pv).abs() < self.cfg.tol * self.n as f64);
            if converged || sweeps >= max_sweeps {
                return Ok((p, resp, obj));
            }
            prev = Some(obj);
            p = self.m_step(&p, &resp, &maha)?;
            sweeps += 1;
        }
    }

    /// Mean negative log-density under component `k` in excess of its entropy.
    fn excess_deviance(&self, p: &Params, resp: &[f64], k: usize) -> f64 {
        let g = p.g();
        let c = &p.comps[k];
        let mut nk = 0.0;
        let mut nll = 0.0;
        for i in 0..self.n {
            let r = resp[i * g + k];
            if r > 0.0 {
                nk += r;
                nll -= r * c.ln_pdf(&self.data[i]);
            }
        }
        if nk < 1e-8 {
            return f64::NEG_INFINITY;
        }
        nll / nk - c.entropy()
    }

    fn split(&self, p: &Params, k: usize) -> Result<Params> {
        let c = &p.comps[k];
        let eig = SymmetricEigen::new(c.sigma().clone());
        let top =
            (0..self.d).max_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b])).expect("nonempty spectrum");
        let lambda = eig.eigenvalues[top];
        let v = eig.eigenvectors.column(top).into_owned();
        let offset = &v * (0.5 * lambda.sqrt());
        let sigma = c.sigma() - &v * v.transpose() * (0.25 * lambda);
        let mut out = p.clone();
        out.w[k] = p.w[k] / 2.0;
        out.comps[k] = StudentT::new(c.mu() + &offset, sigma.clone(), c.nu())?;
        out.w.push(p.w[k] / 2.0);
        out.comps.push(StudentT::new(c.mu() - &offset, sigma, c.nu())?);
        Ok(out)
    }

    fn merge(&self, p: &Params, a: usize, b: usize) -> Result<Params> {
        let (ca, cb) = (&p.comps[a], &p.comps[b]);
        let (wa, wb) = (p.w[a], p.w[b]);
        let w = wa + wb;
        let mu = (ca.mu() * wa + cb.mu() * wb) / w;
        let da = ca.mu() - &mu;
        let db = cb.mu() - &mu;
        let sigma = (ca.sigma() + &da * da.transpose()) * (wa / w) + (cb.sigma() + &db * db.transpose()) * (wb / w);
        let nu = if wa >= wb { ca.nu() } else { cb.nu() };
        let mut out = Params { w: Vec::new(), comps: Vec::new() };
        for k in 0..p.g() {
            if k == a {
                out.w.push(w);
                out.comps.push(StudentT::new(mu.clone(), sigma.clone(), nu)?);
            } else if k != b {
                out.w.push(p.w[k]);
                out.comps.push(p.comps[k].clone());
            }
        }
        Ok(out)
    }

    fn kill(&self, p: &Params, k: usize) -> Params {
        let mut out = p.clone();
        out.w.remove(k);
        out.comps.remove(k);
        let total: f64 = out.w.iter().sum();
        out.w.iter_mut().for_each(|v| *v /= total);
        out
    }
}

/// Gaussian Bhattacharyya coefficient using the t covariances where finite.
fn overlap(a: &StudentT, b: &StudentT) -> f64 {
    let cov = |c: &StudentT| {
        let f = if c.nu() > 2.0 { c.nu() / (c.nu() - 2.0) } else { 1.0 };
        c.sigma() * f
    };
    let (sa, sb) = (cov(a), cov(b));
    let avg = (&sa + &sb) * 0.5;
    let Some(chol) = nalgebra::Cholesky::new(avg) else {
        return 0.0;
    };
    let diff = a.mu() - b.mu();
    let q = diff.dot(&chol.solve(&diff));
    let ld = |m: &DMatrix<f64>| nalgebra::Cholesky::new(m.clone()).map(|c| 2.0 * c.l().diagonal().map(f64::ln).sum());
    let (Some(la), Some(lb)) = (ld(&sa), ld(&sb)) else {
        return 0.0;
    };
    let lavg = 2.0 * chol.l().diagonal().map(f64::ln).sum();
    (-(q / 8.0 + 0.5 * (lavg - 0.5 * (la + lb)))).exp()
}

fn sqdist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Ridge scale: `1e-6 ·` median pairwise squared distance `/ d`, on a strided
/// subset of at most 400 points. Falls back to the mean when the median is 0.
fn ridge_scale(data: &[DVector<f64>], d: usize) -> f64 {
    let stride = data.len().div_ceil(400).max(1);
    let sub: Vec<&DVector<f64>> = data.iter().step_by(stride).collect();
    let mut dists = Vec::with_capacity(sub.len() * sub.len() / 2);
    for i in 0..sub.len() {
        for j in 0..i {
            dists.push(sqdist(sub[i], sub[j]));
        }
    }
    if dists.is_empty() {
        return 0.0;
    }
    let mid = dists.len() / 2;
    dists.select_nth_unstable_by(mid, f64::total_cmp);
    let mut med = dists[mid];
    if med == 0.0 {
        med = dists.iter().sum::<f64>() / dists.len() as f64;
    }
    1e-6 * med / d as f64
}

fn sample_cov(points: &[&DVector<f64>], d: usize) -> (DVector<f64>, DMatrix<f64>) {
    let n = points.len() as f64;
    let mut mean = DVector::zeros(d);
    for p in points {
        mean += *p;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for p in points {
        let diff = *p - &mean;
        cov.syger(1.0, &diff, &diff, 1.0);
    }
    cov.fill_upper_triangle_with_lower_triangle();
    (mean, cov / n)
}

/// k-means++ seeding followed by hard assignment to the nearest seed.
fn seed_params<R: Rng + ?Sized>(
    data: &[DVector<f64>],
    k: usize,
    d: usize,
    ridge: f64,
    nu: f64,
    rng: &mut R,
) -> Result<Params> {
    let n = data.len();
    let mut centers: Vec<usize> = vec![rng.random_range(0..n)];
    let mut dmin: Vec<f64> = data.iter().map(|x| sqdist(x, &data[centers[0]])).collect();
    while centers.len() < k {
        let total: f64 = dmin.iter().sum();
        let next = if total > 0.0 {
            let probs: Vec<f64> = dmin.iter().map(|v| v / total).collect();
            sample_index(&probs, rng)
        } else {
            rng.random_range(0..n)
        };
        centers.push(next);
        for (i, x) in data.iter().enumerate() {
            dmin[i] = dmin[i].min(sqdist(x, &data[next]));
        }
    }
    let mut groups: Vec<Vec<&DVector<f64>>> = vec![Vec::new(); k];
    for x in data {
        let best = (0..k)
            .min_by(|&a, &b| sqdist(x, &data[centers[a]]).total_cmp(&sqdist(x, &data[centers[b]])))
            .expect("at least one centre");
        groups[best].push(x);
    }
    let all: Vec<&DVector<f64>> = data.iter().collect();
    let (_, global_cov) = sample_cov(&all, d);
    let ridge_i = DMatrix::identity(d, d) * (ridge / n as f64).max(1e-300);
    let mut w = Vec::with_capacity(k);
    let mut comps = Vec::with_capacity(k);
    for (j, grp) in groups.iter().enumerate() {
        let (mu, cov) = if grp.len() > d { sample_cov(grp, d) } else { (data[centers[j]].clone(), global_cov.clone()) };
        w.push((grp.len() as f64).max(1.0));
        comps.push(StudentT::new(mu, cov + &ridge_i, nu)?);
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(Params { w, comps })
}

/// Lifts every weight to at least `floor`, keeping the total at one.
fn floor_weights(w: &mut [f64], floor: f64) {
    if w.iter().all(|v| *v >= floor) {
        return;
    }
    let g = w.len() as f64;
    for v in w.iter_mut() {
        *v = floor + (1.0 - g * floor) * *v;
    }
}

/// Fits a t mixture to `history`, seeding with k-means++.
pub fn fit<R: Rng + ?Sized>(history: &[DVector<f64>], cfg: &FitConfig, rng: &mut R) -> Result<(TMixture, FitReport)> {
    fit_with_init(history, cfg, None, rng)
}

/// Like [`fit`]; when `init` has the locked number of components (or `G` is
/// free) the EM run starts from it instead of fresh seeds.
pub fn fit_with_init<R: Rng + ?Sized>(
    history: &[DVector<f64>],
    cfg: &FitConfig,
    init: Option<&TMixture>,
    rng: &mut R,
) -> Result<(TMixture, FitReport)> {
    cfg.validate()?;
    let d = history.first().map(|x| x.len()).unwrap_or(1);
    let n = history.len();
    if n < 10 * d {
        return Err(Error::InsufficientData { needed: 10 * d, got: n });
    }
    if let Some(x) = history.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    if history.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidParameter("history contains non-finite values".into()));
    }
    let nu_max = *cfg.nu_grid.last().expect("validated nonempty grid");
    let target_g = cfg.fixed_g;

    if history.iter().all(|x| x == &history[0]) {
        let scale = 1e-6 * history[0].iter().map(|v| v * v).sum::<f64>().max(1.0);
        let comp = StudentT::new(history[0].clone(), DMatrix::identity(d, d) * scale, nu_max)?;
        let g = target_g.unwrap_or(1);
        let m = TMixture::new(vec![1.0 / g as f64; g], vec![comp; g])?;
        log::warn!("all {n} history points are identical; using a jittered single-component fit");
        let report = FitReport {
            objective_trace: Vec::new(),
            g_selected: g,
            split_merge_log: Vec::new(),
            degenerate_fallback: true,
            ridge: 0.0,
            n_points: n,
        };
        return Ok((m, report));
    }

    let ridge = ridge_scale(history, d) * n as f64;
    let fitter = Fitter { data: history, n, d, ridge, cfg };
    let nu0 = cfg.nu_grid[cfg.nu_grid.len() / 2];

    let start = match init {
        Some(m) if m.dim() == d && target_g.is_none_or(|g| g == m.len()) => {
            Params { w: m.weights().to_vec(), comps: m.components().to_vec() }
        }
        _ => {
            let k = target_g.unwrap_or_else(|| cfg.max_components.min(cfg.init_components).max(1));
            seed_params(history, k, d, ridge, nu0, rng)?
        }
    };

    let mut trace = Vec::new();
    let mut log_events = Vec::new();
    let (mut p, mut resp, mut obj) = fitter.em(start, cfg.max_iters, &mut trace)?;

    if target_g.is_none() {
        let candidate_sweeps = cfg.max_iters.min(60);
        let max_moves = 4 * cfg.max_components + 8;
        for _ in 0..max_moves {
            // remove the lightest component below the floor first
            if p.g() > 1 {
                let (k, wk) =
                    p.w.iter().copied().enumerate().min_by(|a, b| a.1.total_cmp(&b.1)).expect("nonempty weights");
                if wk < cfg.weight_floor {
                    let trace_index = trace.len();
                    let before = obj;
                    let (np, nr, no) = fitter.em(fitter.kill(&p, k), cfg.max_iters, &mut trace)?;
                    log_events.push(StructuralEvent {
                        kind: MoveKind::Kill,
                        components: vec![k],
                        objective_before: before,
                        objective_after: no,
                        accepted: true,
                        trace_index,
                    });
                    (p, resp, obj) = (np, nr, no);
                    continue;
                }
            }
            let mut best: Option<(Params, StructuralEvent)> = None;
            let mut consider = |cand: Params,
                                kind: MoveKind,
                                comps: Vec<usize>,
                                log_events: &mut Vec<StructuralEvent>|
             -> Result<()> {
                let mut scratch = Vec::new();
                let (cp, _, co) = fitter.em(cand, candidate_sweeps, &mut scratch)?;
                let ev = StructuralEvent {
                    kind,
                    components: comps,
                    objective_before: obj,
                    objective_after: co,
                    accepted: false,
                    trace_index: 0,
                };
                let improves = co > obj + cfg.tol * n as f64;
                let better = best.as_ref().is_none_or(|(_, b)| co > b.objective_after);
                if improves && better {
                    best = Some((cp, ev));
                } else {
                    log_events.push(ev);
                }
                Ok(())
            };

            if p.g() < cfg.max_components {
                let mut order: Vec<(usize, f64)> =
                    (0..p.g()).map(|k| (k, fitter.excess_deviance(&p, &resp, k))).collect();
                order.sort_by(|a, b| b.1.total_cmp(&a.1));
                for &(k, _) in order.iter().take(2) {
                    if let Ok(cand) = fitter.split(&p, k) {
                        consider(cand, MoveKind::Split, vec![k], &mut log_events)?;
                    }
                }
            }
            if p.g() > 1 {
                let mut pairs = Vec::new();
                for a in 0..p.g() {
                    for b in (a + 1)..p.g() {
                        pairs.push((a, b, overlap(&p.comps[a], &p.comps[b])));
                    }
                }
                pairs.sort_by(|x, y| y.2.total_cmp(&x.2));
                for &(a, b, _) in pairs.iter().take(3) {
                    let cand = fitter.merge(&p, a, b)?;
                    consider(cand, MoveKind::Merge, vec![a, b], &mut log_events)?;
                }
            }
            let Some((cand, mut ev)) = best else { break };
            ev.accepted = true;
            ev.trace_index = trace.len();
            let (np, nr, no) = fitter.em(cand, cfg.max_iters, &mut trace)?;
            ev.objective_after = no;
            log_events.push(ev);
            (p, resp, obj) = (np, nr, no);
        }
    }

    floor_weights(&mut p.w, cfg.weight_floor / 2.0);
    let g_selected = p.g();
    let m = TMixture::new(p.w, p.comps)?;
    let report = FitReport {
        objective_trace: trace,
        g_selected,
        split_merge_log: log_events,
        degenerate_fallback: false,
        ridge,
        n_points: n,
    };
    Ok((m, report))
}
