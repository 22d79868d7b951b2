//! Linear regression with masked pairs by minimizing the mean `2k`-th power
//! of the residuals over observed rows.

use crate::error::{domain, Error, Result};
use crate::linalg::{min_eigenvalue, symmetrize, SymmetricMatrix};
use crate::model::{ConfidenceParams, ContaminationParams};
use crate::rng::rng_for;
use crate::sample::MaskedSample;
use crate::special::{double_factorial_f64, ln_double_factorial};
use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use std::f64::consts::PI;

/// Observed `(x, y)` pairs plus the total sample count, masked rows included.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    xs: Vec<Vec<f64>>,
    ys: Vec<f64>,
    n_total: usize,
    d: usize,
}

impl RegressionData {
    pub fn new(xs: Vec<Vec<f64>>, ys: Vec<f64>, n_total: usize, d: usize) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() > n_total {
            return Err(domain("observed rows must pair up and not exceed n_total"));
        }
        if xs.iter().any(|x| x.len() != d || x.iter().any(|v| !v.is_finite())) || ys.iter().any(|y| !y.is_finite()) {
            return Err(domain("observed rows must be finite with d covariates"));
        }
        Ok(Self { xs, ys, n_total, d })
    }

    /// Rows laid out as `(x_1, …, x_d, y)`; each must be all-or-nothing.
    pub fn from_samples(samples: &[MaskedSample]) -> Result<Self> {
        let width = samples.first().map(MaskedSample::dim).ok_or(Error::NoObservedData)?;
        if width < 2 {
            return Err(domain("regression rows need at least one covariate and a response"));
        }
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for s in samples {
            if s.dim() != width {
                return Err(domain("ragged regression rows"));
            }
            match s.to_vec() {
                Some(mut r) => {
                    ys.push(r.pop().unwrap_or_default());
                    xs.push(r);
                }
                None if s.is_missing() => {}
                None => return Err(domain("regression rows must be fully observed or fully missing")),
            }
        }
        Self::new(xs, ys, samples.len(), width - 1)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_observed(&self) -> usize {
        self.ys.len()
    }

    pub fn xs(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn ys(&self) -> &[f64] {
        &self.ys
    }

    fn residual(&self, i: usize, theta: &[f64]) -> f64 {
        self.ys[i] - self.xs[i].iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct Compensated {
    sum: f64,
    c: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// `r^p`, through logarithms when `|r| > 10`.
fn power(r: f64, p: u32) -> f64 {
    if p == 0 {
        return 1.0;
    }
    if r.abs() > 10.0 {
        let m = (p as f64 * r.abs().ln()).exp();
        if p % 2 == 1 && r < 0.0 {
            -m
        } else {
            m
        }
    } else {
        r.powi(p as i32)
    }
}

fn checked(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Range("residual power overflowed".into()))
    }
}

fn check_args(theta: &[f64], data: &RegressionData, k: u32) -> Result<()> {
    if k == 0 {
        return Err(domain("k must be at least 1"));
    }
    if theta.len() != data.d {
        return Err(domain("theta has the wrong dimension"));
    }
    if data.n_total == 0 {
        return Err(Error::NoObservedData);
    }
    Ok(())
}

/// `F(θ) = (1/n) Σ_obs (y_i - x_iᵀθ)^{2k}`.
pub fn loss(theta: &[f64], data: &RegressionData, k: u32) -> Result<f64> {
    check_args(theta, data, k)?;
    let mut acc = Compensated::default();
    for i in 0..data.n_observed() {
        acc.add(power(data.residual(i, theta), 2 * k));
    }
    checked(acc.value() / data.n_total as f64)
}

/// `-(2k/n) Σ_obs r_i^{2k-1} x_i`.
pub fn gradient(theta: &[f64], data: &RegressionData, k: u32) -> Result<Vec<f64>> {
    check_args(theta, data, k)?;
    let mut acc = vec![Compensated::default(); data.d];
    for i in 0..data.n_observed() {
        let w = power(data.residual(i, theta), 2 * k - 1);
        for (a, x) in acc.iter_mut().zip(&data.xs[i]) {
            a.add(w * x);
        }
    }
    let scale = -2.0 * k as f64 / data.n_total as f64;
    acc.iter().map(|a| checked(scale * a.value())).collect()
}

/// `(2k(2k-1)/n) Σ_obs r_i^{2k-2} x_i x_iᵀ`.
pub fn hessian(theta: &[f64], data: &RegressionData, k: u32) -> Result<SymmetricMatrix> {
    check_args(theta, data, k)?;
    let d = data.d;
    let mut acc = vec![Compensated::default(); d * (d + 1) / 2];
    for i in 0..data.n_observed() {
        let w = power(data.residual(i, theta), 2 * k - 2);
        let x = &data.xs[i];
        let mut idx = 0;
        for a in 0..d {
            for b in a..d {
                acc[idx].add(w * x[a] * x[b]);
                idx += 1;
            }
        }
    }
    let scale = (2 * k * (2 * k - 1)) as f64 / data.n_total as f64;
    let mut h = DMatrix::<f64>::zeros(d, d);
    let mut idx = 0;
    for a in 0..d {
        for b in a..d {
            let v = checked(scale * acc[idx].value())?;
            h[(a, b)] = v;
            h[(b, a)] = v;
            idx += 1;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KChoice {
    pub k: u32,
    /// `⌊c·log(τ/α) / (log log(τ/α))²⌋` before clamping, when that branch applies.
    pub formula: Option<f64>,
}

/// Loss order from contamination ratio `tau` and statistical rate `alpha`.
pub fn choose_k_raw(tau: f64, alpha: f64, c: f64, c_prime: f64) -> KChoice {
    choose_k_log_alpha(tau, alpha.ln(), c, c_prime)
}

/// As [`choose_k_raw`] with `log α` supplied directly, for rates too small to represent.
pub fn choose_k_log_alpha(tau: f64, log_alpha: f64, c: f64, c_prime: f64) -> KChoice {
    if tau.ln() <= c_prime.ln() + log_alpha {
        return KChoice { k: 1, formula: None };
    }
    let l = tau.ln() - log_alpha;
    let ll = if l > 0.0 { l.ln().max(1.0) } else { 1.0 };
    let f = (c * l / (ll * ll)).floor();
    let k = if f.is_finite() && f >= 1.0 { f.min(u32::MAX as f64) as u32 } else { 1 };
    KChoice { k, formula: Some(f) }
}

/// Same rule with `α` from the sample size, dimension and confidence.
pub fn choose_k(conf: &ConfidenceParams, params: &ContaminationParams, c: f64, c_prime: f64) -> KChoice {
    choose_k_raw(params.tau(), conf.alpha(params), c, c_prime)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitConfig {
    pub max_iters: usize,
    /// Stop once the gradient norm drops below `grad_tol·(1 + F)`.
    pub grad_tol: f64,
    pub armijo: f64,
    pub max_halvings: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { max_iters: 200, grad_tol: 1e-9, armijo: 1e-4, max_halvings: 60 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostics {
    pub k: u32,
    pub iterations: usize,
    pub loss: f64,
    pub grad_norm: f64,
    pub hessian_min_eig: f64,
    pub converged: bool,
    /// Least-squares starting point.
    pub theta_ls: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub theta: Vec<f64>,
    pub diagnostics: FitDiagnostics,
}

/// Least squares on observed rows via the normal equations.
pub fn least_squares(data: &RegressionData) -> Result<Vec<f64>> {
    let d = data.d;
    if data.n_observed() < d {
        return Err(Error::RankDeficient);
    }
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(d);
    for (x, y) in data.xs.iter().zip(&data.ys) {
        let v = DVector::from_column_slice(x);
        b += &v * *y;
        a += &v * v.transpose();
    }
    let chol = symmetrize(&a).cholesky().ok_or(Error::RankDeficient)?;
    let theta = chol.solve(&b);
    // One step of iterative refinement on the residual of the normal equations.
    let corr = chol.solve(&(&b - &a * &theta));
    Ok((theta + corr).iter().copied().collect())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Least squares, then damped Newton on `F^{(k)}` with backtracking.
pub fn fit(data: &RegressionData, k: u32, cfg: &FitConfig) -> Result<Fit> {
    let theta_ls = least_squares(data)?;
    let mut theta = theta_ls.clone();
    let mut f = loss(&theta, data, k)?;
    let mut g = gradient(&theta, data, k)?;
    let mut iterations = 0;
    let mut converged = norm(&g) <= cfg.grad_tol * (1.0 + f);
    if k > 1 {
        while !converged && iterations < cfg.max_iters {
            iterations += 1;
            let h = hessian(&theta, data, k)?;
            let gv = DVector::from_column_slice(&g);
            let step = match h.clone().cholesky() {
                Some(c) => c.solve(&(-&gv)),
                None => -&gv,
            };
            let slope = gv.dot(&step);
            let mut t = 1.0;
            let mut accepted = None;
            for _ in 0..cfg.max_halvings {
                let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, s)| a + t * s).collect();
                if let Ok(fc) = loss(&cand, data, k) {
                    if fc <= f + cfg.armijo * t * slope {
                        accepted = Some((cand, fc));
                        break;
                    }
                }
                t *= 0.5;
            }
            let Some((cand, fc)) = accepted else { break };
            let stalled = fc >= f;
            theta = cand;
            f = fc;
            g = gradient(&theta, data, k)?;
            converged = norm(&g) <= cfg.grad_tol * (1.0 + f);
            if stalled {
                break;
            }
        }
    }
    let grad_norm = norm(&g);
    if !converged {
        log::info!("Newton stopped after {iterations} iterations with gradient norm {grad_norm:.3e}");
    }
    let hessian_min_eig = min_eigenvalue(&hessian(&theta, data, k)?);
    Ok(Fit {
        theta,
        diagnostics: FitDiagnostics { k, iterations, loss: f, grad_norm, hessian_min_eig, converged, theta_ls },
    })
}

/// `2√(2/π)·k·σ^{2k-1}·ε·(2k-2)!!`.
pub fn population_gradient_bound(k: u32, sigma: f64, eps: f64) -> Result<f64> {
    if k == 0 {
        return Err(domain("k must be at least 1"));
    }
    let v = 2.0 * (2.0 / PI).sqrt() * k as f64 * sigma.powi(2 * k as i32 - 1) * eps * double_factorial_f64(2 * k as i64 - 2)?;
    checked(v)
}

/// `(1-ε)·2k(2k-1)·σ^{2k-2}·(2k-3)!!`, the population strong-convexity modulus.
pub fn population_strong_convexity(k: u32, sigma: f64, eps: f64) -> Result<f64> {
    if k == 0 {
        return Err(domain("k must be at least 1"));
    }
    let kk = k as f64;
    checked((1.0 - eps) * 2.0 * kk * (2.0 * kk - 1.0) * sigma.powi(2 * k as i32 - 2) * double_factorial_f64(2 * k as i64 - 3)?)
}

/// `(2k-2)!! / (2k-1)!!`, computed through logarithms.
pub fn double_factorial_ratio(k: u32) -> f64 {
    (ln_double_factorial(2 * k as i64 - 2) - ln_double_factorial(2 * k as i64 - 1)).exp()
}

/// `σ·ε/(1-ε)·(2k-2)!!/(2k-1)!!`.
pub fn population_error_bound(k: u32, sigma: f64, eps: f64) -> Result<f64> {
    if k == 0 {
        return Err(domain("k must be at least 1"));
    }
    if !(eps < 1.0) {
        return Err(domain("epsilon must be below 1"));
    }
    checked(sigma * eps / (1.0 - eps) * double_factorial_ratio(k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloConfig {
    pub d: usize,
    pub draws: usize,
    pub seed: u64,
    pub chunk: usize,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self { d: 2, draws: 1_000_000, seed: 0, chunk: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationGradient {
    pub gradient: Vec<f64>,
    pub norm: f64,
    pub std_error: f64,
}

/// Monte-Carlo estimate of `‖∇F^{(k)}(θ*)‖` when `X ~ N(0, I_d)`, noise `σG`,
/// and a contamination slot (probability ε) is revealed iff `reveal(x, g)`.
/// Clean slots are always revealed.
pub fn population_oracle<F>(k: u32, sigma: f64, eps: f64, reveal: F, cfg: &MonteCarloConfig) -> Result<PopulationGradient>
where
    F: Fn(&[f64], f64) -> bool + Sync,
{
    if k == 0 || cfg.d == 0 || cfg.draws == 0 {
        return Err(domain("need k, d and draws positive"));
    }
    let d = cfg.d;
    let chunk = cfg.chunk.max(1);
    let n_chunks = cfg.draws.div_ceil(chunk);
    // Per chunk: sums and sums of squares of each gradient coordinate.
    let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_for(cfg.seed, &[c as u64]);
            let m = chunk.min(cfg.draws - c * chunk);
            let (mut s, mut s2) = (vec![0.0; d], vec![0.0; d]);
            let mut x = vec![0.0; d];
            for _ in 0..m {
                for xi in x.iter_mut() {
                    *xi = StandardNormal.sample(&mut rng);
                }
                let g: f64 = StandardNormal.sample(&mut rng);
                let u: f64 = rand::Rng::random(&mut rng);
                let observed = u >= eps || reveal(&x, g);
                if observed {
                    let w = -2.0 * k as f64 * power(sigma * g, 2 * k - 1);
                    for j in 0..d {
                        let t = w * x[j];
                        s[j] += t;
                        s2[j] += t * t;
                    }
                }
            }
            (s, s2)
        })
        .collect();
    let n = cfg.draws as f64;
    let mut mean = vec![0.0; d];
    let mut var = vec![0.0; d];
    for (s, s2) in &parts {
        for j in 0..d {
            mean[j] += s[j];
            var[j] += s2[j];
        }
    }
    for j in 0..d {
        mean[j] /= n;
        var[j] = (var[j] / n - mean[j] * mean[j]).max(0.0);
    }
    let std_error = (var.iter().sum::<f64>() / n).sqrt();
    let norm = norm(&mean);
    Ok(PopulationGradient { gradient: mean, norm: checked(norm)?, std_error })
}
