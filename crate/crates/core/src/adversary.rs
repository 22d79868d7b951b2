//! Data generation: the all-or-nothing contamination process, censoring
//! adversaries, and the tail-perturbed hidden-direction instances that are
//! realizable yet carry their signal only outside a central window.

use crate::error::{Error, Result};
use crate::model::ContaminationParams;
use crate::quad::integrate_pieces;
use crate::rng::{label, rng_for, Rng};
use crate::sample::MaskedSample;
use crate::special::{gaussian_raw_moment, norm_cdf, norm_interval, norm_quantile, norm_sf, norm_sf_quantile, normal_pdf, phi};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution, StandardNormal};

/// Scalar summary of a generated row that a censoring rule thresholds on.
/// Regression rows are laid out as `(x_1, …, x_d, y)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Statistic {
    Coordinate(usize),
    Projection(Vec<f64>),
    AbsProjection(Vec<f64>),
    /// `y - xᵀθ`.
    Residual(Vec<f64>),
    /// `|y - xᵀθ|`.
    AbsResidual(Vec<f64>),
    /// `|y - xᵀθ̂|` with `θ̂` the least-squares fit on the rows being screened.
    OlsAbsResidual,
    /// `(y - xᵀθ)·vᵀx`.
    ResidualTimesProjection { theta: Vec<f64>, v: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    Upper,
    Lower,
}

/// How contamination-slot rows are revealed.
#[derive(Debug, Clone, PartialEq)]
pub enum Adversary {
    RevealAll,
    CensorAll,
    /// Censors roughly a `fraction` of the slots: those whose statistic lies
    /// strictly beyond the empirical `1 - fraction` quantile in the given tail.
    TailCensor { statistic: Statistic, tail: Tail, fraction: f64 },
    /// Censors slots whose statistic is strictly beyond a fixed cutoff.
    Threshold { statistic: Statistic, tail: Tail, cutoff: f64 },
}

impl Statistic {
    fn evaluate(&self, rows: &[Vec<f64>]) -> Vec<f64> {
        let fitted;
        let stat = match self {
            Statistic::OlsAbsResidual => {
                fitted = Statistic::AbsResidual(ols_rows(rows));
                &fitted
            }
            s => s,
        };
        rows.iter().map(|r| stat.value(r)).collect()
    }

    fn value(&self, row: &[f64]) -> f64 {
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let resid = |theta: &[f64]| row[row.len() - 1] - dot(&row[..row.len() - 1], theta);
        match self {
            Statistic::Coordinate(i) => row[*i],
            Statistic::Projection(v) => dot(row, v),
            Statistic::AbsProjection(v) => dot(row, v).abs(),
            Statistic::Residual(t) => resid(t),
            Statistic::AbsResidual(t) => resid(t).abs(),
            Statistic::ResidualTimesProjection { theta, v } => resid(theta) * dot(&row[..row.len() - 1], v),
            Statistic::OlsAbsResidual => unreachable!("resolved in evaluate"),
        }
    }
}

/// Least squares on `(x, y)` rows; zero coefficients if the system is singular.
fn ols_rows(rows: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = rows.first() else { return Vec::new() };
    let d = first.len() - 1;
    let mut xtx = nalgebra::DMatrix::<f64>::zeros(d, d);
    let mut xty = nalgebra::DVector::<f64>::zeros(d);
    for r in rows {
        let x = nalgebra::DVector::from_column_slice(&r[..d]);
        xtx += &x * x.transpose();
        xty += &x * r[d];
    }
    match xtx.cholesky() {
        Some(c) => c.solve(&xty).iter().copied().collect(),
        None => vec![0.0; d],
    }
}

impl Adversary {
    /// Reveal flags for the contamination-slot rows. Deterministic.
    pub fn reveal(&self, rows: &[Vec<f64>]) -> Vec<bool> {
        match self {
            Adversary::RevealAll => vec![true; rows.len()],
            Adversary::CensorAll => vec![false; rows.len()],
            Adversary::TailCensor { statistic, tail, fraction } => {
                if rows.is_empty() {
                    return Vec::new();
                }
                let s = statistic.evaluate(rows);
                let mut sorted = s.clone();
                sorted.sort_by(f64::total_cmp);
                let m = (sorted.len() - 1) as f64;
                let f = fraction.clamp(0.0, 1.0);
                match tail {
                    Tail::Upper => {
                        let cut = sorted[((1.0 - f) * m).floor() as usize];
                        s.iter().map(|&x| x <= cut).collect()
                    }
                    Tail::Lower => {
                        let cut = sorted[(f * m).ceil() as usize];
                        s.iter().map(|&x| x >= cut).collect()
                    }
                }
            }
            Adversary::Threshold { statistic, tail, cutoff } => {
                let s = statistic.evaluate(rows);
                s.iter()
                    .map(|&x| match tail {
                        Tail::Upper => x <= *cutoff,
                        Tail::Lower => x >= *cutoff,
                    })
                    .collect()
            }
        }
    }
}

/// Draws `n` rows: `m ~ Bin(n, 1-ε)` MCAR rows (each observed with
/// probability `q`) and `n - m` fresh rows of which the adversary chooses
/// what to reveal. Output order is shuffled.
pub fn generate_all_or_nothing<F>(base: F, params: &ContaminationParams, adversary: &Adversary, n: usize, seed: u64) -> Vec<MaskedSample>
where
    F: Fn(&mut Rng) -> Vec<f64>,
{
    let mut rng = rng_for(seed, &[label("generate")]);
    let m = if params.epsilon() == 0.0 {
        n
    } else {
        Binomial::new(n as u64, 1.0 - params.epsilon()).expect("valid binomial").sample(&mut rng) as usize
    };
    let mut out = Vec::with_capacity(n);
    let mut dim = 1;
    for _ in 0..m {
        let x = base(&mut rng);
        dim = x.len();
        if params.q() >= 1.0 || rng.random::<f64>() < params.q() {
            out.push(MaskedSample::observed(x));
        } else {
            out.push(MaskedSample::missing(dim));
        }
    }
    let slots: Vec<Vec<f64>> = (m..n).map(|_| base(&mut rng)).collect();
    if let Some(x) = slots.first() {
        dim = x.len();
    }
    let reveal = adversary.reveal(&slots);
    for (x, keep) in slots.into_iter().zip(reveal) {
        out.push(if keep { MaskedSample::observed(x) } else { MaskedSample::missing(dim) });
    }
    out.shuffle(&mut rng);
    out
}

/// Isotropic-or-not Gaussian row sampler: `mean + chol · g`.
pub fn gaussian_sampler(mean: Vec<f64>, chol: Option<Vec<Vec<f64>>>) -> impl Fn(&mut Rng) -> Vec<f64> {
    move |rng: &mut Rng| {
        let d = mean.len();
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        match &chol {
            None => mean.iter().zip(&g).map(|(m, z)| m + z).collect(),
            Some(l) => (0..d).map(|i| mean[i] + (0..=i).map(|j| l[i][j] * g[j]).sum::<f64>()).collect(),
        }
    }
}

/// Lower Cholesky factor of a covariance given as rows, in the layout
/// [`gaussian_sampler`] takes.
pub fn cholesky_rows(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = cov.len();
    if cov.iter().any(|r| r.len() != d) {
        return Err(crate::error::domain("covariance must be square"));
    }
    let m = nalgebra::DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    if (&m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
        return Err(crate::error::domain("covariance must be symmetric"));
    }
    let l = m.cholesky().ok_or_else(|| Error::Singular("covariance is not positive definite".into()))?.l();
    Ok((0..d).map(|i| (0..d).map(|j| l[(i, j)]).collect()).collect())
}

/// Linear-model row sampler: `x ~ N(0, I_d)`, `y = xᵀθ + σ g`, laid out `(x, y)`.
pub fn regression_sampler(theta: Vec<f64>, sigma: f64) -> impl Fn(&mut Rng) -> Vec<f64> {
    move |rng: &mut Rng| {
        let mut row: Vec<f64> = (0..theta.len()).map(|_| StandardNormal.sample(rng)).collect();
        let g: f64 = StandardNormal.sample(rng);
        let y = row.iter().zip(&theta).map(|(a, b)| a * b).sum::<f64>() + sigma * g;
        row.push(y);
        row
    }
}

/// A density equal to `β φ(x)` on `[-R, R]` and to `N(tail_mean, tail_var)`
/// outside, with `β` fixed by normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBranch {
    pub radius: f64,
    pub beta: f64,
    pub tail_mean: f64,
    pub tail_var: f64,
}

impl TwoBranch {
    pub fn new(radius: f64, tail_mean: f64, tail_var: f64) -> Self {
        let s = tail_var.sqrt();
        let inside_tail = norm_interval((-radius - tail_mean) / s, (radius - tail_mean) / s);
        let beta = inside_tail / norm_interval(-radius, radius);
        Self { radius, beta, tail_mean, tail_var }
    }

    pub fn density(&self, x: f64) -> f64 {
        if x.abs() <= self.radius {
            self.beta * phi(x)
        } else {
            normal_pdf(x, self.tail_mean, self.tail_var)
        }
    }

    /// Ratio to the tail law, i.e. to the uncontaminated base density.
    pub fn ratio_to_tail_law(&self, x: f64) -> f64 {
        if x.abs() <= self.radius {
            let s2 = self.tail_var;
            // β φ(x) / φ(x; μ, s²) in log form to stay accurate far out.
            let log_r = self.beta.ln() - 0.5 * x * x + 0.5 * s2.ln() + (x - self.tail_mean).powi(2) / (2.0 * s2);
            log_r.exp()
        } else {
            1.0
        }
    }

    fn s(&self) -> f64 {
        self.tail_var.sqrt()
    }

    fn lower_tail_mass(&self) -> f64 {
        norm_cdf((-self.radius - self.tail_mean) / self.s())
    }

    fn upper_tail_mass(&self) -> f64 {
        norm_sf((self.radius - self.tail_mean) / self.s())
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let s = self.s();
        let lo = self.lower_tail_mass();
        if x < -self.radius {
            norm_cdf((x - self.tail_mean) / s)
        } else if x <= self.radius {
            lo + self.beta * norm_interval(-self.radius, x)
        } else {
            1.0 - norm_sf((x - self.tail_mean) / s)
        }
    }

    /// Exact draw: pick the branch by its mass, then invert the conditioned CDF.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let lo = self.lower_tail_mass();
        let hi = self.upper_tail_mass();
        let inside = (1.0 - lo - hi).max(0.0);
        let u: f64 = rng.random::<f64>() * (lo + inside + hi);
        let w: f64 = rng.random::<f64>();
        let s = self.s();
        if u < inside {
            let (a, b) = (norm_cdf(-self.radius), norm_cdf(self.radius));
            let x = norm_quantile(a + w * (b - a));
            x.clamp(-self.radius, self.radius)
        } else if u < inside + lo {
            let x = self.tail_mean + s * norm_quantile(w * lo);
            x.min(-self.radius)
        } else {
            let x = self.tail_mean + s * norm_sf_quantile(w * hi);
            x.max(self.radius)
        }
    }
}

/// Observed mass `b = q(1-ε)√(1+τ)`, the geometric mean of the band edges.
fn hard_mass(params: &ContaminationParams) -> f64 {
    params.lower() * (1.0 + params.tau()).sqrt()
}

fn require_contamination(params: &ContaminationParams) -> Result<f64> {
    let t = params.tau();
    if t <= 0.0 {
        return Err(Error::Infeasible("hard instances need ε > 0".into()));
    }
    Ok(t)
}

/// Mean-shift instance: looks like `N(0,1)` on `[-R, R]` and like `N(γ,1)`
/// outside, along a hidden direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardInstanceMean {
    pub gamma: f64,
    pub radius: f64,
    pub beta: f64,
    pub b: f64,
    pub tau: f64,
    pub law: TwoBranch,
}

pub fn build_mean_hard_instance(gamma: f64, params: &ContaminationParams) -> Result<HardInstanceMean> {
    let tau = require_contamination(params)?;
    let r = (1.0 + tau).ln() / (8.0 * gamma);
    build_mean_hard_instance_with_radius(gamma, r, params)
}

/// As [`build_mean_hard_instance`] with an explicit window radius, which must
/// satisfy `2γ ≤ R ≤ log(1+τ)/(8γ)`.
pub fn build_mean_hard_instance_with_radius(gamma: f64, radius: f64, params: &ContaminationParams) -> Result<HardInstanceMean> {
    let tau = require_contamination(params)?;
    let lt = (1.0 + tau).ln();
    if !(gamma > 0.0) || gamma * gamma > 0.25 * lt {
        return Err(Error::Infeasible(format!("need 0 < γ² ≤ log(1+τ)/4, got γ={gamma}, τ={tau}")));
    }
    let r_max = lt / (8.0 * gamma);
    if 2.0 * gamma > r_max {
        return Err(Error::Infeasible(format!("empty window: 2γ = {} > log(1+τ)/(8γ) = {r_max}", 2.0 * gamma)));
    }
    if radius < 2.0 * gamma || radius > r_max * (1.0 + 1e-12) {
        return Err(Error::Infeasible(format!("radius {radius} outside [{}, {r_max}]", 2.0 * gamma)));
    }
    let law = TwoBranch::new(radius, gamma, 1.0);
    Ok(HardInstanceMean { gamma, radius, beta: law.beta, b: hard_mass(params), tau, law })
}

impl HardInstanceMean {
    pub fn density(&self, x: f64) -> f64 {
        self.law.density(x)
    }

    /// `A(x) / φ(x - γ)`: likelihood ratio against the base `N(γ, 1)`.
    pub fn ratio(&self, x: f64) -> f64 {
        self.law.ratio_to_tail_law(x)
    }
}

/// Variance-inflation instance: `N(0,1)` shape inside the window, `N(0, 1+γ)` tails.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardInstanceCov {
    pub gamma: f64,
    pub radius: f64,
    pub beta: f64,
    pub b: f64,
    pub tau: f64,
    pub law: TwoBranch,
}

pub fn build_cov_hard_instance(gamma: f64, params: &ContaminationParams) -> Result<HardInstanceCov> {
    let tau = require_contamination(params)?;
    if !(gamma > 0.0) || gamma > tau {
        return Err(Error::Infeasible(format!("need 0 < γ ≤ τ, got γ={gamma}, τ={tau}")));
    }
    let radius = ((1.0 + gamma) / gamma * (1.0 + tau).ln()).sqrt();
    let law = TwoBranch::new(radius, 0.0, 1.0 + gamma);
    Ok(HardInstanceCov { gamma, radius, beta: law.beta, b: hard_mass(params), tau, law })
}

impl HardInstanceCov {
    pub fn density(&self, x: f64) -> f64 {
        self.law.density(x)
    }

    /// `A(x) / φ(x; 0, 1+γ)`.
    pub fn ratio(&self, x: f64) -> f64 {
        self.law.ratio_to_tail_law(x)
    }
}

/// Regression instance: for covariates with `|vᵀx| ≤ r` the response looks
/// null (`N(0,1)`) on `[-R, R]`; elsewhere it follows `N(γ vᵀx, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardInstanceReg {
    pub gamma: f64,
    pub r: f64,
    pub big_r: f64,
    pub b: f64,
    pub tau: f64,
}

pub fn build_reg_hard_instance(gamma: f64, r: f64, params: &ContaminationParams) -> Result<HardInstanceReg> {
    let tau = require_contamination(params)?;
    let lt = (1.0 + tau).ln();
    if !(gamma > 0.0 && r > 0.0) || gamma * gamma * r * r > 0.5 * lt {
        return Err(Error::Infeasible(format!("need γ²r² ≤ log(1+τ)/2, got γ={gamma}, r={r}, τ={tau}")));
    }
    Ok(HardInstanceReg { gamma, r, big_r: lt / (8.0 * gamma * r), b: hard_mass(params), tau })
}

impl HardInstanceReg {
    /// Conditional law of `y` given `t = vᵀx`.
    pub fn conditional(&self, t: f64) -> Option<TwoBranch> {
        (t.abs() <= self.r).then(|| TwoBranch::new(self.big_r, self.gamma * t, 1.0))
    }

    pub fn beta_x(&self, t: f64) -> f64 {
        self.conditional(t).map_or(1.0, |l| l.beta)
    }

    pub fn density(&self, t: f64, y: f64) -> f64 {
        match self.conditional(t) {
            Some(l) => l.density(y),
            None => normal_pdf(y, self.gamma * t, 1.0),
        }
    }

    /// `A_x(y) / φ(y; γ vᵀx, 1)`.
    pub fn ratio(&self, t: f64, y: f64) -> f64 {
        self.conditional(t).map_or(1.0, |l| l.ratio_to_tail_law(y))
    }
}

/// `a·v + (g - (vᵀg) v)` with `g ~ N(0, I_d)`.
fn hidden_direction_point(a: f64, v: &[f64], rng: &mut Rng) -> Vec<f64> {
    let g: Vec<f64> = (0..v.len()).map(|_| StandardNormal.sample(rng)).collect();
    let vg: f64 = g.iter().zip(v).map(|(x, y)| x * y).sum();
    g.iter().zip(v).map(|(gi, vi)| a * vi + gi - vg * vi).collect()
}

fn check_unit(v: &[f64], d: usize) -> Result<()> {
    let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if v.len() != d || (n - 1.0).abs() > 1e-9 {
        return Err(crate::error::domain("hidden direction must be a unit vector of dimension d"));
    }
    Ok(())
}

fn sample_hidden(law: &TwoBranch, b: f64, v: &[f64], d: usize, n: usize, seed: u64, tag: &str) -> Result<Vec<MaskedSample>> {
    check_unit(v, d)?;
    let mut rng = rng_for(seed, &[label(tag)]);
    Ok((0..n)
        .map(|_| {
            if rng.random::<f64>() >= b {
                MaskedSample::missing(d)
            } else {
                let a = law.sample(&mut rng);
                MaskedSample::observed(hidden_direction_point(a, v, &mut rng))
            }
        })
        .collect())
}

pub fn sample_mean_hard(inst: &HardInstanceMean, v: &[f64], d: usize, n: usize, seed: u64) -> Result<Vec<MaskedSample>> {
    sample_hidden(&inst.law, inst.b, v, d, n, seed, "mean-hard")
}

pub fn sample_cov_hard(inst: &HardInstanceCov, v: &[f64], d: usize, n: usize, seed: u64) -> Result<Vec<MaskedSample>> {
    sample_hidden(&inst.law, inst.b, v, d, n, seed, "cov-hard")
}

/// Regression rows `(x, y)` from the hidden-direction regression instance.
pub fn sample_reg_hard(inst: &HardInstanceReg, v: &[f64], d: usize, n: usize, seed: u64) -> Result<Vec<MaskedSample>> {
    check_unit(v, d)?;
    let mut rng = rng_for(seed, &[label("reg-hard")]);
    Ok((0..n)
        .map(|_| {
            if rng.random::<f64>() >= inst.b {
                return MaskedSample::missing(d + 1);
            }
            let mut x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let t: f64 = x.iter().zip(v).map(|(a, b)| a * b).sum();
            let y = match inst.conditional(t) {
                Some(l) => l.sample(&mut rng),
                None => inst.gamma * t + <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng),
            };
            x.push(y);
            MaskedSample::observed(x)
        })
        .collect())
}

/// `|∫ xⁱ A(x) dx - E Gⁱ|` over `[-R-12, R+12]`, split at `±R`.
pub fn moment_gap<F: Fn(f64) -> f64>(density: F, i: u32, radius: f64, tol: f64) -> Result<f64> {
    let m = integrate_pieces(|x| x.powi(i as i32) * density(x), -radius - 12.0, radius + 12.0, &[-radius, radius], tol)?;
    Ok((m - gaussian_raw_moment(i)).abs())
}
