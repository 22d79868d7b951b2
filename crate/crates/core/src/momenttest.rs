//! Polynomial moment statistics: one-dimensional shift tests, the directional
//! moment-feasibility mean estimator, and numeric checks of the good event.

use crate::error::{domain, Error, Result};
use crate::linalg::{inv_sqrt, symmetrize};
use crate::model::ContaminationParams;
use crate::net::SphereNet;
use crate::sample::{observed_rows, MaskedSample};
use crate::special::{gaussian_even_moment, gaussian_raw_moment};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// `w^k` by repeated multiplication for the small orders used here; a
/// runtime-exponent `powi` is an out-of-line call and dominates hot loops.
#[inline]
fn small_pow(w: f64, k: u32) -> f64 {
    if k > 8 {
        return w.powi(k as i32);
    }
    let mut r = 1.0;
    for _ in 0..k {
        r *= w;
    }
    r
}

/// `u^{2k}`, computed through logarithms once `|u| > 10`.
#[inline]
fn even_power(u: f64, k: u32) -> f64 {
    if u.abs() > 10.0 {
        (2.0 * k as f64 * u.abs().ln()).exp()
    } else {
        small_pow(u * u, k)
    }
}

/// `u^{2k-1}`.
#[inline]
fn odd_power(u: f64, k: u32) -> f64 {
    if u.abs() > 10.0 {
        u.signum() * ((2.0 * k as f64 - 1.0) * u.abs().ln()).exp()
    } else {
        u * small_pow(u * u, k - 1)
    }
}

fn finite(x: f64, what: &str) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Range(format!("{what} overflowed")))
    }
}

/// Empirical mean of `X^{2k}`.
pub fn psi_k(samples: &[f64], k: u32) -> Result<f64> {
    if k == 0 {
        return Err(domain("k must be at least 1"));
    }
    if samples.is_empty() {
        return Err(Error::NoObservedData);
    }
    let s: f64 = samples.iter().map(|&x| even_power(x, k)).sum();
    finite(s / samples.len() as f64, "2k-th moment")
}

/// Smallest shift `ρ` that the order-`k` moment test separates at contamination `τ`.
pub fn separation_threshold(tau: f64, k: u32) -> Result<f64> {
    if !(tau >= 0.0) || k == 0 {
        return Err(domain("need tau >= 0 and k >= 1"));
    }
    Ok(((tau * tau + 2.0 * tau) / k as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    H0,
    H1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftTest {
    pub decision: Decision,
    pub statistic: f64,
    pub threshold: f64,
    /// Largest H0 value, `(1+τ)(2k-1)!!`.
    pub null_upper: f64,
    /// Smallest H1 value at shift ρ, `((2k-1)!! (1 + kρ²)) / (1+τ)`.
    pub alt_lower: f64,
}

/// Tests `N(0,1)` against a shift of size at least `rho` using the observed
/// points' `2k`-th moment, with the threshold halfway between the two
/// population values.
pub fn test_mean_shift(observed: &[f64], k: u32, rho: f64, params: &ContaminationParams) -> Result<ShiftTest> {
    let statistic = psi_k(observed, k)?;
    let df = gaussian_even_moment(k)?;
    let tau = params.tau();
    let null_upper = (1.0 + tau) * df;
    let alt_lower = (df + k as f64 * rho * rho * df) / (1.0 + tau);
    let threshold = 0.5 * (null_upper + alt_lower);
    if alt_lower <= null_upper {
        log::warn!("shift {rho} is below the separation threshold; the test has no guaranteed power");
    }
    let decision = if statistic > threshold { Decision::H1 } else { Decision::H0 };
    Ok(ShiftTest { decision, statistic, threshold, null_upper, alt_lower })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Net approximation of `sup_v (1/m) Σ ⟨v, Z_i⟩^{2k}` over observed rows.
pub fn injective_moment(samples: &[MaskedSample], k: u32, net: &SphereNet) -> Result<f64> {
    let rows = observed_rows(samples);
    if rows.is_empty() {
        return Err(Error::NoObservedData);
    }
    let vals: Vec<f64> = net
        .directions()
        .par_iter()
        .map(|v| {
            let p: Vec<f64> = rows.iter().map(|x| dot(v, x)).collect();
            psi_k(&p, k)
        })
        .collect::<Result<_>>()?;
    Ok(vals.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// `γ = ((1+ε)² - (1-ε)³) / (1-ε)²`.
pub fn theorem3_gamma(eps: f64) -> f64 {
    ((1.0 + eps).powi(2) - (1.0 - eps).powi(3)) / (1.0 - eps).powi(2)
}

/// Accuracy bound `8(√(γ/k) + γ/k)` for any feasible point of the moment program.
pub fn theorem3_bound(eps: f64, k: u32) -> f64 {
    let r = theorem3_gamma(eps) / k as f64;
    8.0 * (r.sqrt() + r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentMeanConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for MomentMeanConfig {
    fn default() -> Self {
        Self { max_iters: 5_000, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentMean {
    pub theta: Vec<f64>,
    pub objective: f64,
    /// `((1+ε)²/(1-ε))·(2k-1)!!`.
    pub feasibility_level: f64,
    pub feasible: bool,
}

/// `g(θ) = max_v (1/m) Σ ⟨v, x - θ⟩^{2k}` together with a subgradient.
pub fn moment_objective(rows: &[Vec<f64>], theta: &[f64], k: u32, dirs: &[Vec<f64>]) -> (f64, Vec<f64>) {
    let m = rows.len() as f64;
    let mut best = (f64::NEG_INFINITY, 0usize);
    let centered: Vec<Vec<f64>> = rows.iter().map(|x| x.iter().zip(theta).map(|(a, b)| a - b).collect()).collect();
    for (i, v) in dirs.iter().enumerate() {
        let val = centered.iter().map(|c| even_power(dot(v, c), k)).sum::<f64>() / m;
        if val > best.0 {
            best = (val, i);
        }
    }
    let v = &dirs[best.1];
    let slope = -2.0 * k as f64 * centered.iter().map(|c| odd_power(dot(v, c), k)).sum::<f64>() / m;
    (best.0, v.iter().map(|x| slope * x).collect())
}

/// `⟨v, x_i⟩` for every net direction and row, kept when it fits in a
/// 128 MiB budget; the objective then costs one pass over the table.
struct CachedProjections {
    proj: Vec<Vec<f64>>,
}

impl CachedProjections {
    const MAX_ENTRIES: usize = 1 << 24;

    fn new(rows: &[Vec<f64>], dirs: &[Vec<f64>]) -> Option<Self> {
        if rows.len().saturating_mul(dirs.len()) > Self::MAX_ENTRIES {
            return None;
        }
        Some(Self { proj: dirs.par_iter().map(|v| rows.iter().map(|x| dot(v, x)).collect()).collect() })
    }

    /// Same value and subgradient as [`moment_objective`].
    fn objective(&self, theta: &[f64], k: u32, dirs: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let m = self.proj[0].len() as f64;
        let mut best = (f64::NEG_INFINITY, 0usize);
        for (i, (v, p)) in dirs.iter().zip(&self.proj).enumerate() {
            let shift = dot(v, theta);
            let val = p.iter().map(|&a| even_power(a - shift, k)).sum::<f64>() / m;
            if val > best.0 {
                best = (val, i);
            }
        }
        let v = &dirs[best.1];
        let shift = dot(v, theta);
        let slope = -2.0 * k as f64 * self.proj[best.1].iter().map(|&a| odd_power(a - shift, k)).sum::<f64>() / m;
        (best.0, v.iter().map(|x| slope * x).collect())
    }
}

/// Minimizes `g` from the observed-row mean and reports whether the result
/// meets the moment feasibility level. Rows are assumed to have identity
/// covariance.
pub fn moment_feasible_mean(samples: &[MaskedSample], k: u32, params: &ContaminationParams, net: &SphereNet, cfg: &MomentMeanConfig) -> Result<MomentMean> {
    if k == 0 {
        return Err(domain("k must be at least 1"));
    }
    let rows = observed_rows(samples);
    if rows.is_empty() {
        return Err(Error::NoObservedData);
    }
    let d = net.dim();
    if (k as f64) > (d as f64).sqrt() {
        log::warn!("k = {k} exceeds sqrt(d); the accuracy bound is not claimed in this regime");
    }
    let mut theta = vec![0.0; d];
    for x in &rows {
        for (t, v) in theta.iter_mut().zip(x) {
            *t += v / rows.len() as f64;
        }
    }
    let dirs = net.directions();
    let cached = CachedProjections::new(&rows, dirs);
    let objective = |theta: &[f64]| match &cached {
        Some(c) => c.objective(theta, k, dirs),
        None => moment_objective(&rows, theta, k, dirs),
    };
    let (f0, _) = objective(&theta);
    let f0 = finite(f0, "moment objective")?;
    let (mut best, mut best_theta) = (f0, theta.clone());
    let mut gap = 0.5 * f0;
    let mut stall = 0;
    for _ in 0..cfg.max_iters {
        if gap < cfg.tol * best.max(1.0) {
            break;
        }
        let (f, g) = objective(&theta);
        let gn2: f64 = g.iter().map(|x| x * x).sum();
        if f < best - 0.5 * gap {
            stall = 0;
        } else {
            stall += 1;
        }
        if f < best {
            best = f;
            best_theta.clone_from(&theta);
        }
        // A vanishing subgradient of the active direction certifies a minimizer;
        // stepping on it would send θ arbitrarily far.
        if gn2.sqrt() <= 1e-12 * (1.0 + f) {
            break;
        }
        if stall > 20 {
            gap *= 0.5;
            stall = 0;
            theta.clone_from(&best_theta);
            continue;
        }
        let step = (f - (best - gap)) / gn2;
        for (t, gi) in theta.iter_mut().zip(&g) {
            *t -= step * gi;
        }
    }
    let eps = params.epsilon();
    let feasibility_level = (1.0 + eps).powi(2) / (1.0 - eps) * gaussian_even_moment(k)?;
    Ok(MomentMean { theta: best_theta, objective: best, feasibility_level, feasible: best <= feasibility_level })
}

/// Exact Gaussian moment `E Π_j z_j^{m_j}` for a multiplicity vector.
pub fn gaussian_tensor_entry(multiplicities: &[usize]) -> f64 {
    multiplicities.iter().map(|&m| gaussian_raw_moment(m as u32)).product()
}

fn multiplicity_vectors(d: usize, ell: usize) -> Vec<Vec<usize>> {
    if d == 1 {
        return vec![vec![ell]];
    }
    (0..=ell)
        .flat_map(|first| {
            multiplicity_vectors(d - 1, ell - first).into_iter().map(move |mut rest| {
                rest.insert(0, first);
                rest
            })
        })
        .collect()
}

/// Sup-norm distance between the empirical `ℓ`-th moment tensor of fully
/// observed standardized rows and that of `N(0, I)`. Only one representative
/// per symmetric orbit of indices is evaluated.
pub fn tensor_moment_deviation(rows: &[Vec<f64>], ell: usize) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::NoObservedData);
    }
    let d = rows[0].len();
    if ell > 6 || d > 4 {
        return Err(Error::SizeCap(format!("tensor of order {ell} in dimension {d} exceeds the cap (order 6, dimension 4)")));
    }
    let n = rows.len() as f64;
    let dev = multiplicity_vectors(d, ell)
        .par_iter()
        .map(|m| {
            let emp = rows.iter().map(|x| x.iter().zip(m).map(|(v, &p)| v.powi(p as i32)).product::<f64>()).sum::<f64>() / n;
            (emp - gaussian_tensor_entry(m)).abs()
        })
        .reduce(|| 0.0, f64::max);
    Ok(dev)
}

/// High-probability bound on the tensor deviation for `n` standard Gaussian rows.
pub fn tensor_concentration_bound(ell: usize, d: usize, n: usize, delta: f64) -> f64 {
    let t = ell as f64 * (d as f64).ln() + (1.0 / delta).ln();
    let l = ell as f64;
    (100.0 * l).powf(l / 2.0) * ((t / n as f64).sqrt() + t.powf(l / 2.0) / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandReport {
    pub ell: u32,
    pub target: f64,
    pub lower: f64,
    pub upper: f64,
    pub moments: Vec<f64>,
    pub inside: Vec<bool>,
    pub fraction_inside: f64,
}

/// Whitens observed rows by their own second moment and checks each net
/// direction's `2ℓ`-th moment against `(1 ± 10ε)·(2ℓ-1)!!`.
pub fn whitened_moment_band_check(samples: &[MaskedSample], ell: u32, params: &ContaminationParams, net: &SphereNet) -> Result<BandReport> {
    let rows = observed_rows(samples);
    if rows.is_empty() {
        return Err(Error::NoObservedData);
    }
    let d = rows[0].len();
    let mut s = DMatrix::<f64>::zeros(d, d);
    for x in &rows {
        let v = DVector::from_column_slice(x);
        s += &v * v.transpose();
    }
    s /= rows.len() as f64;
    let w = inv_sqrt(&symmetrize(&s))?;
    let white: Vec<Vec<f64>> = rows.iter().map(|x| (&w * DVector::from_column_slice(x)).iter().copied().collect()).collect();
    let target = gaussian_even_moment(ell)?;
    let eps = params.epsilon();
    let (lower, upper) = ((1.0 - 10.0 * eps) * target, (1.0 + 10.0 * eps) * target);
    let moments: Vec<f64> = net
        .directions()
        .par_iter()
        .map(|v| psi_k(&white.iter().map(|x| dot(v, x)).collect::<Vec<_>>(), ell))
        .collect::<Result<_>>()?;
    // Whitening makes every second moment 1 up to rounding.
    let slack = if ell == 1 { 1e-9 } else { 0.0 };
    let inside: Vec<bool> = moments.iter().map(|&m| m >= lower - slack && m <= upper + slack).collect();
    let fraction_inside = inside.iter().filter(|&&b| b).count() as f64 / inside.len() as f64;
    Ok(BandReport { ell, target, lower, upper, moments, inside, fraction_inside })
}
