//! Minimum Kolmogorov-distance estimation against the realizable band.
//!
//! For a base CDF `F` the realizable set restricted to half-lines
//! `(-∞, r]` is the band `[L·F(r), U·F(r)]` (with the missing atom taking the
//! rest). Both edges are nondecreasing, so clipping the empirical CDF into
//! the band is itself a valid monotone selection and the distance to the
//! set is the pointwise sup of `dist(F̂(r), band(r))`.

use crate::error::{Error, Result};
use crate::model::{ConfidenceParams, ContaminationParams};
use crate::sample::MaskedSample;
use crate::special::norm_cdf;
use std::f64::consts::FRAC_1_SQRT_2;

/// Empirical CDF of one-dimensional data with missing entries counted in
/// the denominator.
#[derive(Debug, Clone)]
pub struct EmpiricalCdf {
    observed: Vec<f64>,
    n_total: usize,
    n_missing: usize,
    // Distinct observed values and F̂ at each of them.
    atoms: Vec<f64>,
    cum: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut observed: Vec<f64>, n_missing: usize) -> Result<Self> {
        if observed.iter().any(|x| !x.is_finite()) {
            return Err(crate::error::domain("non-finite observation"));
        }
        let n_total = observed.len() + n_missing;
        if n_total == 0 {
            return Err(crate::error::domain("empty sample"));
        }
        observed.sort_by(f64::total_cmp);
        let mut atoms = Vec::new();
        let mut cum = Vec::new();
        let n = n_total as f64;
        for (i, &x) in observed.iter().enumerate() {
            if atoms.last() == Some(&x) {
                *cum.last_mut().unwrap() = (i + 1) as f64 / n;
            } else {
                atoms.push(x);
                cum.push((i + 1) as f64 / n);
            }
        }
        Ok(Self { observed, n_total, n_missing, atoms, cum })
    }

    pub fn from_options(values: &[Option<f64>]) -> Result<Self> {
        let obs: Vec<f64> = values.iter().flatten().copied().collect();
        let miss = values.len() - obs.len();
        Self::new(obs, miss)
    }

    /// One-dimensional masked samples.
    pub fn from_samples(samples: &[MaskedSample]) -> Result<Self> {
        if samples.iter().any(|s| s.dim() != 1) {
            return Err(crate::error::domain("EmpiricalCdf needs one-dimensional samples"));
        }
        let v: Vec<Option<f64>> = samples.iter().map(|s| s.get(0)).collect();
        Self::from_options(&v)
    }

    pub fn observed(&self) -> &[f64] {
        &self.observed
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_missing(&self) -> usize {
        self.n_missing
    }

    pub fn n_observed(&self) -> usize {
        self.observed.len()
    }

    /// `#{observed ≤ r} / n_total`.
    pub fn eval(&self, r: f64) -> f64 {
        let k = self.observed.partition_point(|&x| x <= r);
        k as f64 / self.n_total as f64
    }

    /// `F̂(∞)`, the observed fraction.
    pub fn observed_fraction(&self) -> f64 {
        self.observed.len() as f64 / self.n_total as f64
    }
}

/// `max(a - x, x - b, 0)`.
pub fn dist_to_interval(x: f64, a: f64, b: f64) -> f64 {
    (a - x).max(x - b).max(0.0)
}

/// Band edges expressed through a base CDF value `g ∈ [0,1]`.
trait Band {
    fn lo(&self, g: f64) -> f64;
    fn hi(&self, g: f64) -> f64;
}

struct Linear {
    l: f64,
    u: f64,
}

impl Band for Linear {
    fn lo(&self, g: f64) -> f64 {
        self.l * g
    }
    fn hi(&self, g: f64) -> f64 {
        self.u * g
    }
}

/// Conditional band for the observed law: the ratio `Q(≤r)/Q(ℝ)` with the
/// numerator and the complement each in their likelihood-ratio bands.
struct Conditional {
    l: f64,
    u: f64,
}

impl Band for Conditional {
    fn lo(&self, g: f64) -> f64 {
        let a = self.l * g;
        let den = a + self.u * (1.0 - g);
        if den > 0.0 { a / den } else { 0.0 }
    }
    fn hi(&self, g: f64) -> f64 {
        let a = self.u * g;
        let den = a + self.l * (1.0 - g);
        if den > 0.0 { a / den } else { 0.0 }
    }
}

/// Exact `sup_r dist(c·F̂(r), band(G(r)))` for a step function against
/// nondecreasing continuous edges, where `scale` rescales F̂.
///
/// Sorted atoms are grouped into blocks. Each block's terms are bounded
/// using the base CDF at the block boundaries only; blocks are opened in
/// decreasing order of their bound until no bound beats the running best.
fn band_sup<B: Band>(ecdf: &EmpiricalCdf, scale: f64, g: impl Fn(f64) -> f64, band: &B) -> f64 {
    let u = &ecdf.atoms;
    let m = u.len();
    let c = |j: usize| ecdf.cum[j] * scale;
    if m == 0 {
        return band.lo(1.0).max(0.0);
    }
    let bs = ((m as f64).sqrt() as usize).max(32);
    let nb = m.div_ceil(bs);
    // Base CDF at each block start, plus +∞.
    let gs: Vec<f64> = (0..nb).map(|k| g(u[k * bs])).chain(std::iter::once(1.0)).collect();
    let mut best = band.lo(gs[0]);
    let mut bounds = Vec::with_capacity(nb);
    for k in 0..nb {
        let a = k * bs;
        let b = ((k + 1) * bs).min(m) - 1;
        let (ga, gnext) = (gs[k], gs[k + 1]);
        best = best.max(c(a) - band.hi(ga)).max(band.lo(gnext) - c(b));
        let ub = (c(b) - band.hi(ga)).max(band.lo(gnext) - c(a));
        bounds.push((ub, k));
    }
    bounds.sort_by(|x, y| y.0.total_cmp(&x.0));
    for (ub, k) in bounds {
        if ub <= best + 1e-12 {
            break;
        }
        let a = k * bs;
        let b = ((k + 1) * bs).min(m) - 1;
        let mut g_here = gs[k];
        for j in a..=b {
            if j > a {
                g_here = g(u[j]);
            }
            best = best.max(c(j) - band.hi(g_here));
            if j > a {
                // Left limit at u[j] closes the flat piece that started at u[j-1].
                best = best.max(band.lo(g_here) - c(j - 1));
            }
        }
        best = best.max(band.lo(gs[k + 1]) - c(b));
    }
    best.max(0.0)
}

/// Brute-force evaluation of the same supremum, one base-CDF call per atom.
/// Kept as an internal cross-check for the pruned search.
#[cfg(test)]
fn band_sup_naive<B: Band>(ecdf: &EmpiricalCdf, scale: f64, g: impl Fn(f64) -> f64, band: &B) -> f64 {
    let mut best = 0.0f64;
    let mut prev = 0.0;
    for (j, &x) in ecdf.atoms.iter().enumerate() {
        let gx = g(x);
        let cj = ecdf.cum[j] * scale;
        best = best.max(band.lo(gx) - prev).max(cj - band.hi(gx));
        prev = cj;
    }
    best.max(band.lo(1.0) - prev)
}

/// Distance from the empirical law to the realizable set of `N(θ, σ²)`
/// over half-line events.
pub fn band_distance_mean(ecdf: &EmpiricalCdf, theta: f64, sigma: f64, params: &ContaminationParams) -> f64 {
    let (l, u) = params.likelihood_band();
    band_sup(ecdf, 1.0, |x| norm_cdf((x - theta) / sigma), &Linear { l, u })
}

/// As [`band_distance_mean`] for the observed-conditional law: `F̂/F̂(∞)`
/// against the conditional band.
pub fn conditional_band_distance_mean(ecdf: &EmpiricalCdf, theta: f64, sigma: f64, params: &ContaminationParams) -> f64 {
    let (l, u) = params.likelihood_band();
    let frac = ecdf.observed_fraction();
    if frac == 0.0 {
        return 1.0;
    }
    band_sup(ecdf, 1.0 / frac, |x| norm_cdf((x - theta) / sigma), &Conditional { l, u })
}

/// Base CDF of `σ²G²` evaluated at `r ≥ 0`.
fn chi2_scaled_cdf(r: f64, sigma: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    libm::erf(r.sqrt() / sigma * FRAC_1_SQRT_2)
}

/// Distance between the squared data and the realizable set of `σ²·χ²₁`.
/// `squared` must hold squared observations.
pub fn band_distance_variance(squared: &EmpiricalCdf, sigma2: f64, params: &ContaminationParams) -> f64 {
    let (l, u) = params.likelihood_band();
    let s = sigma2.sqrt();
    band_sup(squared, 1.0, |r| chi2_scaled_cdf(r, s), &Linear { l, u })
}

/// `3·√(U·log(1/δ)/n)`.
pub fn dkw_threshold(params: &ContaminationParams, n: usize, delta: f64) -> f64 {
    3.0 * (params.upper() * (1.0 / delta).ln() / n as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchConfig {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub grid_points: usize,
    /// Golden-section stopping width, in units of σ.
    pub refine_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { lo: None, hi: None, grid_points: 512, refine_tol: 1e-8 }
    }
}

/// Grid scan then golden-section refinement in the best bracket. Ties on the
/// grid go to the smallest θ.
fn argmin_scan(objective: impl Fn(f64) -> f64, lo: f64, hi: f64, cfg: &SearchConfig, scale: f64) -> f64 {
    let k = cfg.grid_points.max(3);
    let step = (hi - lo) / (k - 1) as f64;
    let grid: Vec<f64> = (0..k).map(|i| lo + step * i as f64).collect();
    let mut best = (f64::INFINITY, 0usize);
    for (i, &t) in grid.iter().enumerate() {
        let v = objective(t);
        if v < best.0 {
            best = (v, i);
        }
    }
    let i = best.1;
    let (mut a, mut b) = (grid[i.saturating_sub(1)], grid[(i + 1).min(k - 1)]);
    let invphi = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - invphi * (b - a);
    let mut x2 = a + invphi * (b - a);
    let (mut f1, mut f2) = (objective(x1), objective(x2));
    while b - a > cfg.refine_tol * scale {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - invphi * (b - a);
            f1 = objective(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + invphi * (b - a);
            f2 = objective(x2);
        }
    }
    let (xr, fr) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    if fr <= best.0 { xr } else { grid[i] }
}

fn search_range(ecdf: &EmpiricalCdf, sigma: f64, cfg: &SearchConfig) -> Result<(f64, f64)> {
    let obs = ecdf.observed();
    let (first, last) = match (obs.first(), obs.last()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Err(Error::NoObservedData),
    };
    let lo = cfg.lo.unwrap_or(first - 4.0 * sigma);
    let hi = cfg.hi.unwrap_or(last + 4.0 * sigma);
    if !(lo < hi) {
        return Err(crate::error::domain(format!("empty search interval [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(crate::error::domain(format!("sigma must be positive, got {sigma}")))
    }
}

/// `argmin_θ d_K(R̂_n, R(N(θ,σ²), ε, q))`.
pub fn min_distance_mean(samples: &[Option<f64>], sigma: f64, params: &ContaminationParams, cfg: &SearchConfig) -> Result<f64> {
    check_sigma(sigma)?;
    let ecdf = EmpiricalCdf::from_options(samples)?;
    let (lo, hi) = search_range(&ecdf, sigma, cfg)?;
    Ok(argmin_scan(|t| band_distance_mean(&ecdf, t, sigma, params), lo, hi, cfg, sigma))
}

/// The conditional variant: only the observed-conditional law is matched.
pub fn min_distance_mean_conditional(samples: &[Option<f64>], sigma: f64, params: &ContaminationParams, cfg: &SearchConfig) -> Result<f64> {
    check_sigma(sigma)?;
    let ecdf = EmpiricalCdf::from_options(samples)?;
    let (lo, hi) = search_range(&ecdf, sigma, cfg)?;
    Ok(argmin_scan(|t| conditional_band_distance_mean(&ecdf, t, sigma, params), lo, hi, cfg, sigma))
}

/// Whether the heavy-contamination regime `τ > α^{-1/4}/20` holds, using the
/// one-dimensional rate.
pub fn heavy_contamination(params: &ContaminationParams, conf: &ConfidenceParams) -> bool {
    let alpha = conf.univariate_alpha(params);
    params.tau() > 0.05 * alpha.powf(-0.25)
}

/// Uses the conditional estimator in the heavy-contamination regime and the
/// unconditional one otherwise.
pub fn auto_mean_estimator(
    samples: &[Option<f64>],
    sigma: f64,
    params: &ContaminationParams,
    conf: &ConfidenceParams,
    cfg: &SearchConfig,
) -> Result<f64> {
    if heavy_contamination(params, conf) {
        min_distance_mean_conditional(samples, sigma, params, cfg)
    } else {
        min_distance_mean(samples, sigma, params, cfg)
    }
}

/// A one-dimensional mean estimate with the half-width of its feasibility set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectionalMean {
    pub theta: f64,
    /// Largest distance from `theta` to a parameter whose band distance is
    /// within the high-probability radius; the truth lies in that set on the
    /// good event, so this bounds the directional error.
    pub radius: f64,
    pub conditional: bool,
}

/// [`auto_mean_estimator`] together with the width of the sublevel set
/// `{θ : distance(θ) ≤ radius}` around the estimate. The radius is the DKW
/// threshold for the unconditional distance and `2√(log(1/δ)/(q(1-ε)n))` for
/// the conditional one.
pub fn auto_mean_with_radius(
    samples: &[Option<f64>],
    sigma: f64,
    params: &ContaminationParams,
    conf: &ConfidenceParams,
    cfg: &SearchConfig,
) -> Result<DirectionalMean> {
    check_sigma(sigma)?;
    let ecdf = EmpiricalCdf::from_options(samples)?;
    let (lo, hi) = search_range(&ecdf, sigma, cfg)?;
    let conditional = heavy_contamination(params, conf);
    let objective = |t: f64| {
        if conditional {
            conditional_band_distance_mean(&ecdf, t, sigma, params)
        } else {
            band_distance_mean(&ecdf, t, sigma, params)
        }
    };
    let theta = argmin_scan(objective, lo, hi, cfg, sigma);
    let n = ecdf.n_total();
    let level = if conditional {
        2.0 * ((1.0 / conf.delta).ln() / (params.lower() * n as f64)).sqrt()
    } else {
        dkw_threshold(params, n, conf.delta)
    };
    // If even the minimizer misses the level, the set degenerates to the point.
    let level = level.max(objective(theta));
    let edge = |dir: f64| {
        let inside = |t: f64| objective(t) <= level;
        let mut step = 0.01 * sigma;
        let mut a = theta;
        let mut b = theta + dir * step;
        while inside(b) {
            a = b;
            step *= 2.0;
            b = theta + dir * step;
            if (b - theta).abs() > (hi - lo) + 10.0 * sigma {
                return (b - theta).abs();
            }
        }
        for _ in 0..50 {
            let m = 0.5 * (a + b);
            if inside(m) {
                a = m;
            } else {
                b = m;
            }
        }
        (b - theta).abs()
    };
    let radius = edge(1.0).max(edge(-1.0));
    Ok(DirectionalMean { theta, radius, conditional })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceSearch {
    pub grid_points: usize,
    /// The log-grid spans `center · 10^{±decades}`.
    pub decades: f64,
    pub bisect_iters: usize,
    /// Return 0 in the heavy-contamination regime, as the case analysis does.
    pub zero_when_heavy: bool,
}

impl Default for VarianceSearch {
    fn default() -> Self {
        Self { grid_points: 200, decades: 4.0, bisect_iters: 60, zero_when_heavy: true }
    }
}

/// Median of `χ²₁`.
const CHI2_1_MEDIAN: f64 = 0.454_936_423_119_572_7;

/// `sup{σ² : d_K(R̂_n, R(σ²χ²₁, ε, q)) ≤ 3q(1-ε)α√(1+τ)}` computed on the
/// squared data. Returns 0 when nothing on the grid is feasible.
pub fn min_distance_variance(samples: &[Option<f64>], params: &ContaminationParams, conf: &ConfidenceParams, cfg: &VarianceSearch) -> Result<f64> {
    let squared: Vec<Option<f64>> = samples.iter().map(|x| x.map(|v| v * v)).collect();
    let ecdf = EmpiricalCdf::from_options(&squared)?;
    if ecdf.n_observed() == 0 {
        return Err(Error::NoObservedData);
    }
    if cfg.zero_when_heavy && heavy_contamination(params, conf) {
        return Ok(0.0);
    }
    let alpha = conf.univariate_alpha(params);
    let radius = 3.0 * params.lower() * alpha * (1.0 + params.tau()).sqrt();
    let obs = ecdf.observed();
    let med = obs[obs.len() / 2];
    let center = if med > 0.0 { med / CHI2_1_MEDIAN } else { obs.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE) };
    // Offsets are relative to `center` so that rescaling the data by c
    // rescales every candidate by exactly c².
    let k = cfg.grid_points.max(2);
    let span = cfg.decades * std::f64::consts::LN_10;
    let at = |i: usize| -span + 2.0 * span * i as f64 / (k - 1) as f64;
    let feasible = |off: f64| band_distance_variance(&ecdf, center * off.exp(), params) <= radius;
    let Some(top) = (0..k).rev().find(|&i| feasible(at(i))) else {
        return Ok(0.0);
    };
    if top == k - 1 {
        log::warn!("variance feasibility extends past the search grid; returning its upper end");
        return Ok(center * at(top).exp());
    }
    let (mut a, mut b) = (at(top), at(top + 1));
    for _ in 0..cfg.bisect_iters {
        let mid = 0.5 * (a + b);
        if feasible(mid) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(center * a.exp())
}
