//! Several missingness patterns: reduce each pattern to an all-or-nothing
//! problem on its coordinates, estimate there, and reconcile the pieces.

use crate::adversary::Adversary;
use crate::error::{domain, Error, Result};
use crate::linalg::{op_norm, psd_clip, symmetrize, SymmetricMatrix};
use crate::model::{ConfidenceParams, ContaminationParams};
use crate::net::make_net;
use crate::netopt::{estimate_cov_two_step, estimate_mean_net, CovConfig, CovEstimate, NetMeanConfig, NetMeanEstimate};
use crate::rng::{derive_seed, label, rng_for, Rng};
use crate::sample::MaskedSample;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    d: usize,
    patterns: Vec<Vec<usize>>,
    pi: Vec<f64>,
}

impl PatternSet {
    /// Patterns are 0-based coordinate subsets of `[d]`; they are sorted and
    /// deduplicated internally.
    pub fn new(d: usize, patterns: Vec<Vec<usize>>, pi: Vec<f64>) -> Result<Self> {
        if patterns.is_empty() || patterns.len() != pi.len() {
            return Err(domain("need one weight per pattern and at least one pattern"));
        }
        let mut clean = Vec::with_capacity(patterns.len());
        for mut s in patterns {
            s.sort_unstable();
            s.dedup();
            if s.is_empty() || s.iter().any(|&i| i >= d) {
                return Err(domain(format!("pattern {s:?} is empty or leaves [0, {d})")));
            }
            if clean.contains(&s) {
                return Err(domain(format!("pattern {s:?} repeated")));
            }
            clean.push(s);
        }
        if pi.iter().any(|&w| !(w >= 0.0)) || (pi.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(domain("pattern weights must be nonnegative and sum to 1"));
        }
        Ok(Self { d, patterns: clean, pi })
    }

    /// Single fully observed pattern.
    pub fn full(d: usize) -> Self {
        Self { d, patterns: vec![(0..d).collect()], pi: vec![1.0] }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn patterns(&self) -> &[Vec<usize>] {
        &self.patterns
    }

    pub fn weights(&self) -> &[f64] {
        &self.pi
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

/// Keeps the `S` coordinates of rows whose observed set is exactly `S`;
/// every other row becomes fully missing in `ℝ^{|S|}`.
pub fn censor_to_pattern(samples: &[MaskedSample], s: &[usize]) -> Result<Vec<MaskedSample>> {
    if s.is_empty() {
        return Err(domain("pattern must be nonempty"));
    }
    Ok(samples
        .iter()
        .map(|row| {
            let mask = row.mask();
            let exact = s.iter().all(|&i| i < mask.len()) && mask.iter().enumerate().all(|(i, &m)| m == s.contains(&i));
            if exact {
                MaskedSample::observed(s.iter().map(|&i| row.get(i).unwrap_or_default()).collect())
            } else {
                MaskedSample::missing(s.len())
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoverageReport {
    pub min_weight: bool,
    pub union: bool,
    pub pairwise: bool,
}

pub fn coverage_checks(patterns: &PatternSet, c0: f64) -> CoverageReport {
    let d = patterns.d;
    let min_weight = patterns.pi.iter().all(|&w| w > c0);
    let mut seen = vec![false; d];
    let mut pairs = vec![false; d * d];
    for s in &patterns.patterns {
        for &i in s {
            seen[i] = true;
            for &j in s {
                pairs[i * d + j] = true;
            }
        }
    }
    CoverageReport { min_weight, union: seen.iter().all(|&b| b), pairwise: pairs.iter().all(|&b| b) }
}

/// Groups coordinates by which patterns contain them. Classes are listed in
/// order of their smallest coordinate; coordinates in no pattern are dropped.
pub fn binary_signature_partition(patterns: &PatternSet) -> Vec<Vec<usize>> {
    let mut classes: Vec<(Vec<bool>, Vec<usize>)> = Vec::new();
    for i in 0..patterns.d {
        let sig: Vec<bool> = patterns.patterns.iter().map(|s| s.contains(&i)).collect();
        if !sig.iter().any(|&b| b) {
            continue;
        }
        match classes.iter_mut().find(|(s, _)| *s == sig) {
            Some((_, members)) => members.push(i),
            None => classes.push((sig, vec![i])),
        }
    }
    classes.into_iter().map(|(_, m)| m).collect()
}

/// Draws `n` rows from the multi-pattern model. Clean rows (probability
/// `1-ε`) get a pattern drawn from `π`. Contamination rows are revealed or
/// hidden by `adversary`; revealed ones also get a pattern from `π`, hidden
/// ones are fully missing.
pub fn generate_multipattern<F>(base: F, eps: f64, patterns: &PatternSet, adversary: &Adversary, n: usize, seed: u64) -> Result<Vec<MaskedSample>>
where
    F: Fn(&mut Rng) -> Vec<f64>,
{
    if !(0.0..1.0).contains(&eps) {
        return Err(domain("epsilon must lie in [0, 1)"));
    }
    let mut rng = rng_for(seed, &[label("multipattern")]);
    let m = if eps == 0.0 { n } else { Binomial::new(n as u64, 1.0 - eps).map_err(|e| domain(e.to_string()))?.sample(&mut rng) as usize };
    let pick = |rng: &mut Rng| {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (s, w) in patterns.patterns.iter().zip(&patterns.pi) {
            acc += w;
            if u < acc {
                return s.clone();
            }
        }
        patterns.patterns.last().cloned().unwrap_or_default()
    };
    let mask_to = |x: Vec<f64>, s: &[usize]| MaskedSample::new(x.into_iter().enumerate().map(|(i, v)| s.contains(&i).then_some(v)).collect());
    let mut out = Vec::with_capacity(n);
    for _ in 0..m {
        let x = base(&mut rng);
        let s = pick(&mut rng);
        out.push(mask_to(x, &s)?);
    }
    let slots: Vec<Vec<f64>> = (m..n).map(|_| base(&mut rng)).collect();
    let reveal = adversary.reveal(&slots);
    for (x, keep) in slots.into_iter().zip(reveal) {
        if keep {
            let s = pick(&mut rng);
            out.push(mask_to(x, &s)?);
        } else {
            out.push(MaskedSample::missing(patterns.d));
        }
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Cylinder `{θ : ‖θ_S - center‖ ≤ radius}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cylinder {
    pub coords: Vec<usize>,
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Cylinder {
    pub fn violation(&self, theta: &[f64]) -> f64 {
        let dist = self.coords.iter().zip(&self.center).map(|(&i, c)| (theta[i] - c).powi(2)).sum::<f64>().sqrt();
        (dist - self.radius).max(0.0)
    }

    /// Projects onto a ball of radius `radius·(1 - shrink)` in the `S` coordinates.
    fn project(&self, theta: &mut [f64], shrink: f64) {
        let dist = self.coords.iter().zip(&self.center).map(|(&i, c)| (theta[i] - c).powi(2)).sum::<f64>().sqrt();
        let r = self.radius * (1.0 - shrink);
        if dist > r {
            let t = r / dist;
            for (&i, c) in self.coords.iter().zip(&self.center) {
                theta[i] = c + t * (theta[i] - c);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionResult {
    pub theta: Vec<f64>,
    pub sweeps: usize,
    /// Largest distance to a cylinder at the returned point.
    pub residual: f64,
    /// Max violation recorded after each sweep.
    pub history: Vec<f64>,
}

/// Cyclic projections onto the cylinders. Each ball is shrunk by a relative
/// `1e-12` so that intersections with interior are reached in finitely many
/// sweeps.
pub fn alternating_projections(cylinders: &[Cylinder], start: Vec<f64>, max_sweeps: usize, tol: f64) -> ProjectionResult {
    let max_violation = |t: &[f64]| cylinders.iter().map(|c| c.violation(t)).fold(0.0, f64::max);
    let mut theta = start;
    let mut history = vec![max_violation(&theta)];
    let mut sweeps = 0;
    while history[sweeps] > tol && sweeps < max_sweeps {
        for c in cylinders {
            c.project(&mut theta, 1e-12);
        }
        sweeps += 1;
        history.push(max_violation(&theta));
    }
    let residual = history[sweeps];
    ProjectionResult { theta, sweeps, residual, history }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiMeanConfig {
    /// Known coordinate scale of the base law.
    pub sigma: f64,
    pub net_radius: f64,
    pub net_seed: u64,
    pub net_max_iters: usize,
    pub mean: NetMeanConfig,
    pub max_sweeps: usize,
    pub tol: f64,
}

impl Default for MultiMeanConfig {
    fn default() -> Self {
        Self { sigma: 1.0, net_radius: 0.5, net_seed: 0, net_max_iters: 20_000, mean: NetMeanConfig::default(), max_sweeps: 100_000, tol: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiMeanEstimate {
    pub theta: Vec<f64>,
    /// `2·√(Σ_S r_S²)`.
    pub bound: f64,
    pub per_pattern: Vec<NetMeanEstimate>,
    pub cylinders: Vec<Cylinder>,
    pub projection: ProjectionResult,
}

fn pattern_params(params: &ContaminationParams, w: f64) -> Result<ContaminationParams> {
    ContaminationParams::new(params.epsilon(), w)
}

/// Per-pattern net estimates at confidence `δ/|𝕊|`, reconciled by projecting
/// onto cylinders of radius `2r_S` around them. `params.q()` is ignored: the
/// observation probability of pattern `S` is its weight `π_S`.
pub fn estimate_mean_multipattern(
    samples: &[MaskedSample],
    patterns: &PatternSet,
    params: &ContaminationParams,
    conf: &ConfidenceParams,
    cfg: &MultiMeanConfig,
) -> Result<MultiMeanEstimate> {
    if !coverage_checks(patterns, 0.0).union {
        return Err(Error::Coverage("patterns do not cover every coordinate".into()));
    }
    let delta = conf.delta / patterns.len() as f64;
    let per_pattern: Vec<NetMeanEstimate> = patterns
        .patterns
        .par_iter()
        .zip(&patterns.pi)
        .enumerate()
        .map(|(idx, (s, &w))| {
            let local = censor_to_pattern(samples, s)?;
            let net = make_net(s.len(), cfg.net_radius, derive_seed(cfg.net_seed, &[idx as u64]), cfg.net_max_iters)?;
            let pc = ConfidenceParams::new(samples.len(), s.len(), delta)?;
            estimate_mean_net(&local, cfg.sigma, &pattern_params(params, w)?, &pc, &net, &cfg.mean)
        })
        .collect::<Result<_>>()?;
    let cylinders: Vec<Cylinder> = patterns
        .patterns
        .iter()
        .zip(&per_pattern)
        .map(|(s, e)| Cylinder { coords: s.clone(), center: e.theta.clone(), radius: 2.0 * e.error_radius })
        .collect();
    let d = patterns.d;
    let (mut sum, mut count) = (vec![0.0; d], vec![0usize; d]);
    for c in &cylinders {
        for (&i, v) in c.coords.iter().zip(&c.center) {
            sum[i] += v;
            count[i] += 1;
        }
    }
    let start: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect();
    let projection = alternating_projections(&cylinders, start, cfg.max_sweeps, cfg.tol);
    if projection.residual > cfg.tol {
        log::warn!("cylinder projections stopped with residual {:.3e}", projection.residual);
    }
    let bound = 2.0 * per_pattern.iter().map(|e| e.error_radius.powi(2)).sum::<f64>().sqrt();
    Ok(MultiMeanEstimate { theta: projection.theta.clone(), bound, per_pattern, cylinders, projection })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiCovEstimate {
    pub sigma: SymmetricMatrix,
    /// Averaged matrix before the PSD clip.
    pub stitched: SymmetricMatrix,
    pub clip_shift: f64,
    pub blocks: Vec<CovEstimate>,
    /// `γ_S/(1-γ_S)·‖Σ̂_S‖` per pattern.
    pub block_radii: Vec<f64>,
    /// `max_S ‖(Σ̂)_S - Σ̂_S‖_op`, the disagreement left after stitching.
    pub block_residual: f64,
    /// `min(d, 2^{|𝕊|})·max_S r_S`.
    pub bound: f64,
}

/// Per-pattern two-step estimates stitched by averaging each entry over the
/// patterns containing both coordinates, then clipped to the PSD cone.
pub fn estimate_cov_multipattern(
    samples: &[MaskedSample],
    patterns: &PatternSet,
    params: &ContaminationParams,
    conf: &ConfidenceParams,
    cfg: &CovConfig,
) -> Result<MultiCovEstimate> {
    if !coverage_checks(patterns, 0.0).pairwise {
        return Err(Error::Coverage("some coordinate pair is in no common pattern".into()));
    }
    let delta = conf.delta / patterns.len() as f64;
    let blocks: Vec<CovEstimate> = patterns
        .patterns
        .par_iter()
        .zip(&patterns.pi)
        .enumerate()
        .map(|(idx, (s, &w))| {
            let local = censor_to_pattern(samples, s)?;
            let pc = ConfidenceParams::new(samples.len(), s.len(), delta)?;
            let c = CovConfig { net_seed: derive_seed(cfg.net_seed, &[idx as u64]), ..*cfg };
            estimate_cov_two_step(&local, &pattern_params(params, w)?, &pc, &c)
        })
        .collect::<Result<_>>()?;
    let d = patterns.d;
    let mut sum = DMatrix::<f64>::zeros(d, d);
    let mut count = DMatrix::<f64>::zeros(d, d);
    for (s, b) in patterns.patterns.iter().zip(&blocks) {
        for (a, &i) in s.iter().enumerate() {
            for (c, &j) in s.iter().enumerate() {
                sum[(i, j)] += b.sigma[(a, c)];
                count[(i, j)] += 1.0;
            }
        }
    }
    let stitched = symmetrize(&sum.component_div(&count));
    let sigma = psd_clip(&stitched);
    let clip_shift = op_norm(&(&sigma - &stitched));
    let block_radii: Vec<f64> = blocks
        .iter()
        .map(|b| if b.gamma < 1.0 { b.gamma / (1.0 - b.gamma) * op_norm(&b.sigma) } else { f64::INFINITY })
        .collect();
    let block_residual = patterns
        .patterns
        .iter()
        .zip(&blocks)
        .map(|(s, b)| op_norm(&(DMatrix::from_fn(s.len(), s.len(), |a, c| sigma[(s[a], s[c])]) - &b.sigma)))
        .fold(0.0, f64::max);
    let classes = (d as f64).min(2f64.powi(patterns.len() as i32));
    let bound = classes * block_radii.iter().copied().fold(0.0, f64::max);
    Ok(MultiCovEstimate { sigma, stitched, clip_shift, blocks, block_radii, block_residual, bound })
}
