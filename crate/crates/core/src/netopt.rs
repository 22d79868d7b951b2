//! Multivariate estimators assembled from one-dimensional ones along the
//! directions of a sphere net.

use crate::error::{Error, Result};
use crate::kolmogorov::{auto_mean_with_radius, min_distance_variance, SearchConfig, VarianceSearch};
use crate::linalg::{inv_sqrt, psd_clip, quad_form, symmetrize, SymmetricMatrix};
use crate::model::{ConfidenceParams, ContaminationParams};
use crate::net::{make_net, SphereNet};
use crate::sample::{project_all, MaskedSample};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetMeanConfig {
    pub search: SearchConfig,
    pub max_iters: usize,
    /// Stopping tolerance in units of σ.
    pub tol: f64,
}

impl Default for NetMeanConfig {
    fn default() -> Self {
        Self { search: SearchConfig::default(), max_iters: 20_000, tol: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetMeanEstimate {
    pub theta: Vec<f64>,
    /// `max_v |θᵀv - θ̂_v|` at the returned point.
    pub objective: f64,
    pub direction_estimates: Vec<f64>,
    pub direction_radii: Vec<f64>,
    /// Data-driven error bound `(objective + max_v r_v) / (1 - ρ²/2)`, valid
    /// when every directional feasibility set holds the truth and the net
    /// covers the sphere at radius ρ.
    pub error_radius: f64,
    pub conditional: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `max_v |θᵀv - m_v|` and the index attaining it.
fn minmax_objective(theta: &[f64], dirs: &[Vec<f64>], targets: &[f64]) -> (f64, usize, f64) {
    let mut best = (f64::NEG_INFINITY, 0, 1.0);
    for (i, (v, m)) in dirs.iter().zip(targets).enumerate() {
        let r = dot(theta, v) - m;
        if r.abs() > best.0 {
            best = (r.abs(), i, r.signum());
        }
    }
    best
}

/// Least-squares fit of `θ` to the directional targets.
fn least_squares_start(dirs: &[Vec<f64>], targets: &[f64], d: usize) -> Vec<f64> {
    let mut a = DMatrix::<f64>::zeros(d, d);
    let mut b = DVector::<f64>::zeros(d);
    for (v, m) in dirs.iter().zip(targets) {
        let vv = DVector::from_column_slice(v);
        a += &vv * vv.transpose();
        b += vv * *m;
    }
    match a.cholesky() {
        Some(c) => c.solve(&b).iter().copied().collect(),
        None => vec![0.0; d],
    }
}

/// Minimizes `max_v |θᵀv - m_v|` by subgradient steps toward a moving target
/// level: the step is Polyak's with the unknown optimum replaced by
/// `best - δ`, and `δ` halves whenever progress stalls.
pub fn minimize_max_abs(dirs: &[Vec<f64>], targets: &[f64], start: Vec<f64>, max_iters: usize, tol: f64) -> (Vec<f64>, f64) {
    let mut theta = start;
    let (f0, _, _) = minmax_objective(&theta, dirs, targets);
    let mut best_theta = theta.clone();
    let mut best = f0;
    let mut delta = 0.5 * f0.max(tol);
    let mut stall = 0;
    for _ in 0..max_iters {
        if delta < tol {
            break;
        }
        let (f, i, s) = minmax_objective(&theta, dirs, targets);
        if f < best - 0.5 * delta {
            stall = 0;
        } else {
            stall += 1;
        }
        if f < best {
            best = f;
            best_theta.clone_from(&theta);
        }
        if stall > 30 {
            delta *= 0.5;
            stall = 0;
            theta.clone_from(&best_theta);
            continue;
        }
        // The subgradient s·v has unit norm.
        let step = f - (best - delta);
        for (t, v) in theta.iter_mut().zip(&dirs[i]) {
            *t -= step * s * v;
        }
    }
    let (f, _, _) = minmax_objective(&theta, dirs, targets);
    if f < best {
        return (theta, f);
    }
    (best_theta, best)
}

/// Directional minimum-distance means along every net direction, combined
/// by the min-max program.
pub fn estimate_mean_net(
    samples: &[MaskedSample],
    sigma: f64,
    params: &ContaminationParams,
    conf: &ConfidenceParams,
    net: &SphereNet,
    cfg: &NetMeanConfig,
) -> Result<NetMeanEstimate> {
    let d = net.dim();
    if samples.iter().any(|s| s.dim() != d) {
        return Err(crate::error::domain("sample dimension does not match the net"));
    }
    let per_dir = conf.with_delta(conf.delta / net.len() as f64);
    let dirs = net.directions();
    let fits: Vec<_> = dirs
        .par_iter()
        .map(|v| auto_mean_with_radius(&project_all(samples, v), sigma, params, &per_dir, &cfg.search))
        .collect::<Result<_>>()?;
    let targets: Vec<f64> = fits.iter().map(|f| f.theta).collect();
    let radii: Vec<f64> = fits.iter().map(|f| f.radius).collect();
    let start = least_squares_start(dirs, &targets, d);
    let (theta, objective) = minimize_max_abs(dirs, &targets, start, cfg.max_iters, cfg.tol * sigma);
    let rho = net.radius();
    let shrink = 1.0 - rho * rho / 2.0;
    let rmax = radii.iter().copied().fold(0.0, f64::max);
    let error_radius = if shrink > 0.0 { (objective + rmax) / shrink } else { f64::INFINITY };
    Ok(NetMeanEstimate {
        theta,
        objective,
        direction_estimates: targets,
        direction_radii: radii,
        error_radius,
        conditional: fits.first().is_some_and(|f| f.conditional),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovConfig {
    pub variance: VarianceSearch,
    /// Multiplier on the feasibility slack γ.
    pub c2: f64,
    pub net_seed: u64,
    pub net_max_iters: usize,
    pub max_iters: usize,
}

impl Default for CovConfig {
    fn default() -> Self {
        Self { variance: VarianceSearch::default(), c2: 1.0, net_seed: 0, net_max_iters: 20_000, max_iters: 5_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovEstimate {
    pub sigma: SymmetricMatrix,
    /// Unnormalized second moment of the first half.
    pub sigma_tilde: SymmetricMatrix,
    pub whitening: SymmetricMatrix,
    pub net_size: usize,
    pub gamma: f64,
    pub direction_variances: Vec<f64>,
    /// Value of the hinge violation at the returned matrix (0 when feasible).
    pub violation: f64,
    pub iterations: usize,
}

/// Feasibility slack `C₂·log(1+τ) / log(1 + τ·√(n q(1-ε) / (d log(1/β) + log(8/δ))))`,
/// continued by its limit `C₂/K` at `τ = 0`.
pub fn cov_feasibility_slack(params: &ContaminationParams, n: usize, d: usize, beta: f64, delta: f64, c2: f64) -> f64 {
    let k = (n as f64 * params.lower() / (d as f64 * (1.0 / beta).ln() + (8.0 / delta).ln())).sqrt();
    let tau = params.tau();
    if tau == 0.0 {
        return c2 / k;
    }
    c2 * tau.ln_1p() / (tau * k).ln_1p()
}

/// `(2/n)·Σ z zᵀ` over the observed rows of the first half, missing rows counting as zero.
pub fn unnormalized_second_moment(samples: &[MaskedSample], d: usize) -> SymmetricMatrix {
    let mut s = DMatrix::<f64>::zeros(d, d);
    for z in samples.iter().filter_map(MaskedSample::to_vec) {
        let v = DVector::from_column_slice(&z);
        s += &v * v.transpose();
    }
    if !samples.is_empty() {
        s /= samples.len() as f64;
    }
    symmetrize(&s)
}

/// Least-squares symmetric `S` with `vᵀ S v ≈ s_v` over the directions.
fn fit_quadratic_forms(dirs: &[Vec<f64>], values: &[f64], d: usize) -> SymmetricMatrix {
    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
    let p = pairs.len();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for (v, s) in dirs.iter().zip(values) {
        let feat = DVector::from_iterator(p, pairs.iter().map(|&(i, j)| if i == j { v[i] * v[i] } else { 2.0 * v[i] * v[j] }));
        a += &feat * feat.transpose();
        b += feat * *s;
    }
    let coef = a.clone().cholesky().map(|c| c.solve(&b)).unwrap_or_else(|| DVector::zeros(p));
    let mut m = DMatrix::<f64>::zeros(d, d);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        m[(i, j)] = coef[k];
        m[(j, i)] = coef[k];
    }
    m
}

/// `max_v (|vᵀSv - s_v| - γ vᵀSv)₊` with the maximizing index and subgradient sign.
fn hinge(s: &SymmetricMatrix, dirs: &[Vec<f64>], targets: &[f64], gamma: f64) -> (f64, usize, f64) {
    let mut best = (0.0, usize::MAX, 0.0);
    for (i, (v, t)) in dirs.iter().zip(targets).enumerate() {
        let q = quad_form(s, v);
        let val = (q - t).abs() - gamma * q;
        if val > best.0 {
            let sign = if q >= *t { 1.0 - gamma } else { -1.0 - gamma };
            best = (val, i, sign);
        }
    }
    best
}

/// Two-step covariance estimate: whiten by the first half's second moment,
/// estimate variances along net directions on the second half, then find a
/// PSD matrix consistent with them up to relative slack γ.
pub fn estimate_cov_two_step(samples: &[MaskedSample], params: &ContaminationParams, conf: &ConfidenceParams, cfg: &CovConfig) -> Result<CovEstimate> {
    let n = samples.len();
    if n < 2 {
        return Err(crate::error::domain("covariance estimation needs n >= 2"));
    }
    let d = samples[0].dim();
    let (first, second) = samples.split_at(n / 2);
    let sigma_tilde = unnormalized_second_moment(first, d);
    let m = inv_sqrt(&sigma_tilde)?;
    let m_inv = crate::linalg::sqrt_pd(&sigma_tilde)?;
    let white: Vec<MaskedSample> = second
        .iter()
        .map(|z| match z.to_vec() {
            Some(x) => MaskedSample::observed((&m * DVector::from_column_slice(&x)).iter().copied().collect()),
            None => MaskedSample::missing(d),
        })
        .collect();
    let beta = 1.0 / (16.0 * (1.0 + params.tau()).sqrt());
    let net = make_net(d, beta, cfg.net_seed, cfg.net_max_iters)?;
    let dirs = net.directions();
    let per_dir = ConfidenceParams { n: white.len(), d, delta: conf.delta / (2.0 * net.len() as f64) };
    let vars: Vec<f64> = dirs
        .par_iter()
        .map(|v| min_distance_variance(&project_all(&white, v), params, &per_dir, &cfg.variance))
        .collect::<Result<_>>()?;
    let gamma = cov_feasibility_slack(params, n, d, beta, conf.delta, cfg.c2);

    let mut s = psd_clip(&fit_quadratic_forms(dirs, &vars, d));
    let (mut best_val, _, _) = hinge(&s, dirs, &vars, gamma);
    let mut best = s.clone();
    let mut iterations = 0;
    while best_val > 0.0 && iterations < cfg.max_iters {
        iterations += 1;
        let (val, i, sign) = hinge(&s, dirs, &vars, gamma);
        if val <= 0.0 {
            best_val = 0.0;
            best = s.clone();
            break;
        }
        // Polyak step toward the feasible level 0; the subgradient sign·vvᵀ has Frobenius norm |sign|.
        let step = val / (sign * sign);
        let v = DVector::from_column_slice(&dirs[i]);
        s = psd_clip(&(s - (&v * v.transpose()) * (step * sign)));
        let (nv, _, _) = hinge(&s, dirs, &vars, gamma);
        if nv < best_val {
            best_val = nv;
            best = s.clone();
        }
    }
    if best_val > 0.0 {
        log::info!("covariance recovery stopped with hinge violation {best_val:.3e}");
    }
    let sigma = symmetrize(&(&m_inv * best * &m_inv));
    Ok(CovEstimate {
        sigma,
        sigma_tilde,
        whitening: m,
        net_size: net.len(),
        gamma,
        direction_variances: vars,
        violation: best_val,
        iterations,
    })
}

/// `‖Σ*^{-1/2} Σ̂ Σ*^{-1/2} - I‖_op`.
pub fn relative_op_error(sigma_hat: &SymmetricMatrix, sigma_star: &SymmetricMatrix) -> Result<f64> {
    let w = inv_sqrt(sigma_star).map_err(|_| Error::Singular("reference covariance is not positive definite".into()))?;
    let d = sigma_star.nrows();
    let e = &w * sigma_hat * &w - DMatrix::<f64>::identity(d, d);
    Ok(crate::linalg::op_norm(&symmetrize(&e)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adversary::{gaussian_sampler, generate_all_or_nothing, Adversary};
    use proptest::prelude::*;

    fn p(e: f64) -> ContaminationParams {
        ContaminationParams::new(e, 1.0).unwrap()
    }

    #[test]
    fn relative_error_identities() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        assert!(relative_op_error(&s, &s).unwrap() < 1e-12);
        assert!((relative_op_error(&(&s * 2.0), &s).unwrap() - 1.0).abs() < 1e-12);
        assert!((relative_op_error(&DMatrix::zeros(2, 2), &s).unwrap() - 1.0).abs() < 1e-12);
        assert!(relative_op_error(&s, &DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn orthogonal_invariance_at_identity() {
        let c = 0.3f64.cos();
        let sn = 0.3f64.sin();
        let r = DMatrix::from_row_slice(2, 2, &[c, -sn, sn, c]);
        let sh = DMatrix::from_row_slice(2, 2, &[1.3, 0.2, 0.2, 0.7]);
        let id = DMatrix::<f64>::identity(2, 2);
        let a = relative_op_error(&sh, &id).unwrap();
        let b = relative_op_error(&(&r * &sh * r.transpose()), &(&r * &id * r.transpose())).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn minmax_solver_reaches_lp_optimum() {
        // Targets from a fixed θ plus alternating perturbations ±0.1: the
        // optimum is at most 0.1, and exactly 0.1 when opposite directions
        // carry opposite signs.
        let net = SphereNet::axes(2);
        let theta = [1.0, -2.0];
        let targets: Vec<f64> = net.directions().iter().map(|v| dot(&theta, v) + 0.1).collect();
        let (t, f) = minimize_max_abs(net.directions(), &targets, vec![0.0, 0.0], 20_000, 1e-9);
        assert!((f - 0.1).abs() < 1e-8, "{f}");
        assert!((t[0] - 1.0).abs() < 1e-7 && (t[1] + 2.0).abs() < 1e-7);
    }

    #[test]
    fn clean_mean_net() {
        let mu = vec![1.0, -2.0, 0.5];
        let base = gaussian_sampler(mu.clone(), None);
        let data = generate_all_or_nothing(&base, &p(0.0), &Adversary::RevealAll, 100_000, 3);
        let net = make_net(3, 0.5, 1, 10_000).unwrap();
        let conf = ConfidenceParams::new(data.len(), 3, 0.05).unwrap();
        let est = estimate_mean_net(&data, 1.0, &p(0.0), &conf, &net, &NetMeanConfig::default()).unwrap();
        let err = est.theta.iter().zip(&mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err <= 0.05, "{err}");
        let oracle = net.directions().iter().zip(&est.direction_estimates).map(|(v, m)| (dot(&mu, v) - m).abs()).fold(0.0, f64::max);
        assert!(est.objective <= oracle + 1e-6);
        assert!(err <= 4.0 * oracle + 4e-6);
        assert!(err <= est.error_radius);
    }

    #[test]
    fn coordinate_swap_equivariance_is_exact() {
        let base = gaussian_sampler(vec![0.3, -0.2], None);
        let data = generate_all_or_nothing(&base, &p(0.2), &Adversary::CensorAll, 3000, 5);
        let swapped: Vec<MaskedSample> = data.iter().map(|s| MaskedSample::new(vec![s.get(1), s.get(0)]).unwrap()).collect();
        let net = make_net(2, 0.5, 2, 10_000).unwrap();
        let perm = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let conf = ConfidenceParams::new(data.len(), 2, 0.05).unwrap();
        let a = estimate_mean_net(&data, 1.0, &p(0.2), &conf, &net, &NetMeanConfig::default()).unwrap();
        let b = estimate_mean_net(&swapped, 1.0, &p(0.2), &conf, &net.rotated(&perm), &NetMeanConfig::default()).unwrap();
        assert_eq!(a.theta, vec![b.theta[1], b.theta[0]]);
    }

    #[test]
    fn rotation_equivariance() {
        let base = gaussian_sampler(vec![0.3, -0.2], None);
        let data = generate_all_or_nothing(&base, &p(0.0), &Adversary::RevealAll, 2000, 6);
        let (c, s) = (0.6, 0.8);
        let rot = vec![vec![c, -s], vec![s, c]];
        let rotated: Vec<MaskedSample> = data
            .iter()
            .map(|z| {
                let x = z.to_vec().unwrap();
                MaskedSample::observed(vec![c * x[0] - s * x[1], s * x[0] + c * x[1]])
            })
            .collect();
        let net = make_net(2, 0.5, 4, 10_000).unwrap();
        let conf = ConfidenceParams::new(data.len(), 2, 0.05).unwrap();
        let cfg = NetMeanConfig::default();
        let a = estimate_mean_net(&data, 1.0, &p(0.0), &conf, &net, &cfg).unwrap();
        let b = estimate_mean_net(&rotated, 1.0, &p(0.0), &conf, &net.rotated(&rot), &cfg).unwrap();
        let ra = [c * a.theta[0] - s * a.theta[1], s * a.theta[0] + c * a.theta[1]];
        assert!((ra[0] - b.theta[0]).abs() < 1e-5 && (ra[1] - b.theta[1]).abs() < 1e-5, "{ra:?} {:?}", b.theta);
    }

    #[test]
    fn slack_limits() {
        let g0 = cov_feasibility_slack(&p(0.0), 100_000, 2, 1.0 / 16.0, 0.05, 1.0);
        let g1 = cov_feasibility_slack(&p(1e-9), 100_000, 2, 1.0 / 16.0, 0.05, 1.0);
        assert!((g0 - g1).abs() < 1e-6);
        assert!(cov_feasibility_slack(&p(0.3), 100_000, 2, 0.05, 0.05, 1.0) > g0);
    }

    #[test]
    fn identity_covariance_recovery() {
        let base = gaussian_sampler(vec![0.0, 0.0], None);
        let data = generate_all_or_nothing(&base, &p(0.0), &Adversary::RevealAll, 100_000, 8);
        let conf = ConfidenceParams::new(data.len(), 2, 0.05).unwrap();
        let est = estimate_cov_two_step(&data, &p(0.0), &conf, &CovConfig::default()).unwrap();
        let err = relative_op_error(&est.sigma, &DMatrix::identity(2, 2)).unwrap();
        assert!(err < 0.2, "{err}");
        assert!(crate::linalg::min_eigenvalue(&est.sigma) >= -1e-12);
    }

    #[test]
    fn second_moment_counts_missing_rows() {
        let rows = vec![MaskedSample::observed(vec![2.0, 0.0]), MaskedSample::missing(2)];
        let s = unnormalized_second_moment(&rows, 2);
        assert_eq!(s[(0, 0)], 2.0);
        assert_eq!(s[(1, 1)], 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn minmax_best_is_no_worse_than_start(
            targets in proptest::collection::vec(-5.0f64..5.0, 4),
            x in -3.0f64..3.0, y in -3.0f64..3.0,
        ) {
            let net = SphereNet::axes(2);
            let start = vec![x, y];
            let (f0, _, _) = minmax_objective(&start, net.directions(), &targets);
            let (_, f) = minimize_max_abs(net.directions(), &targets, start, 5_000, 1e-9);
            prop_assert!(f <= f0 + 1e-12);
            // Optimum of this separable problem: max over axes of half the gap.
            let opt = (0.5 * (targets[0] + targets[1])).abs().max((0.5 * (targets[2] + targets[3])).abs());
            prop_assert!(f <= opt + 1e-6);
        }
    }
}
