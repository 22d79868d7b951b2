//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Every criterion is computed from scratch here; reference values come from
//! oracles written in this file (grid linear program, Simpson quadrature,
//! finite differences, exact rationals, normal equations) rather than from
//! the code under test.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng as _;
use rayon::prelude::*;
use realizable_cli::bench::run_bench;
use realizable_cli::config::parse_config;
use realizable_cli::simulate::simulate;
use realizable_core::adversary::{
    build_cov_hard_instance, build_mean_hard_instance, build_reg_hard_instance, gaussian_sampler, generate_all_or_nothing, regression_sampler, Adversary,
    Statistic, Tail,
};
use realizable_core::kolmogorov::{band_distance_mean, dkw_threshold, EmpiricalCdf};
use realizable_core::model::{linspace, verify_membership, DiscreteObservation};
use realizable_core::model::{lift_discrete, ratios_within, reduce_discrete, reduce_exact};
use realizable_core::momenttest::{moment_feasible_mean, test_mean_shift, Decision, MomentMeanConfig};
use realizable_core::netopt::{estimate_cov_two_step, CovConfig};
use realizable_core::patterns::{estimate_mean_multipattern, generate_multipattern, MultiMeanConfig};
use realizable_core::polyreg::{choose_k, fit, gradient, hessian, loss, FitConfig};
use realizable_core::rng::rng_for;
use realizable_core::sample::project_all;
use realizable_core::{make_net, ConfidenceParams, ContaminationParams, MaskedSample, PatternSet, RegressionData};
use statrs::distribution::{ContinuousCDF, Normal};
use std::time::{Duration, Instant};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len();
    if m % 2 == 1 {
        s[m / 2]
    } else {
        0.5 * (s[m / 2 - 1] + s[m / 2])
    }
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn params(eps: f64, q: f64) -> ContaminationParams {
    ContaminationParams::new(eps, q).unwrap()
}

fn within(limit_s: f64, elapsed: Duration) -> bool {
    elapsed.as_secs_f64() < limit_s
}

/// Composite Simpson over `[a, b]` with `2m` panels. The end values are the
/// one-sided limits from inside the interval, so a jump at `a` or `b` does
/// not leak in from the neighbouring piece.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let n = 2 * m;
    let h = (b - a) / n as f64;
    let nudge = |x: f64| 1e-13 * (1.0 + x.abs());
    let mut s = f(a + nudge(a)) + f(b - nudge(b));
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Mass of a density that is smooth on `(-∞,-r]`, `[-r,r]` and `[r,∞)`.
fn piecewise_mass(f: impl Fn(f64) -> f64 + Copy, r: f64, reach: f64) -> f64 {
    simpson(f, -reach, -r, 40_000) + simpson(f, -r, r, 40_000) + simpson(f, r, reach, 40_000)
}

fn c1_hard_instances() -> Verdict {
    let start = Instant::now();
    let mut worst_violation = 0.0f64;
    let mut worst_mass = 0.0f64;
    let mut count = 0;
    for tau in [0.25f64, 1.0, 4.0] {
        let pr = params(tau / (1.0 + tau), 1.0);
        let lt = (1.0 + tau).ln();
        // Mean: admissible iff 2γ ≤ log(1+τ)/(8γ).
        let g_max = (lt / 16.0).sqrt();
        for gamma in [0.5 * g_max, 0.999 * g_max] {
            let inst = build_mean_hard_instance(gamma, &pr).unwrap();
            let grid = linspace(-inst.radius - 8.0, inst.radius + 8.0, 4000);
            worst_violation = worst_violation.max(verify_membership(|x| inst.ratio(x), inst.b, &pr, &grid, 1e-9).worst_violation);
            worst_mass = worst_mass.max((piecewise_mass(|x| inst.density(x), inst.radius, inst.radius + 40.0) - 1.0).abs());
            count += 1;
        }
        for gamma in [0.5 * tau, tau] {
            let inst = build_cov_hard_instance(gamma, &pr).unwrap();
            let grid = linspace(-inst.radius - 8.0, inst.radius + 8.0, 4000);
            worst_violation = worst_violation.max(verify_membership(|x| inst.ratio(x), inst.b, &pr, &grid, 1e-9).worst_violation);
            worst_mass = worst_mass.max((piecewise_mass(|x| inst.density(x), inst.radius, inst.radius + 60.0) - 1.0).abs());
            count += 1;
        }
        // Regression: admissible iff γ²r² ≤ log(1+τ)/2.
        let gamma = 0.5;
        let inst = build_reg_hard_instance(gamma, 0.99 * (0.5 * lt).sqrt() / gamma, &pr).unwrap();
        let grid = linspace(-inst.big_r - 8.0, inst.big_r + 8.0, 4000);
        for t in linspace(-inst.r - 1.0, inst.r + 1.0, 41) {
            worst_violation = worst_violation.max(verify_membership(|y| inst.ratio(t, y), inst.b, &pr, &grid, 1e-9).worst_violation);
            let reach = inst.big_r + gamma * t.abs() + 40.0;
            worst_mass = worst_mass.max((piecewise_mass(|y| inst.density(t, y), inst.big_r, reach) - 1.0).abs());
        }
        count += 1;
    }
    let el = start.elapsed();
    verdict(
        worst_violation <= 1e-9 && worst_mass <= 1e-8 && within(10.0, el),
        format!("{count} instances, worst band violation {worst_violation:.2e} (≤ 1e-9), worst |mass-1| {worst_mass:.2e} (≤ 1e-8), {:.1} s (< 10 s)", el.as_secs_f64()),
    )
}

fn c2_kolmogorov_feasibility() -> Verdict {
    let start = Instant::now();
    let pr = params(0.3, 1.0);
    let n = 10_000;
    let thr = dkw_threshold(&pr, n, 0.01);
    let adversaries = [
        Adversary::TailCensor { statistic: Statistic::Coordinate(0), tail: Tail::Upper, fraction: 0.5 },
        Adversary::TailCensor { statistic: Statistic::Coordinate(0), tail: Tail::Lower, fraction: 0.5 },
        Adversary::Threshold { statistic: Statistic::AbsProjection(vec![1.0]), tail: Tail::Upper, cutoff: 1.0 },
        Adversary::Threshold { statistic: Statistic::AbsProjection(vec![1.0]), tail: Tail::Lower, cutoff: 1.0 },
        Adversary::CensorAll,
        Adversary::RevealAll,
    ];
    let inside: usize = (0..200u64)
        .into_par_iter()
        .map(|seed| {
            let adv = &adversaries[seed as usize % adversaries.len()];
            let rows = generate_all_or_nothing(gaussian_sampler(vec![0.0], None), &pr, adv, n, 1000 + seed);
            let ecdf = EmpiricalCdf::from_samples(&rows).unwrap();
            usize::from(band_distance_mean(&ecdf, 0.0, 1.0, &pr) <= thr)
        })
        .sum();
    let el = start.elapsed();
    verdict(inside >= 196 && within(60.0, el), format!("{inside}/200 runs within dkw_threshold = {thr:.4} (need ≥ 196), {:.1} s (< 60 s)", el.as_secs_f64()))
}

/// `min t` such that some nondecreasing `H` satisfies
/// `max(lo_i, F_i - t) ≤ H_i ≤ min(hi_i, F_i + t)` at every grid point.
/// For fixed `t` the smallest feasible chain is built greedily, so
/// feasibility is exact and `t` is found by bisection.
fn lp_projection_distance(f: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    let feasible = |t: f64| {
        let mut h = f64::NEG_INFINITY;
        for i in 0..f.len() {
            h = h.max(lo[i]).max(f[i] - t);
            if h > hi[i].min(f[i] + t) {
                return false;
            }
        }
        true
    };
    let (mut a, mut b) = (0.0, 1.0);
    if feasible(0.0) {
        return 0.0;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if feasible(m) {
            b = m;
        } else {
            a = m;
        }
    }
    b
}

fn c3_band_oracle() -> Verdict {
    let mut rng = rng_for(3, &[]);
    let std = Normal::new(0.0, 1.0).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let atoms = rng.random_range(1..=20usize);
        let mut obs: Vec<f64> = (0..atoms).map(|_| (rng.random::<f64>() * 6.0 - 3.0) * 1.5).collect();
        if atoms > 2 && rng.random::<f64>() < 0.3 {
            obs[1] = obs[0];
        }
        let missing = rng.random_range(0..=10usize);
        let pr = params(rng.random::<f64>() * 0.9, 0.1 + 0.9 * rng.random::<f64>());
        let (theta, sigma) = (rng.random::<f64>() * 2.0 - 1.0, 0.5 + 1.5 * rng.random::<f64>());
        let got = band_distance_mean(&EmpiricalCdf::new(obs.clone(), missing).unwrap(), theta, sigma, &pr);

        let total = (obs.len() + missing) as f64;
        let mut pts = obs.clone();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let (l, u) = (pr.lower(), pr.upper());
        let (mut f, mut lo, mut hi) = (vec![0.0], vec![0.0], vec![0.0]);
        for &x in &pts {
            let g = std.cdf((x - theta) / sigma);
            let below = obs.iter().filter(|&&o| o < x).count() as f64 / total;
            let upto = obs.iter().filter(|&&o| o <= x).count() as f64 / total;
            for v in [below, upto] {
                f.push(v);
                lo.push(l * g);
                hi.push(u * g);
            }
        }
        f.push(obs.len() as f64 / total);
        lo.push(l);
        hi.push(u);
        worst = worst.max((got - lp_projection_distance(&f, &lo, &hi)).abs());
    }
    verdict(worst <= 1e-9, format!("500 instances, max |band distance - LP distance| = {worst:.2e} (≤ 1e-9)"))
}

fn c4_consistency() -> Verdict {
    let start = Instant::now();
    let cfg = parse_config(
        r#"{"schema_version": 1, "seed": 4,
            "model": {"kind": "gaussian", "mean": [1.0, -1.0]},
            "adversary": {"kind": "tail-censor", "statistic": {"kind": "projection", "v": [0.7071067811865476, 0.7071067811865476]}, "tail": "upper", "fraction": 0.5},
            "bench": {"task": "mean", "methods": ["net-mean"], "n": [1000, 10000, 100000], "epsilon": [0.3], "trials": 50}}"#,
    )
    .unwrap();
    let res = run_bench(&cfg).unwrap();
    let failed: usize = res.iter().map(|r| r.failures.len()).sum();
    let med: Vec<f64> = res.iter().map(|r| median(&r.losses)).collect();
    let el = start.elapsed();
    let decreasing = med.windows(2).all(|w| w[1] < w[0]);
    let ratio = med[2] / med[0];
    verdict(
        failed == 0 && decreasing && ratio <= 0.6 && within(600.0, el),
        format!(
            "net-mean medians n=1e3/1e4/1e5: {:.4} / {:.4} / {:.4}, strictly decreasing: {decreasing}, ratio {ratio:.3} (≤ 0.6), {failed} failed trials, {:.0} s (< 600 s)",
            med[0],
            med[1],
            med[2],
            el.as_secs_f64()
        ),
    )
}

fn c5_moment_mean() -> Verdict {
    let start = Instant::now();
    let eps = 0.2;
    let pr = params(eps, 1.0);
    let net = make_net(2, 0.5, 0, 20_000).unwrap();
    let adv = Adversary::TailCensor { statistic: Statistic::Coordinate(0), tail: Tail::Upper, fraction: 0.5 };
    let errors: Vec<(f64, f64)> = (0..20u64)
        .into_par_iter()
        .map(|seed| {
            let rows = generate_all_or_nothing(gaussian_sampler(vec![0.0, 0.0], None), &pr, &adv, 100_000, 500 + seed);
            let e1 = moment_feasible_mean(&rows, 1, &pr, &net, &MomentMeanConfig::default()).unwrap();
            let e4 = moment_feasible_mean(&rows, 4, &pr, &net, &MomentMeanConfig::default()).unwrap();
            (l2(&e1.theta, &[0.0, 0.0]), l2(&e4.theta, &[0.0, 0.0]))
        })
        .collect();
    let m1 = median(&errors.iter().map(|e| e.0).collect::<Vec<_>>());
    let m4 = median(&errors.iter().map(|e| e.1).collect::<Vec<_>>());
    let gamma = (1.2f64.powi(2) - 0.8f64.powi(3)) / 0.8f64.powi(2);
    let bound = |k: f64| 8.0 * ((gamma / k).sqrt() + gamma / k);
    let el = start.elapsed();
    verdict(
        m4 <= m1 && m1 <= bound(1.0) && m4 <= bound(4.0) && within(300.0, el),
        format!(
            "20 seeds, median error k=1 {m1:.4}, k=4 {m4:.4}; bounds {:.3} / {:.3} (γ = {gamma:.4}), {:.0} s (< 300 s)",
            bound(1.0),
            bound(4.0),
            el.as_secs_f64()
        ),
    )
}

fn random_regression(rng: &mut realizable_core::rng::Rng, n: usize, d: usize) -> RegressionData {
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect()).collect();
    let ys: Vec<f64> = xs.iter().map(|x| x.iter().sum::<f64>() * 0.5 + rng.random::<f64>() * 2.0 - 1.0).collect();
    RegressionData::new(xs, ys, n + n / 10, d).unwrap()
}

fn c6_gradient_hessian() -> Verdict {
    let mut rng = rng_for(6, &[]);
    let (mut worst_rel, mut worst_eig) = (0.0f64, f64::INFINITY);
    for _ in 0..100 {
        let d = rng.random_range(1..=6usize);
        let k = rng.random_range(1..=4u32);
        let data = random_regression(&mut rng, 60, d);
        let theta: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let g = gradient(&theta, &data, k).unwrap();
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for i in 0..d {
            let h = 1e-4 * theta[i].abs().max(1.0);
            let (mut a, mut b) = (theta.clone(), theta.clone());
            a[i] += h;
            b[i] -= h;
            let fd = (loss(&a, &data, k).unwrap() - loss(&b, &data, k).unwrap()) / (2.0 * h);
            diff2 += (g[i] - fd).powi(2);
            norm2 += fd * fd;
        }
        worst_rel = worst_rel.max(diff2.sqrt() / norm2.sqrt().max(1e-300));
        let hess = hessian(&theta, &data, k).unwrap();
        let scale = hess.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let min_eig = hess.symmetric_eigen().eigenvalues.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        worst_eig = worst_eig.min(min_eig / scale);
    }
    verdict(
        worst_rel <= 1e-5 && worst_eig >= -1e-9,
        format!("100 points, worst relative gradient error {worst_rel:.2e} (≤ 1e-5), smallest λ_min/scale {worst_eig:.3e} (≥ -1e-9)"),
    )
}

fn c7_regression_k_benefit() -> Verdict {
    let start = Instant::now();
    let (eps, d, n) = (0.3, 5, 50_000);
    let pr = params(eps, 1.0);
    let theta_star = vec![1.0, -1.0, 0.5, 0.0, 2.0];
    let norm = l2(&theta_star, &[0.0; 5]);
    let v: Vec<f64> = theta_star.iter().map(|t| t / norm).collect();
    // Hides contamination rows whose residual pushes the fit along v.
    let adv = Adversary::Threshold { statistic: Statistic::ResidualTimesProjection { theta: theta_star.clone(), v }, tail: Tail::Upper, cutoff: 0.0 };
    let conf = ConfidenceParams::new(n, d, 0.05).unwrap();
    let choice = choose_k(&conf, &pr, 0.1, 10.0);
    // The k = 4 fit is reported for context only; the verdict uses the chosen k.
    let errs: Vec<[f64; 3]> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let rows = generate_all_or_nothing(regression_sampler(theta_star.clone(), 1.0), &pr, &adv, n, 700 + seed);
            let data = RegressionData::from_samples(&rows).unwrap();
            let err = |k| l2(&fit(&data, k, &FitConfig::default()).unwrap().theta, &theta_star);
            [err(choice.k), err(1), err(4)]
        })
        .collect();
    let med = |i: usize| median(&errs.iter().map(|e| e[i]).collect::<Vec<_>>());
    let (mk, m1, m4) = (med(0), med(1), med(2));
    let el = start.elapsed();
    let formula = choice.formula.map_or("below the k = 1 cutoff".to_string(), |f| format!("floor {f}"));
    verdict(
        mk <= 0.5 * m1 && within(900.0, el),
        format!(
            "choose_k = {} ({formula}), median error at chosen k {mk:.4} vs k=1 {m1:.4}, ratio {:.3} (≤ 0.5); fixed k=4 {m4:.4}, {:.0} s (< 900 s)",
            choice.k,
            mk / m1,
            el.as_secs_f64()
        ),
    )
}

/// Normal equations solved by Gaussian elimination with partial pivoting.
fn normal_equations(data: &RegressionData) -> Vec<f64> {
    let d = data.dim();
    let mut a = vec![vec![0.0; d + 1]; d];
    for (x, y) in data.xs().iter().zip(data.ys()) {
        for i in 0..d {
            for j in 0..d {
                a[i][j] += x[i] * x[j];
            }
            a[i][d] += x[i] * y;
        }
    }
    for c in 0..d {
        let p = (c..d).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        for r in c + 1..d {
            let m = a[r][c] / a[c][c];
            for j in c..=d {
                a[r][j] -= m * a[c][j];
            }
        }
    }
    let mut x = vec![0.0; d];
    for r in (0..d).rev() {
        let s: f64 = (r + 1..d).map(|j| a[r][j] * x[j]).sum();
        x[r] = (a[r][d] - s) / a[r][r];
    }
    x
}

fn c8_k1_exact() -> Verdict {
    let mut rng = rng_for(8, &[]);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let d = rng.random_range(1..=6usize);
        let n = rng.random_range(d + 5..200);
        let data = random_regression(&mut rng, n, d);
        let f = fit(&data, 1, &FitConfig::default()).unwrap();
        let ls = normal_equations(&data);
        worst = worst.max(f.theta.iter().zip(&ls).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    verdict(worst <= 1e-8, format!("100 datasets, max |θ_fit - θ_LS| = {worst:.2e} (≤ 1e-8)"))
}

/// Eigenvalues of a symmetric 2×2 matrix `[[a, b], [b, c]]`.
fn eig2(a: f64, b: f64, c: f64) -> (f64, f64) {
    let m = 0.5 * (a + c);
    let r = (0.25 * (a - c).powi(2) + b * b).sqrt();
    (m - r, m + r)
}

fn c9_covariance() -> Verdict {
    let start = Instant::now();
    let chol = Some(vec![vec![1.0, 0.0], vec![0.0, 2.0]]);
    let clean = params(0.0, 1.0);
    let errs: Vec<f64> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let rows = generate_all_or_nothing(gaussian_sampler(vec![0.0, 0.0], chol.clone()), &clean, &Adversary::RevealAll, 200_000, 900 + seed);
            let conf = ConfidenceParams::new(rows.len(), 2, 0.05).unwrap();
            let e = estimate_cov_two_step(&rows, &clean, &conf, &CovConfig::default()).unwrap();
            // ‖Σ^{-1/2} Σ̂ Σ^{-1/2} - I‖ with Σ = diag(1, 4).
            let s = &e.sigma;
            let (lo, hi) = eig2(s[(0, 0)] - 1.0, s[(0, 1)] / 2.0, s[(1, 1)] / 4.0 - 1.0);
            lo.abs().max(hi.abs())
        })
        .collect();
    let med = median(&errs);

    let pr = params(0.3, 1.0);
    let (l, u) = (pr.lower(), pr.upper());
    let adversaries = [
        Adversary::TailCensor { statistic: Statistic::AbsProjection(vec![0.0, 1.0]), tail: Tail::Upper, fraction: 0.5 },
        Adversary::TailCensor { statistic: Statistic::AbsProjection(vec![1.0, 0.0]), tail: Tail::Lower, fraction: 0.5 },
        Adversary::CensorAll,
        Adversary::RevealAll,
    ];
    let held: usize = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let adv = &adversaries[seed as usize % adversaries.len()];
            let rows = generate_all_or_nothing(gaussian_sampler(vec![0.0, 0.0], chol.clone()), &pr, adv, 20_000, 1900 + seed);
            let conf = ConfidenceParams::new(rows.len(), 2, 0.05).unwrap();
            let e = estimate_cov_two_step(&rows, &pr, &conf, &CovConfig::default()).unwrap();
            let t = &e.sigma_tilde;
            let (lo, hi) = eig2(t[(0, 0)], t[(0, 1)] / 2.0, t[(1, 1)] / 4.0);
            usize::from(lo >= 0.5 * l && hi <= 2.0 * u)
        })
        .sum();
    let el = start.elapsed();
    verdict(
        med <= 0.1 && held >= 95,
        format!(
            "ε=0 median relative op error {med:.4} over 10 seeds (≤ 0.1); sandwich [{:.3}, {:.3}] held on {held}/100 seeds at ε=0.3 (≥ 95), {:.0} s",
            0.5 * l,
            2.0 * u,
            el.as_secs_f64()
        ),
    )
}

fn c10_separation_test() -> Verdict {
    let start = Instant::now();
    let (tau, k, rho) = (1.0f64, 3u32, 1.5);
    let pr = params(tau / (1.0 + tau), 1.0);
    let threshold = ((tau * tau + 2.0 * tau) / k as f64).sqrt();
    // Null: reveal the tails only, inflating the moment. Alternative: hide the tails.
    let null_adv = Adversary::Threshold { statistic: Statistic::AbsProjection(vec![1.0]), tail: Tail::Lower, cutoff: 2.0 };
    let alt_adv = Adversary::Threshold { statistic: Statistic::AbsProjection(vec![1.0]), tail: Tail::Upper, cutoff: 2.0 };
    let observed = |rows: &[MaskedSample]| project_all(rows, &[1.0]).into_iter().flatten().collect::<Vec<f64>>();
    let outcomes: Vec<(bool, bool)> = (0..100u64)
        .into_par_iter()
        .map(|seed| {
            let h0 = generate_all_or_nothing(gaussian_sampler(vec![0.0], None), &pr, &null_adv, 1_000_000, 3000 + seed);
            let h1 = generate_all_or_nothing(gaussian_sampler(vec![rho], None), &pr, &alt_adv, 1_000_000, 4000 + seed);
            let r0 = test_mean_shift(&observed(&h0), k, rho, &pr).unwrap().decision == Decision::H1;
            let r1 = test_mean_shift(&observed(&h1), k, rho, &pr).unwrap().decision == Decision::H1;
            (r0, r1)
        })
        .collect();
    let size = outcomes.iter().filter(|o| o.0).count() as f64 / 100.0;
    let power = outcomes.iter().filter(|o| o.1).count() as f64 / 100.0;
    verdict(
        power >= 0.9 && size <= 0.1,
        format!("ρ = {rho} = {:.2}× threshold, power {power:.2} (≥ 0.9), size {size:.2} (≤ 0.1), {:.0} s", rho / threshold, start.elapsed().as_secs_f64()),
    )
}

fn c11_q_reduction() -> Verdict {
    let mut rng = rng_for(11, &[]);
    let r = |num: i64, den: i64| BigRational::new(BigInt::from(num), BigInt::from(den));
    let one = r(1, 1);
    let (mut identity_ok, mut mixture_ok, mut band_ok) = (0, 0, 0);
    for _ in 0..1000 {
        let den = rng.random_range(2..10_000i64);
        let eps = r(rng.random_range(0..den), den);
        let q = r(rng.random_range(1..=den), den);
        let (e2, q2) = reduce_exact(eps.clone(), q.clone());
        identity_ok += usize::from(q2.clone() * (one.clone() - e2.clone()) == q.clone() * (one.clone() - eps.clone()));

        // A realizable law on a few atoms: MCAR part plus an adversarial reveal fraction per atom.
        let atoms = rng.random_range(1..6usize);
        let raw: Vec<i64> = (0..atoms).map(|_| rng.random_range(1..100)).collect();
        let total: i64 = raw.iter().sum();
        let p: Vec<BigRational> = raw.iter().map(|&w| r(w, total)).collect();
        let observed: Vec<BigRational> = p
            .iter()
            .map(|pj| {
                let reveal = r(rng.random_range(0..=20), 20);
                pj.clone() * (q.clone() * (one.clone() - eps.clone()) + eps.clone() * reveal)
            })
            .collect();
        let missing = one.clone() - observed.iter().cloned().fold(r(0, 1), |a, b| a + b);
        let dist = DiscreteObservation { observed, missing };
        let (e3, q3, reduced) = reduce_discrete(eps.clone(), q.clone(), &dist);
        band_ok += usize::from(ratios_within(&(one.clone() - e3), &one, &p, &reduced.observed));
        mixture_ok += usize::from(lift_discrete(q3, &reduced) == dist);
    }
    verdict(
        identity_ok == 1000 && mixture_ok == 1000 && band_ok == 1000,
        format!("exact rationals: identity {identity_ok}/1000, reduced law in its q=1 band {band_ok}/1000, mixture reconstruction {mixture_ok}/1000"),
    )
}

fn c12_multipattern() -> Verdict {
    let start = Instant::now();
    let eps = 0.1;
    let pr = params(eps, 1.0);
    let patterns = PatternSet::new(3, vec![vec![0, 1], vec![1, 2]], vec![0.5, 0.5]).unwrap();
    let truth = [0.5, -0.5, 1.0];
    let adv = Adversary::TailCensor { statistic: Statistic::Coordinate(1), tail: Tail::Upper, fraction: 0.5 };
    let outcomes: Vec<(f64, bool)> = (0..50u64)
        .into_par_iter()
        .map(|seed| {
            let rows = generate_multipattern(gaussian_sampler(truth.to_vec(), None), eps, &patterns, &adv, 20_000, 1200 + seed).unwrap();
            let conf = ConfidenceParams::new(rows.len(), 3, 0.05).unwrap();
            let e = estimate_mean_multipattern(&rows, &patterns, &pr, &conf, &MultiMeanConfig::default()).unwrap();
            let worst_violation = e.cylinders.iter().map(|c| c.violation(&e.theta)).fold(0.0, f64::max);
            let r_max = e.per_pattern.iter().map(|p| p.error_radius).fold(0.0, f64::max);
            let bound = 2.0 * (patterns.len() as f64).sqrt() * r_max;
            (worst_violation, l2(&e.theta, &truth) <= bound)
        })
        .collect();
    let worst = outcomes.iter().map(|o| o.0).fold(0.0, f64::max);
    let ok = outcomes.iter().filter(|o| o.1).count();
    verdict(
        worst <= 1e-8 && ok >= 45,
        format!("50 seeds, worst cylinder violation {worst:.2e} (≤ 1e-8), error ≤ 2√|S|·max r_S on {ok}/50 (≥ 45), {:.0} s", start.elapsed().as_secs_f64()),
    )
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn c13_determinism() -> Verdict {
    let configs = [
        r#"{"schema_version": 1, "seed": 13, "n": 3000, "model": {"kind": "gaussian", "mean": [0, 1], "cov": [[1, 0.3], [0.3, 2]]},
            "contamination": {"epsilon": 0.25, "q": 0.8},
            "adversary": {"kind": "tail-censor", "statistic": {"kind": "coordinate", "index": 1}, "tail": "upper", "fraction": 0.5}}"#,
        r#"{"schema_version": 1, "seed": 14, "n": 3000, "model": {"kind": "regression", "theta": [1, 2]},
            "contamination": {"epsilon": 0.3},
            "adversary": {"kind": "tail-censor", "statistic": {"kind": "ols-abs-residual"}, "tail": "upper", "fraction": 1.0}}"#,
        r#"{"schema_version": 1, "seed": 15, "n": 3000, "model": {"kind": "reg-hard", "d": 3, "gamma": 0.5, "r": 1.0}, "contamination": {"epsilon": 0.5}}"#,
        r#"{"schema_version": 1, "seed": 16, "n": 3000, "model": {"kind": "gaussian", "mean": [0, 0, 0]}, "contamination": {"epsilon": 0.2},
            "patterns": {"sets": [[0, 1], [1, 2]], "weights": [0.6, 0.4]}}"#,
    ];
    let mut sim_ok = 0;
    for text in configs {
        let cfg = parse_config(text).unwrap();
        let a = in_pool(1, || simulate(&cfg).unwrap().0.to_csv());
        let b = in_pool(4, || simulate(&cfg).unwrap().0.to_csv());
        let c = in_pool(7, || simulate(&cfg).unwrap().0.to_csv());
        sim_ok += usize::from(a == b && b == c);
    }
    let dir = tempfile::TempDir::new().unwrap();
    let bench_cfg = dir.path().join("bench.json");
    std::fs::write(
        &bench_cfg,
        r#"{"schema_version": 1, "seed": 17, "model": {"kind": "regression", "theta": [1, -1]},
            "adversary": {"kind": "tail-censor", "statistic": {"kind": "ols-abs-residual"}, "tail": "upper", "fraction": 1.0},
            "bench": {"task": "reg", "methods": ["polyreg"], "n": [400, 1600], "epsilon": [0.1, 0.3], "k": [1, 2, null], "trials": 8}}"#,
    )
    .unwrap();
    let tables: Vec<String> = ["1", "3", "8"]
        .iter()
        .map(|t| {
            let mut out = Vec::new();
            let code = realizable_cli::run(["realizable", "bench", "--config", bench_cfg.to_str().unwrap(), "--threads", t], &mut out, &mut std::io::sink());
            assert_eq!(code, 0);
            String::from_utf8(out).unwrap()
        })
        .collect();
    let bench_ok = tables.windows(2).all(|w| w[0] == w[1]) && tables[0].lines().count() == 13;
    verdict(
        sim_ok == configs.len() && bench_ok,
        format!("simulate identical across 1/4/7 threads for {sim_ok}/{} configs; bench table identical across 1/3/8 threads: {bench_ok}", configs.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 13] = [
        ("hard-instance validity", c1_hard_instances),
        ("Kolmogorov feasibility at the truth", c2_kolmogorov_feasibility),
        ("band distance equals LP projection distance", c3_band_oracle),
        ("consistency under constant contamination", c4_consistency),
        ("moment-feasibility mean", c5_moment_mean),
        ("regression gradient and Hessian", c6_gradient_hessian),
        ("regression k-benefit", c7_regression_k_benefit),
        ("k=1 equals least squares", c8_k1_exact),
        ("covariance two-step", c9_covariance),
        ("moment separation test", c10_separation_test),
        ("q-reduction", c11_q_reduction),
        ("multi-pattern mean", c12_multipattern),
        ("determinism", c13_determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = Vec::new();
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let v = run();
        println!("{} {id:>2} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
