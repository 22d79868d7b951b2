//! `realizable verify`: numerical membership checks for the configured model.

use crate::config::{Config, ModelSpec};
use crate::error::{CliError, CliResult};
use crate::simulate::simulate;
use realizable_core::adversary::{build_cov_hard_instance, build_mean_hard_instance, build_mean_hard_instance_with_radius, build_reg_hard_instance};
use realizable_core::kolmogorov::{band_distance_mean, dkw_threshold, EmpiricalCdf};
use realizable_core::model::{linspace, verify_membership};
use realizable_core::quad::integrate_pieces;
use realizable_core::sample::project_all;
use realizable_core::ContaminationParams;
use serde::Serialize;

const GRID_POINTS: usize = 4000;
const MEMBERSHIP_TOL: f64 = 1e-9;
const MASS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub value: f64,
    pub threshold: f64,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), ok: value <= threshold, value, threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub ok: bool,
    pub checks: Vec<Check>,
}

fn q_reduction(params: &ContaminationParams) -> Check {
    let (e2, q2) = params.reduce_to_q1();
    let gap = (q2 * (1.0 - e2) - params.lower()).abs();
    Check::at_most("q-reduction: q'(1-ε') = q(1-ε)", gap, 1e-15 * params.lower().max(1.0))
}

fn mass(f: impl Fn(f64) -> f64, radius: f64, span: f64) -> CliResult<f64> {
    Ok(integrate_pieces(f, -span, span, &[-radius, radius], 1e-12)?)
}

fn hard_checks(model: &ModelSpec, params: &ContaminationParams) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    match model {
        ModelSpec::MeanHard { gamma, radius, .. } => {
            let inst = match radius {
                Some(r) => build_mean_hard_instance_with_radius(*gamma, *r, params)?,
                None => build_mean_hard_instance(*gamma, params)?,
            };
            let grid = linspace(-inst.radius - 8.0, inst.radius + 8.0, GRID_POINTS);
            let rep = verify_membership(|x| inst.ratio(x), inst.b, params, &grid, MEMBERSHIP_TOL);
            out.push(Check::at_most("mean-hard membership", rep.worst_violation, MEMBERSHIP_TOL));
            let m = mass(|x| inst.density(x), inst.radius, inst.radius + 40.0)?;
            out.push(Check::at_most("mean-hard density mass", (m - 1.0).abs(), MASS_TOL));
        }
        ModelSpec::CovHard { gamma, .. } => {
            let inst = build_cov_hard_instance(*gamma, params)?;
            let grid = linspace(-inst.radius - 8.0, inst.radius + 8.0, GRID_POINTS);
            let rep = verify_membership(|x| inst.ratio(x), inst.b, params, &grid, MEMBERSHIP_TOL);
            out.push(Check::at_most("cov-hard membership", rep.worst_violation, MEMBERSHIP_TOL));
            let m = mass(|x| inst.density(x), inst.radius, inst.radius + 60.0)?;
            out.push(Check::at_most("cov-hard density mass", (m - 1.0).abs(), MASS_TOL));
        }
        ModelSpec::RegHard { gamma, r, .. } => {
            let inst = build_reg_hard_instance(*gamma, *r, params)?;
            let grid = linspace(-inst.big_r - 8.0, inst.big_r + 8.0, GRID_POINTS);
            let mut worst = 0.0f64;
            let mut worst_mass = 0.0f64;
            for t in linspace(-inst.r - 1.0, inst.r + 1.0, 41) {
                worst = worst.max(verify_membership(|y| inst.ratio(t, y), inst.b, params, &grid, MEMBERSHIP_TOL).worst_violation);
                let m = mass(|y| inst.density(t, y), inst.big_r, inst.big_r + gamma * t.abs() + 40.0)?;
                worst_mass = worst_mass.max((m - 1.0).abs());
            }
            out.push(Check::at_most("reg-hard membership", worst, MEMBERSHIP_TOL));
            out.push(Check::at_most("reg-hard density mass", worst_mass, MASS_TOL));
        }
        ModelSpec::Gaussian { .. } | ModelSpec::Regression { .. } => {}
    }
    Ok(out)
}

/// Simulates the configured data and checks that each marginal sits within
/// the DKW threshold of the realizable band around its true law.
fn sample_checks(cfg: &Config) -> CliResult<Vec<Check>> {
    let (data, _) = simulate(cfg)?;
    let delta = cfg.estimate.delta;
    let n = data.rows.len();
    let mut out = Vec::new();
    match &cfg.model {
        ModelSpec::Gaussian { mean, cov } => {
            let d = mean.len();
            for i in 0..d {
                let q = match &cfg.patterns {
                    Some(p) => p.sets.iter().zip(&p.weights).filter(|(s, _)| s.contains(&i)).map(|(_, w)| w).sum(),
                    None => cfg.contamination.q,
                };
                let params = ContaminationParams::new(cfg.contamination.epsilon, q)?;
                let sd = cov.as_ref().map_or(1.0, |c| c[i][i].sqrt());
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                let ecdf = EmpiricalCdf::from_options(&project_all(&data.rows, &e))?;
                let dist = band_distance_mean(&ecdf, mean[i], sd, &params);
                out.push(Check::at_most(format!("coordinate {} band distance", i + 1), dist, dkw_threshold(&params, n, delta / d as f64)));
            }
        }
        ModelSpec::Regression { theta, sigma } => {
            let params = cfg.contamination.params()?;
            let residuals: Vec<Option<f64>> = data
                .rows
                .iter()
                .map(|r| r.to_vec().map(|v| v[theta.len()] - theta.iter().zip(&v).map(|(t, x)| t * x).sum::<f64>()))
                .collect();
            let ecdf = EmpiricalCdf::from_options(&residuals)?;
            let dist = band_distance_mean(&ecdf, 0.0, *sigma, &params);
            out.push(Check::at_most("residual band distance", dist, dkw_threshold(&params, n, delta)));
        }
        _ => {}
    }
    Ok(out)
}

pub fn run_verify(cfg: &Config) -> CliResult<VerifyReport> {
    let params = cfg.contamination.params()?;
    let mut checks = vec![q_reduction(&params)];
    checks.extend(hard_checks(&cfg.model, &params)?);
    if cfg.n > 0 {
        checks.extend(sample_checks(cfg)?);
    } else if matches!(cfg.model, ModelSpec::Gaussian { .. } | ModelSpec::Regression { .. }) {
        return Err(CliError::Config("field `n`: verify simulates the configured model and needs n > 0".into()));
    }
    let ok = checks.iter().all(|c| c.ok);
    Ok(VerifyReport { ok, checks })
}
