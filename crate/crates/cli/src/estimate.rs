use crate::config::{Config, EstimateSpec, Task};
use crate::dataset::{Dataset, Truth};
use crate::error::{CliError, CliResult};
use realizable_core::kolmogorov::{auto_mean_with_radius, min_distance_variance, SearchConfig, VarianceSearch};
use realizable_core::momenttest::{moment_feasible_mean, MomentMeanConfig};
use realizable_core::netopt::{estimate_cov_two_step, estimate_mean_net, relative_op_error, CovConfig, NetMeanConfig};
use realizable_core::patterns::{estimate_cov_multipattern, estimate_mean_multipattern, MultiMeanConfig};
use realizable_core::polyreg::{choose_k, fit, FitConfig};
use realizable_core::sample::project_all;
use realizable_core::{make_net, ConfidenceParams, ContaminationParams, RegressionData, SymmetricMatrix};
use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Kolmogorov,
    NetMean,
    MomentMean,
    CovTwoStep,
    Polyreg,
    MultipatternMean,
    MultipatternCov,
}

impl Method {
    pub fn parse(s: &str) -> CliResult<Self> {
        <Self as clap::ValueEnum>::from_str(s, false).map_err(|_| CliError::Config(format!("unknown method `{s}`")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Kolmogorov => "kolmogorov",
            Method::NetMean => "net-mean",
            Method::MomentMean => "moment-mean",
            Method::CovTwoStep => "cov-two-step",
            Method::Polyreg => "polyreg",
            Method::MultipatternMean => "multipattern-mean",
            Method::MultipatternCov => "multipattern-cov",
        }
    }

    pub fn supports(&self, task: Task) -> bool {
        matches!(
            (self, task),
            (Method::Kolmogorov, Task::Mean | Task::Cov)
                | (Method::NetMean | Method::MomentMean | Method::MultipatternMean, Task::Mean)
                | (Method::CovTwoStep | Method::MultipatternCov, Task::Cov)
                | (Method::Polyreg, Task::Reg)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Estimate {
    Vector(Vec<f64>),
    Matrix(SymmetricMatrix),
}

impl Estimate {
    fn to_json(&self) -> Value {
        match self {
            Estimate::Vector(v) => json!(v),
            Estimate::Matrix(m) => json!((0..m.nrows()).map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub estimate: Estimate,
    pub diagnostics: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Loss {
    pub kind: &'static str,
    pub value: f64,
}

/// `‖θ̂ - θ*‖₂` for vectors, `‖Σ*^{-1/2} Σ̂ Σ*^{-1/2} - I‖` for matrices.
pub fn loss(task: Task, est: &Estimate, truth: &Truth) -> CliResult<Option<Loss>> {
    let l2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    Ok(match (task, est) {
        (Task::Mean, Estimate::Vector(v)) => truth.mean.as_ref().map(|m| Loss { kind: "l2", value: l2(v, m) }),
        (Task::Reg, Estimate::Vector(v)) => truth.theta.as_ref().map(|t| Loss { kind: "l2", value: l2(v, t) }),
        (Task::Cov, Estimate::Matrix(m)) => match &truth.cov {
            Some(c) => {
                let star = SymmetricMatrix::from_fn(c.len(), c.len(), |i, j| c[i][j]);
                Some(Loss { kind: "relative-op", value: relative_op_error(m, &star)? })
            }
            None => None,
        },
        _ => None,
    })
}

fn require_shape(task: Task, data: &Dataset) -> CliResult<()> {
    match (task, data.is_regression()) {
        (Task::Reg, false) => Err(CliError::Data("regression needs a `y` column".into())),
        (Task::Mean | Task::Cov, true) => Err(CliError::Data("mean and covariance tasks take datasets without a `y` column".into())),
        _ => Ok(()),
    }
}

fn mean_net_cfg() -> NetMeanConfig {
    NetMeanConfig::default()
}

fn cov_cfg(spec: &EstimateSpec) -> CovConfig {
    CovConfig { c2: spec.cov_c2, net_seed: spec.net_seed, net_max_iters: spec.net_max_iters, ..CovConfig::default() }
}

/// Runs one estimator on a parsed dataset.
pub fn run_estimate(task: Task, method: Method, data: &Dataset, cfg: &Config) -> CliResult<Outcome> {
    if !method.supports(task) {
        return Err(CliError::Config(format!("method `{}` does not estimate task `{}`", method.name(), task.as_str())));
    }
    require_shape(task, data)?;
    let spec = &cfg.estimate;
    let params = cfg.contamination.params()?;
    let d = data.dim();
    let n = data.rows.len();
    let conf = ConfidenceParams::new(n, d, spec.delta)?;
    let rows = &data.rows;
    let patterns = || {
        cfg.patterns
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("method `{}` needs a `patterns` section", method.name())))?
            .build(d)
    };
    let out = match method {
        Method::Kolmogorov if task == Task::Mean => {
            let per = conf.with_delta(spec.delta / d as f64);
            let mut theta = Vec::with_capacity(d);
            let mut radii = Vec::with_capacity(d);
            let mut conditional = false;
            for i in 0..d {
                let mut e = vec![0.0; d];
                e[i] = 1.0;
                let m = auto_mean_with_radius(&project_all(rows, &e), spec.sigma, &params, &per, &SearchConfig::default())?;
                theta.push(m.theta);
                radii.push(m.radius);
                conditional |= m.conditional;
            }
            Outcome { estimate: Estimate::Vector(theta), diagnostics: json!({"coordinate_radii": radii, "conditional": conditional}) }
        }
        Method::Kolmogorov => {
            if d != 1 {
                return Err(CliError::Config("kolmogorov covariance estimation needs d = 1; use cov-two-step".into()));
            }
            let s2 = min_distance_variance(&project_all(rows, &[1.0]), &params, &conf, &VarianceSearch::default())?;
            Outcome { estimate: Estimate::Matrix(SymmetricMatrix::from_element(1, 1, s2)), diagnostics: json!({}) }
        }
        Method::NetMean => {
            let net = make_net(d, spec.net_radius, spec.net_seed, spec.net_max_iters)?;
            let e = estimate_mean_net(rows, spec.sigma, &params, &conf, &net, &mean_net_cfg())?;
            Outcome {
                diagnostics: json!({
                    "objective": e.objective,
                    "error_radius": e.error_radius,
                    "net_size": net.len(),
                    "direction_radii": e.direction_radii,
                    "conditional": e.conditional,
                }),
                estimate: Estimate::Vector(e.theta),
            }
        }
        Method::MomentMean => {
            let k = spec.k.unwrap_or(2);
            let net = make_net(d, spec.net_radius, spec.net_seed, spec.net_max_iters)?;
            let e = moment_feasible_mean(rows, k, &params, &net, &MomentMeanConfig::default())?;
            Outcome {
                diagnostics: json!({"k": k, "objective": e.objective, "feasibility_level": e.feasibility_level, "feasible": e.feasible, "net_size": net.len()}),
                estimate: Estimate::Vector(e.theta),
            }
        }
        Method::CovTwoStep => {
            let e = estimate_cov_two_step(rows, &params, &conf, &cov_cfg(spec))?;
            Outcome {
                diagnostics: json!({"gamma": e.gamma, "violation": e.violation, "iterations": e.iterations, "net_size": e.net_size}),
                estimate: Estimate::Matrix(e.sigma),
            }
        }
        Method::Polyreg => {
            let data = RegressionData::from_samples(rows)?;
            let choice = choose_k(&conf, &params, spec.choose_k_c, spec.choose_k_c_prime);
            let k = spec.k.unwrap_or(choice.k);
            let f = fit(&data, k, &FitConfig::default())?;
            let dg = &f.diagnostics;
            Outcome {
                diagnostics: json!({
                    "k": k,
                    "chosen_k": choice.k,
                    "choose_k_formula": choice.formula,
                    "iterations": dg.iterations,
                    "loss": dg.loss,
                    "grad_norm": dg.grad_norm,
                    "hessian_min_eig": dg.hessian_min_eig,
                    "converged": dg.converged,
                }),
                estimate: Estimate::Vector(f.theta),
            }
        }
        Method::MultipatternMean => {
            let ps = patterns()?;
            let mcfg = MultiMeanConfig {
                sigma: spec.sigma,
                net_radius: spec.net_radius,
                net_seed: spec.net_seed,
                net_max_iters: spec.net_max_iters,
                ..MultiMeanConfig::default()
            };
            let e = estimate_mean_multipattern(rows, &ps, &params, &conf, &mcfg)?;
            Outcome {
                diagnostics: json!({
                    "bound": e.bound,
                    "pattern_radii": e.per_pattern.iter().map(|p| p.error_radius).collect::<Vec<_>>(),
                    "projection_residual": e.projection.residual,
                    "projection_sweeps": e.projection.sweeps,
                }),
                estimate: Estimate::Vector(e.theta),
            }
        }
        Method::MultipatternCov => {
            let ps = patterns()?;
            let e = estimate_cov_multipattern(rows, &ps, &params, &conf, &cov_cfg(spec))?;
            Outcome {
                diagnostics: json!({"bound": e.bound, "block_radii": e.block_radii, "block_residual": e.block_residual, "clip_shift": e.clip_shift}),
                estimate: Estimate::Matrix(e.sigma),
            }
        }
    };
    Ok(out)
}

/// The JSON report printed by `realizable estimate`.
pub fn report(task: Task, method: Method, data: &Dataset, outcome: &Outcome, loss: Option<Loss>, wall_time_s: f64) -> Value {
    let mut r = json!({
        "task": task.as_str(),
        "method": method.name(),
        "n": data.rows.len(),
        "d": data.dim(),
        "estimate": outcome.estimate.to_json(),
        "diagnostics": outcome.diagnostics,
        "wall_time_s": wall_time_s,
    });
    if let Some(l) = loss {
        r["loss"] = json!(l);
    }
    r
}

/// Contamination parameters used when a dataset comes without any config.
pub fn params_of(cfg: &Config) -> CliResult<ContaminationParams> {
    cfg.contamination.params()
}
