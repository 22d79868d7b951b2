use crate::config::{Config, ModelSpec};
use crate::dataset::{Dataset, Truth};
use crate::error::{CliError, CliResult};
use realizable_core::adversary::{
    build_cov_hard_instance, build_mean_hard_instance, build_mean_hard_instance_with_radius, build_reg_hard_instance, cholesky_rows,
    gaussian_sampler, generate_all_or_nothing, regression_sampler, sample_cov_hard, sample_mean_hard, sample_reg_hard,
};
use realizable_core::patterns::generate_multipattern;
use realizable_core::MaskedSample;

const HARD_NOTE: &str = "the observed law is also realizable from N(0, I); truth lists the alternative";

fn direction(d: usize, v: &Option<Vec<f64>>) -> Vec<f64> {
    v.clone().unwrap_or_else(|| {
        let mut e = vec![0.0; d];
        if d > 0 {
            e[0] = 1.0;
        }
        e
    })
}

fn identity(d: usize) -> Vec<Vec<f64>> {
    (0..d).map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

/// Generates the configured dataset; the same config always yields the same rows.
pub fn simulate(cfg: &Config) -> CliResult<(Dataset, Truth)> {
    if cfg.n == 0 {
        return Err(CliError::Config("field `n`: must be positive".into()));
    }
    let params = cfg.contamination.params()?;
    let adversary = cfg.adversary.build();
    let width = cfg.model.width();
    let patterns = match &cfg.patterns {
        Some(p) if cfg.model.is_regression() => return Err(CliError::Config(format!("field `patterns`: not supported for regression models ({} sets)", p.sets.len()))),
        Some(p) => {
            if cfg.contamination.q != 1.0 {
                return Err(CliError::Config("field `contamination.q`: pattern weights replace q; set q = 1".into()));
            }
            Some(p.build(width)?)
        }
        None => None,
    };
    let generate = |base: &dyn Fn(&mut realizable_core::rng::Rng) -> Vec<f64>| -> CliResult<Vec<MaskedSample>> {
        Ok(match &patterns {
            Some(p) => generate_multipattern(base, params.epsilon(), p, &adversary, cfg.n, cfg.seed)?,
            None => generate_all_or_nothing(base, &params, &adversary, cfg.n, cfg.seed),
        })
    };
    let (rows, truth) = match &cfg.model {
        ModelSpec::Gaussian { mean, cov } => {
            let d = mean.len();
            if d == 0 {
                return Err(CliError::Config("field `model.mean`: must be nonempty".into()));
            }
            let chol = match cov {
                Some(c) if c.len() != d => return Err(CliError::Config("field `model.cov`: must be d × d".into())),
                Some(c) => Some(cholesky_rows(c).map_err(|e| CliError::Config(format!("field `model.cov`: {e}")))?),
                None => None,
            };
            let rows = generate(&gaussian_sampler(mean.clone(), chol))?;
            (rows, Truth { mean: Some(mean.clone()), cov: Some(cov.clone().unwrap_or_else(|| identity(d))), ..Truth::default() })
        }
        ModelSpec::Regression { theta, sigma } => {
            if theta.is_empty() || !(*sigma >= 0.0) {
                return Err(CliError::Config("field `model`: need nonempty theta and sigma >= 0".into()));
            }
            let rows = generate(&regression_sampler(theta.clone(), *sigma))?;
            (rows, Truth { theta: Some(theta.clone()), ..Truth::default() })
        }
        ModelSpec::MeanHard { d, gamma, direction: v, radius } => {
            let inst = match radius {
                Some(r) => build_mean_hard_instance_with_radius(*gamma, *r, &params)?,
                None => build_mean_hard_instance(*gamma, &params)?,
            };
            let v = direction(*d, v);
            let rows = sample_mean_hard(&inst, &v, *d, cfg.n, cfg.seed)?;
            let mean = v.iter().map(|x| gamma * x).collect();
            (rows, Truth { mean: Some(mean), cov: Some(identity(*d)), note: Some(HARD_NOTE.into()), ..Truth::default() })
        }
        ModelSpec::CovHard { d, gamma, direction: v } => {
            let inst = build_cov_hard_instance(*gamma, &params)?;
            let v = direction(*d, v);
            let rows = sample_cov_hard(&inst, &v, *d, cfg.n, cfg.seed)?;
            let mut cov = identity(*d);
            for i in 0..*d {
                for j in 0..*d {
                    cov[i][j] += gamma * v[i] * v[j];
                }
            }
            (rows, Truth { mean: Some(vec![0.0; *d]), cov: Some(cov), note: Some(HARD_NOTE.into()), ..Truth::default() })
        }
        ModelSpec::RegHard { d, gamma, r, direction: v } => {
            let inst = build_reg_hard_instance(*gamma, *r, &params)?;
            let v = direction(*d, v);
            let rows = sample_reg_hard(&inst, &v, *d, cfg.n, cfg.seed)?;
            let theta = v.iter().map(|x| gamma * x).collect();
            (rows, Truth { theta: Some(theta), note: Some(HARD_NOTE.into()), ..Truth::default() })
        }
    };
    Ok((Dataset::new(rows, width, cfg.model.is_regression()), truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn cfg(text: &str) -> Config {
        parse_config(text).unwrap()
    }

    #[test]
    fn clean_config_has_no_missing_rows() {
        let c = cfg(r#"{"schema_version": 1, "seed": 1, "n": 500, "model": {"kind": "gaussian", "mean": [1, 2]}}"#);
        let (d, t) = simulate(&c).unwrap();
        assert_eq!(d.na_rows(), 0);
        assert_eq!(d.rows.len(), 500);
        assert_eq!(t.mean, Some(vec![1.0, 2.0]));
    }

    #[test]
    fn hard_mean_config_hides_about_one_minus_b() {
        let c = cfg(r#"{"schema_version": 1, "seed": 2, "n": 20000, "model": {"kind": "mean-hard", "d": 2, "gamma": 0.1},
                    "contamination": {"epsilon": 0.5}}"#);
        let (d, _) = simulate(&c).unwrap();
        // b = L·√(1+τ) with L = 0.5, τ = 1.
        let b = 0.5 * 2f64.sqrt();
        let frac = d.na_rows() as f64 / 20000.0;
        assert!((frac - (1.0 - b)).abs() < 0.015, "{frac}");
    }

    #[test]
    fn same_seed_same_bytes() {
        let c = cfg(r#"{"schema_version": 1, "seed": 9, "n": 300, "model": {"kind": "regression", "theta": [1, -1]},
                    "contamination": {"epsilon": 0.3},
                    "adversary": {"kind": "tail-censor", "statistic": {"kind": "ols-abs-residual"}, "tail": "upper", "fraction": 0.5}}"#);
        assert_eq!(simulate(&c).unwrap().0.to_csv(), simulate(&c).unwrap().0.to_csv());
        let mut other = c.clone();
        other.seed = 10;
        assert_ne!(simulate(&c).unwrap().0.to_csv(), simulate(&other).unwrap().0.to_csv());
    }

    #[test]
    fn invalid_models_are_config_errors() {
        let bad_cov = cfg(r#"{"schema_version": 1, "seed": 1, "n": 5, "model": {"kind": "gaussian", "mean": [0, 0], "cov": [[1, 2], [2, 1]]}}"#);
        assert!(matches!(simulate(&bad_cov), Err(CliError::Config(_))));
        let zero = cfg(r#"{"schema_version": 1, "seed": 1, "model": {"kind": "gaussian", "mean": [0]}}"#);
        assert!(matches!(simulate(&zero), Err(CliError::Config(_))));
    }
}
