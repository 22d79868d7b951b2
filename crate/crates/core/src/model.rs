//! The realizable contamination model `(1-ε)·MCAR(P, q) + ε·MNAR(P)` and its
//! likelihood-ratio characterization.

use crate::error::{domain, Error, Result};
use num_traits::Num;

/// Contamination level `ε ∈ [0,1)` and MCAR observation probability `q ∈ (0,1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContaminationParams {
    epsilon: f64,
    q: f64,
}

impl ContaminationParams {
    pub fn new(epsilon: f64, q: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(domain(format!("epsilon must lie in [0,1), got {epsilon}")));
        }
        if !(q > 0.0 && q <= 1.0) {
            return Err(domain(format!("q must lie in (0,1], got {q}")));
        }
        Ok(Self { epsilon, q })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// `τ = ε / (q(1-ε))`.
    pub fn tau(&self) -> f64 {
        self.epsilon / self.lower()
    }

    /// `L = q(1-ε)`, the smallest admissible likelihood ratio.
    pub fn lower(&self) -> f64 {
        self.q * (1.0 - self.epsilon)
    }

    /// `U = q(1-ε) + ε`.
    pub fn upper(&self) -> f64 {
        self.lower() + self.epsilon
    }

    /// `(L, U)`: bounds on `dQ/dP` over the observed part of the space.
    pub fn likelihood_band(&self) -> (f64, f64) {
        (self.lower(), self.upper())
    }

    /// Bounds on the likelihood ratio of the observed-conditional law:
    /// `(1 - ε/U, 1 + ε/L)`.
    pub fn conditional_band(&self) -> Result<(f64, f64)> {
        let (l, u) = self.likelihood_band();
        if l <= 0.0 {
            return Err(Error::DegenerateModel("q(1-ε) = 0".into()));
        }
        if self.q == 1.0 {
            let t = self.tau();
            return Ok((1.0 / (1.0 + t), 1.0 + t));
        }
        Ok((1.0 - self.epsilon / u, 1.0 + self.epsilon / l))
    }

    /// The equivalent `q = 1` model: `(ε', q')` with
    /// `ε' = ε/(ε + q(1-ε))` and `q' = ε + q(1-ε)`.
    pub fn reduce_to_q1(&self) -> (f64, f64) {
        reduce_exact(self.epsilon, self.q)
    }
}

/// The q-reduction over any number field, so that exact rational arithmetic
/// can confirm `q'(1-ε') = q(1-ε)` with no rounding.
pub fn reduce_exact<T: Num + Clone>(epsilon: T, q: T) -> (T, T) {
    let one = T::one();
    let q_prime = epsilon.clone() + q * (one - epsilon.clone());
    let eps_prime = epsilon / q_prime.clone();
    (eps_prime, q_prime)
}

/// A distribution on a finite base support plus the missing atom.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteObservation<T> {
    /// Mass of each base atom that is observed.
    pub observed: Vec<T>,
    /// Mass of the missing atom.
    pub missing: T,
}

/// True iff `lo·p_j ≤ Q_j ≤ hi·p_j` for every atom.
pub fn ratios_within<T: Num + Clone + PartialOrd>(lo: &T, hi: &T, base: &[T], q: &[T]) -> bool {
    base.len() == q.len()
        && base.iter().zip(q).all(|(p, m)| lo.clone() * p.clone() <= *m && *m <= hi.clone() * p.clone())
}

/// Splits a realizable `Q` into the `q = 1` model: returns `(ε', q', Q')` with
/// `dQ'/dP = (1/q') dQ/dP` and `Q'(★) = 1 - Q(observed)/q'`.
pub fn reduce_discrete<T: Num + Clone>(epsilon: T, q: T, dist: &DiscreteObservation<T>) -> (T, T, DiscreteObservation<T>) {
    let (eps_p, q_p) = reduce_exact(epsilon, q);
    let observed: Vec<T> = dist.observed.iter().map(|m| m.clone() / q_p.clone()).collect();
    let total = observed.iter().cloned().fold(T::zero(), |a, b| a + b);
    let missing = T::one() - total;
    (eps_p, q_p, DiscreteObservation { observed, missing })
}

/// Rebuilds `q'·Q' + (1-q')·δ★`.
pub fn lift_discrete<T: Num + Clone>(q_prime: T, reduced: &DiscreteObservation<T>) -> DiscreteObservation<T> {
    let observed = reduced.observed.iter().map(|m| q_prime.clone() * m.clone()).collect();
    let missing = q_prime.clone() * reduced.missing.clone() + (T::one() - q_prime);
    DiscreteObservation { observed, missing }
}

/// Sample size, dimension and failure probability for a guarantee.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    pub n: usize,
    pub d: usize,
    pub delta: f64,
}

impl ConfidenceParams {
    pub fn new(n: usize, d: usize, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(domain("n must be positive"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(domain(format!("delta must lie in (0,1), got {delta}")));
        }
        Ok(Self { n, d, delta })
    }

    /// `√((d + log(1/δ)) / (n q (1-ε)))`.
    pub fn alpha(&self, params: &ContaminationParams) -> f64 {
        ((self.d as f64 + (1.0 / self.delta).ln()) / (self.n as f64 * params.lower())).sqrt()
    }

    /// The one-dimensional rate `√(log(1/δ) / (n q (1-ε)))`, with no dimension term.
    pub fn univariate_alpha(&self, params: &ContaminationParams) -> f64 {
        ((1.0 / self.delta).ln() / (self.n as f64 * params.lower())).sqrt()
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        Self { delta, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembershipReport {
    pub ok: bool,
    pub worst_violation: f64,
}

/// Checks the sufficient condition for realizability of an observed-conditional
/// density: `L/b ≤ ratio(z) ≤ U/b` on the grid, with observed mass `b ∈ [L, U]`.
pub fn verify_membership<F: Fn(f64) -> f64>(
    ratio_fn: F,
    mass_observed: f64,
    params: &ContaminationParams,
    grid: &[f64],
    tol: f64,
) -> MembershipReport {
    let (l, u) = params.likelihood_band();
    let b = mass_observed;
    let mut worst = (l - b).max(b - u).max(0.0);
    if b > 0.0 {
        let (lo, hi) = (l / b, u / b);
        for &z in grid {
            let r = ratio_fn(z);
            let v = if r.is_nan() { f64::INFINITY } else { (lo - r).max(r - hi).max(0.0) };
            worst = worst.max(v);
        }
    } else {
        worst = f64::INFINITY;
    }
    MembershipReport { ok: worst <= tol && !grid.is_empty(), worst_violation: worst }
}

/// Evenly spaced grid of `points` values over `[center - 8 scale, center + 8 scale]`.
pub fn default_grid(center: f64, scale: f64, points: usize) -> Vec<f64> {
    linspace(center - 8.0 * scale, center + 8.0 * scale, points.max(2000))
}

pub fn linspace(a: f64, b: f64, points: usize) -> Vec<f64> {
    let m = (points.max(2) - 1) as f64;
    (0..points.max(2)).map(|i| a + (b - a) * i as f64 / m).collect()
}
