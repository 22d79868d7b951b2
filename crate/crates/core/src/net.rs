use crate::error::{domain, Result};
use crate::rng::{label, rng_for};
use rand_distr::{Distribution, StandardNormal};

/// A finite set of unit directions forming a packing (and, when maximal,
/// a covering) of the sphere at `radius`.
#[derive(Debug, Clone)]
pub struct SphereNet {
    dim: usize,
    directions: Vec<Vec<f64>>,
    radius: f64,
}

impl SphereNet {
    /// Wraps explicit directions, normalizing each one.
    pub fn from_directions(dim: usize, directions: Vec<Vec<f64>>, radius: f64) -> Result<Self> {
        if dim == 0 || directions.is_empty() {
            return Err(domain("net needs d >= 1 and at least one direction"));
        }
        let mut out = Vec::with_capacity(directions.len());
        for v in directions {
            if v.len() != dim {
                return Err(domain("direction of wrong dimension"));
            }
            let nrm = norm(&v);
            if !(nrm > 0.0) || !nrm.is_finite() {
                return Err(domain("zero or non-finite direction"));
            }
            out.push(v.iter().map(|x| x / nrm).collect());
        }
        Ok(Self { dim, directions: out, radius })
    }

    /// Standard basis directions and their negatives.
    pub fn axes(dim: usize) -> Self {
        let mut dirs = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; dim];
                v[i] = s;
                dirs.push(v);
            }
        }
        Self { dim, directions: dirs, radius: std::f64::consts::SQRT_2 }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn directions(&self) -> &[Vec<f64>] {
        &self.directions
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Applies the `dim x dim` row-major matrix `rot` to every direction.
    pub fn rotated(&self, rot: &[Vec<f64>]) -> Self {
        let directions = self.directions.iter().map(|v| mat_vec(rot, v)).collect();
        Self { dim: self.dim, directions, radius: self.radius }
    }

    /// Distance from `u` to its nearest net direction.
    pub fn nearest_distance(&self, u: &[f64]) -> f64 {
        self.directions.iter().map(|v| dist(u, v)).fold(f64::INFINITY, f64::min)
    }
}

/// Greedy random maximal packing. Uniform unit vectors are proposed and kept
/// when at least `radius` away from every kept direction; the loop ends after
/// `max_iters` consecutive rejections.
pub fn make_net(d: usize, radius: f64, seed: u64, max_iters: usize) -> Result<SphereNet> {
    if d == 0 || !(radius > 0.0 && radius < 1.0) {
        return Err(domain(format!("make_net needs d >= 1 and radius in (0,1), got d={d}, radius={radius}")));
    }
    if d == 1 {
        return Ok(SphereNet { dim: 1, directions: vec![vec![1.0], vec![-1.0]], radius });
    }
    let mut rng = rng_for(seed, &[label("net"), d as u64]);
    let r2 = radius * radius;
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    let mut misses = 0usize;
    while misses < max_iters {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let nrm = norm(&v);
        if nrm < 1e-12 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= nrm);
        if dirs.iter().all(|w| dist2(&v, w) >= r2) {
            dirs.push(v);
            misses = 0;
        } else {
            misses += 1;
        }
    }
    Ok(SphereNet { dim: d, directions: dirs, radius })
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist2(a, b).sqrt()
}

pub(crate) fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use proptest::prelude::*;

    fn random_unit(rng: &mut crate::rng::Rng, d: usize) -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        v.into_iter().map(|x| x / n).collect()
    }

    #[test]
    fn one_dimensional_net() {
        let net = make_net(1, 0.5, 3, 10).unwrap();
        assert_eq!(net.directions(), &[vec![1.0], vec![-1.0]]);
    }

    #[test]
    fn circle_count_at_half_radius() {
        // The angular packing bound floor(2*pi / (2 asin(1/4))) = 12 caps the
        // count; random sequential packing lands well inside it.
        for seed in 0..10 {
            let net = make_net(2, 0.5, seed, 100_000).unwrap();
            assert!((7..=12).contains(&net.len()), "seed {seed}: {}", net.len());
        }
    }

    #[test]
    fn sphere_count_bound() {
        let net = make_net(3, 0.5, 1, 20_000).unwrap();
        assert!(net.len() <= 125);
    }

    #[test]
    fn packing_and_covering() {
        for (d, seed) in [(2usize, 11u64), (3, 12)] {
            let net = make_net(d, 0.5, seed, 1_000_000).unwrap();
            for (i, a) in net.directions().iter().enumerate() {
                assert!((norm(a) - 1.0).abs() < 1e-12);
                for b in &net.directions()[i + 1..] {
                    assert!(dist(a, b) >= 0.5 - 1e-12);
                }
            }
            let mut rng = rng_for(99, &[d as u64]);
            for _ in 0..10_000 {
                let u = random_unit(&mut rng, d);
                assert!(net.nearest_distance(&u) <= 0.5 + 1e-9);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(make_net(0, 0.5, 0, 10).is_err());
        assert!(make_net(2, 1.0, 0, 10).is_err());
        assert!(make_net(2, 0.0, 0, 10).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn packing_holds_for_any_seed(seed in any::<u64>(), d in 2usize..5, r in 0.3f64..0.9) {
            let net = make_net(d, r, seed, 2_000).unwrap();
            for (i, a) in net.directions().iter().enumerate() {
                prop_assert!((norm(a) - 1.0).abs() < 1e-12);
                for b in &net.directions()[i + 1..] {
                    prop_assert!(dist(a, b) >= r - 1e-12);
                }
            }
        }
    }
}
