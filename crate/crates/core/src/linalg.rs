//! Small symmetric-matrix helpers on top of nalgebra.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector, SymmetricEigen};

/// Dense symmetric matrix. Symmetry is maintained by the functions below,
/// not by the type.
pub type SymmetricMatrix = DMatrix<f64>;

pub fn symmetrize(m: &DMatrix<f64>) -> SymmetricMatrix {
    (m + m.transpose()) * 0.5
}

pub fn eigen(m: &SymmetricMatrix) -> SymmetricEigen<f64, nalgebra::Dyn> {
    SymmetricEigen::new(symmetrize(m))
}

pub fn min_eigenvalue(m: &SymmetricMatrix) -> f64 {
    eigen(m).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Operator norm of a symmetric matrix: the largest absolute eigenvalue.
pub fn op_norm(m: &SymmetricMatrix) -> f64 {
    eigen(m).eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()))
}

fn from_spectrum(vecs: &DMatrix<f64>, vals: &DVector<f64>) -> SymmetricMatrix {
    let scaled = vecs * DMatrix::from_diagonal(vals);
    symmetrize(&(scaled * vecs.transpose()))
}

/// Euclidean projection onto the PSD cone: negative eigenvalues set to zero.
pub fn psd_clip(m: &SymmetricMatrix) -> SymmetricMatrix {
    let e = eigen(m);
    let vals = e.eigenvalues.map(|l| l.max(0.0));
    from_spectrum(&e.eigenvectors, &vals)
}

/// Applies `f` to the spectrum of a positive definite matrix.
fn spectral_map(m: &SymmetricMatrix, what: &str, f: impl Fn(f64) -> f64) -> Result<SymmetricMatrix> {
    let e = eigen(m);
    let top = e.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let floor = 1e-13 * top.max(f64::MIN_POSITIVE);
    if e.eigenvalues.iter().any(|&l| !(l > floor)) {
        return Err(Error::Singular(format!("{what}: eigenvalues {:?}", e.eigenvalues.as_slice())));
    }
    Ok(from_spectrum(&e.eigenvectors, &e.eigenvalues.map(f)))
}

pub fn inv_sqrt(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    spectral_map(m, "inverse square root", |l| 1.0 / l.sqrt())
}

pub fn sqrt_pd(m: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    spectral_map(m, "square root", f64::sqrt)
}

/// `vᵀ M v`.
pub fn quad_form(m: &SymmetricMatrix, v: &[f64]) -> f64 {
    let d = v.len();
    let mut s = 0.0;
    for i in 0..d {
        let mut r = 0.0;
        for j in 0..d {
            r += m[(i, j)] * v[j];
        }
        s += v[i] * r;
    }
    s
}
