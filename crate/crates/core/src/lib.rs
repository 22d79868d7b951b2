//! Estimation when data are missing not at random under realizable
//! contamination: a fraction `1-ε` of samples is observed completely at
//! random with probability `q`, and the rest may be hidden by an arbitrary
//! value-dependent mechanism.

pub mod adversary;
pub mod error;
pub mod kolmogorov;
pub mod linalg;
pub mod model;
pub mod momenttest;
pub mod net;
pub mod netopt;
pub mod patterns;
pub mod polyreg;
pub mod quad;
pub mod rng;
pub mod sample;
pub mod special;

pub use error::{Error, Result};
pub use linalg::SymmetricMatrix;
pub use model::{ConfidenceParams, ContaminationParams, MembershipReport};
pub use net::{make_net, SphereNet};
pub use patterns::PatternSet;
pub use polyreg::RegressionData;
pub use sample::MaskedSample;
