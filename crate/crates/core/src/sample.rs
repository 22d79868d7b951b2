use crate::error::{domain, Result};

/// A point of the extended space: each coordinate is a real value or
/// missing (`None`). Missingness is a tag, never a NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSample {
    values: Vec<Option<f64>>,
}

impl MaskedSample {
    pub fn new(values: Vec<Option<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(domain("sample dimension must be at least 1"));
        }
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(domain("observed entries must be finite"));
        }
        Ok(Self { values })
    }

    /// Like [`MaskedSample::new`] but rejects partially observed rows.
    pub fn all_or_nothing(values: Vec<Option<f64>>) -> Result<Self> {
        let s = Self::new(values)?;
        if !(s.is_observed() || s.is_missing()) {
            return Err(domain("partially observed row in all-or-nothing mode"));
        }
        Ok(s)
    }

    /// A fully observed sample. Panics on an empty or non-finite vector.
    pub fn observed(x: Vec<f64>) -> Self {
        assert!(!x.is_empty() && x.iter().all(|v| v.is_finite()), "invalid observed sample");
        Self { values: x.into_iter().map(Some).collect() }
    }

    /// The fully missing sample of dimension `d`.
    pub fn missing(d: usize) -> Self {
        assert!(d >= 1);
        Self { values: vec![None; d] }
    }

    pub fn scalar(x: Option<f64>) -> Self {
        match x {
            Some(v) => Self::observed(vec![v]),
            None => Self::missing(1),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Option<f64>] {
        &self.values
    }

    pub fn get(&self, i: usize) -> Option<f64> {
        self.values[i]
    }

    pub fn is_observed(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn is_missing(&self) -> bool {
        self.values.iter().all(Option::is_none)
    }

    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_some).collect()
    }

    /// The coordinates when fully observed.
    pub fn to_vec(&self) -> Option<Vec<f64>> {
        self.values.iter().copied().collect()
    }

    /// `<v, x>` for a fully observed sample, `None` otherwise.
    pub fn project(&self, v: &[f64]) -> Option<f64> {
        debug_assert_eq!(v.len(), self.dim());
        let mut s = 0.0;
        for (x, c) in self.values.iter().zip(v) {
            s += (*x)? * c;
        }
        Some(s)
    }
}

/// Fully observed rows, in order.
pub fn observed_rows(samples: &[MaskedSample]) -> Vec<Vec<f64>> {
    samples.iter().filter_map(MaskedSample::to_vec).collect()
}

/// One-dimensional samples holding `<v, x>` (or missing).
pub fn project_all(samples: &[MaskedSample], v: &[f64]) -> Vec<Option<f64>> {
    samples.iter().map(|s| s.project(v)).collect()
}
