use crate::error::{Result, SaError};
use crate::vecops;

/// The learner's state θ ∈ R^q.
///
/// Construction rejects empty vectors and non-finite entries; the dimension is
/// fixed for the life of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
}

impl ParameterVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(SaError::InvalidConfig(
                "parameter vector must have dimension >= 1".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SaError::InvalidConfig(format!(
                "parameter component {i} is not finite"
            )));
        }
        Ok(Self { values })
    }

    pub fn zeros(q: usize) -> Result<Self> {
        Self::new(vec![0.0; q])
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.values.clone()
    }

    /// Euclidean norm |θ|.
    pub fn norm(&self) -> f64 {
        vecops::norm(&self.values)
    }
}

impl std::ops::Index<usize> for ParameterVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl TryFrom<Vec<f64>> for ParameterVector {
    type Error = SaError;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_zero_dimension() {
        assert!(ParameterVector::new(vec![]).is_err());
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(ParameterVector::new(vec![0.0, f64::NAN]).is_err());
        assert!(ParameterVector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn norm_is_euclidean() {
        let p = ParameterVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(p.norm(), 5.0);
    }
}
