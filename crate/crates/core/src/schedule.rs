//! Step-size sequences and their Robbins–Monro classification.

use crate::error::{Result, SaError};

/// A positive step-size sequence γ_0, γ_1, …
///
/// Three families are provided:
/// - `Constant`: γ_k = γ_0.
/// - `DarkenSearchConverge`: γ_k = γ_0 · ((k/τ)+1) / ((k/τ)² + (k/τ) + 1),
///   roughly constant for k ≲ τ ("search") and ~ γ_0·τ/k afterwards
///   ("converge").
/// - `PowerDecay`: γ_k = γ_0 / (1+k)^p with p ∈ (0, 1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSizeSchedule {
    Constant { gamma0: f64 },
    DarkenSearchConverge { gamma0: f64, tau: f64 },
    PowerDecay { gamma0: f64, exponent: f64 },
}

/// Analytic classification of Σγ_t and Σγ_t².
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleValidity {
    pub sum_diverges: bool,
    pub sum_squares_converges: bool,
}

impl ScheduleValidity {
    /// Both step-size conditions for almost-sure convergence hold.
    pub fn is_robbins_monro(&self) -> bool {
        self.sum_diverges && self.sum_squares_converges
    }
}

impl StepSizeSchedule {
    pub fn constant(gamma0: f64) -> Result<Self> {
        require_positive(gamma0, "gamma0")?;
        Ok(Self::Constant { gamma0 })
    }

    pub fn darken(gamma0: f64, tau: f64) -> Result<Self> {
        require_positive(gamma0, "gamma0")?;
        require_positive(tau, "tau")?;
        Ok(Self::DarkenSearchConverge { gamma0, tau })
    }

    pub fn power_decay(gamma0: f64, exponent: f64) -> Result<Self> {
        require_positive(gamma0, "gamma0")?;
        if !(exponent > 0.0 && exponent <= 1.0) {
            return Err(SaError::InvalidConfig(format!(
                "power-decay exponent must lie in (0, 1], got {exponent}"
            )));
        }
        Ok(Self::PowerDecay { gamma0, exponent })
    }

    /// Re-checks the constructor constraints (useful for schedules built from
    /// deserialized configuration).
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Constant { gamma0 } => Self::constant(gamma0).map(|_| ()),
            Self::DarkenSearchConverge { gamma0, tau } => Self::darken(gamma0, tau).map(|_| ()),
            Self::PowerDecay { gamma0, exponent } => {
                Self::power_decay(gamma0, exponent).map(|_| ())
            }
        }
    }

    /// γ_k for iteration k.
    pub fn step_size(&self, k: u64) -> f64 {
        match *self {
            Self::Constant { gamma0 } => gamma0,
            Self::DarkenSearchConverge { gamma0, tau } => {
                let r = k as f64 / tau;
                gamma0 * (r + 1.0) / (r * r + r + 1.0)
            }
            Self::PowerDecay { gamma0, exponent } => gamma0 / (1.0 + k as f64).powf(exponent),
        }
    }

    /// Analytic per-family classification. Infinite sums are not numerically
    /// decidable, so the flags come from the tail behavior of each family:
    /// constant terms diverge in both sums; the Darken tail is ~ γ_0·τ/k;
    /// (1+k)^{-p} is square-summable iff p > 1/2.
    pub fn classify(&self) -> ScheduleValidity {
        match *self {
            Self::Constant { .. } => ScheduleValidity {
                sum_diverges: true,
                sum_squares_converges: false,
            },
            Self::DarkenSearchConverge { .. } => ScheduleValidity {
                sum_diverges: true,
                sum_squares_converges: true,
            },
            Self::PowerDecay { exponent, .. } => ScheduleValidity {
                sum_diverges: true,
                sum_squares_converges: exponent > 0.5,
            },
        }
    }
}

fn require_positive(value: f64, name: &str) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(SaError::InvalidConfig(format!(
            "{name} must be a positive finite real, got {value}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn darken_at_zero_is_gamma0() {
        let s = StepSizeSchedule::darken(0.5, 100.0).unwrap();
        assert_eq!(s.step_size(0), 0.5);
    }

    #[test]
    fn darken_at_tau_is_two_thirds_gamma0() {
        // hand evaluation at k = τ: (1+1)/(1+1+1) = 2/3
        let s = StepSizeSchedule::darken(0.5, 100.0).unwrap();
        assert_relative_eq!(s.step_size(100), 0.5 * (2.0 / 3.0), epsilon = 1e-15);
    }

    #[test]
    fn power_decay_p1_is_harmonic() {
        let s = StepSizeSchedule::power_decay(1.0, 1.0).unwrap();
        assert_relative_eq!(s.step_size(9), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn classification_table() {
        let darken = StepSizeSchedule::darken(0.2, 30.0).unwrap().classify();
        assert_eq!(
            (darken.sum_diverges, darken.sum_squares_converges),
            (true, true)
        );

        let constant = StepSizeSchedule::constant(0.1).unwrap().classify();
        assert_eq!(
            (constant.sum_diverges, constant.sum_squares_converges),
            (true, false)
        );

        let p1 = StepSizeSchedule::power_decay(1.0, 1.0).unwrap().classify();
        assert_eq!((p1.sum_diverges, p1.sum_squares_converges), (true, true));

        let p04 = StepSizeSchedule::power_decay(1.0, 0.4).unwrap().classify();
        assert_eq!((p04.sum_diverges, p04.sum_squares_converges), (true, false));
    }

    /// Numerical cross-check of the Darken classification: over partial sums
    /// up to 10^7 terms, Σγ² plateaus (tail increments vanish) while Σγ keeps
    /// growing by whole units.
    #[test]
    fn darken_partial_sums_behave_like_classification() {
        let s = StepSizeSchedule::darken(0.5, 100.0).unwrap();
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        let mut sum_at_million = 0.0;
        let mut sum_sq_at_million = 0.0;
        for k in 0..10_000_000u64 {
            let g = s.step_size(k);
            sum += g;
            sum_sq += g * g;
            if k == 999_999 {
                sum_at_million = sum;
                sum_sq_at_million = sum_sq;
            }
        }
        // Σγ grows without plateau: the last decade still adds ~ γ0·τ·ln(10).
        assert!(sum - sum_at_million > 0.9 * 0.5 * 100.0 * 10f64.ln());
        // Σγ² plateaus: the last decade adds a vanishing amount.
        assert!(sum_sq - sum_sq_at_million < 1e-2);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(StepSizeSchedule::constant(0.0).is_err());
        assert!(StepSizeSchedule::constant(-1.0).is_err());
        assert!(StepSizeSchedule::darken(0.5, 0.0).is_err());
        assert!(StepSizeSchedule::power_decay(1.0, 0.0).is_err());
        assert!(StepSizeSchedule::power_decay(1.0, 1.5).is_err());
    }

    proptest! {
        /// Every emitted γ_k is strictly positive, for all families.
        #[test]
        fn emitted_steps_are_positive(
            gamma0 in 1e-6f64..10.0,
            tau in 1e-3f64..1e4,
            p in 0.01f64..1.0,
            k in 0u64..1_000_000,
        ) {
            let schedules = [
                StepSizeSchedule::constant(gamma0).unwrap(),
                StepSizeSchedule::darken(gamma0, tau).unwrap(),
                StepSizeSchedule::power_decay(gamma0, p).unwrap(),
            ];
            for s in schedules {
                prop_assert!(s.step_size(k) > 0.0);
            }
        }

        /// Darken shape: within 10% of γ0 during the search phase (k ≤ τ/4)
        /// and strictly decreasing past 2τ.
        #[test]
        fn darken_search_then_converge_shape(
            gamma0 in 1e-3f64..10.0,
            tau in 4.0f64..1e3,
        ) {
            let s = StepSizeSchedule::darken(gamma0, tau).unwrap();
            let search_end = (tau / 4.0).floor() as u64;
            for k in 0..=search_end {
                prop_assert!(s.step_size(k) >= 0.9 * gamma0);
                prop_assert!(s.step_size(k) <= gamma0);
            }
            let start = (2.0 * tau).ceil() as u64;
            for k in start..start + 50 {
                prop_assert!(s.step_size(k + 1) < s.step_size(k));
            }
        }
    }
}
