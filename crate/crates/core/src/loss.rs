//! Scalar loss and truncation primitives.

use crate::error::{CoreError, Result};

/// Logistic loss log(1 + exp(-z)), computed in a branch form that stays
/// accurate for large |z|.
pub fn logistic_loss(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(CoreError::Domain(format!("logistic_loss({z})")));
    }
    Ok(if z >= 0.0 {
        (-z).exp().ln_1p()
    } else {
        // log(1+e^{-z}) = -z + log(1+e^{z})
        -z + z.exp().ln_1p()
    })
}

/// Derivative of the logistic loss: -1 / (1 + exp(z)).
pub fn logistic_loss_deriv(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        -e / (1.0 + e)
    } else {
        -1.0 / (1.0 + z.exp())
    }
}

/// Clamp z to [-beta, beta].
pub fn truncate(beta: f64, z: f64) -> f64 {
    debug_assert!(beta >= 0.0);
    z.clamp(-beta, beta)
}

/// One-sided truncation derivative convention: 1 iff |z| <= beta.
#[inline]
pub fn truncate_gate(beta: f64, z: f64) -> f64 {
    if z.abs() <= beta {
        1.0
    } else {
        0.0
    }
}

/// One-sided ReLU derivative convention: 1 iff z >= 0.
#[inline]
pub fn relu_gate(z: f64) -> f64 {
    if z >= 0.0 {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn loss_at_zero_is_log_two() {
        assert!((logistic_loss(0.0).unwrap() - 0.693_147_180_559_945_3).abs() < 1e-15);
    }

    #[test]
    fn loss_at_fifty_is_tiny_but_positive() {
        let v = logistic_loss(50.0).unwrap();
        assert!(v > 0.0 && v < 1e-20, "got {v}");
    }

    #[test]
    fn loss_algebraic_identity() {
        // log(1+e^z) - log(1+e^{-z}) = z
        let z = 3.7;
        let diff = logistic_loss(-z).unwrap() - logistic_loss(z).unwrap();
        assert!((diff - z).abs() < 1e-12, "got {diff}");
    }

    #[test]
    fn loss_rejects_non_finite() {
        assert!(logistic_loss(f64::NAN).is_err());
        assert!(logistic_loss(f64::INFINITY).is_err());
    }

    #[test]
    fn truncate_examples() {
        assert_eq!(truncate(5.0, 7.0), 5.0);
        assert_eq!(truncate(5.0, -7.0), -5.0);
        assert_eq!(truncate(5.0, 3.0), 3.0);
    }

    proptest! {
        #[test]
        fn loss_is_nonnegative_and_decreasing(a in -700.0f64..700.0, d in 0.0f64..10.0) {
            let lo = logistic_loss(a + d).unwrap();
            let hi = logistic_loss(a).unwrap();
            prop_assert!(lo >= 0.0);
            prop_assert!(lo <= hi + 1e-12);
        }

        #[test]
        fn truncate_is_identity_inside_and_clamped_outside(beta in 0.0f64..10.0, z in -100.0f64..100.0) {
            let t = truncate(beta, z);
            prop_assert!(t >= -beta && t <= beta);
            if z.abs() <= beta {
                prop_assert_eq!(t, z);
            }
        }
    }
}
