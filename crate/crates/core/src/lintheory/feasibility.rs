use serde::{Deserialize, Serialize};

/// Whether AR coefficients can be written as `c_i = α_i v` with `α` on the simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub v: Option<f64>,
    pub alphas: Option<Vec<f64>>,
    pub reason: String,
}

/// Softmax weights are non-negative and sum to one, so a single shared value
/// scale `v` reproduces `coeffs` iff every non-zero coefficient has the same sign.
/// Zeros are accepted on the boundary of the closed simplex.
pub fn convex_ar_feasibility(coeffs: &[f64]) -> FeasibilityReport {
    if coeffs.is_empty() {
        return FeasibilityReport {
            feasible: false,
            v: None,
            alphas: None,
            reason: "empty".into(),
        };
    }
    let has_pos = coeffs.iter().any(|&c| c > 0.0);
    let has_neg = coeffs.iter().any(|&c| c < 0.0);
    if has_pos && has_neg {
        return FeasibilityReport {
            feasible: false,
            v: None,
            alphas: None,
            reason: "mixed-sign".into(),
        };
    }
    let v: f64 = coeffs.iter().sum();
    let alphas = if v == 0.0 {
        vec![1.0 / coeffs.len() as f64; coeffs.len()]
    } else {
        coeffs.iter().map(|c| c / v).collect()
    };
    let reason = if v == 0.0 {
        "zero-map"
    } else if has_neg {
        "all-nonpositive"
    } else {
        "all-nonnegative"
    };
    FeasibilityReport {
        feasible: true,
        v: Some(v),
        alphas: Some(alphas),
        reason: reason.into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_sign_coefficients_are_feasible() {
        let r = convex_ar_feasibility(&[-0.4352, -0.9802]);
        assert!(r.feasible);
        let v = r.v.unwrap();
        assert!((v + 1.4154).abs() < 1e-12);
        let a = r.alphas.unwrap();
        assert!((a[0] - 0.3075).abs() < 1e-4 && (a[1] - 0.6925).abs() < 1e-4);
        assert!((a[0] * v + 0.4352).abs() < 1e-14);
    }

    #[test]
    fn mixed_sign_coefficients_are_infeasible() {
        let r = convex_ar_feasibility(&[1.241, -0.980]);
        assert!(!r.feasible);
        assert_eq!(r.reason, "mixed-sign");
        assert!(r.v.is_none() && r.alphas.is_none());
    }

    #[test]
    fn zero_map_uses_uniform_weights() {
        let r = convex_ar_feasibility(&[0.0, 0.0]);
        assert!(r.feasible);
        assert_eq!(r.v, Some(0.0));
        assert_eq!(r.alphas, Some(vec![0.5, 0.5]));
    }

    #[test]
    fn zeros_count_as_either_sign() {
        assert!(convex_ar_feasibility(&[0.0, 0.3, 0.1]).feasible);
        assert!(convex_ar_feasibility(&[-0.2, 0.0]).feasible);
    }
}
