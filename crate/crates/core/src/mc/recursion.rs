use serde::{Deserialize, Serialize};

use super::{DeskScale, EstimatorResult, McError};

/// Outcome of comparing a probability with a bound through confidence intervals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Fail,
}

/// `p_{k+1} ≤ ½ (a_{k+1} p_k)^{S_{k+1}+1} + ½ w_{k+1}` at confidence-interval ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecursionReport {
    pub k: u32,
    pub cells: u64,
    pub budget: u64,
    /// Right side with `p_k` and `w_{k+1}` at their upper ends.
    pub rhs_upper: f64,
    pub lhs_low: f64,
    pub lhs_high: f64,
    pub verdict: Verdict,
}

/// Pass when the upper end of `p_{k+1}` is below the right side, fail when
/// even its lower end is above, inconclusive otherwise.
pub fn check_recursion_empirically(
    scale: &DeskScale,
    p_k: &EstimatorResult,
    p_next: &EstimatorResult,
    w_next: &EstimatorResult,
) -> Result<RecursionReport, McError> {
    let next = scale.next()?;
    if p_k.size.is_some_and(|s| s != scale.size) {
        return Err(McError::Mismatch(format!("p_k refers to size {:?}, not {}", p_k.size, scale.size)));
    }
    for (name, e) in [("p_{k+1}", p_next), ("w_{k+1}", w_next)] {
        if e.size.is_some_and(|s| s != next.size) {
            return Err(McError::Mismatch(format!("{name} refers to size {:?}, not {}", e.size, next.size)));
        }
    }
    let energies: Vec<f64> = [p_k, p_next, w_next].iter().filter_map(|e| e.energy).collect();
    if energies.windows(2).any(|w| w[0] != w[1]) {
        return Err(McError::Mismatch(format!("estimates at different energies {energies:?}")));
    }
    let rhs_upper =
        0.5 * (next.cells as f64 * p_k.ci_high).powi(next.budget as i32 + 1) + 0.5 * w_next.ci_high;
    let verdict = if p_next.ci_high <= rhs_upper {
        Verdict::Pass
    } else if p_next.ci_low > rhs_upper {
        Verdict::Fail
    } else {
        Verdict::Inconclusive
    };
    Ok(RecursionReport {
        k: scale.k,
        cells: next.cells,
        budget: next.budget,
        rhs_upper,
        lhs_low: p_next.ci_low,
        lhs_high: p_next.ci_high,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc::NextScale;

    fn scale() -> DeskScale {
        DeskScale {
            dim: 1,
            k: 0,
            size: 3,
            growth: 9,
            b: 5.0,
            s: 3.0,
            next: Some(NextScale {
                size: 27,
                growth: 9,
                budget: 1,
                good: 3,
                cells: 23,
            }),
        }
    }

    fn est(k: u64, n: u64, size: u64) -> EstimatorResult {
        EstimatorResult::from_counts("e", k, n, 0).unwrap().at(size, -1.0)
    }

    #[test]
    fn zero_counts_are_inconclusive() {
        // the upper end of p_{k+1} alone exceeds half the upper end of w
        let r = check_recursion_empirically(&scale(), &est(0, 10_000, 3), &est(0, 10_000, 27), &est(0, 10_000, 27))
            .unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
        assert!(r.lhs_low <= r.rhs_upper);
        let r = check_recursion_empirically(&scale(), &est(300, 10_000, 3), &est(0, 10_000, 27), &est(0, 10_000, 27))
            .unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
    }

    #[test]
    fn inflated_next_scale_is_flagged() {
        let r = check_recursion_empirically(&scale(), &est(0, 10_000, 3), &est(5000, 10_000, 27), &est(0, 10_000, 27))
            .unwrap();
        assert_eq!(r.verdict, Verdict::Fail);
        let r = check_recursion_empirically(&scale(), &est(0, 1000, 3), &est(1, 1000, 27), &est(0, 1000, 27)).unwrap();
        assert_eq!(r.verdict, Verdict::Inconclusive);
    }

    #[test]
    fn mismatched_estimates_are_rejected() {
        let wrong = est(0, 10, 9);
        assert!(check_recursion_empirically(&scale(), &wrong, &est(0, 10, 27), &est(0, 10, 27)).is_err());
        let other_energy = EstimatorResult::from_counts("e", 0, 10, 0).unwrap().at(27, 2.0);
        assert!(check_recursion_empirically(&scale(), &est(0, 10, 3), &other_energy, &est(0, 10, 27)).is_err());
    }
}
