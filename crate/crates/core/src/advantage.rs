//! Group-relative advantages: rewards standardized within their group.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::sqrt;

/// Below this population standard deviation a group is treated as degenerate.
pub const DEGENERATE_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    /// All rewards in the group were equal; every value is zero.
    pub degenerate: bool,
}

impl AdvantageVector {
    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        self.values.len()
    }
}

/// `(r_i - mean) / std` with the population (divide-by-G) standard deviation.
pub fn group_advantages(rewards: &[f64]) -> Result<AdvantageVector> {
    let g = rewards.len();
    if g < 2 {
        return Err(Error::GroupTooSmall(g));
    }
    if rewards.iter().any(|r| !r.is_finite()) {
        return Err(Error::NonFinite("reward"));
    }
    let n = g as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = sqrt(var);
    if std < DEGENERATE_STD {
        return Ok(AdvantageVector {
            values: vec![0.0; g],
            degenerate: true,
        });
    }
    Ok(AdvantageVector {
        values: rewards.iter().map(|r| (r - mean) / std).collect(),
        degenerate: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_point_group() {
        let a = group_advantages(&[1.0, 0.0]).unwrap();
        assert_eq!(a.values, vec![1.0, -1.0]);
        assert!(!a.degenerate);
    }

    #[test]
    fn equal_rewards_are_degenerate() {
        let a = group_advantages(&[1.0; 4]).unwrap();
        assert!(a.degenerate);
        assert_eq!(a.values, vec![0.0; 4]);
    }

    #[test]
    fn one_success_in_four() {
        // mean 0.25, population std sqrt(3)/4
        let a = group_advantages(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        let expected = [1.732_050_807_568_877_2, -0.577_350_269_189_625_8, -0.577_350_269_189_625_8, -0.577_350_269_189_625_8];
        for (v, e) in a.values.iter().zip(expected) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_small_or_non_finite() {
        assert_eq!(group_advantages(&[1.0]), Err(Error::GroupTooSmall(1)));
        assert_eq!(group_advantages(&[]), Err(Error::GroupTooSmall(0)));
        assert!(group_advantages(&[1.0, f64::INFINITY]).is_err());
    }

    fn rewards() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 2..16)
    }

    proptest! {
        #[test]
        fn standardized(r in rewards()) {
            let a = group_advantages(&r).unwrap();
            let n = a.len() as f64;
            let sum: f64 = a.values.iter().sum();
            prop_assert!(sum.abs() < 1e-9);
            if !a.degenerate {
                let var = a.values.iter().map(|v| v * v).sum::<f64>() / n;
                prop_assert!((sqrt(var) - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn shift_invariant(r in rewards(), c in -100.0f64..100.0) {
            let a = group_advantages(&r).unwrap();
            let shifted: Vec<f64> = r.iter().map(|x| x + c).collect();
            let b = group_advantages(&shifted).unwrap();
            prop_assume!(!a.degenerate && !b.degenerate);
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }

        #[test]
        fn positive_scale_invariant(r in rewards(), k in 0.01f64..100.0) {
            let a = group_advantages(&r).unwrap();
            prop_assume!(!a.degenerate);
            let scaled: Vec<f64> = r.iter().map(|x| x * k).collect();
            let b = group_advantages(&scaled).unwrap();
            for (x, y) in a.values.iter().zip(&b.values) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }
}
