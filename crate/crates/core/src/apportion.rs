//! Largest-remainder (Hamilton) apportionment with per-slot caps.

use crate::error::{ClimdError, Result};

/// Splits `total` into integer counts proportional to `weights`.
///
/// Each slot first receives the floor of its quota; the leftover units go to
/// the largest fractional parts, ties to the lower index. Slots whose count
/// would exceed their cap are pinned at the cap and the remainder is
/// re-apportioned over the rest, repeating until nothing overflows.
///
/// Weights need not be normalized. If every open slot has zero weight the
/// remaining units are spread evenly over the open slots.
pub fn apportion(weights: &[f64], total: u64, caps: &[u64]) -> Result<Vec<u64>> {
    if weights.len() != caps.len() {
        return Err(ClimdError::validation(format!(
            "{} weights but {} caps",
            weights.len(),
            caps.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
        return Err(ClimdError::validation(format!("invalid weight {w}")));
    }
    let capacity: u64 = caps.iter().sum();
    if total > capacity {
        return Err(ClimdError::Infeasible(format!(
            "requested {total} samples but only {capacity} available"
        )));
    }

    let n = weights.len();
    let mut counts = vec![0u64; n];
    let mut open: Vec<usize> = (0..n).collect();
    let mut remaining = total;

    while remaining > 0 {
        let mass: f64 = open.iter().map(|&i| weights[i]).sum();
        let share = |i: usize| {
            if mass > 0.0 {
                weights[i] / mass
            } else {
                1.0 / open.len() as f64
            }
        };
        let alloc = largest_remainder(&open.iter().map(|&i| share(i)).collect::<Vec<_>>(), remaining);

        let overflow: Vec<usize> = open
            .iter()
            .zip(&alloc)
            .filter(|(&i, &a)| a > caps[i])
            .map(|(&i, _)| i)
            .collect();
        if overflow.is_empty() {
            for (&i, a) in open.iter().zip(alloc) {
                counts[i] = a;
            }
            break;
        }
        for &i in &overflow {
            counts[i] = caps[i];
            remaining -= caps[i];
        }
        open.retain(|i| !overflow.contains(i));
    }
    Ok(counts)
}

/// Unconstrained Hamilton split of `total` by `shares` (summing to ~1).
fn largest_remainder(shares: &[f64], total: u64) -> Vec<u64> {
    let quotas: Vec<f64> = shares.iter().map(|s| s * total as f64).collect();
    let mut counts: Vec<u64> = quotas.iter().map(|q| q.floor() as u64).collect();
    let assigned: u64 = counts.iter().sum();
    let mut order: Vec<usize> = (0..shares.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    // floating error can leave the floors a unit or two off in either direction
    if assigned <= total {
        for &i in order.iter().cycle().take((total - assigned) as usize) {
            counts[i] += 1;
        }
    } else {
        let mut excess = assigned - total;
        for &i in order.iter().rev().cycle() {
            if excess == 0 {
                break;
            }
            if counts[i] > 0 {
                counts[i] -= 1;
                excess -= 1;
            }
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_split() {
        assert_eq!(apportion(&[0.1; 10], 100, &[50; 10]).unwrap(), vec![10; 10]);
    }

    #[test]
    fn integral_quotas_are_exact() {
        assert_eq!(apportion(&[0.5, 0.3, 0.2], 10, &[10, 10, 10]).unwrap(), vec![5, 3, 2]);
    }

    #[test]
    fn remainder_ties_go_to_lower_index() {
        assert_eq!(apportion(&[1.0, 1.0, 1.0], 4, &[9, 9, 9]).unwrap(), vec![2, 1, 1]);
        assert_eq!(apportion(&[0.25; 4], 2, &[9; 4]).unwrap(), vec![1, 1, 0, 0]);
    }

    #[test]
    fn overflow_is_redistributed() {
        // quotas (6, 3, 1); slot 0 capped at 2 pushes 4 units onto the rest by 3:1
        assert_eq!(apportion(&[0.6, 0.3, 0.1], 10, &[2, 10, 10]).unwrap(), vec![2, 6, 2]);
        // cascading caps
        assert_eq!(apportion(&[0.7, 0.2, 0.1], 10, &[1, 1, 20]).unwrap(), vec![1, 1, 8]);
        assert_eq!(apportion(&[0.5, 0.5], 6, &[3, 3]).unwrap(), vec![3, 3]);
    }

    #[test]
    fn zero_weights_share_evenly() {
        assert_eq!(apportion(&[1.0, 0.0, 0.0], 5, &[1, 5, 5]).unwrap(), vec![1, 2, 2]);
    }

    #[test]
    fn infeasible_total() {
        let err = apportion(&[0.5, 0.5], 11, &[5, 5]).unwrap_err();
        assert!(matches!(err, ClimdError::Infeasible(_)));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn zero_total() {
        assert_eq!(apportion(&[0.5, 0.5], 0, &[0, 0]).unwrap(), vec![0, 0]);
    }

    proptest! {
        #[test]
        fn exact_total_and_caps(
            slots in prop::collection::vec((0.0f64..1.0, 0u64..200), 1..15),
            frac in 0.0f64..=1.0,
        ) {
            let weights: Vec<f64> = slots.iter().map(|s| s.0).collect();
            let caps: Vec<u64> = slots.iter().map(|s| s.1).collect();
            let total = (caps.iter().sum::<u64>() as f64 * frac).floor() as u64;
            let counts = apportion(&weights, total, &caps).unwrap();
            prop_assert_eq!(counts.iter().sum::<u64>(), total);
            for (c, cap) in counts.iter().zip(&caps) {
                prop_assert!(c <= cap);
            }
        }

        #[test]
        fn uncapped_counts_are_within_one_of_quota(
            raw in prop::collection::vec(0.01f64..1.0, 1..15),
            total in 0u64..5000,
        ) {
            let z: f64 = raw.iter().sum();
            let caps = vec![total; raw.len()];
            let counts = apportion(&raw, total, &caps).unwrap();
            prop_assert_eq!(counts.iter().sum::<u64>(), total);
            for (c, w) in counts.iter().zip(&raw) {
                prop_assert!((*c as f64 - w / z * total as f64).abs() < 1.0);
            }
        }
    }
}
