//! Round-level metrics and the paired sign test used to compare methods.

use crate::allocator::AllocationPlan;
use crate::tracker::SuccessRateTable;

/// Success rate at or above which a task counts as mastered.
pub const HIGH_SUCCESS: f64 = 0.8;

/// Number of tasks with `s_hat > threshold`.
pub fn tasks_above(table: &SuccessRateTable, threshold: f64) -> usize {
    table.records().filter(|r| r.s_hat > threshold).count()
}

/// Fraction of the plan's slots whose assigned task had `s_hat >= 0.8` in
/// `table`, the estimate the plan was drawn from.
pub fn high_success_fraction(plan: &AllocationPlan, table: &SuccessRateTable) -> f64 {
    if plan.is_empty() {
        return 0.0;
    }
    let hits = plan
        .slots
        .iter()
        .filter(|s| table.s_hat(s.assigned) >= HIGH_SUCCESS)
        .count();
    hits as f64 / plan.len() as f64
}

/// Windowed high-success fractions. `tables[i]` must be the pre-round table
/// that produced `plans[i]`. Slots are pooled within each window of
/// `window` rounds; a trailing partial window is included.
pub fn high_success_series(plans: &[AllocationPlan], tables: &[SuccessRateTable], window: usize) -> Vec<f64> {
    assert_eq!(plans.len(), tables.len(), "one table per plan");
    let window = window.max(1);
    plans
        .chunks(window)
        .zip(tables.chunks(window))
        .map(|(ps, ts)| {
            let mut hits = 0.0;
            let mut total = 0usize;
            for (p, t) in ps.iter().zip(ts) {
                hits += high_success_fraction(p, t) * p.len() as f64;
                total += p.len();
            }
            if total == 0 {
                0.0
            } else {
                hits / total as f64
            }
        })
        .collect()
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `wins + losses` fair coin flips. Ties are dropped by the caller.
pub fn sign_test(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let mut p = 0.0;
    for k in wins..=n {
        p += binomial(n, k) * 0.5f64.powi(n as i32);
    }
    p.min(1.0)
}

/// Wins and losses of `a` over `b`, pairwise; exact ties are dropped.
pub fn paired_wins(a: &[f64], b: &[f64]) -> (usize, usize) {
    a.iter().zip(b).fold((0, 0), |(w, l), (x, y)| {
        if x > y {
            (w + 1, l)
        } else if x < y {
            (w, l + 1)
        } else {
            (w, l)
        }
    })
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::allocate_uniform;
    use crate::tracker::RoundCounts;
    use crate::types::TaskId;
    use std::collections::BTreeMap;

    fn table(rates: &[f64]) -> SuccessRateTable {
        let ids: Vec<TaskId> = (0..rates.len() as u32).map(TaskId).collect();
        let t = SuccessRateTable::new(&ids, 16, 0.6, 0.0).unwrap();
        let counts: BTreeMap<_, _> = ids
            .iter()
            .zip(rates)
            .map(|(&id, &r)| {
                (
                    id,
                    RoundCounts {
                        sampled: 100,
                        successes: (r * 100.0).round() as u64,
                    },
                )
            })
            .collect();
        t.update_round(&counts).unwrap()
    }

    #[test]
    fn tasks_above_is_strict() {
        assert_eq!(tasks_above(&table(&[0.61, 0.6, 0.2]), 0.6), 1);
        assert_eq!(tasks_above(&table(&[1.0, 1.0]), 0.6), 2);
        let fresh = SuccessRateTable::new(&[TaskId(0), TaskId(1)], 16, 0.6, 0.0).unwrap();
        assert_eq!(tasks_above(&fresh, 0.6), 0);
    }

    #[test]
    fn high_success_series_extremes() {
        let ids: Vec<TaskId> = (0..4).map(TaskId).collect();
        let plans: Vec<_> = (0..8).map(|r| allocate_uniform(&ids, 16, r)).collect();
        let zeros = vec![table(&[0.0; 4]); 8];
        assert_eq!(high_success_series(&plans, &zeros, 4), vec![0.0, 0.0]);
        let ones = vec![table(&[1.0; 4]); 8];
        assert_eq!(high_success_series(&plans, &ones, 4), vec![1.0, 1.0]);
        let mixed = vec![table(&[0.9, 0.1, 0.9, 0.1]); 8];
        assert_eq!(high_success_series(&plans, &mixed, 4), vec![0.5, 0.5]);
        assert_eq!(high_success_series(&plans[..5], &mixed[..5], 4).len(), 2);
    }

    #[test]
    fn sign_test_values() {
        assert_eq!(sign_test(5, 0), 1.0 / 32.0);
        assert_eq!(sign_test(0, 0), 1.0);
        // P(X >= 4 | n = 5) = 6/32
        assert!((sign_test(4, 1) - 6.0 / 32.0).abs() < 1e-15);
        assert_eq!(paired_wins(&[1.0, 2.0, 3.0], &[0.0, 2.0, 4.0]), (1, 1));
    }
}
