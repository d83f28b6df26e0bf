//! Fixed-shape pairwise reduction.
//!
//! Floating-point addition is not associative, so the *shape* of a
//! reduction tree is part of a result's identity. Everything in this crate
//! that sums over work items — loss terms over collocation chunks, region
//! pooling over perturbed points, gradient accumulation across threads —
//! reduces through [`pairwise`], whose tree depends only on the number of
//! items. Results are therefore bitwise identical across runs and across
//! thread counts.
//!
//! Pairwise summation also has `O(log n)` error growth versus `O(n)` for a
//! serial chain, which is a free bonus.

/// Reduce adjacent pairs level by level; an odd tail item passes through to
/// the next level unchanged. Returns `None` on empty input.
pub fn pairwise<T>(mut items: Vec<T>, mut combine: impl FnMut(T, T) -> T) -> Option<T> {
    if items.is_empty() {
        return None;
    }
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len() / 2 + 1);
        let mut it = items.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        items = next;
    }
    items.pop()
}

/// Pairwise sum of scalars.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    pairwise(xs.to_vec(), |a, b| a + b).unwrap_or(0.0)
}

/// Pairwise elementwise sum of equally sized vectors (consumes them).
pub fn pairwise_sum_vecs(items: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    pairwise(items, |mut a, b| {
        debug_assert_eq!(a.len(), b.len());
        for (ai, bi) in a.iter_mut().zip(&b) {
            *ai += bi;
        }
        a
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sums_match_reference() {
        let xs: Vec<f64> = (1..=100).map(|i| 1.0 / i as f64).collect();
        let serial: f64 = xs.iter().sum();
        let tree = pairwise_sum(&xs);
        assert!((serial - tree).abs() < 1e-12);
    }

    #[test]
    fn identical_items_sum_exactly_for_power_of_two_counts() {
        // (b+b)+(b+b) = 4b with no rounding; relied upon by region pooling
        // edge-case tests.
        let b = 0.1234567890123_f64;
        let s = pairwise_sum(&[b; 4]);
        assert_eq!(s, 4.0 * b);
        let s8 = pairwise_sum(&[b; 8]);
        assert_eq!(s8, 8.0 * b);
    }

    #[test]
    fn shape_handles_odd_lengths() {
        // ((1+2)+(3+4)) + 5 for length 5
        let got = pairwise(vec![1.0, 2.0, 3.0, 4.0, 5.0], |a, b| a + b).unwrap();
        assert_eq!(got, 15.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
        assert_eq!(pairwise_sum(&[7.0]), 7.0);
    }
}
