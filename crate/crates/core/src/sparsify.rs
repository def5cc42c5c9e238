//! Top-K% binarization of attribution maps.

use std::cmp::Ordering;

use crate::error::{domain, Result};
use crate::types::{validate_k_percent, AttributionMap, SparsifiedMap};

/// Tie-breaking policy for equal attribution values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Lower pixel index ranks higher.
    #[default]
    ByIndexAsc,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankRule {
    pub k_percent: f64,
    pub tie_break: TieBreak,
}

impl RankRule {
    pub fn top(k_percent: f64) -> Self {
        Self {
            k_percent,
            tie_break: TieBreak::ByIndexAsc,
        }
    }
}

/// Number of pixels selected as "important": `⌊K·N/100⌋`.
pub fn selected_count(k_percent: f64, num_pixels: usize) -> usize {
    let exact = k_percent * num_pixels as f64 / 100.0;
    // Guard against products like 0.29 * 100 landing just below an integer.
    let m = (exact + 1e-9).floor() as usize;
    m.min(num_pixels)
}

/// Marks the `⌊K·N/100⌋` highest-ranked pixels with 1 and the rest with 0.
pub fn sparsify(map: &AttributionMap, rule: RankRule) -> Result<SparsifiedMap> {
    validate_k_percent(rule.k_percent)?;
    let values = map.values();
    if let Some(i) = values.iter().position(|v| v.is_nan()) {
        return domain(format!("attribution value at pixel {i} is NaN"));
    }
    let n = values.len();
    let m = selected_count(rule.k_percent, n);
    let mut bits = vec![false; n];
    if m > 0 {
        let rank_order = |&a: &usize, &b: &usize| -> Ordering {
            match rule.tie_break {
                TieBreak::ByIndexAsc => values[b].total_cmp(&values[a]).then(a.cmp(&b)),
            }
        };
        let mut idx: Vec<usize> = (0..n).collect();
        if m < n {
            idx.select_nth_unstable_by(m - 1, rank_order);
        }
        for &i in &idx[..m] {
            bits[i] = true;
        }
    }
    Ok(SparsifiedMap {
        height: map.height(),
        width: map.width(),
        bits,
        k_percent: rule.k_percent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn map(h: usize, w: usize, v: Vec<f64>) -> AttributionMap {
        AttributionMap::new(h, w, v).unwrap()
    }

    #[test]
    fn top_half_of_four() {
        let s = sparsify(&map(2, 2, vec![4.0, 3.0, 2.0, 1.0]), RankRule::top(50.0)).unwrap();
        assert_eq!(s.bits, vec![true, true, false, false]);
    }

    #[test]
    fn ties_break_toward_low_indices() {
        let s = sparsify(&map(4, 4, vec![1.0; 16]), RankRule::top(25.0)).unwrap();
        let ones: Vec<usize> = s.ones().collect();
        assert_eq!(ones, vec![0, 1, 2, 3]);
    }

    #[test]
    fn zero_selection_is_valid() {
        let s = sparsify(&map(2, 2, vec![1.0, 2.0, 3.0, 4.0]), RankRule::top(10.0)).unwrap();
        assert_eq!(s.popcount(), 0);
    }

    #[test]
    fn full_selection() {
        let s = sparsify(&map(2, 2, vec![1.0, 2.0, 3.0, 4.0]), RankRule::top(100.0)).unwrap();
        assert_eq!(s.popcount(), 4);
    }

    #[test]
    fn nan_is_rejected() {
        let m = AttributionMap::new_unchecked(1, 2, vec![f64::NAN, 1.0]);
        assert!(sparsify(&m, RankRule::top(50.0)).is_err());
    }

    #[test]
    fn invalid_k_is_rejected() {
        let m = map(1, 2, vec![0.0, 1.0]);
        assert!(sparsify(&m, RankRule::top(0.0)).is_err());
        assert!(sparsify(&m, RankRule::top(100.5)).is_err());
    }

    #[test]
    fn selected_count_floors() {
        assert_eq!(selected_count(30.0, 1024), 307);
        assert_eq!(selected_count(50.0, 4), 2);
        assert_eq!(selected_count(29.0, 100), 29);
        assert_eq!(selected_count(5.0, 4096), 204);
    }

    proptest! {
        #[test]
        fn invariant_under_increasing_transform(vals in prop::collection::vec(-5.0f64..5.0, 64), k in 1.0f64..100.0) {
            let a = sparsify(&map(8, 8, vals.clone()), RankRule::top(k)).unwrap();
            let b = sparsify(&map(8, 8, vals.iter().map(|v| v.exp() * 3.0 + 1.0).collect()), RankRule::top(k)).unwrap();
            prop_assert_eq!(a.bits, b.bits);
        }

        #[test]
        fn nested_in_k(vals in prop::collection::vec(0i32..6, 36), k1 in 1.0f64..100.0, k2 in 1.0f64..100.0) {
            let vals: Vec<f64> = vals.into_iter().map(f64::from).collect();
            let (lo, hi) = if k1 <= k2 { (k1, k2) } else { (k2, k1) };
            let a = sparsify(&map(6, 6, vals.clone()), RankRule::top(lo)).unwrap();
            let b = sparsify(&map(6, 6, vals), RankRule::top(hi)).unwrap();
            prop_assert_eq!(a.popcount(), selected_count(lo, 36));
            for i in a.ones() {
                prop_assert!(b.bits[i]);
            }
        }
    }
}
