//! Outlier filters for swept depth maps: best-cost threshold, uniqueness
//! ratio and local depth continuity.

use crate::depth::DepthMap;
use crate::error::{Error, Result};

/// Denominator floor for the uniqueness ratio.
const MIN_BEST_COST: f32 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct FilterConfig {
    pub alpha_upper: f64,
    pub alpha_lower: f64,
    /// Rows above this use `alpha_upper`; `None` splits at half the height.
    pub horizon_row: Option<usize>,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub consistency_window: usize,
    pub enable_cost: bool,
    pub enable_uniqueness: bool,
    pub enable_consistency: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            alpha_upper: 0.05,
            alpha_lower: 0.3,
            horizon_row: None,
            beta: 1.2,
            gamma: 0.5,
            delta: 0.3,
            consistency_window: 5,
            enable_cost: true,
            enable_uniqueness: true,
            enable_consistency: true,
        }
    }
}

impl FilterConfig {
    /// All three filters switched off.
    pub fn disabled() -> Self {
        Self {
            enable_cost: false,
            enable_uniqueness: false,
            enable_consistency: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        let unit = |a: f64| a > 0.0 && a <= 1.0;
        if !unit(self.alpha_upper) || !unit(self.alpha_lower) {
            return bad("alpha thresholds must lie in (0, 1]");
        }
        if !(self.beta >= 1.0) {
            return bad("beta must be at least 1");
        }
        if !(self.gamma > 0.0) {
            return bad("gamma must be positive");
        }
        if !unit(self.delta) {
            return bad("delta must lie in (0, 1]");
        }
        if self.consistency_window < 3 || self.consistency_window.is_multiple_of(2) {
            return bad("consistency window must be odd and at least 3");
        }
        Ok(())
    }

    fn horizon(&self, height: usize) -> usize {
        self.horizon_row.unwrap_or(height / 2)
    }
}

pub fn best_cost_filter(d: &DepthMap, cfg: &FilterConfig) -> DepthMap {
    let mut out = d.clone();
    let horizon = cfg.horizon(d.height());
    for j in 0..d.height() {
        let alpha = if j < horizon { cfg.alpha_upper } else { cfg.alpha_lower };
        for i in 0..d.width() {
            let k = d.index(i, j);
            if d.is_valid(k) && d.best_cost[k] as f64 > alpha {
                out.invalidate(k);
            }
        }
    }
    out
}

pub fn uniqueness_filter(d: &DepthMap, cfg: &FilterConfig) -> DepthMap {
    let mut out = d.clone();
    for k in 0..d.len() {
        if !d.is_valid(k) {
            continue;
        }
        let ratio = d.second_cost[k] as f64 / d.best_cost[k].max(MIN_BEST_COST) as f64;
        if ratio < cfg.beta {
            out.invalidate(k);
        }
    }
    out
}

/// Invalidates pixels with too few neighbors (center excluded) within
/// `gamma` of their depth. Reads only the input map.
pub fn consistency_filter(d: &DepthMap, cfg: &FilterConfig) -> DepthMap {
    let mut out = d.clone();
    let r = (cfg.consistency_window / 2) as isize;
    let neighbors = (cfg.consistency_window * cfg.consistency_window - 1) as f64;
    let (w, h) = (d.width() as isize, d.height() as isize);
    for j in 0..h {
        for i in 0..w {
            let k = d.index(i as usize, j as usize);
            if !d.is_valid(k) {
                continue;
            }
            let center = d.depth[k];
            let mut consistent = 0usize;
            for dj in -r..=r {
                for di in -r..=r {
                    let (x, y) = (i + di, j + dj);
                    if (di == 0 && dj == 0) || x < 0 || y < 0 || x >= w || y >= h {
                        continue;
                    }
                    let n = d.index(x as usize, y as usize);
                    if d.is_valid(n) && ((d.depth[n] - center).abs() as f64) < cfg.gamma {
                        consistent += 1;
                    }
                }
            }
            if (consistent as f64) / neighbors < cfg.delta {
                out.invalidate(k);
            }
        }
    }
    out
}

/// The enabled filters in order: cost, uniqueness, continuity.
pub fn apply_filters(d: &DepthMap, cfg: &FilterConfig) -> DepthMap {
    let mut out = d.clone();
    if cfg.enable_cost {
        out = best_cost_filter(&out, cfg);
    }
    if cfg.enable_uniqueness {
        out = uniqueness_filter(&out, cfg);
    }
    if cfg.enable_consistency {
        out = consistency_filter(&out, cfg);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(best: f32, second: f32, row: usize) -> DepthMap {
        let mut d = DepthMap::from_depth(1, 10, vec![10.0; 10]).unwrap();
        let k = d.index(0, row);
        d.best_cost[k] = best;
        d.second_cost[k] = second;
        d
    }

    #[test]
    fn cost_threshold_by_region() {
        let cfg = FilterConfig::default();
        let upper = best_cost_filter(&single(0.2, 1.0, 2), &cfg);
        assert!(!upper.is_valid(2));
        let lower = best_cost_filter(&single(0.2, 1.0, 7), &cfg);
        assert!(lower.is_valid(7));
        let zero = DepthMap::from_depth(4, 4, vec![5.0; 16]).unwrap();
        assert_eq!(best_cost_filter(&zero, &cfg), zero);
    }

    #[test]
    fn explicit_horizon_row() {
        let cfg = FilterConfig {
            horizon_row: Some(8),
            ..FilterConfig::default()
        };
        assert!(!best_cost_filter(&single(0.2, 1.0, 7), &cfg).is_valid(7));
        assert!(best_cost_filter(&single(0.2, 1.0, 8), &cfg).is_valid(8));
    }

    #[test]
    fn uniqueness_examples() {
        let cfg = FilterConfig::default();
        assert!(uniqueness_filter(&single(0.1, 0.5, 0), &cfg).is_valid(0));
        assert!(!uniqueness_filter(&single(0.3, 0.31, 0), &cfg).is_valid(0));
        assert!(uniqueness_filter(&single(0.0, 0.1, 0), &cfg).is_valid(0));
    }

    #[test]
    fn consistency_examples() {
        let cfg = FilterConfig::default();
        let flat = DepthMap::from_depth(9, 9, vec![10.0; 81]).unwrap();
        assert_eq!(consistency_filter(&flat, &cfg), flat);

        let mut spike = flat.clone();
        let c = spike.index(4, 4);
        spike.depth[c] = 50.0;
        let out = consistency_filter(&spike, &cfg);
        assert!(!out.is_valid(c));
        assert_eq!(out.valid_count(), 80);
    }

    #[test]
    fn consistency_boundary_is_strict() {
        // 5x5 window: 24 neighbors. delta = 0.25 needs 6 consistent ones.
        let cfg = FilterConfig {
            delta: 0.25,
            ..FilterConfig::default()
        };
        let build = |consistent: usize| {
            let mut d = DepthMap::from_depth(5, 5, vec![40.0; 25]).unwrap();
            let c = d.index(2, 2);
            d.depth[c] = 10.0;
            let mut placed = 0;
            for k in 0..25 {
                if k != c && placed < consistent {
                    d.depth[k] = 10.2;
                    placed += 1;
                }
            }
            d
        };
        let at = consistency_filter(&build(6), &cfg);
        assert!(at.is_valid(12));
        let below = consistency_filter(&build(5), &cfg);
        assert!(!below.is_valid(12));
    }

    #[test]
    fn off_image_neighbors_count_as_inconsistent() {
        // A corner pixel sees at most 8 of 24 neighbors: 8/24 = 0.333 >= 0.3.
        let d = DepthMap::from_depth(3, 3, vec![1.0; 9]).unwrap();
        let out = consistency_filter(&d, &FilterConfig::default());
        assert!(out.is_valid(0));
        let strict = FilterConfig {
            delta: 0.34,
            ..FilterConfig::default()
        };
        assert_eq!(consistency_filter(&d, &strict).valid_count(), 0);
    }

    #[test]
    fn disabled_filters_are_identity() {
        let d = single(0.9, 0.91, 0);
        assert_eq!(apply_filters(&d, &FilterConfig::disabled()), d);
    }

    #[test]
    fn validation() {
        assert!(FilterConfig::default().validate().is_ok());
        for cfg in [
            FilterConfig {
                alpha_upper: 0.0,
                ..FilterConfig::default()
            },
            FilterConfig {
                beta: 0.9,
                ..FilterConfig::default()
            },
            FilterConfig {
                gamma: 0.0,
                ..FilterConfig::default()
            },
            FilterConfig {
                delta: 1.5,
                ..FilterConfig::default()
            },
            FilterConfig {
                consistency_window: 4,
                ..FilterConfig::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    fn arb_map() -> impl Strategy<Value = DepthMap> {
        (4usize..14, 4usize..14).prop_flat_map(|(w, h)| {
            let n = w * h;
            (
                prop::collection::vec(prop_oneof![Just(0.0f32), 1.0f32..20.0], n),
                prop::collection::vec(0.0f32..0.6, n),
                prop::collection::vec(0.0f32..1.0, n),
            )
                .prop_map(move |(depth, best, second)| {
                    let mut d = DepthMap::from_depth(w, h, depth).unwrap();
                    d.best_cost = best;
                    d.second_cost = second;
                    d
                })
        })
    }

    fn subset(a: &DepthMap, b: &DepthMap) -> bool {
        (0..a.len()).all(|k| !a.is_valid(k) || b.is_valid(k))
    }

    proptest! {
        #[test]
        fn filters_are_contractive(d in arb_map(), gamma in 0.1f64..3.0, delta in 0.05f64..1.0) {
            let cfg = FilterConfig { gamma, delta, ..FilterConfig::default() };
            for out in [
                best_cost_filter(&d, &cfg),
                uniqueness_filter(&d, &cfg),
                consistency_filter(&d, &cfg),
                apply_filters(&d, &cfg),
            ] {
                prop_assert!(subset(&out, &d));
                for k in 0..d.len() {
                    if out.is_valid(k) {
                        prop_assert_eq!(out.depth[k], d.depth[k]);
                    }
                }
            }
        }

        #[test]
        fn filters_commute_with_cropping(d in arb_map(), x0 in 0usize..4, y0 in 0usize..4) {
            let cfg = FilterConfig { horizon_row: Some(0), ..FilterConfig::default() };
            let r = cfg.consistency_window / 2;
            prop_assume!(x0 + 2 * r < d.width() && y0 + 2 * r < d.height());
            let (cw, ch) = (d.width() - x0, d.height() - y0);
            let crop_after = apply_filters(&d, &cfg).crop(x0, y0, cw, ch);
            let crop_before = apply_filters(&d.crop(x0, y0, cw, ch), &cfg);
            // Compare away from the window border of the crop.
            for j in r..ch.saturating_sub(r) {
                for i in r..cw.saturating_sub(r) {
                    let k = crop_after.index(i, j);
                    prop_assert_eq!(crop_after.is_valid(k), crop_before.is_valid(k));
                }
            }
        }
    }
}
