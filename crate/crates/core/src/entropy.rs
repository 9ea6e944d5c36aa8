//! Token and segment entropy under the sampling policy, and the
//! entropy-adaptive clip interval derived from it.
//!
//! High-entropy segments get a wider interval, low-entropy segments a
//! narrower one. Entropies are inputs recorded at rollout time; nothing here
//! depends on the parameters being optimized.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{ln, mean};
use crate::objective::{segmentation_of, ClipBounds};
use crate::rollout::RolloutGroup;

/// Shannon entropy in nats; `0 ln 0` counts as 0.
pub fn token_entropy(dist: &[f64]) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::Empty("distribution"));
    }
    if dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::NotNormalized(
            "entries must be finite and non-negative".into(),
        ));
    }
    let total: f64 = dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalized(format!("sums to {total}")));
    }
    Ok(-dist
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * ln(p))
        .sum::<f64>())
}

/// Mean of the token entropies in a segment.
pub fn segment_entropy(token_entropies: &[f64]) -> Result<f64> {
    if token_entropies.is_empty() {
        return Err(Error::Empty("segment"));
    }
    if let Some(&h) = token_entropies.iter().find(|h| !(**h >= 0.0) || !h.is_finite()) {
        return Err(Error::Negative {
            what: "token entropy",
            value: h,
        });
    }
    Ok(mean(token_entropies))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClipMode {
    /// Bounds from the segment entropy.
    Adaptive,
    /// The same bounds for every segment.
    Fixed(ClipBounds),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyConfig {
    /// Offset in the upper bound `1 + alpha + H`.
    pub alpha: f64,
    pub mode: ClipMode,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            alpha: 0.2,
            mode: ClipMode::Adaptive,
        }
    }
}

impl EntropyConfig {
    pub fn adaptive(alpha: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            mode: ClipMode::Adaptive,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn fixed(bounds: ClipBounds) -> Self {
        Self {
            alpha: 0.2,
            mode: ClipMode::Fixed(bounds),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Negative {
                what: "alpha",
                value: self.alpha,
            });
        }
        Ok(())
    }
}

fn lower_bound(h: f64) -> f64 {
    if h > 1.0 {
        0.3
    } else if h >= 0.5 {
        1.3 - h
    } else {
        0.8
    }
}

/// Clip interval for a segment with mean entropy `h`:
/// `high = 1 + alpha + h`, `low = 0.3 | 1.3 - h | 0.8` for `h > 1`,
/// `0.5 <= h <= 1` and `h < 0.5` respectively.
pub fn clip_bounds(h: f64, cfg: &EntropyConfig) -> Result<ClipBounds> {
    cfg.validate()?;
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::Negative {
            what: "segment entropy",
            value: h,
        });
    }
    match cfg.mode {
        ClipMode::Fixed(bounds) => Ok(bounds),
        ClipMode::Adaptive => ClipBounds::new(lower_bound(h), 1.0 + cfg.alpha + h),
    }
}

/// Clip bounds for every segment of every response in `group`.
///
/// Adaptive mode needs every token's old-policy entropy.
pub fn segment_bounds(group: &RolloutGroup, cfg: &EntropyConfig) -> Result<Vec<Vec<ClipBounds>>> {
    let mut out = Vec::with_capacity(group.size());
    for i in 0..group.size() {
        let seg = segmentation_of(group, i)?;
        let per_segment = match cfg.mode {
            ClipMode::Fixed(bounds) => alloc::vec![bounds; seg.num_segments()],
            ClipMode::Adaptive => {
                let entropies = token_entropies(group, i)?;
                seg.spans()
                    .iter()
                    .map(|span| clip_bounds(segment_entropy(&entropies[span.range()])?, cfg))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        out.push(per_segment);
    }
    Ok(out)
}

/// Old-policy entropies of response `i`, erroring on the first missing one.
pub fn token_entropies(group: &RolloutGroup, i: usize) -> Result<Vec<f64>> {
    group.responses[i]
        .tokens
        .iter()
        .enumerate()
        .map(|(t, tok)| {
            tok.old_entropy.ok_or(Error::MissingEntropy {
                response: i,
                token: t,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rollout::{Response, TokenRecord};
    use crate::segment::{Segmentation, Span};
    use alloc::vec;
    use proptest::prelude::*;

    fn pair(b: ClipBounds) -> (f64, f64) {
        (b.low(), b.high())
    }

    #[test]
    fn token_entropy_examples() {
        assert_eq!(token_entropy(&[0.0, 1.0, 0.0]).unwrap(), 0.0);
        assert!((token_entropy(&[0.25; 4]).unwrap() - libm::log(4.0)).abs() < 1e-15);
        assert!((token_entropy(&[0.5, 0.5]).unwrap() - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn token_entropy_rejects_bad_distributions() {
        assert!(matches!(token_entropy(&[0.5, 0.6]), Err(Error::NotNormalized(_))));
        assert!(token_entropy(&[1.5, -0.5]).is_err());
        assert!(token_entropy(&[]).is_err());
    }

    #[test]
    fn segment_entropy_examples() {
        assert_eq!(segment_entropy(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(segment_entropy(&[1.0]).unwrap(), 1.0);
        assert!((segment_entropy(&[0.2, 0.8, 1.4]).unwrap() - 0.8).abs() < 1e-15);
        assert!(segment_entropy(&[]).is_err());
        assert!(segment_entropy(&[0.1, -0.1]).is_err());
    }

    #[test]
    fn clip_bounds_examples() {
        let cfg = EntropyConfig::adaptive(0.2).unwrap();
        assert_eq!(pair(clip_bounds(0.0, &cfg).unwrap()), (0.8, 1.2));
        let (lo, hi) = pair(clip_bounds(0.7, &cfg).unwrap());
        assert!((lo - 0.6).abs() < 1e-15 && (hi - 1.9).abs() < 1e-15);
        assert_eq!(pair(clip_bounds(1.5, &cfg).unwrap()), (0.3, 2.7));
        assert!(clip_bounds(-0.1, &cfg).is_err());
        assert!(EntropyConfig::adaptive(-1.0).is_err());
    }

    #[test]
    fn fixed_mode_ignores_entropy() {
        let b = ClipBounds::new(0.9, 1.1).unwrap();
        let cfg = EntropyConfig::fixed(b);
        assert_eq!(clip_bounds(2.0, &cfg).unwrap(), b);
    }

    #[test]
    fn branch_edges() {
        assert_eq!(lower_bound(0.5), 0.8);
        assert_eq!(lower_bound(1.0), 1.3 - 1.0);
        assert_eq!(lower_bound(1.0 + 1e-12), 0.3);
        assert_eq!(lower_bound(0.5 - 1e-12), 0.8);
    }

    #[test]
    fn segment_bounds_use_segment_means() {
        let tokens = [0.2, 0.8, 1.4, 0.0]
            .iter()
            .map(|&h| TokenRecord::new(1, -1.0, -1.0).with_entropy(h))
            .collect();
        let mut r = Response::new(tokens, 1.0);
        r.segmentation =
            Some(Segmentation::from_spans(vec![Span::new(0, 3), Span::new(3, 4)], 4).unwrap());
        let g = RolloutGroup::new("q", vec![r.clone(), r]);
        let b = segment_bounds(&g, &EntropyConfig::default()).unwrap();
        assert_eq!(b.len(), 2);
        let (lo, hi) = pair(b[0][0]);
        assert!((lo - 0.5).abs() < 1e-12 && (hi - 2.0).abs() < 1e-12);
        assert_eq!(pair(b[0][1]), (0.8, 1.2));
    }

    #[test]
    fn adaptive_without_entropy_is_an_error() {
        let mut r = Response::new(vec![TokenRecord::new(1, -1.0, -1.0); 2], 1.0);
        r.segmentation = Some(Segmentation::whole(2).unwrap());
        let g = RolloutGroup::new("q", vec![r.clone(), r]);
        assert_eq!(
            segment_bounds(&g, &EntropyConfig::default()),
            Err(Error::MissingEntropy { response: 0, token: 0 })
        );
        let fixed = EntropyConfig::fixed(ClipBounds::symmetric(0.2).unwrap());
        assert!(segment_bounds(&g, &fixed).is_ok());
    }

    #[test]
    fn closed_form_on_grid() {
        let cfg = EntropyConfig::adaptive(0.2).unwrap();
        for k in 0..=4000 {
            let h = k as f64 * 5e-4;
            let b = clip_bounds(h, &cfg).unwrap();
            assert_eq!(b.low(), (1.3 - h).clamp(0.3, 0.8));
            assert_eq!(b.high(), 1.0 + 0.2 + h);
        }
    }

    proptest! {
        #[test]
        fn interval_properties(h in 0.0f64..5.0, dh in 1e-6f64..1.0, alpha in 0.0f64..1.0) {
            let cfg = EntropyConfig::adaptive(alpha).unwrap();
            let a = clip_bounds(h, &cfg).unwrap();
            let b = clip_bounds(h + dh, &cfg).unwrap();
            prop_assert!((0.3..=0.8).contains(&a.low()));
            prop_assert!(a.high() >= 1.0 + alpha);
            prop_assert!(a.low() < 1.0 && 1.0 < a.high());
            prop_assert!(b.high() > a.high());
            prop_assert!(b.low() <= a.low());
        }

        #[test]
        fn entropy_bounded_by_log_vocab(raw in proptest::collection::vec(0.0f64..1.0, 1..12)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let dist: Vec<f64> = raw.iter().map(|p| p / total).collect();
            let h = token_entropy(&dist).unwrap();
            prop_assert!(h >= 0.0);
            prop_assert!(h <= libm::log(dist.len() as f64) + 1e-12);
        }
    }
}
