//! Clip-bound tables over a set of segment entropies.

use std::io::Write;

use serde::Serialize;
use sspo_core::{clip_bounds, EntropyConfig};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundsRow {
    pub entropy: f64,
    pub low: f64,
    pub high: f64,
}

pub fn bounds_table(entropies: &[f64], alpha: f64) -> Result<Vec<BoundsRow>> {
    let cfg = EntropyConfig::adaptive(alpha)?;
    entropies
        .iter()
        .map(|&h| {
            let b = clip_bounds(h, &cfg)?;
            Ok(BoundsRow {
                entropy: h,
                low: b.low(),
                high: b.high(),
            })
        })
        .collect()
}

/// `n` evenly spaced entropies on `[0, max]`.
pub fn grid(n: usize, max: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|k| max * k as f64 / (n - 1) as f64).collect(),
    }
}

pub fn write_bounds(out: impl Write, rows: &[BoundsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spot_values() {
        let rows = bounds_table(&[0.0, 0.7, 1.5], 0.2).unwrap();
        let pairs: Vec<_> = rows.iter().map(|r| (r.low, r.high)).collect();
        assert_eq!(pairs[0], (0.8, 1.2));
        assert!((pairs[1].0 - 0.6).abs() < 1e-15 && (pairs[1].1 - 1.9).abs() < 1e-15);
        assert_eq!(pairs[2], (0.3, 2.7));
    }

    #[test]
    fn grid_endpoints() {
        let g = grid(5, 2.0);
        assert_eq!(g, vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(grid(0, 1.0).is_empty());
    }

    #[test]
    fn negative_entropy_rejected() {
        assert!(bounds_table(&[-0.1], 0.2).is_err());
    }
}
