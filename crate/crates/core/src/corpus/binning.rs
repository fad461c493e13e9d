use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bottom / middle / top share of the distribution.
pub const BIN_PROPORTIONS: (f64, f64, f64) = (0.3, 0.4, 0.3);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BinLabel {
    Low,
    Mid,
    High,
}

impl BinLabel {
    pub const ALL: [BinLabel; 3] = [BinLabel::Low, BinLabel::Mid, BinLabel::High];
}

impl fmt::Display for BinLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BinLabel::Low => "low",
            BinLabel::Mid => "mid",
            BinLabel::High => "high",
        })
    }
}

/// Cut points between the Low/Mid and Mid/High bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinThresholds {
    pub lo: f64,
    pub hi: f64,
}

/// Linear-interpolation percentile on sorted data, rank = p * (n - 1).
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Fits Low/Mid/High cut points so that `proportions` of the values fall
/// into each bin.
pub fn compute_bin_thresholds(values: &[f64], proportions: (f64, f64, f64)) -> Result<BinThresholds> {
    if values.is_empty() {
        return Err(Error::EmptyInput("bin threshold values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("bin threshold values"));
    }
    let (low, mid, _) = proportions;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(BinThresholds {
        lo: percentile(&sorted, low),
        hi: percentile(&sorted, low + mid),
    })
}

/// Values equal to a threshold land in Mid.
pub fn assign_bin(value: f64, thresholds: &BinThresholds) -> BinLabel {
    if value < thresholds.lo {
        BinLabel::Low
    } else if value > thresholds.hi {
        BinLabel::High
    } else {
        BinLabel::Mid
    }
}
