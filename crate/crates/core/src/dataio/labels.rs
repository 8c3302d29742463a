use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Three-way valence bin, ordered `Low < Medium < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LabelBin {
    Low = 0,
    Medium = 1,
    High = 2,
}

impl LabelBin {
    pub const ALL: [LabelBin; 3] = [LabelBin::Low, LabelBin::Medium, LabelBin::High];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Top of a rating scale whose midpoint is `scale_mid` (3 → 5-point, 5 → 9-point).
pub fn scale_max(scale_mid: u32) -> u32 {
    2 * scale_mid - 1
}

pub fn bin_annotation(rating: u32, scale_mid: u32) -> Result<LabelBin> {
    if scale_mid < 1 {
        return Err(Error::domain("scale midpoint must be at least 1"));
    }
    if rating < 1 || rating > scale_max(scale_mid) {
        return Err(Error::domain(format!(
            "rating {rating} outside scale 1..={}",
            scale_max(scale_mid)
        )));
    }
    Ok(match rating.cmp(&scale_mid) {
        std::cmp::Ordering::Less => LabelBin::Low,
        std::cmp::Ordering::Equal => LabelBin::Medium,
        std::cmp::Ordering::Greater => LabelBin::High,
    })
}

/// Majority bin over all annotations; `None` when the top count is tied.
pub fn majority_label(annotations: &[u32], scale_mid: u32) -> Result<Option<LabelBin>> {
    if annotations.is_empty() {
        return Err(Error::domain("no annotations to aggregate"));
    }
    let mut counts = [0usize; 3];
    for &r in annotations {
        counts[bin_annotation(r, scale_mid)?.index()] += 1;
    }
    let top = *counts.iter().max().expect("three bins");
    let mut winners = LabelBin::ALL.iter().filter(|b| counts[b.index()] == top);
    let first = winners.next().copied();
    Ok(if winners.next().is_some() { None } else { first })
}
