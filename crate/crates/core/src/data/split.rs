use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Chronological train/val/test partition.
///
/// `Ett` is 6:2:2, `General` is 7:1:2. Boundaries are `floor(r * T)` on the
/// cumulative ratios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    #[default]
    Ett,
    General,
    Ratios([f64; 3]),
}

impl SplitSpec {
    pub fn ratios(&self) -> [f64; 3] {
        match self {
            SplitSpec::Ett => [0.6, 0.2, 0.2],
            SplitSpec::General => [0.7, 0.1, 0.2],
            SplitSpec::Ratios(r) => *r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.ratios();
        if r.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config(format!("split ratios must be positive, got {r:?}")));
        }
        let total: f64 = r.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn boundaries(&self, len: usize) -> [usize; 2] {
        let r = self.ratios();
        // the tolerance keeps e.g. (0.7 + 0.1) * 1000 from flooring to 799
        let cut = |frac: f64| (frac * len as f64 + 1e-9).floor() as usize;
        let b1 = cut(r[0]);
        let b2 = cut(r[0] + r[1]).min(len);
        [b1, b2.max(b1)]
    }

    pub fn range(&self, split: Split, len: usize) -> Range<usize> {
        let [b1, b2] = self.boundaries(len);
        match split {
            Split::Train => 0..b1,
            Split::Val => b1..b2,
            Split::Test => b2..len,
        }
    }
}
