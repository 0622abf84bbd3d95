use std::fmt;

use serde::{Serialize, Serializer};

/// Per-point diagnostic bits attached to curves and bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PointFlags(u16);

impl PointFlags {
    pub const NONE: Self = Self(0);
    pub const INSUFFICIENT_SUPPORT: Self = Self(1);
    pub const DEGENERATE_DESIGN: Self = Self(1 << 1);
    pub const DEGENERATE_WINDOW: Self = Self(1 << 2);
    pub const BOUNDARY_EXCLUDED: Self = Self(1 << 3);
    pub const SIGMA_FLOOR: Self = Self(1 << 4);
    pub const DENSITY_FLOOR: Self = Self(1 << 5);
    pub const CROSSING: Self = Self(1 << 6);
    pub const BANDWIDTH_CLAMPED: Self = Self(1 << 7);
    pub const PLUGIN_FAILED: Self = Self(1 << 8);
    /// Raw point skipped because no requested output depends on it.
    pub const NOT_EVALUATED: Self = Self(1 << 9);

    const NAMES: [(PointFlags, &'static str); 10] = [
        (Self::INSUFFICIENT_SUPPORT, "insufficient_support"),
        (Self::DEGENERATE_DESIGN, "degenerate_design"),
        (Self::DEGENERATE_WINDOW, "degenerate_window"),
        (Self::BOUNDARY_EXCLUDED, "boundary_excluded"),
        (Self::SIGMA_FLOOR, "sigma_floor"),
        (Self::DENSITY_FLOOR, "density_floor"),
        (Self::CROSSING, "crossing"),
        (Self::BANDWIDTH_CLAMPED, "bandwidth_clamped"),
        (Self::PLUGIN_FAILED, "plugin_failed"),
        (Self::NOT_EVALUATED, "not_evaluated"),
    ];

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn insert(&mut self, other: Self) {
        self.0 |= other.0;
    }
}

impl std::ops::BitOr for PointFlags {
    type Output = Self;

    fn bitor(self, rhs: Self) -> Self {
        Self(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for PointFlags {
    fn bitor_assign(&mut self, rhs: Self) {
        self.0 |= rhs.0;
    }
}

impl fmt::Display for PointFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (flag, name) in Self::NAMES {
            if self.contains(flag) {
                if !first {
                    f.write_str("|")?;
                }
                f.write_str(name)?;
                first = false;
            }
        }
        Ok(())
    }
}

impl Serialize for PointFlags {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_joins_names() {
        let f = PointFlags::SIGMA_FLOOR | PointFlags::DENSITY_FLOOR;
        assert_eq!(f.to_string(), "sigma_floor|density_floor");
        assert_eq!(PointFlags::NONE.to_string(), "");
        assert!(f.contains(PointFlags::SIGMA_FLOOR));
        assert!(!f.contains(PointFlags::CROSSING));
    }
}
