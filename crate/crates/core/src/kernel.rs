//! Kernel functions used to weight observations around the cutoff.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{RdError, Result};

/// Second-order kernel with support `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    Uniform,
    #[default]
    Triangular,
    Epanechnikov,
}

impl Kernel {
    pub const ALL: [Kernel; 3] = [Kernel::Uniform, Kernel::Triangular, Kernel::Epanechnikov];

    /// Kernel value `K(u)`; zero outside `|u| <= 1`.
    pub fn value(self, u: f64) -> f64 {
        let a = u.abs();
        if !(a <= 1.0) {
            return 0.0;
        }
        match self {
            Kernel::Uniform => 0.5,
            Kernel::Triangular => 1.0 - a,
            Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
        }
    }

    /// `K_h(r - cutoff) = K((r - cutoff) / h) / h`.
    pub fn scaled_weight(self, r: f64, cutoff: f64, h: f64) -> Result<f64> {
        check_bandwidth(h)?;
        Ok(self.value((r - cutoff) / h) / h)
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Uniform => "uniform",
            Kernel::Triangular => "triangular",
            Kernel::Epanechnikov => "epanechnikov",
        }
    }
}

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(RdError::NonPositiveBandwidth(h))
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = RdError;

    fn from_str(s: &str) -> Result<Kernel> {
        match s.trim().to_ascii_lowercase().as_str() {
            "uniform" => Ok(Kernel::Uniform),
            "triangular" => Ok(Kernel::Triangular),
            "epanechnikov" => Ok(Kernel::Epanechnikov),
            other => Err(RdError::Config(format!("unknown kernel `{other}`"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn point_values() {
        assert_eq!(Kernel::Triangular.value(0.0), 1.0);
        assert_eq!(Kernel::Uniform.value(1.0001), 0.0);
        assert_eq!(Kernel::Epanechnikov.value(0.5), 0.5625);
        assert_eq!(Kernel::Uniform.value(1.0), 0.5);
        assert_eq!(Kernel::Triangular.value(f64::NAN), 0.0);
    }

    #[test]
    fn scaled_weights() {
        assert_eq!(Kernel::Triangular.scaled_weight(3.0, 3.0, 2.0).unwrap(), 0.5);
        for k in Kernel::ALL {
            assert_eq!(k.scaled_weight(7.5, 2.0, 5.0).unwrap(), 0.0);
        }
        assert_eq!(Kernel::Uniform.scaled_weight(150.0, 0.0, 600.0).unwrap(), 0.5 / 600.0);
        assert_eq!(
            Kernel::Uniform.scaled_weight(0.0, 0.0, 0.0),
            Err(RdError::NonPositiveBandwidth(0.0))
        );
        assert!(Kernel::Uniform.scaled_weight(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn integrates_to_one() {
        // Midpoint rule on a fine grid.
        let m = 2_000_000;
        let du = 2.0 / m as f64;
        for k in Kernel::ALL {
            let total: f64 = (0..m).map(|i| k.value(-1.0 + (i as f64 + 0.5) * du) * du).sum();
            assert!((total - 1.0).abs() < 1e-6, "{k}: {total}");
        }
    }

    #[test]
    fn names_round_trip() {
        for k in Kernel::ALL {
            assert_eq!(k.name().parse::<Kernel>().unwrap(), k);
        }
        assert!("gaussian".parse::<Kernel>().is_err());
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative(u in -3.0f64..3.0) {
            for k in Kernel::ALL {
                prop_assert_eq!(k.value(u), k.value(-u));
                prop_assert!(k.value(u) >= 0.0);
                if u.abs() > 1.0 {
                    prop_assert_eq!(k.value(u), 0.0);
                }
            }
        }

        #[test]
        fn scaled_weight_homogeneous(d in -2.0f64..2.0, h in 0.1f64..10.0, lambda in 0.1f64..10.0) {
            prop_assume!(((d / h).abs() - 1.0).abs() > 1e-9);
            for k in Kernel::ALL {
                let w = k.scaled_weight(d, 0.0, h).unwrap();
                let w_scaled = k.scaled_weight(lambda * d, 0.0, lambda * h).unwrap();
                prop_assert!((w_scaled - w / lambda).abs() <= 1e-12 * (1.0 + w / lambda));
            }
        }
    }
}
