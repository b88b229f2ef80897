//! Smooth level cutoffs `ξ_k`.

use serde::{Deserialize, Serialize};

/// `10u³ − 15u⁴ + 6u⁵` on `[0, 1]`, clamped outside.
pub fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * u * (10.0 + u * (-15.0 + 6.0 * u))
}

pub fn smoothstep_deriv(u: f64) -> f64 {
    if !(0.0..=1.0).contains(&u) {
        return 0.0;
    }
    30.0 * u * u * (1.0 - u) * (1.0 - u)
}

/// Even cutoff: 1 on `|y| <= plateau`, 0 on `|y| >= support`, smoothstep ramp between.
/// An infinite `support` means nothing falls from this level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CutoffProfile {
    pub level: usize,
    pub plateau: f64,
    pub support: f64,
}

impl CutoffProfile {
    pub fn is_identity(&self) -> bool {
        self.support.is_infinite()
    }

    pub fn value(&self, y: f64) -> f64 {
        if self.is_identity() {
            return 1.0;
        }
        let a = y.abs();
        if a <= self.plateau {
            1.0
        } else if a >= self.support {
            0.0
        } else {
            // centred form keeps the ramp midpoint at exactly one half
            let mid = 0.5 * (self.plateau + self.support);
            let t = (mid - a) / (0.5 * (self.support - self.plateau));
            0.5 + t * (15.0 / 16.0 + t * t * (-5.0 / 8.0 + t * t * 3.0 / 16.0))
        }
    }

    pub fn deriv(&self, y: f64) -> f64 {
        if self.is_identity() {
            return 0.0;
        }
        let a = y.abs();
        if a <= self.plateau || a >= self.support {
            return 0.0;
        }
        let w = self.support - self.plateau;
        -y.signum() * smoothstep_deriv((self.support - a) / w) / w
    }

    /// Ramp edges `(plateau, support)` when finite.
    pub fn edges(&self) -> Option<(f64, f64)> {
        (!self.is_identity()).then_some((self.plateau, self.support))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_support_and_midpoint() {
        let c = CutoffProfile { level: 3, plateau: 0.1, support: 0.3 };
        assert_eq!(c.value(0.05), 1.0);
        assert_eq!(c.value(-0.1), 1.0);
        assert_eq!(c.value(0.31), 0.0);
        assert_eq!(c.value(-0.5 * (c.plateau + c.support)), 0.5);
        assert!((c.value(0.25) - smoothstep(0.25)).abs() < 1e-15);
        assert_eq!(smoothstep(0.5), 0.5);
        let h = 1e-6;
        for &y in &[0.12, -0.17, 0.25] {
            let fd = (c.value(y + h) - c.value(y - h)) / (2.0 * h);
            assert!((fd - c.deriv(y)).abs() < 1e-6);
        }
        let id = CutoffProfile { level: 1, plateau: f64::INFINITY, support: f64::INFINITY };
        assert_eq!(id.value(0.9), 1.0);
    }

    #[test]
    fn values_in_unit_interval_and_monotone() {
        let c = CutoffProfile { level: 0, plateau: 0.2, support: 0.5 };
        let mut prev = 1.0;
        for i in 0..=1000 {
            let v = c.value(i as f64 * 1e-3);
            assert!((0.0..=1.0).contains(&v) && v <= prev);
            prev = v;
        }
    }
}
