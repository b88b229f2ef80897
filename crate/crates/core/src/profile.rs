//! Smooth scalar profiles used as deformation payloads and observables.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A scalar function on the interval with derivatives up to order three.
pub trait Smooth: Send + Sync {
    fn derivative(&self, order: usize, x: f64) -> f64;

    fn value(&self, x: f64) -> f64 {
        self.derivative(0, x)
    }

    fn deriv(&self, x: f64) -> f64 {
        self.derivative(1, x)
    }
}

/// Closed-form profile. `Poly` coefficients are in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Profile {
    Zero,
    Poly { coeffs: Vec<f64> },
    /// `(1 - u^2)^3` with `u = (x - center) / width`, zero outside `|u| < 1`.
    Bump { center: f64, width: f64 },
    Sum { terms: Vec<(f64, Profile)> },
}

impl Profile {
    pub fn poly(coeffs: &[f64]) -> Self {
        Profile::Poly { coeffs: coeffs.to_vec() }
    }

    pub fn bump(center: f64, width: f64) -> Self {
        Profile::Bump { center, width }
    }

    /// `x (1 - x^2)`, the standard conjugation profile.
    pub fn cubic_odd() -> Self {
        Profile::poly(&[0.0, 1.0, 0.0, -1.0])
    }

    /// `self - kappa * other`.
    pub fn minus_scaled(&self, kappa: f64, other: &Profile) -> Self {
        if kappa == 0.0 {
            return self.clone();
        }
        Profile::Sum { terms: vec![(1.0, self.clone()), (-kappa, other.clone())] }
    }

    /// Resolve a built-in name or a comma separated coefficient list.
    pub fn parse(spec: &str) -> Result<Self> {
        let s = spec.trim();
        match s {
            "zero" => return Ok(Profile::Zero),
            "cubic_odd" => return Ok(Profile::cubic_odd()),
            "one_minus_x2" => return Ok(Profile::poly(&[1.0, 0.0, -1.0])),
            "x2" => return Ok(Profile::poly(&[0.0, 0.0, 1.0])),
            "x2_one_plus_x" => return Ok(Profile::poly(&[0.0, 0.0, 1.0, 1.0])),
            "one_plus_x_one_minus_x2" => return Ok(Profile::poly(&[1.0, 1.0, -1.0, -1.0])),
            _ => {}
        }
        let coeffs: std::result::Result<Vec<f64>, _> =
            s.split(',').map(|t| t.trim().parse::<f64>()).collect();
        match coeffs {
            Ok(c) if !c.is_empty() => Ok(Profile::Poly { coeffs: c }),
            _ => Err(Error::Config(format!("unknown profile `{s}`"))),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Profile::Zero => true,
            Profile::Poly { coeffs } => coeffs.iter().all(|&c| c == 0.0),
            Profile::Bump { .. } => false,
            Profile::Sum { terms } => terms.iter().all(|(w, p)| *w == 0.0 || p.is_zero()),
        }
    }
}

fn poly_derivative(coeffs: &[f64], order: usize, x: f64) -> f64 {
    let n = coeffs.len();
    if order >= n {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in (order..n).rev() {
        let falling: f64 = (0..order).map(|j| (i - j) as f64).product();
        acc = acc * x + coeffs[i] * falling;
    }
    acc
}

impl Smooth for Profile {
    fn derivative(&self, order: usize, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Poly { coeffs } => poly_derivative(coeffs, order, x),
            Profile::Bump { center, width } => {
                let u = (x - center) / width;
                if u.abs() >= 1.0 {
                    return 0.0;
                }
                let s = 1.0 - u * u;
                let d = match order {
                    0 => s * s * s,
                    1 => -6.0 * u * s * s,
                    2 => -6.0 * s * s + 24.0 * u * u * s,
                    3 => 72.0 * u * s - 48.0 * u * u * u,
                    _ => 0.0,
                };
                d / width.powi(order as i32)
            }
            Profile::Sum { terms } => terms.iter().map(|(w, p)| w * p.derivative(order, x)).sum(),
        }
    }
}

/// Wraps a pair of closures as a first-order smooth function.
pub struct FnSmooth<F, G>
where
    F: Fn(f64) -> f64 + Send + Sync,
    G: Fn(f64) -> f64 + Send + Sync,
{
    pub value: F,
    pub deriv: G,
}

impl<F, G> Smooth for FnSmooth<F, G>
where
    F: Fn(f64) -> f64 + Send + Sync,
    G: Fn(f64) -> f64 + Send + Sync,
{
    fn derivative(&self, order: usize, x: f64) -> f64 {
        match order {
            0 => (self.value)(x),
            1 => (self.deriv)(x),
            _ => f64::NAN,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_derivatives() {
        let p = Profile::poly(&[1.0, 2.0, 3.0, 4.0]);
        let x = 0.7;
        assert!((p.value(x) - (1.0 + 2.0 * x + 3.0 * x * x + 4.0 * x * x * x)).abs() < 1e-14);
        assert!((p.derivative(1, x) - (2.0 + 6.0 * x + 12.0 * x * x)).abs() < 1e-14);
        assert!((p.derivative(2, x) - (6.0 + 24.0 * x)).abs() < 1e-14);
        assert!((p.derivative(3, x) - 24.0).abs() < 1e-14);
        assert_eq!(p.derivative(4, x), 0.0);
    }

    #[test]
    fn bump_matches_finite_differences() {
        let b = Profile::bump(0.2, 0.3);
        let h = 1e-5;
        for &x in &[0.05, 0.2, 0.31, 0.45] {
            for order in 1..=3 {
                let fd = (b.derivative(order - 1, x + h) - b.derivative(order - 1, x - h)) / (2.0 * h);
                assert!((fd - b.derivative(order, x)).abs() < 1e-4 * (1.0 + fd.abs()), "order {order} at {x}");
            }
        }
        assert_eq!(b.value(0.6), 0.0);
        assert_eq!(b.value(0.2), 1.0);
    }

    #[test]
    fn parse_names_and_lists() {
        assert_eq!(Profile::parse("cubic_odd").unwrap(), Profile::cubic_odd());
        assert_eq!(Profile::parse("1, 0, -1").unwrap(), Profile::poly(&[1.0, 0.0, -1.0]));
        assert!(Profile::parse("nonsense").is_err());
    }

    #[test]
    fn minus_scaled_combines() {
        let a = Profile::poly(&[0.0, 1.0]);
        let b = Profile::poly(&[1.0]);
        let c = a.minus_scaled(0.5, &b);
        assert!((c.value(0.3) - (0.3 - 0.5)).abs() < 1e-15);
        assert_eq!(a.minus_scaled(0.0, &b), a);
    }
}
