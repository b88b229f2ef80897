//! Inverse branches of iterates near the critical point.

use crate::error::{Error, Result};
use crate::unimodal::{IntervalMap, UnimodalMap};

/// Inverse of `f^k` on the monotone piece through the critical point on `side`,
/// whose intermediate images carry the signs of `c_1, ..., c_{k-1}`.
#[derive(Debug, Clone)]
pub struct BranchInverter {
    map: UnimodalMap,
    /// `sign[i] = sgn(c_i)`.
    sign: Vec<f64>,
}

impl BranchInverter {
    pub fn new(map: UnimodalMap, c: &[f64]) -> Self {
        let sign = c.iter().map(|&x| if x < 0.0 { -1.0 } else { 1.0 }).collect();
        BranchInverter { map, sign }
    }

    pub fn max_k(&self) -> usize {
        self.sign.len() - 1
    }

    /// `(y, |(f^k)'(y)|)` with `f^k(y) = x`; `side` is `±1`.
    pub fn invert(&self, k: usize, side: f64, x: f64) -> Result<(f64, f64)> {
        if k == 0 {
            return Ok((x, 1.0));
        }
        if k > self.max_k() + 1 {
            return Err(Error::OutOfRange(format!("branch order {k} beyond the stored orbit")));
        }
        let a = self.map.a();
        let c1 = self.map.c1();
        let mut z = x;
        let mut deriv = 1.0;
        for i in (1..k).rev() {
            let s = (c1 - z) / a;
            if s < 0.0 {
                return Err(Error::Domain(format!("{x} outside the image of branch {k}")));
            }
            z = self.sign[i] * s.sqrt();
            deriv *= 2.0 * a * z.abs();
        }
        let s = (c1 - z) / a;
        if s < 0.0 {
            return Err(Error::Domain(format!("{x} outside the image of branch {k}")));
        }
        let y = side * s.sqrt();
        deriv *= 2.0 * a * y.abs();
        Ok((y, deriv))
    }

    /// As [`invert`](Self::invert), followed by Newton steps on `f^k(y) = x`.
    pub fn invert_polished(&self, k: usize, side: f64, x: f64) -> Result<(f64, f64)> {
        let (mut y, mut deriv) = self.invert(k, side, x)?;
        for _ in 0..2 {
            let (fk, d) = iterate_with_derivative(&self.map, y, k);
            if d.abs() < 1e-8 {
                break;
            }
            let step = (fk - x) / d;
            if !step.is_finite() || step.abs() > 1e-6 * (1.0 + y.abs()) {
                break;
            }
            y -= step;
            deriv = d.abs();
        }
        Ok((y, deriv))
    }
}

/// `(f^k(y), (f^k)'(y))`.
pub fn iterate_with_derivative(map: &UnimodalMap, y: f64, k: usize) -> (f64, f64) {
    let mut z = y;
    let mut d = 1.0;
    for _ in 0..k {
        d *= map.d1(z);
        z = map.eval(z);
    }
    (z, d)
}

/// `f^k(y)`.
pub fn iterate(map: &UnimodalMap, y: f64, k: usize) -> f64 {
    (0..k).fold(y, |z, _| map.eval(z))
}

/// Free-standing form of [`BranchInverter::invert_polished`].
pub fn inverse_branch(map: &UnimodalMap, k: usize, side: f64, x: f64) -> Result<f64> {
    let orbit = crate::recurrence::critical_orbit(map, k.max(1));
    BranchInverter::new(*map, &orbit.c).invert_polished(k, side, x).map(|r| r.0)
}
