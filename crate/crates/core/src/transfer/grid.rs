//! Uniform node grids on symmetric intervals and piecewise-linear reads.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub half_width: f64,
    /// Number of cells; there are `n + 1` nodes including both endpoints.
    pub n: usize,
}

impl Grid {
    pub fn new(half_width: f64, n: usize) -> Self {
        Grid { half_width, n: n.max(2) }
    }

    pub fn h(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n {
            self.half_width
        } else {
            -self.half_width + i as f64 * self.h()
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n).map(|i| self.node(i))
    }

    /// Integral of the hat function at node `i`.
    pub fn trap_weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.n {
            0.5 * self.h()
        } else {
            self.h()
        }
    }

    /// Cell index and fractional position, or `None` outside the grid.
    pub fn locate(&self, x: f64) -> Option<(usize, f64)> {
        if !(x >= -self.half_width && x <= self.half_width) {
            return None;
        }
        let s = (x + self.half_width) / self.h();
        let i = (s.floor() as usize).min(self.n - 1);
        Some((i, (s - i as f64).clamp(0.0, 1.0)))
    }

    pub fn interp(&self, values: &[f64], x: f64) -> f64 {
        match self.locate(x) {
            Some((i, t)) => values[i] * (1.0 - t) + values[i + 1] * t,
            None => 0.0,
        }
    }

    /// Slope of the interpolant, zero outside.
    pub fn interp_slope(&self, values: &[f64], x: f64) -> f64 {
        match self.locate(x) {
            Some((i, _)) => (values[i + 1] - values[i]) / self.h(),
            None => 0.0,
        }
    }

    /// Composite trapezoid rule, exact for the interpolant.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().enumerate().map(|(i, v)| v * self.trap_weight(i)).sum()
    }

    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes().map(f).collect()
    }

    /// Node positions strictly inside `(lo, hi)`.
    pub fn nodes_within(&self, lo: f64, hi: f64) -> impl Iterator<Item = f64> + '_ {
        self.nodes().filter(move |&x| x > lo && x < hi)
    }
}
