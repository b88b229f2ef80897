//! Finite measures on the interval stored as weighted point masses.
//!
//! Integrals of observables against `Π(ψ̂)` are taken level by level in tower
//! coordinates, `∫ A Π_k(ψ̂) dx = λ^k ∫ A(f^k y) ψ_k(y) dy`, which sidesteps the
//! inverse square-root spikes at the postcritical points.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transfer::{iterate, OperatorContext, TowerFunction};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedNodes {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
}

impl WeightedNodes {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn integrate(&self, a: impl Fn(f64) -> f64) -> f64 {
        self.x.iter().zip(&self.w).map(|(x, w)| w * a(*x)).sum()
    }

    pub fn total(&self) -> f64 {
        self.w.iter().sum()
    }

    /// Masses per bin for sorted `edges`; points outside are dropped.
    pub fn histogram(&self, edges: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; edges.len().saturating_sub(1)];
        for (x, w) in self.x.iter().zip(&self.w) {
            let i = edges.partition_point(|e| e <= x);
            if i >= 1 && i < edges.len() {
                out[i - 1] += w;
            }
        }
        out
    }

    pub fn extend(&mut self, other: WeightedNodes) {
        self.x.extend(other.x);
        self.w.extend(other.w);
    }
}

/// The measure `Π(ψ̂) dx` restricted to the given levels.
pub fn tower_measure(ctx: &OperatorContext, psi: &TowerFunction, levels: std::ops::RangeInclusive<usize>) -> WeightedNodes {
    let mut out = WeightedNodes::default();
    let top = (*levels.end()).min(ctx.levels() - 1);
    for k in *levels.start()..=top {
        let vals = ctx.level(psi, k);
        if vals.iter().all(|v| *v == 0.0) {
            continue;
        }
        let g = ctx.grids[k];
        let h = g.h();
        let lk = ctx.lambda.powi(k as i32);
        for i in 0..g.n {
            let (v0, v1) = (vals[i], vals[i + 1]);
            if v0 == 0.0 && v1 == 0.0 {
                continue;
            }
            let left = g.node(i);
            for &(t, wt) in ctx.quad() {
                let s = 0.5 * (t + 1.0);
                let y = left + s * h;
                out.x.push(iterate(&ctx.map, y, k));
                out.w.push(lk * 0.5 * h * wt * (v0 * (1.0 - s) + v1 * s));
            }
        }
    }
    out
}

/// The arcsine law `dx / (π √(1 − x²))` through `x = cos(πθ)` and the midpoint rule in `θ`.
pub fn arcsine_measure(n: usize) -> WeightedNodes {
    let x = (0..n).map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / n as f64).cos()).collect();
    WeightedNodes { x, w: vec![1.0 / n as f64; n] }
}

/// `ρ(x) dx` by the open midpoint rule on `n` cells. Cells within `refine_radius` of a
/// singular point are split geometrically toward it and use three Gauss points each.
pub fn density_measure(rho: impl Fn(f64) -> f64, n: usize, singular: &[f64], refine_radius: f64) -> Result<WeightedNodes> {
    if n < 2 {
        return Err(Error::OutOfRange("need at least two cells".into()));
    }
    let mut out = WeightedNodes::default();
    let dx = 2.0 / n as f64;
    let push = |lo: f64, hi: f64, out: &mut WeightedNodes| {
        let x = 0.5 * (lo + hi);
        out.x.push(x);
        out.w.push(rho(x) * (hi - lo));
    };
    // three-point Gauss–Legendre on the refined pieces
    let gl3 = [(-(0.6f64).sqrt(), 5.0 / 9.0), (0.0, 8.0 / 9.0), ((0.6f64).sqrt(), 5.0 / 9.0)];
    let push_gl = |lo: f64, hi: f64, out: &mut WeightedNodes| {
        let (mid, half) = (0.5 * (lo + hi), 0.5 * (hi - lo));
        for (t, wt) in gl3 {
            let x = mid + half * t;
            out.x.push(x);
            out.w.push(rho(x) * wt * half);
        }
    };
    for i in 0..n {
        let (lo, hi) = (-1.0 + i as f64 * dx, -1.0 + (i + 1) as f64 * dx);
        match singular.iter().find(|&&c| c >= lo - refine_radius && c <= hi + refine_radius) {
            None => push(lo, hi, &mut out),
            Some(&c) => {
                // geometric pieces of ratio 1/2 toward `c` on either side, down to 1e-12
                let mut cuts = vec![lo, hi];
                if c > lo && c < hi {
                    cuts.push(c);
                }
                for (start, end) in [(lo, c.min(hi)), (c.max(lo), hi)] {
                    if end <= start {
                        continue;
                    }
                    let mut d = (end - start) / 2.0;
                    while d > 1e-12 {
                        let p = if c <= start { start + d } else { end - d };
                        cuts.push(p);
                        d /= 2.0;
                    }
                }
                cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                cuts.dedup();
                for w in cuts.windows(2) {
                    push_gl(w[0], w[1], &mut out);
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transfer::tests::ulam_ctx;

    #[test]
    fn arcsine_moments() {
        let m = arcsine_measure(2000);
        assert!((m.total() - 1.0).abs() < 1e-12);
        assert!((m.integrate(|x| x * x) - 0.5).abs() < 1e-12);
        assert!((m.integrate(|x| x.powi(4)) - 0.375).abs() < 1e-12);
    }

    #[test]
    fn density_measure_handles_spikes() {
        let rho = |x: f64| 1.0 / (std::f64::consts::PI * (1.0 - x * x).max(0.0).sqrt());
        let m = density_measure(rho, 4000, &[-1.0, 1.0], 0.05).unwrap();
        assert!((m.total() - 1.0).abs() < 1e-4, "{}", m.total());
        let inner = |x: f64| (0.3 - x).abs().powf(-0.5) / (2.0 * (1.3f64.sqrt() + 0.7f64.sqrt()));
        let m = density_measure(inner, 1000, &[0.3], 0.05).unwrap();
        assert!((m.total() - 1.0).abs() < 1e-4, "{}", m.total());
    }

    #[test]
    fn tower_measure_matches_nu_and_pointwise_projection() {
        let ctx = ulam_ctx(1024, 5);
        let psi = ctx.sample(3, |k, y| {
            let d = ctx.radius(k);
            (1.0 - (y / d).powi(2)).max(0.0) * (1.0 + 0.3 * y)
        });
        let m = tower_measure(&ctx, &psi, 0..=ctx.m);
        assert!((m.total() - crate::transfer::integrate_nu(&ctx, &psi)).abs() < 1e-12);
        let hist = m.histogram(&[-0.5, 0.0, 0.5]);
        let direct: Vec<f64> = [(-0.5, 0.0), (0.0, 0.5)]
            .iter()
            .map(|&(lo, hi)| {
                let n = 20000;
                (0..n).map(|i| crate::transfer::project_density(&ctx, &psi, lo + (i as f64 + 0.5) * (hi - lo) / n as f64) * (hi - lo) / n as f64).sum()
            })
            .collect();
        for (a, b) in hist.iter().zip(&direct) {
            assert!((a - b).abs() < 2e-3, "{a} {b}");
        }
    }

    #[test]
    fn histogram_drops_outside_points() {
        let m = WeightedNodes { x: vec![-2.0, 0.1, 0.6, 3.0], w: vec![1.0, 2.0, 3.0, 4.0] };
        assert_eq!(m.histogram(&[0.0, 0.5, 1.0]), vec![2.0, 3.0]);
    }
}
