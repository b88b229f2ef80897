//! Estimators that do not go through the tower: the Ulam matrix method,
//! Birkhoff averages, and closed forms for the map `x ↦ 1 − 2x²`.
//!
//! Orbit starts are drawn from SplitMix64 (`rand_xoshiro::SplitMix64`): the state
//! advances by `0x9E3779B97F4A7C15` and each output is mixed with the multipliers
//! `0xBF58476D1CE4E5B9` and `0x94D049BB133111EB` (shifts 30, 27, 31). Orbit `i`
//! is seeded with `seed + i`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unimodal::IntervalMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UlamModel {
    pub n_bins: usize,
    pub edges: Vec<f64>,
    /// Row `i` lists `(j, w_ij)` with nonzero weight.
    pub rows: Vec<Vec<(usize, f64)>>,
    /// Stationary density, constant on each bin.
    pub density: Vec<f64>,
    pub iterations: usize,
}

fn bin_of(x: f64, n: usize) -> usize {
    (((x + 1.0) * 0.5 * n as f64).floor().max(0.0) as usize).min(n - 1)
}

pub fn ulam_matrix(map: &dyn IntervalMap, n_bins: usize, samples_per_bin: usize) -> Result<UlamModel> {
    if n_bins < 16 {
        return Err(Error::OutOfRange(format!("n_bins = {n_bins} must be at least 16")));
    }
    let s = samples_per_bin.max(1);
    let width = 2.0 / n_bins as f64;
    let edges: Vec<f64> = (0..=n_bins).map(|i| -1.0 + i as f64 * width).collect();
    let rows: Vec<Vec<(usize, f64)>> = (0..n_bins)
        .map(|i| {
            let mut hits: Vec<usize> = (0..s)
                .map(|q| bin_of(map.f(edges[i] + (q as f64 + 0.5) * width / s as f64), n_bins))
                .collect();
            hits.sort_unstable();
            let mut row: Vec<(usize, f64)> = Vec::new();
            for j in hits {
                match row.last_mut() {
                    Some((last, w)) if *last == j => *w += 1.0,
                    _ => row.push((j, 1.0)),
                }
            }
            row.iter_mut().for_each(|(_, w)| *w /= s as f64);
            row
        })
        .collect();

    let mut p = vec![1.0 / n_bins as f64; n_bins];
    let mut iterations = 0;
    for it in 0..20_000 {
        let mut next = vec![0.0; n_bins];
        for (i, row) in rows.iter().enumerate() {
            for &(j, w) in row {
                next[j] += p[i] * w;
            }
        }
        let total: f64 = next.iter().sum();
        next.iter_mut().for_each(|v| *v /= total);
        let change: f64 = next.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum();
        p = next;
        iterations = it + 1;
        if change < 1e-14 {
            break;
        }
    }
    let density = p.iter().map(|v| v / width).collect();
    Ok(UlamModel { n_bins, edges, rows, density, iterations })
}

impl UlamModel {
    pub fn value(&self, x: f64) -> f64 {
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        self.density[bin_of(x, self.n_bins)]
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().zip(self.edges.windows(2)).map(|(d, e)| d * (e[1] - e[0])).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Orbits that landed exactly on a fixed point in floating point and were restarted.
    pub restarts: usize,
}

fn orbit_average(map: &dyn IntervalMap, a: &dyn Fn(f64) -> f64, n_iter: usize, burn_in: usize, seed: u64) -> (f64, usize) {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut restarts = 0;
    let mut x: f64 = rng.gen_range(-1.0..1.0);
    for _ in 0..burn_in {
        x = map.f(x);
    }
    let mut acc = 0.0;
    for _ in 0..n_iter {
        let next = map.f(x);
        if next == x {
            restarts += 1;
            x = rng.gen_range(-1.0..1.0);
            for _ in 0..burn_in {
                x = map.f(x);
            }
        } else {
            x = next;
        }
        acc += a(x);
    }
    (acc / n_iter as f64, restarts)
}

/// Mean of per-orbit time averages with the standard error across orbits.
pub fn birkhoff_average(
    map: &dyn IntervalMap,
    a: &(dyn Fn(f64) -> f64 + Sync),
    n_orbits: usize,
    n_iter: usize,
    burn_in: usize,
    seed: u64,
) -> Result<BirkhoffEstimate> {
    if n_orbits < 2 || n_iter == 0 {
        return Err(Error::OutOfRange("need at least two orbits and one iterate".into()));
    }
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(n_orbits);
    let chunk = n_orbits.div_ceil(threads);
    let mut results = vec![(0.0, 0); n_orbits];
    std::thread::scope(|scope| {
        for (c, slot) in results.chunks_mut(chunk).enumerate() {
            scope.spawn(move || {
                for (k, r) in slot.iter_mut().enumerate() {
                    let i = c * chunk + k;
                    *r = orbit_average(map, a, n_iter, burn_in, seed.wrapping_add(i as u64));
                }
            });
        }
    });
    let n = n_orbits as f64;
    let mean = results.iter().map(|r| r.0).sum::<f64>() / n;
    let var = results.iter().map(|r| (r.0 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let restarts = results.iter().map(|r| r.1).sum();
    Ok(BirkhoffEstimate { mean, stderr: (var / n).sqrt(), restarts })
}

/// `1 / (π √(1 − x²))`.
pub fn closed_form_ulam_density(x: f64) -> Result<f64> {
    if !(x.abs() < 1.0) {
        return Err(Error::Domain(format!("|x| = {} must be below 1", x.abs())));
    }
    Ok(1.0 / (PI * (1.0 - x * x).sqrt()))
}

/// Distribution function of the arcsine law.
pub fn arcsine_cdf(x: f64) -> f64 {
    x.clamp(-1.0, 1.0).asin() / PI + 0.5
}

/// Exact `∫ |p − ρ|` over `[lo, hi]` for a piecewise-constant `p` on `edges`
/// against the arcsine density `ρ`.
pub fn l1_to_arcsine(edges: &[f64], values: &[f64], lo: f64, hi: f64) -> f64 {
    let mut total = 0.0;
    for (e, &p) in edges.windows(2).zip(values) {
        let (l, r) = (e[0].max(lo), e[1].min(hi));
        if r <= l {
            continue;
        }
        // split where ρ = p and at 0, where ρ has its minimum
        let mut cuts = vec![l, r];
        if p * PI > 1.0 {
            let s = (1.0 - 1.0 / (p * PI).powi(2)).sqrt();
            cuts.extend([s, -s]);
        }
        cuts.push(0.0);
        cuts.retain(|c| *c >= l && *c <= r);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for w in cuts.windows(2) {
            let (u, v) = (w[0], w[1]);
            if v <= u {
                continue;
            }
            total += (arcsine_cdf(v) - arcsine_cdf(u) - p * (v - u)).abs();
        }
    }
    total
}
