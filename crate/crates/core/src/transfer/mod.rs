//! Tower transfer operator with smooth level cutoffs, the weight `ν`, the
//! projection `Π` to densities on the interval, and the truncated fixed point.
//!
//! A tower function stores one piecewise-linear profile per level, sampled on a
//! uniform grid over `[-d_k, d_k]` around the critical point. The operator is
//! discretized as a lumped `L²` projection of its output onto the level grids,
//! which keeps `ν` exactly conserved and is second-order accurate.

mod branch;
mod cutoff;
mod grid;

pub use branch::{inverse_branch, iterate, iterate_with_derivative, BranchInverter};
pub use cutoff::{smoothstep, CutoffProfile};
pub use grid::Grid;

use gauss_quad::GaussLegendre;
use serde::{Deserialize, Serialize};
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};
use crate::recurrence::{critical_orbit, estimate_ce, expansion_constants, CriticalOrbit};
use crate::tower::Tower;
use crate::unimodal::UnimodalMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferOptions {
    /// Weight base; derived from the orbit constants when absent.
    pub lambda: Option<f64>,
    /// Truncation level.
    pub m: usize,
    /// Cells of the level-0 grid.
    pub grid0: usize,
    /// Gauss–Legendre points per sub-interval.
    pub quad_order: usize,
}

impl Default for TransferOptions {
    fn default() -> Self {
        TransferOptions { lambda: None, m: 15, grid0: 4096, quad_order: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextDiagnostics {
    pub lambda_c: f64,
    pub gamma: f64,
    pub sigma: f64,
    pub rho: f64,
    pub theta0: f64,
    /// Whether `1 < λ < e^γ` and `e^{4γ}λ < √λ_c` both hold.
    pub full_lambda_bound: bool,
    /// `e^{3γM} |(f^M)'(c_1)|^{-1/2}`.
    pub tau_m: f64,
    /// `(k, sup |∂_x(ξ_k ∘ f^{-(k+1)})|, e^{2γk})` over the ramps.
    pub cutoff_growth: Vec<(usize, f64, f64)>,
}

/// Values of a tower function on the level grids, levels stored back to back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerFunction {
    pub data: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct OperatorContext {
    pub tower: Tower,
    pub map: UnimodalMap,
    pub lambda: f64,
    /// Truncation level `M`; grids exist for levels `0..=M+1`.
    pub m: usize,
    pub grids: Vec<Grid>,
    pub cutoffs: Vec<CutoffProfile>,
    pub offsets: Vec<usize>,
    pub orbit: CriticalOrbit,
    pub branch: BranchInverter,
    pub diagnostics: ContextDiagnostics,
    quad: Vec<(f64, f64)>,
    matrix: CsMat<f64>,
    matrix_t: CsMat<f64>,
}

fn sorted_breaks(mut pts: Vec<f64>, lo: f64, hi: f64) -> Vec<f64> {
    pts.retain(|x| *x > lo && *x < hi);
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tol = 1e-15 * (hi - lo).abs().max(1e-300);
    pts.dedup_by(|a, b| (*a - *b).abs() <= tol);
    pts
}

/// Radius `r` with `f^{k+1}(r)` on the boundary of the interval of radius
/// `e^{-β(k+1)}` around `c_{k+1}`; infinite when that boundary is out of reach.
fn preimage_radius(branch: &BranchInverter, orbit: &CriticalOrbit, k: usize, beta: f64) -> f64 {
    let s = -(orbit.sign_d[k] as f64);
    let target = orbit.c[k + 1] + s * (-beta * (k + 1) as f64).exp();
    if !(-1.0..=1.0).contains(&target) {
        return f64::INFINITY;
    }
    match branch.invert(k + 1, 1.0, target) {
        Ok((y, _)) if y.is_finite() => y.abs(),
        _ => f64::INFINITY,
    }
}

pub fn make_cutoffs(map: &UnimodalMap, orbit: &CriticalOrbit, tower: &Tower, top: usize) -> Result<(Vec<CutoffProfile>, Vec<f64>)> {
    let p = &tower.params;
    let beta_w = p.beta();
    if beta_w >= p.beta2 {
        return Err(Error::Tower("cutoffs need outer levels (beta1) for their support".into()));
    }
    let branch = BranchInverter::new(*map, &orbit.c);
    let delta = p.delta;
    let mut cutoffs = vec![CutoffProfile { level: 0, plateau: 0.5 * delta, support: delta }];
    let mut radii = vec![1.0, delta];
    for k in 1..=top {
        let w = preimage_radius(&branch, orbit, k, beta_w);
        let v = preimage_radius(&branch, orbit, k, p.beta2);
        let cut = if w.is_infinite() {
            CutoffProfile { level: k, plateau: f64::INFINITY, support: f64::INFINITY }
        } else {
            if !(v < w) {
                return Err(Error::Tower(format!("plateau of level {k} not inside its support")));
            }
            CutoffProfile { level: k, plateau: v, support: w }
        };
        cutoffs.push(cut);
        if k < top {
            radii.push(radii[k].min(w));
        }
    }
    // the iterates f^i, i <= k, must stay on the sign of c_i over [0, d_k]
    for k in 1..radii.len() {
        let mut y = radii[k];
        for i in 1..=k.min(orbit.n) {
            y = map.eval(y);
            if y * orbit.c[i] <= 0.0 {
                return Err(Error::Tower(format!("level {k} support folds over the critical point at step {i}")));
            }
        }
    }
    Ok((cutoffs, radii))
}

pub fn make_context(tower: &Tower, opts: TransferOptions) -> Result<OperatorContext> {
    let map = tower.map;
    let m = opts.m;
    if m < 1 {
        return Err(Error::OutOfRange("truncation level must be at least 1".into()));
    }
    let orbit = critical_orbit(&map, (m + 3).max(2000));
    let ce = estimate_ce(&orbit, tower.params.h0.clamp(1, orbit.n))?;
    let gamma = tower.params.gamma;
    let lambda_c = ce.lambda_c;
    let full_upper = gamma.exp().min(lambda_c.sqrt() * (-4.0 * gamma).exp());
    let lambda = match opts.lambda {
        Some(l) => l,
        None if gamma > 0.0 && full_upper > 1.0 => full_upper.sqrt(),
        None if gamma > 0.0 => gamma.exp().min(lambda_c.sqrt()).sqrt(),
        None => 1.2f64.min(lambda_c.powf(0.25)),
    };
    let upper = if gamma > 0.0 { lambda_c.sqrt() } else { lambda_c.sqrt() / 1.05 };
    if !(lambda > 1.0 && lambda < upper) {
        return Err(Error::OutOfRange(format!("lambda = {lambda} must lie in (1, {upper})")));
    }
    let full_lambda_bound = gamma > 0.0 && lambda > 1.0 && lambda < gamma.exp() && (4.0 * gamma).exp() * lambda < lambda_c.sqrt();

    let (cutoffs, radii) = make_cutoffs(&map, &orbit, tower, m + 1)?;
    let n0 = opts.grid0.max(16);
    let grids: Vec<Grid> = radii
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            if k == 0 {
                Grid::new(1.0, n0)
            } else {
                let n = (n0 / 16).max((n0 as f64 * 2.0 * d / 16.0).round() as usize);
                Grid::new(d, n + n % 2)
            }
        })
        .collect();
    let mut offsets = vec![0];
    for g in &grids {
        offsets.push(offsets.last().unwrap() + g.len());
    }
    let quad = GaussLegendre::new(opts.quad_order.max(2))
        .map_err(|e| Error::Config(format!("quadrature: {e}")))?
        .as_node_weight_pairs()
        .to_vec();

    let expansion = expansion_constants(&map, tower.params.delta, 4000, 200).ok();
    let (sigma, rho) = expansion.map_or((f64::NAN, f64::NAN), |e| (e.sigma, e.rho));
    let theta0 = [lambda_c.sqrt() / ((4.0 * gamma).exp() * lambda), lambda, sigma, rho]
        .into_iter()
        .filter(|v| v.is_finite())
        .fold(f64::INFINITY, f64::min);
    let tau_m = (3.0 * gamma * m as f64 - 0.5 * orbit.log_d[m]).exp();
    let branch = BranchInverter::new(map, &orbit.c);
    let cutoff_growth = cutoff_growth(&map, &cutoffs, &radii, gamma);

    let mut ctx = OperatorContext {
        tower: tower.clone(),
        map,
        lambda,
        m,
        grids,
        cutoffs,
        offsets,
        orbit,
        branch,
        diagnostics: ContextDiagnostics {
            lambda_c,
            gamma,
            sigma,
            rho,
            theta0,
            full_lambda_bound,
            tau_m,
            cutoff_growth,
        },
        quad,
        matrix: CsMat::zero((0, 0)),
        matrix_t: CsMat::zero((0, 0)),
    };
    ctx.matrix = ctx.assemble();
    ctx.matrix_t = ctx.matrix.transpose_view().to_csr();
    Ok(ctx)
}

fn cutoff_growth(map: &UnimodalMap, cutoffs: &[CutoffProfile], radii: &[f64], gamma: f64) -> Vec<(usize, f64, f64)> {
    let mut out = Vec::new();
    for (k, cut) in cutoffs.iter().enumerate().skip(1) {
        let Some((v, w)) = cut.edges() else { continue };
        let hi = w.min(*radii.get(k).unwrap_or(&w));
        if hi <= v {
            continue;
        }
        let sup = (0..=64)
            .map(|i| {
                let y = v + (hi - v) * i as f64 / 64.0;
                let (_, d) = iterate_with_derivative(map, y, k + 1);
                cut.deriv(y).abs() / d.abs()
            })
            .fold(0.0, f64::max);
        out.push((k, sup, (2.0 * gamma * k as f64).exp()));
    }
    out
}

impl OperatorContext {
    pub fn levels(&self) -> usize {
        self.grids.len()
    }

    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn radius(&self, k: usize) -> f64 {
        self.grids[k].half_width
    }

    pub fn zero(&self) -> TowerFunction {
        TowerFunction { data: vec![0.0; self.dim()] }
    }

    pub fn level<'a>(&self, psi: &'a TowerFunction, k: usize) -> &'a [f64] {
        &psi.data[self.offsets[k]..self.offsets[k + 1]]
    }

    pub fn level_mut<'a>(&self, psi: &'a mut TowerFunction, k: usize) -> &'a mut [f64] {
        &mut psi.data[self.offsets[k]..self.offsets[k + 1]]
    }

    /// Tower function sampled from per-level profiles `f(k, y)` at levels `<= top`.
    pub fn sample(&self, top: usize, f: impl Fn(usize, f64) -> f64) -> TowerFunction {
        let mut psi = self.zero();
        for k in 0..=top.min(self.levels() - 1) {
            let g = self.grids[k];
            for (i, v) in self.level_mut(&mut psi, k).iter_mut().enumerate() {
                *v = f(k, g.node(i));
            }
        }
        psi
    }

    pub fn value(&self, psi: &TowerFunction, k: usize, y: f64) -> f64 {
        self.grids[k].interp(self.level(psi, k), y)
    }

    fn lambda_pow(&self, k: usize) -> f64 {
        self.lambda.powi(k as i32)
    }

    fn gl_pieces(&self, breaks: &[f64], mut visit: impl FnMut(f64, f64)) {
        for w in breaks.windows(2) {
            let (p, q) = (w[0], w[1]);
            let (mid, half) = (0.5 * (p + q), 0.5 * (q - p));
            for &(t, wt) in &self.quad {
                visit(mid + half * t, wt * half);
            }
        }
    }

    fn assemble(&self) -> CsMat<f64> {
        let n = self.dim();
        let mut tri = TriMat::with_capacity((n, n), 64 * n);
        let top = self.levels() - 1;
        // climbs k-1 -> k
        for k in 1..=top {
            let (gi, go) = (self.grids[k - 1], self.grids[k]);
            let cut = self.cutoffs[k - 1];
            let d = go.half_width;
            let mut pts: Vec<f64> = go.nodes().chain(gi.nodes_within(-d, d)).collect();
            pts.push(0.0);
            if let Some((v, w)) = cut.edges() {
                pts.extend([v, -v, w, -w]);
            }
            let breaks = sorted_breaks(pts, -d, d);
            let (oi, oo) = (self.offsets[k - 1], self.offsets[k]);
            self.gl_pieces(&breaks, |x, wt| {
                let xi = cut.value(x) / self.lambda;
                if xi == 0.0 {
                    return;
                }
                let (Some((m, a)), Some((i, b))) = (gi.locate(x), go.locate(x)) else { return };
                let s = wt * xi;
                for (row, hb) in [(i, 1.0 - b), (i + 1, b)] {
                    let r = s * hb / go.trap_weight(row);
                    for (col, ba) in [(m, 1.0 - a), (m + 1, a)] {
                        if r * ba != 0.0 {
                            tri.add_triplet(oo + row, oi + col, r * ba);
                        }
                    }
                }
            });
        }
        // falls j -> 0
        let g0 = self.grids[0];
        for j in 0..=top {
            let cut = self.cutoffs[j];
            let Some((v, w)) = cut.edges() else { continue };
            let gj = self.grids[j];
            let d = gj.half_width;
            if v >= d {
                continue;
            }
            let weight = self.lambda_pow(j);
            for side in [1.0, -1.0] {
                let x_a = iterate(&self.map, side * v, j + 1);
                let x_b = iterate(&self.map, side * d, j + 1);
                let (xl, xh) = (x_a.min(x_b), x_a.max(x_b));
                let mut pts: Vec<f64> = gj.nodes_within(v, d).collect();
                pts.push(w);
                for x in g0.nodes_within(xl, xh) {
                    if let Ok((y, _)) = self.branch.invert(j + 1, side, x) {
                        pts.push(y.abs());
                    }
                }
                let breaks = sorted_breaks(pts, v, d);
                let oj = self.offsets[j];
                self.gl_pieces(&breaks, |u, wt| {
                    let y = side * u;
                    let val = weight * (1.0 - cut.value(y));
                    if val == 0.0 {
                        return;
                    }
                    let x = iterate(&self.map, y, j + 1);
                    let (Some((m, a)), Some((i, b))) = (gj.locate(y), g0.locate(x)) else { return };
                    let s = wt * val;
                    for (row, hb) in [(i, 1.0 - b), (i + 1, b)] {
                        let r = s * hb / g0.trap_weight(row);
                        for (col, ba) in [(m, 1.0 - a), (m + 1, a)] {
                            if r * ba != 0.0 {
                                tri.add_triplet(row, oj + col, r * ba);
                            }
                        }
                    }
                });
            }
        }
        tri.to_csr()
    }

    /// The untruncated operator on levels `0..=M`; output reaches level `M+1`.
    pub fn apply_transfer(&self, psi: &TowerFunction) -> TowerFunction {
        let input = truncate(self, psi, self.m);
        let mut out = vec![0.0; self.dim()];
        sprs::prod::mul_acc_mat_vec_csr(self.matrix.view(), &input.data[..], &mut out[..]);
        TowerFunction { data: out }
    }

    /// `T_M L̂ T_M`.
    pub fn apply_truncated(&self, psi: &TowerFunction) -> TowerFunction {
        truncate(self, &self.apply_transfer(psi), self.m)
    }

    /// Adjoint of [`apply_truncated`](Self::apply_truncated) on functionals given by node weights.
    pub fn apply_adjoint(&self, ell: &[f64]) -> Vec<f64> {
        let mut masked = ell.to_vec();
        masked[self.offsets[self.m + 1]..].iter_mut().for_each(|v| *v = 0.0);
        let mut out = vec![0.0; self.dim()];
        sprs::prod::mul_acc_mat_vec_csr(self.matrix_t.view(), &masked[..], &mut out[..]);
        out[self.offsets[self.m + 1]..].iter_mut().for_each(|v| *v = 0.0);
        out
    }

    /// Node weights of `ν`: `λ^k` times the trapezoid weights.
    pub fn nu_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.dim());
        for (k, g) in self.grids.iter().enumerate() {
            let lk = self.lambda_pow(k);
            w.extend((0..g.len()).map(|i| lk * g.trap_weight(i)));
        }
        w
    }

    /// Gauss–Legendre pairs on `[-1, 1]` used for the assembly.
    pub fn quad(&self) -> &[(f64, f64)] {
        &self.quad
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    /// Level-`k` term of `Π`: `Σ_ς λ^k ψ_k(y_ς) / |(f^k)'(y_ς)|` with `f^k(y_ς) = x`.
    pub fn level_contribution(&self, psi: &TowerFunction, k: usize, x: f64) -> f64 {
        if k == 0 {
            return self.value(psi, 0, x);
        }
        let d = self.radius(k);
        let Ok((y, deriv)) = self.branch.invert(k, 1.0, x) else { return 0.0 };
        if y > d || deriv == 0.0 {
            return 0.0;
        }
        let vals = self.level(psi, k);
        let g = self.grids[k];
        self.lambda_pow(k) * (g.interp(vals, y) + g.interp(vals, -y)) / deriv
    }
}

pub fn truncate(ctx: &OperatorContext, psi: &TowerFunction, m: usize) -> TowerFunction {
    let mut out = psi.clone();
    if m + 1 < ctx.levels() {
        out.data[ctx.offsets[m + 1]..].iter_mut().for_each(|v| *v = 0.0);
    }
    out
}

pub fn apply_transfer(ctx: &OperatorContext, psi: &TowerFunction) -> TowerFunction {
    ctx.apply_transfer(psi)
}

/// `Σ_k λ^k ∫ ψ_k`.
pub fn integrate_nu(ctx: &OperatorContext, psi: &TowerFunction) -> f64 {
    ctx.nu_weights().iter().zip(&psi.data).map(|(w, v)| w * v).sum()
}

/// `Σ_k λ^k ∫ |ψ_k|`.
pub fn norm_l1(ctx: &OperatorContext, psi: &TowerFunction) -> f64 {
    ctx.nu_weights().iter().zip(&psi.data).map(|(w, v)| w * v.abs()).sum()
}

/// `Σ_k ∫ |ψ_k'|`.
pub fn norm_bv(ctx: &OperatorContext, psi: &TowerFunction) -> f64 {
    (0..ctx.levels()).map(|k| ctx.level(psi, k).windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>()).sum()
}

pub fn project_density(ctx: &OperatorContext, psi: &TowerFunction, x: f64) -> f64 {
    (0..ctx.levels()).map(|k| ctx.level_contribution(psi, k, x)).sum()
}

/// `∫ |g(x) - h(x)| dx` over `[-1, 1]` by the midpoint rule, skipping excluded points.
pub fn l1_distance_midpoint(g: impl Fn(f64) -> f64, h: impl Fn(f64) -> f64, n: usize, exclude: impl Fn(f64) -> bool) -> f64 {
    let dx = 2.0 / n as f64;
    (0..n)
        .map(|i| -1.0 + (i as f64 + 0.5) * dx)
        .filter(|x| !exclude(*x))
        .map(|x| (g(x) - h(x)).abs() * dx)
        .sum()
}

/// Classical transfer operator of `f` applied to a density evaluator.
pub fn perron_frobenius(map: &UnimodalMap, rho: &dyn Fn(f64) -> f64, x: f64) -> f64 {
    match map.preimage_radius(x) {
        Some(r) if r > 0.0 => (rho(r) + rho(-r)) / (2.0 * map.a() * r),
        _ => 0.0,
    }
}

/// `L¹` gap between `L(Πψ̂)` and `Π(L̂ψ̂)` on `n_grid` midpoints, away from the spikes.
pub fn commutation_residual(ctx: &OperatorContext, psi: &TowerFunction, n_grid: usize) -> f64 {
    let psi = truncate(ctx, psi, ctx.m);
    let image = ctx.apply_transfer(&psi);
    let spikes: Vec<f64> = ctx.orbit.c[1..=ctx.m + 2].to_vec();
    let exclude = |x: f64| spikes.iter().any(|c| (x - c).abs() < 1e-3);
    l1_distance_midpoint(
        |x| perron_frobenius(&ctx.map, &|y| project_density(ctx, &psi, y), x),
        |x| project_density(ctx, &image, x),
        n_grid,
        exclude,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub phi: TowerFunction,
    pub kappa: f64,
    /// Node weights of the left eigenfunctional, normalized by `ν_M(φ̂) = 1`.
    pub nu_m: Vec<f64>,
    pub gap: f64,
    pub iterations: usize,
    pub clipped: usize,
    /// `‖L̂_M φ̂ − κ φ̂‖` in the weighted `L¹` norm.
    pub residual: f64,
}

fn gap_from_increments(incs: &[f64]) -> f64 {
    let usable: Vec<f64> = incs.iter().copied().filter(|d| *d > 1e-13).collect();
    let tail = &usable[usable.len().saturating_sub(12)..];
    let mut ratios: Vec<f64> = tail.windows(2).map(|w| w[1] / w[0]).collect();
    if ratios.is_empty() {
        return 0.0;
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ratios[ratios.len() / 2]
}

pub fn fixed_point(ctx: &OperatorContext, tol: f64, max_iter: usize) -> Result<FixedPoint> {
    let nu = ctx.nu_weights();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut psi = ctx.sample(0, |_, x| (1.0 - x * x).powi(2));
    let s = dot(&nu, &psi.data);
    psi.data.iter_mut().for_each(|v| *v /= s);
    let mut incs = Vec::new();
    let mut clipped = 0;
    let mut kappa = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    for it in 0..max_iter {
        let mut next = ctx.apply_truncated(&psi);
        kappa = dot(&nu, &next.data);
        for v in next.data.iter_mut() {
            if *v < -1e-12 {
                clipped += 1;
                *v = 0.0;
            }
            *v /= kappa;
        }
        let diff = TowerFunction { data: next.data.iter().zip(&psi.data).map(|(a, b)| a - b).collect() };
        let inc = norm_l1(ctx, &diff);
        incs.push(inc);
        psi = next;
        iterations = it + 1;
        if inc < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Convergence(format!("power iteration did not reach {tol} in {max_iter} steps")));
    }
    let gap = gap_from_increments(&incs);
    if kappa <= gap {
        return Err(Error::Convergence(format!("kappa {kappa} does not dominate the gap estimate {gap}")));
    }
    let image = ctx.apply_truncated(&psi);
    let res = TowerFunction { data: image.data.iter().zip(&psi.data).map(|(a, b)| a - kappa * b).collect() };
    let residual = norm_l1(ctx, &res);

    let mut ell = nu.clone();
    for _ in 0..max_iter {
        let mut next = ctx.apply_adjoint(&ell);
        let s = dot(&next, &psi.data);
        next.iter_mut().for_each(|v| *v /= s);
        let change = next.iter().zip(&ell).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ell = next;
        if change < tol {
            break;
        }
    }
    Ok(FixedPoint { phi: psi, kappa, nu_m: ell, gap, iterations, clipped, residual })
}

impl FixedPoint {
    pub fn density(&self, ctx: &OperatorContext, x: f64) -> f64 {
        project_density(ctx, &self.phi, x)
    }

    pub fn nu_m(&self, psi: &TowerFunction) -> f64 {
        self.nu_m.iter().zip(&psi.data).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeFit {
    pub slope: f64,
    pub points: usize,
    pub side: f64,
}

/// Log–log slope of the level-`k` term of `Π(ψ̂)` against `|x − c_k|` on the image side.
pub fn spike_exponent(ctx: &OperatorContext, psi: &TowerFunction, k: usize, window: f64) -> Result<SpikeFit> {
    if k == 0 || k >= ctx.levels() {
        return Err(Error::OutOfRange(format!("level {k} has no spike")));
    }
    let side = -(ctx.orbit.sign_d[k - 1] as f64);
    let ck = ctx.orbit.c[k];
    let mut pts = Vec::new();
    for i in 0..48 {
        let u = window * 10f64.powf(-3.0 + 3.0 * i as f64 / 47.0);
        let v = ctx.level_contribution(psi, k, ck + side * u);
        if v > 0.0 {
            pts.push((u.ln(), v.ln()));
        }
    }
    if pts.len() < 5 {
        return Err(Error::Insufficient(format!("only {} window points carry mass", pts.len())));
    }
    let n = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + (p.0 - mx) * (p.1 - my), a.1 + (p.0 - mx).powi(2)));
    Ok(SpikeFit { slope: sxy / sxx, points: pts.len(), side })
}
