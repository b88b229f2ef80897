//! Linear response of the invariant density through the tower operator.
//!
//! For `f_t = (id + tX) ∘ f` the derivative of `∫ A dμ_t` at `t = 0` splits into a
//! level-0 source `D = −(T₀ L̂(Ŷφ̂))'` propagated by the resolvent, and the
//! part of `L̂(Ŷφ̂)` above level 0, paired with `A'` after integrating by parts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{tower_measure, WeightedNodes};
use crate::oracle::birkhoff_average;
use crate::profile::{FnSmooth, Smooth};
use crate::tower::Tower;
use crate::transfer::{integrate_nu, iterate_with_derivative, norm_l1, FixedPoint, OperatorContext, TowerFunction};
use crate::unimodal::{make_family, DeformationFamily, DeformationKind, IntervalMap};

/// Mean corrections above this signal an under-resolved level-0 grid.
pub const MEAN_CORRECTION_LIMIT: f64 = 1e-4;

fn additive_payload(family: &DeformationFamily) -> Result<&crate::profile::Profile> {
    match &family.kind {
        DeformationKind::Additive { x } => Ok(x),
        DeformationKind::Conjugation { .. } => {
            Err(Error::Config("the response formula needs an additive family; use the pushforward oracle".into()))
        }
    }
}

/// `Y_1, ..., Y_k` at `x` for the member `f_s`, by `Y_{j+1} = f_s'(f_s^j x) Y_j + X(f_s^{j+1} x)`.
pub fn y_weights_upto(family: &DeformationFamily, s: f64, x: f64, k: usize) -> Result<Vec<f64>> {
    let xp = additive_payload(family)?;
    let member = family.member(s);
    let mut out = Vec::with_capacity(k);
    let mut y = member.f(x);
    let mut acc = xp.value(y);
    for j in 1..=k {
        out.push(acc);
        if j == k {
            break;
        }
        let d = member.d1(y);
        y = member.f(y);
        acc = d * acc + xp.value(y);
    }
    Ok(out)
}

/// `Y_{k,s}(x) = Σ_{j=1}^{k} (f_s^{k−j})'(f_s^j x) X(f_s^j x)`.
pub fn y_weights(family: &DeformationFamily, s: f64, x: f64, k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::OutOfRange("Y_k needs k >= 1".into()));
    }
    Ok(*y_weights_upto(family, s, x, k)?.last().unwrap())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Source {
    /// `D`, supported on level 0.
    pub d: TowerFunction,
    /// `L̂(Ŷφ̂)`.
    pub image: TowerFunction,
    /// Quadrature mean of `D₀` removed to make it exactly mean-zero.
    pub mean_correction: f64,
}

/// `Ŷφ̂` with `Ŷ_k = Y_{k+1}` on the support nodes of each level.
pub fn weighted_fixed_point(ctx: &OperatorContext, phi: &TowerFunction, family: &DeformationFamily) -> Result<TowerFunction> {
    let mut out = ctx.zero();
    for k in 0..=ctx.m.min(ctx.levels() - 1) {
        let g = ctx.grids[k];
        let vals = ctx.level(phi, k).to_vec();
        let dst = ctx.level_mut(&mut out, k);
        for (i, v) in vals.iter().enumerate() {
            if *v != 0.0 {
                dst[i] = v * y_weights(family, 0.0, g.node(i), k + 1)?;
            }
        }
    }
    Ok(out)
}

pub fn response_source(ctx: &OperatorContext, fp: &FixedPoint, family: &DeformationFamily) -> Result<Source> {
    additive_payload(family)?;
    let yphi = weighted_fixed_point(ctx, &fp.phi, family)?;
    let image = ctx.apply_transfer(&yphi);
    let g0 = ctx.grids[0];
    let v = ctx.level(&image, 0);
    let h = g0.h();
    let n = g0.n;
    let mut d = ctx.zero();
    let dst = ctx.level_mut(&mut d, 0);
    for i in 1..n {
        dst[i] = -(v[i + 1] - v[i - 1]) / (2.0 * h);
    }
    // interior nodes carry trapezoid weight h each, 2 - h in total
    let raw_mean = g0.integrate(dst);
    dst[1..n].iter_mut().for_each(|x| *x -= raw_mean / (2.0 - h));
    let mean_correction = raw_mean.abs();
    if mean_correction > MEAN_CORRECTION_LIMIT {
        return Err(Error::Convergence(format!("mean correction {mean_correction:e} exceeds {MEAN_CORRECTION_LIMIT:e}")));
    }
    Ok(Source { d, image, mean_correction })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolventResult {
    pub u: TowerFunction,
    pub iterations: usize,
    /// Median ratio of successive increment norms.
    pub ratio: f64,
}

fn project_off(nu: &[f64], phi: &TowerFunction, g: &mut TowerFunction) {
    let c: f64 = nu.iter().zip(&g.data).map(|(w, v)| w * v).sum();
    g.data.iter_mut().zip(&phi.data).for_each(|(a, p)| *a -= c * p);
}

/// `Σ_n (Q L̂_M)^n Q ĝ` with `Q = id − φ̂ ν(·)`, summed until the increment drops below `tol`.
///
/// `ν` is the conserved weight, not the left eigenfunctional of `L̂_M`: the latter
/// varies on scales far below the level-0 grid and turns the sum grid-noisy.
pub fn resolvent_apply(ctx: &OperatorContext, fp: &FixedPoint, g: &TowerFunction, tol: f64, n_max: usize) -> Result<ResolventResult> {
    let scale = norm_l1(ctx, g);
    let mass = integrate_nu(ctx, g);
    if mass.abs() > 1e-8 * scale.max(f64::MIN_POSITIVE) && scale > 0.0 {
        return Err(Error::Domain(format!("ν(ĝ) = {mass:e} is not negligible against ‖ĝ‖ = {scale:e}")));
    }
    let nu = ctx.nu_weights();
    let mut w = g.clone();
    project_off(&nu, &fp.phi, &mut w);
    let mut u = w.clone();
    let mut norms = vec![norm_l1(ctx, &w)];
    let mut iterations = 0;
    while norms.last().copied().unwrap_or(0.0) >= tol {
        if iterations >= n_max {
            return Err(Error::Convergence(format!("resolvent increments still {:e} after {n_max} steps", norms.last().unwrap())));
        }
        w = ctx.apply_truncated(&w);
        project_off(&nu, &fp.phi, &mut w);
        u.data.iter_mut().zip(&w.data).for_each(|(a, b)| *a += b);
        norms.push(norm_l1(ctx, &w));
        iterations += 1;
    }
    let mut ratios: Vec<f64> = norms.windows(2).filter(|p| p[0] > 0.0).map(|p| p[1] / p[0]).collect();
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let ratio = if ratios.is_empty() { 0.0 } else { ratios[ratios.len() / 2] };
    if ratio >= 1.0 {
        return Err(Error::Convergence(format!("increment ratio {ratio} shows no geometric decay")));
    }
    Ok(ResolventResult { u, iterations, ratio })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseDiagnostics {
    pub mean_correction: f64,
    pub resolvent_ratio: f64,
    /// `‖D‖` in the weighted `L¹` norm.
    pub source_norm: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseReport {
    pub formula_value: f64,
    pub term1: f64,
    pub term2: f64,
    pub oracle_conjugation: Option<f64>,
    pub fd_estimate: Option<FdEstimate>,
    pub ruelle_lhs: Option<f64>,
    pub ruelle_rhs: Option<f64>,
    pub resolvent_iters: usize,
    pub diagnostics: ResponseDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolventOptions {
    pub tol: f64,
    pub n_max: usize,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        ResolventOptions { tol: 1e-10, n_max: 5000 }
    }
}

/// The pieces of the formula that do not depend on the observable.
#[derive(Debug, Clone)]
pub struct ResponseParts {
    pub source: Source,
    pub resolvent: ResolventResult,
    /// `Π(u) dx` for the resolvent image `u`.
    pub bulk: WeightedNodes,
    /// `Π((id − T₀) L̂(Ŷφ̂)) dx`.
    pub upper: WeightedNodes,
    pub kappa: f64,
    pub source_norm: f64,
}

pub fn response_parts(ctx: &OperatorContext, fp: &FixedPoint, family: &DeformationFamily, opts: ResolventOptions) -> Result<ResponseParts> {
    if family.base != ctx.map {
        return Err(Error::Config("family base map differs from the operator's map".into()));
    }
    let source = response_source(ctx, fp, family)?;
    let resolvent = resolvent_apply(ctx, fp, &source.d, opts.tol, opts.n_max)?;
    let top = ctx.levels() - 1;
    let bulk = tower_measure(ctx, &resolvent.u, 0..=top);
    let upper = tower_measure(ctx, &source.image, 1..=top);
    let source_norm = norm_l1(ctx, &source.d);
    Ok(ResponseParts { source, resolvent, bulk, upper, kappa: fp.kappa, source_norm })
}

impl ResponseParts {
    pub fn evaluate(&self, a: &dyn Smooth) -> ResponseReport {
        let term1 = self.bulk.integrate(|x| a.value(x));
        let term2 = self.upper.integrate(|x| a.deriv(x));
        ResponseReport {
            formula_value: term1 + term2,
            term1,
            term2,
            oracle_conjugation: None,
            fd_estimate: None,
            ruelle_lhs: None,
            ruelle_rhs: None,
            resolvent_iters: self.resolvent.iterations,
            diagnostics: ResponseDiagnostics {
                mean_correction: self.source.mean_correction,
                resolvent_ratio: self.resolvent.ratio,
                source_norm: self.source_norm,
                kappa: self.kappa,
            },
        }
    }
}

pub fn linear_response(ctx: &OperatorContext, fp: &FixedPoint, family: &DeformationFamily, a: &dyn Smooth) -> Result<ResponseReport> {
    Ok(response_parts(ctx, fp, family, ResolventOptions::default())?.evaluate(a))
}

/// `∫ A' g dμ`, the derivative of `∫ A ∘ h_t dμ` for a conjugation family.
pub fn response_oracle_conjugation(family: &DeformationFamily, measure: &WeightedNodes, a: &dyn Smooth) -> Result<f64> {
    match &family.kind {
        DeformationKind::Conjugation { g } => Ok(measure.integrate(|x| a.deriv(x) * g.value(x))),
        DeformationKind::Additive { .. } => Err(Error::Config("the pushforward oracle needs a conjugation family".into())),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdOptions {
    pub t_step: f64,
    pub n_orbits: usize,
    pub n_iter: usize,
    pub burn_in: usize,
    pub seed: u64,
}

/// Central difference of Birkhoff averages at `±t_step`.
pub fn response_fd(family: &DeformationFamily, a: &(dyn Fn(f64) -> f64 + Sync), opts: FdOptions) -> Result<FdEstimate> {
    let t = opts.t_step;
    if !(t > 0.0) {
        return Err(Error::OutOfRange("t_step must be positive".into()));
    }
    let probe = make_family(family.base, family.kind.clone(), t)?;
    for (s, report) in probe.validate_members(4001) {
        if let Some(c) = report.checks.iter().find(|c| !c.passed && !c.warning_only) {
            return Err(Error::Domain(format!("f_{s} fails the `{}` check (margin {:e})", c.name, c.margin)));
        }
    }
    let plus = birkhoff_average(&family.member(t), a, opts.n_orbits, opts.n_iter, opts.burn_in, opts.seed)?;
    let minus = birkhoff_average(&family.member(-t), a, opts.n_orbits, opts.n_iter, opts.burn_in, opts.seed)?;
    Ok(FdEstimate {
        estimate: (plus.mean - minus.mean) / (2.0 * t),
        stderr: plus.stderr.hypot(minus.stderr) / (2.0 * t),
    })
}

/// `(∂_t ∫ (A − A∘f) dμ_t, ∫ A' X φ dx)`.
pub fn ruelle_identity_check(ctx: &OperatorContext, fp: &FixedPoint, family: &DeformationFamily, a: &dyn Smooth) -> Result<(f64, f64)> {
    let parts = response_parts(ctx, fp, family, ResolventOptions::default())?;
    ruelle_from_parts(ctx, fp, family, &parts, a)
}

pub fn ruelle_from_parts(ctx: &OperatorContext, fp: &FixedPoint, family: &DeformationFamily, parts: &ResponseParts, a: &dyn Smooth) -> Result<(f64, f64)> {
    let xp = additive_payload(family)?;
    let map = ctx.map;
    let b = FnSmooth { value: |x: f64| a.value(x) - a.value(map.eval(x)), deriv: |x: f64| a.deriv(x) - a.deriv(map.eval(x)) * map.d1(x) };
    let lhs = parts.evaluate(&b).formula_value;
    let rhs = tower_measure(ctx, &fp.phi, 0..=ctx.m).integrate(|x| a.deriv(x) * xp.value(x));
    Ok((lhs, rhs))
}

/// `S_N(z) = Σ_{k<N} z^k ∫ X · (A ∘ f^k)' dμ` for `N = 1..=n`.
pub fn susceptibility_partial(map: &dyn IntervalMap, measure: &WeightedNodes, x: &dyn Smooth, a: &dyn Smooth, z: f64, n: usize) -> Result<Vec<f64>> {
    if !(z.abs() <= 1.0) {
        return Err(Error::OutOfRange(format!("|z| = {} must not exceed 1", z.abs())));
    }
    let mut terms = vec![0.0; n];
    for (&p, &w) in measure.x.iter().zip(&measure.w) {
        let xv = x.value(p);
        if xv == 0.0 || w == 0.0 {
            continue;
        }
        let (mut y, mut d) = (p, 1.0);
        for term in terms.iter_mut() {
            *term += w * xv * a.deriv(y) * d;
            d *= map.d1(y);
            y = map.f(y);
        }
    }
    let mut out = Vec::with_capacity(n);
    let (mut acc, mut zk) = (0.0, 1.0);
    for t in terms {
        acc += zk * t;
        zk *= z;
        out.push(acc);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodLemmaRow {
    pub k: usize,
    pub max_ratio: f64,
    pub implied_constant: f64,
    pub samples: usize,
}

/// Implied constants of `sup |Y_k| / |(f^k)'|` over the fall intervals `I_k`
/// against `e^{2γk} |(f^{k−1})'(c_1)|^{−1/2}`.
pub fn goodlemma_check(tower: &Tower, family: &DeformationFamily, ks: std::ops::RangeInclusive<usize>) -> Result<Vec<GoodLemmaRow>> {
    additive_payload(family)?;
    let gamma = tower.params.gamma;
    let orbit = crate::recurrence::critical_orbit(&tower.map, *ks.end() + 2);
    let mut rows = Vec::new();
    for k in ks {
        let Ok(pair) = tower.fall_intervals(k) else { continue };
        let mut best = 0.0f64;
        let mut samples = 0;
        for (lo, hi) in [pair.plus, pair.minus].into_iter().flatten() {
            for i in 0..=32 {
                let y = lo + (hi - lo) * i as f64 / 32.0;
                let (_, dk) = iterate_with_derivative(&tower.map, y, k);
                if dk == 0.0 {
                    continue;
                }
                best = best.max((y_weights(family, 0.0, y, k)? / dk).abs());
                samples += 1;
            }
        }
        if samples == 0 {
            continue;
        }
        let scale = (2.0 * gamma * k as f64).exp() * (-0.5 * orbit.log_d[k - 1]).exp();
        rows.push(GoodLemmaRow { k, max_ratio: best, implied_constant: best / scale, samples });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests;
