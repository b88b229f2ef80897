//! Twisted cohomological equation `v = α∘f − f'·α`: candidate series, horizontality,
//! tower resummation, residuals, divergence witnesses and the conjugacy flow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{Profile, Smooth};
use crate::recurrence::{critical_orbit, default_h0, estimate_ce};
use crate::tower::{Time, Tower};
use crate::unimodal::{DeformationFamily, DeformationKind, IntervalMap, UnimodalMap};

/// Orbit points closer than this to the critical point count as hits.
pub const HIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    FiniteSum,
    AbsolutelyConvergent,
    Resummed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEvaluation {
    pub value: f64,
    pub n_groups: usize,
    pub tail_bound: f64,
    pub mode: AlphaMode,
    pub converged: bool,
    /// Ratio of the last two group magnitudes.
    pub ratio: f64,
}

/// Terms `v(f^j x) / (f^{j+1})'(x)` for `j < n`, stopping before the first hit.
/// The second field is the hit index, if any.
fn series_terms(map: &UnimodalMap, v: &dyn Fn(f64) -> f64, x: f64, n: usize) -> (Vec<f64>, Option<usize>) {
    let mut terms = Vec::with_capacity(n);
    let (mut y, mut log_d, mut sign) = (x, 0.0_f64, 1.0_f64);
    for j in 0..n {
        if y.abs() < HIT_TOL {
            return (terms, Some(j));
        }
        let d = map.d1(y);
        log_d += d.abs().ln();
        sign *= d.signum();
        terms.push(sign * v(y) * (-log_d).exp());
        y = map.eval(y);
    }
    (terms, None)
}

/// First `n` partial sums of `α_cand(x) = -Σ v(f^j x)/(f^{j+1})'(x)`; shorter when the
/// orbit hits the critical point. An orbit starting at the critical point gives `[0]`.
pub fn alpha_candidate_partial(map: &UnimodalMap, v: &dyn Fn(f64) -> f64, x: f64, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::OutOfRange("N must be positive".into()));
    }
    let (terms, _) = series_terms(map, v, x, n);
    if terms.is_empty() {
        return Ok(vec![0.0]);
    }
    let mut acc = 0.0;
    Ok(terms
        .iter()
        .map(|t| {
            acc -= t;
            acc
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HorizontalityDefect {
    pub defect: f64,
    pub tail_bound: f64,
    pub ce_verified: bool,
}

pub fn horizontality_defect(map: &UnimodalMap, v: &dyn Fn(f64) -> f64, n: usize) -> Result<HorizontalityDefect> {
    let orbit = critical_orbit(map, n.max(8) + 1);
    let ce = estimate_ce(&orbit, default_h0(&orbit))?;
    let sums = alpha_candidate_partial(map, v, map.c1(), n)?;
    let defect = v(0.0) - sums.last().copied().unwrap_or(0.0);
    let vmax = orbit.c.iter().map(|&c| v(c).abs()).fold(0.0, f64::max);
    let tail_bound = if ce.holds {
        vmax * (-orbit.log_d[n.min(orbit.n)]).exp() / (1.0 - 1.0 / ce.lambda_c)
    } else {
        f64::INFINITY
    };
    Ok(HorizontalityDefect { defect, tail_bound, ce_verified: ce.holds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Horizontalized {
    pub x: Profile,
    pub kappa: f64,
    pub defect_before: f64,
    pub defect_after: f64,
}

/// `X - κ·bump` with `κ` chosen so that `v = X∘f` becomes horizontal.
pub fn horizontalize(map: &UnimodalMap, x: &Profile, bump: &Profile, n: usize) -> Result<Horizontalized> {
    let defect_of = |p: &Profile| -> Result<f64> {
        let v = |y: f64| p.value(map.eval(y));
        Ok(horizontality_defect(map, &v, n)?.defect)
    };
    let dx = defect_of(x)?;
    let db = defect_of(bump)?;
    let scale = (0..=200).map(|i| x.value(-1.0 + i as f64 / 100.0).abs()).fold(0.0, f64::max).max(1.0);
    if db.abs() < 1e-12 * scale {
        return Err(Error::Degenerate("corrector has no horizontality defect".into()));
    }
    let kappa = if dx == 0.0 { 0.0 } else { dx / db };
    let adjusted = x.minus_scaled(kappa, bump);
    let defect_after = defect_of(&adjusted)?;
    Ok(Horizontalized { x: adjusted, kappa, defect_before: dx, defect_after })
}

/// Group tolerance for the resummation, relative to `max(1, |α|)`.
pub const GROUP_TOL: f64 = 1e-12;

/// `α(x)` by summing the candidate series in free/bound groups along the tower schedule.
pub fn alpha_resummed(tower: &Tower, v: &dyn Fn(f64) -> f64, x: f64, horizon: usize) -> Result<AlphaEvaluation> {
    let map = &tower.map;
    let span = horizon + tower.m_max() + 2;
    let (terms, hit) = series_terms(map, v, x, span);
    if hit.is_some_and(|h| h <= horizon) {
        let value = -terms.iter().sum::<f64>();
        return Ok(AlphaEvaluation {
            value,
            n_groups: 0,
            tail_bound: 0.0,
            mode: AlphaMode::FiniteSum,
            converged: true,
            ratio: 0.0,
        });
    }
    let sched = tower.bound_free_times(x, horizon)?;
    let block = |a: usize, b: usize| -> f64 { terms[a.min(terms.len())..b.min(terms.len())].iter().sum() };
    let no_bound = sched.t.first().is_none_or(|t| *t == Time::Infinity);
    let mode = if no_bound { AlphaMode::AbsolutelyConvergent } else { AlphaMode::Resummed };

    let mut acc = 0.0;
    let mut groups: Vec<f64> = Vec::new();
    let mut start = 0;
    let mut closed = false;
    for s in &sched.s {
        let Some(s) = s.finite() else { break };
        groups.push(block(start, s));
        acc += groups.last().unwrap();
        start = s;
        let g = groups.last().unwrap().abs();
        if g < GROUP_TOL * acc.abs().max(1.0) && groups.len() > 1 {
            closed = true;
            break;
        }
    }
    if !closed {
        // Remaining free stretch, read term by term.
        let mut tail = 0.0;
        let mut last = f64::INFINITY;
        let end = terms.len().min(horizon + 1);
        for t in terms.iter().take(end).skip(start) {
            tail += t;
            last = t.abs();
        }
        if start < end {
            groups.push(tail);
            acc += tail;
        }
        closed = last < GROUP_TOL * acc.abs().max(1.0) && !sched.unresolved;
    }
    let mags: Vec<f64> = groups.iter().map(|g| g.abs()).filter(|g| *g > 0.0).collect();
    let ratio = mags.windows(2).map(|w| w[1] / w[0]).next_back().unwrap_or(0.0);
    let last = mags.last().copied().unwrap_or(0.0);
    let tail_bound = if ratio < 1.0 { last * ratio / (1.0 - ratio) } else { f64::INFINITY };
    Ok(AlphaEvaluation { value: -acc, n_groups: groups.len(), tail_bound, mode, converged: closed, ratio })
}

/// `max_x |v(x) − α(f(x)) + f'(x) α(x)|` over a uniform sample of `[-1, 1]`.
pub fn tce_residual(map: &dyn IntervalMap, v: &dyn Fn(f64) -> f64, alpha: &dyn Fn(f64) -> f64, n_samples: usize) -> f64 {
    (0..n_samples)
        .map(|i| {
            let x = -1.0 + 2.0 * (i as f64 + 0.5) / n_samples as f64;
            (v(x) - alpha(map.f(x)) + map.d1(x) * alpha(x)).abs()
        })
        .fold(0.0, f64::max)
}

/// `d/dt c_{k,t}` at `t = 0`, from `a_k = f'(c_{k-1}) a_{k-1} + v(c_{k-1})`, `a_0 = 0`.
pub fn postcritical_velocity(map: &UnimodalMap, v: &dyn Fn(f64) -> f64, k: usize) -> f64 {
    let (mut c, mut a) = (0.0, 0.0);
    for _ in 0..k {
        a = map.d1(c) * a + v(c);
        c = map.eval(c);
    }
    a
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceWitness {
    pub x: f64,
    /// Indices `j` with `|v(f^j x) / (f^{j+1})'(x)| >= 2`.
    pub indices: Vec<usize>,
    pub magnitudes: Vec<f64>,
    /// The preimage of the critical point the witness shadows, and its order.
    pub anchor: Option<(f64, usize)>,
}

fn large_terms(map: &UnimodalMap, v: &dyn Fn(f64) -> f64, x: f64, n: usize) -> (Vec<usize>, Vec<f64>) {
    let (terms, _) = series_terms(map, v, x, n);
    terms.iter().enumerate().filter(|(_, t)| t.abs() >= 2.0).map(|(j, t)| (j, t.abs())).unzip()
}

/// Finds `x ∈ A` where the candidate series has at least `depth` terms of size `>= 2`.
///
/// The witness sits next to a preimage `p ∈ A` of the critical point; the orbit of `p + η`
/// follows the critical orbit for a stretch whose length grows as `η` shrinks, and every
/// step of that stretch contributes a large term.
pub fn divergence_probe(map: &UnimodalMap, v: &dyn Fn(f64) -> f64, a: (f64, f64), depth: usize) -> Result<DivergenceWitness> {
    let (lo, hi) = a;
    if !(lo < hi && lo >= -1.0 && hi <= 1.0) {
        return Err(Error::OutOfRange(format!("interval [{lo}, {hi}] invalid")));
    }
    if depth == 0 {
        return Ok(DivergenceWitness { x: 0.5 * (lo + hi), indices: vec![], magnitudes: vec![], anchor: None });
    }
    let h = 1e-5;
    let slope = (v(h) - v(-h)) / (2.0 * h);
    if slope.abs() > 1e-6 * (1.0 + v(0.0).abs()) {
        return Err(Error::Degenerate(format!("v'(c) = {slope} is not zero")));
    }
    let grid = 4096;
    let pts: Vec<f64> = (0..=grid).map(|i| lo + (hi - lo) * i as f64 / grid as f64).collect();
    let mut vals = pts.clone();
    for n in 0..64 {
        for i in 0..grid {
            if vals[i] * vals[i + 1] > 0.0 {
                continue;
            }
            let orbit_n = |x: f64| (0..n).fold(x, |y, _| map.eval(y));
            let (mut l, mut r) = (pts[i], pts[i + 1]);
            let fl = orbit_n(l);
            for _ in 0..200 {
                let m = 0.5 * (l + r);
                if orbit_n(m) * fl > 0.0 {
                    l = m;
                } else {
                    r = m;
                }
                if r - l <= f64::EPSILON * m.abs().max(1e-300) {
                    break;
                }
            }
            let p = 0.5 * (l + r);
            let room = (p - lo).max(hi - p);
            let side = if hi - p >= p - lo { 1.0 } else { -1.0 };
            let mut eta = room;
            while eta > 1e-15 * p.abs().max(1e-3) {
                let x = p + side * eta;
                let (indices, magnitudes) = large_terms(map, v, x, n + 400);
                if indices.len() >= depth {
                    return Ok(DivergenceWitness { x, indices, magnitudes, anchor: Some((p, n)) });
                }
                eta *= 0.5;
            }
        }
        for y in vals.iter_mut() {
            *y = map.eval(*y);
        }
    }
    Err(Error::Convergence("no preimage of the critical point found in the interval".into()))
}

/// Classical four-stage integration of `du/ds = α_s(u)`, `u(0) = x`, up to `s = t`.
pub fn integrate_conjugacy_ode(alpha: &dyn Fn(f64, f64) -> Result<f64>, x: f64, t: f64, n_steps: usize) -> Result<f64> {
    if t == 0.0 {
        return Ok(x);
    }
    let n = n_steps.max(1);
    let h = t / n as f64;
    let mut u = x;
    for i in 0..n {
        let s = i as f64 * h;
        let k1 = alpha(s, u)?;
        let k2 = alpha(s + 0.5 * h, u + 0.5 * h * k1)?;
        let k3 = alpha(s + 0.5 * h, u + 0.5 * h * k2)?;
        let k4 = alpha(s + h, u + h * k3)?;
        u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    Ok(u)
}

/// Conjugacy flow for a conjugation family, with `α_s = g ∘ h_s^{-1}`.
pub fn conjugation_flow(family: &DeformationFamily, x: f64, t: f64, n_steps: usize) -> Result<f64> {
    let DeformationKind::Conjugation { g } = &family.kind else {
        return Err(Error::Config("closed-form α_s needs a conjugation family".into()));
    };
    integrate_conjugacy_ode(&|s, u| Ok(g.value(family.h_inv(s, u))), x, t, n_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tower::tests::a19_tower;
    use crate::unimodal::{make_family, make_quadratic};
    use proptest::prelude::*;

    fn conj_v(map: UnimodalMap) -> impl Fn(f64) -> f64 {
        let g = Profile::cubic_odd();
        move |x: f64| g.value(map.eval(x)) - map.d1(x) * g.value(x)
    }

    #[test]
    fn candidate_examples() {
        let ulam = make_quadratic(2.0).unwrap();
        let v = |x: f64| x;
        assert_eq!(alpha_candidate_partial(&ulam, &v, 0.0, 10).unwrap(), vec![0.0]);
        let (p, q) = (0.7, -0.3);
        let v = move |x: f64| if x > 0.0 { p } else { q };
        let sums = alpha_candidate_partial(&ulam, &v, 1.0, 60).unwrap();
        assert!((sums.last().unwrap() - (p / 4.0 + q / 12.0)).abs() < 1e-15);
        let v = conj_v(ulam);
        let sums = alpha_candidate_partial(&ulam, &v, 1.0, 60).unwrap();
        assert!(sums.last().unwrap().abs() < 1e-15);
    }

    #[test]
    fn horizontality_examples() {
        let m = make_quadratic(1.9).unwrap();
        let v = conj_v(m);
        assert!(horizontality_defect(&m, &v, 400).unwrap().defect.abs() < 1e-10);
        assert_eq!(horizontality_defect(&m, &|_| 0.0, 100).unwrap().defect, 0.0);
        let ulam = make_quadratic(2.0).unwrap();
        let xp = Profile::poly(&[1.0, 0.0, -1.0]);
        let v = |y: f64| xp.value(ulam.eval(y));
        let d = horizontality_defect(&ulam, &v, 60).unwrap();
        // brute force: v(0) = X(1) = 0 and every later term carries X(-1) = 0
        let brute: f64 = v(0.0) + (0..60).map(|j| v(if j == 0 { 1.0 } else { -1.0 })).sum::<f64>();
        assert_eq!(d.defect, 0.0);
        assert_eq!(brute, 0.0);
    }

    #[test]
    fn horizontalize_examples() {
        let m = make_quadratic(1.9).unwrap();
        let bump = Profile::bump(critical_orbit(&m, 3).c[3], 0.05);
        let zero = horizontalize(&m, &Profile::Zero, &bump, 400).unwrap();
        assert_eq!(zero.kappa, 0.0);
        let same = horizontalize(&m, &bump, &bump, 400).unwrap();
        assert!((same.kappa - 1.0).abs() < 1e-12);
        let x2 = horizontalize(&m, &Profile::poly(&[0.0, 0.0, 1.0]), &bump, 400).unwrap();
        assert!(x2.defect_after.abs() < 1e-10);
        assert!(x2.kappa.is_finite() && x2.kappa != 0.0);
        assert!((x2.kappa + 7.442871634264502).abs() < 1e-9, "{}", x2.kappa);
        assert!(horizontalize(&m, &bump, &Profile::Zero, 400).is_err());
    }

    #[test]
    fn resummed_matches_conjugation_profile() {
        let t = a19_tower(150);
        let v = conj_v(t.map);
        let g = Profile::cubic_odd();
        let mut worst: f64 = 0.0;
        for i in 0..100 {
            let x = -1.0 + 2.0 * (i as f64 + 0.31) / 100.0;
            let a = alpha_resummed(&t, &v, x, 600).unwrap();
            worst = worst.max((a.value - g.value(x)).abs());
        }
        assert!(worst < 1e-6, "{worst}");
    }

    #[test]
    fn resummed_finite_sum_on_hits() {
        let t = a19_tower(60);
        let v = conj_v(t.map);
        let a = alpha_resummed(&t, &v, 0.0, 100).unwrap();
        assert_eq!(a.mode, AlphaMode::FiniteSum);
        assert_eq!(a.value, 0.0);
        assert_eq!(a.tail_bound, 0.0);
        // a preimage of the critical point: f(x) = 0
        let x = t.map.preimage_radius(0.0).unwrap();
        let a = alpha_resummed(&t, &v, x, 100).unwrap();
        let raw = alpha_candidate_partial(&t.map, &v, x, 100).unwrap();
        assert_eq!(a.mode, AlphaMode::FiniteSum);
        assert_eq!(a.value, *raw.last().unwrap());
    }

    #[test]
    fn postcritical_fd() {
        let m = make_quadratic(1.9).unwrap();
        let fam = make_family(m, DeformationKind::Conjugation { g: Profile::cubic_odd() }, 0.1).unwrap();
        let v = |x: f64| fam.velocity(0.0, x);
        let t = 1e-6;
        let (mut c, mut ct) = (0.0, 0.0);
        for k in 1..=8 {
            c = m.eval(c);
            ct = fam.eval(t, ct);
            let fd = (ct - c) / t;
            let a = postcritical_velocity(&m, &v, k);
            assert!((a - fd).abs() < 1e-4, "k {k}: {a} vs {fd}");
            let cand = alpha_candidate_partial(&m, &v, c, 400).unwrap();
            assert!((cand.last().unwrap() - a).abs() < 1e-8);
        }
    }

    #[test]
    fn residual_examples() {
        let m = make_quadratic(1.9).unwrap();
        let g = Profile::cubic_odd();
        let v = conj_v(m);
        assert!(tce_residual(&m, &v, &|x| g.value(x), 1000) < 1e-15);
        let w = |x: f64| 1.0 - x * x;
        let r = tce_residual(&m, &w, &|_| 0.0, 1001);
        assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn resummed_solves_tce_for_horizontal_field() {
        let t = a19_tower(150);
        let bump = Profile::bump(t.c[3], 0.05);
        let hx = horizontalize(&t.map, &Profile::poly(&[0.0, 0.0, 1.0, 1.0]), &bump, 400).unwrap();
        let xp = hx.x.clone();
        let map = t.map;
        let v = move |y: f64| xp.value(map.eval(y));
        let alpha = |x: f64| alpha_resummed(&t, &v, x, 600).unwrap().value;
        let mut worst: f64 = 0.0;
        for i in 0..1000 {
            let x = -1.0 + 2.0 * (i as f64 + 0.5) / 1000.0;
            let r = (alpha(map.eval(x)) - map.d1(x) * alpha(x) - v(x)).abs();
            worst = worst.max(r / (1.0 + map.d1(x).abs()));
        }
        assert!(worst < 1e-5, "{worst}");
        let coarse = (0..5000).map(|i| alpha(-1.0 + 2.0 * (i as f64 + 0.5) / 5000.0).abs()).fold(0.0, f64::max);
        let fine = (0..10000).map(|i| alpha(-1.0 + 2.0 * (i as f64 + 0.5) / 10000.0).abs()).fold(0.0, f64::max);
        assert!(coarse.is_finite() && fine.is_finite());
        assert!(fine <= 2.0 * coarse + 1.0, "{coarse} {fine}");
    }

    #[test]
    fn resummed_agrees_with_stable_raw_sums() {
        let t = a19_tower(150);
        let bump = Profile::bump(t.c[3], 0.05);
        let hx = horizontalize(&t.map, &Profile::poly(&[0.0, 0.0, 1.0, 1.0]), &bump, 400).unwrap();
        let map = t.map;
        let v = move |y: f64| hx.x.value(map.eval(y));
        let mut checked = 0;
        for i in 0..300 {
            let x = -1.0 + 2.0 * (i as f64 + 0.17) / 300.0;
            let raw = alpha_candidate_partial(&map, &v, x, 400).unwrap();
            let n = raw.len();
            if n < 21 {
                continue;
            }
            let spread = raw[n - 20..].iter().fold(0.0f64, |m, s| m.max((s - raw[n - 1]).abs()));
            if spread < 1e-8 {
                checked += 1;
                let a = alpha_resummed(&t, &v, x, 400).unwrap();
                assert!((a.value - raw[n - 1]).abs() < 1e-6, "x {x}");
                let b = alpha_resummed(&t, &v, x, 250).unwrap();
                assert!((a.value - b.value).abs() <= a.tail_bound + b.tail_bound + 1e-9);
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn divergence_witness() {
        let m = make_quadratic(1.9).unwrap();
        let xp = Profile::poly(&[1.0, 0.0, -1.0]);
        let v = |y: f64| xp.value(m.eval(y));
        let w0 = divergence_probe(&m, &v, (0.1, 0.2), 0).unwrap();
        assert!(w0.indices.is_empty());
        let w = divergence_probe(&m, &v, (0.1, 0.2), 5).unwrap();
        assert!(w.x >= 0.1 && w.x <= 0.2);
        assert!(w.indices.len() >= 5);
        assert!((w.x - 0.12068283715215453).abs() < 1e-12);
        assert_eq!(w.indices, vec![5, 6, 7, 8, 9, 10]);
        let (terms, _) = series_terms(&m, &v, w.x, w.indices.last().unwrap() + 1);
        for &j in &w.indices {
            assert!(terms[j].abs() >= 2.0);
        }
        let (p, n) = w.anchor.unwrap();
        assert!((0..n).fold(p, |y, _| m.eval(y)).abs() < 1e-9);
        assert!(divergence_probe(&m, &|y| y, (0.1, 0.2), 3).is_err());
    }

    #[test]
    fn conjugacy_flow_examples() {
        let m = make_quadratic(1.9).unwrap();
        let fam = make_family(m, DeformationKind::Conjugation { g: Profile::cubic_odd() }, 0.1).unwrap();
        assert_eq!(conjugation_flow(&fam, 0.3, 0.0, 64).unwrap(), 0.3);
        for &t in &[-0.05, 0.02, 0.05] {
            for &x in &[-0.8, 0.1, 0.6] {
                let u = conjugation_flow(&fam, x, t, 64).unwrap();
                assert!((u - fam.h(t, x)).abs() < 1e-6);
            }
        }
        let zero = make_family(m, DeformationKind::Conjugation { g: Profile::Zero }, 0.1).unwrap();
        assert_eq!(conjugation_flow(&zero, 0.4, 0.05, 64).unwrap(), 0.4);
        let add = make_family(m, DeformationKind::Additive { x: Profile::poly(&[1.0, 1.0]) }, 0.01).unwrap();
        assert!(conjugation_flow(&add, 0.4, 0.05, 64).is_err());
    }

    proptest! {
        #[test]
        fn witnesses_satisfy_bound(lo in 0.05f64..0.5, w in 0.02f64..0.2, depth in 1usize..6) {
            let m = make_quadratic(1.9).unwrap();
            let xp = Profile::poly(&[1.0, 0.0, -1.0]);
            let v = |y: f64| xp.value(m.eval(y));
            if let Ok(wit) = divergence_probe(&m, &v, (lo, (lo + w).min(1.0)), depth) {
                let (terms, _) = series_terms(&m, &v, wit.x, wit.indices.last().copied().unwrap_or(0) + 1);
                for &j in &wit.indices {
                    prop_assert!(terms[j].abs() >= 2.0);
                }
                prop_assert!(wit.indices.len() >= depth);
            }
        }
    }
}
