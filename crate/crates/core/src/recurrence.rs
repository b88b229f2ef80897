//! Hyperbolicity and recurrence constants estimated from the critical orbit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::unimodal::{IntervalMap, UnimodalMap};

/// Postcritical data. Index `k` holds `c_k = f^k(0)`; index 0 is the critical point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticalOrbit {
    pub n: usize,
    pub c: Vec<f64>,
    /// `log |(f^k)'(c_1)|`, with `log_d[0] = 0`.
    pub log_d: Vec<f64>,
    /// Sign of `(f^k)'(c_1)`.
    pub sign_d: Vec<i8>,
    pub dist: Vec<f64>,
    /// `(j, k)` with `c_k` repeating `c_j`, if detected.
    pub preperiodic: Option<(usize, usize)>,
}

const REPEAT_TOL: f64 = 1e-12;

pub fn critical_orbit(map: &UnimodalMap, n: usize) -> CriticalOrbit {
    let n = n.max(1);
    let mut c = vec![0.0; n + 1];
    let mut log_d = vec![0.0; n + 1];
    let mut sign_d = vec![1i8; n + 1];
    for k in 1..=n {
        c[k] = map.eval(c[k - 1]);
        let slope = map.d1(c[k]);
        log_d[k] = log_d[k - 1] + slope.abs().ln();
        sign_d[k] = sign_d[k - 1] * if slope < 0.0 { -1 } else { 1 };
    }
    let dist = c.iter().map(|x| x.abs()).collect();
    let mut preperiodic = None;
    'outer: for k in 2..=n {
        for j in 1..k {
            if (c[k] - c[j]).abs() < REPEAT_TOL {
                preperiodic = Some((j, k));
                break 'outer;
            }
        }
    }
    CriticalOrbit { n, c, log_d, sign_d, dist, preperiodic }
}

impl CriticalOrbit {
    /// Orbit with prescribed distances and derivative logs; used for constructed cases.
    pub fn synthetic(c: Vec<f64>, log_d: Vec<f64>) -> Self {
        let n = c.len() - 1;
        let dist = c.iter().map(|x| x.abs()).collect();
        CriticalOrbit { n, c, log_d, sign_d: vec![1; n + 1], dist, preperiodic: None }
    }

    /// `(f^k)'(c_1)` as a float; may overflow for very large `k`.
    pub fn derivative(&self, k: usize) -> f64 {
        self.sign_d[k] as f64 * self.log_d[k].exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CeEstimate {
    pub lambda_c: f64,
    pub holds: bool,
    pub argmin: usize,
}

pub fn estimate_ce(orbit: &CriticalOrbit, h0: usize) -> Result<CeEstimate> {
    if h0 == 0 || h0 > orbit.n {
        return Err(Error::OutOfRange(format!("H0 = {h0} must lie in 1..={}", orbit.n)));
    }
    let (argmin, rate) = (h0..=orbit.n)
        .map(|k| (k, orbit.log_d[k] / k as f64))
        .fold((h0, f64::INFINITY), |acc, v| if v.1 < acc.1 { v } else { acc });
    let lambda_c = rate.exp();
    Ok(CeEstimate { lambda_c, holds: lambda_c > 1.0, argmin })
}

/// Smallest `H0` such that `|(f^k)'(c_1)| >= λ_fit^k` for every `k >= H0`, where
/// `log λ_fit` is 0.9 times the lowest growth rate over the second half of the orbit.
pub fn default_h0(orbit: &CriticalOrbit) -> usize {
    let start = (orbit.n / 2).max(1);
    let rate = (start..=orbit.n).map(|k| orbit.log_d[k] / k as f64).fold(f64::INFINITY, f64::min);
    let target = 0.9 * rate;
    let mut h0 = 1;
    for k in 1..=orbit.n {
        if orbit.log_d[k] < target * k as f64 {
            h0 = k + 1;
        }
    }
    h0.min(orbit.n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BecEstimate {
    pub gamma: f64,
    /// `gamma < log λ_c / 4`, `/ 8`, `/ 14`.
    pub flags: [bool; 3],
    pub argmax: usize,
}

pub fn estimate_bec(orbit: &CriticalOrbit, h0: usize, lambda_c: f64) -> Result<BecEstimate> {
    if h0 == 0 || h0 > orbit.n {
        return Err(Error::OutOfRange(format!("H0 = {h0} must lie in 1..={}", orbit.n)));
    }
    if (h0..=orbit.n).any(|k| orbit.dist[k] == 0.0) {
        return Err(Error::Degenerate("critical orbit returns to the critical point".into()));
    }
    let mut gamma = 0.0;
    let mut argmax = h0;
    for k in h0..=orbit.n {
        let g = -orbit.dist[k].ln() / k as f64;
        if g > gamma {
            gamma = g;
            argmax = k;
        }
    }
    let l = lambda_c.ln();
    Ok(BecEstimate { gamma, flags: [gamma < l / 4.0, gamma < l / 8.0, gamma < l / 14.0], argmax })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsrValue {
    pub value: f64,
    pub capped: bool,
    pub degenerate: bool,
}

fn sgn(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// `R_f(c_j)` for `1 <= j <= n`, each capped at `j_max`; second field flags any cap.
pub fn sign_agreement_times(map: &UnimodalMap, n: usize, j_max: usize) -> (Vec<usize>, bool) {
    let orbit = critical_orbit(map, n + j_max + 1);
    let s: Vec<i8> = orbit.c.iter().map(|&x| sgn(x)).collect();
    let mut capped = false;
    let times = (1..=n)
        .map(|j| {
            let mut r = j_max;
            for i in 1..=j_max {
                if s[i] != s[i + j] {
                    r = i;
                    break;
                }
            }
            if r == j_max && s[j_max] == s[j_max + j] {
                capped = true;
            }
            r
        })
        .collect();
    (times, capped)
}

pub fn tsr_statistic(map: &UnimodalMap, m: usize, n: usize, j_max: usize) -> TsrValue {
    if n == 0 {
        return TsrValue { value: 0.0, capped: false, degenerate: false };
    }
    if critical_orbit(map, n.min(4000)).preperiodic.is_some() {
        return TsrValue { value: 0.0, capped: false, degenerate: true };
    }
    if m > j_max {
        return TsrValue { value: 0.0, capped: false, degenerate: false };
    }
    let (times, capped) = sign_agreement_times(map, n, j_max);
    tsr_from_times(&times, m, capped)
}

pub fn tsr_from_times(times: &[usize], m: usize, capped: bool) -> TsrValue {
    let n = times.len().max(1);
    let sum: usize = times.iter().filter(|&&r| r >= m).sum();
    TsrValue { value: sum as f64 / n as f64, capped, degenerate: false }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionConstants {
    pub sigma: f64,
    pub c_delta: f64,
    pub c1: f64,
    pub rho: f64,
    pub outside_records: usize,
    pub entry_records: usize,
}

/// Lower-envelope fit `L_i >= log c + i log σ` for records `(i, L_i)`.
///
/// The line is anchored at the envelope point with the smallest `i`; its slope is
/// the largest one keeping every other envelope point above it.
pub fn fit_lower_envelope(records: &[(usize, f64)]) -> Result<(f64, f64)> {
    if records.is_empty() {
        return Err(Error::Insufficient("no qualifying orbit samples".into()));
    }
    let top = records.iter().map(|r| r.0).max().unwrap();
    let mut env = vec![f64::INFINITY; top + 1];
    for &(i, l) in records {
        env[i] = env[i].min(l);
    }
    let pts: Vec<(usize, f64)> = env.iter().enumerate().filter(|(_, v)| v.is_finite()).map(|(i, &v)| (i, v)).collect();
    let (i0, l0) = pts[0];
    if pts.len() == 1 {
        return Ok((1.0, l0.exp()));
    }
    let slope = pts[1..].iter().map(|&(i, l)| (l - l0) / (i - i0) as f64).fold(f64::INFINITY, f64::min);
    Ok((slope.exp(), (l0 - slope * i0 as f64).exp()))
}

pub fn expansion_constants(map: &UnimodalMap, delta: f64, n_samples: usize, horizon: usize) -> Result<ExpansionConstants> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::OutOfRange(format!("delta = {delta} must lie in (0, 1)")));
    }
    let mut outside = Vec::new();
    let mut entry = Vec::new();
    for s in 0..n_samples.max(1) {
        let mut x = -1.0 + 2.0 * (s as f64 + 0.5) / n_samples.max(1) as f64;
        let mut l = 0.0;
        for i in 0..horizon {
            if x.abs() < delta {
                if i >= 1 {
                    entry.push((i, l));
                }
                break;
            }
            l += map.d1(x).abs().ln();
            outside.push((i + 1, l));
            x = map.eval(x);
        }
    }
    let (sigma, c_delta) = fit_lower_envelope(&outside)?;
    let (rho, c1) = fit_lower_envelope(&entry).unwrap_or((f64::NAN, f64::NAN));
    Ok(ExpansionConstants { sigma, c_delta, c1, rho, outside_records: outside.len(), entry_records: entry.len() })
}

pub fn lyapunov(map: &dyn IntervalMap, x: f64, n: usize) -> f64 {
    let mut x = x;
    let mut acc = 0.0;
    for _ in 0..n {
        if x == 0.0 {
            x = 1e-15;
        }
        acc += map.d1(x).abs().ln();
        x = map.f(x);
    }
    acc / n.max(1) as f64
}

/// `max_{1 <= m <= n} |(f^m)'(x)|^{1/m}`.
pub fn max_root_growth(map: &dyn IntervalMap, x: f64, n: usize) -> f64 {
    let mut x = x;
    let mut acc = 0.0;
    let mut best = f64::NEG_INFINITY;
    for m in 1..=n {
        if x == 0.0 {
            x = 1e-15;
        }
        acc += map.d1(x).abs().ln();
        best = best.max(acc / m as f64);
        x = map.f(x);
    }
    best.exp()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub a: f64,
    pub horizon: usize,
    pub lambda_c: f64,
    pub ce_holds: bool,
    pub h0: usize,
    pub gamma: f64,
    pub bec_flags: [bool; 3],
    pub preperiodic: Option<(usize, usize)>,
    /// `(m, n, value)` triples.
    pub tsr_table: Vec<(usize, usize, f64)>,
    pub tsr_capped: bool,
    pub expansion: Option<ExpansionConstants>,
    /// `(x, Λ(x))` probes.
    pub lyapunov: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub horizon: usize,
    pub h0: Option<usize>,
    pub tsr_m: Vec<usize>,
    pub tsr_n: Vec<usize>,
    pub j_max: usize,
    pub delta: f64,
    pub n_samples: usize,
    pub lyapunov_points: Vec<f64>,
    pub lyapunov_n: usize,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        AnalyzeOptions {
            horizon: 2000,
            h0: None,
            tsr_m: vec![5, 10, 20, 40],
            tsr_n: vec![1000, 10_000],
            j_max: 1000,
            delta: 0.1,
            n_samples: 4000,
            lyapunov_points: vec![0.3, 0.61, -0.77],
            lyapunov_n: 100_000,
        }
    }
}

pub fn analyze_map(map: &UnimodalMap, opts: &AnalyzeOptions) -> Result<HyperbolicityReport> {
    let orbit = critical_orbit(map, opts.horizon);
    let h0 = opts.h0.unwrap_or_else(|| default_h0(&orbit));
    let ce = estimate_ce(&orbit, h0)?;
    let bec = estimate_bec(&orbit, h0, ce.lambda_c)?;
    let mut tsr_table = Vec::new();
    let mut tsr_capped = false;
    if orbit.preperiodic.is_none() {
        for &n in &opts.tsr_n {
            let (times, capped) = sign_agreement_times(map, n, opts.j_max);
            tsr_capped |= capped;
            for &m in &opts.tsr_m {
                tsr_table.push((m, n, tsr_from_times(&times, m, capped).value));
            }
        }
    }
    let expansion = expansion_constants(map, opts.delta, opts.n_samples, 200).ok();
    let lyap = opts.lyapunov_points.iter().map(|&x| (x, lyapunov(map, x, opts.lyapunov_n))).collect();
    Ok(HyperbolicityReport {
        a: map.a(),
        horizon: opts.horizon,
        lambda_c: ce.lambda_c,
        ce_holds: ce.holds,
        h0,
        gamma: bec.gamma,
        bec_flags: bec.flags,
        preperiodic: orbit.preperiodic,
        tsr_table,
        tsr_capped,
        expansion,
        lyapunov: lyap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unimodal::make_quadratic;
    use proptest::prelude::*;

    #[test]
    fn ulam_orbit_is_preperiodic() {
        let o = critical_orbit(&make_quadratic(2.0).unwrap(), 5);
        assert_eq!(&o.c[1..], &[1.0, -1.0, -1.0, -1.0, -1.0]);
        assert_eq!(o.preperiodic, Some((2, 3)));
        for k in 1..=5 {
            assert!((o.log_d[k] - k as f64 * 4f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn orbit_recomputes() {
        let m = make_quadratic(1.9).unwrap();
        let o = critical_orbit(&m, 200);
        for k in 0..200 {
            assert!((o.c[k + 1] - m.eval(o.c[k])).abs() < 1e-12);
            assert_eq!(o.log_d[k + 1], o.log_d[k] + m.d1(o.c[k + 1]).abs().ln());
            assert_eq!(o.dist[k], o.c[k].abs());
        }
        assert_eq!(o.c[1], m.eval(0.0));
    }

    #[test]
    fn ulam_ce_and_bec() {
        let o = critical_orbit(&make_quadratic(2.0).unwrap(), 100);
        let ce = estimate_ce(&o, 1).unwrap();
        assert!((ce.lambda_c - 4.0).abs() < 1e-10);
        assert!(ce.holds);
        let bec = estimate_bec(&o, 1, ce.lambda_c).unwrap();
        assert_eq!(bec.gamma, 0.0);
        assert_eq!(bec.flags, [true, true, true]);
        assert_eq!(default_h0(&o), 1);
    }

    #[test]
    fn attracting_cycle_fails_ce() {
        let o = critical_orbit(&make_quadratic(1.25).unwrap(), 400);
        let ce = estimate_ce(&o, 1).unwrap();
        assert!(ce.lambda_c <= 1.0);
        assert!(!ce.holds);
    }

    #[test]
    fn single_term_minimum() {
        let o = critical_orbit(&make_quadratic(1.9).unwrap(), 7);
        let ce = estimate_ce(&o, 7).unwrap();
        assert!((ce.lambda_c - (o.log_d[7] / 7.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn synthetic_bec() {
        let n = 50;
        let c: Vec<f64> = (0..=n).map(|k| if k == 0 { 0.0 } else { (-0.1 * k as f64).exp() }).collect();
        let o = CriticalOrbit::synthetic(c, (0..=n).map(|k| k as f64).collect());
        let bec = estimate_bec(&o, 1, 1f64.exp()).unwrap();
        assert!((bec.gamma - 0.1).abs() < 1e-12);
    }

    #[test]
    fn a19_constants_golden() {
        let o = critical_orbit(&make_quadratic(1.9).unwrap(), 2000);
        let ce = estimate_ce(&o, 20).unwrap();
        let bec = estimate_bec(&o, 20, ce.lambda_c).unwrap();
        assert!((ce.lambda_c - 1.4686).abs() < 1e-3, "{}", ce.lambda_c);
        assert!((bec.gamma - 0.1207).abs() < 1e-3, "{}", bec.gamma);
        assert!(bec.gamma.is_finite());
        assert!(!bec.flags[0]);
    }

    #[test]
    fn tsr_examples() {
        let m = make_quadratic(1.9).unwrap();
        assert_eq!(tsr_statistic(&m, 300, 1000, 200).value, 0.0);
        let v = tsr_statistic(&m, 20, 10_000, 200);
        assert!(v.value.is_finite() && v.value >= 0.0);
        assert!(v.value < 5.0, "{v:?}");
        let ulam = make_quadratic(2.0).unwrap();
        assert!(tsr_statistic(&ulam, 1, 100, 100).degenerate);
    }

    #[test]
    fn expansion_constants_examples() {
        let ulam = make_quadratic(2.0).unwrap();
        let e = expansion_constants(&ulam, 0.25, 4000, 60).unwrap();
        assert!(e.sigma > 1.0, "{e:?}");
        assert!((e.sigma - 2.00130459245541).abs() < 1e-9, "{e:?}");
        assert!(expansion_constants(&ulam, 1.0, 10, 10).is_err());
        let (s, c) = fit_lower_envelope(&[(1, 0.5f64.ln())]).unwrap();
        assert_eq!(s, 1.0);
        assert!((c - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ulam_lyapunov_at_critical_value() {
        let ulam = make_quadratic(2.0).unwrap();
        for n in [1, 10, 1000] {
            assert!((lyapunov(&ulam, 1.0, n) - 4f64.ln()).abs() < 1e-12);
        }
        // fixed point 1/2 has multiplier -2
        assert!((lyapunov(&ulam, 0.5, 50) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ulam_lyapunov_random_points() {
        use rand::{Rng, SeedableRng};
        let ulam = make_quadratic(2.0).unwrap();
        let mut rng = rand_xoshiro::SplitMix64::seed_from_u64(7);
        let vals: Vec<f64> = (0..100).map(|_| lyapunov(&ulam, rng.gen_range(-1.0..1.0), 100_000)).collect();
        let mean = vals.iter().sum::<f64>() / 100.0;
        let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0).sqrt();
        assert!((vals[0] - 2f64.ln()).abs() < 0.01 + 3.0 * sd);
        assert!((mean - 2f64.ln()).abs() < 3.0 * sd / 10.0, "mean {mean} sd {sd}");
    }

    #[test]
    fn liminf_growth_exceeds_expansion_floor() {
        let ulam = make_quadratic(2.0).unwrap();
        let e = expansion_constants(&ulam, 0.25, 4000, 60).unwrap();
        for &x in &[0.123, -0.456, 0.789] {
            let g = max_root_growth(&ulam, x, 500);
            assert!(g > e.sigma.min(e.rho), "{g} {e:?}");
        }
    }

    proptest! {
        #[test]
        fn tsr_nonincreasing_in_m(m1 in 1usize..30, dm in 0usize..30) {
            let map = make_quadratic(1.9).unwrap();
            let (times, capped) = sign_agreement_times(&map, 2000, 200);
            let a = tsr_from_times(&times, m1, capped).value;
            let b = tsr_from_times(&times, m1 + dm, capped).value;
            prop_assert!(a >= b && b >= 0.0);
        }

        #[test]
        fn gamma_envelope_holds(h0 in 1usize..40) {
            let o = critical_orbit(&make_quadratic(1.9).unwrap(), 600);
            let ce = estimate_ce(&o, h0).unwrap();
            let bec = estimate_bec(&o, h0, ce.lambda_c).unwrap();
            for k in h0..=o.n {
                prop_assert!(o.dist[k] >= (-bec.gamma * k as f64).exp() * (1.0 - 1e-12));
                prop_assert!(o.log_d[k] / k as f64 >= ce.lambda_c.ln() - 1e-12);
            }
        }
    }
}
