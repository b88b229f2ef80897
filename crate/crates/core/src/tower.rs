//! Tower over a unimodal map: levels `B_k`, the tower map, fall intervals and
//! bound/free itineraries.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recurrence::{estimate_bec, estimate_ce, CriticalOrbit};
use crate::unimodal::UnimodalMap;

/// Which admissible interval is used for the levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LevelChoice {
    /// Radius `e^{-β₂ k}`.
    #[default]
    Inner,
    /// Radius `e^{-β₁ k}`.
    Outer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerParams {
    pub delta: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
    pub h0: usize,
    pub m_max: usize,
    #[serde(default)]
    pub levels: LevelChoice,
}

impl TowerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::OutOfRange(format!("delta = {} must lie in (0, 1)", self.delta)));
        }
        if !(self.beta1 > 0.0 && self.beta1 < self.beta2) {
            return Err(Error::OutOfRange(format!("need 0 < beta1 < beta2, got {} and {}", self.beta1, self.beta2)));
        }
        if self.gamma > 0.0 && !(1.5 * self.gamma < self.beta1 && self.beta2 < 2.0 * self.gamma) {
            return Err(Error::OutOfRange(format!(
                "need 1.5 gamma < beta1 < beta2 < 2 gamma with gamma = {}",
                self.gamma
            )));
        }
        if self.m_max < 2 {
            return Err(Error::OutOfRange("m_max must be at least 2".into()));
        }
        Ok(())
    }

    pub fn beta(&self) -> f64 {
        match self.levels {
            LevelChoice::Inner => self.beta2,
            LevelChoice::Outer => self.beta1,
        }
    }
}

/// Infinity-aware time index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Time {
    At(usize),
    Infinity,
}

impl Time {
    pub fn finite(self) -> Option<usize> {
        match self {
            Time::At(t) => Some(t),
            Time::Infinity => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItinerarySchedule {
    pub t: Vec<Time>,
    pub s: Vec<Time>,
    pub horizon: usize,
    /// Set when a bound period exceeds the constructed levels.
    pub unresolved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FallPair {
    pub j: usize,
    pub plus: Option<(f64, f64)>,
    pub minus: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tower {
    pub params: TowerParams,
    pub map: UnimodalMap,
    pub h_delta: usize,
    /// `c[k]` for `0 <= k <= m_max + 1`.
    pub c: Vec<f64>,
    /// `b[k] = (a_k, b_k)`; index 0 is unused.
    pub b: Vec<(f64, f64)>,
    /// `d[m] = sup{x in (0, δ] : depth(x) >= m}` on the positive side, and the
    /// same for `-x` on the negative side; index 0 holds δ.
    pub d_plus: Vec<f64>,
    pub d_minus: Vec<f64>,
}

/// `[c - e^{-βk}, c + e^{-βk}] ∩ [-1, 1]`.
pub fn level_interval(c: f64, k: usize, beta: f64) -> (f64, f64) {
    let r = (-beta * k as f64).exp();
    ((c - r).max(-1.0), (c + r).min(1.0))
}

/// Admissibility of δ: `|f^j(x) - c_j| < min(|c_j| e^{-γj}, e^{-β₂j})` for `1 <= j <= h0`, `|x| <= δ`.
pub fn delta_admissible(map: &UnimodalMap, orbit: &CriticalOrbit, h0: usize, gamma: f64, beta2: f64, delta: f64) -> bool {
    // f^j restricted to [0, δ] stays on one side of 0 while admissible, so the
    // endpoint gives the largest deviation.
    let mut x = delta;
    for j in 1..=h0.min(orbit.n) {
        x = map.eval(x);
        let bound = (orbit.dist[j] * (-gamma * j as f64).exp()).min((-beta2 * j as f64).exp());
        if (x - orbit.c[j]).abs() >= bound {
            return false;
        }
    }
    true
}

/// Largest admissible δ in `(0, 1)`, by bisection.
pub fn choose_delta(map: &UnimodalMap, orbit: &CriticalOrbit, h0: usize, gamma: f64, beta2: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, 1.0);
    if !delta_admissible(map, orbit, h0, gamma, beta2, 1e-12) {
        return Err(Error::Tower("no admissible delta".into()));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if delta_admissible(map, orbit, h0, gamma, beta2, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Parameters derived from the orbit: `γ` from the recurrence envelope over
/// `k >= h0`, `β₁ = 1.6γ`, `β₂ = 1.9γ`, and the largest admissible δ.
pub fn auto_params(map: &UnimodalMap, orbit: &CriticalOrbit, h0: usize, m_max: usize, levels: LevelChoice) -> Result<TowerParams> {
    let ce = estimate_ce(orbit, h0)?;
    let gamma = estimate_bec(orbit, h0, ce.lambda_c)?.gamma;
    if gamma <= 0.0 {
        return Err(Error::Tower("recurrence rate is zero; supply beta1, beta2 and delta explicitly".into()));
    }
    let (beta1, beta2) = (1.6 * gamma, 1.9 * gamma);
    let delta = choose_delta(map, orbit, h0, gamma, beta2)?;
    Ok(TowerParams { delta, beta1, beta2, gamma, h0, m_max, levels })
}

const BISECT_STEPS: usize = 60;

pub fn build_tower(map: &UnimodalMap, orbit: &CriticalOrbit, params: TowerParams) -> Result<Tower> {
    params.validate()?;
    if orbit.n < params.m_max + 1 {
        return Err(Error::Tower(format!("orbit horizon {} below m_max + 1 = {}", orbit.n, params.m_max + 1)));
    }
    let beta = params.beta();
    let c = orbit.c[..=params.m_max + 1].to_vec();
    let mut b = vec![(0.0, 0.0)];
    for k in 1..=params.m_max {
        let iv = level_interval(c[k], k, beta);
        if k >= params.h0 && iv.0 <= 0.0 && iv.1 >= 0.0 {
            return Err(Error::Tower(format!("critical point lies in B_{k}")));
        }
        b.push(iv);
    }
    for x in [params.delta, -params.delta] {
        let y = map.eval(x);
        if y < b[1].0 || y > b[1].1 {
            return Err(Error::Tower("f([-δ, δ]) is not contained in B_1".into()));
        }
    }
    let mut tower =
        Tower { params, map: *map, h_delta: 0, c, b, d_plus: Vec::new(), d_minus: Vec::new() };
    tower.h_delta = tower.scan_h_delta();
    let need = tower.params.h0.max(2);
    if tower.h_delta < need {
        return Err(Error::Tower(format!("delta too large: H(delta) = {} < {need}", tower.h_delta)));
    }
    tower.d_plus = tower.depth_thresholds(1.0);
    tower.d_minus = tower.depth_thresholds(-1.0);
    Ok(tower)
}

impl Tower {
    pub fn m_max(&self) -> usize {
        self.params.m_max
    }

    pub fn delta(&self) -> f64 {
        self.params.delta
    }

    /// `x ∈ B_k`, also requiring the sign of `c_k`.
    pub fn in_level(&self, x: f64, k: usize) -> bool {
        let (lo, hi) = self.b[k];
        x >= lo && x <= hi && (x * self.c[k] > 0.0 || self.c[k] == 0.0)
    }

    /// Highest level reached by `(x, 0)` before falling, capped at `m_max`.
    /// Requires `|x| <= δ`.
    pub fn depth(&self, x: f64) -> usize {
        let mut y = self.map.eval(x);
        let mut level = 1;
        while level < self.params.m_max {
            let z = self.map.eval(y);
            if self.in_level(z, level + 1) {
                y = z;
                level += 1;
            } else {
                break;
            }
        }
        level
    }

    fn scan_h_delta(&self) -> usize {
        let delta = self.params.delta;
        let n = 4096;
        let mut h = usize::MAX;
        for i in 1..=n {
            let x = delta * (i as f64 / n as f64) * (1.0 - 1e-12);
            h = h.min(self.depth(x)).min(self.depth(-x));
        }
        h
    }

    fn depth_thresholds(&self, side: f64) -> Vec<f64> {
        let delta = self.params.delta;
        let mut d = vec![delta; self.params.m_max + 1];
        for (m, dm) in d.iter_mut().enumerate().skip(1) {
            if self.depth(side * delta) >= m {
                continue;
            }
            let (mut lo, mut hi) = (0.0, delta);
            for _ in 0..BISECT_STEPS {
                let mid = 0.5 * (lo + hi);
                if self.depth(side * mid) >= m {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            *dm = lo;
        }
        d
    }

    /// One move of the tower map.
    pub fn step(&self, x: f64, k: usize) -> Result<(f64, usize)> {
        if k == 0 {
            if !(-1.0..=1.0).contains(&x) {
                return Err(Error::Domain(format!("x = {x} outside [-1, 1]")));
            }
            let y = self.map.eval(x);
            return Ok((y, if x.abs() <= self.params.delta { 1 } else { 0 }));
        }
        if k > self.params.m_max || !self.in_level(x, k) {
            return Err(Error::Domain(format!("x = {x} not in B_{k}")));
        }
        if k == self.params.m_max {
            return Err(Error::Tower(format!("no level above {k}")));
        }
        let y = self.map.eval(x);
        Ok((y, if self.in_level(y, k + 1) { k + 1 } else { 0 }))
    }

    pub fn fall_intervals(&self, j: usize) -> Result<FallPair> {
        if j < self.h_delta || j > self.params.m_max {
            return Err(Error::OutOfRange(format!("j = {j} outside {}..={}", self.h_delta, self.params.m_max)));
        }
        let side = |d: &[f64], sign: f64| {
            let (inner, outer) = (d[j], d[j - 1]);
            (outer > inner).then(|| if sign > 0.0 { (inner, outer) } else { (-outer, -inner) })
        };
        Ok(FallPair { j, plus: side(&self.d_plus, 1.0), minus: side(&self.d_minus, -1.0) })
    }

    pub fn all_fall_intervals(&self) -> Vec<FallPair> {
        (self.h_delta..=self.params.m_max).filter_map(|j| self.fall_intervals(j).ok()).collect()
    }

    pub fn bound_free_times(&self, x: f64, horizon: usize) -> Result<ItinerarySchedule> {
        if horizon == 0 {
            return Err(Error::OutOfRange("horizon must be positive".into()));
        }
        let delta = self.params.delta;
        let mut orbit = Vec::with_capacity(horizon + 1);
        let mut y = x;
        for _ in 0..=horizon {
            orbit.push(y);
            y = self.map.eval(y);
        }
        let mut sched = ItinerarySchedule { t: Vec::new(), s: Vec::new(), horizon, unresolved: false };
        let mut start = 0;
        while start <= horizon {
            let Some(t) = (start..=horizon).find(|&j| orbit[j].abs() <= delta) else {
                sched.t.push(Time::Infinity);
                sched.s.push(Time::Infinity);
                break;
            };
            sched.t.push(Time::At(t));
            if orbit[t].abs() < 1e-14 {
                sched.s.push(Time::Infinity);
                break;
            }
            let depth = self.depth(orbit[t]);
            if depth >= self.params.m_max {
                sched.unresolved = true;
                sched.t.pop();
                break;
            }
            let s = t + depth + 1;
            sched.s.push(Time::At(s));
            start = s;
        }
        Ok(sched)
    }

    /// Levels visited by the tower-map trajectory of `(x, 0)` for `0..=n` steps.
    pub fn trajectory_levels(&self, x: f64, n: usize) -> Result<Vec<usize>> {
        let mut state = (x, 0);
        let mut levels = vec![0];
        for _ in 0..n {
            state = self.step(state.0, state.1)?;
            levels.push(state.1);
        }
        Ok(levels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyEstimate {
    /// `(j, truncated sum, C_j)`.
    pub rows: Vec<(usize, f64, f64)>,
    pub max_c: f64,
}

pub fn key_estimate_check(orbit: &CriticalOrbit, gamma: f64, j_max: usize, tail: usize) -> Result<KeyEstimate> {
    if orbit.n < j_max + tail {
        return Err(Error::Insufficient(format!("orbit horizon {} below J + tail = {}", orbit.n, j_max + tail)));
    }
    let rows: Vec<_> = (0..=j_max)
        .map(|j| {
            let sum: f64 = (1..=tail).map(|m| (orbit.log_d[j] - orbit.log_d[j + m]).exp()).sum();
            (j, sum, sum * (-gamma * j as f64).exp())
        })
        .collect();
    let max_c = rows.iter().map(|r| r.2).fold(0.0, f64::max);
    Ok(KeyEstimate { rows, max_c })
}
