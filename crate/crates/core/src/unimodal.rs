//! Quadratic S-unimodal maps on [-1, 1] and their one-parameter deformations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{Profile, Smooth};

/// An interval self-map with three derivatives.
pub trait IntervalMap: Send + Sync {
    fn f(&self, x: f64) -> f64;
    fn d1(&self, x: f64) -> f64;
    fn d2(&self, x: f64) -> f64;
    fn d3(&self, x: f64) -> f64;

    fn schwarzian(&self, x: f64) -> f64 {
        let (p, q, r) = (self.d1(x), self.d2(x), self.d3(x));
        r / p - 1.5 * (q / p) * (q / p)
    }
}

/// `f_a(x) = a (1 - x^2) - 1`, critical point 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnimodalMap {
    a: f64,
}

pub const CRITICAL_POINT: f64 = 0.0;

pub fn make_quadratic(a: f64) -> Result<UnimodalMap> {
    if !(a > 1.0 && a <= 2.0) {
        return Err(Error::OutOfRange(format!("family parameter a = {a} must lie in (1, 2]")));
    }
    Ok(UnimodalMap { a })
}

impl UnimodalMap {
    pub fn a(&self) -> f64 {
        self.a
    }

    /// Critical value `c_1 = f(0)`.
    pub fn c1(&self) -> f64 {
        self.a - 1.0
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.a * (1.0 - x * x) - 1.0
    }

    /// The two preimages `±sqrt((c_1 - y)/a)`; `None` when `y > c_1`.
    pub fn preimage_radius(&self, y: f64) -> Option<f64> {
        let s = (self.c1() - y) / self.a;
        if s < 0.0 {
            None
        } else {
            Some(s.sqrt())
        }
    }
}

impl IntervalMap for UnimodalMap {
    fn f(&self, x: f64) -> f64 {
        self.eval(x)
    }
    fn d1(&self, x: f64) -> f64 {
        -2.0 * self.a * x
    }
    fn d2(&self, _x: f64) -> f64 {
        -2.0 * self.a
    }
    fn d3(&self, _x: f64) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst sampled margin; sign convention is per check.
    pub margin: f64,
    /// Failure is reported but not treated as fatal.
    pub warning_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.warning_only)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn warnings(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed && c.warning_only).collect()
    }
}

const EXACT_TOL: f64 = 1e-12;

pub fn validate_s_unimodal(map: &dyn IntervalMap, n_samples: usize) -> ValidationReport {
    validate_with(map, n_samples, false)
}

fn validate_with(map: &dyn IntervalMap, n_samples: usize, schwarzian_warning: bool) -> ValidationReport {
    let n = n_samples.max(2);
    let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
    let mut checks = Vec::new();

    let boundary = (map.f(-1.0) + 1.0).abs().max((map.f(1.0) + 1.0).abs());
    checks.push(Check { name: "boundary".into(), passed: boundary <= EXACT_TOL, margin: boundary, warning_only: false });

    let (d1c, d2c) = (map.d1(CRITICAL_POINT), map.d2(CRITICAL_POINT));
    checks.push(Check {
        name: "critical".into(),
        passed: d1c.abs() <= EXACT_TOL && d2c < 0.0,
        margin: d2c,
        warning_only: false,
    });

    let mut mono = f64::INFINITY;
    let mut schw = f64::NEG_INFINITY;
    let mut sym: f64 = 0.0;
    let mut top = f64::NEG_INFINITY;
    for &x in &xs {
        if x < 0.0 {
            mono = mono.min(map.d1(x));
        } else if x > 0.0 {
            mono = mono.min(-map.d1(x));
        }
        if x.abs() > 1e-8 {
            schw = schw.max(map.schwarzian(x));
        }
        sym = sym.max((map.f(x) - map.f(-x)).abs());
        top = top.max(map.f(x));
    }
    checks.push(Check { name: "monotone".into(), passed: mono > 0.0, margin: mono, warning_only: false });
    checks.push(Check { name: "schwarzian".into(), passed: schw < 0.0, margin: schw, warning_only: schwarzian_warning });
    checks.push(Check { name: "symmetry".into(), passed: sym <= EXACT_TOL, margin: sym, warning_only: false });
    checks.push(Check { name: "range".into(), passed: top <= 1.0 + EXACT_TOL, margin: top, warning_only: false });
    ValidationReport { checks }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeformationKind {
    /// `f_t = h_t ∘ f ∘ h_t^{-1}` with `h_t = id + t g`.
    Conjugation { g: Profile },
    /// `f_t = (id + t X) ∘ f`.
    Additive { x: Profile },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationFamily {
    pub base: UnimodalMap,
    pub kind: DeformationKind,
    /// Admitted parameter range `|t| <= t_max`.
    pub t_max: f64,
}

pub fn make_family(base: UnimodalMap, kind: DeformationKind, t_max: f64) -> Result<DeformationFamily> {
    if !(t_max >= 0.0) {
        return Err(Error::OutOfRange("t_max must be non-negative".into()));
    }
    match &kind {
        DeformationKind::Conjugation { g } => {
            for &p in &[-1.0, 0.0, 1.0] {
                if g.value(p).abs() > 1e-14 {
                    return Err(Error::Boundary(format!("conjugation profile g({p}) = {} must vanish", g.value(p))));
                }
            }
            let n = 4001;
            for i in 0..n {
                let x = -1.0 + 2.0 * i as f64 / (n - 1) as f64;
                let gp = g.deriv(x);
                if 1.0 - t_max * gp.abs() <= 0.0 {
                    return Err(Error::NotMonotone(format!("h_t'({x}) vanishes for |t| <= {t_max}")));
                }
            }
        }
        DeformationKind::Additive { x } => {
            if x.value(-1.0).abs() > 1e-14 {
                return Err(Error::Boundary(format!("additive profile X(-1) = {} must vanish", x.value(-1.0))));
            }
            let top = base.c1() + t_max * x.value(base.c1()).abs();
            if top > 1.0 + 1e-12 {
                return Err(Error::Boundary(format!("f_t(0) = {top} leaves [-1, 1] within |t| <= {t_max}")));
            }
        }
    }
    Ok(DeformationFamily { base, kind, t_max })
}

impl DeformationFamily {
    pub fn payload(&self) -> &Profile {
        match &self.kind {
            DeformationKind::Conjugation { g } => g,
            DeformationKind::Additive { x } => x,
        }
    }

    pub fn is_additive(&self) -> bool {
        matches!(self.kind, DeformationKind::Additive { .. })
    }

    /// `h_t(x) = x + t g(x)`; identity for additive families.
    pub fn h(&self, t: f64, x: f64) -> f64 {
        match &self.kind {
            DeformationKind::Conjugation { g } => x + t * g.value(x),
            DeformationKind::Additive { .. } => x,
        }
    }

    /// Inverse of `h_t` by safeguarded Newton on the bracket [-1, 1].
    pub fn h_inv(&self, t: f64, x: f64) -> f64 {
        let g = match &self.kind {
            DeformationKind::Conjugation { g } => g,
            DeformationKind::Additive { .. } => return x,
        };
        if t == 0.0 {
            return x;
        }
        let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
        let mut y = (x - t * g.value(x)).clamp(-1.0, 1.0);
        for _ in 0..100 {
            let r = y + t * g.value(y) - x;
            if r == 0.0 {
                return y;
            }
            if r > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let step = r / (1.0 + t * g.deriv(y));
            let mut next = y - step;
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - y).abs() <= 1e-16 * (1.0 + y.abs()) || hi - lo <= 1e-15 {
                return next;
            }
            y = next;
        }
        y
    }

    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match &self.kind {
            DeformationKind::Conjugation { .. } => {
                let y = self.h_inv(t, x);
                self.h(t, self.base.eval(y))
            }
            DeformationKind::Additive { x: xp } => {
                let y = self.base.eval(x);
                y + t * xp.value(y)
            }
        }
    }

    /// `v_s(x) = ∂_t f_t(x)` at `t = s`, closed form for both kinds.
    pub fn velocity(&self, s: f64, x: f64) -> f64 {
        match &self.kind {
            DeformationKind::Conjugation { g } => {
                let y = self.h_inv(s, x);
                let fy = self.base.eval(y);
                let hp = |z: f64| 1.0 + s * g.deriv(z);
                g.value(fy) - hp(fy) * self.base.d1(y) * g.value(y) / hp(y)
            }
            DeformationKind::Additive { x: xp } => xp.value(self.base.eval(x)),
        }
    }

    pub fn member(&self, t: f64) -> FamilyMember {
        FamilyMember { family: self.clone(), t }
    }

    /// Validation of `f_{±t_max}`; negative Schwarzian failures are warnings.
    pub fn validate_members(&self, n_samples: usize) -> Vec<(f64, ValidationReport)> {
        [-self.t_max, self.t_max]
            .iter()
            .map(|&t| (t, validate_with(&self.member(t), n_samples, true)))
            .collect()
    }
}

pub fn family_velocity(family: &DeformationFamily, s: f64, x: f64) -> f64 {
    family.velocity(s, x)
}

/// The map `f_t` for a fixed parameter.
#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub family: DeformationFamily,
    pub t: f64,
}

impl FamilyMember {
    /// Derivatives 1..3 of `f_t` at `x` by Faà di Bruno.
    fn jet(&self, x: f64) -> (f64, f64, f64) {
        let t = self.t;
        let f = &self.family.base;
        match &self.family.kind {
            DeformationKind::Additive { x: xp } => {
                let y = f.eval(x);
                let (p1, p2, p3) = (f.d1(x), f.d2(x), f.d3(x));
                let (q1, q2, q3) = (xp.derivative(1, y), xp.derivative(2, y), xp.derivative(3, y));
                let d1 = p1 * (1.0 + t * q1);
                let d2 = p2 * (1.0 + t * q1) + t * q2 * p1 * p1;
                let d3 = p3 * (1.0 + t * q1) + 3.0 * t * q2 * p1 * p2 + t * q3 * p1 * p1 * p1;
                (d1, d2, d3)
            }
            DeformationKind::Conjugation { g } => {
                let y = self.family.h_inv(t, x);
                let (h1, h2, h3) = (1.0 + t * g.derivative(1, y), t * g.derivative(2, y), t * g.derivative(3, y));
                let u1 = 1.0 / h1;
                let u2 = -h2 * u1.powi(3);
                let u3 = -h3 * u1.powi(4) + 3.0 * h2 * h2 * u1.powi(5);
                let (f1, f2, f3) = (f.d1(y), f.d2(y), f.d3(y));
                let g1 = f1 * u1;
                let g2 = f2 * u1 * u1 + f1 * u2;
                let g3 = f3 * u1.powi(3) + 3.0 * f2 * u1 * u2 + f1 * u3;
                let z = f.eval(y);
                let (k1, k2, k3) = (1.0 + t * g.derivative(1, z), t * g.derivative(2, z), t * g.derivative(3, z));
                (k1 * g1, k2 * g1 * g1 + k1 * g2, k3 * g1.powi(3) + 3.0 * k2 * g1 * g2 + k1 * g3)
            }
        }
    }
}

impl IntervalMap for FamilyMember {
    fn f(&self, x: f64) -> f64 {
        self.family.eval(self.t, x)
    }
    fn d1(&self, x: f64) -> f64 {
        self.jet(x).0
    }
    fn d2(&self, x: f64) -> f64 {
        self.jet(x).1
    }
    fn d3(&self, x: f64) -> f64 {
        self.jet(x).2
    }
}

/// The additive payload `X` whose velocity `X ∘ f` equals the conjugation velocity
/// `g ∘ f - f' g` at `t = 0`. Requires an odd polynomial `g`.
pub fn additive_twin(base: &UnimodalMap, g: &Profile) -> Result<Profile> {
    let coeffs = match g {
        Profile::Poly { coeffs } => coeffs.clone(),
        Profile::Zero => return Ok(Profile::Zero),
        _ => return Err(Error::Degenerate("additive twin needs a polynomial profile".into())),
    };
    if coeffs.iter().step_by(2).any(|&c| c != 0.0) {
        return Err(Error::Degenerate("additive twin needs an odd polynomial".into()));
    }
    // -f'(x) g(x) = 2a x g(x) = 2a Σ b_m x^{m+1}; with x^2 = u = (c1 - y)/a this is a polynomial in y.
    let a = base.a();
    let c1 = base.c1();
    let mut out = vec![0.0; coeffs.len() + 1];
    for (i, &b) in coeffs.iter().enumerate() {
        out[i] += b;
    }
    // u = (c1 - y)/a as a polynomial in y
    let u = [c1 / a, -1.0 / a];
    for (m, &b) in coeffs.iter().enumerate() {
        if b == 0.0 {
            continue;
        }
        let power = m.div_ceil(2);
        let mut poly = vec![1.0];
        for _ in 0..power {
            let mut next = vec![0.0; poly.len() + 1];
            for (i, &p) in poly.iter().enumerate() {
                next[i] += p * u[0];
                next[i + 1] += p * u[1];
            }
            poly = next;
        }
        for (i, &p) in poly.iter().enumerate() {
            if i >= out.len() {
                out.resize(i + 1, 0.0);
            }
            out[i] += 2.0 * a * b * p;
        }
    }
    Ok(Profile::Poly { coeffs: out })
}
