//! Flat `key = value` run configuration with a fail-fast validation pass.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profile::Profile;
use crate::recurrence::{critical_orbit, estimate_ce};
use crate::response::{FdOptions, ResolventOptions};
use crate::tower::{LevelChoice, TowerParams};
use crate::unimodal::{make_family, make_quadratic, DeformationFamily, DeformationKind, UnimodalMap};

/// Overrides `output.dir` when set.
pub const OUTPUT_DIR_ENV: &str = "UNITOWER_OUTPUT_DIR";

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("{key}: {rule}")]
pub struct ConfigError {
    pub key: String,
    pub rule: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    None,
    Additive,
    Conjugation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    pub profile: Profile,
    /// Additive fields are corrected to zero horizontality defect with `corrector`.
    pub horizontalize: bool,
    pub corrector: Profile,
    pub t_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TowerSpec {
    pub h0: usize,
    pub levels: LevelChoice,
    pub horizon: usize,
    pub delta: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatorSpec {
    pub lambda: Option<f64>,
    pub m: usize,
    pub grid0: usize,
    pub quad_order: usize,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub a: f64,
    pub family: FamilySpec,
    pub tower: TowerSpec,
    pub operator: OperatorSpec,
    pub resolvent: ResolventOptions,
    pub observable: Profile,
    pub fd: FdOptions,
    pub response_fd: bool,
    pub alpha_points: Vec<f64>,
    pub alpha_horizon: usize,
    pub density_points: usize,
    pub susceptibility_z: Vec<f64>,
    pub susceptibility_n: usize,
    pub oracle_bins: usize,
    pub oracle_samples: usize,
    pub validate_criteria: Vec<u8>,
    pub output_dir: PathBuf,
    /// Keys that took their default value.
    pub defaulted: Vec<String>,
}

impl RunConfig {
    pub fn map(&self) -> UnimodalMap {
        make_quadratic(self.a).expect("validated")
    }

    /// The configured family; additive fields are horizontalized when requested.
    pub fn family(&self) -> crate::Result<Option<DeformationFamily>> {
        let map = self.map();
        let f = &self.family;
        let kind = match f.kind {
            FamilyKind::None => return Ok(None),
            FamilyKind::Conjugation => DeformationKind::Conjugation { g: f.profile.clone() },
            FamilyKind::Additive if f.horizontalize && !f.profile.is_zero() => {
                DeformationKind::Additive { x: crate::tce::horizontalize(&map, &f.profile, &f.corrector, 400)?.x }
            }
            FamilyKind::Additive => DeformationKind::Additive { x: f.profile.clone() },
        };
        make_family(map, kind, f.t_max).map(Some)
    }

    /// Explicit tower parameters, or `None` when they are derived from the orbit.
    pub fn explicit_tower_params(&self) -> Option<TowerParams> {
        let t = &self.tower;
        let m_max = self.operator.m + 2;
        match (t.delta, t.beta1, t.beta2) {
            (Some(delta), Some(beta1), Some(beta2)) => Some(TowerParams {
                delta,
                beta1,
                beta2,
                gamma: t.gamma.unwrap_or(0.0),
                h0: t.h0,
                m_max,
                levels: t.levels,
            }),
            _ if self.a == 2.0 => Some(TowerParams { levels: t.levels, ..crate::presets::ulam_params(m_max) }),
            _ => None,
        }
    }
}

struct Reader {
    entries: BTreeMap<String, (usize, String)>,
    errors: Vec<ConfigError>,
    defaulted: Vec<String>,
}

impl Reader {
    fn fail(&mut self, key: &str, rule: impl Into<String>) {
        self.errors.push(ConfigError { key: key.into(), rule: rule.into() });
    }

    fn raw(&mut self, key: &str) -> Option<String> {
        match self.entries.remove(key) {
            Some((_, v)) => Some(v),
            None => {
                self.defaulted.push(key.into());
                None
            }
        }
    }

    fn parsed<T: FromStr>(&mut self, key: &str, what: &str) -> Option<T> {
        let v = self.raw(key)?;
        match v.parse::<T>() {
            Ok(x) => Some(x),
            Err(_) => {
                self.fail(key, format!("expected {what}, found `{v}`"));
                None
            }
        }
    }

    fn get<T: FromStr>(&mut self, key: &str, what: &str, default: T) -> T {
        self.parsed(key, what).unwrap_or(default)
    }

    fn list<T: FromStr>(&mut self, key: &str, what: &str, default: Vec<T>) -> Vec<T> {
        let Some(v) = self.raw(key) else { return default };
        let items: Result<Vec<T>, _> = v.split(',').map(|s| s.trim().parse::<T>()).collect();
        items.unwrap_or_else(|_| {
            self.fail(key, format!("expected a comma separated list of {what}, found `{v}`"));
            default
        })
    }

    fn profile(&mut self, key: &str, default: Profile) -> Profile {
        let Some(v) = self.raw(key) else { return default };
        Profile::parse(&v).unwrap_or_else(|_| {
            self.fail(key, format!("unknown profile `{v}`"));
            default
        })
    }

    fn check(&mut self, key: &str, ok: bool, rule: impl Into<String>) {
        if !ok {
            self.fail(key, rule);
        }
    }
}

fn split_lines(text: &str) -> (BTreeMap<String, (usize, String)>, Vec<ConfigError>) {
    let mut entries = BTreeMap::new();
    let mut errors = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            errors.push(ConfigError { key: format!("line {}", i + 1), rule: "expected `key = value`".into() });
            continue;
        };
        let key = k.trim().to_string();
        if entries.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
            errors.push(ConfigError { key, rule: format!("repeated on line {}", i + 1) });
        }
    }
    (entries, errors)
}

/// Parses and validates; on failure returns every problem found.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<ConfigError>> {
    let (entries, errors) = split_lines(text);
    let mut r = Reader { entries, errors, defaulted: Vec::new() };

    let a: f64 = r.get("family.a", "a real number", 1.9);
    let kind = match r.raw("family.kind").as_deref() {
        None | Some("none") => FamilyKind::None,
        Some("additive") => FamilyKind::Additive,
        Some("conjugation") => FamilyKind::Conjugation,
        Some(other) => {
            r.fail("family.kind", format!("expected none, additive or conjugation, found `{other}`"));
            FamilyKind::None
        }
    };
    let default_profile = if kind == FamilyKind::Conjugation { Profile::cubic_odd() } else { Profile::poly(&[0.0, 0.0, 1.0, 1.0]) };
    let family = FamilySpec {
        kind,
        profile: r.profile("family.profile", default_profile),
        horizontalize: r.get("family.horizontalize", "true or false", true),
        corrector: r.profile("family.corrector", Profile::poly(&[1.0, 1.0])),
        t_max: r.get("family.t_max", "a real number", 0.01),
    };
    let levels = match r.raw("tower.levels").as_deref() {
        None | Some("outer") => LevelChoice::Outer,
        Some("inner") => LevelChoice::Inner,
        Some(other) => {
            r.fail("tower.levels", format!("expected inner or outer, found `{other}`"));
            LevelChoice::Outer
        }
    };
    let tower = TowerSpec {
        h0: r.get("tower.h0", "a positive integer", if a == 2.0 { 1 } else { 12 }),
        levels,
        horizon: r.get("tower.horizon", "a positive integer", 2000),
        delta: r.parsed("tower.delta", "a real number"),
        beta1: r.parsed("tower.beta1", "a real number"),
        beta2: r.parsed("tower.beta2", "a real number"),
        gamma: r.parsed("tower.gamma", "a real number"),
    };
    let operator = OperatorSpec {
        lambda: r.parsed("operator.lambda", "a real number"),
        m: r.get("operator.m", "a positive integer", 15),
        grid0: r.get("operator.grid0", "a positive integer", 4096),
        quad_order: r.get("operator.quad_order", "a positive integer", 5),
        tol: r.get("operator.tol", "a real number", 1e-12),
        max_iter: r.get("operator.max_iter", "a positive integer", 5000),
    };
    let resolvent = ResolventOptions {
        tol: r.get("resolvent.tol", "a real number", 1e-10),
        n_max: r.get("resolvent.n_max", "a positive integer", 5000),
    };
    let observable = r.profile("observable", Profile::poly(&[0.0, 0.0, 1.0]));
    let fd = FdOptions {
        t_step: r.get("fd.t_step", "a real number", 0.01),
        n_orbits: r.get("fd.orbits", "a positive integer", 64),
        n_iter: r.get("fd.iter", "a positive integer", 1_000_000),
        burn_in: r.get("fd.burn_in", "a non-negative integer", 1000),
        seed: r.get("seed", "an unsigned integer", 20240917),
    };
    let cfg = RunConfig {
        a,
        family,
        tower,
        operator,
        resolvent,
        observable,
        fd,
        response_fd: r.get("response.fd", "true or false", true),
        alpha_points: r.list("alpha.points", "reals", (0..=20).map(|i| -1.0 + 0.1 * i as f64).collect()),
        alpha_horizon: r.get("alpha.horizon", "a positive integer", 600),
        density_points: r.get("density.points", "a positive integer", 2000),
        susceptibility_z: r.list("susceptibility.z", "reals", vec![0.5, 0.9, 0.99]),
        susceptibility_n: r.get("susceptibility.n", "a positive integer", 60),
        oracle_bins: r.get("oracle.bins", "a positive integer", 2048),
        oracle_samples: r.get("oracle.samples", "a positive integer", 64),
        validate_criteria: r.list("validate.criteria", "criterion numbers", (1..=10).collect()),
        output_dir: PathBuf::from(r.raw("output.dir").unwrap_or_else(|| "out".into())),
        defaulted: Vec::new(),
    };
    let unknown: Vec<String> = r.entries.keys().cloned().collect();
    for key in unknown {
        r.fail(&key, "unknown key");
    }
    validate(&cfg, &mut r);
    if r.errors.is_empty() {
        Ok(RunConfig { defaulted: r.defaulted, ..cfg })
    } else {
        Err(r.errors)
    }
}

fn validate(c: &RunConfig, r: &mut Reader) {
    let map = make_quadratic(c.a).ok();
    r.check("family.a", map.is_some(), format!("a = {} must lie in (1, 2]", c.a));
    r.check("family.t_max", c.family.t_max > 0.0 && c.family.t_max <= 0.5, "must lie in (0, 0.5]");
    if c.family.kind != FamilyKind::None {
        r.check("fd.t_step", c.fd.t_step > 0.0 && c.fd.t_step <= c.family.t_max, "must lie in (0, family.t_max]");
    }
    r.check("fd.orbits", c.fd.n_orbits >= 2, "need at least 2 orbits");
    r.check("fd.iter", c.fd.n_iter >= 1, "must be positive");
    r.check("tower.h0", c.tower.h0 >= 1, "must be positive");
    r.check("tower.horizon", c.tower.horizon >= c.operator.m + 10 && c.tower.horizon >= c.tower.h0 + 2, "must exceed operator.m + 10 and tower.h0 + 2");
    r.check("operator.m", c.operator.m >= 1 && c.operator.m <= 200, "must lie in [1, 200]");
    let g = c.operator.grid0;
    r.check("operator.grid0", g.is_power_of_two() && (256..=1 << 22).contains(&g), "must be a power of two in [256, 4194304]");
    r.check("operator.quad_order", (2..=16).contains(&c.operator.quad_order), "must lie in [2, 16]");
    r.check("operator.tol", c.operator.tol > 0.0 && c.operator.tol < 1e-3, "must lie in (0, 1e-3)");
    r.check("resolvent.tol", c.resolvent.tol > 0.0 && c.resolvent.tol < 1e-3, "must lie in (0, 1e-3)");
    for z in &c.susceptibility_z {
        r.check("susceptibility.z", z.abs() <= 1.0, format!("|z| = {} exceeds 1", z.abs()));
    }
    r.check("oracle.bins", c.oracle_bins >= 16, "need at least 16 bins");
    r.check("oracle.samples", c.oracle_samples >= 1, "must be positive");
    r.check("density.points", c.density_points >= 2, "need at least 2 points");
    for x in &c.alpha_points {
        r.check("alpha.points", x.abs() <= 1.0, format!("{x} lies outside [-1, 1]"));
    }
    for id in &c.validate_criteria {
        r.check("validate.criteria", (1..=10).contains(id), format!("criterion {id} does not exist"));
    }
    let given = [c.tower.delta, c.tower.beta1, c.tower.beta2].iter().filter(|v| v.is_some()).count();
    r.check("tower.delta", given == 0 || given == 3, "tower.delta, tower.beta1 and tower.beta2 go together");
    let Some(map) = map else { return };
    if let Some(p) = c.explicit_tower_params() {
        if let Err(e) = p.validate() {
            r.fail("tower", e.to_string());
        }
    }
    if let Some(lambda) = c.operator.lambda {
        let orbit = critical_orbit(&map, c.tower.horizon.max(c.tower.h0 + 2));
        match estimate_ce(&orbit, c.tower.h0) {
            Ok(ce) => r.check(
                "operator.lambda",
                lambda > 1.0 && lambda < ce.lambda_c.sqrt(),
                format!("need 1 < λ < √λ_c = {:.6} (λ_c = {:.6}), got {lambda}", ce.lambda_c.sqrt(), ce.lambda_c),
            ),
            Err(e) => r.fail("operator.lambda", format!("λ_c unavailable: {e}")),
        }
    }
    if c.family.kind != FamilyKind::None && c.family.t_max > 0.0 {
        if let Err(e) = c.family() {
            r.fail("family.profile", e.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn keys(errs: &[ConfigError]) -> Vec<&str> {
        errs.iter().map(|e| e.key.as_str()).collect()
    }

    #[test]
    fn ulam_map_config() {
        let c = parse_config("family.a = 2.0\n").unwrap();
        assert_eq!(c.a, 2.0);
        assert_eq!(c.tower.h0, 1);
        assert!(c.explicit_tower_params().is_some());
        assert!(!c.defaulted.contains(&"family.a".to_string()));
    }

    #[test]
    fn lambda_above_root_of_lambda_c() {
        let errs = parse_config("family.a = 2.0\noperator.lambda = 5.0").unwrap_err();
        assert_eq!(keys(&errs), vec!["operator.lambda"]);
        assert!(errs[0].rule.contains("√λ_c = 2.000000") && errs[0].rule.contains("λ_c = 4.000000"), "{}", errs[0].rule);
        assert!(parse_config("family.a = 2.0\noperator.lambda = 1.5").is_ok());
    }

    #[test]
    fn empty_file_lists_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.a, 1.9);
        for key in ["family.a", "operator.grid0", "operator.lambda", "seed", "output.dir", "validate.criteria"] {
            assert!(c.defaulted.iter().any(|k| k == key), "{key}");
        }
        assert_eq!(c.validate_criteria, (1..=10).collect::<Vec<u8>>());
    }

    #[test]
    fn all_errors_are_collected() {
        let text = "# comment\nfamily.a = banana\noperator.grid0 = 1000\nbogus.key = 1\nfd.orbits = 1\nsusceptibility.z = 0.5, 1.5\nnot a pair\n";
        let errs = parse_config(text).unwrap_err();
        let k = keys(&errs);
        for key in ["family.a", "operator.grid0", "bogus.key", "fd.orbits", "susceptibility.z", "line 7"] {
            assert!(k.contains(&key), "{key} missing from {k:?}");
        }
        assert!(errs.iter().find(|e| e.key == "bogus.key").unwrap().rule.contains("unknown"));
    }

    #[test]
    fn families_and_lists() {
        let c = parse_config("family.kind = conjugation\nfamily.a = 2\nfamily.t_max = 0.1\nvalidate.criteria = 5, 10\n").unwrap();
        assert_eq!(c.family.profile, Profile::cubic_odd());
        assert!(matches!(c.family().unwrap().unwrap().kind, DeformationKind::Conjugation { .. }));
        assert_eq!(c.validate_criteria, vec![5, 10]);
        let c = parse_config("family.kind = additive\n").unwrap();
        let fam = c.family().unwrap().unwrap();
        assert!(fam.is_additive());
        let bad = parse_config("family.kind = additive\nfamily.profile = 1\n").unwrap_err();
        assert_eq!(keys(&bad), vec!["family.profile"]);
        let dup = parse_config("seed = 1\nseed = 2\n").unwrap_err();
        assert_eq!(keys(&dup), vec!["seed"]);
    }

    proptest::proptest! {
        #[test]
        fn arbitrary_text_never_panics(text in "[a-z._= 0-9#,\n-]{0,200}") {
            let _ = parse_config(&text);
        }

        #[test]
        fn unknown_keys_are_named(suffix in "[a-z]{1,8}") {
            let key = format!("zz.{suffix}");
            let errs = parse_config(&format!("{key} = 1\n")).unwrap_err();
            proptest::prop_assert!(errs.iter().any(|e| e.key == key && e.rule == "unknown key"));
        }
    }

    #[test]
    fn tower_triplet_must_be_complete() {
        let errs = parse_config("tower.delta = 0.1\n").unwrap_err();
        assert_eq!(keys(&errs), vec!["tower.delta"]);
        let errs = parse_config("tower.delta = 0.1\ntower.beta1 = 0.3\ntower.beta2 = 0.2\n").unwrap_err();
        assert_eq!(keys(&errs), vec!["tower"]);
    }
}
