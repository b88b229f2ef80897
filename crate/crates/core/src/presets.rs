//! Benchmark configurations shared by the acceptance suite, the CLI and the tests.

use rand::Rng;

use crate::error::Result;
use crate::profile::Profile;
use crate::recurrence::critical_orbit;
use crate::tce::horizontalize;
use crate::tower::{auto_params, build_tower, LevelChoice, Tower, TowerParams};
use crate::transfer::{make_context, OperatorContext, TowerFunction, TransferOptions};
use crate::unimodal::{make_family, make_quadratic, DeformationFamily, DeformationKind, UnimodalMap};

/// Tower parameters for the Ulam map `x ↦ 1 − 2x²`.
pub fn ulam_params(m_max: usize) -> TowerParams {
    TowerParams { delta: 0.2, beta1: 0.3, beta2: 0.6, gamma: 0.0, h0: 1, m_max, levels: LevelChoice::Outer }
}

pub fn ulam_tower(m: usize) -> Result<Tower> {
    let map = make_quadratic(2.0)?;
    build_tower(&map, &critical_orbit(&map, m + 10), ulam_params(m + 2))
}

pub fn a19_tower(m_max: usize) -> Result<Tower> {
    let map = make_quadratic(1.9)?;
    let orbit = critical_orbit(&map, 2000);
    build_tower(&map, &orbit, auto_params(&map, &orbit, 12, m_max, LevelChoice::Outer)?)
}

fn context(tower: &Tower, grid0: usize, m: usize) -> Result<OperatorContext> {
    make_context(tower, TransferOptions { lambda: None, m, grid0, quad_order: 5 })
}

pub fn ulam_context(grid0: usize, m: usize) -> Result<OperatorContext> {
    context(&ulam_tower(m)?, grid0, m)
}

pub fn a19_context(grid0: usize, m: usize) -> Result<OperatorContext> {
    context(&a19_tower(m + 2)?, grid0, m)
}

/// `g(x) = x(1 − x²)` conjugation family on the Ulam map.
pub fn ulam_conjugation_family() -> Result<DeformationFamily> {
    make_family(make_quadratic(2.0)?, DeformationKind::Conjugation { g: Profile::cubic_odd() }, 0.1)
}

/// `x²(1 + x)` made horizontal with the corrector `1 + x`.
pub fn horizontal_x(map: &UnimodalMap) -> Result<Profile> {
    Ok(horizontalize(map, &Profile::poly(&[0.0, 0.0, 1.0, 1.0]), &Profile::poly(&[1.0, 1.0]), 400)?.x)
}

/// `x²(1 + x)` made horizontal with a bump of width `0.05` at `c_3`.
pub fn horizontal_x_bump(map: &UnimodalMap) -> Result<Profile> {
    let c3 = (0..3).fold(0.0, |y, _| map.eval(y));
    Ok(horizontalize(map, &Profile::poly(&[0.0, 0.0, 1.0, 1.0]), &Profile::bump(c3, 0.05), 400)?.x)
}

/// Smooth tower function with analytic level profiles vanishing at the grid ends.
pub fn random_tower_function(ctx: &OperatorContext, rng: &mut impl Rng, positive: bool) -> TowerFunction {
    let top = ctx.m;
    let coeffs: Vec<[f64; 3]> = (0..=top)
        .map(|_| {
            let b1 = rng.gen_range(-0.5..0.5);
            let b2 = rng.gen_range(-0.5..0.5);
            let b0 = if positive { 1.0 + rng.gen_range(0.0..1.0) } else { rng.gen_range(-1.0..1.0) };
            [b0, b1, b2]
        })
        .collect();
    let (p, q) = (rng.gen_range(1.0..4.0), rng.gen_range(0.0..6.0));
    let radii: Vec<f64> = (0..=top).map(|k| ctx.radius(k)).collect();
    ctx.sample(top, |k, y| {
        if k == 0 {
            let base = 1.0 + 0.5 * (p * y + q).sin();
            (1.0 - y * y).powi(2) * if positive { base } else { base - 1.0 + coeffs[0][0] }
        } else {
            let u = y / radii[k];
            let [b0, b1, b2] = coeffs[k];
            (1.0 - u * u).max(0.0).powi(3) * (b0 + b1 * u + b2 * (std::f64::consts::PI * u).cos())
        }
    })
}
