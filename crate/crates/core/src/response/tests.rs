use super::*;
use crate::measure::arcsine_measure;
use crate::profile::Profile;
use crate::recurrence::critical_orbit;
use crate::tower::{auto_params, build_tower, LevelChoice};
use crate::transfer::tests::{a19_ctx, random_tower_function, ulam_ctx};
use crate::transfer::{fixed_point, truncate};
use crate::unimodal::{additive_twin, make_quadratic, UnimodalMap};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

fn additive(map: UnimodalMap, x: Profile) -> DeformationFamily {
    make_family(map, DeformationKind::Additive { x }, 0.0).unwrap()
}

fn a19_horizontal_x(map: &UnimodalMap) -> Profile {
    crate::presets::horizontal_x(map).unwrap()
}

fn ulam_twin() -> DeformationFamily {
    let map = make_quadratic(2.0).unwrap();
    additive(map, additive_twin(&map, &Profile::cubic_odd()).unwrap())
}

fn x2() -> Profile {
    Profile::poly(&[0.0, 0.0, 1.0])
}

#[test]
fn y_weights_small_k() {
    let map = make_quadratic(1.9).unwrap();
    let xp = Profile::poly(&[0.3, 0.3, 1.0, 1.0]);
    let fam = additive(map, xp.clone());
    let x = 0.37;
    let fx = map.eval(x);
    assert_eq!(y_weights(&fam, 0.0, x, 1).unwrap(), xp.value(fx));
    let y2 = xp.value(map.eval(fx)) + map.d1(fx) * xp.value(fx);
    assert!((y_weights(&fam, 0.0, x, 2).unwrap() - y2).abs() < 1e-15);
    assert!(y_weights(&fam, 0.0, x, 0).is_err());
}

#[test]
fn y_weights_recursion_matches_direct_sum() {
    let map = make_quadratic(1.9).unwrap();
    let xp = a19_horizontal_x(&map);
    let fam = additive(map, xp.clone());
    let mut rng = SplitMix64::seed_from_u64(4);
    for _ in 0..100 {
        let x: f64 = rng.gen_range(-1.0..1.0);
        let k = rng.gen_range(1..=20);
        let mut pts = vec![x];
        for _ in 0..k {
            pts.push(map.eval(*pts.last().unwrap()));
        }
        let direct: f64 = (1..=k)
            .map(|j| {
                let d: f64 = (j..k).map(|i| map.d1(pts[i])).product();
                d * xp.value(pts[j])
            })
            .sum();
        let rec = y_weights(&fam, 0.0, x, k).unwrap();
        assert!((rec - direct).abs() <= 1e-10 * direct.abs().max(1.0), "{x} {k} {rec} {direct}");
    }
}

#[test]
fn zero_field_gives_zero_response() {
    let ctx = ulam_ctx(1024, 8);
    let fp = fixed_point(&ctx, 1e-12, 5000).unwrap();
    let fam = additive(ctx.map, Profile::Zero);
    let src = response_source(&ctx, &fp, &fam).unwrap();
    assert!(src.d.data.iter().all(|v| *v == 0.0));
    let r = linear_response(&ctx, &fp, &fam, &x2()).unwrap();
    assert_eq!(r.formula_value, 0.0);
    let (l, rr) = ruelle_identity_check(&ctx, &fp, &fam, &x2()).unwrap();
    assert_eq!((l, rr), (0.0, 0.0));
}

#[test]
fn source_is_mean_zero() {
    let ctx = a19_ctx(4096, 18);
    let fp = fixed_point(&ctx, 1e-12, 5000).unwrap();
    let fam = additive(ctx.map, a19_horizontal_x(&ctx.map));
    let src = response_source(&ctx, &fp, &fam).unwrap();
    assert!(src.mean_correction < 1e-6, "{}", src.mean_correction);
    assert!(ctx.grids[0].integrate(ctx.level(&src.d, 0)).abs() < 1e-12);
    assert!(src.d.data[ctx.offsets[1]..].iter().all(|v| *v == 0.0));
    let norm = norm_l1(&ctx, &src.d);
    assert!((norm - 6.747_909_396_636_428).abs() < 1e-6, "{norm}");
}

#[test]
fn conjugation_families_are_refused() {
    let map = make_quadratic(2.0).unwrap();
    let fam = make_family(map, DeformationKind::Conjugation { g: Profile::cubic_odd() }, 0.1).unwrap();
    let ctx = ulam_ctx(512, 5);
    let fp = fixed_point(&ctx, 1e-12, 5000).unwrap();
    assert!(matches!(linear_response(&ctx, &fp, &fam, &x2()), Err(Error::Config(_))));
    assert!(y_weights(&fam, 0.0, 0.1, 2).is_err());
}

#[test]
fn resolvent_inverts_one_minus_l() {
    let ctx = a19_ctx(2048, 12);
    let fp = fixed_point(&ctx, 1e-13, 5000).unwrap();
    let zero = resolvent_apply(&ctx, &fp, &ctx.zero(), 1e-10, 100).unwrap();
    assert!(zero.u.data.iter().all(|v| *v == 0.0));

    let mut rng = SplitMix64::seed_from_u64(9);
    let nu = ctx.nu_weights();
    let tol = 1e-11;
    for _ in 0..3 {
        // levels below M so that the truncation loses nothing
        let mut w = truncate(&ctx, &random_tower_function(&ctx, &mut rng, false), ctx.m - 1);
        let mass: f64 = nu.iter().zip(&w.data).map(|(a, b)| a * b).sum();
        w.data.iter_mut().zip(&fp.phi.data).for_each(|(a, p)| *a -= mass * p);
        let lw = ctx.apply_truncated(&w);
        // Q(w − L̂w) has u = w as its unique solution since Qw = w
        let mut g = TowerFunction { data: w.data.iter().zip(&lw.data).map(|(a, b)| a - b).collect() };
        project_off(&nu, &fp.phi, &mut g);
        let r = resolvent_apply(&ctx, &fp, &g, tol, 5000).unwrap();
        assert!(r.ratio < 1.0);
        let diff = TowerFunction { data: r.u.data.iter().zip(&w.data).map(|(a, b)| a - b).collect() };
        assert!(norm_l1(&ctx, &diff) < 10.0 * tol / (1.0 - r.ratio), "{}", norm_l1(&ctx, &diff));
        let mut qlu = ctx.apply_truncated(&r.u);
        project_off(&nu, &fp.phi, &mut qlu);
        let res = TowerFunction { data: r.u.data.iter().zip(&qlu.data).zip(&g.data).map(|((a, b), c)| a - b - c).collect() };
        assert!(norm_l1(&ctx, &res) < 10.0 * tol, "{}", norm_l1(&ctx, &res));
    }
}

#[test]
fn resolvent_rejects_massive_input() {
    let ctx = ulam_ctx(512, 5);
    let fp = fixed_point(&ctx, 1e-12, 5000).unwrap();
    assert!(matches!(resolvent_apply(&ctx, &fp, &fp.phi, 1e-10, 100), Err(Error::Domain(_))));
}

#[test]
fn ulam_additive_twin_matches_pushforward() {
    // X ∘ f = g ∘ f − f' g, so the response equals ∫ A' g dμ = 1/4 for A = x²
    let ctx = ulam_ctx(4096, 15);
    let fp = fixed_point(&ctx, 1e-12, 5000).unwrap();
    let r = linear_response(&ctx, &fp, &ulam_twin(), &x2()).unwrap();
    assert!((r.formula_value - 0.25).abs() < 1e-4, "{r:?}");
    assert_eq!(r.formula_value, r.term1 + r.term2);
    assert!(r.diagnostics.resolvent_ratio < 1.0);
    let (l, rr) = ruelle_identity_check(&ctx, &fp, &ulam_twin(), &x2()).unwrap();
    assert!((l - rr).abs() < 1e-3 * rr.abs(), "{l} {rr}");
}

#[test]
fn constants_pair_to_zero() {
    let ctx = a19_ctx(4096, 15);
    let fp = fixed_point(&ctx, 1e-12, 5000).unwrap();
    let fam = additive(ctx.map, a19_horizontal_x(&ctx.map));
    let r = linear_response(&ctx, &fp, &fam, &Profile::poly(&[3.0])).unwrap();
    assert_eq!(r.term2, 0.0);
    assert!(r.term1.abs() < 1e-6, "{}", r.term1);
    let (l, rr) = ruelle_identity_check(&ctx, &fp, &fam, &Profile::poly(&[3.0])).unwrap();
    assert!(l.abs() < 1e-6 && rr == 0.0);
}

#[test]
fn response_is_linear_in_observable_and_field() {
    let ctx = a19_ctx(2048, 12);
    let fp = fixed_point(&ctx, 1e-12, 5000).unwrap();
    let map = ctx.map;
    let (xa, xb) = (a19_horizontal_x(&map), Profile::poly(&[1.0, 1.0]).minus_scaled(0.0, &Profile::Zero));
    let (aa, ab) = (x2(), Profile::poly(&[0.0, 1.0, 0.0, 0.5]));
    let (s, t) = (0.7, -1.3);
    let opts = ResolventOptions { tol: 1e-13, n_max: 5000 };
    let parts = |x: Profile| response_parts(&ctx, &fp, &additive(map, x), opts).unwrap();
    let pa = parts(xa.clone());
    let pb = parts(xb.clone());
    let combo_a = Profile::Sum { terms: vec![(s, aa.clone()), (t, ab.clone())] };
    let lhs = pa.evaluate(&combo_a).formula_value;
    let rhs = s * pa.evaluate(&aa).formula_value + t * pa.evaluate(&ab).formula_value;
    assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1e-3), "{lhs} {rhs}");
    let pc = parts(Profile::Sum { terms: vec![(s, xa), (t, xb)] });
    let lhs = pc.evaluate(&aa).formula_value;
    let rhs = s * pa.evaluate(&aa).formula_value + t * pb.evaluate(&aa).formula_value;
    assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1e-3), "{lhs} {rhs}");
}

#[test]
fn ruelle_identity_for_horizontal_field() {
    let ctx = a19_ctx(8192, 18);
    let fp = fixed_point(&ctx, 1e-12, 5000).unwrap();
    let fam = additive(ctx.map, a19_horizontal_x(&ctx.map));
    let (l, r) = ruelle_identity_check(&ctx, &fp, &fam, &x2()).unwrap();
    assert!((l - r).abs() < 1e-2 * r.abs(), "{l} {r}");
}

#[test]
fn pushforward_oracle_for_ulam_conjugation() {
    let map = make_quadratic(2.0).unwrap();
    let mu = arcsine_measure(4000);
    let fam = make_family(map, DeformationKind::Conjugation { g: Profile::cubic_odd() }, 0.1).unwrap();
    assert!((response_oracle_conjugation(&fam, &mu, &x2()).unwrap() - 0.25).abs() < 1e-12);
    assert_eq!(response_oracle_conjugation(&fam, &mu, &Profile::poly(&[2.0])).unwrap(), 0.0);
    let zero = make_family(map, DeformationKind::Conjugation { g: Profile::Zero }, 0.1).unwrap();
    assert_eq!(response_oracle_conjugation(&zero, &mu, &x2()).unwrap(), 0.0);
    assert!(response_oracle_conjugation(&ulam_twin(), &mu, &x2()).is_err());
}

#[test]
fn finite_differences_for_ulam_conjugation() {
    let map = make_quadratic(2.0).unwrap();
    let fam = make_family(map, DeformationKind::Conjugation { g: Profile::cubic_odd() }, 0.1).unwrap();
    let opts = FdOptions { t_step: 1e-2, n_orbits: 16, n_iter: 200_000, burn_in: 100, seed: 7 };
    let fd = response_fd(&fam, &|x| x * x, opts).unwrap();
    assert!((fd.estimate - 0.25).abs() < 3.0 * fd.stderr, "{fd:?}");
    let doubled = response_fd(&fam, &|x| x * x, FdOptions { n_orbits: 32, ..opts }).unwrap();
    let ratio = fd.stderr / doubled.stderr;
    assert!(ratio > 1.2 && ratio < 1.7, "{ratio}");
    let zero = additive(map, Profile::Zero);
    let fd0 = response_fd(&zero, &|x| x * x, opts).unwrap();
    assert_eq!(fd0.estimate, 0.0);
}

#[test]
fn susceptibility_partial_sums() {
    let map = make_quadratic(2.0).unwrap();
    let mu = arcsine_measure(2000);
    let zero = susceptibility_partial(&map, &mu, &Profile::Zero, &x2(), 0.5, 10).unwrap();
    assert!(zero.iter().all(|v| *v == 0.0));
    let xp = Profile::cubic_odd();
    let s = susceptibility_partial(&map, &mu, &xp, &x2(), 0.0, 12).unwrap();
    let first = mu.integrate(|x| xp.value(x) * 2.0 * x);
    assert!(s.iter().all(|v| (v - first).abs() < 1e-15));
    assert!(susceptibility_partial(&map, &mu, &xp, &x2(), 1.5, 3).is_err());
}

#[test]
fn goodlemma_constants_need_horizontality() {
    let map = make_quadratic(1.9).unwrap();
    let orbit = critical_orbit(&map, 2000);
    let tower = build_tower(&map, &orbit, auto_params(&map, &orbit, 12, 30, LevelChoice::Outer).unwrap()).unwrap();
    let zero = goodlemma_check(&tower, &additive(map, Profile::Zero), 1..=15).unwrap();
    assert!(zero.iter().all(|r| r.implied_constant == 0.0));
    let horizontal = goodlemma_check(&tower, &additive(map, a19_horizontal_x(&map)), 1..=30).unwrap();
    let raw = goodlemma_check(&tower, &additive(map, Profile::poly(&[0.0, 0.0, 1.0, 1.0])), 1..=30).unwrap();
    let max_of = |rows: &[GoodLemmaRow], lo: usize, hi: usize| {
        rows.iter().filter(|r| r.k >= lo && r.k <= hi).map(|r| r.implied_constant).fold(0.0, f64::max)
    };
    assert!(max_of(&horizontal, 23, 30) <= max_of(&horizontal, 1, 22));
    assert!(max_of(&raw, 23, 30) > 10.0 * max_of(&raw, 1, 17));
    let golden = max_of(&horizontal, 1, 15);
    assert!((golden - 1.634e-2).abs() < 1e-4, "{golden}");
}

mod properties {
    use super::*;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn parts() -> &'static ResponseParts {
        static PARTS: OnceLock<ResponseParts> = OnceLock::new();
        PARTS.get_or_init(|| {
            let ctx = a19_ctx(2048, 14);
            let fp = fixed_point(&ctx, 1e-12, 5000).unwrap();
            let fam = additive(ctx.map, a19_horizontal_x(&ctx.map));
            response_parts(&ctx, &fp, &fam, ResolventOptions::default()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn linear_in_observable(p in prop::collection::vec(-2.0f64..2.0, 4), q in prop::collection::vec(-2.0f64..2.0, 4), s in -3.0f64..3.0) {
            let (pa, pb) = (Profile::poly(&p), Profile::poly(&q));
            let combo = Profile::Sum { terms: vec![(1.0, pa.clone()), (s, pb.clone())] };
            let lhs = parts().evaluate(&combo);
            let (ra, rb) = (parts().evaluate(&pa), parts().evaluate(&pb));
            prop_assert_eq!(lhs.formula_value, lhs.term1 + lhs.term2);
            let rhs = ra.formula_value + s * rb.formula_value;
            let scale = ra.formula_value.abs() + (s * rb.formula_value).abs() + 1e-12;
            prop_assert!((lhs.formula_value - rhs).abs() <= 1e-10 * scale);
        }

        #[test]
        fn constants_are_invisible(c in -5.0f64..5.0, p in prop::collection::vec(-2.0f64..2.0, 3)) {
            let base = Profile::poly(&p);
            let mut shifted = p.clone();
            shifted[0] += c;
            let (a, b) = (parts().evaluate(&base), parts().evaluate(&Profile::poly(&shifted)));
            prop_assert!((a.formula_value - b.formula_value).abs() < 1e-6 * (1.0 + c.abs()));
        }

        #[test]
        fn y_weights_prefix_consistency(x in -1.0f64..1.0, k in 1usize..25) {
            let map = make_quadratic(1.9).unwrap();
            let fam = additive(map, a19_horizontal_x(&map));
            let all = y_weights_upto(&fam, 0.0, x, k).unwrap();
            prop_assert_eq!(all.len(), k);
            for j in 1..=k {
                let direct = y_weights(&fam, 0.0, x, j).unwrap();
                prop_assert!((all[j - 1] - direct).abs() <= 1e-12 * direct.abs().max(1.0));
            }
        }
    }
}
