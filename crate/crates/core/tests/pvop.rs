use std::sync::Arc;

use fraclab_core::fields::{make_field, CustomField, FieldBase, RadialProfile, ScalarField, TailBound};
use fraclab_core::pvop::{
    g_limit, g_limit_integrands, g_of_r, near_field_bound, paired_difference, pv_apply, pv_apply_radial, split_radius,
    PvRequest,
};
use fraclab_core::{Error, Estimate, Params, QuadSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn spec() -> QuadSpec {
    QuadSpec { rel_tol: 1e-5, ..QuadSpec::default() }
}

fn apply(u: &ScalarField, x: &[f64], params: &Params) -> Estimate {
    pv_apply(&PvRequest { field: u, point: x, params, spec: &spec() }).unwrap()
}

fn close(a: &Estimate, b: &Estimate) -> bool {
    (a.value - b.value).abs() <= 3.0 * (a.error + b.error) + 1e-12
}

#[test]
fn constant_is_annihilated() {
    let params = Params::new(1, 0.3, 2.5).unwrap();
    let e = apply(&ScalarField::constant(1, -2.0), &[0.7], &params);
    assert_eq!(e.value, 0.0);
}

#[test]
fn fundamental_solution_is_harmonic_off_origin_in_the_plane() {
    let params = Params::new(2, 0.5, 2.0).unwrap();
    let u0 = make_field(&RadialProfile::fundamental(&params).unwrap());
    let e = apply(&u0, &[1.0, 0.0], &params);
    assert!(e.value.abs() <= 3.0 * e.error, "{e:?}");
}

#[test]
fn perturbed_profile_is_positive_at_origin() {
    for params in [Params::new(2, 0.5, 2.0).unwrap(), Params::new(1, 0.3, 2.5).unwrap()] {
        let sigma = 0.5 * (params.nf() - params.sp()) * 0.5;
        let f = make_field(&RadialProfile::perturbed(&params, sigma).unwrap());
        let e = apply(&f, &vec![0.0; params.n], &params);
        assert!(e.value > 3.0 * e.error, "{params:?}: {e:?}");
    }
}

#[test]
fn radial_fold_positive_for_perturbed_profile() {
    let params = Params::new(3, 0.6, 1.8).unwrap();
    let f = RadialProfile::perturbed(&params, 0.3).unwrap();
    for r in [0.01, 0.3, 1.0, 7.0, 200.0] {
        let e = pv_apply_radial(&f, r, &params, &spec()).unwrap();
        assert!(e.value > 3.0 * e.error, "r = {r}: {e:?}");
    }
}

#[test]
fn radial_fold_constant_profile_is_zero() {
    let params = Params::new(2, 0.5, 2.0).unwrap();
    let f = RadialProfile::homogeneous(2, 0.0).unwrap();
    let e = pv_apply_radial(&f, 1.3, &params, &spec()).unwrap();
    assert!(e.value.abs() <= 1e-12, "{e:?}");
}

#[test]
fn radial_fold_matches_pointwise_in_one_dimension() {
    let params = Params::new(1, 0.3, 2.5).unwrap();
    let f = RadialProfile::gaussian(1, 0.8).unwrap();
    let u = make_field(&f);
    for r in [0.2, 1.0, 3.0] {
        let a = pv_apply_radial(&f, r, &params, &spec()).unwrap();
        let b = apply(&u, &[r], &params);
        assert!(close(&a, &b), "r = {r}: {a:?} vs {b:?}");
    }
}

#[test]
fn homogeneity_of_power_profiles() {
    let params = Params::new(2, 0.5, 2.0).unwrap();
    let beta = 0.4;
    let f = RadialProfile::homogeneous(2, beta).unwrap();
    let u = make_field(&f);
    let lam: f64 = 2.5;
    let k = lam.powf(beta * (params.p - 1.0) - params.sp());
    let a = pv_apply_radial(&f, 1.0, &params, &spec()).unwrap();
    let b = pv_apply_radial(&f, lam, &params, &spec()).unwrap();
    assert!((b.value - k * a.value).abs() <= 3.0 * (b.error + k * a.error), "{a:?} {b:?}");
    let c = apply(&u, &[0.6, 0.8], &params);
    let d = apply(&u, &[0.6 * lam, 0.8 * lam], &params);
    assert!((d.value - k * c.value).abs() <= 3.0 * (d.error + k * c.error), "{c:?} {d:?}");
}

#[test]
fn homogeneity_in_one_dimension_at_p_not_two() {
    let params = Params::new(1, 0.3, 2.5).unwrap();
    let beta = 0.2;
    let u = make_field(&RadialProfile::homogeneous(1, beta).unwrap());
    let lam: f64 = 3.0;
    let k = lam.powf(beta * (params.p - 1.0) - params.sp());
    let a = apply(&u, &[1.0], &params);
    let b = apply(&u, &[lam], &params);
    assert!((b.value - k * a.value).abs() <= 3.0 * (b.error + k * a.error), "{a:?} {b:?}");
}

#[test]
fn rotation_invariance() {
    let params = Params::new(2, 0.4, 2.5).unwrap();
    let u = make_field(&RadialProfile::gaussian(2, 1.0).unwrap());
    let r = 1.3;
    let base = apply(&u, &[r, 0.0], &params);
    for th in [0.7f64, 2.0, 4.4] {
        let e = apply(&u, &[r * th.cos(), r * th.sin()], &params);
        assert!(close(&base, &e), "θ = {th}: {base:?} vs {e:?}");
    }
}

#[test]
fn linearity_at_p_two() {
    let params = Params::new(2, 0.5, 2.0).unwrap();
    let u = make_field(&RadialProfile::cutoff(2, 0.7).unwrap()).shifted(&[0.2, -0.1]);
    let x = [0.5, 0.4];
    let a = apply(&u, &x, &params);
    let b = apply(&u.clone().scaled(3.0), &x, &params);
    assert!((b.value - 3.0 * a.value).abs() <= 3.0 * (b.error + 3.0 * a.error), "{a:?} {b:?}");
}

#[test]
fn sign_monotonicity_on_ordered_pairs() {
    // v = u + w with w ≥ 0 vanishing at x: pv(v) ≤ pv(u)
    let params = Params::new(1, 0.3, 2.5).unwrap();
    let u = make_field(&RadialProfile::gaussian(1, 1.0).unwrap());
    let w = make_field(&RadialProfile::cutoff(1, 0.5).unwrap()).shifted(&[2.5]);
    let uu = u.clone();
    let ww = w.clone();
    let uu2 = u.clone();
    let ww2 = w.clone();
    let v = ScalarField::new(
        1,
        FieldBase::Custom(CustomField {
            name: "sum".into(),
            value: Arc::new(move |x| uu.value(x) + ww.value(x)),
            gradient: Arc::new(move |x| vec![uu2.gradient(x).unwrap()[0] + ww2.gradient(x).unwrap()[0]]),
            hessian_bound: {
                let (a, b) = (u.clone(), w.clone());
                Arc::new(move |c, r| a.hessian_bound(c, r) + b.hessian_bound(c, r))
            },
            tail: TailBound { gamma: 0.0, constant: 2.0, from_radius: 0.0 },
            singular_points: Vec::new(),
            holder: 1.0,
            support: None,
        }),
    )
    .unwrap();
    for x in [0.0, 0.5, -1.0] {
        let a = apply(&u, &[x], &params);
        let b = apply(&v, &[x], &params);
        assert!(b.value <= a.value + 3.0 * (a.error + b.error), "x = {x}: {b:?} > {a:?}");
        assert!(b.value < a.value);
    }
}

#[test]
fn near_field_integrand_obeys_taylor_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases = [
        (Params::new(2, 0.5, 2.0).unwrap(), 0.25),
        (Params::new(2, 0.3, 3.0).unwrap(), 0.2),
        (Params::new(3, 0.4, 1.5).unwrap(), 0.3),
    ];
    for (params, sigma) in cases {
        let n = params.n;
        let u = make_field(&RadialProfile::perturbed(&params, sigma).unwrap());
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let eta = split_radius(&u, &x, Default::default());
            let (c, e) = near_field_bound(&u, &x, eta, &params).unwrap();
            for _ in 0..50 {
                let dir: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
                let r = eta * rng.random::<f64>().powi(3);
                let z: Vec<f64> = dir.iter().map(|v| v * r / len).collect();
                let lhs = paired_difference(&u, &x, &z, params.p).abs() * r.powf(-(n as f64) - params.sp());
                assert!(lhs <= c * r.powf(e) * (1.0 + 1e-9) + 1e-300, "{params:?} x={x:?} r={r}");
            }
        }
    }
}

#[test]
fn regularity_error_for_rough_fields() {
    let params = Params::new(1, 0.9, 1.1).unwrap();
    let u = ScalarField::new(
        1,
        FieldBase::Custom(CustomField {
            name: "rough".into(),
            value: Arc::new(|x| x[0].abs().powf(1.2)),
            gradient: Arc::new(|x| vec![1.2 * x[0].signum() * x[0].abs().powf(0.2)]),
            hessian_bound: Arc::new(|_, _| f64::INFINITY),
            tail: TailBound { gamma: 0.0, constant: 1.0, from_radius: 0.0 },
            singular_points: Vec::new(),
            holder: 0.2,
            support: None,
        }),
    )
    .unwrap();
    let r = pv_apply(&PvRequest { field: &u, point: &[0.5], params: &params, spec: &spec() });
    assert!(matches!(r, Err(Error::Regularity(_))), "{r:?}");
}

#[test]
fn divergent_tail_is_rejected() {
    let params = Params::new(1, 0.3, 2.0).unwrap();
    let u = ScalarField::affine(vec![1.0], 0.0).unwrap();
    let r = pv_apply(&PvRequest { field: &u, point: &[0.5], params: &params, spec: &spec() });
    assert!(matches!(r, Err(Error::Divergence(_))), "{r:?}");
}

#[test]
fn singular_point_is_rejected() {
    let params = Params::new(1, 0.3, 2.5).unwrap();
    let u0 = make_field(&RadialProfile::fundamental(&params).unwrap());
    let r = pv_apply(&PvRequest { field: &u0, point: &[0.0], params: &params, spec: &spec() });
    assert!(matches!(r, Err(Error::Singularity(_))), "{r:?}");
}

#[test]
fn three_dimensional_monte_carlo_path() {
    let params = Params::new(3, 0.5, 2.0).unwrap();
    let f = RadialProfile::perturbed(&params, 0.3).unwrap();
    let u = make_field(&f);
    let spec = QuadSpec { mc_budget: 400_000, ..QuadSpec::default() };
    let x = [0.8, 0.0, 0.0];
    let mc = pv_apply(&PvRequest { field: &u, point: &x, params: &params, spec: &spec }).unwrap();
    let det = pv_apply_radial(&f, 0.8, &params, &spec).unwrap();
    assert!((mc.value - det.value).abs() <= 4.0 * (mc.error + det.error), "{mc:?} vs {det:?}");
}

#[test]
fn g_identity_and_positivity() {
    let params = Params::new(2, 0.5, 2.0).unwrap();
    let sigma = 0.25;
    let f = RadialProfile::perturbed(&params, sigma).unwrap();
    let g5 = g_of_r(&params, sigma, 5.0, &spec()).unwrap();
    let d5 = pv_apply_radial(&f, 5.0, &params, &spec()).unwrap();
    let k = 5f64.powf(sigma - 2.0);
    assert!((k * g5.value - d5.value).abs() <= 3.0 * (k * g5.error + d5.error));
    for r in [0.05, 0.5, 1.0, 3.0, 30.0, 300.0] {
        let g = g_of_r(&params, sigma, r, &spec()).unwrap();
        assert!(g.value > 3.0 * g.error, "r = {r}: {g:?}");
    }
}

#[test]
fn g_identity_in_other_dimensions() {
    for (params, sigma) in [(Params::new(1, 0.3, 2.5).unwrap(), 0.05), (Params::new(3, 0.6, 1.8).unwrap(), 0.3)] {
        let f = RadialProfile::perturbed(&params, sigma).unwrap();
        for r in [0.4, 2.0] {
            let g = g_of_r(&params, sigma, r, &spec()).unwrap();
            let d = pv_apply_radial(&f, r, &params, &spec()).unwrap();
            let k = r.powf(sigma - params.nf());
            assert!((k * g.value - d.value).abs() <= 3.0 * (k * g.error + d.error), "{params:?} r={r}: {g:?} {d:?}");
        }
    }
}

#[test]
fn g_converges_to_limit() {
    let params = Params::new(2, 0.5, 2.0).unwrap();
    let sigma = 0.25;
    let lim = g_limit(&params, sigma, &spec()).unwrap();
    assert!(lim.value - 3.0 * lim.error > 0.0);
    let g3 = g_of_r(&params, sigma, 1e3, &spec()).unwrap();
    assert!((g3.value - lim.value).abs() < 0.02 * lim.value, "{g3:?} {lim:?}");
    let g4 = g_of_r(&params, sigma, 1e4, &spec()).unwrap();
    assert!((g4.value - lim.value).abs() <= 3.0 * (g4.error + lim.error), "{g4:?} {lim:?}");
}

#[test]
fn limit_integrands_are_nonnegative() {
    for (params, sigma) in [
        (Params::new(2, 0.5, 2.0).unwrap(), 0.25),
        (Params::new(1, 0.3, 2.5).unwrap(), 0.1),
        (Params::new(3, 0.7, 1.5).unwrap(), 0.5),
    ] {
        for k in 1..=200 {
            let t = k as f64 / 200.0;
            let (a, b) = g_limit_integrands(&params, sigma, t).unwrap();
            assert!(a <= 0.0 || a >= 0.0);
            assert!(b >= 0.0, "t = {t}: {b}");
        }
    }
}

#[test]
fn three_evaluations_agree_when_sp_exceeds_one() {
    // sp = 1.8: the paired near field is dominated by rounding below a tiny radius
    let params = Params::new(2, 0.9, 2.0).unwrap();
    let sigma = 0.05;
    let f = RadialProfile::perturbed(&params, sigma).unwrap();
    let u = make_field(&f);
    let spec = QuadSpec { rel_tol: 1e-6, ..QuadSpec::default() };
    for r in [0.9, 8.0, 100.0] {
        let a = pv_apply_radial(&f, r, &params, &spec).unwrap();
        let g = g_of_r(&params, sigma, r, &spec).unwrap().scale(r.powf(sigma - 2.0));
        let b = pv_apply(&PvRequest { field: &u, point: &[r, 0.0], params: &params, spec: &spec }).unwrap();
        for e in [&g, &b] {
            assert!((e.value - a.value).abs() <= 3.0 * (e.error + a.error), "r = {r}: {a:?} vs {e:?}");
            assert!(e.error <= 1e-2 * a.value, "r = {r}: {e:?}");
        }
    }
}
