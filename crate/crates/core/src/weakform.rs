//! The weak pairing `⟨(-Δ)^s_p u, φ⟩`, the constant of the fundamental
//! solution, and the cutoff bracket used in the Liouville argument.
//!
//! All double integrals carry the symmetric ½ convention:
//! `⟨(-Δ)^s_p u, φ⟩ = ½ ∬ h(u(x)-u(y)) (φ(x)-φ(y)) |x-y|^{-n-sp} dx dy`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{cutoff_field, h, make_field, FieldBase, RadialProfile, ScalarField};
use crate::params::Params;
use crate::quad::mc::{DiagonalPair, Mixture, ProductPair, RadialLaw, Symmetrized};
use crate::quad::{dist, integrate_breaks, integrate_nested, mc_stratified, norm, Density, Estimate, QuadSpec};

#[derive(Debug, Clone, Copy)]
pub struct BracketRequest<'a> {
    pub u: &'a ScalarField,
    pub phi: &'a ScalarField,
    pub params: &'a Params,
    pub spec: &'a QuadSpec,
}

fn kernel(x: &[f64], y: &[f64], exponent: f64) -> f64 {
    dist(x, y).powf(-exponent)
}

/// Exponent `b > 0` of the far-field density for a field with tail growth `γ`.
fn far_exponent(u: &ScalarField, params: &Params) -> Result<f64> {
    let gamma = u.tail_bound().gamma;
    let b = params.sp() - (params.p - 1.0) * gamma.max(0.0);
    if b <= 0.0 || (params.p - 1.0) * gamma >= params.sp() {
        return Err(Error::Divergence(format!("tail growth exponent {gamma} is too large")));
    }
    Ok(b)
}

/// Local exponent `a` of the density near a singular point of `u`.
fn singular_share(u: &ScalarField, params: &Params) -> f64 {
    let nf = params.nf();
    let e = u.singular_exponent().unwrap_or(0.0);
    (nf + (params.p - 1.0) * e).max(0.05 * nf)
}

/// Densities over `(x, y)` with `x` in the ball `(c, radius)`.
fn pair_components(
    u: &ScalarField,
    c: &[f64],
    radius: f64,
    params: &Params,
) -> Result<(Vec<(String, Box<dyn Density>)>, Vec<Vec<f64>>)> {
    let n = params.n;
    let nf = params.nf();
    let b = far_exponent(u, params)?;
    let a_sing = singular_share(u, params);
    let sing: Vec<Vec<f64>> = u.singular_points().into_iter().filter(|s| dist(s, c) < 2.0 * radius).collect();

    let x_law = || -> Box<dyn Density> {
        let mut parts: Vec<(f64, Box<dyn Density>)> = vec![(1.0, Box::new(RadialLaw::new(c.to_vec(), radius, nf, None)))];
        for s in &sing {
            parts.push((1.0, Box::new(RadialLaw::new(s.clone(), radius, a_sing, None))));
        }
        Box::new(Mixture::new(parts))
    };
    let mut out: Vec<(String, Box<dyn Density>)> = vec![
        (
            "diagonal".into(),
            Box::new(DiagonalPair {
                base: x_law(),
                a: (1.0 - params.s) * params.p,
                b: Some(b),
                beta: 0.5,
                anchors: sing.clone(),
                r_min: 1e-12,
                r_max: radius,
            }),
        ),
        ("far".into(), Box::new(ProductPair { x: x_law(), y: RadialLaw::new(c.to_vec(), radius, nf, Some(b)) })),
    ];
    for (k, s) in sing.iter().enumerate() {
        out.push((
            format!("singular-{k}"),
            Box::new(ProductPair { x: x_law(), y: RadialLaw::new(s.clone(), radius, a_sing, Some(b)) }),
        ));
    }
    debug_assert!(out.iter().all(|(_, d)| d.dim() == 2 * n));
    Ok((out, sing))
}

fn run_pairs<F>(components: &[(String, Box<dyn Density>)], n: usize, integrand: F, spec: &QuadSpec) -> Result<Estimate>
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let refs: Vec<(&str, &dyn Density)> = components.iter().map(|(k, d)| (k.as_str(), d.as_ref() as &dyn Density)).collect();
    mc_stratified(2 * n, &refs, |z| integrand(&z[..n], &z[n..]), spec).map(|s| s.estimate)
}

fn check_pair(u: &ScalarField, phi: &ScalarField, params: &Params) -> Result<(Vec<f64>, f64)> {
    params.validate()?;
    if u.dim() != params.n || phi.dim() != params.n {
        return Err(Error::Domain(format!("fields of dimension {} and {} with n = {}", u.dim(), phi.dim(), params.n)));
    }
    phi.support()
        .ok_or_else(|| Error::Domain("test function must have compact support".into()))
}

/// `½ ∬ h(u(x)-u(y)) (φ(x)-φ(y)) |x-y|^{-n-sp}`, by Monte Carlo.
///
/// Only pairs with `x` in the support ball `S` of `φ` are sampled; pairs
/// with both points in `S` are counted with weight ½ and the rest once.
pub fn bracket(req: &BracketRequest) -> Result<Estimate> {
    let BracketRequest { u, phi, params, spec } = *req;
    let (c, radius) = check_pair(u, phi, params)?;
    if u.is_zero() || matches!(u.base(), FieldBase::Constant(_)) || phi.is_zero() {
        return Ok(Estimate::exact(0.0));
    }
    let (components, _) = pair_components(u, &c, radius, params)?;
    let alpha = params.nf() + params.sp();
    run_pairs(
        &components,
        params.n,
        |x, y| {
            if dist(x, &c) >= radius {
                return 0.0;
            }
            let dphi = phi.diff(x, y);
            if dphi == 0.0 {
                return 0.0;
            }
            let w = if dist(y, &c) < radius { 0.5 } else { 1.0 };
            w * h(u.diff(x, y), params.p) * dphi * kernel(x, y, alpha)
        },
        spec,
    )
}

/// Inner integral of a nested quadrature. Points where the target cannot be
/// met (next to a singular breakpoint) are retried with looser tolerances;
/// the outer integral absorbs their larger errors.
fn inner_1d<F: Fn(f64) -> f64>(f: F, pts: &[f64], flags: &[bool], spec: &QuadSpec) -> Result<Estimate> {
    let budget = spec.max_evals.min(400_000);
    let mut last = None;
    for widen in [1.0, 30.0, 1000.0] {
        let tol = crate::quad::Tol { rel: (0.25 * spec.rel_tol * widen).min(0.5), ..spec.magnitude_tol() };
        match integrate_breaks(&f, pts, flags, tol, budget) {
            Ok(q) => return Ok(q.estimate),
            Err(e @ Error::BudgetExceeded { .. }) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap())
}

/// Deterministic one-dimensional version of [`bracket`] by nested adaptive
/// quadrature over the full plane.
pub fn bracket_quadrature_1d(req: &BracketRequest) -> Result<Estimate> {
    let BracketRequest { u, phi, params, spec } = *req;
    let (c, radius) = check_pair(u, phi, params)?;
    if params.n != 1 {
        return Err(Error::Domain("the quadrature bracket is one-dimensional".into()));
    }
    far_exponent(u, params)?;
    let (p, alpha) = (params.p, 1.0 + params.sp());
    let sing: Vec<f64> = u.singular_points().iter().map(|s| s[0]).collect();
    let (lo, hi) = (c[0] - radius, c[0] + radius);
    let mut outer = vec![lo, hi];
    outer.extend(sing.iter().copied().filter(|s| *s > lo && *s < hi));
    outer.sort_by(f64::total_cmp);
    let outer_flags: Vec<bool> = outer.iter().map(|v| sing.contains(v)).collect();
    integrate_nested(
        |x| {
            let mut pts = vec![f64::NEG_INFINITY, x, lo, hi, f64::INFINITY];
            pts.extend(sing.iter().copied());
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let flags: Vec<bool> = pts.iter().map(|v| *v == x || sing.contains(v)).collect();
            inner_1d(
                |y| {
                    if y == x {
                        return 0.0;
                    }
                    let w = if y > lo && y < hi { 0.5 } else { 1.0 };
                    w * h(u.diff(&[x], &[y]), p) * phi.diff(&[x], &[y]) * (x - y).abs().powf(-alpha)
                },
                &pts,
                &flags,
                spec,
            )
        },
        &outer,
        &outer_flags,
        spec.magnitude_tol(),
        spec.max_evals,
    )
}

/// Integrand of the fundamental-solution constant paired at the pole `z`:
/// `½ h(u₀(x)-u₀(y)) (|x-z|^{s-n} - |y-z|^{s-n}) |x-y|^{-n-sp}`, or its
/// absolute value.
struct PoleIntegrand {
    u0: ScalarField,
    z: Vec<f64>,
    params: Params,
    absolute: bool,
}

impl PoleIntegrand {
    fn new(params: &Params, z: &[f64], absolute: bool) -> Result<Self> {
        let u0 = make_field(&RadialProfile::fundamental(params)?);
        Ok(Self { u0, z: z.to_vec(), params: *params, absolute })
    }

    fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        let (n, s, p) = (self.params.nf(), self.params.s, self.params.p);
        let (a, b) = (dist(x, &self.z), dist(y, &self.z));
        if a == 0.0 || b == 0.0 || x == y {
            return 0.0;
        }
        let e = s - n;
        // |x-z|^e - |y-z|^e without cancellation
        let dw = -a.powf(e) * (e * (b / a).ln()).exp_m1();
        let du = self.u0.diff(x, y);
        let k = kernel(x, y, n + self.params.sp());
        if self.absolute {
            0.5 * du.abs().powf(p - 1.0) * dw.abs() * k
        } else {
            0.5 * h(du, p) * dw * k
        }
    }
}

fn pole_components(params: &Params, z: &[f64]) -> Vec<(String, Box<dyn Density>)> {
    let n = params.n;
    let (s, p, sp) = (params.s, params.p, params.sp());
    let nf = params.nf();
    let scale = norm(z);
    let origin = vec![0.0; n];
    // h(u₀) ~ |x|^{sp-n} near the origin
    let a_origin = sp.max(0.05 * nf);
    let a_pole = s.min((1.0 - s) * (p - 1.0));
    let origin_law = || RadialLaw::new(origin.clone(), scale, a_origin, Some(sp));
    let pole_law = || RadialLaw::new(z.to_vec(), scale, a_pole, Some(sp));
    let bulk = || RadialLaw::new(origin.clone(), 2.0 * scale, nf, Some(sp));
    let base = Mixture::new(vec![(1.0, Box::new(origin_law())), (1.0, Box::new(pole_law())), (1.0, Box::new(bulk()))]);
    vec![
        (
            "diagonal".into(),
            Box::new(Symmetrized(DiagonalPair {
                base,
                a: (1.0 - s) * p,
                b: Some(sp),
                beta: 0.5,
                anchors: vec![origin.clone(), z.to_vec()],
                r_min: 1e-12 * scale,
                r_max: scale,
            })),
        ),
        ("origin".into(), Box::new(Symmetrized(ProductPair { x: origin_law(), y: bulk() }))),
        ("pole".into(), Box::new(Symmetrized(ProductPair { x: pole_law(), y: bulk() }))),
        ("cross".into(), Box::new(Symmetrized(ProductPair { x: origin_law(), y: pole_law() }))),
        ("tail".into(), Box::new(ProductPair { x: bulk(), y: bulk() })),
    ]
}

fn check_fundamental(params: &Params) -> Result<()> {
    params.validate()?;
    if params.sp() > params.nf() {
        return Err(Error::Regime(format!("need sp ≤ n, got sp = {}", params.sp())));
    }
    Ok(())
}

/// The pole integral at an arbitrary `z ≠ 0`; `z = e₁` gives `c*`.
pub fn pole_integral(params: &Params, z: &[f64], absolute: bool, spec: &QuadSpec) -> Result<Estimate> {
    check_fundamental(params)?;
    if z.len() != params.n || norm(z) == 0.0 {
        return Err(Error::Domain("pole must be a nonzero point of R^n".into()));
    }
    let integrand = PoleIntegrand::new(params, z, absolute)?;
    run_pairs(&pole_components(params, z), params.n, |x, y| integrand.eval(x, y), spec)
}

/// `c*_{n,s,p}`, the constant with `⟨(-Δ)^s_p u₀, φ⟩ = c* φ(0)`.
pub fn fundamental_constant(params: &Params, spec: &QuadSpec) -> Result<Estimate> {
    let mut e1 = vec![0.0; params.n];
    e1[0] = 1.0;
    pole_integral(params, &e1, false, spec)
}

/// `c*` in one dimension by nested adaptive quadrature; an independent check
/// on the Monte Carlo estimate.
pub fn fundamental_constant_quadrature(params: &Params, spec: &QuadSpec) -> Result<Estimate> {
    check_fundamental(params)?;
    if params.n != 1 {
        return Err(Error::Domain("the quadrature constant is one-dimensional".into()));
    }
    let integrand = PoleIntegrand::new(params, &[1.0], false)?;
    let outer = [f64::NEG_INFINITY, -1.0, 0.0, 0.5, 1.0, 2.0, f64::INFINITY];
    let outer_flags = [false, false, true, false, true, false, false];
    integrate_nested(
        |x| {
            let mut pts = vec![f64::NEG_INFINITY, 0.0, 1.0, x, f64::INFINITY];
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let flags: Vec<bool> = pts.iter().map(|v| v.is_finite()).collect();
            inner_1d(|y| integrand.eval(&[x], &[y]), &pts, &flags, spec)
        },
        &outer,
        &outer_flags,
        spec.magnitude_tol(),
        spec.max_evals,
    )
}

/// `J(z₁)/J(z₂)` against the homogeneity prediction `(|z₁|/|z₂|)^{s-n}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub radius1: f64,
    pub radius2: f64,
    pub j1: Estimate,
    pub j2: Estimate,
    pub ratio: f64,
    pub ratio_error: f64,
    pub predicted: f64,
}

impl ScalingReport {
    /// `|ratio - predicted|` in units of the ratio's standard error.
    pub fn deviation(&self) -> f64 {
        let d = (self.ratio - self.predicted).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.ratio_error
        }
    }
}

pub fn scaling_check(params: &Params, z1: &[f64], z2: &[f64], spec: &QuadSpec) -> Result<ScalingReport> {
    let j1 = pole_integral(params, z1, true, spec)?;
    let j2 = pole_integral(params, z2, true, &spec.with_seed(spec.seed.wrapping_add(1)))?;
    let (r1, r2) = (norm(z1), norm(z2));
    let ratio = j1.value / j2.value;
    let ratio_error = ratio.abs() * ((j1.error / j1.value).powi(2) + (j2.error / j2.value).powi(2)).sqrt();
    Ok(ScalingReport {
        radius1: r1,
        radius2: r2,
        j1,
        j2,
        ratio,
        ratio_error,
        predicted: (r1 / r2).powf(params.s - params.nf()),
    })
}

/// `±|c*|^{-1/(p-1)} u₀`, the solution of `(-Δ)^s_p u = δ₀`.
pub fn normalize_fundamental(c_star: &Estimate, params: &Params) -> Result<ScalarField> {
    check_fundamental(params)?;
    let c = c_star.value;
    if !(c.abs() > 3.0 * c_star.error) {
        return Err(Error::ZeroConstant { value: c, error: c_star.error });
    }
    let amp = c.signum() * c.abs().powf(-1.0 / (params.p - 1.0));
    Ok(make_field(&RadialProfile::fundamental(params)?).scaled(amp))
}

/// Blocks of the cutoff bracket over `D = B_{4r}` and its complement.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffBlocks {
    /// `x, y ∈ D`
    pub inner: Estimate,
    /// `x ∈ D, y ∉ D`; the mirrored block has the same value.
    pub cross: Estimate,
    /// `x, y ∉ D`, where the cutoff vanishes identically.
    pub outer: f64,
    pub total: Estimate,
}

/// `∬ |u(x)-u(y)|^{p-1} |φ_r(x)-φ_r(y)| |x-y|^{-n-sp}` split into blocks.
pub fn cutoff_bracket_blocks(u: &ScalarField, r: f64, params: &Params, spec: &QuadSpec) -> Result<CutoffBlocks> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("cutoff radius must be positive, got {r}")));
    }
    let phi = cutoff_field(params.n, r)?;
    let (c, support) = check_pair(u, &phi, params)?;
    let d = 4.0 * r;
    if support > d {
        return Err(Error::Domain("cutoff support exceeds the inner block".into()));
    }
    if u.is_zero() || matches!(u.base(), FieldBase::Constant(_)) {
        let zero = Estimate::exact(0.0);
        return Ok(CutoffBlocks { inner: zero, cross: zero, outer: 0.0, total: zero });
    }
    let (components, _) = pair_components(u, &c, d, params)?;
    let (p, alpha) = (params.p, params.nf() + params.sp());
    let block = |inside: bool, spec: &QuadSpec| {
        run_pairs(
            &components,
            params.n,
            |x, y| {
                if dist(x, &c) >= d || (dist(y, &c) < d) != inside {
                    return 0.0;
                }
                let dphi = phi.diff(x, y);
                if dphi == 0.0 {
                    return 0.0;
                }
                u.diff(x, y).abs().powf(p - 1.0) * dphi.abs() * kernel(x, y, alpha)
            },
            spec,
        )
    };
    let inner = block(true, spec)?;
    let cross = block(false, &spec.with_seed(spec.seed.wrapping_add(1)))?;
    let total = inner.plus(cross.scale(2.0));
    Ok(CutoffBlocks { inner, cross, outer: 0.0, total })
}

pub fn cutoff_bracket(u: &ScalarField, r: f64, params: &Params, spec: &QuadSpec) -> Result<Estimate> {
    cutoff_bracket_blocks(u, r, params, spec).map(|b| b.total)
}

/// `∫_{B_r} u^q`.
pub fn ring_mass(u: &ScalarField, q: f64, r: f64, spec: &QuadSpec) -> Result<Estimate> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    let n = u.dim();
    let om = crate::quad::sphere_measure(n);
    if let Some(f) = u.centered_profile() {
        let a = u.amplitude();
        let lam = u.dilation();
        let flag = f.singular_at_origin();
        let g = |t: f64| (a * f.value(lam * t)).powf(q) * t.powi(n as i32 - 1) * om;
        let mut pts = vec![0.0, r];
        if let Some(support) = f.support_radius() {
            let edge = support / lam;
            if edge < r {
                pts = vec![0.0, edge, r];
            }
        }
        let flags: Vec<bool> = pts.iter().enumerate().map(|(i, _)| i == 0 && flag).collect();
        return integrate_breaks(g, &pts, &flags, spec.tol(), spec.max_evals).map(|q| q.estimate);
    }
    if let FieldBase::Constant(_) = u.base() {
        let v = u.value(&vec![0.0; n]).powf(q);
        return Ok(Estimate::exact(v * crate::quad::ball_volume(n) * r.powi(n as i32)));
    }
    let law = RadialLaw::new(vec![0.0; n], r, n as f64, None);
    crate::quad::mc_integrate(n, &law, |x| u.value(x).powf(q), spec)
}
