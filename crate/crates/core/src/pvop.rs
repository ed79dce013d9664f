//! Pointwise evaluation of `(-Δ)^s_p u(x) = p.v. ∫ h(u(x) - u(y)) |x - y|^{-n-sp} dy`.
//!
//! The principal value is realized by pairing `y = x + z` with `x - z` inside
//! a ball of radius `η`, which cancels the odd first-order part of the
//! integrand and leaves an absolutely integrable remainder.

use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fields::{h, RadialProfile, ScalarField};
use crate::params::{feasible_sigma_interval, Params};
use crate::quad::mc::RadialLaw;
use crate::quad::{
    angular_kernel, dist, integrate_breaks, integrate_nested, mc_stratified, sphere_measure, Density, Estimate,
    QuadSpec, SplitPolicy, Tol,
};

/// One pointwise evaluation.
#[derive(Debug, Clone, Copy)]
pub struct PvRequest<'a> {
    pub field: &'a ScalarField,
    pub point: &'a [f64],
    pub params: &'a Params,
    pub spec: &'a QuadSpec,
}

/// Near/far split radius at `x`.
pub fn split_radius(u: &ScalarField, x: &[f64], policy: SplitPolicy) -> f64 {
    let d = u.smoothness_radius(x);
    let standard = (d / 4.0).min(1.0);
    match policy {
        SplitPolicy::Standard => standard,
        SplitPolicy::Fixed(r) => r.min(d / 4.0),
    }
}

/// Paired near-field integrand `h(u(x)-u(x+z)) + h(u(x)-u(x-z))`, without
/// the kernel.
pub fn paired_difference(u: &ScalarField, x: &[f64], z: &[f64], p: f64) -> f64 {
    let minus: Vec<f64> = z.iter().map(|v| -v).collect();
    h(u.diff_offset(x, z), p) + h(u.diff_offset(x, &minus), p)
}

/// `(C, e)` with `|paired_difference(z)| · |z|^{-n-sp} ≤ C |z|^e` for
/// `|z| < eta`, from the gradient at `x` and the Hessian bound on the ball.
pub fn near_field_bound(u: &ScalarField, x: &[f64], eta: f64, params: &Params) -> Result<(f64, f64)> {
    let p = params.p;
    let grad = u.gradient(x)?;
    let g: f64 = grad.iter().map(|v| v * v).sum::<f64>().sqrt();
    let half_h = 0.5 * u.hessian_bound(x, eta);
    let base = -(params.n as f64) - params.sp();
    if p >= 2.0 {
        let c = 2.0 * (p - 1.0) * (2.0 * g + half_h * eta).powf(p - 2.0) * half_h;
        Ok((c, p + base))
    } else {
        let c = 2.0 * 2f64.powf(2.0 - p) * half_h.powf(p - 1.0);
        Ok((c, 2.0 * (p - 1.0) + base))
    }
}

fn check_request(u: &ScalarField, x: &[f64], params: &Params) -> Result<()> {
    params.validate()?;
    if u.dim() != params.n || x.len() != params.n {
        return Err(Error::Domain(format!(
            "field dimension {}, point dimension {}, n = {}",
            u.dim(),
            x.len(),
            params.n
        )));
    }
    let sigma = u.holder_exponent();
    if (1.0 - params.s) * params.p + sigma <= 1.0 {
        return Err(Error::Regularity(format!(
            "need σ > 1 - (1-s)p = {}, field has σ = {sigma}",
            1.0 - (1.0 - params.s) * params.p
        )));
    }
    let t = u.tail_bound();
    if (params.p - 1.0) * t.gamma >= params.sp() {
        return Err(Error::Divergence(format!("tail growth exponent {} is too large", t.gamma)));
    }
    if u.smoothness_radius(x) == 0.0 {
        return Err(Error::Singularity(x.to_vec()));
    }
    Ok(())
}

fn sub_tol(spec: &QuadSpec) -> Tol {
    Tol { rel: 0.25 * spec.rel_tol, ..spec.magnitude_tol() }
}

/// `(-Δ)^s_p u(x)`.
pub fn pv_apply(req: &PvRequest) -> Result<Estimate> {
    let PvRequest { field: u, point: x, params, spec } = *req;
    check_request(u, x, params)?;
    if u.is_zero() || matches!(u.base(), crate::fields::FieldBase::Constant(_)) {
        return Ok(Estimate::exact(0.0));
    }
    let eta = split_radius(u, x, spec.split_radius_policy);
    match params.n {
        1 => pv_line(u, x[0], eta, params, spec),
        2 => pv_plane(u, x, eta, params, spec),
        _ => pv_mc(u, x, eta, params, spec),
    }
}

/// Inner cut of the paired near field, relative to `η`.
const NEAR_CUT: f64 = 1e-4;

/// `∫_0^η I(ρ) dρ` for the paired near-field profile `I`. Below
/// `ρ_c = NEAR_CUT·η` the pair sum sits at the rounding level of its two
/// halves, so that piece uses `I(ρ) ≈ I(ρ_c) (ρ/ρ_c)^e` with
/// `e = p - 2 + σ - sp` for a `C^{1,σ}` field (`σ = 1` when `C²`).
fn near_integral<F>(inner: F, eta: f64, params: &Params, holder: f64, tol: Tol, max_evals: usize) -> Result<Estimate>
where
    F: Fn(f64) -> Result<Estimate>,
{
    let rc = NEAR_CUT * eta;
    let mut pts = vec![rc];
    while pts[pts.len() - 1] * 8.0 < eta {
        let next = pts[pts.len() - 1] * 4.0;
        pts.push(next);
    }
    pts.push(eta);
    let flags = vec![false; pts.len()];
    let body = integrate_nested(&inner, &pts, &flags, tol, max_evals)?;
    let at = inner(rc)?;
    let e = params.p - 2.0 + holder.min(1.0) - params.sp();
    let tail = at.value * rc / (e + 1.0);
    let mut out = body.plus(Estimate::exact(tail));
    out.error += (at.error * rc / (e + 1.0)).abs() + 1e-3 * tail.abs();
    Ok(out)
}

fn pv_line(u: &ScalarField, x: f64, eta: f64, params: &Params, spec: &QuadSpec) -> Result<Estimate> {
    let (p, sp) = (params.p, params.sp());
    let near = near_integral(
        |z: f64| {
            let pair = h(u.diff_offset(&[x], &[z]), p) + h(u.diff_offset(&[x], &[-z]), p);
            Ok(Estimate::exact(pair * z.powf(-1.0 - sp)))
        },
        eta,
        params,
        u.holder_exponent(),
        spec.magnitude_tol(),
        spec.max_evals,
    )?;
    let far = |y: f64| h(u.diff(&[x], &[y]), p) * (x - y).abs().powf(-1.0 - sp);
    let sing: Vec<f64> = u.singular_points().iter().map(|s| s[0]).collect();
    let mut scales = sing.clone();
    if let Some((c, r)) = u.support() {
        scales.extend([c[0] - r, c[0] + r]);
    }
    let side = |lo: f64, hi: f64| {
        let mut pts = vec![lo, hi];
        pts.extend(scales.iter().copied().filter(|v| *v > lo && *v < hi));
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        let flags: Vec<bool> = pts.iter().map(|v| sing.contains(v)).collect();
        integrate_breaks(far, &pts, &flags, spec.magnitude_tol(), spec.max_evals)
    };
    let left = side(f64::NEG_INFINITY, x - eta)?;
    let right = side(x + eta, f64::INFINITY)?;
    Ok(near.plus(left.estimate).plus(right.estimate))
}

fn pv_plane(u: &ScalarField, x: &[f64], eta: f64, params: &Params, spec: &QuadSpec) -> Result<Estimate> {
    let (p, sp) = (params.p, params.sp());
    let off = |r: f64, th: f64| [r * th.cos(), r * th.sin()];
    let inner_tol = sub_tol(spec);
    let near = near_integral(
        |r| {
            let w = r.powf(-1.0 - sp);
            integrate_breaks(
                |th| (h(u.diff_offset(x, &off(r, th)), p) + h(u.diff_offset(x, &off(r, th + PI)), p)) * w,
                &[0.0, PI],
                &[false, false],
                inner_tol,
                spec.max_evals,
            )
            .map(|q| q.estimate)
        },
        eta,
        params,
        u.holder_exponent(),
        spec.magnitude_tol(),
        spec.max_evals,
    )?;

    let sing = u.singular_points();
    let polar: Vec<(f64, f64)> = sing.iter().map(|s| (dist(s, x), (s[1] - x[1]).atan2(s[0] - x[0]))).collect();
    let mut radii = vec![eta, f64::INFINITY];
    let mut flags_r = Vec::new();
    radii.extend(polar.iter().map(|(r, _)| *r).filter(|r| *r > eta));
    if let Some((c, rad)) = u.support() {
        let d = dist(&c, x);
        radii.extend([d - rad, d + rad].into_iter().filter(|r| *r > eta));
    }
    radii.sort_by(f64::total_cmp);
    radii.dedup();
    for r in &radii {
        flags_r.push(polar.iter().any(|(rs, _)| rs == r));
    }
    // centre the angular window on the nearest singular direction
    let theta0 = polar.iter().min_by(|a, b| a.0.total_cmp(&b.0)).map_or(0.0, |(_, t)| *t);
    let far = integrate_nested(
        |r| {
            let w = r.powf(-1.0 - sp);
            let mut pts = vec![theta0 - PI, theta0 + PI];
            let mut flagged = Vec::new();
            for (rs, ts) in &polar {
                if (r - rs).abs() < 0.5 * rs {
                    let mut t = *ts;
                    while t < theta0 - PI {
                        t += 2.0 * PI;
                    }
                    while t > theta0 + PI {
                        t -= 2.0 * PI;
                    }
                    pts.push(t);
                    flagged.push(t);
                }
            }
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let flags: Vec<bool> = pts.iter().map(|t| flagged.contains(t)).collect();
            integrate_breaks(|th| h(u.diff_offset(x, &off(r, th)), p) * w, &pts, &flags, inner_tol, spec.max_evals)
                .map(|q| q.estimate)
        },
        &radii,
        &flags_r,
        spec.magnitude_tol(),
        spec.max_evals,
    )?;
    Ok(near.plus(far))
}

fn pv_mc(u: &ScalarField, x: &[f64], eta: f64, params: &Params, spec: &QuadSpec) -> Result<Estimate> {
    let n = params.n;
    let nf = n as f64;
    let (p, sp) = (params.p, params.sp());
    let tail = u.tail_bound();
    let integrand = |z: &[f64]| {
        let r: f64 = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r == 0.0 {
            return 0.0;
        }
        let k = r.powf(-nf - sp);
        if r < eta {
            0.5 * paired_difference(u, x, z, p) * k
        } else {
            let y: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
            h(u.diff(x, &y), p) * k
        }
    };
    let mut components: Vec<(String, Box<dyn Density>)> = vec![
        ("near".into(), Box::new(RadialLaw::new(vec![0.0; n], eta, ((1.0 - params.s) * p).min(nf), None))),
        (
            "far".into(),
            Box::new(RadialLaw::new(vec![0.0; n], eta, nf, Some((sp - (p - 1.0) * tail.gamma.max(0.0)).max(0.05)))),
        ),
    ];
    if let Some(e) = u.singular_exponent() {
        let a = (nf + (p - 1.0) * e).max(0.05 * nf);
        for (k, s) in u.singular_points().iter().enumerate() {
            let rel: Vec<f64> = s.iter().zip(x).map(|(a, b)| a - b).collect();
            let r0 = 0.5 * dist(s, x);
            components.push((format!("singular-{k}"), Box::new(RadialLaw::new(rel, r0, a, None))));
        }
    }
    let refs: Vec<(&str, &dyn Density)> = components.iter().map(|(n, d)| (n.as_str(), d.as_ref() as &dyn Density)).collect();
    mc_stratified(n, &refs, integrand, spec).map(|s| s.estimate)
}

fn kernel_spec(spec: &QuadSpec) -> QuadSpec {
    QuadSpec { rel_tol: 1e-10, abs_tol: 0.0, ..*spec }
}

/// `K(t)` that reports its failure through the outer quadrature.
fn kernel(t: f64, alpha: f64, n: usize, spec: &QuadSpec) -> f64 {
    angular_kernel(t, alpha, n, spec).map_or(f64::NAN, |e| e.value)
}

/// Radii at which a profile changes character, used as breakpoints.
fn feature_radii(profile: &RadialProfile) -> Vec<f64> {
    use crate::fields::ProfileKind::*;
    match profile.kind() {
        PerturbedPower => vec![1.0],
        ScaledPerturbed { r0 } => vec![1.0 / r0],
        SmoothCutoff { radius } => vec![*radius, 2.0 * radius],
        GaussianBump { width } => vec![*width],
        _ => Vec::new(),
    }
}

/// `(-Δ)^s_p f(|x|)` at `|x| = r` through the folded radial integral
/// `r^{-sp} ∫_0^1 [h(f(r)-f(rt)) t^{n-1} + h(f(r)-f(r/t)) t^{sp-1}] K(t) dt`.
pub fn pv_apply_radial(profile: &RadialProfile, r: f64, params: &Params, spec: &QuadSpec) -> Result<Estimate> {
    params.validate()?;
    if profile.dim() != params.n {
        return Err(Error::Domain(format!("profile dimension {} vs n = {}", profile.dim(), params.n)));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    let (n, p, sp) = (params.n, params.p, params.sp());
    let t = profile.tail();
    if (p - 1.0) * t.gamma >= sp {
        return Err(Error::Divergence(format!("tail growth exponent {} is too large", t.gamma)));
    }
    let alpha = n as f64 + sp;
    let kspec = kernel_spec(spec);
    let g = |t: f64| {
        // 1 - t is exact for t in [1/2, 1], so the gaps keep their relative precision
        let w = r * r * (1.0 - t) * (1.0 + t);
        let inner = h(profile.diff_gap(r, -w), p) * t.powi(n as i32 - 1);
        let outer = h(profile.diff_gap(r, w / (t * t)), p) * t.powf(sp - 1.0);
        let s = inner + outer;
        if s == 0.0 {
            0.0
        } else {
            s * kernel(t, alpha, n, &kspec)
        }
    };
    let u0 = FOLD_CUT * feature_length(profile).map_or(1.0, |l| (l / r).min(1.0));
    let mut pts = vec![0.0, 0.5, 1.0 - u0];
    for s in feature_radii(profile) {
        for t in [s / r, r / s] {
            if t > 1e-12 && t < 1.0 - u0 {
                pts.push(t);
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let mut fine = vec![0.0];
    for w in pts.windows(2) {
        let mut a = w[0];
        while a > 0.0 && w[1] / a > 8.0 {
            a *= 4.0;
            fine.push(a);
        }
        fine.push(w[1]);
    }
    let mut flags = vec![false; fine.len()];
    flags[0] = true;
    let q = integrate_breaks(g, &fine, &flags, spec.magnitude_tol(), spec.max_evals)?;
    let tail = fold_tail(profile, r, params, u0);
    let scale = r.powf(-sp);
    let mut e = q.estimate.plus(Estimate::exact(tail)).scale(scale);
    e.error += (1e-9 * q.magnitude + 10.0 * u0 * tail.abs()) * scale;
    Ok(e)
}

/// The fold is integrated up to `t = 1 - u₀`; the rest is its leading term.
const FOLD_CUT: f64 = 1e-4;

/// Length over which a profile changes, when it is not set by `r` itself.
fn feature_length(profile: &RadialProfile) -> Option<f64> {
    use crate::fields::ProfileKind::*;
    match profile.kind() {
        SmoothCutoff { radius } => Some(*radius),
        GaussianBump { width } => Some(*width),
        _ => None,
    }
}

/// `∫_{1-u₀}^1` of the folded integrand from its expansion at `t = 1`:
/// the bracket equals `h(a) u^p ((p-1)(b₁+b₂)/a + sp - n) + O(u^{p+1})` with
/// `a = f'(r) r`, `b₁ = -f''(r) r²/2`, `b₂ = -f'(r) r - f''(r) r²/2`, and
/// `K(1-u) = c u^{-1-sp} (1 + O(u))`.
fn fold_tail(profile: &RadialProfile, r: f64, params: &Params, u0: f64) -> f64 {
    let (p, sp, n) = (params.p, params.sp(), params.nf());
    let a = profile.d1(r) * r;
    if a == 0.0 || !a.is_finite() {
        return 0.0;
    }
    let f2 = profile.d2(r) * r * r;
    let b = -a - f2;
    let c1 = (p - 1.0) * b / a + sp - n;
    let ck = PI.powf(0.5 * (n - 1.0)) * gamma(0.5 * (1.0 + sp)) / gamma(0.5 * (n + sp));
    h(a, p) * c1 * ck * u0.powf(p - sp) / (p - sp)
}

pub(crate) fn check_sigma(params: &Params, sigma: f64) -> Result<f64> {
    params.validate()?;
    if params.sp() >= params.nf() {
        return Err(Error::Regime(format!("need sp < n, got sp = {}", params.sp())));
    }
    let (lo, hi) = match params.q {
        Some(_) => feasible_sigma_interval(params)?,
        None => (0.0, 0.5 * (params.nf() - params.sp())),
    };
    if !(sigma > lo && sigma < hi) {
        return Err(Error::Domain(format!("σ = {sigma} is outside the feasible interval ({lo}, {hi})")));
    }
    Ok(0.5 * params.perturbed_exponent(sigma))
}

/// `G(r) = p.v. ∫ h(g_r(e₁) - g_r(z)) |e₁ - z|^{-n-sp} dz` with
/// `g_r(z) = (1/r² + |z|²)^γ`, so that `(-Δ)^s_p f(x) = r^{σ-n} G(r)` at
/// `|x| = r`. Computed in polar coordinates about `e₁` over
/// `|z - e₁| < 1/2` (paired), `1/2 ≤ |z - e₁| ≤ 2` and the exterior.
pub fn g_of_r(params: &Params, sigma: f64, r: f64, spec: &QuadSpec) -> Result<Estimate> {
    let gamma = check_sigma(params, sigma)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    let (n, p, sp) = (params.n, params.p, params.sp());
    let c = 1.0 / (r * r);
    // g(e₁) - g(z) where |z|² - 1 = q
    let gdiff = |q: f64| -(c + 1.0).powf(gamma) * (gamma * (q / (c + 1.0)).ln_1p()).exp_m1();
    // |e₁ + ρω|² - 1 for ω at angle ψ from e₁
    let shift = |rho: f64, psi: f64| rho * (2.0 * psi.cos() + rho);
    let w = (1.0 / r).min(0.25);
    let mut radii = vec![0.5, 1.0 - w, 1.0, 1.0 + w, 2.0, f64::INFINITY];
    radii.dedup();
    let flags: Vec<bool> = radii.iter().map(|v| *v == 1.0).collect();
    let inner_tol = sub_tol(spec);
    let om = if n == 1 { 0.0 } else { sphere_measure(n - 1) };
    let m = n.saturating_sub(2) as i32;
    let sin_w = |psi: f64| psi.sin().powi(m);

    let inner = |rho: f64| -> Result<Estimate> {
        let k = rho.powf(-1.0 - sp);
        if n == 1 {
            let both = h(gdiff(shift(rho, 0.0)), p) + h(gdiff(shift(rho, PI)), p);
            return Ok(Estimate::exact(both * k));
        }
        let k = om * k;
        let q = if rho < 0.5 {
            integrate_breaks(
                |psi| (h(gdiff(shift(rho, psi)), p) + h(gdiff(shift(rho, PI - psi)), p)) * sin_w(psi) * k,
                &[0.0, 0.5 * PI],
                &[false, false],
                inner_tol,
                spec.max_evals,
            )?
        } else {
            let (pts, fl) = if rho <= 2.0 {
                let gap = (1.0 - rho).abs().max(1.0 / r).min(0.5 * PI);
                (vec![0.0, PI - gap, PI], vec![false, false, true])
            } else {
                (vec![0.0, PI], vec![false, false])
            };
            let accurate = |psi: f64| {
                // near ψ = π use |z|² = (1-ρ)² + 4ρ cos²(ψ/2)
                let cz = (0.5 * psi).cos();
                (1.0 - rho) * (1.0 - rho) + 4.0 * rho * cz * cz - 1.0
            };
            integrate_breaks(|psi| h(gdiff(accurate(psi)), p) * sin_w(psi) * k, &pts, &fl, inner_tol, spec.max_evals)?
        };
        Ok(q.estimate)
    };
    let near = near_integral(inner, 0.5, params, 1.0, spec.magnitude_tol(), spec.max_evals)?;
    let rest = integrate_nested(inner, &radii, &flags, spec.magnitude_tol(), spec.max_evals)?;
    Ok(near.plus(rest))
}

/// The two folded integrands of the limit integral at `(t, θ)`, without the
/// angular factor `|e₁ - tθ|^{-n-sp}`: the thin-shell term
/// `h(t^{2γ}-1) t^{n-σ-1}` and the main term `(t^{-σ}-1) h(t^{2γ}-1) t^{n-1}`.
pub fn g_limit_integrands(params: &Params, sigma: f64, t: f64) -> Result<(f64, f64)> {
    let gamma = check_sigma(params, sigma)?;
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!("t = {t} is outside (0, 1]")));
    }
    let n = params.nf();
    let lt = t.ln();
    let core = h((2.0 * gamma * lt).exp_m1(), params.p);
    Ok((core * t.powf(n - sigma - 1.0), (-sigma * lt).exp_m1() * core * t.powf(n - 1.0)))
}

/// `lim_{r→∞} G(r) = ∫_0^1 (t^{-σ}-1) h(t^{2γ}-1) t^{n-1} K(t) dt`.
pub fn g_limit(params: &Params, sigma: f64, spec: &QuadSpec) -> Result<Estimate> {
    check_sigma(params, sigma)?;
    let n = params.n;
    let alpha = params.nf() + params.sp();
    let kspec = kernel_spec(spec);
    let q = integrate_breaks(
        |t| {
            let (_, main) = g_limit_integrands(params, sigma, t).unwrap_or((f64::NAN, f64::NAN));
            if main == 0.0 {
                0.0
            } else {
                main * kernel(t, alpha, n, &kspec)
            }
        },
        &[0.0, 0.5, 1.0],
        &[true, false, true],
        spec.tol(),
        spec.max_evals,
    )?;
    let mut e = q.estimate;
    e.error += 1e-9 * q.magnitude;
    Ok(e)
}
