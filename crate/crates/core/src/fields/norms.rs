use std::cell::RefCell;

use super::{FieldBase, ScalarField};
use crate::error::{Error, Result};
use crate::params::Params;
use crate::quad::mc::{BoxUniform, DiagonalPair, ProductPair, RadialLaw, Symmetrized};
use crate::quad::{
    dist, integrate_breaks, integrate_nested, mc_stratified, norm, sphere_measure, Density, Estimate,
    QuadSpec,
};

/// `∫ |u(x)|^{p-1} (1+|x|)^{-n-sp} dx`.
pub fn tail_norm(u: &ScalarField, params: &Params, spec: &QuadSpec) -> Result<Estimate> {
    params.validate()?;
    let n = params.n;
    if u.dim() != n {
        return Err(Error::Domain(format!("field dimension {} vs n = {n}", u.dim())));
    }
    let (p, sp) = (params.p, params.sp());
    let tail = u.tail_bound();
    if (p - 1.0) * tail.gamma >= sp {
        return Err(Error::Divergence(format!(
            "growth exponent {} is not below sp/(p-1) = {}",
            tail.gamma,
            sp / (p - 1.0)
        )));
    }
    if let Some(e) = u.singular_exponent() {
        if n as f64 + (p - 1.0) * e <= 0.0 {
            return Err(Error::Divergence(format!("|u|^(p-1) is not locally integrable (exponent {e})")));
        }
    }
    if u.is_zero() {
        return Ok(Estimate::exact(0.0));
    }
    let nf = n as f64;
    let weight = move |r: f64| (1.0 + r).powf(-nf - sp);
    let singular = u.singular_exponent().is_some();

    if let Some(profile) = u.centered_profile() {
        let (a, lam) = (u.amplitude(), u.dilation());
        let om = sphere_measure(n);
        let g = |r: f64| {
            if r == 0.0 {
                return 0.0;
            }
            om * (a * profile.value(lam * r)).abs().powf(p - 1.0) * weight(r) * r.powi(n as i32 - 1)
        };
        let mut points = vec![0.0, 1.0 / lam];
        if let Some(sr) = profile.support_radius() {
            points.push(sr / lam);
        }
        points.push(f64::INFINITY);
        points.sort_by(f64::total_cmp);
        points.dedup();
        let mut flags = vec![false; points.len()];
        flags[0] = singular;
        return integrate_breaks(g, &points, &flags, spec.tol(), spec.max_evals).map(|q| q.estimate);
    }
    if let FieldBase::Constant(c) = u.base() {
        let c = (c * u.amplitude()).abs().powf(p - 1.0);
        let om = sphere_measure(n);
        let g = |r: f64| om * c * weight(r) * r.powi(n as i32 - 1);
        return integrate_breaks(g, &[0.0, 1.0, f64::INFINITY], &[false; 3], spec.tol(), spec.max_evals)
            .map(|q| q.estimate);
    }
    let integrand = |x: &[f64]| u.value(x).abs().powf(p - 1.0) * weight(norm(x));
    let sing = u.singular_points();
    if n == 1 {
        let mut points: Vec<f64> = sing.iter().map(|s| s[0]).collect();
        points.extend([f64::NEG_INFINITY, 0.0, u.center()[0], f64::INFINITY]);
        points.sort_by(f64::total_cmp);
        points.dedup();
        let flags: Vec<bool> = points.iter().map(|x| sing.iter().any(|s| s[0] == *x)).collect();
        return integrate_breaks(|x| integrand(&[x]), &points, &flags, spec.tol(), spec.max_evals)
            .map(|q| q.estimate);
    }
    let bulk = RadialLaw::new(vec![0.0; n], 1.0 + norm(u.center()), nf, Some(sp - (p - 1.0) * tail.gamma));
    let mut components: Vec<(String, Box<dyn Density>)> = vec![("bulk".into(), Box::new(bulk))];
    if let Some(e) = u.singular_exponent() {
        let a = (nf + (p - 1.0) * e).max(0.05 * nf);
        for (k, s) in sing.iter().enumerate() {
            let law = RadialLaw::new(s.clone(), 1.0 / u.dilation(), a, None);
            components.push((format!("singular-{k}"), Box::new(law)));
        }
    }
    let refs: Vec<(&str, &dyn Density)> = components.iter().map(|(n, d)| (n.as_str(), d.as_ref() as &dyn Density)).collect();
    mc_stratified(n, &refs, integrand, spec).map(|s| s.estimate)
}

/// `∬_{B×B} |u(x) - u(y)|^p |x - y|^{-n-sp} dx dy` over the box `B`.
pub fn gagliardo_energy(u: &ScalarField, domain: &BoxUniform, s: f64, p: f64, spec: &QuadSpec) -> Result<Estimate> {
    let n = u.dim();
    if domain.dim() != n {
        return Err(Error::Domain(format!("box dimension {} vs field dimension {n}", domain.dim())));
    }
    if !(s > 0.0 && s < 1.0 && p > 1.0) {
        return Err(Error::Domain(format!("s = {s}, p = {p}")));
    }
    if domain.volume() <= 0.0 {
        return Err(Error::EmptyRegion);
    }
    if u.is_zero() || matches!(u.base(), FieldBase::Constant(_)) {
        return Ok(Estimate::exact(0.0));
    }
    let nf = n as f64;
    let sp = s * p;
    let inside: Vec<Vec<f64>> = u.singular_points().into_iter().filter(|x| domain.contains(x)).collect();
    if !inside.is_empty() {
        let e = u.singular_exponent().unwrap_or(0.0);
        if nf + p * e - sp <= 0.0 {
            return Err(Error::Divergence(format!("seminorm diverges at the singular points (exponent {e})")));
        }
    }
    let kernel = |d: f64| d.powf(-nf - sp);

    if n == 1 {
        let (lo, hi) = (domain.lo[0], domain.hi[0]);
        let sing: Vec<f64> = inside.iter().map(|x| x[0]).collect();
        let breaks = |extra: Option<f64>| {
            let mut pts = vec![lo, hi];
            pts.extend(&sing);
            pts.extend(extra);
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            let flags: Vec<bool> = pts.iter().map(|v| Some(*v) == extra || sing.contains(v)).collect();
            (pts, flags)
        };
        let inner_tol = crate::quad::Tol { rel: 0.25 * spec.rel_tol, ..spec.magnitude_tol() };
        let (pts, flags) = breaks(None);
        return integrate_nested(
            |x| {
                if sing.contains(&x) {
                    return Ok(Estimate::exact(0.0));
                }
                let (pts, flags) = breaks(Some(x));
                integrate_breaks(
                    |y| {
                        if y == x {
                            0.0
                        } else {
                            u.diff(&[x], &[y]).abs().powf(p) * kernel((x - y).abs())
                        }
                    },
                    &pts,
                    &flags,
                    inner_tol,
                    spec.max_evals,
                )
                .map(|q| q.estimate)
            },
            &pts,
            &flags,
            spec.tol(),
            spec.max_evals,
        );
    }

    let diameter = dist(&domain.lo, &domain.hi);
    let failure = RefCell::new(None::<Error>);
    let integrand = |z: &[f64]| {
        let (x, y) = z.split_at(n);
        if !domain.contains(x) || !domain.contains(y) {
            return 0.0;
        }
        let d = dist(x, y);
        if d == 0.0 {
            return 0.0;
        }
        u.diff(x, y).abs().powf(p) * kernel(d)
    };
    let diagonal = DiagonalPair {
        base: domain.clone(),
        a: (1.0 - s) * p,
        b: None,
        beta: 1.0,
        anchors: Vec::new(),
        r_min: diameter,
        r_max: diameter,
    };
    let mut components: Vec<(String, Box<dyn Density>)> = vec![("diagonal".into(), Box::new(diagonal))];
    if let Some(e) = u.singular_exponent() {
        let a = (nf + p * e - sp).max(0.05 * nf).min(nf);
        for (k, x0) in inside.iter().enumerate() {
            let near = RadialLaw::new(x0.clone(), diameter, a, None);
            let pair = Symmetrized(ProductPair { x: near, y: domain.clone() });
            components.push((format!("singular-{k}"), Box::new(pair)));
        }
    }
    let refs: Vec<(&str, &dyn Density)> = components.iter().map(|(n, d)| (n.as_str(), d.as_ref() as &dyn Density)).collect();
    let out = mc_stratified(2 * n, &refs, integrand, spec).map(|s| s.estimate);
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    out
}

/// `[u]_{W^{s,p}(B)}`, the `p`-th root of [`gagliardo_energy`].
pub fn gagliardo_seminorm(u: &ScalarField, domain: &BoxUniform, s: f64, p: f64, spec: &QuadSpec) -> Result<Estimate> {
    let e = gagliardo_energy(u, domain, s, p, spec)?;
    let value = e.value.max(0.0).powf(1.0 / p);
    let error = if value > 0.0 { e.error / (p * value.powf(p - 1.0)) } else { e.error.powf(1.0 / p) };
    Ok(Estimate { value, error, ..e })
}
