use super::{integrate_breaks, sphere_measure, Estimate, QuadSpec};
use crate::error::{Error, Result};
use std::f64::consts::PI;

/// `K(t) = ∫_{S^{n-1}} |e₁ - tθ|^{-α} dσ(θ)` for `t ≥ 0`, `t ≠ 1`.
///
/// For `n ≥ 2` this is reduced to the polar angle `ψ` between `θ` and `e₁`.
/// The distance is written as `(1-t)² + 4t sin²(ψ/2)` so that the peak of
/// width `|1-t|` at `ψ = 0` keeps full relative precision.
pub fn angular_kernel(t: f64, alpha: f64, n: usize, spec: &QuadSpec) -> Result<Estimate> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!("angular kernel argument t = {t}")));
    }
    if !(alpha > 0.0) || n == 0 {
        return Err(Error::Domain(format!("angular kernel with alpha = {alpha}, n = {n}")));
    }
    if t == 1.0 {
        return Err(Error::SingularArgument);
    }
    if t == 0.0 {
        return Ok(Estimate::exact(sphere_measure(n)));
    }
    if n == 1 {
        return Ok(Estimate::exact((1.0 - t).abs().powf(-alpha) + (1.0 + t).powf(-alpha)));
    }
    let gap = (1.0 - t) * (1.0 - t);
    let half_alpha = 0.5 * alpha;
    let m = (n - 2) as i32;
    let integrand = move |psi: f64| {
        let s = (0.5 * psi).sin();
        (gap + 4.0 * t * s * s).powf(-half_alpha) * psi.sin().powi(m)
    };
    let w = (1.0 - t).abs();
    let (points, flags): (Vec<f64>, Vec<bool>) = if w < 0.5 {
        // the tail ψ^{-α} off the peak spans many decades; cut it geometrically
        let mut pts = vec![0.0, w];
        while pts[pts.len() - 1] * 4.0 < PI {
            let next = pts[pts.len() - 1] * 4.0;
            pts.push(next);
        }
        pts.push(PI);
        let mut flags = vec![false; pts.len()];
        flags[0] = true;
        (pts, flags)
    } else {
        (vec![0.0, PI], vec![false, false])
    };
    let q = integrate_breaks(integrand, &points, &flags, spec.tol(), spec.max_evals)?;
    Ok(q.estimate.scale(sphere_measure(n - 1)))
}
