//! The fixed smooth step `η`: 1 on `[0, 1]`, 0 on `[2, ∞)`, built from the
//! mollifier `ψ(t) = exp(1/(u² - 1))`, `u = 2t - 3`, on `(1, 2)`.
//!
//! Values come from a table of cumulative integrals interpolated by cubic
//! Hermite segments with exact slopes `-ψ/Z`, limited to keep monotonicity.
//! The derivatives are closed form.

use std::sync::OnceLock;

use crate::quad::{integrate_1d, Endpoints, QuadSpec};

const NODES: usize = 2048;

struct Table {
    /// `η` at `1 + k/NODES`.
    values: Vec<f64>,
    slopes: Vec<f64>,
    norm: f64,
}

fn psi(t: f64) -> f64 {
    let u = 2.0 * t - 3.0;
    let d = u * u - 1.0;
    if d >= 0.0 {
        0.0
    } else {
        (1.0 / d).exp()
    }
}

fn psi_prime(t: f64) -> f64 {
    let u = 2.0 * t - 3.0;
    let d = u * u - 1.0;
    if d >= 0.0 {
        0.0
    } else {
        -4.0 * u / (d * d) * (1.0 / d).exp()
    }
}

fn table() -> &'static Table {
    static TABLE: OnceLock<Table> = OnceLock::new();
    TABLE.get_or_init(|| {
        let spec = QuadSpec { rel_tol: 1e-13, abs_tol: 1e-19, ..QuadSpec::default() };
        let step = 1.0 / NODES as f64;
        let mut cumulative = vec![0.0; NODES + 1];
        for k in 0..NODES {
            let a = 1.0 + k as f64 * step;
            let piece = integrate_1d(psi, a, a + step, Endpoints::NONE, &spec).expect("mollifier table").value;
            cumulative[k + 1] = cumulative[k] + piece;
        }
        let norm = cumulative[NODES];
        let values: Vec<f64> = cumulative.iter().map(|c| 1.0 - c / norm).collect();
        let mut slopes: Vec<f64> = (0..=NODES).map(|k| -psi(1.0 + k as f64 * step) / norm).collect();
        // Fritsch-Carlson limiter
        for k in 0..NODES {
            let secant = (values[k + 1] - values[k]) / step;
            if secant == 0.0 {
                slopes[k] = 0.0;
                slopes[k + 1] = 0.0;
                continue;
            }
            let (a, b) = (slopes[k] / secant, slopes[k + 1] / secant);
            let r = a * a + b * b;
            if r > 9.0 {
                let tau = 3.0 / r.sqrt();
                slopes[k] = tau * a * secant;
                slopes[k + 1] = tau * b * secant;
            }
        }
        Table { values, slopes, norm }
    })
}

/// `η(r)`.
pub fn eta(r: f64) -> f64 {
    if r <= 1.0 {
        return 1.0;
    }
    if r >= 2.0 {
        return 0.0;
    }
    let t = table();
    let x = (r - 1.0) * NODES as f64;
    let k = (x.floor() as usize).min(NODES - 1);
    let u = x - k as f64;
    let step = 1.0 / NODES as f64;
    let (y0, y1) = (t.values[k], t.values[k + 1]);
    let (m0, m1) = (t.slopes[k] * step, t.slopes[k + 1] * step);
    let u2 = u * u;
    let u3 = u2 * u;
    let v = (2.0 * u3 - 3.0 * u2 + 1.0) * y0 + (u3 - 2.0 * u2 + u) * m0 + (-2.0 * u3 + 3.0 * u2) * y1 + (u3 - u2) * m1;
    v.clamp(0.0, 1.0)
}

/// `η'(r)`.
pub fn eta_d1(r: f64) -> f64 {
    -psi(r) / table().norm
}

/// `η''(r)`.
pub fn eta_d2(r: f64) -> f64 {
    -psi_prime(r) / table().norm
}

/// `sup |η''|`, used for Hessian bounds.
pub fn eta_d2_sup() -> f64 {
    static SUP: OnceLock<f64> = OnceLock::new();
    *SUP.get_or_init(|| (0..=4000).map(|k| eta_d2(1.0 + k as f64 / 4000.0).abs()).fold(0.0, f64::max) * 1.01)
}

/// `sup |η'|`, attained at `r = 3/2`.
pub fn eta_d1_sup() -> f64 {
    eta_d1(1.5).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_and_support() {
        assert_eq!(eta(0.0), 1.0);
        assert_eq!(eta(1.0), 1.0);
        assert_eq!(eta(2.0), 0.0);
        assert_eq!(eta(3.0), 0.0);
    }

    #[test]
    fn midpoint_is_one_half_by_symmetry() {
        assert!((eta(1.5) - 0.5).abs() < 1e-13);
    }

    #[test]
    fn matches_direct_quadrature() {
        let spec = QuadSpec { rel_tol: 1e-13, abs_tol: 1e-19, ..QuadSpec::default() };
        let z = integrate_1d(psi, 1.0, 2.0, Endpoints::NONE, &spec).unwrap().value;
        for &r in &[1.05, 1.2, 1.37, 1.5, 1.61, 1.9, 1.99] {
            let direct = 1.0 - integrate_1d(psi, 1.0, r, Endpoints::NONE, &spec).unwrap().value / z;
            assert!((eta(r) - direct).abs() < 1e-12, "r = {r}");
        }
    }

    #[test]
    fn monotone_and_derivatives_consistent() {
        let mut prev = 1.0;
        for k in 0..=5000 {
            let r = 0.9 + k as f64 * 1.2 / 5000.0;
            let v = eta(r);
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        for &r in &[1.1, 1.3, 1.5, 1.7, 1.9] {
            let h = 1e-6;
            let fd = (eta(r + h) - eta(r - h)) / (2.0 * h);
            assert!((fd - eta_d1(r)).abs() < 1e-6 * eta_d1(r).abs().max(1e-3));
            let fd2 = (eta_d1(r + h) - eta_d1(r - h)) / (2.0 * h);
            assert!((fd2 - eta_d2(r)).abs() < 1e-5 * eta_d2(r).abs().max(1.0));
        }
    }
}
