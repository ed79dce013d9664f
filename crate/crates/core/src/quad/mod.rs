//! Quadrature engines shared by every integral in the crate.
//!
//! * [`integrate_1d`]: adaptive 15-point Gauss–Kronrod with geometric grading
//!   toward declared endpoint singularities, with semi-infinite support.
//! * [`angular_kernel`]: `K(t) = ∫_{S^{n-1}} |e₁ - tθ|^{-α} dσ(θ)`.
//! * [`mc_integrate`] / [`mc_stratified`]: seeded importance-sampled Monte
//!   Carlo whose result is bit-for-bit reproducible for a given seed and
//!   budget, independent of the thread count.

mod adaptive;
mod angular;
pub mod mc;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

pub use adaptive::{integrate_1d, integrate_breaks, integrate_breaks_aux, integrate_nested, Endpoints, Quadrature, Tol, TolScale};
pub use angular::angular_kernel;
pub use mc::{mc_integrate, mc_stratified, Density, StratifiedEstimate, StratumReport};

/// How the near/far split radius of the pointwise evaluator is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub enum SplitPolicy {
    /// `min(δ₀/4, d_sing/2, 1)` with `δ₀` the smoothness radius at the point
    /// and `d_sing` the distance to the nearest declared singular point.
    #[default]
    Standard,
    /// A fixed radius (still capped by the standard rule's `δ₀/4`).
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_evals: usize,
    pub mc_budget: usize,
    pub seed: u64,
    #[serde(default)]
    pub split_radius_policy: SplitPolicy,
    /// When set, Monte Carlo results whose relative standard error exceeds
    /// this value are rejected with `BudgetExceeded`.
    #[serde(default)]
    pub mc_rel_tol: Option<f64>,
}

impl Default for QuadSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-3,
            abs_tol: 1e-10,
            max_evals: 2_000_000,
            mc_budget: 1_000_000,
            seed: 0x5eed_1234,
            split_radius_policy: SplitPolicy::Standard,
            mc_rel_tol: None,
        }
    }
}

impl QuadSpec {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_budget(mut self, mc_budget: usize) -> Self {
        self.mc_budget = mc_budget;
        self
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn tol(&self) -> Tol {
        Tol { rel: self.rel_tol, abs: self.abs_tol, scale: TolScale::Value }
    }

    /// Tolerance measured against `∫|f|`, for integrals with cancellation.
    pub fn magnitude_tol(&self) -> Tol {
        Tol { rel: self.rel_tol, abs: self.abs_tol, scale: TolScale::Magnitude }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Adaptive,
    Mc,
    Hybrid,
}

/// A numerical value with its error estimate: a standard error for Monte
/// Carlo and an error bound for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
    pub method: Method,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, error: 0.0, evals: 0, method: Method::Adaptive }
    }

    pub fn scale(self, factor: f64) -> Self {
        Self { value: self.value * factor, error: self.error * factor.abs(), ..self }
    }

    /// Sum of two estimates. Standard errors of independent Monte Carlo
    /// estimates add in quadrature, everything else adds linearly.
    pub fn plus(self, other: Estimate) -> Self {
        let method = if self.method == other.method { self.method } else { Method::Hybrid };
        let error = if self.method == Method::Mc && other.method == Method::Mc {
            self.error.hypot(other.error)
        } else {
            self.error + other.error
        };
        Self { value: self.value + other.value, error, evals: self.evals + other.evals, method }
    }

    pub fn rel_error(&self) -> f64 {
        if self.value == 0.0 {
            f64::INFINITY
        } else {
            self.error / self.value.abs()
        }
    }
}

/// Surface measure `ω_{n-1}` of the unit sphere in `R^n`.
pub fn sphere_measure(n: usize) -> f64 {
    static TABLE: std::sync::OnceLock<Vec<f64>> = std::sync::OnceLock::new();
    let direct = |n: usize| {
        let half = n as f64 / 2.0;
        2.0 * std::f64::consts::PI.powf(half) / gamma(half)
    };
    match TABLE.get_or_init(|| (0..64).map(|k| if k == 0 { 0.0 } else { direct(k) }).collect()).get(n) {
        Some(v) if n > 0 => *v,
        _ => direct(n),
    }
}

/// Volume `ν_n` of the unit ball in `R^n`.
pub fn ball_volume(n: usize) -> f64 {
    sphere_measure(n) / n as f64
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}
