//! Problem parameters and the Liouville regime classification.
//!
//! The critical exponent `q* = n(p-1)/(n-sp)` separates the range of `q` for
//! which `(-Δ)^s_p u ≥ u^q` only admits the trivial nonnegative solution from
//! the range where explicit positive solutions exist.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when testing `q == q*`.
pub const CRITICAL_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: usize,
    pub s: f64,
    pub p: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegimeKind {
    SpAtLeastN,
    SubcriticalQ,
    CriticalQ,
    SupercriticalQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub kind: RegimeKind,
    pub q_star: Option<f64>,
}

impl Params {
    /// Validated constructor without `q` or `sigma`.
    pub fn new(n: usize, s: f64, p: f64) -> Result<Self> {
        let params = Self { n, s, p, q: None, sigma: None };
        params.validate()?;
        Ok(params)
    }

    pub fn with_q(mut self, q: f64) -> Result<Self> {
        self.q = Some(q);
        self.validate()?;
        Ok(self)
    }

    pub fn with_sigma(mut self, sigma: f64) -> Result<Self> {
        self.sigma = Some(sigma);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("dimension n must be at least 1".into()));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::Domain(format!("s = {} is outside (0, 1)", self.s)));
        }
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::Domain(format!("p = {} is outside (1, ∞)", self.p)));
        }
        if let Some(q) = self.q {
            if !(q > 0.0 && q.is_finite()) {
                return Err(Error::Domain(format!("q = {q} is outside (0, ∞)")));
            }
        }
        if let Some(sigma) = self.sigma {
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::Domain(format!("sigma = {sigma} is outside (0, ∞)")));
            }
            if !self.sigma_conditions_hold(sigma) {
                return Err(Error::Domain(format!(
                    "sigma = {sigma} violates the perturbation conditions"
                )));
            }
        }
        Ok(())
    }

    pub fn sp(&self) -> f64 {
        self.s * self.p
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// Exponent `(sp - n)/(p - 1)` of the fundamental solution.
    pub fn fundamental_exponent(&self) -> f64 {
        (self.sp() - self.nf()) / (self.p - 1.0)
    }

    /// Exponent `(sp - n + σ)/(p - 1)` of the perturbed profile at infinity.
    pub fn perturbed_exponent(&self, sigma: f64) -> f64 {
        (self.sp() - self.nf() + sigma) / (self.p - 1.0)
    }

    fn require_q(&self) -> Result<f64> {
        self.q.ok_or(Error::MissingParameter("q"))
    }

    /// Both perturbation conditions:
    /// `σ(p-1) + q(n-sp-σ) > n(p-1)` and `2σ + sp < n`.
    /// When `q` is absent only the second one is checked.
    pub fn sigma_conditions_hold(&self, sigma: f64) -> bool {
        let n = self.nf();
        let second = 2.0 * sigma + self.sp() < n;
        match self.q {
            Some(q) => {
                let first = sigma * (self.p - 1.0) + q * (n - self.sp() - sigma) > n * (self.p - 1.0);
                first && second
            }
            None => second,
        }
    }
}

/// `n(p-1)/(n-sp)`, defined for `sp < n`.
pub fn critical_exponent(params: &Params) -> Result<f64> {
    let n = params.nf();
    if params.sp() >= n {
        return Err(Error::Domain(format!(
            "critical exponent needs sp < n (sp = {}, n = {})",
            params.sp(),
            params.n
        )));
    }
    Ok(n * (params.p - 1.0) / (n - params.sp()))
}

pub fn classify(params: &Params) -> Result<Regime> {
    let q = params.require_q()?;
    if params.sp() >= params.nf() {
        return Ok(Regime { kind: RegimeKind::SpAtLeastN, q_star: None });
    }
    let q_star = critical_exponent(params)?;
    let kind = if (q - q_star).abs() <= CRITICAL_REL_TOL * q_star.abs() {
        RegimeKind::CriticalQ
    } else if q < q_star {
        RegimeKind::SubcriticalQ
    } else {
        RegimeKind::SupercriticalQ
    };
    Ok(Regime { kind, q_star: Some(q_star) })
}

fn require_supercritical(params: &Params) -> Result<f64> {
    let regime = classify(params)?;
    if regime.kind != RegimeKind::SupercriticalQ {
        return Err(Error::Regime(format!(
            "a positive supersolution needs the supercritical regime, got {:?}",
            regime.kind
        )));
    }
    params.require_q()
}

/// Open interval `(0, σ_max)` of admissible perturbation exponents.
pub fn feasible_sigma_interval(params: &Params) -> Result<(f64, f64)> {
    let q = require_supercritical(params)?;
    let n = params.nf();
    let gap = n - params.sp();
    let half_gap = gap / 2.0;
    let first = (q * gap - n * (params.p - 1.0)) / (q - params.p + 1.0);
    Ok((0.0, half_gap.min(first)))
}

/// Midpoint of the feasible interval.
pub fn select_sigma(params: &Params) -> Result<f64> {
    let (lo, hi) = feasible_sigma_interval(params)?;
    Ok(0.5 * (lo + hi))
}
