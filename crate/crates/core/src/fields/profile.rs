use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::mollifier;
use crate::error::{Error, Result};
use crate::params::Params;

/// `|f(r)| ≤ constant · (1 + r)^gamma` for `r ≥ from_radius`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailBound {
    pub gamma: f64,
    pub constant: f64,
    pub from_radius: f64,
}

type RadialMap = dyn Fn(f64) -> [f64; 3] + Send + Sync;

/// User-supplied radial profile: `eval(r)` returns value, first and second
/// derivative.
#[derive(Clone)]
pub struct CustomProfile {
    pub name: String,
    pub eval: Arc<RadialMap>,
    pub singular_at_origin: bool,
    pub tail: TailBound,
}

impl fmt::Debug for CustomProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomProfile").field("name", &self.name).finish_non_exhaustive()
    }
}

impl PartialEq for CustomProfile {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.eval, &other.eval)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProfileKind {
    /// `r^{(sp-n)/(p-1)}`, `sp < n`.
    FundamentalPower,
    /// `ln(1/r)`, `sp = n`.
    FundamentalLog,
    /// `(1 + r²)^{(sp-n+σ)/(2(p-1))}`.
    PerturbedPower,
    /// `(1/r₀² + ρ²)^{(sp-n+σ)/(2(p-1))}`.
    ScaledPerturbed { r0: f64 },
    /// `η(r/R)`.
    SmoothCutoff { radius: f64 },
    /// `exp(-r²/w²)`.
    GaussianBump { width: f64 },
    /// `r^β`.
    HomogeneousPower { beta: f64 },
    Custom(CustomProfile),
}

/// A radial function of `r = |x|` in `R^n` with exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    kind: ProfileKind,
    n: usize,
    params: Option<Params>,
    /// Power for the power-type kinds, 0 otherwise.
    exponent: f64,
    /// Additive constant inside the perturbed kinds.
    shift: f64,
}

impl RadialProfile {
    pub fn fundamental(params: &Params) -> Result<Self> {
        params.validate()?;
        let n = params.nf();
        let sp = params.sp();
        if (sp - n).abs() <= crate::params::CRITICAL_REL_TOL * n {
            return Ok(Self { kind: ProfileKind::FundamentalLog, n: params.n, params: Some(*params), exponent: 0.0, shift: 0.0 });
        }
        if sp > n {
            return Err(Error::Regime(format!("fundamental profile needs sp ≤ n, got sp = {sp}, n = {n}")));
        }
        Ok(Self {
            kind: ProfileKind::FundamentalPower,
            n: params.n,
            params: Some(*params),
            exponent: params.fundamental_exponent(),
            shift: 0.0,
        })
    }

    pub fn perturbed(params: &Params, sigma: f64) -> Result<Self> {
        Self::perturbed_kind(params, sigma, None)
    }

    pub fn scaled_perturbed(params: &Params, sigma: f64, r0: f64) -> Result<Self> {
        if !(r0 > 0.0) {
            return Err(Error::Domain(format!("scaled perturbed profile needs r0 > 0, got {r0}")));
        }
        Self::perturbed_kind(params, sigma, Some(r0))
    }

    fn perturbed_kind(params: &Params, sigma: f64, r0: Option<f64>) -> Result<Self> {
        params.validate()?;
        if !(sigma > 0.0) {
            return Err(Error::Domain(format!("σ must be positive, got {sigma}")));
        }
        let params = params.with_sigma(sigma)?;
        let (kind, shift) = match r0 {
            None => (ProfileKind::PerturbedPower, 1.0),
            Some(r0) => (ProfileKind::ScaledPerturbed { r0 }, 1.0 / (r0 * r0)),
        };
        Ok(Self { kind, n: params.n, params: Some(params), exponent: 0.5 * params.perturbed_exponent(sigma), shift })
    }

    pub fn cutoff(n: usize, radius: f64) -> Result<Self> {
        check_positive("cutoff radius", radius)?;
        Ok(Self { kind: ProfileKind::SmoothCutoff { radius }, n, params: None, exponent: 0.0, shift: 0.0 })
    }

    pub fn gaussian(n: usize, width: f64) -> Result<Self> {
        check_positive("bump width", width)?;
        Ok(Self { kind: ProfileKind::GaussianBump { width }, n, params: None, exponent: 0.0, shift: 0.0 })
    }

    pub fn homogeneous(n: usize, beta: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::Domain(format!("homogeneous exponent {beta}")));
        }
        Ok(Self { kind: ProfileKind::HomogeneousPower { beta }, n, params: None, exponent: beta, shift: 0.0 })
    }

    pub fn custom(n: usize, custom: CustomProfile) -> Self {
        Self { kind: ProfileKind::Custom(custom), n, params: None, exponent: 0.0, shift: 0.0 }
    }

    pub fn kind(&self) -> &ProfileKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> Option<&Params> {
        self.params.as_ref()
    }

    /// Exponent of the power-type kinds (`(sp-n)/(p-1)`, `(sp-n+σ)/(2(p-1))`
    /// or `β`).
    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    pub fn value(&self, r: f64) -> f64 {
        let e = self.exponent;
        match &self.kind {
            ProfileKind::FundamentalPower | ProfileKind::HomogeneousPower { .. } => r.powf(e),
            ProfileKind::FundamentalLog => -r.ln(),
            ProfileKind::PerturbedPower | ProfileKind::ScaledPerturbed { .. } => (self.shift + r * r).powf(e),
            ProfileKind::SmoothCutoff { radius } => mollifier::eta(r / radius),
            ProfileKind::GaussianBump { width } => (-(r / width).powi(2)).exp(),
            ProfileKind::Custom(c) => (c.eval)(r)[0],
        }
    }

    pub fn d1(&self, r: f64) -> f64 {
        let e = self.exponent;
        match &self.kind {
            ProfileKind::FundamentalPower | ProfileKind::HomogeneousPower { .. } => {
                if e == 0.0 {
                    0.0
                } else {
                    e * r.powf(e - 1.0)
                }
            }
            ProfileKind::FundamentalLog => -1.0 / r,
            ProfileKind::PerturbedPower | ProfileKind::ScaledPerturbed { .. } => {
                2.0 * e * r * (self.shift + r * r).powf(e - 1.0)
            }
            ProfileKind::SmoothCutoff { radius } => mollifier::eta_d1(r / radius) / radius,
            ProfileKind::GaussianBump { width } => -2.0 * r / (width * width) * self.value(r),
            ProfileKind::Custom(c) => (c.eval)(r)[1],
        }
    }

    pub fn d2(&self, r: f64) -> f64 {
        let e = self.exponent;
        match &self.kind {
            ProfileKind::FundamentalPower | ProfileKind::HomogeneousPower { .. } => {
                if e == 0.0 || e == 1.0 {
                    0.0
                } else {
                    e * (e - 1.0) * r.powf(e - 2.0)
                }
            }
            ProfileKind::FundamentalLog => 1.0 / (r * r),
            ProfileKind::PerturbedPower | ProfileKind::ScaledPerturbed { .. } => {
                let q = self.shift + r * r;
                2.0 * e * q.powf(e - 1.0) + 4.0 * e * (e - 1.0) * r * r * q.powf(e - 2.0)
            }
            ProfileKind::SmoothCutoff { radius } => mollifier::eta_d2(r / radius) / (radius * radius),
            ProfileKind::GaussianBump { width } => {
                let w2 = width * width;
                (4.0 * r * r / (w2 * w2) - 2.0 / w2) * self.value(r)
            }
            ProfileKind::Custom(c) => (c.eval)(r)[2],
        }
    }

    /// `f(a) - f(b)` without cancellation for the power-type kinds.
    pub fn diff(&self, a: f64, b: f64) -> f64 {
        if a == b {
            return 0.0;
        }
        let e = self.exponent;
        match &self.kind {
            ProfileKind::FundamentalPower | ProfileKind::HomogeneousPower { .. } => {
                if a == 0.0 || b == 0.0 {
                    return self.value(a) - self.value(b);
                }
                -a.powf(e) * (e * (b / a).ln()).exp_m1()
            }
            ProfileKind::FundamentalLog => (b / a).ln(),
            ProfileKind::PerturbedPower | ProfileKind::ScaledPerturbed { .. } => {
                let qa = self.shift + a * a;
                let log_ratio = ((b - a) * (b + a) / qa).ln_1p();
                -qa.powf(e) * (e * log_ratio).exp_m1()
            }
            _ => self.step_diff(a, b - a),
        }
    }

    /// `f(a) - f(a + h)` for the kinds without a closed-form difference.
    fn step_diff(&self, a: f64, h: f64) -> f64 {
        let b = a + h;
        let scale = match &self.kind {
            ProfileKind::SmoothCutoff { radius } => *radius,
            ProfileKind::GaussianBump { width } => *width,
            _ => a.abs().max(b.abs()),
        };
        if h.abs() > 0.01 * scale {
            return self.value(a) - self.value(b);
        }
        // -∫_a^b f' by five-point Gauss-Legendre
        const X: [f64; 3] = [0.0, 0.538_469_310_105_683_1, 0.906_179_845_938_664];
        const W: [f64; 3] = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1];
        let m = a + 0.5 * h;
        let half = 0.5 * h;
        let mut acc = W[0] * self.d1(m);
        for k in 1..3 {
            acc += W[k] * (self.d1(m - half * X[k]) + self.d1(m + half * X[k]));
        }
        -half * acc
    }

    /// `f(a) - f(b)` where `b = sqrt(a² + gap)` and `gap` is known accurately.
    pub fn diff_gap(&self, a: f64, gap: f64) -> f64 {
        if gap == 0.0 {
            return 0.0;
        }
        let b = (a * a + gap).max(0.0).sqrt();
        if a == 0.0 {
            return self.diff(a, b);
        }
        let e = self.exponent;
        match &self.kind {
            ProfileKind::FundamentalPower | ProfileKind::HomogeneousPower { .. } => {
                -a.powf(e) * (0.5 * e * (gap / (a * a)).ln_1p()).exp_m1()
            }
            ProfileKind::FundamentalLog => 0.5 * (gap / (a * a)).ln_1p(),
            ProfileKind::PerturbedPower | ProfileKind::ScaledPerturbed { .. } => {
                let qa = self.shift + a * a;
                -qa.powf(e) * (e * (gap / qa).ln_1p()).exp_m1()
            }
            _ => self.step_diff(a, gap / (a + b)),
        }
    }

    pub fn singular_at_origin(&self) -> bool {
        match &self.kind {
            ProfileKind::FundamentalPower | ProfileKind::FundamentalLog => true,
            ProfileKind::HomogeneousPower { beta } => *beta < 2.0 && *beta != 0.0,
            ProfileKind::Custom(c) => c.singular_at_origin,
            _ => false,
        }
    }

    /// Growth `|f(r)| ~ r^e` as `r → 0` for profiles singular at the origin;
    /// the logarithm counts as `e = 0`.
    pub fn origin_exponent(&self) -> Option<f64> {
        match &self.kind {
            ProfileKind::FundamentalPower => Some(self.exponent),
            ProfileKind::HomogeneousPower { beta } if *beta < 0.0 => Some(*beta),
            ProfileKind::FundamentalLog => Some(0.0),
            ProfileKind::Custom(c) if c.singular_at_origin => Some(c.tail.gamma.min(0.0)),
            _ => None,
        }
    }

    pub fn tail(&self) -> TailBound {
        let e = self.exponent;
        match &self.kind {
            ProfileKind::FundamentalPower => TailBound { gamma: e, constant: 2f64.powf(-e), from_radius: 1.0 },
            ProfileKind::HomogeneousPower { beta } => {
                if *beta >= 0.0 {
                    TailBound { gamma: *beta, constant: 1.0, from_radius: 0.0 }
                } else {
                    TailBound { gamma: *beta, constant: 2f64.powf(-beta), from_radius: 1.0 }
                }
            }
            ProfileKind::FundamentalLog => {
                // ln(1+r) ≤ (1+r)^γ / (γ e)
                let gamma = match &self.params {
                    Some(p) => 0.5 * p.sp() / (p.p - 1.0),
                    None => 0.5,
                };
                TailBound { gamma, constant: 1.0 / (gamma * std::f64::consts::E), from_radius: 1.0 }
            }
            ProfileKind::PerturbedPower | ProfileKind::ScaledPerturbed { .. } => {
                // c + r² lies between min(c,1)(1+r)²/2 and max(c,1)(1+r)²
                let c = self.shift;
                let constant = if e <= 0.0 { (0.5 * c.min(1.0)).powf(e) } else { c.max(1.0).powf(e) };
                TailBound { gamma: 2.0 * e, constant, from_radius: 0.0 }
            }
            ProfileKind::SmoothCutoff { .. } | ProfileKind::GaussianBump { .. } => {
                TailBound { gamma: 0.0, constant: 1.0, from_radius: 0.0 }
            }
            ProfileKind::Custom(c) => c.tail,
        }
    }

    /// Radius beyond which the profile vanishes identically.
    pub fn support_radius(&self) -> Option<f64> {
        match &self.kind {
            ProfileKind::SmoothCutoff { radius } => Some(2.0 * radius),
            _ => None,
        }
    }

    /// Upper bound of `|f'(r)|/r` and `|f''(r)|` over `r ∈ [lo, hi]`, which
    /// bounds the Hessian of `x ↦ f(|x|)` on the corresponding shell.
    pub fn hessian_sup(&self, lo: f64, hi: f64) -> f64 {
        if lo <= 0.0 && self.singular_at_origin() {
            return f64::INFINITY;
        }
        let closed = match &self.kind {
            ProfileKind::SmoothCutoff { radius } => {
                Some((mollifier::eta_d2_sup() + 2.0 * mollifier::eta_d1_sup()) / (radius * radius))
            }
            ProfileKind::GaussianBump { width } => Some(2.0 / (width * width)),
            _ => None,
        };
        if let Some(c) = closed {
            return c;
        }
        let m = 256;
        let mut sup: f64 = 0.0;
        for k in 0..=m {
            let r = lo + (hi - lo) * k as f64 / m as f64;
            let slope = if r > 0.0 { (self.d1(r) / r).abs() } else { self.d2(0.0).abs() };
            sup = sup.max(slope).max(self.d2(r).abs());
        }
        1.25 * sup
    }

    pub fn descriptor(&self) -> Result<Descriptor> {
        let (kind, extra) = match &self.kind {
            ProfileKind::FundamentalPower => ("fundamental_power", json!({})),
            ProfileKind::FundamentalLog => ("fundamental_log", json!({})),
            ProfileKind::PerturbedPower => ("perturbed_power", json!({})),
            ProfileKind::ScaledPerturbed { r0 } => ("scaled_perturbed", json!({ "r0": r0 })),
            ProfileKind::SmoothCutoff { radius } => ("smooth_cutoff", json!({ "radius": radius })),
            ProfileKind::GaussianBump { width } => ("gaussian_bump", json!({ "width": width })),
            ProfileKind::HomogeneousPower { beta } => ("homogeneous_power", json!({ "beta": beta })),
            ProfileKind::Custom(c) => {
                return Err(Error::InvalidDescriptor(format!("custom profile {} has no descriptor", c.name)))
            }
        };
        let extra = match extra {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        Ok(Descriptor { kind: kind.to_string(), n: self.n, params: self.params, extra })
    }

    pub fn from_descriptor(d: &Descriptor) -> Result<Self> {
        let need_params = || d.params.ok_or_else(|| Error::InvalidDescriptor(format!("{} needs params", d.kind)));
        let extra = |key: &str| {
            d.extra
                .get(key)
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::InvalidDescriptor(format!("{} needs extra.{key}", d.kind)))
        };
        let sigma = || {
            need_params()?.sigma.ok_or_else(|| Error::InvalidDescriptor(format!("{} needs params.sigma", d.kind)))
        };
        let profile = match d.kind.as_str() {
            "fundamental_power" | "fundamental_log" => {
                let p = Self::fundamental(&need_params()?)?;
                let wanted_log = d.kind == "fundamental_log";
                if wanted_log != (p.kind == ProfileKind::FundamentalLog) {
                    return Err(Error::InvalidDescriptor(format!("{} does not match sp vs n", d.kind)));
                }
                p
            }
            "perturbed_power" => Self::perturbed(&need_params()?, sigma()?)?,
            "scaled_perturbed" => Self::scaled_perturbed(&need_params()?, sigma()?, extra("r0")?)?,
            "smooth_cutoff" => Self::cutoff(d.n, extra("radius")?)?,
            "gaussian_bump" => Self::gaussian(d.n, extra("width")?)?,
            "homogeneous_power" => Self::homogeneous(d.n, extra("beta")?)?,
            other => return Err(Error::InvalidDescriptor(format!("unknown profile kind {other:?}"))),
        };
        if profile.n != d.n {
            return Err(Error::InvalidDescriptor(format!("dimension {} disagrees with params.n = {}", d.n, profile.n)));
        }
        Ok(profile)
    }
}

fn check_positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} must be positive, got {v}")))
    }
}

/// Serializable form `{kind, params, extra}` of a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub kind: String,
    pub n: usize,
    #[serde(default)]
    pub params: Option<Params>,
    #[serde(default)]
    pub extra: Map<String, Value>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(n: usize, s: f64, p: f64) -> Params {
        Params::new(n, s, p).unwrap()
    }

    #[test]
    fn fundamental_power_value() {
        let f = RadialProfile::fundamental(&p(2, 0.5, 2.0)).unwrap();
        assert_eq!(f.kind(), &ProfileKind::FundamentalPower);
        assert!((f.value(4.0) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fundamental_switches_to_log() {
        let f = RadialProfile::fundamental(&p(1, 0.5, 2.0)).unwrap();
        assert_eq!(f.kind(), &ProfileKind::FundamentalLog);
        assert_eq!(f.value(1.0), 0.0);
        assert!(RadialProfile::fundamental(&p(1, 0.8, 2.0)).is_err());
    }

    #[test]
    fn perturbed_value_at_origin() {
        let f = RadialProfile::perturbed(&p(2, 0.5, 2.0), 0.25).unwrap();
        assert_eq!(f.value(0.0), 1.0);
        assert!(f.exponent() < 0.0);
    }

    fn all_profiles() -> Vec<RadialProfile> {
        let q = p(3, 0.4, 2.5);
        vec![
            RadialProfile::fundamental(&q).unwrap(),
            RadialProfile::fundamental(&p(2, 0.5, 4.0)).unwrap(),
            RadialProfile::perturbed(&q, 0.3).unwrap(),
            RadialProfile::scaled_perturbed(&q, 0.3, 2.0).unwrap(),
            RadialProfile::cutoff(3, 0.7).unwrap(),
            RadialProfile::gaussian(3, 1.3).unwrap(),
            RadialProfile::homogeneous(3, 0.6).unwrap(),
        ]
    }

    #[test]
    fn derivatives_match_central_differences() {
        for f in all_profiles() {
            for &r in &[0.3, 0.77, 1.0, 1.2, 2.9, 11.0] {
                let h = 1e-6 * (1.0 + r);
                let fd1 = (f.value(r + h) - f.value(r - h)) / (2.0 * h);
                let fd2 = (f.d1(r + h) - f.d1(r - h)) / (2.0 * h);
                let scale1 = f.d1(r).abs().max(1e-6);
                let scale2 = f.d2(r).abs().max(1e-6);
                assert!((fd1 - f.d1(r)).abs() < 1e-5 * scale1, "{:?} d1 at {r}", f.kind());
                assert!((fd2 - f.d2(r)).abs() < 1e-5 * scale2, "{:?} d2 at {r}", f.kind());
            }
        }
    }

    #[test]
    fn accurate_difference() {
        for f in all_profiles() {
            for &(a, b) in &[(1.0, 1.0 + 1e-9), (0.5, 2.0), (3.0, 0.1)] {
                let plain = f.value(a) - f.value(b);
                assert!((f.diff(a, b) - plain).abs() <= 1e-6 * plain.abs() + 1e-15, "{:?}", f.kind());
            }
        }
        for f in [RadialProfile::gaussian(2, 0.7).unwrap(), RadialProfile::cutoff(2, 1.0).unwrap()] {
            let (r, d) = (1.4, 2f64.powi(-40));
            let expect = -f.d1(r) * d;
            assert!((f.diff(r, r + d) - expect).abs() < 1e-9 * expect.abs(), "{:?}", f.kind());
            let gap = 2.0 * r * d + d * d;
            assert!((f.diff_gap(r, gap) - expect).abs() < 1e-9 * expect.abs(), "{:?}", f.kind());
        }
        let f = RadialProfile::perturbed(&p(2, 0.5, 2.0), 0.25).unwrap();
        // leading order e·2r·δ·(1+r²)^{e-1} for a tiny gap
        let (r, d) = (1.0, 2f64.powi(-40));
        let expect = -f.d1(r) * d;
        assert!((f.diff(r, r + d) - expect).abs() < 1e-6 * expect.abs());
    }

    #[test]
    fn tail_bounds_hold() {
        for f in all_profiles() {
            let t = f.tail();
            for k in 0..200 {
                let r = t.from_radius.max(1e-3) * 1.1f64.powi(k);
                assert!(f.value(r).abs() <= t.constant * (1.0 + r).powf(t.gamma) * (1.0 + 1e-12), "{:?} at {r}", f.kind());
            }
        }
    }

    #[test]
    fn descriptor_round_trip() {
        for f in all_profiles() {
            let d = f.descriptor().unwrap();
            let text = serde_json::to_string(&d).unwrap();
            let back: Descriptor = serde_json::from_str(&text).unwrap();
            assert_eq!(RadialProfile::from_descriptor(&back).unwrap(), f);
        }
        let bad = Descriptor { kind: "nope".into(), n: 1, params: None, extra: Map::new() };
        assert!(matches!(RadialProfile::from_descriptor(&bad), Err(Error::InvalidDescriptor(_))));
    }
}
