use std::fmt;
use std::sync::Arc;

use super::profile::{RadialProfile, TailBound};
use crate::error::{Error, Result};
use crate::quad::{dist, norm};

type PointMap = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradMap = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type BallBound = dyn Fn(&[f64], f64) -> f64 + Send + Sync;

/// A field given by closures plus the smoothness metadata the evaluators need.
#[derive(Clone)]
pub struct CustomField {
    pub name: String,
    pub value: Arc<PointMap>,
    pub gradient: Arc<GradMap>,
    /// `(center, radius) ↦` bound on the second derivatives over the ball.
    pub hessian_bound: Arc<BallBound>,
    pub tail: TailBound,
    pub singular_points: Vec<Vec<f64>>,
    pub holder: f64,
    /// Ball `(center, radius)` outside of which the field vanishes.
    pub support: Option<(Vec<f64>, f64)>,
}

impl fmt::Debug for CustomField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomField").field("name", &self.name).finish_non_exhaustive()
    }
}

impl PartialEq for CustomField {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && Arc::ptr_eq(&self.value, &other.value)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldBase {
    Constant(f64),
    Affine { gradient: Vec<f64>, offset: f64 },
    Radial(RadialProfile),
    Custom(CustomField),
}

/// `u(x) = amplitude · base(dilation · (x - center))` on `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    n: usize,
    base: FieldBase,
    amplitude: f64,
    center: Vec<f64>,
    dilation: f64,
}

impl ScalarField {
    pub fn new(n: usize, base: FieldBase) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("fields need n ≥ 1".into()));
        }
        match &base {
            FieldBase::Affine { gradient, .. } if gradient.len() != n => {
                return Err(Error::Domain(format!("affine gradient has {} entries for n = {n}", gradient.len())))
            }
            FieldBase::Radial(p) if p.dim() != n => {
                return Err(Error::Domain(format!("profile lives in dimension {}, not {n}", p.dim())))
            }
            _ => {}
        }
        Ok(Self { n, base, amplitude: 1.0, center: vec![0.0; n], dilation: 1.0 })
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::new(n, FieldBase::Constant(c)).expect("n ≥ 1")
    }

    pub fn affine(gradient: Vec<f64>, offset: f64) -> Result<Self> {
        Self::new(gradient.len(), FieldBase::Affine { gradient, offset })
    }

    /// `λ·u`.
    pub fn scaled(mut self, lambda: f64) -> Self {
        self.amplitude *= lambda;
        self
    }

    /// `x ↦ u(λx)`.
    pub fn dilated(mut self, lambda: f64) -> Self {
        assert!(lambda > 0.0, "dilation must be positive");
        self.dilation *= lambda;
        self.center.iter_mut().for_each(|c| *c /= lambda);
        self
    }

    /// `x ↦ u(x - v)`.
    pub fn shifted(mut self, v: &[f64]) -> Self {
        self.center.iter_mut().zip(v).for_each(|(c, d)| *c += d);
        self
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn base(&self) -> &FieldBase {
        &self.base
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn dilation(&self) -> f64 {
        self.dilation
    }

    pub fn radial_profile(&self) -> Option<&RadialProfile> {
        match &self.base {
            FieldBase::Radial(p) => Some(p),
            _ => None,
        }
    }

    /// The profile when `u(x) = a·f(λ|x|)`.
    pub fn centered_profile(&self) -> Option<&RadialProfile> {
        self.radial_profile().filter(|_| self.center.iter().all(|c| *c == 0.0))
    }

    fn local(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(v, c)| self.dilation * (v - c)).collect()
    }

    fn local_radius(&self, x: &[f64]) -> f64 {
        self.dilation * dist(x, &self.center)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let v = match &self.base {
            FieldBase::Constant(c) => *c,
            FieldBase::Affine { gradient, offset } => {
                offset + gradient.iter().zip(self.local(x)).map(|(g, z)| g * z).sum::<f64>()
            }
            FieldBase::Radial(p) => p.value(self.local_radius(x)),
            FieldBase::Custom(c) => (c.value)(&self.local(x)),
        };
        self.amplitude * v
    }

    /// `u(x) - u(y)`, free of cancellation for radial power-type profiles.
    pub fn diff(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.base {
            FieldBase::Constant(_) => 0.0,
            FieldBase::Affine { gradient, .. } => {
                self.amplitude * self.dilation * gradient.iter().zip(x.iter().zip(y)).map(|(g, (a, b))| g * (a - b)).sum::<f64>()
            }
            FieldBase::Radial(p) => self.amplitude * p.diff(self.local_radius(x), self.local_radius(y)),
            FieldBase::Custom(_) => self.value(x) - self.value(y),
        }
    }

    /// `u(x) - u(x + z)`, accurate for small offsets `z`.
    pub fn diff_offset(&self, x: &[f64], z: &[f64]) -> f64 {
        match &self.base {
            FieldBase::Constant(_) => 0.0,
            FieldBase::Affine { gradient, .. } => {
                -self.amplitude * self.dilation * gradient.iter().zip(z).map(|(g, v)| g * v).sum::<f64>()
            }
            FieldBase::Radial(p) => {
                let xi = self.local(x);
                let lam = self.dilation;
                let a = norm(&xi);
                let gap: f64 = xi.iter().zip(z).map(|(c, v)| (2.0 * c + lam * v) * lam * v).sum();
                if gap < -0.75 * a * a {
                    // a² + gap cancels; take |y| from the coordinates
                    let b = xi.iter().zip(z).map(|(c, v)| (c + lam * v).powi(2)).sum::<f64>().sqrt();
                    return self.amplitude * p.diff(a, b);
                }
                self.amplitude * p.diff_gap(a, gap)
            }
            FieldBase::Custom(_) => {
                let y: Vec<f64> = x.iter().zip(z).map(|(a, b)| a + b).collect();
                self.value(x) - self.value(&y)
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let scale = self.amplitude * self.dilation;
        let g = match &self.base {
            FieldBase::Constant(_) => vec![0.0; self.n],
            FieldBase::Affine { gradient, .. } => gradient.clone(),
            FieldBase::Radial(p) => {
                let z = self.local(x);
                let r = norm(&z);
                if r == 0.0 {
                    if p.singular_at_origin() {
                        return Err(Error::Singularity(x.to_vec()));
                    }
                    vec![0.0; self.n]
                } else {
                    let d = p.d1(r) / r;
                    z.iter().map(|v| d * v).collect()
                }
            }
            FieldBase::Custom(c) => {
                let z = self.local(x);
                if c.singular_points.iter().any(|s| dist(s, &z) == 0.0) {
                    return Err(Error::Singularity(x.to_vec()));
                }
                (c.gradient)(&z)
            }
        };
        Ok(g.into_iter().map(|v| scale * v).collect())
    }

    /// Bound on all second derivatives over the ball `B(center, radius)`.
    pub fn hessian_bound(&self, center: &[f64], radius: f64) -> f64 {
        let scale = self.amplitude.abs() * self.dilation * self.dilation;
        let b = match &self.base {
            FieldBase::Constant(_) | FieldBase::Affine { .. } => 0.0,
            FieldBase::Radial(p) => {
                let r = self.local_radius(center);
                let rho = self.dilation * radius;
                p.hessian_sup((r - rho).max(0.0), r + rho)
            }
            FieldBase::Custom(c) => (c.hessian_bound)(&self.local(center), self.dilation * radius),
        };
        if scale == 0.0 {
            0.0
        } else {
            scale * b
        }
    }

    pub fn singular_points(&self) -> Vec<Vec<f64>> {
        let back = |z: &[f64]| -> Vec<f64> { z.iter().zip(&self.center).map(|(v, c)| c + v / self.dilation).collect() };
        match &self.base {
            FieldBase::Radial(p) if p.singular_at_origin() => vec![self.center.clone()],
            FieldBase::Custom(c) => c.singular_points.iter().map(|z| back(z)).collect(),
            _ => Vec::new(),
        }
    }

    /// Distance from `x` to the nearest declared singular point.
    pub fn smoothness_radius(&self, x: &[f64]) -> f64 {
        self.singular_points().iter().map(|s| dist(x, s)).fold(f64::INFINITY, f64::min)
    }

    /// Hölder exponent of the gradient away from singular points.
    pub fn holder_exponent(&self) -> f64 {
        match &self.base {
            FieldBase::Custom(c) => c.holder,
            _ => 1.0,
        }
    }

    /// `|u| ~ |x - x₀|^e` near the singular points.
    pub fn singular_exponent(&self) -> Option<f64> {
        match &self.base {
            FieldBase::Radial(p) => p.origin_exponent(),
            FieldBase::Custom(c) if !c.singular_points.is_empty() => Some(c.tail.gamma.min(0.0)),
            _ => None,
        }
    }

    /// `|u(x)| ≤ C(1+|x|)^γ` for `|x| ≥ from_radius`.
    pub fn tail_bound(&self) -> TailBound {
        let a = self.amplitude.abs();
        let lam = self.dilation;
        let c_norm = norm(&self.center);
        match &self.base {
            FieldBase::Constant(c) => TailBound { gamma: 0.0, constant: a * c.abs(), from_radius: 0.0 },
            FieldBase::Affine { gradient, offset } => TailBound {
                gamma: 1.0,
                constant: a * (lam * norm(gradient) * (1.0 + c_norm) + offset.abs()),
                from_radius: 0.0,
            },
            FieldBase::Radial(_) | FieldBase::Custom(_) => {
                let t = match &self.base {
                    FieldBase::Radial(p) => p.tail(),
                    FieldBase::Custom(c) => c.tail,
                    _ => unreachable!(),
                };
                // compare (1 + λ|x-c|) with (1 + |x|)
                let k = if t.gamma >= 0.0 {
                    (lam.max(1.0) * (1.0 + c_norm)).powf(t.gamma)
                } else {
                    ((1.0 + c_norm) * (1.0 / lam).max(1.0)).powf(-t.gamma)
                };
                let from_radius = if t.from_radius > 0.0 { c_norm + t.from_radius / lam } else { 0.0 };
                TailBound { gamma: t.gamma, constant: a * t.constant * k, from_radius }
            }
        }
    }

    /// Ball outside of which `u` vanishes identically.
    pub fn support(&self) -> Option<(Vec<f64>, f64)> {
        match &self.base {
            FieldBase::Constant(c) if *c == 0.0 => Some((self.center.clone(), 0.0)),
            FieldBase::Radial(p) => p.support_radius().map(|r| (self.center.clone(), r / self.dilation)),
            FieldBase::Custom(CustomField { support: Some((z, r)), .. }) => {
                Some((z.iter().zip(&self.center).map(|(v, c)| c + v / self.dilation).collect(), r / self.dilation))
            }
            _ if self.amplitude == 0.0 => Some((self.center.clone(), 0.0)),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.amplitude == 0.0 || matches!(self.base, FieldBase::Constant(c) if c == 0.0)
    }
}

/// `x ↦ f(|x|)` in the profile's dimension.
pub fn make_field(profile: &RadialProfile) -> ScalarField {
    ScalarField::new(profile.dim(), FieldBase::Radial(profile.clone())).expect("profile dimension")
}

/// `φ_r(x) = η(|x|/r)`: 1 on `B(0, r)`, supported in `B(0, 2r)`.
pub fn cutoff_field(n: usize, r: f64) -> Result<ScalarField> {
    Ok(make_field(&RadialProfile::cutoff(n, r)?))
}
