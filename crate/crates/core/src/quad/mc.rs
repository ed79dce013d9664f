//! Seeded importance-sampled Monte Carlo.
//!
//! Samples are drawn in batches of [`BATCH`]. Batch `b` of stratum `k` uses a
//! ChaCha8 stream keyed by the seed, with stream id `k` and word position
//! `b << 32`, so every batch is independent of the order in which the
//! thread pool executes it. Batch statistics are merged left to right.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{sphere_measure, Estimate, Method, QuadSpec};
use crate::error::{Error, Result};

pub const BATCH: usize = 4096;

/// An importance density with exact normalization.
pub trait Density: Send + Sync {
    fn dim(&self) -> usize;
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]);
    fn pdf(&self, x: &[f64]) -> f64;
}

impl<D: Density + ?Sized> Density for Box<D> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        (**self).sample(rng, out)
    }
    fn pdf(&self, x: &[f64]) -> f64 {
        (**self).pdf(x)
    }
}

fn unit_direction(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    loop {
        let mut r2 = 0.0;
        for v in out.iter_mut() {
            *v = rng.sample(StandardNormal);
            r2 += *v * *v;
        }
        if r2 > 1e-300 {
            let r = r2.sqrt();
            out.iter_mut().for_each(|v| *v /= r);
            return;
        }
    }
}

/// Open-interval uniform, never exactly 0.
fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Radially symmetric power law about `center`:
/// `ρ^{a-n}` for `ρ < r0` and `r0^{a+b} ρ^{-b-n}` beyond, with `ρ = |x - center|`.
/// Without an outer exponent the law is truncated to the ball of radius `r0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialLaw {
    pub center: Vec<f64>,
    pub r0: f64,
    pub a: f64,
    pub b: Option<f64>,
}

impl RadialLaw {
    pub fn new(center: Vec<f64>, r0: f64, a: f64, b: Option<f64>) -> Self {
        assert!(r0 > 0.0 && a > 0.0, "radial law needs r0 > 0 and a > 0");
        if let Some(b) = b {
            assert!(b > 0.0, "outer exponent must be positive");
        }
        Self { center, r0, a, b }
    }

    fn inner_share(&self) -> f64 {
        match self.b {
            Some(b) => (1.0 / self.a) / (1.0 / self.a + 1.0 / b),
            None => 1.0,
        }
    }

    fn norm(&self) -> f64 {
        let n = self.center.len();
        let shape = 1.0 / self.a + self.b.map_or(0.0, |b| 1.0 / b);
        sphere_measure(n) * self.r0.powf(self.a) * shape
    }

    /// Density as a function of the distance to the center.
    pub fn radial_pdf(&self, rho: f64) -> f64 {
        let n = self.center.len() as f64;
        let z = self.norm();
        if rho < self.r0 {
            rho.powf(self.a - n) / z
        } else {
            match self.b {
                Some(b) => self.r0.powf(self.a + b) * rho.powf(-b - n) / z,
                None => 0.0,
            }
        }
    }

    fn sample_radius(&self, rng: &mut ChaCha8Rng) -> f64 {
        let pick: f64 = rng.random();
        let u = open_uniform(rng);
        if pick < self.inner_share() {
            self.r0 * u.powf(1.0 / self.a)
        } else {
            self.r0 * u.powf(-1.0 / self.b.unwrap())
        }
    }
}

impl Density for RadialLaw {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        unit_direction(rng, out);
        let rho = self.sample_radius(rng);
        for (o, c) in out.iter_mut().zip(&self.center) {
            *o = c + rho * *o;
        }
    }
    fn pdf(&self, x: &[f64]) -> f64 {
        self.radial_pdf(super::dist(x, &self.center))
    }
}

/// Isotropic Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    pub center: Vec<f64>,
    pub sigma: f64,
}

impl Density for Gaussian {
    fn dim(&self) -> usize {
        self.center.len()
    }
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for (o, c) in out.iter_mut().zip(&self.center) {
            let z: f64 = rng.sample(StandardNormal);
            *o = c + self.sigma * z;
        }
    }
    fn pdf(&self, x: &[f64]) -> f64 {
        let n = self.center.len() as f64;
        let r2: f64 = x.iter().zip(&self.center).map(|(a, b)| (a - b) * (a - b)).sum();
        (-(r2) / (2.0 * self.sigma * self.sigma)).exp() / (2.0 * std::f64::consts::PI * self.sigma * self.sigma).powf(n / 2.0)
    }
}

/// Uniform law on an axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxUniform {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxUniform {
    pub fn cube(n: usize, lo: f64, hi: f64) -> Self {
        Self { lo: vec![lo; n], hi: vec![hi; n] }
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lo.iter().zip(&self.hi)).all(|(v, (a, b))| *v >= *a && *v <= *b)
    }
}

impl Density for BoxUniform {
    fn dim(&self) -> usize {
        self.lo.len()
    }
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        for (o, (a, b)) in out.iter_mut().zip(self.lo.iter().zip(&self.hi)) {
            let u: f64 = rng.random();
            *o = a + (b - a) * u;
        }
    }
    fn pdf(&self, x: &[f64]) -> f64 {
        if self.contains(x) {
            1.0 / self.volume()
        } else {
            0.0
        }
    }
}

/// Finite mixture `Σ w_k p_k` with weights normalized to one.
pub struct Mixture {
    parts: Vec<(f64, Box<dyn Density>)>,
}

impl Mixture {
    pub fn new(parts: Vec<(f64, Box<dyn Density>)>) -> Self {
        assert!(!parts.is_empty(), "empty mixture");
        let dim = parts[0].1.dim();
        assert!(parts.iter().all(|(w, d)| *w > 0.0 && d.dim() == dim), "mixture weights must be positive");
        let total: f64 = parts.iter().map(|(w, _)| w).sum();
        Self { parts: parts.into_iter().map(|(w, d)| (w / total, d)).collect() }
    }
}

impl Density for Mixture {
    fn dim(&self) -> usize {
        self.parts[0].1.dim()
    }
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let mut u: f64 = rng.random();
        for (w, d) in &self.parts {
            if u < *w {
                return d.sample(rng, out);
            }
            u -= w;
        }
        self.parts.last().unwrap().1.sample(rng, out);
    }
    fn pdf(&self, x: &[f64]) -> f64 {
        self.parts.iter().map(|(w, d)| w * d.pdf(x)).sum()
    }
}

/// Independent pair `(x, y)` on `R^{n+m}`.
pub struct ProductPair<A, B> {
    pub x: A,
    pub y: B,
}

impl<A: Density, B: Density> Density for ProductPair<A, B> {
    fn dim(&self) -> usize {
        self.x.dim() + self.y.dim()
    }
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let n = self.x.dim();
        self.x.sample(rng, &mut out[..n]);
        self.y.sample(rng, &mut out[n..]);
    }
    fn pdf(&self, z: &[f64]) -> f64 {
        let n = self.x.dim();
        let px = self.x.pdf(&z[..n]);
        if px == 0.0 {
            return 0.0;
        }
        px * self.y.pdf(&z[n..])
    }
}

/// Pair `(x, x + d)` concentrated near the diagonal. `x` follows `base`;
/// `d` follows a radial law with exponents `(a, b)` and break radius
/// `beta · dist(x, anchors)`, clamped to `[r_min, r_max]` (`r_max` without
/// anchors). Without `b` the offset is truncated at the break radius.
pub struct DiagonalPair<B> {
    pub base: B,
    pub a: f64,
    pub b: Option<f64>,
    pub beta: f64,
    pub anchors: Vec<Vec<f64>>,
    pub r_min: f64,
    pub r_max: f64,
}

impl<B: Density> DiagonalPair<B> {
    fn offset_law(&self, x: &[f64]) -> RadialLaw {
        let d = self
            .anchors
            .iter()
            .map(|a| super::dist(x, a))
            .fold(f64::INFINITY, f64::min);
        let r0 = if d.is_finite() { (self.beta * d).clamp(self.r_min, self.r_max) } else { self.r_max };
        RadialLaw::new(vec![0.0; x.len()], r0, self.a, self.b)
    }
}

impl<B: Density> Density for DiagonalPair<B> {
    fn dim(&self) -> usize {
        2 * self.base.dim()
    }
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        let n = self.base.dim();
        let (x, y) = out.split_at_mut(n);
        self.base.sample(rng, x);
        let law = self.offset_law(x);
        law.sample(rng, y);
        for (yi, xi) in y.iter_mut().zip(x.iter()) {
            *yi += xi;
        }
    }
    fn pdf(&self, z: &[f64]) -> f64 {
        let n = self.base.dim();
        let (x, y) = z.split_at(n);
        let px = self.base.pdf(x);
        if px == 0.0 {
            return 0.0;
        }
        let law = self.offset_law(x);
        px * law.radial_pdf(super::dist(x, y))
    }
}

/// Symmetrization of a pair density under `(x, y) ↦ (y, x)`.
pub struct Symmetrized<D>(pub D);

impl<D: Density> Density for Symmetrized<D> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn sample(&self, rng: &mut ChaCha8Rng, out: &mut [f64]) {
        self.0.sample(rng, out);
        let swap: bool = rng.random();
        if swap {
            let n = out.len() / 2;
            let (x, y) = out.split_at_mut(n);
            x.swap_with_slice(y);
        }
    }
    fn pdf(&self, z: &[f64]) -> f64 {
        let n = z.len() / 2;
        let mut w = Vec::with_capacity(z.len());
        w.extend_from_slice(&z[n..]);
        w.extend_from_slice(&z[..n]);
        0.5 * (self.0.pdf(z) + self.0.pdf(&w))
    }
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Moments = Moments { n: 0, mean: 0.0, m2: 0.0 };

    fn push(&mut self, v: f64) {
        self.n += 1;
        let d = v - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (v - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        let mean = self.mean + d * other.n as f64 / n as f64;
        let m2 = self.m2 + other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        Moments { n, mean, m2 }
    }

    fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n - 1) as f64).max(0.0)
        }
    }

    fn second_moment(&self) -> f64 {
        self.mean * self.mean + self.m2 / self.n.max(1) as f64
    }
}

fn batch_rng(seed: u64, stream: u64, batch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos((batch as u128) << 32);
    rng
}

/// Draw `count` samples of `sampler` on `stream`, mapping each to a weight.
fn run_stream<S, W>(sampler: &S, count: usize, seed: u64, stream: u64, weight: &W) -> Result<Moments>
where
    S: Density + ?Sized,
    W: Fn(&[f64]) -> Result<f64> + Sync,
{
    let dim = sampler.dim();
    let batches = count.div_ceil(BATCH);
    let parts: Vec<Result<Moments>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = batch_rng(seed, stream, b);
            let size = BATCH.min(count - b * BATCH);
            let mut point = vec![0.0; dim];
            let mut m = Moments::EMPTY;
            for _ in 0..size {
                sampler.sample(&mut rng, &mut point);
                m.push(weight(&point)?);
            }
            Ok(m)
        })
        .collect();
    let mut total = Moments::EMPTY;
    for p in parts {
        total = total.merge(p?);
    }
    Ok(total)
}

fn ratio(g: f64, q: f64, x: &[f64]) -> Result<f64> {
    if !g.is_finite() {
        return Err(Error::NonFiniteSample { point: x.to_vec() });
    }
    if g == 0.0 {
        return Ok(0.0);
    }
    if !(q > 0.0) {
        return Err(Error::ZeroDensityHit { point: x.to_vec() });
    }
    let w = g / q;
    if w.is_finite() {
        Ok(w)
    } else {
        Err(Error::NonFiniteSample { point: x.to_vec() })
    }
}

fn check_rel_tol(est: Estimate, spec: &QuadSpec) -> Result<Estimate> {
    if let Some(tol) = spec.mc_rel_tol {
        let target = tol * est.value.abs();
        if est.error > target.max(spec.abs_tol) {
            return Err(Error::BudgetExceeded { evals: est.evals, error: est.error, target });
        }
    }
    Ok(est)
}

/// Mean of `integrand / pdf` over `spec.mc_budget` draws of `sampler`.
pub fn mc_integrate<S, F>(dim: usize, sampler: &S, integrand: F, spec: &QuadSpec) -> Result<Estimate>
where
    S: Density + ?Sized,
    F: Fn(&[f64]) -> f64 + Sync,
{
    if sampler.dim() != dim {
        return Err(Error::Domain(format!("sampler dimension {} for a {dim}-dimensional integral", sampler.dim())));
    }
    if spec.mc_budget < 2 {
        return Err(Error::Domain("Monte Carlo budget must be at least 2".into()));
    }
    let weight = |x: &[f64]| ratio(integrand(x), sampler.pdf(x), x);
    let m = run_stream(sampler, spec.mc_budget, spec.seed, 0, &weight)?;
    let est = Estimate {
        value: m.mean,
        error: (m.variance() / m.n as f64).sqrt(),
        evals: m.n,
        method: Method::Mc,
    };
    check_rel_tol(est, spec)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratumReport {
    pub name: String,
    pub weight: f64,
    pub samples: usize,
    /// This stratum's additive share `α_k · mean_k` of the estimate.
    pub contribution: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedEstimate {
    pub estimate: Estimate,
    pub strata: Vec<StratumReport>,
}

/// Smallest share any stratum keeps after reallocation.
const DEFENSIVE_SHARE: f64 = 0.02;
const PILOT_FRACTION: f64 = 0.01;

/// Deterministic-mixture importance sampling over named components.
///
/// Every sample is weighted by the full mixture density, so each component
/// only has to cover the region it was designed for. Component shares start
/// equal for a pilot run on 1% of the budget and are then reallocated in
/// proportion to `α_k · sqrt(E_k[w²])`, with a defensive floor.
pub fn mc_stratified<F>(
    dim: usize,
    components: &[(&str, &dyn Density)],
    integrand: F,
    spec: &QuadSpec,
) -> Result<StratifiedEstimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let k = components.len();
    if k == 0 {
        return Err(Error::EmptyRegion);
    }
    for (name, d) in components {
        if d.dim() != dim {
            return Err(Error::Domain(format!("component {name} has dimension {}", d.dim())));
        }
    }
    let pilot_total = ((spec.mc_budget as f64 * PILOT_FRACTION) as usize).max(64 * k);
    if spec.mc_budget < pilot_total + 2 * k {
        return Err(Error::Domain("Monte Carlo budget too small for the stratified estimator".into()));
    }

    let run = |alpha: &[f64], counts: &[usize], phase: u64| -> Result<Vec<Moments>> {
        let weight = |x: &[f64]| {
            let q: f64 = components.iter().zip(alpha).map(|((_, d), a)| if *a > 0.0 { a * d.pdf(x) } else { 0.0 }).sum();
            ratio(integrand(x), q, x)
        };
        let mut out = Vec::with_capacity(k);
        for (j, (_, d)) in components.iter().enumerate() {
            out.push(run_stream(*d, counts[j], spec.seed, (phase << 32) | j as u64, &weight)?);
        }
        Ok(out)
    };

    let alpha0 = vec![1.0 / k as f64; k];
    let pilot_counts = vec![pilot_total / k; k];
    let pilot = run(&alpha0, &pilot_counts, 1)?;
    let pilot_used: usize = pilot_counts.iter().sum();

    let mut alpha: Vec<f64> = pilot.iter().zip(&alpha0).map(|(m, a)| a * m.second_moment().sqrt()).collect();
    let sum: f64 = alpha.iter().sum();
    if sum > 0.0 && sum.is_finite() {
        alpha.iter_mut().for_each(|a| *a /= sum);
        let floor = DEFENSIVE_SHARE / k as f64;
        alpha.iter_mut().for_each(|a| *a = a.max(floor));
        let sum: f64 = alpha.iter().sum();
        alpha.iter_mut().for_each(|a| *a /= sum);
    } else {
        alpha = alpha0;
    }

    let main_total = spec.mc_budget - pilot_used;
    let counts: Vec<usize> = alpha.iter().map(|a| ((a * main_total as f64).floor() as usize).max(2)).collect();
    // shares actually realized by the integer counts
    let used: usize = counts.iter().sum();
    let alpha: Vec<f64> = counts.iter().map(|c| *c as f64 / used as f64).collect();
    let main = run(&alpha, &counts, 2)?;

    let mut value = 0.0;
    let mut var = 0.0;
    let mut strata = Vec::with_capacity(k);
    for ((name, _), (m, a)) in components.iter().zip(main.iter().zip(&alpha)) {
        let contribution = a * m.mean;
        let v = a * a * m.variance() / m.n as f64;
        value += contribution;
        var += v;
        strata.push(StratumReport {
            name: name.to_string(),
            weight: *a,
            samples: m.n,
            contribution,
            stderr: v.sqrt(),
        });
    }
    let estimate = Estimate { value, error: var.sqrt(), evals: used + pilot_used, method: Method::Mc };
    let estimate = check_rel_tol(estimate, spec)?;
    Ok(StratifiedEstimate { estimate, strata })
}
