//! Discrete nonlocal Dirichlet problems on uniform grids.
//!
//! The energy is the all-pairs sum
//! `E(u) = ½ Σ_{i≠j} h^{2n} |u_i - u_j|^p / |x_i - x_j|^{n+sp}`
//! over every node of `[-L, L]^dim`. Nodes outside Ω form the collar that
//! carries the exterior data; interactions beyond the grid are dropped.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fields::h;
use crate::params::Params;

/// Where Ω sits inside the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Region {
    /// `|x|_∞ ≤ half`
    Box { half: f64 },
    /// `|x| ≤ radius`
    Ball { radius: f64 },
}

impl Region {
    fn contains(&self, x: &[f64]) -> bool {
        let slack = 1e-9;
        match *self {
            Region::Box { half } => x.iter().all(|v| v.abs() <= half + slack),
            Region::Ball { radius } => x.iter().map(|v| v * v).sum::<f64>().sqrt() <= radius + slack,
        }
    }

    fn half_width(&self) -> f64 {
        match *self {
            Region::Box { half } => half,
            Region::Ball { radius } => radius,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Grid {
    dim: usize,
    extent: f64,
    spacing: f64,
    per_side: usize,
    region: Region,
    interior: Vec<bool>,
    interior_nodes: Vec<usize>,
    coords: Vec<f64>,
}

impl Grid {
    /// Nodes `-L + k h`, `k = 0..=2L/h`, in each direction.
    pub fn new(dim: usize, extent: f64, spacing: f64, region: Region) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Domain(format!("grids are 1D or 2D, got {dim}")));
        }
        if !(extent > 0.0 && spacing > 0.0 && spacing <= extent) {
            return Err(Error::Domain(format!("bad grid extent {extent} / spacing {spacing}")));
        }
        let steps = 2.0 * extent / spacing;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            return Err(Error::Domain(format!("2L/h = {steps} is not an integer")));
        }
        if !(region.half_width() > 0.0 && region.half_width() <= 0.5 * extent + 1e-12) {
            return Err(Error::Domain(format!(
                "Ω must stay within [-L/2, L/2] so the collar is at least L/2 wide (L = {extent})"
            )));
        }
        let per_side = steps.round() as usize + 1;
        let total = per_side.pow(dim as u32);
        let mut coords = Vec::with_capacity(total * dim);
        let mut interior = Vec::with_capacity(total);
        for k in 0..total {
            let x: Vec<f64> = index_of(k, per_side, dim).iter().map(|&i| -extent + i as f64 * spacing).collect();
            interior.push(region.contains(&x));
            coords.extend(x);
        }
        let interior_nodes: Vec<usize> = (0..total).filter(|&k| interior[k]).collect();
        if interior_nodes.is_empty() {
            return Err(Error::EmptyRegion);
        }
        Ok(Self { dim, extent, spacing, per_side, region, interior, interior_nodes, coords })
    }

    /// `m` interior nodes per side at spacing `1/m`, inside the narrowest
    /// collar allowed by the L/2 rule.
    pub fn uniform(dim: usize, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Domain("need at least one interior node".into()));
        }
        let h = 1.0 / m as f64;
        // odd m puts a node at 0, even m puts nodes at half-steps
        let extent = if m % 2 == 1 { m as f64 * h } else { (m as f64 - 0.5) * h };
        let half = 0.5 * (m as f64 - 1.0) * h + 0.25 * h;
        Self::new(dim, extent, h, Region::Box { half })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn region(&self) -> Region {
        self.region
    }

    pub fn len(&self) -> usize {
        self.interior.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interior.is_empty()
    }

    pub fn per_side(&self) -> usize {
        self.per_side
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.coords[k * self.dim..(k + 1) * self.dim]
    }

    pub fn is_interior(&self, k: usize) -> bool {
        self.interior[k]
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    pub fn collar_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| !self.interior[k]).collect()
    }

    /// Samples `f` at every node.
    pub fn sample(&self, mut f: impl FnMut(&[f64]) -> f64) -> DiscreteField {
        DiscreteField { values: (0..self.len()).map(|k| f(self.node(k))).collect() }
    }

    fn norm_of(&self, k: usize) -> f64 {
        self.node(k).iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `h^{2n} |x_i - x_j|^{-n-sp}` indexed by the lattice offset.
    fn kernel(&self, params: &Params) -> Kernel {
        let n = self.dim as f64;
        let a = n + params.sp();
        let s = self.per_side;
        let scale = self.spacing.powf(2.0 * n - a);
        let table = match self.dim {
            1 => (0..s).map(|d| if d == 0 { 0.0 } else { scale * (d as f64).powf(-a) }).collect(),
            _ => {
                let mut t = vec![0.0; s * s];
                for di in 0..s {
                    for dj in 0..s {
                        if di + dj > 0 {
                            t[di * s + dj] = scale * ((di * di + dj * dj) as f64).powf(-0.5 * a);
                        }
                    }
                }
                t
            }
        };
        Kernel { dim: self.dim, side: s, table }
    }

    pub fn header(&self, params: &Params) -> Value {
        json!({
            "dim": self.dim,
            "L": self.extent,
            "h": self.spacing,
            "nodes": self.len(),
            "interior": self.interior_nodes.len(),
            "region": self.region,
            "params": params,
        })
    }

    /// One row per node: coordinates, value and the interior flag.
    pub fn to_csv(&self, u: &DiscreteField) -> Result<String> {
        self.check(u)?;
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut head: Vec<String> = (0..self.dim).map(|d| format!("x{d}")).collect();
        head.extend(["value".to_string(), "interior".to_string()]);
        w.write_record(&head).expect("in-memory write");
        for k in 0..self.len() {
            let mut row: Vec<String> = self.node(k).iter().map(|v| v.to_string()).collect();
            row.push(u.values[k].to_string());
            row.push((self.interior[k] as u8).to_string());
            w.write_record(&row).expect("in-memory write");
        }
        Ok(String::from_utf8(w.into_inner().expect("in-memory write")).expect("csv is utf-8"))
    }

    fn check(&self, u: &DiscreteField) -> Result<()> {
        if u.values.len() != self.len() {
            return Err(Error::Domain(format!("field has {} values for {} nodes", u.values.len(), self.len())));
        }
        if let Some(k) = u.values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteSample { point: self.node(k).to_vec() });
        }
        Ok(())
    }
}

fn index_of(mut k: usize, side: usize, dim: usize) -> Vec<usize> {
    let mut out = vec![0; dim];
    for d in (0..dim).rev() {
        out[d] = k % side;
        k /= side;
    }
    out
}

struct Kernel {
    dim: usize,
    side: usize,
    table: Vec<f64>,
}

impl Kernel {
    #[inline]
    fn weight(&self, i: usize, j: usize) -> f64 {
        if self.dim == 1 {
            self.table[i.abs_diff(j)]
        } else {
            let s = self.side;
            let (di, dj) = ((i / s).abs_diff(j / s), (i % s).abs_diff(j % s));
            self.table[di * s + dj]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteField {
    pub values: Vec<f64>,
}

impl DiscreteField {
    pub fn constant(len: usize, c: f64) -> Self {
        Self { values: vec![c; len] }
    }

    pub fn sup_distance(&self, other: &DiscreteField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { values: self.values.iter().map(|v| f(*v)).collect() }
    }
}

#[inline]
fn abs_pow(x: f64, p: f64) -> f64 {
    if p == 2.0 {
        x * x
    } else {
        x.abs().powf(p)
    }
}

/// `½ Σ_{i≠j} h^{2n} |u_i - u_j|^p |x_i - x_j|^{-n-sp}`.
pub fn discrete_energy(u: &DiscreteField, grid: &Grid, params: &Params) -> Result<f64> {
    grid.check(u)?;
    let k = grid.kernel(params);
    let p = params.p;
    let v = &u.values;
    let rows: Vec<f64> = (0..v.len())
        .into_par_iter()
        .map(|i| (i + 1..v.len()).map(|j| k.weight(i, j) * abs_pow(v[i] - v[j], p)).sum())
        .collect();
    Ok(rows.iter().sum())
}

/// `∂E/∂u_i = p Σ_{j≠i} h^{2n} h(u_i - u_j) |x_i - x_j|^{-n-sp}`.
pub fn energy_gradient(u: &DiscreteField, grid: &Grid, params: &Params) -> Result<DiscreteField> {
    grid.check(u)?;
    let k = grid.kernel(params);
    let all: Vec<usize> = (0..grid.len()).collect();
    Ok(DiscreteField { values: gradient_rows(&u.values, &all, &k, params.p) })
}

fn gradient_rows(v: &[f64], rows: &[usize], k: &Kernel, p: f64) -> Vec<f64> {
    rows.par_iter()
        .map(|&i| {
            let ui = v[i];
            p * (0..v.len()).filter(|&j| j != i).map(|j| k.weight(i, j) * h(ui - v[j], p)).sum::<f64>()
        })
        .collect()
}

/// The part of the energy that depends on interior values.
fn interior_energy(v: &[f64], grid: &Grid, k: &Kernel, p: f64) -> f64 {
    let rows: Vec<f64> = grid
        .interior_nodes
        .par_iter()
        .map(|&i| {
            (0..v.len())
                .filter(|&j| j != i && (!grid.interior[j] || j > i))
                .map(|j| k.weight(i, j) * abs_pow(v[i] - v[j], p))
                .sum()
        })
        .collect();
    rows.iter().sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    /// Armijo sufficient-decrease constant
    pub armijo: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
}

impl Default for StepRule {
    fn default() -> Self {
        Self { armijo: 1e-4, shrink: 0.5, max_backtracks: 60 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Init {
    /// interior set to the mean of the collar data
    CollarMean,
    /// interior drawn uniformly from the collar data range
    Random { seed: u64 },
    Given(DiscreteField),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    /// stop when `max_i |∂E/∂u_i| / (p Σ_j w_ij) ≤ tol` over interior nodes
    pub tol: f64,
    pub max_iters: usize,
    pub step_rule: StepRule,
    pub init: Init,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iters: 200_000, step_rule: StepRule::default(), init: Init::CollarMean }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Solution {
    pub field: DiscreteField,
    pub iterations: usize,
    /// scaled interior gradient norm at the returned iterate
    pub grad_norm: f64,
    pub energy: f64,
    pub converged: bool,
}

impl Solution {
    pub fn into_result(self) -> Result<Solution> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::MaxItersExceeded { grad_norm: self.grad_norm })
        }
    }
}

fn initial_values(g: &DiscreteField, grid: &Grid, init: &Init) -> Result<Vec<f64>> {
    let collar = grid.collar_nodes();
    let mut v = g.values.clone();
    match init {
        Init::CollarMean => {
            let mean = collar.iter().map(|&k| g.values[k]).sum::<f64>() / collar.len().max(1) as f64;
            for &i in grid.interior_nodes() {
                v[i] = mean;
            }
        }
        Init::Random { seed } => {
            let lo = collar.iter().map(|&k| g.values[k]).fold(f64::INFINITY, f64::min);
            let hi = collar.iter().map(|&k| g.values[k]).fold(f64::NEG_INFINITY, f64::max);
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            for &i in grid.interior_nodes() {
                v[i] = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            }
        }
        Init::Given(u) => {
            grid.check(u)?;
            for &i in grid.interior_nodes() {
                v[i] = u.values[i];
            }
        }
    }
    Ok(v)
}

/// Minimizes the energy over fields equal to `g` on the collar; the best
/// iterate is returned even when the iteration limit is reached.
pub fn solve_dirichlet_best(g: &DiscreteField, grid: &Grid, params: &Params, opts: &SolveOptions) -> Result<Solution> {
    grid.check(g)?;
    params.validate()?;
    if !(opts.tol > 0.0) || opts.max_iters == 0 {
        return Err(Error::Domain("solver tolerance and iteration limit must be positive".into()));
    }
    let p = params.p;
    let k = grid.kernel(params);
    let rows = grid.interior_nodes();
    // Jacobi-type scaling p Σ_j w_ij: the gradient divided by it is in units of u^{p-1}
    let diag: Vec<f64> = rows.iter().map(|&i| p * (0..grid.len()).map(|j| k.weight(i, j)).sum::<f64>()).collect();
    let mut v = initial_values(g, grid, &opts.init)?;
    let mut e = interior_energy(&v, grid, &k, p);
    let mut grad = gradient_rows(&v, rows, &k, p);
    let scaled = |gr: &[f64]| gr.iter().zip(&diag).map(|(a, d)| (a / d).abs()).fold(0.0, f64::max);
    let mut gnorm = scaled(&grad);
    let mut alpha = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let rule = opts.step_rule;
    let mut iters = 0;
    while gnorm > opts.tol && iters < opts.max_iters {
        iters += 1;
        let dir: Vec<f64> = grad.iter().zip(&diag).map(|(a, d)| -a / d).collect();
        let slope: f64 = grad.iter().zip(&dir).map(|(a, b)| a * b).sum();
        if let Some((dx, dg)) = &prev {
            // Barzilai-Borwein step in the scaled metric
            let sy: f64 = dx.iter().zip(dg).map(|(a, b)| a * b).sum();
            let ss: f64 = dx.iter().zip(&diag).map(|(a, d)| a * a * d).sum();
            if sy > 0.0 {
                alpha = (ss / sy).clamp(1e-12, 1e12);
            }
        }
        let old: Vec<f64> = rows.iter().map(|&i| v[i]).collect();
        let mut accepted = false;
        for _ in 0..=rule.max_backtracks {
            for (r, &i) in rows.iter().enumerate() {
                v[i] = old[r] + alpha * dir[r];
            }
            let trial = interior_energy(&v, grid, &k, p);
            // roundoff slack keeps the test meaningful once E stops changing
            if trial <= e + rule.armijo * alpha * slope + 8.0 * f64::EPSILON * e.abs() {
                e = trial;
                accepted = true;
                break;
            }
            alpha *= rule.shrink;
        }
        if !accepted {
            for (r, &i) in rows.iter().enumerate() {
                v[i] = old[r];
            }
            break;
        }
        let new_grad = gradient_rows(&v, rows, &k, p);
        let dx: Vec<f64> = rows.iter().enumerate().map(|(r, &i)| v[i] - old[r]).collect();
        let dg: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        prev = Some((dx, dg));
        grad = new_grad;
        gnorm = scaled(&grad);
    }
    let field = DiscreteField { values: v };
    let energy = discrete_energy(&field, grid, params)?;
    Ok(Solution { field, iterations: iters, grad_norm: gnorm, energy, converged: gnorm <= opts.tol })
}

/// As [`solve_dirichlet_best`], failing with `MaxItersExceeded` when the
/// gradient tolerance is not reached.
pub fn solve_dirichlet(g: &DiscreteField, grid: &Grid, params: &Params, opts: &SolveOptions) -> Result<Solution> {
    solve_dirichlet_best(g, grid, params, opts)?.into_result()
}

/// `p = 2`: the interior first-order system solved by LU.
pub fn solve_dirichlet_direct(g: &DiscreteField, grid: &Grid, params: &Params) -> Result<DiscreteField> {
    grid.check(g)?;
    if params.p != 2.0 {
        return Err(Error::Domain(format!("the direct solve is linear and needs p = 2, got {}", params.p)));
    }
    let k = grid.kernel(params);
    let rows = grid.interior_nodes();
    let m = rows.len();
    let mut pos = vec![usize::MAX; grid.len()];
    for (r, &i) in rows.iter().enumerate() {
        pos[i] = r;
    }
    let mut a = DMatrix::<f64>::zeros(m, m);
    let mut b = DVector::<f64>::zeros(m);
    for (r, &i) in rows.iter().enumerate() {
        for j in 0..grid.len() {
            if j == i {
                continue;
            }
            let w = k.weight(i, j);
            a[(r, r)] += w;
            if grid.interior[j] {
                a[(r, pos[j])] -= w;
            } else {
                b[r] += w * g.values[j];
            }
        }
    }
    let x = a.lu().solve(&b).ok_or_else(|| Error::NonConvergence("singular interior system".into()))?;
    let mut v = g.values.clone();
    for (r, &i) in rows.iter().enumerate() {
        v[i] = x[r];
    }
    Ok(DiscreteField { values: v })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    /// `min_i (u1_i - u2_i)` over interior nodes
    pub min_gap: f64,
    pub u1: Solution,
    pub u2: Solution,
}

pub const COMPARISON_SLACK: f64 = 1e-8;

/// Solves with ordered collar data `g1 ≥ g2` and checks `u1 ≥ u2` inside.
pub fn comparison_test(
    g1: &DiscreteField,
    g2: &DiscreteField,
    grid: &Grid,
    params: &Params,
    opts: &SolveOptions,
) -> Result<ComparisonReport> {
    grid.check(g1)?;
    grid.check(g2)?;
    if let Some(k) = grid.collar_nodes().into_iter().find(|&k| g1.values[k] < g2.values[k]) {
        return Err(Error::Domain(format!("collar data is not ordered at node {k}")));
    }
    let u1 = solve_dirichlet(g1, grid, params, opts)?;
    let u2 = solve_dirichlet(g2, grid, params, opts)?;
    let mut bad = Vec::new();
    let mut min_gap = f64::INFINITY;
    for &i in grid.interior_nodes() {
        let gap = u1.field.values[i] - u2.field.values[i];
        min_gap = min_gap.min(gap);
        if gap < -COMPARISON_SLACK {
            bad.push(i);
        }
    }
    if !bad.is_empty() {
        return Err(Error::ComparisonViolation(bad));
    }
    Ok(ComparisonReport { min_gap, u1, u2 })
}

/// Minimum of `u` over the nodes with `r ≤ |x| < 2r`.
pub fn annulus_essinf(u: &DiscreteField, grid: &Grid, r: f64) -> Result<f64> {
    grid.check(u)?;
    if !(r > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    (0..grid.len())
        .filter(|&k| {
            let d = grid.norm_of(k);
            d >= r && d < 2.0 * r
        })
        .map(|k| u.values[k])
        .reduce(f64::min)
        .ok_or(Error::EmptyRegion)
}

/// `(avg_{B_r} u^t)^{1/t} / min_{B_{2r}} u` about `center`.
pub fn weak_harnack_ratio(
    u: &DiscreteField,
    grid: &Grid,
    params: &Params,
    t: f64,
    center: &[f64],
    r: f64,
) -> Result<f64> {
    grid.check(u)?;
    if center.len() != grid.dim {
        return Err(Error::Domain(format!("center has dimension {}", center.len())));
    }
    if !(r > 0.0) || center.iter().any(|c| c.abs() + 2.0 * r > grid.extent + 1e-12) {
        return Err(Error::Domain(format!("B_{{2r}} with r = {r} leaves the grid")));
    }
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    if params.sp() < params.nf() {
        let t_bar = params.nf() * (params.p - 1.0) / (params.nf() - params.sp());
        if t >= t_bar {
            return Err(Error::Domain(format!("t = {t} must stay below {t_bar}")));
        }
    }
    let dist = |k: usize| grid.node(k).iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let inner: Vec<f64> = (0..grid.len()).filter(|&k| dist(k) <= r).map(|k| u.values[k]).collect();
    if inner.is_empty() {
        return Err(Error::EmptyRegion);
    }
    if inner.iter().any(|v| *v < 0.0) {
        return Err(Error::Domain("u must be nonnegative".into()));
    }
    let low = (0..grid.len()).filter(|&k| dist(k) <= 2.0 * r).map(|k| u.values[k]).fold(f64::INFINITY, f64::min);
    if !(low > 0.0) {
        return Err(Error::ZeroInfimum);
    }
    let mean = inner.iter().map(|v| v.powf(t)).sum::<f64>() / inner.len() as f64;
    Ok(mean.powf(1.0 / t) / low)
}
