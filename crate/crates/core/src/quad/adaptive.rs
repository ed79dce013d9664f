use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Estimate, Method, QuadSpec};
use crate::error::{Error, Result};

// 15-point Kronrod abscissae and weights with the embedded 7-point Gauss
// weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Number of geometric refinements (ratio 1/4) placed toward a flagged
/// endpoint before adaptive bisection starts.
const GRADE_LEVELS: i32 = 8;
const GRADE_RATIO: f64 = 0.25;
/// Panels narrower than this many ulps of their midpoint are not split:
/// the outermost node sits 0.0085 half-widths from an end.
const COLLAPSE_ULPS: f64 = 512.0;

/// Which endpoints of an interval carry an integrable singularity.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Endpoints {
    pub left: bool,
    pub right: bool,
}

impl Endpoints {
    pub const NONE: Endpoints = Endpoints { left: false, right: false };
    pub const LEFT: Endpoints = Endpoints { left: true, right: false };
    pub const RIGHT: Endpoints = Endpoints { left: false, right: true };
    pub const BOTH: Endpoints = Endpoints { left: true, right: true };
}

/// What the relative tolerance is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TolScale {
    /// `|∫ f|`
    Value,
    /// `∫ |f|`, appropriate when the integral nearly cancels.
    Magnitude,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tol {
    pub rel: f64,
    pub abs: f64,
    pub scale: TolScale,
}

/// Result of an adaptive integration together with `∫|f|` and the integral
/// of an auxiliary function evaluated on the same panels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub estimate: Estimate,
    pub magnitude: f64,
    pub aux: f64,
}

#[derive(Debug, Clone, Copy)]
enum Map {
    Identity,
    /// `x = sign · c / u` for `u ∈ (0, 1]`.
    Reciprocal { c: f64, sign: f64 },
}

impl Map {
    #[inline]
    fn apply(&self, u: f64) -> (f64, f64) {
        match *self {
            Map::Identity => (u, 1.0),
            Map::Reciprocal { c, sign } => (sign * c / u, c / (u * u)),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    map: Map,
    value: f64,
    error: f64,
    magnitude: f64,
    aux: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

struct Rule {
    value: f64,
    error: f64,
    magnitude: f64,
    aux: f64,
}

fn gk15<F: Fn(f64) -> (f64, f64)>(f: &F, a: f64, b: f64, map: Map) -> Result<Rule> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let eval = |u: f64| -> Result<(f64, f64)> {
        let (x, jac) = map.apply(u);
        let (v, w) = f(x);
        let (v, w) = (v * jac, w * jac);
        if v.is_finite() && w.is_finite() {
            Ok((v, w))
        } else {
            Err(Error::NonFiniteSample { point: vec![x] })
        }
    };
    let (fc, ac) = eval(center)?;
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    let mut aux = ac * WGK[7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let (f1, a1) = eval(center - dx)?;
        let (f2, a2) = eval(center + dx)?;
        kronrod += WGK[j] * (f1 + f2);
        abs += WGK[j] * (f1.abs() + f2.abs());
        aux += WGK[j] * (a1 + a2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let magnitude = abs * half.abs();
    Ok(Rule {
        value: kronrod * half,
        error: ((kronrod - gauss) * half).abs().max(50.0 * f64::EPSILON * magnitude),
        magnitude,
        aux: aux * half,
    })
}

/// Geometric breakpoints of `[a, b]` graded toward the flagged ends.
fn graded(a: f64, b: f64, ends: Endpoints) -> Vec<f64> {
    let mut pts = vec![a];
    match (ends.left, ends.right) {
        (false, false) => {}
        (true, false) => {
            for k in (1..=GRADE_LEVELS).rev() {
                pts.push(a + (b - a) * GRADE_RATIO.powi(k));
            }
        }
        (false, true) => {
            for k in 1..=GRADE_LEVELS {
                pts.push(b - (b - a) * GRADE_RATIO.powi(k));
            }
        }
        (true, true) => {
            let m = 0.5 * (a + b);
            let mut left = graded(a, m, Endpoints::LEFT);
            let right = graded(m, b, Endpoints::RIGHT);
            left.extend_from_slice(&right[1..]);
            return left;
        }
    }
    pts.push(b);
    pts
}

/// Adaptive integration over consecutive breakpoints. `points` must be
/// sorted; the first entry may be `-∞` and the last `+∞`. `flags[i]` marks
/// an integrable singularity at `points[i]`.
pub fn integrate_breaks<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    flags: &[bool],
    tol: Tol,
    max_evals: usize,
) -> Result<Quadrature> {
    integrate_breaks_aux(|x| (f(x), 0.0), points, flags, tol, max_evals)
}

/// Like [`integrate_breaks`] for `x ↦ (f(x), g(x))`: subdivision is driven by
/// `f` alone and `∫ g` is returned in [`Quadrature::aux`].
pub fn integrate_breaks_aux<F: Fn(f64) -> (f64, f64)>(
    f: F,
    points: &[f64],
    flags: &[bool],
    tol: Tol,
    max_evals: usize,
) -> Result<Quadrature> {
    assert_eq!(points.len(), flags.len(), "one flag per breakpoint");
    if points.len() < 2 {
        return Ok(Quadrature { estimate: Estimate::exact(0.0), magnitude: 0.0, aux: 0.0 });
    }
    // segments in the integration variable u, each with its own map
    let mut segments: Vec<(f64, f64, Map, Endpoints)> = Vec::new();
    for i in 0..points.len() - 1 {
        let (lo, hi) = (points[i], points[i + 1]);
        let (fl, fr) = (flags[i], flags[i + 1]);
        if !(hi > lo) {
            continue;
        }
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => segments.push((lo, hi, Map::Identity, Endpoints { left: fl, right: fr })),
            (true, false) => {
                let c = lo.max(0.0) + 1.0;
                if c > lo {
                    segments.push((lo, c, Map::Identity, Endpoints { left: fl, right: false }));
                }
                let flag_c = if c > lo { false } else { fl };
                // u = 0 is the point at infinity
                segments.push((0.0, 1.0, Map::Reciprocal { c, sign: 1.0 }, Endpoints { left: true, right: flag_c }));
            }
            (false, true) => {
                let c = (-hi).max(0.0) + 1.0;
                // x = -c/u maps u ∈ (0, 1] onto (-∞, -c]; reversing orientation
                // is absorbed by the positive Jacobian c/u².
                segments.push((0.0, 1.0, Map::Reciprocal { c, sign: -1.0 }, Endpoints { left: true, right: if -c < hi { false } else { fr } }));
                if -c < hi {
                    segments.push((-c, hi, Map::Identity, Endpoints { left: false, right: fr }));
                }
            }
            (false, false) => {
                segments.push((0.0, 1.0, Map::Reciprocal { c: 1.0, sign: -1.0 }, Endpoints::LEFT));
                segments.push((-1.0, 1.0, Map::Identity, Endpoints::NONE));
                segments.push((0.0, 1.0, Map::Reciprocal { c: 1.0, sign: 1.0 }, Endpoints::LEFT));
            }
        }
    }

    let mut heap = BinaryHeap::new();
    let mut frozen: Vec<Panel> = Vec::new();
    let mut evals = 0usize;
    for &(a, b, map, ends) in &segments {
        let pts = graded(a, b, ends);
        for w in pts.windows(2) {
            if w[1] > w[0] {
                let r = gk15(&f, w[0], w[1], map)?;
                evals += 15;
                heap.push(Panel { a: w[0], b: w[1], map, value: r.value, error: r.error, magnitude: r.magnitude, aux: r.aux });
            }
        }
    }

    let totals = |heap: &BinaryHeap<Panel>, frozen: &[Panel]| {
        let mut v = 0.0;
        let mut e = 0.0;
        let mut m = 0.0;
        for p in heap.iter().chain(frozen.iter()) {
            v += p.value;
            e += p.error;
            m += p.magnitude;
        }
        (v, e, m)
    };
    let aux_total = |heap: &BinaryHeap<Panel>, frozen: &[Panel]| heap.iter().chain(frozen.iter()).map(|p| p.aux).sum::<f64>();
    let target = |v: f64, m: f64| {
        let reference = match tol.scale {
            TolScale::Value => v.abs(),
            TolScale::Magnitude => m,
        };
        (tol.rel * reference).max(tol.abs)
    };

    let (mut value, mut error, mut magnitude) = totals(&heap, &frozen);
    let mut since_resum = 0;
    loop {
        if error <= target(value, magnitude) {
            // guard against drift of the running sums
            let (v, e, m) = totals(&heap, &frozen);
            value = v;
            error = e;
            magnitude = m;
            if error <= target(value, magnitude) {
                break;
            }
        }
        let Some(worst) = heap.pop() else {
            // everything frozen at machine resolution
            return Err(Error::BudgetExceeded { evals, error, target: target(value, magnitude) });
        };
        if evals + 30 > max_evals {
            heap.push(worst);
            let (v, e, m) = totals(&heap, &frozen);
            return Err(Error::BudgetExceeded { evals, error: e, target: target(v, m) });
        }
        let mid = 0.5 * (worst.a + worst.b);
        let width = worst.b - worst.a;
        if width <= COLLAPSE_ULPS * f64::EPSILON * mid.abs().max(f64::MIN_POSITIVE) || mid <= worst.a || mid >= worst.b {
            // the outer Kronrod nodes would round onto the panel ends; the
            // panel's mass is only known to within a few times its magnitude
            let mut worst = worst;
            let floor = 4.0 * worst.magnitude;
            if floor > worst.error {
                error += floor - worst.error;
                worst.error = floor;
            }
            frozen.push(worst);
            continue;
        }
        let r1 = gk15(&f, worst.a, mid, worst.map)?;
        let r2 = gk15(&f, mid, worst.b, worst.map)?;
        evals += 30;
        value += r1.value + r2.value - worst.value;
        error += r1.error + r2.error - worst.error;
        magnitude += r1.magnitude + r2.magnitude - worst.magnitude;
        let map = worst.map;
        heap.push(Panel { a: worst.a, b: mid, map, value: r1.value, error: r1.error, magnitude: r1.magnitude, aux: r1.aux });
        heap.push(Panel { a: mid, b: worst.b, map, value: r2.value, error: r2.error, magnitude: r2.magnitude, aux: r2.aux });
        since_resum += 1;
        if since_resum == 256 {
            since_resum = 0;
            let (v, e, m) = totals(&heap, &frozen);
            value = v;
            error = e;
            magnitude = m;
        }
    }
    Ok(Quadrature {
        estimate: Estimate { value, error, evals, method: Method::Adaptive },
        magnitude,
        aux: aux_total(&heap, &frozen),
    })
}

/// Outer adaptive integral of an inner integral. The reported error adds the
/// outer bound and the integral of the inner bounds; evaluation counts add
/// up. The first inner failure aborts the whole computation.
pub fn integrate_nested<F>(inner: F, points: &[f64], flags: &[bool], tol: Tol, max_evals: usize) -> Result<Estimate>
where
    F: Fn(f64) -> Result<Estimate>,
{
    let failure = std::cell::RefCell::new(None);
    let inner_evals = std::cell::Cell::new(0usize);
    let g = |x: f64| match inner(x) {
        Ok(e) => {
            inner_evals.set(inner_evals.get() + e.evals);
            (e.value, e.error)
        }
        Err(err) => {
            failure.borrow_mut().get_or_insert(err);
            (f64::NAN, 0.0)
        }
    };
    let outer = integrate_breaks_aux(g, points, flags, tol, max_evals);
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    let q = outer?;
    Ok(Estimate {
        value: q.estimate.value,
        error: q.estimate.error + q.aux.abs(),
        evals: q.estimate.evals + inner_evals.get(),
        method: Method::Adaptive,
    })
}

/// `∫_a^b f`, with `b` allowed to be `+∞` (and `a` to be `-∞`). Declared
/// endpoint singularities get geometrically graded panels.
pub fn integrate_1d<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    singular: Endpoints,
    spec: &QuadSpec,
) -> Result<Estimate> {
    if a == b {
        return Ok(Estimate::exact(0.0));
    }
    if b < a {
        return integrate_1d(f, b, a, Endpoints { left: singular.right, right: singular.left }, spec)
            .map(|e| e.scale(-1.0));
    }
    integrate_breaks(f, &[a, b], &[singular.left, singular.right], spec.tol(), spec.max_evals)
        .map(|q| q.estimate)
}
