//! Construction of a positive solution of `(-Δ)^s_p u ≥ u^q` in the
//! supercritical range, as a multiple of `f(x) = (1 + |x|²)^{(sp-n+σ)/(2(p-1))}`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::RadialProfile;
use crate::params::{classify, select_sigma, Params, RegimeKind};
use crate::pvop::{check_sigma, g_of_r, pv_apply_radial};
use crate::quad::{Estimate, QuadSpec};

const PHI: f64 = 0.618_033_988_749_894_9;

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("t = {t} is outside (0, 1)")))
    }
}

fn phi_mu(t: f64, mu: f64, params: &Params, sigma: f64) -> f64 {
    let a = params.perturbed_exponent(sigma);
    let lead = t.powf((params.sp() - params.nf()) / (params.p - 1.0));
    // λ + (1-λ)t^{-2} = 1 + μ(t^{-2} - 1), λ + (1-λ)t² = 1 - μ(1 - t²)
    let outer = (0.5 * a * (mu * (t.powi(-2) - 1.0)).ln_1p()).exp_m1();
    let inner = (0.5 * a * (-mu * (1.0 - t * t)).ln_1p()).exp_m1();
    -lead * outer - inner
}

/// `φ_t(λ) = t^{(sp-n)/(p-1)} (1 - (λ + (1-λ)t^{-2})^a) - (λ + (1-λ)t²)^a + 1`
/// with `a = (sp-n+σ)/(2(p-1))`.
pub fn phi_t(t: f64, lambda: f64, params: &Params, sigma: f64) -> Result<f64> {
    check_sigma(params, sigma)?;
    check_t(t)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("λ = {lambda} is outside [0, 1]")));
    }
    Ok(phi_mu(t, 1.0 - lambda, params, sigma))
}

/// The interior maximizer of `φ_t`.
pub fn lambda_star(t: f64, params: &Params, sigma: f64) -> Result<f64> {
    check_sigma(params, sigma)?;
    check_t(t)?;
    let c = 2.0 * sigma / (params.nf() - params.sp() - sigma + 2.0 * (params.p - 1.0));
    let tc = t.powf(c);
    Ok((tc - t * t) / ((1.0 + tc) * (1.0 - t * t)))
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub points: usize,
    /// `min(f(rt) - f(r), f(r) - f(r/t))`
    pub min_order_margin: f64,
    /// `t^{sp-n}[f(r)-f(r/t)]^{p-1} - [f(rt)-f(r)]^{p-1}`
    pub min_power_margin: f64,
    pub failures: Vec<(f64, f64)>,
    /// grid points where the power margin and `φ_t(1/(1+r²))` disagree in sign
    pub sign_mismatches: Vec<(f64, f64)>,
}

impl InequalityReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.sign_mismatches.is_empty()
    }
}

/// Checks the ordering and the power inequality for `f` at every `(t, r)`.
pub fn check_f_inequalities(params: &Params, sigma: f64, ts: &[f64], rs: &[f64]) -> Result<InequalityReport> {
    check_sigma(params, sigma)?;
    let f = RadialProfile::perturbed(params, sigma)?;
    let pm = params.p - 1.0;
    let lead = params.sp() - params.nf();
    let mut rep = InequalityReport {
        points: 0,
        min_order_margin: f64::INFINITY,
        min_power_margin: f64::INFINITY,
        failures: Vec::new(),
        sign_mismatches: Vec::new(),
    };
    for &t in ts {
        check_t(t)?;
        for &r in rs {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Domain(format!("radius must be positive, got {r}")));
            }
            let up = -f.diff(r, r * t);
            let down = f.diff(r, r / t);
            let order = up.min(down);
            let power = t.powf(lead) * down.powf(pm) - up.powf(pm);
            rep.points += 1;
            rep.min_order_margin = rep.min_order_margin.min(order);
            rep.min_power_margin = rep.min_power_margin.min(power);
            if !(order > 0.0 && power > 0.0) {
                rep.failures.push((t, r));
            }
            let phi = phi_mu(t, r * r / (1.0 + r * r), params, sigma);
            if (phi > 0.0) != (power > 0.0) {
                rep.sign_mismatches.push((t, r));
            }
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioSample {
    pub r: f64,
    pub g: Estimate,
    /// `R(r) = r^{σ-n} G(r) / f(r)^q`
    pub ratio: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RatioScan {
    pub samples: Vec<RatioSample>,
    pub fitted_slope: f64,
    pub predicted_slope: f64,
}

fn require_q(params: &Params) -> Result<f64> {
    let regime = classify(params)?;
    if regime.kind != RegimeKind::SupercriticalQ {
        return Err(Error::Regime(format!("needs the supercritical regime, got {:?}", regime.kind)));
    }
    params.q.ok_or(Error::MissingParameter("q"))
}

/// `σ - n - q(sp-n+σ)/(p-1)`.
pub fn predicted_slope(params: &Params, sigma: f64) -> Result<f64> {
    let q = params.q.ok_or(Error::MissingParameter("q"))?;
    Ok(sigma - params.nf() - q * params.perturbed_exponent(sigma))
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `R(r)` through `G(r)` at each radius, with the log-log slope over the top decade.
pub fn ratio_scan(params: &Params, sigma: f64, radii: &[f64], spec: &QuadSpec) -> Result<RatioScan> {
    let q = require_q(params)?;
    check_sigma(params, sigma)?;
    if radii.len() < 2 || radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > 0.0) {
        return Err(Error::Domain("radii must be positive and increasing, at least two".into()));
    }
    let f = RadialProfile::perturbed(params, sigma)?;
    let samples = radii
        .par_iter()
        .map(|&r| {
            let g = g_of_r(params, sigma, r, spec)?;
            let scale = r.powf(sigma - params.nf()) / f.value(r).powf(q);
            Ok(RatioSample { r, g, ratio: g.value * scale, stderr: g.error * scale })
        })
        .collect::<Result<Vec<_>>>()?;
    let top = radii[radii.len() - 1] / 10.0;
    let mut pts: Vec<(f64, f64)> =
        samples.iter().filter(|s| s.r >= top * (1.0 - 1e-12)).map(|s| (s.r.ln(), s.ratio.ln())).collect();
    if pts.len() < 2 {
        pts = samples[samples.len() - 2..].iter().map(|s| (s.r.ln(), s.ratio.ln())).collect();
    }
    Ok(RatioScan { fitted_slope: fit_slope(&pts), predicted_slope: predicted_slope(params, sigma)?, samples })
}

/// `f(r)^q / (-Δ)^s_p f(r)` with its propagated error.
fn inverse_ratio(f: &RadialProfile, r: f64, q: f64, params: &Params, spec: &QuadSpec) -> Result<(f64, f64)> {
    let d = pv_apply_radial(f, r, params, spec)?;
    if !(d.value - 3.0 * d.error > 0.0) {
        return Err(Error::NonConvergence(format!(
            "(-Δ)^s_p f at r = {r} is not resolved as positive ({} ± {})",
            d.value, d.error
        )));
    }
    let v = f.value(r).powf(q) / d.value;
    Ok((v, v * d.error / d.value))
}

#[derive(Debug, Clone, Serialize)]
pub struct CfResult {
    /// radius beyond which `R ≥ 1` at every probe up to `8M`
    pub m: f64,
    pub c_f: Estimate,
    /// where the maximum of `f^q / (-Δ)^s_p f` over `[0, M]` is attained
    pub argmax: f64,
    pub max_ratio: f64,
    pub probes: usize,
}

const PROBES_PER_OCTAVE: usize = 8;
const MAX_DOUBLINGS: usize = 30;
/// lower end of the log-radius axis, relative to `M`
const ORIGIN_OFFSET: f64 = 1.0 / (1u64 << 20) as f64;

fn log_grid(lo: f64, hi: f64, per_octave: usize) -> Vec<f64> {
    let k = ((hi / lo).log2() * per_octave as f64).ceil().max(1.0) as usize;
    (0..=k).map(|i| lo * (hi / lo).powf(i as f64 / k as f64)).collect()
}

/// `M` by doubling, then `c_f = max{1, max_{|x| ≤ M} f^q / (-Δ)^s_p f}`.
pub fn compute_cf(params: &Params, sigma: f64, spec: &QuadSpec) -> Result<CfResult> {
    let q = require_q(params)?;
    check_sigma(params, sigma)?;
    let f = RadialProfile::perturbed(params, sigma)?;
    let eval = |r: f64| inverse_ratio(&f, r, q, params, spec);
    let mut probes = 0;
    let mut m = 1.0;
    let mut doublings = 0;
    loop {
        let grid = log_grid(m, 8.0 * m, PROBES_PER_OCTAVE);
        probes += grid.len();
        let vals = grid.par_iter().map(|&r| eval(r)).collect::<Result<Vec<_>>>()?;
        if vals.iter().all(|(v, _)| *v <= 1.0) {
            break;
        }
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::NonConvergence(format!("no M found up to {m}")));
        }
        m *= 2.0;
    }

    let grid = log_grid(m * ORIGIN_OFFSET, m, PROBES_PER_OCTAVE);
    probes += grid.len();
    let vals = grid.par_iter().map(|&r| eval(r)).collect::<Result<Vec<_>>>()?;
    let (best, _) = vals.iter().enumerate().fold((0, f64::NEG_INFINITY), |(bi, bv), (i, (v, _))| {
        if *v > bv {
            (i, *v)
        } else {
            (bi, bv)
        }
    });
    let (mut argmax, (mut max_ratio, mut max_err)) = (grid[best], vals[best]);
    if best > 0 && best + 1 < grid.len() {
        // golden section in ln r on the bracketing cells
        let (mut a, mut b) = (grid[best - 1].ln(), grid[best + 1].ln());
        let g = |x: f64| eval(x.exp());
        let mut c = b - PHI * (b - a);
        let mut d = a + PHI * (b - a);
        let (mut fc, mut fd) = (g(c)?, g(d)?);
        probes += 2;
        while (b - a) > 1e-4 * (1.0 + a.abs().max(b.abs())) {
            if fc.0 > fd.0 {
                b = d;
                d = c;
                fd = fc;
                c = b - PHI * (b - a);
                fc = g(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + PHI * (b - a);
                fd = g(d)?;
            }
            probes += 1;
        }
        // parabolic step through the last three abscissae
        let (x0, x1, x2) = (a, 0.5 * (a + b), b);
        let (y0, y1, y2) = (g(x0)?.0, g(x1)?.0, g(x2)?.0);
        probes += 3;
        let den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
        let mut cand = vec![(x1, y1), (c, fc.0), (d, fd.0)];
        if den.abs() > 0.0 {
            let x = x1 - 0.5 * ((x1 - x0).powi(2) * (y1 - y2) - (x1 - x2).powi(2) * (y1 - y0)) / den;
            if x > a && x < b {
                cand.push((x, g(x)?.0));
                probes += 1;
            }
        }
        let (x, _) = cand.into_iter().fold((x1, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
        let v = g(x)?;
        if v.0 > max_ratio {
            argmax = x.exp();
            (max_ratio, max_err) = v;
        }
    }
    let c_f = if max_ratio >= 1.0 { Estimate { value: max_ratio, error: max_err, ..Estimate::exact(0.0) } } else { Estimate::exact(1.0) };
    Ok(CfResult { m, c_f, argmax, max_ratio, probes })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Margin {
    pub r: f64,
    /// `(-Δ)^s_p u(r) - u(r)^q`
    pub margin: f64,
    pub error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SupersolutionReport {
    pub params: Params,
    pub sigma: f64,
    pub ratio_samples: Vec<RatioSample>,
    pub fitted_slope: f64,
    pub predicted_slope: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub c_f: Estimate,
    /// `c_f^{1/(p-q-1)}`
    pub scale: f64,
    pub verification: Vec<Margin>,
}

impl SupersolutionReport {
    /// Radii whose margin is below `-3·error`.
    pub fn offending(&self) -> Vec<(f64, f64)> {
        self.verification.iter().filter(|m| m.margin < -3.0 * m.error).map(|m| (m.r, m.margin)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }

    /// Ratio samples as CSV with columns `r,G,R,stderr`.
    pub fn ratio_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["r", "G", "R", "stderr"]).expect("in-memory write");
        for s in &self.ratio_samples {
            w.serialize((s.r, s.g.value, s.ratio, s.stderr)).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory write")).expect("csv is utf-8")
    }
}

pub const VERIFICATION_POINTS: usize = 100;
/// lower end of the verification radii, relative to `8M`
const VERIFY_OFFSET: f64 = 1e-4;

/// Default scan radii `10^{k/4}`, `k = 0..=16`.
pub fn default_radii() -> Vec<f64> {
    (0..=16).map(|k| 10f64.powf(k as f64 / 4.0)).collect()
}

/// `u = c_f^{1/(p-q-1)} f` together with the checks that justify it.
pub fn build_supersolution(params: &Params, spec: &QuadSpec) -> Result<SupersolutionReport> {
    let q = require_q(params)?;
    let sigma = match params.sigma {
        Some(s) => s,
        None => select_sigma(params)?,
    };
    check_sigma(params, sigma)?;
    let scan = ratio_scan(params, sigma, &default_radii(), spec)?;
    let cf = compute_cf(params, sigma, spec)?;
    let p = params.p;
    let scale = cf.c_f.value.powf(1.0 / (p - q - 1.0));
    let f = RadialProfile::perturbed(params, sigma)?;
    let top = 8.0 * cf.m;
    let lo = top * VERIFY_OFFSET;
    let k = VERIFICATION_POINTS - 1;
    let radii: Vec<f64> = (0..=k).map(|i| lo * (top / lo).powf(i as f64 / k as f64)).collect();
    let lift = scale.powf(p - 1.0);
    let verification = radii
        .par_iter()
        .map(|&r| {
            let d = pv_apply_radial(&f, r, params, spec)?;
            Ok(Margin { r, margin: lift * d.value - (scale * f.value(r)).powf(q), error: lift * d.error })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = SupersolutionReport {
        params: params.with_sigma(sigma)?,
        sigma,
        ratio_samples: scan.samples,
        fitted_slope: scan.fitted_slope,
        predicted_slope: scan.predicted_slope,
        m: cf.m,
        c_f: cf.c_f,
        scale,
        verification,
    };
    let bad = report.offending();
    if !bad.is_empty() {
        return Err(Error::VerificationFailure(bad));
    }
    Ok(report)
}
