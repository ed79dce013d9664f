//! Acceptance criteria, one line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the report is always printed.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::Instant;

use fraclab_core::dirichlet::*;
use fraclab_core::fields::{cutoff_field, make_field, RadialProfile};
use fraclab_core::liouville::{lambda_star, phi_t, ratio_scan};
use fraclab_core::pvop::{g_limit, g_of_r, pv_apply, PvRequest};
use fraclab_core::quad::mc::{BoxUniform, Gaussian, RadialLaw};
use fraclab_core::quad::{ball_volume, integrate_1d, integrate_breaks, integrate_nested, mc_integrate, sphere_measure, Endpoints};
use fraclab_core::weakform::{bracket, cutoff_bracket, fundamental_constant, normalize_fundamental, scaling_check, BracketRequest};
use fraclab_core::{Estimate, Params, QuadSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn mc(budget: usize) -> QuadSpec {
    QuadSpec::default().with_budget(budget)
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `π^n Γ(s)Γ(1-s) / (s Γ(n/2+s) Γ(n/2-s))`: the inverse of the classical
/// fractional-Laplacian constant times the Riesz-potential constant.
fn c_star_p2(n: usize, s: f64) -> f64 {
    let h = n as f64 / 2.0;
    PI.powi(n as i32) * gamma(s) * gamma(1.0 - s) / (s * gamma(h + s) * gamma(h - s))
}

fn weak_identity() -> Outcome {
    let start = Instant::now();
    let params = Params::new(1, 0.3, 2.5).map_err(|e| e.to_string())?;
    let c = fundamental_constant(&params, &mc(10_000_000)).map_err(|e| e.to_string())?;
    let u = normalize_fundamental(&c, &params).map_err(|e| e.to_string())?;
    let rel_c = c.error / c.value.abs();
    let mut ok = true;
    let mut parts = vec![format!("c* = {:.5} ± {:.1e}", c.value, c.error)];
    for (k, shift) in [0.0, 0.5, -1.0].into_iter().enumerate() {
        let phi = cutoff_field(1, 0.5).map_err(|e| e.to_string())?.shifted(&[shift]);
        let phi0 = phi.value(&[0.0]);
        let spec = mc(2_000_000).with_seed(100 + k as u64);
        let b = bracket(&BracketRequest { u: &u, phi: &phi, params: &params, spec: &spec }).map_err(|e| e.to_string())?;
        let combined = b.error.hypot(b.value * rel_c);
        // 5% of φ(0) = 1 and an absolute 0.05 where φ(0) = 0
        let tol = (0.05 * phi0.abs().max(1.0)).max(3.0 * combined);
        ok &= (b.value - phi0).abs() <= tol;
        parts.push(format!("center {shift}: {:.4} vs {phi0} (tol {:.3})", b.value, tol));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs <= 600.0;
    parts.push(format!("{secs:.0} s"));
    check(ok, parts.join("; "))
}

fn p2_anchor() -> Outcome {
    let oracle = c_star_p2(1, 0.3);
    if (oracle - 7.608335561673995).abs() > 1e-9 {
        return Err(format!("closed form gives {oracle}"));
    }
    let params = Params::new(1, 0.3, 2.0).map_err(|e| e.to_string())?;
    let c = fundamental_constant(&params, &mc(10_000_000)).map_err(|e| e.to_string())?;
    let rel = (c.value - oracle).abs() / oracle;
    check(rel <= 0.02, format!("c* = {:.5} ± {:.1e} vs {oracle:.6} ({:.2}%)", c.value, c.error, 100.0 * rel))
}

fn scaling_law() -> Outcome {
    let params = Params::new(2, 0.5, 3.0).map_err(|e| e.to_string())?;
    let reference = [1.0, 0.0];
    let mut worst: f64 = 0.0;
    for (k, (r, angle)) in [(0.5, 0.3), (1.5, 1.1), (2.0, 2.0), (3.0, 2.9), (4.0, 4.0)].into_iter().enumerate() {
        let z = [r * f64::cos(angle), r * f64::sin(angle)];
        let spec = mc(1_000_000).with_seed(200 + 2 * k as u64);
        let rep = scaling_check(&params, &z, &reference, &spec).map_err(|e| e.to_string())?;
        worst = worst.max(rep.deviation());
    }
    check(worst <= 3.0, format!("max deviation {worst:.2} stderr over 5 radii"))
}

fn harmonicity() -> Outcome {
    let mut worst: f64 = 0.0;
    for params in [Params::new(2, 0.5, 2.0), Params::new(1, 0.3, 2.5)] {
        let params = params.map_err(|e| e.to_string())?;
        let u = make_field(&RadialProfile::fundamental(&params).map_err(|e| e.to_string())?);
        let spec = QuadSpec::default();
        for k in 0..10 {
            let r = 0.5 * 16f64.powf(k as f64 / 9.0);
            let x: Vec<f64> = if params.n == 1 {
                vec![if k % 2 == 0 { r } else { -r }]
            } else {
                let a = 0.7 * k as f64;
                vec![r * a.cos(), r * a.sin()]
            };
            let e = pv_apply(&PvRequest { field: &u, point: &x, params: &params, spec: &spec }).map_err(|e| e.to_string())?;
            let ratio = if e.value == 0.0 { 0.0 } else { e.value.abs() / e.error };
            worst = worst.max(ratio);
        }
    }
    check(worst <= 3.0, format!("max |value|/error {worst:.2} over 20 points"))
}

fn phi_machinery() -> Outcome {
    let params = Params::new(2, 0.5, 2.0).and_then(|p| p.with_q(4.0)).map_err(|e| e.to_string())?;
    let sigma = 0.25;
    let grid: Vec<f64> = (1..=99).map(|i| i as f64 / 100.0).collect();
    let phi = |t: f64, l: f64| phi_t(t, l, &params, sigma).map_err(|e| e.to_string());
    let mut min_phi = f64::INFINITY;
    for &t in &grid {
        for &l in &grid {
            min_phi = min_phi.min(phi(t, l)?);
        }
    }
    let (a, b) = (params.perturbed_exponent(sigma), sigma / (params.p - 1.0));
    let (mut worst_d, mut worst_0) = (0.0f64, 0.0f64);
    let mut ends = true;
    for &t in &grid {
        let l = lambda_star(t, &params, sigma).map_err(|e| e.to_string())?;
        let h = 1e-5 * l.min(1.0 - l);
        worst_d = worst_d.max(((phi(t, l + h)? - phi(t, l - h)?) / (2.0 * h)).abs());
        ends &= phi(t, 1.0)? == 0.0;
        let closed = (t.powf(a) - 1.0) * (t.powf(-b) - 1.0);
        worst_0 = worst_0.max((phi(t, 0.0)? - closed).abs() / closed.abs().max(1.0));
    }
    check(
        min_phi > 0.0 && worst_d <= 1e-8 && ends && worst_0 <= 1e-12,
        format!("min φ {min_phi:.2e}, max |φ'(λ*)| {worst_d:.1e}, φ(1) = 0: {ends}, φ(0) rel gap {worst_0:.1e}"),
    )
}

fn supersolution_growth() -> Outcome {
    let params = Params::new(2, 0.5, 2.0).and_then(|p| p.with_q(4.0)).map_err(|e| e.to_string())?;
    let sigma = 0.25;
    let spec = QuadSpec::default();
    let radii: Vec<f64> = (8..=16).map(|k| 10f64.powf(k as f64 / 4.0)).collect();
    let scan = ratio_scan(&params, sigma, &radii, &spec).map_err(|e| e.to_string())?;
    let pts: Vec<(f64, f64)> = scan.samples.iter().map(|s| (s.r.ln(), s.ratio.ln())).collect();
    let slope = fit_slope(&pts);
    let g3 = g_of_r(&params, sigma, 1e3, &spec).map_err(|e| e.to_string())?;
    let g4 = g_of_r(&params, sigma, 1e4, &spec).map_err(|e| e.to_string())?;
    let change = (g4.value / g3.value - 1.0).abs();
    let lim = g_limit(&params, sigma, &spec).map_err(|e| e.to_string())?;
    check(
        (slope / 1.25 - 1.0).abs() <= 0.05 && change <= 0.02 && lim.value - 3.0 * lim.error > 0.0,
        format!("slope {slope:.4} vs 1.25, G change {:.3}%, G_limit {:.5} ± {:.1e}", 100.0 * change, lim.value, lim.error),
    )
}

fn end_to_end() -> Outcome {
    let out = Command::new(env!("CARGO_BIN_EXE_fraclab"))
        .args(["supersolution", "--n", "2", "--s", "0.5", "--p", "2", "--q", "4", "--sigma", "0.25"])
        .output()
        .map_err(|e| e.to_string())?;
    let code = out.status.code();
    let text = String::from_utf8_lossy(&out.stdout);
    let rec: serde_json::Value = serde_json::from_str(text.lines().next().unwrap_or("null")).map_err(|e| e.to_string())?;
    let margins = rec["result"]["verification"].as_array().cloned().unwrap_or_default();
    let bad = margins
        .iter()
        .filter(|m| m["margin"].as_f64().unwrap_or(f64::NAN) < -3.0 * m["error"].as_f64().unwrap_or(f64::NAN) || m["margin"].is_null())
        .count();
    check(
        code == Some(0) && margins.len() == 100 && bad == 0,
        format!("exit {code:?}, {} margins, {bad} below -3·error", margins.len()),
    )
}

fn cutoff_scaling() -> Outcome {
    let params = Params::new(2, 0.5, 2.0).map_err(|e| e.to_string())?;
    let f = make_field(&RadialProfile::perturbed(&params, 0.25).map_err(|e| e.to_string())?);
    let spec = mc(400_000);
    let mut pts = Vec::new();
    for k in 0..=6 {
        let r = 2f64.powi(k);
        let e = cutoff_bracket(&f, r, &params, &spec.with_seed(300 + k as u64)).map_err(|e| e.to_string())?;
        pts.push((r.ln(), e.value.ln()));
    }
    let slope = fit_slope(&pts);
    let bound = params.nf() - params.sp() + 0.1;
    check(slope <= bound, format!("slope {slope:.4} (bound {bound})"))
}

fn random_collar(grid: &Grid, rng: &mut ChaCha8Rng) -> DiscreteField {
    let mut g = DiscreteField::constant(grid.len(), 0.0);
    for k in grid.collar_nodes() {
        g.values[k] = rng.random_range(-1.0..1.0);
    }
    g
}

fn dirichlet_solver() -> Outcome {
    let e = |err: fraclab_core::Error| err.to_string();
    let opts = SolveOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut max_principle = true;
    let in_range = |g: &DiscreteField, u: &DiscreteField, grid: &Grid| {
        let c = grid.collar_nodes();
        let lo = c.iter().map(|&k| g.values[k]).fold(f64::INFINITY, f64::min);
        let hi = c.iter().map(|&k| g.values[k]).fold(f64::NEG_INFINITY, f64::max);
        grid.interior_nodes().iter().all(|&i| u.values[i] >= lo - 1e-8 && u.values[i] <= hi + 1e-8)
    };

    let grid = Grid::uniform(1, 64).map_err(e)?;
    let p2 = Params::new(1, 0.5, 2.0).map_err(e)?;
    let g = random_collar(&grid, &mut rng);
    let direct = solve_dirichlet_direct(&g, &grid, &p2).map_err(e)?;
    let a = solve_dirichlet(&g, &grid, &p2, &SolveOptions { init: Init::Random { seed: 1 }, ..opts.clone() }).map_err(e)?;
    let b = solve_dirichlet(&g, &grid, &p2, &SolveOptions { init: Init::Random { seed: 2 }, ..opts.clone() }).map_err(e)?;
    let gap_direct = a.field.sup_distance(&direct);
    let gap_unique = a.field.sup_distance(&b.field);
    max_principle &= in_range(&g, &a.field, &grid) && in_range(&g, &b.field, &grid);

    let small = Grid::uniform(1, 32).map_err(e)?;
    let mut violations = 0;
    for p in [1.5, 3.0] {
        let params = Params::new(1, 0.5, p).map_err(e)?;
        for _ in 0..20 {
            let g2 = random_collar(&small, &mut rng);
            let mut g1 = g2.clone();
            for k in small.collar_nodes() {
                g1.values[k] += rng.random_range(0.0..0.5);
            }
            match comparison_test(&g1, &g2, &small, &params, &opts) {
                Ok(r) => max_principle &= in_range(&g1, &r.u1.field, &small) && in_range(&g2, &r.u2.field, &small),
                Err(fraclab_core::Error::ComparisonViolation(nodes)) => violations += nodes.len(),
                Err(other) => return Err(other.to_string()),
            }
        }
    }

    let fd_grid = Grid::new(1, 1.5, 0.2, Region::Box { half: 0.7 }).map_err(e)?;
    let mut worst_fd: f64 = 0.0;
    for p in [1.5, 2.0, 3.0] {
        let params = Params::new(1, 0.5, p).map_err(e)?;
        let u = fd_grid.sample(|_| rng.random_range(-1.0..1.0));
        let grad = energy_gradient(&u, &fd_grid, &params).map_err(e)?;
        for i in 0..fd_grid.len() {
            let d = 1e-5;
            let mut up = u.clone();
            let mut dn = u.clone();
            up.values[i] += d;
            dn.values[i] -= d;
            let fd = (discrete_energy(&up, &fd_grid, &params).map_err(e)? - discrete_energy(&dn, &fd_grid, &params).map_err(e)?)
                / (2.0 * d);
            worst_fd = worst_fd.max((fd - grad.values[i]).abs() / grad.values[i].abs().max(1e-3));
        }
    }
    check(
        gap_direct <= 1e-6 && gap_unique <= 1e-6 && violations == 0 && max_principle && worst_fd <= 1e-6,
        format!(
            "direct gap {gap_direct:.1e}, uniqueness gap {gap_unique:.1e}, {violations} comparison violations, \
             max principle {max_principle}, gradient FD {worst_fd:.1e}"
        ),
    )
}

/// `∫_K |x-y|^{α-n} dy` over a box, by the quadrature engine.
fn riesz_on_box(x: &[f64], lo: &[f64], hi: &[f64], alpha: f64, seed: u64) -> Result<(Estimate, f64), String> {
    let n = x.len();
    let e = |err: fraclab_core::Error| err.to_string();
    let tol = QuadSpec { rel_tol: 1e-6, ..QuadSpec::default() };
    let breaks = |a: f64, b: f64, c: f64| {
        let mut pts = vec![a, b];
        let mut flags = vec![false, false];
        if c > a && c < b {
            pts.insert(1, c);
            flags.insert(1, true);
        } else if c == a {
            flags[0] = true;
        } else if c == b {
            flags[1] = true;
        }
        (pts, flags)
    };
    // offsets z = y - x keep the singular point at 0, where floats resolve it
    let (zlo, zhi): (Vec<f64>, Vec<f64>) = (lo.iter().zip(x).map(|(a, c)| a - c).collect(), hi.iter().zip(x).map(|(b, c)| b - c).collect());
    match n {
        1 => {
            let (pts, flags) = breaks(zlo[0], zhi[0], 0.0);
            let q = integrate_breaks(|z| z.abs().powf(alpha - 1.0), &pts, &flags, tol.tol(), tol.max_evals).map_err(e)?;
            Ok((q.estimate, 1.0))
        }
        2 => {
            let (pts, flags) = breaks(zlo[0], zhi[0], 0.0);
            let est = integrate_nested(
                |z0| {
                    let (ip, ifl) = breaks(zlo[1], zhi[1], 0.0);
                    integrate_breaks(|z1| (z0 * z0 + z1 * z1).powf(0.5 * (alpha - 2.0)), &ip, &ifl, tol.tol(), tol.max_evals)
                        .map(|q| q.estimate)
                },
                &pts,
                &flags,
                tol.tol(),
                tol.max_evals,
            )
            .map_err(e)?;
            Ok((est, 1.0))
        }
        _ => {
            let reach = lo
                .iter()
                .zip(hi)
                .zip(x)
                .map(|((a, b), c)| (c - a).abs().max((b - c).abs()).powi(2))
                .sum::<f64>()
                .sqrt();
            let law = RadialLaw::new(x.to_vec(), reach, alpha, None);
            let cube = BoxUniform { lo: lo.to_vec(), hi: hi.to_vec() };
            let est = mc_integrate(
                n,
                &law,
                |y| {
                    if cube.contains(y) {
                        y.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt().powf(alpha - n as f64)
                    } else {
                        0.0
                    }
                },
                &mc(200_000).with_seed(seed),
            )
            .map_err(e)?;
            // Monte Carlo results carry a 3·stderr allowance
            Ok((est, 3.0))
        }
    }
}

fn quadrature_engine() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut violations = 0;
    let mut worst_basic: f64 = 0.0;
    let mut worst_tail: f64 = 0.0;
    for k in 0..100 {
        let n = 1 + k % 3;
        if k < 50 {
            let lo: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..0.0)).collect();
            let hi: Vec<f64> = lo.iter().map(|a| a + rng.random_range(0.2..2.0)).collect();
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.random_range(a - 0.5..b + 0.5)).collect();
            let alpha = rng.random_range(0.1..0.95) * n as f64;
            let (est, slack) = riesz_on_box(&x, &lo, &hi, alpha, k as u64)?;
            let volume: f64 = lo.iter().zip(&hi).map(|(a, b)| b - a).product();
            let bound = sphere_measure(n) / alpha * (volume / ball_volume(n)).powf(alpha / n as f64);
            if est.value - slack * est.error > bound {
                violations += 1;
            }
            worst_basic = worst_basic.max(est.value / bound);
        } else {
            let alpha = rng.random_range(0.1..3.0);
            let r = rng.random_range(0.1..10.0);
            let spec = QuadSpec { rel_tol: 1e-8, ..QuadSpec::default() };
            let est = if n == 1 {
                let f = |z: f64| z.abs().powf(-alpha - 1.0);
                let q = integrate_breaks(f, &[f64::NEG_INFINITY, -r], &[false, false], spec.tol(), spec.max_evals)
                    .map_err(|e| e.to_string())?;
                let q2 = integrate_breaks(f, &[r, f64::INFINITY], &[false, false], spec.tol(), spec.max_evals)
                    .map_err(|e| e.to_string())?;
                q.estimate.plus(q2.estimate)
            } else {
                integrate_1d(|rho| rho.powf(-alpha - 1.0), r, f64::INFINITY, Endpoints::NONE, &spec)
                    .map_err(|e| e.to_string())?
                    .scale(sphere_measure(n))
            };
            let bound = sphere_measure(n) / alpha * r.powf(-alpha);
            if est.value - est.error > bound * (1.0 + 1e-12) {
                violations += 1;
            }
            worst_tail = worst_tail.max(est.value / bound);
        }
    }

    let gauss = Gaussian { center: vec![0.0, 0.0], sigma: 1.2 };
    let smooth = |x: &[f64]| (-(x[0] * x[0] + x[1] * x[1])).exp() * (1.0 + x[0].cos());
    let a = mc_integrate(2, &gauss, smooth, &mc(200_000)).map_err(|e| e.to_string())?;
    let a2 = mc_integrate(2, &gauss, smooth, &mc(200_000)).map_err(|e| e.to_string())?;
    let b = mc_integrate(2, &gauss, smooth, &mc(400_000)).map_err(|e| e.to_string())?;
    let halving = b.error / a.error / std::f64::consts::FRAC_1_SQRT_2;
    let bitwise = a.value.to_bits() == a2.value.to_bits() && a.error.to_bits() == a2.error.to_bits();

    let run = || {
        Command::new(env!("CARGO_BIN_EXE_fraclab"))
            .args(["constant", "--n", "2", "--s", "0.5", "--p", "2", "--mc-budget", "200000", "--seed", "5"])
            .output()
            .map(|o| o.stdout)
            .map_err(|e| e.to_string())
    };
    let bytes = run()? == run()?;
    check(
        violations == 0 && bitwise && bytes && (halving - 1.0).abs() <= 0.2,
        format!(
            "{violations} bound violations in 100 configurations (max ratio {worst_basic:.3} / {worst_tail:.9}), \
             bitwise {bitwise}, byte-identical CLI {bytes}, stderr ratio {:.3}·(1/√2)",
            halving
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("fundamental-solution weak identity", weak_identity),
        ("p=2 analytic anchor for c*", p2_anchor),
        ("scaling law of the pole integral", scaling_law),
        ("harmonicity off the origin", harmonicity),
        ("phi_t machinery", phi_machinery),
        ("supersolution growth", supersolution_growth),
        ("end-to-end supersolution", end_to_end),
        ("cutoff-bracket scaling", cutoff_scaling),
        ("Dirichlet solver", dirichlet_solver),
        ("quadrature engine", quadrature_engine),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.1} s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.1} s]", k + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
