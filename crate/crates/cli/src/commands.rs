use clap::{Args, ValueEnum};
use fraclab_core::dirichlet::{self, DiscreteField, Grid, Init, SolveOptions};
use fraclab_core::liouville::build_supersolution;
use fraclab_core::params::{classify, feasible_sigma_interval, RegimeKind};
use fraclab_core::pvop::{pv_apply, PvRequest};
use fraclab_core::weakform::{
    bracket, bracket_quadrature_1d, fundamental_constant, fundamental_constant_quadrature, BracketRequest,
};
use fraclab_core::{Error, Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Settings;
use crate::fieldspec::{self, parse_list};
use crate::record::{csv_table, opt, Output, Record};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Monte Carlo in any dimension
    Mc,
    /// nested adaptive quadrature, n = 1 only
    Quadrature,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct NoOpts {}

pub fn run_classify(set: &Settings, _: &NoOpts) -> Result<Output, CliError> {
    let params = set.params()?;
    let regime = classify(&params)?;
    let kind = format!("{:?}", regime.kind);
    let rec = Record::new("classify", Some(params), &set.quad)
        .with_result(json!({"regime": kind, "q_star": regime.q_star}));
    let mut rec = rec;
    rec.value = regime.q_star;
    let csv = csv_table(
        &["op", "n", "s", "p", "q", "regime", "q_star"],
        vec![vec![
            "classify".into(),
            params.n.to_string(),
            params.s.to_string(),
            params.p.to_string(),
            opt(params.q),
            kind,
            opt(regime.q_star),
        ]],
    );
    Ok(Output { records: vec![rec], csv })
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ConstantOpts {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
}

fn estimate_row(op: &str, params: &Params, extra: &[String], e: &fraclab_core::Estimate, seed: u64) -> Vec<String> {
    let mut row = vec![op.to_string(), params.n.to_string(), params.s.to_string(), params.p.to_string()];
    row.extend(extra.iter().cloned());
    row.extend([
        e.value.to_string(),
        e.error.to_string(),
        e.evals.to_string(),
        seed.to_string(),
        crate::record::VERSION.to_string(),
    ]);
    row
}

pub fn run_constant(set: &Settings, o: &ConstantOpts) -> Result<Output, CliError> {
    let params = set.params()?;
    let e = match o.method.unwrap_or(Method::Mc) {
        Method::Mc => fundamental_constant(&params, &set.quad)?,
        Method::Quadrature => fundamental_constant_quadrature(&params, &set.quad)?,
    };
    let rec = Record::new("constant", Some(params), &set.quad).with_estimate(&e);
    let csv = csv_table(
        &["op", "n", "s", "p", "value", "error", "evals", "seed", "version"],
        vec![estimate_row("constant", &params, &[], &e, set.quad.seed)],
    );
    Ok(Output { records: vec![rec], csv })
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ApplyOpts {
    /// Field to apply the operator to (see `fraclab help`)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    /// Evaluation point, comma separated
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub at: Option<String>,
}

pub fn run_apply(set: &Settings, o: &ApplyOpts) -> Result<Output, CliError> {
    let params = set.params()?;
    let spec = o.field.as_deref().ok_or(CliError::Usage("--field is required".into()))?;
    let at = parse_list(o.at.as_deref().ok_or(CliError::Usage("--at is required".into()))?)?;
    let u = fieldspec::build(spec, &params, &set.quad)?;
    let e = pv_apply(&PvRequest { field: &u, point: &at, params: &params, spec: &set.quad })?;
    let rec = Record::new("apply", Some(params), &set.quad)
        .with_estimate(&e)
        .with_result(json!({"field": spec, "at": at}));
    let x = at.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";");
    let csv = csv_table(
        &["op", "n", "s", "p", "field", "x", "value", "error", "evals", "seed", "version"],
        vec![estimate_row("apply", &params, &[spec.to_string(), x], &e, set.quad.seed)],
    );
    Ok(Output { records: vec![rec], csv })
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct BracketOpts {
    /// First argument of the bracket
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<String>,
    /// Compactly supported test function
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phi: Option<String>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
}

pub fn run_bracket(set: &Settings, o: &BracketOpts) -> Result<Output, CliError> {
    let params = set.params()?;
    let us = o.u.as_deref().ok_or(CliError::Usage("--u is required".into()))?;
    let ps = o.phi.as_deref().ok_or(CliError::Usage("--phi is required".into()))?;
    let u = fieldspec::build(us, &params, &set.quad)?;
    let phi = fieldspec::build(ps, &params, &set.quad)?;
    let req = BracketRequest { u: &u, phi: &phi, params: &params, spec: &set.quad };
    let e = match o.method.unwrap_or(Method::Mc) {
        Method::Mc => bracket(&req)?,
        Method::Quadrature => bracket_quadrature_1d(&req)?,
    };
    let rec = Record::new("bracket", Some(params), &set.quad)
        .with_estimate(&e)
        .with_result(json!({"u": us, "phi": ps}));
    let csv = csv_table(
        &["op", "n", "s", "p", "u", "phi", "value", "error", "evals", "seed", "version"],
        vec![estimate_row("bracket", &params, &[us.to_string(), ps.to_string()], &e, set.quad.seed)],
    );
    Ok(Output { records: vec![rec], csv })
}

pub fn run_supersolution(set: &Settings, _: &NoOpts) -> Result<Output, CliError> {
    let params = set.params()?;
    let report = build_supersolution(&params, &set.quad)?;
    let mut rec = Record::new("supersolution", Some(params), &set.quad).with_estimate(&report.c_f);
    rec.evals = None;
    let rec = rec.with_result(serde_json::to_value(&report).expect("report serializes"));
    Ok(Output { records: vec![rec], csv: report.ratio_csv() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Mean,
    Random,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct DirichletOpts {
    /// Grid dimension, 1 or 2 (defaults to --n, then 1)
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Interior nodes per side
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    /// Collar data: constant:C, linear:A (A·x0), sin:K (sin(K·x0)) or random:A (uniform on [-A, A])
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub g: Option<String>,
    /// Gradient-norm stopping tolerance
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitKind>,
    /// Solve the linear system directly (p = 2 only)
    #[arg(long)]
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub direct: bool,
}

fn collar_data(grid: &Grid, spec: &str, seed: u64) -> Result<DiscreteField, CliError> {
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, "1"));
    let a: f64 = arg.parse().map_err(|_| CliError::Usage(format!("bad collar data argument {arg:?}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = match kind {
        "constant" => grid.sample(|_| a),
        "linear" => grid.sample(|x| a * x[0]),
        "sin" => grid.sample(|x| (a * x[0]).sin()),
        "random" => grid.sample(|_| rng.random_range(-a..=a)),
        other => return Err(CliError::Usage(format!("unknown collar data kind {other:?}"))),
    };
    for &i in grid.interior_nodes() {
        g.values[i] = 0.0;
    }
    Ok(g)
}

pub fn run_dirichlet(set: &Settings, o: &DirichletOpts) -> Result<Output, CliError> {
    let dim = o.dim.or(set.n).unwrap_or(1);
    let s = set.s.ok_or(CliError::Usage("--s is required".into()))?;
    let p = set.p.ok_or(CliError::Usage("--p is required".into()))?;
    let params = Params::new(dim, s, p)?;
    let m = o.nodes.ok_or(CliError::Usage("--N is required".into()))?;
    let grid = Grid::uniform(dim, m)?;
    let g = collar_data(&grid, o.g.as_deref().unwrap_or("constant:0"), set.quad.seed)?;
    let (field, energy, grad_norm, iterations, converged) = if o.direct {
        let u = dirichlet::solve_dirichlet_direct(&g, &grid, &params)?;
        let e = dirichlet::discrete_energy(&u, &grid, &params)?;
        (u, e, None, None, true)
    } else {
        let defaults = SolveOptions::default();
        let init = match o.init.unwrap_or(InitKind::Mean) {
            InitKind::Mean => Init::CollarMean,
            InitKind::Random => Init::Random { seed: set.quad.seed },
        };
        let opts = SolveOptions {
            tol: o.tol.unwrap_or(defaults.tol),
            max_iters: o.max_iters.unwrap_or(defaults.max_iters),
            init,
            ..defaults
        };
        let sol = dirichlet::solve_dirichlet_best(&g, &grid, &params, &opts)?;
        (sol.field, sol.energy, Some(sol.grad_norm), Some(sol.iterations), sol.converged)
    };
    let mut rec = Record::new("dirichlet", Some(params), &set.quad).with_result(json!({
        "grid": grid.header(&params),
        "method": if o.direct { "direct" } else { "gradient" },
        "converged": converged,
        "values": field.values,
    }));
    rec.value = Some(energy);
    rec.error = grad_norm;
    rec.evals = iterations;
    let out = Output { records: vec![rec], csv: grid.to_csv(&field)? };
    if !converged {
        return Err(CliError::Partial(out, Error::MaxItersExceeded { grad_norm: grad_norm.unwrap_or(f64::NAN) }));
    }
    Ok(out)
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
pub struct ScanOpts {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_from: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q_to: Option<f64>,
    /// Number of q values, endpoints included
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    /// Also build and verify the supersolution at every supercritical q
    #[arg(long)]
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub build: bool,
}

pub fn run_scan(set: &Settings, o: &ScanOpts) -> Result<Output, CliError> {
    let base = Params { q: None, sigma: None, ..set.params()? };
    let lo = o.q_from.ok_or(CliError::Usage("--q-from is required".into()))?;
    let hi = o.q_to.ok_or(CliError::Usage("--q-to is required".into()))?;
    let steps = o.steps.unwrap_or(2);
    if steps == 0 {
        return Err(CliError::Usage("--steps must be positive".into()));
    }
    let mut records = Vec::new();
    let mut rows = Vec::new();
    for k in 0..steps {
        let q = if steps == 1 { lo } else { lo + (hi - lo) * k as f64 / (steps - 1) as f64 };
        let params = base.with_q(q)?;
        let regime = classify(&params)?;
        let sigma_max = if regime.kind == RegimeKind::SupercriticalQ {
            Some(feasible_sigma_interval(&params)?.1)
        } else {
            None
        };
        let feasible = sigma_max.is_some_and(|m| m > 0.0);
        let verified = if o.build && feasible {
            match build_supersolution(&params, &set.quad) {
                Ok(_) => Some(true),
                Err(Error::VerificationFailure(_)) => Some(false),
                Err(e) => return Err(e.into()),
            }
        } else {
            None
        };
        let kind = format!("{:?}", regime.kind);
        let mut rec = Record::new("scan-q", Some(params), &set.quad).with_result(json!({
            "regime": kind,
            "q_star": regime.q_star,
            "sigma_max": sigma_max,
            "feasible": feasible,
            "verified": verified,
        }));
        rec.value = Some(q);
        records.push(rec);
        rows.push(vec![
            q.to_string(),
            kind,
            opt(regime.q_star),
            opt(sigma_max),
            feasible.to_string(),
            verified.map(|v| v.to_string()).unwrap_or_default(),
        ]);
    }
    let csv = csv_table(&["q", "regime", "q_star", "sigma_max", "feasible", "verified"], rows);
    Ok(Output { records, csv })
}
