//! Field arguments: `kind[:value][@x1,x2,...]` or `@file.json` holding a
//! profile descriptor.
//!
//! kinds: `fundamental`, `normalized` (fundamental solution scaled by c*),
//! `perturbed`, `constant:C`, `cutoff:R`, `gaussian:W`, `power:BETA`.

use fraclab_core::fields::{make_field, Descriptor, RadialProfile, ScalarField};
use fraclab_core::params::select_sigma;
use fraclab_core::weakform::{fundamental_constant, normalize_fundamental};
use fraclab_core::{Params, QuadSpec};

use crate::CliError;

pub fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| CliError::Usage(format!("not a number: {t:?}"))))
        .collect()
}

pub fn build(spec: &str, params: &Params, quad: &QuadSpec) -> Result<ScalarField, CliError> {
    let n = params.n;
    if let Some(path) = spec.strip_prefix('@') {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{path}: {e}")))?;
        let d: Descriptor = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{path}: {e}")))?;
        return Ok(make_field(&RadialProfile::from_descriptor(&d)?));
    }
    let (body, center) = match spec.split_once('@') {
        Some((b, c)) => (b, Some(parse_list(c)?)),
        None => (spec, None),
    };
    let (kind, arg) = match body.split_once(':') {
        Some((k, a)) => {
            let v = a.parse::<f64>().map_err(|_| CliError::Usage(format!("bad field argument {a:?}")))?;
            (k, Some(v))
        }
        None => (body, None),
    };
    let need = |what: &str| arg.ok_or_else(|| CliError::Usage(format!("field {kind} needs :{what}")));
    let field = match kind {
        "fundamental" => make_field(&RadialProfile::fundamental(params)?),
        "normalized" => {
            let c = fundamental_constant(params, quad)?;
            normalize_fundamental(&c, params)?
        }
        "perturbed" => {
            let sigma = match params.sigma {
                Some(s) => s,
                None => select_sigma(params)?,
            };
            make_field(&RadialProfile::perturbed(params, sigma)?)
        }
        "constant" => ScalarField::constant(n, need("C")?),
        "cutoff" => make_field(&RadialProfile::cutoff(n, need("R")?)?),
        "gaussian" => make_field(&RadialProfile::gaussian(n, need("W")?)?),
        "power" => make_field(&RadialProfile::homogeneous(n, need("BETA")?)?),
        other => return Err(CliError::Usage(format!("unknown field kind {other:?}"))),
    };
    match center {
        Some(c) if c.len() != n => Err(CliError::Usage(format!("center has {} coordinates for n = {n}", c.len()))),
        Some(c) => Ok(field.shifted(&c)),
        None => Ok(field),
    }
}
