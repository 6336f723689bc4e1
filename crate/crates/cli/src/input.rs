//! CSV ingestion: header row required, UTF-8, '.' decimal separator, no
//! missing values (rejected, never imputed).

use crate::CliError;
use signflip::nalgebra::{DMatrix, DVector};
use signflip::glm::{DesignData, Family, FamilyKind, Link};
use std::collections::HashSet;
use std::path::Path;

pub fn parse_family(
    family: &str,
    link: Option<&str>,
    nb_dispersion: f64,
) -> Result<Family, CliError> {
    let kind = match family {
        "gaussian" | "normal" => FamilyKind::Gaussian,
        "poisson" => FamilyKind::Poisson,
        "binomial" | "bernoulli" => FamilyKind::Binomial,
        "negative_binomial" | "negative-binomial" | "negbin" => FamilyKind::NegativeBinomial {
            dispersion: nb_dispersion,
        },
        other => {
            return Err(CliError::usage(format!(
                "unknown family '{other}'; expected gaussian, poisson, binomial, or negative_binomial"
            )))
        }
    };
    let link = match link {
        None => kind.canonical_link(),
        Some("identity") => Link::Identity,
        Some("log") => Link::Log,
        Some("logit") => Link::Logit,
        Some(other) => {
            return Err(CliError::usage(format!(
                "unknown link '{other}'; expected identity, log, or logit"
            )))
        }
    };
    Family::new(kind, link).map_err(|e| CliError::usage(e.to_string()))
}

/// Reads the named columns and assembles the design, optionally prepending
/// an intercept column to the nuisance block.
pub fn load_design(
    path: &Path,
    response: &str,
    target: &[String],
    nuisance: &[String],
    beta0: Option<&[f64]>,
    add_intercept: bool,
) -> Result<DesignData, CliError> {
    if target.is_empty() {
        return Err(CliError::usage("need at least one --target column"));
    }
    let mut seen = HashSet::new();
    for name in std::iter::once(&response.to_string())
        .chain(target.iter())
        .chain(nuisance.iter())
    {
        if !seen.insert(name.clone()) {
            return Err(CliError::usage(format!(
                "column '{name}' named more than once across response/target/nuisance"
            )));
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?
        .iter()
        .map(|s| s.to_string())
        .collect();

    let index_of = |name: &str| -> Result<usize, CliError> {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            CliError::data(format!(
                "{}: column '{name}' not found; available: {}",
                path.display(),
                headers.join(", ")
            ))
        })
    };

    let response_idx = index_of(response)?;
    let target_idx: Vec<usize> = target
        .iter()
        .map(|t| index_of(t))
        .collect::<Result<_, _>>()?;
    let nuisance_idx: Vec<usize> = nuisance
        .iter()
        .map(|t| index_of(t))
        .collect::<Result<_, _>>()?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let mut row = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            if field.is_empty() {
                return Err(CliError::data(format!(
                    "{}: missing value at row {}, column '{}'",
                    path.display(),
                    line + 2,
                    headers.get(col).map(String::as_str).unwrap_or("?")
                )));
            }
            let value: f64 = field.parse().map_err(|_| {
                CliError::data(format!(
                    "{}: non-numeric value '{field}' at row {}, column '{}'",
                    path.display(),
                    line + 2,
                    headers.get(col).map(String::as_str).unwrap_or("?")
                ))
            })?;
            row.push(value);
        }
        rows.push(row);
    }
    let n = rows.len();
    if n == 0 {
        return Err(CliError::data(format!(
            "{}: no data rows",
            path.display()
        )));
    }

    let d = target_idx.len();
    let q_named = nuisance_idx.len();
    let q = q_named + usize::from(add_intercept);
    let y = DVector::from_fn(n, |i, _| rows[i][response_idx]);
    let x = DMatrix::from_fn(n, d, |i, j| rows[i][target_idx[j]]);
    let z = DMatrix::from_fn(n, q, |i, j| {
        if add_intercept && j == 0 {
            1.0
        } else {
            let named = if add_intercept { j - 1 } else { j };
            rows[i][nuisance_idx[named]]
        }
    });

    let beta0 = match beta0 {
        None => DVector::zeros(d),
        Some(values) => {
            if values.len() != d {
                return Err(CliError::usage(format!(
                    "--beta0 has {} entries for {d} target columns",
                    values.len()
                )));
            }
            DVector::from_row_slice(values)
        }
    };

    DesignData::new(y, x, z, beta0).map_err(CliError::from)
}
