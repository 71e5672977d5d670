//! File formats: problem files, measure files and the JSON writer.

use std::fs;
use std::path::Path;

use curve_moments::{AtomicMeasure2D, BivariateMomentSequence, CurveSpec, ToleranceConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Number, Value};

use crate::args::TolArgs;
use crate::error::CliError;

/// A curve as written in files and on the command line: a shorthand string
/// or the ascending coefficients `q_0, ..., q_l` of `y = q(x)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum CurveDescriptor {
    Shorthand(String),
    Coefficients(Vec<f64>),
}

// Read through `Value`: untagged buffering loses arbitrary precision numbers.
impl<'de> Deserialize<'de> for CurveDescriptor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let expected = "a curve shorthand string or a list of coefficients";
        match Value::deserialize(d)? {
            Value::String(s) => Ok(CurveDescriptor::Shorthand(s)),
            Value::Array(items) => items
                .iter()
                .map(|c| c.as_f64().ok_or_else(|| serde::de::Error::custom(format!("expected {expected}"))))
                .collect::<Result<_, _>>()
                .map(CurveDescriptor::Coefficients),
            _ => Err(serde::de::Error::custom(format!("expected {expected}"))),
        }
    }
}

impl CurveDescriptor {
    pub fn to_curve(&self) -> Result<CurveSpec, CliError> {
        match self {
            CurveDescriptor::Shorthand(s) => parse_shorthand(s),
            CurveDescriptor::Coefficients(q) => {
                if q.len() < 2 || q.iter().any(|c| !c.is_finite()) {
                    return Err(CliError::Curve(format!("{q:?}")));
                }
                Ok(CurveSpec::graph(q.clone()))
            }
        }
    }

    /// Shorthand where one exists, coefficients otherwise.
    pub fn describe(curve: &CurveSpec) -> Self {
        match curve {
            CurveSpec::Hyperbolic { ell } => CurveDescriptor::Shorthand(format!("y*x^{ell}=1")),
            CurveSpec::Graph { q } => {
                let (last, rest) = q.split_last().expect("nonempty coefficients");
                if *last == 1.0 && rest.iter().all(|c| *c == 0.0) {
                    CurveDescriptor::Shorthand(format!("y=x^{}", rest.len()))
                } else {
                    CurveDescriptor::Coefficients(q.clone())
                }
            }
        }
    }

    /// Command-line form: a shorthand, or a JSON coefficient list such as `[1, 0, 2]`.
    pub fn from_arg(arg: &str) -> Result<Self, CliError> {
        if arg.trim_start().starts_with('[') {
            let q: Vec<f64> = serde_json::from_str(arg).map_err(|_| CliError::Curve(arg.into()))?;
            Ok(CurveDescriptor::Coefficients(q))
        } else {
            Ok(CurveDescriptor::Shorthand(arg.into()))
        }
    }
}

fn parse_shorthand(s: &str) -> Result<CurveSpec, CliError> {
    let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    let exponent = |e: &str| -> Option<usize> {
        if e.is_empty() || !e.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        e.parse().ok().filter(|k| *k >= 1)
    };
    let parsed = if let Some(rest) = compact.strip_prefix("y=x^") {
        exponent(rest).map(CurveSpec::monomial_graph)
    } else if let Some(rest) = compact.strip_prefix("y*x^").and_then(|r| r.strip_suffix("=1")) {
        exponent(rest).map(CurveSpec::hyperbolic)
    } else {
        None
    };
    parsed.ok_or_else(|| CliError::Curve(s.into()))
}

/// Tolerances that a problem file may override.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub rank_tol: Option<f64>,
    pub psd_tol: Option<f64>,
    pub residual_tol: Option<f64>,
    pub atom_merge_tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub curve: CurveDescriptor,
    pub degree: usize,
    /// Triples `(i, j, beta_ij)` covering `i + j <= degree` exactly once.
    pub moments: Vec<(usize, usize, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceOverrides>,
}

/// A problem file after validation.
pub struct Problem {
    pub curve: CurveSpec,
    pub beta: BivariateMomentSequence,
    pub tol: ToleranceConfig,
}

impl ProblemFile {
    pub fn from_moments(curve: &CurveSpec, beta: &BivariateMomentSequence) -> Self {
        ProblemFile {
            curve: CurveDescriptor::describe(curve),
            degree: beta.degree(),
            moments: beta.iter().map(|((i, j), v)| (i, j, v)).collect(),
            tolerances: None,
        }
    }

    /// Defaults, then the file's overrides, then the command line.
    pub fn into_problem(self, flags: &TolArgs) -> Result<Problem, CliError> {
        let curve = self.curve.to_curve()?;
        let beta = BivariateMomentSequence::from_triples(self.degree, self.moments)?;
        let mut tol = ToleranceConfig::default();
        if let Some(o) = self.tolerances {
            tol.rank_tol = o.rank_tol.unwrap_or(tol.rank_tol);
            tol.psd_tol = o.psd_tol.unwrap_or(tol.psd_tol);
            tol.residual_tol = o.residual_tol.unwrap_or(tol.residual_tol);
            tol.atom_merge_tol = o.atom_merge_tol.unwrap_or(tol.atom_merge_tol);
            tol.max_iter = o.max_iter.unwrap_or(tol.max_iter);
        }
        tol.rank_tol = flags.rank_tol.unwrap_or(tol.rank_tol);
        tol.psd_tol = flags.psd_tol.unwrap_or(tol.psd_tol);
        tol.residual_tol = flags.residual_tol.unwrap_or(tol.residual_tol);
        tol.max_iter = flags.max_iter.unwrap_or(tol.max_iter);
        tol.validate()?;
        Ok(Problem { curve, beta, tol })
    }
}

/// Atoms and densities, the same shape a solve report uses for its measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    pub atoms: Vec<(f64, f64)>,
    pub densities: Vec<f64>,
}

impl MeasureFile {
    pub fn into_measure(self) -> Result<AtomicMeasure2D, CliError> {
        Ok(AtomicMeasure2D::new(self.atoms, self.densities)?)
    }
}

/// A measure file, or a solve report whose measure is taken.
pub fn read_measure(path: &Path) -> Result<AtomicMeasure2D, CliError> {
    let value: Value = read_json(path)?;
    let body = match value.get("status") {
        Some(status) => match value.get("measure") {
            Some(m) if !m.is_null() => m.clone(),
            _ => return Err(CliError::Measure(format!("report {} carries no measure (status {status})", path.display()))),
        },
        None => value,
    };
    let file: MeasureFile =
        serde_json::from_value(body).map_err(|source| CliError::Json { path: path.to_path_buf(), source })?;
    file.into_measure()
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json { path: path.to_path_buf(), source })
}

/// Pretty JSON with every floating point number written to 17 significant digits.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut v = serde_json::to_value(value).expect("report types serialize");
    fix_digits(&mut v);
    let mut s = serde_json::to_string_pretty(&v).expect("values serialize");
    s.push('\n');
    s
}

fn fix_digits(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64 number");
            *n = serde_json::from_str::<Number>(&format!("{x:.16e}")).expect("valid number");
        }
        Value::Array(items) => items.iter_mut().for_each(fix_digits),
        Value::Object(map) => map.values_mut().for_each(fix_digits),
        _ => {}
    }
}

/// `text` to `out`, or to standard output.
pub fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text).map_err(|source| CliError::Write { path: path.to_path_buf(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
