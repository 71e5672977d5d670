use std::path::Path;

use curve_moments::reduction::reduce_to_univariate;
use curve_moments::{
    atom_bound, check_curve_relations, export_sdpa, moment_residual, solve_curve, summarize_moment_matrix,
    synth_moments, AtomicMeasure2D, Diagnostics, Monomial, MomentMatrixSummary, SolveStatus, ToleranceConfig,
};
use serde::Serialize;

use crate::args::{Command, TolArgs};
use crate::error::CliError;
use crate::format::{emit, read_json, read_measure, to_json, CurveDescriptor, Problem, ProblemFile};

/// How a successful run ends; the numeric value is the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Success = 0,
    NoMeasure = 2,
    Unknown = 3,
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    status: SolveStatus,
    measure: Option<&'a AtomicMeasure2D>,
    diagnostics: &'a Diagnostics,
    curve: CurveDescriptor,
    degree: usize,
    tolerances: ToleranceConfig,
}

#[derive(Serialize)]
struct VerifyOutput {
    represents: bool,
    atoms: usize,
    /// Worst relative moment error.
    residual: f64,
    /// Worst `|p(x, y)|` over the atoms, `p` the defining polynomial.
    curve_residual: f64,
    curve: CurveDescriptor,
    degree: usize,
    tolerances: ToleranceConfig,
}

#[derive(Serialize)]
struct CheckOutput {
    curve: CurveDescriptor,
    degree: usize,
    relations_violated: Vec<Monomial>,
    moment_matrix: MomentMatrixSummary,
    atom_bound: usize,
    tolerances: ToleranceConfig,
}

fn load(input: &Path, tol: &TolArgs) -> Result<Problem, CliError> {
    read_json::<ProblemFile>(input)?.into_problem(tol)
}

pub fn run(command: Command) -> Result<Verdict, CliError> {
    match command {
        Command::Solve { input, out, tol } => {
            let p = load(&input, &tol)?;
            let report = solve_curve(&p.beta, &p.curve, &p.tol)?;
            let output = SolveOutput {
                status: report.status,
                measure: report.measure.as_ref(),
                diagnostics: &report.diagnostics,
                curve: CurveDescriptor::describe(&p.curve),
                degree: p.beta.degree(),
                tolerances: p.tol,
            };
            emit(out.as_deref(), &to_json(&output))?;
            Ok(match report.status {
                SolveStatus::MeasureFound => Verdict::Success,
                SolveStatus::NoMeasure => Verdict::NoMeasure,
                SolveStatus::Unknown => Verdict::Unknown,
            })
        }
        Command::Synth { measure, degree, curve, out } => {
            let curve = CurveDescriptor::from_arg(&curve)?.to_curve()?;
            let mu = read_measure(&measure)?;
            let beta = synth_moments(&mu, degree);
            emit(out.as_deref(), &to_json(&ProblemFile::from_moments(&curve, &beta)))?;
            Ok(Verdict::Success)
        }
        Command::Verify { input, measure, out, tol } => {
            let p = load(&input, &tol)?;
            let mu = read_measure(&measure)?;
            let residual = moment_residual(&mu, &p.beta);
            let curve_residual = mu.curve_residual(&p.curve);
            let represents = residual <= p.tol.residual_tol && curve_residual <= p.tol.residual_tol;
            let output = VerifyOutput {
                represents,
                atoms: mu.len(),
                residual,
                curve_residual,
                curve: CurveDescriptor::describe(&p.curve),
                degree: p.beta.degree(),
                tolerances: p.tol,
            };
            emit(out.as_deref(), &to_json(&output))?;
            Ok(if represents { Verdict::Success } else { Verdict::NoMeasure })
        }
        Command::Check { input, out, tol } => {
            let p = load(&input, &tol)?;
            let relations_violated = check_curve_relations(&p.beta, &p.curve, p.tol.residual_tol);
            let moment_matrix = summarize_moment_matrix(&p.beta, &p.tol);
            let clean = relations_violated.is_empty() && moment_matrix.positive_semidefinite;
            let output = CheckOutput {
                curve: CurveDescriptor::describe(&p.curve),
                degree: p.beta.degree(),
                relations_violated,
                moment_matrix,
                atom_bound: atom_bound(&p.curve, p.beta.degree()),
                tolerances: p.tol,
            };
            emit(out.as_deref(), &to_json(&output))?;
            Ok(if clean { Verdict::Success } else { Verdict::NoMeasure })
        }
        Command::ExportSdpa { input, out, tol } => {
            let p = load(&input, &tol)?;
            let red = reduce_to_univariate(&p.beta, &p.curve, p.tol.residual_tol)?;
            emit(out.as_deref(), &export_sdpa(&red.partial)?)?;
            Ok(Verdict::Success)
        }
    }
}
