use std::path::PathBuf;

use chomp_sdr::metrics::{evaluate, SelectionMode};
use clap::{Args, ValueEnum};

use crate::data::read_coefficients;
use crate::error::CliError;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    /// Per-coefficient for one direction, projection diagonal otherwise.
    Auto,
    PerCoefficient,
    ProjectionDiagonal,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// Fitted coefficients (as written by `fit`).
    pub coefficients: PathBuf,
    /// True basis in the same layout.
    pub truth: PathBuf,
    /// Report path; stdout when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "auto")]
    pub mode: ModeArg,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "NA".into())
}

pub fn run(a: &EvalArgs) -> Result<Vec<PathBuf>, CliError> {
    let fit = read_coefficients(&a.coefficients)?;
    let truth = read_coefficients(&a.truth)?;
    if fit.basis.shape() != truth.basis.shape() {
        return Err(CliError::Dimension(format!(
            "coefficients are {}x{} but truth is {}x{}",
            fit.basis.nrows(),
            fit.basis.ncols(),
            truth.basis.nrows(),
            truth.basis.ncols()
        )));
    }
    if fit.variables != truth.variables {
        eprintln!("warning: variable labels differ between the two files; rows are matched by position");
    }
    let mode = match a.mode {
        ModeArg::Auto => SelectionMode::for_dims(truth.basis.ncols()),
        ModeArg::PerCoefficient => SelectionMode::PerCoefficient,
        ModeArg::ProjectionDiagonal => SelectionMode::ProjectionDiagonal,
    };
    let r = evaluate(&fit.basis, &truth.basis, mode)?;
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let row = [
            format!("{}", r.error),
            opt(r.fpr),
            opt(r.fnr),
            r.support_hat.len().to_string(),
            r.support_true.len().to_string(),
            r.degenerate.to_string(),
        ];
        w.write_record(["error", "fpr", "fnr", "selected", "true_nonzero", "degenerate"])
            .and_then(|_| w.write_record(&row))
            .map_err(|e| CliError::Other(e.to_string()))?;
        w.flush()?;
    }
    match &a.output {
        Some(path) => {
            std::fs::write(path, &buf)?;
            Ok(vec![path.clone()])
        }
        None => {
            print!("{}", String::from_utf8_lossy(&buf));
            Ok(Vec::new())
        }
    }
}
