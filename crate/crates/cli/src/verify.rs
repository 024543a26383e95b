use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;

use crate::decompose::{DecompositionFile, DECOMPOSITION_FILE};
use crate::manifest::{self, RUN_MANIFEST_FILE};
use crate::Usage;

/// Allowed rise of the objective between iterations, relative to its size.
pub const OBJECTIVE_TOLERANCE: f64 = 1e-9;

#[derive(Args)]
pub struct VerifyArgs {
    /// Directory written by any `ntd` stage.
    pub dir: PathBuf,
}

/// Iterations whose objective rose by more than the tolerance.
pub fn objective_rises(trace: &[f64]) -> Vec<usize> {
    trace
        .windows(2)
        .enumerate()
        .filter(|(_, w)| !(w[1] <= w[0] + OBJECTIVE_TOLERANCE * w[0].abs().max(1.0)))
        .map(|(i, _)| i + 1)
        .collect()
}

pub fn run(args: VerifyArgs) -> Result<()> {
    let Some(m) = manifest::load(&args.dir)? else {
        bail!(Usage(format!(
            "{} has no {RUN_MANIFEST_FILE}",
            args.dir.display()
        )));
    };
    let mut problems = manifest::mismatches(&args.dir, &m);
    let dec_path = args.dir.join(DECOMPOSITION_FILE);
    if problems.is_empty() && dec_path.exists() {
        let file = DecompositionFile::load(&dec_path)?;
        let rises = objective_rises(&file.decomposition.objective_trace);
        if let Some(&first) = rises.first() {
            problems.push(format!(
                "objective increased at {} iterations, first at iteration {first}",
                rises.len()
            ));
        }
    }
    if problems.is_empty() {
        println!(
            "{}: {} outputs verified",
            args.dir.display(),
            m.outputs.len()
        );
        return Ok(());
    }
    for p in &problems {
        eprintln!("  {p}");
    }
    bail!("{} failed verification", args.dir.display())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rises_are_reported_by_iteration() {
        assert!(objective_rises(&[3.0, 2.0, 2.0, 1.0]).is_empty());
        assert_eq!(objective_rises(&[3.0, 2.0, 2.5, 1.0, 1.5]), vec![2, 4]);
        assert!(objective_rises(&[1.0, 1.0 + 1e-12]).is_empty());
        assert_eq!(objective_rises(&[1.0, f64::NAN]), vec![1]);
    }
}
