use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use ntd_core::analysis::{
    assign_communities, connectivity_blocks, score_recovery, task_importance, TaskImportance,
};
use ntd_core::attribution::hidden_units;
use ntd_core::datasets::read_dataset_dir;
use ntd_core::lnn::{NetworkParams, NEAR_ZERO_WEIGHT};
use serde::Serialize;

use crate::decompose::DecompositionFile;
use crate::manifest::Stage;
use crate::Usage;

pub const SCORE_SCHEMA_VERSION: u32 = 1;

#[derive(Args, Serialize)]
pub struct EvalArgs {
    /// decomposition.json written by `ntd decompose`.
    #[arg(long)]
    pub decomposition: PathBuf,
    /// The trained model that was decomposed.
    #[arg(long)]
    pub model: PathBuf,
    /// Synthetic dataset directory carrying planted block labels.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Weights below this magnitude count as removed when tracing which
    /// planted block a hidden unit serves.
    #[arg(long, default_value_t = NEAR_ZERO_WEIGHT)]
    pub deleted_below: f64,
}

#[derive(Debug, Serialize)]
pub struct ScoreFile {
    pub schema_version: u32,
    pub purity: f64,
    pub matched_units: usize,
    pub labeled_units: usize,
    /// Units with no surviving path from an input or to an output.
    pub unlabeled_units: usize,
    /// True when tasks and blocks differ in number.
    pub partial: bool,
    /// Planted block matched to each task, if any.
    pub matching: Vec<Option<usize>>,
    pub concentrations: Vec<f64>,
    pub importances: Vec<TaskImportance>,
    /// Block each hidden unit serves in the trained network, in the row order of V.
    pub reference_labels: Vec<Option<usize>>,
}

pub fn run(args: EvalArgs) -> Result<()> {
    let mut stage = Stage::begin("eval", &args.out)?;
    let loaded = read_dataset_dir(&args.data)?;
    let Some(truth) = loaded.manifest.ground_truth else {
        bail!(Usage(format!(
            "{} has no planted block labels; eval needs a dataset from `ntd gen synthetic`",
            args.data.display()
        )));
    };
    let file = DecompositionFile::load(&args.decomposition)?;
    stage.note_input(&args.decomposition)?;
    let params = NetworkParams::from_json(&stage.read_input(&args.model)?)?;
    if hidden_units(&params) != file.units {
        bail!(Usage(
            "the model's hidden units do not match the decomposition rows".into()
        ));
    }
    let columns = truth.column_labels();
    if columns.len() != file.input_width + file.output_width {
        bail!(Usage(format!(
            "planted labels cover {} columns but the decomposition has {}",
            columns.len(),
            file.input_width + file.output_width
        )));
    }

    let dec = &file.decomposition;
    let assignment = assign_communities(dec, &file.units)?;
    let reference = connectivity_blocks(&params, &truth, args.deleted_below)?;
    let score = score_recovery(&assignment, &reference, truth.blocks, &dec.u, &columns)?;
    let out = ScoreFile {
        schema_version: SCORE_SCHEMA_VERSION,
        purity: score.purity,
        matched_units: score.matched_units,
        labeled_units: score.labeled_units,
        unlabeled_units: reference.iter().filter(|l| l.is_none()).count(),
        partial: score.partial,
        matching: score.matching,
        concentrations: score.concentrations,
        importances: task_importance(dec, file.input_width)?,
        reference_labels: reference,
    };
    stage.write_json("score.json", &out)?;
    stage.finish(&args)?;
    println!(
        "purity {:.3} ({} of {} labeled units), concentrations {:?}",
        out.purity,
        out.matched_units,
        out.labeled_units,
        out.concentrations
            .iter()
            .map(|c| format!("{c:.3}"))
            .collect::<Vec<_>>()
    );
    Ok(())
}
