use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use ntd_core::analysis::{assign_communities, CommunityAssignment};
use ntd_core::attribution::{build_feature_matrix, HiddenUnit};
use ntd_core::datasets::{read_dataset_dir, MANIFEST_FILE};
use ntd_core::lnn::NetworkParams;
use ntd_core::nmf::{factorize, Decomposition, NmfConfig, DECOMPOSITION_SCHEMA_VERSION};
use serde::{Deserialize, Serialize};

use crate::manifest::{read_checked, Stage};
use crate::Usage;

pub const ASSIGNMENT_SCHEMA_VERSION: u32 = 1;
pub const DECOMPOSITION_FILE: &str = "decomposition.json";

#[derive(Args, Serialize)]
pub struct DecomposeArgs {
    /// model.json written by `ntd train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset directory whose samples drive the attribution.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Number of tasks c0.
    #[arg(long, default_value_t = 3)]
    pub tasks: usize,
    /// Multiplicative-update iterations per run.
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Independent initializations; the lowest final objective is kept.
    #[arg(long, default_value_t = 5)]
    pub restarts: usize,
    /// Attribute on the held-out split instead of the training split.
    #[arg(long)]
    pub heldout: bool,
}

/// Contents of `decomposition.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionFile {
    pub schema_version: u32,
    pub input_width: usize,
    pub output_width: usize,
    /// Hidden unit of every row of T, in the row order of V.
    pub units: Vec<HiddenUnit>,
    pub decomposition: Decomposition,
}

impl DecompositionFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file: DecompositionFile = serde_json::from_str(&read_checked(path)?)
            .map_err(|e| Usage(format!("{}: {e}", path.display())))?;
        if file.schema_version != DECOMPOSITION_SCHEMA_VERSION {
            bail!(Usage(format!(
                "unsupported decomposition schema_version {}",
                file.schema_version
            )));
        }
        Ok(file)
    }
}

#[derive(Serialize)]
struct AssignmentFile<'a> {
    schema_version: u32,
    #[serde(flatten)]
    assignment: &'a CommunityAssignment,
}

pub fn run(args: DecomposeArgs) -> Result<()> {
    let mut stage = Stage::begin("decompose", &args.out)?;
    let params = NetworkParams::from_json(&stage.read_input(&args.model)?)?;
    let loaded = read_dataset_dir(&args.data)?;
    for name in loaded
        .manifest
        .files
        .keys()
        .chain(std::iter::once(&MANIFEST_FILE.to_string()))
    {
        stage.note_input(&args.data.join(name))?;
    }
    let data = if args.heldout {
        loaded
            .test
            .ok_or_else(|| Usage(format!("{} has no held-out split", args.data.display())))?
    } else {
        loaded.train
    };
    if data.input_dim() != params.input_dim() || data.output_dim() != params.output_dim() {
        bail!(Usage(format!(
            "model is {}->{} but the dataset is {}->{}",
            params.input_dim(),
            params.output_dim(),
            data.input_dim(),
            data.output_dim()
        )));
    }
    let nmf = NmfConfig {
        a0: args.iters,
        seed: args.seed,
        restarts: args.restarts,
        ..NmfConfig::with_rank(args.tasks)
    };
    nmf.validate()?;

    let features = build_feature_matrix(&params, &data)?;
    stage.write("V.csv", &features.to_csv()?)?;
    stage.write_json("V.json", &features.sidecar())?;

    let dec = factorize(&features.v, &nmf)?;
    let assignment = assign_communities(&dec, &features.unit_index)?;
    let file = DecompositionFile {
        schema_version: DECOMPOSITION_SCHEMA_VERSION,
        input_width: features.input_width,
        output_width: features.output_width(),
        units: features.unit_index.clone(),
        decomposition: dec,
    };
    stage.write_json(DECOMPOSITION_FILE, &file)?;
    stage.write_json(
        "assignment.json",
        &AssignmentFile {
            schema_version: ASSIGNMENT_SCHEMA_VERSION,
            assignment: &assignment,
        },
    )?;
    stage.write("assignment.csv", &assignment.to_csv())?;
    stage.finish(&args)?;

    let sizes: Vec<usize> = (0..assignment.communities())
        .map(|c| assignment.labels.iter().filter(|&&l| l == Some(c)).count())
        .collect();
    println!(
        "{} hidden units, {} tasks, final objective {:.6}, community sizes {:?}",
        features.unit_count(),
        file.decomposition.tasks(),
        file.decomposition.final_objective(),
        sizes
    );
    Ok(())
}
