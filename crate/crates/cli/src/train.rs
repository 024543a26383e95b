use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use ntd_core::datasets::{read_dataset_dir, DatasetSource, MANIFEST_FILE};
use ntd_core::lnn::{init_params, train, TrainConfig, TrainReport};
use ntd_core::NtdError;
use serde::Serialize;

use crate::manifest::Stage;
use crate::Usage;

pub const TRAIN_REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Args, Serialize)]
pub struct TrainArgs {
    /// Dataset directory written by `ntd gen`.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Layer sizes such as "108,40,40,3". Defaults to the teacher's layout
    /// for synthetic datasets.
    #[arg(long, value_delimiter = ',')]
    pub layers: Vec<usize>,
    #[arg(long, default_value_t = TrainConfig::default().lambda)]
    pub lambda: f64,
    #[arg(long, default_value_t = TrainConfig::default().epsilon1)]
    pub epsilon1: f64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    pub epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().eta0)]
    pub eta0: f64,
    /// Seed of the sample-selection stream.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seed of the initial weights; defaults to seed + 100.
    #[arg(long)]
    pub init_seed: Option<u64>,
    #[arg(long, default_value_t = 0.5)]
    pub init_weight_sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub init_bias_sigma: f64,
    /// Visit samples in order instead of drawing them with replacement.
    #[arg(long)]
    pub no_shuffle: bool,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    schema_version: u32,
    status: &'a str,
    diverged_at_epoch: Option<usize>,
    layer_sizes: &'a [usize],
    init_seed: u64,
    config: &'a TrainConfig,
    report: &'a TrainReport,
}

pub fn run(args: TrainArgs) -> Result<()> {
    let loaded = read_dataset_dir(&args.data)?;
    let mut layers = args.layers.clone();
    if layers.is_empty() {
        match &loaded.manifest.source {
            DatasetSource::Synthetic { spec, .. } => layers = spec.layer_sizes(),
            _ => bail!(Usage(
                "--layers is required for non-synthetic datasets".into()
            )),
        }
    }
    if layers.len() < 3 {
        bail!(Usage(format!(
            "--layers needs at least 3 sizes, got {}",
            layers.len()
        )));
    }
    let (i0, j0) = (loaded.train.input_dim(), loaded.train.output_dim());
    if layers[0] != i0 || layers[layers.len() - 1] != j0 {
        bail!(Usage(format!(
            "--layers {:?} does not fit the dataset: it has {i0} inputs and {j0} outputs",
            layers
        )));
    }
    let config = TrainConfig {
        lambda: args.lambda,
        epsilon1: args.epsilon1,
        epochs: args.epochs,
        eta0: args.eta0,
        seed: args.seed,
        shuffle: !args.no_shuffle,
    };
    config.validate()?;
    let init_seed = args.init_seed.unwrap_or(args.seed.wrapping_add(100));

    let mut stage = Stage::begin("train", &args.out)?;
    for name in loaded
        .manifest
        .files
        .keys()
        .chain(std::iter::once(&MANIFEST_FILE.to_string()))
    {
        stage.note_input(&args.data.join(name))?;
    }
    let init = init_params(
        &layers,
        init_seed,
        args.init_weight_sigma,
        args.init_bias_sigma,
    )?;
    let outcome = train(&init, &loaded.train, &config, loaded.test.as_ref());

    let write_report =
        |stage: &mut Stage, status: &str, epoch: Option<usize>, report: &TrainReport| {
            stage.write_json(
                "train_report.json",
                &ReportFile {
                    schema_version: TRAIN_REPORT_SCHEMA_VERSION,
                    status,
                    diverged_at_epoch: epoch,
                    layer_sizes: &layers,
                    init_seed,
                    config: &config,
                    report,
                },
            )
        };
    match outcome {
        Ok((params, report)) => {
            stage.write("model.json", &(params.to_json()? + "\n"))?;
            write_report(&mut stage, "ok", None, &report)?;
            stage.finish(&args)?;
            println!(
                "E(w) {:.6} -> {:.6}; {} of {} weights below 1e-3",
                report.initial_error,
                report
                    .epoch_errors
                    .last()
                    .copied()
                    .unwrap_or(report.initial_error),
                report.near_zero_weights,
                report.total_weights
            );
            Ok(())
        }
        Err(NtdError::Diverged { epoch, partial }) => {
            write_report(&mut stage, "diverged", Some(epoch), &partial)?;
            stage.finish(&args)?;
            Err(NtdError::Diverged { epoch, partial }.into())
        }
        Err(e) => Err(e.into()),
    }
}
