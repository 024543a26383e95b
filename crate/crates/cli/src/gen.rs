use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use ntd_core::datasets::{
    gen_diagrams, gen_synthetic, window_csv_reader, write_dataset_dir, write_pgm, DatasetManifest,
    DatasetSource, Shape, SyntheticSpec, WindowSpec, MANIFEST_FILE,
};
use serde::Serialize;

use crate::manifest::Stage;
use crate::{OutDir, Usage};

#[derive(Args, Serialize)]
pub struct SyntheticArgs {
    #[arg(long, default_value_t = 3)]
    pub blocks: usize,
    #[arg(long, default_value_t = 2)]
    pub hidden_layers_per_block: usize,
    #[arg(long, default_value_t = 15)]
    pub units_per_hidden_layer: usize,
    #[arg(long, default_value_t = 5)]
    pub inputs_per_block: usize,
    #[arg(long, default_value_t = 5)]
    pub outputs_per_block: usize,
    /// Teacher weights with |w| at or below this are removed.
    #[arg(long, default_value_t = 1.0)]
    pub prune_threshold: f64,
    #[arg(long, default_value_t = 1.0)]
    pub teacher_weight_sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub teacher_bias_sigma: f64,
    #[arg(long, default_value_t = 3.0)]
    pub input_sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub noise_sigma: f64,
    #[arg(long, default_value_t = 3000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 1000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutDir,
}

impl SyntheticArgs {
    fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            blocks: self.blocks,
            hidden_layers_per_block: self.hidden_layers_per_block,
            units_per_hidden_layer: self.units_per_hidden_layer,
            inputs_per_block: self.inputs_per_block,
            outputs_per_block: self.outputs_per_block,
            prune_threshold: self.prune_threshold,
            teacher_weight_sigma: self.teacher_weight_sigma,
            teacher_bias_sigma: self.teacher_bias_sigma,
            input_sigma: self.input_sigma,
            noise_sigma: self.noise_sigma,
            n_train: self.n_train,
            n_test: self.n_test,
            seed: self.seed,
        }
    }
}

fn finish_dataset(
    mut stage: Stage,
    manifest: &DatasetManifest,
    config: &impl Serialize,
) -> Result<()> {
    for name in manifest
        .files
        .keys()
        .chain(std::iter::once(&MANIFEST_FILE.to_string()))
    {
        let bytes = std::fs::read(stage.dir().join(name))?;
        stage.record_output(name, &bytes);
    }
    let dir = stage.dir().display().to_string();
    stage.finish(config)?;
    println!(
        "wrote {dir}: {} train / {} test samples, {} inputs, {} outputs",
        manifest.n_train,
        manifest.n_test.unwrap_or(0),
        manifest.input_dim,
        manifest.output_dim
    );
    Ok(())
}

pub fn synthetic(args: SyntheticArgs) -> Result<()> {
    let spec = args.spec();
    spec.validate()?;
    let stage = Stage::begin("gen synthetic", &args.out.out)?;
    let problem = gen_synthetic(&spec)?;
    let teacher = problem.teacher.to_json()?;
    let manifest = write_dataset_dir(
        stage.dir(),
        &problem.train,
        Some(&problem.test),
        DatasetSource::Synthetic {
            spec: spec.clone(),
            seed_used: problem.seed_used,
        },
        Some(problem.truth.clone()),
        &[("teacher.json", teacher)],
    )?;
    let layers: Vec<String> = spec.layer_sizes().iter().map(usize::to_string).collect();
    println!("teacher layers {}", layers.join(","));
    finish_dataset(stage, &manifest, &args)
}

#[derive(Args, Serialize)]
pub struct DiagramArgs {
    /// Comma-separated shape names; all shapes when omitted.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<Shape>,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    /// Images are size x size pixels.
    #[arg(long, default_value_t = 20)]
    pub size: usize,
    /// Held-out images per class, drawn from a separate stream.
    #[arg(long, default_value_t = 0)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write every training image as a PGM file into this subdirectory.
    #[arg(long)]
    pub pgm_dir: Option<String>,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutDir,
}

pub fn diagrams(mut args: DiagramArgs) -> Result<()> {
    if args.classes.is_empty() {
        args.classes = Shape::ALL.to_vec();
    }
    let mut stage = Stage::begin("gen diagrams", &args.out.out)?;
    let set = gen_diagrams(&args.classes, args.per_class, args.size, args.seed)?;
    let test = if args.test_per_class > 0 {
        Some(gen_diagrams(
            &args.classes,
            args.test_per_class,
            args.size,
            args.seed.wrapping_add(1),
        )?)
    } else {
        None
    };
    let labels: Vec<String> = set
        .labels
        .iter()
        .map(|&c| set.classes[c].name().to_string())
        .collect();
    let manifest = write_dataset_dir(
        stage.dir(),
        &set.data,
        test.as_ref().map(|t| &t.data),
        DatasetSource::Diagrams {
            classes: args.classes.clone(),
            per_class: args.per_class,
            size: args.size,
            seed: args.seed,
        },
        None,
        &[("labels.txt", labels.join("\n") + "\n")],
    )?;
    if let Some(sub) = &args.pgm_dir {
        for (s, label) in labels.iter().enumerate() {
            let mut buf = Vec::new();
            write_pgm(&mut buf, set.data.x.row(s), set.size)?;
            let name = format!("{sub}/{s:05}_{label}.pgm");
            std::fs::create_dir_all(stage.dir().join(sub))?;
            std::fs::write(stage.dir().join(&name), &buf)?;
            stage.record_output(&name, &buf);
        }
    }
    finish_dataset(stage, &manifest, &args)
}

#[derive(Args, Serialize)]
pub struct WindowArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub csv: PathBuf,
    /// Comma-separated input column names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub inputs: Vec<String>,
    /// Comma-separated target column names.
    #[arg(long, value_delimiter = ',', required = true)]
    pub targets: Vec<String>,
    #[arg(long, default_value_t = 36)]
    pub window: usize,
    #[arg(long, default_value_t = 1)]
    pub horizon: usize,
    #[command(flatten)]
    #[serde(skip)]
    pub out: OutDir,
}

pub fn window(args: WindowArgs) -> Result<()> {
    let spec = WindowSpec {
        input_columns: args.inputs.clone(),
        target_columns: args.targets.clone(),
        window: args.window,
        horizon: args.horizon,
    };
    let mut stage = Stage::begin("gen window", &args.out.out)?;
    let text = stage.read_input(&args.csv)?;
    let w = window_csv_reader(text.as_bytes(), &spec)
        .with_context(|| format!("windowing {}", args.csv.display()))?;
    if w.data.is_empty() {
        anyhow::bail!(Usage("no samples".into()));
    }
    let manifest = write_dataset_dir(
        stage.dir(),
        &w.data,
        None,
        DatasetSource::Window {
            spec,
            input_scalers: w.input_scalers,
            target_scalers: w.target_scalers,
            rows_skipped: w.rows_skipped,
        },
        None,
        &[],
    )?;
    finish_dataset(stage, &manifest, &args)
}
