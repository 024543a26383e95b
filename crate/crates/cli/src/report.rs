use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use ntd_core::analysis::assign_communities;
use serde::Serialize;

use crate::decompose::DecompositionFile;
use crate::manifest::Stage;
use crate::svg::{render, Layout};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Args, Serialize)]
pub struct ReportArgs {
    /// decomposition.json written by `ntd decompose`.
    #[arg(long)]
    pub decomposition: PathBuf,
    /// bar, grid:WxH (image inputs) or series:S:W (windowed series inputs).
    #[arg(long, default_value = "bar")]
    pub layout: String,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Panel {
    task: usize,
    color: String,
    members: usize,
    input_mass: f64,
    output_mass: f64,
}

#[derive(Serialize)]
struct ReportFile {
    schema_version: u32,
    layout: String,
    input_width: usize,
    output_width: usize,
    panels: Vec<Panel>,
}

pub fn run(args: ReportArgs) -> Result<()> {
    let layout: Layout = args.layout.parse()?;
    let file = DecompositionFile::load(&args.decomposition)?;
    layout.check(file.input_width)?;
    let mut stage = Stage::begin("report", &args.out)?;
    stage.note_input(&args.decomposition)?;

    let dec = &file.decomposition;
    let assignment = assign_communities(dec, &file.units)?;
    let members: Vec<usize> = (0..dec.tasks())
        .map(|c| assignment.labels.iter().filter(|&&l| l == Some(c)).count())
        .collect();
    let (svg, panels) = render(&dec.u, file.input_width, layout, &members)?;
    stage.write("report.svg", &svg)?;
    let panels = panels
        .into_iter()
        .map(|p| {
            let row = dec.u.row(p.task);
            Panel {
                task: p.task,
                color: p.color,
                members: p.members,
                input_mass: row[..file.input_width].iter().sum(),
                output_mass: row[file.input_width..].iter().sum(),
            }
        })
        .collect();
    stage.write_json(
        "report.json",
        &ReportFile {
            schema_version: REPORT_SCHEMA_VERSION,
            layout: layout.to_string(),
            input_width: file.input_width,
            output_width: file.output_width,
            panels,
        },
    )?;
    stage.finish(&args)?;
    println!("wrote {}", args.out.join("report.svg").display());
    Ok(())
}
