use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ntd_core::analysis::{assign_communities, connectivity_blocks, score_recovery};
use ntd_core::datasets::read_dataset_dir;
use ntd_core::lnn::{NetworkParams, NEAR_ZERO_WEIGHT};
use ntd_core::matrix::Mat;
use ntd_core::nmf::{Decomposition, NmfConfig};
use serde_json::Value;

fn ntd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ntd"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("run ntd")
}

fn ok(args: &[&str]) -> Output {
    let out = ntd(args);
    assert!(
        out.status.success(),
        "ntd {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_synthetic(dir: &Path, seed: &str) {
    ok(&[
        "gen",
        "synthetic",
        "--seed",
        seed,
        "--n-train",
        "200",
        "--n-test",
        "50",
        "--out",
        p(dir),
    ]);
}

#[test]
fn synthetic_generation_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    small_synthetic(&a, "7");
    small_synthetic(&b, "7");
    assert_eq!(json(&a.join("dataset.json")), json(&b.join("dataset.json")));
    assert_eq!(json(&a.join("dataset.json"))["schema_version"], 1);
    assert_eq!(
        json(&a.join("run_manifest.json"))["outputs"],
        json(&b.join("run_manifest.json"))["outputs"]
    );
}

#[test]
fn missing_out_is_usage_error() {
    assert_eq!(code(&ntd(&["gen", "synthetic", "--seed", "7"])), 2);
    assert_eq!(code(&ntd(&["train"])), 2);
    assert_eq!(code(&ntd(&["frobnicate"])), 2);
}

#[test]
fn bad_thread_count_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ntd"))
        .args(["gen", "synthetic", "--out", p(tmp.path())])
        .env("NTD_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn window_of_three_series_has_108_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let csv = tmp.path().join("veg.csv");
    let mut text = String::from("month,taro,radish,carrot\n");
    for m in 0..60 {
        let t = f64::from(m);
        text.push_str(&format!(
            "{m},{},{},{}\n",
            100.0 + 10.0 * (t / 6.0).sin(),
            80.0 + t,
            50.0 + (t * 0.7).cos()
        ));
    }
    fs::write(&csv, text).unwrap();
    let out = tmp.path().join("w");
    ok(&[
        "gen",
        "window",
        "--csv",
        p(&csv),
        "--inputs",
        "taro,radish,carrot",
        "--targets",
        "taro,radish,carrot",
        "--window",
        "36",
        "--horizon",
        "1",
        "--out",
        p(&out),
    ]);
    let m = json(&out.join("dataset.json"));
    assert_eq!(m["input_dim"], 108);
    assert_eq!(m["output_dim"], 3);
    assert_eq!(m["n_train"], 60 - 36 - 1 + 1);

    let few = ntd(&[
        "gen",
        "window",
        "--csv",
        p(&csv),
        "--inputs",
        "taro",
        "--targets",
        "taro",
        "--window",
        "70",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&few), 2);
}

#[test]
fn training_reruns_identically_and_checks_layers() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_synthetic(&data, "1");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        ok(&[
            "train",
            "--data",
            p(&data),
            "--out",
            p(dir),
            "--epochs",
            "5",
            "--seed",
            "3",
        ]);
    }
    assert_eq!(
        fs::read(a.join("model.json")).unwrap(),
        fs::read(b.join("model.json")).unwrap()
    );
    let report = json(&a.join("train_report.json"));
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["status"], "ok");
    assert_eq!(
        report["report"]["epoch_errors"].as_array().unwrap().len(),
        5
    );

    let bad = tmp.path().join("bad");
    let out = ntd(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&bad),
        "--layers",
        "14,45,45,15",
    ]);
    assert_eq!(code(&out), 2);
    assert!(!bad.join("model.json").exists());
    assert!(!bad.join("train_report.json").exists());
}

#[test]
fn divergence_exits_one_with_partial_report() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_synthetic(&data, "2");
    let out_dir = tmp.path().join("t");
    let out = ntd(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&out_dir),
        "--epochs",
        "3",
        "--eta0",
        "1e308",
    ]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let report = json(&out_dir.join("train_report.json"));
    assert_eq!(report["status"], "diverged");
    assert!(report["diverged_at_epoch"].as_u64().unwrap() >= 1);
    assert!(!out_dir.join("model.json").exists());
}

#[test]
fn default_training_lowers_error() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["gen", "synthetic", "--seed", "4", "--out", p(&data)]);
    let t = tmp.path().join("t");
    ok(&["train", "--data", p(&data), "--out", p(&t), "--seed", "4"]);
    let report = json(&t.join("train_report.json"));
    let errors: Vec<f64> = report["report"]["epoch_errors"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e.as_f64().unwrap())
        .collect();
    assert_eq!(errors.len(), 200);
    assert!(errors.iter().all(|e| e.is_finite()));
    assert!(errors.last().unwrap() <= errors.first().unwrap());
}

/// Dataset, model and decomposition at toy scale.
fn decomposed(
    root: &Path,
    tasks: &str,
) -> (std::path::PathBuf, std::path::PathBuf, std::path::PathBuf) {
    let data = root.join("data");
    small_synthetic(&data, "5");
    let train = root.join("train");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&train),
        "--epochs",
        "10",
    ]);
    let dec = root.join("dec");
    ok(&[
        "decompose",
        "--model",
        p(&train.join("model.json")),
        "--data",
        p(&data),
        "--out",
        p(&dec),
        "--tasks",
        tasks,
        "--iters",
        "200",
        "--seed",
        "11",
    ]);
    (data, train.join("model.json"), dec)
}

#[test]
fn decomposition_outputs_verify() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, _, dec) = decomposed(tmp.path(), "3");
    for f in [
        "V.csv",
        "V.json",
        "decomposition.json",
        "assignment.json",
        "assignment.csv",
    ] {
        assert!(dec.join(f).exists(), "{f}");
    }
    let d = json(&dec.join("decomposition.json"));
    assert_eq!(d["schema_version"], 1);
    assert_eq!(
        d["decomposition"]["objective_trace"]
            .as_array()
            .unwrap()
            .len(),
        200
    );
    assert_eq!(json(&dec.join("V.json"))["schema_version"], 1);
    assert_eq!(json(&dec.join("assignment.json"))["schema_version"], 1);
    assert!(fs::read_to_string(dec.join("assignment.csv"))
        .unwrap()
        .starts_with("unit,layer,community,weight_0,weight_1,weight_2\n"));
    ok(&["verify", p(&dec)]);

    // a rising objective fails verification
    let mut tampered = d.clone();
    let trace = tampered["decomposition"]["objective_trace"]
        .as_array_mut()
        .unwrap();
    trace[5] = Value::from(trace[4].as_f64().unwrap() + 1.0);
    let other = tmp.path().join("tampered");
    fs::create_dir_all(&other).unwrap();
    fs::write(other.join("decomposition.json"), tampered.to_string()).unwrap();
    fs::write(
        other.join("run_manifest.json"),
        serde_json::json!({
            "schema_version": 1, "tool_version": "0", "stage": "decompose", "config": {},
            "inputs": [], "outputs": [], "started_unix_ms": 0, "wall_clock_seconds": 0.0
        })
        .to_string(),
    )
    .unwrap();
    assert_eq!(code(&ntd(&["verify", p(&other)])), 1);

    // an edited output no longer matches its recorded hash
    fs::write(dec.join("V.csv"), "unit,layer\n").unwrap();
    assert_eq!(code(&ntd(&["verify", p(&dec)])), 1);
}

#[test]
fn single_task_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, _, dec) = decomposed(tmp.path(), "1");
    let d = json(&dec.join("decomposition.json"));
    assert_eq!(d["decomposition"]["u"]["rows"], 1);
}

#[test]
fn non_finite_features_name_the_unit() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    small_synthetic(&data, "6");
    // opposite infinite pre-activations in hidden unit 0 of layer 1 give NaN
    let mut net = NetworkParams::zeros(&[15, 2, 15]).unwrap();
    net.weights[0] = Mat::from_fn(15, 2, |i, j| match (i, j) {
        (0, 0) => 1e308,
        (1, 0) => -1e308,
        _ => 0.1,
    });
    let model = tmp.path().join("model.json");
    fs::write(&model, net.to_json().unwrap()).unwrap();
    let x = read_dataset_dir(&data).unwrap().train.x;
    assert!(
        (0..x.rows()).any(|s| x[(s, 0)] > 1.0 && x[(s, 1)] > 1.0),
        "fixture needs large inputs"
    );
    let out = ntd(&[
        "decompose",
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--out",
        p(&tmp.path().join("d")),
    ]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("layer 1") && err.contains("unit 0"), "{err}");
}

fn svg_panels(path: &Path) -> (roxmltree::Document<'static>, usize) {
    let text: &'static str = Box::leak(fs::read_to_string(path).unwrap().into_boxed_str());
    let doc = roxmltree::Document::parse(text).expect("well-formed SVG");
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert!(root.attribute("width").unwrap().parse::<f64>().unwrap() > 0.0);
    assert!(root.attribute("height").unwrap().parse::<f64>().unwrap() > 0.0);
    let rects = root.children().filter(|n| n.has_tag_name("rect")).count();
    (doc, rects)
}

#[test]
fn grid_layout_draws_one_heatmap_per_task() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&[
        "gen",
        "diagrams",
        "--classes",
        "cross,heart",
        "--per-class",
        "3",
        "--size",
        "20",
        "--pgm-dir",
        "pgm",
        "--out",
        p(&data),
    ]);
    assert_eq!(json(&data.join("dataset.json"))["input_dim"], 400);
    assert!(data.join("pgm/00000_cross.pgm").exists());
    let train = tmp.path().join("train");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&train),
        "--layers",
        "400,4,2",
        "--epochs",
        "2",
    ]);
    let dec = tmp.path().join("dec");
    ok(&[
        "decompose",
        "--model",
        p(&train.join("model.json")),
        "--data",
        p(&data),
        "--out",
        p(&dec),
        "--tasks",
        "2",
        "--iters",
        "50",
    ]);
    let decomposition = dec.join("decomposition.json");
    let rep = tmp.path().join("rep");
    ok(&[
        "report",
        "--decomposition",
        p(&decomposition),
        "--layout",
        "grid:20x20",
        "--out",
        p(&rep),
    ]);
    let (_, rects) = svg_panels(&rep.join("report.svg"));
    // background, then per task 400 cells, a frame and an output bar block of background plus 2 bars
    assert_eq!(rects, 1 + 2 * (400 + 1 + 1 + 2));
    let r = json(&rep.join("report.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["layout"], "grid:20x20");
    assert_eq!(r["panels"].as_array().unwrap().len(), 2);

    assert_eq!(
        code(&ntd(&[
            "report",
            "--decomposition",
            p(&decomposition),
            "--layout",
            "grid:20x19",
            "--out",
            p(&rep)
        ])),
        2
    );
    assert_eq!(
        code(&ntd(&[
            "report",
            "--decomposition",
            p(&decomposition),
            "--layout",
            "series:4:100",
            "--out",
            p(&rep)
        ])),
        0
    );
    assert_eq!(
        code(&ntd(&[
            "report",
            "--decomposition",
            p(&decomposition),
            "--layout",
            "pie",
            "--out",
            p(&rep)
        ])),
        2
    );

    // no planted labels for diagrams
    let out = ntd(&[
        "eval",
        "--decomposition",
        p(&decomposition),
        "--model",
        p(&train.join("model.json")),
        "--data",
        p(&data),
        "--out",
        p(&tmp.path().join("e")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("gen synthetic"));
}

#[test]
fn all_zero_tasks_render_blank() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, _, dec) = decomposed(tmp.path(), "3");
    let mut d = json(&dec.join("decomposition.json"));
    for v in d["decomposition"]["u"]["data"].as_array_mut().unwrap() {
        *v = Value::from(0.0);
    }
    let zero_dir = tmp.path().join("zero");
    fs::create_dir_all(&zero_dir).unwrap();
    fs::write(zero_dir.join("decomposition.json"), d.to_string()).unwrap();
    let rep = tmp.path().join("rep");
    ok(&[
        "report",
        "--decomposition",
        p(&zero_dir.join("decomposition.json")),
        "--layout",
        "bar",
        "--out",
        p(&rep),
    ]);
    let (doc, _) = svg_panels(&rep.join("report.svg"));
    for node in doc
        .root_element()
        .children()
        .filter(|n| n.has_tag_name("rect"))
    {
        let fill = node.attribute("fill").unwrap();
        assert!(fill == "#ffffff" || fill == "none", "{fill}");
    }
}

fn write_decomposition(path: &Path, input_width: usize, units: &Value, t: Mat, u: Mat) {
    let dec = Decomposition {
        config: NmfConfig::with_rank(t.cols()),
        t,
        u,
        objective_trace: vec![1.0],
        v_hash: String::new(),
    };
    let file = serde_json::json!({
        "schema_version": 1,
        "input_width": input_width,
        "output_width": dec.u.cols() - input_width,
        "units": units,
        "decomposition": dec,
    });
    fs::write(path, file.to_string()).unwrap();
}

#[test]
fn eval_scores_a_perfect_fixture_and_matches_the_library() {
    let tmp = tempfile::tempdir().unwrap();
    let (data, model, dec) = decomposed(tmp.path(), "3");
    let loaded = read_dataset_dir(&data).unwrap();
    let truth = loaded.manifest.ground_truth.unwrap();
    let net = NetworkParams::from_json(&fs::read_to_string(&model).unwrap()).unwrap();
    let reference = connectivity_blocks(&net, &truth, NEAR_ZERO_WEIGHT).unwrap();
    let units = json(&dec.join("decomposition.json"))["units"].clone();
    let columns = truth.column_labels();

    // real decomposition: CLI purity equals the direct library result
    let e = tmp.path().join("eval");
    ok(&[
        "eval",
        "--decomposition",
        p(&dec.join("decomposition.json")),
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--out",
        p(&e),
    ]);
    let score = json(&e.join("score.json"));
    for key in [
        "schema_version",
        "purity",
        "matching",
        "concentrations",
        "importances",
    ] {
        assert!(score.get(key).is_some(), "{key}");
    }
    let file: Value = json(&dec.join("decomposition.json"));
    let decomposition: Decomposition =
        serde_json::from_value(file["decomposition"].clone()).unwrap();
    let unit_index =
        serde_json::from_value::<Vec<ntd_core::attribution::HiddenUnit>>(units.clone()).unwrap();
    let direct = score_recovery(
        &assign_communities(&decomposition, &unit_index).unwrap(),
        &reference,
        truth.blocks,
        &decomposition.u,
        &columns,
    )
    .unwrap();
    assert_eq!(score["purity"].as_f64().unwrap(), direct.purity);

    // perfect fixture: T follows the reference labels, U sits on the matching block
    let t = Mat::from_fn(reference.len(), 3, |k, c| {
        f64::from(reference[k] == Some((c + 1) % 3))
    });
    let u = Mat::from_fn(3, columns.len(), |c, l| {
        f64::from(columns[l] == (c + 1) % 3)
    });
    let fixture = tmp.path().join("fixture");
    fs::create_dir_all(&fixture).unwrap();
    write_decomposition(&fixture.join("decomposition.json"), 15, &units, t, u);
    let e2 = tmp.path().join("eval2");
    ok(&[
        "eval",
        "--decomposition",
        p(&fixture.join("decomposition.json")),
        "--model",
        p(&model),
        "--data",
        p(&data),
        "--out",
        p(&e2),
    ]);
    let score = json(&e2.join("score.json"));
    assert_eq!(score["purity"], 1.0);
    assert_eq!(score["matching"], serde_json::json!([1, 2, 0]));
    assert_eq!(score["concentrations"], serde_json::json!([1.0, 1.0, 1.0]));
}
