use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pasb_cli::model_file::ModelFile;
use pasb_cli::synth;
use pasb_cli::train::{fit, load_raw, predict_probabilities, PredictMode, TrainOptions};
use pasb_core::links::LinkSpec;
use pasb_core::rng::RngStream;
use pasb_core::softplus::MsrSpec;
use pasb_core::stickbreak::McmcConfig;
use pasb_core::data::{write_dataset, Format};

fn pasb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pasb")).args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_squares(dir: &Path) -> std::path::PathBuf {
    let ds = synth::nested_squares(4, 120, &RngStream::new(5)).unwrap();
    let p = dir.join("sq.csv");
    write_dataset(&ds, &p, Format::Csv).unwrap();
    p
}

#[test]
fn saved_model_predicts_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_squares(dir.path());
    let train = load_raw(&data, None, None).unwrap();
    for link in [LinkSpec::Logistic, LinkSpec::Robit { dof: 4.0 }, LinkSpec::Msr(MsrSpec::new(2, 2))] {
        let mut opts = TrainOptions::new(link, McmcConfig::new(40, 20, 9));
        opts.standardize = true;
        let model = fit(&train, &opts).unwrap();
        let out = dir.path().join("m.json");
        model.save(&out).unwrap();
        let back = ModelFile::load(&out).unwrap();
        for mode in [PredictMode::Average, PredictMode::BestSample] {
            let a = predict_probabilities(&model, &train.covariates(), mode).unwrap();
            let b = predict_probabilities(&back, &train.covariates(), mode).unwrap();
            assert_eq!(a.0, b.0);
        }
        assert_eq!(model.trace.log_likelihood, back.trace.log_likelihood);
        assert_eq!(model.final_mapping(), back.final_mapping());
    }
}

#[test]
fn same_seed_same_files() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_squares(dir.path());
    let mut blobs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(format!("{run}.json"));
        let o = pasb(&["train", "--data", path(&data), "--link", "msr", "--experts", "2", "--layers", "1", "--iters", "30", "--seed", "4", "--out", path(&out)]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        blobs.push((
            fs::read(dir.path().join(format!("{run}.params.bin"))).unwrap(),
            fs::read(dir.path().join(format!("{run}.trace.csv"))).unwrap(),
        ));
    }
    assert_eq!(blobs[0], blobs[1]);
    let trace = String::from_utf8(blobs[0].1.clone()).unwrap();
    assert_eq!(trace.lines().next(), Some("sweep,log_likelihood,accepted,mapping"));
    assert_eq!(trace.lines().count(), 31);
}

#[test]
fn predict_writes_probabilities_and_labels() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_squares(dir.path());
    let model = dir.path().join("m.json");
    assert!(pasb(&["train", "--data", path(&data), "--link", "logistic", "--iters", "40", "--out", path(&model)]).status.success());
    let (probs, labels) = (dir.path().join("p.csv"), dir.path().join("l.csv"));
    let o = pasb(&["predict", "--model", path(&model), "--data", path(&data), "--out-probs", path(&probs), "--out-labels", path(&labels)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    let probs = fs::read_to_string(probs).unwrap();
    let mut lines = probs.lines();
    assert_eq!(lines.next(), Some("1,2,3,4,5"));
    for line in lines {
        let s: f64 = line.split(',').map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
    assert_eq!(fs::read_to_string(labels).unwrap().lines().count(), 121);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_squares(dir.path());
    let out = dir.path().join("m.json");
    let missing = pasb(&["train", "--data", "/nonexistent/x.csv", "--link", "logistic", "--out", path(&out)]);
    assert_eq!(missing.status.code(), Some(3));
    let bad_perm = pasb(&["train", "--data", path(&data), "--link", "logistic", "--z", "1,1,2,3,4", "--out", path(&out)]);
    assert_eq!(bad_perm.status.code(), Some(2));
    let bad_schedule = pasb(&["train", "--data", path(&data), "--link", "logistic", "--iters", "10", "--burn-in", "10", "--out", path(&out)]);
    assert_eq!(bad_schedule.status.code(), Some(2));
    let unknown = pasb(&["train", "--data", path(&data), "--link", "probit", "--out", path(&out)]);
    assert_eq!(unknown.status.code(), Some(2));
    let garbled = dir.path().join("bad.csv");
    fs::write(&garbled, "label,a\n1,0.5\n2,abc\n").unwrap();
    let parse = pasb(&["train", "--data", path(&garbled), "--link", "logistic", "--out", path(&out)]);
    assert_eq!(parse.status.code(), Some(3));
}

#[test]
fn zero_outlier_ratio_copies_input() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    fs::write(&input, "label,a,b,c,d,e,f\nx,1,2,3,4,5,6\ny,0,0,0,0,0,0\n").unwrap();
    let out = dir.path().join("out.csv");
    let o = pasb(&["synth", "--kind", "vehicle-outliers", "--input", path(&input), "--ratio", "0", "--out", path(&out)]);
    assert!(o.status.success());
    assert_eq!(fs::read(&input).unwrap(), fs::read(&out).unwrap());

    let o = pasb(&["synth", "--kind", "vehicle-outliers", "--input", path(&input), "--ratio", "1.5", "--out", path(&out)]);
    assert!(o.status.success());
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with(&fs::read_to_string(&input).unwrap()));
    assert_eq!(text.lines().count(), 1 + 2 + 3);

    let o = pasb(&["synth", "--kind", "vehicle-outliers", "--input", path(&input), "--ratio", "-1", "--out", path(&out)]);
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn synth_square_k_split() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = (dir.path().join("tr.csv"), dir.path().join("te.csv"));
    let o = pasb(&["synth", "--kind", "square-k", "--k", "9", "--n", "200", "--out", path(&train), "--test-out", path(&test), "--test-fraction", "0.3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = |p: &Path| fs::read_to_string(p).unwrap().lines().count() - 1;
    assert_eq!(rows(&train) + rows(&test), 200);
    assert_eq!(rows(&test), 60);
}

#[test]
fn heatmap_and_transform() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_squares(dir.path());
    let model = dir.path().join("msr.json");
    assert!(pasb(&["train", "--data", path(&data), "--link", "msr", "--experts", "2", "--layers", "2", "--iters", "30", "--out", path(&model)]).status.success());

    let prefix = dir.path().join("hm");
    let o = pasb(&["heatmap", "--model", path(&model), "--bbox", "-2,2,-2,2", "--resolution", "7", "--out-prefix", path(&prefix)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let grids: Vec<Vec<f64>> = (1..=5)
        .map(|c| {
            let text = fs::read_to_string(dir.path().join(format!("hm_{c}.csv"))).unwrap();
            text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect()
        })
        .collect();
    for cell in 0..49 {
        let s: f64 = grids.iter().map(|g| g[cell]).sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    let out = dir.path().join("tr.csv");
    let o = pasb(&["transform", "--model", path(&model), "--data", path(&data), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let header = fs::read_to_string(&out).unwrap().lines().next().unwrap().to_string();
    assert!(header.split(',').count() > 3);

    let lin = dir.path().join("lin.json");
    assert!(pasb(&["train", "--data", path(&data), "--link", "logistic", "--iters", "10", "--out", path(&lin)]).status.success());
    let o = pasb(&["transform", "--model", path(&lin), "--data", path(&data), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_benchmark_suite_writes_header() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("suite.toml");
    fs::write(&suite, "").unwrap();
    let out = dir.path().join("table.csv");
    let o = pasb(&["benchmark", "--suite", path(&suite), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_to_string(&out).unwrap(), "dataset\n");
}

#[test]
fn benchmark_reports_missing_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_squares(dir.path());
    let suite = dir.path().join("suite.toml");
    fs::write(
        &suite,
        format!(
            "[[dataset]]\nname = \"sq\"\npath = \"{}\"\npartitions = 2\n\n[[dataset]]\nname = \"gone\"\npath = \"gone.csv\"\n\n[[model]]\nname = \"MLR\"\nlink = \"logistic\"\niters = 40\nburn_in = 20\n",
            data.file_name().unwrap().to_str().unwrap()
        ),
    )
    .unwrap();
    let (out, detail) = (dir.path().join("t.csv"), dir.path().join("d.csv"));
    let o = pasb(&["benchmark", "--suite", path(&suite), "--out", path(&out), "--detail", path(&detail)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(&out).unwrap();
    assert!(table.starts_with("dataset,MLR\n"), "{table}");
    assert!(table.contains("missing"), "{table}");
    let detail = fs::read_to_string(&detail).unwrap();
    assert_eq!(detail.lines().count(), 3);
}
