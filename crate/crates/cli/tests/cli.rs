use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use polvis_core::analytics::{bt_fit, BtOptions};
use polvis_core::io::tables::{read_comparisons_file, score_rows};
use polvis_core::io::{read_image, read_pnm, write_image, write_rows};
use polvis_core::training::checkpoint::save_checkpoint;
use polvis_core::training::templates::small_cnn;
use polvis_core::Tensor;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn polvis(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_polvis"))
        .args(args)
        .env_remove("POLVIS_CONFIG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = polvis(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn bt_fit_matches_golden_file_and_library() {
    let comparisons = fixture("comparisons.csv");
    let stdout = ok(&["bt-fit", "--comparisons", p(&comparisons)]);
    assert_eq!(stdout, fs::read_to_string(fixture("scores.golden.csv")).unwrap());

    let fit = bt_fit(&read_comparisons_file(&comparisons).unwrap(), &BtOptions::default()).unwrap();
    let mut lib = Vec::new();
    write_rows(&mut lib, &score_rows(&fit)).unwrap();
    assert_eq!(stdout.as_bytes(), lib.as_slice());

    let rows: Vec<&str> = stdout.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for row in rows {
        let score: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&score));
    }
}

#[test]
fn bt_fit_writes_out_file_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let (out, trace) = (dir.path().join("s.csv"), dir.path().join("t.csv"));
    ok(&["bt-fit", "--comparisons", p(&fixture("comparisons.csv")), "--out", p(&out), "--trace", p(&trace)]);
    assert_eq!(fs::read_to_string(out).unwrap(), fs::read_to_string(fixture("scores.golden.csv")).unwrap());
    let trace = fs::read_to_string(trace).unwrap();
    assert!(trace.starts_with("iteration,log_likelihood\n"));
    assert!(trace.lines().count() > 2);
}

#[test]
fn config_file_supplies_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("polvis.toml");
    fs::write(&cfg, "[bt]\nmax_iters = 1\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_polvis"))
        .args(["bt-fit", "--comparisons", p(&fixture("comparisons.csv"))])
        .env("POLVIS_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_ne!(String::from_utf8(out.stdout).unwrap(), fs::read_to_string(fixture("scores.golden.csv")).unwrap());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not converged"));

    fs::write(&cfg, "[bt]\nmax_itres = 1\n").unwrap();
    let bad = polvis(&["--config", p(&cfg), "bt-fit", "--comparisons", p(&fixture("comparisons.csv"))]);
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn plot_is_valid_svg_with_saturday_markers() {
    let svg = ok(&["plot", "--series", p(&fixture("series.csv")), "--y", "face_count", "--location", "HK"]);
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.root_element().tag_name().name(), "svg");
    let sats = doc
        .descendants()
        .find(|n| n.attribute("class") == Some("saturdays"))
        .expect("saturday group");
    assert_eq!(sats.attribute("stroke-dasharray"), Some("4 3"));
    // 2019-06-01 .. 2019-06-28 has four Saturdays
    assert_eq!(sats.children().filter(|n| n.has_tag_name("line")).count(), 4);
    let series = doc.descendants().find(|n| n.has_tag_name("polyline")).unwrap();
    assert_eq!(series.attribute("points").unwrap().split_whitespace().count(), 28);
}

#[test]
fn exit_codes() {
    let unknown = polvis(&["bogus"]);
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));
    assert_eq!(polvis(&["bt-fit"]).status.code(), Some(2));
    assert_eq!(polvis(&["plot", "--series", p(&fixture("series.csv")), "--y", "nope"]).status.code(), Some(2));

    let missing = polvis(&["bt-fit", "--comparisons", "/nonexistent/c.csv"]);
    assert_eq!(missing.status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let ties = dir.path().join("ties.csv");
    fs::write(&ties, "item_a,item_b,winner\nx,y,tie\n").unwrap();
    let bad = polvis(&["bt-fit", "--comparisons", p(&ties)]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 2"));

    // a regressor with no variance
    let flat = dir.path().join("flat.csv");
    let mut text = String::from("date,location,face_count,pct_female,pct_child_photos,violence,n_tweets,no_faces\n");
    for d in 1..=9 {
        text.push_str(&format!("2020-01-0{d},X,{},0.5,0.1,0.2,5,false\n", d * 3));
    }
    fs::write(&flat, text).unwrap();
    let numeric = polvis(&["regress", "--series", p(&flat), "--iv", "n_tweets"]);
    assert_eq!(numeric.status.code(), Some(4), "{}", String::from_utf8_lossy(&numeric.stderr));
}

#[test]
fn analysis_commands() {
    let series = fixture("series.csv");
    let table = ok(&["regress", "--series", p(&series), "--iv", "n_tweets,violence", "--location", "HK"]);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "variable,coef,se,ci_lo,ci_hi");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("intercept,"));

    let t: serde_json::Value = serde_json::from_str(&ok(&["ttest", "--series", p(&series), "--field", "face_count"])).unwrap();
    assert_eq!(t["n_a"], 8);
    assert!(t["p"].as_f64().unwrap() < 1e-6);
    let by_loc: serde_json::Value = serde_json::from_str(&ok(&[
        "ttest", "--series", p(&series), "--field", "face_count", "--by", "location", "--a", "HK", "--b", "SK",
    ]))
    .unwrap();
    assert_eq!(by_loc["n_b"], 28);

    let c: serde_json::Value = serde_json::from_str(&ok(&[
        "correlate", "--series", p(&series), "--references", p(&fixture("references.csv")),
    ]))
    .unwrap();
    assert_eq!(c["n"], 56);
    assert!(c["logged"].as_f64().unwrap() > 0.8);
}

#[test]
fn classify_and_gradcam_agree_with_library() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.idkp");
    let net = small_cnn((1, 8, 8), 3, 5).unwrap();
    save_checkpoint(&net, &ckpt).unwrap();
    let img_path = dir.path().join("x.pgm");
    let img = Tensor::from_fn(&[1, 8, 8], |i| ((i * 37) % 11) as f64 / 10.0).unwrap();
    write_image(&img, &img_path).unwrap();

    let out = ok(&["classify", "--checkpoint", p(&ckpt), "--image", p(&img_path), "--labels", "a,b,c"]);
    let probs = net.predict(&read_image(&img_path).unwrap()).unwrap();
    let top = probs.argmax();
    assert_eq!(out, format!("label,probability\n{},{}\n", ["a", "b", "c"][top], probs.data()[top]));

    let overlay = dir.path().join("o.ppm");
    let map = dir.path().join("map.csv");
    ok(&["gradcam", "--checkpoint", p(&ckpt), "--image", p(&img_path), "--out", p(&overlay), "--map", p(&map)]);
    let ppm = read_pnm(&overlay).unwrap();
    assert_eq!((ppm.width, ppm.height, ppm.channels), (8, 8, 3));
    let values: Vec<f64> = fs::read_to_string(&map)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(values.len(), 64);
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn train_command_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut manifest = String::from("path,label\n");
    for i in 0..8 {
        let label = i % 2;
        let img = Tensor::from_fn(&[1, 6, 6], |k| if (k % 6 < 3) == (label == 0) { 0.9 } else { 0.1 }).unwrap();
        let name = format!("img{i}.pgm");
        write_image(&img, dir.path().join(&name)).unwrap();
        manifest.push_str(&format!("{name},{label}\n"));
    }
    let m = dir.path().join("train.csv");
    fs::write(&m, manifest).unwrap();
    let run = |tag: &str| {
        let out = dir.path().join(format!("{tag}.idkp"));
        let hist = dir.path().join(format!("{tag}.csv"));
        ok(&["--seed", "3", "train", "--manifest", p(&m), "--epochs", "30", "--lr", "0.1", "--out", p(&out), "--history", p(&hist)]);
        (fs::read(out).unwrap(), fs::read_to_string(hist).unwrap())
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let last = a.1.lines().last().unwrap();
    assert_eq!(last.rsplit(',').next().unwrap(), "1");
    let fine = dir.path().join("f.idkp");
    ok(&["train", "--manifest", p(&m), "--epochs", "2", "--init", p(&dir.path().join("a.idkp")), "--out", p(&fine)]);
}

#[test]
fn synthetic_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name);
    let corpus = d("corpus");
    ok(&["--seed", "4", "synth", "--locations", "2", "--days", "10", "--out-dir", p(&corpus)]);
    let again = d("again");
    ok(&["--seed", "4", "synth", "--locations", "2", "--days", "10", "--out-dir", p(&again)]);
    for f in ["manifest.csv", "comparisons.csv", "references.csv", "truth.json"] {
        assert_eq!(fs::read(corpus.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }

    ok(&["--seed", "1", "train-detector", "--images", "30", "--rounds", "40", "--out", p(&d("det.idkp"))]);
    let first_image = fs::read_to_string(corpus.join("manifest.csv")).unwrap().lines().nth(1).unwrap().split(',').next().unwrap().to_string();
    let boxes = ok(&["detect", "--detector", p(&d("det.idkp")), "--image", p(&corpus.join(first_image))]);
    assert!(boxes.starts_with("x,y,w,h,score,category\n"));

    ok(&["train-attributes", "--samples", "40", "--epochs", "10", "--out-dir", p(&d("attrs"))]);
    let annotations = d("annotations.csv");
    ok(&[
        "--workers", "2", "count-faces", "--detector", p(&d("det.idkp")), "--attributes", p(&d("attrs")),
        "--manifest", p(&corpus.join("manifest.csv")), "--windows", "24,30", "--out", p(&annotations),
    ]);
    let ann = fs::read_to_string(&annotations).unwrap();
    assert!(ann.starts_with("image_id,date,location,faces,female_faces,has_child\n"));
    let manifest_rows = fs::read_to_string(corpus.join("manifest.csv")).unwrap().lines().count();
    assert_eq!(ann.lines().count(), manifest_rows);

    ok(&["bt-fit", "--comparisons", p(&corpus.join("comparisons.csv")), "--out", p(&d("scores.csv"))]);
    ok(&["aggregate", "--annotations", p(&annotations), "--scores", p(&d("scores.csv")), "--out", p(&d("series.csv"))]);
    let series = fs::read_to_string(d("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 2 * 10);

    let c: serde_json::Value = serde_json::from_str(&ok(&[
        "correlate", "--series", p(&d("series.csv")), "--references", p(&corpus.join("references.csv")),
    ]))
    .unwrap();
    assert_eq!(c["n"], 20);
    let table = ok(&["regress", "--series", p(&d("series.csv")), "--iv", "n_tweets,violence", "--meta", p(&d("meta.json"))]);
    assert_eq!(table.lines().count(), 4);
    let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(d("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["n"], 18);
}
