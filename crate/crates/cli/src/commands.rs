use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};
use polvis_core::analytics::{
    bt_fit, correlate_reference, crowd_size_series, lagged_regression, welch_t_test, BtOptions, DvTransform, EventDay,
    Field, ImageRecord, LagSpec,
};
use polvis_core::corpus::{analytic_log_correlation, generate_location, CorpusConfig};
use polvis_core::detection::faces::{annotate, train_face_detector, AttributeNets, FaceTrainingConfig};
use polvis_core::detection::{detect, HaarDetector, ScanConfig};
use polvis_core::interpret::{gradcam, render_overlay, GradCamOptions, Upsample};
use polvis_core::io::tables::{read_annotations_file, read_comparisons_file, read_references, read_series, score_rows};
use polvis_core::io::{line_chart, read_image, read_rows, write_image, write_rows, Manifest, PlotOptions, ScoreRow};
use polvis_core::training::checkpoint::{fine_tune_init, load_checkpoint, save_checkpoint, Checkpoint};
use polvis_core::training::templates::{binary_cnn, deep_cnn, small_cnn};
use polvis_core::training::{train, Network, Objective, Sample, SgdConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::cli::*;
use crate::config::Config;
use crate::error::CliError;

/// Settings shared by every command after merging flags over the config file.
pub struct Context {
    pub seed: u64,
    pub workers: Option<usize>,
    pub config: Config,
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<(), CliError> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_csv<T: Serialize>(out: Option<&Path>, rows: &[T]) -> Result<(), CliError> {
    let mut w = sink(out)?;
    write_rows(&mut w, rows)?;
    w.flush()?;
    Ok(())
}

fn field(name: &str) -> Result<Field, CliError> {
    name.parse::<Field>().map_err(|e| CliError::Usage(e.to_string()))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::data("io", format!("{}: {e}", path.display())))
}

fn load_series(path: &Path) -> Result<Vec<EventDay>, CliError> {
    Ok(read_series(open(path)?)?)
}

fn load_network(path: &Path) -> Result<Network, CliError> {
    Ok(load_checkpoint(path)?.to_network()?)
}

fn pool(workers: Option<usize>) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Usage(format!("worker pool: {e}")))
}

pub fn run(command: Command, ctx: &Context) -> Result<(), CliError> {
    match command {
        Command::Train(a) => train_cmd(a, ctx),
        Command::Classify(a) => classify(a),
        Command::Detect(a) => detect_cmd(a, ctx),
        Command::CountFaces(a) => count_faces(a, ctx),
        Command::Gradcam(a) => gradcam_cmd(a),
        Command::BtFit(a) => bt_fit_cmd(a, ctx),
        Command::Aggregate(a) => aggregate(a),
        Command::Correlate(a) => correlate(a),
        Command::Ttest(a) => ttest(a),
        Command::Regress(a) => regress(a),
        Command::Plot(a) => plot(a),
        Command::TrainDetector(a) => train_detector_cmd(a, ctx),
        Command::TrainAttributes(a) => train_attributes(a, ctx),
        Command::Synth(a) => synth(a, ctx),
    }
}

fn train_cmd(a: TrainArgs, ctx: &Context) -> Result<(), CliError> {
    let manifest = Manifest::load(&a.manifest)?;
    let mut data = Vec::with_capacity(manifest.rows.len());
    for row in &manifest.rows {
        let raw = row
            .get(&a.label_column)
            .ok_or_else(|| CliError::data("manifest", format!("no {:?} column", a.label_column)))?;
        let label: usize = raw
            .parse()
            .map_err(|_| CliError::data("manifest", format!("label {raw:?} of {} is not a class index", row.path.display())))?;
        data.push(Sample::new(read_image(&row.path)?, label));
    }
    let first = data.first().ok_or_else(|| CliError::data("manifest", "no rows"))?;
    let (c, h, w) = first.input.chw()?;
    if let Some(bad) = data.iter().find(|s| s.input.shape() != first.input.shape()) {
        return Err(CliError::data("manifest", format!("image shape {:?} differs from {:?}", bad.input.shape(), first.input.shape())));
    }
    let classes = a.classes.unwrap_or_else(|| data.iter().map(|s| s.label).max().unwrap_or(0) + 1);
    let (mut net, objective) = match a.arch {
        Arch::Small => (small_cnn((c, h, w), classes, ctx.seed)?, Objective::CrossEntropy),
        Arch::Deep => (deep_cnn((c, h, w), classes, ctx.seed)?, Objective::CrossEntropy),
        Arch::Binary => (binary_cnn((c, h, w), ctx.seed)?, Objective::BinaryCrossEntropy),
    };
    if let Some(init) = &a.init {
        let layers: Vec<&str> = a.copy_layers.iter().map(String::as_str).collect();
        let copied = fine_tune_init(&mut net, &load_checkpoint(init)?, &layers)?;
        info!("initialized {copied} tensors from {}", init.display());
    }
    let cfg = SgdConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch,
        seed: ctx.seed,
    };
    let history = train(&mut net, &data, &cfg, objective)?;
    save_checkpoint(&net, &a.out)?;
    if let Some(path) = &a.history {
        let mut w = sink(Some(path))?;
        history.write_csv(&mut w)?;
        w.flush()?;
    }
    if let Some(acc) = history.final_accuracy() {
        info!("final train accuracy {acc:.4}");
    }
    Ok(())
}

#[derive(Serialize)]
struct Prediction {
    label: String,
    probability: f64,
}

fn classify(a: ClassifyArgs) -> Result<(), CliError> {
    let net = load_network(&a.checkpoint)?;
    let out = net.predict(&read_image(&a.image)?)?;
    let (index, probability) = if out.len() == 1 {
        let p = out.data()[0];
        if p >= 0.5 {
            (1, p)
        } else {
            (0, 1.0 - p)
        }
    } else {
        let i = out.argmax();
        (i, out.data()[i])
    };
    let label = a.labels.get(index).cloned().unwrap_or_else(|| index.to_string());
    write_csv(None, &[Prediction { label, probability }])
}

fn scan_config(s: &ScanArgs, ctx: &Context) -> ScanConfig {
    let defaults = ScanConfig::default();
    ScanConfig {
        window_sizes: (!s.windows.is_empty()).then(|| s.windows.clone()),
        stride: s.stride.or(ctx.config.scan.stride),
        iou_threshold: s.iou.or(ctx.config.scan.iou_threshold).unwrap_or(defaults.iou_threshold),
    }
}

fn load_detector(path: &Path) -> Result<HaarDetector, CliError> {
    Ok(HaarDetector::from_checkpoint(&Checkpoint::load(path)?)?)
}

#[derive(Serialize)]
struct DetectionRow {
    x: usize,
    y: usize,
    w: usize,
    h: usize,
    score: f64,
    category: String,
}

fn detect_cmd(a: DetectArgs, ctx: &Context) -> Result<(), CliError> {
    let det = load_detector(&a.scan.detector)?;
    let dets = detect(&read_image(&a.image)?, &det, &scan_config(&a.scan, ctx))?;
    let rows: Vec<DetectionRow> = dets
        .into_iter()
        .map(|d| DetectionRow {
            x: d.bbox.x,
            y: d.bbox.y,
            w: d.bbox.w,
            h: d.bbox.h,
            score: d.score,
            category: d.category,
        })
        .collect();
    write_csv(a.out.as_deref(), &rows)
}

fn load_attribute_nets(dir: &Path) -> Result<AttributeNets, CliError> {
    Ok(AttributeNets {
        female: load_network(&dir.join("female.idkp"))?,
        child: load_network(&dir.join("child.idkp"))?,
    })
}

fn count_faces(a: CountFacesArgs, ctx: &Context) -> Result<(), CliError> {
    let det = load_detector(&a.scan.detector)?;
    let nets = a.attributes.as_deref().map(load_attribute_nets).transpose()?;
    let manifest = Manifest::load(&a.manifest)?;
    let scan = scan_config(&a.scan, ctx);
    let records: Vec<ImageRecord> = pool(ctx.workers)?.install(|| {
        manifest
            .rows
            .par_iter()
            .map(|row| {
                let meta = |col: &str| {
                    row.get(col)
                        .ok_or_else(|| CliError::data("manifest", format!("{} has no {col:?}", row.path.display())))
                };
                let date = NaiveDate::parse_from_str(meta("date")?, "%Y-%m-%d")
                    .map_err(|e| CliError::data("manifest", format!("{}: date: {e}", row.path.display())))?;
                let image_id = match row.get("image_id") {
                    Some(id) => id.to_string(),
                    None => row.path.file_stem().unwrap_or_default().to_string_lossy().into_owned(),
                };
                let ann = annotate(&read_image(&row.path)?, Some(&det), nets.as_ref(), &scan)?;
                Ok(ImageRecord {
                    image_id,
                    date,
                    location: meta("location")?.to_string(),
                    faces: ann.face_count(),
                    female_faces: ann.female_faces(),
                    has_child: ann.has_child(),
                })
            })
            .collect::<Result<_, CliError>>()
    })?;
    info!("annotated {} images", records.len());
    write_csv(a.out.as_deref(), &records)
}

fn gradcam_cmd(a: GradcamArgs) -> Result<(), CliError> {
    let mut net = load_network(&a.checkpoint)?;
    let img = read_image(&a.image)?;
    let class = match a.class {
        Some(c) => c,
        None => net.predict(&img)?.argmax(),
    };
    let opts = GradCamOptions {
        upsample: if a.nearest { Upsample::Nearest } else { Upsample::Bilinear },
        all_layers: a.all_layers,
    };
    let map = gradcam(&mut net, &img, class, opts)?;
    render_overlay(&img, &map, &a.out)?;
    if let Some(path) = &a.map {
        let (_, h, w) = map.values.chw()?;
        let mut wr = sink(Some(path))?;
        writeln!(wr, "row,col,value")?;
        for r in 0..h {
            for c in 0..w {
                writeln!(wr, "{r},{c},{}", map.values.data()[r * w + c])?;
            }
        }
        wr.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    log_likelihood: f64,
}

fn bt_fit_cmd(a: BtFitArgs, ctx: &Context) -> Result<(), CliError> {
    let records = read_comparisons_file(&a.comparisons)?;
    let defaults = BtOptions::default();
    let b = &ctx.config.bt;
    let opts = BtOptions {
        max_iters: a.max_iters.or(b.max_iters).unwrap_or(defaults.max_iters),
        tol: a.tol.or(b.tol).unwrap_or(defaults.tol),
        pseudo_count: a.pseudo_count.or(b.pseudo_count).unwrap_or(defaults.pseudo_count),
    };
    let fit = bt_fit(&records, &opts)?;
    if !fit.converged {
        warn!("not converged after {} iterations", fit.iterations);
    }
    if fit.disconnected() {
        warn!("comparison graph has {} components; scores are only comparable within one", fit.components);
    }
    if let Some(path) = &a.trace {
        let rows: Vec<TraceRow> = fit
            .log_likelihood
            .iter()
            .enumerate()
            .map(|(iteration, &log_likelihood)| TraceRow { iteration, log_likelihood })
            .collect();
        write_csv(Some(path), &rows)?;
    }
    write_csv(a.out.as_deref(), &score_rows(&fit))
}

fn aggregate(a: AggregateArgs) -> Result<(), CliError> {
    let images = read_annotations_file(&a.annotations)?;
    let violence: HashMap<String, f64> = match &a.scores {
        Some(p) => read_rows::<ScoreRow>(open(p)?, &["item", "score"])?
            .into_iter()
            .map(|r| (r.item, r.score))
            .collect(),
        None => HashMap::new(),
    };
    write_csv(a.out.as_deref(), &crowd_size_series(&images, &violence)?)
}

fn correlate(a: CorrelateArgs) -> Result<(), CliError> {
    let days = load_series(&a.series)?;
    let refs = read_references(open(&a.references)?)?;
    let c = correlate_reference(&days, &refs, field(&a.field)?, a.source.as_deref())?;
    write_json(a.out.as_deref(), &c)
}

#[derive(Serialize)]
struct TtestOut {
    field: String,
    group_a: String,
    group_b: String,
    n_a: usize,
    n_b: usize,
    mean_a: f64,
    mean_b: f64,
    t: f64,
    df: f64,
    p: f64,
}

fn ttest(a: TtestArgs) -> Result<(), CliError> {
    let days = load_series(&a.series)?;
    let f = field(&a.field)?;
    let value = |d: &EventDay| d.get(f);
    let (name_a, name_b, xa, xb): (String, String, Vec<f64>, Vec<f64>) = match a.by {
        Grouping::Saturday => {
            let keep = |d: &&EventDay| a.location.as_ref().is_none_or(|l| &d.location == l);
            let sat = days.iter().filter(keep).filter(|d| d.is_saturday()).filter_map(value).collect();
            let other = days.iter().filter(keep).filter(|d| !d.is_saturday()).filter_map(value).collect();
            ("saturday".into(), "other".into(), sat, other)
        }
        Grouping::Location => {
            let (la, lb) = match (&a.a, &a.b) {
                (Some(x), Some(y)) => (x.clone(), y.clone()),
                _ => return Err(CliError::Usage("--by location needs --a and --b".into())),
            };
            let pick = |l: &str| days.iter().filter(|d| d.location == l).filter_map(value).collect();
            let (xa, xb) = (pick(&la), pick(&lb));
            (la, lb, xa, xb)
        }
    };
    let r = welch_t_test(&xa, &xb)?;
    write_json(
        a.out.as_deref(),
        &TtestOut {
            field: f.name().into(),
            group_a: name_a,
            group_b: name_b,
            n_a: xa.len(),
            n_b: xb.len(),
            mean_a: r.mean_a,
            mean_b: r.mean_b,
            t: r.t,
            df: r.df,
            p: r.p,
        },
    )
}

#[derive(Serialize)]
struct RegressMeta {
    n: usize,
    df: usize,
    residual_variance: f64,
    log_zero_rows: usize,
}

fn regress(a: RegressArgs) -> Result<(), CliError> {
    let days = load_series(&a.series)?;
    let spec = LagSpec {
        dv: field(&a.dv)?,
        ivs: a.iv.iter().map(|s| field(s)).collect::<Result<_, _>>()?,
        lag_days: a.lag,
        transform: if a.raw { DvTransform::Raw } else { DvTransform::Log10 },
    };
    let res = lagged_regression(&days, &spec, |d| {
        (a.location.is_empty() || a.location.contains(&d.location)) && (!a.saturdays || d.is_saturday())
    })?;
    if res.log_zero_rows > 0 {
        warn!("{} outcome rows had zero counts and were mapped to log10(0 + 1)", res.log_zero_rows);
    }
    if let Some(path) = &a.meta {
        write_json(
            Some(path),
            &RegressMeta {
                n: res.n,
                df: res.df,
                residual_variance: res.residual_variance,
                log_zero_rows: res.log_zero_rows,
            },
        )?;
    }
    write_csv(a.out.as_deref(), &res.coefficients)
}

fn plot(a: PlotArgs) -> Result<(), CliError> {
    let days = load_series(&a.series)?;
    let f = field(&a.y)?;
    let location = match &a.location {
        Some(l) => l.clone(),
        None => {
            let mut locs: Vec<&str> = days.iter().map(|d| d.location.as_str()).collect();
            locs.dedup();
            match locs.as_slice() {
                [one] => one.to_string(),
                [] => return Err(CliError::data("plot", "series is empty")),
                _ => return Err(CliError::Usage("series has several locations; pick one with --location".into())),
            }
        }
    };
    let points: Vec<(NaiveDate, f64)> = days
        .iter()
        .filter(|d| d.location == location)
        .filter_map(|d| Some((d.date, d.get(f)?)))
        .collect();
    let opts = PlotOptions {
        title: a.title.unwrap_or_else(|| format!("{} in {location}", f.name())),
        y_label: f.name().into(),
        ..Default::default()
    };
    let svg = line_chart(&points, &opts)
        .ok_or_else(|| CliError::data("plot", format!("no values of {} for {location}", f.name())))?;
    let mut w = sink(a.out.as_deref())?;
    w.write_all(svg.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn train_detector_cmd(a: TrainDetectorArgs, ctx: &Context) -> Result<(), CliError> {
    let det = train_face_detector(&FaceTrainingConfig {
        images: a.images,
        image_size: a.image_size,
        rounds: a.rounds,
        feature_step: a.feature_step,
        seed: ctx.seed,
    })?;
    info!("trained {} rounds", det.classifier.rounds.len());
    det.to_checkpoint().save(&a.out)?;
    Ok(())
}

fn train_attributes(a: TrainAttributesArgs, ctx: &Context) -> Result<(), CliError> {
    let nets = AttributeNets::train_synthetic(a.samples, a.epochs, ctx.seed)?;
    fs::create_dir_all(&a.out_dir)?;
    save_checkpoint(&nets.female, a.out_dir.join("female.idkp"))?;
    save_checkpoint(&nets.child, a.out_dir.join("child.idkp"))?;
    Ok(())
}

#[derive(Serialize)]
struct ManifestOut {
    path: PathBuf,
    image_id: String,
    date: NaiveDate,
    location: String,
    planted_faces: usize,
}

#[derive(Serialize)]
struct TruthLocation {
    location: String,
    planted_coefficient: f64,
}

#[derive(Serialize)]
struct Truth {
    slope: f64,
    reference_noise_sd: f64,
    analytic_log_correlation: f64,
    locations: Vec<TruthLocation>,
}

fn synth(a: SynthArgs, ctx: &Context) -> Result<(), CliError> {
    let cfg = CorpusConfig {
        locations: a.locations,
        days: a.days,
        seed: ctx.seed,
        ..Default::default()
    };
    let image_dir = a.out_dir.join("images");
    fs::create_dir_all(&image_dir)?;
    let (mut manifest, mut comparisons, mut references, mut logs, mut truth) = (vec![], vec![], vec![], vec![], vec![]);
    for index in 0..cfg.locations {
        let loc = generate_location(&cfg, index)?;
        for img in &loc.images {
            let rel = PathBuf::from("images").join(format!("{}.pgm", img.image_id));
            write_image(&img.image, a.out_dir.join(&rel))?;
            manifest.push(ManifestOut {
                path: rel,
                image_id: img.image_id.clone(),
                date: img.date,
                location: img.location.clone(),
                planted_faces: img.planted_faces,
            });
        }
        logs.extend(loc.planted_log_counts());
        truth.push(TruthLocation {
            location: loc.location.clone(),
            planted_coefficient: loc.planted_coefficient(cfg.slope),
        });
        comparisons.extend(loc.comparisons);
        references.extend(loc.references);
    }
    write_csv(Some(&a.out_dir.join("manifest.csv")), &manifest)?;
    write_csv(Some(&a.out_dir.join("comparisons.csv")), &comparisons)?;
    write_csv(Some(&a.out_dir.join("references.csv")), &references)?;
    write_json(
        Some(&a.out_dir.join("truth.json")),
        &Truth {
            slope: cfg.slope,
            reference_noise_sd: cfg.reference_noise_sd,
            analytic_log_correlation: analytic_log_correlation(&logs, cfg.reference_noise_sd),
            locations: truth,
        },
    )?;
    info!("wrote {} images to {}", manifest.len(), a.out_dir.display());
    Ok(())
}
