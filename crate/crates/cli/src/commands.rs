use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Subcommand, ValueEnum};
use echowall::classify::{cross_validate, train as train_classifier, ClassifierKind, ClassifierSpec, Model};
use echowall::dataset::{self, EchoLabels, FeatureTable};
use echowall::features::{analyze_echo, area_csv, displacement_csv, EchoCurves, FeatureMode, DEFAULT_SAMPLES};
use echowall::imgproc::{resize_nearest, GrayFrame, WallMask};
use echowall::phantom::{generate_echo, plan_dataset, AmplitudeRanges, PhantomConfig, DEFAULT_MI_PREVALENCE};
use echowall::pipeline::{feature_table, fit_frames, fit_masks, skipped_csv, MaskedEcho};
use echowall::pseudolabel::{run_pseudo_labeling, stats_csv, Acceptor, LabelPool, LabeledEcho, ProbeEcho, UnlabeledEcho, DEFAULT_IOU, DEFAULT_ROUNDS};
use echowall::segnet::{build_net, count_ops, loss_csv, segment_echo, train, NetConfig, NetParams, TrainConfig, PAPER_ENCODER};
use echowall::wallgeom::SegmentRatios;
use echowall::Error;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::visualize::{area_series, displacement_series, line_plot, max_displacement_snapshot, segment_overlay};
use crate::Failure;

type Outcome = Result<(), Failure>;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a phantom dataset.
    Synth(SynthArgs),
    /// Train the segmentation network on frames with masks.
    TrainSeg(TrainSegArgs),
    /// Predict wall masks for every echo.
    Segment(SegmentArgs),
    /// Grow the labeled set by iterative pseudo labeling.
    Pseudolabel(PseudolabelArgs),
    /// Extract motion and area features from wall masks.
    Features(FeaturesArgs),
    /// Train a classifier on a feature table, or apply a saved one.
    Classify(ClassifyArgs),
    /// Stratified k-fold evaluation of a classifier.
    Evaluate(EvaluateArgs),
    /// Segment overlays, curve plots and the max-displacement snapshot.
    Visualize(VisualizeArgs),
    /// Multiplication and addition counts of the network convolutions.
    CountOps(CountOpsArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::TrainSeg(_) => "train-seg",
            Command::Segment(_) => "segment",
            Command::Pseudolabel(_) => "pseudolabel",
            Command::Features(_) => "features",
            Command::Classify(_) => "classify",
            Command::Evaluate(_) => "evaluate",
            Command::Visualize(_) => "visualize",
            Command::CountOps(_) => "count-ops",
        }
    }
}

pub fn run(cmd: &Command, seed: u64, out: &Path, settings: &mut Value) -> Outcome {
    fs::create_dir_all(out).map_err(|e| Failure::from(io_err(out, e)))?;
    match cmd {
        Command::Synth(a) => synth(a, seed, out, settings),
        Command::TrainSeg(a) => train_seg(a, seed, out, settings),
        Command::Segment(a) => segment(a, out, settings),
        Command::Pseudolabel(a) => pseudolabel(a, seed, out, settings),
        Command::Features(a) => features(a, out, settings),
        Command::Classify(a) => classify(a, seed, out, settings),
        Command::Evaluate(a) => evaluate(a, seed, out, settings),
        Command::Visualize(a) => visualize(a, out, settings),
        Command::CountOps(a) => count_ops_cmd(a, out, settings),
    }
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| io_err(path, e).into())
}

fn require_dir(path: &Path, what: &str) -> Outcome {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Failure::missing(format!("{what} directory {} does not exist", path.display())))
    }
}

fn require_file(path: &Path, what: &str) -> Outcome {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::missing(format!("{what} {} does not exist", path.display())))
    }
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 109)]
    n: usize,
    /// Fraction of MI echos.
    #[arg(long, default_value_t = DEFAULT_MI_PREVALENCE)]
    prevalence: f64,
    #[arg(long, default_value_t = 64)]
    image_size: usize,
    #[arg(long, default_value_t = 25)]
    frames: usize,
    #[arg(long, default_value_t = 7.0)]
    wall_thickness: f64,
    /// Peak inward excursion in pixels.
    #[arg(long, default_value_t = 6.0)]
    amplitude: f64,
    /// Speckle noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    contrast: f64,
}

fn synth(a: &SynthArgs, seed: u64, out: &Path, settings: &mut Value) -> Outcome {
    let template = PhantomConfig {
        image_size: a.image_size,
        n_frames: a.frames,
        wall_thickness: a.wall_thickness,
        base_amplitude: a.amplitude,
        speckle_sigma: a.noise,
        contrast: a.contrast,
        ..PhantomConfig::default()
    };
    let ranges = AmplitudeRanges::default();
    *settings = json!({
        "n": a.n, "prevalence": a.prevalence, "image_size": a.image_size, "frames": a.frames,
        "wall_thickness": a.wall_thickness, "amplitude": a.amplitude, "noise": a.noise, "contrast": a.contrast,
        "normal_range": ranges.normal, "abnormal_range": ranges.abnormal,
    });
    let plans = plan_dataset(a.n, a.prevalence, &template, seed, &ranges)?;
    plans
        .par_iter()
        .enumerate()
        .map(|(i, cfg)| {
            let echo = generate_echo(cfg)?;
            dataset::write_echo(&out.join(dataset::echo_id(i)), &echo)
        })
        .collect::<Result<Vec<()>, Error>>()?;
    let mi = plans.iter().filter(|c| c.segment_amplitudes.iter().any(|&f| f < c.abnormality_threshold)).count();
    log::info!("wrote {} echos ({mi} MI, {} non-MI) to {}", plans.len(), plans.len() - mi, out.display());
    Ok(())
}

#[derive(Args, Debug, Clone)]
pub struct NetArgs {
    #[arg(long, default_value_t = 64)]
    input_size: usize,
    /// Divisor applied to every filter count.
    #[arg(long, default_value_t = 8)]
    scale_factor: usize,
    #[arg(long)]
    no_skip: bool,
}

impl NetArgs {
    fn config(&self) -> NetConfig {
        NetConfig { input_size: self.input_size, scale_factor: self.scale_factor, skip_connections: !self.no_skip, ..NetConfig::paper() }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 25)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
}

impl TrainArgs {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig { learning_rate: self.lr, batch_size: self.batch_size, epochs: self.epochs, rng_seed: seed, ..TrainConfig::default() }
    }
}

fn train_json(c: &TrainConfig) -> Value {
    json!({
        "optimizer": "adam", "learning_rate": c.learning_rate, "batch_size": c.batch_size, "epochs": c.epochs,
        "beta1": c.beta1, "beta2": c.beta2, "epsilon": c.epsilon, "rng_seed": c.rng_seed, "loss": "binary_cross_entropy",
    })
}

fn net_json(c: &NetConfig) -> Value {
    json!({
        "input_size": c.input_size, "encoder_filters": c.effective_encoder(), "decoder_filters": c.effective_decoder(),
        "kernel_size": c.kernel_size, "skip_connections": c.skip_connections, "scale_factor": c.scale_factor,
    })
}

/// Echo directories of `root`, optionally only the first `limit`.
fn echos(root: &Path, limit: Option<usize>) -> Result<Vec<(String, PathBuf)>, Failure> {
    require_dir(root, "data")?;
    let mut list = dataset::list_echos(root)?;
    if let Some(n) = limit {
        list.truncate(n);
    }
    Ok(list)
}

#[derive(Args, Debug)]
pub struct TrainSegArgs {
    /// Dataset root with one directory per echo (frames and masks).
    #[arg(long)]
    data: PathBuf,
    /// Use only the first N echos.
    #[arg(long)]
    echos: Option<usize>,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    train: TrainArgs,
}

fn train_seg(a: &TrainSegArgs, seed: u64, out: &Path, settings: &mut Value) -> Outcome {
    let net_cfg = a.net.config();
    let train_cfg = a.train.config(seed);
    *settings = json!({ "data": a.data, "echos": a.echos, "net": net_json(&net_cfg), "train_config": train_json(&train_cfg) });
    net_cfg.validate()?;
    train_cfg.validate()?;
    let list = echos(&a.data, a.echos)?;
    let mut samples = Vec::new();
    for (id, dir) in &list {
        let wrap = |e: Error| Error::Echo { id: id.clone(), source: Box::new(e) };
        let frames = fit_frames(dataset::read_frames(dir).map_err(wrap)?, net_cfg.input_size);
        let masks = fit_masks(dataset::read_masks(dir).map_err(wrap)?, net_cfg.input_size);
        if frames.len() != masks.len() {
            return Err(Failure::missing(format!("echo {id}: {} frames but {} masks", frames.len(), masks.len())));
        }
        samples.extend(frames.into_iter().zip(masks));
    }
    log::info!("training on {} frames from {} echos", samples.len(), list.len());
    let init = build_net(&net_cfg, seed)?;
    let (params, history) = train(&init, &samples, &train_cfg)?;
    params.save(&out.join("segnet.ckpt"))?;
    write(&out.join("loss_history.csv"), &loss_csv(&history))
}

#[derive(Args, Debug)]
pub struct SegmentArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
}

/// Segments at network resolution and maps masks back to frame size.
fn segment_dir(params: &NetParams, dir: &Path) -> Result<Vec<WallMask>, Error> {
    let frames = dataset::read_frames(dir)?;
    let (w, h) = (frames[0].width(), frames[0].height());
    let size = params.config.input_size;
    let masks = segment_echo(params, &fit_frames(frames, size))?;
    Ok(masks.into_iter().map(|m| if (w, h) == (size, size) { m } else { resize_nearest(&m, w, h) }).collect())
}

fn segment(a: &SegmentArgs, out: &Path, settings: &mut Value) -> Outcome {
    *settings = json!({ "data": a.data, "checkpoint": a.checkpoint });
    require_file(&a.checkpoint, "checkpoint")?;
    let params = NetParams::load(&a.checkpoint)?;
    let list = echos(&a.data, None)?;
    let mut failed = Vec::new();
    for (id, dir) in &list {
        match segment_dir(&params, dir) {
            Ok(masks) => {
                let dst = out.join(id);
                dataset::write_masks(&dst, &masks)?;
                if dir.join(dataset::LABELS_FILE).is_file() {
                    let labels = dataset::read_labels(dir)?;
                    dataset::write_labels(&dst, &labels)?;
                }
            }
            Err(e @ (Error::Io { .. } | Error::Image { .. })) => return Err(e.into()),
            Err(e) => {
                log::warn!("echo {id}: {e}");
                failed.push((id.clone(), e.to_string()));
            }
        }
    }
    write(&out.join("segment_failures.csv"), &skipped_csv(&failed))?;
    if failed.len() == list.len() {
        return Err(Failure::numeric("no echo could be segmented"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AcceptorKind {
    Oracle,
    Review,
}

#[derive(Args, Debug)]
pub struct PseudolabelArgs {
    #[arg(long)]
    data: PathBuf,
    /// The first N echos start labeled with their mask files.
    #[arg(long, default_value_t = 4)]
    seeds: usize,
    /// The last N echos are held out as the probe set.
    #[arg(long, default_value_t = 0)]
    probe: usize,
    #[arg(long, default_value_t = DEFAULT_ROUNDS)]
    rounds: usize,
    #[arg(long, value_enum, default_value_t = AcceptorKind::Oracle)]
    acceptor: AcceptorKind,
    /// Oracle IoU threshold.
    #[arg(long, default_value_t = DEFAULT_IOU)]
    iou: f64,
    /// Where review mode writes overlays and looks for accepted.txt.
    #[arg(long)]
    review_dir: Option<PathBuf>,
    /// Seconds to wait for each round's accept list.
    #[arg(long, default_value_t = 3600)]
    review_timeout: u64,
    #[command(flatten)]
    net: NetArgs,
    #[command(flatten)]
    train: TrainArgs,
}

fn pseudolabel(a: &PseudolabelArgs, seed: u64, out: &Path, settings: &mut Value) -> Outcome {
    let net_cfg = a.net.config();
    let train_cfg = a.train.config(seed);
    let acceptor = match a.acceptor {
        AcceptorKind::Oracle => Acceptor::Oracle { threshold: a.iou },
        AcceptorKind::Review => Acceptor::Review {
            dir: a.review_dir.clone().unwrap_or_else(|| out.join("review")),
            timeout: Duration::from_secs(a.review_timeout),
            poll: Duration::from_millis(500),
        },
    };
    *settings = json!({
        "data": a.data, "seeds": a.seeds, "probe": a.probe, "rounds": a.rounds, "acceptor": format!("{:?}", a.acceptor).to_lowercase(),
        "iou": a.iou, "net": net_json(&net_cfg), "train_config": train_json(&train_cfg),
    });
    net_cfg.validate()?;
    acceptor.validate()?;
    let list = echos(&a.data, None)?;
    if a.seeds + a.probe > list.len() {
        return Err(Failure::config(format!("{} seeds and {} probe echos requested, dataset has {}", a.seeds, a.probe, list.len())));
    }
    let size = net_cfg.input_size;
    let load = |dir: &Path, with_masks: bool| -> Result<(Vec<GrayFrame>, Option<Vec<WallMask>>), Error> {
        let frames = fit_frames(dataset::read_frames(dir)?, size);
        let masks = if with_masks { Some(fit_masks(dataset::read_masks(dir)?, size)) } else { None };
        Ok((frames, masks))
    };
    let oracle = matches!(a.acceptor, AcceptorKind::Oracle);
    let (mut labeled, mut unlabeled, mut probe) = (Vec::new(), Vec::new(), Vec::new());
    let n = list.len();
    for (i, (id, dir)) in list.iter().enumerate() {
        let wrap = |e: Error| Error::Echo { id: id.clone(), source: Box::new(e) };
        if i < a.seeds {
            let (frames, masks) = load(dir, true).map_err(wrap)?;
            labeled.push(LabeledEcho { id: id.clone(), frames, masks: masks.expect("loaded") });
        } else if i >= n - a.probe {
            let (frames, truth) = load(dir, true).map_err(wrap)?;
            probe.push(ProbeEcho { frames, truth: truth.expect("loaded") });
        } else {
            let (frames, truth) = load(dir, oracle).map_err(wrap)?;
            unlabeled.push(UnlabeledEcho { id: id.clone(), frames, truth });
        }
    }
    let pool = LabelPool::new(labeled, unlabeled)?;
    let run = run_pseudo_labeling(&pool, &net_cfg, &train_cfg, &acceptor, a.rounds, &probe)?;
    write(&out.join("round_stats.csv"), &stats_csv(&run.stats))?;
    let mut rejected = String::from("round,echo_id,reason\n");
    for (r, log) in run.pool.rejected_log.iter().enumerate() {
        for (id, reason) in log {
            rejected.push_str(&format!("{},{id},\"{}\"\n", r + 1, reason.replace('"', "\"\"")));
        }
    }
    write(&out.join("rejected.csv"), &rejected)?;
    let mut problematic = run.problematic.join("\n");
    if !problematic.is_empty() {
        problematic.push('\n');
    }
    write(&out.join("problematic.txt"), &problematic)?;
    for e in &run.pool.labeled {
        dataset::write_masks(&out.join("labels").join(&e.id), &e.masks)?;
    }
    if let Some(p) = &run.params {
        p.save(&out.join("segnet.ckpt"))?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Six,
    Five,
}

impl From<ModeArg> for FeatureMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Six => FeatureMode::Six,
            ModeArg::Five => FeatureMode::Five,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct RatioArgs {
    /// Share of the boundary length given to the apical cap.
    #[arg(long, default_value_t = 0.10)]
    apical_fraction: f64,
}

#[derive(Args, Debug)]
pub struct FeaturesArgs {
    /// Root with one directory of mask files per echo.
    #[arg(long)]
    masks: PathBuf,
    /// Root holding each echo's labels.txt (defaults to --masks).
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ModeArg::Six)]
    mode: ModeArg,
    /// Boundary points sampled per segment.
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[command(flatten)]
    ratios: RatioArgs,
}

fn mask_dirs(root: &Path) -> Result<Vec<(String, PathBuf)>, Failure> {
    require_dir(root, "masks")?;
    let mut out = Vec::new();
    let entries = fs::read_dir(root).map_err(|e| io_err(root, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| io_err(root, e))?;
        let path = entry.path();
        if path.is_dir() && path.join(dataset::mask_name(0)).is_file() {
            out.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Failure::missing(format!("no echo directories with mask files under {}", root.display())));
    }
    Ok(out)
}

fn features(a: &FeaturesArgs, out: &Path, settings: &mut Value) -> Outcome {
    let mode: FeatureMode = a.mode.into();
    let ratios = SegmentRatios { apical_fraction: a.ratios.apical_fraction, ..SegmentRatios::default() };
    *settings = json!({ "masks": a.masks, "labels": a.labels, "mode": format!("{:?}", a.mode).to_lowercase(), "samples": a.samples, "apical_fraction": a.ratios.apical_fraction });
    ratios.validate()?;
    if a.samples == 0 {
        return Err(Failure::config("--samples must be at least 1"));
    }
    let label_root = a.labels.clone().unwrap_or_else(|| a.masks.clone());
    let mut items = Vec::new();
    for (id, dir) in mask_dirs(&a.masks)? {
        let labels: EchoLabels = dataset::read_labels(&label_root.join(&id)).map_err(|e| Error::Echo { id: id.clone(), source: Box::new(e) })?;
        let masks = dataset::read_masks(&dir)?;
        items.push(MaskedEcho { id, label: labels.echo, masks });
    }
    let (table, skipped) = feature_table(&items, &ratios, a.samples, mode);
    write(&out.join("features.csv"), &table.to_csv())?;
    write(&out.join("skipped.csv"), &skipped_csv(&skipped))?;
    if table.rows.is_empty() {
        return Err(Failure::numeric("no echo produced features"));
    }
    log::info!("{} echos, {} features each, {} skipped", table.rows.len(), table.names.len(), skipped.len());
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Lda,
    Dt,
    Rf,
    Svm,
}

impl From<KindArg> for ClassifierKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Lda => ClassifierKind::Lda,
            KindArg::Dt => ClassifierKind::Dt,
            KindArg::Rf => ClassifierKind::Rf,
            KindArg::Svm => ClassifierKind::Svm,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct SpecArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Svm)]
    classifier: KindArg,
    #[arg(long, default_value_t = 10)]
    trees: usize,
    #[arg(long, default_value_t = 10.0)]
    cost: f64,
    /// RBF width; defaults to 1 / feature count.
    #[arg(long)]
    gamma: Option<f64>,
    /// Minimum Gini decrease per split; 0 keeps every impure split.
    #[arg(long, default_value_t = 1e-3)]
    min_impurity_decrease: f64,
    /// Min-max scale features per training set.
    #[arg(long)]
    scale: bool,
}

impl SpecArgs {
    fn spec(&self, seed: u64) -> ClassifierSpec {
        ClassifierSpec {
            rf_trees: self.trees,
            svm_cost: self.cost,
            svm_gamma: self.gamma,
            dt_min_impurity_decrease: Some(self.min_impurity_decrease),
            scale: self.scale,
            rng_seed: seed,
            ..ClassifierSpec::new(self.classifier.into())
        }
    }
}

fn spec_json(s: &ClassifierSpec) -> Value {
    json!({
        "kind": s.kind.name(), "rf_trees": s.rf_trees, "svm_cost": s.svm_cost, "svm_gamma": s.svm_gamma,
        "svm_tolerance": s.svm_tolerance, "dt_min_impurity_decrease": s.dt_min_impurity_decrease, "scale": s.scale, "rng_seed": s.rng_seed,
    })
}

fn read_table(path: &Path) -> Result<FeatureTable, Failure> {
    require_file(path, "feature table")?;
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let table = FeatureTable::parse_csv(&text)?;
    if table.rows.is_empty() {
        return Err(Failure::missing(format!("{} has no rows", path.display())));
    }
    Ok(table)
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    #[arg(long)]
    features: PathBuf,
    /// Apply this saved model instead of training one.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    spec: SpecArgs,
}

fn classify(a: &ClassifyArgs, seed: u64, out: &Path, settings: &mut Value) -> Outcome {
    let spec = a.spec.spec(seed);
    *settings = json!({ "features": a.features, "model": a.model, "spec": spec_json(&spec) });
    spec.validate()?;
    let table = read_table(&a.features)?;
    let model = match &a.model {
        Some(p) => {
            require_file(p, "model")?;
            Model::load(p)?
        }
        None => {
            let m = train_classifier(&spec, &table.x(), &table.y())?;
            m.save(&out.join("model.bin"))?;
            m
        }
    };
    let mut csv = String::from("echo_id,label,predicted\n");
    for r in &table.rows {
        let p = model.predict(&r.values)?;
        csv.push_str(&format!("{},{},{}\n", r.echo_id, r.label as u8, p as u8));
    }
    write(&out.join("predictions.csv"), &csv)
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[command(flatten)]
    spec: SpecArgs,
}

fn evaluate(a: &EvaluateArgs, seed: u64, out: &Path, settings: &mut Value) -> Outcome {
    let spec = a.spec.spec(seed);
    *settings = json!({ "features": a.features, "k": a.k, "spec": spec_json(&spec) });
    let table = read_table(&a.features)?;
    let report = cross_validate(&table.x(), &table.y(), &spec, a.k, seed)?;
    write(&out.join("report.csv"), &report.to_csv())?;
    let mut csv = String::from("fold,echo_id,label,predicted\n");
    for (f, fold) in report.folds.iter().enumerate() {
        for (&i, &p) in fold.test_indices.iter().zip(&fold.predictions) {
            let r = &table.rows[i];
            csv.push_str(&format!("{},{},{},{}\n", f + 1, r.echo_id, r.label as u8, p as u8));
        }
    }
    write(&out.join("predictions.csv"), &csv)?;
    if report.folds.iter().any(|f| f.metrics.degenerate) {
        log::warn!("some folds had zero denominators; those metrics are reported as 0");
    }
    log::info!("mean sensitivity {:.2}%, specificity {:.2}%", 100.0 * report.mean[0], 100.0 * report.mean[1]);
    Ok(())
}

#[derive(Args, Debug)]
pub struct VisualizeArgs {
    /// Dataset root with frames.
    #[arg(long)]
    data: PathBuf,
    /// Root with mask directories (defaults to --data).
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Only this echo.
    #[arg(long)]
    echo: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[command(flatten)]
    ratios: RatioArgs,
}

fn visualize(a: &VisualizeArgs, out: &Path, settings: &mut Value) -> Outcome {
    let ratios = SegmentRatios { apical_fraction: a.ratios.apical_fraction, ..SegmentRatios::default() };
    *settings = json!({ "data": a.data, "masks": a.masks, "echo": a.echo, "samples": a.samples, "apical_fraction": a.ratios.apical_fraction });
    ratios.validate()?;
    let mut list = echos(&a.data, None)?;
    if let Some(id) = &a.echo {
        list.retain(|(i, _)| i == id);
        if list.is_empty() {
            return Err(Failure::missing(format!("echo {id} not found under {}", a.data.display())));
        }
    }
    let mask_root = a.masks.clone().unwrap_or_else(|| a.data.clone());
    require_dir(&mask_root, "masks")?;
    for (id, dir) in &list {
        let wrap = |e: Error| Error::Echo { id: id.clone(), source: Box::new(e) };
        let mask_dir = mask_root.join(id);
        if !mask_dir.join(dataset::mask_name(0)).is_file() {
            return Err(Failure::missing(format!("echo {id}: no mask files in {}", mask_dir.display())));
        }
        let frames = dataset::read_frames(dir).map_err(wrap)?;
        let masks = dataset::read_masks(&mask_dir).map_err(wrap)?;
        if frames.len() != masks.len() || (frames[0].width(), frames[0].height()) != (masks[0].width(), masks[0].height()) {
            return Err(Failure::missing(format!("echo {id}: frames and masks do not line up")));
        }
        let geometry = analyze_echo(&masks, &ratios).map_err(wrap)?;
        let curves = EchoCurves::from_geometry(&geometry, a.samples).map_err(wrap)?;
        let dst = out.join(id);
        fs::create_dir_all(&dst).map_err(|e| io_err(&dst, e))?;
        for (t, (f, g)) in frames.iter().zip(&geometry).enumerate() {
            let path = dst.join(format!("overlay_{t:04}.png"));
            segment_overlay(f, &g.map).save(&path).map_err(|e| Error::Image { path: path.clone(), source: e })?;
        }
        let snap = dst.join("max_displacement.png");
        max_displacement_snapshot(&frames[0], &geometry, &curves.boundary).save(&snap).map_err(|e| Error::Image { path: snap.clone(), source: e })?;
        write(&dst.join("boundary_displacement.csv"), &displacement_csv(&curves.boundary))?;
        write(&dst.join("center_displacement.csv"), &displacement_csv(&curves.center))?;
        write(&dst.join("area.csv"), &area_csv(&curves.area))?;
        write(&dst.join("boundary_displacement.svg"), &line_plot(&format!("{id}: boundary displacement"), "pixels", &displacement_series(&curves.boundary)))?;
        write(&dst.join("center_displacement.svg"), &line_plot(&format!("{id}: centre displacement"), "pixels", &displacement_series(&curves.center)))?;
        write(&dst.join("area.svg"), &line_plot(&format!("{id}: segment area"), "pixels", &area_series(&curves.area)))?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct CountOpsArgs {
    /// Network config file (key=value lines, as in checkpoints).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 224)]
    input_size: usize,
    /// Comma-separated encoder filters; empty for no layers.
    #[arg(long, default_value = "32,64,128,256,512,1024")]
    encoder: String,
    /// Comma-separated decoder filters (default: encoder reversed without its last entry).
    #[arg(long)]
    decoder: Option<String>,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    #[arg(long, default_value_t = 1)]
    scale_factor: usize,
    #[arg(long, default_value_t = 1)]
    input_channels: usize,
    #[arg(long)]
    no_skip: bool,
}

fn parse_list(s: &str, flag: &str) -> Result<Vec<usize>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| Failure::config(format!("--{flag}: `{p}` is not a filter count"))))
        .collect()
}

fn count_ops_cmd(a: &CountOpsArgs, out: &Path, settings: &mut Value) -> Outcome {
    let cfg = match &a.config {
        Some(p) => {
            require_file(p, "net config")?;
            let text = fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            NetConfig::parse(&text).map_err(|e| match e {
                Error::Format { .. } => Failure::config(e.to_string()),
                other => other.into(),
            })?
        }
        None => {
            let encoder = parse_list(&a.encoder, "encoder")?;
            let decoder = match &a.decoder {
                Some(d) => parse_list(d, "decoder")?,
                None => encoder.iter().rev().skip(1).copied().collect(),
            };
            NetConfig {
                input_size: a.input_size,
                input_channels: a.input_channels,
                encoder_filters: encoder,
                decoder_filters: decoder,
                kernel_size: a.kernel,
                skip_connections: !a.no_skip,
                scale_factor: a.scale_factor,
            }
        }
    };
    *settings = json!({ "net": net_json(&cfg), "paper_encoder": PAPER_ENCODER });
    // An empty network is a valid thing to count.
    if !cfg.encoder_filters.is_empty() {
        cfg.validate()?;
    }
    let ops = count_ops(&cfg);
    let mut csv = String::from("layer,n_in,n_out,map_size,kernel,mul,add\n");
    for (i, l) in ops.layers.iter().enumerate() {
        csv.push_str(&format!("{},{},{},{},{},{},{}\n", i + 1, l.n_in, l.n_out, l.map_size, l.kernel, l.mul, l.add));
    }
    csv.push_str(&format!("total,,,,,{},{}\n", ops.mul, ops.add));
    print!("{csv}");
    write(&out.join("ops.csv"), &csv)
}
