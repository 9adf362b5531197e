//! Pipeline stages. Each stage reads upstream artifacts from explicit paths,
//! writes its own directory, and stamps every artifact with the config hash.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use super::config::{BinaryMode, ExplainMethod, RunConfig, Strategy, Task};
use super::projection::pca_2d;
use crate::balance::{balance_with_gan, make_balance_plan, random_oversample, smote, train_scgan, BalancePlan, GanModel};
use crate::classifier::{
    predict, threshold_binary, train_cscacnn, write_predictions_jsonl, ClassifierModel, CostScheme, TrainConfig,
};
use crate::container;
use crate::dataset::{
    fit_encoding, load_nslkdd_with, stratified_subsample, transform, AttackMap, ClassStats, FeatureMatrix, SplitTag,
    TrafficClass,
};
use crate::error::{Error, Result};
use crate::explain::{
    default_background, force_plot_data, kernel_shap, lime_explain, render_svg, ClassProbability, FeatureSpace, LimeConfig,
    ShapConfig, Stacking,
};
use crate::metrics::{count_flops, count_params, EvalReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Preprocess,
    GanTrain,
    Generate,
    ClfTrain,
    Evaluate,
    Explain,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Preprocess, Stage::GanTrain, Stage::Generate, Stage::ClfTrain, Stage::Evaluate, Stage::Explain, Stage::Report];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Preprocess => "preprocess",
            Stage::GanTrain => "gan-train",
            Stage::Generate => "generate",
            Stage::ClfTrain => "clf-train",
            Stage::Evaluate => "evaluate",
            Stage::Explain => "explain",
            Stage::Report => "report",
        }
    }

    /// Parses a comma-separated list (or `all`) into pipeline order.
    pub fn parse_list(text: &str) -> Result<Vec<Stage>> {
        let mut out = Vec::new();
        let mut bad = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if part == "all" {
                out.extend(Stage::ALL);
            } else {
                match Stage::ALL.iter().find(|s| s.name() == part) {
                    Some(s) => out.push(*s),
                    None => bad.push(format!("unknown stage `{part}` (expected one of: all, {})", Stage::names())),
                }
            }
        }
        if out.is_empty() && bad.is_empty() {
            bad.push("no stages given".into());
        }
        if !bad.is_empty() {
            return Err(Error::Validation(bad));
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    fn names() -> String {
        Stage::ALL.iter().map(|s| s.name()).collect::<Vec<_>>().join(", ")
    }
}

/// Artifact paths under a run directory.
#[derive(Clone, Debug)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn dir(&self, stage: Stage) -> PathBuf {
        self.root.join(stage.name())
    }

    pub fn train_matrix(&self) -> PathBuf {
        self.dir(Stage::Preprocess).join("train.nmx")
    }

    pub fn test_matrix(&self) -> PathBuf {
        self.dir(Stage::Preprocess).join("test.nmx")
    }

    pub fn stats(&self) -> PathBuf {
        self.dir(Stage::Preprocess).join("stats.json")
    }

    pub fn gan(&self) -> PathBuf {
        self.dir(Stage::GanTrain).join("gan.ckpt")
    }

    pub fn balanced(&self) -> PathBuf {
        self.dir(Stage::Generate).join("balanced.nmx")
    }

    pub fn classifier(&self) -> PathBuf {
        self.dir(Stage::ClfTrain).join("classifier.ckpt")
    }

    pub fn eval_report(&self) -> PathBuf {
        self.dir(Stage::Evaluate).join("eval_report.json")
    }
}

/// Resolved config plus its hash, shared by every stage of a run.
pub struct Ctx {
    pub cfg: RunConfig,
    pub hash: String,
    /// Progress lines go here; the CLI prints them, tests keep them quiet.
    pub verbose: bool,
}

impl Ctx {
    pub fn new(cfg: RunConfig) -> Self {
        let hash = cfg.hash();
        Ctx { cfg, hash, verbose: false }
    }

    fn say(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", msg.as_ref());
        }
    }

    fn stamp(&self, stage: Stage, extra: Value) -> Value {
        let mut v = json!({ "config_hash": self.hash, "stage": stage.name(), "seed": self.cfg.stage_seed(stage.name()) });
        if let (Value::Object(m), Value::Object(e)) = (&mut v, extra) {
            m.extend(e);
        }
        v
    }

    /// Writes the resolved config next to a stage's artifacts.
    fn snapshot(&self, dir: &Path) -> Result<()> {
        let text = format!("# config_hash = \"{}\"\n{}", self.hash, self.cfg.to_toml()?);
        container::write_file(&dir.join("config.toml"), text.as_bytes())
    }
}

fn require(path: &Path, stage: Stage) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingArtifact { stage: stage.name().into(), path: path.to_path_buf() })
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    container::write_file(path, text.as_bytes())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    container::write_file(path, text.as_bytes())
}

fn read_json(path: &Path) -> Result<Value> {
    let bytes = container::read_file(path)?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn load_matrix(path: &Path, upstream: Stage) -> Result<FeatureMatrix> {
    require(path, upstream)?;
    Ok(FeatureMatrix::load(path)?.0)
}

fn stats_json(s: &ClassStats) -> Value {
    let rows: Vec<Value> = s
        .class_names
        .iter()
        .zip(&s.counts)
        .zip(s.ci_ratios())
        .map(|((n, c), r)| json!({ "class": n, "count": c, "ci_ratio": r }))
        .collect();
    json!({ "total": s.total(), "classes": rows })
}

pub struct PreprocessOutput {
    pub train: FeatureMatrix,
    pub test: FeatureMatrix,
    pub summary: Value,
}

pub fn preprocess(ctx: &Ctx, train_path: &Path, test_path: &Path, out: &Path) -> Result<PreprocessOutput> {
    let map = match &ctx.cfg.data.attack_map {
        Some(p) => AttackMap::load(p)?,
        None => AttackMap::default(),
    };
    let train_rs = load_nslkdd_with(train_path, SplitTag::Train, &map)?;
    let test_rs = load_nslkdd_with(test_path, SplitTag::Test, &map)?;
    let enc = fit_encoding(&train_rs)?;
    let (train_full, unseen_train) = transform(&train_rs, &enc)?;
    let (test, unseen) = transform(&test_rs, &enc)?;
    debug_assert_eq!(unseen_train.total(), 0);

    let train_stats = train_full.class_stats();
    let test_stats = test.class_stats();
    let train = match ctx.cfg.data.train_subsample {
        Some(n) if n < train_full.rows() => {
            let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.stage_seed(Stage::Preprocess.name()));
            train_full.select(&stratified_subsample(&train_full.labels, train_full.num_classes(), n, &mut rng))
        }
        _ => train_full,
    };
    let summary = ctx.stamp(
        Stage::Preprocess,
        json!({
            "train_file": train_path.file_name().map(|f| f.to_string_lossy().to_string()),
            "test_file": test_path.file_name().map(|f| f.to_string_lossy().to_string()),
            "encoded_dim": enc.dim(),
            "train": stats_json(&train_stats),
            "test": stats_json(&test_stats),
            "combined": stats_json(&train_stats.merged(&test_stats)),
            "train_balance_plan": make_balance_plan(&train_stats),
            "train_used": stats_json(&train.class_stats()),
            "unseen_test_categories": unseen,
            "warnings": enc.warnings,
        }),
    );
    let meta = ctx.stamp(Stage::Preprocess, json!({}));
    train.save(&out.join("train.nmx"), Some(&meta))?;
    test.save(&out.join("test.nmx"), Some(&meta))?;
    write_json(&out.join("encoding.json"), &json!({ "config_hash": ctx.hash, "encoding": enc }))?;
    write_json(&out.join("stats.json"), &summary)?;
    ctx.snapshot(out)?;
    ctx.say(format!(
        "preprocess: {} train rows ({} used), {} test rows, {} features",
        train_stats.total(),
        train.rows(),
        test.rows(),
        enc.dim()
    ));
    Ok(PreprocessOutput { train, test, summary })
}

pub fn gan_train(ctx: &Ctx, data: &Path, out: &Path) -> Result<GanModel> {
    let train = load_matrix(data, Stage::Preprocess)?;
    let seed = ctx.cfg.stage_seed(Stage::GanTrain.name());
    let cfg = crate::balance::GanTrainConfig { seed, ..ctx.cfg.gan_train.clone() };
    ctx.say(format!("gan-train: {} rows, {} epochs", train.rows(), cfg.epochs));
    let trained = match train_scgan(&train, ctx.cfg.gan.clone(), &cfg) {
        Ok(t) => t,
        Err(Error::Training { epoch, message, checkpoint: Some(ck) }) => {
            ck.save(&out.join("gan.diverged.ckpt"))?;
            return Err(Error::Training { epoch, message, checkpoint: Some(ck) });
        }
        Err(e) => return Err(e),
    };
    let extra = ctx.stamp(Stage::GanTrain, json!({ "epochs": cfg.epochs }));
    trained.model.save(&out.join("gan.ckpt"), extra)?;
    write_json(&out.join("gan_log.json"), &json!({ "config_hash": ctx.hash, "epochs": trained.log }))?;
    ctx.snapshot(out)?;
    if let Some(last) = trained.log.last() {
        ctx.say(format!("gan-train: final L_D {:.4}, L_G {:.4}", last.loss_d, last.loss_g));
    }
    Ok(trained.model)
}

/// Where the per-class generation counts come from.
pub enum PlanSource {
    /// Equalize the counts of the data being balanced.
    Auto,
    File(PathBuf),
}

pub fn generate(ctx: &Ctx, data: &Path, model: Option<&Path>, plan: &PlanSource, out: &Path) -> Result<FeatureMatrix> {
    let train = load_matrix(data, Stage::Preprocess)?;
    let plan = match plan {
        PlanSource::Auto => make_balance_plan(&train.class_stats()),
        PlanSource::File(p) => {
            let v = read_json(p)?;
            let plan: BalancePlan = serde_json::from_value(v.get("plan").cloned().unwrap_or(v))?;
            plan
        }
    };
    let seed = ctx.cfg.stage_seed(Stage::Generate.name());
    let strategy = ctx.cfg.balance.strategy;
    let mut warnings = Vec::new();
    let balanced = match strategy {
        Strategy::ScCgan => {
            let path = model.map(Path::to_path_buf).ok_or_else(|| Error::Config("sc-cgan balancing needs a GAN model".into()))?;
            require(&path, Stage::GanTrain)?;
            balance_with_gan(&train, &GanModel::load(&path)?, &plan, seed)?
        }
        Strategy::Ros => random_oversample(&train, &plan, seed)?,
        Strategy::Smote => {
            let s = smote(&train, &plan, ctx.cfg.balance.smote_k, seed)?;
            warnings = s.warnings;
            s.data
        }
        Strategy::None => train.clone(),
    };
    let applied = if strategy == Strategy::None { BalancePlan::zeros(&train.class_names) } else { plan };
    let meta = ctx.stamp(Stage::Generate, json!({ "original_rows": train.rows(), "strategy": strategy }));
    balanced.save(&out.join("balanced.nmx"), Some(&meta))?;
    write_json(
        &out.join("plan.json"),
        &ctx.stamp(
            Stage::Generate,
            json!({ "strategy": strategy, "plan": applied, "result": stats_json(&balanced.class_stats()), "warnings": warnings }),
        ),
    )?;
    ctx.snapshot(out)?;
    ctx.say(format!("generate: {} -> {} rows ({strategy:?})", train.rows(), balanced.rows()));
    Ok(balanced)
}

/// Cost weights from the CLI: a scheme name or a JSON file holding a list.
pub fn parse_costs(arg: &str) -> Result<CostScheme> {
    match arg {
        "inverse-frequency" => Ok(CostScheme::InverseFrequency),
        "uniform" => Ok(CostScheme::Uniform),
        path => {
            let v = read_json(Path::new(path))?;
            let w: Vec<f64> = serde_json::from_value(v.get("weights").cloned().unwrap_or(v))?;
            Ok(CostScheme::Custom(w))
        }
    }
}

pub fn clf_train(ctx: &Ctx, data: &Path, augmented: Option<&Path>, out: &Path) -> Result<ClassifierModel> {
    let mut train = match augmented {
        Some(p) => load_matrix(p, Stage::Generate)?,
        None => load_matrix(data, Stage::Preprocess)?,
    };
    let (task, mode) = (ctx.cfg.task, ctx.cfg.binary_mode);
    if task == Task::Binary && mode == BinaryMode::Retrain {
        train = train.to_binary();
    }
    let seed = ctx.cfg.stage_seed(Stage::ClfTrain.name());
    let tcfg = TrainConfig { seed, ..ctx.cfg.classifier_train.clone() };
    ctx.say(format!("clf-train: {} rows, {} classes, up to {} epochs", train.rows(), train.num_classes(), tcfg.max_epochs));
    let trained = match train_cscacnn(&train, ctx.cfg.classifier.clone(), &tcfg) {
        Ok(t) => t,
        Err(Error::Training { epoch, message, checkpoint: Some(ck) }) => {
            ck.save(&out.join("classifier.diverged.ckpt"))?;
            return Err(Error::Training { epoch, message, checkpoint: Some(ck) });
        }
        Err(e) => return Err(e),
    };
    let extra = ctx.stamp(
        Stage::ClfTrain,
        json!({ "task": task, "binary_mode": mode, "best_epoch": trained.best_epoch, "train_rows": train.rows() }),
    );
    trained.model.save(&out.join("classifier.ckpt"), extra)?;
    write_json(
        &out.join("train_log.json"),
        &json!({ "config_hash": ctx.hash, "best_epoch": trained.best_epoch, "epochs": trained.log }),
    )?;
    write_json(
        &out.join("complexity.json"),
        &json!({ "config_hash": ctx.hash, "params": count_params(&trained.model), "flops_per_sample": count_flops(&trained.model, 1) }),
    )?;
    ctx.snapshot(out)?;
    ctx.say(format!("clf-train: kept epoch {}", trained.best_epoch));
    Ok(trained.model)
}

fn checkpoint_task(path: &Path) -> Result<(Task, BinaryMode)> {
    let ck = crate::checkpoint::Checkpoint::load(path)?;
    let extra = ck.meta.get("extra").cloned().unwrap_or(Value::Null);
    let task = extra.get("task").cloned().map(serde_json::from_value).transpose()?.unwrap_or(Task::Five);
    let mode = extra.get("binary_mode").cloned().map(serde_json::from_value).transpose()?.unwrap_or(BinaryMode::Retrain);
    Ok((task, mode))
}

/// Writes the JSON report to `report_path`; the table and per-row predictions go beside it.
pub fn evaluate(ctx: &Ctx, model_path: &Path, test_path: &Path, report_path: &Path) -> Result<EvalReport> {
    let out = report_path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    require(model_path, Stage::ClfTrain)?;
    let model = ClassifierModel::load(model_path)?;
    let test = load_matrix(test_path, Stage::Preprocess)?;
    let (task, mode) = checkpoint_task(model_path)?;
    let mut pred = predict(&model, &test.values)?;
    let (labels, names) = if task == Task::Binary {
        if mode == BinaryMode::Threshold {
            pred = threshold_binary(&pred, TrafficClass::Normal.index(), 0.5)?;
        }
        let b = test.to_binary();
        (b.labels, b.class_names)
    } else {
        (test.labels.clone(), test.class_names.clone())
    };
    let report = EvalReport::compute(&labels, &pred.labels, &names)?;
    let title = if task == Task::Binary { "binary" } else { "5-class" };
    let table = report.format_table(title);
    write_json(report_path, &ctx.stamp(Stage::Evaluate, json!({ "task": task, "report": report })))?;
    write_text(&out.join("eval_table.txt"), &table)?;
    let mut lines = Vec::new();
    write_predictions_jsonl(&pred, &mut lines)?;
    container::write_file(&out.join("predictions.jsonl"), &lines)?;
    ctx.snapshot(out)?;
    ctx.say(table);
    Ok(report)
}

pub fn explain(ctx: &Ctx, model_path: &Path, data: &Path, background_from: &Path, out: &Path) -> Result<Value> {
    require(model_path, Stage::ClfTrain)?;
    let model = ClassifierModel::load(model_path)?;
    let test = load_matrix(data, Stage::Preprocess)?;
    let train = load_matrix(background_from, Stage::Preprocess)?;
    let e = &ctx.cfg.explain;
    if e.sample >= test.rows() {
        return Err(Error::Config(format!("explain.sample {} outside the {} test rows", e.sample, test.rows())));
    }
    let seed = ctx.cfg.stage_seed(Stage::Explain.name());
    let background = default_background(&train, e.background, seed);
    let x = test.row(e.sample).to_vec();
    let pred = predict(&model, &crate::autodiff::Tensor::new(vec![1, x.len()], x.clone())?)?;
    let class = pred.labels[0];
    let target = format!("P({})", model.class_names[class]);
    let f = ClassProbability { model: &model, class };
    let space = FeatureSpace::from_matrix(&test);
    let report = match e.method {
        ExplainMethod::Lime => {
            let cfg = LimeConfig { seed, ..e.lime.clone() };
            lime_explain(&f, &x, &space, &background, &cfg, e.sample, &target)?
        }
        ExplainMethod::Shap => {
            let cfg = ShapConfig { seed, ..e.shap.clone() };
            kernel_shap(&f, &x, &space, &background, &cfg, e.sample, &target)?
        }
    };
    let doc = ctx.stamp(
        Stage::Explain,
        json!({ "true_class": test.class_names[test.labels[e.sample]], "predicted_class": model.class_names[class], "report": report }),
    );
    write_json(&out.join("explanation.json"), &doc)?;
    if e.method == ExplainMethod::Shap {
        let plot = force_plot_data(std::slice::from_ref(&report), Stacking::Single)?;
        write_json(&out.join("force_plot.json"), &json!({ "config_hash": ctx.hash, "plot": plot }))?;
        write_text(&out.join("force_plot.svg"), &render_svg(&plot))?;
    }
    ctx.snapshot(out)?;
    ctx.say(format!("explain: sample {} ({}), {:?}", e.sample, target, e.method));
    Ok(doc)
}

pub fn report(ctx: &Ctx, layout: &Layout, out: &Path) -> Result<String> {
    require(&layout.stats(), Stage::Preprocess)?;
    require(&layout.eval_report(), Stage::Evaluate)?;
    let stats = read_json(&layout.stats())?;
    let eval = read_json(&layout.eval_report())?;
    let mut text = String::new();
    let _ = writeln!(text, "config_hash {}", ctx.hash);
    let _ = writeln!(text, "\n{:<8} {:>10} {:>10} {:>10}", "Class", "Train", "Test", "CI ratio");
    let rows = |k: &str| stats[k]["classes"].as_array().cloned().unwrap_or_default();
    for ((tr, te), co) in rows("train").iter().zip(rows("test")).zip(rows("combined")) {
        let ratio = co["ci_ratio"].as_f64().map_or("-".into(), |r| format!("{r:.2}"));
        let _ = writeln!(text, "{:<8} {:>10} {:>10} {:>10}", tr["class"].as_str().unwrap_or(""), tr["count"], te["count"], ratio);
    }
    let report: EvalReport = serde_json::from_value(eval["report"].clone())?;
    let _ = writeln!(text, "\n{}", report.format_table(if report.class_names.len() == 2 { "binary" } else { "5-class" }));

    let mut complexity = serde_json::Map::new();
    if layout.classifier().is_file() {
        let m = ClassifierModel::load(&layout.classifier())?;
        let (p, f) = (count_params(&m), count_flops(&m, 1));
        let _ = writeln!(text, "CSCA-CNN  params {}  FLOPs/sample {}", p.params, f.flops);
        complexity.insert("classifier".into(), json!({ "params": p.params, "flops_per_sample": f.flops }));
    }
    if layout.gan().is_file() {
        let g = GanModel::load(&layout.gan())?;
        let (p, f) = (count_params(&g), count_flops(&g, 1));
        let _ = writeln!(text, "SC-CGAN   params {}  FLOPs/sample {}", p.params, f.flops);
        complexity.insert("gan".into(), json!({ "params": p.params, "flops_per_sample": f.flops }));
    }

    // 2-D PCA view of the (possibly rebalanced) training data
    let source = if layout.balanced().is_file() { layout.balanced() } else { layout.train_matrix() };
    let (m, meta) = FeatureMatrix::load(&source)?;
    let original = meta.as_ref().and_then(|v| v["original_rows"].as_u64()).map_or(m.rows(), |n| n as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.stage_seed(Stage::Report.name()));
    let idx = stratified_subsample(&m.labels, m.num_classes(), ctx.cfg.report.projection_rows, &mut rng);
    let proj = pca_2d(&m.values.select_rows(&idx))?;
    let points: Vec<Value> = idx
        .iter()
        .zip(&proj.points)
        .map(|(&i, p)| json!({ "row": i, "x": p[0], "y": p[1], "label": m.class_names[m.labels[i]], "synthetic": i >= original }))
        .collect();
    write_json(
        &out.join("projection.json"),
        &ctx.stamp(Stage::Report, json!({ "method": "pca", "explained_variance": proj.explained_variance, "points": points })),
    )?;
    write_json(
        &out.join("summary.json"),
        &ctx.stamp(Stage::Report, json!({ "data": stats, "evaluation": eval["report"], "complexity": complexity })),
    )?;
    write_text(&out.join("report.txt"), &text)?;
    ctx.snapshot(out)?;
    ctx.say(&text);
    Ok(text)
}

/// Runs the requested stages in pipeline order under `ctx.cfg.out_dir`.
pub fn run_pipeline(ctx: &Ctx, stages: &[Stage]) -> Result<()> {
    let cfg = &ctx.cfg;
    let layout = Layout::new(&cfg.out_dir);
    let path_of = |p: &Option<PathBuf>, key: &str| -> Result<PathBuf> {
        p.clone().ok_or_else(|| Error::Validation(vec![format!("`data.{key}` must be set to run preprocess")]))
    };
    if stages.contains(&Stage::Preprocess) {
        path_of(&cfg.data.train, "train")?;
        path_of(&cfg.data.test, "test")?;
    }
    let gan_needed = cfg.balance.strategy == Strategy::ScCgan;
    for &stage in stages {
        let dir = layout.dir(stage);
        match stage {
            Stage::Preprocess => {
                preprocess(ctx, &path_of(&cfg.data.train, "train")?, &path_of(&cfg.data.test, "test")?, &dir)?;
            }
            Stage::GanTrain if !gan_needed => ctx.say(format!("gan-train: skipped ({:?} balancing)", cfg.balance.strategy)),
            Stage::GanTrain => {
                gan_train(ctx, &layout.train_matrix(), &dir)?;
            }
            Stage::Generate => {
                let gan = layout.gan();
                generate(ctx, &layout.train_matrix(), gan_needed.then_some(gan.as_path()), &PlanSource::Auto, &dir)?;
            }
            Stage::ClfTrain => {
                require(&layout.balanced(), Stage::Generate)?;
                clf_train(ctx, &layout.train_matrix(), Some(&layout.balanced()), &dir)?;
            }
            Stage::Evaluate => {
                evaluate(ctx, &layout.classifier(), &layout.test_matrix(), &dir.join("eval_report.json"))?;
            }
            Stage::Explain => {
                explain(ctx, &layout.classifier(), &layout.test_matrix(), &layout.train_matrix(), &dir)?;
            }
            Stage::Report => {
                report(ctx, &layout, &dir)?;
            }
        }
    }
    Ok(())
}
