use std::borrow::Cow;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde_json::json;

use pothole::baselines::{self, BaselineConfig, BaselineModel};
use pothole::dataset::{self, Manifest, CLASS_NAMES};
use pothole::features::{self, FeatureMatrix, SplitFilter};
use pothole::head::{self, TrainingConfig};
use pothole::metrics::{self, EvalReport};
use pothole::preprocess;
use pothole::rng;
use pothole::synth::{self, SynthConfig};
use pothole::viz;

use crate::args::*;
use crate::config::{pick, RunConfig};

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn load_manifest(path: &Path) -> Result<Manifest> {
    Manifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn load_store(path: &Path, what: &str) -> Result<FeatureMatrix> {
    ensure!(path.is_file(), "{what} feature store {} not found (run `extract` first)", path.display());
    features::load_features(path).with_context(|| format!("loading {what} feature store {}", path.display()))
}

fn positive_class(flag: Option<u8>, cfg: &RunConfig) -> Result<u8> {
    let p = flag.unwrap_or(cfg.positive_class);
    ensure!(dataset::is_valid_label(p), "positive class must be 0 or 1, got {p}");
    Ok(p)
}

pub fn synth(args: &SynthArgs, cfg: &RunConfig) -> Result<()> {
    let config = SynthConfig {
        pothole_count: args.potholes,
        normal_count: args.normals,
        min_size: args.min_size,
        max_size: args.max_size,
        seed: args.seed.unwrap_or(cfg.training.seed),
    };
    let manifest = synth::synthesize(&args.out, &config).context("generating images")?;
    let path = args.manifest.clone().unwrap_or_else(|| args.out.join("manifest.jsonl"));
    manifest.save(&path).with_context(|| format!("writing manifest {}", path.display()))?;
    println!("wrote {} images and {}", manifest.len(), path.display());
    Ok(())
}

pub fn dataset(cmd: &DatasetCommand, cfg: &RunConfig) -> Result<()> {
    match cmd {
        DatasetCommand::Ingest(a) => {
            let path = pick(&a.manifest, &cfg.manifest, "manifest")?;
            let ingested = dataset::ingest(&a.dir, a.label.label())
                .with_context(|| format!("ingesting {}", a.dir.display()))?;
            for skipped in &ingested.skipped {
                log::warn!("skipped {}: {}", skipped.path.display(), skipped.reason);
            }
            let mut manifest = if a.append && path.is_file() {
                load_manifest(&path)?
            } else {
                Manifest::default()
            };
            let added = ingested.samples.len();
            manifest.samples.extend(ingested.samples);
            manifest.save(&path).with_context(|| format!("writing manifest {}", path.display()))?;
            println!("added {added} images ({} skipped) to {}", ingested.skipped.len(), path.display());
        }
        DatasetCommand::Split(a) => {
            let path = pick(&a.manifest, &cfg.manifest, "manifest")?;
            let manifest = load_manifest(&path)?;
            let split = dataset::split(&manifest, a.train_frac, a.seed.unwrap_or(cfg.training.seed))
                .context("splitting manifest")?;
            let out = a.out.clone().unwrap_or(path);
            split.save(&out).with_context(|| format!("writing manifest {}", out.display()))?;
            let train = split.samples_in(dataset::Split::Train).count();
            println!("train {train}, test {} -> {}", split.len() - train, out.display());
        }
        DatasetCommand::Verify(a) => {
            let path = pick(&a.manifest, &cfg.manifest, "manifest")?;
            let report = dataset::verify(&load_manifest(&path)?);
            let text = to_json(&report)?;
            match &a.report {
                Some(p) => write_text(p, &text)?,
                None => print!("{text}"),
            }
            if !report.is_clean() {
                bail!("{} issue(s) found in {}", report.issues.len(), path.display());
            }
        }
    }
    Ok(())
}

pub fn augment(cmd: &AugmentCommand, cfg: &RunConfig) -> Result<()> {
    let AugmentCommand::Preview(a) = cmd;
    let mut run = cfg.clone();
    run.apply_augment(&a.augment);
    run.augment.validate()?;
    let image = preprocess::load_standardized(&a.image).with_context(|| format!("loading {}", a.image.display()))?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut draws = Vec::new();
    for i in 0..a.count {
        let mut r = rng::substream(run.augment.seed, 0, i);
        let d = preprocess::draw(&run.augment, &mut r);
        let path = a.out.join(format!("augment_{i:03}.png"));
        preprocess::apply(&image, d)
            .to_rgb8()
            .save(&path)
            .with_context(|| format!("writing {}", path.display()))?;
        draws.push(json!({"file": path.file_name().map(|f| f.to_string_lossy().into_owned()), "angle_deg": d.angle_deg, "flipped": d.flipped}));
    }
    write_text(&a.out.join("draws.json"), &to_json(&draws)?)?;
    println!("wrote {} previews to {}", a.count, a.out.display());
    Ok(())
}

pub fn extract(a: &ExtractArgs, cfg: &RunConfig) -> Result<()> {
    let mut run = cfg.clone();
    run.apply_extractor(&a.extractor);
    let manifest = load_manifest(&pick(&a.manifest, &run.manifest, "manifest")?)?;
    let filter: SplitFilter = a.split.parse().context("parsing --split")?;
    let extractors = run.extractors()?;
    let fm = features::extract_dataset(&manifest, &extractors, filter).context("extracting features")?;
    ensure!(!fm.is_empty(), "no manifest samples match split `{}`", a.split);
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    features::save_features(&fm, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("extracted {} x {} features -> {}", fm.rows(), fm.cols(), a.out.display());
    Ok(())
}

pub fn train(a: &TrainArgs, cfg: &RunConfig) -> Result<()> {
    let mut run = cfg.clone();
    a.training.apply(&mut run.training);
    run.apply_extractor(&a.extractor);
    run.apply_augment(&a.augment_flags);
    let config: TrainingConfig = run.training;
    let model_path = pick(&a.model, &run.model, "model")?;
    let test_path = a.test_features.clone().or_else(|| run.test_features.clone());
    let test_fm = test_path.as_deref().map(|p| load_store(p, "test")).transpose()?;

    let (params, history, slice_map) = if a.augment {
        let manifest = load_manifest(&pick(&a.manifest, &run.manifest, "manifest")?)?;
        let extractors = run.extractors()?;
        let filter = SplitFilter::Only(dataset::Split::Train);
        let policy = run.augment;
        let in_dim = extractors.output_dim();
        let (params, history) = head::train_with(
            in_dim,
            |epoch| {
                log::info!("extracting augmented features for epoch {}", epoch + 1);
                features::extract_augmented(&manifest, &extractors, filter, &policy, epoch as u32).map(Cow::Owned)
            },
            test_fm.as_ref(),
            &config,
        )
        .context("training head on augmented features")?;
        (params, history, extractors.slice_map())
    } else {
        let train_path = pick(&a.features, &run.features, "features")?;
        let train_fm = load_store(&train_path, "training")?;
        let (params, history) = head::train_with(train_fm.cols(), |_| Ok(Cow::Borrowed(&train_fm)), test_fm.as_ref(), &config)
            .context("training head")?;
        (params, history, train_fm.slice_map().to_vec())
    };

    if let Some(parent) = model_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    head::save_head(&params, &config, &slice_map, &model_path)
        .with_context(|| format!("writing model {}", model_path.display()))?;
    if let Some(h) = &a.history {
        write_text(h, &to_json(&history)?)?;
    }
    if let Some(last) = history.epochs.last() {
        println!(
            "trained {} epochs: train loss {:.4} acc {:.4}{}",
            history.epochs.len(),
            last.train_loss,
            last.train_accuracy,
            last.test_accuracy.map(|t| format!(", test acc {t:.4}")).unwrap_or_default()
        );
    }
    println!("model -> {}", model_path.display());
    Ok(())
}

fn emit(report: &EvalReport, flags: &ReportFlags, cfg: &RunConfig, default_name: &str) -> Result<()> {
    let name = flags.name.clone().unwrap_or_else(|| default_name.to_owned());
    let report_path: Option<PathBuf> = flags
        .report
        .clone()
        .or_else(|| cfg.report_dir.as_ref().map(|d| d.join(format!("{name}.json"))));
    let text = report.to_json()?;
    match report_path {
        Some(p) => {
            write_text(&p, &text)?;
            println!("accuracy {:.4}, f1 {:.4}, auc {:.4} -> {}", report.accuracy, report.f1, report.roc_auc, p.display());
        }
        None => print!("{text}"),
    }
    if let Some(csv) = &flags.csv {
        metrics::append_comparison_row(csv, &name, report).with_context(|| format!("appending to {}", csv.display()))?;
    }
    Ok(())
}

pub fn eval(a: &EvalArgs, cfg: &RunConfig) -> Result<()> {
    let model_path = pick(&a.model, &cfg.model, "model")?;
    let fm = load_store(&pick(&a.features, &cfg.test_features.clone().or(cfg.features.clone()), "features")?, "evaluation")?;
    let (params, meta) = head::load_head(&model_path).with_context(|| format!("loading model {}", model_path.display()))?;
    let positive = positive_class(a.report.positive_class, cfg)?;
    let mut report = head::evaluate(&params, &fm, positive).context("evaluating")?;
    report.config = Some(json!({ "run": cfg, "model": meta }));
    emit(&report, &a.report, cfg, "fused_head")
}

pub fn predict(a: &PredictArgs, cfg: &RunConfig) -> Result<()> {
    let mut run = cfg.clone();
    run.apply_extractor(&a.extractor);
    let model_path = pick(&a.model, &run.model, "model")?;
    let (params, _) = head::load_head(&model_path).with_context(|| format!("loading model {}", model_path.display()))?;
    let positive = positive_class(a.positive_class, &run)?;
    let print_row = |id: serde_json::Value, x: &[f32]| -> Result<()> {
        let p = head::predict(&params, x, positive)?;
        println!(
            "{}",
            json!({"input": id, "label": p.label, "class": CLASS_NAMES[usize::from(p.label)], "score": p.score, "probs": p.probs})
        );
        Ok(())
    };
    if let Some(path) = &a.features {
        let fm = load_store(path, "input")?;
        for i in 0..fm.rows() {
            print_row(json!(i), fm.row(i))?;
        }
    } else {
        ensure!(!a.image.is_empty(), "give --image or --features");
        let extractors = run.extractors()?;
        for path in &a.image {
            let img = preprocess::load_standardized(path).with_context(|| format!("loading {}", path.display()))?;
            let x = extractors.extract_fused(&img).with_context(|| format!("extracting {}", path.display()))?;
            print_row(json!(path), &x)?;
        }
    }
    Ok(())
}

pub fn baseline(cmd: &BaselineCommand, cfg: &RunConfig) -> Result<()> {
    match cmd {
        BaselineCommand::Train(a) => {
            let t = &cfg.training;
            let config = BaselineConfig {
                learning_rate: a.learning_rate.unwrap_or(t.learning_rate),
                epochs: a.epochs.unwrap_or(t.epochs),
                batch_size: a.batch_size.unwrap_or(t.batch_size),
                regularization: a.regularization.unwrap_or(t.weight_decay),
                hidden_units: a.hidden_units.unwrap_or(BaselineConfig::default().hidden_units),
                seed: a.seed.unwrap_or(t.seed),
            };
            let fm = load_store(&pick(&a.features, &cfg.features, "features")?, "training")?;
            let model_path = pick(&a.model, &cfg.model, "model")?;
            let kind = a.kind.into();
            let model = baselines::train_baseline(kind, &fm, &config).with_context(|| format!("training {kind}"))?;
            model
                .save(fm.slice_map(), &model_path)
                .with_context(|| format!("writing model {}", model_path.display()))?;
            println!("{kind} -> {}", model_path.display());
        }
        BaselineCommand::Eval(a) => {
            let model_path = pick(&a.model, &cfg.model, "model")?;
            let fm = load_store(&pick(&a.features, &cfg.test_features.clone().or(cfg.features.clone()), "features")?, "evaluation")?;
            let (model, meta) = BaselineModel::load(&model_path).with_context(|| format!("loading model {}", model_path.display()))?;
            let positive = positive_class(a.report.positive_class, cfg)?;
            let mut report = baselines::evaluate_baseline(&model, &fm, positive).context("evaluating")?;
            report.config = Some(json!({ "run": cfg, "model": meta }));
            emit(&report, &a.report, cfg, model.kind.as_str())?;
        }
    }
    Ok(())
}

pub fn viz(cmd: &VizCommand, cfg: &RunConfig) -> Result<()> {
    match cmd {
        VizCommand::Pca(a) => {
            let fm = load_store(&pick(&a.features, &cfg.features, "features")?, "input")?;
            let e = viz::pca2(&fm).context("computing PCA")?;
            e.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
            println!("pca -> {}", a.out.display());
        }
        VizCommand::Tsne(a) => {
            let fm = load_store(&pick(&a.features, &cfg.features, "features")?, "input")?;
            let config = viz::TsneConfig {
                perplexity: a.perplexity,
                iterations: a.iterations,
                learning_rate: a.learning_rate,
                seed: a.seed,
                ..Default::default()
            };
            let e = viz::tsne2(&fm, &config).context("computing t-SNE")?;
            e.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
            println!("tsne -> {}", a.out.display());
        }
        VizCommand::Heatmap(a) => {
            let mut fm = load_store(&pick(&a.features, &cfg.features, "features")?, "input")?;
            if let Some(b) = &a.backbone {
                fm = fm.select_backbone(b.parse()?)?;
            }
            let h = viz::feature_heatmap(&fm).context("building heatmap")?;
            h.save(&a.out).with_context(|| format!("writing {}", a.out.display()))?;
            println!("heatmap {} x {} -> {}.pgm", h.rows, h.cols, a.out.display());
        }
    }
    Ok(())
}

pub fn bench(cmd: &BenchCommand, cfg: &RunConfig) -> Result<()> {
    let BenchCommand::Fps(a) = cmd;
    let mut run = cfg.clone();
    run.apply_extractor(&a.extractor);
    let manifest = load_manifest(&pick(&a.manifest, &run.manifest, "manifest")?)?;
    let filter: SplitFilter = a.split.parse().context("parsing --split")?;
    let model_path = pick(&a.model, &run.model, "model")?;
    let (params, _) = head::load_head(&model_path).with_context(|| format!("loading model {}", model_path.display()))?;
    let extractors = run.extractors()?;
    let mut paths: Vec<&Path> = manifest
        .samples
        .iter()
        .filter(|s| filter.accepts(s.split))
        .map(|s| s.path.as_path())
        .collect();
    if let Some(limit) = a.limit {
        paths.truncate(a.warmup + limit);
    }
    let pipeline = |path: &&Path| -> pothole::Result<u8> {
        let img = preprocess::load_standardized(path)?;
        let x = extractors.extract_fused(&img)?;
        Ok(head::predict(&params, &x, 0)?.label)
    };
    let report = if a.parallel {
        metrics::fps_bench_parallel(pipeline, &paths, a.warmup)
    } else {
        metrics::fps_bench(pipeline, &paths, a.warmup)
    }
    .context("timing pipeline")?;
    let value = json!({
        "fps": report.fps,
        "ms_per_image": report.ms_per_image,
        "timed_images": report.timed_images,
        "warmup": report.warmup,
        "parallel": report.parallel,
        "extractor": run.extractor_mode(),
        "timing": "decode + standardize + extract + classify per image",
    });
    let text = to_json(&value)?;
    match &a.report {
        Some(p) => {
            write_text(p, &text)?;
            println!("{:.2} fps, {:.3} ms/image -> {}", report.fps, report.ms_per_image, p.display());
        }
        None => print!("{text}"),
    }
    Ok(())
}
