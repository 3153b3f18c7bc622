//! The pipeline stages behind the command-line subcommands.
//!
//! Every command reads its inputs from `data_root` (and an optional
//! checkpoint), writes only below `output_dir/<stage>`, and stamps the run
//! seed and configuration digest into each artifact it emits.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;

use crate::data::dataset::ImageDataset;
use crate::data::fewshot::sample_few_shot;
use crate::data::image::{DirectorySource, ImageSource};
use crate::data::manifest::{parse_manifest, DatasetManifest, Split};
use crate::data::splits::{assign_splits, read_id_list};
use crate::data::synthetic::{MANIFEST_FILE, TEST_LIST, TRAIN_VAL_LIST};
use crate::error::{Error, Result};
use crate::eval::{compare_with_baselines, evaluate, shots_curve, BaselineTable, EvalReport, ShotsCurve};
use crate::labels::DiseaseLabel;
use crate::model::backend::EncoderBackend;
use crate::model::checkpoint::{Checkpoint, CheckpointMeta, FORMAT_VERSION};
use crate::model::freeze::apply_freeze_policy;
use crate::model::head::{ClassificationHead, HeadConfig};
use crate::model::inference::{score_with_head, score_with_prompts};
use crate::pipeline::config::RunConfig;
use crate::train::{adapt, fewshot_finetune_head, AdaptOutcome, TrainingTrace};

pub const CHECKPOINT_FILE: &str = "checkpoint.safetensors";

/// Manifest with splits assigned, plus the image source under `data_root`.
pub struct Workspace {
    pub manifest: DatasetManifest,
    pub source: Arc<dyn ImageSource>,
}

impl Workspace {
    pub fn dataset(&self, split: Split) -> ImageDataset {
        ImageDataset::from_split(&self.manifest, split, self.source.clone())
    }
}

/// Checks every input file exists, then parses the manifest and assigns
/// train, validation and test splits.
pub fn load_workspace(cfg: &RunConfig) -> Result<Workspace> {
    let manifest_path = cfg.data_path(MANIFEST_FILE);
    let train_val_path = cfg.data_path(TRAIN_VAL_LIST);
    let test_path = cfg.data_path(TEST_LIST);
    for p in [&manifest_path, &train_val_path, &test_path] {
        if !p.is_file() {
            return Err(Error::MissingFile(p.clone()));
        }
    }
    let images = cfg.data_root.join("images");
    if !images.is_dir() {
        return Err(Error::MissingFile(images));
    }
    let file = std::fs::File::open(&manifest_path).map_err(|e| Error::file(&manifest_path, e))?;
    let labels: Vec<DiseaseLabel> = DiseaseLabel::all().collect();
    let manifest = parse_manifest(file, &labels).map_err(|e| Error::file(&manifest_path, e))?;
    let manifest = assign_splits(
        manifest,
        &read_id_list(&train_val_path)?,
        &read_id_list(&test_path)?,
        cfg.val_fraction,
        cfg.seed,
    )?;
    let missing: Vec<&str> = manifest
        .records()
        .iter()
        .filter(|r| r.split != Split::Unassigned)
        .map(|r| r.image_id.as_str())
        .filter(|id| !images.join(id).is_file())
        .take(5)
        .collect();
    if !missing.is_empty() {
        return Err(Error::file(&images, format!("missing image files, e.g. {missing:?}")));
    }
    Ok(Workspace {
        manifest,
        source: Arc::new(DirectorySource::new(&cfg.data_root)),
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))
}

#[derive(Serialize)]
struct TaggedRecord<'a, T: Serialize> {
    seed: u64,
    config_digest: &'a str,
    #[serde(flatten)]
    record: &'a T,
}

/// Trace as JSON lines, each carrying the run seed and config digest.
pub fn write_trace(trace: &TrainingTrace, cfg: &RunConfig, path: &Path) -> Result<()> {
    let digest = cfg.digest();
    let mut out = String::new();
    for r in &trace.epochs {
        out.push_str(&serde_json::to_string(&TaggedRecord {
            seed: cfg.seed,
            config_digest: &digest,
            record: r,
        })?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::file(path, e))
}

/// `run.json` beside the stage artifacts: digest, seed, resolved config and
/// the list of files written.
fn write_run_sidecar(cfg: &RunConfig, dir: &Path, command: &str, artifacts: &[PathBuf]) -> Result<()> {
    let names: Vec<String> = artifacts
        .iter()
        .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    let body = serde_json::json!({
        "command": command,
        "seed": cfg.seed,
        "config_digest": cfg.digest(),
        "config": cfg,
        "artifacts": names,
    });
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&body)? + "\n").map_err(|e| Error::file(&path, e))
}

fn stamp(report: EvalReport, cfg: &RunConfig, n_shots: usize) -> EvalReport {
    report.with_run(n_shots, cfg.seed, &cfg.digest())
}

#[derive(Debug)]
pub struct AdaptArtifacts {
    pub checkpoint: PathBuf,
    pub trace: PathBuf,
    pub report: PathBuf,
    pub outcome: AdaptOutcome,
    pub test_report: EvalReport,
}

/// Freeze policy, adaptation, then a test-split report from the adapted head.
pub fn cmd_adapt(cfg: &RunConfig) -> Result<AdaptArtifacts> {
    cfg.validate()?;
    let ws = load_workspace(cfg)?;
    let descriptor = cfg.backend_descriptor()?;
    let mut backend = descriptor.build()?;
    let freeze = apply_freeze_policy(backend.as_mut(), &cfg.freeze)?;
    log::info!(
        "freeze policy: {} of {} visual parameters trainable",
        freeze.trainable,
        freeze.total
    );
    let head_cfg = HeadConfig::for_embed_dim(backend.embed_dim());
    let mut head = ClassificationHead::new(head_cfg, cfg.seed, backend.device())?;
    let (train, val, test) = (ws.dataset(Split::Train), ws.dataset(Split::Val), ws.dataset(Split::Test));
    log::info!("splits: {} train, {} val, {} test", train.len(), val.len(), test.len());
    let outcome = adapt(backend.as_mut(), &mut head, &train, &val, &cfg.adaptation)?;

    let dir = cfg.stage_dir("adapt");
    ensure_dir(&dir)?;
    let meta = CheckpointMeta {
        format_version: FORMAT_VERSION,
        backend: descriptor,
        freeze: cfg.freeze,
        head: head_cfg,
        prompts: cfg.prompts.clone(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        epoch: outcome.best_epoch,
        adapted: true,
        stage: "adapt".into(),
        history: outcome.trace.normalized().epochs,
    };
    let checkpoint = dir.join(CHECKPOINT_FILE);
    Checkpoint::capture(backend.as_ref(), &head, meta)?.save(&checkpoint)?;
    let trace = dir.join("trace.jsonl");
    write_trace(&outcome.trace, cfg, &trace)?;
    let test_report = stamp(evaluate(&score_with_head(backend.as_ref(), &head, &test)?)?, cfg, 0)
        .with_meta("stage", "adapt")
        .with_meta("evaluated_path", "head")
        .with_meta("split", "test")
        .with_meta("best_epoch", outcome.best_epoch)
        .with_meta("best_val_mean_auc", outcome.best_val_auc)
        .with_meta("trainable_visual_params", freeze.trainable);
    let report = dir.join("report_test.json");
    test_report.save(&report)?;
    write_run_sidecar(cfg, &dir, "adapt", &[checkpoint.clone(), trace.clone(), report.clone()])?;
    Ok(AdaptArtifacts {
        checkpoint,
        trace,
        report,
        outcome,
        test_report,
    })
}

fn backend_for(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(Box<dyn EncoderBackend>, Option<ClassificationHead>, bool)> {
    match checkpoint {
        Some(path) => {
            let ckpt = Checkpoint::load(path)?;
            let adapted = ckpt.meta.adapted;
            let (backend, head) = ckpt.restore()?;
            Ok((backend, Some(head), adapted))
        }
        None => Ok((cfg.backend_descriptor()?.build()?, None, false)),
    }
}

fn zero_shot_report(cfg: &RunConfig, backend: &dyn EncoderBackend, test: &ImageDataset, checkpoint: Option<&Path>, adapted: bool) -> Result<EvalReport> {
    if !backend.supports_text() {
        return Err(Error::InvalidInput(
            "zero-shot scoring needs a backend with a text encoder".into(),
        ));
    }
    let matrix = score_with_prompts(backend, &cfg.prompts, cfg.temperature, test)?;
    Ok(stamp(evaluate(&matrix)?, cfg, 0)
        .with_meta("stage", "zeroshot")
        .with_meta("evaluated_path", "prompts")
        .with_meta("split", "test")
        .with_meta("adapted", adapted)
        .with_meta(
            "checkpoint",
            checkpoint.map(|p| p.display().to_string()).unwrap_or_else(|| "none: unadapted backend".into()),
        )
        .with_meta("positive_prompts", cfg.prompts.render_all())
        .with_meta("negative_prompt", &cfg.prompts.negative_text)
        .with_meta("temperature", cfg.temperature.unwrap_or(backend.logit_scale())))
}

/// Prompt-based scoring of the test split, on the adapted encoder when a
/// checkpoint is given and on the base encoder otherwise.
pub fn cmd_zeroshot(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<(EvalReport, PathBuf)> {
    cfg.validate()?;
    let ws = load_workspace(cfg)?;
    let (backend, _, adapted) = backend_for(cfg, checkpoint)?;
    let report = zero_shot_report(cfg, backend.as_ref(), &ws.dataset(Split::Test), checkpoint, adapted)?;
    let dir = cfg.stage_dir("zeroshot");
    ensure_dir(&dir)?;
    let path = dir.join("report.json");
    report.save(&path)?;
    write_run_sidecar(cfg, &dir, "zeroshot", std::slice::from_ref(&path))?;
    Ok((report, path))
}

#[derive(Debug)]
pub struct FewShotArtifacts {
    /// Shot 0 first, then one report per requested shot count.
    pub reports: Vec<EvalReport>,
    pub report_paths: Vec<PathBuf>,
    pub curve: ShotsCurve,
    pub curve_csv: PathBuf,
    pub curve_svg: PathBuf,
}

pub fn validate_shots(shots: &[i64]) -> Result<Vec<usize>> {
    if shots.is_empty() {
        return Err(Error::InvalidInput("shots list is empty".into()));
    }
    let mut out = Vec::with_capacity(shots.len());
    for &n in shots {
        if n <= 0 {
            return Err(Error::InvalidInput(format!(
                "invalid shot count {n}: shots must be positive (the zero-shot baseline is produced automatically)"
            )));
        }
        if out.contains(&(n as usize)) {
            return Err(Error::InvalidInput(format!("duplicate shot count {n}")));
        }
        out.push(n as usize);
    }
    Ok(out)
}

/// For each N: balanced subset from the train split, head-only fine-tuning
/// from the checkpoint's head, evaluation of the head on the test split.
/// Shot 0 is the checkpoint scored by prompts, or by its head when the
/// backend has no text encoder.
pub fn cmd_fewshot(cfg: &RunConfig, checkpoint: &Path, shots: &[i64]) -> Result<FewShotArtifacts> {
    cfg.validate()?;
    let shots = validate_shots(shots)?;
    if !checkpoint.is_file() {
        return Err(Error::MissingFile(checkpoint.to_path_buf()));
    }
    let ws = load_workspace(cfg)?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let adapted = ckpt.meta.adapted;
    let (backend, mut head) = ckpt.restore()?;
    let initial_head = head.params().snapshot(|_| true)?;
    let test = ws.dataset(Split::Test);
    let pool = ws.manifest.restrict(Split::Train);
    let train = ws.dataset(Split::Train);
    let dir = cfg.stage_dir("fewshot");
    ensure_dir(&dir)?;

    let baseline = if backend.supports_text() {
        zero_shot_report(cfg, backend.as_ref(), &test, Some(checkpoint), adapted)?
    } else {
        stamp(evaluate(&score_with_head(backend.as_ref(), &head, &test)?)?, cfg, 0)
            .with_meta("evaluated_path", "head")
            .with_meta("adapted", adapted)
    };
    let mut reports = vec![baseline.with_meta("stage", "fewshot").with_meta("n_shots", 0)];
    let mut artifacts = Vec::new();
    for &n in &shots {
        let subset = sample_few_shot(&pool, n, cfg.seed)?;
        for w in &subset.warnings {
            log::warn!("{n}-shot subset: {w}");
        }
        subset.export(&dir, &format!("subset_{n}shot"))?;
        head.params().restore(&initial_head)?;
        let data = train.select(&subset.record_ids);
        let outcome = fewshot_finetune_head(backend.as_ref(), &mut head, &data, &cfg.fewshot)?;
        let trace = dir.join(format!("trace_{n}shot.jsonl"));
        write_trace(&outcome.trace, cfg, &trace)?;
        artifacts.push(trace);
        let report = stamp(evaluate(&score_with_head(backend.as_ref(), &head, &test)?)?, cfg, n)
            .with_meta("stage", "fewshot")
            .with_meta("evaluated_path", "head")
            .with_meta("split", "test")
            .with_meta("adapted", adapted)
            .with_meta("subset_size", subset.len())
            .with_meta("subset_warnings", &subset.warnings);
        reports.push(report);
    }
    let mut report_paths = Vec::new();
    for r in &reports {
        let p = dir.join(format!("report_{}shot.json", r.n_shots));
        r.save(&p)?;
        report_paths.push(p);
    }
    let curve = shots_curve(&reports)?;
    let (curve_csv, curve_svg) = curve.write(&dir, "shots_curve")?;
    artifacts.extend(report_paths.iter().cloned());
    artifacts.extend([curve_csv.clone(), curve_svg.clone()]);
    write_run_sidecar(cfg, &dir, "fewshot", &artifacts)?;
    Ok(FewShotArtifacts {
        reports,
        report_paths,
        curve,
        curve_csv,
        curve_svg,
    })
}

/// Scores the test split with a checkpoint's head, or with prompts.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, prompts: bool) -> Result<(EvalReport, PathBuf)> {
    cfg.validate()?;
    if !checkpoint.is_file() {
        return Err(Error::MissingFile(checkpoint.to_path_buf()));
    }
    let ws = load_workspace(cfg)?;
    let (backend, head, adapted) = backend_for(cfg, Some(checkpoint))?;
    let test = ws.dataset(Split::Test);
    let report = if prompts {
        zero_shot_report(cfg, backend.as_ref(), &test, Some(checkpoint), adapted)?
    } else {
        let head = head.expect("checkpoint carries a head");
        stamp(evaluate(&score_with_head(backend.as_ref(), &head, &test)?)?, cfg, 0)
            .with_meta("evaluated_path", "head")
            .with_meta("adapted", adapted)
            .with_meta("checkpoint", checkpoint.display().to_string())
    }
    .with_meta("stage", "eval")
    .with_meta("split", "test");
    let dir = cfg.stage_dir("eval");
    ensure_dir(&dir)?;
    let path = dir.join("report.json");
    report.save(&path)?;
    write_run_sidecar(cfg, &dir, "eval", std::slice::from_ref(&path))?;
    Ok((report, path))
}

pub enum Baselines<'a> {
    None,
    Bundled,
    File(&'a Path),
}

/// One comparison table (CSV and aligned text) per named report.
pub fn cmd_report(cfg: &RunConfig, reports: &[(String, EvalReport)], baselines: Baselines) -> Result<Vec<PathBuf>> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("no reports given".into()));
    }
    let table = match baselines {
        Baselines::None => BaselineTable::default(),
        Baselines::Bundled => BaselineTable::bundled(),
        Baselines::File(p) => BaselineTable::load(p)?,
    };
    let dir = cfg.stage_dir("report");
    ensure_dir(&dir)?;
    let mut written = Vec::new();
    for (name, report) in reports {
        let cmp = compare_with_baselines(report, name, &table)?;
        let csv = dir.join(format!("comparison_{name}.csv"));
        let txt = dir.join(format!("comparison_{name}.txt"));
        std::fs::write(&csv, cmp.to_csv()).map_err(|e| Error::file(&csv, e))?;
        let header = format!("# report {name}: seed {}, config digest {}\n", report.seed, report.config_digest);
        std::fs::write(&txt, header + &cmp.to_text()).map_err(|e| Error::file(&txt, e))?;
        written.extend([csv, txt]);
    }
    write_run_sidecar(cfg, &dir, "report", &written)?;
    Ok(written)
}

/// Loads report files, naming each by its file stem.
pub fn load_reports(paths: &[PathBuf]) -> Result<Vec<(String, EvalReport)>> {
    paths
        .iter()
        .map(|p| {
            let name = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((name, EvalReport::load(p)?))
        })
        .collect()
}
