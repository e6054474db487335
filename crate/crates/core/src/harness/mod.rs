//! The `generate`, `train`, `evaluate` and `report` commands.
//!
//! Each command reads an [`ExperimentConfig`] and writes batch artifacts
//! into a directory: a corpus with its manifest, a run directory with
//! `checkpoint.gevit`, `trace.csv` and `run_meta.json`, or metrics files
//! next to the checkpoint.

mod config;
mod report;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{DataConfig, EvalConfig, ExperimentConfig};
pub use report::{cmd_report, Report, ReportRow, Stat};

use crate::error::{Error, Result};
use crate::eval::{accuracy, cue_conflict_scores, table, to_jsonl, MetricsRecord, Windowed};
use crate::forge::corpus::sha256_hex;
use crate::forge::format::from_bytes;
use crate::forge::{build_corpus, Dataset, Manifest};
use crate::par::Execution;
use crate::train::{trace_csv, train, TrainReport};
use crate::vit::{checkpoint, ViTModel};

pub const CHECKPOINT: &str = "checkpoint.gevit";
pub const TRACE: &str = "trace.csv";
pub const RUN_META: &str = "run_meta.json";

/// Run metadata written next to every checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub method: String,
    pub seed: u64,
    pub n_classes: usize,
    /// Canonical `key = value` echo of the full config.
    pub config: String,
    pub wall_time_secs: f64,
    /// SHA-256 of every input file, keyed by path.
    pub inputs: BTreeMap<String, String>,
    pub final_src_acc: f64,
    pub final_tgt_acc: Option<f64>,
}

impl RunMeta {
    pub fn load(dir: &Path) -> Result<RunMeta> {
        let path = dir.join(RUN_META);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path,
            reason: e.to_string(),
        })
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn is_nonempty_dir(dir: &Path) -> bool {
    fs::read_dir(dir).map_or(false, |mut d| d.next().is_some())
}

fn resolve_out(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<PathBuf> {
    out.map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| Error::config("no output directory: pass --out or set out"))
}

/// Writes the corpus described by the data block into `out`, or into
/// `data.corpus` when `out` is absent.
pub fn cmd_generate(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    force: bool,
    exec: Execution,
) -> Result<Manifest> {
    let dir = out.map_or_else(|| cfg.data.corpus.clone(), Path::to_path_buf);
    if is_nonempty_dir(&dir) {
        if !force {
            return Err(Error::OutputExists(dir));
        }
        fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let manifest = build_corpus(&cfg.corpus_spec(), &dir, exec)?;
    log::info!(
        "wrote {} files to {}",
        manifest.files.len() + 1,
        dir.display()
    );
    Ok(manifest)
}

/// A corpus directory with its manifest.
pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: Manifest,
}

impl Corpus {
    pub fn open(dir: &Path) -> Result<Corpus> {
        if !dir.is_dir() {
            return Err(Error::config(format!(
                "corpus directory {} does not exist",
                dir.display()
            )));
        }
        Ok(Corpus {
            dir: dir.to_path_buf(),
            manifest: Manifest::load(&dir.join("manifest.json"))?,
        })
    }

    /// Reads one file, checking it against its manifest hash. Returns the
    /// dataset and the hash.
    pub fn read(&self, file: &str) -> Result<(Dataset, String)> {
        let entry = self
            .manifest
            .entry(file)
            .ok_or_else(|| Error::config(format!("{file} is not listed in the corpus manifest")))?;
        let path = self.dir.join(file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let hash = sha256_hex(&bytes);
        if hash != entry.sha256 {
            return Err(Error::Format {
                path,
                reason: "content hash differs from the manifest".into(),
            });
        }
        let ds = from_bytes(&bytes).map_err(|reason| Error::Format {
            path: path.clone(),
            reason,
        })?;
        Ok((ds, hash))
    }

    /// File holding the dataset called `name`.
    pub fn file_for(&self, name: &str) -> Result<String> {
        let file = match name {
            "train" | "iid_val" | "target_train" => format!("{name}.shft"),
            suite => format!("ood_{suite}.shft"),
        };
        if self.manifest.entry(&file).is_none() {
            return Err(Error::config(format!("corpus has no dataset {name:?}")));
        }
        Ok(file)
    }

    /// `iid_val` followed by every OOD suite, in manifest order.
    pub fn default_suites(&self) -> Vec<String> {
        let mut v = vec!["iid_val".to_string()];
        v.extend(self.manifest.files.iter().filter_map(|e| {
            e.file
                .strip_prefix("ood_")
                .and_then(|f| f.strip_suffix(".shft"))
                .map(String::from)
        }));
        v
    }
}

/// Trains one model and writes its run directory.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    force: bool,
    exec: Execution,
) -> Result<TrainReport> {
    let dir = resolve_out(cfg, out)?;
    let ckpt = dir.join(CHECKPOINT);
    if ckpt.exists() && !force {
        return Err(Error::OutputExists(ckpt));
    }
    let corpus = Corpus::open(&cfg.data.corpus)?;
    let m = &corpus.manifest;
    if m.n_classes != cfg.model.num_classes || m.image_size != cfg.model.image_size {
        return Err(Error::contract(format!(
            "corpus has {} classes at {}px, model expects {} at {}px",
            m.n_classes, m.image_size, cfg.model.num_classes, cfg.model.image_size
        )));
    }
    let mut inputs = BTreeMap::new();
    let mut read = |file: &str| -> Result<Dataset> {
        let (ds, hash) = corpus.read(file)?;
        inputs.insert(corpus.dir.join(file).display().to_string(), hash);
        Ok(ds)
    };
    let source = read(&cfg.data.source)?;
    let target = if cfg.trainer.method.uses_target() {
        Some(read(&cfg.data.target)?)
    } else {
        None
    };

    let tcfg = cfg.trainer();
    let mut model = ViTModel::new(cfg.model.clone(), cfg.seed)?;
    let start = Instant::now();
    let report = train(&mut model, &source, target.as_ref(), &tcfg, exec)?;
    let wall = start.elapsed().as_secs_f64();

    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    checkpoint::save(&model, &ckpt)?;
    write(&dir.join(TRACE), trace_csv(&report.trace))?;
    let meta = RunMeta {
        method: tcfg.method.to_string(),
        seed: cfg.seed,
        n_classes: cfg.model.num_classes,
        config: cfg.to_text(),
        wall_time_secs: wall,
        inputs,
        final_src_acc: report.final_src_acc,
        final_tgt_acc: report.final_tgt_acc,
    };
    let text = serde_json::to_string_pretty(&meta).expect("run metadata serializes");
    write(&dir.join(RUN_META), text + "\n")?;
    log::info!(
        "{} seed {}: src_acc {:.4} in {:.1}s",
        meta.method,
        meta.seed,
        meta.final_src_acc,
        wall
    );
    Ok(report)
}

/// Name of the metrics file for a window setting.
pub fn metrics_file(window: Option<usize>) -> String {
    match window {
        None => "metrics.jsonl".into(),
        Some(r) => format!("metrics_window{r}.jsonl"),
    }
}

/// Scores the checkpoint in the run directory on each named dataset.
/// OOD records carry their gap against `iid_val`.
pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    suites: Option<&[String]>,
    window: Option<usize>,
    exec: Execution,
) -> Result<Vec<MetricsRecord>> {
    let dir = resolve_out(cfg, out)?;
    let model = checkpoint::load(&dir.join(CHECKPOINT))?;
    let corpus = Corpus::open(&cfg.data.corpus)?;
    if corpus.manifest.n_classes != model.cfg.num_classes {
        return Err(Error::contract(format!(
            "checkpoint predicts {} classes, corpus has {}",
            model.cfg.num_classes, corpus.manifest.n_classes
        )));
    }
    let window = window.or(cfg.eval.window);
    let names: Vec<String> = match suites {
        Some(s) => s.to_vec(),
        None if !cfg.eval.suites.is_empty() => cfg.eval.suites.clone(),
        None => corpus.default_suites(),
    };
    if names.is_empty() {
        return Err(Error::config("no suites to evaluate"));
    }
    let pred = Windowed {
        model: &model,
        window,
    };
    let score = |name: &str| -> Result<MetricsRecord> {
        let file = corpus.file_for(name)?;
        let (ds, _) = corpus.read(&file)?;
        let mut r = MetricsRecord::new(name, accuracy(&pred, &ds, exec)?);
        let entry = corpus.manifest.entry(&file).expect("listed above");
        if entry.family == "corruption" {
            r.corruption_type = Some(entry.variant.clone());
            r.severity = Some(entry.severity);
        }
        if entry.family == "texture" && entry.variant == "cue_conflict" {
            let (shape, texture) = cue_conflict_scores(&pred, &ds, exec)?;
            r.shape_acc = Some(shape.rate());
            r.texture_acc = Some(texture.rate());
        }
        Ok(r)
    };
    let iid = score("iid_val")?;
    let mut records = Vec::with_capacity(names.len());
    for name in &names {
        let r = if name == "iid_val" {
            iid.clone()
        } else if name == "train" || name == "target_train" {
            score(name)?
        } else {
            score(name)?.with_gap(&iid)
        };
        records.push(r);
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let file = metrics_file(window);
    write(&dir.join(&file), to_jsonl(&records))?;
    write(&dir.join(file.replace(".jsonl", ".txt")), table(&records))?;
    Ok(records)
}
