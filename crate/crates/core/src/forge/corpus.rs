//! Corpus assembly: train / iid-val splits, one file per OOD suite, and an
//! optional unlabeled target-domain pool.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::format::{to_bytes, Dataset};
use super::shift::{style_shift, Suite};
use super::{mix, CueSpec, StyleDomain};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train = 0,
    IidVal = 1,
    Ood = 2,
    TargetTrain = 3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusSpec {
    pub n_per_class: usize,
    pub ratios: [f64; 3],
    pub suites: Vec<Suite>,
    pub seed: u64,
    pub size: usize,
    pub n_classes: usize,
    /// Style of the unlabeled target pool, if one is written.
    pub target_style: Option<StyleDomain>,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_per_class: 100,
            ratios: [0.7, 0.15, 0.15],
            suites: Suite::all(),
            seed: 0,
            size: 32,
            n_classes: 9,
            target_style: None,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.ratios.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.ratios.iter().any(|&r| r < 0.0) {
            return Err(Error::config(format!(
                "split ratios {:?} must be nonnegative and sum to 1",
                self.ratios
            )));
        }
        if self.n_classes == 0 || self.n_classes > 9 {
            return Err(Error::config("n_classes must lie in 1..=9"));
        }
        if self.size < 8 || self.size > 255 {
            return Err(Error::config("image size must lie in 8..=255"));
        }
        Ok(())
    }

    /// Examples per class in train, iid-val and ood; the last split takes
    /// the rounding remainder.
    pub fn per_class_counts(&self) -> [usize; 3] {
        let n = self.n_per_class as f64;
        let train = (n * self.ratios[0]).round() as usize;
        let iid = ((n * self.ratios[1]).round() as usize).min(self.n_per_class - train);
        [train, iid, self.n_per_class - train - iid]
    }

    fn count(&self, split: Split) -> usize {
        match split {
            Split::Train | Split::TargetTrain => self.per_class_counts()[0],
            Split::IidVal => self.per_class_counts()[1],
            Split::Ood => self.per_class_counts()[2],
        }
    }

    /// Clean specs of a split, class-major. Seeds depend only on
    /// (base seed, split, class, index).
    pub fn specs(&self, split: Split) -> Vec<CueSpec> {
        let per = self.count(split);
        let base = mix(self.seed, split as u64 + 1);
        (0..self.n_classes)
            .flat_map(|c| (0..per).map(move |i| (c, i)))
            .map(|(c, i)| CueSpec::clean(c as u16, mix(base, (c * per + i) as u64)))
            .collect()
    }

    fn empty(&self) -> Dataset {
        Dataset::new(3, self.size, self.size, self.n_classes)
    }

    /// Renders a split as the given suite.
    pub fn generate(&self, split: Split, suite: Suite, exec: Execution) -> Result<Dataset> {
        let specs = self.specs(split);
        let examples = par::map(exec, &specs, |s| {
            suite.generate(s, self.size, self.n_classes)
        });
        let mut ds = self.empty();
        ds.examples = examples.into_iter().collect::<Result<_>>()?;
        Ok(ds)
    }

    /// Unlabeled target-domain pool rendered in `style`.
    pub fn target_pool(&self, style: StyleDomain, exec: Execution) -> Dataset {
        let specs = self.specs(Split::TargetTrain);
        let mut ds = self.empty();
        ds.examples = par::map(exec, &specs, |s| style_shift(s, style, self.size));
        ds
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub split: String,
    pub family: String,
    pub variant: String,
    pub severity: u8,
    pub count: usize,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub n_classes: usize,
    pub image_size: usize,
    pub seed: u64,
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn entry(&self, file: &str) -> Option<&ManifestEntry> {
        self.files.iter().find(|e| e.file == file)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn variant_name(suite: Suite) -> String {
    match suite {
        Suite::Clean => "clean".into(),
        Suite::Background(b) => b.name().into(),
        Suite::Corruption(c, _) => c.name().into(),
        Suite::Texture(t) => t.name().into(),
        Suite::Style(d) => d.name().into(),
    }
}

/// Writes every split and suite into `dir` plus `manifest.json`.
pub fn build_corpus(spec: &CorpusSpec, dir: &Path, exec: Execution) -> Result<Manifest> {
    spec.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();
    let mut emit = |file: String, split: &str, suite: Suite, ds: &Dataset| -> Result<()> {
        let bytes = to_bytes(ds)?;
        let path = dir.join(&file);
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        let tag = suite.tag();
        files.push(ManifestEntry {
            file,
            split: split.into(),
            family: tag.family.name().into(),
            variant: variant_name(suite),
            severity: tag.severity,
            count: ds.len(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    };
    emit(
        "train.shft".into(),
        "train",
        Suite::Clean,
        &spec.generate(Split::Train, Suite::Clean, exec)?,
    )?;
    emit(
        "iid_val.shft".into(),
        "iid_val",
        Suite::Clean,
        &spec.generate(Split::IidVal, Suite::Clean, exec)?,
    )?;
    for &suite in &spec.suites {
        let ds = spec.generate(Split::Ood, suite, exec)?;
        emit(format!("ood_{suite}.shft"), "ood", suite, &ds)?;
    }
    if let Some(style) = spec.target_style {
        emit(
            "target_train.shft".into(),
            "target_train",
            Suite::Style(style),
            &spec.target_pool(style, exec),
        )?;
    }
    let manifest = Manifest {
        n_classes: spec.n_classes,
        image_size: spec.size,
        seed: spec.seed,
        files,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
