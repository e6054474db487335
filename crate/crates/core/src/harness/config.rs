//! Flat `key=value` experiment files.
//!
//! ```text
//! # comments and blank lines are ignored
//! seed = 3
//! out = runs/erm_s3
//! model.embed_dim = 64
//! trainer.method = T-SSL
//! data.corpus = corpus
//! eval.suites = style_sketch_like,texture_cue_conflict
//! ```

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::forge::{CorpusSpec, StyleDomain, Suite};
use crate::train::{Method, TrainerConfig};
use crate::vit::{HeadKind, ViTConfig};

/// Corpus location plus the generation spec used by `generate`.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub corpus: PathBuf,
    pub n_per_class: usize,
    pub ratios: [f64; 3],
    pub size: usize,
    pub n_classes: usize,
    pub suites: Vec<Suite>,
    pub target_style: Option<StyleDomain>,
    /// Labeled source file inside the corpus.
    pub source: String,
    /// Unlabeled target file, read only by the domain-adaptive methods.
    pub target: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        let spec = CorpusSpec::default();
        DataConfig {
            corpus: PathBuf::from("corpus"),
            n_per_class: spec.n_per_class,
            ratios: spec.ratios,
            size: spec.size,
            n_classes: spec.n_classes,
            suites: spec.suites,
            target_style: None,
            source: "train.shft".into(),
            target: "target_train.shft".into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalConfig {
    /// Dataset names to score: `iid_val`, `train`, or any OOD suite name.
    /// Empty means every file in the manifest except the training pools.
    pub suites: Vec<String>,
    pub window: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub model: ViTConfig,
    pub trainer: TrainerConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::config(format!("{key}: cannot parse {v:?}")))
}

fn parse_list(v: &str) -> Vec<String> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn parse_suites(key: &str, v: &str) -> Result<Vec<Suite>> {
    if v.trim() == "all" {
        return Ok(Suite::all());
    }
    parse_list(v)
        .iter()
        .map(|s| s.parse().map_err(|e| Error::config(format!("{key}: {e}"))))
        .collect()
}

fn parse_style(v: &str) -> Result<Option<StyleDomain>> {
    if v == "none" {
        return Ok(None);
    }
    StyleDomain::ALL
        .into_iter()
        .find(|d| d.name() == v)
        .map(Some)
        .ok_or_else(|| Error::config(format!("unknown style domain {v:?}")))
}

impl ExperimentConfig {
    /// Defaults everywhere except the seed.
    pub fn with_seed(seed: u64) -> Self {
        ExperimentConfig {
            seed,
            out: None,
            model: ViTConfig::default(),
            trainer: TrainerConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::with_seed(0);
        let mut seen = BTreeSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key=value", no + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !seen.insert(k.to_string()) {
                return Err(Error::config(format!("duplicate key {k}")));
            }
            cfg.set(k, v)?;
        }
        if !seen.contains("seed") {
            return Err(Error::config("seed is mandatory"));
        }
        if !seen.contains("model.head") && matches!(cfg.trainer.method, Method::TMme | Method::TSsl)
        {
            cfg.model.head = HeadKind::Cosine;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Sets one key; unknown keys are rejected.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let m = &mut self.model;
        let t = &mut self.trainer;
        let d = &mut self.data;
        match key {
            "seed" => self.seed = parse(key, v)?,
            "out" => self.out = Some(PathBuf::from(v)),

            "model.image_size" => m.image_size = parse(key, v)?,
            "model.patch_size" => m.patch_size = parse(key, v)?,
            "model.channels" => m.channels = parse(key, v)?,
            "model.embed_dim" => m.embed_dim = parse(key, v)?,
            "model.num_heads" => m.num_heads = parse(key, v)?,
            "model.num_layers" => m.num_layers = parse(key, v)?,
            "model.num_classes" => m.num_classes = parse(key, v)?,
            "model.embedding_dim_out" => m.embedding_dim_out = parse(key, v)?,
            "model.cosine_temperature" => m.cosine_temperature = parse(key, v)?,
            "model.mlp_ratio" => m.mlp_ratio = parse(key, v)?,
            "model.domain_hidden" => m.domain_hidden = parse(key, v)?,
            "model.head" => m.head = v.parse()?,

            "trainer.method" => t.method = v.parse()?,
            "trainer.steps" => t.steps = parse(key, v)?,
            "trainer.batch_source" => t.batch_source = parse(key, v)?,
            "trainer.batch_target" => t.batch_target = parse(key, v)?,
            "trainer.lr_encoder" => t.lr_encoder = parse(key, v)?,
            "trainer.lr_classifier" => t.lr_classifier = parse(key, v)?,
            "trainer.lr_domain" => t.lr_domain = parse(key, v)?,
            "trainer.momentum" => t.momentum = parse(key, v)?,
            "trainer.lambda_adv" => t.lambda_adv = parse(key, v)?,
            "trainer.lambda_e" => t.lambda_e = parse(key, v)?,
            "trainer.lambda_is" => t.lambda_is = parse(key, v)?,
            "trainer.lambda_mim" => t.lambda_mim = parse(key, v)?,
            "trainer.phi" => t.phi = parse(key, v)?,
            "trainer.k" => t.k = parse(key, v)?,
            "trainer.bank_momentum" => t.bank_momentum = parse(key, v)?,
            "trainer.proto_refresh" => t.proto_refresh = parse(key, v)?,
            "trainer.kmeans_iters" => t.kmeans_iters = parse(key, v)?,
            "trainer.schedule" => t.schedule = v.parse()?,
            "trainer.gamma" => t.gamma = parse(key, v)?,
            "trainer.warmup_fraction" => t.warmup_fraction = parse(key, v)?,
            "trainer.eval_every" => t.eval_every = parse(key, v)?,
            "trainer.divergence_limit" => t.divergence_limit = parse(key, v)?,

            "data.corpus" => d.corpus = PathBuf::from(v),
            "data.n_per_class" => d.n_per_class = parse(key, v)?,
            "data.ratios" => {
                let parts = parse_list(v);
                if parts.len() != 3 {
                    return Err(Error::config("data.ratios needs three values"));
                }
                for (slot, p) in d.ratios.iter_mut().zip(&parts) {
                    *slot = parse(key, p)?;
                }
            }
            "data.size" => d.size = parse(key, v)?,
            "data.n_classes" => d.n_classes = parse(key, v)?,
            "data.suites" => d.suites = parse_suites(key, v)?,
            "data.target_style" => d.target_style = parse_style(v)?,
            "data.source" => d.source = v.into(),
            "data.target" => d.target = v.into(),

            "eval.suites" => self.eval.suites = parse_list(v),
            "eval.window" => {
                self.eval.window = if v == "none" {
                    None
                } else {
                    Some(parse(key, v)?)
                }
            }
            other => return Err(Error::config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.trainer.validate()?;
        self.corpus_spec().validate()?;
        if self.model.num_classes != self.data.n_classes {
            return Err(Error::config(format!(
                "model.num_classes = {} but data.n_classes = {}",
                self.model.num_classes, self.data.n_classes
            )));
        }
        if self.model.image_size != self.data.size {
            return Err(Error::config(format!(
                "model.image_size = {} but data.size = {}",
                self.model.image_size, self.data.size
            )));
        }
        if self.model.channels != 3 {
            return Err(Error::config("generated images have 3 channels"));
        }
        Ok(())
    }

    /// The trainer config with the experiment seed applied.
    pub fn trainer(&self) -> TrainerConfig {
        TrainerConfig {
            seed: self.seed,
            ..self.trainer.clone()
        }
    }

    pub fn corpus_spec(&self) -> CorpusSpec {
        CorpusSpec {
            n_per_class: self.data.n_per_class,
            ratios: self.data.ratios,
            suites: self.data.suites.clone(),
            seed: self.seed,
            size: self.data.size,
            n_classes: self.data.n_classes,
            target_style: self.data.target_style,
        }
    }

    /// Every key in canonical order; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let m = &self.model;
        let t = &self.trainer;
        let d = &self.data;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        if let Some(o) = &self.out {
            kv("out", o.display().to_string());
        }
        kv("model.image_size", m.image_size.to_string());
        kv("model.patch_size", m.patch_size.to_string());
        kv("model.channels", m.channels.to_string());
        kv("model.embed_dim", m.embed_dim.to_string());
        kv("model.num_heads", m.num_heads.to_string());
        kv("model.num_layers", m.num_layers.to_string());
        kv("model.num_classes", m.num_classes.to_string());
        kv("model.embedding_dim_out", m.embedding_dim_out.to_string());
        kv(
            "model.cosine_temperature",
            format!("{:?}", m.cosine_temperature),
        );
        kv("model.mlp_ratio", m.mlp_ratio.to_string());
        kv("model.domain_hidden", m.domain_hidden.to_string());
        kv("model.head", m.head.to_string());
        kv("trainer.method", t.method.to_string());
        kv("trainer.steps", t.steps.to_string());
        kv("trainer.batch_source", t.batch_source.to_string());
        kv("trainer.batch_target", t.batch_target.to_string());
        for (k, v) in [
            ("trainer.lr_encoder", t.lr_encoder),
            ("trainer.lr_classifier", t.lr_classifier),
            ("trainer.lr_domain", t.lr_domain),
            ("trainer.momentum", t.momentum),
            ("trainer.lambda_adv", t.lambda_adv),
            ("trainer.lambda_e", t.lambda_e),
            ("trainer.lambda_is", t.lambda_is),
            ("trainer.lambda_mim", t.lambda_mim),
            ("trainer.phi", t.phi),
        ] {
            kv(k, format!("{v:?}"));
        }
        kv("trainer.k", t.k.to_string());
        kv("trainer.bank_momentum", format!("{:?}", t.bank_momentum));
        kv("trainer.proto_refresh", t.proto_refresh.to_string());
        kv("trainer.kmeans_iters", t.kmeans_iters.to_string());
        kv("trainer.schedule", t.schedule.to_string());
        kv("trainer.gamma", format!("{:?}", t.gamma));
        kv(
            "trainer.warmup_fraction",
            format!("{:?}", t.warmup_fraction),
        );
        kv("trainer.eval_every", t.eval_every.to_string());
        kv(
            "trainer.divergence_limit",
            format!("{:?}", t.divergence_limit),
        );
        kv("data.corpus", d.corpus.display().to_string());
        kv("data.n_per_class", d.n_per_class.to_string());
        kv("data.ratios", d.ratios.map(|r| format!("{r:?}")).join(","));
        kv("data.size", d.size.to_string());
        kv("data.n_classes", d.n_classes.to_string());
        kv(
            "data.suites",
            d.suites
                .iter()
                .map(Suite::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        kv(
            "data.target_style",
            d.target_style.map_or("none".into(), |s| s.name().into()),
        );
        kv("data.source", d.source.clone());
        kv("data.target", d.target.clone());
        kv("eval.suites", self.eval.suites.join(","));
        kv(
            "eval.window",
            self.eval.window.map_or("none".into(), |w| w.to_string()),
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_blocks_and_comments() {
        let c = ExperimentConfig::parse(
            "# run\nseed = 4\nmodel.embed_dim=32\ntrainer.method = T-MME # adapt\n\
             data.suites = style_sketch_like, corruption_contrast_s2\neval.window = 1\n",
        )
        .unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.model.embed_dim, 32);
        assert_eq!(c.trainer.method, Method::TMme);
        assert_eq!(c.model.head, HeadKind::Cosine);
        assert_eq!(c.data.suites.len(), 2);
        assert_eq!(c.eval.window, Some(1));
        assert_eq!(c.trainer().seed, 4);
    }

    #[test]
    fn explicit_head_wins() {
        let c = ExperimentConfig::parse("seed=1\ntrainer.method=T-ADV\n").unwrap();
        assert_eq!(c.model.head, HeadKind::Linear);
        let c = ExperimentConfig::parse("seed=1\ntrainer.method=T-SSL\nmodel.head=linear\n");
        assert!(c.is_ok());
    }

    #[test]
    fn rejects_bad_input() {
        for text in [
            "model.embed_dim=64\n",
            "seed=1\nmodel.embedding=3\n",
            "seed=1\nseed=2\n",
            "seed=1\nmodel.embed_dim\n",
            "seed=x\n",
            "seed=1\nmodel.num_classes=5\n",
            "seed=1\ndata.suites=style_cartoon\n",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text:?}");
        }
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut c = ExperimentConfig::with_seed(9);
        c.out = Some("runs/a".into());
        c.trainer.method = Method::TSsl;
        c.model.head = HeadKind::Cosine;
        c.trainer.lr_encoder = 0.003;
        c.data.target_style = Some(StyleDomain::SketchLike);
        c.eval.suites = vec!["iid_val".into(), "style_sketch_like".into()];
        let back = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), c.to_text());
    }
}
