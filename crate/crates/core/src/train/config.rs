use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Erm,
    TAdv,
    TMme,
    TSsl,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Erm, Method::TAdv, Method::TMme, Method::TSsl];

    pub fn name(self) -> &'static str {
        match self {
            Method::Erm => "ERM",
            Method::TAdv => "T-ADV",
            Method::TMme => "T-MME",
            Method::TSsl => "T-SSL",
        }
    }

    /// Whether the method reads unlabeled target data.
    pub fn uses_target(self) -> bool {
        self != Method::Erm
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_uppercase().replace('_', "-");
        Method::ALL
            .into_iter()
            .find(|m| m.name() == norm || m.name().replace('-', "") == norm)
            .ok_or_else(|| Error::config(format!("unknown method {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Constant,
    DannAdaptive,
    LinearWarmup,
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" => Ok(ScheduleKind::Constant),
            "dann_adaptive" => Ok(ScheduleKind::DannAdaptive),
            "linear_warmup" => Ok(ScheduleKind::LinearWarmup),
            other => Err(Error::config(format!("unknown schedule {other:?}"))),
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Constant => "constant",
            ScheduleKind::DannAdaptive => "dann_adaptive",
            ScheduleKind::LinearWarmup => "linear_warmup",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerConfig {
    pub method: Method,
    pub steps: usize,
    pub batch_source: usize,
    pub batch_target: usize,
    pub lr_encoder: f64,
    pub lr_classifier: f64,
    pub lr_domain: f64,
    pub momentum: f64,
    pub lambda_adv: f64,
    pub lambda_e: f64,
    pub lambda_is: f64,
    pub lambda_mim: f64,
    /// ProtoNCE temperature φ.
    pub phi: f64,
    /// Cluster count; 0 means one cluster per class.
    pub k: usize,
    pub bank_momentum: f64,
    pub proto_refresh: usize,
    pub kmeans_iters: usize,
    pub schedule: ScheduleKind,
    pub gamma: f64,
    pub warmup_fraction: f64,
    /// Full-set accuracy snapshot period in steps; 0 snapshots only at the end.
    pub eval_every: usize,
    /// Any parameter magnitude above this counts as divergence.
    pub divergence_limit: f64,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            method: Method::Erm,
            steps: 600,
            batch_source: 32,
            batch_target: 32,
            lr_encoder: 0.01,
            lr_classifier: 0.1,
            lr_domain: 0.1,
            momentum: 0.9,
            lambda_adv: 0.1,
            lambda_e: 0.1,
            lambda_is: 0.1,
            lambda_mim: 0.5,
            phi: 0.1,
            k: 0,
            bank_momentum: 0.5,
            proto_refresh: 50,
            kmeans_iters: 10,
            schedule: ScheduleKind::DannAdaptive,
            gamma: 10.0,
            warmup_fraction: 0.3,
            eval_every: 0,
            divergence_limit: 1e4,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            ("lr_encoder", self.lr_encoder),
            ("lr_classifier", self.lr_classifier),
            ("lr_domain", self.lr_domain),
            ("momentum", self.momentum),
            ("lambda_adv", self.lambda_adv),
            ("lambda_e", self.lambda_e),
            ("lambda_is", self.lambda_is),
            ("lambda_mim", self.lambda_mim),
            ("gamma", self.gamma),
        ];
        for (name, v) in coeffs {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!(
                    "{name} must be a finite value >= 0, got {v}"
                )));
            }
        }
        if self.batch_source == 0 || self.batch_target == 0 {
            return Err(Error::config("batch sizes must be at least 1"));
        }
        if !(self.phi > 0.0) {
            return Err(Error::config("phi must be positive"));
        }
        if !(0.0..1.0).contains(&self.bank_momentum) {
            return Err(Error::config("bank_momentum must lie in [0, 1)"));
        }
        if self.momentum >= 1.0 {
            return Err(Error::config("momentum must be below 1"));
        }
        if !(self.divergence_limit > 0.0) {
            return Err(Error::config("divergence_limit must be positive"));
        }
        if self.proto_refresh == 0 {
            return Err(Error::config("proto_refresh must be at least 1"));
        }
        if !(self.warmup_fraction > 0.0 && self.warmup_fraction <= 1.0) {
            return Err(Error::config("warmup_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Cluster count for `n_classes` classes.
    pub fn clusters(&self, n_classes: usize) -> usize {
        if self.k == 0 {
            n_classes
        } else {
            self.k
        }
    }
}
