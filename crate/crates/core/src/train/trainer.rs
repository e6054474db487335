//! The training loop shared by all four methods.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bank::{kmeans, MemoryBank, Prototypes};
use super::config::{Method, TrainerConfig};
use super::objective::{batch_step, Batch, BatchPrototypes, Coefficients, StepLosses};
use super::schedule::{progress, Schedule};
use super::sgd::{GroupRates, Sgd};
use crate::error::{Error, Result};
use crate::eval::{accuracy, Windowed};
use crate::forge::{mix, Dataset};
use crate::par::{self, Execution};
use crate::tensor::Tensor;
use crate::vit::{HeadKind, ViTModel};

/// One row of the loss trace.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub losses: StepLosses,
    pub lambda_adv: Option<f64>,
    pub lambda_e: Option<f64>,
    pub lambda_is: Option<f64>,
    pub src_acc: Option<f64>,
    pub tgt_acc: Option<f64>,
}

pub const TRACE_HEADER: &str =
    "step,l_cls,l_adv,l_e,l_is,l_mim,lambda_adv,lambda_e,lambda_is,src_acc,tgt_acc";

impl TraceRow {
    pub fn csv(&self) -> String {
        let f = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:?}"));
        let l = &self.losses;
        format!(
            "{},{:?},{},{},{},{},{},{},{},{},{}",
            self.step,
            l.l_cls,
            f(l.l_adv),
            f(l.l_e),
            f(l.l_is),
            f(l.l_mim),
            f(self.lambda_adv),
            f(self.lambda_e),
            f(self.lambda_is),
            f(self.src_acc),
            f(self.tgt_acc)
        )
    }

    fn summary(&self) -> String {
        let mut s = format!("step {}: l_cls={:?}", self.step, self.losses.l_cls);
        let l = &self.losses;
        for (name, v) in [
            ("l_adv", l.l_adv),
            ("l_e", l.l_e),
            ("l_is", l.l_is),
            ("l_mim", l.l_mim),
        ] {
            if let Some(v) = v {
                let _ = write!(s, ", {name}={v:?}");
            }
        }
        s
    }
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv());
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub trace: Vec<TraceRow>,
    pub final_src_acc: f64,
    pub final_tgt_acc: Option<f64>,
}

/// Shuffled passes over `0..n`, reshuffled at every epoch boundary.
struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    fn new(n: usize, seed: u64) -> Self {
        let mut s = EpochSampler {
            order: (0..n).collect(),
            pos: n,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.pos = 0;
    }

    fn next(&mut self, b: usize) -> Vec<usize> {
        (0..b)
            .map(|_| {
                if self.pos == self.order.len() {
                    self.reshuffle();
                }
                self.pos += 1;
                self.order[self.pos - 1]
            })
            .collect()
    }
}

struct SslState {
    bank_s: MemoryBank,
    bank_t: MemoryBank,
    protos_s: Prototypes,
    protos_t: Prototypes,
    refreshes: u64,
}

impl SslState {
    fn new(
        bank_s: MemoryBank,
        bank_t: MemoryBank,
        k: usize,
        iters: usize,
        seed: u64,
    ) -> Result<Self> {
        Ok(SslState {
            protos_s: kmeans(bank_s.rows(), k, mix(seed, 0), iters)?,
            protos_t: kmeans(bank_t.rows(), k, mix(seed, 1), iters)?,
            bank_s,
            bank_t,
            refreshes: 1,
        })
    }

    fn refresh(&mut self, k: usize, iters: usize, seed: u64) -> Result<()> {
        let s = mix(seed, 2 * self.refreshes);
        let t = mix(seed, 2 * self.refreshes + 1);
        self.protos_s = kmeans(self.bank_s.rows(), k, s, iters)?;
        self.protos_t = kmeans(self.bank_t.rows(), k, t, iters)?;
        self.refreshes += 1;
        Ok(())
    }
}

fn all_features(model: &ViTModel, images: &[Tensor], exec: Execution) -> Result<Tensor> {
    let rows = par::map(exec, images, |img| model.features(img, None))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Tensor::new(&[images.len(), model.cfg.embedding_dim_out], rows.concat())
}

fn check_dataset(model: &ViTModel, ds: &Dataset, role: &str) -> Result<()> {
    let cfg = &model.cfg;
    if ds.n_classes != cfg.num_classes {
        return Err(Error::contract(format!(
            "{role} set has {} classes, model has {}",
            ds.n_classes, cfg.num_classes
        )));
    }
    if (ds.channels, ds.height, ds.width) != (cfg.channels, cfg.image_size, cfg.image_size) {
        return Err(Error::contract(format!(
            "{role} images are {}x{}x{}, model expects {}x{}x{}",
            ds.channels, ds.height, ds.width, cfg.channels, cfg.image_size, cfg.image_size
        )));
    }
    if ds.is_empty() {
        return Err(Error::contract(format!("{role} set is empty")));
    }
    Ok(())
}

/// Trains `model` in place. `target` is read without labels for training;
/// its labels only feed the `tgt_acc` snapshots.
pub fn train(
    model: &mut ViTModel,
    source: &Dataset,
    target: Option<&Dataset>,
    cfg: &TrainerConfig,
    exec: Execution,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_dataset(model, source, "source")?;
    if let Some(t) = target {
        check_dataset(model, t, "target")?;
    }
    let method = cfg.method;
    if method.uses_target() && target.is_none() {
        return Err(Error::contract(format!(
            "{method} needs an unlabeled target set"
        )));
    }
    if matches!(method, Method::TMme | Method::TSsl) && model.cfg.head != HeadKind::Cosine {
        return Err(Error::contract(format!("{method} needs the cosine head")));
    }

    let src_imgs: Vec<Tensor> = source
        .examples
        .iter()
        .map(|e| e.image.to_tensor())
        .collect();
    let src_labels: Vec<usize> = source.examples.iter().map(|e| e.label()).collect();
    let tgt_imgs: Vec<Tensor> = match (method.uses_target(), target) {
        (true, Some(t)) => t.examples.iter().map(|e| e.image.to_tensor()).collect(),
        _ => Vec::new(),
    };

    let schedule = Schedule {
        kind: cfg.schedule,
        gamma: cfg.gamma,
        warmup: cfg.warmup_fraction,
    };
    let mut opt = Sgd::new(
        GroupRates {
            encoder: cfg.lr_encoder,
            classifier: cfg.lr_classifier,
            domain: cfg.lr_domain,
        },
        cfg.momentum,
    );
    let mut src_sampler = EpochSampler::new(src_imgs.len(), mix(cfg.seed, 1));
    let mut tgt_sampler = EpochSampler::new(tgt_imgs.len(), mix(cfg.seed, 2));
    let k = cfg.clusters(model.cfg.num_classes);
    let proto_seed = mix(cfg.seed, 3);

    let mut ssl = if method == Method::TSsl {
        if k > src_imgs.len() || k > tgt_imgs.len() {
            return Err(Error::contract(format!("k = {k} exceeds a bank size")));
        }
        let bank_s = MemoryBank::new(all_features(model, &src_imgs, exec)?, cfg.bank_momentum)?;
        let bank_t = MemoryBank::new(all_features(model, &tgt_imgs, exec)?, cfg.bank_momentum)?;
        Some(SslState::new(
            bank_s,
            bank_t,
            k,
            cfg.kmeans_iters,
            proto_seed,
        )?)
    } else {
        None
    };

    let snapshot = |model: &ViTModel| -> Result<(f64, Option<f64>)> {
        let w = Windowed {
            model,
            window: None,
        };
        let s = accuracy(&w, source, exec)?.rate();
        let t = match target {
            Some(t) => Some(accuracy(&w, t, exec)?.rate()),
            None => None,
        };
        Ok((s, t))
    };

    let mut trace = Vec::with_capacity(cfg.steps);
    let mut last_finite: Option<TraceRow> = None;
    let mut final_acc = None;
    for step in 0..cfg.steps {
        let p = progress(step, cfg.steps);
        let coeffs = Coefficients {
            lambda_adv: schedule.value(p, cfg.lambda_adv),
            lambda_e: schedule.value(p, cfg.lambda_e),
            lambda_is: schedule.value(p, cfg.lambda_is),
            lambda_mim: cfg.lambda_mim,
            phi: cfg.phi,
        };
        if let Some(state) = ssl.as_mut() {
            if step > 0 && step % cfg.proto_refresh == 0 {
                state.refresh(k, cfg.kmeans_iters, proto_seed)?;
            }
        }
        let si = src_sampler.next(cfg.batch_source);
        let ti = if method.uses_target() {
            tgt_sampler.next(cfg.batch_target)
        } else {
            Vec::new()
        };
        let batch = Batch {
            source: si.iter().map(|&i| &src_imgs[i]).collect(),
            labels: si.iter().map(|&i| src_labels[i]).collect(),
            target: ti.iter().map(|&i| &tgt_imgs[i]).collect(),
        };
        let protos = ssl.as_ref().map(|s| BatchPrototypes {
            source: &s.protos_s.centroids,
            target: &s.protos_t.centroids,
            assigned_source: si.iter().map(|&i| s.protos_s.assignments[i]).collect(),
            assigned_target: ti.iter().map(|&i| s.protos_t.assignments[i]).collect(),
        });
        let out = batch_step(model, method, &batch, &coeffs, protos.as_ref(), true, exec);
        let numerical = |what: &str, last: &Option<TraceRow>| Error::Numerical {
            step,
            what: what.into(),
            last_finite: last.map_or("none".into(), |r| r.summary()),
        };
        let out = match out {
            Ok(o) if o.losses.is_finite() => o,
            Ok(_) => return Err(numerical("non-finite loss", &last_finite)),
            Err(e) if !model.store.is_finite() => {
                log::debug!("forward failed on non-finite weights: {e}");
                return Err(numerical("non-finite weights", &last_finite));
            }
            Err(e) => return Err(e),
        };
        opt.step(
            &mut model.store,
            out.grads.as_ref().expect("gradients requested"),
        );
        let mut row = TraceRow {
            step,
            losses: out.losses,
            lambda_adv: (method == Method::TAdv).then_some(coeffs.lambda_adv),
            lambda_e: (method == Method::TMme).then_some(coeffs.lambda_e),
            lambda_is: (method == Method::TSsl).then_some(coeffs.lambda_is),
            src_acc: None,
            tgt_acc: None,
        };
        let peak = model.store.max_abs();
        if !peak.is_finite() {
            return Err(numerical("non-finite weights", &Some(row)));
        }
        if peak > cfg.divergence_limit {
            return Err(numerical(
                &format!(
                    "weight magnitude {peak:.3e} above {:e}",
                    cfg.divergence_limit
                ),
                &Some(row),
            ));
        }
        if let Some(state) = ssl.as_mut() {
            for (&i, f) in si.iter().zip(&out.source_features) {
                state.bank_s.update(i, &unit(f)?)?;
            }
            for (&i, f) in ti.iter().zip(&out.target_features) {
                state.bank_t.update(i, &unit(f)?)?;
            }
        }
        let last = step + 1 == cfg.steps;
        if last || (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0) {
            let (s, t) = snapshot(model)?;
            row.src_acc = Some(s);
            row.tgt_acc = t;
            if last {
                final_acc = Some((s, t));
            }
        }
        if step % 50 == 0 || last {
            log::info!("{} {}", method, row.summary());
        }
        last_finite = Some(row);
        trace.push(row);
    }
    let (final_src_acc, final_tgt_acc) = match final_acc {
        Some(a) => a,
        None => snapshot(model)?,
    };
    Ok(TrainReport {
        trace,
        final_src_acc,
        final_tgt_acc,
    })
}

fn unit(f: &[f64]) -> Result<Vec<f64>> {
    let n = f.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(n > 0.0) {
        return Err(Error::Degenerate("zero feature vector".into()));
    }
    Ok(f.iter().map(|v| v / n).collect())
}
