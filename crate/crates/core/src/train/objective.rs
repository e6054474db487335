//! One batch of a method's objective with its gradients.
//!
//! Every image gets its own encoder tape (run in parallel); the heads and
//! losses live on a batch tape whose leaves are the feature rows. After the
//! batch tape is backpropagated, each feature-row gradient is pushed back
//! through its encoder tape and the per-example parameter gradients are
//! summed in batch order.

use super::config::Method;
use super::losses::{loss_adv, loss_cls, loss_entropy_target, loss_is, loss_mim};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::tensor::{Graph, Tensor, Var};
use crate::vit::{Binding, Grads, ParamGroup, ViTModel};

/// Loss weights in effect for one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Coefficients {
    pub lambda_adv: f64,
    pub lambda_e: f64,
    pub lambda_is: f64,
    pub lambda_mim: f64,
    pub phi: f64,
}

/// Prototypes and the cluster of every batch row, per domain.
#[derive(Clone, Debug)]
pub struct BatchPrototypes<'a> {
    pub source: &'a Tensor,
    pub target: &'a Tensor,
    pub assigned_source: Vec<usize>,
    pub assigned_target: Vec<usize>,
}

pub struct Batch<'a> {
    pub source: Vec<&'a Tensor>,
    pub labels: Vec<usize>,
    pub target: Vec<&'a Tensor>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepLosses {
    pub l_cls: f64,
    pub l_adv: Option<f64>,
    pub l_e: Option<f64>,
    pub l_is: Option<f64>,
    pub l_mim: Option<f64>,
}

impl StepLosses {
    pub fn is_finite(&self) -> bool {
        self.l_cls.is_finite()
            && [self.l_adv, self.l_e, self.l_is, self.l_mim]
                .iter()
                .all(|v| v.map_or(true, f64::is_finite))
    }
}

pub struct StepOutput {
    pub losses: StepLosses,
    pub grads: Option<Grads>,
    pub source_features: Vec<Vec<f64>>,
    pub target_features: Vec<Vec<f64>>,
}

struct EncoderTape {
    graph: Graph,
    binding: Binding,
    feature: Var,
}

fn rows_tensor(rows: &[Vec<f64>], e: usize) -> Result<Tensor> {
    Tensor::new(&[rows.len(), e], rows.concat())
}

/// Evaluates `method`'s objective on a batch. With `want_grads` the
/// returned gradients realize every gradient-reversal path: descending them
/// is one step of the method.
pub fn batch_step(
    model: &ViTModel,
    method: Method,
    batch: &Batch<'_>,
    coeffs: &Coefficients,
    protos: Option<&BatchPrototypes<'_>>,
    want_grads: bool,
    exec: Execution,
) -> Result<StepOutput> {
    if batch.source.is_empty() {
        return Err(Error::contract("empty source batch"));
    }
    if batch.labels.len() != batch.source.len() {
        return Err(Error::contract("one label per source image required"));
    }
    let uses_target = method.uses_target();
    if uses_target && batch.target.is_empty() {
        return Err(Error::contract(format!("{method} needs a target batch")));
    }
    let images: Vec<&Tensor> = if uses_target {
        batch.source.iter().chain(&batch.target).copied().collect()
    } else {
        batch.source.clone()
    };
    let mut tapes = par::map(exec, &images, |img| -> Result<EncoderTape> {
        let mut graph = Graph::new();
        let binding = model.bind_encoder(&mut graph, want_grads);
        let feature = model.encode(&mut graph, &binding, img, None)?;
        Ok(EncoderTape {
            graph,
            binding,
            feature,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let features: Vec<Vec<f64>> = tapes
        .iter()
        .map(|t| t.graph.value(t.feature).data().to_vec())
        .collect();
    let e = model.cfg.embedding_dim_out;
    let bs = batch.source.len();
    let (src_rows, tgt_rows) = features.split_at(bs);

    let mut g = Graph::new();
    let trainable: &[ParamGroup] = if want_grads {
        &[ParamGroup::Classifier, ParamGroup::Domain]
    } else {
        &[]
    };
    let hb = model.bind_heads(&mut g, trainable);
    let fs = g.param(rows_tensor(src_rows, e)?);
    let ft = if uses_target {
        Some(g.param(rows_tensor(tgt_rows, e)?))
    } else {
        None
    };
    let logits_s = model.classify(&mut g, &hb, fs)?;
    let l_cls = loss_cls(&mut g, logits_s, &batch.labels)?;
    let mut losses = StepLosses {
        l_cls: g.scalar(l_cls),
        ..StepLosses::default()
    };
    let total = match (method, ft) {
        (Method::Erm, _) => l_cls,
        (Method::TAdv, Some(ft)) => {
            let all = g.concat_rows(&[fs, ft])?;
            let reversed = g.grad_reverse(all, coeffs.lambda_adv)?;
            let d = model.domain_logits(&mut g, &hb, reversed)?;
            let mut domains = vec![0; bs];
            domains.resize(images.len(), 1);
            let l_adv = loss_adv(&mut g, d, &domains)?;
            losses.l_adv = Some(g.scalar(l_adv));
            g.add(l_cls, l_adv)?
        }
        (Method::TMme, Some(ft)) => {
            let reversed = g.grad_reverse(ft, 1.0)?;
            let logits_t = model.classify(&mut g, &hb, reversed)?;
            let l_e = loss_entropy_target(&mut g, logits_t)?;
            losses.l_e = Some(g.scalar(l_e));
            let weighted = g.scale(l_e, -coeffs.lambda_e);
            g.add(l_cls, weighted)?
        }
        (Method::TSsl, Some(ft)) => {
            let protos = protos.ok_or_else(|| Error::contract("T-SSL needs prototypes"))?;
            let logits_t = model.classify(&mut g, &hb, ft)?;
            let logits = g.concat_rows(&[logits_s, logits_t])?;
            let probs = g.softmax(logits, 1)?;
            let l_mim = loss_mim(&mut g, probs)?;
            let l_is = loss_is(
                &mut g,
                fs,
                ft,
                protos.source,
                protos.target,
                &protos.assigned_source,
                &protos.assigned_target,
                coeffs.phi,
            )?;
            losses.l_is = Some(g.scalar(l_is));
            losses.l_mim = Some(g.scalar(l_mim));
            let a = g.scale(l_is, coeffs.lambda_is);
            let b = g.scale(l_mim, coeffs.lambda_mim);
            let t = g.add(l_cls, a)?;
            g.add(t, b)?
        }
        (_, None) => unreachable!("target batch checked above"),
    };

    let grads = if want_grads {
        g.backward(total)?;
        let mut grads = Grads::zeros_like(&model.store);
        hb.collect_grads(&g, &mut grads);
        let mut seeds: Vec<Vec<f64>> = g
            .grad_tensor(fs)
            .into_data()
            .chunks(e)
            .map(<[f64]>::to_vec)
            .collect();
        if let Some(ft) = ft {
            seeds.extend(g.grad_tensor(ft).into_data().chunks(e).map(<[f64]>::to_vec));
        }
        let mut jobs: Vec<(EncoderTape, Vec<f64>)> = tapes.drain(..).zip(seeds).collect();
        let per_example = par::map_mut(exec, &mut jobs, |(tape, seed)| -> Result<Grads> {
            tape.graph.backward_with(tape.feature, seed)?;
            let mut gr = Grads::zeros_like(&model.store);
            tape.binding.collect_grads(&tape.graph, &mut gr);
            Ok(gr)
        });
        for gr in per_example {
            grads.merge(&gr?);
        }
        Some(grads)
    } else {
        None
    };
    let target_features = if uses_target {
        tgt_rows.to_vec()
    } else {
        Vec::new()
    };
    Ok(StepOutput {
        losses,
        grads,
        source_features: src_rows.to_vec(),
        target_features,
    })
}
