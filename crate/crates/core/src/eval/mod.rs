//! Accuracy, generalization gap, cue-conflict scores and corruption
//! summaries. Counts stay integral until a rate is reported.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forge::{Corruption, Dataset};
use crate::par::{self, Execution};
use crate::tensor::Tensor;
use crate::vit::ViTModel;

/// Anything that maps an image to class scores.
pub trait Predictor: Sync {
    fn num_classes(&self) -> usize;
    fn scores(&self, image: &Tensor) -> Result<Vec<f64>>;
}

/// A model evaluated with an optional attention window.
pub struct Windowed<'a> {
    pub model: &'a ViTModel,
    pub window: Option<usize>,
}

impl Predictor for Windowed<'_> {
    fn num_classes(&self) -> usize {
        self.model.cfg.num_classes
    }

    fn scores(&self, image: &Tensor) -> Result<Vec<f64>> {
        self.model.logits(image, self.window)
    }
}

impl Predictor for ViTModel {
    fn num_classes(&self) -> usize {
        self.cfg.num_classes
    }

    fn scores(&self, image: &Tensor) -> Result<Vec<f64>> {
        self.logits(image, None)
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Counts {
    pub correct: u64,
    pub n: u64,
}

impl Counts {
    pub fn rate(&self) -> f64 {
        self.correct as f64 / self.n as f64
    }

    pub fn merge(self, other: Counts) -> Counts {
        Counts {
            correct: self.correct + other.correct,
            n: self.n + other.n,
        }
    }
}

fn check_classes(pred: &dyn Predictor, ds: &Dataset) -> Result<()> {
    if pred.num_classes() != ds.n_classes {
        return Err(Error::contract(format!(
            "model predicts {} classes, dataset has {}",
            pred.num_classes(),
            ds.n_classes
        )));
    }
    if ds.is_empty() {
        return Err(Error::contract("evaluation on an empty dataset"));
    }
    Ok(())
}

/// Predicted class of every example, in dataset order.
pub fn predictions<P: Predictor + ?Sized>(
    pred: &P,
    ds: &Dataset,
    exec: Execution,
) -> Result<Vec<usize>> {
    par::map(exec, &ds.examples, |ex| {
        pred.scores(&ex.image.to_tensor()).map(|s| argmax(&s))
    })
    .into_iter()
    .collect()
}

/// Correct predictions of the shape label.
pub fn accuracy<P: Predictor>(pred: &P, ds: &Dataset, exec: Execution) -> Result<Counts> {
    check_classes(pred, ds)?;
    let hits = predictions(pred, ds, exec)?;
    Ok(count_hits(&hits, ds.examples.iter().map(|e| e.label())))
}

fn count_hits(pred: &[usize], labels: impl Iterator<Item = usize>) -> Counts {
    let mut c = Counts::default();
    for (p, y) in pred.iter().zip(labels) {
        c.n += 1;
        if *p == y {
            c.correct += 1;
        }
    }
    c
}

/// iid − ood; negative when the shifted set scores higher.
pub fn generalization_gap(iid: &MetricsRecord, ood: &MetricsRecord) -> f64 {
    iid.acc - ood.acc
}

/// Shape and texture hit counts on a cue-conflict set.
pub fn cue_conflict_scores<P: Predictor>(
    pred: &P,
    ds: &Dataset,
    exec: Execution,
) -> Result<(Counts, Counts)> {
    check_classes(pred, ds)?;
    if ds.examples.iter().any(|e| e.texture_label == e.shape_label) {
        return Err(Error::contract("dataset has no conflicting texture labels"));
    }
    let hits = predictions(pred, ds, exec)?;
    let shape = count_hits(&hits, ds.examples.iter().map(|e| e.shape_label as usize));
    let texture = count_hits(&hits, ds.examples.iter().map(|e| e.texture_label as usize));
    Ok((shape, texture))
}

/// Accuracy table over (type, severity) plus the unweighted mean of the
/// cells present.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptionReport {
    pub cells: BTreeMap<(Corruption, u8), f64>,
    pub missing: Vec<(Corruption, u8)>,
    pub mean: f64,
}

impl CorruptionReport {
    pub fn per_type_mean(&self, kind: Corruption) -> Option<f64> {
        let v: Vec<f64> = self
            .cells
            .iter()
            .filter(|((k, _), _)| *k == kind)
            .map(|(_, &a)| a)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Builds the corruption table; the expected grid is every type at
/// severities 1–5, and absent cells are listed in `missing`.
pub fn corruption_report(cells: &[(Corruption, u8, f64)]) -> Result<CorruptionReport> {
    if cells.is_empty() {
        return Err(Error::contract("no corruption suites to summarize"));
    }
    let map: BTreeMap<(Corruption, u8), f64> = cells.iter().map(|&(k, s, a)| ((k, s), a)).collect();
    let kinds: Vec<Corruption> = {
        let mut k: Vec<_> = map.keys().map(|(k, _)| *k).collect();
        k.dedup();
        k
    };
    let missing = kinds
        .iter()
        .flat_map(|&k| (1..=5).map(move |s| (k, s)))
        .filter(|key| !map.contains_key(key))
        .collect();
    let mut sum = 0.0;
    for a in map.values() {
        sum += a;
    }
    let mean = sum / map.len() as f64;
    Ok(CorruptionReport {
        cells: map,
        missing,
        mean,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub dataset: String,
    pub n: u64,
    pub acc: f64,
    pub gap_vs: Option<String>,
    pub gap: Option<f64>,
    pub shape_acc: Option<f64>,
    pub texture_acc: Option<f64>,
    pub corruption_type: Option<String>,
    pub severity: Option<u8>,
}

impl MetricsRecord {
    pub fn new(dataset: impl Into<String>, counts: Counts) -> Self {
        MetricsRecord {
            dataset: dataset.into(),
            n: counts.n,
            acc: counts.rate(),
            gap_vs: None,
            gap: None,
            shape_acc: None,
            texture_acc: None,
            corruption_type: None,
            severity: None,
        }
    }

    /// Attaches the gap against an in-distribution record.
    pub fn with_gap(mut self, iid: &MetricsRecord) -> Self {
        self.gap = Some(generalization_gap(iid, &self));
        self.gap_vs = Some(iid.dataset.clone());
        self
    }
}

pub fn to_jsonl(records: &[MetricsRecord]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

pub fn from_jsonl(text: &str) -> Result<Vec<MetricsRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| Error::config(format!("bad metrics line: {e}")))
        })
        .collect()
}

/// Aligned plain-text table of records.
pub fn table(records: &[MetricsRecord]) -> String {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let header = ["dataset", "n", "acc", "gap", "shape_acc", "texture_acc"];
    let rows: Vec<[String; 6]> = records
        .iter()
        .map(|r| {
            [
                r.dataset.clone(),
                r.n.to_string(),
                format!("{:.4}", r.acc),
                opt(r.gap),
                opt(r.shape_acc),
                opt(r.texture_acc),
            ]
        })
        .collect();
    let mut width = header.map(str::len);
    for row in &rows {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, cells: &[&str]| {
        for (i, c) in cells.iter().enumerate() {
            if i == 0 {
                let _ = write!(out, "{:<w$}", c, w = width[i]);
            } else {
                let _ = write!(out, "  {:>w$}", c, w = width[i]);
            }
        }
        out.push('\n');
    };
    line(&mut out, &header);
    for row in &rows {
        let cells: Vec<&str> = row.iter().map(String::as_str).collect();
        line(&mut out, &cells);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forge::{Domain, Example, Image, ShiftTag};

    struct Fixed {
        classes: usize,
        pick: fn(&Tensor) -> usize,
    }

    impl Predictor for Fixed {
        fn num_classes(&self) -> usize {
            self.classes
        }

        fn scores(&self, image: &Tensor) -> Result<Vec<f64>> {
            let mut s = vec![0.0; self.classes];
            s[(self.pick)(image)] = 1.0;
            Ok(s)
        }
    }

    // the first pixel encodes the shape label, the second the texture label
    fn dataset(pairs: &[(u16, u16)]) -> Dataset {
        let mut ds = Dataset::new(1, 1, 2, 9);
        for &(s, t) in pairs {
            ds.examples.push(Example {
                image: Image::new(1, 1, 2, vec![s as f32, t as f32]),
                shape_label: s,
                texture_label: t,
                background_label: Some(s),
                domain: Domain::Source,
                shift: ShiftTag::clean(),
            });
        }
        ds
    }

    fn by_shape(t: &Tensor) -> usize {
        t.data()[0] as usize
    }

    fn by_texture(t: &Tensor) -> usize {
        t.data()[1] as usize
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0; 4]), 0);
    }

    #[test]
    fn accuracy_fixtures() {
        let ds = dataset(&[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6)]);
        let oracle = Fixed {
            classes: 9,
            pick: by_shape,
        };
        assert_eq!(
            accuracy(&oracle, &ds, Execution::Parallel).unwrap().rate(),
            1.0
        );
        let half = Fixed {
            classes: 9,
            pick: |t| {
                if t.data()[0] < 3.0 {
                    t.data()[0] as usize
                } else {
                    8
                }
            },
        };
        let c = accuracy(&half, &ds, Execution::Sequential).unwrap();
        assert_eq!((c.correct, c.n, c.rate()), (3, 6, 0.5));
        assert!(accuracy(&oracle, &dataset(&[]), Execution::Parallel).is_err());
        let wrong = Fixed {
            classes: 5,
            pick: by_shape,
        };
        assert!(accuracy(&wrong, &ds, Execution::Parallel).is_err());
    }

    #[test]
    fn gap_fixtures() {
        let rec = |acc| MetricsRecord {
            acc,
            ..MetricsRecord::new("x", Counts { correct: 0, n: 1 })
        };
        assert!((generalization_gap(&rec(0.9), &rec(0.7)) - 0.2).abs() < 1e-12);
        assert_eq!(generalization_gap(&rec(0.6), &rec(0.6)), 0.0);
        assert!(generalization_gap(&rec(0.5), &rec(0.8)) < 0.0);
    }

    #[test]
    fn cue_conflict_fixtures() {
        let ds = dataset(&[(0, 1), (2, 5), (7, 3)]);
        let (s, t) = cue_conflict_scores(
            &Fixed {
                classes: 9,
                pick: by_shape,
            },
            &ds,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!((s.rate(), t.rate()), (1.0, 0.0));
        let (s, t) = cue_conflict_scores(
            &Fixed {
                classes: 9,
                pick: by_texture,
            },
            &ds,
            Execution::Parallel,
        )
        .unwrap();
        assert_eq!((s.rate(), t.rate()), (0.0, 1.0));
        let clean = dataset(&[(1, 1)]);
        assert!(cue_conflict_scores(
            &Fixed {
                classes: 9,
                pick: by_shape
            },
            &clean,
            Execution::Parallel
        )
        .is_err());
    }

    #[test]
    fn corruption_fixtures() {
        let one = corruption_report(&[(Corruption::Contrast, 2, 0.7)]).unwrap();
        assert_eq!(one.mean, 0.7);
        assert_eq!(one.missing.len(), 4);
        let two = corruption_report(&[
            (Corruption::Pixelate, 1, 0.4),
            (Corruption::Pixelate, 2, 0.6),
        ])
        .unwrap();
        assert!((two.mean - 0.5).abs() < 1e-15);
        assert_eq!(two.per_type_mean(Corruption::Pixelate), Some(0.5));
    }

    #[test]
    fn jsonl_round_trip() {
        let iid = MetricsRecord::new("iid_val", Counts { correct: 9, n: 10 });
        let mut ood = MetricsRecord::new("corruption_contrast_s1", Counts { correct: 7, n: 10 })
            .with_gap(&iid);
        ood.corruption_type = Some("contrast".into());
        ood.severity = Some(1);
        let recs = vec![iid, ood];
        let text = to_jsonl(&recs);
        assert_eq!(text.lines().count(), 2);
        assert_eq!(from_jsonl(&text).unwrap(), recs);
        assert!(text.contains("\"gap_vs\":\"iid_val\""));
        let t = table(&recs);
        assert_eq!(t.lines().count(), 3);
    }
}
