//! Confusion-matrix accumulation, per-class and mean IoU, report emission.

pub mod palette;

use std::path::Path;

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::labels::{Labels, IGNORE_ID};
use crate::model::Model;
use crate::ops::{self, BnMode};
use crate::tape::Tape;

/// K x K counts: `counts[gt][pred]`, ignored pixels excluded.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        ConfusionMatrix { k, counts: vec![0; k * k] }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `counts[gt][pred] += 1` for every pixel whose ground truth is not the
    /// ignore id.
    pub fn accumulate(&mut self, ground_truth: &Labels, prediction: &Labels) -> Result<()> {
        if (ground_truth.n, ground_truth.h, ground_truth.w)
            != (prediction.n, prediction.h, prediction.w)
        {
            return Err(Error::Shape("confusion accumulate: extent mismatch".into()));
        }
        for (&g, &p) in ground_truth.ids.iter().zip(&prediction.ids) {
            if g == IGNORE_ID {
                continue;
            }
            if g as usize >= self.k {
                return Err(Error::Value(format!("ground-truth id {g} out of range")));
            }
            if p as usize >= self.k {
                return Err(Error::Value(format!("prediction id {p} out of range")));
            }
            self.counts[g as usize * self.k + p as usize] += 1;
        }
        Ok(())
    }

    /// Elementwise add; commutative and associative, so per-sample matrices
    /// can be merged in any grouping.
    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if self.k != other.k {
            return Err(Error::Shape("confusion merge: class counts differ".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Per-class `TP / (TP + FP + FN)`; classes that never occur in ground
    /// truth or prediction are excluded (`None`) and the mean runs over the
    /// evaluated classes only.
    pub fn iou(&self) -> IouSummary {
        let mut per_class = Vec::with_capacity(self.k);
        let mut sum = 0.0;
        let mut evaluated = 0usize;
        for c in 0..self.k {
            let tp = self.count(c, c);
            let fp: u64 = (0..self.k).filter(|&g| g != c).map(|g| self.count(g, c)).sum();
            let fn_: u64 = (0..self.k).filter(|&p| p != c).map(|p| self.count(c, p)).sum();
            let denom = tp + fp + fn_;
            if denom == 0 {
                per_class.push(None);
            } else {
                let iou = tp as f64 / denom as f64;
                per_class.push(Some(iou));
                sum += iou;
                evaluated += 1;
            }
        }
        let mean = if evaluated == 0 { None } else { Some(sum / evaluated as f64) };
        IouSummary { per_class, mean }
    }

    pub fn pixel_accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        let diag: u64 = (0..self.k).map(|c| self.count(c, c)).sum();
        diag as f64 / total as f64
    }
}

#[derive(Clone, Debug)]
pub struct IouSummary {
    pub per_class: Vec<Option<f64>>,
    pub mean: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassRow {
    pub id: usize,
    pub name: String,
    /// Absent for classes never seen in ground truth or prediction.
    pub iou: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub classes: Vec<ClassRow>,
    pub mean_iou: Option<f64>,
    pub pixel_accuracy: f64,
    pub num_samples: usize,
}

impl EvalReport {
    pub fn from_matrix(cm: &ConfusionMatrix, names: &[String], num_samples: usize) -> Self {
        let summary = cm.iou();
        let classes = summary
            .per_class
            .iter()
            .enumerate()
            .map(|(id, iou)| ClassRow {
                id,
                name: names.get(id).cloned().unwrap_or_else(|| format!("class{id}")),
                iou: *iou,
            })
            .collect();
        EvalReport {
            classes,
            mean_iou: summary.mean,
            pixel_accuracy: cm.pixel_accuracy(),
            num_samples,
        }
    }

    /// Fixed-width table with one row per class and a mean row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<16} {:>8}\n", "Object", "IoU%"));
        for row in &self.classes {
            match row.iou {
                Some(iou) => {
                    out.push_str(&format!("{:<16} {:>8.2}\n", row.name, iou * 100.0));
                }
                None => out.push_str(&format!("{:<16} {:>8}\n", row.name, "-")),
            }
        }
        match self.mean_iou {
            Some(m) => out.push_str(&format!("{:<16} {:>8.2}\n", "Mean IoU", m * 100.0)),
            None => out.push_str(&format!("{:<16} {:>8}\n", "Mean IoU", "-")),
        }
        out.push_str(&format!("{:<16} {:>8.2}\n", "Pixel acc%", self.pixel_accuracy * 100.0));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub struct EvalOptions<'a> {
    /// Write one colorized prediction image per sample here.
    pub dump_predictions: Option<&'a Path>,
    pub palette: Vec<[u8; 3]>,
}

impl Default for EvalOptions<'_> {
    fn default() -> Self {
        EvalOptions { dump_predictions: None, palette: Vec::new() }
    }
}

/// Frozen-BN inference over a dataset split: argmax predictions, one
/// confusion matrix, and a table shaped like the quantitative-results tables.
pub fn evaluate(
    model: &mut Model<f32>,
    data: &Dataset,
    class_names: &[String],
    opts: &EvalOptions,
) -> Result<EvalReport> {
    let k = model.config.num_classes;
    if k != class_names.len() {
        return Err(Error::Value(format!(
            "model has {k} classes but the class map names {}",
            class_names.len()
        )));
    }
    model.set_bn_mode(BnMode::Frozen);
    let mut tape = Tape::paused();
    let mut cm = ConfusionMatrix::new(k);
    for (i, sample) in data.samples.iter().enumerate() {
        let rgb = sample.rgb_batch()?;
        let depth = sample.depth_batch()?;
        let logits = model.forward(
            &mut tape,
            model.config.has_rgb().then_some(&rgb),
            model.config.has_depth().then_some(&depth),
        )?;
        let pred = ops::argmax_classes(&logits)?;
        cm.accumulate(&sample.labels, &pred)?;
        if let Some(dir) = opts.dump_predictions {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let name = data.names.get(i).cloned().unwrap_or_else(|| format!("sample{i}"));
            crate::data::sample::write_colorized(
                &dir.join(format!("{name}_pred.png")),
                &pred,
                &opts.palette,
            )?;
        }
    }
    Ok(EvalReport::from_matrix(&cm, class_names, data.len()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_is_diagonal() {
        let gt = Labels::new(1, 2, 2, vec![0, 1, 2, 1]).unwrap();
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&gt, &gt.clone()).unwrap();
        let s = cm.iou();
        assert!(s.per_class.iter().all(|c| c.is_none() || c.unwrap() == 1.0));
        assert_eq!(s.mean, Some(1.0));
        assert_eq!(cm.total(), 4);
    }

    #[test]
    fn fully_ignored_accumulates_nothing() {
        let gt = Labels::filled(1, 2, 2, IGNORE_ID);
        let pred = Labels::filled(1, 2, 2, 0);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&gt, &pred).unwrap();
        assert_eq!(cm.total(), 0);
        assert_eq!(cm.iou().mean, None);
    }

    #[test]
    fn worked_counting_example() {
        // gt [[0,0],[1,1]], pred [[0,1],[1,1]] -> counts [[1,1],[0,2]]
        let gt = Labels::new(1, 2, 2, vec![0, 0, 1, 1]).unwrap();
        let pred = Labels::new(1, 2, 2, vec![0, 1, 1, 1]).unwrap();
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&gt, &pred).unwrap();
        assert_eq!(cm.count(0, 0), 1);
        assert_eq!(cm.count(0, 1), 1);
        assert_eq!(cm.count(1, 0), 0);
        assert_eq!(cm.count(1, 1), 2);
        // IoU = [1/2, 2/3], mean 7/12
        let s = cm.iou();
        assert!((s.per_class[0].unwrap() - 0.5).abs() < 1e-15);
        assert!((s.per_class[1].unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((s.mean.unwrap() - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn absent_class_is_excluded_from_mean() {
        let gt = Labels::new(1, 1, 2, vec![0, 0]).unwrap();
        let pred = Labels::new(1, 1, 2, vec![0, 0]).unwrap();
        let mut cm = ConfusionMatrix::new(3);
        cm.accumulate(&gt, &pred).unwrap();
        let s = cm.iou();
        assert_eq!(s.per_class[1], None);
        assert_eq!(s.per_class[2], None);
        assert_eq!(s.mean, Some(1.0));
    }

    #[test]
    fn merge_matches_one_shot_accumulation() {
        let gt_a = Labels::new(1, 1, 3, vec![0, 1, 1]).unwrap();
        let pr_a = Labels::new(1, 1, 3, vec![0, 1, 0]).unwrap();
        let gt_b = Labels::new(1, 1, 3, vec![1, 0, IGNORE_ID]).unwrap();
        let pr_b = Labels::new(1, 1, 3, vec![1, 1, 0]).unwrap();

        let mut merged = ConfusionMatrix::new(2);
        let mut part_a = ConfusionMatrix::new(2);
        let mut part_b = ConfusionMatrix::new(2);
        part_a.accumulate(&gt_a, &pr_a).unwrap();
        part_b.accumulate(&gt_b, &pr_b).unwrap();
        merged.merge(&part_a).unwrap();
        merged.merge(&part_b).unwrap();

        let mut oneshot = ConfusionMatrix::new(2);
        oneshot.accumulate(&gt_a, &pr_a).unwrap();
        oneshot.accumulate(&gt_b, &pr_b).unwrap();
        assert_eq!(merged, oneshot);
    }

    #[test]
    fn constant_single_class_on_balanced_split() {
        // two classes, balanced, predict all class 0: IoU = [0.5, 0], mean 0.25
        let gt = Labels::new(1, 1, 4, vec![0, 0, 1, 1]).unwrap();
        let pred = Labels::filled(1, 1, 4, 0);
        let mut cm = ConfusionMatrix::new(2);
        cm.accumulate(&gt, &pred).unwrap();
        let s = cm.iou();
        assert!((s.per_class[0].unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(s.per_class[1], Some(0.0));
        assert!((s.mean.unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn report_has_one_row_per_class_plus_mean() {
        let mut cm = ConfusionMatrix::new(3);
        let gt = Labels::new(1, 1, 3, vec![0, 1, 2]).unwrap();
        cm.accumulate(&gt, &gt.clone()).unwrap();
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let report = EvalReport::from_matrix(&cm, &names, 1);
        assert_eq!(report.classes.len(), 3);
        let text = report.to_text();
        assert_eq!(text.lines().count(), 1 + 3 + 2, "header + rows + mean + acc");
        assert!(text.contains("Mean IoU"));
        let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(json["classes"].as_array().unwrap().len(), 3);
    }
}
