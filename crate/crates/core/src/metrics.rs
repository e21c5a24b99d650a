//! Accuracy and IoU of certified label maps against ground truth.
//!
//! Abstentions count as errors for `acc_strict` and are skipped by
//! `acc_nonabstain`. In IoU an abstained pixel is a false negative for its
//! ground-truth class and a false positive for none.

use crate::error::{Error, Result};
use crate::image::LabelMap;

/// Column order of metric rows written by the command-line tools.
pub const CSV_COLUMNS: [&str; 13] = [
    "sigma",
    "radius",
    "acc_strict",
    "acc_nonabstain",
    "miou",
    "abstain_rate",
    "n",
    "n0",
    "alpha",
    "tau",
    "denoise_mode",
    "model",
    "seed",
];

/// Name of the IoU convention for abstentions, recorded in run metadata.
pub const IOU_CONVENTION: &str = "fn_only";

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub acc_strict: f64,
    /// Accuracy over non-abstained pixels; 0 when every pixel abstains.
    pub acc_nonabstain: f64,
    pub miou: f64,
    pub abstain_rate: f64,
    /// IoU per class; `None` for classes absent from the ground truth.
    pub per_class_iou: Vec<Option<f64>>,
}

/// Per-class confusion tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    /// Ground-truth pixels of this class.
    pub support: u64,
}

pub fn class_counts(
    pred: &LabelMap,
    gt: &LabelMap,
    num_classes: usize,
) -> Result<Vec<ClassCounts>> {
    check_inputs(pred, gt, num_classes)?;
    let mut counts = vec![ClassCounts::default(); num_classes];
    for (p, g) in pred.iter().zip(gt.iter()) {
        let g = g.expect("checked") as usize;
        counts[g].support += 1;
        match p {
            Some(p) if *p as usize == g => counts[g].tp += 1,
            Some(p) => {
                counts[g].fn_ += 1;
                counts[*p as usize].fp += 1;
            }
            None => counts[g].fn_ += 1,
        }
    }
    Ok(counts)
}

fn check_inputs(pred: &LabelMap, gt: &LabelMap, num_classes: usize) -> Result<()> {
    if !pred.same_dims(gt.height(), gt.width()) {
        return Err(Error::shape(format!(
            "prediction is {}x{}, ground truth is {}x{}",
            pred.height(),
            pred.width(),
            gt.height(),
            gt.width()
        )));
    }
    if pred.is_empty() {
        return Err(Error::domain("cannot evaluate an empty label map"));
    }
    if gt.iter().any(Option::is_none) {
        return Err(Error::domain("ground truth contains abstentions"));
    }
    let too_big = |m: &LabelMap| m.max_class().is_some_and(|c| c as usize >= num_classes);
    if too_big(gt) || too_big(pred) {
        return Err(Error::domain(format!(
            "labels exceed the class count {num_classes}"
        )));
    }
    Ok(())
}

pub fn evaluate(pred: &LabelMap, gt: &LabelMap, num_classes: usize) -> Result<EvalReport> {
    let counts = class_counts(pred, gt, num_classes)?;
    let total = pred.len() as f64;
    let abstained = pred.abstain_count();
    let correct: u64 = counts.iter().map(|c| c.tp).sum();
    let answered = pred.len() - abstained;

    let per_class_iou: Vec<Option<f64>> = counts
        .iter()
        .map(|c| (c.support > 0).then(|| c.tp as f64 / (c.tp + c.fp + c.fn_) as f64))
        .collect();
    let present: Vec<f64> = per_class_iou.iter().flatten().copied().collect();

    Ok(EvalReport {
        acc_strict: correct as f64 / total,
        acc_nonabstain: if answered == 0 {
            0.0
        } else {
            correct as f64 / answered as f64
        },
        miou: present.iter().sum::<f64>() / present.len() as f64,
        abstain_rate: abstained as f64 / total,
        per_class_iou,
    })
}
