//! Binary-classification evaluation: confusion matrix, per-class
//! precision/recall/F1, ROC and precision-recall curves with trapezoidal AUC.
//!
//! The positive class is Pneumonia (label 1) throughout, and an item is
//! predicted positive iff its score is `>=` the threshold.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datapipe::Label;
use crate::error::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tp: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tn + self.fp + self.fn_ + self.tp
    }

    pub fn correct(&self) -> u64 {
        self.tn + self.tp
    }

    /// `(tn + tp) / total`, from integer counts.
    pub fn accuracy(&self) -> f64 {
        self.correct() as f64 / self.total() as f64
    }

    /// Items whose true class is `label` but were predicted as the other class.
    pub fn misclassified(&self, label: Label) -> u64 {
        match label {
            Label::Normal => self.fp,
            Label::Pneumonia => self.fn_,
        }
    }
}

fn validate(scores: &[f64], labels: &[u8]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::input("no scores to evaluate"));
    }
    if scores.len() != labels.len() {
        return Err(Error::input(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(l) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::input(format!("label {l} is not binary")));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::input(format!("score {s} is not finite")));
    }
    Ok(())
}

pub fn confusion_at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> Result<ConfusionMatrix> {
    validate(scores, labels)?;
    let mut cm = ConfusionMatrix::default();
    for (&s, &y) in scores.iter().zip(labels) {
        match (y == 1, s >= threshold) {
            (false, false) => cm.tn += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (true, true) => cm.tp += 1,
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of items whose true class is this one.
    pub support: u64,
    /// Set when any ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

pub fn precision_recall_f1(cm: &ConfusionMatrix, class: Label) -> ClassMetrics {
    let (correct, predicted, actual) = match class {
        Label::Pneumonia => (cm.tp, cm.tp + cm.fp, cm.tp + cm.fn_),
        Label::Normal => (cm.tn, cm.tn + cm.fn_, cm.tn + cm.fp),
    };
    let mut degenerate = false;
    let mut ratio = |num: f64, den: f64| {
        if den == 0.0 {
            degenerate = true;
            0.0
        } else {
            num / den
        }
    };
    let precision = ratio(correct as f64, predicted as f64);
    let recall = ratio(correct as f64, actual as f64);
    let f1 = ratio(2.0 * precision * recall, precision + recall);
    ClassMetrics {
        precision,
        recall,
        f1,
        support: actual,
        degenerate,
    }
}

/// One threshold step of a curve. `x`/`y` are (FPR, TPR) for ROC and
/// (recall, precision) for PR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub x: f64,
    pub y: f64,
}

/// Trapezoidal area under a polyline given in increasing-`x` order.
pub fn trapezoid(points: &[CurvePoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].x - w[0].x) * (w[1].y + w[0].y) / 2.0)
        .sum()
}

/// Cumulative (threshold, tp, fp) after admitting each group of equal
/// scores, highest score first.
fn sweep(scores: &[f64], labels: &[u8]) -> Vec<(f64, u64, u64)> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut steps = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        if labels[i] == 1 {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_group = order.get(k + 1).is_none_or(|&j| scores[j] != scores[i]);
        if last_of_group {
            steps.push((scores[i], tp, fp));
        }
    }
    steps
}

fn class_totals(labels: &[u8]) -> (u64, u64) {
    let pos = labels.iter().filter(|&&l| l == 1).count() as u64;
    (pos, labels.len() as u64 - pos)
}

/// ROC points from `(0, 0)` (threshold `+inf`) through every distinct score
/// to `(1, 1)`, and the trapezoidal AUC. Tied scores form one step, which
/// makes the AUC equal to the Mann-Whitney statistic with ties counted as 1/2.
pub fn roc_curve_auc(scores: &[f64], labels: &[u8]) -> Result<(Vec<CurvePoint>, f64)> {
    validate(scores, labels)?;
    let (pos, neg) = class_totals(labels);
    if pos == 0 || neg == 0 {
        return Err(Error::input(
            "ROC AUC needs at least one positive and one negative label",
        ));
    }
    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 0.0,
    }];
    points.extend(sweep(scores, labels).into_iter().map(|(t, tp, fp)| CurvePoint {
        threshold: t,
        x: fp as f64 / neg as f64,
        y: tp as f64 / pos as f64,
    }));
    let auc = trapezoid(&points);
    Ok((points, auc))
}

/// Precision-recall points in increasing-recall order, starting from the
/// `(recall 0, precision 1)` anchor at threshold `+inf`, and the trapezoidal
/// area over recall.
pub fn pr_curve_auc(scores: &[f64], labels: &[u8]) -> Result<(Vec<CurvePoint>, f64)> {
    validate(scores, labels)?;
    let (pos, _) = class_totals(labels);
    if pos == 0 {
        return Err(Error::input("PR AUC needs at least one positive label"));
    }
    let mut points = vec![CurvePoint {
        threshold: f64::INFINITY,
        x: 0.0,
        y: 1.0,
    }];
    points.extend(sweep(scores, labels).into_iter().map(|(t, tp, fp)| CurvePoint {
        threshold: t,
        x: tp as f64 / pos as f64,
        y: tp as f64 / (tp + fp) as f64,
    }));
    let auc = trapezoid(&points);
    Ok((points, auc))
}

/// Step-wise average precision, `sum (R_k - R_{k-1}) * P_k`.
pub fn average_precision(pr_points: &[CurvePoint]) -> f64 {
    pr_points.windows(2).map(|w| (w[1].x - w[0].x) * w[1].y).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub normal: ClassMetrics,
    pub pneumonia: ClassMetrics,
}

/// Every number reported for one evaluated split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub threshold: f64,
    pub total: u64,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub per_class: PerClass,
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub average_precision: f64,
    #[serde(skip)]
    pub roc: Vec<CurvePoint>,
    #[serde(skip)]
    pub pr: Vec<CurvePoint>,
}

impl EvaluationReport {
    pub fn compute(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Self> {
        let confusion = confusion_at_threshold(scores, labels, threshold)?;
        let (roc, roc_auc) = roc_curve_auc(scores, labels)?;
        let (pr, pr_auc) = pr_curve_auc(scores, labels)?;
        Ok(EvaluationReport {
            threshold,
            total: confusion.total(),
            accuracy: confusion.accuracy(),
            per_class: PerClass {
                normal: precision_recall_f1(&confusion, Label::Normal),
                pneumonia: precision_recall_f1(&confusion, Label::Pneumonia),
            },
            confusion,
            roc_auc,
            pr_auc,
            average_precision: average_precision(&pr),
            roc,
            pr,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// `threshold,fpr,tpr` rows.
    pub fn roc_csv(&self) -> String {
        curve_csv("threshold,fpr,tpr", &self.roc)
    }

    /// `threshold,recall,precision` rows.
    pub fn pr_csv(&self) -> String {
        curve_csv("threshold,recall,precision", &self.pr)
    }
}

fn curve_csv(header: &str, points: &[CurvePoint]) -> String {
    let mut out = format!("{header}\n");
    for p in points {
        writeln!(out, "{},{},{}", p.threshold, p.x, p.y).expect("write to string");
    }
    out
}

/// Parses a curve CSV written by [`EvaluationReport::roc_csv`] or
/// [`EvaluationReport::pr_csv`].
pub fn parse_curve_csv(text: &str) -> Result<Vec<CurvePoint>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let fields: Vec<f64> = line
                .split(',')
                .map(|f| f.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::input(format!("bad curve row {line:?}: {e}")))?;
            match fields[..] {
                [threshold, x, y] => Ok(CurvePoint { threshold, x, y }),
                _ => Err(Error::input(format!("curve row {line:?} needs 3 fields"))),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_classifier() {
        let scores = [1.0, 0.0, 1.0, 0.0];
        let labels = [1, 0, 1, 0];
        let cm = confusion_at_threshold(&scores, &labels, 0.5).unwrap();
        assert_eq!((cm.fp, cm.fn_), (0, 0));
        for class in Label::ALL {
            let m = precision_recall_f1(&cm, class);
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
            assert!(!m.degenerate);
        }
        assert_eq!(roc_curve_auc(&scores, &labels).unwrap().1, 1.0);
        assert_eq!(pr_curve_auc(&scores, &labels).unwrap().1, 1.0);
    }

    #[test]
    fn threshold_ties_are_positive() {
        let cm = confusion_at_threshold(&[0.5], &[0], 0.5).unwrap();
        assert_eq!(cm.fp, 1);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(confusion_at_threshold(&[], &[], 0.5), Err(Error::Input(_))));
        assert!(confusion_at_threshold(&[0.1], &[2], 0.5).is_err());
        assert!(confusion_at_threshold(&[0.1, 0.2], &[1], 0.5).is_err());
        assert!(confusion_at_threshold(&[f64::NAN], &[1], 0.5).is_err());
        assert!(roc_curve_auc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(pr_curve_auc(&[0.1, 0.2], &[0, 0]).is_err());
        assert!(pr_curve_auc(&[0.1, 0.2], &[1, 1]).is_ok());
    }

    #[test]
    fn no_predicted_positives_is_degenerate() {
        let cm = ConfusionMatrix {
            tn: 3,
            fp: 0,
            fn_: 2,
            tp: 0,
        };
        let m = precision_recall_f1(&cm, Label::Pneumonia);
        assert_eq!(m.precision, 0.0);
        assert!(m.degenerate);
        assert!(!precision_recall_f1(&cm, Label::Normal).degenerate);
    }

    #[test]
    fn per_class_values_from_counts() {
        let cm = ConfusionMatrix {
            tn: 221,
            fp: 13,
            fn_: 39,
            tp: 351,
        };
        // Scalar reference from the count definitions.
        let harmonic = |p: f64, r: f64| 2.0 * p * r / (p + r);
        let (pp, pr) = (351.0 / 364.0, 351.0 / 390.0);
        let (np, nr) = (221.0 / 260.0, 221.0 / 234.0);
        let pos = precision_recall_f1(&cm, Label::Pneumonia);
        let neg = precision_recall_f1(&cm, Label::Normal);
        for (got, want) in [
            (pos.precision, pp),
            (pos.recall, pr),
            (pos.f1, harmonic(pp, pr)),
            (neg.precision, np),
            (neg.recall, nr),
            (neg.f1, harmonic(np, nr)),
        ] {
            assert!((got - want).abs() < 1e-15, "{got} vs {want}");
        }
        assert_eq!((pos.support, neg.support), (390, 234));
    }

    #[test]
    fn identical_scores_give_half() {
        let (points, auc) = roc_curve_auc(&[0.3; 6], &[1, 0, 1, 0, 0, 1]).unwrap();
        assert_eq!(auc, 0.5);
        assert_eq!(points.len(), 2);
    }

    #[test]
    fn small_mann_whitney_case() {
        // pos {0.8, 0.4}, neg {0.6, 0.2}: concordant pairs (0.8,0.6) (0.8,0.2) (0.4,0.2) = 3 of 4.
        let (points, auc) = roc_curve_auc(&[0.8, 0.4, 0.6, 0.2], &[1, 1, 0, 0]).unwrap();
        assert!((auc - 0.75).abs() < 1e-15);
        let first = points.first().unwrap();
        let last = points.last().unwrap();
        assert_eq!((first.x, first.y), (0.0, 0.0));
        assert_eq!((last.x, last.y), (1.0, 1.0));
        assert!(points.windows(2).all(|w| w[1].x >= w[0].x && w[1].y >= w[0].y));
    }

    #[test]
    fn pr_curve_hand_enumeration() {
        // scores 0.9 (pos), 0.5 (neg), 0.1 (pos):
        //   t=inf: r=0,   p=1
        //   t=0.9: r=1/2, p=1
        //   t=0.5: r=1/2, p=1/2
        //   t=0.1: r=1,   p=2/3
        // area = 0.5*1 + 0 + 0.5*(1/2 + 2/3)/2 = 0.5 + 7/24
        let (points, auc) = pr_curve_auc(&[0.9, 0.5, 0.1], &[1, 0, 1]).unwrap();
        assert_eq!(points.len(), 4);
        assert!((auc - (0.5 + 7.0 / 24.0)).abs() < 1e-15);
        // AP = 0.5*1 + 0 + 0.5*(2/3)
        assert!((average_precision(&points) - (0.5 + 1.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn duplicate_pair_keeps_thresholds() {
        let scores = vec![0.9, 0.5, 0.1, 0.7];
        let labels = vec![1, 0, 1, 0];
        let (a, _) = pr_curve_auc(&scores, &labels).unwrap();
        let mut s2 = scores.clone();
        let mut l2 = labels.clone();
        s2.push(0.5);
        l2.push(0);
        let (b, _) = pr_curve_auc(&s2, &l2).unwrap();
        let thresholds = |p: &[CurvePoint]| p.iter().map(|c| c.threshold).collect::<Vec<_>>();
        assert_eq!(thresholds(&a), thresholds(&b));
    }

    #[test]
    fn report_is_consistent_and_curves_round_trip() {
        let scores = [0.9, 0.8, 0.3, 0.6, 0.2, 0.55, 0.1];
        let labels = [1, 1, 1, 0, 0, 1, 0];
        let r = EvaluationReport::compute(&scores, &labels, 0.5).unwrap();
        assert_eq!(r.total, 7);
        assert_eq!(r.accuracy, (r.confusion.tn + r.confusion.tp) as f64 / 7.0);
        let roc = parse_curve_csv(&r.roc_csv()).unwrap();
        assert_eq!(roc, r.roc);
        assert!((trapezoid(&roc) - r.roc_auc).abs() < 1e-12);
        let pr = parse_curve_csv(&r.pr_csv()).unwrap();
        assert!((trapezoid(&pr) - r.pr_auc).abs() < 1e-12);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(json["confusion"]["fn"], 1);
        assert_eq!(json["total"], 7);
    }
}
