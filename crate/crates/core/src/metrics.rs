//! Pixelwise segmentation metrics.

use serde::Serialize;

use crate::{Error, Mask, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl std::ops::AddAssign for Confusion {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

pub fn confusion(pred: &Mask, target: &Mask) -> Result<Confusion> {
    if pred.dims() != target.dims() {
        let (a, b) = (pred.dims(), target.dims());
        return Err(Error::shape("confusion", &[a.0, a.1], &[b.0, b.1]));
    }
    let mut c = Confusion::default();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Denominators that were zero; the matching metric is reported as 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Flags {
    /// No positive pixels in the target.
    pub no_positives: bool,
    /// No negative pixels in the target.
    pub no_negatives: bool,
    /// Prediction and target both empty.
    pub empty_union: bool,
    /// Nothing predicted as foreground.
    pub empty_prediction: bool,
    /// Probabilities given but AUC undefined for a single-class target.
    pub auc_undefined: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub counts: Confusion,
    pub acc: f64,
    pub se: f64,
    pub sp: f64,
    pub js: f64,
    pub dice: f64,
    pub f1: f64,
    pub auc: Option<f64>,
    pub flags: Flags,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (1.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Metrics from counts, with AUC when probabilities for the same pixels
/// are supplied.
pub fn report(c: Confusion, probs: Option<(&[f64], &Mask)>) -> Result<MetricsReport> {
    if c.total() == 0 {
        return Err(Error::invalid("report", "no pixels counted"));
    }
    let (acc, _) = ratio(c.tp + c.tn, c.total());
    let (se, no_positives) = ratio(c.tp, c.tp + c.fn_);
    let (sp, no_negatives) = ratio(c.tn, c.tn + c.fp);
    let (js, empty_union) = ratio(c.tp, c.tp + c.fp + c.fn_);
    let (dice, _) = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_);
    let mut flags = Flags {
        no_positives,
        no_negatives,
        empty_union,
        empty_prediction: c.tp + c.fp == 0,
        auc_undefined: false,
    };
    let auc = match probs {
        None => None,
        Some((p, target)) => {
            if p.len() as u64 != c.total() || target.len() != p.len() {
                return Err(Error::shape("report", &[p.len()], &[c.total() as usize]));
            }
            if no_positives || no_negatives {
                flags.auc_undefined = true;
                None
            } else {
                Some(auc(p, target.data())?)
            }
        }
    };
    Ok(MetricsReport {
        counts: c,
        acc,
        se,
        sp,
        js,
        dice,
        f1: dice,
        auc,
        flags,
    })
}

/// Area under the ROC curve by a threshold sweep over the distinct scores
/// with trapezoidal integration. Tied scores move both rates together,
/// which counts a tied positive/negative pair as half concordant.
pub fn auc(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::shape("auc", &[probs.len()], &[labels.len()]));
    }
    let pos = labels.iter().filter(|&&l| l != 0).count() as f64;
    let neg = labels.len() as f64 - pos;
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::invalid("auc", "target needs both classes"));
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let score = probs[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && probs[order[i]] == score {
            if labels[order[i]] != 0 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        area += (fp - fp0) * (tp + tp0) / 2.0;
    }
    Ok(area / (pos * neg))
}

/// The seven ratio metrics, used for cross-fold summaries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MetricValues {
    pub acc: f64,
    pub se: f64,
    pub sp: f64,
    pub js: f64,
    pub dice: f64,
    pub f1: f64,
    pub auc: Option<f64>,
}

impl MetricValues {
    fn of(r: &MetricsReport) -> Self {
        MetricValues {
            acc: r.acc,
            se: r.se,
            sp: r.sp,
            js: r.js,
            dice: r.dice,
            f1: r.f1,
            auc: r.auc,
        }
    }

    fn fields(&self) -> [Option<f64>; 7] {
        [Some(self.acc), Some(self.se), Some(self.sp), Some(self.js), Some(self.dice), Some(self.f1), self.auc]
    }
}

/// Mean and population standard deviation over reports (folds).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: MetricValues,
    pub std: MetricValues,
}

pub fn summarize(reports: &[MetricsReport]) -> Result<Summary> {
    if reports.is_empty() {
        return Err(Error::invalid("summarize", "no reports"));
    }
    let n = reports.len() as f64;
    let stat = |f: fn(&MetricsReport) -> f64| {
        let mean = reports.iter().map(f).sum::<f64>() / n;
        let var = reports.iter().map(|r| (f(r) - mean).powi(2)).sum::<f64>() / n;
        (mean, var.sqrt())
    };
    let (acc, acc_s) = stat(|r| r.acc);
    let (se, se_s) = stat(|r| r.se);
    let (sp, sp_s) = stat(|r| r.sp);
    let (js, js_s) = stat(|r| r.js);
    let (dice, dice_s) = stat(|r| r.dice);
    let (auc, auc_s) = if reports.iter().all(|r| r.auc.is_some()) {
        let (m, s) = stat(|r| r.auc.unwrap_or(0.0));
        (Some(m), Some(s))
    } else {
        (None, None)
    };
    Ok(Summary {
        count: reports.len(),
        mean: MetricValues { acc, se, sp, js, dice, f1: dice, auc },
        std: MetricValues {
            acc: acc_s,
            se: se_s,
            sp: sp_s,
            js: js_s,
            dice: dice_s,
            f1: dice_s,
            auc: auc_s,
        },
    })
}

pub const CSV_HEADER: &str = "label,tp,fp,tn,fn,acc,se,sp,js,dice,f1,auc";

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl MetricsReport {
    pub fn values(&self) -> MetricValues {
        MetricValues::of(self)
    }

    pub fn csv_row(&self, label: &str) -> String {
        let c = self.counts;
        let v: Vec<String> = self.values().fields().iter().map(|&x| cell(x)).collect();
        format!("{label},{},{},{},{},{}", c.tp, c.fp, c.tn, c.fn_, v.join(","))
    }
}

impl Summary {
    /// One row with `mean±std` cells and blank counts.
    pub fn csv_row(&self, label: &str) -> String {
        let cells: Vec<String> = self
            .mean
            .fields()
            .iter()
            .zip(self.std.fields())
            .map(|(m, s)| match (m, s) {
                (Some(m), Some(s)) => format!("{m:.6}±{s:.6}"),
                _ => String::new(),
            })
            .collect();
        format!("{label},,,,,{}", cells.join(","))
    }
}
