//! Predictive, calibration and OOD-separation metrics.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math;

/// Probabilities below this are clamped inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;
pub const DEFAULT_BINS: usize = 15;

/// Row-major `n x classes` probabilities with optional labels.
#[derive(Debug, Clone, Copy)]
pub struct PredictiveBatch<'a> {
    pub probs: &'a [f64],
    pub classes: usize,
    pub labels: Option<&'a [usize]>,
}

impl<'a> PredictiveBatch<'a> {
    /// Checks shapes, label range and that rows are distributions (1e-9).
    pub fn new(probs: &'a [f64], classes: usize, labels: Option<&'a [usize]>) -> Result<Self> {
        if classes == 0 || probs.len() % classes != 0 {
            return Err(invalid("probability matrix is not n x classes"));
        }
        let n = probs.len() / classes;
        for (i, row) in probs.chunks_exact(classes).enumerate() {
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 || row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(invalid(alloc::format!("row {i} is not a probability vector")));
            }
        }
        if let Some(l) = labels {
            if l.len() != n {
                return Err(invalid("label count differs from row count"));
            }
            if let Some(&bad) = l.iter().find(|&&y| y >= classes) {
                return Err(Error::OutOfRange { index: bad, len: classes });
            }
        }
        Ok(Self { probs, classes, labels })
    }

    pub fn len(&self) -> usize {
        self.probs.len() / self.classes
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = &'a [f64]> {
        self.probs.chunks_exact(self.classes)
    }

    fn labels(&self) -> Result<&'a [usize]> {
        let l = self.labels.ok_or_else(|| invalid("labels are required"))?;
        if l.is_empty() {
            return Err(Error::EmptyBatch);
        }
        Ok(l)
    }
}

/// `-sum p ln p` with `0 ln 0 = 0`.
pub fn entropy(row: &[f64]) -> f64 {
    -row.iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * math::ln(p))
        .sum::<f64>()
}

/// A metric value plus whether any probability was clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamped {
    pub value: f64,
    pub clamped: bool,
}

/// Mean negative log-probability of the true label.
pub fn nll(batch: &PredictiveBatch<'_>) -> Result<Clamped> {
    let labels = batch.labels()?;
    let mut clamped = false;
    let mut total = 0.0;
    for (row, &y) in batch.rows().zip(labels) {
        let p = row[y];
        if p < PROB_FLOOR {
            clamped = true;
        }
        total -= math::ln(p.max(PROB_FLOOR));
    }
    Ok(Clamped { value: total / labels.len() as f64, clamped })
}

/// Mean squared distance to the one-hot label.
pub fn brier(batch: &PredictiveBatch<'_>) -> Result<f64> {
    let labels = batch.labels()?;
    let total: f64 = batch
        .rows()
        .zip(labels)
        .map(|(row, &y)| {
            row.iter()
                .enumerate()
                .map(|(k, &p)| {
                    let e = if k == y { p - 1.0 } else { p };
                    e * e
                })
                .sum::<f64>()
        })
        .sum();
    Ok(total / labels.len() as f64)
}

/// Calibration errors over equal-width confidence bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub ece: f64,
    pub mce: f64,
    pub bins: usize,
}

/// ECE and MCE on max-probability confidence; bin `i` covers
/// `(i/M, (i+1)/M]` and confidence 0 falls in the first bin.
pub fn calibration(batch: &PredictiveBatch<'_>, bins: usize) -> Result<Calibration> {
    if bins == 0 {
        return Err(invalid("bins must be at least 1"));
    }
    let labels = batch.labels()?;
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut acc_sum = vec![0.0; bins];
    for (row, &y) in batch.rows().zip(labels) {
        let (pred, conf) = row
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, p)| if p > best.1 { (k, p) } else { best });
        let raw = math::ceil_usize(conf * bins as f64);
        let b = raw.saturating_sub(1).min(bins - 1);
        count[b] += 1;
        conf_sum[b] += conf;
        acc_sum[b] += if pred == y { 1.0 } else { 0.0 };
    }
    let n = labels.len() as f64;
    let (mut ece, mut mce) = (0.0, 0.0f64);
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let c = count[b] as f64;
        let gap = (acc_sum[b] / c - conf_sum[b] / c).abs();
        ece += c / n * gap;
        mce = mce.max(gap);
    }
    Ok(Calibration { ece, mce, bins })
}

pub fn ece(batch: &PredictiveBatch<'_>, bins: usize) -> Result<f64> {
    Ok(calibration(batch, bins)?.ece)
}

pub fn mce(batch: &PredictiveBatch<'_>, bins: usize) -> Result<f64> {
    Ok(calibration(batch, bins)?.mce)
}

fn check_scores(id: &[f64], ood: &[f64]) -> Result<()> {
    if id.is_empty() || ood.is_empty() {
        return Err(invalid("both score sets must be nonempty"));
    }
    if id.iter().chain(ood).any(|s| s.is_nan()) {
        return Err(invalid("scores must not be NaN"));
    }
    Ok(())
}

/// `P(s_id > s_ood) + P(s_id = s_ood) / 2` via midranks.
pub fn auroc(id: &[f64], ood: &[f64]) -> Result<f64> {
    check_scores(id, ood)?;
    let mut all: Vec<(f64, bool)> = id.iter().map(|&s| (s, true)).chain(ood.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum_id = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_id += mid * all[i..=j].iter().filter(|e| e.1).count() as f64;
        i = j + 1;
    }
    let (n1, n0) = (id.len() as f64, ood.len() as f64);
    Ok((rank_sum_id - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// Threshold at the lower nearest-rank 5th percentile of the ID scores:
/// the `ceil(0.05 n)`-th smallest (at least the first).
pub fn id_threshold_95(id: &[f64]) -> Result<f64> {
    if id.is_empty() {
        return Err(invalid("ID scores must be nonempty"));
    }
    let mut s = id.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = math::ceil_usize(0.05 * s.len() as f64).max(1);
    Ok(s[rank - 1])
}

/// Fraction of OOD scores at or above the 95%-TPR threshold.
pub fn fpr_at_95tpr(id: &[f64], ood: &[f64]) -> Result<f64> {
    check_scores(id, ood)?;
    let t = id_threshold_95(id)?;
    Ok(ood.iter().filter(|&&s| s >= t).count() as f64 / ood.len() as f64)
}

/// Negative predictive entropy per row (the ID score).
pub fn neg_entropy_scores(batch: &PredictiveBatch<'_>) -> Vec<f64> {
    batch.rows().map(|r| -entropy(r)).collect()
}
