//! Ranking and classification metrics.

use std::io::Write;

use serde::Serialize;

use crate::error::{GdgnnError, Result};

/// Area under the ROC curve as the Mann-Whitney rank statistic; ties count
/// one half.
pub fn auc(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(GdgnnError::EmptyEvalSet);
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        // ranks i+1 ..= j share their average
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let np = pos.len() as f64;
    Ok((rank_sum - np * (np + 1.0) / 2.0) / (np * neg.len() as f64))
}

/// Average precision: precision at each distinct threshold weighted by the
/// recall gained there.
pub fn average_precision(pos: &[f64], neg: &[f64]) -> Result<f64> {
    if pos.is_empty() {
        return Err(GdgnnError::EmptyEvalSet);
    }
    let mut all: Vec<(f64, bool)> = pos.iter().map(|&s| (s, true)).chain(neg.iter().map(|&s| (s, false))).collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (mut tp, mut seen, mut ap) = (0usize, 0usize, 0.0);
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        let mut gained = 0;
        while j < all.len() && all[j].0 == all[i].0 {
            gained += usize::from(all[j].1);
            j += 1;
        }
        tp += gained;
        seen = j;
        if gained > 0 {
            ap += (gained as f64 / pos.len() as f64) * (tp as f64 / seen as f64);
        }
        i = j;
    }
    debug_assert_eq!(seen, all.len());
    Ok(ap)
}

/// Fraction of positives scoring strictly above the `k`-th best negative.
/// With fewer than `k` negatives every positive counts as a hit.
pub fn hits_at_k(pos: &[f64], neg: &[f64], k: usize) -> Result<f64> {
    if pos.is_empty() || k == 0 {
        return Err(GdgnnError::EmptyEvalSet);
    }
    if neg.len() < k {
        return Ok(1.0);
    }
    let mut sorted = neg.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k - 1];
    Ok(pos.iter().filter(|&&s| s > threshold).count() as f64 / pos.len() as f64)
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if truth.is_empty() || predicted.len() != truth.len() {
        return Err(GdgnnError::EmptyEvalSet);
    }
    Ok(predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64)
}

/// Row-wise argmax, first index on ties.
pub fn argmax_rows(logits: &crate::tensor::Matrix) -> Vec<usize> {
    (0..logits.rows())
        .map(|r| {
            let row = logits.row(r);
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Final metrics of one evaluation split.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub loss: Option<f64>,
    pub auc: Option<f64>,
    pub ap: Option<f64>,
    pub hits: Option<(usize, f64)>,
    pub accuracy: Option<f64>,
}

impl Metrics {
    /// `(name, value)` pairs in a fixed order.
    pub fn entries(&self) -> Vec<(String, f64)> {
        let mut out = Vec::new();
        if let Some(v) = self.loss {
            out.push(("loss".to_string(), v));
        }
        if let Some(v) = self.auc {
            out.push(("auc".to_string(), v));
        }
        if let Some(v) = self.ap {
            out.push(("ap".to_string(), v));
        }
        if let Some((k, v)) = self.hits {
            out.push((format!("hits@{k}"), v));
        }
        if let Some(v) = self.accuracy {
            out.push(("accuracy".to_string(), v));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub epoch: usize,
    pub split: String,
    pub metric: String,
    pub value: f64,
}

/// Per-epoch metric history, written as `epoch,split,metric,value`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricLog {
    pub rows: Vec<MetricRow>,
}

impl MetricLog {
    pub fn push(&mut self, epoch: usize, split: &str, metrics: &Metrics) {
        for (metric, value) in metrics.entries() {
            self.rows.push(MetricRow {
                epoch,
                split: split.to_string(),
                metric,
                value,
            });
        }
    }

    pub fn series(&self, split: &str, metric: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.split == split && r.metric == metric)
            .map(|r| r.value)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,split,metric,value")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.epoch, r.split, r.metric, r.value)?;
        }
        Ok(())
    }
}
