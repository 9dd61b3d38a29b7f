//! Adaptive Benjamini–Hochberg adjustment, rejection, and FDP bookkeeping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::PValueSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedPValues {
    /// Adjusted p-values, in the original input order.
    pub adjusted: Vec<f64>,
    /// `order[r]` is the original index of the r-th smallest p-value.
    pub order: Vec<usize>,
    pub pi0_used: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionSet {
    /// Original indices, ascending.
    pub rejected: Vec<usize>,
}

impl RejectionSet {
    pub fn len(&self) -> usize {
        self.rejected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rejected.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.rejected.binary_search(&i).is_ok()
    }

    pub fn is_subset_of(&self, other: &RejectionSet) -> bool {
        self.rejected.iter().all(|&i| other.contains(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub rejections: usize,
    pub false_discoveries: usize,
    pub fdp: f64,
}

/// Floor a π₀ estimate at 1/m so a zero estimate cannot reject everything.
pub fn floor_pi0(pi0: f64, m: usize) -> f64 {
    pi0.max(1.0 / m as f64)
}

fn sorted_order(p: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    // stable, so ties keep their original index order
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    order
}

/// Running suffix minimum of π₀·m·p₍ⱼ₎/j, in sorted order and before capping at 1.
fn raw_adjust(p: &[f64], order: &[usize], pi0: f64) -> Vec<f64> {
    let m = p.len();
    let mut out = vec![0.0; m];
    let mut running = f64::INFINITY;
    for r in (0..m).rev() {
        let v = pi0 * m as f64 * p[order[r]] / (r + 1) as f64;
        running = running.min(v);
        out[r] = running;
    }
    out
}

/// Adaptive BH adjusted p-values; `pi0 = 1` gives the classical procedure.
pub fn bh_adjust(pvals: &PValueSet, pi0: f64) -> Result<AdjustedPValues> {
    if !(pi0 > 0.0 && pi0 <= 1.0) {
        return Err(Error::param(format!("pi0 must lie in (0, 1], got {pi0}")));
    }
    let p = pvals.values();
    let order = sorted_order(p);
    let raw = raw_adjust(p, &order, pi0);
    let mut adjusted = vec![0.0; p.len()];
    for (r, &i) in order.iter().enumerate() {
        adjusted[i] = raw[r].min(1.0);
    }
    Ok(AdjustedPValues {
        adjusted,
        order,
        pi0_used: pi0,
    })
}

/// Indices whose adjusted p-value is at most `q`.
pub fn reject_at(adj: &AdjustedPValues, q: f64) -> RejectionSet {
    RejectionSet {
        rejected: adj
            .adjusted
            .iter()
            .enumerate()
            .filter(|(_, a)| **a <= q)
            .map(|(i, _)| i)
            .collect(),
    }
}

/// R, V and FDP = V/R (0 when nothing is rejected) against null flags.
pub fn confusion(rej: &RejectionSet, is_null: &[bool]) -> Result<ConfusionCounts> {
    if let Some(&i) = rej.rejected.iter().find(|&&i| i >= is_null.len()) {
        return Err(Error::input(format!(
            "rejected index {i} outside truth labels of length {}",
            is_null.len()
        )));
    }
    let r = rej.len();
    let v = rej.rejected.iter().filter(|&&i| is_null[i]).count();
    Ok(ConfusionCounts {
        rejections: r,
        false_discoveries: v,
        fdp: if r == 0 { 0.0 } else { v as f64 / r as f64 },
    })
}
