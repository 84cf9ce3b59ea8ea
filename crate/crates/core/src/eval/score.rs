use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::normalize::normalize_disease_name;

/// Micro-averaged precision/recall/F1 with the raw counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn norm_set(items: &BTreeSet<(String, String)>) -> BTreeSet<(String, String)> {
    items
        .iter()
        .map(|(r, d)| (r.clone(), normalize_disease_name(d).unwrap_or_else(|_| d.clone())))
        .collect()
}

/// Scores `(record_id, disease)` instances by exact normalized equality.
/// When both sets are empty every score is 1; otherwise an undefined ratio
/// is 0.
pub fn score(predictions: &BTreeSet<(String, String)>, gold: &BTreeSet<(String, String)>) -> Scores {
    let p = norm_set(predictions);
    let g = norm_set(gold);
    let tp = p.intersection(&g).count();
    let fp = p.len() - tp;
    let fn_ = g.len() - tp;
    from_counts(tp, fp, fn_)
}

pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Scores {
    if tp + fp == 0 && tp + fn_ == 0 {
        return Scores { precision: 1.0, recall: 1.0, f1: 1.0, tp, fp, fn_ };
    }
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Scores { precision, recall, f1, tp, fp, fn_ }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(items: &[(&str, &str)]) -> BTreeSet<(String, String)> {
        items.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    #[test]
    fn hand_counts() {
        let s = from_counts(3, 1, 2);
        assert_eq!(s.precision, 0.75);
        assert_eq!(s.recall, 0.6);
        assert!((s.f1 - 2.0 * 0.75 * 0.6 / 1.35).abs() < 1e-12);
    }

    #[test]
    fn conventions() {
        let empty = set(&[]);
        let one = set(&[("r", "肺炎")]);
        assert_eq!(score(&empty, &empty).f1, 1.0);
        assert_eq!(score(&one, &one).f1, 1.0);
        let s = score(&empty, &one);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
        let s = score(&one, &empty);
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn names_are_normalized() {
        assert_eq!(score(&set(&[("r", "肺炎 ")]), &set(&[("r", "肺炎")])).tp, 1);
    }
}
