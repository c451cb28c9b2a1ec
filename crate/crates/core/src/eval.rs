//! Span-based evaluation: a predicted span counts only if a gold span with
//! the same start, end and type exists in the same sentence.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::EntitySpan;
use crate::error::{Error, Result};

/// Type key used for micro-averaged rows in reports.
pub const ALL_TYPES: &str = "ALL";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, rhs: Self) {
        self.tp += rhs.tp;
        self.fp += rhs.fp;
        self.fn_ += rhs.fn_;
    }
}

/// Precision, recall and F1 with zero-denominator ratios defined as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl From<Counts> for Prf {
    fn from(c: Counts) -> Self {
        let precision = ratio(c.tp, c.tp + c.fp);
        let recall = ratio(c.tp, c.tp + c.fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf {
            tp: c.tp,
            fp: c.fp,
            fn_: c.fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpanReport {
    pub micro: Prf,
    pub per_type: BTreeMap<String, Prf>,
}

/// One line of the machine-readable report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub corpus: String,
    #[serde(rename = "type")]
    pub etype: String,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
}

impl SpanReport {
    pub fn records(&self, corpus: &str) -> Vec<EvalRecord> {
        std::iter::once((ALL_TYPES, &self.micro))
            .chain(self.per_type.iter().map(|(k, v)| (k.as_str(), v)))
            .map(|(etype, p)| EvalRecord {
                corpus: corpus.to_string(),
                etype: etype.to_string(),
                tp: p.tp,
                fp: p.fp,
                fn_: p.fn_,
                precision: p.precision,
                recall: p.recall,
                f1: p.f1,
            })
            .collect()
    }

    /// Line-delimited JSON records, micro row first.
    pub fn to_jsonl(&self, corpus: &str) -> String {
        self.records(corpus)
            .iter()
            .map(|r| serde_json::to_string(r).expect("records serialize") + "\n")
            .collect()
    }

    /// Fixed-width table for humans.
    pub fn table(&self, corpus: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<16} {:<14} {:>7} {:>7} {:>7} {:>8} {:>8} {:>8}",
            "corpus", "type", "tp", "fp", "fn", "P", "R", "F1"
        );
        for r in self.records(corpus) {
            let _ = writeln!(
                out,
                "{:<16} {:<14} {:>7} {:>7} {:>7} {:>8.4} {:>8.4} {:>8.4}",
                r.corpus, r.etype, r.tp, r.fp, r.fn_, r.precision, r.recall, r.f1
            );
        }
        out
    }
}

fn count_sentence(gold: &[EntitySpan], pred: &[EntitySpan], per_type: &mut BTreeMap<String, Counts>) {
    let mut remaining: HashMap<&EntitySpan, usize> = HashMap::with_capacity(gold.len());
    for g in gold {
        *remaining.entry(g).or_default() += 1;
        per_type.entry(g.etype.clone()).or_default().fn_ += 1;
    }
    for p in pred {
        let c = per_type.entry(p.etype.clone()).or_default();
        match remaining.get_mut(p) {
            Some(n) if *n > 0 => {
                *n -= 1;
                c.tp += 1;
                c.fn_ -= 1;
            }
            _ => c.fp += 1,
        }
    }
}

fn score(gold: &[Vec<EntitySpan>], pred: &[Vec<EntitySpan>]) -> Result<SpanReport> {
    if gold.len() != pred.len() {
        return Err(Error::Alignment {
            gold: gold.len(),
            pred: pred.len(),
        });
    }
    let mut per_type = BTreeMap::new();
    for (g, p) in gold.iter().zip(pred) {
        count_sentence(g, p, &mut per_type);
    }
    let mut micro = Counts::default();
    for c in per_type.values() {
        micro += *c;
    }
    Ok(SpanReport {
        micro: micro.into(),
        per_type: per_type.into_iter().map(|(k, c)| (k, c.into())).collect(),
    })
}

/// Micro-averaged span scores over aligned flat span sets.
pub fn score_flat(gold: &[Vec<EntitySpan>], pred: &[Vec<EntitySpan>]) -> Result<SpanReport> {
    score(gold, pred)
}

/// Micro-averaged span scores over aligned nested span sets. Identical
/// duplicates match at most as often as they occur in gold.
pub fn score_nested(gold: &[Vec<EntitySpan>], pred: &[Vec<EntitySpan>]) -> Result<SpanReport> {
    score(gold, pred)
}

/// Unweighted mean of per-corpus F1 scores.
pub fn macro_f1(per_corpus_f1: &[f64]) -> Result<f64> {
    if per_corpus_f1.is_empty() {
        return Err(Error::Config("macro F1 over zero corpora".into()));
    }
    Ok(per_corpus_f1.iter().sum::<f64>() / per_corpus_f1.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn span(start: usize, end: usize, etype: &str) -> EntitySpan {
        EntitySpan::new(start, end, etype)
    }

    #[test]
    fn exact_match_is_perfect() {
        let g = vec![vec![span(0, 2, "PER")]];
        let r = score_flat(&g, &g).unwrap();
        assert_eq!((r.micro.precision, r.micro.recall, r.micro.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn boundary_miss_counts_both_ways() {
        let g = vec![vec![span(0, 2, "PER"), span(3, 4, "LOC")]];
        let p = vec![vec![span(0, 2, "PER"), span(4, 5, "LOC")]];
        let r = score_flat(&g, &p).unwrap();
        assert_eq!((r.micro.tp, r.micro.fp, r.micro.fn_), (1, 1, 1));
        assert_eq!(r.micro.f1, 0.5);
        assert_eq!(r.per_type["LOC"].f1, 0.0);
        assert_eq!(r.per_type["PER"].f1, 1.0);
    }

    #[test]
    fn nested_partial_recall() {
        let g = vec![vec![span(0, 3, "ORG"), span(0, 2, "PER")]];
        let p = vec![vec![span(0, 3, "ORG")]];
        let r = score_nested(&g, &p).unwrap();
        assert_eq!(r.micro.precision, 1.0);
        assert_eq!(r.micro.recall, 0.5);
        assert!((r.micro.f1 - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_prediction_convention() {
        let g = vec![vec![span(0, 1, "X")]];
        let r = score_nested(&g, &[vec![]]).unwrap();
        assert_eq!((r.micro.precision, r.micro.recall, r.micro.f1), (0.0, 0.0, 0.0));
        let r = score_flat(&[vec![]], &[vec![]]).unwrap();
        assert_eq!(r.micro.f1, 0.0);
    }

    #[test]
    fn misaligned_input_rejected() {
        assert!(matches!(
            score_flat(&[vec![]], &[]),
            Err(Error::Alignment { gold: 1, pred: 0 })
        ));
    }

    #[test]
    fn macro_average() {
        assert!((macro_f1(&[0.9, 0.8]).unwrap() - 0.85).abs() < 1e-15);
        assert_eq!(macro_f1(&[0.37]).unwrap(), 0.37);
        assert!(macro_f1(&[]).is_err());
        assert_eq!(macro_f1(&[0.8, 0.6]).unwrap(), macro_f1(&[0.6, 0.8]).unwrap());
    }

    #[test]
    fn report_formats() {
        let g = vec![vec![span(0, 2, "PER")]];
        let r = score_flat(&g, &g).unwrap();
        let jsonl = r.to_jsonl("dev");
        let first: serde_json::Value = serde_json::from_str(jsonl.lines().next().unwrap()).unwrap();
        assert_eq!(first["corpus"], "dev");
        assert_eq!(first["type"], "ALL");
        assert_eq!(first["F1"], 1.0);
        assert_eq!(jsonl.lines().count(), 2);
        assert!(r.table("dev").contains("PER"));
    }
}
