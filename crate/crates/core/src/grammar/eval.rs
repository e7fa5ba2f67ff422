use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::message::FieldSpec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("{0} fields are not sorted and disjoint")]
    UnsortedInput(&'static str),
}

/// How learned (hypothesis) fields line up with ground-truth fields. Every
/// count is in hypothesis fields.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchReport {
    /// Same start and length as a truth field.
    pub g_l: usize,
    /// Covers exactly two or more consecutive truth fields.
    pub l_mg: usize,
    /// Part of a run of two or more hypothesis fields that exactly tiles one
    /// truth field.
    pub ml_g: usize,
    pub mismatch: usize,
    pub total: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub exact_acc: f64,
    pub multi_acc: f64,
}

fn check(fields: &[FieldSpec], which: &'static str) -> Result<(), EvalError> {
    if fields.windows(2).all(|w| w[0].bit_end() <= w[1].bit_start) {
        Ok(())
    } else {
        Err(EvalError::UnsortedInput(which))
    }
}

/// Index range `[i, j]` of a run of adjacent, gap-free fields spanning
/// exactly `[start, end)`.
fn tiling(fields: &[FieldSpec], start: usize, end: usize) -> Option<(usize, usize)> {
    let i = fields.iter().position(|f| f.bit_start == start)?;
    let mut j = i;
    while fields[j].bit_end() < end {
        let next = fields.get(j + 1)?;
        if next.bit_start != fields[j].bit_end() {
            return None;
        }
        j += 1;
    }
    (fields[j].bit_end() == end).then_some((i, j))
}

pub fn classify_fields(
    hypothesis: &[FieldSpec],
    truth: &[FieldSpec],
) -> Result<MatchReport, EvalError> {
    check(hypothesis, "hypothesis")?;
    check(truth, "truth")?;
    #[derive(Clone, Copy, PartialEq)]
    enum Class {
        Mismatch,
        Exact,
        Merged,
        Split,
    }
    let mut class = vec![Class::Mismatch; hypothesis.len()];
    for (k, h) in hypothesis.iter().enumerate() {
        match tiling(truth, h.bit_start, h.bit_end()) {
            Some((i, j)) if i == j => class[k] = Class::Exact,
            Some(_) => class[k] = Class::Merged,
            None => {}
        }
    }
    for t in truth {
        if let Some((i, j)) = tiling(hypothesis, t.bit_start, t.bit_end()) {
            if j > i {
                for c in &mut class[i..=j] {
                    if *c == Class::Mismatch {
                        *c = Class::Split;
                    }
                }
            }
        }
    }
    let count = |c: Class| class.iter().filter(|&&x| x == c).count();
    Ok(MatchReport {
        g_l: count(Class::Exact),
        l_mg: count(Class::Merged),
        ml_g: count(Class::Split),
        mismatch: count(Class::Mismatch),
        total: hypothesis.len(),
    })
}

pub fn accuracy(r: &MatchReport) -> Accuracy {
    if r.total == 0 {
        return Accuracy {
            exact_acc: 0.0,
            multi_acc: 0.0,
        };
    }
    let t = r.total as f64;
    Accuracy {
        exact_acc: r.g_l as f64 / t,
        multi_acc: (r.g_l + r.l_mg + r.ml_g) as f64 / t,
    }
}
