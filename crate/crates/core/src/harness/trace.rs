//! Cosine-similarity matrices between interaction vectors over an episode.

use std::fmt::Write as _;
use std::str::FromStr;

use crate::autodiff::{Real, Tensor};
use crate::engine::{EpisodeTrace, StepRecord};
use crate::{Error, Result};

/// Which vectors are compared: rows come from the first, columns from the
/// second.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SimilarityPair {
    /// Read-out against written value.
    ReadValue,
    /// Written value against written value.
    ValueValue,
    /// Write key against write key.
    WriteKeyWriteKey,
    /// Read key against write key.
    ReadKeyWriteKey,
}

impl SimilarityPair {
    pub const ALL: [SimilarityPair; 4] = [
        SimilarityPair::ReadValue,
        SimilarityPair::ValueValue,
        SimilarityPair::WriteKeyWriteKey,
        SimilarityPair::ReadKeyWriteKey,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SimilarityPair::ReadValue => "read-value",
            SimilarityPair::ValueValue => "value-value",
            SimilarityPair::WriteKeyWriteKey => "wkey-wkey",
            SimilarityPair::ReadKeyWriteKey => "rkey-wkey",
        }
    }
}

impl FromStr for SimilarityPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown similarity pair `{s}`")))
    }
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

fn row_of<T: Real>(t: &Tensor<T>, b: usize) -> Vec<f64> {
    let w = t.shape()[1];
    t.data()[b * w..(b + 1) * w].iter().map(|x| x.as_f64()).collect()
}

fn head_mean<T: Real>(ts: &[Tensor<T>], b: usize) -> Vec<f64> {
    let rows: Vec<Vec<f64>> = ts.iter().map(|t| row_of(t, b)).collect();
    let n = rows.len() as f64;
    (0..rows[0].len())
        .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect()
}

/// One vector per step.
type Vectors = Vec<Vec<f64>>;

/// The two vector sequences compared for `pair`, for batch element `b`.
/// Multi-head keys and values are averaged over heads.
pub fn pair_vectors<T: Real>(steps: &[StepRecord<T>], pair: SimilarityPair, b: usize) -> Result<(Vectors, Vectors)> {
    let mut rows = Vec::with_capacity(steps.len());
    let mut cols = Vec::with_capacity(steps.len());
    for s in steps {
        let i = s
            .interactions
            .as_ref()
            .ok_or_else(|| Error::Config("trace has no interaction vectors (plain LSTM)".into()))?;
        let (r, c) = match pair {
            SimilarityPair::ReadValue => (row_of(&s.readout, b), head_mean(&i.target_values, b)),
            SimilarityPair::ValueValue => (head_mean(&i.target_values, b), head_mean(&i.target_values, b)),
            SimilarityPair::WriteKeyWriteKey => (head_mean(&i.write_keys, b), head_mean(&i.write_keys, b)),
            SimilarityPair::ReadKeyWriteKey => (head_mean(&i.read_keys, b), head_mean(&i.write_keys, b)),
        };
        rows.push(r);
        cols.push(c);
    }
    Ok((rows, cols))
}

/// `S[t2][t1]` = cosine between the row vector at `t2` and the column
/// vector at `t1`.
pub fn similarity_trace<T: Real>(trace: &EpisodeTrace<T>, pair: SimilarityPair, b: usize) -> Result<Vec<Vec<f64>>> {
    let (rows, cols) = pair_vectors(&trace.steps, pair, b)?;
    Ok(rows
        .iter()
        .map(|r| cols.iter().map(|c| cosine(r, c)).collect())
        .collect())
}

pub fn matrix_csv(m: &[Vec<f64>]) -> String {
    let mut s = String::new();
    for row in m {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_cases() {
        assert!((cosine(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 1.0]), 0.0);
        assert!((cosine(&[1.0, 0.0], &[-2.0, 0.0]) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn names_round_trip() {
        for p in SimilarityPair::ALL {
            assert_eq!(p.name().parse::<SimilarityPair>().unwrap(), p);
        }
    }

    #[test]
    fn csv_shape() {
        let csv = matrix_csv(&[vec![1.0, 0.5], vec![0.5, 1.0]]);
        assert_eq!(csv, "1.000000,0.500000\n0.500000,1.000000\n");
    }
}
