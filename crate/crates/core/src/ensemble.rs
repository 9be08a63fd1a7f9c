//! Score-level fusion of several single-stream models.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Relative margin within which two averaged scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    /// Weighted mean scores, one row per sample.
    pub scores: Matrix<f64>,
    pub predictions: Vec<usize>,
}

/// Weighted mean of per-stream scores and the arg-max class per sample.
///
/// Weights default to uniform. Ties (within [`TIE_TOLERANCE`]) go to the lowest class index.
pub fn ensemble_average(streams: &[Matrix<f64>], weights: Option<&[f64]>) -> Result<EnsembleResult> {
    let first = streams
        .first()
        .ok_or_else(|| Error::config("ensemble needs at least one score stream"))?;
    for (i, s) in streams.iter().enumerate() {
        if (s.rows, s.cols) != (first.rows, first.cols) {
            return Err(Error::shape(format!(
                "stream {i} has {}x{} scores, stream 0 has {}x{}",
                s.rows, s.cols, first.rows, first.cols
            )));
        }
    }
    let uniform = vec![1.0; streams.len()];
    let weights = weights.unwrap_or(&uniform);
    if weights.len() != streams.len() {
        return Err(Error::config(format!(
            "{} weights given for {} streams",
            weights.len(),
            streams.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::config("ensemble weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::config("ensemble weights sum to zero"));
    }
    let mut data = vec![0.0; first.data.len()];
    for (s, &w) in streams.iter().zip(weights) {
        for (acc, &x) in data.iter_mut().zip(&s.data) {
            *acc += w * x;
        }
    }
    for v in &mut data {
        *v /= total;
    }
    let scores = Matrix::from_vec(first.rows, first.cols, data)?;
    let predictions = (0..scores.rows).map(|r| argmax(scores.row(r))).collect();
    Ok(EnsembleResult { scores, predictions })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        let margin = TIE_TOLERANCE * row[best].abs().max(1.0);
        if v > row[best] + margin {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_vec(rows.len(), rows[0].len(), rows.concat()).unwrap()
    }

    #[test]
    fn identical_streams_keep_argmax() {
        let s = m(&[&[0.1, 0.7, 0.2], &[0.5, 0.2, 0.3]]);
        let r = ensemble_average(&[s.clone(), s], None).unwrap();
        assert_eq!(r.predictions, vec![1, 0]);
    }

    #[test]
    fn weights_select_stream() {
        let a = m(&[&[0.9, 0.1]]);
        let b = m(&[&[0.0, 1.0]]);
        let r = ensemble_average(&[a, b], Some(&[1.0, 0.0])).unwrap();
        assert_eq!(r.predictions, vec![0]);
    }

    #[test]
    fn three_stream_tie_goes_to_lowest_index() {
        let r = ensemble_average(&[m(&[&[0.2, 0.8]]), m(&[&[0.6, 0.4]]), m(&[&[0.7, 0.3]])], None).unwrap();
        assert!((r.scores.data[0] - 0.5).abs() < 1e-12);
        assert!((r.scores.data[1] - 0.5).abs() < 1e-12);
        assert_eq!(r.predictions, vec![0]);
    }

    #[test]
    fn mismatched_streams_rejected() {
        let a = m(&[&[0.1, 0.9]]);
        let b = m(&[&[0.1, 0.9], &[0.3, 0.7]]);
        assert!(ensemble_average(&[a.clone(), b], None).is_err());
        assert!(ensemble_average(std::slice::from_ref(&a), Some(&[1.0, 1.0])).is_err());
        assert!(ensemble_average(&[a], Some(&[0.0])).is_err());
    }
}
