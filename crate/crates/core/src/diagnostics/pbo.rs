//! Probability of backtest overfitting via combinatorial symmetric
//! cross-validation.
//!
//! Columns are cut into equal segments; for every way of choosing half
//! the segments as in-sample, the in-sample winner (by segment-mean
//! return) is ranked out-of-sample among all candidates. PBO is the
//! fraction of splits where that winner lands at or below the median
//! out-of-sample rank (logit <= 0).

use super::{DiagnosticsError, ReturnMatrix};

/// PBO estimate with the per-split logits for re-aggregation.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PboResult {
    pub pbo: f64,
    pub n_splits: usize,
    pub logits: Vec<f64>,
}

/// Lexicographic k-subsets of {0, .., n-1}.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        out.push(combo.clone());
        // Advance to the next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if combo[i] != i + n - k {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        combo[i] += 1;
        for j in i + 1..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

fn mean_over_columns(row: &[f64], columns: &[usize]) -> f64 {
    columns.iter().map(|&c| row[c]).sum::<f64>() / columns.len() as f64
}

/// CSCV PBO over an even number of equal segments.
pub fn cscv_pbo(matrix: &ReturnMatrix, n_segments: usize) -> Result<PboResult, DiagnosticsError> {
    if n_segments < 2 || !n_segments.is_multiple_of(2) {
        return Err(DiagnosticsError::SegmentsNotEven(n_segments));
    }
    let cols = matrix.n_columns();
    if !cols.is_multiple_of(n_segments) {
        return Err(DiagnosticsError::ColumnsNotDivisible {
            cols,
            segments: n_segments,
        });
    }
    let n_candidates = matrix.n_candidates();
    if n_candidates < 2 {
        return Err(DiagnosticsError::TooFewCandidates(n_candidates));
    }

    let seg_len = cols / n_segments;
    let segment_columns: Vec<Vec<usize>> = (0..n_segments)
        .map(|s| (s * seg_len..(s + 1) * seg_len).collect())
        .collect();

    let splits = combinations(n_segments, n_segments / 2);
    let mut logits = Vec::with_capacity(splits.len());
    for in_sample_segments in &splits {
        let mut is_cols = Vec::with_capacity(cols / 2);
        let mut oos_cols = Vec::with_capacity(cols / 2);
        let mut is_mask = vec![false; n_segments];
        for &s in in_sample_segments {
            is_mask[s] = true;
        }
        for (s, mask) in is_mask.iter().enumerate() {
            let target = if *mask { &mut is_cols } else { &mut oos_cols };
            target.extend_from_slice(&segment_columns[s]);
        }

        let mut winner = 0usize;
        let mut winner_score = f64::NEG_INFINITY;
        for c in 0..n_candidates {
            let score = mean_over_columns(matrix.row(c), &is_cols);
            if score > winner_score {
                winner_score = score;
                winner = c;
            }
        }

        let winner_oos = mean_over_columns(matrix.row(winner), &oos_cols);
        let mut below = 0usize;
        let mut equal = 0usize;
        for c in 0..n_candidates {
            if c == winner {
                continue;
            }
            let oos = mean_over_columns(matrix.row(c), &oos_cols);
            if oos < winner_oos {
                below += 1;
            } else if oos == winner_oos {
                equal += 1;
            }
        }
        // Mid-rank for ties; relative rank in (0, 1).
        let rank = 1.0 + below as f64 + 0.5 * equal as f64;
        let omega = rank / (n_candidates as f64 + 1.0);
        logits.push((omega / (1.0 - omega)).ln());
    }

    let n_splits = logits.len();
    let pbo = logits.iter().filter(|&&l| l <= 0.0).count() as f64 / n_splits as f64;
    Ok(PboResult {
        pbo,
        n_splits,
        logits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_counts() {
        assert_eq!(combinations(8, 4).len(), 70);
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(2, 1).len(), 2);
    }

    #[test]
    fn split_counts_match_binomial() {
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|i| {
                (0..16)
                    .map(|j| ((i * 31 + j * 17) % 13) as f64 / 13.0)
                    .collect()
            })
            .collect();
        let matrix = ReturnMatrix::new((1..=5).collect(), rows).unwrap();
        assert_eq!(cscv_pbo(&matrix, 8).unwrap().n_splits, 70);
        assert_eq!(cscv_pbo(&matrix, 4).unwrap().n_splits, 6);
    }

    #[test]
    fn odd_segments_rejected() {
        let matrix = ReturnMatrix::new(vec![1, 2], vec![vec![0.0; 12], vec![0.1; 12]]).unwrap();
        assert!(matches!(
            cscv_pbo(&matrix, 3),
            Err(DiagnosticsError::SegmentsNotEven(3))
        ));
        assert!(matches!(
            cscv_pbo(&matrix, 8),
            Err(DiagnosticsError::ColumnsNotDivisible { .. })
        ));
    }

    #[test]
    fn dominant_candidate_drives_pbo_to_zero() {
        // One candidate strictly better everywhere: never ranks below
        // median out-of-sample.
        let mut rows: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                (0..16)
                    .map(|j| (((i * 7 + j * 3) % 11) as f64 - 5.0) / 100.0)
                    .collect()
            })
            .collect();
        rows[4] = vec![1.0; 16];
        let matrix = ReturnMatrix::new((1..=10).collect(), rows).unwrap();
        let result = cscv_pbo(&matrix, 8).unwrap();
        assert_eq!(result.pbo, 0.0);
    }

    #[test]
    fn pbo_within_unit_interval_and_monotone_invariant() {
        let rows: Vec<Vec<f64>> = (0..6)
            .map(|i| {
                (0..24)
                    .map(|j| (((i * 13 + j * 7) % 17) as f64 - 8.0) / 50.0)
                    .collect()
            })
            .collect();
        let matrix = ReturnMatrix::new((1..=6).collect(), rows.clone()).unwrap();
        let base = cscv_pbo(&matrix, 8).unwrap();
        assert!((0.0..=1.0).contains(&base.pbo));

        // A positive affine transform commutes with the segment-mean
        // statistic, so ranks (and PBO) are unchanged.
        let transformed: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| 3.0 * x + 0.25).collect())
            .collect();
        let tmatrix = ReturnMatrix::new((1..=6).collect(), transformed).unwrap();
        let t = cscv_pbo(&tmatrix, 8).unwrap();
        assert_eq!(base.pbo, t.pbo);
    }
}
