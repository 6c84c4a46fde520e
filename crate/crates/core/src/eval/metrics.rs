use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::dataset::{Genre, N_GENRES};

/// Rows are truth, columns are predictions.
pub type Confusion = [[u64; N_GENRES]; N_GENRES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenreMetrics {
    pub genre: Genre,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Per-genre and support-weighted classification metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_genre: Vec<GenreMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub accuracy: f64,
    pub total: u64,
    pub confusion: Confusion,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl EvalReport {
    /// Empty denominators give 0 for precision, recall and F1.
    pub fn from_confusion(confusion: Confusion) -> Self {
        let total: u64 = confusion.iter().flatten().sum();
        let mut per_genre = Vec::with_capacity(N_GENRES);
        let (mut wp, mut wf) = (0.0, 0.0);
        let mut correct = 0;
        for (c, genre) in Genre::ALL.iter().enumerate() {
            let tp = confusion[c][c];
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            let w = support as f64;
            wp += w * precision;
            wf += w * f1;
            correct += tp;
            per_genre.push(GenreMetrics {
                genre: *genre,
                precision,
                recall,
                f1,
                support,
            });
        }
        let mean = |sum: f64| if total == 0 { 0.0 } else { sum / total as f64 };
        EvalReport {
            per_genre,
            weighted_precision: mean(wp),
            // support * recall is exactly TP, so the weighted recall is the accuracy.
            weighted_recall: mean(correct as f64),
            weighted_f1: mean(wf),
            accuracy: ratio(correct, total),
            total,
            confusion,
        }
    }

    /// Build from `(truth, prediction)` pairs.
    pub fn from_pairs(pairs: &[(Genre, Genre)]) -> Self {
        let mut confusion = [[0u64; N_GENRES]; N_GENRES];
        for &(t, p) in pairs {
            confusion[t.index()][p.index()] += 1;
        }
        Self::from_confusion(confusion)
    }
}
