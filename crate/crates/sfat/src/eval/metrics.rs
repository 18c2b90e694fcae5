//! Ranking metrics and the evaluation report.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::eval::candidates::SET_SIZE;

/// Recall@K is reported in percent; mean rank and MRR are unitless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyMetrics {
    pub r1: f64,
    pub r2: f64,
    pub r5: f64,
    pub mean_rank: f64,
    pub mrr: f64,
}

pub fn compute_metrics(ranks: &[usize]) -> Result<StrategyMetrics> {
    if ranks.is_empty() {
        return Err(EvalError::Report("no ranks to aggregate".into()));
    }
    if let Some(r) = ranks.iter().find(|&&r| r < 1 || r > SET_SIZE) {
        return Err(EvalError::Report(format!("rank {r} outside [1, {SET_SIZE}]")));
    }
    let n = ranks.len() as f64;
    let recall = |k: usize| 100.0 * ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(StrategyMetrics {
        r1: recall(1),
        r2: recall(2),
        r5: recall(5),
        mean_rank: ranks.iter().sum::<usize>() as f64 / n,
        mrr: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategies: BTreeMap<String, StrategyMetrics>,
    pub n_queries: usize,
    pub seed: u64,
    pub checkpoint: Option<String>,
    pub normalize: bool,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<12} {:>7} {:>7} {:>7} {:>7} {:>7}",
            "strategy", "R@1", "R@2", "R@5", "MR", "MRR"
        )?;
        for (name, m) in &self.strategies {
            writeln!(
                f,
                "{:<12} {:>7.2} {:>7.2} {:>7.2} {:>7.3} {:>7.4}",
                name, m.r1, m.r2, m.r5, m.mean_rank, m.mrr
            )?;
        }
        write!(f, "queries: {}  seed: {}  normalize: {}", self.n_queries, self.seed, self.normalize)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_rank_four_gives_mrr_quarter() {
        let m = compute_metrics(&[4]).unwrap();
        assert_eq!(m.r1, 0.0);
        assert_eq!(m.r2, 0.0);
        assert_eq!(m.r5, 100.0);
        assert_eq!(m.mean_rank, 4.0);
        assert!((m.mrr - 0.25).abs() < 1e-12);
    }

    #[test]
    fn mixed_ranks_match_hand_computation() {
        let m = compute_metrics(&[1, 2, 5, 10]).unwrap();
        assert_eq!(m.r1, 25.0);
        assert_eq!(m.r2, 50.0);
        assert_eq!(m.r5, 75.0);
        assert_eq!(m.mean_rank, 4.5);
        let expected = (1.0 + 0.5 + 0.2 + 0.1) / 4.0;
        assert!((m.mrr - expected).abs() < 1e-12);
    }

    #[test]
    fn perfect_oracle_is_all_ones() {
        let m = compute_metrics(&[1, 1, 1]).unwrap();
        assert_eq!(m.r1, 100.0);
        assert_eq!(m.mean_rank, 1.0);
        assert_eq!(m.mrr, 1.0);
    }

    #[test]
    fn invalid_ranks_are_rejected() {
        assert!(compute_metrics(&[]).is_err());
        assert!(compute_metrics(&[0]).is_err());
        assert!(compute_metrics(&[11]).is_err());
    }

    #[test]
    fn report_serializes_round_trip() {
        let mut strategies = BTreeMap::new();
        strategies.insert("random".to_string(), compute_metrics(&[1, 2, 5, 10]).unwrap());
        let report = EvalReport {
            strategies,
            n_queries: 4,
            seed: 7,
            checkpoint: Some("ckpt".into()),
            normalize: true,
        };
        let json = serde_json::to_string(&report).unwrap();
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
        let shown = report.to_string();
        assert!(shown.contains("random"));
        assert!(shown.contains("R@1"));
    }
}
