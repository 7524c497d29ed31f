//! Row-stochastic policies with a consistent log-space companion.
//!
//! Softmax-family updates multiply per-action weights, so each policy keeps
//! its natural logs alongside the probabilities. Exact zeros store a `-inf`
//! log sentinel; operations that need strictly positive rows reject such
//! policies through [`Policy::require_strictly_positive`].

use crate::error::{Error, Result};
use crate::eval::QTable;
use crate::mdp::PROB_TOL;
use crate::util::log_sum_exp;

/// Tie tolerance used when forming argmax action sets (greedy policies and
/// optimal action sets). The underlying analysis assumes exact arithmetic.
pub const TOL_GAP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl Policy {
    /// pi(a|s) = 1/|A| for every state.
    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self {
            n_states,
            n_actions,
            probs: vec![p; n_states * n_actions],
            log_probs: vec![p.ln(); n_states * n_actions],
        }
    }

    /// Validates each row (nonnegative, sums to 1 within 1e-12) and derives
    /// the log table, storing `-inf` for exact zeros.
    pub fn from_probs(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            for &p in row {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::PolicyRow {
                        state: s,
                        reason: format!("entry {p} is negative or non-finite"),
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::PolicyRow {
                    state: s,
                    reason: format!("row sums to {sum} instead of 1"),
                });
            }
        }
        let log_probs = probs
            .iter()
            .map(|&p| if p == 0.0 { f64::NEG_INFINITY } else { p.ln() })
            .collect();
        Ok(Self {
            n_states,
            n_actions,
            probs,
            log_probs,
        })
    }

    /// Greedy policy for a score table: uniform mass over each state's argmax
    /// set, with ties grouped within [`TOL_GAP`].
    pub fn greedy(scores: &QTable) -> Policy {
        let (n_states, n_actions) = (scores.n_states(), scores.n_actions());
        let mut probs = vec![0.0; n_states * n_actions];
        for s in 0..n_states {
            let row = scores.row(s);
            let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<usize> = (0..n_actions)
                .filter(|&a| best - row[a] <= TOL_GAP)
                .collect();
            let mass = 1.0 / tied.len() as f64;
            for a in tied {
                probs[s * n_actions + a] = mass;
            }
        }
        Policy::from_probs(n_states, n_actions, probs).expect("greedy rows are stochastic")
    }

    /// Builds a policy from per-row log-weights: each row becomes
    /// `softmax(logits(s,.))`, normalized with max subtraction.
    pub fn from_logit_rows(n_states: usize, n_actions: usize, logits: &[f64]) -> Policy {
        assert_eq!(logits.len(), n_states * n_actions);
        let mut probs = vec![0.0; n_states * n_actions];
        let mut log_probs = vec![0.0; n_states * n_actions];
        for s in 0..n_states {
            let row = &logits[s * n_actions..(s + 1) * n_actions];
            let lse = log_sum_exp(row);
            for a in 0..n_actions {
                let lp = row[a] - lse;
                log_probs[s * n_actions + a] = lp;
                probs[s * n_actions + a] = lp.exp();
            }
        }
        Policy {
            n_states,
            n_actions,
            probs,
            log_probs,
        }
    }

    /// Multiplicative-weights update: every row becomes
    /// `softmax(log pi(s,.) + g(s,.))`.
    ///
    /// The exponent row is first shifted by its own maximum, then the total is
    /// normalized with max subtraction. The first shift makes the update
    /// exactly invariant to per-state constants added to `g` (whenever the
    /// addition itself is exact), which is how the advantage/Q-value forms of
    /// the softmax updates coincide bitwise.
    pub fn softmax_update(&self, exponent: &[f64]) -> Policy {
        assert_eq!(exponent.len(), self.probs.len());
        let mut logits = vec![0.0; self.probs.len()];
        for s in 0..self.n_states {
            let base = s * self.n_actions;
            let g = &exponent[base..base + self.n_actions];
            let gm = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            for a in 0..self.n_actions {
                logits[base + a] = self.log_probs[base + a] + (g[a] - gm);
            }
        }
        Policy::from_logit_rows(self.n_states, self.n_actions, &logits)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn p(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn log_p(&self, s: usize, a: usize) -> f64 {
        self.log_probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn log_row(&self, s: usize) -> &[f64] {
        &self.log_probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    pub fn require_strictly_positive(&self) -> Result<()> {
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                if self.p(s, a) <= 0.0 {
                    return Err(Error::ZeroPolicyEntry {
                        state: s,
                        action: a,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.probs.iter().all(|p| p.is_finite())
    }

    pub fn max_row_sum_deviation(&self) -> f64 {
        (0..self.n_states)
            .map(|s| (self.row(s).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::QTable;

    #[test]
    fn uniform_rows() {
        let p = Policy::uniform(1, 2);
        assert_eq!(p.row(0), &[0.5, 0.5]);
        assert!((p.log_p(0, 0) - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn greedy_unique_argmax() {
        let q = QTable::unregularized(1, 2, vec![1.0, 0.0]);
        let p = Policy::greedy(&q);
        assert_eq!(p.row(0), &[1.0, 0.0]);
        assert_eq!(p.log_p(0, 1), f64::NEG_INFINITY);
    }

    #[test]
    fn greedy_exact_tie_splits_uniformly() {
        let q = QTable::unregularized(1, 2, vec![0.7, 0.7]);
        let p = Policy::greedy(&q);
        assert_eq!(p.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn from_probs_validates_rows() {
        assert!(Policy::from_probs(1, 2, vec![0.6, 0.5]).is_err());
        assert!(Policy::from_probs(1, 2, vec![1.2, -0.2]).is_err());
        let p = Policy::from_probs(1, 2, vec![1.0, 0.0]).unwrap();
        assert!(!p.is_strictly_positive());
        assert!(p.require_strictly_positive().is_err());
    }

    #[test]
    fn softmax_update_row_sums_and_log_consistency() {
        let p = Policy::uniform(2, 3);
        let g = [0.3, -0.1, 0.7, 0.0, 0.0, 0.0];
        let q = p.softmax_update(&g);
        assert!(q.max_row_sum_deviation() <= 1e-12);
        for s in 0..2 {
            for a in 0..3 {
                assert!((q.log_p(s, a).exp() - q.p(s, a)).abs() <= 1e-12);
            }
        }
        // Row with zero exponent stays put.
        for a in 0..3 {
            assert!((q.p(1, a) - 1.0 / 3.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn softmax_update_shift_invariance_is_bitwise_for_exact_shifts() {
        // Exponents on a dyadic grid so adding c = 0.5 is exact.
        let p = Policy::from_probs(1, 3, vec![0.2, 0.5, 0.3]).unwrap();
        let g = [0.125, -0.75, 0.375];
        let shifted: Vec<f64> = g.iter().map(|x| x + 0.5).collect();
        let a = p.softmax_update(&g);
        let b = p.softmax_update(&shifted);
        for i in 0..3 {
            assert_eq!(a.p(0, i).to_bits(), b.p(0, i).to_bits());
            assert_eq!(a.log_p(0, i).to_bits(), b.log_p(0, i).to_bits());
        }
    }
}
