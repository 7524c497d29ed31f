//! Tabular MDP and state-distribution types, seeded problem generators, and
//! the plain-text MDP file format.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::util::fnv1a64;

/// Tolerance for probability normalization checks.
pub const PROB_TOL: f64 = 1e-12;

/// A finite MDP with dense transition tensor and reward table.
///
/// Rewards are restricted to [0, 1] and the discount factor to [0, 1).
/// Instances built through [`TabularMdp::new`] always satisfy the row-sum
/// and range invariants; [`validate_mdp`] re-checks them on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    /// P(s'|s,a), row-major with layout `(s * n_actions + a) * n_states + s2`.
    transition: Vec<f64>,
    /// r(s,a), row-major with layout `s * n_actions + a`.
    reward: Vec<f64>,
    gamma: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        let mdp = Self::new_unchecked(n_states, n_actions, transition, reward, gamma)?;
        validate_mdp(&mdp)?;
        Ok(mdp)
    }

    /// Builds the value without checking probability/reward/gamma invariants.
    /// Dimensions must still be consistent so that indexing is well defined.
    pub fn new_unchecked(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Dimension(
                "n_states and n_actions must be positive".into(),
            ));
        }
        if transition.len() != n_states * n_actions * n_states {
            return Err(Error::Dimension(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                n_states * n_actions * n_states
            )));
        }
        if reward.len() != n_states * n_actions {
            return Err(Error::Dimension(format!(
                "reward table has {} entries, expected {}",
                reward.len(),
                n_states * n_actions
            )));
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p(&self, s: usize, a: usize, s2: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s2]
    }

    pub fn r(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// P(.|s,a) as a slice over destination states.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transition[base..base + self.n_states]
    }

    /// r(s,.) as a slice over actions.
    pub fn reward_row(&self, s: usize) -> &[f64] {
        &self.reward[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Content fingerprint over the canonical text encoding.
    pub fn fingerprint(&self) -> u64 {
        let mut buf = Vec::new();
        write_mdp(self, &mut buf).expect("in-memory write cannot fail");
        fnv1a64(&buf)
    }
}

/// Checks every [`TabularMdp`] invariant, reporting the first violation.
pub fn validate_mdp(mdp: &TabularMdp) -> Result<()> {
    if !(0.0..1.0).contains(&mdp.gamma) {
        return Err(Error::GammaOutOfRange(mdp.gamma));
    }
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let r = mdp.r(s, a);
            if !r.is_finite() || !(0.0..=1.0).contains(&r) {
                return Err(Error::RewardOutOfRange {
                    state: s,
                    action: a,
                    value: r,
                });
            }
            let row = mdp.transition_row(s, a);
            for (s2, &p) in row.iter().enumerate() {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::NegativeProbability {
                        state: s,
                        action: a,
                        next: s2,
                    });
                }
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > PROB_TOL {
                return Err(Error::TransitionRowSum {
                    state: s,
                    action: a,
                    sum,
                });
            }
        }
    }
    Ok(())
}

/// Seeded random MDP: rewards and raw transition entries drawn uniformly on
/// (0,1) with [`SplitMix64`], each transition row then rescaled to sum to 1.
///
/// Draw order is fixed (all rewards in (s,a) order, then all raw transition
/// entries in (s,a,s') order), so a given seed reproduces the same MDP on
/// every platform.
pub fn random_mdp(seed: u64, n_states: usize, n_actions: usize, gamma: f64) -> Result<TabularMdp> {
    if n_states < 1 {
        return Err(Error::Dimension("random_mdp needs n_states >= 1".into()));
    }
    if n_actions < 2 {
        return Err(Error::Dimension("random_mdp needs n_actions >= 2".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    let mut rng = SplitMix64::new(seed);
    let reward: Vec<f64> = (0..n_states * n_actions)
        .map(|_| rng.next_open01())
        .collect();
    let mut transition = vec![0.0; n_states * n_actions * n_states];
    for row in transition.chunks_mut(n_states) {
        for p in row.iter_mut() {
            *p = rng.next_open01();
        }
        let sum: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= sum;
        }
    }
    TabularMdp::new(n_states, n_actions, transition, reward, gamma)
}

/// The one-state, two-action bandit: r(s,a1)=1, r(s,a2)=0, gamma=0,
/// self-loop transitions.
pub fn two_arm_bandit() -> TabularMdp {
    TabularMdp::new(1, 2, vec![1.0, 1.0], vec![1.0, 0.0], 0.0)
        .expect("bandit fixture is valid by construction")
}

/// A probability distribution over states. Used both for the optimization
/// measure mu and the evaluation measure rho.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionOverStates {
    weights: Vec<f64>,
}

impl DistributionOverStates {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Distribution("empty weight vector".into()));
        }
        for (s, &w) in weights.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Distribution(format!(
                    "weight {w} at state {s} is negative or non-finite"
                )));
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::Distribution(format!(
                "weights sum to {sum} instead of 1"
            )));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    /// Point mass on state `s`.
    pub fn delta(n: usize, s: usize) -> Self {
        let mut weights = vec![0.0; n];
        weights[s] = 1.0;
        Self { weights }
    }

    pub(crate) fn from_normalized(weights: Vec<f64>) -> Self {
        Self { weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn w(&self, s: usize) -> f64 {
        self.weights[s]
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// min_s of the weights (the tilde quantity for mu and rho).
    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Expectation of a state-indexed table.
    pub fn expect(&self, values: &[f64]) -> f64 {
        crate::util::dot(&self.weights, values)
    }
}

const MDP_MAGIC: &str = "pglab-mdp v1";

/// Writes the plain-text MDP format: magic line, scalar fields, then the
/// reward table (one line per state) and transition tensor (one line per
/// (state, action) pair), every number with 17 significant digits.
pub fn write_mdp<W: Write>(mdp: &TabularMdp, out: &mut W) -> Result<()> {
    writeln!(out, "{MDP_MAGIC}")?;
    writeln!(out, "n_states {}", mdp.n_states)?;
    writeln!(out, "n_actions {}", mdp.n_actions)?;
    writeln!(out, "gamma {:.16e}", mdp.gamma)?;
    writeln!(out, "reward")?;
    for s in 0..mdp.n_states {
        let line: Vec<String> = mdp
            .reward_row(s)
            .iter()
            .map(|x| format!("{x:.16e}"))
            .collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    writeln!(out, "transition")?;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let line: Vec<String> = mdp
                .transition_row(s, a)
                .iter()
                .map(|x| format!("{x:.16e}"))
                .collect();
            writeln!(out, "{}", line.join(" "))?;
        }
    }
    Ok(())
}

pub fn read_mdp<R: BufRead>(input: &mut R) -> Result<TabularMdp> {
    let parse_err = |detail: &str| Error::Parse {
        what: "mdp file".into(),
        detail: detail.into(),
    };
    let mut lines = input.lines();
    let mut next_line = |what: &str| -> Result<String> {
        lines
            .next()
            .transpose()?
            .ok_or_else(|| parse_err(&format!("unexpected end of file, expected {what}")))
    };
    if next_line("magic header")?.trim() != MDP_MAGIC {
        return Err(parse_err("missing `pglab-mdp v1` header"));
    }
    let scalar = |line: String, key: &str| -> Result<String> {
        let mut it = line.split_whitespace();
        if it.next() != Some(key) {
            return Err(parse_err(&format!("expected `{key}` field")));
        }
        it.next()
            .map(str::to_owned)
            .ok_or_else(|| parse_err(&format!("`{key}` has no value")))
    };
    let n_states: usize = scalar(next_line("n_states")?, "n_states")?
        .parse()
        .map_err(|_| parse_err("n_states is not an integer"))?;
    let n_actions: usize = scalar(next_line("n_actions")?, "n_actions")?
        .parse()
        .map_err(|_| parse_err("n_actions is not an integer"))?;
    let gamma: f64 = scalar(next_line("gamma")?, "gamma")?
        .parse()
        .map_err(|_| parse_err("gamma is not a number"))?;
    if next_line("reward header")?.trim() != "reward" {
        return Err(parse_err("expected `reward` section"));
    }
    let parse_row = |line: String, want: usize| -> Result<Vec<f64>> {
        let row: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let row = row.map_err(|_| parse_err("non-numeric table entry"))?;
        if row.len() != want {
            return Err(parse_err(&format!(
                "row has {} entries, expected {want}",
                row.len()
            )));
        }
        Ok(row)
    };
    let mut reward = Vec::with_capacity(n_states * n_actions);
    for _ in 0..n_states {
        reward.extend(parse_row(next_line("reward row")?, n_actions)?);
    }
    if next_line("transition header")?.trim() != "transition" {
        return Err(parse_err("expected `transition` section"));
    }
    let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        transition.extend(parse_row(next_line("transition row")?, n_states)?);
    }
    TabularMdp::new(n_states, n_actions, transition, reward, gamma)
}

pub fn save_mdp(mdp: &TabularMdp, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_mdp(mdp, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_mdp(path: &Path) -> Result<TabularMdp> {
    let file = std::fs::File::open(path)?;
    let mut reader = std::io::BufReader::new(file);
    read_mdp(&mut reader)
}
