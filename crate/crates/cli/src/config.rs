//! Experiment configuration: a flat `key = value` text file mirrored by
//! command-line flags (flags win on conflict).

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use pglab::algo::Method;
use pglab::diag::Check;
use pglab::mdp::{load_mdp, random_mdp, two_arm_bandit, DistributionOverStates, TabularMdp};
use pglab::run::RunSpec;
use pglab::schedule::StepSchedule;

#[derive(Clone, Debug, PartialEq)]
pub enum MdpSource {
    Bandit,
    Random {
        seed: u64,
        states: usize,
        actions: usize,
        gamma: f64,
    },
    File(PathBuf),
}

/// Raw experiment settings; `None` means "not specified here".
#[derive(Clone, Debug, Default)]
pub struct ExperimentConfig {
    pub mdp: Option<String>,
    pub seed: Option<u64>,
    pub states: Option<usize>,
    pub actions: Option<usize>,
    pub gamma: Option<f64>,
    pub method: Option<String>,
    pub eta: Option<f64>,
    pub tau: Option<f64>,
    pub schedule: Option<String>,
    pub c3: Option<f64>,
    pub c_adapt: Option<f64>,
    pub mu: Option<String>,
    pub rho: Option<String>,
    pub max_iters: Option<usize>,
    pub stop_gap: Option<f64>,
    pub opt_tol: Option<f64>,
    pub checks: Option<Vec<String>>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses the `key = value` config format (# starts a comment).
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = ExperimentConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                anyhow!("{}:{}: expected key = value", path.display(), lineno + 1)
            })?;
            let (key, value) = (key.trim(), value.trim());
            let parse_ctx = |what: &str| format!("{}:{}: bad {what}", path.display(), lineno + 1);
            match key {
                "mdp" => cfg.mdp = Some(value.to_string()),
                "seed" => cfg.seed = Some(value.parse().with_context(|| parse_ctx("seed"))?),
                "states" => cfg.states = Some(value.parse().with_context(|| parse_ctx("states"))?),
                "actions" => {
                    cfg.actions = Some(value.parse().with_context(|| parse_ctx("actions"))?)
                }
                "gamma" => cfg.gamma = Some(value.parse().with_context(|| parse_ctx("gamma"))?),
                "method" => cfg.method = Some(value.to_string()),
                "eta" => cfg.eta = Some(value.parse().with_context(|| parse_ctx("eta"))?),
                "tau" => cfg.tau = Some(value.parse().with_context(|| parse_ctx("tau"))?),
                "schedule" => cfg.schedule = Some(value.to_string()),
                "c3" => cfg.c3 = Some(value.parse().with_context(|| parse_ctx("c3"))?),
                "c-adapt" => {
                    cfg.c_adapt = Some(value.parse().with_context(|| parse_ctx("c-adapt"))?)
                }
                "mu" => cfg.mu = Some(value.to_string()),
                "rho" => cfg.rho = Some(value.to_string()),
                "max-iters" => {
                    cfg.max_iters = Some(value.parse().with_context(|| parse_ctx("max-iters"))?)
                }
                "stop-gap" => {
                    cfg.stop_gap = Some(value.parse().with_context(|| parse_ctx("stop-gap"))?)
                }
                "opt-tol" => {
                    cfg.opt_tol = Some(value.parse().with_context(|| parse_ctx("opt-tol"))?)
                }
                "checks" => {
                    cfg.checks = Some(
                        value
                            .split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect(),
                    )
                }
                "out" => cfg.out = Some(PathBuf::from(value)),
                other => bail!("{}:{}: unknown key `{other}`", path.display(), lineno + 1),
            }
        }
        Ok(cfg)
    }

    /// Overlays `flags` on top of `self` (flag values win).
    pub fn merged_with(mut self, flags: ExperimentConfig) -> Self {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if flags.$field.is_some() { self.$field = flags.$field; })*
            };
        }
        take!(
            mdp, seed, states, actions, gamma, method, eta, tau, schedule, c3, c_adapt, mu, rho,
            max_iters, stop_gap, opt_tol, checks, out
        );
        self
    }

    pub fn mdp_source(&self) -> Result<MdpSource> {
        match self.mdp.as_deref() {
            Some("bandit") => Ok(MdpSource::Bandit),
            Some("random") | None => Ok(MdpSource::Random {
                seed: self.seed.unwrap_or(7),
                states: self
                    .states
                    .ok_or_else(|| anyhow!("random MDP needs `states`"))?,
                actions: self
                    .actions
                    .ok_or_else(|| anyhow!("random MDP needs `actions`"))?,
                gamma: self
                    .gamma
                    .ok_or_else(|| anyhow!("random MDP needs `gamma`"))?,
            }),
            Some(path) => Ok(MdpSource::File(PathBuf::from(path))),
        }
    }

    pub fn load_mdp(&self) -> Result<TabularMdp> {
        match self.mdp_source()? {
            MdpSource::Bandit => Ok(two_arm_bandit()),
            MdpSource::Random {
                seed,
                states,
                actions,
                gamma,
            } => Ok(random_mdp(seed, states, actions, gamma)?),
            MdpSource::File(path) => {
                Ok(load_mdp(&path).with_context(|| format!("loading {}", path.display()))?)
            }
        }
    }

    pub fn build_method(&self) -> Result<Method> {
        let name = self
            .method
            .as_deref()
            .ok_or_else(|| anyhow!("no method specified"))?;
        let eta = || {
            self.eta
                .ok_or_else(|| anyhow!("method `{name}` needs --eta"))
        };
        let tau = || {
            self.tau
                .ok_or_else(|| anyhow!("method `{name}` needs --tau"))
        };
        if !matches!(name, "entropy-pg" | "entropy-npg" | "soft-pi") && self.tau.is_some() {
            bail!("method `{name}` does not take --tau");
        }
        let schedule = |cfg: &Self| -> Result<StepSchedule> {
            match cfg.schedule.as_deref().unwrap_or("constant") {
                "constant" => Ok(StepSchedule::Constant { eta: eta()? }),
                "ppg-increasing" => Ok(StepSchedule::PpgIncreasing {
                    c3: cfg.c3.ok_or_else(|| anyhow!("ppg-increasing needs --c3"))?,
                }),
                "pg-adaptive" => Ok(StepSchedule::PgAdaptive {
                    c_adapt: cfg
                        .c_adapt
                        .ok_or_else(|| anyhow!("pg-adaptive needs --c-adapt"))?,
                }),
                other => bail!("unknown schedule `{other}`"),
            }
        };
        let method = match name {
            "pi" => Method::Pi,
            "ppg" => Method::Ppg {
                schedule: schedule(self)?,
            },
            "pg" => Method::SoftmaxPg {
                schedule: schedule(self)?,
            },
            "npg" => Method::SoftmaxNpg { eta: eta()? },
            "entropy-pg" => Method::EntropyPg {
                eta: eta()?,
                tau: tau()?,
            },
            "entropy-npg" => Method::EntropyNpg {
                eta: eta()?,
                tau: tau()?,
            },
            "soft-pi" => Method::SoftPi { tau: tau()? },
            other => bail!("unknown method `{other}`"),
        };
        method.validate()?;
        Ok(method)
    }

    pub fn build_checks(&self) -> Result<Vec<Check>> {
        self.checks
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .map(|name| Ok(Check::parse(name)?))
            .collect()
    }

    fn distribution(
        spec: Option<&str>,
        n: usize,
        what: &str,
    ) -> Result<Option<DistributionOverStates>> {
        match spec {
            None | Some("uniform") => Ok(None),
            Some(list) => {
                let weights: std::result::Result<Vec<f64>, _> =
                    list.split(',').map(|x| x.trim().parse::<f64>()).collect();
                let weights = weights.with_context(|| format!("parsing {what} weights"))?;
                if weights.len() != n {
                    bail!(
                        "{what} has {} weights, the MDP has {n} states",
                        weights.len()
                    );
                }
                Ok(Some(DistributionOverStates::new(weights)?))
            }
        }
    }

    pub fn build_run_spec(&self, mdp: &TabularMdp, store_policies: bool) -> Result<RunSpec> {
        let method = self.build_method()?;
        let mut spec = RunSpec::new(method);
        spec.mu = Self::distribution(self.mu.as_deref(), mdp.n_states(), "mu")?;
        spec.rho = Self::distribution(self.rho.as_deref(), mdp.n_states(), "rho")?;
        spec.max_iters = self.max_iters.unwrap_or(100);
        spec.stop_gap = self.stop_gap.unwrap_or(0.0);
        spec.opt_tol = self.opt_tol.unwrap_or(1e-12);
        spec.checks = self.build_checks()?;
        spec.store_policies = store_policies;
        Ok(spec)
    }
}
