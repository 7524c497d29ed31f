//! Subcommand implementations. Exit codes: 0 success / all checks pass,
//! 1 usage error (mapped in main), 2 at least one recorded check violated its
//! tolerance, 3 a non-finite value stopped the run.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use pglab::diag::{check_inequality, Check, CheckStatus, Trace};
use pglab::mdp::{random_mdp, save_mdp, two_arm_bandit};
use pglab::rate::{estimate_rate, RateModel};
use pglab::run::run_experiment;

use crate::config::ExperimentConfig;
use crate::csvio::{read_trace, trace_to_csv, write_atomic};
use crate::plot::{render_svg, Series};

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Emit the one-state two-action bandit fixture.
    #[arg(long, conflicts_with_all = ["random", "states", "actions", "gamma", "seed"])]
    pub bandit: bool,
    /// Emit a seeded random MDP (rewards and transitions uniform on (0,1)).
    #[arg(long)]
    pub random: bool,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub actions: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(short, long)]
    pub out: PathBuf,
}

pub fn cmd_gen(args: &GenArgs) -> Result<u8> {
    let mdp = if args.bandit {
        two_arm_bandit()
    } else {
        random_mdp(
            args.seed,
            args.states
                .ok_or_else(|| anyhow!("--random needs --states"))?,
            args.actions
                .ok_or_else(|| anyhow!("--random needs --actions"))?,
            args.gamma
                .ok_or_else(|| anyhow!("--random needs --gamma"))?,
        )?
    };
    save_mdp(&mdp, &args.out)?;
    println!(
        "wrote {} ({} states, {} actions, gamma {}), fingerprint {:016x}",
        args.out.display(),
        mdp.n_states(),
        mdp.n_actions(),
        mdp.gamma(),
        mdp.fingerprint()
    );
    Ok(0)
}

/// Flags mirroring every config-file key; flags win over the file.
#[derive(Args, Clone, Debug, Default)]
pub struct RunFlags {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// MDP file to load.
    #[arg(long)]
    pub mdp: Option<PathBuf>,
    /// Use the bandit fixture.
    #[arg(long)]
    pub bandit: bool,
    /// Use a seeded random MDP (with --seed/--states/--actions/--gamma).
    #[arg(long)]
    pub random: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub states: Option<usize>,
    #[arg(long)]
    pub actions: Option<usize>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// pi | ppg | pg | npg | entropy-pg | entropy-npg | soft-pi
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// constant | ppg-increasing | pg-adaptive
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long)]
    pub c3: Option<f64>,
    #[arg(long = "c-adapt")]
    pub c_adapt: Option<f64>,
    /// `uniform` or a comma list of state weights.
    #[arg(long)]
    pub mu: Option<String>,
    #[arg(long)]
    pub rho: Option<String>,
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long = "stop-gap")]
    pub stop_gap: Option<f64>,
    #[arg(long = "opt-tol")]
    pub opt_tol: Option<f64>,
    /// Check to record (repeatable; comma lists allowed).
    #[arg(long = "check")]
    pub checks: Vec<String>,
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

impl RunFlags {
    fn as_config(&self) -> ExperimentConfig {
        let mdp = if self.bandit {
            Some("bandit".to_string())
        } else if self.random {
            Some("random".to_string())
        } else {
            self.mdp.as_ref().map(|p| p.display().to_string())
        };
        let checks = if self.checks.is_empty() {
            None
        } else {
            Some(
                self.checks
                    .iter()
                    .flat_map(|c| c.split(','))
                    .map(|c| c.trim().to_string())
                    .filter(|c| !c.is_empty())
                    .collect(),
            )
        };
        ExperimentConfig {
            mdp,
            seed: self.seed,
            states: self.states,
            actions: self.actions,
            gamma: self.gamma,
            method: self.method.clone(),
            eta: self.eta,
            tau: self.tau,
            schedule: self.schedule.clone(),
            c3: self.c3,
            c_adapt: self.c_adapt,
            mu: self.mu.clone(),
            rho: self.rho.clone(),
            max_iters: self.iters,
            stop_gap: self.stop_gap,
            opt_tol: self.opt_tol,
            checks,
            out: self.out.clone(),
        }
    }

    pub fn resolve(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        Ok(base.merged_with(self.as_config()))
    }
}

fn exit_code_for(trace: &Trace) -> u8 {
    if trace.diverged_at.is_some() {
        return 3;
    }
    let failed = trace
        .checks
        .iter()
        .any(|&c| check_inequality(c, trace).status == CheckStatus::Fail);
    if failed {
        2
    } else {
        0
    }
}

fn print_reports(trace: &Trace) {
    for &check in &trace.checks {
        println!("{}", check_inequality(check, trace).line());
    }
}

fn run_to_trace(cfg: &ExperimentConfig) -> Result<Trace> {
    let mdp = cfg.load_mdp()?;
    let spec = cfg.build_run_spec(&mdp, false)?;
    Ok(run_experiment(&mdp, &spec)?)
}

pub fn cmd_run(flags: &RunFlags) -> Result<u8> {
    let cfg = flags.resolve()?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| anyhow!("run needs an output path (--out or `out =` in the config)"))?;
    let trace = run_to_trace(&cfg)?;
    write_atomic(&out, trace_to_csv(&trace).as_bytes())?;
    print_reports(&trace);
    let last = trace.records.last().expect("runs always record");
    println!(
        "{} | {} iterations, final gap {:.6e}, mdp {:016x} -> {}",
        trace.method_desc,
        last.k,
        last.v_gap_inf,
        trace.fingerprint,
        out.display()
    );
    if let Some(k) = trace.diverged_at {
        println!("non-finite value encountered at iteration {k}");
    }
    Ok(exit_code_for(&trace))
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Verify a recorded trace CSV instead of re-running.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub flags: RunFlags,
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<u8> {
    let requested: Vec<Check> = args
        .flags
        .checks
        .iter()
        .flat_map(|c| c.split(','))
        .map(|c| Check::parse(c.trim()))
        .collect::<pglab::Result<Vec<_>>>()?;
    let trace = match &args.trace {
        Some(path) => read_trace(path)?,
        None => {
            let cfg = args.flags.resolve()?;
            if cfg.checks.as_deref().is_none_or(|c| c.is_empty()) {
                bail!("verify needs at least one --check (or `checks =` in the config)");
            }
            let trace = run_to_trace(&cfg)?;
            if let Some(out) = &cfg.out {
                write_atomic(out, trace_to_csv(&trace).as_bytes())?;
            }
            trace
        }
    };
    // Report the requested checks (unrecorded ones come back as skipped);
    // with no explicit request, report everything the trace recorded.
    let report_list: &[Check] = if requested.is_empty() {
        &trace.checks
    } else {
        &requested
    };
    let mut failed = false;
    for &check in report_list {
        let report = check_inequality(check, &trace);
        failed |= report.status == CheckStatus::Fail;
        println!("{}", report.line());
    }
    if trace.diverged_at.is_some() {
        return Ok(3);
    }
    Ok(if failed { 2 } else { 0 })
}

#[derive(Args, Debug)]
pub struct RateArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// linear | sublinear | quadratic
    #[arg(long, default_value = "linear")]
    pub model: String,
    #[arg(long = "k-lo")]
    pub k_lo: Option<usize>,
    #[arg(long = "k-hi")]
    pub k_hi: Option<usize>,
    /// Required by the quadratic model (envelope 2 tau (1-gamma)/gamma^2).
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
}

pub fn cmd_rate(args: &RateArgs) -> Result<u8> {
    let trace = read_trace(&args.trace)?;
    let last = trace
        .records
        .last()
        .ok_or_else(|| anyhow!("trace is empty"))?
        .k;
    let window = (args.k_lo.unwrap_or(0), args.k_hi.unwrap_or(last));
    let model = match args.model.as_str() {
        "linear" => RateModel::Linear,
        "sublinear" => RateModel::Sublinear,
        "quadratic" => {
            let tau = args
                .tau
                .ok_or_else(|| anyhow!("quadratic model needs --tau"))?;
            let gamma = args
                .gamma
                .ok_or_else(|| anyhow!("quadratic model needs --gamma"))?;
            if gamma <= 0.0 {
                bail!("quadratic envelope needs gamma > 0");
            }
            RateModel::Quadratic {
                envelope: 2.0 * tau * (1.0 - gamma) / (gamma * gamma),
            }
        }
        other => bail!("unknown rate model `{other}`"),
    };
    let fit = estimate_rate(&trace, model, window)?;
    println!(
        "model={} window=[{},{}] value={:.6e} residual={:.3e} truncated={}",
        args.model, fit.window.0, fit.window.1, fit.value, fit.residual, fit.truncated
    );
    Ok(0)
}

#[derive(Args, Debug)]
pub struct PlotArgs {
    /// Trace CSV (repeatable; each becomes one curve).
    #[arg(long = "trace", required = true)]
    pub traces: Vec<PathBuf>,
    /// Theoretical envelope overlays: `gamma:<g>`, `gamma2:<g>`,
    /// `npg:<eta>,<tau>`, or `rate:<r>` (anchored at the first gap of the
    /// first trace).
    #[arg(long = "envelope")]
    pub envelopes: Vec<String>,
    #[arg(long, default_value = "value gap per iteration")]
    pub title: String,
    #[arg(short, long)]
    pub out: PathBuf,
}

fn envelope_spec(spec: &str) -> Result<(String, f64)> {
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| anyhow!("envelope spec `{spec}` needs kind:params"))?;
    match kind {
        "gamma" => {
            let g: f64 = rest.parse().context("envelope gamma")?;
            Ok((format!("gamma^k (gamma={g})"), g))
        }
        "gamma2" => {
            let g: f64 = rest.parse().context("envelope gamma")?;
            Ok((format!("gamma^2k (gamma={g})"), g * g))
        }
        "npg" => {
            let (eta, tau) = rest
                .split_once(',')
                .ok_or_else(|| anyhow!("npg envelope needs eta,tau"))?;
            let eta: f64 = eta.parse().context("envelope eta")?;
            let tau: f64 = tau.parse().context("envelope tau")?;
            let r = 1.0 / ((eta * tau + 1.0) * (eta * tau + 1.0));
            Ok((format!("1/(1+eta tau)^2k (eta={eta}, tau={tau})"), r))
        }
        "rate" => {
            let r: f64 = rest.parse().context("envelope rate")?;
            Ok((format!("rate {r}^k"), r))
        }
        other => bail!("unknown envelope kind `{other}`"),
    }
}

pub fn cmd_plot(args: &PlotArgs) -> Result<u8> {
    let mut series = Vec::new();
    for path in &args.traces {
        let trace = read_trace(path)?;
        if trace.records.is_empty() {
            bail!("trace {} is empty", path.display());
        }
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        series.push(Series {
            label,
            points: trace
                .records
                .iter()
                .map(|r| (r.k as f64, r.v_gap_inf))
                .collect(),
            dashed: false,
        });
    }
    let anchor = series[0]
        .points
        .iter()
        .find(|&&(_, y)| y > 0.0)
        .copied()
        .ok_or_else(|| anyhow!("first trace has no positive gaps to anchor envelopes"))?;
    let k_max = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0))
        .fold(0.0f64, f64::max);
    for spec in &args.envelopes {
        let (label, rate) = envelope_spec(spec)?;
        let mut points = Vec::new();
        let mut k = anchor.0;
        while k <= k_max {
            let y = anchor.1 * rate.powf(k - anchor.0);
            if y < 1e-300 {
                break;
            }
            points.push((k, y));
            k += 1.0;
        }
        series.push(Series {
            label,
            points,
            dashed: true,
        });
    }
    let svg = render_svg(&series, &args.title);
    write_atomic(&args.out, svg.as_bytes())?;
    println!("wrote {}", args.out.display());
    Ok(0)
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Comma list of step sizes; one run and one output file per value.
    #[arg(long)]
    pub etas: String,
    #[command(flatten)]
    pub flags: RunFlags,
}

/// Independent runs over a list of step sizes, executed in parallel with at
/// most PGLAB_THREADS workers (default: available parallelism). Each run
/// writes its own `...-eta<value>.csv` file atomically.
pub fn cmd_sweep(args: &SweepArgs) -> Result<u8> {
    let cfg = args.flags.resolve()?;
    let out = cfg
        .out
        .clone()
        .ok_or_else(|| anyhow!("sweep needs an output stem (--out)"))?;
    let etas: Vec<(String, f64)> = args
        .etas
        .split(',')
        .map(|s| {
            let t = s.trim();
            t.parse::<f64>()
                .map(|v| (t.to_string(), v))
                .with_context(|| format!("bad eta `{t}`"))
        })
        .collect::<Result<_>>()?;
    if etas.is_empty() {
        bail!("sweep needs at least one eta");
    }
    let threads = std::env::var("PGLAB_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        });

    let stem = out.with_extension("");
    let jobs: Vec<(String, f64, PathBuf)> = etas
        .into_iter()
        .map(|(text, v)| {
            let path = PathBuf::from(format!("{}-eta{}.csv", stem.display(), text));
            (text, v, path)
        })
        .collect();

    let mut results: Vec<Result<(String, u8, String)>> = Vec::new();
    std::thread::scope(|scope| {
        for chunk in jobs.chunks(threads.max(1)) {
            let handles: Vec<_> = chunk
                .iter()
                .map(|(text, eta, path)| {
                    let mut run_cfg = cfg.clone();
                    run_cfg.eta = Some(*eta);
                    run_cfg.out = Some(path.clone());
                    let text = text.clone();
                    let path = path.clone();
                    scope.spawn(move || -> Result<(String, u8, String)> {
                        let trace = run_to_trace(&run_cfg)?;
                        write_atomic(&path, trace_to_csv(&trace).as_bytes())?;
                        let last = trace.records.last().expect("runs always record");
                        let line = format!(
                            "eta={text}: {} iterations, final gap {:.6e} -> {}",
                            last.k,
                            last.v_gap_inf,
                            path.display()
                        );
                        Ok((text, exit_code_for(&trace), line))
                    })
                })
                .collect();
            for h in handles {
                results.push(h.join().expect("sweep worker panicked"));
            }
        }
    });

    let mut code = 0u8;
    for r in results {
        let (_, c, line) = r?;
        println!("{line}");
        code = code.max(c);
    }
    Ok(code)
}
