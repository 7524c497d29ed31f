//! Trace CSV format: the fixed header
//! `k,eta_k,v_gap_inf,v_gap_rho,l_k_kp1,b_max,kappa_est,kl_to_opt`
//! followed by one `slack:<check>` column per enabled check. Every number is
//! written with 17 significant digits so the round trip is exact; skipped or
//! inapplicable fields are empty cells. A divergence is recorded as a final
//! `# diverged-at <k>` comment line.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use pglab::diag::{Check, IterationRecord, Trace};

const FIXED_COLUMNS: [&str; 8] = [
    "k",
    "eta_k",
    "v_gap_inf",
    "v_gap_rho",
    "l_k_kp1",
    "b_max",
    "kappa_est",
    "kl_to_opt",
];

fn cell(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

pub fn trace_to_csv(trace: &Trace) -> String {
    let mut out = String::new();
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for c in &trace.checks {
        header.push(format!("slack:{}", c.name()));
    }
    out.push_str(&header.join(","));
    out.push('\n');
    let kappa = trace.kappa_running();
    for (i, rec) in trace.records.iter().enumerate() {
        let mut row = vec![
            rec.k.to_string(),
            cell(rec.eta_k),
            cell(Some(rec.v_gap_inf)),
            cell(Some(rec.v_gap_rho)),
            cell(rec.l_k_kp1),
            cell(rec.b_max),
            cell(kappa[i]),
            cell(rec.kl_to_opt),
        ];
        for c in &trace.checks {
            row.push(cell(rec.slacks.get(c).copied().flatten()));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    if let Some(k) = trace.diverged_at {
        out.push_str(&format!("# diverged-at {k}\n"));
    }
    out
}

pub fn trace_from_csv(text: &str) -> Result<Trace> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| anyhow!("empty trace file"))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < FIXED_COLUMNS.len() || columns[..FIXED_COLUMNS.len()] != FIXED_COLUMNS[..] {
        bail!("unexpected trace header: {header}");
    }
    let mut checks = Vec::new();
    for col in &columns[FIXED_COLUMNS.len()..] {
        let name = col
            .strip_prefix("slack:")
            .ok_or_else(|| anyhow!("unexpected column `{col}`"))?;
        checks.push(Check::parse(name)?);
    }
    let mut records = Vec::new();
    let mut diverged_at = None;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(k) = rest.strip_prefix("diverged-at") {
                diverged_at = Some(k.trim().parse().context("parsing diverged-at marker")?);
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            bail!(
                "line {}: {} fields, header has {}",
                lineno + 2,
                fields.len(),
                columns.len()
            );
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                Ok(Some(s.parse::<f64>().with_context(|| {
                    format!("line {}: bad number `{s}`", lineno + 2)
                })?))
            }
        };
        let req = |s: &str| -> Result<f64> {
            opt(s)?.ok_or_else(|| anyhow!("line {}: missing required field", lineno + 2))
        };
        let mut slacks = BTreeMap::new();
        for (c, field) in checks.iter().zip(&fields[FIXED_COLUMNS.len()..]) {
            slacks.insert(*c, opt(field)?);
        }
        records.push(IterationRecord {
            k: fields[0]
                .parse()
                .with_context(|| format!("line {}: bad iteration index", lineno + 2))?,
            eta_k: opt(fields[1])?,
            v_gap_inf: req(fields[2])?,
            v_gap_rho: req(fields[3])?,
            l_k_kp1: opt(fields[4])?,
            b_max: opt(fields[5])?,
            kl_to_opt: opt(fields[7])?,
            slacks,
        });
    }
    let mut trace = Trace::synthetic(records);
    trace.checks = checks;
    trace.diverged_at = diverged_at;
    Ok(trace)
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading trace {}", path.display()))?;
    trace_from_csv(&text)
}

/// Writes through a temporary sibling file and renames, so concurrent sweep
/// runs never expose partial output.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f =
            std::fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}
