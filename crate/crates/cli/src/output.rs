//! CSV artifacts: per-episode run logs and learning curves aggregated across
//! seeds.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Result;

use wvf_core::learning::RunRecord;

pub const RUNS_HEADER: [&str; 6] = ["agent", "task", "seed", "episode", "env_steps", "greedy_return"];

/// Formats `x` with `digits` significant digits, like C's `%.{digits}g`.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// A float as it appears in `runs.csv`.
pub fn csv_float(x: f64) -> String {
    format_sig(x, 9)
}

/// One agent's records for one seed.
pub struct RunLog<'a> {
    pub agent: &'a str,
    pub task: &'a str,
    pub records: &'a [RunRecord],
}

pub fn write_runs_csv(path: &Path, logs: &[RunLog<'_>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RUNS_HEADER)?;
    for log in logs {
        for r in log.records {
            w.write_record([
                log.agent.to_string(),
                log.task.to_string(),
                r.seed.to_string(),
                r.episode.to_string(),
                r.env_steps.to_string(),
                csv_float(r.greedy_return),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Row of `runs.csv` as read back.
#[derive(Clone, Debug, PartialEq, serde::Deserialize)]
pub struct RunRow {
    pub agent: String,
    pub task: String,
    pub seed: u64,
    pub episode: usize,
    pub env_steps: u64,
    pub greedy_return: f64,
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// Mean and population standard deviation across seeds for one episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    pub seeds: usize,
    pub env_steps_mean: f64,
    pub return_mean: f64,
    pub return_std: f64,
}

/// Aggregates rows of one agent by episode.
pub fn aggregate(rows: &[RunRow]) -> Vec<CurvePoint> {
    let mut by_episode: BTreeMap<usize, Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        by_episode.entry(r.episode).or_default().push(r);
    }
    by_episode
        .into_iter()
        .map(|(episode, rs)| {
            let n = rs.len() as f64;
            let mean = rs.iter().map(|r| r.greedy_return).sum::<f64>() / n;
            let var = rs.iter().map(|r| (r.greedy_return - mean).powi(2)).sum::<f64>() / n;
            CurvePoint {
                episode,
                seeds: rs.len(),
                env_steps_mean: rs.iter().map(|r| r.env_steps as f64).sum::<f64>() / n,
                return_mean: mean,
                return_std: var.sqrt(),
            }
        })
        .collect()
}

/// Curves per agent from the rows of `runs.csv`, in first-appearance order.
pub fn curves_by_agent(rows: &[RunRow]) -> Vec<(String, Vec<CurvePoint>)> {
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<RunRow>> = BTreeMap::new();
    for r in rows {
        if !groups.contains_key(&r.agent) {
            order.push(r.agent.clone());
        }
        groups.entry(r.agent.clone()).or_default().push(r.clone());
    }
    order
        .into_iter()
        .map(|agent| {
            let curve = aggregate(&groups[&agent]);
            (agent, curve)
        })
        .collect()
}

pub fn write_curve_csv(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "seeds", "env_steps_mean", "return_mean", "return_std"])?;
    for p in curve {
        w.write_record([
            p.episode.to_string(),
            p.seeds.to_string(),
            p.env_steps_mean.to_string(),
            p.return_mean.to_string(),
            p.return_std.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
