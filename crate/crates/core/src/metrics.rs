//! Rollout harness, episode metrics, and report emission.
//!
//! Episode-level rates here are percentages of steps with at least one
//! violation; they are deliberately distinct from the per-step fractional
//! costs (C_v, C_l) used in training.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actions::ActionSet;
use crate::case::GridCase;
use crate::env::{Env, Transition};
use crate::error::CoreError;
use crate::feature::FrameStacker;

/// Weights of the composite safety indicator over episode-level rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub w_overload: f64,
    pub w_violation: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        MetricWeights {
            w_overload: 0.9,
            w_violation: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub offset: usize,
    pub survival_step: usize,
    pub cumulative_reward: f64,
    /// % of steps with at least one overloaded line
    pub overload_rate: f64,
    /// % of steps with at least one voltage violation
    pub violation_rate: f64,
    pub safety_cost_metric: f64,
}

/// Episode metrics from a step trace. `survival_step` is the number of steps
/// taken, including a terminal failing step.
pub fn compute_metrics(trace: &[Transition], weights: &MetricWeights) -> Result<EpisodeMetrics, CoreError> {
    if trace.is_empty() {
        return Err(CoreError::Usage("compute_metrics on an empty trace".into()));
    }
    let n = trace.len() as f64;
    let overload_steps = trace.iter().filter(|t| t.c_l > 0.0).count() as f64;
    let violation_steps = trace.iter().filter(|t| t.c_v > 0.0).count() as f64;
    let overload_rate = 100.0 * overload_steps / n;
    let violation_rate = 100.0 * violation_steps / n;
    Ok(EpisodeMetrics {
        episode: 0,
        offset: trace[0].s.episode_offset,
        survival_step: trace.len(),
        cumulative_reward: trace.iter().map(|t| t.r).sum(),
        overload_rate,
        violation_rate,
        safety_cost_metric: weights.w_overload * overload_rate + weights.w_violation * violation_rate,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean_survival: f64,
    pub std_survival: f64,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub mean_overload_rate: f64,
    pub std_overload_rate: f64,
    pub mean_violation_rate: f64,
    pub std_violation_rate: f64,
    pub mean_safety_cost: f64,
    pub std_safety_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub episodes: Vec<EpisodeMetrics>,
    pub skipped_unusable: usize,
    pub config_fingerprint: String,
    pub seed: u64,
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    if n == 0.0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n;
    // population standard deviation
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl RunReport {
    /// Aggregates recomputed from the per-episode rows.
    pub fn aggregate(&self) -> Aggregate {
        let e = &self.episodes;
        let (mean_survival, std_survival) = mean_std(e.iter().map(|m| m.survival_step as f64));
        let (mean_reward, std_reward) = mean_std(e.iter().map(|m| m.cumulative_reward));
        let (mean_overload_rate, std_overload_rate) = mean_std(e.iter().map(|m| m.overload_rate));
        let (mean_violation_rate, std_violation_rate) = mean_std(e.iter().map(|m| m.violation_rate));
        let (mean_safety_cost, std_safety_cost) = mean_std(e.iter().map(|m| m.safety_cost_metric));
        Aggregate {
            mean_survival,
            std_survival,
            mean_reward,
            std_reward,
            mean_overload_rate,
            std_overload_rate,
            mean_violation_rate,
            std_violation_rate,
            mean_safety_cost,
            std_safety_cost,
        }
    }
}

/// Stable fingerprint of a serialized config (FNV-1a 64-bit, hex).
pub fn fingerprint(text: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Runs `episodes` greedy rollouts. The policy maps a stacked feature vector
/// to an index into `action_set`. Episode offsets are drawn from the seeded
/// RNG; unusable offsets (initial power flow fails) are skipped and counted.
pub fn rollout(
    env: &Env,
    action_set: &ActionSet,
    mut policy: impl FnMut(&[f64]) -> usize,
    episodes: usize,
    n_hist: usize,
    seed: u64,
    config_fingerprint: &str,
) -> Result<RunReport, CoreError> {
    if episodes == 0 {
        return Err(CoreError::Usage("rollout needs at least one episode".into()));
    }
    let horizon = env.episode_horizon();
    let max_offset = env.chronics.n_rows().checked_sub(horizon).ok_or_else(|| {
        CoreError::ChronicsRange("chronics shorter than the episode horizon".into())
    })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = RunReport {
        episodes: Vec::with_capacity(episodes),
        skipped_unusable: 0,
        config_fingerprint: config_fingerprint.to_string(),
        seed,
    };

    let mut done = 0usize;
    let mut attempts = 0usize;
    while done < episodes {
        let offset = if max_offset == 0 { 0 } else { rng.gen_range(0..=max_offset) };
        attempts += 1;
        if attempts > episodes * 100 {
            return Err(CoreError::UnusableEpisode(
                "too many unusable episodes during rollout".into(),
            ));
        }
        let mut state = match env.reset(offset) {
            Ok(s) => s,
            Err(CoreError::UnusableEpisode(_)) => {
                report.skipped_unusable += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let mut stacker = FrameStacker::new(&env.case, n_hist);
        let mut trace = Vec::new();
        while !state.terminal {
            let stacked = stacker.push(&env.case, &state, horizon);
            let idx = policy(&stacked);
            let tr = env.step(&state, action_set.get(idx))?;
            state = tr.s_next.clone();
            trace.push(tr);
        }
        let mut m = compute_metrics(&trace, &MetricWeights::default())?;
        m.episode = done;
        report.episodes.push(m);
        done += 1;
    }
    Ok(report)
}

const CSV_HEADER: &str =
    "episode,offset,survival_step,cumulative_reward,overload_rate,violation_rate,safety_cost_metric";

/// Renders the report as CSV: metadata comments, header, one row per
/// episode, then `mean` and `std` aggregate rows.
pub fn report_to_csv(report: &RunReport) -> String {
    let mut out = String::new();
    writeln!(out, "# config={}", report.config_fingerprint).ok();
    writeln!(out, "# seed={}", report.seed).ok();
    writeln!(out, "# skipped_unusable={}", report.skipped_unusable).ok();
    writeln!(out, "{CSV_HEADER}").ok();
    for m in &report.episodes {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            m.episode,
            m.offset,
            m.survival_step,
            m.cumulative_reward,
            m.overload_rate,
            m.violation_rate,
            m.safety_cost_metric
        )
        .ok();
    }
    if !report.episodes.is_empty() {
        let a = report.aggregate();
        writeln!(
            out,
            "mean,,{},{},{},{},{}",
            a.mean_survival, a.mean_reward, a.mean_overload_rate, a.mean_violation_rate, a.mean_safety_cost
        )
        .ok();
        writeln!(
            out,
            "std,,{},{},{},{},{}",
            a.std_survival, a.std_reward, a.std_overload_rate, a.std_violation_rate, a.std_safety_cost
        )
        .ok();
    }
    out
}

/// Parses a CSV produced by [`report_to_csv`] back into a report (aggregate
/// rows are recomputed, not read).
pub fn report_from_csv(text: &str) -> Result<RunReport, CoreError> {
    let mut report = RunReport {
        episodes: Vec::new(),
        skipped_unusable: 0,
        config_fingerprint: String::new(),
        seed: 0,
    };
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == CSV_HEADER {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# ") {
            if let Some(v) = rest.strip_prefix("config=") {
                report.config_fingerprint = v.to_string();
            } else if let Some(v) = rest.strip_prefix("seed=") {
                report.seed = v.parse().map_err(|_| CoreError::parse(ln + 1, "bad seed"))?;
            } else if let Some(v) = rest.strip_prefix("skipped_unusable=") {
                report.skipped_unusable =
                    v.parse().map_err(|_| CoreError::parse(ln + 1, "bad skipped count"))?;
            }
            continue;
        }
        if line.starts_with("mean,") || line.starts_with("std,") {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(CoreError::parse(ln + 1, format!("expected 7 fields, got {}", fields.len())));
        }
        let f = |i: usize| -> Result<f64, CoreError> {
            fields[i].parse().map_err(|_| CoreError::parse(ln + 1, format!("bad number {:?}", fields[i])))
        };
        report.episodes.push(EpisodeMetrics {
            episode: fields[0].parse().map_err(|_| CoreError::parse(ln + 1, "bad episode"))?,
            offset: fields[1].parse().map_err(|_| CoreError::parse(ln + 1, "bad offset"))?,
            survival_step: fields[2].parse().map_err(|_| CoreError::parse(ln + 1, "bad survival"))?,
            cumulative_reward: f(3)?,
            overload_rate: f(4)?,
            violation_rate: f(5)?,
            safety_cost_metric: f(6)?,
        });
    }
    Ok(report)
}

/// Training-dynamics series sampled at evaluation points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingCurves {
    pub steps: Vec<u64>,
    pub reward: Vec<f64>,
    pub survival: Vec<f64>,
    pub overload_rate: Vec<f64>,
    pub violation_rate: Vec<f64>,
}

impl TrainingCurves {
    pub fn push(&mut self, step: u64, aggregate: &Aggregate) {
        self.steps.push(step);
        self.reward.push(aggregate.mean_reward);
        self.survival.push(aggregate.mean_survival);
        self.overload_rate.push(aggregate.mean_overload_rate);
        self.violation_rate.push(aggregate.mean_violation_rate);
    }
}

fn polyline(xs: &[f64], ys: &[f64], x0: f64, y0: f64, w: f64, h: f64) -> String {
    let (xmin, xmax) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (ymin, ymax) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let xr = (xmax - xmin).max(1e-12);
    let yr = (ymax - ymin).max(1e-12);
    let pts: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let px = x0 + (x - xmin) / xr * w;
            let py = y0 + h - (y - ymin) / yr * h;
            format!("{px:.2},{py:.2}")
        })
        .collect();
    pts.join(" ")
}

/// Renders the four learning curves into a standalone SVG. The provenance
/// comment carries the config fingerprint and seed.
pub fn curves_to_svg(curves: &TrainingCurves, config_fingerprint: &str, seed: u64) -> String {
    let panels: [(&str, &[f64]); 4] = [
        ("mean reward", &curves.reward),
        ("mean survival step", &curves.survival),
        ("overload rate %", &curves.overload_rate),
        ("violation rate %", &curves.violation_rate),
    ];
    let xs: Vec<f64> = curves.steps.iter().map(|&s| s as f64).collect();
    let mut svg = String::new();
    writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="640" height="520" viewBox="0 0 640 520">"#).ok();
    writeln!(svg, "<!-- config={config_fingerprint} seed={seed} -->").ok();
    writeln!(svg, r#"<rect width="640" height="520" fill="white"/>"#).ok();
    for (i, (label, ys)) in panels.iter().enumerate() {
        let x0 = 40.0 + (i % 2) as f64 * 310.0;
        let y0 = 30.0 + (i / 2) as f64 * 250.0;
        writeln!(
            svg,
            r#"<text x="{:.0}" y="{:.0}" font-size="12" font-family="sans-serif">{} vs training step</text>"#,
            x0,
            y0 - 8.0,
            label
        )
        .ok();
        writeln!(
            svg,
            r#"<rect x="{x0:.0}" y="{y0:.0}" width="260" height="200" fill="none" stroke="black" stroke-width="0.5"/>"#
        )
        .ok();
        if !xs.is_empty() {
            writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
                polyline(&xs, ys, x0, y0, 260.0, 200.0)
            )
            .ok();
        }
    }
    writeln!(svg, "</svg>").ok();
    svg
}

/// Writes the CSV report and, when curves are given, the SVG plot.
pub fn emit_report(
    report: &RunReport,
    csv_path: &Path,
    curves: Option<(&TrainingCurves, &Path)>,
) -> Result<(), CoreError> {
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |e: std::io::Error| CoreError::Io { path, source: e }
    };
    std::fs::write(csv_path, report_to_csv(report)).map_err(io(csv_path))?;
    if let Some((c, svg_path)) = curves {
        std::fs::write(svg_path, curves_to_svg(c, &report.config_fingerprint, report.seed))
            .map_err(io(svg_path))?;
    }
    Ok(())
}

/// Convenience: loading-feature index sanity used by rollout consumers.
pub fn loading_feature(case: &GridCase, frame: &[f64], line: usize) -> f64 {
    frame[case.n_buses() + line]
}
