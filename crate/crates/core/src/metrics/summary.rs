use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{compute_pet, mean_sd, summarize_pet, throughput, welch_test, MetricsError};
use crate::geometry::CorridorNetwork;
use crate::sim::EpisodeLog;

/// Version of the metric tables written below.
pub const METRICS_SCHEMA: u32 = 1;

pub const METRIC_NAMES: [&str; 7] =
    ["mean_delay", "mean_travel_time", "completed", "throughput_vph", "pet_count", "pet_min", "pet_mean"];

/// One row of the per-seed table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub schema: u32,
    pub seed: u64,
    pub controller: String,
    pub config_fingerprint: String,
    pub released: usize,
    pub completed: usize,
    /// Over every released vehicle, unfinished ones included.
    pub mean_delay: f64,
    /// Over completed vehicles.
    pub mean_travel_time: Option<f64>,
    pub throughput_vph: f64,
    pub pet_count: usize,
    pub pet_min: Option<f64>,
    pub pet_mean: Option<f64>,
}

impl EpisodeMetrics {
    pub fn value(&self, metric: &str) -> Option<f64> {
        match metric {
            "mean_delay" => Some(self.mean_delay),
            "mean_travel_time" => self.mean_travel_time,
            "completed" => Some(self.completed as f64),
            "throughput_vph" => Some(self.throughput_vph),
            "pet_count" => Some(self.pet_count as f64),
            "pet_min" => self.pet_min,
            "pet_mean" => self.pet_mean,
            _ => None,
        }
    }
}

pub fn episode_metrics(log: &EpisodeLog, net: &CorridorNetwork, pet_max: f64) -> EpisodeMetrics {
    let released = log.vehicles.len();
    let tp = throughput(log);
    let mean_delay =
        if released == 0 { 0.0 } else { log.vehicles.iter().map(|v| v.delay).sum::<f64>() / released as f64 };
    let travel: Vec<f64> = log.vehicles.iter().filter_map(|v| v.travel_time()).collect();
    let hours = log.header.steps as f64 * log.header.dt / 3600.0;
    let pet = summarize_pet(&compute_pet(log, net, pet_max));
    EpisodeMetrics {
        schema: METRICS_SCHEMA,
        seed: log.header.seed,
        controller: log.header.controller.clone(),
        config_fingerprint: log.header.config_fingerprint.clone(),
        released,
        completed: tp.exited,
        mean_delay,
        mean_travel_time: (!travel.is_empty()).then(|| travel.iter().sum::<f64>() / travel.len() as f64),
        throughput_vph: if hours > 0.0 { tp.exited as f64 / hours } else { 0.0 },
        pet_count: pet.count,
        pet_min: pet.min,
        pet_mean: pet.mean,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub metric: String,
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    /// False when fewer than two values were available.
    pub sd_defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub controller: String,
    pub config_fingerprint: String,
    pub seeds: usize,
    pub stats: Vec<MetricStat>,
}

impl MetricsSummary {
    pub fn stat(&self, metric: &str) -> Option<&MetricStat> {
        self.stats.iter().find(|s| s.metric == metric)
    }
}

fn check_consistent(rows: &[EpisodeMetrics]) -> Result<(), MetricsError> {
    let first = rows.first().ok_or(MetricsError::Empty)?;
    for r in rows {
        if r.config_fingerprint != first.config_fingerprint {
            return Err(MetricsError::Inconsistent(format!("seed {} ran a different configuration", r.seed)));
        }
        if r.controller != first.controller {
            return Err(MetricsError::Inconsistent(format!("controllers {} and {}", first.controller, r.controller)));
        }
    }
    Ok(())
}

fn values(rows: &[EpisodeMetrics], metric: &str) -> Vec<f64> {
    rows.iter().filter_map(|r| r.value(metric)).filter(|v| v.is_finite()).collect()
}

pub fn summarize(rows: &[EpisodeMetrics]) -> Result<MetricsSummary, MetricsError> {
    check_consistent(rows)?;
    let stats = METRIC_NAMES
        .iter()
        .map(|&m| {
            let xs = values(rows, m);
            let (mean, sd) = mean_sd(&xs);
            MetricStat { metric: m.to_string(), n: xs.len(), mean, sd, sd_defined: xs.len() >= 2 }
        })
        .collect();
    Ok(MetricsSummary {
        controller: rows[0].controller.clone(),
        config_fingerprint: rows[0].config_fingerprint.clone(),
        seeds: rows.len(),
        stats,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub metric: String,
    pub mean_a: f64,
    pub sd_a: f64,
    pub mean_b: f64,
    pub sd_b: f64,
    /// (b − a) / a.
    pub relative_change: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub controller_a: String,
    pub controller_b: String,
    pub seeds_a: usize,
    pub seeds_b: usize,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonReport {
    pub fn row(&self, metric: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{} (n={}) vs {} (n={})\n{:<18} {:>12} {:>12} {:>10} {:>10}\n",
            self.controller_a, self.seeds_a, self.controller_b, self.seeds_b, "metric", "mean_a", "mean_b", "change", "p"
        );
        for r in &self.rows {
            s.push_str(&format!(
                "{:<18} {:>12.3} {:>12.3} {:>9.1}% {:>10.4}\n",
                r.metric,
                r.mean_a,
                r.mean_b,
                100.0 * r.relative_change,
                r.p_value
            ));
        }
        s
    }
}

/// Welch test per metric between two per-seed tables of the same configuration.
pub fn compare(a: &[EpisodeMetrics], b: &[EpisodeMetrics]) -> Result<ComparisonReport, MetricsError> {
    for side in [a, b] {
        if side.len() < 2 {
            return Err(MetricsError::TooFewSamples { need: 2, got: side.len() });
        }
        check_consistent(side)?;
    }
    if a[0].config_fingerprint != b[0].config_fingerprint {
        return Err(MetricsError::Inconsistent("result sets ran different configurations".into()));
    }
    let mut rows = Vec::new();
    for &m in &METRIC_NAMES {
        let (xa, xb) = (values(a, m), values(b, m));
        if xa.len() < 2 || xb.len() < 2 {
            continue;
        }
        let (mean_a, sd_a) = mean_sd(&xa);
        let (mean_b, sd_b) = mean_sd(&xb);
        let w = welch_test(&xa, &xb);
        let relative_change = if mean_a == mean_b {
            0.0
        } else if mean_a != 0.0 {
            (mean_b - mean_a) / mean_a.abs()
        } else {
            f64::NAN
        };
        rows.push(ComparisonRow { metric: m.to_string(), mean_a, sd_a, mean_b, sd_b, relative_change, t: w.t, df: w.df, p_value: w.p });
    }
    Ok(ComparisonReport {
        controller_a: a[0].controller.clone(),
        controller_b: b[0].controller.clone(),
        seeds_a: a.len(),
        seeds_b: b.len(),
        rows,
    })
}

pub fn write_metrics_csv<W: Write>(w: W, rows: &[EpisodeMetrics]) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    if rows.is_empty() {
        out.write_record([
            "schema",
            "seed",
            "controller",
            "config_fingerprint",
            "released",
            "completed",
            "mean_delay",
            "mean_travel_time",
            "throughput_vph",
            "pet_count",
            "pet_min",
            "pet_mean",
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_metrics_csv<R: Read>(r: R) -> Result<Vec<EpisodeMetrics>, MetricsError> {
    let mut rows = Vec::new();
    for rec in csv::Reader::from_reader(r).deserialize() {
        let row: EpisodeMetrics = rec?;
        if row.schema != METRICS_SCHEMA {
            return Err(MetricsError::Parse(format!("unsupported schema {}", row.schema)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_summary_csv<W: Write>(w: W, summary: &MetricsSummary) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["schema", "controller", "seeds", "metric", "n", "mean", "sd", "sd_defined"])?;
    for s in &summary.stats {
        out.write_record([
            METRICS_SCHEMA.to_string(),
            summary.controller.clone(),
            summary.seeds.to_string(),
            s.metric.clone(),
            s.n.to_string(),
            s.mean.to_string(),
            s.sd.to_string(),
            s.sd_defined.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_comparison_csv<W: Write>(w: W, report: &ComparisonReport) -> Result<(), MetricsError> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "schema", "controller_a", "controller_b", "metric", "mean_a", "sd_a", "mean_b", "sd_b", "relative_change", "t",
        "df", "p_value",
    ])?;
    for r in &report.rows {
        out.write_record([
            METRICS_SCHEMA.to_string(),
            report.controller_a.clone(),
            report.controller_b.clone(),
            r.metric.clone(),
            r.mean_a.to_string(),
            r.sd_a.to_string(),
            r.mean_b.to_string(),
            r.sd_b.to_string(),
            r.relative_change.to_string(),
            r.t.to_string(),
            r.df.to_string(),
            r.p_value.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
