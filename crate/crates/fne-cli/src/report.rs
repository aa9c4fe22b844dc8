//! CSV serialization and console tables for logs, reports, and curves.
//! All CSVs are UTF-8 with a header row.

use std::fmt::Write as _;
use std::path::Path;

use fne_core::datagen::PairedDataset;
use fne_core::eval::RetrievalReport;
use fne_core::sampler::{combined_weights, CandidatePool, FneConfig};
use fne_core::stats::Snapshot;
use fne_core::train::EpochLog;

use crate::error::{io_err, Result};
use crate::runner::step_fn_rate;

/// Render a float without padding; integral recalls still get a decimal
/// point so columns stay self-describing.
fn num(v: f64) -> String {
    format!("{v}")
}

pub fn epoch_log_csv(logs: &[EpochLog], dataset: &PairedDataset) -> String {
    let mut out = String::from(
        "epoch,step,loss,mu_pos,sigma_pos,mu_neg,sigma_neg,tracker_ready,fn_sample_rate\n",
    );
    for epoch in logs {
        for step in &epoch.steps {
            let fn_rate = step_fn_rate(step, dataset)
                .map_or_else(String::new, |r| num(r));
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                step.epoch,
                step.step,
                num(step.loss),
                num(step.mu_pos),
                num(step.sigma_pos),
                num(step.mu_neg),
                num(step.sigma_neg),
                step.tracker_ready,
                fn_rate,
            );
        }
    }
    out
}

pub fn report_csv(report: &RetrievalReport) -> String {
    let mut out = String::from("direction,K,recall\n");
    for (name, dir) in [
        ("image-to-text", &report.image_to_text),
        ("text-to-image", &report.text_to_image),
    ] {
        for &(k, r) in &dir.recall_at {
            let _ = writeln!(out, "{name},{k},{}", num(r));
        }
    }
    out
}

pub fn report_table(report: &RetrievalReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<15} {:>6} {:>10}", "direction", "K", "recall");
    for (name, dir) in [
        ("image-to-text", &report.image_to_text),
        ("text-to-image", &report.text_to_image),
    ] {
        for &(k, r) in &dir.recall_at {
            let _ = writeln!(out, "{name:<15} {k:>6} {r:>10.4}");
        }
    }
    out
}

/// One row of the weight-curve sweep.
pub struct CurvePoint {
    pub s: f64,
    pub posterior: f64,
    pub weight: f64,
    pub cut_down: bool,
}

/// Sweep candidate similarity over [-1, 1] at the given step and weight
/// each point. The representative positive similarity is `mu_pos`, so the
/// cut-down branch is evaluated against the typical positive.
pub fn weights_curve(
    snapshot: &Snapshot,
    fne: &FneConfig,
    step: f64,
) -> Result<Vec<CurvePoint>> {
    let n = (2.0 / step).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| -1.0 + i as f64 * step).collect();
    let pool = CandidatePool::new(
        (0..grid.len() as u64).collect(),
        grid.clone(),
        snapshot.mu_pos,
    )?;
    let report = combined_weights(&pool, snapshot, fne)?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(i, &s)| CurvePoint {
            s,
            posterior: report.posterior[i],
            weight: report.weight[i],
            cut_down: report.cut_down_mask[i],
        })
        .collect())
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("s,posterior,weight,branch\n");
    for p in points {
        let branch = if p.cut_down { "cut-down" } else { "posterior" };
        let _ = writeln!(out, "{},{},{},{branch}", num(p.s), num(p.posterior), num(p.weight));
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use fne_core::eval::DirectionReport;
    use fne_core::sampler::SamplingMode;

    fn report() -> RetrievalReport {
        RetrievalReport {
            image_to_text: DirectionReport {
                recall_at: vec![(1, 0.5), (5, 1.0)],
                n_queries: 4,
            },
            text_to_image: DirectionReport {
                recall_at: vec![(1, 0.25), (5, 0.75)],
                n_queries: 8,
            },
        }
    }

    #[test]
    fn report_csv_shape() {
        let csv = report_csv(&report());
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "direction,K,recall");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "image-to-text,1,0.5");
        assert_eq!(lines[4], "text-to-image,5,0.75");
    }

    #[test]
    fn table_is_aligned() {
        let table = report_table(&report());
        let widths: Vec<usize> = table.lines().map(str::len).collect();
        assert!(widths.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn curve_covers_the_interval_with_constant_posterior_when_symmetric() {
        let snapshot = Snapshot {
            mu_pos: 0.4,
            sigma_pos: 0.1,
            mu_neg: 0.4,
            sigma_neg: 0.1,
            ready: true,
        };
        let fne = FneConfig {
            prior_p: 0.5,
            alpha: 0.5,
            lambda: 0.01,
            mode: SamplingMode::Fne,
        };
        let points = weights_curve(&snapshot, &fne, 0.001).unwrap();
        assert_eq!(points.len(), 2001);
        assert_eq!(points[0].s, -1.0);
        assert!((points[2000].s - 1.0).abs() < 1e-12);
        for p in &points {
            assert!((p.posterior - 0.5).abs() < 1e-12);
            assert!(p.weight > 0.0 && p.weight <= 1.0);
        }
    }
}
