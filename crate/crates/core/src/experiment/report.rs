use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::rift::RoundMetrics;

use super::{mean, SweepResult};

pub const METRICS_HEADER: [&str; 10] = [
    "run_id",
    "seed",
    "omega",
    "B",
    "round",
    "success_rate",
    "mean_return",
    "intervention_rate",
    "kl_to_prior",
    "dataset_size",
];

/// Sample standard error; zero for fewer than two values.
pub fn stderr(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (var / xs.len() as f64).sqrt()
}

pub fn write_metrics_csv<W: Write>(result: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_HEADER)?;
    for (key, m) in result.rows() {
        w.write_record([
            key.run_id(),
            key.seed.to_string(),
            key.omega.to_string(),
            key.threshold.to_string(),
            m.round.to_string(),
            m.success_rate.to_string(),
            m.mean_return.to_string(),
            m.intervention_rate.to_string(),
            m.kl_to_prior.to_string(),
            m.dataset_size.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<metrics>", e))?;
    Ok(())
}

/// Mean and standard error across seeds for one `(ω, B, round)` group.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub omega: f64,
    pub threshold: f64,
    pub round: usize,
    pub seeds: usize,
    pub success: (f64, f64),
    pub mean_return: (f64, f64),
    pub intervention_rate: (f64, f64),
    pub kl_to_prior: (f64, f64),
}

type GroupKey = (u64, u64, usize);

fn group<'a>(rows: impl Iterator<Item = (&'a super::RunKey, &'a RoundMetrics)>) -> Vec<SummaryRow> {
    // groups are emitted in first-seen order
    let mut order: Vec<GroupKey> = Vec::new();
    let mut groups: BTreeMap<GroupKey, Vec<&RoundMetrics>> = BTreeMap::new();
    for (key, m) in rows {
        let g = (key.omega.to_bits(), key.threshold.to_bits(), m.round);
        groups.entry(g).or_insert_with(|| {
            order.push(g);
            Vec::new()
        });
        groups.get_mut(&g).expect("inserted").push(m);
    }
    order
        .into_iter()
        .map(|g| {
            let ms = &groups[&g];
            let stat = |f: fn(&RoundMetrics) -> f64| {
                let xs: Vec<f64> = ms.iter().map(|m| f(m)).collect();
                (mean(&xs), stderr(&xs))
            };
            SummaryRow {
                omega: f64::from_bits(g.0),
                threshold: f64::from_bits(g.1),
                round: g.2,
                seeds: ms.len(),
                success: stat(|m| m.success_rate),
                mean_return: stat(|m| m.mean_return),
                intervention_rate: stat(|m| m.intervention_rate),
                kl_to_prior: stat(|m| m.kl_to_prior),
            }
        })
        .collect()
}

/// Final-round statistics per `(ω, B)`.
pub fn summarize(result: &SweepResult) -> Vec<SummaryRow> {
    group(result.final_rows())
}

fn write_summary<W: Write>(rows: &[SummaryRow], with_round: bool, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["omega", "B"];
    if with_round {
        header.push("round");
    }
    header.extend([
        "seeds",
        "success_mean",
        "success_stderr",
        "mean_return_mean",
        "mean_return_stderr",
        "intervention_rate_mean",
        "intervention_rate_stderr",
        "kl_to_prior_mean",
        "kl_to_prior_stderr",
    ]);
    w.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.omega.to_string(), r.threshold.to_string()];
        if with_round {
            rec.push(r.round.to_string());
        }
        rec.push(r.seeds.to_string());
        for (m, s) in [r.success, r.mean_return, r.intervention_rate, r.kl_to_prior] {
            rec.push(m.to_string());
            rec.push(s.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `metrics.csv`, `learning_curves.csv` and `summary.csv` into `out_dir`.
pub fn report(result: &SweepResult, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics = out_dir.join("metrics.csv");
    let curves = out_dir.join("learning_curves.csv");
    let summary = out_dir.join("summary.csv");
    write_metrics_csv(result, create(&metrics)?)?;
    write_summary(&group(result.rows()), true, create(&curves)?)?;
    write_summary(&summarize(result), false, create(&summary)?)?;
    Ok(vec![metrics, curves, summary])
}
