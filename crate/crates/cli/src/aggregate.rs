use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;

use pgnniv::metrics::{
    match_key, overfitting_points, speedup_table, write_overfit_csv, write_speedup_csv,
    write_table_csv, SpeedupRow,
};
use pgnniv::{DecoderKind, RunReport};

use crate::{CmdResult, ReportArgs};

/// Every `report.json` under `dir`, in path order.
pub fn collect_reports(dir: &Path) -> anyhow::Result<Vec<RunReport>> {
    let mut paths = Vec::new();
    find_reports(dir, &mut paths)?;
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

fn find_reports(dir: &Path, out: &mut Vec<PathBuf>) -> anyhow::Result<()> {
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let path = entry?.path();
        if path.is_dir() {
            find_reports(&path, out)?;
        } else if path.file_name().is_some_and(|n| n == "report.json") {
            out.push(path);
        }
    }
    Ok(())
}

/// Speed-up rows for the embedding runs that have a baseline twin; the rest
/// are listed in the second value.
pub fn speedups(reports: &[RunReport]) -> anyhow::Result<(Vec<SpeedupRow>, Vec<String>)> {
    let baselines: BTreeSet<String> = reports
        .iter()
        .filter(|r| r.config.decoder == DecoderKind::Baseline)
        .map(|r| match_key(&r.config))
        .collect();
    let (matched, unmatched): (Vec<&RunReport>, Vec<&RunReport>) = reports.iter().partition(|r| {
        r.config.decoder == DecoderKind::Baseline || baselines.contains(&match_key(&r.config))
    });
    let matched: Vec<RunReport> = matched.into_iter().cloned().collect();
    Ok((
        speedup_table(&matched)?,
        unmatched.iter().map(|r| r.config.run_name()).collect(),
    ))
}

/// Writes `table.csv`, `speedup.csv` and `overfit.csv` into `out`, rows
/// ordered by material, D, mu, n, decoder, mode and seed.
pub fn write_aggregates(reports: &[RunReport], out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut reports = reports.to_vec();
    reports.sort_by(|a, b| {
        let (a, b) = (&a.config, &b.config);
        a.material
            .name()
            .cmp(b.material.name())
            .then(a.dataset_size.cmp(&b.dataset_size))
            .then(a.mu.total_cmp(&b.mu))
            .then(a.m.cmp(&b.m))
            .then(a.n.cmp(&b.n))
            .then(a.decoder.cmp(&b.decoder))
            .then(format!("{:?}", a.mode).cmp(&format!("{:?}", b.mode)))
            .then(a.seed.cmp(&b.seed))
    });
    let reports = &reports[..];
    let (rows, unmatched) = speedups(reports)?;
    for name in unmatched {
        eprintln!(
            "warning: {name} has no baseline run to compare against; left out of speedup.csv"
        );
    }
    write_table_csv(&out.join("table.csv"), reports).context("writing table.csv")?;
    write_speedup_csv(&out.join("speedup.csv"), &rows).context("writing speedup.csv")?;
    write_overfit_csv(&out.join("overfit.csv"), &overfitting_points(reports))
        .context("writing overfit.csv")?;
    Ok(())
}

pub fn report(a: ReportArgs) -> CmdResult {
    let reports = collect_reports(&a.dir)?;
    if reports.is_empty() {
        return Err(anyhow::anyhow!("no report.json found under {}", a.dir.display()).into());
    }
    let out = a.out.unwrap_or(a.dir);
    write_aggregates(&reports, &out)?;
    println!(
        "aggregated {} reports into {}",
        reports.len(),
        out.display()
    );
    Ok(())
}
