//! Cartesian experiment grids, one child process per cell.
//!
//! A grid file holds a `base` run config (possibly partial) and, for any
//! run-config field, a list of values:
//!
//! ```json
//! { "base": { "material": "material1", "mu": 0.0, "seed": 1 },
//!   "D": [10, 100], "decoder": ["baseline", "pod"] }
//! ```
//!
//! Each cell runs `pgnniv train` in its own directory, named after the run.
//! Timing-based aggregates are only meaningful with `--jobs 1`.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::thread;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use serde::Deserialize;
use serde_json::{Map, Value};

use pgnniv::RunConfig;

use crate::aggregate::write_aggregates;
use crate::{CmdResult, Failure, SweepArgs};

#[derive(Debug, Deserialize)]
struct GridFile {
    #[serde(default)]
    base: Map<String, Value>,
    #[serde(flatten)]
    axes: BTreeMap<String, Vec<Value>>,
}

/// Every cell of the grid as a validated config, in axis-major order.
pub fn expand(text: &str, relative_to: &Path) -> anyhow::Result<Vec<RunConfig>> {
    let grid: GridFile = serde_json::from_str(text).context("parsing grid")?;
    let mut cells = vec![grid.base.clone()];
    for (key, values) in &grid.axes {
        cells = cells
            .iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.insert(key.clone(), v.clone());
                    c
                })
            })
            .collect();
    }
    if cells.is_empty() {
        bail!("grid has no cells (an axis lists no values)");
    }
    let mut names = BTreeSet::new();
    cells
        .into_iter()
        .map(|cell| {
            let shown = Value::Object(cell.clone()).to_string();
            let mut config: RunConfig = serde_json::from_value(Value::Object(cell))
                .with_context(|| format!("grid cell {shown}"))?;
            config
                .validate()
                .map_err(|e| anyhow!("grid cell {}: {e}", config.run_name()))?;
            for p in [
                &mut config.data,
                &mut config.source_checkpoint,
                &mut config.decoder_file,
            ]
            .into_iter()
            .flatten()
            {
                if p.is_relative() {
                    *p = relative_to.join(&*p);
                }
            }
            if !names.insert(config.run_name()) {
                bail!("grid produces {} twice", config.run_name());
            }
            Ok(config)
        })
        .collect()
}

struct Running {
    name: String,
    dir: PathBuf,
    child: Child,
}

fn spawn(exe: &Path, config: &RunConfig, dir: &Path) -> anyhow::Result<Child> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let config_path = dir.join("config.json");
    fs::write(&config_path, serde_json::to_string_pretty(config)?)?;
    let log = File::create(dir.join("log.txt"))?;
    Command::new(exe)
        .arg("train")
        .arg("--config")
        .arg(&config_path)
        .stdout(log.try_clone()?)
        .stderr(log)
        .stdin(Stdio::null())
        .spawn()
        .with_context(|| format!("starting {}", exe.display()))
}

pub fn run(a: SweepArgs) -> CmdResult {
    if a.jobs == 0 {
        return Err(anyhow!("--jobs must be at least 1").into());
    }
    let text =
        fs::read_to_string(&a.grid).with_context(|| format!("reading {}", a.grid.display()))?;
    let grid_dir = match a.grid.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::path::absolute(dir)?,
        None => std::env::current_dir()?,
    };
    let mut cells = expand(&text, &grid_dir)?;
    let root = std::path::absolute(&a.root.root)?;
    for c in &mut cells {
        c.outdir = Some(root.join(c.run_name()));
    }
    let exe = std::env::current_exe().context("locating the pgnniv executable")?;

    let mut pending = cells.iter().rev().collect::<Vec<_>>();
    let mut running: Vec<Running> = Vec::new();
    let mut finished: Vec<(String, PathBuf)> = Vec::new();
    let mut failures: Vec<(String, Option<i32>)> = Vec::new();
    while !pending.is_empty() || !running.is_empty() {
        while running.len() < a.jobs {
            let Some(config) = pending.pop() else { break };
            let dir = config.outdir.clone().expect("set above");
            let name = config.run_name();
            eprintln!("[start] {name}");
            match spawn(&exe, config, &dir) {
                Ok(child) => running.push(Running { name, dir, child }),
                Err(e) => {
                    eprintln!("[fail]  {name}: {e:#}");
                    failures.push((name, None));
                }
            }
        }
        let mut still = Vec::with_capacity(running.len());
        for mut r in running.drain(..) {
            match r.child.try_wait()? {
                None => still.push(r),
                Some(status) if status.success() => {
                    eprintln!("[done]  {}", r.name);
                    finished.push((r.name, r.dir));
                }
                Some(status) => {
                    eprintln!(
                        "[fail]  {} (exit {status}), see {}",
                        r.name,
                        r.dir.join("log.txt").display()
                    );
                    failures.push((r.name, status.code()));
                }
            }
        }
        running = still;
        if !running.is_empty() {
            thread::sleep(Duration::from_millis(20));
        }
    }

    let reports = finished
        .iter()
        .map(|(_, dir)| {
            let path = dir.join("report.json");
            let text =
                fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    write_aggregates(&reports, &root)?;
    let summary: String = failures
        .iter()
        .map(|(name, code)| {
            format!(
                "{name},{}\n",
                code.map_or("none".to_string(), |c| c.to_string())
            )
        })
        .collect();
    fs::write(
        root.join("failures.csv"),
        format!("run,exit_code\n{summary}"),
    )?;
    println!(
        "{} of {} cells succeeded; aggregates in {}",
        finished.len(),
        cells.len(),
        root.display()
    );
    if failures.is_empty() {
        return Ok(());
    }
    let err = anyhow!("{} cells failed, listed in failures.csv", failures.len());
    if failures.iter().any(|(_, code)| *code == Some(2)) {
        Err(Failure::Numerical(err))
    } else {
        Err(Failure::Usage(err))
    }
}
