use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, ValueEnum};
use codat_core::metrics::{fec_table, MethodSummary};
use codat_core::{EvalReport, FecRow};
use serde::Serialize;

use crate::train::{NATURAL_REPORT, ROBUST_REPORT};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Which {
    Robust,
    Natural,
}

#[derive(Args, Debug, Default)]
pub struct FecArgs {
    /// `NAME=PATH` to an EvalReport JSON or a run directory. Repeatable.
    #[arg(long = "report", value_name = "NAME=PATH")]
    pub reports: Vec<String>,
    /// CSV with `method`, `avg` and `wst` columns; other columns are ignored
    /// unless named in `--group-by`.
    #[arg(long, conflicts_with = "reports")]
    pub table: Option<PathBuf>,
    /// Comma-separated columns; one FEC table per distinct value combination.
    #[arg(long, value_delimiter = ',')]
    pub group_by: Vec<String>,
    #[arg(long)]
    pub baseline: String,
    /// Report to read from run directories.
    #[arg(long, value_enum)]
    pub which: Option<Which>,
    /// CSV output (default: stdout).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// JSON output with full-precision FEC.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FecGroup {
    pub group: BTreeMap<String, String>,
    pub baseline: String,
    pub rows: Vec<FecRow>,
}

fn load_report(path: &Path, which: Which) -> Result<EvalReport> {
    let file = if path.is_dir() {
        path.join(match which {
            Which::Robust => ROBUST_REPORT,
            Which::Natural => NATURAL_REPORT,
        })
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&file).with_context(|| format!("reading report {}", file.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing report {}", file.display()))
}

fn from_reports(specs: &[String], which: Which) -> Result<Vec<MethodSummary>> {
    let mut out: Vec<MethodSummary> = Vec::new();
    for spec in specs {
        let (name, path) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--report expects NAME=PATH, got {spec:?}"))?;
        if out.iter().any(|m| m.method == name) {
            bail!("duplicate report name {name:?}");
        }
        out.push(load_report(Path::new(path), which)?.summary(name));
    }
    Ok(out)
}

/// Group key (column name to value) and the methods in that group.
pub type TableGroup = (BTreeMap<String, String>, Vec<MethodSummary>);

/// Rows of a method/avg/wst CSV, grouped by `group_by` in order of first
/// appearance.
pub fn read_table(path: &Path, group_by: &[String]) -> Result<Vec<TableGroup>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("reading table {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| anyhow!("{}: missing column {name:?}", path.display()))
    };
    let (m, a, w) = (column("method")?, column("avg")?, column("wst")?);
    let groups: Vec<usize> = group_by.iter().map(|g| column(g)).collect::<Result<_>>()?;
    let mut out: Vec<TableGroup> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("").trim().to_string();
        let number = |i: usize, name: &str| -> Result<f64> {
            field(i)
                .parse()
                .map_err(|_| anyhow!("{}: row {}: bad {name} {:?}", path.display(), line + 2, field(i)))
        };
        let key: BTreeMap<String, String> = group_by.iter().cloned().zip(groups.iter().map(|&i| field(i))).collect();
        let row = MethodSummary {
            method: field(m),
            avg: number(a, "avg")?,
            wst: number(w, "wst")?,
        };
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, rows)) => {
                if rows.iter().any(|r| r.method == row.method) {
                    bail!("{}: duplicate method {:?} in group {key:?}", path.display(), row.method);
                }
                rows.push(row)
            }
            None => out.push((key, vec![row])),
        }
    }
    if out.is_empty() {
        bail!("{}: no rows", path.display());
    }
    Ok(out)
}

/// FEC tables for every group.
pub fn compute(args: &FecArgs) -> Result<Vec<FecGroup>> {
    let inputs = match (&args.table, args.reports.is_empty()) {
        (Some(table), _) => read_table(table, &args.group_by)?,
        (None, false) => {
            if !args.group_by.is_empty() {
                bail!("--group-by applies to --table input only");
            }
            vec![(
                BTreeMap::new(),
                from_reports(&args.reports, args.which.unwrap_or(Which::Robust))?,
            )]
        }
        (None, true) => bail!("give --table or at least one --report"),
    };
    inputs
        .into_iter()
        .map(|(group, methods)| {
            let rows = fec_table(&methods, &args.baseline).map_err(|e| {
                if group.is_empty() {
                    anyhow!("{e}")
                } else {
                    anyhow!("group {group:?}: {e}")
                }
            })?;
            Ok(FecGroup {
                group,
                baseline: args.baseline.clone(),
                rows,
            })
        })
        .collect()
}

/// Group columns, then `method,avg,wst,fec` with FEC to two decimals.
pub fn write_csv<W: Write>(groups: &[FecGroup], group_by: &[String], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = group_by.iter().map(String::as_str).collect();
    header.extend(["method", "avg", "wst", "fec"]);
    w.write_record(&header)?;
    for g in groups {
        for r in &g.rows {
            let mut rec: Vec<String> = group_by.iter().map(|c| g.group[c].clone()).collect();
            rec.extend([
                r.method.clone(),
                r.avg.to_string(),
                r.wst.to_string(),
                format!("{:.2}", r.fec),
            ]);
            w.write_record(&rec)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn run(args: &FecArgs) -> Result<()> {
    let groups = compute(args)?;
    match &args.csv {
        Some(path) => write_csv(&groups, &args.group_by, std::fs::File::create(path)?)?,
        None => write_csv(&groups, &args.group_by, std::io::stdout().lock())?,
    }
    if let Some(path) = &args.json {
        let mut text = serde_json::to_string_pretty(&groups)?;
        text.push('\n');
        std::fs::write(path, text)?;
    }
    Ok(())
}
