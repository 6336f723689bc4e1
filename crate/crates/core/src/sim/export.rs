//! Summary CSV writer/parser and run metadata.
//!
//! CSV schema (one row per scenario x test x n):
//! `scenario,test,n,replications,failures,reject_rate,mc_se,seed,runtime_s`.
//! Rates are printed with the shortest round-trip float form, so re-parsing
//! reproduces them bit for bit. `runtime_s` is wall clock and is the only
//! column that varies between otherwise identical runs.

use super::{CellSummary, SimulationSummary, TestKind};
use crate::error::{Error, Result};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const CSV_HEADER: &str = "scenario,test,n,replications,failures,reject_rate,mc_se,seed,runtime_s";

/// Writes `summary.csv`, `metadata.txt`, and (optionally) one SVG rejection
/// plot per scenario into `dir`. Returns the CSV path.
pub fn export_summary(
    summaries: &[SimulationSummary],
    dir: &Path,
    with_plots: bool,
) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let csv_path = dir.join("summary.csv");
    let mut csv = String::new();
    csv.push_str(CSV_HEADER);
    csv.push('\n');
    for summary in summaries {
        for cell in &summary.cells {
            csv.push_str(&format_row(cell));
            csv.push('\n');
        }
    }
    write_file(&csv_path, csv.as_bytes())?;

    let meta_path = dir.join("metadata.txt");
    let mut meta = String::new();
    for summary in summaries {
        meta.push_str(&format!(
            "scenario {} (master_seed {}, alpha {})\n",
            summary.scenario, summary.master_seed, summary.alpha
        ));
        for note in &summary.notes {
            meta.push_str(&format!("  note: {note}\n"));
        }
        if summary.invalid_cells.is_empty() {
            meta.push_str("  all cells valid (failure rate <= 5%)\n");
        } else {
            for cell in &summary.invalid_cells {
                meta.push_str(&format!("  INVALID cell (failure rate > 5%): {cell}\n"));
            }
        }
    }
    write_file(&meta_path, meta.as_bytes())?;

    if with_plots {
        for summary in summaries {
            let svg = super::plot::rejection_plot_svg(
                &summary.scenario,
                &summary.cells,
                summary.alpha,
            );
            let path = dir.join(format!("plot_{}.svg", summary.scenario));
            write_file(&path, svg.as_bytes())?;
        }
    }
    Ok(csv_path)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f =
        fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    f.write_all(bytes)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn format_row(cell: &CellSummary) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{:.3}",
        cell.scenario,
        cell.test.name(),
        cell.n,
        cell.replications,
        cell.failures,
        cell.reject_rate,
        cell.mc_se,
        cell.seed,
        cell.runtime_s
    )
}

/// Parses a summary CSV produced by [`export_summary`].
pub fn parse_summary_csv(path: &Path) -> Result<Vec<CellSummary>> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Data(format!(
                "{}: unexpected header {:?}",
                path.display(),
                other
            )))
        }
    }
    let mut cells = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::Data(format!(
                "{}: row {} has {} fields, expected 9",
                path.display(),
                idx + 2,
                fields.len()
            )));
        }
        let parse_err = |what: &str| {
            Error::Data(format!("{}: row {}: bad {what}", path.display(), idx + 2))
        };
        cells.push(CellSummary {
            scenario: fields[0].to_string(),
            test: TestKind::from_str(fields[1]).map_err(|_| parse_err("test"))?,
            n: fields[2].parse().map_err(|_| parse_err("n"))?,
            replications: fields[3].parse().map_err(|_| parse_err("replications"))?,
            failures: fields[4].parse().map_err(|_| parse_err("failures"))?,
            reject_rate: fields[5].parse().map_err(|_| parse_err("reject_rate"))?,
            mc_se: fields[6].parse().map_err(|_| parse_err("mc_se"))?,
            seed: fields[7].parse().map_err(|_| parse_err("seed"))?,
            runtime_s: fields[8].parse().map_err(|_| parse_err("runtime_s"))?,
        });
    }
    Ok(cells)
}
