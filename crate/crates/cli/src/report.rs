//! Table and plot rendering for simulation summaries.

use crate::CliError;
use signflip::sim::{rejection_plot_svg, CellSummary};
use std::collections::BTreeSet;
use std::path::Path;

/// Prints one table per scenario: rows are sample sizes, columns tests.
pub fn print_summary_table(cells: &[CellSummary], alpha: f64) {
    let scenarios: BTreeSet<&str> = cells.iter().map(|c| c.scenario.as_str()).collect();
    for scenario in scenarios {
        let rows: Vec<&CellSummary> = cells.iter().filter(|c| c.scenario == scenario).collect();
        let tests: Vec<_> = {
            let mut seen = Vec::new();
            for c in &rows {
                if !seen.contains(&c.test) {
                    seen.push(c.test);
                }
            }
            seen
        };
        let ns: BTreeSet<usize> = rows.iter().map(|c| c.n).collect();
        println!("scenario {scenario} (rejection rates, nominal {alpha})");
        print!("{:>8}", "n");
        for t in &tests {
            print!("{:>16}", t.name());
        }
        println!("{:>10}", "failures");
        for &n in &ns {
            print!("{n:>8}");
            let mut failures = 0usize;
            for t in &tests {
                let cell = rows.iter().find(|c| c.n == n && c.test == *t);
                match cell {
                    Some(c) => {
                        print!("{:>16}", format!("{:.4}±{:.4}", c.reject_rate, c.mc_se));
                        failures = failures.max(c.failures);
                    }
                    None => print!("{:>16}", "-"),
                }
            }
            println!("{failures:>10}");
        }
    }
}

pub fn write_plots(cells: &[CellSummary], alpha: f64, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::data(format!("{}: {e}", dir.display())))?;
    let scenarios: BTreeSet<String> = cells.iter().map(|c| c.scenario.clone()).collect();
    for scenario in scenarios {
        let svg = rejection_plot_svg(&scenario, cells, alpha);
        let path = dir.join(format!("plot_{scenario}.svg"));
        std::fs::write(&path, svg)
            .map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
