//! Series tables and plot-ready data files.
//!
//! `series.csv` columns, in this order:
//!
//! | column | meaning |
//! |---|---|
//! | `t` | checkpoint time |
//! | `mass_<name>` | `∫ u_i`, one per species |
//! | `weighted_mass` | `Σ c_i ∫ u_i` with the model's mass-control weights |
//! | `linf_<name>` | `max |u_i|`, one per species |
//! | `energy_p<p>` | ℒ_p, one per requested order |
//! | `dissipation_ok` | `1` when the energy inequality holds for every order on the interval ending here, else `0`; the first row is always `1` |
//!
//! Floats use the shortest exponent notation that reads back exactly.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use qrd_core::diagnostics::SeriesRow;

use crate::config::Panel;

pub fn series_header(names: &[String], orders: &[u32]) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend(names.iter().map(|n| format!("mass_{n}")));
    cols.push("weighted_mass".into());
    cols.extend(names.iter().map(|n| format!("linf_{n}")));
    cols.extend(orders.iter().map(|p| format!("energy_p{p}")));
    cols.push("dissipation_ok".into());
    cols
}

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// `flags[k]` belongs to row `k`.
pub fn write_series(path: &Path, names: &[String], orders: &[u32], rows: &[SeriesRow], flags: &[bool]) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(&series_header(names, orders).join(","));
    out.push('\n');
    for (row, ok) in rows.iter().zip(flags) {
        let mut cells = vec![num(row.t)];
        cells.extend(row.masses.iter().map(|v| num(*v)));
        cells.push(num(row.weighted_mass));
        cells.extend(row.linf.iter().map(|v| num(*v)));
        cells.extend(row.energies.iter().map(|v| num(*v)));
        cells.push(if *ok { "1".into() } else { "0".into() });
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)
}

#[derive(Debug, Default)]
pub struct PlotOutput {
    pub files: Vec<PathBuf>,
    pub notices: Vec<String>,
}

/// Writes one whitespace-separated `<panel>.dat` per requested panel.
///
/// The masses panel has `1 + m` columns, plus the deceased total when
/// `deceased` is set. Energy rows with a non-positive value are dropped so
/// every value is safe on a log axis; the file and the returned notices say
/// how many.
pub fn emit_plot_data(
    dir: &Path,
    names: &[String],
    orders: &[u32],
    rows: &[SeriesRow],
    panels: &[Panel],
    deceased: bool,
) -> io::Result<PlotOutput> {
    fs::create_dir_all(dir)?;
    let mut result = PlotOutput::default();
    for panel in panels {
        let path = dir.join(format!("{}.dat", panel.name()));
        let mut out = Vec::new();
        match panel {
            Panel::Masses => {
                let mut header: Vec<String> = names.iter().map(|n| format!("mass_{n}")).collect();
                if deceased {
                    header.push("mass_d".into());
                }
                writeln!(out, "# t {}", header.join(" "))?;
                for row in rows {
                    let mut cols: Vec<String> = row.masses.iter().map(|v| num(*v)).collect();
                    if deceased {
                        cols.push(num(row.passive_total.unwrap_or(0.0)));
                    }
                    writeln!(out, "{} {}", num(row.t), cols.join(" "))?;
                }
            }
            Panel::Linf => {
                let header: Vec<String> = names.iter().map(|n| format!("linf_{n}")).collect();
                writeln!(out, "# t {}", header.join(" "))?;
                for row in rows {
                    let cols: Vec<String> = row.linf.iter().map(|v| num(*v)).collect();
                    writeln!(out, "{} {}", num(row.t), cols.join(" "))?;
                }
            }
            Panel::Energies => {
                let header: Vec<String> = orders.iter().map(|p| format!("energy_p{p}")).collect();
                writeln!(out, "# t {}", header.join(" "))?;
                let keep = |r: &&SeriesRow| r.energies.iter().all(|e| *e > 0.0 && e.is_finite());
                let omitted = rows.len() - rows.iter().filter(keep).count();
                if orders.is_empty() {
                    writeln!(out, "# no energy orders requested")?;
                } else if omitted > 0 {
                    writeln!(out, "# omitted {omitted} rows with a non-positive energy")?;
                    result.notices.push(format!(
                        "energies panel: omitted {omitted} of {} rows with a non-positive energy",
                        rows.len()
                    ));
                }
                if !orders.is_empty() {
                    for row in rows.iter().filter(keep) {
                        let cols: Vec<String> = row.energies.iter().map(|v| num(*v)).collect();
                        writeln!(out, "{} {}", num(row.t), cols.join(" "))?;
                    }
                }
            }
        }
        fs::write(&path, out)?;
        result.files.push(path);
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, energy: f64) -> SeriesRow {
        SeriesRow {
            t,
            masses: vec![1.0, 2.0],
            weighted_mass: 3.0,
            linf: vec![0.5, 0.25],
            energies: vec![energy],
            clamp_mass: 0.0,
            passive_total: Some(0.125),
        }
    }

    #[test]
    fn header_follows_the_documented_order() {
        let names = vec!["u".to_string(), "v".to_string()];
        assert_eq!(
            series_header(&names, &[2, 3]).join(","),
            "t,mass_u,mass_v,weighted_mass,linf_u,linf_v,energy_p2,energy_p3,dissipation_ok"
        );
    }

    #[test]
    fn floats_read_back_exactly() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, 0.0] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn energy_panel_drops_non_positive_rows() {
        let dir = tempfile::tempdir().unwrap();
        let names = vec!["u".to_string(), "v".to_string()];
        let rows = vec![row(0.0, 1.0), row(1.0, 0.0), row(2.0, 0.5)];
        let out = emit_plot_data(dir.path(), &names, &[2], &rows, &[Panel::Energies, Panel::Masses], true).unwrap();
        assert_eq!(out.files.len(), 2);
        assert_eq!(out.notices.len(), 1);
        let text = fs::read_to_string(dir.path().join("energies.dat")).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, ["0e0 1e0", "2e0 5e-1"]);
        let masses = fs::read_to_string(dir.path().join("masses.dat")).unwrap();
        assert!(masses.lines().skip(1).all(|l| l.split_whitespace().count() == 4));
    }
}
