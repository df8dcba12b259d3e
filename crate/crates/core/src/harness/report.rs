use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::config::InitMode;
use super::matrix::{CellStatus, ReportBundle};
use crate::breadth::{breadth_table_csv, BreadthRow};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportFormat {
    Json,
    Csv,
    SvgRadar,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Json, ReportFormat::Csv, ReportFormat::SvgRadar];
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "svg" | "svg_radar" => Ok(ReportFormat::SvgRadar),
            other => Err(Error::Config(format!("unknown report format '{other}'"))),
        }
    }
}

/// Init comparison per (task, strategy, metric), `mean ± std` per init.
pub fn comparison_csv(bundle: &ReportBundle) -> String {
    let mut out = String::from("task,strategy,metric,random,pretrained,higher,p_value\n");
    for c in &bundle.comparisons {
        let show = |a: &Option<crate::metrics::CvAggregate>| a.map(|a| a.display()).unwrap_or_default();
        let p = c.p_value.map(|p| format!("{p:.4}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            c.task,
            c.strategy,
            c.metric,
            show(&c.random),
            show(&c.pretrained),
            c.higher.as_deref().unwrap_or(""),
            p
        );
    }
    out
}

/// Same content as [`comparison_csv`] as a Markdown table with the higher
/// value of each comparison in bold.
pub fn comparison_markdown(bundle: &ReportBundle) -> String {
    let mut out = String::from("| task | strategy | metric | random | pretrained | p |\n|---|---|---|---|---|---|\n");
    for c in &bundle.comparisons {
        let show = |a: &Option<crate::metrics::CvAggregate>, who: &str| match a {
            Some(a) if c.higher.as_deref() == Some(who) => format!("**{}**", a.display()),
            Some(a) => a.display(),
            None => "n/a".into(),
        };
        let p = c.p_value.map(|p| format!("{p:.4}")).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            c.task,
            c.strategy,
            c.metric,
            show(&c.random, "random"),
            show(&c.pretrained, "pretrained"),
            p
        );
    }
    out
}

pub fn folds_csv(bundle: &ReportBundle) -> String {
    let mut out = String::from("task,strategy,init,seed,fold,n_train,n_validation,validation_positivity,auroc,auprc,final_loss\n");
    let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_default();
    for c in &bundle.cells {
        for f in &c.folds {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{:.4},{},{},{}",
                c.task,
                c.strategy,
                c.init,
                f.seed,
                f.fold,
                f.n_train,
                f.n_validation,
                f.validation_positivity,
                opt(f.auroc),
                opt(f.auprc),
                opt(f.final_loss)
            );
        }
    }
    out
}

pub fn cells_csv(bundle: &ReportBundle) -> String {
    let mut out = String::from("task,strategy,init,status,auroc,auprc\n");
    for c in &bundle.cells {
        let status = match &c.status {
            CellStatus::Ok => "ok".to_string(),
            CellStatus::Failed { cause } => format!("failed: {}", cause.replace([',', '\n'], " ")),
        };
        let show = |a: &Option<crate::metrics::CvAggregate>| a.map(|a| a.display()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{}", c.task, c.strategy, c.init, status, show(&c.auroc), show(&c.auprc));
    }
    out
}

pub fn subgroups_csv(bundle: &ReportBundle) -> String {
    let mut out = String::from("task,strategy,init,subgroup,n_pairs,n_folds,auroc\n");
    for r in &bundle.subgroups {
        let auc = r.auroc.map(|a| format!("{a:.4}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{},{},{},{}", r.task, r.strategy, r.init, r.subgroup, r.n_pairs, r.n_folds, auc);
    }
    out
}

pub fn breadth_csv(bundle: &ReportBundle, init: InitMode) -> String {
    let rows: Vec<BreadthRow> = bundle.breadth.iter().filter(|b| b.init == init).map(|b| b.row.clone()).collect();
    breadth_table_csv(&rows)
}

/// Spider diagram: one axis per (task, strategy) with results, one polygon
/// per init mode, radius = mean AUROC.
pub fn radar_svg(bundle: &ReportBundle) -> String {
    const SIZE: f64 = 560.0;
    const R: f64 = 190.0;
    let c = SIZE / 2.0;
    let mut axes: Vec<(crate::dataset::Task, crate::split::SplitStrategy)> = Vec::new();
    for cell in &bundle.cells {
        if !axes.contains(&(cell.task, cell.strategy)) {
            axes.push((cell.task, cell.strategy));
        }
    }
    let mut inits: Vec<InitMode> = bundle.cells.iter().map(|c| c.init).collect();
    inits.sort();
    inits.dedup();

    let n = axes.len().max(1) as f64;
    let point = |i: usize, v: f64| {
        let angle = std::f64::consts::TAU * i as f64 / n - std::f64::consts::FRAC_PI_2;
        (c + R * v * angle.cos(), c + R * v * angle.sin())
    };
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" viewBox=\"0 0 {SIZE} {SIZE}\" font-family=\"sans-serif\" font-size=\"11\">"
    );
    let _ = writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>");
    if axes.len() >= 3 {
        for level in [0.25, 0.5, 0.75, 1.0] {
            let pts: Vec<String> = (0..axes.len())
                .map(|i| {
                    let (x, y) = point(i, level);
                    format!("{x:.2},{y:.2}")
                })
                .collect();
            let _ = writeln!(svg, "<polygon class=\"grid\" points=\"{}\" fill=\"none\" stroke=\"#dddddd\"/>", pts.join(" "));
        }
    }
    for (i, (task, strategy)) in axes.iter().enumerate() {
        let (x, y) = point(i, 1.0);
        let (lx, ly) = point(i, 1.12);
        let _ = writeln!(svg, "<line class=\"axis\" x1=\"{c:.2}\" y1=\"{c:.2}\" x2=\"{x:.2}\" y2=\"{y:.2}\" stroke=\"#999999\"/>");
        let _ = writeln!(svg, "<text x=\"{lx:.2}\" y=\"{ly:.2}\" text-anchor=\"middle\">{task}/{strategy}</text>");
    }
    for (j, init) in inits.iter().enumerate() {
        let colour = match init {
            InitMode::Pretrained => "#1f77b4",
            InitMode::Random => "#d62728",
        };
        let pts: Vec<String> = axes
            .iter()
            .enumerate()
            .map(|(i, (task, strategy))| {
                let v = bundle
                    .cell(*task, *strategy, *init)
                    .and_then(|c| c.auroc)
                    .map_or(0.0, |a| a.mean.clamp(0.0, 1.0));
                let (x, y) = point(i, v);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            svg,
            "<polygon class=\"series\" data-init=\"{init}\" points=\"{}\" fill=\"{colour}\" fill-opacity=\"0.15\" stroke=\"{colour}\" stroke-width=\"2\"/>",
            pts.join(" ")
        );
        let ly = 20.0 + 16.0 * j as f64;
        let _ = writeln!(svg, "<rect x=\"12\" y=\"{:.0}\" width=\"10\" height=\"10\" fill=\"{colour}\"/>", ly - 9.0);
        let _ = writeln!(svg, "<text x=\"28\" y=\"{ly:.0}\">{init}</text>");
    }
    svg.push_str("</svg>\n");
    svg
}

fn write(dir: &Path, name: &str, contents: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes the requested artifacts into `out_dir` (created if missing) and
/// returns the written paths.
pub fn emit_report(bundle: &ReportBundle, out_dir: &Path, formats: &[ReportFormat]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut formats = formats.to_vec();
    formats.sort();
    formats.dedup();
    let mut written = Vec::new();
    for f in formats {
        match f {
            ReportFormat::Json => write(out_dir, "report.json", &bundle.to_json()?, &mut written)?,
            ReportFormat::Csv => {
                write(out_dir, "comparison.csv", &comparison_csv(bundle), &mut written)?;
                write(out_dir, "comparison.md", &comparison_markdown(bundle), &mut written)?;
                write(out_dir, "cells.csv", &cells_csv(bundle), &mut written)?;
                write(out_dir, "folds.csv", &folds_csv(bundle), &mut written)?;
                write(out_dir, "subgroups.csv", &subgroups_csv(bundle), &mut written)?;
                for init in InitMode::ALL {
                    if bundle.breadth.iter().any(|b| b.init == init) {
                        write(out_dir, &format!("breadth_{init}.csv"), &breadth_csv(bundle, init), &mut written)?;
                    }
                }
            }
            ReportFormat::SvgRadar => write(out_dir, "radar.svg", &radar_svg(bundle), &mut written)?,
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Task;
    use crate::harness::config::ExperimentConfig;
    use crate::harness::matrix::CellResult;
    use crate::metrics::CvAggregate;
    use crate::split::SplitStrategy;

    fn bundle_with_axes() -> ReportBundle {
        let mut b = ReportBundle::empty(ExperimentConfig::default());
        for task in Task::ALL {
            for strategy in SplitStrategy::ALL {
                for init in InitMode::ALL {
                    b.cells.push(CellResult {
                        task: *task,
                        strategy,
                        init,
                        status: CellStatus::Ok,
                        folds: vec![],
                        auroc: Some(CvAggregate { mean: 0.8, std: 0.01, se: 0.005 }),
                        auprc: None,
                        predictions: vec![],
                    });
                }
            }
        }
        b
    }

    #[test]
    fn empty_bundle_is_valid_json() {
        let b = ReportBundle::empty(ExperimentConfig::default());
        let text = b.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["cells"], serde_json::json!([]));
        assert_eq!(ReportBundle::from_json(&text).unwrap().to_json().unwrap(), text);
    }

    #[test]
    fn radar_has_one_axis_per_cell_and_polygon_per_init() {
        let svg = radar_svg(&bundle_with_axes());
        assert_eq!(svg.matches("class=\"axis\"").count(), 8);
        assert_eq!(svg.matches("class=\"series\"").count(), 2);
    }

    #[test]
    fn emits_files() {
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&bundle_with_axes(), dir.path(), &ReportFormat::ALL).unwrap();
        assert!(files.iter().any(|f| f.ends_with("report.json")));
        assert!(files.iter().any(|f| f.ends_with("radar.svg")));
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        assert!(matches!(emit_report(&bundle_with_axes(), &blocker.join("sub"), &ReportFormat::ALL), Err(Error::Io { .. })));
    }
}
