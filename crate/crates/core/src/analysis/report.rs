// SPDX-License-Identifier: MIT OR Apache-2.0

//! CSV and SVG emitters for grids and accuracy curves.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::select::TileFrequencyGrid;
use crate::error::{Error, Result};
use crate::othello::TileMode;
use crate::probes::{grid_csv, ProbeStructure};

const CELL: u32 = 48;

/// Parses the eight-line integer CSV written by [`grid_csv`].
pub fn parse_grid_csv(text: &str) -> Result<[u32; 64]> {
    let mut cells = [0u32; 64];
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.len() != 8 {
        return Err(Error::Format(format!(
            "grid has {} rows, expected 8",
            lines.len()
        )));
    }
    for (r, line) in lines.iter().enumerate() {
        let vals: Vec<&str> = line.split(',').collect();
        if vals.len() != 8 {
            return Err(Error::Format(format!("grid row {r} has {} cells", vals.len())));
        }
        for (c, v) in vals.iter().enumerate() {
            cells[r * 8 + c] = v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad grid cell {v:?}")))?;
        }
    }
    Ok(cells)
}

/// 8x8 heatmap: linear grey ramp from white (0) to black (grid max).
pub fn heatmap_svg(grid: &TileFrequencyGrid, title: &str) -> String {
    let max = grid.max();
    let side = 8 * CELL;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = side,
        h = side + 24
    );
    let _ = writeln!(
        s,
        r#"<text x="4" y="16" font-family="sans-serif" font-size="13">{}</text>"#,
        escape(title)
    );
    for (i, &c) in grid.counts.iter().enumerate() {
        let (row, col) = (i / 8, i % 8);
        let level = if max == 0 {
            0.0
        } else {
            f64::from(c) / f64::from(max)
        };
        let grey = (255.0 * (1.0 - level)).round() as u8;
        let ink = if grey < 128 { "#ffffff" } else { "#000000" };
        let (x, y) = (col as u32 * CELL, 24 + row as u32 * CELL);
        let _ = writeln!(
            s,
            r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#{grey:02x}{grey:02x}{grey:02x}" stroke="#888888"/>"##
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" fill="{ink}">{c}</text>"#,
            x + CELL / 2,
            y + CELL / 2 + 4
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.csv` and `<stem>.svg`; returns both paths.
pub fn emit_heatmap(grid: &TileFrequencyGrid, stem: &Path, title: &str) -> Result<[PathBuf; 2]> {
    let csv = stem.with_extension("csv");
    let svg = stem.with_extension("svg");
    write_file(&csv, &grid_csv(&grid.counts))?;
    write_file(&svg, &heatmap_svg(grid, title))?;
    Ok([csv, svg])
}

/// Probe accuracy for one (layer, mode, structure).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyPoint {
    pub layer: u16,
    pub mode: TileMode,
    pub structure: ProbeStructure,
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub val_chance: f64,
    /// Validation accuracy of the shuffled-label control probe.
    pub control_accuracy: f64,
}

pub const ACCURACY_HEADER: &str =
    "layer,mode,structure,train_accuracy,val_accuracy,val_chance,control_accuracy";

pub fn accuracy_csv(points: &[AccuracyPoint]) -> String {
    let mut s = format!("{ACCURACY_HEADER}\n");
    for p in points {
        let _ = writeln!(
            s,
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            p.layer,
            p.mode.name(),
            p.structure.name(),
            p.train_accuracy,
            p.val_accuracy,
            p.val_chance,
            p.control_accuracy
        );
    }
    s
}

pub fn parse_accuracy_csv(text: &str) -> Result<Vec<AccuracyPoint>> {
    let mut lines = text.lines();
    if lines.next() != Some(ACCURACY_HEADER) {
        return Err(Error::Format("accuracy table header mismatch".into()));
    }
    let bad = |l: &str| Error::Format(format!("bad accuracy row {l:?}"));
    lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 7 {
                return Err(bad(l));
            }
            let num = |i: usize| f[i].parse::<f64>().map_err(|_| bad(l));
            Ok(AccuracyPoint {
                layer: f[0].parse().map_err(|_| bad(l))?,
                mode: TileMode::parse(f[1]).ok_or_else(|| bad(l))?,
                structure: ProbeStructure::parse(f[2]).ok_or_else(|| bad(l))?,
                train_accuracy: num(3)?,
                val_accuracy: num(4)?,
                val_chance: num(5)?,
                control_accuracy: num(6)?,
            })
        })
        .collect()
}

/// Validation accuracy against layer, one polyline per (mode, structure).
pub fn accuracy_svg(points: &[AccuracyPoint]) -> String {
    let (w, h, pad) = (520.0, 320.0, 48.0);
    let max_layer = points.iter().map(|p| p.layer).max().unwrap_or(1).max(2);
    let x = |l: u16| pad + (f64::from(l) - 1.0) / (f64::from(max_layer) - 1.0) * (w - 2.0 * pad);
    let y = |a: f64| h - pad - a.clamp(0.0, 1.0) * (h - 2.0 * pad);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    s.push_str(r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    s.push('\n');
    let _ = writeln!(
        s,
        r##"<line x1="{pad}" y1="{b}" x2="{r}" y2="{b}" stroke="#000000"/><line x1="{pad}" y1="{pad}" x2="{pad}" y2="{b}" stroke="#000000"/>"##,
        b = h - pad,
        r = w - pad
    );
    for l in 1..=max_layer {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="middle">{l}</text>"#,
            x(l),
            h - pad + 16.0
        );
    }
    for tick in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{tick:.2}</text>"#,
            pad - 6.0,
            y(tick) + 4.0
        );
    }
    let colours = ["#1b9e77", "#d95f02", "#7570b3"];
    let mut series = 0;
    for structure in [
        ProbeStructure::PerTileIndependent,
        ProbeStructure::MulticlassLocation,
    ] {
        for mode in TileMode::ALL {
            let mut pts: Vec<&AccuracyPoint> = points
                .iter()
                .filter(|p| p.mode == mode && p.structure == structure)
                .collect();
            if pts.is_empty() {
                continue;
            }
            pts.sort_by_key(|p| p.layer);
            let path: Vec<String> = pts
                .iter()
                .map(|p| format!("{:.1},{:.1}", x(p.layer), y(p.val_accuracy)))
                .collect();
            let dash = if structure == ProbeStructure::MulticlassLocation {
                r#" stroke-dasharray="5,3""#
            } else {
                ""
            };
            let colour = colours[mode.index()];
            let _ = writeln!(
                s,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"{dash}/>"#,
                path.join(" ")
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11" fill="{colour}">{} {}</text>"#,
                w - pad - 110.0,
                pad + 14.0 * series as f64,
                mode.name(),
                structure.name()
            );
            series += 1;
        }
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grid_renders_white() {
        let g = TileFrequencyGrid::new(1, "x", 0.8, vec![]);
        let svg = heatmap_svg(&g, "empty");
        assert_eq!(svg.matches("fill=\"#ffffff\"").count(), 64);
        assert_eq!(parse_grid_csv(&grid_csv(&g.counts)).unwrap(), [0; 64]);
    }

    #[test]
    fn max_cell_is_darkest() {
        let mut g = TileFrequencyGrid::new(1, "x", 0.8, vec![]);
        g.counts[0] = 6;
        g.counts[9] = 3;
        let svg = heatmap_svg(&g, "a<b");
        let first = svg.find("<rect").unwrap();
        assert!(svg[first..].starts_with(r##"<rect x="0" y="24" width="48" height="48" fill="#000000""##));
        assert!(svg.contains("#808080"));
        assert!(svg.contains("a&lt;b"));
        assert_eq!(parse_grid_csv(&grid_csv(&g.counts)).unwrap(), g.counts);
        assert!(parse_grid_csv("1,2\n").is_err());
    }

    #[test]
    fn accuracy_round_trip() {
        let pts: Vec<AccuracyPoint> = (1..=3)
            .map(|l| AccuracyPoint {
                layer: l,
                mode: TileMode::Own,
                structure: ProbeStructure::PerTileIndependent,
                train_accuracy: 0.5,
                val_accuracy: 0.25 * f64::from(l),
                val_chance: 0.5,
                control_accuracy: 0.5,
            })
            .collect();
        let csv = accuracy_csv(&pts);
        assert_eq!(parse_accuracy_csv(&csv).unwrap(), pts);
        assert_eq!(accuracy_svg(&pts).matches("<polyline").count(), 1);
    }
}
