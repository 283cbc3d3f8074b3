//! Heatmaps of [`SimilarityGrid`]s: rows (vertical axis) are source layers,
//! columns (horizontal axis) are target layers, first row at the top.
//!
//! Colors follow a single-hue ramp from white (grid minimum) to dark blue
//! (grid maximum), linear in the cell value. A constant grid is drawn
//! entirely in the minimum color.

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::SimilarityGrid;

/// Pixel edge length of one cell in the PPM image.
pub const CELL_PIXELS: usize = 16;

const LOW: [f64; 3] = [255.0, 255.0, 255.0];
const HIGH: [f64; 3] = [8.0, 48.0, 107.0];

/// Color for `t ∈ [0, 1]`; values outside are clamped.
pub fn ramp(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let mut rgb = [0u8; 3];
    for (k, c) in rgb.iter_mut().enumerate() {
        *c = (LOW[k] + t * (HIGH[k] - LOW[k])).round() as u8;
    }
    rgb
}

fn cell_colors(grid: &SimilarityGrid) -> Result<Vec<Vec<[u8; 3]>>> {
    if grid.values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Argument(format!(
            "grid {} has non-finite cells",
            grid.index
        )));
    }
    let (lo, hi) = grid
        .min_max()
        .ok_or_else(|| Error::Argument("empty grid".into()))?;
    let span = hi - lo;
    Ok(grid
        .values
        .iter()
        .map(|row| {
            row.iter()
                .map(|&v| ramp(if span > 0.0 { (v - lo) / span } else { 0.0 }))
                .collect()
        })
        .collect())
}

/// Binary PPM (P6), [`CELL_PIXELS`] pixels per cell.
pub fn write_ppm<W: Write>(grid: &SimilarityGrid, mut out: W) -> Result<()> {
    let colors = cell_colors(grid)?;
    let (rows, cols) = grid.shape();
    write!(
        out,
        "P6\n{} {}\n255\n",
        cols * CELL_PIXELS,
        rows * CELL_PIXELS
    )?;
    let mut line = Vec::with_capacity(cols * CELL_PIXELS * 3);
    for row in &colors {
        line.clear();
        for rgb in row {
            for _ in 0..CELL_PIXELS {
                line.extend_from_slice(rgb);
            }
        }
        for _ in 0..CELL_PIXELS {
            out.write_all(&line)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn svg_string(grid: &SimilarityGrid) -> Result<String> {
    let colors = cell_colors(grid)?;
    let (rows, cols) = grid.shape();
    let (cell, margin) = (24usize, 48usize);
    let (w, h) = (margin + cols * cell + 8, margin + rows * cell + 8);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, "<title>{}</title>", grid.index);
    for (r, row) in colors.iter().enumerate() {
        for (c, [red, green, blue]) in row.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{cell}" height="{cell}" fill="rgb({red},{green},{blue})"><title>{} -> {}: {}</title></rect>"#,
                margin + c * cell,
                margin + r * cell,
                grid.source_layers[r],
                grid.target_layers[c],
                grid.values[r][c]
            );
        }
    }
    for (c, t) in grid.target_layers.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{t}</text>"#,
            margin + c * cell + cell / 2,
            margin - 4
        );
    }
    for (r, src) in grid.source_layers.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{src}</text>"#,
            margin - 4,
            margin + r * cell + cell / 2 + 4
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="12" text-anchor="middle">target layer</text>"#,
        margin + cols * cell / 2
    );
    let _ = writeln!(
        s,
        r#"<text x="12" y="{}" text-anchor="middle" transform="rotate(-90 12 {})">source layer</text>"#,
        margin + rows * cell / 2,
        margin + rows * cell / 2
    );
    s.push_str("</svg>\n");
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeatmapFiles {
    pub csv: PathBuf,
    pub ppm: PathBuf,
    pub svg: PathBuf,
}

/// Write `<stem>.csv`, `<stem>.ppm` and `<stem>.svg`.
pub fn emit_heatmap(grid: &SimilarityGrid, stem: &Path) -> Result<HeatmapFiles> {
    let files = HeatmapFiles {
        csv: stem.with_extension("csv"),
        ppm: stem.with_extension("ppm"),
        svg: stem.with_extension("svg"),
    };
    let svg = svg_string(grid)?;
    let mut ppm = Vec::new();
    write_ppm(grid, &mut ppm)?;
    fs::write(&files.csv, grid.to_csv_string()?)?;
    fs::write(&files.ppm, ppm)?;
    fs::write(&files.svg, svg)?;
    Ok(files)
}
