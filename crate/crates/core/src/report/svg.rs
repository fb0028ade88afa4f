//! Minimal SVG views of the report tables. The CSV files are the record;
//! these only draw them.

use std::fmt::Write as _;

use super::compare::ComparisonTable;
use super::heatmap::PrecisionGrid;

const CELL: f64 = 48.0;
const MARGIN: f64 = 70.0;
const PALETTE: [&str; 6] = [
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// White at 0, dark blue at 1.
fn shade(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let ch = |lo: f64| (255.0 - (255.0 - lo) * v).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(8.0), ch(48.0), ch(107.0))
}

fn open(out: &mut String, width: f64, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{width}" height="{height}" fill="white"/>"#
    );
}

/// Distance rows by device columns, one shaded cell per precision value.
/// Flagged cells are hatched with an outline.
pub fn heatmap_svg(grid: &PrecisionGrid) -> String {
    let (rows, cols) = (grid.distances_ft.len(), grid.device_names.len());
    let width = MARGIN * 2.0 + CELL * cols as f64;
    let height = MARGIN * 2.0 + CELL * rows as f64;
    let mut out = String::new();
    open(&mut out, width, height);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">device precision by distance</text>"#,
        width / 2.0
    );
    for (m, name) in grid.device_names.iter().enumerate() {
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            MARGIN + CELL * (m as f64 + 0.5),
            MARGIN - 8.0,
            escape(name)
        );
    }
    for (d, ft) in grid.distances_ft.iter().enumerate() {
        let y = MARGIN + CELL * d as f64;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{ft} ft</text>"#,
            MARGIN - 6.0,
            y + CELL / 2.0 + 4.0
        );
        for m in 0..cols {
            let x = MARGIN + CELL * m as f64;
            let v = grid.cells[d][m];
            let stroke = if grid.flagged[d][m] {
                r##" stroke="#c44e52" stroke-width="2" stroke-dasharray="4 2""##
            } else {
                ""
            };
            let _ = writeln!(
                out,
                r#"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}"{stroke}/>"#,
                shade(v)
            );
            let ink = if v > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{:.1}</text>"#,
                x + CELL / 2.0,
                y + CELL / 2.0 + 4.0,
                v * 100.0
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Grouped bars: one group per distance, one bar per series.
pub fn comparison_svg(table: &ComparisonTable) -> String {
    let groups = table.distances_ft.len().max(1);
    let n = table.series.len().max(1);
    let bar = 18.0;
    let group_w = bar * n as f64 + 16.0;
    let plot_h = 200.0;
    let width = MARGIN * 2.0 + group_w * groups as f64;
    let height = MARGIN * 2.0 + plot_h;
    let base = MARGIN + plot_h;
    let mut out = String::new();
    open(&mut out, width, height);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="13">accuracy by distance</text>"#,
        width / 2.0
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = base - plot_h * v;
        let _ = writeln!(
            out,
            r##"<line x1="{MARGIN}" y1="{y}" x2="{}" y2="{y}" stroke="#dddddd"/>"##,
            width - MARGIN
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="end">{:.0}%</text>"#,
            MARGIN - 6.0,
            y + 4.0,
            v * 100.0
        );
    }
    for (g, ft) in table.distances_ft.iter().enumerate() {
        let x0 = MARGIN + group_w * g as f64 + 8.0;
        for (k, s) in table.series.iter().enumerate() {
            let v = s.accuracy[g].clamp(0.0, 1.0);
            let _ = writeln!(
                out,
                r#"<rect x="{}" y="{}" width="{bar}" height="{}" fill="{}"/>"#,
                x0 + bar * k as f64,
                base - plot_h * v,
                plot_h * v,
                PALETTE[k % PALETTE.len()]
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle">{ft} ft</text>"#,
            x0 + bar * n as f64 / 2.0,
            base + 16.0
        );
    }
    for (k, s) in table.series.iter().enumerate() {
        let y = base + 34.0 + 14.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{MARGIN}" y="{}" width="10" height="10" fill="{}"/>"#,
            y - 9.0,
            PALETTE[k % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{y}">{}</text>"#,
            MARGIN + 14.0,
            escape(&s.name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::report::compare::Series;

    #[test]
    fn heatmap_has_one_cell_per_entry() {
        let grid = PrecisionGrid {
            distances_ft: vec![2, 8],
            device_names: vec!["a".into(), "b<c".into()],
            cells: vec![vec![1.0, 0.5], vec![0.0, 0.25]],
            flagged: vec![vec![false, false], vec![true, false]],
        };
        let svg = heatmap_svg(&grid);
        assert_eq!(svg.matches("<rect").count(), 1 + 4);
        assert!(svg.contains("b&lt;c"));
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn comparison_draws_every_bar() {
        let table = ComparisonTable {
            distances_ft: vec![2, 8, 14],
            series: vec![
                Series {
                    name: "baseline".into(),
                    accuracy: vec![0.5, 0.6, 0.7],
                },
                Series {
                    name: "resnet".into(),
                    accuracy: vec![0.9, 0.9, 0.9],
                },
            ],
        };
        let svg = comparison_svg(&table);
        // background + bars + legend swatches
        assert_eq!(svg.matches("<rect").count(), 1 + 6 + 2);
    }

    #[test]
    fn shade_endpoints() {
        assert_eq!(shade(0.0), "#ffffff");
        assert_eq!(shade(1.0), "#08306b");
    }
}
