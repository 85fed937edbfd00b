//! World snapshots as CSV records, lattice grids and SVG frames. Every float
//! is written with nine significant digits.

use std::fmt::Write as _;
use std::io::Write;

use super::cell::{Population, CELL_RADIUS};
use super::field::Field;
use super::world::World;
use crate::error::Result;
use crate::numfmt::g9;

/// Column order of [`write_cells_csv`]. Species absent from a population
/// are left empty.
pub const CELL_COLUMNS: [&str; 13] =
    ["id", "tag", "parent", "generation", "x", "y", "angle", "length", "Z1", "Z2", "Qu", "Qx", "Xc"];

pub fn write_cells_csv<W: Write>(world: &World, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CELL_COLUMNS)?;
    for c in &world.cells {
        let mut row = vec![
            c.id.to_string(),
            c.tag.name().to_string(),
            c.parent.map(|p| p.to_string()).unwrap_or_default(),
            c.generation.to_string(),
            g9(c.x),
            g9(c.y),
            g9(c.angle),
            g9(c.length),
        ];
        for name in &CELL_COLUMNS[8..] {
            row.push(c.tag.species_index(name).map(|k| g9(c.state[k])).unwrap_or_default());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Lattice as a grid: header `row,c0,c1,…`, one line per lattice row from
/// the bottom edge (y = 0) upwards.
pub fn write_lattice_csv<W: Write>(field: &Field, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["row".to_string()];
    header.extend((0..field.nx).map(|i| format!("c{i}")));
    w.write_record(&header)?;
    for j in 0..field.ny {
        let mut row = vec![j.to_string()];
        row.extend((0..field.nx).map(|i| g9(field.at(i, j))));
        w.write_record(&row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Static SVG frame: the control-signal field as a grey heatmap with cells
/// drawn as capsules (controllers blue, targets red).
pub fn svg_frame(world: &World) -> String {
    let scale = 4.0;
    let (w, h) = (world.config.width, world.config.height);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        g9(w * scale),
        g9(h * scale),
        g9(w * scale),
        g9(h * scale)
    );
    let f = &world.qu;
    let peak = f.max();
    let (cw, ch) = (w / f.nx as f64, h / f.ny as f64);
    for j in 0..f.ny {
        for i in 0..f.nx {
            let level = if peak > 0.0 { f.at(i, j) / peak } else { 0.0 };
            let grey = (255.0 - 200.0 * level).round() as u8;
            // SVG y grows downwards; flip so row 0 is at the bottom.
            let y = h - (j + 1) as f64 * ch;
            let _ = writeln!(
                s,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="rgb({grey},{grey},{grey})"/>"#,
                g9(i as f64 * cw * scale),
                g9(y * scale),
                g9(cw * scale),
                g9(ch * scale)
            );
        }
    }
    for c in &world.cells {
        let ((x0, y0), (x1, y1)) = c.segment();
        let colour = match c.tag {
            Population::Controller => "#1f77b4",
            Population::Target => "#d62728",
        };
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{colour}" stroke-width="{}" stroke-linecap="round"/>"#,
            g9(x0 * scale),
            g9((h - y0) * scale),
            g9(x1 * scale),
            g9((h - y1) * scale),
            g9(2.0 * CELL_RADIUS * scale)
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::world::{Placement, WorldConfig};
    use crate::model::{ConsortiumParams, ReferenceSignal};

    fn world() -> World {
        let cfg = WorldConfig {
            width: 20.0,
            height: 10.0,
            placement: Placement::Mixed {
                controllers: 3,
                targets: 2,
            },
            ..Default::default()
        };
        World::new(cfg, ConsortiumParams::nominal(), ReferenceSignal::constant(1.0)).unwrap()
    }

    #[test]
    fn cell_csv_has_one_row_per_cell() {
        let w = world();
        let mut buf = Vec::new();
        write_cells_csv(&w, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[0], CELL_COLUMNS.join(","));
        // Targets have no Z1 column value.
        assert!(lines[5].split(',').nth(8).unwrap().is_empty());
    }

    #[test]
    fn lattice_csv_shape() {
        let w = world();
        let mut buf = Vec::new();
        write_lattice_csv(&w.qu, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + w.qu.ny);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 1 + w.qu.nx);
    }

    #[test]
    fn svg_is_deterministic() {
        let a = svg_frame(&world());
        assert_eq!(a, svg_frame(&world()));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<line").count(), 5);
    }
}
