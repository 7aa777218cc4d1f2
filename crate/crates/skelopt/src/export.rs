//! Output writers: density matrices (plain text and legacy VTK), skeleton
//! description files (round-trip parseable), SVG previews with a
//! marching-squares envelope, and the CSV iteration log.
//!
//! All writers format floats with the shortest round-trip representation,
//! so identical inputs produce byte-identical files.

use std::fmt::Write as _;

use thiserror::Error;

use crate::design::DesignVector;
use crate::geom::{BezierComponent, Vec2};
use crate::grid::Grid;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("skeleton parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("invalid skeleton data: {0}")]
    Invalid(String),
}

/// Density matrix as text: one line per grid row, bottom row first,
/// values space-separated.
pub fn density_text(grid: &Grid, rho: &[f64]) -> String {
    assert_eq!(rho.len(), grid.n_elems());
    let mut s = String::new();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            if ix > 0 {
                s.push(' ');
            }
            write!(s, "{}", rho[iy * grid.nx + ix]).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Parse the output of [`density_text`].
pub fn parse_density_text(text: &str) -> Result<(usize, usize, Vec<f64>), ExportError> {
    let mut rho = Vec::new();
    let mut nx = 0;
    let mut ny = 0;
    for (i, line) in text.lines().enumerate() {
        let row: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let row = row.map_err(|e| ExportError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if ny == 0 {
            nx = row.len();
        } else if row.len() != nx {
            return Err(ExportError::Parse {
                line: i + 1,
                reason: format!("expected {nx} values, got {}", row.len()),
            });
        }
        rho.extend(row);
        ny += 1;
    }
    Ok((nx, ny, rho))
}

/// Legacy-VTK structured-points file with the density as cell data.
pub fn vtk_text(grid: &Grid, rho: &[f64]) -> String {
    assert_eq!(rho.len(), grid.n_elems());
    let mut s = String::new();
    s.push_str("# vtk DataFile Version 2.0\n");
    s.push_str("unit cell density\n");
    s.push_str("ASCII\n");
    s.push_str("DATASET STRUCTURED_POINTS\n");
    writeln!(s, "DIMENSIONS {} {} 1", grid.nx + 1, grid.ny + 1).unwrap();
    s.push_str("ORIGIN 0 0 0\n");
    writeln!(s, "SPACING {} {} 1", grid.h, grid.h).unwrap();
    writeln!(s, "CELL_DATA {}", grid.n_elems()).unwrap();
    s.push_str("SCALARS density double 1\nLOOKUP_TABLE default\n");
    for v in rho {
        writeln!(s, "{v}").unwrap();
    }
    s
}

/// Skeleton description: header line with the component count, then one
/// line per component: volume multiplier, half-width, and the control
/// points as x y pairs.
pub fn skeleton_text(design: &DesignVector) -> String {
    let mut s = String::new();
    writeln!(s, "components {}", design.components.len()).unwrap();
    for c in &design.components {
        write!(s, "{} {}", c.rho_bar, c.w).unwrap();
        for p in &c.control_points {
            write!(s, " {} {}", p.x, p.y).unwrap();
        }
        s.push('\n');
    }
    s
}

/// Parse the output of [`skeleton_text`] back to an identical design.
pub fn parse_skeleton(text: &str) -> Result<DesignVector, ExportError> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(ExportError::Parse {
        line: 1,
        reason: "empty file".into(),
    })?;
    let n: usize = header
        .strip_prefix("components ")
        .and_then(|v| v.parse().ok())
        .ok_or(ExportError::Parse {
            line: 1,
            reason: "expected `components <count>`".into(),
        })?;
    let mut components = Vec::with_capacity(n);
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let vals = vals.map_err(|e| ExportError::Parse {
            line: i + 1,
            reason: e.to_string(),
        })?;
        if vals.len() < 6 || vals.len() % 2 != 0 {
            return Err(ExportError::Parse {
                line: i + 1,
                reason: format!(
                    "expected rho_bar, w and at least two x y pairs, got {} values",
                    vals.len()
                ),
            });
        }
        let pts: Vec<Vec2> = vals[2..]
            .chunks(2)
            .map(|c| Vec2::new(c[0], c[1]))
            .collect();
        components.push(
            BezierComponent::new(pts, vals[0], vals[1])
                .map_err(|e| ExportError::Invalid(e.to_string()))?,
        );
    }
    if components.len() != n {
        return Err(ExportError::Invalid(format!(
            "header says {n} components, found {}",
            components.len()
        )));
    }
    Ok(DesignVector::new(components))
}

/// Contour segments of the density field at `level`, via marching squares
/// on the grid of element centroids.
pub fn marching_squares(grid: &Grid, rho: &[f64], level: f64) -> Vec<(Vec2, Vec2)> {
    assert_eq!(rho.len(), grid.n_elems());
    let at = |ix: usize, iy: usize| rho[iy * grid.nx + ix];
    let pos = |ix: usize, iy: usize| {
        Vec2::new(
            (ix as f64 + 0.5) * grid.h,
            (iy as f64 + 0.5) * grid.h,
        )
    };
    let mut segs = Vec::new();
    for iy in 0..grid.ny.saturating_sub(1) {
        for ix in 0..grid.nx.saturating_sub(1) {
            // corner order: 0 bottom-left, 1 bottom-right, 2 top-right, 3 top-left
            let v = [
                at(ix, iy),
                at(ix + 1, iy),
                at(ix + 1, iy + 1),
                at(ix, iy + 1),
            ];
            let p = [
                pos(ix, iy),
                pos(ix + 1, iy),
                pos(ix + 1, iy + 1),
                pos(ix, iy + 1),
            ];
            let mut case = 0usize;
            for (k, &val) in v.iter().enumerate() {
                if val >= level {
                    case |= 1 << k;
                }
            }
            if case == 0 || case == 15 {
                continue;
            }
            let lerp = |a: usize, b: usize| -> Vec2 {
                let t = (level - v[a]) / (v[b] - v[a]);
                p[a] + (p[b] - p[a]) * t.clamp(0.0, 1.0)
            };
            // edges: 0 bottom (0-1), 1 right (1-2), 2 top (2-3), 3 left (3-0)
            let e = |k: usize| -> Vec2 {
                match k {
                    0 => lerp(0, 1),
                    1 => lerp(1, 2),
                    2 => lerp(2, 3),
                    _ => lerp(3, 0),
                }
            };
            let pairs: &[(usize, usize)] = match case {
                1 | 14 => &[(3, 0)],
                2 | 13 => &[(0, 1)],
                3 | 12 => &[(3, 1)],
                4 | 11 => &[(1, 2)],
                6 | 9 => &[(0, 2)],
                7 | 8 => &[(2, 3)],
                5 => {
                    // ambiguous saddle: split by the cell average
                    let avg = 0.25 * (v[0] + v[1] + v[2] + v[3]);
                    if avg >= level {
                        &[(3, 2), (0, 1)]
                    } else {
                        &[(3, 0), (1, 2)]
                    }
                }
                10 => {
                    let avg = 0.25 * (v[0] + v[1] + v[2] + v[3]);
                    if avg >= level {
                        &[(0, 3), (1, 2)]
                    } else {
                        &[(0, 1), (2, 3)]
                    }
                }
                _ => unreachable!(),
            };
            for &(a, b) in pairs {
                segs.push((e(a), e(b)));
            }
        }
    }
    segs
}

fn svg_bezier_path(c: &BezierComponent, offset: Vec2, scale: f64, flip_h: f64) -> String {
    // sample the curve as a polyline (robust for any degree)
    let n = 32;
    let mut d = String::new();
    for i in 0..=n {
        let t = i as f64 / n as f64;
        let p = crate::geom::eval(c, t);
        let cmd = if i == 0 { 'M' } else { 'L' };
        write!(
            d,
            "{cmd}{} {} ",
            (offset.x + p.x) * scale,
            (flip_h - (offset.y + p.y)) * scale
        )
        .unwrap();
    }
    d.pop();
    d
}

/// SVG preview: the smoothed material envelope (density contour at 0.5) and
/// the skeleton curves, tiled `tiles` x `tiles` times.
pub fn svg_design(grid: &Grid, design: &DesignVector, rho: &[f64], tiles: usize) -> String {
    let (w, h) = (grid.width(), grid.height());
    let scale = 512.0 / (w * tiles as f64);
    let total_h = h * tiles as f64;
    let px_w = 512.0;
    let px_h = total_h * scale;
    let mut s = String::new();
    writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{px_w}\" height=\"{px_h}\" viewBox=\"0 0 {px_w} {px_h}\">"
    )
    .unwrap();
    writeln!(
        s,
        "<rect width=\"{px_w}\" height=\"{px_h}\" fill=\"white\"/>"
    )
    .unwrap();
    let contour = marching_squares(grid, rho, 0.5);
    for ty in 0..tiles {
        for tx in 0..tiles {
            let off = Vec2::new(tx as f64 * w, ty as f64 * h);
            for (a, b) in &contour {
                writeln!(
                    s,
                    "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#444\" stroke-width=\"1\"/>",
                    (off.x + a.x) * scale,
                    (total_h - (off.y + a.y)) * scale,
                    (off.x + b.x) * scale,
                    (total_h - (off.y + b.y)) * scale
                )
                .unwrap();
            }
            for c in &design.components {
                writeln!(
                    s,
                    "<path d=\"{}\" fill=\"none\" stroke=\"#c00\" stroke-width=\"1.5\"/>",
                    svg_bezier_path(c, off, scale, total_h)
                )
                .unwrap();
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One row of the per-iteration optimization log.
#[derive(Debug, Clone)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub volume_fraction: f64,
    pub max_element_energy: f64,
    pub pnorm_value: f64,
    pub c: f64,
    pub max_design_change: f64,
    pub newton_iters: usize,
    pub feasible: bool,
}

pub const CSV_HEADER: &str =
    "iteration,objective,volume_fraction,max_element_energy,pnorm_value,c,max_design_change,newton_iters,feasible";

pub fn csv_line(r: &IterationRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}",
        r.iteration,
        r.objective,
        r.volume_fraction,
        r.max_element_energy,
        r.pnorm_value,
        r.c,
        r.max_design_change,
        r.newton_iters,
        r.feasible
    )
}

pub fn csv_text(records: &[IterationRecord]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in records {
        s.push_str(&csv_line(r));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_design() -> DesignVector {
        DesignVector::new(vec![
            BezierComponent::new(
                vec![
                    Vec2::new(0.123456789012345, 4.0 / 3.0),
                    Vec2::new(5.5, 6.25),
                    Vec2::new(7.0, 1e-7),
                ],
                0.7123456789,
                2.5000000001,
            )
            .unwrap(),
            BezierComponent::new(
                vec![Vec2::new(0.0, 0.1), Vec2::new(9.9, 3.3)],
                0.4,
                2.0,
            )
            .unwrap(),
        ])
    }

    #[test]
    fn skeleton_round_trip_is_exact() {
        let d = sample_design();
        let text = skeleton_text(&d);
        let back = parse_skeleton(&text).unwrap();
        assert_eq!(back, d); // bit-exact through shortest round-trip floats
        // and stable: re-export matches byte for byte
        assert_eq!(skeleton_text(&back), text);
    }

    #[test]
    fn skeleton_parse_errors_carry_line_numbers() {
        let err = parse_skeleton("components 1\n0.5 2.0 1.0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_skeleton("nonsense\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn density_text_round_trip() {
        let grid = Grid::new(3, 2, 1.0);
        let rho = vec![0.1, 0.2, 0.3, 1.0 / 3.0, 0.5, 1e-5];
        let text = density_text(&grid, &rho);
        assert_eq!(text.lines().count(), 2);
        let (nx, ny, back) = parse_density_text(&text).unwrap();
        assert_eq!((nx, ny), (3, 2));
        assert_eq!(back, rho);
    }

    #[test]
    fn vtk_structure() {
        let grid = Grid::new(4, 3, 0.5);
        let rho = vec![0.25; 12];
        let text = vtk_text(&grid, &rho);
        assert!(text.starts_with("# vtk DataFile Version 2.0\n"));
        assert!(text.contains("DIMENSIONS 5 4 1"));
        assert!(text.contains("SPACING 0.5 0.5 1"));
        assert!(text.contains("CELL_DATA 12"));
        assert_eq!(text.matches("0.25").count(), 12);
    }

    #[test]
    fn marching_squares_traces_a_band() {
        // vertical stripe of material in the middle third
        let grid = Grid::new(9, 9, 1.0);
        let mut rho = vec![0.0; 81];
        for iy in 0..9 {
            for ix in 3..6 {
                rho[iy * 9 + ix] = 1.0;
            }
        }
        let segs = marching_squares(&grid, &rho, 0.5);
        assert!(!segs.is_empty());
        // all crossings sit on the two stripe boundaries x = 3 and x = 6
        for (a, b) in &segs {
            for p in [a, b] {
                assert!(
                    (p.x - 3.0).abs() < 1e-12 || (p.x - 6.0).abs() < 1e-12,
                    "crossing at x = {}",
                    p.x
                );
            }
        }
        // uniform field has no contour
        assert!(marching_squares(&grid, &vec![0.8; 81], 0.5).is_empty());
    }

    #[test]
    fn svg_deterministic_and_tiled() {
        let grid = Grid::new(6, 6, 1.0);
        let d = sample_design();
        let mut rho = vec![0.1; 36];
        for i in 14..22 {
            rho[i] = 0.9;
        }
        let one = svg_design(&grid, &d, &rho, 1);
        let five = svg_design(&grid, &d, &rho, 5);
        assert_eq!(one, svg_design(&grid, &d, &rho, 1));
        assert!(one.contains("<path"));
        assert_eq!(
            five.matches("<path").count(),
            25 * one.matches("<path").count()
        );
    }

    #[test]
    fn csv_layout() {
        let rec = IterationRecord {
            iteration: 3,
            objective: 12.5,
            volume_fraction: 0.3,
            max_element_energy: 1.05,
            pnorm_value: 0.98,
            c: 1.1,
            max_design_change: 0.004,
            newton_iters: 42,
            feasible: true,
        };
        let text = csv_text(&[rec]);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(lines.next().unwrap(), "3,12.5,0.3,1.05,0.98,1.1,0.004,42,true");
    }
}
