//! Text file formats: boundary traces, coefficient fields, VTK snapshots
//! and the run logs. Every float is written with 17 significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use wavecip_core::optimizer::{ConvergenceRow, LevelReport, RefinementFlags};
use wavecip_core::{BoundaryTrace, CoefficientField, Grid2D, Role, Side, SideSet};

use crate::error::{CliError, Result};

pub const TRACE_HEADER: [&str; 4] = ["t", "side", "index", "value"];
pub const COEFFICIENT_HEADER: [&str; 3] = ["x", "y", "value"];
pub const GRADCHECK_HEADER: [&str; 6] = ["node_x", "node_y", "which", "adjoint_value", "fd_value", "rel_err"];

pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::input(path, format!("{other:?}")),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    csv::Writer::from_path(path).map_err(csv_err(path))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err(path))
}

fn check_header(path: &Path, reader: &mut csv::Reader<File>, want: &[&str]) -> Result<()> {
    let got = reader.headers().map_err(csv_err(path))?;
    if got.iter().ne(want.iter().copied()) {
        return Err(CliError::input(
            path,
            format!("expected header `{}`, found `{}`", want.join(","), got.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(())
}

fn parse_num(path: &Path, row: usize, field: &str, text: &str) -> Result<f64> {
    text.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| CliError::input(path, format!("row {row}: bad {field} `{text}`")))
}

pub fn write_trace(path: &Path, trace: &BoundaryTrace) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(TRACE_HEADER).map_err(&err)?;
    let g = &trace.grid;
    for n in 0..trace.levels() {
        let t = num(g.time(n));
        for s in trace.sides().iter() {
            let side = s.number().to_string();
            let values = trace.side(n, s).expect("declared side");
            for (idx, v) in values.iter().enumerate() {
                w.write_record([t.as_str(), side.as_str(), &idx.to_string(), &num(*v)])
                    .map_err(&err)?;
            }
        }
    }
    w.flush().map_err(io_err(path))
}

/// Reads a trace and checks that it covers exactly `sides` on `grid`'s
/// time levels and boundary nodes, in file order.
pub fn read_trace(path: &Path, grid: &Grid2D, sides: SideSet) -> Result<BoundaryTrace> {
    let mut trace = BoundaryTrace::zeros(grid, sides)?;
    let mut r = csv_reader(path)?;
    check_header(path, &mut r, &TRACE_HEADER)?;
    let mismatch = |row: usize, what: String| {
        CliError::input(path, format!("row {row}: {what}; the trace does not match the configured grid"))
    };
    let mut records = r.records();
    let mut row = 1;
    for n in 0..=grid.nt {
        let t_want = grid.time(n);
        for s in sides.iter() {
            for idx in 0..s.len(grid) {
                row += 1;
                let rec = match records.next() {
                    Some(rec) => rec.map_err(csv_err(path))?,
                    None => return Err(mismatch(row, format!("file ends before t = {t_want}"))),
                };
                if rec.len() != 4 {
                    return Err(CliError::input(path, format!("row {row}: expected 4 fields")));
                }
                let t = parse_num(path, row, "time", &rec[0])?;
                if (t - t_want).abs() > 1e-9 * grid.t_final {
                    return Err(mismatch(row, format!("time {t}, expected {t_want}")));
                }
                let side = rec[1].parse::<u8>().ok().and_then(Side::from_number);
                if side != Some(s) {
                    return Err(mismatch(row, format!("side `{}`, expected {}", &rec[1], s.number())));
                }
                if rec[2].parse::<usize>().ok() != Some(idx) {
                    return Err(mismatch(row, format!("index `{}`, expected {idx}", &rec[2])));
                }
                trace.side_mut(n, s).expect("declared side")[idx] = parse_num(path, row, "value", &rec[3])?;
            }
        }
    }
    if records.next().is_some() {
        return Err(mismatch(row + 1, "extra rows after the last time level".into()));
    }
    Ok(trace)
}

pub fn write_coefficient_csv(path: &Path, field: &CoefficientField) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(COEFFICIENT_HEADER).map_err(&err)?;
    for (k, v) in field.values.iter().enumerate() {
        let (x, y) = field.grid.coords(k);
        w.write_record([num(x), num(y), num(*v)]).map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads nodal values in grid order; coordinates must match the grid.
pub fn read_coefficient_csv(path: &Path, grid: &Grid2D, role: Role) -> Result<CoefficientField> {
    let mut r = csv_reader(path)?;
    check_header(path, &mut r, &COEFFICIENT_HEADER)?;
    let mut values = Vec::with_capacity(grid.node_count());
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let row = i + 2;
        if rec.len() != 3 {
            return Err(CliError::input(path, format!("row {row}: expected 3 fields")));
        }
        let k = values.len();
        if k >= grid.node_count() {
            return Err(CliError::input(path, format!("more than {} nodes", grid.node_count())));
        }
        let (x, y) = grid.coords(k);
        let (fx, fy) = (parse_num(path, row, "x", &rec[0])?, parse_num(path, row, "y", &rec[1])?);
        if (fx - x).abs() > 1e-9 * grid.h || (fy - y).abs() > 1e-9 * grid.h {
            return Err(CliError::input(
                path,
                format!("row {row}: node ({fx}, {fy}) where the grid has ({x}, {y})"),
            ));
        }
        values.push(parse_num(path, row, "value", &rec[2])?);
    }
    if values.len() != grid.node_count() {
        return Err(CliError::input(
            path,
            format!("{} nodes, the grid has {}", values.len(), grid.node_count()),
        ));
    }
    Ok(CoefficientField::from_values(grid, role, values)?)
}

/// Legacy ASCII VTK, one point scalar on STRUCTURED_POINTS.
pub fn write_vtk(path: &Path, name: &str, grid: &Grid2D, values: &[f64]) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "# vtk DataFile Version 3.0")?;
        writeln!(w, "{name}")?;
        writeln!(w, "ASCII")?;
        writeln!(w, "DATASET STRUCTURED_POINTS")?;
        writeln!(w, "DIMENSIONS {} {} 1", grid.nx + 1, grid.ny + 1)?;
        writeln!(w, "ORIGIN {} {} 0", num(grid.origin.0), num(grid.origin.1))?;
        writeln!(w, "SPACING {} {} 1", num(grid.h), num(grid.h))?;
        writeln!(w, "POINT_DATA {}", values.len())?;
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in values {
            writeln!(w, "{}", num(*v))?;
        }
        w.flush()
    };
    write(&mut w).map_err(io_err(path))
}

pub fn write_convergence(path: &Path, rows: &[ConvergenceRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(ConvergenceRow::HEADER).map_err(&err)?;
    for row in rows {
        let mut rec = vec![row.m.to_string()];
        rec.extend(row.values()[1..].iter().map(|v| num(*v)));
        w.write_record(&rec).map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_levels(path: &Path, reports: &[LevelReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(LevelReport::HEADER).map_err(&err)?;
    for r in reports {
        w.write_record([
            r.level.to_string(),
            r.nno.to_string(),
            num(r.g_eps_norm_per_node),
            num(r.g_sigma_norm_per_node),
            num(r.max_eps),
            num(r.max_sigma),
            r.iterations.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Centres of the cells flagged for refinement, `x,y` per line.
pub fn write_flags(path: &Path, grid: &Grid2D, flags: &RefinementFlags) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["x", "y"]).map_err(&err)?;
    for (i, j) in flags.flagged() {
        let x = grid.x(i) + 0.5 * grid.h;
        let y = grid.y(j) + 0.5 * grid.h;
        w.write_record([num(x), num(y)]).map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

/// One compared gradient entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckRow {
    pub x: f64,
    pub y: f64,
    pub which: Role,
    pub adjoint: f64,
    pub fd: f64,
    pub rel_err: f64,
}

pub fn write_gradcheck(path: &Path, rows: &[GradCheckRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(GRADCHECK_HEADER).map_err(&err)?;
    for r in rows {
        let which = match r.which {
            Role::Epsilon => "eps",
            Role::Sigma => "sigma",
        };
        w.write_record([num(r.x), num(r.y), which.into(), num(r.adjoint), num(r.fd), num(r.rel_err)])
            .map_err(&err)?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use wavecip_core::{FieldRole, SpaceTimeField};

    fn grid() -> Grid2D {
        Grid2D::new(8, 8, 0.3, 0.5, 1.0).unwrap()
    }

    #[test]
    fn trace_round_trip_is_exact() {
        let g = grid();
        let f = SpaceTimeField::from_fn(&g, FieldRole::State, |x, y, t| (x * 3.1).sin() * y + t / 7.0);
        let sides = SideSet::from_sides(&[Side::Left, Side::Top]);
        let tr = BoundaryTrace::extract(&f, sides).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        write_trace(&p, &tr).unwrap();
        assert_eq!(read_trace(&p, &g, sides).unwrap(), tr);
        let other = Grid2D::new(10, 10, 0.3, 0.5, 1.0).unwrap();
        assert!(matches!(read_trace(&p, &other, sides), Err(CliError::Input { .. })));
        assert!(read_trace(&p, &g, SideSet::ALL).is_err());
    }

    #[test]
    fn coefficient_round_trip_is_exact() {
        let g = grid();
        let f = CoefficientField::gaussian(&g, Role::Epsilon, 1.0, 3.0, (0.5, 0.7), 0.01).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        write_coefficient_csv(&p, &f).unwrap();
        assert_eq!(read_coefficient_csv(&p, &g, Role::Epsilon).unwrap(), f);
        assert!(read_coefficient_csv(&p, &g.refine(), Role::Epsilon).is_err());
    }

    #[test]
    fn vtk_layout() {
        let g = grid();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.vtk");
        write_vtk(&p, "eps", &g, &vec![1.0; g.node_count()]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("DIMENSIONS 9 9 1"));
        assert!(text.contains("POINT_DATA 81"));
        assert_eq!(text.lines().count(), 10 + 81);
    }
}
