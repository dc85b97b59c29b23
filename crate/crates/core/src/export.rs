//! Result files: legacy ASCII VTK, CSV histories and PGM density images.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::driver::{ConvergenceHistory, RunResult};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExportFormat {
    Vtk,
    Csv,
    Image,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vtk" => Ok(ExportFormat::Vtk),
            "csv" => Ok(ExportFormat::Csv),
            "img" | "image" | "pgm" => Ok(ExportFormat::Image),
            other => Err(Error::invalid(format!(
                "unknown export format `{other}` (expected vtk, csv or img)"
            ))),
        }
    }
}

/// Point and cell fields on a structured grid.
pub fn write_vtk<W: Write>(
    mut w: W,
    mesh: &Mesh,
    title: &str,
    density: &[f64],
    pressure: &[f64],
    displacement: Option<&[f64]>,
) -> Result<()> {
    let (nx, ny) = (mesh.nx(), mesh.ny());
    if density.len() != mesh.element_count() || pressure.len() != mesh.node_count() {
        return Err(Error::invalid("field sizes do not match the mesh"));
    }
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{title}")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_GRID")?;
    writeln!(w, "DIMENSIONS {} {} 1", nx + 1, ny + 1)?;
    writeln!(w, "POINTS {} double", mesh.node_count())?;
    for p in mesh.node_coords() {
        writeln!(w, "{:e} {:e} 0", p[0], p[1])?;
    }
    writeln!(w, "CELL_DATA {}", mesh.element_count())?;
    writeln!(w, "SCALARS density double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in density {
        writeln!(w, "{v:e}")?;
    }
    writeln!(w, "POINT_DATA {}", mesh.node_count())?;
    writeln!(w, "SCALARS pressure double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for v in pressure {
        writeln!(w, "{v:e}")?;
    }
    if let Some(u) = displacement {
        if u.len() != mesh.dof_count() {
            return Err(Error::invalid("displacement size does not match the mesh"));
        }
        writeln!(w, "VECTORS displacement double")?;
        for d in u.chunks_exact(2) {
            writeln!(w, "{:e} {:e} 0", d[0], d[1])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct HistoryRow {
    iter: usize,
    objective: f64,
    volume: f64,
    #[serde(rename = "Fx")]
    fx: f64,
    #[serde(rename = "Fy")]
    fy: f64,
    delta: Option<f64>,
    max_dx: f64,
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// History with header `iter,objective,volume,Fx,Fy,delta,max_dx`. `delta`
/// is left empty for compliance problems.
pub fn write_history_csv<W: Write>(w: W, history: &ConvergenceHistory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    if history.is_empty() {
        out.write_record(["iter", "objective", "volume", "Fx", "Fy", "delta", "max_dx"])
            .map_err(csv_error)?;
    }
    for r in &history.records {
        out.serialize(HistoryRow {
            iter: r.iter,
            objective: r.objective,
            volume: r.volume,
            fx: r.fx,
            fy: r.fy,
            delta: r.delta,
            max_dx: r.max_dx,
        })
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct GradientRow {
    iter: usize,
    elastic_norm: f64,
    load_norm: f64,
    kkt_residual: f64,
}

/// Per-iteration gradient norms, split into elastic and load parts.
pub fn write_gradient_csv<W: Write>(w: W, history: &ConvergenceHistory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in &history.records {
        out.serialize(GradientRow {
            iter: r.iter,
            elastic_norm: r.elastic_norm,
            load_norm: r.load_norm,
            kkt_residual: r.kkt_residual,
        })
        .map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

/// Binary PGM with one pixel per element, solid black and void white. The
/// top row of the image is the top row of elements.
pub fn write_pgm<W: Write>(mut w: W, mesh: &Mesh, density: &[f64]) -> Result<()> {
    if density.len() != mesh.element_count() {
        return Err(Error::invalid("density size does not match the mesh"));
    }
    let (nx, ny) = (mesh.nx(), mesh.ny());
    write!(w, "P5\n{nx} {ny}\n255\n")?;
    let mut row = vec![0u8; nx];
    for j in (0..ny).rev() {
        for (i, px) in row.iter_mut().enumerate() {
            let rho = density[j * nx + i].clamp(0.0, 1.0);
            *px = (255.0 * (1.0 - rho)).round() as u8;
        }
        w.write_all(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn create(dir: &Path, name: String) -> Result<(BufWriter<File>, PathBuf)> {
    let path = dir.join(name);
    Ok((BufWriter::new(File::create(&path)?), path))
}

/// Writes the requested files into `out_dir` (created if missing) and
/// returns their paths.
pub fn export(result: &RunResult, formats: &[ExportFormat], out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mesh = &result.problem.mesh;
    let name = &result.name;
    let mut written = Vec::new();
    for fmt in formats {
        match fmt {
            ExportFormat::Vtk => {
                let (w, path) = create(dir, format!("{name}.vtk"))?;
                write_vtk(
                    w,
                    mesh,
                    name,
                    &result.density().physical,
                    &result.pressure().p,
                    Some(&result.elastic().u),
                )?;
                written.push(path);
            }
            ExportFormat::Csv => {
                let (w, path) = create(dir, format!("{name}_history.csv"))?;
                write_history_csv(w, &result.history)?;
                written.push(path);
            }
            ExportFormat::Image => {
                let (w, path) = create(dir, format!("{name}.pgm"))?;
                write_pgm(w, mesh, &result.density().physical)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}

/// Writes `<name>_gradients.csv` into `out_dir`.
pub fn export_gradients(result: &RunResult, out_dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let (w, path) = create(dir, format!("{}_gradients.csv", result.name))?;
    write_gradient_csv(w, &result.history)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::IterationRecord;

    fn record(iter: usize, delta: Option<f64>) -> IterationRecord {
        IterationRecord {
            iter,
            objective: 1.5,
            volume: 0.45,
            fx: 0.0,
            fy: 1000.0,
            delta,
            max_dx: 0.1,
            elastic_norm: 1.0,
            load_norm: 0.5,
            kkt_residual: 0.0,
        }
    }

    #[test]
    fn vtk_counts() {
        let mesh = Mesh::grid(10, 7, 1.0, 0.7, 0.01).unwrap();
        let mut buf = Vec::new();
        write_vtk(&mut buf, &mesh, "t", &vec![0.5; 70], &vec![1.0; 88], None).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("DIMENSIONS 11 8 1"));
        assert!(text.contains("POINTS 88 double"));
        assert!(text.contains("CELL_DATA 70"));
        assert!(text.contains("POINT_DATA 88"));
        assert_eq!(text.lines().count(), 6 + 88 + 3 + 70 + 3 + 88);
    }

    #[test]
    fn csv_header_and_rows() {
        let history = ConvergenceHistory {
            records: vec![record(1, None), record(2, None)],
        };
        let mut buf = Vec::new();
        write_history_csv(&mut buf, &history).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iter,objective,volume,Fx,Fy,delta,max_dx");
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1], "1,1.5,0.45,0.0,1000.0,,0.1");

        let mut buf = Vec::new();
        write_history_csv(&mut buf, &ConvergenceHistory::default()).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap().trim(),
            "iter,objective,volume,Fx,Fy,delta,max_dx"
        );
    }

    #[test]
    fn pgm_layout() {
        let mesh = Mesh::grid(3, 2, 3.0, 2.0, 1.0).unwrap();
        // Bottom-left element solid, everything else void.
        let mut rho = vec![0.0; 6];
        rho[0] = 1.0;
        let mut buf = Vec::new();
        write_pgm(&mut buf, &mesh, &rho).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(&buf[header.len()..], &[255, 255, 255, 0, 255, 255]);
    }

    #[test]
    fn formats_parse() {
        assert_eq!("VTK".parse::<ExportFormat>().unwrap(), ExportFormat::Vtk);
        assert_eq!("img".parse::<ExportFormat>().unwrap(), ExportFormat::Image);
        assert!("png".parse::<ExportFormat>().is_err());
    }
}
