//! File output: diagnostics CSV, VTK legacy ASCII fields, JSON summaries.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::cahn_hilliard::CHState;
use crate::coupled::DiagnosticsRecord;
use crate::discretization::Discretization;
use crate::error::{NschError, Result};
use crate::stokes::FlowState;

/// Environment variable naming the directory under which runs are created when no
/// `--out` is given.
pub const OUTPUT_ROOT_ENV: &str = "NSCH_OUTPUT_ROOT";

pub fn default_output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

/// 17 significant digits, enough to reproduce every f64 bit for bit.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

const INTEGER_COLUMNS: [&str; 3] = ["step", "newton_iterations", "retries"];

pub fn diagnostics_header() -> String {
    DiagnosticsRecord::COLUMNS.join(",")
}

pub fn diagnostics_row(rec: &DiagnosticsRecord) -> String {
    DiagnosticsRecord::COLUMNS
        .iter()
        .zip(rec.values())
        .map(|(name, v)| if INTEGER_COLUMNS.contains(name) { format!("{}", v as u64) } else { fmt_f64(v) })
        .collect::<Vec<_>>()
        .join(",")
}

/// Appends one flushed row per record, so a run that aborts keeps everything up to the
/// failing step.
pub struct DiagnosticsWriter {
    out: BufWriter<File>,
}

impl DiagnosticsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", diagnostics_header())?;
        Ok(Self { out })
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        writeln!(self.out, "{}", diagnostics_row(rec))?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn write_diagnostics(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = DiagnosticsWriter::create(path)?;
    for r in records {
        w.write(r)?;
    }
    Ok(())
}

/// Plain CSV table; numbers are written with [`fmt_f64`].
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        if row.len() != header.len() {
            return Err(NschError::InvalidInput(format!(
                "table row has {} entries for {} columns",
                row.len(),
                header.len()
            )));
        }
        writeln!(out, "{}", row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| NschError::Config(format!("cannot encode JSON: {e}")))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn scalars(out: &mut impl Write, name: &str, values: &[f64]) -> std::io::Result<()> {
    writeln!(out, "SCALARS {name} double 1")?;
    writeln!(out, "LOOKUP_TABLE default")?;
    for v in values {
        writeln!(out, "{}", fmt_f64(*v))?;
    }
    Ok(())
}

fn vectors(out: &mut impl Write, name: &str, values: &[[f64; 2]]) -> std::io::Result<()> {
    writeln!(out, "VECTORS {name} double")?;
    for v in values {
        writeln!(out, "{} {} 0", fmt_f64(v[0]), fmt_f64(v[1]))?;
    }
    Ok(())
}

/// Bulk fields on the triangulation: φ, μ, p at vertices and the vertex values of v.
pub fn write_bulk_vtk(path: &Path, disc: &Discretization, ch: &CHState, flow: &FlowState) -> Result<()> {
    let mesh = &disc.mesh;
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "bulk fields t={}", fmt_f64(ch.t))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {} double", mesh.vertices.len())?;
    for x in &mesh.vertices {
        writeln!(out, "{} {} 0", fmt_f64(x[0]), fmt_f64(x[1]))?;
    }
    let nt = mesh.triangles.len();
    writeln!(out, "CELLS {nt} {}", 4 * nt)?;
    for t in &mesh.triangles {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {nt}")?;
    for _ in 0..nt {
        writeln!(out, "5")?;
    }
    writeln!(out, "POINT_DATA {}", mesh.vertices.len())?;
    scalars(&mut out, "phi", &ch.phase.phi)?;
    scalars(&mut out, "mu", &ch.chem.phi)?;
    scalars(&mut out, "p", &flow.p)?;
    vectors(&mut out, "v", flow.v.vertex_values(mesh))?;
    out.flush()?;
    Ok(())
}

/// Boundary fields on the closed polyline: ψ, θ, the surface velocity ωτ at vertices
/// and the surface pressure per segment.
pub fn write_surface_vtk(path: &Path, disc: &Discretization, ch: &CHState, flow: &FlowState) -> Result<()> {
    let mesh = &disc.mesh;
    let nb = disc.nb();
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "surface fields t={}", fmt_f64(ch.t))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {nb} double")?;
    for &v in &mesh.boundary_loop {
        let x = mesh.vertices[v];
        writeln!(out, "{} {} 0", fmt_f64(x[0]), fmt_f64(x[1]))?;
    }
    writeln!(out, "CELLS {nb} {}", 3 * nb)?;
    for k in 0..nb {
        writeln!(out, "2 {k} {}", (k + 1) % nb)?;
    }
    writeln!(out, "CELL_TYPES {nb}")?;
    for _ in 0..nb {
        writeln!(out, "3")?;
    }
    writeln!(out, "CELL_DATA {nb}")?;
    scalars(&mut out, "q", &flow.q)?;
    writeln!(out, "POINT_DATA {nb}")?;
    scalars(&mut out, "psi", &ch.phase.psi)?;
    scalars(&mut out, "theta", &ch.chem.psi)?;
    let w: Vec<[f64; 2]> = disc.frame.tangents.iter().map(|t| [flow.omega * t[0], flow.omega * t[1]]).collect();
    vectors(&mut out, "w", &w)?;
    out.flush()?;
    Ok(())
}

/// Writes `bulk_<step>.vtk` and `surface_<step>.vtk` into `dir`.
pub fn write_fields(dir: &Path, step: usize, disc: &Discretization, ch: &CHState, flow: &FlowState) -> Result<()> {
    write_bulk_vtk(&dir.join(format!("bulk_{step:06}.vtk")), disc, ch, flow)?;
    write_surface_vtk(&dir.join(format!("surface_{step:06}.vtk")), disc, ch, flow)
}
