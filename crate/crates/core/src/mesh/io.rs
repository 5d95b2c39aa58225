use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compute_geometry, FaceIncidence, MeshTopology, PolytopalMesh};
use crate::geom::cast_point;
use crate::{Error, Real, Result};

/// On-disk mesh layout. Vertex indices are 0-based; cell entries are 1-based face
/// ids whose sign gives the orientation of the face with respect to the cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshFile {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
    pub faces: Vec<Vec<usize>>,
    pub cells: Vec<Vec<i64>>,
}

impl MeshFile {
    pub fn from_mesh<T: Real>(mesh: &PolytopalMesh<T>) -> Self {
        let dim = mesh.dim();
        MeshFile {
            dim,
            vertices: mesh.vertices().iter().map(|v| v[..dim].iter().map(|x| x.as_f64()).collect()).collect(),
            faces: mesh.faces.clone(),
            cells: mesh
                .cells
                .iter()
                .map(|incs| incs.iter().map(|i| i64::from(i.sign) * (i.face as i64 + 1)).collect())
                .collect(),
        }
    }

    /// Checks indices and converts to a topology. `source` names the origin in errors.
    pub fn into_topology<T: Real>(self, source: &str) -> Result<MeshTopology<T>> {
        let parse_err = |location: String, message: String| Error::Parse { location, message };
        if self.dim != 2 && self.dim != 3 {
            return Err(parse_err(format!("{source}: dim"), format!("unsupported dimension {}", self.dim)));
        }
        if self.cells.is_empty() {
            return Err(parse_err(source.to_string(), "mesh has no cells".into()));
        }
        for (v, coords) in self.vertices.iter().enumerate() {
            if coords.len() != self.dim || coords.iter().any(|x| !x.is_finite()) {
                return Err(parse_err(
                    format!("{source}: vertex {v}"),
                    format!("expected {} finite coordinates", self.dim),
                ));
            }
        }
        let n_faces = self.faces.len() as i64;
        let mut cells = Vec::with_capacity(self.cells.len());
        for (c, entries) in self.cells.iter().enumerate() {
            let mut incs = Vec::with_capacity(entries.len());
            for &e in entries {
                if e == 0 || e.abs() > n_faces {
                    return Err(parse_err(
                        format!("{source}: cell {c}"),
                        format!("face reference {e} outside 1..={n_faces}"),
                    ));
                }
                let face = (e.unsigned_abs() - 1) as usize;
                if let Some(&v) = self.faces[face].iter().find(|&&v| v >= self.vertices.len()) {
                    return Err(parse_err(
                        format!("{source}: cell {c}"),
                        format!(
                            "face {} references vertex {v} but there are {} vertices",
                            face + 1,
                            self.vertices.len()
                        ),
                    ));
                }
                incs.push(FaceIncidence { face, sign: if e > 0 { 1 } else { -1 } });
            }
            cells.push(incs);
        }
        Ok(MeshTopology {
            dim: self.dim,
            vertices: self.vertices.iter().map(|v| cast_point(v)).collect(),
            faces: self.faces,
            cells,
        })
    }

    /// JSON text with coordinates written to 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{{\n  \"dim\": {},\n  \"vertices\": [", self.dim);
        for (k, v) in self.vertices.iter().enumerate() {
            let coords: Vec<String> = v.iter().map(|x| format!("{x:.16e}")).collect();
            let sep = if k + 1 < self.vertices.len() { "," } else { "" };
            let _ = write!(s, "\n    [{}]{sep}", coords.join(", "));
        }
        s.push_str("\n  ],\n  \"faces\": [");
        write_int_rows(&mut s, &self.faces);
        s.push_str("\n  ],\n  \"cells\": [");
        write_int_rows(&mut s, &self.cells);
        s.push_str("\n  ]\n}\n");
        s
    }
}

fn write_int_rows<I: ToString>(s: &mut String, rows: &[Vec<I>]) {
    for (k, row) in rows.iter().enumerate() {
        let items: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        let sep = if k + 1 < rows.len() { "," } else { "" };
        let _ = write!(s, "\n    [{}]{sep}", items.join(", "));
    }
}

/// Reads a JSON mesh and recomputes its geometry.
pub fn read_mesh<T: Real>(path: impl AsRef<Path>) -> Result<PolytopalMesh<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let file: MeshFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        location: format!("{source}:{}:{}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    compute_geometry(file.into_topology(&source)?)
}

pub fn write_mesh<T: Real>(mesh: &PolytopalMesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, MeshFile::from_mesh(mesh).to_json()).map_err(|e| Error::io(path, e))
}
