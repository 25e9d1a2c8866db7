use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ComplexError;

/// On-disk description of a finite complex.
///
/// Vertex ids are arbitrary; faces list vertex ids in cyclic (clockwise)
/// order; `boundary` lists the vertices whose curvature is held fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexDocument {
    pub vertices: Vec<u64>,
    pub faces: Vec<Vec<u64>>,
    pub boundary: Vec<u64>,
    pub base: u64,
}

/// A finite subcomplex with its interior/boundary split.
///
/// Vertices are addressed by dense local indices `0..vertex_count()`; the
/// external ids are kept for I/O and for matching vertices across nested
/// truncations. Face order is part of the structure and fixes summation
/// order downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct Complex {
    vertex_ids: Vec<u64>,
    faces: Vec<Vec<usize>>,
    boundary: Vec<bool>,
    base: usize,
    vertex_faces: Vec<Vec<usize>>,
    neighbors: Vec<Vec<usize>>,
    interior: Vec<usize>,
    index: HashMap<u64, usize>,
}

impl Complex {
    /// Builds and validates a complex. Interior vertices must meet at least
    /// three edges; faces need three distinct vertices; an edge may border at
    /// most two faces.
    pub fn new(
        vertex_ids: Vec<u64>,
        faces: Vec<Vec<usize>>,
        boundary: Vec<bool>,
        base: usize,
    ) -> Result<Self, ComplexError> {
        let n = vertex_ids.len();
        if boundary.len() != n {
            return Err(ComplexError::Malformed(format!(
                "{} boundary flags for {} vertices",
                boundary.len(),
                n
            )));
        }
        if base >= n {
            return Err(ComplexError::Malformed("base vertex out of range".into()));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, &id) in vertex_ids.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(ComplexError::DuplicateVertexId(id));
            }
        }

        let mut edge_use: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        let mut vertex_faces = vec![Vec::new(); n];
        for (fi, face) in faces.iter().enumerate() {
            if face.len() < 3 {
                return Err(ComplexError::FaceTooSmall { face: fi, len: face.len() });
            }
            let mut seen = BTreeSet::new();
            for &v in face {
                if v >= n {
                    return Err(ComplexError::Malformed(format!("face {fi} references vertex index {v}")));
                }
                if !seen.insert(v) {
                    return Err(ComplexError::RepeatedVertex { face: fi, vertex: vertex_ids[v] });
                }
                vertex_faces[v].push(fi);
            }
            for (i, &u) in face.iter().enumerate() {
                let w = face[(i + 1) % face.len()];
                let key = (u.min(w), u.max(w));
                let count = edge_use.entry(key).or_insert(0);
                *count += 1;
                if *count > 2 {
                    return Err(ComplexError::DoubleEdge(vertex_ids[key.0], vertex_ids[key.1]));
                }
                *directed.entry((u, w)).or_insert(0) += 1;
            }
        }
        if let Some(((u, w), _)) = directed.iter().find(|(_, &c)| c > 1) {
            log::warn!(
                "faces are not coherently oriented along edge {}-{}",
                vertex_ids[*u],
                vertex_ids[*w]
            );
        }

        let mut neighbors = vec![BTreeSet::new(); n];
        for face in &faces {
            for &u in face {
                for &w in face {
                    if u != w {
                        neighbors[u].insert(w);
                    }
                }
            }
        }
        let mut edge_degree = vec![0usize; n];
        for &(u, w) in edge_use.keys() {
            edge_degree[u] += 1;
            edge_degree[w] += 1;
        }
        for v in 0..n {
            if !boundary[v] && edge_degree[v] < 3 {
                return Err(ComplexError::DegreeTooLow { vertex: vertex_ids[v], degree: edge_degree[v] });
            }
        }

        let interior = (0..n).filter(|&v| !boundary[v]).collect();
        Ok(Complex {
            vertex_ids,
            faces,
            boundary,
            base,
            vertex_faces,
            neighbors: neighbors.into_iter().map(|s| s.into_iter().collect()).collect(),
            interior,
            index,
        })
    }

    pub fn from_document(doc: &ComplexDocument) -> Result<Self, ComplexError> {
        let mut index = HashMap::with_capacity(doc.vertices.len());
        for (i, &id) in doc.vertices.iter().enumerate() {
            if index.insert(id, i).is_some() {
                return Err(ComplexError::DuplicateVertexId(id));
            }
        }
        let lookup = |id: u64| index.get(&id).copied().ok_or(ComplexError::UnknownVertex(id));
        let faces = doc
            .faces
            .iter()
            .map(|f| f.iter().map(|&id| lookup(id)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        let mut boundary = vec![false; doc.vertices.len()];
        for &id in &doc.boundary {
            boundary[lookup(id)?] = true;
        }
        let base = lookup(doc.base)?;
        Complex::new(doc.vertices.clone(), faces, boundary, base)
    }

    pub fn to_document(&self) -> ComplexDocument {
        ComplexDocument {
            vertices: self.vertex_ids.clone(),
            faces: self
                .faces
                .iter()
                .map(|f| f.iter().map(|&v| self.vertex_ids[v]).collect())
                .collect(),
            boundary: (0..self.vertex_count())
                .filter(|&v| self.boundary[v])
                .map(|v| self.vertex_ids[v])
                .collect(),
            base: self.vertex_ids[self.base],
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.vertex_ids.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertex_id(&self, v: usize) -> u64 {
        self.vertex_ids[v]
    }

    pub fn vertex_ids(&self) -> &[u64] {
        &self.vertex_ids
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn base(&self) -> usize {
        self.base
    }

    pub fn faces(&self) -> &[Vec<usize>] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> &[usize] {
        &self.faces[f]
    }

    pub fn faces_of(&self, v: usize) -> &[usize] {
        &self.vertex_faces[v]
    }

    /// Number of faces at `v` present in this complex. For interior vertices
    /// this is the full degree.
    pub fn degree(&self, v: usize) -> usize {
        self.vertex_faces[v].len()
    }

    /// Vertices sharing a face with `v`, ascending.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary_vertices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.vertex_count()).filter(|&v| self.boundary[v])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("document serializes")
    }

    pub fn write(&self, path: &Path) -> Result<(), ComplexError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// Parses and validates a complex description.
pub fn load_complex(text: &str) -> Result<Complex, ComplexError> {
    let doc: ComplexDocument = serde_json::from_str(text)?;
    Complex::from_document(&doc)
}

pub fn read_complex(path: &Path) -> Result<Complex, ComplexError> {
    load_complex(&std::fs::read_to_string(path)?)
}
