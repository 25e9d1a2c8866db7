//! Combinatorial balls around the base vertex and face-prefix exhaustions.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::complex::Complex;
use super::tiling::{Site, TilingKind, TilingProvider};
use super::ComplexError;

/// Balls `B_0 = {x_0}`, `B_{n+1} = union of V(P) over faces P meeting B_n`,
/// materialized up to a fixed depth.
///
/// Vertex ids are assigned layer by layer (`B_n \ B_{n-1}` sorted by lattice
/// address), so a vertex keeps its id in every deeper exploration and in
/// every truncation cut from it. Faces are enumerated breadth-first: by the
/// first layer they touch, ties broken by their sorted vertex ids.
pub struct BallSequence {
    provider: Box<dyn TilingProvider>,
    sites: Vec<Site>,
    vertex_index: HashMap<Site, usize>,
    /// `layer_end[n] = |B_n|`.
    layer_end: Vec<usize>,
    faces: Vec<Site>,
    face_vertices: Vec<Vec<usize>>,
    face_index: HashMap<Site, usize>,
    /// `faces_touching[n]` = number of faces meeting `B_n`.
    faces_touching: Vec<usize>,
}

impl BallSequence {
    pub fn new(provider: Box<dyn TilingProvider>, depth: usize) -> Self {
        let base = provider.base();
        let mut seq = BallSequence {
            provider,
            sites: vec![base],
            vertex_index: HashMap::from([(base, 0)]),
            layer_end: vec![1],
            faces: Vec::new(),
            face_vertices: Vec::new(),
            face_index: HashMap::new(),
            faces_touching: Vec::new(),
        };
        seq.extend_to(depth);
        seq
    }

    pub fn of_kind(kind: TilingKind, depth: usize) -> Self {
        Self::new(kind.provider(), depth)
    }

    pub fn provider(&self) -> &dyn TilingProvider {
        self.provider.as_ref()
    }

    /// Largest `n` with `B_n` materialized.
    pub fn depth(&self) -> usize {
        self.layer_end.len() - 1
    }

    /// Grows the exploration so that `B_depth` is known.
    pub fn extend_to(&mut self, depth: usize) {
        while self.depth() < depth {
            let n = self.depth();
            let start = if n == 0 { 0 } else { self.layer_end[n - 1] };
            let layer: Vec<Site> = self.sites[start..self.layer_end[n]].to_vec();
            let mut new_faces = BTreeSet::new();
            for v in &layer {
                for f in self.provider.faces_at(*v) {
                    if !self.face_index.contains_key(&f) {
                        new_faces.insert(f);
                    }
                }
            }
            let mut fresh = BTreeSet::new();
            for f in &new_faces {
                for v in self.provider.face_vertices(*f) {
                    if !self.vertex_index.contains_key(&v) {
                        fresh.insert(v);
                    }
                }
            }
            for v in fresh {
                self.vertex_index.insert(v, self.sites.len());
                self.sites.push(v);
            }
            self.layer_end.push(self.sites.len());

            let mut keyed: Vec<(Vec<usize>, Site, Vec<usize>)> = new_faces
                .into_iter()
                .map(|f| {
                    let verts: Vec<usize> = self
                        .provider
                        .face_vertices(f)
                        .iter()
                        .map(|v| self.vertex_index[v])
                        .collect();
                    let mut key = verts.clone();
                    key.sort_unstable();
                    (key, f, verts)
                })
                .collect();
            keyed.sort();
            for (_, f, verts) in keyed {
                self.face_index.insert(f, self.faces.len());
                self.faces.push(f);
                self.face_vertices.push(verts);
            }
            self.faces_touching.push(self.faces.len());
        }
    }

    pub fn ball_size(&self, n: usize) -> usize {
        self.layer_end[n]
    }

    /// Vertex ids of `B_n`; they are exactly `0..|B_n|`.
    pub fn ball(&self, n: usize) -> std::ops::Range<u64> {
        0..self.layer_end[n] as u64
    }

    /// Smallest `n` with `id` in `B_n`.
    pub fn layer_of(&self, id: u64) -> Option<usize> {
        let id = id as usize;
        if id >= self.sites.len() {
            return None;
        }
        Some(self.layer_end.partition_point(|&end| end <= id))
    }

    pub fn site_of(&self, id: u64) -> Option<Site> {
        self.sites.get(id as usize).copied()
    }

    pub fn id_of(&self, site: Site) -> Option<u64> {
        self.vertex_index.get(&site).map(|&i| i as u64)
    }

    /// Vertex ids sharing a face with `id` (requires `id` in `B_{depth-1}`).
    pub fn neighbors(&self, id: u64) -> Vec<u64> {
        let site = self.sites[id as usize];
        let mut out = BTreeSet::new();
        for f in self.provider.faces_at(site) {
            for v in self.provider.face_vertices(f) {
                if v != site {
                    out.insert(self.vertex_index[&v] as u64);
                }
            }
        }
        out.into_iter().collect()
    }

    /// `∂B_n`: vertices of `B_n` sharing a face with a vertex outside `B_n`.
    pub fn ball_boundary(&self, n: usize) -> Result<Vec<u64>, ComplexError> {
        self.require(n + 1)?;
        let end = self.layer_end[n] as u64;
        Ok((0..end)
            .filter(|&v| self.neighbors(v).iter().any(|&w| w >= end))
            .collect())
    }

    fn require(&self, depth: usize) -> Result<(), ComplexError> {
        if depth > self.depth() {
            Err(ComplexError::InsufficientDepth { needed: depth, explored: self.depth() })
        } else {
            Ok(())
        }
    }

    /// Number of faces meeting `B_n`.
    pub fn faces_touching(&self, n: usize) -> usize {
        self.faces_touching[n]
    }

    /// Breadth-first face enumeration `{P_m}` over everything explored.
    pub fn enumeration(&self) -> FaceEnumeration {
        FaceEnumeration::new(
            self.face_vertices
                .iter()
                .map(|f| f.iter().map(|&v| v as u64).collect())
                .collect(),
        )
    }

    /// `a_n = (faces meeting B_{n-1}) - 1`, so that `H_n = B_n`.
    pub fn default_prefix(&self) -> PrefixSequence {
        PrefixSequence::new(self.faces_touching.iter().map(|&c| c - 1).collect())
            .expect("face counts strictly increase")
    }

    /// Truncation at `B_n`: interior vertices are those whose every incident
    /// face lies inside `B_n`; the faces kept are those meeting the interior.
    pub fn truncation(&self, n: usize) -> Result<Complex, ComplexError> {
        self.require(n + 1)?;
        let end = self.layer_end[n];
        let mut boundary = vec![false; end];
        let mut faces: BTreeSet<usize> = BTreeSet::new();
        for (v, flag) in boundary.iter_mut().enumerate() {
            let incident: Vec<usize> = self
                .provider
                .faces_at(self.sites[v])
                .iter()
                .map(|f| self.face_index[f])
                .collect();
            let inside = incident
                .iter()
                .all(|&f| self.face_vertices[f].iter().all(|&w| w < end));
            if inside {
                faces.extend(incident);
            } else {
                *flag = true;
            }
        }
        let faces = faces.into_iter().map(|f| self.face_vertices[f].clone()).collect();
        Complex::new((0..end as u64).collect(), faces, boundary, 0)
    }
}

/// Enumeration `{P_m}` of faces, each as its vertex-id list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceEnumeration {
    faces: Vec<Vec<u64>>,
}

impl FaceEnumeration {
    pub fn new(faces: Vec<Vec<u64>>) -> Self {
        FaceEnumeration { faces }
    }

    pub fn len(&self) -> usize {
        self.faces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn face(&self, m: usize) -> &[u64] {
        &self.faces[m]
    }

    pub fn faces(&self) -> &[Vec<u64>] {
        &self.faces
    }

    /// `H_n = union_{m=0}^{a_n} V(P_m)`.
    pub fn prefix(&self, a: &PrefixSequence, n: usize) -> Result<BTreeSet<u64>, ComplexError> {
        let last = a.get(n)?;
        if last >= self.faces.len() {
            return Err(ComplexError::InsufficientDepth { needed: last + 1, explored: self.faces.len() });
        }
        Ok(self.faces[..=last].iter().flatten().copied().collect())
    }

    /// Smallest `n >= 1` with `W` inside `H_n`, searching the supplied prefix
    /// indices only.
    pub fn n_w(&self, a: &PrefixSequence, w: &BTreeSet<u64>) -> Result<usize, ComplexError> {
        if w.is_empty() {
            return Err(ComplexError::Malformed("W must be nonempty".into()));
        }
        let mut missing: HashSet<u64> = w.iter().copied().collect();
        let mut covered_to = 0usize;
        for n in 1..=a.len() {
            let last = a.get(n)?;
            if last >= self.faces.len() {
                break;
            }
            for face in &self.faces[covered_to..=last] {
                for v in face {
                    missing.remove(v);
                }
            }
            covered_to = last + 1;
            if missing.is_empty() {
                return Ok(n);
            }
        }
        Err(ComplexError::InsufficientDepth { needed: a.len() + 1, explored: a.len() })
    }
}

/// Strictly increasing face-index sequence `a_1 < a_2 < ...`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixSequence {
    values: Vec<usize>,
}

impl PrefixSequence {
    pub fn new(values: Vec<usize>) -> Result<Self, ComplexError> {
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ComplexError::Malformed("prefix sequence must be strictly increasing".into()));
        }
        Ok(PrefixSequence { values })
    }

    /// `a_n = f(n)` for `n = 1..=count`.
    pub fn from_fn<F: Fn(usize) -> usize>(count: usize, f: F) -> Result<Self, ComplexError> {
        Self::new((1..=count).map(f).collect())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `a_n`, one-based.
    pub fn get(&self, n: usize) -> Result<usize, ComplexError> {
        if n == 0 || n > self.values.len() {
            return Err(ComplexError::InsufficientDepth { needed: n, explored: self.values.len() });
        }
        Ok(self.values[n - 1])
    }
}

/// Ball of the given radius around the base vertex of a built-in tiling.
pub fn generate_tiling(kind: TilingKind, radius: usize) -> Result<Complex, ComplexError> {
    if radius < 1 {
        return Err(ComplexError::Malformed("radius must be at least 1".into()));
    }
    BallSequence::of_kind(kind, radius + 1).truncation(radius)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_one_balls() {
        for (kind, deg, extra) in [
            (TilingKind::Square, 4, 8),
            (TilingKind::Triangular, 6, 6),
            (TilingKind::Hexagonal, 3, 12),
        ] {
            let c = generate_tiling(kind, 1).unwrap();
            assert_eq!(c.interior(), &[0], "{kind}");
            assert_eq!(c.degree(0), deg);
            assert_eq!(c.face_count(), deg);
            assert_eq!(c.vertex_count(), 1 + extra);
        }
        assert!(generate_tiling(TilingKind::Square, 0).is_err());
    }

    #[test]
    fn square_balls_are_chebyshev_squares() {
        let seq = BallSequence::of_kind(TilingKind::Square, 6);
        for n in 0..=6 {
            assert_eq!(seq.ball_size(n), (2 * n + 1) * (2 * n + 1));
        }
        let c = seq.truncation(5).unwrap();
        assert_eq!(c.interior().len(), 81);
        assert_eq!(c.face_count(), 100);
    }

    #[test]
    fn layer_lookup() {
        let seq = BallSequence::of_kind(TilingKind::Triangular, 3);
        assert_eq!(seq.layer_of(0), Some(0));
        assert_eq!(seq.layer_of(1), Some(1));
        assert_eq!(seq.layer_of(6), Some(1));
        assert_eq!(seq.layer_of(7), Some(2));
        assert_eq!(seq.id_of(seq.site_of(5).unwrap()), Some(5));
    }

    #[test]
    fn default_prefix_reproduces_balls() {
        let seq = BallSequence::of_kind(TilingKind::Hexagonal, 5);
        let e = seq.enumeration();
        let a = seq.default_prefix();
        for n in 1..=4 {
            let h = e.prefix(&a, n).unwrap();
            assert_eq!(h, seq.ball(n).collect::<BTreeSet<_>>());
        }
    }

    #[test]
    fn n_w_examples() {
        let seq = BallSequence::of_kind(TilingKind::Square, 4);
        let e = seq.enumeration();
        let a = PrefixSequence::from_fn(10, |n| n).unwrap();
        let p0: BTreeSet<u64> = e.face(0).iter().copied().collect();
        assert_eq!(e.n_w(&a, &p0).unwrap(), 1);
        assert!(e.face(0).contains(&0));
        assert_eq!(e.n_w(&a, &BTreeSet::from([0])).unwrap(), 1);
        let far: BTreeSet<u64> = BTreeSet::from([seq.ball_size(4) as u64 - 1]);
        assert!(matches!(e.n_w(&a, &far), Err(ComplexError::InsufficientDepth { .. })));
        assert!(PrefixSequence::new(vec![1, 1]).is_err());
    }
}
