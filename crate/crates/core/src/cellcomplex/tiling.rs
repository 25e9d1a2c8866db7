//! Lazily described infinite tilings of the plane.

use std::fmt;
use std::str::FromStr;

use super::ComplexError;

/// Lattice address of a vertex or a face. Its meaning depends on the tiling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub a: i32,
    pub b: i32,
    pub t: u8,
}

impl Site {
    pub const fn new(a: i32, b: i32, t: u8) -> Self {
        Site { a, b, t }
    }
}

/// An infinite polygonal cellular decomposition, enumerated on demand.
pub trait TilingProvider: Send + Sync {
    fn name(&self) -> &str;
    fn base(&self) -> Site;
    /// Faces incident to a vertex.
    fn faces_at(&self, vertex: Site) -> Vec<Site>;
    /// Vertices of a face in clockwise order.
    fn face_vertices(&self, face: Site) -> Vec<Site>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TilingKind {
    Square,
    Triangular,
    Hexagonal,
}

impl TilingKind {
    pub fn provider(self) -> Box<dyn TilingProvider> {
        match self {
            TilingKind::Square => Box::new(SquareGrid),
            TilingKind::Triangular => Box::new(TriangularLattice),
            TilingKind::Hexagonal => Box::new(HexagonalTessellation),
        }
    }

    /// Number of faces at every vertex.
    pub fn vertex_degree(self) -> usize {
        match self {
            TilingKind::Square => 4,
            TilingKind::Triangular => 6,
            TilingKind::Hexagonal => 3,
        }
    }

    /// Number of vertices of every face.
    pub fn face_size(self) -> usize {
        match self {
            TilingKind::Square => 4,
            TilingKind::Triangular => 3,
            TilingKind::Hexagonal => 6,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            TilingKind::Square => "square",
            TilingKind::Triangular => "tri",
            TilingKind::Hexagonal => "hex",
        }
    }
}

impl FromStr for TilingKind {
    type Err = ComplexError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "square" | "square-grid" => Ok(TilingKind::Square),
            "tri" | "triangular" | "equilateral-triangulation" => Ok(TilingKind::Triangular),
            "hex" | "hexagonal" | "hexagonal-tessellation" => Ok(TilingKind::Hexagonal),
            other => Err(ComplexError::UnknownTiling(other.to_string())),
        }
    }
}

impl fmt::Display for TilingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

fn triangular_position(a: i32, b: i32) -> (f64, f64) {
    (a as f64 + 0.5 * b as f64, b as f64 * 3f64.sqrt() / 2.0)
}

/// Sorts `items` clockwise around `centre` by the positions `pos` gives them.
fn clockwise<F: Fn(&Site) -> (f64, f64)>(mut items: Vec<Site>, centre: (f64, f64), pos: F) -> Vec<Site> {
    let angle = |s: &Site| {
        let (x, y) = pos(s);
        (y - centre.1).atan2(x - centre.0)
    };
    items.sort_by(|p, q| angle(q).total_cmp(&angle(p)));
    items
}

fn centroid<F: Fn(&Site) -> (f64, f64)>(items: &[Site], pos: F) -> (f64, f64) {
    let n = items.len() as f64;
    let (sx, sy) = items
        .iter()
        .map(pos)
        .fold((0.0, 0.0), |(ax, ay), (x, y)| (ax + x, ay + y));
    (sx / n, sy / n)
}

/// Unit squares; vertex `(a, b)`, face `(a, b)` has lower-left corner `(a, b)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquareGrid;

impl TilingProvider for SquareGrid {
    fn name(&self) -> &str {
        "square-grid"
    }

    fn base(&self) -> Site {
        Site::new(0, 0, 0)
    }

    fn faces_at(&self, v: Site) -> Vec<Site> {
        // clockwise starting from the upper-right square
        vec![
            Site::new(v.a, v.b, 0),
            Site::new(v.a, v.b - 1, 0),
            Site::new(v.a - 1, v.b - 1, 0),
            Site::new(v.a - 1, v.b, 0),
        ]
    }

    fn face_vertices(&self, f: Site) -> Vec<Site> {
        vec![
            Site::new(f.a, f.b, 0),
            Site::new(f.a, f.b + 1, 0),
            Site::new(f.a + 1, f.b + 1, 0),
            Site::new(f.a + 1, f.b, 0),
        ]
    }
}

/// Equilateral triangles on the lattice `a e1 + b e2` with `e2` at 60 degrees.
/// Face `t = 0` is the up-triangle `(a,b),(a+1,b),(a,b+1)`, `t = 1` the
/// down-triangle `(a+1,b),(a+1,b+1),(a,b+1)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct TriangularLattice;

fn triangle_corners(f: Site) -> [Site; 3] {
    let (a, b) = (f.a, f.b);
    if f.t == 0 {
        [Site::new(a, b, 0), Site::new(a + 1, b, 0), Site::new(a, b + 1, 0)]
    } else {
        [Site::new(a + 1, b, 0), Site::new(a + 1, b + 1, 0), Site::new(a, b + 1, 0)]
    }
}

fn triangles_at(a: i32, b: i32) -> Vec<Site> {
    vec![
        Site::new(a, b, 0),
        Site::new(a - 1, b, 0),
        Site::new(a, b - 1, 0),
        Site::new(a - 1, b, 1),
        Site::new(a - 1, b - 1, 1),
        Site::new(a, b - 1, 1),
    ]
}

fn triangle_centroid(f: &Site) -> (f64, f64) {
    centroid(&triangle_corners(*f), |s| triangular_position(s.a, s.b))
}

impl TilingProvider for TriangularLattice {
    fn name(&self) -> &str {
        "equilateral-triangulation"
    }

    fn base(&self) -> Site {
        Site::new(0, 0, 0)
    }

    fn faces_at(&self, v: Site) -> Vec<Site> {
        clockwise(triangles_at(v.a, v.b), triangular_position(v.a, v.b), triangle_centroid)
    }

    fn face_vertices(&self, f: Site) -> Vec<Site> {
        let corners = triangle_corners(f).to_vec();
        let c = triangle_centroid(&f);
        clockwise(corners, c, |s| triangular_position(s.a, s.b))
    }
}

/// Regular hexagons, the dual of [`TriangularLattice`]: vertices are the
/// triangles, faces are the lattice points.
#[derive(Debug, Clone, Copy, Default)]
pub struct HexagonalTessellation;

impl TilingProvider for HexagonalTessellation {
    fn name(&self) -> &str {
        "hexagonal-tessellation"
    }

    fn base(&self) -> Site {
        Site::new(0, 0, 0)
    }

    fn faces_at(&self, v: Site) -> Vec<Site> {
        let corners: Vec<Site> = triangle_corners(v).to_vec();
        clockwise(corners, triangle_centroid(&v), |s| triangular_position(s.a, s.b))
    }

    fn face_vertices(&self, f: Site) -> Vec<Site> {
        clockwise(triangles_at(f.a, f.b), triangular_position(f.a, f.b), triangle_centroid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn check_symmetric_incidence(p: &dyn TilingProvider, deg: usize, size: usize) {
        for a in -3..=3 {
            for b in -3..=3 {
                for f in p.faces_at(Site::new(a, b, 0)) {
                    let verts = p.face_vertices(f);
                    assert_eq!(verts.len(), size, "{}", p.name());
                    let distinct: HashSet<_> = verts.iter().collect();
                    assert_eq!(distinct.len(), size);
                    for v in &verts {
                        assert!(p.faces_at(*v).contains(&f));
                        assert_eq!(p.faces_at(*v).len(), deg);
                    }
                }
            }
        }
    }

    #[test]
    fn incidence_is_symmetric() {
        check_symmetric_incidence(&SquareGrid, 4, 4);
        check_symmetric_incidence(&TriangularLattice, 6, 3);
        check_symmetric_incidence(&HexagonalTessellation, 3, 6);
    }

    #[test]
    fn kind_names_parse() {
        assert_eq!("square".parse::<TilingKind>().unwrap(), TilingKind::Square);
        assert_eq!("equilateral-triangulation".parse::<TilingKind>().unwrap(), TilingKind::Triangular);
        assert_eq!("hex".parse::<TilingKind>().unwrap(), TilingKind::Hexagonal);
        assert!(matches!("penrose".parse::<TilingKind>(), Err(ComplexError::UnknownTiling(_))));
    }

    #[test]
    fn square_faces_are_clockwise() {
        let v = SquareGrid.face_vertices(Site::new(0, 0, 0));
        // up, right, down: clockwise with y pointing up
        assert_eq!(v[1], Site::new(0, 1, 0));
        assert_eq!(v[2], Site::new(1, 1, 0));
    }
}
