//! Per-vertex total geodesic curvature over a finite complex and its sparse
//! Jacobian in log-curvature coordinates.
//!
//! Face solves run in parallel; every reduction walks faces in ascending
//! order so that repeated assemblies are bitwise identical.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cellcomplex::Complex;
use crate::facepacking::{face_jacobian_with, total_curvature_face, FaceError, FaceJacobian, FacePackingSolution};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("state has {got} entries, complex has {expected} vertices")]
    Length { expected: usize, got: usize },
    #[error("log-curvature at vertex {vertex} is not finite")]
    NonFinite { vertex: u64 },
    #[error("prescribed curvature at vertex {vertex} must be positive and finite, got {value}")]
    Prescribed { vertex: u64, value: f64 },
    #[error("no prescribed value for interior vertex {0}")]
    MissingVertex(u64),
    #[error("cannot parse curvature rule `{0}`")]
    ParseRule(String),
    #[error("face {face}: {source}")]
    Face {
        face: usize,
        #[source]
        source: FaceError,
    },
}

/// Rule producing `T̂` on a complex.
#[derive(Debug, Clone, PartialEq)]
pub enum CurvatureRule {
    Constant(f64),
    /// `T̂_v = deg(v)`.
    Degree,
    /// `T̂_v = c deg(v)`.
    DegreeTimes(f64),
    /// Explicit values keyed by vertex id; boundary entries may be omitted.
    PerVertex(BTreeMap<u64, f64>),
}

impl FromStr for CurvatureRule {
    type Err = FieldError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let t = text.trim();
        if t == "deg" {
            return Ok(CurvatureRule::Degree);
        }
        if let Some(c) = t.strip_prefix("deg*") {
            return c
                .trim()
                .parse()
                .map(CurvatureRule::DegreeTimes)
                .map_err(|_| FieldError::ParseRule(text.to_string()));
        }
        t.parse()
            .map(CurvatureRule::Constant)
            .map_err(|_| FieldError::ParseRule(text.to_string()))
    }
}

/// Prescribed total curvature `T̂`, one positive value per vertex.
///
/// Only interior entries drive the flow; boundary entries are carried so
/// that vectors line up with the complex.
#[derive(Debug, Clone, PartialEq)]
pub struct PrescribedCurvature {
    values: Vec<f64>,
}

impl PrescribedCurvature {
    pub fn new(complex: &Complex, values: Vec<f64>) -> Result<Self, FieldError> {
        if values.len() != complex.vertex_count() {
            return Err(FieldError::Length { expected: complex.vertex_count(), got: values.len() });
        }
        for (v, &x) in values.iter().enumerate() {
            if !(x.is_finite() && x > 0.0) {
                return Err(FieldError::Prescribed { vertex: complex.vertex_id(v), value: x });
            }
        }
        Ok(PrescribedCurvature { values })
    }

    pub fn uniform(complex: &Complex, value: f64) -> Result<Self, FieldError> {
        Self::new(complex, vec![value; complex.vertex_count()])
    }

    pub fn from_rule(complex: &Complex, rule: &CurvatureRule) -> Result<Self, FieldError> {
        let values = (0..complex.vertex_count())
            .map(|v| match rule {
                CurvatureRule::Constant(c) => Ok(*c),
                CurvatureRule::Degree => Ok(complex.degree(v) as f64),
                CurvatureRule::DegreeTimes(c) => Ok(c * complex.degree(v) as f64),
                CurvatureRule::PerVertex(map) => {
                    let id = complex.vertex_id(v);
                    match map.get(&id) {
                        Some(&x) => Ok(x),
                        // unused by the flow; any positive placeholder will do
                        None if complex.is_boundary(v) => Ok(1.0),
                        None => Err(FieldError::MissingVertex(id)),
                    }
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(complex, values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, v: usize) -> f64 {
        self.values[v]
    }

    /// `λ T̂`.
    pub fn scaled(&self, lambda: f64) -> PrescribedCurvature {
        PrescribedCurvature { values: self.values.iter().map(|x| lambda * x).collect() }
    }
}

fn check_state(complex: &Complex, s: &[f64]) -> Result<(), FieldError> {
    if s.len() != complex.vertex_count() {
        return Err(FieldError::Length { expected: complex.vertex_count(), got: s.len() });
    }
    if let Some(v) = s.iter().position(|x| !x.is_finite()) {
        return Err(FieldError::NonFinite { vertex: complex.vertex_id(v) });
    }
    Ok(())
}

fn solve_faces(complex: &Complex, k: &[f64]) -> Result<Vec<FacePackingSolution>, FieldError> {
    complex
        .faces()
        .par_iter()
        .with_min_len(16)
        .enumerate()
        .map(|(fi, face)| {
            let kf: Vec<f64> = face.iter().map(|&v| k[v]).collect();
            total_curvature_face(&kf, None).map_err(|source| FieldError::Face { face: fi, source })
        })
        .collect()
}

fn reduce_totals(complex: &Complex, solutions: &[FacePackingSolution]) -> Vec<f64> {
    let mut totals = vec![0.0; complex.vertex_count()];
    for (face, sol) in complex.faces().iter().zip(solutions) {
        for (&v, arc) in face.iter().zip(&sol.arcs) {
            totals[v] += arc.total_curvature;
        }
    }
    totals
}

/// `T_v` for every vertex. Boundary entries only count faces present in the
/// complex.
pub fn vertex_totals(complex: &Complex, s: &[f64]) -> Result<Vec<f64>, FieldError> {
    check_state(complex, s)?;
    let k: Vec<f64> = s.iter().map(|x| x.exp()).collect();
    let solutions = solve_faces(complex, &k)?;
    Ok(reduce_totals(complex, &solutions))
}

/// `∂T_i/∂s_j` for interior rows `i`, columns over `N(i) ∪ {i}`, stored as
/// compressed rows with ascending columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseJacobian {
    rows: Vec<usize>,
    row_of: Vec<Option<usize>>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseJacobian {
    fn pattern(complex: &Complex) -> Self {
        let rows = complex.interior().to_vec();
        let mut row_of = vec![None; complex.vertex_count()];
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        for (r, &i) in rows.iter().enumerate() {
            row_of[i] = Some(r);
            let nb = complex.neighbors(i);
            let at = nb.partition_point(|&j| j < i);
            cols.extend_from_slice(&nb[..at]);
            cols.push(i);
            cols.extend_from_slice(&nb[at..]);
            row_ptr.push(cols.len());
        }
        let vals = vec![0.0; cols.len()];
        SparseJacobian { rows, row_of, row_ptr, cols, vals }
    }

    fn slot(&self, r: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        self.cols[lo..hi].binary_search(&j).ok().map(|p| lo + p)
    }

    /// Vertices owning the rows, in row order (the complex's interior).
    pub fn row_vertices(&self) -> &[usize] {
        &self.rows
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Columns and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.cols[range.clone()], &self.vals[range])
    }

    /// Entry for vertices `(i, j)`; zero outside the pattern or for boundary `i`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row_of
            .get(i)
            .copied()
            .flatten()
            .and_then(|r| self.slot(r, j))
            .map_or(0.0, |p| self.vals[p])
    }

    pub fn row_index(&self, i: usize) -> Option<usize> {
        self.row_of.get(i).copied().flatten()
    }

    /// `max |J_ij - J_ji|` over interior pairs.
    pub fn max_interior_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for (r, &i) in self.rows.iter().enumerate() {
            let (cols, vals) = self.row(r);
            for (&j, &v) in cols.iter().zip(vals) {
                if self.row_of[j].is_some() {
                    worst = worst.max((v - self.get(j, i)).abs());
                }
            }
        }
        worst
    }

    /// `y = J_II x` with `x`, `y` indexed by row.
    pub fn interior_matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, out) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(r);
            *out = cols
                .iter()
                .zip(vals)
                .filter_map(|(&j, &v)| self.row_of[j].map(|c| v * x[c]))
                .sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.rows.iter().map(|&i| self.get(i, i)).collect()
    }

    pub fn to_json(&self, complex: &Complex) -> String {
        #[derive(Serialize)]
        struct Row {
            vertex: u64,
            columns: Vec<u64>,
            values: Vec<f64>,
        }
        let rows: Vec<Row> = (0..self.row_count())
            .map(|r| {
                let (cols, vals) = self.row(r);
                Row {
                    vertex: complex.vertex_id(self.rows[r]),
                    columns: cols.iter().map(|&j| complex.vertex_id(j)).collect(),
                    values: vals.to_vec(),
                }
            })
            .collect();
        serde_json::to_string_pretty(&serde_json::json!({ "rows": rows })).expect("rows serialize")
    }
}

/// Totals and Jacobian of one state. Immutable once assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureField {
    pub s: Vec<f64>,
    pub k: Vec<f64>,
    pub totals: Vec<f64>,
    pub jacobian: SparseJacobian,
    dual_curvatures: Vec<f64>,
}

impl CurvatureField {
    pub fn total(&self, v: usize) -> f64 {
        self.totals[v]
    }

    pub fn dual_curvature(&self, face: usize) -> f64 {
        self.dual_curvatures[face]
    }

    pub fn interior(&self) -> &[usize] {
        self.jacobian.row_vertices()
    }
}

pub fn assemble(complex: &Complex, s: &[f64]) -> Result<CurvatureField, FieldError> {
    check_state(complex, s)?;
    let k: Vec<f64> = s.iter().map(|x| x.exp()).collect();
    let solutions = solve_faces(complex, &k)?;
    let blocks: Vec<FaceJacobian> = solutions.par_iter().with_min_len(16).map(face_jacobian_with).collect();
    let totals = reduce_totals(complex, &solutions);

    let mut jacobian = SparseJacobian::pattern(complex);
    for (face, block) in complex.faces().iter().zip(&blocks) {
        for (a, &i) in face.iter().enumerate() {
            let Some(r) = jacobian.row_of[i] else { continue };
            for (b, &j) in face.iter().enumerate() {
                let p = jacobian.slot(r, j).expect("face vertices are neighbours");
                jacobian.vals[p] += block.get(a, b);
            }
        }
    }
    Ok(CurvatureField {
        s: s.to_vec(),
        k,
        totals,
        jacobian,
        dual_curvatures: solutions.iter().map(|sol| sol.dual.curvature).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualNorms {
    /// `sup_i |T_i - T̂_i|` over interior vertices.
    pub sup: f64,
    /// `T_i - T̂_i` in interior order.
    pub residuals: Vec<f64>,
}

pub fn residual_norms(field: &CurvatureField, that: &PrescribedCurvature) -> ResidualNorms {
    interior_residuals(field.interior(), &field.totals, that)
}

/// Residuals from a bare totals vector.
pub fn interior_residuals(interior: &[usize], totals: &[f64], that: &PrescribedCurvature) -> ResidualNorms {
    let residuals: Vec<f64> = interior.iter().map(|&i| totals[i] - that.get(i)).collect();
    let sup = residuals.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    ResidualNorms { sup, residuals }
}

/// `sum_{j ~ i} |∂T_i/∂s_j| / T_i` for every interior vertex, in interior order.
pub fn jacobian_row_diagnostic(field: &CurvatureField) -> Vec<f64> {
    let j = &field.jacobian;
    (0..j.row_count())
        .map(|r| {
            let i = j.row_vertices()[r];
            let (cols, vals) = j.row(r);
            let off: f64 = cols
                .iter()
                .zip(vals)
                .filter(|(&c, _)| c != i)
                .map(|(_, v)| v.abs())
                .sum();
            off / field.totals[i]
        })
        .collect()
}

/// CSV of `vertex_id,k,s,T,T_hat,residual` over interior vertices, numbers
/// written with 17 significant digits.
pub fn field_csv(complex: &Complex, field: &CurvatureField, that: &PrescribedCurvature) -> String {
    let mut out = String::from("vertex_id,k,s,T,T_hat,residual\n");
    for &i in field.interior() {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            complex.vertex_id(i),
            field.k[i],
            field.s[i],
            field.totals[i],
            that.get(i),
            field.totals[i] - that.get(i)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellcomplex::{generate_tiling, TilingKind};
    use crate::facepacking::total_curvature_face;

    #[test]
    fn horocycle_tilings() {
        let tri = generate_tiling(TilingKind::Triangular, 3).unwrap();
        let t = vertex_totals(&tri, &vec![0.0; tri.vertex_count()]).unwrap();
        for &i in tri.interior() {
            assert!((t[i] - 6.0).abs() < 1e-12);
        }
        let sq = generate_tiling(TilingKind::Square, 3).unwrap();
        let t = vertex_totals(&sq, &vec![0.0; sq.vertex_count()]).unwrap();
        for &i in sq.interior() {
            assert!((t[i] - 4.0 * 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_faces_share_vertices() {
        let c = Complex::new(
            vec![10, 11, 12, 13],
            vec![vec![0, 1, 2], vec![0, 2, 3]],
            vec![true; 4],
            0,
        )
        .unwrap();
        let s = [0.3, -0.7, 1.1, -0.2];
        let t = vertex_totals(&c, &s).unwrap();
        let k: Vec<f64> = s.iter().map(|x: &f64| x.exp()).collect();
        let a = total_curvature_face(&[k[0], k[1], k[2]], None).unwrap();
        let b = total_curvature_face(&[k[0], k[2], k[3]], None).unwrap();
        assert_eq!(t[0], a.arcs[0].total_curvature + b.arcs[0].total_curvature);
        assert_eq!(t[2], a.arcs[2].total_curvature + b.arcs[1].total_curvature);
    }

    #[test]
    fn residual_examples() {
        let tri = generate_tiling(TilingKind::Triangular, 2).unwrap();
        let s = vec![0.0; tri.vertex_count()];
        let field = assemble(&tri, &s).unwrap();
        let that = PrescribedCurvature::new(&tri, field.totals.iter().map(|t| t.max(1e-3)).collect()).unwrap();
        assert_eq!(residual_norms(&field, &that).sup, 0.0);
        let that = PrescribedCurvature::from_rule(&tri, &CurvatureRule::DegreeTimes(1.0)).unwrap();
        let shifted: Vec<f64> = that.values().iter().map(|x| x - 1.0).collect();
        let that = PrescribedCurvature::new(&tri, shifted.iter().map(|x| x.max(0.5)).collect()).unwrap();
        assert!((residual_norms(&field, &that).sup - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_rows_agree() {
        let tri = generate_tiling(TilingKind::Triangular, 3).unwrap();
        let field = assemble(&tri, &vec![0.0; tri.vertex_count()]).unwrap();
        let d = jacobian_row_diagnostic(&field);
        // vertices whose whole neighbourhood is interior see the same stencil
        let deep: Vec<f64> = field
            .interior()
            .iter()
            .zip(&d)
            .filter(|(&i, _)| tri.neighbors(i).iter().all(|&j| !tri.is_boundary(j)))
            .map(|(_, &x)| x)
            .collect();
        assert!(!deep.is_empty());
        for x in &deep {
            assert!(x.is_finite() && (x - deep[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn rules_parse() {
        assert_eq!("deg".parse::<CurvatureRule>().unwrap(), CurvatureRule::Degree);
        assert_eq!("deg*0.5".parse::<CurvatureRule>().unwrap(), CurvatureRule::DegreeTimes(0.5));
        assert_eq!("4".parse::<CurvatureRule>().unwrap(), CurvatureRule::Constant(4.0));
        assert!("fancy".parse::<CurvatureRule>().is_err());
        let sq = generate_tiling(TilingKind::Square, 1).unwrap();
        assert!(PrescribedCurvature::uniform(&sq, 0.0).is_err());
        assert!(matches!(
            PrescribedCurvature::from_rule(&sq, &CurvatureRule::PerVertex(BTreeMap::new())),
            Err(FieldError::MissingVertex(0))
        ));
    }

    #[test]
    fn jacobian_structure_and_determinism() {
        let sq = generate_tiling(TilingKind::Square, 4).unwrap();
        let s: Vec<f64> = (0..sq.vertex_count()).map(|v| ((v * 37 % 11) as f64 - 5.0) * 0.3).collect();
        let a = assemble(&sq, &s).unwrap();
        let b = assemble(&sq, &s).unwrap();
        assert_eq!(a, b);
        assert!(a.jacobian.max_interior_asymmetry() < 1e-8);
        for r in 0..a.jacobian.row_count() {
            let i = a.jacobian.row_vertices()[r];
            let (cols, vals) = a.jacobian.row(r);
            let mut sum = 0.0;
            for (&j, &v) in cols.iter().zip(vals) {
                if j == i {
                    assert!(v > 0.0);
                } else {
                    assert!(v < 0.0);
                }
                sum += v;
            }
            assert!(sum > 0.0);
        }
    }
}
