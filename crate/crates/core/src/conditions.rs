//! Decidable checks of the hypotheses behind the convergence results, and of
//! the simple-decomposition criterion.
//!
//! Statements quantified over every finite vertex set are only checked on
//! the sets a [`WSource`] produces; generated sources yield
//! [`Verdict::TrueUpToCap`] rather than an unconditional `True`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::f64::consts::PI;

use serde::Serialize;
use thiserror::Error;

use crate::cellcomplex::{BallSequence, Complex, ComplexError, FaceEnumeration, PrefixSequence};
use crate::curvaturefield::{vertex_totals, FieldError, PrescribedCurvature};

#[derive(Debug, Error)]
pub enum ConditionError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error("vertex set exceeds the explored region: {0}")]
    Exploration(String),
    #[error("no prescribed value for vertex {0}")]
    MissingValue(u64),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TheoremTag {
    I,
    II,
    Simple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    True,
    /// Holds on every set the generator produced, which is not every set.
    TrueUpToCap,
    False,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Witness {
    Vertex(u64),
    Set(Vec<u64>),
    Note(String),
}

/// One checked inequality `lhs < rhs` (or `lhs >= rhs` for the first check).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Margin {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub theorem: TheoremTag,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
    pub margins: Vec<Margin>,
}

impl ConditionReport {
    fn new(theorem: TheoremTag, margins: Vec<Margin>, witness: Option<Witness>, capped: bool) -> Self {
        let verdict = match (&witness, capped) {
            (Some(_), _) => Verdict::False,
            (None, true) => Verdict::TrueUpToCap,
            (None, false) => Verdict::True,
        };
        ConditionReport { theorem, verdict, witness, margins }
    }

    pub fn holds(&self) -> bool {
        self.verdict != Verdict::False
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `T_i(s0) >= T̂_i` at every interior vertex; the witness is the first
/// interior vertex where it fails.
pub fn check_theorem_i(
    complex: &Complex,
    s0: &[f64],
    that: &PrescribedCurvature,
) -> Result<ConditionReport, ConditionError> {
    let totals = vertex_totals(complex, s0)?;
    let mut witness = None;
    let mut margins = Vec::with_capacity(complex.interior().len());
    for &i in complex.interior() {
        let id = complex.vertex_id(i);
        if witness.is_none() && totals[i] < that.get(i) {
            witness = Some(Witness::Vertex(id));
        }
        margins.push(Margin { label: format!("vertex {id}"), lhs: totals[i], rhs: that.get(i) });
    }
    Ok(ConditionReport::new(TheoremTag::I, margins, witness, false))
}

/// `N(P, W)`: vertices of the face lying in `W`.
pub fn face_count_in(face: &[u64], w: &BTreeSet<u64>) -> usize {
    face.iter().filter(|v| w.contains(v)).count()
}

/// `π min{N(P, W), N(P) - 2}`.
pub fn face_capacity(face: &[u64], w: &BTreeSet<u64>) -> f64 {
    PI * face_count_in(face, w).min(face.len() - 2) as f64
}

/// Which faces the upper bound sums over, for a set first covered at `H_{n_W}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum FaceRange {
    /// `m = 0..=a_{n_W}`: every face whose vertices build `H_{n_W}`.
    #[default]
    Conservative,
    /// `m = 1..=n_W`, the index range read literally.
    Literal,
}

/// Vertex sets to test.
#[derive(Debug, Clone, PartialEq)]
pub enum WSource {
    Explicit(Vec<BTreeSet<u64>>),
    /// Every connected set (in the face-sharing graph) of at most `max_size`
    /// vertices inside `region`, stopping after `max_sets`.
    ConnectedSubsets { region: BTreeSet<u64>, max_size: usize, max_sets: usize },
    /// Combinatorial balls of radius `1..=max_radius` around each centre.
    SubBalls { centers: Vec<u64>, max_radius: usize },
}

impl WSource {
    pub fn is_generated(&self) -> bool {
        !matches!(self, WSource::Explicit(_))
    }

    /// Materializes the sets; `neighbors` gives face-sharing adjacency.
    pub fn sets(&self, neighbors: impl Fn(u64) -> Vec<u64>) -> Vec<BTreeSet<u64>> {
        match self {
            WSource::Explicit(ws) => ws.clone(),
            WSource::ConnectedSubsets { region, max_size, max_sets } => {
                connected_subsets(region, *max_size, *max_sets, &neighbors)
            }
            WSource::SubBalls { centers, max_radius } => {
                let mut out = Vec::new();
                for &c in centers {
                    let mut dist = BTreeMap::from([(c, 0usize)]);
                    let mut queue = VecDeque::from([c]);
                    while let Some(v) = queue.pop_front() {
                        let d = dist[&v];
                        if d == *max_radius {
                            continue;
                        }
                        for w in neighbors(v) {
                            if let std::collections::btree_map::Entry::Vacant(e) = dist.entry(w) {
                                e.insert(d + 1);
                                queue.push_back(w);
                            }
                        }
                    }
                    for r in 1..=*max_radius {
                        out.push(dist.iter().filter(|(_, &d)| d <= r).map(|(&v, _)| v).collect());
                    }
                }
                out
            }
        }
    }
}

/// Connected induced subsets containing their smallest element as the seed,
/// grown only through larger vertices so each set appears once.
fn connected_subsets(
    region: &BTreeSet<u64>,
    max_size: usize,
    max_sets: usize,
    neighbors: &impl Fn(u64) -> Vec<u64>,
) -> Vec<BTreeSet<u64>> {
    fn grow(
        current: &mut Vec<u64>,
        extension: Vec<u64>,
        seed: u64,
        region: &BTreeSet<u64>,
        max_size: usize,
        max_sets: usize,
        neighbors: &dyn Fn(u64) -> Vec<u64>,
        out: &mut Vec<BTreeSet<u64>>,
    ) {
        out.push(current.iter().copied().collect());
        if current.len() == max_size {
            return;
        }
        let mut ext = extension;
        while let Some(w) = ext.pop() {
            if out.len() >= max_sets {
                return;
            }
            // exclusive neighbours of w: not in the current set or its neighbourhood
            let mut closed: BTreeSet<u64> = current.iter().copied().collect();
            for &v in current.iter() {
                closed.extend(neighbors(v));
            }
            let mut next = ext.clone();
            for u in neighbors(w) {
                if u > seed && region.contains(&u) && !closed.contains(&u) && !next.contains(&u) {
                    next.push(u);
                }
            }
            current.push(w);
            grow(current, next, seed, region, max_size, max_sets, neighbors, out);
            current.pop();
        }
    }

    let mut out = Vec::new();
    for &seed in region {
        if out.len() >= max_sets || max_size == 0 {
            break;
        }
        let ext: Vec<u64> = neighbors(seed).into_iter().filter(|&u| u > seed && region.contains(&u)).collect();
        grow(&mut vec![seed], ext, seed, region, max_size, max_sets, neighbors, &mut out);
    }
    out.truncate(max_sets);
    out
}

fn lhs_of(w: &BTreeSet<u64>, that: &dyn Fn(u64) -> Option<f64>) -> Result<f64, ConditionError> {
    w.iter()
        .map(|&v| that(v).ok_or(ConditionError::MissingValue(v)))
        .sum()
}

fn describe(w: &BTreeSet<u64>) -> String {
    let ids: Vec<String> = w.iter().map(|v| v.to_string()).collect();
    format!("W = {{{}}}", ids.join(","))
}

/// `sum_{w in W} T̂_w < sum_m π min{N(P_m, W), N(P_m) - 2}` for every `W`,
/// with the face range chosen by `range`. `that` maps vertex ids to `T̂`.
pub fn check_theorem_ii(
    enumeration: &FaceEnumeration,
    a: &PrefixSequence,
    that: &dyn Fn(u64) -> Option<f64>,
    source: &WSource,
    neighbors: impl Fn(u64) -> Vec<u64>,
    range: FaceRange,
) -> Result<ConditionReport, ConditionError> {
    let sets = source.sets(neighbors);
    let mut margins = Vec::with_capacity(sets.len());
    let mut witness = None;
    for w in &sets {
        let n_w = enumeration
            .n_w(a, w)
            .map_err(|_| ConditionError::Exploration(describe(w)))?;
        let faces = match range {
            FaceRange::Conservative => 0..=a.get(n_w)?,
            FaceRange::Literal => 1..=n_w,
        };
        if *faces.end() >= enumeration.len() {
            return Err(ConditionError::Exploration(describe(w)));
        }
        let rhs: f64 = faces.map(|m| face_capacity(enumeration.face(m), w)).sum();
        let lhs = lhs_of(w, that)?;
        if witness.is_none() && lhs >= rhs {
            witness = Some(Witness::Set(w.iter().copied().collect()));
        }
        margins.push(Margin { label: describe(w), lhs, rhs });
    }
    Ok(ConditionReport::new(TheoremTag::II, margins, witness, source.is_generated()))
}

/// Structural summary behind the simple-decomposition verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthFit {
    pub ball_sizes: Vec<usize>,
    /// Least-squares `|B_n| ≈ C n^k` over `n >= 1`.
    pub exponent: f64,
    pub constant: f64,
    /// Residual sums of squares of `ln |B_n|` against `ln n` and against `n`,
    /// over the outer half of the radii.
    pub power_law_residual: f64,
    pub exponential_residual: f64,
}

impl GrowthFit {
    /// Growth looks polynomial when a power law explains the outer radii at
    /// least as well as an exponential does.
    pub fn is_polynomial(&self) -> bool {
        self.power_law_residual <= self.exponential_residual
    }
}

/// Least squares `y ≈ a + b x`; returns `(b, a, residual sum of squares)`.
fn line_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let m = pts.len() as f64;
    let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss = pts.iter().map(|(x, y)| (y - a - b * x).powi(2)).sum();
    (b, a, rss)
}

fn fit_growth(sizes: &[usize]) -> GrowthFit {
    let logs: Vec<(f64, f64)> = sizes
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, &b)| (n as f64, (b as f64).ln()))
        .collect();
    let loglog: Vec<(f64, f64)> = logs.iter().map(|&(n, y)| (n.ln(), y)).collect();
    let (exponent, intercept, _) = line_fit(&loglog);
    let outer = logs.len() / 2;
    let (_, _, power_law_residual) = line_fit(&loglog[outer..]);
    let (_, _, exponential_residual) = line_fit(&logs[outer..]);
    GrowthFit {
        ball_sizes: sizes.to_vec(),
        exponent,
        constant: intercept.exp(),
        power_law_residual,
        exponential_residual,
    }
}

/// Checks ball recurrence `B_{n+1} = B_n ∪ ∂B_{n+1}`, bounded vertex and face
/// degrees, and polynomial growth of `|B_n|`, on the explored region.
pub fn check_simple_decomposition(
    balls: &BallSequence,
    depth: usize,
) -> Result<(ConditionReport, GrowthFit), ConditionError> {
    if depth < 4 {
        return Err(ComplexError::InsufficientDepth { needed: 4, explored: depth }.into());
    }
    if balls.depth() < depth + 1 {
        return Err(ComplexError::InsufficientDepth { needed: depth + 1, explored: balls.depth() }.into());
    }
    let mut witness = None;
    for n in 0..depth {
        let boundary: BTreeSet<u64> = balls.ball_boundary(n + 1)?.into_iter().collect();
        let fresh = balls.ball(n + 1).skip(balls.ball_size(n));
        if let Some(v) = fresh.into_iter().find(|v| !boundary.contains(v)) {
            witness = Some(Witness::Vertex(v));
            break;
        }
    }
    let provider = balls.provider();
    let explored = balls.ball(depth);
    let sup_deg = explored
        .clone()
        .map(|v| provider.faces_at(balls.site_of(v).expect("explored")).len())
        .max()
        .unwrap_or(0);
    let enumeration = balls.enumeration();
    let sup_face = enumeration.faces().iter().map(Vec::len).max().unwrap_or(0);
    let sizes: Vec<usize> = (0..=depth).map(|n| balls.ball_size(n)).collect();
    let fit = fit_growth(&sizes);
    if witness.is_none() && !fit.is_polynomial() {
        witness = Some(Witness::Note(format!(
            "ball growth fits an exponential better (residuals {:.3e} vs {:.3e})",
            fit.power_law_residual, fit.exponential_residual
        )));
    }
    let margins = vec![
        Margin { label: "sup vertex degree".into(), lhs: sup_deg as f64, rhs: f64::INFINITY },
        Margin { label: "sup face size".into(), lhs: sup_face as f64, rhs: f64::INFINITY },
        Margin { label: "growth exponent".into(), lhs: fit.exponent, rhs: f64::INFINITY },
    ];
    // bounds and the fit only speak for the explored depth
    Ok((ConditionReport::new(TheoremTag::Simple, margins, witness, true), fit))
}

/// `sum_{w in W} T̂_w < (1 - δ / n_W^{1-ε}) sum_P π min{N(P, W), N(P) - 2}`
/// over all faces meeting `W`, with `n_W` the first ball radius covering `W`
/// (at least 1).
pub fn check_theorem_simple(
    balls: &BallSequence,
    that: &dyn Fn(u64) -> Option<f64>,
    eps: f64,
    delta: f64,
    source: &WSource,
) -> Result<ConditionReport, ConditionError> {
    if !(eps > 0.0 && delta > 0.0 && eps.is_finite() && delta.is_finite()) {
        return Err(ConditionError::InvalidParameters("ε and δ must be positive".into()));
    }
    let provider = balls.provider();
    let sets = source.sets(|v| balls.neighbors(v));
    let mut margins = Vec::with_capacity(sets.len());
    let mut witness = None;
    for w in &sets {
        let mut n_w = 0;
        for &v in w {
            let layer = balls
                .layer_of(v)
                .filter(|&l| l < balls.depth())
                .ok_or_else(|| ConditionError::Exploration(describe(w)))?;
            n_w = n_w.max(layer);
        }
        let n_w = n_w.max(1);
        let mut faces = BTreeSet::new();
        for &v in w {
            faces.extend(provider.faces_at(balls.site_of(v).expect("explored")));
        }
        let sum: f64 = faces
            .iter()
            .map(|&f| {
                let ids: Vec<u64> = provider
                    .face_vertices(f)
                    .iter()
                    .map(|s| balls.id_of(*s).expect("explored"))
                    .collect();
                face_capacity(&ids, w)
            })
            .sum();
        let rhs = (1.0 - delta / (n_w as f64).powf(1.0 - eps)) * sum;
        let lhs = lhs_of(w, that)?;
        if witness.is_none() && lhs >= rhs {
            witness = Some(Witness::Set(w.iter().copied().collect()));
        }
        margins.push(Margin { label: describe(w), lhs, rhs });
    }
    Ok(ConditionReport::new(TheoremTag::Simple, margins, witness, source.is_generated()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellcomplex::TilingKind;

    #[test]
    fn capacity_respects_bounds() {
        let face = [1, 2, 3, 4];
        let w = BTreeSet::from([1, 2, 3, 9]);
        assert_eq!(face_count_in(&face, &w), 3);
        assert_eq!(face_capacity(&face, &w), 2.0 * PI);
    }

    #[test]
    fn connected_subsets_of_a_path() {
        // path 1-2-3: {1},{1,2},{1,2,3},{2},{2,3},{3}
        let nb = |v: u64| -> Vec<u64> {
            match v {
                1 => vec![2],
                2 => vec![1, 3],
                3 => vec![2],
                _ => vec![],
            }
        };
        let region = BTreeSet::from([1, 2, 3]);
        let sets = connected_subsets(&region, 3, 100, &nb);
        assert_eq!(sets.len(), 6);
        let unique: BTreeSet<Vec<u64>> = sets.iter().map(|s| s.iter().copied().collect()).collect();
        assert_eq!(unique.len(), 6);
        assert_eq!(connected_subsets(&region, 2, 100, &nb).len(), 5);
    }

    #[test]
    fn square_grid_is_simple() {
        let balls = BallSequence::of_kind(TilingKind::Square, 9);
        let (report, fit) = check_simple_decomposition(&balls, 8).unwrap();
        assert!(report.holds(), "{report:?} {fit:?}");
        assert_eq!(report.margins[0].lhs, 4.0);
        assert_eq!(report.margins[1].lhs, 4.0);
        assert!(fit.is_polynomial());
        assert!(fit.exponent > 1.5 && fit.exponent < 2.0);
    }

    #[test]
    fn exponential_growth_detected() {
        let sizes: Vec<usize> = (0..10).map(|n| 3usize.pow(n)).collect();
        assert!(!fit_growth(&sizes).is_polynomial());
        let cubic: Vec<usize> = (0..10).map(|n| (n + 1usize).pow(3)).collect();
        assert!(fit_growth(&cubic).is_polynomial());
    }

    #[test]
    fn sub_balls_grow() {
        let balls = BallSequence::of_kind(TilingKind::Square, 4);
        let src = WSource::SubBalls { centers: vec![0], max_radius: 2 };
        let sets = src.sets(|v| balls.neighbors(v));
        assert_eq!(sets[0].len(), 9);
        assert_eq!(sets[1].len(), 25);
    }
}
