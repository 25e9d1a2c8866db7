//! Single-polygon geometry of a generalized circle packing.
//!
//! A face with `n >= 3` vertices carries generalized circles of geodesic
//! curvature `k_i`. Consecutive circles are tangent and a dual hyperbolic
//! circle of curvature `k_P > 1` passes orthogonally through all tangency
//! points. Seen from the dual centre, the arc cut by `C_i` subtends
//!
//! ```text
//! beta_i = 2 atan( sqrt(k_P^2 - 1) / k_i )
//! ```
//!
//! and the dual circle closes up exactly when `sum beta_i = 2 pi`.
//!
//! Internally the dual circle is parametrized by `q = sqrt(k_P^2 - 1)` so the
//! nearly-horocyclic dual (`k_P -> 1+`) keeps full relative precision.

use std::f64::consts::PI;

use thiserror::Error;
/// `|k - 1|` below this is classified as a horocycle.
/// `|k - 1|` below this is treated as an exact horocycle.
pub const HOROCYCLE_TOL: f64 = 1e-9;
/// `|k - 1|` below this evaluates `T` by its short series.
pub const SERIES_BAND: f64 = 1e-6;

const MAX_ROOT_ITERATIONS: usize = 200;
const ROOT_REL_TOL: f64 = 1e-12;
// |z| where the closed-form shape derivative starts losing digits.
const SHAPE_SERIES_RADIUS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FaceError {
    #[error("curvature at position {index} must be finite and positive, got {value}")]
    InvalidCurvature { index: usize, value: f64 },
    #[error("a face needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("dual curvature solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// Type of a generalized circle, read off its geodesic curvature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `0 < k < 1`, equidistant curve from a geodesic axis.
    Hypercycle,
    /// `k = 1`.
    Horocycle,
    /// `k > 1`, ordinary hyperbolic circle.
    Circle,
}

impl Regime {
    pub fn of(k: f64) -> Regime {
        if (k - 1.0).abs() < HOROCYCLE_TOL {
            Regime::Horocycle
        } else if k < 1.0 {
            Regime::Hypercycle
        } else {
            Regime::Circle
        }
    }
}

/// A positive geodesic curvature `k`, with log-coordinate `s = ln k`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct GeodesicCurvature(f64);

impl GeodesicCurvature {
    pub fn new(k: f64) -> Result<Self, FaceError> {
        check_curvature(0, k)?;
        Ok(GeodesicCurvature(k))
    }

    pub fn from_log(s: f64) -> Result<Self, FaceError> {
        Self::new(s.exp())
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn log(self) -> f64 {
        self.0.ln()
    }

    pub fn regime(self) -> Regime {
        Regime::of(self.0)
    }

    pub fn radius(self) -> f64 {
        radius_from_valid(self.0)
    }
}

fn check_curvature(index: usize, value: f64) -> Result<(), FaceError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(FaceError::InvalidCurvature { index, value })
    }
}

fn check_face(k: &[f64]) -> Result<(), FaceError> {
    if k.len() < 3 {
        return Err(FaceError::TooFewVertices(k.len()));
    }
    k.iter()
        .enumerate()
        .try_for_each(|(i, &v)| check_curvature(i, v))
}

/// Hyperbolic radius of a generalized circle; `+inf` for a horocycle.
///
/// For a hypercycle this is the distance to its axis.
pub fn radius_of_curvature(k: f64) -> Result<f64, FaceError> {
    check_curvature(0, k)?;
    Ok(radius_from_valid(k))
}

fn radius_from_valid(k: f64) -> f64 {
    match Regime::of(k) {
        Regime::Horocycle => f64::INFINITY,
        Regime::Hypercycle => k.atanh(),
        Regime::Circle => (1.0 / k).atanh(),
    }
}

/// The dual circle `C_P` of a face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualCircle {
    /// Geodesic curvature `k_P > 1`.
    pub curvature: f64,
    /// `sqrt(k_P^2 - 1)`, which equals `1 / sinh R` for the dual radius `R`.
    pub q: f64,
}

impl DualCircle {
    pub fn from_q(q: f64) -> Self {
        DualCircle {
            curvature: q.hypot(1.0),
            q,
        }
    }

    pub fn from_curvature(k_p: f64) -> Self {
        DualCircle {
            curvature: k_p,
            q: ((k_p - 1.0) * (k_p + 1.0)).sqrt(),
        }
    }

    /// Hyperbolic radius `arccoth k_P`.
    pub fn radius(&self) -> f64 {
        (1.0 / self.curvature).atanh()
    }
}

/// Angle at the dual centre subtended by the arc of a circle with curvature `k`.
pub fn dual_angle(k: f64, dual: &DualCircle) -> f64 {
    2.0 * (dual.q / k).atan()
}

/// `sum_i 2 atan(q / k_i) - 2 pi`; zero exactly at the dual circle of the face.
pub fn closure_residual(k: &[f64], dual: &DualCircle) -> f64 {
    k.iter().map(|&ki| dual_angle(ki, dual)).sum::<f64>() - 2.0 * PI
}

/// Solves the closure equation for the dual circle of a face.
///
/// The residual is strictly increasing in `q`, and is bracketed by
/// `q in [k_min tan(pi/n), k_max tan(pi/n)]`. Newton steps from the left end
/// are kept inside the bracket, with a geometric bisection fallback.
pub fn solve_dual_curvature(k: &[f64]) -> Result<DualCircle, FaceError> {
    check_face(k)?;
    let n = k.len();
    let t = (PI / n as f64).tan();
    let (k_min, k_max) = k
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let mut lo = k_min * t;
    let mut hi = k_max * t;
    if hi <= lo {
        return Ok(DualCircle::from_q(lo));
    }

    let residual = |q: f64| -> (f64, f64) {
        let mut g = -2.0 * PI;
        let mut dg = 0.0;
        for &ki in k {
            g += 2.0 * (q / ki).atan();
            dg += 2.0 * ki / (ki * ki + q * q);
        }
        (g, dg)
    };

    let mut q = lo;
    for _ in 0..MAX_ROOT_ITERATIONS {
        let (g, dg) = residual(q);
        if g == 0.0 {
            return Ok(DualCircle::from_q(q));
        }
        if g < 0.0 {
            lo = lo.max(q);
        } else {
            hi = hi.min(q);
        }
        let mut next = q - g / dg;
        if !(next > lo && next < hi) {
            next = (lo * hi).sqrt();
        }
        if (next - q).abs() <= ROOT_REL_TOL * q {
            return Ok(DualCircle::from_q(next));
        }
        q = next;
    }
    let dual = DualCircle::from_q(q);
    Err(FaceError::NoConvergence {
        iterations: MAX_ROOT_ITERATIONS,
        residual: closure_residual(k, &dual),
    })
}

/// Central angle of the arc of `C_i` inside the dual disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CentralAngle {
    /// Angle in radians at the hyperbolic centre.
    Circle(f64),
    /// Length of the projection of the arc onto the hypercycle's axis.
    Hypercycle(f64),
    /// Not defined for horocycles.
    Horocycle,
}

impl CentralAngle {
    pub fn value(&self) -> Option<f64> {
        match *self {
            CentralAngle::Circle(a) | CentralAngle::Hypercycle(a) => Some(a),
            CentralAngle::Horocycle => None,
        }
    }
}

/// `2 arccot(k_P / sqrt(k^2-1))` for circles, `2 arccoth(k_P / sqrt(1-k^2))` for
/// hypercycles.
pub fn central_angle(k: f64, k_p: f64) -> CentralAngle {
    central_angle_with(k, &DualCircle::from_curvature(k_p))
}

fn central_angle_with(k: f64, dual: &DualCircle) -> CentralAngle {
    let kp = dual.curvature;
    match Regime::of(k) {
        Regime::Horocycle => CentralAngle::Horocycle,
        Regime::Circle => {
            let w = ((k - 1.0) * (k + 1.0)).sqrt();
            CentralAngle::Circle(2.0 * (w / kp).atan())
        }
        Regime::Hypercycle => {
            let w = ((1.0 - k) * (1.0 + k)).sqrt();
            CentralAngle::Hypercycle(2.0 * (w / kp).atanh())
        }
    }
}

/// Per-vertex quantities of a solved face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VertexArc {
    pub curvature: f64,
    pub regime: Regime,
    pub central_angle: CentralAngle,
    /// Total geodesic curvature `T_{i,P}` of the arc inside the dual disk.
    pub total_curvature: f64,
    /// Hyperbolic length `l_{i,P} = T_{i,P} / k_i`.
    pub arc_length: f64,
    /// Angle at the dual centre between the arc's two tangency points.
    pub dual_angle: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FacePackingSolution {
    pub dual: DualCircle,
    pub arcs: Vec<VertexArc>,
}

impl FacePackingSolution {
    pub fn dual_curvature(&self) -> f64 {
        self.dual.curvature
    }

    pub fn totals(&self) -> impl Iterator<Item = f64> + '_ {
        self.arcs.iter().map(|a| a.total_curvature)
    }
}

/// Total geodesic curvature of one arc given its curvature and the dual circle.
pub fn arc_total_curvature(k: f64, dual: &DualCircle) -> f64 {
    let kp = dual.curvature;
    let dev = k - 1.0;
    // the series also covers exact horocycles, where it reduces to 2 / k_P
    if dev.abs() < SERIES_BAND {
        let u = dev * (k + 1.0);
        let z = -u / (kp * kp);
        return 2.0 * k / kp * (1.0 + z / 3.0 + z * z / 5.0);
    }
    match central_angle_with(k, dual) {
        CentralAngle::Circle(alpha) => alpha * k / (dev * (k + 1.0)).sqrt(),
        CentralAngle::Hypercycle(alpha) => alpha * k / (-dev * (k + 1.0)).sqrt(),
        CentralAngle::Horocycle => 2.0 / kp,
    }
}

/// Solves the face and evaluates every per-vertex quantity.
///
/// A precomputed dual circle is trusted as given.
pub fn total_curvature_face(
    k: &[f64],
    dual: Option<DualCircle>,
) -> Result<FacePackingSolution, FaceError> {
    check_face(k)?;
    let dual = match dual {
        Some(d) => d,
        None => solve_dual_curvature(k)?,
    };
    let arcs = k
        .iter()
        .map(|&ki| {
            let total = arc_total_curvature(ki, &dual);
            VertexArc {
                curvature: ki,
                regime: Regime::of(ki),
                central_angle: central_angle_with(ki, &dual),
                total_curvature: total,
                arc_length: total / ki,
                dual_angle: dual_angle(ki, &dual),
            }
        })
        .collect();
    Ok(FacePackingSolution { dual, arcs })
}

/// `T = 2 k f(u, k_P)` with `u = k^2 - 1`; returns `(f, df/du)`.
///
/// `f = atan(sqrt(u)/k_P)/sqrt(u)` for `u > 0` and the `atanh` continuation
/// for `u < 0`. Both equal `(1/k_P) sum_n z^n / (2n+1)` with `z = -u/k_P^2`.
fn arc_shape(k: f64, kp: f64) -> (f64, f64) {
    let u = (k - 1.0) * (k + 1.0);
    let z = -u / (kp * kp);
    if z.abs() < SHAPE_SERIES_RADIUS {
        let mut f = 0.0;
        let mut df = 0.0;
        let mut zn = 1.0;
        for n in 0..40 {
            let nf = n as f64;
            f += zn / (2.0 * nf + 1.0);
            // d/dz of z^(n+1)/(2n+3)
            df += (nf + 1.0) * zn / (2.0 * nf + 3.0);
            zn *= z;
            if zn.abs() < 1e-18 {
                break;
            }
        }
        (f / kp, -df / (kp * kp * kp))
    } else {
        let f = if u > 0.0 {
            let w = u.sqrt();
            (w / kp).atan() / w
        } else {
            let w = (-u).sqrt();
            (w / kp).atanh() / w
        };
        let a = kp * kp + u;
        (f, (kp / (2.0 * a) - 0.5 * f) / u)
    }
}

/// Dense `n x n` matrix of `dT_{i,P} / ds_j` for one face, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceJacobian {
    pub n: usize,
    pub entries: Vec<f64>,
}

impl FaceJacobian {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).iter().sum()
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..self.n {
            for j in 0..i {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// Analytic Jacobian of the face totals with respect to `s = ln k`.
///
/// `T_i` depends on `k_i` and `k_P`; `dk_P/dk_j` comes from implicit
/// differentiation of the closure equation:
///
/// ```text
/// dk_P/dk_j = q^2 / (q^2 + k_j^2) / S,   S = sum_m k_P k_m / (q^2 + k_m^2)
/// dT_i/dk_P = -2 k_i / (q^2 + k_i^2)
/// ```
pub fn face_jacobian(k: &[f64]) -> Result<FaceJacobian, FaceError> {
    let solution = total_curvature_face(k, None)?;
    Ok(face_jacobian_with(&solution))
}

pub fn face_jacobian_with(solution: &FacePackingSolution) -> FaceJacobian {
    let n = solution.arcs.len();
    let kp = solution.dual.curvature;
    let q2 = solution.dual.q * solution.dual.q;
    let a: Vec<f64> = solution
        .arcs
        .iter()
        .map(|arc| q2 + arc.curvature * arc.curvature)
        .collect();
    let s_sum: f64 = solution
        .arcs
        .iter()
        .zip(&a)
        .map(|(arc, &ai)| kp * arc.curvature / ai)
        .sum();

    let mut entries = vec![0.0; n * n];
    for (i, arc) in solution.arcs.iter().enumerate() {
        let ki = arc.curvature;
        let dt_dkp = -2.0 * ki / a[i];
        for (j, other) in solution.arcs.iter().enumerate() {
            let kj = other.curvature;
            entries[i * n + j] = kj * dt_dkp * q2 / (a[j] * s_sum);
        }
        let (f, df) = arc_shape(ki, kp);
        entries[i * n + i] += ki * (2.0 * f + 4.0 * ki * ki * df);
    }
    FaceJacobian { n, entries }
}
