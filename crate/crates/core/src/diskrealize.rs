//! Explicit realization of one face in the Poincaré disk.
//!
//! The construction does not use the closure equation. Each `C_i` is the
//! unique Euclidean circle orthogonal to the dual circle `|z| = rho` whose
//! hyperbolic geodesic curvature is `k_i`; circles are then laid out around
//! the origin one after another so that consecutive ones are externally
//! tangent. Whether the last circle comes back tangent to the first is the
//! test of the dual curvature `k_P`.
//!
//! A Euclidean circle with centre `c` and radius `r` in the disk has geodesic
//! curvature `(1 - |c|^2 + r^2) / (2r)`. Orthogonality to `|z| = rho` means
//! `|c|^2 = rho^2 + r^2`, hence `r = (1 - rho^2) / (2k)`.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use thiserror::Error;

use crate::facepacking::{FaceError, Regime};

/// Residual bound for tangency, orthogonality and angle closure.
pub const GEOMETRY_TOL: f64 = 1e-8;
/// Absolute tolerance for the arc-length quadrature.
pub const QUADRATURE_TOL: f64 = 1e-9;
const MAX_SIMPSON_DEPTH: u32 = 48;

#[derive(Debug, Error)]
pub enum DiskError {
    #[error(transparent)]
    Face(#[from] FaceError),
    #[error("dual curvature must exceed 1, got {0}")]
    InvalidDual(f64),
    #[error("geometric inconsistency: {what} residual {residual:e} exceeds {GEOMETRY_TOL:e}")]
    Inconsistent { what: &'static str, residual: f64 },
    #[error("arc-length quadrature did not converge on circle {0}")]
    Quadrature(usize),
    #[error("configuration is empty or contains non-finite data")]
    InvalidConfiguration,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EuclidCircle {
    pub center: Complex64,
    pub radius: f64,
}

impl EuclidCircle {
    /// Hyperbolic geodesic curvature of this circle in the Poincaré metric.
    pub fn geodesic_curvature(&self) -> f64 {
        (1.0 - self.center.norm_sqr() + self.radius * self.radius) / (2.0 * self.radius)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RealizedCircle {
    pub curvature: f64,
    pub regime: Regime,
    pub circle: EuclidCircle,
    /// Ideal point of a horocycle.
    pub ideal_point: Option<Complex64>,
    /// Ideal endpoints of a hypercycle's axis.
    pub axis: Option<(Complex64, Complex64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// Worst `| |c_i - c_j| - (r_i + r_j) |` over consecutive pairs.
    pub tangency: f64,
    /// Worst `| |c_i|^2 - rho^2 - r_i^2 |`, together with the distance of
    /// tangency points from the dual circle.
    pub orthogonality: f64,
    /// `| sum beta_hat - 2 pi |`.
    pub angle_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiskConfiguration {
    pub dual_curvature: f64,
    /// Dual circle, centred at the origin.
    pub dual: EuclidCircle,
    pub circles: Vec<RealizedCircle>,
    /// `tangency[i]` is where `C_i` touches `C_{i+1}` (cyclically).
    pub tangency: Vec<Complex64>,
    /// Measured angle at the origin between the two tangency points of `C_i`.
    pub dual_angles: Vec<f64>,
    pub residuals: Residuals,
}

/// Half-angle form of the law of cosines: angle opposite side `a`.
fn opposite_angle(a: f64, b: f64, c: f64) -> f64 {
    let s = 0.5 * (a + b + c);
    let num = ((s - b) * (s - c)).max(0.0);
    let den = (s * (s - a)).max(0.0);
    2.0 * num.sqrt().atan2(den.sqrt())
}

fn unit_circle_intersections(c: &EuclidCircle) -> Option<(Complex64, Complex64)> {
    let d = c.center.norm();
    if d == 0.0 {
        return None;
    }
    // chord through the two intersection points, at distance x from origin
    let x = (d * d + 1.0 - c.radius * c.radius) / (2.0 * d);
    let h2 = 1.0 - x * x;
    if h2 <= 0.0 {
        return None;
    }
    let u = c.center / d;
    let perp = Complex64::new(-u.im, u.re);
    let foot = u * x;
    let h = h2.sqrt();
    Some((foot + perp * h, foot - perp * h))
}

/// Lays out the face in the disk and checks that it closes up.
pub fn realize_face(k: &[f64], dual_curvature: f64) -> Result<DiskConfiguration, DiskError> {
    let config = layout(k, dual_curvature)?;
    let r = config.residuals;
    if !(r.tangency < GEOMETRY_TOL) {
        return Err(DiskError::Inconsistent { what: "tangency", residual: r.tangency });
    }
    if !(r.orthogonality < GEOMETRY_TOL) {
        return Err(DiskError::Inconsistent { what: "orthogonality", residual: r.orthogonality });
    }
    if !(r.angle_sum < GEOMETRY_TOL) {
        return Err(DiskError::Inconsistent { what: "angle sum", residual: r.angle_sum });
    }
    Ok(config)
}

/// Same construction as [`realize_face`] without rejecting inconsistent
/// layouts; the residuals report how far the face is from closing.
pub fn layout(k: &[f64], dual_curvature: f64) -> Result<DiskConfiguration, DiskError> {
    if k.len() < 3 {
        return Err(FaceError::TooFewVertices(k.len()).into());
    }
    for (index, &value) in k.iter().enumerate() {
        if !(value.is_finite() && value > 0.0) {
            return Err(FaceError::InvalidCurvature { index, value }.into());
        }
    }
    if !(dual_curvature.is_finite() && dual_curvature > 1.0) {
        return Err(DiskError::InvalidDual(dual_curvature));
    }
    let n = k.len();
    let q = ((dual_curvature - 1.0) * (dual_curvature + 1.0)).sqrt();
    let rho = 1.0 / (dual_curvature + q);
    let shrink = (1.0 - rho) * (1.0 + rho);

    let radii: Vec<f64> = k.iter().map(|&ki| shrink / (2.0 * ki)).collect();
    let dists: Vec<f64> = radii.iter().map(|&r| rho.hypot(r)).collect();

    // C_0's first crossing with the dual circle sits on the positive real axis.
    let mut angle = (rho / dists[0]).acos();
    let mut centers = Vec::with_capacity(n);
    centers.push(Complex64::from_polar(dists[0], angle));
    for i in 1..n {
        angle += opposite_angle(radii[i - 1] + radii[i], dists[i - 1], dists[i]);
        centers.push(Complex64::from_polar(dists[i], angle));
    }

    let mut residuals = Residuals::default();
    let mut tangency = Vec::with_capacity(n);
    for i in 0..n {
        let j = (i + 1) % n;
        let gap = centers[j] - centers[i];
        let len = gap.norm();
        residuals.tangency = residuals.tangency.max((len - (radii[i] + radii[j])).abs());
        let p = centers[i] + gap * (radii[i] / len);
        residuals.orthogonality = residuals.orthogonality.max((p.norm() - rho).abs());
        tangency.push(p);
    }
    for i in 0..n {
        let orth = (centers[i].norm_sqr() - rho * rho - radii[i] * radii[i]).abs();
        residuals.orthogonality = residuals.orthogonality.max(orth);
    }

    let dual_angles: Vec<f64> = (0..n)
        .map(|i| {
            let from = tangency[(i + n - 1) % n];
            let to = tangency[i];
            (to / from).arg().rem_euclid(TAU)
        })
        .collect();
    residuals.angle_sum = (dual_angles.iter().sum::<f64>() - TAU).abs();

    let circles = k
        .iter()
        .zip(centers.iter().zip(&radii))
        .map(|(&curvature, (&center, &radius))| {
            let circle = EuclidCircle { center, radius };
            let regime = Regime::of(curvature);
            RealizedCircle {
                curvature,
                regime,
                circle,
                ideal_point: (regime == Regime::Horocycle).then(|| center / center.norm()),
                axis: match regime {
                    Regime::Hypercycle => unit_circle_intersections(&circle),
                    _ => None,
                },
            }
        })
        .collect();

    Ok(DiskConfiguration {
        dual_curvature,
        dual: EuclidCircle { center: Complex64::new(0.0, 0.0), radius: rho },
        circles,
        tangency,
        dual_angles,
        residuals,
    })
}

/// Measured quantities of the arc of `C_i` inside the dual disk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcMeasurement {
    /// Hyperbolic length by quadrature.
    pub length: f64,
    /// `k_i` times the measured length.
    pub total_curvature: f64,
    /// Angle at the hyperbolic centre (circles) or projected length on the
    /// axis (hypercycles). `None` for horocycles.
    pub central_angle: Option<f64>,
}

fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Option<f64> {
    fn step<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Option<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol {
            return Some(left + right + delta / 15.0);
        }
        if depth == 0 {
            return None;
        }
        Some(
            step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)?
                + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)?,
        )
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, MAX_SIMPSON_DEPTH)
}

fn circle_central_angle(c: &EuclidCircle, p1: Complex64, p2: Complex64) -> f64 {
    let d = c.center.norm();
    let u = if d > 0.0 { c.center / d } else { Complex64::new(1.0, 0.0) };
    let near = 2.0 * (d - c.radius).atanh();
    let far = 2.0 * (d + c.radius).atanh();
    let h = u * (0.25 * (near + far)).tanh();
    let mobius = |z: Complex64| (z - h) / (Complex64::new(1.0, 0.0) - h.conj() * z);
    let (w1, w2) = (mobius(p1), mobius(p2));
    (w2 / w1).arg().abs()
}

fn hypercycle_projection(axis: (Complex64, Complex64), p1: Complex64, p2: Complex64) -> f64 {
    let (e1, e2) = axis;
    let ratio = ((p1 - e1).norm() * (p2 - e2).norm()) / ((p1 - e2).norm() * (p2 - e1).norm());
    ratio.ln().abs()
}

pub fn measure_arc_quantities(config: &DiskConfiguration) -> Result<Vec<ArcMeasurement>, DiskError> {
    validate(config)?;
    let n = config.circles.len();
    let mut out = Vec::with_capacity(n);
    for (i, realized) in config.circles.iter().enumerate() {
        let c = realized.circle;
        let p1 = config.tangency[(i + n - 1) % n];
        let p2 = config.tangency[i];
        let a = (p1 - c.center).arg();
        // the short sweep is the one facing the origin
        let mut sweep = ((p2 - c.center) / (p1 - c.center)).arg();
        if sweep.abs() > PI {
            sweep -= sweep.signum() * TAU;
        }
        let r = c.radius;
        let integrand = |t: f64| {
            let z = c.center + Complex64::from_polar(r, a + sweep * t);
            2.0 * r * sweep.abs() / (1.0 - z.norm_sqr())
        };
        let length =
            adaptive_simpson(&integrand, 0.0, 1.0, QUADRATURE_TOL).ok_or(DiskError::Quadrature(i))?;
        let central_angle = match realized.regime {
            Regime::Circle => Some(circle_central_angle(&c, p1, p2)),
            Regime::Hypercycle => realized.axis.map(|ax| hypercycle_projection(ax, p1, p2)),
            Regime::Horocycle => None,
        };
        out.push(ArcMeasurement {
            length,
            total_curvature: realized.curvature * length,
            central_angle,
        });
    }
    Ok(out)
}

fn validate(config: &DiskConfiguration) -> Result<(), DiskError> {
    let n = config.circles.len();
    let finite = |z: &Complex64| z.re.is_finite() && z.im.is_finite();
    let ok = n >= 3
        && config.tangency.len() == n
        && config.dual.radius.is_finite()
        && config.dual.radius > 0.0
        && config.tangency.iter().all(finite)
        && config
            .circles
            .iter()
            .all(|c| finite(&c.circle.center) && c.circle.radius.is_finite() && c.circle.radius > 0.0);
    if ok {
        Ok(())
    } else {
        Err(DiskError::InvalidConfiguration)
    }
}

/// SVG document of the configuration; y is flipped so the picture reads in
/// the usual mathematical orientation.
pub fn render_svg(config: &DiskConfiguration) -> Result<String, DiskError> {
    validate(config)?;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="640" height="640" viewBox="-1.05 -1.05 2.1 2.1">"#
    );
    let _ = writeln!(s, r#"<defs><clipPath id="disk"><circle cx="0" cy="0" r="1"/></clipPath></defs>"#);
    let _ = writeln!(
        s,
        r#"<circle cx="0" cy="0" r="1" fill="none" stroke="black" stroke-width="0.004"/>"#
    );
    let _ = writeln!(s, r#"<g clip-path="url(#disk)">"#);
    for c in &config.circles {
        let colour = match c.regime {
            Regime::Circle => "#1f5fbf",
            Regime::Horocycle => "#bf3f1f",
            Regime::Hypercycle => "#2f8f2f",
        };
        let _ = writeln!(
            s,
            r#"<circle cx="{:.9}" cy="{:.9}" r="{:.9}" fill="none" stroke="{}" stroke-width="0.006"/>"#,
            c.circle.center.re, -c.circle.center.im, c.circle.radius, colour
        );
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(
        s,
        r#"<circle cx="0" cy="0" r="{:.9}" fill="none" stroke="black" stroke-width="0.004" stroke-dasharray="0.02 0.015"/>"#,
        config.dual.radius
    );
    for p in &config.tangency {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.9}" cy="{:.9}" r="0.01" fill="black"/>"#,
            p.re, -p.im
        );
    }
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn emit_svg(config: &DiskConfiguration, path: &Path) -> Result<(), DiskError> {
    let doc = render_svg(config)?;
    std::fs::write(path, doc)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facepacking::{dual_angle, solve_dual_curvature, total_curvature_face, DualCircle};

    #[test]
    fn horocycle_triangle_layout() {
        let cfg = realize_face(&[1.0, 1.0, 1.0], 2.0).unwrap();
        for c in &cfg.circles {
            // tangent to the unit circle
            assert!((c.circle.center.norm() + c.circle.radius - 1.0).abs() < 1e-12);
            assert!((c.circle.geodesic_curvature() - 1.0).abs() < 1e-12);
            assert!(c.ideal_point.is_some());
        }
        for beta in &cfg.dual_angles {
            assert!((beta - TAU / 3.0).abs() < 1e-12);
        }
        let ideal: Vec<f64> = cfg.circles.iter().map(|c| c.ideal_point.unwrap().arg()).collect();
        for i in 0..3 {
            let gap = (ideal[(i + 1) % 3] - ideal[i]).rem_euclid(TAU);
            assert!((gap - TAU / 3.0).abs() < 1e-12);
        }
        let m = measure_arc_quantities(&cfg).unwrap();
        for a in m {
            assert!((a.total_curvature - 1.0).abs() < 1e-6);
            assert_eq!(a.central_angle, None);
        }
    }

    #[test]
    fn symmetric_square_is_congruent() {
        let k = 1.7;
        let dual = solve_dual_curvature(&[k; 4]).unwrap();
        let cfg = realize_face(&[k; 4], dual.curvature).unwrap();
        let r0 = cfg.circles[0].circle.radius;
        for (i, c) in cfg.circles.iter().enumerate() {
            assert!((c.circle.radius - r0).abs() < 1e-14);
            let expected = cfg.circles[0].circle.center.arg() + i as f64 * PI / 2.0;
            let diff = (c.circle.center.arg() - expected).rem_euclid(TAU);
            assert!(diff < 1e-10 || (TAU - diff) < 1e-10);
        }
    }

    #[test]
    fn horocycle_square_total_curvature() {
        let cfg = realize_face(&[1.0; 4], 2f64.sqrt()).unwrap();
        for a in measure_arc_quantities(&cfg).unwrap() {
            assert!((a.total_curvature - 2f64.sqrt()).abs() < 1e-6);
        }
    }

    #[test]
    fn mixed_face_agrees_with_closed_form() {
        let k = [2.0, 1.0, 0.5];
        let sol = total_curvature_face(&k, None).unwrap();
        let cfg = realize_face(&k, sol.dual.curvature).unwrap();
        let dual = DualCircle::from_curvature(sol.dual.curvature);
        for i in 0..3 {
            assert!((cfg.dual_angles[i] - dual_angle(k[i], &dual)).abs() < 1e-8);
        }
        let meas = measure_arc_quantities(&cfg).unwrap();
        for (m, arc) in meas.iter().zip(&sol.arcs) {
            assert!((m.total_curvature - arc.total_curvature).abs() < 1e-6);
            match (m.central_angle, arc.central_angle.value()) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-8, "{a} vs {b}"),
                (None, None) => {}
                other => panic!("central angle mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn wrong_dual_is_detected() {
        let err = realize_face(&[1.0, 1.0, 1.0], 2.1).unwrap_err();
        assert!(matches!(err, DiskError::Inconsistent { .. }));
        assert!(matches!(realize_face(&[1.0, 1.0, 1.0], 0.9), Err(DiskError::InvalidDual(_))));
    }

    #[test]
    fn svg_is_deterministic_and_rejects_empty() {
        let cfg = realize_face(&[1.0, 1.0, 1.0], 2.0).unwrap();
        let a = render_svg(&cfg).unwrap();
        let b = render_svg(&cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<?xml"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("stroke-dasharray").count(), 1);

        let mut empty = cfg.clone();
        empty.circles.clear();
        empty.tangency.clear();
        assert!(matches!(render_svg(&empty), Err(DiskError::InvalidConfiguration)));
        let mut broken = cfg;
        broken.circles[0].circle.radius = f64::NAN;
        assert!(render_svg(&broken).is_err());
    }
}
