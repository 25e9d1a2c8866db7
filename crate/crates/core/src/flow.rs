//! The prescribed curvature flow `ds_j/dt = -(T_j - T̂_j)` on a truncation
//! with frozen boundary, exhaustion by growing balls, and direct solves of
//! the steady state.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::cellcomplex::{BallSequence, Complex, ComplexError, TilingKind, TilingProvider};
use crate::curvaturefield::{
    assemble, interior_residuals, vertex_totals, CurvatureRule, FieldError, PrescribedCurvature,
};
use crate::facepacking::{arc_total_curvature, DualCircle};

/// Threshold below which consecutive exhaustion states count as stabilized.
pub const STABILIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Complex(#[from] ComplexError),
    #[error("step size underflow at t = {t} (h = {h})")]
    StepUnderflow { t: f64, h: f64 },
    #[error("radius {radius} did not converge by t = {t} (residual {residual:e})")]
    NotConverged { radius: usize, t: f64, residual: f64 },
    #[error("line search failed after {iterations} Newton iterations (residual {residual:e})")]
    LineSearch { iterations: usize, residual: f64 },
    #[error("prescribed value {value} outside attainable range ({lower}, {upper})")]
    Unattainable { value: f64, lower: f64, upper: f64 },
    #[error("no small start found: T(-c) still exceeds T̂ at c = {0}")]
    NoSmallStart(f64),
    #[error("probe vertex {0} is not in the complex")]
    UnknownProbe(u64),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("no value for vertex {0} in start state")]
    MissingStart(u64),
    #[error("cannot parse start rule `{0}`")]
    ParseStart(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowOptions {
    pub atol: f64,
    pub rtol: f64,
    /// Stop once `sup |T - T̂| < stop_tol` over the interior.
    pub stop_tol: f64,
    pub t_max: f64,
    /// Record every n-th accepted step (the first and last are always kept).
    pub sample_every: usize,
    /// Keep full interior snapshots in the trace.
    pub record_states: bool,
    /// Vertex ids whose `s` goes into every sample.
    pub probes: Vec<u64>,
    pub initial_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            atol: 1e-9,
            rtol: 1e-9,
            stop_tol: 1e-8,
            t_max: 1e4,
            sample_every: 1,
            record_states: true,
            probes: Vec::new(),
            initial_step: None,
            max_steps: 10_000_000,
        }
    }
}

impl FlowOptions {
    fn validate(&self) -> Result<(), FlowError> {
        let positive = [self.atol, self.rtol, self.stop_tol, self.t_max];
        if positive.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(FlowError::InvalidOptions("tolerances and t_max must be positive".into()));
        }
        if self.sample_every == 0 {
            return Err(FlowError::InvalidOptions("sample_every must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowSample {
    pub t: f64,
    pub sup_residual: f64,
    /// `min_j (T_j - T̂_j)` over the interior.
    pub m: f64,
    /// `max_j (T_j - T̂_j)` over the interior.
    pub big_m: f64,
    pub m_star: f64,
    pub big_m_star: f64,
    pub probes: Vec<f64>,
    #[serde(skip)]
    pub interior: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    pub min_step: f64,
    pub max_step: f64,
    /// Smallest `deg(j) π + T̂_j - |T_j - T̂_j|` seen at any evaluation.
    pub derivative_bound_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub samples: Vec<FlowSample>,
    pub converged: bool,
    pub t_final: f64,
    pub final_state: Vec<f64>,
    pub interior_ids: Vec<u64>,
    pub probe_ids: Vec<u64>,
    pub stats: StepStats,
    /// Stopping tolerance on the residual, used to size monitor slack.
    pub tolerance: f64,
}

impl FlowTrace {
    pub fn initial_sup_residual(&self) -> f64 {
        self.samples[0].sup_residual
    }

    pub fn final_sup_residual(&self) -> f64 {
        self.samples.last().expect("trace has samples").sup_residual
    }

    /// Lowest `T_j - T̂_j` seen at any sample.
    pub fn min_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.m).fold(f64::INFINITY, f64::min)
    }

    pub fn max_residual(&self) -> f64 {
        self.samples.iter().map(|s| s.big_m).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest rise `s_j(t_{n+1}) - s_j(t_n)` between recorded snapshots.
    pub fn max_increase(&self) -> Option<f64> {
        self.max_step_change(|d| d)
    }

    /// Largest drop `s_j(t_n) - s_j(t_{n+1})` between recorded snapshots.
    pub fn max_decrease(&self) -> Option<f64> {
        self.max_step_change(|d| -d)
    }

    fn max_step_change(&self, sign: impl Fn(f64) -> f64) -> Option<f64> {
        let states: Vec<&Vec<f64>> = self.samples.iter().filter_map(|s| s.interior.as_ref()).collect();
        if states.len() < 2 {
            return if states.is_empty() { None } else { Some(0.0) };
        }
        let mut worst = f64::NEG_INFINITY;
        for w in states.windows(2) {
            for (a, b) in w[0].iter().zip(w[1].iter()) {
                worst = worst.max(sign(b - a));
            }
        }
        Some(worst)
    }

    /// CSV with columns `t,sup_residual,m,M,m_star,M_star` then one `s_<id>`
    /// column per probe.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,sup_residual,m,M,m_star,M_star");
        for id in &self.probe_ids {
            let _ = write!(out, ",s_{id}");
        }
        out.push('\n');
        for s in &self.samples {
            let _ = write!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                s.t, s.sup_residual, s.m, s.big_m, s.m_star, s.big_m_star
            );
            for p in &s.probes {
                let _ = write!(out, ",{p:.16e}");
            }
            out.push('\n');
        }
        out
    }
}

/// Right-hand side of the truncated flow over interior coordinates.
struct TruncatedSystem<'a> {
    complex: &'a Complex,
    that: &'a PrescribedCurvature,
    full: Vec<f64>,
    bound: Vec<f64>,
    evals: usize,
    bound_margin: f64,
}

impl<'a> TruncatedSystem<'a> {
    fn new(complex: &'a Complex, s0: &[f64], that: &'a PrescribedCurvature) -> Self {
        let bound = complex
            .interior()
            .iter()
            .map(|&j| complex.degree(j) as f64 * std::f64::consts::PI + that.get(j))
            .collect();
        TruncatedSystem { complex, that, full: s0.to_vec(), bound, evals: 0, bound_margin: f64::INFINITY }
    }

    fn interior(&self) -> &'a [usize] {
        self.complex.interior()
    }

    fn scatter(&mut self, y: &[f64]) {
        for (&j, &v) in self.complex.interior().iter().zip(y) {
            self.full[j] = v;
        }
    }

    /// Writes `-(T - T̂)` into `out`.
    fn eval(&mut self, y: &[f64], out: &mut [f64]) -> Result<(), FlowError> {
        self.scatter(y);
        let totals = vertex_totals(self.complex, &self.full)?;
        self.evals += 1;
        for (r, &j) in self.complex.interior().iter().enumerate() {
            let rate = totals[j] - self.that.get(j);
            self.bound_margin = self.bound_margin.min(self.bound[r] - rate.abs());
            out[r] = -rate;
        }
        Ok(())
    }
}

// Dormand-Prince 5(4) tableau.
const C: [f64; 6] = [0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A2: [f64; 1] = [0.2];
const A3: [f64; 2] = [3.0 / 40.0, 9.0 / 40.0];
const A4: [f64; 3] = [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0];
const A5: [f64; 4] = [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0];
const A6: [f64; 5] = [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0];
const B: [f64; 6] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const PI_BETA: f64 = 0.04;

fn stage(y: &[f64], h: f64, coeffs: &[f64], ks: &[Vec<f64>], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (c, k) in coeffs.iter().zip(ks) {
            acc += c * k[i];
        }
        *o = y[i] + h * acc;
    }
}

fn sample_of(t: f64, residual: &[f64], probes: &[f64], state: Option<Vec<f64>>) -> FlowSample {
    // residual holds -(T - T̂)
    let mut m = f64::INFINITY;
    let mut big_m = f64::NEG_INFINITY;
    let mut sup = 0.0_f64;
    for &r in residual {
        let d = -r;
        m = m.min(d);
        big_m = big_m.max(d);
        sup = sup.max(d.abs());
    }
    if residual.is_empty() {
        m = 0.0;
        big_m = 0.0;
    }
    FlowSample {
        t,
        sup_residual: sup,
        m,
        big_m,
        m_star: m.min(0.0),
        big_m_star: big_m.max(0.0),
        probes: probes.to_vec(),
        interior: state,
    }
}

fn probe_slots(complex: &Complex, probes: &[u64]) -> Result<Vec<usize>, FlowError> {
    probes
        .iter()
        .map(|&id| complex.index_of(id).ok_or(FlowError::UnknownProbe(id)))
        .collect()
}

/// Integrates the truncated flow from `s0` (full vector; boundary entries are
/// the frozen Dirichlet data) until the interior residual drops below
/// `stop_tol` or `t_max` is reached.
pub fn integrate_truncated_flow(
    complex: &Complex,
    s0: &[f64],
    that: &PrescribedCurvature,
    options: &FlowOptions,
) -> Result<FlowTrace, FlowError> {
    options.validate()?;
    if s0.len() != complex.vertex_count() {
        return Err(FieldError::Length { expected: complex.vertex_count(), got: s0.len() }.into());
    }
    let probe_idx = probe_slots(complex, &options.probes)?;
    let mut sys = TruncatedSystem::new(complex, s0, that);
    let interior = sys.interior();
    let n = interior.len();

    let mut y: Vec<f64> = interior.iter().map(|&j| s0[j]).collect();
    let mut ks: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    sys.eval(&y, &mut ks[0])?;

    let probes_now = |sys: &TruncatedSystem| -> Vec<f64> { probe_idx.iter().map(|&p| sys.full[p]).collect() };
    let snapshot = |y: &[f64]| options.record_states.then(|| y.to_vec());

    let mut stats = StepStats { min_step: f64::INFINITY, max_step: 0.0, ..StepStats::default() };
    let mut t = 0.0;
    sys.scatter(&y);
    let mut samples = vec![sample_of(t, &ks[0], &probes_now(&sys), snapshot(&y))];
    let mut converged = samples[0].sup_residual < options.stop_tol;

    let norm = |v: &[f64], y: &[f64]| -> f64 {
        let sum: f64 = v
            .iter()
            .zip(y)
            .map(|(vi, yi)| {
                let sc = options.atol + options.rtol * yi.abs();
                (vi / sc).powi(2)
            })
            .sum();
        (sum / n.max(1) as f64).sqrt()
    };

    let mut h = match options.initial_step {
        Some(h) => h,
        None => {
            let d0 = norm(&y, &y);
            let d1 = norm(&ks[0], &y);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            h0.min(1.0)
        }
    };
    let mut fac_old = 1e-4_f64;
    let mut last_rejected = false;
    let mut since_sample = 0usize;

    while !converged && t < options.t_max {
        if stats.accepted + stats.rejected >= options.max_steps {
            return Err(FlowError::InvalidOptions(format!("step budget {} exhausted", options.max_steps)));
        }
        if h < 1e-14 * t.max(1.0) {
            return Err(FlowError::StepUnderflow { t, h });
        }
        if t + h > options.t_max {
            h = options.t_max - t;
        }

        stage(&y, h, &A2, &ks[..1], &mut tmp);
        sys.eval(&tmp, &mut ks[1])?;
        stage(&y, h, &A3, &ks[..2], &mut tmp);
        sys.eval(&tmp, &mut ks[2])?;
        stage(&y, h, &A4, &ks[..3], &mut tmp);
        sys.eval(&tmp, &mut ks[3])?;
        stage(&y, h, &A5, &ks[..4], &mut tmp);
        sys.eval(&tmp, &mut ks[4])?;
        stage(&y, h, &A6, &ks[..5], &mut tmp);
        sys.eval(&tmp, &mut ks[5])?;
        stage(&y, h, &B, &ks[..6], &mut y_new);
        sys.eval(&y_new, &mut ks[6])?;
        let _ = C;

        for (i, e) in tmp.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (c, k) in E.iter().zip(&ks) {
                acc += c * k[i];
            }
            *e = h * acc;
        }
        let scaled: f64 = {
            let sum: f64 = tmp
                .iter()
                .zip(y.iter().zip(&y_new))
                .map(|(e, (a, b))| {
                    let sc = options.atol + options.rtol * a.abs().max(b.abs());
                    (e / sc).powi(2)
                })
                .sum();
            (sum / n.max(1) as f64).sqrt()
        };
        let err = if scaled.is_finite() { scaled } else { f64::INFINITY };

        let fac11 = err.powf(0.2 - PI_BETA * 0.75);
        if err <= 1.0 {
            let mut fac = fac11 / fac_old.powf(PI_BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            if last_rejected {
                h_new = h_new.min(h);
            }
            fac_old = err.max(1e-4);
            t += h;
            stats.accepted += 1;
            stats.min_step = stats.min_step.min(h);
            stats.max_step = stats.max_step.max(h);
            std::mem::swap(&mut y, &mut y_new);
            ks.swap(0, 6);
            sys.scatter(&y);

            let sample = sample_of(t, &ks[0], &[], None);
            converged = sample.sup_residual < options.stop_tol;
            since_sample += 1;
            let last = converged || t >= options.t_max;
            if since_sample >= options.sample_every || last {
                since_sample = 0;
                samples.push(FlowSample { probes: probes_now(&sys), interior: snapshot(&y), ..sample });
            }
            h = h_new;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            let shrink = if err.is_finite() { (fac11 / SAFETY).min(1.0 / FAC_MIN) } else { 1.0 / FAC_MIN };
            h /= shrink;
            last_rejected = true;
        }
    }

    sys.scatter(&y);
    stats.rhs_evals = sys.evals;
    stats.derivative_bound_margin = sys.bound_margin;
    if stats.accepted == 0 {
        stats.min_step = 0.0;
    }
    Ok(FlowTrace {
        samples,
        converged,
        t_final: t,
        final_state: sys.full,
        interior_ids: interior.iter().map(|&j| complex.vertex_id(j)).collect(),
        probe_ids: options.probes.clone(),
        stats,
        tolerance: options.stop_tol,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MonitorCheck {
    /// `m*(t)` must not decrease.
    LowerEnvelope,
    /// `M*(t)` must not increase.
    UpperEnvelope,
    /// `sup |T - T̂|` must not exceed its initial value.
    SupResidual,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub check: MonitorCheck,
    pub sample: usize,
    pub t: f64,
    pub excess: f64,
}

/// Maximum-principle checks with slack `10 ×` the residual tolerance.
///
/// The slack is in curvature units. The integrator's own tolerances bound
/// the error in `s`; near equilibrium that error reaches the residual
/// amplified by the stiffest Jacobian mode.
pub fn monitor_report(trace: &FlowTrace) -> Vec<Violation> {
    monitor_report_with(trace, 10.0 * trace.tolerance)
}

pub fn monitor_report_with(trace: &FlowTrace, slack: f64) -> Vec<Violation> {
    let mut out = Vec::new();
    let Some(first) = trace.samples.first() else { return out };
    let mut best_low = first.m_star;
    let mut best_high = first.big_m_star;
    let sup0 = first.sup_residual;
    for (i, s) in trace.samples.iter().enumerate().skip(1) {
        if s.m_star < best_low - slack {
            out.push(Violation { check: MonitorCheck::LowerEnvelope, sample: i, t: s.t, excess: best_low - s.m_star });
        }
        if s.big_m_star > best_high + slack {
            out.push(Violation {
                check: MonitorCheck::UpperEnvelope,
                sample: i,
                t: s.t,
                excess: s.big_m_star - best_high,
            });
        }
        if s.sup_residual > sup0 + slack {
            out.push(Violation { check: MonitorCheck::SupResidual, sample: i, t: s.t, excess: s.sup_residual - sup0 });
        }
        best_low = best_low.max(s.m_star);
        best_high = best_high.min(s.big_m_star);
    }
    out
}

/// Initial value rule for the flow.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialRule {
    Constant(f64),
    /// `s ≡ -c` with `c` doubled until `T(s) ≤ T̂` on the interior.
    AutoSmall,
    /// Explicit values for every vertex id.
    PerVertex(BTreeMap<u64, f64>),
}

impl FromStr for InitialRule {
    type Err = FlowError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        match text.trim() {
            "auto-small" => Ok(InitialRule::AutoSmall),
            t => t.parse().map(InitialRule::Constant).map_err(|_| FlowError::ParseStart(text.to_string())),
        }
    }
}

/// Smallest `c = 2^j` (from 1) with `T_i(-c) ≤ T̂_i` on every interior vertex.
pub fn small_start_constant(complex: &Complex, that: &PrescribedCurvature) -> Result<f64, FlowError> {
    let mut c = 1.0;
    while c <= 512.0 {
        let totals = vertex_totals(complex, &vec![-c; complex.vertex_count()])?;
        if complex.interior().iter().all(|&i| totals[i] <= that.get(i)) {
            return Ok(c);
        }
        c *= 2.0;
    }
    Err(FlowError::NoSmallStart(c / 2.0))
}

pub fn initial_state(
    complex: &Complex,
    that: &PrescribedCurvature,
    rule: &InitialRule,
) -> Result<Vec<f64>, FlowError> {
    match rule {
        InitialRule::Constant(c) => Ok(vec![*c; complex.vertex_count()]),
        InitialRule::AutoSmall => Ok(vec![-small_start_constant(complex, that)?; complex.vertex_count()]),
        InitialRule::PerVertex(map) => complex
            .vertex_ids()
            .iter()
            .map(|id| map.get(id).copied().ok_or(FlowError::MissingStart(*id)))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iterations: usize,
    pub max_backtracks: usize,
    pub cg_tol: f64,
    /// Flow run used once if the line search stalls.
    pub fallback: Option<FlowOptions>,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            tol: 1e-10,
            max_iterations: 60,
            max_backtracks: 40,
            cg_tol: 1e-12,
            fallback: Some(FlowOptions { stop_tol: 1e-6, record_states: false, ..FlowOptions::default() }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub state: Vec<f64>,
    pub sup_residual: f64,
    pub iterations: usize,
    pub used_flow_fallback: bool,
}

/// Jacobi-preconditioned conjugate gradients on the interior block.
fn pcg(apply: impl Fn(&[f64], &mut [f64]), diag: &[f64], b: &[f64], tol: f64) -> Vec<f64> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag).map(|(ri, di)| ri / di).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        return x;
    }
    let mut rz = dot(&r, &z);
    for _ in 0..(10 * n).max(50) {
        apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= tol * b_norm {
            break;
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

fn interior_sup(complex: &Complex, s: &[f64], that: &PrescribedCurvature) -> Result<(f64, Vec<f64>), FieldError> {
    let totals = vertex_totals(complex, s)?;
    let r = interior_residuals(complex.interior(), &totals, that);
    Ok((r.sup, r.residuals))
}

/// Damped Newton on `T(s) = T̂` over interior coordinates, boundary frozen.
pub fn steady_state_newton(
    complex: &Complex,
    s_init: &[f64],
    that: &PrescribedCurvature,
    options: &NewtonOptions,
) -> Result<NewtonOutcome, FlowError> {
    let interior = complex.interior();
    let mut s = s_init.to_vec();
    let (mut sup, _) = interior_sup(complex, &s, that)?;
    let mut used_fallback = false;
    let l2 = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>().sqrt();

    for iteration in 0..options.max_iterations {
        if sup < options.tol {
            return Ok(NewtonOutcome { state: s, sup_residual: sup, iterations: iteration, used_flow_fallback: used_fallback });
        }
        let field = assemble(complex, &s)?;
        let res = interior_residuals(interior, &field.totals, that);
        let jac = &field.jacobian;
        let rhs: Vec<f64> = res.residuals.iter().map(|r| -r).collect();
        let step = pcg(|x, y| jac.interior_matvec(x, y), &jac.diagonal(), &rhs, options.cg_tol);

        let merit = l2(&res.residuals);
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..options.max_backtracks {
            let mut trial = s.clone();
            for (&j, d) in interior.iter().zip(&step) {
                trial[j] += lambda * d;
            }
            if let Ok((trial_sup, trial_res)) = interior_sup(complex, &trial, that) {
                if l2(&trial_res) <= (1.0 - 1e-4 * lambda) * merit || trial_sup < options.tol {
                    accepted = Some((trial, trial_sup));
                    break;
                }
            }
            lambda *= 0.5;
        }
        match accepted {
            Some((trial, trial_sup)) => {
                s = trial;
                sup = trial_sup;
            }
            None => match (&options.fallback, used_fallback) {
                (Some(flow), false) => {
                    log::warn!("line search stalled at residual {sup:e}; continuing from the flow");
                    let trace = integrate_truncated_flow(complex, &s, that, flow)?;
                    s = trace.final_state;
                    sup = interior_sup(complex, &s, that)?.0;
                    used_fallback = true;
                }
                _ => return Err(FlowError::LineSearch { iterations: iteration, residual: sup }),
            },
        }
    }
    if sup < options.tol {
        return Ok(NewtonOutcome {
            state: s,
            sup_residual: sup,
            iterations: options.max_iterations,
            used_flow_fallback: used_fallback,
        });
    }
    Err(FlowError::LineSearch { iterations: options.max_iterations, residual: sup })
}

/// Per-vertex total `deg · T(k, k_P(k))` when every vertex of the tiling has
/// curvature `k`; `k_P = sqrt(1 + k^2 tan^2(π/n))` for faces with `n` sides.
pub fn uniform_vertex_total(kind: TilingKind, k: f64) -> f64 {
    let n = kind.face_size() as f64;
    let q = k * (std::f64::consts::PI / n).tan();
    kind.vertex_degree() as f64 * arc_total_curvature(k, &DualCircle::from_q(q))
}

/// Supremum of the attainable uniform totals, `deg (n-2) π / n`.
pub fn uniform_total_limit(kind: TilingKind) -> f64 {
    let n = kind.face_size() as f64;
    kind.vertex_degree() as f64 * (n - 2.0) * std::f64::consts::PI / n
}

/// Uniform curvature `k*` with `uniform_vertex_total(kind, k*) = that`,
/// by bisection on `s = ln k`.
pub fn steady_state_uniform(kind: TilingKind, that: f64) -> Result<f64, FlowError> {
    let upper = uniform_total_limit(kind);
    let unattainable = || FlowError::Unattainable { value: that, lower: 0.0, upper };
    if !(that > 0.0 && that < upper) {
        return Err(unattainable());
    }
    let g = |s: f64| uniform_vertex_total(kind, s.exp()) - that;
    let (mut lo, mut hi) = (-1.0_f64, 1.0_f64);
    while g(lo) > 0.0 {
        lo *= 2.0;
        if lo < -300.0 {
            return Err(unattainable());
        }
    }
    while g(hi) < 0.0 {
        hi *= 2.0;
        if hi > 300.0 {
            return Err(unattainable());
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo < 1e-15 {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

#[derive(Debug, Clone)]
pub struct ExhaustionSpec {
    pub radii: Vec<usize>,
    pub that: CurvatureRule,
    pub start: InitialRule,
    /// Vertex ids in the ball numbering (0 is the base vertex).
    pub probes: Vec<u64>,
    pub flow: FlowOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusResult {
    pub radius: usize,
    pub vertices: usize,
    pub interior: usize,
    pub t_final: f64,
    pub sup_residual: f64,
    pub accepted_steps: usize,
    pub probe_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExhaustionReport {
    pub probes: Vec<u64>,
    pub results: Vec<RadiusResult>,
    /// `deltas[p][v] = |s_v(radius p) - s_v(radius p+1)|`.
    pub deltas: Vec<Vec<f64>>,
    /// Every probe moved by less than the stabilization tolerance at the last pair.
    pub stabilized: bool,
    /// Every probe's deltas strictly decrease along the radii.
    pub decreasing: bool,
}

/// Runs the truncated flow on each ball `B_n` of the tiling and compares
/// consecutive limits at the probe vertices.
pub fn exhaustion_driver(provider: Box<dyn TilingProvider>, spec: &ExhaustionSpec) -> Result<ExhaustionReport, FlowError> {
    if spec.radii.is_empty() || spec.radii.windows(2).any(|w| w[1] <= w[0]) || spec.radii[0] == 0 {
        return Err(FlowError::InvalidOptions("radii must be positive and strictly increasing".into()));
    }
    let deepest = *spec.radii.last().expect("nonempty");
    let balls = BallSequence::new(provider, deepest + 1);
    let mut options = spec.flow.clone();
    options.probes = spec.probes.clone();
    options.record_states = false;
    options.sample_every = usize::MAX;

    let mut results = Vec::with_capacity(spec.radii.len());
    for &radius in &spec.radii {
        let complex = balls.truncation(radius)?;
        let that = PrescribedCurvature::from_rule(&complex, &spec.that)?;
        let s0 = initial_state(&complex, &that, &spec.start)?;
        let trace = integrate_truncated_flow(&complex, &s0, &that, &options)?;
        if !trace.converged {
            return Err(FlowError::NotConverged { radius, t: trace.t_final, residual: trace.final_sup_residual() });
        }
        log::info!("radius {radius}: converged at t = {:.3} in {} steps", trace.t_final, trace.stats.accepted);
        results.push(RadiusResult {
            radius,
            vertices: complex.vertex_count(),
            interior: complex.interior().len(),
            t_final: trace.t_final,
            sup_residual: trace.final_sup_residual(),
            accepted_steps: trace.stats.accepted,
            probe_values: trace.samples.last().expect("trace has samples").probes.clone(),
        });
    }
    let deltas: Vec<Vec<f64>> = results
        .windows(2)
        .map(|w| {
            w[0].probe_values
                .iter()
                .zip(&w[1].probe_values)
                .map(|(a, b)| (a - b).abs())
                .collect()
        })
        .collect();
    let stabilized = deltas.last().is_some_and(|d| d.iter().all(|&x| x < STABILIZATION_TOL));
    let decreasing = (0..spec.probes.len()).all(|v| deltas.windows(2).all(|w| w[1][v] < w[0][v]));
    Ok(ExhaustionReport { probes: spec.probes.clone(), results, deltas, stabilized, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellcomplex::generate_tiling;

    #[test]
    fn uniform_oracle_anchors() {
        let k = steady_state_uniform(TilingKind::Square, 4.0 * 2f64.sqrt()).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
        let k = steady_state_uniform(TilingKind::Triangular, 6.0).unwrap();
        assert!((k - 1.0).abs() < 1e-12);
        let k = steady_state_uniform(TilingKind::Square, 4.0).unwrap();
        assert!((k - 0.317861058198765).abs() < 1e-12);
        assert!((uniform_vertex_total(TilingKind::Square, k) - 4.0).abs() < 1e-12);
        assert!(steady_state_uniform(TilingKind::Hexagonal, 2.0 * std::f64::consts::PI).is_err());
        assert!(steady_state_uniform(TilingKind::Hexagonal, 0.0).is_err());
    }

    #[test]
    fn stationary_start() {
        let c = generate_tiling(TilingKind::Triangular, 3).unwrap();
        let that = PrescribedCurvature::from_rule(&c, &CurvatureRule::Degree).unwrap();
        let s0 = vec![0.0; c.vertex_count()];
        let trace = integrate_truncated_flow(&c, &s0, &that, &FlowOptions::default()).unwrap();
        assert!(trace.converged);
        assert_eq!(trace.final_state, s0);
        assert!(monitor_report(&trace).is_empty());
    }

    #[test]
    fn small_square_flow_and_newton_agree() {
        let c = generate_tiling(TilingKind::Square, 4).unwrap();
        let that = PrescribedCurvature::uniform(&c, 4.0).unwrap();
        let s0 = vec![0.0; c.vertex_count()];
        let options = FlowOptions { probes: vec![0], ..FlowOptions::default() };
        let trace = integrate_truncated_flow(&c, &s0, &that, &options).unwrap();
        assert!(trace.converged);
        assert!(monitor_report(&trace).is_empty());
        assert!(trace.max_increase().unwrap() <= 0.0);
        assert!(trace.stats.derivative_bound_margin > 0.0);
        let newton = steady_state_newton(&c, &s0, &that, &NewtonOptions::default()).unwrap();
        assert!(newton.sup_residual < 1e-10);
        for &j in c.interior() {
            assert!((newton.state[j] - trace.final_state[j]).abs() < 1e-6);
        }
        let csv = trace.to_csv();
        assert!(csv.starts_with("t,sup_residual,m,M,m_star,M_star,s_0\n"));
    }

    #[test]
    fn fault_injection_is_reported() {
        let c = generate_tiling(TilingKind::Square, 3).unwrap();
        let that = PrescribedCurvature::uniform(&c, 4.0).unwrap();
        let mut trace =
            integrate_truncated_flow(&c, &vec![0.0; c.vertex_count()], &that, &FlowOptions::default()).unwrap();
        assert!(monitor_report(&trace).is_empty());
        let mid = trace.samples.len() / 2;
        trace.samples[mid].big_m_star += 1.0;
        trace.samples[mid].sup_residual += 10.0;
        let v = monitor_report(&trace);
        assert!(v.iter().any(|x| x.check == MonitorCheck::UpperEnvelope && x.sample == mid));
        assert!(v.iter().any(|x| x.check == MonitorCheck::SupResidual));
    }

    #[test]
    fn start_rules() {
        assert_eq!("auto-small".parse::<InitialRule>().unwrap(), InitialRule::AutoSmall);
        assert_eq!("-3".parse::<InitialRule>().unwrap(), InitialRule::Constant(-3.0));
        assert!("tiny".parse::<InitialRule>().is_err());
        let c = generate_tiling(TilingKind::Square, 2).unwrap();
        let that = PrescribedCurvature::uniform(&c, 4.0).unwrap();
        let cst = small_start_constant(&c, &that).unwrap();
        let t = vertex_totals(&c, &vec![-cst; c.vertex_count()]).unwrap();
        assert!(c.interior().iter().all(|&i| t[i] <= 4.0));
    }
}
