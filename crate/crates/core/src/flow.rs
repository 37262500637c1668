//! Uncontrolled ODE integration `dX = b(X) dt` with boundary-hit detection,
//! plus the one- and two-dimensional example fields.

use std::f64::consts::{E, FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SmoothDomain;

/// Default absolute tolerance on the signed distance at a reported hit.
pub const HIT_TOLERANCE: f64 = 1e-9;

/// Field values within this distance of a root are clamped to zero, which
/// makes equilibria absorbing.
pub const ROOT_CLAMP: f64 = 1e-14;

pub type FieldFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Continuity {
    Lipschitz,
    Hoelder,
    LogModulus,
    Custom,
}

#[derive(Clone)]
pub struct VectorField {
    pub name: String,
    pub dim: usize,
    pub continuity: Continuity,
    f: FieldFn,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("VectorField")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("continuity", &self.continuity)
            .finish()
    }
}

impl VectorField {
    pub fn new(name: impl Into<String>, dim: usize, continuity: Continuity, f: FieldFn) -> Self {
        Self { name: name.into(), dim, continuity, f }
    }

    /// Builds a one-dimensional field from a scalar map.
    pub fn scalar(
        name: impl Into<String>,
        continuity: Continuity,
        f: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::new(name, 1, continuity, Arc::new(move |x: &[f64]| vec![f(x[0])]))
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
}

/// Trajectory samples. States are stored row-major, `dim` values per time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowResult {
    pub dim: usize,
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub hit_time: Option<f64>,
    pub hit_point: Option<Vec<f64>>,
}

impl FlowResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub hit_tolerance: f64,
    /// Keep every `record_stride`-th step (the first and last state are always kept).
    pub record_stride: usize,
    /// Error-controlled sub-steps; when false every step is a single RK4 step
    /// of the nominal size (used for convergence-order studies).
    pub adaptive: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self { hit_tolerance: HIT_TOLERANCE, record_stride: 1, adaptive: true }
    }
}

/// Classical fourth-order Runge–Kutta step.
pub fn rk4_step(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Vec<f64> {
    let n = x.len();
    let k1 = f(x);
    let x2: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k1[i]).collect();
    let k2 = f(&x2);
    let x3: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * h * k2[i]).collect();
    let k3 = f(&x3);
    let x4: Vec<f64> = (0..n).map(|i| x[i] + h * k3[i]).collect();
    let k4 = f(&x4);
    (0..n).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

/// Integrates with default options.
pub fn integrate_flow(
    field: &VectorField,
    x0: &[f64],
    horizon: f64,
    step: f64,
    domain: Option<&SmoothDomain>,
) -> Result<FlowResult> {
    integrate_flow_with(field, x0, horizon, step, domain, FlowOptions::default())
}

/// RK4 with step-doubling error control inside a uniform output grid of
/// spacing `step`. With a domain, the signed distance is checked after every
/// accepted sub-step. A hit is either a sign change (the step is bisected to
/// locate the zero to `1e-9 * horizon`) or a stall within the tolerance band
/// on a boundary equilibrium. Asymptotic approaches that never reach the
/// boundary are not hits.
pub fn integrate_flow_with(
    field: &VectorField,
    x0: &[f64],
    horizon: f64,
    step: f64,
    domain: Option<&SmoothDomain>,
    opts: FlowOptions,
) -> Result<FlowResult> {
    if !(step > 0.0 && horizon > 0.0) {
        return Err(Error::InvalidParameter(format!("step and horizon must be positive ({step}, {horizon})")));
    }
    if x0.len() != field.dim {
        return Err(Error::InvalidParameter(format!("x0 has dimension {}, field {}", x0.len(), field.dim)));
    }
    let stride = opts.record_stride.max(1);
    let f = |x: &[f64]| field.eval(x);
    let mut res = FlowResult { dim: x0.len(), times: vec![0.0], states: x0.to_vec(), hit_time: None, hit_point: None };
    let mut x = x0.to_vec();
    if let Some(dom) = domain {
        if dom.signed_distance(&x)? <= opts.hit_tolerance {
            res.hit_time = Some(0.0);
            res.hit_point = Some(x);
            return Ok(res);
        }
    }
    let n_steps = (horizon / step).ceil() as usize;
    let mut t = 0.0;
    let mut h = step;
    for k in 0..n_steps {
        let t_next = if k + 1 == n_steps { horizon } else { (k + 1) as f64 * step };
        while t < t_next {
            let h_try = h.min(t_next - t);
            let stepped = if opts.adaptive {
                controlled_step(&f, &x, h_try)?
            } else {
                Some((rk4_step(&f, &x, h_try), step))
            };
            let Some((xn, h_next)) = stepped else {
                h = 0.2 * h_try;
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::StepUnderflow { t });
                }
                continue;
            };
            if let Some(dom) = domain {
                let dn = dom.signed_distance(&xn)?;
                if dn <= 0.0 {
                    let (s, xh) = locate_crossing(&f, dom, &x, t, h_try, horizon, opts)?;
                    res.times.push(t + s);
                    res.states.extend_from_slice(&xh);
                    res.hit_time = Some(t + s);
                    res.hit_point = Some(xh);
                    return Ok(res);
                }
                if dn <= opts.hit_tolerance && f(&xn).iter().all(|v| *v == 0.0) {
                    let th = if t + h_try >= t_next { t_next } else { t + h_try };
                    res.times.push(th);
                    res.states.extend_from_slice(&xn);
                    res.hit_time = Some(th);
                    res.hit_point = Some(xn);
                    return Ok(res);
                }
            }
            x = xn;
            t = if t + h_try >= t_next { t_next } else { t + h_try };
            h = h_next.min(step);
        }
        if (k + 1) % stride == 0 || k + 1 == n_steps {
            res.times.push(t);
            res.states.extend_from_slice(&x);
        }
    }
    Ok(res)
}

const STEP_ATOL: f64 = 1e-15;
const STEP_RTOL: f64 = 1e-14;

/// One RK4 step of size `h` checked against two half steps. Returns the
/// two-half-step state and a proposal for the next step, or `None` when the
/// step must shrink.
fn controlled_step(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> Result<Option<(Vec<f64>, f64)>> {
    let full = rk4_step(f, x, h);
    let half = rk4_step(f, &rk4_step(f, x, 0.5 * h), 0.5 * h);
    if full.iter().chain(&half).any(|v| !v.is_finite()) {
        return Ok(None);
    }
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let err = full.iter().zip(&half).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())) / 15.0;
    let tol = STEP_ATOL + STEP_RTOL * scale;
    if err <= tol {
        let grow = if err == 0.0 { 4.0 } else { (0.9 * (tol / err).powf(0.2)).clamp(1.0, 4.0) };
        Ok(Some((half, h * grow)))
    } else {
        Ok(None)
    }
}

fn locate_crossing(
    f: &dyn Fn(&[f64]) -> Vec<f64>,
    dom: &SmoothDomain,
    x: &[f64],
    t: f64,
    h: f64,
    horizon: f64,
    opts: FlowOptions,
) -> Result<(f64, Vec<f64>)> {
    let tol = opts.hit_tolerance;
    let advance = |s: f64| {
        if opts.adaptive {
            rk4_step(f, &rk4_step(f, x, 0.5 * s), 0.5 * s)
        } else {
            rk4_step(f, x, s)
        }
    };
    let (mut lo, mut hi) = (0.0, h);
    let mut x_hi = advance(h);
    let mut d_hi = dom.signed_distance(&x_hi)?;
    let time_tol = 1e-9 * horizon;
    loop {
        if hi - lo <= time_tol && d_hi.abs() <= tol {
            return Ok((hi, x_hi));
        }
        if hi - lo <= f64::EPSILON * (t + hi).abs().max(1.0) {
            return Err(Error::StepUnderflow { t: t + hi });
        }
        let mid = 0.5 * (lo + hi);
        let xm = advance(mid);
        let dm = dom.signed_distance(&xm)?;
        if dm <= 0.0 {
            hi = mid;
            x_hi = xm;
            d_hi = dm;
        } else {
            lo = mid;
        }
    }
}

/// Identifiers of the shipped example fields.
pub const EXAMPLE_IDS: [&str; 6] = ["ex31", "ex32", "ex32_dominating", "ex35", "ex36", "ex37_polar"];

/// Example fields by identifier.
///
/// * `ex31`: `sqrt|1-x|`.
/// * `ex32`: `-sqrt|1-x|` above 3/4, `1-2x` on [1/4, 3/4], `sqrt|x|` below 1/4.
/// * `ex32_dominating`: Lipschitz modification vanishing outside [1/4, 3/4].
/// * `ex35`: `-|sqrt(x) sin(1/x)|` on (0, 1], zero at 0.
/// * `ex36`: `-y / b0(y)`, see [`solve_b0`].
/// * `ex37_polar`: Cartesian push-forward of [`polar_rhs`].
pub fn example_field(id: &str) -> Result<VectorField> {
    Ok(match id {
        "ex31" => VectorField::scalar("ex31", Continuity::Hoelder, |x| {
            let a = (1.0 - x).abs();
            if a <= ROOT_CLAMP {
                0.0
            } else {
                a.sqrt()
            }
        }),
        "ex32" => VectorField::scalar("ex32", Continuity::Hoelder, ex32),
        "ex32_dominating" => VectorField::scalar("ex32_dominating", Continuity::Lipschitz, ex32_dominating),
        "ex35" => VectorField::scalar("ex35", Continuity::Hoelder, ex35),
        "ex36" => VectorField::scalar("ex36", Continuity::LogModulus, ex36),
        "ex37_polar" => VectorField::new(
            "ex37_polar",
            2,
            Continuity::Custom,
            Arc::new(|p: &[f64]| {
                let rho = p[0].hypot(p[1]);
                if rho == 0.0 {
                    return vec![0.0, 0.0];
                }
                let theta = p[1].atan2(p[0]);
                let [dr, dth] = polar_rhs(rho, theta);
                let (c, s) = (p[0] / rho, p[1] / rho);
                vec![dr * c - rho * dth * s, dr * s + rho * dth * c]
            }),
        ),
        other => return Err(Error::UnknownExample(other.to_string())),
    })
}

fn ex32(x: f64) -> f64 {
    if x > 0.75 {
        -(1.0 - x).abs().sqrt()
    } else if x >= 0.25 {
        let v = -2.0 * x + 1.0;
        if (x - 0.5).abs() <= ROOT_CLAMP {
            0.0
        } else {
            v
        }
    } else {
        x.abs().sqrt()
    }
}

fn ex32_dominating(x: f64) -> f64 {
    if !(0.25..=0.75).contains(&x) {
        0.0
    } else if x >= 2.0 / 3.0 {
        4.0 * x - 3.0
    } else if x > 1.0 / 3.0 {
        if (x - 0.5).abs() <= ROOT_CLAMP {
            0.0
        } else {
            -2.0 * x + 1.0
        }
    } else {
        4.0 * x - 1.0
    }
}

fn ex35(x: f64) -> f64 {
    if x <= 0.0 || x > 1.0 {
        return 0.0;
    }
    let j = (1.0 / (x * PI)).round();
    if j >= 1.0 && (x - 1.0 / (j * PI)).abs() <= ROOT_CLAMP {
        return 0.0;
    }
    -(x.sqrt() * (1.0 / x).sin()).abs()
}

/// Largest `y` for which `t^t = exp(1/ln y)` has a root in (0, 1/e].
pub fn b0_domain_max() -> f64 {
    (-E).exp()
}

fn ex36(y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    if y >= b0_domain_max() {
        // Continuous extension: b0 equals 1/e at the end of its domain.
        return -E * y;
    }
    match solve_b0(y) {
        Ok(t) => -y / t,
        Err(_) => 0.0,
    }
}

/// Solves `t^t = exp(1/ln y)` for `t` in (0, 1/e] by bisection on
/// `t ln t = 1/ln y`, where `t ln t` is decreasing.
pub fn solve_b0(y: f64) -> Result<f64> {
    if !(y > 0.0 && y < 1.0) {
        return Err(Error::OutOfRange(format!("solve_b0 needs 0 < y < 1, got {y}")));
    }
    let target = 1.0 / y.ln();
    if target < -1.0 / E {
        return Err(Error::OutOfRange(format!(
            "no root in (0, 1/e] for y = {y} (needs y <= exp(-e) = {})",
            b0_domain_max()
        )));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0 / E);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        // Left of the root t ln t is above the target.
        if mid * mid.ln() > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Partial Bertrand sum `sum_{k=n}^{n+m} 1 / ((k+1) ln k)`, a lower bound on
/// the time the `ex36` flow needs to reach 0 from `1/n`.
pub fn bertrand_escape_bound(n: usize, m: usize) -> f64 {
    (n.max(2)..=n + m).map(|k| 1.0 / ((k as f64 + 1.0) * (k as f64).ln())).sum()
}

/// Right-hand side of the polar system
/// `rho' = sqrt(1-rho) th+ (pi/2 - th)+`, `th' = th+ (pi/2 - th)+ / (1-rho)`.
pub fn polar_rhs(rho: f64, theta: f64) -> [f64; 2] {
    let gate = theta.max(0.0) * (FRAC_PI_2 - theta).max(0.0);
    if gate == 0.0 {
        return [0.0, 0.0];
    }
    let gap = (1.0 - rho).max(0.0);
    if gap == 0.0 {
        return [0.0, 0.0];
    }
    [gap.sqrt() * gate, gate / gap]
}

/// Upper bound `1 - (pi/4 + (1-rho0)^{-1/2})^{-2}` on the radius reached
/// from `(rho0, theta0)`.
pub fn polar_trap_bound(rho0: f64, theta0: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&rho0) || !(theta0 > 0.0 && theta0 < FRAC_PI_2) {
        return Err(Error::OutOfRange(format!("need rho0 in [0,1) and theta0 in (0, pi/2), got ({rho0}, {theta0})")));
    }
    Ok(1.0 - (FRAC_PI_4 + (1.0 - rho0).powf(-0.5)).powi(-2))
}

/// Polar trajectory samples `(t, rho, theta)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarPath {
    pub times: Vec<f64>,
    pub rho: Vec<f64>,
    pub theta: Vec<f64>,
}

/// Integrates the polar system natively. The step is shrunk so that each
/// step moves the angle by at most `0.01` and the radial gap by at most 1%.
pub fn integrate_polar(rho0: f64, theta0: f64, horizon: f64, step: f64) -> Result<PolarPath> {
    if !(step > 0.0 && horizon > 0.0) {
        return Err(Error::InvalidParameter("step and horizon must be positive".into()));
    }
    let f = |p: &[f64]| polar_rhs(p[0], p[1]).to_vec();
    let mut p = vec![rho0, theta0];
    let mut t = 0.0;
    let mut out = PolarPath { times: vec![0.0], rho: vec![rho0], theta: vec![theta0] };
    while t < horizon {
        let [dr, dth] = polar_rhs(p[0], p[1]);
        let gap = 1.0 - p[0];
        let mut h = step.min(horizon - t);
        if dth > 0.0 {
            h = h.min(0.01 / dth);
        }
        if dr > 0.0 {
            h = h.min(0.01 * gap / dr);
        }
        let next = rk4_step(&f, &p, h);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t + h });
        }
        p = next;
        t += h;
        out.times.push(t);
        out.rho.push(p[0]);
        out.theta.push(p[1]);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_values() {
        assert_eq!(example_field("ex31").unwrap().eval(&[0.75]), vec![0.5]);
        assert_eq!(example_field("ex32").unwrap().eval(&[0.5]), vec![0.0]);
        assert_eq!(example_field("ex35").unwrap().eval(&[1.0 / PI]), vec![0.0]);
        assert!(matches!(example_field("ex99"), Err(Error::UnknownExample(_))));
    }

    #[test]
    fn piecewise_fields_are_continuous() {
        for (id, knots) in [("ex32", vec![0.25, 0.75]), ("ex32_dominating", vec![0.25, 1.0 / 3.0, 2.0 / 3.0, 0.75])] {
            let f = example_field(id).unwrap();
            for k in knots {
                let a = f.eval(&[k - 1e-12])[0];
                let b = f.eval(&[k + 1e-12])[0];
                assert!((a - b).abs() < 1e-5, "{id} jumps at {k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_field_is_constant() {
        let f = VectorField::scalar("zero", Continuity::Lipschitz, |_| 0.0);
        let dom = SmoothDomain::interval(0.0, 1.0).unwrap();
        let r = integrate_flow(&f, &[0.3], 5.0, 0.1, Some(&dom)).unwrap();
        assert!(r.hit_time.is_none());
        assert!(r.states.iter().all(|&v| v == 0.3));
        assert_eq!(*r.times.last().unwrap(), 5.0);
    }

    #[test]
    fn ex31_hits_at_one() {
        let f = example_field("ex31").unwrap();
        let dom = SmoothDomain::interval(0.0, 1.0).unwrap();
        let r = integrate_flow(&f, &[0.75], 3.0, 1e-3, Some(&dom)).unwrap();
        let t = r.hit_time.unwrap();
        assert!((t - 1.0).abs() < 1e-6, "hit at {t}");
        let r = integrate_flow(&f, &[0.75], 3.0, 0.0137, Some(&dom)).unwrap();
        assert!((r.hit_time.unwrap() - 1.0).abs() < 1e-6);
        assert!(dom.signed_distance(r.hit_point.as_ref().unwrap()).unwrap().abs() <= HIT_TOLERANCE);
    }

    #[test]
    fn fixed_step_order_on_ex31() {
        // Transversal exit through 0.9: exact time 1 - 2 sqrt(0.1).
        let f = example_field("ex31").unwrap();
        let dom = SmoothDomain::interval(0.0, 0.9).unwrap();
        let opts = FlowOptions { adaptive: false, ..FlowOptions::default() };
        let hit = |h: f64| integrate_flow_with(&f, &[0.75], 1.0, h, Some(&dom), opts).unwrap().hit_time.unwrap();
        let (a, b, c) = (hit(0.04), hit(0.02), hit(0.01));
        let order = ((a - b).abs() / (b - c).abs()).log2();
        assert!(order >= 3.5, "observed order {order}");
        assert!((c - (1.0 - 2.0 * 0.1_f64.sqrt())).abs() < 1e-8);
    }

    #[test]
    fn transversal_hit_is_located() {
        let f = VectorField::scalar("unit", Continuity::Lipschitz, |_| 1.0);
        let dom = SmoothDomain::interval(0.0, 1.0).unwrap();
        let r = integrate_flow(&f, &[0.123], 2.0, 0.1, Some(&dom)).unwrap();
        assert!((r.hit_time.unwrap() - 0.877).abs() < 1e-8);
    }

    #[test]
    fn ex32_no_hit() {
        let f = example_field("ex32").unwrap();
        let dom = SmoothDomain::interval(0.0, 1.0).unwrap();
        let r = integrate_flow(&f, &[0.5], 100.0, 1e-2, Some(&dom)).unwrap();
        assert!(r.hit_time.is_none());
    }

    #[test]
    fn b0_properties() {
        let ys = [1e-9, 1e-6, 1e-4, 1e-3, 0.05];
        let ts: Vec<f64> = ys.iter().map(|&y| solve_b0(y).unwrap()).collect();
        for w in ts.windows(2) {
            assert!(w[0] < w[1]);
        }
        for (&y, &t) in ys.iter().zip(&ts) {
            assert!((t.powf(t) - (1.0 / y.ln()).exp()).abs() < 1e-12);
            // t ln t is decreasing, so the root sits below -1/ln y.
            assert!(t < -1.0 / y.ln());
        }
        assert!(solve_b0(0.0).is_err());
        assert!(solve_b0(1.0).is_err());
        assert!(solve_b0(0.3).is_err());
    }

    #[test]
    fn polar_bound_value() {
        let b = polar_trap_bound(0.0, 0.3).unwrap();
        let a = 1.0 + std::f64::consts::FRAC_PI_4;
        assert!((b - (1.0 - 1.0 / (a * a))).abs() < 1e-15, "{b}");
        assert!((b - 0.686_289).abs() < 1e-6, "{b}");
        assert!(polar_trap_bound(1.0, 0.3).is_err());
        let path = integrate_polar(0.5, 0.3, 50.0, 0.01).unwrap();
        let bound = polar_trap_bound(0.5, 0.3).unwrap();
        assert!(path.rho.iter().all(|&r| r < bound));
    }

    #[test]
    fn polar_push_forward_matches_native() {
        let f = example_field("ex37_polar").unwrap();
        let (rho, th) = (0.4_f64, 0.7_f64);
        let v = f.eval(&[rho * th.cos(), rho * th.sin()]);
        let [dr, dth] = polar_rhs(rho, th);
        let radial = v[0] * th.cos() + v[1] * th.sin();
        let angular = (-v[0] * th.sin() + v[1] * th.cos()) / rho;
        assert!((radial - dr).abs() < 1e-12 && (angular - dth).abs() < 1e-12);
    }
}
