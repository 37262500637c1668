//! Switched piecewise deterministic Markov processes built from a triplet
//! (mode drift, jump intensity, mode transition matrix), their generator,
//! and the boundary viability check.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SmoothDomain;
use crate::linalg::dot;

pub type ModeDriftFn = Arc<dyn Fn(usize, &[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type IntensityFn = Arc<dyn Fn(usize, &[f64], &[f64]) -> f64 + Send + Sync>;
/// Control after a jump: `(mode, post-jump state, time since the jump)`.
pub type JumpControlFn = Arc<dyn Fn(usize, &[f64], f64) -> Vec<f64> + Send + Sync>;

/// Tolerance on row sums of the transition matrix.
pub const ROW_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of jumps in one path.
pub const DEFAULT_JUMP_CAP: usize = 1_000_000;

/// Tolerance of the boundary viability check.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;

#[derive(Clone)]
pub struct PdmpTriplet {
    pub modes: Vec<String>,
    pub dim: usize,
    drift: ModeDriftFn,
    intensity: IntensityFn,
    pub intensity_bound: f64,
    transition: Vec<Vec<f64>>,
}

impl fmt::Debug for PdmpTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PdmpTriplet")
            .field("modes", &self.modes)
            .field("dim", &self.dim)
            .field("intensity_bound", &self.intensity_bound)
            .field("transition", &self.transition)
            .finish()
    }
}

/// Checks one transition row: non-negative, zero diagonal, unit sum.
pub fn validate_row(row: &[f64], index: usize) -> Result<()> {
    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
        return Err(Error::BadRow { row: index, reason: "negative or non-finite entry".into() });
    }
    if row.get(index).is_some_and(|p| *p != 0.0) {
        return Err(Error::BadRow { row: index, reason: "non-zero diagonal".into() });
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::BadRow { row: index, reason: format!("row sums to {s}") });
    }
    Ok(())
}

impl PdmpTriplet {
    pub fn new(
        modes: Vec<String>,
        dim: usize,
        drift: ModeDriftFn,
        intensity: IntensityFn,
        intensity_bound: f64,
        transition: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if transition.len() != modes.len() || transition.iter().any(|r| r.len() != modes.len()) {
            return Err(Error::InvalidParameter("transition matrix must be square over the modes".into()));
        }
        for (i, row) in transition.iter().enumerate() {
            validate_row(row, i)?;
        }
        if !(intensity_bound >= 0.0) {
            return Err(Error::InvalidParameter("intensity bound must be non-negative".into()));
        }
        Ok(Self { modes, dim, drift, intensity, intensity_bound, transition })
    }

    pub fn n_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn drift(&self, mode: usize, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.drift)(mode, x, u)
    }

    pub fn intensity(&self, mode: usize, x: &[f64], u: &[f64]) -> f64 {
        (self.intensity)(mode, x, u)
    }

    /// Checks `0 <= theta <= bound` on sampled points and controls.
    pub fn check_intensity(&self, points: &[Vec<f64>], controls: &[Vec<f64>]) -> Result<()> {
        let empty = vec![Vec::new()];
        let controls = if controls.is_empty() { &empty[..] } else { controls };
        for m in 0..self.n_modes() {
            for x in points {
                for u in controls {
                    let th = self.intensity(m, x, u);
                    if !(th >= 0.0 && th <= self.intensity_bound * (1.0 + 1e-12)) {
                        return Err(Error::InvalidParameter(format!(
                            "intensity {th} outside [0, {}] in mode {m}",
                            self.intensity_bound
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Open-loop controls, one per jump index, with a repeating tail.
#[derive(Clone)]
pub struct PdmpControls {
    pub per_jump: Vec<JumpControlFn>,
    pub tail: JumpControlFn,
}

impl PdmpControls {
    pub fn none() -> Self {
        Self { per_jump: Vec::new(), tail: Arc::new(|_, _, _| Vec::new()) }
    }

    pub fn constant(u: Vec<f64>) -> Self {
        Self { per_jump: Vec::new(), tail: Arc::new(move |_, _, _| u.clone()) }
    }

    pub fn for_jump(&self, n: usize) -> &JumpControlFn {
        self.per_jump.get(n).unwrap_or(&self.tail)
    }
}

fn rk4(f: &dyn Fn(f64, &[f64]) -> Vec<f64>, s: f64, x: &[f64], h: f64) -> Vec<f64> {
    let k1 = f(s, x);
    let y: Vec<f64> = x.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
    let k2 = f(s + 0.5 * h, &y);
    let y: Vec<f64> = x.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
    let k3 = f(s + 0.5 * h, &y);
    let y: Vec<f64> = x.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
    let k4 = f(s + h, &y);
    x.iter()
        .enumerate()
        .map(|(i, a)| a + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

/// One inter-jump segment: flow samples from the jump (or start) to the
/// next jump (or the horizon).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

struct SegmentOutcome {
    /// Elapsed time of the jump since the segment start, if one occurred.
    jump: Option<f64>,
    end_state: Vec<f64>,
    segment: Segment,
}

/// Integrates the flow and `Lambda(s) = int theta` by the trapezoid rule
/// until `Lambda >= threshold` (linear interpolation within the step) or
/// until `max_time` elapses.
#[allow(clippy::too_many_arguments)]
fn run_segment(
    triplet: &PdmpTriplet,
    mode: usize,
    x_start: &[f64],
    control: &dyn Fn(f64) -> Vec<f64>,
    max_time: f64,
    step: f64,
    threshold: f64,
    t_offset: f64,
    record: bool,
) -> Result<SegmentOutcome> {
    let f = |s: f64, y: &[f64]| triplet.drift(mode, y, &control(s));
    let mut s = 0.0;
    let mut x = x_start.to_vec();
    let mut lam = 0.0;
    let mut th = triplet.intensity(mode, &x, &control(0.0));
    let mut seg = Segment { times: vec![t_offset], states: vec![x.clone()] };
    if threshold <= 0.0 {
        return Ok(SegmentOutcome { jump: Some(0.0), end_state: x, segment: seg });
    }
    while s < max_time {
        let h = step.min(max_time - s);
        let x_next = rk4(&f, s, &x, h);
        if x_next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t_offset + s + h });
        }
        let th_next = triplet.intensity(mode, &x_next, &control(s + h));
        let lam_next = lam + 0.5 * h * (th + th_next);
        if lam_next >= threshold {
            let frac = if lam_next > lam { (threshold - lam) / (lam_next - lam) } else { 1.0 };
            let tau = h * frac.clamp(0.0, 1.0);
            let x_jump = if tau > 0.0 { rk4(&f, s, &x, tau) } else { x.clone() };
            seg.times.push(t_offset + s + tau);
            seg.states.push(x_jump.clone());
            return Ok(SegmentOutcome { jump: Some(s + tau), end_state: x_jump, segment: seg });
        }
        s += h;
        x = x_next;
        lam = lam_next;
        th = th_next;
        if record || s >= max_time {
            seg.times.push(t_offset + s);
            seg.states.push(x.clone());
        }
    }
    Ok(SegmentOutcome { jump: None, end_state: x, segment: seg })
}

/// Jump time of a mode started at `x_start` for a given uniform draw, by
/// inversion of the integrated intensity; `None` when no jump occurs
/// before `horizon`.
#[allow(clippy::too_many_arguments)]
pub fn sample_jump_time(
    triplet: &PdmpTriplet,
    mode: usize,
    x_start: &[f64],
    control: &dyn Fn(f64) -> Vec<f64>,
    horizon: f64,
    step: f64,
    uniform_draw: f64,
) -> Result<Option<f64>> {
    if !(uniform_draw > 0.0 && uniform_draw < 1.0) {
        return Err(Error::OutOfRange(format!("uniform draw must lie in (0, 1), got {uniform_draw}")));
    }
    if !(step > 0.0 && horizon > 0.0) {
        return Err(Error::InvalidParameter("step and horizon must be positive".into()));
    }
    let out = run_segment(triplet, mode, x_start, control, horizon, step, -uniform_draw.ln(), 0.0, false)?;
    Ok(out.jump)
}

/// Thinning sampler with the declared intensity bound; a cross-check for
/// [`sample_jump_time`].
pub fn sample_jump_time_thinning<R: Rng>(
    triplet: &PdmpTriplet,
    mode: usize,
    x_start: &[f64],
    control: &dyn Fn(f64) -> Vec<f64>,
    horizon: f64,
    step: f64,
    rng: &mut R,
) -> Result<Option<f64>> {
    let bound = triplet.intensity_bound;
    if bound <= 0.0 {
        return Ok(None);
    }
    let f = |s: f64, y: &[f64]| triplet.drift(mode, y, &control(s));
    let (mut s, mut x) = (0.0, x_start.to_vec());
    loop {
        let e: f64 = rng.sample(Open01);
        let cand = s - e.ln() / bound;
        if cand >= horizon {
            return Ok(None);
        }
        while s < cand {
            let h = step.min(cand - s);
            x = rk4(&f, s, &x, h);
            s += h;
        }
        let u: f64 = rng.sample(Open01);
        if u * bound <= triplet.intensity(mode, &x, &control(s)) {
            return Ok(Some(s));
        }
    }
}

/// Post-jump mode by inverse CDF over the fixed mode order.
pub fn sample_post_jump(triplet: &PdmpTriplet, mode: usize, uniform_draw: f64) -> Result<usize> {
    let row = triplet.transition.get(mode).ok_or(Error::UnknownMode(mode))?;
    validate_row(row, mode)?;
    let mut acc = 0.0;
    let mut last = mode;
    for (j, p) in row.iter().enumerate() {
        if *p <= 0.0 {
            continue;
        }
        acc += p;
        last = j;
        if uniform_draw < acc {
            return Ok(j);
        }
    }
    Ok(last)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdmpPath {
    /// `T_0 = 0 < T_1 < ...`; jump times only, the horizon is not included.
    pub jump_times: Vec<f64>,
    /// Mode on each inter-jump interval (`jump_times.len()` entries).
    pub modes: Vec<usize>,
    pub segments: Vec<Segment>,
    pub horizon: f64,
    pub final_state: Vec<f64>,
}

impl PdmpPath {
    pub fn jump_count(&self) -> usize {
        self.jump_times.len() - 1
    }

    pub fn final_mode(&self) -> usize {
        *self.modes.last().expect("at least one interval")
    }

    /// Time spent in each mode on `[from, horizon]`.
    pub fn occupation_times(&self, n_modes: usize, from: f64) -> Vec<f64> {
        let mut occ = vec![0.0; n_modes];
        for (i, &m) in self.modes.iter().enumerate() {
            let a = self.jump_times[i].max(from);
            let b = self.jump_times.get(i + 1).copied().unwrap_or(self.horizon);
            if b > a {
                occ[m] += b - a;
            }
        }
        occ
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdmpOptions {
    pub step: f64,
    pub jump_cap: usize,
    /// Keep every integration step; otherwise segments hold their end points.
    pub record_segments: bool,
}

impl PdmpOptions {
    pub fn new(step: f64) -> Self {
        Self { step, jump_cap: DEFAULT_JUMP_CAP, record_segments: true }
    }
}

/// Alternates flow, jump-time inversion and post-jump sampling up to
/// `horizon`. Randomness comes from `rng` only, in the order
/// (jump uniform, mode uniform) per jump.
pub fn simulate_pdmp_with<R: Rng>(
    triplet: &PdmpTriplet,
    controls: &PdmpControls,
    mode0: usize,
    x0: &[f64],
    horizon: f64,
    opts: &PdmpOptions,
    rng: &mut R,
) -> Result<PdmpPath> {
    if mode0 >= triplet.n_modes() {
        return Err(Error::UnknownMode(mode0));
    }
    if !(horizon > 0.0 && opts.step > 0.0) {
        return Err(Error::InvalidParameter("horizon and step must be positive".into()));
    }
    let mut path =
        PdmpPath { jump_times: vec![0.0], modes: vec![mode0], segments: Vec::new(), horizon, final_state: Vec::new() };
    let (mut t, mut mode, mut x) = (0.0, mode0, x0.to_vec());
    loop {
        let n = path.jump_times.len() - 1;
        let ctrl = controls.for_jump(n).clone();
        let (m, x_n) = (mode, x.clone());
        let control = move |s: f64| ctrl(m, &x_n, s);
        let u: f64 = rng.sample(Open01);
        let out = run_segment(triplet, mode, &x, &control, horizon - t, opts.step, -u.ln(), t, opts.record_segments)?;
        path.segments.push(out.segment);
        x = out.end_state;
        match out.jump {
            Some(tau) if t + tau < horizon => {
                t += tau;
                let v: f64 = rng.sample(Open01);
                mode = sample_post_jump(triplet, mode, v)?;
                path.jump_times.push(t);
                path.modes.push(mode);
                if path.jump_times.len() - 1 > opts.jump_cap {
                    return Err(Error::JumpStorm { cap: opts.jump_cap });
                }
            }
            _ => break,
        }
    }
    path.final_state = x;
    Ok(path)
}

/// [`simulate_pdmp_with`] on a ChaCha stream seeded by `seed`.
pub fn simulate_pdmp(
    triplet: &PdmpTriplet,
    controls: &PdmpControls,
    mode0: usize,
    x0: &[f64],
    horizon: f64,
    step: f64,
    seed: u64,
) -> Result<PdmpPath> {
    let mut rng = crate::rng::path_rng(seed, 0);
    simulate_pdmp_with(triplet, controls, mode0, x0, horizon, &PdmpOptions::new(step), &mut rng)
}

/// Generator `<b, grad f(mode, .)> + theta sum_j (f(j, x) - f(mode, x)) Q(mode, j)`.
/// The gradient is taken by central differences unless supplied.
pub fn apply_generator(
    triplet: &PdmpTriplet,
    test_fn: &dyn Fn(usize, &[f64]) -> f64,
    gradient: Option<&dyn Fn(usize, &[f64]) -> Vec<f64>>,
    mode: usize,
    x: &[f64],
    control: &[f64],
) -> Result<f64> {
    if mode >= triplet.n_modes() {
        return Err(Error::UnknownMode(mode));
    }
    let grad = match gradient {
        Some(g) => g(mode, x),
        None => crate::geometry::central_gradient(&|y| test_fn(mode, y), x, 1e-6),
    };
    let f0 = test_fn(mode, x);
    let jump: f64 = triplet.transition[mode].iter().enumerate().map(|(j, q)| q * (test_fn(j, x) - f0)).sum();
    Ok(dot(&triplet.drift(mode, x, control), &grad) + triplet.intensity(mode, x, control) * jump)
}

/// Stationary law of the continuous-time mode chain with constant rates
/// `theta` and jump matrix `q`: solves `pi G = 0`, `sum pi = 1`, with
/// `G = diag(theta) (Q - I)`.
pub fn stationary_modes(theta: &[f64], q: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = theta.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let g = theta[i] * (q[i][j] - if i == j { 1.0 } else { 0.0 });
            a[(j, i)] = g;
        }
    }
    for i in 0..n {
        a[(n - 1, i)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;
    let sol = a.lu().solve(&b).ok_or_else(|| Error::InvalidParameter("singular mode generator".into()))?;
    Ok(sol.iter().copied().collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub mode: usize,
    pub point: Vec<f64>,
    /// `min_u <b(mode, x, u), normal(x)>`.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCheck {
    pub satisfied: bool,
    pub worst: Witness,
    pub witnesses: Vec<Witness>,
    pub points_checked: usize,
}

/// Evaluates `min_u <b(mode, x, u), normal(x)>` at `boundary_samples`
/// points per component and per mode with the triplet's drift.
pub fn check_boundary_condition(
    triplet: &PdmpTriplet,
    domain: &SmoothDomain,
    boundary_samples: usize,
    control_grid: &[Vec<f64>],
) -> Result<BoundaryCheck> {
    check_boundary_field(triplet.n_modes(), &|m, x, u| triplet.drift(m, x, u), domain, boundary_samples, control_grid)
}

/// Same as [`check_boundary_condition`] for an arbitrary mode field, e.g.
/// a one-sided limit of a drift that jumps across the boundary.
pub fn check_boundary_field(
    n_modes: usize,
    drift: &dyn Fn(usize, &[f64], &[f64]) -> Vec<f64>,
    domain: &SmoothDomain,
    boundary_samples: usize,
    control_grid: &[Vec<f64>],
) -> Result<BoundaryCheck> {
    let empty = vec![Vec::new()];
    let controls = if control_grid.is_empty() { &empty[..] } else { control_grid };
    let per_component = boundary_samples.max(1);
    let samples = domain.boundary_samples(per_component)?;
    let mut worst: Option<Witness> = None;
    let mut witnesses = Vec::new();
    let mut checked = 0;
    for b in &samples {
        for m in 0..n_modes {
            let value = controls
                .iter()
                .map(|u| dot(&drift(m, &b.foot, u), &b.normal))
                .fold(f64::INFINITY, f64::min);
            checked += 1;
            let w = Witness { mode: m, point: b.foot.clone(), value };
            if value > BOUNDARY_TOLERANCE {
                witnesses.push(w.clone());
            }
            if worst.as_ref().is_none_or(|cur| value > cur.value) {
                worst = Some(w);
            }
        }
    }
    let worst = worst.ok_or(Error::EmptyTube)?;
    Ok(BoundaryCheck { satisfied: witnesses.is_empty(), worst, witnesses, points_checked: checked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_rng;
    use crate::stats::{ks_critical_001, ks_statistic};

    fn two_mode(rate: f64, drift: [f64; 2]) -> PdmpTriplet {
        PdmpTriplet::new(
            vec!["a".into(), "b".into()],
            1,
            Arc::new(move |m, _, _| vec![drift[m]]),
            Arc::new(move |_, _, _| rate),
            rate,
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap()
    }

    #[test]
    fn rows_are_validated() {
        let bad = PdmpTriplet::new(
            vec!["a".into(), "b".into()],
            1,
            Arc::new(|_, _, _| vec![0.0]),
            Arc::new(|_, _, _| 1.0),
            1.0,
            vec![vec![0.5, 0.5], vec![1.0, 0.0]],
        );
        assert!(matches!(bad, Err(Error::BadRow { row: 0, .. })));
    }

    #[test]
    fn zero_intensity_never_jumps() {
        let t = two_mode(0.0, [1.0, -1.0]);
        assert_eq!(sample_jump_time(&t, 0, &[0.0], &|_| vec![], 10.0, 0.1, 0.3).unwrap(), None);
        let p = simulate_pdmp(&t, &PdmpControls::none(), 0, &[0.0], 2.0, 0.1, 1).unwrap();
        assert_eq!(p.jump_count(), 0);
        assert!((p.final_state[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_rate_jump_times_are_exponential() {
        let t = two_mode(2.0, [0.0, 0.0]);
        let mut rng = path_rng(3, 0);
        let s: Vec<f64> = (0..20_000)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                sample_jump_time(&t, 0, &[0.0], &|_| vec![], 100.0, 0.05, u).unwrap().unwrap()
            })
            .collect();
        let d = ks_statistic(&s, |x| 1.0 - (-2.0 * x).exp());
        assert!(d < ks_critical_001(s.len()), "{d}");
    }

    #[test]
    fn thinning_agrees_with_inversion() {
        let t = PdmpTriplet::new(
            vec!["a".into(), "b".into()],
            1,
            Arc::new(|_, _, _| vec![1.0]),
            Arc::new(|_, x, _| x[0].clamp(0.0, 10.0)),
            10.0,
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap();
        let mut rng = path_rng(5, 0);
        let s: Vec<f64> = (0..20_000)
            .map(|_| sample_jump_time_thinning(&t, 0, &[0.0], &|_| vec![], 9.0, 0.01, &mut rng).unwrap().unwrap())
            .collect();
        let d = ks_statistic(&s, |x| 1.0 - (-x * x / 2.0).exp());
        assert!(d < ks_critical_001(s.len()), "{d}");
    }

    #[test]
    fn post_jump_sampling() {
        let t = PdmpTriplet::new(
            vec!["a".into(), "b".into(), "c".into()],
            1,
            Arc::new(|_, _, _| vec![0.0]),
            Arc::new(|_, _, _| 1.0),
            1.0,
            vec![vec![0.0, 0.25, 0.75], vec![1.0, 0.0, 0.0], vec![0.5, 0.5, 0.0]],
        )
        .unwrap();
        assert_eq!(sample_post_jump(&t, 1, 0.999).unwrap(), 0);
        let mut rng = path_rng(1, 0);
        let n = 100_000;
        let mut c = [0usize; 3];
        for _ in 0..n {
            let m = sample_post_jump(&t, 0, rng.sample(Open01)).unwrap();
            assert_ne!(m, 0);
            c[m] += 1;
        }
        let p1 = c[1] as f64 / n as f64;
        assert!((p1 - 0.25).abs() < 3.0 * (0.25 * 0.75 / n as f64).sqrt());
    }

    #[test]
    fn generator_examples() {
        let t = two_mode(1.0, [0.0, 0.0]);
        let f = |m: usize, _: &[f64]| m as f64;
        assert!((apply_generator(&t, &f, None, 0, &[0.3], &[]).unwrap() - 1.0).abs() < 1e-12);
        let t = two_mode(3.7, [2.0, 2.0]);
        let lin = |_: usize, x: &[f64]| 5.0 * x[0];
        assert!((apply_generator(&t, &lin, None, 1, &[0.3], &[]).unwrap() - 10.0).abs() < 1e-6);
    }

    #[test]
    fn stationary_law_of_two_states() {
        let pi = stationary_modes(&[1.0, 3.0], &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!((pi[0] - 0.75).abs() < 1e-12 && (pi[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn boundary_checker_flags_outward_field() {
        let k = SmoothDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let out = check_boundary_field(1, &|_, x, _| x.to_vec(), &k, 32, &[]).unwrap();
        assert!(!out.satisfied);
        assert!((out.worst.value - 1.0).abs() < 1e-12);
        let inw = check_boundary_field(1, &|_, x, _| x.iter().map(|v| -v).collect(), &k, 32, &[]).unwrap();
        assert!(inw.satisfied);
        assert!((inw.worst.value + 1.0).abs() < 1e-12);
    }

    #[test]
    fn jump_storm_is_reported() {
        let t = two_mode(1e4, [0.0, 0.0]);
        let opts = PdmpOptions { jump_cap: 100, ..PdmpOptions::new(1e-3) };
        let r = simulate_pdmp_with(&t, &PdmpControls::none(), 0, &[0.0], 10.0, &opts, &mut path_rng(1, 0));
        assert_eq!(r, Err(Error::JumpStorm { cap: 100 }));
    }

    #[test]
    fn jump_time_refinement_order() {
        // theta = 1 + x^2 along x' = 1 from 0, fixed uniform.
        let t = PdmpTriplet::new(
            vec!["a".into(), "b".into()],
            1,
            Arc::new(|_, _, _| vec![1.0]),
            Arc::new(|_, x, _| 1.0 + x[0] * x[0]),
            f64::INFINITY,
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        )
        .unwrap();
        let u = 0.2f64;
        // Lambda(t) = t + t^3/3 = -ln u, solved by Newton.
        let target = -u.ln();
        let mut s = 1.0;
        for _ in 0..50 {
            s -= (s + s * s * s / 3.0 - target) / (1.0 + s * s);
        }
        let err = |h: f64| (sample_jump_time(&t, 0, &[0.0], &|_| vec![], 10.0, h, u).unwrap().unwrap() - s).abs();
        let (e1, e2) = (err(0.1), err(0.05));
        assert!((e1 / e2).log2() >= 1.5, "{e1} {e2}");
    }
}
