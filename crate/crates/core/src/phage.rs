//! Hasty's phage-lambda switch as a four-mode PDMP on the lysogeny annulus
//! `{r <= |x|^2 <= 1}`, and the border-avoidance ensemble.
//!
//! Ensembles run in chart coordinates `(angle, z)` with
//! `z = ln((s - r) / (1 - s))`, `s = |x|^2`. The chart covers the open
//! annulus, so distances far below `f64` resolution of `s` stay
//! representable (the cutoff makes the chart field bounded, so `z` grows
//! at most linearly and can leave the chart only by becoming non-finite).

use std::sync::Arc;

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SmoothDomain;
use crate::pdmp::{check_boundary_field, BoundaryCheck, PdmpTriplet, DEFAULT_JUMP_CAP};
use crate::rng::{aux_rng, derive_seed, path_rng};

pub const N_MODES: usize = 4;
pub const MODE_NAMES: [&str; N_MODES] = ["e1", "e2", "e3", "e4"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhageRates {
    pub k1: f64,
    pub k_neg1: f64,
    pub k2: f64,
    pub k_neg2: f64,
    pub k3: f64,
    pub k_neg3: f64,
    pub k4: f64,
    pub k_neg4: f64,
    pub k5: f64,
    pub k6: f64,
    pub n_copies: u32,
    /// Lysis threshold on `|x|^2`.
    pub r: f64,
}

impl Default for PhageRates {
    fn default() -> Self {
        Self {
            k1: 1.0,
            k_neg1: 1.0,
            k2: 1.0,
            k_neg2: 1.0,
            k3: 1.0,
            k_neg3: 1.0,
            k4: 1.0,
            k_neg4: 1.0,
            k5: 1.0,
            k6: 1.0,
            n_copies: 5,
            r: 0.1,
        }
    }
}

impl PhageRates {
    pub fn validate(&self) -> Result<()> {
        let k = [
            self.k1, self.k_neg1, self.k2, self.k_neg2, self.k3, self.k_neg3, self.k4, self.k_neg4, self.k5, self.k6,
        ];
        if k.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter("all reaction rates must be positive".into()));
        }
        if self.n_copies == 0 {
            return Err(Error::InvalidParameter("n_copies must be positive".into()));
        }
        if !(self.r > 0.0 && 2.0 * self.r < 1.0 - self.r) {
            return Err(Error::InvalidParameter(format!("r = {} must satisfy 0 < r < 1/3", self.r)));
        }
        Ok(())
    }

    /// Rates drawn log-uniformly from `[0.5, 2]`; copy number and threshold
    /// kept from `self`.
    pub fn randomized<R: Rng>(&self, rng: &mut R) -> Self {
        let mut draw = || (rng.random_range(0.5f64.ln()..2.0f64.ln())).exp();
        Self {
            k1: draw(),
            k_neg1: draw(),
            k2: draw(),
            k_neg2: draw(),
            k3: draw(),
            k_neg3: draw(),
            k4: draw(),
            k_neg4: draw(),
            k5: draw(),
            k6: draw(),
            n_copies: self.n_copies,
            r: self.r,
        }
    }
}

/// `base` followed by `n_random` randomized copies; copy `k` draws its rates
/// from the auxiliary stream of `derive_seed(seed, k)`.
pub fn rate_sweep(base: &PhageRates, n_random: usize, seed: u64) -> Vec<PhageRates> {
    std::iter::once(*base)
        .chain((1..=n_random as u64).map(|k| base.randomized(&mut aux_rng(derive_seed(seed, k), 0))))
        .collect()
}

/// Total jump rate of a mode.
pub fn theta_hat(rates: &PhageRates, mode: usize) -> Result<f64> {
    match mode {
        0 => Ok(rates.k2 + rates.k3),
        1 => Ok(rates.k_neg2 + rates.k4),
        2 => Ok(rates.k_neg3),
        3 => Ok(rates.k_neg4),
        m => Err(Error::UnknownMode(m)),
    }
}

/// C^1 cubic from 0 at `s = r` to 1 at `s = 2r`.
fn ramp(s: f64, r: f64) -> f64 {
    let w = ((s - r) / r).clamp(0.0, 1.0);
    w * w * (3.0 - 2.0 * w)
}

pub fn smooth_theta(rates: &PhageRates, mode: usize, x: &[f64]) -> Result<f64> {
    let s = x[0] * x[0] + x[1] * x[1];
    Ok(theta_hat(rates, mode)? * ramp(s, rates.r))
}

pub fn build_q(rates: &PhageRates) -> Vec<Vec<f64>> {
    let a = rates.k2 + rates.k3;
    let b = rates.k_neg2 + rates.k4;
    vec![
        vec![0.0, rates.k2 / a, rates.k3 / a, 0.0],
        vec![rates.k_neg2 / b, 0.0, 0.0, rates.k4 / b],
        vec![1.0, 0.0, 0.0, 0.0],
        vec![0.0, 1.0, 0.0, 0.0],
    ]
}

/// Mass-action field without the cutoff.
pub fn steady_drift(rates: &PhageRates, mode: usize, x: &[f64]) -> [f64; 2] {
    let transcription = if mode == 1 { rates.n_copies as f64 } else { 0.0 };
    let sq = rates.k1 * x[0] * x[0];
    [-sq - rates.k6 * x[0] + 2.0 * rates.k_neg1 * x[1] + transcription, sq - rates.k_neg1 * x[1]]
}

/// Piecewise-linear cutoff in `s = |x|^2`: zero outside `(r, 1)`, one on
/// `[2r, 1 - r]`.
pub fn chi(s: f64, r: f64) -> f64 {
    if s <= r || s >= 1.0 {
        0.0
    } else if s < 2.0 * r {
        (s - r) / r
    } else if s > 1.0 - r {
        (1.0 - s) / r
    } else {
        1.0
    }
}

pub fn lysis_drift(rates: &PhageRates, x: &[f64]) -> [f64; 2] {
    [-rates.k6 * x[0], -rates.k_neg1 * x[1]]
}

/// Model drift: pure degradation on the lysis disc `s <= r`, cut-off
/// mass action elsewhere.
pub fn drift_eval(rates: &PhageRates, mode: usize, x: &[f64]) -> Result<Vec<f64>> {
    if mode >= N_MODES {
        return Err(Error::UnknownMode(mode));
    }
    let s = x[0] * x[0] + x[1] * x[1];
    if s <= rates.r {
        return Ok(lysis_drift(rates, x).to_vec());
    }
    let c = chi(s, rates.r);
    Ok(steady_drift(rates, mode, x).iter().map(|v| v * c).collect())
}

/// Limit of the drift from inside the annulus; differs from
/// [`drift_eval`] only on the inner circle.
pub fn interior_drift(rates: &PhageRates, mode: usize, x: &[f64]) -> Vec<f64> {
    let s = x[0] * x[0] + x[1] * x[1];
    let c = chi(s, rates.r);
    steady_drift(rates, mode, x).iter().map(|v| v * c).collect()
}

#[derive(Debug, Clone)]
pub struct PhageModel {
    pub rates: PhageRates,
    pub triplet: PdmpTriplet,
    pub domain: SmoothDomain,
}

impl PhageModel {
    pub fn new(rates: PhageRates) -> Result<Self> {
        rates.validate()?;
        let bound = (0..N_MODES).map(|m| theta_hat(&rates, m).unwrap_or(0.0)).fold(0.0, f64::max);
        let triplet = PdmpTriplet::new(
            MODE_NAMES.iter().map(|s| s.to_string()).collect(),
            2,
            Arc::new(move |m, x, _| drift_eval(&rates, m, x).unwrap_or_else(|_| vec![f64::NAN; 2])),
            Arc::new(move |m, x, _| smooth_theta(&rates, m, x).unwrap_or(f64::NAN)),
            bound,
            build_q(&rates),
        )?;
        let domain = SmoothDomain::annulus(vec![0.0, 0.0], rates.r.sqrt(), 1.0)?;
        Ok(Self { rates, triplet, domain })
    }

    /// Chart coordinates `(angle, z)` of a point strictly inside the annulus.
    pub fn to_chart(&self, x: &[f64]) -> Result<[f64; 2]> {
        let s = x[0] * x[0] + x[1] * x[1];
        let r = self.rates.r;
        if !(s > r && s < 1.0) {
            return Err(Error::OutOfRange(format!("start with |x|^2 = {s} is not strictly inside ({r}, 1)")));
        }
        Ok([x[1].atan2(x[0]), ((s - r) / (1.0 - s)).ln()])
    }

    pub fn from_chart(&self, c: [f64; 2]) -> [f64; 2] {
        let (sr, _) = self.gaps(c[1]);
        let rt = (self.rates.r + sr).sqrt();
        [rt * c[0].cos(), rt * c[0].sin()]
    }

    /// `(s - r, 1 - s)` from `z`, each accurate to relative precision.
    fn gaps(&self, z: f64) -> (f64, f64) {
        let w = 1.0 - self.rates.r;
        (w / (1.0 + (-z).exp()), w / (1.0 + z.exp()))
    }

    /// Vector field in chart coordinates.
    pub fn chart_rhs(&self, mode: usize, c: [f64; 2]) -> [f64; 2] {
        let r = self.rates.r;
        let (sr, os) = self.gaps(c[1]);
        let s = r + sr;
        let rt = s.sqrt();
        let (sn, cs) = c[0].sin_cos();
        let x = [rt * cs, rt * sn];
        let b = steady_drift(&self.rates, mode, &x);
        let radial = x[0] * b[0] + x[1] * b[1];
        let tangential = x[0] * b[1] - x[1] * b[0];
        // cutoff and cutoff / ((s - r)(1 - s)) with the vanishing factor cancelled
        let (c_val, c_over) = if sr <= r {
            (sr / r, 1.0 / (r * os))
        } else if os <= r {
            (os / r, 1.0 / (r * sr))
        } else {
            (1.0, 1.0 / (sr * os))
        };
        [c_val * tangential / s, 2.0 * (1.0 - r) * c_over * radial]
    }

    pub fn chart_theta(&self, mode: usize, z: f64) -> f64 {
        let (sr, _) = self.gaps(z);
        let w = (sr / self.rates.r).min(1.0);
        self.theta_hats()[mode] * w * w * (3.0 - 2.0 * w)
    }

    fn theta_hats(&self) -> [f64; N_MODES] {
        let r = &self.rates;
        [r.k2 + r.k3, r.k_neg2 + r.k4, r.k_neg3, r.k_neg4]
    }

    /// `ln` of the distance to the annulus boundary at chart height `z`.
    pub fn log_distance(&self, z: f64) -> f64 {
        let r = self.rates.r;
        let softplus = z.max(0.0) + (-z.abs()).exp().ln_1p();
        let lw = (1.0 - r).ln();
        let (sr, _) = self.gaps(z);
        let rt = (r + sr).sqrt();
        let inner = lw + z - softplus - (rt + r.sqrt()).ln();
        let outer = lw - softplus - (1.0 + rt).ln();
        inner.min(outer)
    }

    /// Checks `min_u <b, normal> <= 0` on both circles with the field seen
    /// from inside the annulus.
    pub fn boundary_check(&self, samples: usize) -> Result<BoundaryCheck> {
        let rates = self.rates;
        check_boundary_field(N_MODES, &|m, x, _| interior_drift(&rates, m, x), &self.domain, samples, &[])
    }

    /// Largest gap on the inner circle between the drift itself and its
    /// interior-side limit.
    pub fn inner_circle_jump(&self, samples: usize) -> f64 {
        let rt = self.rates.r.sqrt();
        let mut worst: f64 = 0.0;
        for i in 0..samples.max(1) {
            let a = std::f64::consts::TAU * i as f64 / samples.max(1) as f64;
            let x = [rt * a.cos(), rt * a.sin()];
            for m in 0..N_MODES {
                let on = drift_eval(&self.rates, m, &x).expect("valid mode");
                let lim = interior_drift(&self.rates, m, &x);
                worst = worst.max((on[0] - lim[0]).hypot(on[1] - lim[1]));
            }
        }
        worst
    }
}

fn rk4_chart(model: &PhageModel, mode: usize, c: [f64; 2], h: f64) -> [f64; 2] {
    let add = |a: [f64; 2], k: [f64; 2], f: f64| [a[0] + f * k[0], a[1] + f * k[1]];
    let k1 = model.chart_rhs(mode, c);
    let k2 = model.chart_rhs(mode, add(c, k1, 0.5 * h));
    let k3 = model.chart_rhs(mode, add(c, k2, 0.5 * h));
    let k4 = model.chart_rhs(mode, add(c, k3, h));
    [
        c[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        c[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartPathSummary {
    pub min_log_distance: f64,
    pub hit: bool,
    pub jumps: usize,
    pub final_mode: usize,
    pub final_chart: [f64; 2],
    pub jump_times_checksum: f64,
}

/// One path in chart coordinates. Same recursion and draw order as
/// [`crate::pdmp::simulate_pdmp_with`]: trapezoid integrated intensity,
/// linear interpolation of the crossing, inverse-CDF post-jump mode.
pub fn simulate_chart_path<R: Rng>(
    model: &PhageModel,
    mode0: usize,
    chart0: [f64; 2],
    horizon: f64,
    step: f64,
    rng: &mut R,
) -> Result<ChartPathSummary> {
    if mode0 >= N_MODES {
        return Err(Error::UnknownMode(mode0));
    }
    let q = &model.triplet.transition();
    let (mut t, mut mode, mut c) = (0.0, mode0, chart0);
    let mut out = ChartPathSummary {
        min_log_distance: model.log_distance(c[1]),
        hit: false,
        jumps: 0,
        final_mode: mode0,
        final_chart: c,
        jump_times_checksum: 0.0,
    };
    let escaped = |c: &[f64; 2]| !(c[0].is_finite() && c[1].is_finite());
    'path: while t < horizon {
        let u: f64 = rng.sample(Open01);
        let threshold = -u.ln();
        let mut lam = 0.0;
        let mut th = model.chart_theta(mode, c[1]);
        loop {
            if t >= horizon {
                break 'path;
            }
            let h = step.min(horizon - t);
            let next = rk4_chart(model, mode, c, h);
            if escaped(&next) {
                out.hit = true;
                out.min_log_distance = f64::NEG_INFINITY;
                c = next;
                break 'path;
            }
            let th_next = model.chart_theta(mode, next[1]);
            let lam_next = lam + 0.5 * h * (th + th_next);
            if lam_next >= threshold {
                let frac = if lam_next > lam { (threshold - lam) / (lam_next - lam) } else { 1.0 };
                let tau = h * frac.clamp(0.0, 1.0);
                if tau > 0.0 {
                    c = rk4_chart(model, mode, c, tau);
                }
                out.min_log_distance = out.min_log_distance.min(model.log_distance(c[1]));
                t += tau;
                if t >= horizon {
                    break 'path;
                }
                let v: f64 = rng.sample(Open01);
                let mut acc = 0.0;
                let mut next_mode = mode;
                for (j, p) in q[mode].iter().enumerate() {
                    if *p <= 0.0 {
                        continue;
                    }
                    acc += p;
                    next_mode = j;
                    if v < acc {
                        break;
                    }
                }
                mode = next_mode;
                out.jumps += 1;
                out.jump_times_checksum += t;
                if out.jumps > DEFAULT_JUMP_CAP {
                    return Err(Error::JumpStorm { cap: DEFAULT_JUMP_CAP });
                }
                continue 'path;
            }
            t += h;
            c = next;
            lam = lam_next;
            th = th_next;
            out.min_log_distance = out.min_log_distance.min(model.log_distance(c[1]));
        }
    }
    out.final_mode = mode;
    out.final_chart = c;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub start: Vec<f64>,
    /// May underflow to 0 even though the log-distance is finite.
    pub min_distance: f64,
    pub min_log_distance: f64,
    pub hit_count: usize,
    pub mean_jumps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BorderReport {
    pub rates: PhageRates,
    pub r: f64,
    pub starts: Vec<Vec<f64>>,
    pub initial_mode: usize,
    pub n_paths: usize,
    pub horizon: f64,
    pub step: f64,
    pub seed: u64,
    pub min_distance: f64,
    pub min_log_distance: f64,
    pub hit_count: usize,
    pub per_start: Vec<StartSummary>,
    pub boundary_check: BoundaryCheck,
    /// Size of the drift jump across the inner circle (the field on the
    /// circle is the lysis field, the interior-side limit is zero).
    pub inner_circle_discontinuity: f64,
    #[serde(skip)]
    pub per_path_min_log_distance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BorderOptions {
    pub horizon: f64,
    pub step: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub initial_mode: usize,
    pub boundary_samples: usize,
}

impl BorderOptions {
    pub fn new(horizon: f64, step: f64, n_paths: usize, seed: u64) -> Self {
        Self { horizon, step, n_paths, seed, initial_mode: 0, boundary_samples: 64 }
    }
}

/// Simulates `n_paths` paths per start and records per-path minima of the
/// distance to the annulus boundary. Path `k` of start `i` uses stream
/// `i * n_paths + k` of the seed.
pub fn run_border_avoidance(model: &PhageModel, starts: &[Vec<f64>], opts: &BorderOptions) -> Result<BorderReport> {
    if !(opts.horizon > 0.0 && opts.step > 0.0) || opts.n_paths == 0 {
        return Err(Error::InvalidParameter("horizon, step and n_paths must be positive".into()));
    }
    let charts = starts.iter().map(|x| model.to_chart(x)).collect::<Result<Vec<_>>>()?;
    let mut per_start = Vec::new();
    let mut per_path = Vec::new();
    for (i, (x0, c0)) in starts.iter().zip(&charts).enumerate() {
        let base = (i * opts.n_paths) as u64;
        let runs = (0..opts.n_paths)
            .into_par_iter()
            .map(|k| {
                let mut rng = path_rng(opts.seed, base + k as u64);
                simulate_chart_path(model, opts.initial_mode, *c0, opts.horizon, opts.step, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let mins: Vec<f64> = runs.iter().map(|p| p.min_log_distance).collect();
        let min_log = mins.iter().copied().fold(f64::INFINITY, f64::min);
        per_start.push(StartSummary {
            start: x0.clone(),
            min_distance: min_log.exp(),
            min_log_distance: min_log,
            hit_count: runs.iter().filter(|p| p.hit).count(),
            mean_jumps: runs.iter().map(|p| p.jumps as f64).sum::<f64>() / runs.len() as f64,
        });
        per_path.push(mins);
    }
    let min_log = per_start.iter().map(|s| s.min_log_distance).fold(f64::INFINITY, f64::min);
    Ok(BorderReport {
        rates: model.rates,
        r: model.rates.r,
        starts: starts.to_vec(),
        initial_mode: opts.initial_mode,
        n_paths: opts.n_paths,
        horizon: opts.horizon,
        step: opts.step,
        seed: opts.seed,
        min_distance: min_log.exp(),
        min_log_distance: min_log,
        hit_count: per_start.iter().map(|s| s.hit_count).sum(),
        per_start,
        boundary_check: model.boundary_check(opts.boundary_samples)?,
        inner_circle_discontinuity: model.inner_circle_jump(opts.boundary_samples),
        per_path_min_log_distance: per_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pdmp::{simulate_pdmp_with, PdmpControls, PdmpOptions};

    fn model() -> PhageModel {
        PhageModel::new(PhageRates::default()).unwrap()
    }

    #[test]
    fn rates_and_q() {
        let r = PhageRates { k2: 2.0, k3: 3.0, k_neg3: 0.7, ..Default::default() };
        assert_eq!(theta_hat(&r, 2).unwrap(), 0.7);
        assert_eq!(theta_hat(&r, 0).unwrap(), 5.0);
        assert!(theta_hat(&r, 4).is_err());
        let q = build_q(&r);
        assert_eq!(q[2], vec![1.0, 0.0, 0.0, 0.0]);
        assert!((q[0][1] - 0.4).abs() < 1e-15);
        assert!(PhageRates { r: 0.34, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn theta_ramp_values() {
        let r = PhageRates::default();
        let at = |s: f64| smooth_theta(&r, 0, &[s.sqrt(), 0.0]).unwrap();
        assert_eq!(at(0.05), 0.0);
        assert!((at(0.3) - 2.0).abs() < 1e-12);
        assert!((at(0.15) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn drift_examples() {
        let r = PhageRates::default();
        assert_eq!(steady_drift(&r, 1, &[0.0, 0.0]), [5.0, 0.0]);
        for m in 0..N_MODES {
            let d = drift_eval(&r, m, &[0.6, 0.8]).unwrap();
            assert!(d[0].abs() < 1e-15 && d[1].abs() < 1e-15);
        }
        let x = [0.1, 0.15];
        assert_eq!(drift_eval(&r, 2, &x).unwrap(), vec![-0.1, -0.15]);
    }

    #[test]
    fn inner_circle_is_discontinuous_and_boundary_is_satisfied() {
        let m = model();
        assert!(m.inner_circle_jump(16) > 0.0);
        let chk = m.boundary_check(64).unwrap();
        assert!(chk.satisfied);
        assert!(chk.worst.value.abs() < 1e-12);
    }

    #[test]
    fn chart_round_trip_and_log_distance() {
        let m = model();
        let x = [0.3, -0.5];
        let c = m.to_chart(&x).unwrap();
        let y = m.from_chart(c);
        assert!((x[0] - y[0]).abs() < 1e-14 && (x[1] - y[1]).abs() < 1e-14);
        let s: f64 = 0.34;
        let d = (s.sqrt() - 0.1f64.sqrt()).min(1.0 - s.sqrt());
        assert!((m.log_distance(m.to_chart(&[s.sqrt(), 0.0]).unwrap()[1]) - d.ln()).abs() < 1e-12);
        // far beyond the resolution of s itself
        assert!((m.log_distance(-200.0) - (-200.0 + 0.9f64.ln() - (2.0 * 0.1f64.sqrt()).ln())).abs() < 1e-9);
    }

    #[test]
    fn chart_field_matches_cartesian_field() {
        let m = model();
        for (mode, x) in [(0, [0.4, 0.3]), (1, [-0.2, 0.3]), (3, [0.1, -0.95])] {
            let c = m.to_chart(&x).unwrap();
            let dc = m.chart_rhs(mode, c);
            let b = drift_eval(&m.rates, mode, &x).unwrap();
            let s = x[0] * x[0] + x[1] * x[1];
            let ds = 2.0 * (x[0] * b[0] + x[1] * b[1]);
            let dz = ds * (1.0 - m.rates.r) / ((s - m.rates.r) * (1.0 - s));
            let dphi = (x[0] * b[1] - x[1] * b[0]) / s;
            assert!((dc[0] - dphi).abs() < 1e-12 && (dc[1] - dz).abs() < 1e-9 * dz.abs().max(1.0));
        }
    }

    #[test]
    fn chart_simulator_agrees_with_generic_simulator() {
        let m = model();
        let x0 = [0.5, 0.5];
        let (h, horizon) = (0.01, 5.0);
        let generic = simulate_pdmp_with(
            &m.triplet,
            &PdmpControls::none(),
            0,
            &x0,
            horizon,
            &PdmpOptions::new(h),
            &mut path_rng(9, 0),
        )
        .unwrap();
        let chart = simulate_chart_path(&m, 0, m.to_chart(&x0).unwrap(), horizon, h, &mut path_rng(9, 0)).unwrap();
        assert_eq!(chart.jumps, generic.jump_count());
        assert_eq!(chart.final_mode, generic.final_mode());
        let sum: f64 = generic.jump_times[1..].iter().sum();
        assert!((sum - chart.jump_times_checksum).abs() < 1e-6, "{sum} {}", chart.jump_times_checksum);
        let y = m.from_chart(chart.final_chart);
        // different coordinates, so only discretization-level agreement
        assert!((y[0] - generic.final_state[0]).abs() < 2e-5 && (y[1] - generic.final_state[1]).abs() < 2e-5);
    }

    #[test]
    fn lysis_disc_decays_exponentially() {
        let m = model();
        let x0 = [0.2, 0.1];
        let p = simulate_pdmp_with(
            &m.triplet,
            &PdmpControls::none(),
            1,
            &x0,
            2.0,
            &PdmpOptions::new(0.01),
            &mut path_rng(1, 0),
        )
        .unwrap();
        assert_eq!(p.jump_count(), 0);
        assert!((p.final_state[0] - 0.2 * (-2.0f64).exp()).abs() < 1e-9);
        assert!((p.final_state[1] - 0.1 * (-2.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn small_ensemble_avoids_border() {
        let m = model();
        let rep = run_border_avoidance(&m, &[vec![0.5, 0.5]], &BorderOptions::new(20.0, 0.02, 50, 3)).unwrap();
        assert_eq!(rep.hit_count, 0);
        assert!(rep.min_distance > 0.0 && rep.min_log_distance.is_finite());
        assert!(run_border_avoidance(&m, &[vec![0.1, 0.1]], &BorderOptions::new(1.0, 0.1, 1, 0)).is_err());
    }
}
