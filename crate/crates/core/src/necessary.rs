//! Outward-velocity diagnostics near the boundary: `b+`, the zeta profile,
//! the distribution function it induces with its generalized inverse, and
//! the dichotomy classifier.
//!
//! `zeta(eps)` is the infimum over interior tube points with distance at
//! most `eps` of `|b+(x) - b+(foot(x))| / distance(x)`. It is sampled, so
//! every profile carries the number of quotient evaluations behind it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::VectorField;
use crate::geometry::{unit_directions, SmoothDomain};
use crate::linalg::dot;

/// Relative growth of zeta over the last grid decade below which the
/// profile counts as bounded.
pub const BOUNDED_GROWTH: f64 = 0.01;

/// Ratio of tail-decade to first-decade mean of the probe that counts as
/// divergence.
pub const DIVERGENCE_RATIO: f64 = 10.0;

/// Rounds of local refinement around the incumbent minimizer.
pub const REFINE_ROUNDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    ZetaBounded,
    AssetaHolds,
    InvarianceExcluded,
    Inconclusive,
}

/// Least-squares tail model `ln ln(1/eps) = c0 + s Z + c1 ln Z` with
/// `Z = ln zeta`. Power laws give `s = 0, c1 = 1`, logarithmic moduli
/// `(ln 1/eps)^a` give `s = 1/a, c1 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailModel {
    pub c0: f64,
    pub s: f64,
    pub c1: f64,
    pub max_residual: f64,
    pub points: usize,
}

impl TailModel {
    /// `ln(1/eps)` at which the modelled profile reaches `exp(z)`.
    pub fn log_inverse(&self, z: f64) -> f64 {
        (self.c0 + self.s * z + self.c1 * z.ln()).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZetaProfile {
    /// Decreasing tube radii; the first entry is `eps0`.
    pub eps_grid: Vec<f64>,
    /// Envelope values, non-decreasing along the grid.
    pub zeta_values: Vec<f64>,
    /// Per-level minima before pooling across levels.
    pub raw_values: Vec<f64>,
    pub zeta_eps0: f64,
    /// Boundary component the profile is restricted to; `None` is the
    /// componentwise minimum.
    pub component: Option<usize>,
    pub evaluations: usize,
    /// Set when a raw level minimum exceeds the envelope by more than 10%.
    pub density_warning: bool,
    pub verdict: Verdict,
    pub beta_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    /// `probe[i][j] = P(beta_grid[i], delta_grid[j])`.
    pub probe: Vec<Vec<f64>>,
    pub tail: Option<TailModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZetaOptions {
    pub samples_per_level: usize,
    pub refine_rounds: usize,
    pub component: Option<usize>,
    pub beta_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
}

impl Default for ZetaOptions {
    fn default() -> Self {
        Self {
            samples_per_level: 64,
            refine_rounds: REFINE_ROUNDS,
            component: None,
            beta_grid: default_beta_grid(),
            delta_grid: default_delta_grid(),
        }
    }
}

pub fn default_beta_grid() -> Vec<f64> {
    vec![1.5, 2.0, 3.0]
}

/// `10^{-k/4}` for `k = 1..=1200`.
pub fn default_delta_grid() -> Vec<f64> {
    (1..=1200).map(|k| 10f64.powf(-(k as f64) / 4.0)).collect()
}

/// `n` log-spaced radii from `hi` down to `lo`.
pub fn log_grid(hi: f64, lo: f64, n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![hi];
    }
    let (a, b) = (hi.ln(), lo.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Positive part of the normal velocity at `x`, using the outward normal at
/// the projection of `x`.
pub fn b_plus(field: &VectorField, domain: &SmoothDomain, x: &[f64]) -> Result<f64> {
    let frame = domain.boundary_frame_in_tube(x)?;
    Ok(dot(&field.eval(x), &frame.normal).max(0.0))
}

/// `b+` at a boundary point. If the field is not finite there, the one-sided
/// limit along the inward normal is Richardson-extrapolated from two steps.
pub fn b_plus_at_foot(field: &VectorField, foot: &[f64], normal: &[f64], h: f64) -> f64 {
    let direct = dot(&field.eval(foot), normal);
    if direct.is_finite() {
        return direct.max(0.0);
    }
    let at = |s: f64| {
        let x: Vec<f64> = foot.iter().zip(normal).map(|(f, n)| f - s * n).collect();
        dot(&field.eval(&x), normal)
    };
    (2.0 * at(0.5 * h) - at(h)).max(0.0)
}

/// The quotient `|b+(x) - b+(foot)| / distance` at an interior tube point.
pub fn outward_quotient(field: &VectorField, domain: &SmoothDomain, x: &[f64]) -> Result<f64> {
    let frame = domain.boundary_frame_in_tube(x)?;
    if frame.distance <= 0.0 {
        return Err(Error::OutsideDomain { distance: frame.distance });
    }
    let inner = dot(&field.eval(x), &frame.normal).max(0.0);
    let at_foot = b_plus_at_foot(field, &frame.foot, &frame.normal, 1e-3 * domain.eps0());
    Ok((inner - at_foot).abs() / frame.distance)
}

/// Largest quotient over `n` tube points with distance at most `eps`.
pub fn sup_quotient(field: &VectorField, domain: &SmoothDomain, eps: f64, n: usize) -> Result<f64> {
    let pts = domain.tube_grid(eps, n)?;
    let mut best: f64 = 0.0;
    for p in &pts {
        best = best.max(outward_quotient(field, domain, &p.x)?);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    d: f64,
    component: usize,
    q: f64,
}

struct Sampler<'a> {
    field: &'a VectorField,
    domain: &'a SmoothDomain,
    pool: Vec<(Vec<f64>, Sample)>,
    evaluations: usize,
}

impl Sampler<'_> {
    fn eval(&mut self, x: &[f64]) -> Result<Option<Sample>> {
        let frame = match self.domain.boundary_frame(x) {
            Ok(f) => f,
            Err(Error::NonUniqueProjection) => return Ok(None),
            Err(e) => return Err(e),
        };
        if !(frame.distance > 0.0) || frame.distance > self.domain.eps0() {
            return Ok(None);
        }
        self.evaluations += 1;
        let inner = dot(&self.field.eval(x), &frame.normal).max(0.0);
        let at_foot = b_plus_at_foot(self.field, &frame.foot, &frame.normal, 1e-3 * self.domain.eps0());
        let q = (inner - at_foot).abs() / frame.distance;
        if !q.is_finite() {
            return Err(Error::NonFinite { t: 0.0 });
        }
        let s = Sample { d: frame.distance, component: self.domain.component_of(&frame), q };
        self.pool.push((x.to_vec(), s));
        Ok(Some(s))
    }
}

fn matches(component: Option<usize>, c: usize) -> bool {
    component.is_none_or(|k| k == c)
}

/// Envelope value at `eps`: per-component minimum over pooled samples with
/// distance at most `eps`, then the minimum over components (or the
/// selected component).
fn envelope(pool: &[(Vec<f64>, Sample)], eps: f64, n_comp: usize, component: Option<usize>) -> Option<f64> {
    let mut per = vec![f64::INFINITY; n_comp.max(1)];
    for (_, s) in pool {
        if s.d <= eps * (1.0 + 1e-12) && matches(component, s.component) {
            let c = s.component.min(per.len() - 1);
            per[c] = per[c].min(s.q);
        }
    }
    let v = per.into_iter().fold(f64::INFINITY, f64::min);
    v.is_finite().then_some(v)
}

/// Sampled zeta profile with default options; see [`zeta_profile_with`].
pub fn zeta_profile(
    field: &VectorField,
    domain: &SmoothDomain,
    eps_grid: &[f64],
    samples_per_level: usize,
) -> Result<ZetaProfile> {
    let opts = ZetaOptions { samples_per_level, ..ZetaOptions::default() };
    zeta_profile_with(field, domain, eps_grid, &opts)
}

/// Samples the tube at every grid radius, refines around the incumbent
/// minimizer, pools the samples and takes the monotone envelope. The
/// profile is then classified with the option grids.
pub fn zeta_profile_with(
    field: &VectorField,
    domain: &SmoothDomain,
    eps_grid: &[f64],
    opts: &ZetaOptions,
) -> Result<ZetaProfile> {
    let eps0 = domain.eps0();
    if eps_grid.iter().any(|&e| !(e > 0.0) || e > eps0 * (1.0 + 1e-12)) {
        return Err(Error::InvalidParameter(format!("eps grid must lie in (0, {eps0}]")));
    }
    let mut grid: Vec<f64> = eps_grid.iter().map(|&e| e.min(eps0)).collect();
    grid.push(eps0);
    grid.sort_by(|a, b| b.total_cmp(a));
    grid.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs());

    let n_comp = domain.boundary_components();
    let mut sampler = Sampler { field, domain, pool: Vec::new(), evaluations: 0 };
    let directions = unit_directions(domain.dim(), 8);
    let mut raw = Vec::with_capacity(grid.len());
    for &eps in &grid {
        let start = sampler.pool.len();
        for p in domain.tube_grid(eps, opts.samples_per_level.max(1))? {
            sampler.eval(&p.x)?;
        }
        for round in 0..opts.refine_rounds {
            let incumbent = sampler
                .pool
                .iter()
                .filter(|(_, s)| s.d <= eps && matches(opts.component, s.component))
                .min_by(|a, b| a.1.q.total_cmp(&b.1.q))
                .cloned();
            let Some((x, s)) = incumbent else { break };
            let radius = 0.5 * s.d * 0.5f64.powi(round as i32);
            for v in &directions {
                let y: Vec<f64> = x.iter().zip(v).map(|(a, b)| a + radius * b).collect();
                if domain.signed_distance(&y).is_ok_and(|d| d > 0.0 && d <= eps) {
                    sampler.eval(&y)?;
                }
            }
        }
        let own = sampler.pool[start..]
            .iter()
            .filter(|(_, s)| matches(opts.component, s.component))
            .map(|(_, s)| s.q)
            .fold(f64::INFINITY, f64::min);
        raw.push(own);
    }

    let mut zeta = Vec::with_capacity(grid.len());
    for &eps in &grid {
        zeta.push(envelope(&sampler.pool, eps, n_comp, opts.component).ok_or(Error::EmptyTube)?);
    }
    let density_warning = raw.iter().zip(&zeta).any(|(r, z)| r.is_finite() && *r > 1.1 * z + 1e-300);
    let mut profile = ZetaProfile {
        zeta_eps0: zeta[0],
        eps_grid: grid,
        zeta_values: zeta,
        raw_values: raw,
        component: opts.component,
        evaluations: sampler.evaluations,
        density_warning,
        verdict: Verdict::Inconclusive,
        beta_grid: opts.beta_grid.clone(),
        delta_grid: opts.delta_grid.clone(),
        probe: Vec::new(),
        tail: None,
    };
    let (verdict, probe, tail) = classify_parts(&profile, &opts.beta_grid, &opts.delta_grid);
    profile.verdict = verdict;
    profile.probe = probe;
    profile.tail = tail;
    Ok(profile)
}

impl ZetaProfile {
    /// Envelope value at an arbitrary radius inside the sampled range, by
    /// log-log interpolation between grid points.
    pub fn zeta_at(&self, eps: f64) -> f64 {
        let g = &self.eps_grid;
        let z = &self.zeta_values;
        if eps >= g[0] {
            return z[0];
        }
        let last = g.len() - 1;
        if eps <= g[last] {
            return z[last];
        }
        let i = g.iter().position(|&e| e <= eps).unwrap_or(last);
        let (e0, e1, z0, z1) = (g[i - 1], g[i], z[i - 1], z[i]);
        if z0 > 0.0 && z1 > 0.0 {
            let w = (eps.ln() - e0.ln()) / (e1.ln() - e0.ln());
            (z0.ln() + w * (z1.ln() - z0.ln())).exp()
        } else {
            let w = (eps.ln() - e0.ln()) / (e1.ln() - e0.ln());
            z0 + w * (z1 - z0)
        }
    }

    /// `sup { eps in sampled range : zeta(eps) >= level }`, or `None` when
    /// the sampled profile never reaches `level`.
    pub fn radius_reaching(&self, level: f64) -> Option<f64> {
        let g = &self.eps_grid;
        let z = &self.zeta_values;
        if z[0] >= level {
            return Some(g[0]);
        }
        let i = z.iter().position(|&v| v >= level)?;
        let (e0, e1, z0, z1) = (g[i - 1], g[i], z[i - 1], z[i]);
        if z1 <= z0 {
            return Some(e1);
        }
        let w = if z0 > 0.0 {
            (level.ln() - z0.ln()) / (z1.ln() - z0.ln())
        } else {
            (level - z0) / (z1 - z0)
        };
        Some((e0.ln() + w * (e1.ln() - e0.ln())).exp())
    }
}

/// Generalized inverse of `F(r) = 1 - zeta(eps0)/zeta(1/r)` on
/// `[1/eps0, inf)`. Levels beyond the sampled range are capped at
/// `1/eps_min`.
pub fn f_zeta_inverse(profile: &ZetaProfile, p: f64) -> Result<f64> {
    if profile.verdict == Verdict::ZetaBounded {
        return Err(Error::BoundedZeta);
    }
    if !(0.0..1.0).contains(&p) {
        return Err(Error::OutOfRange(format!("p must lie in [0, 1), got {p}")));
    }
    let level = profile.zeta_eps0 / (1.0 - p);
    let eps_min = *profile.eps_grid.last().expect("non-empty grid");
    Ok(1.0 / profile.radius_reaching(level).unwrap_or(eps_min))
}

/// `ln F^{-1}(1 - delta)` from the sampled profile, or from the tail model
/// beyond the sampled range. `None` when neither applies.
fn log_inverse_tail(profile: &ZetaProfile, tail: Option<&TailModel>, delta: f64) -> Option<f64> {
    let level = profile.zeta_eps0 / delta;
    if let Some(eps) = profile.radius_reaching(level) {
        return Some(-eps.ln());
    }
    tail.map(|m| m.log_inverse(level.ln()))
}

/// Fits the tail model on grid points from the last three decades where
/// `zeta > 1.5`.
pub fn fit_tail(profile: &ZetaProfile) -> Option<TailModel> {
    let eps_min = *profile.eps_grid.last()?;
    let pts: Vec<(f64, f64)> = profile
        .eps_grid
        .iter()
        .zip(&profile.zeta_values)
        .filter(|(e, z)| **e <= 1e3 * eps_min && **e < 1.0 && **z > 1.5)
        .map(|(e, z)| (z.ln(), (-e.ln()).ln()))
        .collect();
    if pts.len() < 4 {
        return None;
    }
    let a = DMatrix::from_fn(pts.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => pts[i].0,
        _ => pts[i].0.ln(),
    });
    let y = DVector::from_iterator(pts.len(), pts.iter().map(|p| p.1));
    let c = a.clone().svd(true, true).solve(&y, 1e-14).ok()?;
    let resid = &a * &c - &y;
    Some(TailModel { c0: c[0], s: c[1], c1: c[2], max_residual: resid.amax(), points: pts.len() })
}

fn log_mean_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + (v.iter().map(|x| (x - m).exp()).sum::<f64>() / v.len() as f64).ln()
}

/// Largest residual of the tail fit still trusted for extrapolation.
const TAIL_FIT_TOLERANCE: f64 = 0.05;

fn classify_parts(
    profile: &ZetaProfile,
    beta_grid: &[f64],
    delta_grid: &[f64],
) -> (Verdict, Vec<Vec<f64>>, Option<TailModel>) {
    let g = &profile.eps_grid;
    let eps_min = g[g.len() - 1];
    let z_min = profile.zeta_values[g.len() - 1];
    let z_dec = profile.zeta_at((10.0 * eps_min).min(g[0]));
    if z_min <= 0.0 || z_min <= z_dec * (1.0 + BOUNDED_GROWTH) {
        return (Verdict::ZetaBounded, Vec::new(), None);
    }
    let tail = fit_tail(profile).filter(|m| m.max_residual <= TAIL_FIT_TOLERANCE);
    let mut probe = Vec::with_capacity(beta_grid.len());
    let mut log_probe = Vec::with_capacity(beta_grid.len());
    for &beta in beta_grid {
        let row: Vec<f64> = delta_grid
            .iter()
            .map(|&d| {
                let w = -d.ln();
                match log_inverse_tail(profile, tail.as_ref(), d) {
                    Some(li) if li > 0.0 => -w + beta * w.ln() + li.ln(),
                    _ => f64::NAN,
                }
            })
            .collect();
        probe.push(row.iter().map(|l| l.exp()).collect());
        log_probe.push(row);
    }
    let d_first = delta_grid.first().copied().unwrap_or(1.0);
    let d_last = delta_grid.last().copied().unwrap_or(1.0);
    if !(d_last < d_first / 10.0) {
        return (Verdict::Inconclusive, probe, tail);
    }
    let first: Vec<usize> = (0..delta_grid.len()).filter(|&j| delta_grid[j] >= d_first / 10.0).collect();
    let last: Vec<usize> = (0..delta_grid.len()).filter(|&j| delta_grid[j] <= d_last * 10.0).collect();
    let mut all_divergent = true;
    let mut some_bounded = false;
    for row in &log_probe {
        let pick = |idx: &[usize]| -> Option<Vec<f64>> {
            let v: Vec<f64> = idx.iter().map(|&j| row[j]).collect();
            v.iter().all(|x| !x.is_nan()).then_some(v)
        };
        match (pick(&first), pick(&last)) {
            (Some(a), Some(b)) => {
                let (ma, mb) = (log_mean_exp(&a), log_mean_exp(&b));
                if mb - ma > DIVERGENCE_RATIO.ln() {
                    continue;
                }
                all_divergent = false;
                if mb <= ma {
                    some_bounded = true;
                }
            }
            _ => all_divergent = false,
        }
    }
    let verdict = if beta_grid.is_empty() {
        Verdict::Inconclusive
    } else if all_divergent {
        Verdict::AssetaHolds
    } else if some_bounded {
        Verdict::InvarianceExcluded
    } else {
        Verdict::Inconclusive
    };
    (verdict, probe, tail)
}

/// Dichotomy verdict for a computed profile on the given grids.
pub fn dichotomy_classify(profile: &ZetaProfile, beta_grid: &[f64], delta_grid: &[f64]) -> Verdict {
    if beta_grid.iter().any(|&b| !(b > 1.0)) {
        return Verdict::Inconclusive;
    }
    classify_parts(profile, beta_grid, delta_grid).0
}

/// Radii `eps^j = sup { eps : zeta(eps) >= max(j, j zeta(eps0)) }` and the
/// partial escape times `t_k = sum_{j=n}^{k} (ln eps^j - ln eps^{j+1}) / j`,
/// continued while `eps^{k+1}` stays inside the sampled range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeSchedule {
    pub start: usize,
    pub radii: Vec<f64>,
    pub times: Vec<f64>,
}

impl EscapeSchedule {
    pub fn total_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

pub fn escape_schedule(profile: &ZetaProfile, n: usize) -> Result<EscapeSchedule> {
    if n == 0 {
        return Err(Error::InvalidParameter("escape schedule starts at n >= 1".into()));
    }
    let level = |j: usize| (j as f64).max(j as f64 * profile.zeta_eps0);
    let first = profile
        .radius_reaching(level(n))
        .ok_or_else(|| Error::OutOfRange(format!("zeta never reaches level {} in the sampled range", level(n))))?;
    let mut radii = vec![first];
    let mut times = Vec::new();
    let mut t = 0.0;
    let mut j = n;
    while let Some(next) = profile.radius_reaching(level(j + 1)) {
        t += (radii[radii.len() - 1].ln() - next.ln()) / j as f64;
        times.push(t);
        radii.push(next);
        j += 1;
        if j > n + 1_000_000 {
            break;
        }
    }
    Ok(EscapeSchedule { start: n, radii, times })
}
