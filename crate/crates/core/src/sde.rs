//! Controlled diffusions `dX = b(X,u) dt + sigma(X,u) dW` by Euler–Maruyama,
//! the shaken variant with coefficients evaluated at `X + delta^2 e`, and
//! moment estimates.

use std::fmt;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::VectorField;
use crate::linalg::{dist, dot, norm};
use crate::rng::{aux_rng, path_rng};
use crate::stats::Estimate;

pub type DriftFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
/// Diffusion matrix, `dim x noise_dim`, row-major.
pub type DiffusionFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type FeedbackFn = Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>;

/// Declared sup norms and Lipschitz constants of the coefficients. The
/// diffusion norms use the Frobenius norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientNorms {
    pub drift_sup: f64,
    pub diffusion_sup: f64,
    pub drift_lipschitz: f64,
    pub diffusion_lipschitz: f64,
}

#[derive(Clone)]
pub struct ControlledCoefficients {
    pub dim: usize,
    pub noise_dim: usize,
    drift: DriftFn,
    diffusion: DiffusionFn,
    pub control_grid: Vec<Vec<f64>>,
    pub norms: CoefficientNorms,
}

impl fmt::Debug for ControlledCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlledCoefficients")
            .field("dim", &self.dim)
            .field("noise_dim", &self.noise_dim)
            .field("controls", &self.control_grid.len())
            .field("norms", &self.norms)
            .finish()
    }
}

impl ControlledCoefficients {
    pub fn new(
        dim: usize,
        noise_dim: usize,
        drift: DriftFn,
        diffusion: DiffusionFn,
        control_grid: Vec<Vec<f64>>,
        norms: CoefficientNorms,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        let control_grid = if control_grid.is_empty() { vec![Vec::new()] } else { control_grid };
        Ok(Self { dim, noise_dim, drift, diffusion, control_grid, norms })
    }

    /// Uncontrolled field with additive noise `sigma * I`.
    pub fn from_field(field: &VectorField, sigma: f64, norms: CoefficientNorms) -> Self {
        let dim = field.dim;
        let f = field.clone();
        Self {
            dim,
            noise_dim: dim,
            drift: Arc::new(move |x, _| f.eval(x)),
            diffusion: Arc::new(move |_, _| scaled_identity(dim, sigma)),
            control_grid: vec![Vec::new()],
            norms: CoefficientNorms { diffusion_sup: sigma.abs() * (dim as f64).sqrt(), diffusion_lipschitz: 0.0, ..norms },
        }
    }

    /// `b(x) = -theta x`, `sigma = s I`. Unbounded drift, so the declared
    /// drift sup is infinite.
    pub fn ornstein_uhlenbeck(dim: usize, theta: f64, s: f64) -> Self {
        Self {
            dim,
            noise_dim: dim,
            drift: Arc::new(move |x, _| x.iter().map(|v| -theta * v).collect()),
            diffusion: Arc::new(move |_, _| scaled_identity(dim, s)),
            control_grid: vec![Vec::new()],
            norms: CoefficientNorms {
                drift_sup: f64::INFINITY,
                diffusion_sup: s.abs() * (dim as f64).sqrt(),
                drift_lipschitz: theta.abs(),
                diffusion_lipschitz: 0.0,
            },
        }
    }

    pub fn drift(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.drift)(x, u)
    }

    pub fn diffusion(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        (self.diffusion)(x, u)
    }

    /// Checks the declared norms against sampled values and difference
    /// quotients over `points` and the whole control grid.
    pub fn check_declared(&self, points: &[Vec<f64>]) -> Result<()> {
        let n = &self.norms;
        for u in &self.control_grid {
            for (i, x) in points.iter().enumerate() {
                let b = self.drift(x, u);
                let s = self.diffusion(x, u);
                if norm(&b) > n.drift_sup * (1.0 + 1e-6) {
                    return Err(Error::InvalidParameter(format!("drift norm {} exceeds declared {}", norm(&b), n.drift_sup)));
                }
                if norm(&s) > n.diffusion_sup * (1.0 + 1e-6) {
                    return Err(Error::InvalidParameter(format!(
                        "diffusion norm {} exceeds declared {}",
                        norm(&s),
                        n.diffusion_sup
                    )));
                }
                for y in &points[i + 1..] {
                    let h = dist(x, y);
                    if h == 0.0 {
                        continue;
                    }
                    let qb = dist(&b, &self.drift(y, u)) / h;
                    let qs = dist(&s, &self.diffusion(y, u)) / h;
                    if qb > n.drift_lipschitz * (1.0 + 1e-3) || qs > n.diffusion_lipschitz * (1.0 + 1e-3) {
                        return Err(Error::InvalidParameter(format!(
                            "difference quotient ({qb}, {qs}) exceeds declared Lipschitz constants"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// A constant valid in all three moment and stability estimates up to
    /// `horizon`, derived from the declared norms with Doob's inequality and
    /// Gronwall's lemma:
    /// `E sup |X|^2 <= 3|x|^2 + 3T^2 |b|^2 + 12T |sigma|^2`, and
    /// `E sup |X^x - X^y|^2 <= 3|x-y|^2 exp((3T Lb^2 + 12 Ls^2) T)`.
    pub fn lambda0(&self, horizon: f64) -> f64 {
        let n = &self.norms;
        let (b, s, lb, ls) = (n.drift_sup, n.diffusion_sup, n.drift_lipschitz, n.diffusion_lipschitz);
        let t = horizon;
        3f64.max((6.0 * b * b + 12.0 * s * s).sqrt())
            .max(3.0 * t * lb * lb + 12.0 * ls * ls)
            .max((6.0 * t * t * lb * lb + 24.0 * t * ls * ls).sqrt())
    }

    /// `lambda0 exp(lambda0 T)`.
    pub fn growth_constant(&self, horizon: f64) -> f64 {
        let l = self.lambda0(horizon);
        l * (l * horizon).exp()
    }
}

pub fn scaled_identity(dim: usize, s: f64) -> Vec<f64> {
    let mut m = vec![0.0; dim * dim];
    for i in 0..dim {
        m[i * dim + i] = s;
    }
    m
}

#[derive(Clone)]
pub enum ControlPolicy {
    Constant(Vec<f64>),
    /// `values[i]` applies on `[times[i], times[i+1])`; the last value holds
    /// to the horizon.
    PiecewiseConstant { times: Vec<f64>, values: Vec<Vec<f64>> },
    /// Outputs are snapped to the nearest control-grid point.
    Feedback { name: String, f: FeedbackFn },
}

impl fmt::Debug for ControlPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

impl ControlPolicy {
    pub fn none() -> Self {
        ControlPolicy::Constant(Vec::new())
    }

    pub fn label(&self) -> String {
        match self {
            ControlPolicy::Constant(u) => format!("constant{u:?}"),
            ControlPolicy::PiecewiseConstant { values, .. } => format!("piecewise[{} pieces]", values.len()),
            ControlPolicy::Feedback { name, .. } => format!("feedback:{name}"),
        }
    }

    pub fn control(&self, t: f64, x: &[f64], grid: &[Vec<f64>]) -> Vec<f64> {
        match self {
            ControlPolicy::Constant(u) => u.clone(),
            ControlPolicy::PiecewiseConstant { times, values } => {
                let i = times.iter().rposition(|&s| s <= t).unwrap_or(0);
                values[i.min(values.len() - 1)].clone()
            }
            ControlPolicy::Feedback { f, .. } => quantize(&f(t, x), grid),
        }
    }
}

/// Nearest grid point; the raw value when the grid is empty or has no
/// matching dimension.
pub fn quantize(u: &[f64], grid: &[Vec<f64>]) -> Vec<f64> {
    grid.iter()
        .filter(|g| g.len() == u.len())
        .min_by(|a, b| dist(a, u).total_cmp(&dist(b, u)))
        .cloned()
        .unwrap_or_else(|| u.to_vec())
}

#[derive(Clone)]
pub enum Direction {
    Fixed(Vec<f64>),
    /// One uniform unit vector per path from the auxiliary stream.
    RandomPerPath,
    Function(Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>),
}

#[derive(Clone)]
pub struct ShakenDirection {
    pub delta: f64,
    pub e: Direction,
}

impl ShakenDirection {
    pub fn random(delta: f64) -> Self {
        Self { delta, e: Direction::RandomPerPath }
    }
}

/// Euler–Maruyama path on the uniform grid `t_k = k h`, `h = T / ceil(T / step)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdePath {
    pub dim: usize,
    pub times: Vec<f64>,
    /// Row-major states, one row per time.
    pub states: Vec<f64>,
}

impl SdePath {
    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    /// `max_k |X_k|^2`.
    pub fn sup_norm_sq(&self) -> f64 {
        (0..self.len()).map(|i| dot(self.state(i), self.state(i))).fold(0.0, f64::max)
    }

    /// `max_k |X_k - Y_k|` against a path on the same grid.
    pub fn sup_distance(&self, other: &SdePath) -> f64 {
        (0..self.len().min(other.len())).map(|i| dist(self.state(i), other.state(i))).fold(0.0, f64::max)
    }
}

fn grid(horizon: f64, step: f64) -> Result<(usize, f64)> {
    if !(horizon > 0.0 && step > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("need positive horizon and step, got ({horizon}, {step})")));
    }
    let n = (horizon / step).ceil().max(1.0) as usize;
    Ok((n, horizon / n as f64))
}

fn unit_vector(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|c| c / n).collect();
        }
    }
}

/// Core stepper. `shift(t)` is added to the state before the coefficients
/// are evaluated; `observe(k, t, x)` sees every grid state.
#[allow(clippy::too_many_arguments)]
fn run_em(
    coeffs: &ControlledCoefficients,
    policy: &ControlPolicy,
    x0: &[f64],
    horizon: f64,
    step: f64,
    noise: &mut ChaCha8Rng,
    shift: &dyn Fn(f64) -> Option<Vec<f64>>,
    observe: &mut dyn FnMut(usize, f64, &[f64]),
) -> Result<Vec<f64>> {
    if x0.len() != coeffs.dim {
        return Err(Error::InvalidParameter(format!("x0 has dimension {}, coefficients {}", x0.len(), coeffs.dim)));
    }
    let (n, h) = grid(horizon, step)?;
    let sq = h.sqrt();
    let (dim, m) = (coeffs.dim, coeffs.noise_dim);
    let mut x = x0.to_vec();
    let mut xi = vec![0.0; m];
    observe(0, 0.0, &x);
    for k in 0..n {
        let t = k as f64 * h;
        let u = policy.control(t, &x, &coeffs.control_grid);
        let y = match shift(t) {
            Some(s) => x.iter().zip(&s).map(|(a, b)| a + b).collect(),
            None => x.clone(),
        };
        let b = coeffs.drift(&y, &u);
        let s = coeffs.diffusion(&y, &u);
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(noise);
        }
        for i in 0..dim {
            let mut dw = 0.0;
            for j in 0..m {
                dw += s[i * m + j] * xi[j];
            }
            x[i] += b[i] * h + sq * dw;
        }
        let t_next = (k + 1) as f64 * h;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t_next });
        }
        observe(k + 1, t_next, &x);
    }
    Ok(x)
}

fn collect_path(
    coeffs: &ControlledCoefficients,
    policy: &ControlPolicy,
    x0: &[f64],
    horizon: f64,
    step: f64,
    noise: &mut ChaCha8Rng,
    shift: &dyn Fn(f64) -> Option<Vec<f64>>,
) -> Result<SdePath> {
    let mut path = SdePath { dim: coeffs.dim, times: Vec::new(), states: Vec::new() };
    run_em(coeffs, policy, x0, horizon, step, noise, shift, &mut |_, t, x| {
        path.times.push(t);
        path.states.extend_from_slice(x);
    })?;
    Ok(path)
}

/// Runs a path without storing it; `observe(k, t, x)` sees every grid state.
pub fn simulate_observed(
    coeffs: &ControlledCoefficients,
    policy: &ControlPolicy,
    x0: &[f64],
    horizon: f64,
    step: f64,
    noise: &mut ChaCha8Rng,
    observe: &mut dyn FnMut(usize, f64, &[f64]),
) -> Result<Vec<f64>> {
    run_em(coeffs, policy, x0, horizon, step, noise, &|_| None, observe)
}

/// Euler–Maruyama path driven by `noise`.
pub fn simulate_path(
    coeffs: &ControlledCoefficients,
    policy: &ControlPolicy,
    x0: &[f64],
    horizon: f64,
    step: f64,
    noise: &mut ChaCha8Rng,
) -> Result<SdePath> {
    collect_path(coeffs, policy, x0, horizon, step, noise, &|_| None)
}

/// Shaken path: coefficients are evaluated at `X + delta^2 e(t)`. `aux`
/// supplies the random direction so `noise` stays paired with the base path.
#[allow(clippy::too_many_arguments)]
pub fn simulate_shaken_path(
    coeffs: &ControlledCoefficients,
    policy: &ControlPolicy,
    shaken: &ShakenDirection,
    x0: &[f64],
    horizon: f64,
    step: f64,
    noise: &mut ChaCha8Rng,
    aux: &mut ChaCha8Rng,
) -> Result<SdePath> {
    let d2 = shaken.delta * shaken.delta;
    let fixed = match &shaken.e {
        Direction::Fixed(v) => Some(clamp_to_ball(v)),
        Direction::RandomPerPath => Some(unit_vector(coeffs.dim, aux)),
        Direction::Function(_) => None,
    };
    let shift = |t: f64| -> Option<Vec<f64>> {
        let e = match (&fixed, &shaken.e) {
            (Some(v), _) => v.clone(),
            (None, Direction::Function(f)) => clamp_to_ball(&f(t)),
            _ => unreachable!(),
        };
        Some(e.into_iter().map(|c| d2 * c).collect())
    };
    collect_path(coeffs, policy, x0, horizon, step, noise, &shift)
}

fn clamp_to_ball(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n > 1.0 {
        v.iter().map(|c| c / n).collect()
    } else {
        v.to_vec()
    }
}

/// `E[max_k |X_k|^2]` with its error bar and the derived bound
/// `lambda0 exp(lambda0 T) (1 + |x0|^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub estimate: Estimate,
    pub lambda0: f64,
    pub bound: f64,
    pub within_bound: bool,
}

pub fn estimate_sup_moment(
    coeffs: &ControlledCoefficients,
    policy: &ControlPolicy,
    x0: &[f64],
    horizon: f64,
    n_paths: usize,
    step: f64,
    seed: u64,
) -> Result<MomentEstimate> {
    let values: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut noise = path_rng(seed, i);
            let mut sup: f64 = 0.0;
            run_em(coeffs, policy, x0, horizon, step, &mut noise, &|_| None, &mut |_, _, x| {
                sup = sup.max(dot(x, x));
            })?;
            Ok(sup)
        })
        .collect::<Result<_>>()?;
    let estimate = Estimate::from_samples(&values);
    let lambda0 = coeffs.lambda0(horizon);
    let bound = coeffs.growth_constant(horizon) * (1.0 + dot(x0, x0));
    Ok(MomentEstimate { estimate, lambda0, bound, within_bound: estimate.mean <= bound })
}

/// `E[max_k |X^delta_k - X_k|]` over `n_paths` pairs. With `paired` the two
/// paths share their increments; otherwise the shaken path uses the
/// increments of an unrelated path index.
#[allow(clippy::too_many_arguments)]
pub fn shaken_deviation(
    coeffs: &ControlledCoefficients,
    policy: &ControlPolicy,
    shaken: &ShakenDirection,
    x0: &[f64],
    horizon: f64,
    step: f64,
    n_paths: usize,
    seed: u64,
    paired: bool,
) -> Result<Estimate> {
    let values: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let base = simulate_path(coeffs, policy, x0, horizon, step, &mut path_rng(seed, i))?;
            let j = if paired { i } else { i + n_paths as u64 };
            let sh = simulate_shaken_path(
                coeffs,
                policy,
                shaken,
                x0,
                horizon,
                step,
                &mut path_rng(seed, j),
                &mut aux_rng(seed, i),
            )?;
            Ok(base.sup_distance(&sh))
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&values))
}

/// `E[max_k |X^x_k - X^y_k|]` with shared increments.
#[allow(clippy::too_many_arguments)]
pub fn start_deviation(
    coeffs: &ControlledCoefficients,
    policy: &ControlPolicy,
    x: &[f64],
    y: &[f64],
    horizon: f64,
    step: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Estimate> {
    let values: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let a = simulate_path(coeffs, policy, x, horizon, step, &mut path_rng(seed, i))?;
            let b = simulate_path(coeffs, policy, y, horizon, step, &mut path_rng(seed, i))?;
            Ok(a.sup_distance(&b))
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&values))
}

/// Generic path functional: `f(path)` averaged over `n_paths` seeded paths.
pub fn path_functional(
    coeffs: &ControlledCoefficients,
    policy: &ControlPolicy,
    x0: &[f64],
    horizon: f64,
    step: f64,
    n_paths: usize,
    seed: u64,
    f: &(dyn Fn(&SdePath) -> f64 + Sync),
) -> Result<Estimate> {
    let values: Vec<f64> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| Ok(f(&simulate_path(coeffs, policy, x0, horizon, step, &mut path_rng(seed, i))?)))
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{example_field, integrate_flow_with, FlowOptions};

    fn bm(dim: usize) -> ControlledCoefficients {
        ControlledCoefficients::ornstein_uhlenbeck(dim, 0.0, 1.0)
    }

    #[test]
    fn zero_noise_matches_euler() {
        let f = example_field("ex32").unwrap();
        let c = ControlledCoefficients::from_field(&f, 0.0, CoefficientNorms {
            drift_sup: 1.0,
            diffusion_sup: 0.0,
            drift_lipschitz: f64::INFINITY,
            diffusion_lipschitz: 0.0,
        });
        let p = simulate_path(&c, &ControlPolicy::none(), &[0.3], 1.0, 0.01, &mut path_rng(1, 0)).unwrap();
        let mut x = 0.3;
        for _ in 0..100 {
            x += 0.01 * f.eval(&[x])[0];
        }
        assert!((p.last_state()[0] - x).abs() < 1e-14);
        // Same grid, RK4 reference agrees to first order.
        let opts = FlowOptions { adaptive: false, ..FlowOptions::default() };
        let r = integrate_flow_with(&f, &[0.3], 1.0, 0.01, None, opts).unwrap();
        assert!((r.last_state()[0] - x).abs() < 1e-2);
    }

    #[test]
    fn fixed_seed_is_bitwise_reproducible() {
        let c = bm(2);
        let a = simulate_path(&c, &ControlPolicy::none(), &[0.0, 0.0], 1.0, 0.01, &mut path_rng(9, 4)).unwrap();
        let b = simulate_path(&c, &ControlPolicy::none(), &[0.0, 0.0], 1.0, 0.01, &mut path_rng(9, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn brownian_second_moment() {
        let c = bm(2);
        let f = |p: &SdePath| dot(p.last_state(), p.last_state());
        let e = path_functional(&c, &ControlPolicy::none(), &[0.0, 0.0], 1.5, 0.1, 100_000, 3, &f).unwrap();
        assert!((e.mean - 3.0).abs() <= 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn zero_delta_shaken_equals_base() {
        let c = ControlledCoefficients::ornstein_uhlenbeck(2, 1.0, 0.5);
        let pol = ControlPolicy::none();
        let a = simulate_path(&c, &pol, &[0.1, 0.2], 1.0, 0.01, &mut path_rng(5, 0)).unwrap();
        let b = simulate_shaken_path(
            &c,
            &pol,
            &ShakenDirection::random(0.0),
            &[0.1, 0.2],
            1.0,
            0.01,
            &mut path_rng(5, 0),
            &mut aux_rng(5, 0),
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn frozen_path_moment_is_exact() {
        let c = ControlledCoefficients::ornstein_uhlenbeck(2, 0.0, 0.0);
        let m = estimate_sup_moment(&c, &ControlPolicy::none(), &[0.3, 0.4], 1.0, 1000, 0.01, 1).unwrap();
        assert_eq!(m.estimate.mean, 0.25);
        assert_eq!(m.estimate.std_error, 0.0);
        assert!(m.within_bound);
    }

    #[test]
    fn ou_weak_error_is_first_order() {
        // Exact second moment of the scheme vs the diffusion, then a Monte
        // Carlo check of the scheme itself.
        let t: f64 = 1.0;
        let exact = (1.0 - (-2.0 * t).exp()) / 2.0;
        let scheme = |h: f64| {
            let n = (t / h).round() as i32;
            let a = (1.0 - h) * (1.0 - h);
            h * (1.0 - a.powi(n)) / (1.0 - a)
        };
        let c = ControlledCoefficients::ornstein_uhlenbeck(1, 1.0, 1.0);
        let f = |p: &SdePath| p.last_state()[0].powi(2);
        let mut errs = Vec::new();
        let hs = [0.2, 0.1, 0.05];
        for (k, &h) in hs.iter().enumerate() {
            let e = path_functional(&c, &ControlPolicy::none(), &[0.0], t, h, 200_000, 11 + k as u64, &f).unwrap();
            assert!((e.mean - scheme(h)).abs() <= 4.0 * e.std_error, "h {h}: {e:?} vs {}", scheme(h));
            errs.push((e.mean - exact).abs());
        }
        let order = crate::stats::loglog_slope(&hs, &errs);
        assert!(order >= 0.8, "order {order}, errors {errs:?}");
    }

    #[test]
    fn quantized_feedback_lands_on_grid() {
        let grid = vec![vec![-1.0], vec![0.0], vec![1.0]];
        let p = ControlPolicy::Feedback { name: "lin".into(), f: Arc::new(|_, x| vec![x[0]]) };
        assert_eq!(p.control(0.0, &[0.7], &grid), vec![1.0]);
        assert_eq!(p.control(0.0, &[-0.2], &grid), vec![0.0]);
        let pc = ControlPolicy::PiecewiseConstant { times: vec![0.0, 1.0], values: vec![vec![1.0], vec![-1.0]] };
        assert_eq!(pc.control(0.5, &[0.0], &grid), vec![1.0]);
        assert_eq!(pc.control(2.0, &[0.0], &grid), vec![-1.0]);
    }

    #[test]
    fn declared_norm_violations_are_caught() {
        let c = ControlledCoefficients::new(
            1,
            1,
            Arc::new(|x, _| vec![2.0 * x[0]]),
            Arc::new(|_, _| vec![0.0]),
            vec![],
            CoefficientNorms { drift_sup: 2.0, diffusion_sup: 0.0, drift_lipschitz: 1.0, diffusion_lipschitz: 0.0 },
        )
        .unwrap();
        let pts = vec![vec![0.0], vec![0.5], vec![1.0]];
        assert!(c.check_declared(&pts).is_err());
    }
}
