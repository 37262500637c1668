//! Near-viability value estimates: the approximating targets `f_n`,
//! discounted exterior occupation by Monte Carlo, policy search, discount
//! thresholds and one-sided certificates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainKind, SmoothDomain};
use crate::linalg::{dot, norm, sub};
use crate::rng::path_rng;
use crate::sde::{simulate_observed, ControlPolicy, ControlledCoefficients};
use crate::stats::Estimate;

/// Central-difference stencil for second derivatives of the distance on
/// implicit domains.
pub const HESSIAN_STENCIL: f64 = 1e-5;

/// `(1 - n d)^+` with `d = max(signed distance, 0)`; `n = None` gives the
/// sharp indicator of the complement of the interior.
pub fn f_n_eval(domain: &SmoothDomain, n: Option<usize>, x: &[f64]) -> Result<f64> {
    let d = domain.signed_distance(x)?.max(0.0);
    Ok(match n {
        Some(n) => (1.0 - n as f64 * d).max(0.0),
        None => {
            if d > 0.0 {
                0.0
            } else {
                1.0
            }
        }
    })
}

#[derive(Debug, Clone)]
pub struct ValueConfig {
    pub lambda: f64,
    /// Index of the approximating target; `None` is the sharp indicator.
    pub n_approx: Option<usize>,
    pub horizon_cut: f64,
    pub n_paths: usize,
    pub step: f64,
    pub seed: u64,
    pub normalized: bool,
    pub policy_family: Vec<ControlPolicy>,
}

impl ValueConfig {
    /// Horizon chosen so the normalized truncation error `exp(-lambda T)`
    /// is at most `tol`.
    pub fn with_tolerance(lambda: f64, tol: f64, step: f64, n_paths: usize, seed: u64) -> Self {
        Self {
            lambda,
            n_approx: None,
            horizon_cut: (1.0 / tol).ln() / lambda,
            n_paths,
            step,
            seed,
            normalized: true,
            policy_family: vec![ControlPolicy::none()],
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.horizon_cut > 0.0 && self.step > 0.0 && self.n_paths > 0) {
            return Err(Error::InvalidParameter("lambda, horizon_cut, step and n_paths must be positive".into()));
        }
        Ok(())
    }

    /// `exp(-lambda T) / lambda`, the un-normalized tail bound for a target
    /// bounded by one.
    pub fn truncation_bound(&self) -> f64 {
        (-self.lambda * self.horizon_cut).exp() / self.lambda
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupationEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Un-normalized tail bound `exp(-lambda T) sup g / lambda`.
    pub truncation_bound: f64,
    pub normalized: bool,
}

impl OccupationEstimate {
    /// Upper confidence value including the tail, in the units of `mean`.
    pub fn upper(&self, lambda: f64) -> f64 {
        let tail = if self.normalized { lambda * self.truncation_bound } else { self.truncation_bound };
        self.mean + 2.0 * self.std_error + tail
    }
}

/// Monte Carlo estimate of `E int_0^T exp(-lambda t) g(X_t) dt` with the
/// trapezoid rule on the simulation grid; multiplied by `lambda` when the
/// configuration asks for normalized values.
pub fn discounted_occupation(
    coeffs: &ControlledCoefficients,
    policy: &ControlPolicy,
    x0: &[f64],
    target: &(dyn Fn(&[f64]) -> f64 + Sync),
    config: &ValueConfig,
) -> Result<OccupationEstimate> {
    config.validate()?;
    let lambda = config.lambda;
    let values: Vec<f64> = (0..config.n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            let mut prev: Option<(f64, f64)> = None;
            simulate_observed(coeffs, policy, x0, config.horizon_cut, config.step, &mut path_rng(config.seed, i), &mut |_, t, x| {
                let v = (-lambda * t).exp() * target(x);
                if let Some((t0, v0)) = prev {
                    acc += 0.5 * (t - t0) * (v + v0);
                }
                prev = Some((t, v));
            })?;
            Ok(if config.normalized { lambda * acc } else { acc })
        })
        .collect::<Result<_>>()?;
    let e = Estimate::from_samples(&values);
    Ok(OccupationEstimate {
        mean: e.mean,
        std_error: e.std_error,
        n_paths: e.n,
        truncation_bound: config.truncation_bound(),
        normalized: config.normalized,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub best: OccupationEstimate,
    pub policy_index: usize,
    pub policy_label: String,
    pub per_policy: Vec<OccupationEstimate>,
}

/// Minimum over the policy family of the discounted occupation of `f_n`
/// (or of the sharp indicator). Every policy uses the same seed.
pub fn estimate_value(
    coeffs: &ControlledCoefficients,
    domain: &SmoothDomain,
    x0: &[f64],
    config: &ValueConfig,
) -> Result<ValueEstimate> {
    if config.policy_family.is_empty() {
        return Err(Error::InvalidParameter("policy family is empty".into()));
    }
    let n = config.n_approx;
    let target = move |x: &[f64]| f_n_eval(domain, n, x).unwrap_or(1.0);
    let per_policy = config
        .policy_family
        .iter()
        .map(|p| discounted_occupation(coeffs, p, x0, &target, config))
        .collect::<Result<Vec<_>>>()?;
    let (idx, best) = per_policy
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.mean.total_cmp(&b.1.mean))
        .map(|(i, e)| (i, *e))
        .expect("non-empty family");
    Ok(ValueEstimate { best, policy_index: idx, policy_label: config.policy_family[idx].label(), per_policy })
}

/// Hessian of the signed distance, row-major. Closed forms use the exact
/// expression; implicit domains use central differences.
pub fn distance_hessian(domain: &SmoothDomain, x: &[f64]) -> Result<Vec<f64>> {
    let n = domain.dim();
    let radial = |center: &[f64], sign: f64| -> Vec<f64> {
        let v = sub(x, center);
        let rho = norm(&v);
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { 1.0 } else { 0.0 };
                h[i * n + j] = sign * (id - v[i] * v[j] / (rho * rho)) / rho;
            }
        }
        h
    };
    match domain.kind() {
        DomainKind::Interval { .. } => Ok(vec![0.0]),
        DomainKind::Ball { center, .. } => Ok(radial(center, -1.0)),
        DomainKind::Annulus { center, r_inner, r_outer } => {
            let rho = norm(&sub(x, center));
            Ok(radial(center, if rho - r_inner < r_outer - rho { 1.0 } else { -1.0 }))
        }
        DomainKind::Implicit { .. } => {
            if domain.eps0() < 4.0 * HESSIAN_STENCIL {
                return Err(Error::TubeTooSmall { eps0: domain.eps0() });
            }
            fd_hessian(&|y| domain.signed_distance(y), x, HESSIAN_STENCIL)
        }
    }
}

/// Central-difference Hessian.
pub fn fd_hessian(f: &dyn Fn(&[f64]) -> Result<f64>, x: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = x.len();
    let mut out = vec![0.0; n * n];
    let mut y = x.to_vec();
    let f0 = f(x)?;
    for i in 0..n {
        for j in i..n {
            let v = if i == j {
                y[i] = x[i] + h;
                let fp = f(&y)?;
                y[i] = x[i] - h;
                let fm = f(&y)?;
                y[i] = x[i];
                (fp - 2.0 * f0 + fm) / (h * h)
            } else {
                let mut g = |si: f64, sj: f64| -> Result<f64> {
                    y[i] = x[i] + si * h;
                    y[j] = x[j] + sj * h;
                    let r = f(&y);
                    y[i] = x[i];
                    y[j] = x[j];
                    r
                };
                (g(1.0, 1.0)? - g(1.0, -1.0)? - g(-1.0, 1.0)? + g(-1.0, -1.0)?) / (4.0 * h * h)
            };
            out[i * n + j] = v;
            out[j * n + i] = v;
        }
    }
    Ok(out)
}

/// `L^u delta(x) = 1/2 Tr(sigma sigma^T D^2 delta) + <b, D delta>` with
/// `D delta(x) = -normal(foot(x))` on the tube.
pub fn generator_of_distance(
    coeffs: &ControlledCoefficients,
    domain: &SmoothDomain,
    x: &[f64],
    u: &[f64],
) -> Result<f64> {
    let frame = domain.boundary_frame(x)?;
    let grad: Vec<f64> = frame.normal.iter().map(|v| -v).collect();
    let hess = distance_hessian(domain, x)?;
    let b = coeffs.drift(x, u);
    let s = coeffs.diffusion(x, u);
    let (n, m) = (coeffs.dim, coeffs.noise_dim);
    let mut tr = 0.0;
    for i in 0..n {
        for j in 0..n {
            let a_ij: f64 = (0..m).map(|k| s[i * m + k] * s[j * m + k]).sum();
            tr += a_ij * hess[j * n + i];
        }
    }
    Ok(0.5 * tr + dot(&b, &grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdOptions {
    pub n_paths: usize,
    pub step: f64,
    pub seed: u64,
    /// Horizons used to fit the moment constant.
    pub horizons: [f64; 3],
    /// Short times used to fit `k` in `E sup |X_s - x|^2 <= k t`.
    pub short_times: [f64; 3],
}

impl Default for ThresholdOptions {
    fn default() -> Self {
        Self { n_paths: 2000, step: 1e-3, seed: 0, horizons: [0.25, 0.5, 1.0], short_times: [0.01, 0.02, 0.05] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaThreshold {
    pub lambda_min: f64,
    pub c_sigma: f64,
    pub c_l: f64,
    pub lambda0_fit: f64,
    pub lambda0_derived: f64,
    pub k_fit: f64,
    pub t_star: f64,
    pub margin: f64,
    /// Chebyshev bound `4 k t* / eps0^2` against `eps0 / (8 diam)`.
    pub exit_probability_ok: bool,
    /// `exp(-lambda_min t*) <= eps0 / (8 diam)`.
    pub discount_ok: bool,
    /// Smallest discount satisfying the second inequality.
    pub lambda_for_discount: f64,
}

/// Sampled `c_sigma`, `c_L` over the tube and control grid, a fitted moment
/// constant, the resulting discount threshold and `t*`.
pub fn lambda_threshold(
    coeffs: &ControlledCoefficients,
    domain: &SmoothDomain,
    tube_samples: usize,
) -> Result<LambdaThreshold> {
    lambda_threshold_with(coeffs, domain, tube_samples, &ThresholdOptions::default())
}

pub fn lambda_threshold_with(
    coeffs: &ControlledCoefficients,
    domain: &SmoothDomain,
    tube_samples: usize,
    opts: &ThresholdOptions,
) -> Result<LambdaThreshold> {
    let (c_sigma, c_l) = tube_constants(coeffs, domain, &domain.tube_grid(domain.eps0(), tube_samples)?)?;
    let start = domain.tube_grid(domain.eps0(), 1)?.remove(0).x;
    let lambda0_fit = fit_lambda0(coeffs, &start, opts)?;
    let k_fit = fit_k(coeffs, &start, opts)?.max(1e-12);
    let base = 2.0 * lambda0_fit + c_sigma * c_sigma + c_l;
    let margin = (1e-3 * base).max(1e-6);
    let lambda_min = base + margin;
    let (eps0, diam) = (domain.eps0(), domain.diameter());
    let t_star = eps0.powi(3) / (32.0 * k_fit * diam);
    let target = eps0 / (8.0 * diam);
    let exit_probability_ok = 4.0 * k_fit * t_star / (eps0 * eps0) <= target * (1.0 + 1e-12);
    let lambda_for_discount = (1.0 / target).ln() / t_star;
    Ok(LambdaThreshold {
        lambda_min,
        c_sigma,
        c_l,
        lambda0_fit,
        lambda0_derived: coeffs.lambda0(opts.horizons[2]),
        k_fit,
        t_star,
        margin,
        exit_probability_ok,
        discount_ok: (-lambda_min * t_star).exp() <= target,
        lambda_for_discount,
    })
}

/// Suprema over `points` and the control grid of
/// `|sigma(x) - sigma(foot)| / d` and `|L delta(x) - L delta(foot)| / d`.
pub fn tube_constants(
    coeffs: &ControlledCoefficients,
    domain: &SmoothDomain,
    points: &[crate::geometry::TubePoint],
) -> Result<(f64, f64)> {
    let mut c_sigma: f64 = 0.0;
    let mut c_l: f64 = 0.0;
    for p in points {
        if !(p.distance > 0.0) {
            continue;
        }
        for u in &coeffs.control_grid {
            let ds = crate::linalg::dist(&coeffs.diffusion(&p.x, u), &coeffs.diffusion(&p.foot, u));
            c_sigma = c_sigma.max(ds / p.distance);
            let lx = generator_of_distance(coeffs, domain, &p.x, u)?;
            let lf = generator_at_foot(coeffs, domain, p, u)?;
            c_l = c_l.max((lx - lf).abs() / p.distance);
        }
    }
    Ok((c_sigma, c_l))
}

fn generator_at_foot(
    coeffs: &ControlledCoefficients,
    domain: &SmoothDomain,
    p: &crate::geometry::TubePoint,
    u: &[f64],
) -> Result<f64> {
    let grad: Vec<f64> = p.normal.iter().map(|v| -v).collect();
    let hess = distance_hessian(domain, &p.foot)?;
    let b = coeffs.drift(&p.foot, u);
    let s = coeffs.diffusion(&p.foot, u);
    let (n, m) = (coeffs.dim, coeffs.noise_dim);
    let mut tr = 0.0;
    for i in 0..n {
        for j in 0..n {
            let a_ij: f64 = (0..m).map(|k| s[i * m + k] * s[j * m + k]).sum();
            tr += a_ij * hess[j * n + i];
        }
    }
    Ok(0.5 * tr + dot(&b, &grad))
}

/// Smallest `lambda >= 0` with `m(T) <= lambda exp(lambda T) (1 + |x0|^2)`
/// for the upper 95% value of the simulated `E sup |X|^2` at each horizon.
fn fit_lambda0(coeffs: &ControlledCoefficients, x0: &[f64], opts: &ThresholdOptions) -> Result<f64> {
    let scale = 1.0 + dot(x0, x0);
    let mut lam: f64 = 0.0;
    for (k, &t) in opts.horizons.iter().enumerate() {
        let m = crate::sde::estimate_sup_moment(
            coeffs,
            &ControlPolicy::Constant(coeffs.control_grid[0].clone()),
            x0,
            t,
            opts.n_paths,
            opts.step,
            crate::rng::derive_seed(opts.seed, k as u64),
        )?;
        let need = m.estimate.ci95().1 / scale;
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi * (hi * t).exp() < need {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid * (mid * t).exp() < need {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lam = lam.max(hi);
    }
    Ok(lam)
}

/// `max_t E sup_{s <= t} |X_s - x|^2 / t` (upper 95% values) over short
/// times and the control grid.
fn fit_k(coeffs: &ControlledCoefficients, x0: &[f64], opts: &ThresholdOptions) -> Result<f64> {
    let mut k: f64 = 0.0;
    for (ui, u) in coeffs.control_grid.iter().enumerate() {
        let pol = ControlPolicy::Constant(u.clone());
        for (ti, &t) in opts.short_times.iter().enumerate() {
            let seed = crate::rng::derive_seed(opts.seed, 100 + (ui * 10 + ti) as u64);
            let f = |p: &crate::sde::SdePath| (0..p.len()).map(|i| dot(&sub(p.state(i), x0), &sub(p.state(i), x0))).fold(0.0, f64::max);
            let e = crate::sde::path_functional(coeffs, &pol, x0, t, opts.step.min(t / 10.0), opts.n_paths, seed, &f)?;
            k = k.max(e.ci95().1 / t);
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub achieved: bool,
    pub policy_index: usize,
    pub policy_label: String,
    pub estimate: OccupationEstimate,
    /// `mean + 2 std_error + lambda * truncation_bound` of the reported policy.
    pub score: f64,
}

/// Searches the policy family for a normalized occupation of the
/// complement whose upper value is at most `epsilon`.
pub fn near_viability_certificate(
    coeffs: &ControlledCoefficients,
    domain: &SmoothDomain,
    x0: &[f64],
    epsilon: f64,
    config: &ValueConfig,
) -> Result<Certificate> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter("epsilon must be positive".into()));
    }
    let cfg = ValueConfig { normalized: true, n_approx: None, ..config.clone() };
    let v = estimate_value(coeffs, domain, x0, &cfg)?;
    let (idx, est) = v
        .per_policy
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.upper(cfg.lambda).total_cmp(&b.1.upper(cfg.lambda)))
        .map(|(i, e)| (i, *e))
        .expect("non-empty family");
    let score = est.upper(cfg.lambda);
    Ok(Certificate {
        achieved: score <= epsilon,
        policy_index: idx,
        policy_label: cfg.policy_family[idx].label(),
        estimate: est,
        score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::example_field;
    use crate::sde::{scaled_identity, CoefficientNorms};
    use std::sync::Arc;

    fn deterministic(id: &str) -> ControlledCoefficients {
        let norms = CoefficientNorms { drift_sup: 1.0, diffusion_sup: 0.0, drift_lipschitz: f64::INFINITY, diffusion_lipschitz: 0.0 };
        ControlledCoefficients::from_field(&example_field(id).unwrap(), 0.0, norms)
    }

    #[test]
    fn f_n_examples() {
        let k = SmoothDomain::interval(0.0, 1.0).unwrap();
        assert_eq!(f_n_eval(&k, Some(4), &[1.5]).unwrap(), 1.0);
        assert_eq!(f_n_eval(&k, Some(4), &[0.25]).unwrap(), 0.0);
        assert_eq!(f_n_eval(&k, None, &[1.0]).unwrap(), 1.0);
        for i in 0..=100 {
            let x = [-0.1 + 1.2 * i as f64 / 100.0];
            for n in 1..10 {
                assert!(f_n_eval(&k, Some(n + 1), &x).unwrap() <= f_n_eval(&k, Some(n), &x).unwrap());
            }
        }
    }

    #[test]
    fn tangential_hit_value_is_exp_minus_lambda() {
        let k = SmoothDomain::interval(0.0, 1.0).unwrap();
        let c = deterministic("ex31");
        let cfg = ValueConfig { n_paths: 1, ..ValueConfig::with_tolerance(1.0, 1e-9, 1e-5, 1, 0) };
        let v = estimate_value(&c, &k, &[0.75], &cfg).unwrap();
        assert!((v.best.mean - (-1.0f64).exp()).abs() < 1e-4, "{:?}", v.best);
    }

    #[test]
    fn invariant_interior_has_zero_value() {
        let k = SmoothDomain::interval(0.0, 1.0).unwrap();
        let cfg = ValueConfig { n_paths: 1, ..ValueConfig::with_tolerance(1.0, 1e-6, 1e-3, 1, 0) };
        let v = estimate_value(&deterministic("ex32"), &k, &[0.5], &cfg).unwrap();
        assert!(v.best.mean <= cfg.lambda * cfg.truncation_bound());
    }

    #[test]
    fn outside_start_has_unit_value() {
        let k = SmoothDomain::interval(0.0, 1.0).unwrap();
        let c = ControlledCoefficients::ornstein_uhlenbeck(1, 0.0, 0.0);
        let cfg = ValueConfig { n_paths: 1, ..ValueConfig::with_tolerance(2.0, 1e-12, 1e-3, 1, 0) };
        let v = estimate_value(&c, &k, &[1.5], &cfg).unwrap();
        assert!((v.best.mean - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_diffusion_has_zero_c_sigma() {
        let k = SmoothDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let pts = k.tube_grid(k.eps0(), 200).unwrap();
        let c = ControlledCoefficients::new(
            2,
            2,
            Arc::new(|_, _| vec![1.0, 0.0]),
            Arc::new(|_, _| vec![0.0; 4]),
            vec![],
            CoefficientNorms { drift_sup: 1.0, diffusion_sup: 0.0, drift_lipschitz: 0.0, diffusion_lipschitz: 0.0 },
        )
        .unwrap();
        let (cs, cl) = tube_constants(&c, &k, &pts).unwrap();
        assert_eq!(cs, 0.0);
        // The gradient of the distance is constant along normal rays.
        assert!(cl < 1e-12);
    }

    #[test]
    fn analytic_hessian_matches_differences() {
        let k = SmoothDomain::annulus(vec![0.0, 0.0], 0.4, 1.0).unwrap();
        for x in [[0.5, 0.1], [0.0, 0.9], [-0.6, -0.3]] {
            let a = distance_hessian(&k, &x).unwrap();
            let b = fd_hessian(&|y| k.signed_distance(y), &x, 1e-4).unwrap();
            for (p, q) in a.iter().zip(&b) {
                assert!((p - q).abs() < 1e-5, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn certificate_cases() {
        let k = SmoothDomain::interval(0.0, 1.0).unwrap();
        let cfg = ValueConfig { n_paths: 1, ..ValueConfig::with_tolerance(1.0, 1e-9, 1e-5, 1, 0) };
        let ex31 = near_viability_certificate(&deterministic("ex31"), &k, &[0.75], (-1.0f64).exp() / 2.0, &cfg).unwrap();
        assert!(!ex31.achieved);
        let ex32 = near_viability_certificate(&deterministic("ex32"), &k, &[0.5], 1e-6, &cfg).unwrap();
        assert!(ex32.achieved, "{ex32:?}");
    }

    #[test]
    fn threshold_exceeds_its_parts() {
        let k = SmoothDomain::ball(vec![0.0, 0.0], 1.0).unwrap();
        let c = ControlledCoefficients::new(
            2,
            2,
            Arc::new(|x, _| vec![-x[0], -x[1]]),
            Arc::new(|_, _| scaled_identity(2, 0.3)),
            vec![],
            CoefficientNorms { drift_sup: 1.0, diffusion_sup: 0.3 * 2f64.sqrt(), drift_lipschitz: 1.0, diffusion_lipschitz: 0.0 },
        )
        .unwrap();
        let opts = ThresholdOptions { n_paths: 400, ..ThresholdOptions::default() };
        let th = lambda_threshold_with(&c, &k, 100, &opts).unwrap();
        assert!(th.lambda_min > 2.0 * th.lambda0_fit + th.c_sigma.powi(2) + th.c_l);
        assert_eq!(th.c_sigma, 0.0);
        assert!(th.exit_probability_ok);
        assert!(th.t_star > 0.0);
    }
}
