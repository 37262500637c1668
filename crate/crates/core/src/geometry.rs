//! Compact smooth domains: signed distance, boundary projection, outward
//! normal, tube radius and the cutoff function.
//!
//! Sign convention: the signed distance is positive inside the domain and
//! negative outside. The outward normal at a boundary point points away from
//! the domain, so `x = foot - distance * normal` inside the tube.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, sub};

/// Fraction of the reach used as tube radius.
pub const REACH_SAFETY: f64 = 0.9;

const PROJECTION_TOL: f64 = 1e-10;
const PROJECTION_CAP: usize = 200;
const TIE_TOL: f64 = 1e-12;

pub type LevelSet = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type LevelSetGradient = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Shape of a domain. Implicit domains are `{phi <= 0}` inside a bounding box.
#[derive(Clone)]
pub enum DomainKind {
    Interval { lo: f64, hi: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, r_inner: f64, r_outer: f64 },
    Implicit { phi: LevelSet, grad: Option<LevelSetGradient>, bbox: Vec<(f64, f64)> },
}

impl fmt::Debug for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainKind::Interval { lo, hi } => write!(f, "Interval[{lo}, {hi}]"),
            DomainKind::Ball { center, radius } => write!(f, "Ball(center {center:?}, radius {radius})"),
            DomainKind::Annulus { center, r_inner, r_outer } => {
                write!(f, "Annulus(center {center:?}, {r_inner}..{r_outer})")
            }
            DomainKind::Implicit { bbox, .. } => write!(f, "Implicit(bbox {bbox:?})"),
        }
    }
}

/// Nearest boundary point, outward normal there, and signed distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFrame {
    pub foot: Vec<f64>,
    pub normal: Vec<f64>,
    pub distance: f64,
}

/// A boundary point with its outward normal and connected-component label.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySample {
    pub component: usize,
    pub foot: Vec<f64>,
    pub normal: Vec<f64>,
}

/// A point of the inner tube together with the frame it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct TubePoint {
    pub x: Vec<f64>,
    pub component: usize,
    pub foot: Vec<f64>,
    pub normal: Vec<f64>,
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct SmoothDomain {
    kind: DomainKind,
    eps0: f64,
    dim: usize,
}

impl SmoothDomain {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidParameter(format!("interval needs lo < hi, got [{lo}, {hi}]")));
        }
        Ok(Self { kind: DomainKind::Interval { lo, hi }, eps0: REACH_SAFETY * (hi - lo) / 2.0, dim: 1 })
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() || !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("ball needs radius > 0, got {radius}")));
        }
        let dim = center.len();
        Ok(Self { kind: DomainKind::Ball { center, radius }, eps0: REACH_SAFETY * radius, dim })
    }

    pub fn annulus(center: Vec<f64>, r_inner: f64, r_outer: f64) -> Result<Self> {
        if center.is_empty() || !(0.0 < r_inner && r_inner < r_outer && r_outer.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "annulus needs 0 < r_inner < r_outer, got {r_inner}..{r_outer}"
            )));
        }
        let dim = center.len();
        let eps0 = REACH_SAFETY * (r_outer - r_inner) / 2.0;
        Ok(Self { kind: DomainKind::Annulus { center, r_inner, r_outer }, eps0, dim })
    }

    /// Domain `{phi <= 0}`. The tube radius is estimated from the largest
    /// sampled principal curvature of the zero level set.
    pub fn implicit(phi: LevelSet, grad: Option<LevelSetGradient>, bbox: Vec<(f64, f64)>) -> Result<Self> {
        if bbox.is_empty() || bbox.iter().any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidParameter("implicit domain needs a nonempty bounding box".into()));
        }
        let dim = bbox.len();
        let mut domain = Self { kind: DomainKind::Implicit { phi, grad, bbox }, eps0: f64::INFINITY, dim };
        let samples = domain.implicit_boundary_points(24)?;
        if samples.is_empty() {
            return Err(Error::InvalidParameter("zero level set not found inside the bounding box".into()));
        }
        let mut kappa_max: f64 = 0.0;
        for s in &samples {
            let g = domain.level_gradient(&s.foot);
            let gn = norm(&g);
            if gn < 1e-6 {
                return Err(Error::InvalidParameter(format!(
                    "level-set gradient vanishes near the boundary at {:?}",
                    s.foot
                )));
            }
            kappa_max = kappa_max.max(domain.principal_curvature_bound(&s.foot, &g));
        }
        let extent = domain.bbox_diameter();
        let reach = if kappa_max > 1e-12 { 1.0 / kappa_max } else { extent / 2.0 };
        domain.eps0 = REACH_SAFETY * reach.min(extent / 2.0);
        Ok(domain)
    }

    /// Overrides the tube radius. It must stay below the reach.
    pub fn with_eps0(mut self, eps0: f64) -> Result<Self> {
        let reach = self.reach();
        if !(eps0 > 0.0 && eps0 < reach) {
            return Err(Error::InvalidParameter(format!("eps0 must lie in (0, {reach}), got {eps0}")));
        }
        self.eps0 = eps0;
        Ok(self)
    }

    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }

    pub fn eps0(&self) -> f64 {
        self.eps0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Closed-form reach, or the curvature estimate for implicit domains.
    pub fn reach(&self) -> f64 {
        match &self.kind {
            DomainKind::Interval { lo, hi } => (hi - lo) / 2.0,
            DomainKind::Ball { radius, .. } => *radius,
            DomainKind::Annulus { r_inner, r_outer, .. } => (r_outer - r_inner) / 2.0,
            DomainKind::Implicit { .. } => self.eps0 / REACH_SAFETY,
        }
    }

    pub fn diameter(&self) -> f64 {
        match &self.kind {
            DomainKind::Interval { lo, hi } => hi - lo,
            DomainKind::Ball { radius, .. } => 2.0 * radius,
            DomainKind::Annulus { r_outer, .. } => 2.0 * r_outer,
            DomainKind::Implicit { .. } => self.bbox_diameter(),
        }
    }

    /// Number of connected boundary components.
    pub fn boundary_components(&self) -> usize {
        match &self.kind {
            DomainKind::Interval { .. } | DomainKind::Annulus { .. } => 2,
            DomainKind::Ball { .. } if self.dim == 1 => 2,
            _ => 1,
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::InvalidParameter(format!("point has dimension {}, domain {}", x.len(), self.dim)));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("point has non-finite coordinates".into()));
        }
        if let DomainKind::Implicit { bbox, .. } = &self.kind {
            if x.iter().zip(bbox).any(|(v, (a, b))| v < a || v > b) {
                return Err(Error::InvalidParameter("point lies outside the bounding box".into()));
            }
        }
        Ok(())
    }

    /// Signed distance: positive inside, negative outside.
    pub fn signed_distance(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        Ok(match &self.kind {
            DomainKind::Interval { lo, hi } => (x[0] - lo).min(hi - x[0]),
            DomainKind::Ball { center, radius } => radius - norm(&sub(x, center)),
            DomainKind::Annulus { center, r_inner, r_outer } => {
                let rho = norm(&sub(x, center));
                (rho - r_inner).min(r_outer - rho)
            }
            DomainKind::Implicit { phi, .. } => {
                let foot = self.implicit_project(x)?;
                let d = norm(&sub(x, &foot));
                if phi(x) <= 0.0 {
                    d
                } else {
                    -d
                }
            }
        })
    }

    /// Foot, outward normal and signed distance. Fails with
    /// `NonUniqueProjection` where the nearest-point set is not a singleton.
    pub fn boundary_frame(&self, x: &[f64]) -> Result<BoundaryFrame> {
        self.check_point(x)?;
        match &self.kind {
            DomainKind::Interval { lo, hi } => {
                let (dl, dh) = (x[0] - lo, hi - x[0]);
                if (dl - dh).abs() <= TIE_TOL * (hi - lo) {
                    return Err(Error::NonUniqueProjection);
                }
                if dl < dh {
                    Ok(BoundaryFrame { foot: vec![*lo], normal: vec![-1.0], distance: dl })
                } else {
                    Ok(BoundaryFrame { foot: vec![*hi], normal: vec![1.0], distance: dh })
                }
            }
            DomainKind::Ball { center, radius } => {
                let v = sub(x, center);
                let rho = norm(&v);
                if rho <= TIE_TOL * radius {
                    return Err(Error::NonUniqueProjection);
                }
                let normal: Vec<f64> = v.iter().map(|c| c / rho).collect();
                let foot = center.iter().zip(&normal).map(|(c, n)| c + radius * n).collect();
                Ok(BoundaryFrame { foot, normal, distance: radius - rho })
            }
            DomainKind::Annulus { center, r_inner, r_outer } => {
                let v = sub(x, center);
                let rho = norm(&v);
                if rho <= TIE_TOL * r_outer {
                    return Err(Error::NonUniqueProjection);
                }
                let radial: Vec<f64> = v.iter().map(|c| c / rho).collect();
                let (di, doo) = (rho - r_inner, r_outer - rho);
                if (di - doo).abs() <= TIE_TOL * r_outer {
                    return Err(Error::NonUniqueProjection);
                }
                if di < doo {
                    let foot = center.iter().zip(&radial).map(|(c, n)| c + r_inner * n).collect();
                    let normal = radial.iter().map(|n| -n).collect();
                    Ok(BoundaryFrame { foot, normal, distance: di })
                } else {
                    let foot = center.iter().zip(&radial).map(|(c, n)| c + r_outer * n).collect();
                    Ok(BoundaryFrame { foot, normal: radial, distance: doo })
                }
            }
            DomainKind::Implicit { phi, .. } => {
                let foot = self.implicit_project(x)?;
                let g = self.level_gradient(&foot);
                let gn = norm(&g);
                let normal: Vec<f64> = g.iter().map(|c| c / gn).collect();
                let d = norm(&sub(x, &foot));
                let distance = if phi(x) <= 0.0 { d } else { -d };
                Ok(BoundaryFrame { foot, normal, distance })
            }
        }
    }

    /// Like [`boundary_frame`](Self::boundary_frame) but refuses points with
    /// `|distance| > eps0`.
    pub fn boundary_frame_in_tube(&self, x: &[f64]) -> Result<BoundaryFrame> {
        let d = self.signed_distance(x)?;
        if d.abs() > self.eps0 {
            return Err(Error::OutsideTube { distance: d.abs(), eps0: self.eps0 });
        }
        self.boundary_frame(x)
    }

    /// Connected-component label of the boundary point nearest to `x`.
    pub fn component_of(&self, frame: &BoundaryFrame) -> usize {
        match &self.kind {
            DomainKind::Interval { .. } => usize::from(frame.normal[0] > 0.0),
            DomainKind::Ball { .. } if self.dim == 1 => usize::from(frame.normal[0] > 0.0),
            DomainKind::Annulus { center, .. } => {
                let v = sub(&frame.foot, center);
                usize::from(dot(&v, &frame.normal) > 0.0)
            }
            _ => 0,
        }
    }

    /// Cutoff `g = S(signed distance)`: equal to the distance on the tube,
    /// C² and non-decreasing, saturating at a plateau `<= 1` whenever
    /// `eps0 < 1`.
    pub fn cutoff_g(&self, x: &[f64]) -> Result<f64> {
        let d = self.signed_distance(x)?;
        if d < 0.0 {
            return Err(Error::OutsideDomain { distance: d });
        }
        Ok(cutoff_profile(d, self.eps0))
    }

    /// `n` points of `{0 < distance <= eps}`: boundary samples crossed with
    /// evenly spaced distance levels, the top level sitting at `eps`.
    pub fn tube_grid(&self, eps: f64, n_points: usize) -> Result<Vec<TubePoint>> {
        if !(eps > 0.0) || eps > self.eps0 {
            return Err(Error::BadTube { eps, eps0: self.eps0 });
        }
        if n_points == 0 {
            return Ok(Vec::new());
        }
        let n_boundary = match self.dim {
            1 => 2,
            2 => (n_points as f64).sqrt().ceil().max(self.boundary_components() as f64) as usize,
            _ => (n_points as f64).sqrt().ceil() as usize,
        };
        let boundary = self.boundary_samples(n_boundary)?;
        let m = boundary.len();
        let levels = n_points.div_ceil(m);
        let mut out = Vec::with_capacity(n_points);
        for i in 0..n_points {
            let b = &boundary[i % m];
            let level = i / m;
            let d = eps * (level + 1) as f64 / levels as f64;
            out.push(tube_point(b, d));
        }
        Ok(out)
    }

    /// Evenly spread boundary points with outward normals. For the closed
    /// forms in dimension two these are equally spaced angles; in higher
    /// dimensions a fixed-seed Gaussian direction cloud is used.
    pub fn boundary_samples(&self, n: usize) -> Result<Vec<BoundarySample>> {
        let n = n.max(1);
        match &self.kind {
            DomainKind::Interval { lo, hi } => Ok(vec![
                BoundarySample { component: 0, foot: vec![*lo], normal: vec![-1.0] },
                BoundarySample { component: 1, foot: vec![*hi], normal: vec![1.0] },
            ]),
            DomainKind::Ball { center, radius } => {
                if self.dim == 1 {
                    return Ok(vec![
                        BoundarySample { component: 0, foot: vec![center[0] - radius], normal: vec![-1.0] },
                        BoundarySample { component: 1, foot: vec![center[0] + radius], normal: vec![1.0] },
                    ]);
                }
                Ok(unit_directions(self.dim, n)
                    .into_iter()
                    .map(|u| BoundarySample {
                        component: 0,
                        foot: center.iter().zip(&u).map(|(c, v)| c + radius * v).collect(),
                        normal: u,
                    })
                    .collect())
            }
            DomainKind::Annulus { center, r_inner, r_outer } => {
                let n_in = (n / 2).max(1);
                let n_out = (n - n_in).max(1);
                let mut out = Vec::with_capacity(n_in + n_out);
                for u in unit_directions(self.dim, n_in) {
                    out.push(BoundarySample {
                        component: 0,
                        foot: center.iter().zip(&u).map(|(c, v)| c + r_inner * v).collect(),
                        normal: u.iter().map(|v| -v).collect(),
                    });
                }
                for u in unit_directions(self.dim, n_out) {
                    out.push(BoundarySample {
                        component: 1,
                        foot: center.iter().zip(&u).map(|(c, v)| c + r_outer * v).collect(),
                        normal: u,
                    });
                }
                Ok(out)
            }
            DomainKind::Implicit { .. } => {
                let per_axis = ((n as f64).powf(1.0 / self.dim as f64).ceil() as usize).max(4);
                self.implicit_boundary_points(per_axis)
            }
        }
    }

    /// Gradient of the level-set function (analytic when supplied).
    fn level_gradient(&self, y: &[f64]) -> Vec<f64> {
        match &self.kind {
            DomainKind::Implicit { phi, grad, .. } => match grad {
                Some(g) => g(y),
                None => central_gradient(phi.as_ref(), y, 1e-6),
            },
            _ => unreachable!("level_gradient is only used for implicit domains"),
        }
    }

    fn level_value(&self, y: &[f64]) -> f64 {
        match &self.kind {
            DomainKind::Implicit { phi, .. } => phi(y),
            _ => unreachable!("level_value is only used for implicit domains"),
        }
    }

    fn level_hessian(&self, y: &[f64]) -> DMatrix<f64> {
        let n = self.dim;
        let h = 1e-4;
        let mut hess = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut yp = y.to_vec();
            let mut ym = y.to_vec();
            yp[j] += h;
            ym[j] -= h;
            let gp = self.level_gradient(&yp);
            let gm = self.level_gradient(&ym);
            for i in 0..n {
                hess[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
            }
        }
        (&hess + hess.transpose()) * 0.5
    }

    fn principal_curvature_bound(&self, y: &[f64], g: &[f64]) -> f64 {
        let n = self.dim;
        let gn = norm(g);
        let nu = DVector::from_iterator(n, g.iter().map(|c| c / gn));
        let proj = DMatrix::identity(n, n) - &nu * nu.transpose();
        let shape = &proj * self.level_hessian(y) * &proj / gn;
        shape.symmetric_eigenvalues().iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    fn bbox_diameter(&self) -> f64 {
        match &self.kind {
            DomainKind::Implicit { bbox, .. } => bbox.iter().map(|(a, b)| (b - a).powi(2)).sum::<f64>().sqrt(),
            _ => self.diameter(),
        }
    }

    /// Closest point on `{phi = 0}` by damped Newton on the Lagrange system
    /// `y - x + mu grad phi(y) = 0, phi(y) = 0`, with a tangent-plane
    /// fixed-point fallback.
    fn implicit_project(&self, x: &[f64]) -> Result<Vec<f64>> {
        let n = self.dim;
        let mut y = x.to_vec();
        let mut iterations = 0;
        // Newton steps onto the level set along the gradient.
        for _ in 0..50 {
            iterations += 1;
            let f = self.level_value(&y);
            let g = self.level_gradient(&y);
            let g2 = dot(&g, &g);
            if g2 < 1e-300 {
                return Err(Error::NonUniqueProjection);
            }
            for i in 0..n {
                y[i] -= f * g[i] / g2;
            }
            if f.abs() < 1e-14 {
                break;
            }
        }
        let g = self.level_gradient(&y);
        let mut mu = dot(&sub(x, &y), &g) / dot(&g, &g);
        let residual = |y: &[f64], mu: f64| -> (Vec<f64>, f64) {
            let g = self.level_gradient(y);
            let mut r: Vec<f64> = (0..n).map(|i| y[i] - x[i] + mu * g[i]).collect();
            r.push(self.level_value(y));
            let rn = norm(&r);
            (r, rn)
        };
        let (mut r, mut rn) = residual(&y, mu);
        while rn > PROJECTION_TOL && iterations < PROJECTION_CAP {
            iterations += 1;
            let g = self.level_gradient(&y);
            let h = self.level_hessian(&y);
            let mut jac = DMatrix::zeros(n + 1, n + 1);
            for i in 0..n {
                for j in 0..n {
                    jac[(i, j)] = f64::from(u8::from(i == j)) + mu * h[(i, j)];
                }
                jac[(i, n)] = g[i];
                jac[(n, i)] = g[i];
            }
            let rhs = -DVector::from_vec(r.clone());
            let step = jac.lu().solve(&rhs);
            let mut accepted = false;
            if let Some(step) = step {
                let mut t = 1.0;
                while t > 1e-4 {
                    let y_try: Vec<f64> = (0..n).map(|i| y[i] + t * step[i]).collect();
                    let mu_try = mu + t * step[n];
                    let (r_try, rn_try) = residual(&y_try, mu_try);
                    if rn_try < rn {
                        y = y_try;
                        mu = mu_try;
                        r = r_try;
                        rn = rn_try;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
            }
            if !accepted {
                // Fallback: project x on the tangent plane at y, then return
                // to the level set.
                let g = self.level_gradient(&y);
                let g2 = dot(&g, &g);
                let shift = dot(&sub(x, &y), &g) / g2;
                let mut z: Vec<f64> = (0..n).map(|i| x[i] - shift * g[i]).collect();
                for _ in 0..5 {
                    let f = self.level_value(&z);
                    let gz = self.level_gradient(&z);
                    let gz2 = dot(&gz, &gz);
                    for i in 0..n {
                        z[i] -= f * gz[i] / gz2;
                    }
                }
                y = z;
                let gy = self.level_gradient(&y);
                mu = dot(&sub(x, &y), &gy) / dot(&gy, &gy);
                let (r_new, rn_new) = residual(&y, mu);
                r = r_new;
                rn = rn_new;
            }
        }
        if rn > PROJECTION_TOL {
            return Err(Error::NonConvergence { iterations, residual: rn });
        }
        Ok(y)
    }

    /// Boundary points of an implicit domain, obtained by projecting a
    /// regular grid of the bounding box and discarding near duplicates.
    fn implicit_boundary_points(&self, per_axis: usize) -> Result<Vec<BoundarySample>> {
        let DomainKind::Implicit { bbox, .. } = &self.kind else {
            unreachable!("implicit_boundary_points is only used for implicit domains")
        };
        let n = self.dim;
        let spacing = bbox.iter().map(|(a, b)| (b - a) / per_axis as f64).fold(f64::INFINITY, f64::min);
        let total = per_axis.pow(n as u32);
        let mut out: Vec<BoundarySample> = Vec::new();
        for idx in 0..total {
            let mut rem = idx;
            let mut p = vec![0.0; n];
            for (k, (a, b)) in bbox.iter().enumerate() {
                let i = rem % per_axis;
                rem /= per_axis;
                p[k] = a + (b - a) * (i as f64 + 0.5) / per_axis as f64;
            }
            let Ok(foot) = self.implicit_project(&p) else { continue };
            if foot.iter().zip(bbox).any(|(v, (a, b))| v < a || v > b) {
                continue;
            }
            if out.iter().any(|s| norm(&sub(&s.foot, &foot)) < 0.5 * spacing) {
                continue;
            }
            let g = self.level_gradient(&foot);
            let gn = norm(&g);
            if gn < 1e-300 {
                continue;
            }
            out.push(BoundarySample { component: 0, normal: g.iter().map(|c| c / gn).collect(), foot });
        }
        Ok(out)
    }
}

fn tube_point(b: &BoundarySample, d: f64) -> TubePoint {
    TubePoint {
        x: b.foot.iter().zip(&b.normal).map(|(f, n)| f - d * n).collect(),
        component: b.component,
        foot: b.foot.clone(),
        normal: b.normal.clone(),
        distance: d,
    }
}

/// Point at signed distance `d` below a boundary sample.
pub fn offset_point(b: &BoundarySample, d: f64) -> Vec<f64> {
    tube_point(b, d).x
}

/// Scalar profile of the cutoff: identity up to `eps0`, then a quartic
/// Hermite blend `t - t^3 + t^4/2` (value, slope and curvature matched at
/// both ends) up to a plateau.
pub fn cutoff_profile(d: f64, eps0: f64) -> f64 {
    if d <= eps0 {
        return d;
    }
    let width = if eps0 < 2.0 / 3.0 {
        eps0
    } else if eps0 < 1.0 {
        2.0 * (1.0 - eps0)
    } else {
        eps0
    };
    let tau = ((d - eps0) / width).min(1.0);
    eps0 + width * (tau - tau.powi(3) + 0.5 * tau.powi(4))
}

/// Equally spaced angles in 2D, fixed-seed Gaussian directions otherwise.
pub fn unit_directions(dim: usize, n: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![-1.0], vec![1.0]],
        2 => (0..n)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / n as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_d1e5);
            (0..n)
                .map(|_| loop {
                    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let nv = norm(&v);
                    if nv > 1e-8 {
                        break v.into_iter().map(|c| c / nv).collect();
                    }
                })
                .collect()
        }
    }
}

pub fn central_gradient(f: &dyn Fn(&[f64]) -> f64, y: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; y.len()];
    let mut p = y.to_vec();
    for i in 0..y.len() {
        let orig = p[i];
        p[i] = orig + h;
        let fp = f(&p);
        p[i] = orig - h;
        let fm = f(&p);
        p[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ball() -> SmoothDomain {
        SmoothDomain::ball(vec![0.0, 0.0], 1.0).unwrap()
    }

    #[test]
    fn closed_form_distances() {
        let ball = unit_ball();
        assert_eq!(ball.signed_distance(&[0.0, 0.0]).unwrap(), 1.0);
        let iv = SmoothDomain::interval(0.0, 1.0).unwrap();
        assert!((iv.signed_distance(&[0.3]).unwrap() - 0.3).abs() < 1e-15);
        assert!((iv.signed_distance(&[1.5]).unwrap() + 0.5).abs() < 1e-15);
    }

    #[test]
    fn frames() {
        let iv = SmoothDomain::interval(0.0, 1.0).unwrap();
        let f = iv.boundary_frame(&[0.9]).unwrap();
        assert_eq!(f.foot, vec![1.0]);
        assert_eq!(f.normal, vec![1.0]);
        assert!((f.distance - 0.1).abs() < 1e-15);

        let ball = unit_ball();
        let f = ball.boundary_frame(&[0.5, 0.0]).unwrap();
        assert_eq!(f.foot, vec![1.0, 0.0]);
        assert_eq!(f.normal, vec![1.0, 0.0]);
        assert_eq!(f.distance, 0.5);
        assert_eq!(ball.boundary_frame(&[0.0, 0.0]), Err(Error::NonUniqueProjection));
        assert_eq!(iv.boundary_frame(&[0.5]), Err(Error::NonUniqueProjection));
    }

    #[test]
    fn tube_requirement() {
        let ball = unit_ball();
        assert!(matches!(ball.boundary_frame_in_tube(&[0.05, 0.0]), Err(Error::OutsideTube { .. })));
        assert!(ball.boundary_frame_in_tube(&[0.5, 0.0]).is_ok());
    }

    #[test]
    fn annulus_frames_reconstruct() {
        let ann = SmoothDomain::annulus(vec![0.0, 0.0], 0.5, 1.0).unwrap();
        for x in [[0.55, 0.0], [0.0, 0.95], [0.2, 0.1], [1.3, -0.4]] {
            let f = ann.boundary_frame(&x).unwrap();
            for i in 0..2 {
                assert!((f.foot[i] - f.distance * f.normal[i] - x[i]).abs() < 1e-12);
            }
        }
        assert_eq!(ann.boundary_frame(&[0.75, 0.0]), Err(Error::NonUniqueProjection));
    }

    #[test]
    fn cutoff_matches_distance_in_tube() {
        let iv = SmoothDomain::interval(0.0, 1.0).unwrap().with_eps0(0.2).unwrap();
        assert!((iv.cutoff_g(&[0.1]).unwrap() - 0.1).abs() < 1e-15);
        let g = iv.cutoff_g(&[0.5]).unwrap();
        assert!(g > 0.0 && g <= 1.0);
        assert_eq!(iv.cutoff_g(&[1.0]).unwrap(), 0.0);
        assert!(matches!(iv.cutoff_g(&[1.2]), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn cutoff_plateau_below_one() {
        for eps0 in [0.1, 0.45, 0.7, 0.9] {
            let top = cutoff_profile(10.0, eps0);
            assert!(top <= 1.0 + 1e-15 && top > eps0, "eps0 {eps0} plateau {top}");
        }
    }

    #[test]
    fn tube_grid_interval() {
        let iv = SmoothDomain::interval(0.0, 1.0).unwrap();
        let pts = iv.tube_grid(0.1, 4).unwrap();
        assert_eq!(pts.len(), 4);
        for p in &pts {
            let x = p.x[0];
            assert!((x > 0.0 && x <= 0.1 + 1e-15) || (x >= 0.9 - 1e-15 && x < 1.0), "{x}");
        }
        assert!(matches!(iv.tube_grid(0.5, 4), Err(Error::BadTube { .. })));
    }

    #[test]
    fn tube_grid_ball_and_annulus() {
        let ball = unit_ball();
        for p in ball.tube_grid(0.1, 200).unwrap() {
            let r = norm(&p.x);
            assert!((0.9 - 1e-12..1.0).contains(&r));
        }
        let r = 0.1_f64;
        let ann = SmoothDomain::annulus(vec![0.0, 0.0], r.sqrt(), 1.0).unwrap();
        let pts = ann.tube_grid(0.05, 100).unwrap();
        assert!(pts.iter().any(|p| p.component == 0));
        assert!(pts.iter().any(|p| p.component == 1));
        for p in pts {
            let d = ann.signed_distance(&p.x).unwrap();
            assert!(d > 0.0 && d <= 0.05 + 1e-12);
        }
    }

    #[test]
    fn implicit_ellipse_projection() {
        let (a, b) = (1.0_f64, 0.6_f64);
        let phi: LevelSet = Arc::new(move |y: &[f64]| (y[0] / a).powi(2) + (y[1] / b).powi(2) - 1.0);
        let grad: LevelSetGradient = Arc::new(move |y: &[f64]| vec![2.0 * y[0] / (a * a), 2.0 * y[1] / (b * b)]);
        let dom = SmoothDomain::implicit(phi.clone(), Some(grad), vec![(-1.5, 1.5), (-1.2, 1.2)]).unwrap();
        // Reach of an ellipse is b^2/a.
        assert!(dom.eps0() <= REACH_SAFETY * b * b / a * 1.01);
        let f = dom.boundary_frame(&[0.0, 0.5]).unwrap();
        assert!((f.distance - 0.1).abs() < 1e-9);
        assert!((f.normal[1] - 1.0).abs() < 1e-9);
        let f = dom.boundary_frame(&[0.7, 0.2]).unwrap();
        assert!(phi(&f.foot).abs() < 1e-10);
        let x = [f.foot[0] - f.distance * f.normal[0], f.foot[1] - f.distance * f.normal[1]];
        assert!((x[0] - 0.7).abs() < 1e-8 && (x[1] - 0.2).abs() < 1e-8);
        assert!(dom.signed_distance(&[2.0, 0.0]).is_err());
        assert!(dom.signed_distance(&[1.2, 0.0]).unwrap() < 0.0);
    }

    #[test]
    fn bad_constructors() {
        assert!(SmoothDomain::interval(1.0, 0.0).is_err());
        assert!(SmoothDomain::ball(vec![0.0], -1.0).is_err());
        assert!(SmoothDomain::annulus(vec![0.0, 0.0], 1.0, 0.5).is_err());
        assert!(SmoothDomain::interval(0.0, 1.0).unwrap().with_eps0(0.6).is_err());
    }
}
