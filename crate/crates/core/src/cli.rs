//! Config-driven experiments: strict JSON configs in, CSV data plus a JSON
//! summary and a manifest out.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid arguments or config,
//! 3 numeric failure inside a module.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::flow::{example_field, integrate_flow_with, FlowOptions, VectorField};
use crate::geometry::SmoothDomain;
use crate::necessary::{f_zeta_inverse, log_grid, zeta_profile_with, ZetaOptions};
use crate::pdmp::{check_boundary_condition, simulate_pdmp_with, PdmpControls, PdmpOptions, PdmpTriplet};
use crate::phage::{rate_sweep, run_border_avoidance, BorderOptions, PhageModel, PhageRates};
use crate::rng::path_rng;
use crate::sde::{
    estimate_sup_moment, shaken_deviation, simulate_observed, CoefficientNorms, ControlPolicy, ControlledCoefficients,
    ShakenDirection,
};
use crate::stats::loglog_slope;
use crate::value::{estimate_value, near_viability_certificate, ValueConfig};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numeric(Error),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Numeric(e) => write!(f, "numeric error: {e}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Numeric(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn require(cond: bool, field: &str, msg: &str) -> CliResult<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(format!("field '{field}': {msg}")))
    }
}

fn positive(v: f64, field: &str) -> CliResult<()> {
    require(v.is_finite() && v > 0.0, field, "must be a positive finite number")
}

// ---------------------------------------------------------------- config

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval { lo: f64, hi: f64 },
    Ball { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, r_inner: f64, r_outer: f64 },
}

impl DomainSpec {
    pub fn build(&self) -> CliResult<SmoothDomain> {
        let d = match self {
            DomainSpec::Interval { lo, hi } => SmoothDomain::interval(*lo, *hi),
            DomainSpec::Ball { center, radius } => SmoothDomain::ball(center.clone(), *radius),
            DomainSpec::Annulus { center, r_inner, r_outer } => {
                SmoothDomain::annulus(center.clone(), *r_inner, *r_outer)
            }
        };
        d.map_err(|e| CliError::Config(format!("field 'domain': {e}")))
    }
}

fn unit_interval() -> DomainSpec {
    DomainSpec::Interval { lo: 0.0, hi: 1.0 }
}

fn named_field(id: &str) -> CliResult<VectorField> {
    example_field(id).map_err(|e| CliError::Config(format!("field 'field': {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowParams {
    pub seed: Option<u64>,
    pub field: String,
    #[serde(default = "unit_interval")]
    pub domain: DomainSpec,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    #[serde(default = "one")]
    pub record_stride: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZetaParams {
    pub seed: Option<u64>,
    pub field: String,
    #[serde(default = "unit_interval")]
    pub domain: DomainSpec,
    #[serde(default = "default_eps_min")]
    pub eps_min: f64,
    /// Defaults to the domain's tube radius.
    pub eps_max: Option<f64>,
    #[serde(default = "default_levels")]
    pub n_levels: usize,
    #[serde(default = "default_samples")]
    pub samples_per_level: usize,
    pub component: Option<usize>,
}

fn default_eps_min() -> f64 {
    1e-6
}
fn default_levels() -> usize {
    20
}
fn default_samples() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    /// `b = -theta x`, `sigma = s I`.
    Ou { dim: usize, theta: f64, sigma: f64 },
    /// Example field plus control, additive noise `sigma I`.
    Field {
        field: String,
        sigma: f64,
        #[serde(default)]
        controls: Vec<Vec<f64>>,
        norms: Option<CoefficientNorms>,
    },
}

impl CoefficientSpec {
    pub fn build(&self) -> CliResult<ControlledCoefficients> {
        match self {
            CoefficientSpec::Ou { dim, theta, sigma } => {
                require(*dim > 0, "coefficients.dim", "must be positive")?;
                Ok(ControlledCoefficients::ornstein_uhlenbeck(*dim, *theta, *sigma))
            }
            CoefficientSpec::Field { field, sigma, controls, norms } => {
                let f = named_field(field)?;
                let dim = f.dim;
                require(controls.iter().all(|u| u.len() == dim), "coefficients.controls", "control dimension must match the field")?;
                let norms = norms.unwrap_or(CoefficientNorms {
                    drift_sup: f64::INFINITY,
                    diffusion_sup: 0.0,
                    drift_lipschitz: f64::INFINITY,
                    diffusion_lipschitz: 0.0,
                });
                let s = *sigma;
                let drift = {
                    let f = f.clone();
                    Arc::new(move |x: &[f64], u: &[f64]| {
                        let mut v = f.eval(x);
                        for (a, b) in v.iter_mut().zip(u) {
                            *a += b;
                        }
                        v
                    })
                };
                let diffusion = Arc::new(move |_: &[f64], _: &[f64]| crate::sde::scaled_identity(dim, s));
                let norms = CoefficientNorms {
                    diffusion_sup: s.abs() * (dim as f64).sqrt(),
                    diffusion_lipschitz: 0.0,
                    ..norms
                };
                Ok(ControlledCoefficients::new(dim, dim, drift, diffusion, controls.clone(), norms)?)
            }
        }
    }

    fn policies(&self) -> Vec<ControlPolicy> {
        match self {
            CoefficientSpec::Field { controls, .. } if !controls.is_empty() => {
                controls.iter().map(|u| ControlPolicy::Constant(u.clone())).collect()
            }
            _ => vec![ControlPolicy::none()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SdeParams {
    pub seed: Option<u64>,
    pub coefficients: CoefficientSpec,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    pub n_paths: usize,
    /// Shaking amplitudes for the paired deviation study.
    #[serde(default)]
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueParams {
    pub seed: Option<u64>,
    pub coefficients: CoefficientSpec,
    #[serde(default = "unit_interval")]
    pub domain: DomainSpec,
    pub starts: Vec<Vec<f64>>,
    pub lambda: f64,
    pub n_approx: Option<usize>,
    /// Normalized truncation tolerance; fixes the horizon.
    #[serde(default = "default_tol")]
    pub tolerance: f64,
    pub step: f64,
    pub n_paths: usize,
    /// Target level for the near-viability certificate.
    pub epsilon: Option<f64>,
}

fn default_tol() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub name: String,
    /// Drift `A x + c`; a missing matrix means zero.
    #[serde(default)]
    pub drift_matrix: Vec<Vec<f64>>,
    pub drift_offset: Vec<f64>,
    /// Intensity `max(0, rate + <rate_slope, x>)`.
    pub rate: f64,
    #[serde(default)]
    pub rate_slope: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdmpParams {
    pub seed: Option<u64>,
    pub modes: Vec<ModeSpec>,
    pub transition: Vec<Vec<f64>>,
    /// Required when any mode has a state-dependent rate.
    pub intensity_bound: Option<f64>,
    pub domain: DomainSpec,
    #[serde(default)]
    pub mode0: usize,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    #[serde(default = "default_boundary_samples")]
    pub boundary_samples: usize,
}

fn default_boundary_samples() -> usize {
    64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhageParams {
    pub seed: Option<u64>,
    #[serde(default)]
    pub rates: PhageRates,
    #[serde(default = "default_phage_starts")]
    pub starts: Vec<Vec<f64>>,
    #[serde(default = "default_phage_horizon")]
    pub horizon: f64,
    #[serde(default = "default_phage_step")]
    pub step: f64,
    #[serde(default = "default_phage_paths")]
    pub n_paths: usize,
    /// Extra randomized rate vectors on top of `rates`.
    #[serde(default)]
    pub random_configs: usize,
    #[serde(default)]
    pub initial_mode: usize,
    #[serde(default = "default_boundary_samples")]
    pub boundary_samples: usize,
}

fn default_phage_starts() -> Vec<Vec<f64>> {
    vec![vec![0.5, 0.5]]
}
fn default_phage_horizon() -> f64 {
    100.0
}
fn default_phage_step() -> f64 {
    0.02
}
fn default_phage_paths() -> usize {
    10_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum ExperimentConfig {
    Flow(FlowParams),
    Zeta(ZetaParams),
    Sde(SdeParams),
    Value(ValueParams),
    Pdmp(PdmpParams),
    Phage(PhageParams),
}

impl ExperimentConfig {
    pub fn command(&self) -> Command {
        match self {
            ExperimentConfig::Flow(_) => Command::Flow,
            ExperimentConfig::Zeta(_) => Command::Zeta,
            ExperimentConfig::Sde(_) => Command::Sde,
            ExperimentConfig::Value(_) => Command::Value,
            ExperimentConfig::Pdmp(_) => Command::Pdmp,
            ExperimentConfig::Phage(_) => Command::Phage,
        }
    }

    fn seed_slot(&mut self) -> &mut Option<u64> {
        match self {
            ExperimentConfig::Flow(p) => &mut p.seed,
            ExperimentConfig::Zeta(p) => &mut p.seed,
            ExperimentConfig::Sde(p) => &mut p.seed,
            ExperimentConfig::Value(p) => &mut p.seed,
            ExperimentConfig::Pdmp(p) => &mut p.seed,
            ExperimentConfig::Phage(p) => &mut p.seed,
        }
    }

    /// Applies a seed override; errors when no seed is available.
    pub fn resolve_seed(&mut self, overrides: Option<u64>) -> CliResult<u64> {
        let slot = self.seed_slot();
        if let Some(s) = overrides {
            *slot = Some(s);
        }
        slot.ok_or_else(|| CliError::Config("field 'seed': missing (give it in the config or with --seed)".into()))
    }

    pub fn validate(&self) -> CliResult<()> {
        match self {
            ExperimentConfig::Flow(p) => {
                positive(p.horizon, "horizon")?;
                positive(p.step, "step")?;
                require(p.record_stride > 0, "record_stride", "must be positive")?;
                let f = named_field(&p.field)?;
                require(p.x0.len() == f.dim, "x0", "dimension must match the field")?;
                p.domain.build()?;
            }
            ExperimentConfig::Zeta(p) => {
                positive(p.eps_min, "eps_min")?;
                if let Some(e) = p.eps_max {
                    positive(e, "eps_max")?;
                }
                require(p.n_levels >= 2, "n_levels", "must be at least 2")?;
                require(p.samples_per_level > 0, "samples_per_level", "must be positive")?;
                named_field(&p.field)?;
                p.domain.build()?;
            }
            ExperimentConfig::Sde(p) => {
                positive(p.horizon, "horizon")?;
                positive(p.step, "step")?;
                require(p.n_paths > 0, "n_paths", "must be positive")?;
                for d in &p.deltas {
                    positive(*d, "deltas")?;
                }
                let c = p.coefficients.build()?;
                require(p.x0.len() == c.dim, "x0", "dimension must match the coefficients")?;
            }
            ExperimentConfig::Value(p) => {
                positive(p.lambda, "lambda")?;
                positive(p.step, "step")?;
                require(p.tolerance > 0.0 && p.tolerance < 1.0, "tolerance", "must lie in (0, 1)")?;
                require(p.n_paths > 0, "n_paths", "must be positive")?;
                require(!p.starts.is_empty(), "starts", "must not be empty")?;
                if let Some(e) = p.epsilon {
                    positive(e, "epsilon")?;
                }
                let c = p.coefficients.build()?;
                require(p.starts.iter().all(|x| x.len() == c.dim), "starts", "dimension must match the coefficients")?;
                p.domain.build()?;
            }
            ExperimentConfig::Pdmp(p) => {
                positive(p.horizon, "horizon")?;
                positive(p.step, "step")?;
                build_triplet(p)?;
                require(p.x0.len() == p.modes.first().map_or(0, |m| m.drift_offset.len()), "x0", "dimension must match the modes")?;
                require(p.mode0 < p.modes.len(), "mode0", "unknown mode")?;
                p.domain.build()?;
            }
            ExperimentConfig::Phage(p) => {
                positive(p.horizon, "horizon")?;
                positive(p.step, "step")?;
                require(p.n_paths > 0, "n_paths", "must be positive")?;
                require(p.initial_mode < crate::phage::N_MODES, "initial_mode", "unknown mode")?;
                p.rates.validate().map_err(|e| CliError::Config(format!("field 'rates': {e}")))?;
                let model = PhageModel::new(p.rates).map_err(|e| CliError::Config(e.to_string()))?;
                for x in &p.starts {
                    require(x.len() == 2, "starts", "points must be two-dimensional")?;
                    model.to_chart(x).map_err(|e| CliError::Config(format!("field 'starts': {e}")))?;
                }
            }
        }
        Ok(())
    }
}

/// Parses a config, rejecting unknown keys, with line/column diagnostics.
pub fn parse_config(text: &str) -> CliResult<ExperimentConfig> {
    serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
}

fn build_triplet(p: &PdmpParams) -> CliResult<PdmpTriplet> {
    require(!p.modes.is_empty(), "modes", "must not be empty")?;
    let dim = p.modes[0].drift_offset.len();
    require(dim > 0, "modes.drift_offset", "must not be empty")?;
    for m in &p.modes {
        require(m.drift_offset.len() == dim, "modes.drift_offset", "dimensions differ between modes")?;
        require(
            m.drift_matrix.is_empty() || (m.drift_matrix.len() == dim && m.drift_matrix.iter().all(|r| r.len() == dim)),
            "modes.drift_matrix",
            "must be square with the state dimension",
        )?;
        require(m.rate_slope.is_empty() || m.rate_slope.len() == dim, "modes.rate_slope", "dimension mismatch")?;
        require(m.rate.is_finite() && m.rate >= 0.0, "modes.rate", "must be non-negative")?;
    }
    let state_dependent = p.modes.iter().any(|m| !m.rate_slope.is_empty());
    let bound = match p.intensity_bound {
        Some(b) => b,
        None => {
            require(!state_dependent, "intensity_bound", "required with state-dependent rates")?;
            p.modes.iter().map(|m| m.rate).fold(0.0, f64::max)
        }
    };
    let modes = Arc::new(p.modes.clone());
    let drift_modes = modes.clone();
    PdmpTriplet::new(
        p.modes.iter().map(|m| m.name.clone()).collect(),
        dim,
        Arc::new(move |k, x, _| {
            let m = &drift_modes[k];
            let mut v = m.drift_offset.clone();
            for (i, row) in m.drift_matrix.iter().enumerate() {
                v[i] += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            }
            v
        }),
        Arc::new(move |k, x, _| {
            let m = &modes[k];
            (m.rate + m.rate_slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).max(0.0).min(bound)
        }),
        bound,
        p.transition.clone(),
    )
    .map_err(|e| CliError::Config(format!("field 'transition': {e}")))
}

// ---------------------------------------------------------------- output

/// Rows of a CSV table: header plus formatted values.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn write(&self, path: &Path) -> CliResult<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
        w.write_record(&self.header).map_err(|e| io_err(path, e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| io_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

fn x_headers(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

/// Output of one experiment before it hits the disk.
pub struct Artifacts {
    pub csv_name: String,
    table: Table,
    pub summary: Value,
}

/// Git-style object hash (`blob <len>\0` prefix) with SHA-256.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------- runners

fn run_flow(p: &FlowParams) -> CliResult<Artifacts> {
    let field = named_field(&p.field)?;
    let domain = p.domain.build()?;
    let opts = FlowOptions { record_stride: p.record_stride, ..FlowOptions::default() };
    let res = integrate_flow_with(&field, &p.x0, p.horizon, p.step, Some(&domain), opts)?;
    let mut header = vec!["t".to_string()];
    header.extend(x_headers("x", res.dim));
    header.push("delta_K".into());
    let mut table = Table::new(header);
    for i in 0..res.len() {
        let x = res.state(i);
        let mut row = vec![f(res.times[i])];
        row.extend(x.iter().map(|v| f(*v)));
        row.push(f(domain.signed_distance(x)?));
        table.push(row);
    }
    let summary = json!({
        "hit_time": res.hit_time,
        "hit_point": res.hit_point,
        "final_time": res.times.last(),
        "final_state": res.last_state(),
        "final_delta_K": domain.signed_distance(res.last_state())?,
        "samples": res.len(),
    });
    Ok(Artifacts { csv_name: "flow.csv".into(), table, summary })
}

fn run_zeta(p: &ZetaParams) -> CliResult<Artifacts> {
    let field = named_field(&p.field)?;
    let domain = p.domain.build()?;
    let hi = p.eps_max.unwrap_or(domain.eps0()).min(domain.eps0());
    require(p.eps_min < hi, "eps_min", "must be below eps_max and the tube radius")?;
    let opts = ZetaOptions { samples_per_level: p.samples_per_level, component: p.component, ..ZetaOptions::default() };
    let prof = zeta_profile_with(&field, &domain, &log_grid(hi, p.eps_min, p.n_levels), &opts)?;
    let mut table = Table::new(vec!["eps".into(), "zeta".into(), "F_zeta_inv_probe".into()]);
    for (e, z) in prof.eps_grid.iter().zip(&prof.zeta_values) {
        let probe = if *z > 0.0 { f_zeta_inverse(&prof, 1.0 - prof.zeta_eps0 / z).unwrap_or(f64::NAN) } else { f64::NAN };
        table.push(vec![f(*e), f(*z), f(probe)]);
    }
    let summary = json!({
        "verdict": prof.verdict,
        "zeta_eps0": prof.zeta_eps0,
        "component": prof.component,
        "density_warning": prof.density_warning,
        "tail": prof.tail,
        "evaluations": prof.evaluations,
        "beta_grid": prof.beta_grid,
    });
    Ok(Artifacts { csv_name: "zeta.csv".into(), table, summary })
}

fn run_sde(p: &SdeParams, seed: u64) -> CliResult<Artifacts> {
    let coeffs = p.coefficients.build()?;
    let policy = p.coefficients.policies().remove(0);
    let moment = estimate_sup_moment(&coeffs, &policy, &p.x0, p.horizon, p.n_paths, p.step, seed)?;
    let rows: Vec<(f64, Vec<f64>)> = {
        use rayon::prelude::*;
        (0..p.n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut sup: f64 = 0.0;
                let last = simulate_observed(&coeffs, &policy, &p.x0, p.horizon, p.step, &mut path_rng(seed, i), &mut |_, _, x| {
                    sup = sup.max(x.iter().map(|v| v * v).sum());
                })?;
                Ok((sup, last))
            })
            .collect::<crate::Result<_>>()?
    };
    let mut header = vec!["path".to_string(), "sup_norm_sq".to_string()];
    header.extend(x_headers("xT_", coeffs.dim));
    let mut table = Table::new(header);
    for (i, (sup, last)) in rows.iter().enumerate() {
        let mut row = vec![i.to_string(), f(*sup)];
        row.extend(last.iter().map(|v| f(*v)));
        table.push(row);
    }
    let mut shaken = Vec::new();
    for &d in &p.deltas {
        let e = shaken_deviation(&coeffs, &policy, &ShakenDirection::random(d), &p.x0, p.horizon, p.step, p.n_paths, seed, true)?;
        shaken.push(json!({"delta": d, "mean": e.mean, "std_error": e.std_error}));
    }
    let slope = if p.deltas.len() >= 2 {
        let means: Vec<f64> = shaken.iter().map(|s| s["mean"].as_f64().unwrap_or(f64::NAN)).collect();
        Some(loglog_slope(&p.deltas, &means))
    } else {
        None
    };
    let summary = json!({
        "moment": moment,
        "declared_norms_check": coeffs.check_declared(&[p.x0.clone()]).is_ok(),
        "shaken_deviation": shaken,
        "shaken_loglog_slope": slope,
    });
    Ok(Artifacts { csv_name: "sde.csv".into(), table, summary })
}

fn run_value(p: &ValueParams, seed: u64) -> CliResult<Artifacts> {
    let coeffs = p.coefficients.build()?;
    let domain = p.domain.build()?;
    let mut cfg = ValueConfig::with_tolerance(p.lambda, p.tolerance, p.step, p.n_paths, seed);
    cfg.n_approx = p.n_approx;
    cfg.policy_family = p.coefficients.policies();
    let mut header = x_headers("x", coeffs.dim);
    header.extend(["value", "std_error", "policy"].map(String::from));
    let mut table = Table::new(header);
    let mut per_start = Vec::new();
    for x0 in &p.starts {
        let v = estimate_value(&coeffs, &domain, x0, &cfg)?;
        let cert = match p.epsilon {
            Some(eps) => Some(near_viability_certificate(&coeffs, &domain, x0, eps, &cfg)?),
            None => None,
        };
        let mut row: Vec<String> = x0.iter().map(|v| f(*v)).collect();
        row.extend([f(v.best.mean), f(v.best.std_error), v.policy_label.clone()]);
        table.push(row);
        per_start.push(json!({
            "x0": x0,
            "value": v.best,
            "policy": v.policy_label,
            "per_policy": v.per_policy,
            "certificate": cert,
        }));
    }
    let summary = json!({
        "lambda": p.lambda,
        "n": p.n_approx,
        "horizon": cfg.horizon_cut,
        "truncation_bound": cfg.truncation_bound(),
        "starts": per_start,
    });
    Ok(Artifacts { csv_name: "value.csv".into(), table, summary })
}

fn run_pdmp(p: &PdmpParams, seed: u64) -> CliResult<Artifacts> {
    let triplet = build_triplet(p)?;
    let domain = p.domain.build()?;
    let path = simulate_pdmp_with(
        &triplet,
        &PdmpControls::none(),
        p.mode0,
        &p.x0,
        p.horizon,
        &PdmpOptions::new(p.step),
        &mut path_rng(seed, 0),
    )?;
    let mut header = vec!["t".to_string(), "mode_index".to_string()];
    header.extend(x_headers("x", triplet.dim));
    header.push("delta_K".into());
    let mut table = Table::new(header);
    for (seg, mode) in path.segments.iter().zip(&path.modes) {
        for (t, x) in seg.times.iter().zip(&seg.states) {
            let mut row = vec![f(*t), mode.to_string()];
            row.extend(x.iter().map(|v| f(*v)));
            row.push(f(domain.signed_distance(x)?));
            table.push(row);
        }
    }
    let check = check_boundary_condition(&triplet, &domain, p.boundary_samples, &[])?;
    let summary = json!({
        "jump_count": path.jump_count(),
        "jump_times": path.jump_times,
        "final_mode": path.final_mode(),
        "final_state": path.final_state,
        "boundary_check": check,
    });
    Ok(Artifacts { csv_name: "pdmp.csv".into(), table, summary })
}

fn run_phage(p: &PhageParams, seed: u64) -> CliResult<Artifacts> {
    let mut table = Table::new(
        ["config", "start", "path", "min_log_distance", "min_distance"].map(String::from).to_vec(),
    );
    let mut reports = Vec::new();
    for (k, rates) in rate_sweep(&p.rates, p.random_configs, seed).into_iter().enumerate() {
        let model = PhageModel::new(rates)?;
        let opts = BorderOptions {
            initial_mode: p.initial_mode,
            boundary_samples: p.boundary_samples,
            ..BorderOptions::new(p.horizon, p.step, p.n_paths, crate::rng::derive_seed(seed, k as u64))
        };
        let rep = run_border_avoidance(&model, &p.starts, &opts)?;
        for (i, mins) in rep.per_path_min_log_distance.iter().enumerate() {
            for (j, m) in mins.iter().enumerate() {
                table.push(vec![k.to_string(), i.to_string(), j.to_string(), f(*m), f(m.exp())]);
            }
        }
        reports.push(rep);
    }
    let hit_count: usize = reports.iter().map(|r| r.hit_count).sum();
    let min_log = reports.iter().map(|r| r.min_log_distance).fold(f64::INFINITY, f64::min);
    let summary = json!({
        "hit_count": hit_count,
        "min_distance": min_log.exp(),
        "min_log_distance": min_log,
        "boundary_satisfied": reports.iter().all(|r| r.boundary_check.satisfied),
        "configs": reports,
    });
    Ok(Artifacts { csv_name: "phage_minima.csv".into(), table, summary })
}

/// Runs a validated config with a resolved seed.
pub fn execute(config: &ExperimentConfig, seed: u64) -> CliResult<Artifacts> {
    match config {
        ExperimentConfig::Flow(p) => run_flow(p),
        ExperimentConfig::Zeta(p) => run_zeta(p),
        ExperimentConfig::Sde(p) => run_sde(p, seed),
        ExperimentConfig::Value(p) => run_value(p, seed),
        ExperimentConfig::Pdmp(p) => run_pdmp(p, seed),
        ExperimentConfig::Phage(p) => run_phage(p, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// File name to git-style SHA-256 object hash.
    pub outputs: Vec<(String, String)>,
    pub wall_time_seconds: f64,
    pub version: String,
}

/// Writes the CSV and `summary.json` (which embeds the resolved config)
/// and returns the manifest, also written as `manifest.json`.
pub fn emit(config: &ExperimentConfig, seed: u64, artifacts: &Artifacts, out: &Path, started: Instant) -> CliResult<Manifest> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let csv_path = out.join(&artifacts.csv_name);
    artifacts.table.write(&csv_path)?;
    let summary = json!({
        "command": config.command().name(),
        "seed": seed,
        "config": config,
        "results": artifacts.summary,
    });
    let summary_path = out.join("summary.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| io_err(&summary_path, e))?;
    fs::write(&summary_path, &text).map_err(|e| io_err(&summary_path, e))?;
    let mut outputs = Vec::new();
    for p in [&csv_path, &summary_path] {
        let bytes = fs::read(p).map_err(|e| io_err(p, e))?;
        outputs.push((p.file_name().unwrap_or_default().to_string_lossy().into_owned(), content_hash(&bytes)));
    }
    let manifest = Manifest {
        command: config.command().name().into(),
        seed,
        config: config.clone(),
        outputs,
        wall_time_seconds: started.elapsed().as_secs_f64(),
        version: env!("CARGO_PKG_VERSION").into(),
    };
    let mpath = out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| io_err(&mpath, e))?;
    fs::write(&mpath, text).map_err(|e| io_err(&mpath, e))?;
    Ok(manifest)
}

// ---------------------------------------------------------------- front end

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Deterministic flow with boundary-hit detection.
    Flow,
    /// Sampled zeta profile and dichotomy verdict.
    Zeta,
    /// Controlled diffusion paths, moment and shaking checks.
    Sde,
    /// Discounted value estimates and certificates.
    Value,
    /// Switched PDMP path and boundary condition check.
    Pdmp,
    /// Phage-lambda border-avoidance ensemble.
    Phage,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Flow => "flow",
            Command::Zeta => "zeta",
            Command::Sde => "sde",
            Command::Value => "value",
            Command::Pdmp => "pdmp",
            Command::Phage => "phage",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "borderlab", version, about = "Invariance and near-viability experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for path ensembles (falls back to BORDERLAB_WORKERS).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

fn worker_count(flag: Option<usize>) -> CliResult<Option<usize>> {
    if let Some(n) = flag {
        require(n > 0, "--workers", "must be positive")?;
        return Ok(Some(n));
    }
    match std::env::var("BORDERLAB_WORKERS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config(format!("BORDERLAB_WORKERS='{v}' is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

/// Full pipeline for parsed arguments; returns the manifest.
pub fn run(cli: &Cli) -> CliResult<Manifest> {
    let started = Instant::now();
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut config = parse_config(&text)?;
    if config.command() != cli.command {
        return Err(CliError::Config(format!(
            "config is for '{}' but the subcommand is '{}'",
            config.command().name(),
            cli.command.name()
        )));
    }
    let seed = config.resolve_seed(cli.seed)?;
    config.validate()?;
    let workers = worker_count(cli.workers)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| CliError::Config(format!("worker pool: {e}")))?;
    let artifacts = pool.install(|| execute(&config, seed))?;
    emit(&config, seed, &artifacts, &cli.out, started)
}

/// Entry point used by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(m) => {
            println!("{}", serde_json::to_string(&m.outputs).unwrap_or_default());
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let ok = r#"{"command": "flow", "seed": 1, "field": "ex31", "x0": [0.75], "horizon": 2, "step": 0.01}"#;
        assert!(parse_config(ok).is_ok());
        let bad = r#"{"command": "flow", "seed": 1, "field": "ex31", "x0": [0.75], "horizon": 2, "step": 0.01, "stpe": 1}"#;
        let e = parse_config(bad).unwrap_err();
        assert!(e.to_string().contains("stpe"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn seed_is_mandatory() {
        let mut c = parse_config(r#"{"command": "phage", "n_paths": 1}"#).unwrap();
        assert!(c.resolve_seed(None).is_err());
        assert_eq!(c.resolve_seed(Some(9)).unwrap(), 9);
    }

    #[test]
    fn negative_step_is_a_config_error() {
        let c = parse_config(r#"{"command": "flow", "seed": 1, "field": "ex31", "x0": [0.75], "horizon": 2, "step": -0.01}"#)
            .unwrap();
        assert_eq!(c.validate().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn content_hash_of_empty_blob() {
        // `git hash-object --object-format=sha256 /dev/null`
        assert_eq!(content_hash(b""), "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
    }
}
