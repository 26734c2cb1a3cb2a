//! Batch driver: configuration files, runs, sweeps, convergence studies,
//! probes and fits, with CSV and JSON outputs.
//!
//! Configs are TOML written as flat dotted keys (`grid.n = 800`). Every
//! section has defaults, unknown keys are rejected.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{fit_decay_exponent, fit_power_law, flux_balance_residual, ubar_limit, pointwise_decay_scan, u_plus, DecayField, DecayFit, EnergyRecord, ScanOptions};
use crate::equations::{Catalog, EquationSpec, LinearMetricPerturbation, PotentialKind, PotentialSpec};
use crate::error::{Error, Result};
use crate::geometry::FoliationChart;
use crate::initial_data::{make_data, weighted_norm, DataFamily, DataPair, NormParams, NormReport, RadialGrid};
use crate::oracles::{dalembert_jet, manufactured_solution, DalembertDrive, ManufacturedKind, ManufacturedSolution, PulseProfile};
use crate::probes::{probe, InequalityId, ProbeDomain, ProbeReport, ProbeSettings, SobolevWeights, TestFamily};
use crate::solver::{evolve, solution_error, BlowupReport, BlowupThresholds, Forcing, GradientScope, SolverSettings, Trajectory};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "CONELAB_THREADS";

fn cfg_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EquationConfig {
    /// FREE, JOHN1, JOHN2, WEAK_NULL_PAIR or GENERIC.
    pub catalog: String,
    /// GENERIC only: `H` coefficients on `phi` for `[00, 0r, rr, ang]`.
    pub h_phi: [f64; 4],
    /// GENERIC only: `H` coefficients on `(d_t phi, d_r phi)`.
    pub h_dphi: [[f64; 2]; 4],
    /// GENERIC only: symmetric `N^{ab}`.
    pub n: [[f64; 2]; 2],
    pub fields: usize,
}

impl Default for EquationConfig {
    fn default() -> Self {
        Self {
            catalog: "FREE".into(),
            h_phi: [0.0; 4],
            h_dphi: [[0.0; 2]; 4],
            n: [[0.0; 2]; 2],
            fields: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialConfig {
    /// ZERO, CONSTANT or DECAYING.
    pub kind: String,
    pub q0: f64,
    pub eta: f64,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            kind: "ZERO".into(),
            q0: 0.0,
            eta: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChartConfig {
    /// `M0`.
    pub mass: f64,
    /// `R`.
    pub inner_radius: f64,
}

impl Default for ChartConfig {
    fn default() -> Self {
        Self { mass: 0.05, inner_radius: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub r_in: f64,
    pub r_out: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { r_in: 1.0, r_out: 40.0, n: 800 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// ANNULUS_BUMP, POLY_TAIL, OUTGOING_PULSE, MANUFACTURED_TRIG or MANUFACTURED_BUMP.
    pub family: String,
    pub amplitude: f64,
    pub power: f64,
    pub center: f64,
    pub width: f64,
    /// Pulse shape for OUTGOING_PULSE: GAUSSIAN or BUMP.
    pub shape: String,
    /// `gamma0` of the weighted data norm, in `(1, 2)`.
    pub gamma0: f64,
    /// Amplitude of the second field relative to the first (two-field systems).
    pub second_scale: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            family: "OUTGOING_PULSE".into(),
            amplitude: 1.0,
            power: 1.5,
            center: -4.0,
            width: 0.5,
            shape: "GAUSSIAN".into(),
            gamma0: 1.5,
            second_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    /// Seed for parameter jitter in sweeps.
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { t_end: 16.0, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub sigma: f64,
    pub eps_ko: f64,
    pub snap_cadence: f64,
    pub margin: Option<f64>,
    pub gradient_factor: f64,
    pub dt_floor_factor: f64,
    pub gradient_scope: GradientScope,
    pub check_padding: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverSettings::default();
        Self {
            sigma: s.sigma,
            eps_ko: s.eps_ko,
            snap_cadence: s.snap_cadence,
            margin: s.margin,
            gradient_factor: s.thresholds.gradient_factor,
            dt_floor_factor: s.thresholds.dt_floor_factor,
            gradient_scope: s.thresholds.scope,
            check_padding: s.check_padding,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Explicit cone labels; when empty, `u_count` labels are spread
    /// geometrically over `[u_min, u_max]`.
    pub u: Vec<f64>,
    pub u_min: f64,
    pub u_max: f64,
    pub u_count: usize,
    pub ubar_max: Option<f64>,
    /// `M` in the energies; defaults to `|M0|`.
    pub energy_weight: Option<f64>,
    pub samples: Option<usize>,
    pub flux: bool,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        Self {
            u: Vec::new(),
            u_min: -12.0,
            u_max: -3.0,
            u_count: 8,
            ubar_max: None,
            energy_weight: None,
            samples: None,
            flux: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Relative amplitude jitter per sweep member, drawn from the run seed.
    pub jitter: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self { jitter: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// An inequality id, or `all`.
    pub inequality: String,
    pub family: String,
    pub u: f64,
    pub ubar: f64,
    pub nodes: usize,
    pub panels: usize,
    pub alpha: f64,
    /// Sobolev weight triples; empty means the three standard ones.
    pub sobolev: Vec<[f64; 3]>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        let s = ProbeSettings::default();
        Self {
            inequality: "all".into(),
            family: "shipped".into(),
            u: -4.0,
            ubar: 40.0,
            nodes: s.nodes,
            panels: s.panels,
            alpha: s.alpha,
            sobolev: Vec::new(),
        }
    }
}

/// Everything a run needs; see the README for the key reference.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub equation: EquationConfig,
    pub potential: PotentialConfig,
    pub chart: ChartConfig,
    pub grid: GridConfig,
    pub data: DataConfig,
    pub run: RunSection,
    pub solver: SolverConfig,
    pub diagnostics: DiagnosticsConfig,
    pub output: OutputConfig,
    pub sweep: SweepConfig,
    pub probe: ProbeConfig,
}

/// Exact reference solution attached to some data families.
#[derive(Debug, Clone)]
pub enum ExactSolution {
    Pulse(PulseProfile),
    Manufactured(ManufacturedSolution),
}

impl ExactSolution {
    pub fn phi(&self, t: f64, r: f64) -> f64 {
        match self {
            Self::Pulse(p) => dalembert_jet(p, t, r).phi,
            Self::Manufactured(m) => m.exact(t, r).phi,
        }
    }

    /// Source and exact boundary drives.
    pub fn forcing(&self) -> Box<dyn Forcing + '_> {
        match self {
            Self::Pulse(p) => Box::new(DalembertDrive(*p)),
            Self::Manufactured(m) => Box::new(m.clone()),
        }
    }
}

/// Built initial data plus the exact solution when the family has one.
pub struct PreparedData {
    pub data: Vec<DataPair>,
    pub exact: Option<ExactSolution>,
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(s).map_err(|e| cfg_err("<toml>", e.to_string().trim_end()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Serializes as flat dotted keys, one per line, in declaration order.
    pub fn to_toml_string(&self) -> Result<String> {
        let value = toml::Value::try_from(self).map_err(|e| cfg_err("<toml>", e.to_string()))?;
        let mut out = String::new();
        flatten("", &value, &mut out);
        Ok(out)
    }

    pub fn equation_spec(&self) -> Result<EquationSpec> {
        let e = &self.equation;
        let catalog = Catalog::parse(&e.catalog).ok_or_else(|| cfg_err("equation.catalog", format!("unknown catalog {:?}", e.catalog)))?;
        let spec = if catalog == Catalog::Generic {
            let h = LinearMetricPerturbation { phi: e.h_phi, dphi: e.h_dphi };
            EquationSpec::generic(h, e.n, e.fields).map_err(|err| cfg_err("equation", err.to_string()))?
        } else {
            EquationSpec::from_catalog(catalog)
        };
        Ok(spec.with_potential(self.potential_spec()?))
    }

    pub fn potential_spec(&self) -> Result<PotentialSpec> {
        let p = &self.potential;
        let kind = match p.kind.to_ascii_uppercase().as_str() {
            "ZERO" => PotentialKind::Zero,
            "CONSTANT" => PotentialKind::Constant,
            "DECAYING" => PotentialKind::Decaying,
            other => return Err(cfg_err("potential.kind", format!("unknown potential {other:?}"))),
        };
        let q0 = if kind == PotentialKind::Zero { 0.0 } else { p.q0 };
        PotentialSpec { kind, q0, eta: p.eta }
            .validated()
            .map_err(|e| cfg_err("potential", e.to_string()))
    }

    pub fn chart(&self) -> Result<FoliationChart> {
        FoliationChart::new(self.chart.mass, self.chart.inner_radius).map_err(|e| cfg_err("chart", e.to_string()))
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.grid.r_in, self.grid.r_out, self.grid.n).map_err(|e| cfg_err("grid", e.to_string()))
    }

    pub fn solver_settings(&self) -> SolverSettings {
        let s = &self.solver;
        SolverSettings {
            sigma: s.sigma,
            eps_ko: s.eps_ko,
            snap_cadence: s.snap_cadence,
            margin: s.margin,
            thresholds: BlowupThresholds {
                gradient_factor: s.gradient_factor,
                dt_floor_factor: s.dt_floor_factor,
                scope: s.gradient_scope,
            },
            check_padding: s.check_padding,
        }
    }

    /// The diagnostic cone labels.
    pub fn cone_labels(&self) -> Vec<f64> {
        let d = &self.diagnostics;
        if !d.u.is_empty() {
            return d.u.clone();
        }
        let n = d.u_count.max(1);
        if n == 1 {
            return vec![d.u_max];
        }
        // geometric in u_+ so the log-log fit sees evenly spaced points
        let (a, b) = (u_plus(d.u_max).ln(), u_plus(d.u_min).ln());
        (0..n)
            .map(|i| {
                let up = (a + (b - a) * i as f64 / (n - 1) as f64).exp();
                -(up - 1.0)
            })
            .collect()
    }

    pub fn energy_weight(&self) -> f64 {
        self.diagnostics.energy_weight.unwrap_or(self.chart.mass.abs())
    }

    /// Builds the initial data; rejects data whose weighted norm diverges.
    pub fn prepare_data(&self, spec: &EquationSpec, grid: &RadialGrid) -> Result<PreparedData> {
        let d = &self.data;
        let family = d.family.to_ascii_uppercase();
        let mut exact = None;
        let first = match family.as_str() {
            "ANNULUS_BUMP" => make_data(
                &DataFamily::AnnulusBump {
                    amplitude: d.amplitude,
                    center: d.center,
                    width: d.width,
                },
                grid,
                self.chart.inner_radius,
                None,
            ),
            "POLY_TAIL" => make_data(
                &DataFamily::PolyTail {
                    amplitude: d.amplitude,
                    power: d.power,
                },
                grid,
                self.chart.inner_radius,
                Some(NormParams {
                    gamma0: d.gamma0,
                    q0: spec.potential.sup(),
                }),
            ),
            "OUTGOING_PULSE" => {
                if !(d.width > 0.0) {
                    return Err(cfg_err("data.width", "pulse width must be positive"));
                }
                let profile = match d.shape.to_ascii_uppercase().as_str() {
                    "GAUSSIAN" => PulseProfile::gaussian(d.amplitude, d.center, d.width),
                    "BUMP" => PulseProfile::bump(d.amplitude, d.center, d.width),
                    other => return Err(cfg_err("data.shape", format!("unknown pulse shape {other:?}"))),
                };
                if spec.is_flat() && spec.semilinear_rhs(&[Default::default(); 2]) == [0.0; 2] && spec.potential.sup() == 0.0 {
                    exact = Some(ExactSolution::Pulse(profile));
                }
                make_data(&DataFamily::OutgoingPulse { profile }, grid, self.chart.inner_radius, None)
            }
            "MANUFACTURED_TRIG" | "MANUFACTURED_BUMP" => {
                let kind = if family == "MANUFACTURED_TRIG" {
                    ManufacturedKind::SeparableTrig { amplitude: d.amplitude }
                } else {
                    ManufacturedKind::TravelingBump {
                        amplitude: d.amplitude,
                        center: d.center,
                        width: d.width,
                    }
                };
                let m = manufactured_solution(kind, spec).map_err(|e| cfg_err("data.family", e.to_string()))?;
                let data = m.data(grid);
                exact = Some(ExactSolution::Manufactured(m));
                Ok(data)
            }
            other => return Err(cfg_err("data.family", format!("unknown data family {other:?}"))),
        }
        .map_err(|e| match e {
            Error::Config { .. } => e,
            other => cfg_err("data", other.to_string()),
        })?;
        let mut data = vec![first.clone()];
        if spec.field_count == 2 {
            data.push(first.scaled(d.second_scale));
        }
        Ok(PreparedData { data, exact })
    }

    /// Checks every field; the first problem is reported with its key.
    pub fn validate(&self) -> Result<()> {
        let spec = self.equation_spec()?;
        let chart = self.chart()?;
        let grid = self.grid()?;
        if !(self.data.gamma0 > 1.0 && self.data.gamma0 < 2.0) {
            return Err(cfg_err("data.gamma0", format!("must lie in (1, 2), got {}", self.data.gamma0)));
        }
        if !(self.run.t_end > 0.0) {
            return Err(cfg_err("run.t_end", format!("must be > 0, got {}", self.run.t_end)));
        }
        let s = &self.solver;
        if !(s.sigma > 0.0 && s.sigma <= 0.5) {
            return Err(cfg_err("solver.sigma", format!("must lie in (0, 0.5], got {}", s.sigma)));
        }
        if !(s.eps_ko >= 0.0) {
            return Err(cfg_err("solver.eps_ko", format!("must be >= 0, got {}", s.eps_ko)));
        }
        if !(s.snap_cadence > 0.0) {
            return Err(cfg_err("solver.snap_cadence", format!("must be > 0, got {}", s.snap_cadence)));
        }
        if !(s.gradient_factor > 1.0) {
            return Err(cfg_err("solver.gradient_factor", format!("must be > 1, got {}", s.gradient_factor)));
        }
        if !(s.dt_floor_factor > 0.0 && s.dt_floor_factor < 1.0) {
            return Err(cfg_err("solver.dt_floor_factor", format!("must lie in (0, 1), got {}", s.dt_floor_factor)));
        }
        if !(self.data.second_scale.is_finite()) {
            return Err(cfg_err("data.second_scale", "must be finite"));
        }
        let d = &self.diagnostics;
        if d.u.is_empty() && !(d.u_min < d.u_max && d.u_count >= 1) {
            return Err(cfg_err("diagnostics.u_min", "need u_min < u_max and u_count >= 1"));
        }
        for u in self.cone_labels() {
            if !(u <= chart.u0()) {
                return Err(cfg_err("diagnostics.u", format!("cone u = {u} lies inside the cone u0 = {}", chart.u0())));
            }
        }
        if let Some(m) = d.energy_weight {
            if !(m >= 0.0) {
                return Err(cfg_err("diagnostics.energy_weight", format!("must be >= 0, got {m}")));
            }
        }
        if !(self.sweep.jitter >= 0.0 && self.sweep.jitter < 1.0) {
            return Err(cfg_err("sweep.jitter", format!("must lie in [0, 1), got {}", self.sweep.jitter)));
        }
        self.prepare_data(&spec, &grid)?;
        Ok(())
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        other => {
            out.push_str(prefix);
            out.push_str(" = ");
            out.push_str(&other.to_string());
            out.push('\n');
        }
    }
}

/// Caps the global rayon pool at `CONELAB_THREADS` (if set); returns the worker count.
pub fn configure_threads() -> Result<usize> {
    let available = std::thread::available_parallelism().map_or(1, |n| n.get());
    let n = match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v.trim().parse().map_err(|_| cfg_err(THREADS_ENV, format!("not a positive integer: {v:?}")))?;
            if n == 0 {
                return Err(cfg_err(THREADS_ENV, "must be >= 1"));
            }
            n
        }
        Err(_) => available,
    };
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(rayon::current_num_threads())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormEntry {
    pub k: usize,
    pub value: Option<f64>,
    pub tail_part: Option<f64>,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedCone {
    pub u: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub t_reached: f64,
    pub steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    pub c_max: f64,
    pub margin: f64,
}

/// `manifest.json`, written last.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub software: String,
    pub version: String,
    pub config: RunConfig,
    pub weighted_norms: Vec<NormEntry>,
    pub summary: RunSummary,
    pub blowup: BlowupReport,
    pub skipped_cones: Vec<SkippedCone>,
    /// Fitted exponents keyed by column name; `None` when a fit was not possible.
    pub decay_fits: BTreeMap<String, Option<DecayFit>>,
    pub files: Vec<String>,
    pub wall_time_s: f64,
}

pub const ENERGY_COLUMNS: [&str; 10] = [
    "u", "ubar_max", "E_H", "E_Hbar", "W1_H", "W1_Hbar", "flux_residual", "max_r32_Lphi", "max_ru12_Lbphi", "max_r_phi",
];
pub const POINTWISE_COLUMNS: [&str; 6] = ["u", "u_plus", "max_r32_Lphi", "max_ru12_Lbphi", "max_r_phi", "max_q_r52_phi2"];

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out)
}

pub fn write_energies_csv<W: Write>(records: &[EnergyRecord], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(ENERGY_COLUMNS)?;
    for r in records {
        w.write_record(
            [r.u, r.ubar_max, r.e_h, r.e_hbar, r.w1_h, r.w1_hbar, r.flux_residual, r.max_r32_lphi, r.max_ru12_lbphi, r.max_r_phi]
                .map(|v| v.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pointwise_csv<W: Write>(records: &[EnergyRecord], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(POINTWISE_COLUMNS)?;
    for r in records {
        w.write_record([r.u, u_plus(r.u), r.max_r32_lphi, r.max_ru12_lbphi, r.max_r_phi, r.max_q_r52_phi2].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// In-memory result of [`execute`].
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub blowup: BlowupReport,
    pub records: Vec<EnergyRecord>,
    pub skipped: Vec<SkippedCone>,
    pub norms: Vec<NormEntry>,
    pub exact: Option<ExactSolution>,
}

impl RunOutcome {
    pub fn fits(&self) -> BTreeMap<String, Option<DecayFit>> {
        DecayField::ALL
            .into_iter()
            .map(|f| (f.column().to_string(), fit_decay_exponent(&self.records, f, None).ok()))
            .collect()
    }
}

/// Evolves and runs the cone diagnostics without touching the filesystem.
pub fn execute(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let spec = cfg.equation_spec()?;
    let chart = cfg.chart()?;
    let grid = cfg.grid()?;
    let prepared = cfg.prepare_data(&spec, &grid)?;
    let forcing = match &prepared.exact {
        Some(ExactSolution::Manufactured(m)) => Some(m as &dyn Forcing),
        _ => None,
    };
    let (trajectory, blowup) = evolve(&prepared.data, &spec, &chart, &grid, cfg.run.t_end, &cfg.solver_settings(), forcing)?;
    if blowup.detected {
        log::info!("blow-up detected at t = {:?}, r = {:?} ({:?})", blowup.t_blow, blowup.r_blow, blowup.cause);
    }

    let opts = ScanOptions {
        ubar_max: cfg.diagnostics.ubar_max,
        n_samples: cfg.diagnostics.samples,
        field: 0,
        flux: cfg.diagnostics.flux,
    };
    let m = cfg.energy_weight();
    let per_cone: Vec<_> = cfg
        .cone_labels()
        .par_iter()
        .map(|&u| pointwise_decay_scan(&trajectory, &[u], m, &opts).map(|mut v| v.remove(0)).map_err(|e| (u, e)))
        .collect();
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for r in per_cone {
        match r {
            Ok(rec) => records.push(rec),
            Err((u, e)) => {
                log::warn!("cone u = {u} skipped: {e}");
                skipped.push(SkippedCone { u, reason: e.to_string() });
            }
        }
    }

    let q0 = spec.potential.sup();
    let norms = (0..=3)
        .map(|k| match weighted_norm(&prepared.data[0], k, cfg.data.gamma0, cfg.chart.inner_radius, q0, &grid) {
            Ok(NormReport { value, tail_part, warning, .. }) => NormEntry {
                k,
                value: Some(value),
                tail_part: Some(tail_part),
                warning,
            },
            Err(e) => NormEntry {
                k,
                value: None,
                tail_part: None,
                warning: Some(e.to_string()),
            },
        })
        .collect();

    Ok(RunOutcome {
        trajectory,
        blowup,
        records,
        skipped,
        norms,
        exact: prepared.exact,
    })
}

/// `run <config>`: evolve, diagnose, and write `energies.csv`, `pointwise.csv`
/// and `manifest.json` into `output.dir`.
pub fn run(cfg: &RunConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let outcome = execute(cfg)?;
    let dir = &cfg.output.dir;
    fs::create_dir_all(dir)?;
    write_energies_csv(&outcome.records, fs::File::create(dir.join("energies.csv"))?)?;
    write_pointwise_csv(&outcome.records, fs::File::create(dir.join("pointwise.csv"))?)?;
    let t = &outcome.trajectory;
    let manifest = RunManifest {
        software: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        weighted_norms: outcome.norms.clone(),
        summary: RunSummary {
            t_reached: t.t_last(),
            steps: t.steps,
            dt_min: t.dt_min,
            dt_max: t.dt_max,
            c_max: t.c_max,
            margin: t.margin,
        },
        blowup: outcome.blowup,
        skipped_cones: outcome.skipped.clone(),
        decay_fits: outcome.fits(),
        files: vec!["energies.csv".into(), "pointwise.csv".into(), "manifest.json".into()],
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let mut f = fs::File::create(dir.join("manifest.json"))?;
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    f.write_all(b"\n")?;
    Ok(manifest)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SweepAxis {
    Amplitude,
    MassParam,
    Gamma0,
}

impl SweepAxis {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AMPLITUDE" => Ok(Self::Amplitude),
            "MASS_PARAM" => Ok(Self::MassParam),
            "GAMMA0" => Ok(Self::Gamma0),
            other => Err(cfg_err("--axis", format!("unknown sweep axis {other:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Amplitude => "AMPLITUDE",
            Self::MassParam => "MASS_PARAM",
            Self::Gamma0 => "GAMMA0",
        }
    }

    fn apply(self, cfg: &mut RunConfig, v: f64) {
        match self {
            Self::Amplitude => cfg.data.amplitude = v,
            Self::MassParam => cfg.chart.mass = v,
            Self::Gamma0 => cfg.data.gamma0 = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    /// Amplitude actually used after jitter.
    pub amplitude: f64,
    pub error: Option<String>,
    pub blowup: Option<BlowupReport>,
    pub c_max: Option<f64>,
    pub fits: BTreeMap<String, Option<DecayFit>>,
}

pub const SWEEP_FIT_FIELDS: [DecayField; 5] =
    [DecayField::EH, DecayField::W1H, DecayField::MaxR32Lphi, DecayField::MaxRu12Lbphi, DecayField::MaxRPhi];

/// `sweep`: one run per value, in parallel; failures are recorded, not fatal.
pub fn sweep(base: &RunConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepRow>> {
    if values.len() < 2 {
        return Err(cfg_err("--values", format!("a sweep needs at least 2 values, got {}", values.len())));
    }
    let rows: Vec<SweepRow> = values
        .par_iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut cfg = base.clone();
            axis.apply(&mut cfg, v);
            if base.sweep.jitter > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(base.run.seed.wrapping_add(i as u64));
                cfg.data.amplitude *= 1.0 + base.sweep.jitter * rng.random_range(-1.0..1.0);
            }
            cfg.output.dir = base.output.dir.join(format!("sweep_{}_{i:03}", axis.name().to_ascii_lowercase()));
            let amplitude = cfg.data.amplitude;
            match run(&cfg) {
                Ok(m) => SweepRow {
                    value: v,
                    amplitude,
                    error: None,
                    blowup: Some(m.blowup),
                    c_max: Some(m.summary.c_max),
                    fits: m.decay_fits,
                },
                Err(e) => {
                    log::warn!("sweep value {v} failed: {e}");
                    SweepRow {
                        value: v,
                        amplitude,
                        error: Some(e.to_string()),
                        blowup: None,
                        c_max: None,
                        fits: BTreeMap::new(),
                    }
                }
            }
        })
        .collect();
    fs::create_dir_all(&base.output.dir)?;
    write_sweep_csv(axis, &rows, fs::File::create(base.output.dir.join("sweep.csv"))?)?;
    Ok(rows)
}

fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(axis: SweepAxis, rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv_writer(out);
    let mut header: Vec<String> = ["axis", "value", "amplitude", "status", "detected", "t_blow", "r_blow", "inside_cone", "c_max"]
        .map(String::from)
        .to_vec();
    header.extend(SWEEP_FIT_FIELDS.iter().map(|f| format!("exp_{}", f.column())));
    header.push("error".into());
    w.write_record(&header)?;
    for r in rows {
        let b = r.blowup.unwrap_or_default();
        let mut rec = vec![
            axis.name().to_string(),
            r.value.to_string(),
            r.amplitude.to_string(),
            if r.error.is_some() { "FAILED" } else { "OK" }.to_string(),
            r.blowup.map(|b| b.detected.to_string()).unwrap_or_default(),
            opt_str(b.t_blow),
            opt_str(b.r_blow),
            r.blowup.map(|b| b.inside_cone.to_string()).unwrap_or_default(),
            opt_str(r.c_max),
        ];
        for f in SWEEP_FIT_FIELDS {
            rec.push(opt_str(r.fits.get(f.column()).copied().flatten().map(|x| x.exponent)));
        }
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelResult {
    pub level: usize,
    pub n: usize,
    pub dr: f64,
    /// Max error of `phi` over the trusted points at the final time.
    pub solution_error: f64,
    /// `NaN` when the identity does not apply.
    pub flux_residual: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservedOrder {
    pub diagnostic: String,
    /// One order per consecutive pair (errors) or triple (energy values).
    pub orders: Vec<f64>,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub levels: Vec<LevelResult>,
    pub orders: Vec<ObservedOrder>,
}

impl ConvergenceReport {
    pub fn order_of(&self, diagnostic: &str) -> Option<&ObservedOrder> {
        self.orders.iter().find(|o| o.diagnostic == diagnostic)
    }
}

fn error_orders(name: &str, levels: &[LevelResult], get: impl Fn(&LevelResult) -> f64) -> Option<ObservedOrder> {
    if levels.iter().any(|l| !get(l).is_finite()) {
        return None;
    }
    let orders: Vec<f64> = levels
        .windows(2)
        .map(|w| (get(&w[0]) / get(&w[1])).ln() / (w[1].level as f64 / w[0].level as f64).ln())
        .collect();
    let monotone = levels.windows(2).all(|w| get(&w[1]) < get(&w[0]));
    if !monotone {
        log::warn!("{name}: errors are not monotone under refinement");
    }
    Some(ObservedOrder {
        diagnostic: name.into(),
        orders,
        monotone,
    })
}

/// Richardson estimate from successive differences; assumes a constant refinement ratio.
fn richardson_orders(name: &str, levels: &[LevelResult], get: impl Fn(&LevelResult) -> f64) -> Option<ObservedOrder> {
    if levels.iter().any(|l| !get(l).is_finite()) {
        return None;
    }
    let diffs: Vec<f64> = levels.windows(2).map(|w| (get(&w[1]) - get(&w[0])).abs()).collect();
    let orders: Vec<f64> = diffs
        .windows(2)
        .zip(levels.windows(2))
        .map(|(d, l)| (d[0] / d[1]).ln() / (l[1].level as f64 / l[0].level as f64).ln())
        .collect();
    let monotone = diffs.windows(2).all(|d| d[1] < d[0]);
    Some(ObservedOrder {
        diagnostic: name.into(),
        orders,
        monotone,
    })
}

/// `converge`: reruns a config with an exact solution at `n_k = (n - 1) l_k + 1`.
pub fn converge(base: &RunConfig, levels: &[usize]) -> Result<ConvergenceReport> {
    if levels.len() < 3 {
        return Err(cfg_err("--levels", format!("need at least 3 levels, got {}", levels.len())));
    }
    if levels.windows(2).any(|w| w[1] <= w[0]) || levels[0] == 0 {
        return Err(cfg_err("--levels", "levels must be positive and strictly increasing"));
    }
    base.validate()?;
    let spec = base.equation_spec()?;
    let chart = base.chart()?;
    let u_cone = base.cone_labels()[0];
    // one truncation for every level, taken from the coarsest grid
    let ubar = match base.diagnostics.ubar_max {
        Some(v) => v,
        None => ubar_limit(&chart, &base.grid()?, base.run.t_end, u_cone)?,
    };
    let results: Vec<LevelResult> = levels
        .par_iter()
        .map(|&level| -> Result<LevelResult> {
            let mut cfg = base.clone();
            cfg.grid.n = (base.grid.n - 1) * level + 1;
            let grid = cfg.grid()?;
            let prepared = cfg.prepare_data(&spec, &grid)?;
            let exact = prepared
                .exact
                .as_ref()
                .ok_or_else(|| cfg_err("data.family", "converge needs OUTGOING_PULSE with a free equation or a MANUFACTURED family"))?;
            let forcing = exact.forcing();
            let (traj, blowup) = evolve(&prepared.data, &spec, &chart, &grid, cfg.run.t_end, &cfg.solver_settings(), Some(forcing.as_ref()))?;
            if blowup.detected {
                return Err(Error::InvalidInput(format!("blow-up during convergence run at level {level}")));
            }
            let last = traj.snapshots.last().expect("trajectory has snapshots");
            let (max_err, _) = solution_error(last, &grid, 0, true, |t, r| exact.phi(t, r));
            let is_pulse = matches!(exact, ExactSolution::Pulse(_));
            let flux_residual = if is_pulse && spec.is_flat() && spec.potential.is_constant() {
                flux_balance_residual(&traj, u_cone, ubar, samples_for(&traj, u_cone, ubar))?.residual
            } else {
                f64::NAN
            };
            let opts = ScanOptions {
                ubar_max: Some(ubar),
                n_samples: Some(samples_for(&traj, u_cone, ubar)),
                field: 0,
                flux: false,
            };
            let energy = pointwise_decay_scan(&traj, &[u_cone], cfg.energy_weight(), &opts)?[0].e_h;
            Ok(LevelResult {
                level,
                n: grid.n,
                dr: grid.dr(),
                solution_error: max_err,
                flux_residual,
                energy,
            })
        })
        .collect::<Result<_>>()?;
    let orders = [
        error_orders("solution_error", &results, |l| l.solution_error),
        error_orders("flux_residual", &results, |l| l.flux_residual),
        richardson_orders("E_H", &results, |l| l.energy),
    ]
    .into_iter()
    .flatten()
    .collect();
    let report = ConvergenceReport { levels: results, orders };
    fs::create_dir_all(&base.output.dir)?;
    write_convergence_csv(&report, fs::File::create(base.output.dir.join("converge.csv"))?)?;
    Ok(report)
}

fn samples_for(traj: &Trajectory, u: f64, ubar: f64) -> usize {
    (((2.0 * (ubar + u) / traj.grid.dr()) as usize).max(401)) | 1
}

pub fn write_convergence_csv<W: Write>(report: &ConvergenceReport, out: W) -> Result<()> {
    let mut w = csv_writer(out);
    w.write_record(["level", "n", "dr", "solution_error", "flux_residual", "E_H"])?;
    for l in &report.levels {
        w.write_record([
            l.level.to_string(),
            l.n.to_string(),
            l.dr.to_string(),
            l.solution_error.to_string(),
            l.flux_residual.to_string(),
            l.energy.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `probe <config>`: the `probe.*` section selects inequality, family and domain.
pub fn run_probes(cfg: &RunConfig) -> Result<Vec<ProbeReport>> {
    let p = &cfg.probe;
    let chart = cfg.chart()?;
    let domain = ProbeDomain::new(chart, p.u, p.ubar).map_err(|e| cfg_err("probe.u", e.to_string()))?;
    let family = TestFamily::by_name(&p.family, p.u, p.ubar).map_err(|e| cfg_err("probe.family", e.to_string()))?;
    let ids: Vec<InequalityId> = if p.inequality.eq_ignore_ascii_case("all") {
        InequalityId::ALL.to_vec()
    } else {
        vec![InequalityId::parse(&p.inequality).map_err(|e| cfg_err("probe.inequality", e.to_string()))?]
    };
    let weights: Vec<SobolevWeights> = if p.sobolev.is_empty() {
        SobolevWeights::STANDARD.to_vec()
    } else {
        p.sobolev
            .iter()
            .map(|w| {
                SobolevWeights { gamma: w[0], gamma0p: w[1], gamma2: w[2] }
                    .validated()
                    .map_err(|e| cfg_err("probe.sobolev", e.to_string()))
            })
            .collect::<Result<_>>()?
    };
    let base = ProbeSettings {
        nodes: p.nodes,
        panels: p.panels,
        alpha: p.alpha,
        energy_weight: cfg.diagnostics.energy_weight,
        sobolev: SobolevWeights::default(),
    };
    let mut reports = Vec::new();
    for id in ids {
        if id == InequalityId::Sobolev {
            for w in &weights {
                reports.push(probe(id, &family, &domain, &ProbeSettings { sobolev: *w, ..base })?);
            }
        } else {
            reports.push(probe(id, &family, &domain, &base)?);
        }
    }
    fs::create_dir_all(&cfg.output.dir)?;
    ProbeReport::write_csv(&reports, fs::File::create(cfg.output.dir.join("probes.csv"))?)?;
    Ok(reports)
}

/// `fit <csv> --field F --urange a,b`: power-law fit of one column against `u_+`.
pub fn fit_csv(path: &Path, field: &str, u_range: Option<(f64, f64)>) -> Result<DecayFit> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let iu = col("u").ok_or_else(|| Error::InvalidInput(format!("{} has no `u` column", path.display())))?;
    let iv = col(field).ok_or_else(|| {
        Error::InvalidInput(format!("{} has no column {field:?}; available: {}", path.display(), headers.iter().collect::<Vec<_>>().join(", ")))
    })?;
    let mut points = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        let parse = |i: usize| -> Result<f64> {
            rec[i].trim().parse().map_err(|_| Error::InvalidInput(format!("bad number {:?} in column {i}", &rec[i])))
        };
        let u = parse(iu)?;
        if u_range.is_some_and(|(a, b)| u < a.min(b) || u > a.max(b)) {
            continue;
        }
        points.push((u, parse(iv)?));
    }
    fit_power_law(&points)
}
