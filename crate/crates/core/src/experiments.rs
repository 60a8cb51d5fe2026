//! Initial data, replica runs and named scenarios with their diagnostics.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coag_mc::{simulate_physical, simulate_selfsim, EngineConfig, EventLog, MajorantMode, RunOutput};
use crate::config::{FusionSection, Model, RunConfig};
use crate::error::{Error, Result};
use crate::fusion_flow::relaxation_closed_form;
use crate::kernels::{sphere_area, KernelSpec, Regime, TruncationConfig};
use crate::moments::{
    check_area_budget, check_constant_kernel_oracle, check_d_invariant_region, check_physical_monotonicity,
    check_plateau, check_profile_convergence, check_ramification_ratios, d_threshold, BudgetOptions, CheckRecord,
    CheckStatus, DiagnosticReport, RamificationOptions,
};
use crate::numeric::exact_sum;
use crate::selfsim::{extract_profile, profile_distance, rescale_series, BinGrid, RescaledSnapshot};
use crate::state::{region_violation, Ensemble, Frame, MomentKey, MomentSeries, Particle};

/// Shape of the initial particle population.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialKind {
    /// All particles `(c0 v^{2/3}, v)`.
    MonodisperseSphere,
    /// All particles `(ratio c0 v^{2/3}, v)`, `ratio ≥ 1`.
    MonodisperseElongated { ratio: f64 },
    /// Spheres with log-normal volumes of median `v`.
    LogNormalVolume { sigma: f64 },
    /// Spheres of volume `v`, and a `fraction` of spheres of volume `v2`.
    TwoPoint { v2: f64, fraction: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialConfig {
    #[serde(flatten)]
    pub kind: InitialKind,
    /// Number of computational particles.
    pub n: usize,
    #[serde(default = "one")]
    pub v: f64,
    /// Target `M_{0,1}`; equal weights are chosen to hit it.
    #[serde(default = "one")]
    pub total_volume: f64,
}

fn one() -> f64 {
    1.0
}

impl InitialConfig {
    pub fn new(kind: InitialKind, n: usize) -> Self {
        Self { kind, n, v: 1.0, total_volume: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.n == 0 {
            return bad("initial data needs at least one particle".into());
        }
        if !(self.v > 0.0 && self.v.is_finite()) || !(self.total_volume > 0.0 && self.total_volume.is_finite()) {
            return bad(format!("volume {} and total volume {} must be positive", self.v, self.total_volume));
        }
        match self.kind {
            InitialKind::MonodisperseSphere => Ok(()),
            InitialKind::MonodisperseElongated { ratio } if ratio >= 1.0 && ratio.is_finite() => Ok(()),
            InitialKind::MonodisperseElongated { ratio } => bad(format!("shape ratio must be at least 1, got {ratio}")),
            InitialKind::LogNormalVolume { sigma } if sigma >= 0.0 && sigma.is_finite() => Ok(()),
            InitialKind::LogNormalVolume { sigma } => bad(format!("log-normal sigma must be non-negative, got {sigma}")),
            InitialKind::TwoPoint { v2, fraction } if v2 > 0.0 && (0.0..=1.0).contains(&fraction) => Ok(()),
            InitialKind::TwoPoint { v2, fraction } => bad(format!("two-point needs v2 > 0 and fraction in [0,1], got {v2}, {fraction}")),
        }
    }
}

/// Builds equally weighted initial data whose total volume is `total_volume`.
pub fn make_initial_data(cfg: &InitialConfig, frame: Frame, seed: u64) -> Result<Ensemble> {
    cfg.validate()?;
    let n = cfg.n;
    let shapes: Vec<(f64, f64)> = match cfg.kind {
        InitialKind::MonodisperseSphere => vec![(sphere_area(cfg.v), cfg.v); n],
        InitialKind::MonodisperseElongated { ratio } => vec![(ratio * sphere_area(cfg.v), cfg.v); n],
        InitialKind::LogNormalVolume { sigma } => {
            let dist = LogNormal::new(cfg.v.ln(), sigma).map_err(|e| Error::InvalidParams(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| dist.sample(&mut rng)).map(|v| (sphere_area(v), v)).collect()
        }
        InitialKind::TwoPoint { v2, fraction } => {
            let n2 = (fraction * n as f64).round() as usize;
            (0..n).map(|i| if i < n - n2 { cfg.v } else { v2 }).map(|v| (sphere_area(v), v)).collect()
        }
    };
    let w = cfg.total_volume / exact_sum(shapes.iter().map(|s| s.1));
    let ps = shapes.into_iter().map(|(a, v)| Particle::new(a, v, w)).collect::<Result<Vec<_>>>()?;
    Ensemble::new(ps, frame, seed)
}

/// Seed of the initial data of replica `r`.
pub fn replica_seed(seed: u64, r: usize) -> u64 {
    seed ^ (r as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Independent runs of one configuration and their aggregate.
#[derive(Clone, Debug)]
pub struct ReplicaRuns {
    pub initial: Vec<Ensemble>,
    pub outputs: Vec<RunOutput>,
    pub mean: MomentSeries,
    pub sem: MomentSeries,
    /// Counters summed over replicas.
    pub log: EventLog,
}

/// Runs `cfg.replicas` replicas in parallel; replica `r` uses RNG stream
/// `engine.stream + r` and initial data from [`replica_seed`].
pub fn run_replicas(cfg: &RunConfig) -> Result<ReplicaRuns> {
    let model = cfg.model()?;
    let frame = cfg.engine.frame;
    let runs = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| -> Result<(Ensemble, RunOutput)> {
            let e0 = make_initial_data(&cfg.initial, frame, replica_seed(cfg.engine.seed, r))?;
            let engine = EngineConfig { stream: cfg.engine.stream + r as u64, ..cfg.engine.clone() };
            let out = match model.trunc {
                None => simulate_physical(e0.clone(), &model.kernel, &model.fusion, &engine)?,
                Some(t) => simulate_selfsim(e0.clone(), &model.kernel, &model.fusion, &t, &engine)?,
            };
            Ok((e0, out))
        })
        .collect::<Result<Vec<_>>>()?;
    let (initial, outputs): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let series: Vec<MomentSeries> = outputs.iter().map(|o| o.series.clone()).collect();
    let (mean, sem) = MomentSeries::aggregate(&series)?;
    let mut log = EventLog::default();
    for o in &outputs {
        log.merge_from(&o.log);
    }
    Ok(ReplicaRuns { initial, outputs, mean, sem, log })
}

/// Named parameter presets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    /// Physical frame, `α > 0`, `μ > 0`: rescaled moments settle on plateaus.
    SelfSimMuPos,
    /// Self-similar frame, constant kernel, strong fusion with `μ < 0`.
    FastFusion,
    /// Physical frame, `μ < 0`, slow fusion, very elongated initial data.
    Ramification,
    /// Constant kernel without fusion against the exact particle count.
    OracleConstantKernel,
    /// Fusion alone against its closed-form relaxation.
    PureFusion,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 5] = [
        ScenarioName::SelfSimMuPos,
        ScenarioName::FastFusion,
        ScenarioName::Ramification,
        ScenarioName::OracleConstantKernel,
        ScenarioName::PureFusion,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioName::SelfSimMuPos => "self-sim-mu-pos",
            ScenarioName::FastFusion => "fast-fusion",
            ScenarioName::Ramification => "ramification",
            ScenarioName::OracleConstantKernel => "oracle-constant-kernel",
            ScenarioName::PureFusion => "pure-fusion",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL.into_iter().find(|n| n.as_str() == key).ok_or_else(|| {
            let names: Vec<&str> = Self::ALL.iter().map(|n| n.as_str()).collect();
            Error::InvalidParams(format!("unknown scenario '{s}', expected one of {}", names.join(", ")))
        })
    }
}

/// Pass/fail tolerances of a scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    /// Statistical tolerance in standard errors.
    pub sigmas: f64,
    /// Largest relative drift of a rescaled moment over the plateau window.
    pub plateau_drift: f64,
    /// Plateau window as fractions of `t_end`.
    pub plateau_window: (f64, f64),
    /// Number of trailing profile distances that must beat the early median.
    pub profile_late: usize,
    pub min_ratio_growth: f64,
    pub exponent_tol: f64,
    pub oracle_times: Vec<f64>,
    /// Relative tolerance against closed-form relaxation.
    pub closed_form_tol: f64,
    /// Smallest initial `M_{1,0}` for the ramification scenario.
    pub c2_candidate: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            sigmas: 3.0,
            plateau_drift: 0.10,
            plateau_window: (0.1, 1.0),
            profile_late: 2,
            min_ratio_growth: 5.0,
            exponent_tol: 0.05,
            oracle_times: vec![0.5, 1.0, 2.0],
            closed_form_tol: 1e-8,
            c2_candidate: 100.0,
        }
    }
}

/// A named configuration whose modelling hypotheses have been checked.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: ScenarioName,
    pub config: RunConfig,
    pub thresholds: Thresholds,
}

/// Log-spaced clocks `t_end · 2^{−k}`, ascending, starting at `t_min` or above.
fn geometric_times(t_min: f64, t_end: f64, per_octave: usize) -> Vec<f64> {
    let mut ts = Vec::new();
    let mut k = 0;
    loop {
        let t = t_end * 2f64.powf(-(k as f64) / per_octave as f64);
        if t < t_min {
            break;
        }
        ts.push(t);
        k += 1;
    }
    ts.reverse();
    ts
}

impl Scenario {
    /// Checks that `config` satisfies the hypotheses `name` relies on.
    pub fn new(name: ScenarioName, config: RunConfig, thresholds: Thresholds) -> Result<Self> {
        let m = config.model()?;
        let e = &config.engine;
        let frame = e.frame;
        let fail = |m: String| Err(Error::InvalidParams(format!("{name}: {m}")));
        let need_frame = |want: Frame| {
            if frame != want {
                return Err(Error::WrongFrame(format!("{name} runs in the {want} frame")));
            }
            Ok(())
        };
        match name {
            ScenarioName::OracleConstantKernel => {
                need_frame(Frame::Physical)?;
                if !m.kernel.is_oracle() || !m.fusion.is_disabled() {
                    return fail("needs the constant kernel and no fusion".into());
                }
                if thresholds.oracle_times.iter().any(|&t| t > e.t_end) {
                    return fail("oracle times exceed t_end".into());
                }
            }
            ScenarioName::PureFusion => {
                need_frame(Frame::Physical)?;
                if e.coagulation {
                    return fail("coagulation must be off".into());
                }
                if m.fusion.is_disabled() || !(m.fusion.mu() == 0.0 || m.fusion.mu() == 1.0) {
                    return fail("needs fusion with mu 0 or 1, where the relaxation is explicit".into());
                }
            }
            ScenarioName::SelfSimMuPos => {
                need_frame(Frame::Physical)?;
                if m.kernel.regime() != Regime::AlphaPositive || !(m.fusion.mu() > 0.0) || m.fusion.is_disabled() {
                    return fail("needs alpha > 0 and mu > 0".into());
                }
            }
            ScenarioName::Ramification => {
                need_frame(Frame::Physical)?;
                if m.fusion.is_disabled() || !(m.fusion.mu() < 0.0) {
                    return fail("needs fusion with mu < 0".into());
                }
                let e0 = make_initial_data(&config.initial, frame, replica_seed(e.seed, 0))?;
                let v0 = e0.moment(0.0, 1.0)?;
                if m.fusion.prefactor() > v0 {
                    return fail(format!("fusion prefactor {} exceeds the total volume {v0}", m.fusion.prefactor()));
                }
                let a0 = e0.moment(1.0, 0.0)?;
                if a0 < thresholds.c2_candidate {
                    return fail(format!("initial area {a0} is below the candidate {}", thresholds.c2_candidate));
                }
            }
            ScenarioName::FastFusion => {
                need_frame(Frame::SelfSimilar)?;
                let trunc = m.trunc.expect("self-similar model has truncation");
                if !m.kernel.is_oracle() || m.kernel.gamma() != 0.0 {
                    return fail("needs the constant kernel".into());
                }
                if m.fusion.is_disabled() || !(m.fusion.mu() < 0.0) {
                    return fail("needs fusion with mu < 0".into());
                }
                let lambda_bar = 4.0 / (9.0 * trunc.eps);
                if m.fusion.prefactor() < 2.0 * lambda_bar {
                    return fail(format!("fusion prefactor must be at least {}", 2.0 * lambda_bar));
                }
                let e0 = make_initial_data(&config.initial, frame, replica_seed(e.seed, 0))?;
                let d0 = e0.moment(1.0, 0.0)? + e0.moment(2.0, 0.0)?;
                if d0 > d_threshold(0.0) {
                    return fail(format!("D(0) = {d0} exceeds {}", d_threshold(0.0)));
                }
            }
        }
        Ok(Self { name, config, thresholds })
    }

    /// Desk-scale defaults.
    pub fn preset(name: ScenarioName) -> Result<Self> {
        let th = Thresholds::default();
        let sphere = InitialConfig::new(InitialKind::MonodisperseSphere, 10_000);
        let config = match name {
            ScenarioName::OracleConstantKernel => RunConfig {
                kernel: KernelSpec::constant(1.0)?,
                fusion: None,
                truncation: None,
                initial: sphere,
                engine: EngineConfig { t_end: 2.0, record_every: 0.25, majorant: MajorantMode::Exact, ..Default::default() },
                replicas: 30,
            },
            ScenarioName::PureFusion => RunConfig {
                kernel: KernelSpec::new(1.0, 0.5, 0.5, 0.0)?,
                fusion: Some(FusionSection { r: 1.0, mu: 0.0 }),
                truncation: None,
                initial: InitialConfig::new(InitialKind::MonodisperseElongated { ratio: 10.0 }, 1000),
                engine: EngineConfig {
                    t_end: 2.0,
                    record_every: 0.25,
                    coagulation: false,
                    exact_paths: false,
                    ode_tol: 1e-10,
                    ..Default::default()
                },
                replicas: 4,
            },
            ScenarioName::SelfSimMuPos => {
                let t_end = 100.0;
                let mut record = geometric_times(0.05, t_end, 4);
                record.insert(0, 0.0);
                RunConfig {
                    kernel: KernelSpec::new(1.0, 0.5, 0.5, 0.0)?,
                    fusion: Some(FusionSection { r: 1.0, mu: 1.0 }),
                    truncation: None,
                    initial: sphere,
                    engine: EngineConfig {
                        t_end,
                        record_times: Some(record),
                        snapshot_times: Some(geometric_times(0.9, t_end, 1)),
                        majorant: MajorantMode::Exact,
                        ..Default::default()
                    },
                    replicas: 30,
                }
            }
            ScenarioName::Ramification => {
                let t_end = 300.0;
                let mut record = geometric_times(0.05, t_end, 4);
                record.insert(0, 0.0);
                RunConfig {
                    kernel: KernelSpec::new(1.0, 0.5, 0.75, 0.0)?,
                    fusion: Some(FusionSection { r: 0.1, mu: -1.0 }),
                    truncation: None,
                    initial: InitialConfig::new(InitialKind::MonodisperseElongated { ratio: 50.0 }, 10_000),
                    engine: EngineConfig {
                        t_end,
                        record_times: Some(record),
                        majorant: MajorantMode::Exact,
                        ..Default::default()
                    },
                    replicas: 30,
                }
            }
            ScenarioName::FastFusion => {
                let eps = 1e-3;
                RunConfig {
                    kernel: KernelSpec::constant(1.0)?,
                    fusion: Some(FusionSection { r: 8.0 / (9.0 * eps), mu: -1.0 }),
                    truncation: Some(TruncationConfig { eps, big_r: 1e3, delta: 1e-3 }),
                    initial: InitialConfig {
                        total_volume: 2e-4,
                        ..InitialConfig::new(InitialKind::MonodisperseElongated { ratio: 2.0 }, 10_000)
                    },
                    engine: EngineConfig {
                        frame: Frame::SelfSimilar,
                        n_particles: 10_000,
                        t_end: 5.0,
                        record_every: 0.05,
                        moments: vec![
                            MomentKey::new(0.0, 0.0),
                            MomentKey::new(0.0, 1.0),
                            MomentKey::new(1.0, 0.0),
                            MomentKey::new(2.0, 0.0),
                        ],
                        ..Default::default()
                    },
                    replicas: 30,
                }
            }
        };
        Self::new(name, config, th)
    }

    /// Same scenario with `n` particles and `replicas` replicas.
    pub fn scaled(mut self, n: usize, replicas: usize) -> Result<Self> {
        self.config.initial.n = n;
        self.config.engine.n_particles = n;
        self.config.replicas = replicas;
        Self::new(self.name, self.config, self.thresholds)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.engine.seed = seed;
        self
    }
}

/// Scenario outcome; serializes deterministically for a fixed seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioName,
    pub passed: bool,
    pub checks: DiagnosticReport,
    pub events: EventLog,
    pub config: RunConfig,
}

impl ScenarioReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Keeps, for every check name, the record with the smallest margin.
fn worst_records(reports: impl IntoIterator<Item = DiagnosticReport>) -> DiagnosticReport {
    let mut out = DiagnosticReport::default();
    for rep in reports {
        for r in rep.records {
            match out.records.iter_mut().find(|o| o.name == r.name) {
                Some(o) => {
                    let worse = match (o.status, r.status) {
                        (CheckStatus::Info, _) => false,
                        (_, CheckStatus::Fail | CheckStatus::HypothesisUnmet) if o.status == CheckStatus::Pass => true,
                        _ => r.margin < o.margin,
                    };
                    if worse {
                        *o = r;
                    }
                }
                None => out.records.push(r),
            }
        }
    }
    out
}

fn pooled(snapshots: &[&Ensemble]) -> Result<Ensemble> {
    let k = snapshots.len() as f64;
    let ps: Vec<Particle> =
        snapshots.iter().flat_map(|e| e.particles.iter().map(move |p| Particle { w: p.w / k, ..*p })).collect();
    let mut e = Ensemble::new(ps, Frame::Physical, 0)?;
    e.clock = snapshots.first().map_or(0.0, |s| s.clock);
    Ok(e)
}

/// Rescaled profiles of the pooled replica snapshots on a common grid.
pub fn pooled_profiles(runs: &ReplicaRuns, gamma: f64, nx: usize, nv: usize) -> Result<Vec<RescaledSnapshot>> {
    let count = runs.outputs.first().map_or(0, |o| o.snapshots.len());
    let mut pools = Vec::with_capacity(count);
    for i in 0..count {
        let snaps: Vec<&Ensemble> = runs.outputs.iter().map(|o| &o.snapshots[i]).collect();
        pools.push(pooled(&snaps)?);
    }
    let refs: Vec<&Ensemble> = pools.iter().collect();
    let grid = BinGrid::auto(&refs, gamma, nx, nv)?;
    pools.iter().map(|e| extract_profile(e, e.clock, gamma, &grid)).collect()
}

fn closed_form_error(model: &Model, runs: &ReplicaRuns, tol: f64) -> Result<CheckRecord> {
    let mut worst = 0.0f64;
    for (e0, out) in runs.initial.iter().zip(&runs.outputs) {
        let t = out.ensemble.clock - e0.clock;
        for (p0, p) in e0.particles.iter().zip(&out.ensemble.particles) {
            let exact = relaxation_closed_form(&model.fusion, p0.a, p0.v, t);
            worst = worst.max(((p.a - exact) / exact).abs());
        }
    }
    Ok(CheckRecord {
        name: "closed_form_relaxation".into(),
        window: (0.0, runs.mean.clocks().last().copied().unwrap_or(0.0)),
        observed: worst,
        bound: tol,
        status: if worst <= tol { CheckStatus::Pass } else { CheckStatus::Fail },
        margin: tol - worst,
        note: "largest relative area error over particles".into(),
    })
}

/// Particles strictly outside `a ≥ c0 v^{2/3}` in every final ensemble and snapshot.
pub fn region_check(runs: &ReplicaRuns) -> CheckRecord {
    let (mut outside, mut worst, mut seen) = (0usize, 0.0f64, 0usize);
    for o in &runs.outputs {
        for e in std::iter::once(&o.ensemble).chain(&o.snapshots) {
            for p in &e.particles {
                let viol = region_violation(p.a, p.v);
                seen += 1;
                if viol > 0.0 {
                    outside += 1;
                    worst = worst.max(viol);
                }
            }
        }
    }
    CheckRecord {
        name: "isoperimetric_region".into(),
        window: (0.0, runs.mean.clocks().last().copied().unwrap_or(0.0)),
        observed: outside as f64,
        bound: 0.0,
        status: if outside == 0 { CheckStatus::Pass } else { CheckStatus::Fail },
        margin: -(outside as f64) + 0.0,
        note: format!("{seen} particles inspected, largest violation {worst:e}"),
    }
}

/// Runs all replicas of `s`, evaluates its checks and, when `out` is given,
/// writes `report.json`, `series_mean.csv`, `series_sem.csv`,
/// `final_ensemble.csv` (replica 0) and, where available, `profile_<t>.csv`.
pub fn run_scenario(s: &Scenario, out: Option<&Path>) -> Result<ScenarioReport> {
    let model = s.config.model()?;
    let runs = run_replicas(&s.config)?;
    let th = &s.thresholds;
    let gamma = model.kernel.gamma();
    let t_end = s.config.engine.t_end;
    let mut checks = DiagnosticReport::default();
    let mut profiles = Vec::new();
    let per_replica = |f: &dyn Fn(&MomentSeries) -> Result<DiagnosticReport>| -> Result<DiagnosticReport> {
        let reps = runs.outputs.iter().map(|o| f(&o.series)).collect::<Result<Vec<_>>>()?;
        Ok(worst_records(reps))
    };

    match s.name {
        ScenarioName::OracleConstantKernel => {
            checks.extend(check_constant_kernel_oracle(&runs.mean, Some(&runs.sem), &th.oracle_times, th.sigmas)?);
            checks.extend(per_replica(&check_physical_monotonicity)?);
        }
        ScenarioName::PureFusion => {
            checks.push(closed_form_error(&model, &runs, th.closed_form_tol)?);
            checks.extend(per_replica(&check_physical_monotonicity)?);
        }
        ScenarioName::SelfSimMuPos => {
            let rescaled = rescale_series(&runs.mean, gamma)?;
            let (from, to) = (th.plateau_window.0 * t_end, th.plateau_window.1 * t_end);
            checks.extend(check_plateau(&rescaled, &["M_0_0", "M_1_0", "M_0_2"], from, to, th.plateau_drift)?);
            checks.extend(per_replica(&check_physical_monotonicity)?);
            profiles = pooled_profiles(&runs, gamma, 8, 12)?;
            let distances = profiles
                .windows(2)
                .map(|w| Ok(((w[0].clock, w[1].clock), profile_distance(&w[0], &w[1])?)))
                .collect::<Result<Vec<_>>>()?;
            checks.extend(check_profile_convergence(&distances, th.profile_late)?);
        }
        ScenarioName::Ramification => {
            let opts = RamificationOptions {
                min_growth: th.min_ratio_growth,
                exponent_tol: th.exponent_tol,
                fit_window: None,
            };
            let exact = per_replica(&|series| {
                let mut r = check_ramification_ratios(series, Frame::Physical, gamma, &opts)?;
                r.records.retain(|c| c.name.starts_with("ratio_av_"));
                Ok(r)
            })?;
            checks.extend(exact);
            let mut mean = check_ramification_ratios(&runs.mean, Frame::Physical, gamma, &opts)?;
            mean.records.retain(|c| !c.name.starts_with("ratio_av_"));
            checks.extend(mean);
            checks.extend(per_replica(&check_physical_monotonicity)?);
        }
        ScenarioName::FastFusion => {
            checks.extend(check_d_invariant_region(&runs.mean, Some(&runs.sem), gamma, th.sigmas)?);
            let opts = BudgetOptions { sigmas: th.sigmas, fit_window: (1.0, t_end), ..Default::default() };
            checks.extend(check_area_budget(&runs.mean, Some(&runs.sem), &model.fusion, gamma, &opts)?);
        }
    }

    checks.push(region_check(&runs));

    let report = ScenarioReport {
        scenario: s.name,
        passed: checks.passed(),
        checks,
        events: runs.log.clone(),
        config: s.config.clone(),
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), report.to_json()?)?;
        runs.mean.write_csv(&dir.join("series_mean.csv"))?;
        runs.sem.write_csv(&dir.join("series_sem.csv"))?;
        runs.outputs[0].ensemble.write_csv(&dir.join("final_ensemble.csv"))?;
        for p in &profiles {
            p.write_csv(&dir.join(format!("profile_{}.csv", p.clock)))?;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn initial_data_hits_total_volume() {
        let kinds = [
            InitialKind::MonodisperseSphere,
            InitialKind::MonodisperseElongated { ratio: 3.0 },
            InitialKind::LogNormalVolume { sigma: 0.7 },
            InitialKind::TwoPoint { v2: 8.0, fraction: 0.25 },
        ];
        for kind in kinds {
            let cfg = InitialConfig { kind, n: 400, v: 2.0, total_volume: 5.0 };
            let e = make_initial_data(&cfg, Frame::Physical, 3).unwrap();
            assert_eq!(e.len(), 400);
            assert!(e.equal_weights());
            assert_relative_eq!(e.moment(0.0, 1.0).unwrap(), 5.0, max_relative = 1e-12);
        }
        let cfg = InitialConfig::new(InitialKind::MonodisperseSphere, 1000);
        let e = make_initial_data(&cfg, Frame::Physical, 0).unwrap();
        assert_eq!(e.particles[0], Particle::sphere(1.0, 1e-3).unwrap());
        let two = InitialConfig { kind: InitialKind::TwoPoint { v2: 8.0, fraction: 0.25 }, ..cfg };
        let e = make_initial_data(&two, Frame::Physical, 0).unwrap();
        assert_eq!(e.particles.iter().filter(|p| p.v == 8.0).count(), 250);
    }

    #[test]
    fn initial_data_validation() {
        let bad = InitialConfig::new(InitialKind::MonodisperseElongated { ratio: 0.5 }, 10);
        assert!(make_initial_data(&bad, Frame::Physical, 0).is_err());
        let bad = InitialConfig { n: 0, ..InitialConfig::new(InitialKind::MonodisperseSphere, 1) };
        assert!(make_initial_data(&bad, Frame::Physical, 0).is_err());
        let json = r#"{"kind": "two_point", "v2": 4.0, "fraction": 0.5, "n": 10}"#;
        let cfg: InitialConfig = serde_json::from_str(json).unwrap();
        assert_eq!(cfg.kind, InitialKind::TwoPoint { v2: 4.0, fraction: 0.5 });
        assert_eq!(cfg.total_volume, 1.0);
    }

    #[test]
    fn names_round_trip() {
        for n in ScenarioName::ALL {
            assert_eq!(n.as_str().parse::<ScenarioName>().unwrap(), n);
            assert_eq!(serde_json::to_string(&n).unwrap(), format!("\"{}\"", n.as_str()));
        }
        assert_eq!("FAST_FUSION".parse::<ScenarioName>().unwrap(), ScenarioName::FastFusion);
        assert!("nope".parse::<ScenarioName>().is_err());
    }

    #[test]
    fn presets_satisfy_their_hypotheses() {
        for n in ScenarioName::ALL {
            Scenario::preset(n).unwrap();
        }
    }

    #[test]
    fn hypotheses_are_enforced() {
        let mut s = Scenario::preset(ScenarioName::Ramification).unwrap();
        s.config.fusion = Some(FusionSection { r: 0.1, mu: 0.5 });
        assert!(Scenario::new(s.name, s.config.clone(), s.thresholds.clone()).is_err());
        s.config.fusion = Some(FusionSection { r: 5.0, mu: -1.0 });
        assert!(Scenario::new(s.name, s.config.clone(), s.thresholds.clone()).is_err());

        let mut s = Scenario::preset(ScenarioName::FastFusion).unwrap();
        s.config.initial.total_volume = 1.0;
        assert!(Scenario::new(s.name, s.config.clone(), s.thresholds.clone()).is_err());
        let mut s = Scenario::preset(ScenarioName::FastFusion).unwrap();
        s.config.fusion = Some(FusionSection { r: 10.0, mu: -1.0 });
        assert!(Scenario::new(s.name, s.config.clone(), s.thresholds.clone()).is_err());

        let mut s = Scenario::preset(ScenarioName::PureFusion).unwrap();
        s.config.engine.coagulation = true;
        assert!(Scenario::new(s.name, s.config.clone(), s.thresholds.clone()).is_err());
        let s = Scenario::preset(ScenarioName::OracleConstantKernel).unwrap();
        let mut cfg = s.config.clone();
        cfg.engine.frame = Frame::SelfSimilar;
        assert!(Scenario::new(s.name, cfg, s.thresholds.clone()).is_err());
    }

    #[test]
    fn geometric_clock_grid() {
        let ts = geometric_times(1.0, 8.0, 1);
        assert_eq!(ts, vec![1.0, 2.0, 4.0, 8.0]);
    }

    #[test]
    fn small_oracle_scenario_runs_and_is_reproducible() {
        let s = Scenario::preset(ScenarioName::OracleConstantKernel).unwrap().scaled(500, 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let r1 = run_scenario(&s, Some(dir.path())).unwrap();
        let r2 = run_scenario(&s, None).unwrap();
        assert_eq!(r1.to_json().unwrap(), r2.to_json().unwrap());
        assert!(dir.path().join("report.json").exists());
        assert!(dir.path().join("series_mean.csv").exists());
        assert!(r1.checks.get("volume_constant").unwrap().status == CheckStatus::Pass);
    }

    #[test]
    fn worst_record_wins() {
        let mk = |m: f64| {
            let mut r = DiagnosticReport::default();
            r.push(CheckRecord {
                name: "x".into(),
                window: (0.0, 1.0),
                observed: 0.0,
                bound: 0.0,
                status: if m >= 0.0 { CheckStatus::Pass } else { CheckStatus::Fail },
                margin: m,
                note: String::new(),
            });
            r
        };
        let w = worst_records([mk(1.0), mk(-0.5), mk(0.2)]);
        assert_eq!(w.records.len(), 1);
        assert_eq!(w.records[0].margin, -0.5);
    }
}
