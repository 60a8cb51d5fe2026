//! Stochastic coagulation engines.
//!
//! [`run_physical`] is an exact event-driven Marcus-Lushnikov simulation with
//! thinning against a volume-only majorant. [`run_selfsim`] advances the
//! regularized self-similar equation by operator splitting: deterministic
//! characteristics, then a Poisson-thinned coagulation step, then optional
//! resampling.

use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion_flow::{integrate_characteristic, FlowParams};
use crate::kernels::{fusion_delta_value, sphere_area, truncated_value, FusionSpec, KernelSpec, TruncationParams};
use crate::state::{merge, merge_weighted, resample_in_place, Ensemble, Frame, MomentKey, MomentSeries, Particle};

/// Name of the auxiliary series column holding the fusion dissipation term.
pub const FUSION_DISSIPATION: &str = "fusion_dissipation";

/// How the physical engine bounds the kernel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MajorantMode {
    /// `K0 B(v, v')`, valid for every kernel.
    #[default]
    Bound,
    /// `(K0/2) B(v, v')`, equal to the kernel when `θ = 0`; every proposal is accepted.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    pub frame: Frame,
    /// Resampling target in the self-similar frame.
    pub n_particles: usize,
    /// Physical pair rates are `K / Λ`; `None` means `n / M_{0,0}` of the initial ensemble.
    pub lambda_sys: Option<f64>,
    pub dt_split: f64,
    pub resample_trigger: f64,
    pub t_end: f64,
    pub record_every: f64,
    /// Explicit recording clocks; overrides `record_every`.
    pub record_times: Option<Vec<f64>>,
    pub seed: u64,
    /// RNG stream, one per replica.
    pub stream: u64,
    pub ode_tol: f64,
    pub max_step: Option<f64>,
    pub majorant: MajorantMode,
    pub coagulation: bool,
    /// Self-similar scaling terms (see [`FlowParams::transport`]).
    pub transport: bool,
    /// See [`FlowParams::exact_paths`].
    pub exact_paths: bool,
    pub moments: Vec<MomentKey>,
    /// Clocks at which a copy of the ensemble is kept; they are added to the record schedule.
    pub snapshot_times: Option<Vec<f64>>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            frame: Frame::Physical,
            n_particles: 10_000,
            lambda_sys: None,
            dt_split: 0.01,
            resample_trigger: 10.0,
            t_end: 1.0,
            record_every: 0.1,
            record_times: None,
            seed: 0,
            stream: 0,
            ode_tol: 1e-8,
            max_step: None,
            majorant: MajorantMode::Bound,
            coagulation: true,
            transport: true,
            exact_paths: true,
            moments: default_moments(),
            snapshot_times: None,
        }
    }
}

/// `M_{0,0}, M_{0,1}, M_{1,0}, M_{2,0}, M_{0,2}`.
pub fn default_moments() -> Vec<MomentKey> {
    [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (2.0, 0.0), (0.0, 2.0)]
        .into_iter()
        .map(|(k, l)| MomentKey::new(k, l))
        .collect()
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.n_particles < 2 {
            return bad(format!("n_particles must be at least 2, got {}", self.n_particles));
        }
        if !(self.dt_split > 0.0 && self.dt_split <= 0.1) {
            return bad(format!("dt_split must lie in (0, 0.1], got {}", self.dt_split));
        }
        if !(self.resample_trigger > 1.0) {
            return bad(format!("resample_trigger must exceed 1, got {}", self.resample_trigger));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be finite and non-negative, got {}", self.t_end));
        }
        if !(self.record_every > 0.0) {
            return bad(format!("record_every must be positive, got {}", self.record_every));
        }
        if let Some(l) = self.lambda_sys {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("lambda_sys must be positive, got {l}"));
            }
        }
        for times in [&self.record_times, &self.snapshot_times].into_iter().flatten() {
            if times.iter().any(|t| !t.is_finite()) {
                return bad("record and snapshot times must be finite".into());
            }
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return bad(format!("max_step must be positive, got {h}"));
            }
        }
        Ok(())
    }

    /// Recording clocks in `[t0, t_end]`, always including both ends.
    pub fn schedule(&self, t0: f64) -> Vec<f64> {
        let mut times: Vec<f64> = match &self.record_times {
            Some(ts) => ts.iter().copied().filter(|&t| t >= t0 && t <= self.t_end).collect(),
            None => {
                let n = ((self.t_end - t0) / self.record_every + 1e-9).floor().max(0.0) as usize;
                (0..=n).map(|k| t0 + k as f64 * self.record_every).collect()
            }
        };
        if let Some(ts) = &self.snapshot_times {
            times.extend(ts.iter().copied().filter(|&t| t >= t0 && t <= self.t_end));
        }
        times.push(t0);
        times.push(self.t_end.max(t0));
        times.sort_by(f64::total_cmp);
        // merge points closer than a rounding error
        times.dedup_by(|b, a| (*b - *a).abs() <= 1e-12 * a.abs().max(1.0));
        times
    }
}

/// Counters collected while a run executes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventLog {
    pub proposed: u64,
    pub accepted: u64,
    pub thinning_rejections: u64,
    /// Proposals of a particle paired with itself.
    pub self_pairs: u64,
    /// Proposals touching a particle already merged in the current split step.
    pub blocked: u64,
    pub resamplings: u64,
    pub projections: u64,
    pub split_steps: u64,
    #[serde(skip)]
    pub wall_seconds: f64,
}

impl EventLog {
    pub fn merge_from(&mut self, o: &EventLog) {
        self.proposed += o.proposed;
        self.accepted += o.accepted;
        self.thinning_rejections += o.thinning_rejections;
        self.self_pairs += o.self_pairs;
        self.blocked += o.blocked;
        self.resamplings += o.resamplings;
        self.projections += o.projections;
        self.split_steps += o.split_steps;
        self.wall_seconds += o.wall_seconds;
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.proposed.max(1) as f64
    }
}

/// Complete binary tree of non-negative values supporting point updates and
/// sampling an index proportionally to its value.
#[derive(Clone, Debug)]
pub(crate) struct SumTree {
    size: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub(crate) fn new(values: impl ExactSizeIterator<Item = f64>) -> Self {
        let size = values.len().max(1).next_power_of_two();
        let mut nodes = vec![0.0; 2 * size];
        for (i, x) in values.enumerate() {
            nodes[size + i] = x;
        }
        for i in (1..size).rev() {
            nodes[i] = nodes[2 * i] + nodes[2 * i + 1];
        }
        Self { size, nodes }
    }

    #[inline]
    pub(crate) fn total(&self) -> f64 {
        self.nodes[1]
    }

    #[inline]
    pub(crate) fn get(&self, i: usize) -> f64 {
        self.nodes[self.size + i]
    }

    pub(crate) fn set(&mut self, i: usize, x: f64) {
        let mut k = self.size + i;
        self.nodes[k] = x;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    /// Index whose cumulative interval contains `u ∈ [0, total)`.
    pub(crate) fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.size {
            let left = self.nodes[2 * k];
            if u < left {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        k - self.size
    }

    pub(crate) fn sample<R: Rng>(&self, rng: &mut R, len: usize) -> usize {
        loop {
            let i = self.find(rng.random::<f64>() * self.total());
            // rounding can land on an empty trailing leaf
            if i < len && self.get(i) > 0.0 {
                return i;
            }
        }
    }
}

fn check_gamma(kernel: &KernelSpec, fusion: &FusionSpec) -> Result<()> {
    if (kernel.gamma() - fusion.gamma()).abs() > 1e-12 {
        return Err(Error::RegimeMismatch(format!(
            "kernel homogeneity {} differs from fusion gamma {}",
            kernel.gamma(),
            fusion.gamma()
        )));
    }
    Ok(())
}

fn majorant_prefactor(kernel: &KernelSpec, mode: MajorantMode) -> Result<f64> {
    match mode {
        MajorantMode::Bound => Ok(kernel.k0()),
        MajorantMode::Exact if kernel.theta() == 0.0 || kernel.is_oracle() => Ok(0.5 * kernel.k0()),
        MajorantMode::Exact => Err(Error::InvalidParams("exact majorant requires theta = 0".into())),
    }
}

fn flow_params(fusion: &FusionSpec, trunc: Option<TruncationParams>, cfg: &EngineConfig) -> Result<FlowParams> {
    let mut p = match trunc {
        None => FlowParams::physical(*fusion, cfg.ode_tol)?,
        Some(t) => FlowParams::selfsim(*fusion, t, cfg.ode_tol)?,
    };
    p.max_step = cfg.max_step.unwrap_or(f64::INFINITY);
    p.transport = cfg.transport;
    p.exact_paths = cfg.exact_paths;
    p.validate()?;
    Ok(p)
}

/// Physical dissipation `Σ w r (a − c0 v^{2/3}) ≥ 0`.
fn physical_dissipation(fusion: &FusionSpec, ps: &[Particle]) -> f64 {
    crate::numeric::exact_sum(ps.iter().map(|p| p.w * fusion.value(p.a, p.v) * (p.a - sphere_area(p.v))))
}

/// Self-similar dissipation `(1 − γ) Σ w r_δ (A − c0 V^{2/3}) ≥ 0`.
fn selfsim_dissipation(fusion: &FusionSpec, trunc: &TruncationParams, ps: &[Particle]) -> f64 {
    let s = crate::numeric::exact_sum(
        ps.iter().map(|p| p.w * fusion_delta_value(fusion, trunc, p.a, p.v) * (p.a - sphere_area(p.v))),
    );
    (1.0 - fusion.gamma()) * s
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub ensemble: Ensemble,
    pub series: MomentSeries,
    pub log: EventLog,
    /// Ensembles at the configured snapshot times, in clock order.
    pub snapshots: Vec<Ensemble>,
}

/// True when `t` matches one of the configured snapshot clocks.
fn wants_snapshot(cfg: &EngineConfig, t: f64) -> bool {
    cfg.snapshot_times
        .as_ref()
        .is_some_and(|ts| ts.iter().any(|&s| (s - t).abs() <= 1e-12 * s.abs().max(1.0)))
}

/// Event-driven simulation in physical time.
pub fn run_physical(
    e: Ensemble,
    kernel: &KernelSpec,
    fusion: &FusionSpec,
    cfg: &EngineConfig,
) -> Result<(Ensemble, MomentSeries, EventLog)> {
    let out = simulate_physical(e, kernel, fusion, cfg)?;
    Ok((out.ensemble, out.series, out.log))
}

/// [`run_physical`] that also returns snapshots.
///
/// Particles carry their own clock and are advanced along the fusion flow only
/// when they are touched by an event or a record, which is exact because the
/// flow acts on each particle independently.
pub fn simulate_physical(
    mut e: Ensemble,
    kernel: &KernelSpec,
    fusion: &FusionSpec,
    cfg: &EngineConfig,
) -> Result<RunOutput> {
    let started = Instant::now();
    cfg.validate()?;
    check_gamma(kernel, fusion)?;
    if e.frame != Frame::Physical {
        return Err(Error::WrongFrame("run_physical needs a physical-frame ensemble".into()));
    }
    if e.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    e.validate()?;
    if !e.equal_weights() {
        return Err(Error::Domain("physical engine needs equal weights".into()));
    }
    let lambda = cfg.lambda_sys.unwrap_or(e.lambda_sys);
    e.lambda_sys = lambda;
    e.reseed(cfg.seed, cfg.stream);
    let flow = flow_params(fusion, None, cfg)?;
    let prefactor = majorant_prefactor(kernel, cfg.majorant)? / lambda;
    let (alpha, beta) = (kernel.alpha(), kernel.beta());

    let mut log = EventLog::default();
    let mut series = MomentSeries::new(cfg.moments.clone(), vec![FUSION_DISSIPATION.to_string()]);
    let mut snapshots = Vec::new();
    let schedule = cfg.schedule(e.clock);
    let mut next_record = 0;

    let mut t = e.clock;
    let mut t_last = vec![t; e.len()];
    let mut ta = SumTree::new(e.particles.iter().map(|p| p.v.powf(-alpha)));
    let mut tb = SumTree::new(e.particles.iter().map(|p| p.v.powf(beta)));

    let advance = |p: &mut Particle, from: &mut f64, to: f64, log: &mut EventLog| -> Result<()> {
        if to > *from && !fusion.is_disabled() {
            let end = integrate_characteristic(&flow, p.a, p.v, to - *from)?;
            log.projections += end.projected as u64;
            p.a = end.a;
        }
        *from = to;
        Ok(())
    };

    loop {
        let n = e.len();
        let total = if n < 2 || !cfg.coagulation { 0.0 } else { prefactor * ta.total() * tb.total() };
        if !total.is_finite() {
            return Err(Error::Range(format!("majorant rate {total} is not finite")));
        }
        let t_next = if total > 0.0 { t + Exp::new(total).expect("positive rate").sample(e.rng_mut()) } else { f64::INFINITY };

        while next_record < schedule.len() && schedule[next_record] <= t_next.min(cfg.t_end) {
            let tr = schedule[next_record];
            for (p, tl) in e.particles.iter_mut().zip(t_last.iter_mut()) {
                advance(p, tl, tr, &mut log)?;
            }
            let aux = vec![physical_dissipation(fusion, &e.particles)];
            series.record(tr, &e.particles, aux)?;
            if wants_snapshot(cfg, tr) {
                let mut snap = Ensemble::new(e.particles.clone(), Frame::Physical, 0)?;
                snap.clock = tr;
                snap.lambda_sys = lambda;
                snapshots.push(snap);
            }
            next_record += 1;
        }
        if t_next > cfg.t_end {
            for (p, tl) in e.particles.iter_mut().zip(t_last.iter_mut()) {
                advance(p, tl, cfg.t_end, &mut log)?;
            }
            e.clock = cfg.t_end;
            break;
        }
        t = t_next;
        log.proposed += 1;
        let i = ta.sample(e.rng_mut(), n);
        let j = tb.sample(e.rng_mut(), n);
        if i == j {
            log.self_pairs += 1;
            continue;
        }
        advance(&mut e.particles[i], &mut t_last[i], t, &mut log)?;
        advance(&mut e.particles[j], &mut t_last[j], t, &mut log)?;
        let (pi, pj) = (e.particles[i], e.particles[j]);
        let k = kernel.value(pi.a, pi.v, pj.a, pj.v) / lambda;
        let bound = prefactor * (ta.get(i) * tb.get(j) + ta.get(j) * tb.get(i));
        let u: f64 = e.rng_mut().random();
        if u * bound >= k {
            log.thinning_rejections += 1;
            continue;
        }
        log.accepted += 1;
        let merged = merge(&pi, &pj)?;
        let (keep, drop) = (i.min(j), i.max(j));
        e.particles[keep] = merged;
        t_last[keep] = t;
        ta.set(keep, merged.v.powf(-alpha));
        tb.set(keep, merged.v.powf(beta));
        let last = n - 1;
        if drop != last {
            e.particles[drop] = e.particles[last];
            t_last[drop] = t_last[last];
            ta.set(drop, ta.get(last));
            tb.set(drop, tb.get(last));
        }
        ta.set(last, 0.0);
        tb.set(last, 0.0);
        e.particles.pop();
        t_last.pop();
    }
    log.wall_seconds = started.elapsed().as_secs_f64();
    Ok(RunOutput { ensemble: e, series, log, snapshots })
}

/// Checks that every particle lies in `[c0 ε^{2/3}, ∞) × [ε, 2R)`.
pub fn check_support(e: &Ensemble, trunc: &TruncationParams) -> Result<()> {
    let a_min = sphere_area(trunc.eps);
    for p in &e.particles {
        if p.v < trunc.eps || p.v >= 2.0 * trunc.big_r || p.a < a_min {
            return Err(Error::Domain(format!(
                "particle (a={}, v={}) outside the truncation support [{a_min}, inf) x [{}, {})",
                p.a,
                p.v,
                trunc.eps,
                2.0 * trunc.big_r
            )));
        }
    }
    Ok(())
}

/// Coagulation over one split step of length `dt` in the self-similar frame.
///
/// Pair `{i, j}` merges at rate `(1 − γ) K_{ε,R} max(w_i, w_j)`; the merged
/// particle carries `min(w_i, w_j)` so the number flux equals
/// `(1 − γ) K_{ε,R} w_i w_j`. Proposals are Poisson with a majorant fixed at the
/// start of the step; a particle merges at most once per step and merged
/// particles join the ensemble at the end of the step. Returns the number of merges.
pub fn step_tau_leap(
    e: &mut Ensemble,
    kernel: &KernelSpec,
    trunc: &TruncationParams,
    dt: f64,
    log: &mut EventLog,
) -> Result<usize> {
    let n = e.len();
    if n < 2 || dt == 0.0 {
        return Ok(0);
    }
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(Error::Domain(format!("split step {dt} outside (0, 0.1]")));
    }
    let gamma = kernel.gamma();
    let w_max = e.particles.iter().fold(0.0f64, |m, p| m.max(p.w));
    let scale = (1.0 - gamma) * w_max;

    // product-form proposal K0 (v_i^{-α} v_j^{β} + v_j^{-α} v_i^{β}) versus uniform proposal at the cap
    let (alpha, beta) = (kernel.alpha(), kernel.beta());
    let ta = SumTree::new(e.particles.iter().map(|p| p.v.powf(-alpha)));
    let tb = SumTree::new(e.particles.iter().map(|p| p.v.powf(beta)));
    let product_total = scale * kernel.k0() * ta.total() * tb.total();
    let cap = kernel.cap(trunc);
    let uniform_total = scale * cap * (n * n) as f64 / 2.0;
    let use_product = product_total <= uniform_total;
    let total = product_total.min(uniform_total);
    if !total.is_finite() {
        return Err(Error::Range(format!("majorant rate {total} is not finite")));
    }
    let expected = total * dt;
    if expected > 0.1 * n as f64 {
        return Err(Error::StepTooLarge { expected, n });
    }
    if expected == 0.0 {
        return Ok(0);
    }

    let proposals = Poisson::new(expected).expect("positive mean").sample(e.rng_mut()) as u64;
    let mut consumed = vec![false; n];
    let mut remainders: Vec<Option<Particle>> = vec![None; n];
    let mut born = Vec::new();
    for _ in 0..proposals {
        log.proposed += 1;
        let (i, j, bound) = if use_product {
            let i = ta.sample(e.rng_mut(), n);
            let j = tb.sample(e.rng_mut(), n);
            (i, j, kernel.k0() * (ta.get(i) * tb.get(j) + ta.get(j) * tb.get(i)))
        } else {
            let i = e.rng_mut().random_range(0..n);
            let j = e.rng_mut().random_range(0..n);
            (i, j, cap)
        };
        if i == j {
            log.self_pairs += 1;
            continue;
        }
        if consumed[i] || consumed[j] {
            log.blocked += 1;
            continue;
        }
        let (pi, pj) = (e.particles[i], e.particles[j]);
        let k = truncated_value(kernel, trunc, pi.a, pi.v, pj.a, pj.v) * pi.w.max(pj.w) / w_max;
        let u: f64 = e.rng_mut().random();
        if u * bound >= k {
            log.thinning_rejections += 1;
            continue;
        }
        log.accepted += 1;
        let (merged, rest) = merge_weighted(&pi, &pj);
        consumed[i] = true;
        consumed[j] = true;
        if let Some(r) = rest {
            let heavy = if pi.w >= pj.w { i } else { j };
            remainders[heavy] = Some(r);
        }
        born.push(merged);
    }
    let merges = born.len();
    if merges > 0 {
        let old = std::mem::take(&mut e.particles);
        e.particles = old
            .into_iter()
            .zip(consumed)
            .zip(remainders)
            .filter_map(|((p, c), r)| if c { r } else { Some(p) })
            .chain(born)
            .collect();
    }
    Ok(merges)
}

/// Split-step simulation in self-similar time `τ`.
pub fn run_selfsim(
    e: Ensemble,
    kernel: &KernelSpec,
    fusion: &FusionSpec,
    trunc: &TruncationParams,
    cfg: &EngineConfig,
) -> Result<(Ensemble, MomentSeries, EventLog)> {
    let out = simulate_selfsim(e, kernel, fusion, trunc, cfg)?;
    Ok((out.ensemble, out.series, out.log))
}

/// [`run_selfsim`] that also returns snapshots.
pub fn simulate_selfsim(
    mut e: Ensemble,
    kernel: &KernelSpec,
    fusion: &FusionSpec,
    trunc: &TruncationParams,
    cfg: &EngineConfig,
) -> Result<RunOutput> {
    let started = Instant::now();
    cfg.validate()?;
    check_gamma(kernel, fusion)?;
    if e.frame != Frame::SelfSimilar {
        return Err(Error::WrongFrame("run_selfsim needs a self-similar-frame ensemble".into()));
    }
    if e.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    e.validate()?;
    check_support(&e, trunc)?;
    e.reseed(cfg.seed, cfg.stream);
    let flow = flow_params(fusion, Some(*trunc), cfg)?;

    let mut log = EventLog::default();
    let mut series = MomentSeries::new(cfg.moments.clone(), vec![FUSION_DISSIPATION.to_string()]);
    let mut snapshots = Vec::new();
    let schedule = cfg.schedule(e.clock);
    let mut t = e.clock;
    series.record(t, &e.particles, vec![selfsim_dissipation(fusion, trunc, &e.particles)])?;
    if wants_snapshot(cfg, t) {
        snapshots.push(e.clone());
    }

    for &target in &schedule[1..] {
        while t < target {
            let dt = cfg.dt_split.min(target - t);
            let dt = if target - (t + dt) < 1e-12 * target.abs().max(1.0) { target - t } else { dt };

            let projected = e
                .particles
                .par_iter_mut()
                .map(|p| -> Result<u64> {
                    let end = integrate_characteristic(&flow, p.a, p.v, dt)?;
                    p.a = end.a;
                    p.v = end.v;
                    p.w *= end.h.exp();
                    Ok(end.projected as u64)
                })
                .try_reduce(|| 0, |x, y| Ok(x + y))?;
            log.projections += projected;

            if cfg.coagulation {
                step_tau_leap(&mut e, kernel, trunc, dt, &mut log)?;
            }
            if e.weight_ratio() > cfg.resample_trigger || e.len() < cfg.n_particles / 2 {
                resample_in_place(&mut e, cfg.n_particles)?;
                log.resamplings += 1;
            }
            log.split_steps += 1;
            t = if dt == target - t { target } else { t + dt };
        }
        e.clock = t;
        series.record(t, &e.particles, vec![selfsim_dissipation(fusion, trunc, &e.particles)])?;
        if wants_snapshot(cfg, t) {
            snapshots.push(e.clone());
        }
    }
    e.clock = t;
    log.wall_seconds = started.elapsed().as_secs_f64();
    Ok(RunOutput { ensemble: e, series, log, snapshots })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::mean_sem;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn spheres(n: usize, v: f64, frame: Frame) -> Ensemble {
        let w = 1.0 / n as f64;
        Ensemble::new((0..n).map(|_| Particle::sphere(v, w).unwrap()).collect(), frame, 0).unwrap()
    }

    #[test]
    fn sum_tree_samples_proportionally() {
        let vals = [1.0, 0.0, 3.0, 6.0];
        let mut tree = SumTree::new(vals.iter().copied());
        assert_eq!(tree.total(), 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut counts = [0usize; 4];
        for _ in 0..100_000 {
            counts[tree.sample(&mut rng, 4)] += 1;
        }
        assert_eq!(counts[1], 0);
        assert!((counts[3] as f64 / 1e5 - 0.6).abs() < 0.01);
        tree.set(3, 0.0);
        assert_eq!(tree.total(), 4.0);
        assert_eq!(tree.find(3.5), 2);
    }

    #[test]
    fn schedule_includes_ends() {
        let cfg = EngineConfig { t_end: 1.0, record_every: 0.3, ..Default::default() };
        assert_eq!(cfg.schedule(0.0), vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        let cfg = EngineConfig { t_end: 1.0, record_every: 0.25, ..Default::default() };
        assert_eq!(cfg.schedule(0.0).len(), 5);
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig { dt_split: 0.2, ..Default::default() }.validate().is_err());
        assert!(EngineConfig { n_particles: 1, ..Default::default() }.validate().is_err());
        assert!(EngineConfig { resample_trigger: 1.0, ..Default::default() }.validate().is_err());
        let json = serde_json::to_string(&EngineConfig::default()).unwrap();
        let back: EngineConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, EngineConfig::default());
        let partial: EngineConfig = serde_json::from_str(r#"{"t_end": 3.0}"#).unwrap();
        assert_eq!(partial.t_end, 3.0);
    }

    #[test]
    fn constant_kernel_count_at_t1() {
        let kernel = KernelSpec::constant(1.0).unwrap();
        let fusion = FusionSpec::disabled(0.0).unwrap();
        let mut ratios = Vec::new();
        for s in 0..20 {
            let cfg = EngineConfig { t_end: 1.0, record_every: 0.5, stream: s, ..Default::default() };
            let (_, series, log) = run_physical(spheres(2000, 1.0, Frame::Physical), &kernel, &fusion, &cfg).unwrap();
            let n = series.column("n").unwrap();
            ratios.push(n.last().unwrap() / n[0]);
            assert!(log.accepted <= log.proposed);
        }
        let (m, se) = mean_sem(&ratios);
        assert!((m - 2.0 / 3.0).abs() < 3.0 * se + 2e-3, "{m} ± {se}");
    }

    #[test]
    fn physical_conserves_volume_and_area_without_fusion() {
        let kernel = KernelSpec::new(1.0, 0.5, 0.5, 0.3).unwrap();
        let fusion = FusionSpec::disabled(0.0).unwrap();
        let ps: Vec<Particle> = (0..500).map(|i| Particle::new(5.0 + (i % 3) as f64, 1.0, 0.125).unwrap()).collect();
        let e = Ensemble::new(ps, Frame::Physical, 0).unwrap();
        let cfg = EngineConfig { t_end: 50.0, record_every: 5.0, ..Default::default() };
        let (end, series, log) = run_physical(e, &kernel, &fusion, &cfg).unwrap();
        assert!(log.accepted > 400);
        let m01 = series.moment(0.0, 1.0).unwrap();
        let m10 = series.moment(1.0, 0.0).unwrap();
        assert!(m01.iter().all(|&m| m == m01[0]));
        assert!(m10.iter().all(|&m| m == m10[0]));
        assert_eq!(end.clock, 50.0);
    }

    #[test]
    fn physical_is_deterministic_and_stream_dependent() {
        let kernel = KernelSpec::new(1.0, 0.5, 0.5, 0.0).unwrap();
        let fusion = FusionSpec::new(1.0, 1.0, 0.0).unwrap();
        let ps: Vec<Particle> = (0..300).map(|_| Particle::new(30.0, 1.0, 1.0 / 300.0).unwrap()).collect();
        let e = Ensemble::new(ps, Frame::Physical, 0).unwrap();
        let cfg = EngineConfig { t_end: 3.0, record_every: 0.5, seed: 4, ..Default::default() };
        let (a, sa, la) = run_physical(e.clone(), &kernel, &fusion, &cfg).unwrap();
        let (b, sb, lb) = run_physical(e.clone(), &kernel, &fusion, &cfg).unwrap();
        assert_eq!(a.particles, b.particles);
        assert_eq!(sa, sb);
        assert_eq!(la.accepted, lb.accepted);
        let cfg2 = EngineConfig { stream: 1, ..cfg };
        let (c, _, _) = run_physical(e, &kernel, &fusion, &cfg2).unwrap();
        assert_ne!(a.particles, c.particles);
        let m10 = sa.moment(1.0, 0.0).unwrap();
        assert!(m10.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn snapshots_and_frozen_coagulation() {
        let kernel = KernelSpec::constant(1.0).unwrap();
        let fusion = FusionSpec::new(1.0, 0.0, 0.0).unwrap();
        let ps = vec![Particle::new(20.0, 1.0, 0.01).unwrap(); 100];
        let e = Ensemble::new(ps, Frame::Physical, 0).unwrap();
        let cfg = EngineConfig {
            t_end: 1.0,
            coagulation: false,
            snapshot_times: Some(vec![0.25, 1.0]),
            ..Default::default()
        };
        let out = simulate_physical(e, &kernel, &fusion, &cfg).unwrap();
        assert_eq!(out.log.proposed, 0);
        assert_eq!(out.snapshots.len(), 2);
        assert_eq!(out.snapshots[0].clock, 0.25);
        assert!(out.series.clocks().contains(&0.25));
        assert_eq!(out.snapshots[1].particles, out.ensemble.particles);
    }

    #[test]
    fn exact_majorant_accepts_everything() {
        let kernel = KernelSpec::new(1.0, 0.25, 0.5, 0.0).unwrap();
        let fusion = FusionSpec::disabled(0.25).unwrap();
        let e = spheres(400, 1.0, Frame::Physical);
        let cfg = EngineConfig { t_end: 2.0, majorant: MajorantMode::Exact, ..Default::default() };
        let (_, _, log) = run_physical(e, &kernel, &fusion, &cfg).unwrap();
        assert_eq!(log.thinning_rejections, 0);
        let bad = KernelSpec::new(1.0, 0.25, 0.5, 0.5).unwrap();
        assert!(run_physical(spheres(10, 1.0, Frame::Physical), &bad, &fusion, &cfg).is_err());
    }

    #[test]
    fn physical_rejects_wrong_inputs() {
        let kernel = KernelSpec::constant(1.0).unwrap();
        let fusion = FusionSpec::disabled(0.0).unwrap();
        let cfg = EngineConfig::default();
        assert!(matches!(
            run_physical(spheres(10, 1.0, Frame::SelfSimilar), &kernel, &fusion, &cfg),
            Err(Error::WrongFrame(_))
        ));
        let mixed = Ensemble::new(
            vec![Particle::sphere(1.0, 1.0).unwrap(), Particle::sphere(1.0, 2.0).unwrap()],
            Frame::Physical,
            0,
        )
        .unwrap();
        assert!(run_physical(mixed, &kernel, &fusion, &cfg).is_err());
        let fusion_quarter = FusionSpec::disabled(0.25).unwrap();
        assert!(matches!(
            run_physical(spheres(10, 1.0, Frame::Physical), &kernel, &fusion_quarter, &cfg),
            Err(Error::RegimeMismatch(_))
        ));
    }

    #[test]
    fn pure_birth_in_selfsim_frame() {
        let kernel = KernelSpec::constant(1.0).unwrap();
        let fusion = FusionSpec::disabled(0.0).unwrap();
        let fp = FusionSpec::new(1.0, 1.0, 0.0).unwrap();
        let trunc = TruncationParams::new(0.01, 10.0, 0.01, &fp).unwrap();
        let cfg = EngineConfig {
            frame: Frame::SelfSimilar,
            n_particles: 100,
            t_end: 1.0,
            record_every: 0.5,
            coagulation: false,
            ..Default::default()
        };
        let (end, series, log) = run_selfsim(spheres(100, 1.0, Frame::SelfSimilar), &kernel, &fusion, &trunc, &cfg).unwrap();
        let m00 = series.moment(0.0, 0.0).unwrap();
        assert_relative_eq!(m00[2], m00[0] * 1f64.exp(), max_relative = 1e-10);
        let m01 = series.moment(0.0, 1.0).unwrap();
        assert_relative_eq!(m01[2], m01[0], max_relative = 1e-10);
        assert_eq!(end.len(), 100);
        assert_eq!(log.resamplings, 0);
    }

    #[test]
    fn two_body_merge_probability() {
        let kernel = KernelSpec::constant(2.0).unwrap();
        let fp = FusionSpec::new(1.0, 1.0, 0.0).unwrap();
        let trunc = TruncationParams::new(0.01, 10.0, 0.01, &fp).unwrap();
        let w = 0.5;
        let mut e = Ensemble::new(vec![Particle::sphere(1.0, w).unwrap(); 2], Frame::SelfSimilar, 0).unwrap();
        let dt = 0.05;
        let trials = 20_000;
        let mut merged = 0;
        let mut log = EventLog::default();
        for i in 0..trials {
            let mut f = e.clone();
            f.reseed(7, i);
            merged += step_tau_leap(&mut f, &kernel, &trunc, dt, &mut log).unwrap();
        }
        let p = merged as f64 / trials as f64;
        let expect = 1.0 - (-2.0 * w * dt).exp();
        assert!((p - expect).abs() < 3.0 * (expect * (1.0 - expect) / trials as f64).sqrt() + 1e-3, "{p} vs {expect}");
        e.reseed(1, 1);
        assert_eq!(step_tau_leap(&mut e, &kernel, &trunc, 0.0, &mut log).unwrap(), 0);
    }

    #[test]
    fn tau_leap_guard_and_weighted_conservation() {
        let kernel = KernelSpec::constant(1.0).unwrap();
        let fp = FusionSpec::new(1.0, 1.0, 0.0).unwrap();
        let trunc = TruncationParams::new(0.01, 100.0, 0.01, &fp).unwrap();
        // heavy weights give an expected merge count far above 0.1 n
        let mut e = Ensemble::new(vec![Particle::sphere(1.0, 100.0).unwrap(); 50], Frame::SelfSimilar, 0).unwrap();
        let mut log = EventLog::default();
        assert!(matches!(step_tau_leap(&mut e, &kernel, &trunc, 0.1, &mut log), Err(Error::StepTooLarge { .. })));

        let ps: Vec<Particle> = (0..400).map(|i| Particle::new(8.0, 1.0, 0.0005 * (1 + i % 4) as f64).unwrap()).collect();
        let mut e = Ensemble::new(ps, Frame::SelfSimilar, 0).unwrap();
        let before = (e.moment(0.0, 1.0).unwrap(), e.moment(1.0, 0.0).unwrap());
        let merges = step_tau_leap(&mut e, &kernel, &trunc, 0.1, &mut log).unwrap();
        assert!(merges > 0);
        assert_relative_eq!(e.moment(0.0, 1.0).unwrap(), before.0, max_relative = 1e-12);
        assert_relative_eq!(e.moment(1.0, 0.0).unwrap(), before.1, max_relative = 1e-12);
    }

    #[test]
    fn selfsim_rejects_support_violation() {
        let kernel = KernelSpec::constant(1.0).unwrap();
        let fusion = FusionSpec::disabled(0.0).unwrap();
        let fp = FusionSpec::new(1.0, 1.0, 0.0).unwrap();
        let trunc = TruncationParams::new(0.01, 2.0, 0.01, &fp).unwrap();
        let cfg = EngineConfig { frame: Frame::SelfSimilar, ..Default::default() };
        assert!(run_selfsim(spheres(10, 5.0, Frame::SelfSimilar), &kernel, &fusion, &trunc, &cfg).is_err());
        assert!(run_selfsim(spheres(10, 0.001, Frame::SelfSimilar), &kernel, &fusion, &trunc, &cfg).is_err());
    }
}
