//! Closed-form oracles and moment-inequality diagnostics on recorded series.
//!
//! Every check is a pure function of its inputs. When a standard-error series
//! from replicas is supplied, the statistical tolerance is `sigmas × SEM`
//! (3 by default); otherwise only the documented numerical slack applies.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coag_mc::FUSION_DISSIPATION;
use crate::error::{Error, Result};
use crate::kernels::{FusionSpec, KernelSpec, Regime};
use crate::numeric::{linear_fit, LinearFit};
use crate::state::{Frame, MomentKey, MomentSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The premise of the inequality does not hold for this input.
    HypothesisUnmet,
    /// Reported value without a pass/fail verdict.
    Info,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    pub window: (f64, f64),
    pub observed: f64,
    pub bound: f64,
    pub status: CheckStatus,
    /// Distance to the bound, positive when satisfied.
    pub margin: f64,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

impl CheckRecord {
    fn verdict(name: &str, window: (f64, f64), observed: f64, bound: f64, margin: f64) -> Self {
        let status = if margin >= 0.0 { CheckStatus::Pass } else { CheckStatus::Fail };
        Self { name: name.into(), window, observed, bound, status, margin, note: String::new() }
    }

    fn info(name: &str, window: (f64, f64), observed: f64) -> Self {
        Self {
            name: name.into(),
            window,
            observed,
            bound: f64::NAN,
            status: CheckStatus::Info,
            margin: f64::NAN,
            note: String::new(),
        }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = note.into();
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub records: Vec<CheckRecord>,
}

impl DiagnosticReport {
    pub fn push(&mut self, r: CheckRecord) {
        self.records.push(r);
    }

    pub fn extend(&mut self, other: DiagnosticReport) {
        self.records.extend(other.records);
    }

    /// No record failed.
    pub fn passed(&self) -> bool {
        self.records.iter().all(|r| r.status != CheckStatus::Fail)
    }

    pub fn get(&self, name: &str) -> Option<&CheckRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Fixed-width summary for terminals.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<34} {:<16} {:>13} {:>13} {:>13}", "check", "status", "observed", "bound", "margin");
        for r in &self.records {
            let status = match r.status {
                CheckStatus::Pass => "pass",
                CheckStatus::Fail => "FAIL",
                CheckStatus::HypothesisUnmet => "hypothesis unmet",
                CheckStatus::Info => "info",
            };
            let _ = writeln!(
                s,
                "{:<34} {:<16} {:>13.6e} {:>13.6e} {:>13.6e}",
                r.name, status, r.observed, r.bound, r.margin
            );
        }
        s
    }
}

/// Mean-field number concentration for `K ≡ 1`: `2 n0 / (2 + n0 t)`.
pub fn oracle_constant_kernel_count(n0: f64, t: f64) -> f64 {
    debug_assert!(n0 > 0.0 && t >= 0.0);
    2.0 * n0 / (2.0 + n0 * t)
}

fn sem_column(sem: Option<&MomentSeries>, name: &str, len: usize) -> Result<Vec<f64>> {
    match sem {
        Some(s) => {
            let c = s.column(name)?;
            if c.len() != len {
                return Err(Error::Domain("mean and SEM series differ in length".into()));
            }
            Ok(c)
        }
        None => Ok(vec![0.0; len]),
    }
}

fn window_of(clock: &[f64]) -> (f64, f64) {
    (clock.first().copied().unwrap_or(f64::NAN), clock.last().copied().unwrap_or(f64::NAN))
}

/// Compares `M_{0,0}(t)` with the constant-kernel oracle started from `M_{0,0}(0)`
/// at the recorded clocks closest to `times`.
pub fn check_constant_kernel_oracle(
    series: &MomentSeries,
    sem: Option<&MomentSeries>,
    times: &[f64],
    sigmas: f64,
) -> Result<DiagnosticReport> {
    let clock = series.clocks();
    let m00 = series.moment(0.0, 0.0)?;
    let se = sem_column(sem, "M_0_0", m00.len())?;
    let n0 = *m00.first().ok_or(Error::EmptyEnsemble)?;
    let mut rep = DiagnosticReport::default();
    for &t in times {
        let i = nearest(&clock, t);
        let oracle = oracle_constant_kernel_count(n0, clock[i]);
        let dev = (m00[i] - oracle).abs();
        rep.push(
            CheckRecord::verdict(&format!("oracle_count_t{}", clock[i]), (clock[i], clock[i]), m00[i], oracle, sigmas * se[i] - dev)
                .with_note(format!("tolerance {sigmas} sem = {:.3e}", sigmas * se[i])),
        );
    }
    Ok(rep)
}

fn nearest(clock: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, &c) in clock.iter().enumerate() {
        if (c - t).abs() < (clock[best] - t).abs() {
            best = i;
        }
    }
    best
}

/// Settings for [`check_area_budget`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetOptions {
    pub sigmas: f64,
    /// Relative slack for finite-difference error, as a fraction of `A/3 + F`.
    pub rel_slack: f64,
    /// Window for the growth-exponent fit of `log A` against `τ`.
    pub fit_window: (f64, f64),
}

impl Default for BudgetOptions {
    fn default() -> Self {
        Self { sigmas: 3.0, rel_slack: 0.01, fit_window: (1.0, 5.0) }
    }
}

/// Checks that the central-difference derivative of `A = M_{1,0}` lies in
/// `[A/3 − F, A/3]`, with `F` the recorded fusion dissipation, and reports the
/// fitted growth exponent of `A`. The band edges use the extremes of `A` and
/// `F` over the three stencil points.
pub fn check_area_budget(
    series: &MomentSeries,
    sem: Option<&MomentSeries>,
    fusion: &FusionSpec,
    gamma: f64,
    opts: &BudgetOptions,
) -> Result<DiagnosticReport> {
    if !(0.0..1.0).contains(&gamma) || (fusion.gamma() - gamma).abs() > 1e-12 {
        return Err(Error::RegimeMismatch(format!("gamma {gamma} does not match the fusion rate")));
    }
    let tau = series.clocks();
    let a = series.moment(1.0, 0.0)?;
    let f = series.column(FUSION_DISSIPATION)?;
    let se = sem_column(sem, "M_1_0", a.len())?;
    let mut rep = DiagnosticReport::default();
    let mut worst = f64::INFINITY;
    let mut worst_at = f64::NAN;
    let mut worst_deriv = f64::NAN;
    for i in 1..tau.len().saturating_sub(1) {
        let dtau = tau[i + 1] - tau[i - 1];
        let deriv = (a[i + 1] - a[i - 1]) / dtau;
        let stat = opts.sigmas * (se[i + 1].powi(2) + se[i - 1].powi(2)).sqrt() / dtau;
        // the difference quotient equals the derivative somewhere in the stencil
        let a_hi = a[i - 1].max(a[i]).max(a[i + 1]);
        let a_lo = a[i - 1].min(a[i]).min(a[i + 1]);
        let f_hi = f[i - 1].max(f[i]).max(f[i + 1]);
        let slack = stat + opts.rel_slack * (a[i] / 3.0 + f[i]);
        let upper = a_hi / 3.0 + slack - deriv;
        let lower = deriv - (a_lo / 3.0 - f_hi - slack);
        let m = upper.min(lower);
        if m < worst {
            worst = m;
            worst_at = tau[i];
            worst_deriv = deriv;
        }
    }
    if worst.is_finite() {
        rep.push(
            CheckRecord::verdict("area_budget_band", window_of(&tau), worst_deriv, f64::NAN, worst)
                .with_note(format!("tightest at clock {worst_at}")),
        );
    }
    if let Some(fit) = fit_log(&tau, &a, opts.fit_window) {
        rep.push(CheckRecord::info("area_growth_exponent", opts.fit_window, fit.slope));
    }
    Ok(rep)
}

/// Least-squares fit of `log y` against `x` over points with `x` in `window`.
pub fn fit_log(x: &[f64], y: &[f64], window: (f64, f64)) -> Option<LinearFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(&xi, &yi)| xi >= window.0 && xi <= window.1 && yi > 0.0)
        .map(|(&xi, &yi)| (xi, yi.ln()))
        .unzip();
    linear_fit(&xs, &ys)
}

/// `1 / (12 (1 − γ))`.
pub fn d_threshold(gamma: f64) -> f64 {
    1.0 / (12.0 * (1.0 - gamma))
}

/// Forward invariance of `D = M_{1,0} + M_{2,0} ≤ 1/(12(1−γ))`.
///
/// If `D(0)` already exceeds the threshold the record is `HypothesisUnmet`.
pub fn check_d_invariant_region(
    series: &MomentSeries,
    sem: Option<&MomentSeries>,
    gamma: f64,
    sigmas: f64,
) -> Result<DiagnosticReport> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::RegimeMismatch(format!("gamma {gamma} outside [0,1)")));
    }
    let tau = series.clocks();
    let m10 = series.moment(1.0, 0.0)?;
    let m20 = series.moment(2.0, 0.0)?;
    let s10 = sem_column(sem, "M_1_0", m10.len())?;
    let s20 = sem_column(sem, "M_2_0", m20.len())?;
    let threshold = d_threshold(gamma);
    let d: Vec<f64> = m10.iter().zip(&m20).map(|(a, b)| a + b).collect();
    let d0 = *d.first().ok_or(Error::EmptyEnsemble)?;
    let mut rep = DiagnosticReport::default();
    if d0 > threshold {
        rep.push(CheckRecord {
            name: "d_invariant_region".into(),
            window: window_of(&tau),
            observed: d0,
            bound: threshold,
            status: CheckStatus::HypothesisUnmet,
            margin: threshold - d0,
            note: "hypothesis unmet: D(0) exceeds the threshold".into(),
        });
        return Ok(rep);
    }
    let mut worst = f64::INFINITY;
    let mut d_max = 0.0f64;
    for i in 0..d.len() {
        let tol = sigmas * (s10[i] + s20[i]);
        worst = worst.min(threshold + tol - d[i]);
        d_max = d_max.max(d[i]);
    }
    rep.push(CheckRecord::verdict("d_invariant_region", window_of(&tau), d_max, threshold, worst));
    rep.push(CheckRecord::info("d_initial", (tau[0], tau[0]), d0));
    Ok(rep)
}

/// Moments whose bounds define the forward-invariant set of the regularized
/// problem: total volume, a small negative volume moment (or `M_{0,γ}` when
/// `α = 0`), a large volume moment `M_{0,m}` and the total area.
///
/// `eps_tilde ∈ (0,1)`; `m = max(1, |σ|/μ) + 1/2` for `μ > 0`, else `1 + eps_tilde`.
pub fn invariant_set_keys(kernel: &KernelSpec, fusion: &FusionSpec, eps_tilde: f64) -> Result<Vec<MomentKey>> {
    if !(eps_tilde > 0.0 && eps_tilde < 1.0) {
        return Err(Error::InvalidParams(format!("eps_tilde must lie in (0,1), got {eps_tilde}")));
    }
    let second = match kernel.regime() {
        Regime::AlphaPositive => MomentKey::new(0.0, -kernel.alpha() - eps_tilde),
        Regime::AlphaZero => MomentKey::new(0.0, kernel.gamma()),
        Regime::Oracle => return Err(Error::RegimeMismatch("oracle kernel has no invariant-set theory".into())),
    };
    let m = if fusion.mu() > 0.0 {
        1f64.max(fusion.sigma().abs() / fusion.mu()) + 0.5
    } else {
        1.0 + eps_tilde
    };
    Ok(vec![MomentKey::new(0.0, 1.0), second, MomentKey::new(0.0, m), MomentKey::new(1.0, 0.0)])
}

/// Empirical forward invariance of candidate moment bounds.
///
/// `M_{0,1}` must stay within 1% of its initial value. For each
/// `(key, bound)` candidate, once the moment is at or below `bound` it must not
/// exceed it by more than the statistical tolerance. Running suprema of all
/// candidates are reported.
pub fn check_invariant_moment_set(
    series: &MomentSeries,
    sem: Option<&MomentSeries>,
    regime: Regime,
    candidates: &[(MomentKey, f64)],
    sigmas: f64,
) -> Result<DiagnosticReport> {
    if regime == Regime::Oracle {
        return Err(Error::RegimeMismatch("invariant-set check needs a bounded-kernel regime".into()));
    }
    let tau = series.clocks();
    let mut rep = DiagnosticReport::default();
    let m01 = series.moment(0.0, 1.0)?;
    let m01_0 = *m01.first().ok_or(Error::EmptyEnsemble)?;
    let s01 = sem_column(sem, "M_0_1", m01.len())?;
    let mut worst = f64::INFINITY;
    let mut dev_max = 0.0f64;
    for i in 0..m01.len() {
        let dev = (m01[i] / m01_0 - 1.0).abs();
        dev_max = dev_max.max(dev);
        worst = worst.min(0.01 + sigmas * s01[i] / m01_0 - dev);
    }
    rep.push(CheckRecord::verdict("volume_conservation", window_of(&tau), dev_max, 0.01, worst));

    for (key, bound) in candidates {
        let name = key.column_name();
        let m = series.moment(key.k, key.l)?;
        let se = sem_column(sem, &name, m.len())?;
        let sup = m.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        rep.push(CheckRecord::info(&format!("{name}_running_sup"), window_of(&tau), sup));
        let Some(start) = m.iter().position(|&x| x <= *bound) else {
            rep.push(CheckRecord {
                name: format!("{name}_invariance"),
                window: window_of(&tau),
                observed: m[0],
                bound: *bound,
                status: CheckStatus::HypothesisUnmet,
                margin: bound - m[0],
                note: "moment never entered the candidate set".into(),
            });
            continue;
        };
        let mut worst = f64::INFINITY;
        let mut peak = 0.0f64;
        for i in start..m.len() {
            worst = worst.min(bound + sigmas * se[i] - m[i]);
            peak = peak.max(m[i]);
        }
        rep.push(CheckRecord::verdict(&format!("{name}_invariance"), (tau[start], tau[tau.len() - 1]), peak, *bound, worst));
    }
    Ok(rep)
}

/// Settings for [`check_ramification_ratios`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RamificationOptions {
    /// Required growth factor of `⟨a⟩/⟨v⟩^{2/3}` over the run.
    pub min_growth: f64,
    /// Allowed deviation of the fitted area exponent from 1/3.
    pub exponent_tol: f64,
    /// Self-similar time window for the fit; `None` uses all points with `t > 0`.
    pub fit_window: Option<(f64, f64)>,
}

impl Default for RamificationOptions {
    fn default() -> Self {
        Self { min_growth: 5.0, exponent_tol: 0.05, fit_window: None }
    }
}

/// Physical-frame ramification diagnostics.
///
/// * `⟨a⟩/⟨v⟩` never exceeds its initial value (up to 1e-12 relative for merge rounding);
///   its observed infimum times `⟨v⟩(0)` is reported as the lower-bound constant.
/// * `⟨a⟩/⟨v⟩^{2/3}` grows by at least `min_growth`.
/// * `M_{1,0}(f)(1+t)^{ξ/3}` grows like `e^{τ/3}` with `τ = ξ log(1+t)`.
pub fn check_ramification_ratios(
    series: &MomentSeries,
    frame: Frame,
    gamma: f64,
    opts: &RamificationOptions,
) -> Result<DiagnosticReport> {
    if frame != Frame::Physical {
        return Err(Error::WrongFrame("ramification ratios need a physical-frame series".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::RegimeMismatch(format!("gamma {gamma} outside [0,1)")));
    }
    let t = series.clocks();
    let r = series.column("ratio_av")?;
    let r23 = series.column("ratio_av23")?;
    let m00 = series.moment(0.0, 0.0)?;
    let m01 = series.moment(0.0, 1.0)?;
    let m10 = series.moment(1.0, 0.0)?;
    if t.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let win = window_of(&t);
    let mut rep = DiagnosticReport::default();

    let worst = r.iter().map(|&x| r[0] * (1.0 + 1e-12) - x).fold(f64::INFINITY, f64::min);
    let r_max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    rep.push(CheckRecord::verdict("ratio_av_upper_bound", win, r_max, r[0], worst));
    let r_min = r.iter().copied().fold(f64::INFINITY, f64::min);
    rep.push(CheckRecord::verdict("ratio_av_positive", win, r_min, 0.0, r_min));
    let mean_v0 = m01[0] / m00[0];
    rep.push(CheckRecord::info("lower_bound_constant", win, r_min * mean_v0).with_note("observed inf of <a>/<v> times <v>(0)"));

    let growth = r23[r23.len() - 1] / r23[0];
    rep.push(CheckRecord::verdict("ratio_av23_growth", win, growth, opts.min_growth, growth - opts.min_growth));

    let xi = 1.0 / (1.0 - gamma);
    let tau: Vec<f64> = t.iter().map(|&ti| xi * ti.ln_1p()).collect();
    let g_area: Vec<f64> = t.iter().zip(&m10).map(|(&ti, &a)| a * (1.0 + ti).powf(xi / 3.0)).collect();
    let window = opts.fit_window.unwrap_or((f64::MIN_POSITIVE, f64::INFINITY));
    match fit_log(&tau, &g_area, window) {
        Some(fit) => rep.push(
            CheckRecord::verdict(
                "area_growth_exponent",
                window,
                fit.slope,
                1.0 / 3.0,
                opts.exponent_tol - (fit.slope - 1.0 / 3.0).abs(),
            )
            .with_note(format!("slope stderr {:.2e}", fit.slope_stderr)),
        ),
        None => rep.push(CheckRecord {
            status: CheckStatus::Fail,
            note: "not enough points to fit".into(),
            ..CheckRecord::info("area_growth_exponent", window, f64::NAN)
        }),
    }
    Ok(rep)
}

/// Physical-frame monotonicity: `M_{1,0}` never increases between records and
/// `M_{0,1}` never changes.
pub fn check_physical_monotonicity(series: &MomentSeries) -> Result<DiagnosticReport> {
    let t = series.clocks();
    let m10 = series.moment(1.0, 0.0)?;
    let m01 = series.moment(0.0, 1.0)?;
    let mut rep = DiagnosticReport::default();
    let rise = m10.windows(2).map(|w| (w[1] - w[0]) / w[0]).fold(f64::NEG_INFINITY, f64::max);
    rep.push(CheckRecord::verdict("area_non_increasing", window_of(&t), rise, 0.0, 0.0 - rise));
    let drift = m01.iter().map(|&m| ((m - m01[0]) / m01[0]).abs()).fold(0.0, f64::max);
    rep.push(CheckRecord::verdict("volume_constant", window_of(&t), drift, 0.0, 0.0 - drift));
    Ok(rep)
}

/// Relative drift of each column over `[t_from, t_to]`, from a log-log fit
/// against `1 + t`: `|((1 + t_to)/(1 + t_from))^{slope} − 1|`.
pub fn check_plateau(
    series: &MomentSeries,
    columns: &[&str],
    t_from: f64,
    t_to: f64,
    max_drift: f64,
) -> Result<DiagnosticReport> {
    let t = series.clocks();
    let x: Vec<f64> = t.iter().map(|ti| ti.ln_1p()).collect();
    let span = ((1.0 + t_to) / (1.0 + t_from)).ln();
    let mut rep = DiagnosticReport::default();
    for name in columns {
        let y = series.column(name)?;
        let fit = fit_log(&x, &y, (t_from.ln_1p(), t_to.ln_1p()))
            .ok_or_else(|| Error::Domain(format!("too few points to fit {name} on [{t_from}, {t_to}]")))?;
        let drift = (fit.slope * span).exp_m1().abs();
        rep.push(CheckRecord::verdict(&format!("{name}_plateau"), (t_from, t_to), drift, max_drift, max_drift - drift));
    }
    Ok(rep)
}

/// Convergence of rescaled profiles: `distances` holds the L1 distance between
/// consecutive snapshots, labeled by their clock pair. Passes when each of the
/// last `late` distances is below the median of the first half.
pub fn check_profile_convergence(distances: &[((f64, f64), f64)], late: usize) -> Result<DiagnosticReport> {
    let n = distances.len();
    if late == 0 || n < late + 2 {
        return Err(Error::Domain(format!("need at least {} profile distances, got {n}", late + 2)));
    }
    let mut early: Vec<f64> = distances[..n / 2].iter().map(|d| d.1).collect();
    early.sort_by(f64::total_cmp);
    let median = if early.len() % 2 == 1 {
        early[early.len() / 2]
    } else {
        0.5 * (early[early.len() / 2 - 1] + early[early.len() / 2])
    };
    let tail = &distances[n - late..];
    let worst = tail.iter().map(|d| d.1).fold(0.0f64, f64::max);
    let mut rep = DiagnosticReport::default();
    for ((t0, t1), d) in distances {
        rep.push(CheckRecord::info(&format!("profile_distance_{t0}_{t1}"), (*t0, *t1), *d));
    }
    rep.push(
        CheckRecord::verdict("profile_convergence", (tail[0].0 .0, tail[late - 1].0 .1), worst, median, median - worst)
            .with_note("late distances against the early median"),
    );
    Ok(rep)
}
