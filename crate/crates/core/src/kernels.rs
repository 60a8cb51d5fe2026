//! Coagulation kernels, fusion rates and their regularized variants.
//!
//! Particles are points `(a, v)` of surface area and volume. Every kernel
//! here is homogeneous under the shape-preserving dilation
//! `(a, v) -> (λ^{2/3} a, λ v)`:
//!
//! ```text
//! K(λ^{2/3}a, λv, λ^{2/3}a', λv') = λ^γ K(a, v, a', v')
//! r(λ^{2/3}a, λv)                 = λ^{γ-1} r(a, v)
//! ```
//!
//! The concrete coagulation kernel is the symmetric volume form times a
//! bounded, scale-free area modulation:
//!
//! ```text
//! K = (K0/2) (v^{-α} v'^{β} + v'^{-α} v^{β}) (1 + θ s(x) s(x')),   x = a / (c0 v^{2/3})
//! ```
//!
//! with `s(x) = 1 - 1/x ∈ [0, 1)`, so that `K0/2 · B ≤ K ≤ K0 · B` for `θ < 1`.

use serde::{Deserialize, Serialize};

use crate::error::{check_positive, Error, Result};

/// Isoperimetric constant `(36π)^{1/3}`: a sphere of volume `v` has area `C0 v^{2/3}`.
pub const C0: f64 = 4.835_975_862_049_409;

/// Area of the sphere with volume `v`.
#[inline]
pub fn sphere_area(v: f64) -> f64 {
    C0 * v.cbrt().powi(2)
}

/// Shape ratio `a / (c0 v^{2/3})`, which is at least one on the physical region.
#[inline]
pub fn shape_ratio(a: f64, v: f64) -> f64 {
    a / sphere_area(v)
}

/// Parameter regime of a coagulation kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `α > 0`, `β ∈ (0,1)`, `γ = β − α ∈ [0,1)`.
    AlphaPositive,
    /// `α = 0`, `γ = β ∈ (0, 2/3)`.
    AlphaZero,
    /// Constant kernel `K ≡ K0`. Violates `β > 0`; only meant for analytic oracles.
    Oracle,
}

/// Raw kernel parameters as they appear in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub k0: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub theta: f64,
    /// Selects the constant oracle kernel `K ≡ k0`.
    #[serde(default)]
    pub oracle: bool,
}

/// Validated coagulation kernel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelConfig", into = "KernelConfig")]
pub struct KernelSpec {
    k0: f64,
    k1: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    theta: f64,
    regime: Regime,
}

impl KernelSpec {
    /// Builds the kernel `(K0/2) B(v, v') Φ_θ`, rejecting parameters outside both regimes.
    pub fn new(k0: f64, alpha: f64, beta: f64, theta: f64) -> Result<Self> {
        check_positive("K0", k0)?;
        if !(alpha.is_finite() && beta.is_finite()) || alpha < 0.0 {
            return Err(Error::InvalidParams(format!(
                "alpha must be finite and non-negative, got alpha={alpha}, beta={beta}"
            )));
        }
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::InvalidParams(format!("theta must lie in [0,1), got {theta}")));
        }
        let gamma = beta - alpha;
        let regime = if alpha > 0.0 {
            if !(beta > 0.0 && beta < 1.0) {
                return Err(Error::InvalidParams(format!("beta must lie in (0,1), got {beta}")));
            }
            if !(0.0..1.0).contains(&gamma) {
                return Err(Error::InvalidParams(format!(
                    "gamma = beta - alpha must lie in [0,1), got {gamma}"
                )));
            }
            Regime::AlphaPositive
        } else {
            if !(beta > 0.0 && beta < 2.0 / 3.0) {
                return Err(Error::InvalidParams(format!(
                    "with alpha = 0, gamma = beta must lie in (0, 2/3), got {beta}"
                )));
            }
            Regime::AlphaZero
        };
        Ok(Self { k0, k1: 0.5 * k0, alpha, beta, gamma, theta, regime })
    }

    /// Constant kernel `K ≡ k0`, homogeneous of degree zero.
    ///
    /// The volume bounds are not enforced for this kernel; it exists to
    /// compare the engines against closed-form solutions.
    pub fn constant(k0: f64) -> Result<Self> {
        check_positive("K0", k0)?;
        Ok(Self {
            k0,
            k1: k0,
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            theta: 0.0,
            regime: Regime::Oracle,
        })
    }

    pub fn k0(&self) -> f64 {
        self.k0
    }
    pub fn k1(&self) -> f64 {
        self.k1
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn regime(&self) -> Regime {
        self.regime
    }
    pub fn is_oracle(&self) -> bool {
        self.regime == Regime::Oracle
    }

    /// `v^{-α} v'^{β} + v'^{-α} v^{β}`.
    #[inline]
    pub fn volume_factor(&self, v: f64, v2: f64) -> f64 {
        if self.is_oracle() {
            return 2.0;
        }
        v.powf(-self.alpha) * v2.powf(self.beta) + v2.powf(-self.alpha) * v.powf(self.beta)
    }

    /// Bounded area modulation `Φ_θ ∈ [1, 1+θ)`.
    #[inline]
    pub fn area_factor(&self, a: f64, v: f64, a2: f64, v2: f64) -> f64 {
        if self.theta == 0.0 {
            return 1.0;
        }
        1.0 + self.theta * (shape_map(shape_ratio(a, v)) * shape_map(shape_ratio(a2, v2)))
    }

    /// Kernel value without argument checks.
    #[inline]
    pub fn value(&self, a: f64, v: f64, a2: f64, v2: f64) -> f64 {
        if self.is_oracle() {
            return self.k0;
        }
        0.5 * self.k0 * self.volume_factor(v, v2) * self.area_factor(a, v, a2, v2)
    }

    /// Volume-only upper bound `K0 B(v, v') ≥ K`.
    #[inline]
    pub fn majorant(&self, v: f64, v2: f64) -> f64 {
        self.k0 * self.volume_factor(v, v2)
    }

    /// Cap `2^{1+β} K0 ε^{-α} R^{β}` of the truncated kernel.
    pub fn cap(&self, trunc: &TruncationParams) -> f64 {
        2f64.powf(1.0 + self.beta) * self.k0 * trunc.eps.powf(-self.alpha) * trunc.big_r.powf(self.beta)
    }
}

impl TryFrom<KernelConfig> for KernelSpec {
    type Error = Error;

    fn try_from(c: KernelConfig) -> Result<Self> {
        if c.oracle {
            KernelSpec::constant(c.k0)
        } else {
            KernelSpec::new(c.k0, c.alpha, c.beta, c.theta)
        }
    }
}

impl From<KernelSpec> for KernelConfig {
    fn from(k: KernelSpec) -> Self {
        KernelConfig {
            k0: k.k0,
            alpha: k.alpha,
            beta: k.beta,
            theta: k.theta,
            oracle: k.is_oracle(),
        }
    }
}

/// Smooth map of the shape ratio `x ≥ 1` into `[0, 1)`.
#[inline]
fn shape_map(x: f64) -> f64 {
    if x <= 1.0 {
        0.0
    } else {
        1.0 - 1.0 / x
    }
}

fn check_point(a: f64, v: f64) -> Result<()> {
    check_positive("a", a)?;
    check_positive("v", v)
}

/// Evaluates `K(a, v, a2, v2)`.
pub fn eval_coag_kernel(spec: &KernelSpec, a: f64, v: f64, a2: f64, v2: f64) -> Result<f64> {
    check_point(a, v)?;
    check_point(a2, v2)?;
    Ok(spec.value(a, v, a2, v2))
}

/// Raw fusion parameters as they appear in configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// Prefactor `R`.
    pub r: f64,
    pub mu: f64,
    /// Homogeneity degree of the coagulation kernel the fusion rate is paired with.
    pub gamma: f64,
}

/// Power-law fusion rate `r(a, v) = R a^{μ} v^{σ}` with `σ = γ − 1 − (2/3) μ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FusionConfig", into = "FusionConfig")]
pub struct FusionSpec {
    r: f64,
    mu: f64,
    sigma: f64,
    gamma: f64,
}

impl FusionSpec {
    pub fn new(r: f64, mu: f64, gamma: f64) -> Result<Self> {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidParams(format!("fusion prefactor must be >= 0, got {r}")));
        }
        if !(mu.is_finite() && mu >= -1.0) {
            return Err(Error::InvalidParams(format!("mu must be >= -1, got {mu}")));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParams(format!("gamma must lie in [0,1), got {gamma}")));
        }
        let sigma = gamma - 1.0 - 2.0 / 3.0 * mu;
        Ok(Self { r, mu, sigma, gamma })
    }

    /// No fusion at all (`R = 0`).
    pub fn disabled(gamma: f64) -> Result<Self> {
        Self::new(0.0, 0.0, gamma)
    }

    pub fn prefactor(&self) -> f64 {
        self.r
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn is_disabled(&self) -> bool {
        self.r == 0.0
    }

    /// Same exponents with prefactor multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.r * factor, self.mu, self.gamma)
    }

    #[inline]
    pub fn value(&self, a: f64, v: f64) -> f64 {
        if self.r == 0.0 {
            return 0.0;
        }
        let area_part = if self.mu == 0.0 { 1.0 } else { a.powf(self.mu) };
        self.r * area_part * v.powf(self.sigma)
    }

    /// Analytic `∂_a r = μ r / a`.
    #[inline]
    pub fn d_da(&self, a: f64, v: f64) -> f64 {
        self.mu / a * self.value(a, v)
    }
}

/// `∂_a[r(a,v)(a − c0 v^{2/3})] = (μ (a − c0 v^{2/3}) / a + 1) r(a,v)`, which is
/// non-negative on the isoperimetric region for `μ ≥ −1`.
pub fn ode_fusion(spec: &FusionSpec, a: f64, v: f64) -> Result<f64> {
    check_point(a, v)?;
    Ok((spec.mu * (a - sphere_area(v)) / a + 1.0) * spec.value(a, v))
}

impl TryFrom<FusionConfig> for FusionSpec {
    type Error = Error;

    fn try_from(c: FusionConfig) -> Result<Self> {
        FusionSpec::new(c.r, c.mu, c.gamma)
    }
}

impl From<FusionSpec> for FusionConfig {
    fn from(f: FusionSpec) -> Self {
        FusionConfig { r: f.r, mu: f.mu, gamma: f.gamma }
    }
}

/// Evaluates `r(a, v)`.
pub fn eval_fusion(spec: &FusionSpec, a: f64, v: f64) -> Result<f64> {
    check_point(a, v)?;
    Ok(spec.value(a, v))
}

/// Raw truncation parameters from configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationConfig {
    pub eps: f64,
    pub big_r: f64,
    pub delta: f64,
}

/// Regularization parameters `(ε, R, δ)` and the derived constant `L = 12 / (R0 (1 − γ))`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationParams {
    pub eps: f64,
    pub big_r: f64,
    pub delta: f64,
    pub l: f64,
}

impl TruncationParams {
    /// `L` is infinite when fusion is disabled; `r_δ` is then identically zero.
    pub fn new(eps: f64, big_r: f64, delta: f64, fusion: &FusionSpec) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::InvalidParams(format!("eps must lie in (0,1), got {eps}")));
        }
        if !(big_r > 1.0 && big_r.is_finite()) {
            return Err(Error::InvalidParams(format!("R must be finite and > 1, got {big_r}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParams(format!("delta must lie in (0,1), got {delta}")));
        }
        let l = 12.0 / (fusion.prefactor() * (1.0 - fusion.gamma()));
        Ok(Self { eps, big_r, delta, l })
    }

    pub fn from_config(c: &TruncationConfig, fusion: &FusionSpec) -> Result<Self> {
        Self::new(c.eps, c.big_r, c.delta, fusion)
    }

    /// Continuous cutoff: 1 on `(0, R]`, 0 on `[2R, ∞)`, linear in between.
    #[inline]
    pub fn xi_r(&self, x: f64) -> f64 {
        if x <= self.big_r {
            1.0
        } else if x >= 2.0 * self.big_r {
            0.0
        } else {
            (2.0 * self.big_r - x) / self.big_r
        }
    }

    /// Transport switch `Θ_ε`: 0 on `(0, ε]`, 1 on `(2ε, ∞)`, cubic smoothstep in between.
    #[inline]
    pub fn theta_eps(&self, v: f64) -> f64 {
        if v <= self.eps {
            0.0
        } else if v > 2.0 * self.eps {
            1.0
        } else {
            let s = (v - self.eps) / self.eps;
            s * s * (3.0 - 2.0 * s)
        }
    }
}

/// `Θ_ε(v)`.
pub fn theta_eps(trunc: &TruncationParams, v: f64) -> Result<f64> {
    check_positive("v", v)?;
    Ok(trunc.theta_eps(v))
}

/// `min(K, 2^{1+β} K0 ε^{-α} R^{β}) · ξ_R(v + v2)`.
pub fn truncated_kernel(
    spec: &KernelSpec,
    trunc: &TruncationParams,
    a: f64,
    v: f64,
    a2: f64,
    v2: f64,
) -> Result<f64> {
    check_point(a, v)?;
    check_point(a2, v2)?;
    Ok(truncated_value(spec, trunc, a, v, a2, v2))
}

#[inline]
pub(crate) fn truncated_value(
    spec: &KernelSpec,
    trunc: &TruncationParams,
    a: f64,
    v: f64,
    a2: f64,
    v2: f64,
) -> f64 {
    let cutoff = trunc.xi_r(v + v2);
    if cutoff == 0.0 {
        return 0.0;
    }
    spec.value(a, v, a2, v2).min(spec.cap(trunc)) * cutoff
}

/// Mollified fusion rate `r_δ = r max(v^σ, Lδ) / (v^σ (1 + δ a^μ))`.
pub fn fusion_delta(spec: &FusionSpec, trunc: &TruncationParams, a: f64, v: f64) -> Result<f64> {
    check_point(a, v)?;
    Ok(fusion_delta_value(spec, trunc, a, v))
}

#[inline]
pub(crate) fn fusion_delta_value(spec: &FusionSpec, trunc: &TruncationParams, a: f64, v: f64) -> f64 {
    let r = spec.value(a, v);
    if r == 0.0 {
        return 0.0;
    }
    let vs = v.powf(spec.sigma());
    let floor = trunc.l * trunc.delta;
    let area_part = if spec.mu() == 0.0 { 1.0 } else { a.powf(spec.mu()) };
    r * vs.max(floor) / (vs * (1.0 + trunc.delta * area_part))
}
