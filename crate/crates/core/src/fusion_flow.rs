//! Deterministic area relaxation and the particle characteristics of the
//! regularized self-similar equation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{fusion_delta_value, sphere_area, FusionSpec, TruncationParams};
use crate::ode::{integrate, OdeOptions};
use crate::state::{in_region, region_violation};

/// Which drift a characteristic follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowFrame {
    Physical,
    SelfSimilarRegularized,
}

#[derive(Clone, Copy, Debug)]
pub struct FlowParams {
    pub fusion: FusionSpec,
    pub trunc: Option<TruncationParams>,
    pub frame: FlowFrame,
    pub ode_tol: f64,
    pub max_step: f64,
    /// Self-similar frame only: when false the scaling terms (volume
    /// shrinkage, area contraction and weight growth) are switched off.
    pub transport: bool,
    /// Use closed-form solutions where they exist: the sphere boundary,
    /// fusion-free transport, and physical relaxation for `μ ∈ {0, 1}`.
    pub exact_paths: bool,
}

impl FlowParams {
    pub fn physical(fusion: FusionSpec, ode_tol: f64) -> Result<Self> {
        let p = Self {
            fusion,
            trunc: None,
            frame: FlowFrame::Physical,
            ode_tol,
            max_step: f64::INFINITY,
            transport: true,
            exact_paths: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn selfsim(fusion: FusionSpec, trunc: TruncationParams, ode_tol: f64) -> Result<Self> {
        let p = Self {
            fusion,
            trunc: Some(trunc),
            frame: FlowFrame::SelfSimilarRegularized,
            ode_tol,
            max_step: f64::INFINITY,
            transport: true,
            exact_paths: true,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1e-12..=1e-4).contains(&self.ode_tol) {
            return Err(Error::InvalidParams(format!(
                "ode_tol must lie in [1e-12, 1e-4], got {}",
                self.ode_tol
            )));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidParams("max_step must be positive".into()));
        }
        if self.frame == FlowFrame::SelfSimilarRegularized && self.trunc.is_none() {
            return Err(Error::InvalidParams("self-similar flow needs truncation parameters".into()));
        }
        Ok(())
    }

    fn options(&self) -> OdeOptions {
        OdeOptions { rtol: self.ode_tol, atol: self.ode_tol * 1e-3, max_step: self.max_step, first_step: None }
    }

    fn projection_tol(&self) -> f64 {
        10.0 * self.ode_tol
    }
}

fn check_region(a: f64, v: f64) -> Result<()> {
    if !(a.is_finite() && v.is_finite() && a > 0.0 && v > 0.0) {
        return Err(Error::Domain(format!("non-finite or non-positive point (a={a}, v={v})")));
    }
    if !in_region(a, v) {
        return Err(Error::OutsideRegion { a, v, violation: region_violation(a, v) });
    }
    Ok(())
}

/// Physical drift `(r(a,v)(c0 v^{2/3} − a), 0)`.
pub fn drift_physical(fusion: &FusionSpec, a: f64, v: f64) -> Result<(f64, f64)> {
    check_region(a, v)?;
    Ok((fusion.value(a, v) * (sphere_area(v) - a), 0.0))
}

/// Regularized self-similar drift at `(A, V)`; autonomous, so `clock` is unused.
pub fn drift_selfsim(params: &FlowParams, a: f64, v: f64, _clock: f64) -> Result<(f64, f64)> {
    let trunc = params
        .trunc
        .as_ref()
        .ok_or_else(|| Error::InvalidParams("self-similar drift needs truncation parameters".into()))?;
    check_region(a, v)?;
    let [da, dv, _] = selfsim_rhs(params, trunc, &[a, v, 0.0]);
    Ok((da, dv))
}

#[inline]
fn selfsim_rhs(params: &FlowParams, trunc: &TruncationParams, y: &[f64; 3]) -> [f64; 3] {
    let (a, v) = (y[0], y[1]);
    let gamma = params.fusion.gamma();
    let fusion = (1.0 - gamma) * fusion_delta_value(&params.fusion, trunc, a, v) * (sphere_area(v) - a);
    if !params.transport {
        return [fusion, 0.0, 0.0];
    }
    let th = trunc.theta_eps(v);
    [fusion - 2.0 / 3.0 * th * a, -th * v, th]
}

/// End point of a characteristic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharacteristicEnd {
    pub a: f64,
    pub v: f64,
    /// `∫ Θ_ε(V) dτ` along the path (zero in the physical frame).
    pub h: f64,
    /// Whether the end point was projected back onto the sphere boundary.
    pub projected: bool,
}

/// Follows one characteristic from `(a0, v0)` for `t_span`.
pub fn integrate_characteristic(params: &FlowParams, a0: f64, v0: f64, t_span: f64) -> Result<CharacteristicEnd> {
    check_region(a0, v0)?;
    if !(t_span >= 0.0 && t_span.is_finite()) {
        return Err(Error::Domain(format!("t_span must be finite and non-negative, got {t_span}")));
    }
    let (a, v, h) = match params.frame {
        FlowFrame::Physical => (advance_physical_area(params, a0, v0, t_span)?, v0, 0.0),
        FlowFrame::SelfSimilarRegularized => {
            let trunc = params.trunc.as_ref().expect("validated");
            if t_span == 0.0 {
                (a0, v0, 0.0)
            } else if params.exact_paths && a0 <= sphere_area(v0) * (1.0 + params.ode_tol) {
                // the boundary is an exact solution; snapping moves a by at most ode_tol
                let (_, v, h) = transport_only(params, trunc, a0, v0, t_span)?;
                (sphere_area(v), v, h)
            } else if params.exact_paths && params.fusion.is_disabled() {
                transport_only(params, trunc, a0, v0, t_span)?
            } else {
                let out = integrate(|_, y| selfsim_rhs(params, trunc, y), 0.0, t_span, [a0, v0, 0.0], &params.options())?;
                (out.y[0], out.y[1], out.y[2])
            }
        }
    };
    project(params, a, v, h)
}

/// Without fusion the area stays proportional to `V^{2/3}`, so only `V` and
/// `h` need integrating.
fn transport_only(params: &FlowParams, trunc: &TruncationParams, a0: f64, v0: f64, t: f64) -> Result<(f64, f64, f64)> {
    if !params.transport {
        return Ok((a0, v0, 0.0));
    }
    if v0 > 2.0 * trunc.eps && v0 * (-t).exp() > 2.0 * trunc.eps {
        let v = v0 * (-t).exp();
        return Ok((a0 * (-2.0 * t / 3.0).exp(), v, t));
    }
    if v0 <= trunc.eps {
        return Ok((a0, v0, 0.0));
    }
    let out = integrate(
        |_, y: &[f64; 2]| {
            let th = trunc.theta_eps(y[0]);
            [-th * y[0], th]
        },
        0.0,
        t,
        [v0, 0.0],
        &params.options(),
    )?;
    let v = out.y[0];
    Ok((a0 * (v / v0).powf(2.0 / 3.0), v, out.y[1]))
}

fn project(params: &FlowParams, a: f64, v: f64, h: f64) -> Result<CharacteristicEnd> {
    if !(a.is_finite() && v.is_finite() && a > 0.0 && v > 0.0) {
        return Err(Error::Domain(format!("characteristic left the domain (a={a}, v={v})")));
    }
    let violation = region_violation(a, v);
    if violation == 0.0 {
        return Ok(CharacteristicEnd { a, v, h, projected: false });
    }
    if violation <= params.projection_tol() {
        return Ok(CharacteristicEnd { a: sphere_area(v), v, h, projected: true });
    }
    Err(Error::OutsideRegion { a, v, violation })
}

/// Physical-frame area after `t` at fixed volume.
pub(crate) fn advance_physical_area(params: &FlowParams, a0: f64, v: f64, t: f64) -> Result<f64> {
    let f = &params.fusion;
    if f.is_disabled() || t == 0.0 {
        return Ok(a0);
    }
    let b = sphere_area(v);
    if a0 <= b {
        return Ok(a0);
    }
    if params.exact_paths && (f.mu() == 0.0 || f.mu() == 1.0) {
        return Ok(relaxation_closed_form(f, a0, v, t));
    }
    let out = integrate(
        |_, y: &[f64; 1]| [f.value(y[0].max(b), v) * (b - y[0])],
        0.0,
        t,
        [a0],
        &params.options(),
    )?;
    Ok(out.y[0])
}

/// Exact physical relaxation at fixed volume, with `b = c0 v^{2/3}` and `k = R v^σ`.
///
/// `μ = 0`: `a = b + (a0 − b) e^{−kt}`. `μ = 1` (logistic): `a = b / (1 − (1 − b/a0) e^{−kbt})`.
///
/// # Panics
/// For any other `μ`.
pub fn relaxation_closed_form(fusion: &FusionSpec, a0: f64, v: f64, t: f64) -> f64 {
    let b = sphere_area(v);
    let k = fusion.prefactor() * v.powf(fusion.sigma());
    if fusion.mu() == 0.0 {
        b + (a0 - b) * (-k * t).exp()
    } else if fusion.mu() == 1.0 {
        let a = b / (1.0 - (1.0 - b / a0) * (-k * b * t).exp());
        a.max(b)
    } else {
        panic!("no closed form for mu = {}", fusion.mu())
    }
}

/// Dense trace `(t, A, V, h)` of a characteristic on a uniform output grid.
pub fn trace_characteristic(
    params: &FlowParams,
    a0: f64,
    v0: f64,
    t_end: f64,
    n_out: usize,
) -> Result<Vec<(f64, CharacteristicEnd)>> {
    let mut out = Vec::with_capacity(n_out + 1);
    let mut cur = CharacteristicEnd { a: a0, v: v0, h: 0.0, projected: false };
    out.push((0.0, cur));
    let dt = t_end / n_out.max(1) as f64;
    for i in 1..=n_out.max(1) {
        let next = integrate_characteristic(params, cur.a, cur.v, dt)?;
        cur = CharacteristicEnd { h: cur.h + next.h, ..next };
        out.push((i as f64 * dt, cur));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ss_params(r: f64, mu: f64, gamma: f64, eps: f64, tol: f64) -> FlowParams {
        let fusion = if r == 0.0 { FusionSpec::disabled(gamma).unwrap() } else { FusionSpec::new(r, mu, gamma).unwrap() };
        let trunc = TruncationParams::new(eps, 1e6, 1e-3, &fusion).unwrap();
        let mut p = FlowParams::selfsim(fusion, trunc, tol).unwrap();
        p.exact_paths = false;
        p
    }

    #[test]
    fn physical_drift_signs() {
        let f = FusionSpec::new(1.0, 1.0, 0.0).unwrap();
        assert_eq!(drift_physical(&f, sphere_area(2.0), 2.0).unwrap().0, 0.0);
        assert!(drift_physical(&f, 3.0 * sphere_area(2.0), 2.0).unwrap().0 < 0.0);
        assert!(matches!(drift_physical(&f, 1.0, 2.0), Err(Error::OutsideRegion { .. })));
    }

    #[test]
    fn physical_matches_closed_form() {
        let f = FusionSpec::new(1.0, 0.0, 0.25).unwrap();
        let mut p = FlowParams::physical(f, 1e-12).unwrap();
        p.exact_paths = false;
        let (a0, v) = (40.0, 2.0);
        let exact = relaxation_closed_form(&f, a0, v, 1.0);
        let out = integrate(
            |_, y: &[f64; 1]| [f.value(y[0], v) * (sphere_area(v) - y[0])],
            0.0,
            1.0,
            [a0],
            &p.options(),
        )
        .unwrap();
        assert_relative_eq!(out.y[0], exact, max_relative = 1e-8);
        let end = integrate_characteristic(&p, a0, v, 1.0).unwrap();
        assert_eq!(end.v, v);
        assert_relative_eq!(end.a, exact, max_relative = 1e-9);
        p.exact_paths = true;
        assert_eq!(integrate_characteristic(&p, a0, v, 1.0).unwrap().a, exact);
    }

    #[test]
    fn logistic_closed_form_matches_integrator() {
        let f = FusionSpec::new(0.7, 1.0, 0.0).unwrap();
        let (a0, v) = (25.0, 1.5);
        let b = sphere_area(v);
        let out = integrate(
            |_, y: &[f64; 1]| [f.value(y[0], v) * (b - y[0])],
            0.0,
            0.3,
            [a0],
            &OdeOptions::with_tol(1e-12),
        )
        .unwrap();
        assert_relative_eq!(out.y[0], relaxation_closed_form(&f, a0, v, 0.3), max_relative = 1e-9);
    }

    #[test]
    fn halving_volume() {
        let p = ss_params(0.0, 0.0, 0.0, 0.01, 1e-10);
        let end = integrate_characteristic(&p, sphere_area(1.0) * 3.0, 1.0, 2f64.ln()).unwrap();
        assert_relative_eq!(end.v, 0.5, max_relative = 1e-9);
        assert_relative_eq!(end.h, 2f64.ln(), max_relative = 1e-9);

        let p = ss_params(1.0, 1.0, 0.0, 0.01, 1e-10);
        let end = integrate_characteristic(&p, sphere_area(1.0) * 3.0, 1.0, 2f64.ln()).unwrap();
        assert_relative_eq!(end.v, 0.5, max_relative = 1e-9);
        assert_relative_eq!(end.h, 2f64.ln(), max_relative = 1e-9);
    }

    #[test]
    fn volume_frozen_below_eps() {
        let p = ss_params(1.0, 1.0, 0.0, 0.01, 1e-10);
        assert_eq!(drift_selfsim(&p, sphere_area(0.005) * 2.0, 0.005, 0.0).unwrap().1, 0.0);
        let end = integrate_characteristic(&p, sphere_area(0.005) * 2.0, 0.005, 1.0).unwrap();
        assert_eq!(end.v, 0.005);
        assert_eq!(end.h, 0.0);
    }

    #[test]
    fn sphere_boundary_is_invariant() {
        let p = ss_params(3.0, 1.0, 0.0, 0.01, 1e-12);
        for t in [0.5, 2.0, 5.0] {
            let end = integrate_characteristic(&p, sphere_area(1.0), 1.0, t).unwrap();
            assert_relative_eq!(end.a, sphere_area(end.v), max_relative = 1e-9);
        }
    }

    #[test]
    fn exact_paths_agree_with_integration() {
        let mut p = ss_params(3.0, 1.0, 0.0, 0.01, 1e-10);
        for a0 in [sphere_area(1.0), 4.0 * sphere_area(1.0)] {
            p.exact_paths = false;
            let num = integrate_characteristic(&p, a0, 1.0, 0.7).unwrap();
            p.exact_paths = true;
            let fast = integrate_characteristic(&p, a0, 1.0, 0.7).unwrap();
            assert_relative_eq!(num.a, fast.a, max_relative = 1e-8);
            assert_relative_eq!(num.v, fast.v, max_relative = 1e-9);
            assert_relative_eq!(num.h, fast.h, max_relative = 1e-9);
        }
    }

    #[test]
    fn outside_start_rejected() {
        let p = ss_params(1.0, 1.0, 0.0, 0.01, 1e-8);
        assert!(integrate_characteristic(&p, 1.0, 1.0, 1.0).is_err());
        assert!(FlowParams::physical(FusionSpec::disabled(0.0).unwrap(), 1e-3).is_err());
    }

    #[test]
    fn forward_invariance_and_order() {
        let p = ss_params(2.0, -1.0, 0.25, 0.01, 1e-9);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let v0 = 10f64.powf(rng.random_range(-1.5..1.0));
            let x = 1.0 + rng.random::<f64>() * 30.0;
            let t = rng.random::<f64>() * 5.0;
            let a0 = x * sphere_area(v0);
            let e1 = integrate_characteristic(&p, a0, v0, t).unwrap();
            let e2 = integrate_characteristic(&p, a0 * 1.1, v0, t).unwrap();
            assert!(in_region(e1.a, e1.v));
            assert!(e1.a <= e2.a * (1.0 + 1e-9));
        }
    }

    #[test]
    fn fusion_alone_dissipates_area() {
        let mut p = ss_params(1.0, 1.0, 0.0, 0.01, 1e-10);
        p.transport = false;
        let a0 = 10.0 * sphere_area(1.0);
        let end = integrate_characteristic(&p, a0, 1.0, 1.0).unwrap();
        assert!(end.a < a0 && end.a >= sphere_area(1.0));
        assert_eq!((end.v, end.h), (1.0, 0.0));
    }
}
