//! Adaptive Dormand-Prince 5(4) integrator for small fixed-size systems.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Step control settings.
#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Largest allowed step (infinite for none).
    pub max_step: f64,
    /// Optional first step guess.
    pub first_step: Option<f64>,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { rtol: tol, atol: tol * 1e-3, max_step: f64::INFINITY, first_step: None }
    }
}

/// Result of one integration call.
#[derive(Clone, Copy, Debug)]
pub struct OdeOutcome<const D: usize> {
    pub y: [f64; D],
    pub steps: usize,
    pub rejected: usize,
    /// Last accepted step, reusable as the next first step.
    pub last_step: f64,
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`.
pub fn integrate<const D: usize, F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: [f64; D],
    opts: &OdeOptions,
) -> Result<OdeOutcome<D>>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
{
    let span = t1 - t0;
    if span < 0.0 || !span.is_finite() {
        return Err(Error::Domain(format!("bad integration interval [{t0}, {t1}]")));
    }
    let mut y = y0;
    if span == 0.0 {
        return Ok(OdeOutcome { y, steps: 0, rejected: 0, last_step: 0.0 });
    }
    let mut t = t0;
    let mut k = [[0.0; D]; 7];
    k[0] = f(t, &y);
    let mut h = opts
        .first_step
        .unwrap_or_else(|| initial_step(&k[0], &y, opts))
        .min(span)
        .min(opts.max_step);
    let (mut steps, mut rejected) = (0, 0);
    let h_min = 16.0 * f64::EPSILON * t0.abs().max(t1.abs()).max(span);

    while t < t1 {
        if t + h > t1 || t1 - (t + h) < h_min {
            h = t1 - t;
        }
        for s in 1..7 {
            let mut ys = y;
            for (d, yd) in ys.iter_mut().enumerate() {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += A[s][j] * k[j][d];
                }
                *yd += h * acc;
            }
            k[s] = f(t + C[s] * h, &ys);
        }
        let mut y_new = y;
        let mut err = 0.0f64;
        for d in 0..D {
            let mut hi = 0.0;
            let mut lo = 0.0;
            for s in 0..7 {
                hi += B5[s] * k[s][d];
                lo += B4[s] * k[s][d];
            }
            y_new[d] = y[d] + h * hi;
            if !y_new[d].is_finite() {
                err = f64::INFINITY;
            }
            let scale = opts.atol + opts.rtol * y[d].abs().max(y_new[d].abs());
            let e = (h * (hi - lo) / scale).abs();
            err = if e.is_nan() { f64::INFINITY } else { err.max(e) };
        }
        if !err.is_finite() {
            err = f64::INFINITY;
        }
        if err <= 1.0 {
            t += h;
            y = y_new;
            k[0] = k[6];
            steps += 1;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            let last = h;
            h = (h * fac).min(opts.max_step);
            if t >= t1 {
                return Ok(OdeOutcome { y, steps, rejected, last_step: last });
            }
        } else {
            rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
            if h < h_min {
                return Err(Error::StepUnderflow { t, h });
            }
        }
    }
    Ok(OdeOutcome { y, steps, rejected, last_step: h })
}

fn initial_step<const D: usize>(f0: &[f64; D], y0: &[f64; D], opts: &OdeOptions) -> f64 {
    let mut d0 = 0.0f64;
    let mut d1 = 0.0f64;
    for i in 0..D {
        let sc = opts.atol + opts.rtol * y0[i].abs();
        d0 = d0.max((y0[i] / sc).abs());
        d1 = d1.max((f0[i] / sc).abs());
    }
    if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let out = integrate(|_, y: &[f64; 1]| [-2.0 * y[0]], 0.0, 3.0, [1.0], &OdeOptions::with_tol(1e-10)).unwrap();
        assert!((out.y[0] - (-6.0f64).exp()).abs() < 1e-11);
    }

    #[test]
    fn harmonic_oscillator_period() {
        let tp = 2.0 * std::f64::consts::PI;
        let out = integrate(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, tp, [1.0, 0.0], &OdeOptions::with_tol(1e-10)).unwrap();
        assert!((out.y[0] - 1.0).abs() < 1e-8 && out.y[1].abs() < 1e-8);
    }

    #[test]
    fn blow_up_underflows() {
        // y' = y^2 from y=1 blows up at t=1
        let r = integrate(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, 2.0, [1.0], &OdeOptions::with_tol(1e-8));
        assert!(matches!(r, Err(Error::StepUnderflow { .. })));
    }

    #[test]
    fn zero_span_is_identity() {
        let out = integrate(|_, _: &[f64; 1]| [1.0], 1.0, 1.0, [3.0], &OdeOptions::with_tol(1e-8)).unwrap();
        assert_eq!(out.y[0], 3.0);
        assert!(integrate(|_, _: &[f64; 1]| [1.0], 1.0, 0.0, [3.0], &OdeOptions::with_tol(1e-8)).is_err());
    }
}
