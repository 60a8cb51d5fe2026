//! Transforms between the physical and self-similar frames, rescaled profile
//! histograms and the unit-volume normalization.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{shape_ratio, C0};
use crate::state::{Ensemble, Frame, MomentKey, MomentRow, MomentSeries, Particle};

fn xi_of(gamma: f64) -> Result<f64> {
    if !(gamma < 1.0) || !gamma.is_finite() {
        return Err(Error::RegimeMismatch(format!("self-similar scaling needs gamma < 1, got {gamma}")));
    }
    Ok(1.0 / (1.0 - gamma))
}

/// Self-similar time `τ = ξ log(1 + t)`.
pub fn selfsim_time(t: f64, gamma: f64) -> Result<f64> {
    Ok(xi_of(gamma)? * t.ln_1p())
}

/// Exponent `−ξ((2/3)k + l − 1)` of `(1 + t)` in the rescaled moment.
pub fn rescale_exponent(k: f64, l: f64, gamma: f64) -> Result<f64> {
    Ok(-xi_of(gamma)? * (2.0 / 3.0 * k + l - 1.0))
}

/// Rescales every moment column: `m̂_{k,l}(t) = M_{k,l}(t) (1 + t)^{−ξ((2/3)k + l − 1)}`.
///
/// Ratio diagnostics and auxiliary columns are copied unchanged.
pub fn rescale_series(series: &MomentSeries, gamma: f64) -> Result<MomentSeries> {
    let exps = series
        .keys
        .iter()
        .map(|k| rescale_exponent(k.k, k.l, gamma))
        .collect::<Result<Vec<_>>>()?;
    let mut out = MomentSeries::new(series.keys.clone(), series.aux_names.clone());
    for r in &series.rows {
        let moments = r.moments.iter().zip(&exps).map(|(m, e)| m * (1.0 + r.clock).powf(*e)).collect();
        out.push(MomentRow { moments, ..r.clone() })?;
    }
    Ok(out)
}

/// Single rescaled moment `m̂_{k,l}` of a physical-frame series.
pub fn rescaled_moment(series: &MomentSeries, k: f64, l: f64, gamma: f64) -> Result<MomentSeries> {
    let e = rescale_exponent(k, l, gamma)?;
    let m = series.moment(k, l)?;
    let mut out = MomentSeries::new(vec![MomentKey::new(k, l)], vec![]);
    for (r, m) in series.rows.iter().zip(m) {
        out.push(MomentRow {
            clock: r.clock,
            moments: vec![m * (1.0 + r.clock).powf(e)],
            n: r.n,
            ratio_av: r.ratio_av,
            ratio_av23: r.ratio_av23,
            aux: vec![],
        })?;
    }
    Ok(out)
}

/// Log-spaced bins in shape ratio `x = a / (c0 v^{2/3}) ≥ 1` and rescaled volume `v̂`.
///
/// Binning in `x` rather than `â` keeps every bin inside the isoperimetric
/// region; bin centers map back to `â = x c0 v̂^{2/3}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub x_edges: Vec<f64>,
    pub v_edges: Vec<f64>,
}

impl BinGrid {
    pub fn log(x_max: f64, v_min: f64, v_max: f64, nx: usize, nv: usize) -> Result<Self> {
        if !(x_max > 1.0 && v_min > 0.0 && v_max > v_min && nx > 0 && nv > 0) {
            return Err(Error::Domain(format!(
                "bad bin grid x_max={x_max}, v in [{v_min}, {v_max}], {nx}x{nv}"
            )));
        }
        Ok(Self { x_edges: log_edges(1.0, x_max, nx), v_edges: log_edges(v_min, v_max, nv) })
    }

    /// Grid covering the rescaled data of `ensembles` (clocks taken from each
    /// ensemble) with 5% margins in log space.
    pub fn auto(ensembles: &[&Ensemble], gamma: f64, nx: usize, nv: usize) -> Result<Self> {
        let xi = xi_of(gamma)?;
        let (mut x_hi, mut v_lo, mut v_hi) = (1.0f64, f64::INFINITY, 0.0f64);
        for e in ensembles {
            let sv = (1.0 + e.clock).powf(-xi);
            for p in &e.particles {
                x_hi = x_hi.max(shape_ratio(p.a, p.v));
                v_lo = v_lo.min(p.v * sv);
                v_hi = v_hi.max(p.v * sv);
            }
        }
        if !v_lo.is_finite() {
            return Err(Error::EmptyEnsemble);
        }
        let pad = |lo: f64, hi: f64| {
            let span = (hi / lo).ln().max(1e-3);
            ((lo.ln() - 0.05 * span).exp(), (hi.ln() + 0.05 * span).exp())
        };
        let (_, x_max) = pad(1.0, x_hi.max(1.0 + 1e-3));
        let (v_min, v_max) = pad(v_lo, v_hi.max(v_lo * (1.0 + 1e-3)));
        Self::log(x_max, v_min, v_max, nx, nv)
    }

    pub fn nx(&self) -> usize {
        self.x_edges.len() - 1
    }

    pub fn nv(&self) -> usize {
        self.v_edges.len() - 1
    }

    /// Index in `0..n+2`: 0 underflow, `n+1` overflow.
    fn locate(edges: &[f64], x: f64) -> usize {
        if x < edges[0] {
            return 0;
        }
        if x >= edges[edges.len() - 1] {
            return edges.len();
        }
        edges.partition_point(|&e| e <= x)
    }
}

fn log_edges(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (l, h) = (lo.ln(), hi.ln());
    let mut e: Vec<f64> = (0..=n).map(|i| (l + (h - l) * i as f64 / n as f64).exp()).collect();
    e[0] = lo;
    e[n] = hi;
    e
}

/// Weighted histogram of one ensemble in self-similar coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledSnapshot {
    pub grid: BinGrid,
    /// `(nx + 2) × (nv + 2)` row-major cells including under- and overflow.
    pub mass: Vec<f64>,
    /// Physical time of the source ensemble.
    pub clock: f64,
    pub gamma: f64,
    /// `M_{0,0}` of the source ensemble; equals the sum of `mass`.
    pub total_mass: f64,
    /// Self-similar number density `M_{0,0} (1 + t)^{ξ}`.
    pub rescaled_mass: f64,
    /// `M_{0,1}`, unchanged by the scaling.
    pub total_volume: f64,
    /// Mass that fell into under- or overflow cells.
    pub out_of_range: f64,
}

impl RescaledSnapshot {
    fn cell(&self, ix: usize, iv: usize) -> usize {
        ix * (self.grid.nv() + 2) + iv
    }

    /// Bin centers `(â, v̂, x)` and mass of in-range cells.
    pub fn bins(&self) -> Vec<(f64, f64, f64, f64)> {
        let mut out = Vec::new();
        for ix in 1..=self.grid.nx() {
            let xc = (self.grid.x_edges[ix - 1] * self.grid.x_edges[ix]).sqrt();
            for iv in 1..=self.grid.nv() {
                let vc = (self.grid.v_edges[iv - 1] * self.grid.v_edges[iv]).sqrt();
                let m = self.mass[self.cell(ix, iv)];
                out.push((xc * C0 * vc.powf(2.0 / 3.0), vc, xc, m));
            }
        }
        out
    }

    /// CSV with columns `a_hat, v_hat, shape_ratio, mass`; the last row
    /// carries the out-of-range mass with empty centers.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["a_hat", "v_hat", "shape_ratio", "mass"])?;
        for (a, v, x, m) in self.bins() {
            if m > 0.0 {
                w.write_record([a.to_string(), v.to_string(), x.to_string(), m.to_string()])?;
            }
        }
        w.write_record(["", "", "", &self.out_of_range.to_string()])?;
        w.flush()?;
        Ok(())
    }
}

/// Histogram of `e` over `grid` in coordinates `(a(1+t)^{−2ξ/3}, v(1+t)^{−ξ})`.
pub fn extract_profile(e: &Ensemble, t: f64, gamma: f64, grid: &BinGrid) -> Result<RescaledSnapshot> {
    if e.frame != Frame::Physical {
        return Err(Error::WrongFrame("profiles are extracted from physical-frame ensembles".into()));
    }
    if e.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let xi = xi_of(gamma)?;
    let sv = (1.0 + t).powf(-xi);
    let (nx, nv) = (grid.nx(), grid.nv());
    let mut mass = vec![0.0; (nx + 2) * (nv + 2)];
    for p in &e.particles {
        // shape ratio is scale invariant; clamp rounding just below 1
        let x = shape_ratio(p.a, p.v).max(1.0);
        let ix = BinGrid::locate(&grid.x_edges, x);
        let iv = BinGrid::locate(&grid.v_edges, p.v * sv);
        mass[ix * (nv + 2) + iv] += p.w;
    }
    let mut out_of_range = 0.0;
    for ix in 0..nx + 2 {
        for iv in 0..nv + 2 {
            if ix == 0 || ix == nx + 1 || iv == 0 || iv == nv + 1 {
                out_of_range += mass[ix * (nv + 2) + iv];
            }
        }
    }
    let total_mass = e.moment(0.0, 0.0)?;
    Ok(RescaledSnapshot {
        grid: grid.clone(),
        mass,
        clock: t,
        gamma,
        total_mass,
        rescaled_mass: total_mass * (1.0 + t).powf(xi),
        total_volume: e.moment(0.0, 1.0)?,
        out_of_range,
    })
}

/// L1 distance between the mass-normalized histograms, in `[0, 2]`.
pub fn profile_distance(s1: &RescaledSnapshot, s2: &RescaledSnapshot) -> Result<f64> {
    if s1.grid != s2.grid {
        return Err(Error::GridMismatch);
    }
    let n1: f64 = s1.mass.iter().sum();
    let n2: f64 = s2.mass.iter().sum();
    if !(n1 > 0.0 && n2 > 0.0) {
        return Err(Error::EmptyEnsemble);
    }
    Ok(s1.mass.iter().zip(&s2.mass).map(|(a, b)| (a / n1 - b / n2).abs()).sum())
}

/// Record of the unit-volume normalization, needed to undo it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitVolumeScaling {
    /// Original total volume.
    pub v0: f64,
    /// Length-like factor `k = v0^{ξ}`.
    pub k: f64,
    pub gamma: f64,
    /// Factor the caller applies to the fusion prefactor: `r → r / v0`.
    pub fusion_factor: f64,
}

impl UnitVolumeScaling {
    fn weight_factor(&self) -> f64 {
        self.v0.powf(1.0 / (1.0 - self.gamma) - 1.0)
    }

    /// Maps a normalized ensemble back to the original scale.
    pub fn invert(&self, e: &Ensemble) -> Result<Ensemble> {
        let (sa, sv, sw) = (self.k.powf(2.0 / 3.0), self.k, 1.0 / self.weight_factor());
        transform(e, sa, sv, sw)
    }
}

fn transform(e: &Ensemble, sa: f64, sv: f64, sw: f64) -> Result<Ensemble> {
    let ps = e
        .particles
        .iter()
        .map(|p| {
            let v = p.v * sv;
            // the shape ratio is scale invariant; keep rounding from leaving the region
            Particle::new((p.a * sa).max(crate::kernels::sphere_area(v)), v, p.w * sw)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Ensemble::new(ps, e.frame, 0)?;
    out.clock = e.clock;
    *out.rng_mut() = e.rng().clone();
    Ok(out)
}

/// Rescales so that the total volume is 1: with `v0 = M_{0,1}` and `k = v0^{ξ}`,
/// `(a, v, w) → (a k^{−2/3}, v / k, w v0^{ξ−1})`.
///
/// Moments transform as `M_{y1,y2} → v0^{(γ − (2/3)y1 − y2)/(1−γ)} M_{y1,y2}`.
pub fn rescale_to_unit_volume(e: &Ensemble, gamma: f64) -> Result<(Ensemble, UnitVolumeScaling)> {
    let xi = xi_of(gamma)?;
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::RegimeMismatch(format!("gamma {gamma} outside [0,1)")));
    }
    let v0 = e.moment(0.0, 1.0)?;
    if !(v0 > 0.0) {
        return Err(Error::Domain(format!("total volume must be positive, got {v0}")));
    }
    let k = v0.powf(xi);
    let scaling = UnitVolumeScaling { v0, k, gamma, fusion_factor: 1.0 / v0 };
    let out = transform(e, k.powf(-2.0 / 3.0), 1.0 / k, scaling.weight_factor())?;
    Ok((out, scaling))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::sphere_area;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn physical_series(clock: &[f64], m: &[(f64, f64, Vec<f64>)]) -> MomentSeries {
        let mut s = MomentSeries::new(m.iter().map(|c| MomentKey::new(c.0, c.1)).collect(), vec![]);
        for (i, &t) in clock.iter().enumerate() {
            s.push(MomentRow {
                clock: t,
                moments: m.iter().map(|c| c.2[i]).collect(),
                n: 1.0,
                ratio_av: 1.0,
                ratio_av23: 1.0,
                aux: vec![],
            })
            .unwrap();
        }
        s
    }

    fn random_ensemble(seed: u64, n: usize) -> Ensemble {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ps = (0..n)
            .map(|_| {
                let v = 10f64.powf(rng.random_range(-1.0..1.0));
                Particle::new(sphere_area(v) * (1.0 + 9.0 * rng.random::<f64>()), v, rng.random_range(0.1..1.0)).unwrap()
            })
            .collect();
        Ensemble::new(ps, Frame::Physical, 0).unwrap()
    }

    #[test]
    fn exponents() {
        assert_eq!(rescale_exponent(0.0, 1.0, 0.3).unwrap(), 0.0);
        assert_relative_eq!(rescale_exponent(1.0, 0.0, 0.0).unwrap(), 1.0 / 3.0);
        assert_relative_eq!(rescale_exponent(0.0, 0.0, 0.0).unwrap(), 1.0);
        assert!(rescale_exponent(0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn oracle_count_rescales_to_two() {
        let t: Vec<f64> = vec![0.0, 10.0, 1e3, 1e6];
        let n: Vec<f64> = t.iter().map(|&t| crate::moments::oracle_constant_kernel_count(1.0, t)).collect();
        let s = physical_series(&t, &[(0.0, 0.0, n), (0.0, 1.0, vec![1.0; 4])]);
        let r = rescaled_moment(&s, 0.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(r.rows[3].moments[0], 2.0, max_relative = 1e-5);
        let v = rescaled_moment(&s, 0.0, 1.0, 0.0).unwrap();
        assert!(v.rows.iter().all(|r| r.moments[0] == 1.0));
        let all = rescale_series(&s, 0.0).unwrap();
        assert_eq!(all.rows[3].moments[0], r.rows[3].moments[0]);
    }

    #[test]
    fn profile_identity_at_t0_and_mass() {
        let e = random_ensemble(1, 500);
        let grid = BinGrid::auto(&[&e], 0.0, 16, 16).unwrap();
        let s = extract_profile(&e, 0.0, 0.0, &grid).unwrap();
        assert_eq!(s.out_of_range, 0.0);
        assert_relative_eq!(s.mass.iter().sum::<f64>(), e.moment(0.0, 0.0).unwrap(), max_relative = 1e-12);
        assert_eq!(s.rescaled_mass, s.total_mass);
        assert_eq!(profile_distance(&s, &s).unwrap(), 0.0);
        for (a, v, _, m) in s.bins() {
            if m > 0.0 {
                assert!(a >= sphere_area(v) * (1.0 - 1e-12));
            }
        }
        let other = BinGrid::log(5.0, 0.1, 10.0, 16, 16).unwrap();
        let s2 = extract_profile(&e, 0.0, 0.0, &other).unwrap();
        assert!(matches!(profile_distance(&s, &s2), Err(Error::GridMismatch)));
        assert!(s2.out_of_range > 0.0);
    }

    #[test]
    fn disjoint_profiles_have_distance_two() {
        let grid = BinGrid::log(10.0, 0.1, 10.0, 4, 4).unwrap();
        let e1 = Ensemble::new(vec![Particle::sphere(0.2, 1.0).unwrap()], Frame::Physical, 0).unwrap();
        let e2 = Ensemble::new(vec![Particle::sphere(5.0, 1.0).unwrap()], Frame::Physical, 0).unwrap();
        let d = profile_distance(&extract_profile(&e1, 0.0, 0.0, &grid).unwrap(), &extract_profile(&e2, 0.0, 0.0, &grid).unwrap()).unwrap();
        assert_eq!(d, 2.0);
    }

    #[test]
    fn synthetic_self_similar_snapshots_agree() {
        let gamma = 0.25;
        let xi = 1.0 / (1.0 - gamma);
        let map = |seed: u64, t: f64, xi: f64| {
            let base = random_ensemble(seed, 20_000);
            let ps = base
                .particles
                .iter()
                .map(|p| Particle { a: p.a * (1.0 + t).powf(2.0 * xi / 3.0), v: p.v * (1.0 + t).powf(xi), w: p.w })
                .collect();
            let mut e = Ensemble::new(ps, Frame::Physical, 0).unwrap();
            e.clock = t;
            e
        };
        let (e1, e3) = (map(2, 1.0, xi), map(3, 3.0, xi));
        let grid = BinGrid::log(12.0, 0.08, 12.0, 8, 8).unwrap();
        let s1 = extract_profile(&e1, 1.0, gamma, &grid).unwrap();
        let s3 = extract_profile(&e3, 3.0, gamma, &grid).unwrap();
        let d = profile_distance(&s1, &s3).unwrap();
        // sampling noise for 64 cells and 2e4 particles is about 0.06
        assert!(d < 0.12, "{d}");
        assert!(s1.out_of_range == 0.0 && s3.out_of_range == 0.0);
        // wrong growth exponent: not self-similar under this scaling
        let wrong = extract_profile(&map(3, 3.0, 1.0), 3.0, gamma, &grid).unwrap();
        assert!(profile_distance(&s1, &wrong).unwrap() > 3.0 * d);
    }

    #[test]
    fn unit_volume_moment_exponents() {
        for gamma in [0.0, 0.25] {
            for target in [0.5, 2.0] {
                let mut e = random_ensemble(9, 50);
                let scale = target / e.moment(0.0, 1.0).unwrap();
                for p in &mut e.particles {
                    p.w *= scale;
                }
                let (u, sc) = rescale_to_unit_volume(&e, gamma).unwrap();
                assert_relative_eq!(u.moment(0.0, 1.0).unwrap(), 1.0, max_relative = 1e-12);
                assert_relative_eq!(sc.fusion_factor, 1.0 / target, max_relative = 1e-12);
                for (y1, y2) in [(0.0, 1.0), (1.0, 0.0), (0.0, gamma)] {
                    let expect = target.powf((gamma - 2.0 / 3.0 * y1 - y2) / (1.0 - gamma)) * e.moment(y1, y2).unwrap();
                    assert_relative_eq!(u.moment(y1, y2).unwrap(), expect, max_relative = 1e-12);
                }
                let back = sc.invert(&u).unwrap();
                for (p, q) in back.particles.iter().zip(&e.particles) {
                    assert_relative_eq!(p.a, q.a, max_relative = 1e-12);
                    assert_relative_eq!(p.v, q.v, max_relative = 1e-12);
                    assert_relative_eq!(p.w, q.w, max_relative = 1e-12);
                }
            }
        }
        let e = random_ensemble(1, 10);
        let mut one = e.clone();
        let s = 1.0 / e.moment(0.0, 1.0).unwrap();
        for p in &mut one.particles {
            p.w *= s;
        }
        let (u, _) = rescale_to_unit_volume(&one, 0.1).unwrap();
        for (p, q) in u.particles.iter().zip(&one.particles) {
            assert_relative_eq!(p.a, q.a, max_relative = 1e-15);
            assert_relative_eq!(p.w, q.w, max_relative = 1e-15);
        }
    }

    #[test]
    fn rescaled_spheres_stay_in_region() {
        let ps: Vec<Particle> = (1..200).map(|i| Particle::sphere(0.37 * i as f64, 0.01).unwrap()).collect();
        let e = Ensemble::new(ps, Frame::Physical, 0).unwrap();
        for gamma in [0.0, 0.25, 0.5] {
            let (u, sc) = rescale_to_unit_volume(&e, gamma).unwrap();
            u.validate().unwrap();
            sc.invert(&u).unwrap().validate().unwrap();
        }
    }
}
