//! Weighted particle ensembles, merge events and moment evaluation.
//!
//! An [`Ensemble`] is a finite representation of a measure on the
//! isoperimetric region `{a ≥ c0 v^{2/3}}`: particle `i` carries the point
//! `(a_i, v_i)` and a statistical weight `w_i`, so that
//! `M_{k,l} = Σ_i w_i a_i^k v_i^l`.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::sphere_area;
use crate::numeric::ExactSum;

/// Volumes outside `[MIN_VOLUME, MAX_VOLUME]` abort a run.
pub const MIN_VOLUME: f64 = 1e-300;
pub const MAX_VOLUME: f64 = 1e300;

/// Whether `(a, v)` satisfies the isoperimetric inequality.
#[inline]
pub fn in_region(a: f64, v: f64) -> bool {
    a >= sphere_area(v)
}

/// Relative amount by which `a` falls short of the sphere area (zero inside the region).
#[inline]
pub fn region_violation(a: f64, v: f64) -> f64 {
    let b = sphere_area(v);
    ((b - a) / b).max(0.0)
}

/// One computational particle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    /// Surface area.
    pub a: f64,
    /// Volume.
    pub v: f64,
    /// Statistical weight (number density carried by this particle).
    pub w: f64,
}

impl Particle {
    pub fn new(a: f64, v: f64, w: f64) -> Result<Self> {
        let p = Self { a, v, w };
        p.validate()?;
        Ok(p)
    }

    /// Spherical particle of volume `v`.
    pub fn sphere(v: f64, w: f64) -> Result<Self> {
        Self::new(sphere_area(v), v, w)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v.is_finite() && self.v >= MIN_VOLUME && self.v <= MAX_VOLUME) {
            return Err(Error::Range(format!("volume {} outside [1e-300, 1e300]", self.v)));
        }
        if !(self.a.is_finite() && self.a > 0.0) {
            return Err(Error::Domain(format!("area must be finite and positive, got {}", self.a)));
        }
        if !(self.w.is_finite() && self.w > 0.0) {
            return Err(Error::Domain(format!("weight must be finite and positive, got {}", self.w)));
        }
        if !in_region(self.a, self.v) {
            return Err(Error::OutsideRegion {
                a: self.a,
                v: self.v,
                violation: region_violation(self.a, self.v),
            });
        }
        Ok(())
    }

    pub fn shape_ratio(&self) -> f64 {
        crate::kernels::shape_ratio(self.a, self.v)
    }
}

/// Coalesces two equal-weight particles: `(a1, v1) + (a2, v2) -> (a1 + a2, v1 + v2)`.
///
/// The result stays in the isoperimetric region because `v^{2/3}` is subadditive.
pub fn merge(p: &Particle, q: &Particle) -> Result<Particle> {
    if p.w != q.w {
        return Err(Error::Domain(format!(
            "merge requires equal weights, got {} and {}; use merge_weighted",
            p.w, q.w
        )));
    }
    Ok(Particle { a: p.a + q.a, v: p.v + q.v, w: p.w })
}

/// Weighted coalescence: the merged particle carries `min(w_p, w_q)` and the
/// heavier parent keeps the remaining weight (dropped when it is zero).
///
/// Volume and area moments of the pair are conserved exactly in real arithmetic.
pub fn merge_weighted(p: &Particle, q: &Particle) -> (Particle, Option<Particle>) {
    let (heavy, light) = if p.w >= q.w { (p, q) } else { (q, p) };
    let merged = Particle { a: p.a + q.a, v: p.v + q.v, w: light.w };
    let rest = heavy.w - light.w;
    let remainder = (rest > heavy.w * 1e-12).then_some(Particle { w: rest, ..*heavy });
    (merged, remainder)
}

/// Coordinate frame an ensemble lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Physical time `t` and physical sizes.
    Physical,
    /// Self-similar time `τ = ξ log(1 + t)` and rescaled sizes.
    SelfSimilar,
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Frame::Physical => f.write_str("physical"),
            Frame::SelfSimilar => f.write_str("self_similar"),
        }
    }
}

/// Weighted particle population.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub particles: Vec<Particle>,
    pub frame: Frame,
    /// `t` in the physical frame, `τ` in the self-similar frame.
    pub clock: f64,
    /// System-size normalizer `Λ`; pair rates are `K / Λ` for equal weights.
    pub lambda_sys: f64,
    rng: ChaCha8Rng,
}

impl Ensemble {
    /// Validates every particle and sets `Λ = n / M_{0,0}`.
    pub fn new(particles: Vec<Particle>, frame: Frame, seed: u64) -> Result<Self> {
        for p in &particles {
            p.validate()?;
        }
        let mut e = Self {
            particles,
            frame,
            clock: 0.0,
            lambda_sys: 1.0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        if !e.particles.is_empty() {
            e.lambda_sys = e.len() as f64 / e.moment(0.0, 0.0)?;
        }
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.particles {
            p.validate()?;
        }
        if !self.is_empty() && self.moment(0.0, 1.0)? <= 0.0 {
            return Err(Error::Domain("total volume must be positive".into()));
        }
        Ok(())
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Resets the generator to `(seed, stream)`; distinct streams are independent.
    pub fn reseed(&mut self, seed: u64, stream: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng.set_stream(stream);
    }

    /// `Σ w a^k v^l`, correctly rounded.
    pub fn moment(&self, k: f64, l: f64) -> Result<f64> {
        moment_of(&self.particles, k, l)
    }

    pub fn equal_weights(&self) -> bool {
        self.particles.windows(2).all(|w| w[0].w == w[1].w)
    }

    /// `max w / min w` (1 for an empty ensemble).
    pub fn weight_ratio(&self) -> f64 {
        let (lo, hi) = self
            .particles
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| (lo.min(p.w), hi.max(p.w)));
        if self.is_empty() {
            1.0
        } else {
            hi / lo
        }
    }

    /// Writes `a,v,w` rows using shortest round-trip formatting.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["a", "v", "w"])?;
        for p in &self.particles {
            w.write_record([p.a.to_string(), p.v.to_string(), p.w.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path, frame: Frame, clock: f64, seed: u64) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let headers = r.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let (ia, iv, iw) = (col("a")?, col("v")?, col("w")?);
        let mut particles = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let get = |i: usize| -> Result<f64> {
                rec.get(i).unwrap_or("").trim().parse::<f64>().map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    msg: e.to_string(),
                })
            };
            particles.push(Particle { a: get(ia)?, v: get(iv)?, w: get(iw)? });
        }
        let mut e = Self::new(particles, frame, seed)?;
        e.clock = clock;
        Ok(e)
    }
}

#[inline]
fn power(x: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == 1.0 {
        x
    } else if e == 2.0 {
        x * x
    } else {
        x.powf(e)
    }
}

/// `Σ w a^k v^l` over a particle slice; overflow is an error.
pub fn moment_of(particles: &[Particle], k: f64, l: f64) -> Result<f64> {
    let mut acc = ExactSum::new();
    for p in particles {
        let x = power(p.a, k) * power(p.v, l);
        acc.add_product(p.w, x);
    }
    let m = acc.value();
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::Range(format!("moment M_({k},{l}) overflowed")))
    }
}

/// `Σ w a^k v^l`.
pub fn moment(e: &Ensemble, k: f64, l: f64) -> Result<f64> {
    e.moment(k, l)
}

/// `(⟨a⟩/⟨v⟩, ⟨a⟩/⟨v⟩^{2/3})` with `⟨H⟩ = M(H)/M_{0,0}`.
pub fn mean_ratio_diagnostics(e: &Ensemble) -> Result<(f64, f64)> {
    ratios_of(&e.particles)
}

pub(crate) fn ratios_of(particles: &[Particle]) -> Result<(f64, f64)> {
    if particles.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let m00 = moment_of(particles, 0.0, 0.0)?;
    let m10 = moment_of(particles, 1.0, 0.0)?;
    let m01 = moment_of(particles, 0.0, 1.0)?;
    let mean_a = m10 / m00;
    let mean_v = m01 / m00;
    Ok((m10 / m01, mean_a / mean_v.powf(2.0 / 3.0)))
}

/// Moments before and after a resampling step.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleAudit {
    pub n_before: usize,
    pub n_after: usize,
    pub m00_before: f64,
    pub m00_after: f64,
    pub m01_before: f64,
    pub m01_after: f64,
}

/// Systematic resampling to `target_n` equal-weight particles.
///
/// Total weight is preserved; every other moment is preserved in expectation.
pub fn resample(e: &Ensemble, target_n: usize) -> Result<(Ensemble, ResampleAudit)> {
    let mut out = e.clone();
    let audit = resample_in_place(&mut out, target_n)?;
    Ok((out, audit))
}

pub(crate) fn resample_in_place(e: &mut Ensemble, target_n: usize) -> Result<ResampleAudit> {
    if target_n == 0 {
        return Err(Error::Domain("resample target must be positive".into()));
    }
    if e.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let m00_before = e.moment(0.0, 0.0)?;
    let m01_before = e.moment(0.0, 1.0)?;
    let n_before = e.len();
    let new_w = m00_before / target_n as f64;
    let step = m00_before / target_n as f64;
    let u: f64 = e.rng.random::<f64>() * step;

    let mut out = Vec::with_capacity(target_n);
    let mut cum = 0.0;
    let mut idx = 0;
    for k in 0..target_n {
        let point = u + k as f64 * step;
        while idx + 1 < e.particles.len() && cum + e.particles[idx].w <= point {
            cum += e.particles[idx].w;
            idx += 1;
        }
        let p = e.particles[idx];
        out.push(Particle { w: new_w, ..p });
    }
    e.particles = out;
    Ok(ResampleAudit {
        n_before,
        n_after: target_n,
        m00_before,
        m00_after: e.moment(0.0, 0.0)?,
        m01_before,
        m01_after: e.moment(0.0, 1.0)?,
    })
}

/// Exponent pair `(k, l)` of a moment `M_{k,l}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentKey {
    pub k: f64,
    pub l: f64,
}

impl MomentKey {
    pub const fn new(k: f64, l: f64) -> Self {
        Self { k, l }
    }

    pub fn column_name(&self) -> String {
        format!("M_{}_{}", self.k, self.l)
    }

    pub fn parse(name: &str) -> Option<Self> {
        let rest = name.strip_prefix("M_")?;
        let (k, l) = rest.split_once('_')?;
        Some(Self { k: k.parse().ok()?, l: l.parse().ok()? })
    }
}

impl fmt::Display for MomentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M_{{{},{}}}", self.k, self.l)
    }
}

/// One recorded time slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub clock: f64,
    pub moments: Vec<f64>,
    /// Number of computational particles.
    pub n: f64,
    pub ratio_av: f64,
    pub ratio_av23: f64,
    pub aux: Vec<f64>,
}

/// Time series of moments plus derived diagnostics and auxiliary columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentSeries {
    pub keys: Vec<MomentKey>,
    pub aux_names: Vec<String>,
    pub rows: Vec<MomentRow>,
}

impl MomentSeries {
    pub fn new(keys: Vec<MomentKey>, aux_names: Vec<String>) -> Self {
        Self { keys, aux_names, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Appends a row; clocks must be strictly increasing.
    pub fn push(&mut self, row: MomentRow) -> Result<()> {
        if row.moments.len() != self.keys.len() || row.aux.len() != self.aux_names.len() {
            return Err(Error::Domain("row width does not match series columns".into()));
        }
        if let Some(last) = self.rows.last() {
            if row.clock <= last.clock {
                return Err(Error::Domain(format!(
                    "series clock must increase strictly ({} after {})",
                    row.clock, last.clock
                )));
            }
        }
        self.rows.push(row);
        Ok(())
    }

    /// Evaluates the configured moments of `particles` and appends them.
    pub fn record(&mut self, clock: f64, particles: &[Particle], aux: Vec<f64>) -> Result<()> {
        let moments = self
            .keys
            .iter()
            .map(|k| moment_of(particles, k.k, k.l))
            .collect::<Result<Vec<_>>>()?;
        let (ratio_av, ratio_av23) = if particles.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            ratios_of(particles)?
        };
        self.push(MomentRow { clock, moments, n: particles.len() as f64, ratio_av, ratio_av23, aux })
    }

    pub fn clocks(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.clock).collect()
    }

    pub fn key_index(&self, k: f64, l: f64) -> Option<usize> {
        self.keys.iter().position(|key| key.k == k && key.l == l)
    }

    pub fn moment(&self, k: f64, l: f64) -> Result<Vec<f64>> {
        let i = self
            .key_index(k, l)
            .ok_or_else(|| Error::MissingColumn(MomentKey::new(k, l).column_name()))?;
        Ok(self.rows.iter().map(|r| r.moments[i]).collect())
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["clock".to_string()];
        names.extend(self.keys.iter().map(MomentKey::column_name));
        names.extend(["n".to_string(), "ratio_av".to_string(), "ratio_av23".to_string()]);
        names.extend(self.aux_names.iter().cloned());
        names
    }

    /// Any column by its CSV name.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let pick = |f: &dyn Fn(&MomentRow) -> f64| self.rows.iter().map(f).collect();
        match name {
            "clock" => Ok(pick(&|r| r.clock)),
            "n" => Ok(pick(&|r| r.n)),
            "ratio_av" => Ok(pick(&|r| r.ratio_av)),
            "ratio_av23" => Ok(pick(&|r| r.ratio_av23)),
            _ => {
                if let Some(i) = self.aux_names.iter().position(|a| a == name) {
                    return Ok(pick(&|r| r.aux[i]));
                }
                if let Some(key) = MomentKey::parse(name) {
                    return self.moment(key.k, key.l);
                }
                Err(Error::MissingColumn(name.to_string()))
            }
        }
    }

    fn row_values(r: &MomentRow) -> Vec<f64> {
        let mut vals = vec![r.clock];
        vals.extend(&r.moments);
        vals.extend([r.n, r.ratio_av, r.ratio_av23]);
        vals.extend(&r.aux);
        vals
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(self.column_names())?;
        for r in &self.rows {
            w.write_record(Self::row_values(r).iter().map(f64::to_string))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let parse_err = |msg: String| Error::Parse { path: path.to_path_buf(), msg };
        let mut r = csv::Reader::from_path(path)?;
        let headers: Vec<String> = r.headers()?.iter().map(|h| h.trim().to_string()).collect();
        if headers.first().map(String::as_str) != Some("clock") {
            return Err(Error::MissingColumn("clock".into()));
        }
        let mut keys = Vec::new();
        let mut i = 1;
        while i < headers.len() {
            match MomentKey::parse(&headers[i]) {
                Some(k) => keys.push(k),
                None => break,
            }
            i += 1;
        }
        for (offset, name) in ["n", "ratio_av", "ratio_av23"].iter().enumerate() {
            if headers.get(i + offset).map(String::as_str) != Some(*name) {
                return Err(Error::MissingColumn(name.to_string()));
            }
        }
        let aux_names = headers[i + 3..].to_vec();
        let mut series = Self::new(keys, aux_names);
        let nk = series.keys.len();
        for rec in r.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| parse_err(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != headers.len() {
                return Err(parse_err("row width differs from header".into()));
            }
            series.push(MomentRow {
                clock: vals[0],
                moments: vals[1..1 + nk].to_vec(),
                n: vals[1 + nk],
                ratio_av: vals[2 + nk],
                ratio_av23: vals[3 + nk],
                aux: vals[4 + nk..].to_vec(),
            })?;
        }
        Ok(series)
    }

    /// Element-wise mean and standard error over replicas sharing one clock grid.
    pub fn aggregate(replicas: &[MomentSeries]) -> Result<(MomentSeries, MomentSeries)> {
        let first = replicas.first().ok_or(Error::EmptyEnsemble)?;
        for s in replicas {
            if s.keys != first.keys || s.aux_names != first.aux_names || s.clocks() != first.clocks() {
                return Err(Error::Domain("replica series do not share columns and clocks".into()));
            }
        }
        let mut mean = Self::new(first.keys.clone(), first.aux_names.clone());
        let mut sem = mean.clone();
        for (ri, row) in first.rows.iter().enumerate() {
            let width = Self::row_values(row).len();
            let mut m = vec![0.0; width];
            let mut s = vec![0.0; width];
            for c in 0..width {
                let xs: Vec<f64> = replicas.iter().map(|r| Self::row_values(&r.rows[ri])[c]).collect();
                let (mu, se) = crate::numeric::mean_sem(&xs);
                m[c] = mu;
                s[c] = se;
            }
            s[0] = row.clock;
            m[0] = row.clock;
            mean.rows.push(Self::row_from_values(&m, first.keys.len()));
            sem.rows.push(Self::row_from_values(&s, first.keys.len()));
        }
        Ok((mean, sem))
    }

    fn row_from_values(vals: &[f64], nk: usize) -> MomentRow {
        MomentRow {
            clock: vals[0],
            moments: vals[1..1 + nk].to_vec(),
            n: vals[1 + nk],
            ratio_av: vals[2 + nk],
            ratio_av23: vals[3 + nk],
            aux: vals[4 + nk..].to_vec(),
        }
    }
}
