//! Systematic resampling of a weighted ensemble and what it preserves.

use fusion_coag::state::{moment, resample, Ensemble, Frame, Particle};

fn main() -> fusion_coag::Result<()> {
    let ps: Vec<Particle> = (1..=2000)
        .map(|i| {
            let v = 1.0 + (i % 17) as f64;
            Particle::new(2.0 * fusion_coag::kernels::sphere_area(v), v, 1e-4 * (1.0 + (i % 9) as f64))
        })
        .collect::<fusion_coag::Result<_>>()?;
    let e = Ensemble::new(ps, Frame::SelfSimilar, 4)?;
    println!("before: n={} weight ratio {:.1}", e.len(), e.weight_ratio());
    let (r, audit) = resample(&e, 1500)?;
    println!("after:  n={} weight ratio {:.1}", r.len(), r.weight_ratio());
    for (k, l) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0)] {
        println!("M_{k}_{l}: {:.6} -> {:.6}", moment(&e, k, l)?, moment(&r, k, l)?);
    }
    println!("{audit:?}");
    Ok(())
}
